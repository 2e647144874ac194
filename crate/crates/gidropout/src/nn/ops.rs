//! Forward/backward primitives: embedding lookup, 1-d convolution with
//! ReLU and max-over-time pooling, dense layers, softmax cross-entropy,
//! and inverted unit dropout for the classifier head.

use rand::Rng;

use super::tensor::{axpy, dot, Tensor};

/// Gathers embedding rows: output row `i` is `emb[ids[i]]`.
pub fn embed_forward(ids: &[usize], emb: &Tensor) -> Tensor {
    let (vocab, dim) = emb.dims2();
    let mut out = Tensor::zeros(&[ids.len(), dim]);
    for (i, &id) in ids.iter().enumerate() {
        assert!(id < vocab, "token index {id} out of range for vocab {vocab}");
        out.row_mut(i).copy_from_slice(emb.row(id));
    }
    out
}

/// Scatters `d_out` rows back into the embedding gradient, accumulating
/// over repeated ids. Index 0 is the frozen padding/unknown row and is
/// skipped so it stays a zero vector through training.
pub fn embed_backward(ids: &[usize], d_out: &Tensor, emb_grad: &mut Tensor) {
    let (_, dim) = emb_grad.dims2();
    assert_eq!(d_out.dims2(), (ids.len(), dim));
    for (i, &id) in ids.iter().enumerate() {
        if id == 0 {
            continue;
        }
        axpy(emb_grad.row_mut(id), 1.0, d_out.row(i));
    }
}

/// Per-filter pooling provenance: argmax position and whether the ReLU was
/// active there (gradient only flows when it was).
#[derive(Debug, Clone)]
pub struct ConvPoolCache {
    pub argmax: Vec<usize>,
    pub active: Vec<bool>,
}

/// Valid 1-d convolution over time with ReLU and max-over-time pooling.
///
/// `x` is `n x d` (n must be >= width; callers zero-pad shorter inputs),
/// `filters` is `m x (width*d)` with each row a flattened window filter,
/// `bias` is length m. Returns the m pooled features. Ties in the max are
/// broken toward the earliest position.
pub fn conv_relu_maxpool(
    x: &Tensor,
    filters: &Tensor,
    bias: &[f64],
    width: usize,
) -> (Vec<f64>, ConvPoolCache) {
    let (n, d) = x.dims2();
    let (m, wd) = filters.dims2();
    assert_eq!(wd, width * d, "filter width mismatch");
    assert!(n >= width, "sequence length {n} shorter than filter width {width}");
    assert_eq!(bias.len(), m);
    let positions = n - width + 1;
    let mut features = vec![0.0; m];
    let mut argmax = vec![0usize; m];
    let mut active = vec![false; m];
    for f in 0..m {
        let filt = filters.row(f);
        let mut best = f64::NEG_INFINITY;
        let mut best_pos = 0;
        for t in 0..positions {
            let window = &x.data()[t * d..(t + width) * d];
            let pre = dot(filt, window) + bias[f];
            if pre > best {
                best = pre;
                best_pos = t;
            }
        }
        // ReLU after pooling the pre-activations is equivalent to pooling
        // the ReLU outputs here: relu is monotone, so the max position of
        // the positive values is unchanged, and an all-negative column
        // pools to zero with no gradient.
        features[f] = best.max(0.0);
        argmax[f] = best_pos;
        active[f] = best > 0.0;
    }
    (features, ConvPoolCache { argmax, active })
}

/// Backward pass of [`conv_relu_maxpool`]: routes each feature gradient to
/// the cached argmax window.
#[allow(clippy::too_many_arguments)]
pub fn conv_relu_maxpool_backward(
    x: &Tensor,
    filters: &Tensor,
    width: usize,
    cache: &ConvPoolCache,
    d_features: &[f64],
    dx: &mut Tensor,
    d_filters: &mut Tensor,
    d_bias: &mut [f64],
) {
    let (_, d) = x.dims2();
    let (m, _) = filters.dims2();
    assert_eq!(d_features.len(), m);
    for f in 0..m {
        if !cache.active[f] || d_features[f] == 0.0 {
            continue;
        }
        let g = d_features[f];
        let t = cache.argmax[f];
        let window = &x.data()[t * d..(t + width) * d];
        axpy(d_filters.row_mut(f), g, window);
        d_bias[f] += g;
        let dx_window = &mut dx.data_mut()[t * d..(t + width) * d];
        axpy(dx_window, g, filters.row(f));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub pre: Vec<f64>,
}

/// `y = act(W x + b)`.
pub fn dense_forward(
    x: &[f64],
    w: &Tensor,
    b: &[f64],
    act: Activation,
) -> (Vec<f64>, DenseCache) {
    let (out_dim, in_dim) = w.dims2();
    assert_eq!(in_dim, x.len());
    assert_eq!(out_dim, b.len());
    let mut pre = vec![0.0; out_dim];
    for i in 0..out_dim {
        pre[i] = dot(w.row(i), x) + b[i];
    }
    let y = match act {
        Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
        Activation::None => pre.clone(),
    };
    (y, DenseCache { pre })
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    x: &[f64],
    w: &Tensor,
    cache: &DenseCache,
    act: Activation,
    d_y: &[f64],
    dx: &mut [f64],
    dw: &mut Tensor,
    db: &mut [f64],
) {
    let (out_dim, _) = w.dims2();
    for i in 0..out_dim {
        let gate = match act {
            Activation::Relu => {
                if cache.pre[i] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::None => 1.0,
        };
        let g = d_y[i] * gate;
        if g == 0.0 {
            continue;
        }
        db[i] += g;
        axpy(dw.row_mut(i), g, x);
        axpy(dx, g, w.row(i));
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of a softmax over `logits` against `label`, with the
/// gradient w.r.t. the logits. Uses log-sum-exp stabilization.
pub fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label {label} out of range");
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}

/// Inverted unit dropout for the classifier head: kept units are scaled by
/// `1/(1-p)` at train time so evaluation needs no rescaling. Returns the
/// dropped activations and the scale mask to reuse in the backward pass.
pub fn unit_dropout(x: &[f64], p: f64, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..1.0).contains(&p), "dropout rate must be in [0,1)");
    if p == 0.0 {
        return (x.to_vec(), vec![1.0; x.len()]);
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
        .collect();
    let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    (y, mask)
}
