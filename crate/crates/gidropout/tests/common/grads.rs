//! Finite-difference checks shared by the gradients suite and the
//! acceptance suite: primitives over a flat parameter vector, and both
//! models end to end via their parameter sets.

use gidropout::nn::attention::{
    attention_penalty, attention_penalty_grad, self_attention, self_attention_backward,
};
use gidropout::nn::lstm::{bilstm_backward, bilstm_forward, LstmGrads, LstmWeights};
use gidropout::nn::ops::{
    conv_relu_maxpool, conv_relu_maxpool_backward, dense_backward, dense_forward, embed_backward,
    embed_forward, softmax_ce, Activation,
};
use gidropout::nn::tensor::dot;
use gidropout::nn::{grad_check, GradCheckConfig, GradCheckReport, Tensor};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rand_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Flat parameter vector split into tensors by a fixed layout.
pub struct Layout {
    pub shapes: Vec<Vec<usize>>,
}

impl Layout {
    pub fn unpack(&self, theta: &[f64]) -> Vec<Tensor> {
        let mut out = Vec::new();
        let mut off = 0;
        for shape in &self.shapes {
            let len: usize = shape.iter().product();
            out.push(Tensor::from_vec(shape, theta[off..off + len].to_vec()));
            off += len;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.shapes.iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

pub fn run_check(
    theta: &mut Vec<f64>,
    loss: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
) -> GradCheckReport {
    let n = theta.len();
    grad_check(
        theta,
        n,
        |t, i| t[i],
        |t, i, v| t[i] = v,
        |t| loss(t),
        analytic,
        &GradCheckConfig::default(),
    )
}

pub fn embed_check() -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (vocab, dim) = (7, 3);
    let ids = vec![2usize, 5, 2, 1]; // repeated id exercises accumulation
    let weights = rand_vec(ids.len() * dim, 1.0, &mut rng);
    let layout = Layout { shapes: vec![vec![vocab, dim]] };
    let mut theta = rand_vec(layout.len(), 0.5, &mut rng);

    let mut grad = Tensor::zeros(&[vocab, dim]);
    embed_backward(
        &ids,
        &Tensor::from_vec(&[ids.len(), dim], weights.clone()),
        &mut grad,
    );
    run_check(
        &mut theta,
        |t| {
            let emb = layout.unpack(t).pop().unwrap();
            dot(embed_forward(&ids, &emb).data(), &weights)
        },
        grad.data(),
    )
}

pub fn conv_check() -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, d, m, width) = (6, 4, 3, 3);
    let weights = rand_vec(m, 1.0, &mut rng);
    let layout = Layout {
        shapes: vec![vec![n, d], vec![m, width * d], vec![m]],
    };
    let mut theta = rand_vec(layout.len(), 0.8, &mut rng);

    let parts = layout.unpack(&theta);
    let (_, cache) = conv_relu_maxpool(&parts[0], &parts[1], parts[2].data(), width);
    let mut dx = Tensor::zeros(&[n, d]);
    let mut d_f = Tensor::zeros(&[m, width * d]);
    let mut d_b = vec![0.0; m];
    conv_relu_maxpool_backward(
        &parts[0], &parts[1], width, &cache, &weights, &mut dx, &mut d_f, &mut d_b,
    );
    let analytic: Vec<f64> = dx
        .data()
        .iter()
        .chain(d_f.data())
        .chain(&d_b)
        .copied()
        .collect();
    run_check(
        &mut theta,
        |t| {
            let p = layout.unpack(t);
            let (feats, _) = conv_relu_maxpool(&p[0], &p[1], p[2].data(), width);
            dot(&feats, &weights)
        },
        &analytic,
    )
}

pub fn bilstm_check() -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, d, u) = (3, 2, 2);
    let weights = rand_vec(n * 2 * u, 1.0, &mut rng);
    let layout = Layout {
        shapes: vec![
            vec![n, d],
            vec![4 * u, d],
            vec![4 * u, u],
            vec![4 * u],
            vec![4 * u, d],
            vec![4 * u, u],
            vec![4 * u],
        ],
    };
    let mut theta = rand_vec(layout.len(), 0.6, &mut rng);

    let forward = |t: &[f64]| {
        let p = layout.unpack(t);
        let fwd = LstmWeights { wx: &p[1], wh: &p[2], b: p[3].data() };
        let bwd = LstmWeights { wx: &p[4], wh: &p[5], b: p[6].data() };
        bilstm_forward(&p[0], &fwd, &bwd)
    };

    let p = layout.unpack(&theta);
    let (_, cache) = forward(&theta);
    let d_h = Tensor::from_vec(&[n, 2 * u], weights.clone());
    let mut dx = Tensor::zeros(&[n, d]);
    let mut g: Vec<Tensor> = layout.shapes[1..].iter().map(|s| Tensor::zeros(s)).collect();
    {
        let [gf_wx, gf_wh, gf_b, gb_wx, gb_wh, gb_b] = g.as_mut_slice() else {
            unreachable!()
        };
        let fwd = LstmWeights { wx: &p[1], wh: &p[2], b: p[3].data() };
        let bwd = LstmWeights { wx: &p[4], wh: &p[5], b: p[6].data() };
        let mut fg = LstmGrads { wx: gf_wx, wh: gf_wh, b: gf_b.data_mut() };
        let mut bg = LstmGrads { wx: gb_wx, wh: gb_wh, b: gb_b.data_mut() };
        bilstm_backward(&p[0], &fwd, &bwd, &cache, &d_h, &mut dx, &mut fg, &mut bg);
    }
    let analytic: Vec<f64> = dx
        .data()
        .iter()
        .chain(g.iter().flat_map(|t| t.data()))
        .copied()
        .collect();
    run_check(&mut theta, |t| dot(forward(t).0.data(), &weights), &analytic)
}

pub fn attention_check() -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, two_u, d_a, hops) = (4, 4, 3, 2);
    let weights = rand_vec(hops * two_u, 1.0, &mut rng);
    let coef = 0.7;
    let layout = Layout {
        shapes: vec![vec![n, two_u], vec![d_a, two_u], vec![hops, d_a]],
    };
    let mut theta = rand_vec(layout.len(), 0.7, &mut rng);

    let p = layout.unpack(&theta);
    let (out, cache) = self_attention(&p[0], &p[1], &p[2]);
    let d_m = Tensor::from_vec(&[hops, two_u], weights.clone());
    let mut d_a_extra = attention_penalty_grad(&out.a);
    d_a_extra.data_mut().iter_mut().for_each(|v| *v *= coef);
    let mut dh = Tensor::zeros(&[n, two_u]);
    let mut d_w1 = Tensor::zeros(&[d_a, two_u]);
    let mut d_w2 = Tensor::zeros(&[hops, d_a]);
    self_attention_backward(
        &p[0], &p[1], &p[2], &out, &cache, &d_m, Some(&d_a_extra), &mut dh, &mut d_w1, &mut d_w2,
    );
    let analytic: Vec<f64> = dh
        .data()
        .iter()
        .chain(d_w1.data())
        .chain(d_w2.data())
        .copied()
        .collect();
    run_check(
        &mut theta,
        |t| {
            let p = layout.unpack(t);
            let (out, _) = self_attention(&p[0], &p[1], &p[2]);
            dot(out.m.data(), &weights) + coef * attention_penalty(&out.a)
        },
        &analytic,
    )
}

pub fn penalty_check() -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (hops, n) = (3, 5);
    // perturb pre-softmax scores so rows stay probability vectors
    let mut theta = rand_vec(hops * n, 1.0, &mut rng);
    let to_a = |t: &[f64]| {
        let mut a = Tensor::zeros(&[hops, n]);
        for h in 0..hops {
            let row = gidropout::nn::softmax(&t[h * n..(h + 1) * n]);
            a.row_mut(h).copy_from_slice(&row);
        }
        a
    };
    let a = to_a(&theta);
    let d_a = attention_penalty_grad(&a);
    let mut analytic = vec![0.0; hops * n];
    for h in 0..hops {
        let inner = dot(d_a.row(h), a.row(h));
        for t in 0..n {
            analytic[h * n + t] = a.at2(h, t) * (d_a.at2(h, t) - inner);
        }
    }
    run_check(&mut theta, |t| attention_penalty(&to_a(t)), &analytic)
}

pub fn dense_softmax_check() -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (in_dim, out_dim) = (5, 4);
    let label = 2;
    let layout = Layout {
        shapes: vec![vec![in_dim], vec![out_dim, in_dim], vec![out_dim]],
    };
    let mut theta = rand_vec(layout.len(), 0.9, &mut rng);

    let p = layout.unpack(&theta);
    let (logits, cache) = dense_forward(p[0].data(), &p[1], p[2].data(), Activation::None);
    let (_, d_logits) = softmax_ce(&logits, label);
    let mut dx = vec![0.0; in_dim];
    let mut dw = Tensor::zeros(&[out_dim, in_dim]);
    let mut db = vec![0.0; out_dim];
    dense_backward(
        p[0].data(),
        &p[1],
        &cache,
        Activation::None,
        &d_logits,
        &mut dx,
        &mut dw,
        &mut db,
    );
    let analytic: Vec<f64> = dx.iter().chain(dw.data()).chain(&db).copied().collect();
    run_check(
        &mut theta,
        |t| {
            let p = layout.unpack(t);
            let (logits, _) = dense_forward(p[0].data(), &p[1], p[2].data(), Activation::None);
            softmax_ce(&logits, label).0
        },
        &analytic,
    )
}
