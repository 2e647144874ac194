//! Multi-hop self-attention over biLSTM hidden states and the hop-diversity
//! penalty.
//!
//! With hidden states `H` (n x 2u), `A = softmax_rows(W_s2 tanh(W_s1 H^T))`
//! gives one attention distribution over the tokens per hop (r x n) and
//! `M = A H` stacks the attended sentence views (r x 2u). The penalty
//! `||A A^T - I||_F^2` pushes hops toward attending different tokens.

use super::ops::softmax;
use super::tensor::{axpy, dot, matmul, Tensor};

/// Annotation matrix `A` (rows are probability vectors over tokens) and the
/// attended sentence embedding `M`.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub a: Tensor,
    pub m: Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    /// tanh(W_s1 H^T), d_a x n.
    tanh_u: Tensor,
}

/// Forward pass. `h` is n x 2u, `w_s1` is d_a x 2u, `w_s2` is r x d_a.
pub fn self_attention(h: &Tensor, w_s1: &Tensor, w_s2: &Tensor) -> (AttentionOutput, AttentionCache) {
    let (n, two_u) = h.dims2();
    let (d_a, two_u2) = w_s1.dims2();
    assert_eq!(two_u, two_u2, "attention input width mismatch");
    let (hops, d_a2) = w_s2.dims2();
    assert_eq!(d_a, d_a2, "attention hidden width mismatch");

    let mut tanh_u = Tensor::zeros(&[d_a, n]);
    for a_i in 0..d_a {
        for t in 0..n {
            tanh_u.set2(a_i, t, dot(w_s1.row(a_i), h.row(t)).tanh());
        }
    }
    let mut a = Tensor::zeros(&[hops, n]);
    for hop in 0..hops {
        let scores: Vec<f64> = (0..n)
            .map(|t| (0..d_a).map(|k| w_s2.at2(hop, k) * tanh_u.at2(k, t)).sum())
            .collect();
        a.row_mut(hop).copy_from_slice(&softmax(&scores));
    }
    let m = matmul(&a, h);
    (AttentionOutput { a, m }, AttentionCache { tanh_u })
}

/// Backward pass. `d_m` is the gradient w.r.t. `M`; `d_a_extra` is an
/// optional gradient w.r.t. `A` itself (the penalty contributes one).
/// Gradients accumulate into `dh`, `d_w_s1`, `d_w_s2`.
#[allow(clippy::too_many_arguments)]
pub fn self_attention_backward(
    h: &Tensor,
    w_s1: &Tensor,
    w_s2: &Tensor,
    out: &AttentionOutput,
    cache: &AttentionCache,
    d_m: &Tensor,
    d_a_extra: Option<&Tensor>,
    dh: &mut Tensor,
    d_w_s1: &mut Tensor,
    d_w_s2: &mut Tensor,
) {
    let (n, _) = h.dims2();
    let (d_a, _) = w_s1.dims2();
    let (hops, _) = w_s2.dims2();

    // dA = dM H^T (+ extra); dH += A^T dM
    let mut d_annot = Tensor::zeros(&[hops, n]);
    for hop in 0..hops {
        for t in 0..n {
            let mut v = dot(d_m.row(hop), h.row(t));
            if let Some(extra) = d_a_extra {
                v += extra.at2(hop, t);
            }
            d_annot.set2(hop, t, v);
            axpy(dh.row_mut(t), out.a.at2(hop, t), d_m.row(hop));
        }
    }

    // softmax rows: dS = A * (dA - sum(dA * A))
    let mut d_scores = Tensor::zeros(&[hops, n]);
    for hop in 0..hops {
        let inner = dot(d_annot.row(hop), out.a.row(hop));
        for t in 0..n {
            d_scores.set2(hop, t, out.a.at2(hop, t) * (d_annot.at2(hop, t) - inner));
        }
    }

    // dW_s2 += dS T^T; dT = W_s2^T dS; dU = dT * (1 - T^2)
    let mut d_u = Tensor::zeros(&[d_a, n]);
    for hop in 0..hops {
        for k in 0..d_a {
            let mut acc = 0.0;
            for t in 0..n {
                acc += d_scores.at2(hop, t) * cache.tanh_u.at2(k, t);
                let tanh_v = cache.tanh_u.at2(k, t);
                d_u.data_mut()[k * n + t] +=
                    w_s2.at2(hop, k) * d_scores.at2(hop, t) * (1.0 - tanh_v * tanh_v);
            }
            d_w_s2.data_mut()[hop * d_a + k] += acc;
        }
    }

    // dW_s1 += dU H; dH += dU^T W_s1
    for k in 0..d_a {
        for t in 0..n {
            let g = d_u.at2(k, t);
            if g == 0.0 {
                continue;
            }
            axpy(d_w_s1.row_mut(k), g, h.row(t));
            axpy(dh.row_mut(t), g, w_s1.row(k));
        }
    }
}

/// `||A A^T - I||_F^2`, the hop-diversity penalty.
pub fn attention_penalty(a: &Tensor) -> f64 {
    let gram = gram_minus_identity(a);
    gram.data().iter().map(|v| v * v).sum()
}

/// Gradient of the penalty w.r.t. `A`: `4 (A A^T - I) A`.
pub fn attention_penalty_grad(a: &Tensor) -> Tensor {
    let gram = gram_minus_identity(a);
    let mut grad = matmul(&gram, a);
    grad.data_mut().iter_mut().for_each(|v| *v *= 4.0);
    grad
}

fn gram_minus_identity(a: &Tensor) -> Tensor {
    let (hops, n) = a.dims2();
    let mut gram = Tensor::zeros(&[hops, hops]);
    for i in 0..hops {
        for j in 0..hops {
            let mut acc = 0.0;
            for t in 0..n {
                acc += a.at2(i, t) * a.at2(j, t);
            }
            gram.set2(i, j, acc - if i == j { 1.0 } else { 0.0 });
        }
    }
    gram
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scores_give_uniform_rows() {
        let h = Tensor::from_vec(&[3, 2], vec![0.5, -1.0, 2.0, 0.1, -0.4, 0.9]);
        let w_s1 = Tensor::from_vec(&[2, 2], vec![0.3, -0.2, 0.1, 0.5]);
        let w_s2 = Tensor::zeros(&[2, 2]);
        let (out, _) = self_attention(&h, &w_s1, &w_s2);
        for hop in 0..2 {
            for t in 0..3 {
                assert!((out.a.at2(hop, t) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_token_attends_fully() {
        let h = Tensor::from_vec(&[1, 2], vec![0.7, -0.3]);
        let w_s1 = Tensor::from_vec(&[2, 2], vec![0.3, -0.2, 0.1, 0.5]);
        let w_s2 = Tensor::from_vec(&[3, 2], vec![0.4, 0.1, -0.3, 0.2, 0.0, 0.9]);
        let (out, _) = self_attention(&h, &w_s1, &w_s2);
        for hop in 0..3 {
            assert_eq!(out.a.at2(hop, 0), 1.0);
            assert_eq!(out.m.row(hop), h.row(0));
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let h = Tensor::from_vec(&[4, 2], vec![0.5, -1.0, 2.0, 0.1, -0.4, 0.9, 1.1, -2.2]);
        let w_s1 = Tensor::from_vec(&[3, 2], vec![0.3, -0.2, 0.1, 0.5, -0.7, 0.2]);
        let w_s2 = Tensor::from_vec(&[2, 3], vec![0.4, 0.1, -0.3, 0.2, 0.0, 0.9]);
        let (out, _) = self_attention(&h, &w_s1, &w_s2);
        for hop in 0..2 {
            let sum: f64 = out.a.row(hop).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(out.a.row(hop).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn hand_computed_two_token_case() {
        // n=2, u=1 (2u=2), d_a=1, r=1
        let h = Tensor::from_vec(&[2, 2], vec![0.5, -0.25, -0.1, 0.75]);
        let w_s1 = Tensor::from_vec(&[1, 2], vec![0.8, 0.4]);
        let w_s2 = Tensor::from_vec(&[1, 1], vec![1.5]);
        let (out, _) = self_attention(&h, &w_s1, &w_s2);
        // scalar chain, written out independently of the tensor ops
        let u0: f64 = 0.8 * 0.5 + 0.4 * (-0.25);
        let u1: f64 = 0.8 * (-0.1) + 0.4 * 0.75;
        let s0: f64 = 1.5 * u0.tanh();
        let s1: f64 = 1.5 * u1.tanh();
        let z = s0.exp() + s1.exp();
        let a0 = s0.exp() / z;
        let a1 = s1.exp() / z;
        assert!((out.a.at2(0, 0) - a0).abs() < 1e-12);
        assert!((out.a.at2(0, 1) - a1).abs() < 1e-12);
        assert!((out.m.at2(0, 0) - (a0 * 0.5 + a1 * (-0.1))).abs() < 1e-12);
        assert!((out.m.at2(0, 1) - (a0 * (-0.25) + a1 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn penalty_orthonormal_rows_is_zero() {
        let a = Tensor::from_vec(&[1, 3], vec![0.0, 1.0, 0.0]);
        assert_eq!(attention_penalty(&a), 0.0);
    }

    #[test]
    fn penalty_identical_one_hot_rows() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        // gram = [[1,1],[1,1]], minus I -> off-diagonal ones
        assert_eq!(attention_penalty(&a), 2.0);
    }
}
