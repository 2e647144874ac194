//! Single-direction and bidirectional LSTM with hand-derived BPTT.
//!
//! Gate layout in the stacked weight matrices is `[input, forget, cell,
//! output]`, each block `u` rows. The recurrence is the standard one:
//! `c_t = f * c_prev + i * g`, `h_t = o * tanh(c_t)`.

use super::tensor::{axpy, dot, Tensor};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
struct StepCache {
    gate_i: Vec<f64>,
    gate_f: Vec<f64>,
    gate_g: Vec<f64>,
    gate_o: Vec<f64>,
    cell: Vec<f64>,
    tanh_cell: Vec<f64>,
}

/// Per-sequence cache of one direction.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
    hidden: Vec<Vec<f64>>,
    reverse: bool,
}

/// One LSTM direction over `x` (n x d). Weights: `wx` is `4u x d`, `wh` is
/// `4u x u`, `b` has length `4u`. Returns the hidden states as an `n x u`
/// tensor indexed by *position* (not processing order).
pub fn lstm_forward(
    x: &Tensor,
    wx: &Tensor,
    wh: &Tensor,
    b: &[f64],
    reverse: bool,
) -> (Tensor, LstmCache) {
    let (n, d) = x.dims2();
    let (four_u, d2) = wx.dims2();
    assert_eq!(d, d2, "input dim mismatch");
    assert_eq!(four_u % 4, 0);
    let u = four_u / 4;
    assert_eq!(wh.dims2(), (four_u, u));
    assert_eq!(b.len(), four_u);

    let mut out = Tensor::zeros(&[n, u]);
    let mut steps = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n);
    let mut h_prev = vec![0.0; u];
    let mut c_prev = vec![0.0; u];
    for step in 0..n {
        let pos = if reverse { n - 1 - step } else { step };
        let x_t = x.row(pos);
        let mut z = vec![0.0; four_u];
        for (r, zv) in z.iter_mut().enumerate() {
            *zv = dot(wx.row(r), x_t) + dot(wh.row(r), &h_prev) + b[r];
        }
        let gate_i: Vec<f64> = z[..u].iter().map(|&v| sigmoid(v)).collect();
        let gate_f: Vec<f64> = z[u..2 * u].iter().map(|&v| sigmoid(v)).collect();
        let gate_g: Vec<f64> = z[2 * u..3 * u].iter().map(|&v| v.tanh()).collect();
        let gate_o: Vec<f64> = z[3 * u..].iter().map(|&v| sigmoid(v)).collect();
        let mut cell = vec![0.0; u];
        let mut tanh_cell = vec![0.0; u];
        let mut h = vec![0.0; u];
        for k in 0..u {
            cell[k] = gate_f[k] * c_prev[k] + gate_i[k] * gate_g[k];
            tanh_cell[k] = cell[k].tanh();
            h[k] = gate_o[k] * tanh_cell[k];
        }
        out.row_mut(pos).copy_from_slice(&h);
        steps.push(StepCache {
            gate_i,
            gate_f,
            gate_g,
            gate_o,
            cell,
            tanh_cell,
        });
        hidden.push(h.clone());
        h_prev = h;
        c_prev = steps.last().unwrap().cell.clone();
    }
    (
        out,
        LstmCache {
            steps,
            hidden,
            reverse,
        },
    )
}

/// BPTT for one direction. `d_h` is the gradient w.r.t. the positional
/// hidden states returned by [`lstm_forward`]. Gradients accumulate into
/// `dx`, `d_wx`, `d_wh`, `d_b`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward(
    x: &Tensor,
    wx: &Tensor,
    wh: &Tensor,
    cache: &LstmCache,
    d_h: &Tensor,
    dx: &mut Tensor,
    d_wx: &mut Tensor,
    d_wh: &mut Tensor,
    d_b: &mut [f64],
) {
    let (n, _) = x.dims2();
    let (four_u, _) = wx.dims2();
    let u = four_u / 4;
    let zeros = vec![0.0; u];

    let mut dh_carry = vec![0.0; u];
    let mut dc_carry = vec![0.0; u];
    for step in (0..n).rev() {
        let pos = if cache.reverse { n - 1 - step } else { step };
        let sc = &cache.steps[step];
        let h_prev = if step == 0 { &zeros } else { &cache.hidden[step - 1] };
        let c_prev = if step == 0 { &zeros } else { &cache.steps[step - 1].cell };

        let mut dz = vec![0.0; four_u];
        for k in 0..u {
            let dh = d_h.at2(pos, k) + dh_carry[k];
            let d_o = dh * sc.tanh_cell[k];
            let mut dc = dc_carry[k] + dh * sc.gate_o[k] * (1.0 - sc.tanh_cell[k] * sc.tanh_cell[k]);
            let d_i = dc * sc.gate_g[k];
            let d_g = dc * sc.gate_i[k];
            let d_f = dc * c_prev[k];
            dc *= sc.gate_f[k];
            dc_carry[k] = dc;
            dz[k] = d_i * sc.gate_i[k] * (1.0 - sc.gate_i[k]);
            dz[u + k] = d_f * sc.gate_f[k] * (1.0 - sc.gate_f[k]);
            dz[2 * u + k] = d_g * (1.0 - sc.gate_g[k] * sc.gate_g[k]);
            dz[3 * u + k] = d_o * sc.gate_o[k] * (1.0 - sc.gate_o[k]);
        }
        let x_t = x.row(pos);
        dh_carry = vec![0.0; u];
        for (r, &dz_r) in dz.iter().enumerate() {
            if dz_r == 0.0 {
                continue;
            }
            d_b[r] += dz_r;
            axpy(d_wx.row_mut(r), dz_r, x_t);
            axpy(d_wh.row_mut(r), dz_r, h_prev);
            axpy(dx.row_mut(pos), dz_r, wx.row(r));
            axpy(&mut dh_carry, dz_r, wh.row(r));
        }
    }
}

/// Weight handles for one direction.
pub struct LstmWeights<'a> {
    pub wx: &'a Tensor,
    pub wh: &'a Tensor,
    pub b: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub fwd: LstmCache,
    pub bwd: LstmCache,
}

/// Bidirectional LSTM: concatenates per-position hidden states of the two
/// directions into an `n x 2u` tensor.
pub fn bilstm_forward(x: &Tensor, fwd: &LstmWeights, bwd: &LstmWeights) -> (Tensor, BiLstmCache) {
    let (n, _) = x.dims2();
    let (h_f, cache_f) = lstm_forward(x, fwd.wx, fwd.wh, fwd.b, false);
    let (h_b, cache_b) = lstm_forward(x, bwd.wx, bwd.wh, bwd.b, true);
    let u = h_f.dims2().1;
    let mut out = Tensor::zeros(&[n, 2 * u]);
    for t in 0..n {
        out.row_mut(t)[..u].copy_from_slice(h_f.row(t));
        out.row_mut(t)[u..].copy_from_slice(h_b.row(t));
    }
    (
        out,
        BiLstmCache {
            fwd: cache_f,
            bwd: cache_b,
        },
    )
}

/// Gradient sinks for one direction.
pub struct LstmGrads<'a> {
    pub wx: &'a mut Tensor,
    pub wh: &'a mut Tensor,
    pub b: &'a mut [f64],
}

#[allow(clippy::too_many_arguments)]
pub fn bilstm_backward(
    x: &Tensor,
    fwd: &LstmWeights,
    bwd: &LstmWeights,
    cache: &BiLstmCache,
    d_out: &Tensor,
    dx: &mut Tensor,
    fwd_grads: &mut LstmGrads,
    bwd_grads: &mut LstmGrads,
) {
    let (n, two_u) = d_out.dims2();
    let u = two_u / 2;
    let mut d_h_f = Tensor::zeros(&[n, u]);
    let mut d_h_b = Tensor::zeros(&[n, u]);
    for t in 0..n {
        d_h_f.row_mut(t).copy_from_slice(&d_out.row(t)[..u]);
        d_h_b.row_mut(t).copy_from_slice(&d_out.row(t)[u..]);
    }
    lstm_backward(
        x, fwd.wx, fwd.wh, &cache.fwd, &d_h_f, dx, fwd_grads.wx, fwd_grads.wh, fwd_grads.b,
    );
    lstm_backward(
        x, bwd.wx, bwd.wh, &cache.bwd, &d_h_b, dx, bwd_grads.wx, bwd_grads.wh, bwd_grads.b,
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_shape() {
        let x = Tensor::from_vec(&[1, 3], vec![0.1, -0.2, 0.3]);
        let wx = Tensor::from_vec(&[8, 3], (0..24).map(|i| 0.01 * i as f64).collect());
        let wh = Tensor::from_vec(&[8, 2], (0..16).map(|i| -0.01 * i as f64).collect());
        let b = vec![0.0; 8];
        let fwd = LstmWeights { wx: &wx, wh: &wh, b: &b };
        let (h, _) = bilstm_forward(&x, &fwd, &fwd);
        assert_eq!(h.dims2(), (1, 4));
        h.assert_finite("bilstm single step");
    }

    #[test]
    fn zero_input_zero_params_gives_zero_hidden() {
        let x = Tensor::zeros(&[4, 3]);
        let wx = Tensor::zeros(&[8, 3]);
        let wh = Tensor::zeros(&[8, 2]);
        let b = vec![0.0; 8];
        let w = LstmWeights { wx: &wx, wh: &wh, b: &b };
        let (h, _) = bilstm_forward(&x, &w, &w);
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reverse_direction_equals_forward_on_flipped_input() {
        let x = Tensor::from_vec(&[3, 2], vec![0.4, -0.1, 0.0, 0.7, -0.3, 0.2]);
        let x_flipped = Tensor::from_vec(&[3, 2], vec![-0.3, 0.2, 0.0, 0.7, 0.4, -0.1]);
        let mut wx_data = vec![0.0; 8 * 2];
        for (i, v) in wx_data.iter_mut().enumerate() {
            *v = ((i % 5) as f64 - 2.0) * 0.1;
        }
        let wx = Tensor::from_vec(&[8, 2], wx_data);
        let mut wh_data = vec![0.0; 8 * 2];
        for (i, v) in wh_data.iter_mut().enumerate() {
            *v = ((i % 3) as f64 - 1.0) * 0.2;
        }
        let wh = Tensor::from_vec(&[8, 2], wh_data);
        let b = vec![0.1; 8];
        let (h_rev, _) = lstm_forward(&x, &wx, &wh, &b, true);
        let (h_fwd_flipped, _) = lstm_forward(&x_flipped, &wx, &wh, &b, false);
        for t in 0..3 {
            for k in 0..2 {
                assert!((h_rev.at2(t, k) - h_fwd_flipped.at2(2 - t, k)).abs() < 1e-15);
            }
        }
    }
}
