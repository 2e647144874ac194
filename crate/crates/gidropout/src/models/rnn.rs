//! Self-attentive recurrent classifier: word dropout on the embedded input,
//! bidirectional LSTM, multi-hop self-attention with the hop-diversity
//! penalty, then a two-layer ReLU head with inverted dropout between its
//! layers.

use rand::Rng;

use crate::corpus::PAD_INDEX;
use crate::dropout::{apply, apply_backward, sample_mask_from_probs, MaskSample};
use crate::nn::attention::{
    attention_penalty, attention_penalty_grad, self_attention, self_attention_backward,
    AttentionCache, AttentionOutput,
};
use crate::nn::lstm::{bilstm_backward, bilstm_forward, BiLstmCache, LstmGrads, LstmWeights};
use crate::nn::ops::{dense_backward, dense_forward, softmax_ce, Activation, DenseCache};
use crate::nn::params::{init_fan_in, init_uniform};
use crate::nn::{embed_backward, embed_forward, ParamId, ParamSet, Tensor};

use super::cnn::sample_head_scale;
use super::{EncodedExample, LossBreakdown, ModelConfig, ModelError, Prediction};

pub struct RnnModel {
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub classes: usize,
    pub(crate) params: ParamSet,
    emb: ParamId,
    lstm_f: [ParamId; 3],
    lstm_b: [ParamId; 3],
    w_s1: ParamId,
    w_s2: ParamId,
    mlp_w: ParamId,
    mlp_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

struct RnnPass {
    padded_ids: Vec<usize>,
    x: Tensor,
    h: Tensor,
    lstm_cache: BiLstmCache,
    attn: AttentionOutput,
    attn_cache: AttentionCache,
    m_flat: Vec<f64>,
    mlp_cache: DenseCache,
    head_in: Vec<f64>,
    out_cache: DenseCache,
    logits: Vec<f64>,
    penalty: f64,
}

fn lstm_param_group(
    prefix: &str,
    u: usize,
    d: usize,
    params: &mut ParamSet,
    rng: &mut impl Rng,
) -> [ParamId; 3] {
    let wx = params.add(&format!("{prefix}.wx"), init_fan_in(&[4 * u, d], d, rng));
    let wh = params.add(&format!("{prefix}.wh"), init_fan_in(&[4 * u, u], u, rng));
    let mut bias = Tensor::zeros(&[4 * u]);
    // forget-gate bias starts at 1 so early cell state survives
    bias.data_mut()[u..2 * u].iter_mut().for_each(|b| *b = 1.0);
    let b = params.add(&format!("{prefix}.b"), bias);
    [wx, wh, b]
}

impl RnnModel {
    pub fn build(
        config: &ModelConfig,
        vocab_size: usize,
        classes: usize,
        rng: &mut impl Rng,
    ) -> RnnModel {
        let d = config.embed_dim;
        let u = config.hidden_units;
        let mut params = ParamSet::new();
        let mut emb_init = init_uniform(&[vocab_size, d], 0.25, rng);
        emb_init.row_mut(PAD_INDEX).fill(0.0);
        let emb = params.add("embed", emb_init);
        let lstm_f = lstm_param_group("lstm_f", u, d, &mut params, rng);
        let lstm_b = lstm_param_group("lstm_b", u, d, &mut params, rng);
        let w_s1 = params.add(
            "attn.w_s1",
            init_fan_in(&[config.attn_dim, 2 * u], 2 * u, rng),
        );
        let w_s2 = params.add(
            "attn.w_s2",
            init_fan_in(&[config.attn_hops, config.attn_dim], config.attn_dim, rng),
        );
        let flat = config.attn_hops * 2 * u;
        let mlp_w = params.add("mlp.w", init_fan_in(&[config.mlp_hidden, flat], flat, rng));
        let mlp_b = params.add("mlp.b", Tensor::zeros(&[config.mlp_hidden]));
        let out_w = params.add(
            "out.w",
            init_fan_in(&[classes, config.mlp_hidden], config.mlp_hidden, rng),
        );
        let out_b = params.add("out.b", Tensor::zeros(&[classes]));
        RnnModel {
            config: config.clone(),
            vocab_size,
            classes,
            params,
            emb,
            lstm_f,
            lstm_b,
            w_s1,
            w_s2,
            mlp_w,
            mlp_b,
            out_w,
            out_b,
        }
    }

    pub(crate) fn embedding_id(&self) -> ParamId {
        self.emb
    }

    fn pad_ids(&self, ids: &[usize]) -> Vec<usize> {
        if ids.is_empty() {
            vec![PAD_INDEX]
        } else {
            ids.to_vec()
        }
    }

    fn weights(&self, ids: [ParamId; 3]) -> LstmWeights<'_> {
        LstmWeights {
            wx: self.params.value(ids[0]),
            wh: self.params.value(ids[1]),
            b: self.params.value(ids[2]).data(),
        }
    }

    fn forward(&self, ids: &[usize], keep: Option<&[bool]>, head_scale: Option<&[f64]>) -> RnnPass {
        let padded_ids = self.pad_ids(ids);
        let embedded = embed_forward(&padded_ids, self.params.value(self.emb));
        let x = match keep {
            None => embedded,
            Some(k) => {
                assert_eq!(k.len(), ids.len());
                let mut full = k.to_vec();
                full.resize(padded_ids.len(), true);
                apply(&MaskSample::from_keep(full), &embedded).expect("mask length matches")
            }
        };
        let (h, lstm_cache) = bilstm_forward(&x, &self.weights(self.lstm_f), &self.weights(self.lstm_b));
        let (attn, attn_cache) =
            self_attention(&h, self.params.value(self.w_s1), self.params.value(self.w_s2));
        let m_flat = attn.m.data().to_vec();
        let (hid, mlp_cache) = dense_forward(
            &m_flat,
            self.params.value(self.mlp_w),
            self.params.value(self.mlp_b).data(),
            Activation::Relu,
        );
        let head_in: Vec<f64> = match head_scale {
            None => hid,
            Some(s) => hid.iter().zip(s).map(|(v, m)| v * m).collect(),
        };
        let (logits, out_cache) = dense_forward(
            &head_in,
            self.params.value(self.out_w),
            self.params.value(self.out_b).data(),
            Activation::None,
        );
        let penalty = attention_penalty(&attn.a);
        RnnPass {
            padded_ids,
            x,
            h,
            lstm_cache,
            attn,
            attn_cache,
            m_flat,
            mlp_cache,
            head_in,
            out_cache,
            logits,
            penalty,
        }
    }

    /// Returns the cross-entropy of the example; the penalty contribution
    /// to the gradient is folded in via `d_a_extra`.
    fn backward(
        &mut self,
        pass: &RnnPass,
        label: usize,
        keep: Option<&[bool]>,
        head_scale: Option<&[f64]>,
        grad_scale: f64,
    ) -> f64 {
        let (loss, mut d_logits) = softmax_ce(&pass.logits, label);
        d_logits.iter_mut().for_each(|g| *g *= grad_scale);

        let mut d_head_in = vec![0.0; self.config.mlp_hidden];
        {
            let [w, b] = self.params.disjoint_mut([self.out_w, self.out_b]);
            dense_backward(
                &pass.head_in,
                &w.value,
                &pass.out_cache,
                Activation::None,
                &d_logits,
                &mut d_head_in,
                &mut w.grad,
                b.grad.data_mut(),
            );
        }
        let d_hid: Vec<f64> = match head_scale {
            None => d_head_in,
            Some(s) => d_head_in.iter().zip(s).map(|(g, m)| g * m).collect(),
        };
        let mut d_m_flat = vec![0.0; pass.m_flat.len()];
        {
            let [w, b] = self.params.disjoint_mut([self.mlp_w, self.mlp_b]);
            dense_backward(
                &pass.m_flat,
                &w.value,
                &pass.mlp_cache,
                Activation::Relu,
                &d_hid,
                &mut d_m_flat,
                &mut w.grad,
                b.grad.data_mut(),
            );
        }
        let (hops, two_u) = pass.attn.m.dims2();
        let d_m = Tensor::from_vec(&[hops, two_u], d_m_flat);

        // hop-diversity penalty feeds A directly
        let mut d_a_extra = attention_penalty_grad(&pass.attn.a);
        let pen_scale = grad_scale * self.config.penalty_coef;
        d_a_extra.data_mut().iter_mut().for_each(|g| *g *= pen_scale);

        let (n, _) = pass.h.dims2();
        let mut d_h = Tensor::zeros(&[n, 2 * self.config.hidden_units]);
        {
            let [s1, s2] = self.params.disjoint_mut([self.w_s1, self.w_s2]);
            self_attention_backward(
                &pass.h,
                &s1.value,
                &s2.value,
                &pass.attn,
                &pass.attn_cache,
                &d_m,
                Some(&d_a_extra),
                &mut d_h,
                &mut s1.grad,
                &mut s2.grad,
            );
        }

        let (rows, d) = pass.x.dims2();
        let mut dx = Tensor::zeros(&[rows, d]);
        {
            let [fwx, fwh, fb, bwx, bwh, bb] = self.params.disjoint_mut([
                self.lstm_f[0],
                self.lstm_f[1],
                self.lstm_f[2],
                self.lstm_b[0],
                self.lstm_b[1],
                self.lstm_b[2],
            ]);
            let fwd = LstmWeights {
                wx: &fwx.value,
                wh: &fwh.value,
                b: fb.value.data(),
            };
            let bwd = LstmWeights {
                wx: &bwx.value,
                wh: &bwh.value,
                b: bb.value.data(),
            };
            let mut fwd_grads = LstmGrads {
                wx: &mut fwx.grad,
                wh: &mut fwh.grad,
                b: fb.grad.data_mut(),
            };
            let mut bwd_grads = LstmGrads {
                wx: &mut bwx.grad,
                wh: &mut bwh.grad,
                b: bb.grad.data_mut(),
            };
            bilstm_backward(
                &pass.x,
                &fwd,
                &bwd,
                &pass.lstm_cache,
                &d_h,
                &mut dx,
                &mut fwd_grads,
                &mut bwd_grads,
            );
        }

        if let Some(k) = keep {
            let mut full = k.to_vec();
            full.resize(rows, true);
            apply_backward(&MaskSample::from_keep(full), &mut dx);
        }
        embed_backward(&pass.padded_ids, &dx, self.params.grad_mut(self.emb));
        loss
    }

    pub fn predict(&self, ids: &[usize]) -> Prediction {
        let keep = vec![true; ids.len()];
        let pass = self.forward(ids, Some(&keep), None);
        Prediction::from_logits(&pass.logits)
    }

    pub fn predict_without_gi(&self, ids: &[usize]) -> Prediction {
        let pass = self.forward(ids, None, None);
        Prediction::from_logits(&pass.logits)
    }

    pub fn loss_and_grads(
        &mut self,
        batch: &[&EncodedExample],
        rng: &mut impl Rng,
    ) -> Result<LossBreakdown, ModelError> {
        let scale = 1.0 / batch.len() as f64;
        let p = self.config.mlp_dropout;
        let mut ce = 0.0;
        let mut penalty = 0.0;
        for ex in batch {
            let keep = sample_mask_from_probs(&ex.drop_probs, rng);
            let head_scale = sample_head_scale(self.config.mlp_hidden, p, rng);
            let pass = self.forward(&ex.ids, Some(keep.keep()), head_scale.as_deref());
            penalty += scale * self.config.penalty_coef * pass.penalty;
            ce += scale
                * self.backward(
                    &pass,
                    ex.label,
                    Some(keep.keep()),
                    head_scale.as_deref(),
                    scale,
                );
        }
        let total = ce + penalty;
        if !total.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        Ok(LossBreakdown { total, ce, penalty })
    }

    pub fn loss_and_grads_masked(
        &mut self,
        batch: &[&EncodedExample],
        masks: Option<&[MaskSample]>,
    ) -> Result<LossBreakdown, ModelError> {
        let scale = 1.0 / batch.len() as f64;
        let mut ce = 0.0;
        let mut penalty = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            let keep = masks.map(|m| m[i].keep());
            let pass = self.forward(&ex.ids, keep, None);
            penalty += scale * self.config.penalty_coef * pass.penalty;
            ce += scale * self.backward(&pass, ex.label, keep, None, scale);
        }
        let total = ce + penalty;
        if !total.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        Ok(LossBreakdown { total, ce, penalty })
    }

    pub fn batch_loss_masked(&self, batch: &[&EncodedExample], masks: Option<&[MaskSample]>) -> f64 {
        let scale = 1.0 / batch.len() as f64;
        batch
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                let keep = masks.map(|m| m[i].keep());
                let pass = self.forward(&ex.ids, keep, None);
                scale * (softmax_ce(&pass.logits, ex.label).0
                    + self.config.penalty_coef * pass.penalty)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> ModelConfig {
        let mut cfg = ModelConfig::self_attn_rnn();
        cfg.embed_dim = 4;
        cfg.hidden_units = 3;
        cfg.attn_dim = 3;
        cfg.attn_hops = 2;
        cfg.mlp_hidden = 5;
        cfg.mlp_dropout = 0.0;
        cfg
    }

    #[test]
    fn predict_handles_all_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = RnnModel::build(&small_config(), 12, 2, &mut rng);
        for ids in [vec![], vec![5], vec![1, 2, 3, 4, 5, 6, 7]] {
            let pred = model.predict(&ids);
            assert!((pred.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eval_forward_matches_gi_free_forward_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = RnnModel::build(&small_config(), 25, 4, &mut rng);
        for len in 1..9 {
            let ids: Vec<usize> = (0..len).map(|i| (i * 5 + 2) % 25).collect();
            let a = model.predict(&ids);
            let b = model.predict_without_gi(&ids);
            assert_eq!(a.probs, b.probs, "len {len}");
        }
    }

    #[test]
    fn penalty_reported_in_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = RnnModel::build(&small_config(), 12, 2, &mut rng);
        let ex = EncodedExample {
            ids: vec![1, 2, 3, 4],
            drop_probs: vec![0.0; 4],
            label: 1,
        };
        let out = model.loss_and_grads_masked(&[&ex], None).unwrap();
        assert!(out.penalty > 0.0, "random attention hops should overlap");
        assert!((out.total - out.ce - out.penalty).abs() < 1e-12);
    }
}
