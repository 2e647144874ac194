//! Convolutional classifier: word dropout on the embedded input, parallel
//! convolutions of several widths with ReLU and max-over-time pooling, then
//! inverted dropout and a linear layer into the softmax.

use rand::Rng;

use crate::corpus::PAD_INDEX;
use crate::dropout::{apply, apply_backward, sample_mask_from_probs, MaskSample};
use crate::nn::ops::{
    conv_relu_maxpool, conv_relu_maxpool_backward, dense_backward, dense_forward, softmax_ce,
    Activation, ConvPoolCache, DenseCache,
};
use crate::nn::params::{init_fan_in, init_uniform};
use crate::nn::{embed_backward, embed_forward, ParamId, ParamSet, Tensor};

use super::{EncodedExample, LossBreakdown, ModelConfig, ModelError, Prediction};

pub struct CnnModel {
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub classes: usize,
    pub(crate) params: ParamSet,
    emb: ParamId,
    convs: Vec<(ParamId, ParamId)>,
    out_w: ParamId,
    out_b: ParamId,
}

struct CnnPass {
    padded_ids: Vec<usize>,
    /// Embedded input after word dropout.
    x: Tensor,
    conv_caches: Vec<ConvPoolCache>,
    head_in: Vec<f64>,
    dense_cache: DenseCache,
    logits: Vec<f64>,
}

impl CnnModel {
    pub fn build(
        config: &ModelConfig,
        vocab_size: usize,
        classes: usize,
        rng: &mut impl Rng,
    ) -> CnnModel {
        let d = config.embed_dim;
        let m = config.filters_per_width;
        let mut params = ParamSet::new();
        let mut emb_init = init_uniform(&[vocab_size, d], 0.25, rng);
        emb_init.row_mut(PAD_INDEX).fill(0.0);
        let emb = params.add("embed", emb_init);
        let mut convs = Vec::new();
        for &w in &config.filter_widths {
            let filters = params.add(
                &format!("conv{w}.filters"),
                init_fan_in(&[m, w * d], w * d, rng),
            );
            let bias = params.add(&format!("conv{w}.bias"), Tensor::zeros(&[m]));
            convs.push((filters, bias));
        }
        let feat_dim = config.filter_widths.len() * m;
        let out_w = params.add("out.w", init_fan_in(&[classes, feat_dim], feat_dim, rng));
        let out_b = params.add("out.b", Tensor::zeros(&[classes]));
        CnnModel {
            config: config.clone(),
            vocab_size,
            classes,
            params,
            emb,
            convs,
            out_w,
            out_b,
        }
    }

    pub(crate) fn embedding_id(&self) -> ParamId {
        self.emb
    }

    fn feat_dim(&self) -> usize {
        self.config.filter_widths.len() * self.config.filters_per_width
    }

    /// Right-pads with the padding index so the widest filter fits.
    fn pad_ids(&self, ids: &[usize]) -> Vec<usize> {
        let min_len = *self.config.filter_widths.last().unwrap();
        let mut padded = ids.to_vec();
        if padded.len() < min_len {
            padded.resize(min_len, PAD_INDEX);
        }
        padded
    }

    /// `keep` covers the real token positions only; padding positions are
    /// always kept (their embedding rows are zero regardless). `None` means
    /// the word-dropout layer is absent.
    fn forward(&self, ids: &[usize], keep: Option<&[bool]>, head_scale: Option<&[f64]>) -> CnnPass {
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
        let mut conv_caches = Vec::with_capacity(self.convs.len());
        let mut feats = Vec::with_capacity(self.feat_dim());
        for (&(filters, bias), &w) in self.convs.iter().zip(&self.config.filter_widths) {
            let (f, cache) = conv_relu_maxpool(
                &x,
                self.params.value(filters),
                self.params.value(bias).data(),
                w,
            );
            feats.extend_from_slice(&f);
            conv_caches.push(cache);
        }
        let head_in: Vec<f64> = match head_scale {
            None => feats,
            Some(s) => feats.iter().zip(s).map(|(f, m)| f * m).collect(),
        };
        let (logits, dense_cache) = dense_forward(
            &head_in,
            self.params.value(self.out_w),
            self.params.value(self.out_b).data(),
            Activation::None,
        );
        CnnPass {
            padded_ids,
            x,
            conv_caches,
            head_in,
            dense_cache,
            logits,
        }
    }

    fn backward(
        &mut self,
        pass: &CnnPass,
        label: usize,
        keep: Option<&[bool]>,
        head_scale: Option<&[f64]>,
        grad_scale: f64,
    ) -> f64 {
        let (loss, mut d_logits) = softmax_ce(&pass.logits, label);
        d_logits.iter_mut().for_each(|g| *g *= grad_scale);

        let mut d_head_in = vec![0.0; self.feat_dim()];
        {
            let [w, b] = self.params.disjoint_mut([self.out_w, self.out_b]);
            dense_backward(
                &pass.head_in,
                &w.value,
                &pass.dense_cache,
                Activation::None,
                &d_logits,
                &mut d_head_in,
                &mut w.grad,
                b.grad.data_mut(),
            );
        }
        let d_feats: Vec<f64> = match head_scale {
            None => d_head_in,
            Some(s) => d_head_in.iter().zip(s).map(|(g, m)| g * m).collect(),
        };

        let (n, d) = pass.x.dims2();
        let mut dx = Tensor::zeros(&[n, d]);
        let m = self.config.filters_per_width;
        let widths = self.config.filter_widths.clone();
        for (i, (&(filters, bias), &w)) in self.convs.clone().iter().zip(&widths).enumerate() {
            let [fp, bp] = self.params.disjoint_mut([filters, bias]);
            conv_relu_maxpool_backward(
                &pass.x,
                &fp.value,
                w,
                &pass.conv_caches[i],
                &d_feats[i * m..(i + 1) * m],
                &mut dx,
                &mut fp.grad,
                bp.grad.data_mut(),
            );
        }

        if let Some(k) = keep {
            let mut full = k.to_vec();
            full.resize(n, true);
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
        for ex in batch {
            let keep = sample_mask_from_probs(&ex.drop_probs, rng);
            let head_scale = sample_head_scale(self.feat_dim(), p, rng);
            let pass = self.forward(&ex.ids, Some(keep.keep()), head_scale.as_deref());
            ce += scale
                * self.backward(
                    &pass,
                    ex.label,
                    Some(keep.keep()),
                    head_scale.as_deref(),
                    scale,
                );
        }
        if !ce.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        Ok(LossBreakdown {
            total: ce,
            ce,
            penalty: 0.0,
        })
    }

    pub fn loss_and_grads_masked(
        &mut self,
        batch: &[&EncodedExample],
        masks: Option<&[MaskSample]>,
    ) -> Result<LossBreakdown, ModelError> {
        let scale = 1.0 / batch.len() as f64;
        let mut ce = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            let keep = masks.map(|m| m[i].keep());
            let pass = self.forward(&ex.ids, keep, None);
            ce += scale * self.backward(&pass, ex.label, keep, None, scale);
        }
        if !ce.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        Ok(LossBreakdown {
            total: ce,
            ce,
            penalty: 0.0,
        })
    }

    pub fn batch_loss_masked(&self, batch: &[&EncodedExample], masks: Option<&[MaskSample]>) -> f64 {
        let scale = 1.0 / batch.len() as f64;
        batch
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                let keep = masks.map(|m| m[i].keep());
                let pass = self.forward(&ex.ids, keep, None);
                scale * softmax_ce(&pass.logits, ex.label).0
            })
            .sum()
    }
}

/// Inverted-dropout scale mask for the classifier head; `None` when the
/// rate is zero.
pub(crate) fn sample_head_scale(len: usize, p: f64, rng: &mut impl Rng) -> Option<Vec<f64>> {
    if p == 0.0 {
        return None;
    }
    let scale = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> ModelConfig {
        let mut cfg = ModelConfig::cnn();
        cfg.embed_dim = 2;
        cfg.filter_widths = vec![2];
        cfg.filters_per_width = 1;
        cfg.mlp_dropout = 0.0;
        cfg
    }

    #[test]
    fn hand_computed_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = CnnModel::build(&tiny_config(), 5, 2, &mut rng);
        // embeddings: id i -> [0.1*i, -0.2*i]
        {
            let emb = model.params.value_mut(model.emb);
            for i in 0..5 {
                emb.row_mut(i)[0] = 0.1 * i as f64;
                emb.row_mut(i)[1] = -0.2 * i as f64;
            }
        }
        let (filters, bias) = model.convs[0];
        *model.params.value_mut(filters) = Tensor::from_vec(&[1, 4], vec![1.0, 0.5, -0.25, 2.0]);
        *model.params.value_mut(bias) = Tensor::from_vec(&[1], vec![0.1]);
        *model.params.value_mut(model.out_w) = Tensor::from_vec(&[2, 1], vec![0.7, -0.3]);
        *model.params.value_mut(model.out_b) = Tensor::from_vec(&[2], vec![0.05, -0.05]);

        let pred = model.predict(&[1, 2, 3, 4]);

        // independent scalar evaluation of the same pipeline
        let emb_row = |i: f64| (0.1 * i, -0.2 * i);
        let window = |a: f64, b: f64| {
            let (x0, x1) = emb_row(a);
            let (y0, y1) = emb_row(b);
            1.0 * x0 + 0.5 * x1 - 0.25 * y0 + 2.0 * y1 + 0.1
        };
        let pre = [window(1.0, 2.0), window(2.0, 3.0), window(3.0, 4.0)];
        let pooled = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let logit0 = 0.7 * pooled + 0.05;
        let logit1 = -0.3 * pooled - 0.05;
        let z = logit0.exp() + logit1.exp();
        let expect = [logit0.exp() / z, logit1.exp() / z];
        assert!((pred.probs[0] - expect[0]).abs() < 1e-9, "{:?}", pred.probs);
        assert!((pred.probs[1] - expect[1]).abs() < 1e-9);
    }

    #[test]
    fn short_and_empty_inputs_are_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CnnModel::build(&ModelConfig::cnn(), 10, 2, &mut rng);
        for ids in [vec![], vec![3], vec![1, 2]] {
            let pred = model.predict(&ids);
            assert!((pred.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eval_forward_matches_gi_free_forward_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = CnnModel::build(&ModelConfig::cnn(), 30, 3, &mut rng);
        for len in 1..8 {
            let ids: Vec<usize> = (0..len).map(|i| (i * 7 + 1) % 30).collect();
            let a = model.predict(&ids);
            let b = model.predict_without_gi(&ids);
            assert_eq!(a.probs, b.probs, "len {len}");
        }
    }
}
