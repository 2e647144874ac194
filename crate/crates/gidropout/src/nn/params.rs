//! Named parameters with gradient and optimizer state, plus the Adam update.

use rand::Rng;

use super::tensor::Tensor;

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    m: Tensor,
    v: Tensor,
}

impl Parameter {
    fn new(name: String, value: Tensor) -> Parameter {
        let shape = value.shape().to_vec();
        Parameter {
            name,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            value,
        }
    }
}

/// Handle into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// The full parameter collection of a model. Gradients accumulate into the
/// set between [`ParamSet::zero_grads`] and [`ParamSet::adam_step`] calls.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet { params: Vec::new() }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Parameter::new(name.to_string(), value));
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    /// Mutable access to several distinct parameters at once, for backward
    /// passes that read one parameter's value while accumulating into
    /// another's gradient.
    pub fn disjoint_mut<const N: usize>(&mut self, ids: [ParamId; N]) -> [&mut Parameter; N] {
        self.params
            .get_disjoint_mut(ids.map(|id| id.0))
            .expect("parameter ids must be distinct and in range")
    }

    /// Looks a parameter up by name (checkpoint loading).
    pub fn find_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Standard Adam update with bias correction; `t` is the 1-based step
    /// counter.
    pub fn adam_step(&mut self, cfg: &AdamConfig, t: u64) {
        assert!(t >= 1, "adam step counter is 1-based");
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for p in &mut self.params {
            let g = p.grad.data();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            let w = p.value.data_mut();
            for i in 0..g.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }

    /// Copies of all parameter values, for best-checkpoint snapshots.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            p.value = s.clone();
        }
    }

    // Flat coordinate access across every parameter, used by the
    // finite-difference checker.

    pub fn flat_len(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn locate(&self, mut idx: usize) -> (usize, usize) {
        for (pi, p) in self.params.iter().enumerate() {
            if idx < p.value.len() {
                return (pi, idx);
            }
            idx -= p.value.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_get(&self, idx: usize) -> f64 {
        let (pi, off) = self.locate(idx);
        self.params[pi].value.data()[off]
    }

    pub fn flat_set(&mut self, idx: usize, v: f64) {
        let (pi, off) = self.locate(idx);
        self.params[pi].value.data_mut()[off] = v;
    }

    pub fn flat_grad(&self, idx: usize) -> f64 {
        let (pi, off) = self.locate(idx);
        self.params[pi].grad.data()[off]
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for p in &self.params {
            out.extend_from_slice(p.grad.data());
        }
        out
    }
}

/// Uniform init in `(-limit, limit)`.
pub fn init_uniform(shape: &[usize], limit: f64, rng: &mut impl Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data)
}

/// Uniform init with limit `1/sqrt(fan_in)`, the default for dense,
/// convolutional, and recurrent weights.
pub fn init_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    init_uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng)
}
