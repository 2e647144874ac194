//! Central finite-difference gradient checking.
//!
//! The checker perturbs one flat coordinate at a time, so it only needs
//! getter/setter closures over whatever state holds the parameters plus a
//! loss closure. Coordinates where the one-sided derivatives disagree
//! (max-pool or ReLU kinks) are skipped and counted instead of failing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Cap on the number of coordinates checked; larger tensors are
    /// subsampled deterministically.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            max_coords: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates sitting on a non-differentiable point (one-sided
    /// derivatives disagree), excluded from the error maximum.
    pub skipped: usize,
    pub worst_coord: usize,
}

/// Compares `analytic` gradients against central differences of `loss`.
///
/// `get`/`set` read and write flat parameter coordinates on `state`;
/// `loss` re-evaluates the scalar objective after each perturbation.
pub fn grad_check<S>(
    state: &mut S,
    n_coords: usize,
    get: impl Fn(&S, usize) -> f64,
    set: impl Fn(&mut S, usize, f64),
    mut loss: impl FnMut(&mut S) -> f64,
    analytic: &[f64],
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    assert_eq!(analytic.len(), n_coords);
    let coords: Vec<usize> = if n_coords <= cfg.max_coords {
        (0..n_coords).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx =
            rand::seq::index::sample(&mut rng, n_coords, cfg.max_coords).into_vec();
        idx.sort_unstable();
        idx
    };

    let f0 = loss(state);
    // central differences of a full forward pass carry roundoff of order
    // eps * |f| / h; differences below this floor are noise, not signal
    let diff_floor = 1e-7 * (1.0 + f0.abs());
    let h = cfg.step;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
        worst_coord: 0,
    };
    for &j in &coords {
        let w = get(state, j);
        set(state, j, w + h);
        let f_plus = loss(state);
        set(state, j, w - h);
        let f_minus = loss(state);
        set(state, j, w);

        let left = (f0 - f_minus) / h;
        let right = (f_plus - f0) / h;
        let denom = left.abs().max(right.abs()).max(1.0);
        if (left - right).abs() / denom > 0.01 {
            report.skipped += 1;
            continue;
        }
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let a = analytic[j];
        let err = if (a - numeric).abs() < diff_floor {
            0.0
        } else {
            (a - numeric).abs() / a.abs().max(numeric.abs())
        };
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = j;
        }
        report.checked += 1;
    }
    report
}
