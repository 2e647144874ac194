//! The experiment protocols: the three-way comparison (no dropout /
//! uniform word dropout / importance-guided word dropout), the beta sweep
//! with its Zipf diagnostic, and the top-k apparent-word ablation.
//!
//! Every protocol is a pure function of (spec, seeds): runs are
//! deterministic and independent, so they fan out through
//! [`super::exec::run_jobs`] and aggregate in fixed order.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::corpus::{carve_dev, cv_split, load_dataset, Dataset, Vocabulary};
use crate::dropout::DropoutPolicy;
use crate::models::{encode_dataset, Model};
use crate::scoring::{remove_top_k, zipf_diagnostic, ImportanceTable};

use super::exec::run_jobs;
use super::spec::{DataSpec, ExperimentSpec, PolicyMode, PolicySpec};
use super::train::{evaluate_accuracy, train_split, SplitData, TrainOutcome, TrainReport};
use super::HarnessError;

/// The dataset files behind a spec, loaded once and shared across jobs.
pub enum DataBundle {
    Fixed { train: Dataset, test: Dataset },
    Cv { full: Dataset, folds: usize },
}

impl DataBundle {
    pub fn load(data: &DataSpec) -> Result<DataBundle, HarnessError> {
        let train = load_dataset(&data.train, data.lowercase)?;
        match (data.folds, &data.test) {
            (Some(folds), _) => Ok(DataBundle::Cv { full: train, folds }),
            (None, Some(test_path)) => {
                let test = load_dataset(test_path, data.lowercase)?;
                Ok(DataBundle::Fixed { train, test })
            }
            (None, None) => Err(HarnessError::Config(
                "data needs either a test file or a fold count".into(),
            )),
        }
    }

    pub fn n_folds(&self) -> usize {
        match self {
            DataBundle::Fixed { .. } => 1,
            DataBundle::Cv { folds, .. } => *folds,
        }
    }

    /// The train/dev/test split for one (seed, fold) cell. Fold assignment
    /// in CV mode depends only on `cv_seed`; the per-seed dev carve in
    /// fixed mode uses the run seed.
    pub fn split(
        &self,
        data: &DataSpec,
        seed: u64,
        fold: usize,
    ) -> Result<SplitData, HarnessError> {
        match self {
            DataBundle::Fixed { train, test } => {
                let (train, dev) = carve_dev(train, data.dev_fraction, seed);
                Ok(SplitData {
                    train,
                    dev,
                    test: test.clone(),
                })
            }
            DataBundle::Cv { full, folds } => {
                let mut all = cv_split(full, *folds, data.cv_seed)?;
                let f = all.swap_remove(fold);
                Ok(SplitData {
                    train: f.train,
                    dev: f.dev,
                    test: f.test,
                })
            }
        }
    }

    /// Training-side data used for score diagnostics (never the test side).
    pub fn reference_train(&self, data: &DataSpec) -> Result<Dataset, HarnessError> {
        match self {
            DataBundle::Fixed { train, .. } => Ok(train.clone()),
            DataBundle::Cv { full, folds } => {
                Ok(cv_split(full, *folds, data.cv_seed)?.swap_remove(0).train)
            }
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Accuracy statistics of one protocol arm over seeds x folds.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ArmStats {
    pub label: String,
    /// The tuned parameter (p or beta) when the arm has one.
    pub param: Option<f64>,
    pub mean_dev: f64,
    pub mean_test: f64,
    pub std_test: f64,
    pub runs: usize,
}

fn arm_stats(label: String, param: Option<f64>, reports: &[&TrainReport]) -> ArmStats {
    let devs: Vec<f64> = reports.iter().map(|r| r.best_dev_accuracy).collect();
    let tests: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
    ArmStats {
        label,
        param,
        mean_dev: mean(&devs),
        mean_test: mean(&tests),
        std_test: std_dev(&tests),
        runs: reports.len(),
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareReport {
    pub baseline: ArmStats,
    /// Uniform word dropout at the dev-selected probability.
    pub dropout_same: ArmStats,
    /// Importance-guided dropout at the dev-selected beta.
    pub gi_dropout: ArmStats,
    /// Every grid point evaluated, for the record.
    pub all_arms: Vec<ArmStats>,
}

impl CompareReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("arm\tparam\tmean_dev\tmean_test\tstd_test\truns\n");
        for arm in [&self.baseline, &self.dropout_same, &self.gi_dropout]
            .into_iter()
            .chain(self.all_arms.iter())
        {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                arm.label,
                arm.param.map_or("-".to_string(), |p| p.to_string()),
                arm.mean_dev,
                arm.mean_test,
                arm.std_test,
                arm.runs
            )
            .unwrap();
        }
        out
    }
}

struct ArmDef {
    label: String,
    param: Option<f64>,
    policy: PolicySpec,
}

fn run_arms(
    spec: &ExperimentSpec,
    bundle: &DataBundle,
    arms: &[ArmDef],
) -> Result<Vec<Vec<TrainReport>>, HarnessError> {
    let n_folds = bundle.n_folds();
    let mut jobs = Vec::new();
    for (arm_idx, _) in arms.iter().enumerate() {
        for &seed in &spec.seeds {
            for fold in 0..n_folds {
                jobs.push((arm_idx, seed, fold));
            }
        }
    }
    let results = run_jobs(jobs, |(arm_idx, seed, fold)| {
        let split = bundle.split(&spec.data, seed, fold)?;
        let outcome = train_split(
            &spec.model,
            &arms[arm_idx].policy,
            &spec.train,
            &split,
            seed,
            spec.data.embeddings.as_deref(),
        )?;
        Ok::<(usize, TrainReport), HarnessError>((arm_idx, outcome.report))
    });
    let mut per_arm: Vec<Vec<TrainReport>> = (0..arms.len()).map(|_| Vec::new()).collect();
    for res in results {
        let (arm_idx, report) = res?;
        per_arm[arm_idx].push(report);
    }
    Ok(per_arm)
}

/// The three-way comparison: trains the baseline, every uniform-p grid
/// point, and every beta grid point, over all seeds and folds; p* and
/// beta* are selected by mean dev accuracy.
pub fn compare(spec: &ExperimentSpec) -> Result<CompareReport, HarnessError> {
    spec.validate()?;
    if spec.p_grid.is_empty() || spec.beta_grid.is_empty() {
        return Err(HarnessError::Config(
            "compare needs non-empty p_grid and beta_grid".into(),
        ));
    }
    let bundle = DataBundle::load(&spec.data)?;

    let mut arms = vec![ArmDef {
        label: "baseline".to_string(),
        param: None,
        policy: PolicySpec::off(),
    }];
    for &p in &spec.p_grid {
        arms.push(ArmDef {
            label: format!("dropout_same(p={p})"),
            param: Some(p),
            policy: PolicySpec::uniform(p),
        });
    }
    for &beta in &spec.beta_grid {
        arms.push(ArmDef {
            label: format!("gi_dropout(beta={beta})"),
            param: Some(beta),
            policy: PolicySpec {
                alpha: spec.policy.alpha,
                ..PolicySpec::table(beta)
            },
        });
    }

    let per_arm = run_arms(spec, &bundle, &arms)?;
    let all_stats: Vec<ArmStats> = arms
        .iter()
        .zip(&per_arm)
        .map(|(arm, reports)| {
            arm_stats(
                arm.label.clone(),
                arm.param,
                &reports.iter().collect::<Vec<_>>(),
            )
        })
        .collect();

    let uniform_range = 1..1 + spec.p_grid.len();
    let table_range = 1 + spec.p_grid.len()..arms.len();
    // dev-accuracy ties go to the earlier grid entry, like epoch ties
    let best_of = |range: std::ops::Range<usize>| {
        range
            .clone()
            .reduce(|best, idx| {
                if all_stats[idx].mean_dev > all_stats[best].mean_dev {
                    idx
                } else {
                    best
                }
            })
            .unwrap()
    };
    let p_star = best_of(uniform_range);
    let beta_star = best_of(table_range);

    Ok(CompareReport {
        baseline: all_stats[0].clone(),
        dropout_same: all_stats[p_star].clone(),
        gi_dropout: all_stats[beta_star].clone(),
        all_arms: all_stats,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub mean_dev: f64,
    pub mean_test: f64,
    pub std_test: f64,
    /// Zipf fit of the beta's dropout probabilities on the training data;
    /// absent when fewer than 3 words have positive probability.
    pub zipf_slope: Option<f64>,
    pub zipf_r_squared: Option<f64>,
    pub runs: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("beta\tmean_dev\tmean_test\tstd_test\tzipf_slope\tzipf_r2\truns\n");
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.beta,
                r.mean_dev,
                r.mean_test,
                r.std_test,
                r.zipf_slope.map_or("-".to_string(), |v| v.to_string()),
                r.zipf_r_squared.map_or("-".to_string(), |v| v.to_string()),
                r.runs
            )
            .unwrap();
        }
        out
    }
}

/// Trains one arm per beta grid value and attaches the Zipf diagnostic of
/// each beta's importance table. Rows come back sorted by beta descending.
pub fn sweep_beta(spec: &ExperimentSpec) -> Result<SweepReport, HarnessError> {
    spec.validate()?;
    if spec.beta_grid.is_empty() {
        return Err(HarnessError::Config("sweep needs a non-empty beta_grid".into()));
    }
    let bundle = DataBundle::load(&spec.data)?;
    let reference = bundle.reference_train(&spec.data)?;

    let arms: Vec<ArmDef> = spec
        .beta_grid
        .iter()
        .map(|&beta| ArmDef {
            label: format!("gi_dropout(beta={beta})"),
            param: Some(beta),
            policy: PolicySpec {
                alpha: spec.policy.alpha,
                ..PolicySpec::table(beta)
            },
        })
        .collect();
    let per_arm = run_arms(spec, &bundle, &arms)?;

    let mut rows = Vec::new();
    for (arm, reports) in arms.iter().zip(&per_arm) {
        let beta = arm.param.unwrap();
        let stats = arm_stats(arm.label.clone(), arm.param, &reports.iter().collect::<Vec<_>>());
        let fit = arm
            .policy
            .resolve(&reference)
            .ok()
            .and_then(|policy| match policy {
                DropoutPolicy::Table(table) => zipf_diagnostic(&table).ok(),
                _ => None,
            });
        rows.push(SweepRow {
            beta,
            mean_dev: stats.mean_dev,
            mean_test: stats.mean_test,
            std_test: stats.std_test,
            zipf_slope: fit.map(|f| f.slope),
            zipf_r_squared: fit.map(|f| f.r_squared),
            runs: stats.runs,
        });
    }
    rows.sort_by(|a, b| b.beta.partial_cmp(&a.beta).unwrap());
    Ok(SweepReport { rows })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AblateRow {
    pub k: usize,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub gi_mean: f64,
    pub gi_std: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AblateReport {
    pub rows: Vec<AblateRow>,
}

impl AblateReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("k\tbaseline_mean\tbaseline_std\tgi_mean\tgi_std\n");
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.k, r.baseline_mean, r.baseline_std, r.gi_mean, r.gi_std
            )
            .unwrap();
        }
        out
    }
}

/// Evaluates two trained checkpoints on copies of the test split with the
/// top-k table-scored words removed, for each k. The k = 0 row is the
/// untouched test set.
pub fn ablate_checkpoints(
    baseline: &Model,
    gi: &Model,
    vocab: &Vocabulary,
    table: &ImportanceTable,
    test: &Dataset,
    ks: &[usize],
) -> Vec<(usize, f64, f64)> {
    ks.iter()
        .map(|&k| {
            let mutated = remove_top_k(test, table, k);
            let enc = encode_dataset(&mutated, vocab, &DropoutPolicy::Off);
            (
                k,
                evaluate_accuracy(baseline, &enc),
                evaluate_accuracy(gi, &enc),
            )
        })
        .collect()
}

/// Trains the baseline and the guided-dropout arm (spec.policy must be
/// table mode) per seed and fold, then reports mean accuracy on the test
/// split with the top-k apparent words removed, per k.
pub fn ablate(spec: &ExperimentSpec) -> Result<AblateReport, HarnessError> {
    spec.validate()?;
    if spec.policy.mode != PolicyMode::Table {
        return Err(HarnessError::Config(
            "ablate needs a table-mode policy (the trained GI arm)".into(),
        ));
    }
    if spec.ablation_ks.is_empty() {
        return Err(HarnessError::Config("ablation_ks must be non-empty".into()));
    }
    let bundle = Arc::new(DataBundle::load(&spec.data)?);
    let ks = spec.ablation_ks.clone();

    let mut jobs = Vec::new();
    for &seed in &spec.seeds {
        for fold in 0..bundle.n_folds() {
            jobs.push((seed, fold));
        }
    }
    let results = run_jobs(jobs, |(seed, fold)| {
        let split = bundle.split(&spec.data, seed, fold)?;
        let base = train_split(
            &spec.model,
            &PolicySpec::off(),
            &spec.train,
            &split,
            seed,
            spec.data.embeddings.as_deref(),
        )?;
        let gi: TrainOutcome = train_split(
            &spec.model,
            &spec.policy,
            &spec.train,
            &split,
            seed,
            spec.data.embeddings.as_deref(),
        )?;
        let table = gi
            .table
            .as_ref()
            .expect("table-mode run carries its importance table");
        let rows = ablate_checkpoints(&base.model, &gi.model, &gi.vocab, table, &split.test, &ks);
        Ok::<Vec<(usize, f64, f64)>, HarnessError>(rows)
    });

    let mut per_k: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); ks.len()];
    for res in results {
        for (i, (_, acc_b, acc_g)) in res?.into_iter().enumerate() {
            per_k[i].0.push(acc_b);
            per_k[i].1.push(acc_g);
        }
    }
    let mut rows: Vec<AblateRow> = ks
        .iter()
        .zip(&per_k)
        .map(|(&k, (b, g))| AblateRow {
            k,
            baseline_mean: mean(b),
            baseline_std: std_dev(b),
            gi_mean: mean(g),
            gi_std: std_dev(g),
        })
        .collect();
    rows.sort_by_key(|r| r.k);
    Ok(AblateReport { rows })
}

/// Sanity guard used by tests: the set of words an ablation would remove.
pub fn ablation_words(table: &ImportanceTable, k: usize) -> HashSet<String> {
    table.top_words(k).into_iter().map(str::to_string).collect()
}
