//! Experiment harness: training runs with early stopping, the three-way
//! comparison protocol, beta sweeps, top-k ablation, and the synthetic
//! corpus generator. Independent runs fan out across threads when the
//! `parallel` feature is on; each run is internally single-threaded and
//! byte-for-byte reproducible from its seed.

pub mod exec;
pub mod protocol;
pub mod spec;
pub mod synth;
pub mod train;

pub use protocol::{
    ablate, ablate_checkpoints, compare, sweep_beta, AblateReport, ArmStats, CompareReport,
    DataBundle, SweepReport,
};
pub use spec::{DataSpec, ExperimentSpec, PolicyMode, PolicySpec, TrainParams};
pub use synth::{generate as generate_synth, SynthConfig};
pub use train::{
    evaluate_accuracy, evaluate_accuracy_seq, train_split, EarlyStopper, EpochStat, SplitData,
    StopDecision, TrainOutcome, TrainReport,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Scoring(#[from] crate::scoring::ScoringError),
    #[error(transparent)]
    Embedding(#[from] crate::nn::pretrained::EmbeddingError),
    #[error(transparent)]
    Checkpoint(#[from] crate::models::CheckpointError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code the CLI maps this error to: 2 for configuration
    /// errors, 3 for training divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Diverged { .. } => 3,
            _ => 1,
        }
    }
}
