//! Importance-guided word dropout for text classification.
//!
//! Words that carry strong class evidence are easy for a neural classifier to
//! latch onto, which starves less obvious features of gradient signal. This
//! crate scores every training word with a smoothed class-conditional count
//! ratio times a frequency factor, squashes the score into a per-word dropout
//! probability, and zeroes the embeddings of sampled words at train time only
//! (no rescaling at evaluation). The crate bundles:
//!
//! * [`corpus`] — TSV ingestion, tokenization, class counts, CV splits;
//! * [`scoring`] — importance scores, dropout probabilities, keyword and
//!   Zipf rank/probability diagnostics;
//! * [`dropout`] — the word-level dropout layer itself;
//! * [`nn`] — a small dense f64 kernel with hand-derived gradients
//!   (embeddings, 1-d convolution with max-over-time pooling, biLSTM,
//!   multi-hop self-attention, Adam, finite-difference checking);
//! * [`models`] — the two reference classifiers assembled from the kernel;
//! * [`harness`] — training loop with early stopping, the three-way
//!   comparison protocol, grid sweeps, top-k ablation, and a synthetic
//!   corpus generator.
//!
//! Training runs are internally single-threaded and fully deterministic for
//! a fixed seed. Independent runs (seeds, folds, grid points) and batch
//! evaluation fan out across threads when the `parallel` feature (default)
//! is enabled; disable it for a sequential build.

pub mod corpus;
pub mod dropout;
pub mod harness;
pub mod models;
pub mod nn;
pub mod scoring;
