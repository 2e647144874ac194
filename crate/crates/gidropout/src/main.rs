//! Command-line front end: scoring tables, keyword and Zipf diagnostics,
//! training with early stopping, checkpoint evaluation, the three-way
//! comparison, beta sweeps, top-k ablation, and the synthetic corpus
//! generator.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on training
//! divergence, 1 on other failures (I/O and the like).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gidropout::corpus::{cv_split, load_dataset};
use gidropout::harness::{
    ablate, compare, generate_synth, sweep_beta, DataBundle, ExperimentSpec, HarnessError,
    SplitData, SynthConfig, TrainReport,
};
use gidropout::models::{encode_dataset, load_checkpoint, save_checkpoint};
use gidropout::dropout::DropoutPolicy;
use gidropout::harness::train::{evaluate_accuracy, train_split};
use gidropout::scoring::{
    build_table, table_from_dataset, top_keywords, zipf_diagnostic, ScoringConfig,
};

#[derive(Parser)]
#[command(
    name = "gidropout",
    about = "Importance-guided word dropout for text classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the importance table of a training TSV and emit it as TSV
    /// (word, per-class scores, max score, dropout probability).
    Score {
        /// Training data (TSV: label<TAB>text).
        #[arg(long)]
        data: PathBuf,
        /// Frequency-factor base in (0,1).
        #[arg(long)]
        beta: f64,
        /// Smoothing constant.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        lowercase: bool,
        /// Output directory (writes scores.tsv); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top-k keywords per class by per-class importance score.
    Keywords {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// How many words per class.
        #[arg(long, default_value_t = 30)]
        k: usize,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        lowercase: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Least-squares fit of log dropout probability vs log rank, as JSON.
    Zipf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        lowercase: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per the experiment spec; writes the report and a
    /// checkpoint.
    Train {
        /// Experiment spec (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the first seed of the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// CV fold to train on (CV specs only).
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a TSV dataset.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        lowercase: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three-way protocol: baseline vs uniform dropout (p grid) vs guided
    /// dropout (beta grid), tuned by mean dev accuracy.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy and Zipf diagnostics across the beta grid.
    SweepBeta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Remove the top-k scored words from the test split and re-evaluate
    /// the baseline and guided-dropout models.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic two-class corpus (train.tsv / test.tsv).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        train_n: usize,
        #[arg(long, default_value_t = 500)]
        test_n: usize,
        /// Probability a sentence carries a strong keyword.
        #[arg(long)]
        strong_present: Option<f64>,
        /// Probability the strong keyword matches the class.
        #[arg(long)]
        strong_fidelity: Option<f64>,
        #[arg(long)]
        weak_present: Option<f64>,
        #[arg(long)]
        weak_fidelity: Option<f64>,
        /// Distinct weak keywords per class.
        #[arg(long)]
        weak_pool: Option<usize>,
        /// Class-agnostic background rate of weak words.
        #[arg(long)]
        weak_background: Option<f64>,
        #[arg(long)]
        noise_vocab: Option<usize>,
        #[arg(long)]
        zipf_exponent: Option<f64>,
        #[arg(long)]
        len_min: Option<usize>,
        #[arg(long)]
        len_max: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn write_or_print(out: &Option<PathBuf>, filename: &str, content: &str) -> Result<(), HarnessError> {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let path = dir.join(filename);
            std::fs::write(&path, content).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn scoring_config(alpha: f64, beta: f64) -> Result<ScoringConfig, HarnessError> {
    ScoringConfig::new(alpha, beta).map_err(|e| HarnessError::Config(e.to_string()))
}

/// Echoes the TSV rendering to stderr and writes `<name>.json` (stdout when
/// no --out) plus a `<name>.tsv` twin into the output directory.
fn emit_report<T: serde::Serialize>(
    out: &Option<PathBuf>,
    name: &str,
    report: &T,
    tsv: &str,
) -> Result<(), HarnessError> {
    eprint!("{tsv}");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_or_print(out, &format!("{name}.json"), &format!("{json}
"))?;
    if let Some(dir) = out {
        let path = dir.join(format!("{name}.tsv"));
        std::fs::write(&path, tsv).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, HarnessError> {
    let json = std::fs::read_to_string(path).map_err(|e| {
        HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    ExperimentSpec::from_json(&json)
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Score {
            data,
            beta,
            alpha,
            lowercase,
            out,
        } => {
            let cfg = scoring_config(alpha, beta)?;
            let dataset = load_dataset(&data, lowercase)?;
            let table = build_table(&gidropout::corpus::build_counts(&dataset), &cfg)?;
            write_or_print(&out, "scores.tsv", &table.to_tsv())
        }
        Command::Keywords {
            data,
            beta,
            alpha,
            k,
            lowercase,
            out,
        } => {
            let cfg = scoring_config(alpha, beta)?;
            let dataset = load_dataset(&data, lowercase)?;
            let table = table_from_dataset(&dataset, &cfg)?;
            let mut text = String::from("class\trank\tword\tscore\n");
            for (class, name) in dataset.label_names.iter().enumerate() {
                for (rank, word) in top_keywords(&table, class, k).iter().enumerate() {
                    let score = table.get(word).map_or(0.0, |s| s.by_class[class]);
                    text.push_str(&format!("{name}\t{}\t{word}\t{score}\n", rank + 1));
                }
            }
            write_or_print(&out, "keywords.tsv", &text)
        }
        Command::Zipf {
            data,
            beta,
            alpha,
            lowercase,
            out,
        } => {
            let cfg = scoring_config(alpha, beta)?;
            let dataset = load_dataset(&data, lowercase)?;
            let table = table_from_dataset(&dataset, &cfg)?;
            let fit = zipf_diagnostic(&table)?;
            let json = serde_json::to_string_pretty(&fit).expect("fit serializes");
            write_or_print(&out, "zipf.json", &format!("{json}\n"))
        }
        Command::Train {
            config,
            seed,
            fold,
            out,
        } => {
            let spec = load_spec(&config)?;
            let seed = seed.unwrap_or(spec.seeds[0]);
            let split = single_split(&spec, seed, fold)?;
            let outcome = train_split(
                &spec.model,
                &spec.policy,
                &spec.train,
                &split,
                seed,
                spec.data.embeddings.as_deref(),
            )?;
            print_report_summary(&outcome.report);
            write_or_print(
                &out,
                "report.json",
                &format!("{}\n", serde_json::to_string_pretty(&outcome.report).unwrap()),
            )?;
            if let Some(dir) = &out {
                std::fs::write(dir.join("epochs.tsv"), outcome.report.epochs_tsv()).map_err(
                    |source| HarnessError::Io {
                        path: dir.join("epochs.tsv").display().to_string(),
                        source,
                    },
                )?;
                let ckpt = dir.join("model.bin");
                save_checkpoint(
                    &outcome.model,
                    &outcome.vocab,
                    &split.train.label_names,
                    &ckpt,
                )?;
                eprintln!("wrote {}", ckpt.display());
            }
            Ok(())
        }
        Command::Eval {
            model,
            data,
            lowercase,
            out,
        } => {
            let ckpt = load_checkpoint(&model)?;
            let dataset = load_dataset(&data, lowercase)?;
            // align the dataset's dense labels with the checkpoint's
            let remap: Vec<usize> = dataset
                .label_names
                .iter()
                .map(|name| {
                    ckpt.label_names
                        .iter()
                        .position(|l| l == name)
                        .ok_or_else(|| {
                            HarnessError::Config(format!(
                                "label {name:?} not in checkpoint labels {:?}",
                                ckpt.label_names
                            ))
                        })
                })
                .collect::<Result<_, _>>()?;
            let mut enc = encode_dataset(&dataset, &ckpt.vocab, &DropoutPolicy::Off);
            for ex in &mut enc {
                ex.label = remap[ex.label];
            }
            let accuracy = evaluate_accuracy(&ckpt.model, &enc);
            let json = serde_json::json!({ "accuracy": accuracy, "examples": enc.len() });
            write_or_print(&out, "eval.json", &format!("{json:#}\n"))
        }
        Command::Compare { config, out } => {
            let report = compare(&load_spec(&config)?)?;
            emit_report(&out, "compare", &report, &report.to_tsv())
        }
        Command::SweepBeta { config, out } => {
            let report = sweep_beta(&load_spec(&config)?)?;
            emit_report(&out, "sweep", &report, &report.to_tsv())
        }
        Command::Ablate { config, out } => {
            let report = ablate(&load_spec(&config)?)?;
            emit_report(&out, "ablate", &report, &report.to_tsv())
        }
        Command::Synth {
            out,
            seed,
            train_n,
            test_n,
            strong_present,
            strong_fidelity,
            weak_present,
            weak_fidelity,
            weak_pool,
            weak_background,
            noise_vocab,
            zipf_exponent,
            len_min,
            len_max,
        } => {
            let defaults = SynthConfig::default();
            let cfg = SynthConfig {
                train_n,
                test_n,
                seed,
                strong_present: strong_present.unwrap_or(defaults.strong_present),
                strong_fidelity: strong_fidelity.unwrap_or(defaults.strong_fidelity),
                weak_present: weak_present.unwrap_or(defaults.weak_present),
                weak_fidelity: weak_fidelity.unwrap_or(defaults.weak_fidelity),
                weak_pool: weak_pool.unwrap_or(defaults.weak_pool),
                weak_background: weak_background.unwrap_or(defaults.weak_background),
                noise_vocab: noise_vocab.unwrap_or(defaults.noise_vocab),
                zipf_exponent: zipf_exponent.unwrap_or(defaults.zipf_exponent),
                len_min: len_min.unwrap_or(defaults.len_min),
                len_max: len_max.unwrap_or(defaults.len_max),
            };
            let (train, test) = generate_synth(&cfg);
            std::fs::create_dir_all(&out).map_err(|source| HarnessError::Io {
                path: out.display().to_string(),
                source,
            })?;
            train.write_tsv(&out.join("train.tsv"))?;
            test.write_tsv(&out.join("test.tsv"))?;
            let cfg_json = serde_json::to_string_pretty(&cfg).unwrap();
            std::fs::write(out.join("synth.json"), format!("{cfg_json}\n")).map_err(
                |source| HarnessError::Io {
                    path: out.join("synth.json").display().to_string(),
                    source,
                },
            )?;
            eprintln!(
                "wrote {}/train.tsv ({} examples) and {}/test.tsv ({} examples)",
                out.display(),
                train.len(),
                out.display(),
                test.len()
            );
            Ok(())
        }
    }
}

/// The single train/dev/test split a `train` invocation uses: the requested
/// CV fold, or the fixed split with a seeded dev carve.
fn single_split(spec: &ExperimentSpec, seed: u64, fold: usize) -> Result<SplitData, HarnessError> {
    let bundle = DataBundle::load(&spec.data)?;
    match &bundle {
        DataBundle::Cv { full, folds } => {
            if fold >= *folds {
                return Err(HarnessError::Config(format!(
                    "fold {fold} out of range for {folds}-fold CV"
                )));
            }
            let mut all = cv_split(full, *folds, spec.data.cv_seed)?;
            let f = all.swap_remove(fold);
            Ok(SplitData {
                train: f.train,
                dev: f.dev,
                test: f.test,
            })
        }
        DataBundle::Fixed { .. } => bundle.split(&spec.data, seed, 0),
    }
}

fn print_report_summary(report: &TrainReport) {
    eprintln!(
        "seed {}: best dev {:.4} @ epoch {} | test {:.4} | {} epochs{} | {:.1}s",
        report.seed,
        report.best_dev_accuracy,
        report.best_epoch,
        report.test_accuracy,
        report.epochs.len(),
        if report.stopped_early { " (early stop)" } else { "" },
        report.wall_time_s
    );
}
