//! Command-line experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use infoclust::config::ExperimentConfig;
use infoclust::data::{Dataset, DatasetConfig};
use infoclust::error::{Error, Result};
use infoclust::eval::{linear_probe, ProbeOptions};
use infoclust::model::{load_checkpoint, ClusterModel};
use infoclust::presets::preset;
use infoclust::trainer::{
    evaluate_heads, finetune, run, run_seeds, FinetuneOptions, RunOptions,
};

#[derive(Parser)]
#[command(name = "infoclust", about = "Information-based deep clustering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a clustering model from a config file and/or preset.
    Run {
        /// JSON experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset row (a..w, best_1h1o, best_5h5o); overrides the config's
        /// loss, transforms, and head layout.
        #[arg(long)]
        preset: Option<String>,
        /// Number of seeds to sweep (seed, seed+1, …).
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value = "runs/out")]
        out: PathBuf,
        /// Continue a previous run in the same output directory.
        #[arg(long)]
        resume: bool,
        /// Dataset override: mnist | cifar10 | blobs | raw:<imgs>[:<lbls>]:<classes>.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Learning-rate override.
        #[arg(long)]
        lr: Option<f64>,
        /// Dataset root (else $INFOCLUST_DATA_DIR).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint's cluster accuracy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Train a linear probe on frozen features.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        tap: Tap,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Supervised fine-tuning from a checkpoint (or from scratch).
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Train the same architecture from random initialization instead.
        #[arg(long)]
        scratch: bool,
        #[arg(long)]
        augment: bool,
        /// Labeled-sample budget.
        #[arg(long, default_value_t = 5000)]
        labels: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Render per-head cluster montages as PNG.
    Montage {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        per_cluster: usize,
        #[arg(long, default_value = "montages")]
        out: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Tap {
    Fc,
    Conv,
    Y,
}

fn load_dataset_for(
    checkpoint_extra: &serde_json::Value,
    dataset: Option<&str>,
    data_dir: Option<&PathBuf>,
) -> Result<Dataset> {
    let cfg = match dataset {
        Some(s) => DatasetConfig::parse(s)?,
        None => {
            let cfg: Option<ExperimentConfig> =
                serde_json::from_value(checkpoint_extra.clone()).ok();
            cfg.map(|c| c.dataset).ok_or_else(|| {
                Error::Config(
                    "checkpoint carries no dataset; pass --dataset".to_string(),
                )
            })?
        }
    };
    cfg.load(data_dir.map(PathBuf::as_path))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            preset: preset_name,
            seeds,
            out,
            resume,
            dataset,
            epochs,
            batch_size,
            seed,
            lr,
            data_dir,
        } => {
            let mut cfg = match (&config, &preset_name) {
                (Some(path), None) => ExperimentConfig::from_file(path)?,
                (None, Some(name)) => preset(name)?,
                (Some(path), Some(name)) => {
                    // The preset fixes the experiment row; the config file
                    // supplies schedule/dataset plumbing.
                    let base = ExperimentConfig::from_file(path)?;
                    let row = preset(name)?;
                    ExperimentConfig {
                        name: row.name,
                        loss: row.loss,
                        transforms: row.transforms,
                        heads: row.heads,
                        ..base
                    }
                }
                (None, None) => {
                    return Err(Error::Config(
                        "pass --config and/or --preset".to_string(),
                    ))
                }
            };
            if let Some(ds) = dataset {
                cfg.dataset = DatasetConfig::parse(&ds)?;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(lr) = lr {
                cfg.optimizer.learning_rate = lr;
            }
            cfg.validate()?;
            let opts = RunOptions {
                out_dir: out,
                resume,
                data_dir,
            };
            if seeds > 1 {
                let summary = run_seeds(&cfg, &opts, seeds)?;
                for (s, a) in summary.seeds.iter().zip(&summary.final_accuracies) {
                    println!("seed {s}: selected accuracy {a:.4}");
                }
                println!(
                    "mean ± std over {} seeds: {:.4} ± {:.4}",
                    seeds, summary.mean, summary.std
                );
            } else {
                let summary = run(&cfg, &opts)?;
                println!(
                    "epoch {}: selected accuracy {:.4} ({}, {})",
                    summary.final_record.epoch,
                    summary.final_record.selected_acc,
                    summary.csv_path.display(),
                    summary.checkpoint_path.display(),
                );
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            dataset,
            data_dir,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = load_dataset_for(&ckpt.extra, dataset.as_deref(), data_dir.as_ref())?;
            let accs = evaluate_heads(&ckpt.model, &ds, 256)?;
            for (i, (&head, acc)) in ckpt
                .model
                .descriptor()
                .primary_heads()
                .iter()
                .zip(&accs)
                .enumerate()
            {
                println!("head {head} (primary #{i}): accuracy {acc:.4}");
            }
            let best = accs.iter().cloned().fold(0.0f64, f64::max);
            println!("best-head accuracy: {best:.4}");
            Ok(())
        }
        Command::Probe {
            checkpoint,
            tap,
            dataset,
            data_dir,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = load_dataset_for(&ckpt.extra, dataset.as_deref(), data_dir.as_ref())?;
            let head = ckpt.model.descriptor().primary_heads()[0];
            let view = ds.eval_view();
            let n = ds.len();
            let mut features: Option<ndarray::Array2<f64>> = None;
            let mut row0 = 0usize;
            let mut i = 0usize;
            while i < n {
                let hi = (i + 256).min(n);
                let idx: Vec<usize> = (i..hi).collect();
                let batch = ds.gather(&idx)?;
                let (probs, taps) = ckpt.model.forward_taps(&batch, head)?;
                let chunk = match tap {
                    Tap::Fc => taps.fc,
                    Tap::Conv => taps.conv,
                    Tap::Y => probs.into_array(),
                };
                let f = features.get_or_insert_with(|| {
                    ndarray::Array2::zeros((n, chunk.ncols()))
                });
                f.slice_mut(ndarray::s![row0..row0 + chunk.nrows(), ..])
                    .assign(&chunk);
                row0 += chunk.nrows();
                i = hi;
            }
            let features = features.expect("dataset is non-empty");
            let acc = linear_probe(
                &features,
                view.labels,
                view.n_classes,
                &ProbeOptions::default(),
            )?;
            println!("linear probe accuracy: {acc:.4}");
            Ok(())
        }
        Command::Finetune {
            checkpoint,
            scratch,
            augment,
            labels,
            epochs,
            dataset,
            data_dir,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = load_dataset_for(&ckpt.extra, dataset.as_deref(), data_dir.as_ref())?;
            let mut model = if scratch {
                ClusterModel::init(ckpt.model.descriptor().clone(), 1)?
            } else {
                ckpt.model
            };
            let mut desc_heads = vec![ds.n_classes];
            desc_heads.dedup();
            model.reset_heads(desc_heads, ds.n_classes, 2)?;
            let opts = FinetuneOptions {
                labeled: labels,
                epochs,
                augment,
                ..Default::default()
            };
            let acc = finetune(&mut model, &ds, &opts)?;
            println!(
                "{} fine-tune accuracy: {acc:.4}",
                if scratch { "scratch" } else { "pretrained" }
            );
            Ok(())
        }
        Command::Montage {
            checkpoint,
            per_cluster,
            out,
            dataset,
            data_dir,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = load_dataset_for(&ckpt.extra, dataset.as_deref(), data_dir.as_ref())?;
            std::fs::create_dir_all(&out)?;
            for head in 0..ckpt.model.n_heads() {
                let path = out.join(format!("montage_head{head}.png"));
                infoclust::montage::montage(&ckpt.model, &ds, head, per_cluster, 0, &path)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
