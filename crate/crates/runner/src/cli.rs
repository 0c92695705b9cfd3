use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use vocabflip_core::baselines::{evaluate_classifier, fit_baseline, BaselineKind};
use vocabflip_core::datagen::{
    build_pretrain_corpus, build_splits, read_dataset, write_dataset, Phase, Setting,
};
use vocabflip_core::{Metrics, TaskClass, TaskKind, TokenTable};
use vocabflip_tinyformer::{Checkpoint, TransformerModel};
use vocabflip_trainkit::{evaluate, pretrain, run_training_with, EpochRecord};

use crate::config::ExperimentGrid;
use crate::error::RunnerError;
use crate::grid::{dataset_spec, pretrain_spec, run_grid, RunOptions};
use crate::report::{emit_report, ReportFormat, ReportOptions};
use crate::store::write_atomic;

#[derive(Debug, Parser)]
#[command(
    name = "vocabflip",
    version,
    about = "Vocabulary-flip experiments on a small transformer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Grid config file supplying model, training and data settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentGrid, RunnerError> {
        match &self.config {
            Some(p) => ExperimentGrid::load(p),
            None => Ok(ExperimentGrid::default()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train, eval and test datasets for one task and setting, plus
    /// the token table.
    Gen {
        #[arg(long)]
        task: TaskKind,
        #[arg(long, default_value = "zero-shot")]
        setting: Setting,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Denoising pretraining of a fresh model.
    Pretrain {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Fine-tune on a dataset pair and keep the lowest-eval-loss checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        /// Start from this checkpoint instead of a fresh model.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Greedy-decode a dataset with a checkpoint and print per-class accuracy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Fit a baseline on a training set and score another dataset.
    Baseline {
        #[arg(long)]
        kind: BaselineKind,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run every cell of an experiment grid into a result store.
    Grid {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Summarize a result store as an accuracy matrix.
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long, default_value = "test", value_parser = parse_phase)]
        phase: Phase,
        /// Add the published t5-base accuracies as side columns.
        #[arg(long)]
        reference: bool,
    },
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    match s {
        "train" => Ok(Phase::Train),
        "eval" => Ok(Phase::Eval),
        "test" => Ok(Phase::Test),
        _ => Err(format!("expected train, eval or test, got {s:?}")),
    }
}

fn print_metrics(m: &Metrics, json: bool) -> Result<(), RunnerError> {
    if json {
        let text = serde_json::to_string_pretty(m).map_err(RunnerError::json("<stdout>"))?;
        println!("{text}");
        return Ok(());
    }
    println!("task\t{}", m.task.name());
    for c in TaskClass::BOTH {
        let t = m.per_class[c.index()];
        println!(
            "{}\t{:.4}\t{}/{}",
            c.meaning(m.task),
            m.accuracy(c),
            t.correct,
            t.total
        );
    }
    println!("overall\t{:.4}", m.overall_accuracy());
    if let Some(l) = m.loss {
        println!("loss\t{l:.6}");
    }
    Ok(())
}

/// Executes one command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32, RunnerError> {
    match cli.command {
        Command::Gen {
            task,
            setting,
            seed,
            out,
            config,
        } => {
            let grid = config.load()?;
            let splits = build_splits(&dataset_spec(&grid, task, setting, seed))?;
            fs::create_dir_all(&out).map_err(RunnerError::io(&out))?;
            for (name, d) in [
                ("train", &splits.train),
                ("eval", &splits.eval),
                ("test", &splits.test),
            ] {
                let path = out.join(format!("{name}.tsv"));
                write_dataset(d, &path)?;
                println!("{}\t{}\t{}", path.display(), d.len(), d.fingerprint);
            }
            let tokens = out.join("tokens.tsv");
            write_atomic(&tokens, TokenTable::standard().to_tsv().as_bytes())?;
        }
        Command::Pretrain { seed, out, config } => {
            let grid = config.load()?;
            let corpus = build_pretrain_corpus(&pretrain_spec(&grid, seed))?;
            let mut model = TransformerModel::new(grid.model.clone(), seed)?;
            let train = vocabflip_trainkit::TrainConfig {
                seed,
                ..grid.train.clone()
            };
            let losses = pretrain(&mut model, &corpus, &train)?;
            for (i, l) in losses.iter().enumerate() {
                eprintln!("pretrain epoch {} loss {l:.4}", i + 1);
            }
            Checkpoint {
                model,
                epoch: 0,
                step: train.pretrain_epochs * corpus.len().div_ceil(train.batch_size),
                eval_loss: losses.last().copied().unwrap_or(f64::NAN),
            }
            .save(&out)?;
        }
        Command::Train {
            train,
            eval,
            init,
            seed,
            out,
            config,
        } => {
            let grid = config.load()?;
            let train_data = read_dataset(&train)?;
            let eval_data = read_dataset(&eval)?;
            let model = match init {
                Some(p) => Checkpoint::load(&p)?.model,
                None => TransformerModel::new(grid.model.clone(), seed)?,
            };
            let cfg = vocabflip_trainkit::TrainConfig {
                seed,
                ..grid.train.clone()
            };
            let mut observer = |r: &EpochRecord| {
                eprintln!(
                    "epoch {} train_loss {:.4} eval_loss {:.4} eval_acc {:.3}/{:.3}",
                    r.epoch, r.train_loss, r.eval_loss, r.eval_accuracy[0], r.eval_accuracy[1]
                );
            };
            let (ck, history) =
                run_training_with(model, &train_data, &eval_data, &cfg, &mut observer)?;
            fs::create_dir_all(&out).map_err(RunnerError::io(&out))?;
            ck.save(&out.join("model.ckpt"))?;
            write_atomic(&out.join("history.tsv"), history.to_tsv().as_bytes())?;
            println!("best epoch {} eval_loss {:.6}", ck.epoch, ck.eval_loss);
        }
        Command::Eval {
            checkpoint,
            data,
            json,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let d = read_dataset(&data)?;
            print_metrics(&evaluate(&ck.model, &d)?, json)?;
        }
        Command::Baseline {
            kind,
            train,
            data,
            json,
        } => {
            let t = read_dataset(&train)?;
            let d = read_dataset(&data)?;
            let clf = fit_baseline(kind, &t)?;
            print_metrics(&evaluate_classifier(clf.as_ref(), &d)?, json)?;
        }
        Command::Grid { config, out, quiet } => {
            let grid = config.load()?;
            let summary = run_grid(&grid, &out, RunOptions { verbose: !quiet })?;
            println!(
                "completed {} skipped {} failed {} training_steps {}",
                summary.completed,
                summary.skipped,
                summary.failures.len(),
                summary.training_steps
            );
            if !summary.is_success() {
                for f in &summary.failures {
                    println!("failed\t{}\t{}", f.cell, f.error);
                }
                return Ok(1);
            }
        }
        Command::Report {
            store,
            format,
            phase,
            reference,
        } => {
            print!(
                "{}",
                emit_report(&store, format, ReportOptions { phase, reference })?
            );
        }
    }
    Ok(0)
}
