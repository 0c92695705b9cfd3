use std::fs;
use std::path::Path;
use std::sync::Mutex;

use vocabflip_core::baselines::{evaluate_classifier, fit_baseline};
use vocabflip_core::datagen::{
    build_pretrain_corpus, build_splits, derive_seed, DatasetSpec, Phase, PretrainSpec, Setting,
    Splits,
};
use vocabflip_core::{Dataset, TaskKind};
use vocabflip_tinyformer::TransformerModel;
use vocabflip_trainkit::{evaluate, pretrain, run_training_with, EpochRecord, TrainConfig};

use crate::config::ExperimentGrid;
use crate::error::RunnerError;
use crate::store::{
    read_record, write_atomic, write_record, CellConfig, CellKey, Fingerprints, PhaseMetrics,
    ResultRecord, Runner, CHECKPOINT_FILE, CODE_VERSION, FAILURE_FILE, HISTORY_FILE, RESULT_FILE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridSummary {
    pub completed: usize,
    pub skipped: usize,
    /// Optimizer steps taken in this invocation, pretraining included.
    pub training_steps: usize,
    pub failures: Vec<CellFailure>,
}

impl GridSummary {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub verbose: bool,
}

/// Datasets shared by every runner of one (task, setting, seed).
struct Group {
    task: TaskKind,
    setting: Setting,
    seed: u64,
}

pub fn dataset_spec(
    grid: &ExperimentGrid,
    task: TaskKind,
    setting: Setting,
    seed: u64,
) -> DatasetSpec {
    let mut spec = DatasetSpec::new(task, setting, Phase::Train, seed);
    spec.sizes = grid.data.sizes;
    spec.lengths = grid.data.lengths;
    spec
}

pub fn pretrain_spec(grid: &ExperimentGrid, seed: u64) -> PretrainSpec {
    let mut spec = PretrainSpec::new(derive_seed(seed, "pretrain-corpus"));
    spec.size = grid.data.pretrain_size;
    spec.lengths = grid.data.lengths;
    spec.corruption_rate = grid.data.corruption_rate;
    spec
}

pub fn model_seed(task: TaskKind, setting: &Setting, seed: u64) -> u64 {
    derive_seed(seed, &format!("model-init|{}|{setting}", task.name()))
}

fn runners(grid: &ExperimentGrid, task: TaskKind) -> Vec<Runner> {
    let mut out = Vec::new();
    if grid.transformer {
        out.push(Runner::Transformer);
    }
    out.extend(
        grid.baselines
            .iter()
            .filter(|b| b.supports(task))
            .map(|&b| Runner::Baseline(b)),
    );
    out
}

/// Runs every cell of `grid` under `out`. Cells whose stored record matches the
/// current config, code version and dataset fingerprints are skipped.
pub fn run_grid(
    grid: &ExperimentGrid,
    out: &Path,
    options: RunOptions,
) -> Result<GridSummary, RunnerError> {
    grid.validate()?;
    fs::create_dir_all(out).map_err(RunnerError::io(out))?;
    write_atomic(&out.join("grid.conf"), grid.to_config_string().as_bytes())?;

    let mut groups = Vec::new();
    for &task in &grid.tasks {
        for &setting in &grid.settings {
            for &seed in &grid.seeds {
                groups.push(Group {
                    task,
                    setting,
                    seed,
                });
            }
        }
    }
    let queue = Mutex::new(groups.into_iter());
    let summary = Mutex::new(GridSummary::default());
    let workers = grid.workers.max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").next();
                let Some(group) = next else { break };
                let part = run_group(grid, out, &group, options);
                let mut s = summary.lock().expect("summary lock");
                s.completed += part.completed;
                s.skipped += part.skipped;
                s.training_steps += part.training_steps;
                s.failures.extend(part.failures);
            });
        }
    });
    let mut summary = summary.into_inner().expect("summary lock");
    summary.failures.sort_by(|a, b| a.cell.cmp(&b.cell));
    Ok(summary)
}

fn run_group(grid: &ExperimentGrid, out: &Path, g: &Group, options: RunOptions) -> GridSummary {
    let mut summary = GridSummary::default();
    let cells: Vec<CellKey> = runners(grid, g.task)
        .into_iter()
        .map(|runner| CellKey {
            task: g.task,
            setting: g.setting,
            seed: g.seed,
            runner,
        })
        .collect();
    let fail_all = |summary: &mut GridSummary, e: &RunnerError| {
        for c in &cells {
            record_failure(out, c, e, summary);
        }
    };
    let splits = match build_splits(&dataset_spec(grid, g.task, g.setting, g.seed)) {
        Ok(s) => s,
        Err(e) => {
            fail_all(&mut summary, &e.into());
            return summary;
        }
    };
    let use_pretrain =
        grid.transformer && grid.train.pretrain_epochs > 0 && grid.pretrain.applies_to(&g.setting);
    let corpus = if use_pretrain {
        match build_pretrain_corpus(&pretrain_spec(grid, g.seed)) {
            Ok(c) => Some(c),
            Err(e) => {
                fail_all(&mut summary, &e.into());
                return summary;
            }
        }
    } else {
        None
    };
    for cell in &cells {
        let pretrain_corpus = match cell.runner {
            Runner::Transformer => corpus.as_ref(),
            Runner::Baseline(_) => None,
        };
        let expected = expected_inputs(grid, cell, &splits, pretrain_corpus);
        let dir = cell.dir(out);
        if is_complete(&dir, &expected) {
            summary.skipped += 1;
            if options.verbose {
                eprintln!("skip {cell} (up to date)");
            }
            continue;
        }
        if options.verbose {
            eprintln!("run  {cell}");
        }
        match run_cell(cell, &dir, &splits, pretrain_corpus, expected, options) {
            Ok(steps) => {
                summary.completed += 1;
                summary.training_steps += steps;
            }
            Err(e) => record_failure(out, cell, &e, &mut summary),
        }
    }
    summary
}

fn record_failure(out: &Path, cell: &CellKey, e: &RunnerError, summary: &mut GridSummary) {
    let dir = cell.dir(out);
    let _ = fs::create_dir_all(&dir);
    let _ = fs::remove_file(dir.join(RESULT_FILE));
    let _ = fs::write(dir.join(FAILURE_FILE), format!("{e}\n"));
    eprintln!("FAIL {cell}: {e}");
    summary.failures.push(CellFailure {
        cell: cell.to_string(),
        error: e.to_string(),
    });
}

/// Inputs a stored record must match to be reused.
struct Expected {
    config: CellConfig,
    fingerprints: Fingerprints,
}

fn cell_train_config(grid: &ExperimentGrid, cell: &CellKey) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(
            cell.seed,
            &format!("train|{}|{}", cell.task.name(), cell.setting),
        ),
        ..grid.train.clone()
    }
}

fn expected_inputs(
    grid: &ExperimentGrid,
    cell: &CellKey,
    splits: &Splits,
    corpus: Option<&Dataset>,
) -> Expected {
    let transformer = cell.runner == Runner::Transformer;
    Expected {
        config: CellConfig {
            data: grid.data.clone(),
            model: transformer.then(|| grid.model.clone()),
            train: transformer.then(|| cell_train_config(grid, cell)),
            pretrained: corpus.is_some(),
        },
        fingerprints: Fingerprints {
            train: splits.train.fingerprint.clone(),
            eval: splits.eval.fingerprint.clone(),
            test: splits.test.fingerprint.clone(),
            pretrain: corpus.map(|c| c.fingerprint.clone()),
        },
    }
}

fn is_complete(dir: &Path, expected: &Expected) -> bool {
    match read_record(&dir.join(RESULT_FILE)) {
        Ok(r) => {
            r.code_version == CODE_VERSION
                && r.config == expected.config
                && r.fingerprints == expected.fingerprints
                && (r.runner != Runner::Transformer || dir.join(CHECKPOINT_FILE).is_file())
        }
        Err(_) => false,
    }
}

/// Runs one cell and returns the optimizer steps it took.
fn run_cell(
    cell: &CellKey,
    dir: &Path,
    splits: &Splits,
    corpus: Option<&Dataset>,
    expected: Expected,
    options: RunOptions,
) -> Result<usize, RunnerError> {
    fs::create_dir_all(dir).map_err(RunnerError::io(dir))?;
    let _ = fs::remove_file(dir.join(FAILURE_FILE));
    let (metrics, best_epoch, steps) = match cell.runner {
        Runner::Baseline(kind) => {
            let clf = fit_baseline(kind, &splits.train)?;
            let m = PhaseMetrics {
                train: evaluate_classifier(clf.as_ref(), &splits.train)?,
                eval: evaluate_classifier(clf.as_ref(), &splits.eval)?,
                test: evaluate_classifier(clf.as_ref(), &splits.test)?,
            };
            (m, None, 0)
        }
        Runner::Transformer => {
            let model_cfg = expected.config.model.clone().expect("transformer config");
            let train_cfg = expected.config.train.clone().expect("transformer config");
            let mut model =
                TransformerModel::new(model_cfg, model_seed(cell.task, &cell.setting, cell.seed))?;
            let mut pretrain_losses = Vec::new();
            let mut steps = 0;
            if let Some(c) = corpus {
                pretrain_losses = pretrain(&mut model, c, &train_cfg)?;
                steps += train_cfg.pretrain_epochs * c.len().div_ceil(train_cfg.batch_size);
            }
            let mut observer = |r: &EpochRecord| {
                if options.verbose {
                    eprintln!(
                        "     {cell} epoch {} eval_loss {:.4} eval_acc {:.3}/{:.3}",
                        r.epoch, r.eval_loss, r.eval_accuracy[0], r.eval_accuracy[1]
                    );
                }
            };
            let (ck, mut history) = run_training_with(
                model,
                &splits.train,
                &splits.eval,
                &train_cfg,
                &mut observer,
            )?;
            history.pretrain_losses = pretrain_losses;
            steps += history.records.last().map_or(0, |r| r.step);
            for d in [&splits.train, &splits.eval, &splits.test] {
                d.check_fingerprint()?;
            }
            let m = PhaseMetrics {
                train: evaluate(&ck.model, &splits.train)?,
                eval: evaluate(&ck.model, &splits.eval)?,
                test: evaluate(&ck.model, &splits.test)?,
            };
            write_atomic(&dir.join(HISTORY_FILE), history.to_tsv().as_bytes())?;
            ck.save(&dir.join(CHECKPOINT_FILE))?;
            (m, Some(ck.epoch), steps)
        }
    };
    let record = ResultRecord {
        task: cell.task,
        setting: cell.setting,
        seed: cell.seed,
        runner: cell.runner,
        code_version: CODE_VERSION.to_string(),
        config: expected.config,
        fingerprints: expected.fingerprints,
        metrics,
        best_epoch,
        steps: (cell.runner == Runner::Transformer).then_some(steps),
    };
    write_record(dir, &record)?;
    Ok(steps)
}
