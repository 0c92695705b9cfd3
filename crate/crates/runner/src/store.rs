//! On-disk result store: one directory per grid cell.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use vocabflip_core::baselines::BaselineKind;
use vocabflip_core::datagen::Setting;
use vocabflip_core::{Metrics, TaskKind};
use vocabflip_tinyformer::ModelConfig;
use vocabflip_trainkit::TrainConfig;

use crate::config::DataConfig;
use crate::error::RunnerError;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
pub const RESULT_FILE: &str = "result.json";
pub const FAILURE_FILE: &str = "failure.txt";
pub const HISTORY_FILE: &str = "history.tsv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Runner {
    Transformer,
    Baseline(BaselineKind),
}

impl fmt::Display for Runner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Runner::Transformer => f.write_str("transformer"),
            Runner::Baseline(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for Runner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "transformer" {
            return Ok(Runner::Transformer);
        }
        s.parse::<BaselineKind>()
            .map(Runner::Baseline)
            .map_err(|e| e.to_string())
    }
}

impl Serialize for Runner {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Runner {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Identity of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub task: TaskKind,
    pub setting: Setting,
    pub seed: u64,
    pub runner: Runner,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/seed-{}/{}",
            self.task.name(),
            self.setting,
            self.seed,
            self.runner
        )
    }
}

impl CellKey {
    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join("cells")
            .join(self.task.name())
            .join(self.setting.to_string())
            .join(format!("seed-{}", self.seed))
            .join(self.runner.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprints {
    pub train: String,
    pub eval: String,
    pub test: String,
    pub pretrain: Option<String>,
}

/// Everything that determines a cell's outcome besides the code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub data: DataConfig,
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
    pub pretrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub train: Metrics,
    pub eval: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: TaskKind,
    pub setting: Setting,
    pub seed: u64,
    pub runner: Runner,
    pub code_version: String,
    pub config: CellConfig,
    pub fingerprints: Fingerprints,
    pub metrics: PhaseMetrics,
    pub best_epoch: Option<usize>,
    pub steps: Option<usize>,
}

impl ResultRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            task: self.task,
            setting: self.setting,
            seed: self.seed,
            runner: self.runner,
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(RunnerError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(RunnerError::io(path))
}

pub fn write_record(dir: &Path, record: &ResultRecord) -> Result<(), RunnerError> {
    let path = dir.join(RESULT_FILE);
    let mut text = serde_json::to_string_pretty(record).map_err(RunnerError::json(&path))?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())
}

pub fn read_record(path: &Path) -> Result<ResultRecord, RunnerError> {
    let text = fs::read_to_string(path).map_err(RunnerError::io(path))?;
    serde_json::from_str(&text).map_err(RunnerError::json(path))
}

/// Every result record under `root`, in a stable order.
pub fn load_store(root: &Path) -> Result<Vec<ResultRecord>, RunnerError> {
    let mut paths = Vec::new();
    let cells = root.join("cells");
    if cells.is_dir() {
        collect(&cells, &mut paths)?;
    }
    paths.sort();
    paths.iter().map(|p| read_record(p)).collect()
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), RunnerError> {
    for entry in fs::read_dir(dir).map_err(RunnerError::io(dir))? {
        let path = entry.map_err(RunnerError::io(dir))?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == RESULT_FILE) {
            out.push(path);
        }
    }
    Ok(())
}
