//! Experiment grid configuration.
//!
//! The file format is line oriented. Each non-blank line is either a
//! `[section]` header or `key = value`; keys are dotted (`train.epochs`) or
//! relative to the last header. `#` starts a comment. Lists are comma
//! separated. An empty file yields the default grid.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use vocabflip_core::baselines::BaselineKind;
use vocabflip_core::datagen::{LengthRange, Setting, Sizes};
use vocabflip_core::TaskKind;
use vocabflip_tinyformer::ModelConfig;
use vocabflip_trainkit::TrainConfig;

use crate::error::RunnerError;

/// When a transformer cell runs the denoising phase first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainMode {
    /// Zero-shot cells only.
    Auto,
    On,
    Off,
}

impl PretrainMode {
    pub fn applies_to(self, setting: &Setting) -> bool {
        match self {
            PretrainMode::Auto => setting.is_zero_shot(),
            PretrainMode::On => true,
            PretrainMode::Off => false,
        }
    }
}

impl FromStr for PretrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(PretrainMode::Auto),
            "on" | "true" => Ok(PretrainMode::On),
            "off" | "false" => Ok(PretrainMode::Off),
            _ => Err(format!("expected auto, on or off, got {s:?}")),
        }
    }
}

impl fmt::Display for PretrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PretrainMode::Auto => "auto",
            PretrainMode::On => "on",
            PretrainMode::Off => "off",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub sizes: Sizes,
    pub lengths: LengthRange,
    pub pretrain_size: usize,
    pub corruption_rate: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            sizes: Sizes::default(),
            lengths: LengthRange::default(),
            pretrain_size: 10_000,
            corruption_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub tasks: Vec<TaskKind>,
    pub settings: Vec<Setting>,
    pub seeds: Vec<u64>,
    pub baselines: Vec<BaselineKind>,
    /// Whether transformer cells are part of the grid.
    pub transformer: bool,
    pub workers: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pretrain: PretrainMode,
    pub data: DataConfig,
}

pub fn default_settings() -> Vec<Setting> {
    vec![
        Setting::ZeroShot,
        Setting::VocabFlip { mix_ratio: 0.0 },
        Setting::VocabFlip { mix_ratio: 0.01 },
        Setting::VocabFlip { mix_ratio: 0.1 },
    ]
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            tasks: TaskKind::ALL.to_vec(),
            settings: default_settings(),
            seeds: vec![0, 1, 2],
            baselines: vec![
                BaselineKind::MajorityClass,
                BaselineKind::VocabHeuristic,
                BaselineKind::ComponentComparator,
            ],
            transformer: true,
            workers: 1,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            pretrain: PretrainMode::Auto,
            data: DataConfig::default(),
        }
    }
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "grid.tasks",
    "grid.settings",
    "grid.seeds",
    "grid.baselines",
    "grid.transformer",
    "grid.workers",
    "model.enc_layers",
    "model.dec_layers",
    "model.d_model",
    "model.n_heads",
    "model.d_ff",
    "model.max_len",
    "model.dropout",
    "train.batch_size",
    "train.epochs",
    "train.learning_rate",
    "train.warmup_steps",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "train.clip_norm",
    "train.pretrain",
    "train.pretrain_epochs",
    "train.stop_at_eval_accuracy",
    "data.train_size",
    "data.eval_size",
    "data.test_size",
    "data.min_len",
    "data.max_len",
    "data.pretrain_size",
    "data.corruption_rate",
];

fn list<T, E: fmt::Display>(
    value: &str,
    f: impl Fn(&str) -> Result<T, E>,
) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).map_err(|e| e.to_string()))
        .collect()
}

fn scalar<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| format!("cannot parse {value:?}: {e}"))
}

fn no_duplicates<T: fmt::Display>(items: &[T], what: &str) -> Result<(), String> {
    let mut seen = HashSet::new();
    for item in items {
        if !seen.insert(item.to_string()) {
            return Err(format!("duplicate {what} {item}"));
        }
    }
    Ok(())
}

impl ExperimentGrid {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "grid.tasks" => {
                self.tasks = list(value, TaskKind::from_str)?;
                no_duplicates(&self.tasks, "task")?;
            }
            "grid.settings" => {
                self.settings = list(value, Setting::from_str)?;
                no_duplicates(&self.settings, "setting")?;
            }
            "grid.seeds" => {
                self.seeds = list(value, |s| s.parse::<u64>())?;
                no_duplicates(&self.seeds, "seed")?;
            }
            "grid.baselines" => {
                self.baselines = if value == "none" {
                    Vec::new()
                } else {
                    list(value, BaselineKind::from_str)?
                };
                no_duplicates(&self.baselines, "baseline")?;
            }
            "grid.transformer" => self.transformer = scalar(value)?,
            "grid.workers" => self.workers = scalar(value)?,
            "model.enc_layers" => self.model.enc_layers = scalar(value)?,
            "model.dec_layers" => self.model.dec_layers = scalar(value)?,
            "model.d_model" => self.model.d_model = scalar(value)?,
            "model.n_heads" => self.model.n_heads = scalar(value)?,
            "model.d_ff" => self.model.d_ff = scalar(value)?,
            "model.max_len" => self.model.max_len = scalar(value)?,
            "model.dropout" => self.model.dropout = scalar(value)?,
            "train.batch_size" => self.train.batch_size = scalar(value)?,
            "train.epochs" => self.train.epochs = scalar(value)?,
            "train.learning_rate" => self.train.adam.learning_rate = scalar(value)?,
            "train.warmup_steps" => self.train.adam.warmup_steps = scalar(value)?,
            "train.beta1" => self.train.adam.beta1 = scalar(value)?,
            "train.beta2" => self.train.adam.beta2 = scalar(value)?,
            "train.epsilon" => self.train.adam.epsilon = scalar(value)?,
            "train.clip_norm" => self.train.clip_norm = scalar(value)?,
            "train.pretrain" => self.pretrain = scalar(value)?,
            "train.pretrain_epochs" => self.train.pretrain_epochs = scalar(value)?,
            "train.stop_at_eval_accuracy" => {
                self.train.stop_at_eval_accuracy = match value {
                    "none" => None,
                    v => {
                        let t: f64 = scalar(v)?;
                        if !(0.0..=1.0).contains(&t) {
                            return Err(format!("{t} is outside [0, 1]"));
                        }
                        Some(t)
                    }
                }
            }
            "data.train_size" => self.data.sizes.train = scalar(value)?,
            "data.eval_size" => self.data.sizes.eval = scalar(value)?,
            "data.test_size" => self.data.sizes.test = scalar(value)?,
            "data.min_len" => self.data.lengths.min = scalar(value)?,
            "data.max_len" => self.data.lengths.max = scalar(value)?,
            "data.pretrain_size" => self.data.pretrain_size = scalar(value)?,
            "data.corruption_rate" => self.data.corruption_rate = scalar(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Checks cross-field constraints after all keys are applied.
    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Grid(m));
        if self.tasks.is_empty() {
            return bad("grid.tasks is empty".into());
        }
        if self.settings.is_empty() {
            return bad("grid.settings is empty".into());
        }
        if self.seeds.is_empty() {
            return bad("grid.seeds is empty".into());
        }
        if !self.transformer && self.baselines.is_empty() {
            return bad("grid has neither transformer nor baseline cells".into());
        }
        if self.workers == 0 {
            return bad("grid.workers must be at least 1".into());
        }
        if let Err(e) = self.model.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.train.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = LengthRange::new(self.data.lengths.min, self.data.lengths.max) {
            return bad(e.to_string());
        }
        let s = self.data.sizes;
        if [s.train, s.eval, s.test]
            .iter()
            .any(|n| n % 2 != 0 || *n == 0)
        {
            return bad("dataset sizes must be positive and even".into());
        }
        if !(0.0..1.0).contains(&self.data.corruption_rate) {
            return bad("data.corruption_rate must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, RunnerError> {
        let mut grid = ExperimentGrid::default();
        let mut section = String::new();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let err = |key: &str, msg: String| RunnerError::Config {
                key: key.to_string(),
                line: line_no,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line, "expected `key = value`".into()))?;
            let key = key.trim();
            let key = if section.is_empty() || key.contains('.') {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if !seen.insert(key.clone()) {
                return Err(err(&key, "key given twice".into()));
            }
            grid.set(&key, value.trim()).map_err(|m| err(&key, m))?;
        }
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(RunnerError::io(path))?;
        Self::parse(&text)
    }

    /// Canonical `key = value` rendering; parsing it yields an equal grid.
    pub fn to_config_string(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let m = &self.model;
        let t = &self.train;
        let d = &self.data;
        let baselines = if self.baselines.is_empty() {
            "none".to_string()
        } else {
            join(self.baselines.iter().map(|b| b.to_string()).collect())
        };
        let stop = t
            .stop_at_eval_accuracy
            .map_or("none".to_string(), |v| format!("{v:?}"));
        let values: Vec<String> = vec![
            join(self.tasks.iter().map(|k| k.name().to_string()).collect()),
            join(self.settings.iter().map(|s| s.to_string()).collect()),
            join(self.seeds.iter().map(|s| s.to_string()).collect()),
            baselines,
            self.transformer.to_string(),
            self.workers.to_string(),
            m.enc_layers.to_string(),
            m.dec_layers.to_string(),
            m.d_model.to_string(),
            m.n_heads.to_string(),
            m.d_ff.to_string(),
            m.max_len.to_string(),
            format!("{:?}", m.dropout),
            t.batch_size.to_string(),
            t.epochs.to_string(),
            format!("{:?}", t.adam.learning_rate),
            t.adam.warmup_steps.to_string(),
            format!("{:?}", t.adam.beta1),
            format!("{:?}", t.adam.beta2),
            format!("{:?}", t.adam.epsilon),
            format!("{:?}", t.clip_norm),
            self.pretrain.to_string(),
            t.pretrain_epochs.to_string(),
            stop,
            d.sizes.train.to_string(),
            d.sizes.eval.to_string(),
            d.sizes.test.to_string(),
            d.lengths.min.to_string(),
            d.lengths.max.to_string(),
            d.pretrain_size.to_string(),
            format!("{:?}", d.corruption_rate),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
