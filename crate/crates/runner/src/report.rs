//! Accuracy matrices over a result store.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use vocabflip_core::datagen::{Phase, Setting};
use vocabflip_core::{TaskClass, TaskKind};

use crate::error::RunnerError;
use crate::reference::{reference_accuracy, REFERENCE_LABEL};
use crate::store::{load_store, ResultRecord, Runner};

pub const HIGH_BAND: f64 = 0.90;
pub const LOW_BAND: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Markdown,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" | "structured" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    pub phase: Phase,
    /// Adds the published t5-base values as side columns.
    pub reference: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            phase: Phase::Test,
            reference: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    High,
    Mid,
    Low,
}

pub fn band(x: f64) -> Band {
    if x >= HIGH_BAND {
        Band::High
    } else if x <= LOW_BAND {
        Band::Low
    } else {
        Band::Mid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub spread: f64,
    pub per_seed: Vec<(u64, f64)>,
    pub band: Band,
    /// Fewer seeds than the store holds elsewhere.
    pub incomplete: bool,
}

impl CellStat {
    fn new(per_seed: Vec<(u64, f64)>, expected: usize) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().map(|p| p.1).sum::<f64>() / n;
        let spread = if per_seed.len() > 1 {
            (per_seed.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        CellStat {
            mean,
            spread,
            band: band(mean),
            incomplete: per_seed.len() < expected,
            per_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub runner: Runner,
    pub task: TaskKind,
    pub class: TaskClass,
    pub class_name: &'static str,
    pub phase: &'static str,
    /// One entry per report setting; `None` when no seed is present.
    pub cells: Vec<Option<CellStat>>,
    pub reference: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub runner: Runner,
    pub statistic: &'static str,
    pub task: Option<TaskKind>,
    pub setting: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub phase: &'static str,
    pub settings: Vec<String>,
    pub reference_label: Option<&'static str>,
    pub rows: Vec<ReportRow>,
    pub trends: Vec<Trend>,
    pub missing: Vec<String>,
    pub caveats: Vec<&'static str>,
}

const CAVEATS: [&str; 3] = [
    "Cells show the mean and sample standard deviation over seeds.",
    "Published reference values are single numbers per cell; the number of runs behind them is not stated.",
    "Trend statistics are descriptive only and carry no acceptance threshold.",
];

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Train => "train",
        Phase::Eval => "eval",
        Phase::Test => "test",
    }
}

fn setting_order(s: &Setting) -> (u8, f64) {
    match s {
        Setting::ZeroShot => (0, 0.0),
        Setting::VocabFlip { mix_ratio } => (1, *mix_ratio),
    }
}

fn accuracy(r: &ResultRecord, phase: Phase, class: TaskClass) -> f64 {
    let m = match phase {
        Phase::Train => &r.metrics.train,
        Phase::Eval => &r.metrics.eval,
        Phase::Test => &r.metrics.test,
    };
    m.accuracy(class)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn build_report(records: &[ResultRecord], options: ReportOptions) -> Report {
    let mut settings: Vec<Setting> = Vec::new();
    for r in records {
        if !settings.contains(&r.setting) {
            settings.push(r.setting);
        }
    }
    settings.sort_by(|a, b| {
        setting_order(a)
            .partial_cmp(&setting_order(b))
            .expect("finite mix")
    });
    let seeds: BTreeSet<u64> = records.iter().map(|r| r.seed).collect();
    let runners: BTreeSet<Runner> = records.iter().map(|r| r.runner).collect();

    let mut rows = Vec::new();
    let mut missing = Vec::new();
    let mut trends = Vec::new();
    for &runner in &runners {
        let tasks: BTreeSet<TaskKind> = records
            .iter()
            .filter(|r| r.runner == runner)
            .map(|r| r.task)
            .collect();
        // Per (task, setting) mean over classes and seeds, for trend statistics.
        let mut task_means: BTreeMap<(TaskKind, usize), f64> = BTreeMap::new();
        for &task in &tasks {
            for (si, setting) in settings.iter().enumerate() {
                let cell: Vec<&ResultRecord> = records
                    .iter()
                    .filter(|r| r.runner == runner && r.task == task && r.setting == *setting)
                    .collect();
                if cell.is_empty() {
                    missing.push(format!("{runner}/{}/{setting}: no seeds", task.name()));
                } else if cell.len() < seeds.len() {
                    missing.push(format!(
                        "{runner}/{}/{setting}: {} of {} seeds",
                        task.name(),
                        cell.len(),
                        seeds.len()
                    ));
                }
                let all: Vec<f64> = cell
                    .iter()
                    .flat_map(|r| TaskClass::BOTH.map(|c| accuracy(r, options.phase, c)))
                    .collect();
                if let Some(m) = mean(&all) {
                    task_means.insert((task, si), m);
                }
            }
            for class in TaskClass::BOTH {
                let cells = settings
                    .iter()
                    .map(|setting| {
                        let mut per_seed: Vec<(u64, f64)> = records
                            .iter()
                            .filter(|r| {
                                r.runner == runner && r.task == task && r.setting == *setting
                            })
                            .map(|r| (r.seed, accuracy(r, options.phase, class)))
                            .collect();
                        per_seed.sort_by_key(|p| p.0);
                        (!per_seed.is_empty()).then(|| CellStat::new(per_seed, seeds.len()))
                    })
                    .collect();
                let reference = if options.reference {
                    settings
                        .iter()
                        .map(|s| reference_accuracy(task, class, options.phase, s))
                        .collect()
                } else {
                    Vec::new()
                };
                rows.push(ReportRow {
                    runner,
                    task,
                    class,
                    class_name: class.meaning(task),
                    phase: phase_name(options.phase),
                    cells,
                    reference,
                });
            }
        }
        for (si, setting) in settings.iter().enumerate() {
            if setting.is_zero_shot() {
                continue;
            }
            let s2s = task_means.get(&(TaskKind::CopyReverseSeq2Seq, si));
            let cls: Vec<f64> = tasks
                .iter()
                .filter(|t| t.is_classification())
                .filter_map(|&t| task_means.get(&(t, si)).copied())
                .collect();
            if let (Some(a), Some(b)) = (s2s, mean(&cls)) {
                trends.push(Trend {
                    runner,
                    statistic: "seq2seq_minus_classification",
                    task: None,
                    setting: setting.to_string(),
                    value: a - b,
                });
            }
        }
        if let Some(zs) = settings.iter().position(Setting::is_zero_shot) {
            for &task in &tasks {
                for (si, setting) in settings.iter().enumerate() {
                    if si == zs {
                        continue;
                    }
                    if let (Some(a), Some(b)) =
                        (task_means.get(&(task, zs)), task_means.get(&(task, si)))
                    {
                        trends.push(Trend {
                            runner,
                            statistic: "zero_shot_minus_flip",
                            task: Some(task),
                            setting: setting.to_string(),
                            value: a - b,
                        });
                    }
                }
            }
        }
    }
    Report {
        phase: phase_name(options.phase),
        settings: settings.iter().map(|s| s.to_string()).collect(),
        reference_label: options.reference.then_some(REFERENCE_LABEL),
        rows,
        trends,
        missing,
        caveats: CAVEATS.to_vec(),
    }
}

fn num(x: f64) -> String {
    format!("{x:.2}")
}

fn signed(x: f64) -> String {
    format!("{x:+.2}")
}

fn render_markdown(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Accuracy per task class ({} set)\n", r.phase);
    let _ = writeln!(
        s,
        "Cells read `mean ± spread`. Bold: mean >= {HIGH_BAND:.2}. Italic: mean <= {LOW_BAND:.2}. \
         A trailing `*` marks a cell with missing seeds; `n/a` marks a cell with none."
    );
    if let Some(label) = r.reference_label {
        let _ = writeln!(
            s,
            "\nColumns tagged `[ref]` hold the {label} values, not results produced here."
        );
    }
    let mut runner = None;
    for row in &r.rows {
        if runner != Some(row.runner) {
            runner = Some(row.runner);
            let _ = writeln!(s, "\n## {}\n", row.runner);
            let mut header = String::from("| task | class |");
            let mut rule = String::from("|---|---|");
            for st in &r.settings {
                let _ = write!(header, " {st} |");
                rule.push_str("---|");
            }
            if r.reference_label.is_some() {
                for st in &r.settings {
                    let _ = write!(header, " {st} [ref] |");
                    rule.push_str("---|");
                }
            }
            let _ = writeln!(s, "{header}\n{rule}");
        }
        let _ = write!(s, "| {} | {} |", row.task.name(), row.class_name);
        for c in &row.cells {
            let text = match c {
                None => "n/a".to_string(),
                Some(c) => {
                    let core = format!("{} ± {}", num(c.mean), num(c.spread));
                    let core = match c.band {
                        Band::High => format!("**{core}**"),
                        Band::Low => format!("_{core}_"),
                        Band::Mid => core,
                    };
                    if c.incomplete {
                        format!("{core}*")
                    } else {
                        core
                    }
                }
            };
            let _ = write!(s, " {text} |");
        }
        for v in &row.reference {
            let _ = write!(s, " {} |", v.map_or("n/a".to_string(), num));
        }
        s.push('\n');
    }
    if !r.trends.is_empty() {
        let _ = writeln!(
            s,
            "\n## Trends\n\n| runner | statistic | task | setting | value |\n|---|---|---|---|---|"
        );
        for t in &r.trends {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                t.runner,
                t.statistic,
                t.task.map_or("all", |k| k.name()),
                t.setting,
                signed(t.value)
            );
        }
    }
    if !r.missing.is_empty() {
        let _ = writeln!(s, "\n## Missing cells\n");
        for m in &r.missing {
            let _ = writeln!(s, "- {m}");
        }
    }
    let _ = writeln!(s, "\n## Notes\n");
    for c in &r.caveats {
        let _ = writeln!(s, "- {c}");
    }
    s
}

fn render_tsv(r: &Report) -> String {
    let mut s = String::new();
    let mut header = vec![
        "runner".to_string(),
        "task".into(),
        "class".into(),
        "phase".into(),
    ];
    for st in &r.settings {
        for f in ["mean", "spread", "seeds", "band"] {
            header.push(format!("{st}:{f}"));
        }
    }
    if r.reference_label.is_some() {
        for st in &r.settings {
            header.push(format!("{st}:ref"));
        }
    }
    let _ = writeln!(s, "{}", header.join("\t"));
    for row in &r.rows {
        let mut cols = vec![
            row.runner.to_string(),
            row.task.name().to_string(),
            row.class_name.to_string(),
            row.phase.to_string(),
        ];
        for c in &row.cells {
            match c {
                None => cols.extend(["".into(), "".into(), "0".into(), "missing".into()]),
                Some(c) => {
                    let band = match c.band {
                        Band::High => "high",
                        Band::Mid => "mid",
                        Band::Low => "low",
                    };
                    let flag = if c.incomplete { "*" } else { "" };
                    cols.extend([
                        num(c.mean),
                        num(c.spread),
                        c.per_seed.len().to_string(),
                        format!("{band}{flag}"),
                    ]);
                }
            }
        }
        for v in &row.reference {
            cols.push(v.map_or(String::new(), num));
        }
        let _ = writeln!(s, "{}", cols.join("\t"));
    }
    for t in &r.trends {
        let _ = writeln!(
            s,
            "#trend\t{}\t{}\t{}\t{}\t{}",
            t.runner,
            t.statistic,
            t.task.map_or("all", |k| k.name()),
            t.setting,
            signed(t.value)
        );
    }
    for m in &r.missing {
        let _ = writeln!(s, "#missing\t{m}");
    }
    if let Some(label) = r.reference_label {
        let _ = writeln!(s, "#reference\t{label}");
    }
    for c in &r.caveats {
        let _ = writeln!(s, "#note\t{c}");
    }
    s
}

pub fn render(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Tsv => render_tsv(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

pub fn emit_report(
    store: &Path,
    format: ReportFormat,
    options: ReportOptions,
) -> Result<String, RunnerError> {
    let records = load_store(store)?;
    if records.is_empty() {
        return Err(RunnerError::EmptyStore(store.to_path_buf()));
    }
    Ok(render(&build_report(&records, options), format))
}
