//! Associative reference predictors.
//!
//! None of these internalise the task rule. If one of them matches the
//! transformer on a task, success on that task is not evidence of an abstract,
//! identity-independent rule.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{Dataset, OwnedTaskInput, Sample};
use crate::metrics::Metrics;
use crate::tasks::{TaskClass, TaskKind};
use crate::token::{special, TokenId, TokenKind, TokenTable, VocabName};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("baseline {baseline} does not support task {task}")]
    Unsupported {
        baseline: BaselineKind,
        task: TaskKind,
    },
    #[error("dataset has no task label")]
    Unlabeled,
    #[error("token id {0} has no embedding row")]
    MissingEmbedding(u16),
    #[error("embedding rows must share one positive dimension")]
    RaggedEmbeddings,
    #[error(transparent)]
    Data(#[from] crate::error::DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineKind {
    MajorityClass,
    VocabHeuristic,
    ComponentComparator,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::MajorityClass,
        BaselineKind::VocabHeuristic,
        BaselineKind::ComponentComparator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::MajorityClass => "majority",
            BaselineKind::VocabHeuristic => "vocab_heuristic",
            BaselineKind::ComponentComparator => "component_comparator",
        }
    }

    /// All baselines are classifiers.
    pub fn supports(self, task: TaskKind) -> bool {
        task.is_classification()
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = crate::TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| crate::TaskError::UnknownName {
                what: "baseline",
                name: s.to_string(),
            })
    }
}

pub trait Classifier {
    fn predict(&self, sample: &Sample) -> Result<TaskClass, BaselineError>;
}

fn require_classification(baseline: BaselineKind, d: &Dataset) -> Result<TaskKind, BaselineError> {
    let task = d.task().ok_or(BaselineError::Unlabeled)?;
    if !baseline.supports(task) {
        return Err(BaselineError::Unsupported { baseline, task });
    }
    Ok(task)
}

/// Argmax over class counts; ties go to C1.
fn argmax(counts: [usize; 2]) -> TaskClass {
    if counts[1] > counts[0] {
        TaskClass::C2
    } else {
        TaskClass::C1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MajorityClass {
    pub class: TaskClass,
}

impl MajorityClass {
    pub fn fit(train: &Dataset) -> Result<Self, BaselineError> {
        require_classification(BaselineKind::MajorityClass, train)?;
        Ok(MajorityClass {
            class: argmax(train.class_counts()),
        })
    }
}

impl Classifier for MajorityClass {
    fn predict(&self, _sample: &Sample) -> Result<TaskClass, BaselineError> {
        Ok(self.class)
    }
}

/// Class frequency keyed by the multiset of content-token vocabulary tags.
///
/// Unseen multisets back off to the dominant tag, then to the class prior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabHeuristic {
    by_multiset: BTreeMap<(usize, usize), [usize; 2]>,
    by_tag: BTreeMap<VocabName, [usize; 2]>,
    prior: [usize; 2],
}

fn tag_counts(sample: &Sample) -> (usize, usize) {
    let table = TokenTable::standard();
    sample
        .content_tokens()
        .fold((0, 0), |(a, b), t| match table.kind(t) {
            Some(TokenKind::V1) => (a + 1, b),
            Some(TokenKind::V2) => (a, b + 1),
            _ => (a, b),
        })
}

fn dominant(counts: (usize, usize)) -> VocabName {
    if counts.1 > counts.0 {
        VocabName::V2
    } else {
        VocabName::V1
    }
}

impl VocabHeuristic {
    pub fn fit(train: &Dataset) -> Result<Self, BaselineError> {
        require_classification(BaselineKind::VocabHeuristic, train)?;
        let mut h = VocabHeuristic {
            by_multiset: BTreeMap::new(),
            by_tag: BTreeMap::new(),
            prior: [0; 2],
        };
        for s in &train.samples {
            let class = s.objective.class().ok_or(BaselineError::Unlabeled)?;
            let key = tag_counts(s);
            h.by_multiset.entry(key).or_default()[class.index()] += 1;
            h.by_tag.entry(dominant(key)).or_default()[class.index()] += 1;
            h.prior[class.index()] += 1;
        }
        Ok(h)
    }
}

impl Classifier for VocabHeuristic {
    fn predict(&self, sample: &Sample) -> Result<TaskClass, BaselineError> {
        let key = tag_counts(sample);
        let counts = self
            .by_multiset
            .get(&key)
            .filter(|c| c[0] != c[1])
            .or_else(|| self.by_tag.get(&dominant(key)).filter(|c| c[0] != c[1]))
            .copied()
            .unwrap_or(self.prior);
        Ok(argmax(counts))
    }
}

/// Fixed per-token embedding rows indexed by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, BaselineError> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(BaselineError::RaggedEmbeddings);
        }
        Ok(EmbeddingTable { rows })
    }

    /// Orthogonal (one-hot) rows for every token in the standard table.
    pub fn one_hot() -> Self {
        let n = TokenTable::standard().len();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        EmbeddingTable { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, id: TokenId) -> Result<&[f64], BaselineError> {
        self.rows
            .get(id.index())
            .map(Vec::as_slice)
            .ok_or(BaselineError::MissingEmbedding(id.0))
    }
}

/// Component-wise equality of two embedding vectors within `tolerance`.
pub fn components_match(a: &[f64], b: &[f64], tolerance: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tolerance)
}

pub const COMPARATOR_TOLERANCE: f64 = 1e-9;

/// Judges token identity only by comparing embedding components at positions.
#[derive(Debug, Clone)]
pub struct ComponentComparator {
    pub embeddings: EmbeddingTable,
    pub tolerance: f64,
}

impl ComponentComparator {
    pub fn new(embeddings: EmbeddingTable) -> Self {
        ComponentComparator {
            embeddings,
            tolerance: COMPARATOR_TOLERANCE,
        }
    }

    pub fn same(&self, a: TokenId, b: TokenId) -> Result<bool, BaselineError> {
        Ok(components_match(
            self.embeddings.row(a)?,
            self.embeddings.row(b)?,
            self.tolerance,
        ))
    }

    /// Pairwise identity judgments over positions of `seq`.
    pub fn identity_matrix(&self, seq: &[TokenId]) -> Result<Vec<Vec<bool>>, BaselineError> {
        seq.iter()
            .map(|&a| seq.iter().map(|&b| self.same(a, b)).collect())
            .collect()
    }

    pub fn predict_for(&self, task: TaskKind, sample: &Sample) -> Result<TaskClass, BaselineError> {
        let positive = match (task, sample.task_input()?) {
            (TaskKind::RepetitionDetection, OwnedTaskInput::Sequence(s)) => {
                let m = self.identity_matrix(&s)?;
                (0..s.len()).any(|i| (i + 1..s.len()).any(|j| m[i][j]))
            }
            (TaskKind::PalindromeDetection, OwnedTaskInput::Sequence(s)) => {
                let n = s.len();
                let mut all = true;
                for i in 0..n / 2 {
                    all &= self.same(s[i], s[n - 1 - i])?;
                }
                all
            }
            (TaskKind::CopyReverseDetection, OwnedTaskInput::Pair(p)) => {
                let mut all = p.left.len() == p.right.len();
                for (a, b) in p.left.iter().zip(&p.right) {
                    all &= self.same(*a, *b)?;
                }
                all
            }
            _ => {
                return Err(BaselineError::Unsupported {
                    baseline: BaselineKind::ComponentComparator,
                    task,
                })
            }
        };
        Ok(if positive {
            TaskClass::C1
        } else {
            TaskClass::C2
        })
    }
}

impl Classifier for ComponentComparator {
    fn predict(&self, sample: &Sample) -> Result<TaskClass, BaselineError> {
        let task = sample.objective.task().ok_or(BaselineError::Unlabeled)?;
        self.predict_for(task, sample)
    }
}

/// Fits `kind` on `train` (the comparator uses one-hot embeddings and ignores it).
pub fn fit_baseline(
    kind: BaselineKind,
    train: &Dataset,
) -> Result<Box<dyn Classifier + Send + Sync>, BaselineError> {
    Ok(match kind {
        BaselineKind::MajorityClass => Box::new(MajorityClass::fit(train)?),
        BaselineKind::VocabHeuristic => Box::new(VocabHeuristic::fit(train)?),
        BaselineKind::ComponentComparator => {
            require_classification(kind, train)?;
            Box::new(ComponentComparator::new(EmbeddingTable::one_hot()))
        }
    })
}

/// Scores `clf` on every sample of `data` as per-class accuracy.
pub fn evaluate_classifier(clf: &dyn Classifier, data: &Dataset) -> Result<Metrics, BaselineError> {
    let task = data.task().ok_or(BaselineError::Unlabeled)?;
    let mut m = Metrics::new(task);
    for s in &data.samples {
        let class = s.objective.class().ok_or(BaselineError::Unlabeled)?;
        let predicted = clf.predict(s)?;
        m.record(class, predicted == class);
    }
    Ok(m)
}

/// Label token emitted for a predicted class.
pub fn label_token(class: TaskClass) -> TokenId {
    match class {
        TaskClass::C1 => special::ONE,
        TaskClass::C2 => special::ZERO,
    }
}
