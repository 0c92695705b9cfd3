//! Per-class exact-match accuracy records shared by the transformer and the baselines.

use serde::{Deserialize, Serialize};

use crate::tasks::{TaskClass, TaskKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub correct: usize,
    pub total: usize,
}

impl ClassTally {
    /// Fraction correct; 0 for an empty class.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task: TaskKind,
    /// Indexed by [`TaskClass::index`].
    pub per_class: [ClassTally; 2],
    /// Mean token cross-entropy, when the predictor has one.
    pub loss: Option<f64>,
}

impl Metrics {
    pub fn new(task: TaskKind) -> Self {
        Metrics {
            task,
            per_class: [ClassTally::default(); 2],
            loss: None,
        }
    }

    pub fn record(&mut self, class: TaskClass, correct: bool) {
        let t = &mut self.per_class[class.index()];
        t.total += 1;
        t.correct += usize::from(correct);
    }

    pub fn accuracy(&self, class: TaskClass) -> f64 {
        self.per_class[class.index()].accuracy()
    }

    pub fn overall_accuracy(&self) -> f64 {
        let total: usize = self.per_class.iter().map(|t| t.total).sum();
        let correct: usize = self.per_class.iter().map(|t| t.correct).sum();
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }

    pub fn total(&self) -> usize {
        self.per_class.iter().map(|t| t.total).sum()
    }
}
