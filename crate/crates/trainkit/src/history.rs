use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::TrainError;

/// Statistics recorded after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    /// Teacher-forced exact-match rate over the epoch's training batches.
    pub train_accuracy: f64,
    pub eval_loss: f64,
    /// Exact-match accuracy on the eval set for C1 and C2.
    pub eval_accuracy: [f64; 2],
}

impl EpochRecord {
    pub fn eval_overall(&self) -> f64 {
        (self.eval_accuracy[0] + self.eval_accuracy[1]) / 2.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub pretrain_losses: Vec<f64>,
    pub records: Vec<EpochRecord>,
}

const HEADER: &str = "epoch\tstep\ttrain_loss\ttrain_acc\teval_loss\teval_acc_c1\teval_acc_c2";

impl History {
    /// Record with the lowest eval loss; the earliest wins ties.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.eval_loss <= r.eval_loss => Some(b),
                _ => Some(r),
            })
    }

    /// Tab-separated table with full float precision.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (i, l) in self.pretrain_losses.iter().enumerate() {
            let _ = writeln!(s, "#pretrain\t{}\t{l:?}", i + 1);
        }
        s.push_str(HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
                r.epoch,
                r.step,
                r.train_loss,
                r.train_accuracy,
                r.eval_loss,
                r.eval_accuracy[0],
                r.eval_accuracy[1]
            );
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self, TrainError> {
        let bad = |n: usize, m: &str| TrainError::History(format!("line {n}: {m}"));
        let mut h = History::default();
        let mut seen_header = false;
        for (n, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols[0] == "#pretrain" {
                let v = cols.get(2).ok_or_else(|| bad(n, "missing loss"))?;
                h.pretrain_losses
                    .push(v.parse().map_err(|_| bad(n, "bad number"))?);
                continue;
            }
            if line == HEADER {
                seen_header = true;
                continue;
            }
            if !seen_header {
                return Err(bad(n, "missing header"));
            }
            if cols.len() != 7 {
                return Err(bad(n, "expected 7 columns"));
            }
            let f = |i: usize| cols[i].parse::<f64>().map_err(|_| bad(n, "bad number"));
            let u = |i: usize| cols[i].parse::<usize>().map_err(|_| bad(n, "bad integer"));
            h.records.push(EpochRecord {
                epoch: u(0)?,
                step: u(1)?,
                train_loss: f(2)?,
                train_accuracy: f(3)?,
                eval_loss: f(4)?,
                eval_accuracy: [f(5)?, f(6)?],
            });
        }
        if !seen_header {
            return Err(TrainError::History("missing header".into()));
        }
        Ok(h)
    }
}
