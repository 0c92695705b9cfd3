//! Task identities and the exact label oracles for the four tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TaskError;
use crate::token::{special, TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    CopyReverseSeq2Seq,
    CopyReverseDetection,
    PalindromeDetection,
    RepetitionDetection,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::CopyReverseSeq2Seq,
        TaskKind::CopyReverseDetection,
        TaskKind::PalindromeDetection,
        TaskKind::RepetitionDetection,
    ];

    pub fn is_seq2seq(self) -> bool {
        matches!(self, TaskKind::CopyReverseSeq2Seq)
    }

    pub fn is_classification(self) -> bool {
        !self.is_seq2seq()
    }

    /// Tasks whose inputs carry two sequences (source/output or left/right).
    pub fn takes_pair(self) -> bool {
        matches!(
            self,
            TaskKind::CopyReverseSeq2Seq | TaskKind::CopyReverseDetection
        )
    }

    /// Tasks for which palindromic content is discarded as ambiguous.
    pub fn rejects_palindromes(self) -> bool {
        self.takes_pair()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::CopyReverseSeq2Seq => "copy_reverse",
            TaskKind::CopyReverseDetection => "copy_reverse_detection",
            TaskKind::PalindromeDetection => "palindrome_detection",
            TaskKind::RepetitionDetection => "repetition_detection",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TaskKind::CopyReverseSeq2Seq => "copy/reverse (seq2seq)",
            TaskKind::CopyReverseDetection => "copy/reverse detection",
            TaskKind::PalindromeDetection => "palindrome detection",
            TaskKind::RepetitionDetection => "repetition detection",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .or(match s {
                "copy_reverse_seq2seq" | "seq2seq" => Some(TaskKind::CopyReverseSeq2Seq),
                "palindrome" => Some(TaskKind::PalindromeDetection),
                "repetition" => Some(TaskKind::RepetitionDetection),
                "detection" => Some(TaskKind::CopyReverseDetection),
                _ => None,
            })
            .ok_or_else(|| TaskError::UnknownName {
                what: "task",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskClass {
    C1,
    C2,
}

impl TaskClass {
    pub const BOTH: [TaskClass; 2] = [TaskClass::C1, TaskClass::C2];

    pub fn index(self) -> usize {
        match self {
            TaskClass::C1 => 0,
            TaskClass::C2 => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskClass::C1 => "C1",
            TaskClass::C2 => "C2",
        }
    }

    /// Human-readable meaning of the class for a given task.
    pub fn meaning(self, kind: TaskKind) -> &'static str {
        use TaskClass::*;
        use TaskKind::*;
        match (kind, self) {
            (CopyReverseSeq2Seq, C1) | (CopyReverseDetection, C1) => "copy",
            (CopyReverseSeq2Seq, C2) | (CopyReverseDetection, C2) => "reverse",
            (PalindromeDetection, C1) => "palindrome",
            (PalindromeDetection, C2) => "non-palindrome",
            (RepetitionDetection, C1) => "repetition",
            (RepetitionDetection, C2) => "no repetition",
        }
    }

    /// Task prefix for seq2seq, label token for classification.
    pub fn marker(self, kind: TaskKind) -> TokenId {
        match (kind.is_seq2seq(), self) {
            (true, TaskClass::C1) => special::COPY,
            (true, TaskClass::C2) => special::REVERSE,
            (false, TaskClass::C1) => special::ONE,
            (false, TaskClass::C2) => special::ZERO,
        }
    }

    pub fn from_label_token(id: TokenId) -> Option<TaskClass> {
        match id {
            special::ONE => Some(TaskClass::C1),
            special::ZERO => Some(TaskClass::C2),
            _ => None,
        }
    }
}

impl fmt::Display for TaskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskClass {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C1" | "c1" => Ok(TaskClass::C1),
            "C2" | "c2" => Ok(TaskClass::C2),
            other => Err(TaskError::UnknownName {
                what: "task class",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequencePair {
    pub left: Vec<TokenId>,
    pub right: Vec<TokenId>,
}

impl SequencePair {
    pub fn new(left: Vec<TokenId>, right: Vec<TokenId>) -> Result<Self, TaskError> {
        if left.is_empty() || right.is_empty() {
            return Err(TaskError::EmptySequence);
        }
        Ok(SequencePair { left, right })
    }
}

/// Input shape handed to [`gold_label`].
#[derive(Debug, Clone, Copy)]
pub enum TaskInput<'a> {
    Sequence(&'a [TokenId]),
    /// For seq2seq the pair is (source content, target output).
    Pair(&'a SequencePair),
}

pub fn reverse_seq(s: &[TokenId]) -> Vec<TokenId> {
    s.iter().rev().copied().collect()
}

pub fn is_palindrome(s: &[TokenId]) -> Result<bool, TaskError> {
    if s.is_empty() {
        return Err(TaskError::EmptySequence);
    }
    Ok(s.iter().eq(s.iter().rev()))
}

pub fn has_repetition(s: &[TokenId]) -> Result<bool, TaskError> {
    if s.is_empty() {
        return Err(TaskError::EmptySequence);
    }
    let mut seen = std::collections::HashSet::with_capacity(s.len());
    Ok(!s.iter().all(|t| seen.insert(*t)))
}

pub fn is_copy_pair(p: &SequencePair) -> bool {
    p.left == p.right
}

pub fn is_reverse_pair(p: &SequencePair) -> bool {
    p.left.len() == p.right.len() && p.left.iter().eq(p.right.iter().rev())
}

pub fn gold_label(kind: TaskKind, input: TaskInput<'_>) -> Result<TaskClass, TaskError> {
    match (kind.takes_pair(), input) {
        (true, TaskInput::Pair(p)) => {
            if p.left.is_empty() || p.right.is_empty() {
                return Err(TaskError::EmptySequence);
            }
            if is_palindrome(&p.left)? {
                return Err(TaskError::AmbiguousPalindrome { task: kind.name() });
            }
            if is_copy_pair(p) {
                Ok(TaskClass::C1)
            } else if is_reverse_pair(p) {
                Ok(TaskClass::C2)
            } else {
                Err(TaskError::NotCopyOrReverse)
            }
        }
        (false, TaskInput::Sequence(s)) => {
            let positive = match kind {
                TaskKind::PalindromeDetection => is_palindrome(s)?,
                TaskKind::RepetitionDetection => has_repetition(s)?,
                _ => unreachable!("pair tasks handled above"),
            };
            Ok(if positive {
                TaskClass::C1
            } else {
                TaskClass::C2
            })
        }
        (true, TaskInput::Sequence(_)) => Err(TaskError::ShapeMismatch {
            task: kind.name(),
            expected: "sequence pair",
        }),
        (false, TaskInput::Pair(_)) => Err(TaskError::ShapeMismatch {
            task: kind.name(),
            expected: "single sequence",
        }),
    }
}

/// Default bound on the number of sequences [`enumerate_sequences`] will yield.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Every sequence of length `1..=max_len` over `vocab`, exactly once, in
/// lexicographic order of token position in the vocabulary.
pub fn enumerate_sequences(
    vocab: &Vocabulary,
    max_len: usize,
    cap: u128,
) -> Result<SequenceEnumerator, TaskError> {
    if max_len == 0 {
        return Err(TaskError::EmptySequence);
    }
    if vocab.is_empty() {
        return Err(TaskError::EmptyVocabulary);
    }
    let n = vocab.len() as u128;
    let mut count: u128 = 0;
    let mut power: u128 = 1;
    for _ in 0..max_len {
        power = power.saturating_mul(n);
        count = count.saturating_add(power);
    }
    if count > cap {
        return Err(TaskError::EnumerationCap { count, cap });
    }
    Ok(SequenceEnumerator {
        tokens: vocab.tokens.clone(),
        max_len,
        digits: Vec::new(),
        started: false,
    })
}

/// Preorder walk of the tree of sequences.
pub struct SequenceEnumerator {
    tokens: Vec<TokenId>,
    max_len: usize,
    digits: Vec<usize>,
    started: bool,
}

impl Iterator for SequenceEnumerator {
    type Item = Vec<TokenId>;

    fn next(&mut self) -> Option<Self::Item> {
        if !self.started {
            self.started = true;
            self.digits.push(0);
        } else if self.digits.len() < self.max_len {
            self.digits.push(0);
        } else {
            loop {
                let last = self.digits.last_mut()?;
                *last += 1;
                if *last < self.tokens.len() {
                    break;
                }
                self.digits.pop();
            }
        }
        Some(self.digits.iter().map(|&d| self.tokens[d]).collect())
    }
}
