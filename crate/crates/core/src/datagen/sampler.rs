use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::tasks::{has_repetition, is_palindrome};
use crate::token::{TokenId, Vocabulary};

/// Attempts at plain rejection sampling before a constructive fix-up.
pub const REJECTION_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

impl LengthRange {
    pub fn new(min: usize, max: usize) -> Result<Self, DataError> {
        if min == 0 || min > max {
            return Err(DataError::LengthRange { min, max });
        }
        Ok(LengthRange { min, max })
    }
}

impl Default for LengthRange {
    fn default() -> Self {
        LengthRange { min: 1, max: 10 }
    }
}

impl fmt::Display for LengthRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.min, self.max)
    }
}

impl std::str::FromStr for LengthRange {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::InvalidSpec(format!("bad length range {s:?}"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        LengthRange::new(
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    Any,
    NoRepetition,
    ForceRepetition,
    Palindrome,
    NonPalindrome,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::Any => "any",
            Constraint::NoRepetition => "no_repetition",
            Constraint::ForceRepetition => "force_repetition",
            Constraint::Palindrome => "palindrome",
            Constraint::NonPalindrome => "non_palindrome",
        }
    }

    /// Lengths within `range` for which the constraint can hold over `vocab_len` tokens.
    pub fn effective_range(
        self,
        range: LengthRange,
        vocab_len: usize,
    ) -> Result<(usize, usize), DataError> {
        let unsat = || DataError::Unsatisfiable {
            constraint: self.name(),
            min: range.min,
            max: range.max,
            vocab: vocab_len,
        };
        if vocab_len == 0 {
            return Err(unsat());
        }
        let (lo, hi) = match self {
            Constraint::Any | Constraint::Palindrome => (range.min, range.max),
            Constraint::NoRepetition => (range.min, range.max.min(vocab_len)),
            Constraint::ForceRepetition => (range.min.max(2), range.max),
            Constraint::NonPalindrome => {
                if vocab_len < 2 {
                    return Err(unsat());
                }
                (range.min.max(2), range.max)
            }
        };
        if lo > hi {
            return Err(unsat());
        }
        Ok((lo, hi))
    }
}

/// Draws one content sequence satisfying `constraint`, with length uniform
/// over the constraint's effective range.
pub fn sample_sequence<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    range: LengthRange,
    constraint: Constraint,
    rng: &mut R,
) -> Result<Vec<TokenId>, DataError> {
    let (lo, hi) = constraint.effective_range(range, vocab.len())?;
    let len = rng.gen_range(lo..=hi);
    let toks = &vocab.tokens;
    let draw = |rng: &mut R| toks[rng.gen_range(0..toks.len())];

    let seq = match constraint {
        Constraint::Any => (0..len).map(|_| draw(rng)).collect(),
        Constraint::NoRepetition => {
            // Partial Fisher-Yates.
            let mut pool = toks.clone();
            for i in 0..len {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(len);
            pool
        }
        Constraint::Palindrome => {
            let half: Vec<TokenId> = (0..len.div_ceil(2)).map(|_| draw(rng)).collect();
            let mut s = half.clone();
            s.extend(half.iter().rev().skip(len % 2));
            s
        }
        Constraint::ForceRepetition => {
            let mut s = Vec::new();
            for _ in 0..REJECTION_ATTEMPTS {
                s = (0..len).map(|_| draw(rng)).collect::<Vec<_>>();
                if has_repetition(&s)? {
                    return Ok(s);
                }
            }
            let i = rng.gen_range(0..len);
            let mut j = rng.gen_range(0..len - 1);
            if j >= i {
                j += 1;
            }
            s[j] = s[i];
            s
        }
        Constraint::NonPalindrome => {
            let mut s = Vec::new();
            for _ in 0..REJECTION_ATTEMPTS {
                s = (0..len).map(|_| draw(rng)).collect::<Vec<_>>();
                if !is_palindrome(&s)? {
                    return Ok(s);
                }
            }
            let i = rng.gen_range(0..len / 2);
            let mirror = len - 1 - i;
            let mut k = rng.gen_range(0..toks.len() - 1);
            if toks[k] == s[i] {
                k = toks.len() - 1;
            }
            s[mirror] = toks[k];
            s
        }
    };
    Ok(seq)
}
