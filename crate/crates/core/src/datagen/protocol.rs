//! Vocabulary assignment for the zero-shot and vocabulary-flip settings.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::tasks::TaskClass;
use crate::token::VocabName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Train,
    Eval,
    Test,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Train, Phase::Eval, Phase::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
            Phase::Test => "test",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Phase::Train),
            "eval" => Ok(Phase::Eval),
            "test" => Ok(Phase::Test),
            other => Err(DataError::InvalidSpec(format!("unknown phase {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Setting {
    ZeroShot,
    VocabFlip { mix_ratio: f64 },
}

impl Setting {
    pub fn flip(mix_ratio: f64) -> Result<Self, DataError> {
        if !(0.0..=1.0).contains(&mix_ratio) {
            return Err(DataError::InvalidSpec(format!(
                "mix ratio {mix_ratio} outside [0, 1]"
            )));
        }
        Ok(Setting::VocabFlip { mix_ratio })
    }

    pub fn mix_ratio(&self) -> Option<f64> {
        match self {
            Setting::ZeroShot => None,
            Setting::VocabFlip { mix_ratio } => Some(*mix_ratio),
        }
    }

    pub fn is_zero_shot(&self) -> bool {
        matches!(self, Setting::ZeroShot)
    }
}

/// `zero-shot` or `flip-<mix>` with the mix printed in shortest round-trip form.
impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::ZeroShot => f.write_str("zero-shot"),
            Setting::VocabFlip { mix_ratio } => write!(f, "flip-{mix_ratio}"),
        }
    }
}

impl FromStr for Setting {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if matches!(s, "zero-shot" | "zero_shot" | "zeroshot") {
            return Ok(Setting::ZeroShot);
        }
        let mix = s
            .strip_prefix("flip-")
            .or_else(|| s.strip_prefix("flip:"))
            .ok_or_else(|| DataError::InvalidSpec(format!("unknown setting {s:?}")))?;
        let mix: f64 = mix
            .parse()
            .map_err(|_| DataError::InvalidSpec(format!("bad mix ratio in {s:?}")))?;
        Setting::flip(mix)
    }
}

/// Which vocabulary a sample of class `klass` draws its content from.
pub fn assign_vocabulary(setting: &Setting, phase: Phase, klass: TaskClass) -> VocabName {
    match (setting, phase) {
        (Setting::ZeroShot, Phase::Test) => VocabName::V2,
        (Setting::ZeroShot, _) => VocabName::V1,
        (Setting::VocabFlip { .. }, phase) => {
            let paired = match klass {
                TaskClass::C1 => VocabName::V1,
                TaskClass::C2 => VocabName::V2,
            };
            if phase == Phase::Test {
                paired.flipped()
            } else {
                paired
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabAssignment {
    pub vocab: VocabName,
    pub mixed: bool,
}

impl VocabAssignment {
    pub fn new(vocab: VocabName) -> Self {
        VocabAssignment {
            vocab,
            mixed: false,
        }
    }
}

/// Swaps the assignment to the opposite vocabulary with probability
/// `mix_ratio`. Always consumes exactly one uniform draw.
pub fn apply_mix<R: Rng + ?Sized>(
    assignment: VocabAssignment,
    phase: Phase,
    mix_ratio: f64,
    rng: &mut R,
) -> Result<VocabAssignment, DataError> {
    if phase == Phase::Test {
        return Err(DataError::MixOnTest);
    }
    if !(0.0..=1.0).contains(&mix_ratio) {
        return Err(DataError::InvalidSpec(format!(
            "mix ratio {mix_ratio} outside [0, 1]"
        )));
    }
    let u: f64 = rng.gen();
    Ok(if u < mix_ratio {
        VocabAssignment {
            vocab: assignment.vocab.flipped(),
            mixed: true,
        }
    } else {
        assignment
    })
}
