//! Deterministic dataset generation for the four tasks under both settings.

mod io;
mod protocol;
mod sampler;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use io::{read_dataset, write_dataset, DATASET_MAGIC};
pub use protocol::{apply_mix, assign_vocabulary, Phase, Setting, VocabAssignment};
pub use sampler::{sample_sequence, Constraint, LengthRange, REJECTION_ATTEMPTS};

use crate::error::DataError;
use crate::tasks::{gold_label, reverse_seq, SequencePair, TaskClass, TaskInput, TaskKind};
use crate::token::{special, TokenId, TokenKind, TokenTable, VocabName, Vocabulary};

/// What a sample is for: one of the four tasks, or denoising pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    Task { kind: TaskKind, class: TaskClass },
    Denoise,
}

impl Objective {
    pub fn task(&self) -> Option<TaskKind> {
        match self {
            Objective::Task { kind, .. } => Some(*kind),
            Objective::Denoise => None,
        }
    }

    pub fn class(&self) -> Option<TaskClass> {
        match self {
            Objective::Task { class, .. } => Some(*class),
            Objective::Denoise => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sample {
    pub input_tokens: Vec<TokenId>,
    pub target_tokens: Vec<TokenId>,
    pub objective: Objective,
    pub source_vocab: VocabName,
    pub mixed: bool,
}

impl Sample {
    /// Input tokens drawn from a content vocabulary (prefixes, separators and
    /// sentinels removed).
    pub fn content_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        let table = TokenTable::standard();
        self.input_tokens
            .iter()
            .copied()
            .filter(move |t| table.kind(*t) != Some(TokenKind::Special))
    }

    /// Reconstructs the oracle input for this sample.
    pub fn task_input(&self) -> Result<OwnedTaskInput, DataError> {
        let kind = self
            .objective
            .task()
            .ok_or_else(|| DataError::InvalidSpec("denoising samples have no task label".into()))?;
        let malformed = || DataError::InvalidSpec(format!("malformed {kind} sample"));
        Ok(match kind {
            TaskKind::CopyReverseSeq2Seq => {
                let (prefix, source) = self.input_tokens.split_first().ok_or_else(malformed)?;
                if *prefix != special::COPY && *prefix != special::REVERSE {
                    return Err(malformed());
                }
                OwnedTaskInput::Pair(SequencePair::new(
                    source.to_vec(),
                    self.target_tokens.clone(),
                )?)
            }
            TaskKind::CopyReverseDetection => {
                let at = self
                    .input_tokens
                    .iter()
                    .position(|t| *t == special::SEP)
                    .ok_or_else(malformed)?;
                OwnedTaskInput::Pair(SequencePair::new(
                    self.input_tokens[..at].to_vec(),
                    self.input_tokens[at + 1..].to_vec(),
                )?)
            }
            _ => OwnedTaskInput::Sequence(self.input_tokens.clone()),
        })
    }

    /// Checks the label against the oracle, the target/marker encoding and
    /// single-vocabulary content.
    pub fn verify(&self, v1: &Vocabulary, v2: &Vocabulary) -> Result<(), DataError> {
        let vocab = match self.source_vocab {
            VocabName::V1 => v1,
            VocabName::V2 => v2,
        };
        if let Some(t) = self.content_tokens().find(|t| !vocab.contains(*t)) {
            return Err(DataError::InvalidSpec(format!(
                "content token {} outside {}",
                TokenTable::standard().surface(t),
                self.source_vocab
            )));
        }
        match self.objective {
            Objective::Denoise => Ok(()),
            Objective::Task { kind, class } => {
                let label = self.task_input()?.gold_label(kind)?;
                if label != class {
                    return Err(DataError::InvalidSpec(format!(
                        "{kind} sample labeled {class} but oracle says {label}"
                    )));
                }
                let marker = class.marker(kind);
                let ok = if kind.is_seq2seq() {
                    self.input_tokens.first() == Some(&marker)
                } else {
                    self.target_tokens == [marker]
                };
                if ok {
                    Ok(())
                } else {
                    Err(DataError::InvalidSpec(format!(
                        "{kind} sample does not carry marker for {class}"
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OwnedTaskInput {
    Sequence(Vec<TokenId>),
    Pair(SequencePair),
}

impl OwnedTaskInput {
    pub fn as_input(&self) -> TaskInput<'_> {
        match self {
            OwnedTaskInput::Sequence(s) => TaskInput::Sequence(s),
            OwnedTaskInput::Pair(p) => TaskInput::Pair(p),
        }
    }

    pub fn gold_label(&self, kind: TaskKind) -> Result<TaskClass, crate::error::TaskError> {
        gold_label(kind, self.as_input())
    }
}

/// Builds one sample of `klass` for `kind` with content from `vocab`.
pub fn make_sample<R: Rng + ?Sized>(
    kind: TaskKind,
    klass: TaskClass,
    vocab: &Vocabulary,
    lengths: LengthRange,
    rng: &mut R,
) -> Result<Sample, DataError> {
    let marker = klass.marker(kind);
    let (input, target) = match kind {
        TaskKind::CopyReverseSeq2Seq => {
            let s = sample_sequence(vocab, lengths, Constraint::NonPalindrome, rng)?;
            let target = match klass {
                TaskClass::C1 => s.clone(),
                TaskClass::C2 => reverse_seq(&s),
            };
            let mut input = Vec::with_capacity(s.len() + 1);
            input.push(marker);
            input.extend(s);
            (input, target)
        }
        TaskKind::CopyReverseDetection => {
            let s = sample_sequence(vocab, lengths, Constraint::NonPalindrome, rng)?;
            let right = match klass {
                TaskClass::C1 => s.clone(),
                TaskClass::C2 => reverse_seq(&s),
            };
            let mut input = s;
            input.push(special::SEP);
            input.extend(right);
            (input, vec![marker])
        }
        TaskKind::PalindromeDetection => {
            let c = match klass {
                TaskClass::C1 => Constraint::Palindrome,
                TaskClass::C2 => Constraint::NonPalindrome,
            };
            (sample_sequence(vocab, lengths, c, rng)?, vec![marker])
        }
        TaskKind::RepetitionDetection => {
            let c = match klass {
                TaskClass::C1 => Constraint::ForceRepetition,
                TaskClass::C2 => Constraint::NoRepetition,
            };
            (sample_sequence(vocab, lengths, c, rng)?, vec![marker])
        }
    };
    Ok(Sample {
        input_tokens: input,
        target_tokens: target,
        objective: Objective::Task { kind, class: klass },
        source_vocab: vocab.name,
        mixed: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sizes {
    pub train: usize,
    pub eval: usize,
    pub test: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes {
            train: 8000,
            eval: 2000,
            test: 10000,
        }
    }
}

impl Sizes {
    pub fn of(&self, phase: Phase) -> usize {
        match phase {
            Phase::Train => self.train,
            Phase::Eval => self.eval,
            Phase::Test => self.test,
        }
    }
}

/// Full recipe for one phase of one task/setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub task: TaskKind,
    pub setting: Setting,
    pub phase: Phase,
    pub sizes: Sizes,
    pub lengths: LengthRange,
    pub vocab_v1: Vocabulary,
    pub vocab_v2: Vocabulary,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(task: TaskKind, setting: Setting, phase: Phase, seed: u64) -> Self {
        DatasetSpec {
            task,
            setting,
            phase,
            sizes: Sizes::default(),
            lengths: LengthRange::default(),
            vocab_v1: Vocabulary::v1(),
            vocab_v2: Vocabulary::v2(),
            seed,
        }
    }

    pub fn with_phase(&self, phase: Phase) -> Self {
        DatasetSpec {
            phase,
            ..self.clone()
        }
    }

    pub fn vocab(&self, name: VocabName) -> &Vocabulary {
        match name {
            VocabName::V1 => &self.vocab_v1,
            VocabName::V2 => &self.vocab_v2,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for phase in Phase::ALL {
            let n = self.sizes.of(phase);
            if n == 0 || !n.is_multiple_of(2) {
                return Err(DataError::InvalidSpec(format!(
                    "{phase} size {n} must be positive and even for a 50/50 class split"
                )));
            }
        }
        LengthRange::new(self.lengths.min, self.lengths.max)?;
        if self
            .vocab_v1
            .tokens
            .iter()
            .any(|t| self.vocab_v2.contains(*t))
        {
            return Err(DataError::InvalidSpec("V1 and V2 overlap".into()));
        }
        if self.vocab_v1.name != VocabName::V1 || self.vocab_v2.name != VocabName::V2 {
            return Err(DataError::InvalidSpec(
                "vocabulary names out of order".into(),
            ));
        }
        let table = TokenTable::standard();
        for t in self.vocab_v1.tokens.iter().chain(&self.vocab_v2.tokens) {
            if table.kind(*t).is_none_or(|k| k == TokenKind::Special) {
                return Err(DataError::InvalidSpec(format!(
                    "token id {} is not a content token",
                    t.0
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the denoising pretraining corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSpec {
    pub size: usize,
    pub lengths: LengthRange,
    pub corruption_rate: f64,
    pub vocab_v1: Vocabulary,
    pub vocab_v2: Vocabulary,
    pub seed: u64,
}

impl PretrainSpec {
    pub fn new(seed: u64) -> Self {
        PretrainSpec {
            size: 10_000,
            lengths: LengthRange::default(),
            corruption_rate: 0.15,
            vocab_v1: Vocabulary::v1(),
            vocab_v2: Vocabulary::v2(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetMeta {
    Task(DatasetSpec),
    Pretrain(PretrainSpec),
}

impl DatasetMeta {
    pub fn seed(&self) -> u64 {
        match self {
            DatasetMeta::Task(s) => s.seed,
            DatasetMeta::Pretrain(p) => p.seed,
        }
    }

    pub fn vocabs(&self) -> (&Vocabulary, &Vocabulary) {
        match self {
            DatasetMeta::Task(s) => (&s.vocab_v1, &s.vocab_v2),
            DatasetMeta::Pretrain(p) => (&p.vocab_v1, &p.vocab_v2),
        }
    }

    pub fn task_spec(&self) -> Option<&DatasetSpec> {
        match self {
            DatasetMeta::Task(s) => Some(s),
            DatasetMeta::Pretrain(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub samples: Vec<Sample>,
    pub fingerprint: String,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, samples: Vec<Sample>) -> Self {
        let fingerprint = io::fingerprint(&meta, &samples);
        Dataset {
            meta,
            samples,
            fingerprint,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn task(&self) -> Option<TaskKind> {
        self.meta.task_spec().map(|s| s.task)
    }

    /// Runs [`Sample::verify`] over every sample.
    pub fn verify(&self) -> Result<(), DataError> {
        let (v1, v2) = self.meta.vocabs();
        for (i, s) in self.samples.iter().enumerate() {
            s.verify(v1, v2)
                .map_err(|e| DataError::InvalidSpec(format!("sample {i}: {e}")))?;
        }
        Ok(())
    }

    /// Fails if the samples no longer hash to the stored fingerprint.
    pub fn check_fingerprint(&self) -> Result<(), DataError> {
        let actual = io::fingerprint(&self.meta, &self.samples);
        if actual != self.fingerprint {
            return Err(DataError::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                actual,
            });
        }
        Ok(())
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for s in &self.samples {
            if let Some(k) = s.objective.class() {
                c[k.index()] += 1;
            }
        }
        c
    }
}

/// Independent stream per (seed, label), stable across platforms.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub eval: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn get(&self, phase: Phase) -> &Dataset {
        match phase {
            Phase::Train => &self.train,
            Phase::Eval => &self.eval,
            Phase::Test => &self.test,
        }
    }
}

/// Generates `per_class` unique-input samples of each class, interleaving
/// classes so both share one random stream. The vocabulary swap is drawn once
/// per sample, before any duplicate retries.
fn generate_pool(
    spec: &DatasetSpec,
    pool_phase: Phase,
    per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<[Vec<Sample>; 2], DataError> {
    let mut seen: HashSet<Vec<TokenId>> = HashSet::with_capacity(per_class * 2);
    let mut by_class: [Vec<Sample>; 2] =
        [Vec::with_capacity(per_class), Vec::with_capacity(per_class)];
    let max_attempts = 50 * per_class * 2 + 10_000;
    let mut attempts = 0usize;
    while by_class.iter().any(|v| v.len() < per_class) {
        for klass in TaskClass::BOTH {
            if by_class[klass.index()].len() >= per_class {
                continue;
            }
            let mut assignment =
                VocabAssignment::new(assign_vocabulary(&spec.setting, pool_phase, klass));
            if let (Some(mix), false) = (spec.setting.mix_ratio(), pool_phase == Phase::Test) {
                assignment = apply_mix(assignment, pool_phase, mix, rng)?;
            }
            let vocab = spec.vocab(assignment.vocab);
            loop {
                attempts += 1;
                if attempts > max_attempts {
                    return Err(DataError::Exhausted {
                        wanted: per_class * 2,
                        attempts: max_attempts,
                    });
                }
                let mut sample = make_sample(spec.task, klass, vocab, spec.lengths, rng)?;
                sample.mixed = assignment.mixed;
                if seen.insert(sample.input_tokens.clone()) {
                    by_class[klass.index()].push(sample);
                    break;
                }
            }
        }
    }
    Ok(by_class)
}

fn pool_label(spec: &DatasetSpec, pool: &str) -> String {
    format!(
        "{}|{}|{}|{}|{}|{}|{}|{}",
        spec.task,
        spec.setting,
        pool,
        spec.sizes.train,
        spec.sizes.eval,
        spec.lengths,
        spec.vocab_v1.letters(),
        spec.vocab_v2.letters()
    )
}

/// Builds train, eval and test for `spec` (its `phase` is ignored).
///
/// Train and eval are a stratified 80/20-style split of one deduplicated pool,
/// so they never share an input string.
pub fn build_splits(spec: &DatasetSpec) -> Result<Splits, DataError> {
    spec.validate()?;
    let (train, eval) = build_train_eval(spec)?;
    let test = build_test(spec)?;
    Ok(Splits { train, eval, test })
}

fn build_train_eval(spec: &DatasetSpec) -> Result<(Dataset, Dataset), DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &pool_label(spec, "pool")));
    let (tr, ev) = (spec.sizes.train / 2, spec.sizes.eval / 2);
    let pool = generate_pool(spec, Phase::Train, tr + ev, &mut rng)?;
    let mut train = Vec::with_capacity(spec.sizes.train);
    let mut eval = Vec::with_capacity(spec.sizes.eval);
    for class_samples in pool {
        let mut it = class_samples.into_iter();
        train.extend(it.by_ref().take(tr));
        eval.extend(it);
    }
    train.shuffle(&mut rng);
    eval.shuffle(&mut rng);
    Ok((
        Dataset::new(DatasetMeta::Task(spec.with_phase(Phase::Train)), train),
        Dataset::new(DatasetMeta::Task(spec.with_phase(Phase::Eval)), eval),
    ))
}

fn build_test(spec: &DatasetSpec) -> Result<Dataset, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &pool_label(spec, "test")));
    let [c1, c2] = generate_pool(spec, Phase::Test, spec.sizes.test / 2, &mut rng)?;
    let mut samples = c1;
    samples.extend(c2);
    samples.shuffle(&mut rng);
    Ok(Dataset::new(
        DatasetMeta::Task(spec.with_phase(Phase::Test)),
        samples,
    ))
}

/// Builds the dataset for `spec.phase`.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    match spec.phase {
        Phase::Train => Ok(build_train_eval(spec)?.0),
        Phase::Eval => Ok(build_train_eval(spec)?.1),
        Phase::Test => build_test(spec),
    }
}

/// Random single-vocabulary sequences whose inputs have each token
/// independently replaced by the sentinel with probability `corruption_rate`.
pub fn build_pretrain_corpus(spec: &PretrainSpec) -> Result<Dataset, DataError> {
    if !(0.0..1.0).contains(&spec.corruption_rate) {
        return Err(DataError::InvalidSpec(format!(
            "corruption rate {} outside [0, 1)",
            spec.corruption_rate
        )));
    }
    LengthRange::new(spec.lengths.min, spec.lengths.max)?;
    let label = format!(
        "pretrain|{}|{}|{}|{}|{}",
        spec.size,
        spec.lengths,
        spec.corruption_rate,
        spec.vocab_v1.letters(),
        spec.vocab_v2.letters()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &label));
    let mut samples = Vec::with_capacity(spec.size);
    for _ in 0..spec.size {
        let vocab = if rng.gen_bool(0.5) {
            &spec.vocab_v1
        } else {
            &spec.vocab_v2
        };
        let target = sample_sequence(vocab, spec.lengths, Constraint::Any, &mut rng)?;
        let input = target
            .iter()
            .map(|&t| {
                if rng.gen::<f64>() < spec.corruption_rate {
                    special::MASK
                } else {
                    t
                }
            })
            .collect();
        samples.push(Sample {
            input_tokens: input,
            target_tokens: target,
            objective: Objective::Denoise,
            source_vocab: vocab.name,
            mixed: false,
        });
    }
    Ok(Dataset::new(DatasetMeta::Pretrain(spec.clone()), samples))
}
