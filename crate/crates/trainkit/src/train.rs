use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vocabflip_core::datagen::derive_seed;
use vocabflip_core::{Dataset, Metrics, Sample, TaskClass, TaskKind};
use vocabflip_tinyformer::{argmax, label_ids, Checkpoint, Tape, TransformerModel};

use crate::adam::{clip_grad_norm, Adam, AdamConfig};
use crate::error::TrainError;
use crate::history::{EpochRecord, History};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub seed: u64,
    /// Denoising epochs run before fine-tuning when a corpus is supplied.
    pub pretrain_epochs: usize,
    /// Ends training after the first epoch whose overall eval accuracy
    /// reaches this value.
    pub stop_at_eval_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 20,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            seed: 0,
            pretrain_epochs: 2,
            stop_at_eval_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if a.epsilon.is_nan() || a.epsilon <= 0.0 {
            return bad("adam epsilon must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// Called after every epoch with the fresh record.
pub trait EpochObserver {
    fn on_epoch(&mut self, record: &EpochRecord);
}

impl<F: FnMut(&EpochRecord)> EpochObserver for F {
    fn on_epoch(&mut self, record: &EpochRecord) {
        self(record)
    }
}

struct Stepper<'a> {
    adam: Adam,
    config: &'a TrainConfig,
    grads: Vec<Vec<f64>>,
    names: Vec<String>,
    dropout_rng: ChaCha8Rng,
}

struct EpochStats {
    loss: f64,
    exact: usize,
    count: usize,
}

impl<'a> Stepper<'a> {
    fn new(model: &TransformerModel, config: &'a TrainConfig, label: &str) -> Self {
        Stepper {
            adam: Adam::new(model.params(), config.adam.clone()),
            config,
            grads: model.params().iter().map(|t| vec![0.0; t.len()]).collect(),
            names: model.param_names().to_vec(),
            dropout_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, label)),
        }
    }

    /// One shuffled pass over `data` with an update per batch.
    fn epoch(
        &mut self,
        model: &mut TransformerModel,
        data: &[Sample],
        shuffle: &mut ChaCha8Rng,
        epoch: usize,
    ) -> Result<EpochStats, TrainError> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(shuffle);
        let vocab = model.config().vocab_size;
        let mut stats = EpochStats {
            loss: 0.0,
            exact: 0,
            count: 0,
        };
        let mut tokens_seen = 0usize;
        for batch in order.chunks(self.config.batch_size) {
            let tokens: usize = batch.iter().map(|&i| data[i].target_tokens.len() + 1).sum();
            let scale = 1.0 / tokens as f64;
            self.grads.iter_mut().for_each(|g| g.fill(0.0));
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = &data[i];
                let mut tape = Tape::new(model.params());
                let (l, logits) = model.loss(
                    &mut tape,
                    &s.input_tokens,
                    &s.target_tokens,
                    scale,
                    Some(&mut self.dropout_rng),
                )?;
                batch_loss += tape.scalar(l);
                let values = tape.value(logits);
                let exact = label_ids(&s.target_tokens)
                    .iter()
                    .enumerate()
                    .all(|(r, &t)| argmax(&values[r * vocab..(r + 1) * vocab]) == t);
                stats.exact += usize::from(exact);
                tape.backward(l)?;
                tape.accumulate_into(&mut self.grads);
            }
            let step = self.adam.steps_taken() + 1;
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step,
                    loss: batch_loss,
                });
            }
            clip_grad_norm(&mut self.grads, self.config.clip_norm);
            self.adam
                .step(model.params_mut(), &self.grads, &self.names)?;
            if let Some(i) = model.params().iter().position(|t| !t.all_finite()) {
                return Err(TrainError::NonFiniteParameter {
                    param: model.param_names()[i].clone(),
                    step,
                });
            }
            stats.loss += batch_loss * tokens as f64;
            tokens_seen += tokens;
            stats.count += batch.len();
        }
        stats.loss /= tokens_seen as f64;
        Ok(stats)
    }
}

/// Denoising passes over `corpus`; returns the mean token loss per epoch.
pub fn pretrain(
    model: &mut TransformerModel,
    corpus: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<f64>, TrainError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyDataset("pretrain"));
    }
    let mut stepper = Stepper::new(model, config, "pretrain-dropout");
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "pretrain-shuffle"));
    let mut losses = Vec::with_capacity(config.pretrain_epochs);
    for epoch in 1..=config.pretrain_epochs {
        losses.push(
            stepper
                .epoch(model, &corpus.samples, &mut shuffle, epoch)?
                .loss,
        );
    }
    Ok(losses)
}

/// Fine-tunes `model` and returns the checkpoint with the lowest eval loss.
pub fn run_training(
    model: TransformerModel,
    train: &Dataset,
    eval: &Dataset,
    config: &TrainConfig,
) -> Result<(Checkpoint, History), TrainError> {
    run_training_with(model, train, eval, config, &mut |_: &EpochRecord| {})
}

pub fn run_training_with(
    mut model: TransformerModel,
    train: &Dataset,
    eval: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn EpochObserver,
) -> Result<(Checkpoint, History), TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset("train"));
    }
    if eval.is_empty() {
        return Err(TrainError::EmptyDataset("eval"));
    }
    let task = task_of(eval)?;
    let mut stepper = Stepper::new(&model, config, "train-dropout");
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "train-shuffle"));
    let mut history = History::default();
    let mut best: Option<Checkpoint> = None;
    for epoch in 1..=config.epochs {
        let stats = stepper.epoch(&mut model, &train.samples, &mut shuffle, epoch)?;
        let m = teacher_forced_metrics(&model, eval, task)?;
        let eval_loss = m.loss.unwrap_or(f64::NAN);
        if !eval_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                step: stepper.adam.steps_taken(),
                loss: eval_loss,
            });
        }
        let record = EpochRecord {
            epoch,
            step: stepper.adam.steps_taken(),
            train_loss: stats.loss,
            train_accuracy: stats.exact as f64 / stats.count as f64,
            eval_loss,
            eval_accuracy: [m.accuracy(TaskClass::C1), m.accuracy(TaskClass::C2)],
        };
        observer.on_epoch(&record);
        if best.as_ref().is_none_or(|b| eval_loss < b.eval_loss) {
            best = Some(Checkpoint {
                model: model.clone(),
                epoch,
                step: record.step,
                eval_loss,
            });
        }
        let done = config
            .stop_at_eval_accuracy
            .is_some_and(|t| record.eval_overall() >= t);
        history.records.push(record);
        if done {
            break;
        }
    }
    let best = best.expect("at least one epoch ran");
    Ok((best, history))
}

fn task_of(data: &Dataset) -> Result<TaskKind, TrainError> {
    match data
        .samples
        .iter()
        .position(|s| s.objective.task().is_none())
    {
        Some(index) => Err(TrainError::Unlabelled { index }),
        None => data.task().ok_or(TrainError::EmptyDataset("labelled")),
    }
}

fn class_of(s: &Sample, index: usize) -> Result<TaskClass, TrainError> {
    s.objective.class().ok_or(TrainError::Unlabelled { index })
}

/// Eval statistics under teacher forcing. A sample counts as correct when the
/// argmax matches the label at every position, EOS included, which is exactly
/// when greedy decoding would reproduce the target.
pub fn teacher_forced_metrics(
    model: &TransformerModel,
    data: &Dataset,
    task: TaskKind,
) -> Result<Metrics, TrainError> {
    let mut m = Metrics::new(task);
    let (mut loss, mut tokens) = (0.0, 0usize);
    for (i, s) in data.samples.iter().enumerate() {
        let class = class_of(s, i)?;
        let tf = model.teacher_forced(&s.input_tokens, &s.target_tokens)?;
        loss += tf.loss_sum;
        tokens += tf.tokens;
        m.record(class, tf.exact);
    }
    m.loss = Some(loss / tokens.max(1) as f64);
    Ok(m)
}

/// Greedy-decodes every sample and scores exact matches per class. The step
/// budget is the dataset's longest content length plus one for EOS.
pub fn evaluate(model: &TransformerModel, data: &Dataset) -> Result<Metrics, TrainError> {
    let task = task_of(data)?;
    let budget = data
        .samples
        .iter()
        .map(|s| s.target_tokens.len())
        .max()
        .unwrap_or(0)
        .max(data.meta.task_spec().map_or(0, |spec| {
            if task.is_seq2seq() {
                spec.lengths.max
            } else {
                1
            }
        }))
        + 1;
    let mut m = teacher_forced_metrics(model, data, task)?;
    m.per_class = Default::default();
    for (i, s) in data.samples.iter().enumerate() {
        let out = model.greedy_decode(&s.input_tokens, budget)?;
        m.record(
            class_of(s, i)?,
            out.terminated && out.ids == s.target_tokens,
        );
    }
    Ok(m)
}
