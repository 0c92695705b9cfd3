use vocabflip_core::datagen::{build_splits, DatasetSpec, Phase, Setting, Sizes, Splits};
use vocabflip_core::{TaskClass, TaskKind};
use vocabflip_tinyformer::{ModelConfig, TransformerModel};
use vocabflip_trainkit::{evaluate, run_training, teacher_forced_metrics, TrainConfig, TrainError};

fn tiny_model(seed: u64) -> TransformerModel {
    let config = ModelConfig {
        enc_layers: 1,
        dec_layers: 1,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        ..ModelConfig::default()
    };
    TransformerModel::new(config, seed).unwrap()
}

fn splits(task: TaskKind, train: usize) -> Splits {
    let mut spec = DatasetSpec::new(task, Setting::ZeroShot, Phase::Train, 5);
    spec.sizes = Sizes {
        train,
        eval: 40,
        test: 40,
    };
    build_splits(&spec).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    let mut c = TrainConfig {
        epochs,
        seed: 3,
        ..TrainConfig::default()
    };
    c.adam.learning_rate = 3e-3;
    c.adam.warmup_steps = 10;
    c
}

#[test]
fn same_seed_same_history_and_weights() {
    let s = splits(TaskKind::PalindromeDetection, 64);
    let a = run_training(tiny_model(1), &s.train, &s.eval, &quick(2)).unwrap();
    let b = run_training(tiny_model(1), &s.train, &s.eval, &quick(2)).unwrap();
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.model.params(), b.0.model.params());
    assert_eq!(a.1.records.len(), 2);
    assert_eq!(a.1.records[1].step, 8);
}

#[test]
fn checkpoint_carries_minimum_eval_loss() {
    let s = splits(TaskKind::CopyReverseSeq2Seq, 96);
    let (ck, h) = run_training(tiny_model(2), &s.train, &s.eval, &quick(4)).unwrap();
    let min = h
        .records
        .iter()
        .map(|r| r.eval_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(ck.eval_loss, min);
    assert_eq!(h.best().unwrap().epoch, ck.epoch);
    let again = teacher_forced_metrics(&ck.model, &s.eval, TaskKind::CopyReverseSeq2Seq).unwrap();
    assert_eq!(again.loss, Some(ck.eval_loss));
}

/// Greedy exact match and the teacher-forced argmax criterion agree sample by sample.
#[test]
fn greedy_and_teacher_forced_scoring_agree() {
    let s = splits(TaskKind::CopyReverseSeq2Seq, 160);
    let (ck, _) = run_training(tiny_model(4), &s.train, &s.eval, &quick(6)).unwrap();
    let mut agreed = 0;
    for sample in s.test.samples.iter().chain(&s.eval.samples) {
        let tf = ck
            .model
            .teacher_forced(&sample.input_tokens, &sample.target_tokens)
            .unwrap();
        let out = ck.model.greedy_decode(&sample.input_tokens, 11).unwrap();
        let greedy_ok = out.terminated && out.ids == sample.target_tokens;
        assert_eq!(tf.exact, greedy_ok, "{sample:?} -> {out:?}");
        agreed += usize::from(greedy_ok);
    }
    let m = evaluate(&ck.model, &s.eval).unwrap();
    let tf = teacher_forced_metrics(&ck.model, &s.eval, TaskKind::CopyReverseSeq2Seq).unwrap();
    assert_eq!(m.per_class, tf.per_class);
    assert!(agreed <= 80);
}

#[test]
fn evaluate_counts_half_per_class() {
    let s = splits(TaskKind::RepetitionDetection, 32);
    let m = evaluate(&tiny_model(0), &s.test).unwrap();
    assert_eq!(m.per_class[0].total, 20);
    assert_eq!(m.per_class[1].total, 20);
    for c in TaskClass::BOTH {
        assert!((0.0..=1.0).contains(&m.accuracy(c)));
    }
}

#[test]
fn non_finite_parameters_abort() {
    let s = splits(TaskKind::PalindromeDetection, 32);
    let mut m = tiny_model(0);
    m.params_mut()[0].data_mut()[9 * 16] = f64::NAN;
    let err = run_training(m, &s.train, &s.eval, &quick(1)).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteLoss { .. }), "{err}");
}

#[test]
fn invalid_config_rejected() {
    let s = splits(TaskKind::PalindromeDetection, 32);
    let c = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(
        run_training(tiny_model(0), &s.train, &s.eval, &c),
        Err(TrainError::Config(_))
    ));
}
