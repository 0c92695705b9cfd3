//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Pass criterion numbers as arguments to run a subset.

#![allow(clippy::too_many_arguments, clippy::needless_range_loop)]

use std::collections::{BTreeSet, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use vocabflip_core::baselines::{evaluate_classifier, fit_baseline, BaselineKind};
use vocabflip_core::datagen::{
    apply_mix, assign_vocabulary, build_pretrain_corpus, build_splits, derive_seed, DatasetSpec,
    Phase, Setting, Sizes, VocabAssignment,
};
use vocabflip_core::tasks::{
    enumerate_sequences, gold_label, SequencePair, TaskInput, DEFAULT_ENUMERATION_CAP,
};
use vocabflip_core::{
    Dataset, TaskClass, TaskError, TaskKind, TokenId, TokenTable, VocabName, Vocabulary,
};
use vocabflip_runner::grid::{model_seed, pretrain_spec};
use vocabflip_runner::{
    build_report, load_store, render, run_grid, ExperimentGrid, ReportFormat, ReportOptions,
    RunOptions, Runner,
};
use vocabflip_tinyformer::{attention, Mask, ModelConfig, Tape, Tensor, TransformerModel};
use vocabflip_trainkit::{evaluate, pretrain, run_training_with, EpochRecord, TrainConfig};

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const SETTINGS: [&str; 4] = ["zero-shot", "flip-0", "flip-0.01", "flip-0.1"];

fn setting(s: &str) -> Setting {
    s.parse().expect("valid setting")
}

fn splits(task: TaskKind, s: Setting, sizes: Sizes, seed: u64) -> Result<[Dataset; 3], String> {
    let mut spec = DatasetSpec::new(task, s, Phase::Train, seed);
    spec.sizes = sizes;
    let sp = build_splits(&spec).map_err(|e| format!("{task}/{s}: {e}"))?;
    Ok([sp.train, sp.eval, sp.test])
}

fn is_pal(s: &[TokenId]) -> bool {
    (0..s.len()).all(|i| s[i] == s[s.len() - 1 - i])
}

// 1. Generator soundness.
fn generator_soundness() -> Outcome {
    let start = Instant::now();
    let sizes = Sizes {
        train: 16_000,
        eval: 4_000,
        test: 20_000,
    };
    let mut checked = 0;
    for task in TaskKind::ALL {
        for name in SETTINGS {
            let data = splits(task, setting(name), sizes, 0)?;
            let mut pool = [0usize; 2];
            let mut test = [0usize; 2];
            for (i, d) in data.iter().enumerate() {
                d.verify().map_err(|e| format!("{task}/{name}: {e}"))?;
                let counts = d.class_counts();
                check(counts[0] == counts[1], || {
                    format!("{task}/{name}: unbalanced {counts:?}")
                })?;
                let into = if i == 2 { &mut test } else { &mut pool };
                into[0] += counts[0];
                into[1] += counts[1];
                if task.takes_pair() {
                    for s in &d.samples {
                        let input = s.task_input().map_err(|e| e.to_string())?;
                        let source = match &input {
                            vocabflip_core::datagen::OwnedTaskInput::Pair(p) => &p.left,
                            _ => return Err("pair task without pair input".into()),
                        };
                        check(!is_pal(source), || {
                            format!("{task}/{name}: palindromic source")
                        })?;
                    }
                }
                checked += d.len();
            }
            check(pool == [10_000; 2] && test == [10_000; 2], || {
                format!("{task}/{name}: per-class counts {pool:?} {test:?}")
            })?;
        }
    }
    let t = start.elapsed();
    check(t < Duration::from_secs(60), || format!("took {t:.1?}"))?;
    Ok(format!(
        "{checked} samples over 4 tasks x 4 settings verified, 10000 per class per phase group, 50/50, {t:.1?}"
    ))
}

fn content_vocab(d: &Dataset) -> BTreeSet<TokenId> {
    d.samples.iter().flat_map(|s| s.content_tokens()).collect()
}

// 2. Protocol correctness.
fn protocol_correctness() -> Outcome {
    let sizes = Sizes {
        train: 8_000,
        eval: 2_000,
        test: 2_000,
    };
    for task in TaskKind::ALL {
        let [train, eval, test] = splits(task, Setting::ZeroShot, sizes, 1)?;
        let mut seen = content_vocab(&train);
        seen.extend(content_vocab(&eval));
        let unseen = content_vocab(&test);
        check(seen.is_disjoint(&unseen), || {
            format!("{task}: zero-shot vocabularies overlap")
        })?;
        check(
            seen.iter().all(|t| Vocabulary::v1().contains(*t))
                && unseen.iter().all(|t| Vocabulary::v2().contains(*t)),
            || format!("{task}: zero-shot vocabularies are not V1 then V2"),
        )?;
    }
    for task in TaskKind::ALL {
        for name in ["flip-0", "flip-0.1"] {
            let s = setting(name);
            let [train, eval, test] = splits(task, s, sizes, 1)?;
            for c in TaskClass::BOTH {
                let paired = assign_vocabulary(&s, Phase::Train, c);
                check(
                    assign_vocabulary(&s, Phase::Test, c) == paired.flipped(),
                    || format!("{task}/{name}: test assignment is not the swap for {c}"),
                )?;
                for d in [&train, &eval] {
                    for smp in d.samples.iter().filter(|x| x.objective.class() == Some(c)) {
                        let want = if smp.mixed { paired.flipped() } else { paired };
                        check(smp.source_vocab == want, || {
                            format!("{task}/{name}: train vocabulary for {c}")
                        })?;
                    }
                }
                for smp in test
                    .samples
                    .iter()
                    .filter(|x| x.objective.class() == Some(c))
                {
                    check(smp.source_vocab == paired.flipped() && !smp.mixed, || {
                        format!("{task}/{name}: test sample of {c} not flipped")
                    })?;
                }
            }
            let mixed = train
                .samples
                .iter()
                .chain(&eval.samples)
                .filter(|x| x.mixed)
                .count();
            match name {
                "flip-0" => check(mixed == 0, || format!("{task}: {mixed} swaps at mix=0"))?,
                _ => check((900..=1100).contains(&mixed), || {
                    format!("{task}: {mixed} swaps of 10000 at mix=0.1")
                })?,
            }
        }
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
    let draws = |mix: f64, rng: &mut rand_chacha::ChaCha8Rng| {
        (0..10_000)
            .filter(|_| {
                apply_mix(VocabAssignment::new(VocabName::V1), Phase::Train, mix, rng)
                    .map(|a| a.mixed)
                    .unwrap_or(false)
            })
            .count()
    };
    let (zero, tenth) = (draws(0.0, &mut rng), draws(0.1, &mut rng));
    check(zero == 0 && (900..=1100).contains(&tenth), || {
        format!("apply_mix swaps {zero}, {tenth}")
    })?;
    Ok(format!(
        "zero-shot V1/V2 disjoint for all tasks; flip test = swap of train; mix=0.1 sampler swaps {tenth}/10000, mix=0 swaps 0"
    ))
}

// 3. Oracle equivalence.
fn oracle_equivalence() -> Outcome {
    let five = Vocabulary::from_letters(VocabName::V1, "abcde").map_err(|e| e.to_string())?;
    let all: Vec<Vec<TokenId>> = enumerate_sequences(&five, 4, DEFAULT_ENUMERATION_CAP)
        .map_err(|e| e.to_string())?
        .collect();
    let distinct: HashSet<&Vec<TokenId>> = all.iter().collect();
    check(all.len() == 780 && distinct.len() == 780, || {
        format!("enumerated {} sequences", all.len())
    })?;
    let class = |b: bool| if b { TaskClass::C1 } else { TaskClass::C2 };
    for s in &all {
        let pal = (0..s.len()).all(|i| s[i] == s[s.len() - 1 - i]);
        let rep = (0..s.len()).any(|i| (i + 1..s.len()).any(|j| s[i] == s[j]));
        let got_p = gold_label(TaskKind::PalindromeDetection, TaskInput::Sequence(s))
            .map_err(|e| e.to_string())?;
        let got_r = gold_label(TaskKind::RepetitionDetection, TaskInput::Sequence(s))
            .map_err(|e| e.to_string())?;
        check(got_p == class(pal) && got_r == class(rep), || {
            format!("sequence {s:?}")
        })?;
    }
    let mut pairs = 0usize;
    for a in &all {
        let pal = (0..a.len()).all(|i| a[i] == a[a.len() - 1 - i]);
        let rev: Vec<TokenId> = a.iter().rev().copied().collect();
        for b in &all {
            let p = SequencePair::new(a.clone(), b.clone()).map_err(|e| e.to_string())?;
            for kind in [TaskKind::CopyReverseDetection, TaskKind::CopyReverseSeq2Seq] {
                let got = gold_label(kind, TaskInput::Pair(&p));
                let ok = match got {
                    Err(TaskError::AmbiguousPalindrome { .. }) => pal,
                    Ok(TaskClass::C1) => !pal && a == b,
                    Ok(TaskClass::C2) => !pal && &rev == b && a != b,
                    Err(TaskError::NotCopyOrReverse) => !pal && a != b && &rev != b,
                    Err(_) => false,
                };
                check(ok, || format!("{kind} on ({a:?}, {b:?}) gave {got:?}"))?;
            }
            pairs += 1;
        }
    }
    let ten = Vocabulary::v1();
    let len3: Vec<Vec<TokenId>> = enumerate_sequences(&ten, 3, DEFAULT_ENUMERATION_CAP)
        .map_err(|e| e.to_string())?
        .filter(|s| s.len() == 3)
        .collect();
    let count = |k: TaskKind| {
        len3.iter()
            .filter(|s| gold_label(k, TaskInput::Sequence(s)) == Ok(TaskClass::C1))
            .count()
    };
    let (p3, r3) = (
        count(TaskKind::PalindromeDetection),
        count(TaskKind::RepetitionDetection),
    );
    check(len3.len() == 1000 && p3 == 100 && r3 == 280, || {
        format!("length-3 counts {p3}, {r3}")
    })?;
    Ok(format!(
        "780 sequences and {pairs} pairs agree with brute force for all 4 tasks; length-3 palindromes {p3}, repetitions {r3}"
    ))
}

fn loss_and_grads(
    model: &TransformerModel,
    pairs: &[(Vec<TokenId>, Vec<TokenId>)],
) -> Result<(f64, Vec<Vec<f64>>), String> {
    let mut grads: Vec<Vec<f64>> = model.params().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut total = 0.0;
    for (src, tgt) in pairs {
        let mut tape = Tape::new(model.params());
        let (l, _) = model
            .loss(&mut tape, src, tgt, 0.25, None)
            .map_err(|e| e.to_string())?;
        total += tape.scalar(l);
        tape.backward(l).map_err(|e| e.to_string())?;
        tape.accumulate_into(&mut grads);
    }
    Ok((total, grads))
}

fn naive_attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    n: usize,
    m: usize,
    d: usize,
    heads: usize,
    mask: &Mask,
) -> Vec<f64> {
    let dh = d / heads;
    let mut out = vec![0.0; n * d];
    for h in 0..heads {
        for i in 0..n {
            let scores: Vec<Option<f64>> = (0..m)
                .map(|j| {
                    mask.is_visible(i, j).then(|| {
                        (0..dh)
                            .map(|c| q[i * d + h * dh + c] * k[j * d + h * dh + c])
                            .sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                })
                .collect();
            let max = scores
                .iter()
                .flatten()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().flatten().map(|x| (x - max).exp()).sum();
            for (j, s) in scores.iter().enumerate() {
                if let Some(s) = s {
                    let a = (s - max).exp() / z;
                    for c in 0..dh {
                        out[i * d + h * dh + c] += a * v[j * d + h * dh + c];
                    }
                }
            }
        }
    }
    out
}

const ZERO_GRAD: f64 = 1e-8;

// 4. Numeric core.
fn numeric_core() -> Outcome {
    let table = TokenTable::standard();
    let parse = |s: &str| table.parse(s).expect("valid tokens");
    let config = ModelConfig {
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut model = TransformerModel::new(config.clone(), 3).map_err(|e| e.to_string())?;
    for (i, t) in model.params_mut().iter_mut().enumerate() {
        for (j, x) in t.data_mut().iter_mut().enumerate() {
            *x += 0.05 * ((i * 29 + j * 5) as f64).sin();
        }
    }
    let pairs = vec![
        (parse("copy: a c d b"), parse("a c d b")),
        (parse("m n o"), parse("0")),
    ];
    let (_, analytic) = loss_and_grads(&model, &pairs)?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut zero_blocks = 0;
    for p in 0..model.params().len() {
        let n = model.params()[p].len();
        let picks: BTreeSet<usize> = (0..8).map(|s| (s * 104_729 + p * 17) % n).collect();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for &j in &picks {
            let orig = model.params()[p].data()[j];
            model.params_mut()[p].data_mut()[j] = orig + h;
            let up = loss_and_grads(&model, &pairs)?.0;
            model.params_mut()[p].data_mut()[j] = orig - h;
            let down = loss_and_grads(&model, &pairs)?.0;
            model.params_mut()[p].data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * h);
            num += (fd - analytic[p][j]).powi(2);
            den += fd.powi(2) + analytic[p][j].powi(2);
        }
        // Key biases shift every score in a row equally, so their true gradient
        // is zero and only differencing noise remains.
        if den.sqrt() < ZERO_GRAD {
            zero_blocks += 1;
            check(num.sqrt() < ZERO_GRAD, || {
                format!("{}: zero-gradient mismatch", model.param_names()[p])
            })?;
            continue;
        }
        let rel = num.sqrt() / den.sqrt();
        worst = worst.max(rel);
        check(rel < 1e-4, || {
            format!(
                "{}: gradient relative error {rel:.2e}",
                model.param_names()[p]
            )
        })?;
    }
    let blocks = model.params().len();

    let mut rows = 0usize;
    let mut nodes = 0usize;
    for (src, tgt) in &pairs {
        let mut tape = Tape::new(model.params());
        model
            .loss(&mut tape, src, tgt, 1.0, None)
            .map_err(|e| e.to_string())?;
        let outs = tape.softmax_outputs().to_vec();
        let expected = config.n_heads * (config.enc_layers + 2 * config.dec_layers);
        check(outs.len() == expected, || {
            format!("{} attention maps, expected {expected}", outs.len())
        })?;
        for v in outs {
            let (r, c) = tape.shape(v);
            for row in tape.value(v).chunks(c) {
                let s: f64 = row.iter().sum();
                check((s - 1.0).abs() <= 1e-9, || {
                    format!("attention row sums to {s}")
                })?;
            }
            rows += r;
            nodes += 1;
        }
    }

    let src = parse("reverse: a b c d");
    let (t1, t2) = (parse("d c b a"), parse("d c e e"));
    let logits = |tgt: &[TokenId]| -> Result<Vec<f64>, String> {
        let mut tape = Tape::new(model.params());
        let (_, lg) = model
            .loss(&mut tape, &src, tgt, 1.0, None)
            .map_err(|e| e.to_string())?;
        Ok(tape.value(lg).to_vec())
    };
    let (a, b) = (logits(&t1)?, logits(&t2)?);
    let v = config.vocab_size;
    check(a[..3 * v] == b[..3 * v], || {
        "decoder rows before the change moved".into()
    })?;
    check(a[3 * v..4 * v] != b[3 * v..4 * v], || {
        "decoder row after the change did not move".into()
    })?;

    let mut worst_attn = 0.0f64;
    let none: Vec<Tensor> = Vec::new();
    for (case, &(n, m, d, heads)) in [(3, 5, 8, 2), (4, 4, 12, 3), (1, 6, 4, 1), (5, 5, 16, 4)]
        .iter()
        .enumerate()
    {
        let gen = |len: usize, f: f64| -> Vec<f64> {
            (0..len)
                .map(|i| 2.0 * ((i as f64 + 1.0) * f + case as f64).sin())
                .collect()
        };
        let (q, k, vv) = (gen(n * d, 0.71), gen(m * d, 1.37), gen(m * d, 0.29));
        let masks = [
            Mask::all_visible(n, m),
            Mask::from_fn(n, m, |i, j| j <= i + m - n),
            Mask::from_fn(n, m, |i, j| (i + j) % 3 != 1 || j == 0),
        ];
        for mask in &masks {
            let mut tape = Tape::new(&none);
            let (qv, kv, vv2) = (
                tape.input(n, d, q.clone()),
                tape.input(m, d, k.clone()),
                tape.input(m, d, vv.clone()),
            );
            let o = attention(&mut tape, qv, kv, vv2, mask, heads).map_err(|e| e.to_string())?;
            let want = naive_attention(&q, &k, &vv, n, m, d, heads, mask);
            for (x, y) in tape.value(o).iter().zip(&want) {
                worst_attn = worst_attn.max((x - y).abs());
            }
        }
    }
    check(worst_attn <= 1e-12, || {
        format!("attention differs from reference by {worst_attn:.2e}")
    })?;
    Ok(format!(
        "{blocks} parameter blocks, worst FD relative error {worst:.2e} ({zero_blocks} zero-gradient blocks agree within {ZERO_GRAD:.0e}); {rows} rows in {nodes} attention maps sum to 1; causal perturbation ok; naive attention max diff {worst_attn:.1e}"
    ))
}

// 5. In-distribution learning.
fn in_distribution_learning() -> Outcome {
    let mut lines = Vec::new();
    let mut failed = false;
    for task in TaskKind::ALL {
        let threshold = if task == TaskKind::RepetitionDetection {
            0.90
        } else {
            0.95
        };
        let start = Instant::now();
        let [train, eval, _] = splits(task, Setting::ZeroShot, Sizes::default(), 0)?;
        let defaults = ExperimentGrid::default();
        let mut model = TransformerModel::new(
            ModelConfig::default(),
            model_seed(task, &Setting::ZeroShot, 0),
        )
        .map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            seed: derive_seed(0, &format!("train|{}|{}", task.name(), Setting::ZeroShot)),
            stop_at_eval_accuracy: Some(threshold),
            ..TrainConfig::default()
        };
        // Zero-shot runs pretrain by default.
        let corpus =
            build_pretrain_corpus(&pretrain_spec(&defaults, 0)).map_err(|e| e.to_string())?;
        let losses = pretrain(&mut model, &corpus, &cfg).map_err(|e| format!("{task}: {e}"))?;
        eprintln!(
            "  [{}] pretrain losses {losses:.4?} ({:.0?})",
            task.name(),
            start.elapsed()
        );
        let mut observer = |r: &EpochRecord| {
            eprintln!(
                "  [{}] epoch {:2} train_loss {:.4} eval_loss {:.4} eval_acc {:.3}/{:.3} ({:.0?})",
                task.name(),
                r.epoch,
                r.train_loss,
                r.eval_loss,
                r.eval_accuracy[0],
                r.eval_accuracy[1],
                start.elapsed()
            );
        };
        let (ck, history) = run_training_with(model, &train, &eval, &cfg, &mut observer)
            .map_err(|e| format!("{task}: {e}"))?;
        let train_time = start.elapsed();
        let hit = history
            .records
            .iter()
            .find(|r| r.eval_overall() >= threshold);
        let greedy = evaluate(&ck.model, &eval).map_err(|e| e.to_string())?;
        let total = start.elapsed();
        let ok = hit.is_some() && total <= Duration::from_secs(30 * 60);
        failed |= !ok;
        lines.push(match hit {
            Some(r) => format!(
                "{} eval {:.3} >= {threshold} at epoch {} ({:.0?} training, greedy check {:.3}/{:.3}, {:.0?} total)",
                task.name(),
                r.eval_overall(),
                r.epoch,
                train_time,
                greedy.accuracy(TaskClass::C1),
                greedy.accuracy(TaskClass::C2),
                total
            ),
            None => format!(
                "{} best eval {:.3} < {threshold} after {} epochs ({:.0?})",
                task.name(),
                history.records.iter().map(|r| r.eval_overall()).fold(0.0, f64::max),
                history.records.len(),
                total
            ),
        });
    }
    let text = format!(
        "default zero-shot config with denoising pretraining, seed 0: {}",
        lines.join("; ")
    );
    if failed {
        Err(text)
    } else {
        Ok(text)
    }
}

// 6. Baseline failure pattern.
fn baseline_pattern() -> Outcome {
    let sizes = Sizes::default();
    let detection = [
        TaskKind::CopyReverseDetection,
        TaskKind::PalindromeDetection,
        TaskKind::RepetitionDetection,
    ];
    for task in detection {
        let [train, _, test] = splits(task, setting("flip-0"), sizes, 0)?;
        let clf = fit_baseline(BaselineKind::VocabHeuristic, &train).map_err(|e| e.to_string())?;
        let m = evaluate_classifier(clf.as_ref(), &test).map_err(|e| e.to_string())?;
        check(
            m.accuracy(TaskClass::C1) == 0.0 && m.accuracy(TaskClass::C2) == 0.0,
            || {
                format!(
                    "vocab_heuristic on {task} flip-0: {:.2}/{:.2}",
                    m.accuracy(TaskClass::C1),
                    m.accuracy(TaskClass::C2)
                )
            },
        )?;
    }
    for task in [TaskKind::PalindromeDetection, TaskKind::RepetitionDetection] {
        for name in SETTINGS {
            let [train, _, test] = splits(task, setting(name), sizes, 0)?;
            let clf = fit_baseline(BaselineKind::ComponentComparator, &train)
                .map_err(|e| e.to_string())?;
            let m = evaluate_classifier(clf.as_ref(), &test).map_err(|e| e.to_string())?;
            check(
                m.accuracy(TaskClass::C1) == 1.0 && m.accuracy(TaskClass::C2) == 1.0,
                || {
                    format!(
                        "component_comparator on {task}/{name}: {:.2}/{:.2}",
                        m.accuracy(TaskClass::C1),
                        m.accuracy(TaskClass::C2)
                    )
                },
            )?;
        }
    }
    Ok("vocab_heuristic 0.00/0.00 on all flip-0 detection test sets; component_comparator (one-hot, untrained) 1.00/1.00 on palindrome and repetition test sets in every setting".into())
}

const SMALL_GRID: &str = "
[model]
enc_layers = 1
dec_layers = 1
d_model = 16
n_heads = 2
d_ff = 32
[train]
epochs = 2
pretrain_epochs = 1
[data]
train_size = 200
eval_size = 50
test_size = 100
pretrain_size = 100
";

fn tree(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            tree(root, &p, out)?;
        } else {
            let rel = p
                .strip_prefix(root)
                .expect("inside root")
                .display()
                .to_string();
            out.push((rel, std::fs::read(&p)?));
        }
    }
    Ok(())
}

// 7. Determinism.
fn determinism() -> Outcome {
    let grid = ExperimentGrid::parse(&format!(
        "grid.tasks = repetition\ngrid.settings = zero-shot, flip-0.1\ngrid.seeds = 0, 1\ngrid.workers = 2\n{SMALL_GRID}"
    ))
    .map_err(|e| e.to_string())?;
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    let mut files = Vec::new();
    for d in &dirs {
        let s = run_grid(&grid, d.path(), RunOptions::default()).map_err(|e| e.to_string())?;
        check(s.is_success(), || format!("{:?}", s.failures))?;
        let mut f = Vec::new();
        tree(d.path(), &d.path().join("cells"), &mut f).map_err(|e| e.to_string())?;
        files.push(f);
    }
    check(files[0] == files[1], || {
        let diff: Vec<&String> = files[0]
            .iter()
            .zip(&files[1])
            .filter(|(a, b)| a != b)
            .map(|(a, _)| &a.0)
            .collect();
        format!("files differ: {diff:?}")
    })?;
    let records = [
        load_store(dirs[0].path()).map_err(|e| e.to_string())?,
        load_store(dirs[1].path()).map_err(|e| e.to_string())?,
    ];
    check(records[0] == records[1], || "records differ".into())?;
    let fps: BTreeSet<&String> = records[0]
        .iter()
        .flat_map(|r| {
            [
                &r.fingerprints.train,
                &r.fingerprints.eval,
                &r.fingerprints.test,
            ]
        })
        .collect();
    Ok(format!(
        "{} cells run twice: {} files bit-identical including checkpoints, {} distinct dataset fingerprints match",
        records[0].len(),
        files[0].len(),
        fps.len()
    ))
}

// 8. Reference values are external; trends are descriptive.
fn reference_and_trends() -> Outcome {
    let grid = ExperimentGrid::parse(&format!(
        "grid.tasks = copy_reverse, palindrome\ngrid.settings = zero-shot, flip-0\ngrid.seeds = 0\n{SMALL_GRID}"
    ))
    .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_grid(&grid, dir.path(), RunOptions::default()).map_err(|e| e.to_string())?;
    let records = load_store(dir.path()).map_err(|e| e.to_string())?;
    let report = build_report(
        &records,
        ReportOptions {
            phase: Phase::Test,
            reference: true,
        },
    );
    let row = |class: TaskClass| {
        report
            .rows
            .iter()
            .find(|r| {
                r.runner == Runner::Transformer
                    && r.task == TaskKind::CopyReverseSeq2Seq
                    && r.class == class
            })
            .ok_or_else(|| format!("no copy_reverse {class} row"))
    };
    let (copy, reverse) = (row(TaskClass::C1)?, row(TaskClass::C2)?);
    check(
        reverse.reference[0] == Some(0.97) && copy.reference[1] == Some(0.75),
        || {
            format!(
                "reference columns {:?} {:?}",
                copy.reference, reverse.reference
            )
        },
    )?;
    let md = render(&report, ReportFormat::Markdown);
    check(
        md.contains("external reference (t5-base)") && md.contains("descriptive only"),
        || "report lacks reference label or caveat".into(),
    )?;
    let stats: BTreeSet<&str> = report.trends.iter().map(|t| t.statistic).collect();
    check(
        stats.contains("seq2seq_minus_classification") && stats.contains("zero_shot_minus_flip"),
        || format!("trend statistics {stats:?}"),
    )?;
    let gap = report
        .trends
        .iter()
        .find(|t| t.runner == Runner::Transformer && t.statistic == "zero_shot_minus_flip")
        .map(|t| t.value);
    Ok(format!(
        "not reproducible at desk scale: t5-base values (zero-shot reverse 0.97, flip mix=0 copy 0.75) shown only as labelled reference columns; {} trend statistics reported descriptively with no threshold (e.g. transformer zero_shot_minus_flip {:+.2})",
        report.trends.len(),
        gap.unwrap_or(f64::NAN)
    ))
}

fn main() {
    let wanted: BTreeSet<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 8] = [
        (1, "generator soundness", generator_soundness),
        (2, "protocol correctness", protocol_correctness),
        (3, "oracle equivalence", oracle_equivalence),
        (4, "numeric core", numeric_core),
        (5, "in-distribution learning", in_distribution_learning),
        (6, "baseline failure pattern", baseline_pattern),
        (7, "determinism", determinism),
        (8, "external reference and trends", reference_and_trends),
    ];
    let mut failures = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS {name} ({t:.1?}): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n}: FAIL {name} ({t:.1?}): {detail}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
