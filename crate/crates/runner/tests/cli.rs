use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "
grid.tasks = palindrome
grid.settings = flip-0
grid.seeds = 0
grid.baselines = majority
[model]
enc_layers = 1
dec_layers = 1
d_model = 16
n_heads = 2
d_ff = 32
[train]
epochs = 1
pretrain_epochs = 1
[data]
train_size = 40
eval_size = 20
test_size = 20
pretrain_size = 20
";

fn vocabflip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vocabflip"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_train_eval_baseline_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("tiny.conf");
    fs::write(&conf, TINY).unwrap();
    let data = dir.path().join("data");
    let gen = ok(&vocabflip(&[
        "gen",
        "--task",
        "palindrome",
        "--setting",
        "flip-0",
        "--seed",
        "3",
        "--out",
        p(&data),
        "--config",
        p(&conf),
    ]));
    assert_eq!(gen.lines().count(), 3);
    let (train, eval, test) = (
        data.join("train.tsv"),
        data.join("eval.tsv"),
        data.join("test.tsv"),
    );
    assert!(train.is_file() && eval.is_file() && test.is_file());
    let tokens = fs::read_to_string(data.join("tokens.tsv")).unwrap();
    assert_eq!(tokens.lines().count(), 29);
    assert!(tokens.lines().any(|l| l == "9\ta\tv1"), "{tokens}");

    let pre = dir.path().join("pre.ckpt");
    ok(&vocabflip(&[
        "pretrain",
        "--out",
        p(&pre),
        "--config",
        p(&conf),
    ]));
    let run = dir.path().join("run");
    let trained = ok(&vocabflip(&[
        "train",
        "--train",
        p(&train),
        "--eval",
        p(&eval),
        "--init",
        p(&pre),
        "--out",
        p(&run),
        "--config",
        p(&conf),
    ]));
    assert!(trained.starts_with("best epoch 1"));
    assert!(run.join("history.tsv").is_file());

    let scored = ok(&vocabflip(&[
        "eval",
        "--checkpoint",
        p(&run.join("model.ckpt")),
        "--data",
        p(&test),
        "--json",
    ]));
    let m: serde_json::Value = serde_json::from_str(&scored).unwrap();
    assert_eq!(m["per_class"][0]["total"], 10);
    assert_eq!(m["per_class"][1]["total"], 10);

    let base = ok(&vocabflip(&[
        "baseline",
        "--kind",
        "component_comparator",
        "--train",
        p(&train),
        "--data",
        p(&test),
    ]));
    assert!(base.contains("overall\t1.0000"), "{base}");
}

#[test]
fn grid_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("tiny.conf");
    fs::write(&conf, TINY).unwrap();
    let store = dir.path().join("store");
    let first = ok(&vocabflip(&[
        "grid",
        "--config",
        p(&conf),
        "--out",
        p(&store),
        "--quiet",
    ]));
    assert!(
        first.starts_with("completed 2 skipped 0 failed 0"),
        "{first}"
    );
    let again = ok(&vocabflip(&[
        "grid",
        "--config",
        p(&conf),
        "--out",
        p(&store),
        "--quiet",
    ]));
    assert_eq!(
        again.trim(),
        "completed 0 skipped 2 failed 0 training_steps 0"
    );

    let md = ok(&vocabflip(&["report", "--store", p(&store), "--reference"]));
    assert!(md.contains("palindrome"));
    assert!(md.contains("external reference (t5-base)"));
    let tsv = ok(&vocabflip(&[
        "report",
        "--store",
        p(&store),
        "--format",
        "tsv",
        "--phase",
        "eval",
    ]));
    assert!(tsv.lines().any(|l| l.starts_with("transformer\t")), "{tsv}");
    let json = ok(&vocabflip(&[
        "report",
        "--store",
        p(&store),
        "--format",
        "json",
    ]));
    serde_json::from_str::<serde_json::Value>(&json).unwrap();
}

#[test]
fn bad_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "model.d_model = 30\nmodel.n_heads = 4\n").unwrap();
    let out = vocabflip(&["grid", "--config", p(&conf), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&conf, "model.colour = blue\n").unwrap();
    let out = vocabflip(&["grid", "--config", p(&conf), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("model.colour") && err.contains("line 1"),
        "{err}"
    );

    let out = vocabflip(&["gen", "--task", "sorting", "--out", p(dir.path())]);
    assert!(!out.status.success());
    let out = vocabflip(&["report", "--store", p(&dir.path().join("nothing"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_grid_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("fail.conf");
    fs::write(&conf, TINY.replace("d_ff = 32", "d_ff = 32\nmax_len = 8")).unwrap();
    let out = vocabflip(&[
        "grid",
        "--config",
        p(&conf),
        "--out",
        p(&dir.path().join("s")),
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("failed 1"), "{text}");
}
