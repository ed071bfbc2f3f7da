use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spanlink::autograd::ParamGroup;
use spanlink::checkpoint::load_checkpoint;
use spanlink::pipeline::LogRecord;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spanlink"));
    c.env("RUST_LOG", "warn").env_remove("SPANLINK_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spanlink")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "spanlink {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A scratch directory with a small narrative corpus and a tiny config.
struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        ok(&[
            "gen-synthetic",
            "--count",
            "5",
            "--seed",
            "3",
            "--output",
            s(&f.path("train.conll")),
        ]);
        ok(&[
            "gen-synthetic",
            "--count",
            "3",
            "--seed",
            "4",
            "--output",
            s(&f.path("dev.conll")),
        ]);
        let cfg = format!(
            "data.train = {:?}\ndata.dev = {:?}\n\
             encoder.window = 32\nencoder.hidden_dim = 16\nencoder.num_layers = 1\nencoder.num_heads = 2\n\
             encoder.dropout = 0.1\nproposal.max_span_length = 3\nproposal.keep_ratio = 0.6\n\
             linking.antecedent_cap = 10\ntrain.epochs = 2\ntrain.proposal_epochs = 1\n\
             train.encoder_lr = 1e-3\ntrain.head_lr = 2e-3\n",
            f.path("train.conll"),
            f.path("dev.conll"),
        );
        std::fs::write(f.path("run.toml"), cfg).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Arguments selecting the config and an output directory under the fixture.
    fn config(&self, out: &str) -> Vec<String> {
        vec![
            "-c".into(),
            s(&self.path("run.toml")).into(),
            "--set".into(),
            format!("output_dir={:?}", self.path(out)),
        ]
    }

    fn train(&self, out: &str, extra: &[&str]) {
        let mut args: Vec<String> = vec!["train".into()];
        args.extend(self.config(out));
        args.extend(extra.iter().map(|a| a.to_string()));
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    }

    fn log(&self, out: &str) -> Vec<LogRecord> {
        std::fs::read_to_string(self.path(out).join("train_log.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["train", "--desk"]), 1, "missing data.train");
    assert_eq!(code(&["train", "--desk", "--set", "proposal.nonsense=1"]), 1);
    assert_eq!(
        code(&["evaluate", "--gold", "/nonexistent/gold", "--pred", "/nonexistent/pred"]),
        2
    );
    let mut args: Vec<String> = vec!["train".into()];
    args.extend(f.config("diverge"));
    for o in ["train.head_lr=1e200", "train.encoder_lr=1e200", "train.grad_clip=0"] {
        args.extend(["--set".to_string(), o.to_string()]);
    }
    assert_eq!(code(&args.iter().map(String::as_str).collect::<Vec<_>>()), 3);
}

#[test]
fn evaluating_gold_against_itself_is_perfect() {
    let f = Fixture::new();
    let gold = f.path("dev.conll");
    let out = ok(&["evaluate", "--gold", s(&gold), "--pred", s(&gold), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["conll_avg_f1"], 1.0);
    assert_eq!(v["muc"]["f1"], 1.0);
}

#[test]
fn gap_evaluation_emits_a_report() {
    let f = Fixture::new();
    let gold = f.path("gap.tsv");
    ok(&["gen-synthetic", "--kind", "gap", "--count", "12", "--output", s(&gold)]);
    let text = std::fs::read_to_string(&gold).unwrap();
    // Predictions copied from the labels score perfectly.
    let rows: String = text
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            format!("{}\t{}\t{}\n", c[0], c[6], c[9])
        })
        .collect();
    let pred = f.path("gap.pred.tsv");
    std::fs::write(&pred, rows).unwrap();
    let out = ok(&["evaluate", "--gold", s(&gold), "--pred", s(&pred), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["gap"]["overall_f1"], 1.0);
    assert_eq!(v["gap"]["bias"], 1.0);
}

#[test]
fn training_and_prediction_are_deterministic() {
    let f = Fixture::new();
    f.train("a", &[]);
    f.train("b", &[]);
    let (la, lb) = (f.log("a"), f.log("b"));
    assert_eq!(la.len(), 2);
    assert_eq!(la, lb);
    let dev = f.path("dev.conll");
    let mut outputs = Vec::new();
    for (model, name) in [("a", "p1.conll"), ("a", "p2.conll"), ("b", "p3.conll")] {
        let out = f.path(name);
        ok(&[
            "predict",
            "--model",
            s(&f.path(model).join("model")),
            "--input",
            s(&dev),
            "--output",
            s(&out),
        ]);
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    assert!(f.path("a").join("config.toml").exists());
}

#[test]
fn seed_changes_the_run() {
    let f = Fixture::new();
    f.train("a", &[]);
    f.train("b", &["--set", "train.seed=99"]);
    assert_ne!(f.log("a")[0].loss, f.log("b")[0].loss);
}

#[test]
fn resume_continues_the_step_counter() {
    let f = Fixture::new();
    f.train("first", &[]);
    let first = f.log("first");
    f.train("second", &["--resume", s(&f.path("first").join("last"))]);
    let second = f.log("second");
    let last_step = first.last().unwrap().step;
    assert!(second[0].step > last_step);
    assert!(second.windows(2).all(|w| w[1].step > w[0].step));
    assert_eq!(second[0].epoch, first.last().unwrap().epoch + 1);
}

#[test]
fn freezing_keeps_the_encoder_bit_identical() {
    let f = Fixture::new();
    let mut args: Vec<String> = vec!["pretrain-mentions".into()];
    args.extend(f.config("pre"));
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let init = f.path("pre").join("proposal");
    f.train("frozen", &["--init", s(&init), "--freeze-encoder"]);
    let (before, _, _) = load_checkpoint(&init).unwrap();
    let (after, _, _) = load_checkpoint(f.path("frozen").join("last")).unwrap();
    let mut heads_moved = false;
    for (a, b) in before.params.entries().iter().zip(after.params.entries()) {
        assert_eq!(a.name, b.name);
        match a.group {
            ParamGroup::Encoder => assert_eq!(a.value, b.value, "{} changed", a.name),
            ParamGroup::Heads => heads_moved |= a.value != b.value,
        }
    }
    assert!(heads_moved);
}

#[test]
fn mention_pretraining_saves_a_reloadable_checkpoint() {
    let f = Fixture::new();
    let mut args: Vec<String> = vec!["pretrain-mentions".into()];
    args.extend(f.config("pre"));
    let out = ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.contains("dev mention recall"));
    let (model, optimizer, meta) = load_checkpoint(f.path("pre").join("proposal")).unwrap();
    assert_eq!(meta.stage, "proposal");
    assert!(optimizer.is_none());
    assert_eq!(model.config.encoder.hidden_dim, 16);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("pre").join("proposal_recall.json")).unwrap()).unwrap();
    let r = report["recall"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&r));
}

#[test]
fn missing_stage_inputs_are_usage_errors() {
    let f = Fixture::new();
    let mut args: Vec<String> = vec!["pretrain-qa".into()];
    args.extend(f.config("qa"));
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.qa"));
}

#[test]
fn empty_input_gives_an_empty_prediction_file() {
    let f = Fixture::new();
    f.train("m", &[]);
    let empty = f.path("empty.conll");
    std::fs::write(&empty, "").unwrap();
    let out = f.path("empty.pred");
    ok(&[
        "predict",
        "--model",
        s(&f.path("m").join("model")),
        "--input",
        s(&empty),
        "--output",
        s(&out),
    ]);
    assert_eq!(std::fs::read(&out).unwrap(), b"");
}

#[test]
fn recall_curve_is_monotone() {
    let f = Fixture::new();
    f.train("m", &[]);
    let out = ok(&[
        "recall-curve",
        "--model",
        s(&f.path("m").join("model")),
        "--input",
        s(&f.path("dev.conll")),
        "--ratios",
        "0.1,0.3,0.6,1.0",
        "--json",
    ]);
    let points: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
    let get = |k: &str| -> Vec<f64> { points.iter().map(|p| p[k].as_f64().unwrap()).collect() };
    let (prop, link) = (get("proposal_recall"), get("linking_recall"));
    assert!(prop.windows(2).all(|w| w[0] <= w[1]));
    assert!(prop.iter().zip(&link).all(|(p, l)| p <= l));
}

#[test]
fn speaker_ablation_needs_speakers() {
    let f = Fixture::new();
    let mut args: Vec<String> = vec!["speaker-ablation".into()];
    args.extend(f.config("spk"));
    let out = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speakers"));
}

#[test]
fn predictions_are_scoreable() {
    let f = Fixture::new();
    f.train("m", &[]);
    let pred = f.path("dev.pred.conll");
    let dev = f.path("dev.conll");
    ok(&[
        "predict",
        "--model",
        s(&f.path("m").join("model")),
        "--input",
        s(&dev),
        "--output",
        s(&pred),
    ]);
    let out = ok(&["evaluate", "--gold", s(&dev), "--pred", s(&pred)]);
    assert!(out.contains("CoNLL"));
}
