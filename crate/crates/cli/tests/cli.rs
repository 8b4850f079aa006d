use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GEN: &str = r#"
seed = 5
lexicon_size = 10
train_size = 16
dev_size = 4
test_size = 4
"#;

const TRAIN: &str = r#"
epochs = 1
batch_size = 4
warmup_steps = 4
[model]
dim = 8
pred_hidden = 8
joint_dim = 8
context_layers = 1
"#;

fn dyntask(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyntask"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DYNTASK_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn setup(dir: &Path) {
    fs::write(dir.join("gen.toml"), GEN).unwrap();
    fs::write(dir.join("train.toml"), TRAIN).unwrap();
    ok(&dyntask(&["gen-data", "--config", "gen.toml", "--out", "corpus"], dir));
}

#[test]
fn generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let a = ok(&dyntask(&["gen-data", "--config", "gen.toml", "--out", "nested/a"], dir.path()));
    let b = ok(&dyntask(&["gen-data", "--config", "gen.toml", "--out", "b"], dir.path()));
    assert_eq!(a, b);
    assert_eq!(a.trim().len(), 64);
    for f in ["corpus.jsonl", "frames.bin", "frames.idx", "manifest.json"] {
        assert_eq!(
            fs::read(dir.path().join("nested/a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn train_decode_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let train = ["train", "--config", "train.toml", "--corpus", "corpus"];
    ok(&dyntask(&[&train[..], &["--out", "run1"]].concat(), d));
    ok(&dyntask(&[&train[..], &["--out", "run2"]].concat(), d));
    assert_eq!(
        fs::read(d.join("run1/model.ckpt")).unwrap(),
        fs::read(d.join("run2/model.ckpt")).unwrap()
    );
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(d.join("run1/run.json")).unwrap()).unwrap();
    assert_eq!(manifest["best_epoch"], 1);
    assert_eq!(manifest["epochs"].as_array().unwrap().len(), 1);

    for (tasks, beam, out) in [("all", "4", "all.hyp"), ("asr", "1", "asr.hyp")] {
        ok(&dyntask(
            &["decode", "--checkpoint", "run1/model.ckpt", "--corpus", "corpus", "--tasks", tasks, "--beam", beam, "--out", out],
            d,
        ));
    }
    let hyp = fs::read_to_string(d.join("asr.hyp")).unwrap();
    assert_eq!(hyp.lines().count(), 4);
    assert!(hyp.lines().all(|l| l.contains('\t')));

    let table = ok(&dyntask(
        &["eval", "--hyps", "asr.hyp", "--corpus", "corpus", "--tasks", "asr", "--out", "asr.metrics"],
        d,
    ));
    assert!(table.contains("wer"));
    let metrics = fs::read_to_string(d.join("asr.metrics")).unwrap();
    assert!(metrics.contains("scd_f1=--"));
    assert!(metrics.lines().any(|l| l.starts_with("itt=")));
    ok(&dyntask(&["eval", "--hyps", "all.hyp", "--corpus", "corpus", "--out", "all.metrics"], d));
    let keys = |s: String| s.lines().map(|l| l.split('=').next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(keys(metrics), keys(fs::read_to_string(d.join("all.metrics")).unwrap()));
}

#[test]
fn reference_hypotheses_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    // Render the references themselves as a hypothesis file.
    let (corpus, _) = dyntask::io::read_corpus(&d.join("corpus")).unwrap();
    let vocab = dyntask::codec::build_vocab(&corpus.codec).unwrap();
    let test = corpus.split_vec(dyntask::data::Split::Test);
    let all = dyntask::codec::TaskSet::all(4);
    let refs: Vec<Vec<u32>> = test
        .iter()
        .map(|u| dyntask::codec::encode_reference(u, all, &vocab).unwrap())
        .collect();
    let ids: Vec<&str> = test.iter().map(|u| u.id.as_str()).collect();
    dyntask::io::write_hypotheses(&d.join("ref.hyp"), &ids, &refs, &vocab).unwrap();
    ok(&dyntask(&["eval", "--hyps", "ref.hyp", "--corpus", "corpus", "--out", "ref.metrics"], d));
    let m = fs::read_to_string(d.join("ref.metrics")).unwrap();
    assert!(m.lines().any(|l| l == "wer=0.0000"), "{m}");
    assert!(m.lines().any(|l| l == "lid_acc=1.0000"), "{m}");
    assert!(m.lines().any(|l| l == "ep_f1=1.0000"), "{m}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let code = |args: &[&str]| dyntask(args, d).status.code().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["gen-data", "--config", "missing.toml", "--out", "x"]), 1);
    assert_eq!(code(&["decode", "--checkpoint", "c", "--corpus", "corpus", "--tasks", "asr,bogus", "--out", "h"]), 1);
    assert_eq!(code(&["decode", "--checkpoint", "c", "--corpus", "corpus", "--beam", "0", "--out", "h"]), 1);
    assert_eq!(code(&["train", "--corpus", "nowhere", "--out", "r", "--epochs", "1"]), 2);
    assert_eq!(code(&["train", "--corpus", "corpus", "--out", "r", "--epochs", "0"]), 1);
    fs::write(d.join("empty.hyp"), "").unwrap();
    assert_eq!(code(&["eval", "--hyps", "empty.hyp", "--corpus", "corpus"]), 2);

    // A huge learning rate drives the loss to infinity.
    fs::write(d.join("wild.toml"), format!("lr = 1e300\nwarmup_steps = 1\ngrad_clip = 0.0\n{TRAIN}").replace("warmup_steps = 4\n", "")).unwrap();
    let out = dyntask(&["train", "--config", "wild.toml", "--corpus", "corpus", "--out", "w", "--epochs", "2"], d);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_dyntask"))
        .args(["gen-data", "--out", "c"])
        .current_dir(dir.path())
        .env("DYNTASK_OUT", &root)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    ok(&out);
    assert!(root.join("c/manifest.json").exists());
}

#[test]
fn ablation_dry_run_and_templates() {
    let dir = tempfile::tempdir().unwrap();
    let plan = ok(&dyntask(&["ablate", "--dry-run"], dir.path()));
    assert_eq!(plan.lines().count(), 8);
    for kind in ["gen", "train", "ablate"] {
        let text = ok(&dyntask(&["default-config", kind], dir.path()));
        let path = dir.path().join(format!("{kind}.toml"));
        fs::write(&path, &text).unwrap();
        assert!(text.lines().filter(|l| l.starts_with('#')).count() > 5);
    }
    let plan = ok(&dyntask(&["ablate", "--dry-run", "--config", "ablate.toml", "--epochs", "2"], dir.path()));
    assert!(plan.contains("2 epochs"));
}

#[test]
fn tiny_ablation_emits_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let cfg = format!("beam = 2\npositions = [\"after_feature_encoder\", \"both\"]\n[train]\n{}", TRAIN.replace("[model]", "[train.model]"));
    fs::write(d.join("ablate.toml"), cfg).unwrap();
    let stdout = ok(&dyntask(&["ablate", "--config", "ablate.toml", "--corpus", "corpus", "--out", "abl"], d));
    assert!(stdout.contains("per_task_sum"));
    let subsets = fs::read_to_string(d.join("abl/subsets.txt")).unwrap();
    assert_eq!(subsets.lines().filter(|l| l.starts_with("asr")).count(), 32);
    assert_eq!(fs::read_dir(d.join("abl/grid")).unwrap().count(), 4);
    assert_eq!(fs::read_dir(d.join("abl/subsets/per_combination")).unwrap().count(), 16);
}
