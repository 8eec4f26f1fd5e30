use std::path::Path;

use fse::cli::{main_with_args, run_pipeline, CliError, Manifest, PipelineConfig};

fn run<S: AsRef<str>>(args: &[S]) -> i32 {
    main_with_args(std::iter::once("fse").chain(args.iter().map(AsRef::as_ref)))
}

fn write_config(dir: &Path, data: &Path, out: &Path) -> String {
    let path = dir.join("run.toml");
    let body = format!(
        "[paths]\ncorpus = {:?}\npairs = {:?}\nterms = {:?}\nout = {:?}\n\n[model]\ndim = 8\nmin_freq = 1\n\n[train]\nepochs = 2\n\n[clean]\nenabled = true\nfolds = 3\n",
        data.join("corpus.jsonl"),
        data.join("pairs.tsv"),
        data.join("terms.tsv"),
        out
    );
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn manifest(out: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn every_subcommand_is_wired() {
    for cmd in [
        "normalize",
        "split",
        "build-pairs",
        "prune",
        "train",
        "eval",
        "candidates",
        "export-emb",
        "gen-synth",
        "run",
    ] {
        assert_eq!(run(&[cmd, "--help"]), 0, "{cmd}");
    }
    assert_eq!(run(&["no-such-command"]), 1);
}

#[test]
fn missing_corpus_fails_in_the_normalize_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &tmp.path().join("absent"), &tmp.path().join("out"));
    assert_eq!(run(&["run", "--config", &cfg]), 2);
    assert!(!tmp.path().join("out/manifest.json").exists());
    let parsed = PipelineConfig::load(Path::new(&cfg), &[]).unwrap();
    match run_pipeline(&parsed) {
        Err(CliError::Data { stage, .. }) => assert_eq!(stage, "normalize"),
        other => panic!("expected a normalize-stage data error, got {other:?}"),
    }
}

#[test]
fn bad_override_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), tmp.path(), &tmp.path().join("out"));
    assert_eq!(run(&["run", "--config", &cfg, "--set", "train.nonsense=3"]), 1);
    assert_eq!(run(&["run", "--config", &cfg, "--set", "no-equals-sign"]), 1);
}

#[test]
fn repeated_runs_produce_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_s = data.to_string_lossy().into_owned();
    assert_eq!(run(&["gen-synth", "--templates", "20", "--seed", "5", "--out", &data_s]), 0);
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &data, &out);
    assert_eq!(run(&["run", "--config", &cfg]), 0);
    let first = manifest(&out);
    for name in ["corpus.jsonl", "tasks.jsonl", "tasks.clean.jsonl", "ckpt/model.json", "report.json"] {
        assert!(first.artifacts.contains_key(name), "{name}");
    }
    assert_eq!(run(&["run", "--config", &cfg]), 0);
    assert_eq!(manifest(&out), first);
}

#[test]
fn stages_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    assert_eq!(run(&["gen-synth", "--templates", "16", "--seed", "2", "--out", &p("data")]), 0);
    assert_eq!(
        run(&[
            "normalize",
            "--terms",
            &p("data/terms.tsv"),
            "--input",
            &p("data/corpus.jsonl"),
            "--output",
            &p("corpus.jsonl")
        ]),
        0
    );
    assert_eq!(run(&["split", "--pairs", &p("data/pairs.tsv"), "--out", &p("split")]), 0);
    assert_eq!(
        run(&[
            "build-pairs",
            "--corpus",
            &p("corpus.jsonl"),
            "--pairs",
            &p("split/train.tsv"),
            "--out",
            &p("tasks.jsonl")
        ]),
        0
    );
    let small = ["--set", "model.dim=8", "--set", "model.min_freq=1", "--set", "train.epochs=1"].map(String::from);
    let mut prune = vec![
        "prune".to_string(),
        "--tasks".into(),
        p("tasks.jsonl"),
        "--corpus".into(),
        p("corpus.jsonl"),
        "--folds".into(),
        "2".into(),
        "--out".into(),
        p("tasks.clean.jsonl"),
        "--report".into(),
        p("prune.json"),
    ];
    prune.extend(small.clone());
    assert_eq!(run(&prune), 0);
    let mut train = vec![
        "train".to_string(),
        "--tasks".into(),
        p("tasks.clean.jsonl"),
        "--corpus".into(),
        p("corpus.jsonl"),
        "--out".into(),
        p("ckpt"),
    ];
    train.extend(small);
    assert_eq!(run(&train), 0);
    assert_eq!(
        run(&[
            "eval",
            "--ckpt",
            &p("ckpt"),
            "--corpus",
            &p("corpus.jsonl"),
            "--pairs",
            &p("split/test.tsv"),
            "--report",
            &p("report.json")
        ]),
        0
    );
    assert_eq!(
        run(&["candidates", "--corpus", &p("corpus.jsonl"), "--top", "5", "--out", &p("cands.tsv")]),
        0
    );
    assert_eq!(
        run(&["export-emb", "--ckpt", &p("ckpt"), "--corpus", &p("corpus.jsonl"), "--out", &p("emb.tsv")]),
        0
    );
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert!(report["p_at"]["1"].as_f64().is_some());
    let emb = std::fs::read_to_string(p("emb.tsv")).unwrap();
    assert_eq!(emb.lines().count(), 16 * 3);
}
