//! End-to-end checks of the `rubric` binary: exit codes, printed output,
//! and a small full pipeline driven purely through the command line.

use std::path::Path;
use std::process::{Command, Output};

fn rubric(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rubric"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = rubric(&[], dir.path());
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("Usage"), "{}", stderr(&output));
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let output = rubric(&["--help"], dir.path());
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout(&output).contains("rubric"));
}

#[test]
fn version_prints_the_package_version() {
    let dir = tempfile::tempdir().unwrap();
    let output = rubric(&["--version"], dir.path());
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout(&output).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn a_missing_corpus_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = rubric(&["discover", "--corpus", "no_such_file.jsonl"], dir.path());
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));
    assert!(stderr(&output).starts_with("rubric: "), "{}", stderr(&output));
}

#[test]
fn a_bad_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[run]\nparallelism = 0\n").unwrap();
    let output = rubric(
        &["--config", "bad.toml", "synth", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
    assert!(stderr(&output).contains("parallelism"), "{}", stderr(&output));
}

#[test]
fn an_unknown_outcome_is_an_invalid_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let synth = rubric(&["synth", "--seed", "3"], dir.path());
    assert_eq!(synth.status.code(), Some(0), "{}", stderr(&synth));
    let output = rubric(
        &[
            "associate",
            "--scores",
            "out/synthetic_scores.csv",
            "--corpus",
            "out/synthetic_corpus.jsonl",
            "--outcome",
            "nonsense",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));
}

#[test]
fn the_whole_pipeline_runs_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pipeline.toml"),
        "[discovery]\nn_agents = 3\nsubset_size = 8\n",
    )
    .unwrap();
    let spec = r#"{"n_cases": 12, "instances_per_case": 4}"#;
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    let base = ["--config", "pipeline.toml"];

    let run = |args: &[&str]| {
        let all: Vec<&str> = base.iter().chain(args.iter()).copied().collect();
        let output = rubric(&all, dir.path());
        assert_eq!(output.status.code(), Some(0), "{:?}: {}", args, stderr(&output));
        output
    };

    let synth = run(&["synth", "--spec", "spec.json", "--seed", "5"]);
    assert!(stdout(&synth).contains("wrote "), "{}", stdout(&synth));
    assert!(dir.path().join("out/synthetic_corpus.jsonl").is_file());

    run(&["discover", "--corpus", "out/synthetic_corpus.jsonl"]);
    assert!(dir.path().join("out/discovery.json").is_file());

    run(&[
        "consolidate",
        "--discovery",
        "out/discovery.json",
        "--corpus",
        "out/synthetic_corpus.jsonl",
    ]);
    assert!(dir.path().join("out/rubric.json").is_file());
    assert!(dir.path().join("out/silhouette.csv").is_file());

    for tag in ["run1", "run2"] {
        run(&[
            "score",
            "--rubric",
            "out/rubric.json",
            "--corpus",
            "out/synthetic_corpus.jsonl",
            "--replicate-tag",
            tag,
        ]);
    }
    assert!(dir.path().join("out/scores_run1.csv").is_file());
    assert!(dir.path().join("out/scores_run2.csv").is_file());

    run(&[
        "agreement",
        "--run1",
        "out/scores_run1.csv",
        "--run2",
        "out/scores_run2.csv",
    ]);
    let agreement = std::fs::read_to_string(dir.path().join("out/agreement.csv")).unwrap();
    assert!(agreement.lines().count() > 1, "{agreement}");

    run(&[
        "evaluate",
        "--scores",
        "out/scores_run1.csv",
        "--corpus",
        "out/synthetic_corpus.jsonl",
    ]);
    assert!(dir.path().join("out/evaluation.csv").is_file());

    run(&[
        "stability",
        "--rubric",
        "out/rubric.json",
        "--discovery",
        "out/discovery.json",
        "--sweep",
    ]);
    assert!(dir.path().join("out/stability.json").is_file());
    assert!(dir.path().join("out/coverage.csv").is_file());
}
