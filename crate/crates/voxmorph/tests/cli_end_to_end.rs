//! Drives the compiled `voxmorph` binary through complete runs and checks
//! the observable contract: stdout summaries, exit codes, and the one-line
//! JSON error records on stderr.

use std::path::Path;
use std::process::Command;

use voxmorph::toy::make_toy_corpus;

fn voxmorph(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_voxmorph"))
        .args(args)
        .env_remove("VOXMORPH_BACKENDS")
        .output()
        .expect("binary launches")
}

fn stdout_of(output: &std::process::Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &std::process::Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn exit_code(output: &std::process::Output) -> i32 {
    output
        .status
        .code()
        .expect("no exit code; killed by signal?")
}

/// Pulls the counters out of a `label: G generated, S skipped, F failed of
/// N jobs` summary line.
fn morph_counts(stdout: &str) -> (usize, usize, usize, usize) {
    let line = stdout
        .lines()
        .find(|l| l.contains("generated"))
        .unwrap_or_else(|| panic!("no morph summary in:\n{stdout}"));
    let (_, counters) = line.split_once(": ").expect("summary has a strategy label");
    let numbers: Vec<usize> = counters
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .filter_map(|s| s.parse().ok())
        .collect();
    match numbers[..] {
        [g, s, f, n] => (g, s, f, n),
        _ => panic!("unexpected summary shape: {line}"),
    }
}

/// Parses the machine-readable error record the binary prints on failure
/// and returns its `kind` tag.
fn error_kind(output: &std::process::Output) -> String {
    let stderr = stderr_of(output);
    let line = stderr
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON record on stderr:\n{stderr}"));
    let record: serde_json::Value = serde_json::from_str(line).expect("record parses as JSON");
    record["error"]["kind"]
        .as_str()
        .expect("record has error.kind")
        .to_owned()
}

fn write_config(path: &Path, corpus: &Path, output_dir: &Path, extra: &str) {
    let body = format!(
        "corpus_root = {:?}\noutput_dir = {:?}\n{extra}",
        corpus.display().to_string(),
        output_dir.display().to_string(),
    );
    std::fs::write(path, body).unwrap();
}

/// A small corpus plus a config tuned so every verb finishes in seconds.
fn fixture(root: &Path) -> std::path::PathBuf {
    let corpus = root.join("corpus");
    make_toy_corpus(&corpus, 6, 2, 21).unwrap();
    let config = root.join("run.toml");
    write_config(
        &config,
        &corpus,
        &root.join("run"),
        "n_pairs = 4\nseed = 21\nfar_targets = [0.05, 0.2]\ncalibration_trials = 12\nworkers = 2\n",
    );
    config
}

#[test]
fn full_run_through_every_verb() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let config = config.to_str().unwrap();

    let ingest = voxmorph(&["ingest", "--config", config]);
    assert_eq!(exit_code(&ingest), 0, "{}", stderr_of(&ingest));
    assert!(
        stdout_of(&ingest).contains("ingested 12 utterances from 6 speakers"),
        "{}",
        stdout_of(&ingest)
    );

    let morph = voxmorph(&["morph", "--config", config]);
    assert_eq!(exit_code(&morph), 0, "{}", stderr_of(&morph));
    let summary = stdout_of(&morph);
    assert!(summary.starts_with("slerp-a0.5:"), "{summary}");
    let (generated, skipped, failed, n_jobs) = morph_counts(&summary);
    assert_eq!((generated, skipped, failed), (n_jobs, 0, 0), "{summary}");
    // Four pair morphs plus one clone per involved speaker.
    assert!(n_jobs > 4, "{summary}");

    let rerun = voxmorph(&["morph", "--config", config]);
    assert_eq!(exit_code(&rerun), 0);
    let resumed = morph_counts(&stdout_of(&rerun));
    assert_eq!(
        resumed,
        (0, n_jobs, 0, n_jobs),
        "second morph should resume, not regenerate: {}",
        stdout_of(&rerun)
    );

    let calibrate = voxmorph(&["calibrate", "--config", config]);
    assert_eq!(exit_code(&calibrate), 0, "{}", stderr_of(&calibrate));
    let calibrated = stdout_of(&calibrate);
    assert!(
        calibrated.contains("calibrated 2 thresholds from 12 impostor trials"),
        "{calibrated}"
    );
    assert!(
        calibrated.contains("FAR 0.05") && calibrated.contains("FAR 0.2"),
        "{calibrated}"
    );
    // 12 trials cannot resolve a 5% FAR, and the binary should say so.
    assert!(calibrated.contains("warning"), "{calibrated}");

    let evaluate = voxmorph(&["evaluate", "--config", config]);
    assert_eq!(exit_code(&evaluate), 0, "{}", stderr_of(&evaluate));
    let table = stdout_of(&evaluate);
    for column in [
        "mmpmr",
        "fmmpmr",
        "fad_vs_real",
        "fad_vs_clone",
        "kld",
        "wer",
        "n_morphs",
    ] {
        assert!(table.contains(column), "missing {column} in:\n{table}");
    }

    let report = voxmorph(&["report", "--config", config]);
    assert_eq!(exit_code(&report), 0, "{}", stderr_of(&report));
    assert_eq!(
        stdout_of(&report),
        table,
        "report should replay the evaluate table"
    );

    let ablate = voxmorph(&[
        "ablate",
        "--config",
        config,
        "--strategies",
        "slerp,lerp+slerp",
    ]);
    assert_eq!(exit_code(&ablate), 0, "{}", stderr_of(&ablate));
    let rows = stdout_of(&ablate);
    assert!(rows.contains("slerp-a0.5"), "{rows}");
    assert!(rows.contains("lerp+slerp-a0.5"), "{rows}");

    // Once an ablation exists, report prefers its multi-row table.
    let report = voxmorph(&["report", "--config", config]);
    assert_eq!(exit_code(&report), 0);
    assert_eq!(stdout_of(&report), rows);
}

#[test]
fn flag_overrides_reach_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let config = config.to_str().unwrap();
    let elsewhere = tmp.path().join("elsewhere");
    let elsewhere_str = elsewhere.to_str().unwrap().to_owned();

    let ingest = voxmorph(&[
        "ingest",
        "--config",
        config,
        "--output",
        &elsewhere_str,
        "--seed",
        "77",
        "--workers",
        "1",
    ]);
    assert_eq!(exit_code(&ingest), 0, "{}", stderr_of(&ingest));
    assert!(
        stdout_of(&ingest).contains(&elsewhere_str),
        "summary should name the overridden output directory: {}",
        stdout_of(&ingest)
    );
    assert!(elsewhere.join("manifest.jsonl").exists());

    // The seed override is part of the run's identity: replaying against the
    // same directory with the config's seed is a conflict...
    let conflict = voxmorph(&["morph", "--config", config, "--output", &elsewhere_str]);
    assert_eq!(exit_code(&conflict), 2, "{}", stderr_of(&conflict));
    assert!(
        stderr_of(&conflict).contains("--force"),
        "{}",
        stderr_of(&conflict)
    );

    // ...while repeating the override is not.
    let morph = voxmorph(&[
        "morph",
        "--config",
        config,
        "--output",
        &elsewhere_str,
        "--seed",
        "77",
    ]);
    assert_eq!(exit_code(&morph), 0, "{}", stderr_of(&morph));

    // --force accepts the config as the directory's new identity.
    let forced = voxmorph(&[
        "ingest",
        "--config",
        config,
        "--output",
        &elsewhere_str,
        "--force",
    ]);
    assert_eq!(exit_code(&forced), 0, "{}", stderr_of(&forced));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let config = config.to_str().unwrap();

    let no_verb = voxmorph(&[]);
    assert_eq!(exit_code(&no_verb), 1);
    assert_eq!(error_kind(&no_verb), "usage");

    let unknown_verb = voxmorph(&["unmorph"]);
    assert_eq!(exit_code(&unknown_verb), 1);
    assert_eq!(error_kind(&unknown_verb), "usage");

    let missing_config = voxmorph(&["ingest"]);
    assert_eq!(exit_code(&missing_config), 1);
    assert_eq!(error_kind(&missing_config), "usage");

    let bad_method = voxmorph(&["ablate", "--config", config, "--strategies", "slerp,warp"]);
    assert_eq!(exit_code(&bad_method), 1);
    assert_eq!(error_kind(&bad_method), "usage");

    let bad_config = tmp.path().join("bad.toml");
    std::fs::write(
        &bad_config,
        "corpus_root = \"c\"\noutput_dir = \"o\"\nn_pairs = 0\n",
    )
    .unwrap();
    let rejected = voxmorph(&["ingest", "--config", bad_config.to_str().unwrap()]);
    assert_eq!(exit_code(&rejected), 1);
    assert_eq!(error_kind(&rejected), "usage");

    let help = voxmorph(&["--help"]);
    assert_eq!(exit_code(&help), 0);
    assert!(stdout_of(&help).contains("Usage"));
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("run.toml");
    write_config(
        &config_path,
        &tmp.path().join("no-such-corpus"),
        &tmp.path().join("run"),
        "",
    );
    let config = config_path.to_str().unwrap();

    let no_corpus = voxmorph(&["ingest", "--config", config]);
    assert_eq!(exit_code(&no_corpus), 2, "{}", stderr_of(&no_corpus));
    assert_eq!(error_kind(&no_corpus), "data");

    // Evaluating before any morphs exist is missing data, not misuse.
    let real = fixture(tmp.path());
    let premature = voxmorph(&["evaluate", "--config", real.to_str().unwrap()]);
    assert_eq!(exit_code(&premature), 2, "{}", stderr_of(&premature));
    assert_eq!(error_kind(&premature), "data");
}

#[test]
fn backend_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    make_toy_corpus(&corpus, 4, 2, 33).unwrap();

    let manifest = tmp.path().join("backends.toml");
    std::fs::write(
        &manifest,
        "[[backend]]\nstage = \"vocoder\"\nkind = \"executable\"\nname = \"ghost\"\npath = \"/nonexistent/tool\"\n",
    )
    .unwrap();

    let config_path = tmp.path().join("run.toml");
    write_config(
        &config_path,
        &corpus,
        &tmp.path().join("run"),
        &format!(
            "n_pairs = 2\nbackend_manifest = {:?}\nfailure_budget = 0.0\n",
            manifest.display().to_string()
        ),
    );
    let config = config_path.to_str().unwrap();

    let ingest = voxmorph(&["ingest", "--config", config]);
    assert_eq!(exit_code(&ingest), 0, "{}", stderr_of(&ingest));

    let morph = voxmorph(&["morph", "--config", config]);
    assert_eq!(exit_code(&morph), 3, "{}", stderr_of(&morph));
    assert_eq!(error_kind(&morph), "backend");
}
