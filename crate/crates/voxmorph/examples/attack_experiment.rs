//! Runs the whole attack experiment in-process on a generated corpus:
//! ingest, morph, calibrate, evaluate. The same flow is available from the
//! command line as `voxmorph <verb> --config run.toml`.
//!
//! Usage: `cargo run --release --example attack_experiment [DIR]` (default
//! `target/example-runs/attack`).

use std::error::Error;
use std::fs;
use std::path::PathBuf;

use voxmorph::runner::{cmd_calibrate, cmd_evaluate, cmd_ingest, cmd_morph, RunConfig};
use voxmorph::toy::make_toy_corpus;

fn main() -> Result<(), Box<dyn Error>> {
    let base = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/example-runs/attack"));
    if base.exists() {
        fs::remove_dir_all(&base)?;
    }
    let corpus = base.join("corpus");
    make_toy_corpus(&corpus, 10, 3, 4242)?;
    println!(
        "corpus: 10 speakers, 3 clips each, under {}",
        corpus.display()
    );

    let mut config = RunConfig::new(&corpus, base.join("run"));
    config.n_pairs = 12;
    config.seed = 4242;
    config.far_targets = vec![0.01, 0.05];
    config.calibration_trials = 45;

    let ingested = cmd_ingest(&config, false)?;
    println!(
        "ingest: {} utterances from {} speakers",
        ingested.n_utterances, ingested.n_with_audio,
    );

    let morphed = cmd_morph(&config, false)?;
    println!(
        "morph [{}]: {} generated, {} failed of {} jobs",
        morphed.label,
        morphed.generated,
        morphed.failures.len(),
        morphed.n_jobs,
    );

    let calibrated = cmd_calibrate(&config, false)?;
    println!("calibrate: {} impostor trials", calibrated.n_trials);
    for warning in &calibrated.warnings {
        println!("  warning: {warning}");
    }
    for entry in &calibrated.table.entries {
        println!(
            "  FAR {} -> threshold {:.4} (achieved {:.4})",
            entry.target, entry.threshold, entry.achieved_far,
        );
    }

    let report = cmd_evaluate(&config)?;
    println!("\n{}", report.render_table());
    println!("artifacts under {}", config.output_dir.display());
    Ok(())
}
