//! Ablates the fusion method over one shared pair list and prints the
//! comparison table. Plain linear averaging leaves the embedding
//! hypersphere and pays for it in every column. At alpha 0.5 normalized
//! lerp coincides with slerp (the normalized chord midpoint is the arc
//! midpoint), so those two rows match; asymmetric alphas separate them.
//!
//! Usage: `cargo run --release --example fusion_ablation [DIR]` (default
//! `target/example-runs/ablation`).

use std::error::Error;
use std::fs;
use std::path::PathBuf;

use voxmorph::interpolation::{FusionMethod, FusionStrategy};
use voxmorph::metrics::report::render_ablation_table;
use voxmorph::runner::{cmd_ablate, cmd_calibrate, cmd_ingest, RunConfig};
use voxmorph::toy::make_toy_corpus;

fn main() -> Result<(), Box<dyn Error>> {
    let base = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/example-runs/ablation"));
    if base.exists() {
        fs::remove_dir_all(&base)?;
    }
    let corpus = base.join("corpus");
    make_toy_corpus(&corpus, 10, 2, 99)?;

    let mut config = RunConfig::new(&corpus, base.join("run"));
    config.n_pairs = 10;
    config.seed = 99;
    config.far_targets = vec![0.01, 0.05];
    config.calibration_trials = 45;

    cmd_ingest(&config, false)?;
    cmd_calibrate(&config, false)?;

    let strategies = [
        FusionStrategy::uniform(FusionMethod::Slerp, 0.5)?,
        FusionStrategy::uniform(FusionMethod::Lerp, 0.5)?,
        FusionStrategy::uniform(FusionMethod::Slerp, 0.25)?,
        FusionStrategy::uniform(FusionMethod::Lerp, 0.25)?,
        FusionStrategy::uniform(FusionMethod::LinearAverage, 0.5)?,
        FusionStrategy::new(FusionMethod::Lerp, FusionMethod::Slerp, 0.5)?,
    ];
    let rows = cmd_ablate(&config, &strategies, false)?;
    print!("{}", render_ablation_table(&rows));

    println!("\nper-strategy artifacts:");
    for (label, report) in &rows {
        println!("  morphs/{label}: {} morphs scored", report.n_morphs);
    }
    Ok(())
}
