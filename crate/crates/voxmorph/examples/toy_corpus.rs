//! Generates a small synthetic speech corpus and walks it back in through
//! ingestion, printing what the manifest recorded.
//!
//! Usage: `cargo run --example toy_corpus [DIR]` (default
//! `target/example-runs/toy-corpus`).

use std::error::Error;
use std::fs;
use std::path::PathBuf;

use voxmorph::manifest::ingest;
use voxmorph::toy::make_toy_corpus;

fn main() -> Result<(), Box<dyn Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/example-runs/toy-corpus"));
    if root.exists() {
        fs::remove_dir_all(&root)?;
    }

    let voices = make_toy_corpus(&root, 6, 3, 42)?;
    println!("wrote {} speakers under {}", voices.len(), root.display());
    for voice in &voices {
        println!(
            "  speaker {}: {:?}, {:.2} syllables/s, pitch index {}",
            voice.speaker_id, voice.gender, voice.syllable_rate, voice.f0_index,
        );
    }

    let report = ingest(&root, &root.join("SPEAKERS.TXT"))?;
    let manifest = &report.manifest;
    println!(
        "\ningested {} utterances from {} speakers",
        manifest.utterances.len(),
        manifest.speakers.len(),
    );
    for (path, reason) in &report.skipped {
        println!("  skipped {}: {reason}", path.display());
    }

    let sample = &manifest.utterances[0];
    println!(
        "\nfirst utterance: {} ({:.1} s, speaker {})",
        sample.clip_id, sample.duration, sample.speaker_id,
    );
    if let Some(text) = sample.transcript() {
        println!("  transcript: {text}");
    }
    Ok(())
}
