//! Morphs two synthetic voices into one waveform with the toy backends and
//! prints the provenance record that makes the result reproducible.
//!
//! Usage: `cargo run --example single_morph [OUT.wav]`.

use std::error::Error;
use std::path::PathBuf;

use voxmorph::audio::wav::write_wav;
use voxmorph::embedding::{ClipRef, Gender, SpeakerProfile};
use voxmorph::interpolation::FusionStrategy;
use voxmorph::pipeline::{extract_embeddings, morph, BackendSet, MorphSpec, SynthesisOptions};
use voxmorph::toy::{render_clip, ToyVoice};

fn profile_for(voice: &ToyVoice, backends: &BackendSet) -> Result<SpeakerProfile, Box<dyn Error>> {
    let mut prosody = Vec::new();
    let mut timbre = Vec::new();
    let mut clips = Vec::new();
    for (i, text) in ["amber harbor quartz willow", "cedar fjord lantern moss"]
        .iter()
        .enumerate()
    {
        let wave = render_clip(voice, &format!("{text} {text} {text}"), 7 + i as u64);
        let (p, t) = extract_embeddings(backends, &wave, Some(0.0))?;
        prosody.push(p);
        timbre.push(t);
        clips.push(ClipRef {
            clip_id: format!("{}-{i}", voice.speaker_id),
            duration: wave.duration(),
        });
    }
    Ok(SpeakerProfile::new(
        &voice.speaker_id,
        voice.gender,
        clips,
        prosody,
        timbre,
    )?)
}

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/example-runs/morph.wav"));
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }

    let backends = BackendSet::toy();
    let alice = ToyVoice::sample("alice", Gender::Female, 11);
    let bob = ToyVoice::sample("bob", Gender::Male, 12);
    let spec = MorphSpec {
        source_a: profile_for(&alice, &backends)?,
        source_b: profile_for(&bob, &backends)?,
        text: "the borrowed voice carries every word".to_owned(),
        strategy: FusionStrategy::default(),
        seed: 2024,
    };

    let result = morph(&spec, &backends, &SynthesisOptions::default())?;
    write_wav(&result.waveform, &out)?;

    let p = &result.provenance;
    println!(
        "wrote {} ({:.2} s)",
        out.display(),
        result.waveform.duration()
    );
    println!("sources: {} + {}", p.source_ids.0, p.source_ids.1);
    println!(
        "strategy: {:?}/{:?} at alpha {}",
        p.strategy.prosody_method, p.strategy.timbre_method, p.strategy.alpha,
    );
    println!(
        "source angles: prosody {:.4} rad, timbre {:.4} rad",
        p.omega_prosody, p.omega_timbre,
    );
    println!(
        "synthesis: seed {}, {} flow steps, guidance {}",
        p.seed, p.flow_steps, p.guidance_scale,
    );
    println!(
        "tokens: {}, mel frames: {}",
        result.tokens.len(),
        result.mel.n_frames()
    );
    Ok(())
}
