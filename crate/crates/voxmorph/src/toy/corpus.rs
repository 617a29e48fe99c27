//! On-disk toy corpus generation in the directory layout the ingestion code
//! expects: a `SPEAKERS.TXT` index plus per-speaker chapter directories of
//! WAV files with transcript sidecars.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::audio::wav::write_wav;
use crate::embedding::Gender;
use crate::seeding::rng_for;
use crate::toy::voice::{render_clip, syllable_plan, ToyVoice};

/// Words the toy speakers know.
const WORD_BANK: [&str; 40] = [
    "amber", "basalt", "cedar", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper",
    "kestrel", "lantern", "meadow", "nectar", "orchid", "pumice", "quartz", "russet", "sierra",
    "timber", "umber", "vellum", "willow", "xenon", "yarrow", "zephyr", "anvil", "bobbin",
    "copper", "dew", "elm", "fog", "gully", "haze", "inlet", "jay", "kiln", "loam", "moss",
    "north",
];

/// Shortest generated clip, seconds.
const MIN_CLIP: f64 = 6.0;

/// Longest generated clip, seconds.
const MAX_CLIP: f64 = 12.0;

fn io_err(e: crate::audio::AudioError) -> std::io::Error {
    std::io::Error::other(e)
}

/// Builds a sentence whose syllable budget fills roughly `duration` seconds
/// at the voice's speaking rate.
pub fn compose_text(rng: &mut impl Rng, rate: f64, duration: f64) -> String {
    let target_syllables = (duration * rate).round() as usize;
    let mut words = Vec::new();
    let mut syllables = 0;
    while syllables < target_syllables {
        let word = WORD_BANK[rng.gen_range(0..WORD_BANK.len())];
        syllables += syllable_plan(word)[0].1;
        words.push(word);
    }
    words.join(" ")
}

/// Generates a complete toy corpus under `root` and returns the sampled
/// voices, in speaker order. Speakers alternate male and female.
pub fn make_toy_corpus(
    root: &Path,
    n_speakers: usize,
    clips_per_speaker: usize,
    seed: u64,
) -> std::io::Result<Vec<ToyVoice>> {
    fs::create_dir_all(root)?;
    let mut index = fs::File::create(root.join("SPEAKERS.TXT"))?;
    writeln!(index, "; toy corpus generated by voxmorph")?;
    writeln!(index, "; ID  | SEX | SUBSET      | MINUTES | NAME")?;

    let mut voices = Vec::with_capacity(n_speakers);
    for i in 0..n_speakers {
        let speaker_id = format!("{}", 100 + i);
        let gender = if i % 2 == 0 {
            Gender::Male
        } else {
            Gender::Female
        };
        let voice = ToyVoice::sample(&speaker_id, gender, seed);
        let sex = match gender {
            Gender::Male => "M",
            _ => "F",
        };

        let chapter_dir = root.join(&speaker_id).join("01");
        fs::create_dir_all(&chapter_dir)?;
        let mut total = 0.0;
        for clip in 0..clips_per_speaker {
            let clip_id = format!("{speaker_id}-01-{clip:04}");
            let mut rng = rng_for(seed, &["toy-corpus", &clip_id]);
            let duration = rng.gen_range(MIN_CLIP..MAX_CLIP);
            let text = compose_text(&mut rng, voice.syllable_rate, duration);
            let render_seed = rng.gen::<u64>();
            let wave = render_clip(&voice, &text, render_seed);
            total += wave.duration();
            write_wav(&wave, &chapter_dir.join(format!("{clip_id}.wav"))).map_err(io_err)?;
            fs::write(chapter_dir.join(format!("{clip_id}.txt")), text)?;
        }
        writeln!(
            index,
            "{speaker_id} | {sex} | toy         | {:.2}   | speaker {speaker_id}",
            total / 60.0
        )?;
        voices.push(voice);
    }
    Ok(voices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::wav::read_wav;
    use tempfile::tempdir;

    #[test]
    fn corpus_layout_is_complete() {
        let dir = tempdir().unwrap();
        let voices = make_toy_corpus(dir.path(), 4, 2, 99).unwrap();
        assert_eq!(voices.len(), 4);
        assert_eq!(voices[0].gender, Gender::Male);
        assert_eq!(voices[1].gender, Gender::Female);

        let index = fs::read_to_string(dir.path().join("SPEAKERS.TXT")).unwrap();
        assert_eq!(index.lines().filter(|l| !l.starts_with(';')).count(), 4);
        assert!(index.contains("100 | M"));
        assert!(index.contains("101 | F"));

        for spk in ["100", "101", "102", "103"] {
            for clip in 0..2 {
                let base = dir
                    .path()
                    .join(spk)
                    .join("01")
                    .join(format!("{spk}-01-{clip:04}"));
                let wave = read_wav(&base.with_extension("wav")).unwrap();
                assert!(wave.duration() >= 5.0 && wave.duration() <= 20.0);
                let text = fs::read_to_string(base.with_extension("txt")).unwrap();
                assert!(!text.trim().is_empty());
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        make_toy_corpus(d1.path(), 2, 1, 7).unwrap();
        make_toy_corpus(d2.path(), 2, 1, 7).unwrap();
        let f1 = fs::read(d1.path().join("100/01/100-01-0000.wav")).unwrap();
        let f2 = fs::read(d2.path().join("100/01/100-01-0000.wav")).unwrap();
        assert_eq!(f1, f2);
        let t1 = fs::read(d1.path().join("100/01/100-01-0000.txt")).unwrap();
        let t2 = fs::read(d2.path().join("100/01/100-01-0000.txt")).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn seeds_change_the_corpus() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        make_toy_corpus(d1.path(), 1, 1, 7).unwrap();
        make_toy_corpus(d2.path(), 1, 1, 8).unwrap();
        let f1 = fs::read(d1.path().join("100/01/100-01-0000.wav")).unwrap();
        let f2 = fs::read(d2.path().join("100/01/100-01-0000.wav")).unwrap();
        assert_ne!(f1, f2);
    }
}
