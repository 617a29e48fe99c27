//! Command-line front end for the experiment runner.
//!
//! One verb per run phase, each reading the same TOML config:
//!
//! ```text
//! voxmorph ingest    --config run.toml
//! voxmorph morph     --config run.toml --workers 8
//! voxmorph calibrate --config run.toml
//! voxmorph evaluate  --config run.toml
//! voxmorph ablate    --config run.toml --strategies slerp,lerp,linear_average
//! voxmorph report    --config run.toml
//! ```
//!
//! Failures print one machine-readable JSON record to stderr and exit with
//! 1 for usage errors, 2 for data errors, and 3 for backend errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use voxmorph::interpolation::{FusionMethod, FusionStrategy};
use voxmorph::runner::{
    cmd_ablate, cmd_calibrate, cmd_evaluate, cmd_ingest, cmd_morph, cmd_report, RunConfig,
    RunnerError, DEFAULT_MORPH_TEXT,
};

#[derive(Parser)]
#[command(name = "voxmorph", version, about = "Voice-morphing experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every run verb. `--seed`, `--workers`, and `--output`
/// override the corresponding config fields.
#[derive(Args)]
struct RunArgs {
    /// Run configuration TOML.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the config's worker count.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Override the config's output directory.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Overwrite or regenerate existing artifacts.
    #[arg(long)]
    force: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, RunnerError> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        if let Some(output) = &self.output {
            config.output_dir = output.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Walk the corpus into a manifest.
    Ingest(RunArgs),
    /// Morph every sampled pair, plus one clone per source speaker.
    Morph(RunArgs),
    /// Calibrate acceptance thresholds from impostor trials.
    Calibrate(RunArgs),
    /// Score finished morphs and write the metric report.
    Evaluate(RunArgs),
    /// Morph and evaluate several fusion strategies over one pair list.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated strategies: slerp, lerp, linear_average, or
        /// prosody+timbre mixes like lerp+slerp. Alpha comes from the
        /// config.
        #[arg(long, value_name = "LIST", value_delimiter = ',', required = true)]
        strategies: Vec<String>,
    },
    /// Print the stored report table.
    Report(RunArgs),
    /// Serve single pipeline stages over the external-backend file
    /// contract. Exists so the external-executable plumbing can be tested
    /// against a real process; not part of the public interface.
    #[command(hide = true)]
    BackendStub {
        #[command(subcommand)]
        stage: StubStage,
    },
}

#[derive(Subcommand)]
enum StubStage {
    Encode {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        prosody_out: PathBuf,
        #[arg(long)]
        timbre_out: PathBuf,
    },
    Tokens {
        #[arg(long)]
        text_file: PathBuf,
        #[arg(long)]
        prosody: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Mel {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        timbre: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        guidance: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Vocode {
        #[arg(long)]
        mel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    AsvEmbed {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Transcribe {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_strategy(raw: &str, alpha: f64) -> Result<FusionStrategy, RunnerError> {
    let method = |m: &str| m.parse::<FusionMethod>().map_err(RunnerError::Usage);
    let strategy = match raw.split_once('+') {
        Some((p, t)) => FusionStrategy::new(method(p)?, method(t)?, alpha),
        None => FusionStrategy::uniform(method(raw)?, alpha),
    };
    strategy.map_err(|e| RunnerError::Usage(e.to_string()))
}

fn run(command: Command) -> Result<(), RunnerError> {
    match command {
        Command::Ingest(args) => {
            let config = args.load()?;
            let summary = cmd_ingest(&config, args.force)?;
            for (path, reason) in &summary.skipped {
                eprintln!("warning: skipped {}: {reason}", path.display());
            }
            println!(
                "ingested {} utterances from {} speakers ({} listed) into {}",
                summary.n_utterances,
                summary.n_with_audio,
                summary.n_speakers,
                config.output_dir.display(),
            );
        }
        Command::Morph(args) => {
            let config = args.load()?;
            let summary = cmd_morph(&config, args.force)?;
            for (what, why) in &summary.failures {
                eprintln!("warning: {what} failed: {why}");
            }
            println!(
                "{}: {} generated, {} skipped, {} failed of {} jobs",
                summary.label,
                summary.generated,
                summary.skipped,
                summary.failures.len(),
                summary.n_jobs,
            );
        }
        Command::Calibrate(args) => {
            let config = args.load()?;
            let summary = cmd_calibrate(&config, args.force)?;
            println!(
                "calibrated {} thresholds from {} impostor trials",
                summary.table.entries.len(),
                summary.n_trials,
            );
            for entry in &summary.table.entries {
                println!(
                    "  FAR {}: threshold {:.6}, achieved {:.6}",
                    entry.target, entry.threshold, entry.achieved_far,
                );
            }
            for warning in &summary.warnings {
                println!("warning: {warning}");
            }
        }
        Command::Evaluate(args) => {
            let config = args.load()?;
            let report = cmd_evaluate(&config)?;
            print!("{}", report.render_table());
        }
        Command::Ablate { run, strategies } => {
            let config = run.load()?;
            let parsed: Vec<FusionStrategy> = strategies
                .iter()
                .map(|raw| parse_strategy(raw.trim(), config.fusion.alpha))
                .collect::<Result<_, _>>()?;
            let rows = cmd_ablate(&config, &parsed, run.force)?;
            print!(
                "{}",
                voxmorph::metrics::report::render_ablation_table(&rows)
            );
        }
        Command::Report(args) => {
            let config = args.load()?;
            print!("{}", cmd_report(&config)?);
        }
        Command::BackendStub { stage } => {
            run_stub(stage).map_err(RunnerError::Backend)?;
        }
    }
    Ok(())
}

/// Runs one toy pipeline stage against the external-backend file formats.
fn run_stub(stage: StubStage) -> Result<(), String> {
    use voxmorph::audio::mel::{read_mel, write_mel, MelConfig};
    use voxmorph::audio::wav::{read_wav, write_wav};
    use voxmorph::embedding::{write_embedding, EmbeddingMeta, SpeakerEmbedding};
    use voxmorph::pipeline::external::{read_fused_file, read_token_file, write_token_file};
    use voxmorph::pipeline::{
        AsvEncoder, EncoderBackend, MelDecoder, SynthesisOptions, TokenGenerator, Vocoder,
    };
    use voxmorph::toy::{ToyAsv, ToyEncoder, ToyMelDecoder, ToyTokenGenerator, ToyVocoder};

    let fail = |e: &dyn std::fmt::Display| e.to_string();
    let meta_for = |embedding: &SpeakerEmbedding| EmbeddingMeta {
        kind: embedding.kind(),
        dim: embedding.dim(),
        speaker_id: String::new(),
        clip_id: String::new(),
        encoder_name: "backend-stub".to_owned(),
        encoder_version: env!("CARGO_PKG_VERSION").to_owned(),
    };
    match stage {
        StubStage::Encode {
            wav,
            prosody_out,
            timbre_out,
        } => {
            let wave = read_wav(&wav).map_err(|e| fail(&e))?;
            let (prosody, timbre) = ToyEncoder.extract(&wave).map_err(|e| fail(&e))?;
            write_embedding(&prosody_out, &prosody, &meta_for(&prosody)).map_err(|e| fail(&e))?;
            write_embedding(&timbre_out, &timbre, &meta_for(&timbre)).map_err(|e| fail(&e))?;
        }
        StubStage::Tokens {
            text_file,
            prosody,
            seed,
            out,
        } => {
            let text = std::fs::read_to_string(&text_file).map_err(|e| fail(&e))?;
            let fused = read_fused_file(&prosody, "tokens").map_err(|e| fail(&e))?;
            let tokens = ToyTokenGenerator
                .generate(&text, &fused, seed)
                .map_err(|e| fail(&e))?;
            write_token_file(&out, &tokens).map_err(|e| fail(&e))?;
        }
        StubStage::Mel {
            tokens,
            timbre,
            steps,
            guidance,
            seed,
            out,
        } => {
            let tokens = read_token_file(&tokens, "decoder").map_err(|e| fail(&e))?;
            let fused = read_fused_file(&timbre, "decoder").map_err(|e| fail(&e))?;
            let options = SynthesisOptions {
                flow_steps: steps,
                guidance_scale: guidance,
                mel: MelConfig::default(),
            };
            let mel = ToyMelDecoder
                .synthesize(&tokens, &fused, &options, seed)
                .map_err(|e| fail(&e))?;
            write_mel(&mel, &out).map_err(|e| fail(&e))?;
        }
        StubStage::Vocode { mel, out } => {
            let mel = read_mel(&mel).map_err(|e| fail(&e))?;
            let wave = ToyVocoder.vocode(&mel).map_err(|e| fail(&e))?;
            write_wav(&wave, &out).map_err(|e| fail(&e))?;
        }
        StubStage::AsvEmbed { wav, out } => {
            let wave = read_wav(&wav).map_err(|e| fail(&e))?;
            let embedding = ToyAsv.embed(&wave).map_err(|e| fail(&e))?;
            write_embedding(&out, &embedding, &meta_for(&embedding)).map_err(|e| fail(&e))?;
        }
        StubStage::Transcribe { wav, out } => {
            // The toy set has no recognizer; a canned transcript is enough
            // to exercise the wire contract and the WER plumbing.
            read_wav(&wav).map_err(|e| fail(&e))?;
            std::fs::write(&out, DEFAULT_MORPH_TEXT).map_err(|e| fail(&e))?;
        }
    }
    Ok(())
}

fn fail(err: &RunnerError) -> ExitCode {
    let record = serde_json::json!({
        "error": { "kind": err.kind(), "message": err.to_string() }
    });
    eprintln!("{record}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(&RunnerError::Usage(e.to_string()));
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(&err),
    }
}
