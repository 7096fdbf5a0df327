//! `dwave` command line: corpus preparation, filtering, training,
//! enhancement, re-synthesis, and evaluation over JSON-lines manifests,
//! 16-bit PCM WAV audio, and the binary feature/checkpoint containers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dwave", version, about = "Diffusion waveform synthesis and speech enhancement")]
struct Cli {
    /// Base preset: `paper` (16 kHz, full-size) or `desk` (8 kHz, CPU-sized).
    #[arg(long, global = true, default_value = "paper")]
    preset: String,

    /// Optional TOML config layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Config overrides as dotted key=value pairs, e.g. `train.total_steps=500`.
    #[arg(long = "set", global = true, action = clap::ArgAction::Append)]
    overrides: Vec<String>,

    /// Master seed; per-utterance streams are derived from (seed, id).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract conditioning features for each utterance into .featbin files.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Views to extract (comma separated: av,a,v,avn).
        #[arg(long, default_value = "a")]
        views: String,
        /// Recompute files that already exist.
        #[arg(long)]
        force: bool,
    },
    /// Keep utterances whose quality score exceeds a threshold.
    Filter {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: f64,
        /// `oracle` (needs mixed+clean pairs) or `energy` (reference-free).
        #[arg(long, default_value = "energy")]
        estimator: String,
    },
    /// Mix interferers into clean utterances at band-sampled SNRs.
    Mix {
        #[arg(long)]
        manifest: PathBuf,
        /// Manifest whose clean_audio_path entries provide interferers.
        #[arg(long)]
        interferers: PathBuf,
        /// Interferer type: speech or noise.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage-1 vocoder training on a (filtered) clean corpus.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional held-out manifest for loss reporting.
        #[arg(long)]
        heldout: Option<PathBuf>,
    },
    /// Stage-2 fine-tuning from a checkpoint on clean/noisy pairs.
    Finetune {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `pairs` (noisy-view conditioning) or `clean-audio` (audio view).
        #[arg(long, default_value = "pairs")]
        stage: String,
        /// Interferer manifest enabling on-the-fly remixing.
        #[arg(long)]
        interferers: Option<PathBuf>,
        #[arg(long)]
        heldout: Option<PathBuf>,
    },
    /// Synthesize clean speech from the noisy side of each record.
    Enhance {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `ancestral`, `cont-N`, or `ddim-K`.
        #[arg(long, default_value = "ancestral")]
        sampler: String,
    },
    /// Re-synthesize the clean signal from its own features.
    Resynth {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Clean-signal view to condition on: a, av, or v.
        #[arg(long, default_value = "a")]
        view: String,
        #[arg(long, default_value = "ancestral")]
        sampler: String,
    },
    /// Score (estimate, reference) pairs: SI-SDR and log-mel distance.
    Eval {
        /// Manifest whose mixed_audio_path holds the estimate and
        /// clean_audio_path the reference.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_worker_pool() {
    if let Ok(raw) = std::env::var("DWAVE_NUM_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_worker_pool();
    let cli = Cli::parse();
    let config = match config::load_config(&cli.preset, cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Features { manifest, out, views, force } => {
            commands::features::run(&config, cli.seed, manifest, out, views, *force)
        }
        Command::Filter { manifest, out, threshold, estimator } => {
            commands::filter::run(&config, cli.seed, manifest, out, *threshold, estimator)
        }
        Command::Mix { manifest, interferers, kind, out } => {
            commands::mix::run(&config, cli.seed, manifest, interferers, kind, out)
        }
        Command::Train { manifest, out, heldout } => {
            commands::train::run_stage1(&config, cli.seed, manifest, out, heldout.as_deref())
        }
        Command::Finetune { manifest, checkpoint, out, stage, interferers, heldout } => {
            commands::train::run_stage2(
                &config,
                cli.seed,
                manifest,
                checkpoint,
                out,
                stage,
                interferers.as_deref(),
                heldout.as_deref(),
            )
        }
        Command::Enhance { manifest, checkpoint, out, sampler } => {
            commands::enhance::run_enhance(&config, cli.seed, manifest, checkpoint, out, sampler)
        }
        Command::Resynth { manifest, checkpoint, out, view, sampler } => {
            commands::enhance::run_resynth(
                &config, cli.seed, manifest, checkpoint, out, view, sampler,
            )
        }
        Command::Eval { manifest, out } => commands::eval::run(&config, cli.seed, manifest, out),
    };
    match outcome {
        Ok(failures) if failures == 0 => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} item(s) failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
