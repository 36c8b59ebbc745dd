//! `spiketrum` command-line tool.

mod audio;
mod cmd_codec;
mod cmd_eval;
mod cmd_snn;
mod config;
mod error;
mod grid;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spiketrum::Strategy;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "spiketrum", version, about = "Sparse spike codec for audio")]
struct Cli {
    /// JSON run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

/// Encoder and intensity-coding overrides shared by several commands.
#[derive(Debug, Clone, Args, Default)]
pub struct CodecFlags {
    /// Target spike rate in spikes per second.
    #[arg(long, visible_alias = "lambda", conflicts_with = "n_spikes")]
    pub rate: Option<f64>,

    /// Fixed number of spikes.
    #[arg(long)]
    pub n_spikes: Option<usize>,

    /// Stop once the residual energy ratio falls to this value.
    #[arg(long)]
    pub min_energy_ratio: Option<f64>,

    /// Intensity levels per kernel.
    #[arg(long)]
    pub k_levels: Option<usize>,

    /// Intensity level spacing: log or linear.
    #[arg(long)]
    pub strategy: Option<Strategy>,
}

impl CodecFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(r) = self.rate {
            cfg.encoder.target_spike_rate = Some(r);
        }
        if let Some(n) = self.n_spikes {
            cfg.encoder.target_spike_rate = None;
            cfg.encoder.max_codes = n;
        }
        if let Some(e) = self.min_energy_ratio {
            cfg.encoder.min_energy_ratio = e;
        }
        if let Some(k) = self.k_levels {
            cfg.itp.k = k;
        }
        if let Some(s) = self.strategy {
            cfg.itp.strategy = s;
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the kernel bank: waveforms, center frequencies and config.
    Kernels(cmd_codec::KernelsArgs),
    /// Encode a WAV file to codes and spikes.
    Encode(cmd_codec::EncodeArgs),
    /// Reconstruct a WAV file from spikes.
    Decode(cmd_codec::DecodeArgs),
    /// Segment-buffered encoding of a WAV file or the test chirp.
    Stream(cmd_codec::StreamArgs),
    /// Precision, entropy, similarity and structure sweeps.
    Eval(cmd_eval::EvalArgs),
    /// Train a tempotron readout on the synthetic event corpus.
    Train(cmd_snn::TrainArgs),
    /// Classify WAV files or corpus samples with a trained readout.
    Classify(cmd_snn::ClassifyArgs),
    /// Spike-triggered input statistics of a trained neuron.
    Sta(cmd_snn::StaArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Kernels(a) => cmd_codec::kernels(cfg, a),
        Command::Encode(a) => cmd_codec::encode(cfg, a),
        Command::Decode(a) => cmd_codec::decode(cfg, a),
        Command::Stream(a) => cmd_codec::stream(cfg, a),
        Command::Eval(a) => cmd_eval::eval(cfg, a),
        Command::Train(a) => cmd_snn::train(cfg, a),
        Command::Classify(a) => cmd_snn::classify(cfg, a),
        Command::Sta(a) => cmd_snn::sta(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
