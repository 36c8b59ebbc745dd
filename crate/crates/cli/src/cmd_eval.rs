use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use spiketrum::corpus::{audio_like, babble, event_corpus, exponential_kernel_sum};
use spiketrum::io::write_owned_atomic;
use spiketrum::itp::{make_intensity_map_with_floor, spike_spread};
use spiketrum::metrics::{add_noise, bootstrap_overall, quantile};
use spiketrum::{
    encode, entropy, itp_decode, itp_encode, precision, psth, reconstruct, similarity_report,
    CodeSet, EncoderParams, KernelBank, PsthMode, Signal, Spiketrum, Strategy,
};

use crate::audio::read_wav;
use crate::cmd_codec::build_bank;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::grid::{parse_list, parse_values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusKind {
    /// Labelled synthetic sound events.
    Events,
    /// Unlabelled tone/glide/noise mixtures.
    Audio,
    /// Random Gammatone atoms with exponential amplitudes.
    KernelSum,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// WAV inputs instead of the synthetic corpus; each file's parent
    /// directory name is its class label.
    pub inputs: Vec<PathBuf>,

    /// Synthetic corpus used when no inputs are given.
    #[arg(long, value_enum, default_value = "events")]
    pub corpus: CorpusKind,

    /// Number of event classes (at most 10).
    #[arg(long, default_value_t = 10)]
    pub classes: usize,

    /// Samples per class; unlabelled corpora generate classes * per-class signals.
    #[arg(long, default_value_t = 5)]
    pub per_class: usize,

    /// Seconds per synthetic sample.
    #[arg(long, default_value_t = 0.5)]
    pub duration: f64,

    /// Mix babble noise into every sample at this SNR.
    #[arg(long)]
    pub snr_db: Option<f64>,
}

pub struct Sample {
    pub name: String,
    pub label: String,
    pub signal: Signal,
}

fn label_of(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_corpus(args: &CorpusArgs, bank: &KernelBank, seed: u64) -> CliResult<Vec<Sample>> {
    let sr = bank.sample_rate();
    let mut samples = Vec::new();
    if !args.inputs.is_empty() {
        for path in &args.inputs {
            let (signal, notice) = read_wav(path, sr)?;
            if let Some(n) = notice {
                eprintln!("{n}");
            }
            samples.push(Sample {
                name: path.display().to_string(),
                label: label_of(path),
                signal,
            });
        }
    } else {
        if args.classes == 0 || args.per_class == 0 || !(args.duration > 0.0) {
            return Err(CliError::config(
                "--classes, --per-class and --duration must be positive",
            ));
        }
        let n = args.classes * args.per_class;
        match args.corpus {
            CorpusKind::Events => {
                if args.classes > spiketrum::corpus::NUM_EVENT_CLASSES {
                    return Err(CliError::config(format!(
                        "--classes {} exceeds the {} synthetic event classes",
                        args.classes,
                        spiketrum::corpus::NUM_EVENT_CLASSES
                    )));
                }
                for (i, (signal, c)) in event_corpus(args.classes, args.per_class, args.duration, sr, seed)
                    .into_iter()
                    .enumerate()
                {
                    samples.push(Sample {
                        name: format!("event-{c}-{}", i % args.per_class),
                        label: c.to_string(),
                        signal,
                    });
                }
            }
            CorpusKind::Audio => {
                for i in 0..n {
                    samples.push(Sample {
                        name: format!("audio-{i}"),
                        label: String::new(),
                        signal: audio_like(args.duration, sr, seed.wrapping_add(i as u64)),
                    });
                }
            }
            CorpusKind::KernelSum => {
                for i in 0..n {
                    samples.push(Sample {
                        name: format!("kernel-sum-{i}"),
                        label: String::new(),
                        signal: exponential_kernel_sum(bank, args.duration, 400.0, seed.wrapping_add(i as u64)).0,
                    });
                }
            }
        }
    }
    if let Some(snr) = args.snr_db {
        for (i, s) in samples.iter_mut().enumerate() {
            let noise = babble(s.signal.duration(), sr, seed ^ 0xB4BB1E);
            s.signal = add_noise(&s.signal, &noise, snr, seed.wrapping_add(i as u64))?;
        }
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Report {
    /// Precision against spike rate, K and strategy.
    Precision,
    /// Entropy and redundancy against spike rate.
    Entropy,
    /// Within/among-class PSTH similarity against spike rate.
    Similarity,
    /// Spike rasters for a decreasing spike rate.
    Structure,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum, default_value = "precision")]
    pub report: Report,

    /// Spike rates: start:stop:step or a comma list.
    #[arg(long, visible_alias = "lambda")]
    pub lambdas: Option<String>,

    /// Intensity level counts, comma separated.
    #[arg(long)]
    pub k_levels: Option<String>,

    /// Strategies, comma separated.
    #[arg(long)]
    pub strategies: Option<String>,

    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,

    /// Refuse grids needing more pursuit iterations than this.
    #[arg(long, default_value_t = 20_000_000)]
    pub max_iterations: u64,

    /// Bootstrap resamples for the similarity interval.
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,

    #[command(flatten)]
    pub corpus: CorpusArgs,
}

struct Grid {
    lambdas: Vec<f64>,
    ks: Vec<usize>,
    strategies: Vec<Strategy>,
}

fn grid(cfg: &RunConfig, args: &EvalArgs) -> CliResult<Grid> {
    let (lambdas, ks, strategies) = match args.report {
        Report::Precision => ("100:5000:100", "5,30,100", "log,linear"),
        Report::Structure => ("100:1100:100", "", ""),
        _ => ("500:3000:500", "", ""),
    };
    let bad = CliError::config;
    let lambdas = parse_values(args.lambdas.as_deref().unwrap_or(lambdas)).map_err(bad)?;
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(CliError::config("spike rates must be positive"));
    }
    let ks = match args.k_levels.as_deref().or((!ks.is_empty()).then_some(ks)) {
        Some(s) => parse_list(s).map_err(bad)?,
        None => vec![cfg.itp.k],
    };
    let strategies = match args.strategies.as_deref().or((!strategies.is_empty()).then_some(strategies)) {
        Some(s) => parse_list(s).map_err(bad)?,
        None => vec![cfg.itp.strategy],
    };
    if ks.contains(&0) {
        return Err(CliError::config("K must be >= 1"));
    }
    Ok(Grid {
        lambdas,
        ks,
        strategies,
    })
}

fn spikes_for(codes: &CodeSet, k: usize, s: Strategy, cfg: &RunConfig, m: usize) -> CliResult<Spiketrum> {
    let map = make_intensity_map_with_floor(codes, k, s, cfg.itp.c_min)?;
    Ok(itp_encode(codes, &map, m)?)
}

pub fn eval(cfg: RunConfig, args: EvalArgs) -> CliResult<()> {
    cfg.validate()?;
    let grid = grid(&cfg, &args)?;
    let bank = build_bank(&cfg)?;
    let samples = load_corpus(&args.corpus, &bank, cfg.seed)?;
    let max_rate = grid.lambdas.iter().cloned().fold(0.0, f64::max);
    let iterations: f64 = samples
        .iter()
        .map(|s| (max_rate * s.signal.duration()).round())
        .sum();
    let cells = samples.len() * grid.lambdas.len() * grid.ks.len() * grid.strategies.len();
    if iterations > args.max_iterations as f64 {
        return Err(CliError::config(format!(
            "grid of {cells} cells over {} signals needs about {iterations:.0} pursuit iterations, \
             above --max-iterations {}; shrink the grid or raise the limit",
            samples.len(),
            args.max_iterations
        )));
    }

    let encoded: Vec<CodeSet> = samples
        .par_iter()
        .map(|s| {
            let params = EncoderParams {
                target_spike_rate: Some(max_rate),
                ..cfg.encoder.clone()
            };
            encode(&s.signal, &bank, &params)
        })
        .collect::<Result<_, _>>()?;
    let prefix = |codes: &CodeSet, s: &Sample, rate: f64| {
        let n = (rate * s.signal.duration()).round() as usize;
        codes.truncated(n)
    };

    let (csv, summary) = match args.report {
        Report::Precision => precision_table(&cfg, &grid, &bank, &samples, &encoded, prefix)?,
        Report::Entropy => entropy_table(&cfg, &grid, &bank, &samples, &encoded, prefix)?,
        Report::Similarity => similarity_table(&cfg, &grid, &bank, &samples, &encoded, prefix, args.resamples)?,
        Report::Structure => structure_table(&cfg, &grid, &bank, &samples, &encoded, prefix)?,
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_owned_atomic(&[(args.out.clone(), csv.into_bytes())])?;
    println!("{} signals, {cells} cells; {summary}", samples.len());
    Ok(())
}

type Prefix = fn(&CodeSet, &Sample, f64) -> CodeSet;

fn precision_table(
    cfg: &RunConfig,
    grid: &Grid,
    bank: &KernelBank,
    samples: &[Sample],
    encoded: &[CodeSet],
    prefix: Prefix,
) -> CliResult<(String, String)> {
    let rows: Vec<Vec<String>> = samples
        .par_iter()
        .zip(encoded)
        .map(|(s, all)| -> CliResult<Vec<String>> {
            let mut rows = Vec::new();
            let x = &s.signal;
            for &rate in &grid.lambdas {
                let codes = prefix(all, s, rate);
                let analog = precision(x, &reconstruct(&codes, bank, x.duration())?).unwrap_or(f64::NAN);
                for &k in &grid.ks {
                    for &st in &grid.strategies {
                        let spikes = spikes_for(&codes, k, st, cfg, bank.len())?;
                        let y = reconstruct(&itp_decode(&spikes)?, bank, x.duration())?;
                        rows.push(format!(
                            "{},{},{},{},{},{},{},{},{},{}",
                            s.name,
                            s.label,
                            rate,
                            k,
                            st,
                            spikes.len(),
                            spikes.len() as f64 / x.duration(),
                            precision(x, &y).unwrap_or(f64::NAN),
                            analog,
                            spike_spread(&spikes).occupancy
                        ));
                    }
                }
            }
            Ok(rows)
        })
        .collect::<CliResult<_>>()?;
    let mut csv = String::from(
        "signal,label,lambda,K,strategy,spikes,spike_rate,precision,precision_analog,occupancy\n",
    );
    for r in rows.iter().flatten() {
        csv.push_str(r);
        csv.push('\n');
    }
    Ok((csv, format!("{} rows", rows.iter().map(Vec::len).sum::<usize>())))
}

fn entropy_table(
    cfg: &RunConfig,
    grid: &Grid,
    bank: &KernelBank,
    samples: &[Sample],
    encoded: &[CodeSet],
    prefix: Prefix,
) -> CliResult<(String, String)> {
    let rows: Vec<Vec<String>> = samples
        .par_iter()
        .zip(encoded)
        .map(|(s, all)| -> CliResult<Vec<String>> {
            let mut rows = Vec::new();
            for &rate in &grid.lambdas {
                let codes = prefix(all, s, rate);
                for &k in &grid.ks {
                    for &st in &grid.strategies {
                        let spikes = spikes_for(&codes, k, st, cfg, bank.len())?;
                        let e = entropy(&spikes, cfg.metrics.bin_width, cfg.metrics.entropy_window)?;
                        rows.push(format!(
                            "{},{},{},{},{},{},{},{},{},{}",
                            s.name,
                            s.label,
                            rate,
                            k,
                            st,
                            spikes.len(),
                            e.per_channel_entropy_sum,
                            e.population_entropy,
                            e.redundancy,
                            e.active_channels
                        ));
                    }
                }
            }
            Ok(rows)
        })
        .collect::<CliResult<_>>()?;
    let mut csv = String::from(
        "signal,label,lambda,K,strategy,spikes,per_channel_entropy_sum,population_entropy,redundancy,active_channels\n",
    );
    for r in rows.iter().flatten() {
        csv.push_str(r);
        csv.push('\n');
    }
    Ok((csv, format!("{} rows", rows.iter().map(Vec::len).sum::<usize>())))
}

fn similarity_table(
    cfg: &RunConfig,
    grid: &Grid,
    bank: &KernelBank,
    samples: &[Sample],
    encoded: &[CodeSet],
    prefix: Prefix,
    resamples: usize,
) -> CliResult<(String, String)> {
    let mut names: Vec<&str> = samples.iter().map(|s| s.label.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() < 2 {
        return Err(CliError::data(
            "similarity needs at least two class labels (use --corpus events or labelled input directories)",
        ));
    }
    let labels: Vec<usize> = samples
        .iter()
        .map(|s| names.binary_search(&s.label.as_str()).unwrap_or(0))
        .collect();
    let mut csv = String::from(
        "lambda,K,strategy,m_within,m_among,m_overall,ci_low,ci_high,degenerate_pairs\n",
    );
    let mut last = 0.0;
    for &rate in &grid.lambdas {
        for &k in &grid.ks {
            for &st in &grid.strategies {
                let psths: Vec<Vec<f64>> = samples
                    .par_iter()
                    .zip(encoded)
                    .map(|(s, all)| -> CliResult<Vec<f64>> {
                        let spikes = spikes_for(&prefix(all, s, rate), k, st, cfg, bank.len())?;
                        Ok(psth(&spikes, cfg.metrics.psth_bin_width, PsthMode::PerChannel)?)
                    })
                    .collect::<CliResult<_>>()?;
                let r = similarity_report(&psths, &labels)?;
                let boot = bootstrap_overall(&r.matrix, &labels, resamples, cfg.seed);
                let _ = writeln!(
                    csv,
                    "{rate},{k},{st},{},{},{},{},{},{}",
                    r.m_within,
                    r.m_among,
                    r.m_overall,
                    quantile(&boot, 0.025),
                    quantile(&boot, 0.975),
                    r.degenerate_pairs
                );
                last = r.m_overall;
            }
        }
    }
    Ok((csv, format!("last m_overall {last:.4}")))
}

fn structure_table(
    cfg: &RunConfig,
    grid: &Grid,
    bank: &KernelBank,
    samples: &[Sample],
    encoded: &[CodeSet],
    prefix: Prefix,
) -> CliResult<(String, String)> {
    let mut csv = String::from("signal,lambda,K,strategy,channel,time_s\n");
    let mut rates = grid.lambdas.clone();
    rates.sort_by(|a, b| b.total_cmp(a));
    let mut rows = 0;
    for (s, all) in samples.iter().zip(encoded) {
        for &rate in &rates {
            for &k in &grid.ks {
                for &st in &grid.strategies {
                    let spikes = spikes_for(&prefix(all, s, rate), k, st, cfg, bank.len())?;
                    let sr = spikes.meta.sample_rate;
                    for e in &spikes.events {
                        let _ = writeln!(csv, "{},{rate},{k},{st},{},{}", s.name, e.channel, e.time(sr));
                        rows += 1;
                    }
                }
            }
        }
    }
    Ok((csv, format!("{rows} raster rows")))
}
