use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spiketrum::io::{read_json, sta_csv, to_json, write_owned_atomic};
use spiketrum::snn::{init_neurons, spike_triggered_average, Checkpoint};
use spiketrum::{
    classify as classify_pattern, encode, tempotron_train, EncoderParams, KernelBank,
    KernelBankConfig, ReadoutGroups, Spiketrum,
};

use crate::cmd_codec::{build_bank, to_spikes};
use crate::cmd_eval::{load_corpus, CorpusArgs, CorpusKind, Sample};
use crate::config::{ItpConfig, RunConfig};
use crate::error::{CliError, CliResult};

/// Trained readout plus everything needed to encode new inputs the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub checkpoint: Checkpoint,
    pub bank: KernelBankConfig,
    pub bank_fingerprint: String,
    pub rate: f64,
    pub itp: ItpConfig,
    /// Class label names, indexed by group label.
    pub labels: Vec<String>,
    pub seed: u64,
    pub classes: usize,
    pub per_class: usize,
    pub duration: f64,
}

fn patterns(
    samples: &[Sample],
    bank: &KernelBank,
    cfg: &RunConfig,
    rate: f64,
) -> CliResult<Vec<Spiketrum>> {
    samples
        .par_iter()
        .map(|s| {
            let params = EncoderParams {
                target_spike_rate: Some(rate),
                ..cfg.encoder.clone()
            };
            let codes = encode(&s.signal, bank, &params)?;
            to_spikes(&codes, cfg, bank)
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,

    /// Encoding spike rate, spikes per second.
    #[arg(long, visible_alias = "lambda", default_value_t = 500.0)]
    pub rate: f64,

    /// Intensity levels per kernel.
    #[arg(long)]
    pub k_levels: Option<usize>,

    #[arg(long, default_value_t = 200)]
    pub epochs: usize,

    #[arg(long, default_value_t = 0.02)]
    pub learning_rate: f64,

    #[arg(long, default_value_t = 2)]
    pub neurons_per_class: usize,

    /// Standard deviation of the initial weights.
    #[arg(long, default_value_t = 0.01)]
    pub weight_std: f64,

    /// Per-epoch accuracy CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[arg(long, default_value_t = 5)]
    pub classes: usize,

    #[arg(long, default_value_t = 10)]
    pub per_class: usize,

    /// Seconds per synthetic sample.
    #[arg(long, default_value_t = 0.3)]
    pub duration: f64,
}

fn event_args(classes: usize, per_class: usize, duration: f64, snr_db: Option<f64>) -> CorpusArgs {
    CorpusArgs {
        inputs: Vec::new(),
        corpus: CorpusKind::Events,
        classes,
        per_class,
        duration,
        snr_db,
    }
}

pub fn train(mut cfg: RunConfig, args: TrainArgs) -> CliResult<()> {
    if let Some(k) = args.k_levels {
        cfg.itp.k = k;
    }
    cfg.validate()?;
    if !(args.rate > 0.0) || args.neurons_per_class == 0 || !(args.learning_rate >= 0.0) {
        return Err(CliError::config(
            "--rate and --neurons-per-class must be positive, --learning-rate non-negative",
        ));
    }
    let bank = build_bank(&cfg)?;
    let corpus = load_corpus(
        &event_args(args.classes, args.per_class, args.duration, None),
        &bank,
        cfg.seed,
    )?;
    let pats = patterns(&corpus, &bank, &cfg, args.rate)?;
    let data: Vec<(Spiketrum, usize)> = pats
        .into_iter()
        .zip(&corpus)
        .map(|(p, s)| (p, s.label.parse().unwrap_or(0)))
        .collect();
    let labels: Vec<usize> = (0..args.classes).collect();
    let groups = ReadoutGroups::uniform(&labels, args.neurons_per_class);
    let channels = cfg.itp.k * bank.len();
    let mut neurons = init_neurons(groups.num_neurons(), channels, args.weight_std, cfg.seed);
    let report = tempotron_train(
        &mut neurons,
        &data,
        &groups,
        args.epochs,
        args.learning_rate,
        cfg.seed,
    )?;

    let model = Model {
        checkpoint: Checkpoint { neurons, groups },
        bank: cfg.bank.clone(),
        bank_fingerprint: bank.fingerprint().to_string(),
        rate: args.rate,
        itp: cfg.itp.clone(),
        labels: labels.iter().map(|l| l.to_string()).collect(),
        seed: cfg.seed,
        classes: args.classes,
        per_class: args.per_class,
        duration: args.duration,
    };
    let mut files = vec![(args.out.clone(), to_json(&model))];
    if let Some(path) = &args.report {
        let mut csv = String::from("epoch,accuracy\n");
        for (i, a) in report.accuracy.iter().enumerate() {
            let _ = writeln!(csv, "{},{a}", i + 1);
        }
        files.push((path.clone(), csv.into_bytes()));
    }
    write_owned_atomic(&files)?;
    println!(
        "trained {} neurons on {} patterns for {} epochs, training accuracy {:.4}",
        model.checkpoint.neurons.len(),
        data.len(),
        report.epochs_run,
        report.accuracy.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn load_model(path: &PathBuf) -> CliResult<(Model, RunConfig, KernelBank)> {
    let model: Model = read_json(path)?;
    let cfg = RunConfig {
        bank: model.bank.clone(),
        itp: model.itp.clone(),
        seed: model.seed,
        ..RunConfig::default()
    };
    let bank = build_bank(&cfg)?;
    if bank.fingerprint() != model.bank_fingerprint {
        return Err(CliError::data(format!(
            "model bank fingerprint {} does not match the rebuilt bank {}",
            model.bank_fingerprint,
            bank.fingerprint()
        )));
    }
    model
        .checkpoint
        .groups
        .validate(model.checkpoint.neurons.len())?;
    Ok((model, cfg, bank))
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,

    /// WAV inputs; without them a held-out synthetic set is classified.
    pub inputs: Vec<PathBuf>,

    /// Seed of the held-out synthetic set (default: model seed + 1).
    #[arg(long)]
    pub test_seed: Option<u64>,

    /// Held-out samples per class.
    #[arg(long)]
    pub per_class: Option<usize>,

    /// Mix babble noise into every input at this SNR.
    #[arg(long)]
    pub snr_db: Option<f64>,

    /// Per-input predictions CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn classify(_cfg: RunConfig, args: ClassifyArgs) -> CliResult<()> {
    let (model, cfg, bank) = load_model(&args.model)?;
    let corpus_args = if args.inputs.is_empty() {
        event_args(
            model.classes,
            args.per_class.unwrap_or(model.per_class),
            model.duration,
            args.snr_db,
        )
    } else {
        CorpusArgs {
            inputs: args.inputs.clone(),
            ..event_args(1, 1, 1.0, args.snr_db)
        }
    };
    let seed = args.test_seed.unwrap_or(model.seed.wrapping_add(1));
    let samples = load_corpus(&corpus_args, &bank, seed)?;
    let pats = patterns(&samples, &bank, &cfg, model.rate)?;
    let ck = &model.checkpoint;
    let preds = pats
        .par_iter()
        .map(|p| classify_pattern(&ck.neurons, &ck.groups, p))
        .collect::<Result<Vec<_>, _>>()?;

    let mut csv = String::from("input,label,predicted,tie,readout_spikes\n");
    let (mut correct, mut labelled, mut spikes) = (0, 0, 0);
    for (s, p) in samples.iter().zip(&preds) {
        let predicted = model.labels.get(p.label).cloned().unwrap_or_default();
        if args.inputs.is_empty() {
            labelled += 1;
            correct += (!p.tie && predicted == s.label) as usize;
        }
        spikes += p.total_spikes();
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            s.name,
            s.label,
            predicted,
            p.tie,
            p.total_spikes()
        );
    }
    if let Some(out) = &args.out {
        write_owned_atomic(&[(out.clone(), csv.into_bytes())])?;
    } else {
        print!("{csv}");
    }
    let mean_spikes = spikes as f64 / samples.len().max(1) as f64;
    if labelled > 0 {
        println!(
            "accuracy {:.4} over {labelled} samples, mean readout spikes {mean_spikes:.3}",
            correct as f64 / labelled as f64
        );
    } else {
        println!("{} inputs, mean readout spikes {mean_spikes:.3}", samples.len());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct StaArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,

    /// Neuron index.
    #[arg(long, default_value_t = 0)]
    pub neuron: usize,

    /// Look-back window, seconds.
    #[arg(long, default_value_t = 0.12)]
    pub window: f64,

    /// Time bin, seconds.
    #[arg(long, default_value_t = 0.005)]
    pub bin: f64,

    /// Output CSV (channel, dt_bin, count).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn sta(_cfg: RunConfig, args: StaArgs) -> CliResult<()> {
    let (model, cfg, bank) = load_model(&args.model)?;
    let neuron = model.checkpoint.neurons.get(args.neuron).ok_or_else(|| {
        CliError::config(format!(
            "--neuron {} out of range, the model has {} neurons",
            args.neuron,
            model.checkpoint.neurons.len()
        ))
    })?;
    let samples = load_corpus(
        &event_args(model.classes, model.per_class, model.duration, None),
        &bank,
        model.seed,
    )?;
    let data: Vec<(Spiketrum, usize)> = patterns(&samples, &bank, &cfg, model.rate)?
        .into_iter()
        .map(|p| (p, 0))
        .collect();
    let report = spike_triggered_average(neuron, &data, args.window, args.bin)?;
    write_owned_atomic(&[(args.out.clone(), sta_csv(&report).into_bytes())])?;
    println!(
        "{} output spikes, {} input spikes in the window",
        report.post_spikes,
        report.total()
    );
    Ok(())
}
