use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use spiketrum::io::{
    codeset_files, kernel_table_csv, kernel_waveforms_csv, read_spiketrum, spiketrum_files,
    to_json, write_owned_atomic,
};
use spiketrum::itp::make_intensity_map_with_floor;
use spiketrum::stream::{linear_chirp, segment_error, stream_codes};
use spiketrum::{
    encode as encode_signal, itp_decode, itp_encode, precision, reconstruct, spike_rate, CodeSet,
    EncoderParams, KernelBank, KernelBankConfig, Signal, Spiketrum,
};

use crate::audio::{read_wav, wav_bytes};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::CodecFlags;

/// `prefix` + `suffix`, e.g. `out/clip` + `.spikes.csv`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn build_bank(cfg: &RunConfig) -> CliResult<KernelBank> {
    Ok(KernelBank::build(cfg.bank.clone())?)
}

pub fn to_spikes(codes: &CodeSet, cfg: &RunConfig, bank: &KernelBank) -> CliResult<Spiketrum> {
    let map = make_intensity_map_with_floor(codes, cfg.itp.k, cfg.itp.strategy, cfg.itp.c_min)?;
    Ok(itp_encode(codes, &map, bank.len())?)
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Args)]
pub struct KernelsArgs {
    /// Output directory for kernels.csv, centers.csv and bank.json.
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Number of kernels.
    #[arg(long)]
    pub num_kernels: Option<usize>,
}

#[derive(Serialize)]
struct BankManifest<'a> {
    config: &'a KernelBankConfig,
    fingerprint: &'a str,
    kernel_lengths: Vec<usize>,
}

pub fn kernels(mut cfg: RunConfig, args: KernelsArgs) -> CliResult<()> {
    if let Some(m) = args.num_kernels {
        cfg.bank.num_kernels = m;
    }
    let bank = build_bank(&cfg)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let manifest = BankManifest {
        config: bank.config(),
        fingerprint: bank.fingerprint(),
        kernel_lengths: bank.kernels().iter().map(|k| k.len()).collect(),
    };
    write_owned_atomic(&[
        (args.out_dir.join("kernels.csv"), kernel_waveforms_csv(&bank).into_bytes()),
        (args.out_dir.join("centers.csv"), kernel_table_csv(&bank).into_bytes()),
        (args.out_dir.join("bank.json"), to_json(&manifest)),
    ])?;
    println!(
        "{} kernels, {}..{} Hz, longest {} samples, fingerprint {}",
        bank.len(),
        bank.config().f_min,
        bank.config().f_max,
        bank.max_kernel_len(),
        bank.fingerprint()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Mono WAV input.
    pub input: PathBuf,

    /// Output prefix; writes PREFIX.codes.csv and PREFIX.spikes.csv with JSON sidecars.
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub codec: CodecFlags,
}

pub fn encode(mut cfg: RunConfig, args: EncodeArgs) -> CliResult<()> {
    args.codec.apply(&mut cfg);
    cfg.validate()?;
    let bank = build_bank(&cfg)?;
    let (x, notice) = read_wav(&args.input, bank.sample_rate())?;
    if let Some(n) = notice {
        eprintln!("{n}");
    }
    let codes = encode_signal(&x, &bank, &cfg.encoder)?;
    let spikes = to_spikes(&codes, &cfg, &bank)?;
    let p_analog = precision_or_nan(&x, &reconstruct(&codes, &bank, x.duration())?);
    let p_spikes = precision_or_nan(
        &x,
        &reconstruct(&itp_decode(&spikes)?, &bank, x.duration())?,
    );

    ensure_parent(&args.out)?;
    let mut files = codeset_files(&with_suffix(&args.out, ".codes.csv"), &codes);
    files.extend(spiketrum_files(&with_suffix(&args.out, ".spikes.csv"), &spikes));
    write_owned_atomic(&files)?;
    println!(
        "spikes {} rate {:.3} Hz precision {:.6} (analog {:.6}) K={} {}",
        spikes.len(),
        spike_rate(&codes),
        p_spikes,
        p_analog,
        cfg.itp.k,
        cfg.itp.strategy
    );
    Ok(())
}

fn precision_or_nan(x: &Signal, y: &Signal) -> f64 {
    precision(x, y).unwrap_or(f64::NAN)
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Spike CSV with its JSON sidecar.
    pub spikes: PathBuf,

    /// Output WAV (32-bit float).
    #[arg(long)]
    pub out: PathBuf,

    /// Reference WAV to report precision and the error trace against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

pub fn decode(cfg: RunConfig, args: DecodeArgs) -> CliResult<()> {
    let spikes = read_spiketrum(&args.spikes)?;
    let bank = build_bank(&cfg)?;
    if spikes.bank_fingerprint != bank.fingerprint() {
        let c = bank.config();
        return Err(CliError::data(format!(
            "kernel bank mismatch: {} was encoded with bank {} ({} kernels at {} Hz), \
             the configured bank is {} ({} kernels, {} Hz, {}..{} Hz, order {}); \
             pass the --config used for encoding",
            args.spikes.display(),
            spikes.bank_fingerprint,
            spikes.num_kernels,
            spikes.meta.sample_rate,
            bank.fingerprint(),
            c.num_kernels,
            c.sample_rate,
            c.f_min,
            c.f_max,
            c.filter_order
        )));
    }
    let codes = itp_decode(&spikes)?;
    let y = reconstruct(&codes, &bank, spikes.duration())?;
    let mut report = String::new();
    if let Some(r) = &args.reference {
        let (reference, notice) = read_wav(r, bank.sample_rate())?;
        if let Some(n) = notice {
            eprintln!("{n}");
        }
        if reference.len() != y.len() {
            return Err(CliError::data(format!(
                "reference has {} samples, the decoded signal {}",
                reference.len(),
                y.len()
            )));
        }
        let trace = segment_error(&reference, &y, None)?;
        let _ = write!(
            report,
            " precision {:.6} rms error {:.3e} max error {:.3e}",
            precision_or_nan(&reference, &y),
            trace.rms,
            trace.max_abs
        );
    }
    ensure_parent(&args.out)?;
    write_owned_atomic(&[(args.out.clone(), wav_bytes(&y)?)])?;
    println!(
        "decoded {} spikes to {:.4} s{report}",
        spikes.len(),
        y.duration()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Mono WAV input; omit with --chirp.
    #[arg(required_unless_present = "chirp")]
    pub input: Option<PathBuf>,

    /// Stream the 5 s 20 Hz to 8 kHz test chirp instead of a file.
    #[arg(long, conflicts_with = "input")]
    pub chirp: bool,

    /// Output prefix; writes PREFIX.spikes.csv (+ .json) and PREFIX.segments.csv.
    #[arg(long)]
    pub out: PathBuf,

    /// Segment length in milliseconds.
    #[arg(long)]
    pub segment_ms: Option<f64>,

    /// Pursuit iterations per segment.
    #[arg(long)]
    pub budget: Option<usize>,

    /// Output channels, K times the number of kernels.
    #[arg(long)]
    pub channels: Option<usize>,

    /// Do not fill the buffer tail with upcoming input.
    #[arg(long)]
    pub strict: bool,

    /// Also encode the whole signal with the same spike count and write
    /// PREFIX.error.csv with the pointwise reconstruction difference.
    #[arg(long)]
    pub compare: bool,

    #[command(flatten)]
    pub codec: CodecFlags,
}

pub fn stream(mut cfg: RunConfig, args: StreamArgs) -> CliResult<()> {
    args.codec.apply(&mut cfg);
    cfg.validate()?;
    let bank = build_bank(&cfg)?;
    let mut sc = cfg.stream_config();
    if let Some(ms) = args.segment_ms {
        sc.segment_length = ms / 1000.0;
    }
    if let Some(b) = args.budget {
        sc.spikes_per_segment_budget = b;
    }
    if let Some(k) = args.codec.k_levels {
        sc.k = k;
    }
    if let Some(s) = args.codec.strategy {
        sc.strategy = s;
    }
    if let Some(c) = args.channels {
        if c == 0 || c % bank.len() != 0 {
            return Err(CliError::config(format!(
                "--channels {c} is not a positive multiple of the {} kernels",
                bank.len()
            )));
        }
        sc.k = c / bank.len();
    }
    sc.lookahead = !args.strict;

    let x = match &args.input {
        Some(path) => {
            let (x, notice) = read_wav(path, bank.sample_rate())?;
            if let Some(n) = notice {
                eprintln!("{n}");
            }
            x
        }
        None => linear_chirp(20.0, 8000.0, 5.0, 0.5, bank.sample_rate()),
    };
    let out = stream_codes(&x, &bank, &sc)?;
    let map = make_intensity_map_with_floor(&out.codes, sc.k, sc.strategy, sc.c_min)?;
    let spikes = itp_encode(&out.codes, &map, bank.len())?;

    let sr = bank.sample_rate();
    let mut seg_csv =
        String::from("segment_index,start_s,duration_s,budget,codes_emitted,energy_in,energy_out\n");
    for s in &out.segments {
        let _ = writeln!(
            seg_csv,
            "{},{},{},{},{},{},{}",
            s.segment_index,
            s.start as f64 / sr,
            s.len as f64 / sr,
            s.budget,
            s.codes_emitted,
            s.energy_trace[0],
            s.energy_trace[s.energy_trace.len() - 1]
        );
    }

    ensure_parent(&args.out)?;
    let mut files = spiketrum_files(&with_suffix(&args.out, ".spikes.csv"), &spikes);
    files.push((with_suffix(&args.out, ".segments.csv"), seg_csv.into_bytes()));
    let segmented = reconstruct(&out.codes, &bank, x.duration())?;
    let mut summary = format!(
        "segments {} spikes {} K={} precision {:.6}",
        out.segments.len(),
        spikes.len(),
        sc.k,
        precision_or_nan(&x, &segmented)
    );
    if args.compare {
        let params = EncoderParams {
            max_codes: out.codes.len(),
            min_energy_ratio: 0.0,
            target_spike_rate: None,
            selection: cfg.encoder.selection,
        };
        let whole = encode_signal(&x, &bank, &params)?;
        let full = reconstruct(&whole, &bank, x.duration())?;
        let trace = segment_error(&full, &segmented, Some(&x))?;
        let mut csv = String::from("time_s,full,segmented,difference\n");
        for (i, d) in trace.difference.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                i as f64 / sr,
                full.samples[i],
                segmented.samples[i],
                d
            );
        }
        files.push((with_suffix(&args.out, ".error.csv"), csv.into_bytes()));
        let _ = write!(
            summary,
            " whole-signal precision {:.6} rms difference {:.3e}",
            precision_or_nan(&x, &full),
            trace.rms
        );
    }
    write_owned_atomic(&files)?;
    println!("{summary}");
    Ok(())
}
