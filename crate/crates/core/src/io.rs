//! CSV + JSON sidecar file formats.
//!
//! Code sets: `kernel_index,time_s,amplitude` rows in extraction order.
//! Spike patterns: `channel,time_s` rows sorted by time. Each CSV has a JSON
//! sidecar next to it (same stem, `.json` extension). Floats are written in
//! shortest round-trip form, so reading a file back gives the exact values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::codec::{Code, CodeSet, SignalMeta};
use crate::error::{Error, Result};
use crate::itp::{IntensityMap, SpikeEvent, Spiketrum, Strategy};
use crate::kernels::KernelBank;
use crate::snn::StaReport;

pub const CODESET_HEADER: &str = "kernel_index,time_s,amplitude";
pub const SPIKE_HEADER: &str = "channel,time_s";

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes all files to temporaries first, then renames them into place.
/// Nothing is left behind if any write fails.
pub fn write_files_atomic(files: &[(&Path, &[u8])]) -> Result<()> {
    let mut written = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let tmp = temp_path(path);
        if let Err(e) = fs::write(&tmp, bytes) {
            for t in &written {
                let _ = fs::remove_file(t);
            }
            return Err(io_err(path)(e));
        }
        written.push(tmp);
    }
    for ((path, _), tmp) in files.iter().zip(&written) {
        if let Err(e) = fs::rename(tmp, path) {
            for t in &written {
                let _ = fs::remove_file(t);
            }
            return Err(io_err(path)(e));
        }
    }
    Ok(())
}

/// [`write_files_atomic`] over owned paths and contents.
pub fn write_owned_atomic(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let refs: Vec<(&Path, &[u8])> = files
        .iter()
        .map(|(p, b)| (p.as_path(), b.as_slice()))
        .collect();
    write_files_atomic(&refs)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("sidecar serializes");
    v.push(b'\n');
    v
}

/// Data rows of a CSV with the given header, as `(line number, fields)`.
fn rows<'a>(
    path: &'a Path,
    text: &'a str,
    header: &'a str,
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        other => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!(
                    "expected header {header:?}, found {:?}",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            })
        }
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    fields: &[&str],
    i: usize,
    name: &str,
) -> Result<T> {
    let raw = fields.get(i).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("missing column {name}"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid {name} {raw:?}"),
    })
}

fn offset_from_time(path: &Path, line: usize, t: f64, meta: &SignalMeta) -> Result<usize> {
    let off = (t * meta.sample_rate).round();
    if !(off >= 0.0) || off as usize >= meta.num_samples.max(1) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("time {t} s outside the signal duration {} s", meta.duration()),
        });
    }
    Ok(off as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSetSidecar {
    pub bank_fingerprint: String,
    pub sample_rate: f64,
    pub duration: f64,
    pub num_samples: usize,
    pub residual_energy_ratio: f64,
}

pub fn codeset_csv(codes: &CodeSet) -> String {
    let mut out = String::with_capacity(32 * codes.len() + 40);
    out.push_str(CODESET_HEADER);
    out.push('\n');
    let sr = codes.meta.sample_rate;
    for c in &codes.codes {
        let _ = writeln!(out, "{},{},{}", c.kernel_index, c.time(sr), c.amplitude);
    }
    out
}

/// CSV and sidecar contents for a code set written to `path`.
pub fn codeset_files(path: &Path, codes: &CodeSet) -> Vec<(PathBuf, Vec<u8>)> {
    let sidecar = CodeSetSidecar {
        bank_fingerprint: codes.bank_fingerprint.clone(),
        sample_rate: codes.meta.sample_rate,
        duration: codes.meta.duration(),
        num_samples: codes.meta.num_samples,
        residual_energy_ratio: codes.residual_energy_ratio,
    };
    vec![
        (path.to_path_buf(), codeset_csv(codes).into_bytes()),
        (sidecar_path(path), to_json(&sidecar)),
    ]
}

pub fn write_codeset(path: &Path, codes: &CodeSet) -> Result<()> {
    write_owned_atomic(&codeset_files(path, codes))
}

pub fn read_codeset(path: &Path) -> Result<CodeSet> {
    let side: CodeSetSidecar = read_json(&sidecar_path(path))?;
    let meta = SignalMeta {
        sample_rate: side.sample_rate,
        num_samples: side.num_samples,
    };
    let text = read_text(path)?;
    let mut codes = Vec::new();
    for (line, f) in rows(path, &text, CODESET_HEADER)? {
        let kernel_index: usize = field(path, line, &f, 0, "kernel_index")?;
        let t: f64 = field(path, line, &f, 1, "time_s")?;
        let amplitude: f64 = field(path, line, &f, 2, "amplitude")?;
        if kernel_index < 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "kernel_index must be >= 1".into(),
            });
        }
        codes.push(Code {
            kernel_index,
            offset: offset_from_time(path, line, t, &meta)?,
            amplitude,
        });
    }
    Ok(CodeSet {
        codes,
        residual_energy_ratio: side.residual_energy_ratio,
        bank_fingerprint: side.bank_fingerprint,
        meta,
        energy_trace: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSidecar {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub strategy: Strategy,
    pub levels: Vec<f64>,
    pub normalization_scale: f64,
    pub duration: f64,
    pub num_samples: usize,
    pub sample_rate: f64,
    pub bank_fingerprint: String,
    #[serde(default)]
    pub negative_events: Vec<usize>,
}

pub fn spike_csv(spikes: &Spiketrum) -> String {
    let mut out = String::with_capacity(24 * spikes.len() + 20);
    out.push_str(SPIKE_HEADER);
    out.push('\n');
    let sr = spikes.meta.sample_rate;
    for e in &spikes.events {
        let _ = writeln!(out, "{},{}", e.channel, e.time(sr));
    }
    out
}

/// CSV and sidecar contents for a spike pattern written to `path`.
pub fn spiketrum_files(path: &Path, spikes: &Spiketrum) -> Vec<(PathBuf, Vec<u8>)> {
    let map = &spikes.intensity_map;
    let sidecar = SpikeSidecar {
        k: map.k(),
        m: spikes.num_kernels,
        strategy: map.strategy,
        levels: map.levels.clone(),
        normalization_scale: map.normalization_scale,
        duration: spikes.meta.duration(),
        num_samples: spikes.meta.num_samples,
        sample_rate: spikes.meta.sample_rate,
        bank_fingerprint: spikes.bank_fingerprint.clone(),
        negative_events: spikes.negative_events.clone(),
    };
    vec![
        (path.to_path_buf(), spike_csv(spikes).into_bytes()),
        (sidecar_path(path), to_json(&sidecar)),
    ]
}

pub fn write_spiketrum(path: &Path, spikes: &Spiketrum) -> Result<()> {
    write_owned_atomic(&spiketrum_files(path, spikes))
}

pub fn read_spiketrum(path: &Path) -> Result<Spiketrum> {
    let side: SpikeSidecar = read_json(&sidecar_path(path))?;
    if side.levels.len() != side.k {
        return Err(Error::validation(format!(
            "sidecar lists {} levels for K={}",
            side.levels.len(),
            side.k
        )));
    }
    let meta = SignalMeta {
        sample_rate: side.sample_rate,
        num_samples: side.num_samples,
    };
    let channels = side.k * side.m;
    let text = read_text(path)?;
    let mut events = Vec::new();
    for (line, f) in rows(path, &text, SPIKE_HEADER)? {
        let channel: usize = field(path, line, &f, 0, "channel")?;
        if channel < 1 || channel > channels {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("channel {channel} outside 1..={channels}"),
            });
        }
        let t: f64 = field(path, line, &f, 1, "time_s")?;
        events.push(SpikeEvent {
            channel,
            offset: offset_from_time(path, line, t, &meta)?,
        });
    }
    if events.windows(2).any(|w| (w[0].offset, w[0].channel) > (w[1].offset, w[1].channel)) {
        return Err(Error::validation(format!(
            "{}: events are not sorted by time then channel",
            path.display()
        )));
    }
    Ok(Spiketrum {
        events,
        num_kernels: side.m,
        meta,
        intensity_map: IntensityMap {
            strategy: side.strategy,
            levels: side.levels,
            normalization_scale: side.normalization_scale,
        },
        bank_fingerprint: side.bank_fingerprint,
        negative_events: side.negative_events,
    })
}

/// `kernel_index,center_frequency_hz,bandwidth_hz,length` per kernel.
pub fn kernel_table_csv(bank: &KernelBank) -> String {
    let mut out = String::from("kernel_index,center_frequency_hz,bandwidth_hz,length\n");
    for k in bank.kernels() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            k.index,
            k.center_frequency,
            k.bandwidth,
            k.len()
        );
    }
    out
}

/// Long-format waveforms: `kernel_index,sample,time_s,value`.
pub fn kernel_waveforms_csv(bank: &KernelBank) -> String {
    let mut out = String::from("kernel_index,sample,time_s,value\n");
    let sr = bank.sample_rate();
    for k in bank.kernels() {
        for (i, v) in k.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", k.index, i, i as f64 / sr, v);
        }
    }
    out
}

/// `channel,dt_bin,count` for every non-empty cell; `dt_bin` is 1-based
/// and covers `((dt_bin - 1) * bin_width, dt_bin * bin_width]`.
pub fn sta_csv(report: &StaReport) -> String {
    let mut out = String::from("channel,dt_bin,count\n");
    for (c, row) in report.joint.iter().enumerate() {
        for (b, &n) in row.iter().enumerate() {
            if n > 0 {
                let _ = writeln!(out, "{},{},{}", c + 1, b + 1, n);
            }
        }
    }
    out
}
