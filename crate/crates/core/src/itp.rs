//! Intensity-to-place coding.
//!
//! Each kernel owns `K` output channels with fixed characteristic
//! intensities. A code fires one spike, at its own time, on the channel of
//! its kernel whose intensity is nearest to the normalized amplitude:
//! `h = K (m - 1) + k`.

use serde::{Deserialize, Serialize};

use crate::codec::{Code, CodeSet, SignalMeta};
use crate::error::{Error, Result};

/// Default lower end of the logarithmic level grid (60 dB below full scale).
pub const DEFAULT_C_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Log,
    Linear,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Strategy::Log),
            "linear" => Ok(Strategy::Linear),
            other => Err(Error::config(format!(
                "unknown strategy {other:?}, expected \"log\" or \"linear\""
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Log => "log",
            Strategy::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityMap {
    pub strategy: Strategy,
    pub levels: Vec<f64>,
    pub normalization_scale: f64,
}

impl IntensityMap {
    /// Characteristic intensities on `(0, 1]`, strictly increasing.
    pub fn level_grid(k: usize, strategy: Strategy, c_min: f64) -> Result<Vec<f64>> {
        if k < 1 {
            return Err(Error::config("number of intensity levels K must be >= 1"));
        }
        if !(c_min > 0.0 && c_min < 1.0) {
            return Err(Error::config(format!("c_min must lie in (0, 1), got {c_min}")));
        }
        if k == 1 {
            return Ok(vec![1.0]);
        }
        Ok(match strategy {
            Strategy::Linear => (1..=k).map(|i| i as f64 / k as f64).collect(),
            Strategy::Log => {
                let lo = c_min.log10();
                (0..k)
                    .map(|i| {
                        if i == k - 1 {
                            1.0
                        } else {
                            10f64.powf(lo * (1.0 - i as f64 / (k - 1) as f64))
                        }
                    })
                    .collect()
            }
        })
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    /// 1-based level nearest to a normalized amplitude; ties go to the lower level.
    pub fn nearest_level(&self, normalized: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, &c) in self.levels.iter().enumerate() {
            let d = (c - normalized).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best + 1
    }

    /// Worst-case amplitude error of a quantize/dequantize round trip for
    /// any amplitude with `|s| <= normalization_scale`.
    pub fn quantization_bound(&self) -> f64 {
        let half_gap = self
            .levels
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]))
            .fold(0.0, f64::max);
        // Amplitudes below the first level all round up to it.
        half_gap.max(self.levels[0]) * self.normalization_scale
    }
}

pub fn make_intensity_map(codes: &CodeSet, k: usize, strategy: Strategy) -> Result<IntensityMap> {
    make_intensity_map_with_floor(codes, k, strategy, DEFAULT_C_MIN)
}

/// [`make_intensity_map`] with an explicit lower end for the log grid.
pub fn make_intensity_map_with_floor(
    codes: &CodeSet,
    k: usize,
    strategy: Strategy,
    c_min: f64,
) -> Result<IntensityMap> {
    let levels = IntensityMap::level_grid(k, strategy, c_min)?;
    let max = codes
        .codes
        .iter()
        .map(|c| c.amplitude.abs())
        .fold(0.0, f64::max);
    Ok(IntensityMap {
        strategy,
        levels,
        normalization_scale: if max > 0.0 { max } else { 1.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpikeEvent {
    /// 1-based channel.
    pub channel: usize,
    /// Spike time as a sample index.
    pub offset: usize,
}

impl SpikeEvent {
    pub fn time(&self, sample_rate: f64) -> f64 {
        self.offset as f64 / sample_rate
    }
}

/// Binary spike pattern over `K * M` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Spiketrum {
    /// Sorted by time, then channel.
    pub events: Vec<SpikeEvent>,
    pub num_kernels: usize,
    pub meta: SignalMeta,
    pub intensity_map: IntensityMap,
    pub bank_fingerprint: String,
    /// Indices into `events` whose source amplitude was negative.
    pub negative_events: Vec<usize>,
}

impl Spiketrum {
    pub fn k(&self) -> usize {
        self.intensity_map.k()
    }

    pub fn num_channels(&self) -> usize {
        self.k() * self.num_kernels
    }

    pub fn duration(&self) -> f64 {
        self.meta.duration()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `(m, k)` for a 1-based channel.
    pub fn split_channel(&self, channel: usize) -> Result<(usize, usize)> {
        if channel < 1 || channel > self.num_channels() {
            return Err(Error::validation(format!(
                "channel {channel} outside 1..={}",
                self.num_channels()
            )));
        }
        let k = self.k();
        Ok((1 + (channel - 1) / k, 1 + (channel - 1) % k))
    }

    /// Spike times in seconds grouped per channel (index 0 is channel 1).
    pub fn trains(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.num_channels()];
        for e in &self.events {
            out[e.channel - 1].push(e.time(self.meta.sample_rate));
        }
        out
    }
}

pub fn itp_encode(codes: &CodeSet, map: &IntensityMap, num_kernels: usize) -> Result<Spiketrum> {
    let k = map.k();
    let mut tagged = Vec::with_capacity(codes.len());
    for (i, c) in codes.codes.iter().enumerate() {
        if c.kernel_index < 1 || c.kernel_index > num_kernels {
            return Err(Error::validation(format!(
                "code {i} has kernel index {} outside 1..={num_kernels}",
                c.kernel_index
            )));
        }
        let level = map.nearest_level(c.amplitude.abs() / map.normalization_scale);
        let event = SpikeEvent {
            channel: k * (c.kernel_index - 1) + level,
            offset: c.offset,
        };
        tagged.push((event, c.amplitude < 0.0));
    }
    tagged.sort_by_key(|(e, _)| (e.offset, e.channel));
    let negative_events = tagged
        .iter()
        .enumerate()
        .filter(|(_, (_, neg))| *neg)
        .map(|(i, _)| i)
        .collect();
    Ok(Spiketrum {
        events: tagged.into_iter().map(|(e, _)| e).collect(),
        num_kernels,
        meta: codes.meta,
        intensity_map: map.clone(),
        bank_fingerprint: codes.bank_fingerprint.clone(),
        negative_events,
    })
}

/// Recovers codes from spikes. Amplitudes are the channel intensities times
/// the stored scale; the residual ratio of the result is not known and is
/// reported as 0.
pub fn itp_decode(spikes: &Spiketrum) -> Result<CodeSet> {
    let mut negative = vec![false; spikes.events.len()];
    for &i in &spikes.negative_events {
        *negative
            .get_mut(i)
            .ok_or_else(|| Error::validation(format!("negative event index {i} out of range")))? =
            true;
    }
    let map = &spikes.intensity_map;
    let codes = spikes
        .events
        .iter()
        .zip(&negative)
        .map(|(e, &neg)| {
            let (m, k) = spikes.split_channel(e.channel)?;
            let magnitude = map.levels[k - 1] * map.normalization_scale;
            Ok(Code {
                kernel_index: m,
                offset: e.offset,
                amplitude: if neg { -magnitude } else { magnitude },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CodeSet {
        codes,
        residual_energy_ratio: 0.0,
        bank_fingerprint: spikes.bank_fingerprint.clone(),
        meta: spikes.meta,
        energy_trace: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadReport {
    /// Spike count per channel, index 0 is channel 1.
    pub counts: Vec<usize>,
    /// Fraction of channels with at least one spike.
    pub occupancy: f64,
}

pub fn spike_spread(spikes: &Spiketrum) -> SpreadReport {
    let mut counts = vec![0usize; spikes.num_channels()];
    for e in &spikes.events {
        if let Some(c) = counts.get_mut(e.channel.wrapping_sub(1)) {
            *c += 1;
        }
    }
    let active = counts.iter().filter(|&&c| c > 0).count();
    let occupancy = if counts.is_empty() {
        0.0
    } else {
        active as f64 / counts.len() as f64
    };
    SpreadReport { counts, occupancy }
}
