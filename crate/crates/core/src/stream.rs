//! Segment-buffered encoder emulating a real-time hardware pipeline.
//!
//! The input is consumed in fixed-length segments. Each segment runs a
//! bounded number of pursuit iterations on a buffer holding the segment
//! plus a tail of `max_kernel_len - 1` samples. Atoms may start anywhere in
//! the segment; the tail residual is carried into the next segment's
//! buffer, so later segments see the overhang already subtracted.
//!
//! With `lookahead` the tail is filled with the upcoming input (one kernel
//! length of latency). Without it the tail starts empty and only carries
//! the overhang.

use serde::{Deserialize, Serialize};

use crate::codec::{check_rate, energy, Code, CodeSet, Pursuit, Selection, Signal};
use crate::error::{Error, Result};
use crate::fft::fft_len_for;
use crate::itp::{itp_encode, make_intensity_map_with_floor, Spiketrum, Strategy, DEFAULT_C_MIN};
use crate::kernels::KernelBank;
use crate::metrics::precision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    /// Seconds per segment.
    pub segment_length: f64,
    pub sample_rate: f64,
    pub spikes_per_segment_budget: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    /// Transform length for the per-segment correlation. Derived from the
    /// segment and kernel lengths when unset.
    #[serde(default)]
    pub fft_length: Option<usize>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_c_min")]
    pub c_min: f64,
    /// Fill the buffer tail with upcoming input samples.
    #[serde(default = "default_lookahead")]
    pub lookahead: bool,
}

fn default_lookahead() -> bool {
    true
}

fn default_strategy() -> Strategy {
    Strategy::Log
}

fn default_c_min() -> f64 {
    DEFAULT_C_MIN
}

/// Spikes per second the default budget is sized for.
pub const DEFAULT_MAX_RATE: f64 = 2000.0;

impl Default for StreamConfig {
    fn default() -> Self {
        let segment_length = 0.0435;
        StreamConfig {
            segment_length,
            sample_rate: 16000.0,
            spikes_per_segment_budget: (DEFAULT_MAX_RATE * segment_length).round() as usize,
            k: 3,
            m: 40,
            fft_length: None,
            strategy: Strategy::Log,
            c_min: DEFAULT_C_MIN,
            lookahead: true,
        }
    }
}

impl StreamConfig {
    pub fn segment_samples(&self) -> usize {
        (self.segment_length * self.sample_rate).round() as usize
    }

    fn validate(&self, bank: &KernelBank) -> Result<usize> {
        if !(self.segment_length > 0.0) || self.segment_samples() == 0 {
            return Err(Error::config(format!(
                "segment_length must be positive, got {}",
                self.segment_length
            )));
        }
        if self.k < 1 {
            return Err(Error::config("K must be >= 1"));
        }
        if self.m != bank.len() {
            return Err(Error::config(format!(
                "stream expects M={} kernels but the bank has {}",
                self.m,
                bank.len()
            )));
        }
        if (self.sample_rate - bank.sample_rate()).abs() > 1e-9 {
            return Err(Error::config(format!(
                "stream rate {} Hz does not match kernel bank rate {} Hz",
                self.sample_rate,
                bank.sample_rate()
            )));
        }
        let needed = self.segment_samples() + bank.max_kernel_len() - 1;
        match self.fft_length {
            None => Ok(fft_len_for(needed)),
            Some(n) if n >= needed && n.is_power_of_two() => Ok(n),
            Some(n) => Err(Error::config(format!(
                "fft_length {n} must be a power of two >= segment + kernel - 1 = {needed}"
            ))),
        }
    }
}

/// Bookkeeping for one processed segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentState {
    pub segment_index: usize,
    /// First sample of the segment.
    pub start: usize,
    pub len: usize,
    pub budget: usize,
    pub codes_emitted: usize,
    /// Buffer energy before the first and after every iteration.
    pub energy_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    /// Codes in emission order with global offsets.
    pub codes: CodeSet,
    pub segments: Vec<SegmentState>,
}

/// Runs the segmented pursuit and returns the analog codes.
pub fn stream_codes(x: &Signal, bank: &KernelBank, cfg: &StreamConfig) -> Result<StreamOutput> {
    check_rate(x.sample_rate, bank)?;
    let fft_len = cfg.validate(bank)?;
    let seg = cfg.segment_samples();
    let tail = bank.max_kernel_len() - 1;
    let total = x.len();

    let mut carry = vec![0.0; tail];
    let mut codes = Vec::new();
    let mut segments = Vec::new();
    let mut final_energy = 0.0;

    for (index, start) in (0..total).step_by(seg).enumerate() {
        let len = seg.min(total - start);
        let budget = if len == seg {
            cfg.spikes_per_segment_budget
        } else {
            cfg.spikes_per_segment_budget * len / seg
        };
        let mut buffer = vec![0.0; seg + tail];
        if cfg.lookahead {
            let end = (start + seg + tail).min(total);
            buffer[..end - start].copy_from_slice(&x.samples[start..end]);
            if index > 0 {
                buffer[..tail].copy_from_slice(&carry);
            }
        } else {
            buffer[..len].copy_from_slice(&x.samples[start..start + len]);
            for (b, c) in buffer.iter_mut().zip(&carry) {
                *b += c;
            }
        }

        let mut trace = vec![energy(&buffer)];
        let mut emitted = 0;
        let buffer = if budget > 0 && trace[0] > 0.0 {
            let mut pursuit = Pursuit::new(bank, buffer, len, Selection::Signed, fft_len);
            while emitted < budget {
                let Some((m, offset, amplitude)) = pursuit.step() else {
                    break;
                };
                codes.push(Code {
                    kernel_index: m + 1,
                    offset: start + offset,
                    amplitude,
                });
                emitted += 1;
                trace.push(pursuit.energy());
            }
            pursuit.into_residual()
        } else {
            buffer
        };

        final_energy += energy(&buffer[..len]);
        carry.iter_mut().for_each(|c| *c = 0.0);
        if len == seg {
            carry.copy_from_slice(&buffer[seg..]);
        } else {
            // last segment: whatever overhangs the signal end stays in the residual
            final_energy += energy(&buffer[len..]);
        }
        segments.push(SegmentState {
            segment_index: index,
            start,
            len,
            budget,
            codes_emitted: emitted,
            energy_trace: trace,
        });
    }
    if total % seg == 0 {
        final_energy += energy(&carry);
    }

    let e0 = x.energy();
    let ratio = if e0 > 0.0 {
        (final_energy / e0).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(StreamOutput {
        codes: CodeSet {
            codes,
            residual_energy_ratio: ratio,
            bank_fingerprint: bank.fingerprint().to_string(),
            meta: x.meta(),
            energy_trace: Vec::new(),
        },
        segments,
    })
}

/// Segmented encoding straight to spikes. Amplitudes are normalized by the
/// largest amplitude over the whole stream.
pub fn stream_encode(x: &Signal, bank: &KernelBank, cfg: &StreamConfig) -> Result<Spiketrum> {
    let out = stream_codes(x, bank, cfg)?;
    let map = make_intensity_map_with_floor(&out.codes, cfg.k, cfg.strategy, cfg.c_min)?;
    itp_encode(&out.codes, &map, cfg.m)
}

/// Pointwise difference between two reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    pub difference: Vec<f64>,
    pub max_abs: f64,
    pub rms: f64,
    /// `P(reference, full) - P(reference, segmented)` when a reference is given.
    pub precision_gap: Option<f64>,
}

pub fn segment_error(
    full: &Signal,
    segmented: &Signal,
    reference: Option<&Signal>,
) -> Result<ErrorTrace> {
    if full.len() != segmented.len() || full.sample_rate != segmented.sample_rate {
        return Err(Error::validation(format!(
            "signals differ in shape: {} samples @ {} Hz vs {} samples @ {} Hz",
            full.len(),
            full.sample_rate,
            segmented.len(),
            segmented.sample_rate
        )));
    }
    let difference: Vec<f64> = full
        .samples
        .iter()
        .zip(&segmented.samples)
        .map(|(a, b)| a - b)
        .collect();
    let max_abs = difference.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let rms = (energy(&difference) / difference.len() as f64).sqrt();
    let precision_gap = match reference {
        Some(r) => Some(precision(r, full)? - precision(r, segmented)?),
        None => None,
    };
    Ok(ErrorTrace {
        difference,
        max_abs,
        rms,
        precision_gap,
    })
}

/// Linear chirp from `f0` to `f1` Hz.
pub fn linear_chirp(f0: f64, f1: f64, duration: f64, amplitude: f64, sample_rate: f64) -> Signal {
    let n = (duration * sample_rate).round() as usize;
    let rate = (f1 - f0) / duration;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            let phase = 2.0 * std::f64::consts::PI * (f0 * t + 0.5 * rate * t * t);
            amplitude * phase.sin()
        })
        .collect();
    Signal {
        samples,
        sample_rate,
    }
}

/// Streams a 5 s linear chirp sweeping 20 Hz to 8 kHz and returns its spikes.
pub fn characteristics_raster(cfg: &StreamConfig, bank: &KernelBank) -> Result<Spiketrum> {
    characteristics_raster_with_amplitude(cfg, bank, 0.5)
}

pub fn characteristics_raster_with_amplitude(
    cfg: &StreamConfig,
    bank: &KernelBank,
    amplitude: f64,
) -> Result<Spiketrum> {
    let chirp = linear_chirp(20.0, 8000.0, 5.0, amplitude, cfg.sample_rate);
    stream_encode(&chirp, bank, cfg)
}

/// Adjacent kernel groups whose mean spike times run backwards by more than
/// the lower kernel's duration. Differences shorter than a kernel are below
/// its time resolution and are not counted.
pub fn raster_order_inversions(spikes: &Spiketrum, bank: &KernelBank) -> usize {
    let times = group_mean_times(spikes);
    let active: Vec<(usize, f64)> = times
        .iter()
        .enumerate()
        .filter_map(|(g, t)| t.map(|t| (g, t)))
        .collect();
    active
        .windows(2)
        .filter(|w| {
            let support = bank.kernels()[w[0].0].len() as f64 / bank.sample_rate();
            w[1].1 < w[0].1 - support
        })
        .count()
}

/// Mean spike time per kernel group (`None` for silent groups).
pub fn group_mean_times(spikes: &Spiketrum) -> Vec<Option<f64>> {
    let k = spikes.k();
    let mut sums = vec![(0.0, 0usize); spikes.num_kernels];
    for e in &spikes.events {
        let g = (e.channel - 1) / k;
        sums[g].0 += e.time(spikes.meta.sample_rate);
        sums[g].1 += 1;
    }
    sums.into_iter()
        .map(|(s, n)| (n > 0).then(|| s / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, place, EncoderParams};
    use crate::kernels::KernelBankConfig;

    fn bank() -> KernelBank {
        KernelBank::build(KernelBankConfig::default()).unwrap()
    }

    #[test]
    fn default_budget_is_87() {
        assert_eq!(StreamConfig::default().spikes_per_segment_budget, 87);
        assert_eq!(StreamConfig::default().segment_samples(), 696);
    }

    #[test]
    fn silence_emits_nothing() {
        let bank = bank();
        let x = Signal::zeros(16000, 16000.0).unwrap();
        let mut cfg = StreamConfig::default();
        cfg.spikes_per_segment_budget = 500;
        assert!(stream_encode(&x, &bank, &cfg).unwrap().is_empty());
        let raster = characteristics_raster_with_amplitude(&cfg, &bank, 0.0).unwrap();
        assert!(raster.is_empty());
    }

    fn isolated_atom_case(offset: usize, lookahead: bool) {
        let bank = bank();
        let mut x = vec![0.0; 4000];
        place(&mut x, &bank.kernels()[19].samples, offset, 0.8);
        let sig = Signal::new(x, 16000.0).unwrap();
        let cfg = StreamConfig {
            lookahead,
            ..Default::default()
        };
        let out = stream_codes(&sig, &bank, &cfg).unwrap();
        let whole = encode(
            &sig,
            &bank,
            &EncoderParams {
                max_codes: 1,
                min_energy_ratio: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        let first = out.codes.codes[0];
        assert_eq!(
            (first.kernel_index, first.offset),
            (whole.codes[0].kernel_index, whole.codes[0].offset)
        );
        assert!((first.amplitude - whole.codes[0].amplitude).abs() < 1e-9);
    }

    #[test]
    fn isolated_atom_matches_whole_signal_encode() {
        // kernel 20 in the first segment, then 50 samples into the second
        isolated_atom_case(30, true);
        isolated_atom_case(30, false);
        isolated_atom_case(746, false);
    }

    #[test]
    fn budget_causality_and_monotonicity() {
        let bank = bank();
        let x = linear_chirp(100.0, 3000.0, 0.5, 0.3, 16000.0);
        let cfg = StreamConfig::default();
        let out = stream_codes(&x, &bank, &cfg).unwrap();
        let seg = cfg.segment_samples();
        let mut idx = 0;
        for s in &out.segments {
            assert!(s.codes_emitted <= s.budget);
            for w in s.energy_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            for c in &out.codes.codes[idx..idx + s.codes_emitted] {
                assert!(c.offset >= s.start && c.offset < s.start + seg);
            }
            idx += s.codes_emitted;
        }
        assert_eq!(idx, out.codes.len());
        let rate = out.codes.len() as f64 / x.duration();
        assert!(rate <= DEFAULT_MAX_RATE);
    }

    #[test]
    fn tone_at_center_frequency_lands_on_its_group() {
        let bank = bank();
        let fc = bank.kernels()[24].center_frequency;
        let samples = (0..8000)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * fc * i as f64 / 16000.0).sin())
            .collect();
        let x = Signal::new(samples, 16000.0).unwrap();
        let spikes = stream_encode(&x, &bank, &StreamConfig::default()).unwrap();
        let mut per_group = vec![0usize; bank.len()];
        for e in &spikes.events {
            per_group[(e.channel - 1) / spikes.k()] += 1;
        }
        let dominant = (0..bank.len()).max_by_key(|&g| per_group[g]).unwrap();
        assert_eq!(dominant, 24);
    }

    #[test]
    fn chirp_raster_is_ordered() {
        let bank = bank();
        let raster = characteristics_raster(&StreamConfig::default(), &bank).unwrap();
        let times = group_mean_times(&raster);
        assert!(times.iter().all(Option::is_some));
        assert_eq!(raster_order_inversions(&raster, &bank), 0);
        let sr = raster.meta.sample_rate;
        let first = raster.events.first().unwrap();
        let last = raster.events.last().unwrap();
        assert!((first.channel - 1) / raster.k() < 5);
        assert!((last.channel - 1) / raster.k() >= 35);
        assert!(last.time(sr) > 4.5);
    }

    #[test]
    fn rejects_bad_config() {
        let bank = bank();
        let x = Signal::zeros(100, 8000.0).unwrap();
        assert!(stream_encode(&x, &bank, &StreamConfig::default()).is_err());
        let x = Signal::zeros(100, 16000.0).unwrap();
        let cfg = StreamConfig {
            fft_length: Some(1000),
            ..Default::default()
        };
        assert!(matches!(stream_encode(&x, &bank, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn segment_error_of_identical_signals() {
        let x = linear_chirp(100.0, 300.0, 0.1, 1.0, 16000.0);
        let e = segment_error(&x, &x, Some(&x)).unwrap();
        assert!(e.difference.iter().all(|&d| d == 0.0));
        assert_eq!(e.max_abs, 0.0);
        assert_eq!(e.rms, 0.0);
        assert_eq!(e.precision_gap, Some(0.0));
        let short = Signal::zeros(10, 16000.0).unwrap();
        assert!(segment_error(&x, &short, None).is_err());
    }
}
