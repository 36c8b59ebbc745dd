//! ERB-spaced Gammatone kernel bank.
//!
//! Every kernel is a sampled Gammatone impulse response, truncated where its
//! gamma envelope decays below a fraction of the envelope peak and scaled to
//! unit L2 norm. With unit-norm kernels the inner product of a residual with
//! a kernel is directly the optimal amplitude for that kernel.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fft::{fft_len_for, FftPair};

/// Equivalent rectangular bandwidth in Hz (Glasberg & Moore).
pub fn erb(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

/// ERB-rate (number of ERBs below `f`).
pub fn erb_rate(f: f64) -> f64 {
    21.4 * (4.37 * f / 1000.0 + 1.0).log10()
}

/// Inverse of [`erb_rate`].
pub fn erb_rate_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

/// Gammatone impulse response `a t^(n-1) exp(-2 pi b t) cos(2 pi f t + phase)`.
pub fn eval_gammatone(t: f64, f: f64, b: f64, n: u32, phase: f64, a: f64) -> f64 {
    a * t.powi(n as i32 - 1) * (-2.0 * PI * b * t).exp() * (2.0 * PI * f * t + phase).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelBankConfig {
    pub num_kernels: usize,
    pub sample_rate: f64,
    pub f_min: f64,
    pub f_max: f64,
    #[serde(rename = "order")]
    pub filter_order: u32,
    pub phase: f64,
    pub envelope_cutoff: f64,
}

impl Default for KernelBankConfig {
    fn default() -> Self {
        KernelBankConfig {
            num_kernels: 40,
            sample_rate: 16000.0,
            f_min: 20.0,
            f_max: 8000.0,
            filter_order: 4,
            phase: 0.0,
            envelope_cutoff: 1e-3,
        }
    }
}

impl KernelBankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::config(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if !(self.f_min > 0.0) {
            return Err(Error::config(format!("f_min must be > 0, got {}", self.f_min)));
        }
        if !(self.f_min < self.f_max) {
            return Err(Error::config(format!(
                "f_min must be < f_max, got f_min={} f_max={}",
                self.f_min, self.f_max
            )));
        }
        if self.f_max > self.sample_rate / 2.0 {
            return Err(Error::config(format!(
                "f_max must be <= sample_rate/2 = {}, got {}",
                self.sample_rate / 2.0,
                self.f_max
            )));
        }
        if self.num_kernels < 1 {
            return Err(Error::config("num_kernels must be >= 1"));
        }
        if self.filter_order < 1 {
            return Err(Error::config("order must be >= 1"));
        }
        if !(self.envelope_cutoff > 0.0 && self.envelope_cutoff < 1.0) {
            return Err(Error::config(format!(
                "envelope_cutoff must lie in (0, 1), got {}",
                self.envelope_cutoff
            )));
        }
        Ok(())
    }

    /// Center frequencies equally spaced on the ERB-rate scale.
    pub fn center_frequencies(&self) -> Vec<f64> {
        let m = self.num_kernels;
        if m == 1 {
            return vec![self.f_min];
        }
        let lo = erb_rate(self.f_min);
        let hi = erb_rate(self.f_max);
        (0..m)
            .map(|i| {
                if i == m - 1 {
                    self.f_max
                } else {
                    erb_rate_to_hz(lo + (hi - lo) * i as f64 / (m - 1) as f64)
                }
            })
            .collect()
    }
}

/// One unit-norm dictionary atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    /// 1-based position in the bank.
    pub index: usize,
    pub center_frequency: f64,
    pub bandwidth: f64,
    pub samples: Vec<f64>,
}

impl Kernel {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Sample count up to the point where the gamma envelope drops below
/// `cutoff` times its peak.
fn truncated_length(n: u32, b: f64, sample_rate: f64, cutoff: f64) -> usize {
    let rate = 2.0 * PI * b;
    let envelope = |t: f64| t.powi(n as i32 - 1) * (-rate * t).exp();
    let t_peak = (n as f64 - 1.0) / rate;
    let peak = envelope(t_peak);
    let floor = cutoff * peak;
    let mut i = (t_peak * sample_rate).ceil() as usize;
    while envelope(i as f64 / sample_rate) >= floor {
        i += 1;
    }
    i.max(1)
}

/// Spectra of every kernel at one transform length.
#[derive(Debug)]
pub struct KernelSpectra {
    pub fft: FftPair,
    pub spectra: Vec<Vec<Complex64>>,
}

/// Inner products between every pair of shifted kernels.
///
/// `get(a, b, d)` is `sum_u phi_a(u) phi_b(u - d)` for `d` in
/// `(-len_b, len_a)`, zero outside.
#[derive(Debug)]
pub struct Gram {
    lens: Vec<usize>,
    table: Vec<Vec<f64>>,
}

impl Gram {
    fn slot(&self, a: usize, b: usize) -> &[f64] {
        &self.table[a * self.lens.len() + b]
    }

    /// Lag table for the pair, indexed by `d + len_b - 1`.
    pub fn lags(&self, a: usize, b: usize) -> &[f64] {
        self.slot(a, b)
    }

    pub fn get(&self, a: usize, b: usize, d: isize) -> f64 {
        let lb = self.lens[b] as isize;
        let la = self.lens[a] as isize;
        if d <= -lb || d >= la {
            return 0.0;
        }
        self.slot(a, b)[(d + lb - 1) as usize]
    }
}

/// Immutable set of Gammatone kernels ordered by center frequency.
#[derive(Debug)]
pub struct KernelBank {
    config: KernelBankConfig,
    kernels: Vec<Kernel>,
    fingerprint: String,
    spectra: Mutex<HashMap<usize, Arc<KernelSpectra>>>,
    gram: OnceLock<Gram>,
}

impl Clone for KernelBank {
    fn clone(&self) -> Self {
        KernelBank::from_parts(self.config.clone(), self.kernels.clone())
    }
}

impl PartialEq for KernelBank {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.kernels == other.kernels
    }
}

impl KernelBank {
    pub fn build(config: KernelBankConfig) -> Result<Self> {
        config.validate()?;
        let kernels = config
            .center_frequencies()
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let b = 1.019 * erb(f);
                let len = truncated_length(
                    config.filter_order,
                    b,
                    config.sample_rate,
                    config.envelope_cutoff,
                );
                let mut samples: Vec<f64> = (0..len)
                    .map(|j| {
                        let t = j as f64 / config.sample_rate;
                        eval_gammatone(t, f, b, config.filter_order, config.phase, 1.0)
                    })
                    .collect();
                let norm = samples.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    samples.iter_mut().for_each(|v| *v /= norm);
                }
                Kernel {
                    index: i + 1,
                    center_frequency: f,
                    bandwidth: b,
                    samples,
                }
            })
            .collect();
        Ok(KernelBank::from_parts(config, kernels))
    }

    /// Wraps arbitrary kernels. Kernels are expected to be unit norm.
    pub fn from_parts(config: KernelBankConfig, kernels: Vec<Kernel>) -> Self {
        let fingerprint = fingerprint(&config, &kernels);
        KernelBank {
            config,
            kernels,
            fingerprint,
            spectra: Mutex::new(HashMap::new()),
            gram: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &KernelBankConfig {
        &self.config
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.config.sample_rate
    }

    /// Kernel by 1-based index.
    pub fn kernel(&self, index: usize) -> Option<&Kernel> {
        index.checked_sub(1).and_then(|i| self.kernels.get(i))
    }

    pub fn max_kernel_len(&self) -> usize {
        self.kernels.iter().map(Kernel::len).max().unwrap_or(0)
    }

    /// Short hex digest of the config and kernel samples.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Kernel spectra at transform length `fft_len`, computed once per length.
    pub fn spectra(&self, fft_len: usize) -> Arc<KernelSpectra> {
        let mut cache = self.spectra.lock().expect("spectra cache poisoned");
        cache
            .entry(fft_len)
            .or_insert_with(|| {
                let fft = FftPair::new(fft_len);
                let spectra = self
                    .kernels
                    .iter()
                    .map(|k| fft.forward_real(&k.samples))
                    .collect();
                Arc::new(KernelSpectra { fft, spectra })
            })
            .clone()
    }

    pub fn gram(&self) -> &Gram {
        self.gram.get_or_init(|| {
            let lens: Vec<usize> = self.kernels.iter().map(Kernel::len).collect();
            let n = fft_len_for(2 * self.max_kernel_len());
            let spectra = self.spectra(n);
            let mut table = Vec::with_capacity(lens.len() * lens.len());
            for a in 0..lens.len() {
                for b in 0..lens.len() {
                    let r = spectra
                        .fft
                        .correlate_spectra(&spectra.spectra[a], &spectra.spectra[b]);
                    let (la, lb) = (lens[a] as isize, lens[b] as isize);
                    let lags = (-lb + 1..la)
                        .map(|d| r[d.rem_euclid(n as isize) as usize])
                        .collect();
                    table.push(lags);
                }
            }
            Gram { lens, table }
        })
    }
}

fn fingerprint(config: &KernelBankConfig, kernels: &[Kernel]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    for k in kernels {
        hasher.update((k.index as u64).to_le_bytes());
        hasher.update(k.center_frequency.to_le_bytes());
        for s in &k.samples {
            hasher.update(s.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_bank() -> KernelBank {
        KernelBank::build(KernelBankConfig::default()).unwrap()
    }

    #[test]
    fn erb_reference_values() {
        assert!((erb(1000.0) - 132.639).abs() < 1e-9);
        assert!((erb(8000.0) - 888.212).abs() < 1e-9);
        assert!((erb(1e-12) - 24.7).abs() < 1e-9);
    }

    #[test]
    fn gammatone_at_origin() {
        assert_eq!(eval_gammatone(0.0, 440.0, 50.0, 4, 0.0, 1.0), 0.0);
        assert_eq!(eval_gammatone(0.0, 440.0, 50.0, 2, 0.3, 2.0), 0.0);
        assert_eq!(eval_gammatone(0.0, 440.0, 50.0, 1, 0.0, 1.0), 1.0);
    }

    #[test]
    fn gammatone_matches_direct_formula() {
        // Written out term by term, independent of the library expression.
        for &(t, f, b, n, ph, a) in &[
            (0.001, 440.0, 60.0, 4u32, 0.0, 1.0),
            (0.0123, 1000.0, 135.0, 4, 0.5, 2.5),
            (0.05, 80.0, 30.0, 3, -1.0, 0.7),
            (0.2, 20.0, 27.0, 1, 0.0, 1.0),
        ] {
            let mut power = 1.0;
            for _ in 1..n {
                power *= t;
            }
            let envelope = (-(2.0 * PI) * b * t).exp();
            let carrier = ((2.0 * PI) * f * t + ph).cos();
            let expected = a * power * envelope * carrier;
            let got = eval_gammatone(t, f, b, n, ph, a);
            assert!((got - expected).abs() <= 1e-15 * expected.abs().max(1e-300));
        }
    }

    #[test]
    fn default_bank_shape() {
        let bank = default_bank();
        assert_eq!(bank.len(), 40);
        let ks = bank.kernels();
        assert!((ks[0].center_frequency - 20.0).abs() < 1e-9);
        assert!((ks[39].center_frequency - 8000.0).abs() < 1e-9);
        for (i, k) in ks.iter().enumerate() {
            assert_eq!(k.index, i + 1);
            let norm: f64 = k.samples.iter().map(|v| v * v).sum();
            assert!((norm.sqrt() - 1.0).abs() < 1e-9);
            assert_eq!(k.samples[0], 0.0);
        }
        for w in ks.windows(2) {
            assert!(w[1].center_frequency > w[0].center_frequency);
            assert!(w[1].len() <= w[0].len());
        }
        let rates: Vec<f64> = ks.iter().map(|k| erb_rate(k.center_frequency)).collect();
        let step = rates[1] - rates[0];
        for w in rates.windows(2) {
            assert!(((w[1] - w[0]) - step).abs() <= 1e-6 * step);
        }
    }

    #[test]
    fn degenerate_single_kernel() {
        let cfg = KernelBankConfig {
            num_kernels: 1,
            f_min: 500.0,
            f_max: 500.0 + 1e-6,
            ..KernelBankConfig::default()
        };
        let bank = KernelBank::build(cfg).unwrap();
        assert_eq!(bank.len(), 1);
        assert!((bank.kernels()[0].center_frequency - 500.0).abs() < 1e-3);
    }

    #[test]
    fn invalid_configs_name_the_bound() {
        let bad = [
            KernelBankConfig { f_min: 0.0, ..Default::default() },
            KernelBankConfig { f_min: 9000.0, ..Default::default() },
            KernelBankConfig { f_max: 9000.0, ..Default::default() },
            KernelBankConfig { num_kernels: 0, ..Default::default() },
            KernelBankConfig { filter_order: 0, ..Default::default() },
            KernelBankConfig { envelope_cutoff: 1.0, ..Default::default() },
        ];
        let needles = ["f_min", "f_min", "f_max", "num_kernels", "order", "envelope_cutoff"];
        for (cfg, needle) in bad.into_iter().zip(needles) {
            let err = KernelBank::build(cfg).unwrap_err();
            assert!(matches!(err, Error::Config(_)));
            assert!(err.to_string().contains(needle), "{err}");
        }
    }

    #[test]
    fn deterministic_rebuild() {
        let a = default_bank();
        let b = default_bank();
        assert_eq!(a.fingerprint(), b.fingerprint());
        for (x, y) in a.kernels().iter().zip(b.kernels()) {
            let xb: Vec<u64> = x.samples.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.samples.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn gram_matches_direct_inner_products() {
        let cfg = KernelBankConfig {
            num_kernels: 6,
            f_min: 200.0,
            ..KernelBankConfig::default()
        };
        let bank = KernelBank::build(cfg).unwrap();
        let gram = bank.gram();
        for a in 0..bank.len() {
            for b in 0..bank.len() {
                let pa = &bank.kernels()[a].samples;
                let pb = &bank.kernels()[b].samples;
                for d in [-(pb.len() as isize) + 1, -3, 0, 1, 7, pa.len() as isize - 1] {
                    let direct: f64 = (0..pa.len() as isize)
                        .filter(|&u| u - d >= 0 && ((u - d) as usize) < pb.len())
                        .map(|u| pa[u as usize] * pb[(u - d) as usize])
                        .sum();
                    assert!((gram.get(a, b, d) - direct).abs() < 1e-12);
                }
                assert_eq!(gram.get(a, b, pa.len() as isize), 0.0);
            }
            assert!((gram.get(a, a, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn config_json_keys() {
        let json = serde_json::to_value(KernelBankConfig::default()).unwrap();
        for key in [
            "num_kernels",
            "sample_rate",
            "f_min",
            "f_max",
            "order",
            "phase",
            "envelope_cutoff",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
