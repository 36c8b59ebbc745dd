//! Representation quality and spike-pattern statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codec::{energy, Signal};
use crate::error::{Error, Result};
use crate::fft::FftPair;
use crate::itp::{Spiketrum, Strategy};

/// Highest SNR `add_noise` honours; larger requests are clamped.
pub const MAX_SNR_DB: f64 = 120.0;

/// Fewest analysis windows the entropy estimator accepts.
pub const MIN_ENTROPY_WINDOWS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub precision: f64,
    pub spike_rate: f64,
    pub k: usize,
    pub strategy: Strategy,
}

/// `1 - |x - x_hat|^2 / |x|^2`, clamped to `[0, 1]`.
pub fn precision(original: &Signal, reconstructed: &Signal) -> Result<f64> {
    Ok(raw_precision(original, reconstructed)?.clamp(0.0, 1.0))
}

/// Unclamped precision; negative when the reconstruction is worse than silence.
pub fn raw_precision(original: &Signal, reconstructed: &Signal) -> Result<f64> {
    if original.len() != reconstructed.len() || original.sample_rate != reconstructed.sample_rate
    {
        return Err(Error::validation(format!(
            "cannot compare {} samples @ {} Hz with {} samples @ {} Hz",
            original.len(),
            original.sample_rate,
            reconstructed.len(),
            reconstructed.sample_rate
        )));
    }
    let e = original.energy();
    if e == 0.0 {
        return Err(Error::UndefinedPrecision);
    }
    let err: f64 = original
        .samples
        .iter()
        .zip(&reconstructed.samples)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(1.0 - err / e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsthMode {
    /// One histogram over all channels.
    #[default]
    Collapsed,
    /// Channel-major concatenation of per-channel histograms.
    PerChannel,
}

/// Spike counts per time bin divided by the bin width.
pub fn psth(spikes: &Spiketrum, bin_width: f64, mode: PsthMode) -> Result<Vec<f64>> {
    if !(bin_width > 0.0) {
        return Err(Error::config(format!("bin_width must be positive, got {bin_width}")));
    }
    let bins = ((spikes.duration() / bin_width).ceil() as usize).max(1);
    let rows = match mode {
        PsthMode::Collapsed => 1,
        PsthMode::PerChannel => spikes.num_channels(),
    };
    let mut out = vec![0.0; rows * bins];
    let sr = spikes.meta.sample_rate;
    for e in &spikes.events {
        let b = ((e.time(sr) / bin_width) as usize).min(bins - 1);
        let row = match mode {
            PsthMode::Collapsed => 0,
            PsthMode::PerChannel => e.channel - 1,
        };
        out[row * bins + b] += 1.0;
    }
    out.iter_mut().for_each(|v| *v /= bin_width);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    /// Set when either vector has zero variance; `value` is then 0.
    pub degenerate: bool,
}

/// Pearson correlation of two rate vectors, the shorter one zero-padded.
pub fn psth_similarity(a: &[f64], b: &[f64]) -> Similarity {
    let n = a.len().max(b.len());
    if n == 0 {
        return Similarity {
            value: 0.0,
            degenerate: true,
        };
    }
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (get(a, i) - ma, get(b, i) - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Similarity {
            value: 0.0,
            degenerate: true,
        };
    }
    Similarity {
        value: (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub matrix: Vec<Vec<f64>>,
    pub m_within: f64,
    pub m_among: f64,
    pub m_overall: f64,
    pub degenerate_pairs: usize,
}

/// Pairwise similarities of labelled rate vectors. The diagonal is 1.
pub fn similarity_report(psths: &[Vec<f64>], labels: &[usize]) -> Result<SimilarityReport> {
    if psths.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} patterns but {} labels",
            psths.len(),
            labels.len()
        )));
    }
    let n = psths.len();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut degenerate_pairs = 0;
    for i in 0..n {
        matrix[i][i] = 1.0;
        for j in i + 1..n {
            let s = psth_similarity(&psths[i], &psths[j]);
            degenerate_pairs += s.degenerate as usize;
            matrix[i][j] = s.value;
            matrix[j][i] = s.value;
        }
    }
    let idx: Vec<usize> = (0..n).collect();
    let (m_within, m_among) = class_means(&matrix, labels, &idx);
    Ok(SimilarityReport {
        matrix,
        m_within,
        m_among,
        m_overall: m_within - m_among,
        degenerate_pairs,
    })
}

/// Mean within-class and among-class similarity over distinct positions of `idx`.
fn class_means(matrix: &[Vec<f64>], labels: &[usize], idx: &[usize]) -> (f64, f64) {
    let (mut w, mut nw, mut a, mut na) = (0.0, 0usize, 0.0, 0usize);
    for (p, &i) in idx.iter().enumerate() {
        for &j in &idx[p + 1..] {
            if i == j {
                continue;
            }
            if labels[i] == labels[j] {
                w += matrix[i][j];
                nw += 1;
            } else {
                a += matrix[i][j];
                na += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n > 0 { s / n as f64 } else { 0.0 };
    (mean(w, nw), mean(a, na))
}

/// Stratified bootstrap of `m_within - m_among`; returns sorted resampled values.
pub fn bootstrap_overall(
    matrix: &[Vec<f64>],
    labels: &[usize],
    resamples: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == *c).collect())
        .collect();
    let mut out: Vec<f64> = (0..resamples)
        .map(|_| {
            let idx: Vec<usize> = members
                .iter()
                .flat_map(|m| {
                    (0..m.len())
                        .map(|_| m[rng.random_range(0..m.len())])
                        .collect::<Vec<_>>()
                })
                .collect();
            let (w, a) = class_means(matrix, labels, &idx);
            w - a
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Percentile bootstrap interval of the mean of `values`.
pub fn bootstrap_mean_interval(values: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile(&means, tail), quantile(&means, 1.0 - tail))
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Sum of single-channel entropy rates, bits/s.
    pub per_channel_entropy_sum: f64,
    /// Joint entropy rate of the population, bits/s.
    pub population_entropy: f64,
    /// `1 - population / per_channel_sum`.
    pub redundancy: f64,
    pub windows: usize,
    pub active_channels: usize,
}

/// Entropy of a real Gaussian coefficient of variance `v` at unit resolution.
fn h_real(v: f64) -> f64 {
    0.5 * (1.0 + 2.0 * std::f64::consts::PI * std::f64::consts::E * v).log2()
}

/// Same for a circular complex coefficient (two real parts of variance `v/2`).
fn h_complex(v: f64) -> f64 {
    (1.0 + std::f64::consts::PI * std::f64::consts::E * v).log2()
}

/// Entropy-rate estimate from binned spike counts.
///
/// Counts are cut into non-overlapping windows of `window` bins and each
/// window is Fourier transformed per channel. For every frequency the
/// cross-spectral covariance across windows is factored as `L D L^H`; the
/// pivots are the conditional variances of each channel given the earlier
/// ones, corrected for the degrees of freedom used by the regression.
/// Coefficients are treated as Gaussian at unit count resolution. The
/// population entropy sums the conditional terms, the per-channel entropy
/// the marginal ones, so the population value never exceeds the sum.
///
/// This is a Gaussian approximation and is meant for comparisons, not for
/// absolute information values.
pub fn entropy(spikes: &Spiketrum, bin_width: f64, window: usize) -> Result<EntropyReport> {
    if !(bin_width > 0.0) || window < 2 {
        return Err(Error::config(format!(
            "entropy needs bin_width > 0 and window >= 2 bins, got {bin_width} s and {window}"
        )));
    }
    let counts = psth(spikes, bin_width, PsthMode::PerChannel)?;
    let bins = counts.len() / spikes.num_channels().max(1);
    let windows = bins / window;
    let window_secs = window as f64 * bin_width;

    let active: Vec<usize> = (0..spikes.num_channels())
        .filter(|&c| counts[c * bins..(c + 1) * bins].iter().any(|&v| v > 0.0))
        .collect();
    let needed = MIN_ENTROPY_WINDOWS.max(2 * active.len() + 1);
    if windows < needed {
        return Err(Error::InsufficientData {
            duration: spikes.duration(),
            min_duration: needed as f64 * window_secs,
        });
    }

    let fft = FftPair::new(window);
    let freqs = window / 2 + 1;
    // coeffs[f][w][c]
    let mut coeffs = vec![vec![vec![Complex64::new(0.0, 0.0); active.len()]; windows]; freqs];
    for (ci, &c) in active.iter().enumerate() {
        let row = &counts[c * bins..(c + 1) * bins];
        for w in 0..windows {
            let seg: Vec<f64> = row[w * window..(w + 1) * window]
                .iter()
                .map(|r| r * bin_width)
                .collect();
            let spec = fft.forward_real(&seg);
            for f in 0..freqs {
                coeffs[f][w][ci] = spec[f];
            }
        }
    }

    let (mut marginal, mut joint) = (0.0, 0.0);
    for (f, per_window) in coeffs.iter().enumerate() {
        let real = f == 0 || (window % 2 == 0 && f == window / 2);
        let h = |v: f64| if real { h_real(v) } else { h_complex(v) };
        let cov = covariance(per_window, active.len());
        let pivots = conditional_variances(&cov, windows);
        for (c, &d) in pivots.iter().enumerate() {
            marginal += h(cov[c][c].re);
            joint += h(d);
        }
    }
    let per_channel_entropy_sum = marginal / window_secs;
    let population_entropy = joint / window_secs;
    let redundancy = if per_channel_entropy_sum > 0.0 {
        (1.0 - population_entropy / per_channel_entropy_sum).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(EntropyReport {
        per_channel_entropy_sum,
        population_entropy,
        redundancy,
        windows,
        active_channels: active.len(),
    })
}

/// Unbiased covariance across windows, `cov[i][j] = E[(x_i - m_i) conj(x_j - m_j)]`.
fn covariance(samples: &[Vec<Complex64>], n: usize) -> Vec<Vec<Complex64>> {
    let w = samples.len() as f64;
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / w;
        }
    }
    let mut cov = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for s in samples {
        let centered: Vec<Complex64> = s.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..n {
            for j in 0..=i {
                cov[i][j] += centered[i] * centered[j].conj();
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            cov[i][j] /= w - 1.0;
            cov[j][i] = cov[i][j].conj();
        }
    }
    cov
}

/// Pivots of a Hermitian `L D L^H` factorization, each rescaled by
/// `(windows - 1) / (windows - 1 - p)` where `p` counts the earlier
/// channels with a non-zero pivot.
fn conditional_variances(cov: &[Vec<Complex64>], windows: usize) -> Vec<f64> {
    let n = cov.len();
    let mut l = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut d = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut predictors = 0usize;
    for j in 0..n {
        let mut dj = cov[j][j].re;
        for k in 0..j {
            dj -= l[j][k].norm_sqr() * d[k];
        }
        let scale = cov[j][j].re;
        if !(dj > 1e-10 * scale.max(f64::MIN_POSITIVE)) {
            d[j] = 0.0;
            continue;
        }
        d[j] = dj;
        l[j][j] = Complex64::new(1.0, 0.0);
        for i in j + 1..n {
            let mut v = cov[i][j];
            for k in 0..j {
                v -= l[i][k] * l[j][k].conj() * d[k];
            }
            l[i][j] = v / dj;
        }
        let dof = windows as f64 - 1.0 - predictors as f64;
        out[j] = if dof > 0.0 {
            dj * (windows as f64 - 1.0) / dof
        } else {
            dj
        };
        predictors += 1;
    }
    out
}

/// `x + g * noise` with `g` set so the mixture has the requested SNR.
/// The noise is read cyclically from a seed-chosen starting sample.
pub fn add_noise(x: &Signal, noise: &Signal, snr_db: f64, seed: u64) -> Result<Signal> {
    if noise.sample_rate != x.sample_rate {
        return Err(Error::validation(format!(
            "noise rate {} Hz differs from signal rate {} Hz",
            noise.sample_rate, x.sample_rate
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::config("snr_db is NaN"));
    }
    let snr_db = snr_db.min(MAX_SNR_DB);
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..noise.len());
    let aligned: Vec<f64> = (0..x.len())
        .map(|i| noise.samples[(start + i) % noise.len()])
        .collect();
    let en = energy(&aligned);
    if en == 0.0 {
        return Err(Error::validation("noise segment has zero energy"));
    }
    let ex = x.energy();
    let gain = (ex / (en * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = x
        .samples
        .iter()
        .zip(&aligned)
        .map(|(s, n)| s + gain * n)
        .collect();
    Signal::new(samples, x.sample_rate)
}
