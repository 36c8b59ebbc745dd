//! Matching-pursuit encoder and linear decoder.
//!
//! The encoder works on a zero-padded copy of the signal so that atoms may
//! start anywhere in `[0, T)` and overhang the end; the overhang lives in the
//! padding and is clipped on reconstruction. Every atom therefore stays a
//! full unit-norm kernel, which keeps the energy identity
//! `|R_{i+1}|^2 = |R_i|^2 - s_i^2` exact.
//!
//! After the initial FFT correlation, each iteration only touches the lags
//! that overlap the subtracted atom, using the precomputed kernel Gram table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_len_for;
use crate::kernels::{Kernel, KernelBank};

const RATE_TOLERANCE: f64 = 1e-9;
const BLOCK: usize = 256;

/// Mono sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::config(format!(
                "sample_rate must be positive, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::validation("signal has no samples"));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Signal::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }

    pub fn meta(&self) -> SignalMeta {
        SignalMeta {
            sample_rate: self.sample_rate,
            num_samples: self.samples.len(),
        }
    }
}

pub(crate) fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    pub sample_rate: f64,
    pub num_samples: usize,
}

impl SignalMeta {
    pub fn duration(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate
    }
}

/// One placed, scaled kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Code {
    /// 1-based kernel index.
    pub kernel_index: usize,
    /// Onset as a sample index.
    pub offset: usize,
    pub amplitude: f64,
}

impl Code {
    pub fn time(&self, sample_rate: f64) -> f64 {
        self.offset as f64 / sample_rate
    }
}

/// Codes in extraction order plus the context needed to decode them.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSet {
    pub codes: Vec<Code>,
    pub residual_energy_ratio: f64,
    pub bank_fingerprint: String,
    pub meta: SignalMeta,
    /// `|R_i|^2` before the first and after every iteration. Empty for
    /// decoded code sets.
    pub energy_trace: Vec<f64>,
}

impl CodeSet {
    pub fn empty(meta: SignalMeta, bank_fingerprint: impl Into<String>) -> Self {
        CodeSet {
            codes: Vec::new(),
            residual_energy_ratio: 0.0,
            bank_fingerprint: bank_fingerprint.into(),
            meta,
            energy_trace: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.meta.duration()
    }

    /// The first `n` codes, with the residual ratio taken from the trace.
    pub fn truncated(&self, n: usize) -> CodeSet {
        let n = n.min(self.codes.len());
        let trace: Vec<f64> = self.energy_trace.iter().take(n + 1).copied().collect();
        let ratio = match (trace.first(), trace.last()) {
            (Some(&e0), Some(&e)) if e0 > 0.0 => (e / e0).clamp(0.0, 1.0),
            _ => self.residual_energy_ratio,
        };
        CodeSet {
            codes: self.codes[..n].to_vec(),
            residual_energy_ratio: ratio,
            bank_fingerprint: self.bank_fingerprint.clone(),
            meta: self.meta,
            energy_trace: trace,
        }
    }
}

/// Which correlation extremum the encoder selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Largest signed correlation; stop once it is no longer positive.
    #[default]
    Signed,
    /// Largest absolute correlation; amplitudes may be negative.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderParams {
    pub max_codes: usize,
    pub min_energy_ratio: f64,
    /// When set, the code budget is `round(rate * duration)`.
    pub target_spike_rate: Option<f64>,
    #[serde(default)]
    pub selection: Selection,
}

impl Default for EncoderParams {
    fn default() -> Self {
        EncoderParams {
            max_codes: 1000,
            min_energy_ratio: 1e-4,
            target_spike_rate: None,
            selection: Selection::Signed,
        }
    }
}

impl EncoderParams {
    pub fn with_rate(rate: f64, min_energy_ratio: f64) -> Self {
        EncoderParams {
            max_codes: 1,
            min_energy_ratio,
            target_spike_rate: Some(rate),
            selection: Selection::Signed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.min_energy_ratio) {
            return Err(Error::config(format!(
                "min_energy_ratio must lie in [0, 1), got {}",
                self.min_energy_ratio
            )));
        }
        match self.target_spike_rate {
            Some(r) if !(r >= 0.0 && r.is_finite()) => Err(Error::config(format!(
                "target_spike_rate must be non-negative, got {r}"
            ))),
            None if self.max_codes < 1 => Err(Error::config("max_codes must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Number of iterations allowed for a signal of `duration` seconds.
    pub fn code_budget(&self, duration: f64) -> usize {
        match self.target_spike_rate {
            Some(rate) => (rate * duration).round() as usize,
            None => self.max_codes,
        }
    }
}

pub(crate) fn check_rate(signal_rate: f64, bank: &KernelBank) -> Result<()> {
    if (signal_rate - bank.sample_rate()).abs() > RATE_TOLERANCE {
        return Err(Error::config(format!(
            "signal sample rate {signal_rate} Hz does not match kernel bank rate {} Hz",
            bank.sample_rate()
        )));
    }
    Ok(())
}

/// Sliding inner products `H(tau) = sum_t R(t) phi(t - tau)` for every
/// `tau` in `[0, len)`, computed in the frequency domain. The signal is
/// treated as zero beyond its end.
pub fn cross_correlate(residual: &Signal, kernel: &Kernel) -> Result<Vec<f64>> {
    let (t, l) = (residual.len(), kernel.len());
    if l > t {
        return Err(Error::Sizing {
            kernel_len: l,
            signal_len: t,
        });
    }
    let fft = crate::fft::FftPair::new(fft_len_for(t + l - 1));
    let xr = fft.forward_real(&residual.samples);
    let kr = fft.forward_real(&kernel.samples);
    let mut h = fft.correlate_spectra(&xr, &kr);
    h.truncate(t);
    Ok(h)
}

/// Candidate ordering: higher score, then earlier time, then lower kernel.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    offset: usize,
    kernel: usize,
}

impl Candidate {
    const NONE: Candidate = Candidate {
        score: f64::NEG_INFINITY,
        offset: usize::MAX,
        kernel: usize::MAX,
    };

    fn beats(&self, other: &Candidate) -> bool {
        if self.score != other.score {
            return self.score > other.score;
        }
        (self.offset, self.kernel) < (other.offset, other.kernel)
    }
}

/// Greedy pursuit state over one residual buffer.
pub(crate) struct Pursuit<'a> {
    bank: &'a KernelBank,
    residual: Vec<f64>,
    shifts: usize,
    corr: Vec<Vec<f64>>,
    blocks: Vec<Vec<Candidate>>,
    energy: f64,
    selection: Selection,
    incremental: bool,
    fft_len: usize,
}

impl<'a> Pursuit<'a> {
    /// `residual` must be long enough to hold any kernel starting at any
    /// shift in `[0, shifts)`.
    pub(crate) fn new(
        bank: &'a KernelBank,
        residual: Vec<f64>,
        shifts: usize,
        selection: Selection,
        fft_len: usize,
    ) -> Self {
        debug_assert!(residual.len() + 1 >= shifts + bank.max_kernel_len());
        debug_assert!(fft_len >= residual.len());
        let energy = energy(&residual);
        let mut p = Pursuit {
            bank,
            residual,
            shifts,
            corr: Vec::new(),
            blocks: Vec::new(),
            energy,
            selection,
            incremental: true,
            fft_len,
        };
        p.recompute_all();
        p
    }

    fn recompute_all(&mut self) {
        let spectra = self.bank.spectra(self.fft_len);
        let xr = spectra.fft.forward_real(&self.residual);
        self.corr = spectra
            .spectra
            .iter()
            .map(|k| {
                let mut h = spectra.fft.correlate_spectra(&xr, k);
                h.truncate(self.shifts);
                h
            })
            .collect();
        let nblocks = self.shifts.div_ceil(BLOCK);
        self.blocks = vec![vec![Candidate::NONE; nblocks]; self.corr.len()];
        for m in 0..self.corr.len() {
            for b in 0..nblocks {
                self.refresh_block(m, b);
            }
        }
    }

    fn score(&self, h: f64) -> f64 {
        match self.selection {
            Selection::Signed => h,
            Selection::Magnitude => h.abs(),
        }
    }

    fn refresh_block(&mut self, m: usize, b: usize) {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(self.shifts);
        let mut best = Candidate::NONE;
        for (i, &h) in self.corr[m][lo..hi].iter().enumerate() {
            let s = self.score(h);
            if s > best.score {
                best = Candidate {
                    score: s,
                    offset: lo + i,
                    kernel: m,
                };
            }
        }
        self.blocks[m][b] = best;
    }

    fn best(&self) -> Candidate {
        let mut best = Candidate::NONE;
        for row in &self.blocks {
            for c in row {
                if c.beats(&best) {
                    best = *c;
                }
            }
        }
        best
    }

    pub(crate) fn energy(&self) -> f64 {
        self.energy
    }

    pub(crate) fn into_residual(self) -> Vec<f64> {
        self.residual
    }

    /// One pursuit iteration. Returns `(kernel 0-based, offset, amplitude)`
    /// or `None` when no candidate would reduce the residual.
    pub(crate) fn step(&mut self) -> Option<(usize, usize, f64)> {
        if self.shifts == 0 {
            return None;
        }
        let best = self.best();
        if !(best.score > 0.0) {
            return None;
        }
        let (m, tau) = (best.kernel, best.offset);
        let s = self.corr[m][tau];
        let phi = &self.bank.kernels()[m].samples;
        let window = &mut self.residual[tau..tau + phi.len()];
        let before = energy(window);
        for (r, p) in window.iter_mut().zip(phi) {
            *r -= s * p;
        }
        let after = energy(window);
        self.energy += after - before;

        if self.incremental {
            let gram = self.bank.gram();
            let lm = phi.len();
            for mp in 0..self.corr.len() {
                let lmp = self.bank.kernels()[mp].len();
                let lo = tau.saturating_sub(lmp - 1);
                let hi = (tau + lm - 1).min(self.shifts - 1);
                let lags = gram.lags(m, mp);
                // lag d = t' - tau lives at index d + lmp - 1
                let base = lo + lmp - 1 - tau;
                for (h, g) in self.corr[mp][lo..=hi].iter_mut().zip(&lags[base..]) {
                    *h -= s * g;
                }
                for b in lo / BLOCK..=hi / BLOCK {
                    self.refresh_block(mp, b);
                }
            }
        } else {
            self.recompute_all();
        }
        Some((m, tau, s))
    }
}

fn run(
    x: &Signal,
    bank: &KernelBank,
    params: &EncoderParams,
    incremental: bool,
) -> Result<CodeSet> {
    check_rate(x.sample_rate, bank)?;
    params.validate()?;
    let meta = x.meta();
    let e0 = x.energy();
    if e0 == 0.0 {
        return Ok(CodeSet::empty(meta, bank.fingerprint()));
    }
    let budget = params.code_budget(x.duration());
    let t = x.len();
    let mut buffer = x.samples.clone();
    buffer.resize(t + bank.max_kernel_len() - 1, 0.0);
    let fft_len = fft_len_for(buffer.len());
    let mut pursuit = Pursuit::new(bank, buffer, t, params.selection, fft_len);
    pursuit.incremental = incremental;

    let mut codes = Vec::with_capacity(budget.min(1 << 20));
    let mut trace = vec![e0];
    while codes.len() < budget {
        if pursuit.energy() / e0 < params.min_energy_ratio {
            break;
        }
        let Some((m, offset, amplitude)) = pursuit.step() else {
            break;
        };
        codes.push(Code {
            kernel_index: m + 1,
            offset,
            amplitude,
        });
        trace.push(pursuit.energy());
    }
    let ratio = (pursuit.energy() / e0).clamp(0.0, 1.0);
    Ok(CodeSet {
        codes,
        residual_energy_ratio: ratio,
        bank_fingerprint: bank.fingerprint().to_string(),
        meta,
        energy_trace: trace,
    })
}

/// Greedy matching-pursuit decomposition of `x` over `bank`.
pub fn encode(x: &Signal, bank: &KernelBank, params: &EncoderParams) -> Result<CodeSet> {
    run(x, bank, params, true)
}

/// Same as [`encode`] but recomputes every correlation from scratch each
/// iteration. Slow; kept as a reference for the incremental path.
pub fn encode_full_recompute(
    x: &Signal,
    bank: &KernelBank,
    params: &EncoderParams,
) -> Result<CodeSet> {
    run(x, bank, params, false)
}

/// Adds `amplitude * phi` at `offset`, clipping at the end of `out`.
pub(crate) fn place(out: &mut [f64], phi: &[f64], offset: usize, amplitude: f64) {
    if offset >= out.len() {
        return;
    }
    for (o, p) in out[offset..].iter_mut().zip(phi) {
        *o += amplitude * p;
    }
}

/// Linear superposition of the coded atoms over `duration` seconds.
pub fn reconstruct(codes: &CodeSet, bank: &KernelBank, duration: f64) -> Result<Signal> {
    check_rate(codes.meta.sample_rate, bank)?;
    let len = (duration * bank.sample_rate()).round() as usize;
    let mut out = vec![0.0; len];
    for (i, c) in codes.codes.iter().enumerate() {
        let kernel = bank.kernel(c.kernel_index).ok_or_else(|| {
            Error::validation(format!(
                "code {i} references kernel {} but the bank has {}",
                c.kernel_index,
                bank.len()
            ))
        })?;
        if c.offset >= len {
            return Err(Error::validation(format!(
                "code {i} starts at sample {} beyond the signal length {len}",
                c.offset
            )));
        }
        place(&mut out, &kernel.samples, c.offset, c.amplitude);
    }
    Signal::new(out, bank.sample_rate())
}

/// Codes per second of signal.
pub fn spike_rate(codes: &CodeSet) -> f64 {
    let d = codes.duration();
    if d > 0.0 {
        codes.len() as f64 / d
    } else {
        0.0
    }
}
