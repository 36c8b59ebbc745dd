//! Thin helpers over `rustfft` for real-valued correlation.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse transform pair of one length.
#[derive(Clone)]
pub struct FftPair {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("len", &self.len).finish()
    }
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Zero-padded forward transform of a real sequence.
    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        assert!(x.len() <= self.len, "input longer than transform");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Circular cross-correlation `r[j] = sum_u a(u + j) b(u)` from the two spectra.
    /// Only the real part is returned, already scaled by `1/len`.
    pub fn correlate_spectra(&self, a: &[Complex64], b: &[Complex64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x * y.conj()).collect();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }
}

/// Smallest power of two `>= n` (at least 1).
pub fn fft_len_for(n: usize) -> usize {
    n.max(1).next_power_of_two()
}
