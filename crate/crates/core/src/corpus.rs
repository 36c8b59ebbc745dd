//! Deterministic synthetic signals for tests, sweeps and the demo classifier.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::codec::{place, Code, Signal};
use crate::kernels::KernelBank;

pub const NUM_EVENT_CLASSES: usize = 10;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sum of the given atoms over `len` samples.
pub fn kernel_sum(bank: &KernelBank, codes: &[Code], len: usize) -> Signal {
    let mut x = vec![0.0; len];
    for c in codes {
        place(&mut x, &bank.kernels()[c.kernel_index - 1].samples, c.offset, c.amplitude);
    }
    Signal {
        samples: x,
        sample_rate: bank.sample_rate(),
    }
}

/// Up to `max_atoms` positive atoms separated so that no kernel of the bank
/// can overlap two of them. Returns the signal and the planted codes.
pub fn planted_atoms(bank: &KernelBank, max_atoms: usize, seed: u64) -> (Signal, Vec<Code>) {
    let mut rng = rng_for(seed, 1);
    let n = rng.random_range(1..=max_atoms);
    let gap = bank.max_kernel_len();
    let mut codes = Vec::with_capacity(n);
    let mut cursor = rng.random_range(0..64);
    for _ in 0..n {
        let m = rng.random_range(1..=bank.len());
        codes.push(Code {
            kernel_index: m,
            offset: cursor,
            amplitude: rng.random_range(0.2..2.0),
        });
        cursor += bank.kernels()[m - 1].len() + gap + rng.random_range(0..200);
    }
    let len = cursor;
    (kernel_sum(bank, &codes, len), codes)
}

/// Randomly placed atoms with exponentially distributed amplitudes.
pub fn exponential_kernel_sum(
    bank: &KernelBank,
    duration: f64,
    atoms_per_second: f64,
    seed: u64,
) -> (Signal, Vec<Code>) {
    let mut rng = rng_for(seed, 2);
    let len = (duration * bank.sample_rate()).round() as usize;
    let n = (duration * atoms_per_second).round() as usize;
    let exp = Exp::new(1.0).expect("rate 1");
    let codes: Vec<Code> = (0..n)
        .map(|_| Code {
            kernel_index: rng.random_range(1..=bank.len()),
            offset: rng.random_range(0..len),
            amplitude: exp.sample(&mut rng),
        })
        .collect();
    (kernel_sum(bank, &codes, len), codes)
}

/// Second-order band-pass (constant peak gain).
struct BandPass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BandPass {
    fn new(center: f64, q: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * center / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        BandPass {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// Mixture of modulated tones, a glide and band-limited noise.
pub fn audio_like(duration: f64, sample_rate: f64, seed: u64) -> Signal {
    let mut rng = rng_for(seed, 3);
    let n = (duration * sample_rate).round() as usize;
    let mut x = vec![0.0; n];
    let tones = rng.random_range(2..5);
    for _ in 0..tones {
        let f = rng.random_range(80.0..3000.0);
        let am = rng.random_range(1.0..12.0);
        let depth = rng.random_range(0.0..0.9);
        let a = rng.random_range(0.1..0.6);
        let ph = rng.random_range(0.0..2.0 * PI);
        let onset = rng.random_range(0.0..0.3) * duration;
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / sample_rate;
            if t < onset {
                continue;
            }
            let env = 1.0 - depth * (0.5 + 0.5 * (2.0 * PI * am * t).cos());
            *v += a * env * (2.0 * PI * f * t + ph).sin();
        }
    }
    let (f0, f1) = (rng.random_range(100.0..1000.0), rng.random_range(500.0..5000.0));
    let glide_amp = rng.random_range(0.05..0.4);
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / sample_rate;
        let phase = 2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / duration * t * t);
        *v += glide_amp * phase.sin();
    }
    let mut bp = BandPass::new(rng.random_range(300.0..4000.0), 2.0, sample_rate);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise_amp = rng.random_range(0.02..0.2);
    for v in x.iter_mut() {
        *v += noise_amp * bp.tick(normal.sample(&mut rng));
    }
    normalize_peak(&mut x, 0.8);
    Signal {
        samples: x,
        sample_rate,
    }
}

fn burst_envelope(t: f64, onset: f64, length: f64) -> f64 {
    let u = t - onset;
    if u < 0.0 || u > length {
        return 0.0;
    }
    let ramp = 0.01f64.min(length / 4.0);
    (u / ramp).min(1.0) * ((length - u) / ramp).min(1.0)
}

/// One sample of a synthetic sound-event class (`0..NUM_EVENT_CLASSES`).
///
/// Classes: tone burst, harmonic complex, rising glide, falling glide,
/// noise burst, amplitude-modulated tone, click train, low rumble,
/// vibrato tone, alternating two-tone. Every sample jitters onset,
/// level, frequency and adds a faint noise floor.
pub fn sound_event(class: usize, duration: f64, sample_rate: f64, seed: u64) -> Signal {
    let mut rng = rng_for(seed, 100 + class as u64);
    let n = (duration * sample_rate).round() as usize;
    let onset = rng.random_range(0.0..0.1) * duration;
    let length = rng.random_range(0.6..0.75) * duration;
    let level = rng.random_range(0.5..1.0);
    let jitter = rng.random_range(0.95..1.05);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = vec![0.0; n];
    let mut bp_noise = BandPass::new(2500.0 * jitter, 1.0, sample_rate);
    let mut bp_low = BandPass::new(120.0 * jitter, 1.5, sample_rate);
    let mut bp_click = BandPass::new(1800.0 * jitter, 4.0, sample_rate);
    let click_period = 0.05 * jitter;
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / sample_rate;
        let env = burst_envelope(t, onset, length);
        let u = t - onset;
        let s = match class % NUM_EVENT_CLASSES {
            0 => (2.0 * PI * 440.0 * jitter * t).sin(),
            1 => (1..=5)
                .map(|h| (2.0 * PI * 200.0 * jitter * h as f64 * t).sin() / h as f64)
                .sum(),
            2 => {
                let (f0, f1) = (300.0 * jitter, 3000.0 * jitter);
                (2.0 * PI * (f0 * u + 0.5 * (f1 - f0) / length * u * u)).sin()
            }
            3 => {
                let (f0, f1) = (3000.0 * jitter, 300.0 * jitter);
                (2.0 * PI * (f0 * u + 0.5 * (f1 - f0) / length * u * u)).sin()
            }
            4 => {
                let e = if u >= 0.0 && u < 0.3 * length { 1.0 } else { 0.0 };
                e * bp_noise.tick(normal.sample(&mut rng)) * 3.0
            }
            5 => {
                let am = 0.5 + 0.5 * (2.0 * PI * 8.0 * jitter * t).sin();
                am * (2.0 * PI * 1000.0 * jitter * t).sin()
            }
            6 => {
                let phase = (u.max(0.0) / click_period).fract();
                let impulse = if phase * click_period * sample_rate < 1.0 { 8.0 } else { 0.0 };
                bp_click.tick(impulse)
            }
            7 => bp_low.tick(normal.sample(&mut rng)) * 4.0,
            8 => {
                let vib = 4000.0 * jitter * t + 60.0 / (2.0 * PI * 6.0) * (2.0 * PI * 6.0 * t).sin();
                (2.0 * PI * vib).sin()
            }
            _ => {
                let slot = (u.max(0.0) / (0.1 * jitter)) as usize;
                let f = if slot % 2 == 0 { 600.0 } else { 1500.0 } * jitter;
                (2.0 * PI * f * t).sin()
            }
        };
        *v = level * env * s;
    }
    normalize_peak(&mut x, level * 0.8);
    for v in x.iter_mut() {
        *v += 1e-3 * normal.sample(&mut rng);
    }
    Signal {
        samples: x,
        sample_rate,
    }
}

/// `per_class` samples of each of the first `classes` event classes,
/// class-major order, labelled `0..classes`.
pub fn event_corpus(
    classes: usize,
    per_class: usize,
    duration: f64,
    sample_rate: f64,
    seed: u64,
) -> Vec<(Signal, usize)> {
    (0..classes)
        .flat_map(|c| {
            (0..per_class).map(move |i| {
                let s = seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add((c * 100_003 + i) as u64);
                (sound_event(c, duration, sample_rate, s), c)
            })
        })
        .collect()
}

/// One sample of every event class back to back, `event_duration` each.
pub fn event_sequence(event_duration: f64, sample_rate: f64, seed: u64) -> Signal {
    let mut samples = Vec::new();
    for c in 0..NUM_EVENT_CLASSES {
        let s = seed.wrapping_mul(NUM_EVENT_CLASSES as u64).wrapping_add(c as u64);
        samples.extend(sound_event(c, event_duration, sample_rate, s).samples);
    }
    Signal {
        samples,
        sample_rate,
    }
}

/// Babble-like noise: eight band-limited noise sources in the speech band,
/// each with a slow syllabic envelope.
pub fn babble(duration: f64, sample_rate: f64, seed: u64) -> Signal {
    let mut rng = rng_for(seed, 7);
    let n = (duration * sample_rate).round() as usize;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = vec![0.0; n];
    for _ in 0..8 {
        let mut bp = BandPass::new(rng.random_range(300.0..3000.0), 1.5, sample_rate);
        let rate = rng.random_range(3.0..6.0);
        let ph = rng.random_range(0.0..2.0 * PI);
        let gain = rng.random_range(0.5..1.0);
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / sample_rate;
            let env = (PI * rate * t + ph).sin().abs();
            *v += gain * env * bp.tick(normal.sample(&mut rng));
        }
    }
    normalize_peak(&mut x, 0.8);
    Signal {
        samples: x,
        sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelBankConfig;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(audio_like(0.1, 16000.0, 4), audio_like(0.1, 16000.0, 4));
        assert_ne!(audio_like(0.1, 16000.0, 4), audio_like(0.1, 16000.0, 5));
        assert_eq!(babble(0.1, 16000.0, 1), babble(0.1, 16000.0, 1));
        for c in 0..NUM_EVENT_CLASSES {
            let a = sound_event(c, 0.2, 16000.0, 3);
            assert_eq!(a, sound_event(c, 0.2, 16000.0, 3));
            assert!(a.energy() > 0.0, "class {c}");
        }
    }

    #[test]
    fn planted_atoms_do_not_share_support() {
        let bank = KernelBank::build(KernelBankConfig::default()).unwrap();
        let (x, codes) = planted_atoms(&bank, 8, 42);
        for w in codes.windows(2) {
            let end = w[0].offset + bank.kernels()[w[0].kernel_index - 1].len();
            assert!(w[1].offset >= end + bank.max_kernel_len());
        }
        let last = codes.last().unwrap();
        assert!(x.len() >= last.offset + bank.kernels()[last.kernel_index - 1].len());
    }
}
