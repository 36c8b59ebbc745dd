//! WAV input/output and sample-rate conversion.

use std::f64::consts::PI;
use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use spiketrum::Signal;

use crate::error::{CliError, CliResult};

/// Zero crossings of the sinc on each side of the interpolation point.
const SINC_HALF_WIDTH: f64 = 32.0;

/// Reads a mono WAV as samples in `[-1, 1]`, resampled to `target_rate`.
/// The second value is a notice when resampling happened.
pub fn read_wav(path: &Path, target_rate: f64) -> CliResult<(Signal, Option<String>)> {
    let mut reader = WavReader::open(path).map_err(|e| {
        CliError::io(path, format!("{e} (expected a readable PCM or float WAV file)"))
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CliError::io(
            path,
            format!(
                "{} channels found, only mono is supported; downmix first, \
                 e.g. `sox in.wav -c 1 out.wav`",
                spec.channels
            ),
        ));
    }
    let bad = |e: hound::Error| CliError::io(path, e);
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(bad)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(bad)?
        }
        (fmt, bits) => {
            return Err(CliError::io(
                path,
                format!("unsupported sample format {fmt:?} with {bits} bits"),
            ))
        }
    };
    if samples.is_empty() {
        return Err(CliError::data(format!("{}: WAV file has no samples", path.display())));
    }
    let rate = spec.sample_rate as f64;
    let (samples, notice) = if (rate - target_rate).abs() > 1e-9 {
        (
            resample(&samples, rate, target_rate),
            Some(format!(
                "note: resampled {} from {rate} Hz to {target_rate} Hz",
                path.display()
            )),
        )
    } else {
        (samples, None)
    };
    Ok((Signal::new(samples, target_rate)?, notice))
}

/// 32-bit float mono WAV file contents.
pub fn wav_bytes(signal: &Signal) -> CliResult<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut cursor = Cursor::new(Vec::new());
    let to_err = |e: hound::Error| CliError::data(format!("cannot encode WAV: {e}"));
    {
        let mut w = WavWriter::new(&mut cursor, spec).map_err(to_err)?;
        for &s in &signal.samples {
            w.write_sample(s as f32).map_err(to_err)?;
        }
        w.finalize().map_err(to_err)?;
    }
    Ok(cursor.into_inner())
}

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let u = PI * (x + 1.0);
    0.42 - 0.5 * u.cos() + 0.08 * (2.0 * u).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Blackman-windowed sinc interpolation. When downsampling the cutoff is
/// lowered to the new Nyquist frequency.
pub fn resample(x: &[f64], from: f64, to: f64) -> Vec<f64> {
    let ratio = to / from;
    let out_len = (x.len() as f64 * ratio).round() as usize;
    let cutoff = ratio.min(1.0);
    let half = SINC_HALF_WIDTH / cutoff;
    (0..out_len)
        .map(|j| {
            let center = j as f64 / ratio;
            let lo = (center - half).ceil().max(0.0) as usize;
            let hi = ((center + half).floor() as usize).min(x.len() - 1);
            (lo..=hi)
                .map(|i| {
                    let d = i as f64 - center;
                    x[i] * cutoff * sinc(cutoff * d) * blackman(d / half)
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / rate).sin()).collect()
    }

    #[test]
    fn resampling_preserves_in_band_tone() {
        let x = tone(440.0, 22050.0, 22050);
        let y = resample(&x, 22050.0, 16000.0);
        assert_eq!(y.len(), 16000);
        let want = tone(440.0, 16000.0, 16000);
        let err = y[200..15800]
            .iter()
            .zip(&want[200..15800])
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn downsampling_removes_out_of_band_tone() {
        let x = tone(10000.0, 32000.0, 32000);
        let y = resample(&x, 32000.0, 16000.0);
        let peak = y[200..15800].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 0.01, "{peak}");
    }

    #[test]
    fn same_rate_is_identity_on_grid() {
        let x = tone(300.0, 16000.0, 1000);
        let y = resample(&x, 16000.0, 16000.0);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wav_round_trip_through_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let s = Signal::new(tone(200.0, 16000.0, 400).iter().map(|v| v * 0.5).collect(), 16000.0)
            .unwrap();
        let path = dir.path().join("t.wav");
        std::fs::write(&path, wav_bytes(&s).unwrap()).unwrap();
        let (back, notice) = read_wav(&path, 16000.0).unwrap();
        assert!(notice.is_none());
        for (a, b) in s.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
