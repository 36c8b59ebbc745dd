//! Shared fixtures for the benchmarks.

use spiketrum::corpus::audio_like;
use spiketrum::{KernelBank, KernelBankConfig, Signal};

pub fn bank() -> KernelBank {
    KernelBank::build(KernelBankConfig::default()).expect("default bank")
}

/// Deterministic audio-like test signal at the bank's rate.
pub fn signal(bank: &KernelBank, duration: f64) -> Signal {
    audio_like(duration, bank.sample_rate(), 7)
}
