//! Sparse spike codec for audio.
//!
//! A signal is decomposed by greedy matching pursuit over an ERB-spaced
//! Gammatone kernel bank ([`codec`]); the analog codes are then binarized
//! onto `K * M` channels by intensity-to-place coding ([`itp`]). The
//! resulting spike pattern can be decoded back to codes and to a waveform.
//!
//! [`stream`] emulates a segment-buffered encoder with a fixed iteration
//! budget per segment, [`metrics`] evaluates representations and
//! [`snn`] trains a tempotron readout on spike patterns.

pub mod codec;
pub mod corpus;
pub mod error;
mod fft;
pub mod io;
pub mod itp;
pub mod kernels;
pub mod metrics;
pub mod snn;
pub mod stream;

pub use codec::{
    cross_correlate, encode, reconstruct, spike_rate, Code, CodeSet, EncoderParams, Selection,
    Signal, SignalMeta,
};
pub use error::{Error, Result};

pub use itp::{
    itp_decode, itp_encode, make_intensity_map, spike_spread, IntensityMap, SpikeEvent, Spiketrum,
    Strategy,
};
pub use kernels::{erb, eval_gammatone, Kernel, KernelBank, KernelBankConfig};

pub use metrics::{entropy, precision, psth, psth_similarity, similarity_report, PsthMode};
pub use snn::{classify, tempotron_train, LifNeuron, ReadoutGroups};
pub use stream::{stream_encode, StreamConfig};
