//! Single-layer LIF readout trained with the tempotron rule.
//!
//! Each input spike on channel `h` adds `w_h K(t - t_i)` to the membrane
//! potential, with `K` a difference of exponentials scaled to peak at 1.
//! Training uses the binary tempotron: a neuron either fires during a
//! pattern or not, and errors are corrected at the time of maximal
//! potential. Inference lets neurons fire repeatedly (reset to rest after
//! each spike) and picks the group with the most output spikes.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itp::Spiketrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifNeuron {
    pub weights: Vec<f64>,
    pub membrane_tau: f64,
    pub synaptic_tau: f64,
    pub threshold: f64,
}

impl LifNeuron {
    pub fn new(channels: usize) -> Self {
        LifNeuron {
            weights: vec![0.0; channels],
            membrane_tau: 0.020,
            synaptic_tau: 0.005,
            threshold: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.membrane_tau > self.synaptic_tau && self.synaptic_tau > 0.0) {
            return Err(Error::config(format!(
                "need membrane_tau > synaptic_tau > 0, got {} and {}",
                self.membrane_tau, self.synaptic_tau
            )));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::config("threshold must be positive"));
        }
        Ok(())
    }

    /// Time at which the PSP kernel peaks.
    pub fn peak_time(&self) -> f64 {
        let (m, s) = (self.membrane_tau, self.synaptic_tau);
        m * s / (m - s) * (m / s).ln()
    }

    fn norm(&self) -> f64 {
        let tp = self.peak_time();
        1.0 / ((-tp / self.membrane_tau).exp() - (-tp / self.synaptic_tau).exp())
    }

    /// Normalized PSP kernel, zero for `dt <= 0`.
    pub fn psp(&self, dt: f64) -> f64 {
        if dt <= 0.0 {
            return 0.0;
        }
        self.norm() * ((-dt / self.membrane_tau).exp() - (-dt / self.synaptic_tau).exp())
    }

    fn check_channels(&self, input: &Spiketrum) -> Result<()> {
        if input.num_channels() != self.weights.len() {
            return Err(Error::validation(format!(
                "pattern has {} channels but the neuron has {} weights",
                input.num_channels(),
                self.weights.len()
            )));
        }
        Ok(())
    }
}

/// Simulation time step for the potential trace.
pub const DEFAULT_DT: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    /// Output spike times.
    pub spikes: Vec<f64>,
    /// Time and value of the largest potential reached before the first spike
    /// (or over the whole pattern when silent).
    pub t_max: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Stop integrating after the first spike.
    Binary,
    /// Reset to rest after each spike and keep going.
    Reset,
}

fn simulate(neuron: &LifNeuron, input: &Spiketrum, dt: f64, mode: Mode) -> Response {
    let sr = input.meta.sample_rate;
    let steps = (input.duration() / dt).ceil() as usize + 1;
    let (dm, ds) = ((-dt / neuron.membrane_tau).exp(), (-dt / neuron.synaptic_tau).exp());
    let v0 = neuron.norm();
    let (mut a, mut b) = (0.0, 0.0);
    let mut next = 0;
    let mut spikes = Vec::new();
    let (mut t_max, mut v_max) = (0.0, f64::NEG_INFINITY);
    for j in 0..steps {
        let t = j as f64 * dt;
        a *= dm;
        b *= ds;
        while next < input.events.len() && input.events[next].time(sr) < t {
            let e = input.events[next];
            let lag = t - e.time(sr);
            let w = neuron.weights[e.channel - 1];
            a += w * (-lag / neuron.membrane_tau).exp();
            b += w * (-lag / neuron.synaptic_tau).exp();
            next += 1;
        }
        let v = v0 * (a - b);
        if spikes.is_empty() && v > v_max {
            v_max = v;
            t_max = t;
        }
        if v >= neuron.threshold {
            spikes.push(t);
            match mode {
                Mode::Binary => break,
                Mode::Reset => {
                    a = 0.0;
                    b = 0.0;
                }
            }
        }
    }
    Response {
        spikes,
        t_max,
        v_max,
    }
}

/// Potential at time `t` under the binary (shunting) dynamics: once the
/// neuron has fired, inputs arriving after the spike are ignored.
pub fn membrane_potential(neuron: &LifNeuron, input: &Spiketrum, t: f64) -> Result<f64> {
    neuron.check_channels(input)?;
    let sr = input.meta.sample_rate;
    let cutoff = simulate(neuron, input, DEFAULT_DT, Mode::Binary)
        .spikes
        .first()
        .copied()
        .unwrap_or(f64::INFINITY);
    Ok(input
        .events
        .iter()
        .map(|e| (e, e.time(sr)))
        .filter(|&(_, ti)| ti < t && ti < cutoff)
        .map(|(e, ti)| neuron.weights[e.channel - 1] * neuron.psp(t - ti))
        .sum())
}

/// Binary-mode response (first spike only).
pub fn respond_binary(neuron: &LifNeuron, input: &Spiketrum) -> Result<Response> {
    neuron.check_channels(input)?;
    Ok(simulate(neuron, input, DEFAULT_DT, Mode::Binary))
}

/// Multi-spike response with reset after every output spike.
pub fn respond(neuron: &LifNeuron, input: &Spiketrum) -> Result<Response> {
    neuron.check_channels(input)?;
    Ok(simulate(neuron, input, DEFAULT_DT, Mode::Reset))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutGroups {
    pub groups: BTreeMap<usize, Vec<usize>>,
}

impl ReadoutGroups {
    /// `per_group` consecutive neurons for every label in order.
    pub fn uniform(labels: &[usize], per_group: usize) -> Self {
        let groups = labels
            .iter()
            .enumerate()
            .map(|(g, &l)| (l, (g * per_group..(g + 1) * per_group).collect()))
            .collect();
        ReadoutGroups { groups }
    }

    pub fn num_neurons(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn validate(&self, neurons: usize) -> Result<()> {
        let mut owner = vec![None; neurons];
        for (&label, members) in &self.groups {
            for &n in members {
                let slot = owner.get_mut(n).ok_or_else(|| {
                    Error::validation(format!("group {label} lists neuron {n} of {neurons}"))
                })?;
                if let Some(other) = slot.replace(label) {
                    return Err(Error::validation(format!(
                        "neuron {n} is in groups {other} and {label}"
                    )));
                }
            }
        }
        if let Some(n) = owner.iter().position(Option::is_none) {
            return Err(Error::validation(format!("neuron {n} belongs to no group")));
        }
        Ok(())
    }

    fn label_of(&self) -> BTreeMap<usize, usize> {
        self.groups
            .iter()
            .flat_map(|(&l, ms)| ms.iter().map(move |&n| (n, l)))
            .collect()
    }
}

/// Neurons with small random weights.
pub fn init_neurons(count: usize, channels: usize, weight_std: f64, seed: u64) -> Vec<LifNeuron> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, weight_std.max(0.0)).expect("finite std");
    (0..count)
        .map(|_| {
            let mut n = LifNeuron::new(channels);
            n.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
            n
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub tie: bool,
    /// Output spikes per group label.
    pub counts: BTreeMap<usize, usize>,
}

impl Prediction {
    pub fn total_spikes(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Winner-group readout: label of the group emitting the most spikes,
/// smallest label on ties.
pub fn classify(
    neurons: &[LifNeuron],
    groups: &ReadoutGroups,
    pattern: &Spiketrum,
) -> Result<Prediction> {
    let mut counts = BTreeMap::new();
    for (&label, members) in &groups.groups {
        let mut total = 0;
        for &n in members {
            total += respond(&neurons[n], pattern)?.spikes.len();
        }
        counts.insert(label, total);
    }
    let best = counts.values().copied().max().unwrap_or(0);
    let winners: Vec<usize> = counts
        .iter()
        .filter(|(_, &c)| c == best)
        .map(|(&l, _)| l)
        .collect();
    Ok(Prediction {
        label: winners.first().copied().unwrap_or(0),
        tie: winners.len() != 1,
        counts,
    })
}

pub fn accuracy(
    neurons: &[LifNeuron],
    groups: &ReadoutGroups,
    dataset: &[(Spiketrum, usize)],
) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for (p, label) in dataset {
        let pred = classify(neurons, groups, p)?;
        correct += (!pred.tie && pred.label == *label) as usize;
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Sum of PSPs per channel at time `t` from input spikes before `t`.
fn psp_at(neuron: &LifNeuron, input: &Spiketrum, t: f64) -> Vec<(usize, f64)> {
    let sr = input.meta.sample_rate;
    input
        .events
        .iter()
        .take_while(|e| e.time(sr) < t)
        .map(|e| (e.channel - 1, neuron.psp(t - e.time(sr))))
        .collect()
}

/// One tempotron correction of `neuron` on `pattern`. Returns whether the
/// weights changed.
pub fn tempotron_update(
    neuron: &mut LifNeuron,
    pattern: &Spiketrum,
    should_fire: bool,
    learning_rate: f64,
) -> Result<bool> {
    let r = respond_binary(neuron, pattern)?;
    let fired = !r.spikes.is_empty();
    if fired == should_fire || learning_rate == 0.0 {
        return Ok(false);
    }
    let sign = if should_fire { 1.0 } else { -1.0 };
    for (ch, k) in psp_at(neuron, pattern, r.t_max) {
        neuron.weights[ch] += sign * learning_rate * k;
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Winner-group training accuracy after each epoch.
    pub accuracy: Vec<f64>,
    pub epochs_run: usize,
}

/// Tempotron training. Pattern order is reshuffled each epoch from `seed`.
/// Stops early once an epoch makes no weight change.
pub fn tempotron_train(
    neurons: &mut [LifNeuron],
    dataset: &[(Spiketrum, usize)],
    groups: &ReadoutGroups,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    groups.validate(neurons.len())?;
    for n in neurons.iter() {
        n.validate()?;
        for (p, _) in dataset {
            n.check_channels(p)?;
        }
    }
    let owner = groups.label_of();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = TrainReport {
        accuracy: Vec::new(),
        epochs_run: 0,
    };
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &i in &order {
            let (pattern, label) = &dataset[i];
            for (n, neuron) in neurons.iter_mut().enumerate() {
                changed |= tempotron_update(neuron, pattern, owner[&n] == *label, learning_rate)?;
            }
        }
        report.epochs_run += 1;
        report.accuracy.push(accuracy(neurons, groups, dataset)?);
        if !changed {
            break;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaReport {
    pub window: f64,
    pub bin_width: f64,
    /// `joint[channel][bin]`, bin `b` covering `(b * bin_width, (b + 1) * bin_width]`.
    pub joint: Vec<Vec<u64>>,
    pub channel_marginal: Vec<u64>,
    pub dt_marginal: Vec<u64>,
    pub post_spikes: usize,
}

impl StaReport {
    pub fn total(&self) -> u64 {
        self.joint.iter().flatten().sum()
    }
}

/// Joint histogram of pre-synaptic spikes preceding given post-synaptic times.
pub fn sta_from_post_spikes(
    patterns: &[(&Spiketrum, Vec<f64>)],
    channels: usize,
    window: f64,
    bin_width: f64,
) -> Result<StaReport> {
    if !(window > 0.0 && bin_width > 0.0) {
        return Err(Error::config("window and bin_width must be positive"));
    }
    let bins = (window / bin_width - 1e-9).ceil() as usize;
    let mut joint = vec![vec![0u64; bins]; channels];
    let mut post_spikes = 0;
    for (pattern, posts) in patterns {
        let sr = pattern.meta.sample_rate;
        for &t_post in posts {
            post_spikes += 1;
            for e in &pattern.events {
                let dt = t_post - e.time(sr);
                if dt > 0.0 && dt <= window + 1e-12 {
                    let b = ((dt / bin_width - 1e-9).ceil() as usize).clamp(1, bins) - 1;
                    let ch = e.channel - 1;
                    if ch >= channels {
                        return Err(Error::validation(format!(
                            "event on channel {} beyond {channels}",
                            e.channel
                        )));
                    }
                    joint[ch][b] += 1;
                }
            }
        }
    }
    if post_spikes == 0 {
        return Err(Error::EmptySta);
    }
    let channel_marginal = joint.iter().map(|r| r.iter().sum()).collect();
    let dt_marginal = (0..bins).map(|b| joint.iter().map(|r| r[b]).sum()).collect();
    Ok(StaReport {
        window,
        bin_width,
        joint,
        channel_marginal,
        dt_marginal,
        post_spikes,
    })
}

/// Spike-triggered distribution of inputs over `(0, window]` before each
/// output spike of `neuron` (multi-spike dynamics).
pub fn spike_triggered_average(
    neuron: &LifNeuron,
    dataset: &[(Spiketrum, usize)],
    window: f64,
    bin_width: f64,
) -> Result<StaReport> {
    let mut posts = Vec::with_capacity(dataset.len());
    for (p, _) in dataset {
        posts.push((p, respond(neuron, p)?.spikes));
    }
    sta_from_post_spikes(&posts, neuron.weights.len(), window, bin_width)
}

/// Weights, dynamics and group map in one serializable bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub neurons: Vec<LifNeuron>,
    pub groups: ReadoutGroups,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::SignalMeta;
    use crate::itp::{IntensityMap, SpikeEvent, Strategy};

    fn pattern(events: &[(usize, f64)], channels: usize, seconds: f64) -> Spiketrum {
        let sr = 16000.0;
        let mut ev: Vec<SpikeEvent> = events
            .iter()
            .map(|&(c, t)| SpikeEvent {
                channel: c,
                offset: (t * sr).round() as usize,
            })
            .collect();
        ev.sort_by_key(|e| (e.offset, e.channel));
        Spiketrum {
            events: ev,
            num_kernels: channels,
            meta: SignalMeta {
                sample_rate: sr,
                num_samples: (seconds * sr) as usize,
            },
            intensity_map: IntensityMap {
                strategy: Strategy::Log,
                levels: vec![1.0],
                normalization_scale: 1.0,
            },
            bank_fingerprint: String::new(),
            negative_events: vec![],
        }
    }

    #[test]
    fn psp_kernel_shape() {
        let n = LifNeuron::new(1);
        assert_eq!(n.psp(0.0), 0.0);
        let tp = n.peak_time();
        let expected = 0.020 * 0.005 / 0.015 * 4f64.ln();
        assert!((tp - expected).abs() < 1e-15);
        assert!((n.psp(tp) - 1.0).abs() < 1e-12);
        // numerical maximum on a fine grid
        let (mut best_t, mut best) = (0.0, 0.0);
        for i in 1..200_000 {
            let t = i as f64 * 1e-6;
            let v = n.psp(t);
            assert!(v >= 0.0);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        assert!((best_t - tp).abs() < 2e-6);
        assert!((best - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_weights_never_fire() {
        let n = LifNeuron::new(4);
        let p = pattern(&[(1, 0.01), (2, 0.02), (4, 0.05)], 4, 0.2);
        assert_eq!(membrane_potential(&n, &p, 0.1).unwrap(), 0.0);
        assert!(respond(&n, &p).unwrap().spikes.is_empty());
    }

    #[test]
    fn single_input_peaks_at_one() {
        let mut n = LifNeuron::new(2);
        n.weights[0] = 1.0;
        n.threshold = 10.0;
        let p = pattern(&[(1, 0.01)], 2, 0.2);
        let tp = n.peak_time();
        let v = membrane_potential(&n, &p, 0.01 + tp).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn learning_rate_zero_keeps_weights() {
        let mut neurons = init_neurons(2, 3, 0.1, 1);
        let before = neurons.clone();
        let data = vec![
            (pattern(&[(1, 0.01)], 3, 0.1), 0),
            (pattern(&[(2, 0.01)], 3, 0.1), 1),
        ];
        let groups = ReadoutGroups::uniform(&[0, 1], 1);
        tempotron_train(&mut neurons, &data, &groups, 5, 0.0, 3).unwrap();
        assert_eq!(neurons, before);
    }

    #[test]
    fn update_raises_potential_of_silent_neuron() {
        let mut n = LifNeuron::new(3);
        n.weights = vec![0.1, 0.05, -0.02];
        let p = pattern(&[(1, 0.01), (2, 0.012), (3, 0.02), (1, 0.03)], 3, 0.1);
        let before = respond_binary(&n, &p).unwrap();
        assert!(before.spikes.is_empty());
        assert!(tempotron_update(&mut n, &p, true, 0.05).unwrap());
        let after = membrane_potential(&n, &p, before.t_max).unwrap();
        assert!(after >= before.v_max);
    }

    #[test]
    fn separable_two_class_problem() {
        let mut data = Vec::new();
        for i in 0..10 {
            let jitter = 0.001 * i as f64;
            let a: Vec<(usize, f64)> = (0..6).map(|j| (1 + j % 3, 0.02 + 0.01 * j as f64 + jitter)).collect();
            let b: Vec<(usize, f64)> = (0..6).map(|j| (4 + j % 3, 0.02 + 0.01 * j as f64 + jitter)).collect();
            data.push((pattern(&a, 6, 0.15), 0));
            data.push((pattern(&b, 6, 0.15), 1));
        }
        let groups = ReadoutGroups::uniform(&[0, 1], 2);
        let mut neurons = init_neurons(4, 6, 0.01, 7);
        let report = tempotron_train(&mut neurons, &data, &groups, 20, 0.1, 7).unwrap();
        assert_eq!(*report.accuracy.last().unwrap(), 1.0);
        assert_eq!(classify(&neurons, &groups, &data[0].0).unwrap().label, 0);
        assert_eq!(classify(&neurons, &groups, &data[1].0).unwrap().label, 1);
    }

    #[test]
    fn silent_network_ties() {
        let neurons = vec![LifNeuron::new(2); 4];
        let groups = ReadoutGroups::uniform(&[3, 5], 2);
        let pred = classify(&neurons, &groups, &pattern(&[(1, 0.01)], 2, 0.05)).unwrap();
        assert!(pred.tie);
        assert_eq!(pred.label, 3);
        assert_eq!(pred.total_spikes(), 0);
    }

    #[test]
    fn groups_must_partition() {
        let mut g = ReadoutGroups::uniform(&[0, 1], 2);
        assert!(g.validate(4).is_ok());
        assert!(g.validate(5).is_err());
        g.groups.get_mut(&1).unwrap()[0] = 0;
        assert!(g.validate(4).is_err());
    }

    #[test]
    fn channel_mismatch() {
        let n = LifNeuron::new(3);
        let p = pattern(&[(1, 0.01)], 4, 0.1);
        assert!(matches!(respond(&n, &p), Err(Error::Validation(_))));
    }

    #[test]
    fn sta_single_pair() {
        let p = pattern(&[(7, 0.100)], 10, 0.3);
        let r = sta_from_post_spikes(&[(&p, vec![0.115])], 10, 0.120, 0.001).unwrap();
        assert_eq!(r.joint[0].len(), 120);
        assert_eq!(r.total(), 1);
        assert_eq!(r.joint[6][14], 1);
        assert_eq!(r.channel_marginal.iter().sum::<u64>(), r.total());
        assert_eq!(r.dt_marginal.iter().sum::<u64>(), r.total());
        assert!(matches!(
            sta_from_post_spikes(&[(&p, vec![])], 10, 0.12, 0.001),
            Err(Error::EmptySta)
        ));
    }

    #[test]
    fn sta_window_edges() {
        // dt = 0 and dt > window are excluded, dt = window is the last bin
        let p = pattern(&[(1, 0.2), (2, 0.08), (3, 0.079)], 3, 0.3);
        let r = sta_from_post_spikes(&[(&p, vec![0.2])], 3, 0.120, 0.001).unwrap();
        assert_eq!(r.total(), 1);
        assert_eq!(r.joint[1][119], 1);
    }
}
