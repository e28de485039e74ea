//! Slot-by-slot Monte Carlo of the queue under a probabilistic policy.
//!
//! Each source of randomness has its own ChaCha8 stream derived from the
//! seed: 0 for arrivals, 1 for the channel, 2 for the transmission coin.
//! Standard errors come from non-overlapping batch means.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Policy, SystemSpec};

pub const ARRIVAL_STREAM: u64 = 0;
pub const CHANNEL_STREAM: u64 = 1;
pub const COIN_STREAM: u64 = 2;
/// Number of batches used for the standard errors.
pub const BATCHES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub slots: u64,
    pub seed: u64,
    /// Slots simulated before measurement starts.
    pub warmup: u64,
}

impl SimConfig {
    /// Warmup defaults to 1% of `slots`.
    pub fn new(slots: u64, seed: u64) -> Result<Self> {
        Self::with_warmup(slots, seed, slots / 100)
    }

    pub fn with_warmup(slots: u64, seed: u64, warmup: u64) -> Result<Self> {
        if slots == 0 {
            return Err(Error::InvalidValue {
                field: "sim.slots",
                reason: "must be at least 1".into(),
            });
        }
        if warmup >= slots {
            return Err(Error::InvalidValue {
                field: "sim.warmup",
                reason: format!("warmup {warmup} must be below slots {slots}"),
            });
        }
        Ok(Self { slots, seed, warmup })
    }

    pub fn measured(&self) -> u64 {
        self.slots - self.warmup
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub seed: u64,
    /// Slots that entered the averages.
    pub slots: u64,
    /// Mean end-of-slot queue divided by the arrival rate.
    pub mean_delay: f64,
    pub mean_power: f64,
    pub mean_queue: f64,
    pub se_delay: f64,
    pub se_power: f64,
    pub se_queue: f64,
    /// Packets dropped because the post-arrival queue exceeded K.
    pub overflow_count: u64,
}

struct Streams {
    arrivals: ChaCha8Rng,
    channel: ChaCha8Rng,
    coin: ChaCha8Rng,
    arrival_dist: WeightedIndex<f64>,
    channel_dist: WeightedIndex<f64>,
}

impl Streams {
    fn new(spec: &SystemSpec, seed: u64) -> Self {
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        Self {
            arrivals: stream(ARRIVAL_STREAM),
            channel: stream(CHANNEL_STREAM),
            coin: stream(COIN_STREAM),
            arrival_dist: WeightedIndex::new(spec.arrival().probs()).expect("validated arrival probabilities"),
            channel_dist: WeightedIndex::new(spec.channel().probs()).expect("validated channel probabilities"),
        }
    }

    /// One slot from end-of-slot queue `q`: returns (next q, channel, sent, overflow).
    fn step(&mut self, policy: &Policy, cap: usize, q: usize) -> (usize, usize, bool, usize) {
        let a = self.arrival_dist.sample(&mut self.arrivals);
        let w = self.channel_dist.sample(&mut self.channel);
        let coin: f64 = self.coin.random();
        let t = (q + a).min(cap);
        let sent = t > 0 && coin < policy.get(t, w);
        (t - sent as usize, w, sent, q + a - t)
    }
}

/// Standard error of the mean from batch means; NaN with fewer than two batches.
fn batch_se(batches: &[f64]) -> f64 {
    let n = batches.len() as f64;
    if batches.len() < 2 {
        return f64::NAN;
    }
    let mean = batches.iter().sum::<f64>() / n;
    let var = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Runs the queue from empty. Deterministic in `config.seed`.
pub fn simulate(spec: &SystemSpec, policy: &Policy, config: &SimConfig) -> Result<SimResult> {
    policy.validate_for(spec)?;
    let cap = spec.capacity();
    let powers = spec.channel().powers();
    let mut rng = Streams::new(spec, config.seed);
    let mut q = 0;
    for _ in 0..config.warmup {
        q = rng.step(policy, cap, q).0;
    }

    let n = config.measured();
    let batches = BATCHES.min(n);
    let mut queue_b = Vec::with_capacity(batches as usize);
    let mut power_b = Vec::with_capacity(batches as usize);
    let mut overflow = 0u64;
    for b in 0..batches {
        // spread the remainder over the first batches
        let len = n / batches + u64::from(b < n % batches);
        let (mut sq, mut sp) = (0.0, 0.0);
        for _ in 0..len {
            let (next, w, sent, drop) = rng.step(policy, cap, q);
            q = next;
            sq += q as f64;
            if sent {
                sp += powers[w];
            }
            overflow += drop as u64;
        }
        queue_b.push(sq / len as f64);
        power_b.push(sp / len as f64);
    }
    let mean_q = weighted_mean(&queue_b, n, batches);
    let mean_p = weighted_mean(&power_b, n, batches);
    let se_q = batch_se(&queue_b);
    let se_p = batch_se(&power_b);
    let abar = spec.arrival().mean();
    Ok(SimResult {
        seed: config.seed,
        slots: n,
        mean_delay: mean_q / abar,
        mean_power: mean_p,
        mean_queue: mean_q,
        se_delay: se_q / abar,
        se_power: se_p,
        se_queue: se_q,
        overflow_count: overflow,
    })
}

fn weighted_mean(batch_means: &[f64], n: u64, batches: u64) -> f64 {
    batch_means
        .iter()
        .enumerate()
        .map(|(b, m)| m * (n / batches + u64::from((b as u64) < n % batches)) as f64)
        .sum::<f64>()
        / n as f64
}

/// Empirical distribution of the next end-of-slot queue from state `k`.
pub fn estimate_transition(spec: &SystemSpec, policy: &Policy, k: usize, samples: u64, seed: u64) -> Result<Vec<f64>> {
    policy.validate_for(spec)?;
    let cap = spec.capacity();
    if k > cap {
        return Err(Error::InvalidValue {
            field: "state",
            reason: format!("state {k} exceeds capacity {cap}"),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidValue {
            field: "samples",
            reason: "must be at least 1".into(),
        });
    }
    let mut rng = Streams::new(spec, seed);
    let mut counts = vec![0u64; cap + 1];
    for _ in 0..samples {
        counts[rng.step(policy, cap, k).0] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / samples as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    fn bernoulli() -> SystemSpec {
        validate_spec(&[0.5, 0.5], &[1.0], &[1.0], 5).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0, 1).is_err());
        assert!(SimConfig::with_warmup(10, 1, 10).is_err());
        assert_eq!(SimConfig::new(1000, 1).unwrap().warmup, 10);
    }

    #[test]
    fn same_seed_same_result() {
        let spec = validate_spec(&[0.575, 0.3, 0.125], &[0.6, 0.4], &[10.14, 0.103], 20).unwrap();
        let f = Policy::from_fn(20, 2, |t, w| if w == 1 || t >= 3 { 1.0 } else { 0.3 });
        let c = SimConfig::new(20_000, 7).unwrap();
        assert_eq!(simulate(&spec, &f, &c).unwrap(), simulate(&spec, &f, &c).unwrap());
        let other = SimConfig::new(20_000, 8).unwrap();
        assert_ne!(simulate(&spec, &f, &c).unwrap(), simulate(&spec, &f, &other).unwrap());
    }

    #[test]
    fn silent_policy_fills_buffer() {
        let spec = bernoulli();
        let r = simulate(&spec, &Policy::silent(5, 1), &SimConfig::new(10_000, 3).unwrap()).unwrap();
        assert_eq!(r.mean_power, 0.0);
        assert!(r.mean_queue > 4.9);
        assert!(r.overflow_count > 0);
    }

    #[test]
    fn always_transmit_bernoulli() {
        let spec = bernoulli();
        let r = simulate(&spec, &Policy::always(5, 1), &SimConfig::new(100_000, 11).unwrap()).unwrap();
        assert_eq!(r.mean_delay, 0.0);
        assert!((r.mean_power - 0.5).abs() < 3.0 * r.se_power, "{r:?}");
        assert!((r.mean_delay - r.mean_queue / 0.5).abs() < 1e-15);
    }

    #[test]
    fn transition_estimate_rows_sum_to_one() {
        let spec = bernoulli();
        let row = estimate_transition(&spec, &Policy::always(5, 1), 3, 10_000, 5).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // from 3: stays at 3 on an arrival, drops to 2 otherwise
        assert!((row[2] - 0.5).abs() < 0.02 && (row[3] - 0.5).abs() < 0.02);
        assert!(estimate_transition(&spec, &Policy::always(5, 1), 6, 10, 5).is_err());
    }
}
