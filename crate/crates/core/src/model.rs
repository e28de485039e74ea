//! Problem-instance data: arrival law, channel law, buffer capacity and
//! scheduling policies.
//!
//! All types validate on construction and are immutable afterwards.

use crate::error::{Error, Result};

/// Probability vectors whose sum is off by less than this are renormalized.
pub const PROB_SUM_TOL: f64 = 1e-12;

fn check_probs(field: &'static str, probs: &[f64]) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(Error::InvalidValue {
            field,
            reason: "must not be empty".into(),
        });
    }
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidValue {
                field,
                reason: format!("entry {i} = {p} is not a probability"),
            });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::NonStochastic { field, sum });
    }
    Ok(probs.iter().map(|p| p / sum).collect())
}

/// Distribution of the number of packets arriving in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalDist {
    probs: Vec<f64>,
    mean: f64,
}

impl ArrivalDist {
    /// `probs[m]` is the probability that `m` packets arrive in a slot.
    /// Trailing zero entries are dropped so that `max_burst` is the true support bound.
    pub fn new(probs: &[f64]) -> Result<Self> {
        let mut probs = check_probs("arrival.probs", probs)?;
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        let mean = mean_of(&probs);
        if mean <= 0.0 {
            return Err(Error::DegenerateArrivals);
        }
        Ok(Self { probs, mean })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// θ_m, zero outside the support.
    pub fn prob(&self, m: usize) -> f64 {
        self.probs.get(m).copied().unwrap_or(0.0)
    }

    /// Largest burst size M.
    pub fn max_burst(&self) -> usize {
        self.probs.len() - 1
    }

    /// Mean arrival rate ā (packets per slot).
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Pr{a >= n}.
    pub fn tail(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        self.probs.iter().skip(n).sum()
    }
}

pub(crate) fn mean_of(probs: &[f64]) -> f64 {
    probs.iter().enumerate().map(|(m, p)| m as f64 * p).sum()
}

/// Block-fading channel: state probabilities and the power needed to deliver
/// one packet in each state. State 1 is the worst channel, state W the best.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    probs: Vec<f64>,
    powers: Vec<f64>,
}

impl ChannelModel {
    pub fn new(probs: &[f64], powers: &[f64]) -> Result<Self> {
        let probs = check_probs("channel.probs", probs)?;
        if powers.len() != probs.len() {
            return Err(Error::InvalidValue {
                field: "channel.powers",
                reason: format!(
                    "has {} entries but channel.probs has {}",
                    powers.len(),
                    probs.len()
                ),
            });
        }
        for (i, &p) in powers.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 || (i > 0 && p >= powers[i - 1]) {
                return Err(Error::NonDecreasingPower {
                    index: i + 1,
                    value: p,
                });
            }
        }
        Ok(Self {
            probs,
            powers: powers.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }
}

/// A validated system: arrivals, channel and buffer capacity K.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    arrival: ArrivalDist,
    channel: ChannelModel,
    capacity: usize,
}

impl SystemSpec {
    pub fn new(arrival: ArrivalDist, channel: ChannelModel, capacity: usize) -> Result<Self> {
        if arrival.mean() >= 1.0 {
            return Err(Error::UnstableArrival {
                mean: arrival.mean(),
            });
        }
        if capacity == 0 || capacity < arrival.max_burst() {
            return Err(Error::CapacityTooSmall {
                capacity,
                burst: arrival.max_burst().max(1),
            });
        }
        Ok(Self {
            arrival,
            channel,
            capacity,
        })
    }

    /// Builds and validates a spec from raw vectors.
    pub fn from_parts(
        arrival_probs: &[f64],
        channel_probs: &[f64],
        powers: &[f64],
        capacity: usize,
    ) -> Result<Self> {
        let arrival = ArrivalDist::new(arrival_probs)?;
        let channel = ChannelModel::new(channel_probs, powers)?;
        Self::new(arrival, channel, capacity)
    }

    pub fn arrival(&self) -> &ArrivalDist {
        &self.arrival
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    /// Buffer capacity K.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of channel states W.
    pub fn channels(&self) -> usize {
        self.channel.len()
    }

    /// Same arrival and channel law with a different buffer capacity.
    pub fn with_capacity(&self, capacity: usize) -> Result<Self> {
        Self::new(self.arrival.clone(), self.channel.clone(), capacity)
    }
}

/// Validates raw user input, reporting the first violated invariant.
pub fn validate_spec(
    arrival_probs: &[f64],
    channel_probs: &[f64],
    powers: &[f64],
    capacity: usize,
) -> Result<SystemSpec> {
    SystemSpec::from_parts(arrival_probs, channel_probs, powers, capacity)
}

/// Transmission probabilities `f[t][w]` indexed by post-arrival queue state
/// `t = 0..=K` and channel state (0-based column `w` stands for channel `w+1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    capacity: usize,
    channels: usize,
    f: Vec<f64>,
}

impl Policy {
    /// Never transmit.
    pub fn silent(capacity: usize, channels: usize) -> Self {
        Self {
            capacity,
            channels,
            f: vec![0.0; (capacity + 1) * channels],
        }
    }

    /// Transmit whenever the post-arrival queue is non-empty.
    pub fn always(capacity: usize, channels: usize) -> Self {
        Self::from_fn(capacity, channels, |_, _| 1.0)
    }

    /// Builds a policy from `f(t, w)` with `w` 0-based; row `t = 0` is forced to zero.
    pub fn from_fn(capacity: usize, channels: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut p = Self::silent(capacity, channels);
        for t in 1..=capacity {
            for w in 0..channels {
                p.f[t * channels + w] = f(t, w);
            }
        }
        p
    }

    /// Builds a policy from rows `f[t][w]`, validating shape and range.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        if rows.len() < 2 || channels == 0 || rows.iter().any(|r| r.len() != channels) {
            return Err(Error::MalformedPolicy("rows must form a (K+1) x W grid".into()));
        }
        let policy = Self {
            capacity: rows.len() - 1,
            channels,
            f: rows.concat(),
        };
        policy.check_values()?;
        Ok(policy)
    }

    fn check_values(&self) -> Result<()> {
        for t in 0..=self.capacity {
            for w in 0..self.channels {
                let v = self.get(t, w);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::MalformedPolicy(format!(
                        "f[{t}][{}] = {v} outside [0, 1]",
                        w + 1
                    )));
                }
                if t == 0 && v != 0.0 {
                    return Err(Error::MalformedPolicy(format!(
                        "f[0][{}] = {v}; nothing can be sent from an empty queue",
                        w + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks shape against `spec` and value ranges.
    pub fn validate_for(&self, spec: &SystemSpec) -> Result<()> {
        if self.capacity != spec.capacity() || self.channels != spec.channels() {
            return Err(Error::MalformedPolicy(format!(
                "policy is {}x{}, system needs {}x{}",
                self.capacity + 1,
                self.channels,
                spec.capacity() + 1,
                spec.channels()
            )));
        }
        self.check_values()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// f[t][w]; zero for `t > K` (no such post-arrival state).
    pub fn get(&self, t: usize, w: usize) -> f64 {
        if t > self.capacity {
            0.0
        } else {
            self.f[t * self.channels + w]
        }
    }

    /// Sets f[t][w]. Row 0 stays zero.
    pub fn set(&mut self, t: usize, w: usize, value: f64) {
        assert!(t <= self.capacity && w < self.channels);
        if t > 0 {
            self.f[t * self.channels + w] = value;
        }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.f[t * self.channels..(t + 1) * self.channels]
    }

    /// Σ_w η_w f[t][w]: probability of transmitting given post-arrival state t.
    pub fn send_prob(&self, t: usize, eta: &[f64]) -> f64 {
        if t > self.capacity {
            return 0.0;
        }
        self.row(t).iter().zip(eta).map(|(f, e)| f * e).sum::<f64>().min(1.0)
    }

    /// Renders the grid as text, one queue state per line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("   t |");
        for w in 1..=self.channels {
            out.push_str(&format!(" w={w:<6}"));
        }
        out.push('\n');
        for t in 0..=self.capacity {
            out.push_str(&format!("{t:>4} |"));
            for &v in self.row(t) {
                if v == 0.0 || v == 1.0 {
                    out.push_str(&format!(" {:<8}", v as u8));
                } else {
                    out.push_str(&format!(" {v:<8.4}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_spec_accepted() {
        let spec = validate_spec(&[0.575, 0.3, 0.125], &[0.6, 0.4], &[10.14, 0.103], 20).unwrap();
        assert!((spec.arrival().mean() - 0.55).abs() < 1e-15);
        assert_eq!(spec.arrival().max_burst(), 2);
        assert_eq!(spec.channels(), 2);
    }

    #[test]
    fn bernoulli_single_channel_accepted() {
        let spec = validate_spec(&[0.5, 0.5], &[1.0], &[1.0], 5).unwrap();
        assert_eq!(spec.arrival().mean(), 0.5);
    }

    #[test]
    fn increasing_power_rejected() {
        let err = validate_spec(&[0.2, 0.8], &[0.5, 0.5], &[1.0, 2.0], 5).unwrap_err();
        assert!(matches!(err, Error::NonDecreasingPower { index: 2, .. }));
        let err = validate_spec(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 1.0], 5).unwrap_err();
        assert!(matches!(err, Error::NonDecreasingPower { .. }));
    }

    #[test]
    fn small_rounding_is_renormalized() {
        let a = ArrivalDist::new(&[0.5, 0.5 + 5e-13]).unwrap();
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let err = ArrivalDist::new(&[0.5, 0.5 + 1e-9]).unwrap_err();
        assert!(matches!(err, Error::NonStochastic { field: "arrival.probs", .. }));
    }

    #[test]
    fn unstable_and_small_capacity_rejected() {
        let err = validate_spec(&[0.0, 1.0], &[1.0], &[1.0], 5).unwrap_err();
        assert!(matches!(err, Error::UnstableArrival { .. }));
        let err = validate_spec(&[0.5, 0.25, 0.25], &[1.0], &[1.0], 1).unwrap_err();
        assert!(matches!(err, Error::CapacityTooSmall { capacity: 1, burst: 2 }));
        let err = validate_spec(&[1.0], &[1.0], &[1.0], 3).unwrap_err();
        assert_eq!(err, Error::DegenerateArrivals);
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let a = ArrivalDist::new(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(a.max_burst(), 1);
        assert_eq!(a.prob(3), 0.0);
        assert_eq!(a.tail(1), 0.5);
    }

    #[test]
    fn policy_row_zero_forced() {
        let p = Policy::from_fn(3, 2, |_, _| 1.0);
        assert_eq!(p.row(0), &[0.0, 0.0]);
        assert!(Policy::from_rows(&[vec![1.0], vec![1.0]]).is_err());
        assert!(Policy::from_rows(&[vec![0.0], vec![1.5]]).is_err());
        let spec = validate_spec(&[0.5, 0.5], &[1.0], &[1.0], 3).unwrap();
        assert!(Policy::silent(2, 1).validate_for(&spec).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect()
            })
        }

        fn valid_parts() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
            (2usize..5, 1usize..4).prop_flat_map(|(n_arr, w)| {
                (
                    simplex(n_arr).prop_filter("stable", |t| mean_of(t) < 0.95),
                    simplex(w),
                    prop::collection::vec(0.1f64..2.0, w),
                    0usize..6,
                )
                    .prop_map(move |(theta, eta, steps, extra)| {
                        // strictly decreasing powers built from positive steps
                        let mut powers: Vec<f64> = Vec::new();
                        let mut acc = 0.05;
                        for s in steps.iter().rev() {
                            acc += s;
                            powers.push(acc);
                        }
                        powers.reverse();
                        let k = theta.len() - 1 + extra;
                        (theta, eta, powers, k.max(1))
                    })
            })
        }

        proptest! {
            #[test]
            fn mean_is_index_dot_theta(theta in simplex(5)) {
                let a = ArrivalDist::new(&theta).unwrap();
                let dot: f64 = theta.iter().enumerate().map(|(i, t)| i as f64 * t).sum();
                prop_assert!((a.mean() - dot).abs() < 1e-12);
            }

            #[test]
            fn valid_specs_accepted((theta, eta, powers, k) in valid_parts()) {
                prop_assert!(validate_spec(&theta, &eta, &powers, k).is_ok());
            }

            #[test]
            fn single_violations_rejected_with_matching_error(
                (theta, eta, powers, k) in valid_parts(),
                which in 0usize..4,
                bump in 1e-6f64..0.1,
            ) {
                let err = match which {
                    0 => {
                        let mut t = theta.clone();
                        t[0] -= bump.min(t[0] * 0.5);
                        validate_spec(&t, &eta, &powers, k).unwrap_err()
                    }
                    1 => {
                        let mut p = powers.clone();
                        p.push(p[p.len() - 1] + bump);
                        let mut e: Vec<f64> = eta.iter().map(|x| x * 0.5).collect();
                        e.push(0.5);
                        validate_spec(&theta, &e, &p, k).unwrap_err()
                    }
                    2 => {
                        let t = vec![0.0, 1.0 - bump.min(0.05), bump.min(0.05)];
                        validate_spec(&t, &eta, &powers, k.max(2)).unwrap_err()
                    }
                    _ => {
                        let m = theta.len() - 1;
                        validate_spec(&theta, &eta, &powers, m - 1).unwrap_err()
                    }
                };
                let ok = match which {
                    0 => matches!(err, Error::NonStochastic { .. }),
                    1 => matches!(err, Error::NonDecreasingPower { .. }),
                    2 => matches!(err, Error::UnstableArrival { .. }),
                    _ => matches!(err, Error::CapacityTooSmall { .. }),
                };
                prop_assert!(ok, "unexpected error {:?}", err);
            }
        }
    }
}
