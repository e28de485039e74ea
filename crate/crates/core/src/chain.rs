//! The Markov chain of end-of-slot queue lengths induced by a policy, its
//! stationary distribution and the resulting delay and power.

use crate::error::{Error, Result};
use crate::linalg::{Dense, Lu};
use crate::model::{Policy, SystemSpec};

/// Column sums may drift from one by at most this much.
pub const COLUMN_SUM_TOL: f64 = 1e-9;

/// One-step transition probabilities. Entry `(l, k)` is `Pr{q[n] = l | q[n-1] = k}`,
/// so every column is a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    tau: Dense,
    max_burst: usize,
}

impl TransitionMatrix {
    /// Number of states, K + 1.
    pub fn states(&self) -> usize {
        self.tau.rows()
    }

    /// τ from state `from` to state `to`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.tau[(to, from)]
    }

    pub fn as_dense(&self) -> &Dense {
        &self.tau
    }

    /// Largest upward jump, M.
    pub fn max_burst(&self) -> usize {
        self.max_burst
    }

    /// True if every nonzero entry lies in the band `from-1 ..= from+M`.
    pub fn is_banded(&self) -> bool {
        let n = self.states();
        (0..n).all(|k| {
            (0..n).all(|l| {
                let inside = l + 1 >= k && l <= k + self.max_burst;
                inside || self.prob(k, l) == 0.0
            })
        })
    }

    /// π ↦ Λπ.
    pub fn step(&self, pi: &[f64]) -> Vec<f64> {
        self.tau.mul_vec(pi)
    }
}

/// λ_{k,m}: probability of moving from `k` to `k+m`, in closed form.
///
/// Policy entries beyond `K` count as zero. This ignores the capacity clip, so it
/// agrees with [`build_chain`] only while `k + M <= K`.
pub fn forward_prob(spec: &SystemSpec, policy: &Policy, k: usize, m: usize) -> f64 {
    let eta = spec.channel().probs();
    let theta = spec.arrival();
    let stay = 1.0 - policy.send_prob(k + m, eta);
    let lifted = policy.send_prob(k + m + 1, eta);
    theta.prob(m) * stay + theta.prob(m + 1) * lifted
}

/// μ_k: probability of moving from `k` down to `k-1`.
pub fn backward_prob(spec: &SystemSpec, policy: &Policy, k: usize) -> f64 {
    spec.arrival().prob(0) * policy.send_prob(k, spec.channel().probs())
}

/// Builds Λ from the queue recursion `q' = max(min(q + a, K) - s, 0)`.
///
/// Entries are accumulated, never obtained by subtracting from one.
pub fn build_chain(spec: &SystemSpec, policy: &Policy) -> Result<TransitionMatrix> {
    policy.validate_for(spec)?;
    let cap = spec.capacity();
    let n = cap + 1;
    let eta = spec.channel().probs();
    let theta = spec.arrival().probs();
    let send: Vec<f64> = (0..n).map(|t| policy.send_prob(t, eta)).collect();

    let mut tau = Dense::zeros(n, n);
    for k in 0..n {
        for (a, &th) in theta.iter().enumerate() {
            if th == 0.0 {
                continue;
            }
            let t = (k + a).min(cap);
            if t == 0 {
                tau[(0, k)] += th;
            } else {
                tau[(t - 1, k)] += th * send[t];
                tau[(t, k)] += th * (1.0 - send[t]);
            }
        }
    }
    for k in 0..n {
        let sum: f64 = (0..n).map(|l| tau[(l, k)]).sum();
        if (sum - 1.0).abs() > COLUMN_SUM_TOL {
            return Err(Error::NumericalInconsistency { state: k, sum });
        }
    }
    Ok(TransitionMatrix {
        tau,
        max_burst: spec.arrival().max_burst(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
}

impl StationaryDist {
    /// max_k |(Λπ - π)_k|
    pub fn residual(&self, matrix: &TransitionMatrix) -> f64 {
        matrix
            .step(&self.pi)
            .iter()
            .zip(&self.pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves `[(Λ - I)_{0..K}; 1ᵀ] π = [0; 1]` by LU with partial pivoting.
///
/// The system is nonsingular exactly when the chain has one closed class; otherwise
/// the closed classes are returned in the error.
pub fn stationary(matrix: &TransitionMatrix) -> Result<StationaryDist> {
    let n = matrix.states();
    let mut a = Dense::zeros(n, n);
    for i in 0..n - 1 {
        for j in 0..n {
            a[(i, j)] = matrix.tau[(i, j)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let lu = Lu::factor(a).ok_or_else(|| Error::SingularSystem {
        classes: closed_classes(matrix),
    })?;
    let mut pi = lu.solve(&b);
    for (k, p) in pi.iter_mut().enumerate() {
        if *p < 0.0 {
            if *p < -1e-10 {
                return Err(Error::InconsistentSolution(format!(
                    "stationary probability of state {k} is {p}"
                )));
            }
            *p = 0.0;
        }
    }
    Ok(StationaryDist { pi })
}

fn reachable_from(matrix: &TransitionMatrix, start: usize) -> Vec<bool> {
    let n = matrix.states();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(k) = stack.pop() {
        for l in 0..n {
            if !seen[l] && matrix.prob(k, l) > 0.0 {
                seen[l] = true;
                stack.push(l);
            }
        }
    }
    seen
}

/// Closed communicating classes, each sorted, ordered by smallest state.
pub fn closed_classes(matrix: &TransitionMatrix) -> Vec<Vec<usize>> {
    let n = matrix.states();
    let reach: Vec<Vec<bool>> = (0..n).map(|k| reachable_from(matrix, k)).collect();
    let mut assigned = vec![false; n];
    let mut classes = Vec::new();
    for k in 0..n {
        if assigned[k] {
            continue;
        }
        // k is recurrent iff everything it reaches can reach it back
        let closed = (0..n).all(|l| !reach[k][l] || reach[l][k]);
        if closed {
            let class: Vec<usize> = (0..n).filter(|&l| reach[k][l]).collect();
            for &l in &class {
                assigned[l] = true;
            }
            classes.push(class);
        }
    }
    classes
}

/// True if every state reaches every other.
pub fn is_irreducible(matrix: &TransitionMatrix) -> bool {
    let classes = closed_classes(matrix);
    classes.len() == 1 && classes[0].len() == matrix.states()
}

/// Weights `(j, c)` such that ρ_t = Σ c·π_j, where ρ_t is the stationary
/// probability that the post-arrival queue length `min(q + a, K)` equals `t`.
/// Empty for `t > K`.
pub fn post_arrival_weights(spec: &SystemSpec, t: usize) -> Vec<(usize, f64)> {
    let cap = spec.capacity();
    let arr = spec.arrival();
    if t > cap {
        return Vec::new();
    }
    if t < cap {
        (0..=arr.max_burst().min(t))
            .map(|m| (t - m, arr.prob(m)))
            .filter(|&(_, c)| c > 0.0)
            .collect()
    } else {
        (0..=cap)
            .map(|j| (j, arr.tail(cap - j)))
            .filter(|&(_, c)| c > 0.0)
            .collect()
    }
}

/// ρ_0..ρ_K for a stationary distribution.
pub fn post_arrival_occupancy(spec: &SystemSpec, pi: &[f64]) -> Vec<f64> {
    (0..=spec.capacity())
        .map(|t| post_arrival_weights(spec, t).iter().map(|&(j, c)| c * pi[j]).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean queueing delay D in slots.
    pub delay: f64,
    /// Mean power per slot.
    pub power: f64,
    /// Mean end-of-slot queue length Q.
    pub avg_queue: f64,
    /// Mean number of packets dropped per slot at the capacity limit.
    pub drop_rate: f64,
}

/// D = Σ k π_k / ā and P = Σ_k π_k Σ_w η_w P_w Σ_m θ_m f_{min(k+m, K), w}.
///
/// Arrivals that overflow are served from the clipped state K, as in the chain.
pub fn metrics(spec: &SystemSpec, policy: &Policy, pi: &[f64]) -> Metrics {
    let cap = spec.capacity();
    let eta = spec.channel().probs();
    let powers = spec.channel().powers();
    let theta = spec.arrival().probs();
    let cost: Vec<f64> = (0..=cap)
        .map(|t| (0..eta.len()).map(|w| eta[w] * powers[w] * policy.get(t, w)).sum())
        .collect();

    let mut avg_queue = 0.0;
    let mut power = 0.0;
    let mut drop_rate = 0.0;
    for (k, &p) in pi.iter().enumerate() {
        avg_queue += k as f64 * p;
        for (a, &th) in theta.iter().enumerate() {
            power += p * th * cost[(k + a).min(cap)];
            drop_rate += p * th * (k + a).saturating_sub(cap) as f64;
        }
    }
    Metrics {
        delay: avg_queue / spec.arrival().mean(),
        power,
        avg_queue,
        drop_rate,
    }
}

#[derive(Debug, Clone)]
pub struct ChainAnalysis {
    pub matrix: TransitionMatrix,
    pub stationary: StationaryDist,
    pub metrics: Metrics,
    pub irreducible: bool,
}

/// Chain, stationary distribution and metrics in one call.
pub fn analyze(spec: &SystemSpec, policy: &Policy) -> Result<ChainAnalysis> {
    let matrix = build_chain(spec, policy)?;
    let stationary = stationary(&matrix)?;
    let metrics = metrics(spec, policy, &stationary.pi);
    let irreducible = is_irreducible(&matrix);
    Ok(ChainAnalysis {
        matrix,
        stationary,
        metrics,
        irreducible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    fn two_state() -> SystemSpec {
        validate_spec(&[0.575, 0.3, 0.125], &[0.6, 0.4], &[10.14, 0.103], 20).unwrap()
    }

    fn bernoulli(k: usize) -> SystemSpec {
        validate_spec(&[0.5, 0.5], &[1.0], &[1.0], k).unwrap()
    }

    #[test]
    fn silent_forward_is_theta() {
        let spec = two_state();
        let f = Policy::silent(20, 2);
        for k in 0..15 {
            for m in 1..=2 {
                assert_eq!(forward_prob(&spec, &f, k, m), spec.arrival().prob(m));
            }
            assert_eq!(backward_prob(&spec, &f, k + 1), 0.0);
        }
    }

    #[test]
    fn rate_examples() {
        let spec = bernoulli(5);
        let f = Policy::always(5, 1);
        assert_eq!(forward_prob(&spec, &f, 0, 1), 0.0);
        assert_eq!(backward_prob(&spec, &f, 3), 0.5);

        let spec = two_state();
        assert!((backward_prob(&spec, &Policy::always(20, 2), 4) - 0.575).abs() < 1e-15);
        let mut f = Policy::silent(20, 2);
        f.set(1, 1, 1.0);
        assert!((forward_prob(&spec, &f, 0, 1) - 0.18).abs() < 1e-15);
    }

    #[test]
    fn silent_chain_absorbs_at_capacity() {
        let spec = two_state();
        let f = Policy::silent(20, 2);
        let m = build_chain(&spec, &f).unwrap();
        assert!(m.is_banded());
        assert_eq!(m.prob(3, 5), 0.125);
        let s = stationary(&m).unwrap();
        assert!((s.pi[20] - 1.0).abs() < 1e-12);
        let met = metrics(&spec, &f, &s.pi);
        assert_eq!(met.power, 0.0);
        assert!((met.delay - 20.0 / 0.55).abs() < 1e-9);
        assert!(!is_irreducible(&m));
    }

    #[test]
    fn always_transmit_bernoulli() {
        let spec = bernoulli(6);
        let f = Policy::always(6, 1);
        let an = analyze(&spec, &f).unwrap();
        assert!((an.stationary.pi[0] - 1.0).abs() < 1e-12);
        assert!(an.metrics.delay.abs() < 1e-12);
        assert!((an.metrics.power - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rates_agree_with_clipped_chain_away_from_top() {
        let spec = two_state();
        let f = Policy::from_fn(20, 2, |t, w| ((t * 7 + w * 3) % 5) as f64 / 4.0);
        let m = build_chain(&spec, &f).unwrap();
        for k in 0..=18 {
            for jump in 1..=2 {
                assert!((m.prob(k, k + jump) - forward_prob(&spec, &f, k, jump)).abs() < 1e-15);
            }
            if k > 0 {
                assert!((m.prob(k, k - 1) - backward_prob(&spec, &f, k)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_closed_classes_are_singular() {
        // M = 1: f_1 = 0 keeps state 1, f_2 = 1 blocks 1 -> 2, f_3 = 0 and f_4 = 1 trap 3.
        let spec = validate_spec(&[0.5, 0.5], &[1.0], &[1.0], 4).unwrap();
        let f = Policy::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        let m = build_chain(&spec, &f).unwrap();
        match stationary(&m) {
            Err(Error::SingularSystem { classes }) => assert_eq!(classes, vec![vec![1], vec![3]]),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn random_policies_give_stochastic_banded_chains(
                vals in prop::collection::vec(0.0f64..=1.0, 40),
            ) {
                let spec = two_state();
                let f = Policy::from_fn(20, 2, |t, w| vals[(t - 1) * 2 + w]);
                let m = build_chain(&spec, &f).unwrap();
                prop_assert!(m.is_banded());
                for k in 0..21 {
                    let s: f64 = (0..21).map(|l| m.prob(k, l)).sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                }
                if let Ok(s) = stationary(&m) {
                    prop_assert!(s.residual(&m) < 1e-10);
                    prop_assert!((s.pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                    let met = metrics(&spec, &f, &s.pi);
                    prop_assert!((met.delay - met.avg_queue / 0.55).abs() < 1e-15);
                }
            }
        }
    }
}
