//! Brute-force ground truth for small systems: every deterministic policy,
//! its exact (P, D), and the lower convex hull of the resulting cloud.

use rayon::prelude::*;

use crate::chain::{self, closed_classes, TransitionMatrix};
use crate::error::{Error, Result};
use crate::linalg::{Dense, Lu};
use crate::model::{Policy, SystemSpec};

/// Enumeration of more than `2^MAX_BITS` policies is refused.
pub const MAX_BITS: usize = 24;
/// Orientation tests closer to zero than this count as collinear.
pub const HULL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restrict {
    /// Every 0/1 assignment of `f_{t,w}`, `t >= 1`.
    All,
    /// Monotone masks `f_{t,w} = 1 iff w > T_t` with `T_1 >= T_2 >= ... >= T_K`.
    ThresholdOnly,
}

#[derive(Debug, Clone)]
pub struct OraclePoint {
    pub policy: Policy,
    pub delay: f64,
    pub power: f64,
    /// False when some state is transient or the chain has several closed classes.
    pub ergodic: bool,
}

/// Long-run distribution of a chain started in `start`.
///
/// Mixes the stationary laws of the closed classes by their absorption
/// probabilities, so chains with several closed classes still get a value.
pub fn long_run_from(matrix: &TransitionMatrix, start: usize) -> Result<Vec<f64>> {
    let n = matrix.states();
    let classes = closed_classes(matrix);
    let mut class_of = vec![None; n];
    for (c, cl) in classes.iter().enumerate() {
        for &s in cl {
            class_of[s] = Some(c);
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&s| class_of[s].is_none()).collect();
    let weights: Vec<f64> = match class_of[start] {
        Some(c) => (0..classes.len()).map(|d| if d == c { 1.0 } else { 0.0 }).collect(),
        None => {
            // h_c(i) = Σ_j p(i, j) h_c(j) on transient i, h_c = 1 on class c
            let m = transient.len();
            let mut a = Dense::identity(m);
            for (r, &i) in transient.iter().enumerate() {
                for (s, &j) in transient.iter().enumerate() {
                    a[(r, s)] -= matrix.prob(i, j);
                }
            }
            let lu = Lu::factor(a).ok_or_else(|| Error::SingularSystem {
                classes: classes.clone(),
            })?;
            let row = transient.iter().position(|&i| i == start).expect("start is transient");
            classes
                .iter()
                .map(|cl| {
                    let b: Vec<f64> = transient
                        .iter()
                        .map(|&i| cl.iter().map(|&j| matrix.prob(i, j)).sum())
                        .collect();
                    lu.solve(&b)[row]
                })
                .collect()
        }
    };
    let mut pi = vec![0.0; n];
    for (cl, &h) in classes.iter().zip(&weights) {
        if h <= 0.0 {
            continue;
        }
        for (s, p) in cl.iter().zip(class_stationary(matrix, cl)?) {
            pi[*s] += h * p;
        }
    }
    Ok(pi)
}

fn class_stationary(matrix: &TransitionMatrix, class: &[usize]) -> Result<Vec<f64>> {
    let n = class.len();
    let mut a = Dense::zeros(n, n);
    for r in 0..n - 1 {
        for (s, &from) in class.iter().enumerate() {
            a[(r, s)] = matrix.prob(from, class[r]) - if r == s { 1.0 } else { 0.0 };
        }
    }
    for s in 0..n {
        a[(n - 1, s)] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let lu = Lu::factor(a).ok_or_else(|| Error::SingularSystem {
        classes: vec![class.to_vec()],
    })?;
    Ok(lu.solve(&b).into_iter().map(|p| p.max(0.0)).collect())
}

/// Exact (P, D) of one deterministic policy, started from an empty queue.
pub fn evaluate(spec: &SystemSpec, policy: Policy) -> Result<OraclePoint> {
    let matrix = chain::build_chain(spec, &policy)?;
    let ergodic = chain::is_irreducible(&matrix);
    let pi = match chain::stationary(&matrix) {
        Ok(s) => s.pi,
        Err(Error::SingularSystem { .. }) => long_run_from(&matrix, 0)?,
        Err(e) => return Err(e),
    };
    let m = chain::metrics(spec, &policy, &pi);
    Ok(OraclePoint {
        policy,
        delay: m.delay,
        power: m.power,
        ergodic,
    })
}

/// Number of policies `enumerate` would visit.
pub fn count(spec: &SystemSpec, restrict: Restrict) -> Result<u128> {
    let k = spec.capacity();
    let w = spec.channels();
    match restrict {
        Restrict::All => {
            let bits = k * w;
            if bits > MAX_BITS {
                return Err(Error::TooLarge { bits });
            }
            Ok(1u128 << bits)
        }
        // non-increasing sequences of length K over 0..=W: C(K + W, W)
        Restrict::ThresholdOnly => {
            let mut c: u128 = 1;
            for i in 1..=w as u128 {
                c = c * (k as u128 + i) / i;
                if c > 1u128 << MAX_BITS {
                    return Err(Error::TooLarge {
                        bits: 128 - c.leading_zeros() as usize,
                    });
                }
            }
            Ok(c)
        }
    }
}

fn threshold_sequences(k: usize, w: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(k: usize, hi: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for t in 0..=hi {
            cur.push(t);
            rec(k, t, cur, out);
            cur.pop();
        }
    }
    rec(k, w, &mut cur, &mut out);
    out
}

/// Evaluates every deterministic policy of the chosen family, in parallel.
///
/// `All` orders policies by the bitmask `bit (t-1)·W + w = f_{t,w}`;
/// `ThresholdOnly` orders them lexicographically by `(T_1, ..., T_K)`.
pub fn enumerate(spec: &SystemSpec, restrict: Restrict) -> Result<Vec<OraclePoint>> {
    count(spec, restrict)?;
    let k = spec.capacity();
    let w = spec.channels();
    let policies: Vec<Policy> = match restrict {
        Restrict::All => (0u64..1 << (k * w))
            .map(|code| Policy::from_fn(k, w, |t, c| ((code >> ((t - 1) * w + c)) & 1) as f64))
            .collect(),
        Restrict::ThresholdOnly => threshold_sequences(k, w)
            .into_iter()
            .map(|th| Policy::from_fn(k, w, |t, c| if c + 1 > th[t - 1] { 1.0 } else { 0.0 }))
            .collect(),
    };
    policies.into_par_iter().map(|p| evaluate(spec, p)).collect()
}

/// Lower-left convex hull of a (P, D) cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Hull {
    /// Sorted by P; D strictly decreasing.
    pub vertices: Vec<(f64, f64)>,
}

impl Hull {
    /// Least delay reachable by mixing policies within budget `p`; `None`
    /// below the cheapest vertex.
    pub fn eval(&self, p: f64) -> Option<f64> {
        let v = &self.vertices;
        let first = v.first()?;
        if p < first.0 {
            return None;
        }
        let i = v.partition_point(|&(x, _)| x <= p);
        if i == v.len() {
            return Some(v[v.len() - 1].1);
        }
        let (a, b) = (v[i - 1], v[i]);
        Some(a.1 + (b.1 - a.1) * (p - a.0) / (b.0 - a.0))
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Non-finite points are ignored. Returns an empty hull if nothing is left.
pub fn lower_hull(points: &[(f64, f64)]) -> Hull {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(p, d)| p.is_finite() && d.is_finite())
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // lowest D per P
    pts.dedup_by(|b, a| b.0 == a.0);

    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        // once the minimum delay is reached, more power buys nothing
        if let Some(last) = hull.last() {
            if p.1 >= last.1 {
                continue;
            }
        }
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= HULL_EPS {
            hull.pop();
        }
        hull.push(p);
    }
    Hull { vertices: hull }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    #[test]
    fn hull_basics() {
        assert_eq!(lower_hull(&[(1.0, 2.0)]).vertices, vec![(1.0, 2.0)]);
        assert_eq!(lower_hull(&[(1.0, 2.0), (1.0, 3.0)]).vertices, vec![(1.0, 2.0)]);
        let h = lower_hull(&[(0.0, 2.0), (1.0, 1.6), (2.0, 0.0), (3.0, 0.5), (1.0, 0.5)]);
        assert_eq!(h.vertices, vec![(0.0, 2.0), (1.0, 0.5), (2.0, 0.0)]);
        assert_eq!(h.eval(-0.1), None);
        assert!((h.eval(0.5).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(h.eval(10.0), Some(0.0));
    }

    #[test]
    fn collinear_middle_point_dropped() {
        let h = lower_hull(&[(0.0, 2.0), (1.0, 1.0), (2.0, 0.0)]);
        assert_eq!(h.vertices, vec![(0.0, 2.0), (2.0, 0.0)]);
    }

    #[test]
    fn counts() {
        let spec = validate_spec(&[0.6, 0.3, 0.1], &[0.5, 0.5], &[2.0, 1.0], 4).unwrap();
        assert_eq!(count(&spec, Restrict::All).unwrap(), 256);
        assert_eq!(enumerate(&spec, Restrict::All).unwrap().len(), 256);
        // C(6, 2)
        assert_eq!(count(&spec, Restrict::ThresholdOnly).unwrap(), 15);
        assert_eq!(enumerate(&spec, Restrict::ThresholdOnly).unwrap().len(), 15);
        let big = spec.with_capacity(13).unwrap();
        assert_eq!(count(&big, Restrict::All), Err(Error::TooLarge { bits: 26 }));
    }

    #[test]
    fn two_closed_classes_mix_by_absorption() {
        // never leaves 1 once there, and 3 is closed as well
        let spec = validate_spec(&[0.5, 0.5], &[1.0], &[1.0], 4).unwrap();
        let policy = Policy::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        let m = chain::build_chain(&spec, &policy).unwrap();
        assert!(chain::stationary(&m).is_err());
        let pi = long_run_from(&m, 0).unwrap();
        // from 0 the queue first reaches state 1 and stays there
        assert!((pi[1] - 1.0).abs() < 1e-12, "{pi:?}");
        let pi3 = long_run_from(&m, 3).unwrap();
        assert!((pi3[3] - 1.0).abs() < 1e-12, "{pi3:?}");
        let pt = evaluate(&spec, policy).unwrap();
        assert!(!pt.ergodic);
        assert!((pt.delay - 2.0).abs() < 1e-12);
    }

    #[test]
    fn never_transmit_is_absorbed_at_capacity() {
        let spec = validate_spec(&[0.6, 0.3, 0.1], &[0.5, 0.5], &[2.0, 1.0], 4).unwrap();
        let pt = evaluate(&spec, Policy::silent(4, 2)).unwrap();
        assert!((pt.delay - 4.0 / 0.5).abs() < 1e-12);
        assert_eq!(pt.power, 0.0);
        assert!(!pt.ergodic);
    }
}
