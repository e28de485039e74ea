#![allow(dead_code)]

use dpsched::model::{validate_spec, SystemSpec};
use dpsched::Policy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn two_state(k: usize) -> SystemSpec {
    validate_spec(&[0.575, 0.3, 0.125], &[0.6, 0.4], &[10.14, 0.103], k).unwrap()
}

pub fn four_state(k: usize) -> SystemSpec {
    validate_spec(&[0.575, 0.3, 0.125], &[0.135, 0.239, 0.232, 0.394], &[10.0, 5.0, 2.0, 1.0], k).unwrap()
}

/// Arrivals on {0, 1, 2} with mean at most 0.9.
pub fn random_arrival(r: &mut impl Rng) -> Vec<f64> {
    loop {
        let t2 = r.random_range(0.02..0.3);
        let t1 = r.random_range(0.05..0.6);
        let t0 = 1.0 - t1 - t2;
        if t0 > 0.05 && t1 + 2.0 * t2 < 0.9 {
            return vec![t0, t1, t2];
        }
    }
}

/// `w` channel states, powers strictly decreasing.
pub fn random_channel(r: &mut impl Rng, w: usize) -> (Vec<f64>, Vec<f64>) {
    let raw: Vec<f64> = (0..w).map(|_| r.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let eta = raw.iter().map(|x| x / total).collect();
    let mut powers: Vec<f64> = (0..w).map(|_| r.random_range(0.1..12.0)).collect();
    powers.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for i in 1..w {
        if powers[i] > powers[i - 1] * 0.9 {
            powers[i] = powers[i - 1] * 0.9;
        }
    }
    (eta, powers)
}

pub fn random_spec(r: &mut impl Rng, w: usize, k: usize) -> SystemSpec {
    let theta = random_arrival(r);
    let (eta, powers) = random_channel(r, w);
    validate_spec(&theta, &eta, &powers, k).unwrap()
}

/// Random transmission probabilities, with row 0 silent and the top row sending on some channel.
pub fn random_policy(r: &mut impl Rng, k: usize, w: usize) -> Policy {
    let mut f = Policy::from_fn(k, w, |t, _| if t == 0 { 0.0 } else { r.random_range(0.0..1.0) });
    f.set(k, w - 1, r.random_range(0.5..1.0));
    f
}
