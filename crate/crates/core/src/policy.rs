//! Recovering the optimal policy from an LP solution and checking its
//! dual-threshold shape.
//!
//! Thresholds use strict comparisons throughout: `f_{t,w} = 1` iff `w > T_t`
//! and iff `t > I_w`, so `T_t = 0` means "send in every channel state" and
//! `I_w = 0` means "send whenever the post-arrival queue is non-empty".

use std::fmt;

use crate::chain::{self, post_arrival_occupancy};
use crate::error::{Cell, Error, Result};
use crate::lp::{LpProblem, LpSolution};
use crate::model::{Policy, SystemSpec};

/// States whose post-arrival occupancy is at most this are never consulted.
pub const REACH_TOL: f64 = 1e-10;
/// Policy entries within this of 0 or 1 are treated as deterministic.
pub const CLASSIFY_TOL: f64 = 1e-6;
/// Slack for recovered probabilities slightly outside `[0, 1]`.
pub const RECOVER_TOL: f64 = 1e-8;
/// Absolute slack on `y` against its bound `ρ_t`.
pub const RECOVER_ABS_TOL: f64 = 1e-8;
/// A solved program pins `y` only to the simplex feasibility tolerance, so
/// states whose occupancy is at or below this say nothing about the policy.
pub const RESOLVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalPoint {
    pub queue: usize,
    /// 1-based channel state.
    pub channel: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdDescriptor {
    /// T_1..T_K, each in 0..=W; index 0 of the vector is state 1.
    pub channel_thresholds: Vec<usize>,
    /// I_1..I_W, each in 0..=K.
    pub queue_thresholds: Vec<usize>,
    pub fractional: Option<FractionalPoint>,
    /// Post-arrival states that the chain actually visits.
    pub reachable: Vec<bool>,
}

impl ThresholdDescriptor {
    /// T_t for post-arrival state `t >= 1`.
    pub fn channel_threshold(&self, t: usize) -> usize {
        self.channel_thresholds[t - 1]
    }

    /// I_w for 1-based channel `w`.
    pub fn queue_threshold(&self, w: usize) -> usize {
        self.queue_thresholds[w - 1]
    }

    /// Largest queue threshold over channels that are ever used.
    pub fn max_queue_threshold(&self) -> usize {
        self.queue_thresholds.iter().copied().max().unwrap_or(0)
    }

    /// Compact summary like `T=[2,2,1,0] I=[3,0] frac=(3,1,0.24)`.
    pub fn summary(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "T=[{}] I=[{}]",
            join(&self.channel_thresholds),
            join(&self.queue_thresholds)
        );
        if let Some(fp) = self.fractional {
            s.push_str(&format!(" frac=({},{},{:.9})", fp.queue, fp.channel, fp.value));
        }
        s
    }
}

impl fmt::Display for ThresholdDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "channel thresholds T_t (send iff w > T_t):")?;
        for (i, t) in self.channel_thresholds.iter().enumerate() {
            let mark = if self.reachable[i + 1] { "" } else { "  (unreachable)" };
            writeln!(f, "  t={:<4} T={t}{mark}", i + 1)?;
        }
        writeln!(f, "queue thresholds I_w (send iff t > I_w):")?;
        for (i, q) in self.queue_thresholds.iter().enumerate() {
            writeln!(f, "  w={:<4} I={q}", i + 1)?;
        }
        match self.fractional {
            Some(fp) => writeln!(
                f,
                "fractional point: t={} w={} f={:.9}",
                fp.queue, fp.channel, fp.value
            ),
            None => writeln!(f, "fractional point: none"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Zero,
    One,
    Frac,
}

fn classify(v: f64) -> Kind {
    if v < CLASSIFY_TOL {
        Kind::Zero
    } else if v > 1.0 - CLASSIFY_TOL {
        Kind::One
    } else {
        Kind::Frac
    }
}

/// Inverts `y_{t-1,w} = ρ_t f_{t,w}`.
///
/// States with `ρ_t <= RESOLVE_TOL` are treated as unreached; they inherit the
/// channel threshold of the nearest reachable smaller state so the policy
/// stays a threshold policy everywhere.
pub fn recover_policy(spec: &SystemSpec, solution: &LpSolution) -> Result<(Policy, chain::StationaryDist)> {
    let cap = spec.capacity();
    let w_n = spec.channels();
    let rho = post_arrival_occupancy(spec, &solution.pi);
    let mut policy = Policy::silent(cap, w_n);
    let mut last_t: Option<usize> = None;
    for t in 1..=cap {
        if rho[t] > RESOLVE_TOL {
            for w in 0..w_n {
                let y = solution.y[t - 1][w];
                let mut f = y / rho[t];
                // tiny occupancies magnify rounding in the ratio, so also accept small absolute excess
                let excess = (y - rho[t]).max(-y);
                if !(-RECOVER_TOL..=1.0 + RECOVER_TOL).contains(&f) && excess > RECOVER_ABS_TOL {
                    return Err(Error::InconsistentSolution(format!(
                        "f[{t}][{}] = {f} from y = {} and rho = {}",
                        w + 1,
                        solution.y[t - 1][w],
                        rho[t]
                    )));
                }
                f = f.clamp(0.0, 1.0);
                policy.set(t, w, f);
            }
            last_t = Some(t);
        } else {
            // continue the last reachable threshold; transmit-all if none yet
            let thr = last_t.map_or(0, |s| row_threshold(policy.row(s)));
            for w in 0..w_n {
                policy.set(t, w, if w + 1 > thr { 1.0 } else { 0.0 });
            }
        }
    }
    Ok((
        policy,
        chain::StationaryDist {
            pi: solution.pi.clone(),
        },
    ))
}

// number of leading channels that are not fully on
fn row_threshold(row: &[f64]) -> usize {
    row.iter().rposition(|&v| classify(v) != Kind::One).map_or(0, |i| i + 1)
}

struct Scan {
    channel_thresholds: Vec<usize>,
    queue_thresholds: Vec<usize>,
    reachable: Vec<bool>,
    fracs: Vec<Cell>,
    bad_rows: Vec<Cell>,
    bad_cols: Vec<Cell>,
    t_increase: Vec<Cell>,
    mismatch: Vec<Cell>,
}

fn scan(spec: &SystemSpec, policy: &Policy, pi: &[f64], reach_tol: f64) -> Scan {
    let cap = spec.capacity();
    let w_n = spec.channels();
    let rho = post_arrival_occupancy(spec, pi);
    let reachable: Vec<bool> = (0..=cap).map(|t| t > 0 && rho[t] > reach_tol).collect();
    let visited: Vec<usize> = (1..=cap).filter(|&t| reachable[t]).collect();
    let rank = |k: Kind| match k {
        Kind::Zero => 0,
        Kind::Frac => 1,
        Kind::One => 2,
    };

    let mut fracs = Vec::new();
    let mut bad_rows = Vec::new();
    for &t in &visited {
        let kinds: Vec<Kind> = policy.row(t).iter().map(|&v| classify(v)).collect();
        for (w, k) in kinds.iter().enumerate() {
            if *k == Kind::Frac {
                fracs.push((t, w + 1));
            }
        }
        // a row must read 0..0 [frac] 1..1
        for w in 1..w_n {
            let both_frac = kinds[w] == Kind::Frac && kinds[w - 1] == Kind::Frac;
            if rank(kinds[w]) < rank(kinds[w - 1]) || both_frac {
                bad_rows.push((t, w + 1));
            }
        }
    }
    let channel_thresholds: Vec<usize> = (1..=cap).map(|t| row_threshold(policy.row(t))).collect();

    let mut bad_cols = Vec::new();
    let mut queue_thresholds = Vec::with_capacity(w_n);
    for w in 0..w_n {
        let mut last_off = 0;
        let mut seen_on = false;
        for &t in &visited {
            if classify(policy.get(t, w)) == Kind::One {
                seen_on = true;
            } else {
                if seen_on {
                    bad_cols.push((t, w + 1));
                }
                last_off = t;
            }
        }
        queue_thresholds.push(last_off);
    }

    let mut t_increase = Vec::new();
    for pair in visited.windows(2) {
        if channel_thresholds[pair[1] - 1] > channel_thresholds[pair[0] - 1] {
            t_increase.push((pair[1], channel_thresholds[pair[1] - 1]));
        }
    }

    let mut mismatch = Vec::new();
    for &t in &visited {
        for w in 0..w_n {
            let kind = classify(policy.get(t, w));
            if kind == Kind::Frac {
                continue;
            }
            let by_t = w + 1 > channel_thresholds[t - 1];
            let by_i = t > queue_thresholds[w];
            if by_t != by_i || by_t != (kind == Kind::One) {
                mismatch.push((t, w + 1));
            }
        }
    }

    Scan {
        channel_thresholds,
        queue_thresholds,
        reachable,
        fracs,
        bad_rows,
        bad_cols,
        t_increase,
        mismatch,
    }
}

/// Reads `T_t`, `I_w` and the fractional point off a policy.
///
/// Only post-arrival states visited under `pi` are checked. Fails with the
/// offending cells when rows are not monotone in the channel, columns not
/// monotone in the queue, more than one entry is fractional, `T_t` increases,
/// or the two threshold descriptions disagree.
pub fn extract_thresholds(spec: &SystemSpec, policy: &Policy, pi: &[f64]) -> Result<ThresholdDescriptor> {
    describe(scan(spec, policy, pi, REACH_TOL), policy)
}

fn describe(s: Scan, policy: &Policy) -> Result<ThresholdDescriptor> {
    let fail = |reason: &str, cells: &[Cell]| Error::StructureViolation {
        reason: reason.to_string(),
        cells: cells.to_vec(),
    };
    if !s.bad_rows.is_empty() {
        return Err(fail("transmission is not monotone in the channel state", &s.bad_rows));
    }
    if s.fracs.len() > 1 {
        return Err(fail(&format!("{} fractional entries, at most one allowed", s.fracs.len()), &s.fracs));
    }
    if !s.bad_cols.is_empty() {
        return Err(fail("transmission is not monotone in the queue length", &s.bad_cols));
    }
    if !s.t_increase.is_empty() {
        return Err(fail("channel thresholds T_t increase with the queue length", &s.t_increase));
    }
    if !s.mismatch.is_empty() {
        return Err(fail("channel and queue thresholds describe different regions", &s.mismatch));
    }
    let fractional = s.fracs.first().map(|&(t, w)| FractionalPoint {
        queue: t,
        channel: w,
        value: policy.get(t, w - 1),
    });
    Ok(ThresholdDescriptor {
        channel_thresholds: s.channel_thresholds,
        queue_thresholds: s.queue_thresholds,
        fractional,
        reachable: s.reachable,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub witnesses: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub checks: Vec<Check>,
    pub descriptor: Option<ThresholdDescriptor>,
}

impl StructureReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{:<5} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            if !c.witnesses.is_empty() {
                write!(f, " at {:?}", c.witnesses)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub const CHECK_CHANNEL_ORDER: &str = "y non-decreasing in channel";
pub const CHECK_SINGLE_FRACTION: &str = "at most one fractional entry";
pub const CHECK_T_MONOTONE: &str = "T_t non-increasing";
pub const CHECK_MASKS_AGREE: &str = "T and I masks agree";
pub const CHECK_ROUND_TRIP: &str = "chain reproduces LP";

/// Checks every structural property of a solved instance and reports each one.
pub fn verify_structure(
    spec: &SystemSpec,
    problem: &LpProblem,
    solution: &LpSolution,
    policy: &Policy,
    pi: &[f64],
) -> StructureReport {
    let mut checks = Vec::new();

    let mut order = Vec::new();
    for (k, row) in solution.y.iter().enumerate() {
        for w in 1..row.len() {
            if row[w - 1] > row[w] + 1e-9 {
                order.push((k, w));
            }
        }
    }
    checks.push(Check {
        name: CHECK_CHANNEL_ORDER,
        passed: order.is_empty(),
        detail: "y_{k,w1} <= y_{k,w2} + 1e-9 for w1 < w2".into(),
        witnesses: order,
    });

    let sc = scan(spec, policy, pi, RESOLVE_TOL);
    checks.push(Check {
        name: CHECK_SINGLE_FRACTION,
        passed: sc.fracs.len() <= 1,
        detail: format!("{} fractional entries", sc.fracs.len()),
        witnesses: if sc.fracs.len() > 1 { sc.fracs.clone() } else { Vec::new() },
    });
    checks.push(Check {
        name: CHECK_T_MONOTONE,
        passed: sc.t_increase.is_empty(),
        detail: "T_1 >= T_2 >= ... on reachable states".into(),
        witnesses: sc.t_increase.clone(),
    });
    let mask_cells: Vec<Cell> = sc
        .bad_rows
        .iter()
        .chain(&sc.bad_cols)
        .chain(&sc.mismatch)
        .copied()
        .collect();
    checks.push(Check {
        name: CHECK_MASKS_AGREE,
        passed: mask_cells.is_empty(),
        detail: "w > T_t iff t > I_w on reachable states".into(),
        witnesses: mask_cells,
    });
    let descriptor = describe(sc, policy);

    let round = chain::analyze(spec, policy).map(|an| an.metrics);
    let (ok, detail) = match round {
        Ok(m) => {
            let gap = (m.delay - solution.delay).abs();
            let over = m.power - problem.p_aver;
            (
                gap <= 1e-7 && over <= 1e-7,
                format!("|D_chain - D_lp| = {gap:.3e}, P_chain - budget = {over:.3e}"),
            )
        }
        Err(e) => (false, e.to_string()),
    };
    checks.push(Check {
        name: CHECK_ROUND_TRIP,
        passed: ok,
        detail,
        witnesses: Vec::new(),
    });

    StructureReport {
        checks,
        descriptor: descriptor.ok(),
    }
}
