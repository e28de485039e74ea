//! Budgeted solves, power bounds and delay-power sweeps.

use rayon::prelude::*;

use crate::chain::{self, post_arrival_occupancy, Metrics};
use crate::error::{Error, Result};
use crate::lp::{self, LpSolution};
use crate::model::{Policy, SystemSpec};
use crate::policy::{self, StructureReport, ThresholdDescriptor, CLASSIFY_TOL, RESOLVE_TOL};

/// Budgets this close below `P_min` are still accepted.
pub const P_MIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBounds {
    /// Least power that carries the offered load without loss as K grows.
    pub p_min: f64,
    /// Power of the transmit-whenever-nonempty policy; delay is flat beyond it.
    pub p_max: f64,
}

/// Fluid lower bound: serve a fraction `ā` of slots using the cheapest
/// channel states first.
pub fn min_stable_power(spec: &SystemSpec) -> f64 {
    let eta = spec.channel().probs();
    let powers = spec.channel().powers();
    let mut need = spec.arrival().mean();
    let mut power = 0.0;
    for w in (0..eta.len()).rev() {
        let take = eta[w].min(need);
        power += take * powers[w];
        need -= take;
        if need <= 0.0 {
            break;
        }
    }
    power
}

pub fn max_power(spec: &SystemSpec) -> Result<f64> {
    let always = Policy::always(spec.capacity(), spec.channels());
    Ok(chain::analyze(spec, &always)?.metrics.power)
}

pub fn power_bounds(spec: &SystemSpec) -> Result<PowerBounds> {
    Ok(PowerBounds {
        p_min: min_stable_power(spec),
        p_max: max_power(spec)?,
    })
}

/// An optimal policy for one budget, with everything derived from it.
#[derive(Debug, Clone)]
pub struct OptimalPoint {
    pub p_aver: f64,
    pub solution: LpSolution,
    pub policy: Policy,
    /// Delay and power of the recovered policy under the LP's π.
    pub metrics: Metrics,
    pub report: StructureReport,
    pub warnings: Vec<String>,
}

impl OptimalPoint {
    pub fn descriptor(&self) -> Option<&ThresholdDescriptor> {
        self.report.descriptor.as_ref()
    }
}

/// Solves the budgeted problem end to end.
///
/// Budgets below `P_min` fail with [`Error::Infeasible`] unless
/// `allow_overflow` is set, in which case the finite-buffer optimum (which
/// drops packets) is returned.
pub fn optimize(spec: &SystemSpec, p_aver: f64, allow_overflow: bool) -> Result<OptimalPoint> {
    let problem = lp::build_lp(spec, p_aver)?;
    let p_min = min_stable_power(spec);
    if !allow_overflow && p_aver < p_min - P_MIN_SLACK {
        return Err(Error::Infeasible { p_aver, p_min });
    }
    let solution = lp::solve(&problem)?;
    let (policy, pi) = policy::recover_policy(spec, &solution)?;
    let metrics = chain::metrics(spec, &policy, &pi.pi);
    let report = policy::verify_structure(spec, &problem, &solution, &policy, &pi.pi);

    let mut warnings = Vec::new();
    let cap = spec.capacity();
    let rho = post_arrival_occupancy(spec, &pi.pi);
    if rho[cap] > RESOLVE_TOL && policy.row(cap).iter().any(|&f| f < 1.0 - CLASSIFY_TOL) {
        warnings.push(format!(
            "optimal policy transmits with probability < 1 at queue state K={cap} \
             (occupancy {:.3e}); a larger buffer may lower the delay",
            rho[cap]
        ));
    }
    if metrics.drop_rate > RESOLVE_TOL {
        warnings.push(format!("{:.3e} packets per slot overflow the buffer", metrics.drop_rate));
    }
    Ok(OptimalPoint {
        p_aver,
        solution,
        policy,
        metrics,
        report,
        warnings,
    })
}

/// `points` evenly spaced budgets from `p_min` to `p_max` inclusive.
pub fn grid(p_min: f64, p_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(p_min.is_finite() && p_max.is_finite()) || p_min >= p_max {
        return Err(Error::InvalidValue {
            field: "sweep.p_min",
            reason: format!("need p_min < p_max, got {p_min} and {p_max}"),
        });
    }
    if points < 2 {
        return Err(Error::InvalidValue {
            field: "sweep.points",
            reason: format!("need at least 2 points, got {points}"),
        });
    }
    let step = (p_max - p_min) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { p_max } else { p_min + step * i as f64 })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub p_aver: f64,
    pub outcome: Result<OptimalPoint>,
}

/// Solves every budget in parallel; the output keeps the order of `budgets`.
pub fn sweep(spec: &SystemSpec, budgets: &[f64], allow_overflow: bool) -> Vec<SweepPoint> {
    budgets
        .par_iter()
        .map(|&p| SweepPoint {
            p_aver: p,
            outcome: optimize(spec, p, allow_overflow),
        })
        .collect()
}

/// Shape defects of a sampled (p, D) curve, by index of the offending point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveReport {
    pub increasing: Vec<usize>,
    pub concave: Vec<usize>,
    pub unsaturated: Vec<usize>,
}

impl CurveReport {
    pub fn is_clean(&self) -> bool {
        self.increasing.is_empty() && self.concave.is_empty() && self.unsaturated.is_empty()
    }

    pub fn warnings(&self, points: &[(f64, f64)]) -> Vec<String> {
        let at = |v: &[usize]| v.iter().map(|&i| format!("{:.9}", points[i].0)).collect::<Vec<_>>().join(", ");
        let mut out = Vec::new();
        if !self.increasing.is_empty() {
            out.push(format!("delay increases at p_aver = {}", at(&self.increasing)));
        }
        if !self.concave.is_empty() {
            out.push(format!("curve is not convex at p_aver = {}", at(&self.concave)));
        }
        if !self.unsaturated.is_empty() {
            out.push(format!("delay still changes beyond P_max at p_aver = {}", at(&self.unsaturated)));
        }
        out
    }
}

/// Checks that D is non-increasing and convex in p, and flat from `p_max` on.
///
/// `points` must be sorted by budget.
pub fn check_curve(points: &[(f64, f64)], p_max: f64, tol: f64) -> CurveReport {
    let mut rep = CurveReport::default();
    for i in 1..points.len() {
        if points[i].1 > points[i - 1].1 + tol {
            rep.increasing.push(i);
        }
    }
    let slope = |i: usize| (points[i + 1].1 - points[i].1) / (points[i + 1].0 - points[i].0);
    for i in 1..points.len().saturating_sub(1) {
        // a drop in slope over a unit-free tolerance scaled by the step
        let h = points[i + 1].0 - points[i - 1].0;
        if slope(i) < slope(i - 1) - tol / h.max(f64::MIN_POSITIVE) {
            rep.concave.push(i);
        }
    }
    let sat = points.iter().position(|&(p, _)| p >= p_max);
    if let Some(first) = sat {
        let base = points[first].1;
        for (i, &(_, d)) in points.iter().enumerate().skip(first + 1) {
            if (d - base).abs() > tol {
                rep.unsaturated.push(i);
            }
        }
    }
    rep
}
