//! The delay-minimisation linear program over `y_{k,w}`.
//!
//! `y_{k,w}` is the stationary probability that the queue holds `k` packets
//! after a transmission in channel state `w`, divided by `η_w`; equivalently
//! `y_{k,w} = ρ_{k+1} f_{k+1,w}` with `ρ_t` the post-arrival occupancy.
//! Cut balance expresses every `π_k` (`k < K`) as a linear function of `y`
//! through the G recursion. The top state `π_K` is one extra variable: with a
//! finite buffer, packets arriving at a full queue are dropped, and the
//! program carries that boundary exactly. When the top states are empty the
//! boundary terms vanish and the program reduces to the familiar
//! `min (Σ k η_w y_{k,w} - ξ)/ā²` over `Σ η_w y_{k,w} = ā`.

pub mod simplex;

use std::fmt::Write as _;

use crate::chain::post_arrival_weights;
use crate::error::{Error, Result};
use crate::linalg::{dot, Dense};
use crate::model::{ArrivalDist, SystemSpec};

/// Entries of `y` or `π` above `-CLAMP_TOL` are rounded up to zero after a solve.
pub const CLAMP_TOL: f64 = 1e-10;
/// Allowed gap between `π` rebuilt from `y` through G and the solved occupancies.
pub const PI_CHECK_TOL: f64 = 1e-9;

/// ξ = Σ_{m=1}^{M-1} m(m+1)/2 · θ_{m+1}.
pub fn xi_constant(arrival: &ArrivalDist) -> f64 {
    (1..arrival.max_burst())
        .map(|m| (m * (m + 1)) as f64 / 2.0 * arrival.prob(m + 1))
        .sum()
}

/// r_i = Σ_{m>i} θ_m for i = 0..M-1.
pub fn r_coeffs(arrival: &ArrivalDist) -> Result<Vec<f64>> {
    let r: Vec<f64> = (0..arrival.max_burst()).map(|i| arrival.tail(i + 1)).collect();
    if r.first().map_or(true, |&r0| r0 <= 0.0) {
        return Err(Error::DegenerateArrivals);
    }
    Ok(r)
}

/// Row `k` maps the LP variables to `π_k`.
///
/// Rows `0..K` follow `g_k = (l_k - Σ_{i=1}^{M-1} r_i g_{k-i}) / r_0`, where
/// `l_k` picks out `η·y_k`. Row `K` selects the top-state variable.
#[derive(Debug, Clone, PartialEq)]
pub struct GMatrix {
    pub g: Dense,
}

impl GMatrix {
    pub fn pi(&self, z: &[f64]) -> Vec<f64> {
        self.g.mul_vec(z)
    }
}

/// Variable layout: `y_{k,w}` at `k·W + w` (w 0-based), then `π_0..π_K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub capacity: usize,
    pub channels: usize,
}

impl Layout {
    pub fn y(&self, k: usize, w: usize) -> usize {
        k * self.channels + w
    }

    pub fn pi(&self, k: usize) -> usize {
        (self.capacity + 1) * self.channels + k
    }

    pub fn len(&self) -> usize {
        (self.capacity + 1) * (self.channels + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn name(&self, j: usize) -> String {
        let ys = (self.capacity + 1) * self.channels;
        if j >= ys {
            format!("pi_{}", j - ys)
        } else {
            format!("y_{}_{}", j / self.channels, j % self.channels + 1)
        }
    }
}

pub fn build_g(spec: &SystemSpec) -> Result<GMatrix> {
    let r = r_coeffs(spec.arrival())?;
    let cap = spec.capacity();
    let layout = Layout {
        capacity: cap,
        channels: spec.channels(),
    };
    let eta = spec.channel().probs();
    let mut g = Dense::zeros(cap + 1, layout.len());
    for k in 0..cap {
        let mut row = vec![0.0; layout.len()];
        for (w, &e) in eta.iter().enumerate() {
            row[layout.y(k, w)] = e;
        }
        for (i, &ri) in r.iter().enumerate().skip(1) {
            if i <= k {
                let prev = g.row(k - i).to_vec();
                for (v, p) in row.iter_mut().zip(prev) {
                    *v -= ri * p;
                }
            }
        }
        for (dst, v) in g.row_mut(k).iter_mut().zip(row) {
            *dst = v / r[0];
        }
    }
    g[(cap, layout.pi(cap))] = 1.0;
    Ok(GMatrix { g })
}

/// The program in the form `min cᵀz + offset`, `A_ub z <= b_ub`, `A_eq z = b_eq`, `z >= 0`.
///
/// The occupancies `π_k` stay in the program as variables tied to `y` by the
/// cut-balance rows that [`GMatrix`] solves in closed form. Substituting G into
/// the rows instead produces entries spanning many orders of magnitude, which
/// the tableau does not survive at moderate K.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub spec: SystemSpec,
    pub p_aver: f64,
    pub layout: Layout,
    pub g: GMatrix,
    /// Already scaled by 1/ā².
    pub objective: Vec<f64>,
    /// −ξ/ā².
    pub offset: f64,
    pub a_ub: Dense,
    pub b_ub: Vec<f64>,
    pub ub_names: Vec<String>,
    pub a_eq: Dense,
    pub b_eq: Vec<f64>,
    pub eq_names: Vec<String>,
}

/// Row index of the power constraint in `a_ub`.
pub const POWER_ROW: usize = 0;
/// Row index of the rate constraint in `a_eq`.
pub const RATE_ROW: usize = 0;

pub fn build_lp(spec: &SystemSpec, p_aver: f64) -> Result<LpProblem> {
    if !p_aver.is_finite() || p_aver < 0.0 {
        return Err(Error::InvalidValue {
            field: "solve.p_aver",
            reason: format!("power budget {p_aver} must be finite and non-negative"),
        });
    }
    let g = build_g(spec)?;
    let r = r_coeffs(spec.arrival())?;
    let cap = spec.capacity();
    let w_n = spec.channels();
    let lay = Layout {
        capacity: cap,
        channels: w_n,
    };
    let n = lay.len();
    let eta = spec.channel().probs();
    let powers = spec.channel().powers();
    let abar = spec.arrival().mean();

    let mut ub_rows = Vec::new();
    let mut b_ub = Vec::new();
    let mut ub_names = Vec::new();

    let mut power = vec![0.0; n];
    for k in 0..=cap {
        for w in 0..w_n {
            power[lay.y(k, w)] = eta[w] * powers[w];
        }
    }
    ub_rows.push(power);
    b_ub.push(p_aver);
    ub_names.push("power".to_string());

    // y_{k,w} <= ρ_{k+1}
    for k in 0..=cap {
        let weights = post_arrival_weights(spec, k + 1);
        for w in 0..w_n {
            let mut row = vec![0.0; n];
            row[lay.y(k, w)] = 1.0;
            for &(j, c) in &weights {
                row[lay.pi(j)] -= c;
            }
            ub_rows.push(row);
            b_ub.push(0.0);
            ub_names.push(format!("cap_{}_{}", k, w + 1));
        }
    }

    let mut eq_rows = Vec::new();
    let mut b_eq = Vec::new();
    let mut eq_names = Vec::new();

    // carried + dropped = ā
    let mut rate = vec![0.0; n];
    let mut objective = vec![0.0; n];
    for (i, &ri) in r.iter().enumerate() {
        for j in cap - i..=cap {
            rate[lay.pi(j)] += ri;
            objective[lay.pi(j)] += ri * (j + i) as f64;
        }
    }
    for k in 0..=cap {
        for w in 0..w_n {
            rate[lay.y(k, w)] += eta[w];
            objective[lay.y(k, w)] += k as f64 * eta[w];
        }
    }
    eq_rows.push(rate);
    b_eq.push(abar);
    eq_names.push("rate".to_string());

    // flow up across the cut k|k+1 equals flow down
    for k in 0..cap {
        let mut row = vec![0.0; n];
        for (i, &ri) in r.iter().enumerate() {
            if i <= k {
                row[lay.pi(k - i)] += ri;
            }
        }
        for (w, &e) in eta.iter().enumerate() {
            row[lay.y(k, w)] -= e;
        }
        eq_rows.push(row);
        b_eq.push(0.0);
        eq_names.push(format!("cut_{k}"));
    }

    let scale = 1.0 / (abar * abar);
    for v in &mut objective {
        *v *= scale;
    }

    Ok(LpProblem {
        spec: spec.clone(),
        p_aver,
        layout: lay,
        g,
        objective,
        offset: -xi_constant(spec.arrival()) * scale,
        a_ub: Dense::from_rows(&ub_rows),
        b_ub,
        ub_names,
        a_eq: Dense::from_rows(&eq_rows),
        b_eq,
        eq_names,
    })
}

impl LpProblem {
    /// Objective value at `z`, including the constant term.
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        dot(&self.objective, z) + self.offset
    }

    /// Largest violation of any constraint or bound at `z`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let ub = self
            .a_ub
            .mul_vec(z)
            .iter()
            .zip(&self.b_ub)
            .map(|(a, b)| (a - b).max(0.0))
            .fold(0.0, f64::max);
        let eq = self
            .a_eq
            .mul_vec(z)
            .iter()
            .zip(&self.b_eq)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let lb = z.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        ub.max(eq).max(lb)
    }

    /// CPLEX LP text, for cross-checking against an external solver.
    /// The constant objective term is recorded in a comment.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = (0..self.layout.len()).map(|j| self.layout.name(j)).collect();
        let expr = |row: &[f64]| -> String {
            let mut s = String::new();
            for (c, name) in row.iter().zip(&names) {
                if *c != 0.0 {
                    let _ = write!(s, " {} {} {}", if *c < 0.0 { '-' } else { '+' }, c.abs(), name);
                }
            }
            if s.is_empty() {
                let _ = write!(s, " 0 {}", names[0]);
            }
            s
        };
        let _ = writeln!(out, "\\ delay LP, K={} W={} p_aver={}", self.layout.capacity, self.layout.channels, self.p_aver);
        let _ = writeln!(out, "\\ objective constant {}", self.offset);
        let _ = writeln!(out, "Minimize\n obj:{}", expr(&self.objective));
        let _ = writeln!(out, "Subject To");
        for (i, name) in self.ub_names.iter().enumerate() {
            let _ = writeln!(out, " {name}:{} <= {}", expr(self.a_ub.row(i)), self.b_ub[i]);
        }
        for (i, name) in self.eq_names.iter().enumerate() {
            let _ = writeln!(out, " {name}:{} = {}", expr(self.a_eq.row(i)), self.b_eq[i]);
        }
        let _ = writeln!(out, "End");
        out
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// y[k][w], k = 0..=K.
    pub y: Vec<Vec<f64>>,
    /// π_0..π_K rebuilt from y through G (π_K read directly).
    pub pi: Vec<f64>,
    /// Optimal mean delay D*.
    pub delay: f64,
    /// Σ η_w P_w y_{k,w}, the power the solution spends.
    pub power: f64,
    /// Marginal delay per unit of extra budget (non-positive).
    pub power_dual: f64,
    pub iterations: usize,
    /// The raw variable vector.
    pub z: Vec<f64>,
}

pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    let out = simplex::minimize(
        &problem.objective,
        &problem.a_ub,
        &problem.b_ub,
        &problem.a_eq,
        &problem.b_eq,
    )?;
    let mut z = out.x;
    let viol = problem.max_violation(&z);
    if viol > simplex::FEAS_TOL {
        return Err(Error::InconsistentSolution(format!(
            "solution violates a constraint by {viol:e}"
        )));
    }
    for (j, v) in z.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -CLAMP_TOL {
                return Err(Error::InconsistentSolution(format!(
                    "{} = {v} is negative",
                    problem.layout.name(j)
                )));
            }
            *v = 0.0;
        }
    }
    let lay = problem.layout;
    let mut pi = problem.g.pi(&z);
    for (k, v) in pi.iter_mut().enumerate() {
        let direct = z[lay.pi(k)];
        if (*v - direct).abs() > PI_CHECK_TOL {
            return Err(Error::InconsistentSolution(format!(
                "pi_{k} from y is {v}, the program holds {direct}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let y: Vec<Vec<f64>> = (0..=lay.capacity)
        .map(|k| (0..lay.channels).map(|w| z[lay.y(k, w)]).collect())
        .collect();
    let power = dot(problem.a_ub.row(POWER_ROW), &z);
    Ok(LpSolution {
        y,
        pi,
        delay: problem.evaluate(&z),
        power,
        power_dual: out.duals_ub[POWER_ROW],
        iterations: out.iterations,
        z,
    })
}
