//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

mod common;

use std::time::Instant;

use common::{two_state, four_state, random_spec, rng};
use dpsched::chain::{self, post_arrival_occupancy};
use dpsched::heuristic::build_table;
use dpsched::oracle::{self, lower_hull, Hull, Restrict};
use dpsched::policy::{
    CHECK_CHANNEL_ORDER, CHECK_MASKS_AGREE, CHECK_SINGLE_FRACTION, CHECK_T_MONOTONE, REACH_TOL,
};
use dpsched::sim::{simulate, SimConfig};
use dpsched::tradeoff::{self, check_curve, grid, power_bounds, OptimalPoint};
use dpsched::{lp, SystemSpec};
use rand::Rng;

const HULL_TOL: f64 = 1e-6;
const IDENTITY_TOL: f64 = 1e-8;
const DOMINANCE_TOL: f64 = 1e-9;
const CURVE_TOL: f64 = 1e-8;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Small random instances with their enumerated hulls.
fn small_instances() -> Vec<(SystemSpec, Hull)> {
    let mut r = rng(2024);
    (0..5)
        .map(|i| {
            let spec = random_spec(&mut r, 2, 2 + i % 3);
            let pts: Vec<(f64, f64)> = oracle::enumerate(&spec, Restrict::All)
                .unwrap()
                .iter()
                .map(|p| (p.power, p.delay))
                .collect();
            (spec, lower_hull(&pts))
        })
        .collect()
}

fn lp_delay(spec: &SystemSpec, p: f64) -> Result<f64, String> {
    lp::build_lp(spec, p)
        .and_then(|prob| lp::solve(&prob))
        .map(|s| s.delay)
        .map_err(|e| e.to_string())
}

fn lp_vs_hull(small: &[(SystemSpec, Hull)]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for (spec, _) in small {
        // fresh enumeration so its cost is part of the timing
        let pts: Vec<(f64, f64)> = oracle::enumerate(spec, Restrict::All)
            .unwrap()
            .iter()
            .map(|p| (p.power, p.delay))
            .collect();
        let hull = lower_hull(&pts);
        let top = tradeoff::max_power(spec).unwrap() * 1.1;
        for i in 0..20 {
            let p = top * i as f64 / 19.0;
            match (lp_delay(spec, p), hull.eval(p)) {
                (Ok(d), Some(h)) => worst = worst.max((d - h).abs()),
                (d, h) => errors.push(format!("p = {p}: lp {d:?} hull {h:?}")),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        errors.is_empty() && worst <= HULL_TOL && secs < 10.0,
        format!(
            "{} instances x 20 budgets, max |D_lp - D_hull| = {worst:.2e} (tol {HULL_TOL:.0e}), {secs:.2} s (limit 10 s){}",
            small.len(),
            if errors.is_empty() { String::new() } else { format!(", errors {errors:?}") }
        ),
    )
}

fn simulation_agreement(solved: &mut Vec<(SystemSpec, OptimalPoint)>) -> Outcome {
    let start = Instant::now();
    // closer to P_min the optimum parks mass at K and drops packets, a region
    // a run started from an empty queue does not visit in 10^6 slots
    let spec = two_state(60);
    let b = power_bounds(&spec).unwrap();
    let fracs = [0.05, 0.25, 0.5, 0.75, 1.0];
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for (i, f) in fracs.iter().enumerate() {
        let p = b.p_min + f * (b.p_max - b.p_min);
        let pt = match tradeoff::optimize(&spec, p, false) {
            Ok(pt) => pt,
            Err(e) => {
                errors.push(format!("p = {p}: {e}"));
                continue;
            }
        };
        let top = post_arrival_occupancy(&spec, &pt.solution.pi)[60];
        if top > REACH_TOL {
            errors.push(format!("p = {p}: top-state occupancy {top:.2e}"));
        }
        let exact = chain::analyze(&spec, &pt.policy).unwrap().metrics;
        let s = simulate(&spec, &pt.policy, &SimConfig::new(1_000_000, 100 + i as u64).unwrap()).unwrap();
        worst = worst
            .max((s.mean_delay - exact.delay).abs() / s.se_delay)
            .max((s.mean_power - exact.power).abs() / s.se_power);
        solved.push((spec.clone(), pt));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        errors.is_empty() && worst <= 3.0 && secs < 30.0,
        format!(
            "two-state system K=60, 5 budgets from P_min + 5% of range ({:.4}) to P_max ({:.4}), 10^6 slots each, worst deviation {worst:.2} sigma (limit 3), {secs:.2} s (limit 30 s){}",
            b.p_min + fracs[0] * (b.p_max - b.p_min),
            b.p_max,
            if errors.is_empty() { String::new() } else { format!(", errors {errors:?}") }
        ),
    )
}

fn structure_suite(solved: &mut Vec<(SystemSpec, OptimalPoint)>) -> Outcome {
    let mut r = rng(77);
    let mut accepted = 0;
    let mut skipped = 0;
    let mut failures = Vec::new();
    let mut draws = 0;
    while accepted < 60 && draws < 300 {
        draws += 1;
        let w = r.random_range(2..=3);
        let base = random_spec(&mut r, w, 20);
        let b = power_bounds(&base).unwrap();
        let p = b.p_min + r.random_range(0.15..1.05) * (b.p_max - b.p_min);
        // grow the buffer until the top state is effectively never visited
        let found = [10, 20, 30, 40, 60].iter().find_map(|&k| {
            let spec = base.with_capacity(k).unwrap();
            let pt = tradeoff::optimize(&spec, p, false).ok()?;
            let rho = post_arrival_occupancy(&spec, &pt.solution.pi);
            (rho[k] <= REACH_TOL).then_some((spec, pt))
        });
        let Some((spec, pt)) = found else {
            skipped += 1;
            continue;
        };
        accepted += 1;
        for name in [CHECK_SINGLE_FRACTION, CHECK_T_MONOTONE, CHECK_CHANNEL_ORDER, CHECK_MASKS_AGREE] {
            let c = pt.report.check(name).unwrap();
            if !c.passed {
                failures.push(format!("draw {draws} ({name}): {}", c.detail));
            }
        }
        solved.push((spec, pt));
    }
    outcome(
        accepted >= 50 && failures.is_empty(),
        format!(
            "{accepted} solved instances ({skipped} draws needed K > 60), 4 checks each, {} failures{}",
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(": {failures:?}") }
        ),
    )
}

fn curve_properties(small: &[(SystemSpec, Hull)], solved: &mut Vec<(SystemSpec, OptimalPoint)>) -> Outcome {
    let spec = two_state(40);
    let b = power_bounds(&spec).unwrap();
    let budgets = grid(b.p_min, b.p_max * 1.1, 50).unwrap();
    let mut curve = Vec::new();
    let mut errors = Vec::new();
    for s in tradeoff::sweep(&spec, &budgets, false) {
        match s.outcome {
            Ok(pt) => {
                curve.push((s.p_aver, pt.solution.delay));
                solved.push((spec.clone(), pt));
            }
            Err(e) => errors.push(format!("p = {}: {e}", s.p_aver)),
        }
    }
    let rep = check_curve(&curve, b.p_max, CURVE_TOL);

    // breakpoints: the LP must hit every hull vertex and be linear between them
    let mut worst_vertex: f64 = 0.0;
    let mut worst_mid: f64 = 0.0;
    let mut worst_slope: f64 = 0.0;
    let mut vertices = 0;
    for (spec, hull) in small {
        let v = &hull.vertices;
        vertices += v.len();
        for &(p, d) in v {
            match lp_delay(spec, p) {
                Ok(x) => worst_vertex = worst_vertex.max((x - d).abs()),
                Err(e) => errors.push(e),
            }
        }
        for pair in v.windows(2) {
            let ((p0, d0), (p1, d1)) = (pair[0], pair[1]);
            let mid = 0.5 * (p0 + p1);
            match lp::build_lp(spec, mid).and_then(|prob| lp::solve(&prob)) {
                Ok(s) => {
                    worst_mid = worst_mid.max((s.delay - 0.5 * (d0 + d1)).abs());
                    let slope = (d1 - d0) / (p1 - p0);
                    worst_slope = worst_slope.max((s.power_dual - slope).abs() / slope.abs().max(1.0));
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
    }
    let linear = worst_vertex <= HULL_TOL && worst_mid <= HULL_TOL && worst_slope <= HULL_TOL;
    let mut detail = format!(
        "two-state system, K=40, sweep of {} points: increasing at {:?}, non-convex at {:?}, unsaturated at {:?}; \
         {vertices} hull vertices on {} small instances: vertex err {worst_vertex:.2e}, midpoint err {worst_mid:.2e}, \
         slope err {worst_slope:.2e} (tol {HULL_TOL:.0e})",
        curve.len(),
        rep.increasing,
        rep.concave,
        rep.unsaturated,
        small.len()
    );
    if !errors.is_empty() {
        detail.push_str(&format!(", errors {errors:?}"));
    }
    outcome(errors.is_empty() && rep.is_clean() && linear, detail)
}

fn metric_identity(solved: &[(SystemSpec, OptimalPoint)]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for (spec, pt) in solved {
        match chain::analyze(spec, &pt.policy) {
            Ok(a) => worst = worst.max((a.metrics.delay - pt.solution.delay).abs()),
            Err(e) => errors.push(format!("p = {}: {e}", pt.p_aver)),
        }
    }
    outcome(
        errors.is_empty() && worst <= IDENTITY_TOL,
        format!(
            "{} solved instances, max |D(chain of recovered policy) - D(LP objective)| = {worst:.2e} (tol {IDENTITY_TOL:.0e}){}",
            solved.len(),
            if errors.is_empty() { String::new() } else { format!(", errors {errors:?}") }
        ),
    )
}

/// Heuristic against LP on one buffer size.
///
/// Budgets are a uniform grid plus the power of every table entry: the
/// heuristic curve only changes there, so those are the only places it can
/// meet a strictly convex LP curve.
fn heuristic_vs_lp(k: usize) -> (bool, String) {
    let spec = four_state(k);
    let table = build_table(&spec);
    let top = tradeoff::max_power(&spec).unwrap() * 1.1;
    let mut budgets: Vec<f64> = (0..60).map(|i| top * i as f64 / 59.0).collect();
    budgets.extend(table.entries.iter().map(|e| e.power).filter(|p| p.is_finite()));
    budgets.sort_by(f64::total_cmp);
    budgets.dedup();

    let mut below = Vec::new();
    let mut rises = Vec::new();
    let mut touches = Vec::new();
    let mut errors = Vec::new();
    let mut flats = 0;
    let mut prev: Option<f64> = None;
    for &p in &budgets {
        let (h, d) = match (table.lookup(p), lp_delay(&spec, p)) {
            (Ok(e), Ok(d)) => (e.delay, d),
            (h, d) => {
                errors.push(format!("p = {p}: table {:?} lp {d:?}", h.map(|e| e.delay)));
                continue;
            }
        };
        if h < d - DOMINANCE_TOL {
            below.push(p);
        }
        if (h - d).abs() <= DOMINANCE_TOL {
            touches.push(format!("{p:.4}"));
        }
        if let Some(q) = prev {
            if h > q {
                rises.push(p);
            } else if h == q {
                flats += 1;
            }
        }
        prev = Some(h);
    }
    let passed = errors.is_empty() && below.is_empty() && rises.is_empty() && flats > 0 && !touches.is_empty();
    let detail = format!(
        "K={k}: {} entries, {} budgets, below LP at {below:?}, rises at {rises:?}, {flats} flat steps, meets LP at p = [{}]{}",
        table.entries.len(),
        budgets.len(),
        touches.join(", "),
        if errors.is_empty() { String::new() } else { format!(", errors {errors:?}") }
    );
    (passed, detail)
}

fn heuristic_dominance() -> Outcome {
    let runs: Vec<(bool, String)> = [10, 20].into_iter().map(heuristic_vs_lp).collect();
    outcome(
        runs.iter().all(|r| r.0),
        format!(
            "four-state system, tol {DOMINANCE_TOL:.0e}; {}",
            runs.iter().map(|r| r.1.as_str()).collect::<Vec<_>>().join("; ")
        ),
    )
}

fn main() {
    let small = small_instances();
    let mut solved = Vec::new();
    let results = [
        ("1 LP equals enumerated hull", lp_vs_hull(&small)),
        ("2 simulation matches analysis", simulation_agreement(&mut solved)),
        ("3 threshold structure", structure_suite(&mut solved)),
        ("4 tradeoff curve shape", curve_properties(&small, &mut solved)),
        ("5 delay identity", metric_identity(&solved)),
        ("6 heuristic dominance", heuristic_dominance()),
    ];
    let mut all = true;
    for (name, o) in &results {
        all &= o.passed;
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let covered = results.iter().all(|(_, o)| o.passed);
    println!(
        "{} criterion 7 figure values replaced by criteria 1-6: {}",
        if covered { "PASS" } else { "FAIL" },
        if covered { "all replacement criteria pass" } else { "a replacement criterion failed" }
    );
    if !all {
        std::process::exit(1);
    }
}
