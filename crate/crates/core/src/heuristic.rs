//! Two-interval threshold search: every policy that splits the queue at one
//! state and uses one channel threshold on each side is evaluated once, and a
//! budget is answered by table lookup.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::chain;
use crate::error::{Error, Result};
use crate::model::{Policy, SystemSpec};

pub const TABLE_HEADER: &str = "# dpsched policy table v1";
const COLUMNS: &str = "columns k_split w1 w2 delay power";
/// Bisection steps for the refinement probability.
const REFINE_STEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimplePolicyKey {
    /// Last queue state governed by `w1`.
    pub k_split: usize,
    /// Channel threshold on `1..=k_split`: send iff `w > w1`.
    pub w1: usize,
    /// Channel threshold on `k_split+1..=K`.
    pub w2: usize,
}

/// All keys in table order: `k_split`, then `w1`, then `w2`, each ascending.
pub fn keys(capacity: usize, channels: usize) -> Vec<SimplePolicyKey> {
    let mut out = Vec::with_capacity(capacity * channels * channels);
    for k_split in 1..=capacity {
        for w1 in 1..=channels {
            for w2 in 1..=channels {
                out.push(SimplePolicyKey { k_split, w1, w2 });
            }
        }
    }
    out
}

pub fn induced_policy(spec: &SystemSpec, key: SimplePolicyKey) -> Policy {
    Policy::from_fn(spec.capacity(), spec.channels(), |t, w| {
        let thr = if t <= key.k_split { key.w1 } else { key.w2 };
        if w + 1 > thr {
            1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub key: SimplePolicyKey,
    /// `f64::INFINITY` when the induced chain has no unique stationary law.
    pub delay: f64,
    pub power: f64,
}

/// Evaluated key space together with the system it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub capacity: usize,
    pub arrival: Vec<f64>,
    pub eta: Vec<f64>,
    pub powers: Vec<f64>,
    pub entries: Vec<TableEntry>,
}

fn evaluate(spec: &SystemSpec, key: SimplePolicyKey) -> TableEntry {
    match chain::analyze(spec, &induced_policy(spec, key)) {
        Ok(an) => TableEntry {
            key,
            delay: an.metrics.delay,
            power: an.metrics.power,
        },
        Err(_) => TableEntry {
            key,
            delay: f64::INFINITY,
            power: f64::INFINITY,
        },
    }
}

pub fn build_table(spec: &SystemSpec) -> PolicyTable {
    let entries = keys(spec.capacity(), spec.channels())
        .into_par_iter()
        .map(|key| evaluate(spec, key))
        .collect();
    PolicyTable {
        capacity: spec.capacity(),
        arrival: spec.arrival().probs().to_vec(),
        eta: spec.channel().probs().to_vec(),
        powers: spec.channel().powers().to_vec(),
        entries,
    }
}

impl PolicyTable {
    pub fn channels(&self) -> usize {
        self.eta.len()
    }

    /// True if the table was built for exactly this system.
    pub fn matches(&self, spec: &SystemSpec) -> bool {
        self.capacity == spec.capacity()
            && self.arrival == spec.arrival().probs()
            && self.eta == spec.channel().probs()
            && self.powers == spec.channel().powers()
    }

    pub fn get(&self, key: SimplePolicyKey) -> Option<&TableEntry> {
        let w = self.channels();
        if key.k_split == 0 || key.k_split > self.capacity || key.w1 == 0 || key.w1 > w || key.w2 == 0 || key.w2 > w {
            return None;
        }
        let idx = ((key.k_split - 1) * w + key.w1 - 1) * w + key.w2 - 1;
        self.entries.get(idx)
    }

    /// Minimum-delay entry with power within budget; ties go to lower power,
    /// then to the smaller key.
    pub fn lookup(&self, p_aver: f64) -> Result<TableEntry> {
        self.entries
            .iter()
            .filter(|e| e.power <= p_aver)
            .min_by(|a, b| {
                a.delay
                    .total_cmp(&b.delay)
                    .then(a.power.total_cmp(&b.power))
                    .then(a.key.cmp(&b.key))
            })
            .copied()
            .ok_or(Error::NoFeasibleEntry { p_aver })
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        writeln!(s, "{TABLE_HEADER}").unwrap();
        writeln!(s, "capacity {}", self.capacity).unwrap();
        writeln!(s, "arrival {}", join(&self.arrival)).unwrap();
        writeln!(s, "eta {}", join(&self.eta)).unwrap();
        writeln!(s, "powers {}", join(&self.powers)).unwrap();
        writeln!(s, "{COLUMNS}").unwrap();
        for e in &self.entries {
            // shortest round-trip representation keeps reloads bit-exact
            writeln!(s, "{} {} {} {} {}", e.key.k_split, e.key.w1, e.key.w2, e.delay, e.power).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::TableFormat { line, reason };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let mut next = |what: &str| {
            lines
                .by_ref()
                .find(|(_, l)| !l.trim().is_empty())
                .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
        };

        let (n, header) = next("header")?;
        if header.trim() != TABLE_HEADER {
            return Err(err(n, format!("expected header '{TABLE_HEADER}'")));
        }
        let field = |(n, l): (usize, &str), name: &str| -> Result<Vec<String>> {
            let mut parts = l.split_whitespace();
            if parts.next() != Some(name) {
                return Err(err(n, format!("expected '{name}' line")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |n: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| err(n, format!("'{s}' is not a number")))
        };

        let line = next("capacity")?;
        let cap_parts = field(line, "capacity")?;
        let capacity = match cap_parts.as_slice() {
            [c] => c.parse::<usize>().map_err(|_| err(line.0, format!("'{c}' is not a capacity")))?,
            _ => return Err(err(line.0, "capacity takes one value".into())),
        };
        let mut vector = |name: &str| -> Result<Vec<f64>> {
            let line = next(name)?;
            let vals = field(line, name)?
                .iter()
                .map(|s| num(line.0, s))
                .collect::<Result<Vec<_>>>()?;
            if vals.is_empty() || vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(err(line.0, format!("{name} needs finite non-negative values")));
            }
            Ok(vals)
        };
        let arrival = vector("arrival")?;
        let eta = vector("eta")?;
        let powers = vector("powers")?;
        if powers.len() != eta.len() {
            return Err(err(0, "eta and powers differ in length".into()));
        }
        let (n, cols) = next("columns")?;
        if cols.split_whitespace().collect::<Vec<_>>() != COLUMNS.split_whitespace().collect::<Vec<_>>() {
            return Err(err(n, format!("expected '{COLUMNS}'")));
        }

        let w = eta.len();
        let total = capacity
            .checked_mul(w)
            .and_then(|x| x.checked_mul(w))
            .ok_or_else(|| err(0, "table dimensions overflow".into()))?;
        let mut entries = Vec::new();
        for (n, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(err(n, format!("expected 5 columns, found {}", parts.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| err(n, format!("'{s}' is not an index")));
            let key = SimplePolicyKey {
                k_split: int(parts[0])?,
                w1: int(parts[1])?,
                w2: int(parts[2])?,
            };
            let i = entries.len();
            let expected = SimplePolicyKey {
                k_split: i / (w * w) + 1,
                w1: i / w % w + 1,
                w2: i % w + 1,
            };
            if i >= total || expected != key {
                return Err(err(
                    n,
                    format!(
                        "key ({}, {}, {}) out of order or out of range",
                        key.k_split, key.w1, key.w2
                    ),
                ));
            }
            let delay = num(n, parts[3])?;
            let power = num(n, parts[4])?;
            if delay.is_nan() || power.is_nan() || delay < 0.0 || power < 0.0 {
                return Err(err(n, "delay and power must be non-negative".into()));
            }
            entries.push(TableEntry { key, delay, power });
        }
        if entries.len() != total {
            return Err(err(0, format!("expected {total} rows, found {}", entries.len())));
        }
        Ok(PolicyTable {
            capacity,
            arrival,
            eta,
            powers,
            entries,
        })
    }
}

/// A table policy with one probabilistic cell added to use leftover budget.
#[derive(Debug, Clone)]
pub struct Refined {
    pub key: SimplePolicyKey,
    /// Transmission probability at `(k_split, w1)`.
    pub fraction: f64,
    pub policy: Policy,
    pub delay: f64,
    pub power: f64,
}

/// Looks up the best key for `p_aver`, then raises `f` at `(k_split, w1)`
/// (the first channel the lower interval keeps silent) by bisection until
/// the budget is exhausted. Falls back to the plain key whenever the added
/// probability does not lower the delay.
pub fn refine(spec: &SystemSpec, table: &PolicyTable, p_aver: f64) -> Result<Refined> {
    let base = table.lookup(p_aver)?;
    let key = base.key;
    let plain = Refined {
        key,
        fraction: 0.0,
        policy: induced_policy(spec, key),
        delay: base.delay,
        power: base.power,
    };
    let (t, w) = (key.k_split, key.w1 - 1);
    if plain.policy.get(t, w) == 1.0 {
        return Ok(plain);
    }
    let with = |f: f64| -> Option<(Policy, chain::Metrics)> {
        let mut p = plain.policy.clone();
        p.set(t, w, f);
        chain::analyze(spec, &p).ok().map(|an| (p, an.metrics))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if let Some((_, m)) = with(1.0) {
        if m.power <= p_aver {
            lo = 1.0;
        }
    }
    if lo < 1.0 {
        for _ in 0..REFINE_STEPS {
            let mid = 0.5 * (lo + hi);
            match with(mid) {
                Some((_, m)) if m.power <= p_aver => lo = mid,
                _ => hi = mid,
            }
        }
    }
    match with(lo) {
        Some((policy, m)) if lo > 0.0 && m.delay < plain.delay && m.power <= p_aver => Ok(Refined {
            key,
            fraction: lo,
            policy,
            delay: m.delay,
            power: m.power,
        }),
        _ => Ok(plain),
    }
}
