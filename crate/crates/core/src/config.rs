//! TOML run configuration.
//!
//! ```toml
//! [arrival]
//! probs = [0.575, 0.3, 0.125]   # theta_0..theta_M
//!
//! [channel]
//! probs = [0.6, 0.4]            # eta_1..eta_W
//! powers = [10.14, 0.103]       # P_1 > ... > P_W > 0
//!
//! [buffer]
//! capacity = 20
//!
//! [solve]                       # optional
//! p_aver = 2.0
//! allow_overflow = false        # optional, default false
//!
//! [sweep]                       # optional; p_min / p_max default to the power bounds
//! p_min = 1.6
//! p_max = 4.0
//! points = 50
//!
//! [sim]                         # optional
//! slots = 1000000
//! seed = 1
//! warmup = 10000                # optional, default 1% of slots
//! ```
//!
//! Unknown sections and keys are rejected. Every error names the offending field.

use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::SystemSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSection {
    pub p_aver: f64,
    pub allow_overflow: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSection {
    pub slots: u64,
    pub seed: u64,
    pub warmup: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub arrival: Vec<f64>,
    pub eta: Vec<f64>,
    pub powers: Vec<f64>,
    pub capacity: usize,
    pub solve: Option<SolveSection>,
    pub sweep: Option<SweepSection>,
    pub sim: Option<SimSection>,
}

fn cfg_err(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {reason}"))
}

struct Section<'a> {
    name: &'a str,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.table.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(cfg_err(&self.field(k), "unknown key")),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.get(key)
    }

    fn require(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| cfg_err(&self.field(key), "missing"))
    }

    fn float_of(&self, key: &str, v: &Value) -> Result<f64> {
        let x = match v {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            other => return Err(cfg_err(&self.field(key), format!("expected a number, found {}", other.type_str()))),
        };
        if !x.is_finite() {
            return Err(cfg_err(&self.field(key), format!("{x} is not finite")));
        }
        Ok(x)
    }

    fn float(&self, key: &str) -> Result<f64> {
        self.float_of(key, self.require(key)?)
    }

    fn opt_float(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| self.float_of(key, v)).transpose()
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        match self.require(key)? {
            Value::Array(items) if !items.is_empty() => items.iter().map(|v| self.float_of(key, v)).collect(),
            Value::Array(_) => Err(cfg_err(&self.field(key), "empty list")),
            other => Err(cfg_err(&self.field(key), format!("expected a list, found {}", other.type_str()))),
        }
    }

    fn uint_of(&self, key: &str, v: &Value) -> Result<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            Value::Integer(i) => Err(cfg_err(&self.field(key), format!("{i} is negative"))),
            other => Err(cfg_err(&self.field(key), format!("expected an integer, found {}", other.type_str()))),
        }
    }

    fn uint(&self, key: &str) -> Result<u64> {
        self.uint_of(key, self.require(key)?)
    }

    fn opt_uint(&self, key: &str) -> Result<Option<u64>> {
        self.get(key).map(|v| self.uint_of(key, v)).transpose()
    }

    fn opt_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(cfg_err(&self.field(key), format!("expected true or false, found {}", other.type_str()))),
        }
    }
}

fn section<'a>(root: &'a Table, name: &'a str) -> Result<Option<Section<'a>>> {
    match root.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(Section { name, table: t })),
        Some(other) => Err(cfg_err(name, format!("expected a table, found {}", other.type_str()))),
    }
}

fn required<'a>(root: &'a Table, name: &'a str) -> Result<Section<'a>> {
    section(root, name)?.ok_or_else(|| cfg_err(name, "missing section"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim_end().to_string()))?;
        const SECTIONS: &[&str] = &["arrival", "channel", "buffer", "solve", "sweep", "sim"];
        if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(cfg_err(k, "unknown section"));
        }

        let arrival = required(&root, "arrival")?;
        arrival.check_keys(&["probs"])?;
        let channel = required(&root, "channel")?;
        channel.check_keys(&["probs", "powers"])?;
        let buffer = required(&root, "buffer")?;
        buffer.check_keys(&["capacity"])?;
        let capacity = usize::try_from(buffer.uint("capacity")?)
            .map_err(|_| cfg_err("buffer.capacity", "too large"))?;

        let solve = match section(&root, "solve")? {
            Some(s) => {
                s.check_keys(&["p_aver", "allow_overflow"])?;
                let p_aver = s.float("p_aver")?;
                if p_aver < 0.0 {
                    return Err(cfg_err("solve.p_aver", format!("{p_aver} is negative")));
                }
                Some(SolveSection {
                    p_aver,
                    allow_overflow: s.opt_bool("allow_overflow")?.unwrap_or(false),
                })
            }
            None => None,
        };
        let sweep = match section(&root, "sweep")? {
            Some(s) => {
                s.check_keys(&["p_min", "p_max", "points"])?;
                let sw = SweepSection {
                    p_min: s.opt_float("p_min")?,
                    p_max: s.opt_float("p_max")?,
                    points: usize::try_from(s.uint("points")?).map_err(|_| cfg_err("sweep.points", "too large"))?,
                };
                if sw.points < 2 {
                    return Err(cfg_err("sweep.points", format!("need at least 2, got {}", sw.points)));
                }
                if let (Some(lo), Some(hi)) = (sw.p_min, sw.p_max) {
                    if lo >= hi {
                        return Err(cfg_err("sweep.p_min", format!("{lo} is not below sweep.p_max = {hi}")));
                    }
                }
                Some(sw)
            }
            None => None,
        };
        let sim = match section(&root, "sim")? {
            Some(s) => {
                s.check_keys(&["slots", "seed", "warmup"])?;
                let sim = SimSection {
                    slots: s.uint("slots")?,
                    seed: s.uint("seed")?,
                    warmup: s.opt_uint("warmup")?,
                };
                if sim.slots == 0 {
                    return Err(cfg_err("sim.slots", "must be at least 1"));
                }
                if sim.warmup.is_some_and(|w| w >= sim.slots) {
                    return Err(cfg_err("sim.warmup", "must be below sim.slots"));
                }
                Some(sim)
            }
            None => None,
        };

        Ok(Config {
            arrival: arrival.floats("probs")?,
            eta: channel.floats("probs")?,
            powers: channel.floats("powers")?,
            capacity,
            solve,
            sweep,
            sim,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Validated system described by the config.
    pub fn spec(&self) -> Result<SystemSpec> {
        SystemSpec::from_parts(&self.arrival, &self.eta, &self.powers, self.capacity)
    }
}
