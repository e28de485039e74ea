//! `dpsched`: delay-optimal scheduling under a power budget.

mod fmt;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpsched::config::Config;
use dpsched::heuristic::{self, PolicyTable};
use dpsched::oracle::{self, Restrict};
use dpsched::sim::{self, SimConfig};
use dpsched::tradeoff::{self, OptimalPoint};
use dpsched::{chain, lp, Error, SystemSpec};

use crate::fmt::{g9, Csv};

const EXIT_CHECK: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// LP and hull may differ by this much in `oracle`.
const HULL_TOL: f64 = 1e-6;
/// Slack for the monotonicity and convexity warnings of `sweep`.
const CURVE_TOL: f64 = 1e-8;
const DEFAULT_POINTS: usize = 50;
const DEFAULT_SLOTS: u64 = 1_000_000;
const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "dpsched", version, about = "Delay-optimal packet scheduling under an average power budget")]
#[command(after_help = "Exit codes: 0 success, 1 check failed, 2 input error, 3 budget below P_min, 4 internal error")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimal policy for one budget
    Solve(SolveArgs),
    /// Optimal delay over a grid of budgets (CSV)
    Sweep(SweepArgs),
    /// Simulate the optimal policy and compare with the analysis (CSV)
    Simulate(SimulateArgs),
    /// Enumerate deterministic policies and compare their hull with the LP
    Oracle(OracleArgs),
    /// Check the threshold structure of the optimal policy
    Verify(SolveArgs),
    /// Build or load the two-interval heuristic table
    Table(TableArgs),
}

#[derive(Args)]
struct Common {
    /// TOML system description
    #[arg(long)]
    config: PathBuf,
    /// Write the result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Power budget; overrides solve.p_aver
    #[arg(long)]
    p_aver: Option<f64>,
    /// Accept budgets below P_min (the optimum then drops packets)
    #[arg(long)]
    allow_overflow: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Defaults to sweep.p_min, then to P_min
    #[arg(long)]
    p_min: Option<f64>,
    /// Defaults to sweep.p_max, then to P_max
    #[arg(long)]
    p_max: Option<f64>,
    /// Defaults to sweep.points, then to 50
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    allow_overflow: bool,
    /// Only csv is supported
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    p_aver: Option<f64>,
    #[arg(long)]
    allow_overflow: bool,
    /// Defaults to sim.seed, then to 1
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to sim.slots, then to 10^6
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    All,
    Threshold,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Which deterministic policies to enumerate
    #[arg(long, value_enum, default_value = "all")]
    restrict: Family,
    /// Only csv is supported
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    common: Common,
    /// Read a saved table instead of building one
    #[arg(long)]
    load: Option<PathBuf>,
    /// Look up the best table policy for this budget
    #[arg(long)]
    p_aver: Option<f64>,
    /// Spend leftover budget on one probabilistic cell
    #[arg(long, requires = "p_aver")]
    refine: bool,
}

enum Failure {
    Lib(Error),
    Check(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Solve(a) => solve(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Oracle(a) => run_oracle(a),
        Cmd::Verify(a) => verify(a),
        Cmd::Table(a) => table(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(EXIT_CHECK)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Infeasible { .. } => EXIT_INFEASIBLE,
                Error::TooLarge { .. } => EXIT_INPUT,
                ref e if e.is_input_error() => EXIT_INPUT,
                _ => EXIT_INTERNAL,
            })
        }
    }
}

fn load(path: &Path) -> Result<(Config, SystemSpec), Failure> {
    let config = Config::from_path(path)?;
    let spec = config.spec()?;
    Ok((config, spec))
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn csv_only(format: Format, cmd: &str) -> Outcome {
    match format {
        Format::Csv => Ok(()),
        Format::Text => Err(Failure::Lib(Error::InvalidValue {
            field: "--format",
            reason: format!("{cmd} only writes csv"),
        })),
    }
}

fn budget(flag: Option<f64>, config: &Config) -> Result<f64, Failure> {
    let p = flag.or(config.solve.as_ref().map(|s| s.p_aver)).ok_or(Error::InvalidValue {
        field: "solve.p_aver",
        reason: "no budget given; pass --p-aver or set solve.p_aver".into(),
    })?;
    if !p.is_finite() || p < 0.0 {
        return Err(Error::InvalidValue {
            field: "--p-aver",
            reason: format!("{p} is not a non-negative number"),
        }
        .into());
    }
    Ok(p)
}

fn overflow_allowed(flag: bool, config: &Config) -> bool {
    flag || config.solve.as_ref().is_some_and(|s| s.allow_overflow)
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn fraction_cells(pt: &OptimalPoint) -> [String; 3] {
    match pt.descriptor().and_then(|d| d.fractional) {
        Some(fp) => [fp.queue.to_string(), fp.channel.to_string(), g9(fp.value)],
        None => [String::new(), String::new(), String::new()],
    }
}

fn summary(pt: &OptimalPoint) -> String {
    pt.descriptor().map_or_else(|| "unavailable".into(), |d| d.summary())
}

fn solve(a: SolveArgs) -> Outcome {
    let (config, spec) = load(&a.common.config)?;
    let p = budget(a.p_aver, &config)?;
    let pt = tradeoff::optimize(&spec, p, overflow_allowed(a.allow_overflow, &config))?;
    warn(&pt.warnings);
    let m = pt.metrics;
    let text = match a.format {
        Format::Csv => {
            let mut c = Csv::new(
                "solve",
                1,
                &[
                    "p_aver", "delay", "power", "avg_queue", "drop_rate", "thresholds", "frac_queue", "frac_channel",
                    "frac_value",
                ],
            );
            let [fq, fc, fv] = fraction_cells(&pt);
            c.row(&[g9(p), g9(pt.solution.delay), g9(m.power), g9(m.avg_queue), g9(m.drop_rate), summary(&pt), fq, fc, fv]);
            c.finish()
        }
        Format::Text => {
            let mut s = format!(
                "p_aver     {}\ndelay      {}\npower      {}\navg_queue  {}\ndrop_rate  {}\n",
                g9(p),
                g9(pt.solution.delay),
                g9(m.power),
                g9(m.avg_queue),
                g9(m.drop_rate)
            );
            match pt.descriptor() {
                Some(d) => s.push_str(&d.to_string()),
                None => s.push_str("thresholds unavailable: structure checks failed (run verify)\n"),
            }
            s.push_str("policy f[t][w]:\n");
            s.push_str(&pt.policy.to_table());
            s
        }
    };
    emit(a.common.out.as_deref(), &text)
}

fn verify(a: SolveArgs) -> Outcome {
    let (config, spec) = load(&a.common.config)?;
    let p = budget(a.p_aver, &config)?;
    let pt = tradeoff::optimize(&spec, p, overflow_allowed(a.allow_overflow, &config))?;
    warn(&pt.warnings);
    let text = match a.format {
        Format::Csv => {
            let mut c = Csv::new("verify", 1, &["check", "passed", "detail", "witnesses"]);
            for ch in &pt.report.checks {
                c.row(&[ch.name.into(), ch.passed.to_string(), ch.detail.clone(), format!("{:?}", ch.witnesses)]);
            }
            c.finish()
        }
        Format::Text => {
            let mut s = format!("p_aver {}  delay {}\n", g9(p), g9(pt.solution.delay));
            s.push_str(&pt.report.to_string());
            s
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    let failed: Vec<&str> = pt.report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join("; ")))
    }
}

fn sweep(a: SweepArgs) -> Outcome {
    csv_only(a.format, "sweep")?;
    let (config, spec) = load(&a.common.config)?;
    let section = config.sweep.as_ref();
    let bounds = tradeoff::power_bounds(&spec)?;
    let lo = a.p_min.or(section.and_then(|s| s.p_min)).unwrap_or(bounds.p_min);
    let hi = a.p_max.or(section.and_then(|s| s.p_max)).unwrap_or(bounds.p_max);
    let points = a.points.or(section.map(|s| s.points)).unwrap_or(DEFAULT_POINTS);
    let budgets = tradeoff::grid(lo, hi, points)?;
    let results = tradeoff::sweep(&spec, &budgets, overflow_allowed(a.allow_overflow, &config));

    let mut c = Csv::new("sweep", 1, &["p_aver", "delay", "power", "status", "thresholds", "frac_value"]);
    let mut curve = Vec::new();
    for r in &results {
        match &r.outcome {
            Ok(pt) => {
                curve.push((r.p_aver, pt.solution.delay));
                let [_, _, fv] = fraction_cells(pt);
                c.row(&[g9(r.p_aver), g9(pt.solution.delay), g9(pt.metrics.power), "ok".into(), summary(pt), fv]);
            }
            Err(e) => {
                let status = match e {
                    Error::Infeasible { .. } => "infeasible".to_string(),
                    other => {
                        eprintln!("warning: p_aver = {}: {other}", g9(r.p_aver));
                        "error".to_string()
                    }
                };
                c.row(&[g9(r.p_aver), "nan".into(), "nan".into(), status, String::new(), String::new()]);
            }
        }
    }
    warn(&tradeoff::check_curve(&curve, bounds.p_max, CURVE_TOL).warnings(&curve));
    emit(a.common.out.as_deref(), &c.finish())
}

fn simulate(a: SimulateArgs) -> Outcome {
    let (config, spec) = load(&a.common.config)?;
    let p = budget(a.p_aver, &config)?;
    let section = config.sim.as_ref();
    let seed = a.seed.or(section.map(|s| s.seed)).unwrap_or(DEFAULT_SEED);
    let slots = a.slots.or(section.map(|s| s.slots)).unwrap_or(DEFAULT_SLOTS);
    let sim_cfg = match section.and_then(|s| s.warmup) {
        Some(w) if a.slots.is_none() => SimConfig::with_warmup(slots, seed, w)?,
        _ => SimConfig::new(slots, seed)?,
    };
    let pt = tradeoff::optimize(&spec, p, overflow_allowed(a.allow_overflow, &config))?;
    warn(&pt.warnings);
    let exact = chain::analyze(&spec, &pt.policy).map(|an| an.metrics).unwrap_or(pt.metrics);
    let r = sim::simulate(&spec, &pt.policy, &sim_cfg)?;
    let cells = [
        r.seed.to_string(),
        r.slots.to_string(),
        g9(p),
        g9(r.mean_delay),
        g9(r.se_delay),
        g9(r.mean_power),
        g9(r.se_power),
        g9(r.mean_queue),
        g9(r.se_queue),
        r.overflow_count.to_string(),
        g9(exact.delay),
        g9(exact.power),
    ];
    let names = [
        "seed", "slots", "p_aver", "delay", "se_delay", "power", "se_power", "queue", "se_queue", "overflow",
        "exact_delay", "exact_power",
    ];
    let text = match a.format {
        Format::Csv => {
            let mut c = Csv::new("simulate", 1, &names);
            c.row(&cells);
            c.finish()
        }
        Format::Text => names.iter().zip(&cells).map(|(n, v)| format!("{n:<12} {v}\n")).collect(),
    };
    emit(a.common.out.as_deref(), &text)
}

fn run_oracle(a: OracleArgs) -> Outcome {
    csv_only(a.format, "oracle")?;
    let (_, spec) = load(&a.common.config)?;
    let restrict = match a.restrict {
        Family::All => Restrict::All,
        Family::Threshold => Restrict::ThresholdOnly,
    };
    let points = oracle::enumerate(&spec, restrict)?;
    let cloud: Vec<(f64, f64)> = points.iter().map(|p| (p.power, p.delay)).collect();
    let hull = oracle::lower_hull(&cloud);

    let mut c = Csv::new("oracle", 1, &["index", "power", "delay", "ergodic", "hull_vertex"]);
    for (i, p) in points.iter().enumerate() {
        let vertex = hull.vertices.contains(&(p.power, p.delay));
        c.row(&[i.to_string(), g9(p.power), g9(p.delay), p.ergodic.to_string(), vertex.to_string()]);
    }
    emit(a.common.out.as_deref(), &c.finish())?;

    // LP against the hull at every vertex and every midpoint between vertices
    let mut budgets: Vec<f64> = hull.vertices.iter().map(|v| v.0).collect();
    budgets.extend(hull.vertices.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)));
    let mut worst: f64 = 0.0;
    for &p in &budgets {
        let d = lp::solve(&lp::build_lp(&spec, p)?)?.delay;
        let h = hull.eval(p).expect("budget lies within the hull");
        worst = worst.max((d - h).abs());
    }
    let report = format!(
        "{} policies, {} hull vertices, max |D_lp - D_hull| over {} budgets = {}",
        points.len(),
        hull.vertices.len(),
        budgets.len(),
        g9(worst)
    );
    if a.common.out.is_some() {
        println!("{report}");
    } else {
        eprintln!("{report}");
    }
    if worst > HULL_TOL {
        return Err(Failure::Check(format!("LP and hull differ by {} (tolerance {HULL_TOL:e})", g9(worst))));
    }
    Ok(())
}

fn table(a: TableArgs) -> Outcome {
    let (_, spec) = load(&a.common.config)?;
    let table = match &a.load {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            let t = PolicyTable::parse(&text)?;
            if !t.matches(&spec) {
                return Err(Error::Config(format!("{}: table was built for a different system", path.display())).into());
            }
            t
        }
        None => heuristic::build_table(&spec),
    };
    // the table goes to --out, or to stdout when nothing is looked up
    match (&a.common.out, a.p_aver) {
        (Some(_), _) | (None, None) => emit(a.common.out.as_deref(), &table.to_text())?,
        (None, Some(_)) => {}
    }
    if let Some(p) = a.p_aver {
        let (key, delay, power, fraction) = if a.refine {
            let r = heuristic::refine(&spec, &table, p)?;
            (r.key, r.delay, r.power, r.fraction)
        } else {
            let e = table.lookup(p)?;
            (e.key, e.delay, e.power, 0.0)
        };
        let line = format!(
            "p_aver {} k_split {} w1 {} w2 {} fraction {} delay {} power {}\n",
            g9(p),
            key.k_split,
            key.w1,
            key.w2,
            g9(fraction),
            g9(delay),
            g9(power)
        );
        print!("{line}");
    }
    Ok(())
}
