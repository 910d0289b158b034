//! Parameter sweeps and regime maps.
//!
//! A plan file uses the config grammar. Keys under `sweep.` describe the
//! sweep; every other key sets the base config.
//!
//! ```text
//! sweep.axis.model.mu = 0.2, 0.5, 1.0
//! sweep.seeds = 1, 2
//! sweep.parallelism = 4
//! sweep.out_dir = sweep_out
//! ic.kind = random
//! ```
//!
//! Runs are independent and sequential internally, so every output depends
//! only on its config. `regime_map.csv` is sorted by parameter tuple and is
//! byte-identical for any `parallelism`. Wall times are scheduling-dependent
//! and go to the separate `wall_times.csv`.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{parse_entries, tokenize, SimConfig, KEYS};
use crate::diagnostics::{fit_quantity, DiagnosticsSeries, Quantity};
use crate::error::{Error, Result};
use crate::io::fmt_sig17;
use crate::motility::compute_k0;
use crate::run::{simulate, Termination};

/// Samples used for the per-run `K0` estimate.
const K0_SAMPLES: usize = 10_000;
const SEED_KEY: &str = "ic.seed";

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub base: SimConfig,
    pub axes: Vec<Axis>,
    /// Replicate seeds per point; empty means the base seed only.
    pub seeds: Vec<u64>,
    pub parallelism: usize,
    pub out_dir: PathBuf,
}

/// One expanded configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// `(key, canonical value)` for each axis, then `ic.seed` when seeds are swept.
    pub params: Vec<(String, String)>,
    pub config: SimConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Converged,
    NonConvergedBounded,
    Aborted,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::NonConvergedBounded => "non_converged_bounded",
            Self::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeEntry {
    pub params: Vec<(String, String)>,
    pub k0: f64,
    pub threshold: f64,
    pub classification: Classification,
    pub final_linf_u: f64,
    /// `None` when the energy series could not be fitted.
    pub e_rate: Option<f64>,
    pub e_monotone: bool,
    /// Smallest `min u` over all accepted steps; not written to the regime map.
    pub u_min_running: f64,
    pub wall_seconds: f64,
    pub run_dir: PathBuf,
}

pub fn parse_plan(text: &str) -> Result<SweepPlan> {
    let mut base_entries = Vec::new();
    let mut axes: Vec<Axis> = Vec::new();
    let mut seeds = None;
    let mut parallelism = None;
    let mut out_dir = None;
    for e in tokenize(text)? {
        let Some(sub) = e.key.strip_prefix("sweep.") else {
            base_entries.push(e);
            continue;
        };
        let list = || -> Vec<String> {
            e.value
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        };
        let once = |present: bool| {
            if present {
                Err(Error::validation(&e.key, e.line, "duplicate key"))
            } else {
                Ok(())
            }
        };
        if let Some(key) = sub.strip_prefix("axis.") {
            if !KEYS.contains(&key) {
                return Err(Error::validation(&e.key, e.line, format!("`{key}` is not a config key")));
            }
            if key == "output.dir" {
                return Err(Error::validation(&e.key, e.line, "output.dir cannot be swept"));
            }
            once(axes.iter().any(|a| a.key == key))?;
            let values = list();
            if values.is_empty() {
                return Err(Error::validation(&e.key, e.line, "axis has no values"));
            }
            axes.push(Axis {
                key: key.to_string(),
                values,
            });
            continue;
        }
        match sub {
            "seeds" => {
                once(seeds.is_some())?;
                let parsed = list()
                    .iter()
                    .map(|s| s.parse::<u64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::validation(&e.key, e.line, "seeds must be unsigned integers"))?;
                if parsed.is_empty() {
                    return Err(Error::validation(&e.key, e.line, "seed list is empty"));
                }
                seeds = Some((parsed, e.line));
            }
            "parallelism" => {
                once(parallelism.is_some())?;
                let p: usize = e
                    .value
                    .parse()
                    .ok()
                    .filter(|&p| p >= 1)
                    .ok_or_else(|| Error::validation(&e.key, e.line, "must be an integer >= 1"))?;
                parallelism = Some(p);
            }
            "out_dir" => {
                once(out_dir.is_some())?;
                out_dir = Some(PathBuf::from(&e.value));
            }
            _ => return Err(Error::validation(&e.key, e.line, "unknown sweep key")),
        }
    }
    let base = parse_entries(&base_entries)?;
    let seeds = match seeds {
        Some((s, line)) => {
            if axes.iter().any(|a| a.key == SEED_KEY) {
                return Err(Error::validation("sweep.seeds", line, "ic.seed is already an axis"));
            }
            s
        }
        None => Vec::new(),
    };
    let out_dir = out_dir.unwrap_or_else(|| base.output.dir.clone());
    Ok(SweepPlan {
        base,
        axes,
        seeds,
        parallelism: parallelism.unwrap_or(1),
        out_dir,
    })
}

pub fn load_plan(path: &Path) -> Result<SweepPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_plan(&text)
}

/// Cartesian product of the axes (first axis slowest) times the seeds.
/// Fails listing every invalid configuration.
pub fn expand(plan: &SweepPlan) -> Result<Vec<SweepPoint>> {
    if let Some(a) = plan.axes.iter().find(|a| a.values.is_empty()) {
        return Err(Error::Configuration(format!("sweep axis {} is empty", a.key)));
    }
    if plan.parallelism == 0 {
        return Err(Error::Configuration("sweep parallelism must be >= 1".into()));
    }
    let seeds: Vec<Option<u64>> = if plan.seeds.is_empty() {
        vec![None]
    } else {
        plan.seeds.iter().copied().map(Some).collect()
    };
    let mut points = Vec::new();
    let mut bad = Vec::new();
    let mut odometer = vec![0usize; plan.axes.len()];
    loop {
        for &seed in &seeds {
            let index = points.len() + bad.len();
            let mut cfg = plan.base.clone();
            let mut params = Vec::new();
            let mut failure = None;
            for (axis, &k) in plan.axes.iter().zip(&odometer) {
                if let Err(e) = cfg.set(&axis.key, &axis.values[k], 0) {
                    failure.get_or_insert(e);
                }
                params.push((axis.key.clone(), cfg.get(&axis.key).unwrap_or_default()));
            }
            if let Some(s) = seed {
                cfg.ic.seed = s;
                params.push((SEED_KEY.to_string(), s.to_string()));
            }
            cfg.output.dir = plan.out_dir.join(format!("run_{index:04}"));
            let checked = match failure {
                Some(e) => Err(e),
                None => cfg.validate(),
            };
            match checked {
                Ok(()) => points.push(SweepPoint {
                    index,
                    params,
                    config: cfg,
                }),
                Err(e) => bad.push(format!("{}: {e}", describe(&params))),
            }
        }
        // advance the odometer, last axis fastest
        let mut d = plan.axes.len();
        loop {
            if d == 0 {
                if bad.is_empty() {
                    return Ok(points);
                }
                return Err(Error::Configuration(format!(
                    "sweep generates {} invalid configuration(s):\n  {}",
                    bad.len(),
                    bad.join("\n  ")
                )));
            }
            d -= 1;
            odometer[d] += 1;
            if odometer[d] < plan.axes[d].values.len() {
                break;
            }
            odometer[d] = 0;
        }
    }
}

fn describe(params: &[(String, String)]) -> String {
    if params.is_empty() {
        return "base".into();
    }
    params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Converged when the last sample has `linf_u < conv_tol`; bounded when the
/// run finished without error; aborted otherwise. The blow-up guard
/// surfaces as an error, so a finished run is bounded by construction.
pub fn classify(series: &DiagnosticsSeries, failed: bool, conv_tol: f64) -> Classification {
    if failed {
        return Classification::Aborted;
    }
    match series.last() {
        Some(r) if r.linf_u < conv_tol => Classification::Converged,
        Some(_) => Classification::NonConvergedBounded,
        None => Classification::Aborted,
    }
}

fn run_point(p: &SweepPoint) -> RegimeEntry {
    let cfg = &p.config;
    let started = Instant::now();
    let k0 = cfg
        .grid()
        .and_then(|g| {
            let u0 = cfg.initial_density(&g);
            compute_k0(&cfg.motility_spec()?, cfg.k0_probe_vmax(&u0), K0_SAMPLES)
        })
        .map(|r| r.k0_estimate)
        .unwrap_or(f64::NAN);
    let (series, failed, u_min_running) = match simulate(cfg, Some(&cfg.output.dir), |_, _| {}) {
        Ok(report) => {
            let failed = matches!(report.termination, Termination::Failed(_));
            (report.series, failed, report.u_min_running)
        }
        Err(e) => {
            log::warn!("run {} could not start: {e}", p.index);
            (DiagnosticsSeries::default(), true, f64::NAN)
        }
    };
    let classification = classify(&series, failed, cfg.output.conv_tol);
    RegimeEntry {
        params: p.params.clone(),
        k0,
        threshold: k0 / 16.0,
        classification,
        final_linf_u: series.last().map_or(f64::NAN, |r| r.linf_u),
        e_rate: fit_quantity(&series, Quantity::Energy, 0.5).ok().map(|f| f.rate),
        e_monotone: series.energy_monotone(),
        u_min_running,
        wall_seconds: started.elapsed().as_secs_f64(),
        run_dir: cfg.output.dir.clone(),
    }
}

fn cmp_value(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

fn cmp_params(a: &[(String, String)], b: &[(String, String)]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|((_, x), (_, y))| cmp_value(x, y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn param_header(entries: &[RegimeEntry]) -> String {
    entries.first().map_or(String::new(), |e| {
        e.params.iter().map(|(k, _)| format!("{k},")).collect()
    })
}

fn param_cells(e: &RegimeEntry) -> String {
    e.params.iter().map(|(_, v)| format!("{v},")).collect()
}

/// `regime_map.csv` contents. Entries must already be sorted.
pub fn regime_map_csv(entries: &[RegimeEntry]) -> String {
    let mut s = param_header(entries);
    s.push_str("k0,threshold,classification,final_linf_u,e_rate,e_monotone\n");
    for e in entries {
        let _ = writeln!(
            s,
            "{}{},{},{},{},{},{}",
            param_cells(e),
            fmt_sig17(e.k0),
            fmt_sig17(e.threshold),
            e.classification.name(),
            fmt_sig17(e.final_linf_u),
            e.e_rate.map_or("nan".to_string(), fmt_sig17),
            e.e_monotone
        );
    }
    s
}

/// `wall_times.csv` contents, same row order as the regime map.
pub fn wall_times_csv(entries: &[RegimeEntry]) -> String {
    let mut s = param_header(entries);
    s.push_str("wall_seconds\n");
    for e in entries {
        let _ = writeln!(s, "{}{:.6}", param_cells(e), e.wall_seconds);
    }
    s
}

/// Runs every point with at most `plan.parallelism` concurrent runs, writes
/// `regime_map.csv` and `wall_times.csv` to `plan.out_dir` and returns the
/// sorted entries. Failed runs are recorded as aborted.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<RegimeEntry>> {
    let points = expand(plan)?;
    std::fs::create_dir_all(&plan.out_dir).map_err(|e| Error::io(&plan.out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallelism)
        .build()
        .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))?;
    log::info!(
        "sweep: {} runs, parallelism {}",
        points.len(),
        plan.parallelism
    );
    let mut entries: Vec<RegimeEntry> = pool.install(|| points.par_iter().map(run_point).collect());
    entries.sort_by(|a, b| cmp_params(&a.params, &b.params));
    for (name, body) in [
        ("regime_map.csv", regime_map_csv(&entries)),
        ("wall_times.csv", wall_times_csv(&entries)),
    ] {
        let path = plan.out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(entries)
}
