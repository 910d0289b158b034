//! Run configuration in a line-oriented `section.key = value` format.
//!
//! ```text
//! # comments start with '#'
//! grid.nx = 128
//! model.mu = 1.0
//! motility.family = exp_decay
//! ic.kind = cosine
//! ```
//!
//! Unknown keys and repeated keys are rejected. Every key left out takes its
//! default, and each applied default is echoed to the log.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};

use crate::elliptic::{EllipticSolveOptions, Preconditioner};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::motility::{MotilitySpec, MotilityTable};
use crate::stepper::{Integrator, PositivityPolicy, StepControl};

/// Lower bound applied to every generated initial density.
pub const U_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotilityFamily {
    ExpDecay,
    DoubleExp,
    PowerLaw,
    Constant,
    CustomTable,
}

impl MotilityFamily {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "exp_decay" => Self::ExpDecay,
            "double_exp" => Self::DoubleExp,
            "power_law" => Self::PowerLaw,
            "constant" => Self::Constant,
            "custom_table" => Self::CustomTable,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Self::ExpDecay => "exp_decay",
            Self::DoubleExp => "double_exp",
            Self::PowerLaw => "power_law",
            Self::Constant => "constant",
            Self::CustomTable => "custom_table",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    Constant,
    Cosine,
    Random,
    Gaussian,
}

impl IcKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "constant" => Self::Constant,
            "cosine" => Self::Cosine,
            "random" => Self::Random,
            "gaussian" => Self::Gaussian,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Cosine => "cosine",
            Self::Random => "random",
            Self::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotilityConfig {
    pub family: MotilityFamily,
    /// `chi = (alpha - 1) gamma'` for the smooth families.
    pub alpha: f64,
    pub lambda: f64,
    pub c0: f64,
    pub k: f64,
    pub v0_shift: f64,
    pub gamma0: f64,
    pub chi0: f64,
    pub table: Option<PathBuf>,
    /// Upper end of the `K0` probe interval before any simulation has run.
    /// `None` means `4 max(1, max u0)`.
    pub k0_vmax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcConfig {
    pub kind: IcKind,
    pub mean: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Cosine wave numbers `(mx, my)` in `cos(mx pi x / lx) cos(my pi y / ly)`.
    pub modes: (u32, u32),
    /// Gaussian bump standard deviation.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub t_end: f64,
    pub safety: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    /// `None` means `10 (nx + ny)`.
    pub max_iter: Option<usize>,
    pub warm_start: bool,
    pub preconditioner: Preconditioner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Diagnostics sampling interval in time units.
    pub every: f64,
    pub snapshots: bool,
    /// Extra snapshot interval; 0 writes only the initial and final states.
    pub snapshot_every: f64,
    pub conv_tol: f64,
    pub conv_patience: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardConfig {
    /// Abort once `max u` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub mu: f64,
    pub motility: MotilityConfig,
    pub ic: IcConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub guard: GuardConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig {
                nx: 64,
                ny: 64,
                lx: 4.0,
                ly: 4.0,
            },
            mu: 1.0,
            motility: MotilityConfig {
                family: MotilityFamily::ExpDecay,
                alpha: 0.0,
                lambda: 1.0,
                c0: 1.0,
                k: 1.0,
                v0_shift: 1.0,
                gamma0: 1.0,
                chi0: 0.0,
                table: None,
                k0_vmax: None,
            },
            ic: IcConfig {
                kind: IcKind::Cosine,
                mean: 1.0,
                amplitude: 0.5,
                seed: 0,
                modes: (2, 2),
                width: 0.5,
            },
            time: TimeConfig {
                t_end: 20.0,
                safety: 0.4,
                dt_max: 0.01,
                dt_min: 1e-12,
                integrator: Integrator::Heun,
            },
            solver: SolverConfig {
                tol: EllipticSolveOptions::DEFAULT_TOL,
                max_iter: None,
                warm_start: true,
                preconditioner: Preconditioner::default(),
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                every: 0.1,
                snapshots: false,
                snapshot_every: 0.0,
                conv_tol: 1e-6,
                conv_patience: 5,
            },
            guard: GuardConfig {
                blowup_factor: 100.0,
            },
        }
    }
}

/// Every accepted key, in the order used by [`SimConfig::to_text`].
pub const KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "model.mu",
    "motility.family",
    "motility.alpha",
    "motility.lambda",
    "motility.c0",
    "motility.k",
    "motility.v0_shift",
    "motility.gamma0",
    "motility.chi0",
    "motility.table",
    "motility.k0_vmax",
    "ic.kind",
    "ic.mean",
    "ic.amplitude",
    "ic.seed",
    "ic.modes",
    "ic.width",
    "time.t_end",
    "time.safety",
    "time.dt_max",
    "time.dt_min",
    "time.integrator",
    "solver.tol",
    "solver.max_iter",
    "solver.warm_start",
    "solver.preconditioner",
    "output.dir",
    "output.every",
    "output.snapshots",
    "output.snapshot_every",
    "output.conv_tol",
    "output.conv_patience",
    "guard.blowup_factor",
];

/// One `key = value` line of a config-like file.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits text into entries, dropping comments and blank lines.
pub fn tokenize(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::validation(content, line, "expected `key = value`"));
        };
        let key = key.trim();
        let value = unquote(value.trim());
        if key.is_empty() {
            return Err(Error::validation("", line, "missing key before `=`"));
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(out)
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(s)
}

fn parse_f64(key: &str, v: &str, line: usize) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::validation(key, line, format!("expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(Error::validation(key, line, format!("value `{v}` is not finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str, line: usize) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::validation(key, line, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_u64(key: &str, v: &str, line: usize) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::validation(key, line, format!("expected an unsigned 64-bit integer, got `{v}`")))
}

fn parse_bool(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::validation(key, line, format!("expected true or false, got `{v}`"))),
    }
}

fn parse_modes(key: &str, v: &str, line: usize) -> Result<(u32, u32)> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let num = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| Error::validation(key, line, format!("expected `m` or `mx, my`, got `{v}`")))
    };
    match parts.as_slice() {
        [m] => {
            let m = num(m)?;
            Ok((m, m))
        }
        [mx, my] => Ok((num(mx)?, num(my)?)),
        _ => Err(Error::validation(key, line, format!("expected `m` or `mx, my`, got `{v}`"))),
    }
}

fn fmt_f64(x: f64) -> String {
    // Debug formatting is the shortest representation that round-trips
    format!("{x:?}")
}

impl SimConfig {
    /// Sets one key from its textual value. `line` is used in error messages.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let f = |v: &str| parse_f64(key, v, line);
        match key {
            "grid.nx" => self.grid.nx = parse_usize(key, value, line)?,
            "grid.ny" => self.grid.ny = parse_usize(key, value, line)?,
            "grid.lx" => self.grid.lx = f(value)?,
            "grid.ly" => self.grid.ly = f(value)?,
            "model.mu" => self.mu = f(value)?,
            "motility.family" => {
                self.motility.family = MotilityFamily::parse(value).ok_or_else(|| {
                    Error::validation(
                        key,
                        line,
                        format!("unknown family `{value}` (exp_decay, double_exp, power_law, constant, custom_table)"),
                    )
                })?
            }
            "motility.alpha" => self.motility.alpha = f(value)?,
            "motility.lambda" => self.motility.lambda = f(value)?,
            "motility.c0" => self.motility.c0 = f(value)?,
            "motility.k" => self.motility.k = f(value)?,
            "motility.v0_shift" => self.motility.v0_shift = f(value)?,
            "motility.gamma0" => self.motility.gamma0 = f(value)?,
            "motility.chi0" => self.motility.chi0 = f(value)?,
            "motility.table" => {
                self.motility.table = if value.is_empty() { None } else { Some(PathBuf::from(value)) }
            }
            "motility.k0_vmax" => {
                self.motility.k0_vmax = if value == "auto" { None } else { Some(f(value)?) }
            }
            "ic.kind" => {
                self.ic.kind = IcKind::parse(value).ok_or_else(|| {
                    Error::validation(
                        key,
                        line,
                        format!("unknown initial condition `{value}` (constant, cosine, random, gaussian)"),
                    )
                })?
            }
            "ic.mean" => self.ic.mean = f(value)?,
            "ic.amplitude" => self.ic.amplitude = f(value)?,
            "ic.seed" => self.ic.seed = parse_u64(key, value, line)?,
            "ic.modes" => self.ic.modes = parse_modes(key, value, line)?,
            "ic.width" => self.ic.width = f(value)?,
            "time.t_end" => self.time.t_end = f(value)?,
            "time.safety" => self.time.safety = f(value)?,
            "time.dt_max" => self.time.dt_max = f(value)?,
            "time.dt_min" => self.time.dt_min = f(value)?,
            "time.integrator" => {
                self.time.integrator = match value {
                    "heun" => Integrator::Heun,
                    "euler" => Integrator::Euler,
                    _ => {
                        return Err(Error::validation(
                            key,
                            line,
                            format!("unknown integrator `{value}` (euler, heun)"),
                        ))
                    }
                }
            }
            "solver.tol" => self.solver.tol = f(value)?,
            "solver.max_iter" => {
                self.solver.max_iter = if value == "auto" {
                    None
                } else {
                    Some(parse_usize(key, value, line)?)
                }
            }
            "solver.warm_start" => self.solver.warm_start = parse_bool(key, value, line)?,
            "solver.preconditioner" => {
                self.solver.preconditioner = match value {
                    "spectral" => Preconditioner::Spectral,
                    "jacobi" => Preconditioner::Jacobi,
                    _ => {
                        return Err(Error::validation(
                            key,
                            line,
                            format!("unknown preconditioner `{value}` (spectral, jacobi)"),
                        ))
                    }
                }
            }
            "output.dir" => self.output.dir = PathBuf::from(value),
            "output.every" => self.output.every = f(value)?,
            "output.snapshots" => self.output.snapshots = parse_bool(key, value, line)?,
            "output.snapshot_every" => self.output.snapshot_every = f(value)?,
            "output.conv_tol" => self.output.conv_tol = f(value)?,
            "output.conv_patience" => self.output.conv_patience = parse_usize(key, value, line)?,
            "guard.blowup_factor" => self.guard.blowup_factor = f(value)?,
            _ => return Err(Error::validation(key, line, "unknown key")),
        }
        Ok(())
    }

    /// Current value of `key` in the textual form accepted by [`SimConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "grid.nx" => self.grid.nx.to_string(),
            "grid.ny" => self.grid.ny.to_string(),
            "grid.lx" => fmt_f64(self.grid.lx),
            "grid.ly" => fmt_f64(self.grid.ly),
            "model.mu" => fmt_f64(self.mu),
            "motility.family" => self.motility.family.name().to_string(),
            "motility.alpha" => fmt_f64(self.motility.alpha),
            "motility.lambda" => fmt_f64(self.motility.lambda),
            "motility.c0" => fmt_f64(self.motility.c0),
            "motility.k" => fmt_f64(self.motility.k),
            "motility.v0_shift" => fmt_f64(self.motility.v0_shift),
            "motility.gamma0" => fmt_f64(self.motility.gamma0),
            "motility.chi0" => fmt_f64(self.motility.chi0),
            "motility.table" => self
                .motility
                .table
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "motility.k0_vmax" => self.motility.k0_vmax.map(fmt_f64).unwrap_or_else(|| "auto".into()),
            "ic.kind" => self.ic.kind.name().to_string(),
            "ic.mean" => fmt_f64(self.ic.mean),
            "ic.amplitude" => fmt_f64(self.ic.amplitude),
            "ic.seed" => self.ic.seed.to_string(),
            "ic.modes" => format!("{}, {}", self.ic.modes.0, self.ic.modes.1),
            "ic.width" => fmt_f64(self.ic.width),
            "time.t_end" => fmt_f64(self.time.t_end),
            "time.safety" => fmt_f64(self.time.safety),
            "time.dt_max" => fmt_f64(self.time.dt_max),
            "time.dt_min" => fmt_f64(self.time.dt_min),
            "time.integrator" => match self.time.integrator {
                Integrator::Heun => "heun".into(),
                Integrator::Euler => "euler".into(),
            },
            "solver.tol" => fmt_f64(self.solver.tol),
            "solver.max_iter" => self
                .solver
                .max_iter
                .map(|m| m.to_string())
                .unwrap_or_else(|| "auto".into()),
            "solver.warm_start" => self.solver.warm_start.to_string(),
            "solver.preconditioner" => self.solver.preconditioner.name().to_string(),
            "output.dir" => self.output.dir.display().to_string(),
            "output.every" => fmt_f64(self.output.every),
            "output.snapshots" => self.output.snapshots.to_string(),
            "output.snapshot_every" => fmt_f64(self.output.snapshot_every),
            "output.conv_tol" => fmt_f64(self.output.conv_tol),
            "output.conv_patience" => self.output.conv_patience.to_string(),
            "guard.blowup_factor" => fmt_f64(self.guard.blowup_factor),
            _ => return None,
        })
    }

    /// Serializes every key; parsing the result reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).expect("every listed key has a value");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Range and consistency checks. `lines` maps keys to the line that set them.
    pub fn validate_with_lines(&self, lines: &BTreeMap<String, usize>) -> Result<()> {
        let at = |key: &str| lines.get(key).copied().unwrap_or(0);
        let fail = |key: &str, msg: String| Err(Error::validation(key, at(key), msg));
        let positive = |key: &str, x: f64| -> Result<()> {
            if x > 0.0 {
                Ok(())
            } else {
                fail(key, format!("must be > 0, got {x}"))
            }
        };

        if self.grid.nx < 3 {
            return fail("grid.nx", format!("must be >= 3, got {}", self.grid.nx));
        }
        if self.grid.ny < 3 {
            return fail("grid.ny", format!("must be >= 3, got {}", self.grid.ny));
        }
        positive("grid.lx", self.grid.lx)?;
        positive("grid.ly", self.grid.ly)?;
        if !(self.mu >= 0.0) {
            return fail("model.mu", format!("must be >= 0, got {}", self.mu));
        }

        let m = &self.motility;
        let explicit = |key: &str| lines.contains_key(key);
        match m.family {
            MotilityFamily::ExpDecay | MotilityFamily::DoubleExp => {}
            MotilityFamily::PowerLaw => {
                positive("motility.c0", m.c0)?;
                if !(m.k >= 0.0) {
                    return fail("motility.k", format!("must be >= 0, got {}", m.k));
                }
                if !(m.v0_shift >= 0.0) {
                    return fail("motility.v0_shift", format!("must be >= 0, got {}", m.v0_shift));
                }
            }
            MotilityFamily::Constant | MotilityFamily::CustomTable => {
                if explicit("motility.alpha") {
                    return fail(
                        "motility.alpha",
                        format!("not used by the {} family, which defines chi directly", m.family.name()),
                    );
                }
                if m.family == MotilityFamily::Constant {
                    positive("motility.gamma0", m.gamma0)?;
                }
            }
        }
        if m.family == MotilityFamily::CustomTable && m.table.is_none() {
            return fail("motility.table", "custom_table needs a table path".into());
        }
        if let Some(v) = m.k0_vmax {
            positive("motility.k0_vmax", v)?;
        }

        positive("ic.mean", self.ic.mean)?;
        if !(self.ic.amplitude >= 0.0) {
            return fail("ic.amplitude", format!("must be >= 0, got {}", self.ic.amplitude));
        }
        positive("ic.width", self.ic.width)?;

        positive("time.t_end", self.time.t_end)?;
        if !(self.time.safety > 0.0 && self.time.safety <= 1.0) {
            return fail("time.safety", format!("must lie in (0, 1], got {}", self.time.safety));
        }
        positive("time.dt_min", self.time.dt_min)?;
        if !(self.time.dt_min < self.time.dt_max) {
            return fail(
                "time.dt_max",
                format!("must exceed time.dt_min = {}, got {}", self.time.dt_min, self.time.dt_max),
            );
        }

        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return fail("solver.tol", format!("must lie in (0, 1), got {}", self.solver.tol));
        }
        if self.solver.max_iter == Some(0) {
            return fail("solver.max_iter", "must be >= 1".into());
        }

        positive("output.every", self.output.every)?;
        if !(self.output.snapshot_every >= 0.0) {
            return fail(
                "output.snapshot_every",
                format!("must be >= 0, got {}", self.output.snapshot_every),
            );
        }
        positive("output.conv_tol", self.output.conv_tol)?;
        if self.output.conv_patience < 1 {
            return fail("output.conv_patience", "must be >= 1".into());
        }
        if !(self.guard.blowup_factor > 1.0) {
            return fail(
                "guard.blowup_factor",
                format!("must be > 1, got {}", self.guard.blowup_factor),
            );
        }
        self.motility_spec().map_err(|e| match e {
            Error::Validation { .. } => e,
            other => Error::validation("motility.family", at("motility.family"), other.to_string()),
        })?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_lines(&BTreeMap::new())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
    }

    pub fn motility_spec(&self) -> Result<MotilitySpec> {
        let m = &self.motility;
        let spec = match m.family {
            MotilityFamily::ExpDecay => MotilitySpec::ks_pair(MotilitySpec::exp_decay(m.lambda), m.alpha),
            MotilityFamily::DoubleExp => MotilitySpec::ks_pair(MotilitySpec::DoubleExp, m.alpha),
            MotilityFamily::PowerLaw => MotilitySpec::ks_pair(
                MotilitySpec::PowerLaw {
                    c0: m.c0,
                    k: m.k,
                    v0_shift: m.v0_shift,
                },
                m.alpha,
            ),
            MotilityFamily::Constant => MotilitySpec::constant(m.gamma0, m.chi0),
            MotilityFamily::CustomTable => {
                let path = m
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::validation("motility.table", 0, "custom_table needs a table path"))?;
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                MotilitySpec::CustomTable(MotilityTable::parse_csv(&text)?)
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            safety: self.time.safety,
            dt_max: self.time.dt_max,
            dt_min: self.time.dt_min,
            integrator: self.time.integrator,
            positivity_policy: PositivityPolicy::RejectAndHalve,
        }
    }

    pub fn solver_options(&self) -> EllipticSolveOptions {
        EllipticSolveOptions {
            tol: self.solver.tol,
            max_iter: self
                .solver
                .max_iter
                .unwrap_or(10 * (self.grid.nx + self.grid.ny)),
            warm_start: self.solver.warm_start,
            preconditioner: self.solver.preconditioner,
        }
    }

    /// Initial density, floored at [`U_FLOOR`].
    pub fn initial_density(&self, grid: &Grid2D) -> Field {
        let ic = &self.ic;
        let (lx, ly) = (grid.lx(), grid.ly());
        let mut u = match ic.kind {
            IcKind::Constant => Field::constant(grid, ic.mean),
            IcKind::Cosine => {
                let (mx, my) = (ic.modes.0 as f64, ic.modes.1 as f64);
                Field::from_fn(grid, |x, y| {
                    ic.mean
                        + ic.amplitude
                            * (mx * std::f64::consts::PI * x / lx).cos()
                            * (my * std::f64::consts::PI * y / ly).cos()
                })
            }
            IcKind::Random => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ic.seed);
                let mut f = Field::zeros(grid);
                for x in f.values_mut() {
                    *x = ic.mean + ic.amplitude * rng.gen_range(-1.0..=1.0);
                }
                f
            }
            IcKind::Gaussian => {
                let (cx, cy) = (0.5 * lx, 0.5 * ly);
                let two_w2 = 2.0 * ic.width * ic.width;
                Field::from_fn(grid, |x, y| {
                    let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                    ic.mean + ic.amplitude * (-r2 / two_w2).exp()
                })
            }
        };
        for x in u.values_mut() {
            *x = x.max(U_FLOOR);
        }
        u
    }

    /// Upper end of the `K0` probe interval for a given initial density.
    pub fn k0_probe_vmax(&self, u0: &Field) -> f64 {
        self.motility
            .k0_vmax
            .unwrap_or_else(|| 4.0 * u0.max().max(1.0))
    }
}

/// Parses and validates a config; every default applied is logged.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    parse_entries(&tokenize(text)?)
}

/// Builds a validated config from pre-tokenized entries.
pub fn parse_entries(entries: &[Entry]) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    let mut lines = BTreeMap::new();
    for e in entries {
        if let Some(prev) = lines.insert(e.key.clone(), e.line) {
            return Err(Error::validation(
                &e.key,
                e.line,
                format!("duplicate key (first set on line {prev})"),
            ));
        }
        cfg.set(&e.key, &e.value, e.line)?;
    }
    for key in KEYS {
        if !lines.contains_key(*key) {
            log::info!("default applied: {key} = {}", cfg.get(key).unwrap_or_default());
        }
    }
    cfg.validate_with_lines(&lines)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, SimConfig::default());
        assert_eq!((c.grid.nx, c.grid.ny, c.grid.lx, c.grid.ly), (64, 64, 4.0, 4.0));
        assert_eq!(c.mu, 1.0);
        assert_eq!(c.motility_spec().unwrap(), MotilitySpec::default_pair());
        assert_eq!(c.time.integrator, Integrator::Heun);
        assert_eq!(c.solver_options().max_iter, 1280);
    }

    #[test]
    fn negative_mu_names_the_key() {
        let err = parse_config("# header\nmodel.mu = -1\n").unwrap_err();
        match err {
            Error::Validation { key, line, .. } => {
                assert_eq!(key, "model.mu");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(matches!(
            parse_config("model.nu = 1"),
            Err(Error::Validation { ref key, .. }) if key == "model.nu"
        ));
        assert!(matches!(
            parse_config("model.mu = 1\nmodel.mu = 2"),
            Err(Error::Validation { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("grid.nx = many"),
            Err(Error::Validation { ref key, .. }) if key == "grid.nx"
        ));
        assert!(parse_config("just words").is_err());
        assert!(parse_config("time.safety = 1.5").is_err());
        assert!(parse_config("time.dt_min = 1\ntime.dt_max = 0.5").is_err());
        assert!(parse_config("motility.family = constant\nmotility.alpha = 2").is_err());
        assert!(parse_config("motility.family = power_law\nmotility.c0 = 0").is_err());
        assert!(parse_config("solver.tol = 0").is_err());
        assert!(parse_config("model.mu = inf").is_err());
    }

    #[test]
    fn comments_quotes_and_modes() {
        let c = parse_config(
            "output.dir = \"runs/a\"  # trailing\nic.modes = 3, 1\nmotility.family = double_exp\nmotility.alpha = 2\n",
        )
        .unwrap();
        assert_eq!(c.output.dir, PathBuf::from("runs/a"));
        assert_eq!(c.ic.modes, (3, 1));
        assert_eq!(
            c.motility_spec().unwrap(),
            MotilitySpec::ks_pair(MotilitySpec::DoubleExp, 2.0)
        );
    }

    #[test]
    fn text_round_trip() {
        let mut c = SimConfig::default();
        c.set("model.mu", "0.123456789012345", 0).unwrap();
        c.set("ic.seed", "18446744073709551615", 0).unwrap();
        c.set("solver.max_iter", "77", 0).unwrap();
        c.set("motility.k0_vmax", "7.5", 0).unwrap();
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        assert_eq!(parse_config(&SimConfig::default().to_text()).unwrap(), SimConfig::default());
    }

    #[test]
    fn initial_conditions_are_floored_and_reproducible() {
        let mut c = SimConfig::default();
        let g = Grid2D::new(16, 16, 4.0, 4.0).unwrap();
        c.ic.kind = IcKind::Random;
        c.ic.amplitude = 1.5;
        c.ic.seed = 11;
        let a = c.initial_density(&g);
        let b = c.initial_density(&g);
        assert_eq!(a, b);
        assert!(a.min() >= U_FLOOR);
        c.ic.seed = 12;
        assert_ne!(c.initial_density(&g), a);

        c.ic.kind = IcKind::Cosine;
        c.ic.amplitude = 0.5;
        let u = c.initial_density(&g);
        assert!(u.min() > 0.5 && u.max() < 1.5);

        c.ic.kind = IcKind::Gaussian;
        c.ic.amplitude = 3.0;
        let u = c.initial_density(&g);
        assert!(u.max() > 3.5 && u.min() >= 1.0);
    }
}
