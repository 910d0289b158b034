//! Monitored functionals of a simulation state and exponential-rate fitting.
//!
//! The Lyapunov energy is `E = int (u - 1 - ln u)`. Along solutions
//! `dE/dt = I1 + I2` with
//!
//! ```text
//! I1 = -int gamma |grad u|^2 / u^2 - delta int |grad v|^2 + int chi grad u . grad v / u
//! I2 = -mu int (u-1)^2 - delta int (v-1)^2 + delta int (u-1)(v-1)
//! ```
//!
//! where the `delta` terms sum to zero because of the weak form of the
//! signal equation. Gradient integrals are face quadratures built on the
//! same two-point gradients and donor cells as the flux assembly, with
//! `1/u^2` taken as `1/(u_L u_R)` and `1/u` as `u_up/(u_L u_R)`. With these
//! choices the semi-discrete energy identity holds exactly, so the sampled
//! `dE/dt` and `I1 + I2` differ only by time-discretization and solver error.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::motility::{compute_k0, MotilitySpec};
use crate::stepper::SimState;

/// Sample of every monitored functional at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt_used: f64,
    pub mass: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub energy: f64,
    pub l2_u: f64,
    pub l2_v: f64,
    pub cross: f64,
    pub linf_u: f64,
    pub linf_v: f64,
    pub grad_v_l2: f64,
    pub diss_gamma: f64,
    pub diss_cross: f64,
}

impl DiagnosticsRecord {
    /// Column names in file order.
    pub const COLUMNS: [&'static str; 16] = [
        "t",
        "dt_used",
        "mass",
        "u_min",
        "u_max",
        "v_min",
        "v_max",
        "E",
        "l2_u",
        "l2_v",
        "cross",
        "linf_u",
        "linf_v",
        "grad_v_l2",
        "diss_gamma",
        "diss_cross",
    ];

    pub fn to_row(&self) -> [f64; 16] {
        [
            self.t,
            self.dt_used,
            self.mass,
            self.u_min,
            self.u_max,
            self.v_min,
            self.v_max,
            self.energy,
            self.l2_u,
            self.l2_v,
            self.cross,
            self.linf_u,
            self.linf_v,
            self.grad_v_l2,
            self.diss_gamma,
            self.diss_cross,
        ]
    }

    pub fn from_row(r: &[f64; 16]) -> Self {
        Self {
            t: r[0],
            dt_used: r[1],
            mass: r[2],
            u_min: r[3],
            u_max: r[4],
            v_min: r[5],
            v_max: r[6],
            energy: r[7],
            l2_u: r[8],
            l2_v: r[9],
            cross: r[10],
            linf_u: r[11],
            linf_v: r[12],
            grad_v_l2: r[13],
            diss_gamma: r[14],
            diss_cross: r[15],
        }
    }

    pub fn compute(
        s: &SimState,
        spec: &MotilitySpec,
        grid: &Grid2D,
        dt_used: f64,
    ) -> Result<Self> {
        let q = Quadratures::compute(s, spec, grid)?;
        Ok(Self {
            t: s.t,
            dt_used,
            mass: q.mass,
            u_min: s.u.min(),
            u_max: s.u.max(),
            v_min: s.v.min(),
            v_max: s.v.max(),
            energy: q.energy,
            l2_u: q.l2_u,
            l2_v: q.l2_v,
            cross: q.cross,
            linf_u: s.u.max_deviation(1.0),
            linf_v: s.v.max_deviation(1.0),
            grad_v_l2: q.grad_v_l2,
            diss_gamma: q.diss_gamma,
            diss_cross: q.diss_cross,
        })
    }

    /// `u` lies strictly inside `(1/2, 3/2)` everywhere.
    pub fn in_near_equilibrium_band(&self) -> bool {
        self.u_min > 0.5 && self.u_max < 1.5
    }

    pub fn quantity(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Energy => self.energy,
            Quantity::L2U => self.l2_u,
            Quantity::LinfU => self.linf_u,
            Quantity::LinfV => self.linf_v,
        }
    }
}

/// Time-ordered diagnostics of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsSeries {
    pub fn push(&mut self, r: DiagnosticsRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&DiagnosticsRecord> {
        self.records.last()
    }

    pub fn samples(&self, q: Quantity) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, r.quantity(q))).collect()
    }

    /// Checks that `E` never increases by more than `1e-9 (1 + E)` between
    /// consecutive samples once `u` has entered `(1/2, 3/2)` everywhere.
    /// Returns the first offending sample index, if any.
    pub fn energy_monotone_violation(&self) -> Option<usize> {
        let start = self.records.iter().position(|r| r.in_near_equilibrium_band())?;
        self.records[start..]
            .windows(2)
            .position(|w| w[1].energy > w[0].energy + ENERGY_MONOTONE_TOL * (1.0 + w[0].energy))
            .map(|k| start + k + 1)
    }

    pub fn energy_monotone(&self) -> bool {
        self.energy_monotone_violation().is_none()
    }
}

/// Relative slack for sampled energy monotonicity.
pub const ENERGY_MONOTONE_TOL: f64 = 1e-9;

/// `u - 1 - ln u` without cancellation near `u = 1`.
#[inline]
pub fn phi(u: f64) -> f64 {
    let d = u - 1.0;
    d - d.ln_1p()
}

fn first_nonpositive(u: &Field) -> Option<usize> {
    u.values().iter().position(|&x| !(x > 0.0))
}

/// `E = int (u - 1 - ln u)`; requires `u > 0` everywhere.
pub fn lyapunov_e(u: &Field, grid: &Grid2D) -> Result<f64> {
    if u.len() != grid.len() {
        return Err(Error::Configuration(format!(
            "field has {} cells, grid has {}",
            u.len(),
            grid.len()
        )));
    }
    if let Some(k) = first_nonpositive(u) {
        return Err(Error::Domain(format!(
            "Lyapunov energy needs u > 0; cell {k} (i = {}, j = {}) holds {}",
            k % grid.nx(),
            k / grid.nx(),
            u.values()[k]
        )));
    }
    Ok(grid.cell_area() * u.values().iter().map(|&x| phi(x)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Quadratures {
    mass: f64,
    energy: f64,
    l2_u: f64,
    l2_v: f64,
    cross: f64,
    grad_v_l2: f64,
    diss_gamma: f64,
    diss_cross: f64,
}

impl Quadratures {
    fn compute(s: &SimState, spec: &MotilitySpec, grid: &Grid2D) -> Result<Self> {
        let energy = lyapunov_e(&s.u, grid)?;
        if s.v.len() != grid.len() {
            return Err(Error::Configuration("signal field does not match grid".into()));
        }
        let (u, v) = (s.u.values(), s.v.values());
        let area = grid.cell_area();
        let (mut mass, mut l2_u, mut l2_v, mut cross) = (0.0, 0.0, 0.0, 0.0);
        for (&a, &b) in u.iter().zip(v) {
            mass += a;
            l2_u += (a - 1.0) * (a - 1.0);
            l2_v += (b - 1.0) * (b - 1.0);
            cross += (a - 1.0) * (b - 1.0);
        }

        let (mut grad_v_l2, mut diss_gamma, mut diss_cross) = (0.0, 0.0, 0.0);
        let mut bad = None;
        let mut face = |kl: usize, kr: usize, h: f64| {
            let (ul, ur, vl, vr) = (u[kl], u[kr], v[kl], v[kr]);
            let gu = (ur - ul) / h;
            let gv = (vr - vl) / h;
            let m = spec.eval_unchecked((0.5 * (vl + vr)).max(0.0));
            if !(m.gamma > 0.0 && m.gamma.is_finite()) && bad.is_none() {
                bad = Some(m.gamma);
            }
            let w = m.chi * gv;
            let donor = if w >= 0.0 { ul } else { ur };
            let inv = 1.0 / (ul * ur);
            grad_v_l2 += gv * gv;
            diss_gamma += m.gamma * gu * gu * inv;
            diss_cross += m.chi * gu * gv * donor * inv;
        };
        let nx = grid.nx();
        for j in 0..grid.ny() {
            for i in 1..nx {
                let k = grid.index(i, j);
                face(k - 1, k, grid.hx());
            }
        }
        for j in 1..grid.ny() {
            for i in 0..nx {
                let k = grid.index(i, j);
                face(k - nx, k, grid.hy());
            }
        }
        if let Some(g) = bad {
            return Err(Error::ModelValidity(format!(
                "gamma = {g} on a face while evaluating dissipation"
            )));
        }
        Ok(Self {
            mass: area * mass,
            energy,
            l2_u: area * l2_u,
            l2_v: area * l2_v,
            cross: area * cross,
            grad_v_l2: area * grad_v_l2,
            diss_gamma: area * diss_gamma,
            diss_cross: area * diss_cross,
        })
    }
}

/// Energy-dissipation decomposition at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationTerms {
    pub delta: f64,
    /// `-diss_gamma - delta grad_v_l2 + diss_cross`.
    pub i1: f64,
    /// `-mu l2_u - delta l2_v + delta cross`.
    pub i2: f64,
    pub diss_gamma: f64,
    pub diss_cross: f64,
    pub grad_v_l2: f64,
    pub l2_u: f64,
    pub l2_v: f64,
    pub cross: f64,
    /// `grad_v_l2 + l2_v - cross`; zero for an exact signal solve.
    pub weak_form_residual: f64,
}

impl DissipationTerms {
    pub fn total(&self) -> f64 {
        self.i1 + self.i2
    }
}

pub fn dissipation_terms(
    s: &SimState,
    spec: &MotilitySpec,
    mu: f64,
    delta: f64,
    grid: &Grid2D,
) -> Result<DissipationTerms> {
    let q = Quadratures::compute(s, spec, grid)?;
    Ok(DissipationTerms {
        delta,
        i1: -q.diss_gamma - delta * q.grad_v_l2 + q.diss_cross,
        i2: -mu * q.l2_u - delta * q.l2_v + delta * q.cross,
        diss_gamma: q.diss_gamma,
        diss_cross: q.diss_cross,
        grad_v_l2: q.grad_v_l2,
        l2_u: q.l2_u,
        l2_v: q.l2_v,
        cross: q.cross,
        weak_form_residual: q.grad_v_l2 + q.l2_v - q.cross,
    })
}

/// Whether `mu` clears the `K0 / 16` threshold, and a coupling weight `delta`
/// that makes both quadratic forms of the energy argument definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCheck {
    pub k0: f64,
    pub mu: f64,
    pub feasible: bool,
    /// Midpoint of `[K0/4, 4 mu)` when feasible, otherwise `K0/4`.
    pub delta_chosen: f64,
    pub threshold: f64,
}

impl StabilityCheck {
    pub fn from_k0(k0: f64, mu: f64) -> Self {
        let threshold = k0 / 16.0;
        let feasible = mu > threshold;
        let lower = k0 / 4.0;
        let delta_chosen = if feasible { (lower + 4.0 * mu) / 2.0 } else { lower };
        Self {
            k0,
            mu,
            feasible,
            delta_chosen,
            threshold,
        }
    }

    /// `delta >= K0 / 4`: the gradient form is non-negative definite.
    pub fn gradient_form_ok(&self) -> bool {
        self.delta_chosen >= self.k0 / 4.0
    }

    /// `mu > delta / 4`: the deviation form is positive definite.
    pub fn deviation_form_ok(&self) -> bool {
        self.mu > self.delta_chosen / 4.0
    }
}

/// Samples used for the `K0` scan inside [`check_stability`].
pub const STABILITY_K0_SAMPLES: usize = 10_000;

pub fn check_stability(spec: &MotilitySpec, mu: f64, v_max: f64) -> Result<StabilityCheck> {
    if !(mu >= 0.0) {
        return Err(Error::Configuration(format!("mu must be >= 0, got {mu}")));
    }
    let report = compute_k0(spec, v_max, STABILITY_K0_SAMPLES)?;
    Ok(StabilityCheck::from_k0(report.k0_estimate, mu))
}

/// Cells closer than this to `u = 1` are skipped by [`sandwich_check`].
pub const SANDWICH_EXCLUSION: f64 = 1e-12;

/// Range of `phi(u) / (u - 1)^2` over the cells; `u` must lie in `(1/2, 3/2)`.
/// Returns `(1/2, 1/2)`, the limit at `u = 1`, when every cell is excluded.
pub fn sandwich_check(u: &Field) -> Result<(f64, f64)> {
    if let Some(k) = u.values().iter().position(|&x| !(x > 0.5 && x < 1.5)) {
        return Err(Error::Domain(format!(
            "sandwich bound needs u in (1/2, 3/2); cell {k} holds {}",
            u.values()[k]
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in u.values() {
        let d = x - 1.0;
        if d.abs() < SANDWICH_EXCLUSION {
            continue;
        }
        let r = phi(x) / (d * d);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if lo > hi {
        return Ok((0.5, 0.5));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Energy,
    L2U,
    LinfU,
    LinfV,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Energy => "E",
            Quantity::L2U => "l2_u",
            Quantity::LinfU => "linf_u",
            Quantity::LinfV => "linf_v",
        }
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" => Ok(Quantity::Energy),
            "l2_u" => Ok(Quantity::L2U),
            "linf_u" => Ok(Quantity::LinfU),
            "linf_v" => Ok(Quantity::LinfV),
            other => Err(Error::Configuration(format!(
                "unknown quantity `{other}` (expected E, l2_u, linf_u or linf_v)"
            ))),
        }
    }
}

/// Least-squares line through `(t, ln value)` on the tail window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// `-slope`, per unit time.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub quantity: Option<Quantity>,
}

pub const MIN_FIT_SAMPLES: usize = 20;
pub const MIN_WINDOW_SAMPLES: usize = 10;

/// Fits `value ~ exp(intercept - rate t)` on the last `window_fraction` of the time span.
pub fn fit_decay_rate(series: &[(f64, f64)], window_fraction: f64) -> Result<DecayFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Fit(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    if series.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            series.len()
        )));
    }
    let t0 = series[0].0;
    let t1 = series[series.len() - 1].0;
    let t_lo = t1 - window_fraction * (t1 - t0);
    let window: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| t >= t_lo).collect();
    if window.len() < MIN_WINDOW_SAMPLES {
        return Err(Error::Fit(format!(
            "fit window [{t_lo}, {t1}] holds {} samples, need {MIN_WINDOW_SAMPLES}",
            window.len()
        )));
    }
    if let Some(&(t, y)) = window.iter().find(|&&(_, y)| !(y > 0.0 && y.is_finite())) {
        return Err(Error::Fit(format!(
            "value {y} at t = {t} is not positive: converged below measurable"
        )));
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = window.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &window {
        let (dt, dy) = (t - mean_t, y.ln() - mean_y);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::Fit("fit window spans zero time".into()));
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let ss_res: f64 = window
        .iter()
        .map(|&(t, y)| {
            let e = y.ln() - (intercept + slope * t);
            e * e
        })
        .sum();
    // a flat series is fitted perfectly by a zero slope
    let r_squared = if syy <= f64::EPSILON * n * mean_y.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        rate: -slope,
        intercept,
        r_squared,
        window: (window[0].0, t1),
        samples: window.len(),
        quantity: None,
    })
}

/// [`fit_decay_rate`] applied to one column of a diagnostics series.
pub fn fit_quantity(
    series: &DiagnosticsSeries,
    quantity: Quantity,
    window_fraction: f64,
) -> Result<DecayFit> {
    let mut fit = fit_decay_rate(&series.samples(quantity), window_fraction)?;
    fit.quantity = Some(quantity);
    Ok(fit)
}
