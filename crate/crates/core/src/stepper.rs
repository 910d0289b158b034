//! Explicit finite-volume stepping of the cell density.
//!
//! The density equation is advanced in flux form,
//! `u_t = div(gamma(v) grad u - u chi(v) grad v) + mu u (1 - u)`,
//! with the signal re-solved from `(I - L) v = u` after every stage.
//!
//! On a face between cells `L` and `R` the flux is
//! `J = gamma(v_f) du/dn - u_up w`, `w = chi(v_f) dv/dn`, where `v_f` is the
//! mean of the two cell values and `u_up` is the donor cell for the mass
//! velocity `w` (`L` when `w >= 0`). Boundary faces carry no flux, so with
//! `mu = 0` the scheme conserves mass to round-off.

use crate::elliptic::{EllipticSolveOptions, EllipticSolver};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::motility::MotilitySpec;

/// Full dynamical state. `v` is the elliptic solve of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: Field,
    pub v: Field,
    pub t: f64,
    pub step: u64,
    pub v_running_max: f64,
}

impl SimState {
    /// Builds a consistent state by solving for `v`.
    pub fn from_density(u: Field, grid: &Grid2D, opts: &EllipticSolveOptions) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(Error::Configuration(format!(
                "initial density has {} cells, grid has {}",
                u.len(),
                grid.len()
            )));
        }
        if let Some(k) = u.values().iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Domain(format!(
                "initial density must be positive and finite; cell {k} holds {}",
                u.values()[k]
            )));
        }
        let mut v = u.clone();
        EllipticSolver::new(*grid).solve_into(&u, &mut v, opts)?;
        let v_running_max = v.max();
        Ok(Self {
            u,
            v,
            t: 0.0,
            step: 0,
            v_running_max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    /// Two-stage SSP Runge-Kutta (Heun).
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositivityPolicy {
    /// A step producing `min u <= 0` is discarded and retried with `dt / 2`.
    RejectAndHalve,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub safety: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub integrator: Integrator,
    pub positivity_policy: PositivityPolicy,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            safety: 0.4,
            dt_max: 0.1,
            dt_min: 1e-12,
            integrator: Integrator::Heun,
            positivity_policy: PositivityPolicy::RejectAndHalve,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Configuration(format!(
                "safety must lie in (0, 1], got {}",
                self.safety
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max && self.dt_max.is_finite()) {
            return Err(Error::Configuration(format!(
                "need 0 < dt_min < dt_max < inf, got dt_min = {}, dt_max = {}",
                self.dt_min, self.dt_max
            )));
        }
        Ok(())
    }
}

/// Per-face transport coefficients of one state.
#[derive(Debug, Clone, Default)]
struct FaceCoefficients {
    /// `gamma(v_f)` on interior x-faces, stored at the index of the right cell.
    gamma_x: Vec<f64>,
    /// Mass velocity `w = chi(v_f) dv/dx`.
    w_x: Vec<f64>,
    gamma_y: Vec<f64>,
    w_y: Vec<f64>,
    gamma_max: f64,
    w_max: f64,
}

impl FaceCoefficients {
    fn new(n: usize) -> Self {
        Self {
            gamma_x: vec![0.0; n],
            w_x: vec![0.0; n],
            gamma_y: vec![0.0; n],
            w_y: vec![0.0; n],
            gamma_max: 0.0,
            w_max: 0.0,
        }
    }

    fn assemble(&mut self, grid: &Grid2D, spec: &MotilitySpec, v: &[f64]) -> Result<()> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (hx, hy) = (grid.hx(), grid.hy());
        let mut gamma_max: f64 = 0.0;
        let mut w_max: f64 = 0.0;
        let mut bad = None;
        let mut face = |vl: f64, vr: f64, h: f64| -> (f64, f64) {
            // the mean can dip below zero only through solver round-off
            let vf = (0.5 * (vl + vr)).max(0.0);
            let m = spec.eval_unchecked(vf);
            if !(m.gamma > 0.0 && m.gamma.is_finite() && m.chi.is_finite()) && bad.is_none() {
                bad = Some((vf, m.gamma));
            }
            let w = m.chi * (vr - vl) / h;
            gamma_max = gamma_max.max(m.gamma);
            w_max = w_max.max(w.abs());
            (m.gamma, w)
        };
        for j in 0..ny {
            let row = j * nx;
            for i in 1..nx {
                let k = row + i;
                let (g, w) = face(v[k - 1], v[k], hx);
                self.gamma_x[k] = g;
                self.w_x[k] = w;
            }
        }
        for j in 1..ny {
            let row = j * nx;
            for i in 0..nx {
                let k = row + i;
                let (g, w) = face(v[k - nx], v[k], hy);
                self.gamma_y[k] = g;
                self.w_y[k] = w;
            }
        }
        if let Some((vf, g)) = bad {
            return Err(Error::ModelValidity(format!(
                "gamma({vf}) = {g} on a face; motility must stay positive and finite ({})",
                spec.describe()
            )));
        }
        self.gamma_max = gamma_max;
        self.w_max = w_max;
        Ok(())
    }

    /// `out = div J + mu u (1 - u)`.
    fn rhs(&self, grid: &Grid2D, mu: f64, u: &[f64], out: &mut [f64]) {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
        for (o, &uk) in out.iter_mut().zip(u) {
            *o = mu * uk * (1.0 - uk);
        }
        for j in 0..ny {
            let row = j * nx;
            for i in 1..nx {
                let k = row + i;
                let (ul, ur) = (u[k - 1], u[k]);
                let w = self.w_x[k];
                let donor = if w >= 0.0 { ul } else { ur };
                let flux = (self.gamma_x[k] * (ur - ul) * ihx - donor * w) * ihx;
                out[k - 1] += flux;
                out[k] -= flux;
            }
        }
        for j in 1..ny {
            let row = j * nx;
            for i in 0..nx {
                let k = row + i;
                let (ul, ur) = (u[k - nx], u[k]);
                let w = self.w_y[k];
                let donor = if w >= 0.0 { ul } else { ur };
                let flux = (self.gamma_y[k] * (ur - ul) * ihy - donor * w) * ihy;
                out[k - nx] += flux;
                out[k] -= flux;
            }
        }
    }

    fn stable_dt(&self, grid: &Grid2D, mu: f64, u_max: f64, ctl: &StepControl) -> f64 {
        let h = grid.h_min();
        let diffusive = if self.gamma_max > 0.0 {
            h * h / (4.0 * self.gamma_max)
        } else {
            f64::INFINITY
        };
        let advective = if self.w_max > 0.0 { h / self.w_max } else { f64::INFINITY };
        let reaction = if mu > 0.0 { 1.0 / (mu * u_max.max(1.0)) } else { f64::INFINITY };
        ctl.safety * diffusive.min(advective).min(reaction)
    }
}

fn check_state(s: &SimState, grid: &Grid2D) -> Result<()> {
    if s.u.len() != grid.len() || s.v.len() != grid.len() {
        return Err(Error::Configuration(format!(
            "state fields ({}, {}) do not match grid of {} cells",
            s.u.len(),
            s.v.len(),
            grid.len()
        )));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Configuration(format!("mu must be finite and >= 0, got {mu}")));
    }
    Ok(())
}

/// Discrete right-hand side of the density equation at a consistent state.
pub fn compute_rhs(s: &SimState, spec: &MotilitySpec, mu: f64, grid: &Grid2D) -> Result<Field> {
    check_state(s, grid)?;
    check_mu(mu)?;
    let mut fc = FaceCoefficients::new(grid.len());
    fc.assemble(grid, spec, s.v.values())?;
    let mut out = Field::zeros(grid);
    fc.rhs(grid, mu, s.u.values(), out.values_mut());
    Ok(out)
}

/// Largest admissible explicit step, clipped to `[dt_min, dt_max]`.
pub fn stable_dt(
    s: &SimState,
    spec: &MotilitySpec,
    mu: f64,
    grid: &Grid2D,
    ctl: &StepControl,
) -> Result<f64> {
    check_state(s, grid)?;
    check_mu(mu)?;
    ctl.validate()?;
    let mut fc = FaceCoefficients::new(grid.len());
    fc.assemble(grid, spec, s.v.values())?;
    let dt = fc.stable_dt(grid, mu, s.u.max(), ctl);
    if dt < ctl.dt_min {
        return Err(collapse(s, dt, ctl));
    }
    Ok(dt.min(ctl.dt_max))
}

fn collapse(s: &SimState, dt: f64, ctl: &StepControl) -> Error {
    Error::StepSizeCollapse {
        t: s.t,
        dt,
        dt_min: ctl.dt_min,
        state: Box::new(s.clone()),
    }
}

/// Advances one accepted step.
pub fn step(
    s: &SimState,
    spec: &MotilitySpec,
    mu: f64,
    grid: &Grid2D,
    ctl: &StepControl,
    opts: &EllipticSolveOptions,
) -> Result<SimState> {
    let mut stepper = Stepper::new(*grid, spec.clone(), mu, *ctl, *opts)?;
    let mut next = s.clone();
    stepper.advance(&mut next, f64::INFINITY)?;
    Ok(next)
}

/// Stepping workspace reused across steps of one run.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid2D,
    spec: MotilitySpec,
    mu: f64,
    ctl: StepControl,
    opts: EllipticSolveOptions,
    solver: EllipticSolver,
    faces: FaceCoefficients,
    rhs0: Vec<f64>,
    rhs1: Vec<f64>,
    u_stage: Field,
    v_stage: Field,
    u_new: Field,
    /// Signal before the last accepted step, for extrapolated initial guesses.
    v_prev: Field,
    guess: Field,
    /// `(step, t, dt)` of the last state this stepper produced.
    last_out: Option<(u64, f64, f64)>,
    /// Rejections since construction.
    pub rejections: u64,
    /// CG iterations since construction.
    pub solver_iterations: u64,
}

impl Stepper {
    pub fn new(
        grid: Grid2D,
        spec: MotilitySpec,
        mu: f64,
        ctl: StepControl,
        opts: EllipticSolveOptions,
    ) -> Result<Self> {
        check_mu(mu)?;
        ctl.validate()?;
        opts.validate()?;
        spec.validate()?;
        let n = grid.len();
        Ok(Self {
            grid,
            spec,
            mu,
            ctl,
            opts,
            solver: EllipticSolver::new(grid),
            faces: FaceCoefficients::new(n),
            rhs0: vec![0.0; n],
            rhs1: vec![0.0; n],
            u_stage: Field::zeros(&grid),
            v_stage: Field::zeros(&grid),
            u_new: Field::zeros(&grid),
            v_prev: Field::zeros(&grid),
            guess: Field::zeros(&grid),
            last_out: None,
            rejections: 0,
            solver_iterations: 0,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Solves for `v` given `u`. With warm starts the guess is `guess`, or the
    /// incoming `v` when `guess` is `None`.
    fn solve(&mut self, u: &Field, v: &mut Field, guess: Option<&Field>) -> Result<()> {
        match (self.opts.warm_start, guess) {
            (true, Some(g)) => v.values_mut().copy_from_slice(g.values()),
            (true, None) => {}
            (false, _) => v.values_mut().copy_from_slice(u.values()),
        }
        let stats = self.solver.solve_into(u, v, &self.opts)?;
        self.solver_iterations += stats.iterations as u64;
        Ok(())
    }

    /// Advances `s` by one accepted step of length at most `dt_cap`.
    /// Returns the step length used.
    pub fn advance(&mut self, s: &mut SimState, dt_cap: f64) -> Result<f64> {
        check_state(s, &self.grid)?;
        let grid = self.grid;
        self.faces.assemble(&grid, &self.spec, s.v.values())?;
        let dt_stable = self.faces.stable_dt(&grid, self.mu, s.u.max(), &self.ctl);
        if dt_stable < self.ctl.dt_min {
            return Err(collapse(s, dt_stable, &self.ctl));
        }
        let mut dt = dt_stable.min(self.ctl.dt_max).min(dt_cap);
        self.faces.rhs(&grid, self.mu, s.u.values(), &mut self.rhs0);
        // extrapolate only when continuing our own trajectory
        let dt_prev = match self.last_out {
            Some((step, t, dt_prev)) if step == s.step && t == s.t => Some(dt_prev),
            _ => None,
        };

        loop {
            match self.try_step(s, dt, dt_prev)? {
                true => break,
                false => {
                    self.rejections += 1;
                    dt *= 0.5;
                    if dt < self.ctl.dt_min {
                        return Err(collapse(s, dt, &self.ctl));
                    }
                }
            }
        }
        std::mem::swap(&mut s.u, &mut self.u_new);
        // v_stage now holds the solve for the accepted u
        std::mem::swap(&mut s.v, &mut self.v_stage);
        std::mem::swap(&mut self.v_prev, &mut self.v_stage);
        s.t += dt;
        s.step += 1;
        s.v_running_max = s.v_running_max.max(s.v.max());
        self.last_out = Some((s.step, s.t, dt));
        Ok(dt)
    }

    /// One attempt with step `dt`; `false` when positivity failed.
    /// On success `u_new` and `v_stage` hold the new state. With `dt_prev`
    /// the first solve starts from the linear extrapolation through
    /// `v_prev` and `s.v`.
    fn try_step(&mut self, s: &SimState, dt: f64, dt_prev: Option<f64>) -> Result<bool> {
        let grid = self.grid;
        let u0 = s.u.values();
        {
            let us = self.u_stage.values_mut();
            for k in 0..u0.len() {
                us[k] = u0[k] + dt * self.rhs0[k];
            }
        }
        if !(self.u_stage.min() > 0.0) {
            return Ok(false);
        }
        let mut v_stage = std::mem::replace(&mut self.v_stage, Field::zeros(&grid));
        let u_stage = std::mem::replace(&mut self.u_stage, Field::zeros(&grid));
        let mut guess = std::mem::replace(&mut self.guess, Field::zeros(&grid));
        let g = match dt_prev {
            Some(dp) => {
                let ratio = dt / dp;
                let (v, vp) = (s.v.values(), self.v_prev.values());
                for (k, x) in guess.values_mut().iter_mut().enumerate() {
                    *x = v[k] + ratio * (v[k] - vp[k]);
                }
                &guess
            }
            None => &s.v,
        };
        let solved = self.solve(&u_stage, &mut v_stage, Some(g));
        self.guess = guess;
        self.u_stage = u_stage;
        self.v_stage = v_stage;
        solved?;

        match self.ctl.integrator {
            Integrator::Euler => {
                self.u_new.values_mut().copy_from_slice(self.u_stage.values());
                Ok(true)
            }
            Integrator::Heun => {
                self.faces.assemble(&grid, &self.spec, self.v_stage.values())?;
                self.faces.rhs(&grid, self.mu, self.u_stage.values(), &mut self.rhs1);
                {
                    let un = self.u_new.values_mut();
                    let half = 0.5 * dt;
                    for k in 0..u0.len() {
                        un[k] = u0[k] + half * (self.rhs0[k] + self.rhs1[k]);
                    }
                }
                if !(self.u_new.min() > 0.0) {
                    return Ok(false);
                }
                let u_new = std::mem::replace(&mut self.u_new, Field::zeros(&grid));
                let mut v_stage = std::mem::replace(&mut self.v_stage, Field::zeros(&grid));
                let solved = self.solve(&u_new, &mut v_stage, None);
                self.u_new = u_new;
                self.v_stage = v_stage;
                solved?;
                Ok(true)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use std::f64::consts::PI;

    fn opts(grid: &Grid2D) -> EllipticSolveOptions {
        EllipticSolveOptions::for_grid(grid)
    }

    fn state(grid: &Grid2D, u: Field) -> SimState {
        SimState::from_density(u, grid, &opts(grid)).unwrap()
    }

    #[test]
    fn homogeneous_steady_state_is_a_fixed_point() {
        let g = Grid2D::new(16, 16, 4.0, 4.0).unwrap();
        let s = state(&g, Field::constant(&g, 1.0));
        assert!(s.v.values().iter().all(|&x| x == 1.0));
        let r = compute_rhs(&s, &MotilitySpec::default_pair(), 1.0, &g).unwrap();
        assert!(r.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_state_gives_pure_reaction() {
        let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let c = 1.7;
        let s = state(&g, Field::constant(&g, c));
        let r = compute_rhs(&s, &MotilitySpec::default_pair(), 0.8, &g).unwrap();
        for &x in r.values() {
            assert_eq!(x, 0.8 * c * (1.0 - c));
        }
    }

    #[test]
    fn flux_part_is_conservative() {
        let g = Grid2D::new(24, 20, 4.0, 3.0).unwrap();
        let u = Field::from_fn(&g, |x, y| 1.0 + 0.6 * (1.3 * x).sin() * (0.7 * y + 0.2).cos());
        let s = state(&g, u);
        for spec in [
            MotilitySpec::default_pair(),
            MotilitySpec::ks_pair(MotilitySpec::exp_decay(2.0), 3.0),
            MotilitySpec::constant(0.5, 2.0),
        ] {
            let r = compute_rhs(&s, &spec, 0.0, &g).unwrap();
            let total = integrate(&r, &g).unwrap();
            assert!(total.abs() <= 1e-12 * s.u.max() * g.area(), "{total}");
        }
    }

    #[test]
    fn stable_dt_examples() {
        let g = Grid2D::new(100, 100, 1.0, 1.0).unwrap();
        let s = state(&g, Field::constant(&g, 1.0));
        let ctl = StepControl { safety: 0.9, dt_max: 1.0, dt_min: 1e-12, ..Default::default() };
        let dt = stable_dt(&s, &MotilitySpec::constant(1.0, 0.0), 0.0, &g, &ctl).unwrap();
        assert!((dt - 2.25e-5).abs() < 1e-18, "{dt}");

        let g = Grid2D::new(10, 10, 1.0, 1.0).unwrap();
        let s = state(&g, Field::constant(&g, 1.0));
        let ctl = StepControl { safety: 0.4, dt_max: 1.0, ..Default::default() };
        let dt = stable_dt(&s, &MotilitySpec::constant(1.0, 0.0), 1.0, &g, &ctl).unwrap();
        assert!((dt - 1e-3).abs() < 1e-15, "{dt}");

        let dt2 = stable_dt(&s, &MotilitySpec::constant(2.0, 0.0), 0.0, &g, &ctl).unwrap();
        let dt1 = stable_dt(&s, &MotilitySpec::constant(1.0, 0.0), 0.0, &g, &ctl).unwrap();
        assert_eq!(dt1, 2.0 * dt2);
    }

    #[test]
    fn stable_dt_collapse_and_clipping() {
        let g = Grid2D::new(10, 10, 1.0, 1.0).unwrap();
        let s = state(&g, Field::constant(&g, 1.0));
        let ctl = StepControl { safety: 0.4, dt_max: 1.0, dt_min: 0.5, ..Default::default() };
        let err = stable_dt(&s, &MotilitySpec::constant(1.0, 0.0), 0.0, &g, &ctl).unwrap_err();
        match err {
            Error::StepSizeCollapse { state, .. } => assert_eq!(*state, s),
            other => panic!("{other:?}"),
        }
        let ctl = StepControl { safety: 0.4, dt_max: 1e-4, dt_min: 1e-9, ..Default::default() };
        let dt = stable_dt(&s, &MotilitySpec::constant(1.0, 0.0), 0.0, &g, &ctl).unwrap();
        assert_eq!(dt, 1e-4);
    }

    #[test]
    fn fixed_point_survives_steps() {
        let g = Grid2D::new(12, 12, 4.0, 4.0).unwrap();
        let mut s = state(&g, Field::constant(&g, 1.0));
        let ctl = StepControl::default();
        for _ in 0..50 {
            s = step(&s, &MotilitySpec::default_pair(), 1.0, &g, &ctl, &opts(&g)).unwrap();
        }
        assert!(s.u.values().iter().all(|&x| x == 1.0));
        assert!(s.t > 0.0);
        assert_eq!(s.step, 50);
    }

    #[test]
    fn mass_conserved_without_growth() {
        let g = Grid2D::new(16, 16, 4.0, 4.0).unwrap();
        let u = Field::from_fn(&g, |x, y| 1.0 + 0.5 * (PI * x / 2.0).cos() * (PI * y / 4.0).cos());
        let mut s = state(&g, u);
        let m0 = integrate(&s.u, &g).unwrap();
        let mut stepper = Stepper::new(
            g,
            MotilitySpec::default_pair(),
            0.0,
            StepControl::default(),
            opts(&g),
        )
        .unwrap();
        for _ in 0..200 {
            let before = integrate(&s.u, &g).unwrap();
            stepper.advance(&mut s, f64::INFINITY).unwrap();
            let after = integrate(&s.u, &g).unwrap();
            assert!((after - before).abs() <= 1e-13 * before);
        }
        assert!((integrate(&s.u, &g).unwrap() - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn rejects_to_keep_positivity() {
        // steep spike with strong attraction; the plain stable dt overshoots
        let g = Grid2D::new(20, 20, 1.0, 1.0).unwrap();
        let u = Field::from_fn(&g, |x, y| {
            1e-6 + 40.0 * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.002).exp()
        });
        let mut s = state(&g, u);
        let spec = MotilitySpec::constant(0.05, 30.0);
        let ctl = StepControl { safety: 1.0, dt_max: 1.0, dt_min: 1e-14, integrator: Integrator::Euler, ..Default::default() };
        let mut stepper = Stepper::new(g, spec, 0.0, ctl, opts(&g)).unwrap();
        for _ in 0..20 {
            stepper.advance(&mut s, f64::INFINITY).unwrap();
            assert!(s.u.min() > 0.0);
        }
    }

    #[test]
    fn invalid_motility_is_reported() {
        let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let s = state(&g, Field::from_fn(&g, |x, _| 1.0 + 0.1 * x));
        let spec = MotilitySpec::ks_pair(MotilitySpec::PowerLaw { c0: 1.0, k: 1.0, v0_shift: 0.0 }, 0.0);
        assert!(compute_rhs(&s, &spec, 1.0, &g).is_ok());
        let s0 = SimState { v: Field::zeros(&g), ..s };
        assert!(matches!(compute_rhs(&s0, &spec, 1.0, &g), Err(Error::ModelValidity(_))));
    }
}
