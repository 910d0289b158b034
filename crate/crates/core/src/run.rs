//! Orchestration: initial state, time loop, sampling, outputs.

use std::path::{Path, PathBuf};

use crate::config::SimConfig;
use crate::diagnostics::{DiagnosticsRecord, DiagnosticsSeries};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::io::{write_snapshot, DiagnosticsWriter};
use crate::stepper::{SimState, Stepper};

/// Why the time loop stopped.
#[derive(Debug)]
pub enum Termination {
    /// `max |u - 1| < conv_tol` held for `conv_patience` consecutive samples.
    Converged,
    /// Reached `t_end` without the detector firing.
    ReachedEnd,
    Failed(Error),
}

/// Everything a run produced, including partial results of a failed run.
#[derive(Debug)]
pub struct RunReport {
    /// Last accepted state.
    pub state: SimState,
    pub series: DiagnosticsSeries,
    pub termination: Termination,
    /// `max u` at `t = 0`.
    pub u0_max: f64,
    /// Largest `max u` over all accepted steps.
    pub u_max_running: f64,
    /// Smallest `min u` over all accepted steps.
    pub u_min_running: f64,
    pub steps: u64,
    pub rejections: u64,
    pub solver_iterations: u64,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Converged)
    }

    pub fn error(&self) -> Option<&Error> {
        match &self.termination {
            Termination::Failed(e) => Some(e),
            _ => None,
        }
    }

    pub fn into_result(self) -> Result<(SimState, DiagnosticsSeries)> {
        match self.termination {
            Termination::Failed(e) => Err(e),
            _ => Ok((self.state, self.series)),
        }
    }
}

const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
const CONFIG_FILE: &str = "config.cfg";

/// Runs `cfg`, writing outputs to `cfg.output.dir`.
pub fn run(cfg: &SimConfig) -> Result<(SimState, DiagnosticsSeries)> {
    simulate(cfg, Some(&cfg.output.dir), |_, _| {})?.into_result()
}

/// Runs `cfg`. Outputs go to `out_dir` when given. `observe` sees every
/// accepted state together with the step that produced it.
///
/// Setup errors (invalid config, bad initial state, unwritable directory)
/// are returned directly; failures during time stepping are reported in
/// the [`RunReport`] after partial outputs have been flushed.
pub fn simulate(
    cfg: &SimConfig,
    out_dir: Option<&Path>,
    mut observe: impl FnMut(&SimState, f64),
) -> Result<RunReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let spec = cfg.motility_spec()?;
    let opts = cfg.solver_options();
    let u0 = cfg.initial_density(&grid);
    let u0_max = u0.max();
    let mut state = SimState::from_density(u0, &grid, &opts)?;
    let mut stepper = Stepper::new(grid, spec.clone(), cfg.mu, cfg.step_control(), opts)?;

    let mut out = match out_dir {
        Some(dir) => Some(Outputs::create(dir, cfg)?),
        None => None,
    };
    log::info!(
        "run: {}x{} grid, mu = {}, motility {}, t_end = {}",
        grid.nx(),
        grid.ny(),
        cfg.mu,
        spec.describe(),
        cfg.time.t_end
    );

    let every = cfg.output.every;
    let t_end = cfg.time.t_end;
    let limit = cfg.guard.blowup_factor * u0_max;
    let mut series = DiagnosticsSeries::default();
    let mut u_max_running = u0_max;
    let mut u_min_running = state.u.min();
    let mut streak = 0usize;
    let mut sample_index = 0u64;
    let mut snap_index = 0u64;
    let mut last_dt = 0.0;

    let sample = |state: &SimState,
                  dt: f64,
                  series: &mut DiagnosticsSeries,
                  out: &mut Option<Outputs>|
     -> Result<DiagnosticsRecord> {
        let rec = DiagnosticsRecord::compute(state, &spec, &grid, dt)?;
        series.push(rec);
        if let Some(o) = out.as_mut() {
            o.diagnostics.write(&rec)?;
        }
        log::debug!(
            "t = {:.6} E = {:.6e} linf_u = {:.3e} mass = {:.12}",
            rec.t,
            rec.energy,
            rec.linf_u,
            rec.mass
        );
        Ok(rec)
    };

    let looped: Result<Termination> = (|| {
        if let Some(o) = out.as_mut() {
            o.snapshot(&state, &grid, &mut snap_index, cfg)?;
        }
        loop {
            let rec = sample(&state, last_dt, &mut series, &mut out)?;
            streak = if rec.linf_u < cfg.output.conv_tol { streak + 1 } else { 0 };
            if streak >= cfg.output.conv_patience {
                return Ok(Termination::Converged);
            }
            if state.t >= t_end {
                return Ok(Termination::ReachedEnd);
            }
            sample_index += 1;
            let target = (sample_index as f64 * every).min(t_end);
            while state.t < target {
                let remaining = target - state.t;
                if remaining <= 1e-12 * target.max(1.0) {
                    state.t = target;
                    break;
                }
                last_dt = stepper.advance(&mut state, remaining)?;
                if last_dt >= remaining {
                    state.t = target;
                }
                let m = state.u.max();
                u_max_running = u_max_running.max(m);
                u_min_running = u_min_running.min(state.u.min());
                if !(m <= limit) {
                    return Err(Error::BlowUp {
                        t: state.t,
                        u_max: m,
                        limit,
                    });
                }
                observe(&state, last_dt);
            }
            if let Some(o) = out.as_mut() {
                if o.snapshot_due(state.t, cfg) {
                    o.snapshot(&state, &grid, &mut snap_index, cfg)?;
                }
            }
        }
    })();

    let termination = match looped {
        Ok(t) => t,
        Err(e) => Termination::Failed(e),
    };
    if let Some(o) = out.as_mut() {
        let flushed = o.finish(&state, &grid, &termination, cfg);
        if let (Err(e), false) = (flushed, matches!(termination, Termination::Failed(_))) {
            return Err(e);
        }
    }
    match &termination {
        Termination::Converged => log::info!("converged at t = {}", state.t),
        Termination::ReachedEnd => log::info!("reached t_end = {}", state.t),
        Termination::Failed(e) => log::warn!("run stopped at t = {}: {e}", state.t),
    }
    Ok(RunReport {
        series,
        termination,
        u0_max,
        u_max_running,
        u_min_running,
        steps: state.step,
        state,
        rejections: stepper.rejections,
        solver_iterations: stepper.solver_iterations,
    })
}

struct Outputs {
    dir: PathBuf,
    diagnostics: DiagnosticsWriter,
    next_snapshot: f64,
}

impl Outputs {
    fn create(dir: &Path, cfg: &SimConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg_path = dir.join(CONFIG_FILE);
        std::fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            diagnostics: DiagnosticsWriter::create(&dir.join(DIAGNOSTICS_FILE))?,
            next_snapshot: cfg.output.snapshot_every,
        })
    }

    fn snapshot_due(&self, t: f64, cfg: &SimConfig) -> bool {
        cfg.output.snapshots && cfg.output.snapshot_every > 0.0 && t >= self.next_snapshot
    }

    fn snapshot(&mut self, s: &SimState, grid: &Grid2D, index: &mut u64, cfg: &SimConfig) -> Result<()> {
        if !cfg.output.snapshots {
            return Ok(());
        }
        write_snapshot(s, grid, &self.dir.join(format!("snapshot_{:05}.ksms", *index)))?;
        *index += 1;
        if cfg.output.snapshot_every > 0.0 {
            while self.next_snapshot <= s.t {
                self.next_snapshot += cfg.output.snapshot_every;
            }
        }
        Ok(())
    }

    fn finish(&mut self, s: &SimState, grid: &Grid2D, term: &Termination, cfg: &SimConfig) -> Result<()> {
        self.diagnostics.flush()?;
        if let Termination::Failed(Error::StepSizeCollapse { state, .. }) = term {
            write_snapshot(state, grid, &self.dir.join("collapse.ksms"))?;
        }
        if cfg.output.snapshots {
            write_snapshot(s, grid, &self.dir.join("final.ksms"))?;
        }
        Ok(())
    }
}
