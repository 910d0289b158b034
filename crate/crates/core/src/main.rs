use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ksmotility::config::{load_config, SimConfig};
use ksmotility::diagnostics::{fit_decay_rate, Quantity};
use ksmotility::io::read_csv_column;
use ksmotility::motility::{validate_h1, Boundedness};
use ksmotility::run::{simulate, Termination};
use ksmotility::sweep::{load_plan, run_sweep, Classification};
use ksmotility::{Error, Result};

/// Chemotaxis with signal-dependent motility: simulation, sweeps and diagnostics.
#[derive(Parser, Debug)]
#[command(name = "ksm", version)]
struct Cli {
    /// More log output; repeat for debug level. RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one configuration; writes diagnostics.csv and snapshots.
    Run {
        config: PathBuf,
        /// Output directory, overriding output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep and write regime_map.csv.
    Sweep {
        plan: PathBuf,
        /// Concurrent runs, overriding sweep.parallelism.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Fit an exponential decay rate to one column of a diagnostics CSV.
    Fit {
        csv: PathBuf,
        /// E, l2_u, linf_u or linf_v.
        #[arg(long, default_value = "E")]
        quantity: String,
        /// Fraction of the time span, counted from the end, used for the fit.
        #[arg(long, default_value_t = 0.5)]
        window: f64,
    },
    /// Report K0 = sup chi^2/gamma and the growth threshold K0/16.
    K0 { config: PathBuf },
    /// Validate a configuration without running it.
    CheckConfig { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Sweep { plan, parallelism } => cmd_sweep(&plan, parallelism),
        Command::Fit {
            csv,
            quantity,
            window,
        } => cmd_fit(&csv, &quantity, window),
        Command::K0 { config } => cmd_k0(&config),
        Command::CheckConfig { config } => {
            load_config(&config)?;
            println!("{}: ok", config.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_run(path: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut cfg = load_config(path)?;
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    let report = simulate(&cfg, Some(&cfg.output.dir), |_, _| {})?;
    let status = match &report.termination {
        Termination::Converged => "converged",
        Termination::ReachedEnd => "reached t_end",
        Termination::Failed(_) => "failed",
    };
    println!("status        {status}");
    println!("t             {}", report.state.t);
    println!("steps         {}", report.steps);
    println!("rejections    {}", report.rejections);
    println!("cg iterations {}", report.solver_iterations);
    if let Some(r) = report.series.last() {
        println!("linf_u        {:e}", r.linf_u);
        println!("E             {:e}", r.energy);
        println!("mass          {}", r.mass);
    }
    println!("E monotone    {}", report.series.energy_monotone());
    println!("output        {}", cfg.output.dir.display());
    match report.termination {
        Termination::Failed(e) => Err(e),
        _ => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_sweep(path: &Path, parallelism: Option<usize>) -> Result<ExitCode> {
    let mut plan = load_plan(path)?;
    if let Some(p) = parallelism {
        if p == 0 {
            return Err(Error::Configuration("--parallelism must be >= 1".into()));
        }
        plan.parallelism = p;
    }
    let entries = run_sweep(&plan)?;
    let count = |c: Classification| entries.iter().filter(|e| e.classification == c).count();
    println!(
        "{} runs: {} converged, {} non_converged_bounded, {} aborted",
        entries.len(),
        count(Classification::Converged),
        count(Classification::NonConvergedBounded),
        count(Classification::Aborted)
    );
    println!("regime map    {}", plan.out_dir.join("regime_map.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_fit(csv: &Path, quantity: &str, window: f64) -> Result<ExitCode> {
    let q: Quantity = quantity.parse()?;
    let series = read_csv_column(csv, q.name())?;
    let fit = fit_decay_rate(&series, window)?;
    println!("quantity      {}", q.name());
    println!("rate          {:.17e}", fit.rate);
    println!("intercept     {:.17e}", fit.intercept);
    println!("r_squared     {:.17e}", fit.r_squared);
    println!("window        [{}, {}]", fit.window.0, fit.window.1);
    println!("samples       {}", fit.samples);
    Ok(ExitCode::SUCCESS)
}

fn cmd_k0(path: &Path) -> Result<ExitCode> {
    let cfg: SimConfig = load_config(path)?;
    let grid = cfg.grid()?;
    let spec = cfg.motility_spec()?;
    let v_max = cfg.k0_probe_vmax(&cfg.initial_density(&grid));
    let r = validate_h1(&spec, v_max)?;
    println!("motility      {}", spec.describe());
    println!("interval      [0, {v_max}]");
    if let Some(v) = r.invalid_at {
        println!("gamma invalid at v = {v}");
        return Err(Error::ModelValidity(format!(
            "gamma is not positive and finite at v = {v}"
        )));
    }
    println!("K0            {:.12}", r.k0_estimate);
    println!("sup at v      {:.12}", r.sup_location);
    println!("gamma range   [{:e}, {:e}]", r.gamma_min, r.gamma_max);
    println!(
        "bounded       {}",
        match r.boundedness {
            Boundedness::VerifiedOnInterval => "verified on interval",
            Boundedness::SuspectUnbounded => "suspect unbounded (ratio still rising at v_max)",
        }
    );
    println!("threshold     {:.12}", r.threshold());
    println!("mu            {}", cfg.mu);
    println!("mu > K0/16    {}", cfg.mu > r.threshold());
    Ok(ExitCode::SUCCESS)
}
