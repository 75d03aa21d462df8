use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lvhopf::config::{Overrides, RunConfig};
use lvhopf::model::analyze_params;
use lvhopf::report::{self, ModelSummary};
use lvhopf::sim::{limit_cycle_metrics, simulate};
use lvhopf::validate::{self, Status};
use lvhopf::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NO_CROSSING: u8 = 3;
const EXIT_BLOW_UP: u8 = 4;
const EXIT_FAILED: u8 = 5;

/// Stability and Hopf bifurcation of a harvested one-predator two-prey
/// Lotka-Volterra model with distributed delay
#[derive(Parser, Debug)]
#[command(name = "lvhopf", version)]
struct Cli {
    /// TOML configuration file (defaults are used for missing keys)
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// predation coefficient
    #[arg(long, global = true, allow_negative_numbers = true)]
    a: Option<f64>,
    /// predator harvest rate
    #[arg(long = "H", global = true, allow_negative_numbers = true)]
    h: Option<f64>,
    /// kernel family: dirac, uniform, erlang or erlang(k)
    #[arg(long, global = true)]
    kernel: Option<String>,
    /// expectation of the delay distribution
    #[arg(long = "E", global = true, allow_negative_numbers = true)]
    e: Option<f64>,
    /// Erlang shape
    #[arg(long, global = true)]
    shape: Option<u32>,
    /// output directory for CSV files
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// interior equilibrium
    Equilibrium,
    /// coefficients of the characteristic equation
    Coeffs,
    /// feasibility, Routh-Hurwitz margins and the rightmost root at the configured E
    Stability,
    /// critical expectation, crossing frequency and transversality; writes analysis.csv
    Analyze,
    /// rightmost root over the E grid; writes scan.csv
    Scan,
    /// integrate the delayed system; writes trajectory.csv and appends metrics.csv
    Simulate,
    /// run the full validation suite
    Validate,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidKernel(_) | Error::StepTooCoarse { .. } | Error::NotErlang => {
            EXIT_CONFIG
        }
        Error::InfeasibleParams(_) | Error::UnstableAtZero => EXIT_INFEASIBLE,
        Error::NoCrossingFound { .. } => EXIT_NO_CROSSING,
        Error::BlowUp { .. } | Error::PositivityLost { .. } => EXIT_BLOW_UP,
        _ => EXIT_FAILED,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        a: cli.a,
        h: cli.h,
        kernel: cli.kernel.clone(),
        expectation: cli.e,
        shape: cli.shape,
        output: cli.output.clone(),
    })?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), u8> {
    report::write_file(dir, name, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", dir.join(name).display());
        EXIT_CONFIG
    })?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn model_report(cfg: &RunConfig, command: Command) -> Result<(), u8> {
    let summary = ModelSummary::new(&cfg.params());
    let r = match command {
        Command::Equilibrium => summary.equilibrium_report(),
        Command::Coeffs => summary.coeffs_report(),
        _ => summary.stability_report(Some(&cfg.kernel().map_err(|e| fail(&e))?)),
    };
    print!("{}", r.render());
    if summary.feasibility.feasible {
        Ok(())
    } else {
        Err(EXIT_INFEASIBLE)
    }
}

fn fail(e: &Error) -> u8 {
    eprintln!("error: {e}");
    exit_code(e)
}

fn analyze(cfg: &RunConfig) -> Result<(), u8> {
    let (_, coeffs) = analyze_params(&cfg.params()).map_err(|e| fail(&e))?;
    let family = cfg.kernel_family().map_err(|e| fail(&e))?;
    let a = report::analyze(&coeffs, family, Some(cfg.scan.e_max)).map_err(|e| fail(&e))?;
    let r = a.report();
    print!("{}", r.render());
    write(&cfg.output, "analysis.csv", &a.csv())
}

fn scan(cfg: &RunConfig) -> Result<(), u8> {
    let (_, coeffs) = analyze_params(&cfg.params()).map_err(|e| fail(&e))?;
    let family = cfg.kernel_family().map_err(|e| fail(&e))?;
    let rows = report::scan(&coeffs, family, &cfg.scan_grid());
    let flips = rows
        .windows(2)
        .filter(|w| matches!((w[0].stable(), w[1].stable()), (Some(x), Some(y)) if x != y))
        .count();
    let failed = rows.iter().filter(|r| r.lead.is_err()).count();
    println!(
        "{} points over E in [{}, {}]: {flips} stability change(s), {failed} failed point(s)",
        rows.len(),
        cfg.scan.e_min,
        cfg.scan.e_max
    );
    write(&cfg.output, "scan.csv", &report::scan_csv(&rows))
}

fn simulate_cmd(cfg: &RunConfig) -> Result<(), u8> {
    let params = cfg.params();
    let (eq, _) = analyze_params(&params).map_err(|e| fail(&e))?;
    let kernel = cfg.kernel().map_err(|e| fail(&e))?;
    let sim = cfg.sim_config().map_err(|e| fail(&e))?;
    let every = cfg.sim.output_every;
    let traj = match simulate(&params, &kernel, &sim) {
        Ok(t) => t,
        Err(e @ (Error::BlowUp { .. } | Error::PositivityLost { .. })) => {
            if let Error::BlowUp { partial, .. } | Error::PositivityLost { partial, .. } = &e {
                write(&cfg.output, "trajectory.csv", &report::trajectory_csv(partial, cfg, &kernel, every))?;
            }
            return Err(fail(&e));
        }
        Err(e) => return Err(fail(&e)),
    };
    write(&cfg.output, "trajectory.csv", &report::trajectory_csv(&traj, cfg, &kernel, every))?;
    match limit_cycle_metrics(&traj, &eq, sim.transient_fraction) {
        Ok(m) => {
            println!(
                "amplitude = [{:.3e}, {:.3e}, {:.3e}], period = {}, decaying = {}",
                m.amplitude[0],
                m.amplitude[1],
                m.amplitude[2],
                m.period.map_or("none".to_string(), |p| format!("{p:.6}")),
                m.decaying
            );
            let row = report::metrics_row(&kernel, sim.method, &traj, &m);
            report::append_metrics(&cfg.output, &row).map_err(|e| {
                eprintln!("error: cannot append metrics: {e}");
                EXIT_CONFIG
            })?;
            println!("appended {}", cfg.output.join("metrics.csv").display());
        }
        Err(e) => eprintln!("warning: no metrics: {e}"),
    }
    Ok(())
}

fn validate_cmd(cfg: &RunConfig) -> Result<(), u8> {
    let v = validate::run(cfg);
    for o in &v.outcomes {
        println!("{o}");
    }
    let passed = v.outcomes.iter().filter(|o| o.status == Status::Pass).count();
    println!("{passed} of {} criteria passed", v.outcomes.len());
    for (name, contents) in &v.files {
        write(&cfg.output, name, contents)?;
    }
    write(&cfg.output, "validation.csv", &v.outcomes_csv())?;
    if !v.feasible {
        Err(EXIT_INFEASIBLE)
    } else if v.all_passed() {
        Ok(())
    } else {
        Err(EXIT_FAILED)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return ExitCode::from(fail(&e)),
    };
    let result = match cli.command {
        c @ (Command::Equilibrium | Command::Coeffs | Command::Stability) => model_report(&cfg, c),
        Command::Analyze => analyze(&cfg),
        Command::Scan => scan(&cfg),
        Command::Simulate => simulate_cmd(&cfg),
        Command::Validate => validate_cmd(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
