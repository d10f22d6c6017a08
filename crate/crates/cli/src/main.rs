use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use degenctl_core::error::ErrorClass;
use degenctl_core::experiment::{ExperimentConfig, U0Spec};
use degenctl_core::Error;

mod commands;
mod verify;

#[derive(Parser)]
#[command(name = "degenctl", version, about = "Spectra and one-sided null control of -(|x|^a u_x)_x on (-1,1)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigen table, √λ gaps and control-window masses
    Spectrum(Common),
    /// Uncontrolled evolution
    Solve(Common),
    /// Optimal control by adjoint gradients and BFGS
    Optimize(Common),
    /// Moment-method control and its FEM check (α < 1)
    Moment(Common),
    /// Control cost to reach a final-norm target across α
    CostSweep(SweepArgs),
    /// Example 1 or 2 at the default discretisation
    Example(ExampleArgs),
    /// Executable self-check suites
    Verify(VerifyArgs),
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Args, Clone, Default)]
struct Common {
    /// flat JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    /// initial datum: indicator:l:r | eigenmode:branch:n[:scale] | samples:path
    #[arg(long, allow_hyphen_values = true)]
    u0: Option<U0Spec>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident => $field:ident),*) => {$(
                if let Some(v) = self.$f.clone() { cfg.$field = v; }
            )*};
        }
        set!(alpha => alpha, a => a, b => b, horizon => horizon, dt => dt, cells => n_cells,
             modes => modes, u0 => u0, out => output_dir, jobs => jobs);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// comma-separated α values in [0, 1)
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.7, 0.9, 0.95])]
    alphas: Vec<f64>,
    /// final M-norm each run must reach
    #[arg(long, default_value_t = 1e-6)]
    target: f64,
}

#[derive(Args)]
struct ExampleArgs {
    #[arg(value_parser = clap::value_parser!(u8).range(1..=2))]
    which: u8,
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Bessel,
    Spectrum,
    Fem,
    Gradient,
    Moment,
}

#[derive(Args)]
struct VerifyArgs {
    suite: Suite,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Validation => 1,
        ErrorClass::Numerical => 2,
        ErrorClass::Io => 3,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Spectrum(c) => commands::spectrum(&c.resolve()?).map(|_| true),
        Command::Solve(c) => commands::solve(&c.resolve()?).map(|_| true),
        Command::Optimize(c) => commands::optimize(&c.resolve()?).map(|_| true),
        Command::Moment(c) => commands::moment(&c.resolve()?).map(|_| true),
        Command::CostSweep(s) => commands::cost_sweep(&s.common.resolve()?, &s.alphas, s.target).map(|_| true),
        Command::Example(e) => {
            let mut cfg = ExperimentConfig::example(e.which, e.alpha)?;
            cfg.output_dir = e
                .out
                .unwrap_or_else(|| PathBuf::from(format!("example{}_alpha{}", e.which, e.alpha)));
            commands::optimize(&cfg).map(|_| true)
        }
        Command::Verify(v) => {
            let checks = match v.suite {
                Suite::Bessel => verify::bessel(),
                Suite::Spectrum => verify::spectrum(),
                Suite::Fem => verify::fem(),
                Suite::Gradient => verify::gradient(),
                Suite::Moment => verify::moment(),
            }?;
            Ok(verify::report(&checks))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
