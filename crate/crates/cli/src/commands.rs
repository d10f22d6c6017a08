use degenctl_core::experiment::{self, ExperimentConfig};
use degenctl_core::io::{self, real, to_file};
use degenctl_core::moment;
use degenctl_core::optim::Status;
use degenctl_core::spectrum::{control_window_mass, eigen_table, sqrt_gap_stats, Regime};
use degenctl_core::{Error, Result};
use serde_json::json;

fn save_config(cfg: &ExperimentConfig) -> Result<()> {
    to_file(&cfg.output_dir.join("config.json"), |w| io::write_json(w, cfg))
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<()> {
    let spec = cfg.spec()?;
    let modes = eigen_table(&spec, cfg.modes)?;
    let masses = modes
        .iter()
        .map(|m| control_window_mass(m, cfg.a, cfg.b))
        .collect::<Result<Vec<_>>>()?;
    let dir = &cfg.output_dir;
    to_file(&dir.join("eigen_table.csv"), |w| io::write_eigen_table(w, &modes, &masses))?;
    if spec.regime() == Regime::Weak && cfg.modes >= 4 {
        let gaps = sqrt_gap_stats(&spec, cfg.modes)?;
        to_file(&dir.join("gaps.csv"), |w| io::write_gaps(w, &gaps.even_odd_gaps, &gaps.odd_even_gaps))?;
        println!("min sqrt-lambda gap {}", real(gaps.min_gap));
    }
    save_config(cfg)?;
    println!("{} modes written to {}", modes.len(), dir.display());
    Ok(())
}

pub fn solve(cfg: &ExperimentConfig) -> Result<()> {
    let run = experiment::run_solve(cfg)?;
    let dir = &cfg.output_dir;
    to_file(&dir.join("states.csv"), |w| io::write_states(w, &run.grid, &run.time, &run.states))?;
    let last = run.states.last().expect("at least the initial state");
    to_file(&dir.join("final_state.csv"), |w| io::write_state(w, &run.grid, last))?;
    save_config(cfg)?;
    println!(
        "uncontrolled M-norm {} -> {}",
        real(run.m_norms[0]),
        real(*run.m_norms.last().unwrap())
    );
    Ok(())
}

pub fn optimize(cfg: &ExperimentConfig) -> Result<()> {
    let run = experiment::run_optimize(cfg)?;
    let dir = &cfg.output_dir;
    to_file(&dir.join("final_state.csv"), |w| io::write_state(w, &run.grid, &run.final_state))?;
    to_file(&dir.join("control.csv"), |w| io::write_control(w, &run.grid, &run.time, &run.control))?;
    to_file(&dir.join("history.csv"), |w| io::write_history(w, &run.report.objective_history))?;
    to_file(&dir.join("report.json"), |w| io::write_json(w, &run.report))?;
    save_config(cfg)?;
    let r = &run.report;
    println!(
        "alpha {} final M-norm {} (uncontrolled {}), control L2 norm {}, {} iterations, status {:?}",
        r.alpha,
        real(r.final_state_m_norm),
        real(r.uncontrolled_final_m_norm),
        real(r.control_l2_norm),
        r.iters,
        r.status
    );
    Ok(())
}

pub fn moment(cfg: &ExperimentConfig) -> Result<()> {
    let run = experiment::run_moment(cfg)?;
    let dir = &cfg.output_dir;
    to_file(&dir.join("moment_table.csv"), |w| {
        io::write_moment_table(
            w,
            run.family.lambdas(),
            &run.coefficients.mu0,
            &run.sigma_norms,
            &run.window_masses,
        )
    })?;
    to_file(&dir.join("control.csv"), |w| io::write_control(w, &run.grid, &run.time, &run.control))?;
    let report = json!({
        "gram_condition": run.family.condition(),
        "biorthogonality_residual": run.family.residual(),
        "null_drive": run.null_drive,
    });
    to_file(&dir.join("moment_report.json"), |w| io::write_json(w, &report))?;
    save_config(cfg)?;
    println!(
        "Gram condition {}, residual {}",
        real(run.family.condition()),
        real(run.family.residual())
    );
    for (n, (c, u)) in run.null_drive.controlled.iter().zip(&run.null_drive.uncontrolled).enumerate() {
        println!("mode {}: <u(T),phi> controlled {} uncontrolled {}", n + 1, real(*c), real(*u));
    }
    Ok(())
}

pub fn cost_sweep(cfg: &ExperimentConfig, alphas: &[f64], target: f64) -> Result<()> {
    let (grid, time) = (cfg.grid()?, cfg.time()?);
    let sweep = moment::cost_sweep(alphas, &grid, &time, target, &cfg.optimizer, cfg.jobs)?;
    let dir = &cfg.output_dir;
    to_file(&dir.join("cost_sweep.csv"), |w| io::write_cost_sweep(w, &sweep))?;
    to_file(&dir.join("cost_sweep.json"), |w| io::write_json(w, &sweep))?;
    save_config(cfg)?;
    for r in &sweep.rows {
        let status = r.status.map_or("failed", |s| match s {
            Status::TargetReached => "target reached",
            Status::GradientTolerance => "gradient tolerance",
            Status::MaxIterations => "max iterations",
            Status::LineSearchFailed => "line search floor",
        });
        println!(
            "alpha {} control norm {} final norm {} ({status})",
            r.alpha,
            real(r.control_norm),
            real(r.final_norm)
        );
    }
    match sweep.slope {
        Some(s) => println!("log-log slope against 1/(1-alpha): {}", real(s)),
        None => println!("slope needs two successful runs"),
    }
    if sweep.rows.iter().all(|r| r.error.is_some()) {
        return Err(Error::LineSearch("no sweep run reached the target".into()));
    }
    Ok(())
}
