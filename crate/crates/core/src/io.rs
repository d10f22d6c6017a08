//! CSV and JSON output. Reals use the shortest round-trip form in
//! scientific notation, so files are bit-reproducible and lossless.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::fem::{ControlTrajectory, Grid, TimeGrid};
use crate::moment::CostSweep;
use crate::spectrum::{EigenMode, Regime};

pub fn real(v: f64) -> String {
    format!("{v:e}")
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    Ok(wtr)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// (x, value) over all nodes, boundary zeros included.
pub fn write_state<W: Write>(w: W, grid: &Grid, u: &[f64]) -> Result<()> {
    let mut wtr = writer(w, &["x", "value"])?;
    let last = grid.n_cells();
    for (k, &x) in grid.nodes().iter().enumerate() {
        let v = if k == 0 || k == last { 0.0 } else { u[k - 1] };
        wtr.write_record([real(x), real(v)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// (t, x, value) for a sequence of states at t₀, t₁, …
pub fn write_states<W: Write>(w: W, grid: &Grid, time: &TimeGrid, states: &[Vec<f64>]) -> Result<()> {
    let mut wtr = writer(w, &["t", "x", "value"])?;
    for (n, u) in states.iter().enumerate() {
        let t = real(time.time(n));
        for (&x, &v) in grid.interior().iter().zip(u) {
            wtr.write_record([t.clone(), real(x), real(v)])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// (t, x, value) with t the start of each step's interval.
pub fn write_control<W: Write>(w: W, grid: &Grid, time: &TimeGrid, h: &ControlTrajectory) -> Result<()> {
    let mut wtr = writer(w, &["t", "x", "value"])?;
    for n in 0..h.n_steps() {
        let t = real(time.time(n));
        for (&x, &v) in grid.control_nodes().iter().zip(h.step(n)) {
            wtr.write_record([t.clone(), real(x), real(v)])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_history<W: Write>(w: W, history: &[f64]) -> Result<()> {
    let mut wtr = writer(w, &["iter", "objective"])?;
    for (i, &f) in history.iter().enumerate() {
        wtr.write_record([i.to_string(), real(f)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_eigen_table<W: Write>(w: W, modes: &[EigenMode], window_masses: &[f64]) -> Result<()> {
    let mut wtr = writer(
        w,
        &["regime", "branch", "n", "global_index", "lambda", "sqrt_lambda", "window_mass"],
    )?;
    for (m, mass) in modes.iter().zip(window_masses) {
        let regime = match m.regime {
            Regime::Weak => "weak",
            Regime::Strong => "strong",
        };
        wtr.write_record([
            regime.to_string(),
            m.branch.label().to_string(),
            m.index.to_string(),
            m.global_index.to_string(),
            real(m.lambda),
            real(m.sqrt_lambda()),
            real(*mass),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// (kind, k, gap) rows for consecutive √λ gaps.
pub fn write_gaps<W: Write>(w: W, even_odd: &[f64], odd_even: &[f64]) -> Result<()> {
    let mut wtr = writer(w, &["kind", "k", "gap"])?;
    for (kind, gaps) in [("even_odd", even_odd), ("odd_even", odd_even)] {
        for (k, &g) in gaps.iter().enumerate() {
            wtr.write_record([kind.to_string(), (k + 1).to_string(), real(g)])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_moment_table<W: Write>(
    w: W,
    lambdas: &[f64],
    mu0: &[f64],
    sigma_norms: &[f64],
    window_masses: &[f64],
) -> Result<()> {
    let mut wtr = writer(w, &["n", "lambda", "mu0", "sigma_norm", "window_mass"])?;
    for n in 0..lambdas.len() {
        wtr.write_record([
            (n + 1).to_string(),
            real(lambdas[n]),
            real(mu0[n]),
            real(sigma_norms[n]),
            real(window_masses[n]),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_cost_sweep<W: Write>(w: W, sweep: &CostSweep) -> Result<()> {
    let mut wtr = writer(w, &["alpha", "control_norm", "final_norm", "iters", "error"])?;
    for r in &sweep.rows {
        wtr.write_record([
            real(r.alpha),
            real(r.control_norm),
            real(r.final_norm),
            r.iters.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Creates the parent directory and runs `f` on a buffered file.
pub fn to_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let with_path = |e: std::io::Error| std::io::Error::new(e.kind(), format!("{}: {e}", path.display()));
    let mut w = create(path).map_err(|e| match e {
        crate::Error::Io(e) => crate::Error::Io(with_path(e)),
        e => e,
    })?;
    f(&mut w)?;
    w.flush().map_err(with_path)?;
    Ok(())
}
