//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Oracles here are closed forms, a local Gauss–Legendre rule and
//! re-evaluation of reported quantities from raw outputs.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use degenctl_core::adjoint::ControlProblem;
use degenctl_core::bessel::{bessel_zero, BesselOrder, ZeroTable};
use degenctl_core::experiment::{run_moment, run_optimize, ExperimentConfig, U0Spec};
use degenctl_core::fdcheck::check_gradient;
use degenctl_core::fem::{
    assemble_mass, assemble_stiffness, build_grid, indicator, project_initial,
    smallest_generalized_eigenvalue, Grid, TimeGrid,
};
use degenctl_core::moment::{cost_sweep, synthesize_control};
use degenctl_core::optim::OptimizerConfig;
use degenctl_core::spectrum::{eigen_table, l2_inner, weak_mode, DegeneracySpec};

type Outcome = Result<(bool, String), String>;

fn e(v: f64) -> String {
    format!("{v:.3e}")
}

/// n-point Gauss–Legendre nodes and weights on [−1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    (p0, p1) = (p1, ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf);
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite rule: `panels` equal panels of `rule` on [a, b].
fn composite(rule: &[(f64, f64)], a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let w = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let mid = a + (p as f64 + 0.5) * w;
            rule.iter().map(move |&(x, q)| (mid + 0.5 * w * x, 0.5 * w * q))
        })
        .collect()
}

fn integrate(nodes: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
    nodes.iter().map(|&(x, w)| w * f(x)).sum()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1_alpha_zero() -> Outcome {
    let modes = eigen_table(&DegeneracySpec::new(0.0).map_err(err)?, 20).map_err(err)?;
    let worst = modes
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let exact = ((k + 1) as f64 * PI / 2.0).powi(2);
            ((m.lambda - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    Ok((modes.len() == 20 && worst <= 1e-10, format!("max relative error {}", e(worst))))
}

fn c2_half_integer() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=20 {
        let nf = n as f64;
        let jp = bessel_zero(BesselOrder::new(0.5).map_err(err)?, n).map_err(err)?;
        let jm = bessel_zero(BesselOrder::new(-0.5).map_err(err)?, n).map_err(err)?;
        worst = worst.max((jp - nf * PI).abs()).max((jm - (nf - 0.5) * PI).abs());
    }
    Ok((worst <= 1e-12, format!("max error {}", e(worst))))
}

fn c3_lorch() -> Outcome {
    let (mut outside, mut misordered) = (0, 0);
    for nu in [0.1, 0.25, 1.0 / 3.0, 0.45] {
        let pos = ZeroTable::new(BesselOrder::new(nu).map_err(err)?, 50).map_err(err)?;
        let neg = ZeroTable::new(BesselOrder::new(-nu).map_err(err)?, 51).map_err(err)?;
        for n in 1..=50 {
            let j = pos.zeros()[n - 1];
            let nf = n as f64;
            let (lo, hi) = (PI * (nf + nu / 2.0 - 0.25), PI * (nf + nu / 4.0 - 0.125));
            if !(lo <= j && j <= hi) {
                outside += 1;
            }
            if !(neg.zeros()[n - 1] < j && j < neg.zeros()[n]) {
                misordered += 1;
            }
        }
    }
    Ok((
        outside == 0 && misordered == 0,
        format!("{outside} of 200 outside the band, {misordered} interlacing violations"),
    ))
}

fn c4_orthonormality() -> Outcome {
    let modes = eigen_table(&DegeneracySpec::new(0.5).map_err(err)?, 10).map_err(err)?;
    let mut worst = 0.0f64;
    for i in 0..10 {
        for j in i..10 {
            let g = l2_inner(|x| modes[i].eval(x), |x| modes[j].eval(x), &[], 1e-9);
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    Ok((worst <= 1e-6, format!("max |G - I| {}", e(worst))))
}

fn c5_window_mass() -> Outcome {
    let spec = DegeneracySpec::new(0.5).map_err(err)?;
    let m = weak_mode(&spec, 200).map_err(err)?;
    let (a, b) = (0.5, 0.75);
    let nodes = composite(&gauss_legendre(20), a, b, 64);
    let mass = integrate(&nodes, |x| m.eval(x).powi(2));
    let kappa = spec.kappa();
    let limit = (b.powf(kappa) - a.powf(kappa)) / 2.0;
    let rel = (mass - limit).abs() / limit;
    Ok((rel <= 0.01, format!("mass {} vs limit {}, relative gap {}", e(mass), e(limit), e(rel))))
}

fn c6_gaps() -> Outcome {
    let spec = DegeneracySpec::new(0.5).map_err(err)?;
    let s: Vec<f64> = eigen_table(&spec, 201).map_err(err)?.iter().map(|m| m.sqrt_lambda()).collect();
    let (nu, kappa) = (spec.nu(), spec.kappa());
    let mut tail = 0.0f64;
    // gap from global index k to k + 1; odd k pairs J_{−ν} with the next J_ν zero
    for k in 150..=200 {
        let limit = if k % 2 == 1 { kappa * PI * nu } else { kappa * PI * (1.0 - nu) };
        tail = tail.max(((s[k] - s[k - 1]) - limit).abs() / limit);
    }
    let mut scaled = Vec::new();
    for alpha in [0.8, 0.9, 0.95] {
        let sp = DegeneracySpec::new(alpha).map_err(err)?;
        let s: Vec<f64> = eigen_table(&sp, 200).map_err(err)?.iter().map(|m| m.sqrt_lambda()).collect();
        let min = s.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        scaled.push(min / (1.0 - alpha));
    }
    let band = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((
        tail <= 0.01 && band <= 3.0,
        format!(
            "tail relative deviation {}; min gap/(1-alpha) {} {} {}, max/min {}",
            e(tail),
            e(scaled[0]),
            e(scaled[1]),
            e(scaled[2]),
            e(band)
        ),
    ))
}

fn c7_fem_order() -> Outcome {
    let exact = (PI / 2.0).powi(2);
    let mut errs = Vec::new();
    for cells in [20, 40, 80] {
        let grid = build_grid(cells, 0.5, 0.75).map_err(err)?;
        let a = assemble_stiffness(&grid, 0.0).map_err(err)?;
        let lam = smallest_generalized_eigenvalue(&a, &assemble_mass(&grid)).map_err(err)?;
        errs.push((lam - exact).abs());
    }
    let p: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok((
        p.iter().all(|p| (p - 2.0).abs() <= 0.2),
        format!("observed orders {} {}", e(p[0]), e(p[1])),
    ))
}

fn c8_gradient() -> Outcome {
    let grid = build_grid(20, 0.5, 0.75).map_err(err)?;
    let time = TimeGrid::new(0.5, 0.05).map_err(err)?;
    let u0 = project_initial(&grid, indicator(-0.5, -0.25));
    let problem = ControlProblem::new(&grid, 0.8, &time, u0).map_err(err)?;
    let c = check_gradient(&problem, 25, 1e-6, 7_310_021).map_err(err)?;
    Ok((
        c.components.len() == 25 && c.max_relative_error <= 1e-6,
        format!("max relative error {} over 25 components", e(c.max_relative_error)),
    ))
}

/// ‖u_h‖_L² of the P1 field, exact per cell.
fn p1_l2_norm(grid: &Grid, u: &[f64]) -> f64 {
    let x = grid.nodes();
    let v = |k: usize| if k == 0 || k == grid.n_cells() { 0.0 } else { u[k - 1] };
    (0..grid.n_cells())
        .map(|k| {
            let (l, r) = (v(k), v(k + 1));
            (x[k + 1] - x[k]) / 3.0 * (l * l + l * r + r * r)
        })
        .sum::<f64>()
        .sqrt()
}

fn example_norm(which: u8, alpha: f64) -> Result<(f64, String), String> {
    let run = run_optimize(&ExperimentConfig::example(which, alpha).map_err(err)?).map_err(err)?;
    let norm = p1_l2_norm(&run.grid, &run.final_state);
    let consistent = (norm - run.report.final_state_m_norm).abs() <= 1e-12 + 1e-8 * norm;
    if !consistent {
        return Err(format!(
            "reported norm {} disagrees with recomputed {}",
            e(run.report.final_state_m_norm),
            e(norm)
        ));
    }
    Ok((norm, format!("{} iterations, uncontrolled {}", run.report.iters, e(run.report.uncontrolled_final_m_norm))))
}

fn c9_example1() -> Outcome {
    let (weak, w) = example_norm(1, 0.8)?;
    let (strong, s) = example_norm(1, 1.2)?;
    let ratio = strong / weak;
    Ok((
        weak <= 1e-5 && strong >= 1e-5 && ratio >= 1e2,
        format!(
            "alpha 0.8: {} ({w}); alpha 1.2: {} ({s}); ratio {}",
            e(weak),
            e(strong),
            e(ratio)
        ),
    ))
}

fn c10_example2() -> Outcome {
    let (weak, _) = example_norm(2, 0.8)?;
    let (strong, _) = example_norm(2, 1.2)?;
    Ok((
        weak <= 1e-5 && strong <= 1e-5,
        format!("alpha 0.8: {}; alpha 1.2: {}", e(weak), e(strong)),
    ))
}

fn c11_moment() -> Outcome {
    let (l, r) = (0.25, 0.5);
    let cfg = ExperimentConfig {
        alpha: 0.5,
        horizon: 0.5,
        modes: 6,
        n_cells: 400,
        dt: 5e-5,
        u0: U0Spec::Indicator { l, r },
        ..ExperimentConfig::default()
    };
    let run = run_moment(&cfg).map_err(err)?;
    let h = synthesize_control(&run.coefficients, &run.family, cfg.a, cfg.b).map_err(err)?;
    let gl = gauss_legendre(20);
    let xs = composite(&gl, cfg.a, cfg.b, 4);
    let ts = composite(&gl, 0.0, cfg.horizon, 50);
    let mut worst = 0.0f64;
    for mode in &run.coefficients.modes {
        let mu = integrate(&composite(&gl, l, r, 4), |x| mode.eval(x));
        let phi: Vec<f64> = xs.iter().map(|&(x, _)| mode.eval(x)).collect();
        let lhs = integrate(&ts, |t| {
            xs.iter().zip(&phi).map(|(&(x, w), p)| w * h.eval(x, t) * p).sum::<f64>() * (mode.lambda * t).exp()
        });
        worst = worst.max((lhs + mu).abs());
    }
    let nd = &run.null_drive;
    let reduction = nd.uncontrolled[0].abs() / nd.controlled[0].abs();
    Ok((
        worst <= 1e-6 && reduction >= 1e4,
        format!(
            "max moment residual {}; mode 1 controlled {} vs uncontrolled {} (factor {})",
            e(worst),
            e(nd.controlled[0]),
            e(nd.uncontrolled[0]),
            e(reduction)
        ),
    ))
}

fn c12_cost() -> Outcome {
    let grid = build_grid(100, 0.5, 0.75).map_err(err)?;
    let time = TimeGrid::new(1.0, 2.5e-3).map_err(err)?;
    let target = 1e-6;
    let sweep = cost_sweep(&[0.5, 0.7, 0.9, 0.95], &grid, &time, target, &OptimizerConfig::default(), 1)
        .map_err(err)?;
    let mut reached = true;
    let mut norms = Vec::new();
    for row in &sweep.rows {
        reached &= row.error.is_none() && row.final_norm <= target;
        norms.push(format!("{}: {}", row.alpha, e(row.control_norm)));
    }
    let increasing = sweep.rows.windows(2).all(|w| w[1].control_norm > w[0].control_norm);
    Ok((
        reached && increasing,
        format!(
            "T=1 control norms {}; slope vs 1/(1-alpha) {}",
            norms.join(", "),
            sweep.slope.map_or("n/a".into(), e)
        ),
    ))
}

fn read_tree(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let p = entry.map_err(err)?.path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        out.insert(name, std::fs::read(&p).map_err(err)?);
    }
    Ok(out)
}

fn c13_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_degenctl");
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut trees = Vec::new();
    // same output path both times, since config.json records it
    let out = tmp.path().join("run");
    for run in ["first", "second"] {
        let status = Command::new(bin)
            .args(["example", "1", "--alpha", "0.8", "--out"])
            .arg(&out)
            .output()
            .map_err(err)?;
        if !status.status.success() {
            return Err(format!("example run failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        let kept = tmp.path().join(run);
        std::fs::rename(&out, &kept).map_err(err)?;
        trees.push(read_tree(&kept)?);
    }
    let differing: Vec<&String> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    let same = differing.is_empty() && trees[0].len() == trees[1].len() && !trees[0].is_empty();
    Ok((
        same,
        if same {
            format!("{} files bit-identical", trees[0].len())
        } else {
            format!("differing files {differing:?}")
        },
    ))
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: [Criterion; 13] = [
        (1, "alpha=0 closed form", secs(1), c1_alpha_zero),
        (2, "half-integer Bessel zeros", secs(1), c2_half_integer),
        (3, "Lorch containment and interlacing", secs(5), c3_lorch),
        (4, "orthonormality of 10 weak modes", secs(30), c4_orthonormality),
        (5, "window-mass asymptote", secs(10), c5_window_mass),
        (6, "gap asymptotics", secs(30), c6_gaps),
        (7, "FEM eigenvalue order", secs(5), c7_fem_order),
        (8, "adjoint gradient exactness", secs(10), c8_gradient),
        (9, "example 1 dichotomy", None, c9_example1),
        (10, "example 2", None, c10_example2),
        (11, "moment synthesis", secs(120), c11_moment),
        (12, "cost trend", None, c12_cost),
        (13, "determinism", None, c13_determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass, detail),
            Err(msg) => (false, format!("error: {msg}")),
        };
        let in_budget = budget.is_none_or(|b| took <= b);
        let pass = pass && in_budget;
        let over = if in_budget { String::new() } else { format!(", over the {:?} budget", budget.unwrap()) };
        println!(
            "{} criterion {id} ({name}): {detail} [{:.2}s{over}]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
