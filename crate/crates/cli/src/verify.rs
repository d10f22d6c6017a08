//! Self-check suites. Each check prints one PASS/FAIL line.

use degenctl_core::adjoint::ControlProblem;
use degenctl_core::bessel::{bessel_zero, lorch_bounds, BesselOrder, ZeroTable};
use degenctl_core::fdcheck::check_gradient;
use degenctl_core::fem::{
    assemble_mass, assemble_stiffness, build_grid, indicator, project_initial, smallest_generalized_eigenvalue,
    TimeGrid,
};
use degenctl_core::io::real;
use degenctl_core::moment::{build_biorthogonal, expand_initial, synthesize_control, verify_null_drive};
use degenctl_core::spectrum::{eigen_table, l2_inner, sqrt_gap_stats, weak_mode, DegeneracySpec};
use degenctl_core::Result;
use std::f64::consts::PI;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

/// Prints the checks; true iff all pass.
pub fn report(checks: &[Check]) -> bool {
    for c in checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.pass)
}

pub fn bessel() -> Result<Vec<Check>> {
    let mut worst_half = 0.0f64;
    for n in 1..=20 {
        let nf = n as f64;
        worst_half = worst_half
            .max((bessel_zero(BesselOrder::new(0.5)?, n)? - nf * PI).abs())
            .max((bessel_zero(BesselOrder::new(-0.5)?, n)? - (nf - 0.5) * PI).abs());
    }
    let mut outside = 0;
    let mut misordered = 0;
    for nu in [0.1, 0.25, 1.0 / 3.0, 0.45] {
        let pos = ZeroTable::new(BesselOrder::new(nu)?, 50)?;
        let neg = ZeroTable::new(BesselOrder::new(-nu)?, 51)?;
        for n in 1..=50 {
            let j = pos.zeros()[n - 1];
            let (lo, hi) = lorch_bounds(nu, n).expect("nu >= 0");
            if !(lo <= j && j <= hi) {
                outside += 1;
            }
            if !(neg.zeros()[n - 1] < j && j < neg.zeros()[n]) {
                misordered += 1;
            }
        }
    }
    Ok(vec![
        check("half-integer zeros", worst_half <= 1e-12, format!("max error {}", real(worst_half))),
        check("Lorch containment", outside == 0, format!("{outside} of 200 zeros outside")),
        check("interlacing", misordered == 0, format!("{misordered} of 200 violations")),
    ])
}

pub fn spectrum() -> Result<Vec<Check>> {
    let free = eigen_table(&DegeneracySpec::new(0.0)?, 20)?;
    let closed = free
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let exact = ((k + 1) as f64 * PI / 2.0).powi(2);
            ((m.lambda - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    let spec = DegeneracySpec::new(0.5)?;
    let modes = eigen_table(&spec, 10)?;
    let mut gram = 0.0f64;
    for i in 0..modes.len() {
        for j in i..modes.len() {
            let v = l2_inner(|x| modes[i].eval(x), |x| modes[j].eval(x), &[], 1e-9);
            gram = gram.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let gaps = sqrt_gap_stats(&spec, 200)?;
    let (nu, kappa) = (spec.nu(), spec.kappa());
    // global n ≥ 150: odd→even gaps start at n = 151, even→odd at n = 150
    let tail = |gs: &[f64], limit: f64| {
        gs.iter()
            .map(|g| ((g - limit) / limit).abs())
            .fold(0.0, f64::max)
    };
    let tail_err = tail(&gaps.even_odd_gaps[74..], kappa * PI * (1.0 - nu))
        .max(tail(&gaps.odd_even_gaps[75..], kappa * PI * nu));
    Ok(vec![
        check("alpha=0 closed form", closed <= 1e-10, format!("max relative error {}", real(closed))),
        check("orthonormality", gram <= 1e-6, format!("max Gram deviation {}", real(gram))),
        check("tail gaps", tail_err <= 0.01, format!("max relative deviation {}", real(tail_err))),
    ])
}

pub fn fem() -> Result<Vec<Check>> {
    let exact = (PI / 2.0).powi(2);
    let mut errs = Vec::new();
    for cells in [20, 40, 80] {
        let grid = build_grid(cells, 0.5, 0.75)?;
        let lam = smallest_generalized_eigenvalue(&assemble_stiffness(&grid, 0.0)?, &assemble_mass(&grid))?;
        errs.push((lam - exact).abs());
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = orders.iter().all(|p| (p - 2.0).abs() <= 0.2);
    Ok(vec![check(
        "eigenvalue convergence order",
        pass,
        format!("orders {} {}", real(orders[0]), real(orders[1])),
    )])
}

pub const GRADIENT_SEED: u64 = 20_240_611;

pub fn gradient() -> Result<Vec<Check>> {
    let grid = build_grid(20, 0.5, 0.75)?;
    let time = TimeGrid::new(0.5, 0.05)?;
    let problem = ControlProblem::new(&grid, 0.8, &time, project_initial(&grid, indicator(-0.5, -0.25)))?;
    let c = check_gradient(&problem, 25, 1e-6, GRADIENT_SEED)?;
    Ok(vec![check(
        "adjoint gradient",
        c.max_relative_error <= 1e-6,
        format!("max relative error {} (seed {}, 25 components)", real(c.max_relative_error), c.seed),
    )])
}

pub fn moment() -> Result<Vec<Check>> {
    let spec = DegeneracySpec::new(0.5)?;
    let lambdas: Vec<f64> = eigen_table(&spec, 10)?.iter().map(|m| m.lambda).collect();
    let family = build_biorthogonal(&lambdas, 0.5)?;
    let m1 = weak_mode(&spec, 1)?;
    let grid = build_grid(200, 0.5, 0.75)?;
    let time = TimeGrid::new(0.5, 1e-4)?;
    let coeffs = expand_initial(|x| m1.eval(x), &spec, 1, &[])?;
    let single = build_biorthogonal(&[m1.lambda], 0.5)?;
    let h = synthesize_control(&coeffs, &single, 0.5, 0.75)?.sample(&grid, &time)?;
    let rep = verify_null_drive(&h, &grid, &spec, &time, &project_initial(&grid, |x| m1.eval(x)), 1)?;
    Ok(vec![
        check(
            "biorthogonality N=10",
            family.residual() <= 1e-8,
            format!("residual {} (Gram condition {})", real(family.residual()), real(family.condition())),
        ),
        check(
            "single-mode null drive",
            rep.controlled[0].abs() <= 1e-4,
            format!(
                "<u(T),phi_1> {} vs uncontrolled {}",
                real(rep.controlled[0]),
                real(rep.uncontrolled[0])
            ),
        ),
    ])
}
