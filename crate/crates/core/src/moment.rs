//! Null controls by the moment method in the weak regime.
//!
//! For u⁰ = Σ μₙ Φₙ, the control
//!
//! h(x, t) = Σₘ −μₘ σₘ(t) Φₘ(x) / ∫_a^b Φₘ²   on (a, b)
//!
//! satisfies ∫₀ᵀ∫_a^b h Φₙ e^{λₙ t} = −μₙ whenever ∫₀ᵀ σₘ e^{λₙ t} = δₘₙ, which
//! cancels every retained mode at time T. The σₘ are built from the
//! shifted exponentials e^{λₖ(t−T)}, all bounded by 1 on [0, T].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{self, ControlProblem};
use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::fixed::{Fixed, FRAC_BITS};
use crate::fem::{p1_inner, project_initial, ControlTrajectory, Grid, Propagator, TimeGrid};
use crate::optim::{OptimizerConfig, Status};
use crate::quad::integrate_with_breaks;
use crate::spectrum::{control_window_mass, eigen_table, weak_mode, DegeneracySpec, EigenMode, Regime};

/// Largest family accepted; the Gram condition number grows exponentially
/// in N.
pub const MAX_FAMILY: usize = 30;
pub const BIORTHOGONALITY_TOL: f64 = 1e-8;
const EXPANSION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalCoefficients {
    pub modes: Vec<EigenMode>,
    /// μₙ = ⟨u⁰, Φₙ⟩
    pub mu0: Vec<f64>,
}

/// μₙ = ∫ f Φₙ for the first `n_modes` weak-regime modes. `breaks` lists
/// jump points of f.
pub fn expand_initial<F: Fn(f64) -> f64>(
    f: F,
    spec: &DegeneracySpec,
    n_modes: usize,
    breaks: &[f64],
) -> Result<ModalCoefficients> {
    if spec.regime() != Regime::Weak {
        return Err(Error::Regime("expand_initial", "weak"));
    }
    let modes = eigen_table(spec, n_modes)?;
    let mut cuts = vec![0.0];
    cuts.extend_from_slice(breaks);
    let mu0 = modes
        .iter()
        .map(|m| integrate_with_breaks(|x| f(x) * m.eval(x), -1.0, 1.0, &cuts, EXPANSION_TOL).value)
        .collect();
    Ok(ModalCoefficients { modes, mu0 })
}

/// σₘ(t) = Σₖ Cₘₖ e^{λₖ(t−T)} with ∫₀ᵀ σₘ e^{λₙ t} dt = δₘₙ.
///
/// Checking the identity against e^{λₙt} scales rounding in Cₘₖ by up to
/// e^{(λ_N − λ_1)T}, so the solve and the stored coefficients use
/// `FRAC_BITS`-bit fixed point; evaluation rounds them to double-double.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthogonalFamily {
    horizon: f64,
    lambdas: Vec<f64>,
    exact: Vec<Vec<Fixed>>,
    coeffs: Vec<Vec<Dd>>,
    condition: f64,
    residual: f64,
}

/// Hₖₙ = Gₖₙ e^{−λₙT} = (1 − e^{−(λₖ+λₙ)T}) / (λₖ + λₙ).
fn shifted_gram(lambdas: &[f64], horizon: f64) -> Vec<Vec<Fixed>> {
    let t = Fixed::from_f64(horizon);
    let lam: Vec<Fixed> = lambdas.iter().map(|&l| Fixed::from_f64(l)).collect();
    let n = lambdas.len();
    let mut h = vec![vec![Fixed::zero(); n]; n];
    for k in 0..n {
        for j in k..n {
            let s = &lam[k] + &lam[j];
            let decay = (-&(&s * &t)).exp();
            let v = (&Fixed::one() - &decay).div(&s);
            h[j][k] = v.clone();
            h[k][j] = v;
        }
    }
    h
}

/// Gram entries are O(T), so pivots below 2^-PIVOT_FLOOR_BITS leave fewer
/// than 96 significant bits.
const PIVOT_FLOOR_BITS: u32 = FRAC_BITS - 96;

/// Inverse of an SPD matrix by LDLᵀ.
fn spd_inverse(h: &[Vec<Fixed>]) -> Result<Vec<Vec<Fixed>>> {
    let n = h.len();
    let floor = Fixed::one().div(&Fixed::from_f64(2f64.powi(PIVOT_FLOOR_BITS as i32)));
    let mut l = vec![vec![Fixed::zero(); n]; n];
    let mut d = vec![Fixed::zero(); n];
    for j in 0..n {
        let mut dj = h[j][j].clone();
        for k in 0..j {
            dj = &dj - &(&(&l[j][k] * &l[j][k]) * &d[k]);
        }
        if dj <= floor {
            return Err(Error::Conditioning(format!(
                "Gram matrix is numerically singular at pivot {}",
                j + 1
            )));
        }
        for i in j + 1..n {
            let mut s = h[i][j].clone();
            for k in 0..j {
                s = &s - &(&(&l[i][k] * &l[j][k]) * &d[k]);
            }
            l[i][j] = s.div(&dj);
        }
        l[j][j] = Fixed::one();
        d[j] = dj;
    }
    let mut inv = vec![vec![Fixed::zero(); n]; n];
    for c in 0..n {
        let mut y = vec![Fixed::zero(); n];
        for i in 0..n {
            let mut s = if i == c { Fixed::one() } else { Fixed::zero() };
            for k in 0..i {
                s = &s - &(&l[i][k] * &y[k]);
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i].div(&d[i]);
            for k in i + 1..n {
                s = &s - &(&l[k][i] * &inv[k][c]);
            }
            inv[i][c] = s;
        }
    }
    Ok(inv)
}

fn one_norm(m: &[Vec<Fixed>]) -> f64 {
    (0..m.len())
        .map(|c| m.iter().map(|row| row[c].to_f64().abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Builds the family for strictly increasing positive `lambdas`.
pub fn build_biorthogonal(lambdas: &[f64], horizon: f64) -> Result<BiorthogonalFamily> {
    let n = lambdas.len();
    if n == 0 || n > MAX_FAMILY {
        return Err(Error::InvalidParameter(format!(
            "family size {n} outside 1..={MAX_FAMILY}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
    }
    if !(lambdas[0] > 0.0) || lambdas.iter().any(|l| !l.is_finite()) || lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "eigenvalues must be finite, positive and strictly increasing".into(),
        ));
    }
    let h = shifted_gram(lambdas, horizon);
    let inv = spd_inverse(&h)?;
    let condition = one_norm(&h) * one_norm(&inv);
    let t = Fixed::from_f64(horizon);
    let growth: Vec<Fixed> = lambdas.iter().map(|&l| (&Fixed::from_f64(l) * &t).exp()).collect();
    // Cₘₖ = e^{−λₘT} (H⁻¹)ₘₖ
    let exact: Vec<Vec<Fixed>> = (0..n)
        .map(|m| {
            let decay = (-&(&Fixed::from_f64(lambdas[m]) * &t)).exp();
            inv[m].iter().map(|v| &decay * v).collect()
        })
        .collect();
    // ∫σₘ e^{λₙt} = e^{λₙT} Σₖ Cₘₖ Hₖₙ
    let mut residual = 0.0f64;
    for m in 0..n {
        for j in 0..n {
            let mut s = Fixed::zero();
            for k in 0..n {
                s = &s + &(&exact[m][k] * &h[k][j]);
            }
            let mut v = &s * &growth[j];
            if m == j {
                v = &v - &Fixed::one();
            }
            residual = residual.max(v.to_f64().abs());
        }
    }
    if !(residual <= BIORTHOGONALITY_TOL) {
        return Err(Error::Conditioning(format!(
            "biorthogonality residual {residual:.3e} exceeds {BIORTHOGONALITY_TOL:.0e} \
             (Gram condition {condition:.3e}); shorten the family or lengthen the horizon"
        )));
    }
    let coeffs: Vec<Vec<Dd>> = exact.iter().map(|r| r.iter().map(Fixed::to_dd).collect()).collect();
    if coeffs.iter().flatten().any(|c| !c.hi.is_finite()) {
        return Err(Error::Conditioning("family coefficients exceed double range".into()));
    }
    Ok(BiorthogonalFamily {
        horizon,
        lambdas: lambdas.to_vec(),
        exact,
        coeffs,
        condition,
        residual,
    })
}

impl BiorthogonalFamily {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// 1-norm condition number of the shifted Gram matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// max |∫σₘ e^{λₙt} − δₘₙ| from the closed-form integrals.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn coeffs_f64(&self) -> Vec<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|r| r.iter().map(|v| v.to_f64()).collect())
            .collect()
    }

    fn shifted_exps(&self, t: f64) -> Vec<Dd> {
        self.lambdas
            .iter()
            .map(|&l| Dd::from_f64(l).mul_f64(t - self.horizon).exp())
            .collect()
    }

    /// σₘ(t) for every m, summed in double-double.
    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let e = self.shifted_exps(t);
        self.coeffs
            .iter()
            .map(|row| row.iter().zip(&e).fold(Dd::ZERO, |s, (c, x)| s + *c * *x).to_f64())
            .collect()
    }

    pub fn eval(&self, m: usize, t: f64) -> f64 {
        self.eval_all(t)[m]
    }

    /// (1/(t₁ − t₀)) ∫_{t₀}^{t₁} σₘ for every m, in closed form.
    pub fn average_all(&self, t0: f64, t1: f64) -> Vec<f64> {
        let e0 = self.shifted_exps(t0);
        let e1 = self.shifted_exps(t1);
        let w = t1 - t0;
        let avg: Vec<Dd> = (0..self.len())
            .map(|k| (e1[k] - e0[k]) / Dd::from_f64(self.lambdas[k]).mul_f64(w))
            .collect();
        self.coeffs
            .iter()
            .map(|row| row.iter().zip(&avg).fold(Dd::ZERO, |s, (c, x)| s + *c * *x).to_f64())
            .collect()
    }

    /// ‖σₘ‖_{L²(0,T)} for every m, from ∫ e^{λₖ(t−T)} e^{λⱼ(t−T)} = Hₖⱼ.
    pub fn l2_norms(&self) -> Vec<f64> {
        let h = shifted_gram(&self.lambdas, self.horizon);
        self.exact
            .iter()
            .map(|row| {
                let mut s = Fixed::zero();
                for k in 0..row.len() {
                    let mut hk = Fixed::zero();
                    for j in 0..row.len() {
                        hk = &hk + &(&h[k][j] * &row[j]);
                    }
                    s = &s + &(&row[k] * &hk);
                }
                s.to_f64().max(0.0).sqrt()
            })
            .collect()
    }
}

/// Control assembled from a modal expansion and a biorthogonal family.
#[derive(Debug, Clone)]
pub struct SynthesizedControl {
    family: BiorthogonalFamily,
    modes: Vec<EigenMode>,
    /// −μₘ / ∫_a^b Φₘ²
    weights: Vec<f64>,
    window_masses: Vec<f64>,
    window: (f64, f64),
}

pub fn synthesize_control(
    mu0: &ModalCoefficients,
    family: &BiorthogonalFamily,
    a: f64,
    b: f64,
) -> Result<SynthesizedControl> {
    let n = mu0.mu0.len();
    if family.len() != n || mu0.modes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: family.len(),
            got: n,
        });
    }
    for (m, &l) in mu0.modes.iter().zip(family.lambdas()) {
        if m.lambda != l {
            return Err(Error::InvalidParameter(
                "family eigenvalues do not match the expansion modes".into(),
            ));
        }
    }
    let window_masses = mu0
        .modes
        .iter()
        .map(|m| control_window_mass(m, a, b))
        .collect::<Result<Vec<_>>>()?;
    if let Some(k) = window_masses.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::Domain(format!(
            "mode {} has no mass on the control window",
            k + 1
        )));
    }
    let weights = mu0
        .mu0
        .iter()
        .zip(&window_masses)
        .map(|(mu, w)| -mu / w)
        .collect();
    Ok(SynthesizedControl {
        family: family.clone(),
        modes: mu0.modes.clone(),
        weights,
        window_masses,
        window: (a, b),
    })
}

impl SynthesizedControl {
    pub fn family(&self) -> &BiorthogonalFamily {
        &self.family
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn window_masses(&self) -> &[f64] {
        &self.window_masses
    }

    /// h(x, t); zero outside the closed control window.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (a, b) = self.window;
        if x < a || x > b {
            return 0.0;
        }
        let sig = self.family.eval_all(t);
        self.modes
            .iter()
            .zip(&self.weights)
            .zip(&sig)
            .map(|((m, w), s)| w * s * m.eval(x))
            .sum()
    }

    /// Values at the control nodes, averaged over each time step. A node on
    /// a window endpoint takes half the value, so the P1 field integrates
    /// like χ_(a,b) h up to O(δ²).
    pub fn sample(&self, grid: &Grid, time: &TimeGrid) -> Result<ControlTrajectory> {
        if (time.horizon() - self.family.horizon()).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "time grid horizon {} differs from family horizon {}",
                time.horizon(),
                self.family.horizon()
            )));
        }
        let shapes: Vec<Vec<f64>> = grid
            .control_nodes()
            .iter()
            .map(|&x| {
                let (a, b) = self.window;
                let edge = if (x - a).abs() < 1e-12 || (x - b).abs() < 1e-12 { 0.5 } else { 1.0 };
                self.modes
                    .iter()
                    .zip(&self.weights)
                    .map(|(m, w)| edge * w * m.eval(x))
                    .collect()
            })
            .collect();
        let mut h = ControlTrajectory::zeros(time.n_steps(), grid.n_h());
        for n in 0..time.n_steps() {
            let avg = self.family.average_all(time.time(n), time.time(n + 1));
            for (slot, shape) in h.step_mut(n).iter_mut().zip(&shapes) {
                *slot = shape.iter().zip(&avg).map(|(s, a)| s * a).sum();
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDriveReport {
    /// ⟨u_δ(0), Φₙ⟩
    pub initial: Vec<f64>,
    /// ⟨u_δ(T), Φₙ⟩ with the control
    pub controlled: Vec<f64>,
    /// ⟨u_δ(T), Φₙ⟩ without control
    pub uncontrolled: Vec<f64>,
    pub controlled_final_norm: f64,
    pub uncontrolled_final_norm: f64,
}

const PROJECTION_TOL: f64 = 1e-12;

/// Runs the FEM with and without the sampled control and projects the final
/// states on the first `n_modes` modes.
pub fn verify_null_drive(
    control: &ControlTrajectory,
    grid: &Grid,
    spec: &DegeneracySpec,
    time: &TimeGrid,
    u0: &[f64],
    n_modes: usize,
) -> Result<NullDriveReport> {
    if spec.regime() != Regime::Weak {
        return Err(Error::Regime("verify_null_drive", "weak"));
    }
    let modes = eigen_table(spec, n_modes)?;
    let prop = Propagator::new(grid, spec.alpha(), time.dt())?;
    let with = prop.final_state(u0, Some(control), time.n_steps())?;
    let without = prop.final_state(u0, None, time.n_steps())?;
    let project = |u: &[f64]| -> Vec<f64> {
        modes
            .iter()
            .map(|m| p1_inner(grid, u, |x| m.eval(x), PROJECTION_TOL))
            .collect()
    };
    Ok(NullDriveReport {
        initial: project(u0),
        controlled: project(&with),
        uncontrolled: project(&without),
        controlled_final_norm: prop.m_norm(&with),
        uncontrolled_final_norm: prop.m_norm(&without),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub alpha: f64,
    pub control_norm: f64,
    pub final_norm: f64,
    pub iters: usize,
    pub status: Option<Status>,
    /// set when the run failed; the other fields are then NaN or zero
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSweep {
    pub horizon: f64,
    pub target: f64,
    pub rows: Vec<CostRow>,
    /// least-squares slope of log(control norm) against log(1/(1 − α))
    pub slope: Option<f64>,
}

impl CostSweep {
    /// Control norms strictly increase with α (rows sorted by α).
    pub fn is_increasing(&self) -> bool {
        self.rows.iter().all(|r| r.error.is_none())
            && self.rows.windows(2).all(|w| w[1].control_norm > w[0].control_norm)
    }
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Initial datum −Φ_{α,2} interpolated on the grid.
pub fn worst_case_datum(grid: &Grid, spec: &DegeneracySpec) -> Result<Vec<f64>> {
    let m = weak_mode(spec, 2)?;
    Ok(project_initial(grid, |x| -m.eval(x)))
}

fn cost_row(alpha: f64, grid: &Grid, time: &TimeGrid, target: f64, cfg: &OptimizerConfig) -> Result<CostRow> {
    let spec = DegeneracySpec::new(alpha)?;
    if spec.regime() != Regime::Weak {
        return Err(Error::Regime("cost_sweep", "weak"));
    }
    let u0 = worst_case_datum(grid, &spec)?;
    let problem = ControlProblem::new(grid, alpha, time, u0)?;
    let cfg = OptimizerConfig {
        f_target: Some(0.5 * target * target),
        grad_tol: 0.0,
        ..*cfg
    };
    let (_, report) = adjoint::minimize(&problem, alpha, &cfg)?;
    Ok(CostRow {
        alpha,
        control_norm: report.control_l2_norm,
        final_norm: report.final_state_m_norm,
        iters: report.iters,
        status: Some(report.status),
        error: (report.final_state_m_norm > target)
            .then(|| format!("target {target:e} not reached: {:e}", report.final_state_m_norm)),
    })
}

/// Control norm needed to bring −Φ_{α,2} below `target` in M-norm, for
/// each α. Runs are independent and use at most `jobs` threads.
pub fn cost_sweep(
    alphas: &[f64],
    grid: &Grid,
    time: &TimeGrid,
    target: f64,
    cfg: &OptimizerConfig,
    jobs: usize,
) -> Result<CostSweep> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("empty alpha list".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..1.0).contains(*a)) {
        return Err(Error::InvalidParameter(format!(
            "cost sweep needs alpha in [0, 1), got {a}"
        )));
    }
    if !(target > 0.0) {
        return Err(Error::InvalidParameter("target must be positive".into()));
    }
    cfg.validate()?;
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let rows: Vec<CostRow> = pool.install(|| {
        sorted
            .par_iter()
            .map(|&alpha| {
                cost_row(alpha, grid, time, target, cfg).unwrap_or_else(|e| CostRow {
                    alpha,
                    control_norm: f64::NAN,
                    final_norm: f64::NAN,
                    iters: 0,
                    status: None,
                    error: Some(e.to_string()),
                })
            })
            .collect()
    });
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error.is_none() && r.control_norm > 0.0)
        .map(|r| ((1.0 / (1.0 - r.alpha)).ln(), r.control_norm.ln()))
        .collect();
    Ok(CostSweep {
        horizon: time.horizon(),
        target,
        slope: fit_slope(&points),
        rows,
    })
}
