//! Central finite-difference reference for the control gradient.
//!
//! J is quadratic in h, so the central quotient has no truncation error and
//! only rounding limits it. The forward solves here run in double-double
//! arithmetic so that a step of 1e−6 stays far above the rounding floor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::ControlProblem;
use crate::dd::Dd;
use crate::error::{ensure_len, Result};
use crate::fem::ControlTrajectory;

/// Forward map of a [`ControlProblem`] evaluated in double-double.
struct DdForward {
    m_diag: Vec<f64>,
    m_off: Vec<f64>,
    /// LDLᵀ of M + dt·A
    d: Vec<Dd>,
    l: Vec<Dd>,
    dt: f64,
    j_a: usize,
    n_h: usize,
    steps: usize,
    u0: Vec<f64>,
}

impl DdForward {
    fn new(p: &ControlProblem) -> Self {
        let prop = p.propagator();
        let m = prop.mass();
        let a = prop.stiffness();
        let dt = prop.dt();
        let n = m.dim();
        let kd: Vec<Dd> = (0..n)
            .map(|i| Dd::from_f64(m.diag[i]) + Dd::from_f64(a.diag[i]).mul_f64(dt))
            .collect();
        let ko: Vec<Dd> = (0..n - 1)
            .map(|i| Dd::from_f64(m.off[i]) + Dd::from_f64(a.off[i]).mul_f64(dt))
            .collect();
        let mut d = vec![kd[0]];
        let mut l = Vec::with_capacity(n - 1);
        for i in 1..n {
            let li = ko[i - 1] / d[i - 1];
            l.push(li);
            d.push(kd[i] - li * ko[i - 1]);
        }
        let (j_a, j_b) = prop.injection().range();
        DdForward {
            m_diag: m.diag.clone(),
            m_off: m.off.clone(),
            d,
            l,
            dt,
            j_a,
            n_h: j_b - j_a + 1,
            steps: p.steps(),
            u0: p.u0().to_vec(),
        }
    }

    fn mass_mul(&self, u: &[Dd]) -> Vec<Dd> {
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut s = u[i].mul_f64(self.m_diag[i]);
                if i > 0 {
                    s = s + u[i - 1].mul_f64(self.m_off[i - 1]);
                }
                if i + 1 < n {
                    s = s + u[i + 1].mul_f64(self.m_off[i]);
                }
                s
            })
            .collect()
    }

    fn objective(&self, h: &[Dd]) -> Dd {
        let n = self.u0.len();
        let mut u: Vec<Dd> = self.u0.iter().map(|&v| Dd::from_f64(v)).collect();
        for step in 0..self.steps {
            let mut rhs = self.mass_mul(&u);
            // dt·B h with B the mass columns j_a..j_b
            let hs = &h[step * self.n_h..(step + 1) * self.n_h];
            let mut embedded = vec![Dd::ZERO; n];
            for (c, &v) in hs.iter().enumerate() {
                embedded[self.j_a + c] = v.mul_f64(self.dt);
            }
            let bh = self.mass_mul(&embedded);
            for i in 0..n {
                rhs[i] = rhs[i] + bh[i];
            }
            for i in 1..n {
                rhs[i] = rhs[i] - self.l[i - 1] * rhs[i - 1];
            }
            for i in 0..n {
                rhs[i] = rhs[i] / self.d[i];
            }
            for i in (0..n - 1).rev() {
                rhs[i] = rhs[i] - self.l[i] * rhs[i + 1];
            }
            u = rhs;
        }
        let mu = self.mass_mul(&u);
        let mut s = Dd::ZERO;
        for (a, b) in u.iter().zip(&mu) {
            s = s + *a * *b;
        }
        s.mul_f64(0.5)
    }
}

/// (J(h + ε eᵢ) − J(h − ε eᵢ)) / 2ε for each requested component.
pub fn central_differences(
    problem: &ControlProblem,
    h: &ControlTrajectory,
    components: &[usize],
    eps: f64,
) -> Result<Vec<f64>> {
    let fwd = DdForward::new(problem);
    ensure_len(fwd.steps * fwd.n_h, h.as_flat().len())?;
    let base: Vec<Dd> = h.as_flat().iter().map(|&v| Dd::from_f64(v)).collect();
    Ok(components
        .iter()
        .map(|&i| {
            let mut hp = base.clone();
            hp[i] = hp[i] + Dd::from_f64(eps);
            let mut hm = base.clone();
            hm[i] = hm[i] - Dd::from_f64(eps);
            ((fwd.objective(&hp) - fwd.objective(&hm)) / Dd::from_f64(2.0 * eps)).to_f64()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub seed: u64,
    pub eps: f64,
    pub components: Vec<usize>,
    pub adjoint: Vec<f64>,
    pub finite_difference: Vec<f64>,
    pub max_relative_error: f64,
}

/// Compares the adjoint gradient with central differences at a random
/// control with entries uniform in [−1, 1].
pub fn check_gradient(problem: &ControlProblem, samples: usize, eps: f64, seed: u64) -> Result<GradientCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_h = problem.propagator().n_h();
    let dim = problem.steps() * n_h;
    let h = ControlTrajectory::from_flat(
        problem.steps(),
        n_h,
        (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let components: Vec<usize> = (0..samples).map(|_| rng.gen_range(0..dim)).collect();
    let (_, grad) = problem.value_and_gradient(&h)?;
    let adjoint: Vec<f64> = components.iter().map(|&i| grad.as_flat()[i]).collect();
    let finite_difference = central_differences(problem, &h, &components, eps)?;
    let max_relative_error = adjoint
        .iter()
        .zip(&finite_difference)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(GradientCheck {
        seed,
        eps,
        components,
        adjoint,
        finite_difference,
        max_relative_error,
    })
}
