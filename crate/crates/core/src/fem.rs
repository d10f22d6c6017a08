//! P1 finite elements on a uniform grid of [−1, 1] with the weighted
//! stiffness ∫|x|^α u'v', advanced in time by backward Euler:
//!
//! (M + dt·A) u⁺ = M u + dt·B h
//!
//! A is the positive-semidefinite stiffness, so the scheme dissipates the
//! M-energy unconditionally.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::quad::integrate_with_breaks;

/// Slack used when deciding whether a node lies in the control window.
const WINDOW_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_cells: usize,
    delta: f64,
    /// all nodes including the Dirichlet boundary nodes ±1
    nodes: Vec<f64>,
    a: f64,
    b: f64,
    /// first and last control node, as indices into the unknown vector
    j_a: usize,
    j_b: usize,
}

/// Uniform grid with `n_cells` elements; evenness keeps 0 a node.
pub fn build_grid(n_cells: usize, a: f64, b: f64) -> Result<Grid> {
    if n_cells == 0 || n_cells % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "cell count {n_cells} must be even and positive"
        )));
    }
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "control window ({a}, {b}) must satisfy 0 < a < b < 1"
        )));
    }
    let n = n_cells as f64;
    // (2k − n)/n is exact at k = n/2 and mirror-symmetric in k
    let nodes: Vec<f64> = (0..=n_cells).map(|k| (2.0 * k as f64 - n) / n).collect();
    let inside: Vec<usize> = (1..n_cells)
        .filter(|&k| nodes[k] >= a - WINDOW_SLACK && nodes[k] <= b + WINDOW_SLACK)
        .map(|k| k - 1)
        .collect();
    let (j_a, j_b) = match (inside.first(), inside.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "no grid node of spacing {} lies in [{a}, {b}]",
                2.0 / n
            )))
        }
    };
    Ok(Grid {
        n_cells,
        delta: 2.0 / n,
        nodes,
        a,
        b,
        j_a,
        j_b,
    })
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of interior unknowns N.
    pub fn n_nodes(&self) -> usize {
        self.n_cells - 1
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// All nodes, boundary included.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Interior nodes, aligned with state vectors.
    pub fn interior(&self) -> &[f64] {
        &self.nodes[1..self.n_cells]
    }

    pub fn window(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn j_a(&self) -> usize {
        self.j_a
    }

    pub fn j_b(&self) -> usize {
        self.j_b
    }

    pub fn n_h(&self) -> usize {
        self.j_b - self.j_a + 1
    }

    pub fn control_nodes(&self) -> &[f64] {
        &self.interior()[self.j_a..=self.j_b]
    }

    /// Index of the interior unknown sitting at x = 0.
    pub fn origin_index(&self) -> usize {
        self.n_cells / 2 - 1
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriDiag {
    pub diag: Vec<f64>,
    /// off[i] couples unknowns i and i + 1
    pub off: Vec<f64>,
}

impl TriDiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidParameter("empty tridiagonal matrix".into()));
        }
        ensure_len(diag.len() - 1, off.len())?;
        Ok(TriDiag { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// xᵀ T y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            let mut row = self.diag[i] * y[i];
            if i > 0 {
                row += self.off[i - 1] * y[i - 1];
            }
            if i + 1 < n {
                row += self.off[i] * y[i + 1];
            }
            s += x[i] * row;
        }
        s
    }

    /// self + c·other
    pub fn add_scaled(&self, c: f64, other: &TriDiag) -> Result<TriDiag> {
        ensure_len(self.dim(), other.dim())?;
        Ok(TriDiag {
            diag: self.diag.iter().zip(&other.diag).map(|(x, y)| x + c * y).collect(),
            off: self.off.iter().zip(&other.off).map(|(x, y)| x + c * y).collect(),
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            d[i][i] = self.diag[i];
            if i + 1 < n {
                d[i][i + 1] = self.off[i];
                d[i + 1][i] = self.off[i];
            }
        }
        d
    }

    pub fn factor(&self) -> Result<LdlFactor> {
        LdlFactor::new(self)
    }
}

/// T = L D Lᵀ with unit lower-bidiagonal L; requires positive pivots.
#[derive(Debug, Clone, PartialEq)]
pub struct LdlFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl LdlFactor {
    pub fn new(t: &TriDiag) -> Result<Self> {
        let n = t.dim();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        d.push(t.diag[0]);
        for i in 1..n {
            let li = t.off[i - 1] / d[i - 1];
            l.push(li);
            d.push(t.diag[i] - li * t.off[i - 1]);
        }
        if let Some(p) = d.iter().find(|&&p| !(p > 0.0)) {
            return Err(Error::Domain(format!(
                "tridiagonal matrix is not positive definite (pivot {p})"
            )));
        }
        Ok(LdlFactor { d, l })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0 && dt > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} and step {dt} must be positive"
            )));
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "step {dt} does not divide horizon {horizon}"
            )));
        }
        Ok(TimeGrid {
            horizon,
            dt,
            n_steps: steps as usize,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// t_n = n·dt
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// P1 mass matrix on the interior unknowns.
pub fn assemble_mass(grid: &Grid) -> TriDiag {
    let n = grid.n_nodes();
    let d = grid.delta;
    TriDiag {
        diag: vec![2.0 * d / 3.0; n],
        off: vec![d / 6.0; n - 1],
    }
}

/// ∫_{x0}^{x1} |x|^α dx for an element not straddling 0.
fn element_weight(x0: f64, x1: f64, alpha: f64) -> f64 {
    let e = alpha + 1.0;
    if x0 >= 0.0 {
        (x1.powf(e) - x0.powf(e)) / e
    } else {
        ((-x0).powf(e) - (-x1).powf(e)) / e
    }
}

/// Weighted P1 stiffness ∫|x|^α φ_i' φ_j' with exact element integrals.
pub fn assemble_stiffness(grid: &Grid, alpha: f64) -> Result<TriDiag> {
    if !(0.0..2.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} must lie in [0, 2)"
        )));
    }
    let n = grid.n_nodes();
    let inv_d2 = 1.0 / (grid.delta * grid.delta);
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for k in 0..grid.n_cells {
        let w = element_weight(grid.nodes[k], grid.nodes[k + 1], alpha) * inv_d2;
        // element k joins global nodes k and k + 1, i.e. unknowns k − 1 and k
        if k >= 1 {
            diag[k - 1] += w;
        }
        if k + 1 < grid.n_cells {
            diag[k] += w;
        }
        if k >= 1 && k + 1 < grid.n_cells {
            off[k - 1] -= w;
        }
    }
    Ok(TriDiag { diag, off })
}

/// B: the mass-matrix columns j_a..=j_b, applied without forming B.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInjection {
    mass: TriDiag,
    j_a: usize,
    j_b: usize,
}

pub fn assemble_control_injection(grid: &Grid) -> ControlInjection {
    ControlInjection {
        mass: assemble_mass(grid),
        j_a: grid.j_a,
        j_b: grid.j_b,
    }
}

impl ControlInjection {
    pub fn rows(&self) -> usize {
        self.mass.dim()
    }

    /// First and last control unknown.
    pub fn range(&self) -> (usize, usize) {
        (self.j_a, self.j_b)
    }

    pub fn cols(&self) -> usize {
        self.j_b - self.j_a + 1
    }

    /// out += c·B h
    pub fn apply_add(&self, h: &[f64], c: f64, out: &mut [f64]) {
        let n = self.rows();
        for (col, &hv) in h.iter().enumerate() {
            let j = self.j_a + col;
            let v = c * hv;
            out[j] += self.mass.diag[j] * v;
            if j > 0 {
                out[j - 1] += self.mass.off[j - 1] * v;
            }
            if j + 1 < n {
                out[j + 1] += self.mass.off[j] * v;
            }
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.apply_add(h, 1.0, &mut out);
        out
    }

    /// Bᵀ v
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let n = self.rows();
        (self.j_a..=self.j_b)
            .map(|j| {
                let mut s = self.mass.diag[j] * v[j];
                if j > 0 {
                    s += self.mass.off[j - 1] * v[j - 1];
                }
                if j + 1 < n {
                    s += self.mass.off[j] * v[j + 1];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = self.mass.to_dense();
        m.iter().map(|row| row[self.j_a..=self.j_b].to_vec()).collect()
    }
}

/// Control values h^n on the control nodes for n = 0..n_steps − 1, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTrajectory {
    n_steps: usize,
    n_h: usize,
    values: Vec<f64>,
}

impl ControlTrajectory {
    pub fn zeros(n_steps: usize, n_h: usize) -> Self {
        ControlTrajectory {
            n_steps,
            n_h,
            values: vec![0.0; n_steps * n_h],
        }
    }

    pub fn from_flat(n_steps: usize, n_h: usize, values: Vec<f64>) -> Result<Self> {
        ensure_len(n_steps * n_h, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("control has non-finite entries".into()));
        }
        Ok(ControlTrajectory { n_steps, n_h, values })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    /// h^n, acting on (t_n, t_{n+1})
    pub fn step(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_h..(n + 1) * self.n_h]
    }

    pub fn step_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.n_h..(n + 1) * self.n_h]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    /// (Σ_n dt · h^nᵀ M_h h^n)^{1/2} with M_h the mass block on the control nodes.
    pub fn l2_norm(&self, mass: &TriDiag, j_a: usize, dt: f64) -> f64 {
        let mut s = 0.0;
        for n in 0..self.n_steps {
            let h = self.step(n);
            for (i, &hi) in h.iter().enumerate() {
                let g = j_a + i;
                let mut row = mass.diag[g] * hi;
                if i > 0 {
                    row += mass.off[g - 1] * h[i - 1];
                }
                if i + 1 < h.len() {
                    row += mass.off[g] * h[i + 1];
                }
                s += hi * row;
            }
        }
        (dt * s).sqrt()
    }
}

/// The discrete evolution for one (grid, α, dt), with M + dt·A factored once.
#[derive(Debug, Clone)]
pub struct Propagator {
    mass: TriDiag,
    stiffness: TriDiag,
    injection: ControlInjection,
    system: LdlFactor,
    dt: f64,
}

impl Propagator {
    pub fn new(grid: &Grid, alpha: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
        }
        let mass = assemble_mass(grid);
        let stiffness = assemble_stiffness(grid, alpha)?;
        let system = mass.add_scaled(dt, &stiffness)?.factor()?;
        Ok(Propagator {
            mass,
            stiffness,
            injection: assemble_control_injection(grid),
            system,
            dt,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn n_h(&self) -> usize {
        self.injection.cols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mass(&self) -> &TriDiag {
        &self.mass
    }

    pub fn stiffness(&self) -> &TriDiag {
        &self.stiffness
    }

    pub fn injection(&self) -> &ControlInjection {
        &self.injection
    }

    pub fn system(&self) -> &LdlFactor {
        &self.system
    }

    /// One backward Euler step; `h = None` is the uncontrolled step.
    pub fn step(&self, u: &[f64], h: Option<&[f64]>) -> Result<Vec<f64>> {
        ensure_len(self.dim(), u.len())?;
        if let Some(h) = h {
            ensure_len(self.n_h(), h.len())?;
        }
        let mut out = vec![0.0; u.len()];
        self.step_into(u, h, &mut out);
        Ok(out)
    }

    fn step_into(&self, u: &[f64], h: Option<&[f64]>, out: &mut [f64]) {
        self.mass.matvec_into(u, out);
        if let Some(h) = h {
            self.injection.apply_add(h, self.dt, out);
        }
        self.system.solve_in_place(out);
    }

    fn check(&self, u0: &[f64], controls: Option<&ControlTrajectory>, steps: usize) -> Result<()> {
        ensure_len(self.dim(), u0.len())?;
        if let Some(c) = controls {
            ensure_len(steps, c.n_steps())?;
            ensure_len(self.n_h(), c.n_h())?;
        }
        Ok(())
    }

    /// u⁰..u^{N_T}.
    pub fn solve_forward(
        &self,
        u0: &[f64],
        controls: Option<&ControlTrajectory>,
        steps: usize,
    ) -> Result<Vec<Vec<f64>>> {
        self.check(u0, controls, steps)?;
        let mut traj = Vec::with_capacity(steps + 1);
        traj.push(u0.to_vec());
        for n in 0..steps {
            let mut next = vec![0.0; u0.len()];
            self.step_into(&traj[n], controls.map(|c| c.step(n)), &mut next);
            traj.push(next);
        }
        Ok(traj)
    }

    /// u^{N_T} only, without storing the trajectory.
    pub fn final_state(
        &self,
        u0: &[f64],
        controls: Option<&ControlTrajectory>,
        steps: usize,
    ) -> Result<Vec<f64>> {
        self.check(u0, controls, steps)?;
        let mut u = u0.to_vec();
        let mut next = vec![0.0; u.len()];
        for n in 0..steps {
            self.step_into(&u, controls.map(|c| c.step(n)), &mut next);
            std::mem::swap(&mut u, &mut next);
        }
        Ok(u)
    }

    /// √(uᵀ M u)
    pub fn m_norm(&self, u: &[f64]) -> f64 {
        self.mass.bilinear(u, u).max(0.0).sqrt()
    }
}

/// Free-function form of [`Propagator::solve_forward`].
pub fn solve_forward(
    grid: &Grid,
    alpha: f64,
    time: &TimeGrid,
    u0: &[f64],
    controls: Option<&ControlTrajectory>,
) -> Result<Vec<Vec<f64>>> {
    Propagator::new(grid, alpha, time.dt())?.solve_forward(u0, controls, time.n_steps())
}

/// Nodal interpolation at the interior nodes.
pub fn project_initial<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> Vec<f64> {
    grid.interior().iter().map(|&x| f(x)).collect()
}

/// χ_(l,r) with the value 1/2 on the two jump points.
pub fn indicator(l: f64, r: f64) -> impl Fn(f64) -> f64 + Clone + Send + Sync {
    move |x: f64| {
        const EPS: f64 = 1e-12;
        if (x - l).abs() <= EPS || (x - r).abs() <= EPS {
            0.5
        } else if x > l && x < r {
            1.0
        } else {
            0.0
        }
    }
}

/// Value at x of the P1 interpolant with the given interior coefficients.
pub fn interpolate(grid: &Grid, u: &[f64], x: f64) -> f64 {
    if !(x.abs() < 1.0) {
        return 0.0;
    }
    let s = (x + 1.0) / grid.delta;
    let k = (s.floor() as usize).min(grid.n_cells - 1);
    let t = s - k as f64;
    let nodal = |k: usize| {
        if k == 0 || k == grid.n_cells {
            0.0
        } else {
            u[k - 1]
        }
    };
    (1.0 - t) * nodal(k) + t * nodal(k + 1)
}

/// ∫ u_δ f over [−1, 1], panel-wise over the elements.
pub fn p1_inner<F: Fn(f64) -> f64>(grid: &Grid, u: &[f64], f: F, tol: f64) -> f64 {
    integrate_with_breaks(
        |x| interpolate(grid, u, x) * f(x),
        -1.0,
        1.0,
        &grid.nodes[1..grid.n_cells],
        tol,
    )
    .value
}

/// Smallest λ with A v = λ M v, by inverse iteration on the SPD pencil.
pub fn smallest_generalized_eigenvalue(a: &TriDiag, m: &TriDiag) -> Result<f64> {
    ensure_len(a.dim(), m.dim())?;
    let fa = a.factor()?;
    let n = a.dim();
    // a smooth positive start has a nonzero component on the ground mode
    let mut v: Vec<f64> = (0..n)
        .map(|i| ((i + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).sin())
        .collect();
    let mut lambda = f64::INFINITY;
    for _ in 0..500 {
        let w = fa.solve(&m.matvec(&v));
        let norm = m.bilinear(&w, &w).sqrt();
        v = w.iter().map(|x| x / norm).collect();
        let next = a.bilinear(&v, &v);
        if (next - lambda).abs() <= 1e-15 * next {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(lambda)
}
