//! Quasi-Newton minimisation (dense BFGS or L-BFGS) with a strong Wolfe
//! line search.
//!
//! Step lengths on the control problems span many decades, so trial steps
//! come from secants of the directional derivative, which are exact on a
//! quadratic and extrapolate across decades in one probe. Function values
//! only gate acceptance: near the optimum they sit at the rounding floor
//! while slopes stay informative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A smooth objective with gradient.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Returns f(x) and writes ∇f(x) into `grad`.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
    /// dirᵀ ∇²f(x) dir when cheaply available. For a quadratic this makes
    /// the first trial step the exact minimiser along the line.
    fn curvature(&self, _x: &[f64], _dir: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// stop once ‖∇f‖_∞ ≤ grad_tol · ‖∇f(x₀)‖_∞; 0 leaves termination to
    /// max_iters, f_target and the line search
    pub grad_tol: f64,
    /// limited-memory pairs; `None` keeps the dense inverse Hessian
    pub memory: Option<usize>,
    pub c1: f64,
    pub c2: f64,
    /// stop once f ≤ f_target
    pub f_target: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 500,
            grad_tol: 0.0,
            memory: None,
            c1: 1e-4,
            c2: 0.9,
            f_target: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "line search needs 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidParameter("grad_tol must be non-negative".into()));
        }
        if self.memory == Some(0) {
            return Err(Error::InvalidParameter("memory must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    GradientTolerance,
    TargetReached,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_sup: f64,
    pub iters: usize,
    pub evals: usize,
    /// f at x₀ followed by f after every accepted step
    pub history: Vec<f64>,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Inverse-Hessian approximation.
enum Hessian {
    Dense { n: usize, h: Vec<f64>, scaled: bool },
    Limited { m: usize, pairs: Vec<(Vec<f64>, Vec<f64>, f64)>, gamma: f64 },
}

impl Hessian {
    fn new(n: usize, memory: Option<usize>) -> Self {
        match memory {
            None => {
                let mut h = vec![0.0; n * n];
                for i in 0..n {
                    h[i * n + i] = 1.0;
                }
                Hessian::Dense { n, h, scaled: false }
            }
            Some(m) => Hessian::Limited {
                m,
                pairs: Vec::with_capacity(m),
                gamma: 1.0,
            },
        }
    }

    /// d = −H g
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        match self {
            Hessian::Dense { n, h, .. } => (0..*n)
                .map(|i| -dot(&h[i * n..(i + 1) * n], g))
                .collect(),
            Hessian::Limited { pairs, gamma, .. } => {
                let mut q = g.to_vec();
                let mut alphas = Vec::with_capacity(pairs.len());
                for (s, y, rho) in pairs.iter().rev() {
                    let a = rho * dot(s, &q);
                    q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                    alphas.push(a);
                }
                q.iter_mut().for_each(|v| *v *= gamma);
                for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
                    let b = rho * dot(y, &q);
                    q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
                }
                q.iter_mut().for_each(|v| *v = -*v);
                q
            }
        }
    }

    fn update(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if !(sy > 0.0) || !(yy > 0.0) {
            return;
        }
        let rho = 1.0 / sy;
        match self {
            Hessian::Dense { n, h, scaled } => {
                let n = *n;
                if !*scaled {
                    // first pair: rescale the identity to the observed curvature
                    let g = sy / yy;
                    h.iter_mut().for_each(|v| *v *= g);
                    *scaled = true;
                }
                let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
                let yhy = dot(&y, &hy);
                let c = rho * rho * yhy + rho;
                for i in 0..n {
                    let row = &mut h[i * n..(i + 1) * n];
                    let (si, hyi) = (s[i], hy[i]);
                    for j in 0..n {
                        row[j] += c * si * s[j] - rho * (si * hy[j] + hyi * s[j]);
                    }
                }
            }
            Hessian::Limited { m, pairs, gamma } => {
                *gamma = sy / yy;
                if pairs.len() == *m {
                    pairs.remove(0);
                }
                pairs.push((s, y, rho));
            }
        }
    }
}

struct Point {
    t: f64,
    f: f64,
    d: f64,
    g: Vec<f64>,
}

/// Zero of the secant through two directional derivatives; exact for a
/// quadratic along the line.
fn secant(t0: f64, d0: f64, t1: f64, d1: f64) -> Option<f64> {
    let t = t1 - d1 * (t1 - t0) / (d1 - d0);
    t.is_finite().then_some(t)
}

const MAX_LS_EVALS: usize = 40;
/// Largest factor by which one extrapolation may stretch the step.
const MAX_STRETCH: f64 = 1e12;

struct LineSearch<'a, O: Objective> {
    obj: &'a O,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    d0: f64,
    c1: f64,
    c2: f64,
    evals: usize,
}

impl<O: Objective> LineSearch<'_, O> {
    fn probe(&mut self, t: f64) -> Point {
        let xt: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + t * d).collect();
        let mut g = vec![0.0; xt.len()];
        let f = self.obj.eval(&xt, &mut g);
        self.evals += 1;
        let d = dot(&g, self.dir);
        Point { t, f, d, g }
    }

    /// Armijo, or no increase at all. Near the rounding floor of f the
    /// Armijo margin is below the noise in f while the slope is still
    /// reliable, so the second form keeps progress without allowing ascent.
    fn decrease(&self, p: &Point) -> bool {
        p.f <= self.f0 + self.c1 * p.t * self.d0 || p.f <= self.f0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.d.abs() <= -self.c2 * self.d0
    }

    fn accept(&self, p: &Point) -> bool {
        self.decrease(p) && self.curvature(p)
    }

    /// Returns an accepted point; on failure the best decreasing point
    /// seen, if any. Trial steps come from slopes only.
    fn run(&mut self, t_init: f64) -> std::result::Result<Point, Option<Point>> {
        let mut prev = Point {
            t: 0.0,
            f: self.f0,
            d: self.d0,
            g: Vec::new(),
        };
        let mut t = t_init;
        while self.evals < MAX_LS_EVALS {
            let cur = self.probe(t);
            if !cur.f.is_finite() {
                t = 0.5 * (prev.t + t);
                continue;
            }
            if self.accept(&cur) {
                return Ok(cur);
            }
            if cur.d >= 0.0 || !self.decrease(&cur) {
                return self.zoom(prev, cur);
            }
            let span = cur.t - prev.t;
            let lo = cur.t + 2.0 * span;
            let hi = cur.t + MAX_STRETCH * span;
            t = match secant(prev.t, prev.d, cur.t, cur.d) {
                Some(c) if cur.d > prev.d => c.clamp(lo, hi),
                _ => cur.t + 4.0 * span,
            };
            prev = cur;
        }
        Err(if prev.t > 0.0 { Some(prev) } else { None })
    }

    /// `lo` decreases with negative slope; `hi` has non-negative slope or
    /// failed to decrease, so an acceptable step lies between them.
    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> std::result::Result<Point, Option<Point>> {
        while self.evals < MAX_LS_EVALS {
            let (a, b) = if lo.t < hi.t { (lo.t, hi.t) } else { (hi.t, lo.t) };
            if b - a <= 1e-14 * b.abs() {
                break;
            }
            let t = match secant(lo.t, lo.d, hi.t, hi.d) {
                Some(c) if hi.d >= 0.0 && c > a && c < b => c,
                _ => 0.5 * (a + b),
            };
            let cur = self.probe(t);
            if self.accept(&cur) {
                return Ok(cur);
            }
            if cur.d >= 0.0 || !self.decrease(&cur) {
                hi = cur;
            } else {
                lo = cur;
            }
        }
        Err(if lo.t > 0.0 { Some(lo) } else { None })
    }
}

/// Minimises `obj` from `x0`.
pub fn minimize<O: Objective>(obj: &O, x0: Vec<f64>, cfg: &OptimizerConfig) -> Result<Outcome> {
    cfg.validate()?;
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    let mut evals = 1;
    let mut history = vec![f];
    let g0 = sup(&g);
    let tol = cfg.grad_tol * g0;
    let mut hess = Hessian::new(n, cfg.memory);
    let mut iters = 0;

    let done = |f: f64, g: &[f64]| -> Option<Status> {
        if cfg.f_target.is_some_and(|target| f <= target) {
            Some(Status::TargetReached)
        } else if sup(g) <= tol {
            Some(Status::GradientTolerance)
        } else {
            None
        }
    };

    let status = loop {
        if let Some(s) = done(f, &g) {
            break s;
        }
        if iters >= cfg.max_iters {
            break Status::MaxIterations;
        }
        let mut dir = hess.direction(&g);
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) {
            // lost descent: restart from steepest descent
            hess = Hessian::new(n, cfg.memory);
            dir = g.iter().map(|v| -v).collect();
            d0 = -dot(&g, &g);
        }
        let t_init = match obj.curvature(&x, &dir) {
            Some(c) if c > 0.0 => -d0 / c,
            // before any curvature is known, size the step by the root of
            // the linear model; f ≥ 0 objectives make that the natural scale
            _ if iters == 0 && f > 0.0 => f / -d0,
            _ => 1.0,
        };
        let mut ls = LineSearch {
            obj,
            x: &x,
            dir: &dir,
            f0: f,
            d0,
            c1: cfg.c1,
            c2: cfg.c2,
            evals: 0,
        };
        let result = ls.run(t_init);
        evals += ls.evals;
        let (point, failed) = match result {
            Ok(p) => (p, false),
            Err(Some(p)) if p.f < f => (p, true),
            Err(_) => break Status::LineSearchFailed,
        };
        let s: Vec<f64> = dir.iter().map(|d| point.t * d).collect();
        let y: Vec<f64> = point.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        f = point.f;
        g = point.g;
        history.push(f);
        iters += 1;
        if failed {
            if let Some(s) = done(f, &g) {
                break s;
            }
            break Status::LineSearchFailed;
        }
        hess.update(s, y);
    };
    Ok(Outcome {
        grad_sup: sup(&g),
        x,
        f,
        iters,
        evals,
        history,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Quadratic {
        diag: Vec<f64>,
        shift: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.diag.len()
        }
        fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut f = 0.0;
            for i in 0..x.len() {
                let r = x[i] - self.shift[i];
                grad[i] = self.diag[i] * r;
                f += 0.5 * self.diag[i] * r * r;
            }
            f
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        }
    }

    #[test]
    fn secant_is_exact_on_quadratics() {
        // f = (t − 3)², f' = 2(t − 3), sampled at 0 and 1
        let t = secant(0.0, -6.0, 1.0, -4.0).unwrap();
        assert_relative_eq!(t, 3.0, max_relative = 1e-14);
    }

    #[test]
    fn badly_scaled_quadratic() {
        let n = 30;
        let obj = Quadratic {
            diag: (0..n).map(|i| 10f64.powf(-12.0 + 0.3 * i as f64)).collect(),
            shift: vec![1.0; n],
        };
        for memory in [None, Some(10)] {
            let cfg = OptimizerConfig {
                memory,
                max_iters: 2000,
                grad_tol: 1e-12,
                ..Default::default()
            };
            let out = minimize(&obj, vec![0.0; n], &cfg).unwrap();
            // limited memory converges far more slowly at this conditioning
            let bound = if memory.is_none() { 1e-12 } else { 1e-6 };
            assert!(out.f < bound * out.history[0], "{memory:?}: {} {:?}", out.f, out.status);
            assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        for memory in [None, Some(5)] {
            let cfg = OptimizerConfig {
                memory,
                c2: 0.9,
                ..Default::default()
            };
            let out = minimize(&Rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
            assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_start_stops_immediately() {
        let obj = Quadratic {
            diag: vec![1.0; 3],
            shift: vec![0.0; 3],
        };
        let out = minimize(&obj, vec![0.0; 3], &OptimizerConfig::default()).unwrap();
        assert_eq!(out.iters, 0);
        assert_eq!(out.status, Status::GradientTolerance);
    }

    #[test]
    fn target_stops_early() {
        let obj = Quadratic {
            diag: (1..=20).map(|i| i as f64).collect(),
            shift: vec![1.0; 20],
        };
        let cfg = OptimizerConfig {
            f_target: Some(1e-3),
            ..Default::default()
        };
        let out = minimize(&obj, vec![0.0; 20], &cfg).unwrap();
        assert_eq!(out.status, Status::TargetReached);
        assert!(out.f <= 1e-3);
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig {
            c1: 0.5,
            c2: 0.4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let obj = Quadratic {
            diag: vec![1.0],
            shift: vec![1.0],
        };
        assert!(minimize(&obj, vec![0.0, 0.0], &OptimizerConfig::default()).is_err());
    }
}
