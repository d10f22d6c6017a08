//! Eigenvalues and L²-normalised eigenfunctions of u ↦ −(|x|^α u')' on
//! (−1, 1) with Dirichlet conditions.
//!
//! With ν = |α − 1|/(2 − α) and κ = (2 − α)/2 every eigenfunction is, on
//! each half-interval, a multiple of |x|^{(1−α)/2} J_{±ν}(j |x|^κ) for a zero
//! j of the Bessel function used, and the eigenvalue is κ² j².
//!
//! * α ∈ [1, 2) (strong): zeros of J_ν; every eigenvalue has a left- and a
//!   right-supported eigenfunction, the two halves being decoupled.
//! * α ∈ [0, 1) (weak): odd eigenfunctions from zeros of J_ν, even ones from
//!   zeros of J_{−ν}. The zeros interlace, so the merged sequence alternates
//!   even (odd global index) and odd (even global index) modes.

use serde::{Deserialize, Serialize};

use crate::bessel::{j_prime_unchecked, j_unchecked, BesselOrder, ZeroTable};
use crate::error::{Error, Result};
use crate::gamma::gamma_unchecked;
use crate::quad::{integrate, integrate_with_breaks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Strong,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    LeftSupport,
    RightSupport,
    Odd,
    Even,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::LeftSupport => "left",
            Branch::RightSupport => "right",
            Branch::Odd => "odd",
            Branch::Even => "even",
        }
    }
}

/// Degeneracy exponent α with its derived order ν and scale κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracySpec {
    alpha: f64,
    nu: f64,
    kappa: f64,
}

impl DegeneracySpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..2.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha} must lie in [0, 2)"
            )));
        }
        Ok(DegeneracySpec {
            alpha,
            nu: (alpha - 1.0).abs() / (2.0 - alpha),
            kappa: 0.5 * (2.0 - alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// α = 1 belongs to the strong regime.
    pub fn regime(&self) -> Regime {
        if self.alpha < 1.0 {
            Regime::Weak
        } else {
            Regime::Strong
        }
    }
}

/// One normalised eigenpair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenMode {
    pub regime: Regime,
    pub branch: Branch,
    /// index n within the branch (n-th zero of the Bessel function used)
    pub index: usize,
    /// position in the global enumeration by increasing eigenvalue; in the
    /// strong regime the left mode of pair n is 2n − 1 and the right one 2n
    pub global_index: usize,
    pub lambda: f64,
    pub norm_const: f64,
    /// Bessel order used on each half (ν or −ν)
    pub order: f64,
    /// the Bessel zero j with λ = κ² j²
    pub zero: f64,
    alpha: f64,
    kappa: f64,
}

impl EigenMode {
    fn build(
        spec: &DegeneracySpec,
        branch: Branch,
        index: usize,
        global_index: usize,
        order: f64,
        zero: f64,
    ) -> Self {
        let regime = spec.regime();
        let deriv = j_prime_unchecked(order, zero).abs();
        let scale = match regime {
            Regime::Strong => 2.0 * spec.kappa,
            Regime::Weak => spec.kappa,
        };
        EigenMode {
            regime,
            branch,
            index,
            global_index,
            lambda: spec.kappa * spec.kappa * zero * zero,
            norm_const: scale.sqrt() / deriv,
            order,
            zero,
            alpha: spec.alpha,
            kappa: spec.kappa,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sqrt_lambda(&self) -> f64 {
        self.kappa * self.zero
    }

    /// Normalised eigenfunction value; zero outside [−1, 1]. Strong modes
    /// vanish at x = 0, the boundary of their support.
    pub fn eval(&self, x: f64) -> f64 {
        if !(x.abs() <= 1.0) {
            return 0.0;
        }
        let sign = match self.branch {
            Branch::RightSupport if x <= 0.0 => return 0.0,
            Branch::LeftSupport if x >= 0.0 => return 0.0,
            Branch::Odd if x < 0.0 => -1.0,
            _ => 1.0,
        };
        sign * self.norm_const * self.radial(x.abs())
    }

    /// r^{(1−α)/2} J_order(j r^κ) for r ∈ [0, 1], with its limit at r = 0.
    fn radial(&self, r: f64) -> f64 {
        let p = 0.5 * (1.0 - self.alpha);
        if r == 0.0 {
            let e = p + self.order * self.kappa;
            if e > 1e-12 {
                return 0.0;
            }
            return (0.5 * self.zero).powf(self.order) / gamma_unchecked(self.order + 1.0);
        }
        r.powf(p) * j_unchecked(self.order, self.zero * r.powf(self.kappa))
    }

    /// Points where the eigenfunction is not smooth; quadrature splits there.
    pub fn breakpoints(&self) -> &'static [f64] {
        &[0.0]
    }
}

fn strong_pair(spec: &DegeneracySpec, n: usize, zero: f64) -> [EigenMode; 2] {
    [
        EigenMode::build(spec, Branch::LeftSupport, n, 2 * n - 1, spec.nu, zero),
        EigenMode::build(spec, Branch::RightSupport, n, 2 * n, spec.nu, zero),
    ]
}

/// Eigenpairs in increasing order: 2·count modes (count left/right pairs)
/// in the strong regime, `count` merged modes in the weak regime.
pub fn eigen_table(spec: &DegeneracySpec, count: usize) -> Result<Vec<EigenMode>> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    match spec.regime() {
        Regime::Strong => {
            let zeros = ZeroTable::new(BesselOrder::new(spec.nu)?, count)?;
            Ok(zeros
                .zeros()
                .iter()
                .enumerate()
                .flat_map(|(i, &z)| strong_pair(spec, i + 1, z))
                .collect())
        }
        Regime::Weak => {
            let even = ZeroTable::new(BesselOrder::new(-spec.nu)?, count.div_ceil(2))?;
            let odd = ZeroTable::new(BesselOrder::new(spec.nu)?, count / 2)?;
            Ok((1..=count)
                .map(|k| weak_from_tables(spec, k, &even, &odd))
                .collect())
        }
    }
}

fn weak_from_tables(spec: &DegeneracySpec, k: usize, even: &ZeroTable, odd: &ZeroTable) -> EigenMode {
    let n = k.div_ceil(2);
    if k % 2 == 1 {
        EigenMode::build(spec, Branch::Even, n, k, -spec.nu, even.zeros()[n - 1])
    } else {
        EigenMode::build(spec, Branch::Odd, n, k, spec.nu, odd.zeros()[n - 1])
    }
}

/// The weak-regime mode with the given global index (1-based).
pub fn weak_mode(spec: &DegeneracySpec, global_index: usize) -> Result<EigenMode> {
    if spec.regime() != Regime::Weak {
        return Err(Error::Regime("weak_mode", "weak"));
    }
    if global_index == 0 {
        return Err(Error::InvalidParameter("mode index starts at 1".into()));
    }
    let n = global_index.div_ceil(2);
    let (branch, order) = if global_index % 2 == 1 {
        (Branch::Even, -spec.nu)
    } else {
        (Branch::Odd, spec.nu)
    };
    let zeros = ZeroTable::new(BesselOrder::new(order)?, n)?;
    Ok(EigenMode::build(spec, branch, n, global_index, order, zeros.zeros()[n - 1]))
}

/// The n-th strong-regime mode on the given side.
pub fn strong_mode(spec: &DegeneracySpec, branch: Branch, n: usize) -> Result<EigenMode> {
    if spec.regime() != Regime::Strong {
        return Err(Error::Regime("strong_mode", "strong"));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("mode index starts at 1".into()));
    }
    let zeros = ZeroTable::new(BesselOrder::new(spec.nu)?, n)?;
    let [left, right] = strong_pair(spec, n, zeros.zeros()[n - 1]);
    match branch {
        Branch::LeftSupport => Ok(left),
        Branch::RightSupport => Ok(right),
        _ => Err(Error::InvalidParameter(format!(
            "branch {branch:?} does not exist in the strong regime"
        ))),
    }
}

/// Checked evaluation of a mode at x ∈ [−1, 1].
pub fn eval_eigenfunction(mode: &EigenMode, spec: &DegeneracySpec, x: f64) -> Result<f64> {
    if mode.alpha != spec.alpha {
        return Err(Error::InvalidParameter(format!(
            "mode built for alpha = {}, evaluated with alpha = {}",
            mode.alpha, spec.alpha
        )));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("x = {x} outside [-1, 1]")));
    }
    Ok(mode.eval(x))
}

/// Consecutive gaps √λ_{k+1} − √λ_k of the merged weak spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub min_gap: f64,
    /// gaps from an even global index 2n to 2n + 1 (odd branch to even branch)
    pub even_odd_gaps: Vec<f64>,
    /// gaps from an odd global index 2n − 1 to 2n (even branch to odd branch)
    pub odd_even_gaps: Vec<f64>,
}

/// As n grows, the odd→even gaps tend to κπν and the even→odd ones to κπ(1 − ν).
pub fn sqrt_gap_stats(spec: &DegeneracySpec, count: usize) -> Result<GapStats> {
    if spec.regime() != Regime::Weak {
        return Err(Error::Regime("sqrt_gap_stats", "weak"));
    }
    if count < 4 {
        return Err(Error::InvalidParameter("gap statistics need count >= 4".into()));
    }
    let modes = eigen_table(spec, count)?;
    let mut stats = GapStats {
        min_gap: f64::INFINITY,
        even_odd_gaps: Vec::with_capacity(count / 2),
        odd_even_gaps: Vec::with_capacity(count / 2),
    };
    for w in modes.windows(2) {
        let gap = w[1].sqrt_lambda() - w[0].sqrt_lambda();
        stats.min_gap = stats.min_gap.min(gap);
        if w[0].global_index % 2 == 1 {
            stats.odd_even_gaps.push(gap);
        } else {
            stats.even_odd_gaps.push(gap);
        }
    }
    Ok(stats)
}

const WINDOW_TOL: f64 = 1e-10;

/// ∫_a^b Φ² for 0 < a < b < 1.
pub fn control_window_mass(mode: &EigenMode, a: f64, b: f64) -> Result<f64> {
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "control window ({a}, {b}) must satisfy 0 < a < b < 1"
        )));
    }
    if mode.branch == Branch::LeftSupport {
        return Ok(0.0);
    }
    Ok(integrate(|x| mode.eval(x).powi(2), a, b, WINDOW_TOL).value)
}

/// ∫_{−1}^{1} f g, split at 0 and at any extra breakpoints.
pub fn l2_inner<F, G>(f: F, g: G, breaks: &[f64], tol: f64) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut cuts = vec![0.0];
    cuts.extend_from_slice(breaks);
    integrate_with_breaks(|x| f(x) * g(x), -1.0, 1.0, &cuts, tol).value
}
