//! Bessel functions of the first kind for real order ν > −1 and their
//! positive zeros.
//!
//! Evaluation picks one of three branches by argument size:
//!
//! * the ascending power series when `x ≤ 2` or `x² ≤ 4(ν + 1)` (terms then
//!   decay from the start, so cancellation stays mild);
//! * Steed's continued-fraction method (CF1 for J'/J, CF2 for the Hankel
//!   ratio, normalised by the Wronskian) in the intermediate range;
//! * the Hankel large-argument expansion for `x ≥ max(25, 2ν²)`, truncated
//!   once terms drop below 1e−17. If the expansion starts diverging first
//!   the continued-fraction value is returned instead.
//!
//! Zeros are bracketed, bisected and polished by Newton's method.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::gamma::{gamma_unchecked, GAMMA_MAX_ARG};

/// Real order ν of a Bessel function, restricted to ν > −1.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu <= -1.0 {
            return Err(Error::Domain(format!("Bessel order {nu} must exceed -1")));
        }
        if nu + 1.0 > GAMMA_MAX_ARG {
            return Err(Error::Overflow(nu + 1.0));
        }
        Ok(BesselOrder(nu))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// J_ν(x).
pub fn bessel_j(order: BesselOrder, x: f64) -> Result<f64> {
    let nu = order.0;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("J_{nu}({x}) needs x >= 0")));
    }
    if x == 0.0 {
        return if nu == 0.0 {
            Ok(1.0)
        } else if nu > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Domain(format!("J_{nu} is unbounded at 0")))
        };
    }
    Ok(j_unchecked(nu, x))
}

/// dJ_ν/dx, via J'_ν = (ν/x) J_ν − J_{ν+1}.
pub fn bessel_j_prime(order: BesselOrder, x: f64) -> Result<f64> {
    let nu = order.0;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("J'_{nu}({x}) needs x > 0")));
    }
    if nu + 2.0 > GAMMA_MAX_ARG {
        return Err(Error::Overflow(nu + 2.0));
    }
    Ok(j_prime_unchecked(nu, x))
}

pub(crate) fn j_unchecked(nu: f64, x: f64) -> f64 {
    if x <= 2.0 || x * x <= 4.0 * (nu + 1.0) {
        branches::series(nu, x)
    } else if x >= asymptotic_switch(nu) {
        branches::asymptotic(nu, x).unwrap_or_else(|| branches::continued_fraction(nu, x).0)
    } else {
        branches::continued_fraction(nu, x).0
    }
}

pub(crate) fn j_prime_unchecked(nu: f64, x: f64) -> f64 {
    nu / x * j_unchecked(nu, x) - j_unchecked(nu + 1.0, x)
}

/// Argument above which the large-argument expansion is used.
pub fn asymptotic_switch(nu: f64) -> f64 {
    (2.0 * nu * nu).max(25.0)
}

/// The individual evaluation branches, exposed so their agreement can be
/// checked directly.
pub mod branches {
    use super::*;

    const SERIES_REL_TOL: f64 = 1e-17;
    const SERIES_MAX_TERMS: usize = 200;

    /// Ascending series Σ (−1)^m (x/2)^{2m+ν} / (m! Γ(m+ν+1)).
    pub fn series(nu: f64, x: f64) -> f64 {
        let half = 0.5 * x;
        let mut term = half.powf(nu) / gamma_unchecked(nu + 1.0);
        let mut sum = term;
        let q = -half * half;
        for m in 1..SERIES_MAX_TERMS {
            let mf = m as f64;
            term *= q / (mf * (mf + nu));
            sum += term;
            if term.abs() <= SERIES_REL_TOL * sum.abs() || term == 0.0 {
                break;
            }
        }
        sum
    }

    const CF_EPS: f64 = 1e-16;
    const CF_TINY: f64 = 1e-300;
    const CF_MAX_ITER: usize = 100_000;

    /// Steed's method for x ≥ 2; returns (J_ν(x), J'_ν(x)).
    pub fn continued_fraction(nu: f64, x: f64) -> (f64, f64) {
        debug_assert!(x >= 2.0);
        let nl = ((nu - x + 1.5).floor() as i64).max(0);
        let mu = nu - nl as f64;
        let xi = 1.0 / x;
        let xi2 = 2.0 * xi;
        let w = xi2 / PI;

        // CF1: J'_ν / J_ν by modified Lentz.
        let mut isign = 1.0;
        let mut h = nu * xi;
        if h.abs() < CF_TINY {
            h = CF_TINY;
        }
        let mut b = xi2 * nu;
        let mut d = 0.0;
        let mut c = h;
        for _ in 0..CF_MAX_ITER {
            b += xi2;
            d = b - d;
            if d.abs() < CF_TINY {
                d = CF_TINY;
            }
            c = b - 1.0 / c;
            if c.abs() < CF_TINY {
                c = CF_TINY;
            }
            d = 1.0 / d;
            let del = c * d;
            h *= del;
            if d < 0.0 {
                isign = -isign;
            }
            if (del - 1.0).abs() < CF_EPS {
                break;
            }
        }

        // Downward recurrence from ν to μ on unnormalised values.
        let mut rjl = isign * 1e-200;
        let mut rjpl = h * rjl;
        let rjl1 = rjl;
        let rjp1 = rjpl;
        let mut fact = nu * xi;
        for _ in 0..nl {
            let rjtemp = fact * rjl + rjpl;
            fact -= xi;
            rjpl = fact * rjtemp - rjl;
            rjl = rjtemp;
        }
        if rjl == 0.0 {
            rjl = CF_EPS;
        }
        let f = rjpl / rjl;

        // CF2: p + iq = (J' + iY') / (J + iY) at order μ.
        let a0 = 0.25 - mu * mu;
        let mut p = -0.5 * xi;
        let mut q = 1.0;
        let br = 2.0 * x;
        let mut bi = 2.0;
        let mut fct = a0 * xi / (p * p + q * q);
        let mut cr = br + q * fct;
        let mut ci = bi + p * fct;
        let mut den = br * br + bi * bi;
        let mut dr = br / den;
        let mut di = -bi / den;
        let mut dlr = cr * dr - ci * di;
        let mut dli = cr * di + ci * dr;
        let mut temp = p * dlr - q * dli;
        q = p * dli + q * dlr;
        p = temp;
        let mut a = a0;
        for i in 2..CF_MAX_ITER {
            a += 2.0 * (i - 1) as f64;
            bi += 2.0;
            dr = a * dr + br;
            di = a * di + bi;
            if dr.abs() + di.abs() < CF_TINY {
                dr = CF_TINY;
            }
            fct = a / (cr * cr + ci * ci);
            cr = br + cr * fct;
            ci = bi - ci * fct;
            if cr.abs() + ci.abs() < CF_TINY {
                cr = CF_TINY;
            }
            den = dr * dr + di * di;
            dr /= den;
            di = -di / den;
            dlr = cr * dr - ci * di;
            dli = cr * di + ci * dr;
            temp = p * dlr - q * dli;
            q = p * dli + q * dlr;
            p = temp;
            if (dlr - 1.0).abs() + dli.abs() < CF_EPS {
                break;
            }
        }

        let gam = (p - f) / q;
        let mut rjmu = (w / ((p - f) * gam + q)).sqrt();
        if rjl < 0.0 {
            rjmu = -rjmu;
        }
        let scale = rjmu / rjl;
        (rjl1 * scale, rjp1 * scale)
    }

    /// Hankel expansion J_ν(x) ≈ √(2/πx) (P cos ω − Q sin ω), ω = x − νπ/2 − π/4.
    /// `None` when the series diverges before reaching double precision.
    pub fn asymptotic(nu: f64, x: f64) -> Option<f64> {
        let mu4 = 4.0 * nu * nu;
        let mut p = 1.0;
        let mut q = 0.0;
        let mut term = 1.0;
        let mut prev = f64::INFINITY;
        let mut converged = false;
        for k in 1..200 {
            let odd = (2 * k - 1) as f64;
            term *= (mu4 - odd * odd) / (8.0 * k as f64 * x);
            let mag = term.abs();
            if mag == 0.0 {
                converged = true;
                break;
            }
            if mag > prev {
                break;
            }
            prev = mag;
            // a_k / x^k enters P for even k and Q for odd k with alternating signs.
            match k % 4 {
                0 => p += term,
                1 => q += term,
                2 => p -= term,
                _ => q -= term,
            }
            if mag < 1e-17 {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }
        let phase = nu * FRAC_PI_2 + FRAC_PI_4;
        let (sx, cx) = x.sin_cos();
        let (sp, cp) = phase.sin_cos();
        let cos_w = cx * cp + sx * sp;
        let sin_w = sx * cp - cx * sp;
        Some((2.0 / (PI * x)).sqrt() * (p * cos_w - q * sin_w))
    }
}

/// Leading-order McMahon estimate π(n + ν/2 − 1/4) of the n-th zero.
pub fn mcmahon_estimate(order: BesselOrder, n: usize) -> f64 {
    PI * (n as f64 + 0.5 * order.0 - 0.25)
}

/// Lorch–Muldoon bounds on j_{ν,n} for ν ≥ 0, as (lower, upper).
pub fn lorch_bounds(nu: f64, n: usize) -> Option<(f64, f64)> {
    if nu < 0.0 {
        return None;
    }
    let n = n as f64;
    let a = PI * (n + 0.5 * nu - 0.25);
    let b = PI * (n + 0.25 * nu - 0.125);
    Some(if nu <= 0.5 { (a, b) } else { (b, a) })
}

const SCAN_STEP: f64 = 0.25;

/// The n-th positive zero j_{ν,n} (n ≥ 1).
pub fn bessel_zero(order: BesselOrder, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("zero index starts at 1".into()));
    }
    let nu = order.0;
    if let Some((lo, hi)) = fast_bracket(nu, n) {
        return Ok(refine_zero(nu, lo, hi));
    }
    scan_zeros(nu, n)
        .pop()
        .ok_or(Error::BracketFailure { nu, n })
}

/// Bracket from the Lorch bounds (0 ≤ ν ≤ 2) or from the McMahon window
/// (ν < 0). The bracket is only returned when sub-sampling shows exactly
/// one sign change inside it.
fn fast_bracket(nu: f64, n: usize) -> Option<(f64, f64)> {
    if (0.0..=2.0).contains(&nu) {
        let (lo, hi) = lorch_bounds(nu, n)?;
        let pad = 1e-9 * (1.0 + hi);
        return single_sign_change(nu, lo - pad, hi + pad);
    }
    if nu < 0.0 {
        let centre = PI * (n as f64 + 0.5 * nu - 0.25);
        let mut half_width = FRAC_PI_2;
        for _ in 0..5 {
            let lo = (centre - half_width).max(1e-8);
            if let Some(b) = single_sign_change(nu, lo, centre + half_width) {
                return Some(b);
            }
            half_width += FRAC_PI_4;
        }
    }
    None
}

fn single_sign_change(nu: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let pieces = ((hi - lo) / SCAN_STEP).ceil().max(1.0) as usize;
    let h = (hi - lo) / pieces as f64;
    let mut found = None;
    let mut x0 = lo;
    let mut f0 = j_unchecked(nu, x0);
    for i in 1..=pieces {
        let x1 = if i == pieces { hi } else { lo + i as f64 * h };
        let f1 = j_unchecked(nu, x1);
        if f0 == 0.0 {
            return Some((x0, x0));
        }
        if f0.signum() != f1.signum() {
            if found.is_some() {
                return None;
            }
            found = Some((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    found
}

/// First `count` zeros by a sign-change scan; used when no cheap bracket
/// is available.
fn scan_zeros(nu: f64, count: usize) -> Vec<f64> {
    let mut zeros = Vec::with_capacity(count);
    let mut x0 = if nu > 0.0 { nu } else { 1e-8 };
    let mut f0 = j_unchecked(nu, x0);
    while zeros.len() < count {
        let x1 = x0 + SCAN_STEP;
        let f1 = j_unchecked(nu, x1);
        if f0.signum() != f1.signum() {
            zeros.push(refine_zero(nu, x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    zeros
}

/// Safeguarded Newton on a sign-change bracket.
fn refine_zero(nu: f64, mut lo: f64, mut hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    let flo = j_unchecked(nu, lo);
    if flo == 0.0 {
        return lo;
    }
    let lo_sign = flo.signum();
    // coarse bisection
    while hi - lo > 1e-6 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        let fm = j_unchecked(nu, mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let f = j_unchecked(nu, x);
        if f == 0.0 {
            return x;
        }
        if f.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let df = j_prime_unchecked(nu, x);
        let next = x - f / df;
        if !(next > lo && next < hi) {
            break;
        }
        let step = (next - x).abs();
        x = next;
        if step <= 2.0 * f64::EPSILON * x {
            return x;
        }
    }
    // Newton left the bracket: finish by bisection.
    while hi - lo > 2.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = j_unchecked(nu, mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Strictly increasing table of the first positive zeros of J_ν.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroTable {
    nu: f64,
    zeros: Vec<f64>,
}

impl ZeroTable {
    pub fn new(order: BesselOrder, count: usize) -> Result<Self> {
        let nu = order.0;
        let mut zeros = Vec::with_capacity(count);
        if nu <= 2.0 {
            for n in 1..=count {
                match fast_bracket(nu, n) {
                    Some((lo, hi)) => zeros.push(refine_zero(nu, lo, hi)),
                    None => break,
                }
            }
        }
        let ordered = zeros.windows(2).all(|w| w[0] < w[1]);
        if zeros.len() < count || !ordered {
            zeros = scan_zeros(nu, count);
        }
        if zeros.len() != count || zeros.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BracketFailure { nu, n: count });
        }
        Ok(ZeroTable { nu, zeros })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn count(&self) -> usize {
        self.zeros.len()
    }

    /// j_{ν,n} for 1 ≤ n ≤ count.
    pub fn get(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.zeros.get(i).copied())
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ord(nu: f64) -> BesselOrder {
        BesselOrder::new(nu).unwrap()
    }

    /// Reference values from 30-digit arbitrary precision evaluation.
    const REFERENCE: &[(f64, f64, f64)] = &[
        (0.3, 2.0, 0.425_694_061_981_413_722_3),
        (-0.3, 5.0, -0.015_049_409_319_569_657_5),
        (1.0 / 3.0, 30.0, -0.133_340_533_874_261_617_06),
        (-1.0 / 3.0, 100.0, 0.055_962_168_434_210_225_606),
        (7.5, 40.0, -0.126_058_777_871_021_722_27),
        (50.0, 450.0, -0.034_833_312_128_584_753_96),
        (-0.9, 3.0, -0.391_732_264_861_990_450_38),
        (0.0, 12.0, 0.047_689_310_796_833_536_624),
        (-0.25, 0.7, 0.893_646_070_946_695_010_08),
        (2.5, 1.5, 0.124_446_359_798_387_602),
        (20.0, 10.0, 0.000_011_513_369_247_813_397_783),
        (0.45, 250.0, -0.047_871_814_881_735_916_22),
        (-0.45, 17.3, -0.011_247_770_260_340_974_87),
        (0.0, 1.0, 0.765_197_686_557_966_551_45),
        (1.0, 1.0, 0.440_050_585_744_933_515_96),
    ];

    #[test]
    fn matches_reference_values() {
        for &(nu, x, expected) in REFERENCE {
            let got = bessel_j(ord(nu), x).unwrap();
            // relative to the local envelope sqrt(2/(pi x)) so values near zeros are fair
            let scale = expected.abs().max((2.0 / (PI * x)).sqrt().min(1.0) * 1e-2);
            assert!(
                (got - expected).abs() <= 1e-12 * scale.max(expected.abs()),
                "J_{nu}({x}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn value_at_origin() {
        assert_eq!(bessel_j(ord(0.0), 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(ord(0.7), 0.0).unwrap(), 0.0);
        assert!(matches!(bessel_j(ord(-0.5), 0.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(ord(0.5), -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_orders() {
        assert!(BesselOrder::new(-1.0).is_err());
        assert!(BesselOrder::new(f64::NAN).is_err());
        assert!(matches!(BesselOrder::new(400.0), Err(Error::Overflow(_))));
    }

    #[test]
    fn half_integer_closed_forms() {
        let j = bessel_j(ord(0.5), PI).unwrap();
        assert!(j.abs() < 1e-12);
        for &x in &[0.3, 1.7, 5.0, 13.0, 40.0, 321.0] {
            let s = (2.0 / (PI * x)).sqrt();
            assert_relative_eq!(bessel_j(ord(0.5), x).unwrap(), s * x.sin(), epsilon = 1e-14);
            assert_relative_eq!(bessel_j(ord(-0.5), x).unwrap(), s * x.cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn first_zero_of_j0_by_series_bisection() {
        // Oracle: bisection on the ascending series alone.
        let (mut lo, mut hi) = (2.0, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if branches::series(0.0, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * (lo + hi) - 2.404_825_557_695_773).abs() < 1e-12);
        assert!(bessel_j(ord(0.0), 2.404_825_557_695_773).unwrap().abs() < 1e-12);
    }

    #[test]
    fn derivative_identities() {
        let x = 1.0;
        assert_relative_eq!(
            bessel_j_prime(ord(0.0), x).unwrap(),
            -bessel_j(ord(1.0), x).unwrap(),
            max_relative = 1e-14
        );
        let x = FRAC_PI_2;
        let closed = (2.0 / PI).sqrt() * (x.cos() / x.sqrt() - 0.5 * x.sin() * x.powf(-1.5));
        assert_relative_eq!(bessel_j_prime(ord(0.5), x).unwrap(), closed, max_relative = 1e-13);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for &(nu, x) in &[(0.3, 2.0), (-0.3, 4.0), (1.5, 30.0), (-0.7, 0.9)] {
            let o = ord(nu);
            let fd = (bessel_j(o, x + h).unwrap() - bessel_j(o, x - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(bessel_j_prime(o, x).unwrap(), fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn branches_agree_at_switch_points() {
        for &nu in &[-0.9, -1.0 / 3.0, 0.0, 0.25, 0.5, 1.7, 3.0] {
            // series / continued fraction around the series limit
            let xs = (4.0f64 * (nu + 1.0)).sqrt().max(2.0);
            for k in 0..9 {
                let x = xs + 0.05 * k as f64;
                let a = branches::series(nu, x);
                let b = branches::continued_fraction(nu, x).0;
                assert!((a - b).abs() <= 1e-11 * a.abs().max(0.05), "nu={nu} x={x} {a} {b}");
            }
            // continued fraction / asymptotic around the large-argument switch
            let xa = asymptotic_switch(nu);
            for k in 0..9 {
                let x = xa - 1.0 + 0.25 * k as f64;
                let a = branches::asymptotic(nu, x).unwrap();
                let b = branches::continued_fraction(nu, x).0;
                assert!((a - b).abs() <= 1e-11 * a.abs().max(0.05), "nu={nu} x={x} {a} {b}");
            }
        }
    }

    #[test]
    fn zeros_of_half_integer_orders() {
        for n in 1..=10 {
            let z = bessel_zero(ord(0.5), n).unwrap();
            assert!((z - n as f64 * PI).abs() < 1e-12, "n={n} z={z}");
            let z = bessel_zero(ord(-0.5), n).unwrap();
            assert!((z - (n as f64 - 0.5) * PI).abs() < 1e-12, "n={n} z={z}");
        }
    }

    #[test]
    fn zero_residuals() {
        for &nu in &[-0.9, -0.45, -0.2, 0.0, 0.2, 1.0 / 3.0, 0.8, 1.5, 4.0, 9.0] {
            let table = ZeroTable::new(ord(nu), 30).unwrap();
            for &z in table.zeros() {
                let r = j_unchecked(nu, z).abs();
                let d = j_prime_unchecked(nu, z).abs();
                assert!(r <= 1e-12 * d.max(1.0), "nu={nu} z={z} r={r}");
            }
        }
    }

    #[test]
    fn j0_first_zero() {
        assert!((bessel_zero(ord(0.0), 1).unwrap() - 2.404_825_557_695_773).abs() < 1e-12);
    }

    #[test]
    fn derivative_at_zero_matches_next_order() {
        for &nu in &[-1.0 / 3.0, 0.0, 0.25, 1.2] {
            for n in [1, 5, 17] {
                let z = bessel_zero(ord(nu), n).unwrap();
                let d = bessel_j_prime(ord(nu), z).unwrap().abs();
                let next = bessel_j(ord(nu + 1.0), z).unwrap().abs();
                assert_relative_eq!(d, next, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn mcmahon_estimates() {
        assert_relative_eq!(mcmahon_estimate(ord(0.5), 5), 5.0 * PI);
        assert_relative_eq!(mcmahon_estimate(ord(0.0), 1), 0.75 * PI);
        let z = bessel_zero(ord(0.0), 50).unwrap();
        assert!((mcmahon_estimate(ord(0.0), 50) - z).abs() < 2e-3);
    }

    #[test]
    fn large_order_table_uses_scan() {
        let t = ZeroTable::new(ord(12.0), 5).unwrap();
        // j_{12,1} = 16.698249933848246 (standard tables)
        assert!((t.zeros()[0] - 16.698_249_933_848_246).abs() < 1e-10);
        assert_eq!(t.get(0), None);
        assert_eq!(t.get(5), Some(t.zeros()[4]));
    }

    #[test]
    fn zero_index_is_rejected() {
        assert!(matches!(bessel_zero(ord(0.0), 0), Err(Error::InvalidParameter(_))));
    }
}
