//! Binary fixed-point numbers on a big-integer mantissa.
//!
//! value = v / 2^FRAC_BITS. Only what the biorthogonal Gram solve needs:
//! ring operations, division, exp and conversion to f64 / double-double.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::dd::Dd;

pub const FRAC_BITS: u32 = 640;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(BigInt);

fn one_raw() -> BigInt {
    BigInt::from(1) << FRAC_BITS
}

fn ln2() -> &'static Fixed {
    static LN2: OnceLock<Fixed> = OnceLock::new();
    // ln 2 = Σ_{k≥1} 1 / (k 2^k)
    LN2.get_or_init(|| {
        let mut s = BigInt::zero();
        for k in 1..=FRAC_BITS + 8 {
            s += (one_raw() >> k) / BigInt::from(k);
        }
        Fixed(s)
    })
}

impl Fixed {
    pub fn zero() -> Fixed {
        Fixed(BigInt::zero())
    }

    pub fn one() -> Fixed {
        Fixed(one_raw())
    }

    /// Exact for every finite f64 at or above 2^-FRAC_BITS in magnitude.
    pub fn from_f64(x: f64) -> Fixed {
        assert!(x.is_finite(), "non-finite input {x}");
        if x == 0.0 {
            return Fixed::zero();
        }
        let bits = x.abs().to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        let shift = exp + FRAC_BITS as i64;
        let m = BigInt::from(mant);
        let v = if shift >= 0 {
            m << shift as u64
        } else {
            m >> (-shift) as u64
        };
        Fixed(if x < 0.0 { -v } else { v })
    }

    pub fn to_f64(&self) -> f64 {
        let bits = self.0.bits();
        let shift = bits.saturating_sub(64);
        let head = (&self.0 >> shift).to_f64().unwrap_or(f64::NAN);
        let scale = shift as i64 - FRAC_BITS as i64;
        // two steps keep each factor inside the f64 exponent range
        let half = scale / 2;
        head * 2f64.powi(half as i32) * 2f64.powi((scale - half) as i32)
    }

    pub fn to_dd(&self) -> Dd {
        let hi = self.to_f64();
        if !hi.is_finite() {
            return Dd { hi, lo: 0.0 };
        }
        let lo = (self - &Fixed::from_f64(hi)).to_f64();
        Dd { hi, lo }
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Fixed {
        Fixed(self.0.abs())
    }

    /// Truncating quotient.
    pub fn div(&self, b: &Fixed) -> Fixed {
        Fixed((&self.0 << FRAC_BITS) / &b.0)
    }

    pub fn div_int(&self, k: u64) -> Fixed {
        Fixed(&self.0 / BigInt::from(k))
    }

    pub fn exp(&self) -> Fixed {
        const HALVINGS: u32 = 12;
        let x = self.to_f64();
        let k = (x / std::f64::consts::LN_2).round() as i64;
        let r = self - &(ln2() * &Fixed(BigInt::from(k) << FRAC_BITS));
        let r = Fixed(r.0 >> HALVINGS);
        let mut sum = Fixed::one();
        let mut term = Fixed::one();
        for i in 1u64.. {
            term = (&term * &r).div_int(i);
            if term.0.is_zero() {
                break;
            }
            sum = &sum + &term;
        }
        for _ in 0..HALVINGS {
            sum = &sum * &sum;
        }
        if k >= 0 {
            Fixed(sum.0 << k as u64)
        } else {
            Fixed(sum.0 >> (-k) as u64)
        }
    }
}

impl Add for &Fixed {
    type Output = Fixed;
    fn add(self, b: &Fixed) -> Fixed {
        Fixed(&self.0 + &b.0)
    }
}

impl Sub for &Fixed {
    type Output = Fixed;
    fn sub(self, b: &Fixed) -> Fixed {
        Fixed(&self.0 - &b.0)
    }
}

impl Mul for &Fixed {
    type Output = Fixed;
    fn mul(self, b: &Fixed) -> Fixed {
        Fixed((&self.0 * &b.0) >> FRAC_BITS)
    }
}

impl Neg for &Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed(-&self.0)
    }
}
