//! Exact rational arithmetic for set measures.
//!
//! Measurable sets are finite interval/rectangle unions with rational
//! endpoints; their measures are computed here without rounding. Numerators
//! and denominators live in `i128` with checked operations: coordinates
//! loaded from `f64` are dyadic, so denominators only grow through the few
//! genuine products (areas, thresholds) and stay far below overflow for the
//! interval counts and construction depths this crate works at. If a
//! computation does run out of headroom it fails loudly with
//! [`RatError::Overflow`] instead of silently rounding.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatError {
    #[error("rational arithmetic overflow; use coarser coordinates or a shallower construction")]
    Overflow,
    #[error("cannot represent {0} as an exact rational (non-finite)")]
    NonFinite(f64),
    #[error("coordinate {0} is too fine to represent exactly (denominator exceeds 2^100)")]
    TooFine(f64),
}

/// Exact rational number `num/den` with `den > 0` and `gcd(num, den) = 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rat {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rat {
    pub const ZERO: Rat = Rat { num: 0, den: 1 };
    pub const ONE: Rat = Rat { num: 1, den: 1 };

    pub fn new(num: i128, den: i128) -> Result<Rat, RatError> {
        if den == 0 {
            return Err(RatError::Overflow);
        }
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den);
        if g == 0 {
            return Ok(Rat::ZERO);
        }
        Ok(Rat {
            num: sign * (num / g),
            den: (den / g).abs(),
        })
    }

    pub fn from_int(n: i64) -> Rat {
        Rat {
            num: n as i128,
            den: 1,
        }
    }

    /// Exact conversion: every finite `f64` is `m * 2^e`. Fails for values
    /// whose exact denominator exceeds 2^100.
    pub fn from_f64(x: f64) -> Result<Rat, RatError> {
        if !x.is_finite() {
            return Err(RatError::NonFinite(x));
        }
        if x == 0.0 {
            return Ok(Rat::ZERO);
        }
        let bits = x.to_bits();
        let sign: i128 = if bits >> 63 == 1 { -1 } else { 1 };
        let exp_bits = ((bits >> 52) & 0x7ff) as i64;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mantissa, exp) = if exp_bits == 0 {
            (frac, -1074i64)
        } else {
            (frac | (1i128 << 52), exp_bits - 1075)
        };
        if exp >= 0 {
            if exp > 60 {
                return Err(RatError::Overflow);
            }
            let num = mantissa.checked_shl(exp as u32).ok_or(RatError::Overflow)?;
            Rat::new(sign * num, 1)
        } else {
            let shift = -exp;
            // strip trailing zeros of the mantissa first
            let tz = (mantissa.trailing_zeros() as i64).min(shift);
            let m = mantissa >> tz;
            let shift = shift - tz;
            if shift > 100 {
                return Err(RatError::TooFine(x));
            }
            Ok(Rat {
                num: sign * m,
                den: 1i128 << shift,
            })
        }
    }

    /// Nearest rational with denominator at most `max_den` (continued fractions).
    pub fn approx_f64(x: f64, max_den: i64) -> Result<Rat, RatError> {
        if !x.is_finite() {
            return Err(RatError::NonFinite(x));
        }
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let mut v = x.abs();
        let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
        for _ in 0..64 {
            let a = v.floor();
            if a > 1e18 {
                break;
            }
            let ai = a as i128;
            let p2 = ai * p1 + p0;
            let q2 = ai * q1 + q0;
            if q2 > max_den as i128 {
                break;
            }
            p0 = p1;
            q0 = q1;
            p1 = p2;
            q1 = q2;
            let frac = v - a;
            if frac < 1e-15 {
                break;
            }
            v = 1.0 / frac;
        }
        if q1 == 0 {
            return Err(RatError::Overflow);
        }
        Rat::new(sign as i128 * p1, q1)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn num(self) -> i128 {
        self.num
    }

    pub fn den(self) -> i128 {
        self.den
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn is_positive(self) -> bool {
        self.num > 0
    }

    pub fn is_negative(self) -> bool {
        self.num < 0
    }

    pub fn abs(self) -> Rat {
        Rat {
            num: self.num.abs(),
            den: self.den,
        }
    }

    pub fn neg(self) -> Rat {
        Rat {
            num: -self.num,
            den: self.den,
        }
    }

    /// Aligns `a/b` and `c/d` over lcm(b, d). Keeps intermediates near
    /// `value * lcm`, which is what makes long dyadic sums safe.
    fn align(self, other: Rat) -> Result<(i128, i128, i128), RatError> {
        let g = gcd(self.den, other.den);
        let lb = other.den / g;
        let lcm = self.den.checked_mul(lb).ok_or(RatError::Overflow)?;
        let la = lcm / self.den;
        let an = self.num.checked_mul(la).ok_or(RatError::Overflow)?;
        let bn = other
            .num
            .checked_mul(lcm / other.den)
            .ok_or(RatError::Overflow)?;
        Ok((an, bn, lcm))
    }

    pub fn add(self, other: Rat) -> Result<Rat, RatError> {
        let (a, b, l) = self.align(other)?;
        Rat::new(a.checked_add(b).ok_or(RatError::Overflow)?, l)
    }

    pub fn sub(self, other: Rat) -> Result<Rat, RatError> {
        self.add(other.neg())
    }

    pub fn mul(self, other: Rat) -> Result<Rat, RatError> {
        // cross-reduce before multiplying
        let g1 = gcd(self.num, other.den);
        let g2 = gcd(other.num, self.den);
        let num = (self.num / g1)
            .checked_mul(other.num / g2)
            .ok_or(RatError::Overflow)?;
        let den = (self.den / g2)
            .checked_mul(other.den / g1)
            .ok_or(RatError::Overflow)?;
        Rat::new(num, den)
    }

    pub fn div(self, other: Rat) -> Result<Rat, RatError> {
        if other.num == 0 {
            return Err(RatError::Overflow);
        }
        self.mul(Rat {
            num: other.den * other.num.signum(),
            den: other.num.abs(),
        })
    }

    pub fn min(self, other: Rat) -> Rat {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Rat) -> Rat {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl PartialOrd for Rat {
    fn partial_cmp(&self, other: &Rat) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rat {
    fn cmp(&self, other: &Rat) -> Ordering {
        match self.align(*other) {
            Ok((a, b, _)) => a.cmp(&b),
            // alignment overflow: compare through f64
            Err(_) => self
                .to_f64()
                .partial_cmp(&other.to_f64())
                .unwrap_or(Ordering::Equal),
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i128, d: i128) -> Rat {
        Rat::new(n, d).unwrap()
    }

    #[test]
    fn normalization_and_ops() {
        assert_eq!(r(2, 4), r(1, 2));
        assert_eq!(r(1, -2), r(-1, 2));
        assert_eq!(r(1, 2).add(r(1, 3)).unwrap(), r(5, 6));
        assert_eq!(r(1, 2).sub(r(1, 3)).unwrap(), r(1, 6));
        assert_eq!(r(2, 3).mul(r(3, 4)).unwrap(), r(1, 2));
        assert_eq!(r(1, 2).div(r(1, 4)).unwrap(), r(2, 1));
        assert!(r(1, 3) < r(1, 2));
        assert!(r(-1, 2) < Rat::ZERO);
    }

    #[test]
    fn f64_roundtrip_is_exact() {
        for &x in &[0.0, 1.0, 0.5, 0.375, 0.1, 0.3, 1e-7, 123.456, -2.75] {
            let q = Rat::from_f64(x).unwrap();
            assert_eq!(q.to_f64(), x, "roundtrip failed for {x}");
        }
    }

    #[test]
    fn from_f64_rejects_non_finite() {
        assert!(Rat::from_f64(f64::NAN).is_err());
        assert!(Rat::from_f64(f64::INFINITY).is_err());
        assert!(Rat::from_f64(1e-320).is_err());
    }

    #[test]
    fn approx_snaps_to_small_fractions() {
        assert_eq!(Rat::approx_f64(0.25, 4096).unwrap(), r(1, 4));
        assert_eq!(Rat::approx_f64(0.3, 4096).unwrap(), r(3, 10));
        assert_eq!(Rat::approx_f64(1.0 / 3.0, 4096).unwrap(), r(1, 3));
    }

    #[test]
    fn long_dyadic_sums_do_not_overflow() {
        let mut acc = Rat::ZERO;
        let step = Rat::from_f64(0.1f64).unwrap();
        for _ in 0..10_000 {
            acc = acc.add(step).unwrap();
        }
        assert!((acc.to_f64() - 1000.0).abs() < 1e-9);
    }
}
