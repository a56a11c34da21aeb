//! Complex scalars with an explicit binary exponent.
//!
//! Class weights such as C(1000, 500) ≈ 2.7e299 multiply per-class elements
//! that underflow `f64` long before the product does, so the structured
//! engine carries every intermediate as `mantissa · 2^exponent`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    mantissa: Complex64,
    exponent: i64,
}

/// `x · 2^n` without intermediate overflow of the power of two.
pub fn ldexp(mut x: f64, mut n: i64) -> f64 {
    if (-1022..=1023).contains(&n) {
        return x * pow2(n);
    }
    while n > 1000 {
        x *= pow2(1000);
        n -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while n < -1000 {
        x *= pow2(-1000);
        n += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * pow2(n)
}

/// 2^n for a normal-range exponent.
fn pow2(n: i64) -> f64 {
    f64::from_bits(((n + 1023) as u64) << 52)
}

/// Binary exponent `e` with `x = m · 2^e`, `0.5 ≤ |m| < 1`; `x` finite, nonzero.
fn exponent_of(x: f64) -> i64 {
    let bits = x.abs().to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    if biased == 0 {
        // subnormal
        let lead = 64 - (bits & ((1u64 << 52) - 1)).leading_zeros() as i64;
        lead - 1074
    } else {
        biased - 1022
    }
}

impl Scaled {
    pub const ZERO: Scaled = Scaled {
        mantissa: Complex64::new(0.0, 0.0),
        exponent: 0,
    };

    pub fn one() -> Self {
        Self::from_c64(Complex64::new(1.0, 0.0))
    }

    pub fn from_f64(x: f64) -> Self {
        Self::from_c64(Complex64::new(x, 0.0))
    }

    pub fn from_c64(z: Complex64) -> Self {
        Self {
            mantissa: z,
            exponent: 0,
        }
        .normalized()
    }

    /// Nearest representable value of an arbitrarily large integer.
    pub fn from_biguint(n: &BigUint) -> Self {
        let bits = n.bits() as i64;
        if bits <= 1000 {
            return Self::from_f64(n.to_f64().unwrap_or(0.0));
        }
        let shift = bits - 64;
        let top = (n >> (shift as usize)).to_f64().unwrap_or(0.0);
        Self {
            mantissa: Complex64::new(top, 0.0),
            exponent: shift,
        }
        .normalized()
    }

    fn normalized(self) -> Self {
        let mag = self.mantissa.re.abs().max(self.mantissa.im.abs());
        if mag == 0.0 || !mag.is_finite() {
            return Self {
                mantissa: self.mantissa,
                exponent: if mag == 0.0 { 0 } else { self.exponent },
            };
        }
        let e = exponent_of(mag);
        Self {
            mantissa: Complex64::new(ldexp(self.mantissa.re, -e), ldexp(self.mantissa.im, -e)),
            exponent: self.exponent + e,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    /// Nearest `Complex64`; overflows to infinity and underflows to zero.
    pub fn to_c64(self) -> Complex64 {
        Complex64::new(
            ldexp(self.mantissa.re, self.exponent),
            ldexp(self.mantissa.im, self.exponent),
        )
    }

    pub fn conj(self) -> Self {
        Self {
            mantissa: self.mantissa.conj(),
            exponent: self.exponent,
        }
    }

    pub fn norm_sqr(self) -> Self {
        Self {
            mantissa: Complex64::new(self.mantissa.norm_sqr(), 0.0),
            exponent: 2 * self.exponent,
        }
        .normalized()
    }

    /// log₂|z|, or -∞ for zero.
    pub fn log2_abs(self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mantissa.norm().log2() + self.exponent as f64
        }
    }

    /// `self^n` by repeated squaring.
    pub fn powu(self, mut n: u64) -> Self {
        let mut base = self;
        let mut acc = Self::one();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            n >>= 1;
            if n > 0 {
                base = base * base;
            }
        }
        acc
    }

    fn rescaled_mantissa(self, exponent: i64) -> Complex64 {
        let shift = self.exponent - exponent;
        Complex64::new(
            ldexp(self.mantissa.re, shift),
            ldexp(self.mantissa.im, shift),
        )
    }
}

impl Mul for Scaled {
    type Output = Scaled;

    fn mul(self, rhs: Scaled) -> Scaled {
        Scaled {
            mantissa: self.mantissa * rhs.mantissa,
            exponent: self.exponent + rhs.exponent,
        }
        .normalized()
    }
}

impl Mul<f64> for Scaled {
    type Output = Scaled;

    fn mul(self, rhs: f64) -> Scaled {
        self * Scaled::from_f64(rhs)
    }
}

impl Mul<Complex64> for Scaled {
    type Output = Scaled;

    fn mul(self, rhs: Complex64) -> Scaled {
        self * Scaled::from_c64(rhs)
    }
}

impl Div for Scaled {
    type Output = Scaled;

    fn div(self, rhs: Scaled) -> Scaled {
        Scaled {
            mantissa: self.mantissa / rhs.mantissa,
            exponent: self.exponent - rhs.exponent,
        }
        .normalized()
    }
}

impl Add for Scaled {
    type Output = Scaled;

    fn add(self, rhs: Scaled) -> Scaled {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let e = self.exponent.max(rhs.exponent);
        Scaled {
            mantissa: self.rescaled_mantissa(e) + rhs.rescaled_mantissa(e),
            exponent: e,
        }
        .normalized()
    }
}

impl Neg for Scaled {
    type Output = Scaled;

    fn neg(self) -> Scaled {
        Scaled {
            mantissa: -self.mantissa,
            exponent: self.exponent,
        }
    }
}

impl Sub for Scaled {
    type Output = Scaled;

    fn sub(self, rhs: Scaled) -> Scaled {
        self + (-rhs)
    }
}

/// Neumaier-compensated sum in the given (deterministic) order.
pub fn compensated_sum(terms: &[Scaled]) -> Scaled {
    let Some(e) = terms.iter().filter(|t| !t.is_zero()).map(|t| t.exponent).max() else {
        return Scaled::ZERO;
    };
    let mut re = Neumaier::default();
    let mut im = Neumaier::default();
    for t in terms.iter().filter(|t| !t.is_zero()) {
        let m = t.rescaled_mantissa(e);
        re.add(m.re);
        im.add(m.im);
    }
    Scaled {
        mantissa: Complex64::new(re.total(), im.total()),
        exponent: e,
    }
    .normalized()
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::binomial_row;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn round_trips_ordinary_values() {
        for z in [c(1.0, 0.0), c(-3.5, 2.25), c(1e-300, -1e-310), c(0.0, 7e200)] {
            assert_eq!(Scaled::from_c64(z).to_c64(), z);
        }
        assert!(Scaled::from_f64(0.0).is_zero());
    }

    #[test]
    fn survives_products_far_outside_f64() {
        let tiny = Scaled::from_f64(1e-200).powu(10);
        let huge = Scaled::from_f64(1e200).powu(10);
        assert!(((tiny * huge).to_c64().re - 1.0).abs() < 1e-12);
        assert_eq!(tiny.to_c64().re, 0.0);
        assert!(huge.to_c64().re.is_infinite());
        assert!((tiny.log2_abs() - (-2000.0 * 10f64.log2())).abs() < 1e-6);
    }

    #[test]
    fn central_binomial_of_a_thousand() {
        let row = binomial_row(1000);
        let s = Scaled::from_biguint(&row[500]);
        // log2 C(1000,500) from the exact integer's bit length.
        let bits = row[500].bits() as f64;
        assert!(s.log2_abs() <= bits && s.log2_abs() > bits - 1.0);
        let total = compensated_sum(
            &row.iter().map(Scaled::from_biguint).collect::<Vec<_>>(),
        );
        assert!((total.log2_abs() - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let terms = [1e16, 1.0, -1e16, 1.0].map(Scaled::from_f64);
        assert_eq!(compensated_sum(&terms).to_c64().re, 2.0);
        assert!(compensated_sum(&[]).is_zero());
    }

    proptest! {
        #[test]
        fn arithmetic_matches_complex64(
            a in -1e3f64..1e3, b in -1e3f64..1e3, x in -1e3f64..1e3, y in 1e-3f64..1e3, n in 0u64..12,
        ) {
            let (z, w) = (c(a, b), c(x, y));
            let (sz, sw) = (Scaled::from_c64(z), Scaled::from_c64(w));
            let close = |u: Complex64, v: Complex64| (u - v).norm() <= 1e-12 * (1.0 + v.norm());
            prop_assert!(close((sz * sw).to_c64(), z * w));
            prop_assert!(close((sz / sw).to_c64(), z / w));
            prop_assert!(close((sz + sw).to_c64(), z + w));
            prop_assert!(close((sz - sw).to_c64(), z - w));
            prop_assert!(close(Scaled::from_c64(z * 1e-3).powu(n).to_c64(), (z * 1e-3).powu(n as u32)));
        }
    }
}
