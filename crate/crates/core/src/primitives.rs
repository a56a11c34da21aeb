//! Single-qubit operators of the protocol and the amplitude-damping action.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::error::{QffcrError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A 2×2 complex operator, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Op2(pub [Complex64; 4]);

impl Op2 {
    pub const IDENTITY: Op2 = Op2([ONE, ZERO, ZERO, ONE]);
    pub const ZERO: Op2 = Op2([ZERO; 4]);

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Op2([a, b, c, d])
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Op2([a, b, c, d].map(|x| Complex64::new(x, 0.0)))
    }

    pub fn diag(d0: Complex64, d1: Complex64) -> Self {
        Op2([d0, ZERO, ZERO, d1])
    }

    /// |i⟩⟨j|
    pub fn basis(i: usize, j: usize) -> Self {
        let mut m = [ZERO; 4];
        m[2 * i + j] = ONE;
        Op2(m)
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[2 * row + col]
    }

    pub fn adjoint(&self) -> Op2 {
        let [a, b, c, d] = self.0;
        Op2([a.conj(), c.conj(), b.conj(), d.conj()])
    }

    pub fn scale(&self, s: Complex64) -> Op2 {
        Op2(self.0.map(|x| x * s))
    }

    /// `left · self · right`
    pub fn sandwich(&self, left: &Op2, right: &Op2) -> Op2 {
        *left * *self * *right
    }

    /// Largest entrywise distance to `other`.
    pub fn max_diff(&self, other: &Op2) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Mul for Op2 {
    type Output = Op2;

    fn mul(self, rhs: Op2) -> Op2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Op2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

impl Add for Op2 {
    type Output = Op2;

    fn add(self, rhs: Op2) -> Op2 {
        let mut out = self.0;
        for (o, x) in out.iter_mut().zip(rhs.0) {
            *o += x;
        }
        Op2(out)
    }
}

/// A single measurement (or flip/rotation) outcome bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Outcome::One
        } else {
            Outcome::Zero
        }
    }
}

/// Weak measurement operator M₀ / M₁ of strength θ ∈ [0, π].
pub fn weak_meas_op(outcome: Outcome, theta: f64) -> Result<Op2> {
    if !(0.0..=PI).contains(&theta) {
        return Err(QffcrError::Domain {
            field: "theta",
            value: theta,
            range: "[0, π]".to_string(),
        });
    }
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    Ok(match outcome {
        Outcome::Zero => Op2::real(c, 0.0, 0.0, s),
        Outcome::One => Op2::real(s, 0.0, 0.0, c),
    })
}

/// Offsetting operation: identity after outcome 0, Pauli-X after outcome 1.
pub fn flip_op(outcome: Outcome) -> Op2 {
    match outcome {
        Outcome::Zero => Op2::IDENTITY,
        Outcome::One => Op2::real(0.0, 1.0, 1.0, 0.0),
    }
}

fn check_r(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(QffcrError::Domain {
            field: "r",
            value: r,
            range: "[0, 1]".to_string(),
        })
    }
}

/// Amplitude-damping Kraus pair (e₀, e₁).
pub fn adc_kraus(r: f64) -> Result<(Op2, Op2)> {
    check_r(r)?;
    Ok((
        Op2::real(1.0, 0.0, 0.0, (1.0 - r).sqrt()),
        Op2::real(0.0, r.sqrt(), 0.0, 0.0),
    ))
}

/// e₀ ρ e₀† + e₁ ρ e₁†
pub fn apply_adc(rho: &Op2, kraus: &(Op2, Op2)) -> Op2 {
    let (e0, e1) = kraus;
    rho.sandwich(e0, &e0.adjoint()) + rho.sandwich(e1, &e1.adjoint())
}

/// Correction rotation T₀ / T₁ with angle η.
pub fn rotation_op(outcome: Outcome, eta: f64) -> Op2 {
    let plus = Complex64::from_polar(1.0, eta / 2.0);
    let minus = plus.conj();
    match outcome {
        Outcome::Zero => Op2::diag(plus, minus),
        Outcome::One => Op2::diag(minus, plus),
    }
}

/// Images of |0⟩⟨0|, |1⟩⟨1|, |1⟩⟨0|, |0⟩⟨1| under the damping channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcAction {
    pub ground: Op2,
    pub excited: Op2,
    pub lower_coherence: Op2,
    pub upper_coherence: Op2,
}

impl AdcAction {
    /// Image of the basis operator |i⟩⟨j|.
    pub fn image(&self, i: usize, j: usize) -> Op2 {
        match (i, j) {
            (0, 0) => self.ground,
            (1, 1) => self.excited,
            (1, 0) => self.lower_coherence,
            _ => self.upper_coherence,
        }
    }
}

pub fn adc_basis_action(r: f64) -> Result<AdcAction> {
    check_r(r)?;
    let damp = (1.0 - r).sqrt();
    Ok(AdcAction {
        ground: Op2::basis(0, 0),
        excited: Op2::real(r, 0.0, 0.0, 1.0 - r),
        lower_coherence: Op2::real(0.0, 0.0, damp, 0.0),
        upper_coherence: Op2::real(0.0, damp, 0.0, 0.0),
    })
}

/// r = e^{−Γt}, as the damping probability is parameterized upstream.
pub fn decay_probability(rate: f64, time: f64) -> f64 {
    (-rate * time).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: &Op2, b: &Op2, tol: f64) -> bool {
        a.max_diff(b) <= tol
    }

    #[test]
    fn weak_measurement_limits() {
        let nm = weak_meas_op(Outcome::Zero, PI / 2.0).unwrap();
        assert!(close(&nm, &Op2::real(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2), 1e-15));
        let pm = weak_meas_op(Outcome::Zero, 0.0).unwrap();
        assert_eq!(pm, Op2::real(1.0, 0.0, 0.0, 0.0));
        let m1 = weak_meas_op(Outcome::One, PI / 3.0).unwrap();
        assert!(close(&m1, &Op2::real(0.5, 0.0, 0.0, 3f64.sqrt() / 2.0), 1e-15));
        assert!(weak_meas_op(Outcome::One, 3.2).is_err());
        assert!(weak_meas_op(Outcome::One, -0.1).is_err());
    }

    #[test]
    fn flips() {
        assert_eq!(flip_op(Outcome::Zero), Op2::IDENTITY);
        assert_eq!(flip_op(Outcome::One), Op2::real(0.0, 1.0, 1.0, 0.0));
        assert_eq!(flip_op(Outcome::One) * flip_op(Outcome::One), Op2::IDENTITY);
    }

    #[test]
    fn kraus_limits() {
        let (e0, e1) = adc_kraus(0.0).unwrap();
        assert_eq!((e0, e1), (Op2::IDENTITY, Op2::ZERO));
        let (e0, e1) = adc_kraus(1.0).unwrap();
        assert_eq!(e0, Op2::real(1.0, 0.0, 0.0, 0.0));
        assert_eq!(e1, Op2::basis(0, 1));
        let (e0, _) = adc_kraus(0.5).unwrap();
        assert!(close(&e0, &Op2::real(1.0, 0.0, 0.0, 0.5f64.sqrt()), 1e-15));
        assert!(adc_kraus(1.5).is_err());
    }

    #[test]
    fn rotations() {
        assert!(close(&rotation_op(Outcome::Zero, 0.0), &Op2::IDENTITY, 1e-15));
        let i = Complex64::i();
        assert!(close(&rotation_op(Outcome::Zero, PI), &Op2::diag(i, -i), 1e-15));
        let eta = 1.234;
        assert!(close(
            &rotation_op(Outcome::One, eta),
            &rotation_op(Outcome::Zero, eta).adjoint(),
            1e-15
        ));
    }

    #[test]
    fn adc_action_table() {
        let a = adc_basis_action(0.0).unwrap();
        for (i, j) in [(0, 0), (1, 1), (1, 0), (0, 1)] {
            assert!(close(&a.image(i, j), &Op2::basis(i, j), 1e-15));
        }
        let full = adc_basis_action(1.0).unwrap();
        assert!(close(&full.image(1, 1), &Op2::basis(0, 0), 1e-15));
        let part = adc_basis_action(0.19).unwrap();
        assert!(close(&part.image(0, 1), &Op2::basis(0, 1).scale(0.9.into()), 1e-15));
        assert!(adc_basis_action(-0.1).is_err());
    }

    #[test]
    fn decay() {
        assert_eq!(decay_probability(3.0, 0.0), 1.0);
        assert_eq!(decay_probability(0.0, 5.0), 1.0);
        assert!((decay_probability(1.0, 2f64.ln()) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn measurement_is_complete(theta in 0.0f64..=PI) {
            let m0 = weak_meas_op(Outcome::Zero, theta).unwrap();
            let m1 = weak_meas_op(Outcome::One, theta).unwrap();
            let sum = m0.adjoint() * m0 + m1.adjoint() * m1;
            prop_assert!(close(&sum, &Op2::IDENTITY, 1e-15));
        }

        #[test]
        fn kraus_is_complete(r in 0.0f64..=1.0) {
            let (e0, e1) = adc_kraus(r).unwrap();
            let sum = e0.adjoint() * e0 + e1.adjoint() * e1;
            prop_assert!(close(&sum, &Op2::IDENTITY, 1e-15));
        }

        #[test]
        fn rotation_is_unitary(eta in -10.0f64..10.0, bit in any::<bool>()) {
            let t = rotation_op(Outcome::from_bit(bit), eta);
            prop_assert!(close(&(t * t.adjoint()), &Op2::IDENTITY, 1e-15));
        }

        #[test]
        fn action_table_matches_kraus_conjugation(r in 0.0f64..=1.0) {
            let table = adc_basis_action(r).unwrap();
            let kraus = adc_kraus(r).unwrap();
            for (i, j) in [(0, 0), (1, 1), (1, 0), (0, 1)] {
                prop_assert!(close(&table.image(i, j), &apply_adc(&Op2::basis(i, j), &kraus), 1e-15));
            }
        }
    }
}
