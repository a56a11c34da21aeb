//! Printed aggregate formulas for probability, fidelity and QFI.
//!
//! `Verbatim` evaluates the closed expressions exactly as written; the
//! `AppendixAggregated` mode sums the per-class elements through the
//! structured engine in the paper convention. The two agree everywhere
//! except in the QFI, whose printed k = 0 and k = N denominators carry an
//! extra (r(1−r))^N factor.

use num_complex::Complex64;
use num_traits::Zero;

use crate::dense::DEGENERATE_PROBABILITY;
use crate::error::{QffcrError, Result};
use crate::scaled::{compensated_sum, Scaled};
use crate::structured::{aggregate_parts, AggregateOptions, FidelityNorm};
use crate::types::{
    binomial_row, validate_params, ComplexMetrics, Convention, Engine, MetricsRow, ParamLimits,
    ProtocolParams,
};

pub use crate::types::realize;

/// Tolerance for the vanishing optimal-probability rotation.
pub const ETA_OPT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormulaVariant {
    #[default]
    Verbatim,
    AppendixAggregated,
}

impl FormulaVariant {
    pub fn engine(self) -> Engine {
        match self {
            FormulaVariant::Verbatim => Engine::ClosedFormVerbatim,
            FormulaVariant::AppendixAggregated => Engine::ClosedFormAppendix,
        }
    }
}

fn limits() -> ParamLimits {
    ParamLimits::structured()
        .with_extended_theta(true)
        .with_max_qubits(usize::MAX)
}

fn appendix_opts(n: usize) -> AggregateOptions {
    AggregateOptions {
        fidelity_norm: FidelityNorm::Aggregate,
        limits: limits(),
    }
    .with_max_qubits(n)
}

fn cis(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, x)
}

/// Shorthand for the quantities every formula shares.
struct Terms {
    n: u64,
    a2: f64,
    b2: f64,
    c2: f64,
    s2: f64,
    r: f64,
    eta: f64,
}

impl Terms {
    fn new(p: &ProtocolParams) -> Self {
        Self {
            n: p.n_qubits as u64,
            a2: p.alpha().norm_sqr(),
            b2: p.beta().norm_sqr(),
            c2: (p.theta / 2.0).cos().powi(2),
            s2: (p.theta / 2.0).sin().powi(2),
            r: p.r,
            eta: p.eta,
        }
    }

    /// r·e^{iη} + (1−r)·e^{−iη}
    fn damped_phase(&self) -> Complex64 {
        cis(self.eta) * self.r + cis(-self.eta) * (1.0 - self.r)
    }

    /// s²·(r·e^{iη} + (1−r)·e^{−iη}) + c²·e^{iη}
    fn probability_base(&self) -> Complex64 {
        self.damped_phase() * self.s2 + cis(self.eta) * self.c2
    }
}

fn sc(z: Complex64) -> Scaled {
    Scaled::from_c64(z)
}

fn sr(x: f64) -> Scaled {
    Scaled::from_f64(x)
}

fn verbatim_probability(t: &Terms) -> Scaled {
    sc(t.probability_base()).powu(t.n)
}

fn verbatim_fidelity_numerator(t: &Terms) -> Scaled {
    let ab = t.a2 * t.b2;
    let first = sc(cis(t.eta) * t.c2 + cis(-t.eta) * (t.s2 * (1.0 - t.r))).powu(t.n)
        * (t.a2 * t.a2 + t.b2 * t.b2);
    let second = sr(t.r * t.s2).powu(t.n) * sc(cis(t.n as f64 * t.eta)) * (2.0 * ab);
    // 2^{N+1}·(1−r)^{N/2}·sin^N θ / 2^N
    let sin_theta = 2.0 * (t.c2 * t.s2).sqrt();
    let third = sr((1.0 - t.r).sqrt() * sin_theta).powu(t.n) * (2.0 * ab);
    compensated_sum(&[first, second, third])
}

fn degenerate(what: &'static str, z: Scaled) -> QffcrError {
    QffcrError::Degenerate {
        what,
        magnitude: z.to_c64().norm(),
        threshold: DEGENERATE_PROBABILITY,
    }
}

/// `num / (x + y)`, zero when `num` is zero, degenerate when the sum cancels.
fn ratio(num: Scaled, x: Scaled, y: Scaled, what: &'static str) -> Result<Scaled> {
    if num.is_zero() {
        return Ok(Scaled::ZERO);
    }
    let den = x + y;
    let scale = x.log2_abs().max(y.log2_abs());
    if den.is_zero() || den.log2_abs() < scale + DEGENERATE_PROBABILITY.log2() {
        return Err(degenerate(what, den));
    }
    Ok(num / den)
}

fn verbatim_qfi(t: &Terms) -> Result<Scaled> {
    let n = t.n;
    let nf = n as f64;
    let q = 1.0 - t.r;
    // 4|αβ|²(1−r)^N sin^{2N}θ / 2^{2N} · N², with sin θ / 2 = c·s.
    let num = sr(q * t.c2 * t.s2).powu(n) * (4.0 * t.a2 * t.b2 * nf * nf);
    let c2n = sr(t.c2).powu(n);
    let s2n = sr(t.s2).powu(n);
    let rq = sr(t.r * q).powu(n);
    let phase = sc(cis(nf * t.eta));

    let mut terms = Vec::with_capacity(n as usize + 1);
    terms.push(ratio(num, s2n * rq * t.a2, c2n * phase * t.b2, "k = 0 denominator")?);
    terms.push(ratio(num, c2n * phase * t.a2, s2n * rq * t.b2, "k = N denominator")?);
    let binom = binomial_row(n as usize);
    for k in 1..n {
        let x = sr(t.c2).powu(k) * sr(t.s2).powu(n - k) * sr(q).powu(n - k)
            * sc(cis((2.0 * k as f64 - nf) * t.eta))
            * t.a2;
        let y = sr(t.s2).powu(k) * sr(q).powu(k)
            * sc(cis((nf - 2.0 * k as f64) * t.eta))
            * sr(t.c2).powu(n - k)
            * t.b2;
        let w = Scaled::from_biguint(&binom[k as usize]);
        terms.push(w * ratio(num, x, y, "mixed-class denominator")?);
    }
    Ok(compensated_sum(&terms))
}

/// Average total probability.
pub fn prob_total(p: &ProtocolParams, variant: FormulaVariant) -> Result<Complex64> {
    validate_params(*p, limits())?;
    match variant {
        FormulaVariant::Verbatim => Ok(verbatim_probability(&Terms::new(p)).to_c64()),
        FormulaVariant::AppendixAggregated => Ok(aggregate_parts(p, Convention::Paper, appendix_opts(p.n_qubits))?.probability),
    }
}

/// Average total fidelity.
pub fn fid_total(p: &ProtocolParams, variant: FormulaVariant) -> Result<Complex64> {
    validate_params(*p, limits())?;
    match variant {
        FormulaVariant::Verbatim => {
            let t = Terms::new(p);
            let prob = verbatim_probability(&t);
            if prob.is_zero() || prob.log2_abs() < DEGENERATE_PROBABILITY.log2() {
                return Err(degenerate("total probability", prob));
            }
            Ok((verbatim_fidelity_numerator(&t) / prob).to_c64())
        }
        FormulaVariant::AppendixAggregated => {
            aggregate_parts(p, Convention::Paper, appendix_opts(p.n_qubits))?.fidelity
        }
    }
}

/// Average total QFI of the phase.
pub fn qfi_total(p: &ProtocolParams, variant: FormulaVariant) -> Result<Complex64> {
    validate_params(*p, limits())?;
    match variant {
        FormulaVariant::Verbatim => Ok(verbatim_qfi(&Terms::new(p))?.to_c64()),
        FormulaVariant::AppendixAggregated => {
            aggregate_parts(p, Convention::Paper, appendix_opts(p.n_qubits))?.qfi
        }
    }
}

/// All three aggregates for one variant.
pub fn evaluate(p: &ProtocolParams, variant: FormulaVariant) -> Result<ComplexMetrics> {
    let (probability, fidelity, qfi) = match variant {
        FormulaVariant::Verbatim => (
            prob_total(p, variant)?,
            fid_total(p, variant)?,
            qfi_total(p, variant)?,
        ),
        FormulaVariant::AppendixAggregated => {
            validate_params(*p, limits())?;
            let parts = aggregate_parts(p, Convention::Paper, appendix_opts(p.n_qubits))?;
            (parts.probability, parts.fidelity?, parts.qfi?)
        }
    };
    Ok(ComplexMetrics {
        probability,
        fidelity,
        qfi,
        engine: variant.engine(),
        convention: Convention::Paper,
    })
}

pub fn evaluate_row(p: &ProtocolParams, variant: FormulaVariant) -> Result<MetricsRow> {
    MetricsRow::realize(p, evaluate(p, variant)?)
}

/// Probability of one record of class k (k qubits saw outcome 0), in the
/// single parametric form that covers k = 0, 0 < k < N and k = N.
pub fn class_probability(p: &ProtocolParams, k: usize) -> Result<Complex64> {
    validate_params(*p, limits())?;
    if k > p.n_qubits {
        return Err(QffcrError::Domain {
            field: "k",
            value: k as f64,
            range: format!("[0, {}]", p.n_qubits),
        });
    }
    let t = Terms::new(p);
    let (k, rest) = (k as u64, t.n - k as u64);
    let kept = sc(cis(t.eta) * t.c2);
    let damped = sc(t.damped_phase() * t.s2);
    let value = kept.powu(k) * damped.powu(rest) * t.a2 + damped.powu(k) * kept.powu(rest) * t.b2;
    Ok(value.to_c64())
}

/// Verbatim QFI minus the appendix-aggregated QFI.
pub fn qfi_gap(p: &ProtocolParams) -> Result<Complex64> {
    Ok(qfi_total(p, FormulaVariant::Verbatim)? - qfi_total(p, FormulaVariant::AppendixAggregated)?)
}

/// Gap N²·2^{1−N} expected at r = 0, η = 0, θ = π/2.
pub fn documented_qfi_gap(n: usize) -> f64 {
    let nf = n as f64;
    nf * nf * 2f64.powi(1 - n as i32)
}

/// −i·log((1 + √(1−4ab)) / (2a)) with a = cos²(θ/2) + r·sin²(θ/2),
/// b = (1−r)·sin²(θ/2).
pub fn eta_opt_probability_complex(r: f64, theta: f64) -> Result<Complex64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(QffcrError::Domain {
            field: "r",
            value: r,
            range: "[0, 1]".to_string(),
        });
    }
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(QffcrError::Domain {
            field: "theta",
            value: theta,
            range: "[0, π]".to_string(),
        });
    }
    let (c2, s2) = ((theta / 2.0).cos().powi(2), (theta / 2.0).sin().powi(2));
    let a = c2 + r * s2;
    let b = (1.0 - r) * s2;
    if a.is_zero() {
        // Argument diverges along the positive real axis.
        return Ok(Complex64::new(0.0, f64::NEG_INFINITY));
    }
    let root = Complex64::new(1.0 - 4.0 * a * b, 0.0).sqrt();
    let arg = (root + 1.0) / (2.0 * a);
    Ok(-Complex64::i() * arg.ln())
}

/// Real rotation angle that maximizes the probability; identically zero.
pub fn eta_opt_probability(r: f64, theta: f64) -> Result<f64> {
    let z = eta_opt_probability_complex(r, theta)?;
    if z.re.abs() >= ETA_OPT_TOL {
        return Err(QffcrError::Identity(format!(
            "optimal rotation {} is not zero at r={r}, θ={theta}",
            z.re
        )));
    }
    Ok(z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;
    use std::f64::consts::PI;

    const V: FormulaVariant = FormulaVariant::Verbatim;
    const A: FormulaVariant = FormulaVariant::AppendixAggregated;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn probability_examples() {
        for &(theta, r) in &[(0.3, 0.0), (1.2, 0.5), (PI / 2.0, 0.9)] {
            let p = ProtocolParams::ghz(10, theta, 0.0, r);
            assert!((prob_total(&p, V).unwrap() - c(1.0)).norm() < 1e-14);
        }
        let p = ProtocolParams::ghz(10, 0.0, 0.3, 0.4);
        assert!((prob_total(&p, V).unwrap() - cis(3.0)).norm() < 1e-14);
    }

    #[test]
    fn fidelity_examples() {
        let f = |theta, r| fid_total(&ProtocolParams::ghz(10, theta, 0.0, r), V).unwrap();
        assert!((f(PI / 2.0, 0.0) - c(1.0)).norm() < 1e-14);
        assert!((f(0.0, 0.0) - c(0.5)).norm() < 1e-14);
        // Only the classes with every qubit on one outcome survive full damping.
        assert!((f(PI / 2.0, 1.0) - c(2f64.powi(-10))).norm() < 1e-15);
        let p = ProtocolParams::ghz(10, PI / 2.0, 0.0, 1.0);
        assert!((fid_total(&p, A).unwrap() - c(2f64.powi(-10))).norm() < 1e-15);
    }

    #[test]
    fn qfi_examples_and_gap() {
        let p = ProtocolParams::ghz(10, PI / 2.0, 0.0, 0.0);
        assert!((qfi_total(&p, A).unwrap() - c(100.0)).norm() < 1e-10);
        assert!((qfi_total(&p, V).unwrap() - c(100.1953125)).norm() < 1e-10);
        assert!((qfi_gap(&p).unwrap() - c(documented_qfi_gap(10))).norm() < 1e-10);
        for variant in [V, A] {
            let dead = ProtocolParams::ghz(10, 1.0, 0.4, 1.0);
            assert_eq!(qfi_total(&dead, variant).unwrap(), c(0.0));
        }
    }

    #[test]
    fn variants_agree_on_probability_and_fidelity() {
        for &(theta, eta, r) in &[(0.4, 0.0, 0.2), (1.3, 0.7, 0.6), (2.2, 2.0, 0.05)] {
            let p = ProtocolParams::ghz(7, theta, eta, r).with_gamma(1.1);
            let pv = prob_total(&p, V).unwrap();
            let pa = prob_total(&p, A).unwrap();
            assert!((pv - pa).norm() < 1e-12);
            let fv = fid_total(&p, V).unwrap();
            let fa = fid_total(&p, A).unwrap();
            assert!((fv - fa).norm() < 1e-12 * (1.0 + fa.norm()));
        }
    }

    #[test]
    fn class_probabilities_sum_to_total() {
        let p = ProtocolParams::ghz(9, 1.1, 0.8, 0.35).with_gamma(2.0);
        let row = binomial_row(9);
        let sum: Complex64 = (0..=9)
            .map(|k| class_probability(&p, k).unwrap() * row[k].to_f64().unwrap())
            .sum();
        assert!((sum - prob_total(&p, V).unwrap()).norm() < 1e-12);
        let e = crate::structured::branch_elements(&p, 4, Convention::Paper).unwrap();
        assert!((e.p - class_probability(&p, 4).unwrap()).norm() < 1e-14);
        assert!(class_probability(&p, 10).is_err());
    }

    #[test]
    fn optimal_rotation_vanishes() {
        assert_eq!(eta_opt_probability(0.5, PI / 4.0).unwrap().abs(), 0.0);
        for i in 0..10 {
            for j in 0..10 {
                let (r, theta) = (i as f64 / 9.0, j as f64 * PI / 9.0);
                assert!(eta_opt_probability(r, theta).unwrap().abs() < ETA_OPT_TOL);
            }
        }
        // Above θ = π/2 with weak damping the argument leaves 1 along the real axis.
        let z = eta_opt_probability_complex(0.0, 2.5).unwrap();
        assert!(z.re.abs() < 1e-12 && z.im.abs() > 1e-3);
        assert!(eta_opt_probability(1.5, 0.0).is_err());
    }

    #[test]
    fn thousand_qubits() {
        let p = ProtocolParams::ghz(1000, 0.9, 0.2, 0.3);
        let z = prob_total(&p, V).unwrap();
        assert!(z.re.is_finite() && z.norm() <= 1.0 + 1e-9);
        let m = evaluate(&ProtocolParams::ghz(1000, 0.9, 0.0, 0.3), A).unwrap();
        assert!((m.probability - c(1.0)).norm() < 1e-10);
    }

    #[test]
    fn realize_examples() {
        assert_eq!(realize(c(1.0)), (1.0, 0.0));
        assert_eq!(realize(Complex64::new(0.5, 0.01)), (0.5, 0.01));
        let (re, im) = realize(cis(PI / 2.0));
        assert!(re.abs() < 1e-16 && (im - 1.0).abs() < 1e-16);
    }
}
