//! Parameter, outcome and result types shared by every engine.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{QffcrError, Result};

/// Slack allowed above 1 (and below 0) when checking realized metrics.
pub const METRIC_SLACK: f64 = 1e-9;

/// Register-size and angle-domain limits applied by [`validate_params`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamLimits {
    pub max_qubits: usize,
    /// Allow θ up to π instead of π/2.
    pub extended_theta: bool,
    /// Evaluator named in register-size errors.
    pub engine: &'static str,
}

impl ParamLimits {
    pub const STRUCTURED_MAX_QUBITS: usize = 64;
    pub const DENSE_MAX_QUBITS: usize = 6;

    pub fn structured() -> Self {
        Self {
            max_qubits: Self::STRUCTURED_MAX_QUBITS,
            extended_theta: false,
            engine: "structured",
        }
    }

    pub fn dense() -> Self {
        Self {
            max_qubits: Self::DENSE_MAX_QUBITS,
            extended_theta: false,
            engine: "dense",
        }
    }

    pub fn with_max_qubits(mut self, max_qubits: usize) -> Self {
        self.max_qubits = max_qubits;
        self
    }

    pub fn with_extended_theta(mut self, on: bool) -> Self {
        self.extended_theta = on;
        self
    }
}

impl Default for ParamLimits {
    fn default() -> Self {
        Self::structured()
    }
}

/// One protocol instance: register size, input state and control angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n_qubits: usize,
    /// Mixing angle of the input state, α = cos(γ/2).
    pub gamma: f64,
    /// Relative phase of the input state, β = e^{iφ₀} sin(γ/2).
    pub phi0: f64,
    /// Weak-measurement strength (π/2: no measurement, 0: projective).
    pub theta: f64,
    /// Correction rotation angle.
    pub eta: f64,
    /// Damping probability per qubit.
    pub r: f64,
}

impl ProtocolParams {
    /// The GHZ input (γ = π/2, φ₀ = 0) with the given controls.
    pub fn ghz(n_qubits: usize, theta: f64, eta: f64, r: f64) -> Self {
        Self {
            n_qubits,
            gamma: PI / 2.0,
            phi0: 0.0,
            theta,
            eta,
            r,
        }
    }

    pub fn with_controls(self, theta: f64, eta: f64) -> Self {
        Self { theta, eta, ..self }
    }

    pub fn with_r(self, r: f64) -> Self {
        Self { r, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub fn alpha(&self) -> Complex64 {
        Complex64::new((self.gamma / 2.0).cos(), 0.0)
    }

    pub fn beta(&self) -> Complex64 {
        Complex64::from_polar((self.gamma / 2.0).sin(), self.phi0)
    }
}

/// Checks every field of `p` against `limits`, returning `p` unchanged.
pub fn validate_params(p: ProtocolParams, limits: ParamLimits) -> Result<ProtocolParams> {
    if p.n_qubits < 1 {
        return Err(QffcrError::Domain {
            field: "n_qubits",
            value: p.n_qubits as f64,
            range: format!("[1, {}]", limits.max_qubits),
        });
    }
    if p.n_qubits > limits.max_qubits {
        return Err(QffcrError::Dimension {
            engine: limits.engine,
            n: p.n_qubits,
            max: limits.max_qubits,
        });
    }
    check_range("gamma", p.gamma, |g| g > 0.0 && g < PI, "(0, π)")?;
    check_range("phi0", p.phi0, f64::is_finite, "finite")?;
    if limits.extended_theta {
        check_range("theta", p.theta, |t| (0.0..=PI).contains(&t), "[0, π]")?;
    } else {
        check_range("theta", p.theta, |t| (0.0..=PI / 2.0).contains(&t), "[0, π/2]")?;
    }
    check_range("eta", p.eta, |e| (0.0..TAU).contains(&e), "[0, 2π)")?;
    check_range("r", p.r, |r| (0.0..=1.0).contains(&r), "[0, 1]")?;

    let norm = p.alpha().norm_sqr() + p.beta().norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(QffcrError::Domain {
            field: "gamma",
            value: p.gamma,
            range: format!("normalized amplitudes (|α|²+|β|² = {norm})"),
        });
    }
    Ok(p)
}

fn check_range(
    field: &'static str,
    value: f64,
    ok: impl Fn(f64) -> bool,
    range: &str,
) -> Result<()> {
    if value.is_finite() && ok(value) {
        Ok(())
    } else {
        Err(QffcrError::Domain {
            field,
            value,
            range: range.to_string(),
        })
    }
}

/// Measurement-outcome class: `k` qubits saw outcome 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchClass {
    pub k: usize,
    pub multiplicity: BigUint,
}

impl BranchClass {
    pub fn multiplicity_u64(&self, n: usize) -> Result<u64> {
        self.multiplicity
            .to_u64()
            .ok_or(QffcrError::Overflow { n, k: self.k })
    }

    pub fn multiplicity_f64(&self) -> f64 {
        self.multiplicity.to_f64().unwrap_or(f64::INFINITY)
    }
}

/// Classes k = 0..=n with exact binomial multiplicities.
pub fn branch_classes(n: usize) -> Result<Vec<BranchClass>> {
    if n == 0 {
        return Err(QffcrError::Domain {
            field: "n_qubits",
            value: 0.0,
            range: "[1, ∞)".to_string(),
        });
    }
    Ok(binomial_row(n)
        .into_iter()
        .enumerate()
        .map(|(k, multiplicity)| BranchClass { k, multiplicity })
        .collect())
}

/// Row `n` of Pascal's triangle in exact integer arithmetic.
pub fn binomial_row(n: usize) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 0..n {
        c = c * BigUint::from(n - k) / BigUint::from(k + 1);
        row.push(c.clone());
    }
    row
}

/// How the correction rotation is applied after the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// ρ → T ρ T†.
    Physical,
    /// ρ → T ρ T, the two-sided form the closed-form algebra is written in.
    Paper,
}

impl Convention {
    pub const ALL: [Convention; 2] = [Convention::Physical, Convention::Paper];

    pub fn as_str(self) -> &'static str {
        match self {
            Convention::Physical => "physical",
            Convention::Paper => "paper",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "physical" => Ok(Convention::Physical),
            "paper" => Ok(Convention::Paper),
            other => Err(format!("unknown convention `{other}` (physical|paper)")),
        }
    }
}

/// Which evaluator produced a metrics row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    #[serde(rename = "dense")]
    Dense,
    #[serde(rename = "structured")]
    Structured,
    #[serde(rename = "closedform_appendix")]
    ClosedFormAppendix,
    #[serde(rename = "closedform_verbatim")]
    ClosedFormVerbatim,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Dense => "dense",
            Engine::Structured => "structured",
            Engine::ClosedFormAppendix => "closedform_appendix",
            Engine::ClosedFormVerbatim => "closedform_verbatim",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "dense" => Ok(Engine::Dense),
            "structured" => Ok(Engine::Structured),
            "closedform_appendix" | "appendix" => Ok(Engine::ClosedFormAppendix),
            "closedform_verbatim" | "verbatim" => Ok(Engine::ClosedFormVerbatim),
            other => Err(format!(
                "unknown engine `{other}` (dense|structured|closedform-appendix|closedform-verbatim)"
            )),
        }
    }
}

/// Aggregate metrics before the complex→real realization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexMetrics {
    pub probability: Complex64,
    pub fidelity: Complex64,
    pub qfi: Complex64,
    pub engine: Engine,
    pub convention: Convention,
}

/// One evaluated parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub r: f64,
    pub theta: f64,
    pub eta: f64,
    pub probability: f64,
    pub fidelity: f64,
    pub qfi: f64,
    /// Largest imaginary magnitude dropped while realizing the three metrics.
    pub imag_residual: f64,
    pub convention: Convention,
    pub engine: Engine,
}

impl MetricsRow {
    /// Takes real parts of the complex aggregates and checks the physical
    /// ranges of the result.
    pub fn realize(p: &ProtocolParams, raw: ComplexMetrics) -> Result<Self> {
        Self::realize_with(p, raw, RealMap::RealPart)
    }

    /// As [`MetricsRow::realize`] with an explicit complex→real mapping.
    pub fn realize_with(p: &ProtocolParams, raw: ComplexMetrics, map: RealMap) -> Result<Self> {
        let (probability, ip) = map.apply(raw.probability);
        let (fidelity, i_f) = map.apply(raw.fidelity);
        let (qfi, iq) = map.apply(raw.qfi);
        let row = Self {
            r: p.r,
            theta: p.theta,
            eta: p.eta,
            probability,
            fidelity,
            qfi,
            imag_residual: ip.max(i_f).max(iq),
            convention: raw.convention,
            engine: raw.engine,
        };
        row.check_ranges()?;
        Ok(row)
    }

    pub fn check_ranges(&self) -> Result<()> {
        let unit = -METRIC_SLACK..=1.0 + METRIC_SLACK;
        if !unit.contains(&self.probability) {
            return Err(QffcrError::Unphysical {
                metric: "probability",
                value: self.probability,
            });
        }
        if !unit.contains(&self.fidelity) {
            return Err(QffcrError::Unphysical {
                metric: "fidelity",
                value: self.fidelity,
            });
        }
        if !(self.qfi >= -METRIC_SLACK) {
            return Err(QffcrError::Unphysical {
                metric: "qfi",
                value: self.qfi,
            });
        }
        Ok(())
    }
}

/// Real part and discarded imaginary magnitude.
pub fn realize(z: Complex64) -> (f64, f64) {
    (z.re, z.im.abs())
}

/// How a complex aggregate becomes a reported real number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RealMap {
    #[default]
    #[serde(rename = "real")]
    RealPart,
    #[serde(rename = "modulus")]
    Modulus,
}

impl RealMap {
    pub fn as_str(self) -> &'static str {
        match self {
            RealMap::RealPart => "real",
            RealMap::Modulus => "modulus",
        }
    }

    /// Mapped value and the imaginary magnitude it hides.
    pub fn apply(self, z: Complex64) -> (f64, f64) {
        match self {
            RealMap::RealPart => realize(z),
            RealMap::Modulus => (z.norm(), z.im.abs()),
        }
    }
}

impl fmt::Display for RealMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RealMap {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "real" => Ok(RealMap::RealPart),
            "modulus" => Ok(RealMap::Modulus),
            other => Err(format!("unknown mapping `{other}` (real|modulus)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;

    fn base() -> ProtocolParams {
        ProtocolParams {
            n_qubits: 10,
            gamma: PI / 2.0,
            phi0: 0.0,
            theta: PI / 4.0,
            eta: 0.0,
            r: 0.5,
        }
    }

    #[test]
    fn accepts_in_range_params() {
        assert_eq!(validate_params(base(), ParamLimits::default()), Ok(base()));
    }

    #[test]
    fn rejects_r_above_one() {
        let err = validate_params(ProtocolParams { r: 1.2, ..base() }, ParamLimits::default())
            .unwrap_err();
        assert!(matches!(err, QffcrError::Domain { field: "r", .. }), "{err}");
    }

    #[test]
    fn rejects_empty_register() {
        let err = validate_params(
            ProtocolParams {
                n_qubits: 0,
                ..base()
            },
            ParamLimits::default(),
        )
        .unwrap_err();
        assert!(matches!(err, QffcrError::Domain { field: "n_qubits", .. }));
    }

    #[test]
    fn theta_extension_is_opt_in() {
        let p = ProtocolParams { theta: 2.0, ..base() };
        assert!(validate_params(p, ParamLimits::default()).is_err());
        assert!(validate_params(p, ParamLimits::default().with_extended_theta(true)).is_ok());
    }

    #[test]
    fn gamma_and_eta_bounds() {
        for gamma in [0.0, PI, -0.1, f64::NAN] {
            assert!(validate_params(ProtocolParams { gamma, ..base() }, ParamLimits::default())
                .is_err());
        }
        assert!(validate_params(ProtocolParams { eta: TAU, ..base() }, ParamLimits::default())
            .is_err());
    }

    #[test]
    fn dense_limit_rejects_large_registers() {
        let err = validate_params(base(), ParamLimits::dense()).unwrap_err();
        assert!(matches!(err, QffcrError::Dimension { engine: "dense", n: 10, max: 6 }));
    }

    #[test]
    fn pascal_rows() {
        let pairs = |n| {
            branch_classes(n)
                .unwrap()
                .iter()
                .map(|c| (c.k, c.multiplicity_u64(n).unwrap()))
                .collect::<Vec<_>>()
        };
        assert_eq!(pairs(1), vec![(0, 1), (1, 1)]);
        assert_eq!(pairs(2), vec![(0, 1), (1, 2), (2, 1)]);
        let total: u64 = pairs(10).iter().map(|&(_, m)| m).sum();
        assert_eq!(total, 1024);
        assert!(branch_classes(0).is_err());
    }

    #[test]
    fn big_rows_overflow_u64_but_stay_exact() {
        let classes = branch_classes(100).unwrap();
        assert!(matches!(
            classes[50].multiplicity_u64(100),
            Err(QffcrError::Overflow { n: 100, k: 50 })
        ));
        let total: BigUint = classes.iter().map(|c| c.multiplicity.clone()).sum();
        assert_eq!(total, BigUint::from(1u8) << 100usize);
    }

    #[test]
    fn realize_splits_parts() {
        assert_eq!(realize(Complex64::new(1.0, 0.0)), (1.0, 0.0));
        assert_eq!(realize(Complex64::new(0.5, 0.01)), (0.5, 0.01));
        let (re, im) = realize(Complex64::from_polar(1.0, PI / 2.0));
        assert!(re.abs() < 1e-16 && (im - 1.0).abs() < 1e-16);
    }

    #[test]
    fn realized_rows_respect_ranges() {
        let raw = ComplexMetrics {
            probability: Complex64::new(1.2, 0.0),
            fidelity: Complex64::new(0.5, 0.0),
            qfi: Complex64::new(1.0, 0.0),
            engine: Engine::Structured,
            convention: Convention::Paper,
        };
        assert!(matches!(
            MetricsRow::realize(&base(), raw),
            Err(QffcrError::Unphysical {
                metric: "probability",
                ..
            })
        ));
        let ok = MetricsRow::realize(
            &base(),
            ComplexMetrics {
                probability: Complex64::new(0.9, -0.2),
                ..raw
            },
        )
        .unwrap();
        assert_eq!(ok.imag_residual, 0.2);
    }

    proptest! {
        #[test]
        fn binomial_rows_sum_to_power_of_two(n in 1usize..=64) {
            let total: BigUint = branch_classes(n).unwrap().into_iter().map(|c| c.multiplicity).sum();
            prop_assert_eq!(total, BigUint::from(1u8) << n);
        }

        #[test]
        fn validation_is_idempotent(
            n in 1usize..=64, gamma in 0.01f64..3.13, phi0 in -6.0f64..6.0,
            theta in 0.0f64..=PI / 2.0, eta in 0.0f64..6.28, r in 0.0f64..=1.0,
        ) {
            let p = ProtocolParams { n_qubits: n, gamma, phi0, theta, eta, r };
            let once = validate_params(p, ParamLimits::default()).unwrap();
            prop_assert_eq!(validate_params(once, ParamLimits::default()).unwrap(), p);
        }
    }
}
