//! Step-by-step simulation of the protocol on full 2^N × 2^N density
//! matrices. Exponential in N; used to validate the structured and
//! closed-form engines.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QffcrError, Result};
use crate::primitives::{adc_kraus, flip_op, rotation_op, weak_meas_op, Op2, Outcome};
use crate::types::{
    validate_params, ComplexMetrics, Convention, Engine, MetricsRow, ParamLimits, ProtocolParams,
};

/// Rank cutoff on λᵢ + λⱼ in the SLD sum.
pub const QFI_RANK_CUTOFF: f64 = 1e-10;
/// Central-difference step used by the dense SLD route.
pub const QFI_FD_STEP: f64 = 1e-5;
/// |P_total| below this is a degenerate post-selection.
pub const DEGENERATE_PROBABILITY: f64 = 1e-14;

const HERMITIAN_TOL: f64 = 1e-12;

fn dense_limits() -> ParamLimits {
    ParamLimits::dense().with_extended_theta(true)
}

/// A dense density matrix (possibly unnormalized, possibly non-Hermitian
/// under the paper convention) on `n` qubits. Qubit 0 is the most
/// significant bit of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    n: usize,
    matrix: DMatrix<Complex64>,
}

impl DenseState {
    pub fn from_matrix(n: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let dim = 1usize << n;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QffcrError::DimensionMismatch {
                expected: dim,
                got: matrix.nrows(),
            });
        }
        Ok(Self { n, matrix })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn scaled(&self, s: Complex64) -> DenseState {
        DenseState {
            n: self.n,
            matrix: self.matrix.map(|z| z * s),
        }
    }

    /// max |ρ − ρ†|
    pub fn hermitian_deviation(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()).map(|z| z * 0.5);
        let mut vals: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    /// Largest entrywise distance to `other`.
    pub fn max_diff(&self, other: &DenseState) -> f64 {
        (&self.matrix - &other.matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Corner entries (|0…0⟩⟨0…0|, |1…1⟩⟨1…1|, |1…1⟩⟨0…0|, |0…0⟩⟨1…1|).
    pub fn corners(&self) -> [Complex64; 4] {
        let last = self.dim() - 1;
        [
            self.entry(0, 0),
            self.entry(last, last),
            self.entry(last, 0),
            self.entry(0, last),
        ]
    }

    fn bit(&self, q: usize) -> usize {
        self.n - 1 - q
    }

    /// (op on qubit q) · ρ
    pub fn apply_left(&mut self, op: &Op2, q: usize) {
        let mask = 1usize << self.bit(q);
        let dim = self.dim();
        for col in 0..dim {
            for row in (0..dim).filter(|i| i & mask == 0) {
                let (lo, hi) = (self.matrix[(row, col)], self.matrix[(row | mask, col)]);
                self.matrix[(row, col)] = op.get(0, 0) * lo + op.get(0, 1) * hi;
                self.matrix[(row | mask, col)] = op.get(1, 0) * lo + op.get(1, 1) * hi;
            }
        }
    }

    /// ρ · (op on qubit q)
    pub fn apply_right(&mut self, op: &Op2, q: usize) {
        let mask = 1usize << self.bit(q);
        let dim = self.dim();
        for row in 0..dim {
            for col in (0..dim).filter(|j| j & mask == 0) {
                let (lo, hi) = (self.matrix[(row, col)], self.matrix[(row, col | mask)]);
                self.matrix[(row, col)] = lo * op.get(0, 0) + hi * op.get(1, 0);
                self.matrix[(row, col | mask)] = lo * op.get(0, 1) + hi * op.get(1, 1);
            }
        }
    }

    pub fn sandwich(&mut self, left: &Op2, right: &Op2, q: usize) {
        self.apply_left(left, q);
        self.apply_right(right, q);
    }

    /// Σ_K K ρ K† on qubit q.
    pub fn apply_channel(&mut self, kraus: &[Op2], q: usize) {
        let mut acc = DMatrix::zeros(self.dim(), self.dim());
        for k in kraus {
            let mut term = self.clone();
            term.sandwich(k, &k.adjoint(), q);
            acc += term.matrix;
        }
        self.matrix = acc;
    }
}

/// α|0…0⟩ + β|1…1⟩ as a state vector.
pub fn ghz_vector(n: usize, gamma: f64, phi0: f64) -> DVector<Complex64> {
    let dim = 1usize << n;
    let mut v = DVector::zeros(dim);
    v[0] = Complex64::new((gamma / 2.0).cos(), 0.0);
    v[dim - 1] += Complex64::from_polar((gamma / 2.0).sin(), phi0);
    v
}

pub fn pure_state(n: usize, psi: &DVector<Complex64>) -> Result<DenseState> {
    DenseState::from_matrix(n, psi * psi.adjoint())
}

/// Projector onto the generalized GHZ state.
pub fn ghz_state(n: usize, gamma: f64, phi0: f64) -> Result<DenseState> {
    check_dense_size(n)?;
    pure_state(n, &ghz_vector(n, gamma, phi0))
}

fn check_dense_size(n: usize) -> Result<()> {
    let max = ParamLimits::DENSE_MAX_QUBITS;
    if n == 0 || n > max {
        return Err(QffcrError::Dimension {
            engine: "dense",
            n,
            max,
        });
    }
    Ok(())
}

/// Joint measurement record; qubit q's outcome is `outcomes[q]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchPattern(Vec<Outcome>);

impl BranchPattern {
    pub fn new(outcomes: Vec<Outcome>) -> Self {
        Self(outcomes)
    }

    /// Pattern whose binary value (qubit 0 most significant) is `value`.
    pub fn from_value(n: usize, value: u64) -> Self {
        Self(
            (0..n)
                .map(|q| Outcome::from_bit(value >> (n - 1 - q) & 1 == 1))
                .collect(),
        )
    }

    /// Canonical pattern of class k: the first k qubits saw outcome 0.
    pub fn canonical(n: usize, k: usize) -> Self {
        Self(
            (0..n)
                .map(|q| if q < k { Outcome::Zero } else { Outcome::One })
                .collect(),
        )
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of qubits with outcome 0.
    pub fn zeros(&self) -> usize {
        self.0.iter().filter(|&&o| o == Outcome::Zero).count()
    }
}

impl std::str::FromStr for BranchPattern {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(Outcome::Zero),
                '1' => Ok(Outcome::One),
                other => Err(format!("invalid outcome `{other}` in pattern")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(BranchPattern)
    }
}

impl std::fmt::Display for BranchPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for o in &self.0 {
            f.write_str(if *o == Outcome::Zero { "0" } else { "1" })?;
        }
        Ok(())
    }
}

/// One measurement record's unnormalized final state.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRun {
    pub pattern: BranchPattern,
    pub unnormalized: DenseState,
    /// Trace of the unnormalized state; complex under the paper convention.
    pub probability: Complex64,
    pub convention: Convention,
}

/// Applies the five protocol steps for one measurement record.
pub fn run_protocol_branch(
    p: &ProtocolParams,
    pattern: &BranchPattern,
    conv: Convention,
) -> Result<BranchRun> {
    validate_params(*p, dense_limits())?;
    if pattern.len() != p.n_qubits {
        return Err(QffcrError::DimensionMismatch {
            expected: p.n_qubits,
            got: pattern.len(),
        });
    }
    let kraus = adc_kraus(p.r)?;
    let kraus = [kraus.0, kraus.1];
    let mut rho = ghz_state(p.n_qubits, p.gamma, p.phi0)?;

    for (q, &o) in pattern.outcomes().iter().enumerate() {
        let mf = flip_op(o) * weak_meas_op(o, p.theta)?;
        rho.sandwich(&mf, &mf.adjoint(), q);
    }
    for q in 0..p.n_qubits {
        rho.apply_channel(&kraus, q);
    }
    for (q, &o) in pattern.outcomes().iter().enumerate() {
        let f = flip_op(o);
        rho.sandwich(&f, &f.adjoint(), q);
        let t = rotation_op(o, p.eta);
        let right = match conv {
            Convention::Physical => t.adjoint(),
            Convention::Paper => t,
        };
        rho.sandwich(&t, &right, q);
    }

    Ok(BranchRun {
        pattern: pattern.clone(),
        probability: rho.trace(),
        unnormalized: rho,
        convention: conv,
    })
}

/// How the dense engine evaluates per-branch QFI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfiMethod {
    /// 4|C|²N²/(A+B) on the simulated matrix's corner entries.
    Corners,
    /// Finite-difference SLD eigen-sum; physical convention only.
    Sld,
}

/// All branches of one parameter point plus their aggregate.
#[derive(Debug, Clone)]
pub struct DenseAverage {
    pub branches: Vec<BranchRun>,
    pub metrics: ComplexMetrics,
}

impl DenseAverage {
    pub fn row(&self, p: &ProtocolParams) -> Result<MetricsRow> {
        MetricsRow::realize(p, self.metrics)
    }
}

/// Per-branch QFI contribution P_b · QFI(ρ̃_b / P_b) from corner entries.
pub fn corner_qfi_weight(state: &DenseState) -> Result<Complex64> {
    let [a, b, c, _] = state.corners();
    if c.norm_sqr() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let denom = a + b;
    if denom.norm() < DEGENERATE_PROBABILITY * (a.norm() + b.norm()) || denom.norm() == 0.0 {
        return Err(QffcrError::Degenerate {
            what: "branch corner weight A+B",
            magnitude: denom.norm(),
            threshold: DEGENERATE_PROBABILITY,
        });
    }
    let n = state.n_qubits() as f64;
    Ok(Complex64::new(4.0 * c.norm_sqr() * n * n, 0.0) / denom)
}

/// Enumerates all 2^N records and aggregates probability, fidelity and QFI.
pub fn run_protocol_average(
    p: &ProtocolParams,
    conv: Convention,
    method: QfiMethod,
) -> Result<DenseAverage> {
    validate_params(*p, dense_limits())?;
    if method == QfiMethod::Sld && conv == Convention::Paper {
        return Err(QffcrError::NonHermitian {
            deviation: f64::NAN,
        });
    }
    let n = p.n_qubits;
    let psi = ghz_vector(n, p.gamma, p.phi0);
    let branches = (0..1u64 << n)
        .map(|v| run_protocol_branch(p, &BranchPattern::from_value(n, v), conv))
        .collect::<Result<Vec<_>>>()?;

    let mut prob = Complex64::new(0.0, 0.0);
    let mut overlap = Complex64::new(0.0, 0.0);
    let mut qfi = Complex64::new(0.0, 0.0);
    for b in &branches {
        prob += b.probability;
        overlap += (psi.adjoint() * b.unnormalized.matrix() * &psi)[(0, 0)];
        qfi += match method {
            QfiMethod::Corners => corner_qfi_weight(&b.unnormalized)?,
            QfiMethod::Sld => {
                let pb = b.probability.re;
                if pb <= DEGENERATE_PROBABILITY {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(pb * branch_qfi_sld(p, &b.pattern, conv)?, 0.0)
                }
            }
        };
    }
    if prob.norm() < DEGENERATE_PROBABILITY {
        return Err(QffcrError::Degenerate {
            what: "total probability",
            magnitude: prob.norm(),
            threshold: DEGENERATE_PROBABILITY,
        });
    }
    Ok(DenseAverage {
        branches,
        metrics: ComplexMetrics {
            probability: prob,
            fidelity: overlap / prob,
            qfi,
            engine: Engine::Dense,
            convention: conv,
        },
    })
}

/// QFI of the normalized branch state with respect to a phase imprinted on
/// every qubit, evaluated by the finite-difference SLD route.
pub fn branch_qfi_sld(p: &ProtocolParams, pattern: &BranchPattern, conv: Convention) -> Result<f64> {
    let n = p.n_qubits as f64;
    let family = |delta: f64| -> Result<DenseState> {
        let shifted = ProtocolParams {
            phi0: p.phi0 + n * delta,
            ..*p
        };
        let run = run_protocol_branch(&shifted, pattern, conv)?;
        Ok(run.unnormalized.scaled(run.probability.inv()))
    };
    qfi_general(family, 0.0, QFI_FD_STEP)
}

/// Quantum Fisher information of the family `state_at` at `phi`:
/// Σ_{λᵢ+λⱼ>ε} 2|⟨i|∂ρ|j⟩|²/(λᵢ+λⱼ) with ∂ρ from a central difference.
pub fn qfi_general<F>(state_at: F, phi: f64, step: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<DenseState>,
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(QffcrError::Domain {
            field: "step",
            value: step,
            range: "[1e-7, 1e-3]".to_string(),
        });
    }
    let rho = state_at(phi)?;
    let plus = state_at(phi + step)?;
    let minus = state_at(phi - step)?;
    for s in [&rho, &plus, &minus] {
        let dev = s.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(QffcrError::NonHermitian { deviation: dev });
        }
    }
    let deriv = (plus.matrix() - minus.matrix()).map(|z| z / (2.0 * step));

    let herm = (rho.matrix() + rho.matrix().adjoint()).map(|z| z * 0.5);
    let eig = herm.symmetric_eigen();
    let lambdas = &eig.eigenvalues;
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(QffcrError::Eigen("non-finite eigenvalue".to_string()));
    }
    let vecs = &eig.eigenvectors;
    let in_basis = vecs.adjoint() * deriv * vecs;

    let dim = rho.dim();
    let mut f = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let denom = lambdas[i] + lambdas[j];
            if denom > QFI_RANK_CUTOFF {
                f += 2.0 * in_basis[(i, j)].norm_sqr() / denom;
            }
        }
    }
    Ok(f)
}

/// ⟨ψ|ρ|ψ⟩ clipped into [0, 1].
pub fn fidelity_pure(psi: &DVector<Complex64>, rho: &DenseState) -> Result<f64> {
    if psi.len() != rho.dim() {
        return Err(QffcrError::DimensionMismatch {
            expected: rho.dim(),
            got: psi.len(),
        });
    }
    let value = (psi.adjoint() * rho.matrix() * psi)[(0, 0)];
    Ok(value.re.clamp(0.0, 1.0))
}

/// The input state passed through the damping channel with no protection.
pub fn do_nothing_dense(p: &ProtocolParams) -> Result<MetricsRow> {
    validate_params(*p, dense_limits())?;
    let kraus = adc_kraus(p.r)?;
    let kraus = [kraus.0, kraus.1];
    let mut rho = ghz_state(p.n_qubits, p.gamma, p.phi0)?;
    for q in 0..p.n_qubits {
        rho.apply_channel(&kraus, q);
    }
    let psi = ghz_vector(p.n_qubits, p.gamma, p.phi0);
    let raw = ComplexMetrics {
        probability: rho.trace(),
        fidelity: Complex64::new(fidelity_pure(&psi, &rho)?, 0.0),
        qfi: corner_qfi_weight(&rho)?,
        engine: Engine::Dense,
        convention: Convention::Physical,
    };
    MetricsRow::realize(p, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ghz_params(n: usize, theta: f64, eta: f64, r: f64) -> ProtocolParams {
        ProtocolParams::ghz(n, theta, eta, r)
    }

    #[test]
    fn ghz_corners() {
        let s = ghz_state(2, PI / 2.0, 0.0).unwrap();
        for z in s.corners() {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }
        let nonzero = s.matrix().iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 4);

        let near_ground = ghz_state(3, 1e-9, 0.0).unwrap();
        assert!((near_ground.entry(0, 0).re - 1.0).abs() < 1e-15);

        let single = ghz_state(1, PI / 2.0, PI / 2.0).unwrap();
        let expect = [c(0.5, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.5, 0.0)];
        for (i, e) in expect.iter().enumerate() {
            assert!((single.entry(i / 2, i % 2) - e).norm() < 1e-15);
        }
        assert!(matches!(
            ghz_state(7, 1.0, 0.0),
            Err(QffcrError::Dimension { .. })
        ));
    }

    #[test]
    fn single_qubit_branch_by_hand() {
        let p = ghz_params(1, PI / 2.0, 0.0, 0.5);
        let run = run_protocol_branch(&p, &"0".parse().unwrap(), Convention::Physical).unwrap();
        let x = 0.5f64.sqrt() / 4.0;
        let expect = [c(3.0 / 8.0, 0.0), c(x, 0.0), c(x, 0.0), c(1.0 / 8.0, 0.0)];
        for (i, e) in expect.iter().enumerate() {
            assert!((run.unnormalized.entry(i / 2, i % 2) - e).norm() < 1e-15);
        }
        assert!((run.probability - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn noiseless_branch_is_plain_measurement() {
        for theta in [0.0, 0.3, 1.1, PI / 2.0] {
            let p = ProtocolParams {
                n_qubits: 1,
                gamma: 1.0,
                phi0: 0.4,
                theta,
                eta: 0.0,
                r: 0.0,
            };
            let run = run_protocol_branch(&p, &"0".parse().unwrap(), Convention::Paper).unwrap();
            let m0 = weak_meas_op(Outcome::Zero, theta).unwrap();
            let mut expect = ghz_state(1, 1.0, 0.4).unwrap();
            expect.sandwich(&m0, &m0.adjoint(), 0);
            assert!(run.unnormalized.max_diff(&expect) < 1e-15);
        }
    }

    #[test]
    fn identity_limit_two_qubits() {
        let p = ghz_params(2, PI / 2.0, 0.0, 0.0);
        for method in [QfiMethod::Corners, QfiMethod::Sld] {
            let row = run_protocol_average(&p, Convention::Physical, method)
                .unwrap()
                .row(&p)
                .unwrap();
            assert!((row.probability - 1.0).abs() < 1e-12);
            assert!((row.fidelity - 1.0).abs() < 1e-12);
            assert!((row.qfi - 4.0).abs() < 1e-6, "{method:?}: {}", row.qfi);
        }
    }

    #[test]
    fn full_damping_kills_qfi() {
        for (theta, eta) in [(0.3, 0.0), (1.2, 2.5)] {
            let p = ghz_params(3, theta, eta, 1.0);
            let avg = run_protocol_average(&p, Convention::Physical, QfiMethod::Corners).unwrap();
            assert_eq!(avg.metrics.qfi.norm(), 0.0);
        }
    }

    #[test]
    fn instrument_preserves_trace_and_positivity() {
        let p = ProtocolParams {
            n_qubits: 3,
            gamma: 2.1,
            phi0: 0.7,
            theta: 0.9,
            eta: 1.3,
            r: 0.35,
        };
        let avg = run_protocol_average(&p, Convention::Physical, QfiMethod::Corners).unwrap();
        assert!((avg.metrics.probability - c(1.0, 0.0)).norm() < 1e-10);
        for b in &avg.branches {
            assert!(b.unnormalized.hermitian_deviation() < 1e-12);
            assert!(b.unnormalized.eigenvalues()[0] > -1e-10);
            assert!(b.probability.im.abs() < 1e-15);
        }
    }

    #[test]
    fn physical_probability_ignores_eta() {
        let base = ProtocolParams {
            n_qubits: 3,
            gamma: 0.8,
            phi0: 0.2,
            theta: 0.8,
            eta: 0.0,
            r: 0.4,
        };
        let p0 = run_protocol_average(&base, Convention::Physical, QfiMethod::Corners).unwrap();
        for eta in [0.5, 2.1, 4.0] {
            let pe = run_protocol_average(
                &ProtocolParams { eta, ..base },
                Convention::Physical,
                QfiMethod::Corners,
            )
            .unwrap();
            for (a, b) in p0.branches.iter().zip(&pe.branches) {
                assert!((a.probability - b.probability).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn equal_k_patterns_are_permutations() {
        let p = ProtocolParams {
            n_qubits: 3,
            gamma: 1.3,
            phi0: 0.5,
            theta: 0.7,
            eta: 0.9,
            r: 0.3,
        };
        for conv in Convention::ALL {
            let a = run_protocol_branch(&p, &"011".parse().unwrap(), conv).unwrap();
            let b = run_protocol_branch(&p, &"110".parse().unwrap(), conv).unwrap();
            // Relabel qubits (0,1,2) -> (2,0,1) to map pattern 011 onto 110.
            let perm = |i: usize| ((i >> 2) & 1) | ((i & 3) << 1);
            for i in 0..8 {
                for j in 0..8 {
                    let d = a.unnormalized.entry(i, j) - b.unnormalized.entry(perm(i), perm(j));
                    assert!(d.norm() < 1e-14);
                }
            }
            assert!((a.probability - b.probability).norm() < 1e-14);
        }
    }

    #[test]
    fn sld_on_pure_states() {
        let qubit = |phi: f64| {
            let v = DVector::from_vec(vec![c(FRAC_1_SQRT_2, 0.0), Complex64::from_polar(FRAC_1_SQRT_2, phi)]);
            pure_state(1, &v)
        };
        assert!((qfi_general(qubit, 0.37, QFI_FD_STEP).unwrap() - 1.0).abs() < 1e-6);

        for n in 1..=4 {
            let family = |phi: f64| ghz_state(n, PI / 2.0, n as f64 * phi);
            let f = qfi_general(family, 0.2, QFI_FD_STEP).unwrap();
            assert!((f - (n * n) as f64).abs() < 1e-5, "n={n}: {f}");
        }

        let mixed = |_: f64| DenseState::from_matrix(1, DMatrix::identity(2, 2).map(|z: Complex64| z * 0.5));
        assert_eq!(qfi_general(mixed, 0.0, QFI_FD_STEP).unwrap(), 0.0);
        assert!(qfi_general(mixed, 0.0, 1e-2).is_err());
    }

    #[test]
    fn sld_rejects_non_hermitian_states() {
        let p = ghz_params(2, 0.8, 1.0, 0.3);
        let err = branch_qfi_sld(&p, &"01".parse().unwrap(), Convention::Paper).unwrap_err();
        assert!(matches!(err, QffcrError::NonHermitian { .. }));
    }

    #[test]
    fn pure_fidelities() {
        let bell = ghz_vector(2, PI / 2.0, 0.0);
        let bell_rho = pure_state(2, &bell).unwrap();
        assert!((fidelity_pure(&bell, &bell_rho).unwrap() - 1.0).abs() < 1e-15);
        let mut zz = DVector::zeros(4);
        zz[0] = c(1.0, 0.0);
        let mut ones = DVector::zeros(4);
        ones[3] = c(1.0, 0.0);
        assert_eq!(fidelity_pure(&zz, &pure_state(2, &ones).unwrap()).unwrap(), 0.0);
        let mixed = DenseState::from_matrix(2, DMatrix::identity(4, 4).map(|z: Complex64| z * 0.25)).unwrap();
        assert!((fidelity_pure(&bell, &mixed).unwrap() - 0.25).abs() < 1e-15);
        assert!(fidelity_pure(&DVector::zeros(2), &mixed).is_err());
    }

    #[test]
    fn do_nothing_limits() {
        let clean = do_nothing_dense(&ghz_params(3, 0.0, 0.0, 0.0)).unwrap();
        assert!((clean.fidelity - 1.0).abs() < 1e-12 && (clean.qfi - 9.0).abs() < 1e-12);
        assert_eq!(clean.probability, 1.0);
        let p = ProtocolParams {
            gamma: 1.1,
            ..ghz_params(3, 0.0, 0.0, 1.0)
        };
        let dead = do_nothing_dense(&p).unwrap();
        assert!((dead.fidelity - (0.55f64).cos().powi(2)).abs() < 1e-12);
        assert_eq!(dead.qfi, 0.0);
    }
}
