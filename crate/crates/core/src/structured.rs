//! Corner-plus-diagonal evaluation of the protocol.
//!
//! Every protocol step acts qubit-wise, so each of the four input components
//! α·α*|0…0⟩⟨0…0|, β·β*|1…1⟩⟨1…1|, β·α*|1…1⟩⟨0…0| and α·β*|0…0⟩⟨1…1|
//! stays a tensor product of single-qubit operators. Propagating the four
//! single-qubit basis operators through the steps once per outcome gives
//! the whole final state of a branch class: two diagonal tensor products
//! plus two corner coherences. Aggregates then cost O(N log N) per point.

use std::cell::RefCell;
use std::rc::Rc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dense::{BranchPattern, DenseState, DEGENERATE_PROBABILITY};
use crate::error::{QffcrError, Result};
use crate::primitives::{adc_kraus, apply_adc, flip_op, rotation_op, weak_meas_op, Op2, Outcome};
use crate::scaled::{compensated_sum, Scaled};
use crate::types::{
    binomial_row, validate_params, ComplexMetrics, Convention, Engine, MetricsRow, ParamLimits,
    ProtocolParams,
};

/// Off-structure entries tolerated when checking single-qubit images.
const STRUCTURE_TOL: f64 = 1e-14;

/// How per-class fidelity numerators are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FidelityNorm {
    /// Σ numerators / P_total.
    #[default]
    Aggregate,
    /// Every class numerator divided by the k = 0 class probability, then
    /// weighted by the class probability and divided by P_total.
    BranchZero,
}

impl FidelityNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            FidelityNorm::Aggregate => "aggregate",
            FidelityNorm::BranchZero => "branch-zero",
        }
    }
}

impl std::str::FromStr for FidelityNorm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "aggregate" => Ok(FidelityNorm::Aggregate),
            "branch-zero" => Ok(FidelityNorm::BranchZero),
            other => Err(format!("unknown fidelity norm `{other}` (aggregate|branch-zero)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateOptions {
    pub fidelity_norm: FidelityNorm,
    pub limits: ParamLimits,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self {
            fidelity_norm: FidelityNorm::Aggregate,
            limits: ParamLimits::structured().with_extended_theta(true),
        }
    }
}

impl AggregateOptions {
    pub fn with_max_qubits(mut self, max_qubits: usize) -> Self {
        self.limits = self.limits.with_max_qubits(max_qubits);
        self
    }
}

/// Single-qubit images of the four basis operators after all five steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitImages {
    /// Diagonal of the image of |0⟩⟨0|.
    pub from_ground: (Complex64, Complex64),
    /// Diagonal of the image of |1⟩⟨1|.
    pub from_excited: (Complex64, Complex64),
    /// (1,0) entry of the image of |1⟩⟨0|.
    pub lower: Complex64,
    /// (0,1) entry of the image of |0⟩⟨1|.
    pub upper: Complex64,
}

impl QubitImages {
    /// Propagates the basis operators through measurement, flip, damping,
    /// flip and rotation for a qubit that saw `outcome`.
    pub fn protocol(p: &ProtocolParams, outcome: Outcome, conv: Convention) -> Result<Self> {
        let mf = flip_op(outcome) * weak_meas_op(outcome, p.theta)?;
        let kraus = adc_kraus(p.r)?;
        let flip = flip_op(outcome);
        let t = rotation_op(outcome, p.eta);
        let t_right = match conv {
            Convention::Physical => t.adjoint(),
            Convention::Paper => t,
        };
        let evolve = |x: Op2| {
            let x = x.sandwich(&mf, &mf.adjoint());
            let x = apply_adc(&x, &kraus);
            let x = x.sandwich(&flip, &flip.adjoint());
            x.sandwich(&t, &t_right)
        };
        Self::from_images(evolve)
    }

    /// Damping only, for the unprotected baseline.
    pub fn damping_only(r: f64) -> Result<Self> {
        let kraus = adc_kraus(r)?;
        Self::from_images(|x| apply_adc(&x, &kraus))
    }

    fn from_images(evolve: impl Fn(Op2) -> Op2) -> Result<Self> {
        let g = evolve(Op2::basis(0, 0));
        let e = evolve(Op2::basis(1, 1));
        let lo = evolve(Op2::basis(1, 0));
        let up = evolve(Op2::basis(0, 1));
        let scale = [g, e, lo, up]
            .iter()
            .flat_map(|m| m.0.iter())
            .map(|z| z.norm())
            .fold(1.0, f64::max);
        let off = |m: &Op2, keep: &[(usize, usize)]| {
            (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .filter(|ij| !keep.contains(ij))
                .map(|(i, j)| m.get(i, j).norm())
                .fold(0.0, f64::max)
        };
        let leak = off(&g, &[(0, 0), (1, 1)])
            .max(off(&e, &[(0, 0), (1, 1)]))
            .max(off(&lo, &[(1, 0)]))
            .max(off(&up, &[(0, 1)]));
        if leak > STRUCTURE_TOL * scale {
            return Err(QffcrError::Identity(format!(
                "single-qubit images leave the corner/diagonal structure (leak {leak:e})"
            )));
        }
        Ok(Self {
            from_ground: (g.get(0, 0), g.get(1, 1)),
            from_excited: (e.get(0, 0), e.get(1, 1)),
            lower: lo.get(1, 0),
            upper: up.get(0, 1),
        })
    }
}

/// A diagonal operator `overall · ⊗_q diag(d0_q, d1_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagProduct {
    pub overall: Complex64,
    pub factors: Vec<(Complex64, Complex64)>,
}

impl DiagProduct {
    pub fn trace(&self) -> Complex64 {
        self.factors
            .iter()
            .fold(self.overall, |acc, (d0, d1)| acc * (d0 + d1))
    }

    /// Diagonal entry at `index` (qubit 0 is the most significant bit).
    pub fn entry(&self, index: usize) -> Complex64 {
        let n = self.factors.len();
        self.factors
            .iter()
            .enumerate()
            .fold(self.overall, |acc, (q, (d0, d1))| {
                if index >> (n - 1 - q) & 1 == 1 {
                    acc * d1
                } else {
                    acc * d0
                }
            })
    }
}

/// Final unnormalized state of one measurement record.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchElements {
    pub k: usize,
    /// ⟨0…0|ρ̃|0…0⟩
    pub a: Complex64,
    /// ⟨1…1|ρ̃|1…1⟩
    pub b: Complex64,
    /// ⟨1…1|ρ̃|0…0⟩
    pub c: Complex64,
    /// ⟨0…0|ρ̃|1…1⟩
    pub d: Complex64,
    /// Image of the |0…0⟩⟨0…0| input component (weight |α|²).
    pub diag_alpha: DiagProduct,
    /// Image of the |1…1⟩⟨1…1| input component (weight |β|²).
    pub diag_beta: DiagProduct,
    /// Trace of ρ̃.
    pub p: Complex64,
    pub convention: Convention,
}

impl BranchElements {
    pub fn n_qubits(&self) -> usize {
        self.diag_alpha.factors.len()
    }
}

/// Elements of the canonical record of class k (the first k qubits saw 0).
pub fn branch_elements(p: &ProtocolParams, k: usize, conv: Convention) -> Result<BranchElements> {
    if k > p.n_qubits {
        return Err(QffcrError::Domain {
            field: "k",
            value: k as f64,
            range: format!("[0, {}]", p.n_qubits),
        });
    }
    branch_elements_for_pattern(p, &BranchPattern::canonical(p.n_qubits, k), conv)
}

/// Elements of an arbitrary measurement record.
pub fn branch_elements_for_pattern(
    p: &ProtocolParams,
    pattern: &BranchPattern,
    conv: Convention,
) -> Result<BranchElements> {
    validate_params(*p, AggregateOptions::default().limits)?;
    if pattern.len() != p.n_qubits {
        return Err(QffcrError::DimensionMismatch {
            expected: p.n_qubits,
            got: pattern.len(),
        });
    }
    let zero = QubitImages::protocol(p, Outcome::Zero, conv)?;
    let one = QubitImages::protocol(p, Outcome::One, conv)?;
    let role = |o: Outcome| if o == Outcome::Zero { &zero } else { &one };

    let (alpha, beta) = (p.alpha(), p.beta());
    let diag_alpha = DiagProduct {
        overall: Complex64::new(alpha.norm_sqr(), 0.0),
        factors: pattern.outcomes().iter().map(|&o| role(o).from_ground).collect(),
    };
    let diag_beta = DiagProduct {
        overall: Complex64::new(beta.norm_sqr(), 0.0),
        factors: pattern.outcomes().iter().map(|&o| role(o).from_excited).collect(),
    };
    let last = (1usize << p.n_qubits.min(63)) - 1;
    let (a, b) = if p.n_qubits <= 63 {
        (
            diag_alpha.entry(0) + diag_beta.entry(0),
            diag_alpha.entry(last) + diag_beta.entry(last),
        )
    } else {
        let corner = |d: &DiagProduct, one: bool| {
            d.factors
                .iter()
                .fold(d.overall, |acc, f| acc * if one { f.1 } else { f.0 })
        };
        (
            corner(&diag_alpha, false) + corner(&diag_beta, false),
            corner(&diag_alpha, true) + corner(&diag_beta, true),
        )
    };
    let c = pattern
        .outcomes()
        .iter()
        .fold(beta * alpha.conj(), |acc, &o| acc * role(o).lower);
    let d = pattern
        .outcomes()
        .iter()
        .fold(alpha * beta.conj(), |acc, &o| acc * role(o).upper);
    Ok(BranchElements {
        k: pattern.zeros(),
        a,
        b,
        c,
        d,
        p: diag_alpha.trace() + diag_beta.trace(),
        diag_alpha,
        diag_beta,
        convention: conv,
    })
}

/// (1/P)·4|C|²n²/(A+B) for one record.
pub fn branch_qfi(e: &BranchElements, n: usize) -> Result<Complex64> {
    if e.c.norm_sqr() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let denom = e.a + e.b;
    if denom.norm() < DEGENERATE_PROBABILITY {
        return Err(QffcrError::Degenerate {
            what: "branch corner weight A+B",
            magnitude: denom.norm(),
            threshold: DEGENERATE_PROBABILITY,
        });
    }
    if e.p.norm() < DEGENERATE_PROBABILITY {
        return Err(QffcrError::Degenerate {
            what: "branch probability",
            magnitude: e.p.norm(),
            threshold: DEGENERATE_PROBABILITY,
        });
    }
    let nn = (n * n) as f64;
    Ok(Complex64::new(4.0 * e.c.norm_sqr() * nn, 0.0) / (denom * e.p))
}

/// Expands a record's elements into a dense matrix.
pub fn state_export(e: &BranchElements) -> Result<DenseState> {
    let n = e.n_qubits();
    if n == 0 || n > ParamLimits::DENSE_MAX_QUBITS {
        return Err(QffcrError::Dimension {
            engine: "dense export",
            n,
            max: ParamLimits::DENSE_MAX_QUBITS,
        });
    }
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = e.diag_alpha.entry(i) + e.diag_beta.entry(i);
    }
    m[(dim - 1, 0)] += e.c;
    m[(0, dim - 1)] += e.d;
    DenseState::from_matrix(n, m)
}

thread_local! {
    static WEIGHTS: RefCell<Option<(usize, Rc<[Scaled]>)>> = const { RefCell::new(None) };
}

/// C(N, k) for k = 0..=N, memoized per thread for the most recent N.
fn class_weights(n: usize) -> Rc<[Scaled]> {
    WEIGHTS.with(|cell| {
        let mut slot = cell.borrow_mut();
        match &*slot {
            Some((m, w)) if *m == n => w.clone(),
            _ => {
                let w: Rc<[Scaled]> = binomial_row(n).iter().map(Scaled::from_biguint).collect();
                *slot = Some((n, w.clone()));
                w
            }
        }
    })
}

/// Class-k scalars in scaled arithmetic.
#[derive(Debug, Clone, Copy)]
struct ClassScalars {
    a: Scaled,
    b: Scaled,
    c: Scaled,
    d: Scaled,
    p: Scaled,
}

/// Per-qubit factor pairs (outcome 0, outcome 1) whose k / N−k powers make up
/// A (α and β parts), B (α and β parts), C, D and P (α and β parts).
fn factor_pairs(zero: &QubitImages, one: &QubitImages) -> [(Complex64, Complex64); 8] {
    let (za, zb) = (zero.from_ground, zero.from_excited);
    let (oa, ob) = (one.from_ground, one.from_excited);
    [
        (za.0, oa.0),
        (zb.0, ob.0),
        (za.1, oa.1),
        (zb.1, ob.1),
        (zero.lower, one.lower),
        (zero.upper, one.upper),
        (za.0 + za.1, oa.0 + oa.1),
        (zb.0 + zb.1, ob.0 + ob.1),
    ]
}

impl ClassScalars {
    fn assemble(prods: [Scaled; 8], alpha: Complex64, beta: Complex64) -> Self {
        let wa = alpha.norm_sqr();
        let wb = beta.norm_sqr();
        Self {
            a: prods[0] * wa + prods[1] * wb,
            b: prods[2] * wa + prods[3] * wb,
            c: prods[4] * (beta * alpha.conj()),
            d: prods[5] * (alpha * beta.conj()),
            p: prods[6] * wa + prods[7] * wb,
        }
    }

    fn new(
        n: usize,
        k: usize,
        zero: &QubitImages,
        one: &QubitImages,
        alpha: Complex64,
        beta: Complex64,
    ) -> Self {
        let (k, rest) = (k as u64, (n - k) as u64);
        let prods = factor_pairs(zero, one)
            .map(|(x, y)| Scaled::from_c64(x).powu(k) * Scaled::from_c64(y).powu(rest));
        Self::assemble(prods, alpha, beta)
    }

    /// Every class k = 0..=N from running power tables.
    fn all(
        n: usize,
        zero: &QubitImages,
        one: &QubitImages,
        alpha: Complex64,
        beta: Complex64,
    ) -> Vec<Self> {
        let powers = |x: Complex64| {
            let base = Scaled::from_c64(x);
            let mut acc = Scaled::one();
            (0..=n)
                .map(|_| {
                    let cur = acc;
                    acc = acc * base;
                    cur
                })
                .collect::<Vec<_>>()
        };
        let tables = factor_pairs(zero, one).map(|(x, y)| (powers(x), powers(y)));
        (0..=n)
            .map(|k| {
                let prods = std::array::from_fn(|i| tables[i].0[k] * tables[i].1[n - k]);
                Self::assemble(prods, alpha, beta)
            })
            .collect()
    }

    /// 4|C|²N²/(A+B), or zero when the record carries no coherence.
    fn qfi_weight(&self, n: usize) -> Result<Scaled> {
        if self.c.is_zero() {
            return Ok(Scaled::ZERO);
        }
        let denom = self.a + self.b;
        let scale = self.a.log2_abs().max(self.b.log2_abs());
        if denom.is_zero() || denom.log2_abs() < scale + DEGENERATE_PROBABILITY.log2() {
            return Err(QffcrError::Degenerate {
                what: "class corner weight A+B",
                magnitude: denom.to_c64().norm(),
                threshold: DEGENERATE_PROBABILITY,
            });
        }
        let nn = (n as f64) * (n as f64);
        Ok(self.c.norm_sqr() * (4.0 * nn) / denom)
    }

    fn fidelity_numerator(&self, alpha: Complex64, beta: Complex64) -> Scaled {
        self.a * alpha.norm_sqr()
            + self.d * (alpha.conj() * beta)
            + self.c * (alpha * beta.conj())
            + self.b * beta.norm_sqr()
    }
}

/// Sums the branch classes k = 0..=N with their binomial weights.
pub fn aggregate_metrics(p: &ProtocolParams, conv: Convention) -> Result<ComplexMetrics> {
    aggregate_metrics_with(p, conv, AggregateOptions::default())
}

pub fn aggregate_metrics_with(
    p: &ProtocolParams,
    conv: Convention,
    opts: AggregateOptions,
) -> Result<ComplexMetrics> {
    aggregate_parts(p, conv, opts)?.into_metrics(conv)
}

/// The three aggregates, each with its own failure.
#[derive(Debug, Clone)]
pub struct AggregateParts {
    pub probability: Complex64,
    pub fidelity: Result<Complex64>,
    pub qfi: Result<Complex64>,
}

impl AggregateParts {
    pub fn into_metrics(self, conv: Convention) -> Result<ComplexMetrics> {
        Ok(ComplexMetrics {
            probability: self.probability,
            fidelity: self.fidelity?,
            qfi: self.qfi?,
            engine: Engine::Structured,
            convention: conv,
        })
    }
}

pub fn aggregate_parts(
    p: &ProtocolParams,
    conv: Convention,
    opts: AggregateOptions,
) -> Result<AggregateParts> {
    validate_params(*p, opts.limits)?;
    let zero = QubitImages::protocol(p, Outcome::Zero, conv)?;
    let one = QubitImages::protocol(p, Outcome::One, conv)?;
    Ok(aggregate_classes(p, &zero, &one, opts.fidelity_norm))
}

fn aggregate_classes(
    p: &ProtocolParams,
    zero: &QubitImages,
    one: &QubitImages,
    norm: FidelityNorm,
) -> AggregateParts {
    let n = p.n_qubits;
    let (alpha, beta) = (p.alpha(), p.beta());
    let weights = class_weights(n);
    let weights: &[Scaled] = &weights;
    let classes = ClassScalars::all(n, zero, one, alpha, beta);

    let probs: Vec<Scaled> = classes.iter().zip(weights).map(|(c, &w)| w * c.p).collect();
    let total = compensated_sum(&probs);
    let probability = total.to_c64();

    let fidelity = (|| {
        if probability.norm() < DEGENERATE_PROBABILITY {
            return Err(QffcrError::Degenerate {
                what: "total probability",
                magnitude: probability.norm(),
                threshold: DEGENERATE_PROBABILITY,
            });
        }
        let numerators: Vec<Scaled> = match norm {
            FidelityNorm::Aggregate => classes
                .iter()
                .zip(weights)
                .map(|(c, &w)| w * c.fidelity_numerator(alpha, beta))
                .collect(),
            FidelityNorm::BranchZero => {
                let p0 = classes[0].p;
                if p0.is_zero() {
                    return Err(QffcrError::Degenerate {
                        what: "k = 0 class probability",
                        magnitude: 0.0,
                        threshold: DEGENERATE_PROBABILITY,
                    });
                }
                classes
                    .iter()
                    .zip(weights)
                    .map(|(c, &w)| w * c.p * c.fidelity_numerator(alpha, beta) / p0)
                    .collect()
            }
        };
        Ok((compensated_sum(&numerators) / total).to_c64())
    })();

    let qfi = classes
        .iter()
        .zip(weights)
        .map(|(c, &w)| c.qfi_weight(n).map(|q| w * q))
        .collect::<Result<Vec<_>>>()
        .map(|terms| compensated_sum(&terms).to_c64());

    AggregateParts {
        probability,
        fidelity,
        qfi,
    }
}

pub fn aggregate_row(p: &ProtocolParams, conv: Convention) -> Result<MetricsRow> {
    MetricsRow::realize(p, aggregate_metrics(p, conv)?)
}

/// Unprotected baseline: the input passes through the damping channel only.
pub fn do_nothing_structured(p: &ProtocolParams, limits: ParamLimits) -> Result<MetricsRow> {
    validate_params(*p, limits.with_extended_theta(true))?;
    let images = QubitImages::damping_only(p.r)?;
    // Every record is the same; the unweighted class-0 scalars are the state.
    let single = ClassScalars::new(p.n_qubits, 0, &images, &images, p.alpha(), p.beta());
    let fidelity = single.fidelity_numerator(p.alpha(), p.beta()).to_c64();
    let qfi = single.qfi_weight(p.n_qubits)?.to_c64();
    MetricsRow::realize(
        p,
        ComplexMetrics {
            probability: single.p.to_c64(),
            fidelity,
            qfi,
            engine: Engine::Structured,
            convention: Convention::Physical,
        },
    )
}
