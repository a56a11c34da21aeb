//! Self-checks across engines, formulas and primitive identities.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::closed_form::{self, documented_qfi_gap, eta_opt_probability, FormulaVariant};
use crate::dense::{self, run_protocol_branch, BranchPattern, QfiMethod};
use crate::error::{QffcrError, Result};
use crate::primitives::{adc_basis_action, adc_kraus, apply_adc, rotation_op, weak_meas_op, Op2, Outcome};
use crate::structured::{
    self, aggregate_metrics, branch_elements, branch_elements_for_pattern, branch_qfi, state_export,
    AggregateOptions,
};
use crate::types::{binomial_row, ComplexMetrics, Convention, ParamLimits, ProtocolParams};

/// Random parameter tuples per register size in the cross-engine checks.
pub const TUPLES_PER_N: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest observed deviation.
    pub worst: f64,
    pub tolerance: f64,
    /// Offending parameters when the check fails.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    /// One line per check plus a summary; byte-identical for equal seeds.
    pub fn render(&self) -> String {
        let mut out = format!("# validate seed={}\n", self.seed);
        for c in &self.checks {
            let _ = write!(
                out,
                "{} {:<52} worst={:.3e} tol={:.1e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.worst,
                c.tolerance
            );
            if !c.passed && !c.detail.is_empty() {
                let _ = write!(out, "  [{}]", c.detail);
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "# {} checks, {} passed, {} failed",
            self.checks.len(),
            self.checks.len() - self.failures(),
            self.failures()
        );
        out
    }
}

/// Tracks the worst deviation and the parameters that produced it.
struct Worst {
    tol: f64,
    worst: f64,
    detail: String,
}

impl Worst {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            worst: 0.0,
            detail: String::new(),
        }
    }

    fn see(&mut self, dev: f64, ctx: impl FnOnce() -> String) {
        let dev = if dev.is_nan() { f64::INFINITY } else { dev };
        if dev > self.worst {
            self.worst = dev;
            if dev > self.tol {
                self.detail = ctx();
            }
        }
    }

    fn fail(&mut self, ctx: String) {
        self.worst = f64::INFINITY;
        self.detail = ctx;
    }

    fn finish(self, name: impl Into<String>) -> CheckResult {
        CheckResult {
            name: name.into(),
            passed: self.worst <= self.tol,
            worst: self.worst,
            tolerance: self.tol,
            detail: self.detail,
        }
    }
}

fn fmt_params(p: &ProtocolParams) -> String {
    format!(
        "n={} gamma={:.6} phi0={:.6} theta={:.6} eta={:.6} r={:.6}",
        p.n_qubits, p.gamma, p.phi0, p.theta, p.eta, p.r
    )
}

/// Pseudo-random valid parameter tuple with θ anywhere in [0, π].
pub fn random_params(rng: &mut ChaCha8Rng, n: usize) -> ProtocolParams {
    ProtocolParams {
        n_qubits: n,
        gamma: rng.gen_range(0.05..PI - 0.05),
        phi0: rng.gen_range(0.0..TAU),
        theta: rng.gen_range(0.0..PI),
        eta: rng.gen_range(0.0..TAU),
        r: rng.gen_range(0.0..1.0),
    }
}

fn metrics_gap(a: &ComplexMetrics, b: &ComplexMetrics) -> f64 {
    let rel = |x: Complex64, y: Complex64| (x - y).norm() / (1.0 + x.norm().max(y.norm()));
    rel(a.probability, b.probability)
        .max(rel(a.fidelity, b.fidelity))
        .max(rel(a.qfi, b.qfi))
}

fn grid(lo: f64, hi: f64, steps: usize) -> impl Iterator<Item = f64> + Clone {
    (0..steps).map(move |i| {
        if i + 1 == steps {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (steps - 1) as f64
        }
    })
}

fn check_primitives(seed: u64, out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meas = Worst::new(1e-14);
    let mut kraus = Worst::new(1e-14);
    let mut unit = Worst::new(1e-14);
    let mut table = Worst::new(1e-14);
    for _ in 0..200 {
        let theta = rng.gen_range(0.0..=PI);
        let r = rng.gen_range(0.0..=1.0);
        let eta = rng.gen_range(0.0..TAU);
        let m0 = weak_meas_op(Outcome::Zero, theta).expect("θ in range");
        let m1 = weak_meas_op(Outcome::One, theta).expect("θ in range");
        meas.see((m0.adjoint() * m0 + m1.adjoint() * m1).max_diff(&Op2::IDENTITY), || {
            format!("theta={theta}")
        });
        let (e0, e1) = adc_kraus(r).expect("r in range");
        kraus.see((e0.adjoint() * e0 + e1.adjoint() * e1).max_diff(&Op2::IDENTITY), || {
            format!("r={r}")
        });
        for o in [Outcome::Zero, Outcome::One] {
            let t = rotation_op(o, eta);
            unit.see((t * t.adjoint()).max_diff(&Op2::IDENTITY), || format!("eta={eta}"));
        }
        let action = adc_basis_action(r).expect("r in range");
        for (i, j) in [(0, 0), (1, 1), (1, 0), (0, 1)] {
            let dev = action.image(i, j).max_diff(&apply_adc(&Op2::basis(i, j), &(e0, e1)));
            table.see(dev, || format!("r={r} basis=({i},{j})"));
        }
    }
    out.push(meas.finish("measurement completeness"));
    out.push(kraus.finish("damping Kraus completeness"));
    out.push(unit.finish("rotation unitarity"));
    out.push(table.finish("damping action table matches Kraus map"));

    let mut binom = Worst::new(0.0);
    for n in 1..=64usize {
        let sum: num_bigint::BigUint = binomial_row(n).iter().sum();
        let want = num_bigint::BigUint::from(1u8) << n;
        if sum != want {
            binom.fail(format!("n={n}"));
        }
    }
    out.push(binom.finish("binomial rows sum to 2^N"));
}

fn check_cross_engine(seed: u64, out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut tuples: Vec<ProtocolParams> = Vec::new();
    for n in 1..=4 {
        for _ in 0..TUPLES_PER_N {
            tuples.push(random_params(&mut rng, n));
        }
    }
    for conv in Convention::ALL {
        for n in 1..=4 {
            let mut w = Worst::new(1e-10);
            for p in tuples.iter().filter(|p| p.n_qubits == n) {
                for v in 0..1u64 << n {
                    let pattern = BranchPattern::from_value(n, v);
                    let res = run_protocol_branch(p, &pattern, conv).and_then(|d| {
                        let e = branch_elements_for_pattern(p, &pattern, conv)?;
                        Ok(state_export(&e)?.max_diff(&d.unnormalized))
                    });
                    match res {
                        Ok(dev) => w.see(dev, || format!("{} pattern={pattern}", fmt_params(p))),
                        Err(e) => w.fail(format!("{} pattern={pattern}: {e}", fmt_params(p))),
                    }
                }
            }
            out.push(w.finish(format!("dense vs structured states N={n} {conv}")));
        }
        let mut agg = Worst::new(1e-9);
        for p in &tuples {
            let d = dense::run_protocol_average(p, conv, QfiMethod::Corners).map(|a| a.metrics);
            let s = aggregate_metrics(p, conv);
            match (d, s) {
                (Ok(d), Ok(s)) => agg.see(metrics_gap(&d, &s), || fmt_params(p)),
                (Err(a), Err(b)) if a.is_point_infeasible() && b.is_point_infeasible() => {}
                (d, s) => agg.fail(format!("{}: dense {:?} structured {:?}", fmt_params(p), d.err(), s.err())),
            }
        }
        out.push(agg.finish(format!("dense vs structured aggregates {conv}")));
    }
}

fn check_closed_form(out: &mut Vec<CheckResult>) {
    let mut prob = Worst::new(1e-9);
    let mut fid = Worst::new(1e-9);
    for n in [1, 2, 5, 8, 12] {
        for theta in grid(0.0, PI, 10) {
            for eta in grid(0.0, TAU * 0.999, 10) {
                for r in grid(0.0, 1.0, 5) {
                    let p = ProtocolParams::ghz(n, theta, eta, r).with_gamma(1.2);
                    let verbatim = closed_form::prob_total(&p, FormulaVariant::Verbatim);
                    let trace = structured::aggregate_parts(&p, Convention::Paper, AggregateOptions::default());
                    match (verbatim, trace) {
                        (Ok(v), Ok(t)) => prob.see((v - t.probability).norm(), || fmt_params(&p)),
                        (v, t) => prob.fail(format!("{}: {:?} {:?}", fmt_params(&p), v.err(), t.err())),
                    }
                    // Away from η = 0 the total probability can be small, so the
                    // numerators (fidelity × probability) are compared instead.
                    let with_prob = |v| -> Result<Complex64> {
                        let f = closed_form::fid_total(&p, v)?;
                        Ok(if eta == 0.0 { f } else { f * closed_form::prob_total(&p, v)? })
                    };
                    let fv = with_prob(FormulaVariant::Verbatim);
                    let fa = with_prob(FormulaVariant::AppendixAggregated);
                    match (fv, fa) {
                        (Ok(a), Ok(b)) => fid.see((a - b).norm() / (1.0 + b.norm()), || fmt_params(&p)),
                        (Err(a), Err(b)) if a.is_point_infeasible() && b.is_point_infeasible() => {}
                        (a, b) => fid.fail(format!("{}: {:?} {:?}", fmt_params(&p), a.err(), b.err())),
                    }
                }
            }
        }
    }
    out.push(prob.finish("closed-form probability vs structured trace"));
    out.push(fid.finish("closed-form fidelity verbatim vs appendix"));

    let p = ProtocolParams::ghz(10, PI / 2.0, 0.0, 0.0);
    let mut gap = Worst::new(1e-9);
    match closed_form::qfi_total(&p, FormulaVariant::Verbatim) {
        Ok(q) => gap.see((q - Complex64::new(100.0 + documented_qfi_gap(10), 0.0)).norm(), || {
            format!("verbatim QFI {q}")
        }),
        Err(e) => gap.fail(e.to_string()),
    }
    out.push(gap.finish("verbatim QFI reproduces the documented gap"));
    let mut appx = Worst::new(1e-9);
    match closed_form::qfi_total(&p, FormulaVariant::AppendixAggregated) {
        Ok(q) => appx.see((q - Complex64::new(100.0, 0.0)).norm(), || format!("appendix QFI {q}")),
        Err(e) => appx.fail(e.to_string()),
    }
    out.push(appx.finish("appendix-aggregated QFI at the identity point"));

    let mut classes = Worst::new(1e-12);
    for n in [1, 3, 6, 10] {
        for theta in grid(0.1, PI, 4) {
            for eta in grid(0.0, 3.0, 4) {
                let p = ProtocolParams::ghz(n, theta, eta, 0.37).with_gamma(0.9);
                let row = binomial_row(n);
                let sum: Result<Complex64> = (0..=n)
                    .map(|k| closed_form::class_probability(&p, k).map(|v| v * row[k].to_f64().unwrap_or(f64::NAN)))
                    .sum();
                match (sum, closed_form::prob_total(&p, FormulaVariant::Verbatim)) {
                    (Ok(s), Ok(t)) => classes.see((s - t).norm(), || fmt_params(&p)),
                    (s, t) => classes.fail(format!("{}: {:?} {:?}", fmt_params(&p), s.err(), t.err())),
                }
            }
        }
    }
    out.push(classes.finish("class probabilities sum to the total"));
}

fn check_qfi_formula(seed: u64, out: &mut Vec<CheckResult>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0f1);
    let mut w = Worst::new(1e-4);
    let mut done = 0;
    while done < 30 {
        let n = 1 + done % 3;
        let mut p = random_params(&mut rng, n);
        // Keep the corner populations clear of the finite-difference rank cutoff.
        p.r = rng.gen_range(0.0..0.9);
        p.theta = rng.gen_range(0.2..PI - 0.2);
        let k = rng.gen_range(0..=n);
        let pattern = BranchPattern::canonical(n, k);
        let res = (|| -> Result<(f64, f64)> {
            let e = branch_elements(&p, k, Convention::Physical)?;
            let corner = branch_qfi(&e, n)?.re;
            let sld = dense::branch_qfi_sld(&p, &pattern, Convention::Physical)?;
            Ok((corner, sld))
        })();
        match res {
            Ok((corner, sld)) => {
                w.see((corner - sld).abs() / corner.abs().max(1e-12), || {
                    format!("{} k={k} corner={corner} sld={sld}", fmt_params(&p))
                });
                done += 1;
            }
            Err(e) if e.is_point_infeasible() => {}
            Err(e) => {
                w.fail(format!("{} k={k}: {e}", fmt_params(&p)));
                done += 1;
            }
        }
    }
    out.push(w.finish("corner QFI formula vs SLD eigen-sum"));
}

fn check_identities(out: &mut Vec<CheckResult>) {
    let mut eta0 = Worst::new(1e-12);
    let mut unit = Worst::new(1e-12);
    for r in grid(0.0, 1.0, 100) {
        for theta in grid(0.0, PI, 100) {
            match eta_opt_probability(r, theta) {
                Ok(v) => eta0.see(v.abs(), || format!("r={r} theta={theta}")),
                Err(e) => eta0.fail(format!("r={r} theta={theta}: {e}")),
            }
            let p = ProtocolParams::ghz(10, theta, 0.0, r);
            match structured::aggregate_parts(&p, Convention::Paper, AggregateOptions::default()) {
                Ok(m) => unit.see((m.probability - 1.0).norm(), || fmt_params(&p)),
                Err(e) => unit.fail(format!("{}: {e}", fmt_params(&p))),
            }
        }
    }
    out.push(eta0.finish("probability-optimal rotation is zero"));
    out.push(unit.finish("unit probability without rotation"));

    let mut ident = Worst::new(1e-9);
    for n in [1, 2, 4, 10, 40] {
        let p = ProtocolParams::ghz(n, PI / 2.0, 0.0, 0.0);
        let want = (n * n) as f64;
        match aggregate_metrics(&p, Convention::Paper) {
            Ok(m) => ident.see(
                (m.probability - 1.0).norm()
                    .max((m.fidelity - 1.0).norm())
                    .max((m.qfi - want).norm() / want),
                || fmt_params(&p),
            ),
            Err(e) => ident.fail(format!("{}: {e}", fmt_params(&p))),
        }
        if n <= 4 {
            match dense::run_protocol_average(&p, Convention::Physical, QfiMethod::Sld) {
                Ok(d) => ident.see((d.metrics.qfi - want).norm() / want, || format!("sld {}", fmt_params(&p))),
                Err(e) => ident.fail(format!("{}: {e}", fmt_params(&p))),
            }
        }
    }
    out.push(ident.finish("identity channel preserves state and QFI"));

    let mut dead = Worst::new(0.0);
    for n in [1, 3, 10] {
        for conv in Convention::ALL {
            let p = ProtocolParams::ghz(n, 1.1, 0.7, 1.0).with_gamma(2.0);
            match aggregate_metrics(&p, conv) {
                Ok(m) => dead.see(m.qfi.norm(), || fmt_params(&p)),
                Err(e) => dead.fail(format!("{}: {e}", fmt_params(&p))),
            }
        }
    }
    out.push(dead.finish("full damping erases QFI"));

    let mut coh = Worst::new(1e-12);
    let mut herm = Worst::new(1e-14);
    let mut etainv = Worst::new(1e-12);
    let mut conv_eq = Worst::new(1e-12);
    for &(n, theta, eta, r) in &[(3, 0.4, 1.3, 0.2), (6, 1.2, 2.9, 0.55), (9, 2.7, 5.0, 0.8)] {
        let p = ProtocolParams::ghz(n, theta, eta, r).with_gamma(1.3);
        let elems: Result<Vec<_>> = (0..=n).map(|k| branch_elements(&p, k, Convention::Paper)).collect();
        match elems {
            Ok(es) => {
                let c0 = es[0].c.norm();
                for e in &es {
                    coh.see((e.c.norm() - c0).abs(), || format!("{} k={}", fmt_params(&p), e.k));
                }
            }
            Err(e) => coh.fail(format!("{}: {e}", fmt_params(&p))),
        }
        for k in 0..=n {
            match branch_elements(&p, k, Convention::Physical) {
                Ok(e) => herm.see(
                    (e.d - e.c.conj()).norm().max(e.a.im.abs()).max(e.b.im.abs()).max(e.p.im.abs()),
                    || format!("{} k={k}", fmt_params(&p)),
                ),
                Err(e) => herm.fail(format!("{} k={k}: {e}", fmt_params(&p))),
            }
        }
        let still = ProtocolParams { eta: 0.0, ..p };
        match (aggregate_metrics(&p, Convention::Physical), aggregate_metrics(&still, Convention::Physical)) {
            (Ok(a), Ok(b)) => etainv.see(
                (a.probability - b.probability).norm().max((a.qfi - b.qfi).norm() / (1.0 + b.qfi.norm())),
                || fmt_params(&p),
            ),
            (a, b) => etainv.fail(format!("{}: {:?} {:?}", fmt_params(&p), a.err(), b.err())),
        }
        match (aggregate_metrics(&still, Convention::Physical), aggregate_metrics(&still, Convention::Paper)) {
            (Ok(a), Ok(b)) => conv_eq.see(metrics_gap(&a, &b), || fmt_params(&still)),
            (a, b) => conv_eq.fail(format!("{}: {:?} {:?}", fmt_params(&still), a.err(), b.err())),
        }
    }
    out.push(coh.finish("coherence magnitude independent of class"));
    out.push(herm.finish("physical branch states are Hermitian"));
    out.push(etainv.finish("physical metrics ignore the rotation angle"));
    out.push(conv_eq.finish("conventions coincide without rotation"));

    let mut psd = Worst::new(1e-12);
    let mut perm = Worst::new(1e-14);
    let p = ProtocolParams::ghz(3, 0.9, 2.2, 0.45).with_gamma(1.9);
    for v in 0..8u64 {
        let pattern = BranchPattern::from_value(3, v);
        match run_protocol_branch(&p, &pattern, Convention::Physical) {
            Ok(run) => {
                let min = run.unnormalized.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
                psd.see((-min).max(0.0), || format!("{} pattern={pattern}", fmt_params(&p)));
                let canon = branch_elements(&p, pattern.zeros(), Convention::Physical);
                let here = branch_elements_for_pattern(&p, &pattern, Convention::Physical);
                match (canon, here) {
                    (Ok(a), Ok(b)) => perm.see(
                        (a.a - b.a).norm().max((a.b - b.b).norm()).max((a.c - b.c).norm()).max((a.p - b.p).norm()),
                        || format!("{} pattern={pattern}", fmt_params(&p)),
                    ),
                    (a, b) => perm.fail(format!("{:?} {:?}", a.err(), b.err())),
                }
            }
            Err(e) => psd.fail(format!("{} pattern={pattern}: {e}", fmt_params(&p))),
        }
    }
    out.push(psd.finish("physical branch states are positive semidefinite"));
    out.push(perm.finish("records within a class share corner elements"));

    let mut dn = Worst::new(1e-12);
    for r in [0.0, 0.3, 0.8] {
        let p = ProtocolParams::ghz(4, 0.0, 0.0, r).with_gamma(1.0);
        match (
            dense::do_nothing_dense(&p),
            structured::do_nothing_structured(&p, ParamLimits::structured()),
        ) {
            (Ok(a), Ok(b)) => dn.see(
                (a.fidelity - b.fidelity).abs().max((a.qfi - b.qfi).abs()).max((a.probability - b.probability).abs()),
                || fmt_params(&p),
            ),
            (a, b) => dn.fail(format!("{}: {:?} {:?}", fmt_params(&p), a.err(), b.err())),
        }
    }
    out.push(dn.finish("unprotected baseline dense vs structured"));

    let mut big = Worst::new(1e-10);
    let p = ProtocolParams::ghz(1000, 0.8, 0.0, 0.5);
    let opts = AggregateOptions::default().with_max_qubits(1000);
    match structured::aggregate_metrics_with(&p, Convention::Paper, opts) {
        Ok(m) if m.fidelity.re.is_finite() && m.qfi.re.is_finite() => {
            big.see((m.probability - 1.0).norm(), || fmt_params(&p))
        }
        Ok(m) => big.fail(format!("non-finite metrics {m:?}")),
        Err(e) => big.fail(e.to_string()),
    }
    out.push(big.finish("thousand-qubit aggregate is finite with unit probability"));
}

/// Runs every check; the report is a pure function of `seed`.
pub fn run_validation(seed: u64) -> ValidationReport {
    let mut checks = Vec::new();
    check_primitives(seed, &mut checks);
    check_cross_engine(seed, &mut checks);
    check_closed_form(&mut checks);
    check_qfi_formula(seed, &mut checks);
    check_identities(&mut checks);
    ValidationReport { seed, checks }
}

/// Error carrying the rendered report of a failed run.
pub fn into_result(report: &ValidationReport) -> Result<()> {
    if report.all_passed() {
        Ok(())
    } else {
        Err(QffcrError::Identity(format!("{} validation checks failed", report.failures())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_reproducible() {
        let a = run_validation(7);
        assert!(a.all_passed(), "{}", a.render());
        assert!(a.checks.len() >= 28, "{}", a.checks.len());
        assert_eq!(a.render(), run_validation(7).render());
    }
}
