use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use qffcr_core::closed_form::{self, FormulaVariant};
use qffcr_core::dense::{self, QfiMethod};
use qffcr_core::engine::{evaluate, EvalConfig};
use qffcr_core::optimizer::{maximize_metric, GridSpec, Objective};
use qffcr_core::structured::{aggregate_metrics, aggregate_parts, AggregateOptions};
use qffcr_core::types::{Convention, Engine, ProtocolParams};

fn params(max_n: usize) -> impl Strategy<Value = ProtocolParams> {
    (1..=max_n, 0.05..PI - 0.05, 0.0..TAU, 0.0..=PI, 0.0..TAU, 0.0..=1.0f64).prop_map(
        |(n_qubits, gamma, phi0, theta, eta, r)| ProtocolParams { n_qubits, gamma, phi0, theta, eta, r },
    )
}

fn convention() -> impl Strategy<Value = Convention> {
    prop_oneof![Just(Convention::Physical), Just(Convention::Paper)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn dense_and_structured_aggregates_agree(p in params(4), conv in convention()) {
        let d = dense::run_protocol_average(&p, conv, QfiMethod::Corners).map(|a| a.metrics);
        let s = aggregate_metrics(&p, conv);
        match (d, s) {
            (Ok(d), Ok(s)) => {
                prop_assert!((d.probability - s.probability).norm() < 1e-9);
                prop_assert!((d.fidelity - s.fidelity).norm() < 1e-9 * (1.0 + d.fidelity.norm()));
                prop_assert!((d.qfi - s.qfi).norm() < 1e-9 * (1.0 + d.qfi.norm()));
            }
            (Err(a), Err(b)) => prop_assert!(a.is_point_infeasible() && b.is_point_infeasible()),
            (d, s) => prop_assert!(false, "dense {:?} structured {:?}", d.err(), s.err()),
        }
    }

    #[test]
    fn physical_probability_and_qfi_are_rotation_free(p in params(12), eta in 0.0..TAU) {
        let a = aggregate_metrics(&p, Convention::Physical).unwrap();
        let b = aggregate_metrics(&p.with_controls(p.theta, eta), Convention::Physical).unwrap();
        prop_assert!((a.probability - b.probability).norm() < 1e-12);
        prop_assert!((a.qfi - b.qfi).norm() < 1e-10 * (1.0 + a.qfi.norm()));
    }

    #[test]
    fn physical_metrics_stay_in_range(p in params(40)) {
        let m = aggregate_metrics(&p, Convention::Physical).unwrap();
        let n2 = (p.n_qubits * p.n_qubits) as f64;
        prop_assert!((m.probability - 1.0).norm() < 1e-12);
        prop_assert!(m.fidelity.im.abs() < 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&m.fidelity.re));
        prop_assert!(m.qfi.im.abs() < 1e-9 && m.qfi.re >= -1e-12 && m.qfi.re <= n2 * (1.0 + 1e-12));
    }

    #[test]
    fn verbatim_probability_is_the_paper_trace(p in params(30)) {
        let v = closed_form::prob_total(&p, FormulaVariant::Verbatim).unwrap();
        let t = aggregate_parts(&p, Convention::Paper, AggregateOptions::default()).unwrap();
        prop_assert!((v - t.probability).norm() < 1e-9);
    }

    #[test]
    fn appendix_matches_structured_at_zero_rotation(p in params(30)) {
        let p = p.with_controls(p.theta, 0.0);
        let a = closed_form::evaluate(&p, FormulaVariant::AppendixAggregated);
        let s = aggregate_metrics(&p, Convention::Paper);
        if let (Ok(a), Ok(s)) = (a, s) {
            prop_assert!((a.fidelity - s.fidelity).norm() < 1e-9);
            prop_assert!((a.qfi - s.qfi).norm() < 1e-9 * (1.0 + s.qfi.norm()));
        }
    }
}

fn small_grid() -> GridSpec {
    GridSpec::default().with_steps(15, 15).with_refinement(2, 0.2)
}

#[test]
fn optimum_reproduces_on_dense_oracle() {
    for conv in Convention::ALL {
        for objective in [Objective::Qfi, Objective::Fidelity, Objective::Probability] {
            for r in [0.1, 0.45, 0.8] {
                let base = ProtocolParams::ghz(3, 0.0, 0.0, 0.0).with_gamma(1.1);
                let cfg = EvalConfig::structured(conv);
                let Ok(opt) = maximize_metric(objective, r, &base, &small_grid(), &cfg) else { continue };
                assert_eq!(opt.value, objective.pick(&opt.companion));
                let p = ProtocolParams { theta: opt.theta_star, eta: opt.eta_star, r, ..base };
                let dense = evaluate(&p, &EvalConfig::new(Engine::Dense, conv)).unwrap();
                assert!((objective.pick(&dense) - opt.value).abs() < 1e-8, "{conv} {objective} r={r}");
            }
        }
    }
}

#[test]
fn refinement_never_loses_ground() {
    let base = ProtocolParams::ghz(10, 0.0, 0.0, 0.0);
    for r in [0.05, 0.3, 0.6] {
        let opt = maximize_metric(Objective::Qfi, r, &base, &small_grid(), &EvalConfig::default()).unwrap();
        assert!(opt.trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", opt.trace);
    }
}

#[test]
fn physical_optimum_ignores_rotation_axis() {
    let base = ProtocolParams::ghz(6, 0.0, 0.0, 0.0);
    let cfg = EvalConfig::structured(Convention::Physical);
    for objective in [Objective::Qfi, Objective::Fidelity] {
        for r in [0.2, 0.7] {
            let full = maximize_metric(objective, r, &base, &small_grid(), &cfg).unwrap();
            let at_zero = ProtocolParams { theta: full.theta_star, eta: 0.0, r, ..base };
            let fixed = evaluate(&at_zero, &cfg).unwrap();
            assert!((full.value - objective.pick(&fixed)).abs() < 1e-10, "{objective} r={r}");
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let base = ProtocolParams::ghz(8, 0.0, 0.0, 0.0);
    let run = || maximize_metric(Objective::Qfi, 0.35, &base, &small_grid(), &EvalConfig::default()).unwrap();
    let reference = run();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let again = pool.install(run);
        assert_eq!(again, reference);
    }
}
