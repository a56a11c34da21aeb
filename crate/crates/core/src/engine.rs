//! One entry point for every evaluator.

use crate::closed_form::{self, FormulaVariant};
use crate::dense::{self, QfiMethod};
use crate::error::{QffcrError, Result};
use crate::structured::{self, AggregateOptions, FidelityNorm};
use crate::types::{
    ComplexMetrics, Convention, Engine, MetricsRow, ParamLimits, ProtocolParams, RealMap,
};

/// Evaluator selection plus the knobs that change reported numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub engine: Engine,
    pub convention: Convention,
    pub real_map: RealMap,
    pub fidelity_norm: FidelityNorm,
    /// Qubit cap for the structured engine.
    pub max_qubits: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Structured,
            convention: Convention::Paper,
            real_map: RealMap::RealPart,
            fidelity_norm: FidelityNorm::Aggregate,
            max_qubits: ParamLimits::STRUCTURED_MAX_QUBITS,
        }
    }
}

impl EvalConfig {
    pub fn new(engine: Engine, convention: Convention) -> Self {
        Self {
            engine,
            convention,
            ..Self::default()
        }
    }

    pub fn structured(convention: Convention) -> Self {
        Self::new(Engine::Structured, convention)
    }

    fn structured_opts(&self) -> AggregateOptions {
        AggregateOptions {
            fidelity_norm: self.fidelity_norm,
            ..AggregateOptions::default()
        }
        .with_max_qubits(self.max_qubits)
    }
}

/// Complex aggregates at one point.
pub fn evaluate_complex(p: &ProtocolParams, cfg: &EvalConfig) -> Result<ComplexMetrics> {
    match cfg.engine {
        Engine::Dense => {
            if cfg.fidelity_norm != FidelityNorm::Aggregate {
                return Err(QffcrError::Unsupported(
                    "the dense engine only normalizes fidelity by the total probability".into(),
                ));
            }
            Ok(dense::run_protocol_average(p, cfg.convention, QfiMethod::Corners)?.metrics)
        }
        Engine::Structured => structured::aggregate_metrics_with(p, cfg.convention, cfg.structured_opts()),
        Engine::ClosedFormAppendix | Engine::ClosedFormVerbatim => {
            if cfg.convention != Convention::Paper {
                return Err(QffcrError::Unsupported(format!(
                    "{} evaluates the printed formulas and has no {} variant",
                    cfg.engine, cfg.convention
                )));
            }
            if cfg.fidelity_norm != FidelityNorm::Aggregate {
                return Err(QffcrError::Unsupported(
                    "closed-form engines only normalize fidelity by the total probability".into(),
                ));
            }
            let variant = if cfg.engine == Engine::ClosedFormVerbatim {
                FormulaVariant::Verbatim
            } else {
                FormulaVariant::AppendixAggregated
            };
            closed_form::evaluate(p, variant)
        }
    }
}

/// Realized metrics at one point.
pub fn evaluate(p: &ProtocolParams, cfg: &EvalConfig) -> Result<MetricsRow> {
    MetricsRow::realize_with(p, evaluate_complex(p, cfg)?, cfg.real_map)
}

/// Unprotected baseline with the same input state and damping.
pub fn do_nothing(p: &ProtocolParams, cfg: &EvalConfig) -> Result<MetricsRow> {
    if cfg.engine == Engine::Dense {
        dense::do_nothing_dense(p)
    } else {
        structured::do_nothing_structured(
            p,
            ParamLimits::structured().with_max_qubits(cfg.max_qubits),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn engines_agree_at_identity() {
        let p = ProtocolParams::ghz(4, PI / 2.0, 0.0, 0.0);
        for engine in [
            Engine::Dense,
            Engine::Structured,
            Engine::ClosedFormAppendix,
            Engine::ClosedFormVerbatim,
        ] {
            let row = evaluate(&p, &EvalConfig::new(engine, Convention::Paper)).unwrap();
            assert_eq!(row.engine, engine);
            assert!((row.probability - 1.0).abs() < 1e-12);
            assert!((row.fidelity - 1.0).abs() < 1e-12);
            let want = if engine == Engine::ClosedFormVerbatim { 16.0 * (1.0 + 0.125) } else { 16.0 };
            assert!((row.qfi - want).abs() < 1e-9, "{engine}: {}", row.qfi);
        }
    }

    #[test]
    fn closed_form_has_no_physical_variant() {
        let p = ProtocolParams::ghz(4, 1.0, 0.0, 0.2);
        let cfg = EvalConfig::new(Engine::ClosedFormVerbatim, Convention::Physical);
        assert!(matches!(evaluate(&p, &cfg), Err(QffcrError::Unsupported(_))));
    }

    #[test]
    fn dense_limit_is_enforced() {
        let p = ProtocolParams::ghz(12, 1.0, 0.0, 0.2);
        let cfg = EvalConfig::new(Engine::Dense, Convention::Physical);
        assert!(matches!(evaluate(&p, &cfg), Err(QffcrError::Dimension { .. })));
    }

    #[test]
    fn modulus_mapping() {
        let p = ProtocolParams::ghz(3, 0.0, 0.5, 0.3);
        let mut cfg = EvalConfig::structured(Convention::Paper);
        let re = evaluate(&p, &cfg).unwrap();
        cfg.real_map = RealMap::Modulus;
        let abs = evaluate(&p, &cfg).unwrap();
        assert!((abs.probability - 1.0).abs() < 1e-12);
        assert!((re.probability - 1.5f64.cos()).abs() < 1e-12);
        assert_eq!(re.imag_residual, abs.imag_residual);
    }
}
