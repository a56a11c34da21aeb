//! Subcommand bodies: resolve configuration, run the core, build a table.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use qffcr_core::engine::{do_nothing, evaluate, EvalConfig};
use qffcr_core::error::QffcrError;
use qffcr_core::figures::{figure_data, FigureId, FigureOptions};
use qffcr_core::optimizer::{
    maximize_fidelity_at_unit_probability, maximize_metric, pareto_scan, r_grid, sweep_r, AxisRange,
    GridSpec, Objective, OptResult, SweepMode,
};
use qffcr_core::structured::FidelityNorm;
use qffcr_core::types::{Convention, Engine, MetricsRow, ProtocolParams, RealMap};

use crate::config::{ConfigError, ConfigResult, RunConfig};
use crate::output::{Format, Table};

pub type Layer = BTreeMap<String, String>;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(QffcrError),
    Io(std::io::Error),
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ValidationFailed(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                QffcrError::Domain { .. }
                | QffcrError::Dimension { .. }
                | QffcrError::DimensionMismatch { .. }
                | QffcrError::Grid(_)
                | QffcrError::Unsupported(_) => 2,
                _ => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::ValidationFailed(n) => write!(f, "validation failed: {n} check(s)"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<QffcrError> for CliError {
    fn from(e: QffcrError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub const COMMON_KEYS: &[&str] = &[
    "convention",
    "engine",
    "fidelity-norm",
    "format",
    "gamma",
    "mapping",
    "max-qubits",
    "n",
    "phi0",
];

pub const GRID_KEYS: &[&str] = &[
    "eta-hi",
    "eta-lo",
    "eta-steps",
    "refine-iters",
    "refine-shrink",
    "theta-hi",
    "theta-lo",
    "theta-steps",
];

const SWEEP_KEYS: &[&str] = &["r-from", "r-step", "r-to"];

/// Accepts plain numbers and multiples of pi such as `pi/2`, `2pi/3`, `-pi`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    if let Ok(x) = t.parse::<f64>() {
        return Ok(x);
    }
    let bad = || format!("`{s}` is neither a number nor a multiple of pi");
    let pos = t.find("pi").ok_or_else(bad)?;
    let coef = t[..pos].trim().trim_end_matches('*').trim();
    let coef = match coef {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.parse::<f64>().map_err(|_| bad())?,
    };
    let rest = t[pos + 2..].trim();
    let div = if rest.is_empty() {
        1.0
    } else {
        rest.strip_prefix('/')
            .ok_or_else(bad)?
            .trim()
            .parse::<f64>()
            .map_err(|_| bad())?
    };
    Ok(coef * PI / div)
}

fn angle(cfg: &RunConfig, key: &str) -> ConfigResult<f64> {
    let raw = cfg.raw(key)?;
    parse_angle(raw).map_err(|e| ConfigError(format!("invalid value for `{key}`: {e}")))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn layer(pairs: &[(&str, String)]) -> Layer {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn common_defaults() -> Layer {
    let d = EvalConfig::default();
    layer(&[
        ("convention", d.convention.as_str().into()),
        ("engine", d.engine.as_str().into()),
        ("fidelity-norm", d.fidelity_norm.as_str().into()),
        ("format", "csv".into()),
        ("gamma", num(PI / 2.0)),
        ("mapping", d.real_map.as_str().into()),
        ("max-qubits", d.max_qubits.to_string()),
        ("n", "10".into()),
        ("phi0", "0".into()),
    ])
}

fn grid_defaults(g: &GridSpec) -> Layer {
    layer(&[
        ("eta-hi", num(g.eta.hi)),
        ("eta-lo", num(g.eta.lo)),
        ("eta-steps", g.eta.steps.to_string()),
        ("refine-iters", g.refine_iters.to_string()),
        ("refine-shrink", num(g.refine_shrink)),
        ("theta-hi", num(g.theta.hi)),
        ("theta-lo", num(g.theta.lo)),
        ("theta-steps", g.theta.steps.to_string()),
    ])
}

fn sweep_defaults() -> Layer {
    layer(&[
        ("r-from", "0".into()),
        ("r-step", "0.05".into()),
        ("r-to", "1".into()),
    ])
}

/// Looks a key up in flags then file, before defaults exist.
fn early<'a>(key: &str, file: &'a Layer, flags: &'a Layer) -> Option<&'a str> {
    flags.get(key).or_else(|| file.get(key)).map(String::as_str)
}

fn resolve(keys: &[&[&str]], defaults: Layer, file: &Layer, flags: &Layer) -> ConfigResult<RunConfig> {
    let allowed: Vec<&str> = keys.iter().flat_map(|k| k.iter().copied()).collect();
    RunConfig::resolve(&allowed, &defaults, file, flags)
}

pub fn eval_config(cfg: &RunConfig) -> ConfigResult<EvalConfig> {
    Ok(EvalConfig {
        engine: cfg.get::<Engine>("engine")?,
        convention: cfg.get::<Convention>("convention")?,
        real_map: cfg.get::<RealMap>("mapping")?,
        fidelity_norm: cfg.get::<FidelityNorm>("fidelity-norm")?,
        max_qubits: cfg.get("max-qubits")?,
    })
}

pub fn output_format(cfg: &RunConfig) -> ConfigResult<Format> {
    cfg.get("format")
}

fn base_params(cfg: &RunConfig) -> ConfigResult<ProtocolParams> {
    Ok(ProtocolParams {
        n_qubits: cfg.get("n")?,
        gamma: angle(cfg, "gamma")?,
        phi0: angle(cfg, "phi0")?,
        theta: 0.0,
        eta: 0.0,
        r: 0.0,
    })
}

fn grid_spec(cfg: &RunConfig) -> ConfigResult<GridSpec> {
    Ok(GridSpec {
        theta: AxisRange::new(angle(cfg, "theta-lo")?, angle(cfg, "theta-hi")?, cfg.get("theta-steps")?),
        eta: AxisRange::new(angle(cfg, "eta-lo")?, angle(cfg, "eta-hi")?, cfg.get("eta-steps")?),
        refine_iters: cfg.get("refine-iters")?,
        refine_shrink: cfg.get("refine-shrink")?,
    })
}

fn r_values(cfg: &RunConfig) -> CliResult<Vec<f64>> {
    Ok(r_grid(cfg.get("r-from")?, cfg.get("r-to")?, cfg.get("r-step")?)?)
}

/// Resolved configuration plus the table it produced.
pub struct Outcome {
    pub config: RunConfig,
    pub table: Table,
}

pub fn metrics(file: &Layer, flags: &Layer) -> CliResult<Outcome> {
    let mut defaults = common_defaults();
    defaults.extend(layer(&[("eta", "0".into()), ("r", "0".into()), ("theta", num(PI / 2.0))]));
    let cfg = resolve(&[COMMON_KEYS, &["eta", "r", "theta"]], defaults, file, flags)?;
    let eval = eval_config(&cfg)?;
    let p = ProtocolParams {
        theta: angle(&cfg, "theta")?,
        eta: angle(&cfg, "eta")?,
        r: cfg.get("r")?,
        ..base_params(&cfg)?
    };
    let row = evaluate(&p, &eval)?;
    let mut table = Table::new(&[
        "engine",
        "convention",
        "r",
        "theta",
        "eta",
        "probability",
        "fidelity",
        "qfi",
        "imag_residual",
    ]);
    table.push(vec![
        row.engine.as_str().into(),
        row.convention.as_str().into(),
        row.r.into(),
        row.theta.into(),
        row.eta.into(),
        row.probability.into(),
        row.fidelity.into(),
        row.qfi.into(),
        row.imag_residual.into(),
    ]);
    Ok(Outcome { config: cfg, table })
}

const OPT_COLUMNS: &[&str] = &[
    "r",
    "objective",
    "theta_star",
    "eta_star",
    "value",
    "probability",
    "fidelity",
    "qfi",
    "imag_residual",
    "on_boundary",
    "skipped",
    "dn_probability",
    "dn_fidelity",
    "dn_qfi",
    "engine",
    "convention",
];

fn opt_row(table: &mut Table, o: &OptResult, dn: &MetricsRow, constrained: bool) {
    let objective = if constrained {
        "fidelity@p=1".to_string()
    } else {
        o.objective.as_str().to_string()
    };
    table.push(vec![
        o.r.into(),
        objective.into(),
        o.theta_star.into(),
        o.eta_star.into(),
        o.value.into(),
        o.companion.probability.into(),
        o.companion.fidelity.into(),
        o.companion.qfi.into(),
        o.companion.imag_residual.into(),
        o.on_boundary.into(),
        o.skipped.into(),
        dn.probability.into(),
        dn.fidelity.into(),
        dn.qfi.into(),
        o.engine.as_str().into(),
        o.convention.as_str().into(),
    ]);
}

/// `none` or `unit-probability`; the latter fixes the objective to fidelity.
fn sweep_mode(cfg: &RunConfig) -> CliResult<SweepMode> {
    let objective: Objective = cfg.get("objective")?;
    match cfg.raw("constraint")? {
        "none" => Ok(SweepMode::Maximize(objective)),
        "unit-probability" if objective == Objective::Fidelity => Ok(SweepMode::UnitProbability),
        "unit-probability" => Err(QffcrError::Unsupported(format!(
            "the unit-probability constraint maximizes fidelity, not {objective}"
        ))
        .into()),
        other => Err(ConfigError(format!("unknown constraint `{other}` (none|unit-probability)")).into()),
    }
}

fn opt_defaults(file: &Layer, flags: &Layer) -> Layer {
    let mut d = common_defaults();
    d.extend(layer(&[("constraint", "none".into()), ("objective", "qfi".into())]));
    let grid = match early("constraint", file, flags) {
        Some("unit-probability") => GridSpec::unit_probability(),
        _ => GridSpec::default(),
    };
    d.extend(grid_defaults(&grid));
    d
}

pub fn optimize(file: &Layer, flags: &Layer) -> CliResult<Outcome> {
    let mut defaults = opt_defaults(file, flags);
    defaults.insert("r".into(), "0".into());
    let cfg = resolve(&[COMMON_KEYS, GRID_KEYS, &["constraint", "objective", "r"]], defaults, file, flags)?;
    let eval = eval_config(&cfg)?;
    let base = base_params(&cfg)?;
    let grid = grid_spec(&cfg)?;
    let r: f64 = cfg.get("r")?;
    let mode = sweep_mode(&cfg)?;
    let opt = match mode {
        SweepMode::Maximize(obj) => maximize_metric(obj, r, &base, &grid, &eval)?,
        SweepMode::UnitProbability => maximize_fidelity_at_unit_probability(r, &base, &grid, &eval)?,
    };
    let dn = do_nothing(&base.with_r(r), &eval)?;
    let mut table = Table::new(OPT_COLUMNS);
    let trace: Vec<String> = opt.trace.iter().map(|v| format!("{v:.16e}")).collect();
    table.notes.push(format!("refinement_trace={}", trace.join(";")));
    opt_row(&mut table, &opt, &dn, mode == SweepMode::UnitProbability);
    Ok(Outcome { config: cfg, table })
}

pub fn sweep(file: &Layer, flags: &Layer) -> CliResult<Outcome> {
    let mut defaults = opt_defaults(file, flags);
    defaults.extend(sweep_defaults());
    let cfg = resolve(&[COMMON_KEYS, GRID_KEYS, SWEEP_KEYS, &["constraint", "objective"]], defaults, file, flags)?;
    let eval = eval_config(&cfg)?;
    let base = base_params(&cfg)?;
    let grid = grid_spec(&cfg)?;
    let mode = sweep_mode(&cfg)?;
    let rows = sweep_r(mode, &r_values(&cfg)?, &base, &grid, &eval)?;
    let mut table = Table::new(OPT_COLUMNS);
    for s in &rows {
        opt_row(&mut table, &s.opt, &s.do_nothing, mode == SweepMode::UnitProbability);
    }
    Ok(Outcome { config: cfg, table })
}

pub fn pareto(file: &Layer, flags: &Layer) -> CliResult<Outcome> {
    let mut defaults = common_defaults();
    defaults.extend(grid_defaults(&GridSpec::pareto()));
    defaults.insert("r".into(), "0.5".into());
    let cfg = resolve(&[COMMON_KEYS, GRID_KEYS, &["r"]], defaults, file, flags)?;
    let eval = eval_config(&cfg)?;
    let scan = pareto_scan(cfg.get("r")?, &base_params(&cfg)?, &grid_spec(&cfg)?, &eval)?;
    let mut table = Table::new(&["engine", "convention", "r", "theta", "eta", "fidelity", "probability", "fidelity_dn"]);
    table.notes.push(format!("skipped_points={}", scan.skipped));
    for p in &scan.points {
        table.push(vec![
            eval.engine.as_str().into(),
            eval.convention.as_str().into(),
            scan.r.into(),
            p.theta.into(),
            p.eta.into(),
            p.fidelity.into(),
            p.probability.into(),
            scan.do_nothing_fidelity.into(),
        ]);
    }
    Ok(Outcome { config: cfg, table })
}

pub fn figure(file: &Layer, flags: &Layer) -> CliResult<Outcome> {
    let id: FigureId = early("id", file, flags)
        .ok_or_else(|| ConfigError("figure requires an id".into()))?
        .parse()
        .map_err(ConfigError)?;
    let opts = FigureOptions::default();
    let mut defaults = common_defaults();
    defaults.extend(grid_defaults(&id.default_grid()));
    defaults.extend(sweep_defaults());
    let gammas: Vec<String> = opts.gammas.iter().map(|&g| num(g)).collect();
    defaults.extend(layer(&[("gammas", gammas.join(",")), ("r", num(opts.scatter_r))]));
    let cfg = resolve(&[COMMON_KEYS, GRID_KEYS, SWEEP_KEYS, &["gammas", "id", "r"]], defaults, file, flags)?;
    let base = base_params(&cfg)?;
    let opts = FigureOptions {
        n_qubits: base.n_qubits,
        gamma: base.gamma,
        r_values: r_values(&cfg)?,
        scatter_r: cfg.get("r")?,
        gammas: cfg
            .raw("gammas")?
            .split(',')
            .map(|g| parse_angle(g).map_err(ConfigError))
            .collect::<ConfigResult<_>>()?,
        grid: Some(grid_spec(&cfg)?),
        eval: eval_config(&cfg)?,
    };
    if base.phi0 != 0.0 {
        return Err(QffcrError::Unsupported("figures use a real input state (phi0 = 0)".into()).into());
    }
    let data = figure_data(id, &opts)?;
    let columns: Vec<&str> = data.columns.iter().map(String::as_str).collect();
    let mut table = Table::new(&columns);
    table.notes = data.notes;
    for row in data.rows {
        table.push(row.into_iter().map(Into::into).collect());
    }
    Ok(Outcome { config: cfg, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("0.25").unwrap(), 0.25);
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert_eq!(parse_angle("pi/2").unwrap(), PI / 2.0);
        assert_eq!(parse_angle("2pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_angle("2*pi/3").unwrap(), 2.0 * PI / 3.0);
        assert_eq!(parse_angle("-pi/4").unwrap(), -PI / 4.0);
        assert!(parse_angle("tau").is_err());
        assert!(parse_angle("pi*2").is_err());
    }

    #[test]
    fn exit_codes_by_error_class() {
        let dim = CliError::Core(QffcrError::Dimension { engine: "dense", n: 9, max: 6 });
        assert_eq!(dim.exit_code(), 2);
        let deg = CliError::Core(QffcrError::Degenerate { what: "p", magnitude: 0.0, threshold: 1e-14 });
        assert_eq!(deg.exit_code(), 3);
        assert_eq!(CliError::ValidationFailed(1).exit_code(), 1);
    }

    #[test]
    fn unit_probability_needs_fidelity_objective() {
        let flags = layer(&[
            ("constraint", "unit-probability".into()),
            ("objective", "qfi".into()),
            ("n", "3".into()),
        ]);
        let err = optimize(&Layer::new(), &flags).err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }
}
