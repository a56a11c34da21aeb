//! Deterministic grid-and-shrink maximization over the control angles.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::eta_opt_probability;
use crate::engine::{do_nothing, evaluate, EvalConfig};
use crate::error::{QffcrError, Result};
use crate::types::{Convention, Engine, MetricsRow, ProtocolParams};

/// Probability tolerance of the unit-probability constraint.
pub const UNIT_PROBABILITY_TOL: f64 = 1e-9;

const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Qfi,
    Fidelity,
    Probability,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Qfi => "qfi",
            Objective::Fidelity => "fidelity",
            Objective::Probability => "probability",
        }
    }

    pub fn pick(self, row: &MetricsRow) -> f64 {
        match self {
            Objective::Qfi => row.qfi,
            Objective::Fidelity => row.fidelity,
            Objective::Probability => row.probability,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "qfi" => Ok(Objective::Qfi),
            "fidelity" => Ok(Objective::Fidelity),
            "probability" => Ok(Objective::Probability),
            other => Err(format!("unknown objective `{other}` (qfi|fidelity|probability)")),
        }
    }
}

/// Closed interval sampled at `steps` evenly spaced points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl AxisRange {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Self {
        Self { lo, hi, steps }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.steps < 2 {
            return Err(QffcrError::Grid(format!("{name} needs at least 2 steps")));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(QffcrError::Grid(format!(
                "{name} range [{}, {}] is empty or not finite",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.point(i)).collect()
    }

    fn span(&self) -> f64 {
        self.hi - self.lo
    }

    /// Window of `width` centred on `center`, shifted to stay inside `bounds`.
    fn window(center: f64, width: f64, bounds: &AxisRange, steps: usize) -> AxisRange {
        let width = width.min(bounds.span());
        let lo = (center - width / 2.0).clamp(bounds.lo, bounds.hi - width);
        AxisRange::new(lo, (lo + width).min(bounds.hi), steps)
    }
}

/// Search grid over (θ, η) and its refinement schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta: AxisRange,
    pub eta: AxisRange,
    pub refine_iters: usize,
    pub refine_shrink: f64,
}

impl Default for GridSpec {
    /// θ ∈ [0, π/2], η ∈ [0, π], 181 × 181 points, three refinements at 0.2.
    fn default() -> Self {
        Self {
            theta: AxisRange::new(0.0, PI / 2.0, 181),
            eta: AxisRange::new(0.0, PI, 181),
            refine_iters: 3,
            refine_shrink: 0.2,
        }
    }
}

impl GridSpec {
    /// θ ∈ [0, π] for the unit-probability sweeps (η is fixed there).
    pub fn unit_probability() -> Self {
        Self {
            theta: AxisRange::new(0.0, PI, 181),
            ..Self::default()
        }
    }

    /// θ, η ∈ [0, π] for the fidelity/probability scatter.
    pub fn pareto() -> Self {
        Self {
            theta: AxisRange::new(0.0, PI, 181),
            eta: AxisRange::new(0.0, PI, 181),
            refine_iters: 0,
            refine_shrink: 0.2,
        }
    }

    pub fn with_steps(mut self, theta_steps: usize, eta_steps: usize) -> Self {
        self.theta.steps = theta_steps;
        self.eta.steps = eta_steps;
        self
    }

    pub fn with_refinement(mut self, iters: usize, shrink: f64) -> Self {
        self.refine_iters = iters;
        self.refine_shrink = shrink;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate("theta")?;
        self.eta.validate("eta")?;
        if !(self.refine_shrink > 0.0 && self.refine_shrink < 1.0) {
            return Err(QffcrError::Grid(format!(
                "refine_shrink {} must lie in (0, 1)",
                self.refine_shrink
            )));
        }
        Ok(())
    }

    /// Points evaluated by a two-axis search.
    pub fn evaluation_count(&self) -> usize {
        self.theta.steps * self.eta.steps * (1 + self.refine_iters)
    }
}

/// Best grid point for one decay rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub r: f64,
    pub objective: Objective,
    pub theta_star: f64,
    pub eta_star: f64,
    pub value: f64,
    /// All metrics at the optimum.
    pub companion: MetricsRow,
    pub engine: Engine,
    pub convention: Convention,
    /// Optimum sits on the edge of the original search range.
    pub on_boundary: bool,
    /// Incumbent value after the coarse grid and after each refinement.
    pub trace: Vec<f64>,
    /// Grid points skipped as degenerate or unphysical.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    row: MetricsRow,
}

impl Candidate {
    /// Larger value wins; ties go to smaller θ, then smaller η.
    fn beats(&self, other: &Candidate) -> bool {
        match self.value.partial_cmp(&other.value) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => (self.row.theta, self.row.eta) < (other.row.theta, other.row.eta),
        }
    }
}

fn point_params(base: &ProtocolParams, r: f64, theta: f64, eta: f64) -> ProtocolParams {
    ProtocolParams {
        r,
        theta,
        eta,
        ..*base
    }
}

/// Evaluates all points in parallel and folds them in index order.
fn best_of<F>(points: &[(f64, f64)], score: F) -> Result<(Option<Candidate>, usize)>
where
    F: Fn(f64, f64) -> Result<Option<Candidate>> + Sync,
{
    let results: Vec<Result<Option<Candidate>>> =
        points.par_iter().map(|&(t, e)| score(t, e)).collect();
    let mut best: Option<Candidate> = None;
    let mut skipped = 0;
    for res in results {
        match res {
            Ok(Some(c)) => {
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
            Ok(None) => skipped += 1,
            Err(e) if e.is_point_infeasible() => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((best, skipped))
}

fn grid_points(theta: &AxisRange, eta: Option<&AxisRange>) -> Vec<(f64, f64)> {
    let ts = theta.points();
    match eta {
        Some(eta) => {
            let es = eta.points();
            ts.iter().flat_map(|&t| es.iter().map(move |&e| (t, e))).collect()
        }
        None => ts.into_iter().map(|t| (t, f64::NAN)).collect(),
    }
}

struct Search<'a, F> {
    grid: &'a GridSpec,
    sweep_eta: bool,
    score: F,
}

impl<F> Search<'_, F>
where
    F: Fn(f64, f64) -> Result<Option<Candidate>> + Sync,
{
    fn run(&self) -> Result<(Candidate, Vec<f64>, usize)> {
        let g = self.grid;
        let eta = self.sweep_eta.then_some(&g.eta);
        let (best, mut skipped) = best_of(&grid_points(&g.theta, eta), &self.score)?;
        let mut best = best.ok_or_else(|| {
            QffcrError::ConstraintInfeasible("every grid point was infeasible".into())
        })?;
        let mut trace = vec![best.value];
        let (mut tw, mut ew) = (g.theta.span(), g.eta.span());
        for _ in 0..g.refine_iters {
            tw *= g.refine_shrink;
            ew *= g.refine_shrink;
            let t_axis = AxisRange::window(best.row.theta, tw, &g.theta, g.theta.steps);
            let e_axis = AxisRange::window(best.row.eta, ew, &g.eta, g.eta.steps);
            let eta = self.sweep_eta.then_some(&e_axis);
            let (cand, s) = best_of(&grid_points(&t_axis, eta), &self.score)?;
            skipped += s;
            if let Some(c) = cand {
                if c.beats(&best) {
                    best = c;
                }
            }
            trace.push(best.value);
        }
        Ok((best, trace, skipped))
    }
}

fn on_boundary(row: &MetricsRow, grid: &GridSpec, sweep_eta: bool) -> bool {
    let edge = |x: f64, a: &AxisRange| (x - a.lo).abs() < BOUNDARY_TOL || (x - a.hi).abs() < BOUNDARY_TOL;
    edge(row.theta, &grid.theta) || (sweep_eta && edge(row.eta, &grid.eta))
}

fn check_r(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(QffcrError::Domain {
            field: "r",
            value: r,
            range: "[0, 1]".into(),
        })
    }
}

/// Maximizes `objective` over θ and η at decay rate `r`.
pub fn maximize_metric(
    objective: Objective,
    r: f64,
    base: &ProtocolParams,
    grid: &GridSpec,
    cfg: &EvalConfig,
) -> Result<OptResult> {
    grid.validate()?;
    check_r(r)?;
    let search = Search {
        grid,
        sweep_eta: true,
        score: |t, e| {
            let row = evaluate(&point_params(base, r, t, e), cfg)?;
            Ok(Some(Candidate {
                value: objective.pick(&row),
                row,
            }))
        },
    };
    let (best, trace, skipped) = search.run()?;
    Ok(OptResult {
        r,
        objective,
        theta_star: best.row.theta,
        eta_star: best.row.eta,
        value: best.value,
        companion: best.row,
        engine: cfg.engine,
        convention: cfg.convention,
        on_boundary: on_boundary(&best.row, grid, true),
        trace,
        skipped,
    })
}

/// Maximizes fidelity over θ with η pinned to the probability-optimal
/// rotation, keeping only points with |P − 1| below the tolerance.
pub fn maximize_fidelity_at_unit_probability(
    r: f64,
    base: &ProtocolParams,
    grid: &GridSpec,
    cfg: &EvalConfig,
) -> Result<OptResult> {
    grid.validate()?;
    check_r(r)?;
    let search = Search {
        grid,
        sweep_eta: false,
        score: |t, _| {
            let eta = eta_opt_probability(r, t)?;
            let row = evaluate(&point_params(base, r, t, eta), cfg)?;
            if (row.probability - 1.0).abs() >= UNIT_PROBABILITY_TOL {
                return Ok(None);
            }
            Ok(Some(Candidate {
                value: row.fidelity,
                row,
            }))
        },
    };
    let (best, trace, skipped) = search.run().map_err(|e| match e {
        QffcrError::ConstraintInfeasible(_) => QffcrError::ConstraintInfeasible(format!(
            "no θ on the grid reaches unit probability at r = {r}"
        )),
        other => other,
    })?;
    Ok(OptResult {
        r,
        objective: Objective::Fidelity,
        theta_star: best.row.theta,
        eta_star: best.row.eta,
        value: best.value,
        companion: best.row,
        engine: cfg.engine,
        convention: cfg.convention,
        on_boundary: on_boundary(&best.row, grid, false),
        trace,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub theta: f64,
    pub eta: f64,
    pub fidelity: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoScan {
    pub r: f64,
    pub points: Vec<ParetoPoint>,
    /// Fidelity of the unprotected state at the same r.
    pub do_nothing_fidelity: f64,
    pub skipped: usize,
}

/// Every (fidelity, probability) pair on the coarse grid.
pub fn pareto_scan(
    r: f64,
    base: &ProtocolParams,
    grid: &GridSpec,
    cfg: &EvalConfig,
) -> Result<ParetoScan> {
    grid.validate()?;
    check_r(r)?;
    let pts = grid_points(&grid.theta, Some(&grid.eta));
    let rows: Vec<Result<MetricsRow>> = pts
        .par_iter()
        .map(|&(t, e)| evaluate(&point_params(base, r, t, e), cfg))
        .collect();
    let mut points = Vec::with_capacity(rows.len());
    let mut skipped = 0;
    for row in rows {
        match row {
            Ok(row) => points.push(ParetoPoint {
                theta: row.theta,
                eta: row.eta,
                fidelity: row.fidelity,
                probability: row.probability,
            }),
            Err(e) if e.is_point_infeasible() => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let dn = do_nothing(&point_params(base, r, 0.0, 0.0), cfg)?;
    Ok(ParetoScan {
        r,
        points,
        do_nothing_fidelity: dn.fidelity,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Maximize(Objective),
    UnitProbability,
}

/// One decay rate of a sweep with the unprotected baseline alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub opt: OptResult,
    pub do_nothing: MetricsRow,
}

/// Runs the optimizer at every r of a strictly increasing grid in [0, 1].
pub fn sweep_r(
    mode: SweepMode,
    r_grid: &[f64],
    base: &ProtocolParams,
    grid: &GridSpec,
    cfg: &EvalConfig,
) -> Result<Vec<SweepRow>> {
    if r_grid.is_empty() {
        return Err(QffcrError::Grid("r grid is empty".into()));
    }
    if r_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(QffcrError::Grid("r grid must be strictly increasing".into()));
    }
    r_grid
        .iter()
        .map(|&r| {
            let opt = match mode {
                SweepMode::Maximize(obj) => maximize_metric(obj, r, base, grid, cfg)?,
                SweepMode::UnitProbability => maximize_fidelity_at_unit_probability(r, base, grid, cfg)?,
            };
            let do_nothing = do_nothing(&point_params(base, r, 0.0, 0.0), cfg)?;
            Ok(SweepRow { opt, do_nothing })
        })
        .collect()
}

/// `lo, lo + step, …` up to `hi` inclusive, snapped to avoid drift.
pub fn r_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && lo <= hi && lo >= 0.0 && hi <= 1.0) {
        return Err(QffcrError::Grid(format!(
            "r grid {lo}:{step}:{hi} must satisfy 0 ≤ lo ≤ hi ≤ 1 and step > 0"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count)
        .map(|i| {
            let x = lo + step * i as f64;
            // Strip representation noise such as 0.30000000000000004.
            ((x * 1e12).round() / 1e12).min(hi)
        })
        .collect())
}
