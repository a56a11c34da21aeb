//! Tabular data behind each published plot.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::EvalConfig;
use crate::error::Result;
use crate::optimizer::{pareto_scan, r_grid, sweep_r, GridSpec, Objective, SweepMode, SweepRow};
use crate::types::ProtocolParams;

/// Comparison-scheme curves are left out of every figure that shows them.
pub const OMITTED_COMPARISON_NOTE: &str =
    "MWMPPF comparison curves omitted: that reference scheme is not modelled here";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FigureId {
    #[serde(rename = "2a")]
    F2a,
    #[serde(rename = "2b")]
    F2b,
    #[serde(rename = "2c")]
    F2c,
    #[serde(rename = "3a")]
    F3a,
    #[serde(rename = "3b")]
    F3b,
    #[serde(rename = "4a")]
    F4a,
    #[serde(rename = "4b")]
    F4b,
    #[serde(rename = "5")]
    F5,
    #[serde(rename = "6a")]
    F6a,
    #[serde(rename = "6b")]
    F6b,
}

impl FigureId {
    pub const ALL: [FigureId; 10] = [
        FigureId::F2a,
        FigureId::F2b,
        FigureId::F2c,
        FigureId::F3a,
        FigureId::F3b,
        FigureId::F4a,
        FigureId::F4b,
        FigureId::F5,
        FigureId::F6a,
        FigureId::F6b,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::F2a => "2a",
            FigureId::F2b => "2b",
            FigureId::F2c => "2c",
            FigureId::F3a => "3a",
            FigureId::F3b => "3b",
            FigureId::F4a => "4a",
            FigureId::F4b => "4b",
            FigureId::F5 => "5",
            FigureId::F6a => "6a",
            FigureId::F6b => "6b",
        }
    }

    /// Search grid used when none is given.
    pub fn default_grid(self) -> GridSpec {
        match self {
            FigureId::F4a | FigureId::F4b | FigureId::F6b => GridSpec::unit_probability(),
            FigureId::F5 => GridSpec::pareto(),
            _ => GridSpec::default(),
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FigureId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown figure `{s}` (2a 2b 2c 3a 3b 4a 4b 5 6a 6b)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    pub n_qubits: usize,
    pub gamma: f64,
    pub r_values: Vec<f64>,
    /// Decay rate of the scatter figure.
    pub scatter_r: f64,
    /// Input-state angles of the generalized-state figures.
    pub gammas: Vec<f64>,
    /// Overrides the figure's default search grid.
    pub grid: Option<GridSpec>,
    pub eval: EvalConfig,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            n_qubits: 10,
            gamma: PI / 2.0,
            r_values: r_grid(0.0, 1.0, 0.05).expect("static grid"),
            scatter_r: 0.5,
            gammas: vec![PI / 6.0, PI / 3.0, PI / 2.0, 2.0 * PI / 3.0, 5.0 * PI / 6.0],
            grid: None,
            eval: EvalConfig::default(),
        }
    }
}

/// A rectangular table with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub id: FigureId,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub notes: Vec<String>,
}

impl FigureData {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|row| row[i]).collect())
    }
}

fn base(opts: &FigureOptions, gamma: f64) -> ProtocolParams {
    ProtocolParams::ghz(opts.n_qubits, 0.0, 0.0, 0.0).with_gamma(gamma)
}

fn sweep(opts: &FigureOptions, id: FigureId, mode: SweepMode, gamma: f64) -> Result<Vec<SweepRow>> {
    let grid = opts.grid.unwrap_or_else(|| id.default_grid());
    sweep_r(mode, &opts.r_values, &base(opts, gamma), &grid, &opts.eval)
}

fn table(id: FigureId, columns: &[&str], rows: Vec<Vec<f64>>, notes: Vec<String>) -> FigureData {
    FigureData {
        id,
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows,
        notes,
    }
}

fn gamma_label(prefix: &str, gamma: f64) -> String {
    format!("{prefix}_gamma_{:.6}", gamma)
}

pub fn figure_data(id: FigureId, opts: &FigureOptions) -> Result<FigureData> {
    let omitted = vec![OMITTED_COMPARISON_NOTE.to_string()];
    let qfi = SweepMode::Maximize(Objective::Qfi);
    let fid = SweepMode::Maximize(Objective::Fidelity);
    Ok(match id {
        FigureId::F2a => {
            let rows = sweep(opts, id, qfi, opts.gamma)?
                .iter()
                .map(|s| vec![s.opt.r, s.opt.value, s.do_nothing.qfi])
                .collect();
            table(id, &["r", "qfi_mqffcr", "qfi_dn"], rows, omitted)
        }
        FigureId::F2b => {
            let rows = sweep(opts, id, qfi, opts.gamma)?
                .iter()
                .map(|s| vec![s.opt.r, s.opt.theta_star, s.opt.eta_star])
                .collect();
            table(id, &["r", "theta_opt", "eta_opt"], rows, omitted)
        }
        FigureId::F2c => {
            let rows = sweep(opts, id, qfi, opts.gamma)?
                .iter()
                .map(|s| vec![s.opt.r, s.opt.companion.fidelity, s.opt.companion.probability])
                .collect();
            table(id, &["r", "fidelity", "probability"], rows, omitted)
        }
        FigureId::F3a => {
            let rows = sweep(opts, id, fid, opts.gamma)?
                .iter()
                .map(|s| {
                    vec![
                        s.opt.r,
                        s.opt.value,
                        s.opt.companion.probability,
                        s.do_nothing.fidelity,
                    ]
                })
                .collect();
            table(id, &["r", "fidelity_mqffcr", "probability", "fidelity_dn"], rows, omitted)
        }
        FigureId::F3b => {
            let rows = sweep(opts, id, fid, opts.gamma)?
                .iter()
                .map(|s| vec![s.opt.r, s.opt.theta_star, s.opt.eta_star])
                .collect();
            table(id, &["r", "theta_opt", "eta_opt"], rows, omitted)
        }
        FigureId::F4a => {
            let rows = sweep(opts, id, SweepMode::UnitProbability, opts.gamma)?
                .iter()
                .map(|s| vec![s.opt.r, s.opt.companion.probability, s.opt.value])
                .collect();
            table(id, &["r", "probability", "fidelity"], rows, vec![])
        }
        FigureId::F4b => {
            let rows = sweep(opts, id, SweepMode::UnitProbability, opts.gamma)?
                .iter()
                .map(|s| vec![s.opt.r, s.opt.theta_star, s.opt.eta_star])
                .collect();
            table(id, &["r", "theta_opt", "eta_opt"], rows, vec![])
        }
        FigureId::F5 => {
            let grid = opts.grid.unwrap_or_else(|| id.default_grid());
            let scan = pareto_scan(opts.scatter_r, &base(opts, opts.gamma), &grid, &opts.eval)?;
            let rows = scan
                .points
                .iter()
                .map(|p| vec![p.theta, p.eta, p.fidelity, p.probability, scan.do_nothing_fidelity])
                .collect();
            let notes = vec![
                format!("r={}", scan.r),
                format!("skipped_points={}", scan.skipped),
            ];
            table(id, &["theta", "eta", "fidelity", "probability", "fidelity_dn"], rows, notes)
        }
        FigureId::F6a | FigureId::F6b => {
            let (mode, prefix) = if id == FigureId::F6a {
                (qfi, "qfi")
            } else {
                (SweepMode::UnitProbability, "fidelity")
            };
            let mut columns = vec!["r".to_string()];
            let mut rows: Vec<Vec<f64>> = opts.r_values.iter().map(|&r| vec![r]).collect();
            for &g in &opts.gammas {
                columns.push(gamma_label(prefix, g));
                for (row, s) in rows.iter_mut().zip(sweep(opts, id, mode, g)?) {
                    row.push(s.opt.value);
                }
            }
            FigureData {
                id,
                columns,
                rows,
                notes: vec![],
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> FigureOptions {
        FigureOptions {
            n_qubits: 4,
            r_values: vec![0.0, 0.5],
            grid: Some(GridSpec::default().with_steps(9, 9).with_refinement(1, 0.2)),
            gammas: vec![PI / 3.0, PI / 2.0],
            ..FigureOptions::default()
        }
    }

    #[test]
    fn ids_round_trip() {
        for id in FigureId::ALL {
            assert_eq!(id.as_str().parse::<FigureId>().unwrap(), id);
        }
        assert!("7".parse::<FigureId>().is_err());
    }

    #[test]
    fn qfi_figure_shape() {
        let fig = figure_data(FigureId::F2a, &quick()).unwrap();
        assert_eq!(fig.columns, ["r", "qfi_mqffcr", "qfi_dn"]);
        assert_eq!(fig.rows.len(), 2);
        assert!((fig.rows[0][1] - 16.0).abs() < 1e-9);
        assert!(fig.notes[0].contains("omitted"));
    }

    #[test]
    fn unit_probability_figure() {
        let mut o = quick();
        o.grid = Some(GridSpec::unit_probability().with_steps(13, 2));
        let fig = figure_data(FigureId::F4a, &o).unwrap();
        for p in fig.column("probability").unwrap() {
            assert!((p - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn generalized_state_columns() {
        let fig = figure_data(FigureId::F6a, &quick()).unwrap();
        assert_eq!(fig.columns.len(), 3);
        assert!(fig.columns[1].starts_with("qfi_gamma_1.047"));
        assert!(fig.rows.iter().all(|r| r.len() == 3));
    }

    #[test]
    fn scatter_has_reference_line() {
        let mut o = quick();
        o.grid = Some(GridSpec::pareto().with_steps(5, 5));
        let fig = figure_data(FigureId::F5, &o).unwrap();
        let dn = fig.column("fidelity_dn").unwrap();
        assert!(dn.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(fig.notes[0], "r=0.5");
    }
}
