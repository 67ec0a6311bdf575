//! `solve`, `simulate` and `check`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use olc_core::dynamics::{
    algebraic_residual, energy_balance_residual, kkt_residuals, rhs, EQUILIBRIUM_TOL,
};
use olc_core::olc::{self, FlowSet, OlcSolution, BALANCE_RTOL};
use olc_core::{simulate, Analysis, ControllerMode, EquilibriumReference, Trajectory};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{bus_ids, write_csv, SolveDocument};
use crate::scenario::Scenario;

/// Limit tolerance for continuous control.
pub const LIMIT_TOL: f64 = 1e-6;
/// Limit tolerance under sampled control.
pub const SAMPLED_LIMIT_TOL: f64 = 1e-4;
pub const LYAPUNOV_STEP_SLACK: f64 = 1e-8;
pub const LYAPUNOV_FINAL_TOL: f64 = 1e-10;
pub const TAIL_TOL: f64 = 1e-8;

pub fn cmd_solve(scenario: &Scenario) -> Result<SolveDocument, CliError> {
    let solution = olc::solve(&scenario.network)?;
    Ok(SolveDocument::new(&scenario.name, &scenario.network, &solution))
}

/// Solution, Lyapunov reference and trajectory of one scenario.
#[derive(Debug, Clone)]
pub struct Run {
    pub solution: OlcSolution,
    /// Centered on the member of the equilibrium flow set that the
    /// dynamics reach from the initial flows.
    pub reference: EquilibriumReference,
    pub trajectory: Trajectory,
}

pub fn run(scenario: &Scenario) -> Result<Run, CliError> {
    let net = &scenario.network;
    let solution = olc::solve(net)?;
    let target = solution.flows.member_reached_from(net, &scenario.initial.flows);
    let reference = EquilibriumReference::with_flows(net, solution.nu_star, target)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let analysis = Analysis {
        reference: Some(reference.clone()),
        kkt: scenario.file.analysis.kkt,
    };
    let trajectory = simulate(net, &scenario.initial, &scenario.config, &analysis)
        .map_err(|e| CliError::from_dynamics(&scenario.name, e))?;
    Ok(Run {
        solution,
        reference,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub t: f64,
    pub bus_ids: Vec<usize>,
    pub omega: Vec<f64>,
    pub d: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub flows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSummary {
    pub max_increase: Option<f64>,
    pub final_value: Option<f64>,
    /// `None` under sampled control, where monotonicity is not asserted.
    pub monotone: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub case: String,
    pub controller: String,
    pub steps: usize,
    pub samples: usize,
    pub nu_star: f64,
    pub objective: f64,
    #[serde(rename = "final")]
    pub final_state: FinalState,
    pub omega_error: f64,
    pub flow_set_residual: f64,
    pub flow_limit_error: f64,
    pub flow_projection_error: f64,
    pub cost_final: f64,
    pub cost_gap: f64,
    pub lyapunov: LyapunovSummary,
    pub max_algebraic_residual: f64,
    pub max_energy_residual: f64,
    pub tail_variation: f64,
    pub warnings: Vec<String>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn is_sampled(scenario: &Scenario) -> bool {
    matches!(scenario.config.controller, ControllerMode::Sampled { .. })
}

impl SimulationSummary {
    pub fn new(scenario: &Scenario, run: &Run) -> Self {
        let net = &scenario.network;
        let traj = &run.trajectory;
        let last = traj.final_state();
        let diag = &traj.diagnostics;
        let cost_final = *traj.cost_series(net).last().unwrap();
        let monotone = (!is_sampled(scenario))
            .then(|| diag.max_lyapunov_increase.is_none_or(|m| m <= LYAPUNOV_STEP_SLACK));
        let mut warnings = scenario.warnings.clone();
        warnings.extend(run.solution.warnings.iter().cloned());
        Self {
            case: scenario.name.clone(),
            controller: match scenario.config.controller {
                ControllerMode::Continuous => "continuous".into(),
                ControllerMode::Sampled { interval } => format!("sampled:{}", interval * 1000.0),
            },
            steps: diag.steps,
            samples: traj.states.len(),
            nu_star: run.solution.nu_star,
            objective: run.solution.objective,
            final_state: FinalState {
                t: last.t,
                bus_ids: bus_ids(net),
                omega: net.to_input_order(&last.omega),
                d: net.to_input_order(&last.d),
                d_hat: net.to_input_order(&last.d_hat),
                flows: last.flows.clone(),
            },
            omega_error: diag.omega_error.unwrap_or(f64::NAN),
            flow_set_residual: FlowSet::membership_residual(net, &last.flows, &run.solution.h_star),
            flow_limit_error: diag.flow_reference_error.unwrap_or(f64::NAN),
            flow_projection_error: max_abs_diff(&last.flows, &run.solution.flows.point),
            cost_final,
            cost_gap: (cost_final - run.solution.objective).abs(),
            lyapunov: LyapunovSummary {
                max_increase: diag.max_lyapunov_increase,
                final_value: diag.final_lyapunov,
                monotone,
            },
            max_algebraic_residual: diag.max_algebraic_residual,
            max_energy_residual: diag.max_energy_residual,
            tail_variation: diag.tail_variation,
            warnings,
        }
    }
}

/// Simulates and writes the trajectory CSV to `out`. The file is opened
/// before integrating so an unwritable path fails fast.
pub fn cmd_simulate(scenario: &Scenario, out: &Path) -> Result<(Run, SimulationSummary), CliError> {
    let write_err = |source| CliError::Write {
        path: out.to_path_buf(),
        source,
    };
    let file = File::create(out).map_err(write_err)?;
    let run = run(scenario)?;
    let analysis = &scenario.file.analysis;
    write_csv(
        BufWriter::new(file),
        &scenario.network,
        &run.trajectory,
        analysis.lyapunov,
        analysis.kkt,
    )
    .map_err(write_err)?;
    let summary = SimulationSummary::new(scenario, &run);
    Ok((run, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    fn from_bound(value: f64, tol: f64) -> Self {
        if value <= tol {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub case: String,
    pub setting: String,
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status == Status::Fail).count()
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
        let mut s = format!("{} ({})\n", self.case, self.setting);
        for r in &self.rows {
            s.push_str(&format!("  {:<4}  {:<width$}  {}\n", r.status.label(), r.name, r.detail));
        }
        s
    }
}

fn bounded(name: &'static str, value: f64, tol: f64) -> CheckRow {
    CheckRow {
        name,
        status: Status::from_bound(value, tol),
        detail: format!("{value:.3e} <= {tol:.0e}"),
    }
}

fn not_applicable(name: &'static str, why: &str) -> CheckRow {
    CheckRow {
        name,
        status: Status::NotApplicable,
        detail: why.to_string(),
    }
}

pub const CHECK_BALANCE: &str = "dual optimum balances injections";
pub const CHECK_KKT: &str = "equilibrium is a KKT point";
pub const CHECK_FREQUENCY: &str = "frequencies converge to nu*";
pub const CHECK_SYNC: &str = "frequencies synchronize";
pub const CHECK_LOADS: &str = "loads match primal optimum";
pub const CHECK_COST: &str = "cost converges to optimum";
pub const CHECK_FLOW_SET: &str = "mesh limit in Z*_P";
pub const CHECK_TREE: &str = "tree limit unique";
pub const CHECK_PROJECTION: &str = "matches projection";
pub const CHECK_CYCLE: &str = "limit follows cycle invariants";
pub const CHECK_LYAPUNOV: &str = "Lyapunov non-increasing";
pub const CHECK_LYAPUNOV_FINAL: &str = "Lyapunov vanishes";
pub const CHECK_ALGEBRAIC: &str = "load-bus balance holds";
pub const CHECK_ENERGY: &str = "energy identity holds";
pub const CHECK_TAIL: &str = "converges to a point";

pub fn cmd_check(scenario: &Scenario) -> Result<CheckReport, CliError> {
    let net = &scenario.network;
    let run = run(scenario)?;
    let sol = &run.solution;
    let traj = &run.trajectory;
    let diag = &traj.diagnostics;
    let last = traj.final_state();
    let sampled = is_sampled(scenario);
    let limit_tol = if sampled { SAMPLED_LIMIT_TOL } else { LIMIT_TOL };
    let mut rows = Vec::new();

    let total_pm: f64 = net.buses().iter().map(|b| b.disturbance).sum();
    let total: f64 = sol.d_star.iter().chain(&sol.d_hat_star).sum();
    rows.push(bounded(
        CHECK_BALANCE,
        (total - total_pm).abs() / total_pm.abs().max(1.0),
        BALANCE_RTOL,
    ));

    let eq = EquilibriumReference::from_solution(net, sol)
        .map_err(|e| CliError::Solver(e.to_string()))?
        .state(net);
    let (wd, pd) = rhs(net, &eq);
    let k = kkt_residuals(&eq, net);
    let worst = wd
        .iter()
        .chain(&pd)
        .fold(k.stationarity.max(k.sync), |m, x| m.max(x.abs()));
    rows.push(bounded(CHECK_KKT, worst, EQUILIBRIUM_TOL));

    rows.push(bounded(CHECK_FREQUENCY, diag.omega_error.unwrap_or(f64::NAN), limit_tol));
    rows.push(bounded(CHECK_SYNC, kkt_residuals(last, net).sync, limit_tol));
    let loads = max_abs_diff(&last.d, &sol.d_star).max(max_abs_diff(&last.d_hat, &sol.d_hat_star));
    rows.push(bounded(CHECK_LOADS, loads, limit_tol));
    let cost = *traj.cost_series(net).last().unwrap();
    rows.push(bounded(CHECK_COST, (cost - sol.objective).abs(), limit_tol));

    rows.push(bounded(
        CHECK_FLOW_SET,
        FlowSet::membership_residual(net, &last.flows, &sol.h_star),
        limit_tol,
    ));
    let projection_error = max_abs_diff(&last.flows, &sol.flows.point);
    rows.push(if net.is_tree() {
        bounded(CHECK_TREE, projection_error, limit_tol)
    } else {
        not_applicable(CHECK_TREE, "mesh: the equilibrium flow set is not a singleton")
    });
    rows.push(if scenario.angle_consistent {
        bounded(CHECK_PROJECTION, projection_error, limit_tol)
    } else {
        not_applicable(CHECK_PROJECTION, "initial flows are not angle-consistent")
    });
    rows.push(bounded(CHECK_CYCLE, diag.flow_reference_error.unwrap_or(f64::NAN), limit_tol));

    if sampled {
        rows.push(not_applicable(CHECK_LYAPUNOV, "sampled control"));
        rows.push(not_applicable(CHECK_LYAPUNOV_FINAL, "sampled control"));
    } else {
        rows.push(bounded(
            CHECK_LYAPUNOV,
            diag.max_lyapunov_increase.unwrap_or(0.0),
            LYAPUNOV_STEP_SLACK,
        ));
        rows.push(bounded(
            CHECK_LYAPUNOV_FINAL,
            diag.final_lyapunov.unwrap_or(f64::NAN),
            LYAPUNOV_FINAL_TOL,
        ));
    }

    // recorded samples are checked inside `simulate`; recheck the final one
    let algebraic = diag.max_algebraic_residual.max(algebraic_residual(net, last));
    rows.push(bounded(CHECK_ALGEBRAIC, algebraic, olc_core::dynamics::ALGEBRAIC_RESIDUAL_TOL));
    let energy = diag.max_energy_residual.max(energy_balance_residual(net, last));
    rows.push(bounded(CHECK_ENERGY, energy, EQUILIBRIUM_TOL));
    rows.push(bounded(
        CHECK_TAIL,
        diag.tail_variation,
        if sampled { SAMPLED_LIMIT_TOL } else { TAIL_TOL },
    ));

    let c = &scenario.config;
    let setting = format!(
        "{}, {}, h = {} s, T = {} s",
        if net.is_tree() { "tree" } else { "mesh" },
        match c.controller {
            ControllerMode::Continuous => "continuous".to_string(),
            ControllerMode::Sampled { interval } => format!("sampled every {} ms", interval * 1000.0),
        },
        c.step,
        c.horizon
    );
    Ok(CheckReport {
        case: scenario.name.clone(),
        setting,
        rows,
    })
}
