//! Centralized reference solver for the optimal load control problem
//!
//! ```text
//! minimize    Σ_j c_j(d_j) + d̂_j² / (2 D_j)    over  d_min ≤ d ≤ d_max, d̂
//! subject to  Σ_j (d_j + d̂_j) = Σ_j P_m_j
//! ```
//!
//! The dual has a single scalar variable ν (the common frequency deviation)
//! and its optimum is the root of the strictly increasing balance function
//! `g(ν) = Σ_j (d_j(ν) + D_j ν) − Σ_j P_m_j`. From ν* the primal optimum,
//! the equilibrium injections `h*` and the set of equilibrium line flows
//! `{P : C P = h*}` follow directly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::network::Network;

/// Relative tolerance on the balance residual at the dual optimum.
pub const BALANCE_RTOL: f64 = 1e-9;
pub const MAX_BRACKET_DOUBLINGS: usize = 200;
/// `|ν*|` above this (rad/s) is flagged as outside the linearized regime.
pub const DEFAULT_WARNING_THRESHOLD: f64 = 2.0 * PI * 0.5;
/// Largest instance the brute-force oracle accepts.
pub const ORACLE_MAX_BUSES: usize = 3;
pub const ORACLE_MAX_GRID_POINTS: f64 = 2e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OlcError {
    #[error("could not bracket the dual optimum after {0} doublings")]
    BracketExpansion(usize),
    #[error("balance residual {residual:e} exceeds tolerance {tolerance:e} at nu = {nu}")]
    ResidualTooLarge { nu: f64, residual: f64, tolerance: f64 },
    #[error("reduced flow system is singular")]
    SingularSystem,
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("injections do not sum to zero (sum = {0:e})")]
    UnbalancedInjections(f64),
    #[error("oracle limited to {max_buses} buses and {max_points:e} grid points, got {buses} buses and {points:e} points")]
    OracleTooLarge {
        buses: usize,
        points: f64,
        max_buses: usize,
        max_points: f64,
    },
    #[error("grid step must be positive, got {0}")]
    InvalidGridStep(f64),
}

/// Balance function `g(ν) = Σ_j (d_j(ν) + D_j ν) − Σ_j P_m_j`.
pub fn balance_residual(network: &Network, nu: f64) -> f64 {
    network
        .buses()
        .iter()
        .map(|b| b.cost.load_response(nu) + b.damping * nu - b.disturbance)
        .sum()
}

fn balance_tolerance(network: &Network) -> f64 {
    let total: f64 = network.buses().iter().map(|b| b.disturbance).sum();
    BALANCE_RTOL * total.abs().max(1.0)
}

/// Unique dual optimum ν*, found by bisection on a bracket expanded from
/// `[−1, 1]` rad/s.
pub fn solve_dual(network: &Network) -> Result<f64, OlcError> {
    solve_dual_from(network, -1.0, 1.0)
}

/// As [`solve_dual`], starting the bracket search from `[lo, hi]`.
pub fn solve_dual_from(network: &Network, mut lo: f64, mut hi: f64) -> Result<f64, OlcError> {
    let g = |nu: f64| balance_residual(network, nu);
    let mut doublings = 0;
    while g(lo) > 0.0 {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(OlcError::BracketExpansion(doublings));
        }
        lo = if lo < 0.0 { 2.0 * lo } else { -1.0 };
        doublings += 1;
    }
    while g(hi) < 0.0 {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(OlcError::BracketExpansion(doublings));
        }
        hi = if hi > 0.0 { 2.0 * hi } else { 1.0 };
        doublings += 1;
    }

    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    for _ in 0..4000 {
        if g_lo == 0.0 || g_hi == 0.0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid <= 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    let (nu, residual) = if g_lo.abs() <= g_hi.abs() { (lo, g_lo) } else { (hi, g_hi) };
    let tolerance = balance_tolerance(network);
    if residual.abs() > tolerance {
        return Err(OlcError::ResidualTooLarge {
            nu,
            residual: residual.abs(),
            tolerance,
        });
    }
    Ok(nu)
}

/// Optimal loads `d*_j = d_j(ν*)` and `d̂*_j = D_j ν*`, internal bus order.
pub fn recover_primal(network: &Network, nu_star: f64) -> (Vec<f64>, Vec<f64>) {
    network
        .buses()
        .iter()
        .map(|b| (b.cost.load_response(nu_star), b.damping * nu_star))
        .unzip()
}

/// `h*_j = Φ'_j(ν*) = −d_j(ν*) − D_j ν* + P_m_j`.
pub fn equilibrium_injections(network: &Network, nu_star: f64) -> Vec<f64> {
    network.buses().iter().map(|b| b.phi_derivative(nu_star)).collect()
}

/// Total cost `Σ_j c_j(d_j) + d̂_j² / (2 D_j)`.
pub fn olc_objective(network: &Network, d: &[f64], d_hat: &[f64]) -> f64 {
    network
        .buses()
        .iter()
        .zip(d.iter().zip(d_hat))
        .map(|(b, (&d, &dh))| b.cost.cost(d) + dh * dh / (2.0 * b.damping))
        .sum()
}

/// Dual objective `Σ_j Φ_j(ν)` at a common ν.
pub fn dual_objective(network: &Network, nu: f64) -> f64 {
    network.buses().iter().map(|b| b.phi(nu)).sum()
}

/// The set `{P : C P = h*}` of equilibrium line flows, stored as one member
/// plus a basis of the null space of the incidence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSet {
    /// `B C̃ᵀ (C̃ B C̃ᵀ)⁻¹ h̃*`, the unique member reachable from flows that
    /// come from bus angles. For trees, the only member.
    pub point: Vec<f64>,
    /// Cycle vectors spanning `null(C̃)`; empty for trees.
    pub null_basis: Vec<Vec<f64>>,
    /// Bus whose row was dropped to form `C̃`.
    pub dropped_bus: usize,
}

impl FlowSet {
    pub fn is_singleton(&self) -> bool {
        self.null_basis.is_empty()
    }

    /// `‖C P − h‖∞`.
    pub fn membership_residual(network: &Network, flows: &[f64], injections: &[f64]) -> f64 {
        network
            .net_outflow(flows)
            .iter()
            .zip(injections)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `Nᵀ B⁻¹ P`. Conserved along the dynamics, since `Ṗ = B Cᵀ ω`.
    pub fn cycle_invariants(&self, network: &Network, flows: &[f64]) -> Vec<f64> {
        self.null_basis
            .iter()
            .map(|z| {
                z.iter()
                    .zip(flows)
                    .zip(network.lines())
                    .map(|((z, p), l)| z * p / l.stiffness)
                    .sum()
            })
            .collect()
    }

    /// Whether `flows` lies in `Col(B C̃ᵀ)`, i.e. could come from bus angles.
    pub fn is_angle_consistent(&self, network: &Network, flows: &[f64], tol: f64) -> bool {
        self.cycle_invariants(network, flows).iter().all(|v| v.abs() <= tol)
    }

    /// The member of the set with the same cycle invariants as `initial`,
    /// which is where trajectories starting from `initial` end up.
    pub fn member_reached_from(&self, network: &Network, initial: &[f64]) -> Vec<f64> {
        let k = self.null_basis.len();
        if k == 0 {
            return self.point.clone();
        }
        let inv_b: Vec<f64> = network.lines().iter().map(|l| 1.0 / l.stiffness).collect();
        let gram = DMatrix::from_fn(k, k, |i, j| {
            self.null_basis[i]
                .iter()
                .zip(&self.null_basis[j])
                .zip(&inv_b)
                .map(|((a, b), w)| a * b * w)
                .sum()
        });
        let rhs = DVector::from_vec(self.cycle_invariants(network, initial));
        let coeffs = gram
            .cholesky()
            .expect("cycle basis is linearly independent")
            .solve(&rhs);
        let mut member = self.point.clone();
        for (z, c) in self.null_basis.iter().zip(coeffs.iter()) {
            for (m, zi) in member.iter_mut().zip(z) {
                *m += c * zi;
            }
        }
        member
    }
}

/// Equilibrium flow set for injections `h` (which must sum to zero),
/// dropping the last bus in internal order.
pub fn equilibrium_flows(network: &Network, injections: &[f64]) -> Result<FlowSet, OlcError> {
    let last = network.buses().last().expect("network is nonempty").id;
    equilibrium_flows_dropping(network, injections, last)
}

pub fn equilibrium_flows_dropping(
    network: &Network,
    injections: &[f64],
    dropped_bus: usize,
) -> Result<FlowSet, OlcError> {
    let row = network
        .index_of(dropped_bus)
        .ok_or(OlcError::UnknownBus(dropped_bus))?;
    let total: f64 = injections.iter().sum();
    let scale = injections.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if total.abs() > 1e-9 * scale * injections.len() as f64 {
        return Err(OlcError::UnbalancedInjections(total));
    }
    let reduced = network.incidence_f64().remove_row(row);
    let h = DVector::from_vec(injections.to_vec()).remove_row(row);

    let point = if network.is_tree() {
        reduced.lu().solve(&h).ok_or(OlcError::SingularSystem)?
    } else {
        let b = DMatrix::from_diagonal(&DVector::from_vec(network.stiffnesses()));
        let bct = &b * reduced.transpose();
        let laplacian = &reduced * &bct;
        let y = laplacian
            .cholesky()
            .ok_or(OlcError::SingularSystem)?
            .solve(&h);
        bct * y
    };

    Ok(FlowSet {
        point: point.iter().copied().collect(),
        null_basis: network.fundamental_cycles(),
        dropped_bus,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlcSolution {
    pub nu_star: f64,
    /// Per bus, internal order.
    pub d_star: Vec<f64>,
    pub d_hat_star: Vec<f64>,
    pub h_star: Vec<f64>,
    pub flows: FlowSet,
    /// Optimal total cost.
    pub objective: f64,
    pub warnings: Vec<String>,
}

pub fn solve(network: &Network) -> Result<OlcSolution, OlcError> {
    solve_with_threshold(network, DEFAULT_WARNING_THRESHOLD)
}

pub fn solve_with_threshold(network: &Network, warning_threshold: f64) -> Result<OlcSolution, OlcError> {
    let nu_star = solve_dual(network)?;
    let (d_star, d_hat_star) = recover_primal(network, nu_star);
    let h_star = equilibrium_injections(network, nu_star);
    let flows = equilibrium_flows(network, &h_star)?;
    let objective = olc_objective(network, &d_star, &d_hat_star);
    let mut warnings = Vec::new();
    if nu_star.abs() > warning_threshold {
        warnings.push(format!(
            "optimal frequency deviation {nu_star:.6} rad/s exceeds {warning_threshold:.6} rad/s; \
             the linearized model may not be valid there"
        ));
    }
    Ok(OlcSolution {
        nu_star,
        d_star,
        d_hat_star,
        h_star,
        flows,
        objective,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub d: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub cost: f64,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor() as usize;
    let mut pts: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    if *pts.last().unwrap() < hi {
        pts.push(hi);
    }
    pts
}

/// Exhaustive search over a grid of controllable loads. For each grid point
/// the frequency-sensitive loads absorb the remaining imbalance `r` in
/// proportion to their damping, which minimizes `Σ d̂²/(2D)` subject to
/// `Σ d̂ = r` with value `r² / (2 ΣD)`.
pub fn brute_force_oracle(network: &Network, grid_step: f64) -> Result<OracleResult, OlcError> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(OlcError::InvalidGridStep(grid_step));
    }
    let buses = network.buses();
    let axes: Vec<Vec<f64>> = buses
        .iter()
        .map(|b| grid(b.cost.lower(), b.cost.upper(), grid_step))
        .collect();
    let points: f64 = axes.iter().map(|a| a.len() as f64).product();
    if buses.len() > ORACLE_MAX_BUSES || points > ORACLE_MAX_GRID_POINTS {
        return Err(OlcError::OracleTooLarge {
            buses: buses.len(),
            points,
            max_buses: ORACLE_MAX_BUSES,
            max_points: ORACLE_MAX_GRID_POINTS,
        });
    }
    let total_pm: f64 = buses.iter().map(|b| b.disturbance).sum();
    let total_damping: f64 = buses.iter().map(|b| b.damping).sum();
    // per-axis cost tables
    let costs: Vec<Vec<f64>> = axes
        .iter()
        .zip(buses)
        .map(|(axis, b)| axis.iter().map(|&d| b.cost.cost(d)).collect())
        .collect();

    let n = buses.len();
    let mut idx = vec![0usize; n];
    let mut best_cost = f64::INFINITY;
    let mut best = idx.clone();
    'outer: loop {
        let mut sum_d = 0.0;
        let mut cost = 0.0;
        for j in 0..n {
            sum_d += axes[j][idx[j]];
            cost += costs[j][idx[j]];
        }
        let r = total_pm - sum_d;
        cost += r * r / (2.0 * total_damping);
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&idx);
        }
        for j in (0..n).rev() {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                continue 'outer;
            }
            idx[j] = 0;
        }
        break;
    }

    let d: Vec<f64> = best.iter().enumerate().map(|(j, &k)| axes[j][k]).collect();
    let r = total_pm - d.iter().sum::<f64>();
    let d_hat = buses.iter().map(|b| b.damping * r / total_damping).collect();
    Ok(OracleResult {
        d,
        d_hat,
        cost: best_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostFunction;
    use crate::network::{Bus, LineSpec};

    fn n1(lo: f64, hi: f64) -> Network {
        let c = CostFunction::quadratic(1.0, lo, hi).unwrap();
        Network::build(
            vec![Bus::generator(1, 1.0, 1.0, 1.0, c.clone()), Bus::load(2, 1.0, 0.0, c)],
            vec![LineSpec::with_stiffness(1, 2, 6.0)],
        )
        .unwrap()
    }

    fn ring3() -> Network {
        let c = CostFunction::quadratic(1.0, -10.0, 10.0).unwrap();
        Network::build(
            vec![
                Bus::generator(1, 1.0, 1.0, 0.0, c.clone()),
                Bus::generator(2, 1.0, 1.0, 0.0, c.clone()),
                Bus::load(3, 1.0, 0.0, c),
            ],
            vec![
                LineSpec::with_stiffness(1, 2, 6.0),
                LineSpec::with_stiffness(2, 3, 6.0),
                LineSpec::with_stiffness(1, 3, 6.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn n1_dual_and_primal() {
        let net = n1(-10.0, 10.0);
        let nu = solve_dual(&net).unwrap();
        assert!((nu - 0.25).abs() < 1e-15);
        let (d, dh) = recover_primal(&net, nu);
        assert_eq!(d, vec![0.25, 0.25]);
        assert_eq!(dh, vec![0.25, 0.25]);
        let total: f64 = d.iter().chain(&dh).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let h = equilibrium_injections(&net, nu);
        assert_eq!(h, vec![0.5, -0.5]);
        let flows = equilibrium_flows(&net, &h).unwrap();
        assert!(flows.is_singleton());
        assert!((flows.point[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clipped_n1() {
        let net = n1(-0.1, 0.1);
        // dense scan of g(ν) = 2 clip(ν) + 2ν − 1 for its sign change
        let scan = (0..=100_000)
            .map(|k| k as f64 * 1e-5)
            .find(|&nu| balance_residual(&net, nu) >= 0.0)
            .unwrap();
        assert!((scan - 0.4).abs() <= 1e-5);
        let nu = solve_dual(&net).unwrap();
        assert!((nu - 0.4).abs() < 1e-14);
        let (d, dh) = recover_primal(&net, nu);
        assert_eq!(d, vec![0.1, 0.1]);
        assert!((dh[0] - 0.4).abs() < 1e-14 && (dh[1] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn zero_disturbance_gives_zero_solution() {
        let mut net = n1(-10.0, 10.0);
        let buses: Vec<Bus> = net
            .buses()
            .iter()
            .cloned()
            .map(|mut b| {
                b.disturbance = 0.0;
                b
            })
            .collect();
        net = Network::build(buses, vec![LineSpec::with_stiffness(1, 2, 6.0)]).unwrap();
        let sol = solve(&net).unwrap();
        assert_eq!(sol.nu_star, 0.0);
        assert!(sol.d_star.iter().chain(&sol.d_hat_star).chain(&sol.h_star).all(|&x| x == 0.0));
        assert!(sol.flows.point.iter().all(|&x| x == 0.0));
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn ring_projection_point() {
        let net = ring3();
        let h = [0.5, -0.5, 0.0];
        let flows = equilibrium_flows(&net, &h).unwrap();
        let expected = [1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0];
        for (p, e) in flows.point.iter().zip(expected) {
            assert!((p - e).abs() < 1e-14, "{p} vs {e}");
        }
        assert_eq!(flows.null_basis.len(), 1);
        assert!(FlowSet::membership_residual(&net, &flows.point, &h) < 1e-14);
        // B⁻¹-orthogonal to the cycle space
        assert!(flows.cycle_invariants(&net, &flows.point)[0].abs() < 1e-15);
        assert!(flows.is_angle_consistent(&net, &flows.point, 1e-12));
    }

    #[test]
    fn member_reached_from_matches_cycle_invariant() {
        let net = ring3();
        let h = [0.5, -0.5, 0.0];
        let flows = equilibrium_flows(&net, &h).unwrap();
        let p0 = [0.3, -0.2, 0.4];
        assert!(!flows.is_angle_consistent(&net, &p0, 1e-9));
        let m = flows.member_reached_from(&net, &p0);
        assert!(FlowSet::membership_residual(&net, &m, &h) < 1e-14);
        let a = flows.cycle_invariants(&net, &m)[0];
        let b = flows.cycle_invariants(&net, &p0)[0];
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn unbalanced_injections_rejected() {
        assert!(matches!(
            equilibrium_flows(&ring3(), &[1.0, 0.0, 0.0]),
            Err(OlcError::UnbalancedInjections(_))
        ));
        assert_eq!(
            equilibrium_flows_dropping(&ring3(), &[0.0; 3], 7),
            Err(OlcError::UnknownBus(7))
        );
    }

    #[test]
    fn warning_threshold() {
        let net = n1(-10.0, 10.0);
        assert!(solve(&net).unwrap().warnings.is_empty());
        assert_eq!(solve_with_threshold(&net, 0.1).unwrap().warnings.len(), 1);
    }

    #[test]
    fn oracle_examples() {
        let net = n1(-1.0, 1.0);
        let sol = solve(&net).unwrap();
        let oracle = brute_force_oracle(&net, 1e-3).unwrap();
        assert!((oracle.cost - sol.objective).abs() < 1e-4);
        // strong duality: primal objective equals dual objective
        assert!((sol.objective - dual_objective(&net, sol.nu_star)).abs() < 1e-12);

        let clipped = n1(-0.1, 0.1);
        let oracle = brute_force_oracle(&clipped, 1e-3).unwrap();
        assert!((oracle.d[0] - 0.1).abs() < 1e-12 && (oracle.d[1] - 0.1).abs() < 1e-12);

        assert!(matches!(
            brute_force_oracle(&net, 0.0),
            Err(OlcError::InvalidGridStep(_))
        ));
    }

    #[test]
    fn oracle_refuses_large_instances() {
        let c = CostFunction::quadratic(1.0, -1.0, 1.0).unwrap();
        let buses = (1..=4).map(|i| Bus::generator(i, 1.0, 1.0, 0.0, c.clone())).collect();
        let lines = (1..4).map(|i| LineSpec::with_stiffness(i, i + 1, 1.0)).collect();
        let net = Network::build(buses, lines).unwrap();
        assert!(matches!(
            brute_force_oracle(&net, 0.1),
            Err(OlcError::OracleTooLarge { buses: 4, .. })
        ));
    }
}
