//! Closed-loop swing and branch-flow dynamics under frequency-based load control.
//!
//! ```text
//! M_j ω̇_j = −(d_j + d̂_j − P_m_j + P_out_j − P_in_j)     generator buses
//!       0 =  d_j + d̂_j − P_m_j + P_out_j − P_in_j        load buses
//!   Ṗ_ij  =  B_ij (ω_i − ω_j)                            lines
//!    d̂_j  =  D_j ω_j,    d_j = [c_j'⁻¹(ω_j)] clipped      all buses
//! ```
//!
//! The system is an index-1 DAE in `(ω_G, P)`. Each load bus's algebraic
//! equation involves only its own frequency and the line flows, so load
//! frequencies are recovered bus by bus with a safeguarded Newton solve at
//! every Runge–Kutta stage.

use thiserror::Error;

use crate::network::{Bus, BusKind, Network};
use crate::olc::{olc_objective, FlowSet, OlcSolution};

pub const DEFAULT_ALGEBRAIC_TOL: f64 = 1e-12;
/// Bound on the load-bus power balance residual of any recorded state.
pub const ALGEBRAIC_RESIDUAL_TOL: f64 = 1e-9;
/// Tolerance used when checking that a reference point is an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;
/// Fraction of the horizon over which tail variation is measured.
pub const TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("integration step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("horizon {horizon} is not an integer multiple of the step {step}")]
    HorizonNotMultiple { horizon: f64, step: f64 },
    #[error("control interval {interval} must be at least the step {step} and an integer multiple of it")]
    InvalidControlInterval { interval: f64, step: f64 },
    #[error("decimation must be at least 1")]
    ZeroDecimation,
    #[error("algebraic tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("expected {expected} {what}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("reference flows are not an equilibrium: ‖C P* − h*‖∞ = {0:e}")]
    NotAnEquilibrium(f64),
    #[error("state became non-finite at t = {t} (step too large?)")]
    Diverged { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerMode {
    /// The control law is applied continuously.
    Continuous,
    /// Controllable loads are updated every `interval` seconds and held in
    /// between; frequency-sensitive loads still follow `D ω` continuously.
    Sampled { interval: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
    pub horizon: f64,
    pub algebraic_tol: f64,
    pub controller: ControllerMode,
    /// Record every `decimation`-th step (the final state is always recorded).
    pub decimation: usize,
}

impl IntegratorConfig {
    pub fn new(step: f64, horizon: f64) -> Self {
        Self {
            step,
            horizon,
            algebraic_tol: DEFAULT_ALGEBRAIC_TOL,
            controller: ControllerMode::Continuous,
            decimation: 1,
        }
    }

    pub fn with_controller(mut self, controller: ControllerMode) -> Self {
        self.controller = controller;
        self
    }

    pub fn with_decimation(mut self, decimation: usize) -> Self {
        self.decimation = decimation;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(DynamicsError::InvalidStep(self.step));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(DynamicsError::InvalidHorizon(self.horizon));
        }
        if integer_ratio(self.horizon, self.step).is_none() {
            return Err(DynamicsError::HorizonNotMultiple {
                horizon: self.horizon,
                step: self.step,
            });
        }
        if let ControllerMode::Sampled { interval } = self.controller {
            if !(interval >= self.step) || integer_ratio(interval, self.step).is_none() {
                return Err(DynamicsError::InvalidControlInterval {
                    interval,
                    step: self.step,
                });
            }
        }
        if self.decimation == 0 {
            return Err(DynamicsError::ZeroDecimation);
        }
        if !(self.algebraic_tol > 0.0) {
            return Err(DynamicsError::InvalidTolerance(self.algebraic_tol));
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        integer_ratio(self.horizon, self.step).unwrap_or(0)
    }

    /// Integration steps per control update, if sampled.
    pub fn steps_per_update(&self) -> Option<usize> {
        match self.controller {
            ControllerMode::Continuous => None,
            ControllerMode::Sampled { interval } => integer_ratio(interval, self.step),
        }
    }
}

fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() <= 1e-9 * n {
        Some(n as usize)
    } else {
        None
    }
}

/// Full state at one instant. Per-bus vectors are in internal order
/// (generators first).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    /// `(ω_G, ω_L)`; only the generator block is dynamic.
    pub omega: Vec<f64>,
    pub flows: Vec<f64>,
    pub d: Vec<f64>,
    pub d_hat: Vec<f64>,
    generators: usize,
}

impl SystemState {
    /// Completes `(ω_G, P)` to a consistent state under the continuous
    /// control law.
    pub fn new(
        network: &Network,
        t: f64,
        omega_g: &[f64],
        flows: &[f64],
        tol: f64,
    ) -> Result<Self, DynamicsError> {
        check_len("generator frequencies", network.generator_count(), omega_g.len())?;
        check_len("line flows", network.line_count(), flows.len())?;
        Ok(complete(network, t, omega_g, flows, None, None, tol))
    }

    /// As [`new`](Self::new) but with controllable loads held at `held`.
    pub fn with_held_loads(
        network: &Network,
        t: f64,
        omega_g: &[f64],
        flows: &[f64],
        held: &[f64],
    ) -> Result<Self, DynamicsError> {
        check_len("generator frequencies", network.generator_count(), omega_g.len())?;
        check_len("line flows", network.line_count(), flows.len())?;
        check_len("held loads", network.bus_count(), held.len())?;
        Ok(complete(network, t, omega_g, flows, Some(held), None, 0.0))
    }

    pub fn omega_g(&self) -> &[f64] {
        &self.omega[..self.generators]
    }

    pub fn omega_l(&self) -> &[f64] {
        &self.omega[self.generators..]
    }

    fn is_finite(&self) -> bool {
        self.omega.iter().chain(&self.flows).chain(&self.d).all(|x| x.is_finite())
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), DynamicsError> {
    if expected == got {
        Ok(())
    } else {
        Err(DynamicsError::LengthMismatch { what, expected, got })
    }
}

/// Root of `D ω + d(ω) − surplus = 0` for one load bus, where
/// `surplus = P_m − P_out + P_in`. The map is strictly increasing with slope
/// at least `D`, and the root lies in `[(surplus − d_max)/D, (surplus − d_min)/D]`.
pub fn solve_load_bus(bus: &Bus, surplus: f64, guess: f64, tol: f64) -> f64 {
    if !surplus.is_finite() {
        return f64::NAN;
    }
    let damping = bus.damping;
    let f =|w: f64| damping * w + bus.cost.load_response(w) - surplus;
    let mut lo = (surplus - bus.cost.upper()) / damping;
    let mut hi = (surplus - bus.cost.lower()) / damping;
    if lo >= hi {
        return lo;
    }
    let mut w = if guess.is_finite() { guess.clamp(lo, hi) } else { 0.5 * (lo + hi) };
    let mut best = (f64::INFINITY, w);
    for _ in 0..200 {
        let fw = f(w);
        if fw.abs() < best.0 {
            best = (fw.abs(), w);
        }
        if fw.abs() <= tol {
            return w;
        }
        if fw < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let slope = damping + bus.cost.load_response_slope(w);
        let mut next = w - fw / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == w || hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
            break;
        }
        w = next;
    }
    best.1
}

/// Load-bus frequencies consistent with the flows `P` under the continuous
/// control law, one scalar solve per bus.
pub fn solve_load_frequencies(network: &Network, flows: &[f64], tol: f64) -> Vec<f64> {
    let outflow = network.net_outflow(flows);
    let g = network.generator_count();
    network
        .loads()
        .iter()
        .enumerate()
        .map(|(k, bus)| solve_load_bus(bus, bus.disturbance - outflow[g + k], 0.0, tol))
        .collect()
}

fn complete(
    network: &Network,
    t: f64,
    omega_g: &[f64],
    flows: &[f64],
    held: Option<&[f64]>,
    guess: Option<&[f64]>,
    tol: f64,
) -> SystemState {
    let g = network.generator_count();
    let outflow = network.net_outflow(flows);
    let mut omega = Vec::with_capacity(network.bus_count());
    omega.extend_from_slice(omega_g);
    for (k, bus) in network.loads().iter().enumerate() {
        let j = g + k;
        let surplus = bus.disturbance - outflow[j];
        let w = match held {
            Some(h) => (surplus - h[j]) / bus.damping,
            None => solve_load_bus(bus, surplus, guess.map_or(0.0, |v| v[j]), tol),
        };
        omega.push(w);
    }
    let d = match held {
        Some(h) => h.to_vec(),
        None => network
            .buses()
            .iter()
            .zip(&omega)
            .map(|(b, &w)| b.cost.load_response(w))
            .collect(),
    };
    let d_hat = network.buses().iter().zip(&omega).map(|(b, &w)| b.damping * w).collect();
    SystemState {
        t,
        omega,
        flows: flows.to_vec(),
        d,
        d_hat,
        generators: g,
    }
}

fn derivatives(network: &Network, state: &SystemState) -> (Vec<f64>, Vec<f64>) {
    let outflow = network.net_outflow(&state.flows);
    let omega_dot = network
        .generators()
        .iter()
        .enumerate()
        .map(|(j, bus)| {
            let inertia = match bus.kind {
                BusKind::Generator { inertia } => inertia,
                BusKind::Load => unreachable!("generators are ordered first"),
            };
            -(state.d[j] + state.d_hat[j] - bus.disturbance + outflow[j]) / inertia
        })
        .collect();
    let flow_dot = network
        .lines()
        .iter()
        .map(|l| l.stiffness * (state.omega[l.from] - state.omega[l.to]))
        .collect();
    (omega_dot, flow_dot)
}

/// `(ω̇_G, Ṗ)` at a consistent state, using the state's own `d` and `d̂`.
pub fn rhs(network: &Network, state: &SystemState) -> (Vec<f64>, Vec<f64>) {
    derivatives(network, state)
}

/// One classical RK4 step of size `config.step`. In sampled mode the
/// controllable loads stay at `state.d` for the whole step.
pub fn step(network: &Network, state: &SystemState, config: &IntegratorConfig) -> SystemState {
    let held = match config.controller {
        ControllerMode::Continuous => None,
        ControllerMode::Sampled { .. } => Some(state.d.as_slice()),
    };
    rk4(network, state, config.step, held, config.algebraic_tol)
}

fn rk4(network: &Network, s0: &SystemState, h: f64, held: Option<&[f64]>, tol: f64) -> SystemState {
    let axpy = |base: &[f64], k: &[f64], a: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(x, k)| x + a * k).collect()
    };
    let stage = |omega_g: Vec<f64>, flows: Vec<f64>, t: f64| {
        complete(network, t, &omega_g, &flows, held, Some(&s0.omega), tol)
    };

    let (k1w, k1p) = derivatives(network, s0);
    let s2 = stage(axpy(s0.omega_g(), &k1w, 0.5 * h), axpy(&s0.flows, &k1p, 0.5 * h), s0.t + 0.5 * h);
    let (k2w, k2p) = derivatives(network, &s2);
    let s3 = stage(axpy(s0.omega_g(), &k2w, 0.5 * h), axpy(&s0.flows, &k2p, 0.5 * h), s0.t + 0.5 * h);
    let (k3w, k3p) = derivatives(network, &s3);
    let s4 = stage(axpy(s0.omega_g(), &k3w, h), axpy(&s0.flows, &k3p, h), s0.t + h);
    let (k4w, k4p) = derivatives(network, &s4);

    let combine = |y: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
        (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    };
    let omega_g = combine(s0.omega_g(), &k1w, &k2w, &k3w, &k4w);
    let flows = combine(&s0.flows, &k1p, &k2p, &k3p, &k4p);
    stage(omega_g, flows, s0.t + h)
}

/// Flows `P_ij = B_ij (θ_i − θ_j)` from bus angles given in internal order.
/// These always lie in the column space of `B Cᵀ`.
pub fn initial_flows_from_angles(network: &Network, theta: &[f64]) -> Vec<f64> {
    network
        .lines()
        .iter()
        .map(|l| l.stiffness * (theta[l.from] - theta[l.to]))
        .collect()
}

/// An equilibrium `(ω* 1, P*)` used to center the Lyapunov function, with
/// the stepsizes `γ_j = 1/M_j` and `ξ_ij = B_ij` that make the swing
/// dynamics a primal-dual gradient flow.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReference {
    pub omega_star: f64,
    pub flows_star: Vec<f64>,
    pub gamma: Vec<f64>,
    pub xi: Vec<f64>,
}

impl EquilibriumReference {
    /// Centered on the flow point of the solution's equilibrium set.
    pub fn from_solution(network: &Network, solution: &OlcSolution) -> Result<Self, DynamicsError> {
        Self::with_flows(network, solution.nu_star, solution.flows.point.clone())
    }

    /// Centered on an arbitrary member `P*`; fails unless `C P* = Φ'(ω* 1)`.
    pub fn with_flows(network: &Network, omega_star: f64, flows_star: Vec<f64>) -> Result<Self, DynamicsError> {
        check_len("reference flows", network.line_count(), flows_star.len())?;
        let h: Vec<f64> = network.buses().iter().map(|b| b.phi_derivative(omega_star)).collect();
        let scale = h.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let residual = FlowSet::membership_residual(network, &flows_star, &h);
        if residual > EQUILIBRIUM_TOL * scale {
            return Err(DynamicsError::NotAnEquilibrium(residual));
        }
        Ok(Self {
            omega_star,
            flows_star,
            gamma: network.generators().iter().map(|b| 1.0 / b.inertia().unwrap()).collect(),
            xi: network.stiffnesses(),
        })
    }

    /// Equilibrium state with frequencies `ω* 1` and flows `P*`.
    pub fn state(&self, network: &Network) -> SystemState {
        let omega_g = vec![self.omega_star; network.generator_count()];
        complete(network, 0.0, &omega_g, &self.flows_star, None, None, DEFAULT_ALGEBRAIC_TOL)
    }
}

/// `U = ½ (ω_G − ω*1)ᵀ Γ⁻¹ (ω_G − ω*1) + ½ (P − P*)ᵀ Ξ⁻¹ (P − P*)`.
pub fn lyapunov_value(state: &SystemState, reference: &EquilibriumReference) -> f64 {
    let freq: f64 = state
        .omega_g()
        .iter()
        .zip(&reference.gamma)
        .map(|(w, g)| (w - reference.omega_star).powi(2) / g)
        .sum();
    let flow: f64 = state
        .flows
        .iter()
        .zip(&reference.flows_star)
        .zip(&reference.xi)
        .map(|((p, ps), xi)| (p - ps).powi(2) / xi)
        .sum();
    0.5 * (freq + flow)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `‖Φ'(ω) − C P‖∞`
    pub stationarity: f64,
    /// `max over lines |ω_i − ω_j|`
    pub sync: f64,
}

pub fn kkt_residuals(state: &SystemState, network: &Network) -> KktResiduals {
    let outflow = network.net_outflow(&state.flows);
    let stationarity = network
        .buses()
        .iter()
        .zip(&state.omega)
        .zip(&outflow)
        .map(|((b, &w), cp)| (b.phi_derivative(w) - cp).abs())
        .fold(0.0, f64::max);
    let sync = network
        .line_differences(&state.omega)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    KktResiduals { stationarity, sync }
}

/// Largest load-bus power balance residual `|D ω + d − P_m + P_out − P_in|`.
pub fn algebraic_residual(network: &Network, state: &SystemState) -> f64 {
    let g = network.generator_count();
    let outflow = network.net_outflow(&state.flows);
    network
        .loads()
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let j = g + k;
            (state.d_hat[j] + state.d[j] - b.disturbance + outflow[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// `|Σ_G M_j ω̇_j + Σ_N (d_j + d̂_j − P_m_j)|`, zero at every consistent state
/// because the flow terms cancel (`1ᵀ C = 0`).
pub fn energy_balance_residual(network: &Network, state: &SystemState) -> f64 {
    let (omega_dot, _) = derivatives(network, state);
    let inertial: f64 = network
        .generators()
        .iter()
        .zip(&omega_dot)
        .map(|(b, wd)| b.inertia().unwrap() * wd)
        .sum();
    let imbalance: f64 = network
        .buses()
        .iter()
        .enumerate()
        .map(|(j, b)| state.d[j] + state.d_hat[j] - b.disturbance)
        .sum();
    (inertial + imbalance).abs()
}

/// Initial generator frequencies and line flows, internal order.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub omega_g: Vec<f64>,
    pub flows: Vec<f64>,
}

impl InitialCondition {
    pub fn zero(network: &Network) -> Self {
        Self {
            omega_g: vec![0.0; network.generator_count()],
            flows: vec![0.0; network.line_count()],
        }
    }
}

/// What to compute alongside the trajectory.
#[derive(Debug, Clone, Default)]
pub struct Analysis {
    pub reference: Option<EquilibriumReference>,
    pub kkt: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitDiagnostics {
    pub steps: usize,
    /// Largest `U(t_{k+1}) − U(t_k)` over every integration step.
    pub max_lyapunov_increase: Option<f64>,
    pub final_lyapunov: Option<f64>,
    /// `‖ω(T) − ω* 1‖∞`
    pub omega_error: Option<f64>,
    /// `‖C P(T) − h*‖∞`
    pub flow_set_residual: Option<f64>,
    /// `‖P(T) − P*‖∞` against the reference member.
    pub flow_reference_error: Option<f64>,
    pub max_algebraic_residual: f64,
    pub max_energy_residual: f64,
    /// Largest spread (max − min) of any frequency or flow over the last
    /// tenth of the horizon.
    pub tail_variation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub lyapunov: Option<Vec<f64>>,
    pub kkt: Option<Vec<KktResiduals>>,
    pub diagnostics: LimitDiagnostics,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> &SystemState {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// Total cost `Σ c(d) + d̂²/(2D)` along the recorded samples.
    pub fn cost_series(&self, network: &Network) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| olc_objective(network, &s.d, &s.d_hat))
            .collect()
    }
}

/// Integrates from `initial` to the configured horizon.
pub fn simulate(
    network: &Network,
    initial: &InitialCondition,
    config: &IntegratorConfig,
    analysis: &Analysis,
) -> Result<Trajectory, DynamicsError> {
    config.validate()?;
    check_len("generator frequencies", network.generator_count(), initial.omega_g.len())?;
    check_len("line flows", network.line_count(), initial.flows.len())?;
    if let Some(r) = &analysis.reference {
        check_len("reference flows", network.line_count(), r.flows_star.len())?;
    }

    let n_steps = config.step_count();
    let update_every = config.steps_per_update();
    let tol = config.algebraic_tol;

    let mut state = match update_every {
        None => complete(network, 0.0, &initial.omega_g, &initial.flows, None, None, tol),
        Some(_) => {
            // loads sit at their nominal value until the first update at t = 0
            let nominal = vec![0.0; network.bus_count()];
            complete(network, 0.0, &initial.omega_g, &initial.flows, Some(&nominal), None, tol)
        }
    };

    let mut states = Vec::with_capacity(n_steps / config.decimation + 2);
    let mut lyapunov = analysis.reference.as_ref().map(|_| Vec::new());
    let mut kkt = analysis.kkt.then(Vec::new);
    let mut max_increase: Option<f64> = None;
    let mut max_algebraic = 0.0f64;
    let mut max_energy = 0.0f64;

    let mut record = |s: &SystemState| {
        if let (Some(series), Some(r)) = (lyapunov.as_mut(), analysis.reference.as_ref()) {
            series.push(lyapunov_value(s, r));
        }
        if let Some(series) = kkt.as_mut() {
            series.push(kkt_residuals(s, network));
        }
        max_algebraic = max_algebraic.max(algebraic_residual(network, s));
        max_energy = max_energy.max(energy_balance_residual(network, s));
        states.push(s.clone());
    };

    let mut u_prev = analysis.reference.as_ref().map(|r| lyapunov_value(&state, r));
    for k in 0..n_steps {
        if let Some(m) = update_every {
            if k % m == 0 {
                let measured: Vec<f64> = network
                    .buses()
                    .iter()
                    .zip(&state.omega)
                    .map(|(b, &w)| b.cost.load_response(w))
                    .collect();
                state = complete(network, state.t, &state.omega[..network.generator_count()], &state.flows, Some(&measured), None, tol);
            }
        }
        if k % config.decimation == 0 {
            record(&state);
        }
        let held = update_every.map(|_| state.d.clone());
        let mut next = rk4(network, &state, config.step, held.as_deref(), tol);
        next.t = (k + 1) as f64 * config.step;
        if !next.is_finite() {
            return Err(DynamicsError::Diverged { t: next.t });
        }
        if let (Some(r), Some(prev)) = (analysis.reference.as_ref(), u_prev) {
            let u = lyapunov_value(&next, r);
            let inc = u - prev;
            max_increase = Some(max_increase.map_or(inc, |m: f64| m.max(inc)));
            u_prev = Some(u);
        }
        state = next;
    }
    record(&state);

    let tail_start = config.horizon * (1.0 - TAIL_FRACTION);
    let tail: Vec<&SystemState> = states.iter().filter(|s| s.t >= tail_start - 1e-12).collect();
    let mut tail_variation = 0.0f64;
    let width = network.bus_count() + network.line_count();
    for c in 0..width {
        let value = |s: &SystemState| {
            if c < network.bus_count() {
                s.omega[c]
            } else {
                s.flows[c - network.bus_count()]
            }
        };
        let (lo, hi) = tail
            .iter()
            .map(|s| value(s))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        tail_variation = tail_variation.max(hi - lo);
    }

    let last = states.last().unwrap();
    let reference = analysis.reference.as_ref();
    let diagnostics = LimitDiagnostics {
        steps: n_steps,
        max_lyapunov_increase: max_increase,
        final_lyapunov: reference.map(|r| lyapunov_value(last, r)),
        omega_error: reference.map(|r| {
            last.omega
                .iter()
                .fold(0.0f64, |m, w| m.max((w - r.omega_star).abs()))
        }),
        flow_set_residual: reference.map(|r| {
            let h = network.net_outflow(&r.flows_star);
            FlowSet::membership_residual(network, &last.flows, &h)
        }),
        flow_reference_error: reference.map(|r| {
            last.flows
                .iter()
                .zip(&r.flows_star)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        }),
        max_algebraic_residual: max_algebraic,
        max_energy_residual: max_energy,
        tail_variation,
    };

    Ok(Trajectory {
        states,
        lyapunov,
        kkt,
        diagnostics,
    })
}
