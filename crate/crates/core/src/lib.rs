//! Load-side primary frequency control for power networks.
//!
//! The swing dynamics of a transmission network, closed with loads that
//! respond to local frequency through `d_j = [c_j'⁻¹(ω_j)]`, form a
//! primal-dual gradient flow for an optimal load control problem. This crate
//! provides both sides of that correspondence:
//!
//! - [`network`]: buses, lines, line stiffness and incidence matrices,
//! - [`costs`]: load disutility functions and the per-bus dual terms,
//! - [`olc`]: a centralized solver for the optimum and the equilibrium flow set,
//! - [`dynamics`]: an integrator for the closed-loop DAE with Lyapunov and
//!   KKT instrumentation,
//! - [`random`]: seeded random instances for tests and benchmarks.

pub mod costs;
pub mod dynamics;
pub mod network;
pub mod olc;
pub mod random;

pub use costs::{CostError, CostFunction, CustomCost, QuadraticCost};
pub use dynamics::{
    simulate, Analysis, ControllerMode, DynamicsError, EquilibriumReference, InitialCondition,
    IntegratorConfig, KktResiduals, SystemState, Trajectory,
};
pub use network::{compute_line_stiffness, Bus, BusKind, Line, LineParameters, LineSpec, Network, NetworkError};
pub use olc::{FlowSet, OlcError, OlcSolution};
