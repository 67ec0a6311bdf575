mod common;

use olc_core::dynamics::{
    energy_balance_residual, initial_flows_from_angles, kkt_residuals, rhs, simulate, Analysis,
    EquilibriumReference, InitialCondition, IntegratorConfig, SystemState, ALGEBRAIC_RESIDUAL_TOL,
};
use olc_core::olc::{self, FlowSet};
use olc_core::random::RandomNetwork;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{max_abs_diff, n1, ring3};

fn run(net: &olc_core::Network, init: &InitialCondition, h: f64, horizon: f64, reference: Option<EquilibriumReference>) -> olc_core::Trajectory {
    let cfg = IntegratorConfig::new(h, horizon).with_decimation(10);
    simulate(net, init, &cfg, &Analysis { reference, kkt: true }).unwrap()
}

#[test]
fn n1_converges_to_olc_optimum() {
    let net = n1(-10.0, 10.0, 1.0);
    let sol = olc::solve(&net).unwrap();
    let reference = EquilibriumReference::from_solution(&net, &sol).unwrap();
    let traj = run(&net, &InitialCondition::zero(&net), 1e-3, 20.0, Some(reference));
    let last = traj.final_state();
    assert!(last.omega.iter().all(|w| (w - 0.25).abs() <= 1e-6));
    assert!((last.flows[0] - 0.5).abs() <= 1e-6);
    let d = traj.diagnostics;
    assert!(d.max_lyapunov_increase.unwrap() <= 1e-8);
    assert!(d.final_lyapunov.unwrap() <= 1e-10);
    assert!(d.tail_variation <= 1e-8);
    assert!(d.max_algebraic_residual <= ALGEBRAIC_RESIDUAL_TOL);
    assert!(d.max_energy_residual <= 1e-9);
}

#[test]
fn clipped_n1_converges() {
    let net = n1(-0.1, 0.1, 1.0);
    let sol = olc::solve(&net).unwrap();
    let reference = EquilibriumReference::from_solution(&net, &sol).unwrap();
    let traj = run(&net, &InitialCondition::zero(&net), 1e-3, 30.0, Some(reference));
    assert!(traj.diagnostics.omega_error.unwrap() <= 1e-6);
    assert!(traj.diagnostics.max_lyapunov_increase.unwrap() <= 1e-8);
    assert!(max_abs_diff(&traj.final_state().d, &[0.1, 0.1]) <= 1e-6);
}

#[test]
fn lyapunov_decreases_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let gen = RandomNetwork::default().with_buses(2, 6);
    for _ in 0..20 {
        let net = gen.sample(&mut rng);
        let sol = olc::solve(&net).unwrap();
        // center U on a random member of the equilibrium set
        let mut member = sol.flows.point.clone();
        for z in &sol.flows.null_basis {
            let c = rng.random_range(-1.0..1.0);
            for (m, zi) in member.iter_mut().zip(z) {
                *m += c * zi;
            }
        }
        let reference = EquilibriumReference::with_flows(&net, sol.nu_star, member).unwrap();
        let init = InitialCondition {
            omega_g: (0..net.generator_count()).map(|_| rng.random_range(-0.5..0.5)).collect(),
            flows: (0..net.line_count()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let traj = run(&net, &init, 1e-3, 2.0, Some(reference));
        assert!(traj.diagnostics.max_lyapunov_increase.unwrap() <= 1e-8);
        assert!(traj.diagnostics.max_energy_residual <= 1e-9);
        assert!(traj.diagnostics.max_algebraic_residual <= ALGEBRAIC_RESIDUAL_TOL);
    }
}

#[test]
fn equilibrium_iff_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let gen = RandomNetwork::default();
    for _ in 0..50 {
        let net = gen.sample(&mut rng);
        let sol = olc::solve(&net).unwrap();
        let eq = EquilibriumReference::from_solution(&net, &sol).unwrap().state(&net);
        let (wd, pd) = rhs(&net, &eq);
        assert!(wd.iter().chain(&pd).all(|x| x.abs() <= 1e-9));
        let k = kkt_residuals(&eq, &net);
        assert!(k.stationarity <= 1e-9 && k.sync <= 1e-9);

        // a random state: if the derivatives vanish then so do the residuals, and conversely
        let omega_g: Vec<f64> = (0..net.generator_count()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let flows: Vec<f64> = (0..net.line_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = SystemState::new(&net, 0.0, &omega_g, &flows, 1e-13).unwrap();
        let (wd, pd) = rhs(&net, &s);
        let moving = wd.iter().chain(&pd).fold(0.0f64, |m, x| m.max(x.abs()));
        let k = kkt_residuals(&s, &net);
        assert!(moving > 1e-6);
        assert!(k.stationarity.max(k.sync) > 1e-6);
        assert!(energy_balance_residual(&net, &s) <= 1e-9);
    }
}

#[test]
fn tree_limit_is_unique() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let net = RandomNetwork::default().trees().with_buses(3, 5).sample(&mut rng);
    let sol = olc::solve(&net).unwrap();
    let reference = EquilibriumReference::from_solution(&net, &sol).unwrap();
    for _ in 0..3 {
        let init = InitialCondition {
            omega_g: (0..net.generator_count()).map(|_| rng.random_range(-0.5..0.5)).collect(),
            flows: (0..net.line_count()).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let traj = run(&net, &init, 1e-2, 200.0, Some(reference.clone()));
        assert!(traj.diagnostics.flow_reference_error.unwrap() <= 1e-6, "{:?}", traj.diagnostics);
        assert!(traj.diagnostics.omega_error.unwrap() <= 1e-6);
    }
}

#[test]
fn mesh_limits_follow_cycle_invariants() {
    let net = ring3([1.5, -0.2, 0.0]);
    let sol = olc::solve(&net).unwrap();

    // flows from angles end at the projection point
    let theta = [0.05, -0.02, 0.0];
    let p0 = initial_flows_from_angles(&net, &theta);
    let cycle = p0[0] / 6.0 + p0[1] / 6.0 - p0[2] / 6.0;
    assert!(cycle.abs() < 1e-15);
    let init = InitialCondition { omega_g: vec![0.0, 0.0], flows: p0 };
    let reference = EquilibriumReference::from_solution(&net, &sol).unwrap();
    let traj = run(&net, &init, 1e-3, 20.0, Some(reference));
    assert!(traj.diagnostics.flow_reference_error.unwrap() <= 1e-6);

    // arbitrary flows end at a different member, predicted by the cycle invariant
    let init = InitialCondition { omega_g: vec![0.1, -0.1], flows: vec![0.3, -0.2, 0.4] };
    let target = sol.flows.member_reached_from(&net, &init.flows);
    assert!(max_abs_diff(&target, &sol.flows.point) > 1e-3);
    let reference = EquilibriumReference::with_flows(&net, sol.nu_star, target).unwrap();
    let traj = run(&net, &init, 1e-3, 20.0, Some(reference));
    let last = traj.final_state();
    assert!(FlowSet::membership_residual(&net, &last.flows, &sol.h_star) <= 1e-6);
    assert!(traj.diagnostics.flow_reference_error.unwrap() <= 1e-6);
    assert!(traj.diagnostics.max_lyapunov_increase.unwrap() <= 1e-8);
}

#[test]
fn rk4_is_fourth_order() {
    let net = n1(-10.0, 10.0, 1.0);
    let endpoint = |h: f64| {
        let cfg = IntegratorConfig::new(h, 1.0);
        let t = simulate(&net, &InitialCondition::zero(&net), &cfg, &Analysis::default()).unwrap();
        let s = t.final_state().clone();
        (s.omega[0], s.flows[0])
    };
    let reference = endpoint(1e-3);
    let err = |h: f64| {
        let (w, p) = endpoint(h);
        (w - reference.0).abs().max((p - reference.1).abs())
    };
    let order = (err(0.1) / err(0.05)).log2();
    assert!((3.5..=4.5).contains(&order), "order = {order}");
}
