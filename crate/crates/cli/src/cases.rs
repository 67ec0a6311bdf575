//! Built-in case library. Each case is also shipped as a JSON file under
//! `cases/`; a test keeps the two in sync.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::scenario::{
    load_scenario_with, AnalysisEntry, BusEntry, BusKindEntry, ControllerEntry, CostEntry, FlowsEntry,
    InitialEntry, IntegratorEntry, LineEntry, LineParametersEntry, Overrides, Scenario, ScenarioFile,
    FORMAT_VERSION,
};

pub const CASE_DIR_ENV: &str = "OLC_SIM_CASE_DIR";

pub const BUILTIN: &[&str] = &[
    "n1_tree",
    "n1_clipped",
    "zero_disturbance",
    "star4_tree",
    "star4_random_init",
    "ring3_mesh",
    "ring3_consistent_init",
    "ring3_random_init",
    "mesh68_synthetic",
];

pub fn builtin(name: &str) -> Option<ScenarioFile> {
    let file = match name {
        "n1_tree" => n1_tree(),
        "n1_clipped" => n1_clipped(),
        "zero_disturbance" => zero_disturbance(),
        "star4_tree" => star4_tree(),
        "star4_random_init" => star4_random_init(),
        "ring3_mesh" => ring3_mesh(),
        "ring3_consistent_init" => ring3_consistent_init(),
        "ring3_random_init" => ring3_random_init(),
        "mesh68_synthetic" => mesh68_synthetic(),
        _ => return None,
    };
    Some(file)
}

/// Resolves `spec` as a file path, then as a file in `$OLC_SIM_CASE_DIR`,
/// then as a built-in case name. A trailing `.json` is optional for the
/// last two.
pub fn resolve(spec: &str, overrides: &Overrides) -> Result<Scenario, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        return load_scenario_with(path, overrides);
    }
    let stem = spec.strip_suffix(".json").unwrap_or(spec);
    if let Some(dir) = std::env::var_os(CASE_DIR_ENV) {
        let candidate = PathBuf::from(dir).join(format!("{stem}.json"));
        if candidate.is_file() {
            return load_scenario_with(&candidate, overrides);
        }
    }
    match builtin(stem) {
        Some(mut file) => {
            overrides.apply(&mut file);
            Scenario::from_file(file, &format!("built-in case {stem}"), Some(stem.to_string()))
        }
        None => Err(CliError::CaseNotFound(spec.to_string())),
    }
}

fn quad(alpha: f64, d_min: f64, d_max: f64) -> CostEntry {
    CostEntry { alpha, d_min, d_max }
}

fn generator(id: usize, inertia: f64, damping: f64, disturbance: f64, cost: CostEntry) -> BusEntry {
    BusEntry {
        id,
        kind: BusKindEntry::Generator,
        inertia: Some(inertia),
        damping,
        disturbance,
        cost,
    }
}

fn load(id: usize, damping: f64, disturbance: f64, cost: CostEntry) -> BusEntry {
    BusEntry {
        id,
        kind: BusKindEntry::Load,
        inertia: None,
        damping,
        disturbance,
        cost,
    }
}

fn line(from: usize, to: usize, stiffness: f64) -> LineEntry {
    LineEntry {
        from,
        to,
        stiffness: Some(stiffness),
        parameters: None,
    }
}

fn continuous(horizon: f64) -> IntegratorEntry {
    IntegratorEntry {
        step: 1e-3,
        horizon,
        decimation: 10,
        controller: ControllerEntry::Continuous,
        algebraic_tol: None,
    }
}

fn scenario(name: &str, description: &str, buses: Vec<BusEntry>, lines: Vec<LineEntry>, horizon: f64) -> ScenarioFile {
    ScenarioFile {
        version: FORMAT_VERSION,
        name: Some(name.to_string()),
        description: Some(description.to_string()),
        buses,
        lines,
        initial: InitialEntry::default(),
        integrator: continuous(horizon),
        analysis: AnalysisEntry::default(),
    }
}

fn n1_with(name: &str, description: &str, d_min: f64, d_max: f64, disturbance: f64, horizon: f64) -> ScenarioFile {
    let cost = quad(1.0, d_min, d_max);
    let mut l = line(1, 2, 6.0);
    // 3 · 1 · 1 · cos 0 / 0.5 = 6
    l.parameters = Some(LineParametersEntry {
        v_from: 1.0,
        v_to: 1.0,
        reactance: 0.5,
        theta_from: 0.0,
        theta_to: 0.0,
    });
    scenario(
        name,
        description,
        vec![generator(1, 1.0, 1.0, disturbance, cost), load(2, 1.0, 0.0, cost)],
        vec![l],
        horizon,
    )
}

pub fn n1_tree() -> ScenarioFile {
    n1_with(
        "n1_tree",
        "Generator and load bus joined by one line; unit step at the generator. nu* = 0.25.",
        -10.0,
        10.0,
        1.0,
        20.0,
    )
}

pub fn n1_clipped() -> ScenarioFile {
    n1_with(
        "n1_clipped",
        "n1_tree with load bounds [-0.1, 0.1]; both loads saturate and nu* = 0.4.",
        -0.1,
        0.1,
        1.0,
        20.0,
    )
}

pub fn zero_disturbance() -> ScenarioFile {
    n1_with(
        "zero_disturbance",
        "n1_tree without a disturbance; everything stays at zero.",
        -10.0,
        10.0,
        0.0,
        5.0,
    )
}

pub fn star4_tree() -> ScenarioFile {
    scenario(
        "star4_tree",
        "Four-bus star around generator 1; bus 3 has narrow load bounds.",
        vec![
            generator(1, 1.0, 1.0, 0.3, quad(1.0, -10.0, 10.0)),
            generator(2, 0.8, 1.2, 1.0, quad(1.5, -10.0, 10.0)),
            load(3, 1.0, -0.5, quad(1.0, -0.1, 0.1)),
            load(4, 0.8, 0.4, quad(2.0, -10.0, 10.0)),
        ],
        vec![line(1, 2, 5.0), line(1, 3, 4.0), line(4, 1, 6.0)],
        20.0,
    )
}

pub fn star4_random_init() -> ScenarioFile {
    let mut s = star4_tree();
    s.name = Some("star4_random_init".into());
    s.description = Some("star4_tree started from arbitrary frequencies and flows.".into());
    s.initial = InitialEntry {
        omega_g: BTreeMap::from([(1, 0.2), (2, -0.15)]),
        flows: Some(FlowsEntry::Explicit(vec![0.7, -0.4, 0.25])),
    };
    s.integrator.horizon = 30.0;
    s
}

pub fn ring3_mesh() -> ScenarioFile {
    let cost = quad(1.0, -10.0, 10.0);
    scenario(
        "ring3_mesh",
        "Three-bus ring: two generators and one load. nu* = 0.25, one cycle.",
        vec![
            generator(1, 1.0, 1.0, 1.5, cost),
            generator(2, 1.0, 1.0, 0.0, cost),
            load(3, 1.0, 0.0, cost),
        ],
        vec![line(1, 2, 6.0), line(2, 3, 6.0), line(1, 3, 6.0)],
        20.0,
    )
}

pub fn ring3_consistent_init() -> ScenarioFile {
    let mut s = ring3_mesh();
    s.name = Some("ring3_consistent_init".into());
    s.description = Some("ring3_mesh with flows generated by nonzero bus angles; the limit is the projection point.".into());
    s.initial.flows = Some(FlowsEntry::FromAngles(BTreeMap::from([(1, 0.05), (2, -0.02), (3, 0.0)])));
    s
}

pub fn ring3_random_init() -> ScenarioFile {
    let mut s = ring3_mesh();
    s.name = Some("ring3_random_init".into());
    s.description = Some(
        "ring3_mesh with flows that no angle vector generates; the limit is another member of the flow set."
            .into(),
    );
    s.initial = InitialEntry {
        omega_g: BTreeMap::from([(1, 0.1), (2, -0.1)]),
        flows: Some(FlowsEntry::Explicit(vec![0.3, -0.2, 0.4])),
    };
    s
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// A synthetic 68-bus, 16-generator system in five areas: load buses
/// 1–52, generators 53–68 each on its own line. Parameters are drawn
/// from a fixed seed and rounded so the JSON file stays readable.
///
/// The 30 controllable loads sit at the load buses with the largest
/// `ΣB/D`. A weakly coupled load bus under 250 ms sampling sees its own
/// held load in its frequency and can lock into a period-two toggle
/// between the bounds; strongly coupled buses relax within one interval.
pub fn mesh68_synthetic() -> ScenarioFile {
    let mut rng = ChaCha8Rng::seed_from_u64(68);
    let area_loads = [17usize, 12, 9, 7, 7];
    let area_gens = [8usize, 4, 2, 1, 1];
    let stiffness = |rng: &mut ChaCha8Rng| round3(rng.random_range(10.0..40.0));
    let has = |lines: &[LineEntry], a: usize, b: usize| {
        lines
            .iter()
            .any(|l| (l.from, l.to) == (a, b) || (l.from, l.to) == (b, a))
    };

    let mut buses = Vec::new();
    let mut lines: Vec<LineEntry> = Vec::new();
    let mut first_load = Vec::new();
    let mut next = 1;
    let fixed = quad(100.0, 0.0, 0.0);
    for &n in &area_loads {
        first_load.push(next);
        for k in 0..n {
            let id = next + k;
            let damping = round3(rng.random_range(0.5..1.5));
            let disturbance = if [1, 7, 27].contains(&id) { -1.0 } else { 0.0 };
            buses.push(load(id, damping, disturbance, fixed));
            if k > 0 {
                let parent = next + rng.random_range(0..k);
                let b = stiffness(&mut rng);
                lines.push(line(parent, id, b));
            }
        }
        // a few intra-area loops
        for _ in 0..n / 4 {
            let a = next + rng.random_range(0..n);
            let b = next + rng.random_range(0..n);
            if a != b && !has(&lines, a, b) {
                let s = stiffness(&mut rng);
                lines.push(line(a, b, s));
            }
        }
        next += n;
    }
    // inter-area ties
    for (x, y) in [(0usize, 1usize), (0, 1), (1, 2), (0, 3), (0, 4), (3, 4), (2, 4)] {
        let a = first_load[x] + rng.random_range(0..area_loads[x]);
        let b = first_load[y] + rng.random_range(0..area_loads[y]);
        if !has(&lines, a, b) {
            let s = stiffness(&mut rng);
            lines.push(line(a, b, s));
        }
    }
    let mut id = 53;
    for (area, &g) in area_gens.iter().enumerate() {
        for _ in 0..g {
            let inertia = round3(rng.random_range(3.0..8.0));
            let damping = round3(rng.random_range(3.0..5.0));
            buses.push(generator(id, inertia, damping, 0.0, fixed));
            let to = first_load[area] + rng.random_range(0..area_loads[area]);
            let s = stiffness(&mut rng);
            lines.push(line(id, to, s));
            id += 1;
        }
    }

    let mut coupling = vec![0.0; buses.len() + 1];
    for l in &lines {
        let b = l.stiffness.unwrap();
        coupling[l.from] += b;
        coupling[l.to] += b;
    }
    let mut ranked: Vec<usize> = (0..buses.len())
        .filter(|&k| buses[k].kind == BusKindEntry::Load)
        .collect();
    ranked.sort_by(|&a, &b| {
        let ra = coupling[buses[a].id] / buses[a].damping;
        let rb = coupling[buses[b].id] / buses[b].damping;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in &ranked[..30] {
        buses[k].cost = quad(100.0, -0.05, 0.05);
    }

    ScenarioFile {
        version: FORMAT_VERSION,
        name: Some("mesh68_synthetic".into()),
        description: Some(
            "Synthetic 68-bus, 16-generator meshed system. 30 controllable loads with alpha = 100 and \
             bounds +-0.05, unit load increases at buses 1, 7 and 27, loads updated every 250 ms. \
             Parameters are synthetic."
                .into(),
        ),
        buses,
        lines,
        initial: InitialEntry::default(),
        integrator: IntegratorEntry {
            step: 0.005,
            horizon: 40.0,
            decimation: 10,
            controller: ControllerEntry::Sampled { interval: 0.25 },
            algebraic_tol: None,
        },
        analysis: AnalysisEntry::default(),
    }
}
