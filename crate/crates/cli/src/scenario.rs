//! Scenario files: a strict JSON description of a network, its initial
//! condition, the integrator settings and which diagnostics to record.

use std::collections::BTreeMap;
use std::path::Path;

use olc_core::dynamics::{initial_flows_from_angles, DEFAULT_ALGEBRAIC_TOL};
use olc_core::{
    Bus, ControllerMode, CostFunction, InitialCondition, IntegratorConfig, LineParameters, LineSpec,
    Network,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub buses: Vec<BusEntry>,
    pub lines: Vec<LineEntry>,
    #[serde(default)]
    pub initial: InitialEntry,
    pub integrator: IntegratorEntry,
    #[serde(default)]
    pub analysis: AnalysisEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKindEntry {
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: usize,
    pub kind: BusKindEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    pub damping: f64,
    #[serde(default)]
    pub disturbance: f64,
    pub cost: CostEntry,
}

/// Quadratic disutility `d²/(2α)` on `[d_min, d_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    pub alpha: f64,
    pub d_min: f64,
    pub d_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub from: usize,
    pub to: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<LineParametersEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineParametersEntry {
    pub v_from: f64,
    pub v_to: f64,
    pub reactance: f64,
    pub theta_from: f64,
    pub theta_to: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEntry {
    /// Generator frequencies keyed by bus id; missing generators start at 0.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub omega_g: BTreeMap<usize, f64>,
    /// Omitted means zero flows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<FlowsEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowsEntry {
    /// One value per line, in file order.
    Explicit(Vec<f64>),
    /// Bus angles keyed by id (missing buses at 0); flows are `B (θ_from − θ_to)`.
    FromAngles(BTreeMap<usize, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorEntry {
    pub step: f64,
    pub horizon: f64,
    #[serde(default = "one")]
    pub decimation: usize,
    #[serde(default)]
    pub controller: ControllerEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebraic_tol: Option<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerEntry {
    #[default]
    Continuous,
    /// Zero-order hold; `interval` in seconds.
    Sampled { interval: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisEntry {
    #[serde(default = "yes")]
    pub lyapunov: bool,
    #[serde(default = "yes")]
    pub kkt: bool,
}

fn yes() -> bool {
    true
}

impl Default for AnalysisEntry {
    fn default() -> Self {
        Self { lyapunov: true, kkt: true }
    }
}

/// Command-line adjustments applied on top of a file's integrator block.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub decimation: Option<usize>,
    pub controller: Option<ControllerEntry>,
}

impl Overrides {
    pub fn apply(&self, file: &mut ScenarioFile) {
        let i = &mut file.integrator;
        if let Some(h) = self.step {
            i.step = h;
        }
        if let Some(t) = self.horizon {
            i.horizon = t;
        }
        if let Some(m) = self.decimation {
            i.decimation = m;
        }
        if let Some(c) = self.controller {
            i.controller = c;
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// Parses `continuous` or `sampled:<milliseconds>`.
pub fn parse_controller(s: &str) -> Result<ControllerEntry, String> {
    if s == "continuous" {
        return Ok(ControllerEntry::Continuous);
    }
    let ms = s
        .strip_prefix("sampled:")
        .ok_or_else(|| format!("expected `continuous` or `sampled:<ms>`, got {s:?}"))?;
    let ms: f64 = ms.parse().map_err(|e| format!("bad interval {ms:?}: {e}"))?;
    if !(ms.is_finite() && ms > 0.0) {
        return Err(format!("sampling interval must be positive, got {ms} ms"));
    }
    Ok(ControllerEntry::Sampled { interval: ms / 1000.0 })
}

/// A validated scenario, ready to solve or simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub file: ScenarioFile,
    pub network: Network,
    /// Internal (generators-first) order.
    pub initial: InitialCondition,
    pub config: IntegratorConfig,
    /// True when the initial flows came from angles or otherwise satisfy
    /// the cycle condition that angle-derived flows do.
    pub angle_consistent: bool,
    pub warnings: Vec<String>,
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioFile, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => CliError::schema(origin, field, inner),
            _ => CliError::Parse {
                path: origin.to_string(),
                message: inner.to_string(),
            },
        }
    })?;
    if file.version != FORMAT_VERSION {
        return Err(CliError::schema(
            origin,
            "version",
            format!("unsupported version {} (expected {FORMAT_VERSION})", file.version),
        ));
    }
    Ok(file)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    load_scenario_with(path, &Overrides::default())
}

pub fn load_scenario_with(path: &Path, overrides: &Overrides) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let origin = path.display().to_string();
    let mut file = parse_scenario(&text, &origin)?;
    overrides.apply(&mut file);
    let fallback = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Scenario::from_file(file, &origin, fallback)
}

pub fn to_json(file: &ScenarioFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("scenario serializes");
    s.push('\n');
    s
}

pub fn write_scenario(path: &Path, file: &ScenarioFile) -> Result<(), CliError> {
    std::fs::write(path, to_json(file)).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn build_network(file: &ScenarioFile, origin: &str) -> Result<Network, CliError> {
    let mut buses = Vec::with_capacity(file.buses.len());
    for (k, b) in file.buses.iter().enumerate() {
        let cost = CostFunction::quadratic(b.cost.alpha, b.cost.d_min, b.cost.d_max)
            .map_err(|e| CliError::validation(origin, format!("bus {} (buses[{k}].cost): {e}", b.id)))?;
        let bus = match (b.kind, b.inertia) {
            (BusKindEntry::Generator, Some(m)) => Bus::generator(b.id, m, b.damping, b.disturbance, cost),
            (BusKindEntry::Generator, None) => {
                return Err(CliError::validation(
                    origin,
                    format!("bus {} (buses[{k}]): generator bus needs an inertia", b.id),
                ))
            }
            (BusKindEntry::Load, None) => Bus::load(b.id, b.damping, b.disturbance, cost),
            (BusKindEntry::Load, Some(_)) => {
                return Err(CliError::validation(
                    origin,
                    format!("bus {} (buses[{k}]): load bus must not have an inertia", b.id),
                ))
            }
        };
        buses.push(bus);
    }
    let lines = file
        .lines
        .iter()
        .map(|l| LineSpec {
            from: l.from,
            to: l.to,
            stiffness: l.stiffness,
            parameters: l.parameters.map(|p| LineParameters {
                v_from: p.v_from,
                v_to: p.v_to,
                reactance: p.reactance,
                theta_from: p.theta_from,
                theta_to: p.theta_to,
            }),
        })
        .collect();
    Network::build(buses, lines).map_err(|e| CliError::validation(origin, e))
}

pub fn build_config(entry: &IntegratorEntry, origin: &str) -> Result<IntegratorConfig, CliError> {
    let controller = match entry.controller {
        ControllerEntry::Continuous => ControllerMode::Continuous,
        ControllerEntry::Sampled { interval } => ControllerMode::Sampled { interval },
    };
    let mut config = IntegratorConfig::new(entry.step, entry.horizon)
        .with_controller(controller)
        .with_decimation(entry.decimation);
    config.algebraic_tol = entry.algebraic_tol.unwrap_or(DEFAULT_ALGEBRAIC_TOL);
    config.validate().map_err(|e| CliError::from_dynamics(origin, e))?;
    Ok(config)
}

impl Scenario {
    pub fn from_file(file: ScenarioFile, origin: &str, fallback_name: Option<String>) -> Result<Self, CliError> {
        let network = build_network(&file, origin)?;
        let config = build_config(&file.integrator, origin)?;
        let mut warnings = Vec::new();

        let mut omega_g = vec![0.0; network.generator_count()];
        for (&id, &w) in &file.initial.omega_g {
            let field = format!("initial.omega_g.{id}");
            let idx = network
                .index_of(id)
                .ok_or_else(|| CliError::schema(origin, &field, format!("unknown bus {id}")))?;
            if idx >= network.generator_count() {
                return Err(CliError::schema(origin, &field, format!("bus {id} is not a generator")));
            }
            if !w.is_finite() {
                return Err(CliError::schema(origin, &field, "must be finite"));
            }
            omega_g[idx] = w;
        }

        let cycle_consistent = |flows: &[f64]| -> bool {
            // B⁻¹P must be a line difference of some angle vector: every
            // fundamental cycle sums to zero.
            let b = network.stiffnesses();
            network.fundamental_cycles().iter().all(|z| {
                let s: f64 = z.iter().zip(flows).zip(&b).map(|((zi, p), bi)| zi * p / bi).sum();
                let scale: f64 = z.iter().zip(flows).zip(&b).map(|((zi, p), bi)| (zi * p / bi).abs()).sum();
                s.abs() <= 1e-12 * scale.max(1.0)
            })
        };

        let (flows, angle_consistent) = match &file.initial.flows {
            None => (vec![0.0; network.line_count()], true),
            Some(FlowsEntry::Explicit(p)) => {
                if p.len() != network.line_count() {
                    return Err(CliError::schema(
                        origin,
                        "initial.flows.explicit",
                        format!("expected {} values (one per line), got {}", network.line_count(), p.len()),
                    ));
                }
                if p.iter().any(|x| !x.is_finite()) {
                    return Err(CliError::schema(origin, "initial.flows.explicit", "values must be finite"));
                }
                let consistent = cycle_consistent(p);
                if !consistent {
                    warnings.push(
                        "initial flows are not generated by any angle vector; \
                         the limit is a member of the equilibrium flow set other than the projection point"
                            .to_string(),
                    );
                }
                (p.clone(), consistent)
            }
            Some(FlowsEntry::FromAngles(theta)) => {
                let mut angles = vec![0.0; network.bus_count()];
                for (&id, &a) in theta {
                    let field = format!("initial.flows.from_angles.{id}");
                    let idx = network
                        .index_of(id)
                        .ok_or_else(|| CliError::schema(origin, &field, format!("unknown bus {id}")))?;
                    if !a.is_finite() {
                        return Err(CliError::schema(origin, &field, "must be finite"));
                    }
                    angles[idx] = a;
                }
                (initial_flows_from_angles(&network, &angles), true)
            }
        };

        let name = file
            .name
            .clone()
            .or(fallback_name)
            .unwrap_or_else(|| "scenario".to_string());
        Ok(Self {
            name,
            file,
            network,
            initial: InitialCondition { omega_g, flows },
            config,
            angle_consistent,
            warnings,
        })
    }
}
