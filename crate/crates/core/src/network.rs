//! Transmission graph: buses, lines, incidence matrices and topology queries.
//!
//! Buses are stored internally with generators first so that frequency
//! vectors split cleanly into a generator block and a load block. The input
//! order is remembered for reporting.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::costs::CostFunction;

/// Relative tolerance when a line gives both a stiffness and the raw
/// parameters it is derived from.
pub const STIFFNESS_MATCH_RTOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("line reactance must be positive, got {0}")]
    NonPositiveReactance(f64),
    #[error("nominal angle difference {0} rad must be strictly inside (-pi/2, pi/2)")]
    AngleOutOfRange(f64),
    #[error("line stiffness must be positive and finite, got {0}")]
    NonPositiveStiffness(f64),
    #[error("bus id {0} appears more than once")]
    DuplicateBus(usize),
    #[error("line {line} references unknown bus {bus}")]
    UnknownBus { line: usize, bus: usize },
    #[error("line {line} connects bus {bus} to itself")]
    SelfLoop { line: usize, bus: usize },
    #[error("line {line} duplicates line ({from},{to})")]
    DuplicateLine { line: usize, from: usize, to: usize },
    #[error("line {line} is anti-parallel to line ({from},{to})")]
    AntiParallelLine { line: usize, from: usize, to: usize },
    #[error("line {line} ({from},{to}) has neither a stiffness nor line parameters")]
    MissingStiffness { line: usize, from: usize, to: usize },
    #[error("line {line} ({from},{to}): given stiffness {given} disagrees with {computed} computed from its parameters")]
    StiffnessMismatch {
        line: usize,
        from: usize,
        to: usize,
        given: f64,
        computed: f64,
    },
    #[error("line {line} ({from},{to}): {source}")]
    InvalidLine {
        line: usize,
        from: usize,
        to: usize,
        source: Box<NetworkError>,
    },
    #[error("bus {bus}: damping must be positive and finite, got {value}")]
    NonPositiveDamping { bus: usize, value: f64 },
    #[error("generator bus {bus}: inertia must be positive and finite, got {value}")]
    NonPositiveInertia { bus: usize, value: f64 },
    #[error("bus {bus}: disturbance must be finite, got {value}")]
    NonFiniteDisturbance { bus: usize, value: f64 },
    #[error("network has no generator bus")]
    NoGenerator,
    #[error("network is empty")]
    Empty,
    #[error("network is disconnected: bus {unreachable} cannot be reached from bus {root}")]
    Disconnected { root: usize, unreachable: usize },
}

/// Line stiffness `B = 3 |V_i| |V_j| cos(θ_i⁰ − θ_j⁰) / x` in watt per rad.
pub fn compute_line_stiffness(
    v_from: f64,
    v_to: f64,
    reactance: f64,
    theta_from: f64,
    theta_to: f64,
) -> Result<f64, NetworkError> {
    if !(reactance > 0.0 && reactance.is_finite()) {
        return Err(NetworkError::NonPositiveReactance(reactance));
    }
    let delta = theta_from - theta_to;
    if !(delta.abs() < FRAC_PI_2) {
        return Err(NetworkError::AngleOutOfRange(delta));
    }
    let b = 3.0 * (v_from * v_to) * delta.cos() / reactance;
    if !(b > 0.0 && b.is_finite()) {
        return Err(NetworkError::NonPositiveStiffness(b));
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BusKind {
    Generator { inertia: f64 },
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Aggregate damping `D` (generator friction plus frequency-sensitive load).
    pub damping: f64,
    /// Step disturbance `P_m`.
    pub disturbance: f64,
    pub cost: CostFunction,
}

impl Bus {
    pub fn generator(id: usize, inertia: f64, damping: f64, disturbance: f64, cost: CostFunction) -> Self {
        Self {
            id,
            kind: BusKind::Generator { inertia },
            damping,
            disturbance,
            cost,
        }
    }

    pub fn load(id: usize, damping: f64, disturbance: f64, cost: CostFunction) -> Self {
        Self {
            id,
            kind: BusKind::Load,
            damping,
            disturbance,
            cost,
        }
    }

    pub fn inertia(&self) -> Option<f64> {
        match self.kind {
            BusKind::Generator { inertia } => Some(inertia),
            BusKind::Load => None,
        }
    }

    pub fn is_generator(&self) -> bool {
        matches!(self.kind, BusKind::Generator { .. })
    }

    pub fn phi(&self, nu: f64) -> f64 {
        self.cost.phi_term(self.damping, self.disturbance, nu)
    }

    pub fn phi_derivative(&self, nu: f64) -> f64 {
        self.cost.phi_derivative(self.damping, self.disturbance, nu)
    }
}

/// Physical line data the stiffness is derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParameters {
    pub v_from: f64,
    pub v_to: f64,
    pub reactance: f64,
    pub theta_from: f64,
    pub theta_to: f64,
}

impl LineParameters {
    pub fn stiffness(&self) -> Result<f64, NetworkError> {
        compute_line_stiffness(self.v_from, self.v_to, self.reactance, self.theta_from, self.theta_to)
    }
}

/// A line as supplied by the caller, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    pub stiffness: Option<f64>,
    pub parameters: Option<LineParameters>,
}

impl LineSpec {
    pub fn with_stiffness(from: usize, to: usize, stiffness: f64) -> Self {
        Self {
            from,
            to,
            stiffness: Some(stiffness),
            parameters: None,
        }
    }

    pub fn with_parameters(from: usize, to: usize, parameters: LineParameters) -> Self {
        Self {
            from,
            to,
            stiffness: None,
            parameters: Some(parameters),
        }
    }
}

/// A validated, oriented line. `from`/`to` are internal bus indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub from_id: usize,
    pub to_id: usize,
    pub stiffness: f64,
    pub parameters: Option<LineParameters>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    generators: usize,
    /// `input_order[k]` is the internal index of the k-th bus as supplied.
    input_order: Vec<usize>,
    index: HashMap<usize, usize>,
    incidence: DMatrix<i32>,
}

impl Network {
    /// Validates buses and lines and assembles the incidence matrix.
    ///
    /// Line orientation is kept exactly as given.
    pub fn build(buses: Vec<Bus>, lines: Vec<LineSpec>) -> Result<Self, NetworkError> {
        if buses.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut seen = HashSet::new();
        for bus in &buses {
            if !seen.insert(bus.id) {
                return Err(NetworkError::DuplicateBus(bus.id));
            }
            if !(bus.damping > 0.0 && bus.damping.is_finite()) {
                return Err(NetworkError::NonPositiveDamping {
                    bus: bus.id,
                    value: bus.damping,
                });
            }
            if let BusKind::Generator { inertia } = bus.kind {
                if !(inertia > 0.0 && inertia.is_finite()) {
                    return Err(NetworkError::NonPositiveInertia {
                        bus: bus.id,
                        value: inertia,
                    });
                }
            }
            if !bus.disturbance.is_finite() {
                return Err(NetworkError::NonFiniteDisturbance {
                    bus: bus.id,
                    value: bus.disturbance,
                });
            }
        }

        // stable partition: generators first, input order within each group
        let mut order: Vec<usize> = (0..buses.len()).collect();
        order.sort_by_key(|&k| !buses[k].is_generator());
        let generators = buses.iter().filter(|b| b.is_generator()).count();
        if generators == 0 {
            return Err(NetworkError::NoGenerator);
        }
        let mut input_order = vec![0; buses.len()];
        for (internal, &k) in order.iter().enumerate() {
            input_order[k] = internal;
        }
        let mut slots: Vec<Option<Bus>> = buses.into_iter().map(Some).collect();
        let buses: Vec<Bus> = order.iter().map(|&k| slots[k].take().unwrap()).collect();
        let index: HashMap<usize, usize> = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();

        let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
        let mut validated = Vec::with_capacity(lines.len());
        for (k, spec) in lines.into_iter().enumerate() {
            let from = *index
                .get(&spec.from)
                .ok_or(NetworkError::UnknownBus { line: k, bus: spec.from })?;
            let to = *index
                .get(&spec.to)
                .ok_or(NetworkError::UnknownBus { line: k, bus: spec.to })?;
            if from == to {
                return Err(NetworkError::SelfLoop { line: k, bus: spec.from });
            }
            if pairs.contains_key(&(spec.from, spec.to)) {
                return Err(NetworkError::DuplicateLine {
                    line: k,
                    from: spec.from,
                    to: spec.to,
                });
            }
            if pairs.contains_key(&(spec.to, spec.from)) {
                return Err(NetworkError::AntiParallelLine {
                    line: k,
                    from: spec.to,
                    to: spec.from,
                });
            }
            pairs.insert((spec.from, spec.to), k);

            let wrap = |e: NetworkError| NetworkError::InvalidLine {
                line: k,
                from: spec.from,
                to: spec.to,
                source: Box::new(e),
            };
            let stiffness = match (spec.stiffness, spec.parameters) {
                (None, None) => {
                    return Err(NetworkError::MissingStiffness {
                        line: k,
                        from: spec.from,
                        to: spec.to,
                    })
                }
                (Some(b), None) => {
                    if !(b > 0.0 && b.is_finite()) {
                        return Err(wrap(NetworkError::NonPositiveStiffness(b)));
                    }
                    b
                }
                (given, Some(p)) => {
                    let computed = p.stiffness().map_err(wrap)?;
                    if let Some(b) = given {
                        if !((b - computed).abs() <= STIFFNESS_MATCH_RTOL * computed.abs()) {
                            return Err(NetworkError::StiffnessMismatch {
                                line: k,
                                from: spec.from,
                                to: spec.to,
                                given: b,
                                computed,
                            });
                        }
                    }
                    computed
                }
            };
            validated.push(Line {
                from,
                to,
                from_id: spec.from,
                to_id: spec.to,
                stiffness,
                parameters: spec.parameters,
            });
        }

        check_connected(&buses, &validated)?;

        let mut incidence = DMatrix::<i32>::zeros(buses.len(), validated.len());
        for (e, line) in validated.iter().enumerate() {
            incidence[(line.from, e)] = 1;
            incidence[(line.to, e)] = -1;
        }

        Ok(Self {
            buses,
            lines: validated,
            generators,
            input_order,
            index,
            incidence,
        })
    }

    /// Buses in internal order (generators first).
    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn generator_count(&self) -> usize {
        self.generators
    }

    pub fn load_count(&self) -> usize {
        self.buses.len() - self.generators
    }

    pub fn generators(&self) -> &[Bus] {
        &self.buses[..self.generators]
    }

    pub fn loads(&self) -> &[Bus] {
        &self.buses[self.generators..]
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Internal index of each bus in the order the buses were supplied.
    pub fn input_order(&self) -> &[usize] {
        &self.input_order
    }

    /// Reorders a per-bus vector from internal order back to input order.
    pub fn to_input_order<T: Clone>(&self, values: &[T]) -> Vec<T> {
        self.input_order.iter().map(|&i| values[i].clone()).collect()
    }

    /// `|N| × |E|` incidence matrix `C`: `+1` at the source row, `−1` at the sink row.
    pub fn incidence(&self) -> &DMatrix<i32> {
        &self.incidence
    }

    pub fn incidence_f64(&self) -> DMatrix<f64> {
        self.incidence.map(f64::from)
    }

    /// Generator rows `C_G` of the incidence matrix.
    pub fn generator_incidence(&self) -> DMatrix<f64> {
        self.incidence_f64().rows(0, self.generators).into_owned()
    }

    /// Load rows `C_L` of the incidence matrix.
    pub fn load_incidence(&self) -> DMatrix<f64> {
        self.incidence_f64()
            .rows(self.generators, self.load_count())
            .into_owned()
    }

    pub fn stiffnesses(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.stiffness).collect()
    }

    /// `C P`: outflow minus inflow at every bus.
    pub fn net_outflow(&self, flows: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.buses.len()];
        for (line, p) in self.lines.iter().zip(flows) {
            out[line.from] += p;
            out[line.to] -= p;
        }
        out
    }

    /// `Cᵀ ω`: frequency difference across each line.
    pub fn line_differences(&self, omega: &[f64]) -> Vec<f64> {
        self.lines.iter().map(|l| omega[l.from] - omega[l.to]).collect()
    }

    /// Connected with `|E| = |N| − 1`.
    pub fn is_tree(&self) -> bool {
        self.lines.len() + 1 == self.buses.len()
    }

    /// Dimension of the cycle space, `|E| − |N| + 1`.
    pub fn cycle_rank(&self) -> usize {
        self.lines.len() + 1 - self.buses.len()
    }

    /// Incidence matrix with the row of `dropped_bus` removed. Rows follow
    /// internal bus order.
    pub fn reduced_incidence(&self, dropped_bus: usize) -> Result<DMatrix<f64>, NetworkError> {
        let row = self
            .index_of(dropped_bus)
            .ok_or(NetworkError::UnknownBus {
                line: usize::MAX,
                bus: dropped_bus,
            })?;
        Ok(self.incidence_f64().remove_row(row))
    }

    /// Signed cycle vectors, one per non-tree line of a BFS spanning tree.
    /// Together they span the null space of `C`.
    pub fn fundamental_cycles(&self) -> Vec<Vec<f64>> {
        let n = self.buses.len();
        let mut adjacency = vec![Vec::new(); n];
        for (e, l) in self.lines.iter().enumerate() {
            adjacency[l.from].push(e);
            adjacency[l.to].push(e);
        }
        // parent[v] = (parent bus, line index)
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut depth = vec![usize::MAX; n];
        let mut in_tree = vec![false; self.lines.len()];
        let mut queue = VecDeque::from([0]);
        depth[0] = 0;
        while let Some(u) = queue.pop_front() {
            for &e in &adjacency[u] {
                let l = &self.lines[e];
                let v = if l.from == u { l.to } else { l.from };
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = Some((u, e));
                    in_tree[e] = true;
                    queue.push_back(v);
                }
            }
        }

        let mut cycles = Vec::new();
        for (e, l) in self.lines.iter().enumerate() {
            if in_tree[e] {
                continue;
            }
            // circulate from → to along e, then back to `from` through the tree
            let mut z = vec![0.0; self.lines.len()];
            z[e] = 1.0;
            let (mut a, mut b) = (l.to, l.from);
            // walk a up towards b, pushing flow a → parent; then b's side in reverse
            let mut tail = Vec::new();
            while a != b {
                if depth[a] >= depth[b] {
                    let (p, pe) = parent[a].unwrap();
                    z[pe] += if self.lines[pe].from == a { 1.0 } else { -1.0 };
                    a = p;
                } else {
                    let (p, pe) = parent[b].unwrap();
                    tail.push((p, b, pe));
                    b = p;
                }
            }
            for (p, child, pe) in tail {
                // flow p → child
                z[pe] += if self.lines[pe].from == p && self.lines[pe].to == child {
                    1.0
                } else {
                    -1.0
                };
            }
            cycles.push(z);
        }
        cycles
    }
}

fn check_connected(buses: &[Bus], lines: &[Line]) -> Result<(), NetworkError> {
    let n = buses.len();
    let mut adjacency = vec![Vec::new(); n];
    for l in lines {
        adjacency[l.from].push(l.to);
        adjacency[l.to].push(l.from);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(k) => Err(NetworkError::Disconnected {
            root: buses[0].id,
            unreachable: buses[k].id,
        }),
        None => Ok(()),
    }
}
