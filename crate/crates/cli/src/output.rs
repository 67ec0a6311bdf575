//! JSON documents and the trajectory CSV.

use std::io::{self, Write};

use olc_core::olc::OlcSolution;
use olc_core::{Network, Trajectory};
use serde::{Deserialize, Serialize};

/// The `solve` output. Per-bus arrays follow the bus order of the input
/// file; per-line arrays follow its line order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDocument {
    pub case: String,
    pub bus_ids: Vec<usize>,
    pub lines: Vec<(usize, usize)>,
    pub nu_star: f64,
    pub d_star: Vec<f64>,
    pub d_hat_star: Vec<f64>,
    pub h_star: Vec<f64>,
    pub flow_point: Vec<f64>,
    pub null_basis: Vec<Vec<f64>>,
    pub objective: f64,
    pub warnings: Vec<String>,
}

pub fn bus_ids(network: &Network) -> Vec<usize> {
    network.to_input_order(&network.buses().iter().map(|b| b.id).collect::<Vec<_>>())
}

impl SolveDocument {
    pub fn new(case: &str, network: &Network, solution: &OlcSolution) -> Self {
        Self {
            case: case.to_string(),
            bus_ids: bus_ids(network),
            lines: network.lines().iter().map(|l| (l.from_id, l.to_id)).collect(),
            nu_star: solution.nu_star,
            d_star: network.to_input_order(&solution.d_star),
            d_hat_star: network.to_input_order(&solution.d_hat_star),
            h_star: network.to_input_order(&solution.h_star),
            flow_point: solution.flows.point.clone(),
            null_basis: solution.flows.null_basis.clone(),
            objective: solution.objective,
            warnings: solution.warnings.clone(),
        }
    }
}

pub fn csv_header(network: &Network) -> Vec<String> {
    let ids = bus_ids(network);
    let mut h = vec!["t".to_string()];
    h.extend(ids.iter().map(|i| format!("omega_{i}")));
    h.extend(network.lines().iter().map(|l| format!("P_{}-{}", l.from_id, l.to_id)));
    h.extend(ids.iter().map(|i| format!("d_{i}")));
    h.extend(ids.iter().map(|i| format!("dhat_{i}")));
    h.extend(["U", "kkt_stationarity", "kkt_sync"].map(String::from));
    h
}

/// 17 significant digits: enough to reproduce every `f64` exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes one row per recorded sample. Columns that were not computed
/// hold `NaN`.
pub fn write_csv<W: Write>(
    out: W,
    network: &Network,
    trajectory: &Trajectory,
    lyapunov: bool,
    kkt: bool,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(network))?;
    let mut row = Vec::new();
    for (k, s) in trajectory.states.iter().enumerate() {
        row.clear();
        row.push(s.t);
        row.extend(network.to_input_order(&s.omega));
        row.extend_from_slice(&s.flows);
        row.extend(network.to_input_order(&s.d));
        row.extend(network.to_input_order(&s.d_hat));
        let u = trajectory.lyapunov.as_ref().filter(|_| lyapunov).map(|u| u[k]);
        row.push(u.unwrap_or(f64::NAN));
        let r = trajectory.kkt.as_ref().filter(|_| kkt).map(|r| r[k]);
        row.push(r.map_or(f64::NAN, |r| r.stationarity));
        row.push(r.map_or(f64::NAN, |r| r.sync));
        w.write_record(row.iter().map(|&x| format_float(x)))?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Csv, String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| format!("row {}: {f:?}: {e}", k + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Csv { header, rows })
}
