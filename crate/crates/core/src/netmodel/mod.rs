//! Network topology and admittance structures.
//!
//! Bus and branch data are held in case units (MW, MVAr, per-unit impedances on
//! the system base) so that a model survives a write/parse cycle bit for bit.
//! Per-unit injections are derived on demand.

mod case;

pub use case::{parse_case, write_case};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bundled IEEE 39-bus New England system.
pub const IEEE39_CASE: &str = include_str!("../../data/case39.m");

/// Parses the bundled IEEE 39-bus case.
pub fn ieee39() -> NetworkModel {
    parse_case(IEEE39_CASE).expect("bundled case39 is valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Reference,
    Generator,
    Load,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// Dense 1-based index.
    pub id: usize,
    /// Bus number as written in the case file.
    pub external_id: u64,
    pub kind: BusKind,
    /// Real and reactive demand, MW / MVAr.
    pub pd: f64,
    pub qd: f64,
    /// Aggregated in-service generation, MW / MVAr.
    pub pg: f64,
    pub qg: f64,
    /// Shunt conductance / susceptance, MW / MVAr demanded at V = 1 p.u.
    pub gs: f64,
    pub bs: f64,
    /// Voltage magnitude setpoint, p.u. Only binding for reference and generator buses.
    pub v_setpoint: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Dense 1-based line index.
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b_charging: f64,
    /// Off-nominal turns ratio at the from end; 1.0 for lines.
    pub tap: f64,
    pub in_service: bool,
}

impl Branch {
    /// Series admittance `1 / (r + jx)`.
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelData {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
}

/// Validated network with its bus admittance matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelData", into = "ModelData")]
pub struct NetworkModel {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    reference: usize,
    ybus: DMatrix<Complex64>,
}

impl TryFrom<ModelData> for NetworkModel {
    type Error = Error;

    fn try_from(data: ModelData) -> Result<Self> {
        NetworkModel::new(data.base_mva, data.buses, data.branches)
    }
}

impl From<NetworkModel> for ModelData {
    fn from(model: NetworkModel) -> Self {
        ModelData {
            base_mva: model.base_mva,
            buses: model.buses,
            branches: model.branches,
        }
    }
}

/// Connected components of the in-service branch graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Islands {
    pub count: usize,
    /// Component label per bus (0-based bus index), numbered in order of first appearance.
    pub labels: Vec<usize>,
}

impl NetworkModel {
    /// Validates bus/branch data and assembles the admittance matrix.
    ///
    /// Bus ids must already be dense (`buses[i].id == i + 1`), and branch ids
    /// likewise. Use [`parse_case`] to build a model from case text.
    pub fn new(base_mva: f64, buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(Error::Case(format!("baseMVA must be positive, got {base_mva}")));
        }
        if buses.is_empty() {
            return Err(Error::Case("case has no buses".into()));
        }
        for (i, bus) in buses.iter().enumerate() {
            if bus.id != i + 1 {
                return Err(Error::Case(format!(
                    "bus ids must be dense: position {} holds id {}",
                    i + 1,
                    bus.id
                )));
            }
            let values = [bus.pd, bus.qd, bus.pg, bus.qg, bus.gs, bus.bs, bus.v_setpoint];
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Case(format!("bus {} has non-finite data", bus.external_id)));
            }
            if bus.kind != BusKind::Load && bus.v_setpoint <= 0.0 {
                return Err(Error::Case(format!(
                    "bus {} has a non-positive voltage setpoint",
                    bus.external_id
                )));
            }
        }
        let references: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Reference)
            .map(|(i, _)| i)
            .collect();
        let reference = match references.as_slice() {
            [] => return Err(Error::Case("no reference bus".into())),
            [only] => *only,
            many => {
                let ids: Vec<String> = many
                    .iter()
                    .map(|&i| buses[i].external_id.to_string())
                    .collect();
                return Err(Error::Case(format!(
                    "more than one reference bus: {}",
                    ids.join(", ")
                )));
            }
        };
        let n = buses.len();
        for (l, br) in branches.iter().enumerate() {
            if br.id != l + 1 {
                return Err(Error::Case(format!(
                    "branch ids must be dense: position {} holds id {}",
                    l + 1,
                    br.id
                )));
            }
            for end in [br.from_bus, br.to_bus] {
                if end == 0 || end > n {
                    return Err(Error::UnknownBus {
                        bus: end as u64,
                        context: format!("branch {}", br.id),
                    });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::Case(format!("branch {} is a self-loop", br.id)));
            }
            if ![br.r, br.x, br.b_charging, br.tap].iter().all(|v| v.is_finite()) {
                return Err(Error::Case(format!("branch {} has non-finite data", br.id)));
            }
            if br.tap <= 0.0 {
                return Err(Error::Case(format!("branch {} has a non-positive tap ratio", br.id)));
            }
            if br.in_service && br.x == 0.0 {
                return Err(Error::Case(format!("branch {} has zero reactance", br.id)));
            }
            if br.in_service && !br.series_admittance().is_finite() {
                return Err(Error::Case(format!("branch {} has infinite admittance", br.id)));
            }
        }
        let mut model = NetworkModel {
            base_mva,
            buses,
            branches,
            reference,
            ybus: DMatrix::zeros(0, 0),
        };
        model.ybus = model.build_admittance();
        Ok(model)
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.branches.len()
    }

    /// 0-based index of the reference bus.
    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Cached bus admittance matrix.
    pub fn admittance(&self) -> &DMatrix<Complex64> {
        &self.ybus
    }

    /// Assembles the bus admittance matrix from the branch list.
    ///
    /// Series terms follow `M diag(y) M^T`; half line charging, off-nominal
    /// taps and bus shunts are added per the standard pi model.
    pub fn build_admittance(&self) -> DMatrix<Complex64> {
        let n = self.n_buses();
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (br.from_bus - 1, br.to_bus - 1);
            let ys = br.series_admittance();
            let half_b = Complex64::new(0.0, br.b_charging / 2.0);
            y[(f, f)] += (ys + half_b) / (br.tap * br.tap);
            y[(t, t)] += ys + half_b;
            y[(f, t)] -= ys / br.tap;
            y[(t, f)] -= ys / br.tap;
        }
        for (i, bus) in self.buses.iter().enumerate() {
            y[(i, i)] += Complex64::new(bus.gs, bus.bs) / self.base_mva;
        }
        y
    }

    /// Signed N x L incidence matrix: +1 at the from bus, -1 at the to bus.
    ///
    /// Out-of-service branches keep their column; their admittance is zero instead.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_buses(), self.n_lines());
        for (l, br) in self.branches.iter().enumerate() {
            m[(br.from_bus - 1, l)] = 1.0;
            m[(br.to_bus - 1, l)] = -1.0;
        }
        m
    }

    /// Per-line series admittances, zero for lines out of service.
    pub fn series_admittances(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.n_lines(),
            self.branches.iter().map(|br| {
                if br.in_service {
                    br.series_admittance()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        )
    }

    /// Net scheduled real injections, p.u.
    pub fn p_injection(&self) -> Vec<f64> {
        self.buses
            .iter()
            .map(|b| (b.pg - b.pd) / self.base_mva)
            .collect()
    }

    /// Net scheduled reactive injections, p.u.
    pub fn q_injection(&self) -> Vec<f64> {
        self.buses
            .iter()
            .map(|b| (b.qg - b.qd) / self.base_mva)
            .collect()
    }

    /// 0-based indices of buses carrying a non-zero demand.
    pub fn load_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.pd != 0.0 || b.qd != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy with the given lines out of service and the admittance rebuilt.
    pub fn remove_lines(&self, lines: &[usize]) -> Result<NetworkModel> {
        let mut out = self.clone();
        for &id in lines {
            if id == 0 || id > out.branches.len() {
                return Err(Error::UnknownLine(id));
            }
            out.branches[id - 1].in_service = false;
        }
        out.ybus = out.build_admittance();
        Ok(out)
    }

    /// Copy with every bus demand multiplied by its factor (one per bus).
    pub fn scale_loads(&self, factors: &[f64]) -> Result<NetworkModel> {
        if factors.len() != self.n_buses() {
            return Err(Error::Dimension(format!(
                "{} load factors for {} buses",
                factors.len(),
                self.n_buses()
            )));
        }
        let mut out = self.clone();
        for (bus, &f) in out.buses.iter_mut().zip(factors) {
            bus.pd *= f;
            bus.qd *= f;
        }
        Ok(out)
    }

    pub fn count_islands(&self) -> Islands {
        let n = self.n_buses();
        let mut adjacency = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service) {
            adjacency[br.from_bus - 1].push(br.to_bus - 1);
            adjacency[br.to_bus - 1].push(br.from_bus - 1);
        }
        let mut labels = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if labels[start] != usize::MAX {
                continue;
            }
            labels[start] = count;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in &adjacency[u] {
                    if labels[v] == usize::MAX {
                        labels[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        Islands { count, labels }
    }

    pub fn is_connected(&self) -> bool {
        self.count_islands().count == 1
    }

    /// Canonical JSON document (buses, branches, base) for golden comparisons.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    /// Dense bus index (1-based) for an external bus number.
    pub fn bus_by_external(&self, external: u64) -> Option<usize> {
        self.buses
            .iter()
            .find(|b| b.external_id == external)
            .map(|b| b.id)
    }
}
