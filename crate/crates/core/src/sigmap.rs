//! Outage signature maps `F = S J^-1 M`.
//!
//! Column `l` of the map is the angle change the PMUs would see for a unit
//! real-power transfer across line `l` (injection at its from bus, withdrawal
//! at its to bus). The per-line transfer magnitude is left to the regression.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::NetworkModel;
use crate::powerflow::{jacobian_at, SteadyState};

/// Condition number beyond which the sensitivity matrix is treated as singular.
const MAX_CONDITION: f64 = 1e14;

/// Buses carrying a PMU, as sorted dense 1-based ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmuPlacement {
    buses: Vec<usize>,
}

impl PmuPlacement {
    pub fn new(mut buses: Vec<usize>, n_buses: usize) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::Placement("no PMU buses".into()));
        }
        buses.sort_unstable();
        if let Some(w) = buses.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Placement(format!("bus {} listed twice", w[0])));
        }
        if let Some(&bad) = buses.iter().find(|&&b| b == 0 || b > n_buses) {
            return Err(Error::Placement(format!("bus {bad} outside 1..={n_buses}")));
        }
        Ok(PmuPlacement { buses })
    }

    pub fn buses(&self) -> &[usize] {
        &self.buses
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    /// Built from the AC power-flow Jacobian at an operating point.
    Ac,
    /// Built from the DC susceptance matrix.
    Dc,
    /// Read from an external source.
    External,
}

/// K x L outage signature map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureMap {
    pub f: DMatrix<f64>,
    pub placement: PmuPlacement,
    /// Line id of each column.
    pub line_ids: Vec<usize>,
    pub kind: MapKind,
    pub operating_point: Option<SteadyState>,
}

impl SignatureMap {
    pub fn n_pmus(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_lines(&self) -> usize {
        self.f.ncols()
    }
}

/// Angle response of all N buses to a unit transfer across every line.
///
/// Placement-independent, so it is built once per operating point and
/// row-selected for each placement.
#[derive(Clone, Debug)]
pub struct AngleResponse {
    /// N x L; the reference bus row is identically zero.
    pub full: DMatrix<f64>,
    pub kind: MapKind,
    pub operating_point: Option<SteadyState>,
}

impl AngleResponse {
    /// Selects the PMU rows.
    pub fn select(&self, placement: &PmuPlacement) -> Result<SignatureMap> {
        let n = self.full.nrows();
        if let Some(&bad) = placement.buses().iter().find(|&&b| b > n) {
            return Err(Error::Placement(format!("bus {bad} outside a {n}-bus map")));
        }
        let rows: Vec<usize> = placement.buses().iter().map(|b| b - 1).collect();
        Ok(SignatureMap {
            f: self.full.select_rows(&rows),
            placement: placement.clone(),
            line_ids: (1..=self.full.ncols()).collect(),
            kind: self.kind,
            operating_point: self.operating_point.clone(),
        })
    }
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `J X = M` with the reference row deleted from `M`, then re-inserts a
/// zero reference row.
fn unit_transfer_response(model: &NetworkModel, sensitivity: &DMatrix<f64>, buses: &[usize]) -> Result<DMatrix<f64>> {
    let condition = condition_number(sensitivity);
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularSensitivity { condition });
    }
    let incidence = model.incidence();
    let reduced = incidence.select_rows(buses);
    let solved = sensitivity
        .clone()
        .lu()
        .solve(&reduced)
        .ok_or(Error::SingularSensitivity { condition })?;
    let mut full = DMatrix::zeros(model.n_buses(), model.n_lines());
    for (r, &bus) in buses.iter().enumerate() {
        full.row_mut(bus).copy_from(&solved.row(r));
    }
    Ok(full)
}

/// AC response `J^-1 M` at a converged operating point.
pub fn ac_response(model: &NetworkModel, state: &SteadyState) -> Result<AngleResponse> {
    if !state.converged {
        return Err(Error::NotConverged {
            iterations: state.iterations,
            residual: state.residual,
        });
    }
    let blocks = jacobian_at(model, state)?;
    Ok(AngleResponse {
        full: unit_transfer_response(model, &blocks.j1, &blocks.buses)?,
        kind: MapKind::Ac,
        operating_point: Some(state.clone()),
    })
}

/// Reference-reduced DC power-flow matrix built from in-service `1/x` terms.
pub fn dc_susceptance(model: &NetworkModel) -> (DMatrix<f64>, Vec<usize>) {
    let n = model.n_buses();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for br in model.branches().iter().filter(|b| b.in_service) {
        let (f, t) = (br.from_bus - 1, br.to_bus - 1);
        let s = 1.0 / br.x;
        b[(f, f)] += s;
        b[(t, t)] += s;
        b[(f, t)] -= s;
        b[(t, f)] -= s;
    }
    let buses: Vec<usize> = (0..n).filter(|&i| i != model.reference()).collect();
    (b.select_rows(&buses).select_columns(&buses), buses)
}

/// DC response `B'^-1 M`.
pub fn dc_response(model: &NetworkModel) -> Result<AngleResponse> {
    let (b, buses) = dc_susceptance(model);
    Ok(AngleResponse {
        full: unit_transfer_response(model, &b, &buses)?,
        kind: MapKind::Dc,
        operating_point: None,
    })
}

/// `F = S J^-1 M` for one PMU placement.
pub fn build_signature_map(model: &NetworkModel, state: &SteadyState, placement: &PmuPlacement) -> Result<SignatureMap> {
    ac_response(model, state)?.select(placement)
}

/// Signature map with the Jacobian replaced by the DC susceptance matrix.
pub fn dc_signature_map(model: &NetworkModel, placement: &PmuPlacement) -> Result<SignatureMap> {
    dc_response(model)?.select(placement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{ieee39, parse_case};
    use crate::powerflow::{solve_power_flow, PowerFlowOptions};

    fn base() -> (NetworkModel, SteadyState) {
        let m = ieee39();
        let s = solve_power_flow(&m, &PowerFlowOptions::default()).unwrap();
        (m, s)
    }

    #[test]
    fn placement_validation() {
        assert!(PmuPlacement::new(vec![], 5).is_err());
        assert!(PmuPlacement::new(vec![1, 1], 5).is_err());
        assert!(PmuPlacement::new(vec![6], 5).is_err());
        assert_eq!(PmuPlacement::new(vec![3, 1], 5).unwrap().buses(), &[1, 3]);
    }

    #[test]
    fn full_non_reference_placement_is_inverse_times_incidence() {
        let (m, s) = base();
        let non_ref: Vec<usize> = (1..=39).filter(|&b| b != m.reference() + 1).collect();
        let map = build_signature_map(&m, &s, &PmuPlacement::new(non_ref.clone(), 39).unwrap()).unwrap();
        let j = jacobian_at(&m, &s).unwrap();
        let rows: Vec<usize> = non_ref.iter().map(|b| b - 1).collect();
        let residual = &j.j1 * &map.f - m.incidence().select_rows(&rows);
        assert!(residual.amax() <= 1e-9);
    }

    #[test]
    fn column_is_difference_of_sensitivity_columns() {
        let (m, s) = base();
        let placement = PmuPlacement::new(vec![2, 9, 16, 31, 39], 39).unwrap();
        let map = build_signature_map(&m, &s, &placement).unwrap();
        let j = jacobian_at(&m, &s).unwrap();
        let inv = j.j1.clone().try_inverse().unwrap();
        // full inverse with a zero reference row/column
        let mut full_inv = DMatrix::<f64>::zeros(39, 39);
        for (r, &br) in j.buses.iter().enumerate() {
            for (c, &bc) in j.buses.iter().enumerate() {
                full_inv[(br, bc)] = inv[(r, c)];
            }
        }
        for (l, br) in m.branches().iter().enumerate() {
            for (k, &bus) in placement.buses().iter().enumerate() {
                let expected = full_inv[(bus - 1, br.from_bus - 1)] - full_inv[(bus - 1, br.to_bus - 1)];
                assert!((map.f[(k, l)] - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
            }
        }
        // bus 31 is the reference: a structurally zero row
        assert!(map.f.row(3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn permuted_placement_gives_same_rows() {
        let (m, s) = base();
        let a = build_signature_map(&m, &s, &PmuPlacement::new(vec![7, 3, 22], 39).unwrap()).unwrap();
        let b = build_signature_map(&m, &s, &PmuPlacement::new(vec![22, 7, 3], 39).unwrap()).unwrap();
        assert_eq!(a.f, b.f);
        let full = ac_response(&m, &s).unwrap();
        assert_eq!(a.f.row(0), full.full.row(2));
        assert_eq!(a.f.row(2), full.full.row(21));
    }

    #[test]
    fn lossless_flat_network_dc_equals_ac() {
        let text = "mpc.baseMVA = 100;\n\
            mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 345 1 1.1 0.9;\n\
                       3 1 0 0 0 0 1 1 0 345 1 1.1 0.9; 4 1 0 0 0 0 1 1 0 345 1 1.1 0.9];\n\
            mpc.gen = [1 0 0 0 0 1 100 1 0 0];\n\
            mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1 0 0; 2 3 0 0.2 0 0 0 0 0 0 1 0 0;\n\
                          3 4 0 0.05 0 0 0 0 0 0 1 0 0; 4 1 0 0.3 0 0 0 0 0 0 1 0 0; 1 3 0 0.15 0 0 0 0 0 0 1 0 0];";
        let m = parse_case(text).unwrap();
        let s = solve_power_flow(&m, &PowerFlowOptions::default()).unwrap();
        let placement = PmuPlacement::new(vec![1, 2, 3, 4], 4).unwrap();
        let ac = build_signature_map(&m, &s, &placement).unwrap();
        let dc = dc_signature_map(&m, &placement).unwrap();
        assert!((ac.f - dc.f).amax() <= 1e-9);
    }

    #[test]
    fn two_bus_dc_column() {
        let text = "mpc.baseMVA = 100;\n\
            mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 345 1 1.1 0.9];\n\
            mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1 0 0];";
        let m = parse_case(text).unwrap();
        let dc = dc_signature_map(&m, &PmuPlacement::new(vec![1, 2], 2).unwrap()).unwrap();
        // injection at bus 1 (reference) and withdrawal at bus 2: theta_2 = -x
        assert_eq!(dc.f[(0, 0)], 0.0);
        assert!((dc.f[(1, 0)] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn ac_and_dc_maps_differ_on_realistic_state() {
        let (m, s) = base();
        let placement = PmuPlacement::new((1..=39).collect(), 39).unwrap();
        let ac = build_signature_map(&m, &s, &placement).unwrap();
        let dc = dc_signature_map(&m, &placement).unwrap();
        let lossy: Vec<usize> = m.branches().iter().filter(|b| b.r > 0.0).map(|b| b.id - 1).collect();
        let mut below_one = 0;
        for &l in &lossy {
            let (a, d) = (ac.f.column(l), dc.f.column(l));
            let corr = a.dot(&d) / (a.norm() * d.norm());
            if corr < 1.0 - 1e-12 {
                below_one += 1;
            }
        }
        assert_eq!(below_one, lossy.len());
    }

    #[test]
    fn unconverged_state_is_rejected() {
        let (m, mut s) = base();
        s.converged = false;
        let placement = PmuPlacement::new(vec![1], 39).unwrap();
        assert!(matches!(build_signature_map(&m, &s, &placement), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn singular_sensitivity_reports_condition() {
        // bus 3 hangs off nothing once its only line is out
        let text = "mpc.baseMVA = 100;\n\
            mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 345 1 1.1 0.9; 3 1 0 0 0 0 1 1 0 345 1 1.1 0.9];\n\
            mpc.branch = [1 2 0 0.1 0 0 0 0 0 0 1 0 0; 2 3 0 0.1 0 0 0 0 0 0 0 0 0];";
        let m = parse_case(text).unwrap();
        let err = dc_signature_map(&m, &PmuPlacement::new(vec![2], 3).unwrap()).unwrap_err();
        assert!(matches!(err, Error::SingularSensitivity { .. }));
    }
}
