//! Newton-Raphson AC power flow and the real-power Jacobian blocks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{BusKind, NetworkModel};
use crate::sigmap::PmuPlacement;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the mismatch infinity norm, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: 1e-8,
            max_iterations: 20,
        }
    }
}

/// Converged (or abandoned) operating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Bus angles, radians; the reference entry is exactly zero.
    pub theta: Vec<f64>,
    pub vmag: Vec<f64>,
    /// Net injections computed from the final voltages, p.u.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub converged: bool,
    /// Number of mismatch evaluations, the flat-start check included.
    pub iterations: usize,
    /// Final mismatch infinity norm over P at non-reference buses and Q at load buses.
    pub residual: f64,
}

/// Sparse row view of the admittance matrix.
struct RowView {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl RowView {
    fn new(y: &DMatrix<Complex64>) -> Self {
        let rows = (0..y.nrows())
            .map(|m| {
                (0..y.ncols())
                    .filter(|&n| y[(m, n)] != Complex64::new(0.0, 0.0))
                    .map(|n| (n, y[(m, n)]))
                    .collect()
            })
            .collect();
        RowView { rows }
    }

    fn injections(&self, theta: &[f64], vmag: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = theta.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for m in 0..n {
            for &(k, y) in &self.rows[m] {
                let d = theta[m] - theta[k];
                let (s, c) = d.sin_cos();
                p[m] += vmag[k] * (y.re * c + y.im * s);
                q[m] += vmag[k] * (y.re * s - y.im * c);
            }
            p[m] *= vmag[m];
            q[m] *= vmag[m];
        }
        (p, q)
    }

    fn derivatives(&self, theta: &[f64], vmag: &[f64]) -> PowerDerivatives {
        let n = theta.len();
        let mut out = PowerDerivatives {
            dp_dtheta: DMatrix::zeros(n, n),
            dp_dv: DMatrix::zeros(n, n),
            dq_dtheta: DMatrix::zeros(n, n),
            dq_dv: DMatrix::zeros(n, n),
        };
        for m in 0..n {
            let (mut dp_diag, mut dq_diag) = (0.0, 0.0);
            let (mut dpv_diag, mut dqv_diag) = (0.0, 0.0);
            for &(k, y) in &self.rows[m] {
                let d = theta[m] - theta[k];
                let (s, c) = d.sin_cos();
                // Y cos(d - a) and Y sin(d - a) in rectangular form
                let ycos = y.re * c + y.im * s;
                let ysin = y.re * s - y.im * c;
                dpv_diag += vmag[k] * ycos;
                dqv_diag += vmag[k] * ysin;
                if k == m {
                    continue;
                }
                let dp = vmag[m] * vmag[k] * ysin;
                let dq = -vmag[m] * vmag[k] * ycos;
                out.dp_dtheta[(m, k)] = dp;
                out.dq_dtheta[(m, k)] = dq;
                out.dp_dv[(m, k)] = vmag[m] * ycos;
                out.dq_dv[(m, k)] = vmag[m] * ysin;
                dp_diag -= dp;
                dq_diag -= dq;
            }
            let ymm = self.rows[m]
                .iter()
                .find(|(k, _)| *k == m)
                .map_or(Complex64::new(0.0, 0.0), |(_, y)| *y);
            out.dp_dtheta[(m, m)] = dp_diag;
            out.dq_dtheta[(m, m)] = dq_diag;
            out.dp_dv[(m, m)] = dpv_diag + vmag[m] * ymm.re;
            out.dq_dv[(m, m)] = dqv_diag - vmag[m] * ymm.im;
        }
        out
    }
}

/// Full N x N partial derivatives of the bus injections.
#[derive(Clone, Debug)]
pub struct PowerDerivatives {
    pub dp_dtheta: DMatrix<f64>,
    pub dp_dv: DMatrix<f64>,
    pub dq_dtheta: DMatrix<f64>,
    pub dq_dv: DMatrix<f64>,
}

/// Real and reactive injections `P_m = V_m sum_n V_n Y_mn cos(theta_m - theta_n - alpha_mn)`
/// (and the sine counterpart for `Q_m`).
pub fn bus_injections(y: &DMatrix<Complex64>, theta: &[f64], vmag: &[f64]) -> (Vec<f64>, Vec<f64>) {
    RowView::new(y).injections(theta, vmag)
}

/// Analytic derivatives of the injections over all buses.
///
/// Off-diagonal `dP_m/dtheta_n = V_m V_n Y_mn sin(theta_m - theta_n - alpha_mn)`;
/// each diagonal is the negated sum of its row, so `dP/dtheta` has zero row sums.
pub fn power_derivatives(y: &DMatrix<Complex64>, theta: &[f64], vmag: &[f64]) -> PowerDerivatives {
    RowView::new(y).derivatives(theta, vmag)
}

fn flat_start(model: &NetworkModel) -> (Vec<f64>, Vec<f64>) {
    let theta = vec![0.0; model.n_buses()];
    let vmag = model
        .buses()
        .iter()
        .map(|b| match b.kind {
            BusKind::Load => 1.0,
            _ => b.v_setpoint,
        })
        .collect();
    (theta, vmag)
}

/// Solves the AC power flow from a flat start.
///
/// Non-convergence is not an error: the returned state has `converged == false`
/// and the caller decides. A numerically singular Newton matrix is reported as
/// [`Error::SingularJacobian`].
pub fn solve_power_flow(model: &NetworkModel, options: &PowerFlowOptions) -> Result<SteadyState> {
    let rows = RowView::new(model.admittance());
    let reference = model.reference();
    let pvpq: Vec<usize> = (0..model.n_buses()).filter(|&i| i != reference).collect();
    let pq: Vec<usize> = model
        .buses()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind == BusKind::Load)
        .map(|(i, _)| i)
        .collect();
    let p_spec = model.p_injection();
    let q_spec = model.q_injection();
    let (mut theta, mut vmag) = flat_start(model);
    let (na, nv) = (pvpq.len(), pq.len());

    let mismatch = |theta: &[f64], vmag: &[f64]| {
        let (p, q) = rows.injections(theta, vmag);
        let f: Vec<f64> = pvpq
            .iter()
            .map(|&i| p[i] - p_spec[i])
            .chain(pq.iter().map(|&i| q[i] - q_spec[i]))
            .collect();
        let norm = f.iter().fold(0.0f64, |acc, v| if v.is_nan() { f64::NAN } else { acc.max(v.abs()) });
        (f, norm, p, q)
    };

    let (mut f, mut residual, mut p, mut q) = mismatch(&theta, &vmag);
    let mut iterations = 1;
    while !(residual <= options.tolerance) && iterations <= options.max_iterations && residual.is_finite() {
        let d = rows.derivatives(&theta, &vmag);
        let mut jac = DMatrix::<f64>::zeros(na + nv, na + nv);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(r, c)] = d.dp_dtheta[(i, k)];
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(r, na + c)] = d.dp_dv[(i, k)];
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pvpq.iter().enumerate() {
                jac[(na + r, c)] = d.dq_dtheta[(i, k)];
            }
            for (c, &k) in pq.iter().enumerate() {
                jac[(na + r, na + c)] = d.dq_dv[(i, k)];
            }
        }
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|v| -v));
        let dx = jac
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian { iteration: iterations })?;
        for (r, &i) in pvpq.iter().enumerate() {
            theta[i] += dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vmag[i] += dx[na + r];
        }
        (f, residual, p, q) = mismatch(&theta, &vmag);
        iterations += 1;
    }
    Ok(SteadyState {
        converged: residual <= options.tolerance,
        theta,
        vmag,
        p,
        q,
        iterations,
        residual,
    })
}

/// Real-power Jacobian blocks over the non-reference buses.
#[derive(Clone, Debug)]
pub struct JacobianBlocks {
    /// dP/dtheta, (N-1) x (N-1), every non-reference bus regardless of PV/PQ type.
    pub j1: DMatrix<f64>,
    /// dP/dV over the same rows and columns.
    pub j2: DMatrix<f64>,
    /// 0-based bus index of each row/column.
    pub buses: Vec<usize>,
    pub operating_point: SteadyState,
}

pub fn jacobian_at(model: &NetworkModel, state: &SteadyState) -> Result<JacobianBlocks> {
    let n = model.n_buses();
    if state.theta.len() != n || state.vmag.len() != n {
        return Err(Error::Dimension(format!(
            "state has {} angles and {} magnitudes for a {n}-bus model",
            state.theta.len(),
            state.vmag.len()
        )));
    }
    let d = power_derivatives(model.admittance(), &state.theta, &state.vmag);
    let reference = model.reference();
    let buses: Vec<usize> = (0..n).filter(|&i| i != reference).collect();
    let select = |full: &DMatrix<f64>| DMatrix::from_fn(n - 1, n - 1, |r, c| full[(buses[r], buses[c])]);
    Ok(JacobianBlocks {
        j1: select(&d.dp_dtheta),
        j2: select(&d.dp_dv),
        buses,
        operating_point: state.clone(),
    })
}

/// Post-minus-pre angles at the PMU buses, in ascending bus order.
pub fn angle_delta(pre: &SteadyState, post: &SteadyState, placement: &PmuPlacement) -> Result<DVector<f64>> {
    for state in [pre, post] {
        if !state.converged {
            return Err(Error::NotConverged {
                iterations: state.iterations,
                residual: state.residual,
            });
        }
    }
    if pre.theta.len() != post.theta.len() {
        return Err(Error::Dimension(format!(
            "pre-outage state has {} buses, post-outage state {}",
            pre.theta.len(),
            post.theta.len()
        )));
    }
    let buses = placement.buses();
    if let Some(&bad) = buses.iter().find(|&&b| b > pre.theta.len()) {
        return Err(Error::Placement(format!("bus {bad} outside a {}-bus state", pre.theta.len())));
    }
    Ok(DVector::from_iterator(
        buses.len(),
        buses.iter().map(|&b| post.theta[b - 1] - pre.theta[b - 1]),
    ))
}
