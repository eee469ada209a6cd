//! Independent reference implementations used only by tests.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::netmodel::NetworkModel;
use crate::powerflow::bus_injections;

/// Cyclic coordinate descent for `0.5 ||y - X beta||^2 + lambda ||beta||_1`,
/// iterated until the largest coordinate change drops below `tol`.
pub fn lasso_cd(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, tol: f64, max_sweeps: usize) -> DVector<f64> {
    let l = x.ncols();
    let sq: Vec<f64> = (0..l).map(|j| x.column(j).norm_squared()).collect();
    let mut beta = DVector::<f64>::zeros(l);
    let mut r = y.clone();
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..l {
            if sq[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let rho = col.dot(&r) + sq[j] * beta[j];
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            break;
        }
    }
    beta
}

/// Admittance matrix assembled entry by entry from the branch list.
pub fn admittance_nested(model: &NetworkModel) -> DMatrix<Complex64> {
    let n = model.n_buses();
    let base = model.base_mva();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for m in 0..n {
        let bus = &model.buses()[m];
        y[(m, m)] += Complex64::new(bus.gs / base, bus.bs / base);
        for br in model.branches() {
            if !br.in_service {
                continue;
            }
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let half_b = Complex64::new(0.0, br.b_charging / 2.0);
            let (f, t) = (br.from_bus - 1, br.to_bus - 1);
            for k in 0..n {
                if m == f && k == f {
                    y[(m, k)] += (ys + half_b) / (br.tap * br.tap);
                } else if m == t && k == t {
                    y[(m, k)] += ys + half_b;
                } else if (m == f && k == t) || (m == t && k == f) {
                    y[(m, k)] -= ys / br.tap;
                }
            }
        }
    }
    y
}

/// Central finite differences of `(P, Q)` with respect to `(theta, V)`.
/// Returns `(dP/dtheta, dP/dV)` over all buses.
pub fn finite_difference_jacobian(
    y: &DMatrix<Complex64>,
    theta: &[f64],
    vmag: &[f64],
    h: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = theta.len();
    let mut j1 = DMatrix::zeros(n, n);
    let mut j2 = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[k] += h;
        tm[k] -= h;
        let (pp, _) = bus_injections(y, &tp, vmag);
        let (pm, _) = bus_injections(y, &tm, vmag);
        let mut vp = vmag.to_vec();
        let mut vm = vmag.to_vec();
        vp[k] += h;
        vm[k] -= h;
        let (qp, _) = bus_injections(y, theta, &vp);
        let (qm, _) = bus_injections(y, theta, &vm);
        for m in 0..n {
            j1[(m, k)] = (pp[m] - pm[m]) / (2.0 * h);
            j2[(m, k)] = (qp[m] - qm[m]) / (2.0 * h);
        }
    }
    (j1, j2)
}

/// Random Gaussian design with a planted sparse support and noise at the given
/// signal-to-noise power ratio. Returns `(X, y, support)`.
pub fn planted_instance<R: Rng>(rng: &mut R, k: usize, l: usize, a: usize, snr: f64) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let x = DMatrix::from_fn(k, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    let support = rand::seq::index::sample(rng, l, a).into_vec();
    let mut beta = DVector::zeros(l);
    for &j in &support {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        beta[j] = sign * rng.gen_range(1.0..2.0);
    }
    let signal = &x * &beta;
    let sigma = (signal.norm_squared() / k as f64 / snr).sqrt();
    let y = signal + DVector::from_fn(k, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    (x, y, support)
}

/// Largest KKT violations `(equicorrelation, bound, sign)` of a lasso point on
/// standardized columns at correlation-scale `lambda`. Signs are unconstrained
/// at `lambda = 0`.
pub fn kkt_violation(x: &DMatrix<f64>, y_centered: &DVector<f64>, beta: &[f64], lambda: f64, active: &[usize]) -> (f64, f64, f64) {
    let b = DVector::from_column_slice(beta);
    let c = x.tr_mul(&(y_centered - x * b));
    let (mut eq, mut bound, mut sign) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..x.ncols() {
        if active.contains(&j) {
            eq = eq.max((c[j].abs() - lambda).abs());
            if lambda > 0.0 && beta[j] != 0.0 && beta[j].signum() != c[j].signum() {
                sign = sign.max(beta[j].abs());
            }
        } else {
            bound = bound.max(c[j].abs() - lambda);
        }
    }
    (eq, bound.max(0.0), sign)
}

/// Largest gap between a lasso path and coordinate descent run at every
/// transition point.
///
/// A `lambda = 0` endpoint is not unique once the active set spans the
/// centered column space, so it is checked as the limit of its segment: the
/// path is affine there, and agreement at the segment start and midpoint fixes
/// the endpoint.
pub fn path_cd_gap(x: &DMatrix<f64>, y_centered: &DVector<f64>, lambdas: &[f64], betas: &[Vec<f64>]) -> f64 {
    let mut gap = 0.0f64;
    for (q, (&lambda, beta)) in lambdas.iter().zip(betas).enumerate() {
        let (at, target) = if lambda == 0.0 && q > 0 {
            let mid: Vec<f64> = betas[q - 1].iter().zip(beta).map(|(a, b)| 0.5 * (a + b)).collect();
            (0.5 * lambdas[q - 1], mid)
        } else {
            (lambda, beta.clone())
        };
        let cd = lasso_cd(x, y_centered, at, 1e-13, 1_000_000);
        gap = gap.max((DVector::from_vec(target) - cd).amax());
    }
    gap
}
