//! Lasso path by least angle regression with the lasso modification.
//!
//! The path parameter `lambda` lives on the correlation scale: at every
//! transition point the active standardized columns satisfy
//! `|<x_j, r>| = lambda`, which makes `beta(lambda)` the minimizer of
//! `0.5 ||y - X beta||^2 + lambda ||beta||_1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigmap::SignatureMap;

const EXACT_FIT: f64 = 1e-12;
const ZERO_NORM: f64 = 1e-10;
const GRAM_RCOND: f64 = 1e-12;

/// Centered, unit-norm columns. Dropped columns are kept as zeros so indices
/// match the source map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizedDesign {
    pub columns: DMatrix<f64>,
    pub centers: Vec<f64>,
    /// Centered column norms; zero for dropped columns.
    pub scales: Vec<f64>,
    /// Line ids of columns with no variation across PMUs.
    pub dropped_columns: Vec<usize>,
    pub line_ids: Vec<usize>,
}

impl StandardizedDesign {
    pub fn n_rows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_retained(&self, j: usize) -> bool {
        self.scales[j] > 0.0
    }

    pub fn n_retained(&self) -> usize {
        self.scales.iter().filter(|s| **s > 0.0).count()
    }

    /// `min(K - 1, L)` over retained columns.
    pub fn default_max_steps(&self) -> usize {
        (self.n_rows() - 1).min(self.n_retained())
    }
}

pub fn standardize(map: &SignatureMap) -> Result<StandardizedDesign> {
    standardize_matrix(&map.f, &map.line_ids)
}

pub fn standardize_matrix(f: &DMatrix<f64>, line_ids: &[usize]) -> Result<StandardizedDesign> {
    let (k, l) = f.shape();
    if line_ids.len() != l {
        return Err(Error::Dimension(format!("{l} columns but {} line ids", line_ids.len())));
    }
    if k < 2 {
        return Err(Error::DegenerateMap(format!("{k} measurement rows; at least 2 needed")));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("signature map has non-finite entries".into()));
    }
    let mut columns = DMatrix::zeros(k, l);
    let mut centers = Vec::with_capacity(l);
    let mut scales = Vec::with_capacity(l);
    let mut dropped = Vec::new();
    for j in 0..l {
        let col = f.column(j);
        let mean = col.mean();
        let centered = col.map(|v| v - mean);
        let norm = centered.norm();
        centers.push(mean);
        if norm <= ZERO_NORM * col.norm() || norm == 0.0 {
            scales.push(0.0);
            dropped.push(line_ids[j]);
        } else {
            scales.push(norm);
            columns.set_column(j, &(centered / norm));
        }
    }
    if dropped.len() == l {
        return Err(Error::DegenerateMap("every column is constant across PMUs".into()));
    }
    Ok(StandardizedDesign {
        columns,
        centers,
        scales,
        dropped_columns: dropped,
        line_ids: line_ids.to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathEvent {
    Join(usize),
    Drop(usize),
    /// Reached `lambda = 0` without a set change.
    LeastSquares,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    /// Transition points, strictly decreasing; `lambdas[0] = max_j |<x_j, y>|`.
    pub lambdas: Vec<f64>,
    /// Coefficients at each transition point in the original column scale.
    pub betas: Vec<Vec<f64>>,
    /// The same coefficients on the standardized columns.
    pub std_betas: Vec<Vec<f64>>,
    /// Active line ids (ascending) on the segment starting at each point.
    pub active_sets: Vec<Vec<usize>>,
    /// Set changes in the order they happened.
    pub events: Vec<PathEvent>,
    pub max_steps: usize,
    /// The active Gram matrix was rank-deficient at some step.
    pub degenerate: bool,
    pub line_ids: Vec<usize>,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn terminal_beta(&self) -> Option<&[f64]> {
        self.betas.last().map(|b| b.as_slice())
    }
}

fn gram_direction(g: &DMatrix<f64>, s: &DVector<f64>, degenerate: &mut bool) -> DVector<f64> {
    if let Some(ch) = g.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = (diag.min(), diag.max());
        if lo * lo >= GRAM_RCOND * hi * hi {
            return ch.solve(s);
        }
    }
    *degenerate = true;
    let svd = g.clone().svd(true, true);
    let tol = GRAM_RCOND * svd.singular_values.max();
    svd.solve(s, tol).expect("SVD was computed with both factors")
}

/// Runs LARS-lasso on `dtheta` (centered internally) for at most `max_steps`
/// steps, `None` meaning [`StandardizedDesign::default_max_steps`].
pub fn lars_path(design: &StandardizedDesign, dtheta: &DVector<f64>, max_steps: Option<usize>) -> Result<LassoPath> {
    let x = &design.columns;
    let (k, l) = x.shape();
    if dtheta.len() != k {
        return Err(Error::Dimension(format!(
            "map has {k} PMU rows but the measurement has {} entries",
            dtheta.len()
        )));
    }
    if dtheta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("measurement has non-finite entries".into()));
    }
    let q = max_steps.unwrap_or_else(|| design.default_max_steps());
    if q == 0 {
        return Err(Error::Config("max_steps must be at least 1".into()));
    }

    let mean = dtheta.mean();
    let y = dtheta.map(|v| v - mean);
    let retained: Vec<usize> = (0..l).filter(|&j| design.is_retained(j)).collect();

    let mut beta = DVector::<f64>::zeros(l);
    let mut c = x.tr_mul(&y);
    let mut path = LassoPath {
        lambdas: Vec::new(),
        betas: Vec::new(),
        std_betas: Vec::new(),
        active_sets: Vec::new(),
        events: Vec::new(),
        max_steps: q,
        degenerate: false,
        line_ids: design.line_ids.clone(),
    };
    let record = |path: &mut LassoPath, lambda: f64, beta: &DVector<f64>, active: &[usize]| {
        let mut ids: Vec<usize> = active.iter().map(|&j| design.line_ids[j]).collect();
        ids.sort_unstable();
        path.lambdas.push(lambda);
        path.std_betas.push(beta.iter().copied().collect());
        path.betas.push(
            beta.iter()
                .zip(&design.scales)
                .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
                .collect(),
        );
        path.active_sets.push(ids);
    };

    let mut first: Option<usize> = None;
    for &j in &retained {
        if first.is_none_or(|f| c[j].abs() > c[f].abs()) {
            first = Some(j);
        }
    }
    let first = first.expect("design has a retained column");
    let lambda0 = c[first].abs();
    if lambda0 == 0.0 || y.norm() < EXACT_FIT {
        record(&mut path, lambda0, &beta, &[]);
        return Ok(path);
    }

    let mut active = vec![first];
    let mut is_active = vec![false; l];
    is_active[first] = true;
    path.events.push(PathEvent::Join(design.line_ids[first]));
    record(&mut path, lambda0, &beta, &active);

    let tie = 1e-12 * lambda0;
    let mut lambda = lambda0;
    let mut just_dropped: Option<usize> = None;
    for _ in 0..q {
        let xa = x.select_columns(&active);
        let g = xa.tr_mul(&xa);
        let s = DVector::from_iterator(active.len(), active.iter().map(|&j| c[j].signum()));
        let d = gram_direction(&g, &s, &mut path.degenerate);
        let a = x.tr_mul(&(&xa * &d));

        let mut join: Option<(f64, usize)> = None;
        for &j in &retained {
            if is_active[j] || just_dropped == Some(j) {
                continue;
            }
            for (num, den) in [(lambda - c[j], 1.0 - a[j]), (lambda + c[j], 1.0 + a[j])] {
                if den <= 1e-12 {
                    continue;
                }
                let t = num.max(0.0) / den;
                if join.is_none_or(|(best, _)| t < best - tie) {
                    join = Some((t, j));
                }
            }
        }
        let mut drop: Option<(f64, usize)> = None;
        for (i, &j) in active.iter().enumerate() {
            if d[i] == 0.0 {
                continue;
            }
            let t = -beta[j] / d[i];
            if t > tie && drop.is_none_or(|(best, _)| t < best - tie) {
                drop = Some((t, i));
            }
        }

        let (t, event) = match (join, drop) {
            (_, Some((td, i))) if join.is_none_or(|(tj, _)| td <= tj + tie) && td < lambda - tie => {
                (td, PathEvent::Drop(i))
            }
            (Some((tj, j)), _) if tj < lambda - tie => (tj, PathEvent::Join(j)),
            _ => (lambda, PathEvent::LeastSquares),
        };

        for (i, &j) in active.iter().enumerate() {
            beta[j] += t * d[i];
        }
        lambda = if matches!(event, PathEvent::LeastSquares) { 0.0 } else { lambda - t };
        let logged = match event {
            PathEvent::Join(j) => {
                active.push(j);
                is_active[j] = true;
                just_dropped = None;
                PathEvent::Join(design.line_ids[j])
            }
            PathEvent::Drop(i) => {
                let j = active.remove(i);
                is_active[j] = false;
                beta[j] = 0.0;
                just_dropped = Some(j);
                PathEvent::Drop(design.line_ids[j])
            }
            PathEvent::LeastSquares => PathEvent::LeastSquares,
        };
        path.events.push(logged);
        let r = &y - x * &beta;
        c = x.tr_mul(&r);

        if lambda < *path.lambdas.last().expect("path has a start point") {
            record(&mut path, lambda, &beta, &active);
        } else {
            // simultaneous join: fold the set change into the current point
            let last = path.active_sets.len() - 1;
            let mut ids: Vec<usize> = active.iter().map(|&j| design.line_ids[j]).collect();
            ids.sort_unstable();
            path.active_sets[last] = ids;
        }
        if lambda <= 0.0 || r.norm() < EXACT_FIT || active.is_empty() {
            break;
        }
    }
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SelectionRule {
    /// Keep `|beta_j| >= gamma * max |beta|`.
    Relative { gamma: f64 },
    /// Keep the `k` largest nonzero magnitudes.
    TopK { k: usize },
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::Relative { gamma: 0.3 }
    }
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::Relative { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                Err(Error::Config(format!("gamma {gamma} outside (0, 1]")))
            }
            SelectionRule::TopK { k: 0 } => Err(Error::Config("top-k needs k >= 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    /// Line ids by descending coefficient magnitude.
    pub selected_lines: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub path: Option<LassoPath>,
    pub rule: SelectionRule,
}

/// Ranks `(line id, magnitude, reported value)` triples by descending
/// magnitude, ties to the lower line id, and applies `rule`.
pub(crate) fn apply_rule(mut ranked: Vec<(usize, f64, f64)>, rule: SelectionRule) -> (Vec<usize>, Vec<f64>) {
    ranked.retain(|(_, m, _)| *m > 0.0);
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep = match rule {
        SelectionRule::Relative { gamma } => {
            let top = ranked.first().map_or(0.0, |r| r.1);
            ranked.iter().take_while(|r| r.1 >= gamma * top).count()
        }
        SelectionRule::TopK { k } => k.min(ranked.len()),
    };
    ranked.truncate(keep);
    ranked.into_iter().map(|(id, _, v)| (id, v)).unzip()
}

/// Picks the significantly nonzero terminal coefficients.
///
/// Magnitudes are compared on the standardized scale, where a coefficient is
/// the fitted angle-response norm; reported coefficients are in the original
/// column scale.
pub fn select_outages(path: &LassoPath, rule: SelectionRule) -> Result<IdentificationResult> {
    rule.validate()?;
    let (std_beta, beta) = match (path.std_betas.last(), path.betas.last()) {
        (Some(s), Some(b)) => (s, b),
        _ => return Err(Error::InvalidInput("empty lasso path".into())),
    };
    let ranked = path
        .line_ids
        .iter()
        .zip(std_beta.iter().zip(beta))
        .map(|(&id, (s, b))| (id, s.abs(), *b))
        .collect();
    let (selected_lines, coefficients) = apply_rule(ranked, rule);
    Ok(IdentificationResult {
        selected_lines,
        coefficients,
        path: Some(path.clone()),
        rule,
    })
}

/// Standardize, run the path with default depth, select.
pub fn identify(map: &SignatureMap, dtheta: &DVector<f64>, rule: SelectionRule, max_steps: Option<usize>) -> Result<IdentificationResult> {
    let design = standardize(map)?;
    let path = lars_path(&design, dtheta, max_steps)?;
    select_outages(&path, rule)
}
