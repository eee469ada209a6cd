//! Minimal diagnosable clusters: lines whose signatures a placement cannot
//! tell apart at a given correlation threshold.

use std::collections::BTreeSet;

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigmap::SignatureMap;

const THRESHOLD_SLACK: f64 = 1e-12;
const ZERO_VARIANCE: f64 = 1e-10;

/// Pairwise Pearson correlations of the columns of `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnCorrelation {
    pub matrix: DMatrix<f64>,
    /// Columns with no variation; their correlations are reported as 0.
    pub zero_variance: Vec<bool>,
}

pub fn column_correlation(f: &DMatrix<f64>) -> Result<ColumnCorrelation> {
    let (k, l) = f.shape();
    if k < 2 {
        return Err(Error::DegenerateMap(format!("{k} measurement rows; at least 2 needed")));
    }
    let mut unit = DMatrix::zeros(k, l);
    let mut zero_variance = vec![false; l];
    for j in 0..l {
        let col = f.column(j);
        let mean = col.mean();
        let centered = col.map(|v| v - mean);
        let norm = centered.norm();
        if norm == 0.0 || norm <= ZERO_VARIANCE * col.norm() {
            zero_variance[j] = true;
        } else {
            unit.set_column(j, &(centered / norm));
        }
    }
    let mut matrix = unit.tr_mul(&unit).map(|v| v.clamp(-1.0, 1.0));
    for j in 0..l {
        if !zero_variance[j] {
            matrix[(j, j)] = 1.0;
        }
    }
    Ok(ColumnCorrelation { matrix, zero_variance })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdcCatalog {
    /// `clusters[i]` holds the line ids confusable with column `i`, itself included, ascending.
    pub clusters: Vec<Vec<usize>>,
    pub rho_star: f64,
    /// Fraction of singleton clusters.
    pub diagnosability: f64,
    pub correlation_matrix: DMatrix<f64>,
    pub line_ids: Vec<usize>,
    /// Lines with a constant signature across the PMUs.
    pub unobservable: Vec<usize>,
}

impl MdcCatalog {
    pub fn cluster_of(&self, line: usize) -> Option<&[usize]> {
        self.line_ids
            .iter()
            .position(|&id| id == line)
            .map(|i| self.clusters[i].as_slice())
    }
}

fn check_threshold(rho_star: f64) -> Result<()> {
    if rho_star > 0.0 && rho_star <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("correlation threshold {rho_star} outside (0, 1]")))
    }
}

/// Builds the catalog from precomputed correlations.
pub fn catalog_from_correlation(corr: &ColumnCorrelation, line_ids: &[usize], rho_star: f64) -> Result<MdcCatalog> {
    check_threshold(rho_star)?;
    let l = corr.matrix.ncols();
    if line_ids.len() != l {
        return Err(Error::Dimension(format!("{l} columns but {} line ids", line_ids.len())));
    }
    let clusters: Vec<Vec<usize>> = (0..l)
        .map(|i| {
            let mut g: Vec<usize> = (0..l)
                .filter(|&j| {
                    j == i
                        || (!corr.zero_variance[i]
                            && !corr.zero_variance[j]
                            && corr.matrix[(i, j)].abs() >= rho_star - THRESHOLD_SLACK)
                })
                .map(|j| line_ids[j])
                .collect();
            g.sort_unstable();
            g
        })
        .collect();
    let singletons = clusters.iter().filter(|g| g.len() == 1).count();
    let unobservable: Vec<usize> = (0..l).filter(|&j| corr.zero_variance[j]).map(|j| line_ids[j]).collect();
    Ok(MdcCatalog {
        diagnosability: singletons as f64 / l as f64,
        clusters,
        rho_star,
        correlation_matrix: corr.matrix.clone(),
        line_ids: line_ids.to_vec(),
        unobservable,
    })
}

pub fn build_mdc(map: &SignatureMap, rho_star: f64) -> Result<MdcCatalog> {
    build_mdc_matrix(&map.f, &map.line_ids, rho_star)
}

pub fn build_mdc_matrix(f: &DMatrix<f64>, line_ids: &[usize], rho_star: f64) -> Result<MdcCatalog> {
    check_threshold(rho_star)?;
    let corr = column_correlation(f)?;
    let catalog = catalog_from_correlation(&corr, line_ids, rho_star)?;
    if !catalog.unobservable.is_empty() {
        debug!("lines {:?} have a constant signature and cannot be observed", catalog.unobservable);
    }
    Ok(catalog)
}

/// `(rho*, V(rho*))` for each threshold, in the given order.
pub fn diagnosability_sweep(map: &SignatureMap, thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    for &t in thresholds {
        check_threshold(t)?;
    }
    let corr = column_correlation(&map.f)?;
    thresholds
        .iter()
        .map(|&t| Ok((t, catalog_from_correlation(&corr, &map.line_ids, t)?.diagnosability)))
        .collect()
}

/// Union of the clusters of every selected line, ascending.
pub fn augment(selected: &[usize], catalog: &MdcCatalog) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for &line in selected {
        let g = catalog.cluster_of(line).ok_or(Error::UnknownLine(line))?;
        out.extend(g.iter().copied());
    }
    Ok(out.into_iter().collect())
}
