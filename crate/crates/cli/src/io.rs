//! CSV layouts for signature maps, measurements and lasso paths.

use std::path::Path;

use lineout::bench::fmt17;
use lineout::lars::LassoPath;
use lineout::sigmap::{MapKind, PmuPlacement, SignatureMap};
use lineout::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Map read from disk, rows keyed by the bus numbers in its first column.
pub struct MapFile {
    pub map: SignatureMap,
    pub buses: Vec<u64>,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn number<T: std::str::FromStr>(path: &Path, row: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::InvalidInput(format!("{}: record {row}: cannot read {field:?} as a number", path.display())))
}

fn records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut rdr = reader(path)?;
    let header = rdr
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .clone();
    let rows = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok((header, rows))
}

/// Header `bus,<line id>...`, one row per PMU bus.
pub fn write_map(map: &SignatureMap, bus_numbers: &[u64]) -> String {
    let mut out = String::from("bus");
    for id in &map.line_ids {
        out.push_str(&format!(",{id}"));
    }
    out.push('\n');
    for (r, bus) in bus_numbers.iter().enumerate() {
        out.push_str(&bus.to_string());
        for v in map.f.row(r).iter() {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        out.push('\n');
    }
    out
}

pub fn read_map(path: &Path) -> Result<MapFile> {
    let (header, rows) = records(path)?;
    if header.len() < 2 {
        return Err(Error::InvalidInput(format!("{}: no line columns in the header", path.display())));
    }
    let line_ids: Vec<usize> = header
        .iter()
        .skip(1)
        .map(|h| number(path, 0, h.trim_start_matches("line_")))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no PMU rows", path.display())));
    }
    let l = line_ids.len();
    let mut keyed: Vec<(u64, Vec<f64>)> = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        if rec.len() != l + 1 {
            return Err(Error::Dimension(format!(
                "{}: record {} has {} fields, header has {}",
                path.display(),
                i + 1,
                rec.len(),
                l + 1
            )));
        }
        let bus = number(path, i + 1, &rec[0])?;
        let values = rec.iter().skip(1).map(|v| number(path, i + 1, v)).collect::<Result<_>>()?;
        keyed.push((bus, values));
    }
    keyed.sort_by_key(|(b, _)| *b);
    let buses: Vec<u64> = keyed.iter().map(|(b, _)| *b).collect();
    let max = *buses.last().expect("at least one row") as usize;
    let placement = PmuPlacement::new(buses.iter().map(|&b| b as usize).collect(), max)?;
    let f = DMatrix::from_fn(keyed.len(), l, |r, c| keyed[r].1[c]);
    Ok(MapFile {
        map: SignatureMap {
            f,
            placement,
            line_ids,
            kind: MapKind::External,
            operating_point: None,
        },
        buses,
    })
}

/// Header `bus,dtheta`; rows are matched to the map rows by bus number.
pub fn read_measurement(path: &Path, map: &MapFile) -> Result<DVector<f64>> {
    let (header, rows) = records(path)?;
    if header.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "{}: expected the two columns bus,dtheta",
            path.display()
        )));
    }
    let k = map.buses.len();
    if rows.len() != k {
        return Err(Error::Dimension(format!(
            "map has {k} PMU rows but the measurement has {} entries",
            rows.len()
        )));
    }
    let mut out = DVector::from_element(k, f64::NAN);
    for (i, rec) in rows.iter().enumerate() {
        if rec.len() != 2 {
            return Err(Error::InvalidInput(format!("{}: record {} needs 2 fields", path.display(), i + 1)));
        }
        let bus: u64 = number(path, i + 1, &rec[0])?;
        let value: f64 = number(path, i + 1, &rec[1])?;
        let r = map
            .buses
            .binary_search(&bus)
            .map_err(|_| Error::InvalidInput(format!("measurement bus {bus} has no row in the map")))?;
        if !out[r].is_nan() {
            return Err(Error::InvalidInput(format!("measurement bus {bus} listed twice")));
        }
        out[r] = value;
    }
    Ok(out)
}

pub fn write_measurement(buses: &[u64], dtheta: &DVector<f64>) -> String {
    let mut out = String::from("bus,dtheta\n");
    for (b, v) in buses.iter().zip(dtheta.iter()) {
        out.push_str(&format!("{b},{}\n", fmt17(*v)));
    }
    out
}

/// One row per transition point: step, lambda, the active lines on the
/// following segment, then the original-scale coefficient of every line.
pub fn write_path(path: &LassoPath) -> String {
    let mut out = String::from("step,lambda,active");
    for id in &path.line_ids {
        out.push_str(&format!(",{id}"));
    }
    out.push('\n');
    for (q, ((lambda, beta), active)) in path.lambdas.iter().zip(&path.betas).zip(&path.active_sets).enumerate() {
        let active: Vec<String> = active.iter().map(|id| id.to_string()).collect();
        out.push_str(&format!("{q},{},{}", fmt17(*lambda), active.join(" ")));
        for b in beta {
            out.push(',');
            out.push_str(&fmt17(*b));
        }
        out.push('\n');
    }
    out
}
