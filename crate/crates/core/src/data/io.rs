//! Text formats: a readings table with a header of node ids (optionally led by
//! a `timestamp` column), and a topology file that is either an edge list
//! `from,to,dist` or a coordinate list `id,lat,lon` / `id,x,y`.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use super::{Dataset, Topology};
use crate::error::{KitsError, Result};
use crate::graph::Metric;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyFormat {
    /// Decide from the header row.
    Auto,
    Edges,
    /// Geographic coordinates; distances are great-circle kilometres.
    LatLon,
    /// Planar coordinates; distances are Euclidean.
    Xy,
}

impl FromStr for TopologyFormat {
    type Err = KitsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "edges" => Ok(Self::Edges),
            "latlon" => Ok(Self::LatLon),
            "xy" => Ok(Self::Xy),
            other => Err(KitsError::Config(format!("unknown topology format {:?}", other))),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> KitsError {
    let at = e.position().map(|p| format!(" (line {})", p.line())).unwrap_or_default();
    KitsError::Data(format!("{}{}: {}", path.display(), at, e))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| KitsError::Data(format!("{}: {}", path.display(), e)))?;
    Ok(csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file))
}

fn parse_cell(path: &Path, line: usize, col: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        KitsError::Data(format!("{}: line {}, column {}: {:?} is not a number", path.display(), line, col + 1, cell))
    })
}

/// Node ids, optional timestamps and row-major readings.
pub type Readings = (Vec<String>, Option<Vec<String>>, Vec<f64>);

pub fn load_readings(path: &Path) -> Result<Readings> {
    let mut records = reader(path)?.into_records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, e))?,
        None => return Err(KitsError::Data(format!("{}: empty readings file", path.display()))),
    };
    let has_time = header.get(0).is_some_and(|h| h.eq_ignore_ascii_case("timestamp"));
    let skip = usize::from(has_time);
    let node_ids: Vec<String> = header.iter().skip(skip).map(str::to_string).collect();
    if node_ids.is_empty() {
        return Err(KitsError::Data(format!("{}: header names no nodes", path.display())));
    }
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(KitsError::Data(format!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                line,
                rec.len(),
                header.len()
            )));
        }
        if has_time {
            timestamps.push(rec[0].to_string());
        }
        for (col, cell) in rec.iter().enumerate().skip(skip) {
            values.push(parse_cell(path, line, col, cell)?);
        }
    }
    if values.is_empty() {
        return Err(KitsError::Data(format!("{}: no readings rows", path.display())));
    }
    Ok((node_ids, has_time.then_some(timestamps), values))
}

fn detect_format(header: &[String]) -> Option<TopologyFormat> {
    let has = |names: &[&str]| header.iter().any(|h| names.contains(&h.to_ascii_lowercase().as_str()));
    if has(&["lat", "latitude", "lon", "lng", "longitude"]) {
        Some(TopologyFormat::LatLon)
    } else if has(&["x", "y"]) {
        Some(TopologyFormat::Xy)
    } else if has(&["from", "to", "dist", "distance", "cost"]) {
        Some(TopologyFormat::Edges)
    } else {
        None
    }
}

/// Reads a topology file and aligns it to `node_ids`.
pub fn load_topology(path: &Path, format: TopologyFormat, node_ids: &[String]) -> Result<Topology> {
    let index: HashMap<&str, usize> = node_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for rec in reader(path)?.into_records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(KitsError::Data(format!(
                "{}: line {} has {} fields, expected 3",
                path.display(),
                line,
                rec.len()
            )));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    let has_header = rows.first().is_some_and(|(_, r)| r[2].parse::<f64>().is_err());
    let header = if has_header { Some(rows.remove(0).1) } else { None };
    let format = match format {
        TopologyFormat::Auto => header.as_deref().and_then(detect_format).ok_or_else(|| {
            KitsError::Config(format!("{}: cannot infer the topology format; name it explicitly", path.display()))
        })?,
        f => f,
    };
    let lookup = |line: usize, id: &str| -> Result<usize> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| KitsError::Data(format!("{}: line {}: unknown node id {:?}", path.display(), line, id)))
    };
    match format {
        TopologyFormat::Edges => {
            let mut edges = Vec::with_capacity(rows.len());
            for (line, r) in &rows {
                let d = parse_cell(path, *line, 2, &r[2])?;
                edges.push((lookup(*line, &r[0])?, lookup(*line, &r[1])?, d));
            }
            Ok(Topology::Edges(edges))
        }
        TopologyFormat::LatLon | TopologyFormat::Xy => {
            let mut coords: Vec<Option<[f64; 2]>> = vec![None; node_ids.len()];
            for (line, r) in &rows {
                let i = lookup(*line, &r[0])?;
                coords[i] = Some([parse_cell(path, *line, 1, &r[1])?, parse_cell(path, *line, 2, &r[2])?]);
            }
            if rows.len() != node_ids.len() {
                return Err(KitsError::Data(format!(
                    "{} readings columns but {} topology nodes in {}",
                    node_ids.len(),
                    rows.len(),
                    path.display()
                )));
            }
            let coords = coords
                .into_iter()
                .enumerate()
                .map(|(i, c)| c.ok_or_else(|| KitsError::Data(format!("node {} has no coordinates", node_ids[i]))))
                .collect::<Result<Vec<_>>>()?;
            let metric = if format == TopologyFormat::LatLon { Metric::Haversine } else { Metric::Euclidean };
            Ok(Topology::Coords { coords, metric })
        }
        TopologyFormat::Auto => unreachable!("resolved above"),
    }
}

pub fn load(readings: &Path, topology: &Path, format: TopologyFormat) -> Result<Dataset> {
    let (node_ids, timestamps, values) = load_readings(readings)?;
    let topology = load_topology(topology, format, &node_ids)?;
    let mut ds = Dataset::new(node_ids, values, topology)?;
    ds.timestamps = timestamps;
    Ok(ds)
}

/// Writes the readings table; values use the shortest round-tripping form.
pub fn save_readings(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<&str> = Vec::new();
    if ds.timestamps.is_some() {
        header.push("timestamp");
    }
    header.extend(ds.node_ids.iter().map(String::as_str));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let n = ds.n_nodes();
    for (s, row) in ds.readings.chunks(n).enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(n + 1);
        if let Some(ts) = &ds.timestamps {
            rec.push(ts[s].clone());
        }
        rec.extend(row.iter().map(|v| format!("{}", v)));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_topology(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let ids = &ds.node_ids;
    match &ds.topology {
        Topology::Edges(edges) => {
            w.write_record(["from", "to", "dist"]).map_err(|e| csv_error(path, e))?;
            for &(i, j, d) in edges {
                w.write_record([ids[i].clone(), ids[j].clone(), format!("{}", d)]).map_err(|e| csv_error(path, e))?;
            }
        }
        Topology::Coords { coords, metric } => {
            let header = match metric {
                Metric::Haversine => ["id", "lat", "lon"],
                Metric::Euclidean => ["id", "x", "y"],
            };
            w.write_record(header).map_err(|e| csv_error(path, e))?;
            for (id, c) in ids.iter().zip(coords) {
                w.write_record([id.clone(), format!("{}", c[0]), format!("{}", c[1])])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
