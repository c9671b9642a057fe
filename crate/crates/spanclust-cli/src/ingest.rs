//! CSV ingestion and emission: the edge list and the observation panel.
//!
//! Edge lists are two-column CSV (`from,to`) with external region ids and an
//! optional third `weight` column. Panels are `region,time,y` with an
//! optional `population` or `expected` column providing the log offset.
//! Lines starting with `#` are treated as comments in all readers.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use spanclust::graph::SpatialGraph;
use spanclust::model::Panel;

fn csv_reader(path: &Path) -> Result<csv::Reader<Box<dyn std::io::Read>>> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(Box::new(file) as Box<dyn std::io::Read>))
}

/// The edge list with region ids in order of first appearance.
pub struct EdgeList {
    pub region_ids: Vec<String>,
    pub edges: Vec<(u32, u32)>,
    pub weights: Option<Vec<f64>>,
}

pub fn read_edges(path: &Path) -> Result<EdgeList> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (from_col, to_col) = match (col("from"), col("to")) {
        (Some(f), Some(t)) => (f, t),
        _ => bail!("edge list must have 'from' and 'to' columns"),
    };
    let weight_col = col("weight");

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let intern = |name: &str, ids: &mut Vec<String>, index: &mut HashMap<String, u32>| -> u32 {
        if let Some(&i) = index.get(name) {
            return i;
        }
        let i = ids.len() as u32;
        ids.push(name.to_string());
        index.insert(name.to_string(), i);
        i
    };
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for record in reader.records() {
        let record = record?;
        let a = intern(record[from_col].trim(), &mut ids, &mut index);
        let b = intern(record[to_col].trim(), &mut ids, &mut index);
        edges.push((a, b));
        if let Some(w) = weight_col {
            let value: f64 = record[w]
                .trim()
                .parse()
                .with_context(|| format!("bad weight '{}'", &record[w]))?;
            weights.push(value);
        }
    }
    Ok(EdgeList {
        region_ids: ids,
        edges,
        weights: (!weights.is_empty()).then_some(weights),
    })
}

/// Reads the panel and aligns it with the graph's region ids. Times are
/// sorted ascending and densely indexed; the panel must be a complete
/// rectangle.
pub fn read_panel(path: &Path, graph: &SpatialGraph, family: &str) -> Result<Panel> {
    let region_ids = graph
        .region_ids()
        .context("graph carries no region ids")?;
    let index: HashMap<&str, usize> = region_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (region_col, time_col, y_col) = match (col("region"), col("time"), col("y")) {
        (Some(r), Some(t), Some(y)) => (r, t, y),
        _ => bail!("panel must have 'region', 'time' and 'y' columns"),
    };
    let offset_col = col("population").or_else(|| col("expected"));
    if family == "poisson" && offset_col.is_none() {
        bail!("poisson family needs a 'population' or 'expected' column");
    }

    struct Row {
        region: usize,
        time: f64,
        y: f64,
        offset: f64,
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let region_id = record[region_col].trim();
        let region = *index
            .get(region_id)
            .with_context(|| format!("unknown region '{region_id}' (not in the edge list)"))?;
        let time: f64 = record[time_col]
            .trim()
            .parse()
            .with_context(|| format!("bad time '{}'", &record[time_col]))?;
        let y: f64 = record[y_col]
            .trim()
            .parse()
            .with_context(|| format!("bad y '{}'", &record[y_col]))?;
        if family == "poisson" && (y < 0.0 || y.fract() != 0.0) {
            bail!("non-integer count {y} for region '{region_id}' at time {time}");
        }
        let offset = match offset_col {
            Some(c) => {
                let v: f64 = record[c]
                    .trim()
                    .parse()
                    .with_context(|| format!("bad offset '{}'", &record[c]))?;
                if v <= 0.0 {
                    bail!("population/expected must be positive, got {v}");
                }
                v.ln()
            }
            None => 0.0,
        };
        rows.push(Row {
            region,
            time,
            y,
            offset,
        });
    }

    let mut times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let time_index: HashMap<u64, usize> = times
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_bits(), i))
        .collect();

    let n = region_ids.len();
    let t_len = times.len();
    let mut y = DMatrix::from_element(n, t_len, f64::NAN);
    let mut offset = DMatrix::zeros(n, t_len);
    let mut seen = vec![false; n * t_len];
    for row in rows {
        let t = time_index[&row.time.to_bits()];
        let cell = row.region * t_len + t;
        if seen[cell] {
            bail!(
                "duplicate cell for region '{}' at time {}",
                region_ids[row.region],
                times[t]
            );
        }
        seen[cell] = true;
        y[(row.region, t)] = row.y;
        offset[(row.region, t)] = row.offset;
    }
    for region in 0..n {
        for t in 0..t_len {
            if !seen[region * t_len + t] {
                bail!(
                    "missing cell: region '{}' at time {}",
                    region_ids[region],
                    times[t]
                );
            }
        }
    }
    Panel::new(y, offset, times).context("validating panel")
}

/// Reads edges and panel together, building the validated graph first.
pub fn ingest(panel_path: &Path, edges_path: &Path, family: &str) -> Result<(SpatialGraph, Panel)> {
    let edge_list = read_edges(edges_path)?;
    let graph = SpatialGraph::new(
        edge_list.region_ids.len(),
        &edge_list.edges,
        Some(edge_list.region_ids),
    )
    .context("building region graph")?;
    let panel = read_panel(panel_path, &graph, family)?;
    Ok((graph, panel))
}

/// Reads a membership CSV (`region,cluster`) keyed by region id.
pub fn read_membership(path: &Path) -> Result<Vec<(String, u32)>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers()?.clone();
    let region_col = headers
        .iter()
        .position(|h| h.trim() == "region")
        .context("membership file needs a 'region' column")?;
    let cluster_col = headers
        .iter()
        .position(|h| {
            let h = h.trim();
            h == "cluster" || h == "true_cluster"
        })
        .context("membership file needs a 'cluster' or 'true_cluster' column")?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let cluster: u32 = record[cluster_col]
            .trim()
            .parse()
            .with_context(|| format!("bad cluster label '{}'", &record[cluster_col]))?;
        out.push((record[region_col].trim().to_string(), cluster));
    }
    if out.is_empty() {
        bail!("membership file {} is empty", path.display());
    }
    Ok(out)
}
