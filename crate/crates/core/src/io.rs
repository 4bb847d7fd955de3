//! Event CSV ingestion, snapshot export and the JSON model file.
//!
//! Events are CSV with header `time,source,target`; node labels are
//! arbitrary strings and receive indices in order of first appearance.
//! Snapshots are CSV `time,node,x,y[,z…]`. Floats are written in their
//! shortest round-trip decimal form, so reading back yields identical bits.
//!
//! The model file is a JSON object:
//!
//! ```text
//! {
//!   "format": "clpm-model",
//!   "version": 1,
//!   "variant": "distance" | "projection",
//!   "beta": f64,                      // 0 for projection
//!   "knots": [f64; K],
//!   "labels": [string; N],
//!   "positions": [[[f64; d]; K]; N],  // node, knot, coordinate
//!   "penalty": { "sigma0_sq": f64, "sigma_sq": f64, "mu_angle": f64 },
//!   "fit": null | { "seed": u64, "iterations": usize,
//!                   "objective": f64, "converged": bool }
//! }
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ClpmError, Result};
use crate::penalties::PenaltyParams;
use crate::trajectories::{interpolate, ChangePointGrid, Event, EventList, ModelState, TrajectorySet, Variant};

const MODEL_FORMAT: &str = "clpm-model";
const MODEL_VERSION: u32 = 1;

/// Events together with the label of every node index.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEvents {
    pub events: EventList,
    pub labels: Vec<String>,
}

impl LabeledEvents {
    /// Labels `"0"`, `"1"`, … for data generated with integer node ids.
    pub fn numbered(events: EventList) -> Self {
        let labels = (0..events.num_nodes()).map(|i| i.to_string()).collect();
        LabeledEvents { events, labels }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ClpmError + '_ {
    move |source| ClpmError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> ClpmError {
    ClpmError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> ClpmError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => ClpmError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

/// Reads an event CSV. Without `horizon` the window ends at the latest
/// event time (or 1 when the file has no events or only events at 0).
pub fn read_events(path: &Path, horizon: Option<f64>) -> Result<LabeledEvents> {
    let file = File::open(path).map_err(io_err(path))?;
    read_events_from(file, path, horizon)
}

fn read_events_from<R: std::io::Read>(reader: R, path: &Path, horizon: Option<f64>) -> Result<LabeledEvents> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected = ["time", "source", "target"];
    if header.len() != 3 || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header `time,source,target`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut intern = |label: &str| -> usize {
        if let Some(&k) = index.get(label) {
            return k;
        }
        labels.push(label.to_string());
        index.insert(label.to_string(), labels.len() - 1);
        labels.len() - 1
    };

    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let time: f64 = record[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid time `{}`", &record[0])))?;
        if !time.is_finite() || time < 0.0 {
            return Err(parse_err(
                path,
                line,
                format!("time must be finite and non-negative, got {time}"),
            ));
        }
        if record[1].is_empty() || record[2].is_empty() {
            return Err(parse_err(path, line, "empty node label"));
        }
        if record[1] == record[2] {
            return Err(parse_err(path, line, format!("self loop on node `{}`", &record[1])));
        }
        let a = intern(&record[1]);
        let b = intern(&record[2]);
        events.push((line, Event::new(time, a, b)));
    }

    let latest = events.iter().map(|(_, e)| e.time).fold(0.0, f64::max);
    let horizon = match horizon {
        Some(h) => {
            if let Some((line, e)) = events.iter().find(|(_, e)| e.time > h) {
                return Err(parse_err(
                    path,
                    *line,
                    format!("time {} exceeds the horizon {h}", e.time),
                ));
            }
            h
        }
        None if latest > 0.0 => latest,
        None => 1.0,
    };
    let num_nodes = labels.len();
    let events = EventList::new(events.into_iter().map(|(_, e)| e).collect(), horizon, num_nodes)?;
    Ok(LabeledEvents { events, labels })
}

/// Re-indexes `events` to follow `labels` (for instance the node order of
/// a model file) and moves them onto the window `[0, horizon]`.
pub fn align_events(events: &LabeledEvents, labels: &[String], horizon: f64) -> Result<EventList> {
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    let lookup = |k: usize| -> Result<usize> {
        let label = &events.labels[k];
        index
            .get(label.as_str())
            .copied()
            .ok_or_else(|| ClpmError::InvalidEvents(format!("node `{label}` is not in the model")))
    };
    let mapped = events
        .events
        .iter()
        .map(|e| Ok(Event::new(e.time, lookup(e.a)?, lookup(e.b)?)))
        .collect::<Result<Vec<_>>>()?;
    EventList::new(mapped, horizon, labels.len())
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory that is renamed into place.
pub fn write_atomic(path: &Path, contents: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        contents(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| ClpmError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_events(events: &LabeledEvents, path: &Path) -> Result<()> {
    if events.labels.len() != events.events.num_nodes() {
        return Err(ClpmError::Domain(format!(
            "{} labels for {} nodes",
            events.labels.len(),
            events.events.num_nodes()
        )));
    }
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "source", "target"])?;
        for e in events.events.iter() {
            out.write_record([
                e.time.to_string().as_str(),
                events.labels[e.a].as_str(),
                events.labels[e.b].as_str(),
            ])?;
        }
        out.flush()
    })
}

/// One row per `(time, node)`, with positions from [`interpolate`]. Node
/// names come from `labels` when given and are the node index otherwise.
pub fn write_snapshots(
    state: &ModelState,
    grid: &ChangePointGrid,
    times: &[f64],
    labels: Option<&[String]>,
    path: &Path,
) -> Result<()> {
    let rows = snapshot_rows(state, grid, times)?;
    let n = state.num_nodes();
    if let Some(l) = labels {
        if l.len() != n {
            return Err(ClpmError::Domain(format!("{} labels for {n} nodes", l.len())));
        }
    }
    let dim = state.dim();
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string(), "node".to_string()];
        header.extend(coordinate_names(dim));
        out.write_record(&header)?;
        for (t, node, pos) in &rows {
            let name = labels.map_or_else(|| node.to_string(), |l| l[*node].clone());
            let mut record = vec![t.to_string(), name];
            record.extend(pos.iter().map(f64::to_string));
            out.write_record(&record)?;
        }
        out.flush()
    })
}

/// `(time, node, position)` for every requested time and node, time-major.
pub fn snapshot_rows(state: &ModelState, grid: &ChangePointGrid, times: &[f64]) -> Result<Vec<(f64, usize, Vec<f64>)>> {
    let traj = state.trajectories();
    let mut rows = Vec::with_capacity(times.len() * traj.num_nodes());
    for &t in times {
        for node in 0..traj.num_nodes() {
            rows.push((t, node, interpolate(traj, grid, node, t)?));
        }
    }
    Ok(rows)
}

/// `x`, `y`, `z`, then `x4`, `x5`, … for higher dimensions.
pub fn coordinate_names(dim: usize) -> Vec<String> {
    (0..dim)
        .map(|k| match k {
            0 => "x".to_string(),
            1 => "y".to_string(),
            2 => "z".to_string(),
            _ => format!("x{}", k + 1),
        })
        .collect()
}

/// `count` equally spaced times covering `[0, horizon]` inclusive.
pub fn uniform_times(horizon: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count)
            .map(|k| {
                if k + 1 == count {
                    horizon
                } else {
                    horizon * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub seed: u64,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
}

/// In-memory form of the model file.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub state: ModelState,
    pub grid: ChangePointGrid,
    pub labels: Vec<String>,
    pub penalty: PenaltyParams,
    pub fit: Option<FitMetadata>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    format: String,
    version: u32,
    variant: Variant,
    beta: f64,
    knots: Vec<f64>,
    labels: Vec<String>,
    positions: Vec<Vec<Vec<f64>>>,
    penalty: PenaltyParams,
    fit: Option<FitMetadata>,
}

impl ModelFile {
    pub fn new(state: ModelState, grid: ChangePointGrid, labels: Vec<String>, penalty: PenaltyParams) -> Result<Self> {
        state.trajectories().check_grid(&grid)?;
        if labels.len() != state.num_nodes() {
            return Err(ClpmError::Domain(format!(
                "{} labels for {} nodes",
                labels.len(),
                state.num_nodes()
            )));
        }
        Ok(ModelFile {
            state,
            grid,
            labels,
            penalty,
            fit: None,
        })
    }

    pub fn with_fit(mut self, fit: FitMetadata) -> Self {
        self.fit = Some(fit);
        self
    }
}

pub fn write_model(model: &ModelFile, path: &Path) -> Result<()> {
    let json = ModelJson {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        variant: model.state.variant(),
        beta: model.state.beta(),
        knots: model.grid.knots().to_vec(),
        labels: model.labels.clone(),
        positions: model.state.trajectories().to_nested(),
        penalty: model.penalty,
        fit: model.fit,
    };
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &json)?;
        writeln!(w)
    })
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let format_err = |message: String| ClpmError::Format {
        path: path.to_path_buf(),
        message,
    };
    let json: ModelJson = serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))?;
    if json.format != MODEL_FORMAT || json.version != MODEL_VERSION {
        return Err(format_err(format!(
            "unsupported model format `{}` version {}",
            json.format, json.version
        )));
    }
    let wrap = |e: ClpmError| format_err(e.to_string());
    let grid = ChangePointGrid::new(json.knots).map_err(wrap)?;
    let traj = TrajectorySet::from_nested(&json.positions).map_err(wrap)?;
    let state = ModelState::new(json.variant, traj, json.beta).map_err(wrap)?;
    json.penalty.validate().map_err(wrap)?;
    let model = ModelFile::new(state, grid, json.labels, json.penalty).map_err(wrap)?;
    Ok(ModelFile { fit: json.fit, ..model })
}

/// Parses a grid specification: `start:end:K` for `K` uniform knots
/// (`start` must be 0), or a comma-separated knot list.
pub fn parse_grid_spec(spec: &str) -> Result<ChangePointGrid> {
    let bad = |msg: String| ClpmError::InvalidGrid(format!("`{spec}`: {msg}"));
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("`{}` is not a number", s.trim())))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, end, k] = parts.as_slice() else {
            return Err(bad("expected start:end:K".into()));
        };
        let start = num(start)?;
        if start != 0.0 {
            return Err(bad(format!("grid must start at 0, got {start}")));
        }
        let end = num(end)?;
        let k: usize = k
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a knot count", k.trim())))?;
        ChangePointGrid::uniform(end, k)
    } else {
        let knots = spec.split(',').map(num).collect::<Result<Vec<f64>>>()?;
        ChangePointGrid::new(knots)
    }
}

/// Parses snapshot times: `start:end:count` for evenly spaced times
/// (inclusive of both ends) or a comma-separated list.
pub fn parse_times(spec: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| ClpmError::Domain(format!("times `{spec}`: {msg}"));
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("`{}` is not a number", s.trim())))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, end, count] = parts.as_slice() else {
            return Err(bad("expected start:end:count".into()));
        };
        let (start, end) = (num(start)?, num(end)?);
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a count", count.trim())))?;
        if end < start {
            return Err(bad("end precedes start".into()));
        }
        Ok(uniform_times(end - start, count)
            .into_iter()
            .map(|t| start + t)
            .collect())
    } else {
        spec.split(',').map(num).collect()
    }
}
