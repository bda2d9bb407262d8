//! Parameter sweeps over scenario fields.
//!
//! A grid axis names a dotted path into the scenario document
//! (`topology.bandwidth_gbps`, `traffic.0.sources`) and a list of values.
//! Points are the Cartesian product, first axis varying slowest.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{fmt_ns, summarize, RunMetrics};
use crate::sim::{self, mix64, Scenario, SimError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("grid: {0}")]
    Grid(String),
    #[error("point {index}: {source}")]
    Point { index: usize, source: SimError },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

impl GridAxis {
    /// Parses `path=v1,v2,...`. Values are TOML scalars; bare words become strings.
    pub fn parse(arg: &str) -> Result<Self, SweepError> {
        let (path, values) = arg
            .split_once('=')
            .ok_or_else(|| SweepError::Grid(format!("'{arg}' is not key=v1,v2,...")))?;
        let path = path.trim();
        if path.is_empty() {
            return Err(SweepError::Grid(format!("'{arg}' has an empty key")));
        }
        let values: Vec<toml::Value> = values.split(',').map(|v| parse_scalar(v.trim())).collect();
        if values
            .iter()
            .any(|v| matches!(v, toml::Value::String(s) if s.is_empty()))
        {
            return Err(SweepError::Grid(format!("'{arg}' has an empty value")));
        }
        Ok(GridAxis {
            path: path.to_string(),
            values,
        })
    }
}

fn parse_scalar(s: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

fn display(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Seed of sweep point `index`.
pub fn point_seed(base_seed: u64, index: usize) -> u64 {
    mix64(base_seed ^ mix64(index as u64))
}

pub const SEED_RULE: &str = "point_seed = splitmix64(base_seed XOR splitmix64(point_index))";

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub params: Vec<(String, String)>,
    pub scenario: Scenario,
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), String> {
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                // optional sections may be absent from the serialized form
                t.entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| format!("'{part}' in '{path}' is not an array index"))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| format!("index {idx} in '{path}' out of range ({len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("'{path}' descends into a scalar")),
        };
    }
    Err(format!("empty path '{path}'"))
}

/// Applies `path=value` assignments to a scenario; the seed is left alone unless assigned.
pub fn apply_overrides(base: &Scenario, assignments: &[String]) -> Result<Scenario, SweepError> {
    let mut value = toml::Value::try_from(base).map_err(|e| SweepError::Grid(e.to_string()))?;
    for a in assignments {
        let (path, raw) = a
            .split_once('=')
            .ok_or_else(|| SweepError::Grid(format!("'{a}' is not key=value")))?;
        set_path(&mut value, path.trim(), parse_scalar(raw.trim())).map_err(SweepError::Grid)?;
    }
    let scenario: Scenario = value
        .try_into()
        .map_err(|e: toml::de::Error| SweepError::Grid(e.message().to_string()))?;
    scenario
        .resolve()
        .map_err(|source| SweepError::Point { index: 0, source })?;
    Ok(scenario)
}

/// Expands and validates every point before anything runs.
pub fn expand(base: &Scenario, grid: &[GridAxis]) -> Result<Vec<SweepPoint>, SweepError> {
    let base_value = toml::Value::try_from(base).map_err(|e| SweepError::Grid(e.to_string()))?;
    let sweeps_seed = grid.iter().any(|a| a.path == "seed");
    let total: usize = grid.iter().map(|a| a.values.len()).product();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut value = base_value.clone();
        let mut params = Vec::with_capacity(grid.len());
        let mut rem = index;
        let mut picks = vec![0; grid.len()];
        for (i, axis) in grid.iter().enumerate().rev() {
            picks[i] = rem % axis.values.len();
            rem /= axis.values.len();
        }
        for (axis, &pick) in grid.iter().zip(&picks) {
            let v = axis.values[pick].clone();
            params.push((axis.path.clone(), display(&v)));
            set_path(&mut value, &axis.path, v).map_err(SweepError::Grid)?;
        }
        let mut scenario: Scenario = value
            .try_into()
            .map_err(|e: toml::de::Error| SweepError::Grid(format!("point {index}: {}", e.message())))?;
        if !sweeps_seed {
            scenario.seed = point_seed(base.seed, index);
        }
        scenario
            .resolve()
            .map_err(|source| SweepError::Point { index, source })?;
        points.push(SweepPoint {
            index,
            params,
            scenario,
        });
    }
    Ok(points)
}

#[derive(Debug)]
pub struct PointResult {
    pub point: SweepPoint,
    pub outcome: Result<RunMetrics, SimError>,
}

/// Runs every point; `jobs` bounds the worker threads (`None` = all cores).
pub fn run_sweep(base: &Scenario, grid: &[GridAxis], jobs: Option<usize>) -> Result<Vec<PointResult>, SweepError> {
    let points = expand(base, grid)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| SweepError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        points
            .into_par_iter()
            .map(|point| {
                let outcome = sim::run(&point.scenario);
                PointResult { point, outcome }
            })
            .collect()
    }))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary<W: Write>(mut w: W, base_seed: u64, grid: &[GridAxis], results: &[PointResult]) -> io::Result<()> {
    writeln!(w, "# {SEED_RULE}")?;
    writeln!(w, "# base_seed = {base_seed}")?;
    let mut header = vec!["point".to_string(), "seed".to_string()];
    header.extend(grid.iter().map(|a| a.path.clone()));
    header.extend(
        [
            "status",
            "flows",
            "completed",
            "p50_fct_ns",
            "p99_fct_ns",
            "aggregate_goodput_gbps",
            "total_retx_bytes",
            "total_drops",
            "peak_occupancy_bytes",
            "pause_frames",
            "headroom_bytes",
        ]
        .map(String::from),
    );
    writeln!(w, "{}", header.join(","))?;
    for r in results {
        let mut row = vec![r.point.index.to_string(), r.point.scenario.seed.to_string()];
        row.extend(r.point.params.iter().map(|(_, v)| v.clone()));
        let (status, metrics) = match &r.outcome {
            Ok(m) => ("ok", Some(m)),
            Err(SimError::Deadlock(rep)) => ("deadlock", Some(&rep.metrics)),
            Err(_) => ("error", None),
        };
        row.push(status.to_string());
        match metrics {
            Some(m) => {
                let s = summarize(m);
                row.extend([
                    s.flows.to_string(),
                    s.completed.to_string(),
                    opt(s.p50_fct.map(fmt_ns)),
                    opt(s.p99_fct.map(fmt_ns)),
                    opt(s.aggregate_goodput_gbps.map(|g| format!("{g:.3}"))),
                    s.total_retx_bytes.to_string(),
                    s.total_drops.to_string(),
                    s.peak_occupancy_bytes.to_string(),
                    s.pause_frames.to_string(),
                    m.headroom_bytes.to_string(),
                ]);
            }
            None => row.extend(std::iter::repeat_n(String::new(), 10)),
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes `summary.csv` and `point_<i>/{flows,ports}.csv` under `out`.
pub fn write_sweep(out: &Path, base_seed: u64, grid: &[GridAxis], results: &[PointResult]) -> io::Result<()> {
    fs::create_dir_all(out)?;
    write_summary(
        io::BufWriter::new(fs::File::create(out.join("summary.csv"))?),
        base_seed,
        grid,
        results,
    )?;
    for r in results {
        let metrics = match &r.outcome {
            Ok(m) => m,
            Err(SimError::Deadlock(rep)) => &rep.metrics,
            Err(_) => continue,
        };
        let dir = out.join(format!("point_{}", r.point.index));
        fs::create_dir_all(&dir)?;
        metrics.write_flows_csv(io::BufWriter::new(fs::File::create(dir.join("flows.csv"))?))?;
        metrics.write_ports_csv(io::BufWriter::new(fs::File::create(dir.join("ports.csv"))?))?;
        if let Err(SimError::Deadlock(rep)) = &r.outcome {
            fs::write(dir.join("deadlock.txt"), rep.render())?;
        }
    }
    Ok(())
}
