use std::path::Path;

use anyhow::Result;
use levelstereo::io::atomic_write_bytes;
use levelstereo::solver::TraceRecord;

pub const METRICS_HEADER: [&str; 7] = [
    "scene_id",
    "precision",
    "recall",
    "f1",
    "bad4",
    "iterations",
    "wall_time",
];

/// One metrics row; absent values are written as empty fields.
pub struct MetricsRow<'a> {
    pub scene_id: &'a str,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub bad4: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time: Option<f64>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn metrics_csv(row: &MetricsRow) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    w.write_record([
        row.scene_id.to_string(),
        row.precision.to_string(),
        row.recall.to_string(),
        row.f1.to_string(),
        opt(row.bad4),
        opt(row.iterations),
        opt(row.wall_time),
    ])?;
    Ok(w.into_inner()?)
}

pub fn trace_csv(trace: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "iteration",
        "energy",
        "boundary_change",
        "foreground_pixels",
        "background_pixels",
        "occluded_pixels",
    ])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            r.energy.to_string(),
            r.boundary_change.to_string(),
            r.foreground_pixels.to_string(),
            r.background_pixels.to_string(),
            r.occluded_pixels.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write_bytes(path, bytes)?;
    Ok(())
}
