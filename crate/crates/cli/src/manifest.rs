use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(sha256_bytes(&bytes))
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl FileEntry {
    pub fn input(role: &str, path: &Path) -> Result<Self> {
        Ok(Self {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub name: String,
    /// Absent for artifacts that legitimately differ between reruns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Conversion {
    pub filled: usize,
    pub holes: usize,
    pub conflicts: usize,
    pub out_of_bounds: usize,
}

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when no mutually visible pixel was evaluated.
    pub bad4: Option<f64>,
    pub evaluated_pixels: usize,
}

#[derive(Debug, Serialize)]
pub struct Shape {
    pub coeffs: [f64; 6],
    /// Value at the image centre.
    pub center_value: f64,
}

/// Everything needed to reproduce and audit a `run`. Contains no timing, so
/// identical inputs give an identical manifest.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: BTreeMap<String, String>,
    pub d_max: usize,
    pub init_ellipse: [f64; 4],
    pub inputs: Vec<FileEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_view: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_conversion: Option<Conversion>,
    pub outputs: Vec<OutputEntry>,
    pub trace: String,
    /// PNG gray level per disparity unit in `disparity.png`.
    pub disparity_png_scale: f64,
    pub status: &'static str,
    pub iterations: usize,
    pub theta_foreground: Shape,
    pub theta_background: Shape,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}
