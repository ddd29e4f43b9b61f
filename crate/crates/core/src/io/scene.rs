use std::path::{Path, PathBuf};

use log::info;

use crate::error::{invalid, Result};
use crate::evaluation::boundary_from_disparity;
use crate::grid::{Mask, ScalarField};
use crate::image::ImagePair;

/// Coordinate frame a ground-truth disparity map is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtView {
    /// Per cyclopean pixel, half the left-right offset (this crate's convention).
    Cyclopean,
    /// Per left-image pixel, the full left-right offset (Middlebury convention).
    Left,
}

impl GtView {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cyclopean" => Some(GtView::Cyclopean),
            "left" => Some(GtView::Left),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GtView::Cyclopean => "cyclopean",
            GtView::Left => "left",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConversionReport {
    /// Cyclopean pixels that received a value.
    pub filled: usize,
    /// Cyclopean pixels left without data (occluded or missing in the source).
    pub holes: usize,
    /// Source pixels discarded because a nearer surface claimed the target.
    pub conflicts: usize,
    /// Source pixels that landed outside the image.
    pub out_of_bounds: usize,
}

/// Warps a left-view disparity map `D_L` to cyclopean coordinates: the left
/// pixel `x` lands at `round(x - D_L/2)` with value `D_L/2`; on collisions
/// the larger (nearer) disparity wins. NaN marks missing data both ways.
pub fn left_to_cyclopean(left: &ScalarField) -> (ScalarField, ConversionReport) {
    let (w, h) = (left.width(), left.height());
    let mut out = ScalarField::filled(w, h, f64::NAN);
    let mut report = ConversionReport::default();
    for y in 0..h {
        for x in 0..w {
            let d = left[(x, y)];
            if !d.is_finite() {
                continue;
            }
            let xc = (x as f64 - d / 2.0).round();
            if xc < 0.0 || xc >= w as f64 {
                report.out_of_bounds += 1;
                continue;
            }
            let slot = &mut out[(xc as usize, y)];
            if slot.is_nan() {
                *slot = d / 2.0;
            } else {
                report.conflicts += 1;
                *slot = slot.max(d / 2.0);
            }
        }
    }
    report.filled = out.iter().filter(|v| !v.is_nan()).count();
    report.holes = w * h - report.filled;
    (out, report)
}

/// A stereo pair with optional ground truth, all in cyclopean coordinates.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub pair: ImagePair,
    pub gt_disparity: Option<ScalarField>,
    /// Frame the ground truth was supplied in.
    pub gt_view: Option<GtView>,
    pub conversion: Option<ConversionReport>,
    pub gt_boundary: Option<Mask>,
    /// Files the bundle was read from, in load order.
    pub sources: Vec<PathBuf>,
}

impl SceneBundle {
    pub fn load(
        left: &Path,
        right: &Path,
        d_max: usize,
        gt: Option<(&Path, GtView)>,
        gt_boundary: Option<&Path>,
    ) -> Result<Self> {
        let pair = ImagePair::new(super::read_image(left)?, super::read_image(right)?, d_max)?;
        let mut sources = vec![left.to_path_buf(), right.to_path_buf()];
        let (mut gt_disparity, mut conversion) = (None, None);
        if let Some((path, view)) = gt {
            let raw = super::read_pfm(path)?;
            sources.push(path.to_path_buf());
            let field = match view {
                GtView::Cyclopean => raw,
                GtView::Left => {
                    let (field, report) = left_to_cyclopean(&raw);
                    info!(
                        "left-view ground truth converted: {} filled, {} holes, {} conflicts, {} out of bounds",
                        report.filled, report.holes, report.conflicts, report.out_of_bounds
                    );
                    conversion = Some(report);
                    field
                }
            };
            gt_disparity = Some(field);
        }
        let boundary = match gt_boundary {
            Some(p) => {
                sources.push(p.to_path_buf());
                Some(super::read_mask(p)?)
            }
            None => None,
        };
        let bundle = Self {
            pair,
            gt_disparity,
            gt_view: gt.map(|(_, v)| v),
            conversion: conversion.take(),
            gt_boundary: boundary,
            sources,
        };
        bundle.check_dimensions()?;
        Ok(bundle)
    }

    fn check_dimensions(&self) -> Result<()> {
        let (w, h) = (self.pair.width(), self.pair.height());
        if let Some(g) = &self.gt_disparity {
            if (g.width(), g.height()) != (w, h) {
                return Err(invalid(format!(
                    "ground truth is {}x{}, images are {w}x{h}",
                    g.width(),
                    g.height()
                )));
            }
        }
        if let Some(b) = &self.gt_boundary {
            if (b.width(), b.height()) != (w, h) {
                return Err(invalid(format!(
                    "boundary mask is {}x{}, images are {w}x{h}",
                    b.width(),
                    b.height()
                )));
            }
        }
        Ok(())
    }

    /// The supplied boundary mask, or one derived from disparity jumps.
    pub fn boundary(&self) -> Option<Mask> {
        self.gt_boundary
            .clone()
            .or_else(|| self.gt_disparity.as_ref().map(boundary_from_disparity))
    }
}
