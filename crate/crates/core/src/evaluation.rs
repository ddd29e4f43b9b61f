//! Ground-truth occlusion derivation, the evaluation band around true
//! boundaries, occlusion F1 and bad-4.0.

use crate::grid::{Mask, ScalarField};

/// Disparity difference between horizontal neighbours that counts as a jump.
pub const JUMP_THRESHOLD: f64 = 0.5;
/// Band limits in epipolar pixels from the nearest true boundary pixel.
pub const BAND_MIN: usize = 2;
pub const BAND_MAX: usize = 20;

#[inline]
fn jump(d: &ScalarField, from: (usize, usize), to: (usize, usize)) -> bool {
    let (a, b) = (d[from], d[to]);
    a.is_finite() && b.is_finite() && a - b > JUMP_THRESHOLD
}

/// Foreground-side pixels of disparity jumps: finite pixels with a
/// 4-neighbour more than [`JUMP_THRESHOLD`] farther away. For figures clear
/// of the image border this equals the generator's boundary mask.
pub fn boundary_from_disparity(d: &ScalarField) -> Mask {
    let (w, h) = (d.width(), d.height());
    Mask::from_fn(w, h, |x, y| {
        let mut n = Vec::with_capacity(4);
        if x > 0 {
            n.push((x - 1, y));
        }
        if x + 1 < w {
            n.push((x + 1, y));
        }
        if y > 0 {
            n.push((x, y - 1));
        }
        if y + 1 < h {
            n.push((x, y + 1));
        }
        n.into_iter().any(|q| jump(d, (x, y), q))
    })
}

/// Marks, along each scanline, the background run hidden behind every
/// foreground boundary pixel: right of right edges (`x + D(x) ≤ b + D(b)`)
/// and left of left edges (`x − D(x) ≥ b − D(b)`), within half a pixel.
pub fn derive_gt_occlusion(gt_disparity: &ScalarField, gt_boundary: &Mask) -> Mask {
    assert!(
        gt_disparity.same_shape(gt_boundary),
        "disparity and boundary differ in shape"
    );
    let (w, h) = (gt_disparity.width(), gt_disparity.height());
    let d = gt_disparity;
    let mut out = Mask::filled(w, h, false);
    for y in 0..h {
        for b in 0..w {
            if !gt_boundary[(b, y)] || !d[(b, y)].is_finite() {
                continue;
            }
            let db = d[(b, y)];
            if b + 1 < w && jump(d, (b, y), (b + 1, y)) {
                for x in b + 1..w {
                    let dx = d[(x, y)];
                    if !dx.is_finite() {
                        continue;
                    }
                    if dx > db - JUMP_THRESHOLD || x as f64 + dx > b as f64 + db + JUMP_THRESHOLD {
                        break;
                    }
                    out[(x, y)] = true;
                }
            }
            if b > 0 && jump(d, (b, y), (b - 1, y)) {
                for x in (0..b).rev() {
                    let dx = d[(x, y)];
                    if !dx.is_finite() {
                        continue;
                    }
                    if dx > db - JUMP_THRESHOLD || (x as f64 - dx) < b as f64 - db - JUMP_THRESHOLD {
                        break;
                    }
                    out[(x, y)] = true;
                }
            }
        }
    }
    out
}

/// The evaluated pixels: `BAND_MIN..=BAND_MAX` epipolar pixels from the
/// nearest true boundary pixel, split by the side of that boundary.
#[derive(Debug, Clone)]
pub struct EvalRegion {
    pub fg_band: Mask,
    pub bg_band: Mask,
    pub gt_occlusion: Mask,
    pub gt_disparity: ScalarField,
}

impl EvalRegion {
    /// Band pixels with finite ground truth.
    pub fn evaluated(&self) -> Mask {
        Mask::from_fn(self.fg_band.width(), self.fg_band.height(), |x, y| {
            (self.fg_band[(x, y)] || self.bg_band[(x, y)]) && self.gt_disparity[(x, y)].is_finite()
        })
    }

    /// Replaces the derived occlusion mask with a known one (e.g. from a
    /// generator or a dataset).
    pub fn with_occlusion(mut self, gt_occlusion: Mask) -> Self {
        assert!(gt_occlusion.same_shape(&self.fg_band));
        self.gt_occlusion = gt_occlusion;
        self
    }
}

pub fn build_eval_region(gt_boundary: &Mask, gt_disparity: &ScalarField) -> EvalRegion {
    assert!(
        gt_disparity.same_shape(gt_boundary),
        "disparity and boundary differ in shape"
    );
    let (w, h) = (gt_boundary.width(), gt_boundary.height());
    let mut fg_band = Mask::filled(w, h, false);
    let mut bg_band = Mask::filled(w, h, false);
    for y in 0..h {
        let bounds: Vec<usize> = (0..w).filter(|&x| gt_boundary[(x, y)]).collect();
        if bounds.is_empty() {
            continue;
        }
        // which side of each boundary pixel holds the (nearer-disparity-lower) background
        let bg_side = |b: usize| -> (bool, bool) {
            let right = b + 1 < w && jump(gt_disparity, (b, y), (b + 1, y));
            let left = b > 0 && jump(gt_disparity, (b, y), (b - 1, y));
            (left, right)
        };
        let mut k = 0;
        for x in 0..w {
            // nearest boundary pixel, ties to the left one
            while k + 1 < bounds.len() && bounds[k + 1].abs_diff(x) < bounds[k].abs_diff(x) {
                k += 1;
            }
            let b = bounds[k];
            let dist = b.abs_diff(x);
            if !(BAND_MIN..=BAND_MAX).contains(&dist) {
                continue;
            }
            let (left_bg, right_bg) = bg_side(b);
            let is_bg = if x > b { right_bg } else { left_bg };
            if is_bg {
                bg_band[(x, y)] = true;
            } else {
                fg_band[(x, y)] = true;
            }
        }
    }
    EvalRegion {
        fg_band,
        bg_band,
        gt_occlusion: derive_gt_occlusion(gt_disparity, gt_boundary),
        gt_disparity: gt_disparity.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Precision, recall and F1 of `predicted` against the ground-truth
/// occlusions, both restricted to the evaluated band. Both sets empty scores
/// 1; exactly one empty scores 0.
pub fn occlusion_f1(predicted: &Mask, region: &EvalRegion) -> F1Score {
    assert!(
        predicted.same_shape(&region.gt_occlusion),
        "prediction and region differ in shape"
    );
    let eval = region.evaluated();
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for ((&e, &p), &g) in eval.iter().zip(predicted.iter()).zip(region.gt_occlusion.iter()) {
        if !e {
            continue;
        }
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let (npred, ngt) = (tp + fp, tp + fneg);
    let (precision, recall, f1) = match (npred, ngt) {
        (0, 0) => (1.0, 1.0, 1.0),
        (0, _) => (0.0, 0.0, 0.0),
        (_, 0) => (0.0, 0.0, 0.0),
        _ => {
            let p = tp as f64 / npred as f64;
            let r = tp as f64 / ngt as f64;
            let f = if tp == 0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        }
    };
    F1Score {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
    }
}

/// Fraction of mutually visible evaluated pixels whose error exceeds
/// `threshold`; `None` when nothing is evaluated.
pub fn bad_pixels(disparity: &ScalarField, region: &EvalRegion, threshold: f64) -> Option<f64> {
    assert!(
        disparity.same_shape(&region.gt_disparity),
        "disparity and region differ in shape"
    );
    let eval = region.evaluated();
    let (mut n, mut bad) = (0usize, 0usize);
    for y in 0..eval.height() {
        for x in 0..eval.width() {
            if !eval[(x, y)] || region.gt_occlusion[(x, y)] {
                continue;
            }
            n += 1;
            let err = (disparity[(x, y)] - region.gt_disparity[(x, y)]).abs();
            // a non-finite estimate is always wrong
            if !(err <= threshold) {
                bad += 1;
            }
        }
    }
    (n > 0).then(|| bad as f64 / n as f64)
}

pub fn bad4(disparity: &ScalarField, region: &EvalRegion) -> Option<f64> {
    bad_pixels(disparity, region, 4.0)
}
