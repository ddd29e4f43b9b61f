//! Driving signals: matching cost `C`, monocular boundary cost `B_m` and
//! occlusion boundary cost `B_o`, plus the synthetic scene generator.

pub mod edt;
pub mod synth;

use log::warn;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::grid::{Mask, ScalarField};
use crate::image::{Image, ImagePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Matching,
    MonocularBoundary,
    OcclusionBoundary,
}

/// `W x H x (d_max + 1)` volume, disparity fastest: `(y * W + x) * D + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    depth: usize,
    kind: CostKind,
    values: Vec<f64>,
}

impl CostVolume {
    pub fn new(width: usize, height: usize, depth: usize, kind: CostKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height * depth {
            return Err(invalid(format!(
                "volume has {} values, expected {}x{}x{}",
                values.len(),
                width,
                height,
                depth
            )));
        }
        if depth < 2 {
            return Err(invalid("volume needs at least two disparity planes"));
        }
        Ok(Self {
            width,
            height,
            depth,
            kind,
            values,
        })
    }

    /// Builds a volume from `f(x, y, d)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        depth: usize,
        kind: CostKind,
        f: impl Fn(usize, usize, usize) -> f64 + Sync,
    ) -> Self {
        let mut values = vec![0.0; width * height * depth];
        values.par_chunks_mut(width * depth).enumerate().for_each(|(y, row)| {
            for x in 0..width {
                for d in 0..depth {
                    row[x * depth + d] = f(x, y, d);
                }
            }
        });
        Self {
            width,
            height,
            depth,
            kind,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of disparity planes, `d_max + 1`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn d_max(&self) -> usize {
        self.depth - 1
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, d: usize) -> f64 {
        self.values[(y * self.width + x) * self.depth + d]
    }

    /// Cost curve over all disparities at one pixel.
    #[inline]
    pub fn curve(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.depth;
        &self.values[i..i + self.depth]
    }

    /// Linear interpolation along `d`, with `d` clamped to `[0, d_max]`.
    #[inline]
    pub fn sample_d(&self, x: usize, y: usize, d: f64) -> f64 {
        let curve = self.curve(x, y);
        let dc = d.clamp(0.0, self.d_max() as f64);
        let d0 = dc.floor();
        let i0 = d0 as usize;
        let t = dc - d0;
        if t == 0.0 || i0 + 1 >= self.depth {
            curve[i0]
        } else {
            curve[i0] * (1.0 - t) + curve[i0 + 1] * t
        }
    }

    /// Bilinear lookup at real `x` (replicate-clamped to the field) and real
    /// `d` (clamped to `[0, d_max]`) on scanline `y`.
    #[inline]
    pub fn sample_xd(&self, x: f64, y: usize, d: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let x0 = xc.floor();
        let i0 = x0 as usize;
        let t = xc - x0;
        if t == 0.0 || i0 + 1 >= self.width {
            self.sample_d(i0, y, d)
        } else {
            self.sample_d(i0, y, d) * (1.0 - t) + self.sample_d(i0 + 1, y, d) * t
        }
    }

    /// Evaluates the volume on a per-pixel disparity surface.
    pub fn slice_at(&self, disparity: &ScalarField) -> ScalarField {
        assert_eq!(disparity.width(), self.width);
        assert_eq!(disparity.height(), self.height);
        ScalarField::par_from_fn(self.width, self.height, |x, y| self.sample_d(x, y, disparity[(x, y)]))
    }

    /// Linear rescale to `[0, 1]`; a constant volume maps to all zeros.
    pub fn normalize(&mut self) {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        if !(span > 0.0) || !span.is_finite() {
            self.values.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        self.values.par_iter_mut().for_each(|v| *v = (*v - lo) / span);
    }
}

/// Sum of absolute intensity differences across channels between the left
/// view at `x + d` and the right view at `x - d`, normalized to `[0, 1]`.
/// Out-of-image lookups use replicate padding.
pub fn build_matching_cost(pair: &ImagePair) -> CostVolume {
    let mut vol = raw_matching_cost(pair);
    vol.normalize();
    vol
}

/// Unnormalized matching cost (exposed for tests and diagnostics).
pub fn raw_matching_cost(pair: &ImagePair) -> CostVolume {
    let (w, h, depth) = (pair.width(), pair.height(), pair.num_disparities());
    let channels = pair.left.channels();
    CostVolume::from_fn(w, h, depth, CostKind::Matching, |x, y, d| {
        let xl = x as isize + d as isize;
        let xr = x as isize - d as isize;
        (0..channels)
            .map(|c| (pair.left.at_clamped_x(xl, y, c) - pair.right.at_clamped_x(xr, y, c)).abs())
            .sum()
    })
}

/// 3x3 Sobel gradient magnitude of the channel-mean intensity, replicate
/// padding at the borders.
pub fn sobel_magnitude(image: &Image) -> ScalarField {
    let lum = image.luminance();
    ScalarField::par_from_fn(lum.width(), lum.height(), |x, y| {
        let p = |dx: isize, dy: isize| *lum.get_clamped(x as isize + dx, y as isize + dy);
        let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
        let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        (gx * gx + gy * gy).sqrt()
    })
}

/// Distance to the nearest thresholded Sobel edge (0 on edges). With no
/// edge at all, every pixel gets the image diagonal.
pub fn edge_distance(image: &Image, edge_threshold: f64) -> ScalarField {
    let mag = sobel_magnitude(image);
    let edges = mag.map(|&m| m > edge_threshold);
    distance_or_constant(&edges)
}

fn distance_or_constant(edges: &Mask) -> ScalarField {
    match edt::distance_2d(edges) {
        Some(d) => d,
        None => {
            let diag = ((edges.width() * edges.width() + edges.height() * edges.height()) as f64).sqrt();
            warn!("no edges above threshold; edge distance set to the image diagonal {diag:.1}");
            ScalarField::filled(edges.width(), edges.height(), diag)
        }
    }
}

/// `B_m(x, y, d) = E_l(x + d, y) + E_r(x - d, y)`, normalized to `[0, 1]`.
pub fn build_monocular_boundary_cost(pair: &ImagePair, edge_threshold: f64) -> Result<CostVolume> {
    if !(edge_threshold > 0.0) {
        return Err(invalid("edge threshold must be positive"));
    }
    let el = edge_distance(&pair.left, edge_threshold);
    let er = edge_distance(&pair.right, edge_threshold);
    let mut vol = combine_edge_distances(&el, &er, pair.d_max);
    vol.normalize();
    Ok(vol)
}

/// Unnormalized combination of left/right edge-distance maps.
pub fn combine_edge_distances(el: &ScalarField, er: &ScalarField, d_max: usize) -> CostVolume {
    let (w, h) = (el.width(), el.height());
    CostVolume::from_fn(w, h, d_max + 1, CostKind::MonocularBoundary, |x, y, d| {
        let (xi, yi, di) = (x as isize, y as isize, d as isize);
        el.get_clamped(xi + di, yi) + er.get_clamped(xi - di, yi)
    })
}

/// Epipolar gradient magnitude `|dC/dx|` (central differences, replicate
/// padding), thresholded and turned into a 3-D distance field that is zero
/// on detections, then normalized to `[0, 1]`.
pub fn build_occlusion_boundary_cost(matching: &CostVolume, gradient_threshold: f64) -> Result<CostVolume> {
    if matching.kind() != CostKind::Matching {
        return Err(invalid("occlusion boundary cost needs a matching cost volume"));
    }
    if !(gradient_threshold > 0.0) {
        return Err(invalid("gradient threshold must be positive"));
    }
    let (w, h, depth) = (matching.width(), matching.height(), matching.depth());
    let grad = epipolar_gradient(matching);
    let seeds: Vec<bool> = grad.values().iter().map(|&g| g > gradient_threshold).collect();
    let values = match edt::distance_3d(&seeds, w, h, depth) {
        Some(d) => d,
        None => {
            let diag = ((w * w + h * h + depth * depth) as f64).sqrt();
            warn!("no occlusion-boundary detections above threshold; B_o set to constant");
            vec![diag; w * h * depth]
        }
    };
    let mut vol = CostVolume::new(w, h, depth, CostKind::OcclusionBoundary, values)?;
    vol.normalize();
    Ok(vol)
}

/// `|dC/dx|` per `(y, d)` slice by central differences.
pub fn epipolar_gradient(matching: &CostVolume) -> CostVolume {
    let (w, h, depth) = (matching.width(), matching.height(), matching.depth());
    CostVolume::from_fn(w, h, depth, CostKind::OcclusionBoundary, |x, y, d| {
        let xp = (x + 1).min(w - 1);
        let xm = x.saturating_sub(1);
        0.5 * (matching.at(xp, y, d) - matching.at(xm, y, d)).abs()
    })
}

/// The three volumes that drive the descent.
#[derive(Debug, Clone)]
pub struct Signals {
    pub matching: CostVolume,
    pub monocular: CostVolume,
    pub occlusion: CostVolume,
}

impl Signals {
    pub fn build(pair: &ImagePair, edge_threshold: f64, gradient_threshold: f64) -> Result<Self> {
        let matching = build_matching_cost(pair);
        let monocular = build_monocular_boundary_cost(pair, edge_threshold)?;
        let occlusion = build_occlusion_boundary_cost(&matching, gradient_threshold)?;
        Ok(Self {
            matching,
            monocular,
            occlusion,
        })
    }

    pub fn width(&self) -> usize {
        self.matching.width()
    }

    pub fn height(&self) -> usize {
        self.matching.height()
    }

    pub fn d_max(&self) -> usize {
        self.matching.d_max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, 1, (0..w * h).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    #[test]
    fn identical_images_match_at_zero() {
        let img = noise(24, 10, 1);
        let pair = ImagePair::new(img.clone(), img, 5).unwrap();
        let raw = raw_matching_cost(&pair);
        for y in 0..10 {
            for x in 0..24 {
                assert_eq!(raw.at(x, y, 0), 0.0);
            }
        }
    }

    #[test]
    fn translated_pair_matches_at_its_disparity() {
        let d0 = 3usize;
        let (w, h) = (40, 8);
        let left = noise(w, h, 2);
        let right = Image::new(
            w,
            h,
            1,
            (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .map(|(x, y)| left.at_clamped_x(x as isize + 2 * d0 as isize, y, 0))
                .collect(),
        )
        .unwrap();
        let pair = ImagePair::new(left, right, 6).unwrap();
        let c = build_matching_cost(&pair);
        for y in 0..h {
            for x in d0..w - d0 {
                assert_eq!(c.at(x, y, d0), 0.0, "({x},{y})");
            }
        }
    }

    #[test]
    fn normalization_hits_both_endpoints() {
        let pair = ImagePair::new(noise(30, 12, 3), noise(30, 12, 4), 6).unwrap();
        let c = build_matching_cost(&pair);
        let lo = c.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn constant_volume_normalizes_to_zero() {
        let mut v = CostVolume::from_fn(3, 3, 2, CostKind::Matching, |_, _, _| 0.7);
        v.normalize();
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn monocular_cost_is_sum_of_edge_distances() {
        let el = ScalarField::filled(10, 3, 0.2);
        let er = ScalarField::filled(10, 3, 0.3);
        let v = combine_edge_distances(&el, &er, 2);
        assert!((v.at(4, 1, 2) - 0.5).abs() < 1e-15);
        let z = combine_edge_distances(&ScalarField::filled(10, 3, 0.0), &ScalarField::filled(10, 3, 0.0), 2);
        assert_eq!(z.at(5, 1, 1), 0.0);
    }

    #[test]
    fn vertical_edge_minimizes_monocular_cost_at_its_column() {
        // Brute-force oracle: distance to the nearest edge pixel along the row
        // (edges are full columns, so the 2-D distance is 1-D).
        let (w, h, k) = (16usize, 16usize, 7usize);
        let img = Image::new(
            w,
            h,
            1,
            (0..h)
                .flat_map(|_| (0..w).map(|x| if x <= k { 0.0 } else { 1.0 }))
                .collect(),
        )
        .unwrap();
        let pair = ImagePair::new(img.clone(), img, 3).unwrap();
        let el = edge_distance(&pair.left, 1.0);
        // Sobel responds on columns k and k+1 (the step sits between them).
        for y in 0..h {
            for x in 0..w {
                let oracle = if x <= k { (k - x) as f64 } else { (x - (k + 1)) as f64 };
                assert_eq!(el[(x, y)], oracle);
            }
        }
        let bm = build_monocular_boundary_cost(&pair, 1.0).unwrap();
        let row: Vec<f64> = (0..w).map(|x| bm.at(x, 8, 0)).collect();
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(row[k], min);
        assert!(row[k - 1] > min && row[k + 2] > min);
    }

    #[test]
    fn swapping_views_mirrors_disparity() {
        let (w, h, dm) = (32usize, 6usize, 4usize);
        let a = noise(w, h, 11);
        let b = noise(w, h, 12);
        let el = edge_distance(&a, 1.2);
        let er = edge_distance(&b, 1.2);
        let swapped = combine_edge_distances(&er, &el, dm);
        // B_m^swapped(x, y, d) = E_r(x+d) + E_l(x-d) = B_m(x, y, -d); compare on
        // the overlap by evaluating the negative disparity directly.
        for y in 0..h {
            for x in dm..w - dm {
                for d in 0..=dm {
                    let neg = el[(x - d, y)] + er[(x + d, y)];
                    assert_eq!(swapped.at(x, y, d), neg);
                }
            }
        }
    }

    #[test]
    fn flat_cost_has_no_occluding_signature() {
        let c = CostVolume::from_fn(12, 4, 3, CostKind::Matching, |_, _, _| 0.4);
        let bo = build_occlusion_boundary_cost(&c, 0.01).unwrap();
        let first = bo.values()[0];
        assert!(bo.values().iter().all(|&v| v == first));
    }

    #[test]
    fn step_in_cost_is_its_own_boundary() {
        let (w, h, depth, k) = (20usize, 3usize, 4usize, 9usize);
        let c = CostVolume::from_fn(w, h, depth, CostKind::Matching, |x, y, d| {
            if y == 1 && d == 2 && x > k {
                1.0
            } else {
                0.0
            }
        });
        let bo = build_occlusion_boundary_cost(&c, 0.4).unwrap();
        // central difference |C(k+1)-C(k-1)|/2 = 0.5 at k and k+1
        assert_eq!(bo.at(k, 1, 2), 0.0);
        assert_eq!(bo.at(k + 1, 1, 2), 0.0);
        assert!(bo.at(k - 1, 1, 2) > 0.0);
        assert!(bo.at(k, 0, 2) > 0.0);
    }

    #[test]
    fn rejects_bad_thresholds() {
        let pair = ImagePair::new(noise(20, 4, 1), noise(20, 4, 2), 3).unwrap();
        assert!(build_monocular_boundary_cost(&pair, 0.0).is_err());
        let c = build_matching_cost(&pair);
        assert!(build_occlusion_boundary_cost(&c, -1.0).is_err());
        assert!(build_occlusion_boundary_cost(&build_monocular_boundary_cost(&pair, 1.0).unwrap(), 1.0).is_err());
    }
}
