//! Synthetic two-layer random-dot scenes with exact ground truth.
//!
//! Both layers carry their own random-dot texture, indexed by cyclopean
//! position. A left-image pixel `u` sees the foreground point `x` with
//! `x + Θ₁(x, y) = u` when that point lies inside the figure, and the
//! background point with `x + Θ₂(x, y) = u` otherwise; the right image uses
//! `x − Θ(x, y) = u`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::geometry::{CoordFrame, ShapeModel};
use crate::grid::{Mask, ScalarField};
use crate::image::{Image, ImagePair};

/// Foreground region in cyclopean pixel coordinates (pixel centres at
/// integer positions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Figure {
    Ellipse { cx: f64, cy: f64, ax: f64, ay: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Figure {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Figure::Ellipse { cx, cy, ax, ay } => {
                let u = (x - cx) / ax;
                let v = (y - cy) / ay;
                u * u + v * v <= 1.0
            }
            Figure::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Figure::Ellipse { cx, cy, ax, ay } => (cx - ax, cy - ay, cx + ax, cy + ay),
            Figure::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
        }
    }

    /// Figure centred in a `width x height` field, spanning `fraction` of
    /// each dimension.
    pub fn centered_ellipse(width: usize, height: usize, fraction: f64) -> Self {
        Figure::Ellipse {
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            ax: fraction * width as f64 / 2.0,
            ay: fraction * height as f64 / 2.0,
        }
    }

    pub fn centered_rect(width: usize, height: usize, fraction: f64) -> Self {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (hx, hy) = (fraction * width as f64 / 2.0, fraction * height as f64 / 2.0);
        Figure::Rect {
            x0: (cx - hx).round(),
            y0: (cy - hy).round(),
            x1: (cx + hx).round(),
            y1: (cy + hy).round(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub d_max: usize,
    pub fg_shape: ShapeModel,
    pub bg_shape: ShapeModel,
    pub figure: Figure,
    pub seed: u64,
}

impl SceneSpec {
    /// Two fronto-parallel layers at constant disparities.
    pub fn planar(width: usize, height: usize, d_fg: f64, d_bg: f64, figure: Figure, seed: u64) -> Self {
        let frame = CoordFrame::normalized(width, height);
        Self {
            width,
            height,
            d_max: d_fg.ceil().max(1.0) as usize,
            fg_shape: ShapeModel::constant(d_fg, frame),
            bg_shape: ShapeModel::constant(d_bg, frame),
            figure,
            seed,
        }
    }

    pub fn with_d_max(mut self, d_max: usize) -> Self {
        self.d_max = d_max;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub pair: ImagePair,
    pub gt_disparity: ScalarField,
    pub gt_foreground: Mask,
    pub gt_occlusion: Mask,
    pub gt_boundary: Mask,
    pub fg_shape: ShapeModel,
    pub bg_shape: ShapeModel,
    pub figure: Figure,
}

/// Random-dot texture on the integer lattice, linearly interpolated along x.
struct Texture {
    pad: usize,
    stride: usize,
    values: Vec<f64>,
}

impl Texture {
    fn new(width: usize, height: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let stride = width + 2 * pad;
        Self {
            pad,
            stride,
            values: (0..stride * height).map(|_| rng.gen::<f64>()).collect(),
        }
    }

    fn sample(&self, x: f64, y: usize) -> f64 {
        let xs = (x + self.pad as f64).clamp(0.0, (self.stride - 1) as f64);
        let i0 = xs.floor() as usize;
        let t = xs - i0 as f64;
        let row = &self.values[y * self.stride..(y + 1) * self.stride];
        if t == 0.0 || i0 + 1 >= self.stride {
            row[i0]
        } else {
            row[i0] * (1.0 - t) + row[i0 + 1] * t
        }
    }
}

/// Solves `x + sign · Θ(x, y) = u` for the cyclopean point `x` seen at image
/// column `u`. Requires `|∂Θ/∂x| < 1`, which holds for any physically
/// plausible surface at desk-scale slopes.
fn cyclopean_source(shape: &ShapeModel, u: f64, y: f64, sign: f64) -> f64 {
    let mut x = u - sign * shape.eval(u, y);
    for _ in 0..64 {
        let next = u - sign * shape.eval(x, y);
        if (next - x).abs() < 1e-12 {
            return next;
        }
        x = next;
    }
    x
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    let (w, h) = (spec.width, spec.height);
    if w < 8 || h < 8 {
        return Err(invalid("scene must be at least 8x8"));
    }
    let (bx0, by0, bx1, by1) = spec.figure.bounds();
    if !(bx1 > bx0 && by1 > by0) {
        return Err(invalid("figure is degenerate"));
    }
    // foreground/background disparity ranges over the field
    let mut fg_max = f64::NEG_INFINITY;
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let (f, b) = (spec.fg_shape.eval(xf, yf), spec.bg_shape.eval(xf, yf));
            if spec.figure.contains(xf, yf) && b > f {
                return Err(invalid(format!(
                    "foreground disparity {f:.3} is behind the background {b:.3} at ({x}, {y})"
                )));
            }
            if b < 0.0 || f > spec.d_max as f64 {
                return Err(invalid(format!(
                    "disparities must lie in [0, d_max={}]; got fg {f:.3}, bg {b:.3} at ({x}, {y})",
                    spec.d_max
                )));
            }
            fg_max = fg_max.max(f);
        }
    }
    let margin = fg_max;
    if bx0 < margin || by0 < margin || bx1 > (w - 1) as f64 - margin || by1 > (h - 1) as f64 - margin {
        return Err(invalid(format!(
            "figure bounds ({bx0:.1}, {by0:.1})-({bx1:.1}, {by1:.1}) must keep a margin of {margin:.1} from the border"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pad = spec.d_max + 2;
    let fg_tex = Texture::new(w, h, pad, &mut rng);
    let bg_tex = Texture::new(w, h, pad, &mut rng);

    let render = |sign: f64| -> Vec<f64> {
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let yf = y as f64;
            for u in 0..w {
                let uf = u as f64;
                let xf = cyclopean_source(&spec.fg_shape, uf, yf, sign);
                if spec.figure.contains(xf, yf) {
                    out.push(fg_tex.sample(xf, y));
                } else {
                    let xb = cyclopean_source(&spec.bg_shape, uf, yf, sign);
                    out.push(bg_tex.sample(xb, y));
                }
            }
        }
        out
    };
    let left = Image::new(w, h, 1, render(1.0))?;
    let right = Image::new(w, h, 1, render(-1.0))?;
    let pair = ImagePair::new(left, right, spec.d_max)?;

    let gt_foreground = Mask::from_fn(w, h, |x, y| spec.figure.contains(x as f64, y as f64));
    let gt_disparity = ScalarField::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        if gt_foreground[(x, y)] {
            spec.fg_shape.eval(xf, yf)
        } else {
            spec.bg_shape.eval(xf, yf)
        }
    });
    let gt_occlusion = Mask::from_fn(w, h, |x, y| {
        if gt_foreground[(x, y)] {
            return false;
        }
        let (xf, yf) = (x as f64, y as f64);
        let d2 = spec.bg_shape.eval(xf, yf);
        let hidden_left = spec
            .figure
            .contains(cyclopean_source(&spec.fg_shape, xf + d2, yf, 1.0), yf);
        let hidden_right = spec
            .figure
            .contains(cyclopean_source(&spec.fg_shape, xf - d2, yf, -1.0), yf);
        hidden_left || hidden_right
    });
    let gt_boundary = boundary_of(&gt_foreground);

    Ok(SyntheticScene {
        pair,
        gt_disparity,
        gt_foreground,
        gt_occlusion,
        gt_boundary,
        fg_shape: spec.fg_shape,
        bg_shape: spec.bg_shape,
        figure: spec.figure,
    })
}

/// Foreground pixels with at least one 4-neighbour outside the foreground.
pub fn boundary_of(fg: &Mask) -> Mask {
    let (w, h) = (fg.width(), fg.height());
    Mask::from_fn(w, h, |x, y| {
        if !fg[(x, y)] {
            return false;
        }
        let outside = |xx: isize, yy: isize| {
            xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize || !fg[(xx as usize, yy as usize)]
        };
        let (xi, yi) = (x as isize, y as isize);
        outside(xi - 1, yi) || outside(xi + 1, yi) || outside(xi, yi - 1) || outside(xi, yi + 1)
    })
}
