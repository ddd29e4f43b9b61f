//! The evolving level-set field φ: smoothed Heaviside/delta, curvature and
//! normals, the descent step, the discrete energy, signed-distance
//! reinitialization and median regularization.
//!
//! The length term is discretized as `μ Σ B·|∇H_ε(φ)|` with central
//! differences. Its exact discrete gradient is `δ_ε(φ)·(−div(B∇H/|∇H|))`,
//! which coincides with the `μ δ_ε(φ)(Bκ + N·∇B)` term of the descent step
//! wherever `H_ε` is locally linear in φ.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;

use crate::error::{invalid, Result, StereoError};
use crate::geometry::{compute_delta_theta, ShapeModel};
use crate::grid::ScalarField;
use crate::signals::CostVolume;

/// Regularizer in `|∇φ|` denominators.
pub const GRAD_ETA: f64 = 1e-8;

/// Smoothed Heaviside / delta pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `H = ½(1 + z/ε + sin(πz/ε)/π)` on `|z| ≤ ε`, 0/1 outside.
    #[default]
    Compact,
    /// `H = ½(1 + (2/π)·atan(z/ε))`, global support.
    Arctan,
}

impl Kernel {
    #[inline]
    pub fn heaviside(self, z: f64, eps: f64) -> f64 {
        match self {
            Kernel::Compact => {
                if z > eps {
                    1.0
                } else if z < -eps {
                    0.0
                } else {
                    0.5 * (1.0 + z / eps + (PI * z / eps).sin() / PI)
                }
            }
            Kernel::Arctan => 0.5 * (1.0 + (2.0 / PI) * (z / eps).atan()),
        }
    }

    #[inline]
    pub fn delta(self, z: f64, eps: f64) -> f64 {
        match self {
            Kernel::Compact => {
                if z.abs() > eps {
                    0.0
                } else {
                    (1.0 + (PI * z / eps).cos()) / (2.0 * eps)
                }
            }
            Kernel::Arctan => eps / (PI * (eps * eps + z * z)),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "compact" => Some(Kernel::Compact),
            "arctan" => Some(Kernel::Arctan),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Compact => "compact",
            Kernel::Arctan => "arctan",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelSet {
    pub phi: ScalarField,
    pub epsilon: f64,
    pub kernel: Kernel,
    pub iterations_since_reinit: usize,
}

impl LevelSet {
    pub fn new(phi: ScalarField, epsilon: f64, kernel: Kernel) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "phi is not finite at ({}, {})",
                i % phi.width(),
                i / phi.width()
            )));
        }
        Ok(Self {
            phi,
            epsilon,
            kernel,
            iterations_since_reinit: 0,
        })
    }

    /// Foreground mask `φ > 0`.
    pub fn foreground(&self) -> crate::grid::Mask {
        self.phi.map(|&v| v > 0.0)
    }
}

/// `B_{Θ₁} = α₁B_o(x, y, Θ₁) + α₂B_m(x, y, Θ₁) + α₃`.
#[derive(Debug, Clone)]
pub struct BoundaryWeight {
    pub values: ScalarField,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl BoundaryWeight {
    pub fn build(
        occlusion: &CostVolume,
        monocular: &CostVolume,
        theta1: &ShapeModel,
        alphas: [f64; 3],
    ) -> Result<Self> {
        let [a1, a2, a3] = alphas;
        if !(a3 > 0.0) || a1 < 0.0 || a2 < 0.0 {
            return Err(invalid(format!(
                "boundary weights need alpha1, alpha2 >= 0 and alpha3 > 0, got {alphas:?}"
            )));
        }
        let (w, h) = (occlusion.width(), occlusion.height());
        if monocular.width() != w || monocular.height() != h || monocular.depth() != occlusion.depth() {
            return Err(invalid("boundary cost volumes differ in shape"));
        }
        let d_max = occlusion.d_max();
        let values = ScalarField::par_from_fn(w, h, |x, y| {
            let d = theta1.eval_clamped(x as f64, y as f64, d_max);
            a1 * occlusion.sample_d(x, y, d) + a2 * monocular.sample_d(x, y, d) + a3
        });
        Ok(Self {
            values,
            alpha1: a1,
            alpha2: a2,
            alpha3: a3,
        })
    }

    /// Spatially constant weight, used in tests and ablations.
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            values: ScalarField::filled(width, height, value),
            alpha1: 0.0,
            alpha2: 0.0,
            alpha3: value,
        }
    }
}

/// Curvature `κ = div(∇φ/|∇φ|)` and the unit normal components `(N_x, N_y)`.
pub fn curvature_and_normal(phi: &ScalarField) -> (ScalarField, ScalarField, ScalarField) {
    let (w, h) = (phi.width(), phi.height());
    let normals: Vec<(f64, f64)> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..w).map(move |x| {
                let (gx, gy) = (phi.dx(x, y), phi.dy(x, y));
                let n = (gx * gx + gy * gy + GRAD_ETA * GRAD_ETA).sqrt();
                (gx / n, gy / n)
            })
        })
        .collect();
    let nx = ScalarField::from_vec(w, h, normals.iter().map(|n| n.0).collect());
    let ny = ScalarField::from_vec(w, h, normals.iter().map(|n| n.1).collect());
    let kappa = ScalarField::par_from_fn(w, h, |x, y| nx.dx(x, y) + ny.dy(x, y));
    (kappa, nx, ny)
}

/// Per-pixel inputs of the discrete energy and its descent direction.
#[derive(Debug, Clone)]
pub struct EnergyTerms {
    /// `C(x, y, Θ₁(x, y))`.
    pub c_fg: ScalarField,
    /// `C(x, y, Θ₂(x, y))`.
    pub c_bg: ScalarField,
    /// `B_{Θ₁}`.
    pub boundary: ScalarField,
    pub mu: f64,
    pub epsilon: f64,
    pub kernel: Kernel,
}

impl EnergyTerms {
    pub fn from_volumes(
        matching: &CostVolume,
        boundary: &BoundaryWeight,
        theta1: &ShapeModel,
        theta2: &ShapeModel,
        mu: f64,
        epsilon: f64,
        kernel: Kernel,
    ) -> Self {
        let (w, h, d_max) = (matching.width(), matching.height(), matching.d_max());
        Self {
            c_fg: matching.slice_at(&theta1.render_clamped(w, h, d_max)),
            c_bg: matching.slice_at(&theta2.render_clamped(w, h, d_max)),
            boundary: boundary.values.clone(),
            mu,
            epsilon,
            kernel,
        }
    }

    /// Discrete energy for a given `φ` and frozen shift field `Δθ`.
    pub fn energy(&self, phi: &ScalarField, delta_theta: &ScalarField) -> f64 {
        let (w, h) = (phi.width(), phi.height());
        let (k, eps) = (self.kernel, self.epsilon);
        let hphi = phi.map(|&v| k.heaviside(v, eps));
        let rows: Vec<f64> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut acc = 0.0;
                for x in 0..w {
                    let hp = hphi[(x, y)];
                    let plus = k.heaviside(phi.sample_x(x as f64 + delta_theta[(x, y)], y), eps);
                    let (gx, gy) = (hphi.dx(x, y), hphi.dy(x, y));
                    acc += hp * self.c_fg[(x, y)]
                        + (1.0 - plus) * (1.0 - hp) * self.c_bg[(x, y)]
                        + self.mu * self.boundary[(x, y)] * (gx * gx + gy * gy + GRAD_ETA * GRAD_ETA).sqrt();
                }
                acc
            })
            .collect();
        rows.into_iter().sum()
    }

    /// `dφ/dt = δ_ε(φ)[−C(x,y,Θ₁) + C(x−Δθ,y,Θ₂) + μ(Bκ + N·∇B)]`.
    pub fn velocity(&self, phi: &ScalarField, delta_theta: &ScalarField) -> ScalarField {
        let (kappa, nx, ny) = curvature_and_normal(phi);
        let b = &self.boundary;
        let (k, eps) = (self.kernel, self.epsilon);
        ScalarField::par_from_fn(phi.width(), phi.height(), |x, y| {
            let d = k.delta(phi[(x, y)], eps);
            if d == 0.0 {
                return 0.0;
            }
            let bg = self.c_bg.sample_x(x as f64 - delta_theta[(x, y)], y);
            let length = b[(x, y)] * kappa[(x, y)] + nx[(x, y)] * b.dx(x, y) + ny[(x, y)] * b.dy(x, y);
            d * (-self.c_fg[(x, y)] + bg + self.mu * length)
        })
    }
}

/// Energy of `φ` under the given shapes, with `Δθ` derived from `φ`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_energy(
    matching: &CostVolume,
    boundary: &BoundaryWeight,
    theta1: &ShapeModel,
    theta2: &ShapeModel,
    phi: &ScalarField,
    mu: f64,
    epsilon: f64,
    kernel: Kernel,
) -> f64 {
    let terms = EnergyTerms::from_volumes(matching, boundary, theta1, theta2, mu, epsilon, kernel);
    let dt = compute_delta_theta(theta1, theta2, phi, matching.d_max());
    terms.energy(phi, &dt)
}

/// One explicit Euler step, optionally followed by a `median × median`
/// median filter. Non-finite results abort.
pub fn update_phi(
    phi: &ScalarField,
    terms: &EnergyTerms,
    delta_theta: &ScalarField,
    dt: f64,
    median: Option<usize>,
) -> Result<ScalarField> {
    if !(dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let v = terms.velocity(phi, delta_theta);
    let mut next = phi.clone();
    for (p, dv) in next.as_mut_slice().iter_mut().zip(v.iter()) {
        *p += dt * dv;
    }
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        return Err(StereoError::Diverged {
            x: i % phi.width(),
            y: i / phi.width(),
        });
    }
    Ok(match median {
        Some(size) if size > 1 => median_filter(&next, size),
        _ => next,
    })
}

/// `size × size` median with replicate padding; for even window counts the
/// lower median is taken.
pub fn median_filter(field: &ScalarField, size: usize) -> ScalarField {
    let r = (size / 2) as isize;
    ScalarField::par_from_fn(field.width(), field.height(), |x, y| {
        let mut win = Vec::with_capacity(size * size);
        for dy in -r..=r {
            for dx in -r..=r {
                win.push(*field.get_clamped(x as isize + dx, y as isize + dy));
            }
        }
        let mid = (win.len() - 1) / 2;
        *win.select_nth_unstable_by(mid, f64::total_cmp).1
    })
}

type Segment = [(f64, f64); 2];

/// Linear zero-crossing points of `φ` on the grid edges, joined into segments
/// per 2x2 cell (marching squares; saddles resolved by the cell mean).
fn zero_segments(phi: &ScalarField) -> Vec<Segment> {
    let (w, h) = (phi.width(), phi.height());
    let pos = |v: f64| v > 0.0;
    let cross = |(ax, ay): (usize, usize), (bx, by): (usize, usize)| -> Option<(f64, f64)> {
        let (a, b) = (phi[(ax, ay)], phi[(bx, by)]);
        if pos(a) == pos(b) {
            return None;
        }
        let t = a / (a - b);
        Some((
            ax as f64 + t * (bx as f64 - ax as f64),
            ay as f64 + t * (by as f64 - ay as f64),
        ))
    };
    let mut segs = Vec::new();
    // single-row / single-column fields: only 1-D crossings exist
    if w == 1 || h == 1 {
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    if let Some(p) = cross((x, y), (x + 1, y)) {
                        segs.push([p, p]);
                    }
                }
                if y + 1 < h {
                    if let Some(p) = cross((x, y), (x, y + 1)) {
                        segs.push([p, p]);
                    }
                }
            }
        }
        return segs;
    }
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let c = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)];
            let pts: Vec<(f64, f64)> = (0..4).filter_map(|i| cross(c[i], c[(i + 1) % 4])).collect();
            match pts.len() {
                2 => segs.push([pts[0], pts[1]]),
                4 => {
                    let mean = c.iter().map(|&p| phi[p]).sum::<f64>() / 4.0;
                    // pts[i] lies on edge i; corner 0 sits between edges 3 and 0
                    if pos(mean) == pos(phi[c[0]]) {
                        segs.push([pts[0], pts[1]]);
                        segs.push([pts[2], pts[3]]);
                    } else {
                        segs.push([pts[3], pts[0]]);
                        segs.push([pts[1], pts[2]]);
                    }
                }
                _ => {}
            }
        }
    }
    segs
}

#[inline]
fn point_segment_dist2(p: (f64, f64), s: &Segment) -> f64 {
    let [(ax, ay), (bx, by)] = *s;
    let (vx, vy) = (bx - ax, by - ay);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((p.0 - ax) * vx + (p.1 - ay) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (ax + t * vx - p.0, ay + t * vy - p.1);
    dx * dx + dy * dy
}

const BUCKET: usize = 8;

/// Signed Euclidean distance to the linearly interpolated zero crossing of
/// `φ`, keeping the sign pattern of the input. Returns the input unchanged
/// (with a warning) when `φ` has no zero crossing.
pub fn reinitialize(phi: &ScalarField) -> ScalarField {
    let segs = zero_segments(phi);
    if segs.is_empty() {
        warn!("reinitialize: phi has no zero crossing; boundary vanished, leaving phi unchanged");
        return phi.clone();
    }
    let (w, h) = (phi.width(), phi.height());
    let (bw, bh) = (w.div_ceil(BUCKET), h.div_ceil(BUCKET));
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); bw * bh];
    for (i, s) in segs.iter().enumerate() {
        let (lx, hx) = (s[0].0.min(s[1].0), s[0].0.max(s[1].0));
        let (ly, hy) = (s[0].1.min(s[1].1), s[0].1.max(s[1].1));
        let bx0 = (lx as usize / BUCKET).min(bw - 1);
        let bx1 = (hx as usize / BUCKET).min(bw - 1);
        let by0 = (ly as usize / BUCKET).min(bh - 1);
        let by1 = (hy as usize / BUCKET).min(bh - 1);
        for by in by0..=by1 {
            for bx in bx0..=bx1 {
                buckets[by * bw + bx].push(i as u32);
            }
        }
    }
    ScalarField::par_from_fn(w, h, |x, y| {
        let v = phi[(x, y)];
        if v == 0.0 {
            return 0.0;
        }
        let p = (x as f64, y as f64);
        let (cbx, cby) = ((x / BUCKET) as isize, (y / BUCKET) as isize);
        let mut best = f64::INFINITY;
        let max_ring = bw.max(bh) as isize;
        for ring in 0..=max_ring {
            // every point in ring `ring` is at least (ring - 1) * BUCKET away
            let reach = (ring - 1).max(0) as f64 * BUCKET as f64;
            if reach * reach > best {
                break;
            }
            for by in cby - ring..=cby + ring {
                if by < 0 || by >= bh as isize {
                    continue;
                }
                for bx in cbx - ring..=cbx + ring {
                    if bx < 0 || bx >= bw as isize {
                        continue;
                    }
                    if (by - cby).abs() != ring && (bx - cbx).abs() != ring {
                        continue;
                    }
                    for &si in &buckets[by as usize * bw + bx as usize] {
                        best = best.min(point_segment_dist2(p, &segs[si as usize]));
                    }
                }
            }
        }
        best.sqrt().copysign(v)
    })
}

/// Distance from `(y0, y1)` (first quadrant) to the ellipse with semi-axes
/// `e0 ≥ e1 > 0`, by bisection on the Lagrange parameter.
fn ellipse_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let (z0, z1) = (y0 / e0, y1 / e1);
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1) * (e0 / e1);
            let n0 = r0 * z0;
            let mut s0 = z1 - 1.0;
            let mut s1 = if g < 0.0 { 0.0 } else { (n0 * n0 + z1 * z1).sqrt() - 1.0 };
            let mut s = 0.0;
            for _ in 0..1100 {
                s = 0.5 * (s0 + s1);
                if s == s0 || s == s1 {
                    break;
                }
                let (a, b) = (n0 / (s + r0), z1 / (s + 1.0));
                let gs = a * a + b * b - 1.0;
                if gs > 0.0 {
                    s0 = s;
                } else if gs < 0.0 {
                    s1 = s;
                } else {
                    break;
                }
            }
            let x0 = r0 * y0 / (s + r0);
            let x1 = y1 / (s + 1.0);
            ((x0 - y0).powi(2) + (x1 - y1).powi(2)).sqrt()
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xd = numer / denom;
            let x0 = e0 * xd;
            let x1 = e1 * (1.0 - xd * xd).max(0.0).sqrt();
            ((x0 - y0).powi(2) + x1 * x1).sqrt()
        } else {
            (y0 - e0).abs()
        }
    }
}

/// Signed distance to an axis-aligned ellipse, positive inside.
pub fn init_ellipse(width: usize, height: usize, center: (f64, f64), semi_axes: (f64, f64)) -> Result<ScalarField> {
    let (a, b) = semi_axes;
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(invalid(format!("ellipse semi-axes must be positive, got ({a}, {b})")));
    }
    let (cx, cy) = center;
    if !(cx.is_finite() && cy.is_finite()) {
        return Err(invalid("ellipse centre is not finite"));
    }
    let phi = ScalarField::par_from_fn(width, height, |x, y| {
        let (dx, dy) = ((x as f64 - cx).abs(), (y as f64 - cy).abs());
        let inside = (dx / a).powi(2) + (dy / b).powi(2) < 1.0;
        let d = if a >= b {
            ellipse_distance(a, b, dx, dy)
        } else {
            ellipse_distance(b, a, dy, dx)
        };
        if inside {
            d
        } else {
            -d
        }
    });
    if !phi.iter().any(|&v| v > 0.0) {
        return Err(invalid(format!(
            "ellipse at ({cx}, {cy}) with axes ({a}, {b}) covers no pixel of the {width}x{height} field"
        )));
    }
    Ok(phi)
}
