//! Undecimated multiscale patch hierarchy.
//!
//! Level `k` holds a patch of side `3^k` at every pixel offset that keeps it
//! inside the field. A level-`k` patch at `(i, j)` is tiled exactly by the
//! nine level-`(k-1)` patches at `(i + a·s, j + b·s)`, `a, b ∈ {0, 1, 2}`,
//! `s = 3^(k-1)`, so every pixel has exactly one descent path from each patch
//! that contains it.

use log::warn;
use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::geometry::{basis, CoordFrame, ShapeModel, BASIS_LEN};
use crate::grid::{Mask, ScalarField};
use crate::signals::CostVolume;

/// Messages whose cost curve rises less than this above its minimum on
/// average carry no information.
pub const FLAT_CURVE_EPS: f64 = 1e-9;

/// Largest accepted condition number of a 6x6 normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Per-patch state of one level, stored patch-row-major (`j * nx + i`).
#[derive(Debug, Clone)]
pub struct Level {
    pub side: usize,
    pub nx: usize,
    pub ny: usize,
    pub f: Vec<bool>,
    pub b: Vec<bool>,
    pub w: Vec<bool>,
    /// Aggregated cost curves, `(d_max + 1)` per patch.
    pub costs: Vec<f64>,
    pub d: Vec<f64>,
    pub sigma: Vec<f64>,
    pub acc_inv: Vec<f64>,
    pub acc_d: Vec<f64>,
}

impl Level {
    fn new(side: usize, width: usize, height: usize, depth: usize) -> Self {
        let (nx, ny) = (width + 1 - side, height + 1 - side);
        let n = nx * ny;
        Self {
            side,
            nx,
            ny,
            f: vec![false; n],
            b: vec![false; n],
            w: vec![true; n],
            costs: vec![0.0; n * depth],
            d: vec![0.0; n],
            sigma: vec![f64::INFINITY; n],
            acc_inv: vec![0.0; n],
            acc_d: vec![0.0; n],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Does the patch with top-left corner `(i, j)` exist at this level?
    #[inline]
    pub fn contains_patch(&self, i: isize, j: isize) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny
    }

    pub fn cost(&self, i: usize, j: usize) -> &[f64] {
        let depth = self.costs.len() / self.len();
        let k = self.index(i, j) * depth;
        &self.costs[k..k + depth]
    }

    /// Message precision `w_p / σ_p²` (zero for invalid or flat patches).
    #[inline]
    pub fn precision(&self, k: usize) -> f64 {
        if !self.w[k] || !self.sigma[k].is_finite() {
            0.0
        } else {
            1.0 / (self.sigma[k] * self.sigma[k])
        }
    }
}

#[derive(Debug, Clone)]
pub struct PatchHierarchy {
    pub width: usize,
    pub height: usize,
    pub d_max: usize,
    pub levels: Vec<Level>,
}

/// Per-pixel Gaussian consensus `(d̄, σ)`; `σ = ∞` and `d̄ = NaN` where no
/// valid patch contributes.
#[derive(Debug, Clone)]
pub struct Consensus {
    pub mean: ScalarField,
    pub sigma: ScalarField,
}

impl Consensus {
    pub fn is_informed(&self, x: usize, y: usize) -> bool {
        self.sigma[(x, y)].is_finite()
    }

    pub fn informed(&self) -> Mask {
        self.sigma.map(|s| s.is_finite())
    }
}

pub fn build_hierarchy(width: usize, height: usize, num_levels: usize, d_max: usize) -> Result<PatchHierarchy> {
    if num_levels == 0 {
        return Err(invalid("hierarchy needs at least one level"));
    }
    if d_max < 1 {
        return Err(invalid("d_max must be at least 1"));
    }
    let top = 3usize
        .checked_pow(num_levels as u32 - 1)
        .ok_or_else(|| invalid("too many hierarchy levels"))?;
    if top > width.min(height) {
        return Err(invalid(format!(
            "{num_levels} levels need patches of side {top}, larger than the {width}x{height} field"
        )));
    }
    let levels = (0..num_levels)
        .map(|k| Level::new(3usize.pow(k as u32), width, height, d_max + 1))
        .collect();
    Ok(PatchHierarchy {
        width,
        height,
        d_max,
        levels,
    })
}

impl PatchHierarchy {
    pub fn depth(&self) -> usize {
        self.d_max + 1
    }

    fn check_field(&self, w: usize, h: usize) {
        assert!(
            w == self.width && h == self.height,
            "field {w}x{h} does not match hierarchy {}x{}",
            self.width,
            self.height
        );
    }

    /// `f = [φ > 0]`, `b = [φ(x + Δθ) < 0]` at pixels, OR-ed upward;
    /// `w = f XOR b` everywhere.
    pub fn upward_validity(&mut self, phi: &ScalarField, delta_theta: &ScalarField) {
        self.check_field(phi.width(), phi.height());
        self.check_field(delta_theta.width(), delta_theta.height());
        {
            let l0 = &mut self.levels[0];
            for y in 0..phi.height() {
                for x in 0..phi.width() {
                    let k = y * phi.width() + x;
                    l0.f[k] = phi[(x, y)] > 0.0;
                    l0.b[k] = phi.sample_x(x as f64 + delta_theta[(x, y)], y) < 0.0;
                    l0.w[k] = l0.f[k] ^ l0.b[k];
                }
            }
        }
        for lk in 1..self.levels.len() {
            let (lower, upper) = self.levels.split_at_mut(lk);
            let child = &lower[lk - 1];
            let parent = &mut upper[0];
            let s = child.side as isize;
            for j in 0..parent.ny {
                for i in 0..parent.nx {
                    let (mut f, mut b) = (false, false);
                    for cb in 0..3 {
                        for ca in 0..3 {
                            let c = child.index(i + ca * s as usize, j + cb * s as usize);
                            f |= child.f[c];
                            b |= child.b[c];
                        }
                    }
                    let k = parent.index(i, j);
                    parent.f[k] = f;
                    parent.b[k] = b;
                    parent.w[k] = f ^ b;
                }
            }
        }
    }

    /// `C_p(d) = C(x, y, d) + β|d − D(x, y)|` at pixels (β term omitted when
    /// `prior` is `None`), summed over the nine child tiles above.
    pub fn upward_costs(&mut self, matching: &CostVolume, prior: Option<&ScalarField>, beta: f64) {
        self.check_field(matching.width(), matching.height());
        assert_eq!(matching.depth(), self.depth(), "cost volume depth mismatch");
        let depth = self.depth();
        let width = self.width;
        self.levels[0]
            .costs
            .par_chunks_mut(width * depth)
            .enumerate()
            .for_each(|(y, row)| {
                for x in 0..width {
                    let curve = matching.curve(x, y);
                    let out = &mut row[x * depth..(x + 1) * depth];
                    match prior {
                        Some(dd) => {
                            let d0 = dd[(x, y)];
                            for (d, (o, c)) in out.iter_mut().zip(curve).enumerate() {
                                *o = c + beta * (d as f64 - d0).abs();
                            }
                        }
                        None => out.copy_from_slice(curve),
                    }
                }
            });
        for lk in 1..self.levels.len() {
            let (lower, upper) = self.levels.split_at_mut(lk);
            let child = &lower[lk - 1];
            let parent = &mut upper[0];
            let s = child.side;
            let nx = parent.nx;
            parent
                .costs
                .par_chunks_mut(nx * depth)
                .enumerate()
                .for_each(|(j, row)| {
                    for i in 0..nx {
                        let out = &mut row[i * depth..(i + 1) * depth];
                        out.iter_mut().for_each(|v| *v = 0.0);
                        for cb in 0..3 {
                            for ca in 0..3 {
                                let c = child.index(i + ca * s, j + cb * s) * depth;
                                for (o, v) in out.iter_mut().zip(&child.costs[c..c + depth]) {
                                    *o += v;
                                }
                            }
                        }
                    }
                });
        }
    }

    /// `d_p = argmin C_p` (ties to the smaller d), `σ_p = d_max / (⟨C_p⟩ − min C_p)`.
    pub fn update_messages(&mut self) {
        let depth = self.depth();
        let d_max = self.d_max as f64;
        for level in &mut self.levels {
            let msgs: Vec<(f64, f64)> = level.costs.par_chunks(depth).map(|c| message(c, d_max)).collect();
            for (k, (d, s)) in msgs.into_iter().enumerate() {
                level.d[k] = d;
                level.sigma[k] = s;
            }
        }
    }

    /// Downward product of Gaussians:
    /// `acc_p = w_p/σ_p² + Σ_{parents q} acc_q`, likewise for `d`-weighted sums.
    pub fn downward_consensus(&mut self) -> Consensus {
        let top = self.levels.len() - 1;
        for lk in (0..=top).rev() {
            let (lower, upper) = self.levels.split_at_mut(lk + 1);
            let level = &mut lower[lk];
            let parent = upper.first();
            for j in 0..level.ny {
                for i in 0..level.nx {
                    let k = level.index(i, j);
                    let prec = level.precision(k);
                    let (mut inv, mut dd) = (prec, if prec > 0.0 { prec * level.d[k] } else { 0.0 });
                    if let Some(p) = parent {
                        let s = level.side as isize;
                        for pb in 0..3isize {
                            for pa in 0..3isize {
                                let (pi, pj) = (i as isize - pa * s, j as isize - pb * s);
                                if p.contains_patch(pi, pj) {
                                    let q = p.index(pi as usize, pj as usize);
                                    inv += p.acc_inv[q];
                                    dd += p.acc_d[q];
                                }
                            }
                        }
                    }
                    level.acc_inv[k] = inv;
                    level.acc_d[k] = dd;
                }
            }
        }
        let l0 = &self.levels[0];
        let (w, h) = (self.width, self.height);
        let mean = ScalarField::from_fn(w, h, |x, y| {
            let k = l0.index(x, y);
            if l0.acc_inv[k] > 0.0 {
                l0.acc_d[k] / l0.acc_inv[k]
            } else {
                f64::NAN
            }
        });
        let sigma = ScalarField::from_fn(w, h, |x, y| {
            let k = l0.index(x, y);
            if l0.acc_inv[k] > 0.0 {
                (1.0 / l0.acc_inv[k]).sqrt()
            } else {
                f64::INFINITY
            }
        });
        Consensus { mean, sigma }
    }

    /// Marks every patch valid (used before any shape exists).
    pub fn set_all_valid(&mut self) {
        for level in &mut self.levels {
            level.w.iter_mut().for_each(|w| *w = true);
        }
    }
}

fn message(curve: &[f64], d_max: f64) -> (f64, f64) {
    let (mut best, mut arg) = (f64::INFINITY, 0usize);
    for (d, &c) in curve.iter().enumerate() {
        if c < best {
            best = c;
            arg = d;
        }
    }
    let mean = curve.iter().sum::<f64>() / curve.len() as f64;
    let spread = mean - best;
    let sigma = if spread <= FLAT_CURVE_EPS {
        f64::INFINITY
    } else {
        d_max / spread
    };
    (arg as f64, sigma)
}

/// Accumulated weighted normal equations `A = Σ w·UUᵀ`, `b = Σ w·U·d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEquations {
    pub a: Matrix6<f64>,
    pub b: Vector6<f64>,
    pub count: usize,
}

impl Default for NormalEquations {
    fn default() -> Self {
        Self {
            a: Matrix6::zeros(),
            b: Vector6::zeros(),
            count: 0,
        }
    }
}

impl NormalEquations {
    pub fn add(&mut self, u: &[f64; BASIS_LEN], d: f64, weight: f64) {
        let u = Vector6::from_row_slice(u);
        self.a += weight * u * u.transpose();
        self.b += weight * d * u;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &NormalEquations) {
        self.a += other.a;
        self.b += other.b;
        self.count += other.count;
    }

    /// Condition number of the (symmetric) normal matrix.
    pub fn condition(&self) -> f64 {
        let eig = SymmetricEigen::new(self.a).eigenvalues;
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Solves `A c = b` unless `A` is ill-conditioned.
    pub fn solve(&self) -> Option<[f64; BASIS_LEN]> {
        if self.condition() > MAX_CONDITION {
            return None;
        }
        let sol = self.a.cholesky()?.solve(&self.b);
        let mut out = [0.0; BASIS_LEN];
        out.copy_from_slice(sol.as_slice());
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Region membership for the two shape fits.
#[derive(Debug, Clone)]
pub struct FitRegions {
    /// `Ω₁ = {φ > 0}`.
    pub foreground: Mask,
    /// `Ω₂ = {φ ≤ 0} \ predicted occlusion`.
    pub background: Mask,
}

impl FitRegions {
    pub fn new(phi: &ScalarField, occluded: &Mask) -> Self {
        Self {
            foreground: phi.map(|&v| v > 0.0),
            background: Mask::from_fn(phi.width(), phi.height(), |x, y| {
                phi[(x, y)] <= 0.0 && !occluded[(x, y)]
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeFit {
    pub theta1: ShapeModel,
    pub theta2: ShapeModel,
    /// Whether each region produced a fresh estimate (false: previous kept).
    pub updated: [bool; 2],
}

fn region_equations(consensus: &Consensus, region: &Mask, frame: &CoordFrame, power: i32) -> NormalEquations {
    let (w, h) = (region.width(), region.height());
    let rows: Vec<NormalEquations> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut eq = NormalEquations::default();
            for x in 0..w {
                let s = consensus.sigma[(x, y)];
                if region[(x, y)] && s.is_finite() {
                    eq.add(
                        &basis(frame, x as f64, y as f64),
                        consensus.mean[(x, y)],
                        s.powi(-power),
                    );
                }
            }
            eq
        })
        .collect();
    let mut total = NormalEquations::default();
    for r in &rows {
        total.merge(r);
    }
    total
}

fn solve_or_keep(eq: &NormalEquations, previous: &ShapeModel, frame: CoordFrame, label: &str) -> (ShapeModel, bool) {
    if eq.count < BASIS_LEN {
        warn!(
            "{label} fit: only {} informed pixels (need {BASIS_LEN}); keeping previous shape",
            eq.count
        );
        return (*previous, false);
    }
    match eq.solve() {
        Some(c) => (ShapeModel::new(c, frame), true),
        None => {
            warn!(
                "{label} fit: normal matrix condition {:.3e} exceeds {MAX_CONDITION:.0e}; keeping previous shape",
                eq.condition()
            );
            (*previous, false)
        }
    }
}

/// Weighted least squares `min Σ (Θ_j − d̄)²/σ²` per region, in `frame`.
pub fn fit_shapes(
    consensus: &Consensus,
    regions: &FitRegions,
    previous: (&ShapeModel, &ShapeModel),
    frame: CoordFrame,
) -> ShapeFit {
    let eq1 = region_equations(consensus, &regions.foreground, &frame, 2);
    let eq2 = region_equations(consensus, &regions.background, &frame, 2);
    let (theta1, u1) = solve_or_keep(&eq1, previous.0, frame, "foreground");
    let (theta2, u2) = solve_or_keep(&eq2, previous.1, frame, "background");
    ShapeFit {
        theta1,
        theta2,
        updated: [u1, u2],
    }
}

/// Options for the consensus-averaging shape fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistributedFitOptions {
    pub rounds: usize,
    /// Pixel weight `1/σ^power`; 4 reproduces the local correlation terms as
    /// written (`A_p = UUᵀ/σ⁴`), 2 matches the centralized fit.
    pub weight_power: i32,
}

impl Default for DistributedFitOptions {
    fn default() -> Self {
        Self {
            rounds: 2000,
            weight_power: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistributedFit {
    pub fit: ShapeFit,
    /// Largest deviation of any unit's Θ from the reported Θ, over a 3x3
    /// grid of probe points, per region.
    pub dispersion: [f64; 2],
}

/// Lateral links at pixel level: `±d_max` along the scanline plus the pixels
/// directly above and below (the vertical links keep the graph connected).
pub fn lateral_neighbors(width: usize, height: usize, radius: usize, x: usize, y: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * radius + 2);
    let lo = x.saturating_sub(radius);
    let hi = (x + radius).min(width - 1);
    for xx in lo..=hi {
        if xx != x {
            out.push(y * width + xx);
        }
    }
    if y > 0 {
        out.push((y - 1) * width + x);
    }
    if y + 1 < height {
        out.push((y + 1) * width + x);
    }
    out
}

/// Per-unit `(A, b)` for both regions, packed as 2 x (36 + 6) values.
const PACK: usize = 2 * (BASIS_LEN * BASIS_LEN + BASIS_LEN);

fn pack(eq: &NormalEquations, out: &mut [f64]) {
    out[..36].copy_from_slice(eq.a.as_slice());
    out[36..42].copy_from_slice(eq.b.as_slice());
}

fn unpack(v: &[f64]) -> NormalEquations {
    NormalEquations {
        a: Matrix6::from_column_slice(&v[..36]),
        b: Vector6::from_column_slice(&v[36..42]),
        count: usize::MAX,
    }
}

/// Shape fitting by synchronous Metropolis-weighted averaging of per-pixel
/// normal equations over the lateral graph, each unit then solving its own
/// averaged system.
pub fn distributed_fit_shapes(
    hierarchy: &PatchHierarchy,
    consensus: &Consensus,
    regions: &FitRegions,
    previous: (&ShapeModel, &ShapeModel),
    frame: CoordFrame,
    options: DistributedFitOptions,
) -> Result<DistributedFit> {
    if options.rounds == 0 {
        return Err(invalid("distributed fit needs at least one averaging round"));
    }
    let (w, h) = (hierarchy.width, hierarchy.height);
    let n = w * h;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|k| lateral_neighbors(w, h, hierarchy.d_max, k % w, k / w))
        .collect();
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            neighbors[k]
                .iter()
                .map(|&m| 1.0 / (1.0 + neighbors[k].len().max(neighbors[m].len()) as f64))
                .collect()
        })
        .collect();

    let mut state = vec![0.0; n * PACK];
    let mut counts = [0usize; 2];
    for (k, unit) in state.chunks_mut(PACK).enumerate() {
        let (x, y) = (k % w, k / w);
        let s = consensus.sigma[(x, y)];
        if !s.is_finite() {
            continue;
        }
        let u = basis(&frame, x as f64, y as f64);
        let wt = s.powi(-options.weight_power);
        for (r, mask) in [&regions.foreground, &regions.background].iter().enumerate() {
            if mask[(x, y)] {
                let mut eq = NormalEquations::default();
                eq.add(&u, consensus.mean[(x, y)], wt);
                pack(&eq, &mut unit[r * PACK / 2..(r + 1) * PACK / 2]);
                counts[r] += 1;
            }
        }
    }

    let mut next = vec![0.0; n * PACK];
    for _ in 0..options.rounds {
        next.par_chunks_mut(PACK).enumerate().for_each(|(k, out)| {
            let own = &state[k * PACK..(k + 1) * PACK];
            let mut self_w = 1.0;
            out.copy_from_slice(own);
            for (&m, &wm) in neighbors[k].iter().zip(&weights[k]) {
                self_w -= wm;
                let other = &state[m * PACK..(m + 1) * PACK];
                for ((o, a), b) in out.iter_mut().zip(other).zip(own) {
                    *o += wm * (a - b);
                }
            }
            debug_assert!(self_w >= 0.0);
        });
        std::mem::swap(&mut state, &mut next);
    }

    let mut fits = [(*previous.0, false), (*previous.1, false)];
    let mut dispersion = [0.0; 2];
    let probes: Vec<(f64, f64)> = [0.0, 0.5, 1.0]
        .iter()
        .flat_map(|&fy| [0.0, 0.5, 1.0].map(|fx| (fx * (w - 1) as f64, fy * (h - 1) as f64)))
        .collect();
    for r in 0..2 {
        let label = if r == 0 { "foreground" } else { "background" };
        if counts[r] < BASIS_LEN {
            warn!(
                "{label} distributed fit: only {} informed pixels; keeping previous shape",
                counts[r]
            );
            continue;
        }
        let sols: Vec<Option<[f64; BASIS_LEN]>> = state
            .par_chunks(PACK)
            .map(|unit| unpack(&unit[r * PACK / 2..(r + 1) * PACK / 2]).solve())
            .collect();
        let solved: Vec<&[f64; BASIS_LEN]> = sols.iter().flatten().collect();
        if solved.is_empty() {
            warn!("{label} distributed fit: no unit could solve its system; keeping previous shape");
            continue;
        }
        if solved.len() < n {
            warn!(
                "{label} distributed fit: {} of {n} units hold a singular system after {} rounds",
                n - solved.len(),
                options.rounds
            );
        }
        let mut mean = [0.0; BASIS_LEN];
        for s in &solved {
            for (m, v) in mean.iter_mut().zip(s.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= solved.len() as f64);
        let model = ShapeModel::new(mean, frame);
        dispersion[r] = solved
            .iter()
            .map(|s| {
                let unit = ShapeModel::new(**s, frame);
                probes
                    .iter()
                    .map(|&(x, y)| (unit.eval(x, y) - model.eval(x, y)).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        fits[r] = (model, true);
    }
    Ok(DistributedFit {
        fit: ShapeFit {
            theta1: fits[0].0,
            theta2: fits[1].0,
            updated: [fits[0].1, fits[1].1],
        },
        dispersion,
    })
}
