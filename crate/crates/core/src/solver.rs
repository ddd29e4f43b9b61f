//! Alternating descent: patch consensus, global shape fit, occlusion shift,
//! level-set step, with median regularization and periodic reinitialization.

use std::collections::VecDeque;

use log::{debug, info, warn};

use crate::error::{invalid, Result, StereoError};
use crate::geometry::{compose_disparity, compute_delta_theta, predict_occlusion, CoordFrame, ShapeModel};
use crate::grid::{Mask, ScalarField};
use crate::hierarchy::{
    build_hierarchy, distributed_fit_shapes, fit_shapes, Consensus, DistributedFitOptions, FitRegions, PatchHierarchy,
};
use crate::levelset::{reinitialize, update_phi, BoundaryWeight, EnergyTerms, Kernel, LevelSet};
use crate::signals::Signals;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMode {
    Centralized,
    Distributed(DistributedFitOptions),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub alpha: [f64; 3],
    pub mu: f64,
    /// Disparity prior weight; `None` means `0.4 / d_max`.
    pub beta: Option<f64>,
    pub epsilon: f64,
    pub kernel: Kernel,
    pub reinit_every: usize,
    pub median_window: usize,
    pub max_iterations: usize,
    /// Stop once the fraction of pixels whose sign differs from
    /// `stop_window` iterations earlier falls below this.
    pub stop_tolerance: f64,
    pub stop_window: usize,
    pub num_levels: usize,
    /// Keep Θ at its initial value (ablation).
    pub freeze_shapes: bool,
    pub fit_mode: FitMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.2,
            alpha: [0.2, 0.8, 0.1],
            mu: 4.0,
            beta: None,
            epsilon: 1.5,
            kernel: Kernel::Compact,
            reinit_every: 10,
            median_window: 7,
            max_iterations: 1000,
            stop_tolerance: 1e-4,
            stop_window: 20,
            num_levels: 4,
            freeze_shapes: false,
            fit_mode: FitMode::Centralized,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("dt", self.dt), ("alpha3", self.alpha[2]), ("epsilon", self.epsilon)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.alpha[0] < 0.0 || self.alpha[1] < 0.0 || self.mu < 0.0 {
            return Err(invalid("alpha1, alpha2 and mu must be non-negative"));
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0) {
                return Err(invalid(format!("beta must be non-negative, got {b}")));
            }
        }
        if self.median_window.is_multiple_of(2) {
            return Err(invalid(format!(
                "median window must be odd, got {}",
                self.median_window
            )));
        }
        if self.reinit_every == 0 || self.num_levels == 0 || self.stop_window == 0 {
            return Err(invalid("reinit_every, num_levels and stop_window must be at least 1"));
        }
        if !(self.stop_tolerance >= 0.0) {
            return Err(invalid("stop tolerance must be non-negative"));
        }
        Ok(())
    }

    pub fn beta_for(&self, d_max: usize) -> f64 {
        self.beta.unwrap_or(0.4 / d_max as f64)
    }
}

/// One row of the per-iteration diagnostic trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub energy: f64,
    pub boundary_change: f64,
    pub foreground_pixels: usize,
    pub background_pixels: usize,
    pub occluded_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIterations,
    DegenerateBoundary,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max-iterations",
            RunStatus::DegenerateBoundary => "degenerate-boundary",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub levelset: LevelSet,
    pub theta1: ShapeModel,
    pub theta2: ShapeModel,
    pub hierarchy: PatchHierarchy,
    pub consensus: Option<Consensus>,
    pub delta_theta: ScalarField,
    pub iteration: usize,
    pub trace: Vec<TraceRecord>,
    pub frame: CoordFrame,
}

impl SolverState {
    /// Starts from `phi0`; shapes default to a constant `d_max / 2` until the
    /// first fit replaces them.
    pub fn new(
        signals: &Signals,
        phi0: ScalarField,
        initial_shapes: Option<(ShapeModel, ShapeModel)>,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let (w, h) = (signals.width(), signals.height());
        if phi0.width() != w || phi0.height() != h {
            return Err(invalid(format!(
                "initial phi is {}x{}, signals are {w}x{h}",
                phi0.width(),
                phi0.height()
            )));
        }
        let d_max = signals.d_max();
        let frame = CoordFrame::normalized(w, h);
        let (theta1, theta2) = match initial_shapes {
            Some((a, b)) => (a.reframe(frame), b.reframe(frame)),
            None => {
                if cfg.freeze_shapes {
                    return Err(invalid("frozen shapes need initial shapes"));
                }
                let mid = ShapeModel::constant(d_max as f64 / 2.0, frame);
                (mid, mid)
            }
        };
        Ok(Self {
            levelset: LevelSet::new(phi0, cfg.epsilon, cfg.kernel)?,
            theta1,
            theta2,
            hierarchy: build_hierarchy(w, h, cfg.num_levels, d_max)?,
            consensus: None,
            delta_theta: ScalarField::filled(w, h, 0.0),
            iteration: 0,
            trace: Vec::new(),
            frame,
        })
    }

    pub fn phi(&self) -> &ScalarField {
        &self.levelset.phi
    }

    pub fn occlusion(&self) -> Mask {
        predict_occlusion(&self.levelset.phi, &self.delta_theta)
    }

    pub fn disparity(&self, d_max: usize) -> ScalarField {
        compose_disparity(&self.theta1, &self.theta2, &self.levelset.phi, d_max)
    }

    /// Whether `φ` still has both signs.
    pub fn has_boundary(&self) -> bool {
        let phi = &self.levelset.phi;
        phi.iter().any(|&v| v > 0.0) && phi.iter().any(|&v| v <= 0.0)
    }
}

/// One full round. Returns the trace record it appended.
pub fn step(state: &mut SolverState, signals: &Signals, cfg: &SolverConfig) -> Result<TraceRecord> {
    let d_max = signals.d_max();
    let first = state.iteration == 0;
    let phi = state.levelset.phi.clone();

    // (1) upward pass
    if first {
        state.delta_theta = ScalarField::filled(phi.width(), phi.height(), 0.0);
        state.hierarchy.set_all_valid();
        state.hierarchy.upward_costs(&signals.matching, None, 0.0);
    } else {
        state.hierarchy.upward_validity(&phi, &state.delta_theta);
        let prior = compose_disparity(&state.theta1, &state.theta2, &phi, d_max);
        state
            .hierarchy
            .upward_costs(&signals.matching, Some(&prior), cfg.beta_for(d_max));
    }
    state.hierarchy.update_messages();

    // (2) downward consensus, (3) shape fit
    let consensus = state.hierarchy.downward_consensus();
    if !cfg.freeze_shapes {
        let regions = FitRegions::new(&phi, &predict_occlusion(&phi, &state.delta_theta));
        let prev = (&state.theta1, &state.theta2);
        let fit = match cfg.fit_mode {
            FitMode::Centralized => fit_shapes(&consensus, &regions, prev, state.frame),
            FitMode::Distributed(opts) => {
                let out = distributed_fit_shapes(&state.hierarchy, &consensus, &regions, prev, state.frame, opts)?;
                debug!("distributed fit dispersion {:?}", out.dispersion);
                out.fit
            }
        };
        state.theta1 = fit.theta1;
        state.theta2 = fit.theta2;
    }
    state.consensus = Some(consensus);

    // (4) occlusion shift for the current boundary
    let delta_theta = compute_delta_theta(&state.theta1, &state.theta2, &phi, d_max);

    // (5) level-set step
    let boundary = BoundaryWeight::build(&signals.occlusion, &signals.monocular, &state.theta1, cfg.alpha)?;
    let terms = EnergyTerms::from_volumes(
        &signals.matching,
        &boundary,
        &state.theta1,
        &state.theta2,
        cfg.mu,
        cfg.epsilon,
        cfg.kernel,
    );
    let mut next = update_phi(&phi, &terms, &delta_theta, cfg.dt, Some(cfg.median_window))?;
    state.iteration += 1;
    state.levelset.iterations_since_reinit += 1;

    // (6) reinitialization cadence
    if state.levelset.iterations_since_reinit >= cfg.reinit_every {
        next = reinitialize(&next);
        state.levelset.iterations_since_reinit = 0;
    }

    let flips = phi
        .iter()
        .zip(next.iter())
        .filter(|(a, b)| (**a > 0.0) != (**b > 0.0))
        .count();
    state.levelset.phi = next;
    state.delta_theta = compute_delta_theta(&state.theta1, &state.theta2, &state.levelset.phi, d_max);
    let energy = terms.energy(&state.levelset.phi, &state.delta_theta);
    if !energy.is_finite() {
        return Err(StereoError::NonFiniteEnergy(state.iteration));
    }
    let fg = state.levelset.phi.iter().filter(|&&v| v > 0.0).count();
    let occluded = state.occlusion().count();
    let rec = TraceRecord {
        iteration: state.iteration,
        energy,
        boundary_change: flips as f64 / phi.len() as f64,
        foreground_pixels: fg,
        background_pixels: phi.len() - fg - occluded,
        occluded_pixels: occluded,
    };
    debug!(
        "iter {:4}  E={:.6e}  flips={:.3e}  fg={} occ={}  theta1[c]={:.3} theta2[c]={:.3}",
        rec.iteration, rec.energy, rec.boundary_change, fg, occluded, state.theta1.coeffs[5], state.theta2.coeffs[5]
    );
    state.trace.push(rec);
    Ok(rec)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub disparity: ScalarField,
    pub occlusion: Mask,
    pub phi: ScalarField,
    pub theta1: ShapeModel,
    pub theta2: ShapeModel,
    pub trace: Vec<TraceRecord>,
    pub status: RunStatus,
    pub iterations: usize,
}

/// Iterates `step` until the foreground has changed on fewer than
/// `stop_tolerance` of the pixels over the last `stop_window` iterations,
/// the iteration budget runs out, or the boundary vanishes.
pub fn run_from(mut state: SolverState, signals: &Signals, cfg: &SolverConfig) -> Result<RunOutput> {
    let mut history: VecDeque<Mask> = VecDeque::with_capacity(cfg.stop_window + 1);
    history.push_back(state.levelset.foreground());
    let mut status = RunStatus::MaxIterations;
    while state.iteration < cfg.max_iterations {
        step(&mut state, signals, cfg)?;
        if !state.has_boundary() {
            warn!("boundary vanished at iteration {}", state.iteration);
            status = RunStatus::DegenerateBoundary;
            break;
        }
        history.push_back(state.levelset.foreground());
        if history.len() > cfg.stop_window + 1 {
            history.pop_front();
        }
        if history.len() == cfg.stop_window + 1 {
            let (old, now) = (&history[0], &history[cfg.stop_window]);
            let changed = old.iter().zip(now.iter()).filter(|(a, b)| a != b).count();
            if (changed as f64) < cfg.stop_tolerance * now.len() as f64 {
                status = RunStatus::Converged;
                break;
            }
        }
    }
    info!(
        "solver finished after {} iterations: {}",
        state.iteration,
        status.name()
    );
    let d_max = signals.d_max();
    Ok(RunOutput {
        disparity: state.disparity(d_max),
        occlusion: state.occlusion(),
        phi: state.levelset.phi.clone(),
        theta1: state.theta1,
        theta2: state.theta2,
        trace: state.trace,
        status,
        iterations: state.iteration,
    })
}

/// Ellipse initialization: centre and semi-axes in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseInit {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
}

impl EllipseInit {
    /// Centred ellipse spanning `fraction` of each dimension.
    pub fn centered(width: usize, height: usize, fraction: f64) -> Self {
        Self {
            center: ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0),
            semi_axes: (fraction * width as f64 / 2.0, fraction * height as f64 / 2.0),
        }
    }
}

pub fn run(signals: &Signals, init: EllipseInit, cfg: &SolverConfig) -> Result<RunOutput> {
    let phi0 = crate::levelset::init_ellipse(signals.width(), signals.height(), init.center, init.semi_axes)?;
    let state = SolverState::new(signals, phi0, None, cfg)?;
    run_from(state, signals, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Image, ImagePair};

    fn tiny_signals() -> Signals {
        let img = Image::new(
            24,
            24,
            1,
            (0..24 * 24).map(|i| ((i * 7919) % 97) as f64 / 97.0).collect(),
        )
        .unwrap();
        let pair = ImagePair::new(img.clone(), img, 4).unwrap();
        Signals::build(&pair, 0.1, 0.05).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            median_window: 6,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            dt: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!((SolverConfig::default().beta_for(64) - 0.4 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn first_iteration_assumes_no_occlusion() {
        let s = tiny_signals();
        let cfg = SolverConfig {
            num_levels: 2,
            ..SolverConfig::default()
        };
        let phi0 = crate::levelset::init_ellipse(24, 24, (11.5, 11.5), (6.0, 6.0)).unwrap();
        let mut state = SolverState::new(&s, phi0, None, &cfg).unwrap();
        step(&mut state, &s, &cfg).unwrap();
        assert!(state.hierarchy.levels.iter().all(|l| l.w.iter().all(|&w| w)));
        assert_eq!(state.iteration, 1);
        assert_eq!(state.trace.len(), 1);
        step(&mut state, &s, &cfg).unwrap();
        // afterwards validity follows the boundary
        let l0 = &state.hierarchy.levels[0];
        assert!(l0.w.iter().zip(l0.f.iter().zip(&l0.b)).all(|(w, (f, b))| *w == (f ^ b)));
    }

    #[test]
    fn frozen_shapes_need_a_start() {
        let s = tiny_signals();
        let cfg = SolverConfig {
            freeze_shapes: true,
            num_levels: 2,
            ..SolverConfig::default()
        };
        let phi0 = crate::levelset::init_ellipse(24, 24, (11.5, 11.5), (6.0, 6.0)).unwrap();
        assert!(SolverState::new(&s, phi0, None, &cfg).is_err());
    }
}
