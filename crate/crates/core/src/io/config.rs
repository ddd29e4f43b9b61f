use crate::error::{Result, StereoError};
use crate::hierarchy::DistributedFitOptions;
use crate::levelset::Kernel;
use crate::solver::{FitMode, SolverConfig};

/// Per-scene thresholds for the monocular and occlusion boundary cues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalParams {
    pub edge_threshold: f64,
    pub gradient_threshold: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self {
            edge_threshold: 0.25,
            gradient_threshold: 0.2,
        }
    }
}

/// Everything a `key = value` config file can set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub signals: SignalParams,
    /// Averaging options, kept even while the centralized fit is selected.
    pub fit_options: DistributedFitOptions,
}

pub const CONFIG_KEYS: &[&str] = &[
    "dt",
    "alpha1",
    "alpha2",
    "alpha3",
    "mu",
    "beta",
    "epsilon",
    "kernel",
    "reinit_every",
    "median_window",
    "max_iterations",
    "stop_tolerance",
    "stop_window",
    "num_levels",
    "freeze_shapes",
    "fit_mode",
    "fit_rounds",
    "fit_weight_power",
    "edge_threshold",
    "gradient_threshold",
];

fn cfg_err(msg: String) -> StereoError {
    StereoError::Config(msg)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| cfg_err(format!("key {key:?}: cannot parse value {value:?}")))
}

impl RunConfig {
    /// Applies one assignment; unknown keys are an error naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.solver;
        match key {
            "dt" => s.dt = num(key, value)?,
            "alpha1" => s.alpha[0] = num(key, value)?,
            "alpha2" => s.alpha[1] = num(key, value)?,
            "alpha3" => s.alpha[2] = num(key, value)?,
            "mu" => s.mu = num(key, value)?,
            "beta" => {
                s.beta = match value {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "epsilon" => s.epsilon = num(key, value)?,
            "kernel" => {
                s.kernel = Kernel::parse(value)
                    .ok_or_else(|| cfg_err(format!("key \"kernel\": expected compact or arctan, got {value:?}")))?
            }
            "reinit_every" => s.reinit_every = num(key, value)?,
            "median_window" => s.median_window = num(key, value)?,
            "max_iterations" => s.max_iterations = num(key, value)?,
            "stop_tolerance" => s.stop_tolerance = num(key, value)?,
            "stop_window" => s.stop_window = num(key, value)?,
            "num_levels" => s.num_levels = num(key, value)?,
            "freeze_shapes" => s.freeze_shapes = num(key, value)?,
            "fit_mode" => {
                s.fit_mode = match value {
                    "centralized" => FitMode::Centralized,
                    "distributed" => FitMode::Distributed(self.fit_options),
                    _ => {
                        return Err(cfg_err(format!(
                            "key \"fit_mode\": expected centralized or distributed, got {value:?}"
                        )))
                    }
                }
            }
            "fit_rounds" => self.fit_options.rounds = num(key, value)?,
            "fit_weight_power" => self.fit_options.weight_power = num(key, value)?,
            "edge_threshold" => self.signals.edge_threshold = num(key, value)?,
            "gradient_threshold" => self.signals.gradient_threshold = num(key, value)?,
            _ => return Err(cfg_err(format!("unknown config key {key:?}"))),
        }
        if let FitMode::Distributed(o) = &mut self.solver.fit_mode {
            *o = self.fit_options;
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every setting, in [`CONFIG_KEYS`]
    /// order; parsing it back reproduces `self`.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let s = &self.solver;
        let values = [
            s.dt.to_string(),
            s.alpha[0].to_string(),
            s.alpha[1].to_string(),
            s.alpha[2].to_string(),
            s.mu.to_string(),
            s.beta.map_or_else(|| "auto".to_string(), |b| b.to_string()),
            s.epsilon.to_string(),
            s.kernel.name().to_string(),
            s.reinit_every.to_string(),
            s.median_window.to_string(),
            s.max_iterations.to_string(),
            s.stop_tolerance.to_string(),
            s.stop_window.to_string(),
            s.num_levels.to_string(),
            s.freeze_shapes.to_string(),
            match s.fit_mode {
                FitMode::Centralized => "centralized",
                FitMode::Distributed(_) => "distributed",
            }
            .to_string(),
            self.fit_options.rounds.to_string(),
            self.fit_options.weight_power.to_string(),
            self.signals.edge_threshold.to_string(),
            self.signals.gradient_threshold.to_string(),
        ];
        CONFIG_KEYS.iter().copied().zip(values).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies a `key=value` assignment as given on a command line.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate().map_err(|e| cfg_err(e.to_string()))?;
        let p = self.signals;
        if !(p.edge_threshold > 0.0 && p.gradient_threshold > 0.0) {
            return Err(cfg_err("edge_threshold and gradient_threshold must be positive".into()));
        }
        if self.fit_options.rounds == 0 {
            return Err(cfg_err("fit_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parses flat `key = value` text on top of the defaults. `#` starts a
/// comment; blank lines are ignored; a repeated key is an error.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
        let k = k.trim();
        if !seen.insert(k.to_string()) {
            return Err(cfg_err(format!("line {}: key {k:?} given twice", n + 1)));
        }
        cfg.set(k, v.trim()).map_err(|e| {
            cfg_err(format!(
                "line {}: {}",
                n + 1,
                e.to_string().trim_start_matches("config error: ")
            ))
        })?;
    }
    Ok(cfg)
}
