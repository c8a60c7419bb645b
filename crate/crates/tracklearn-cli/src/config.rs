//! Experiment configuration: one JSON file drives every subcommand.

use serde::{Deserialize, Serialize};
use std::path::Path;

use tracklearn::ilc::{IlcConfig, IlcConstraints, KalmanConfig, LinearConstraint, Weight};
use tracklearn::l1::L1Config;
use tracklearn::sim::{PlantModel, TRAJECTORY_NAMES};
use nalgebra::{DMatrix, DVector};

use crate::CmdError;

/// A per-axis field that may be written as a scalar (broadcast) or an array.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerAxis {
    pub fn broadcast(&self, axes: usize, name: &str) -> Result<Vec<f64>, CmdError> {
        match self {
            PerAxis::Scalar(v) => Ok(vec![*v; axes]),
            PerAxis::Vector(v) if v.len() == axes => Ok(v.clone()),
            PerAxis::Vector(v) => Err(CmdError::Config(format!(
                "{name}: expected {axes} entries, got {}",
                v.len()
            ))),
        }
    }
}

/// Adaptive-controller block (keys broadcast across axes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L1Block {
    pub m: PerAxis,
    pub omega: PerAxis,
    pub kp: PerAxis,
    pub gamma: f64,
    pub sigma_max: PerAxis,
    pub eps_proj: f64,
    pub lipschitz: f64,
    pub dt_ctrl: f64,
}

impl Default for L1Block {
    fn default() -> Self {
        Self {
            m: PerAxis::Scalar(5.0),
            omega: PerAxis::Scalar(25.0),
            kp: PerAxis::Scalar(2.0),
            gamma: 1000.0,
            sigma_max: PerAxis::Scalar(10.0),
            eps_proj: 0.1,
            lipschitz: 1.0,
            dt_ctrl: 0.01,
        }
    }
}

impl L1Block {
    pub fn to_l1_config(&self, axes: usize) -> Result<L1Config, CmdError> {
        let cfg = L1Config {
            m: self.m.broadcast(axes, "l1.m")?,
            omega: self.omega.broadcast(axes, "l1.omega")?,
            kp: self.kp.broadcast(axes, "l1.kp")?,
            gamma: self.gamma,
            sigma_max: self.sigma_max.broadcast(axes, "l1.sigma_max")?,
            eps_proj: self.eps_proj,
            lipschitz: self.lipschitz,
            dt_ctrl: self.dt_ctrl,
        };
        cfg.validate()
            .map_err(|e| CmdError::Config(format!("l1 block: {e}")))?;
        Ok(cfg)
    }
}

/// Learning block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IlcBlock {
    /// Output-error weight (scaled identity).
    pub q: f64,
    /// Input-effort weight (scaled identity).
    pub r: f64,
    pub p0: f64,
    pub q_proc: f64,
    pub q_meas: f64,
    /// Symmetric input bound `|ũ| ≤ u_max`, absent for unconstrained.
    #[serde(default)]
    pub u_max: Option<f64>,
    /// Symmetric absolute output bound `|y| ≤ y_max`.
    #[serde(default)]
    pub y_max: Option<f64>,
}

impl Default for IlcBlock {
    fn default() -> Self {
        Self {
            q: 1.0,
            r: 1e-3,
            p0: 1.0,
            q_proc: 1e-4,
            q_meas: 1e-2,
            u_max: None,
            y_max: None,
        }
    }
}

impl IlcBlock {
    pub fn to_ilc_config(&self, dim: usize) -> Result<IlcConfig, CmdError> {
        let symmetric_rows = |bound: f64| {
            let mut m = DMatrix::<f64>::zeros(2 * dim, dim);
            let mut b = DVector::<f64>::zeros(2 * dim);
            for i in 0..dim {
                m[(i, i)] = 1.0;
                b[i] = bound;
                m[(dim + i, i)] = -1.0;
                b[dim + i] = bound;
            }
            LinearConstraint { matrix: m, bound: b }
        };
        let constraints = if self.u_max.is_some() || self.y_max.is_some() {
            Some(IlcConstraints {
                input: self.u_max.map(symmetric_rows),
                output: self.y_max.map(symmetric_rows),
                on_absolute_signals: true,
            })
        } else {
            None
        };
        let cfg = IlcConfig {
            q: Weight::Scaled(self.q),
            r: Weight::Scaled(self.r),
            constraints,
            kalman: KalmanConfig::scalar(self.p0, self.q_proc, self.q_meas),
        };
        cfg.validate(dim)
            .map_err(|e| CmdError::Config(format!("ilc block: {e}")))?;
        Ok(cfg)
    }
}

/// Source/target pair used by `repeat` and `diff-ref`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepeatBlock {
    pub source: String,
    pub target: String,
    pub repetitions: usize,
}

impl Default for RepeatBlock {
    fn default() -> Self {
        Self {
            source: "circle".into(),
            target: "lemniscate".into(),
            repetitions: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source_plant: String,
    pub target_plant: String,
    #[serde(default)]
    pub l1: L1Block,
    /// Reference-model override for the target's controller (`diff-ref`).
    #[serde(default)]
    pub l1_target: Option<L1Block>,
    #[serde(default)]
    pub ilc: IlcBlock,
    pub trajectories: Vec<String>,
    pub duration_s: f64,
    pub iterations: usize,
    /// Explicit base seed; derived seeds fan out per command and cell.
    pub seed: u64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub repeat: RepeatBlock,
    #[serde(default = "default_axes")]
    pub axes: usize,
}

fn default_axes() -> usize {
    3
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CmdError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CmdError::Config(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CmdError> {
        resolve_plant(&self.source_plant, self.l1.dt_ctrl)?;
        resolve_plant(&self.target_plant, self.l1.dt_ctrl)?;
        if self.trajectories.is_empty() {
            return Err(CmdError::Config("trajectories: need at least one".into()));
        }
        for t in self.trajectories.iter().chain([&self.repeat.source, &self.repeat.target]) {
            if !TRAJECTORY_NAMES.contains(&t.as_str()) {
                return Err(CmdError::Config(format!(
                    "unknown trajectory '{t}'; valid: {TRAJECTORY_NAMES:?}"
                )));
            }
        }
        if self.iterations < 1 {
            return Err(CmdError::Config("iterations: must be at least 1".into()));
        }
        if self.repeat.repetitions < 1 {
            return Err(CmdError::Config("repeat.repetitions: must be at least 1".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(CmdError::Config("duration_s: must be positive".into()));
        }
        if self.noise_std < 0.0 {
            return Err(CmdError::Config("noise_std: must be nonnegative".into()));
        }
        if self.axes != 3 {
            return Err(CmdError::Config(
                "axes: the simulated vehicles are 3-axis".into(),
            ));
        }
        self.l1.to_l1_config(self.axes)?;
        if let Some(block) = &self.l1_target {
            block.to_l1_config(self.axes)?;
        }
        Ok(())
    }

    /// Compact single-line form embedded in report headers.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Target-side controller: the override when present, the shared block
    /// otherwise.
    pub fn l1_target_block(&self) -> L1Block {
        self.l1_target.clone().unwrap_or_else(|| self.l1.clone())
    }
}

/// Vehicle presets by name, with the configured noise applied by the caller.
pub fn resolve_plant(name: &str, dt: f64) -> Result<PlantModel, CmdError> {
    match name {
        "source-like" => Ok(PlantModel::source_like(dt)),
        "target-like" => Ok(PlantModel::target_like(dt)),
        other => Err(CmdError::Config(format!(
            "unknown plant '{other}'; valid: source-like, target-like"
        ))),
    }
}

/// A ready-made default config, used by `--write-default-config` and tests.
pub fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        source_plant: "source-like".into(),
        target_plant: "target-like".into(),
        l1: L1Block::default(),
        l1_target: None,
        ilc: IlcBlock::default(),
        trajectories: TRAJECTORY_NAMES.iter().map(|s| s.to_string()).collect(),
        duration_s: 6.0,
        iterations: 10,
        seed: 42,
        noise_std: 0.0,
        repeat: RepeatBlock::default(),
        axes: 3,
    }
}
