//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::GeneticConfig;
use crate::error::{Error, Result};
use crate::network::{HighwayParams, RadioParams};
use crate::qmix::TrainerConfig;

/// Where vehicle positions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum TraceConfig {
    /// Seeded ring-road trace with `slots` slots.
    Synthetic {
        #[serde(default)]
        highway: HighwayParams,
        #[serde(default = "default_trace_slots")]
        slots: usize,
    },
    /// CSV file with header `t,veh_id,role,x,y`.
    File {
        path: PathBuf,
        rsu_x: f64,
        rsu_y: f64,
        road_length: f64,
    },
}

fn default_trace_slots() -> usize {
    300
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig::Synthetic {
            highway: HighwayParams::default(),
            slots: default_trace_slots(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_cv: usize,
    pub n_sv: usize,
    /// Built-in model names or paths to model JSON files.
    pub models: Vec<String>,
    /// Model index per CV; defaults to round-robin over `models`.
    pub cv_types: Option<Vec<usize>>,
    pub f_loc_range: [f64; 2],
    pub f_veh_range: [f64; 2],
    pub f_rsu_max: f64,
    pub radio: RadioParams,
    pub tau: f64,
    /// Slots per episode.
    pub slots: usize,
    pub v: f64,
    /// FLOPs per queue unit inside the drift-plus-penalty terms.
    pub workload_unit: f64,
    /// Queue divisor applied to agent observations.
    pub queue_norm: f64,
    /// Delay substituted for an infinite completion time in the reward.
    pub delay_penalty: f64,
    pub trace: TraceConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_cv: 5,
            n_sv: 3,
            models: vec!["alexnet".into(), "resnet18".into(), "vgg16".into()],
            cv_types: None,
            f_loc_range: [4e9, 6e9],
            f_veh_range: [6e9, 8e9],
            f_rsu_max: 30e9,
            radio: RadioParams::default(),
            tau: 1.0,
            slots: 30,
            v: 10.0,
            workload_unit: 1e9,
            queue_norm: 1e11,
            delay_penalty: 1e6,
            trace: TraceConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [f64; 2]| r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite();
        if self.n_cv == 0 {
            return Err(Error::Config("need at least one CV".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("need at least one DNN model".into()));
        }
        if let Some(types) = &self.cv_types {
            if types.len() != self.n_cv || types.iter().any(|&k| k >= self.models.len()) {
                return Err(Error::Config("cv_types must name one model per CV".into()));
            }
        }
        if !range_ok(self.f_loc_range) || !range_ok(self.f_veh_range) || !(self.f_rsu_max > 0.0) {
            return Err(Error::Config("capacity ranges must be positive".into()));
        }
        if !(self.tau > 0.0) || self.slots == 0 {
            return Err(Error::Config("tau and slots must be positive".into()));
        }
        if !(self.v >= 0.0) || !(self.workload_unit > 0.0) || !(self.queue_norm > 0.0) {
            return Err(Error::Config("V must be non-negative, unit and norm positive".into()));
        }
        if !(self.delay_penalty > 0.0 && self.delay_penalty.is_finite()) {
            return Err(Error::Config("delay penalty must be positive and finite".into()));
        }
        self.radio.validate()
    }

    pub fn cv_type(&self, i: usize) -> usize {
        match &self.cv_types {
            Some(t) => t[i],
            None => i % self.models.len(),
        }
    }
}

/// Which policy an episode runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Mad2rl,
    Pqmix,
    Greedy,
    Genetic,
}

impl PolicyKind {
    pub fn is_learned(self) -> bool {
        matches!(self, PolicyKind::Mad2rl | PolicyKind::Pqmix)
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Mad2rl => "mad2rl",
            PolicyKind::Pqmix => "pqmix",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Genetic => "genetic",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mad2rl" => Ok(PolicyKind::Mad2rl),
            "pqmix" => Ok(PolicyKind::Pqmix),
            "greedy" => Ok(PolicyKind::Greedy),
            "genetic" => Ok(PolicyKind::Genetic),
            other => Err(Error::Config(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: 7,
            beta_min: 0.1,
            beta_max: 10.0,
        }
    }
}

/// Full experiment description, as read from and written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub policy: PolicyKind,
    pub scenario: ScenarioConfig,
    pub trainer: TrainerConfig,
    pub diffusion: DiffusionConfig,
    pub genetic: GeneticConfig,
    /// Evaluation episodes summarized at the end of a run.
    pub final_window: usize,
    /// Check the drift bound on every tenth slot.
    pub verify_bound: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            policy: PolicyKind::Mad2rl,
            scenario: ScenarioConfig::default(),
            trainer: TrainerConfig::default(),
            diffusion: DiffusionConfig::default(),
            genetic: GeneticConfig::default(),
            final_window: 50,
            verify_bound: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.trainer.validate()?;
        self.genetic.validate()?;
        if self.final_window == 0 {
            return Err(Error::Config("final_window must be positive".into()));
        }
        crate::diffusion::DiffusionSchedule::new(
            self.diffusion.steps,
            self.diffusion.beta_min,
            self.diffusion.beta_max,
        )?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
