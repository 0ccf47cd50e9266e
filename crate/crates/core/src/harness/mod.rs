//! Experiment harness: configuration, environment, episode loop, training,
//! baselines, sweeps and output files.

pub mod bound;
pub mod config;
pub mod env;
pub mod episode;
pub mod metrics;
pub mod run;

pub use bound::{random_bound_trials, BoundReport};
pub use config::{DiffusionConfig, ExperimentConfig, PolicyKind, ScenarioConfig, TraceConfig};
pub use env::{Environment, StepOutcome};
pub use episode::{run_episode, EpisodeRecord, Policy, SlotRecord};
pub use run::{
    build_learner, eval_seed, evaluate_agents, evaluate_checkpoint, final_eval_indices, run_baseline, run_point,
    sweep, train, train_seed, write_eval_outputs, write_sweep_outputs, write_train_outputs, Checkpoint, CurveRow,
    Summary, SweepAxis, SweepPoint, TrainRun,
};
