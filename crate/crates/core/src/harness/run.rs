//! Training, evaluation, baseline and sweep drivers, plus their file outputs.

use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PolicyKind};
use super::env::Environment;
use super::episode::{run_episode, EpisodeRecord, Policy};
use super::metrics::{fmt_f64, mean, write_csv};
use crate::baselines::MlpAgent;
use crate::diffusion::{DiffusionPolicy, DiffusionSchedule, SelectMode};
use crate::error::{Error, Result};
use crate::qmix::{Agent, Learner, MixingNet, ReplayBuffer};
use crate::seed::mix_seed;

const TAG_TRAIN: u64 = 0x7A1;
const TAG_EVAL: u64 = 0xE7A1;
const TAG_INIT: u64 = 0x1A17;
const TAG_SAMPLE: u64 = 0x5A3;
const TAG_LEARNER: u64 = 0x1EA2;

pub fn train_seed(master: u64, episode: usize) -> u64 {
    mix_seed(mix_seed(master, TAG_TRAIN), episode as u64)
}

/// Seed of the `k`-th evaluation episode; shared by every policy for paired comparisons.
pub fn eval_seed(master: u64, k: usize) -> u64 {
    mix_seed(mix_seed(master, TAG_EVAL), k as u64)
}

/// Number of evaluation episodes in a full training run.
pub fn num_evals(cfg: &ExperimentConfig) -> usize {
    cfg.trainer.episodes / cfg.trainer.eval_every
}

/// Evaluation indices summarized at the end of a run.
pub fn final_eval_indices(cfg: &ExperimentConfig) -> Range<usize> {
    let k = num_evals(cfg);
    k - cfg.final_window.min(k)..k
}

pub fn build_agents(cfg: &ExperimentConfig, env: &Environment) -> Result<Vec<Agent>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, TAG_INIT));
    let sc = &env.scenario;
    let hidden = &cfg.trainer.agent_hidden;
    let d = &cfg.diffusion;
    (0..env.num_agents())
        .map(|i| match cfg.policy {
            PolicyKind::Mad2rl => {
                let schedule = DiffusionSchedule::new(d.steps, d.beta_min, d.beta_max)?;
                Ok(Agent::Diffusion(DiffusionPolicy::new(
                    env.state_dim(),
                    sc.action_dim(i),
                    hidden,
                    schedule,
                    &mut rng,
                )?))
            }
            PolicyKind::Pqmix => Ok(Agent::Mlp(MlpAgent::new(
                env.state_dim(),
                sc.action_dim(i),
                hidden,
                &mut rng,
            )?)),
            other => Err(Error::Config(format!("{} has no agent networks", other.name()))),
        })
        .collect()
}

pub fn build_learner(cfg: &ExperimentConfig, env: &Environment) -> Result<Learner> {
    let agents = build_agents(cfg, env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, TAG_INIT + 1));
    let mixer = MixingNet::new(
        env.num_agents(),
        env.joint_state_dim(),
        cfg.trainer.mixer_embed,
        &cfg.trainer.hyper_hidden,
        &mut rng,
    )?;
    Learner::new(cfg.trainer.clone(), agents, mixer, mix_seed(cfg.seed, TAG_LEARNER))
}

/// One row of `learning_curve.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub episode: usize,
    /// Gradient updates performed so far.
    pub step: u64,
    /// Mean loss of this episode's updates, if any.
    pub loss: Option<f64>,
    pub reward: f64,
    pub epsilon: f64,
}

/// Aggregates over a window of evaluation episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub mean_delay: f64,
    pub mean_queue: f64,
    pub bound_checks: usize,
    pub bound_violations: usize,
}

impl Summary {
    pub fn of(records: &[EpisodeRecord]) -> Self {
        let pick = |f: fn(&EpisodeRecord) -> f64| mean(&records.iter().map(f).collect::<Vec<_>>());
        Self {
            episodes: records.len(),
            mean_reward: pick(EpisodeRecord::mean_reward),
            mean_delay: pick(EpisodeRecord::mean_delay),
            mean_queue: pick(EpisodeRecord::mean_queue),
            bound_checks: records.iter().map(|r| r.bound_checks).sum(),
            bound_violations: records.iter().map(|r| r.bound_violations).sum(),
        }
    }
}

/// Everything produced by one training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: ExperimentConfig,
    pub learner: Learner,
    pub curve: Vec<CurveRow>,
    /// Training-episode records without transitions.
    pub train: Vec<EpisodeRecord>,
    /// `(training episode, evaluation record)`; the position is the eval index.
    pub evals: Vec<(usize, EpisodeRecord)>,
}

impl TrainRun {
    pub fn final_evals(&self) -> Vec<EpisodeRecord> {
        let range = final_eval_indices(&self.config);
        self.evals[range].iter().map(|(_, r)| r.clone()).collect()
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::of(&self.final_evals());
        s.bound_checks = self.train.iter().map(|r| r.bound_checks).sum();
        s.bound_violations = self.train.iter().map(|r| r.bound_violations).sum();
        s
    }
}

/// Checkpoint file contents: the resolved config and all networks with optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub learner: Learner,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.config.validate()?;
        Ok(ck)
    }
}

/// Learns with the configured agent kind, evaluating greedily every
/// `eval_every` episodes on the shared evaluation seeds.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainRun> {
    cfg.validate()?;
    if !cfg.policy.is_learned() {
        return Err(Error::Config(format!("cannot train policy {}", cfg.policy.name())));
    }
    let env = Environment::build(&cfg.scenario, cfg.seed)?;
    let mut learner = build_learner(cfg, &env)?;
    let tc = &cfg.trainer;
    let mut buffer = ReplayBuffer::new(tc.buffer_capacity);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, TAG_SAMPLE));
    let mut run = TrainRun {
        config: cfg.clone(),
        learner: learner.clone(),
        curve: Vec::with_capacity(tc.episodes),
        train: Vec::with_capacity(tc.episodes),
        evals: Vec::new(),
    };

    for ep in 0..tc.episodes {
        let epsilon = tc.epsilon(ep);
        let mut rec = run_episode(
            &env,
            &Policy::Learned {
                agents: &learner.agents,
                mode: SelectMode::Epsilon(epsilon),
            },
            train_seed(cfg.seed, ep),
            true,
            cfg.verify_bound,
        )?;
        for t in rec.transitions.drain(..) {
            buffer.push(t);
        }

        let mut losses = Vec::new();
        if ep >= tc.warmup_episodes && buffer.len() >= tc.batch_size {
            for _ in 0..tc.updates_per_episode {
                let batch = buffer.sample(tc.batch_size, &mut sample_rng)?;
                losses.push(learner.train_step(&batch)?);
            }
        }
        run.curve.push(CurveRow {
            episode: ep,
            step: learner.updates(),
            loss: (!losses.is_empty()).then(|| mean(&losses)),
            reward: rec.mean_reward(),
            epsilon,
        });
        run.train.push(rec);

        if (ep + 1) % tc.eval_every == 0 {
            let k = run.evals.len();
            let eval = evaluate_agents(&env, &learner.agents, eval_seed(cfg.seed, k))?;
            run.evals.push((ep, eval));
        }
    }
    run.learner = learner;
    Ok(run)
}

/// Greedy-mode episode of trained agents.
pub fn evaluate_agents(env: &Environment, agents: &[Agent], seed: u64) -> Result<EpisodeRecord> {
    run_episode(
        env,
        &Policy::Learned {
            agents,
            mode: SelectMode::Greedy,
        },
        seed,
        false,
        false,
    )
}

/// Evaluates checkpointed agents on the given evaluation indices.
pub fn evaluate_checkpoint(ck: &Checkpoint, indices: Range<usize>) -> Result<Vec<(usize, EpisodeRecord)>> {
    let env = Environment::build(&ck.config.scenario, ck.config.seed)?;
    indices
        .map(|k| Ok((k, evaluate_agents(&env, &ck.learner.agents, eval_seed(ck.config.seed, k))?)))
        .collect()
}

/// Runs a rule-based policy on the given evaluation indices.
pub fn run_baseline(
    cfg: &ExperimentConfig,
    policy: PolicyKind,
    indices: Range<usize>,
) -> Result<Vec<(usize, EpisodeRecord)>> {
    cfg.validate()?;
    let env = Environment::build(&cfg.scenario, cfg.seed)?;
    let p = match policy {
        PolicyKind::Greedy => Policy::Greedy,
        PolicyKind::Genetic => Policy::Genetic(&cfg.genetic),
        other => {
            return Err(Error::Config(format!("{} is not a rule-based baseline", other.name())));
        }
    };
    indices
        .map(|k| Ok((k, run_episode(&env, &p, eval_seed(cfg.seed, k), false, cfg.verify_bound)?)))
        .collect()
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NCv,
    NSv,
    V,
    DenoiseM,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NCv => "n_cv",
            SweepAxis::NSv => "n_sv",
            SweepAxis::V => "V",
            SweepAxis::DenoiseM => "denoise_M",
        }
    }

    /// Copy of `cfg` with the axis set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} needs a whole number, got {value}", self.name())))
            }
        };
        match self {
            SweepAxis::NCv => {
                if c.scenario.cv_types.is_some() {
                    return Err(Error::Config("n_cv sweep needs round-robin cv_types".into()));
                }
                c.scenario.n_cv = count()?;
            }
            SweepAxis::NSv => c.scenario.n_sv = count()?,
            SweepAxis::V => c.scenario.v = value,
            SweepAxis::DenoiseM => c.diffusion.steps = count()?,
        }
        c.validate()?;
        Ok(c)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_cv" => Ok(SweepAxis::NCv),
            "n_sv" => Ok(SweepAxis::NSv),
            "V" | "v" => Ok(SweepAxis::V),
            "denoise_M" | "denoise_m" => Ok(SweepAxis::DenoiseM),
            other => Err(Error::Config(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub summary: Summary,
}

/// Final-window summary of one configuration: trained for learned policies,
/// run directly for rule-based ones.
pub fn run_point(cfg: &ExperimentConfig) -> Result<Summary> {
    if cfg.policy.is_learned() {
        Ok(train(cfg)?.summary())
    } else {
        let recs: Vec<EpisodeRecord> = run_baseline(cfg, cfg.policy, final_eval_indices(cfg))?
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        Ok(Summary::of(&recs))
    }
}

pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    values
        .iter()
        .map(|&v| {
            Ok(SweepPoint {
                value: v,
                summary: run_point(&axis.apply(cfg, v)?)?,
            })
        })
        .collect()
}

fn queue_header(env_like: &ExperimentConfig) -> Vec<String> {
    let s = &env_like.scenario;
    let mut h = vec!["episode".to_string(), "slot".to_string()];
    h.extend((1..=s.n_cv).map(|i| format!("q_loc_{i}")));
    h.extend((1..=s.models.len()).map(|k| format!("q_rsu_{k}")));
    h.extend((1..=s.n_sv).map(|j| format!("q_veh_{j}")));
    h
}

fn write_episode_files(dir: &Path, cfg: &ExperimentConfig, kind: &str, evals: &[(usize, EpisodeRecord)]) -> Result<()> {
    let header: Vec<String> = ["episode", "kind", "mean_reward", "mean_delay", "mean_queue"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = evals
        .iter()
        .map(|(ep, r)| {
            vec![
                ep.to_string(),
                kind.to_string(),
                fmt_f64(r.mean_reward()),
                fmt_f64(r.mean_delay()),
                fmt_f64(r.mean_queue()),
            ]
        })
        .collect();
    write_csv(&dir.join("metrics.csv"), &header, &rows)?;
    write_queues(dir, cfg, evals)
}

fn write_queues(dir: &Path, cfg: &ExperimentConfig, evals: &[(usize, EpisodeRecord)]) -> Result<()> {
    let mut rows = Vec::new();
    for (ep, r) in evals {
        for (t, s) in r.slots.iter().enumerate() {
            let mut row = vec![ep.to_string(), (t + 1).to_string()];
            row.extend(s.queues.iter().map(fmt_f64));
            rows.push(row);
        }
    }
    write_csv(&dir.join("queues.csv"), &queue_header(cfg), &rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Writes `learning_curve.csv`, `metrics.csv`, `queues.csv`,
/// `config_resolved.json`, `summary.json` and `checkpoint.json`.
pub fn write_train_outputs(dir: &Path, run: &TrainRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let cfg = &run.config;
    let curve_header: Vec<String> = ["episode", "step", "loss", "reward", "epsilon"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let curve_rows: Vec<Vec<String>> = run
        .curve
        .iter()
        .map(|c| {
            vec![
                c.episode.to_string(),
                c.step.to_string(),
                c.loss.map(fmt_f64).unwrap_or_default(),
                fmt_f64(c.reward),
                fmt_f64(c.epsilon),
            ]
        })
        .collect();
    write_csv(&dir.join("learning_curve.csv"), &curve_header, &curve_rows)?;

    let header: Vec<String> = ["episode", "kind", "mean_reward", "mean_delay", "mean_queue"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let row = |ep: usize, kind: &str, r: &EpisodeRecord| {
        vec![
            ep.to_string(),
            kind.to_string(),
            fmt_f64(r.mean_reward()),
            fmt_f64(r.mean_delay()),
            fmt_f64(r.mean_queue()),
        ]
    };
    let mut rows: Vec<Vec<String>> = run.train.iter().enumerate().map(|(ep, r)| row(ep, "train", r)).collect();
    rows.extend(run.evals.iter().map(|(ep, r)| row(*ep, "eval", r)));
    write_csv(&dir.join("metrics.csv"), &header, &rows)?;
    write_queues(dir, cfg, &run.evals)?;
    write_json(&dir.join("config_resolved.json"), cfg)?;
    write_json(&dir.join("summary.json"), &run.summary())?;
    Checkpoint {
        config: cfg.clone(),
        learner: run.learner.clone(),
    }
    .save(&dir.join("checkpoint.json"))
}

/// Writes `metrics.csv`, `queues.csv`, `config_resolved.json` and `summary.json`
/// for a set of evaluation episodes.
pub fn write_eval_outputs(dir: &Path, cfg: &ExperimentConfig, kind: &str, evals: &[(usize, EpisodeRecord)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_episode_files(dir, cfg, kind, evals)?;
    write_json(&dir.join("config_resolved.json"), cfg)?;
    let recs: Vec<EpisodeRecord> = evals.iter().map(|(_, r)| r.clone()).collect();
    write_json(&dir.join("summary.json"), &Summary::of(&recs))
}

/// Writes `sweep.csv` and `config_resolved.json`.
pub fn write_sweep_outputs(dir: &Path, cfg: &ExperimentConfig, axis: SweepAxis, points: &[SweepPoint]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header: Vec<String> = ["axis", "value", "mean_reward", "mean_delay", "mean_queue"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                axis.name().to_string(),
                fmt_f64(p.value),
                fmt_f64(p.summary.mean_reward),
                fmt_f64(p.summary.mean_delay),
                fmt_f64(p.summary.mean_queue),
            ]
        })
        .collect();
    write_csv(&dir.join("sweep.csv"), &header, &rows)?;
    write_json(&dir.join("config_resolved.json"), cfg)
}
