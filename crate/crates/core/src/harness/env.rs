//! Simulated environment: scenario, mobility, channel and one-slot dynamics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ScenarioConfig, TraceConfig};
use crate::dnn::DnnModel;
use crate::error::{Error, Result};
use crate::lyapunov::{common_reward, LyapunovParams};
use crate::network::{rates_for_slot, synth_highway_trace, MobilityTrace, Position, RadioParams, SlotRates};
use crate::queueing::{slot_delays, update_queues, DelayBreakdown, QueueState};
use crate::scenario::{Decision, Scenario};
use crate::seed::mix_seed;

const TAG_CAPACITY: u64 = 0xCA9;
const TAG_TRACE: u64 = 0x7ACE;

#[derive(Debug, Clone)]
pub struct Environment {
    pub scenario: Scenario,
    pub trace: MobilityTrace,
    pub radio: RadioParams,
    pub params: LyapunovParams,
    pub slots: usize,
    pub queue_norm: f64,
    pub delay_penalty: f64,
}

/// Result of applying one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Delays with infinite completion times replaced by the penalty.
    pub delays: Vec<DelayBreakdown>,
    pub reward: f64,
    pub next: QueueState,
}

fn load_model(name: &str) -> Result<DnnModel> {
    if name.ends_with(".json") {
        DnnModel::load(name)
    } else {
        DnnModel::builtin(name)
    }
}

impl Environment {
    /// Builds the environment; capacities and the synthetic trace derive from `seed`.
    pub fn build(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let models = cfg.models.iter().map(|m| load_model(m)).collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, TAG_CAPACITY));
        let mut draw = |r: [f64; 2], n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if r[1] > r[0] { rng.random_range(r[0]..r[1]) } else { r[0] })
                .collect()
        };
        let f_loc = draw(cfg.f_loc_range, cfg.n_cv);
        let f_veh = draw(cfg.f_veh_range, cfg.n_sv);
        let cv_type = (0..cfg.n_cv).map(|i| cfg.cv_type(i)).collect();
        let scenario = Scenario::new(models, cv_type, f_loc, f_veh, cfg.f_rsu_max, cfg.tau)?;

        let trace = match &cfg.trace {
            TraceConfig::Synthetic { highway, slots } => synth_highway_trace(
                cfg.n_cv,
                cfg.n_sv,
                highway,
                (*slots).max(cfg.slots + 1),
                cfg.tau,
                mix_seed(seed, TAG_TRACE),
            )?,
            TraceConfig::File {
                path,
                rsu_x,
                rsu_y,
                road_length,
            } => MobilityTrace::load_csv(path, Position::new(*rsu_x, *rsu_y), *road_length)?,
        };
        if trace.num_cv() != cfg.n_cv || trace.num_sv() != cfg.n_sv {
            return Err(Error::InvalidTrace(format!(
                "trace has {} CVs and {} SVs, config expects {} and {}",
                trace.num_cv(),
                trace.num_sv(),
                cfg.n_cv,
                cfg.n_sv
            )));
        }
        if trace.num_slots() < cfg.slots {
            return Err(Error::InvalidTrace(format!(
                "trace has {} slots, episodes need {}",
                trace.num_slots(),
                cfg.slots
            )));
        }
        Ok(Self {
            scenario,
            trace,
            radio: cfg.radio,
            params: LyapunovParams::new(cfg.v, cfg.workload_unit),
            slots: cfg.slots,
            queue_norm: cfg.queue_norm,
            delay_penalty: cfg.delay_penalty,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.scenario.num_cv()
    }

    /// Width of each agent's observation: `2J + 1`.
    pub fn state_dim(&self) -> usize {
        2 * self.scenario.num_nodes() + 1
    }

    pub fn joint_state_dim(&self) -> usize {
        self.num_agents() * self.state_dim()
    }

    /// First trace slot of an episode.
    pub fn episode_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..=self.trace.num_slots() - self.slots)
    }

    /// Observation of every CV: own local queue, its type's RSU queue, the SV
    /// queues, then its own and the SVs' positions along the road relative to
    /// the RSU.
    pub fn local_states(&self, q: &QueueState, slot: usize) -> Result<Vec<Vec<f64>>> {
        let slot = slot.min(self.trace.num_slots() - 1);
        let cv = self.trace.cv_positions(slot)?;
        let sv = self.trace.sv_positions(slot)?;
        let rel = |p: &Position| (p.x - self.trace.rsu.x) / self.trace.road_length;
        let n = self.queue_norm;
        Ok((0..self.num_agents())
            .map(|i| {
                let mut s = Vec::with_capacity(self.state_dim());
                s.push(q.q_loc[i] / n);
                s.push(q.q_rsu[self.scenario.cv_type[i]] / n);
                s.extend(q.q_veh.iter().map(|v| v / n));
                s.push(rel(&cv[i]));
                s.extend(sv.iter().map(rel));
                s
            })
            .collect())
    }

    pub fn joint_state(states: &[Vec<f64>]) -> Vec<f64> {
        states.concat()
    }

    pub fn rates<R: Rng + ?Sized>(&self, slot: usize, rng: &mut R) -> Result<SlotRates> {
        rates_for_slot(&self.trace, &self.radio, slot, rng)
    }

    pub fn penalize(&self, delays: &mut [DelayBreakdown]) {
        for d in delays {
            if !d.d_total.is_finite() {
                d.d_total = self.delay_penalty;
            }
        }
    }

    /// Delays, common reward and next queues for one slot.
    pub fn step(&self, q: &QueueState, decision: &Decision, rates: &SlotRates) -> StepOutcome {
        let mut delays = slot_delays(q, decision, rates, &self.scenario);
        self.penalize(&mut delays);
        let reward = common_reward(q, decision, &delays, &self.scenario, &self.params);
        StepOutcome {
            delays,
            reward,
            next: update_queues(q, decision, &self.scenario),
        }
    }
}
