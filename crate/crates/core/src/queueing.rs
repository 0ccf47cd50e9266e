//! Queue recursions and per-slot delay components.
//!
//! Queues hold FLOPs. Every edge-side term is gated on `phi != L + 1`, and a
//! CV contributes work to exactly one edge queue (its chosen target).
//! A zero-rate link or zero RSU share with pending remote work yields an
//! infinite delay rather than an error.

use serde::{Deserialize, Serialize};

use crate::dnn::DnnModel;
use crate::network::SlotRates;
use crate::scenario::{CvAction, Decision, EdgeNode, Scenario};

/// Backlogs in FLOPs: per CV, per DNN type at the RSU, per SV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub q_loc: Vec<f64>,
    pub q_rsu: Vec<f64>,
    pub q_veh: Vec<f64>,
}

impl QueueState {
    pub fn zeros(n_cv: usize, n_types: usize, n_sv: usize) -> Self {
        Self {
            q_loc: vec![0.0; n_cv],
            q_rsu: vec![0.0; n_types],
            q_veh: vec![0.0; n_sv],
        }
    }

    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self::zeros(scenario.num_cv(), scenario.num_types(), scenario.num_sv())
    }

    pub fn total(&self) -> f64 {
        self.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.q_loc
            .iter()
            .chain(&self.q_rsu)
            .chain(&self.q_veh)
            .copied()
    }

    pub fn is_valid(&self) -> bool {
        self.iter().all(|q| q >= 0.0 && q.is_finite())
    }
}

/// Per-CV delay components in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub d_tra: f64,
    pub d_pro: f64,
    pub d_wait: f64,
    pub d_loc: f64,
    pub d_total: f64,
}

/// Edge-side delay of one CV at one node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdgeDelay {
    pub d_tra: f64,
    pub d_pro: f64,
    pub d_wait: f64,
}

impl EdgeDelay {
    pub fn total(&self) -> f64 {
        self.d_tra + self.d_pro + self.d_wait
    }
}

/// FLOPs arriving at each queue in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrivals {
    pub loc: Vec<f64>,
    pub rsu: Vec<f64>,
    pub veh: Vec<f64>,
}

impl Arrivals {
    pub fn total(&self) -> f64 {
        self.loc.iter().chain(&self.rsu).chain(&self.veh).sum()
    }
}

fn safe_div(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Time to ship the input of layer `phi` over a link of `rate_bps`.
pub fn transmission_delay(phi: usize, rate_bps: f64, model: &DnnModel) -> f64 {
    if phi == model.num_partitions() {
        return 0.0;
    }
    let bits = 8.0 * model.input_bytes(phi) as f64;
    if rate_bps <= 0.0 {
        f64::INFINITY
    } else {
        bits / rate_bps
    }
}

/// Local processing latency of layers `1..phi-1` behind the local backlog.
pub fn local_delay(phi: usize, q_loc: f64, model: &DnnModel, f_loc: f64) -> f64 {
    if phi == 1 {
        return 0.0;
    }
    safe_div(q_loc + model.local_workload(phi), f_loc)
}

fn offloads_to(scenario: &Scenario, i: usize, a: &CvAction, node: EdgeNode) -> bool {
    a.target == node && a.phi != scenario.model_of(i).num_partitions()
}

/// Transmission, processing and waiting delay of CV `i` at the RSU.
pub fn rsu_delay(
    i: usize,
    actions: &[CvAction],
    queue: &QueueState,
    rates: &SlotRates,
    f_rsu: &[f64],
    scenario: &Scenario,
) -> EdgeDelay {
    if !offloads_to(scenario, i, &actions[i], EdgeNode::Rsu) {
        return EdgeDelay::default();
    }
    let model = scenario.model_of(i);
    let k = scenario.cv_type[i];
    let phi = actions[i].phi;
    let f = f_rsu[k];
    let peers: f64 = (0..scenario.num_cv())
        .filter(|&p| {
            p != i && scenario.cv_type[p] == k && offloads_to(scenario, p, &actions[p], EdgeNode::Rsu)
        })
        .map(|p| scenario.model_of(p).remote_workload(actions[p].phi))
        .sum();
    EdgeDelay {
        d_tra: transmission_delay(phi, rates.v2i[i], model),
        d_pro: safe_div(queue.q_rsu[k] + model.remote_workload(phi), f),
        d_wait: safe_div(peers, 2.0 * f),
    }
}

/// Transmission, processing and waiting delay of CV `i` at SV `j` (0-based).
///
/// Waiting counts every other CV offloading to the same SV, regardless of DNN type.
pub fn sv_delay(
    i: usize,
    j: usize,
    actions: &[CvAction],
    queue: &QueueState,
    rates: &SlotRates,
    scenario: &Scenario,
) -> EdgeDelay {
    let node = EdgeNode::Sv(j);
    if !offloads_to(scenario, i, &actions[i], node) {
        return EdgeDelay::default();
    }
    let model = scenario.model_of(i);
    let phi = actions[i].phi;
    let f = scenario.f_veh[j];
    let peers: f64 = (0..scenario.num_cv())
        .filter(|&p| p != i && offloads_to(scenario, p, &actions[p], node))
        .map(|p| scenario.model_of(p).remote_workload(actions[p].phi))
        .sum();
    EdgeDelay {
        d_tra: transmission_delay(phi, rates.v2v[i][j], model),
        d_pro: safe_div(queue.q_veh[j] + model.remote_workload(phi), f),
        d_wait: safe_div(peers, 2.0 * f),
    }
}

/// Completion time of every CV's task in this slot.
pub fn slot_delays(
    queue: &QueueState,
    decision: &Decision,
    rates: &SlotRates,
    scenario: &Scenario,
) -> Vec<DelayBreakdown> {
    let actions = &decision.actions;
    (0..scenario.num_cv())
        .map(|i| {
            let a = actions[i];
            let model = scenario.model_of(i);
            let d_loc = local_delay(a.phi, queue.q_loc[i], model, scenario.f_loc[i]);
            let edge = match a.target {
                EdgeNode::Rsu => rsu_delay(i, actions, queue, rates, &decision.f_rsu, scenario),
                EdgeNode::Sv(j) => sv_delay(i, j, actions, queue, rates, scenario),
            };
            DelayBreakdown {
                d_tra: edge.d_tra,
                d_pro: edge.d_pro,
                d_wait: edge.d_wait,
                d_loc,
                d_total: d_loc + edge.total(),
            }
        })
        .collect()
}

/// New work entering each queue under `actions`.
pub fn arrivals(actions: &[CvAction], scenario: &Scenario) -> Arrivals {
    let mut out = Arrivals {
        loc: vec![0.0; scenario.num_cv()],
        rsu: vec![0.0; scenario.num_types()],
        veh: vec![0.0; scenario.num_sv()],
    };
    for (i, a) in actions.iter().enumerate() {
        let model = scenario.model_of(i);
        out.loc[i] = model.local_workload(a.phi);
        if a.phi == model.num_partitions() {
            continue;
        }
        let remote = model.remote_workload(a.phi);
        match a.target {
            EdgeNode::Rsu => out.rsu[scenario.cv_type[i]] += remote,
            EdgeNode::Sv(j) => out.veh[j] += remote,
        }
    }
    out
}

/// Advances every queue one slot: `max(Q - f tau + A, 0)`.
pub fn update_queues(queue: &QueueState, decision: &Decision, scenario: &Scenario) -> QueueState {
    let a = arrivals(&decision.actions, scenario);
    let tau = scenario.tau;
    let step = |q: &[f64], service: &dyn Fn(usize) -> f64, arr: &[f64]| -> Vec<f64> {
        q.iter()
            .enumerate()
            .map(|(n, &q)| (q - service(n) * tau + arr[n]).max(0.0))
            .collect()
    };
    QueueState {
        q_loc: step(&queue.q_loc, &|i| scenario.f_loc[i], &a.loc),
        q_rsu: step(&queue.q_rsu, &|k| decision.f_rsu[k], &a.rsu),
        q_veh: step(&queue.q_veh, &|j| scenario.f_veh[j], &a.veh),
    }
}
