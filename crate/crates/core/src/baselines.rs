//! Comparison policies: a queue-aware greedy rule, a per-slot genetic search
//! and the MLP agent used by the P-QMIX learner.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::allocate_for;
use crate::error::{Error, Result};
use crate::lyapunov::{per_slot_objective, LyapunovParams};
use crate::network::SlotRates;
use crate::neural::{Activation, DenseNet};
use crate::queueing::{slot_delays, QueueState};
use crate::scenario::{CvAction, Decision, EdgeNode, Scenario};

/// Smallest-transfer partition point, shortest-queue edge node.
///
/// The partition point minimizes the layer input size over `1..=L`, so the
/// task is always offloaded. Ties go to the earliest layer and to the RSU,
/// then the lowest SV index.
pub fn greedy_actions(state: &QueueState, scenario: &Scenario) -> Vec<CvAction> {
    (0..scenario.num_cv())
        .map(|i| {
            let model = scenario.model_of(i);
            let sizes = model.input_sizes();
            let mut phi = 1;
            for (l, &d) in sizes.iter().enumerate() {
                if d < sizes[phi - 1] {
                    phi = l + 1;
                }
            }
            let mut target = EdgeNode::Rsu;
            let mut best = state.q_rsu[scenario.cv_type[i]];
            for (j, &q) in state.q_veh.iter().enumerate() {
                if q < best {
                    best = q;
                    target = EdgeNode::Sv(j);
                }
            }
            CvAction::new(phi, target)
        })
        .collect()
}

/// Greedy actions plus the optimal RSU allocation for them.
pub fn greedy_decide(state: &QueueState, scenario: &Scenario, params: &LyapunovParams) -> Result<Decision> {
    let actions = greedy_actions(state, scenario);
    let f_rsu = allocate_for(state, &actions, scenario, params)?;
    Ok(Decision { actions, f_rsu })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneticConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GeneticConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 30,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
            elitism: 2,
            seed: 0,
        }
    }
}

impl GeneticConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if self.population < 2
            || !unit.contains(&self.crossover_prob)
            || !unit.contains(&self.mutation_prob)
            || self.elitism > self.population
        {
            return Err(Error::Config(format!("invalid genetic configuration {self:?}")));
        }
        Ok(())
    }
}

/// Best decision found and the best fitness after each generation
/// (index 0 is the initial population).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneticResult {
    pub decision: Decision,
    pub fitness: f64,
    pub best_trace: Vec<f64>,
}

/// Per-slot objective of the actions with their optimal RSU allocation.
pub fn decision_fitness(
    actions: &[CvAction],
    state: &QueueState,
    scenario: &Scenario,
    rates: &SlotRates,
    params: &LyapunovParams,
) -> Result<(f64, Decision)> {
    let f_rsu = allocate_for(state, actions, scenario, params)?;
    let decision = Decision {
        actions: actions.to_vec(),
        f_rsu,
    };
    let delays = slot_delays(state, &decision, rates, scenario);
    let fit = per_slot_objective(state, &decision, &delays, scenario, params);
    Ok((if fit.is_nan() { f64::INFINITY } else { fit }, decision))
}

/// Genes are `(phi, xi)` per CV, both 1-based.
type Chromosome = Vec<(usize, usize)>;

fn to_actions(c: &Chromosome) -> Vec<CvAction> {
    c.iter()
        .map(|&(phi, xi)| CvAction::new(phi, EdgeNode::from_index(xi)))
        .collect()
}

/// Size of the joint `(phi, xi)` space, saturating.
pub fn joint_space_size(scenario: &Scenario) -> usize {
    (0..scenario.num_cv()).fold(1usize, |acc, i| acc.saturating_mul(scenario.action_dim(i)))
}

fn decode_joint(mut index: usize, scenario: &Scenario) -> Chromosome {
    let j = scenario.num_nodes();
    (0..scenario.num_cv())
        .map(|i| {
            let n = scenario.action_dim(i);
            let a = index % n;
            index /= n;
            (a / j + 1, a % j + 1)
        })
        .collect()
}

/// Genetic search over the per-CV `(phi, xi)` genes with the per-slot objective
/// as fitness (lower is better).
///
/// The initial population holds distinct chromosomes; when it is at least as
/// large as the joint space, it is the whole space.
pub fn genetic_optimize(
    state: &QueueState,
    scenario: &Scenario,
    rates: &SlotRates,
    params: &LyapunovParams,
    cfg: &GeneticConfig,
) -> Result<GeneticResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_cv = scenario.num_cv();
    let j = scenario.num_nodes();
    let phis: Vec<usize> = (0..n_cv).map(|i| scenario.model_of(i).num_partitions()).collect();
    let space = joint_space_size(scenario);

    let mut population: Vec<Chromosome> = if cfg.population >= space {
        let mut all: Vec<Chromosome> = (0..space).map(|n| decode_joint(n, scenario)).collect();
        all.shuffle(&mut rng);
        all
    } else {
        let mut seen = std::collections::HashSet::new();
        let mut pop = Vec::with_capacity(cfg.population);
        while pop.len() < cfg.population {
            let c: Chromosome = phis
                .iter()
                .map(|&p| (rng.random_range(1..=p), rng.random_range(1..=j)))
                .collect();
            if seen.insert(c.clone()) {
                pop.push(c);
            }
        }
        pop
    };

    let evaluate = |pop: &[Chromosome]| -> Result<Vec<(f64, Decision)>> {
        pop.iter()
            .map(|c| decision_fitness(&to_actions(c), state, scenario, rates, params))
            .collect()
    };
    let mut scored = evaluate(&population)?;
    let mut order = ranking(&scored);
    let mut best = scored[order[0]].clone();
    let mut trace = vec![best.0];

    let size = cfg.population.min(population.len());
    for _ in 0..cfg.generations {
        let mut next: Vec<Chromosome> = order
            .iter()
            .take(cfg.elitism.min(size))
            .map(|&n| population[n].clone())
            .collect();
        while next.len() < size {
            let a = tournament(&scored, &mut rng);
            let b = tournament(&scored, &mut rng);
            let (mut c1, mut c2) = (population[a].clone(), population[b].clone());
            if rng.random::<f64>() < cfg.crossover_prob {
                for g in 0..n_cv {
                    if rng.random::<bool>() {
                        std::mem::swap(&mut c1[g].0, &mut c2[g].0);
                    }
                    if rng.random::<bool>() {
                        std::mem::swap(&mut c1[g].1, &mut c2[g].1);
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for (g, gene) in c.iter_mut().enumerate() {
                    if rng.random::<f64>() < cfg.mutation_prob {
                        gene.0 = rng.random_range(1..=phis[g]);
                    }
                    if rng.random::<f64>() < cfg.mutation_prob {
                        gene.1 = rng.random_range(1..=j);
                    }
                }
            }
            next.push(c1);
            if next.len() < size {
                next.push(c2);
            }
        }
        population = next;
        scored = evaluate(&population)?;
        order = ranking(&scored);
        if scored[order[0]].0 < best.0 {
            best = scored[order[0]].clone();
        }
        trace.push(best.0);
    }
    Ok(GeneticResult {
        decision: best.1,
        fitness: best.0,
        best_trace: trace,
    })
}

/// Indices sorted by fitness, stable on ties.
fn ranking(scored: &[(f64, Decision)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    order
}

fn tournament<R: Rng + ?Sized>(scored: &[(f64, Decision)], rng: &mut R) -> usize {
    let a = rng.random_range(0..scored.len());
    let b = rng.random_range(0..scored.len());
    if scored[b].0 < scored[a].0 {
        b
    } else {
        a
    }
}

/// Direct state-to-Q-value network of the P-QMIX baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpAgent {
    pub net: DenseNet,
}

impl MlpAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: DenseNet::mlp(state_dim, hidden, action_dim, Activation::Relu, Activation::Identity, rng)?,
        })
    }

    pub fn from_net(net: DenseNet) -> Self {
        Self { net }
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(state)
    }
}
