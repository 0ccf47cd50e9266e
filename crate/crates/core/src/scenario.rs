//! Static description of one vehicular edge system and the per-slot decision types.

use serde::{Deserialize, Serialize};

use crate::dnn::DnnModel;
use crate::error::{Error, Result};

/// Compute-side description of the system: CVs, SVs, RSU and the DNN types.
///
/// Capacities are FLOP/s, workloads FLOPs, `tau` seconds.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub models: Vec<DnnModel>,
    /// DNN type index (into `models`) of each CV.
    pub cv_type: Vec<usize>,
    pub f_loc: Vec<f64>,
    pub f_veh: Vec<f64>,
    pub f_rsu_max: f64,
    pub tau: f64,
}

impl Scenario {
    pub fn new(
        models: Vec<DnnModel>,
        cv_type: Vec<usize>,
        f_loc: Vec<f64>,
        f_veh: Vec<f64>,
        f_rsu_max: f64,
        tau: f64,
    ) -> Result<Self> {
        if models.is_empty() || cv_type.is_empty() {
            return Err(Error::Config("need at least one model type and one CV".into()));
        }
        if cv_type.len() != f_loc.len() {
            return Err(Error::Config(format!(
                "{} CV types but {} local capacities",
                cv_type.len(),
                f_loc.len()
            )));
        }
        if let Some(k) = cv_type.iter().find(|&&k| k >= models.len()) {
            return Err(Error::Config(format!("CV assigned unknown model type {k}")));
        }
        if f_loc.iter().chain(&f_veh).any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::Config("vehicle capacities must be positive".into()));
        }
        if !(f_rsu_max > 0.0 && f_rsu_max.is_finite()) || !(tau > 0.0) {
            return Err(Error::Config("f_rsu_max and tau must be positive".into()));
        }
        Ok(Self {
            models,
            cv_type,
            f_loc,
            f_veh,
            f_rsu_max,
            tau,
        })
    }

    pub fn num_cv(&self) -> usize {
        self.cv_type.len()
    }

    pub fn num_sv(&self) -> usize {
        self.f_veh.len()
    }

    /// Number of edge nodes `J` (RSU plus SVs).
    pub fn num_nodes(&self) -> usize {
        self.f_veh.len() + 1
    }

    pub fn num_types(&self) -> usize {
        self.models.len()
    }

    pub fn model_of(&self, cv: usize) -> &DnnModel {
        &self.models[self.cv_type[cv]]
    }

    /// Per-agent action count `(L_k + 1) J`.
    pub fn action_dim(&self, cv: usize) -> usize {
        self.model_of(cv).num_partitions() * self.num_nodes()
    }

    /// Checks partition ranges and target indices of `actions`.
    pub fn validate_actions(&self, actions: &[CvAction]) -> Result<()> {
        if actions.len() != self.num_cv() {
            return Err(Error::Shape {
                expected: self.num_cv(),
                got: actions.len(),
            });
        }
        for (i, a) in actions.iter().enumerate() {
            let parts = self.model_of(i).num_partitions();
            if a.phi < 1 || a.phi > parts {
                return Err(Error::OutOfRange {
                    what: "partition point",
                    value: a.phi as i64,
                    lo: 1,
                    hi: parts as i64,
                });
            }
            if let EdgeNode::Sv(j) = a.target {
                if j >= self.num_sv() {
                    return Err(Error::OutOfRange {
                        what: "service vehicle",
                        value: j as i64,
                        lo: 0,
                        hi: self.num_sv() as i64 - 1,
                    });
                }
            }
        }
        Ok(())
    }

    /// Checks actions plus the RSU allocation constraints.
    pub fn validate_decision(&self, decision: &Decision) -> Result<()> {
        self.validate_actions(&decision.actions)?;
        if decision.f_rsu.len() != self.num_types() {
            return Err(Error::Shape {
                expected: self.num_types(),
                got: decision.f_rsu.len(),
            });
        }
        let tol = 1e-9 * self.f_rsu_max;
        if decision
            .f_rsu
            .iter()
            .any(|&f| !(f >= 0.0 && f <= self.f_rsu_max + tol))
            || decision.f_rsu.iter().sum::<f64>() > self.f_rsu_max + tol
        {
            return Err(Error::Domain(format!(
                "RSU allocation {:?} violates capacity {}",
                decision.f_rsu, self.f_rsu_max
            )));
        }
        Ok(())
    }
}

/// Edge node receiving the remote part of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeNode {
    Rsu,
    /// Service vehicle, 0-based.
    Sv(usize),
}

impl EdgeNode {
    /// Node from the 1-based index `xi` (1 = RSU, 2..=J = SVs).
    pub fn from_index(xi: usize) -> Self {
        match xi {
            0 | 1 => EdgeNode::Rsu,
            j => EdgeNode::Sv(j - 2),
        }
    }

    /// 1-based node index.
    pub fn index(&self) -> usize {
        match self {
            EdgeNode::Rsu => 1,
            EdgeNode::Sv(j) => j + 2,
        }
    }
}

/// Partition point and offload target chosen by one CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvAction {
    /// 1-based partition point in `1..=L+1`.
    pub phi: usize,
    /// Ignored when `phi = L + 1`.
    pub target: EdgeNode,
}

impl CvAction {
    pub fn new(phi: usize, target: EdgeNode) -> Self {
        Self { phi, target }
    }
}

/// Full per-slot decision: discrete actions plus RSU compute per DNN type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub actions: Vec<CvAction>,
    pub f_rsu: Vec<f64>,
}
