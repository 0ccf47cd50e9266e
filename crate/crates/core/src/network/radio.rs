use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::trace::MobilityTrace;
use crate::error::{Error, Result};

/// Link-level radio constants shared by all vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            tx_power_dbm: 23.0,
            noise_dbm: -114.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if !self.tx_power_dbm.is_finite() || !self.noise_dbm.is_finite() {
            return Err(Error::Config("radio powers must be finite".into()));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

fn check_distance(dis: f64) -> Result<()> {
    if dis > 0.0 && dis.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("distance must be positive, got {dis}")))
    }
}

/// V2I path loss in dB.
pub fn path_loss_v2i_db(dis: f64) -> Result<f64> {
    check_distance(dis)?;
    Ok(-38.4 - 21.0 * dis.log10())
}

/// V2V path loss in dB.
pub fn path_loss_v2v_db(dis: f64) -> Result<f64> {
    check_distance(dis)?;
    Ok(-44.23 - 16.7 * dis.log10())
}

/// Small-scale fading power `|u|^2` for `u ~ CN(0, 1)`, i.e. a unit exponential.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Shannon rate in bits/s for a link with the given path loss (dB) and fading power.
pub fn link_rate_bps(params: &RadioParams, pl_db: f64, fading: f64) -> f64 {
    let snr = dbm_to_watts(params.tx_power_dbm) * db_to_linear(pl_db) * fading
        / dbm_to_watts(params.noise_dbm);
    params.bandwidth_hz * (1.0 + snr).log2()
}

/// Link rates of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRates {
    /// CV -> RSU, one per CV.
    pub v2i: Vec<f64>,
    /// CV -> SV, indexed `[cv][sv]`.
    pub v2v: Vec<Vec<f64>>,
}

/// Draws fresh fading and evaluates every CV -> {RSU, SV} rate for `slot` (0-based).
///
/// Draw order is CV-major: the RSU link first, then each SV in index order.
pub fn rates_for_slot<R: Rng + ?Sized>(
    trace: &MobilityTrace,
    params: &RadioParams,
    slot: usize,
    rng: &mut R,
) -> Result<SlotRates> {
    let cvs = trace.cv_positions(slot)?;
    let svs = trace.sv_positions(slot)?;
    let rsu = trace.rsu;
    let mut v2i = Vec::with_capacity(cvs.len());
    let mut v2v = Vec::with_capacity(cvs.len());
    for cv in cvs {
        let pl = path_loss_v2i_db(cv.distance(&rsu))?;
        v2i.push(link_rate_bps(params, pl, sample_fading(rng)));
        let row = svs
            .iter()
            .map(|sv| {
                let pl = path_loss_v2v_db(cv.distance(sv))?;
                Ok(link_rate_bps(params, pl, sample_fading(rng)))
            })
            .collect::<Result<Vec<_>>>()?;
        v2v.push(row);
    }
    Ok(SlotRates { v2i, v2v })
}
