//! Vehicle mobility and the V2I/V2V radio model.

mod radio;
mod trace;

pub use radio::{
    db_to_linear, dbm_to_watts, link_rate_bps, path_loss_v2i_db, path_loss_v2v_db,
    rates_for_slot, sample_fading, RadioParams, SlotRates,
};
pub use trace::{synth_highway_trace, HighwayParams, MobilityTrace, Position};
