use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Per-slot positions of every CV and SV plus the fixed RSU.
///
/// Slots are 0-based here; the CSV form numbers them from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityTrace {
    cv: Vec<Vec<Position>>,
    sv: Vec<Vec<Position>>,
    pub rsu: Position,
    pub road_length: f64,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    t: usize,
    veh_id: String,
    role: String,
    x: f64,
    y: f64,
}

impl MobilityTrace {
    /// `cv[slot][i]`, `sv[slot][j]`.
    pub fn new(
        cv: Vec<Vec<Position>>,
        sv: Vec<Vec<Position>>,
        rsu: Position,
        road_length: f64,
    ) -> Result<Self> {
        if cv.is_empty() || cv.len() != sv.len() {
            return Err(Error::InvalidTrace(format!(
                "need T >= 1 with matching CV/SV slot counts, got {} and {}",
                cv.len(),
                sv.len()
            )));
        }
        let (n_cv, n_sv) = (cv[0].len(), sv[0].len());
        if n_cv == 0 {
            return Err(Error::InvalidTrace("trace has no client vehicles".into()));
        }
        for (t, (c, s)) in cv.iter().zip(&sv).enumerate() {
            if c.len() != n_cv || s.len() != n_sv {
                return Err(Error::InvalidTrace(format!(
                    "slot {} has {} CVs / {} SVs, expected {n_cv} / {n_sv}",
                    t + 1,
                    c.len(),
                    s.len()
                )));
            }
            if c.iter().chain(s).any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(Error::InvalidTrace(format!("non-finite position at slot {}", t + 1)));
            }
        }
        if !(road_length > 0.0) {
            return Err(Error::InvalidTrace("road length must be positive".into()));
        }
        Ok(Self {
            cv,
            sv,
            rsu,
            road_length,
        })
    }

    pub fn num_slots(&self) -> usize {
        self.cv.len()
    }

    pub fn num_cv(&self) -> usize {
        self.cv[0].len()
    }

    pub fn num_sv(&self) -> usize {
        self.sv[0].len()
    }

    pub fn cv_positions(&self, slot: usize) -> Result<&[Position]> {
        self.cv
            .get(slot)
            .map(Vec::as_slice)
            .ok_or_else(|| self.slot_error(slot))
    }

    pub fn sv_positions(&self, slot: usize) -> Result<&[Position]> {
        self.sv
            .get(slot)
            .map(Vec::as_slice)
            .ok_or_else(|| self.slot_error(slot))
    }

    fn slot_error(&self, slot: usize) -> Error {
        Error::OutOfRange {
            what: "trace slot",
            value: slot as i64,
            lo: 0,
            hi: self.num_slots() as i64 - 1,
        }
    }

    /// Parses `t,veh_id,role,x,y` rows. Vehicles are ordered by first appearance
    /// within each role; every vehicle must appear in every slot `1..=T`.
    pub fn from_csv_reader<R: Read>(reader: R, rsu: Position, road_length: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut ids: [Vec<String>; 2] = [Vec::new(), Vec::new()];
        let mut index: HashMap<String, (usize, usize)> = HashMap::new();
        let mut cells: HashMap<(usize, usize, usize), Position> = HashMap::new();
        let mut max_t = 0;
        for row in rdr.deserialize() {
            let row: TraceRow = row?;
            let role = match row.role.to_ascii_lowercase().as_str() {
                "cv" => 0,
                "sv" => 1,
                other => return Err(Error::InvalidTrace(format!("unknown role `{other}`"))),
            };
            if row.t == 0 {
                return Err(Error::InvalidTrace("slots are numbered from 1".into()));
            }
            let key = *index.entry(row.veh_id.clone()).or_insert_with(|| {
                ids[role].push(row.veh_id.clone());
                (role, ids[role].len() - 1)
            });
            if key.0 != role {
                return Err(Error::InvalidTrace(format!(
                    "vehicle `{}` changes role",
                    row.veh_id
                )));
            }
            max_t = max_t.max(row.t);
            if cells
                .insert((row.t - 1, role, key.1), Position::new(row.x, row.y))
                .is_some()
            {
                return Err(Error::InvalidTrace(format!(
                    "duplicate row for `{}` at t={}",
                    row.veh_id, row.t
                )));
            }
        }
        let mut grids: [Vec<Vec<Position>>; 2] = [Vec::new(), Vec::new()];
        for (role, grid) in grids.iter_mut().enumerate() {
            for t in 0..max_t {
                let slot = (0..ids[role].len())
                    .map(|v| {
                        cells.get(&(t, role, v)).copied().ok_or_else(|| {
                            Error::InvalidTrace(format!(
                                "vehicle `{}` has no position at t={}",
                                ids[role][v],
                                t + 1
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                grid.push(slot);
            }
        }
        let [cv, sv] = grids;
        Self::new(cv, sv, rsu, road_length)
    }

    pub fn load_csv(path: impl AsRef<Path>, rsu: Position, road_length: f64) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, rsu, road_length)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "veh_id", "role", "x", "y"])?;
        for t in 0..self.num_slots() {
            for (i, p) in self.cv[t].iter().enumerate() {
                w.write_record(&[
                    (t + 1).to_string(),
                    format!("cv{i}"),
                    "cv".into(),
                    p.x.to_string(),
                    p.y.to_string(),
                ])?;
            }
            for (j, p) in self.sv[t].iter().enumerate() {
                w.write_record(&[
                    (t + 1).to_string(),
                    format!("sv{j}"),
                    "sv".into(),
                    p.x.to_string(),
                    p.y.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Parameters of the synthetic unidirectional highway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighwayParams {
    pub length_m: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub lanes: usize,
    pub lane_width_m: f64,
    /// Lateral offset of the RSU from lane 0.
    pub rsu_offset_m: f64,
}

impl Default for HighwayParams {
    fn default() -> Self {
        Self {
            length_m: 1000.0,
            speed_min: 20.0,
            speed_max: 30.0,
            lanes: 3,
            lane_width_m: 3.5,
            rsu_offset_m: -10.0,
        }
    }
}

/// Vehicles start uniformly along a ring road of `length_m`, keep a seeded
/// lane and speed, and advance `speed * tau` per slot (wrapping at the end).
/// The RSU sits at the road midpoint.
pub fn synth_highway_trace(
    n_cv: usize,
    n_sv: usize,
    params: &HighwayParams,
    slots: usize,
    tau: f64,
    seed: u64,
) -> Result<MobilityTrace> {
    if n_cv == 0 || slots == 0 || !(params.length_m > 0.0) || params.lanes == 0 {
        return Err(Error::Config(
            "highway needs n_cv >= 1, slots >= 1, lanes >= 1 and positive length".into(),
        ));
    }
    if params.speed_min < 0.0 || params.speed_max < params.speed_min {
        return Err(Error::Config("invalid highway speed range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spawn = |n: usize| -> Vec<(f64, f64, f64)> {
        (0..n)
            .map(|_| {
                let x0 = rng.random_range(0.0..params.length_m);
                let lane = rng.random_range(0..params.lanes);
                let speed = if params.speed_max > params.speed_min {
                    rng.random_range(params.speed_min..params.speed_max)
                } else {
                    params.speed_min
                };
                (x0, lane as f64 * params.lane_width_m, speed)
            })
            .collect()
    };
    let cvs = spawn(n_cv);
    let svs = spawn(n_sv);
    let at = |veh: &[(f64, f64, f64)], t: usize| -> Vec<Position> {
        veh.iter()
            .map(|&(x0, y, v)| Position::new((x0 + v * tau * t as f64).rem_euclid(params.length_m), y))
            .collect()
    };
    let cv = (0..slots).map(|t| at(&cvs, t)).collect();
    let sv = (0..slots).map(|t| at(&svs, t)).collect();
    MobilityTrace::new(
        cv,
        sv,
        Position::new(params.length_m / 2.0, params.rsu_offset_m),
        params.length_m,
    )
}
