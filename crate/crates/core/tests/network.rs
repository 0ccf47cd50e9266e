use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vecsched::network::*;
use vecsched::Error;

fn snr_rate(bw: f64, p_dbm: f64, n_dbm: f64, pl_db: f64, h: f64) -> f64 {
    let p = 10f64.powf((p_dbm - 30.0) / 10.0);
    let n = 10f64.powf((n_dbm - 30.0) / 10.0);
    bw * (1.0 + p * 10f64.powf(pl_db / 10.0) * h / n).log2()
}

#[test]
fn rate_at_100m() {
    let pl = path_loss_v2i_db(100.0).unwrap();
    assert_relative_eq!(pl, -80.4, epsilon = 1e-12);
    let r = link_rate_bps(&RadioParams::default(), pl, 1.0);
    assert_relative_eq!(r, 188_021_161.733, max_relative = 1e-9);
}

#[test]
fn zero_fading_gives_zero_rate() {
    assert_eq!(link_rate_bps(&RadioParams::default(), -60.0, 0.0), 0.0);
}

#[test]
fn non_positive_distance_is_domain_error() {
    assert!(matches!(path_loss_v2i_db(0.0), Err(Error::Domain(_))));
    assert!(matches!(path_loss_v2v_db(-1.0), Err(Error::Domain(_))));
    assert!(path_loss_v2v_db(f64::NAN).is_err());
}

#[test]
fn fading_has_unit_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    let m = (0..n).map(|_| sample_fading(&mut rng)).sum::<f64>() / n as f64;
    assert!((m - 1.0).abs() < 0.01, "mean {m}");
}

fn tiny_trace() -> MobilityTrace {
    let cv = vec![
        vec![Position::new(100.0, 0.0), Position::new(50.0, 0.0)],
        vec![Position::new(110.0, 0.0), Position::new(60.0, 0.0)],
    ];
    let sv = vec![vec![Position::new(100.0, 10.0)], vec![Position::new(120.0, 10.0)]];
    MobilityTrace::new(cv, sv, Position::new(0.0, 0.0), 1000.0).unwrap()
}

#[test]
fn slot_rates_match_formula_with_replayed_fading() {
    let tr = tiny_trace();
    let radio = RadioParams::default();
    let rates = rates_for_slot(&tr, &radio, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (i, cv) in tr.cv_positions(1).unwrap().iter().enumerate() {
        let d = cv.distance(&tr.rsu);
        let h = sample_fading(&mut rng);
        let expect = snr_rate(10e6, 23.0, -114.0, -38.4 - 21.0 * d.log10(), h);
        assert_relative_eq!(rates.v2i[i], expect, max_relative = 1e-12);
        for (j, sv) in tr.sv_positions(1).unwrap().iter().enumerate() {
            let d = cv.distance(sv);
            let h = sample_fading(&mut rng);
            let expect = snr_rate(10e6, 23.0, -114.0, -44.23 - 16.7 * d.log10(), h);
            assert_relative_eq!(rates.v2v[i][j], expect, max_relative = 1e-12);
        }
    }
}

#[test]
fn slot_out_of_range() {
    let tr = tiny_trace();
    assert!(matches!(tr.cv_positions(2), Err(Error::OutOfRange { .. })));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(rates_for_slot(&tr, &RadioParams::default(), 5, &mut rng).is_err());
}

#[test]
fn csv_round_trip() {
    let tr = synth_highway_trace(3, 2, &HighwayParams::default(), 7, 1.0, 11).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let back = MobilityTrace::from_csv_reader(buf.as_slice(), tr.rsu, tr.road_length).unwrap();
    assert_eq!(back, tr);
}

#[test]
fn csv_orders_vehicles_by_first_appearance() {
    let text = "t,veh_id,role,x,y\n1,b,cv,5,0\n1,a,cv,7,0\n1,s,sv,1,1\n2,a,cv,8,0\n2,b,cv,6,0\n2,s,sv,2,1\n";
    let tr = MobilityTrace::from_csv_reader(text.as_bytes(), Position::new(0.0, 0.0), 100.0).unwrap();
    assert_eq!(tr.num_slots(), 2);
    assert_eq!(tr.cv_positions(1).unwrap()[0], Position::new(6.0, 0.0));
    assert_eq!(tr.cv_positions(1).unwrap()[1], Position::new(8.0, 0.0));
    assert_eq!(tr.sv_positions(0).unwrap()[0], Position::new(1.0, 1.0));
}

#[test]
fn csv_rejects_malformed_traces() {
    let rsu = Position::new(0.0, 0.0);
    let missing = "t,veh_id,role,x,y\n1,a,cv,5,0\n2,b,cv,6,0\n";
    assert!(matches!(
        MobilityTrace::from_csv_reader(missing.as_bytes(), rsu, 10.0),
        Err(Error::InvalidTrace(_))
    ));
    let role = "t,veh_id,role,x,y\n1,a,bus,5,0\n";
    assert!(matches!(
        MobilityTrace::from_csv_reader(role.as_bytes(), rsu, 10.0),
        Err(Error::InvalidTrace(_))
    ));
    let dup = "t,veh_id,role,x,y\n1,a,cv,5,0\n1,a,cv,6,0\n";
    assert!(MobilityTrace::from_csv_reader(dup.as_bytes(), rsu, 10.0).is_err());
    let zero = "t,veh_id,role,x,y\n0,a,cv,5,0\n";
    assert!(MobilityTrace::from_csv_reader(zero.as_bytes(), rsu, 10.0).is_err());
}

#[test]
fn synthetic_trace_is_seeded() {
    let hp = HighwayParams::default();
    let a = synth_highway_trace(4, 3, &hp, 20, 1.0, 5).unwrap();
    let b = synth_highway_trace(4, 3, &hp, 20, 1.0, 5).unwrap();
    let c = synth_highway_trace(4, 3, &hp, 20, 1.0, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for t in 0..20 {
        for p in a.cv_positions(t).unwrap().iter().chain(a.sv_positions(t).unwrap()) {
            assert!((0.0..hp.length_m).contains(&p.x));
        }
    }
}

proptest! {
    #[test]
    fn rate_decreases_with_distance(d in 1.0f64..2000.0, k in 1.01f64..5.0, h in 0.01f64..5.0) {
        let radio = RadioParams::default();
        for pl in [path_loss_v2i_db, path_loss_v2v_db] {
            let near = link_rate_bps(&radio, pl(d).unwrap(), h);
            let far = link_rate_bps(&radio, pl(d * k).unwrap(), h);
            prop_assert!(near > far && far > 0.0);
        }
    }
}
