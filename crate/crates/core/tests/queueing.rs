mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vecsched::network::SlotRates;
use vecsched::queueing::*;
use vecsched::scenario::{CvAction, Decision, EdgeNode, Scenario};

fn two_cv() -> Scenario {
    Scenario::new(vec![common::tiny_model(0)], vec![0, 0], vec![4.0, 4.0], vec![6.0], 8.0, 1.0).unwrap()
}

fn rates() -> SlotRates {
    SlotRates {
        v2i: vec![8.0, 16.0],
        v2v: vec![vec![4.0], vec![4.0]],
    }
}

#[test]
fn hand_computed_slot() {
    let sc = two_cv();
    let q = QueueState {
        q_loc: vec![2.0, 0.0],
        q_rsu: vec![5.0],
        q_veh: vec![0.0],
    };
    let d = Decision {
        actions: vec![CvAction::new(2, EdgeNode::Rsu), CvAction::new(1, EdgeNode::Rsu)],
        f_rsu: vec![8.0],
    };
    let delays = slot_delays(&q, &d, &rates(), &sc);
    assert_relative_eq!(delays[0].d_loc, 3.0);
    assert_relative_eq!(delays[0].d_tra, 1.0);
    assert_relative_eq!(delays[0].d_pro, 3.125);
    assert_relative_eq!(delays[0].d_wait, 1.875);
    assert_relative_eq!(delays[0].d_total, 9.0);
    assert_relative_eq!(delays[1].d_loc, 0.0);
    assert_relative_eq!(delays[1].d_tra, 2.0);
    assert_relative_eq!(delays[1].d_pro, 4.375);
    assert_relative_eq!(delays[1].d_wait, 1.25);
    assert_relative_eq!(delays[1].d_total, 7.625);

    let next = update_queues(&q, &d, &sc);
    assert_eq!(next.q_loc, vec![8.0, 0.0]);
    assert_eq!(next.q_rsu, vec![47.0]);
    assert_eq!(next.q_veh, vec![0.0]);
}

#[test]
fn sv_waiting_counts_all_types() {
    let sc = Scenario::new(
        vec![common::tiny_model(0), common::tiny_model(1)],
        vec![0, 1],
        vec![4.0, 4.0],
        vec![6.0],
        8.0,
        1.0,
    )
    .unwrap();
    let q = QueueState::for_scenario(&sc);
    let d = Decision {
        actions: vec![CvAction::new(1, EdgeNode::Sv(0)), CvAction::new(2, EdgeNode::Sv(0))],
        f_rsu: vec![4.0, 4.0],
    };
    let delays = slot_delays(&q, &d, &rates(), &sc);
    assert_relative_eq!(delays[0].d_wait, 20.0 / 12.0);
    assert_relative_eq!(delays[1].d_wait, 30.0 / 12.0);
    assert_relative_eq!(delays[0].d_pro, 5.0);
    assert_relative_eq!(delays[0].d_tra, 8.0);

    let rsu = Decision {
        actions: vec![CvAction::new(1, EdgeNode::Rsu), CvAction::new(2, EdgeNode::Rsu)],
        f_rsu: vec![4.0, 4.0],
    };
    let delays = slot_delays(&q, &rsu, &rates(), &sc);
    assert_eq!(delays[0].d_wait, 0.0);
    assert_eq!(delays[1].d_wait, 0.0);
}

#[test]
fn fully_local_has_no_edge_terms() {
    let sc = two_cv();
    let q = QueueState {
        q_loc: vec![0.0, 0.0],
        q_rsu: vec![100.0],
        q_veh: vec![100.0],
    };
    let d = Decision {
        actions: vec![CvAction::new(3, EdgeNode::Rsu), CvAction::new(3, EdgeNode::Sv(0))],
        f_rsu: vec![0.0],
    };
    let zero = SlotRates {
        v2i: vec![0.0, 0.0],
        v2v: vec![vec![0.0], vec![0.0]],
    };
    for del in slot_delays(&q, &d, &zero, &sc) {
        assert_eq!(del.d_tra + del.d_pro + del.d_wait, 0.0);
        assert_relative_eq!(del.d_total, 30.0 / 4.0);
    }
    let a = arrivals(&d.actions, &sc);
    assert_eq!(a.rsu, vec![0.0]);
    assert_eq!(a.veh, vec![0.0]);
}

#[test]
fn zero_rate_or_capacity_is_infinite() {
    let sc = two_cv();
    let q = QueueState::for_scenario(&sc);
    let d = Decision {
        actions: vec![CvAction::new(1, EdgeNode::Rsu), CvAction::new(1, EdgeNode::Sv(0))],
        f_rsu: vec![0.0],
    };
    let delays = slot_delays(&q, &d, &rates(), &sc);
    assert!(delays[0].d_pro.is_infinite());
    assert!(delays[1].d_total.is_finite());
    let zero = SlotRates {
        v2i: vec![0.0, 0.0],
        v2v: vec![vec![0.0], vec![0.0]],
    };
    let delays = slot_delays(&q, &d, &zero, &sc);
    assert!(delays[1].d_tra.is_infinite());
}

#[test]
fn transmission_uses_layer_input_bits() {
    let m = common::tiny_model(0);
    assert_relative_eq!(transmission_delay(1, 32.0, &m), 1.0);
    assert_relative_eq!(transmission_delay(2, 4.0, &m), 2.0);
    assert_eq!(transmission_delay(3, 0.0, &m), 0.0);
    assert_eq!(local_delay(1, 50.0, &m, 1.0), 0.0);
    assert_relative_eq!(local_delay(3, 2.0, &m, 4.0), 8.0);
}

proptest! {
    #[test]
    fn queues_stay_non_negative_and_arrivals_conserve_work(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = common::random_scenario(&mut rng, 5, 3);
        let mut q = common::random_queues(&mut rng, &sc, 1e9);
        for _ in 0..5 {
            let actions = common::random_actions(&mut rng, &sc);
            let a = arrivals(&actions, &sc);
            let total: f64 = (0..sc.num_cv()).map(|i| sc.model_of(i).total_workload() as f64).sum();
            prop_assert!((a.total() - total).abs() <= 1e-9 * total);
            let f_rsu: Vec<f64> = (0..sc.num_types()).map(|_| sc.f_rsu_max / sc.num_types() as f64).collect();
            let d = Decision { actions, f_rsu };
            let delays = slot_delays(&q, &d, &common::random_rates(&mut rng, &sc), &sc);
            for del in &delays {
                prop_assert!(del.d_total >= 0.0 && del.d_total.is_finite());
                prop_assert!((del.d_total - (del.d_loc + del.d_tra + del.d_pro + del.d_wait)).abs() <= 1e-9 * del.d_total.max(1.0));
            }
            let next = update_queues(&q, &d, &sc);
            prop_assert!(next.is_valid());
            for (n, (&before, &after)) in q.q_loc.iter().zip(&next.q_loc).enumerate() {
                prop_assert!(after >= before - sc.f_loc[n] * sc.tau - 1e-6);
            }
            q = next;
        }
    }
}
