mod common;

use abrsim_core::scenarios::maxmin::water_fill;
use abrsim_core::{build, SwitchArch, SCENARIO_NAMES};
use common::{check_oracle, is_maxmin, progressive_fill};
use proptest::prelude::*;

#[test]
fn oracle_matches_brute_force_on_every_scenario() {
    for name in SCENARIO_NAMES {
        let s = build(name, SwitchArch::NonVsVd).unwrap();
        check_oracle(&s).unwrap();
    }
}

#[test]
fn two_src_vbr_phases() {
    let s = build("two_src_vbr", SwitchArch::NonVsVd).unwrap();
    let off = s.optimal_at(abrsim_core::SimTime::from_millis(30));
    let on = s.optimal_at(abrsim_core::SimTime::from_millis(10));
    for v in off.values() {
        assert!((v - 69.984).abs() < 1e-6, "{v}");
    }
    // 0.9 * 155.52 - 0.8 * 155.52 split two ways
    for v in on.values() {
        assert!((v - 7.776).abs() < 1e-6, "{v}");
    }
}

#[test]
fn transient_second_vc_only_counts_while_active() {
    let s = build("transient", SwitchArch::NonVsVd).unwrap();
    assert_eq!(s.optimal_at(abrsim_core::SimTime::from_millis(100)).len(), 1);
    assert_eq!(s.optimal_at(abrsim_core::SimTime::from_millis(160)).len(), 2);
    assert_eq!(s.optimal_at(abrsim_core::SimTime::from_millis(300)).len(), 1);
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<usize>>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|links| {
        let caps = proptest::collection::vec(1.0f64..150.0, links);
        let flows = proptest::collection::vec(
            (proptest::collection::btree_set(0..links, 1..=links), 0.5f64..160.0),
            1..7,
        );
        (caps, flows).prop_map(|(c, f)| {
            let routes = f.iter().map(|(r, _)| r.iter().copied().collect()).collect();
            let pcr = f.iter().map(|(_, p)| *p).collect();
            (c, routes, pcr)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn water_fill_is_max_min((capacities, routes, caps) in instance()) {
        let rates = water_fill(&capacities, &routes, &caps);
        prop_assert!(is_maxmin(&rates, &capacities, &routes, &caps).is_ok(),
            "{:?}", is_maxmin(&rates, &capacities, &routes, &caps));
        let step = 1e-2;
        let brute = progressive_fill(&capacities, &routes, &caps, step);
        for (a, b) in rates.iter().zip(&brute) {
            prop_assert!((a - b).abs() <= step * routes.len() as f64 + 1e-9, "{a} vs {b}");
        }
    }
}
