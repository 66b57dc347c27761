use abrsim_core::protocol::ServiceClass;
use abrsim_core::sim::PropertyReport;
use abrsim_core::{build, build_with, run, Scenario, ScenarioOverrides, SimParams, SwitchArch, VsVdOptions};
use proptest::prelude::*;

fn assert_clean(s: &Scenario, label: &str, report: &PropertyReport, rec: &abrsim_core::scenarios::metrics::Recording) {
    assert!(report.er_checks > 0, "{label}: no ER checks");
    assert!(report.acr_checks > 0, "{label}: no ACR checks");
    assert!(report.is_clean(), "{label}: {report:?}");
    // VBR cells are conserved too
    assert_eq!(report.conservation.len(), s.vcs.len(), "{label}");
    assert!(s.vcs.iter().any(|v| v.class == ServiceClass::Abr));
    for row in &rec.acr {
        let vc = s.vcs.iter().find(|v| v.id == row.vc).expect("recorded VC exists");
        assert!(row.acr >= vc.mcr && row.acr <= vc.pcr, "{label}: {row:?}");
    }
}

#[test]
fn every_scenario_is_clean_under_reference_columns() {
    let columns = [
        ("nonvsvd", SwitchArch::NonVsVd),
        ("D", SwitchArch::VsVd(VsVdOptions::preset("D").unwrap())),
        ("overalloc", SwitchArch::VsVd(VsVdOptions::OVERALLOCATING)),
    ];
    for name in abrsim_core::SCENARIO_NAMES {
        for (col, arch) in columns {
            let s = build(name, arch).unwrap();
            let out = run(&s, &SimParams::default()).unwrap();
            assert_clean(&s, &format!("{name}/{col}"), &out.report, &out.recording);
        }
    }
}

#[test]
fn identical_runs_record_identically() {
    let s = build("parking_lot", SwitchArch::VsVd(VsVdOptions::preset("B").unwrap())).unwrap();
    let a = run(&s, &SimParams::default()).unwrap();
    let b = run(&s, &SimParams::default()).unwrap();
    assert_eq!(a.events, b.events);
    assert_eq!(a.recording, b.recording);
}

#[test]
fn delivered_counts_are_cumulative_and_monotone() {
    let s = build("transient", SwitchArch::NonVsVd).unwrap();
    let out = run(&s, &SimParams::default()).unwrap();
    for vc in s.abr_vcs() {
        let rows: Vec<u64> = out.recording.delivered.iter().filter(|r| r.vc == vc.id).map(|r| r.cells).collect();
        assert!(!rows.is_empty());
        assert!(rows.windows(2).all(|w| w[0] <= w[1]), "{rows:?}");
        let c = out.report.conservation.iter().find(|c| c.vc == vc.id).unwrap();
        assert_eq!(*rows.last().unwrap(), c.delivered);
    }
}

fn any_arch() -> impl Strategy<Value = SwitchArch> {
    let all = VsVdOptions::all();
    prop_oneof![
        Just(SwitchArch::NonVsVd),
        (0..all.len()).prop_map(move |i| SwitchArch::VsVd(all[i])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_options_and_knobs_keep_properties(
        arch in any_arch(),
        scenario in prop_oneof![Just("parking_lot"), Just("transient")],
        icr in 1.0f64..155.52,
        util in 0.5f64..1.0,
        access in 0.0f64..1500.0,
    ) {
        let ov = ScenarioOverrides { icr: Some(icr), target_utilization: Some(util), source_access_km: Some(access) };
        let s = build_with(scenario, arch, &ov).unwrap();
        let out = run(&s, &SimParams::default()).unwrap();
        prop_assert!(out.report.is_clean(), "{:?}", out.report);
        for row in &out.recording.acr {
            prop_assert!(row.acr >= 0.0 && row.acr <= 155.52);
        }
    }
}
