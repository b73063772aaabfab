use grain_core::sim::{Arrangement, SimParams, CALIBRATION_SPACINGS, INTERFERENCE_TARGETS};
use grain_core::terrain::{Action, RobotGeometry};
use grain_harness::sweeps::{ratio_stats, sweep_actions, sweep_interference, write_actions, write_interference};

#[test]
fn fore_aft_shadowing_fades_with_spacing() {
    let rows = sweep_interference(&SimParams::default());
    assert_eq!(rows.len(), 2 * CALIBRATION_SPACINGS.len() * 5);
    let r = |g: f64| ratio_stats(&rows, Arrangement::ForeAft, g).0;
    let (r0, r2, r4, r8) = (r(0.0), r(2.0), r(4.0), r(8.0));
    assert!(r0 < r2 && r2 < r4 && r4 <= r8 + 1e-9, "{r0} {r2} {r4} {r8}");
    for (gap, target) in INTERFERENCE_TARGETS {
        assert!((r(gap) - target).abs() < 0.15, "gap {gap}: {} vs {target}", r(gap));
    }
    assert!(rows.iter().all(|x| x.ratio > 0.0 && x.ratio <= 1.0 + 1e-9));

    let tmp = tempfile::tempdir().unwrap();
    write_interference(&rows, tmp.path()).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join("interference.csv")).unwrap();
    assert!(csv.starts_with("arrangement,gap_cm,seed,ratio"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
    image::open(tmp.path().join("interference.png")).unwrap();
}

#[test]
fn each_action_moves_the_robot_its_own_way() {
    let stats = sweep_actions(&SimParams::default(), &RobotGeometry::default());
    let of = |a: Action| stats.iter().find(|s| s.action == a).unwrap();
    let af = of(Action::Af);
    assert!(stats
        .iter()
        .all(|s| s.action == Action::Af || s.mean.1.abs() < af.mean.1.abs()));
    assert!(af.mean.1 > 0.0, "AF climbs");
    let (lp, rp) = (of(Action::Lp), of(Action::Rp));
    assert!(lp.mean.2 * rp.mean.2 < 0.0, "pivots turn opposite ways");
    for s in &stats {
        if s.action != Action::Lp && s.action != Action::Rp {
            assert!(s.mean.2.abs() < lp.mean.2.abs().min(rp.mean.2.abs()), "{:?}", s.action);
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    write_actions(&stats, tmp.path()).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join("actions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    image::open(tmp.path().join("actions.png")).unwrap();
}

#[test]
fn noiseless_actions_repeat_across_seeds() {
    let mut params = SimParams::default();
    for e in params.action_table.iter_mut() {
        (e.std_dx, e.std_dy, e.std_dphi) = (0.0, 0.0, 0.0);
    }
    for s in sweep_actions(&params, &RobotGeometry::default()) {
        assert!(s.samples.iter().all(|x| *x == s.samples[0]), "{:?}", s.action);
        // summing equal values can still leave rounding in the variance
        assert!(s.std.0.max(s.std.1).max(s.std.2) < 1e-12, "{:?}", s.action);
    }
}
