use proptest::prelude::*;

use ferrylink::acm::AcmTable;
use ferrylink::staticrelay::{e2e_se, feasible_box, optimize, StaticError};

fn scan_max(t: &AcmTable, d_total: f64) -> f64 {
    let (lo, hi) = feasible_box(t, d_total);
    let n = ((hi - lo) / 0.5).floor() as usize;
    (0..=n)
        .map(|i| lo + i as f64 * 0.5)
        .chain([hi])
        .map(|d| e2e_se(t, d_total, d).unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimum_matches_scan(d_total in 8000.5..16000.0f64) {
        let t = AcmTable::standard();
        let r = optimize(&t, d_total).unwrap();
        prop_assert!(r.max_per_ta_se >= scan_max(&t, d_total));
        for i in &r.optimal_intervals {
            let mid = 0.5 * (i.lo_m + i.hi_m);
            prop_assert_eq!(e2e_se(&t, d_total, mid).unwrap(), r.max_per_ta_se);
        }
        prop_assert_eq!(r.empty_positive_rate, r.max_per_ta_se <= 0.0);
    }

    #[test]
    fn placement_is_symmetric(d_total in 8000.5..16000.0f64, u in 0.0..1.0f64) {
        let t = AcmTable::standard();
        let (lo, hi) = feasible_box(&t, d_total);
        let d = lo + u * (hi - lo);
        prop_assert_eq!(e2e_se(&t, d_total, d).unwrap(), e2e_se(&t, d_total, d_total - d).unwrap());
    }

    #[test]
    fn best_efficiency_never_grows_with_distance(a in 8000.5..16000.0f64, b in 8000.5..16000.0f64) {
        let t = AcmTable::standard();
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(optimize(&t, far).unwrap().max_per_ta_se <= optimize(&t, near).unwrap().max_per_ta_se);
    }

    #[test]
    fn every_critical_point_is_feasible(d_total in 8000.5..16000.0f64) {
        let t = AcmTable::standard();
        let (lo, hi) = feasible_box(&t, d_total);
        for c in optimize(&t, d_total).unwrap().critical_points {
            prop_assert!(c.d_rg_m >= lo && c.d_rg_m <= hi);
            prop_assert!((c.d_rg_m + c.d_dr_m - d_total).abs() < 1e-9);
        }
    }
}

#[test]
fn far_outside_range_needs_a_mobile_relay() {
    let t = AcmTable::standard();
    assert!(matches!(optimize(&t, 25000.0), Err(StaticError::MobileRelayRequired { .. })));
}
