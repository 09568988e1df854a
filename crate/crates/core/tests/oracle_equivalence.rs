//! On enumerable populations with saturated working models every
//! ratio-type estimator equals the brute-force identifying ratio.

mod common;

use common::{panel_population, rc_population, saturated, PANEL_TYPES, RC_TYPES};
use idid::latt::{estimate_cell, Estimator};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn panel_matches_brute_force(counts in prop::array::uniform24(1u32..9)) {
        let (data, truth) = panel_population(&counts);
        prop_assume!(truth.is_finite() && truth.abs() < 1e3);
        for est in [Estimator::Dr, Estimator::Reg, Estimator::Ipw, Estimator::Ipws] {
            let tau = estimate_cell(&data, 2, 2, &saturated(est)).unwrap().tau;
            prop_assert!((tau - truth).abs() < 1e-9 * truth.abs().max(1.0), "{est}: {tau} vs {truth}");
        }
    }

    #[test]
    fn rc_matches_brute_force(counts in prop::array::uniform32(1u32..9)) {
        let (data, truth) = rc_population(&counts);
        prop_assume!(truth.is_finite() && truth.abs() < 1e3);
        let tau = estimate_cell(&data, 2, 2, &saturated(Estimator::Dr)).unwrap().tau;
        prop_assert!((tau - truth).abs() < 1e-9 * truth.abs().max(1.0), "{tau} vs {truth}");
    }
}

#[test]
fn population_sizes() {
    const { assert!(PANEL_TYPES <= 64 && RC_TYPES <= 64) };
    let (data, _) = panel_population(&[1; PANEL_TYPES]);
    assert_eq!(data.n_rows(), PANEL_TYPES);
}
