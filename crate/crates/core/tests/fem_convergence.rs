mod common;

use common::*;

#[test]
fn affine_solutions_are_reproduced() {
    for mass in MASSES {
        for n in [3, 8, 13] {
            let e = affine_steady_error(n, mass);
            assert!(e < 1e-10, "steady {mass:?} n={n}: {e:e}");
        }
        let e = affine_transient_error(8, mass);
        assert!(e < 1e-10, "transient {mass:?}: {e:e}");
    }
}

#[test]
fn spatial_error_is_second_order() {
    for mass in MASSES {
        let coarse = smooth_steady_error(8, mass);
        let fine = smooth_steady_error(16, mass);
        let finer = smooth_steady_error(32, mass);
        for ratio in [coarse / fine, fine / finer] {
            assert!((3.5..=4.5).contains(&ratio), "{mass:?}: ratio {ratio}");
        }
    }
}

#[test]
fn temporal_error_is_first_order() {
    for mass in MASSES {
        let errors: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&dt| temporal_error(dt, mass))
            .collect();
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.8..=2.2).contains(&ratio), "{mass:?}: {errors:?}");
        }
    }
}
