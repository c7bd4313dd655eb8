//! Finite-difference checks of the reverse sweep, one op family at a time.

mod common;

use common::gradcheck::LAYER_CASES;

#[test]
fn every_layer_family_matches_central_differences() {
    for (name, case) in LAYER_CASES {
        let err = case();
        assert!(err <= 1e-6, "{name}: {err}");
    }
}
