//! Analytic gradients vs central finite differences (h = 1e-4, f64) for
//! every layer kind, including weight-side gradients and a composite chain.
//! The cases live in [`crossgen_core::check`], shared with the release gate.

use crossgen_core::check;

#[test]
fn every_layer_matches_central_differences() {
    for r in check::gradient_checks() {
        assert!(
            r.passed(),
            "{}: worst rel err {} ≥ {} at {}",
            r.name,
            r.worst,
            r.tolerance,
            r.at
        );
    }
}
