use pnp_ula::experiment::run_validation_suite;
use pnp_ula::experiment::validate::{ValidationOptions, ValidationReport};

#[test]
fn default_suite_passes_and_round_trips_through_json() {
    let report = run_validation_suite(&ValidationOptions::default()).unwrap();
    assert!(report.passed(), "{report:#?}");
    assert!(report.checks.len() >= 7);
    let json = serde_json::to_string_pretty(&report).unwrap();
    let back: ValidationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn fault_injection_is_caught_by_the_quadrature_check() {
    let report = run_validation_suite(&ValidationOptions {
        fault_inject: true,
        ..Default::default()
    })
    .unwrap();
    assert!(!report.passed());
    let quad = report.checks.iter().find(|c| c.name == "mmse-quadrature").unwrap();
    assert!(!quad.passed);
    // Checks that never touch the denoiser are unaffected.
    for name in [
        "posterior-importance-sampling",
        "posterior-consistency",
        "assignment-brute-force",
    ] {
        assert!(report.checks.iter().find(|c| c.name == name).unwrap().passed, "{name}");
    }
}
