use std::f64::consts::PI;

use rcar_web::demo;

#[test]
fn ar1_curves_match_closed_forms() {
    let a = 0.5;
    let ups = demo::autocovariance(&[a], &[1.0], 1, 1.0, 3).unwrap();
    for (u, v) in ups.iter().enumerate() {
        assert!((v - a.powi(u as i32) / (1.0 - a * a)).abs() < 1e-12);
    }
    let s = demo::spectrum(&[a], &[1.0], 1, 1.0, 5).unwrap();
    for (k, v) in s.iter().enumerate() {
        let lambda = PI * k as f64 / 4.0;
        let expect = 1.0 / (2.0 * PI * (1.0 - 2.0 * a * lambda.cos() + a * a));
        assert!((v - expect).abs() < 1e-10, "λ = {lambda}: {v} vs {expect}");
    }
}

#[test]
fn two_atom_autocovariance_is_a_mixture() {
    let ups = demo::autocovariance(&[0.2, 0.4], &[0.5, 0.5], 1, 1.0, 2).unwrap();
    let mix = |u: i32| 0.5 * (0.2f64.powi(u) / 0.96 + 0.4f64.powi(u) / 0.84);
    for (u, v) in ups.iter().enumerate() {
        assert!((v - mix(u as i32)).abs() < 1e-12);
    }
}

#[test]
fn verdicts_and_refusals() {
    assert!(demo::verdict(&[0.5], &[1.0], 1).unwrap().starts_with("stationary"));
    assert!(demo::verdict(&[1.0], &[1.0], 1).unwrap().starts_with("nonstationary"));
    assert!(demo::spectrum(&[1.0], &[1.0], 1, 1.0, 8).is_err());
    assert!(demo::autocovariance(&[0.5, 0.1, 0.2], &[1.0], 2, 1.0, 2).is_err());
}

#[test]
fn paths_are_seeded_and_shaped() {
    let a = demo::paths(&[0.5, 0.2, 0.3, -0.1], &[0.5, 0.5], 2, 1.0, 3, 10, 9).unwrap();
    assert_eq!(a.len(), 3 * 11);
    assert!(a.iter().all(|x| x.is_finite()));
    assert_eq!(a, demo::paths(&[0.5, 0.2, 0.3, -0.1], &[0.5, 0.5], 2, 1.0, 3, 10, 9).unwrap());
    assert_ne!(a, demo::paths(&[0.5, 0.2, 0.3, -0.1], &[0.5, 0.5], 2, 1.0, 3, 10, 10).unwrap());
    assert!(demo::paths(&[0.5], &[1.0], 1, 1.0, 0, 10, 1).is_err());
}
