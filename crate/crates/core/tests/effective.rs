use bicwg_core::effective::*;
use bicwg_core::geometry::{cavity_energy, Geometry, Sheet};
use num_complex::Complex64;

const SINGLE_POLE: Complex64 = Complex64::new(32.452081478283, -0.621333347609);

fn bare() -> Calibration {
    Calibration::BareLevel {
        e_c0: cavity_energy(2, 3, &Geometry::single(2.0, 2.0)).unwrap(),
    }
}

#[test]
fn bare_level_calibration_reproduces_width() {
    let model = calibrate_coupling(SINGLE_POLE, bare(), 10.0).unwrap();
    let z = single_level_pole(&model).unwrap();
    assert!((z.im - SINGLE_POLE.im).abs() < 1e-9);
    assert!((model.e_c0 - 3.25 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
}

#[test]
fn predicted_bic_distances() {
    let model = calibrate_coupling(SINGLE_POLE, bare(), 10.0).unwrap();
    let (dp, ep) = bic_distance(Level::Plus, 4, &model).unwrap();
    let (dm, em) = bic_distance(Level::Minus, 5, &model).unwrap();
    assert!((dp - 6.0).abs() < 0.05, "{dp}");
    assert!((dm - 6.67).abs() < 0.05, "{dm}");
    // both are true bound states of the effective model
    for (level, d, e) in [(Level::Plus, dp, ep), (Level::Minus, dm, em)] {
        let s = self_energy(Complex64::new(e, 0.0), level, d, &model, Sheet::First).unwrap();
        assert!(s.im.abs() < 1e-8);
        assert!((e - model.e_c0 - s.re).abs() < 1e-8);
    }
}

#[test]
fn bound_pair_is_a_real_pole() {
    let model = calibrate_coupling(SINGLE_POLE, bare(), 10.0).unwrap();
    let (d, e) = bic_distance(Level::Plus, 4, &model).unwrap();
    let p = solve_pole_equation(Level::Plus, d, &model).unwrap();
    assert!(p.z0.im.abs() < 1e-7, "{}", p.z0);
    assert!((p.z0.re - e).abs() < 1e-6);
}

#[test]
fn zero_coupling_pins_pole_to_bare_level() {
    let model = CouplingModel::new(32.0, Coupling::zero(), 40.0);
    let p = solve_pole_equation(Level::Minus, 6.3, &model).unwrap();
    assert_eq!(p.z0, Complex64::new(32.0, 0.0));
}

#[test]
fn fitted_pole_calibration_is_exact() {
    let model = calibrate_coupling(SINGLE_POLE, Calibration::FitPole, 10.0).unwrap();
    let z = single_level_pole(&model).unwrap();
    assert!((z - SINGLE_POLE).norm() < 1e-8);
}
