use bicwg_core::geometry::{cavity_energy, threshold, Geometry, Sheet};
use bicwg_core::modematch::ModeMatcher;
use bicwg_core::poles::*;
use num_complex::Complex64;

fn window(g: &Geometry) -> Contour {
    let e = cavity_energy(2, 3, g).unwrap();
    Contour::new(e - 1.5, e + 1.5, -1.6, 0.05)
}

#[test]
fn single_cavity_has_one_pole() {
    let g = Geometry::single(2.0, 2.0);
    let poles = locate_poles(&g, &window(&g), PoleOptions::default()).unwrap();
    assert_eq!(poles.len(), 1);
    let p = &poles[0];
    assert!((p.z - Complex64::new(32.45208, -0.62133)).norm() < 1e-4, "{}", p.z);
    assert!(p.residual < 1e-8);
    assert_eq!(p.symmetry, Symmetry::None);
}

#[test]
fn empty_window_has_no_poles() {
    let g = Geometry::double(2.0, 2.0, 5.6);
    let poles = locate_poles(&g, &Contour::new(15.0, 17.0, -0.5, 0.05), PoleOptions::default()).unwrap();
    assert!(poles.is_empty());
}

#[test]
fn symmetric_bic_and_transmission_zero_coincide() {
    let base = Geometry::double(2.0, 2.0, 5.6);
    let opts = PoleOptions::default();
    let start = PoleSolver::new(&base, opts).unwrap().locate(&window(&base)).unwrap();
    let narrow = start.iter().min_by(|a, b| a.gamma().total_cmp(&b.gamma())).unwrap();
    assert!(narrow.gamma() < 1e-4);
    assert_eq!(narrow.symmetry, Symmetry::Symmetric);

    let (d, z) = refine_bic(&base, narrow.z, 5.6, &opts).unwrap();
    assert!((d - 5.598302).abs() < 1e-5, "{d}");
    assert!(z.im.abs() < 1e-8);

    let m = ModeMatcher::new(&base.with_distance(d), opts.solver).unwrap();
    let tz = transmission_zero(&m, Complex64::new(z.re + 2e-3, 0.0)).unwrap();
    assert!((tz - Complex64::new(z.re, 0.0)).norm() < 1e-6, "{tz} vs {z}");
}

#[test]
fn bic_pair_spacing_is_half_period() {
    // consecutive BIC of opposite symmetry sit half a standing-wave period
    // apart in the connecting lead: Δd = π/k at the BIC energy
    let base = Geometry::double(2.0, 2.0, 5.6);
    let bics = find_bic(&base, 5.2, 6.5, &BicSearch::default()).unwrap();
    assert_eq!(bics.len(), 2);
    assert_eq!(bics[0].symmetry, Symmetry::Symmetric);
    assert_eq!(bics[1].symmetry, Symmetry::Antisymmetric);
    let k = (bics[0].energy - threshold(1)).sqrt();
    let spacing = bics[1].d - bics[0].d;
    assert!((spacing - std::f64::consts::PI / k).abs() < 2e-3, "{spacing}");
    for b in &bics {
        assert!(b.gamma().abs() < 1e-8);
        assert!((b.transmission_zero.re - b.energy).abs() < 1e-6);
    }
}

#[test]
fn tracked_labels_are_constant() {
    let base = Geometry::double(2.0, 2.0, 5.25);
    let traj = track_poles(&base, 5.25, 5.40, 0.01, &window(&base), TrackOptions::default()).unwrap();
    assert_eq!(traj.len(), 2);
    for t in &traj {
        assert!(t.labels_constant());
        assert_eq!(t.points.len(), 16);
    }
    let labels: Vec<Symmetry> = traj.iter().map(|t| t.symmetry).collect();
    assert!(labels.contains(&Symmetry::Symmetric) && labels.contains(&Symmetry::Antisymmetric));
}

#[test]
fn bound_states_below_threshold_are_real() {
    let g = Geometry::single(2.0, 2.0);
    let ps = PoleSolver::on_sheet(&g, PoleOptions::default(), Sheet::First).unwrap();
    let bound = ps.locate_real(2.0, threshold(1) - 1e-4, 0.3).unwrap();
    assert_eq!(bound.len(), 2);
    for b in &bound {
        assert_eq!(b.z.im, 0.0);
        assert!(b.residual < 1e-8);
    }
    assert!((bound[1].z.re - 8.5021139).abs() < 1e-6);
}
