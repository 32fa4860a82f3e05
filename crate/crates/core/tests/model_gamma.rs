use std::sync::Arc;

use heteroclinic::*;

fn line_grid(t: i64, h: f64) -> Arc<CylinderGrid> {
    Arc::new(CylinderGrid::new(t, h, CrossSection::interval(1.0, 3).unwrap()).unwrap())
}

#[test]
fn ginzburg_landau_is_certified() {
    let r = validate_potential(&Potential::ginzburg_landau(), 2001).unwrap();
    assert!(r.all_passed());
    for name in ["V1", "V2", "V3"] {
        assert!(r.get(name).unwrap().passed, "{name}");
    }
}

#[test]
fn dense_samples_vanish_only_near_the_wells() {
    let v = Potential::ginzburg_landau();
    let zeros: Vec<f64> = (0..=60_000)
        .map(|i| -3.0 + i as f64 * 1e-4)
        .filter(|t| v.eval(*t) < 1e-8)
        .collect();
    assert!(!zeros.is_empty());
    assert!(zeros.iter().all(|t| (t.abs() - 1.0).abs() < 1e-3));
}

#[test]
fn class1_far_ring_shrinks_on_nested_grids() {
    let ap = CoefficientField::cosine(2.0, 1.0).unwrap();
    let cross = CrossSection::interval(1.0, 3).unwrap();
    let a = make_class1(&ap, exponential_gap(0.5, 1.0), &cross).unwrap();
    let mut rings = Vec::new();
    for t in [4, 8, 16] {
        let g = line_grid(t, 0.25);
        let report = validate_coefficient(&a, &g);
        assert!(report.all_passed(), "{report:?}");
        let x = t as f64;
        rings.push(a.gap(x, &[0.5]).unwrap().max(a.gap(-x, &[0.5]).unwrap()));
    }
    assert!(rings.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn class2_samples_agree_on_the_plane_for_every_epsilon() {
    let g = line_grid(4, 0.25);
    let a = make_class2(well_profile(2.0, 1.0, 1.0), 1.0, g.cross()).unwrap();
    let mid = g.plane_of(0).unwrap();
    let s1 = sample_on_grid(&a, &g);
    let s2 = sample_on_grid(&a.with_epsilon(0.3).unwrap(), &g);
    for c in 0..g.cross_count() {
        assert_eq!(s1.at(mid, c), s2.at(mid, c));
    }
    assert!(validate_coefficient(&a, &g).all_passed());
}

#[test]
fn translated_seed_shifts_the_normalization() {
    let g = line_grid(6, 0.1);
    let phi = seed_phi(0, &g).unwrap();
    let base = normalization_shifts(&phi, 0.5).unwrap();
    for k in [-2, -1, 1, 2] {
        let moved = normalization_shifts(&translate(&phi, k).unwrap(), 0.5).unwrap();
        assert_eq!(moved.k1, base.k1 - k);
        assert_eq!(moved.k2, base.k2 - k);
        assert_eq!(translate(&phi, k).unwrap(), seed_phi(-k, &g).unwrap());
    }
}

#[test]
fn glue_pins_the_left_tail_and_keeps_the_right() {
    let g = line_grid(5, 0.1);
    let u = Field::from_fn(g.clone(), |x, _| -(0.7 * x).tanh());
    let z = glue(&u, -2).unwrap();
    let x = g.x();
    for (i, xi) in x.iter().enumerate() {
        if *xi <= -2.0 {
            assert_eq!(z.at(i, 0), 1.0);
        } else if *xi >= -1.0 {
            assert_eq!(z.at(i, 0), u.at(i, 0));
        } else {
            let s = xi + 2.0;
            let expect = (1.0 - s) + s * u.at(i, 0);
            assert!((z.at(i, 0) - expect).abs() < 1e-12);
        }
    }
    assert!(z.is_within_bounds());
    let v = Potential::ginzburg_landau();
    let a = GridFunction::constant(g.clone(), 1.0);
    let tails = tail_norms(&z);
    assert!(tails
        .iter()
        .filter(|p| p.k < -2)
        .all(|p| p.left_norm == 0.0));
    assert!(total_energy(&z, &a, &v).unwrap().total.is_finite());
}

#[test]
fn gamma_check_accepts_clamped_transitions() {
    let g = line_grid(6, 0.1);
    let phi = seed_phi(0, &g).unwrap();
    assert!(GammaCheck::evaluate(&phi, 1e-12).passed);
    let flat = Field::constant(g.clone(), 0.0);
    assert!(!GammaCheck::evaluate(&flat, 1e-3).passed);
}
