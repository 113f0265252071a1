use approx::assert_relative_eq;
use proptest::prelude::*;
use proptest::test_runner::Config;
use std::f64::consts::PI;
use towerlab::greens::*;

fn sphere_area(n: usize) -> f64 {
    // |S^{n−1}| = 2π^{n/2}/Γ(n/2), with Γ(3/2) = √π/2, Γ(2) = 1, Γ(5/2) = 3√π/4.
    match n {
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        5 => 8.0 * PI * PI / 3.0,
        _ => unreachable!(),
    }
}

fn laplacian_in_x(p: &GreensProvider, x: &[f64], y: &[f64], h: f64) -> f64 {
    let mut acc = -2.0 * x.len() as f64 * p.regular_part(x, y).unwrap();
    for j in 0..x.len() {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[j] += h;
        b[j] -= h;
        acc += p.regular_part(&a, y).unwrap() + p.regular_part(&b, y).unwrap();
    }
    acc / (h * h)
}

#[test]
fn fundamental_solution_values_and_flux() {
    assert_relative_eq!(gamma(&[1.0, 0.0, 0.0], 3).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-15);
    assert_relative_eq!(gamma(&[0.0, 2.0, 0.0], 3).unwrap(), 1.0 / (8.0 * PI), max_relative = 1e-15);
    assert_relative_eq!(gamma(&[0.0, 0.0, 0.0, 1.0], 4).unwrap(), 1.0 / (4.0 * PI * PI), max_relative = 1e-15);
    assert!(gamma(&[0.0; 3], 3).is_err());
    // Outward flux of ∇Γ through the unit sphere is −1 in every dimension.
    for n in 3..=5 {
        let h = 1e-6;
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        a[0] = 1.0 + h;
        b[0] = 1.0 - h;
        let dr = (gamma(&a, n).unwrap() - gamma(&b, n).unwrap()) / (2.0 * h);
        assert_relative_eq!(dr * sphere_area(n), -1.0, max_relative = 1e-8);
    }
}

#[test]
fn ball_image_formula_values() {
    let p = GreensProvider::analytic(DomainSpec::ball(3)).unwrap();
    let g = p.green(&[0.0; 3], &[0.5, 0.0, 0.0]).unwrap();
    assert_relative_eq!(g, (1.0 / (4.0 * PI)) * (1.0 / 0.5 - 1.0), max_relative = 1e-14);
    assert_relative_eq!(p.robin(&[0.0; 3]).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-14);
    assert_relative_eq!(p.robin(&[0.0, 0.5, 0.0]).unwrap(), 1.0 / (4.0 * PI) / 0.75, max_relative = 1e-14);
    assert!((p.robin(&[0.5, 0.0, 0.0]).unwrap() - 0.106103).abs() < 1e-6);
    assert!(p.regular_part(&[1.2, 0.0, 0.0], &[0.0; 3]).is_err());
}

#[test]
fn ball_pair_function_is_positive() {
    let p = GreensProvider::analytic(DomainSpec::ball(3)).unwrap();
    let h = 1.0 / (4.0 * PI) / 0.75;
    let g = 1.0 / (4.0 * PI) * (1.0 - 1.0 / 1.25);
    let phi = p.phi_pair(&[0.5, 0.0, 0.0], &[-0.5, 0.0, 0.0]).unwrap();
    assert_relative_eq!(phi, h - g, max_relative = 1e-13);
    assert!((phi - 0.090187).abs() < 1e-6);
    let rep = p.check_hole_criterion(0.5, 200, 3).unwrap();
    assert!(!rep.all_negative && rep.max > 0.0);
}

#[test]
fn series_backend_reduces_to_the_ball() {
    let c = GreensProvider::new(DomainSpec::ball(4), Backend::ClosedForm).unwrap();
    let s = GreensProvider::new(DomainSpec::ball(4), Backend::series()).unwrap();
    let (x, y) = ([0.2, -0.1, 0.3, 0.0], [-0.4, 0.2, 0.1, 0.3]);
    assert_eq!(c.regular_part(&x, &y).unwrap(), s.regular_part(&x, &y).unwrap());
    assert!(GreensProvider::new(DomainSpec::annulus(3, 0.1), Backend::ClosedForm).is_err());
}

#[test]
fn annulus_series_satisfies_the_boundary_problem() {
    // Uniqueness: harmonic in x and equal to Γ(x − y) on both spheres.
    for (n, delta) in [(3, 0.2), (4, 0.1), (3, 0.05)] {
        let p = GreensProvider::new(DomainSpec::annulus(n, delta), Backend::HarmonicSeries { max_degree: 400, tol: 1e-14 }).unwrap();
        let mut y = vec![0.0; n];
        y[0] = 0.4;
        y[1] = -0.2;
        for dir in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [-0.6, 0.0, -0.8]] {
            let mut e = vec![0.0; n];
            e[..3].copy_from_slice(&dir);
            for rad in [1.0 - 1e-10, delta + 1e-10] {
                let x: Vec<f64> = e.iter().map(|v| v * rad).collect();
                let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let target = gamma(&d, n).unwrap();
                assert_relative_eq!(p.regular_part(&x, &y).unwrap(), target, max_relative = 1e-7);
            }
        }
        let mut x = vec![0.0; n];
        x[0] = -0.3;
        x[2] = 0.35;
        let lap = laplacian_in_x(&p, &x, &y, 1e-3);
        assert!(lap.abs() < 1e-5, "n = {n}, delta = {delta}: {lap}");
    }
}

#[test]
fn annulus_converges_to_ball_monotonically() {
    let ball = GreensProvider::analytic(DomainSpec::ball(3)).unwrap();
    let pairs = [([0.3, 0.0, 0.0], [0.0, 0.5, 0.1]), ([0.0, -0.4, 0.2], [0.6, 0.1, -0.1])];
    for (x, y) in pairs {
        let b = ball.green(&x, &y).unwrap();
        let gaps: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|d| (GreensProvider::analytic(DomainSpec::annulus(3, *d)).unwrap().green(&x, &y).unwrap() - b).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}

#[test]
fn small_hole_gives_negative_pair_function() {
    let p = GreensProvider::analytic(DomainSpec::annulus(3, 0.01)).unwrap();
    let rep = p.check_hole_criterion(0.1, 200, 7).unwrap();
    assert!(rep.all_negative, "max = {}", rep.max);
    assert_eq!(rep.samples, 200);
    assert_relative_eq!(rep.antipodal, p.phi_pair(&[0.1, 0.0, 0.0], &[-0.1, 0.0, 0.0]).unwrap(), max_relative = 1e-12);
}

#[test]
fn larger_hole_pair_function_is_stable_under_truncation() {
    // At δ = 0.05 the antipodal value at σ = 0.1 is positive; two truncation
    // tolerances agree, so the sign is not a series artefact.
    let a = GreensProvider::new(DomainSpec::annulus(3, 0.05), Backend::HarmonicSeries { max_degree: 200, tol: 1e-10 }).unwrap();
    let b = GreensProvider::new(DomainSpec::annulus(3, 0.05), Backend::HarmonicSeries { max_degree: 800, tol: 1e-15 }).unwrap();
    let (x, y) = ([0.1, 0.0, 0.0], [-0.1, 0.0, 0.0]);
    let (pa, pb) = (a.phi_pair(&x, &y).unwrap(), b.phi_pair(&x, &y).unwrap());
    assert_relative_eq!(pa, pb, max_relative = 1e-8);
    assert!(pb > 0.0);
    // Reporting path with a large hole.
    let r = GreensProvider::analytic(DomainSpec::annulus(3, 0.3)).unwrap().check_hole_criterion(0.35, 50, 1).unwrap();
    assert!(r.min <= r.max);
}

#[test]
fn grid_backend_matches_closed_form() {
    let c = GreensProvider::analytic(DomainSpec::ball(3)).unwrap();
    let g = GreensProvider::new(DomainSpec::ball(3), Backend::grid(48)).unwrap();
    let (x, y) = ([0.2, 0.1, -0.1], [-0.3, 0.2, 0.25]);
    let (a, b) = (c.regular_part(&x, &y).unwrap(), g.regular_part(&x, &y).unwrap());
    assert!((a - b).abs() / a < 1e-2, "{a} vs {b}");
    assert_relative_eq!(g.regular_part(&x, &y).unwrap(), g.regular_part(&y, &x).unwrap(), max_relative = 1e-14);
}

fn point_in_shell(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    (proptest::collection::vec(-1.0f64..1.0, n), lo..hi).prop_filter_map("nonzero direction", |(v, r)| {
        let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        (s > 1e-3).then(|| v.iter().map(|a| a * r / s).collect())
    })
}

proptest! {
    #![proptest_config(Config { cases: 48, failure_persistence: None, ..Config::default() })]

    #[test]
    fn regular_part_is_symmetric(x in point_in_shell(3, 0.15, 0.9), y in point_in_shell(3, 0.15, 0.9)) {
        let p = GreensProvider::analytic(DomainSpec::annulus(3, 0.1)).unwrap();
        let (a, b) = (p.regular_part(&x, &y).unwrap(), p.regular_part(&y, &x).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn annulus_is_rotation_invariant(x in point_in_shell(3, 0.15, 0.9), y in point_in_shell(3, 0.15, 0.9), t in 0.0f64..6.3) {
        let p = GreensProvider::analytic(DomainSpec::annulus(3, 0.1)).unwrap();
        let rot = |v: &[f64]| vec![t.cos() * v[0] - t.sin() * v[1], t.sin() * v[0] + t.cos() * v[1], v[2]];
        let (a, b) = (p.regular_part(&x, &y).unwrap(), p.regular_part(&rot(&x), &rot(&y)).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.abs());
    }

    #[test]
    fn green_function_is_positive(x in point_in_shell(4, 0.15, 0.95), y in point_in_shell(4, 0.15, 0.95)) {
        prop_assume!(x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() > 1e-4);
        let p = GreensProvider::analytic(DomainSpec::annulus(4, 0.1)).unwrap();
        prop_assert!(p.green(&x, &y).unwrap() > 0.0);
    }
}
