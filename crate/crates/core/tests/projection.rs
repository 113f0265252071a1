use approx::assert_relative_eq;
use proptest::prelude::*;
use proptest::test_runner::Config;
use towerlab::family::{BubbleParams, RotationChart};
use towerlab::fields::{build_tower, standard_bubble, FnField, ScalarField, TowerConfig};
use towerlab::greens::{gamma, DomainSpec};
use towerlab::grid::{GridDomain, GridField, GridShape};
use towerlab::projection::*;

fn ball(dims: usize) -> GridDomain {
    GridDomain::new(GridShape::Ball, dims).unwrap()
}

fn interior_max(f: &GridField, g: impl Fn([f64; 3]) -> f64) -> f64 {
    (0..f.values.len())
        .filter(|&i| f.interior[i])
        .map(|i| (f.values[i] - g(f.point(i))).abs())
        .fold(0.0, f64::max)
}

#[test]
fn constant_and_linear_traces_are_reproduced() {
    let g = GridDomain::new(GridShape::Annulus { delta: 0.3 }, 33).unwrap();
    let c = FnField::new(3, |_x: &[f64]| 2.5);
    let (u, _) = harmonic_extension(&g, &c).unwrap();
    assert!(interior_max(&u, |_| 2.5) < 1e-8);
    let l = FnField::new(3, |x: &[f64]| x[0]);
    let (u, _) = harmonic_extension(&g, &l).unwrap();
    assert!(interior_max(&u, |p| p[0]) < 1e-8);
}

#[test]
fn exterior_source_converges_at_second_order() {
    let y0 = [1.6, 0.3, -0.2];
    let trace = FnField::new(3, move |x: &[f64]| gamma(&[x[0] - y0[0], x[1] - y0[1], x[2] - y0[2]], 3).unwrap());
    let errs: Vec<f64> = [33usize, 65]
        .iter()
        .map(|&d| {
            let (u, _) = harmonic_extension(&ball(d), &trace).unwrap();
            interior_max(&u, |p| trace.value(&p))
        })
        .collect();
    let order = (errs[0] / errs[1]).log2();
    assert!(order > 1.5, "errors {errs:?}, order {order}");
}

#[test]
fn projected_bubble_vanishes_near_the_boundary() {
    let g = ball(41);
    let base = standard_bubble(3).unwrap();
    let mut prev = f64::INFINITY;
    for lambda in [0.2, 0.1, 0.05] {
        let mut p = BubbleParams::identity(3);
        p.lambda = lambda;
        p.xi = vec![0.2, 0.0, 0.0];
        let r = project_bubble(&g, &p, &base).unwrap();
        let m = g
            .boundary_adjacent()
            .iter()
            .map(|&u| r.pq.values[g.node_of(u)].abs())
            .fold(0.0, f64::max);
        let centre = r.pq.interpolate(&[0.2, 0.0, 0.0]);
        assert!(m / centre < prev, "lambda {lambda}: {m}");
        prev = m / centre;
    }
    let mut far = BubbleParams::identity(3);
    far.xi = vec![0.99, 0.0, 0.0];
    assert!(project_bubble(&g, &far, &base).is_err());
}

#[test]
fn grid_order_fit_single_bubble() {
    let domain = DomainSpec::ball(3);
    let g = domain.grid_domain(48).unwrap();
    let mut t = BubbleParams::identity(3);
    t.xi = vec![0.45, 0.1, 0.0];
    let base = standard_bubble(3).unwrap();
    let fit = expansion_order_fit(&g, &domain, &t, &base, &[0.2, 0.1, 0.05, 0.025]).unwrap();
    assert!(fit.slope >= 1.3, "slope {}", fit.slope);
    assert!(expansion_order_fit(&g, &domain, &t, &base, &[0.2, 0.1]).is_err());
}

#[test]
fn meshfree_fit_leading_coefficient_is_profile_at_a_hat() {
    let tower = build_tower(&TowerConfig::new(3, 8).unwrap()).unwrap().field;
    let bubble = standard_bubble(3).unwrap();
    let domain = DomainSpec::annulus(3, 0.1);
    let mut t = BubbleParams::identity(3);
    t.xi = vec![0.45, 0.1, 0.0];
    t.a = [0.2, 0.0];
    let mut chart = RotationChart::identity(3);
    chart.theta[0] = 0.3;
    t.theta = chart;
    let lambdas = [0.2, 0.1, 0.05, 0.025];
    // Tower base: the coefficient is U*(â) and the relative gap shrinks with λ.
    let fit = expansion_order_fit_meshfree(&domain, &t, &tower, &lambdas).unwrap();
    assert_relative_eq!(fit.leading_q, tower.value(&t.a_hat().unwrap()), max_relative = 1e-14);
    assert!(fit.slope >= 1.2, "slope {}", fit.slope);
    assert!(fit.coefficient_error.windows(2).all(|w| w[1] < w[0]), "{:?}", fit.coefficient_error);
    // Single-bubble base: the coefficient matches within 10% at the smallest λ.
    let fit = expansion_order_fit_meshfree(&domain, &t, &bubble, &lambdas).unwrap();
    assert_relative_eq!(fit.leading_q, bubble.value(&t.a_hat().unwrap()), max_relative = 1e-14);
    assert!(fit.coefficient_error.last().unwrap() < &0.1, "{:?}", fit.coefficient_error);
}

#[test]
fn zero_field_has_zero_residual_and_trivial_newton() {
    let g = ball(24);
    let zero = g.to_field(&vec![0.0; g.unknowns()], &|_| 0.0);
    let r = nonlinear_residual(&g, &zero, 0.01).unwrap();
    assert_eq!((r.l2, r.max), (0.0, 0.0));
    let (_, tr) = newton_refine(&g, &zero, 0.01, 5).unwrap();
    assert!(tr.converged && tr.trivial_basin);
    assert!(nonlinear_residual(&g, &zero, -1.0).is_err());
}

#[test]
fn linear_problem_converges_in_one_newton_step() {
    let g = ball(24);
    let f = 3.0;
    let u0 = g.to_field(&vec![0.3; g.unknowns()], &|_| 0.0);
    let reaction = move |_: usize, _u: f64| (f, 0.0);
    let (_, tr) = newton_solve(&g, &u0, &reaction, 5, 1e-7).unwrap();
    assert!(tr.converged);
    assert_eq!(tr.residuals.len(), 2, "{:?}", tr.residuals);
}

proptest! {
    #![proptest_config(Config { cases: 6, failure_persistence: None, ..Config::default() })]

    #[test]
    fn slope_is_rotation_invariant_on_the_annulus(t in 0.0f64..std::f64::consts::TAU) {
        let base = standard_bubble(3).unwrap();
        let domain = DomainSpec::annulus(3, 0.1);
        let lambdas = [0.2, 0.1, 0.05, 0.025];
        let mut p = BubbleParams::identity(3);
        p.xi = vec![0.45, 0.1, 0.0];
        let s0 = expansion_order_fit_meshfree(&domain, &p, &base, &lambdas).unwrap().slope;
        p.xi = vec![0.45 * t.cos() - 0.1 * t.sin(), 0.45 * t.sin() + 0.1 * t.cos(), 0.0];
        let s1 = expansion_order_fit_meshfree(&domain, &p, &base, &lambdas).unwrap().slope;
        prop_assert!((s0 - s1).abs() < 0.05, "{} vs {}", s0, s1);
    }
}
