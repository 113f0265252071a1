use approx::assert_relative_eq;
use proptest::prelude::*;
use proptest::test_runner::Config;
use std::f64::consts::PI;
use towerlab::energy::*;
use towerlab::family::BubbleParams;
use towerlab::fields::{standard_bubble, Bubble, BubbleSum};
use towerlab::greens::DomainSpec;
use towerlab::grid::{GridDomain, GridShape};
use towerlab::quadrature::QuadratureLevel;

/// Sharp Sobolev constant `n(n−2)/4 · |S^n|^{2/n}`; the bubble carries
/// `∫|∇U|² = ∫U^{p+1} = S^{n/2}`.
fn sobolev_mass(n: usize) -> f64 {
    let area_sn = match n {
        3 => 2.0 * PI * PI,
        4 => 8.0 * PI * PI / 3.0,
        5 => PI.powi(3),
        _ => unreachable!(),
    };
    let nf = n as f64;
    (nf * (nf - 2.0) / 4.0 * area_sn.powf(2.0 / nf)).powf(nf / 2.0)
}

fn pair(n: usize) -> [BubbleParams; 2] {
    let mut p1 = BubbleParams::identity(n);
    p1.xi[0] = 0.4;
    let mut p2 = BubbleParams::identity(n);
    p2.xi[0] = -0.4;
    p2.xi[1] = 0.1;
    [p1, p2]
}

#[test]
fn zeta_vanishes_in_the_limit() {
    let z: Vec<f64> = [0.1, 0.01, 0.001, 1e-4, 0.0]
        .iter()
        .map(|&e| EnergyConfig::new(3, e).unwrap().zeta())
        .collect();
    assert!(z.windows(2).all(|w| w[1].abs() < w[0].abs()), "{z:?}");
    assert_eq!(z[4], 0.0);
    assert!(EnergyConfig::new(3, 0.01).unwrap().p() > 1.0);
    assert!(EnergyConfig::new(3, -0.1).is_err());
}

#[test]
fn bubble_energy_matches_sobolev_constant() {
    for n in 3..=5 {
        let e = whole_space_energy(&standard_bubble(n).unwrap(), QuadratureLevel::default()).unwrap();
        let m = sobolev_mass(n);
        assert_relative_eq!(e.gradient, m, max_relative = 1e-6);
        assert_relative_eq!(e.potential, m, max_relative = 1e-6);
        assert_relative_eq!(e.energy, m / n as f64, max_relative = 1e-6);
    }
}

#[test]
fn energy_is_scale_invariant() {
    let u = whole_space_energy(&standard_bubble(4).unwrap(), QuadratureLevel::default()).unwrap();
    let d = BubbleSum::new(
        4,
        vec![Bubble {
            center: vec![0.0; 4],
            scale: 0.37,
            weight: 1.0,
        }],
    )
    .unwrap();
    let v = whole_space_energy(&d, QuadratureLevel::default()).unwrap();
    assert_relative_eq!(u.energy, v.energy, max_relative = 1e-8);
}

#[test]
fn constants_for_the_bubble() {
    let c = constant_set(&standard_bubble(3).unwrap(), QuadratureLevel::default()).unwrap();
    let m = sobolev_mass(3);
    assert_relative_eq!(c.s_n, m / 3.0, max_relative = 1e-6);
    assert_relative_eq!(c.chi_n, m / 6.0, max_relative = 1e-6);
    assert_relative_eq!(c.alpha_n, 0.5 * (4.0 * PI) * (4.0 * PI), max_relative = 1e-14);
    assert_relative_eq!(c.gamma_n, m / 3.0, max_relative = 1e-6);
    let l = lambdas_for(&c, [2.0, 3.0], 0.01);
    assert_relative_eq!(l[1] / l[0], 9.0 / 4.0, max_relative = 1e-14);
}

#[test]
fn zero_field_and_grid_convergence() {
    // u = 1 − |x|² on the unit ball: ∫|∇u|² = 16π/5, ∫u^6 = 4π∫(1−r²)^6 r² dr.
    let exact_pot = {
        let m = 20_000;
        let h = 1.0 / m as f64;
        let f = |r: f64| (1.0 - r * r).powi(6) * r * r;
        // Composite Simpson on [0, 1].
        let s: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(i as f64 * h)
            })
            .sum();
        4.0 * PI * s * h / 3.0
    };
    let exact = 0.5 * 16.0 * PI / 5.0 - exact_pot / 6.0;
    let mut vals = Vec::new();
    for dims in [48usize, 72] {
        let g = GridDomain::new(GridShape::Ball, dims).unwrap();
        let zero = g.to_field(&vec![0.0; g.unknowns()], &|_| 0.0);
        assert_eq!(domain_energy(&g, &zero, 0.0), 0.0);
        let u: Vec<f64> = (0..g.unknowns())
            .map(|k| {
                let p = g.point(g.node_of(k));
                1.0 - p.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        let f = g.to_field(&u, &|_| 0.0);
        vals.push(domain_energy(&g, &f, 0.0));
    }
    assert!((vals[1] / vals[0] - 1.0).abs() < 0.01, "{vals:?}");
    assert_relative_eq!(vals[1], exact, max_relative = 0.02);
}

#[test]
fn alpha_fit_matches_green_normalisation() {
    let base = standard_bubble(3).unwrap();
    let c = constant_set(&base, QuadratureLevel::default()).unwrap();
    let mut p = BubbleParams::identity(3);
    p.xi = vec![0.3, 0.1, 0.0];
    let fit = alpha_fit(&DomainSpec::ball(3), &p, &base, &[0.1, 0.05], QuadratureLevel::default()).unwrap();
    for a in fit {
        assert!((a / c.alpha_n - 1.0).abs() < 0.1, "{a} vs {}", c.alpha_n);
    }
}

#[test]
fn lambda_expansion_in_four_dimensions() {
    let base = standard_bubble(4).unwrap();
    let reps = expansion_check_j0(&DomainSpec::ball(4), &pair(4), &base, &[0.1, 0.05, 0.025], 0.1, QuadratureLevel::default()).unwrap();
    for w in reps.windows(2) {
        assert!(w[0].scaled_residual.abs() / w[1].scaled_residual.abs() >= 2.0);
    }
    for r in &reps {
        assert!((r.a2.direct / r.a2.expansion - 1.0).abs() < 0.15);
        assert!(r.recombination_defect < 1e-6, "{}", r.recombination_defect);
    }
}

#[test]
fn lambda_expansion_is_swap_symmetric() {
    let base = standard_bubble(3).unwrap();
    let p = pair(3);
    let q = [p[1].clone(), p[0].clone()];
    let lam = [0.1, 0.05];
    let a = expansion_check_j0(&DomainSpec::ball(3), &p, &base, &lam, 0.1, QuadratureLevel::coarse()).unwrap();
    let b = expansion_check_j0(&DomainSpec::ball(3), &q, &base, &lam, 0.1, QuadratureLevel::coarse()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_relative_eq!(x.direct, y.direct, max_relative = 1e-9);
        assert_relative_eq!(x.expansion, y.expansion, max_relative = 1e-12);
    }
    let mut close = p.clone();
    close[1].xi = vec![0.35, 0.0, 0.0];
    assert!(expansion_check_j0(&DomainSpec::ball(3), &close, &base, &lam, 0.1, QuadratureLevel::coarse()).is_err());
}

#[test]
fn epsilon_expansion_log_coefficient() {
    let base = standard_bubble(3).unwrap();
    let mut p = pair(3);
    p[1].xi = vec![-0.4, 0.0, 0.0];
    let rep = expansion_check_jeps(&DomainSpec::ball(3), &p, &base, [3.0, 3.0], &[0.02, 0.01, 0.005], 0.1, QuadratureLevel::default()).unwrap();
    assert!((rep.fitted_log_coefficient / rep.chi_n - 1.0).abs() <= 0.2);
    let s: Vec<f64> = rep.points.iter().map(|q| q.scaled_residual.abs()).collect();
    assert!(s.windows(2).all(|w| w[1] < w[0]), "{s:?}");
}

proptest! {
    #![proptest_config(Config { cases: 16, failure_persistence: None, ..Config::default() })]

    #[test]
    fn linear_fit_recovers_lines(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let x = [0.1, 0.4, 0.9, 2.0];
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let (s, c) = linear_fit(&x, &y);
        prop_assert!((s - a).abs() < 1e-10 && (c - b).abs() < 1e-10);
    }

    #[test]
    fn zeta_is_monotone(e1 in 1e-6f64..0.2, e2 in 1e-6f64..0.2) {
        prop_assume!((e1 - e2).abs() > 1e-9);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let zl = EnergyConfig::new(4, lo).unwrap().zeta();
        let zh = EnergyConfig::new(4, hi).unwrap().zeta();
        prop_assert!(zl > zh && zl < 0.0);
    }
}
