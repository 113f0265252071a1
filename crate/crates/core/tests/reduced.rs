use approx::assert_relative_eq;
use proptest::prelude::*;
use proptest::test_runner::Config;
use std::f64::consts::{PI, TAU};
use towerlab::error::Error;
use towerlab::fields::{build_tower, standard_bubble, BubbleSum, TowerConfig};
use towerlab::greens::{Backend, DomainSpec, GreensProvider};
use towerlab::reduced::*;

fn ball() -> GreensProvider {
    GreensProvider::new(DomainSpec::ball(3), Backend::series()).unwrap()
}

fn annulus() -> GreensProvider {
    GreensProvider::new(DomainSpec::annulus(3, 0.01), Backend::HarmonicSeries { max_degree: 400, tol: 1e-15 }).unwrap()
}

fn tower8() -> BubbleSum {
    build_tower(&TowerConfig::new(3, 8).unwrap()).unwrap().field
}

fn unit(theta: f64, phi: f64) -> Vec<f64> {
    vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Rotation about the third axis followed by one about the first.
fn rotate(v: &[f64], s: f64, t: f64) -> Vec<f64> {
    let (x, y, z) = (s.cos() * v[0] - s.sin() * v[1], s.sin() * v[0] + s.cos() * v[1], v[2]);
    vec![x, t.cos() * y - t.sin() * z, t.sin() * y + t.cos() * z]
}

#[test]
fn ball_example_value() {
    let prov = ball();
    let base = standard_bubble(3).unwrap();
    let f = ReducedFunctional::new(&prov, &base).unwrap();
    let pair = ConfigPair {
        big_lambda: [1.0, 1.0],
        xi: [vec![0.5, 0.0, 0.0], vec![-0.5, 0.0, 0.0]],
        a: [[0.0; 2]; 2],
    };
    // H(x, x) = 1/(4π(1 − |x|²)), G = Γ − H with the image point −2e₁.
    let h = 1.0 / (4.0 * PI * 0.75);
    let g = 1.0 / (4.0 * PI) - 1.0 / (4.0 * PI * 0.5 * 2.5);
    // U(0) = γ₃·2^{1/2}.
    let q0 = (0.75f64).powf(0.25) * 2f64.sqrt();
    assert_relative_eq!(h, 0.106103, max_relative = 1e-5);
    assert_relative_eq!(g, 0.0159155, max_relative = 1e-5);
    assert_relative_eq!(f.psi(&pair).unwrap(), q0 * q0 * (h - g), max_relative = 1e-9);
    assert!(matches!(f.negative_direction(&pair.xi, &pair.a), Err(Error::NoNegativeDirection(_))));
    assert!(matches!(f.stationary_lambda(&pair.xi, &pair.a), Err(Error::NoNegativeDirection(_))));
}

#[test]
fn ball_bracket_is_refused() {
    let prov = ball();
    let base = tower8();
    let f = ReducedFunctional::new(&prov, &base).unwrap();
    // φ(σe₁, −σe₁) > 0 on the ball at σ = 0.5.
    let mut o = BracketOptions::new(0.5);
    o.xi_samples = 12;
    o.symmetric = true;
    let r = f.level_bracket(&o);
    assert!(matches!(r, Err(Error::Bracket(_))), "{r:?}");
}

#[test]
fn stationary_scales_are_critical() {
    let prov = annulus();
    let base = tower8();
    let f = ReducedFunctional::new(&prov, &base).unwrap();
    let xi = [vec![0.1, 0.0, 0.0], vec![-0.1, 0.0, 0.0]];
    let a = [[0.0; 2]; 2];
    let st = f.stationary_lambda(&xi, &a).unwrap();
    assert_relative_eq!(st.psi, st.psi_closed_form, max_relative = 1e-10);
    assert_relative_eq!(st.big_lambda[0], st.big_lambda[1], max_relative = 1e-8);
    let d = f.pair_data(&xi, &a).unwrap();
    // Independent central differences in Λ with a large step on the closed form.
    for i in 0..2 {
        let h = 1e-4 * st.big_lambda[i];
        let mut p = st.big_lambda;
        let mut m = st.big_lambda;
        p[i] += h;
        m[i] -= h;
        let g = (d.psi(p) - d.psi(m)) / (2.0 * h);
        assert!(g.abs() * st.big_lambda[i] < 1e-6, "{g}");
    }
    let nd = f.negative_direction(&xi, &a).unwrap();
    assert_relative_eq!(nd.d[0], 0.5f64.sqrt(), max_relative = 1e-10);
    assert_relative_eq!(nd.d[1], 0.5f64.sqrt(), max_relative = 1e-10);
    assert!(nd.eigenvalue < 0.0 && nd.determinant < 0.0);
}

#[test]
fn level_set_grows_as_the_level_drops() {
    let prov = annulus();
    let base = tower8();
    let f = ReducedFunctional::new(&prov, &base).unwrap();
    let pairs: Vec<[Vec<f64>; 2]> = (0..40)
        .map(|i| {
            let t = 0.3 + 0.06 * i as f64;
            [vec![0.1, 0.0, 0.0], unit(t, 0.7 * i as f64).iter().map(|v| 0.1 * v).collect()]
        })
        .collect();
    let count = |l: f64| pairs.iter().filter(|x| f.in_w(x, l, 0.05, 0.1).unwrap()).count();
    let c: Vec<usize> = [1.0, 0.3, 0.1, 0.0].iter().map(|&l| count(l)).collect();
    assert!(c.windows(2).all(|w| w[0] <= w[1]), "{c:?}");
    assert!(!f.in_w(&[vec![0.3, 0.0, 0.0], vec![-0.3, 0.0, 0.0]], 0.0, 0.05, 0.1).unwrap());
}

#[test]
fn bracket_is_stable_under_denser_sampling() {
    let prov = annulus();
    let base = tower8();
    let f = ReducedFunctional::new(&prov, &base).unwrap();
    let mut o = BracketOptions::new(0.1);
    o.symmetric = true;
    o.xi_samples = 24;
    let b1 = f.level_bracket(&o).unwrap();
    o.xi_samples = 48;
    let b2 = f.level_bracket(&o).unwrap();
    assert!(b1.ordered && b2.ordered);
    assert!(b1.a_level < b1.b_level);
    for (x, y) in [(b1.a_level, b2.a_level), (b1.b_level, b2.b_level)] {
        assert!((x - y).abs() <= 0.05 * y.abs(), "{x} vs {y}");
    }
}

#[test]
fn saddle_search_finds_a_critical_point() {
    let prov = annulus();
    let base = tower8();
    let f = ReducedFunctional::new(&prov, &base).unwrap().with_constraints(Constraints { delta: 1e-3, a_max: 0.5 });
    let mut o = BracketOptions::new(0.1);
    o.symmetric = true;
    let b = f.level_bracket(&o).unwrap();
    let s = f
        .saddle_search(&b, &o, &SaddleOptions { seeds: 2, ..SaddleOptions::default() })
        .unwrap();
    assert!(s.is_critical(), "gradient {}", s.gradient_norm);
    assert!(s.within_bracket);
    assert_relative_eq!(s.psi, s.stationary.psi_closed_form, max_relative = 1e-6);
    let g = f.grad_psi(&s.pair).unwrap();
    assert!(g.values[0].abs() < 1e-6 && g.values[1].abs() < 1e-6);
}

proptest! {
    #![proptest_config(Config { cases: 100, failure_persistence: None, ..Config::default() })]

    #[test]
    fn psi_is_swap_invariant(
        t1 in 0.1f64..3.0, p1 in 0.0f64..TAU, t2 in 0.1f64..3.0, p2 in 0.0f64..TAU,
        r1 in 0.2f64..0.8, r2 in 0.2f64..0.8, l1 in 0.1f64..5.0, l2 in 0.1f64..5.0,
        a in prop::array::uniform4(-0.2f64..0.2),
    ) {
        let prov = ball();
        let base = tower8();
        let f = ReducedFunctional::new(&prov, &base).unwrap();
        let x1: Vec<f64> = unit(t1, p1).iter().map(|v| r1 * v).collect();
        let x2: Vec<f64> = unit(t2, p2).iter().map(|v| r2 * v).collect();
        prop_assume!(x1.iter().zip(&x2).map(|(u, v)| (u - v).powi(2)).sum::<f64>() > 0.01);
        let pair = ConfigPair { big_lambda: [l1, l2], xi: [x1, x2], a: [[a[0], a[1]], [a[2], a[3]]] };
        let v = f.psi(&pair).unwrap();
        let w = f.psi(&pair.swapped()).unwrap();
        prop_assert!((v - w).abs() <= 1e-10 * v.abs().max(1.0));
    }

    #[test]
    fn negative_direction_iff_phi_negative(
        t in 0.0f64..PI, r1 in 0.02f64..0.9, r2 in 0.02f64..0.9,
    ) {
        let prov = annulus();
        let base = standard_bubble(3).unwrap();
        let f = ReducedFunctional::new(&prov, &base).unwrap();
        let xi = [vec![r1, 0.0, 0.0], vec![r2 * t.cos(), r2 * t.sin(), 0.0]];
        prop_assume!((r1 - r2).abs() + t > 1e-3);
        let phi = prov.phi_pair(&xi[0], &xi[1]).unwrap();
        let nd = f.negative_direction(&xi, &[[0.0; 2]; 2]);
        prop_assert_eq!(nd.is_ok(), phi < 0.0);
        if let Ok(nd) = nd {
            prop_assert!(nd.d[0] > 0.0 && nd.d[1] > 0.0);
            prop_assert!((nd.d[0].hypot(nd.d[1]) - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(Config { cases: 12, failure_persistence: None, ..Config::default() })]

    #[test]
    fn gradient_is_rotation_equivariant(
        s in 0.0f64..TAU, t in 0.0f64..TAU, p in 0.3f64..2.8, l in 0.5f64..3.0,
    ) {
        let prov = ball();
        let base = standard_bubble(3).unwrap();
        let f = ReducedFunctional::new(&prov, &base).unwrap();
        let x1 = vec![0.4, 0.0, 0.0];
        let x2: Vec<f64> = unit(p, 1.0).iter().map(|v| 0.3 * v).collect();
        let pair = ConfigPair { big_lambda: [l, 1.3], xi: [x1.clone(), x2.clone()], a: [[0.0; 2]; 2] };
        let moved = ConfigPair { xi: [rotate(&x1, s, t), rotate(&x2, s, t)], ..pair.clone() };
        let g = f.grad_psi(&pair).unwrap().values;
        let h = f.grad_psi(&moved).unwrap().values;
        prop_assert!((f.psi(&pair).unwrap() - f.psi(&moved).unwrap()).abs() < 1e-10);
        prop_assert!((g[0] - h[0]).abs() < 1e-6 && (g[1] - h[1]).abs() < 1e-6);
        for i in 0..2 {
            let r = rotate(&g[2 + 3 * i..5 + 3 * i], s, t);
            for (u, v) in r.iter().zip(&h[2 + 3 * i..5 + 3 * i]) {
                prop_assert!((u - v).abs() < 1e-5, "{u} vs {v}");
            }
        }
    }
}
