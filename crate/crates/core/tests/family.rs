use approx::assert_relative_eq;
use proptest::prelude::*;
use proptest::test_runner::Config;
use towerlab::family::*;
use towerlab::fields::{build_tower, standard_bubble, BubbleSum, ScalarField, TowerConfig};

fn cfg(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    }
}

/// Givens product in chart order, built without the library.
fn rotation_oracle(n: usize, theta: &[f64]) -> Vec<Vec<f64>> {
    let mut planes = vec![(0, 1)];
    planes.extend((2..n).map(|l| (0, l)));
    planes.extend((2..n).map(|l| (1, l)));
    let mut r: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for (&(i, j), &t) in planes.iter().zip(theta) {
        // r <- r · G(i, j, t)
        for row in r.iter_mut() {
            let (a, b) = (row[i], row[j]);
            row[i] = a * t.cos() + b * t.sin();
            row[j] = -a * t.sin() + b * t.cos();
        }
    }
    r
}

fn apply(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..m.len()).map(|j| m.iter().map(|row| row[j]).collect()).collect()
}

/// `λ^{−ν}|η|^{2−n} Q(R(w − a|w|²)/|η|²)` with `w = (R⁻¹x − ξ)/λ`.
fn q_oracle(p: &BubbleParams, base: &dyn ScalarField, x: &[f64]) -> f64 {
    let n = x.len();
    let nu = (n as f64 - 2.0) / 2.0;
    let r = rotation_oracle(n, &p.theta.theta);
    let rinv = transpose(&r);
    let rx = apply(&rinv, x);
    let w: Vec<f64> = rx.iter().zip(&p.xi).map(|(a, b)| (a - b) / p.lambda).collect();
    let mut a = vec![0.0; n];
    a[0] = p.a[0];
    a[1] = p.a[1];
    let w2: f64 = w.iter().map(|v| v * v).sum();
    let aw: f64 = a.iter().zip(&w).map(|(u, v)| u * v).sum();
    let a2: f64 = a.iter().map(|v| v * v).sum();
    let eta2 = 1.0 - 2.0 * aw + a2 * w2;
    let y: Vec<f64> = w.iter().zip(&a).map(|(wi, ai)| (wi - ai * w2) / eta2).collect();
    p.lambda.powf(-nu) * eta2.powf(-nu) * base.value(&apply(&r, &y))
}

fn tower3() -> BubbleSum {
    build_tower(&TowerConfig::new(3, 8).unwrap()).unwrap().field
}

#[test]
fn quarter_turn_in_first_plane() {
    let mut c = RotationChart::identity(3);
    c.theta[0] = std::f64::consts::FRAC_PI_2;
    let r = rotation_matrix(3, &c).unwrap();
    let e = r * nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0]);
    assert!((e[0]).abs() < 1e-15 && (e[1] - 1.0).abs() < 1e-15 && e[2].abs() < 1e-15);
    assert_eq!(rotation_matrix(4, &RotationChart::identity(4)).unwrap(), nalgebra::DMatrix::identity(4, 4));
}

#[test]
fn eta_reference_values() {
    let e = eta(1.0, &[0.0; 3], &[0.5, 0.0], &[1.0, 0.0, 0.0]).unwrap();
    assert_eq!(e, vec![0.5, 0.0, 0.0]);
    let u = eta(0.7, &[0.1, 0.2, 0.3], &[0.0, 0.0], &[1.0, -1.0, 0.5]).unwrap();
    assert_relative_eq!(u.iter().map(|v| v * v).sum::<f64>(), 1.0, max_relative = 1e-15);
    assert!(eta(1.0, &[0.2; 3], &[0.1, 0.0], &[0.2; 3]).is_err());
}

#[test]
fn identity_parameters_reproduce_base() {
    let t = tower3();
    let id = BubbleParams::identity(3);
    for x in [[0.0, 0.0, 0.0], [0.9, 0.1, -0.2], [3.0, -2.0, 1.0]] {
        assert_relative_eq!(q_family(&id, &t, &x).unwrap(), t.value(&x), max_relative = 1e-14);
    }
}

#[test]
fn dilation_translation_of_bubble() {
    let u = standard_bubble(3).unwrap();
    let mut p = BubbleParams::identity(3);
    p.lambda = 0.3;
    p.xi = vec![0.2, -0.1, 0.05];
    for x in [[0.0, 0.0, 0.0], [0.2, -0.1, 0.05], [1.0, 1.0, -1.0]] {
        let y: Vec<f64> = x.iter().zip(&p.xi).map(|(a, b)| (a - b) / p.lambda).collect();
        let expected = p.lambda.powf(-0.5) * u.value(&y);
        assert_relative_eq!(q_family(&p, &u, &x).unwrap(), expected, max_relative = 1e-13);
    }
}

/// Seven-point Laplacian with step `h`.
fn fd_laplacian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> f64 {
    let f0 = f(x);
    let mut acc = 0.0;
    for j in 0..x.len() {
        let mut p = x.to_vec();
        let mut m = x.to_vec();
        p[j] += h;
        m[j] -= h;
        acc += f(&p) + f(&m) - 2.0 * f0;
    }
    acc / (h * h)
}

#[test]
fn kelvin_parameter_keeps_the_bubble_a_solution() {
    let u = standard_bubble(3).unwrap();
    let mut p = BubbleParams::identity(3);
    p.a = [0.3, 0.0];
    let q = |x: &[f64]| q_family(&p, &u, x).unwrap();
    let mut rng_state = 0x2545f4914f6cdd1du64;
    let mut next = || {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..20 {
        let x = [next(), next(), next()];
        let v = q(&x);
        let r = fd_laplacian(&q, &x, 1e-3) + v.abs().powi(4) * v;
        assert!(r.abs() < 1e-4, "residual {r} at {x:?}");
    }
}

#[test]
fn tower_member_transports_base_residual() {
    // The family acts conformally, so the residual of Q_A is the transported
    // residual of the base: Δ(Q_A) + |Q_A|^4 Q_A = λ^{-5/2}D^{-5/2}(ΔQ + |Q|^4Q)(Y).
    let t = tower3();
    let mut p = BubbleParams::identity(3);
    p.a = [0.3, 0.0];
    let q = |x: &[f64]| q_family(&p, &t, x).unwrap();
    let res = |x: &[f64]| {
        let v = t.value(x);
        fd_laplacian(&|y| t.value(y), x, 1e-3) + v.abs().powi(4) * v
    };
    for x in [[0.4, 0.3, -0.2], [-0.6, 0.2, 0.5], [0.1, -0.7, 0.3]] {
        let w2: f64 = x.iter().map(|v| v * v).sum();
        let d = 1.0 - 2.0 * 0.3 * x[0] + 0.09 * w2;
        let y = [(x[0] - 0.3 * w2) / d, x[1] / d, x[2] / d];
        let lhs = fd_laplacian(&q, &x, 1e-3) + q(&x).abs().powi(4) * q(&x);
        let rhs = d.powf(-2.5) * res(&y);
        assert!((lhs - rhs).abs() < 1e-3 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
}

fn params_strategy(n: usize) -> impl Strategy<Value = BubbleParams> {
    (
        0.2f64..3.0,
        proptest::collection::vec(-0.5f64..0.5, n),
        -0.45f64..0.45,
        -0.45f64..0.45,
        proptest::collection::vec(-3.2f64..3.2, 2 * n - 3),
    )
        .prop_map(|(lambda, xi, a1, a2, theta)| BubbleParams {
            lambda,
            xi,
            a: [a1, a2],
            theta: RotationChart { theta },
        })
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn rotations_are_orthogonal(theta in proptest::collection::vec(-3.2f64..3.2, 5)) {
        let r = rotation_matrix(4, &RotationChart { theta: theta.clone() }).unwrap();
        let e = r.transpose() * &r - nalgebra::DMatrix::identity(4, 4);
        prop_assert!(e.amax() < 1e-14);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        let o = rotation_oracle(4, &theta);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((r[(i, j)] - o[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eta_norm_identity(l in 0.1f64..3.0, xi in proptest::collection::vec(-1.0f64..1.0, 3),
                         a in proptest::collection::vec(-0.5f64..0.5, 2), x in proptest::collection::vec(-2.0f64..2.0, 3)) {
        prop_assume!(xi.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum::<f64>() > 1e-6);
        let e = eta(l, &xi, &a, &x).unwrap();
        let w: Vec<f64> = x.iter().zip(&xi).map(|(p, q)| (p - q) / l).collect();
        let aw = a[0] * w[0] + a[1] * w[1];
        let rhs = 1.0 - 2.0 * aw
            + (a[0] * a[0] + a[1] * a[1]) * w.iter().map(|v| v * v).sum::<f64>();
        let lhs: f64 = e.iter().map(|v| v * v).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn family_matches_direct_definition(p in params_strategy(3), x in proptest::collection::vec(-1.5f64..1.5, 3)) {
        let t = tower3();
        let lib = q_family(&p, &t, &x).unwrap();
        let direct = q_oracle(&p, &t, &x);
        prop_assert!((lib - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{} vs {}", lib, direct);
    }

    #[test]
    fn closed_form_matches_pointwise_form(p in params_strategy(4), x in proptest::collection::vec(-1.5f64..1.5, 4)) {
        let t = build_tower(&TowerConfig::new(4, 8).unwrap()).unwrap().field;
        let direct = q_family(&p, &t, &x).unwrap();
        let closed = family_bubble_sum(&p, &t).unwrap().value(&x);
        prop_assert!((closed - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn rotation_is_carried_by_hatted_parameters(p in params_strategy(3), x in proptest::collection::vec(-1.5f64..1.5, 3)) {
        // With only θ12 active, â stays in the (x1, x2) plane and the rotated
        // member equals the unrotated one at (ξ̂, â).
        let t = tower3();
        let mut p = p;
        p.theta.theta[1] = 0.0;
        p.theta.theta[2] = 0.0;
        let ah = p.a_hat().unwrap();
        let mut flat = BubbleParams::identity(3);
        flat.lambda = p.lambda;
        flat.xi = p.xi_hat().unwrap();
        flat.a = [ah[0], ah[1]];
        let lib = q_family(&p, &t, &x).unwrap();
        let v = q_family(&flat, &t, &x).unwrap();
        prop_assert!((lib - v).abs() <= 1e-10 * v.abs().max(1.0));
    }

    #[test]
    fn theta_family_is_pre_rotation(p in params_strategy(3), x in proptest::collection::vec(-1.5f64..1.5, 3)) {
        let t = tower3();
        let r = p.rotation().unwrap();
        let rx = &r * nalgebra::DVector::from_vec(x.clone());
        let lhs = theta_family(&p, &t, &x).unwrap();
        let rhs = q_family(&p, &t, rx.as_slice()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }
}
