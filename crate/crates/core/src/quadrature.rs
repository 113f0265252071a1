//! Composite Gauss–Legendre rules and whole-space product rules.
//!
//! Whole-space rules use the coordinates
//! `x = c + s·Rot(frame)·ρ(cosψ cosφ, cosψ sinφ, sinψ·ω)` with `ω` on the
//! unit sphere of the trailing `n−2` coordinates, so that
//! `dx = ρ^{n−1} cosψ sin^{n−3}ψ dρ dψ dφ dω`.
//! The radial factor is split at `ρ = 1`; the outer half is mapped by
//! `t = 1/ρ`, which mirrors the inner half under inversion.

use crate::par;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest supported space dimension.
pub const MAX_DIM: usize = 5;

/// A one-dimensional rule: nodes and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    /// Gauss–Legendre rule with `m` nodes on `[-1, 1]`.
    pub fn gauss_legendre(m: usize) -> Rule1D {
        assert!(m >= 1);
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..m.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(m, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        Rule1D { nodes, weights }
    }

    /// Gauss–Legendre rule mapped to `[a, b]`.
    pub fn interval(a: f64, b: f64, m: usize) -> Rule1D {
        let gl = Rule1D::gauss_legendre(m);
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        Rule1D {
            nodes: gl.nodes.iter().map(|t| c + h * t).collect(),
            weights: gl.weights.iter().map(|w| h * w).collect(),
        }
    }

    /// `panels` equal panels of `m` nodes on `[a, b]`.
    pub fn uniform(a: f64, b: f64, panels: usize, m: usize) -> Rule1D {
        let h = (b - a) / panels as f64;
        Rule1D::concat(
            (0..panels)
                .map(|i| Rule1D::interval(a + i as f64 * h, a + (i + 1) as f64 * h, m))
                .collect(),
        )
    }

    /// Panels whose widths halve toward one end until below `min_width`.
    pub fn graded(a: f64, b: f64, toward_b: bool, min_width: f64, m: usize) -> Rule1D {
        let len = b - a;
        let mut d = vec![len];
        while *d.last().unwrap() > min_width && d.len() < 200 {
            let last = *d.last().unwrap();
            d.push(0.5 * last);
        }
        d.push(0.0);
        let mut parts = Vec::with_capacity(d.len());
        for w in d.windows(2) {
            let (far, near) = (w[0], w[1]);
            let (lo, hi) = if toward_b {
                (b - far, b - near)
            } else {
                (a + near, a + far)
            };
            parts.push(Rule1D::interval(lo, hi, m));
        }
        Rule1D::concat(parts)
    }

    /// Panels graded toward the midpoint from both sides.
    pub fn graded_centre(a: f64, b: f64, min_width: f64, m: usize) -> Rule1D {
        let c = 0.5 * (a + b);
        Rule1D::concat(vec![
            Rule1D::graded(a, c, true, min_width, m),
            Rule1D::graded(c, b, false, min_width, m),
        ])
    }

    /// Panels `[a, 2a], [2a, 4a], …` up to `b`, each with `m` nodes.
    pub fn geometric(a: f64, b: f64, m: usize) -> Rule1D {
        assert!(a > 0.0 && b > a);
        let mut parts = Vec::new();
        let mut lo = a;
        while lo < b {
            let hi = (2.0 * lo).min(b);
            let hi = if b - hi < 0.25 * (hi - lo) { b } else { hi };
            parts.push(Rule1D::interval(lo, hi, m));
            lo = hi;
        }
        Rule1D::concat(parts)
    }

    pub fn concat(parts: Vec<Rule1D>) -> Rule1D {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in parts {
            nodes.extend(p.nodes);
            weights.extend(p.weights);
        }
        Rule1D { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .collect();
        par::pairwise_sum(&terms)
    }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Surface area of the unit sphere `S^d ⊂ R^{d+1}`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 1.0) * sphere_area(d - 2),
    }
}

/// Quadrature on `S^{d}` for `d ∈ {0, 1, 2}`, symmetric under every
/// coordinate reflection.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// `resolution` controls the number of points for `d ≥ 1`.
    pub fn new(d: usize, resolution: usize) -> SphereRule {
        match d {
            0 => SphereRule {
                points: vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
                weights: vec![1.0, 1.0],
            },
            1 => {
                let m = 2 * resolution.max(2);
                let points = (0..m)
                    .map(|j| {
                        let t = (j as f64 + 0.5) * 2.0 * PI / m as f64;
                        [t.cos(), t.sin(), 0.0]
                    })
                    .collect();
                SphereRule {
                    points,
                    weights: vec![2.0 * PI / m as f64; m],
                }
            }
            2 => {
                let gl = Rule1D::gauss_legendre(resolution.max(2));
                let m = 2 * resolution.max(2);
                let mut points = Vec::new();
                let mut weights = Vec::new();
                for (z, wz) in gl.nodes.iter().zip(&gl.weights) {
                    let s = (1.0 - z * z).sqrt();
                    for j in 0..m {
                        let t = (j as f64 + 0.5) * 2.0 * PI / m as f64;
                        points.push([s * t.cos(), s * t.sin(), *z]);
                        weights.push(wz * 2.0 * PI / m as f64);
                    }
                }
                SphereRule { points, weights }
            }
            _ => panic!("sphere rules are provided for S^0, S^1 and S^2 only"),
        }
    }

    /// A single representative point carrying the full sphere area; exact for
    /// integrands that depend on `ω` only through symmetric functions.
    pub fn representative(d: usize) -> SphereRule {
        SphereRule {
            points: vec![[1.0, 0.0, 0.0]],
            weights: vec![sphere_area(d)],
        }
    }
}

/// Accuracy controls for the whole-space rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureLevel {
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Smallest panel width relative to the spike scale.
    pub refine: f64,
    /// Resolution of the rule on the trailing sphere.
    pub sphere: usize,
}

impl Default for QuadratureLevel {
    fn default() -> Self {
        QuadratureLevel {
            order: 8,
            refine: 1.0 / 40.0,
            sphere: 4,
        }
    }
}

impl QuadratureLevel {
    pub fn coarse() -> Self {
        QuadratureLevel {
            order: 6,
            refine: 1.0 / 8.0,
            sphere: 4,
        }
    }
}

/// Tensor-product rule on `R^n` (or a ball) in the polar coordinates above.
#[derive(Debug, Clone)]
pub struct SpaceRule {
    n: usize,
    center: [f64; MAX_DIM],
    frame: (f64, f64),
    scale: f64,
    /// `(ρ, weight)` with the `ρ^{n−1}` Jacobian included.
    radial: Vec<(f64, f64)>,
    /// `(cosψ, sinψ, weight)` with `cosψ sin^{n−3}ψ` included.
    psi: Vec<(f64, f64, f64)>,
    /// `(cosφ, sinφ, weight)`.
    phi: Vec<(f64, f64, f64)>,
    omega: SphereRule,
    multiplicity: f64,
}

fn radial_inner(rule: &Rule1D, n: usize) -> Vec<(f64, f64)> {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(r, w)| (*r, w * r.powi(n as i32 - 1)))
        .collect()
}

/// Radial nodes on `(1, ∞)` through `t = 1/ρ`, `t ∈ (0, 1)`.
fn radial_inverted(rule: &Rule1D, n: usize) -> Vec<(f64, f64)> {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(t, w)| (1.0 / t, w * t.powi(-(n as i32) - 1)))
        .collect()
}

fn psi_list(rule: &Rule1D, n: usize) -> Vec<(f64, f64, f64)> {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| {
            let (s, c) = p.sin_cos();
            (c, s, w * c * s.powi(n as i32 - 3))
        })
        .collect()
}

fn phi_list(rule: &Rule1D) -> Vec<(f64, f64, f64)> {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| {
            let (s, c) = p.sin_cos();
            (c, s, *w)
        })
        .collect()
}

impl SpaceRule {
    /// Rule for integrands sharing the tower symmetry (rotation by `2π/k`,
    /// evenness in `x_2..x_n`, dependence on the trailing coordinates through
    /// their norm only). `k = 0` means a radial profile. `mu` and `scale`
    /// are the spike and core scales.
    pub fn tower_symmetric(n: usize, k: usize, mu: f64, scale: f64, level: QuadratureLevel) -> Self {
        let m = level.order;
        let minw = if k == 0 { 0.125 } else { mu * level.refine };
        let r = Rule1D::graded(0.0, 1.0, true, minw, m);
        let mut radial = radial_inner(&r, n);
        radial.extend(radial_inverted(&r, n));
        let psi = psi_list(&Rule1D::graded(0.0, 0.5 * PI, false, minw.max(1e-12), m), n);
        let (phi_rule, mult) = if k == 0 {
            (Rule1D::uniform(0.0, PI, 2, m), 2.0)
        } else {
            (Rule1D::graded(0.0, PI / k as f64, false, minw, m), 2.0 * k as f64)
        };
        SpaceRule {
            n,
            center: [0.0; MAX_DIM],
            frame: (1.0, 0.0),
            scale,
            radial,
            psi,
            phi: phi_list(&phi_rule),
            omega: SphereRule::representative(n - 3),
            multiplicity: mult,
        }
    }

    /// Rule over all of `R^n` adapted to a tower centred at the origin but
    /// without assuming any symmetry of the integrand.
    pub fn tower_full(n: usize, k: usize, mu: f64, scale: f64, level: QuadratureLevel) -> Self {
        let m = level.order;
        let minw = if k == 0 { 0.125 } else { mu * level.refine };
        let r = Rule1D::graded(0.0, 1.0, true, minw, m);
        let mut radial = radial_inner(&r, n);
        radial.extend(radial_inverted(&r, n));
        let psi = psi_list(&Rule1D::graded(0.0, 0.5 * PI, false, minw, m), n);
        let phi_rule = if k == 0 {
            Rule1D::uniform(-PI, PI, 8, m)
        } else {
            let w = PI / k as f64;
            Rule1D::concat(
                (0..k)
                    .map(|j| {
                        let c = 2.0 * PI * j as f64 / k as f64;
                        Rule1D::graded_centre(c - w, c + w, minw, m)
                    })
                    .collect(),
            )
        };
        SpaceRule {
            n,
            center: [0.0; MAX_DIM],
            frame: (1.0, 0.0),
            scale,
            radial,
            psi,
            phi: phi_list(&phi_rule),
            omega: SphereRule::new(n - 3, level.sphere),
            multiplicity: 1.0,
        }
    }

    /// General rule over `R^n` centred at `center`, with the polar frame
    /// rotated by `frame_angle` in the `(x1, x2)`-plane. `panels` sets the
    /// number of panels per coordinate.
    pub fn centered(n: usize, center: &[f64], frame_angle: f64, panels: usize, level: QuadratureLevel) -> Self {
        let m = level.order;
        let r = Rule1D::uniform(0.0, 1.0, panels, m);
        let mut radial = radial_inner(&r, n);
        radial.extend(radial_inverted(&r, n));
        let mut c = [0.0; MAX_DIM];
        c[..n].copy_from_slice(&center[..n]);
        SpaceRule {
            n,
            center: c,
            frame: (frame_angle.cos(), frame_angle.sin()),
            scale: 1.0,
            radial,
            psi: psi_list(&Rule1D::uniform(0.0, 0.5 * PI, panels, m), n),
            phi: phi_list(&Rule1D::uniform(-PI, PI, 2 * panels, m)),
            omega: SphereRule::new(n - 3, level.sphere),
            multiplicity: 1.0,
        }
    }

    /// Rule on the ball `|x − center| < radius` in local units `y = (x − c)/scale`,
    /// with explicit radial, polar and azimuthal node sets.
    #[allow(clippy::too_many_arguments)]
    pub fn local_ball(
        n: usize,
        center: &[f64],
        scale: f64,
        radial: &Rule1D,
        psi: &Rule1D,
        phi: &Rule1D,
        sphere_resolution: usize,
    ) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..n].copy_from_slice(&center[..n]);
        SpaceRule {
            n,
            center: c,
            frame: (1.0, 0.0),
            scale,
            radial: radial_inner(radial, n),
            psi: psi_list(psi, n),
            phi: phi_list(phi),
            omega: SphereRule::new(n - 3, sphere_resolution),
            multiplicity: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.radial.len() * self.psi.len() * self.phi.len() * self.omega.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes node `i` into `x[..n]` and returns its weight.
    #[inline]
    pub fn node(&self, i: usize, x: &mut [f64]) -> f64 {
        let no = self.omega.points.len();
        let nf = self.phi.len();
        let np = self.psi.len();
        let io = i % no;
        let rest = i / no;
        let ifi = rest % nf;
        let rest = rest / nf;
        let ip = rest % np;
        let ir = rest / np;
        let (rho, wr) = self.radial[ir];
        let (cp, sp, wp) = self.psi[ip];
        let (cf, sf, wf) = self.phi[ifi];
        let om = &self.omega.points[io];
        let wo = self.omega.weights[io];
        let s = self.scale * rho;
        let y1 = s * cp * cf;
        let y2 = s * cp * sf;
        let (fc, fs) = self.frame;
        x[0] = self.center[0] + fc * y1 - fs * y2;
        x[1] = self.center[1] + fs * y1 + fc * y2;
        for j in 2..self.n {
            x[j] = self.center[j] + s * sp * om[j - 2];
        }
        wr * wp * wf * wo * self.multiplicity * self.scale.powi(self.n as i32)
    }

    /// Deterministic integral of a scalar integrand.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        par::sum(self.len(), |i| {
            let mut x = [0.0; MAX_DIM];
            let w = self.node(i, &mut x);
            w * f(&x[..self.n])
        })
    }

    /// Deterministic integral of a vector integrand; `f(x, w, acc)` must add
    /// `w` times its values into `acc`.
    pub fn integrate_vec<F>(&self, width: usize, f: F) -> Vec<f64>
    where
        F: Fn(&[f64], f64, &mut [f64]) + Sync + Send,
    {
        par::sum_vec(self.len(), width, |i, acc| {
            let mut x = [0.0; MAX_DIM];
            let w = self.node(i, &mut x);
            f(&x[..self.n], w, acc)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let r = Rule1D::gauss_legendre(8);
        for d in 0..16 {
            let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
            assert!((r.integrate(|x| x.powi(d)) - exact).abs() < 1e-14, "degree {d}");
        }
    }

    #[test]
    fn graded_rule_covers_interval() {
        let r = Rule1D::graded(0.0, 1.0, true, 1e-3, 8);
        assert!((r.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!((r.integrate(|x| (1.0 - x).sqrt()) - 2.0 / 3.0).abs() < 1e-6);
        let g = Rule1D::geometric(1.0, 100.0, 8);
        assert!((g.integrate(|x| 1.0 / (x * x)) - 0.99).abs() < 1e-10);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
        for d in 0..3 {
            let s = SphereRule::new(d, 4);
            let total: f64 = s.weights.iter().sum();
            assert!((total - sphere_area(d)).abs() < 1e-12);
        }
    }

    #[test]
    fn algebraic_integrals_over_space() {
        // ∫ (1+|x|²)^{−n} dx = |S^{n−1}| B(n/2, n/2) / 2
        let beta = [PI / 8.0, 1.0 / 6.0, 3.0 * PI / 128.0];
        for n in 3..=5 {
            let exact = sphere_area(n - 1) * 0.5 * beta[n - 3];
            let lvl = QuadratureLevel::default();
            let c = [0.3, -0.2, 0.1, 0.0, 0.0];
            let f = |x: &[f64], c: &[f64]| {
                let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                (1.0 + d2).powi(-(n as i32))
            };
            let sym = SpaceRule::tower_symmetric(n, 0, 1.0, 1.0, lvl);
            let full = SpaceRule::tower_full(n, 8, 0.1, 1.0, lvl);
            let cen = SpaceRule::centered(n, &c, 0.4, 6, lvl);
            assert!((sym.integrate(|x| f(x, &[0.0; 5])) / exact - 1.0).abs() < 1e-9, "n={n}");
            assert!((full.integrate(|x| f(x, &[0.0; 5])) / exact - 1.0).abs() < 1e-9, "n={n}");
            assert!((cen.integrate(|x| f(x, &c)) / exact - 1.0).abs() < 1e-9, "n={n}");
        }
    }
}
