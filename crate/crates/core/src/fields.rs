//! Scalar fields on `R^n`, the standard bubble and the sign-changing tower.

use crate::error::{Error, Result};
use crate::par;
use crate::quadrature::{QuadratureLevel, SpaceRule, MAX_DIM};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// An evaluable map `R^n → R` with an optional analytic gradient.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `out` and returns `true` if available.
    fn gradient(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Symmetry hint used to pick quadrature rules.
    fn symmetry(&self) -> Symmetry {
        Symmetry::None
    }

    /// `|x|^{2−n} f(x/|x|²) = f(x)` holds exactly.
    fn kelvin_invariant(&self) -> bool {
        false
    }
}

/// Symmetry information a field may advertise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symmetry {
    None,
    /// Invariant under rotation by `2π/k` in the `(x1, x2)`-plane, even in
    /// `x_2..x_n`, depending on `x_3..x_n` through their norm. `k = 0` is a
    /// radial field. `scale` is the core scale and `mu` the relative spike scale.
    Tower { k: usize, mu: f64, scale: f64 },
}

/// A field given by a closure.
pub struct FnField<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnField<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnField { n, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// `γ = [n(n−2)/4]^{(n−2)/4}`.
pub fn bubble_gamma(n: usize) -> f64 {
    let nf = n as f64;
    (nf * (nf - 2.0) / 4.0).powf((nf - 2.0) / 4.0)
}

/// Critical exponent `p = (n+2)/(n−2)`.
pub fn critical_exponent(n: usize) -> f64 {
    (n as f64 + 2.0) / (n as f64 - 2.0)
}

/// `b_n = 1/((n−2)|S^{n−1}|)`.
pub fn b_n(n: usize) -> f64 {
    1.0 / ((n as f64 - 2.0) * crate::quadrature::sphere_area(n - 1))
}

pub(crate) fn check_dim(n: usize) -> Result<()> {
    if (3..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(n))
    }
}

/// `q^{−(n−2)/2}` without `powf` for the supported dimensions.
#[inline]
pub(crate) fn inv_pow_nu(q: f64, n: usize) -> f64 {
    match n {
        3 => 1.0 / q.sqrt(),
        4 => 1.0 / q,
        5 => 1.0 / (q * q.sqrt()),
        _ => q.powf(-(n as f64 - 2.0) / 2.0),
    }
}

/// `|u|^{p−1} u`.
#[inline]
pub fn signed_pow_p(u: f64, n: usize) -> f64 {
    match n {
        3 => {
            let u2 = u * u;
            u2 * u2 * u
        }
        4 => u * u * u,
        _ => u.abs().powf(critical_exponent(n) - 1.0) * u,
    }
}

/// `|u|^{p+1}`.
#[inline]
pub fn abs_pow_p1(u: f64, n: usize) -> f64 {
    match n {
        3 => {
            let u2 = u * u;
            u2 * u2 * u2
        }
        4 => {
            let u2 = u * u;
            u2 * u2
        }
        _ => u.abs().powf(critical_exponent(n) + 1.0),
    }
}

/// One term `w·B(x; c, s)` of a [`BubbleSum`], with
/// `B(x; c, s) = s^{−(n−2)/2} U((x−c)/s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub center: Vec<f64>,
    pub scale: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
struct BubbleTerm {
    center: [f64; MAX_DIM],
    s2: f64,
    coef: f64,
    weight: f64,
}

/// A finite signed sum of bubbles. Every bubble solves `−ΔB = B^p`, so the
/// Laplacian of the sum is known in closed form.
#[derive(Debug, Clone)]
pub struct BubbleSum {
    n: usize,
    bubbles: Vec<Bubble>,
    terms: Vec<BubbleTerm>,
    symmetry: Symmetry,
    kelvin: bool,
}

impl BubbleSum {
    pub fn new(n: usize, bubbles: Vec<Bubble>) -> Result<Self> {
        check_dim(n)?;
        let gamma = bubble_gamma(n);
        let nu = (n as f64 - 2.0) / 2.0;
        let mut terms = Vec::with_capacity(bubbles.len());
        for b in &bubbles {
            if b.center.len() != n || !(b.scale > 0.0) {
                return Err(Error::InvalidInput("bubble centre or scale".into()));
            }
            let mut c = [0.0; MAX_DIM];
            c[..n].copy_from_slice(&b.center);
            terms.push(BubbleTerm {
                center: c,
                s2: b.scale * b.scale,
                coef: gamma * (2.0 * b.scale).powf(nu),
                weight: b.weight,
            });
        }
        let kelvin = bubbles.iter().all(|b| {
            let c2: f64 = b.center.iter().map(|v| v * v).sum();
            (c2 + b.scale * b.scale - 1.0).abs() < 1e-14
        });
        Ok(BubbleSum {
            n,
            bubbles,
            terms,
            symmetry: Symmetry::None,
            kelvin,
        })
    }

    pub fn with_symmetry(mut self, s: Symmetry) -> Self {
        self.symmetry = s;
        self
    }

    pub fn bubbles(&self) -> &[Bubble] {
        &self.bubbles
    }

    /// Unsigned value of bubble `i` at `x`.
    #[inline]
    fn term(&self, t: &BubbleTerm, x: &[f64]) -> (f64, f64) {
        let mut d2 = 0.0;
        for j in 0..self.n {
            let d = x[j] - t.center[j];
            d2 += d * d;
        }
        let q = t.s2 + d2;
        (t.coef * inv_pow_nu(q, self.n), q)
    }

    /// `−Δ` of the field: `Σ w_i B_i^p`.
    pub fn source(&self, x: &[f64]) -> f64 {
        let p = critical_exponent(self.n);
        self.terms
            .iter()
            .map(|t| {
                let (b, _) = self.term(t, x);
                t.weight * pow_p_pos(b, self.n, p)
            })
            .sum()
    }

    /// Field value and source `−Δu` together.
    pub fn value_and_source(&self, x: &[f64]) -> (f64, f64) {
        let p = critical_exponent(self.n);
        let mut u = 0.0;
        let mut s = 0.0;
        for t in &self.terms {
            let (b, _) = self.term(t, x);
            u += t.weight * b;
            s += t.weight * pow_p_pos(b, self.n, p);
        }
        (u, s)
    }

    /// The field `λ^{−(n−2)/2} u((x − ξ)/λ)`, again a bubble sum.
    pub fn dilate_translate(&self, lambda: f64, xi: &[f64]) -> Result<BubbleSum> {
        let bubbles = self
            .bubbles
            .iter()
            .map(|b| Bubble {
                center: b.center.iter().zip(xi).map(|(c, s)| s + lambda * c).collect(),
                scale: lambda * b.scale,
                weight: b.weight,
            })
            .collect();
        let sym = match self.symmetry {
            Symmetry::Tower { k, mu, scale } if xi.iter().all(|v| *v == 0.0) => Symmetry::Tower {
                k,
                mu,
                scale: scale * lambda,
            },
            _ => Symmetry::None,
        };
        Ok(BubbleSum::new(self.n, bubbles)?.with_symmetry(sym))
    }

    /// `Δu + |u|^{p−1}u` evaluated analytically.
    pub fn equation_residual(&self, x: &[f64]) -> f64 {
        let (u, s) = self.value_and_source(x);
        -s + signed_pow_p(u, self.n)
    }
}

#[inline]
fn pow_p_pos(b: f64, n: usize, p: f64) -> f64 {
    match n {
        3 => {
            let b2 = b * b;
            b2 * b2 * b
        }
        4 => b * b * b,
        _ => b.powf(p),
    }
}

impl ScalarField for BubbleSum {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.weight * self.term(t, x).0).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        out[..self.n].iter_mut().for_each(|v| *v = 0.0);
        let c = -(self.n as f64 - 2.0);
        for t in &self.terms {
            let (b, q) = self.term(t, x);
            let f = c * t.weight * b / q;
            for j in 0..self.n {
                out[j] += f * (x[j] - t.center[j]);
            }
        }
        true
    }

    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    fn kelvin_invariant(&self) -> bool {
        self.kelvin
    }
}

/// The standard bubble `U(x) = γ (2/(1+|x|²))^{(n−2)/2}`.
pub fn standard_bubble(n: usize) -> Result<BubbleSum> {
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    Ok(BubbleSum::new(
        n,
        vec![Bubble {
            center: vec![0.0; n],
            scale: 1.0,
            weight: 1.0,
        }],
    )?
    .with_symmetry(Symmetry::Tower {
        k: 0,
        mu: 1.0,
        scale: 1.0,
    }))
}

/// Dimension and number of negative spikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub n: usize,
    pub k: usize,
}

impl TowerConfig {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        let c = TowerConfig { n, k };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.n) {
            return Err(Error::UnsupportedDimension(self.n));
        }
        if self.k < 8 {
            return Err(Error::InvalidInput(format!("k = {} must be at least 8", self.k)));
        }
        Ok(())
    }
}

/// `Σ_{l=2}^{k} (1 − cos θ_l)^{−(n−2)/2}` with `θ_l = 2π(l−1)/k`.
pub fn spike_sum(n: usize, k: usize) -> f64 {
    let e = -(n as f64 - 2.0) / 2.0;
    let terms: Vec<f64> = (1..k)
        .map(|j| (1.0 - (2.0 * PI * j as f64 / k as f64).cos()).powf(e))
        .collect();
    par::pairwise_sum(&terms)
}

/// The spike scale `μ` solving `spike_sum · μ^{(n−2)/2} = 1`.
pub fn solve_mu(config: &TowerConfig) -> Result<f64> {
    config.validate()?;
    let n = config.n as f64;
    Ok(spike_sum(config.n, config.k).powf(-2.0 / (n - 2.0)))
}

/// The tower `U* = U − Σ_j U_j` with its parameters.
#[derive(Debug, Clone)]
pub struct TowerProfile {
    pub config: TowerConfig,
    pub mu: f64,
    pub spikes: Vec<Vec<f64>>,
    pub gamma: f64,
    pub field: BubbleSum,
}

pub fn build_tower(config: &TowerConfig) -> Result<TowerProfile> {
    let mu = solve_mu(config)?;
    let (n, k) = (config.n, config.k);
    let rho = (1.0 - mu * mu).sqrt();
    let spikes: Vec<Vec<f64>> = (0..k)
        .map(|l| {
            let t = 2.0 * PI * l as f64 / k as f64;
            let mut v = vec![0.0; n];
            v[0] = rho * t.cos();
            v[1] = rho * t.sin();
            v
        })
        .collect();
    let mut bubbles = vec![Bubble {
        center: vec![0.0; n],
        scale: 1.0,
        weight: 1.0,
    }];
    bubbles.extend(spikes.iter().map(|c| Bubble {
        center: c.clone(),
        scale: mu,
        weight: -1.0,
    }));
    let field = BubbleSum::new(n, bubbles)?.with_symmetry(Symmetry::Tower { k, mu, scale: 1.0 });
    Ok(TowerProfile {
        config: *config,
        mu,
        spikes,
        gamma: bubble_gamma(n),
        field,
    })
}

impl TowerProfile {
    /// Range of `U*` over a sample of the ball `|x| ≤ radius`.
    pub fn range_on_ball(&self, radius: f64) -> (f64, f64) {
        let n = self.config.n;
        let pts = sample_ball(n, radius, 6, 24);
        let vals = par::map(pts.len(), |i| self.field.value(&pts[i]));
        vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }
}

/// Deterministic polar sample of a ball.
fn sample_ball(n: usize, radius: f64, shells: usize, az: usize) -> Vec<Vec<f64>> {
    let dirs = direction_set(n, 5, az, 2);
    let mut pts = vec![vec![0.0; n]];
    for s in 1..=shells {
        let r = radius * s as f64 / shells as f64;
        pts.extend(dirs.iter().map(|d| d.iter().map(|v| r * v).collect()));
    }
    pts
}

/// Unit directions built from `psi_count` polar angles in `[−π/2, π/2]`,
/// `phi_count` azimuths and a small set on the trailing sphere.
pub fn direction_set(n: usize, psi_count: usize, phi_count: usize, sphere: usize) -> Vec<Vec<f64>> {
    let omegas: Vec<[f64; 3]> = match n - 3 {
        0 => vec![[1.0, 0.0, 0.0]],
        d => crate::quadrature::SphereRule::new(d, sphere).points,
    };
    let mut out = Vec::new();
    for i in 0..psi_count {
        let psi = if psi_count == 1 {
            0.0
        } else {
            -0.5 * PI + PI * i as f64 / (psi_count - 1) as f64
        };
        let (sp, cp) = psi.sin_cos();
        for j in 0..phi_count {
            let phi = 2.0 * PI * j as f64 / phi_count as f64;
            let (sf, cf) = phi.sin_cos();
            for om in &omegas {
                let mut v = vec![0.0; n];
                v[0] = cp * cf;
                v[1] = cp * sf;
                for l in 2..n {
                    v[l] = sp * om[l - 2];
                }
                out.push(v);
            }
        }
    }
    out
}

/// The error term `E = ΔU* + |U*|^{p−1}U*` of a bubble sum.
pub struct TowerResidual {
    field: BubbleSum,
}

impl ScalarField for TowerResidual {
    fn dim(&self) -> usize {
        self.field.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.field.equation_residual(x)
    }
    fn symmetry(&self) -> Symmetry {
        self.field.symmetry
    }
}

pub fn tower_residual(field: &BubbleSum) -> TowerResidual {
    TowerResidual {
        field: field.clone(),
    }
}

/// Flavours of the whole-space weighted norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormFlavor {
    /// `sup (1+|y|^{n−2}) |φ(y)|` over the fixed sample grid.
    Sup,
    /// `‖(1+|y|)^{n+2−2n/q} h‖_{L^q}`.
    Lq,
}

/// Picks the whole-space rule matching a field's symmetry hint.
pub fn rule_for(field: &dyn ScalarField, level: QuadratureLevel) -> SpaceRule {
    let n = field.dim();
    match field.symmetry() {
        Symmetry::Tower { k, mu, scale } => SpaceRule::tower_symmetric(n, k, mu, scale, level),
        Symmetry::None => SpaceRule::centered(n, &[0.0; MAX_DIM], 0.0, 8, level),
    }
}

pub fn weighted_norm(field: &dyn ScalarField, flavor: NormFlavor, q: f64) -> Result<f64> {
    weighted_norm_with(field, flavor, q, QuadratureLevel::default())
}

pub fn weighted_norm_with(
    field: &dyn ScalarField,
    flavor: NormFlavor,
    q: f64,
    level: QuadratureLevel,
) -> Result<f64> {
    let n = field.dim();
    let nf = n as f64;
    match flavor {
        NormFlavor::Lq => {
            if !(q > nf / 2.0 && q < nf) {
                return Err(Error::InvalidInput(format!("q = {q} outside (n/2, n)")));
            }
            let e = (nf + 2.0 - 2.0 * nf / q) * q;
            let rule = rule_for(field, level);
            let total = rule.integrate(|x| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (1.0 + r).powf(e) * field.value(x).abs().powf(q)
            });
            Ok(total.powf(1.0 / q))
        }
        NormFlavor::Sup => {
            let pts = sup_sample_points(field);
            let e = n as i32 - 2;
            Ok(par::max(pts.len(), |i| {
                let x = &pts[i];
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (1.0 + r.powi(e)) * field.value(x).abs()
            })
            .max(0.0))
        }
    }
}

/// Logarithmic shells `|y| ∈ [1e−3, 1e3]` (200 of them) times a fixed
/// direction set, plus spike-centred shells for tower-symmetric fields.
pub fn sup_sample_points(field: &dyn ScalarField) -> Vec<Vec<f64>> {
    let n = field.dim();
    let dirs = direction_set(n, 13, 64, 2);
    let mut pts = vec![vec![0.0; n]];
    for s in 0..200 {
        let r = 10f64.powf(-3.0 + 6.0 * s as f64 / 199.0);
        pts.extend(dirs.iter().map(|d| d.iter().map(|v| r * v).collect::<Vec<_>>()));
    }
    if let Symmetry::Tower { k, mu, scale } = field.symmetry() {
        if k > 0 {
            let local = direction_set(n, 7, 16, 1);
            let rho = scale * (1.0 - mu * mu).sqrt();
            for l in 0..k {
                let t = 2.0 * PI * l as f64 / k as f64;
                let mut c = vec![0.0; n];
                c[0] = rho * t.cos();
                c[1] = rho * t.sin();
                pts.push(c.clone());
                for s in 0..40 {
                    let r = scale * mu * 10f64.powf(-2.0 + 3.0 * s as f64 / 39.0);
                    for d in &local {
                        pts.push(c.iter().zip(d).map(|(a, b)| a + r * b).collect());
                    }
                }
            }
        }
    }
    pts
}

/// `|u(x) − b_n ∫ |z−x|^{2−n} (−Δu)(z) dz|` for a bubble sum.
pub fn green_representation_check(field: &BubbleSum, x: &[f64]) -> f64 {
    green_representation_check_with(field, x, QuadratureLevel::default(), 12)
}

pub fn green_representation_check_with(
    field: &BubbleSum,
    x: &[f64],
    level: QuadratureLevel,
    panels: usize,
) -> f64 {
    let n = field.dim();
    let bn = b_n(n);
    let at_origin = x.iter().all(|v| *v == 0.0);
    let rule = match (at_origin, field.symmetry) {
        (true, Symmetry::Tower { k, mu, scale }) => SpaceRule::tower_symmetric(n, k, mu, scale, level),
        _ => SpaceRule::centered(n, x, x[1].atan2(x[0]), panels, level),
    };
    let potential = rule.integrate(|z| {
        let d2: f64 = z.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        field.source(z) * inv_pow_nu(d2, n)
    });
    (field.value(x) - bn * potential).abs()
}
