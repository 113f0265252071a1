//! The reduced functional
//!
//! `Ψ(Λ, ξ̂, â) = ½H₁₁Q₁²Λ₁² + ½H₂₂Q₂²Λ₂² − G₁₂Q₁Q₂Λ₁Λ₂ + log Λ₁Λ₂`,
//! `Q_i = U*(â_i)`, and a numerical min-max search for its critical points.
//!
//! The search works in hatted coordinates; the rotation parameter is always
//! the identity. Coordinates of the full parameter vector are laid out as
//! `[Λ₁, Λ₂, ξ̂₁ (n), ξ̂₂ (n), â₁ (2), â₂ (2)]`.

use crate::energy::{domain_energy, lambdas_for, ConstantSet, EnergyConfig};
use crate::error::{Error, Result};
use crate::family::{BubbleParams, RotationChart};
use crate::fields::{BubbleSum, ScalarField};
use crate::greens::{random_unit, sphere_pairs, GreensProvider, HoleReport};
use crate::grid::GridField;
use crate::par;
use crate::projection::{nonlinear_residual, project_bubble, ResidualReport};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Two parameter sets in hatted coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigPair {
    pub big_lambda: [f64; 2],
    pub xi: [Vec<f64>; 2],
    pub a: [[f64; 2]; 2],
}

impl ConfigPair {
    /// Antipodal pair `ξ̂₂ = −ξ̂₁`, `Λ₁ = Λ₂`, `â₂ = −â₁`.
    pub fn symmetric(big_lambda: f64, xi: Vec<f64>, a: [f64; 2]) -> Self {
        let xi2 = xi.iter().map(|v| -v).collect();
        ConfigPair {
            big_lambda: [big_lambda; 2],
            xi: [xi, xi2],
            a: [a, [-a[0], -a[1]]],
        }
    }

    /// Hatted values of two family parameter records with `Λ_i` attached.
    pub fn from_params(params: [&BubbleParams; 2], big_lambda: [f64; 2]) -> Result<Self> {
        let hat = |p: &BubbleParams| -> Result<(Vec<f64>, [f64; 2])> {
            let a = p.a_hat()?;
            if a[2..].iter().any(|v| v.abs() > 1e-12) {
                return Err(Error::InvalidInput("rotated a leaves the (x1, x2) plane".into()));
            }
            Ok((p.xi_hat()?, [a[0], a[1]]))
        };
        let (x1, a1) = hat(params[0])?;
        let (x2, a2) = hat(params[1])?;
        Ok(ConfigPair {
            big_lambda,
            xi: [x1, x2],
            a: [a1, a2],
        })
    }

    pub fn swapped(&self) -> Self {
        ConfigPair {
            big_lambda: [self.big_lambda[1], self.big_lambda[0]],
            xi: [self.xi[1].clone(), self.xi[0].clone()],
            a: [self.a[1], self.a[0]],
        }
    }

    pub fn dim(&self) -> usize {
        self.xi[0].len()
    }

    /// `â_i` embedded in `R^n`.
    pub fn a_full(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        v[0] = self.a[i][0];
        v[1] = self.a[i][1];
        v
    }

    /// Identity-rotation family records with scales `λ_i`.
    pub fn to_params(&self, lambdas: [f64; 2]) -> [BubbleParams; 2] {
        let n = self.dim();
        [0, 1].map(|i| BubbleParams {
            lambda: lambdas[i],
            xi: self.xi[i].clone(),
            a: self.a[i],
            theta: RotationChart::identity(n),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.big_lambda[0], self.big_lambda[1]];
        v.extend(&self.xi[0]);
        v.extend(&self.xi[1]);
        v.extend(self.a[0]);
        v.extend(self.a[1]);
        v
    }

    pub fn from_vec(n: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 2 * n + 6 {
            return Err(Error::InvalidInput(format!("expected {} coordinates, got {}", 2 * n + 6, v.len())));
        }
        let o = 2 + 2 * n;
        Ok(ConfigPair {
            big_lambda: [v[0], v[1]],
            xi: [v[2..2 + n].to_vec(), v[2 + n..o].to_vec()],
            a: [[v[o], v[o + 1]], [v[o + 2], v[o + 3]]],
        })
    }
}

/// The admissible set: `dist(ξ̂_i, ∂Ω) > δ`, `|ξ̂₁ − ξ̂₂| > δ`,
/// `δ < Λ_i < 1/δ`, `|â_i| ≤ a_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub delta: f64,
    pub a_max: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints { delta: 1e-3, a_max: 0.5 }
    }
}

impl Constraints {
    /// Returns the first violated clause.
    pub fn violation(&self, provider: &GreensProvider, pair: &ConfigPair) -> Option<String> {
        let d = self.delta;
        for i in 0..2 {
            if pair.xi[i].len() != provider.dim() {
                return Some(format!("xi_{} has the wrong dimension", i + 1));
            }
            let bd = provider.domain().boundary_distance(&pair.xi[i]);
            if !(bd > d) || !provider.domain().contains(&pair.xi[i]) {
                return Some(format!("dist(xi_{}, boundary) = {bd:.3e} must exceed {d:.3e}", i + 1));
            }
            let l = pair.big_lambda[i];
            if !(l > d && l < 1.0 / d) {
                return Some(format!("Lambda_{} = {l:.6e} must lie in ({d:.3e}, {:.3e})", i + 1, 1.0 / d));
            }
            let an = pair.a[i][0].hypot(pair.a[i][1]);
            if !(an <= self.a_max) {
                return Some(format!("|a_{}| = {an:.3e} must not exceed {:.3e}", i + 1, self.a_max));
            }
        }
        let sep = dist(&pair.xi[0], &pair.xi[1]);
        if !(sep > d) {
            return Some(format!("|xi_1 - xi_2| = {sep:.3e} must exceed {d:.3e}"));
        }
        None
    }

    pub fn check(&self, provider: &GreensProvider, pair: &ConfigPair) -> Result<()> {
        match self.violation(provider, pair) {
            Some(msg) => Err(Error::Constraint(msg)),
            None => Ok(()),
        }
    }
}

/// Green data and profile values entering `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairData {
    pub h: [f64; 2],
    pub g: f64,
    pub q: [f64; 2],
}

impl PairData {
    /// `φ = √(H₁₁H₂₂) − G₁₂`.
    pub fn phi(&self) -> f64 {
        (self.h[0] * self.h[1]).sqrt() - self.g
    }

    /// The matrix `M` with `Ψ = ½ΛᵀMΛ + log Λ₁Λ₂`.
    pub fn quadratic_form(&self) -> [[f64; 2]; 2] {
        let off = -self.g * self.q[0] * self.q[1];
        [[self.h[0] * self.q[0] * self.q[0], off], [off, self.h[1] * self.q[1] * self.q[1]]]
    }

    pub fn psi(&self, big: [f64; 2]) -> f64 {
        let m = self.quadratic_form();
        0.5 * (m[0][0] * big[0] * big[0] + m[1][1] * big[1] * big[1]) + m[0][1] * big[0] * big[1] + (big[0] * big[1]).ln()
    }
}

/// Stationary scales at fixed `(ξ̂, â)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryLambda {
    pub big_lambda: [f64; 2],
    pub psi: f64,
    /// `−1 + log(1/|φ|) − log(Q₁Q₂)`.
    pub psi_closed_form: f64,
    /// `−½ + ½ log(1/|φ|)`, the value without profile factors.
    pub psi_without_profile: f64,
    /// `Λ₁²` from `−√H₂₂/(√H₁₁ φ)`, the value without profile factors.
    pub lambda1_sq_without_profile: f64,
    pub phi: f64,
}

/// Negative direction of the quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeDirection {
    /// Unit vector with positive components.
    pub d: [f64; 2],
    pub eigenvalue: f64,
    pub determinant: f64,
    pub phi: f64,
}

/// Finite-difference gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub values: Vec<f64>,
    /// Coordinates differenced one-sidedly because a central step left the admissible set.
    pub one_sided: Vec<usize>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `Ψ` bound to a Green's function provider and a base profile.
#[derive(Debug, Clone, Copy)]
pub struct ReducedFunctional<'a> {
    pub provider: &'a GreensProvider,
    pub base: &'a BubbleSum,
    pub constraints: Constraints,
    /// Amplitude of a smooth synthetic perturbation added to `Ψ`.
    pub perturbation: f64,
}

impl<'a> ReducedFunctional<'a> {
    pub fn new(provider: &'a GreensProvider, base: &'a BubbleSum) -> Result<Self> {
        if provider.dim() != base.dim() {
            return Err(Error::InvalidInput("provider and base dimensions differ".into()));
        }
        Ok(ReducedFunctional {
            provider,
            base,
            constraints: Constraints::default(),
            perturbation: 0.0,
        })
    }

    pub fn with_constraints(mut self, c: Constraints) -> Self {
        self.constraints = c;
        self
    }

    pub fn with_perturbation(mut self, amplitude: f64) -> Self {
        self.perturbation = amplitude;
        self
    }

    pub fn dim(&self) -> usize {
        self.provider.dim()
    }

    /// `Q(â) = U*(â)`.
    pub fn profile(&self, a: [f64; 2]) -> f64 {
        let mut x = vec![0.0; self.dim()];
        x[0] = a[0];
        x[1] = a[1];
        self.base.value(&x)
    }

    pub fn green_data(&self, xi: &[Vec<f64>; 2]) -> Result<(f64, f64, f64)> {
        let h1 = self.provider.robin(&xi[0])?;
        let h2 = self.provider.robin(&xi[1])?;
        let g = self.provider.green(&xi[0], &xi[1])?;
        Ok((h1, h2, g))
    }

    pub fn pair_data(&self, xi: &[Vec<f64>; 2], a: &[[f64; 2]; 2]) -> Result<PairData> {
        let (h1, h2, g) = self.green_data(xi)?;
        Ok(PairData {
            h: [h1, h2],
            g,
            q: [self.profile(a[0]), self.profile(a[1])],
        })
    }

    fn synthetic(&self, pair: &ConfigPair) -> f64 {
        if self.perturbation == 0.0 {
            return 0.0;
        }
        let s: f64 = pair.xi[0].iter().chain(&pair.xi[1]).enumerate().map(|(i, v)| ((i + 1) as f64 * v).sin()).sum();
        let t = (pair.a[0][0] - pair.a[1][1]).cos() + (pair.big_lambda[0] / pair.big_lambda[1]).ln().sin();
        self.perturbation * (s + t)
    }

    /// `Ψ` at an admissible pair.
    pub fn psi(&self, pair: &ConfigPair) -> Result<f64> {
        self.constraints.check(self.provider, pair)?;
        self.psi_unchecked(pair)
    }

    fn psi_unchecked(&self, pair: &ConfigPair) -> Result<f64> {
        let data = self.pair_data(&pair.xi, &pair.a)?;
        Ok(data.psi(pair.big_lambda) + self.synthetic(pair))
    }

    fn admissible(&self, pair: &ConfigPair) -> bool {
        self.constraints.violation(self.provider, pair).is_none()
    }

    /// Central differences with step `10⁻⁵·max(|v|, 1)` (`10⁻⁵Λ` for scales);
    /// second-order one-sided differences where a central step is not admissible.
    pub fn grad_psi(&self, pair: &ConfigPair) -> Result<Gradient> {
        self.constraints.check(self.provider, pair)?;
        let n = self.dim();
        let v0 = pair.to_vec();
        let f0 = self.psi_unchecked(pair)?;
        let eval = |v: &[f64]| -> Option<Result<f64>> {
            let p = ConfigPair::from_vec(n, v).ok()?;
            if self.admissible(&p) {
                Some(self.psi_unchecked(&p))
            } else {
                None
            }
        };
        let results: Vec<Result<(f64, bool)>> = par::map(v0.len(), |j| {
            let h = if j < 2 { 1e-5 * v0[j] } else { 1e-5 * v0[j].abs().max(1.0) };
            let shifted = |s: f64| {
                let mut v = v0.clone();
                v[j] += s;
                v
            };
            match (eval(&shifted(h)), eval(&shifted(-h))) {
                (Some(fp), Some(fm)) => Ok(((fp? - fm?) / (2.0 * h), false)),
                (Some(fp), None) => {
                    let f2 = eval(&shifted(2.0 * h))
                        .ok_or_else(|| Error::Constraint(format!("coordinate {j} is pinned on both sides")))??;
                    Ok(((-3.0 * f0 + 4.0 * fp? - f2) / (2.0 * h), true))
                }
                (None, Some(fm)) => {
                    let f2 = eval(&shifted(-2.0 * h))
                        .ok_or_else(|| Error::Constraint(format!("coordinate {j} is pinned on both sides")))??;
                    Ok(((3.0 * f0 - 4.0 * fm? + f2) / (2.0 * h), true))
                }
                (None, None) => Err(Error::Constraint(format!("coordinate {j} is pinned on both sides"))),
            }
        });
        let mut values = Vec::with_capacity(v0.len());
        let mut one_sided = Vec::new();
        for (j, r) in results.into_iter().enumerate() {
            let (g, flag) = r?;
            values.push(g);
            if flag {
                one_sided.push(j);
            }
        }
        Ok(Gradient { values, one_sided })
    }

    /// Solves `∂_{Λ₁}Ψ = ∂_{Λ₂}Ψ = 0` in closed form.
    pub fn stationary_lambda(&self, xi: &[Vec<f64>; 2], a: &[[f64; 2]; 2]) -> Result<StationaryLambda> {
        let d = self.pair_data(xi, a)?;
        stationary_from(&d)
    }

    pub fn negative_direction(&self, xi: &[Vec<f64>; 2], a: &[[f64; 2]; 2]) -> Result<NegativeDirection> {
        negative_direction_from(&self.pair_data(xi, a)?)
    }

    /// Whether `ξ̂` lies in `W^l_ρ = {φ < −l} ∩ {||ξ̂_i| − σ| < ρ}`.
    pub fn in_w(&self, xi: &[Vec<f64>; 2], l: f64, rho: f64, sigma: f64) -> Result<bool> {
        if xi.iter().any(|x| (norm(x) - sigma).abs() >= rho) {
            return Ok(false);
        }
        Ok(self.provider.phi_pair(&xi[0], &xi[1])? < -l)
    }
}

fn stationary_from(d: &PairData) -> Result<StationaryLambda> {
    let phi = d.phi();
    if !(phi < 0.0) {
        return Err(Error::NoNegativeDirection(phi));
    }
    let qq = d.q[0] * d.q[1];
    if !(qq > 0.0) {
        return Err(Error::Constraint("Q(a_1)Q(a_2) must be positive for a stationary scale".into()));
    }
    let (s1, s2) = (d.h[0].sqrt(), d.h[1].sqrt());
    let x1 = (-s2 / (s1 * phi)).sqrt();
    let x2 = (-s1 / (s2 * phi)).sqrt();
    let big = [x1 / d.q[0].abs(), x2 / d.q[1].abs()];
    Ok(StationaryLambda {
        big_lambda: big,
        psi: d.psi(big),
        psi_closed_form: -1.0 - (-phi).ln() - qq.ln(),
        psi_without_profile: -0.5 - 0.5 * (-phi).ln(),
        lambda1_sq_without_profile: -s2 / (s1 * phi),
        phi,
    })
}

fn negative_direction_from(d: &PairData) -> Result<NegativeDirection> {
    let phi = d.phi();
    let m = d.quadratic_form();
    let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
    if !(phi < 0.0) || !(det < 0.0) {
        return Err(Error::NoNegativeDirection(phi));
    }
    let tr = m[0][0] + m[1][1];
    let disc = ((m[0][0] - m[1][1]).powi(2) + 4.0 * m[0][1] * m[0][1]).sqrt();
    let e = 0.5 * (tr - disc);
    // (M − e) v = 0 with v = (−m01, m00 − e), or the other row if degenerate.
    let (mut v0, mut v1) = (-m[0][1], m[0][0] - e);
    if v0.abs() + v1.abs() < 1e-300 {
        v0 = m[1][1] - e;
        v1 = -m[0][1];
    }
    if v0 * v1 <= 0.0 {
        return Err(Error::Constraint(
            "negative direction leaves the positive quadrant (Q(a_1)Q(a_2) < 0)".into(),
        ));
    }
    let r = v0.hypot(v1);
    Ok(NegativeDirection {
        d: [v0.abs() / r, v1.abs() / r],
        eigenvalue: e,
        determinant: det,
        phi,
    })
}

/// `max_{r ∈ [1/R, R]} Ψ(r d)` along the ray, using that
/// `Ψ(r d) = ½ e r² + log(r² d₁d₂)` is concave in `log r`.
fn ray_max(nd: &NegativeDirection, r_max: f64) -> (f64, f64) {
    let f = |r: f64| 0.5 * nd.eigenvalue * r * r + (r * r * nd.d[0] * nd.d[1]).ln();
    let r_star = (-2.0 / nd.eigenvalue).sqrt().clamp(1.0 / r_max, r_max);
    (f(r_star), r_star)
}

fn ray_value(nd: &NegativeDirection, r: f64) -> f64 {
    0.5 * nd.eigenvalue * r * r + (r * r * nd.d[0] * nd.d[1]).ln()
}

/// Points of the disc `|a| ≤ radius`: the centre and `rings` rings of `6j` points.
pub fn disc_samples(radius: f64, rings: usize) -> Vec<[f64; 2]> {
    let mut v = vec![[0.0, 0.0]];
    for j in 1..=rings {
        let r = radius * j as f64 / rings as f64;
        let m = 6 * j;
        for i in 0..m {
            let t = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            v.push([r * t.cos(), r * t.sin()]);
        }
    }
    v
}

/// Sampling options for the level bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketOptions {
    pub sigma: f64,
    pub r_initial: f64,
    pub r_limit: f64,
    pub xi_samples: usize,
    pub a_radius: f64,
    pub a_rings: usize,
    pub symmetric: bool,
    pub seed: u64,
}

impl BracketOptions {
    pub fn new(sigma: f64) -> Self {
        BracketOptions {
            sigma,
            r_initial: 10.0,
            r_limit: 1e6,
            xi_samples: 48,
            a_radius: 0.2,
            a_rings: 2,
            symmetric: false,
            seed: 7,
        }
    }
}

/// Levels `A < B` of the min-max family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBracket {
    pub a_level: f64,
    pub b_level: f64,
    /// Largest value of `Ψ` at the ends `r ∈ {1/R, R}` of the family.
    pub boundary_max: f64,
    /// Smallest value of `Ψ` on `{Λ₁Λ₂ = 1}` over the samples.
    pub hyperbola_min: f64,
    pub r: f64,
    /// Every `R` tried, in order.
    pub r_tried: Vec<f64>,
    pub ordered: bool,
    /// Configuration attaining `B`.
    pub b_argmax: ConfigPair,
    /// Range of `U*` over the sampled `a`-disc.
    pub profile_range: [f64; 2],
    pub hole: HoleReport,
    pub xi_samples: usize,
    pub a_samples: usize,
}

struct Sample {
    xi: [Vec<f64>; 2],
    a: [[f64; 2]; 2],
    nd: NegativeDirection,
    hyperbola: f64,
    qq: f64,
}

impl<'a> ReducedFunctional<'a> {
    fn sample_family(&self, opts: &BracketOptions) -> Result<(Vec<Sample>, HoleReport, [f64; 2], usize)> {
        let n = self.dim();
        let hole = self.provider.check_hole_criterion(opts.sigma, opts.xi_samples, opts.seed)?;
        if !hole.all_negative {
            return Err(Error::Bracket(format!(
                "hole criterion fails on S (sigma = {}): max phi = {:.6e}",
                opts.sigma, hole.max
            )));
        }
        let pairs: Vec<[Vec<f64>; 2]> = if opts.symmetric {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut e1 = vec![0.0; n];
            e1[0] = opts.sigma;
            let mut v = vec![e1];
            while v.len() < opts.xi_samples.max(1) {
                v.push(random_unit(n, &mut rng).iter().map(|c| c * opts.sigma).collect());
            }
            v.into_iter().map(|x| {
                let y = x.iter().map(|c| -c).collect();
                [x, y]
            }).collect()
        } else {
            sphere_pairs(n, opts.sigma, opts.xi_samples, opts.seed).into_iter().map(|(x, y)| [x, y]).collect()
        };
        let discs = disc_samples(opts.a_radius, opts.a_rings);
        let qs: Vec<f64> = discs.iter().map(|a| self.profile(*a)).collect();
        let range = qs.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |r, q| [r[0].min(*q), r[1].max(*q)]);
        let a_pairs: Vec<(usize, usize)> = if opts.symmetric {
            (0..discs.len()).map(|i| (i, i)).collect()
        } else {
            (0..discs.len()).flat_map(|i| (0..discs.len()).map(move |j| (i, j))).collect()
        };
        let greens: Vec<Result<(f64, f64, f64)>> = par::map(pairs.len(), |i| self.green_data(&pairs[i]));
        let mut samples = Vec::with_capacity(pairs.len() * a_pairs.len());
        for (xi, g) in pairs.iter().zip(greens) {
            let (h1, h2, g) = g?;
            for &(i, j) in &a_pairs {
                let a = if opts.symmetric { [discs[i], [-discs[i][0], -discs[i][1]]] } else { [discs[i], discs[j]] };
                let q = if opts.symmetric { [qs[i], self.profile(a[1])] } else { [qs[i], qs[j]] };
                let data = PairData { h: [h1, h2], g, q };
                let nd = negative_direction_from(&data)?;
                let qq = q[0] * q[1];
                samples.push(Sample {
                    xi: xi.clone(),
                    a,
                    nd,
                    hyperbola: (h1 * h2).sqrt() * qq.abs() - g * qq,
                    qq,
                });
            }
        }
        Ok((samples, hole, range, discs.len()))
    }

    /// Levels `A`, `B` of the family `Λ = r d(ξ̂)` over `ξ̂ ∈ S`, `r ∈ [1/R, R]`,
    /// `â` in the disc. `R` doubles until `max_ends Ψ < A < min_I Ψ`.
    pub fn level_bracket(&self, opts: &BracketOptions) -> Result<LevelBracket> {
        let (samples, hole, profile_range, a_count) = self.sample_family(opts)?;
        let hyperbola_min = samples.iter().map(|s| s.hyperbola).fold(f64::INFINITY, f64::min);
        let mut r = opts.r_initial;
        let mut r_tried = Vec::new();
        loop {
            r_tried.push(r);
            let mut b = f64::NEG_INFINITY;
            let mut arg = 0;
            let mut ends = f64::NEG_INFINITY;
            for (i, s) in samples.iter().enumerate() {
                let (v, _) = ray_max(&s.nd, r);
                if v > b {
                    b = v;
                    arg = i;
                }
                ends = ends.max(ray_value(&s.nd, r)).max(ray_value(&s.nd, 1.0 / r));
            }
            let a_level = 0.5 * (ends + b);
            let ordered = ends < a_level && a_level < hyperbola_min && a_level < b;
            if ordered || 2.0 * r > opts.r_limit {
                let s = &samples[arg];
                let (_, rs) = ray_max(&s.nd, r);
                let b_argmax = ConfigPair {
                    big_lambda: [rs * s.nd.d[0], rs * s.nd.d[1]],
                    xi: s.xi.clone(),
                    a: s.a,
                };
                let out = LevelBracket {
                    a_level,
                    b_level: b,
                    boundary_max: ends,
                    hyperbola_min,
                    r,
                    r_tried,
                    ordered,
                    b_argmax,
                    profile_range,
                    hole,
                    xi_samples: opts.xi_samples,
                    a_samples: a_count,
                };
                if !ordered {
                    return Err(Error::Bracket(format!(
                        "ordering max_ends < A < min_I fails up to R = {r}: ends {ends:.6e}, A {a_level:.6e}, min_I {hyperbola_min:.6e}"
                    )));
                }
                return Ok(out);
            }
            r *= 2.0;
        }
    }
}

/// Search options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleOptions {
    pub symmetric: bool,
    pub tol: f64,
    pub max_iters: usize,
    /// `l` of `W^l_ρ`; `None` selects half the smallest `|φ|` over the `S` samples.
    pub level_l: Option<f64>,
    pub rho: f64,
    pub seeds: usize,
    pub seed: u64,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            symmetric: true,
            tol: 1e-6,
            max_iters: 200,
            level_l: None,
            rho: 0.05,
            seeds: 10,
            seed: 11,
        }
    }
}

/// One phase-2 iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub psi: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

/// Phase-2 outcome from one starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonRun {
    pub start: ConfigPair,
    pub pair: ConfigPair,
    pub psi: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    /// The iterate could not move without leaving the admissible set.
    pub pinned: bool,
    pub trace: Vec<IterationRecord>,
}

/// Outcome of the min-max search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleResult {
    pub pair: ConfigPair,
    pub psi: f64,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    pub one_sided: Vec<usize>,
    /// Eigenvalues of the `(Λ, ξ̂)` block of the Hessian, ascending.
    pub hessian_eigenvalues: Vec<f64>,
    pub negative_eigenvalues: usize,
    pub positive_eigenvalues: usize,
    /// `dᵀ ∂²_Λ Ψ d` along the negative direction at the critical point.
    pub lambda_plane_curvature: f64,
    pub saddle_signature: bool,
    pub converged: bool,
    pub pinned: bool,
    pub within_bracket: bool,
    pub bracket: [f64; 2],
    pub level_l: f64,
    pub rho: f64,
    pub phase1: ConfigPair,
    pub phase1_value: f64,
    pub stationary: StationaryLambda,
    pub trace: Vec<IterationRecord>,
    /// `Ψ` reached from the perturbed seeds.
    pub seed_values: Vec<f64>,
    pub seed_converged: Vec<bool>,
    pub seed_gradient_norms: Vec<f64>,
    pub seed_pinned: Vec<bool>,
    pub seed_spread: f64,
}

impl SaddleResult {
    pub fn is_critical(&self) -> bool {
        self.converged && self.gradient_norm < 1e-6
    }
}

/// Parametrisation of the searched coordinates.
#[derive(Clone, Copy)]
struct Chart {
    n: usize,
    symmetric: bool,
}

impl Chart {
    fn encode(&self, p: &ConfigPair) -> Vec<f64> {
        if self.symmetric {
            let mut v = vec![p.big_lambda[0].ln()];
            v.extend(&p.xi[0]);
            v.extend(p.a[0]);
            v
        } else {
            let mut v = p.to_vec();
            v[0] = v[0].ln();
            v[1] = v[1].ln();
            v
        }
    }

    fn decode(&self, v: &[f64]) -> ConfigPair {
        let n = self.n;
        if self.symmetric {
            ConfigPair::symmetric(v[0].exp(), v[1..1 + n].to_vec(), [v[1 + n], v[2 + n]])
        } else {
            let mut w = v.to_vec();
            w[0] = w[0].exp();
            w[1] = w[1].exp();
            ConfigPair::from_vec(n, &w).expect("chart length")
        }
    }
}

struct Search<'r, 'a> {
    f: &'r ReducedFunctional<'a>,
    chart: Chart,
    l: f64,
    rho: f64,
    sigma: f64,
}

impl Search<'_, '_> {
    fn feasible(&self, p: &ConfigPair) -> bool {
        self.f.admissible(p) && self.f.in_w(&p.xi, self.l, self.rho, self.sigma).unwrap_or(false)
    }

    fn value(&self, z: &[f64]) -> Result<f64> {
        self.f.psi_unchecked(&self.chart.decode(z))
    }

    fn step_size(z: f64) -> f64 {
        1e-5 * z.abs().max(1.0)
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        (0..z.len())
            .map(|j| {
                let h = Self::step_size(z[j]);
                let mut zp = z.to_vec();
                let mut zm = z.to_vec();
                zp[j] += h;
                zm[j] -= h;
                Ok((self.value(&zp)? - self.value(&zm)?) / (2.0 * h))
            })
            .collect()
    }

    fn hessian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let m = z.len();
        let mut hm = DMatrix::zeros(m, m);
        for j in 0..m {
            let h = 10.0 * Self::step_size(z[j]);
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[j] += h;
            zm[j] -= h;
            let gp = self.gradient(&zp)?;
            let gm = self.gradient(&zm)?;
            for i in 0..m {
                hm[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        Ok(0.5 * (&hm + hm.transpose()))
    }

    fn true_gradient_norm(&self, p: &ConfigPair) -> Result<f64> {
        Ok(self.f.grad_psi(p)?.norm())
    }

    /// Newton iteration on `∇Ψ = 0` with a pseudo-inverse step, a trust radius
    /// and backtracking into `W^l_ρ ∩` the admissible set.
    fn newton(&self, start: &ConfigPair, tol: f64, max_iters: usize) -> Result<NewtonRun> {
        let mut z = self.chart.encode(start);
        let mut trace = Vec::new();
        let mut radius = 0.05;
        let mut pinned = false;
        let mut converged = false;
        let mut g = self.gradient(&z)?;
        let mut gn = vnorm(&g);
        for _ in 0..max_iters {
            let p = self.chart.decode(&z);
            let true_norm = self.true_gradient_norm(&p)?;
            if true_norm < tol {
                converged = true;
                break;
            }
            let hm = self.hessian(&z)?;
            let svd = hm.svd(true, true);
            let smax = svd.singular_values.max();
            let step = svd
                .pseudo_inverse(1e-10 * smax)
                .map_err(|e| Error::Singular(e.to_string()))?
                * DVector::from_vec(g.clone());
            let mut step: Vec<f64> = step.iter().map(|v| -v).collect();
            let sn = vnorm(&step);
            if sn > radius {
                step.iter_mut().for_each(|v| *v *= radius / sn);
            }
            let mut accepted = false;
            let mut t = 1.0;
            for _ in 0..40 {
                let zt: Vec<f64> = z.iter().zip(&step).map(|(a, b)| a + t * b).collect();
                let pt = self.chart.decode(&zt);
                if self.feasible(&pt) {
                    let gt = self.gradient(&zt)?;
                    let gtn = vnorm(&gt);
                    if gtn < gn || gtn < tol {
                        trace.push(IterationRecord {
                            psi: self.value(&zt)?,
                            gradient_norm: gtn,
                            step: t * vnorm(&step),
                        });
                        z = zt;
                        g = gt;
                        gn = gtn;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                pinned = true;
                break;
            }
            radius = if t == 1.0 { (radius * 2.0).min(1.0) } else { (radius * 0.5).max(1e-6) };
        }
        let pair = self.chart.decode(&z);
        let gradient_norm = self.true_gradient_norm(&pair)?;
        Ok(NewtonRun {
            start: start.clone(),
            psi: self.f.psi_unchecked(&pair)?,
            gradient_norm,
            converged: converged || gradient_norm < tol,
            pinned,
            pair,
            trace,
        })
    }
}

impl<'a> ReducedFunctional<'a> {
    /// Phase 1: for each sampled `ξ̂ ∈ S` take the maximum over `(r, â)` along
    /// the negative direction; return the minimiser over `ξ̂`, ties broken by
    /// `|ξ̂₁ + ξ̂₂|`.
    pub fn phase_one(&self, opts: &BracketOptions, r: f64) -> Result<(ConfigPair, f64)> {
        let (samples, _, _, _) = self.sample_family(opts)?;
        let mut best: Option<(f64, f64, ConfigPair)> = None;
        let mut i = 0;
        while i < samples.len() {
            let mut j = i;
            let mut top: Option<(f64, ConfigPair)> = None;
            while j < samples.len() && samples[j].xi == samples[i].xi {
                let s = &samples[j];
                let (v, rs) = ray_max(&s.nd, r);
                if top.as_ref().is_none_or(|t| v > t.0) {
                    let pair = ConfigPair {
                        big_lambda: [rs * s.nd.d[0], rs * s.nd.d[1]],
                        xi: s.xi.clone(),
                        a: s.a,
                    };
                    top = Some((v, pair));
                }
                debug_assert!(s.qq > 0.0);
                j += 1;
            }
            let (v, pair) = top.expect("non-empty group");
            let asym = norm(&pair.xi[0].iter().zip(&pair.xi[1]).map(|(a, b)| a + b).collect::<Vec<_>>());
            let better = match &best {
                None => true,
                Some((bv, ba, _)) => v < *bv - 1e-12 || ((v - bv).abs() <= 1e-12 && asym < *ba),
            };
            if better {
                best = Some((v, asym, pair));
            }
            i = j;
        }
        let (v, _, pair) = best.ok_or_else(|| Error::Bracket("no samples".into()))?;
        Ok((pair, v))
    }

    /// Two-phase min-max search.
    pub fn saddle_search(&self, bracket: &LevelBracket, bopts: &BracketOptions, opts: &SaddleOptions) -> Result<SaddleResult> {
        if !bracket.ordered {
            return Err(Error::Bracket("bracket is not ordered".into()));
        }
        let n = self.dim();
        let mut b1 = *bopts;
        b1.symmetric = opts.symmetric;
        let (phase1, phase1_value) = self.phase_one(&b1, bracket.r)?;
        let l = opts.level_l.unwrap_or(0.5 * (-bracket.hole.max));
        let search = Search {
            f: self,
            chart: Chart {
                n,
                symmetric: opts.symmetric,
            },
            l,
            rho: opts.rho,
            sigma: bopts.sigma,
        };
        // Start from the stationary scales of the phase-1 configuration.
        let st = self.stationary_lambda(&phase1.xi, &phase1.a)?;
        let mut start = phase1.clone();
        start.big_lambda = st.big_lambda;
        if !search.feasible(&start) {
            return Err(Error::Constraint("phase-1 point lies outside W^l_rho or the admissible set".into()));
        }
        let main = search.newton(&start, opts.tol, opts.max_iters)?;

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut starts = Vec::with_capacity(opts.seeds);
        while starts.len() < opts.seeds {
            let mut p = start.clone();
            let f = (rng.gen_range(-0.2..0.2f64)).exp();
            let dx: Vec<f64> = random_unit(n, &mut rng).iter().map(|v| v * 0.15 * bopts.sigma * rng.gen::<f64>()).collect();
            let da = [rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03)];
            if opts.symmetric {
                let x: Vec<f64> = p.xi[0].iter().zip(&dx).map(|(a, b)| a + b).collect();
                p = ConfigPair::symmetric(p.big_lambda[0] * f, x, [p.a[0][0] + da[0], p.a[0][1] + da[1]]);
            } else {
                let dy: Vec<f64> = random_unit(n, &mut rng).iter().map(|v| v * 0.15 * bopts.sigma * rng.gen::<f64>()).collect();
                let f2 = (rng.gen_range(-0.2..0.2f64)).exp();
                for j in 0..n {
                    p.xi[0][j] += dx[j];
                    p.xi[1][j] += dy[j];
                }
                p.big_lambda = [p.big_lambda[0] * f, p.big_lambda[1] * f2];
                p.a[0] = [p.a[0][0] + da[0], p.a[0][1] + da[1]];
            }
            if search.feasible(&p) {
                starts.push(p);
            }
        }
        let runs: Vec<Result<NewtonRun>> = par::map(starts.len(), |i| search.newton(&starts[i], opts.tol, opts.max_iters));
        let runs: Vec<NewtonRun> = runs.into_iter().collect::<Result<_>>()?;
        let seed_values: Vec<f64> = runs.iter().map(|r| r.psi).collect();
        let spread = if seed_values.is_empty() {
            0.0
        } else {
            seed_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - seed_values.iter().cloned().fold(f64::INFINITY, f64::min)
        };

        let pair = main.pair.clone();
        let grad = self.grad_psi(&pair)?;
        let hess = self.full_hessian(&pair)?;
        let k = 2 + 2 * n;
        let block = hess.view((0, 0), (k, k)).into_owned();
        let mut eig: Vec<f64> = SymmetricEigen::new(block).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.total_cmp(b));
        let scale = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let neg = eig.iter().filter(|v| **v < -1e-8 * scale).count();
        let pos = eig.iter().filter(|v| **v > 1e-8 * scale).count();
        let nd = self.negative_direction(&pair.xi, &pair.a)?;
        let curvature = nd.d[0] * nd.d[0] * hess[(0, 0)] + 2.0 * nd.d[0] * nd.d[1] * hess[(0, 1)] + nd.d[1] * nd.d[1] * hess[(1, 1)];
        let stationary = self.stationary_lambda(&pair.xi, &pair.a)?;
        Ok(SaddleResult {
            psi: main.psi,
            gradient_norm: grad.norm(),
            gradient: grad.values,
            one_sided: grad.one_sided,
            hessian_eigenvalues: eig,
            negative_eigenvalues: neg,
            positive_eigenvalues: pos,
            lambda_plane_curvature: curvature,
            saddle_signature: neg >= 1 && pos >= 1,
            converged: main.converged,
            pinned: main.pinned,
            within_bracket: bracket.a_level <= main.psi && main.psi <= bracket.b_level,
            bracket: [bracket.a_level, bracket.b_level],
            level_l: l,
            rho: opts.rho,
            phase1,
            phase1_value,
            stationary,
            trace: main.trace,
            seed_converged: runs.iter().map(|r| r.converged).collect(),
            seed_gradient_norms: runs.iter().map(|r| r.gradient_norm).collect(),
            seed_pinned: runs.iter().map(|r| r.pinned).collect(),
            seed_values,
            seed_spread: spread,
            pair,
        })
    }

    /// Hessian of `Ψ` in the full coordinates by differences of the gradient.
    pub fn full_hessian(&self, pair: &ConfigPair) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let v0 = pair.to_vec();
        let m = v0.len();
        let mut hm = DMatrix::zeros(m, m);
        for j in 0..m {
            let h = if j < 2 { 1e-4 * v0[j] } else { 1e-4 * v0[j].abs().max(1.0) };
            let mut vp = v0.clone();
            let mut vm = v0.clone();
            vp[j] += h;
            vm[j] -= h;
            let gp = self.grad_psi(&ConfigPair::from_vec(n, &vp)?)?;
            let gm = self.grad_psi(&ConfigPair::from_vec(n, &vm)?)?;
            for i in 0..m {
                hm[(i, j)] = (gp.values[i] - gm.values[i]) / (2.0 * h);
            }
        }
        Ok(0.5 * (&hm + hm.transpose()))
    }
}

/// `Ψ` over a two-dimensional section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSlice {
    pub x_label: String,
    pub y_label: String,
    pub rows: Vec<[f64; 3]>,
}

impl LandscapeSlice {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},psi\n", self.x_label, self.y_label);
        for r in &self.rows {
            s.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", r[0], r[1], r[2]));
        }
        s
    }
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count.max(2) - 1) as f64).exp()).collect()
}

impl<'a> ReducedFunctional<'a> {
    /// `Ψ(Λ₁, Λ₂)` at fixed `(ξ̂, â)` on a logarithmic grid.
    pub fn landscape_scales(&self, pair: &ConfigPair, lo: f64, hi: f64, count: usize) -> Result<LandscapeSlice> {
        let data = self.pair_data(&pair.xi, &pair.a)?;
        let g = log_grid(lo, hi, count);
        let rows = g
            .iter()
            .flat_map(|&l1| g.iter().map(move |&l2| [l1, l2, data.psi([l1, l2])]))
            .collect();
        Ok(LandscapeSlice {
            x_label: "lambda1".into(),
            y_label: "lambda2".into(),
            rows,
        })
    }

    /// Symmetric class with `ξ̂₁ = s e₁`, `â = 0`, `Λ₁ = Λ₂ = Λ`.
    pub fn landscape_radius(&self, s_range: [f64; 2], lambda_range: [f64; 2], count: usize) -> Result<LandscapeSlice> {
        let n = self.dim();
        let ss: Vec<f64> = (0..count)
            .map(|i| s_range[0] + (s_range[1] - s_range[0]) * i as f64 / (count.max(2) - 1) as f64)
            .collect();
        let ls = log_grid(lambda_range[0], lambda_range[1], count);
        let q0 = self.profile([0.0, 0.0]);
        let rows: Vec<Result<Vec<[f64; 3]>>> = par::map(ss.len(), |i| {
            let mut x = vec![0.0; n];
            x[0] = ss[i];
            let y: Vec<f64> = x.iter().map(|v| -v).collect();
            let (h1, h2, g) = self.green_data(&[x, y])?;
            let d = PairData { h: [h1, h2], g, q: [q0, q0] };
            Ok(ls.iter().map(|&l| [ss[i], l, d.psi([l, l])]).collect())
        });
        let mut out = Vec::new();
        for r in rows {
            out.extend(r?);
        }
        Ok(LandscapeSlice {
            x_label: "radius".into(),
            y_label: "lambda".into(),
            rows: out,
        })
    }
}

/// Summary of the assembled two-tower field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSummary {
    pub epsilon: f64,
    pub lambdas: [f64; 2],
    pub zeta: f64,
    pub min: f64,
    pub max: f64,
    pub sign_changing: bool,
    /// `u(ξ̂_i)` and the profile value `(1+ζ) λ_i^{−ν} Q(â_i)` at the centres.
    pub centre_values: [f64; 2],
    pub centre_predictions: [f64; 2],
    pub residual: ResidualReport,
    pub energy: f64,
    pub energy_target: f64,
    pub energy_ratio: f64,
}

/// The grid field `u = (1+ζ)(PQ₁ + PQ₂)` with `λ_i^{n−2} = β Λ_i² ε`.
pub fn assemble_ansatz(
    provider: &GreensProvider,
    base: &BubbleSum,
    constants: &ConstantSet,
    pair: &ConfigPair,
    epsilon: f64,
    dims: usize,
) -> Result<(GridField, AnsatzSummary)> {
    let domain = provider.domain();
    if domain.n != 3 {
        return Err(Error::UnsupportedDimension(domain.n));
    }
    let grid = domain.grid_domain(dims)?;
    let lambdas = lambdas_for(constants, pair.big_lambda, epsilon);
    for i in 0..2 {
        if lambdas[i] < 3.0 * grid.h {
            return Err(Error::Constraint(format!(
                "core lambda_{} = {:.3e} is below three grid spacings ({:.3e})",
                i + 1,
                lambdas[i],
                3.0 * grid.h
            )));
        }
        let bd = domain.boundary_distance(&pair.xi[i]);
        if lambdas[i] >= bd {
            return Err(Error::Constraint(format!(
                "core lambda_{} = {:.3e} does not fit inside the domain (boundary distance {:.3e})",
                i + 1,
                lambdas[i],
                bd
            )));
        }
    }
    let zeta = EnergyConfig::new(3, epsilon)?.zeta();
    let params = pair.to_params(lambdas);
    let p1 = project_bubble(&grid, &params[0], base)?;
    let p2 = project_bubble(&grid, &params[1], base)?;
    let mut u = p1.pq.clone();
    for (v, w) in u.values.iter_mut().zip(&p2.pq.values) {
        *v = (1.0 + zeta) * (*v + w);
    }
    let (min, max) = u.interior_range();
    let residual = nonlinear_residual(&grid, &u, epsilon)?;
    let energy = domain_energy(&grid, &u, epsilon);
    let k = base.bubbles().len().saturating_sub(1);
    let target = 2.0 * (k as f64 + 1.0) * constants.s_n;
    let centre_values = [u.interpolate(&pair.xi[0]), u.interpolate(&pair.xi[1])];
    let centre_predictions = [0, 1].map(|i| (1.0 + zeta) * lambdas[i].powf(-0.5) * base.value(&pair.a_full(i)));
    Ok((
        u,
        AnsatzSummary {
            epsilon,
            lambdas,
            zeta,
            min,
            max,
            sign_changing: min < 0.0 && max > 0.0,
            centre_values,
            centre_predictions,
            residual,
            energy,
            energy_target: target,
            energy_ratio: energy / target,
        },
    ))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn vnorm(x: &[f64]) -> f64 {
    norm(x)
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}
