//! Energies of bubble configurations: whole-space energies, the constants of
//! the asymptotic expansions, domain energies of projected pairs and the
//! comparison with their expansions in `λ` and `ε`.

use crate::error::{Error, Result};
use crate::family::{family_bubble_sum, BubbleParams};
use crate::fields::{abs_pow_p1, b_n, check_dim, critical_exponent, rule_for, BubbleSum, ScalarField};
use crate::greens::{DomainKind, DomainSpec, GreensProvider};
use crate::grid::{GridDomain, GridField};
use crate::harmonic::ProjectedSum;
use crate::par;
use crate::quadrature::{QuadratureLevel, Rule1D, SphereRule, MAX_DIM};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Problem data for `J_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub n: usize,
    pub epsilon: f64,
}

impl EnergyConfig {
    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        check_dim(n)?;
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidInput("epsilon must be non-negative".into()));
        }
        Ok(EnergyConfig { n, epsilon })
    }

    pub fn p(&self) -> f64 {
        critical_exponent(self.n)
    }

    /// `ζ = ε^{εp/(2(p−1+ε))} − 1`.
    pub fn zeta(&self) -> f64 {
        let (p, e) = (self.p(), self.epsilon);
        if e == 0.0 {
            return 0.0;
        }
        e.powf(e * p / (2.0 * (p - 1.0 + e))) - 1.0
    }
}

/// The two integrals of a whole-space energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WholeSpaceEnergy {
    /// `∫|∇Q|²`.
    pub gradient: f64,
    /// `∫|Q|^{p+1}`.
    pub potential: f64,
    /// `½∫|∇Q|² − ∫|Q|^{p+1}/(p+1)`.
    pub energy: f64,
}

/// Energy of a field on `R^n` from its analytic gradient.
pub fn whole_space_energy(base: &dyn ScalarField, level: QuadratureLevel) -> Result<WholeSpaceEnergy> {
    let n = base.dim();
    check_dim(n)?;
    let mut g = [0.0; MAX_DIM];
    if !base.gradient(&[0.0; MAX_DIM][..n], &mut g) {
        return Err(Error::InvalidInput("whole-space energy needs an analytic gradient".into()));
    }
    let rule = rule_for(base, level);
    let v = rule.integrate_vec(2, |x, w, acc| {
        let mut g = [0.0; MAX_DIM];
        base.gradient(x, &mut g);
        acc[0] += w * g[..n].iter().map(|t| t * t).sum::<f64>();
        acc[1] += w * abs_pow_p1(base.value(x), n);
    });
    if !v.iter().all(|t| t.is_finite()) {
        return Err(Error::InvalidInput("whole-space quadrature did not converge".into()));
    }
    let p = critical_exponent(n);
    Ok(WholeSpaceEnergy {
        gradient: v[0],
        potential: v[1],
        energy: 0.5 * v[0] - v[1] / (p + 1.0),
    })
}

/// Constants of the expansions for a base profile `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub n: usize,
    pub p: f64,
    /// `∫|∇Q|²`.
    pub gradient_integral: f64,
    /// `∫|Q|^{p+1}`.
    pub potential_integral: f64,
    /// `∫|Q|^{p+1} log|Q|`.
    pub log_integral: f64,
    /// Quadrature nodes where `|Q|` fell below `10⁻¹²·max|Q|`.
    pub near_zero_nodes: usize,
    pub gamma_n: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
    pub chi_n: f64,
    pub eta_n: f64,
    pub w_n: f64,
    pub b_n: f64,
    /// Energy of the standard bubble, `∫U^{p+1}/n`.
    pub s_n: f64,
}

pub fn constant_set(base: &BubbleSum, level: QuadratureLevel) -> Result<ConstantSet> {
    let n = base.dim();
    let p = critical_exponent(n);
    let rule = rule_for(base, level);
    let qmax = base.value(&[0.0; MAX_DIM][..n]).abs().max(1e-300);
    let v = rule.integrate_vec(4, |x, w, acc| {
        let (q, s) = base.value_and_source(x);
        let a = q.abs();
        let pp = abs_pow_p1(q, n);
        acc[0] += w * s * q;
        acc[1] += w * pp;
        acc[2] += w * pp * a.max(1e-300).ln();
        if a < 1e-12 * qmax {
            acc[3] += 1.0;
        }
    });
    let bubble = crate::fields::standard_bubble(n)?;
    let s_n = whole_space_energy(&bubble, level)?.potential / n as f64;
    let (sg, sp, sl) = (v[0], v[1], v[2]);
    let bn = b_n(n);
    let alpha = 0.5 / (bn * bn);
    let beta = sp / (n as f64 * alpha);
    let chi = sp / (p + 1.0);
    Ok(ConstantSet {
        n,
        p,
        gradient_integral: sg,
        potential_integral: sp,
        log_integral: sl,
        near_zero_nodes: v[3] as usize,
        gamma_n: 0.5 * sg - sp / (p + 1.0),
        alpha_n: alpha,
        beta_n: beta,
        chi_n: chi,
        eta_n: 2.0 * (sp / ((p + 1.0) * (p + 1.0)) - sl / (p + 1.0)) + chi * beta.ln(),
        w_n: sp / n as f64,
        b_n: bn,
        s_n,
    })
}

/// Ray segments of `Ω` from `c` in direction `d`.
fn ray_segments(domain: &DomainSpec, c: &[f64], d: &[f64]) -> Vec<(f64, f64)> {
    let n = domain.n;
    let b: f64 = (0..n).map(|j| c[j] * d[j]).sum();
    let c2: f64 = (0..n).map(|j| c[j] * c[j]).sum();
    let outer = -b + (b * b + 1.0 - c2).max(0.0).sqrt();
    if let DomainKind::Annulus { delta } = domain.kind {
        let disc = b * b - (c2 - delta * delta);
        if disc > 0.0 && b < 0.0 {
            let root = disc.sqrt();
            let (tin, tout) = (-b - root, -b + root);
            return vec![(0.0, tin), (tout, outer)];
        }
    }
    vec![(0.0, outer)]
}

/// Breakpoints from `a` to `b` with widths halving toward `b` down to `minw`.
fn halving(a: f64, b: f64, minw: f64) -> Vec<f64> {
    let mut pts = vec![a];
    let mut w = 0.5 * (b - a);
    let mut x = a;
    while w.abs() > minw {
        x += w;
        pts.push(x);
        w *= 0.5;
    }
    pts.push(b);
    pts
}

fn panel_rule(bp: &[f64], m: usize) -> Rule1D {
    Rule1D::concat(bp.windows(2).map(|w| Rule1D::interval(w[0], w[1], m)).collect())
}

/// Polar rule about one bubble configuration.
#[derive(Debug, Clone)]
struct Region {
    center: [f64; MAX_DIM],
    scale: f64,
    /// Radial breakpoints in units of `scale`.
    core: Vec<f64>,
    dirs: Vec<([f64; MAX_DIM], f64)>,
}

/// Quadrature over a ball or annulus for functions concentrated at a few
/// bubble configurations.
///
/// The domain is split by the weights `χ_i = d_i^{−8}/Σ_j d_j^{−8}`, with
/// `d_i` the distance to centre `i`. Each piece is integrated in polar
/// coordinates about its centre along rays to `∂Ω`, graded toward the core
/// and toward any small bubbles (spikes) near the centre.
#[derive(Debug, Clone)]
pub struct DomainRule {
    domain: DomainSpec,
    regions: Vec<Region>,
    order: usize,
}

impl DomainRule {
    pub fn new(domain: &DomainSpec, configs: &[&BubbleSum], level: QuadratureLevel) -> Result<Self> {
        let n = domain.n;
        if matches!(domain.kind, DomainKind::Grid { .. }) {
            return Err(Error::InvalidInput("domain rules need a ball or annulus".into()));
        }
        let m = level.order;
        let mut regions = Vec::new();
        for cfg in configs {
            let bubbles = cfg.bubbles();
            let main = bubbles
                .iter()
                .max_by(|a, b| a.scale.total_cmp(&b.scale))
                .ok_or_else(|| Error::InvalidInput("empty bubble sum".into()))?;
            let mut center = [0.0; MAX_DIM];
            center[..n].copy_from_slice(&main.center);
            let scale = main.scale;
            let spikes: Vec<_> = bubbles.iter().filter(|b| b.scale < 0.5 * scale).collect();
            let (core, psi, phi) = if spikes.is_empty() {
                let core = vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];
                let psi = panel_rule(&(0..=6).map(|i| i as f64 * PI / 12.0).collect::<Vec<_>>(), m);
                let phi = panel_rule(&(0..=12).map(|i| -PI + i as f64 * PI / 6.0).collect::<Vec<_>>(), m);
                (core, psi, phi)
            } else {
                let rel = |b: &crate::fields::Bubble| -> (f64, f64) {
                    let d: Vec<f64> = b.center.iter().zip(&main.center).map(|(a, c)| (a - c) / scale).collect();
                    (d.iter().map(|v| v * v).sum::<f64>().sqrt(), d[1].atan2(d[0]))
                };
                let ring = spikes.iter().map(|b| rel(b).0).sum::<f64>() / spikes.len() as f64;
                let sscale = spikes.iter().map(|b| b.scale).fold(f64::INFINITY, f64::min) / scale;
                let minw = sscale * level.refine;
                let mut core = halving(0.0, ring, minw);
                let mut out: Vec<f64> = halving(0.0, ring, minw).iter().map(|t| 2.0 * ring - t).collect();
                out.reverse();
                core.extend_from_slice(&out[1..]);
                core.push(4.0 * ring);
                let amin = minw / ring;
                let psi = panel_rule(&halving(PI / 2.0, 0.0, amin).into_iter().rev().collect::<Vec<_>>(), m);
                let mut az: Vec<f64> = spikes.iter().map(|b| rel(b).1).collect();
                az.sort_by(f64::total_cmp);
                let k = az.len();
                let mut bp = Vec::new();
                for j in 0..k {
                    let prev = if j == 0 { az[k - 1] - 2.0 * PI } else { az[j - 1] };
                    let next = if j + 1 == k { az[0] + 2.0 * PI } else { az[j + 1] };
                    let (lo, hi) = (0.5 * (prev + az[j]), 0.5 * (az[j] + next));
                    let left = halving(lo, az[j], amin);
                    let right: Vec<f64> = halving(hi, az[j], amin).into_iter().rev().collect();
                    if bp.is_empty() {
                        bp.extend_from_slice(&left);
                    } else {
                        bp.extend_from_slice(&left[1..]);
                    }
                    bp.extend_from_slice(&right[1..]);
                }
                (core, psi, panel_rule(&bp, m))
            };
            let omega = SphereRule::new(n - 3, level.sphere.max(6));
            let mut dirs = Vec::new();
            for (ps, wps) in psi.nodes.iter().zip(&psi.weights) {
                let (sp, cp) = ps.sin_cos();
                let wp = wps * cp * sp.powi(n as i32 - 3);
                for (ph, wph) in phi.nodes.iter().zip(&phi.weights) {
                    let (sf, cf) = ph.sin_cos();
                    for (om, wo) in omega.points.iter().zip(&omega.weights) {
                        let mut d = [0.0; MAX_DIM];
                        d[0] = cp * cf;
                        d[1] = cp * sf;
                        for j in 2..n {
                            d[j] = sp * om[j - 2];
                        }
                        dirs.push((d, wp * wph * wo));
                    }
                }
            }
            regions.push(Region {
                center,
                scale,
                core,
                dirs,
            });
        }
        Ok(DomainRule {
            domain: domain.clone(),
            regions,
            order: m + 4,
        })
    }

    pub fn len(&self) -> usize {
        self.regions.iter().map(|r| r.dirs.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight_of(&self, i: usize, x: &[f64]) -> f64 {
        if self.regions.len() == 1 {
            return 1.0;
        }
        let n = self.domain.n;
        let inv: Vec<f64> = self
            .regions
            .iter()
            .map(|r| {
                let d2: f64 = (0..n).map(|j| (x[j] - r.center[j]).powi(2)).sum();
                1.0 / (d2 * d2 * d2 * d2).max(1e-300)
            })
            .collect();
        inv[i] / inv.iter().sum::<f64>()
    }

    /// Integral of a vector integrand; `f(x, w, acc)` adds `w` times its values.
    pub fn integrate_vec<F>(&self, width: usize, f: F) -> Vec<f64>
    where
        F: Fn(&[f64], f64, &mut [f64]) + Sync + Send,
    {
        let n = self.domain.n;
        let index: Vec<(usize, usize)> = self
            .regions
            .iter()
            .enumerate()
            .flat_map(|(i, r)| (0..r.dirs.len()).map(move |d| (i, d)))
            .collect();
        let gl = Rule1D::gauss_legendre(self.order);
        par::sum_vec(index.len(), width, |k, acc| {
            let (ri, di) = index[k];
            let reg = &self.regions[ri];
            let (dir, wd) = &reg.dirs[di];
            for (s, (t0, t1)) in ray_segments(&self.domain, &reg.center, dir).into_iter().enumerate() {
                let bp: Vec<f64> = if s == 0 {
                    let lim = t1 / reg.scale;
                    let mut bp: Vec<f64> = reg.core.iter().copied().take_while(|b| *b < lim).collect();
                    let mut last = *bp.last().unwrap();
                    while 2.0 * last < lim {
                        last *= 2.0;
                        bp.push(last);
                    }
                    bp.push(lim);
                    bp.iter().map(|b| b * reg.scale).collect()
                } else {
                    let panels = ((t1 - t0) / 0.05).ceil().max(1.0) as usize;
                    (0..=panels).map(|i| t0 + (t1 - t0) * i as f64 / panels as f64).collect()
                };
                for w in bp.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let half = 0.5 * (b - a);
                    for (t, wt) in gl.nodes.iter().zip(&gl.weights) {
                        let r = a + half * (t + 1.0);
                        let mut x = [0.0; MAX_DIM];
                        for j in 0..n {
                            x[j] = reg.center[j] + r * dir[j];
                        }
                        let weight = wd * wt * half * r.powi(n as i32 - 1) * self.weight_of(ri, &x[..n]);
                        f(&x[..n], weight, acc);
                    }
                }
            }
        })
    }
}

/// Domain integrals of a projected pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairIntegrals {
    /// `∫ s_i PQ_i`, i.e. `∫|∇PQ_i|²`.
    pub self_gradient: [f64; 2],
    /// `∫ s₁ PQ₂` and `∫ s₂ PQ₁`.
    pub cross_gradient: [f64; 2],
    /// `∫|PQ_i|^{p+1}`.
    pub self_potential: [f64; 2],
    /// `∫|PQ₁ + PQ₂|^{p+1}`.
    pub pair_potential: f64,
    /// `∫|PQ₁ + PQ₂|^{p+1+ε}`.
    pub pair_potential_eps: f64,
}

pub fn pair_integrals(
    domain: &DomainSpec,
    pq: [&ProjectedSum; 2],
    epsilon: f64,
    level: QuadratureLevel,
) -> Result<PairIntegrals> {
    let n = domain.n;
    let rule = DomainRule::new(domain, &[&pq[0].field, &pq[1].field], level)?;
    let q1 = critical_exponent(n) + 1.0 + epsilon;
    let v = rule.integrate_vec(8, |x, w, acc| {
        let (u1, s1) = pq[0].value_and_source(x);
        let (u2, s2) = pq[1].value_and_source(x);
        acc[0] += w * s1 * u1;
        acc[1] += w * s2 * u2;
        acc[2] += w * s1 * u2;
        acc[3] += w * s2 * u1;
        acc[4] += w * abs_pow_p1(u1, n);
        acc[5] += w * abs_pow_p1(u2, n);
        acc[6] += w * abs_pow_p1(u1 + u2, n);
        acc[7] += w * (u1 + u2).abs().powf(q1);
    });
    Ok(PairIntegrals {
        self_gradient: [v[0], v[1]],
        cross_gradient: [v[2], v[3]],
        self_potential: [v[4], v[5]],
        pair_potential: v[6],
        pair_potential_eps: v[7],
    })
}

/// `(∫|∇PQ|², ∫|PQ|^{p+1})` for one projected configuration.
pub fn single_integrals(domain: &DomainSpec, pq: &ProjectedSum, level: QuadratureLevel) -> Result<(f64, f64)> {
    let n = domain.n;
    let rule = DomainRule::new(domain, &[&pq.field], level)?;
    let v = rule.integrate_vec(2, |x, w, acc| {
        let (u, s) = pq.value_and_source(x);
        acc[0] += w * s * u;
        acc[1] += w * abs_pow_p1(u, n);
    });
    Ok((v[0], v[1]))
}

/// Fitted `α_n` from the drop of `∫|∇PQ|²` below `∫|∇Q|²`, one value per `λ`.
pub fn alpha_fit(
    domain: &DomainSpec,
    params: &BubbleParams,
    base: &BubbleSum,
    lambdas: &[f64],
    level: QuadratureLevel,
) -> Result<Vec<f64>> {
    let n = domain.n;
    let provider = GreensProvider::analytic(domain.clone())?;
    let whole = whole_space_energy(base, QuadratureLevel::default())?;
    let xi_hat = params.xi_hat()?;
    let qa = base.value(&params.a_hat()?);
    let h = provider.robin(&xi_hat)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let mut p = params.clone();
            p.lambda = lambda;
            let pq = ProjectedSum::new(domain, family_bubble_sum(&p, base)?)?;
            let (g, _) = single_integrals(domain, &pq, level)?;
            Ok((whole.gradient - g) / (2.0 * h * qa * qa * lambda.powi(n as i32 - 2)))
        })
        .collect()
}

/// Direct value and expansion of one term of the energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermPair {
    pub direct: f64,
    pub expansion: f64,
}

/// Comparison of `J_0(PQ₁ + PQ₂)` with its expansion at one `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub lambdas: [f64; 2],
    pub direct: f64,
    pub expansion: f64,
    pub residual: f64,
    /// `residual / max(λ₁, λ₂)^{n−2}`.
    pub scaled_residual: f64,
    /// `½∫|∇PQ_i|²`.
    pub a1: [TermPair; 2],
    /// `∫∇PQ₁·∇PQ₂`.
    pub a2: TermPair,
    /// Cross part of the potential, `(∫|PQ₁+PQ₂|^{p+1} − Σ∫|PQ_i|^{p+1})/(p+1)`.
    pub a6: TermPair,
    /// `∫|PQ_i|^{p+1}/(p+1)`.
    pub a7: [TermPair; 2],
    /// `|Σa1 + a2 − Σa7 − a6 − expansion|` over the expansion terms.
    pub recombination_defect: f64,
}

/// Hatted centre and `Q(â)` for each member of a pair.
fn pair_geometry(params: &[BubbleParams; 2], base: &BubbleSum) -> Result<([Vec<f64>; 2], [f64; 2])> {
    let x1 = params[0].xi_hat()?;
    let x2 = params[1].xi_hat()?;
    let q1 = base.value(&params[0].a_hat()?);
    let q2 = base.value(&params[1].a_hat()?);
    Ok(([x1, x2], [q1, q2]))
}

fn check_pair(domain: &DomainSpec, xi: &[Vec<f64>; 2], separation: f64) -> Result<()> {
    for (i, x) in xi.iter().enumerate() {
        if !domain.contains(x) || domain.boundary_distance(x) <= separation {
            return Err(Error::Constraint(format!("dist(xi_{}, boundary) must exceed {separation}", i + 1)));
        }
    }
    let d: f64 = xi[0].iter().zip(&xi[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if d <= separation {
        return Err(Error::Constraint(format!("|xi_1 - xi_2| must exceed {separation}")));
    }
    Ok(())
}

/// Pair of projected family members at the given scales.
fn projected_pair(
    domain: &DomainSpec,
    params: &[BubbleParams; 2],
    base: &BubbleSum,
    lambdas: [f64; 2],
) -> Result<[ProjectedSum; 2]> {
    let mk = |i: usize| -> Result<ProjectedSum> {
        let mut p = params[i].clone();
        p.lambda = lambdas[i];
        ProjectedSum::new(domain, family_bubble_sum(&p, base)?)
    };
    Ok([mk(0)?, mk(1)?])
}

/// Compares `J_0(PQ₁+PQ₂)` with `2γ + α[H₁₁Q₁²λ₁^{n−2} + H₂₂Q₂²λ₂^{n−2} − 2G₁₂Q₁Q₂(λ₁λ₂)^{(n−2)/2}]`.
pub fn expansion_check_j0(
    domain: &DomainSpec,
    params: &[BubbleParams; 2],
    base: &BubbleSum,
    lambdas: &[f64],
    separation: f64,
    level: QuadratureLevel,
) -> Result<Vec<EnergyReport>> {
    let n = domain.n;
    let p = critical_exponent(n);
    let (xi, qa) = pair_geometry(params, base)?;
    check_pair(domain, &xi, separation)?;
    let provider = GreensProvider::analytic(domain.clone())?;
    let h = [provider.robin(&xi[0])?, provider.robin(&xi[1])?];
    let g = provider.green(&xi[0], &xi[1])?;
    let whole = whole_space_energy(base, QuadratureLevel::default())?;
    let bn = b_n(n);
    let alpha = 0.5 / (bn * bn);
    let nu = 0.5 * (n as f64 - 2.0);
    lambdas
        .iter()
        .map(|&lambda| {
            let lam = [lambda, lambda];
            let pq = projected_pair(domain, params, base, lam)?;
            let it = pair_integrals(domain, [&pq[0], &pq[1]], 0.0, level)?;
            let self_exp = |i: usize| alpha * h[i] * qa[i] * qa[i] * lam[i].powf(2.0 * nu);
            let inter = alpha * g * qa[0] * qa[1] * (lam[0] * lam[1]).powf(nu);
            let a1 = [0, 1].map(|i| TermPair {
                direct: 0.5 * it.self_gradient[i],
                expansion: 0.5 * whole.gradient - self_exp(i),
            });
            let a7 = [0, 1].map(|i| TermPair {
                direct: it.self_potential[i] / (p + 1.0),
                expansion: whole.potential / (p + 1.0) - 2.0 * self_exp(i),
            });
            let a2 = TermPair {
                direct: 0.5 * (it.cross_gradient[0] + it.cross_gradient[1]),
                expansion: 2.0 * inter,
            };
            let a6 = TermPair {
                direct: (it.pair_potential - it.self_potential[0] - it.self_potential[1]) / (p + 1.0),
                expansion: 4.0 * inter,
            };
            let expansion = 2.0 * whole.energy + self_exp(0) + self_exp(1) - 2.0 * inter;
            let recombined = a1[0].expansion + a1[1].expansion + a2.expansion
                - a7[0].expansion
                - a7[1].expansion
                - a6.expansion;
            let direct = a1[0].direct + a1[1].direct + a2.direct - a7[0].direct - a7[1].direct - a6.direct;
            let residual = direct - expansion;
            Ok(EnergyReport {
                lambdas: lam,
                direct,
                expansion,
                residual,
                scaled_residual: residual / lambda.powi(n as i32 - 2),
                a1,
                a2,
                a6,
                a7,
                recombination_defect: (recombined - expansion).abs(),
            })
        })
        .collect()
}

/// Expansion of `J_ε` at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JepsPoint {
    pub epsilon: f64,
    pub lambdas: [f64; 2],
    pub direct: f64,
    pub expansion: f64,
    pub residual: f64,
    pub scaled_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JepsReport {
    pub big_lambdas: [f64; 2],
    pub points: Vec<JepsPoint>,
    /// Least-squares fit of `(J_ε − 2γ)/ε = c₁ log ε + c₂`.
    pub fitted_log_coefficient: f64,
    pub fitted_constant: f64,
    pub chi_n: f64,
    pub constants: ConstantSet,
}

/// Scales `λ_i = (β_n Λ_i² ε)^{1/(n−2)}`.
pub fn lambdas_for(constants: &ConstantSet, big: [f64; 2], epsilon: f64) -> [f64; 2] {
    let e = 1.0 / (constants.n as f64 - 2.0);
    big.map(|l| (constants.beta_n * l * l * epsilon).powf(e))
}

/// The expansion
/// `2γ + χ ε log ε + ε{2[I/(p+1)² − L/(p+1)] + χ log β} + ε w [2q + ((n−2)/2) log Λ₁Λ₂]`,
/// with `q = ½H₁₁Q₁²Λ₁² + ½H₂₂Q₂²Λ₂² − G₁₂Q₁Q₂Λ₁Λ₂`.
pub fn jeps_expansion(c: &ConstantSet, h: [f64; 2], g: f64, qa: [f64; 2], big: [f64; 2], epsilon: f64) -> f64 {
    let n = c.n as f64;
    let quad = 0.5 * h[0] * qa[0] * qa[0] * big[0] * big[0] + 0.5 * h[1] * qa[1] * qa[1] * big[1] * big[1]
        - g * qa[0] * qa[1] * big[0] * big[1];
    2.0 * c.gamma_n
        + c.chi_n * epsilon * epsilon.ln()
        + c.eta_n * epsilon
        + epsilon * c.w_n * (2.0 * quad + 0.5 * (n - 2.0) * (big[0] * big[1]).ln())
}

#[allow(clippy::too_many_arguments)]
pub fn expansion_check_jeps(
    domain: &DomainSpec,
    params: &[BubbleParams; 2],
    base: &BubbleSum,
    big: [f64; 2],
    epsilons: &[f64],
    separation: f64,
    level: QuadratureLevel,
) -> Result<JepsReport> {
    let n = domain.n;
    let (xi, qa) = pair_geometry(params, base)?;
    check_pair(domain, &xi, separation)?;
    let provider = GreensProvider::analytic(domain.clone())?;
    let h = [provider.robin(&xi[0])?, provider.robin(&xi[1])?];
    let g = provider.green(&xi[0], &xi[1])?;
    let constants = constant_set(base, QuadratureLevel::default())?;
    let p = critical_exponent(n);
    let mut points = Vec::new();
    for &eps in epsilons {
        let lam = lambdas_for(&constants, big, eps);
        for (l, x) in lam.iter().zip(&xi) {
            if 4.0 * l >= domain.boundary_distance(x) {
                return Err(Error::Constraint(format!("lambda {l} is too large for the domain")));
            }
        }
        let pq = projected_pair(domain, params, base, lam)?;
        let it = pair_integrals(domain, [&pq[0], &pq[1]], eps, level)?;
        let grad = it.self_gradient[0] + it.self_gradient[1] + it.cross_gradient[0] + it.cross_gradient[1];
        let direct = 0.5 * grad - it.pair_potential_eps / (p + 1.0 + eps);
        let expansion = jeps_expansion(&constants, h, g, qa, big, eps);
        points.push(JepsPoint {
            epsilon: eps,
            lambdas: lam,
            direct,
            expansion,
            residual: direct - expansion,
            scaled_residual: (direct - expansion) / eps,
        });
    }
    let xs: Vec<f64> = points.iter().map(|t| t.epsilon.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|t| (t.direct - 2.0 * constants.gamma_n) / t.epsilon).collect();
    let (c1, c2) = linear_fit(&xs, &ys);
    Ok(JepsReport {
        big_lambdas: big,
        points,
        fitted_log_coefficient: c1,
        fitted_constant: c2,
        chi_n: constants.chi_n,
        constants,
    })
}

/// Least-squares line `y = a x + b`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - sx) * (b - sy)).sum();
    let den: f64 = x.iter().map(|a| (a - sx) * (a - sx)).sum();
    let a = num / den;
    (a, sy - a * sx)
}

/// Grid energy `½∫|∇u|² − ∫|u|^{p+1+ε}/(p+1+ε)` of a field vanishing on `∂Ω`
/// (n = 3). The Dirichlet form uses the boundary-aware operator, which
/// amounts to one-sided differences on edges that cross `∂Ω`.
pub fn domain_energy(grid: &GridDomain, u: &GridField, epsilon: f64) -> f64 {
    let uu = grid.gather(u);
    let mut au = vec![0.0; uu.len()];
    grid.apply(&uu, &mut au);
    let h = grid.h;
    let q = critical_exponent(3) + 1.0 + epsilon;
    let grad = h * par::dot(&uu, &au);
    let pot = h.powi(3) * par::sum(uu.len(), |i| uu[i].abs().powf(q));
    0.5 * grad - pot / q
}
