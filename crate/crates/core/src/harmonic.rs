//! Exact harmonic extensions of bubble-sum traces on the unit ball and on
//! annuli `δ < |x| < 1`, in any supported dimension.
//!
//! On a sphere of radius `R` a bubble centred at `z` with scale `s` has the
//! trace `c (A − B t)^{−ν}`, `t = x̂·ẑ`, `A = R² + |z|² + s²`, `B = 2R|z|`.
//! Writing `A − Bt = κ(1 − 2ρt + ρ²)` turns the trace into the Gegenbauer
//! generating function, so each degree `l` carries `c κ^{−ν} ρ^l C_l^ν(t)`.
//! The ball extension sums in closed form; the annulus adds a correction in
//! the radial pairs `r^l`, `r^{−(l+n−2)}`.

use crate::error::{Error, Result};
use crate::fields::{bubble_gamma, inv_pow_nu, BubbleSum, ScalarField};
use crate::greens::{gegenbauer, gegenbauer_at_one, DomainKind, DomainSpec};
use crate::quadrature::MAX_DIM;

const MAX_TERMS: usize = 600;

#[derive(Debug, Clone)]
struct TraceTerm {
    direction: [f64; MAX_DIM],
    /// Outer extension `w c κ^{−ν} (1 − 2ρ x·ẑ + ρ²|x|²)^{−ν}`.
    outer_coef: f64,
    outer_rho: f64,
    /// Inner correction coefficients `i_l − o_l δ^l`.
    inner: Vec<f64>,
}

/// Harmonic function in the domain equal to a bubble sum on its boundary.
#[derive(Debug, Clone)]
pub struct HarmonicExtension {
    n: usize,
    delta: f64,
    terms: Vec<TraceTerm>,
}

/// `(ρ, κ)` with `A − Bt = κ(1 − 2ρt + ρ²)`.
fn generating_params(a: f64, b: f64) -> (f64, f64) {
    let root = ((a - b) * (a + b)).max(0.0).sqrt();
    let kappa = 0.5 * (a + root);
    (b / (a + root), kappa)
}

impl HarmonicExtension {
    /// Extension of the trace of `trace` on `∂Ω` for a ball or annulus.
    pub fn new(domain: &DomainSpec, trace: &BubbleSum, tol: f64) -> Result<Self> {
        let n = domain.n;
        let delta = match domain.kind {
            DomainKind::Ball => 0.0,
            DomainKind::Annulus { delta } => delta,
            DomainKind::Grid { .. } => {
                return Err(Error::InvalidInput("mesh-free extension needs a ball or annulus".into()))
            }
        };
        if trace.dim() != n {
            return Err(Error::InvalidInput("trace dimension mismatch".into()));
        }
        let nu = (n as f64 - 2.0) / 2.0;
        let gamma = bubble_gamma(n);
        let mut terms = Vec::with_capacity(trace.bubbles().len());
        for b in trace.bubbles() {
            let zn = b.center.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut direction = [0.0; MAX_DIM];
            if zn > 0.0 {
                for j in 0..n {
                    direction[j] = b.center[j] / zn;
                }
            } else {
                direction[0] = 1.0;
            }
            let s2 = b.scale * b.scale;
            let c = b.weight * gamma * (2.0 * b.scale).powf(nu);
            let (rho1, kappa1) = generating_params(1.0 + zn * zn + s2, 2.0 * zn);
            let outer_coef = c * kappa1.powf(-nu);
            let mut inner = Vec::new();
            if delta > 0.0 {
                let (rhod, kappad) = generating_params(delta * delta + zn * zn + s2, 2.0 * delta * zn);
                let inner_coef = c * kappad.powf(-nu);
                let scale = inner_coef.abs().max(outer_coef.abs()).max(1e-300);
                let mut quiet = 0;
                for l in 0..MAX_TERMS {
                    let li = l as i32;
                    let cl = inner_coef * rhod.powi(li) - outer_coef * (rho1 * delta).powi(li);
                    inner.push(cl);
                    if gegenbauer_at_one(nu, l) * cl.abs() < tol * scale {
                        quiet += 1;
                        if quiet >= 3 {
                            break;
                        }
                    } else {
                        quiet = 0;
                    }
                }
                if quiet < 3 {
                    return Err(Error::SeriesNotConverged {
                        terms: MAX_TERMS,
                        tail: inner.last().copied().unwrap_or(0.0).abs(),
                    });
                }
            }
            terms.push(TraceTerm {
                direction,
                outer_coef,
                outer_rho: rho1,
                inner,
            });
        }
        Ok(HarmonicExtension { n, delta, terms })
    }

    /// Largest number of degrees used by any bubble.
    pub fn degrees(&self) -> usize {
        self.terms.iter().map(|t| t.inner.len()).max().unwrap_or(0)
    }
}

impl ScalarField for HarmonicExtension {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let nu = (n as f64 - 2.0) / 2.0;
        let r2: f64 = x[..n].iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let mut total = 0.0;
        let mut c = Vec::new();
        for t in &self.terms {
            let xz: f64 = (0..n).map(|j| x[j] * t.direction[j]).sum();
            let rho = t.outer_rho;
            total += t.outer_coef * inv_pow_nu(1.0 - 2.0 * rho * xz + rho * rho * r2, n);
            if !t.inner.is_empty() && r > 0.0 {
                c.resize(t.inner.len(), 0.0);
                gegenbauer(nu, (xz / r).clamp(-1.0, 1.0), &mut c);
                let q = self.delta / r;
                let mut s = 0.0;
                for (l, cl) in t.inner.iter().enumerate() {
                    let m = (l + n - 2) as i32;
                    let li = l as i32;
                    let d = q.powi(m) * (1.0 - r.powi(li + m)) / (1.0 - self.delta.powi(li + m));
                    s += c[l] * cl * d;
                }
                total += s;
            }
        }
        total
    }
}

/// `PQ = Q − φ` for a bubble sum `Q` on a ball or annulus.
#[derive(Debug, Clone)]
pub struct ProjectedSum {
    pub field: BubbleSum,
    pub extension: HarmonicExtension,
}

impl ProjectedSum {
    pub fn new(domain: &DomainSpec, field: BubbleSum) -> Result<Self> {
        let extension = HarmonicExtension::new(domain, &field, 1e-15)?;
        Ok(ProjectedSum { field, extension })
    }

    /// `(PQ, −ΔPQ)` at `x`.
    pub fn value_and_source(&self, x: &[f64]) -> (f64, f64) {
        let (q, s) = self.field.value_and_source(x);
        (q - self.extension.value(x), s)
    }
}

impl ScalarField for ProjectedSum {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.field.value(x) - self.extension.value(x)
    }
}
