//! Fundamental solution, Dirichlet Green's functions and the pair function
//! `φ(ξ₁, ξ₂) = √(H(ξ₁,ξ₁) H(ξ₂,ξ₂)) − G(ξ₁, ξ₂)`.
//!
//! Conventions: `−ΔΓ = δ`, `Γ(x) = b_n |x|^{2−n}`, `−Δ_x G(x, y) = δ_y` with
//! zero boundary values, and `H = Γ − G`, so `G > 0` and `H > 0` inside.

use crate::error::{Error, Result};
use crate::fields::{b_n, check_dim, inv_pow_nu};
use crate::grid::{GridDomain, GridShape};
use crate::par;
use crate::quadrature::MAX_DIM;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Domain geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Ball,
    Annulus { delta: f64 },
    /// Interior flags on a cubic grid of `dims³` nodes starting at `origin`.
    Grid {
        dims: usize,
        spacing: f64,
        origin: [f64; 3],
        mask: Vec<bool>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub n: usize,
    pub kind: DomainKind,
}

impl DomainSpec {
    pub fn ball(n: usize) -> Self {
        DomainSpec { n, kind: DomainKind::Ball }
    }

    pub fn annulus(n: usize, delta: f64) -> Self {
        DomainSpec {
            n,
            kind: DomainKind::Annulus { delta },
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.n)?;
        match &self.kind {
            DomainKind::Ball => Ok(()),
            DomainKind::Annulus { delta } => {
                if *delta > 0.0 && *delta < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("annulus needs 0 < delta < 1, got {delta}")))
                }
            }
            DomainKind::Grid { dims, mask, .. } => {
                if self.n != 3 {
                    return Err(Error::UnsupportedDimension(self.n));
                }
                if mask.len() != dims * dims * dims {
                    return Err(Error::InvalidInput("mask length does not match the grid".into()));
                }
                if !mask_connected(*dims, mask) {
                    return Err(Error::InvalidInput("grid mask is not connected".into()));
                }
                Ok(())
            }
        }
    }

    /// Hole radius, zero for the ball.
    pub fn hole_radius(&self) -> f64 {
        match self.kind {
            DomainKind::Annulus { delta } => delta,
            _ => 0.0,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let r = norm(x);
        match &self.kind {
            DomainKind::Ball => r < 1.0,
            DomainKind::Annulus { delta } => r > *delta && r < 1.0,
            DomainKind::Grid {
                dims,
                spacing,
                origin,
                mask,
            } => {
                let mut idx = 0;
                for a in 0..3 {
                    let t = ((x[a] - origin[a]) / spacing).round();
                    if t < 0.0 || t >= *dims as f64 {
                        return false;
                    }
                    idx = idx * dims + t as usize;
                }
                mask[idx]
            }
        }
    }

    /// Distance to the boundary (ball and annulus; nearest exterior node for grids).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        match &self.kind {
            DomainKind::Ball => 1.0 - r,
            DomainKind::Annulus { delta } => (1.0 - r).min(r - delta),
            DomainKind::Grid {
                dims,
                spacing,
                origin,
                mask,
            } => {
                let mut best = f64::INFINITY;
                for (idx, inside) in mask.iter().enumerate() {
                    if !inside {
                        let (i, j, k) = (idx / (dims * dims), (idx / dims) % dims, idx % dims);
                        let p = [
                            origin[0] + i as f64 * spacing,
                            origin[1] + j as f64 * spacing,
                            origin[2] + k as f64 * spacing,
                        ];
                        best = best.min(dist(&p, x));
                    }
                }
                best
            }
        }
    }

    /// Shape for a grid discretisation with `dims` nodes per axis.
    pub fn grid_domain(&self, dims: usize) -> Result<GridDomain> {
        if self.n != 3 {
            return Err(Error::UnsupportedDimension(self.n));
        }
        match &self.kind {
            DomainKind::Ball => GridDomain::new(GridShape::Ball, dims),
            DomainKind::Annulus { delta } => GridDomain::new(GridShape::Annulus { delta: *delta }, dims),
            DomainKind::Grid {
                dims,
                spacing,
                origin,
                mask,
            } => GridDomain::with_box(GridShape::Mask { inside: mask.clone() }, *dims, *spacing, *origin),
        }
    }
}

fn mask_connected(dims: usize, mask: &[bool]) -> bool {
    let Some(start) = mask.iter().position(|b| *b) else {
        return false;
    };
    let mut seen = vec![false; mask.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0;
    while let Some(idx) = stack.pop() {
        count += 1;
        let (i, j, k) = (idx / (dims * dims), (idx / dims) % dims, idx % dims);
        let mut push = |ii: usize, jj: usize, kk: usize| {
            let n = (ii * dims + jj) * dims + kk;
            if mask[n] && !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        };
        if i > 0 {
            push(i - 1, j, k);
        }
        if i + 1 < dims {
            push(i + 1, j, k);
        }
        if j > 0 {
            push(i, j - 1, k);
        }
        if j + 1 < dims {
            push(i, j + 1, k);
        }
        if k > 0 {
            push(i, j, k - 1);
        }
        if k + 1 < dims {
            push(i, j, k + 1);
        }
    }
    count == mask.iter().filter(|b| **b).count()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `Γ(x) = b_n |x|^{2−n}`.
pub fn gamma(x: &[f64], n: usize) -> Result<f64> {
    check_dim(n)?;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Err(Error::Singular("fundamental solution at the origin".into()));
    }
    Ok(b_n(n) * inv_pow_nu(r2, n))
}

/// Gegenbauer polynomials `C_l^ν(t)` for `l = 0..out.len()`.
pub fn gegenbauer(nu: f64, t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = 2.0 * nu * t;
    }
    for l in 2..out.len() {
        let lf = l as f64;
        out[l] = (2.0 * t * (lf + nu - 1.0) * out[l - 1] - (lf + 2.0 * nu - 2.0) * out[l - 2]) / lf;
    }
}

/// `C_l^ν(1) = Γ(l+2ν)/(Γ(2ν) l!)`, the bound of `|C_l^ν|` on `[−1, 1]`.
pub fn gegenbauer_at_one(nu: f64, l: usize) -> f64 {
    (0..l).fold(1.0, |acc, j| acc * (j as f64 + 2.0 * nu) / (j as f64 + 1.0))
}

/// Evaluation backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Backend {
    /// Image formula (ball only).
    ClosedForm,
    /// Separation of variables truncated adaptively below `tol`, at most `max_degree`.
    HarmonicSeries { max_degree: usize, tol: f64 },
    /// Per-source Poisson solves on a `dims³` grid (n = 3).
    FiniteDifference { dims: usize, tol: f64 },
}

impl Backend {
    pub fn series() -> Self {
        Backend::HarmonicSeries { max_degree: 80, tol: 1e-8 }
    }

    pub fn grid(dims: usize) -> Self {
        Backend::FiniteDifference { dims, tol: 1e-10 }
    }
}

type Memo = Mutex<HashMap<[i64; 3], Arc<crate::grid::GridField>>>;

/// Green's function evaluator for one domain.
pub struct GreensProvider {
    domain: DomainSpec,
    backend: Backend,
    bn: f64,
    grid: Option<GridDomain>,
    memo: Memo,
}

impl std::fmt::Debug for GreensProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreensProvider")
            .field("domain", &self.domain.kind)
            .field("n", &self.domain.n)
            .field("backend", &self.backend)
            .finish()
    }
}

impl GreensProvider {
    pub fn new(domain: DomainSpec, backend: Backend) -> Result<Self> {
        domain.validate()?;
        let grid = match (&domain.kind, &backend) {
            (DomainKind::Ball, Backend::ClosedForm) => None,
            (_, Backend::ClosedForm) => {
                return Err(Error::InvalidInput("closed form is available for the ball only".into()))
            }
            (DomainKind::Grid { .. }, Backend::HarmonicSeries { .. }) => {
                return Err(Error::InvalidInput("series backend needs a ball or annulus".into()))
            }
            (_, Backend::HarmonicSeries { .. }) => None,
            (_, Backend::FiniteDifference { dims, .. }) => Some(domain.grid_domain(*dims)?),
        };
        Ok(GreensProvider {
            bn: b_n(domain.n),
            domain,
            backend,
            grid,
            memo: Mutex::new(HashMap::new()),
        })
    }

    /// Closed form on the ball, series on the annulus.
    pub fn analytic(domain: DomainSpec) -> Result<Self> {
        let backend = match domain.kind {
            DomainKind::Ball => Backend::ClosedForm,
            _ => Backend::series(),
        };
        Self::new(domain, backend)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn dim(&self) -> usize {
        self.domain.n
    }

    pub fn b_n(&self) -> f64 {
        self.bn
    }

    pub fn grid(&self) -> Option<&GridDomain> {
        self.grid.as_ref()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.domain.n {
            return Err(Error::InvalidInput("point dimension mismatch".into()));
        }
        if !self.domain.contains(x) {
            return Err(Error::InvalidInput(format!("point {x:?} is not interior")));
        }
        Ok(())
    }

    /// `H(x, y) = Γ(x − y) − G(x, y)`.
    pub fn regular_part(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        match &self.backend {
            Backend::ClosedForm => Ok(self.ball_h(x, y)),
            Backend::HarmonicSeries { max_degree, tol } => self.series_h(x, y, *max_degree, *tol),
            Backend::FiniteDifference { tol, .. } => {
                let a = self.grid_h(x, y, *tol)?;
                let b = self.grid_h(y, x, *tol)?;
                Ok(0.5 * (a + b))
            }
        }
    }

    pub fn green(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let g = gamma(&d, self.domain.n)?;
        Ok(g - self.regular_part(x, y)?)
    }

    /// Robin function `H(x, x)`.
    pub fn robin(&self, x: &[f64]) -> Result<f64> {
        self.regular_part(x, x)
    }

    fn ball_h(&self, x: &[f64], y: &[f64]) -> f64 {
        let q = dot(x, x) * dot(y, y) - 2.0 * dot(x, y) + 1.0;
        self.bn * inv_pow_nu(q, self.domain.n)
    }

    fn series_h(&self, x: &[f64], y: &[f64], max_degree: usize, tol: f64) -> Result<f64> {
        let ball = self.ball_h(x, y);
        let delta = self.domain.hole_radius();
        if delta == 0.0 {
            return Ok(ball);
        }
        let n = self.domain.n;
        let nu = (n as f64 - 2.0) / 2.0;
        let (r, s) = (norm(x), norm(y));
        let t = (dot(x, y) / (r * s)).clamp(-1.0, 1.0);
        let mut c = vec![0.0; max_degree + 1];
        gegenbauer(nu, t, &mut c);
        let mut sum = 0.0;
        let mut quiet = 0;
        let mut last_bound = f64::INFINITY;
        for l in 0..=max_degree {
            let m = (l + n - 2) as i32;
            let li = l as i32;
            let dlm = delta.powi(li + m);
            let radial = dlm * (s.powi(-m) - s.powi(li)) / (1.0 - dlm) * (r.powi(-m) - r.powi(li));
            sum += c[l] * radial;
            last_bound = gegenbauer_at_one(nu, l) * radial.abs();
            let scale = (ball / self.bn + sum.abs()).max(1e-300);
            if last_bound < tol * scale {
                quiet += 1;
                if quiet >= 3 {
                    return Ok(ball + self.bn * sum);
                }
            } else {
                quiet = 0;
            }
        }
        Err(Error::SeriesNotConverged {
            terms: max_degree + 1,
            tail: last_bound,
        })
    }

    /// Grid regular part `H̃(x, y)`: harmonic extension of `Γ(· − y)` interpolated at `x`.
    fn grid_h(&self, x: &[f64], y: &[f64], tol: f64) -> Result<f64> {
        let field = self.grid_column(y, tol)?;
        Ok(field.interpolate(x))
    }

    /// The harmonic extension of `Γ(· − y)` on the grid, memoised per source.
    pub fn grid_column(&self, y: &[f64], tol: f64) -> Result<Arc<crate::grid::GridField>> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("provider has no grid".into()))?;
        let key = [0, 1, 2].map(|a| (y[a] * 1e9).round() as i64);
        if let Some(f) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(f.clone());
        }
        let bn = self.bn;
        let yy = [y[0], y[1], y[2]];
        let g = move |p: &[f64; 3]| {
            let d2 = (p[0] - yy[0]).powi(2) + (p[1] - yy[1]).powi(2) + (p[2] - yy[2]).powi(2);
            bn / d2.sqrt()
        };
        let (u, _) = grid.solve_dirichlet(&g, None, tol, 20_000)?;
        let field = Arc::new(grid.to_field(&u, &g));
        self.memo.lock().expect("memo lock").insert(key, field.clone());
        Ok(field)
    }

    /// `φ(ξ₁, ξ₂) = √(H(ξ₁,ξ₁) H(ξ₂,ξ₂)) − G(ξ₁, ξ₂)`.
    pub fn phi_pair(&self, xi1: &[f64], xi2: &[f64]) -> Result<f64> {
        if xi1 == xi2 {
            return Err(Error::Singular("pair function needs distinct points".into()));
        }
        let h1 = self.robin(xi1)?;
        let h2 = self.robin(xi2)?;
        Ok((h1 * h2).sqrt() - self.green(xi1, xi2)?)
    }

    /// Samples `φ` on `{|ξ₁| = |ξ₂| = σ}`. The first sample is the antipodal
    /// pair on the `x1` axis; the rest are uniform on the product of spheres.
    pub fn check_hole_criterion(&self, sigma: f64, samples: usize, seed: u64) -> Result<HoleReport> {
        let n = self.domain.n;
        let delta = self.domain.hole_radius();
        if !(sigma > delta && sigma < 1.0) {
            return Err(Error::InvalidInput(format!("need hole radius < sigma < 1, got sigma = {sigma}")));
        }
        let pairs = sphere_pairs(n, sigma, samples, seed);
        let vals: Vec<Result<f64>> = par::map(pairs.len(), |i| self.phi_pair(&pairs[i].0, &pairs[i].1));
        let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
        let (mut imin, mut imax) = (0, 0);
        for (i, v) in vals.iter().enumerate() {
            if *v < vals[imin] {
                imin = i;
            }
            if *v > vals[imax] {
                imax = i;
            }
        }
        Ok(HoleReport {
            n,
            delta,
            sigma,
            samples: vals.len(),
            min: vals[imin],
            max: vals[imax],
            all_negative: vals.iter().all(|v| *v < 0.0),
            antipodal: vals[0],
            argmin: [pairs[imin].0.clone(), pairs[imin].1.clone()],
            argmax: [pairs[imax].0.clone(), pairs[imax].1.clone()],
        })
    }
}

/// Result of sampling the pair function on the sphere-pair manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleReport {
    pub n: usize,
    pub delta: f64,
    pub sigma: f64,
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub all_negative: bool,
    /// Value at `(σe₁, −σe₁)`.
    pub antipodal: f64,
    pub argmin: [Vec<f64>; 2],
    pub argmax: [Vec<f64>; 2],
}

/// Uniform point on the unit sphere by rejection from the cube.
pub fn random_unit(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = norm(&v);
        if r > 1e-3 && r <= 1.0 {
            return v.iter().map(|c| c / r).collect();
        }
    }
}

/// Pairs on `{|ξ₁| = |ξ₂| = σ}` with `|ξ₁ − ξ₂| ≥ 10⁻³σ`.
pub fn sphere_pairs(n: usize, sigma: f64, samples: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e1 = vec![0.0; n];
    e1[0] = sigma;
    let mut pairs = vec![(e1.clone(), e1.iter().map(|v| -v).collect())];
    while pairs.len() < samples.max(1) {
        let a: Vec<f64> = random_unit(n, &mut rng).iter().map(|v| v * sigma).collect();
        let b: Vec<f64> = random_unit(n, &mut rng).iter().map(|v| v * sigma).collect();
        if dist(&a, &b) >= 1e-3 * sigma {
            pairs.push((a, b));
        }
    }
    pairs
}

/// Rotation-invariant probe set: `count` points at radius `r` in the `(x1, x2)` plane.
pub fn ring_points(n: usize, r: f64, count: usize, phase: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let t = phase + 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            let mut v = vec![0.0; n];
            v[0] = r * t.cos();
            v[1] = r * t.sin();
            v
        })
        .collect()
}

/// Helper for fixed-size points in `R^n`.
pub fn point(n: usize, coords: &[f64]) -> [f64; MAX_DIM] {
    let mut p = [0.0; MAX_DIM];
    p[..n.min(coords.len())].copy_from_slice(&coords[..n.min(coords.len())]);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gegenbauer_half_is_legendre() {
        let mut c = [0.0; 4];
        gegenbauer(0.5, 0.3, &mut c);
        assert!((c[2] - 0.5 * (3.0 * 0.09 - 1.0)).abs() < 1e-15);
        assert!((c[3] - 0.5 * (5.0 * 0.027 - 0.9)).abs() < 1e-15);
        assert!((gegenbauer_at_one(1.0, 5) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn connectivity() {
        let d = 8;
        let mut m = vec![false; d * d * d];
        m[(2 * d + 2) * d + 2] = true;
        m[(5 * d + 5) * d + 5] = true;
        assert!(!mask_connected(d, &m));
        m[(2 * d + 2) * d + 2] = false;
        assert!(mask_connected(d, &m));
    }
}
