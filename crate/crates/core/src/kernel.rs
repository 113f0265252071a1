//! Kernel functions `z_0 … z_{3n−1}` of the linearised operator, the
//! parameter-derivative identities that generate them, and their Gram matrix.

use crate::error::{Error, Result};
use crate::family::{q_family, theta_family, BubbleParams, RotationChart};
use crate::fields::{critical_exponent, ScalarField, Symmetry};
use crate::par;
use crate::quadrature::{QuadratureLevel, SpaceRule, MAX_DIM};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Most kernel functions for `n ≤ 5`.
const MAX_KERNEL: usize = 3 * MAX_DIM;

/// The `3n` kernel functions over a base field with analytic gradient.
pub struct KernelBasis<'a> {
    base: &'a dyn ScalarField,
    n: usize,
}

/// Parameter direction generating a kernel function, and the sign relating
/// the parameter derivative of the family to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    Dilation,
    Translation(usize),
    /// Rotation in the plane `(i, j)` (zero-based), applied to the pre-rotation form.
    Rotation(usize, usize),
    /// Component of the Kelvin-type parameter `a`.
    Kelvin(usize),
}

impl<'a> KernelBasis<'a> {
    pub fn new(base: &'a dyn ScalarField) -> Result<Self> {
        let n = base.dim();
        crate::fields::check_dim(n)?;
        let mut g = [0.0; MAX_DIM];
        if !base.gradient(&[0.0; MAX_DIM][..n], &mut g) {
            return Err(Error::InvalidInput("kernel basis needs an analytic gradient".into()));
        }
        Ok(KernelBasis { base, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        3 * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn base(&self) -> &dyn ScalarField {
        self.base
    }

    /// All `3n` values at `x`; returns `Q(x)`.
    pub fn values(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let n = self.n;
        let q = self.base.value(x);
        let mut g = [0.0; MAX_DIM];
        self.base.gradient(x, &mut g);
        let x2: f64 = x.iter().map(|v| v * v).sum();
        let z0 = 0.5 * (n as f64 - 2.0) * q + (0..n).map(|j| g[j] * x[j]).sum::<f64>();
        out[0] = z0;
        out[1..=n].copy_from_slice(&g[..n]);
        out[n + 1] = -x[1] * g[0] + x[0] * g[1];
        out[n + 2] = -2.0 * x[0] * z0 + x2 * g[0];
        out[n + 3] = -2.0 * x[1] * z0 + x2 * g[1];
        for l in 3..=n {
            out[n + l + 1] = -x[l - 1] * g[0] + x[0] * g[l - 1];
            out[2 * n + l - 1] = -x[l - 1] * g[1] + x[1] * g[l - 1];
        }
        q
    }

    pub fn kernel_function(&self, alpha: usize, x: &[f64]) -> Result<f64> {
        if alpha >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: alpha,
                limit: self.len(),
            });
        }
        let mut out = [0.0; MAX_KERNEL];
        self.values(x, &mut out);
        Ok(out[alpha])
    }

    /// Generator of `z_α` and the sign `s` with `z_α = s · ∂(family)`.
    ///
    /// Dilation, translation and the `a`-directions carry `s = −1`; rotations
    /// carry `s = +1` and act on the pre-rotation form.
    pub fn generator(&self, alpha: usize) -> Result<(Generator, f64)> {
        let n = self.n;
        let g = match alpha {
            0 => (Generator::Dilation, -1.0),
            a if a <= n => (Generator::Translation(a - 1), -1.0),
            a if a == n + 1 => (Generator::Rotation(0, 1), 1.0),
            a if a == n + 2 => (Generator::Kelvin(0), -1.0),
            a if a == n + 3 => (Generator::Kelvin(1), -1.0),
            a if a < 2 * n + 2 => (Generator::Rotation(0, a - n - 2), 1.0),
            a if a < 3 * n => (Generator::Rotation(1, a - 2 * n), 1.0),
            _ => {
                return Err(Error::IndexOutOfRange {
                    index: alpha,
                    limit: 3 * n,
                })
            }
        };
        Ok(g)
    }

    /// Central difference of the family along the generator of `z_α` at
    /// the identity parameters, with step `h`.
    pub fn family_derivative(&self, alpha: usize, x: &[f64], h: f64) -> Result<f64> {
        let n = self.n;
        let (gen, _) = self.generator(alpha)?;
        let eval = |t: f64| -> Result<f64> {
            let mut p = BubbleParams::identity(n);
            match gen {
                Generator::Dilation => {
                    p.lambda += t;
                    q_family(&p, self.base, x)
                }
                Generator::Translation(j) => {
                    p.xi[j] += t;
                    q_family(&p, self.base, x)
                }
                Generator::Kelvin(j) => {
                    p.a[j] += t;
                    q_family(&p, self.base, x)
                }
                Generator::Rotation(i, j) => {
                    let idx = RotationChart::index_of(n, i, j).expect("plane in chart");
                    p.theta.theta[idx] += t;
                    theta_family(&p, self.base, x)
                }
            }
        };
        Ok((eval(h)? - eval(-h)?) / (2.0 * h))
    }

    /// `|s·∂(family) − z_α(x)|` for the generator sign `s`.
    pub fn derivative_identity_residual(&self, alpha: usize, x: &[f64], h: f64) -> Result<f64> {
        let (_, s) = self.generator(alpha)?;
        let d = self.family_derivative(alpha, x, h)?;
        Ok((s * d - self.kernel_function(alpha, x)?).abs())
    }

    /// Coordinates in which `z_α` is odd, for bases with the tower symmetry
    /// (even `k`) or radial bases.
    pub fn parity(&self, alpha: usize) -> Vec<bool> {
        let n = self.n;
        let mut odd = vec![false; n];
        match alpha {
            0 => {}
            a if a <= n => odd[a - 1] = true,
            a if a == n + 1 => {
                odd[0] = true;
                odd[1] = true
            }
            a if a == n + 2 => odd[0] = true,
            a if a == n + 3 => odd[1] = true,
            a if a < 2 * n + 2 => {
                odd[0] = true;
                odd[a - n - 2] = true
            }
            a => {
                odd[1] = true;
                odd[a - 2 * n] = true
            }
        }
        odd
    }
}

/// Gram matrix of the kernel functions with weight `|Q|^{p−1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramReport {
    pub n: usize,
    pub matrix: Vec<Vec<f64>>,
    /// Blocks for the index pairs `(1, n+2)` and `(2, n+3)`.
    pub coupling_blocks: Vec<[[f64; 2]; 2]>,
    pub coupling_determinants: Vec<f64>,
    pub coupling_conditions: Vec<f64>,
    /// Singular values in decreasing order.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Largest `|G_αβ|/√(G_αα G_ββ)` over pairs of different parity.
    pub max_parity_offblock: f64,
    pub symmetry_defect: f64,
    /// Entries whose value moved by more than `1e−4·√(G_αα G_ββ)` against a
    /// coarser rule: `(α, β, change)`.
    pub flagged: Vec<(usize, usize, f64)>,
    /// RMS of `Δz_α + p|Q|^{p−1} z_α` relative to RMS of `p|Q|^{p−1} z_α`.
    pub linearized_residual: Vec<f64>,
}

fn gram_rule(base: &dyn ScalarField, level: QuadratureLevel) -> SpaceRule {
    let n = base.dim();
    match base.symmetry() {
        Symmetry::Tower { k, mu, scale } => SpaceRule::tower_full(n, k, mu, scale, level),
        Symmetry::None => SpaceRule::centered(n, &[0.0; MAX_DIM], 0.0, 8, level),
    }
}

fn gram_entries(basis: &KernelBasis, level: QuadratureLevel) -> Vec<Vec<f64>> {
    let m = basis.len();
    let n = basis.dim();
    let p = critical_exponent(n);
    let width = m * (m + 1) / 2;
    let rule = gram_rule(basis.base(), level);
    let flat = rule.integrate_vec(width, |x, w, acc| {
        let mut z = [0.0; MAX_KERNEL];
        let q = basis.values(x, &mut z);
        let wq = w * q.abs().powf(p - 1.0);
        let mut idx = 0;
        for a in 0..m {
            let za = wq * z[a];
            for b in a..m {
                acc[idx] += za * z[b];
                idx += 1;
            }
        }
    });
    let mut g = vec![vec![0.0; m]; m];
    let mut idx = 0;
    for a in 0..m {
        for b in a..m {
            g[a][b] = flat[idx];
            g[b][a] = flat[idx];
            idx += 1;
        }
    }
    g
}

pub fn gram_matrix(basis: &KernelBasis, level: QuadratureLevel) -> GramReport {
    let m = basis.len();
    let n = basis.dim();
    let g = gram_entries(basis, level);
    let coarse_level = QuadratureLevel {
        order: level.order.saturating_sub(2).max(3),
        refine: level.refine * 2.0,
        sphere: level.sphere,
    };
    let gc = gram_entries(basis, coarse_level);
    let scale = |a: usize, b: usize| (g[a][a].abs() * g[b][b].abs()).sqrt().max(1e-300);
    let mut flagged = Vec::new();
    let mut max_off: f64 = 0.0;
    let mut sym: f64 = 0.0;
    for a in 0..m {
        for b in a..m {
            let change = (g[a][b] - gc[a][b]).abs() / scale(a, b);
            if change > 1e-4 {
                flagged.push((a, b, change));
            }
            if basis.parity(a) != basis.parity(b) {
                max_off = max_off.max(g[a][b].abs() / scale(a, b));
            }
            sym = sym.max((g[a][b] - g[b][a]).abs());
        }
    }
    let mut blocks = Vec::new();
    let mut dets = Vec::new();
    let mut conds = Vec::new();
    for (i, j) in [(1, n + 2), (2, n + 3)] {
        let blk = [[g[i][i], g[i][j]], [g[j][i], g[j][j]]];
        let mat = DMatrix::from_row_slice(2, 2, &[blk[0][0], blk[0][1], blk[1][0], blk[1][1]]);
        let sv = mat.singular_values();
        dets.push(blk[0][0] * blk[1][1] - blk[0][1] * blk[1][0]);
        conds.push(sv.max() / sv.min());
        blocks.push(blk);
    }
    let full = DMatrix::from_fn(m, m, |a, b| g[a][b]);
    let mut sv: Vec<f64> = full.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let rank = sv.iter().filter(|s| **s > 1e-10 * sv[0]).count();
    GramReport {
        n,
        matrix: g,
        coupling_blocks: blocks,
        coupling_determinants: dets,
        coupling_conditions: conds,
        singular_values: sv,
        rank,
        max_parity_offblock: max_off,
        symmetry_defect: sym,
        flagged,
        linearized_residual: linearized_residual(basis, 1e-3),
    }
}

/// Fixed sample used for the linearised-equation residual.
fn residual_sample(n: usize) -> Vec<Vec<f64>> {
    let dirs = crate::fields::direction_set(n, 5, 12, 1);
    let mut pts = Vec::new();
    for (s, r) in [0.2, 0.45, 0.7, 1.4, 2.5].iter().enumerate() {
        for (i, d) in dirs.iter().enumerate() {
            if (i + s) % 3 == 0 {
                pts.push(d.iter().map(|v| r * v).collect());
            }
        }
    }
    pts
}

/// Relative RMS of `Δz_α + p|Q|^{p−1}z_α` on a fixed sample, with a
/// second-order finite-difference Laplacian of step `h`.
pub fn linearized_residual(basis: &KernelBasis, h: f64) -> Vec<f64> {
    let n = basis.dim();
    let m = basis.len();
    let p = critical_exponent(n);
    let pts = residual_sample(n);
    let rows = par::map(pts.len(), |i| {
        let x = &pts[i];
        let mut c = [0.0; MAX_KERNEL];
        let q = basis.values(x, &mut c);
        let mut lap = vec![-2.0 * n as f64 / (h * h); m];
        lap.iter_mut().zip(&c).for_each(|(l, v)| *l *= v);
        let mut y = x.clone();
        let mut z = [0.0; MAX_KERNEL];
        for j in 0..n {
            for s in [-1.0, 1.0] {
                y[j] = x[j] + s * h;
                basis.values(&y, &mut z);
                for a in 0..m {
                    lap[a] += z[a] / (h * h);
                }
            }
            y[j] = x[j];
        }
        let pot = p * q.abs().powf(p - 1.0);
        (0..m).map(|a| (lap[a] + pot * c[a], pot * c[a])).collect::<Vec<_>>()
    });
    (0..m)
        .map(|a| {
            let num: f64 = rows.iter().map(|r| r[a].0 * r[a].0).sum();
            let den: f64 = rows.iter().map(|r| r[a].1 * r[a].1).sum();
            (num / den.max(1e-300)).sqrt()
        })
        .collect()
}
