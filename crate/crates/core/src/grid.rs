//! Uniform Cartesian grids in three dimensions: masked domains, the
//! second-order Dirichlet Laplacian, Krylov solvers and grid fields.
//!
//! Curved boundaries use the symmetric ghost-fluid treatment: when the
//! neighbour of an interior node lies outside, the boundary is located at
//! fraction `θ` of the edge and the ghost value is the linear extrapolation
//! through the boundary value. The operator stays symmetric positive definite
//! and keeps the M-matrix structure, so the discrete maximum principle holds.

use crate::error::{Error, Result};
use crate::par;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const NONE: u32 = u32::MAX;
/// Smallest boundary fraction kept on an edge.
const THETA_MIN: f64 = 1e-6;

/// Geometry of a masked grid domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridShape {
    /// Unit ball.
    Ball,
    /// `δ < |x| < 1`.
    Annulus { delta: f64 },
    /// Interior flags on the box nodes; the boundary sits on exterior nodes.
    Mask { inside: Vec<bool> },
}

/// An edge from an interior node to the boundary.
#[derive(Debug, Clone, Copy)]
struct Crossing {
    unknown: u32,
    theta: f64,
    point: [f64; 3],
}

/// Cubic grid with `dims` nodes per axis over `[origin, origin + (dims−1)h]³`.
#[derive(Debug, Clone)]
pub struct GridDomain {
    pub dims: usize,
    pub h: f64,
    pub origin: [f64; 3],
    pub shape: GridShape,
    unknown_of: Vec<u32>,
    nodes: Vec<usize>,
    neighbors: Vec<[u32; 6]>,
    diag: Vec<f64>,
    crossings: Vec<Crossing>,
}

/// Convergence record of a Krylov solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub history: Vec<f64>,
}

impl GridDomain {
    /// Grid on `[−1, 1]³` with `dims` nodes per axis.
    pub fn new(shape: GridShape, dims: usize) -> Result<Self> {
        if dims < 8 {
            return Err(Error::InvalidInput("grid needs at least 8 nodes per axis".into()));
        }
        let h = 2.0 / (dims - 1) as f64;
        Self::with_box(shape, dims, h, [-1.0; 3])
    }

    pub fn with_box(shape: GridShape, dims: usize, h: f64, origin: [f64; 3]) -> Result<Self> {
        let total = dims * dims * dims;
        if let GridShape::Annulus { delta } = shape {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::InvalidInput(format!("annulus needs 0 < delta < 1, got {delta}")));
            }
        }
        if let GridShape::Mask { inside } = &shape {
            if inside.len() != total {
                return Err(Error::InvalidInput("mask length does not match the grid".into()));
            }
        }
        let mut d = GridDomain {
            dims,
            h,
            origin,
            shape,
            unknown_of: vec![NONE; total],
            nodes: Vec::new(),
            neighbors: Vec::new(),
            diag: Vec::new(),
            crossings: Vec::new(),
        };
        for idx in 0..total {
            if d.inside_node(idx) {
                d.unknown_of[idx] = d.nodes.len() as u32;
                d.nodes.push(idx);
            }
        }
        if d.nodes.is_empty() {
            return Err(Error::InvalidInput("grid domain has no interior nodes".into()));
        }
        let m = d.nodes.len();
        d.neighbors = vec![[NONE; 6]; m];
        d.diag = vec![0.0; m];
        for u in 0..m {
            let idx = d.nodes[u];
            let (i, j, k) = d.ijk(idx);
            let p = d.point(idx);
            for (dir, (di, dj, dk)) in DIRS.iter().enumerate() {
                let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                let nb = if ni < 0 || nj < 0 || nk < 0 || ni >= dims as i64 || nj >= dims as i64 || nk >= dims as i64 {
                    None
                } else {
                    Some(d.index(ni as usize, nj as usize, nk as usize))
                };
                match nb.map(|n| d.unknown_of[n]) {
                    Some(nu) if nu != NONE => {
                        d.neighbors[u][dir] = nu;
                        d.diag[u] += 1.0;
                    }
                    _ => {
                        let q = [p[0] + *di as f64 * h, p[1] + *dj as f64 * h, p[2] + *dk as f64 * h];
                        let theta = d.boundary_fraction(&p, &q).max(THETA_MIN);
                        let point = [
                            p[0] + theta * (q[0] - p[0]),
                            p[1] + theta * (q[1] - p[1]),
                            p[2] + theta * (q[2] - p[2]),
                        ];
                        d.diag[u] += 1.0 / theta;
                        d.crossings.push(Crossing {
                            unknown: u as u32,
                            theta,
                            point,
                        });
                    }
                }
            }
        }
        Ok(d)
    }

    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_nodes(&self) -> usize {
        self.dims * self.dims * self.dims
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims + j) * self.dims + k
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.dims;
        let j = (idx / self.dims) % self.dims;
        (idx / (self.dims * self.dims), j, k)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.ijk(idx);
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
            self.origin[2] + k as f64 * self.h,
        ]
    }

    /// Box index of unknown `u`.
    pub fn node_of(&self, u: usize) -> usize {
        self.nodes[u]
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.unknown_of[idx] != NONE
    }

    /// Whether a point lies in the open domain (shape test, not grid based).
    pub fn contains(&self, x: &[f64]) -> bool {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        match &self.shape {
            GridShape::Ball => r < 1.0,
            GridShape::Annulus { delta } => r > *delta && r < 1.0,
            GridShape::Mask { .. } => {
                let f = |v: f64, o: f64| ((v - o) / self.h).round();
                let (i, j, k) = (f(x[0], self.origin[0]), f(x[1], self.origin[1]), f(x[2], self.origin[2]));
                let n = self.dims as f64;
                i >= 0.0 && j >= 0.0 && k >= 0.0 && i < n && j < n && k < n
                    && self.is_interior(self.index(i as usize, j as usize, k as usize))
            }
        }
    }

    /// Distance from `x` to the boundary for ball and annulus shapes.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        match &self.shape {
            GridShape::Ball => 1.0 - r,
            GridShape::Annulus { delta } => (1.0 - r).min(r - delta),
            GridShape::Mask { .. } => {
                let mut best = f64::INFINITY;
                for c in &self.crossings {
                    let d = ((c.point[0] - x[0]).powi(2) + (c.point[1] - x[1]).powi(2) + (c.point[2] - x[2]).powi(2)).sqrt();
                    best = best.min(d);
                }
                best
            }
        }
    }

    fn inside_node(&self, idx: usize) -> bool {
        match &self.shape {
            GridShape::Mask { inside } => inside[idx],
            _ => self.contains(&self.point(idx)),
        }
    }

    /// Fraction `θ ∈ (0, 1]` of the edge `p → q` at which the boundary lies.
    fn boundary_fraction(&self, p: &[f64; 3], q: &[f64; 3]) -> f64 {
        let radius = match &self.shape {
            GridShape::Mask { .. } => return 1.0,
            GridShape::Ball => 1.0,
            GridShape::Annulus { delta } => {
                let rq = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                if rq <= *delta {
                    *delta
                } else {
                    1.0
                }
            }
        };
        let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
        let a = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let b = 2.0 * (p[0] * d[0] + p[1] * d[1] + p[2] * d[2]);
        let c = p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - radius * radius;
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        let roots = [(-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a)];
        roots
            .iter()
            .copied()
            .filter(|t| *t > 0.0 && *t <= 1.0 + 1e-12)
            .fold(f64::INFINITY, f64::min)
            .min(1.0)
    }

    /// `y = A x` for the scaled operator `A = −h²Δ_h` with homogeneous
    /// boundary values.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        par::for_each_mut(y, |u, out| {
            let nb = &self.neighbors[u];
            let mut s = self.diag[u] * x[u];
            for v in nb {
                if *v != NONE {
                    s -= x[*v as usize];
                }
            }
            *out = s;
        });
    }

    /// Right-hand side contribution `Σ g/θ` of boundary values.
    pub fn boundary_rhs(&self, g: &(dyn Fn(&[f64; 3]) -> f64 + Sync)) -> Vec<f64> {
        let mut b = vec![0.0; self.unknowns()];
        let vals = par::map(self.crossings.len(), |c| {
            let cr = &self.crossings[c];
            g(&cr.point) / cr.theta
        });
        for (cr, v) in self.crossings.iter().zip(vals) {
            b[cr.unknown as usize] += v;
        }
        b
    }

    /// Mean of `g` over the boundary crossings.
    fn boundary_mean(&self, g: &(dyn Fn(&[f64; 3]) -> f64 + Sync)) -> f64 {
        let s = par::sum(self.crossings.len(), |c| g(&self.crossings[c].point));
        s / self.crossings.len().max(1) as f64
    }

    /// Range of `g` over the boundary crossings.
    pub fn boundary_range(&self, g: &(dyn Fn(&[f64; 3]) -> f64 + Sync)) -> (f64, f64) {
        let v = par::map(self.crossings.len(), |c| g(&self.crossings[c].point));
        v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)))
    }

    /// Solves `−Δ_h u = f` in the interior with `u = g` on the boundary.
    pub fn solve_dirichlet(
        &self,
        g: &(dyn Fn(&[f64; 3]) -> f64 + Sync),
        f: Option<&[f64]>,
        tol: f64,
        max_iter: usize,
    ) -> Result<(Vec<f64>, SolveStats)> {
        let mut b = self.boundary_rhs(g);
        if let Some(f) = f {
            let h2 = self.h * self.h;
            b.iter_mut().zip(f).for_each(|(bi, fi)| *bi += h2 * fi);
        }
        let x0 = vec![self.boundary_mean(g); self.unknowns()];
        let (x, stats) = pcg(self, &b, x0, tol, max_iter);
        if stats.relative_residual > tol {
            return Err(Error::SolverNotConverged {
                iterations: stats.iterations,
                residual: stats.relative_residual,
            });
        }
        Ok((x, stats))
    }

    /// Scatters unknowns into a box-sized field; exterior nodes take `outside(point)`.
    pub fn to_field(&self, u: &[f64], outside: &(dyn Fn(&[f64; 3]) -> f64 + Sync)) -> GridField {
        let mut values = vec![0.0; self.total_nodes()];
        par::for_each_mut(&mut values, |idx, v| {
            let w = self.unknown_of[idx];
            *v = if w != NONE { u[w as usize] } else { outside(&self.point(idx)) };
        });
        GridField {
            dims: self.dims,
            h: self.h,
            origin: self.origin,
            values,
            interior: self.unknown_of.iter().map(|w| *w != NONE).collect(),
        }
    }

    /// Gathers the interior values of a field into unknown order.
    pub fn gather(&self, field: &GridField) -> Vec<f64> {
        self.nodes.iter().map(|idx| field.values[*idx]).collect()
    }

    /// Samples a function at the interior nodes.
    pub fn sample(&self, f: &(dyn Fn(&[f64; 3]) -> f64 + Sync)) -> Vec<f64> {
        par::map(self.unknowns(), |u| f(&self.point(self.nodes[u])))
    }

    /// Boundary-adjacent unknowns.
    pub fn boundary_adjacent(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.crossings.iter().map(|c| c.unknown as usize).collect();
        v.dedup();
        v
    }
}

const DIRS: [(i64, i64, i64); 6] = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    par::for_each_mut(y, |i, v| *v += a * x[i]);
}

/// Jacobi-preconditioned conjugate gradients for the scaled Laplacian.
fn pcg(d: &GridDomain, b: &[f64], mut x: Vec<f64>, tol: f64, max_iter: usize) -> (Vec<f64>, SolveStats) {
    let m = b.len();
    let bnorm = par::dot(b, b).sqrt().max(1e-300);
    let mut r = vec![0.0; m];
    d.apply(&x, &mut r);
    par::for_each_mut(&mut r, |i, v| *v = b[i] - *v);
    let mut history = vec![par::dot(&r, &r).sqrt() / bnorm];
    if history[0] <= tol {
        return (
            x,
            SolveStats {
                iterations: 0,
                relative_residual: history[0],
                history,
            },
        );
    }
    let mut z: Vec<f64> = r.iter().zip(&d.diag).map(|(a, b)| a / b).collect();
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut ap = vec![0.0; m];
    let mut it = 0;
    while it < max_iter {
        it += 1;
        d.apply(&p, &mut ap);
        let alpha = rz / par::dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rel = par::dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            break;
        }
        par::for_each_mut(&mut z, |i, v| *v = r[i] / d.diag[i]);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        par::for_each_mut(&mut p, |i, v| *v = z[i] + beta * *v);
    }
    let rel = *history.last().unwrap();
    (
        x,
        SolveStats {
            iterations: it,
            relative_residual: rel,
            history,
        },
    )
}

/// MINRES for a symmetric, possibly indefinite operator.
pub fn minres(
    op: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveStats) {
    let m = b.len();
    let mut x = vec![0.0; m];
    let beta1 = par::dot(b, b).sqrt();
    let mut history = vec![1.0];
    if beta1 == 0.0 {
        return (
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
                history: vec![0.0],
            },
        );
    }
    let mut v_old = vec![0.0; m];
    let mut v: Vec<f64> = b.iter().map(|t| t / beta1).collect();
    let mut w_old = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut av = vec![0.0; m];
    let (mut beta, mut eta) = (beta1, beta1);
    let (mut c_old, mut s_old, mut c, mut s) = (1.0, 0.0, 1.0, 0.0);
    let mut it = 0;
    let mut rel = 1.0;
    while it < max_iter {
        it += 1;
        op(&v, &mut av);
        let alpha = par::dot(&v, &av);
        par::for_each_mut(&mut av, |i, t| *t -= alpha * v[i] + beta * v_old[i]);
        let beta_new = par::dot(&av, &av).sqrt();
        let delta = c * alpha - c_old * s * beta;
        let rho2 = s * alpha + c_old * c * beta;
        let rho3 = s_old * beta;
        let rho1 = (delta * delta + beta_new * beta_new).sqrt();
        let c_new = delta / rho1;
        let s_new = beta_new / rho1;
        let mut w_new = vec![0.0; m];
        par::for_each_mut(&mut w_new, |i, t| *t = (v[i] - rho3 * w_old[i] - rho2 * w[i]) / rho1);
        axpy(c_new * eta, &w_new, &mut x);
        eta *= -s_new;
        rel = eta.abs() / beta1;
        history.push(rel);
        w_old = std::mem::replace(&mut w, w_new);
        let v_new: Vec<f64> = if beta_new > 0.0 { av.iter().map(|t| t / beta_new).collect() } else { vec![0.0; m] };
        v_old = std::mem::replace(&mut v, v_new);
        beta = beta_new;
        c_old = c;
        s_old = s;
        c = c_new;
        s = s_new;
        if rel <= tol || beta_new == 0.0 {
            break;
        }
    }
    (
        x,
        SolveStats {
            iterations: it,
            relative_residual: rel,
            history,
        },
    )
}

/// Values on the full box with the interior flags of their domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub dims: usize,
    pub h: f64,
    pub origin: [f64; 3],
    pub values: Vec<f64>,
    pub interior: Vec<bool>,
}

/// JSON sidecar describing a binary grid field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub n: usize,
    pub dims: [usize; 3],
    pub spacing: f64,
    pub origin: [f64; 3],
    pub layout: String,
    pub interior_nodes: usize,
    pub min: f64,
    pub max: f64,
}

impl GridField {
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let d = self.dims;
        let (i, j, k) = (idx / (d * d), (idx / d) % d, idx % d);
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
            self.origin[2] + k as f64 * self.h,
        ]
    }

    /// Trilinear interpolation; points outside the box are clamped.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.dims;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let t = ((x[a] - self.origin[a]) / self.h).clamp(0.0, (d - 1) as f64);
            let i = (t.floor() as usize).min(d - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut s = 0.0;
        for c in 0..8 {
            let (di, dj, dk) = (c >> 2 & 1, c >> 1 & 1, c & 1);
            let w = (if di == 1 { frac[0] } else { 1.0 - frac[0] })
                * (if dj == 1 { frac[1] } else { 1.0 - frac[1] })
                * (if dk == 1 { frac[2] } else { 1.0 - frac[2] });
            s += w * self.values[((base[0] + di) * d + base[1] + dj) * d + base[2] + dk];
        }
        s
    }

    /// Range over interior nodes.
    pub fn interior_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .zip(&self.interior)
            .filter(|(_, i)| **i)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (v, _)| (a.min(*v), b.max(*v)))
    }

    pub fn sidecar(&self) -> GridSidecar {
        let (min, max) = self.interior_range();
        GridSidecar {
            n: 3,
            dims: [self.dims; 3],
            spacing: self.h,
            origin: self.origin,
            layout: "header: n (u64), dims (3 x u64), spacing (f64), origin (3 x f64), little-endian; then row-major f64 values, last index fastest".into(),
            interior_nodes: self.interior.iter().filter(|b| **b).count(),
            min,
            max,
        }
    }

    /// Writes the binary layout to `path` and the sidecar to `path.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * self.values.len());
        buf.extend_from_slice(&3u64.to_le_bytes());
        for _ in 0..3 {
            buf.extend_from_slice(&(self.dims as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.h.to_le_bytes());
        for o in self.origin {
            buf.extend_from_slice(&o.to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        let side = serde_json::to_string_pretty(&self.sidecar()).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path.with_extension("json"), side)?;
        Ok(())
    }

    /// Reads the binary layout; interior flags are not stored and are all set.
    pub fn read(path: &Path) -> Result<GridField> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let u = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let f = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        if buf.len() < 64 || u(0) != 3 {
            return Err(Error::Io("not a three-dimensional grid field".into()));
        }
        let dims = u(8) as usize;
        if u(16) as usize != dims || u(24) as usize != dims {
            return Err(Error::Io("only cubic grids are supported".into()));
        }
        let total = dims * dims * dims;
        if buf.len() != 64 + 8 * total {
            return Err(Error::Io("grid field size mismatch".into()));
        }
        let h = f(32);
        let origin = [f(40), f(48), f(56)];
        let values = (0..total).map(|i| f(64 + 8 * i)).collect();
        Ok(GridField {
            dims,
            h,
            origin,
            values,
            interior: vec![true; total],
        })
    }

    /// CSV of the slice `axis = index` with columns `x,y,z,value`.
    pub fn slice_csv(&self, axis: usize, index: usize) -> String {
        let d = self.dims;
        let mut s = String::from("x,y,z,value\n");
        for a in 0..d {
            for b in 0..d {
                let (i, j, k) = match axis {
                    0 => (index, a, b),
                    1 => (a, index, b),
                    _ => (a, b, index),
                };
                let idx = (i * d + j) * d + k;
                let p = self.point(idx);
                s.push_str(&format!("{:.6},{:.6},{:.6},{:.9e}\n", p[0], p[1], p[2], self.values[idx]));
            }
        }
        s
    }
}
