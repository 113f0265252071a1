//! The `3n`-parameter family `Q_A`: dilation, translation, the Kelvin-type
//! parameter `a` and rotations from the subgroup generated by the planes
//! `(x1, x_l)` and `(x2, x_l)`.
//!
//! With `X = (x − R_θ ξ)/λ`, `â = R_θ a` and `D = 1 − 2â·X + |â|²|X|²`,
//!
//! `Q_A(x) = λ^{−(n−2)/2} D^{−(n−2)/2} Q((X − â|X|²)/D)`.
//!
//! This polynomial form has no singularity at `X = 0`. Near the pole `D → 0`
//! a Kelvin-invariant base is evaluated through the equivalent form
//! `λ^{−(n−2)/2} |X|^{2−n} Q(X/|X|² − â)`.

use crate::error::{Error, Result};
use crate::fields::{inv_pow_nu, Bubble, BubbleSum, ScalarField};
use crate::quadrature::MAX_DIM;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Angles `(θ12, θ13, …, θ1n, θ23, …, θ2n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationChart {
    pub theta: Vec<f64>,
}

impl RotationChart {
    pub fn identity(n: usize) -> Self {
        RotationChart {
            theta: vec![0.0; 2 * n - 3],
        }
    }

    /// Plane `(i, j)` (zero-based) of chart coordinate `index`.
    pub fn plane(n: usize, index: usize) -> (usize, usize) {
        if index == 0 {
            (0, 1)
        } else if index <= n - 2 {
            (0, index + 1)
        } else {
            (1, index - (n - 2) + 1)
        }
    }

    /// Chart index of the rotation in plane `(i, j)`, `i < j`.
    pub fn index_of(n: usize, i: usize, j: usize) -> Option<usize> {
        (0..2 * n - 3).find(|&c| Self::plane(n, c) == (i, j))
    }
}

fn plane_rotation(n: usize, i: usize, j: usize, t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    let (s, c) = t.sin_cos();
    m[(i, i)] = c;
    m[(i, j)] = -s;
    m[(j, i)] = s;
    m[(j, j)] = c;
    m
}

/// `R_θ = R12(θ12) · Π_l R1l(θ1l) · Π_l R2l(θ2l)`.
pub fn rotation_matrix(n: usize, chart: &RotationChart) -> Result<DMatrix<f64>> {
    if chart.theta.len() != 2 * n - 3 {
        return Err(Error::InvalidInput(format!(
            "rotation chart needs {} angles, got {}",
            2 * n - 3,
            chart.theta.len()
        )));
    }
    let mut r = DMatrix::identity(n, n);
    for (idx, t) in chart.theta.iter().enumerate() {
        let (i, j) = RotationChart::plane(n, idx);
        r *= plane_rotation(n, i, j, *t);
    }
    Ok(r)
}

/// The parameter record `A = (λ, ξ, a, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub lambda: f64,
    pub xi: Vec<f64>,
    pub a: [f64; 2],
    pub theta: RotationChart,
}

impl BubbleParams {
    pub fn identity(n: usize) -> Self {
        BubbleParams {
            lambda: 1.0,
            xi: vec![0.0; n],
            a: [0.0, 0.0],
            theta: RotationChart::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// `a` embedded as `(a1, a2, 0, …, 0)`.
    pub fn a_full(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        v[0] = self.a[0];
        v[1] = self.a[1];
        v
    }

    pub fn rotation(&self) -> Result<DMatrix<f64>> {
        rotation_matrix(self.dim(), &self.theta)
    }

    /// `ξ̂ = R_θ ξ`.
    pub fn xi_hat(&self) -> Result<Vec<f64>> {
        let r = self.rotation()?;
        Ok(mat_vec(&r, &self.xi))
    }

    /// `â = R_θ a`.
    pub fn a_hat(&self) -> Result<Vec<f64>> {
        let r = self.rotation()?;
        Ok(mat_vec(&r, &self.a_full()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidInput("lambda must be positive".into()));
        }
        crate::fields::check_dim(self.dim())?;
        self.rotation().map(|_| ())
    }
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

/// `η(x) = (x−ξ)/|x−ξ| − a|x−ξ|/λ`.
pub fn eta(lambda: f64, xi: &[f64], a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let d: Vec<f64> = x.iter().zip(xi).map(|(p, q)| p - q).collect();
    let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Singular("eta is undefined at x = xi".into()));
    }
    Ok(d.iter()
        .enumerate()
        .map(|(i, v)| v / r - a.get(i).copied().unwrap_or(0.0) * r / lambda)
        .collect())
}

/// `Q_A` over a base field, with the rotation precomputed.
pub struct FamilyMember<'a> {
    base: &'a dyn ScalarField,
    n: usize,
    lambda: f64,
    xi_hat: [f64; MAX_DIM],
    a_hat: [f64; MAX_DIM],
    a2: f64,
    kelvin: bool,
}

impl<'a> FamilyMember<'a> {
    pub fn new(params: &BubbleParams, base: &'a dyn ScalarField) -> Result<Self> {
        params.validate()?;
        let n = params.dim();
        if base.dim() != n {
            return Err(Error::InvalidInput("base dimension mismatch".into()));
        }
        let mut xi_hat = [0.0; MAX_DIM];
        let mut a_hat = [0.0; MAX_DIM];
        xi_hat[..n].copy_from_slice(&params.xi_hat()?);
        a_hat[..n].copy_from_slice(&params.a_hat()?);
        let a2 = a_hat.iter().map(|v| v * v).sum();
        Ok(FamilyMember {
            base,
            n,
            lambda: params.lambda,
            xi_hat,
            a_hat,
            a2,
            kelvin: base.kelvin_invariant(),
        })
    }
}

impl ScalarField for FamilyMember<'_> {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut xx = [0.0; MAX_DIM];
        let mut x2 = 0.0;
        let mut ax = 0.0;
        for j in 0..n {
            xx[j] = (x[j] - self.xi_hat[j]) / self.lambda;
            x2 += xx[j] * xx[j];
            ax += self.a_hat[j] * xx[j];
        }
        let scale = inv_pow_nu(self.lambda, n);
        let d = 1.0 - 2.0 * ax + self.a2 * x2;
        // |Y|² = |X|²/D; switch to the inverted form when |Y| > 1.
        if self.kelvin && x2 > d {
            let mut w = [0.0; MAX_DIM];
            for j in 0..n {
                w[j] = xx[j] / x2 - self.a_hat[j];
            }
            return scale * inv_pow_nu(x2, n) * self.base.value(&w[..n]);
        }
        let mut y = [0.0; MAX_DIM];
        for j in 0..n {
            y[j] = (xx[j] - self.a_hat[j] * x2) / d;
        }
        scale * inv_pow_nu(d, n) * self.base.value(&y[..n])
    }
}

/// Evaluates `Q_A(x)`.
pub fn q_family(params: &BubbleParams, base: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    Ok(FamilyMember::new(params, base)?.value(x))
}

/// The pre-rotation form `Θ_A(x) = Q_A(R_θ x)`.
pub fn theta_family(params: &BubbleParams, base: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    let r = params.rotation()?;
    let rx = mat_vec(&r, x);
    q_family(params, base, &rx)
}

/// `|w|^{2−n} B(w/|w|²; c, s)` is the bubble with centre `c/K`, scale `s/K`,
/// `K = |c|² + s²`.
fn kelvin_bubble(center: &[f64], scale: f64) -> (Vec<f64>, f64) {
    let k = center.iter().map(|v| v * v).sum::<f64>() + scale * scale;
    (center.iter().map(|v| v / k).collect(), scale / k)
}

/// `Q_A` for a bubble-sum base, written again as a bubble sum.
///
/// In the inverted form `Q_A = λ^{−(n−2)/2}|X|^{2−n}(KQ)(X/|X|² − â)`, where
/// `K` is the Kelvin transform, every bubble is carried to a bubble. The
/// result agrees with [`FamilyMember`] for any base, Kelvin-invariant or not.
pub fn family_bubble_sum(params: &BubbleParams, base: &BubbleSum) -> Result<BubbleSum> {
    params.validate()?;
    let n = params.dim();
    if base.dim() != n {
        return Err(Error::InvalidInput("base dimension mismatch".into()));
    }
    let xi_hat = params.xi_hat()?;
    let a_hat = params.a_hat()?;
    let lambda = params.lambda;
    let bubbles = base
        .bubbles()
        .iter()
        .map(|b| {
            let (c1, s1) = kelvin_bubble(&b.center, b.scale);
            let shifted: Vec<f64> = c1.iter().zip(&a_hat).map(|(c, a)| c + a).collect();
            let (c2, s2) = kelvin_bubble(&shifted, s1);
            Bubble {
                center: c2.iter().zip(&xi_hat).map(|(c, x)| x + lambda * c).collect(),
                scale: lambda * s2,
                weight: b.weight,
            }
        })
        .collect();
    BubbleSum::new(n, bubbles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_planes_cover_the_subgroup() {
        let n = 5;
        let planes: Vec<_> = (0..2 * n - 3).map(|c| RotationChart::plane(n, c)).collect();
        assert_eq!(planes, vec![(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)]);
        assert_eq!(RotationChart::index_of(n, 1, 3), Some(5));
    }

    #[test]
    fn quarter_turn() {
        let mut c = RotationChart::identity(3);
        c.theta[0] = std::f64::consts::FRAC_PI_2;
        let r = rotation_matrix(3, &c).unwrap();
        let v = mat_vec(&r, &[1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eta_examples() {
        let e = eta(1.0, &[0.0; 3], &[0.5, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((e[0] - 0.5).abs() < 1e-15 && e[1] == 0.0);
        assert!(eta(1.0, &[0.0; 3], &[0.5, 0.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn bubble_sum_form_matches_direct_form() {
        let base = crate::fields::build_tower(&crate::fields::TowerConfig::new(3, 8).unwrap())
            .unwrap()
            .field;
        let mut p = BubbleParams::identity(3);
        p.lambda = 0.3;
        p.xi = vec![0.2, -0.1, 0.05];
        p.a = [0.15, -0.1];
        p.theta.theta = vec![0.3, -0.2, 0.4];
        let direct = FamilyMember::new(&p, &base).unwrap();
        let sum = family_bubble_sum(&p, &base).unwrap();
        for x in [[0.1, 0.2, 0.3], [0.25, -0.1, 0.0], [-1.0, 0.5, 2.0], [0.2, -0.1, 0.06]] {
            let (a, b) = (direct.value(&x), sum.value(&x));
            assert!((a - b).abs() < 1e-11 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}
