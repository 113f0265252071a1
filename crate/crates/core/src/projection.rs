//! Projections `PQ_A = Q_A − φ_A` onto functions vanishing on `∂Ω`, the
//! check of the leading-order expansion of `φ_A`, and grid diagnostics for
//! the full semilinear problem.

use crate::error::{Error, Result};
use crate::family::{family_bubble_sum, BubbleParams};
use crate::fields::{b_n, critical_exponent, inv_pow_nu, BubbleSum, ScalarField};
use crate::greens::{DomainSpec, GreensProvider};
use crate::grid::{minres, GridDomain, GridField, SolveStats};
use crate::harmonic::HarmonicExtension;
use crate::par;
use serde::{Deserialize, Serialize};

/// Default Krylov tolerance for grid solves.
pub const GRID_TOL: f64 = 1e-10;
const MAX_CG: usize = 20_000;

/// Discrete harmonic function with the boundary trace of `boundary`. Exterior
/// nodes carry the trace values.
pub fn harmonic_extension(grid: &GridDomain, boundary: &dyn ScalarField) -> Result<(GridField, SolveStats)> {
    if boundary.dim() != 3 {
        return Err(Error::UnsupportedDimension(boundary.dim()));
    }
    let g = |p: &[f64; 3]| boundary.value(p);
    let (u, stats) = grid.solve_dirichlet(&g, None, GRID_TOL, MAX_CG)?;
    Ok((grid.to_field(&u, &g), stats))
}

/// Grid projection of a family member.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub phi: GridField,
    pub pq: GridField,
    pub params: BubbleParams,
    pub stats: SolveStats,
}

/// `PQ_A = Q_A − φ_A` on the grid for a bubble-sum base.
pub fn project_bubble(grid: &GridDomain, params: &BubbleParams, base: &BubbleSum) -> Result<ProjectionResult> {
    let xi_hat = params.xi_hat()?;
    if !grid.contains(&xi_hat) || grid.boundary_distance(&xi_hat) < 2.0 * grid.h {
        return Err(Error::Constraint(format!(
            "centre {xi_hat:?} is within two grid spacings of the boundary"
        )));
    }
    let q = family_bubble_sum(params, base)?;
    let (phi, stats) = harmonic_extension(grid, &q)?;
    let mut pq = phi.clone();
    par::for_each_mut(&mut pq.values, |idx, v| {
        *v = if phi.interior[idx] { q.value(&phi.point(idx)) - phi.values[idx] } else { 0.0 };
    });
    Ok(ProjectionResult {
        phi,
        pq,
        params: params.clone(),
        stats,
    })
}

/// Outcome of the expansion-order fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderFit {
    pub lambdas: Vec<f64>,
    /// `max_probe |φ_A − b_n^{−1} λ^{(n−2)/2} Q(â) H(·, ξ̂)|` per `λ`.
    pub residuals: Vec<f64>,
    pub slope: f64,
    /// `Q(â)` used as the leading coefficient.
    pub leading_q: f64,
    /// Largest relative gap between `φ_A λ^{−(n−2)/2}` and `b_n^{−1}Q(â)H`
    /// over the probe set, per `λ`.
    pub coefficient_error: Vec<f64>,
    pub probes: usize,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (sx, sy) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - sx) * (b - sy)).sum();
    let den: f64 = lx.iter().map(|a| (a - sx) * (a - sx)).sum();
    num / den
}

/// Deterministic probe points in the domain at distance ≥ `from_centre` from
/// `xi` and ≥ `from_boundary` from `∂Ω`.
pub fn probe_set(domain: &DomainSpec, xi: &[f64], count: usize, from_centre: f64, from_boundary: f64) -> Vec<Vec<f64>> {
    let n = domain.n;
    let golden = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut out = Vec::new();
    let mut i = 0usize;
    while out.len() < count && i < 100_000 {
        i += 1;
        let u = (i as f64 * golden).fract();
        let v = (i as f64 * golden * golden + 0.5 / 3.0).fract();
        let w = (i as f64 * 0.5f64.sqrt()).fract();
        let mut x = vec![0.0; n];
        let z = 2.0 * v - 1.0;
        let rxy = (1.0 - z * z).sqrt();
        let ang = 2.0 * std::f64::consts::PI * u;
        x[0] = rxy * ang.cos();
        x[1] = rxy * ang.sin();
        if n > 2 {
            x[2] = z;
        }
        let r = 0.2 + 0.75 * w;
        x.iter_mut().for_each(|c| *c *= r);
        let dxi = x.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if domain.contains(&x) && domain.boundary_distance(&x) >= from_boundary && dxi >= from_centre {
            out.push(x);
        }
    }
    out
}

/// Grid version of the expansion check (n = 3). The residual is the discrete
/// harmonic extension of the trace `Q_A − λ^{(n−2)/2} Q(â) |x − ξ̂|^{2−n}`,
/// so `H` carries the same discretisation as `φ_A`.
pub fn expansion_order_fit(
    grid: &GridDomain,
    domain: &DomainSpec,
    template: &BubbleParams,
    base: &BubbleSum,
    lambdas: &[f64],
) -> Result<OrderFit> {
    if lambdas.len() < 4 || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("need at least four decreasing lambdas".into()));
    }
    let n = 3;
    let nu = 0.5;
    let xi_hat = template.xi_hat()?;
    let a_hat = template.a_hat()?;
    let qa = base.value(&a_hat);
    let probes = probe_set(domain, &xi_hat, 24, 0.25, 3.0 * grid.h);
    let xh = [xi_hat[0], xi_hat[1], xi_hat[2]];
    let gamma_trace = move |p: &[f64; 3]| {
        let d2 = (p[0] - xh[0]).powi(2) + (p[1] - xh[1]).powi(2) + (p[2] - xh[2]).powi(2);
        1.0 / d2.sqrt()
    };
    let (hcol, _) = grid.solve_dirichlet(&gamma_trace, None, GRID_TOL, MAX_CG)?;
    let hfield = grid.to_field(&hcol, &gamma_trace);
    let mut residuals = Vec::new();
    let mut coefficient_error = Vec::new();
    for &lambda in lambdas {
        let mut p = template.clone();
        p.lambda = lambda;
        let q = family_bubble_sum(&p, base)?;
        let lead = lambda.powf(nu) * qa;
        let diff = |x: &[f64; 3]| q.value(x) - lead * gamma_trace(x);
        let (u, _) = grid.solve_dirichlet(&diff, None, GRID_TOL, MAX_CG)?;
        let field = grid.to_field(&u, &diff);
        let r = probes.iter().map(|x| field.interpolate(x).abs()).fold(0.0, f64::max);
        residuals.push(r);
        let ce = probes
            .iter()
            .map(|x| {
                let h = hfield.interpolate(x) * qa;
                (field.interpolate(x) / lambda.powf(nu)).abs() / h.abs()
            })
            .fold(0.0, f64::max);
        coefficient_error.push(ce);
    }
    let _ = n;
    Ok(OrderFit {
        slope: log_log_slope(lambdas, &residuals),
        lambdas: lambdas.to_vec(),
        residuals,
        leading_q: qa,
        coefficient_error,
        probes: probes.len(),
    })
}

/// Mesh-free expansion check on a ball or annulus in any supported dimension,
/// with the exact extension and the analytic regular part. The residual is
/// harmonic, so its maximum is taken on a sample of `∂Ω` where it is known
/// exactly, as well as on the probe set.
pub fn expansion_order_fit_meshfree(
    domain: &DomainSpec,
    template: &BubbleParams,
    base: &BubbleSum,
    lambdas: &[f64],
) -> Result<OrderFit> {
    if lambdas.len() < 2 || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("need decreasing lambdas".into()));
    }
    let n = domain.n;
    let provider = GreensProvider::analytic(domain.clone())?;
    let bn = b_n(n);
    let xi_hat = template.xi_hat()?;
    let a_hat = template.a_hat()?;
    let qa = base.value(&a_hat);
    let probes = probe_set(domain, &xi_hat, 24, 0.25, 0.05);
    let hvals: Vec<f64> = probes
        .iter()
        .map(|x| provider.regular_part(x, &xi_hat))
        .collect::<Result<_>>()?;
    let mut boundary = Vec::new();
    for d in crate::fields::direction_set(n, 12, 24, 2) {
        boundary.push(d.clone());
        if domain.hole_radius() > 0.0 {
            boundary.push(d.iter().map(|v| v * domain.hole_radius()).collect());
        }
    }
    let mut residuals = Vec::new();
    let mut coefficient_error = Vec::new();
    for &lambda in lambdas {
        let mut p = template.clone();
        p.lambda = lambda;
        let q = family_bubble_sum(&p, base)?;
        let ext = HarmonicExtension::new(domain, &q, 1e-15)?;
        let lead = lambda.powf(0.5 * (n as f64 - 2.0)) * qa;
        let on_boundary = boundary
            .iter()
            .map(|x| {
                let d2: f64 = x.iter().zip(&xi_hat).map(|(a, b)| (a - b) * (a - b)).sum();
                (q.value(x) - lead * inv_pow_nu(d2, n)).abs()
            })
            .fold(0.0, f64::max);
        residuals.push(on_boundary);
        let ce = probes
            .iter()
            .zip(&hvals)
            .map(|(x, h)| {
                let phi = ext.value(x);
                let expected = lead * h / bn;
                ((phi - expected) / expected).abs()
            })
            .fold(0.0, f64::max);
        coefficient_error.push(ce);
    }
    Ok(OrderFit {
        slope: log_log_slope(lambdas, &residuals),
        lambdas: lambdas.to_vec(),
        residuals,
        leading_q: qa,
        coefficient_error,
        probes: probes.len(),
    })
}

/// Norms of the discrete residual `Δ_h u + |u|^{p−1+ε}u` over interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub l2: f64,
    pub max: f64,
}

fn power_exponent(epsilon: f64) -> f64 {
    critical_exponent(3) + epsilon
}

fn residual_vector(grid: &GridDomain, u: &[f64], epsilon: f64) -> Vec<f64> {
    let q = power_exponent(epsilon);
    let h2 = grid.h * grid.h;
    let mut au = vec![0.0; u.len()];
    grid.apply(u, &mut au);
    par::map(u.len(), |i| -au[i] / h2 + u[i].abs().powf(q - 1.0) * u[i])
}

fn norms(grid: &GridDomain, r: &[f64]) -> ResidualReport {
    let h3 = grid.h.powi(3);
    ResidualReport {
        l2: (h3 * par::dot(r, r)).sqrt(),
        max: par::max(r.len(), |i| r[i].abs()),
    }
}

/// Residual of the semilinear equation for a field vanishing on `∂Ω`.
pub fn nonlinear_residual(grid: &GridDomain, u: &GridField, epsilon: f64) -> Result<ResidualReport> {
    if epsilon < 0.0 {
        return Err(Error::InvalidInput("epsilon must be non-negative".into()));
    }
    let uu = grid.gather(u);
    Ok(norms(grid, &residual_vector(grid, &uu, epsilon)))
}

/// Trace of a damped Newton run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonTrace {
    pub residuals: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    /// The iterate collapsed to the zero solution.
    pub trivial_basin: bool,
}

/// Damped Newton iteration for `F(u) = Δ_h u + N(u) = 0` with zero boundary
/// values, where `reaction(i, u) = (N, ∂N/∂u)` at unknown `i`.
pub fn newton_solve(
    grid: &GridDomain,
    u0: &GridField,
    reaction: &(dyn Fn(usize, f64) -> (f64, f64) + Sync),
    max_iters: usize,
    tol: f64,
) -> Result<(GridField, NewtonTrace)> {
    let h2 = grid.h * grid.h;
    let eval = |u: &[f64]| -> Vec<f64> {
        let mut au = vec![0.0; u.len()];
        grid.apply(u, &mut au);
        par::map(u.len(), |i| -au[i] / h2 + reaction(i, u[i]).0)
    };
    let mut u = grid.gather(u0);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial field is not finite".into()));
    }
    let scale0 = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut f = eval(&u);
    let mut res = norms(grid, &f).l2;
    let mut trace = NewtonTrace {
        residuals: vec![res],
        step_lengths: Vec::new(),
        converged: res <= tol,
        diverged: false,
        trivial_basin: false,
    };
    let mut growth = 0;
    let mut iter = 0;
    while !trace.converged && iter < max_iters {
        iter += 1;
        let deriv: Vec<f64> = par::map(u.len(), |i| reaction(i, u[i]).1);
        let op = |x: &[f64], y: &mut [f64]| {
            grid.apply(x, y);
            par::for_each_mut(y, |i, v| *v = *v / h2 - deriv[i] * x[i]);
        };
        let (step, _) = minres(&op, &f, 1e-10, 5_000);
        let mut t = 1.0;
        let (next, next_f, next_res) = loop {
            let cand: Vec<f64> = u.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            let cf = eval(&cand);
            let cr = norms(grid, &cf).l2;
            if cr < res || t <= 1.0 / 256.0 {
                break (cand, cf, cr);
            }
            t *= 0.5;
        };
        growth = if next_res > res { growth + 1 } else { 0 };
        u = next;
        f = next_f;
        res = next_res;
        trace.residuals.push(res);
        trace.step_lengths.push(t);
        if res <= tol {
            trace.converged = true;
        }
        if growth >= 3 {
            trace.diverged = true;
            break;
        }
    }
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    trace.trivial_basin = umax <= 1e-8 * scale0.max(1.0);
    let zero = |_: &[f64; 3]| 0.0;
    Ok((grid.to_field(&u, &zero), trace))
}

/// Newton refinement for `−Δu = |u|^{p−1+ε}u` with zero boundary values.
pub fn newton_refine(grid: &GridDomain, u0: &GridField, epsilon: f64, max_iters: usize) -> Result<(GridField, NewtonTrace)> {
    let q = power_exponent(epsilon);
    let reaction = move |_: usize, u: f64| {
        let a = u.abs();
        (a.powf(q - 1.0) * u, q * a.powf(q - 1.0))
    };
    let r0 = nonlinear_residual(grid, u0, epsilon)?.l2;
    newton_solve(grid, u0, &reaction, max_iters, 1e-10 * r0.max(1e-300))
}
