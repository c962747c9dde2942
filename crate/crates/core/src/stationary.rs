//! Stationary states of the normalized flow: `∂_s(σ∂_sξ) + ξ = 0`, `|∂_sξ| = 1`.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::diagnostics::{inv_four_pi_sq, VerificationEvent};
use crate::error::Result;
use crate::flow::{apply_bands, diffusion_bands};
use crate::grid_curve::{coefficient_of_variation, covariance_eigenvalues, GridCurve};
use crate::par::{self, Execution};
use crate::tension::{solve_normalized_tension, TensionField};

/// Residual below which the first integral is meaningful.
pub const NEAR_STATIONARY: f64 = 1e-2;

/// Residual below which planarity and positive curvature are asserted.
pub const STATIONARY_GATE: f64 = 1e-3;

/// Hypothesis threshold `(27/32)/(4π²)` on `σ̄` for circle rigidity.
pub fn rigidity_threshold() -> f64 {
    27.0 / 32.0 * inv_four_pi_sq()
}

/// `max_i |ℓ⁻²(A_σ ξ)_i + ξ_i|`, with the conservative stencil of the stepper.
pub fn stationary_residual(curve: &GridCurve) -> Result<f64> {
    let sigma = solve_normalized_tension(curve)?;
    Ok(residual_with(curve, &sigma))
}

fn residual_with(curve: &GridCurve, sigma: &TensionField) -> f64 {
    let ell = curve.length();
    let bands = diffusion_bands(&sigma.edge_values(), 1.0 / (ell * ell));
    let p = curve.points();
    let mut worst = 0.0_f64;
    let cols: Vec<Vec<f64>> = p.columns().into_iter().map(|c| apply_bands(&bands, &c.to_vec())).collect();
    for i in 0..curve.n() {
        let r2: f64 = cols.iter().enumerate().map(|(k, c)| (c[i] + p[[i, k]]).powi(2)).sum();
        worst = worst.max(r2.sqrt());
    }
    worst
}

/// Curvature `k_i = |d2_i| / ℓ²` in arclength units.
fn curvature(curve: &GridCurve) -> Vec<f64> {
    let ell2 = curve.length().powi(2);
    curve.curvature_sq().iter().map(|k2| k2.sqrt() / ell2).collect()
}

/// Coefficient of variation of `σ_i² k_i` over nodes with `k_i > 1e−8`.
pub fn check_sigma_sq_curvature(curve: &GridCurve) -> Result<f64> {
    let sigma = solve_normalized_tension(curve)?;
    Ok(sigma_sq_curvature_cv(curve, &sigma))
}

fn sigma_sq_curvature_cv(curve: &GridCurve, sigma: &TensionField) -> f64 {
    let q: Vec<f64> = curvature(curve)
        .iter()
        .zip(&sigma.values)
        .filter(|(k, _)| **k > 1e-8)
        .map(|(k, s)| s * s * k)
        .collect();
    if q.is_empty() {
        return 0.0;
    }
    coefficient_of_variation(&q)
}

/// `½(∂_sτ)² + V(τ)`, `V(τ) = 4τ^{3/2} − 6τ̄τ`, evaluated with `τ = σ²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstIntegralRecord {
    pub tau_values: Vec<f64>,
    pub lambda_estimate: f64,
    pub lambda_spread: f64,
    pub tau_bar: f64,
}

impl FirstIntegralRecord {
    /// `λ ∈ [−2τ̄³ − tol, 0)`.
    pub fn in_bracket(&self, tol: f64) -> bool {
        self.lambda_estimate >= -2.0 * self.tau_bar.powi(3) - tol && self.lambda_estimate < 0.0
    }
}

pub fn first_integral_check(curve: &GridCurve) -> Result<FirstIntegralRecord> {
    let sigma = solve_normalized_tension(curve)?;
    Ok(first_integral_with(curve, &sigma))
}

fn first_integral_with(curve: &GridCurve, sigma: &TensionField) -> FirstIntegralRecord {
    let n = curve.n();
    let tau: Vec<f64> = sigma.values.iter().map(|s| s * s).collect();
    let tau_bar = sigma.values.iter().sum::<f64>() / n as f64;
    // centered difference in arclength: ds = ℓ h
    let ds = curve.length() / n as f64;
    let e: Vec<f64> = (0..n)
        .map(|i| {
            let dt = (tau[(i + 1) % n] - tau[(i + n - 1) % n]) / (2.0 * ds);
            0.5 * dt * dt + 4.0 * tau[i].powf(1.5) - 6.0 * tau_bar * tau[i]
        })
        .collect();
    let lambda_estimate = e.iter().sum::<f64>() / n as f64;
    let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    FirstIntegralRecord { tau_values: tau, lambda_estimate, lambda_spread: hi - lo, tau_bar }
}

/// Circle-rigidity report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityReport {
    pub sigma_bar: f64,
    pub hypothesis_holds: bool,
    pub simple: bool,
    pub max_sigma_deviation: f64,
    pub max_radius_deviation: f64,
    /// Circle of radius `1/(2π)` with `σ ≡ 1/(4π²)` to 1e−3.
    pub conclusion_holds: bool,
}

impl RigidityReport {
    /// The hypotheses hold but the conclusion does not.
    pub fn violated(&self) -> bool {
        self.hypothesis_holds && self.simple && !self.conclusion_holds
    }
}

pub fn rigidity_probe(curve: &GridCurve) -> Result<RigidityReport> {
    let sigma = solve_normalized_tension(curve)?;
    Ok(rigidity_with(curve, &sigma, Execution::available()))
}

fn rigidity_with(curve: &GridCurve, sigma: &TensionField, exec: Execution) -> RigidityReport {
    let base = inv_four_pi_sq();
    let max_sigma_deviation = sigma.values.iter().map(|s| (s - base).abs()).fold(0.0, f64::max);
    let r0 = 0.5 / PI;
    let max_radius_deviation = curve
        .points()
        .rows()
        .into_iter()
        .map(|p| (p.dot(&p).sqrt() - r0).abs())
        .fold(0.0, f64::max);
    RigidityReport {
        sigma_bar: sigma.mean,
        hypothesis_holds: sigma.mean >= rigidity_threshold(),
        simple: is_simple(curve, exec),
        max_sigma_deviation,
        max_radius_deviation,
        conclusion_holds: max_sigma_deviation < 1e-3 && max_radius_deviation < 1e-3,
    }
}

/// Points expressed in the plane of the two leading principal axes.
fn principal_plane(curve: &GridCurve) -> Vec<[f64; 2]> {
    let p = curve.points();
    let (n, d) = p.dim();
    if d == 2 {
        return p.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    }
    let mean = p.mean_axis(Axis(0)).expect("non-empty");
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (p[[i, a]] - mean[a]) * (p[[i, b]] - mean[b]);
            }
        }
    }
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (u, v) = (eig.eigenvectors.column(order[0]), eig.eigenvectors.column(order[1]));
    (0..n)
        .map(|i| {
            let x = p.row(i);
            [(0..d).map(|k| x[k] * u[k]).sum(), (0..d).map(|k| x[k] * v[k]).sum()]
        })
        .collect()
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

/// O(N²) sweep over pairs of non-adjacent edges in the principal plane.
pub fn is_simple(curve: &GridCurve, exec: Execution) -> bool {
    let pts = principal_plane(curve);
    let n = pts.len();
    let hits = par::map_range(exec, n, |i| {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        (i + 2..n).any(|j| {
            if (j + 1) % n == i {
                return false;
            }
            segments_cross(a, b, pts[j], pts[(j + 1) % n])
        })
    });
    !hits.into_iter().any(|h| h)
}

/// At most two covariance eigenvalues above 1e−8.
pub fn is_planar(curve: &GridCurve) -> bool {
    covariance_eigenvalues(curve.points()).iter().filter(|&&e| e > 1e-8).count() <= 2
}

/// Minimum signed curvature in the principal plane, oriented so that the total turning is positive.
pub fn min_signed_curvature(curve: &GridCurve) -> f64 {
    let pts = principal_plane(curve);
    let n = pts.len();
    let inv_h = n as f64;
    let k: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
            let d1 = [(c[0] - a[0]) * 0.5 * inv_h, (c[1] - a[1]) * 0.5 * inv_h];
            let d2 = [(c[0] - 2.0 * b[0] + a[0]) * inv_h * inv_h, (c[1] - 2.0 * b[1] + a[1]) * inv_h * inv_h];
            let speed = (d1[0] * d1[0] + d1[1] * d1[1]).sqrt();
            (d1[0] * d2[1] - d1[1] * d2[0]) / speed.powi(3)
        })
        .collect();
    let sign = if k.iter().sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
    k.iter().map(|v| v * sign).fold(f64::INFINITY, f64::min)
}

/// Everything the stationary suite measures on one curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    pub residual: f64,
    pub sigma_sq_curvature_cv: f64,
    pub planar: bool,
    pub min_curvature: f64,
    pub first_integral: Option<FirstIntegralRecord>,
    pub rigidity: RigidityReport,
}

pub fn analyze(curve: &GridCurve, exec: Execution) -> Result<StationaryReport> {
    let sigma = solve_normalized_tension(curve)?;
    let residual = residual_with(curve, &sigma);
    Ok(StationaryReport {
        residual,
        sigma_sq_curvature_cv: sigma_sq_curvature_cv(curve, &sigma),
        planar: is_planar(curve),
        min_curvature: min_signed_curvature(curve),
        first_integral: (residual < NEAR_STATIONARY).then(|| first_integral_with(curve, &sigma)),
        rigidity: rigidity_with(curve, &sigma, exec),
    })
}

impl StationaryReport {
    /// Checks that apply to near-stationary states, as events at `step`.
    pub fn events(&self, step: usize) -> Vec<VerificationEvent> {
        let mut ev = Vec::new();
        if self.residual < STATIONARY_GATE {
            if !self.planar {
                ev.push(VerificationEvent::new(step, "planarity", 1.0));
            }
            if !(self.min_curvature > 0.0) {
                ev.push(VerificationEvent::new(step, "positive_curvature", -self.min_curvature));
            }
        }
        if let Some(fi) = &self.first_integral {
            if !fi.in_bracket(1e-6) {
                ev.push(VerificationEvent::new(step, "first_integral", fi.lambda_estimate));
            }
        }
        if self.rigidity.violated() {
            let m = self.rigidity.max_sigma_deviation.max(self.rigidity.max_radius_deviation);
            ev.push(VerificationEvent::new(step, "rigidity", m));
        }
        ev
    }
}

/// Curve from an `n × 2` point table (test helper for hand-built polygons).
pub fn polygon(points: &[[f64; 2]]) -> Result<GridCurve> {
    GridCurve::new(Array2::from_shape_fn((points.len(), 2), |(i, k)| points[i][k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_curve::{make_curve, w0, InitDescriptor};

    fn mcircle(m: u32, n: usize) -> GridCurve {
        make_curve(&format!("mcircle:{m}").parse::<InitDescriptor>().unwrap(), n, 2).unwrap()
    }

    #[test]
    fn circles_are_stationary() {
        let c = w0(512, 2);
        assert!(stationary_residual(&c).unwrap() < 1e-3);
        assert!(check_sigma_sq_curvature(&c).unwrap() < 1e-6);
        assert!(stationary_residual(&mcircle(2, 512)).unwrap() < 1e-3);
    }

    #[test]
    fn ellipse_is_not_stationary() {
        // the residual is homogeneous of degree one in the curve; (2,1) is taken at face value
        let e = make_curve(&"ellipse:2,1".parse::<InitDescriptor>().unwrap(), 256, 2).unwrap();
        let r = stationary_residual(&e).unwrap();
        let cv = check_sigma_sq_curvature(&e).unwrap();
        assert!(r > 0.1, "{r}");
        assert!(cv > 0.05, "{cv}");
    }

    #[test]
    fn first_integral_closed_form() {
        for m in [1u32, 2] {
            let c = mcircle(m, 256);
            let tb = inv_four_pi_sq() / (m * m) as f64;
            let fi = first_integral_check(&c).unwrap();
            assert!((fi.tau_bar - tb).abs() < 1e-8);
            assert!((fi.lambda_estimate + 2.0 * tb.powi(3)).abs() < 1e-8);
            assert!(fi.lambda_spread < 1e-8);
            assert!(fi.in_bracket(1e-6));
        }
    }

    #[test]
    fn rigidity_gate() {
        let r = rigidity_probe(&w0(256, 2)).unwrap();
        assert!(r.hypothesis_holds && r.simple && r.conclusion_holds);
        let r = rigidity_probe(&mcircle(2, 256)).unwrap();
        assert!(!r.hypothesis_holds && !r.simple && !r.violated());
    }

    #[test]
    fn simplicity_sweep() {
        let square = polygon(&[[0., 0.], [1., 0.], [2., 0.], [2., 1.], [2., 2.], [1., 2.], [0., 2.], [0., 1.]]).unwrap();
        assert!(is_simple(&square, Execution::Sequential));
        let bow = polygon(&[[0., 0.], [1., 0.5], [2., 1.], [2., 0.5], [2., 0.], [1., 0.5], [0., 1.], [0., 0.5]]).unwrap();
        assert!(!is_simple(&bow, Execution::Sequential));
    }

    #[test]
    fn circle_in_three_dimensions_is_planar() {
        let c = w0(128, 3);
        assert!(is_planar(&c));
        assert!(min_signed_curvature(&c) > 0.0);
    }
}
