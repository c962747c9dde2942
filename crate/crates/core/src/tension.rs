//! Lagrange multipliers (tensions) of the speed constraint.
//!
//! Both equations are periodic Schrödinger problems `−σ'' + q σ = f` with a
//! nonnegative potential built from `|d2|²`. They are discretized with the
//! three-point Laplacian and solved as cyclic tridiagonal systems.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid_curve::GridCurve;
use crate::linalg::CyclicTridiagonal;

/// Relative residual ceiling for a certified solve.
pub const RESIDUAL_CEILING: f64 = 1e-9;

/// Edge-length CV above which the original-flow tension refuses to solve.
pub const UNIFORM_SPEED_TOL: f64 = 1e-6;

/// Grid samples of a tension together with the residual of its defining equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensionField {
    pub values: Vec<f64>,
    pub residual_norm: f64,
    pub mean: f64,
}

impl TensionField {
    fn new(values: Vec<f64>, residual_norm: f64) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        TensionField { values, residual_norm, mean }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    /// `max_i |σ_i − σ̄|`.
    pub fn oscillation(&self) -> f64 {
        self.values.iter().map(|v| (v - self.mean).abs()).fold(0.0, f64::max)
    }

    /// Edge values `σ_{i+½} = (σ_i + σ_{i+1}) / 2`.
    pub fn edge_values(&self) -> Vec<f64> {
        let n = self.values.len();
        (0..n).map(|i| 0.5 * (self.values[i] + self.values[(i + 1) % n])).collect()
    }
}

/// Factor `−D_ss + diag(q)` on an `n`-periodic grid.
fn schrodinger(n: usize, q: &[f64]) -> Result<CyclicTridiagonal> {
    let inv_h2 = (n * n) as f64;
    let off = vec![-inv_h2; n];
    let diag: Vec<f64> = q.iter().map(|qi| 2.0 * inv_h2 + qi).collect();
    CyclicTridiagonal::new(off.clone(), diag, off)
}

/// `max_i |(D_ss v)_i − q_i v_i − f_i|`.
fn residual(v: &[f64], q: &[f64], f: f64) -> f64 {
    let n = v.len();
    let inv_h2 = (n * n) as f64;
    (0..n)
        .map(|i| {
            let dss = (v[(i + 1) % n] - 2.0 * v[i] + v[(i + n - 1) % n]) * inv_h2;
            (dss - q[i] * v[i] - f).abs()
        })
        .fold(0.0, f64::max)
}

fn potential(curve: &GridCurve) -> Result<(f64, Vec<f64>)> {
    let ell = curve.length();
    let k2 = curve.curvature_sq();
    let rho = curve.h() * k2.iter().sum::<f64>();
    if !(ell > 0.0) || !(rho > 0.0) {
        return Err(Error::SingularTension(format!(
            "curvature energy ρ = {rho:.3e} and length {ell:.3e} must be positive"
        )));
    }
    Ok((ell, k2))
}

/// Tension of the normalized flow.
///
/// With `ℓ` the polyline length, solves `ℓ⁻² D_ss σ − ℓ⁻⁴ |d2|² σ = −1`. For a
/// unit-length curve this is `σ'' − |ξ''|² σ = −1`; the `ℓ` factors express the
/// derivatives in arclength so that a sampled circle is an exact discrete
/// stationary state with `σ = R²`.
pub fn solve_normalized_tension(curve: &GridCurve) -> Result<TensionField> {
    let (ell, k2) = potential(curve)?;
    let l2 = ell * ell;
    let q: Vec<f64> = k2.iter().map(|k| k / l2).collect();
    let fac = schrodinger(curve.n(), &q)?;
    let sigma = fac.solve(&vec![l2; curve.n()])?;
    // Residual of the ℓ-scaled equation (divide the ℓ²-multiplied form by ℓ²).
    let res = residual(&sigma, &q, -l2) / l2;
    let field = TensionField::new(sigma, res);
    certify(&field)?;
    Ok(field)
}

/// Tension `σ̃` of the original flow, normalized to unit mean.
///
/// The nonlocal problem `D_ss σ̃ − L⁻²|d2|² σ̃ = −L⁻² h Σ σ̃ |d2|²` with `h Σ σ̃ = 1`
/// is reduced to the local problem `(D_ss − L⁻²|d2|²) u = −1` and `σ̃ = u / (h Σ u)`.
/// Summing the `u`-equation over the grid, the periodic `D_ss` term telescopes to
/// zero, leaving `h Σ |d2|² u = L²`. Then `σ̃` solves the `u`-equation scaled by
/// `1/(h Σ u)`, and its right-hand side `−1/(h Σ u)` equals
/// `−L⁻² h Σ σ̃ |d2|²`, which is the required nonlocal constant. The identity is
/// checked after every solve.
pub fn solve_original_tension(curve: &GridCurve) -> Result<TensionField> {
    let cv = curve.edge_cv();
    if cv > UNIFORM_SPEED_TOL {
        return Err(Error::InvalidCurve(format!(
            "original-flow tension needs uniform speed (edge CV {cv:.3e} > {UNIFORM_SPEED_TOL:e})"
        )));
    }
    let (ell, k2) = potential(curve)?;
    let l2 = ell * ell;
    let q: Vec<f64> = k2.iter().map(|k| k / l2).collect();
    let fac = schrodinger(curve.n(), &q)?;
    let u = fac.solve(&vec![1.0; curve.n()])?;
    let h = curve.h();
    let mass = h * u.iter().sum::<f64>();
    if !(mass > 0.0) {
        return Err(Error::PositivityViolation { min: mass });
    }
    let identity = h * u.iter().zip(&k2).map(|(a, b)| a * b).sum::<f64>();
    if (identity - l2).abs() > 1e-9 * l2 {
        return Err(Error::SingularTension(format!(
            "consistency identity h·Σ u|d2|² = L² violated: {identity:.12e} vs {l2:.12e}"
        )));
    }
    let res_u = residual(&u, &q, -1.0);
    let values: Vec<f64> = u.iter().map(|v| v / mass).collect();
    let field = TensionField::new(values, res_u / mass);
    certify(&field)?;
    Ok(field)
}

/// Edge tensions `σ_{i+½}` that keep every edge length of the semi-discrete flow
/// `ẋ_i = c n² (σ_{i+½} e_i − σ_{i−½} e_{i−1})` in a common ratio.
///
/// With `e_i = x_{i+1} − x_i`, `d/dt |e_i|²/2 = c n² [σ_{i+3/2} e_{i+1}·e_i − 2σ_{i+½}|e_i|² + σ_{i−½} e_{i−1}·e_i]`,
/// so requiring `d/dt |e_i|² / |e_i|²` to be the same for all edges gives the cyclic system
/// `σ_{i+3/2} (e_{i+1}·e_i)/|e_i|² − 2σ_{i+½} + σ_{i−½} (e_{i−1}·e_i)/|e_i|² = f`.
/// Returns the solution for `f = −1` and the residual. This is the discretization
/// the steppers use; it agrees with the node tensions to `O(h²)`.
fn edge_system(curve: &GridCurve) -> Result<(Vec<f64>, f64)> {
    let e = curve.edges();
    let n = curve.n();
    let dot = |a: usize, b: usize| e.row(a).dot(&e.row(b));
    let lower: Vec<f64> = (0..n).map(|i| dot(i, (i + n - 1) % n) / dot(i, i)).collect();
    let upper: Vec<f64> = (0..n).map(|i| dot(i, (i + 1) % n) / dot(i, i)).collect();
    if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
        return Err(Error::NotImmersed("zero-length edge in the edge tension system".into()));
    }
    let m = CyclicTridiagonal::new(lower.clone(), vec![-2.0; n], upper.clone())?;
    let u = m.solve(&vec![-1.0; n])?;
    let res = (0..n)
        .map(|i| (lower[i] * u[(i + n - 1) % n] - 2.0 * u[i] + upper[i] * u[(i + 1) % n] + 1.0).abs())
        .fold(0.0, f64::max);
    Ok((u, res))
}

/// Edge tensions of the original flow, normalized to `h Σ σ̃_{i+½} = 1`.
pub fn original_edge_tension(curve: &GridCurve) -> Result<TensionField> {
    let (u, res) = edge_system(curve)?;
    let mass = curve.h() * u.iter().sum::<f64>();
    if !(mass > 0.0) {
        return Err(Error::PositivityViolation { min: mass });
    }
    let field = TensionField::new(u.iter().map(|v| v / mass).collect(), res / mass);
    certify(&field)?;
    Ok(field)
}

/// Edge tensions of the normalized flow `ẋ_i = ℓ⁻² n² (σ_{i+½} e_i − σ_{i−½} e_{i−1}) + x_i`:
/// the edge system with `f = −ℓ² h²`, which holds every edge length fixed on a uniform curve.
pub fn normalized_edge_tension(curve: &GridCurve) -> Result<TensionField> {
    let (u, res) = edge_system(curve)?;
    let scale = (curve.length() * curve.h()).powi(2);
    let field = TensionField::new(u.iter().map(|v| v * scale).collect(), res * scale);
    certify(&field)?;
    Ok(field)
}

fn certify(field: &TensionField) -> Result<()> {
    let scale = 1.0 + field.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(field.residual_norm < RESIDUAL_CEILING * scale) {
        return Err(Error::SingularTension(format!(
            "residual {:.3e} exceeds {:.1e}·(1 + max|σ|)",
            field.residual_norm, RESIDUAL_CEILING
        )));
    }
    Ok(())
}

/// `λ = −L ∂_t L = L⁻² h Σ σ̃ |d2|²` for the original flow.
pub fn original_lambda(curve: &GridCurve, sigma_tilde: &TensionField) -> f64 {
    let l2 = curve.length().powi(2);
    let k2 = curve.curvature_sq();
    curve.h() * sigma_tilde.values.iter().zip(&k2).map(|(s, k)| s * k).sum::<f64>() / l2
}

/// Curvature energy `ρ = ∫|ξ''|²` of the unit-length rescaling of `curve`.
pub fn unit_curvature_energy(curve: &GridCurve) -> f64 {
    curve.curvature_energy() / curve.length().powi(4)
}

/// Pointwise bracket `[e^{−ρ/2}/ρ, 1 + 1/ρ]` for the normalized tension of a unit-length curve.
pub fn green_bracket(rho: f64) -> (f64, f64) {
    ((-0.5 * rho).exp() / rho, 1.0 + 1.0 / rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_curve::{make_curve, w0, InitDescriptor};
    use std::f64::consts::PI;

    fn curve(desc: &str, n: usize) -> GridCurve {
        make_curve(&desc.parse::<InitDescriptor>().unwrap(), n, 2).unwrap()
    }

    #[test]
    fn reference_circle_tension() {
        let s = solve_normalized_tension(&w0(256, 2)).unwrap();
        for v in &s.values {
            assert!((v - 1.0 / (4.0 * PI * PI)).abs() < 1e-8);
        }
        let s = solve_normalized_tension(&curve("mcircle:2", 256)).unwrap();
        for v in &s.values {
            assert!((v - 1.0 / (16.0 * PI * PI)).abs() < 1e-8);
        }
    }

    #[test]
    fn original_tension_of_circles_is_one() {
        for r in [0.1, 1.0, 7.0] {
            let c = curve(&format!("circle:{r}"), 128);
            let s = solve_original_tension(&c).unwrap();
            assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-10));
            assert!((s.mean - 1.0).abs() < 1e-12);
        }
        let c = w0(256, 2);
        let lam = original_lambda(&c, &solve_original_tension(&c).unwrap());
        assert!((lam - 4.0 * PI * PI).abs() < 1e-2);
    }

    #[test]
    fn ellipse_tensions() {
        let c = curve("ellipse:2,1@1", 512);
        let st = solve_original_tension(&c).unwrap();
        assert!((st.mean - 1.0).abs() < 1e-10 && st.is_positive());
        let s = solve_normalized_tension(&c).unwrap();
        let (lo, hi) = green_bracket(unit_curvature_energy(&c));
        assert!(s.values.iter().all(|&v| v >= lo && v <= hi));
        // Integrated form of the tension equation: h Σ σ q = 1 up to the telescoped D_ss term.
        let k2 = c.curvature_sq();
        let ell = c.length();
        let integral = c.h() * s.values.iter().zip(&k2).map(|(a, b)| a * b).sum::<f64>() / ell.powi(4);
        assert!((integral - 1.0).abs() < 1e-9);
    }

    #[test]
    fn edge_tensions_agree_with_node_tensions() {
        for r in [0.5, 3.0] {
            let c = curve(&format!("circle:{r}"), 64);
            let st = original_edge_tension(&c).unwrap();
            assert!(st.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
            // exact discrete stationary state: σ_{i+½} = ℓ²h² / (2(1 − cos 2π/n))
            let s = normalized_edge_tension(&c).unwrap();
            let n = 64.0;
            let want = (c.length() / n).powi(2) / (2.0 * (1.0 - (2.0 * PI / n).cos()));
            assert!(s.values.iter().all(|v| (v - want).abs() < 1e-10 * want));
        }
        let (coarse, fine) = (curve("ellipse:2,1@1", 128), curve("ellipse:2,1@1", 256));
        let gap = |c: &GridCurve| {
            let node = solve_normalized_tension(c).unwrap().edge_values();
            let edge = normalized_edge_tension(c).unwrap().values;
            node.iter().zip(&edge).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (g1, g2) = (gap(&coarse), gap(&fine));
        assert!(g1 < 1e-3 && g2 < 0.3 * g1, "{g1:e} {g2:e}");
        let (a, b) = (solve_original_tension(&fine).unwrap().edge_values(), original_edge_tension(&fine).unwrap());
        assert!(a.iter().zip(&b.values).all(|(x, y)| (x - y).abs() < 1e-3));
    }

    #[test]
    fn straight_curve_is_singular() {
        let z = GridCurve::new(ndarray::Array2::zeros((16, 2))).unwrap();
        assert!(matches!(solve_normalized_tension(&z), Err(Error::SingularTension(_))));
    }
}
