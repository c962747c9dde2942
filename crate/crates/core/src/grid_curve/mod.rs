//! Closed polylines on a uniform periodic parameter grid.

mod catalog;
mod path;
mod resample;

pub use catalog::{make_curve, make_curve_seeded, reference_length_ratio, InitDescriptor, Phase, Shape};
pub use path::{ClosedPath, Ellipse, MultiCircle, PolarCurve, Polygon, SplinePath};
pub use resample::resample_to_arclength;

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible grid size.
pub const MIN_N: usize = 8;

/// Amplitudes below this are treated as a vanishing first Fourier mode.
pub const DEGENERATE_AMPLITUDE: f64 = 1e-14;

/// A closed curve sampled at `n` nodes `s_i = i/n` of the parameter circle.
///
/// Construction recenters the points so that their mean is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCurve {
    points: Array2<f64>,
}

/// L² projection of a curve onto the circle manifold `{c·w₀(·+θ)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleFit {
    pub c: f64,
    pub theta: f64,
    pub residual: f64,
    pub degenerate: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveFile {
    n: usize,
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl GridCurve {
    /// Build from an `n × dim` array of points. The points are recentered.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let mut curve = Self::new_uncentered(points)?;
        curve.recenter();
        Ok(curve)
    }

    /// Build without recentering (used when the mean is meaningful, e.g. test fixtures).
    pub fn new_uncentered(points: Array2<f64>) -> Result<Self> {
        let (n, dim) = points.dim();
        if n < MIN_N {
            return Err(Error::InvalidCurve(format!("need at least {MIN_N} nodes, got {n}")));
        }
        if dim < 2 {
            return Err(Error::InvalidCurve(format!("ambient dimension must be >= 2, got {dim}")));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve("non-finite coordinate".into()));
        }
        Ok(GridCurve { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidCurve("rows have inconsistent dimension".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let points = Array2::from_shape_vec((n, dim), flat)
            .map_err(|e| Error::InvalidCurve(e.to_string()))?;
        Self::new(points)
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i % self.n())
    }

    pub fn mean_point(&self) -> Array1<f64> {
        self.points.mean_axis(Axis(0)).expect("n >= 8")
    }

    fn recenter(&mut self) {
        let mean = self.mean_point();
        self.points -= &mean;
    }

    /// Uniformly scaled copy.
    pub fn scaled(&self, factor: f64) -> GridCurve {
        GridCurve { points: &self.points * factor }
    }

    /// Forward edge vectors `p_{i+1} − p_i`.
    pub fn edges(&self) -> Array2<f64> {
        forward_edges(&self.points)
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        row_norms(&self.edges())
    }

    /// Centered first difference `(p_{i+1} − p_{i−1}) / 2h`.
    pub fn d1(&self) -> Array2<f64> {
        let n = self.n();
        let s = 0.5 * n as f64;
        Array2::from_shape_fn(self.points.dim(), |(i, k)| {
            (self.points[[(i + 1) % n, k]] - self.points[[(i + n - 1) % n, k]]) * s
        })
    }

    /// Second difference `(p_{i+1} − 2p_i + p_{i−1}) / h²`.
    pub fn d2(&self) -> Array2<f64> {
        second_difference(&self.points)
    }

    /// Polyline length (sum of edge lengths).
    pub fn length(&self) -> f64 {
        self.edge_lengths().iter().sum()
    }

    /// `M = (h/2) Σ|p_i|²`.
    pub fn l2_mass(&self) -> f64 {
        0.5 * self.h() * self.points.iter().map(|v| v * v).sum::<f64>()
    }

    /// `|d2_i|²`.
    pub fn curvature_sq(&self) -> Vec<f64> {
        row_norms_sq(&self.d2())
    }

    /// `ρ = h Σ |d2_i|²`.
    pub fn curvature_energy(&self) -> f64 {
        self.h() * self.curvature_sq().iter().sum::<f64>()
    }

    /// Coefficient of variation (population) of the edge lengths; 0 for a curve with no length.
    pub fn edge_cv(&self) -> f64 {
        coefficient_of_variation(&self.edge_lengths())
    }

    /// `max_i | |e_i| / mean|e| − 1 |`.
    pub fn drift(&self) -> f64 {
        max_relative_deviation(&self.edge_lengths())
    }

    /// Maximum pointwise Euclidean distance to another curve with the same shape.
    pub fn sup_distance(&self, other: &GridCurve) -> f64 {
        sup_distance(&self.points, &other.points)
    }

    /// L² distance `sqrt(h Σ |p_i − q_i|²)`.
    pub fn l2_distance(&self, other: &GridCurve) -> f64 {
        let d: f64 = self.points.iter().zip(other.points.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        (d * self.h()).sqrt()
    }

    /// Rejects curves that are not closed immersed loops: zero edges, cusps, or collinear points.
    pub fn check_immersed(&self) -> Result<()> {
        let lens = self.edge_lengths();
        let total: f64 = lens.iter().sum();
        if total <= 0.0 {
            return Err(Error::NotImmersed("all points coincide".into()));
        }
        let tiny = 1e-12 * total / self.n() as f64;
        if let Some(i) = lens.iter().position(|&l| l <= tiny) {
            return Err(Error::NotImmersed(format!("zero-length edge at index {i}")));
        }
        let e = self.edges();
        let n = self.n();
        for i in 0..n {
            let j = (i + 1) % n;
            let dot: f64 = e.row(i).dot(&e.row(j));
            if dot <= -(1.0 - 1e-12) * lens[i] * lens[j] {
                return Err(Error::NotImmersed(format!("cusp at node {j}")));
            }
        }
        let ev = covariance_eigenvalues(&self.points);
        let top = ev.first().copied().unwrap_or(0.0);
        if ev.get(1).copied().unwrap_or(0.0) <= 1e-14 * top {
            return Err(Error::NotImmersed("points are collinear (degenerate segment)".into()));
        }
        Ok(())
    }

    /// Orthogonal projection onto `{c·w₀(·+θ) : c ≥ 0, θ ∈ [0,1)}` in the first coordinate plane.
    pub fn project_to_circle_manifold(&self) -> CircleFit {
        let n = self.n();
        let h = self.h();
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..n {
            let (sn, cs) = (2.0 * PI * i as f64 * h).sin_cos();
            let (x, y) = (self.points[[i, 0]], self.points[[i, 1]]);
            a += x * cs + y * sn;
            b += -x * sn + y * cs;
        }
        a *= h;
        b *= h;
        let c = 2.0 * PI * a.hypot(b);
        let norm_sq = h * self.points.iter().map(|v| v * v).sum::<f64>();
        if c < DEGENERATE_AMPLITUDE {
            return CircleFit { c: 0.0, theta: 0.0, residual: norm_sq.max(0.0).sqrt(), degenerate: true };
        }
        let theta = (b.atan2(a) / (2.0 * PI)).rem_euclid(1.0);
        let theta = if theta >= 1.0 { 0.0 } else { theta };
        let res_sq = norm_sq - c * c / (4.0 * PI * PI);
        CircleFit { c, theta, residual: res_sq.max(0.0).sqrt(), degenerate: false }
    }

    /// Remainder `ξ̃ = ξ − c·w₀(·+θ)` of the circle decomposition.
    pub fn circle_remainder(&self, fit: &CircleFit) -> Array2<f64> {
        let w = circle_points(self.n(), self.dim(), fit.c, fit.theta);
        &self.points - &w
    }

    /// `(‖ξ̃‖, ‖∂_sξ̃‖)` in the discrete L² norm (forward differences for the derivative).
    pub fn decomposition_norms(&self, fit: &CircleFit) -> (f64, f64) {
        let r = self.circle_remainder(fit);
        let h = self.h();
        let l2 = (h * r.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let e = forward_edges(&r);
        let dl2 = (e.iter().map(|v| v * v).sum::<f64>() / h).sqrt();
        (l2, dl2)
    }

    pub fn to_json_string(&self) -> String {
        let file = CurveFile {
            n: self.n(),
            dim: self.dim(),
            points: self.points.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        serde_json::to_string(&file).expect("curve serializes")
    }

    /// Parses the `{ "n", "dim", "points" }` curve format. The points are recentered.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: CurveFile = serde_json::from_str(s)?;
        if file.points.len() != file.n {
            return Err(Error::InvalidCurve(format!(
                "declared n = {} but {} points given",
                file.n,
                file.points.len()
            )));
        }
        if file.points.iter().any(|p| p.len() != file.dim) {
            return Err(Error::InvalidCurve(format!("points must have dim = {} coordinates", file.dim)));
        }
        Self::from_rows(&file.points)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// The reference circle `w₀(s) = (1/2π)(cos 2πs, sin 2πs, 0, …)` sampled on the grid.
pub fn w0(n: usize, dim: usize) -> GridCurve {
    GridCurve::new_uncentered(circle_points(n, dim, 1.0, 0.0)).expect("valid sizes")
}

/// Samples of `c·w₀(s_i + θ)`.
pub fn circle_points(n: usize, dim: usize, c: f64, theta: f64) -> Array2<f64> {
    let r = c / (2.0 * PI);
    let mut p = Array2::zeros((n, dim));
    for i in 0..n {
        let (sn, cs) = (2.0 * PI * (i as f64 / n as f64 + theta)).sin_cos();
        p[[i, 0]] = r * cs;
        p[[i, 1]] = r * sn;
    }
    p
}

pub(crate) fn forward_edges(p: &Array2<f64>) -> Array2<f64> {
    let n = p.nrows();
    Array2::from_shape_fn(p.dim(), |(i, k)| p[[(i + 1) % n, k]] - p[[i, k]])
}

pub(crate) fn second_difference(p: &Array2<f64>) -> Array2<f64> {
    let n = p.nrows();
    let s = (n * n) as f64;
    Array2::from_shape_fn(p.dim(), |(i, k)| {
        (p[[(i + 1) % n, k]] - 2.0 * p[[i, k]] + p[[(i + n - 1) % n, k]]) * s
    })
}

pub(crate) fn row_norms_sq(a: &Array2<f64>) -> Vec<f64> {
    a.rows().into_iter().map(|r| r.dot(&r)).collect()
}

pub(crate) fn row_norms(a: &Array2<f64>) -> Vec<f64> {
    a.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

pub(crate) fn sup_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(p, q)| p.iter().zip(q.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

pub(crate) fn max_relative_deviation(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    xs.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max)
}

/// Eigenvalues of the point covariance matrix, descending.
pub fn covariance_eigenvalues(p: &Array2<f64>) -> Vec<f64> {
    let (n, d) = p.dim();
    let mean = p.mean_axis(Axis(0)).expect("non-empty");
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (p[[i, a]] - mean[a]) * (p[[i, b]] - mean[b]);
            }
        }
    }
    cov /= n as f64;
    let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize, r: f64) -> GridCurve {
        let pts = Array2::from_shape_fn((n, 2), |(i, k)| {
            let a = 2.0 * PI * i as f64 / n as f64;
            r * if k == 0 { a.cos() } else { a.sin() }
        });
        GridCurve::new(pts).unwrap()
    }

    #[test]
    fn rejects_small_or_flat_input() {
        assert!(GridCurve::new(Array2::zeros((7, 2))).is_err());
        assert!(GridCurve::new(Array2::zeros((8, 1))).is_err());
        let mut p = Array2::zeros((8, 2));
        p[[3, 1]] = f64::NAN;
        assert!(GridCurve::new(p).is_err());
    }

    #[test]
    fn constant_curve_has_zero_differences() {
        let c = GridCurve::new_uncentered(Array2::from_elem((16, 3), 0.7)).unwrap();
        assert!(c.d1().iter().all(|v| v.abs() < 1e-12));
        assert!(c.d2().iter().all(|v| v.abs() < 1e-9));
        let z = GridCurve::new(Array2::zeros((16, 2))).unwrap();
        assert_eq!(z.length(), 0.0);
        assert_eq!(z.l2_mass(), 0.0);
    }

    #[test]
    fn reference_circle_functionals() {
        let c = w0(1024, 2);
        assert!((c.length() - 1.0).abs() < 1e-5);
        assert!((c.l2_mass() - 1.0 / (8.0 * PI * PI)).abs() < 1e-6);
        let c = w0(512, 2);
        let k = c.curvature_sq();
        let dev = k.iter().map(|v| (v.sqrt() - 2.0 * PI).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3);
        assert!(c.curvature_energy() >= 4.0 * PI * PI - 1e-2);
        let c = w0(256, 2);
        let expected = 2.0 * (PI / 256.0).sin() / (2.0 * PI);
        for l in c.edge_lengths() {
            assert!((l - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn d2_is_second_order_on_circle() {
        let err = |n: usize| {
            let c = w0(n, 2);
            c.curvature_sq().iter().map(|v| (v.sqrt() - 2.0 * PI).abs()).fold(0.0, f64::max)
        };
        for n in [32usize, 64, 128] {
            assert!(err(n) / err(2 * n) >= 3.8);
        }
    }

    #[test]
    fn d2_symbol_of_fourier_mode() {
        let n = 64;
        for j in [1usize, 3, 7] {
            let pts = Array2::from_shape_fn((n, 2), |(i, k)| {
                if k == 0 { (2.0 * PI * (j * i) as f64 / n as f64).cos() } else { 0.0 }
            });
            let c = GridCurve::new_uncentered(pts.clone()).unwrap();
            let h = 1.0 / n as f64;
            let lam = -(2.0 / (h * h)) * (1.0 - (2.0 * PI * j as f64 * h).cos());
            let d2 = c.d2();
            for i in 0..n {
                assert!((d2[[i, 0]] - lam * pts[[i, 0]]).abs() < 1e-9 * lam.abs());
            }
        }
    }

    #[test]
    fn projection_of_circle_elements() {
        let fit = w0(256, 2).project_to_circle_manifold();
        assert!((fit.c - 1.0).abs() < 1e-12 && fit.theta.min(1.0 - fit.theta) < 1e-12);
        assert!(fit.residual < 1e-7);
        let pts = circle_points(256, 3, 0.9, 0.3);
        let fit = GridCurve::new(pts).unwrap().project_to_circle_manifold();
        assert!((fit.c - 0.9).abs() < 1e-10);
        assert!((fit.theta - 0.3).abs() < 1e-10);
        let z = GridCurve::new(Array2::zeros((16, 2))).unwrap().project_to_circle_manifold();
        assert!(z.degenerate && z.c == 0.0 && z.theta == 0.0);
    }

    #[test]
    fn json_roundtrip() {
        let c = circle(16, 2.0);
        let back = GridCurve::from_json_str(&c.to_json_string()).unwrap();
        assert!(c.sup_distance(&back) < 1e-15);
        assert!(GridCurve::from_json_str(r#"{"n":9,"dim":2,"points":[[0,0]]}"#).is_err());
    }

    #[test]
    fn immersion_checks() {
        assert!(circle(32, 1.0).check_immersed().is_ok());
        let seg = Array2::from_shape_fn((16, 2), |(i, k)| if k == 0 { (i as f64 / 8.0 - 1.0).abs() } else { 0.0 });
        assert!(GridCurve::new(seg).unwrap().check_immersed().is_err());
        let mut p = circle(32, 1.0).into_points();
        let r = p.row(4).to_owned();
        p.row_mut(5).assign(&r);
        assert!(GridCurve::new(p).unwrap().check_immersed().is_err());
    }
}
