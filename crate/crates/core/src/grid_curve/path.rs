//! Continuous closed paths used to generate and resample grid curves.

use std::f64::consts::PI;

use ndarray::Array2;

/// A closed parametrized path `t ↦ x(t)` with `t ∈ [0, period)`.
pub trait ClosedPath: Sync {
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
    fn point(&self, t: f64) -> Vec<f64>;
    fn derivative(&self, t: f64) -> Vec<f64>;

    /// Number of equal parameter pieces used for arclength quadrature. Paths with
    /// corners or knots align the pieces with them.
    fn pieces(&self) -> usize {
        64
    }
}

/// Circle of radius `radius` traversed `m` times over `t ∈ [0,1)`.
#[derive(Debug, Clone)]
pub struct MultiCircle {
    pub radius: f64,
    pub m: u32,
    pub dim: usize,
}

impl ClosedPath for MultiCircle {
    fn dim(&self) -> usize {
        self.dim
    }
    fn period(&self) -> f64 {
        1.0
    }
    fn point(&self, t: f64) -> Vec<f64> {
        let (s, c) = (2.0 * PI * self.m as f64 * t).sin_cos();
        pad(vec![self.radius * c, self.radius * s], self.dim)
    }
    fn derivative(&self, t: f64) -> Vec<f64> {
        let w = 2.0 * PI * self.m as f64;
        let (s, c) = (w * t).sin_cos();
        pad(vec![-self.radius * w * s, self.radius * w * c], self.dim)
    }
}

/// Axis-aligned ellipse with semi-axes `a` (first coordinate) and `b`.
#[derive(Debug, Clone)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
}

impl ClosedPath for Ellipse {
    fn dim(&self) -> usize {
        self.dim
    }
    fn period(&self) -> f64 {
        1.0
    }
    fn point(&self, t: f64) -> Vec<f64> {
        let (s, c) = (2.0 * PI * t).sin_cos();
        pad(vec![self.a * c, self.b * s], self.dim)
    }
    fn derivative(&self, t: f64) -> Vec<f64> {
        let (s, c) = (2.0 * PI * t).sin_cos();
        pad(vec![-2.0 * PI * self.a * s, 2.0 * PI * self.b * c], self.dim)
    }
}

/// Polar graph `r(φ) = r0 (1 + amp cos(2π j φ + phase))` over `φ ∈ [0,1)`.
#[derive(Debug, Clone)]
pub struct PolarCurve {
    pub r0: f64,
    pub amp: f64,
    pub j: u32,
    pub phase: f64,
    pub dim: usize,
}

impl PolarCurve {
    fn radius(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * PI * self.j as f64;
        let arg = w * t + self.phase;
        (self.r0 * (1.0 + self.amp * arg.cos()), -self.r0 * self.amp * w * arg.sin())
    }
}

impl ClosedPath for PolarCurve {
    fn dim(&self) -> usize {
        self.dim
    }
    fn period(&self) -> f64 {
        1.0
    }
    fn point(&self, t: f64) -> Vec<f64> {
        let (r, _) = self.radius(t);
        let (s, c) = (2.0 * PI * t).sin_cos();
        pad(vec![r * c, r * s], self.dim)
    }
    fn derivative(&self, t: f64) -> Vec<f64> {
        let (r, dr) = self.radius(t);
        let (s, c) = (2.0 * PI * t).sin_cos();
        pad(vec![dr * c - 2.0 * PI * r * s, dr * s + 2.0 * PI * r * c], self.dim)
    }
}

/// Closed polygon through the given vertices, parametrized by `t ∈ [0, n_vertices)`.
#[derive(Debug, Clone)]
pub struct Polygon {
    vertices: Array2<f64>,
}

impl Polygon {
    pub fn new(vertices: Array2<f64>) -> Self {
        Polygon { vertices }
    }

    fn segment(&self, t: f64) -> (usize, usize, f64) {
        let n = self.vertices.nrows();
        let t = t.rem_euclid(n as f64);
        let i = (t.floor() as usize).min(n - 1);
        (i, (i + 1) % n, t - i as f64)
    }
}

impl ClosedPath for Polygon {
    fn dim(&self) -> usize {
        self.vertices.ncols()
    }
    fn period(&self) -> f64 {
        self.vertices.nrows() as f64
    }
    fn point(&self, t: f64) -> Vec<f64> {
        let (i, j, u) = self.segment(t);
        (0..self.dim())
            .map(|k| (1.0 - u) * self.vertices[[i, k]] + u * self.vertices[[j, k]])
            .collect()
    }
    fn derivative(&self, t: f64) -> Vec<f64> {
        let (i, j, _) = self.segment(t);
        (0..self.dim()).map(|k| self.vertices[[j, k]] - self.vertices[[i, k]]).collect()
    }
    fn pieces(&self) -> usize {
        self.vertices.nrows()
    }
}

/// Periodic piecewise-cubic Hermite interpolant through the nodes of a polyline.
///
/// Node tangents are the derivatives of the parabola through three consecutive nodes
/// with chord-length knots; on uniformly spaced nodes this is the Catmull-Rom spline.
/// Segment `i` joins node `i` to node `i+1` over `t ∈ [i, i+1)`.
#[derive(Debug, Clone)]
pub struct SplinePath {
    nodes: Array2<f64>,
    // Tangents with respect to the local segment parameter, at the start and end of each segment.
    t_start: Array2<f64>,
    t_end: Array2<f64>,
}

impl SplinePath {
    /// Requires all edges to have positive length.
    pub fn new(nodes: &Array2<f64>) -> Self {
        let (n, d) = nodes.dim();
        let chord: Vec<f64> = (0..n)
            .map(|i| {
                (0..d)
                    .map(|k| (nodes[[(i + 1) % n, k]] - nodes[[i, k]]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        // Unit-speed tangent estimate at each node.
        let mut m = Array2::zeros((n, d));
        for i in 0..n {
            let ip = (i + n - 1) % n;
            let (dl, dr) = (chord[ip], chord[i]);
            for k in 0..d {
                let fwd = (nodes[[(i + 1) % n, k]] - nodes[[i, k]]) / dr;
                let bwd = (nodes[[i, k]] - nodes[[ip, k]]) / dl;
                m[[i, k]] = (dl * fwd + dr * bwd) / (dl + dr);
            }
        }
        let t_start = Array2::from_shape_fn((n, d), |(i, k)| m[[i, k]] * chord[i]);
        let t_end = Array2::from_shape_fn((n, d), |(i, k)| m[[(i + 1) % n, k]] * chord[i]);
        SplinePath { nodes: nodes.clone(), t_start, t_end }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.nrows()
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.node_count();
        let t = t.rem_euclid(n as f64);
        let i = (t.floor() as usize).min(n - 1);
        (i, t - i as f64)
    }
}

impl ClosedPath for SplinePath {
    fn dim(&self) -> usize {
        self.nodes.ncols()
    }
    fn period(&self) -> f64 {
        self.node_count() as f64
    }
    fn point(&self, t: f64) -> Vec<f64> {
        let (i, u) = self.locate(t);
        let j = (i + 1) % self.node_count();
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        (0..self.dim())
            .map(|k| {
                h00 * self.nodes[[i, k]]
                    + h10 * self.t_start[[i, k]]
                    + h01 * self.nodes[[j, k]]
                    + h11 * self.t_end[[i, k]]
            })
            .collect()
    }
    fn derivative(&self, t: f64) -> Vec<f64> {
        let (i, u) = self.locate(t);
        let j = (i + 1) % self.node_count();
        let u2 = u * u;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        (0..self.dim())
            .map(|k| {
                d00 * self.nodes[[i, k]]
                    + d10 * self.t_start[[i, k]]
                    + d01 * self.nodes[[j, k]]
                    + d11 * self.t_end[[i, k]]
            })
            .collect()
    }
    fn pieces(&self) -> usize {
        self.node_count()
    }
}

fn pad(mut v: Vec<f64>, dim: usize) -> Vec<f64> {
    v.resize(dim.max(2), 0.0);
    v
}

// 8-point Gauss-Legendre rule on [-1, 1].
const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `∫_a^b |x'(t)| dt` by 8-point Gauss-Legendre.
pub(crate) fn arc_integral<P: ClosedPath + ?Sized>(path: &P, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_X.iter()
        .zip(GL_W.iter())
        .map(|(x, w)| w * speed(path, mid + half * x))
        .sum::<f64>()
        * half
}

pub(crate) fn speed<P: ClosedPath + ?Sized>(path: &P, t: f64) -> f64 {
    path.derivative(t).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Arclength of a full period, Gauss-Legendre on equal parameter pieces each
/// subdivided `sub` times.
pub(crate) fn total_length<P: ClosedPath + ?Sized>(path: &P, sub: usize) -> f64 {
    let cells = path.pieces() * sub.max(1);
    let dt = path.period() / cells as f64;
    (0..cells).map(|i| arc_integral(path, i as f64 * dt, (i + 1) as f64 * dt)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let paths: Vec<Box<dyn ClosedPath>> = vec![
            Box::new(MultiCircle { radius: 0.3, m: 2, dim: 3 }),
            Box::new(Ellipse { a: 2.0, b: 1.0, dim: 2 }),
            Box::new(PolarCurve { r0: 0.2, amp: 0.1, j: 3, phase: 0.4, dim: 2 }),
        ];
        for p in &paths {
            for &t in &[0.0, 0.13, 0.77] {
                let e = 1e-6;
                let (a, b) = (p.point(t + e), p.point(t - e));
                let d = p.derivative(t);
                for k in 0..p.dim() {
                    assert!(((a[k] - b[k]) / (2.0 * e) - d[k]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn arclength_of_circle_and_polygon() {
        let c = MultiCircle { radius: 1.5, m: 1, dim: 2 };
        assert!((total_length(&c, 1) - 3.0 * PI).abs() < 1e-12);
        let sq = Polygon::new(ndarray::arr2(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]));
        assert!((total_length(&sq, 1) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn spline_interpolates_nodes() {
        let nodes = Array2::from_shape_fn((12, 2), |(i, k)| {
            let a = 2.0 * PI * (i as f64 + 0.3 * (i as f64).sin()) / 12.0;
            if k == 0 { 2.0 * a.cos() } else { a.sin() }
        });
        let sp = SplinePath::new(&nodes);
        for i in 0..12 {
            let p = sp.point(i as f64);
            assert!((p[0] - nodes[[i, 0]]).abs() < 1e-14 && (p[1] - nodes[[i, 1]]).abs() < 1e-14);
        }
    }
}
