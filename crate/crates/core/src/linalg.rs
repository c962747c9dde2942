//! Cyclic (periodic) tridiagonal systems.

use crate::error::{Error, Result};

/// Smallest admissible ratio between the smallest Thomas pivot and the largest diagonal entry.
const PIVOT_RATIO_FLOOR: f64 = 1e-14;

/// A factored cyclic tridiagonal matrix
///
/// ```text
/// row i:  lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1]   (indices mod n)
/// ```
///
/// The periodic corners are removed with a Sherman-Morrison rank-one correction so
/// that each solve is two Thomas sweeps plus an O(n) update. The factorization is
/// reused across right-hand sides (one per coordinate of a curve).
#[derive(Debug, Clone)]
pub struct CyclicTridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    // Thomas factors of the corner-free matrix.
    cp: Vec<f64>,
    inv_den: Vec<f64>,
    gamma: f64,
    z: Vec<f64>,
    denom: f64,
    pivot_ratio: f64,
}

impl CyclicTridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n < 3 || lower.len() != n || upper.len() != n {
            return Err(Error::InvalidCurve(format!(
                "cyclic tridiagonal system needs n >= 3 and matching bands (got {}, {}, {})",
                lower.len(),
                n,
                upper.len()
            )));
        }
        if diag.iter().chain(&lower).chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::SolverBreakdown { pivot_ratio: f64::NAN });
        }
        let scale = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::SolverBreakdown { pivot_ratio: 0.0 });
        }
        let gamma = if diag[0] != 0.0 { -diag[0] } else { -scale };
        let mut bb = diag.clone();
        bb[0] -= gamma;
        bb[n - 1] -= lower[0] * upper[n - 1] / gamma;

        let mut cp = vec![0.0; n];
        let mut inv_den = vec![0.0; n];
        let mut min_pivot = f64::INFINITY;
        let mut prev_cp = 0.0;
        for i in 0..n {
            let den = if i == 0 { bb[0] } else { bb[i] - lower[i] * prev_cp };
            min_pivot = min_pivot.min(den.abs());
            if den == 0.0 || !den.is_finite() {
                return Err(Error::SolverBreakdown { pivot_ratio: 0.0 });
            }
            inv_den[i] = 1.0 / den;
            cp[i] = if i + 1 < n { upper[i] * inv_den[i] } else { 0.0 };
            prev_cp = cp[i];
        }
        let pivot_ratio = min_pivot / scale.max(gamma.abs());
        if pivot_ratio < PIVOT_RATIO_FLOOR {
            return Err(Error::SolverBreakdown { pivot_ratio });
        }

        let mut fac = CyclicTridiagonal {
            lower,
            diag,
            upper,
            cp,
            inv_den,
            gamma,
            z: Vec::new(),
            denom: 0.0,
            pivot_ratio,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = fac.upper[n - 1];
        fac.thomas(&mut u);
        let denom = 1.0 + u[0] + fac.lower[0] / gamma * u[n - 1];
        if denom.abs() < PIVOT_RATIO_FLOOR || !denom.is_finite() {
            return Err(Error::SolverBreakdown { pivot_ratio: denom.abs() });
        }
        fac.z = u;
        fac.denom = denom;
        Ok(fac)
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Ratio of the smallest elimination pivot to the largest diagonal entry.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    fn thomas(&self, d: &mut [f64]) {
        let n = d.len();
        d[0] *= self.inv_den[0];
        for i in 1..n {
            d[i] = (d[i] - self.lower[i] * d[i - 1]) * self.inv_den[i];
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.cp[i] * d[i + 1];
        }
    }

    /// Solve in place: `rhs` is overwritten with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::InvalidCurve(format!(
                "right-hand side has length {}, expected {n}",
                rhs.len()
            )));
        }
        self.thomas(rhs);
        let f = (rhs[0] + self.lower[0] / self.gamma * rhs[n - 1]) / self.denom;
        for (x, z) in rhs.iter_mut().zip(&self.z) {
            *x -= f * z;
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverBreakdown { pivot_ratio: self.pivot_ratio });
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// Matrix-vector product with the original (cyclic) matrix.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                self.lower[i] * x[(i + n - 1) % n] + self.diag[i] * x[i] + self.upper[i] * x[(i + 1) % n]
            })
            .collect()
    }

    pub fn bands(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.lower, &self.diag, &self.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = diag.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if j == (i + n - 1) % n {
                lower[i]
            } else if j == (i + 1) % n {
                upper[i]
            } else {
                0.0
            }
        });
        let b = nalgebra::DVector::from_column_slice(rhs);
        m.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn matches_dense_lu() {
        for &n in &[3usize, 4, 7, 64] {
            let lower: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * (i as f64).sin()).collect();
            let upper: Vec<f64> = (0..n).map(|i| -1.0 + 0.2 * (i as f64).cos()).collect();
            let diag: Vec<f64> = (0..n).map(|i| 4.5 + (i as f64 * 0.3).sin()).collect();
            let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
            let fac = CyclicTridiagonal::new(lower.clone(), diag.clone(), upper.clone()).unwrap();
            let x = fac.solve(&rhs).unwrap();
            let y = dense_solve(&lower, &diag, &upper, &rhs);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "n={n}: {a} vs {b}");
            }
            let r = fac.apply(&x);
            for (a, b) in r.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_periodic_laplacian_is_reported() {
        let n = 16;
        let res = CyclicTridiagonal::new(vec![1.0; n], vec![-2.0; n], vec![1.0; n]);
        assert!(matches!(res, Err(Error::SolverBreakdown { .. })));
    }
}
