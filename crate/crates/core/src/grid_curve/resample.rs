//! Reparametrization to uniform discrete arclength.

use ndarray::Array2;

use super::path::{ClosedPath, SplinePath};
use super::GridCurve;
use crate::error::{Error, Result};

const MAX_SHOOTS: usize = 80;
const MAX_CHORD_ITERS: usize = 80;

/// Inscribe a closed polygon with `n` equal chords in `path`, starting at `t = 0`.
///
/// Shooting on the chord length `c`: march from `t = 0` placing each node at chord
/// distance `c` from the previous one, and adjust `c` until the `n`-th node lands on
/// `t = period`.
pub fn inscribe_equal_chords<P: ClosedPath + ?Sized>(path: &P, n: usize) -> Array2<f64> {
    let period = path.period();
    let samples = 8 * path.pieces().max(n);
    let rough: Vec<Vec<f64>> = (0..samples).map(|i| path.point(period * i as f64 / samples as f64)).collect();
    let perimeter: f64 = (0..samples).map(|i| dist(&rough[(i + 1) % samples], &rough[i])).sum();
    shoot(path, n, perimeter / n as f64)
}

/// Shooting from the starting chord `c0`.
fn shoot<P: ClosedPath + ?Sized>(path: &P, n: usize, c0: f64) -> Array2<f64> {
    let period = path.period();
    // last-chord relative error below 1e-13
    let tol = 1e-13 * period / n as f64;
    let mut stalled = 0;

    let mut c = c0;
    let mut f = march(path, n, c, None);
    // bracket [lo, hi] with f(lo) < 0 < f(hi); secant steps, bisection when they leave it
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut prev: Option<(f64, f64)> = None;
    let mut best = (f.abs(), c);
    for _ in 0..MAX_SHOOTS {
        if f.abs() <= tol {
            break;
        }
        if f < 0.0 {
            lo = lo.max(c);
        } else {
            hi = hi.min(c);
        }
        let mut next = match prev {
            Some((cp, fp)) if f.is_finite() && fp.is_finite() && f != fp => c - f * (c - cp) / (f - fp),
            // t_n is roughly proportional to c
            _ if f.is_finite() => c * period / (period + f),
            _ => 0.5 * (lo + c),
        };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo.max(c) };
        }
        prev = Some((c, f));
        c = next;
        f = march(path, n, c, None);
        if f.abs() < best.0 {
            best = (f.abs(), c);
            stalled = 0;
        } else {
            stalled += 1;
        }
        if (hi.is_finite() && hi - lo <= 1e-16 * hi) || stalled >= 3 {
            break;
        }
    }
    let mut pts = Array2::zeros((n, path.dim()));
    march(path, n, best.1, Some(&mut pts));
    pts
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Place `n` nodes at successive chord distance `c`; returns `t_n − period`
/// (`+∞` if the march runs off).
fn march<P: ClosedPath + ?Sized>(path: &P, n: usize, c: f64, mut out: Option<&mut Array2<f64>>) -> f64 {
    let period = path.period();
    let mut t = 0.0;
    let mut x = path.point(0.0);
    let mut guess = period / n as f64;
    for i in 0..n {
        if let Some(o) = out.as_deref_mut() {
            for (k, v) in x.iter().enumerate() {
                o[[i, k]] = *v;
            }
        }
        match next_chord(path, t, &x, c, guess) {
            Some((tn, xn)) => {
                guess = tn - t;
                t = tn;
                x = xn;
            }
            None => return f64::INFINITY,
        }
    }
    t - period
}

/// Smallest `τ > t` with `|x(τ) − x0| = c`: safeguarded Newton from `t + guess`.
fn next_chord<P: ClosedPath + ?Sized>(path: &P, t: f64, x0: &[f64], c: f64, guess: f64) -> Option<(f64, Vec<f64>)> {
    let period = path.period();
    let (mut lo, mut hi) = (t, f64::INFINITY);
    let mut tau = t + guess;
    for _ in 0..MAX_CHORD_ITERS {
        let x = path.point(tau);
        let r = dist(&x, x0);
        let gv = r - c;
        let scale = x0.iter().fold(c, |m, v| m.max(v.abs()));
        if gv.abs() <= 8.0 * f64::EPSILON * scale {
            return Some((tau, x));
        }
        if gv < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let d = path.derivative(tau);
        let slope: f64 = x.iter().zip(x0).zip(&d).map(|((a, b), v)| (a - b) * v).sum::<f64>() / r;
        let mut next = if slope > 0.0 { tau - gv / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 2.0 * (lo - t).max(guess) };
        }
        if next - t > 2.0 * period {
            return None;
        }
        if (next - tau).abs() <= 2.0 * f64::EPSILON * tau.abs().max(1.0) {
            return Some((next, path.point(next)));
        }
        tau = next;
    }
    Some((tau, path.point(tau)))
}

fn chord_lengths(p: &Array2<f64>) -> Vec<f64> {
    let n = p.nrows();
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            p.row(j).iter().zip(p.row(i).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        })
        .collect()
}

/// Resample a curve at equal discrete arclength.
///
/// The nodes are interpolated by a periodic cubic spline; a new polygon with equal
/// edges is inscribed starting at node 0, scaled about its centroid to the input
/// polyline length, and recentered.
pub fn resample_to_arclength(curve: &GridCurve) -> Result<GridCurve> {
    let lens = curve.edge_lengths();
    let total: f64 = lens.iter().sum();
    let floor = 1e-14 * total / curve.n() as f64;
    if let Some(i) = lens.iter().position(|&l| l <= floor) {
        return Err(Error::NotImmersed(format!("zero-length edge at index {i}, cannot resample")));
    }
    let spline = SplinePath::new(curve.points());
    // the spline chords are close to the input edges
    let mut pts = shoot(&spline, curve.n(), total / curve.n() as f64);
    let new_len: f64 = chord_lengths(&pts).iter().sum();
    let centroid = pts.mean_axis(ndarray::Axis(0)).expect("n >= 8");
    let scale = total / new_len;
    for mut row in pts.rows_mut() {
        for (v, c) in row.iter_mut().zip(centroid.iter()) {
            *v = c + (*v - c) * scale;
        }
    }
    GridCurve::new(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_curve::w0;
    use std::f64::consts::PI;

    #[test]
    fn uniform_curve_is_a_fixed_point() {
        let c = w0(64, 2);
        let r = resample_to_arclength(&c).unwrap();
        assert!(c.sup_distance(&r) < 1e-12);
    }

    #[test]
    fn nonuniform_circle_becomes_uniform() {
        let n = 128;
        let pts = Array2::from_shape_fn((n, 2), |(i, k)| {
            let s = i as f64 / n as f64;
            let a = 2.0 * PI * (s + 0.08 * (2.0 * PI * s).sin());
            if k == 0 { a.cos() } else { a.sin() }
        });
        let c = GridCurve::new(pts).unwrap();
        let r = resample_to_arclength(&c).unwrap();
        assert!(r.edge_cv() < 1e-12, "cv {}", r.edge_cv());
        assert!((r.length() - c.length()).abs() < 1e-10);
        assert!(r.mean_point().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_edge_fails() {
        let mut p = w0(16, 2).into_points();
        let r = p.row(2).to_owned();
        p.row_mut(3).assign(&r);
        let c = GridCurve::new(p).unwrap();
        assert!(matches!(resample_to_arclength(&c), Err(Error::NotImmersed(_))));
    }
}
