//! Catalog of initial data.
//!
//! Descriptor grammar (`NAME[:ARGS][@LENGTH]`):
//!
//! | descriptor              | curve                                                        |
//! |-------------------------|--------------------------------------------------------------|
//! | `circle[:R]`            | circle of radius `R` (default `1/2π`)                         |
//! | `mcircle:m[,R]`         | circle of radius `R` (default `1/(2πm)`) traversed `m` times  |
//! | `ellipse:a,b`           | ellipse with semi-axes `a`, `b`                               |
//! | `perturbed:amp,j[,ph]`  | polar graph `r = r0(1 + amp cos(2πjφ + ph))`, unit length     |
//! | `square[:side]`         | square of side `side` (default `1/4`)                         |
//! | `file:PATH`             | polygon read from a curve JSON file                           |
//!
//! `ph` may be a number or `rand`, in which case the phase is drawn from the run seed.
//! The optional `@LENGTH` suffix rescales the curve to length `LENGTH`, measured in
//! circumference units (see [`reference_length_ratio`]); `perturbed` defaults to `@1`.
//! All curves are sampled with equal chords and recentered.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::path::{total_length, ClosedPath, Ellipse, MultiCircle, PolarCurve, Polygon};
use super::resample::inscribe_equal_chords;
use super::{GridCurve, MIN_N};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Circle { radius: f64 },
    MultiCircle { m: u32, radius: f64 },
    Ellipse { a: f64, b: f64 },
    Perturbed { amp: f64, j: u32, phase: Phase },
    Square { side: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Fixed(f64),
    Random,
}

/// A parsed initial-datum descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct InitDescriptor {
    pub shape: Shape,
    pub length: Option<f64>,
    text: String,
}

impl InitDescriptor {
    /// Requested length, in circumference units (see [`reference_length_ratio`]).
    pub fn target_length(&self) -> Option<f64> {
        match (&self.shape, self.length) {
            (_, Some(l)) => Some(l),
            (Shape::Perturbed { .. }, None) => Some(1.0),
            _ => None,
        }
    }
}

/// Polyline length of the regular `n`-gon inscribed in a circle of circumference 1,
/// `n sin(π/n) / π`.
///
/// Lengths requested through the catalog are measured in circumference units: a curve
/// scaled to length `L` has the polyline length of the `n`-gon sampled from the circle
/// of circumference `L`. In particular `circle@1` is the sampled reference circle `w₀`,
/// and every curve of unit length has the same discrete length as `w₀`.
pub fn reference_length_ratio(n: usize) -> f64 {
    let n = n as f64;
    n * (PI / n).sin() / PI
}

impl fmt::Display for InitDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn parse_args(args: Option<&str>) -> Result<Vec<String>> {
    Ok(args
        .map(|a| a.split(',').map(|s| s.trim().to_string()).collect())
        .unwrap_or_default())
}

fn num(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| bad(format!("{what}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(bad(format!("{what} must be finite")));
    }
    Ok(v)
}

fn positive(s: &str, what: &str) -> Result<f64> {
    let v = num(s, what)?;
    if v <= 0.0 {
        return Err(bad(format!("{what} must be > 0, got {v}")));
    }
    Ok(v)
}

fn count(s: &str, what: &str) -> Result<u32> {
    let v: u32 = s.parse().map_err(|_| bad(format!("{what}: '{s}' is not a positive integer")))?;
    if v == 0 {
        return Err(bad(format!("{what} must be >= 1")));
    }
    Ok(v)
}

impl FromStr for InitDescriptor {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (body, length) = match text.rsplit_once('@') {
            Some((b, l)) if l.trim().parse::<f64>().is_ok() => (b, Some(positive(l.trim(), "target length")?)),
            _ => (text, None),
        };
        let (name, args) = match body.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (body, None),
        };
        let shape = if name == "file" {
            let p = args.filter(|a| !a.is_empty()).ok_or_else(|| bad("file: needs a path"))?;
            Shape::File(PathBuf::from(p))
        } else {
            let a = parse_args(args)?;
            let arity = |lo: usize, hi: usize| -> Result<()> {
                if a.len() < lo || a.len() > hi {
                    Err(bad(format!("'{name}' takes {lo}..={hi} arguments, got {}", a.len())))
                } else {
                    Ok(())
                }
            };
            match name {
                "circle" => {
                    arity(0, 1)?;
                    let radius = match a.first() {
                        Some(r) => positive(r, "circle radius")?,
                        None => 1.0 / (2.0 * PI),
                    };
                    Shape::Circle { radius }
                }
                "mcircle" => {
                    arity(1, 2)?;
                    let m = count(&a[0], "covering number m")?;
                    let radius = match a.get(1) {
                        Some(r) => positive(r, "mcircle radius")?,
                        None => 1.0 / (2.0 * PI * m as f64),
                    };
                    Shape::MultiCircle { m, radius }
                }
                "ellipse" => {
                    arity(2, 2)?;
                    Shape::Ellipse { a: positive(&a[0], "semi-axis a")?, b: positive(&a[1], "semi-axis b")? }
                }
                "perturbed" => {
                    arity(2, 3)?;
                    let amp = num(&a[0], "perturbation amplitude")?;
                    let j = count(&a[1], "perturbation mode j")?;
                    let phase = match a.get(2).map(String::as_str) {
                        None => Phase::Fixed(0.0),
                        Some("rand") => Phase::Random,
                        Some(p) => Phase::Fixed(num(p, "perturbation phase")?),
                    };
                    if amp.abs() >= 1.0 {
                        return Err(bad(format!(
                            "perturbed:{amp},{j} is not immersed: the radius 1 + amp·cos(...) must stay positive (|amp| < 1)"
                        )));
                    }
                    Shape::Perturbed { amp, j, phase }
                }
                "square" => {
                    arity(0, 1)?;
                    let side = match a.first() {
                        Some(s) => positive(s, "square side")?,
                        None => 0.25,
                    };
                    Shape::Square { side }
                }
                other => {
                    return Err(bad(format!(
                        "unknown initial datum '{other}' (expected circle, mcircle, ellipse, perturbed, square, file)"
                    )))
                }
            }
        };
        Ok(InitDescriptor { shape, length, text: text.to_string() })
    }
}

/// Build an initial curve from a descriptor, using seed 0 for random phases.
pub fn make_curve(desc: &InitDescriptor, n: usize, dim: usize) -> Result<GridCurve> {
    make_curve_seeded(desc, n, dim, 0)
}

pub fn make_curve_seeded(desc: &InitDescriptor, n: usize, dim: usize, seed: u64) -> Result<GridCurve> {
    if n < MIN_N {
        return Err(bad(format!("n must be >= {MIN_N}, got {n}")));
    }
    if dim < 2 {
        return Err(bad(format!("dim must be >= 2, got {dim}")));
    }
    let pts = match &desc.shape {
        Shape::Circle { radius } => regular_polygon(n, dim, *radius, 1),
        Shape::MultiCircle { m, radius } => regular_polygon(n, dim, *radius, *m),
        Shape::Ellipse { a, b } => inscribe_equal_chords(&Ellipse { a: *a, b: *b, dim }, n),
        Shape::Perturbed { amp, j, phase } => {
            let phase = match phase {
                Phase::Fixed(p) => *p,
                Phase::Random => ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..2.0 * PI),
            };
            let unit = PolarCurve { r0: 1.0, amp: *amp, j: *j, phase, dim };
            let len = total_length(&unit, 4);
            inscribe_equal_chords(&PolarCurve { r0: 1.0 / len, ..unit }, n)
        }
        Shape::Square { side } => {
            let h = 0.5 * side;
            let mut v = Array2::zeros((4, dim));
            for (i, (x, y)) in [(h, -h), (h, h), (-h, h), (-h, -h)].into_iter().enumerate() {
                v[[i, 0]] = x;
                v[[i, 1]] = y;
            }
            // Start mid-edge so that corners fall on nodes when 8 divides n.
            let poly = Polygon::new(v);
            let shifted = Shifted { inner: &poly, offset: 3.5 };
            inscribe_equal_chords(&shifted, n)
        }
        Shape::File(path) => {
            let c = GridCurve::read_json(path)?;
            if c.dim() > dim {
                return Err(bad(format!("file curve has dim {} > requested {dim}", c.dim())));
            }
            c.check_immersed()?;
            let mut v = Array2::zeros((c.n(), dim));
            v.slice_mut(ndarray::s![.., ..c.dim()]).assign(c.points());
            inscribe_equal_chords(&Polygon::new(v), n)
        }
    };
    let mut curve = GridCurve::new(pts)?;
    if let Some(target) = desc.target_length() {
        let l = curve.length();
        curve = curve.scaled(target * reference_length_ratio(n) / l);
    }
    let lens = curve.edge_lengths();
    let mean = lens.iter().sum::<f64>() / n as f64;
    if let Some(i) = lens.iter().position(|&l| l <= 1e-12 * mean) {
        return Err(Error::NotImmersed(format!("descriptor '{desc}' yields a zero-length edge at index {i}")));
    }
    Ok(curve)
}

fn regular_polygon(n: usize, dim: usize, radius: f64, m: u32) -> Array2<f64> {
    let c = MultiCircle { radius, m, dim };
    Array2::from_shape_fn((n, dim), |(i, k)| c.point(i as f64 / n as f64)[k])
}

struct Shifted<'a, P: ClosedPath> {
    inner: &'a P,
    offset: f64,
}

impl<P: ClosedPath> ClosedPath for Shifted<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn period(&self) -> f64 {
        self.inner.period()
    }
    fn point(&self, t: f64) -> Vec<f64> {
        self.inner.point(t + self.offset)
    }
    fn derivative(&self, t: f64) -> Vec<f64> {
        self.inner.derivative(t + self.offset)
    }
    fn pieces(&self) -> usize {
        // Half-unit offset: pieces of width 1/2 keep the corners on piece boundaries.
        2 * self.inner.pieces()
    }
}
