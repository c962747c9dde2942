//! Time steppers for the original, normalized, ε-regularized and classical flows.

pub mod regularized;

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_curve::{self, resample_to_arclength, GridCurve};
use crate::linalg::CyclicTridiagonal;
use crate::tension::{
    normalized_edge_tension, original_edge_tension, original_lambda, solve_normalized_tension, solve_original_tension,
    TensionField,
};

pub use regularized::{f_eps, g_eps, g_radial};

/// Default ceiling on the pre-reparametrization edge drift.
pub const DEFAULT_DRIFT_CEILING: f64 = 1e-3;

/// Default length below which the original flow is considered extinct.
pub const DEFAULT_LENGTH_FLOOR: f64 = 1e-3;

const MIDPOINT_MAX_ITERS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FlowKind {
    Original,
    Normalized,
    Regularized { epsilon: f64 },
    Classical,
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Original => "original",
            FlowKind::Normalized => "normalized",
            FlowKind::Regularized { .. } => "regularized",
            FlowKind::Classical => "classical",
        }
    }

    /// Whether the stepper reparametrizes to uniform speed.
    pub fn keeps_uniform_speed(&self) -> bool {
        matches!(self, FlowKind::Original | FlowKind::Normalized)
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKind::Regularized { epsilon } => write!(f, "regularized(eps={epsilon})"),
            other => f.write_str(other.name()),
        }
    }
}

/// A curve at a given time of a given flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub curve: GridCurve,
    /// `t` for the original, regularized and classical flows; `τ` for the normalized flow.
    pub time: f64,
    pub kind: FlowKind,
    /// Edge drift measured before the last reparametrization.
    pub drift: f64,
}

impl FlowState {
    pub fn new(curve: GridCurve, kind: FlowKind) -> Self {
        let drift = curve.drift();
        FlowState { curve, time: 0.0, kind, drift }
    }
}

/// Per-step options shared by the steppers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub reparametrize: bool,
    pub drift_ceiling: f64,
    pub length_floor: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            reparametrize: true,
            drift_ceiling: DEFAULT_DRIFT_CEILING,
            length_floor: DEFAULT_LENGTH_FLOOR,
        }
    }
}

/// What happened during one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub dt_used: f64,
    /// Tension at the start of the step (original and normalized flows).
    pub tension: Option<TensionField>,
    pub pre_reparam_drift: f64,
    /// `h Σ |Δξ/dt|²` (regularized flow).
    pub dissipation_lhs: f64,
    /// `h Σ ξⁿ·(Δξ/dt)` (regularized flow).
    pub dissipation_rhs: f64,
    /// `λ = −L ∂_t L` at the start of the step (original flow).
    pub lambda: Option<f64>,
    /// Range of `|∂_sξ|` (forward differences) after the step (regularized flow).
    pub speed_range: Option<(f64, f64)>,
}

impl StepReport {
    pub fn dissipation_gap(&self) -> f64 {
        self.dissipation_lhs - self.dissipation_rhs
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("time step must be finite and >= 0, got {dt}")));
    }
    Ok(())
}

fn expect_kind(state: &FlowState, want: &str) -> Result<()> {
    if state.kind.name() != want {
        return Err(Error::InvalidConfig(format!("{want} stepper called on a {} state", state.kind)));
    }
    Ok(())
}

/// Discrete `(A_σ v)_i = [σ_{i+½}(v_{i+1}−v_i) − σ_{i−½}(v_i−v_{i−1})]/h²` as bands, scaled by `c`.
pub(crate) fn diffusion_bands(sigma_edge: &[f64], c: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = sigma_edge.len();
    let inv_h2 = (n * n) as f64;
    let upper: Vec<f64> = (0..n).map(|i| c * sigma_edge[i] * inv_h2).collect();
    let lower: Vec<f64> = (0..n).map(|i| c * sigma_edge[(i + n - 1) % n] * inv_h2).collect();
    let diag: Vec<f64> = (0..n).map(|i| -(upper[i] + lower[i])).collect();
    (lower, diag, upper)
}

pub(crate) fn apply_bands(bands: &(Vec<f64>, Vec<f64>, Vec<f64>), v: &[f64]) -> Vec<f64> {
    let (lo, di, up) = bands;
    let n = v.len();
    (0..n).map(|i| lo[i] * v[(i + n - 1) % n] + di[i] * v[i] + up[i] * v[(i + 1) % n]).collect()
}

/// Solve `M x_k = rhs_k` for every coordinate column.
fn solve_columns(m: &CyclicTridiagonal, rhs: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = rhs.clone();
    for mut col in out.columns_mut() {
        let mut v = col.to_vec();
        m.solve_in_place(&mut v)?;
        col.assign(&ndarray::Array1::from(v));
    }
    Ok(out)
}

fn finish_uniform(points: Array2<f64>, opts: &StepOptions, dt: f64) -> Result<(GridCurve, f64)> {
    let curve = GridCurve::new(points)?;
    curve.check_immersed()?;
    let drift = curve.drift();
    if drift > opts.drift_ceiling {
        return Err(Error::StepRejected {
            reason: format!("edge drift {drift:.3e} exceeds ceiling {:.1e}", opts.drift_ceiling),
            suggested_dt: Some(0.5 * dt),
        });
    }
    let curve = if opts.reparametrize { resample_to_arclength(&curve)? } else { curve };
    Ok((curve, drift))
}

/// One backward-Euler step of the normalized flow `ξ_τ = ∂_s(σ∂_sξ) + ξ`.
///
/// `σ` is frozen at the start of the step; the diffusion and the `+ξ` term are
/// implicit: `(I − dt(ℓ⁻²A_σ + I)) ξⁿ⁺¹ = ξⁿ`, with `ℓ` the polyline length.
/// The diffusion uses the edge tensions of [`normalized_edge_tension`]; the report
/// carries the node tension.
pub fn step_normalized(state: &FlowState, dt: f64, opts: &StepOptions) -> Result<(FlowState, StepReport)> {
    expect_kind(state, "normalized")?;
    check_dt(dt)?;
    let sigma = solve_normalized_tension(&state.curve)?;
    if dt == 0.0 {
        let report = StepReport { tension: Some(sigma), pre_reparam_drift: state.drift, ..Default::default() };
        return Ok((state.clone(), report));
    }
    let ell = state.curve.length();
    let sig_edge = normalized_edge_tension(&state.curve)?.values;
    let (lo, di, up) = diffusion_bands(&sig_edge, -dt / (ell * ell));
    let diag: Vec<f64> = di.iter().map(|d| 1.0 - dt + d).collect();
    let m = CyclicTridiagonal::new(lo, diag, up)?;
    let next = solve_columns(&m, state.curve.points())?;
    let (curve, drift) = finish_uniform(next, opts, dt)?;
    // The constraint |∂_sξ| = const also fixes the value of the constant: restore the length.
    let curve = if opts.reparametrize { curve.scaled(ell / curve.length()) } else { curve };
    let new_state = FlowState { curve, time: state.time + dt, kind: state.kind, drift };
    let report = StepReport { dt_used: dt, tension: Some(sigma), pre_reparam_drift: drift, ..Default::default() };
    Ok((new_state, report))
}

/// One step of the original flow `η_t = L⁻² ∂_s(σ̃ ∂_sη)`.
///
/// `σ̃` is frozen at the start of the step and the diffusion is integrated with the
/// implicit midpoint rule. The factor `L⁻²` is evaluated at the midpoint curve
/// `η̄ = (ηⁿ + ηⁿ⁺¹)/2` as `L̄² = h Σ σ̃_{i+½} |D⁺η̄_i|²` (equal to `L²` on uniform-speed
/// curves since `h Σ σ̃ = 1`), found by fixed-point iteration. With this choice
/// summation by parts gives `Mⁿ⁺¹ − Mⁿ = −dt` for the step.
///
/// The diffusion uses the edge tensions of [`original_edge_tension`], which keep the
/// edges of the semi-discrete flow in a common ratio, so the reparametrization only
/// removes an `O(dt²)` drift. The report carries the node tension and its `λ`.
pub fn step_original(state: &FlowState, dt: f64, opts: &StepOptions) -> Result<(FlowState, StepReport)> {
    expect_kind(state, "original")?;
    check_dt(dt)?;
    let curve = &state.curve;
    let length = curve.length();
    if length < opts.length_floor {
        return Err(Error::Extinction(format!("length {length:.3e} below floor {:.1e}", opts.length_floor)));
    }
    let mass = curve.l2_mass();
    if mass - dt <= 0.0 {
        return Err(Error::Extinction(format!(
            "step dt = {dt:.3e} would pass the extinction time (M = {mass:.3e})"
        )));
    }
    let sigma = solve_original_tension(curve)?;
    let lambda = original_lambda(curve, &sigma);
    if dt == 0.0 {
        let report = StepReport {
            tension: Some(sigma),
            lambda: Some(lambda),
            pre_reparam_drift: state.drift,
            ..Default::default()
        };
        return Ok((state.clone(), report));
    }
    let sig_edge = original_edge_tension(curve)?.values;
    let n = curve.n();
    let mut l2_star = length * length;
    let mut next = curve.points().clone();
    for _ in 0..MIDPOINT_MAX_ITERS {
        let half = 0.5 * dt / l2_star;
        let bands = diffusion_bands(&sig_edge, half);
        let explicit = {
            let mut r = curve.points().clone();
            for mut col in r.columns_mut() {
                let v = col.to_vec();
                let av = apply_bands(&bands, &v);
                col.iter_mut().zip(av).for_each(|(x, a)| *x += a);
            }
            r
        };
        let (lo, di, up) = bands;
        let lo: Vec<f64> = lo.iter().map(|v| -v).collect();
        let up: Vec<f64> = up.iter().map(|v| -v).collect();
        let di: Vec<f64> = di.iter().map(|v| 1.0 - v).collect();
        let m = CyclicTridiagonal::new(lo, di, up)?;
        next = solve_columns(&m, &explicit)?;
        let mid = (&next + curve.points()) * 0.5;
        let e = grid_curve::forward_edges(&mid);
        let updated = (0..n)
            .map(|i| sig_edge[i] * e.row(i).dot(&e.row(i)))
            .sum::<f64>()
            * n as f64;
        let converged = (updated - l2_star).abs() <= 1e-15 * l2_star;
        l2_star = updated;
        if converged {
            break;
        }
    }
    let (new_curve, drift) = finish_uniform(next, opts, dt)?;
    let new_state = FlowState { curve: new_curve, time: state.time + dt, kind: state.kind, drift };
    let report = StepReport {
        dt_used: dt,
        tension: Some(sigma),
        pre_reparam_drift: drift,
        lambda: Some(lambda),
        ..Default::default()
    };
    Ok((new_state, report))
}

/// One explicit step of the regularized flow
/// `ξⁿ⁺¹_i = ξⁿ_i + dt [(κ_{i+½} − κ_{i−½})/h + ξⁿ_i]`, `κ_{i+½} = G^ε((ξ_{i+1} − ξ_i)/h)`.
/// No reparametrization is applied.
pub fn step_regularized(state: &FlowState, dt: f64, eps: f64) -> Result<(FlowState, StepReport)> {
    expect_kind(state, "regularized")?;
    check_dt(dt)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be > 0, got {eps}")));
    }
    let curve = &state.curve;
    let n = curve.n();
    let bound = regularized::stability_bound(n, eps);
    if dt > bound {
        return Err(Error::StepRejected {
            reason: format!("dt {dt:.3e} exceeds explicit stability bound h²ε/4 = {bound:.3e}"),
            suggested_dt: Some(bound),
        });
    }
    if dt == 0.0 {
        return Ok((state.clone(), StepReport { pre_reparam_drift: state.drift, ..Default::default() }));
    }
    let nf = n as f64;
    // κ_{i+½} = G^ε(τ) with τ = n e_i, which is parallel to e_i
    let mut kappa = curve.edges();
    for mut e in kappa.rows_mut() {
        let t = e.dot(&e).sqrt() * nf;
        let scale = if t > 0.0 { regularized::g_radial(t, eps) * nf / t } else { 0.0 };
        e *= scale;
    }
    let p = curve.points();
    let vel = Array2::from_shape_fn(p.dim(), |(i, k)| {
        (kappa[[i, k]] - kappa[[(i + n - 1) % n, k]]) * nf + p[[i, k]]
    });
    let h = curve.h();
    let lhs = h * vel.iter().map(|v| v * v).sum::<f64>();
    let rhs = h * vel.iter().zip(p.iter()).map(|(v, x)| v * x).sum::<f64>();
    let next = GridCurve::new(p + &(&vel * dt))?;
    let speeds: Vec<f64> = next.edge_lengths().iter().map(|l| l * nf).collect();
    let range = speeds.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &s| (a.min(s), b.max(s)));
    let drift = next.drift();
    let new_state = FlowState { curve: next, time: state.time + dt, kind: state.kind, drift };
    let report = StepReport {
        dt_used: dt,
        pre_reparam_drift: drift,
        dissipation_lhs: lhs,
        dissipation_rhs: rhs,
        speed_range: Some(range),
        ..Default::default()
    };
    Ok((new_state, report))
}

/// Curvature vector of a polyline with arbitrary spacing:
/// `H_i = 2 (T_{i+½} − T_{i−½}) / (|e_{i+½}| + |e_{i−½}|)` with unit edge tangents `T`.
/// Exact (`1/R` toward the center) on regular polygons inscribed in a circle of radius `R`.
pub fn curvature_vector(curve: &GridCurve) -> Array2<f64> {
    let e = curve.edges();
    let lens = curve.edge_lengths();
    let n = curve.n();
    Array2::from_shape_fn(e.dim(), |(i, k)| {
        let j = (i + n - 1) % n;
        2.0 * (e[[i, k]] / lens[i] - e[[j, k]] / lens[j]) / (lens[i] + lens[j])
    })
}

/// Largest stable step of the classical flow: `h² min|d1|² / 4`.
pub fn classical_stability_bound(curve: &GridCurve) -> f64 {
    let h = curve.h();
    let d1 = curve.d1();
    let min_speed_sq = d1.rows().into_iter().map(|r| r.dot(&r)).fold(f64::INFINITY, f64::min);
    0.25 * h * h * min_speed_sq
}

/// One explicit step of classical curve shortening `x_t = H(x)` without reparametrization.
pub fn step_classical(state: &FlowState, dt: f64) -> Result<(FlowState, StepReport)> {
    expect_kind(state, "classical")?;
    check_dt(dt)?;
    state.curve.check_immersed()?;
    if dt == 0.0 {
        return Ok((state.clone(), StepReport { pre_reparam_drift: state.drift, ..Default::default() }));
    }
    let bound = classical_stability_bound(&state.curve);
    if dt > bound {
        return Err(Error::StepRejected {
            reason: format!("dt {dt:.3e} exceeds explicit stability bound h²min|d1|²/4 = {bound:.3e}"),
            suggested_dt: Some(bound),
        });
    }
    let hv = curvature_vector(&state.curve);
    let next = GridCurve::new(state.curve.points() + &(&hv * dt))?;
    let drift = next.drift();
    let new_state = FlowState { curve: next, time: state.time + dt, kind: state.kind, drift };
    Ok((new_state, StepReport { dt_used: dt, pre_reparam_drift: drift, ..Default::default() }))
}

/// Dispatch on the state's flow kind.
pub fn step(state: &FlowState, dt: f64, opts: &StepOptions) -> Result<(FlowState, StepReport)> {
    match state.kind {
        FlowKind::Original => step_original(state, dt, opts),
        FlowKind::Normalized => step_normalized(state, dt, opts),
        FlowKind::Regularized { epsilon } => step_regularized(state, dt, epsilon),
        FlowKind::Classical => step_classical(state, dt),
    }
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
    fn reference_circle_is_a_fixed_point() {
        let s0 = FlowState::new(w0(256, 2), FlowKind::Normalized);
        let (s1, rep) = step_normalized(&s0, 1e-3, &StepOptions::default()).unwrap();
        assert!(s1.curve.sup_distance(&s0.curve) < 1e-8);
        assert!(rep.tension.unwrap().values.iter().all(|v| (v - 0.25 / (PI * PI)).abs() < 1e-12));
    }

    #[test]
    fn zero_step_is_identity() {
        let opts = StepOptions::default();
        let s = FlowState::new(curve("ellipse:2,1@1", 64), FlowKind::Normalized);
        assert_eq!(step_normalized(&s, 0.0, &opts).unwrap().0, s);
        let s = FlowState::new(curve("ellipse:2,1", 64), FlowKind::Original);
        assert_eq!(step_original(&s, 0.0, &opts).unwrap().0, s);
        let s = FlowState::new(curve("square", 64), FlowKind::Regularized { epsilon: 0.1 });
        assert_eq!(step_regularized(&s, 0.0, 0.1).unwrap().0.curve, s.curve);
    }

    #[test]
    fn original_mass_decreases_by_dt() {
        let opts = StepOptions { reparametrize: false, ..Default::default() };
        let mut s = FlowState::new(curve("ellipse:2,1", 256), FlowKind::Original);
        for _ in 0..5 {
            let (next, _) = step_original(&s, 1e-4, &opts).unwrap();
            let dm = (next.curve.l2_mass() - s.curve.l2_mass()) / 1e-4;
            assert!((dm + 1.0).abs() < 1e-6, "dM/dt = {dm}");
            s = FlowState { curve: resample_to_arclength(&next.curve).unwrap(), ..next };
        }
    }

    #[test]
    fn circle_shrinks_like_sqrt() {
        let opts = StepOptions::default();
        let mut s = FlowState::new(curve("circle:1", 128), FlowKind::Original);
        let mut c = FlowState::new(curve("circle:1", 128), FlowKind::Classical);
        let l0 = s.curve.length();
        let dt = 1e-4;
        for _ in 0..1000 {
            s = step_original(&s, dt, &opts).unwrap().0;
            c = step_classical(&c, dt).unwrap().0;
        }
        let want = l0 * (1.0 - 2.0 * 0.1f64).sqrt();
        assert!((s.curve.length() / want - 1.0).abs() < 1e-6);
        assert!((c.curve.length() / want - 1.0).abs() < 1e-4);
    }

    #[test]
    fn regularized_growth_on_shrunk_circle() {
        // On a compressed regular polygon the update is exactly radial:
        // ξⁿ⁺¹ = ξⁿ (1 + dt (1 − 2 r N sin(π/N) / R)), r = |G^ε(τ)|, τ = edge/h.
        // As ε → 0, r = O(√ε) and the factor tends to the pure growth 1 + dt.
        let n = 64;
        for eps in [1e-2, 1e-3, 1e-4] {
            let c = w0(n, 2).scaled(0.5);
            let radius = 0.25 / PI;
            let t = c.edge_lengths()[0] * n as f64;
            let (mut lo, mut hi) = (0.0, t / eps);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if regularized::f_radial(mid, eps) < t { lo = mid } else { hi = mid }
            }
            let r = 0.5 * (lo + hi);
            let damping = 2.0 * r * n as f64 * (PI / n as f64).sin() / radius;
            assert!(damping < 50.0 * eps.sqrt());
            let s = FlowState::new(c, FlowKind::Regularized { epsilon: eps });
            let dt = regularized::stability_bound(n, eps);
            let (s1, rep) = step_regularized(&s, dt, eps).unwrap();
            let ratio = s1.curve.length() / s.curve.length();
            assert!((ratio - (1.0 + dt * (1.0 - damping))).abs() < 1e-14);
            // The velocity is (1 − damping)ξ, so the gap is −damping(1 − damping)|ξ|².
            let gap = -damping * (1.0 - damping) * 2.0 * s.curve.l2_mass();
            assert!((rep.dissipation_gap() - gap).abs() < 1e-12);
        }
        let z = FlowState::new(GridCurve::new(Array2::zeros((16, 2))).unwrap(), FlowKind::Regularized { epsilon: 1e-3 });
        assert!(step_regularized(&z, 1e-7, 1e-3).unwrap().0.curve.points().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn classical_rejects_segment_and_large_dt() {
        let seg = Array2::from_shape_fn((16, 2), |(i, k)| if k == 0 { (i as f64 / 8.0 - 1.0).abs() } else { 0.0 });
        let s = FlowState::new(GridCurve::new(seg).unwrap(), FlowKind::Classical);
        assert!(step_classical(&s, 1e-6).is_err());
        let s = FlowState::new(curve("circle:1", 64), FlowKind::Classical);
        assert!(matches!(step_classical(&s, 1.0), Err(Error::StepRejected { .. })));
    }
}
