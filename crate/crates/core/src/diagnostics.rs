//! Per-step functionals, verification events and decay-rate fits.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{regularized::g_radial, FlowKind, FlowState, StepReport};
use crate::tension::TensionField;

/// Bit-exact CSV header.
pub const CSV_HEADER: &str =
    "time,M,L,sigma_bar,c,theta,xi_tilde_l2,dxi_tilde_l2,edge_cv,dissipation_gap,drift";

/// Per-step relative tolerance of the monotonicity checks.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Absolute slack added to [`MONOTONE_TOL`], for columns that sit at roundoff (e.g. `‖ξ̃‖` on `w₀`).
pub const MONOTONE_FLOOR: f64 = 1e-13;

/// Tolerance of the per-step slope check `ΔM/Δt = −1`.
pub const MASS_SLOPE_TOL: f64 = 1e-4;

/// Relative tolerance of the extinction brackets.
pub const EXTINCTION_TOL: f64 = 1e-3;

/// Samples at or below this value are excluded from decay fits (resolution floor of
/// quantities computed from O(1) data in double precision).
pub const DECAY_FLOOR: f64 = 1e-12;

/// `1/(4π²)`.
pub fn inv_four_pi_sq() -> f64 {
    0.25 / (PI * PI)
}

/// The columns of the CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    Time,
    M,
    L,
    SigmaBar,
    C,
    Theta,
    XiTilde,
    DxiTilde,
    EdgeCv,
    DissipationGap,
    Drift,
}

impl Column {
    pub const ALL: [Column; 11] = [
        Column::Time,
        Column::M,
        Column::L,
        Column::SigmaBar,
        Column::C,
        Column::Theta,
        Column::XiTilde,
        Column::DxiTilde,
        Column::EdgeCv,
        Column::DissipationGap,
        Column::Drift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Time => "time",
            Column::M => "M",
            Column::L => "L",
            Column::SigmaBar => "sigma_bar",
            Column::C => "c",
            Column::Theta => "theta",
            Column::XiTilde => "xi_tilde_l2",
            Column::DxiTilde => "dxi_tilde_l2",
            Column::EdgeCv => "edge_cv",
            Column::DissipationGap => "dissipation_gap",
            Column::Drift => "drift",
        }
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Whether the column is written for a flow kind.
    ///
    /// | kind        | columns                                                       |
    /// |-------------|---------------------------------------------------------------|
    /// | original    | time, M, L, sigma_bar (= 1/λ), edge_cv, drift                  |
    /// | normalized  | all except dissipation_gap                                    |
    /// | regularized | all except drift (sigma_bar = h Σ |G^ε(τ)|/|τ|)               |
    /// | classical   | time, M, L, edge_cv                                           |
    pub fn present_for(self, kind: &FlowKind) -> bool {
        use Column::*;
        match kind {
            FlowKind::Original => matches!(self, Time | M | L | SigmaBar | EdgeCv | Drift),
            FlowKind::Normalized => self != DissipationGap,
            FlowKind::Regularized { .. } => self != Drift,
            FlowKind::Classical => matches!(self, Time | M | L | EdgeCv),
        }
    }
}

/// One row of a time series. Optional fields are absent for flows that do not define them.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Row {
    pub step: usize,
    pub time: f64,
    pub m: f64,
    pub l: f64,
    pub sigma_bar: Option<f64>,
    pub c: Option<f64>,
    pub theta: Option<f64>,
    pub xi_tilde_l2: Option<f64>,
    pub dxi_tilde_l2: Option<f64>,
    pub edge_cv: f64,
    pub dissipation_gap: Option<f64>,
    pub drift: Option<f64>,
    /// `λ = −L∂_tL` (original flow).
    pub lambda: Option<f64>,
    /// `max |σ − σ̄|` and `min σ`, `max σ` of the tension.
    pub sigma_osc: Option<f64>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    /// `max |∂_sξ|` (regularized flow).
    pub speed_max: Option<f64>,
}

impl Row {
    pub fn get(&self, col: Column) -> Option<f64> {
        match col {
            Column::Time => Some(self.time),
            Column::M => Some(self.m),
            Column::L => Some(self.l),
            Column::SigmaBar => self.sigma_bar,
            Column::C => self.c,
            Column::Theta => self.theta,
            Column::XiTilde => self.xi_tilde_l2,
            Column::DxiTilde => self.dxi_tilde_l2,
            Column::EdgeCv => Some(self.edge_cv),
            Column::DissipationGap => self.dissipation_gap,
            Column::Drift => self.drift,
        }
    }

    /// `|c² − 1|`.
    pub fn c_defect(&self) -> Option<f64> {
        self.c.map(|c| (c * c - 1.0).abs())
    }
}

/// Per-step records of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub flow_kind: FlowKind,
    pub config_hash: String,
    pub rows: Vec<Row>,
}

/// A failed check, as data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationEvent {
    pub step: usize,
    pub check: Cow<'static, str>,
    pub magnitude: f64,
}

impl VerificationEvent {
    pub fn new(step: usize, check: &'static str, magnitude: f64) -> Self {
        let magnitude = if magnitude.is_finite() { magnitude } else { f64::MAX };
        VerificationEvent { step, check: Cow::Borrowed(check), magnitude }
    }
}

/// Least-squares fit of `log(value) = a − rate·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
    /// Samples in the window excluded for lying at or below the resolution floor.
    pub excluded: usize,
}

impl TimeSeries {
    pub fn new(flow_kind: FlowKind, config_hash: impl Into<String>) -> Self {
        TimeSeries { flow_kind, config_hash: config_hash.into(), rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&Row> {
        self.rows.last()
    }

    pub fn column(&self, col: Column) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.get(col)).collect()
    }

    /// CSV text with the fixed header; absent columns are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            for (k, col) in Column::ALL.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if col.present_for(&self.flow_kind) {
                    if let Some(v) = row.get(*col) {
                        let _ = write!(out, "{v:e}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Parse CSV produced by [`TimeSeries::to_csv`] (extra fields such as λ are not restored).
    pub fn from_csv(flow_kind: FlowKind, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::InvalidConfig("CSV header does not match".into()));
        }
        let mut series = TimeSeries::new(flow_kind, "");
        for (step, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != Column::ALL.len() {
                return Err(Error::InvalidConfig(format!("CSV row {step} has {} fields", fields.len())));
            }
            let val = |i: usize| -> Result<Option<f64>> {
                if fields[i].is_empty() {
                    Ok(None)
                } else {
                    fields[i]
                        .parse()
                        .map(Some)
                        .map_err(|_| Error::InvalidConfig(format!("bad number '{}'", fields[i])))
                }
            };
            let req = |i: usize| -> Result<f64> {
                val(i)?.ok_or_else(|| Error::InvalidConfig(format!("CSV row {step}: missing field {i}")))
            };
            series.rows.push(Row {
                step,
                time: req(0)?,
                m: req(1)?,
                l: req(2)?,
                sigma_bar: val(3)?,
                c: val(4)?,
                theta: val(5)?,
                xi_tilde_l2: val(6)?,
                dxi_tilde_l2: val(7)?,
                edge_cv: req(8)?,
                dissipation_gap: val(9)?,
                drift: val(10)?,
                ..Default::default()
            });
        }
        Ok(series)
    }
}

/// Append the row describing `state`, which the run reached after `step` steps.
///
/// `report` must be the report of a step taken *from* `state` (possibly with `dt = 0`),
/// so that the tension and dissipation data refer to this state.
pub fn record(step: usize, state: &FlowState, report: &StepReport, series: &mut TimeSeries) -> Result<()> {
    if state.kind.name() != series.flow_kind.name() {
        return Err(Error::InvalidConfig(format!(
            "state of kind {} recorded into a {} series",
            state.kind, series.flow_kind
        )));
    }
    if let Some(last) = series.rows.last() {
        if !(state.time > last.time) {
            return Err(Error::InvalidConfig(format!(
                "time must increase strictly: {} after {}",
                state.time, last.time
            )));
        }
    }
    let curve = &state.curve;
    let mut row = Row {
        step,
        time: state.time,
        m: curve.l2_mass(),
        l: curve.length(),
        edge_cv: curve.edge_cv(),
        ..Default::default()
    };
    let tension_stats = |row: &mut Row, t: &TensionField| {
        row.sigma_osc = Some(t.oscillation());
        row.sigma_min = Some(t.min());
        row.sigma_max = Some(t.max());
    };
    match state.kind {
        FlowKind::Original => {
            row.lambda = report.lambda;
            row.sigma_bar = report.lambda.map(|l| 1.0 / l);
            row.drift = Some(state.drift);
            if let Some(t) = &report.tension {
                tension_stats(&mut row, t);
            }
        }
        FlowKind::Normalized | FlowKind::Regularized { .. } => {
            let fit = curve.project_to_circle_manifold();
            let (a, b) = curve.decomposition_norms(&fit);
            row.c = Some(fit.c);
            row.theta = Some(fit.theta);
            row.xi_tilde_l2 = Some(a);
            row.dxi_tilde_l2 = Some(b);
            if let FlowKind::Regularized { epsilon } = state.kind {
                row.sigma_bar = Some(regularized_multiplier_mean(curve, epsilon));
                let n = curve.n() as f64;
                row.speed_max = Some(curve.edge_lengths().iter().fold(0.0_f64, |m, l| m.max(l * n)));
                if report.dt_used > 0.0 {
                    row.dissipation_gap = Some(report.dissipation_gap());
                }
            } else {
                row.drift = Some(state.drift);
                if let Some(t) = &report.tension {
                    row.sigma_bar = Some(t.mean);
                    tension_stats(&mut row, t);
                }
            }
        }
        FlowKind::Classical => {}
    }
    series.rows.push(row);
    Ok(())
}

/// `h Σ |G^ε(τ_i)| / |τ_i|` over edges: the scalar multiplier `σ` with `G^ε(τ) = στ`.
pub fn regularized_multiplier_mean(curve: &crate::grid_curve::GridCurve, eps: f64) -> f64 {
    let n = curve.n() as f64;
    let total: f64 = curve
        .edge_lengths()
        .iter()
        .map(|l| {
            let t = l * n;
            if t > 0.0 {
                g_radial(t, eps) / t
            } else {
                1.0 / (eps + 1.0 / eps.sqrt())
            }
        })
        .sum();
    total / n
}

/// Hypotheses of the decay lemmas evaluated on the first row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayHypotheses {
    /// `σ̄(0) ≥ (2/3)/(4π²)`.
    pub sigma_bar: bool,
    /// `c(0)² ≥ 1/2`.
    pub c_squared: bool,
}

pub fn decay_hypotheses(series: &TimeSeries) -> DecayHypotheses {
    let first = series.rows.first();
    let sb = first.and_then(|r| r.sigma_bar).unwrap_or(0.0);
    let c = first.and_then(|r| r.c).unwrap_or(0.0);
    DecayHypotheses { sigma_bar: sb >= (2.0 / 3.0) * inv_four_pi_sq(), c_squared: c * c >= 0.5 }
}

fn check_step_monotone(
    series: &TimeSeries,
    values: &[Option<f64>],
    nondecreasing: bool,
    check: &'static str,
    events: &mut Vec<VerificationEvent>,
) {
    let scale = values.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = MONOTONE_TOL * scale + MONOTONE_FLOOR;
    for k in 1..values.len() {
        if let (Some(a), Some(b)) = (values[k - 1], values[k]) {
            let drop = if nondecreasing { a - b } else { b - a };
            if drop > tol {
                events.push(VerificationEvent::new(series.rows[k].step, check, drop));
            }
        }
    }
}

/// Monotonicity checks for the series' flow kind.
///
/// Normalized flow: `h Σ|ξ|²` and `σ̄` nondecreasing, `σ̄ ≤ h Σ|ξ|²`; `‖ξ̃‖` nonincreasing when
/// `σ̄(0) ≥ (2/3)/(4π²)`; `‖∂_sξ̃‖` nonincreasing when additionally `c(0)² ≥ 1/2`.
/// Original flow: `λ` nonincreasing and `ΔM/Δt = −1 ± 1e−4` between consecutive rows.
pub fn verify_monotone(series: &TimeSeries) -> Vec<VerificationEvent> {
    let mut events = Vec::new();
    match series.flow_kind {
        FlowKind::Normalized => {
            let mass: Vec<Option<f64>> = series.rows.iter().map(|r| Some(2.0 * r.m)).collect();
            check_step_monotone(series, &mass, true, "mass_nondecreasing", &mut events);
            let sb = series.column(Column::SigmaBar);
            check_step_monotone(series, &sb, true, "sigma_bar_nondecreasing", &mut events);
            for r in &series.rows {
                if let Some(s) = r.sigma_bar {
                    let excess = s - 2.0 * r.m;
                    if excess > 1e-8 {
                        events.push(VerificationEvent::new(r.step, "sigma_bar_below_mass", excess));
                    }
                }
            }
            let hyp = decay_hypotheses(series);
            if hyp.sigma_bar {
                let x = series.column(Column::XiTilde);
                check_step_monotone(series, &x, false, "xi_tilde_nonincreasing", &mut events);
                if hyp.c_squared {
                    let d = series.column(Column::DxiTilde);
                    check_step_monotone(series, &d, false, "dxi_tilde_nonincreasing", &mut events);
                }
            }
        }
        FlowKind::Original => {
            let lam: Vec<Option<f64>> = series.rows.iter().map(|r| r.lambda).collect();
            check_step_monotone(series, &lam, false, "lambda_nonincreasing", &mut events);
            events.extend(mass_slope_events(series, -1.0, MASS_SLOPE_TOL));
        }
        _ => {}
    }
    events
}

/// Consecutive-row slopes of `M` compared with `expected`.
pub fn mass_slope_events(series: &TimeSeries, expected: f64, tol: f64) -> Vec<VerificationEvent> {
    series
        .rows
        .windows(2)
        .filter_map(|w| {
            let slope = (w[1].m - w[0].m) / (w[1].time - w[0].time);
            let err = (slope - expected).abs();
            (err > tol).then(|| VerificationEvent::new(w[1].step, "mass_slope", err))
        })
        .collect()
}

/// Fit an exponential decay rate to `column` over `window`.
///
/// Samples at or below [`DECAY_FLOOR`] are excluded; at least 10 samples must remain.
/// Negative values are an error.
pub fn fit_decay(series: &TimeSeries, column: &str, window: (f64, f64)) -> Result<DecayFit> {
    let values: Vec<(f64, Option<f64>)> = match column {
        "c_defect" | "c2_minus_1" => series.rows.iter().map(|r| (r.time, r.c_defect())).collect(),
        name => {
            let col = Column::from_name(name).ok_or_else(|| Error::Fit(format!("unknown column '{name}'")))?;
            series.rows.iter().map(|r| (r.time, r.get(col))).collect()
        }
    };
    fit_decay_samples(&values, window, DECAY_FLOOR)
}

pub fn fit_decay_samples(values: &[(f64, Option<f64>)], window: (f64, f64), floor: f64) -> Result<DecayFit> {
    let mut pts = Vec::new();
    let mut excluded = 0;
    for &(t, v) in values {
        if t < window.0 || t > window.1 {
            continue;
        }
        let v = v.ok_or_else(|| Error::Fit(format!("column absent at t = {t}")))?;
        if v < 0.0 || v.is_nan() {
            return Err(Error::Fit(format!("non-positive value {v} at t = {t}")));
        }
        if v <= floor {
            excluded += 1;
            continue;
        }
        pts.push((t, v.ln()));
    }
    if pts.len() < 10 {
        return Err(Error::Fit(format!(
            "only {} samples above the floor {floor:e} in window [{}, {}] (need 10)",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (mt / n, my / n);
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &pts {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    if stt == 0.0 {
        return Err(Error::Fit("window contains a single time value".into()));
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { (sty * sty / (stt * syy)).clamp(0.0, 1.0) };
    Ok(DecayFit { rate: -slope, r_squared, window, samples: pts.len(), excluded })
}

/// Initial smallness `ε = (1/4π² − σ̄(0))₊ + ‖ξ̃(0)‖² + ‖∂_sξ̃(0)‖²`.
pub fn oscillation_epsilon(first: &Row) -> f64 {
    let sb = first.sigma_bar.unwrap_or(0.0);
    let x = first.xi_tilde_l2.unwrap_or(0.0);
    let d = first.dxi_tilde_l2.unwrap_or(0.0);
    (inv_four_pi_sq() - sb).max(0.0) + x * x + d * d
}

/// Threshold `1/(32π²)²` below which the oscillation bounds are asserted.
pub fn oscillation_threshold() -> f64 {
    (1.0 / (32.0 * PI * PI)).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OscillationOutcome {
    Pass,
    NotApplicable { epsilon: f64 },
    Violation(VerificationEvent),
}

/// Worst violation of `|σ − σ̄| ≤ 3√ε` and `1/4π² − 4√ε ≤ σ ≤ 1/4π² + 3√ε` (each with slack 1e−6).
/// Returns 0 when both hold.
pub fn oscillation_excess(tension: &TensionField, epsilon: f64) -> f64 {
    oscillation_excess_from(tension.oscillation(), tension.min(), tension.max(), epsilon)
}

/// [`oscillation_excess`] from the summary statistics `max|σ − σ̄|`, `min σ`, `max σ`.
pub fn oscillation_excess_from(osc: f64, min: f64, max: f64, epsilon: f64) -> f64 {
    let r = epsilon.max(0.0).sqrt();
    let base = inv_four_pi_sq();
    let osc = osc - (3.0 * r + 1e-6);
    let low = (base - 4.0 * r - 1e-6) - min;
    let high = max - (base + 3.0 * r + 1e-6);
    osc.max(low).max(high).max(0.0)
}

/// Oscillation events over a normalized-flow series, with `ε` from its first row.
/// `None` when `ε` exceeds [`oscillation_threshold`] and the check does not apply.
pub fn oscillation_events(series: &TimeSeries) -> Option<Vec<VerificationEvent>> {
    let epsilon = oscillation_epsilon(series.rows.first()?);
    if epsilon > oscillation_threshold() {
        return None;
    }
    Some(oscillation_events_ungated(series, epsilon))
}

/// Oscillation bounds at every row for a given `ε`, without the smallness gate.
pub fn oscillation_events_ungated(series: &TimeSeries, epsilon: f64) -> Vec<VerificationEvent> {
    series
        .rows
        .iter()
        .filter_map(|r| {
            let (o, lo, hi) = (r.sigma_osc?, r.sigma_min?, r.sigma_max?);
            let e = oscillation_excess_from(o, lo, hi, epsilon);
            (e > 0.0).then(|| VerificationEvent::new(r.step, "oscillation", e))
        })
        .collect()
}

/// The oscillation check for one normalized-flow state, gated on `ε ≤ 1/(32π²)²`.
pub fn oscillation_check(step: usize, tension: &TensionField, epsilon: f64) -> OscillationOutcome {
    if epsilon > oscillation_threshold() {
        return OscillationOutcome::NotApplicable { epsilon };
    }
    match oscillation_excess(tension, epsilon) {
        e if e > 0.0 => OscillationOutcome::Violation(VerificationEvent::new(step, "oscillation", e)),
        _ => OscillationOutcome::Pass,
    }
}

/// Extinction brackets `2√2π√(t*−t) ≤ L ≤ L₀√((t*−t)/t*)` and `λ ≥ 4π²` with relative
/// tolerance 1e−3, `t* = M(0)`.
pub fn extinction_bounds_check(series: &TimeSeries) -> Vec<VerificationEvent> {
    let mut events = Vec::new();
    let Some(first) = series.rows.first() else { return events };
    let (t_star, l0) = (first.m, first.l);
    for r in &series.rows {
        let rem = (t_star - r.time).max(0.0);
        let lower = 2.0 * 2f64.sqrt() * PI * rem.sqrt();
        let upper = l0 * (rem / t_star).sqrt();
        if r.l < lower * (1.0 - EXTINCTION_TOL) {
            events.push(VerificationEvent::new(r.step, "extinction_bounds", (lower - r.l) / lower));
        }
        if r.l > upper * (1.0 + EXTINCTION_TOL) {
            events.push(VerificationEvent::new(r.step, "extinction_bounds", (r.l - upper) / upper));
        }
        if let Some(lam) = r.lambda {
            let floor = 4.0 * PI * PI;
            if lam < floor * (1.0 - EXTINCTION_TOL) {
                events.push(VerificationEvent::new(r.step, "lambda_lower_bound", (floor - lam) / floor));
            }
        }
    }
    events
}

/// Total variation of `θ` over rows with time in `window`, measuring each increment on
/// the circle `[0,1)` (so that passing through 0 ≡ 1 costs nothing).
pub fn theta_total_variation(series: &TimeSeries, window: (f64, f64)) -> f64 {
    let th: Vec<f64> = series
        .rows
        .iter()
        .filter(|r| r.time >= window.0 && r.time <= window.1)
        .filter_map(|r| r.theta)
        .collect();
    th.windows(2).map(|w| circle_diff(w[1], w[0]).abs()).sum()
}

/// `a − b` reduced to `[−1/2, 1/2)`.
pub fn circle_diff(a: f64, b: f64) -> f64 {
    (a - b + 0.5).rem_euclid(1.0) - 0.5
}

/// Events for steps whose pre-reparametrization drift exceeds `ceiling`.
pub fn drift_events(series: &TimeSeries, ceiling: f64) -> Vec<VerificationEvent> {
    series
        .rows
        .iter()
        .filter_map(|r| r.drift.filter(|d| *d > ceiling).map(|d| VerificationEvent::new(r.step, "drift_ceiling", d)))
        .collect()
}

/// Regularized flow: per-step `lhs − rhs ≤ 1e−8` and `|∂_sξ| ≤ 1 + 1e−8`.
pub fn dissipation_events(series: &TimeSeries) -> Vec<VerificationEvent> {
    let mut events = Vec::new();
    for r in &series.rows {
        if let Some(g) = r.dissipation_gap {
            if g > 1e-8 {
                events.push(VerificationEvent::new(r.step, "dissipation_inequality", g));
            }
        }
        if let Some(s) = r.speed_max {
            if s > 1.0 + 1e-8 {
                events.push(VerificationEvent::new(r.step, "speed_bound", s - 1.0));
            }
        }
    }
    events
}

/// Every check name a [`VerificationEvent`] can carry, with the function that emits it.
pub const KNOWN_CHECKS: &[(&str, &str)] = &[
    ("mass_nondecreasing", "verify_monotone"),
    ("sigma_bar_nondecreasing", "verify_monotone"),
    ("sigma_bar_below_mass", "verify_monotone"),
    ("xi_tilde_nonincreasing", "verify_monotone"),
    ("dxi_tilde_nonincreasing", "verify_monotone"),
    ("lambda_nonincreasing", "verify_monotone"),
    ("mass_slope", "mass_slope_events"),
    ("oscillation", "oscillation_events"),
    ("extinction_bounds", "extinction_bounds_check"),
    ("lambda_lower_bound", "extinction_bounds_check"),
    ("drift_ceiling", "drift_events"),
    ("dissipation_inequality", "dissipation_events"),
    ("speed_bound", "dissipation_events"),
    ("tension_positive", "positivity_events"),
    ("length_law", "circle_law_events"),
    ("lambda_circle", "circle_law_events"),
    ("decay_xi_tilde", "decay_rate_event"),
    ("decay_c_defect", "decay_rate_event"),
    ("theta_variation", "theta_variation_event"),
    ("circle_convergence", "limit_event"),
    ("fixed_point", "limit_event"),
    ("tension_constant", "tension_constant_events"),
    ("uniform_speed", "uniform_speed_events"),
    ("classical_cv_monotone", "cv_growth_events"),
    ("density_contrast", "limit_event"),
    ("roundtrip_discrepancy", "limit_event"),
    ("roundtrip_halving", "limit_event"),
    ("eps_self_convergence", "limit_event"),
    ("fg_identity", "limit_event"),
    ("planarity", "stationary::StationaryReport::events"),
    ("positive_curvature", "stationary::StationaryReport::events"),
    ("first_integral", "stationary::StationaryReport::events"),
    ("rigidity", "stationary::StationaryReport::events"),
    ("sigma_sq_curvature", "limit_event"),
    ("first_integral_closed_form", "limit_event"),
];

pub fn is_known_check(name: &str) -> bool {
    KNOWN_CHECKS.iter().any(|(c, _)| *c == name)
}

/// An event at `step` when `value > limit` (or is NaN), with magnitude `value − limit`.
pub fn limit_event(step: usize, check: &'static str, value: f64, limit: f64) -> Option<VerificationEvent> {
    (!(value <= limit)).then(|| VerificationEvent::new(step, check, value - limit))
}

/// Worst relative error of `L` against `2πR√(1 − 2t/R²)` and worst `|λ − 4π²|` over a
/// shrinking-circle series of initial radius `radius`.
pub fn circle_law_errors(series: &TimeSeries, radius: f64) -> (f64, f64) {
    let mut worst = (0.0_f64, 0.0_f64);
    for r in &series.rows {
        let exact = 2.0 * PI * radius * (1.0 - 2.0 * r.time / (radius * radius)).max(0.0).sqrt();
        worst.0 = worst.0.max((r.l - exact).abs() / exact);
        if let Some(l) = r.lambda {
            worst.1 = worst.1.max((l - 4.0 * PI * PI).abs());
        }
    }
    worst
}

/// Rows where the shrinking circle leaves its exact law: `length_law` (relative 1e−3)
/// and `lambda_circle` (`λ = 4π² ± 1e−2`).
pub fn circle_law_events(series: &TimeSeries, radius: f64) -> Vec<VerificationEvent> {
    let mut events = Vec::new();
    for r in &series.rows {
        let exact = 2.0 * PI * radius * (1.0 - 2.0 * r.time / (radius * radius)).max(0.0).sqrt();
        events.extend(limit_event(r.step, "length_law", (r.l - exact).abs() / exact, 1e-3));
        if let Some(l) = r.lambda {
            events.extend(limit_event(r.step, "lambda_circle", (l - 4.0 * PI * PI).abs(), 1e-2));
        }
    }
    events
}

/// Largest `|ΔM/Δt + 1|` between consecutive rows.
pub fn max_mass_slope_error(series: &TimeSeries) -> f64 {
    series
        .rows
        .windows(2)
        .map(|w| ((w[1].m - w[0].m) / (w[1].time - w[0].time) + 1.0).abs())
        .fold(0.0, f64::max)
}

/// One-sided rate assertion: an event when the fitted rate is below `guaranteed − 0.02`.
pub fn decay_rate_event(fit: &DecayFit, guaranteed: f64, check: &'static str) -> Option<VerificationEvent> {
    let floor = guaranteed - 0.02;
    (!(fit.rate >= floor)).then(|| VerificationEvent::new(0, check, floor - fit.rate))
}

/// `theta_variation` when the total variation of `θ` over `window` reaches `tol`.
pub fn theta_variation_event(series: &TimeSeries, window: (f64, f64), tol: f64) -> Option<VerificationEvent> {
    let step = series.last().map(|r| r.step).unwrap_or(0);
    limit_event(step, "theta_variation", theta_total_variation(series, window), tol)
}

/// Rows whose tension leaves `value ± tol`.
pub fn tension_constant_events(series: &TimeSeries, value: f64, tol: f64) -> Vec<VerificationEvent> {
    series
        .rows
        .iter()
        .filter_map(|r| {
            let dev = (r.sigma_min? - value).abs().max((r.sigma_max? - value).abs());
            limit_event(r.step, "tension_constant", dev, tol)
        })
        .collect()
}

/// Rows whose edge-length CV reaches `tol`.
pub fn uniform_speed_events(series: &TimeSeries, tol: f64) -> Vec<VerificationEvent> {
    series.rows.iter().filter_map(|r| limit_event(r.step, "uniform_speed", r.edge_cv, tol)).collect()
}

/// Rows where the edge-length CV decreases.
pub fn cv_growth_events(series: &TimeSeries) -> Vec<VerificationEvent> {
    series
        .rows
        .windows(2)
        .filter_map(|w| limit_event(w[1].step, "classical_cv_monotone", w[0].edge_cv - w[1].edge_cv, 0.0))
        .collect()
}

/// The per-row checks ([`positivity_events`], [`drift_events`], [`dissipation_events`])
/// evaluated directly on a state and the report of the step taken from it, for steps
/// that are not stored in the series.
pub fn step_events(step: usize, state: &FlowState, report: &StepReport, drift_ceiling: f64) -> Vec<VerificationEvent> {
    let mut events = Vec::new();
    if let Some(t) = &report.tension {
        let m = t.min();
        if !(m > 0.0) {
            events.push(VerificationEvent::new(step, "tension_positive", -m));
        }
    }
    match state.kind {
        FlowKind::Original | FlowKind::Normalized => {
            if state.drift > drift_ceiling {
                events.push(VerificationEvent::new(step, "drift_ceiling", state.drift));
            }
        }
        FlowKind::Regularized { .. } => {
            let g = report.dissipation_gap();
            if report.dt_used > 0.0 && g > 1e-8 {
                events.push(VerificationEvent::new(step, "dissipation_inequality", g));
            }
            let n = state.curve.n() as f64;
            let s = state.curve.edge_lengths().iter().fold(0.0_f64, |m, l| m.max(l * n));
            if s > 1.0 + 1e-8 {
                events.push(VerificationEvent::new(step, "speed_bound", s - 1.0));
            }
        }
        FlowKind::Classical => {}
    }
    events
}

/// Tension positivity, reported per row.
pub fn positivity_events(series: &TimeSeries) -> Vec<VerificationEvent> {
    series
        .rows
        .iter()
        .filter_map(|r| r.sigma_min.filter(|m| !(*m > 0.0)).map(|m| VerificationEvent::new(r.step, "tension_positive", -m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(rate: f64) -> TimeSeries {
        let mut s = TimeSeries::new(FlowKind::Normalized, "x");
        for k in 0..=100 {
            let t = 0.1 * k as f64;
            s.rows.push(Row {
                step: k,
                time: t,
                m: 0.01 + 1e-6 * t,
                sigma_bar: Some(0.02 + 1e-7 * t),
                xi_tilde_l2: Some((-rate * t).exp()),
                c: Some(1.0),
                theta: Some(0.0),
                dxi_tilde_l2: Some(0.0),
                ..Default::default()
            });
        }
        s
    }

    #[test]
    fn exact_exponential_rate() {
        let fit = fit_decay(&synthetic(0.25), "xi_tilde_l2", (1.0, 8.0)).unwrap();
        assert!((fit.rate - 0.25).abs() < 1e-6);
        assert!(fit.samples >= 10 && (fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_decay(&synthetic(0.25), "xi_tilde_l2", (1.0, 1.5)).is_err());
        let mut s = synthetic(0.25);
        s.rows[20].xi_tilde_l2 = Some(-1.0);
        assert!(fit_decay(&s, "xi_tilde_l2", (1.0, 8.0)).is_err());
    }

    #[test]
    fn corrupted_series_gives_one_event() {
        let mut s = synthetic(0.25);
        assert!(verify_monotone(&s).is_empty());
        s.rows[40].sigma_bar = Some(0.0199);
        let ev = verify_monotone(&s);
        assert_eq!(ev.len(), 1, "{ev:?}");
        assert_eq!(ev[0].check, "sigma_bar_nondecreasing");
        assert_eq!(ev[0].step, 40);
    }

    #[test]
    fn csv_layout() {
        let s = synthetic(1.0);
        let csv = s.to_csv();
        let first = csv.lines().nth(1).unwrap();
        assert_eq!(first.split(',').count(), 11);
        assert!(first.ends_with(",0e0,,"));
        let back = TimeSeries::from_csv(FlowKind::Normalized, &csv).unwrap();
        assert_eq!(back.rows[5].xi_tilde_l2, s.rows[5].xi_tilde_l2);
        let mut c = TimeSeries::new(FlowKind::Classical, "");
        c.rows.push(Row { time: 0.5, m: 1.0, l: 2.0, edge_cv: 0.1, ..Default::default() });
        assert_eq!(c.to_csv().lines().nth(1).unwrap(), "5e-1,1e0,2e0,,,,,,1e-1,,");
    }

    #[test]
    fn theta_variation_wraps() {
        let mut s = synthetic(1.0);
        for (k, r) in s.rows.iter_mut().enumerate() {
            r.theta = Some(if k % 2 == 0 { 1e-9 } else { 1.0 - 1e-9 });
        }
        assert!(theta_total_variation(&s, (5.0, 10.0)) < 1e-6);
    }

    #[test]
    fn oscillation_gate() {
        let t = TensionField { values: vec![inv_four_pi_sq(); 8], residual_norm: 0.0, mean: inv_four_pi_sq() };
        assert_eq!(oscillation_check(0, &t, 0.0), OscillationOutcome::Pass);
        assert!(matches!(oscillation_check(0, &t, 1.0), OscillationOutcome::NotApplicable { .. }));
        let bad = TensionField { values: vec![0.0, 0.05, 0.0, 0.05, 0.0, 0.05, 0.0, 0.05], residual_norm: 0.0, mean: 0.025 };
        assert!(matches!(oscillation_check(3, &bad, 1e-8), OscillationOutcome::Violation(_)));
    }
}
