//! Driver loop: dt halving on rejected steps, clipping to the end time, extinction and
//! convergence stops, snapshots, and the standard checks for each flow kind.

use serde::Serialize;

use crate::config::{FlowName, RunConfig, MAX_HALVINGS};
use crate::diagnostics::{self, record, TimeSeries, VerificationEvent};
use crate::error::{Error, Result};
use crate::flow::{step, FlowKind, FlowState, StepReport};
use crate::grid_curve::{make_curve_seeded, reference_length_ratio, GridCurve};

/// Largest `|L − 1|` accepted for a normalized-flow initial datum.
pub const UNIT_LENGTH_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum Termination {
    EndTime,
    Extinction(String),
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub curve: GridCurve,
}

/// Whether the oscillation bounds applied to a normalized run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillationStatus {
    pub epsilon: f64,
    pub threshold: f64,
    pub applicable: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub series: TimeSeries,
    pub events: Vec<VerificationEvent>,
    pub initial_state: FlowState,
    pub final_state: FlowState,
    pub termination: Termination,
    pub steps: usize,
    pub halvings: u32,
    pub dt_final: f64,
    pub snapshots: Vec<Snapshot>,
    pub oscillation: Option<OscillationStatus>,
}

/// The initial state described by `cfg`, with the datum checks of its flow.
pub fn initial_state(cfg: &RunConfig) -> Result<FlowState> {
    let desc = cfg.descriptor()?;
    let curve = make_curve_seeded(&desc, cfg.n, cfg.dim, cfg.seed)?;
    match cfg.flow {
        FlowName::Normalized => {
            // lengths in circumference units, as in the catalog
            let l = curve.length() / reference_length_ratio(cfg.n);
            if (l - 1.0).abs() > UNIT_LENGTH_TOL {
                return Err(Error::InvalidConfig(format!(
                    "the normalized flow needs a unit-length datum, '{}' has length {l:.6} (append @1)",
                    cfg.init
                )));
            }
        }
        FlowName::Regularized => {
            let n = cfg.n as f64;
            let max_speed = curve.edge_lengths().iter().fold(0.0_f64, |m, e| m.max(e * n));
            if max_speed > 1.0 + 1e-10 {
                return Err(Error::InvalidConfig(format!(
                    "the regularized flow needs |∂_sξ| <= 1, '{}' has max speed {max_speed:.6}",
                    cfg.init
                )));
            }
        }
        _ => {}
    }
    Ok(FlowState::new(curve, cfg.flow_kind()))
}

/// Run the experiment described by `cfg` from its initial datum to `t_end`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let state = initial_state(cfg)?;
    run_from(state, cfg, cfg.t_end)
}

/// Run from `state` until the absolute time `t_stop`.
pub fn run_from(state: FlowState, cfg: &RunConfig, t_stop: f64) -> Result<RunOutcome> {
    if state.kind.name() != cfg.flow.as_str() {
        return Err(Error::InvalidConfig(format!("state of kind {} for a {} run", state.kind, cfg.flow)));
    }
    let initial_state = state.clone();
    let mut series = TimeSeries::new(state.kind, cfg.hash());
    let mut snapshots = Vec::new();
    let mut state = state;
    let mut dt = cfg.dt;
    let mut halvings = 0u32;
    let mut steps = 0usize;
    let mut final_recorded = false;
    let mut streamed = Vec::new();
    let time_eps = 1e-12 * t_stop.abs().max(1.0);
    let termination = loop {
        let remaining = t_stop - state.time;
        if remaining <= time_eps {
            break Termination::EndTime;
        }
        // avoid leaving a sliver shorter than roundoff
        let dt_try = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
        match step(&state, dt_try, &cfg.step_options(steps)) {
            Ok((next, report)) => {
                if steps.is_multiple_of(cfg.record_every) {
                    record(steps, &state, &report, &mut series)?;
                    if let (Some(tol), Some(x)) = (cfg.converge_tol, series.last().and_then(|r| r.xi_tilde_l2)) {
                        if x < tol {
                            final_recorded = true;
                            break Termination::Converged;
                        }
                    }
                } else {
                    streamed.extend(diagnostics::step_events(steps, &state, &report, cfg.drift_ceiling));
                }
                if cfg.snapshot_every > 0 && steps.is_multiple_of(cfg.snapshot_every) {
                    snapshots.push(Snapshot { step: steps, time: state.time, curve: state.curve.clone() });
                }
                state = next;
                steps += 1;
            }
            Err(Error::Extinction(msg)) => break Termination::Extinction(msg),
            Err(e) if e.is_retryable() => {
                if halvings >= MAX_HALVINGS {
                    return Err(Error::HalvingExhausted { halvings, dt: dt_try, reason: e.to_string() });
                }
                halvings += 1;
                dt = 0.5 * dt_try;
            }
            Err(e) => return Err(e),
        }
    };
    if !final_recorded {
        let report = step(&state, 0.0, &cfg.step_options(steps)).map(|(_, r)| r).unwrap_or_else(|_| StepReport {
            pre_reparam_drift: state.drift,
            ..Default::default()
        });
        record(steps, &state, &report, &mut series)?;
    }
    if cfg.snapshot_every > 0 {
        snapshots.push(Snapshot { step: steps, time: state.time, curve: state.curve.clone() });
    }
    let (mut events, oscillation) = standard_events(&series, cfg);
    if !streamed.is_empty() {
        events.extend(streamed);
        events.sort_by_key(|e| e.step);
    }
    Ok(RunOutcome {
        config: cfg.clone(),
        series,
        events,
        initial_state,
        final_state: state,
        termination,
        steps,
        halvings,
        dt_final: dt,
        snapshots,
        oscillation,
    })
}

/// Checks that every run of a flow kind is held to.
pub fn standard_events(series: &TimeSeries, cfg: &RunConfig) -> (Vec<VerificationEvent>, Option<OscillationStatus>) {
    let mut events = diagnostics::positivity_events(series);
    let mut oscillation = None;
    match series.flow_kind {
        FlowKind::Original => {
            events.extend(diagnostics::verify_monotone(series));
            events.extend(diagnostics::extinction_bounds_check(series));
            events.extend(diagnostics::drift_events(series, cfg.drift_ceiling));
        }
        FlowKind::Normalized => {
            events.extend(diagnostics::verify_monotone(series));
            events.extend(diagnostics::drift_events(series, cfg.drift_ceiling));
            if let Some(first) = series.rows.first() {
                let epsilon = diagnostics::oscillation_epsilon(first);
                let threshold = diagnostics::oscillation_threshold();
                let osc = diagnostics::oscillation_events(series);
                oscillation = Some(OscillationStatus { epsilon, threshold, applicable: osc.is_some() });
                events.extend(osc.unwrap_or_default());
            }
        }
        FlowKind::Regularized { .. } => events.extend(diagnostics::dissipation_events(series)),
        FlowKind::Classical => {}
    }
    events.sort_by_key(|e| e.step);
    (events, oscillation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn shrinking_circle_mass_is_affine() {
        let mut cfg = RunConfig::new(FlowName::Original, "circle:1", 0.05);
        cfg.n = 64;
        cfg.dt = 1e-3;
        let out = run(&cfg).unwrap();
        assert_eq!(out.termination, Termination::EndTime);
        assert!(out.events.is_empty(), "{:?}", &out.events[..out.events.len().min(5)]);
        let last = out.series.last().unwrap();
        assert!((last.time - 0.05).abs() < 1e-12);
        let l0 = out.series.rows[0].l;
        assert!((last.l / l0 - (1.0 - 0.1f64).sqrt()).abs() < 1e-6);
        for w in out.series.rows.windows(2) {
            assert!(w[1].time > w[0].time);
        }
        let lam = last.lambda.unwrap();
        assert!((lam - 4.0 * PI * PI).abs() < 1e-2 * 4.0 * PI * PI);
    }

    #[test]
    fn huge_dt_engages_halvings() {
        let mut cfg = RunConfig::new(FlowName::Classical, "circle:1", 0.05);
        cfg.n = 32;
        cfg.dt = 1.0;
        let out = run(&cfg).unwrap();
        assert!(out.halvings > 0 && out.halvings <= MAX_HALVINGS);
        assert!(out.dt_final <= crate::flow::classical_stability_bound(&out.initial_state.curve));
        // clipped to the end time, so only a few halvings are needed
        cfg.dt = 1e10;
        assert!(run(&cfg).unwrap().halvings > 0);
        let mut cfg = RunConfig::new(FlowName::Regularized, "circle", 1.0);
        cfg.epsilon = Some(1e-3);
        cfg.dt = 1e10;
        assert!(matches!(run(&cfg), Err(Error::HalvingExhausted { halvings: MAX_HALVINGS, .. })));
    }

    #[test]
    fn original_run_stops_at_extinction() {
        let mut cfg = RunConfig::new(FlowName::Original, "circle", 1.0);
        cfg.n = 32;
        cfg.dt = 1e-4;
        let out = run(&cfg).unwrap();
        assert!(matches!(out.termination, Termination::Extinction(_)));
        assert!(out.final_state.time < out.series.rows[0].m);
    }

    #[test]
    fn normalized_requires_unit_length() {
        let cfg = RunConfig::new(FlowName::Normalized, "ellipse:2,1", 1.0);
        assert!(matches!(run(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn convergence_stop_and_snapshots() {
        let mut cfg = RunConfig::new(FlowName::Normalized, "perturbed:0.05,2", 20.0);
        cfg.n = 64;
        cfg.dt = 1e-2;
        cfg.converge_tol = Some(1e-8);
        cfg.snapshot_every = 50;
        let out = run(&cfg).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.final_state.time < 20.0);
        assert!(out.series.last().unwrap().xi_tilde_l2.unwrap() < 1e-8);
        assert_eq!(out.snapshots.first().unwrap().step, 0);
        assert!(out.events.is_empty(), "{:?}", out.events);
    }
}
