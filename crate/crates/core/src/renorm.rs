//! Change of variables `ξ = η/L`, `τ = −ln L` between the original and normalized flows.

use serde::Serialize;

use crate::config::{FlowName, RunConfig};
use crate::diagnostics::TimeSeries;
use crate::error::{Error, Result};
use crate::flow::{FlowKind, FlowState};
use crate::par::{self, Execution};
use crate::runner::{initial_state, run_from, Snapshot};

/// Lengths at or below this cannot be normalized.
pub const NORMALIZE_FLOOR: f64 = 1e-12;

/// Sample table of `τ(t) = −ln L(t)` from an original-flow series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormMap {
    pub t: Vec<f64>,
    pub tau: Vec<f64>,
}

impl RenormMap {
    /// Errors unless `τ` is strictly increasing in `t`.
    pub fn from_series(series: &TimeSeries) -> Result<Self> {
        if series.flow_kind != FlowKind::Original {
            return Err(Error::InvalidConfig("renormalization map needs an original-flow series".into()));
        }
        let t: Vec<f64> = series.rows.iter().map(|r| r.time).collect();
        let tau: Vec<f64> = series.rows.iter().map(|r| -r.l.ln()).collect();
        if let Some(k) = (1..tau.len()).find(|&k| !(tau[k] > tau[k - 1])) {
            return Err(Error::InvalidConfig(format!("τ is not increasing at row {k}")));
        }
        Ok(RenormMap { t, tau })
    }

    pub fn tau_of_t(&self, t: f64) -> f64 {
        interpolate(&self.t, &self.tau, t)
    }

    pub fn t_of_tau(&self, tau: f64) -> f64 {
        interpolate(&self.tau, &self.t, tau)
    }

    pub fn l_of_tau(&self, tau: f64) -> f64 {
        (-tau).exp()
    }
}

/// Piecewise-linear interpolation on an increasing table, clamped at the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.partition_point(|&v| v <= x) {
        0 => ys[0],
        k if k == xs.len() => ys[k - 1],
        k => {
            let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
            ys[k - 1] + w * (ys[k] - ys[k - 1])
        }
    }
}

/// `ξ = η/L` at `τ = −ln L`.
pub fn normalize_state(original: &FlowState) -> Result<FlowState> {
    if original.kind != FlowKind::Original {
        return Err(Error::InvalidConfig(format!("normalize_state called on a {} state", original.kind)));
    }
    let l = original.curve.length();
    if !(l > NORMALIZE_FLOOR) || !l.is_finite() {
        return Err(Error::Extinction(format!("cannot normalize a curve of length {l:e}")));
    }
    Ok(FlowState {
        curve: original.curve.scaled(1.0 / l),
        time: -l.ln(),
        kind: FlowKind::Normalized,
        drift: original.drift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub tau: Vec<f64>,
    pub distances: Vec<f64>,
    pub max: f64,
    pub original_steps: usize,
    pub normalized_steps: usize,
}

/// Run the original flow described by `cfg` and the normalized flow from the normalized
/// initial datum, and compare the normalized original snapshots with the normalized run
/// interpolated linearly in `τ`. Returns the L² distances at every original step.
pub fn roundtrip_compare(cfg: &RunConfig, exec: Execution) -> Result<RoundtripReport> {
    if cfg.flow != FlowName::Original {
        return Err(Error::InvalidConfig("roundtrip starts from an original-flow config".into()));
    }
    cfg.validate_with(true)?;
    let init = initial_state(cfg)?;
    let norm_init = normalize_state(&init)?;
    let tau0 = norm_init.time;
    // Upper bound on τ(t_end) from the lower extinction bracket L ≥ 2√2π√(t* − t).
    let tau_stop = if cfg.t_end == 0.0 {
        tau0
    } else {
        let t_star = init.curve.l2_mass();
        if cfg.t_end >= t_star {
            return Err(Error::InvalidConfig(format!("t_end {} is not below t* = {t_star}", cfg.t_end)));
        }
        let l_low = 2.0 * 2f64.sqrt() * std::f64::consts::PI * (t_star - cfg.t_end).sqrt();
        -(l_low * (1.0 - 1e-2)).ln()
    };
    let mut ocfg = cfg.clone();
    ocfg.snapshot_every = 1;
    let mut ncfg = ocfg.clone();
    ncfg.flow = FlowName::Normalized;
    let (orig, norm) = par::join(
        exec,
        || run_from(init, &ocfg, cfg.t_end),
        || run_from(norm_init, &ncfg, tau_stop),
    );
    let (orig, norm) = (orig?, norm?);
    let mut tau = Vec::with_capacity(orig.snapshots.len());
    let mut distances = Vec::with_capacity(orig.snapshots.len());
    for snap in &orig.snapshots {
        let state = FlowState { curve: snap.curve.clone(), time: snap.time, kind: FlowKind::Original, drift: 0.0 };
        let xi = normalize_state(&state)?;
        let d = distance_to_interpolated(&norm.snapshots, &xi)?;
        tau.push(xi.time);
        distances.push(d);
    }
    let max = distances.iter().copied().fold(0.0, f64::max);
    Ok(RoundtripReport { tau, distances, max, original_steps: orig.steps, normalized_steps: norm.steps })
}

fn distance_to_interpolated(snaps: &[Snapshot], xi: &FlowState) -> Result<f64> {
    let tau = xi.time;
    let first = snaps.first().ok_or_else(|| Error::InvalidConfig("normalized run has no snapshots".into()))?;
    let last = snaps.last().expect("non-empty");
    let slack = 1e-12 * tau.abs().max(1.0);
    if tau < first.time - slack || tau > last.time + slack {
        return Err(Error::InvalidConfig(format!(
            "τ = {tau} outside the normalized run [{}, {}]",
            first.time, last.time
        )));
    }
    let k = snaps.partition_point(|s| s.time <= tau);
    let target = xi.curve.points();
    let h = 1.0 / target.nrows() as f64;
    let interp = if k == 0 || k == snaps.len() {
        let s = if k == 0 { first } else { last };
        s.curve.points().clone()
    } else {
        let (a, b) = (&snaps[k - 1], &snaps[k]);
        let w = (tau - a.time) / (b.time - a.time);
        a.curve.points() * (1.0 - w) + b.curve.points() * w
    };
    let sq: f64 = (&interp - target).iter().map(|v| v * v).sum();
    Ok((h * sq).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_curve::{make_curve, InitDescriptor};
    use std::f64::consts::PI;

    #[test]
    fn normalize_arithmetic() {
        let c = make_curve(&"circle:1".parse::<InitDescriptor>().unwrap(), 256, 2).unwrap();
        let l = c.length();
        let s = normalize_state(&FlowState::new(c.clone(), FlowKind::Original)).unwrap();
        assert!((s.time + l.ln()).abs() < 1e-15);
        assert!((s.time + (2.0 * PI).ln()).abs() < 1e-4);
        assert!((s.curve.length() - 1.0).abs() < 1e-14);
        assert!((s.curve.edge_cv() - c.edge_cv()).abs() < 1e-12);
        let tiny = FlowState::new(c.scaled(1e-3 / l), FlowKind::Original);
        let s = normalize_state(&tiny).unwrap();
        assert!((s.time - 1e3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn zero_duration_roundtrip() {
        let mut cfg = RunConfig::new(FlowName::Original, "ellipse:2,1", 0.0);
        cfg.n = 64;
        let r = roundtrip_compare(&cfg, Execution::Sequential).unwrap();
        assert_eq!(r.max, 0.0);
    }

    #[test]
    fn circle_roundtrip() {
        let mut cfg = RunConfig::new(FlowName::Original, "circle:1", 0.1);
        cfg.n = 64;
        cfg.dt = 1e-3;
        let r = roundtrip_compare(&cfg, Execution::available()).unwrap();
        assert!(r.max < 1e-6, "{}", r.max);
    }
}
