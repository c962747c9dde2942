//! Named experiments, each with the manifest of checks that must produce no events.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{FlowName, RunConfig};
use crate::diagnostics::{self as diag, VerificationEvent};
use crate::error::{Error, Result};
use crate::flow::regularized::{f_eps, g_eps, stability_bound};
use crate::grid_curve::{circle_points, w0, GridCurve};
use crate::par::{self, Execution};
use crate::renorm::roundtrip_compare;
use crate::runner::{initial_state, run, RunOutcome};
use crate::stationary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    /// Checks run by the preset; a successful preset produces no event for any of them.
    pub checks: &'static [&'static str],
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "shrinking-circle",
        summary: "original flow from the unit circle: M decreases at rate 1, L = 2π√(1−2t), λ = 4π²",
        checks: &[
            "mass_slope",
            "length_law",
            "lambda_circle",
            "extinction_bounds",
            "lambda_lower_bound",
            "lambda_nonincreasing",
            "drift_ceiling",
            "tension_positive",
        ],
    },
    Preset {
        name: "ellipse-extinction",
        summary: "original flow from ellipse(2,1) to 0.8 t*: extinction brackets and monotone λ",
        checks: &[
            "extinction_bounds",
            "lambda_lower_bound",
            "lambda_nonincreasing",
            "mass_slope",
            "drift_ceiling",
            "tension_positive",
        ],
    },
    Preset {
        name: "circle-stability",
        summary: "normalized flow from a mode-3 perturbed circle: monotone quantities, decay rates, oscillation, convergence",
        checks: &[
            "mass_nondecreasing",
            "sigma_bar_nondecreasing",
            "sigma_bar_below_mass",
            "xi_tilde_nonincreasing",
            "dxi_tilde_nonincreasing",
            "drift_ceiling",
            "tension_positive",
            "oscillation",
            "decay_xi_tilde",
            "decay_c_defect",
            "theta_variation",
            "circle_convergence",
        ],
    },
    Preset {
        name: "stationary-rigidity",
        summary: "w₀ as a fixed point, stationary identities on circles, rigidity and λ bracket on a relaxed state",
        checks: &[
            "fixed_point",
            "tension_constant",
            "sigma_sq_curvature",
            "first_integral_closed_form",
            "planarity",
            "positive_curvature",
            "first_integral",
            "rigidity",
            "tension_positive",
        ],
    },
    Preset {
        name: "eps-limit",
        summary: "regularized flow on a square: F∘G identity, dissipation inequality, speed bound, ε self-convergence",
        checks: &["fg_identity", "dissipation_inequality", "speed_bound", "eps_self_convergence"],
    },
    Preset {
        name: "roundtrip",
        summary: "original vs normalized flow through τ = −ln L on ellipse(2,1), at dt and dt/2",
        checks: &["roundtrip_discrepancy", "roundtrip_halving"],
    },
    Preset {
        name: "density-contrast",
        summary: "uniform grid density of the original flow vs the classical flow on ellipse(2,1)",
        checks: &["drift_ceiling", "uniform_speed", "density_contrast", "classical_cv_monotone"],
    },
];

/// Comma-separated preset names.
pub fn available() -> String {
    PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
}

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset { name: name.to_string(), available: available() })
}

/// Every manifest names only known checks.
pub fn validate_manifests() -> Result<()> {
    for p in PRESETS {
        if let Some(c) = p.checks.iter().find(|c| !diag::is_known_check(c)) {
            return Err(Error::InvalidConfig(format!("preset '{}' names unknown check '{c}'", p.name)));
        }
    }
    Ok(())
}

/// One labelled run inside a preset.
#[derive(Debug, Clone)]
pub struct LabelledRun {
    pub label: String,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct PresetOutcome {
    pub name: String,
    pub checks: Vec<String>,
    pub events: Vec<VerificationEvent>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip)]
    pub runs: Vec<LabelledRun>,
}

impl PresetOutcome {
    fn new(p: &Preset) -> Self {
        PresetOutcome {
            name: p.name.to_string(),
            checks: p.checks.iter().map(|c| c.to_string()).collect(),
            events: Vec::new(),
            metrics: BTreeMap::new(),
            runs: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_string(), v);
    }

    fn add_run(&mut self, label: &str, outcome: RunOutcome) {
        self.events.extend(outcome.events.iter().cloned());
        self.metric(&format!("{label}.steps"), outcome.steps as f64);
        self.runs.push(LabelledRun { label: label.to_string(), outcome });
    }

    /// Events grouped by check name.
    pub fn event_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.events {
            *m.entry(e.check.to_string()).or_insert(0) += 1;
        }
        m
    }

    pub fn passed(&self) -> bool {
        self.events.is_empty()
    }
}

impl Preset {
    /// The configuration of the preset's main run.
    pub fn config(&self) -> Result<RunConfig> {
        let cfg = match self.name {
            "shrinking-circle" => original("circle:1", 0.4),
            "ellipse-extinction" => {
                let mut c = original("ellipse:2,1", 1.0);
                c.t_end = 0.8 * initial_state(&c)?.curve.l2_mass();
                c
            }
            "circle-stability" => {
                let mut c = RunConfig::new(FlowName::Normalized, "perturbed:0.01,3", 10.0);
                c.record_every = 1;
                c
            }
            "stationary-rigidity" => RunConfig::new(FlowName::Normalized, "circle@1", 1.0),
            "eps-limit" => regularized(1e-3),
            "roundtrip" => {
                let mut c = original("ellipse:2,1", 1.0);
                c.t_end = 0.3 * initial_state(&c)?.curve.l2_mass();
                c
            }
            "density-contrast" => original("ellipse:2,1", 0.05),
            other => return Err(find(other).err().unwrap_or(Error::InvalidConfig(other.into()))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn run(&self, exec: Execution) -> Result<PresetOutcome> {
        let mut out = PresetOutcome::new(self);
        let cfg = self.config()?;
        match self.name {
            "shrinking-circle" => shrinking_circle(&cfg, &mut out)?,
            "ellipse-extinction" => {
                let r = run(&cfg)?;
                out.metric("max_mass_slope_error", diag::max_mass_slope_error(&r.series));
                out.metric("t_star", r.series.rows[0].m);
                out.add_run("original", r);
            }
            "circle-stability" => circle_stability(&cfg, &mut out)?,
            "stationary-rigidity" => stationary_rigidity(&cfg, exec, &mut out)?,
            "eps-limit" => eps_limit(exec, &mut out)?,
            "roundtrip" => roundtrip(&cfg, exec, &mut out)?,
            "density-contrast" => density_contrast(&cfg, exec, &mut out)?,
            _ => unreachable!("config() rejects unknown names"),
        }
        debug_assert!(out.events.iter().all(|e| diag::is_known_check(&e.check)));
        out.events.sort_by_key(|e| e.step);
        Ok(out)
    }
}

fn original(init: &str, t_end: f64) -> RunConfig {
    let mut c = RunConfig::new(FlowName::Original, init, t_end);
    c.dt = 1e-4;
    c
}

/// Regularized run on the unit square at the explicit stability bound.
fn regularized(eps: f64) -> RunConfig {
    let mut c = RunConfig::new(FlowName::Regularized, EPS_DATUM, EPS_T);
    c.n = EPS_N;
    c.epsilon = Some(eps);
    c.dt = stability_bound(EPS_N, eps);
    c.record_every = 1000;
    c
}

/// Initial data relaxed by the normalized flow before the stationary checks.
const RELAXED_DATA: [&str; 2] = ["perturbed:0.05,2", "perturbed:0.1,3"];

const EPS_DATUM: &str = "square@1";
const EPS_N: usize = 32;
const EPS_T: f64 = 0.5;
const EPS_VALUES: [f64; 3] = [1e-2, 3e-3, 1e-3];
const FG_EPS_VALUES: [f64; 3] = [1e-1, 1e-2, 1e-3];

fn shrinking_circle(cfg: &RunConfig, out: &mut PresetOutcome) -> Result<()> {
    let r = run(cfg)?;
    let (len_err, lam_err) = diag::circle_law_errors(&r.series, 1.0);
    out.metric("max_length_rel_error", len_err);
    out.metric("max_lambda_error", lam_err);
    out.metric("max_mass_slope_error", diag::max_mass_slope_error(&r.series));
    out.events.extend(diag::circle_law_events(&r.series, 1.0));
    out.add_run("original", r);
    Ok(())
}

/// `‖ξ − w₀(·+θ)‖_∞` with `θ` from the circle projection.
pub fn distance_to_reference_circle(curve: &GridCurve) -> f64 {
    let fit = curve.project_to_circle_manifold();
    let w = circle_points(curve.n(), curve.dim(), 1.0, fit.theta);
    curve.points().iter().zip(w.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn circle_stability(cfg: &RunConfig, out: &mut PresetOutcome) -> Result<()> {
    let r = run(cfg)?;
    let series = &r.series;
    let last_step = series.last().map(|row| row.step).unwrap_or(0);
    // The bounds are asserted with ε from the initial data whether or not it is below the
    // smallness threshold.
    let eps = diag::oscillation_epsilon(&series.rows[0]);
    out.metric("oscillation_epsilon", eps);
    out.metric("oscillation_threshold", diag::oscillation_threshold());
    let worst_osc = series.rows.iter().filter_map(|row| row.sigma_osc).fold(0.0, f64::max);
    out.metric("max_sigma_oscillation", worst_osc);
    out.metric("oscillation_bound", 3.0 * eps.sqrt() + 1e-6);
    if r.oscillation.is_some_and(|o| !o.applicable) {
        out.events.extend(diag::oscillation_events_ungated(series, eps));
    }
    let window = (1.0, 8.0);
    let xi = diag::fit_decay(series, "xi_tilde_l2", window)?;
    let cd = diag::fit_decay(series, "c_defect", window)?;
    out.metric("xi_tilde_rate", xi.rate);
    out.metric("c_defect_rate", cd.rate);
    out.events.extend(diag::decay_rate_event(&xi, 1.0 / 3.0, "decay_xi_tilde"));
    out.events.extend(diag::decay_rate_event(&cd, 1.0 / 8.0, "decay_c_defect"));
    let tv = diag::theta_total_variation(series, (5.0, cfg.t_end));
    out.metric("theta_variation", tv);
    out.events.extend(diag::theta_variation_event(series, (5.0, cfg.t_end), 1e-3));
    let dist = distance_to_reference_circle(&r.final_state.curve);
    out.metric("final_circle_distance", dist);
    out.events.extend(diag::limit_event(last_step, "circle_convergence", dist, 1e-3));
    out.add_run("normalized", r);
    Ok(())
}

fn stationary_rigidity(cfg: &RunConfig, exec: Execution, out: &mut PresetOutcome) -> Result<()> {
    let mut fixed = cfg.clone();
    fixed.snapshot_every = 1;
    let relaxed: Vec<RunConfig> = RELAXED_DATA
        .iter()
        .map(|init| {
            let mut c = RunConfig::new(FlowName::Normalized, init, 30.0);
            c.n = 128;
            c.dt = 1e-2;
            c.converge_tol = Some(1e-9);
            c
        })
        .collect();
    let (a, b) = par::join(exec, || run(&fixed), || par::map(exec, &relaxed, run));
    let fixed_run = a?;
    let relaxed_runs = b.into_iter().collect::<Result<Vec<_>>>()?;

    let reference = w0(cfg.n, cfg.dim);
    let mut worst = 0.0_f64;
    for s in &fixed_run.snapshots {
        let d = s.curve.sup_distance(&reference);
        worst = worst.max(d);
        out.events.extend(diag::limit_event(s.step, "fixed_point", d, 1e-6));
    }
    out.metric("fixed_point_max_distance", worst);
    let quarter = diag::inv_four_pi_sq();
    let dev = fixed_run
        .series
        .rows
        .iter()
        .filter_map(|r| Some((r.sigma_min? - quarter).abs().max((r.sigma_max? - quarter).abs())))
        .fold(0.0, f64::max);
    out.metric("fixed_point_max_tension_deviation", dev);
    out.events.extend(diag::tension_constant_events(&fixed_run.series, quarter, 1e-6));

    let rep = stationary::analyze(&reference, exec)?;
    out.metric("w0.residual", rep.residual);
    out.metric("w0.sigma_sq_curvature_cv", rep.sigma_sq_curvature_cv);
    out.events.extend(diag::limit_event(0, "sigma_sq_curvature", rep.sigma_sq_curvature_cv, 1e-6));
    out.events.extend(rep.events(0));

    for m in [1u32, 2] {
        let c = crate::grid_curve::make_curve(&format!("mcircle:{m}@1").parse()?, cfg.n, cfg.dim)?;
        let rep = stationary::analyze(&c, exec)?;
        out.events.extend(rep.events(0));
        let fi = rep.first_integral.ok_or_else(|| {
            Error::InvalidConfig(format!("mcircle:{m} has stationary residual {:.3e}", rep.residual))
        })?;
        let closed = -2.0 * fi.tau_bar.powi(3);
        let mismatch = (fi.lambda_estimate - closed).abs() / closed.abs();
        out.metric(&format!("mcircle{m}.first_integral_spread"), fi.lambda_spread);
        out.metric(&format!("mcircle{m}.lambda_relative_mismatch"), mismatch);
        out.events.extend(diag::limit_event(0, "first_integral_closed_form", fi.lambda_spread, 1e-8));
        out.events.extend(diag::limit_event(0, "first_integral_closed_form", mismatch, 1e-8));
    }

    out.add_run("fixed_point", fixed_run);
    for (init, r) in RELAXED_DATA.iter().zip(relaxed_runs) {
        let rep = stationary::analyze(&r.final_state.curve, exec)?;
        let step = r.steps;
        out.metric(&format!("{init}.residual"), rep.residual);
        if let Some(fi) = &rep.first_integral {
            out.metric(&format!("{init}.lambda_estimate"), fi.lambda_estimate);
            out.metric(&format!("{init}.lambda_lower"), -2.0 * fi.tau_bar.powi(3));
        } else {
            // the λ bracket cannot be evaluated on a state that did not relax
            out.events.push(VerificationEvent::new(step, "first_integral", rep.residual));
        }
        out.metric(&format!("{init}.rigidity_max_sigma_deviation"), rep.rigidity.max_sigma_deviation);
        out.events.extend(rep.events(step));
        out.add_run(&format!("relaxed-{init}"), r);
    }
    Ok(())
}

/// Largest `|F^ε(G^ε(τ)) − τ| / max(1, |τ|)` over `samples` seeded random `τ ∈ [−5, 5]^d`.
pub fn fg_identity_error(eps: f64, samples: usize, dim: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let tau: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let back = f_eps(&g_eps(&tau, eps), eps);
        let scale = tau.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let err = back.iter().zip(&tau).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    worst
}

fn eps_limit(exec: Execution, out: &mut PresetOutcome) -> Result<()> {
    for (k, eps) in FG_EPS_VALUES.iter().enumerate() {
        let err = fg_identity_error(*eps, 1000, 3, k as u64);
        out.metric(&format!("fg_identity_error.eps={eps:e}"), err);
        out.events.extend(diag::limit_event(0, "fg_identity", err, 1e-10));
    }
    let mut ncfg = RunConfig::new(FlowName::Normalized, EPS_DATUM, EPS_T);
    ncfg.n = EPS_N;
    ncfg.dt = 1e-4;
    let mut cfgs: Vec<RunConfig> = EPS_VALUES.iter().map(|e| regularized(*e)).collect();
    cfgs.push(ncfg);
    let mut runs = par::map(exec, &cfgs, run).into_iter().collect::<Result<Vec<_>>>()?;
    let normalized = runs.pop().expect("normalized run");
    let target = &normalized.final_state.curve;
    let mut prev = f64::INFINITY;
    for (eps, r) in EPS_VALUES.iter().zip(runs) {
        let d = r.final_state.curve.l2_distance(target);
        out.metric(&format!("distance.eps={eps:e}"), d);
        out.metric(&format!("length.eps={eps:e}"), r.final_state.curve.length());
        let gap = r.events.iter().filter(|e| e.check == "dissipation_inequality").map(|e| e.magnitude);
        out.metric(&format!("max_dissipation_gap.eps={eps:e}"), gap.fold(0.0, f64::max));
        out.events.extend(diag::limit_event(r.steps, "eps_self_convergence", d - prev, 0.0));
        prev = d;
        out.add_run(&format!("regularized-eps={eps:e}"), r);
    }
    out.add_run("normalized", normalized);
    Ok(())
}

fn roundtrip(cfg: &RunConfig, exec: Execution, out: &mut PresetOutcome) -> Result<()> {
    let mut half = cfg.clone();
    half.dt = 0.5 * cfg.dt;
    let (a, b) = par::join(exec, || roundtrip_compare(cfg, exec), || roundtrip_compare(&half, exec));
    let (a, b) = (a?, b?);
    let ratio = a.max / b.max;
    out.metric("max_discrepancy", a.max);
    out.metric("max_discrepancy_half_dt", b.max);
    out.metric("halving_ratio", ratio);
    out.metric("original_steps", a.original_steps as f64);
    out.metric("normalized_steps", a.normalized_steps as f64);
    out.events.extend(diag::limit_event(a.original_steps, "roundtrip_discrepancy", a.max, 5e-3));
    out.events.extend(diag::limit_event(b.original_steps, "roundtrip_halving", 1.8 - ratio, 0.0));
    Ok(())
}

fn density_contrast(cfg: &RunConfig, exec: Execution, out: &mut PresetOutcome) -> Result<()> {
    let mut classical = cfg.clone();
    classical.flow = FlowName::Classical;
    let (a, b) = par::join(exec, || run(cfg), || run(&classical));
    let (ucmcf, classical) = (a?, b?);
    let drift = ucmcf.series.rows.iter().filter_map(|r| r.drift).fold(0.0, f64::max);
    out.metric("ucmcf.max_drift", drift);
    out.metric("ucmcf.max_edge_cv", ucmcf.series.rows.iter().map(|r| r.edge_cv).fold(0.0, f64::max));
    out.events.extend(diag::uniform_speed_events(&ucmcf.series, 1e-6));
    let cv0 = classical.series.rows[0].edge_cv;
    let cv1 = classical.series.last().map(|r| r.edge_cv).unwrap_or(cv0);
    out.metric("classical.initial_cv", cv0);
    out.metric("classical.final_cv", cv1);
    let step = classical.steps;
    out.events.extend(diag::limit_event(step, "density_contrast", 10.0 * cv0 - cv1, 0.0));
    out.events.extend(diag::cv_growth_events(&classical.series));
    out.add_run("original", ucmcf);
    out.add_run("classical", classical);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifests_are_valid() {
        validate_manifests().unwrap();
        assert!(matches!(find("nope"), Err(Error::UnknownPreset { .. })));
        for p in PRESETS {
            assert!(p.config().is_ok(), "{}", p.name);
        }
    }

    #[test]
    fn fg_identity_holds() {
        for eps in FG_EPS_VALUES {
            assert!(fg_identity_error(eps, 200, 2, 7) < 1e-10);
        }
    }
}
