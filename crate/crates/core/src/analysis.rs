//! Delay prediction and measurement, sweeps, monotonicity verdicts and the
//! metastability-time-constant fit.
//!
//! The delay model for a step to `V_H + ε`: the transit through the linear
//! region takes `D₂ = τ₂·ln(2M/(A·ε))` (zero once the step lands directly in
//! the far saturation region, ε ≥ 2M/A), and the saturation decay needs
//! `D₃ = τ₃·ln(1/σ)` to reach a downstream threshold placed at the fraction
//! σ of the full swing. The measured delay on simulated trajectories follows
//! `D₂ + D₃` up to the small error from D₃ being a full-swing expression.

use crate::error::{Error, Result};
use crate::integrator::{integrate_with, EventKind, IntegrateOptions, Trajectory};
use crate::model::Region;
use crate::model::StModel;
use crate::numeric::ols_fit;
use crate::waveform::Waveform;
use rayon::prelude::*;
use serde::Serialize;

/// Downstream threshold specification: `v_th = γ₃ + σ·(γ₁ − γ₃)` with
/// σ ∈ (0, 1) the proportion of the swing that `v_th` sits away from the
/// final value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelaySpec {
    pub sigma: f64,
    pub v_th: f64,
}

impl DelaySpec {
    pub fn new(model: &StModel, sigma: f64) -> Result<DelaySpec> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::InvalidInput(format!("sigma {sigma} outside (0, 1)")));
        }
        let g = model.derive_geometry()?;
        Ok(DelaySpec {
            sigma,
            v_th: g.gamma3 + sigma * (g.gamma1 - g.gamma3),
        })
    }
}

/// Predicted step-response delay split into its regional parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayPrediction {
    pub d2: f64,
    pub d3: f64,
    pub total: f64,
}

/// Predict the output delay of a step to `V_H + epsilon`.
pub fn predict_delay(model: &StModel, spec: &DelaySpec, epsilon: f64) -> Result<DelayPrediction> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} must be positive")));
    }
    let g = model.derive_geometry()?;
    let band = 2.0 * model.saturation_m / model.gain_a;
    let d2 = if epsilon >= band {
        0.0
    } else {
        g.tau2 * (band / epsilon).ln()
    };
    let d3 = g.tau3 * (1.0 / spec.sigma).ln();
    Ok(DelayPrediction {
        d2,
        d3,
        total: d2 + d3,
    })
}

/// Measure the delay from `t_stimulus` to the first crossing of the
/// threshold, linearly interpolating between samples.
pub fn measure_delay(traj: &Trajectory, spec: &DelaySpec, t_stimulus: f64) -> Result<f64> {
    match traj.first_crossing(spec.v_th, t_stimulus) {
        Some(t) => Ok(t - t_stimulus),
        None => Err(Error::NoCrossing(format!(
            "v_th = {} not crossed after t = {t_stimulus}",
            spec.v_th
        ))),
    }
}

/// One row of a delay sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub d2_pred: f64,
    pub d3_pred: f64,
    pub total_pred: f64,
    pub measured: f64,
}

/// Result of sweeping the overdrive ε of a step stimulus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// OLS fit of measured delay against ln(1/ε): `(slope, intercept, r2)`.
    /// The slope recovers τ₂ on the logarithmic part of the curve.
    pub fn fit_log_law(&self) -> Result<(f64, f64, f64)> {
        let xs: Vec<f64> = self.rows.iter().map(|r| (1.0 / r.epsilon).ln()).collect();
        let ys: Vec<f64> = self.rows.iter().map(|r| r.measured).collect();
        let (intercept, slope, r2) =
            ols_fit(&xs, &ys).ok_or_else(|| Error::Numeric("degenerate delay fit".into()))?;
        Ok((slope, intercept, r2))
    }
}

/// Simulate and measure the step-response delay for each overdrive value.
///
/// Stimulus: the output rests on γ₁ with the input just below threshold,
/// then steps to `V_H + ε` at t = 0. Sweep points run in parallel with an
/// ordered reduction, so the result is deterministic.
pub fn delay_sweep(model: &StModel, spec: &DelaySpec, epsilons: &[f64]) -> Result<SweepResult> {
    if epsilons.is_empty() {
        return Err(Error::InvalidInput("empty epsilon list".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput("epsilons must be positive".into()));
    }
    if epsilons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("epsilons must be sorted ascending".into()));
    }
    let rows: Vec<Result<SweepRow>> = epsilons
        .par_iter()
        .map(|&eps| -> Result<SweepRow> {
            let pred = predict_delay(model, spec, eps)?;
            let (traj, t_step) = step_response(model, spec, eps, &pred)?;
            let measured = measure_delay(&traj, spec, t_step)?;
            Ok(SweepRow {
                epsilon: eps,
                d2_pred: pred.d2,
                d3_pred: pred.d3,
                total_pred: pred.total,
                measured,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

/// Simulate the canonical step stimulus for one overdrive value. Returns the
/// trajectory and the stimulus time.
pub fn step_response(
    model: &StModel,
    spec: &DelaySpec,
    epsilon: f64,
    pred: &DelayPrediction,
) -> Result<(Trajectory, f64)> {
    let g = model.derive_geometry()?;
    let t_step = 0.0;
    let input = Waveform::step_to(g.v_l, g.v_h + epsilon, t_step);
    let t_end = 1.5 * pred.d2 + 5.0 * model.tau0 + 20.0 * g.tau2;
    let opts = IntegrateOptions {
        tol: 1e-9,
        cadence: 1000,
        watch_levels: vec![spec.v_th],
        high_precision: true,
        force_numeric: false,
    };
    let traj = integrate_with(model, &input, g.gamma1, (t_step - model.tau0, t_end), &opts)?;
    Ok((traj, t_step))
}

/// Monotonicity classification of a trajectory's output samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MonotonicityVerdict {
    StrictlyMonotone,
    MonotoneWithPlateaus,
    NonMonotone { t_witness: f64 },
}

/// Classify sample-to-sample differences with a tolerance of `10⁻¹²·M`.
/// Differences within the tolerance count as plateaus; a difference opposing
/// the established direction is a violation and reports the witness time.
pub fn monotonicity_verdict(traj: &Trajectory, saturation_m: f64) -> MonotonicityVerdict {
    let tol = 1e-12 * saturation_m;
    let mut dir = 0i8;
    let mut plateau = false;
    for pair in traj.samples.windows(2) {
        let d = pair[1].v_out - pair[0].v_out;
        if d.abs() <= tol {
            plateau = true;
            continue;
        }
        let s = if d > 0.0 { 1 } else { -1 };
        if dir == 0 {
            dir = s;
        } else if s != dir {
            return MonotonicityVerdict::NonMonotone {
                t_witness: pair[1].t,
            };
        }
    }
    if plateau || dir == 0 {
        MonotonicityVerdict::MonotoneWithPlateaus
    } else {
        MonotonicityVerdict::StrictlyMonotone
    }
}

/// Result of the resolution-constant fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionFit {
    pub tau_fit: f64,
    pub r_squared: f64,
    /// (delta, measured exit time) pairs underlying the fit.
    pub points: Vec<(f64, f64)>,
}

/// Recover the metastability time constant from pinned-release experiments.
///
/// For each offset δ the input is held at `γ₂⁻¹(0) + δ` with the output
/// starting at the metastable level 0; the time until the trajectory leaves
/// the linear region grows as `τ₂·ln(1/δ)`, so an OLS fit of exit time
/// against ln(1/δ) recovers τ₂ as its slope.
pub fn fit_resolution_constant(model: &StModel, deltas: &[f64]) -> Result<ResolutionFit> {
    if deltas.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 deltas".into()));
    }
    if deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidInput("deltas must be positive".into()));
    }
    let lo = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().cloned().fold(0.0f64, f64::max);
    if hi / lo < 1e3 {
        return Err(Error::InvalidInput(format!(
            "deltas must span at least 3 decades (got {:.2})",
            (hi / lo).log10()
        )));
    }
    let g = model.derive_geometry()?;
    let level = 0.0;
    let pin = model.gamma2_inverse(level);
    let points: Vec<Result<(f64, f64)>> = deltas
        .par_iter()
        .map(|&delta| -> Result<(f64, f64)> {
            let v_in = pin + delta;
            if model.classify_region(v_in, level) != Region::Linear {
                // offset larger than the band: immediate exit
                return Ok((delta, 0.0));
            }
            let span_hint = g.tau2
                * ((4.0 * model.saturation_m * model.gain_a / delta).ln() + 10.0).max(10.0);
            let opts = IntegrateOptions {
                tol: 1e-9,
                cadence: 200,
                watch_levels: vec![],
                high_precision: true,
                force_numeric: false,
            };
            let traj = integrate_with(
                model,
                &Waveform::constant(v_in),
                level,
                (0.0, span_hint),
                &opts,
            )?;
            let cross = traj
                .events
                .iter()
                .find(|e| matches!(e.kind, EventKind::RegionCross { .. }))
                .ok_or_else(|| {
                    Error::Numeric(format!("no region exit within {span_hint} s for delta {delta}"))
                })?;
            Ok((delta, cross.t))
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|(d, _)| (1.0 / d).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, t)| *t).collect();
    let (_, slope, r2) =
        ols_fit(&xs, &ys).ok_or_else(|| Error::Numeric("degenerate resolution fit".into()))?;
    Ok(ResolutionFit {
        tau_fit: slope,
        r_squared: r2,
        points,
    })
}
