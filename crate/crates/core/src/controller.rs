//! Inverse input synthesis: pin the output at any metastable level, force
//! arbitrary feasible output waveforms, and check feasibility against the
//! amplifier range and the corridor bound.
//!
//! The inversion is pure feedforward. The model is known exactly inside the
//! simulator, so for a desired output `w(t)` the input
//!
//! ```text
//! v_in(t) = (1−k)·V_R + k·w − (w + τ₀·w')/A
//! ```
//!
//! makes `w` an exact solution of the output ODE, provided the amplifier
//! stays in its linear range: `|w + τ₀·w'| < M`. Each analytic segment kind
//! maps onto a synthesized segment of the same family, so the synthesized
//! input is again an exact analytic waveform.
//!
//! Numerical caveat, reflected in the tests: the tracked orbit is the
//! unstable Region 2 mode, so any state error grows as `e^(t/τ₂)`. Re-
//! integration reproduces the desired output only over spans that amount to
//! a modest number of e-folds of τ₂; precisely the input-precision
//! sensitivity the pinning experiments exhibit.

use crate::error::{Error, Result};
use crate::integrator::{integrate_with, IntegrateOptions, Trajectory};
use crate::model::StModel;
use crate::numeric::Dd;
use crate::waveform::{Segment, SegmentKind, Waveform};
use serde::Serialize;

/// Feedforward input for one desired output point: `w` and its slope.
///
/// Substituting the result into the derivative field yields exactly
/// `w_prime`. Errors when the amplifier would saturate.
pub fn inverse_input(model: &StModel, w: f64, w_prime: f64) -> Result<f64> {
    let amp = w + model.tau0 * w_prime;
    if amp.abs() >= model.saturation_m {
        return Err(Error::infeasible(format!(
            "amplifier saturates: |w + tau0*w'| = {} >= M = {}",
            amp.abs(),
            model.saturation_m
        )));
    }
    Ok(model.feedback_offset() + model.feedback_k * w - amp / model.gain_a)
}

/// Maximum allowed horizontal distance from γ₂ within which an input with
/// rate limit `vin_rate_cap` can still steer the trajectory: `τ₂·cap`.
pub fn corridor_halfwidth(model: &StModel, vin_rate_cap: f64) -> Result<f64> {
    if !(vin_rate_cap > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rate cap {vin_rate_cap} must be positive"
        )));
    }
    let g = model.derive_geometry()?;
    Ok(g.tau2 * vin_rate_cap)
}

/// Feasibility findings for one desired segment over its active interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentFeasibility {
    pub t_start: f64,
    pub t_end: f64,
    /// Smallest `M − |w + τ₀·w'|` over the interval; negative means the
    /// amplifier saturates somewhere.
    pub amp_margin: f64,
    /// Largest required input slope over the interval.
    pub required_rate: f64,
    pub ok: bool,
    pub issues: Vec<String>,
}

/// Closed-loop re-integration quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingReport {
    pub max_error: f64,
    pub rms_error: f64,
}

/// A synthesized feedforward plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPlan {
    pub desired: Waveform,
    pub synthesized: Waveform,
    pub feasibility: Vec<SegmentFeasibility>,
    pub vin_rate_cap: Option<f64>,
    pub tracking: TrackingReport,
}

/// Synthesize the feedforward input for a desired output waveform and check
/// it closed-loop.
///
/// The plan is returned only when every segment is feasible (amplifier
/// stays linear, value-continuous at joints, and within the rate cap when
/// one is given); otherwise the offending intervals are reported in the
/// error. The closed-loop check re-integrates the synthesized input and
/// records the max and RMS tracking error against the desired output.
pub fn synthesize(
    model: &StModel,
    desired: &Waveform,
    span: (f64, f64),
    vin_rate_cap: Option<f64>,
) -> Result<ControlPlan> {
    model.validate()?;
    let (t0, t1) = span;
    if !(t1 > t0) || t0 < desired.t_min() {
        return Err(Error::InvalidInput(format!("bad control span [{t0}, {t1}]")));
    }
    let synthesized = synthesize_waveform(model, desired)?;

    let m = model.saturation_m;
    let mut feasibility = Vec::new();
    let mut bad_intervals = Vec::new();
    let segs = desired.segments();
    for (i, seg) in segs.iter().enumerate() {
        let lo = seg.t_start.max(t0);
        let hi = desired_segment_end(desired, i).min(t1);
        if hi <= lo {
            continue;
        }
        let mut issues = Vec::new();
        let amp_sup = amp_drive_sup(model, seg, lo, hi);
        let amp_margin = m - amp_sup;
        if amp_margin <= 0.0 {
            issues.push(format!(
                "amplifier saturates: sup|w + tau0*w'| = {amp_sup:.6e} >= M"
            ));
        }
        let required_rate = synthesized.max_abs_slope(lo, hi)?;
        if let Some(cap) = vin_rate_cap {
            if required_rate > cap {
                issues.push(format!(
                    "input rate {required_rate:.6e} exceeds cap {cap:.6e}"
                ));
            }
        }
        // the output is a state: the desired waveform may not jump
        if i + 1 < segs.len() {
            let tj = segs[i + 1].t_start;
            if tj > t0 && tj <= t1 {
                let gap = (desired.eval(tj)? - seg_value(seg, tj)).abs();
                if gap > 1e-12 * m {
                    issues.push(format!("desired output jumps by {gap:.3e} at t = {tj:.6e}"));
                }
            }
        }
        let ok = issues.is_empty();
        if !ok {
            bad_intervals.push((lo, hi));
        }
        feasibility.push(SegmentFeasibility {
            t_start: lo,
            t_end: hi,
            amp_margin,
            required_rate,
            ok,
            issues,
        });
    }
    if !bad_intervals.is_empty() {
        let details: Vec<String> = feasibility
            .iter()
            .filter(|f| !f.ok)
            .flat_map(|f| f.issues.iter().cloned())
            .collect();
        return Err(Error::Infeasible {
            detail: details.join("; "),
            intervals: bad_intervals,
        });
    }

    // closed-loop check
    let v_out0 = desired.eval(t0)?;
    let opts = IntegrateOptions {
        tol: 1e-12,
        cadence: 2000,
        watch_levels: vec![],
        high_precision: true,
        force_numeric: false,
    };
    let traj = integrate_with(model, &synthesized, v_out0, span, &opts)?;
    let mut max_error = 0.0f64;
    let mut sum_sq = 0.0;
    for s in &traj.samples {
        let err = s.v_out - desired.eval(s.t)?;
        max_error = max_error.max(err.abs());
        sum_sq += err * err;
    }
    let rms_error = (sum_sq / traj.samples.len() as f64).sqrt();
    Ok(ControlPlan {
        desired: desired.clone(),
        synthesized,
        feasibility,
        vin_rate_cap,
        tracking: TrackingReport {
            max_error,
            rms_error,
        },
    })
}

/// Re-run the closed-loop check of an existing plan (used by the CLI to
/// export the achieved trajectory).
pub fn closed_loop_trajectory(
    model: &StModel,
    plan: &ControlPlan,
    span: (f64, f64),
    tol: f64,
    cadence: usize,
) -> Result<Trajectory> {
    let v_out0 = plan.desired.eval(span.0)?;
    integrate_with(
        model,
        &plan.synthesized,
        v_out0,
        span,
        &IntegrateOptions {
            tol,
            cadence,
            watch_levels: vec![],
            high_precision: true,
            force_numeric: false,
        },
    )
}

fn desired_segment_end(w: &Waveform, i: usize) -> f64 {
    w.segments().get(i + 1).map_or(f64::INFINITY, |s| s.t_start)
}

fn seg_value(seg: &Segment, t: f64) -> f64 {
    // evaluate one segment past its own end (for joint gap checks)
    let dt = t - seg.t_start;
    match seg.kind {
        SegmentKind::Constant { level } => level,
        SegmentKind::Ramp { v0, slope } => v0 + slope * dt,
        SegmentKind::Sine {
            offset,
            amplitude,
            frequency_hz,
            phase,
        } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency_hz * dt + phase).sin(),
        SegmentKind::Exp {
            v_inf,
            v0,
            tau,
            divergent,
        } => {
            let e = if divergent { (dt / tau).exp() } else { (-dt / tau).exp() };
            v_inf + (v0 - v_inf) * e
        }
    }
}

/// Map every desired segment onto its feedforward input segment. Each
/// analytic family is closed under the inversion.
fn synthesize_waveform(model: &StModel, desired: &Waveform) -> Result<Waveform> {
    let b = model.feedback_offset();
    let s = model.effective_k();
    let tau0 = model.tau0;
    let a = model.gain_a;
    let mapped: Vec<Segment> = desired
        .segments()
        .iter()
        .map(|seg| {
            let kind = match seg.kind {
                SegmentKind::Constant { level } => SegmentKind::Constant {
                    level: model.gamma2_inverse(level),
                },
                SegmentKind::Ramp { v0, slope } => SegmentKind::Ramp {
                    v0: b + s * v0 - tau0 * slope / a,
                    slope: s * slope,
                },
                SegmentKind::Sine {
                    offset,
                    amplitude,
                    frequency_hz,
                    phase,
                } => {
                    let w = 2.0 * std::f64::consts::PI * frequency_hz;
                    let c_cos = tau0 * w / a;
                    let r = (s * s + c_cos * c_cos).sqrt();
                    let psi = (-c_cos).atan2(s);
                    SegmentKind::Sine {
                        offset: b + s * offset,
                        amplitude: amplitude * r,
                        frequency_hz,
                        phase: phase + psi,
                    }
                }
                SegmentKind::Exp {
                    v_inf,
                    v0,
                    tau,
                    divergent,
                } => {
                    let coeff = if divergent {
                        s - tau0 / (a * tau)
                    } else {
                        s + tau0 / (a * tau)
                    };
                    SegmentKind::Exp {
                        v_inf: b + s * v_inf,
                        v0: b + s * v_inf + (v0 - v_inf) * coeff,
                        tau,
                        divergent,
                    }
                }
            };
            Segment {
                t_start: seg.t_start,
                kind,
            }
        })
        .collect();
    Waveform::new(mapped)
}

/// `sup |w + τ₀·w'|` of one desired segment over `[lo, hi]`: the amplifier
/// drive the feedforward input demands.
fn amp_drive_sup(model: &StModel, seg: &Segment, lo: f64, hi: f64) -> f64 {
    let tau0 = model.tau0;
    let dt0 = lo - seg.t_start;
    let dt1 = hi - seg.t_start;
    match seg.kind {
        SegmentKind::Constant { level } => level.abs(),
        SegmentKind::Ramp { v0, slope } => {
            let f = |dt: f64| (v0 + slope * dt + tau0 * slope).abs();
            f(dt0).max(f(dt1))
        }
        SegmentKind::Sine {
            offset,
            amplitude,
            frequency_hz,
            phase,
        } => {
            // w + tau0*w' = offset + amplitude*sqrt(1+(tau0*omega)^2)*sin(theta+psi)
            let w = 2.0 * std::f64::consts::PI * frequency_hz;
            let r = amplitude.abs() * (1.0 + (tau0 * w) * (tau0 * w)).sqrt();
            let psi = (tau0 * w).atan2(1.0) * amplitude.signum();
            let p0 = w * dt0 + phase + psi;
            let p1 = w * dt1 + phase + psi;
            let (p_lo, p_hi) = (p0.min(p1), p0.max(p1));
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut sup = (offset + r * p0.sin()).abs().max((offset + r * p1.sin()).abs());
            // interior extrema at sin = ±1
            let contains = |target: f64| {
                let n = ((p_lo - target) / two_pi).ceil();
                target + n * two_pi <= p_hi
            };
            if contains(std::f64::consts::FRAC_PI_2) {
                sup = sup.max((offset + r).abs());
            }
            if contains(-std::f64::consts::FRAC_PI_2) {
                sup = sup.max((offset - r).abs());
            }
            sup
        }
        SegmentKind::Exp {
            v_inf,
            v0,
            tau,
            divergent,
        } => {
            let coeff = if divergent { 1.0 + tau0 / tau } else { 1.0 - tau0 / tau };
            let f = |dt: f64| {
                let e = if divergent { (dt / tau).exp() } else { (-dt / tau).exp() };
                (v_inf + (v0 - v_inf) * coeff * e).abs()
            };
            f(dt0).max(f(dt1))
        }
    }
}

/// Result of a pin-and-release experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinRelease {
    pub trajectory: Trajectory,
    /// Input that pins the chosen level (γ₂⁻¹ of the level).
    pub pin_input: f64,
    /// Time the approach reaches the pin level.
    pub t_pinned: f64,
    /// Time the release offset is applied.
    pub t_release: f64,
}

impl PinRelease {
    /// Saturation rail the trajectory resolved to, if it reached one within
    /// 1% of the swing.
    pub fn resolved_rail(&self, saturation_m: f64) -> Option<f64> {
        let v = self.trajectory.final_sample().v_out;
        if (v - saturation_m).abs() <= 0.01 * saturation_m {
            Some(saturation_m)
        } else if (v + saturation_m).abs() <= 0.01 * saturation_m {
            Some(-saturation_m)
        } else {
            None
        }
    }
}

/// Drive the output to a metastable level along a short feedforward
/// approach, hold it there, then offset the input by `release_delta`.
///
/// A positive release offset shifts γ₂ above the held level, so the
/// trajectory falls to the negative rail (the model is inverting); a
/// negative offset resolves to the positive rail. With a zero offset the
/// output holds for the whole span.
///
/// The run uses the high-precision integration mode. The approach is kept
/// to a few τ₂ and the start state is placed exactly on the particular
/// solution of the rounded approach input: the pinned orbit amplifies any
/// seed error as `e^(t/τ₂)`, so the hold budget is spent on the hold, not
/// on the approach.
pub fn pin_and_release(
    model: &StModel,
    level: f64,
    hold: f64,
    release_delta: f64,
) -> Result<PinRelease> {
    model.validate()?;
    let g = model.derive_geometry()?;
    let m = model.saturation_m;
    if !(level > g.gamma3 && level < g.gamma1) {
        return Err(Error::InvalidInput(format!(
            "pin level {level} outside (gamma3, gamma1)"
        )));
    }
    if !(hold >= 0.0) {
        return Err(Error::InvalidInput("hold must be non-negative".into()));
    }
    let t_appr = 4.0 * g.tau2;
    let headroom = m - level.abs();
    let off_mag = (0.1 * m)
        .min(0.45 * headroom)
        .min(0.5 * headroom * t_appr / model.tau0);
    let dir = if level >= 0.0 { 1.0 } else { -1.0 };
    let from = level - dir * off_mag;
    let slope_w = (level - from) / t_appr;
    // approach stays linear by construction:
    // |w| + tau0*|slope_w| <= |level| + off + 0.5*headroom < M
    let pin_input = model.gamma2_inverse(level);
    let b = model.feedback_offset();
    let s = model.effective_k();
    let ramp_in0 = b + s * from - model.tau0 * slope_w / model.gain_a;
    let ramp_slope = s * slope_w;
    // start exactly on the particular solution of the *stored* ramp input,
    // mirroring the integrator's own window formula
    let v_out0 = Dd::from_sum(ramp_in0, -b)
        .div_f64(s)
        .add(Dd::from_prod(ramp_slope / s, g.tau2))
        .value();
    let t_release = t_appr + hold;
    let released_input = pin_input + release_delta;
    let t_resolve = match crate::integrator::region_exit_time(model, released_input, level)? {
        Some(te) => te + 14.0 * model.tau0,
        // a zero offset never leaves the pin; keep the tail short since the
        // residual seed keeps amplifying as e^(t/tau2)
        None => 10.0 * g.tau2,
    };
    let input = Waveform::new(vec![
        Segment {
            t_start: 0.0,
            kind: SegmentKind::Ramp {
                v0: ramp_in0,
                slope: ramp_slope,
            },
        },
        Segment {
            t_start: t_appr,
            kind: SegmentKind::Constant { level: pin_input },
        },
        Segment {
            t_start: t_release,
            kind: SegmentKind::Constant {
                level: released_input,
            },
        },
    ])?;
    let opts = IntegrateOptions {
        tol: 1e-12,
        cadence: 1000,
        watch_levels: vec![level],
        high_precision: true,
        force_numeric: false,
    };
    let trajectory = integrate_with(model, &input, v_out0, (0.0, t_release + t_resolve), &opts)?;
    Ok(PinRelease {
        trajectory,
        pin_input,
        t_pinned: t_appr,
        t_release,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::integrate;
    use crate::model::StModel;

    fn reference_model() -> StModel {
        StModel::new(1000.0, 0.5, 1.0, 0.0, 1e-9).unwrap()
    }

    /// Modest-gain model: τ₂ is large enough that closed-loop checks over a
    /// sine period stay within a handful of e-folds.
    fn tracking_model() -> StModel {
        StModel::new(5.0, 0.3, 1.0, 0.0, 1e-9).unwrap()
    }

    #[test]
    fn pinning_reduces_to_gamma2_inverse() {
        let m = reference_model();
        let v = inverse_input(&m, 0.4, 0.0).unwrap();
        assert_eq!(v, m.gamma2_inverse(0.4));
    }

    #[test]
    fn dynamic_limit_is_infeasible() {
        // binary-exact tau0 so the boundary |0 + tau0*(M/tau0)| = M lands
        // exactly on the rejection threshold
        let m = StModel::new(1000.0, 0.5, 1.0, 0.0, 0.5).unwrap();
        assert!(inverse_input(&m, 0.0, 2.0).is_err());
        assert!(inverse_input(&m, 0.0, 1.0).is_ok());

        let r = reference_model();
        assert!(inverse_input(&r, 0.0, (1.0 / 1e-9) * (1.0 + 1e-9)).is_err());
        assert!(inverse_input(&r, 0.0, 0.5 / 1e-9).is_ok());
    }

    #[test]
    fn inverse_example_value_and_consistency() {
        let m = reference_model();
        let v_in = inverse_input(&m, 0.25, 0.0).unwrap();
        assert!((v_in - 0.12475).abs() < 1e-15);
        let field = m.derivative_field(v_in, 0.25);
        assert!(field.abs() <= 1e-12 * m.saturation_m / m.tau0);
    }

    #[test]
    fn inverse_consistency_across_operating_points() {
        let m = reference_model();
        let scale = m.saturation_m / m.tau0;
        for &w in &[-0.9, -0.2, 0.0, 0.35, 0.8] {
            for &wp in &[-4e8, -1e7, 0.0, 2e7, 4e8] {
                if (w + m.tau0 * wp).abs() >= m.saturation_m {
                    continue;
                }
                let v_in = inverse_input(&m, w, wp).unwrap();
                let field = m.derivative_field(v_in, w);
                assert!(
                    (field - wp).abs() <= 1e-12 * scale + 1e-12 * wp.abs(),
                    "w={w} wp={wp} field={field}"
                );
            }
        }
    }

    #[test]
    fn corridor_halfwidth_values() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        assert!((g.tau2 - 2.004e-12).abs() < 1e-14);
        let c = corridor_halfwidth(&m, 1e9).unwrap();
        assert!((c - g.tau2 * 1e9).abs() < 1e-18);
        // 2 ps * 1e9 V/s ~ 2 mV
        assert!((c - 2.004e-3).abs() < 1e-5);
        assert!(corridor_halfwidth(&m, 0.0).is_err());
        // cap -> 0 collapses the corridor
        assert!(corridor_halfwidth(&m, 1e-30).unwrap() < 1e-35);
    }

    #[test]
    fn synthesize_constant_is_pin_input() {
        let m = reference_model();
        let plan = synthesize(&m, &Waveform::constant(0.3), (0.0, 10e-12), None).unwrap();
        let segs = plan.synthesized.segments();
        assert_eq!(segs.len(), 1);
        match segs[0].kind {
            SegmentKind::Constant { level } => assert_eq!(level, m.gamma2_inverse(0.3)),
            ref other => panic!("unexpected kind {other:?}"),
        }
        assert!(plan.tracking.max_error <= 1e-9);
    }

    #[test]
    fn synthesize_sine_tracks_closed_loop() {
        let m = tracking_model();
        let g = m.derive_geometry().unwrap();
        let desired = Waveform::new(vec![Segment {
            t_start: 0.0,
            kind: SegmentKind::Sine {
                offset: 0.0,
                amplitude: 0.25,
                frequency_hz: 1e8,
                phase: 0.0,
            },
        }])
        .unwrap();
        let span = (0.0, 2e-8); // two periods = 10 e-folds of tau2
        let plan = synthesize(&m, &desired, span, None).unwrap();
        let swing = 0.5;
        assert!(
            plan.tracking.max_error <= 0.01 * swing,
            "max tracking error {}",
            plan.tracking.max_error
        );
        // phase trace stays within the corridor of gamma2
        let cap = plan.synthesized.max_abs_slope(span.0, span.1).unwrap();
        let corridor = corridor_halfwidth(&m, cap).unwrap();
        let traj = closed_loop_trajectory(&m, &plan, span, 1e-12, 500).unwrap();
        for s in traj.samples.iter() {
            let dist = (s.v_in - m.gamma2_inverse(s.v_out)).abs();
            assert!(
                dist <= corridor,
                "t={} dist {dist} corridor {corridor}",
                s.t
            );
        }
        let _ = g;
    }

    #[test]
    fn synthesize_rejects_excessive_slew() {
        let m = reference_model();
        // slew beyond (M - |W|)/tau0 saturates the amplifier
        let desired = Waveform::new(vec![Segment {
            t_start: 0.0,
            kind: SegmentKind::Ramp {
                v0: 0.0,
                slope: 2.0 / 1e-9,
            },
        }])
        .unwrap();
        match synthesize(&m, &desired, (0.0, 1e-9), None) {
            Err(Error::Infeasible { intervals, .. }) => assert!(!intervals.is_empty()),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn synthesize_rejects_rate_cap_violation() {
        let m = tracking_model();
        let desired = Waveform::new(vec![Segment {
            t_start: 0.0,
            kind: SegmentKind::Sine {
                offset: 0.0,
                amplitude: 0.25,
                frequency_hz: 1e8,
                phase: 0.0,
            },
        }])
        .unwrap();
        // required rate is about s*amp*omega ~ 1.6e7 V/s for this model
        let err = synthesize(&m, &desired, (0.0, 2e-8), Some(1e6)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
        assert!(synthesize(&m, &desired, (0.0, 2e-8), Some(1e9)).is_ok());
    }

    #[test]
    fn synthesize_rejects_output_jump() {
        let m = tracking_model();
        let desired = Waveform::step_to(0.0, 0.4, 1e-9);
        assert!(matches!(
            synthesize(&m, &desired, (0.0, 2e-9), None),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn pin_release_resolves_to_opposite_rails() {
        let m = reference_model();
        for (delta, rail) in [(1e-7, -1.0), (-1e-7, 1.0)] {
            let pr = pin_and_release(&m, 0.25, 20.0 * (1e-9 / 499.0), delta).unwrap();
            assert_eq!(
                pr.resolved_rail(m.saturation_m),
                Some(rail),
                "delta {delta}"
            );
            // held at the level during the hold phase
            for s in pr
                .trajectory
                .samples
                .iter()
                .filter(|s| s.t >= pr.t_pinned && s.t <= pr.t_release)
            {
                assert!((s.v_out - 0.25).abs() <= 1e-3, "hold broke at {}", s.t);
            }
        }
    }

    #[test]
    fn zero_release_holds_entire_span() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let pr = pin_and_release(&m, 0.0, 15.0 * g.tau2, 0.0).unwrap();
        let span_end = pr.trajectory.final_sample().t;
        assert!(span_end >= pr.t_release + 10.0 * g.tau2);
        for s in pr.trajectory.samples.iter().filter(|s| s.t >= pr.t_pinned) {
            assert!(
                (s.v_out - 0.0).abs() <= 1e-4 * m.saturation_m,
                "drift at t = {} ({})",
                s.t,
                s.v_out
            );
        }
    }

    #[test]
    fn pin_rejects_rail_levels() {
        let m = reference_model();
        assert!(pin_and_release(&m, 1.0, 1e-9, 0.0).is_err());
        assert!(pin_and_release(&m, -1.5, 1e-9, 0.0).is_err());
    }

    #[test]
    fn outside_corridor_escapes_monotonically() {
        // operating point at twice the corridor half-width, chased by a
        // full-rate input: the trajectory still saturates monotonically
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let level = 0.2;
        let cap = 1e7;
        let corridor = corridor_halfwidth(&m, cap).unwrap();
        let x0 = 2.0 * corridor;
        let v_in0 = m.gamma2_inverse(level) + x0;
        let chase = Waveform::new(vec![Segment {
            t_start: 0.0,
            kind: SegmentKind::Ramp {
                v0: v_in0,
                slope: -cap,
            },
        }])
        .unwrap();
        let span_end = 40.0 * g.tau2 + 10.0 * m.tau0;
        let traj = integrate(&m, &chase, level, (0.0, span_end), 1e-10).unwrap();
        // monotone fall to the negative saturation band
        let mut prev = f64::INFINITY;
        for s in &traj.samples {
            assert!(s.v_out <= prev + 1e-12, "rise at t = {}", s.t);
            prev = s.v_out;
        }
        assert!(traj.final_sample().v_out < -0.99);
    }

    #[test]
    fn inside_corridor_input_reaches_gamma2() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let level = 0.2;
        let cap = 1e7;
        let corridor = corridor_halfwidth(&m, cap).unwrap();
        let x0 = 0.5 * corridor;
        let v_in0 = m.gamma2_inverse(level) + x0;
        let chase = Waveform::new(vec![Segment {
            t_start: 0.0,
            kind: SegmentKind::Ramp {
                v0: v_in0,
                slope: -cap,
            },
        }])
        .unwrap();
        let traj = integrate(&m, &chase, level, (0.0, 5.0 * g.tau2), 1e-12).unwrap();
        // horizontal distance X obeys X' = v_in' + X/tau2, so the chase
        // crosses gamma2 at tau2*ln(2) for X0 = corridor/2
        let t_expect = g.tau2 * 2.0f64.ln();
        let crossed = traj.samples.iter().find(|s| {
            s.v_in - m.gamma2_inverse(s.v_out) <= 0.0
        });
        let s = crossed.expect("chase should reach gamma2");
        assert!(
            (s.t - t_expect).abs() < 0.2 * t_expect,
            "crossed at {} vs {t_expect}",
            s.t
        );
    }
}
