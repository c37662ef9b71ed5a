//! Square-law transistor model of the conventional six-transistor CMOS
//! Schmitt-Trigger.
//!
//! Topology: an input inverter stack M1/M2 (NMOS, bottom) and M4/M5 (PMOS,
//! top) with two feedback devices driven by the output — M3 (NMOS) pulls the
//! internal NMOS-stack node toward the supply while the output is high, and
//! M6 (PMOS) pulls the internal PMOS-stack node toward ground while the
//! output is low. The feedback devices shift the effective switching points
//! of the stacks, producing the hysteresis.
//!
//! Devices use the level-1 square-law equations (cutoff / triode /
//! saturation, optional channel-length modulation). Given `(v_in, v_out)`
//! the two internal stack nodes decouple, so each is solved independently by
//! bisection on its monotone Kirchhoff balance. Newton iteration is
//! deliberately avoided: the current balances have derivative kinks at the
//! device-region switches and flat dead zones where every device is cut
//! off, both of which bisection handles without drama.
//!
//! The quantitative output (thresholds, current magnitudes) is that of the
//! square-law model, not of any production technology; the phase-plane
//! structure (curved equilibrium line, sign pattern, corner behavior) is
//! what this module is for.

use crate::error::{Error, Result};
use crate::integrator::{Direction, Event, EventKind, IntegrateOptions, Sample, Trajectory};
use crate::model::Region;
use crate::numeric::{bisect, bisect_leftmost_nonpositive, dopri5_step, hermite};
use crate::waveform::Waveform;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Device polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    N,
    P,
}

/// Square-law device parameters. `v_th` is the threshold magnitude (> 0 for
/// both polarities), `beta` the transconductance factor in A/V², `lambda`
/// the channel-length modulation in 1/V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosfetParams {
    pub polarity: Polarity,
    pub v_th: f64,
    pub beta: f64,
    #[serde(default)]
    pub lambda: f64,
}

impl MosfetParams {
    pub fn new(polarity: Polarity, v_th: f64, beta: f64, lambda: f64) -> Result<Self> {
        if !(v_th > 0.0 && beta > 0.0 && lambda >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "mosfet params out of range: v_th={v_th} beta={beta} lambda={lambda}"
            )));
        }
        Ok(MosfetParams {
            polarity,
            v_th,
            beta,
            lambda,
        })
    }

    /// NMOS drain current from `d` to `s` (negative when the terminals are
    /// effectively swapped). Gate voltage `g`, all node-referred.
    fn nmos_id(&self, vg: f64, vd: f64, vs: f64) -> f64 {
        debug_assert_eq!(self.polarity, Polarity::N);
        if vd < vs {
            return -self.nmos_id(vg, vs, vd);
        }
        let vgs = vg - vs;
        let vds = vd - vs;
        let vov = vgs - self.v_th;
        if vov <= 0.0 {
            0.0
        } else if vds < vov {
            self.beta * (vov - 0.5 * vds) * vds * (1.0 + self.lambda * vds)
        } else {
            0.5 * self.beta * vov * vov * (1.0 + self.lambda * vds)
        }
    }

    /// PMOS source-to-drain current (positive when conducting from `s`
    /// toward `d`).
    fn pmos_isd(&self, vg: f64, vs: f64, vd: f64) -> f64 {
        debug_assert_eq!(self.polarity, Polarity::P);
        if vs < vd {
            return -self.pmos_isd(vg, vd, vs);
        }
        let vsg = vs - vg;
        let vsd = vs - vd;
        let vov = vsg - self.v_th;
        if vov <= 0.0 {
            0.0
        } else if vsd < vov {
            self.beta * (vov - 0.5 * vsd) * vsd * (1.0 + self.lambda * vsd)
        } else {
            0.5 * self.beta * vov * vov * (1.0 + self.lambda * vsd)
        }
    }
}

/// Six-transistor CMOS Schmitt-Trigger with supply `vdd` and output load
/// `c_load`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmosStModel {
    pub m1: MosfetParams,
    pub m2: MosfetParams,
    pub m3: MosfetParams,
    pub m4: MosfetParams,
    pub m5: MosfetParams,
    pub m6: MosfetParams,
    pub vdd: f64,
    pub c_load: f64,
}

impl CmosStModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.vdd > 0.0) {
            return Err(Error::InvalidModel("vdd must be positive".into()));
        }
        if !(self.c_load > 0.0) {
            return Err(Error::InvalidModel("c_load must be positive".into()));
        }
        for (name, p, want) in [
            ("m1", &self.m1, Polarity::N),
            ("m2", &self.m2, Polarity::N),
            ("m3", &self.m3, Polarity::N),
            ("m4", &self.m4, Polarity::P),
            ("m5", &self.m5, Polarity::P),
            ("m6", &self.m6, Polarity::P),
        ] {
            if p.polarity != want {
                return Err(Error::InvalidModel(format!("{name} must be polarity {want:?}")));
            }
            MosfetParams::new(p.polarity, p.v_th, p.beta, p.lambda)?;
        }
        Ok(())
    }

    /// Default parameter set: 1.2 V supply, 0.3 V thresholds, N/P betas
    /// ratioed 2:1, 2 fF output load, no channel-length modulation.
    pub fn defaults() -> CmosStModel {
        let n = MosfetParams {
            polarity: Polarity::N,
            v_th: 0.3,
            beta: 2e-4,
            lambda: 0.0,
        };
        let p = MosfetParams {
            polarity: Polarity::P,
            v_th: 0.3,
            beta: 1e-4,
            lambda: 0.0,
        };
        CmosStModel {
            m1: n,
            m2: n,
            m3: n,
            m4: p,
            m5: p,
            m6: p,
            vdd: 1.2,
            c_load: 2e-15,
        }
    }

    /// Fully N/P-symmetric parameter set (equal thresholds and betas), used
    /// by the symmetry checks.
    pub fn symmetric(vdd: f64, v_th: f64, beta: f64, c_load: f64) -> CmosStModel {
        let n = MosfetParams {
            polarity: Polarity::N,
            v_th,
            beta,
            lambda: 0.0,
        };
        let p = MosfetParams {
            polarity: Polarity::P,
            v_th,
            beta,
            lambda: 0.0,
        };
        CmosStModel {
            m1: n,
            m2: n,
            m3: n,
            m4: p,
            m5: p,
            m6: p,
            vdd,
            c_load,
        }
    }

    /// Kirchhoff residual (current into the node) of the NMOS-stack internal
    /// node at `v_xn`: inflow from M2 (output side) and M3 (feedback from
    /// vdd), outflow through M1 to ground. Non-increasing in `v_xn`.
    fn xn_residual(&self, v_in: f64, v_out: f64, v_xn: f64) -> f64 {
        let i1 = self.m1.nmos_id(v_in, v_xn, 0.0);
        let i2 = self.m2.nmos_id(v_in, v_out, v_xn);
        let i3 = self.m3.nmos_id(v_out, self.vdd, v_xn);
        i2 + i3 - i1
    }

    /// Kirchhoff residual of the PMOS-stack internal node at `v_xp`: inflow
    /// from M4 (vdd side), outflow through M5 (to the output) and M6
    /// (feedback to ground). Non-increasing in `v_xp`.
    fn xp_residual(&self, v_in: f64, v_out: f64, v_xp: f64) -> f64 {
        let i4 = self.m4.pmos_isd(v_in, self.vdd, v_xp);
        let i5 = self.m5.pmos_isd(v_in, v_xp, v_out);
        let i6 = self.m6.pmos_isd(v_out, v_xp, 0.0);
        i4 - i5 - i6
    }

    /// DC solution of the two internal stack nodes for a given phase-plane
    /// point. Within dead zones (every attached device cut off) the lowest
    /// balancing voltage is returned for the NMOS node and the highest for
    /// the PMOS node, which keeps the solution deterministic and matches
    /// the source-follower rest levels the feedback devices impose.
    pub fn solve_internal_nodes(&self, v_in: f64, v_out: f64) -> Result<(f64, f64)> {
        self.validate()?;
        if !(0.0..=self.vdd).contains(&v_in) || !(0.0..=self.vdd).contains(&v_out) {
            return Err(Error::InvalidInput(format!(
                "({v_in}, {v_out}) outside rails [0, {}]",
                self.vdd
            )));
        }
        let fxn = |x: f64| self.xn_residual(v_in, v_out, x);
        if fxn(0.0) < 0.0 || fxn(self.vdd) > 0.0 {
            return Err(Error::Numeric(format!(
                "xn balance not bracketed at ({v_in}, {v_out})"
            )));
        }
        let v_xn = bisect_leftmost_nonpositive(fxn, 0.0, self.vdd);

        // mirrored convention for the PMOS node: highest balancing voltage
        let fxp_neg = |x: f64| -self.xp_residual(v_in, v_out, self.vdd - x);
        if fxp_neg(0.0) < 0.0 || fxp_neg(self.vdd) > 0.0 {
            return Err(Error::Numeric(format!(
                "xp balance not bracketed at ({v_in}, {v_out})"
            )));
        }
        let v_xp = self.vdd - bisect_leftmost_nonpositive(fxp_neg, 0.0, self.vdd);
        Ok((v_xn, v_xp))
    }

    /// Output-node derivative `dV_out/dt`: net charging current through the
    /// stacks divided by the load capacitance.
    pub fn field(&self, v_in: f64, v_out: f64) -> Result<f64> {
        let (v_xn, v_xp) = self.solve_internal_nodes(v_in, v_out)?;
        let i_up = self.m5.pmos_isd(v_in, v_xp, v_out);
        let i_down = self.m2.nmos_id(v_in, v_out, v_xn);
        Ok((i_up - i_down) / self.c_load)
    }

    /// Equilibrium input for one output level: bisection on the sign change
    /// of the field along the row. Errors when the row has no strict sign
    /// change (output levels outside the band swept by the curve).
    pub fn equilibrium_input(&self, v_out: f64) -> Result<f64> {
        self.validate()?;
        let f_lo = self.field(0.0, v_out)?;
        let f_hi = self.field(self.vdd, v_out)?;
        if !(f_lo > 0.0 && f_hi < 0.0) {
            return Err(Error::NoCrossing(format!(
                "no field sign change along row v_out = {v_out} (field {f_lo:.3e} .. {f_hi:.3e})"
            )));
        }
        let f = |v_in: f64| self.field(v_in, v_out).unwrap_or(f64::NAN);
        Ok(bisect(f, 0.0, self.vdd, 0.0))
    }
}

/// Traced equilibrium contour.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaContour {
    /// (v_in, v_out) points, ordered by the input grid.
    pub points: Vec<(f64, f64)>,
    /// Grid rows that had no equilibrium (outside the band).
    pub rows_skipped: Vec<f64>,
}

impl GammaContour {
    /// Secant slope dV_out/dV_in near the lower end, midpoint and upper end
    /// of the traced contour, each over `width` consecutive points.
    pub fn slope_profile(&self, width: usize) -> Option<(f64, f64, f64)> {
        let n = self.points.len();
        if n < 2 * width + 2 || width == 0 {
            return None;
        }
        let secant = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) / (b.0 - a.0);
        let lo = secant(self.points[0], self.points[width]);
        let mid_i = n / 2;
        let mid = secant(self.points[mid_i - width / 2 - 1], self.points[mid_i + width / 2]);
        let hi = secant(self.points[n - 1 - width], self.points[n - 1]);
        Some((lo, mid, hi))
    }

    /// The metastable branch: the section between the contour's input
    /// extrema. Rows beyond those corners belong to the near-rail stable
    /// branches, where the equilibrium input folds back.
    pub fn metastable_branch(&self) -> GammaContour {
        let n = self.points.len();
        if n < 3 {
            return self.clone();
        }
        let mut i_min = 0;
        let mut i_max = 0;
        for (i, p) in self.points.iter().enumerate() {
            if p.0 < self.points[i_min].0 {
                i_min = i;
            }
            if p.0 > self.points[i_max].0 {
                i_max = i;
            }
        }
        let (a, b) = if i_min <= i_max { (i_min, i_max) } else { (i_max, i_min) };
        GammaContour {
            points: self.points[a..=b].to_vec(),
            rows_skipped: self.rows_skipped.clone(),
        }
    }
}

/// Trace the metastable equilibrium line row by row over an output grid.
/// Rows run in parallel; rows without a sign change are recorded as skipped.
pub fn trace_gamma2(model: &CmosStModel, v_out_grid: &[f64]) -> Result<GammaContour> {
    model.validate()?;
    if v_out_grid.is_empty() {
        return Err(Error::InvalidInput("empty contour grid".into()));
    }
    if v_out_grid
        .iter()
        .any(|&v| !(0.0..=model.vdd).contains(&v))
    {
        return Err(Error::InvalidInput("contour grid outside rails".into()));
    }
    let rows: Vec<(f64, Option<f64>)> = v_out_grid
        .par_iter()
        .map(|&v_out| match model.equilibrium_input(v_out) {
            Ok(v_in) => (v_out, Some(v_in)),
            Err(_) => (v_out, None),
        })
        .collect();
    let mut points = Vec::new();
    let mut rows_skipped = Vec::new();
    for (v_out, v_in) in rows {
        match v_in {
            Some(v_in) => points.push((v_in, v_out)),
            None => rows_skipped.push(v_out),
        }
    }
    if points.is_empty() {
        return Err(Error::NoCrossing("no grid row intersects the equilibrium line".into()));
    }
    Ok(GammaContour {
        points,
        rows_skipped,
    })
}

/// Transient simulation of the CMOS output node with an input waveform.
///
/// Same trajectory contract as the clipped-linear integrator, with the
/// region tag derived from the sign of the field at each sample (positive =
/// charging toward the high rail, negative = discharging, zero = on the
/// equilibrium line).
pub fn cmos_integrate(
    model: &CmosStModel,
    input: &Waveform,
    v_out0: f64,
    t_span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    cmos_integrate_with(
        model,
        input,
        v_out0,
        t_span,
        &IntegrateOptions {
            tol,
            ..IntegrateOptions::default()
        },
    )
}

pub fn cmos_integrate_with(
    model: &CmosStModel,
    input: &Waveform,
    v_out0: f64,
    t_span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    model.validate()?;
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::InvalidInput(format!("malformed span [{t0}, {t1}]")));
    }
    if t0 < input.t_min() {
        return Err(Error::InvalidInput(format!(
            "span starts before waveform start {}",
            input.t_min()
        )));
    }
    if !(opts.tol > 0.0 && opts.tol <= 1e-3) {
        return Err(Error::InvalidInput(format!("tol {} outside (0, 1e-3]", opts.tol)));
    }
    if !(0.0..=model.vdd).contains(&v_out0) {
        return Err(Error::InvalidInput(format!("v_out0 {v_out0} outside rails")));
    }

    // clamp stray excursions to the rails; the device equations are only
    // meaningful inside them and the stacks cannot drive past the rails
    let clamp = |v: f64| v.clamp(0.0, model.vdd);
    let mut f = |t: f64, v: f64| {
        model
            .field(input.eval_unchecked(t), clamp(v))
            .unwrap_or(0.0)
    };
    let atol = 0.05 * opts.tol * model.vdd;
    let mut samples: Vec<Sample> = Vec::with_capacity(opts.cadence + 16);
    let mut events: Vec<Event> = Vec::new();
    let region_of = |field: f64| {
        if field > 0.0 {
            Region::SaturationPos
        } else if field < 0.0 {
            Region::SaturationNeg
        } else {
            Region::Linear
        }
    };
    let push_sample = |samples: &mut Vec<Sample>, t: f64, v: f64, field: f64| {
        if let Some(last) = samples.last() {
            if t <= last.t {
                return;
            }
        }
        samples.push(Sample {
            t,
            v_in: input.eval_unchecked(t),
            v_out: v,
            region: region_of(field),
        });
    };

    let mut t = t0;
    let mut y = v_out0;
    let mut fy = f(t, y);
    push_sample(&mut samples, t, y, fy);
    // pick a conservative first step from the fastest slew the stacks allow
    let i_scale = model.m1.beta.max(model.m4.beta) * model.vdd * model.vdd;
    let t_char = (model.c_load * model.vdd / i_scale).max((t1 - t0) * 1e-9);
    let mut h = t_char.min(t1 - t0).max((t1 - t0) * 1e-12);
    let cadence_time = |k: usize| {
        if k >= opts.cadence {
            t1
        } else {
            t0 + (k as f64) * (t1 - t0) / (opts.cadence as f64)
        }
    };
    let mut next_cadence = 1usize;
    let mut steps: u64 = 0;
    while t < t1 {
        steps += 1;
        if steps > 10_000_000 {
            return Err(Error::Numeric(format!("step budget exhausted at t = {t}")));
        }
        // clamp the step to the next input segment joint so discontinuities
        // are not smeared
        let (seg_idx, _) = input.active_segment(t);
        let seg_end = input.segment_end(seg_idx).min(t1);
        let h_max = (seg_end - t).max((t1 - t0) * 1e-15);
        let step = dopri5_step(&mut f, t, y, fy, h.min(h_max), h_max, atol)
            .ok_or_else(|| Error::Numeric(format!("tolerance {} not achievable at t = {t}", opts.tol)))?;
        let y1 = clamp(step.y1);
        let interp = |tt: f64| clamp(hermite(t, y, fy, step.t1, y1, step.f1, tt));
        // watch-level crossings
        for &level in &opts.watch_levels {
            let g0 = y - level;
            let g1 = y1 - level;
            if g0 == 0.0 || g0.signum() == g1.signum() {
                continue;
            }
            let tc = bisect(|tt| interp(tt) - level, t, step.t1, 0.0);
            events.push(Event {
                t: tc,
                kind: EventKind::ThresholdCross {
                    level,
                    direction: if g1 > g0 { Direction::Rising } else { Direction::Falling },
                },
            });
            let fc = f(tc, interp(tc));
            push_sample(&mut samples, tc, interp(tc), fc);
        }
        while next_cadence <= opts.cadence {
            let tc = cadence_time(next_cadence);
            if tc > step.t1 {
                break;
            }
            if tc > t {
                let v = interp(tc);
                let fc = f(tc, v);
                push_sample(&mut samples, tc, v, fc);
            }
            next_cadence += 1;
        }
        push_sample(&mut samples, step.t1, y1, step.f1);
        t = step.t1;
        y = y1;
        fy = step.f1;
        h = step.h_next;
    }
    events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    Ok(Trajectory { samples, events })
}

/// Linearized growth rate `∂(dV_out/dt)/∂V_out` at a phase-plane point, by
/// central difference. Positive on the metastable line; its inverse is the
/// local resolution time constant.
pub fn local_growth_rate(model: &CmosStModel, v_in: f64, v_out: f64) -> Result<f64> {
    let dv = 1e-6 * model.vdd;
    let up = model.field(v_in, (v_out + dv).min(model.vdd))?;
    let dn = model.field(v_in, (v_out - dv).max(0.0))?;
    Ok((up - dn) / (2.0 * dv))
}
