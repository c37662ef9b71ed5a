//! Trajectory simulation for the clipped-linear model.
//!
//! The model is a piecewise-linear ODE, so within each window where both the
//! operating region and the input shape (constant or ramp) are fixed, the
//! exact solution is `base(t) + D·e^(±Δt/τ)` with at most a linear `base`.
//! The integrator steps window to window, locating every region-border and
//! watch-level crossing either by an exact log solve (constant input) or by
//! bracketed bisection (ramp input, robust near tangency). Sine and
//! exponential input segments fall back to an error-controlled
//! Dormand-Prince 5(4) pair.
//!
//! The high-precision mode carries the output state as an unevaluated
//! double-double and computes the deviation from the regional rest line with
//! error-free transforms. Trajectories pinned near γ₂ amplify any state
//! error by `e^(t/τ₂)`, so the sub-ulp state representation is what keeps
//! long metastable holds honest.

use crate::error::{Error, Result};
use crate::model::{Region, StModel};
use crate::numeric::{dopri5_step, hermite, Dd};
use crate::waveform::{SegmentKind, Waveform};
use serde::Serialize;

/// One trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub v_in: f64,
    pub v_out: f64,
    pub region: Region,
}

/// Crossing direction of a watch level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Rising,
    Falling,
}

/// Event annotation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    RegionCross { from: Region, to: Region },
    ThresholdCross { level: f64, direction: Direction },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Simulated (t, V_in, V_out, region) trace with event annotations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }

    /// First time `v_out` crosses `level` at or after `after_t`, linearly
    /// interpolated between samples.
    pub fn first_crossing(&self, level: f64, after_t: f64) -> Option<f64> {
        let mut prev: Option<&Sample> = None;
        for s in &self.samples {
            if s.t < after_t {
                prev = Some(s);
                continue;
            }
            if let Some(p) = prev {
                let p_eff = if p.t < after_t { None } else { Some(p) };
                if let Some(p) = p_eff {
                    if (p.v_out - level) == 0.0 {
                        return Some(p.t);
                    }
                    if (p.v_out - level) * (s.v_out - level) < 0.0 {
                        let frac = (level - p.v_out) / (s.v_out - p.v_out);
                        return Some(p.t + frac * (s.t - p.t));
                    }
                }
            }
            if (s.v_out - level) == 0.0 {
                return Some(s.t);
            }
            prev = Some(s);
        }
        None
    }

    /// First region-cross event at or after `after_t`.
    pub fn first_region_cross(&self, after_t: f64) -> Option<&Event> {
        self.events
            .iter()
            .find(|e| e.t >= after_t && matches!(e.kind, EventKind::RegionCross { .. }))
    }
}

/// Tuning knobs for [`integrate_with`].
#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    /// Relative tolerance: event times are located to `tol·τ₂` and numeric
    /// steps keep the local error at or below `tol·M`. Must lie in (0, 1e-3].
    pub tol: f64,
    /// Number of fixed-cadence output intervals across the span.
    pub cadence: usize,
    /// Output levels whose crossings are located exactly and annotated.
    pub watch_levels: Vec<f64>,
    /// Carry the state as a double-double and derive rest-line deviations
    /// with error-free transforms (for pinned-metastability runs).
    pub high_precision: bool,
    /// Use the generic adaptive stepper even for constant/ramp segments
    /// (testing aid for the closed-form/numeric equivalence check).
    pub force_numeric: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: 1e-9,
            cadence: 1000,
            watch_levels: Vec::new(),
            high_precision: false,
            force_numeric: false,
        }
    }
}

/// Simulate with default options (cadence 1000, no watch levels).
pub fn integrate(
    model: &StModel,
    input: &Waveform,
    v_out0: f64,
    t_span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    integrate_with(
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

pub fn integrate_with(
    model: &StModel,
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
            "span starts at {t0} before waveform start {}",
            input.t_min()
        )));
    }
    if !(opts.tol > 0.0 && opts.tol <= 1e-3) {
        return Err(Error::InvalidInput(format!("tol {} outside (0, 1e-3]", opts.tol)));
    }
    let m = model.saturation_m;
    if !(v_out0.is_finite() && v_out0.abs() <= 1.5 * m) {
        return Err(Error::InvalidInput(format!(
            "v_out0 = {v_out0} outside [-1.5M, 1.5M]"
        )));
    }
    if opts.cadence == 0 {
        return Err(Error::InvalidInput("cadence must be at least 1".into()));
    }

    let mut run = Run::new(model, input, v_out0, t0, t1, opts);
    run.emit_sample(t0, v_out0);
    while run.t < t1 {
        let seg_end = {
            let (idx, _) = input.active_segment(run.t);
            input.segment_end(idx)
        };
        let window_end = seg_end.min(t1);
        let use_numeric = opts.force_numeric
            || matches!(
                input.active_segment(run.t).1.kind,
                SegmentKind::Sine { .. } | SegmentKind::Exp { .. }
            );
        if use_numeric {
            run.numeric_window(window_end)?;
        } else {
            run.closed_window(window_end)?;
        }
        if run.t >= window_end && run.t < t1 {
            // entering the next input segment: the input may jump, so
            // re-classify and note any region change
            let u = input.eval_unchecked(run.t);
            let new_region = model.classify_region(u, run.v.value());
            if new_region != run.region {
                run.events.push(Event {
                    t: run.t,
                    kind: EventKind::RegionCross {
                        from: run.region,
                        to: new_region,
                    },
                });
                run.region = new_region;
            }
        }
    }
    run.emit_sample(t1, run.v.value());
    Ok(Trajectory {
        samples: run.samples,
        events: run.events,
    })
}

/// Exact time until a trajectory with constant input leaves its starting
/// region, or `None` when the rest point keeps it there forever.
///
/// For the purpose of this solve, points exactly on a region border count as
/// Region 2, so a step landing on the 2/3 border reports a zero transit
/// time.
pub fn region_exit_time(model: &StModel, v_in_const: f64, v_out0: f64) -> Result<Option<f64>> {
    model.validate()?;
    let m = model.saturation_m;
    let raw = model.amp_unclipped(v_in_const, v_out0);
    let region = if raw.abs() >= m && raw.abs() > m {
        if raw > 0.0 {
            Region::SaturationPos
        } else {
            Region::SaturationNeg
        }
    } else {
        Region::Linear
    };
    let (gamma, tau, unstable) = model.region_dynamics(region, v_in_const);
    let exit = |boundary: f64| -> Option<f64> {
        let num = boundary - gamma;
        let den = v_out0 - gamma;
        if den == 0.0 {
            return None;
        }
        let ratio = num / den;
        if ratio <= 0.0 {
            return None;
        }
        let dt = if unstable { tau * ratio.ln() } else { -tau * ratio.ln() };
        if dt >= 0.0 {
            Some(dt)
        } else {
            None
        }
    };
    Ok(match region {
        Region::SaturationPos => exit(model.border_pos_vout(v_in_const)),
        Region::SaturationNeg => exit(model.border_neg_vout(v_in_const)),
        Region::Linear => {
            let d = v_out0 - gamma;
            if d == 0.0 {
                None
            } else if d > 0.0 {
                exit(model.border_pos_vout(v_in_const))
            } else {
                exit(model.border_neg_vout(v_in_const))
            }
        }
    })
}

// ---------------------------------------------------------------------------
// internal machinery
// ---------------------------------------------------------------------------

struct Run<'a> {
    model: &'a StModel,
    input: &'a Waveform,
    opts: &'a IntegrateOptions,
    t0: f64,
    t1: f64,
    t: f64,
    v: Dd,
    region: Region,
    tau2: f64,
    next_cadence: usize,
    samples: Vec<Sample>,
    events: Vec<Event>,
    flips_at_t: u32,
    last_flip_t: f64,
}

enum Hit {
    Border(Region),
    Watch { level: f64, direction: Direction },
}

impl<'a> Run<'a> {
    fn new(
        model: &'a StModel,
        input: &'a Waveform,
        v_out0: f64,
        t0: f64,
        t1: f64,
        opts: &'a IntegrateOptions,
    ) -> Self {
        let g = model.derive_geometry().expect("validated model");
        let u0 = input.eval_unchecked(t0);
        Run {
            model,
            input,
            opts,
            t0,
            t1,
            t: t0,
            v: Dd::from_f64(v_out0),
            region: model.classify_region(u0, v_out0),
            tau2: g.tau2,
            next_cadence: 1,
            samples: Vec::with_capacity(opts.cadence + 16),
            events: Vec::new(),
            flips_at_t: 0,
            last_flip_t: f64::NEG_INFINITY,
        }
    }

    fn cadence_time(&self, k: usize) -> f64 {
        if k >= self.opts.cadence {
            self.t1
        } else {
            self.t0 + (k as f64) * (self.t1 - self.t0) / (self.opts.cadence as f64)
        }
    }

    fn t_resolution(&self) -> f64 {
        (self.t.abs() + (self.t1 - self.t0)) * f64::EPSILON * 4.0
    }

    fn emit_sample(&mut self, t: f64, v_out: f64) {
        if let Some(last) = self.samples.last() {
            if t <= last.t {
                return;
            }
        }
        let v_in = self.input.eval_unchecked(t);
        self.samples.push(Sample {
            t,
            v_in,
            v_out,
            region: self.model.classify_region(v_in, v_out),
        });
    }

    /// Emit cadence samples with times in (self.t, until] using `value(t)`.
    fn emit_cadence_upto<F: Fn(f64) -> f64>(&mut self, until: f64, value: F) {
        while self.next_cadence <= self.opts.cadence {
            let tc = self.cadence_time(self.next_cadence);
            if tc > until {
                break;
            }
            if tc > self.t {
                self.emit_sample(tc, value(tc));
            }
            self.next_cadence += 1;
        }
    }

    /// Advance through one closed-form window ending at `window_end`.
    fn closed_window(&mut self, window_end: f64) -> Result<()> {
        let model = self.model;
        let (seg_idx, seg) = self.input.active_segment(self.t);
        let _ = seg_idx;
        // input over this window: u(dt) = p + q*dt with dt from self.t
        let (p, q) = match seg.kind {
            SegmentKind::Constant { level } => (level, 0.0),
            SegmentKind::Ramp { .. } => (self.input.eval_unchecked(self.t), {
                match seg.kind {
                    SegmentKind::Ramp { slope, .. } => slope,
                    _ => unreachable!(),
                }
            }),
            _ => unreachable!("closed_window only handles constant/ramp"),
        };
        let m = model.saturation_m;
        let k = model.feedback_k;
        let b = model.feedback_offset();
        let s = model.effective_k();

        // v(dt) = b0 + b1*dt + d*exp(lam*dt), carried in double-double
        let (b0, b1, lam) = match self.region {
            Region::SaturationPos => (Dd::from_f64(m), 0.0, -1.0 / model.tau0),
            Region::SaturationNeg => (Dd::from_f64(-m), 0.0, -1.0 / model.tau0),
            Region::Linear => {
                let q_gamma = q / s;
                let base0 = Dd::from_sum(p, -b)
                    .div_f64(s)
                    .add(Dd::from_prod(q_gamma, self.tau2));
                (base0, q_gamma, 1.0 / self.tau2)
            }
        };
        let d = self.v.sub(b0);
        let d_hi = d.value();
        let t_w = self.t;
        let w = window_end - self.t;
        let xtol = (self.opts.tol * self.tau2).min(w) * 0.25;

        let value = |dt: f64| -> Dd {
            let base = b0.add(Dd::from_prod(b1, dt));
            if d.hi == 0.0 && d.lo == 0.0 {
                return base;
            }
            let x = lam * dt;
            if x > 690.0 {
                return base.add(Dd::from_f64(exp_term(d.value(), x)));
            }
            base.add(d.mul_f64(x.exp()))
        };

        // collect candidate crossings; border exits are direction-aware so
        // that an ulp-misplaced state after a region switch cannot re-fire
        // the same border in the unphysical direction
        let mut hits: Vec<(f64, Hit)> = Vec::new();
        // region borders as output levels: r(dt) = r0 + (q/k)*dt
        let q_border = q / k;
        let border = |r0: f64| (b0.value() - r0, b1 - q_border, d_hi, lam);
        match self.region {
            Region::SaturationPos => {
                // v >= r1 inside; exit = falling crossing
                let (c0, c1, dd, l) = border(model.border_pos_vout(p));
                if let Some(dt) = first_crossing(c0, c1, dd, l, w, xtol, Some(false)) {
                    hits.push((dt, Hit::Border(Region::Linear)));
                }
            }
            Region::SaturationNeg => {
                // v <= r3 inside; exit = rising crossing
                let (c0, c1, dd, l) = border(model.border_neg_vout(p));
                if let Some(dt) = first_crossing(c0, c1, dd, l, w, xtol, Some(true)) {
                    hits.push((dt, Hit::Border(Region::Linear)));
                }
            }
            Region::Linear => {
                let (c0, c1, dd, l) = border(model.border_pos_vout(p));
                if let Some(dt) = first_crossing(c0, c1, dd, l, w, xtol, Some(true)) {
                    hits.push((dt, Hit::Border(Region::SaturationPos)));
                }
                let (c0, c1, dd, l) = border(model.border_neg_vout(p));
                if let Some(dt) = first_crossing(c0, c1, dd, l, w, xtol, Some(false)) {
                    hits.push((dt, Hit::Border(Region::SaturationNeg)));
                }
            }
        }
        for &level in &self.opts.watch_levels {
            if let Some(dt) = first_crossing(b0.value() - level, b1, d_hi, lam, w, xtol, None) {
                let slope_at = b1 + d_hi * lam * (lam * dt).exp();
                let direction = if slope_at >= 0.0 {
                    Direction::Rising
                } else {
                    Direction::Falling
                };
                hits.push((dt, Hit::Watch { level, direction }));
            }
        }

        let earliest = hits
            .iter()
            .map(|(dt, _)| *dt)
            .fold(f64::INFINITY, f64::min);

        if earliest.is_finite() && earliest <= w {
            let t_hit = self.t + earliest;
            self.emit_cadence_upto(t_hit, |tc| value(tc - t_w).value());
            let v_hit = value(earliest);
            self.emit_sample(t_hit, v_hit.value());
            // all hits within the location tolerance of the earliest fire together
            let mut new_region = None;
            for (dt, hit) in hits {
                if dt <= earliest + xtol {
                    match hit {
                        Hit::Border(r) => {
                            self.events.push(Event {
                                t: t_hit,
                                kind: EventKind::RegionCross {
                                    from: self.region,
                                    to: r,
                                },
                            });
                            new_region = Some(r);
                        }
                        Hit::Watch { level, direction } => {
                            self.events.push(Event {
                                t: t_hit,
                                kind: EventKind::ThresholdCross { level, direction },
                            });
                        }
                    }
                }
            }
            // guard against zero-progress border chatter near tangencies
            let t_res = self.t_resolution();
            if t_hit - self.t <= t_res {
                if (t_hit - self.last_flip_t).abs() <= t_res {
                    self.flips_at_t += 1;
                } else {
                    self.flips_at_t = 1;
                    self.last_flip_t = t_hit;
                }
            }
            self.t = if self.flips_at_t > 8 {
                self.flips_at_t = 0;
                t_hit + t_res
            } else {
                t_hit
            };
            self.v = if self.opts.high_precision {
                v_hit
            } else {
                Dd::from_f64(v_hit.value())
            };
            if let Some(r) = new_region {
                self.region = r;
            }
        } else {
            self.emit_cadence_upto(window_end, |tc| value(tc - t_w).value());
            let v_end = value(w);
            self.emit_sample(window_end, v_end.value());
            self.t = window_end;
            self.v = if self.opts.high_precision {
                v_end
            } else {
                Dd::from_f64(v_end.value())
            };
        }
        Ok(())
    }

    /// Advance through one window with the adaptive Dormand-Prince stepper.
    fn numeric_window(&mut self, window_end: f64) -> Result<()> {
        let model = self.model;
        let input = self.input;
        let mut f = |t: f64, v: f64| model.derivative_field(input.eval_unchecked(t), v);
        let atol = 0.05 * self.opts.tol * model.saturation_m;
        let mut t = self.t;
        let mut y = self.v.value();
        let mut fy = f(t, y);
        let mut h = (model.tau0.min(self.tau2 * 20.0)).min(window_end - t) * 0.1;
        let mut steps: u64 = 0;
        let watch = self.opts.watch_levels.clone();
        while t < window_end {
            steps += 1;
            if steps > 10_000_000 {
                return Err(Error::Numeric(format!(
                    "step budget exhausted at t = {t} (tol {})",
                    self.opts.tol
                )));
            }
            let step = dopri5_step(&mut f, t, y, fy, h, window_end - t, atol).ok_or_else(|| {
                Error::Numeric(format!("tolerance {} not achievable at t = {t}", self.opts.tol))
            })?;
            let interp = |tt: f64| hermite(t, y, fy, step.t1, step.y1, step.f1, tt);

            // event detection over the accepted step
            let mut marks: Vec<(f64, Option<Event>, Option<Region>)> = Vec::new();
            let border_gap = |tt: f64, pos: bool| {
                let u = input.eval_unchecked(tt);
                let r = if pos {
                    model.border_pos_vout(u)
                } else {
                    model.border_neg_vout(u)
                };
                interp(tt) - r
            };
            let xtol = (self.opts.tol * self.tau2).min(step.t1 - t).max(0.0) * 0.25;
            for pos in [true, false] {
                let g0 = border_gap(t, pos);
                let g1 = border_gap(step.t1, pos);
                if g0 == 0.0 || g0.signum() == g1.signum() {
                    continue;
                }
                let tc = crate::numeric::bisect(|tt| border_gap(tt, pos), t, step.t1, xtol);
                let to = match (pos, g1 > g0) {
                    (true, true) => Region::SaturationPos,
                    (true, false) => Region::Linear,
                    (false, true) => Region::Linear,
                    (false, false) => Region::SaturationNeg,
                };
                marks.push((
                    tc,
                    Some(Event {
                        t: tc,
                        kind: EventKind::RegionCross {
                            from: self.region,
                            to,
                        },
                    }),
                    Some(to),
                ));
            }
            for &level in &watch {
                let g0 = y - level;
                let g1 = step.y1 - level;
                if g0 == 0.0 || g0.signum() == g1.signum() {
                    continue;
                }
                let tc = crate::numeric::bisect(|tt| interp(tt) - level, t, step.t1, xtol);
                let direction = if g1 > g0 { Direction::Rising } else { Direction::Falling };
                marks.push((
                    tc,
                    Some(Event {
                        t: tc,
                        kind: EventKind::ThresholdCross { level, direction },
                    }),
                    None,
                ));
            }
            marks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            // emit cadence samples and event samples in time order
            let mut upto = t;
            for (tc, ev, reg) in marks {
                self.t = upto;
                self.emit_cadence_upto(tc, interp);
                self.emit_sample(tc, interp(tc));
                if let Some(ev) = ev {
                    self.events.push(ev);
                }
                if let Some(r) = reg {
                    self.region = r;
                }
                upto = tc;
            }
            self.t = upto;
            self.emit_cadence_upto(step.t1, interp);
            self.emit_sample(step.t1, step.y1);

            t = step.t1;
            y = step.y1;
            fy = step.f1;
            h = step.h_next;
            self.t = t;
        }
        self.v = Dd::from_f64(y);
        self.region = model.classify_region(input.eval_unchecked(t), y);
        Ok(())
    }
}

/// `d·e^x` with intermediate-overflow protection for subnormal-scale `d`.
#[inline]
fn exp_term(d: f64, x: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    if x > 690.0 {
        let m = x + d.abs().ln();
        return d.signum() * m.exp();
    }
    d * x.exp()
}

/// Smallest `dt` in (0, w] where `g(dt) = c0 + c1·dt + d·e^(lam·dt)` crosses
/// zero, optionally restricted to one crossing direction (`Some(true)` =
/// rising, i.e. g going negative to positive).
///
/// The pure-exponential case (`c1 == 0`) is solved exactly by a logarithm;
/// otherwise candidates are bracketed around the single extremum and refined
/// by bisection to `xtol`. A zero exactly at dt = 0 counts only if the
/// function actually changes sign just after 0 (sign taken from
/// derivatives). The direction filter is what keeps region switching free of
/// chatter: a state an ulp on the wrong side of a border cannot re-trigger
/// the border it just crossed.
fn first_crossing(
    c0: f64,
    c1: f64,
    d: f64,
    lam: f64,
    w: f64,
    xtol: f64,
    want_rising: Option<bool>,
) -> Option<f64> {
    if !(w > 0.0) {
        return None;
    }
    let g = |dt: f64| c0 + c1 * dt + exp_term(d, lam * dt);
    let accept = |rising: bool| want_rising.map_or(true, |want| want == rising);
    if c1 == 0.0 {
        if d == 0.0 {
            return None;
        }
        // monotone: direction fixed by sign of d*lam
        if !accept(d * lam > 0.0) {
            return None;
        }
        let ratio = -c0 / d;
        if ratio <= 0.0 {
            return None;
        }
        let dt = ratio.ln() / lam;
        if dt > 0.0 && dt <= w {
            return Some(dt);
        }
        return None;
    }
    if d == 0.0 {
        // purely linear gap
        if !accept(c1 > 0.0) {
            return None;
        }
        let dt = -c0 / c1;
        if dt > 0.0 && dt <= w {
            return Some(dt);
        }
        return None;
    }
    // effective sign just after dt = 0
    let mut s0 = c0 + d;
    if s0 == 0.0 {
        s0 = c1 + d * lam;
        if s0 == 0.0 {
            s0 = d * lam * lam;
            if s0 == 0.0 {
                return None;
            }
        }
    }
    // split at the single extremum of g, if inside the window
    let mut breaks = [0.0, w, w];
    let mut n_breaks = 2;
    let r = -c1 / (d * lam);
    if r > 0.0 {
        let dtx = r.ln() / lam;
        if dtx > 0.0 && dtx < w {
            breaks[1] = dtx;
            breaks[2] = w;
            n_breaks = 3;
        }
    }
    let sgn = |x: f64| -> i8 {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut sa = sgn(s0);
    let mut a = 0.0;
    for &bp in breaks.iter().take(n_breaks).skip(1) {
        let gb = g(bp);
        let sb = sgn(gb);
        let crossed = sa != 0 && sb != sa;
        if crossed {
            let rising = if sb != 0 { sb > 0 } else { sa < 0 };
            if accept(rising) {
                if sb == 0 {
                    return Some(bp);
                }
                let mut lo = a;
                let mut hi = bp;
                for _ in 0..200 {
                    if hi - lo <= xtol {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let gm = g(mid);
                    let sm = sgn(gm);
                    if sm == 0 {
                        return Some(mid);
                    }
                    if sm == sa {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
        }
        if sb != 0 {
            sa = sb;
        }
        a = bp;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StModel;
    use crate::waveform::{Segment, SegmentKind, Waveform};

    fn reference_model() -> StModel {
        StModel::new(1000.0, 0.5, 1.0, 0.0, 1e-9).unwrap()
    }

    #[test]
    fn region3_step_matches_decay_solution() {
        // constant input deep in Region 3, starting from gamma1:
        // V_out(t) = (gamma1 - gamma3) * exp(-t/tau3) + gamma3
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let input = Waveform::constant(g.v_h + 10.0 * 2.0 * m.saturation_m / m.gain_a);
        let traj = integrate(&m, &input, g.gamma1, (0.0, 20.0 * m.tau0), 1e-9).unwrap();
        let mut max_err = 0.0f64;
        for s in &traj.samples {
            let exact = (g.gamma1 - g.gamma3) * (-s.t / g.tau3).exp() + g.gamma3;
            max_err = max_err.max((s.v_out - exact).abs());
        }
        assert!(max_err <= 1e-12, "max error {max_err}");
    }

    #[test]
    fn exact_metastable_equilibrium_is_constant() {
        // v_out0 on gamma2 with the matching constant input stays put in
        // exact arithmetic (V_R = 0, level 0 => everything exact)
        let m = reference_model();
        let input = Waveform::constant(m.gamma2_inverse(0.0));
        let traj = integrate(&m, &input, 0.0, (0.0, 1e-6), 1e-9).unwrap();
        for s in &traj.samples {
            assert_eq!(s.v_out, 0.0, "drifted at t = {}", s.t);
        }
    }

    #[test]
    fn region2_then_region3_composition_matches_oracle() {
        // step to V_H + eps with eps inside the Region 2 band; oracle is the
        // analytic composition of the two regional exponentials
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let band = 2.0 * m.saturation_m / m.gain_a;
        let eps = 0.2 * band;
        let v_in = g.v_h + eps;
        let input = Waveform::constant(v_in);
        let tol = 1e-9;
        let traj = integrate(&m, &input, g.gamma1, (0.0, 6.0 * m.tau0), tol).unwrap();

        // oracle, in test code only
        let gamma2 = (v_in - 0.0) / m.effective_k();
        let r3 = m.border_neg_vout(v_in);
        let t_b = g.tau2 * ((gamma2 - r3) / (gamma2 - g.gamma1)).ln();
        let oracle = |t: f64| {
            if t <= t_b {
                gamma2 + (g.gamma1 - gamma2) * (t / g.tau2).exp()
            } else {
                g.gamma3 + (r3 - g.gamma3) * (-(t - t_b) / g.tau3).exp()
            }
        };
        let mut max_err = 0.0f64;
        for s in &traj.samples {
            max_err = max_err.max((s.v_out - oracle(s.t)).abs());
        }
        assert!(max_err <= 10.0 * tol * m.saturation_m, "max err {max_err}");

        // the region crossing event sits at the analytic boundary time
        let cross = traj.first_region_cross(0.0).expect("crossing");
        assert!(matches!(
            cross.kind,
            EventKind::RegionCross { from: Region::Linear, to: Region::SaturationNeg }
        ));
        assert!((cross.t - t_b).abs() <= tol * g.tau2 + 1e-18, "t_b err {}", (cross.t - t_b).abs());
    }

    #[test]
    fn exit_time_examples() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let band = 2.0 * m.saturation_m / m.gain_a;

        // Region 1 with v_in < V_H: stable saturation, never exits
        assert_eq!(region_exit_time(&m, g.v_h - 0.1, 1.0).unwrap(), None);

        // Region 2 small overdrive: close to the paper's approximate transit
        // time tau2 * ln(2M / (A*eps))
        let eps = 1e-5 * band;
        let t = region_exit_time(&m, g.v_h + eps, g.gamma1).unwrap().unwrap();
        let approx = g.tau2 * (2.0 * m.saturation_m / (m.gain_a * eps)).ln();
        assert!(
            ((t - approx) / approx).abs() < 5e-3,
            "exact {t} vs approx {approx}"
        );

        // starting exactly on the 2/3 border: zero transit time
        let t0 = region_exit_time(&m, g.v_h + band, g.gamma1).unwrap().unwrap();
        assert_eq!(t0, 0.0);
    }

    #[test]
    fn numeric_and_closed_form_agree_on_step_input() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let band = 2.0 * m.saturation_m / m.gain_a;
        let input = Waveform::step_to(0.0, g.v_h + 0.2 * band, 2.0 * m.tau0);
        let tol = 1e-9;
        let span = (0.0, 8.0 * m.tau0);
        let closed = integrate(&m, &input, g.gamma1, span, tol).unwrap();
        let numeric = integrate_with(
            &m,
            &input,
            g.gamma1,
            span,
            &IntegrateOptions {
                tol,
                force_numeric: true,
                ..IntegrateOptions::default()
            },
        )
        .unwrap();
        // compare at shared cadence times
        let mut max_err = 0.0f64;
        for (a, b) in closed.samples.iter().zip(numeric.samples.iter()) {
            if (a.t - b.t).abs() < 1e-20 {
                max_err = max_err.max((a.v_out - b.v_out).abs());
            }
        }
        assert!(
            max_err <= 10.0 * tol * m.saturation_m,
            "closed-form vs numeric max err {max_err}"
        );
    }

    #[test]
    fn ramp_window_closed_form_matches_numeric() {
        // ramp crossing the thresholds exercises the moving-boundary solve
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let input = Waveform::ramp_and_hold(0.0, 0.2e9, g.v_h + 0.05).unwrap();
        let tol = 1e-10;
        let span = (0.0, 12.0 * m.tau0);
        let closed = integrate(&m, &input, g.gamma1, span, tol).unwrap();
        let numeric = integrate_with(
            &m,
            &input,
            g.gamma1,
            span,
            &IntegrateOptions {
                tol,
                force_numeric: true,
                ..IntegrateOptions::default()
            },
        )
        .unwrap();
        let mut max_err = 0.0f64;
        for (a, b) in closed.samples.iter().zip(numeric.samples.iter()) {
            if (a.t - b.t).abs() < 1e-20 {
                max_err = max_err.max((a.v_out - b.v_out).abs());
            }
        }
        assert!(max_err <= 1e-7 * m.saturation_m, "ramp max err {max_err}");
        // and the trajectory must end in negative saturation
        assert!(closed.final_sample().v_out < -0.9);
    }

    #[test]
    fn watch_level_events_are_emitted_exactly() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let input = Waveform::constant(g.v_h + 0.1);
        let opts = IntegrateOptions {
            watch_levels: vec![0.0],
            ..IntegrateOptions::default()
        };
        let traj = integrate_with(&m, &input, g.gamma1, (0.0, 10.0 * m.tau0), &opts).unwrap();
        let ev = traj
            .events
            .iter()
            .find(|e| matches!(e.kind, EventKind::ThresholdCross { .. }))
            .expect("threshold event");
        // pure Region 3 decay from M toward -M crosses 0 at tau0*ln(2)
        let expect = m.tau0 * 2.0f64.ln();
        assert!((ev.t - expect).abs() < 1e-18, "event t {} vs {expect}", ev.t);
        match ev.kind {
            EventKind::ThresholdCross { level, direction } => {
                assert_eq!(level, 0.0);
                assert_eq!(direction, Direction::Falling);
            }
            _ => unreachable!(),
        }
        // the crossing is also a sample, so interpolation finds it exactly
        let t_cross = traj.first_crossing(0.0, 0.0).unwrap();
        assert!((t_cross - expect).abs() < 1e-18);
    }

    #[test]
    fn samples_strictly_increasing_and_regions_consistent() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let input = Waveform::step_to(0.0, g.v_h + 0.01, 1e-9);
        let traj = integrate(&m, &input, g.gamma1, (0.0, 10e-9), 1e-9).unwrap();
        for pair in traj.samples.windows(2) {
            assert!(pair[1].t > pair[0].t);
        }
        for s in &traj.samples {
            assert_eq!(s.region, m.classify_region(s.v_in, s.v_out));
        }
    }

    #[test]
    fn deterministic_runs_are_bit_identical() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let input = Waveform::new(vec![Segment {
            t_start: 0.0,
            kind: SegmentKind::Sine {
                offset: g.v_h,
                amplitude: 0.01,
                frequency_hz: 5e7,
                phase: 0.0,
            },
        }])
        .unwrap();
        let a = integrate(&m, &input, g.gamma1, (0.0, 4e-8), 1e-9).unwrap();
        let b = integrate(&m, &input, g.gamma1, (0.0, 4e-8), 1e-9).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        for (x, y) in a.samples.iter().zip(b.samples.iter()) {
            assert_eq!(x.t.to_bits(), y.t.to_bits());
            assert_eq!(x.v_out.to_bits(), y.v_out.to_bits());
        }
    }

    #[test]
    fn monotone_sign_between_region_crossings() {
        // the sign of successive differences stays fixed between gamma-line
        // crossings for constant inputs
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let input = Waveform::constant(g.v_h + 1e-4);
        let traj = integrate(&m, &input, g.gamma1, (0.0, 10.0 * m.tau0), 1e-9).unwrap();
        let mut sign = 0i8;
        for pair in traj.samples.windows(2) {
            let d = pair[1].v_out - pair[0].v_out;
            if d.abs() <= 1e-15 {
                continue;
            }
            let s = if d > 0.0 { 1 } else { -1 };
            if sign == 0 {
                sign = s;
            }
            assert_eq!(s, sign, "sign change at t = {}", pair[1].t);
        }
    }

    #[test]
    fn rejects_bad_preconditions() {
        let m = reference_model();
        let w = Waveform::constant(0.0);
        assert!(integrate(&m, &w, 0.0, (1.0, 0.5), 1e-9).is_err());
        assert!(integrate(&m, &w, 0.0, (0.0, 1.0), 0.0).is_err());
        assert!(integrate(&m, &w, 0.0, (0.0, 1.0), 1e-2).is_err());
        assert!(integrate(&m, &w, 7.0, (0.0, 1.0), 1e-9).is_err());
        let late = Waveform::step_to(0.0, 1.0, 5.0);
        assert!(integrate(&m, &late, 0.0, (0.0, 10.0), 1e-9).is_err());
    }

    #[test]
    fn high_precision_pins_offset_levels() {
        // pin at c = 0.9 with the rounded inverse input; deviation growth is
        // e^(t/tau2), so surviving 25*tau2 needs the double-double path
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let c = 0.9;
        let input = Waveform::constant(m.gamma2_inverse(c));
        let opts = IntegrateOptions {
            high_precision: true,
            ..IntegrateOptions::default()
        };
        let traj = integrate_with(&m, &input, c, (0.0, 25.0 * g.tau2), &opts).unwrap();
        for s in &traj.samples {
            assert!(
                (s.v_out - c).abs() <= 1e-3 * m.saturation_m,
                "lost the pin at t = {} ({} vs {c})",
                s.t,
                s.v_out
            );
        }
    }
}
