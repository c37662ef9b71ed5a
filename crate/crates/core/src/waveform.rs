//! Input waveforms as ordered analytic segments.
//!
//! Segments are analytic (constant / linear / sinusoid / exponential) rather
//! than sampled arrays so that the integrator can locate events exactly and
//! slope queries need no numerical differentiation. Sampled data (CSV) is
//! converted to piecewise-linear segments on import.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Read;

/// Analytic shape of one segment; time is measured from the segment start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Constant {
        level: f64,
    },
    Ramp {
        v0: f64,
        slope: f64,
    },
    /// `offset + amplitude·sin(2π·frequency_hz·Δt + phase)`
    Sine {
        offset: f64,
        amplitude: f64,
        frequency_hz: f64,
        phase: f64,
    },
    /// Exponential with anchor `v_inf` and start value `v0`.
    ///
    /// Convergent form (`divergent = false`): `v_inf + (v0 − v_inf)·e^(−Δt/τ)`,
    /// approaching `v_inf`. Divergent form: `v_inf + (v0 − v_inf)·e^(+Δt/τ)`,
    /// moving away from the anchor through `v0` (the unstable latch-resolution
    /// shape).
    Exp {
        v_inf: f64,
        v0: f64,
        tau: f64,
        #[serde(default)]
        divergent: bool,
    },
}

/// One waveform segment, active from `t_start` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    #[serde(flatten)]
    pub kind: SegmentKind,
}

impl Segment {
    fn value(&self, t: f64) -> f64 {
        let dt = t - self.t_start;
        match self.kind {
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

    fn derivative(&self, t: f64) -> f64 {
        let dt = t - self.t_start;
        match self.kind {
            SegmentKind::Constant { .. } => 0.0,
            SegmentKind::Ramp { slope, .. } => slope,
            SegmentKind::Sine {
                amplitude,
                frequency_hz,
                phase,
                ..
            } => {
                let w = 2.0 * std::f64::consts::PI * frequency_hz;
                amplitude * w * (w * dt + phase).cos()
            }
            SegmentKind::Exp {
                v_inf,
                v0,
                tau,
                divergent,
            } => {
                if divergent {
                    (v0 - v_inf) / tau * (dt / tau).exp()
                } else {
                    (v_inf - v0) / tau * (-dt / tau).exp()
                }
            }
        }
    }

    /// Largest |derivative| over `[a, b]` (segment-local times).
    fn max_abs_slope(&self, a: f64, b: f64) -> f64 {
        match self.kind {
            SegmentKind::Constant { .. } => 0.0,
            SegmentKind::Ramp { slope, .. } => slope.abs(),
            SegmentKind::Sine {
                amplitude,
                frequency_hz,
                phase,
                ..
            } => {
                let w = 2.0 * std::f64::consts::PI * frequency_hz;
                let peak = amplitude.abs() * w;
                // |cos| attains 1 at multiples of pi
                let pa = w * (a - self.t_start) + phase;
                let pb = w * (b - self.t_start) + phase;
                if contains_multiple_of(pa.min(pb), pa.max(pb), std::f64::consts::PI, 0.0) {
                    peak
                } else {
                    (self.derivative(a).abs()).max(self.derivative(b).abs())
                }
            }
            SegmentKind::Exp { divergent, .. } => {
                // |derivative| is monotone in time: max at whichever end
                if divergent {
                    self.derivative(b).abs()
                } else {
                    self.derivative(a).abs()
                }
            }
        }
    }

    /// Whether the segment value is monotone (non-decreasing or
    /// non-increasing as selected by `increasing`) over `[a, b]`.
    fn is_monotone(&self, a: f64, b: f64, increasing: bool) -> bool {
        match self.kind {
            SegmentKind::Constant { .. } => true,
            SegmentKind::Ramp { slope, .. } => {
                if increasing {
                    slope >= 0.0
                } else {
                    slope <= 0.0
                }
            }
            SegmentKind::Sine {
                amplitude,
                frequency_hz,
                phase,
                ..
            } => {
                if amplitude == 0.0 {
                    return true;
                }
                // monotone iff no interior derivative sign change: cos has a
                // zero at pi/2 + n*pi
                let w = 2.0 * std::f64::consts::PI * frequency_hz;
                let pa = w * (a - self.t_start) + phase;
                let pb = w * (b - self.t_start) + phase;
                if contains_multiple_of(
                    pa.min(pb),
                    pb.max(pa),
                    std::f64::consts::PI,
                    std::f64::consts::FRAC_PI_2,
                ) {
                    return false;
                }
                let d = self.derivative(0.5 * (a + b));
                if increasing {
                    d >= 0.0
                } else {
                    d <= 0.0
                }
            }
            SegmentKind::Exp { v_inf, v0, divergent, .. } => {
                let rising = if divergent { v0 > v_inf } else { v_inf > v0 };
                v0 == v_inf || (rising == increasing)
            }
        }
    }
}

/// `true` if the open-ish interval `[lo, hi]` contains `offset + n*period`.
fn contains_multiple_of(lo: f64, hi: f64, period: f64, offset: f64) -> bool {
    let n = ((lo - offset) / period).ceil();
    offset + n * period <= hi
}

/// Continuity information for one segment joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointReport {
    pub t: f64,
    pub left: f64,
    pub right: f64,
    pub gap: f64,
}

/// Time-domain input signal: ordered analytic segments, defined for all
/// `t >= t_min()`. The last segment extends indefinitely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    segments: Vec<Segment>,
}

impl Waveform {
    /// Build from segments; they must be ordered by strictly increasing
    /// `t_start`.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidInput("waveform needs at least one segment".into()));
        }
        for pair in segments.windows(2) {
            if !(pair[1].t_start > pair[0].t_start) {
                return Err(Error::InvalidInput(format!(
                    "segment t_start values must strictly increase ({} then {})",
                    pair[0].t_start, pair[1].t_start
                )));
            }
        }
        if segments.iter().any(|s| !s.t_start.is_finite()) {
            return Err(Error::InvalidInput("segment t_start must be finite".into()));
        }
        if let Some(s) = segments.iter().find(|s| {
            matches!(s.kind, SegmentKind::Exp { tau, .. } if !(tau > 0.0))
                || matches!(s.kind, SegmentKind::Sine { frequency_hz, .. } if !(frequency_hz > 0.0))
        }) {
            return Err(Error::InvalidInput(format!(
                "non-positive tau or frequency in segment at t = {}",
                s.t_start
            )));
        }
        Ok(Waveform { segments })
    }

    /// Single constant level from t = 0.
    pub fn constant(level: f64) -> Waveform {
        Waveform {
            segments: vec![Segment {
                t_start: 0.0,
                kind: SegmentKind::Constant { level },
            }],
        }
    }

    /// Step between two constant levels at `t_step`.
    pub fn step_to(level_before: f64, level_after: f64, t_step: f64) -> Waveform {
        Waveform {
            segments: vec![
                Segment {
                    t_start: t_step - 1.0,
                    kind: SegmentKind::Constant { level: level_before },
                },
                Segment {
                    t_start: t_step,
                    kind: SegmentKind::Constant { level: level_after },
                },
            ],
        }
    }

    /// Ramp from `v0` at the given slope, then hold at `v_stop`.
    ///
    /// The ramp starts at t = 0; the hold begins when the ramp reaches
    /// `v_stop`, so the joint is value-continuous. Errors when the slope
    /// direction cannot reach `v_stop`.
    pub fn ramp_and_hold(v0: f64, slope: f64, v_stop: f64) -> Result<Waveform> {
        if v_stop == v0 {
            return Ok(Waveform::constant(v0));
        }
        if slope == 0.0 || (v_stop - v0).signum() != slope.signum() {
            return Err(Error::InvalidInput(format!(
                "slope {slope} cannot reach v_stop = {v_stop} from v0 = {v0}"
            )));
        }
        let t_hold = (v_stop - v0) / slope;
        Waveform::new(vec![
            Segment {
                t_start: 0.0,
                kind: SegmentKind::Ramp { v0, slope },
            },
            Segment {
                t_start: t_hold,
                kind: SegmentKind::Constant { level: v_stop },
            },
        ])
    }

    /// Latch-resolution stimulus: constant at `v_meta` until `t_onset`, then
    /// an exponential settling from `v_meta` toward `v_rail` with time
    /// constant `tau_c`.
    pub fn latch_resolution_input(v_meta: f64, v_rail: f64, tau_c: f64, t_onset: f64) -> Result<Waveform> {
        if !(tau_c > 0.0) {
            return Err(Error::InvalidInput("tau_c must be positive".into()));
        }
        let exp = Segment {
            t_start: t_onset,
            kind: SegmentKind::Exp {
                v_inf: v_rail,
                v0: v_meta,
                tau: tau_c,
                divergent: false,
            },
        };
        if t_onset <= 0.0 {
            return Waveform::new(vec![exp]);
        }
        Waveform::new(vec![
            Segment {
                t_start: 0.0,
                kind: SegmentKind::Constant { level: v_meta },
            },
            exp,
        ])
    }

    /// Import a sampled waveform from CSV (`t,v` columns, header required),
    /// converted to piecewise-linear segments with a final hold.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Waveform> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        {
            let hdr = rdr
                .headers()
                .map_err(|e| Error::Parse(format!("csv header: {e}")))?;
            if hdr.len() < 2 || hdr.get(0).map(str::trim) != Some("t") || hdr.get(1).map(str::trim) != Some("v")
            {
                return Err(Error::Parse(format!(
                    "expected csv header 't,v', found {:?}",
                    hdr.iter().collect::<Vec<_>>()
                )));
            }
        }
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("csv row {}: {e}", i + 2)))?;
            let parse = |field: usize| -> Result<f64> {
                rec.get(field)
                    .ok_or_else(|| Error::Parse(format!("csv row {}: missing column", i + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("csv row {}: {e}", i + 2)))
            };
            points.push((parse(0)?, parse(1)?));
        }
        if points.is_empty() {
            return Err(Error::Parse("csv waveform has no data rows".into()));
        }
        let mut segments = Vec::with_capacity(points.len());
        for w in points.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if !(t1 > t0) {
                return Err(Error::Parse(format!("csv times must strictly increase at t = {t1}")));
            }
            segments.push(Segment {
                t_start: t0,
                kind: SegmentKind::Ramp {
                    v0,
                    slope: (v1 - v0) / (t1 - t0),
                },
            });
        }
        let (t_last, v_last) = *points.last().unwrap();
        segments.push(Segment {
            t_start: t_last,
            kind: SegmentKind::Constant { level: v_last },
        });
        Waveform::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Earliest defined time.
    pub fn t_min(&self) -> f64 {
        self.segments[0].t_start
    }

    fn segment_index_at(&self, t: f64) -> usize {
        match self
            .segments
            .binary_search_by(|s| s.t_start.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// End of the segment active at index `i` (start of the next segment).
    pub(crate) fn segment_end(&self, i: usize) -> f64 {
        self.segments.get(i + 1).map_or(f64::INFINITY, |s| s.t_start)
    }

    pub(crate) fn active_segment(&self, t: f64) -> (usize, &Segment) {
        let i = self.segment_index_at(t);
        (i, &self.segments[i])
    }

    /// Evaluate the waveform. Errors for queries before the first segment.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("eval at non-finite t = {t}")));
        }
        if t < self.t_min() {
            return Err(Error::InvalidInput(format!(
                "eval at t = {t} before waveform start {}",
                self.t_min()
            )));
        }
        Ok(self.segments[self.segment_index_at(t)].value(t))
    }

    /// Evaluate without the span check (for internal hot paths that already
    /// validated the span).
    #[inline]
    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        self.segments[self.segment_index_at(t)].value(t)
    }

    /// Analytic time derivative at `t` (right-derivative at joints).
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if t < self.t_min() {
            return Err(Error::InvalidInput(format!(
                "derivative at t = {t} before waveform start"
            )));
        }
        Ok(self.segments[self.segment_index_at(t)].derivative(t))
    }

    /// Value-continuity report for every segment joint. Steps are legal;
    /// this only reports them.
    pub fn continuity_report(&self) -> Vec<JointReport> {
        self.segments
            .windows(2)
            .map(|pair| {
                let t = pair[1].t_start;
                let left = pair[0].value(t);
                let right = pair[1].value(t);
                JointReport {
                    t,
                    left,
                    right,
                    gap: right - left,
                }
            })
            .collect()
    }

    /// Whether the waveform is non-decreasing over `[a, b]`, using analytic
    /// derivatives per segment and checking joint jumps.
    pub fn is_non_decreasing(&self, a: f64, b: f64) -> bool {
        self.is_monotone(a, b, true)
    }

    /// Whether the waveform is non-increasing over `[a, b]`.
    pub fn is_non_increasing(&self, a: f64, b: f64) -> bool {
        self.is_monotone(a, b, false)
    }

    fn is_monotone(&self, a: f64, b: f64, increasing: bool) -> bool {
        if b < a || a < self.t_min() {
            return false;
        }
        let (i0, _) = self.active_segment(a);
        let (i1, _) = self.active_segment(b);
        for i in i0..=i1 {
            let seg = &self.segments[i];
            let lo = seg.t_start.max(a);
            let hi = self.segment_end(i).min(b);
            if !seg.is_monotone(lo, hi, increasing) {
                return false;
            }
            // joint jump into the next active segment
            if i < i1 {
                let t = self.segments[i + 1].t_start;
                let gap = self.segments[i + 1].value(t) - seg.value(t);
                if (increasing && gap < 0.0) || (!increasing && gap > 0.0) {
                    return false;
                }
            }
        }
        true
    }

    /// `sup |dV/dt|` over `[a, b]`, analytic per segment. Divergent
    /// exponential segments are unbounded on unbounded spans.
    pub fn max_abs_slope(&self, a: f64, b: f64) -> Result<f64> {
        if !(b >= a) || a < self.t_min() {
            return Err(Error::InvalidInput(format!("bad slope query span [{a}, {b}]")));
        }
        let (i0, _) = self.active_segment(a);
        let (i1, _) = self.active_segment(b);
        let mut best = 0.0f64;
        for i in i0..=i1 {
            let seg = &self.segments[i];
            let lo = seg.t_start.max(a);
            let hi = self.segment_end(i).min(b);
            best = best.max(seg.max_abs_slope(lo, hi));
        }
        Ok(best)
    }
}
