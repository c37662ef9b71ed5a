//! Clipped-linear dynamic model of a Schmitt-Trigger.
//!
//! The circuit is an inverting comparator with gain `A`, symmetric output
//! saturation at `±M`, a resistive feedback divider (fraction `k`, optional
//! reference shift `V_R`) and a single-pole output low-pass with time
//! constant `τ₀`. The whole dynamic behavior reduces to one canonical field
//!
//! ```text
//! V_out' = (clip(A·((1−k)·V_R + k·V_out − V_in), −M, +M) − V_out) / τ₀
//! ```
//!
//! from which the three operating regions, their rest lines γ₁/γ₂/γ₃, the
//! per-region time constants and the switching thresholds V_H/V_L all
//! follow. Implementing the single clipped formula (instead of switching
//! between three ODE branches) makes the field continuous by construction.
//!
//! Model assumptions: saturation is symmetric, and the loading of the
//! feedback divider on the output node is neglected, so the saturation rest
//! lines sit exactly at ±M.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parameters of the clipped-linear Schmitt-Trigger model.
///
/// Construct through [`StModel::new`], which enforces the bistable regime
/// `k·A > 1`; with `k·A ≤ 1` the circuit degenerates to a discriminator
/// without hysteresis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StModel {
    /// Amplifier gain A (> 0, dimensionless).
    pub gain_a: f64,
    /// Feedback fraction k, 0 < k < 1.
    pub feedback_k: f64,
    /// Symmetric saturation magnitude M in volts (> 0).
    pub saturation_m: f64,
    /// Reference voltage V_R in volts (shifts the thresholds by (1−k)·V_R).
    pub ref_v: f64,
    /// Output low-pass time constant τ₀ = R₀C₀ in seconds (> 0).
    pub tau0: f64,
}

/// Operating region of the clipped amplifier in the (V_in, V_out) plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Region 1: amplifier clipped at +M.
    SaturationPos,
    /// Region 2: amplifier in its linear range.
    Linear,
    /// Region 3: amplifier clipped at −M.
    SaturationNeg,
}

impl Region {
    /// Compact name used in CSV output.
    pub fn as_str(self) -> &'static str {
        match self {
            Region::SaturationPos => "sat_pos",
            Region::Linear => "linear",
            Region::SaturationNeg => "sat_neg",
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Derived geometry of the phase plane: rest lines, time constants and
/// switching thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Rest level of Region 1 (= +M).
    pub gamma1: f64,
    /// Rest level of Region 3 (= −M).
    pub gamma3: f64,
    /// Region 1 time constant (= τ₀).
    pub tau1: f64,
    /// Region 2 (metastability) time constant τ₀/(k·A − 1).
    pub tau2: f64,
    /// Region 3 time constant (= τ₀).
    pub tau3: f64,
    /// Upper switching threshold.
    pub v_h: f64,
    /// Lower switching threshold.
    pub v_l: f64,
    /// Hysteresis width v_h − v_l = 2·M·(k − 1/A).
    pub hysteresis: f64,
    /// Slope of the γ₂ line, 1/(k − 1/A).
    pub gamma2_slope: f64,
}

impl StModel {
    /// Validated constructor; rejects parameter sets outside the bistable
    /// Schmitt-Trigger regime.
    pub fn new(gain_a: f64, feedback_k: f64, saturation_m: f64, ref_v: f64, tau0: f64) -> Result<Self> {
        let m = StModel {
            gain_a,
            feedback_k,
            saturation_m,
            ref_v,
            tau0,
        };
        m.validate()?;
        Ok(m)
    }

    /// Re-check all model invariants.
    pub fn validate(&self) -> Result<()> {
        let all_finite = self.gain_a.is_finite()
            && self.feedback_k.is_finite()
            && self.saturation_m.is_finite()
            && self.ref_v.is_finite()
            && self.tau0.is_finite();
        if !all_finite {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        if self.gain_a <= 0.0 {
            return Err(Error::InvalidModel("gain_a must be positive".into()));
        }
        if !(self.feedback_k > 0.0 && self.feedback_k < 1.0) {
            return Err(Error::InvalidModel("feedback_k must lie in (0, 1)".into()));
        }
        if self.saturation_m <= 0.0 {
            return Err(Error::InvalidModel("saturation_m must be positive".into()));
        }
        if self.tau0 <= 0.0 {
            return Err(Error::InvalidModel("tau0 must be positive".into()));
        }
        if self.feedback_k * self.gain_a <= 1.0 {
            return Err(Error::InvalidModel(format!(
                "discriminator regime: feedback_k * gain_a = {} must exceed 1 for hysteresis",
                self.feedback_k * self.gain_a
            )));
        }
        Ok(())
    }

    /// Feedback-path offset (1−k)·V_R seen at the non-inverting input.
    #[inline]
    pub fn feedback_offset(&self) -> f64 {
        (1.0 - self.feedback_k) * self.ref_v
    }

    /// Effective feedback slope k − 1/A (the inverse γ₂ slope).
    #[inline]
    pub fn effective_k(&self) -> f64 {
        self.feedback_k - 1.0 / self.gain_a
    }

    /// Derive rest lines, time constants and thresholds.
    ///
    /// The thresholds come from the saturation self-consistency condition:
    /// positive saturation holds exactly while
    /// `A·((1−k)·V_R + k·M − v_in) ≥ M`, which breaks at
    /// `v_in = (1−k)·V_R + M·(k − 1/A) = V_H` (and mirrored for V_L).
    pub fn derive_geometry(&self) -> Result<Geometry> {
        self.validate()?;
        let m = self.saturation_m;
        let b = self.feedback_offset();
        let s = self.effective_k();
        let tau2 = self.tau0 / (self.feedback_k * self.gain_a - 1.0);
        Ok(Geometry {
            gamma1: m,
            gamma3: -m,
            tau1: self.tau0,
            tau2,
            tau3: self.tau0,
            v_h: b + m * s,
            v_l: b - m * s,
            hysteresis: 2.0 * m * s,
            gamma2_slope: 1.0 / s,
        })
    }

    /// Amplifier output: `clip(A·((1−k)·V_R + k·v_out − v_in), −M, +M)`.
    #[inline]
    pub fn amp_output(&self, v_in: f64, v_out: f64) -> f64 {
        self.amp_unclipped(v_in, v_out)
            .clamp(-self.saturation_m, self.saturation_m)
    }

    /// Amplifier output before clipping.
    #[inline]
    pub fn amp_unclipped(&self, v_in: f64, v_out: f64) -> f64 {
        self.gain_a * (self.feedback_offset() + self.feedback_k * v_out - v_in)
    }

    /// The canonical derivative field `V_out' = (amp_output − v_out)/τ₀`,
    /// continuous and piecewise-linear over the whole phase plane.
    #[inline]
    pub fn derivative_field(&self, v_in: f64, v_out: f64) -> f64 {
        (self.amp_output(v_in, v_out) - v_out) / self.tau0
    }

    /// Classify a phase-plane point. Points exactly on a region border are
    /// assigned to the adjacent saturation region; the field is continuous
    /// there, so the tie-break only fixes determinism.
    #[inline]
    pub fn classify_region(&self, v_in: f64, v_out: f64) -> Region {
        let raw = self.amp_unclipped(v_in, v_out);
        if raw >= self.saturation_m {
            Region::SaturationPos
        } else if raw <= -self.saturation_m {
            Region::SaturationNeg
        } else {
            Region::Linear
        }
    }

    /// Metastable rest level for a given input,
    /// `γ₂(v_in) = (v_in − (1−k)·V_R)/(k − 1/A)`.
    ///
    /// Errors when the rest point falls outside `[γ₃, γ₁]`, i.e. when no
    /// metastable point exists for this input.
    pub fn gamma2(&self, v_in: f64) -> Result<f64> {
        let level = self.gamma2_unchecked(v_in);
        if level.abs() > self.saturation_m {
            return Err(Error::InvalidInput(format!(
                "gamma2 rest point {level} outside [-M, M] for v_in = {v_in}"
            )));
        }
        Ok(level)
    }

    #[inline]
    pub(crate) fn gamma2_unchecked(&self, v_in: f64) -> f64 {
        (v_in - self.feedback_offset()) / self.effective_k()
    }

    /// Input that pins the metastable rest point at `v_out`:
    /// `γ₂⁻¹(c) = (1−k)·V_R + c·(k − 1/A)`.
    #[inline]
    pub fn gamma2_inverse(&self, v_out: f64) -> f64 {
        self.feedback_offset() + v_out * self.effective_k()
    }

    /// Input value of the Region 1/2 border at a given output level.
    #[inline]
    pub fn border_pos_vin(&self, v_out: f64) -> f64 {
        self.feedback_offset() + self.feedback_k * v_out - self.saturation_m / self.gain_a
    }

    /// Input value of the Region 2/3 border at a given output level.
    #[inline]
    pub fn border_neg_vin(&self, v_out: f64) -> f64 {
        self.feedback_offset() + self.feedback_k * v_out + self.saturation_m / self.gain_a
    }

    /// Output level of the Region 1/2 border at a given input (Region 1 is
    /// at or above this level).
    #[inline]
    pub fn border_pos_vout(&self, v_in: f64) -> f64 {
        (v_in - self.feedback_offset() + self.saturation_m / self.gain_a) / self.feedback_k
    }

    /// Output level of the Region 2/3 border at a given input (Region 3 is
    /// at or below this level).
    #[inline]
    pub fn border_neg_vout(&self, v_in: f64) -> f64 {
        (v_in - self.feedback_offset() - self.saturation_m / self.gain_a) / self.feedback_k
    }

    /// Rest level and time constant of a region: (γ, τ, unstable).
    pub(crate) fn region_dynamics(&self, region: Region, v_in: f64) -> (f64, f64, bool) {
        match region {
            Region::SaturationPos => (self.saturation_m, self.tau0, false),
            Region::SaturationNeg => (-self.saturation_m, self.tau0, false),
            Region::Linear => (
                self.gamma2_unchecked(v_in),
                self.tau0 / (self.feedback_k * self.gain_a - 1.0),
                true,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::bisect;

    fn reference_model() -> StModel {
        StModel::new(1000.0, 0.5, 1.0, 0.0, 1e-9).unwrap()
    }

    #[test]
    fn ideal_gain_limit_recovers_2mk_hysteresis() {
        let m = StModel::new(1e9, 0.5, 1.0, 0.0, 1e-9).unwrap();
        let g = m.derive_geometry().unwrap();
        assert!((g.hysteresis - 1.0).abs() < 5e-9, "hysteresis {}", g.hysteresis);
        assert_eq!(g.hysteresis, 2.0 * 1.0 * (0.5 - 1e-9));
    }

    #[test]
    fn discriminator_regime_is_rejected() {
        let err = StModel::new(1000.0, 0.001, 1.0, 0.0, 1e-9).unwrap_err();
        match err {
            Error::InvalidModel(msg) => assert!(msg.contains("discriminator"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn reference_thresholds_and_tau2() {
        let g = reference_model().derive_geometry().unwrap();
        assert!((g.v_h - 0.499).abs() < 1e-15);
        assert!((g.v_l + 0.499).abs() < 1e-15);
        assert!((g.tau2 - 1e-9 / 499.0).abs() < 1e-24);
        assert_eq!(g.tau1, 1e-9);
        assert_eq!(g.tau3, 1e-9);
        assert_eq!(g.gamma1, 1.0);
        assert_eq!(g.gamma3, -1.0);
    }

    #[test]
    fn threshold_matches_root_of_clip_condition() {
        // Independent check of V_H: root-find the input where the positive
        // saturation self-consistency A·((1-k)V_R + k·M - v_in) - M changes
        // sign.
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        let clip_margin =
            |v_in: f64| m.gain_a * (m.feedback_offset() + m.feedback_k * m.saturation_m - v_in) - m.saturation_m;
        let root = bisect(clip_margin, 0.0, 1.0, 0.0);
        assert!((root - g.v_h).abs() < 1e-12, "root {root} vs v_h {}", g.v_h);
    }

    #[test]
    fn thresholds_symmetric_about_feedback_offset() {
        let m = StModel::new(200.0, 0.4, 1.5, 0.7, 2e-9).unwrap();
        let g = m.derive_geometry().unwrap();
        let center = (1.0 - m.feedback_k) * m.ref_v;
        assert!(((g.v_h + g.v_l) * 0.5 - center).abs() < 1e-12);
        assert!(g.v_h > g.v_l);
    }

    #[test]
    fn amp_output_saturates_and_clips_exactly() {
        let m = reference_model();
        // far below the left border: deep positive saturation
        assert_eq!(m.amp_output(-10.0, 0.0), 1.0);
        // exactly on the border lines the clip value is hit exactly
        let v_out = 0.3;
        assert_eq!(m.amp_output(m.border_pos_vin(v_out), v_out), 1.0);
        assert_eq!(m.amp_output(m.border_neg_vin(v_out), v_out), -1.0);
        // inside the linear range: direct evaluation
        assert_eq!(m.amp_output(0.0005, 0.0), -0.5);
    }

    #[test]
    fn field_is_zero_on_rest_lines() {
        let m = reference_model();
        // Region 1 rest point
        assert_eq!(m.derivative_field(-2.0, 1.0), 0.0);
        // metastable rest point: any point on gamma2
        let v_in = m.gamma2_inverse(0.25);
        assert!(m.derivative_field(v_in, 0.25).abs() < 1e-12 * 1e9);
        // deep Region 3 with v_out = +M
        let f = m.derivative_field(5.0, 1.0);
        assert_eq!(f, (-1.0 - 1.0) / 1e-9);
    }

    #[test]
    fn classify_examples() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        assert_eq!(m.classify_region(g.v_l - 0.1, 1.0), Region::SaturationPos);
        // v_in = V_H + 0.1 with v_out = M: unclipped = 1000*(0.5 - 0.599) = -99
        assert_eq!(m.classify_region(g.v_h + 0.1, 1.0), Region::SaturationNeg);
        // boundary tie-break goes to the saturation side
        let v_out = -0.2;
        assert_eq!(m.classify_region(m.border_pos_vin(v_out), v_out), Region::SaturationPos);
        assert_eq!(m.classify_region(m.border_neg_vin(v_out), v_out), Region::SaturationNeg);
        // strictly inside
        assert_eq!(m.classify_region(m.gamma2_inverse(v_out), v_out), Region::Linear);
    }

    #[test]
    fn gamma2_examples_and_range_check() {
        let m = reference_model();
        let g = m.derive_geometry().unwrap();
        assert_eq!(m.gamma2_inverse(0.0), 0.0);
        assert!((m.gamma2_inverse(0.5) - 0.2495).abs() < 1e-15);
        // gamma2 line meets the Region 1 corner: c = M maps to V_H
        assert!((m.gamma2_inverse(1.0) - g.v_h).abs() < 1e-15);
        assert!((m.gamma2(g.v_h).unwrap() - 1.0).abs() < 1e-12);
        // outside the band: no metastable point
        assert!(m.gamma2(g.v_h + 0.01).is_err());
    }

    #[test]
    fn field_continuity_across_borders() {
        let m = reference_model();
        let scale = m.saturation_m / m.tau0;
        for &v_out in &[-0.9, -0.3, 0.0, 0.4, 0.95] {
            for border in [m.border_pos_vin(v_out), m.border_neg_vin(v_out)] {
                let delta = 1e-10 * m.saturation_m / m.gain_a;
                let jump = (m.derivative_field(border - delta, v_out)
                    - m.derivative_field(border + delta, v_out))
                .abs();
                assert!(jump <= 1e-9 * scale, "jump {jump} at border {border}");
            }
        }
    }

    #[test]
    fn field_sign_pattern_around_gamma2() {
        let m = reference_model();
        for &c in &[-0.8, -0.1, 0.3, 0.9] {
            let pin = m.gamma2_inverse(c);
            let eps = 0.2 * m.saturation_m / m.gain_a;
            // left of gamma2 the output is pulled up, right of it down
            assert!(m.derivative_field(pin - eps, c) > 0.0);
            assert!(m.derivative_field(pin + eps, c) < 0.0);
        }
        // everywhere in Region 1 below gamma1 the output rises
        assert!(m.derivative_field(-3.0, 0.2) > 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_model() -> impl Strategy<Value = StModel> {
            (
                10.0f64..1e6,
                0.1f64..0.9,
                0.1f64..5.0,
                -1.0f64..1.0,
                1e-12f64..1e-6,
            )
                .prop_filter_map("need bistable regime", |(a, k, m, vr, tau)| {
                    StModel::new(a, k, m, vr, tau).ok()
                })
        }

        proptest! {
            #[test]
            fn gamma2_roundtrip_is_identity(m in arb_model(), c in -0.999f64..0.999) {
                let c = c * m.saturation_m;
                let back = m.gamma2(m.gamma2_inverse(c)).unwrap();
                let tol = 8.0 * f64::EPSILON
                    * (c.abs() + m.feedback_offset().abs() / m.effective_k() + m.saturation_m);
                prop_assert!((back - c).abs() <= tol, "c={c} back={back}");
            }

            #[test]
            fn field_continuous_at_random_border_points(m in arb_model(), v_out in -0.95f64..0.95) {
                let v_out = v_out * m.saturation_m;
                let scale = m.saturation_m / m.tau0;
                for border in [m.border_pos_vin(v_out), m.border_neg_vin(v_out)] {
                    let delta = (1e-10 * m.saturation_m / m.gain_a)
                        .max(4.0 * f64::EPSILON * border.abs());
                    let jump = (m.derivative_field(border - delta, v_out)
                        - m.derivative_field(border + delta, v_out)).abs();
                    prop_assert!(jump <= 1e-8 * scale, "jump {jump}");
                }
            }

            #[test]
            fn field_zero_only_on_rest_lines(m in arb_model(), v_in in -2.0f64..2.0, v_out in -1.5f64..1.5) {
                let v_in = v_in * m.saturation_m;
                let v_out = v_out * m.saturation_m;
                let region = m.classify_region(v_in, v_out);
                let (gamma, tau, _) = m.region_dynamics(region, v_in);
                let field = m.derivative_field(v_in, v_out);
                // the canonical field must equal the regional form exactly
                let regional = match region {
                    Region::Linear => (v_out - gamma) / tau,
                    _ => -(v_out - gamma) / tau,
                };
                prop_assert!((field - regional).abs() <= 1e-10 * (field.abs() + m.saturation_m / m.tau0));
                // zero iff on the region's rest line
                let dist = (v_out - gamma).abs();
                if dist > 1e-9 * m.saturation_m {
                    prop_assert!(field.abs() > 0.0);
                } else {
                    prop_assert!(field.abs() <= 1.1 * dist / tau.min(m.tau0));
                }
            }
        }
    }
}
