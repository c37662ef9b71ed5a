//! Numeric support: error-free float transforms, a small double-double type
//! used by the high-precision integration mode, bracketed root finding, and
//! the embedded Runge-Kutta pair used for non-polynomial input segments.

/// Sum `a + b` together with the exact rounding error (Knuth two-sum).
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Product `a * b` together with the exact rounding error, via FMA.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

/// Unevaluated sum of two doubles, `hi + lo` with `|lo| <= ulp(hi)/2`.
///
/// Enough of a double-double implementation for carrying a state variable
/// through exponential amplification without losing the sub-ulp part. Not a
/// general extended-precision library.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn from_sum(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_sum(a, b);
        Dd { hi, lo }
    }

    #[inline]
    pub fn from_prod(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    #[inline]
    fn renorm(hi: f64, lo: f64) -> Dd {
        let (s, e) = two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        Dd::renorm(s, e + self.lo + other.lo)
    }

    #[inline]
    pub fn add_f64(self, x: f64) -> Dd {
        self.add(Dd::from_f64(x))
    }

    #[inline]
    pub fn sub(self, other: Dd) -> Dd {
        self.add(Dd {
            hi: -other.hi,
            lo: -other.lo,
        })
    }

    #[inline]
    pub fn mul_f64(self, x: f64) -> Dd {
        let (p, e) = two_prod(self.hi, x);
        Dd::renorm(p, e + self.lo * x)
    }

    #[inline]
    pub fn div_f64(self, x: f64) -> Dd {
        let q1 = self.hi / x;
        // residual = self - q1*x, evaluated exactly
        let (p, e) = two_prod(q1, x);
        let r = ((self.hi - p) - e) + self.lo;
        let q2 = r / x;
        Dd::renorm(q1, q2)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Refine a bracketed root of `f` by bisection until the interval is
/// narrower than `xtol` (or floating-point resolution is reached).
///
/// Requires `f(lo)` and `f(hi)` to have opposite signs (zero counts as
/// either). Returns the midpoint of the final interval.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "bisect: root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= xtol {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bisection variant converging to the infimum of `{x : f(x) <= 0}` for a
/// non-increasing `f` with `f(lo) >= 0 >= f(hi)`. Used for node balances
/// that can have flat-zero dead zones.
pub fn bisect_leftmost_nonpositive<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    if f(lo) <= 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// One accepted step of the Dormand-Prince 5(4) pair.
pub struct RkStep {
    /// End time of the accepted step.
    pub t1: f64,
    /// State at `t1`.
    pub y1: f64,
    /// Derivative at `t1` (FSAL stage, reusable).
    pub f1: f64,
    /// Suggested size for the next step.
    pub h_next: f64,
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights are row 6 of A (FSAL); these are the error coefficients
// b5 - b4.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Advance `y' = f(t, y)` by one error-controlled Dormand-Prince step.
///
/// `f0` must equal `f(t0, y0)`. The step is shrunk until the embedded error
/// estimate is at or below `atol` (an absolute tolerance on the state), and
/// never grows past `h_max`. Returns `None` if the step size underflows the
/// resolution of `t0`.
pub fn dopri5_step<F: FnMut(f64, f64) -> f64>(
    f: &mut F,
    t0: f64,
    y0: f64,
    f0: f64,
    h_init: f64,
    h_max: f64,
    atol: f64,
) -> Option<RkStep> {
    let mut h = h_init.min(h_max);
    let t_res = (t0.abs() + h_max) * f64::EPSILON * 4.0;
    for _ in 0..60 {
        if h < t_res {
            return None;
        }
        let mut k = [0.0f64; 7];
        k[0] = f0;
        for i in 1..7 {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(i) {
                acc += DP_A[i][j] * kj;
            }
            k[i] = f(t0 + DP_C[i] * h, y0 + h * acc);
        }
        let mut y1 = y0;
        for (j, kj) in k.iter().enumerate().take(6) {
            y1 += h * DP_A[6][j] * kj;
        }
        let mut err = 0.0;
        for (j, kj) in k.iter().enumerate() {
            err += DP_E[j] * kj;
        }
        err = (err * h).abs();
        if err <= atol {
            let grow = if err > 0.0 {
                (0.9 * (atol / err).powf(0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            return Some(RkStep {
                t1: t0 + h,
                y1,
                f1: k[6],
                h_next: (h * grow).min(h_max),
            });
        }
        h *= (0.9 * (atol / err).powf(0.2)).clamp(0.1, 0.9);
    }
    None
}

/// Cubic Hermite interpolation of a state between two accepted RK samples.
#[inline]
pub fn hermite(t0: f64, y0: f64, f0: f64, t1: f64, y1: f64, f1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    if h == 0.0 {
        return y0;
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + h * f0 * (s3 - 2.0 * s2 + s)
        + y1 * (-2.0 * s3 + 3.0 * s2)
        + h * f1 * (s3 - s2)
}

/// Ordinary least squares fit `y = a + b*x`; returns `(intercept, slope, r2)`.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((intercept, slope, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sum_recovers_rounding_error() {
        let (s, e) = two_sum(1.0, 1e-17);
        assert_eq!(s, 1.0);
        assert_eq!(e, 1e-17);
    }

    #[test]
    fn dd_division_has_subulp_residual() {
        let num = Dd::from_prod(0.9, 0.499);
        let q = num.div_f64(0.499);
        // q should equal 0.9 to double-double precision
        assert!((q.hi - 0.9).abs() <= f64::EPSILON);
        assert!((q.value() - 0.9).abs() < 1e-30);
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0);
        assert!((r - 2.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn leftmost_nonpositive_handles_flat_zero() {
        // f = 0 on [0.3, 1.2], positive below
        let f = |x: f64| if x < 0.3 { 0.3 - x } else { 0.0 };
        let r = bisect_leftmost_nonpositive(f, 0.0, 1.2);
        assert!((r - 0.3).abs() < 1e-12);
    }

    #[test]
    fn dopri5_integrates_exponential_decay() {
        let mut f = |_t: f64, y: f64| -y;
        let mut t = 0.0;
        let mut y = 1.0;
        let mut fy = f(t, y);
        let mut h = 0.1;
        while t < 5.0 {
            let step = dopri5_step(&mut f, t, y, fy, h, 5.0 - t, 1e-12).unwrap();
            t = step.t1;
            y = step.y1;
            fy = step.f1;
            h = step.h_next;
        }
        assert!((y - (-5.0_f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn ols_fit_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (a, b, r2) = ols_fit(&xs, &ys).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        assert!((b - 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
