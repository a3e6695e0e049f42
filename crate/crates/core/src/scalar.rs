use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the crate.
///
/// Implemented for `f32` and `f64`. Dense kernels route through
/// `ndarray`'s matrix products, which dispatch to optimized GEMM for both.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values unrepresentable in `Self`,
    /// which never happens for the finite constants used in this crate.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Applies `tanh` elementwise in place.
    fn tanh_slice(xs: &mut [Self]) {
        for v in xs {
            *v = v.tanh();
        }
    }
}

impl Real for f32 {}

impl Real for f64 {
    fn tanh_slice(xs: &mut [Self]) {
        for v in xs {
            *v = tanh_f64(*v);
        }
    }
}

/// `tanh` within a few ulp of `f64::tanh`, without a libm call.
///
/// Odd Taylor polynomial for `|x| < 1/8`, otherwise `(1 - e) / (1 + e)` with
/// `e = exp(-2|x|)` from a Cody-Waite reduced polynomial.
#[inline]
pub fn tanh_f64(x: f64) -> f64 {
    const SMALL: [f64; 10] = [
        1.0,
        -1.0 / 3.0,
        2.0 / 15.0,
        -17.0 / 315.0,
        62.0 / 2835.0,
        -1382.0 / 155925.0,
        21844.0 / 6081075.0,
        -929569.0 / 638512875.0,
        6404582.0 / 10854718875.0,
        -443861162.0 / 1856156927625.0,
    ];
    let ax = x.abs();
    let ax = if ax > 40.0 { 40.0 } else { ax };
    let x2 = ax * ax;
    let mut p = SMALL[9];
    for &c in SMALL[..9].iter().rev() {
        p = p * x2 + c;
    }
    let small = ax * p;
    let e = exp_neg(-2.0 * ax);
    let large = (1.0 - e) / (1.0 + e);
    let t = if ax < 0.125 { small } else { large };
    t.copysign(x)
}

/// `exp(y)` for `y` in `[-80, 0]`.
#[inline]
fn exp_neg(y: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    const INV_FACT: [f64; 14] = [
        1.0,
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40320.0,
        1.0 / 362880.0,
        1.0 / 3628800.0,
        1.0 / 39916800.0,
        1.0 / 479001600.0,
        1.0 / 6227020800.0,
    ];
    let shifted = y * std::f64::consts::LOG2_E + SHIFTER;
    let k = shifted - SHIFTER;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = INV_FACT[13];
    for &c in INV_FACT[..13].iter().rev() {
        p = p * r + c;
    }
    // the low mantissa bits of `shifted` hold k in two's complement
    let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
    p * scale
}
