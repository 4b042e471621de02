//! Log-domain arithmetic over a generic floating point scalar.
//!
//! Every probability in the decoder is a natural log. Impossible events are
//! represented by a finite sentinel ([`LogFloat::neg_inf`], `-1e30` nats)
//! rather than IEEE `-inf`: any product (log-domain sum) touching the sentinel
//! saturates back to the sentinel, and log-addition treats it as the additive
//! identity.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// The sentinel value, in nats, used for log(0).
pub const LOG_ZERO: f64 = -1.0e30;

/// Floating point scalar usable by the decoder: `f32` or `f64`.
pub trait LogFloat:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// The log(0) sentinel.
    #[inline]
    fn neg_inf() -> Self {
        Self::from_f64(LOG_ZERO).expect("sentinel fits every supported float")
    }

    /// `true` when `self` is the sentinel or below it.
    #[inline]
    fn is_log_zero(self) -> bool {
        self <= Self::neg_inf()
    }

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal out of range for scalar type")
    }

    /// Saturating log-domain product.
    #[inline]
    fn log_mul(self, other: Self) -> Self {
        if self.is_log_zero() || other.is_log_zero() {
            Self::neg_inf()
        } else {
            let s = self + other;
            if s.is_log_zero() {
                Self::neg_inf()
            } else {
                s
            }
        }
    }

    /// log(exp(a) + exp(b)), with the sentinel as identity.
    #[inline]
    fn log_add(self, other: Self) -> Self {
        if self.is_log_zero() {
            return if other.is_log_zero() {
                Self::neg_inf()
            } else {
                other
            };
        }
        if other.is_log_zero() {
            return self;
        }
        let (hi, lo) = if self >= other {
            (self, other)
        } else {
            (other, self)
        };
        hi + (lo - hi).exp().ln_1p()
    }
}

impl LogFloat for f32 {}
impl LogFloat for f64 {}

/// log-sum-exp of a slice; the sentinel for an empty or all-impossible slice.
pub fn log_sum_exp<S: LogFloat>(values: &[S]) -> S {
    let max = values
        .iter()
        .copied()
        .fold(S::neg_inf(), |m, v| if v > m { v } else { m });
    if max.is_log_zero() {
        return S::neg_inf();
    }
    let sum: S = values
        .iter()
        .filter(|v| !v.is_log_zero())
        .map(|&v| (v - max).exp())
        .sum();
    max + sum.ln()
}

/// Clamp anything below the sentinel (including `-inf`) up to the sentinel.
#[inline]
pub fn clamp_log<S: LogFloat>(v: S) -> S {
    if v.is_log_zero() {
        S::neg_inf()
    } else {
        v
    }
}

/// Lossy conversion to `f64` for reporting.
#[inline]
pub fn to_f64<S: LogFloat>(v: S) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
