use serde::{Deserialize, Serialize};

use crate::scalar::{sigmoid, Real};

/// How a message bit is turned into the `+-1` label multiplying `tau`.
///
/// `tau < 0` means bit 1, so the margin must reward negative `tau` for bit 1:
/// [`LabelOrientation::Consistent`] uses `1 - 2b`. [`LabelOrientation::Literal`]
/// uses `2b - 1`, which pushes `tau` toward the wrong sign and exists only to
/// reproduce that reading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOrientation {
    #[default]
    Consistent,
    Literal,
}

impl LabelOrientation {
    pub fn label<T: Real>(self, bit: u8) -> T {
        let b = T::lit(f64::from(bit));
        match self {
            LabelOrientation::Consistent => T::one() - T::lit(2.0) * b,
            LabelOrientation::Literal => T::lit(2.0) * b - T::one(),
        }
    }
}

/// `max(0, t - label * tau)`.
pub fn hinge_loss<T: Real>(tau: T, label: T, margin: T) -> T {
    (margin - label * tau).max(T::zero())
}

/// Derivative of [`hinge_loss`] with respect to `tau`; zero on the flat side
/// and at the kink.
pub fn hinge_grad<T: Real>(tau: T, label: T, margin: T) -> T {
    if margin - label * tau > T::zero() {
        -label
    } else {
        T::zero()
    }
}

/// Binary cross-entropy on a logit, `max(p, 0) - b p + ln(1 + e^-|p|)`.
pub fn bce_loss<T: Real>(p: T, bit: u8) -> T {
    let b = T::lit(f64::from(bit));
    p.max(T::zero()) - b * p + (-p.abs()).exp().ln_1p()
}

/// `d bce / dp = sigmoid(p) - b`.
pub fn bce_grad<T: Real>(p: T, bit: u8) -> T {
    sigmoid(p) - T::lit(f64::from(bit))
}
