use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::Error;

/// Smooth activation functions.
///
/// Every member has well-defined first and second derivatives everywhere.
/// Piecewise-linear units (ReLU and friends) are deliberately not
/// representable: the derivative of a pullback metric needs curvature of
/// every nonlinearity, and theirs is identically zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softplus,
    Linear,
}

const PIECEWISE_LINEAR: &[&str] = &[
    "relu",
    "relu6",
    "leaky_relu",
    "leakyrelu",
    "prelu",
    "hardtanh",
    "hard_tanh",
    "hardsigmoid",
    "hard_sigmoid",
    "abs",
    "step",
];

/// Numerically stable logistic function.
#[inline]
pub fn logistic<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable `ln(1 + e^v)`.
#[inline]
pub fn softplus<T: Real>(v: T) -> T {
    softplus_and_logistic(v).0
}

/// `ln(1 + x)` for `x ∈ [0, 1]` via a plain logarithm with the rounding
/// of `1 + x` corrected; a few ulps, and much cheaper than libm's `log1p`.
#[inline]
fn ln_1p_unit<T: Real>(x: T) -> T {
    let u = T::one() + x;
    if u == T::one() {
        x
    } else {
        u.ln() * (x / (u - T::one()))
    }
}

/// `(softplus(v), logistic(v))` from a single exponential.
#[inline]
fn softplus_and_logistic<T: Real>(v: T) -> (T, T) {
    let e = (-v.abs()).exp();
    let sp = v.max(T::zero()) + ln_1p_unit(e);
    let s = if v >= T::zero() { T::one() / (T::one() + e) } else { e / (T::one() + e) };
    (sp, s)
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
            Activation::Linear => "linear",
        }
    }

    /// Returns `(f(v), f'(v), f''(v))`.
    #[inline]
    pub fn eval<T: Real>(self, v: T) -> (T, T, T) {
        let one = T::one();
        let two = T::lit(2.0);
        match self {
            Activation::Tanh => {
                let t = v.tanh();
                let d1 = one - t * t;
                (t, d1, -two * t * d1)
            }
            Activation::Sigmoid => {
                let s = logistic(v);
                let d1 = s * (one - s);
                (s, d1, d1 * (one - two * s))
            }
            Activation::Softplus => {
                let (sp, s) = softplus_and_logistic(v);
                (sp, s, s * (one - s))
            }
            Activation::Linear => (v, one, T::zero()),
        }
    }

    /// Returns `(f(v), f'(v))`.
    #[inline]
    pub fn eval_d1<T: Real>(self, v: T) -> (T, T) {
        let one = T::one();
        match self {
            Activation::Tanh => {
                let t = v.tanh();
                (t, one - t * t)
            }
            Activation::Sigmoid => {
                let s = logistic(v);
                (s, s * (one - s))
            }
            Activation::Softplus => softplus_and_logistic(v),
            Activation::Linear => (v, one),
        }
    }

    #[inline]
    pub fn value<T: Real>(self, v: T) -> T {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => logistic(v),
            Activation::Softplus => softplus(v),
            Activation::Linear => v,
        }
    }

    pub fn has_curvature(self) -> bool {
        !matches!(self, Activation::Linear)
    }
}

/// Evaluates `kind` at `v`, returning the value with its first and second derivatives.
pub fn activation_eval<T: Real>(kind: Activation, v: T) -> (T, T, T) {
    kind.eval(v)
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            "softplus" => Ok(Activation::Softplus),
            "linear" | "identity" => Ok(Activation::Linear),
            other if PIECEWISE_LINEAR.contains(&other) => {
                Err(Error::UnsupportedActivation(s.to_string()))
            }
            _ => Err(Error::InvalidNetwork(format!("unknown activation `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_origin() {
        assert_eq!(activation_eval(Activation::Tanh, 0.0f64), (0.0, 1.0, 0.0));
        assert_eq!(activation_eval(Activation::Sigmoid, 0.0f64), (0.5, 0.25, 0.0));
        let (v, d1, d2) = activation_eval(Activation::Softplus, 0.0f64);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(d1, 0.5);
        assert_eq!(d2, 0.25);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for kind in [Activation::Tanh, Activation::Sigmoid, Activation::Softplus, Activation::Linear] {
            for &v in &[-7.3f64, -1.2, -0.01, 0.4, 2.5, 9.0] {
                let (_, d1, d2) = kind.eval(v);
                let fd1 = (kind.value(v + h) - kind.value(v - h)) / (2.0 * h);
                let fd2 = (kind.eval(v + h).1 - kind.eval(v - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-8, "{kind} d1 at {v}");
                assert!((d2 - fd2).abs() < 1e-8, "{kind} d2 at {v}");
            }
        }
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        let (v, d1, d2) = Activation::Softplus.eval(800.0f64);
        assert_eq!(v, 800.0);
        assert_eq!(d1, 1.0);
        assert_eq!(d2, 0.0);
        let (v, d1, d2) = Activation::Softplus.eval(-800.0f64);
        assert!(v >= 0.0 && v.is_finite());
        assert!(d1.is_finite() && d2.is_finite());
        let (s, _, _) = Activation::Sigmoid.eval(-800.0f64);
        assert!(s.is_finite());
    }

    #[test]
    fn fused_softplus_matches_separate_forms() {
        for i in -4000..=4000 {
            let v = i as f64 * 0.0137;
            let (sp, s) = Activation::Softplus.eval_d1(v);
            let reference = v.max(0.0) + (-v.abs()).exp().ln_1p();
            assert!((sp - reference).abs() <= 4.0 * f64::EPSILON * reference);
            assert_eq!(sp, softplus(v));
            assert_eq!(s, logistic(v));
        }
    }

    #[test]
    fn piecewise_linear_names_are_rejected() {
        for name in ["relu", "ReLU", "leaky_relu", "hardtanh"] {
            assert!(matches!(
                name.parse::<Activation>(),
                Err(Error::UnsupportedActivation(_))
            ));
        }
        assert_eq!("softplus".parse::<Activation>().unwrap(), Activation::Softplus);
        assert!("swishy".parse::<Activation>().is_err());
    }
}
