//! Values in `R ∪ {+∞}`.
//!
//! Functionals and conjugates take values in the real line extended by a
//! single point at plus infinity. The infinite state is an explicit variant
//! rather than `f64::INFINITY` so that "this conjugate diverged" is a verdict
//! the caller has to match on, not an overflow that leaks through arithmetic.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// Lifts an `f64`. `+inf` maps to [`ExtReal::PosInf`]; NaN and `-inf`
    /// have no representative and yield `None`.
    pub fn from_f64(x: f64) -> Option<ExtReal> {
        if x.is_nan() || x == f64::NEG_INFINITY {
            None
        } else if x == f64::INFINITY {
            Some(ExtReal::PosInf)
        } else {
            Some(ExtReal::Finite(x))
        }
    }

    /// Like [`from_f64`](Self::from_f64) but panics on NaN / `-inf`.
    pub fn of(x: f64) -> ExtReal {
        Self::from_f64(x).unwrap_or_else(|| panic!("{x} is not an extended real"))
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        !self.is_finite()
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::PosInf => None,
        }
    }

    /// `+inf` is rendered as `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    /// Multiplication by a nonnegative scalar with the convention `0 · ∞ = 0`.
    pub fn scale(self, c: f64) -> ExtReal {
        assert!(
            c >= 0.0,
            "ExtReal::scale needs a nonnegative factor, got {c}"
        );
        match self {
            ExtReal::Finite(x) => ExtReal::of(c * x),
            ExtReal::PosInf if c == 0.0 => ExtReal::ZERO,
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        ExtReal::of(x)
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.total_cmp(b),
            (ExtReal::Finite(_), ExtReal::PosInf) => Ordering::Less,
            (ExtReal::PosInf, ExtReal::Finite(_)) => Ordering::Greater,
            (ExtReal::PosInf, ExtReal::PosInf) => Ordering::Equal,
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::of(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::of(rhs)
    }
}

/// Subtracting a finite real is always defined; `∞ - r = ∞`.
impl Sub<f64> for ExtReal {
    type Output = ExtReal;

    fn sub(self, rhs: f64) -> ExtReal {
        assert!(
            rhs.is_finite(),
            "cannot subtract {rhs} from an extended real"
        );
        match self {
            ExtReal::Finite(a) => ExtReal::of(a - rhs),
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInf => f.write_str("+inf"),
        }
    }
}

/// Finite values serialize as JSON numbers, `+∞` as the string `"+inf"`.
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            ExtReal::PosInf => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => {
                ExtReal::from_f64(x).ok_or_else(|| serde::de::Error::custom("not an extended real"))
            }
            Repr::Str(s) if s == "+inf" => Ok(ExtReal::PosInf),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"+inf\", got {s:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn infinity_absorbs_finite_addition() {
        assert_eq!(ExtReal::of(3.0) + ExtReal::PosInf, ExtReal::PosInf);
        assert_eq!(ExtReal::PosInf - 5.0, ExtReal::PosInf);
        assert_eq!(ExtReal::of(1.5) + 2.0, ExtReal::of(3.5));
    }

    #[test]
    fn zero_times_infinity_is_zero() {
        assert_eq!(ExtReal::PosInf.scale(0.0), ExtReal::ZERO);
        assert_eq!(ExtReal::PosInf.scale(2.0), ExtReal::PosInf);
    }

    #[test]
    fn nan_and_negative_infinity_rejected() {
        assert!(ExtReal::from_f64(f64::NAN).is_none());
        assert!(ExtReal::from_f64(f64::NEG_INFINITY).is_none());
        assert_eq!(ExtReal::from_f64(f64::INFINITY), Some(ExtReal::PosInf));
    }

    #[test]
    fn serde_round_trip() {
        let v = vec![ExtReal::of(-0.25), ExtReal::PosInf];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[-0.25,"+inf"]"#);
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    fn ext() -> impl Strategy<Value = ExtReal> {
        prop_oneof![
            4 => (-1e6f64..1e6).prop_map(ExtReal::of),
            1 => Just(ExtReal::PosInf),
        ]
    }

    proptest! {
        #[test]
        fn finite_below_infinity(x in -1e300f64..1e300) {
            prop_assert!(ExtReal::of(x) < ExtReal::PosInf);
        }

        #[test]
        fn arithmetic_never_nan(a in ext(), b in ext(), c in 0.0f64..10.0, r in -1e6f64..1e6) {
            for v in [a + b, a - r, a.scale(c), a.max(b), a.min(b), a + r] {
                prop_assert!(!v.to_f64().is_nan());
            }
        }

        #[test]
        fn order_is_total(a in ext(), b in ext()) {
            prop_assert!(a <= b || b <= a);
        }
    }
}
