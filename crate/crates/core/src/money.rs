//! Exact two-decimal currency amounts stored as integer cents.
//!
//! Every price in the simulation is a two-decimal value, so fixed-point
//! arithmetic keeps belief deduplication, tie-breaking and output files
//! deterministic. Floats appear only at the serialization boundary.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MoneyError {
    #[error("money value {0} is negative")]
    Negative(f64),
    #[error("money value {0} has more than two decimal places")]
    TooPrecise(f64),
    #[error("cannot parse {0:?} as a money value")]
    Parse(String),
}

/// A non-negative currency amount with cent precision.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_cents(cents: i64) -> Money {
        debug_assert!(cents >= 0, "negative money");
        Money(cents)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn try_from_f64(value: f64) -> Result<Money, MoneyError> {
        if value < 0.0 {
            return Err(MoneyError::Negative(value));
        }
        let cents = (value * 100.0).round();
        if (value * 100.0 - cents).abs() > 1e-6 {
            return Err(MoneyError::TooPrecise(value));
        }
        Ok(Money(cents as i64))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Scales by `percent` with half-up rounding, e.g. `scale_percent(110)`
    /// adds ten percent.
    pub fn scale_percent(self, percent: i64) -> Money {
        debug_assert!(percent >= 0);
        Money((self.0 * percent + 50) / 100)
    }

    pub fn double(self) -> Money {
        Money(self.0 * 2)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Money({})", self)
    }
}

impl FromStr for Money {
    type Err = MoneyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MoneyError::Parse(s.to_string());
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty() || frac.len() > 2 || whole.starts_with('-') {
            return Err(err());
        }
        let whole: i64 = whole.parse().map_err(|_| err())?;
        let frac_cents: i64 = if frac.is_empty() {
            0
        } else {
            let digits: i64 = frac.parse().map_err(|_| err())?;
            if frac.len() == 1 {
                digits * 10
            } else {
                digits
            }
        };
        Ok(Money(whole * 100 + frac_cents))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MoneyVisitor;

        impl Visitor<'_> for MoneyVisitor {
            type Value = Money;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative number with at most two decimals")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Money, E> {
                Money::try_from_f64(v).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Money, E> {
                Money::try_from_f64(v as f64).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Money, E> {
                Money::try_from_f64(v as f64).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Money, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(MoneyVisitor)
    }
}
