use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A real number or `+inf`.
///
/// Used for passage times that are not resolved within the horizon and for
/// limits such as `y(inf)` that may be infinite. Serialized as a JSON number
/// or the string `"infinity"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// `self < other`, with `Infinite` above every finite value.
    pub fn lt(self, other: Extended) -> bool {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a < b,
            (Extended::Finite(_), Extended::Infinite) => true,
            (Extended::Infinite, _) => false,
        }
    }

    /// `value >= self` for a finite value.
    pub fn reached_by(self, value: f64) -> bool {
        match self {
            Extended::Finite(limit) => value >= limit,
            Extended::Infinite => false,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::Infinite => f64::INFINITY,
        }
    }
}

impl From<Option<f64>> for Extended {
    fn from(value: Option<f64>) -> Self {
        value.map_or(Extended::Infinite, Extended::Finite)
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("infinity"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => serializer.serialize_f64(*v),
            Extended::Infinite => serializer.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(Extended::Finite(v)),
            Repr::Text(s) if s == "infinity" => Ok(Extended::Infinite),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"infinity\", got {s:?}"
            ))),
        }
    }
}
