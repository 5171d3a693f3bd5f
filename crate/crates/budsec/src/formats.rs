//! The instance file format.
//!
//! Instances are JSON objects with `frames` (pairs `[arrival, departure]`),
//! `pairs` (pairs `[value, budget]`) and an optional `permutation`.
//! Rationals are encoded exactly: plain JSON integers where the denominator
//! is one, `"num/den"` strings otherwise. Values are canonicalized to
//! lowest terms on read, so files written by this module round-trip
//! byte-identically.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use budsec_core::model::MarketInstance;
use budsec_core::rational::{format_rat, parse_rat, Rat};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("failed to read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("failed to write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("invalid instance file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid instance: {0}")]
    Model(#[from] budsec_core::model::ModelError),
}

/// A rational in its file encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatText(pub Rat);

impl Serialize for RatText {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use num_traits::ToPrimitive;
        if self.0.is_integer() {
            if let Some(i) = self.0.numer().to_i64() {
                return serializer.serialize_i64(i);
            }
        }
        serializer.serialize_str(&format_rat(&self.0))
    }
}

impl<'de> Deserialize<'de> for RatText {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RatVisitor;
        impl Visitor<'_> for RatVisitor {
            type Value = RatText;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "an integer or a \"num/den\" string")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<RatText, E> {
                Ok(RatText(budsec_core::rational::int(v)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<RatText, E> {
                i64::try_from(v)
                    .map(|i| RatText(budsec_core::rational::int(i)))
                    .map_err(|_| E::custom("integer out of range"))
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<RatText, E> {
                parse_rat(s).map(RatText).map_err(E::custom)
            }
        }
        deserializer.deserialize_any(RatVisitor)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDto {
    frames: Vec<(RatText, RatText)>,
    pairs: Vec<(RatText, RatText)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    permutation: Option<Vec<usize>>,
}

/// Renders an instance in canonical form (stable field order, two-space
/// indentation, exact rationals).
pub fn instance_to_string(instance: &MarketInstance) -> String {
    let dto = InstanceDto {
        frames: instance
            .frames
            .iter()
            .map(|(a, d)| (RatText(a.clone()), RatText(d.clone())))
            .collect(),
        pairs: instance
            .pairs
            .iter()
            .map(|(v, b)| (RatText(v.clone()), RatText(b.clone())))
            .collect(),
        permutation: Some(instance.permutation.clone()),
    };
    let mut s = serde_json::to_string_pretty(&dto).expect("instance serializes");
    s.push('\n');
    s
}

/// Parses an instance. A missing permutation defaults to the identity.
pub fn instance_from_str(text: &str) -> Result<MarketInstance, FormatError> {
    let dto: InstanceDto = serde_json::from_str(text)?;
    let n = dto.frames.len();
    let instance = MarketInstance {
        frames: dto.frames.into_iter().map(|(a, d)| (a.0, d.0)).collect(),
        pairs: dto.pairs.into_iter().map(|(v, b)| (v.0, b.0)).collect(),
        permutation: dto.permutation.unwrap_or_else(|| (0..n).collect()),
    };
    Ok(instance)
}

pub fn load_instance(path: &Path) -> Result<MarketInstance, FormatError> {
    let text = fs::read_to_string(path)
        .map_err(|source| FormatError::Read { path: path.display().to_string(), source })?;
    instance_from_str(&text)
}

pub fn save_instance(path: &Path, instance: &MarketInstance) -> Result<(), FormatError> {
    fs::write(path, instance_to_string(instance))
        .map_err(|source| FormatError::Write { path: path.display().to_string(), source })
}
