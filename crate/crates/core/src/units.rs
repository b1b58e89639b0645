//! Parsing and formatting of durations with unit suffixes (`48ms`, `1.5s`,
//! `250us`, `10ns`), plus serde adapters so config files can use them.

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("empty duration")]
    Empty,
    #[error("duration `{0}` has no unit suffix (expected ns, us, ms or s)")]
    MissingUnit(String),
    #[error("invalid duration `{0}`")]
    Invalid(String),
}

const UNITS: [(&str, u64); 4] = [
    ("ns", 1),
    ("us", 1_000),
    ("ms", 1_000_000),
    ("s", 1_000_000_000),
];

/// Parses a duration such as `48ms` or `0.5s` into whole nanoseconds.
///
/// Fractional values are accepted as long as they resolve to an integer
/// number of nanoseconds after decimal scaling; `1.0000000001s` is rejected
/// rather than silently rounded.
pub fn parse_duration(text: &str) -> Result<Duration, UnitError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(UnitError::Empty);
    }
    // Longest suffix first so "ms" is not read as "s".
    let (number, scale) = ["ns", "us", "ms", "s"]
        .iter()
        .find_map(|suffix| {
            text.strip_suffix(suffix).map(|n| {
                let scale = UNITS.iter().find(|(u, _)| u == suffix).unwrap().1;
                (n.trim(), scale)
            })
        })
        .ok_or_else(|| UnitError::MissingUnit(text.to_string()))?;
    let invalid = || UnitError::Invalid(text.to_string());

    let (int_part, frac_part) = match number.split_once('.') {
        Some((i, f)) => (i, f),
        None => (number, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(invalid());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(invalid());
    }
    let whole: u64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| invalid())?
    };
    let mut nanos = whole.checked_mul(scale).ok_or_else(invalid)?;
    let mut place = scale;
    for digit in frac_part.chars() {
        let d = u64::from(digit.to_digit(10).unwrap());
        if place % 10 != 0 {
            if d != 0 {
                return Err(invalid());
            }
            continue;
        }
        place /= 10;
        nanos = nanos.checked_add(d * place).ok_or_else(invalid)?;
    }
    Ok(Duration::from_nanos(nanos))
}

/// Formats a duration using the largest unit that represents it exactly.
pub fn format_duration(d: Duration) -> String {
    let ns = crate::engine::duration_nanos(d);
    if ns == 0 {
        return "0s".to_string();
    }
    for (suffix, scale) in UNITS.iter().rev() {
        if ns % scale == 0 {
            return format!("{}{}", ns / scale, suffix);
        }
    }
    unreachable!("every value is a whole number of nanoseconds")
}

/// Serde adapter: a `Duration` written as a suffixed string. Bare integers
/// are read as nanoseconds.
pub mod serde_duration {
    use std::time::Duration;

    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_duration(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        d.deserialize_any(DurationVisitor)
    }

    pub(super) struct DurationVisitor;

    impl Visitor<'_> for DurationVisitor {
        type Value = Duration;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a duration such as \"48ms\" or an integer nanosecond count")
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Duration, E> {
            super::parse_duration(v).map_err(E::custom)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Duration, E> {
            Ok(Duration::from_nanos(v))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Duration, E> {
            u64::try_from(v)
                .map(Duration::from_nanos)
                .map_err(|_| E::custom("negative duration"))
        }
    }
}

/// Serde adapter for an optional threshold where `None` means "never",
/// written as `"inf"`.
pub mod serde_threshold {
    use std::time::Duration;

    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_str(&super::format_duration(*d)),
            None => s.serialize_str("inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        d.deserialize_any(ThresholdVisitor)
    }

    struct ThresholdVisitor;

    impl Visitor<'_> for ThresholdVisitor {
        type Value = Option<Duration>;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a duration or \"inf\"")
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
            if v.trim().eq_ignore_ascii_case("inf") {
                return Ok(None);
            }
            super::serde_duration::DurationVisitor.visit_str(v).map(Some)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
            Ok(Some(Duration::from_nanos(v)))
        }

        fn visit_unit<E: de::Error>(self) -> Result<Self::Value, E> {
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_suffixes() {
        assert_eq!(parse_duration("48ms").unwrap(), Duration::from_millis(48));
        assert_eq!(parse_duration("300s").unwrap(), Duration::from_secs(300));
        assert_eq!(parse_duration("1.5s").unwrap(), Duration::from_millis(1500));
        assert_eq!(parse_duration("250us").unwrap(), Duration::from_micros(250));
        assert_eq!(parse_duration(" 7ns ").unwrap(), Duration::from_nanos(7));
        assert_eq!(parse_duration(".5ms").unwrap(), Duration::from_micros(500));
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(parse_duration(""), Err(UnitError::Empty));
        assert!(matches!(parse_duration("48"), Err(UnitError::MissingUnit(_))));
        assert!(parse_duration("-4ms").is_err());
        assert!(parse_duration("ms").is_err());
        assert!(parse_duration("1.5ns").is_err());
        assert!(parse_duration("4xs").is_err());
    }

    #[test]
    fn formats_with_largest_exact_unit() {
        assert_eq!(format_duration(Duration::from_millis(48)), "48ms");
        assert_eq!(format_duration(Duration::from_secs(300)), "300s");
        assert_eq!(format_duration(Duration::from_millis(1500)), "1500ms");
        assert_eq!(format_duration(Duration::ZERO), "0s");
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(ns in 0u64..10_000_000_000_000) {
            let d = Duration::from_nanos(ns);
            prop_assert_eq!(parse_duration(&format_duration(d)).unwrap(), d);
        }
    }
}
