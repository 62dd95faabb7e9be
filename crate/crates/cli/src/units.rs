//! Physical quantities written as strings with units, e.g. `"200us"`,
//! `"15 G/cm"`, `"175 Hz"`. A bare number is taken in the base unit.

use std::f64::consts::PI;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use stecho::seqlang::units::parse_duration;

fn split_unit(text: &str) -> (&str, &str) {
    let s = text.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+') || ((c == 'e' || c == 'E') && i > 0 && is_exponent(s, i))))
        .map_or(s.len(), |(i, _)| i);
    (s[..end].trim(), s[end..].trim())
}

fn is_exponent(s: &str, i: usize) -> bool {
    s[i + 1..].chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '+')
}

fn parse_scaled(text: &str, units: &[(&str, f64)], what: &str) -> Result<f64, String> {
    let (number, unit) = split_unit(text);
    let scale = units
        .iter()
        .find(|(u, _)| u.eq_ignore_ascii_case(unit))
        .map(|&(_, s)| s)
        .ok_or_else(|| {
            let known: Vec<&str> = units.iter().map(|(u, _)| *u).filter(|u| !u.is_empty()).collect();
            format!("unknown {what} unit `{unit}` in `{text}` (expected one of {})", known.join(", "))
        })?;
    let value: f64 = number.parse().map_err(|_| format!("invalid {what} `{text}`"))?;
    if !value.is_finite() {
        return Err(format!("{what} `{text}` is not finite"));
    }
    Ok(value * scale)
}

/// Parse a time such as `200us` or `1.8 ms` to seconds.
pub fn parse_time(text: &str) -> Result<f64, String> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    parse_duration(&compact).map_err(|e| e.to_string())
}

/// Parse a gradient such as `15 G/cm` or `150 mT/m` to G/cm.
pub fn parse_gradient(text: &str) -> Result<f64, String> {
    parse_scaled(text, &[("", 1.0), ("G/cm", 1.0), ("mT/m", 0.1), ("T/m", 100.0)], "gradient")
}

/// Parse an angular frequency such as `175 Hz` or `1.1e3 rad/s` to rad/s.
pub fn parse_frequency(text: &str) -> Result<f64, String> {
    parse_scaled(
        text,
        &[("", 1.0), ("rad/s", 1.0), ("krad/s", 1e3), ("Hz", 2.0 * PI), ("kHz", 2e3 * PI), ("MHz", 2e6 * PI)],
        "frequency",
    )
}

/// Parse a length such as `1 cm` or `8 mm` to cm.
pub fn parse_length(text: &str) -> Result<f64, String> {
    parse_scaled(text, &[("", 1.0), ("cm", 1.0), ("mm", 0.1), ("um", 1e-4), ("m", 100.0)], "length")
}

macro_rules! quantity {
    ($name:ident, $parse:ident, $unit:literal, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, Copy, PartialEq, Default)]
        pub struct $name(pub f64);

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        write!(f, "a number in {} or a string with units", $unit)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        $parse(v).map($name).map_err(E::custom)
                    }
                    fn visit_f64<E: de::Error>(self, v: f64) -> Result<$name, E> {
                        Ok($name(v))
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$name, E> {
                        Ok($name(v as f64))
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$name, E> {
                        Ok($name(v as f64))
                    }
                }
                d.deserialize_any(V)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_f64(self.0)
            }
        }
    };
}

quantity!(Seconds, parse_time, "s", "Time in seconds.");
quantity!(Gradient, parse_gradient, "G/cm", "Field gradient in G/cm.");
quantity!(Frequency, parse_frequency, "rad/s", "Angular frequency in rad/s.");
quantity!(Length, parse_length, "cm", "Length in cm.");
