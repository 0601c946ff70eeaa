//! Physical quantities at the configuration boundary.
//!
//! Config values may be written as bare numbers (taken as SI) or as strings
//! with a unit suffix, e.g. `"0.1 ms"`, `"200 pS"`, `"2.56e-6 /s"`. They are
//! normalized to SI on load and written back as SI strings.

use std::fmt;

use serde::de::{self, Visitor};
use serde::Deserializer;

/// A physical dimension: its SI symbol plus accepted suffixes and scale factors.
pub struct Dimension {
    pub name: &'static str,
    pub si: &'static str,
    pub units: &'static [(&'static str, f64)],
    /// Named values accepted in place of a number.
    pub keywords: &'static [(&'static str, f64)],
}

pub const TIME: Dimension = Dimension {
    name: "time",
    si: "s",
    units: &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("µs", 1e-6), ("ns", 1e-9)],
    keywords: &[],
};

pub const VOLTAGE: Dimension = Dimension {
    name: "voltage",
    si: "V",
    units: &[("V", 1.0), ("mV", 1e-3), ("uV", 1e-6)],
    keywords: &[],
};

pub const CONDUCTANCE: Dimension = Dimension {
    name: "conductance",
    si: "S",
    units: &[("S", 1.0), ("mS", 1e-3), ("uS", 1e-6), ("nS", 1e-9), ("pS", 1e-12), ("fS", 1e-15)],
    keywords: &[],
};

pub const RATE: Dimension = Dimension {
    name: "rate",
    si: "/s",
    units: &[("/s", 1.0), ("1/s", 1.0), ("Hz", 1.0), ("/ms", 1e3), ("/us", 1e6)],
    keywords: &[],
};

pub const PER_VOLT: Dimension = Dimension {
    name: "inverse voltage",
    si: "/V",
    units: &[("/V", 1.0), ("1/V", 1.0)],
    keywords: &[],
};

pub const LENGTH_UM: Dimension = Dimension {
    name: "length",
    si: "um",
    units: &[("um", 1.0), ("µm", 1.0), ("mm", 1e3), ("nm", 1e-3)],
    keywords: &[],
};

pub const CAPACITANCE_RATE: Dimension = Dimension {
    name: "capacitance per time step",
    si: "F/s",
    units: &[("F/s", 1.0), ("pF/s", 1e-12), ("fF/s", 1e-15), ("aF/s", 1e-18), ("zF/s", 1e-21)],
    keywords: &[
        ("reference", crate::neuron::REFERENCE_CM_OVER_DT),
        ("calibrated", crate::neuron::CALIBRATED_CM_OVER_DT),
    ],
};

/// Parses `"<number> <unit>"` (space optional) into SI.
pub fn parse(text: &str, dim: &Dimension) -> Result<f64, String> {
    let t = text.trim();
    if let Some(&(_, v)) = dim.keywords.iter().find(|(k, _)| *k == t) {
        return Ok(v);
    }
    // longest numeric prefix
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit() || c == '.' || c == '+' || c == '-' || ((c == 'e' || c == 'E') && i > 0))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse `{text}` as a {} quantity", dim.name))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(value);
    }
    dim.units
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|&(_, f)| value * f)
        .ok_or_else(|| {
            let known: Vec<&str> = dim.units.iter().map(|(u, _)| *u).collect();
            format!("unknown {} unit `{unit}` (expected one of {})", dim.name, known.join(", "))
        })
}

/// Shortest round-trip decimal, switching to exponent form for very small or large magnitudes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn format(v: f64, dim: &Dimension) -> String {
    format!("{} {}", format_number(v), dim.si)
}

struct QuantityVisitor(&'static Dimension);

impl Visitor<'_> for QuantityVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a {} as a number in {} or a string with a unit suffix", self.0.name, self.0.si)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        parse(v, self.0).map_err(E::custom)
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D, dim: &'static Dimension) -> Result<f64, D::Error> {
    d.deserialize_any(QuantityVisitor(dim))
}

macro_rules! quantity_module {
    ($name:ident, $dim:expr) => {
        pub mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&super::format(*v, &$dim))
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                super::deserialize(d, &$dim)
            }

            pub mod option {
                use super::*;

                pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
                    match v {
                        Some(v) => super::serialize(v, s),
                        None => s.serialize_none(),
                    }
                }

                pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
                    #[derive(Deserialize)]
                    struct Wrap(#[serde(deserialize_with = "super::deserialize")] f64);
                    Option::<Wrap>::deserialize(d).map(|w| w.map(|w| w.0))
                }
            }
        }
    };
}

quantity_module!(seconds, super::TIME);
quantity_module!(volts, super::VOLTAGE);
quantity_module!(siemens, super::CONDUCTANCE);
quantity_module!(per_second, super::RATE);
quantity_module!(per_volt, super::PER_VOLT);
quantity_module!(micrometers, super::LENGTH_UM);
quantity_module!(farad_per_second, super::CAPACITANCE_RATE);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixes() {
        assert_eq!(parse("0.1 ms", &TIME).unwrap(), 1e-4);
        assert_eq!(parse("1ms", &TIME).unwrap(), 1e-3);
        assert_eq!(parse("200 pS", &CONDUCTANCE).unwrap(), 200.0 * 1e-12);
        assert_eq!(parse("2.56e-6 /s", &RATE).unwrap(), 2.56e-6);
        assert_eq!(parse("-0.1 V", &VOLTAGE).unwrap(), -0.1);
        assert_eq!(parse("34.9", &PER_VOLT).unwrap(), 34.9);
        assert_eq!(parse("reference", &CAPACITANCE_RATE).unwrap(), 3.5e-20);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let err = parse("1 V", &TIME).unwrap_err();
        assert!(err.contains("unknown time unit"), "{err}");
        assert!(parse("fast", &TIME).is_err());
    }

    #[test]
    fn formatted_values_reparse_exactly() {
        for v in [1e-4, 0.1, 2.56e-6, 1e-12, 64.9, 0.0, -0.1, 3.5e-20, 123456789.0] {
            assert_eq!(parse(&format(v, &TIME), &TIME).unwrap(), v);
        }
    }
}
