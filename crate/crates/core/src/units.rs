//! Engineering-notation literals and the per-attribute unit scales used to
//! bring physical quantities to order one before they reach the network.

use alloc::string::String;
use core::fmt::Write;

const SUFFIXES: [(&str, i32); 7] = [
    ("meg", 6),
    ("f", -15),
    ("p", -12),
    ("n", -9),
    ("u", -6),
    ("m", -3),
    ("k", 3),
];

/// Parses a number with an optional SI suffix (`f p n u m k meg`,
/// case-insensitive). Returns `None` if the text is not a literal.
pub fn parse_literal(text: &str) -> Option<f64> {
    let lower = text.to_ascii_lowercase();
    for (suffix, exp) in SUFFIXES {
        if let Some(mantissa) = lower.strip_suffix(suffix) {
            // "1e-3m" is fine, but a bare suffix is not a number.
            let Ok(v) = mantissa.parse::<f64>() else { continue };
            // Folding the suffix into the exponent keeps "45n" == 45e-9 exactly.
            let v = if mantissa.contains('e') {
                v * libm::pow(10.0, exp as f64)
            } else {
                let mut s = String::with_capacity(mantissa.len() + 4);
                let _ = write!(s, "{mantissa}e{exp}");
                s.parse::<f64>().ok()?
            };
            if v.is_finite() {
                return Some(v);
            }
        }
    }
    match lower.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => None,
    }
}

/// Formats a value so that [`parse_literal`] returns it bit-exactly.
pub fn format_literal(value: f64) -> String {
    let mut out = String::new();
    let _ = write!(out, "{value:e}");
    out
}

/// Physical quantity carried by an edge attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    Resistance,
    Capacitance,
    Inductance,
    Length,
    Area,
    Voltage,
    Current,
}

impl Quantity {
    /// Divisor that maps an SI value of this quantity to network units.
    pub const fn unit_scale(self) -> f64 {
        match self {
            Quantity::Resistance => 1e3,
            Quantity::Capacitance => 1e-13,
            Quantity::Inductance => 1e-10,
            Quantity::Length => 1e-6,
            Quantity::Area => 1e-13,
            Quantity::Voltage => 1.0,
            Quantity::Current => 1e-3,
        }
    }

    pub const ALL: [Quantity; 7] = [
        Quantity::Resistance,
        Quantity::Capacitance,
        Quantity::Inductance,
        Quantity::Length,
        Quantity::Area,
        Quantity::Voltage,
        Quantity::Current,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Quantity::Resistance => "resistance",
            Quantity::Capacitance => "capacitance",
            Quantity::Inductance => "inductance",
            Quantity::Length => "length",
            Quantity::Area => "area",
            Quantity::Voltage => "voltage",
            Quantity::Current => "current",
        }
    }
}
