//! Dimensioned physical quantities over the seven SI base units.
//!
//! A [`Quantity`] is a finite `f64` in SI base units paired with a
//! [`Dimension`], the integer exponents of (m, kg, s, A, K, mol, cd).
//! Unit expressions follow a small grammar:
//!
//! ```text
//! unit ::= term (("*" | "/") term)*
//! term ::= name ("^" int)?
//! ```
//!
//! Whitespace between terms is read as multiplication, so the canonical
//! rendering produced by [`Quantity`]'s `Display` (`"3 m s^-1"`) parses back.
//! The literal `1` is accepted as a dimensionless term (`"1/s"`). The derived
//! aliases `J`, `N`, `T` and `Hz` are expanded to base exponents on input and
//! never appear on output.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use thiserror::Error;

/// Base unit symbols in exponent order.
pub const BASE_UNITS: [&str; 7] = ["m", "kg", "s", "A", "K", "mol", "cd"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("malformed unit expression `{expr}` at byte {pos}: {reason}")]
    Parse {
        expr: String,
        pos: usize,
        reason: String,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: Dimension, right: Dimension },
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

/// Integer exponents over (m, kg, s, A, K, mol, cd).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Dimension(pub [i32; 7]);

impl Dimension {
    pub const NONE: Dimension = Dimension([0; 7]);
    pub const LENGTH: Dimension = Dimension([1, 0, 0, 0, 0, 0, 0]);
    pub const MASS: Dimension = Dimension([0, 1, 0, 0, 0, 0, 0]);
    pub const TIME: Dimension = Dimension([0, 0, 1, 0, 0, 0, 0]);
    pub const CURRENT: Dimension = Dimension([0, 0, 0, 1, 0, 0, 0]);

    pub fn exponents(&self) -> [i32; 7] {
        self.0
    }

    pub fn is_dimensionless(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn pow(self, n: i32) -> Dimension {
        Dimension(self.0.map(|e| e * n))
    }

    /// Parse a unit expression into its dimension, ignoring any scale.
    pub fn parse(expr: &str) -> Result<Dimension, UnitError> {
        parse_unit_expr(expr)
    }

    /// Canonical unit product: base order, positive powers before negative.
    /// Empty for a dimensionless value.
    pub fn unit_string(&self) -> String {
        let mut parts = Vec::new();
        for positive in [true, false] {
            for (name, &e) in BASE_UNITS.iter().zip(self.0.iter()) {
                if e == 0 || (e > 0) != positive {
                    continue;
                }
                if e == 1 {
                    parts.push((*name).to_string());
                } else {
                    parts.push(format!("{name}^{e}"));
                }
            }
        }
        parts.join(" ")
    }
}

impl Add for Dimension {
    type Output = Dimension;
    fn add(self, rhs: Dimension) -> Dimension {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o += r;
        }
        Dimension(out)
    }
}

impl Sub for Dimension {
    type Output = Dimension;
    fn sub(self, rhs: Dimension) -> Dimension {
        self + (-rhs)
    }
}

impl Neg for Dimension {
    type Output = Dimension;
    fn neg(self) -> Dimension {
        Dimension(self.0.map(|e| -e))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.unit_string();
        if s.is_empty() {
            write!(f, "1 {:?}", self.0)
        } else {
            write!(f, "{s} {:?}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    value: f64,
    dim: Dimension,
}

// Fallible counterparts of the operator traits.
#[allow(clippy::should_implement_trait)]
impl Quantity {
    /// Build a quantity from a value already in SI base units and a unit
    /// expression such as `"J/m^3"` or `""`.
    pub fn new(value: f64, unit_expr: &str) -> Result<Quantity, UnitError> {
        let dim = parse_unit_expr(unit_expr)?;
        Quantity::with_dim(value, dim)
    }

    pub fn with_dim(value: f64, dim: Dimension) -> Result<Quantity, UnitError> {
        if !value.is_finite() {
            return Err(UnitError::NonFinite(value));
        }
        Ok(Quantity { value, dim })
    }

    pub fn dimensionless(value: f64) -> Result<Quantity, UnitError> {
        Quantity::with_dim(value, Dimension::NONE)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn mul(self, rhs: Quantity) -> Result<Quantity, UnitError> {
        Quantity::with_dim(self.value * rhs.value, self.dim + rhs.dim)
    }

    pub fn div(self, rhs: Quantity) -> Result<Quantity, UnitError> {
        if rhs.value == 0.0 {
            return Err(UnitError::DivisionByZero);
        }
        Quantity::with_dim(self.value / rhs.value, self.dim - rhs.dim)
    }

    pub fn powi(self, n: i32) -> Result<Quantity, UnitError> {
        if n < 0 && self.value == 0.0 {
            return Err(UnitError::DivisionByZero);
        }
        Quantity::with_dim(self.value.powi(n), self.dim.pow(n))
    }

    pub fn add(self, rhs: Quantity) -> Result<Quantity, UnitError> {
        self.expect_dim(rhs.dim)?;
        Quantity::with_dim(self.value + rhs.value, self.dim)
    }

    pub fn sub(self, rhs: Quantity) -> Result<Quantity, UnitError> {
        self.expect_dim(rhs.dim)?;
        Quantity::with_dim(self.value - rhs.value, self.dim)
    }

    pub fn scale(self, factor: f64) -> Result<Quantity, UnitError> {
        Quantity::with_dim(self.value * factor, self.dim)
    }

    /// Errors with [`UnitError::DimensionMismatch`] unless `self` has `dim`.
    pub fn expect_dim(&self, dim: Dimension) -> Result<(), UnitError> {
        if self.dim == dim {
            Ok(())
        } else {
            Err(UnitError::DimensionMismatch {
                left: self.dim,
                right: dim,
            })
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = self.dim.unit_string();
        let value = format_real(self.value);
        if unit.is_empty() {
            f.write_str(&value)
        } else {
            write!(f, "{value} {unit}")
        }
    }
}

impl FromStr for Quantity {
    type Err = UnitError;

    /// Parses `"<value> <unit expression>"`, e.g. `"8e5 A/m"` or `"5"`.
    fn from_str(s: &str) -> Result<Quantity, UnitError> {
        let s = s.trim();
        let (num, unit) = match s.find(char::is_whitespace) {
            Some(pos) => (&s[..pos], s[pos..].trim_start()),
            None => (s, ""),
        };
        let value: f64 = num.parse().map_err(|_| UnitError::Parse {
            expr: s.to_string(),
            pos: 0,
            reason: format!("`{num}` is not a number"),
        })?;
        Quantity::new(value, unit)
    }
}

/// Shortest round-trip decimal, switching to `1e-07` style exponents outside
/// `1e-4 <= |x| < 1e17` (the `%g` convention with 17-digit precision).
pub fn format_real(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:e}");
    let (mantissa, exp) = sci.split_once('e').expect("`{:e}` always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-4..17).contains(&exp) {
        format!("{x}")
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn unit_dimension(name: &str) -> Option<Dimension> {
    if let Some(i) = BASE_UNITS.iter().position(|&b| b == name) {
        let mut e = [0; 7];
        e[i] = 1;
        return Some(Dimension(e));
    }
    let e = match name {
        "1" => [0, 0, 0, 0, 0, 0, 0],
        "J" => [2, 1, -2, 0, 0, 0, 0],
        "N" => [1, 1, -2, 0, 0, 0, 0],
        "T" => [0, 1, -2, -1, 0, 0, 0],
        "Hz" => [0, 0, -1, 0, 0, 0, 0],
        _ => return None,
    };
    Some(Dimension(e))
}

fn parse_unit_expr(expr: &str) -> Result<Dimension, UnitError> {
    let bytes = expr.as_bytes();
    let err = |pos: usize, reason: &str| UnitError::Parse {
        expr: expr.to_string(),
        pos,
        reason: reason.to_string(),
    };
    let skip_ws = |mut p: usize| {
        while p < bytes.len() && bytes[p].is_ascii_whitespace() {
            p += 1;
        }
        p
    };

    let mut pos = skip_ws(0);
    if pos == bytes.len() {
        return Ok(Dimension::NONE);
    }
    let mut dim = Dimension::NONE;
    let mut sign = 1;
    loop {
        // term
        let start = pos;
        while pos < bytes.len() && (bytes[pos].is_ascii_alphabetic() || bytes[pos] == b'1') {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected a unit name"));
        }
        let name = &expr[start..pos];
        let base = unit_dimension(name).ok_or_else(|| UnitError::UnknownUnit(name.to_string()))?;
        pos = skip_ws(pos);
        let mut power = 1;
        if pos < bytes.len() && bytes[pos] == b'^' {
            pos = skip_ws(pos + 1);
            let istart = pos;
            if pos < bytes.len() && (bytes[pos] == b'-' || bytes[pos] == b'+') {
                pos += 1;
            }
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            power = expr[istart..pos]
                .parse::<i32>()
                .map_err(|_| err(istart, "expected an integer power"))?;
            pos = skip_ws(pos);
        }
        dim = dim + base.pow(sign * power);

        if pos == bytes.len() {
            return Ok(dim);
        }
        match bytes[pos] {
            b'*' => {
                sign = 1;
                pos = skip_ws(pos + 1);
            }
            b'/' => {
                sign = -1;
                pos = skip_ws(pos + 1);
            }
            c if c.is_ascii_alphabetic() || c == b'1' => {
                // juxtaposition after whitespace multiplies
                if !bytes[pos - 1].is_ascii_whitespace() {
                    return Err(err(pos, "expected `*`, `/` or end of expression"));
                }
                sign = 1;
            }
            _ => return Err(err(pos, "expected `*`, `/` or end of expression")),
        }
        if pos == bytes.len() {
            return Err(err(pos, "dangling operator"));
        }
    }
}
