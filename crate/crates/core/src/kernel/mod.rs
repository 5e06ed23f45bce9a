//! Symbolic expansion of index-notation equations into site-local kernels.
//!
//! [`expand`] enumerates every index assignment over `0..3`, evaluates the
//! Levi-Civita factors, drops zero products and merges like terms, giving a
//! [`KernelIr`]: one sorted list of [`Monomial`]s per output component.
//! [`bind`] resolves constants and field storage offsets into a
//! [`BoundKernel`], which [`run_compiled`] executes as a single flat loop over
//! sites. [`run_interpreted`] is the reference path: it walks the equation
//! directly, with nested loops over the summed indices at every site.

mod bench;
mod compiled;
mod expand;
mod interp;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::dsl::DslError;
use crate::mesh::{FieldError, Rank};
use crate::quantity::{format_real, Dimension, Quantity};

pub use bench::{benchmark_backends, seeded_fields, BenchReport, MIN_BENCH_SITES};
pub use compiled::{bind, run_compiled, BoundKernel};
pub use expand::expand;
pub use interp::run_interpreted;

/// Named constants available to a kernel, e.g. `c1`, `c2`.
pub type Constants = BTreeMap<String, Quantity>;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("unit mismatch in kernel for `{output}`: {expected} vs {found}")]
    UnitMismatch {
        output: String,
        expected: Dimension,
        found: Dimension,
    },
    #[error("component out of range: {0}")]
    ComponentOutOfRange(String),
    #[error("`{0}` has more than one index; only scalars and 3-vectors are supported")]
    UnsupportedRank(String),
    #[error("output field `{name}` does not fit the kernel: {reason}")]
    OutputShape { name: String, reason: String },
    #[error("benchmark needs at least {min} sites, got {got}")]
    TooFewSites { min: usize, got: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Levi-Civita symbol over `0..3`.
pub fn eps_value(i: usize, j: usize, k: usize) -> i8 {
    debug_assert!(i < 3 && j < 3 && k < 3);
    // (i - j)(j - k)(k - i) / 2 is exactly +-1 on permutations and 0 on repeats
    let (i, j, k) = (i as i8, j as i8, k as i8);
    (i - j) * (j - k) * (k - i) / 2
}

/// A field component read by a monomial. `component` is `None` for scalars.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Operand {
    pub field: String,
    pub component: Option<u8>,
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.component {
            Some(c) => write!(f, "{}[{c}]", self.field),
            None => f.write_str(&self.field),
        }
    }
}

/// `coefficient * product(constants) * product(operands)`; operands and
/// constants are kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coefficient: f64,
    pub constants: Vec<String>,
    pub operands: Vec<Operand>,
}

/// Expanded kernel: for each output component, a canonically sorted sum of
/// monomials with like terms merged.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelIr {
    pub output: String,
    pub rank: Rank,
    pub components: Vec<Vec<Monomial>>,
}

impl KernelIr {
    pub fn monomial_count(&self) -> usize {
        self.components.iter().map(Vec::len).sum()
    }

    /// Field names read by the kernel, sorted and deduplicated.
    pub fn input_fields(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .components
            .iter()
            .flatten()
            .flat_map(|m| m.operands.iter().map(|o| o.field.clone()))
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn constant_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .components
            .iter()
            .flatten()
            .flat_map(|m| m.constants.iter().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Debug dump, one line per monomial:
/// `out[c] += <coef> * <const>... * <field>[<comp>]...`
impl fmt::Display for KernelIr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, monomials) in self.components.iter().enumerate() {
            for m in monomials {
                match self.rank {
                    Rank::Vector => write!(f, "{}[{c}] += ", self.output)?,
                    Rank::Scalar => write!(f, "{} += ", self.output)?,
                }
                let coef = format_real(m.coefficient);
                if m.coefficient >= 0.0 {
                    write!(f, "+{coef}")?;
                } else {
                    f.write_str(&coef)?;
                }
                for name in &m.constants {
                    write!(f, " * {name}")?;
                }
                for op in &m.operands {
                    write!(f, " * {op}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_examples() {
        assert_eq!(eps_value(0, 1, 2), 1);
        assert_eq!(eps_value(1, 0, 2), -1);
        assert_eq!(eps_value(0, 0, 2), 0);
    }

    #[test]
    fn eps_matches_permutation_parity() {
        // parity by counting inversions
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let v = [i, j, k];
                    let expected = if i == j || j == k || i == k {
                        0
                    } else {
                        let inversions = (0..3)
                            .flat_map(|a| (a + 1..3).map(move |b| (a, b)))
                            .filter(|&(a, b)| v[a] > v[b])
                            .count();
                        if inversions % 2 == 0 {
                            1
                        } else {
                            -1
                        }
                    };
                    assert_eq!(eps_value(i, j, k), expected, "{v:?}");
                }
            }
        }
    }
}
