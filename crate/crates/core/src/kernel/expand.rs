use std::collections::BTreeMap;

use super::{eps_value, KernelError, KernelIr, Monomial, Operand};
use crate::dsl::{Equation, Factor, Index, Sign};
use crate::mesh::Rank;

type MonomialKey = (Vec<Operand>, Vec<String>);

/// Expand an equation over index values `0..3` into a [`KernelIr`].
pub fn expand(eq: &Equation) -> Result<KernelIr, KernelError> {
    let classes = eq.classify_indices()?;
    let rank = match eq.target.indices.len() {
        0 => Rank::Scalar,
        1 => Rank::Vector,
        _ => return Err(KernelError::UnsupportedRank(eq.target.name.clone())),
    };
    for term in &eq.terms {
        for factor in &term.factors {
            if let Factor::Field(r) = factor {
                if r.indices.len() > 1 {
                    return Err(KernelError::UnsupportedRank(r.name.clone()));
                }
            }
        }
    }

    let free = eq.target.indices.first().copied();
    let mut components = Vec::with_capacity(rank.components());
    for out_c in 0..rank.components() {
        let mut merged: BTreeMap<MonomialKey, f64> = BTreeMap::new();
        for (term, class) in eq.terms.iter().zip(&classes) {
            let mut slots: Vec<Index> = class.bound.clone();
            if let Some(f) = free {
                slots.push(f);
            }
            let nb = class.bound.len();
            let mut values = vec![0usize; slots.len()];
            if free.is_some() {
                values[nb] = out_c;
            }
            let lookup = |values: &[usize], idx: Index| {
                let pos = slots.iter().position(|&s| s == idx).expect("classified index");
                values[pos]
            };

            for assignment in 0..3usize.pow(nb as u32) {
                let mut a = assignment;
                for v in values.iter_mut().take(nb) {
                    *v = a % 3;
                    a /= 3;
                }
                let mut coefficient = match term.sign {
                    Sign::Plus => 1.0,
                    Sign::Minus => -1.0,
                };
                let mut constants = Vec::new();
                let mut operands = Vec::new();
                for factor in &term.factors {
                    match factor {
                        Factor::Number(x) => coefficient *= x,
                        Factor::Const(name) => constants.push(name.clone()),
                        Factor::Eps([i, j, k]) => {
                            let e = eps_value(lookup(&values, *i), lookup(&values, *j), lookup(&values, *k));
                            coefficient *= f64::from(e);
                        }
                        Factor::Field(r) => operands.push(Operand {
                            field: r.name.clone(),
                            component: r.indices.first().map(|&i| lookup(&values, i) as u8),
                        }),
                    }
                    if coefficient == 0.0 {
                        break;
                    }
                }
                if coefficient == 0.0 {
                    continue;
                }
                constants.sort();
                operands.sort();
                *merged.entry((operands, constants)).or_insert(0.0) += coefficient;
            }
        }
        components.push(
            merged
                .into_iter()
                .filter(|(_, c)| *c != 0.0)
                .map(|((operands, constants), coefficient)| Monomial {
                    coefficient,
                    constants,
                    operands,
                })
                .collect(),
        );
    }

    Ok(KernelIr {
        output: eq.target.name.clone(),
        rank,
        components,
    })
}
