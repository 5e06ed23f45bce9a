use super::compiled::check_output;
use super::{eps_value, Constants, KernelError};
use crate::dsl::{Equation, Factor, Index, Sign};
use crate::mesh::{Field, FieldSet, Rank};
use crate::quantity::Dimension;

/// A factor with names looked up once; the tree shape is unchanged.
enum Node<'a> {
    Value(f64),
    Eps([usize; 3]),
    Scalar(&'a [f64]),
    Vector(&'a [f64], usize),
}

struct ResolvedTerm<'a> {
    sign: f64,
    bound: Vec<usize>,
    factors: Vec<Node<'a>>,
}

/// Evaluate `eq` directly at every site: each term loops over all `3^n`
/// assignments of its summed indices and multiplies its factors as written.
/// No Levi-Civita folding or term merging happens here.
pub fn run_interpreted(
    eq: &Equation,
    constants: &Constants,
    fields: &FieldSet,
    output: &mut Field,
) -> Result<(), KernelError> {
    let classes = eq.classify_indices()?;
    let rank = match eq.target.indices.len() {
        0 => Rank::Scalar,
        1 => Rank::Vector,
        _ => return Err(KernelError::UnsupportedRank(eq.target.name.clone())),
    };
    check_output(&eq.target.name, rank, fields, output)?;

    // index slots: every distinct letter in the equation
    let mut letters: Vec<Index> = eq.target.indices.clone();
    for term in &eq.terms {
        for i in term.indices() {
            if !letters.contains(&i) {
                letters.push(i);
            }
        }
    }
    let slot = |i: &Index| letters.iter().position(|l| l == i).expect("collected above");

    let mut unit: Option<Dimension> = None;
    let mut terms = Vec::with_capacity(eq.terms.len());
    for (term, class) in eq.terms.iter().zip(&classes) {
        let mut dim = Dimension::NONE;
        let mut factors = Vec::with_capacity(term.factors.len());
        for factor in &term.factors {
            factors.push(match factor {
                Factor::Number(x) => Node::Value(*x),
                Factor::Const(name) => {
                    let q = constants
                        .get(name)
                        .ok_or_else(|| KernelError::UnknownConstant(name.clone()))?;
                    dim = dim + q.dim();
                    Node::Value(q.value())
                }
                Factor::Eps([a, b, c]) => Node::Eps([slot(a), slot(b), slot(c)]),
                Factor::Field(r) => {
                    let f = fields
                        .get(&r.name)
                        .map_err(|_| KernelError::UnknownField(r.name.clone()))?;
                    dim = dim + f.unit();
                    match (r.indices.as_slice(), f.rank()) {
                        ([], Rank::Scalar) => Node::Scalar(f.data()),
                        ([i], Rank::Vector) => Node::Vector(f.data(), slot(i)),
                        ([_], Rank::Scalar) => {
                            return Err(KernelError::ComponentOutOfRange(format!(
                                "`{}` is a scalar field but is indexed",
                                r.name
                            )))
                        }
                        ([], Rank::Vector) => {
                            return Err(KernelError::ComponentOutOfRange(format!(
                                "`{}` is a vector field and needs an index",
                                r.name
                            )))
                        }
                        _ => return Err(KernelError::UnsupportedRank(r.name.clone())),
                    }
                }
            });
        }
        match unit {
            None => unit = Some(dim),
            Some(u) if u != dim => {
                return Err(KernelError::UnitMismatch {
                    output: eq.target.name.clone(),
                    expected: u,
                    found: dim,
                })
            }
            Some(_) => {}
        }
        terms.push(ResolvedTerm {
            sign: if term.sign == Sign::Minus { -1.0 } else { 1.0 },
            bound: class.bound.iter().map(slot).collect(),
            factors,
        });
    }
    if let Some(u) = unit {
        output.set_unit(u);
    }

    let n = fields.mesh().site_count();
    let out_c = rank.components();
    let mut values = vec![0usize; letters.len()];
    let out = output.data_mut();
    for site in 0..n {
        for c in 0..out_c {
            if rank == Rank::Vector {
                values[0] = c;
            }
            let mut acc = 0.0;
            for term in &terms {
                acc += term.sign * sum_over_bound(term, 0, &mut values, site);
            }
            out[site * out_c + c] = acc;
        }
    }
    Ok(())
}

/// Nested loops over the bound indices of `term`, starting at `depth`.
fn sum_over_bound(term: &ResolvedTerm<'_>, depth: usize, values: &mut [usize], site: usize) -> f64 {
    if depth == term.bound.len() {
        return term
            .factors
            .iter()
            .map(|f| match f {
                Node::Value(x) => *x,
                Node::Eps([a, b, c]) => f64::from(eps_value(values[*a], values[*b], values[*c])),
                Node::Scalar(d) => d[site],
                Node::Vector(d, s) => d[site * 3 + values[*s]],
            })
            .product();
    }
    let mut sum = 0.0;
    for v in 0..3 {
        values[term.bound[depth]] = v;
        sum += sum_over_bound(term, depth + 1, values, site);
    }
    sum
}
