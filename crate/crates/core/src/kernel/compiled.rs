use std::ops::Range;

use super::{Constants, KernelError, KernelIr};
use crate::mesh::{Field, FieldSet, Rank};
use crate::quantity::Dimension;

#[derive(Debug, Clone, Copy)]
struct Load {
    slot: u32,
    offset: u32,
    stride: u32,
}

#[derive(Debug, Clone)]
struct BoundMonomial {
    coefficient: f64,
    loads: Range<usize>,
}

/// A [`KernelIr`] with constants folded into coefficients and every operand
/// resolved to a `(field slot, component offset, stride)` load.
#[derive(Debug, Clone)]
pub struct BoundKernel {
    ir: KernelIr,
    unit: Option<Dimension>,
    inputs: Vec<(String, usize)>,
    spans: Vec<Range<usize>>,
    monomials: Vec<BoundMonomial>,
    loads: Vec<Load>,
}

impl BoundKernel {
    pub fn ir(&self) -> &KernelIr {
        &self.ir
    }

    pub fn output(&self) -> &str {
        &self.ir.output
    }

    pub fn rank(&self) -> Rank {
        self.ir.rank
    }

    /// Unit of the output, `None` if every monomial cancelled.
    pub fn output_unit(&self) -> Option<Dimension> {
        self.unit
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().map(|(n, _)| n.as_str())
    }
}

/// Resolve constants and field storage for `ir` against `fields`.
///
/// Every monomial must carry the same dimension; that dimension is the
/// output unit.
pub fn bind(ir: &KernelIr, constants: &Constants, fields: &FieldSet) -> Result<BoundKernel, KernelError> {
    let mut inputs: Vec<(String, usize)> = Vec::new();
    let mut spans = Vec::with_capacity(ir.components.len());
    let mut monomials = Vec::new();
    let mut loads = Vec::new();
    let mut unit: Option<Dimension> = None;

    for component in &ir.components {
        let first = monomials.len();
        for m in component {
            let mut coefficient = m.coefficient;
            let mut dim = Dimension::NONE;
            for name in &m.constants {
                let q = constants
                    .get(name)
                    .ok_or_else(|| KernelError::UnknownConstant(name.clone()))?;
                coefficient *= q.value();
                dim = dim + q.dim();
            }
            let start = loads.len();
            for op in &m.operands {
                let field = fields
                    .get(&op.field)
                    .map_err(|_| KernelError::UnknownField(op.field.clone()))?;
                let offset = match (op.component, field.rank()) {
                    (Some(c), Rank::Vector) => u32::from(c),
                    (None, Rank::Scalar) => 0,
                    (Some(c), Rank::Scalar) => {
                        return Err(KernelError::ComponentOutOfRange(format!(
                            "`{}` is a scalar field but component {c} was requested",
                            op.field
                        )))
                    }
                    (None, Rank::Vector) => {
                        return Err(KernelError::ComponentOutOfRange(format!(
                            "`{}` is a vector field and needs an index",
                            op.field
                        )))
                    }
                };
                dim = dim + field.unit();
                let slot = match inputs.iter().position(|(n, _)| *n == op.field) {
                    Some(s) => s,
                    None => {
                        inputs.push((op.field.clone(), field.components()));
                        inputs.len() - 1
                    }
                };
                loads.push(Load {
                    slot: slot as u32,
                    offset,
                    stride: field.components() as u32,
                });
            }
            match unit {
                None => unit = Some(dim),
                Some(u) if u != dim => {
                    return Err(KernelError::UnitMismatch {
                        output: ir.output.clone(),
                        expected: u,
                        found: dim,
                    })
                }
                Some(_) => {}
            }
            monomials.push(BoundMonomial {
                coefficient,
                loads: start..loads.len(),
            });
        }
        spans.push(first..monomials.len());
    }

    Ok(BoundKernel {
        ir: ir.clone(),
        unit,
        inputs,
        spans,
        monomials,
        loads,
    })
}

pub(super) fn check_output(name: &str, rank: Rank, fields: &FieldSet, output: &Field) -> Result<(), KernelError> {
    let shape_err = |reason: String| KernelError::OutputShape {
        name: output.name().to_string(),
        reason,
    };
    if output.rank() != rank {
        return Err(shape_err(format!("kernel `{name}` produces {rank:?}, field is {:?}", output.rank())));
    }
    if output.mesh() != fields.mesh() {
        return Err(shape_err("mesh differs from the input fields".into()));
    }
    Ok(())
}

/// Execute a bound kernel over every site, writing `output`.
///
/// Monomials are summed left to right in canonical order, so results are
/// bit-reproducible.
pub fn run_compiled(bk: &BoundKernel, fields: &FieldSet, output: &mut Field) -> Result<(), KernelError> {
    check_output(&bk.ir.output, bk.ir.rank, fields, output)?;
    let n = fields.mesh().site_count();
    let mut data: Vec<&[f64]> = Vec::with_capacity(bk.inputs.len());
    for (name, components) in &bk.inputs {
        let f = fields.get(name).map_err(|_| KernelError::UnknownField(name.clone()))?;
        if f.components() != *components {
            return Err(KernelError::ComponentOutOfRange(format!(
                "`{name}` changed shape since the kernel was bound"
            )));
        }
        data.push(f.data());
    }
    if let Some(u) = bk.unit {
        output.set_unit(u);
    }

    let out_c = bk.spans.len();
    let out = output.data_mut();
    for site in 0..n {
        for (c, span) in bk.spans.iter().enumerate() {
            let mut acc = 0.0;
            for m in &bk.monomials[span.clone()] {
                let mut p = m.coefficient;
                for load in &bk.loads[m.loads.clone()] {
                    p *= data[load.slot as usize][site * load.stride as usize + load.offset as usize];
                }
                acc += p;
            }
            out[site * out_c + c] = acc;
        }
    }
    Ok(())
}
