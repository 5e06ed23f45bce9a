//! Seven-point finite-difference Laplacian with zero-flux boundaries.
//!
//! Ghost cells take the value of the adjacent boundary cell, so a face
//! contributes `(u_neighbour - u) / h^2` and the missing face contributes
//! nothing. An axis with a single cell therefore drops out entirely.

use thiserror::Error;

use crate::mesh::{Field, FieldSet, Mesh};

#[derive(Debug, Error)]
pub enum StencilError {
    #[error("field `{0}` is not on the operator's mesh or has a different rank")]
    MeshMismatch(String),
    #[error("input and output are the same field `{0}`")]
    AliasedOutput(String),
    #[error(transparent)]
    Field(#[from] crate::mesh::FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianOp {
    mesh: Mesh,
    inv_h2: [f64; 3],
}

impl LaplacianOp {
    pub fn new(mesh: Mesh) -> LaplacianOp {
        LaplacianOp {
            mesh,
            inv_h2: mesh.spacing().map(|h| 1.0 / (h * h)),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// `output = scale * laplacian(input)`, per component.
    pub fn apply_scaled(&self, input: &Field, output: &mut Field, scale: f64) -> Result<(), StencilError> {
        for f in [input, &*output] {
            if *f.mesh() != self.mesh {
                return Err(StencilError::MeshMismatch(f.name().to_string()));
            }
        }
        if input.rank() != output.rank() {
            return Err(StencilError::MeshMismatch(output.name().to_string()));
        }
        let Mesh { nx, ny, nz, .. } = self.mesh;
        let c = input.components();
        let u = input.data();
        let out = output.data_mut();
        // linear-index strides of each axis
        let strides = [1, nx, nx * ny];
        let counts = [nx, ny, nz];

        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let site = self.mesh.flatten(ix, iy, iz);
                    let pos = [ix, iy, iz];
                    for k in 0..c {
                        let centre = u[site * c + k];
                        let mut acc = 0.0;
                        for axis in 0..3 {
                            if counts[axis] == 1 {
                                continue;
                            }
                            let mut faces = 0.0;
                            if pos[axis] > 0 {
                                faces += u[(site - strides[axis]) * c + k] - centre;
                            }
                            if pos[axis] + 1 < counts[axis] {
                                faces += u[(site + strides[axis]) * c + k] - centre;
                            }
                            acc += faces * self.inv_h2[axis];
                        }
                        out[site * c + k] = scale * acc;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, input: &Field, output: &mut Field) -> Result<(), StencilError> {
        self.apply_scaled(input, output, 1.0)
    }

    /// Apply between two fields of a set, looked up by name.
    pub fn apply_named(&self, fields: &mut FieldSet, input: &str, output: &str) -> Result<(), StencilError> {
        if input == output {
            return Err(StencilError::AliasedOutput(input.to_string()));
        }
        let mut out = fields.take(output)?;
        let result = fields.get(input).map_err(StencilError::from).and_then(|i| self.apply(i, &mut out));
        fields.insert(out)?;
        result
    }
}
