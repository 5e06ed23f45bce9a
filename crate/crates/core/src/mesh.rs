//! Regular 3-D grids and the per-site field storage every kernel works on.
//!
//! Sites are cell-centred: site `(ix, iy, iz)` sits at
//! `((ix + 0.5) dx, (iy + 0.5) dy, (iz + 0.5) dz)`. The linear site index is
//! `ix + nx * (iy + ny * iz)` and field data is component-fastest, so a
//! rank-1 field stores `[x0, y0, z0, x1, y1, z1, ...]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::quantity::{Dimension, UnitError};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("field `{0}` already exists")]
    DuplicateName(String),
    #[error("no field named `{0}`")]
    UnknownField(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("field `{0}` lives on a different mesh")]
    MeshMismatch(String),
    #[error("snapshot line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
    #[error(transparent)]
    Unit(#[from] UnitError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Mesh {
    pub fn new(n: [usize; 3], spacing: [f64; 3]) -> Result<Mesh, FieldError> {
        if n.contains(&0) {
            return Err(FieldError::InvalidMesh(format!("cell counts must be >= 1, got {n:?}")));
        }
        if spacing.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return Err(FieldError::InvalidMesh(format!(
                "spacings must be positive and finite, got {spacing:?}"
            )));
        }
        Ok(Mesh {
            nx: n[0],
            ny: n[1],
            nz: n[2],
            dx: spacing[0],
            dy: spacing[1],
            dz: spacing[2],
        })
    }

    pub fn site_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    #[inline]
    pub fn flatten(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.nx * (iy + self.ny * iz)
    }

    #[inline]
    pub fn unflatten(&self, site: usize) -> (usize, usize, usize) {
        let ix = site % self.nx;
        let rest = site / self.nx;
        (ix, rest % self.ny, rest / self.ny)
    }

    /// Cell-centre coordinates of a site, in metres.
    pub fn site_center(&self, site: usize) -> [f64; 3] {
        let (ix, iy, iz) = self.unflatten(site);
        [
            (ix as f64 + 0.5) * self.dx,
            (iy as f64 + 0.5) * self.dy,
            (iz as f64 + 0.5) * self.dz,
        ]
    }
}

/// Tensor rank of a field. Vectors always have three components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rank {
    Scalar,
    Vector,
}

impl Rank {
    pub fn from_index(rank: u8) -> Option<Rank> {
        match rank {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector),
            _ => None,
        }
    }

    pub fn as_index(self) -> u8 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
        }
    }

    pub fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    name: String,
    rank: Rank,
    mesh: Mesh,
    unit: Dimension,
    data: Vec<f64>,
}

impl Field {
    pub fn new(name: impl Into<String>, rank: Rank, mesh: Mesh, unit: Dimension) -> Field {
        Field {
            name: name.into(),
            rank,
            mesh,
            unit,
            data: vec![0.0; mesh.site_count() * rank.components()],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn components(&self) -> usize {
        self.rank.components()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn unit(&self) -> Dimension {
        self.unit
    }

    pub fn set_unit(&mut self, unit: Dimension) {
        self.unit = unit;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn site(&self, site: usize) -> &[f64] {
        let c = self.components();
        &self.data[site * c..(site + 1) * c]
    }

    pub fn site_mut(&mut self, site: usize) -> &mut [f64] {
        let c = self.components();
        &mut self.data[site * c..(site + 1) * c]
    }

    /// Replace all data, checking the length.
    pub fn copy_from_slice(&mut self, values: &[f64]) -> Result<(), FieldError> {
        if values.len() != self.data.len() {
            return Err(FieldError::ShapeMismatch {
                expected: self.data.len(),
                got: values.len(),
            });
        }
        self.data.copy_from_slice(values);
        Ok(())
    }

    /// Sample `f` at every site centre. `f` must return one value per component.
    pub fn set_from_function<F, V>(&mut self, mut f: F) -> Result<(), FieldError>
    where
        F: FnMut([f64; 3]) -> V,
        V: AsRef<[f64]>,
    {
        let c = self.components();
        for site in 0..self.mesh.site_count() {
            let v = f(self.mesh.site_center(site));
            let v = v.as_ref();
            if v.len() != c {
                return Err(FieldError::ShapeMismatch {
                    expected: c,
                    got: v.len(),
                });
            }
            self.data[site * c..(site + 1) * c].copy_from_slice(v);
        }
        Ok(())
    }

    pub fn fill(&mut self, value: &[f64]) -> Result<(), FieldError> {
        self.set_from_function(|_| value)
    }

    /// Per-component arithmetic mean over sites.
    pub fn average(&self) -> Vec<f64> {
        let c = self.components();
        let mut sum = vec![0.0; c];
        for chunk in self.data.chunks_exact(c) {
            for (s, v) in sum.iter_mut().zip(chunk) {
                *s += v;
            }
        }
        let n = self.mesh.site_count() as f64;
        sum.into_iter().map(|s| s / n).collect()
    }

    /// Largest Euclidean norm of any site's components.
    pub fn max_norm(&self) -> f64 {
        self.data
            .chunks_exact(self.components())
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Write the text snapshot: one header line, then one line per site.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        let m = &self.mesh;
        let unit = self.unit.unit_string();
        writeln!(
            w,
            "# field={} rank={} nx={} ny={} nz={} dx={:e} dy={:e} dz={:e} unit={}",
            self.name,
            self.rank.as_index(),
            m.nx,
            m.ny,
            m.nz,
            m.dx,
            m.dy,
            m.dz,
            if unit.is_empty() { "1" } else { &unit }
        )?;
        let mut line = String::new();
        for chunk in self.data.chunks_exact(self.components()) {
            line.clear();
            for (k, v) in chunk.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                write!(line, "{v:.16e}").expect("writing to a String cannot fail");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Field, FieldError> {
        let bad = |line: usize, reason: String| FieldError::Snapshot { line, reason };
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty snapshot".into()))??;
        let header = header
            .strip_prefix("# ")
            .ok_or_else(|| bad(1, "header must start with `# `".into()))?;
        let (head, unit) = header
            .split_once(" unit=")
            .ok_or_else(|| bad(1, "missing unit".into()))?;
        let mut keys = BTreeMap::new();
        for kv in head.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(1, format!("expected key=value, got `{kv}`")))?;
            keys.insert(k, v);
        }
        let get = |k: &str| {
            keys.get(k)
                .copied()
                .ok_or_else(|| bad(1, format!("missing header key `{k}`")))
        };
        let int = |k: &str| -> Result<usize, FieldError> {
            get(k)?.parse().map_err(|_| bad(1, format!("bad integer for `{k}`")))
        };
        let real = |k: &str| -> Result<f64, FieldError> {
            get(k)?.parse().map_err(|_| bad(1, format!("bad real for `{k}`")))
        };
        let rank = get("rank")?
            .parse::<u8>()
            .ok()
            .and_then(Rank::from_index)
            .ok_or_else(|| bad(1, "rank must be 0 or 1".into()))?;
        let mesh = Mesh::new(
            [int("nx")?, int("ny")?, int("nz")?],
            [real("dx")?, real("dy")?, real("dz")?],
        )?;
        let unit = Dimension::parse(unit.trim())?;
        let mut field = Field::new(get("field")?, rank, mesh, unit);

        let c = rank.components();
        let mut site = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if site >= mesh.site_count() {
                return Err(bad(lineno + 2, "more rows than sites".into()));
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(lineno + 2, "bad value".into()))?;
            if vals.len() != c {
                return Err(bad(lineno + 2, format!("expected {c} values, got {}", vals.len())));
            }
            field.site_mut(site).copy_from_slice(&vals);
            site += 1;
        }
        if site != mesh.site_count() {
            return Err(FieldError::ShapeMismatch {
                expected: mesh.site_count(),
                got: site,
            });
        }
        Ok(field)
    }
}

/// Named fields sharing one mesh.
#[derive(Debug, Clone)]
pub struct FieldSet {
    mesh: Mesh,
    fields: BTreeMap<String, Field>,
}

impl FieldSet {
    pub fn new(mesh: Mesh) -> FieldSet {
        FieldSet {
            mesh,
            fields: BTreeMap::new(),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Register a zero-initialised field.
    pub fn add(&mut self, name: &str, rank: Rank, unit: Dimension) -> Result<&mut Field, FieldError> {
        if self.fields.contains_key(name) {
            return Err(FieldError::DuplicateName(name.to_string()));
        }
        let field = Field::new(name, rank, self.mesh, unit);
        Ok(self.fields.entry(name.to_string()).or_insert(field))
    }

    /// Insert an existing field. It must live on this set's mesh.
    pub fn insert(&mut self, field: Field) -> Result<(), FieldError> {
        if *field.mesh() != self.mesh {
            return Err(FieldError::MeshMismatch(field.name.clone()));
        }
        if self.fields.contains_key(field.name()) {
            return Err(FieldError::DuplicateName(field.name.clone()));
        }
        self.fields.insert(field.name.clone(), field);
        Ok(())
    }

    /// Remove a field, e.g. to use it as a kernel output while the rest of
    /// the set is borrowed as inputs.
    pub fn take(&mut self, name: &str) -> Result<Field, FieldError> {
        self.fields
            .remove(name)
            .ok_or_else(|| FieldError::UnknownField(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Field, FieldError> {
        self.fields
            .get(name)
            .ok_or_else(|| FieldError::UnknownField(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Field, FieldError> {
        self.fields
            .get_mut(name)
            .ok_or_else(|| FieldError::UnknownField(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fields.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}
