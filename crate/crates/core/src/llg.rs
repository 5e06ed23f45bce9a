//! Micromagnetics on top of the generic field engine.
//!
//! The effective field is wired as dependency-graph rules:
//!
//! ```text
//! m ──laplacian──▶ Hex ─┐
//! m, e ──kernel──▶ Hani ─┼─kernel─▶ H ──┐
//!             Happ ──────┘              ├─kernel─▶ dmdt
//! m ────────────────────────────────────┘
//! ```
//!
//! and `dmdt` is the Landau-Lifshitz-Gilbert right-hand side
//! `c1 m×H + c2 m×(m×H)` written in index notation ([`DMDT_SOURCE`]).

use std::f64::consts::PI;

use thiserror::Error;

use crate::deps::{Action, DepGraph, EngineError, Rule};
use crate::dsl::{self, DslError, DMDT_SOURCE};
use crate::kernel::{bind, expand, Constants, KernelError, KernelIr};
use crate::mesh::{Field, FieldError, FieldSet, Mesh, Rank};
use crate::quantity::{Dimension, Quantity, UnitError};
use crate::stencil::LaplacianOp;

/// Vacuum permeability in kg m A^-2 s^-2.
pub const MU0: f64 = 4.0 * PI * 1e-7;
/// Default gyromagnetic ratio in m A^-1 s^-1.
pub const DEFAULT_GAMMA: f64 = 2.211e5;

pub const FIELD_M: &str = "m";
pub const FIELD_EASY_AXIS: &str = "e";
pub const FIELD_APPLIED: &str = "Happ";
pub const FIELD_EXCHANGE: &str = "Hex";
pub const FIELD_ANISOTROPY: &str = "Hani";
pub const FIELD_EFFECTIVE: &str = "H";
pub const FIELD_DMDT: &str = "dmdt";

pub const ANISOTROPY_SOURCE: &str = "Hani(i) <- ka * e(i) * e(j) * m(j)";
pub const EFFECTIVE_FIELD_SOURCE: &str = "H(i) <- Happ(i) + Hex(i) + Hani(i)";

pub const UNIT_FIELD: &str = "A/m";
pub const UNIT_MS: &str = "A/m";
pub const UNIT_EXCHANGE: &str = "J/m";
pub const UNIT_ANISOTROPY: &str = "J/m^3";
pub const UNIT_GAMMA: &str = "m/A/s";

#[derive(Debug, Error)]
pub enum LlgError {
    #[error("invalid material parameters: {0}")]
    InvalidParams(String),
    #[error("`{name}` must be in {expected}, got {found}")]
    UnitMismatch {
        name: String,
        expected: String,
        found: Dimension,
    },
    #[error(transparent)]
    Unit(#[from] UnitError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn expect_unit(name: &str, q: &Quantity, unit: &str) -> Result<(), LlgError> {
    let dim = Dimension::parse(unit)?;
    if q.dim() != dim {
        return Err(LlgError::UnitMismatch {
            name: name.to_string(),
            expected: unit.to_string(),
            found: q.dim(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    /// Saturation magnetisation, A/m.
    pub ms: Quantity,
    /// Exchange stiffness, J/m.
    pub a_ex: Quantity,
    /// Uniaxial anisotropy constant, J/m^3.
    pub k_u: Quantity,
    pub easy_axis: [f64; 3],
    /// Gilbert damping, dimensionless.
    pub alpha: f64,
    /// Gyromagnetic ratio, m/(A s).
    pub gamma: Quantity,
    /// Overrides for the precession and damping coefficients, m/(A s).
    pub c1: Option<Quantity>,
    pub c2: Option<Quantity>,
}

impl MaterialParams {
    /// Parameters with the default gyromagnetic ratio and no anisotropy.
    pub fn new(ms: Quantity, a_ex: Quantity, alpha: f64) -> MaterialParams {
        MaterialParams {
            ms,
            a_ex,
            k_u: Quantity::new(0.0, UNIT_ANISOTROPY).expect("static unit"),
            easy_axis: [0.0, 0.0, 1.0],
            alpha,
            gamma: Quantity::new(DEFAULT_GAMMA, UNIT_GAMMA).expect("static unit"),
            c1: None,
            c2: None,
        }
    }

    pub fn with_anisotropy(mut self, k_u: Quantity, easy_axis: [f64; 3]) -> MaterialParams {
        self.k_u = k_u;
        self.easy_axis = easy_axis;
        self
    }

    pub fn validate(&self) -> Result<(), LlgError> {
        expect_unit("Ms", &self.ms, UNIT_MS)?;
        expect_unit("A", &self.a_ex, UNIT_EXCHANGE)?;
        expect_unit("K", &self.k_u, UNIT_ANISOTROPY)?;
        expect_unit("gamma", &self.gamma, UNIT_GAMMA)?;
        for (name, c) in [("c1", &self.c1), ("c2", &self.c2)] {
            if let Some(c) = c {
                expect_unit(name, c, UNIT_GAMMA)?;
            }
        }
        if self.ms.value() <= 0.0 {
            return Err(LlgError::InvalidParams("Ms must be positive".into()));
        }
        if self.a_ex.value() < 0.0 {
            return Err(LlgError::InvalidParams("A must be non-negative".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(LlgError::InvalidParams("alpha must be finite and non-negative".into()));
        }
        let norm = self.easy_axis.iter().map(|x| x * x).sum::<f64>().sqrt();
        if self.k_u.value() != 0.0 && (norm - 1.0).abs() > 1e-12 {
            return Err(LlgError::InvalidParams(format!("easy axis must be a unit vector, |e| = {norm}")));
        }
        Ok(())
    }

    pub fn mu0() -> Quantity {
        Quantity::new(MU0, "kg*m/A^2/s^2").expect("static unit")
    }

    /// `2 A / (mu0 Ms)`, multiplies the Laplacian of m. Units A m.
    pub fn exchange_prefactor(&self) -> Result<Quantity, LlgError> {
        Ok(self.a_ex.scale(2.0)?.div(Self::mu0().mul(self.ms)?)?)
    }

    /// `2 K / (mu0 Ms)`, the anisotropy field strength. Units A/m.
    pub fn anisotropy_prefactor(&self) -> Result<Quantity, LlgError> {
        Ok(self.k_u.scale(2.0)?.div(Self::mu0().mul(self.ms)?)?)
    }

    pub fn coefficients(&self) -> Result<LlgCoefficients, LlgError> {
        let reduced = self.gamma.scale(1.0 / (1.0 + self.alpha * self.alpha))?;
        Ok(LlgCoefficients {
            c1: match self.c1 {
                Some(c) => c,
                None => reduced.scale(-1.0)?,
            },
            c2: match self.c2 {
                Some(c) => c,
                None => reduced.scale(-self.alpha)?,
            },
        })
    }
}

/// Coefficients of `dm/dt = c1 m×H + c2 m×(m×H)`, in m/(A s).
///
/// Defaults to the Landau-Lifshitz form `c1 = -γ'`, `c2 = -α γ'` with
/// `γ' = γ / (1 + α²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlgCoefficients {
    pub c1: Quantity,
    pub c2: Quantity,
}

impl LlgCoefficients {
    pub fn constants(&self) -> Constants {
        [("c1".to_string(), self.c1), ("c2".to_string(), self.c2)].into_iter().collect()
    }
}

/// A magnetic body on a mesh: the magnetisation plus every derived field,
/// kept lazily up to date by a [`DepGraph`].
#[derive(Debug)]
pub struct Micromagnet {
    graph: DepGraph,
    params: MaterialParams,
    kernels: Vec<(String, KernelIr)>,
}

impl Micromagnet {
    /// Build the field graph. `m` starts as zero; set it with
    /// [`Micromagnet::set_magnetization`].
    pub fn new(mesh: Mesh, params: MaterialParams, applied: [f64; 3]) -> Result<Micromagnet, LlgError> {
        params.validate()?;
        let a_per_m = Dimension::parse(UNIT_FIELD)?;
        let mut set = FieldSet::new(mesh);
        set.add(FIELD_M, Rank::Vector, Dimension::NONE)?;
        set.add(FIELD_EASY_AXIS, Rank::Vector, Dimension::NONE)?.fill(&params.easy_axis)?;
        set.add(FIELD_APPLIED, Rank::Vector, a_per_m)?.fill(&applied)?;
        for name in [FIELD_EXCHANGE, FIELD_ANISOTROPY, FIELD_EFFECTIVE] {
            set.add(name, Rank::Vector, a_per_m)?;
        }
        set.add(FIELD_DMDT, Rank::Vector, Dimension::parse("1/s")?)?;

        let mut graph = DepGraph::new(set);
        graph.add_rule(Rule::new(
            "exchange",
            &[FIELD_M],
            FIELD_EXCHANGE,
            Action::Laplacian {
                op: LaplacianOp::new(mesh),
                input: FIELD_M.into(),
                scale: params.exchange_prefactor()?,
            },
        ))?;

        let mut magnet = Micromagnet {
            graph,
            params,
            kernels: Vec::new(),
        };
        let ka: Constants = [("ka".to_string(), magnet.params.anisotropy_prefactor()?)].into_iter().collect();
        magnet.add_kernel_rule("anisotropy", ANISOTROPY_SOURCE, &ka)?;
        magnet.add_kernel_rule("effective_field", EFFECTIVE_FIELD_SOURCE, &Constants::new())?;
        let coefficients = magnet.params.coefficients()?.constants();
        magnet.add_kernel_rule("llg", DMDT_SOURCE, &coefficients)?;
        Ok(magnet)
    }

    fn add_kernel_rule(&mut self, id: &str, source: &str, constants: &Constants) -> Result<(), LlgError> {
        let ir = expand(&dsl::parse(source)?)?;
        let bk = bind(&ir, constants, self.graph.fields())?;
        self.graph.add_rule(Rule::kernel(id, bk))?;
        self.kernels.push((id.to_string(), ir));
        Ok(())
    }

    /// Register an extra derived field defined by an index-notation
    /// assignment. The output field is created with the unit the kernel
    /// produces.
    pub fn add_equation(&mut self, source: &str, constants: &Constants) -> Result<String, LlgError> {
        let eq = dsl::parse(source)?;
        let ir = expand(&eq)?;
        let bk = bind(&ir, constants, self.graph.fields())?;
        let unit = bk.output_unit().unwrap_or(Dimension::NONE);
        let name = eq.target.name.clone();
        self.graph
            .add_field(Field::new(name.clone(), bk.rank(), *self.mesh(), unit))?;
        let id = format!("eq:{name}");
        self.graph.add_rule(Rule::kernel(id.clone(), bk))?;
        self.kernels.push((id, ir));
        Ok(name)
    }

    pub fn mesh(&self) -> &Mesh {
        self.graph.fields().mesh()
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn graph(&self) -> &DepGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut DepGraph {
        &mut self.graph
    }

    /// Expanded kernels by rule id, in registration order.
    pub fn kernels(&self) -> &[(String, KernelIr)] {
        &self.kernels
    }

    pub fn magnetization(&self) -> &Field {
        self.graph.field(FIELD_M).expect("m is always present")
    }

    /// Writing the current values again leaves every derived field valid.
    pub fn set_magnetization(&mut self, values: &[f64]) -> Result<(), LlgError> {
        if self.magnetization().data() == values {
            return Ok(());
        }
        let mut result = Ok(());
        self.graph.write(FIELD_M, |m| result = m.copy_from_slice(values))?;
        Ok(result?)
    }

    pub fn set_applied_field(&mut self, h: [f64; 3]) -> Result<(), LlgError> {
        let mut result = Ok(());
        self.graph.write(FIELD_APPLIED, |f| result = f.fill(&h))?;
        Ok(result?)
    }

    /// Bring a field up to date and return it.
    pub fn request(&mut self, name: &str) -> Result<&Field, LlgError> {
        Ok(self.graph.request(name)?)
    }

    pub fn effective_field(&mut self) -> Result<&Field, LlgError> {
        self.request(FIELD_EFFECTIVE)
    }

    pub fn dmdt(&mut self) -> Result<&Field, LlgError> {
        self.request(FIELD_DMDT)
    }

    /// Evaluate dm/dt for the magnetisation `m` (component-fastest layout).
    pub fn rhs(&mut self, m: &[f64], dmdt: &mut [f64]) -> Result<(), LlgError> {
        self.set_magnetization(m)?;
        let out = self.dmdt()?;
        dmdt.copy_from_slice(out.data());
        Ok(())
    }

    /// Total Zeeman, anisotropy and exchange energy in joules.
    ///
    /// `E = -mu0 Ms V sum m·(Happ + Hex/2 + Hani/2)`, which for the zero-flux
    /// stencil equals the discrete exchange sum `A sum |Δm|²/h² V`.
    pub fn energy(&mut self) -> Result<f64, LlgError> {
        self.graph.request(FIELD_EXCHANGE)?;
        self.graph.request(FIELD_ANISOTROPY)?;
        let fields = self.graph.fields();
        let m = fields.get(FIELD_M)?.data();
        let happ = fields.get(FIELD_APPLIED)?.data();
        let hex = fields.get(FIELD_EXCHANGE)?.data();
        let hani = fields.get(FIELD_ANISOTROPY)?.data();
        let mut sum = 0.0;
        for k in 0..m.len() {
            sum += m[k] * (happ[k] + 0.5 * hex[k] + 0.5 * hani[k]);
        }
        Ok(-MU0 * self.params.ms.value() * self.mesh().cell_volume() * sum)
    }
}

/// `H_eff = H_applied + (2A/(mu0 Ms)) laplacian(m) + (2K/(mu0 Ms)) (m·e) e`.
pub fn build_effective_field(params: &MaterialParams, m: &Field, applied: &Field) -> Result<Field, LlgError> {
    let a_per_m = Dimension::parse(UNIT_FIELD)?;
    if applied.unit() != a_per_m {
        return Err(LlgError::UnitMismatch {
            name: applied.name().to_string(),
            expected: UNIT_FIELD.into(),
            found: applied.unit(),
        });
    }
    if !m.unit().is_dimensionless() {
        return Err(LlgError::UnitMismatch {
            name: m.name().to_string(),
            expected: "1".into(),
            found: m.unit(),
        });
    }
    if m.mesh() != applied.mesh() {
        return Err(FieldError::MeshMismatch(applied.name().to_string()).into());
    }
    let mut magnet = Micromagnet::new(*m.mesh(), params.clone(), [0.0; 3])?;
    magnet.set_magnetization(m.data())?;
    magnet.graph.write(FIELD_APPLIED, |h| h.data_mut().copy_from_slice(applied.data()))?;
    Ok(magnet.effective_field()?.clone())
}

/// `dm/dt = c1 m×H + c2 m×(m×H)` evaluated by the expanded index-notation kernel.
pub fn llg_rhs(coefficients: &LlgCoefficients, m: &Field, h_eff: &Field) -> Result<Field, LlgError> {
    let mut set = FieldSet::new(*m.mesh());
    let mut mm = Field::new(FIELD_M, Rank::Vector, *m.mesh(), m.unit());
    mm.copy_from_slice(m.data())?;
    set.insert(mm)?;
    let mut h = Field::new(FIELD_EFFECTIVE, Rank::Vector, *h_eff.mesh(), h_eff.unit());
    h.copy_from_slice(h_eff.data())?;
    set.insert(h)?;
    let bk = bind(&expand(&dsl::parse(DMDT_SOURCE)?)?, &coefficients.constants(), &set)?;
    let mut out = Field::new(FIELD_DMDT, Rank::Vector, *m.mesh(), Dimension::NONE);
    crate::kernel::run_compiled(&bk, &set, &mut out)?;
    Ok(out)
}

/// Largest |dm/dt| over sites.
pub fn max_torque(dmdt: &Field) -> f64 {
    dmdt.max_norm()
}

/// Largest site norm of a packed 3-vector slice.
pub fn max_triple_norm(values: &[f64]) -> f64 {
    values
        .chunks_exact(3)
        .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .fold(0.0, f64::max)
}
