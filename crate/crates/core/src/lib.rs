//! Field-simulation engine: dimensioned quantities, cell-centred meshes and
//! fields, an index-notation equation language expanded into flat kernels, a
//! lazy dependency graph, finite-difference stencils, a micromagnetic layer and
//! an adaptive Runge-Kutta integrator, plus a config-driven runner.

pub mod config;
pub mod deps;
pub mod dsl;
pub mod integrate;
pub mod kernel;
pub mod llg;
pub mod mesh;
pub mod quantity;
pub mod runner;
pub mod stencil;
