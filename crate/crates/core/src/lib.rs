//! Coverage control of time-varying densities by teams of mobile agents.
//!
//! Agents partition a convex domain into Voronoi cells and move so as to
//! track the density-weighted centroids of their cells. The crate provides
//! the tessellation, cell moments and their sensitivities, the distributed
//! gradient system behind the two-timescale controller, several control laws
//! and a fixed-step simulation engine.

pub mod blocks;
pub mod config;
pub mod controllers;
pub mod density;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod gradsys;
pub mod moments;

pub use blocks::BlockMatrix;
pub use config::ScenarioConfig;
pub use density::DensityField;
pub use error::{Error, Result};
pub use geometry::{project_to_domain, ConvexPolytope, NeighborGraph, VoronoiCell};
pub use gradsys::{Certificate, GradientSystem, Scheme, Splitting};
pub use controllers::{ControlLaw, ControllerSpec, FastLoop};
pub use engine::{run, Scenario, SimTrace};
