//! Numerical laboratory for the geometry of the space of Kähler potentials on
//! the flat two-torus: the Mabuchi metric, ε-approximate geodesics, the
//! Calabi flow, and experiments probing non-positive curvature.

pub mod error;
pub mod flow;
pub mod geodesic;
pub mod grid;
pub mod io;
pub mod kahler;
pub mod krylov;
pub mod npc;
pub mod par;
pub mod report;
pub mod spectral;
pub mod suite;

pub use error::{FlowError, FormatError, GeometryError, GridError, LabError, SolveError};
pub use grid::{Field, Grid};
pub use kahler::{make_metric, ComplexField, MetricState};
pub use report::ExperimentReport;
