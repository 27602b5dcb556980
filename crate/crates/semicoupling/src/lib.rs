//! Optimal semicouplings between a continuum mass distribution and finite
//! point patterns.
//!
//! A semicoupling of Lebesgue measure and a weighted point pattern is a
//! transport plan whose first marginal is dominated by Lebesgue measure and
//! whose second marginal equals the pattern; surplus continuum mass is left
//! behind at zero cost. Costs are radial, `c(x, y) = theta(|x - y|)` for a
//! strictly increasing scale `theta`.
//!
//! The crate provides
//!
//! * cost scales (powers, spliced logarithmic corrections, tabulated),
//! * dyadic boxes, grids and point patterns,
//! * an exact integral solver on grid discretizations with a dual
//!   optimality certificate,
//! * a power-diagram solver for the quadratic cost in the plane,
//! * closed-form costs for the box merge and rescale transport maps,
//! * structural checks (monotonicity, efficiency, volume accounting),
//! * Monte Carlo experiments for per-volume cost estimates.
//!
//! Numeric kernels are generic over the [`Real`] scalar trait; the type
//! aliases at the crate root fix `f64`, which every consumer should use
//! unless there is a concrete reason not to.

pub mod analytic;
pub mod checks;
pub mod experiments;
pub mod flow;
pub mod geometry;
pub mod laguerre;
pub mod pointprocess;
pub mod real;
pub mod scales;
pub mod solver;

pub use real::Real;

/// Errors shared by all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("mass quantization: {0}")]
    Quantization(String),
    #[error("infeasible transport problem: {0}")]
    Infeasible(String),
    #[error("optimality certificate failed: {0}")]
    Uncertified(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Concrete `f64` instantiations of the main types.
pub type Scale = scales::CostScale<f64>;
pub type Pattern = geometry::PointPattern<f64>;
pub type Grid = geometry::GridMeasure<f64>;
pub type Cell = geometry::ConvexCell<f64>;
pub type Plan = solver::TransportPlan<f64>;
pub type Report = solver::SolveReport<f64>;
pub type Solved = solver::Solved<f64>;
pub type Diagram = laguerre::LaguerreDiagram<f64>;
