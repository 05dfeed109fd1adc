//! Adaptive algebraic multigrid coarsening driven by Gaussian-process models
//! of algebraically smooth error.
//!
//! Test vectors smoothed by colored Gauss–Seidel are treated as samples of
//! a Gaussian field over the matrix graph. Their covariance is estimated
//! either directly (empirical covariance) or by fitting an exponential or
//! spherical semivariogram against graph distance. Local ordinary Kriging
//! then yields interpolation weights and predictive variances, and coarse
//! variables are selected greedily where the predictive variance is
//! largest. The resulting two-grid method is evaluated by its asymptotic
//! convergence factor and as a preconditioner for conjugate gradients.

pub mod coarsen;
pub mod covariance;
pub mod error;
pub mod io;
pub mod kriging;
pub mod metric;
pub mod pipeline;
pub mod problem;
pub mod smoother;
pub mod sparse;
pub mod twogrid;

pub use coarsen::{coarsen, CoarsenOptions, InterpolationOperator, PartitionState, StopCriterion};
pub use covariance::{
    CovarianceSource, EmpiricalCovariance, EmpiricalSemivariogram, MeanMode, ModelFamily,
    ParametricModel,
};
pub use error::{Error, Result};
pub use kriging::{KrigingStencil, LocalCovariance, MeanHandling};
pub use metric::{DistanceKind, DistanceOracle};
pub use pipeline::{run_solve, CovarianceSpec, ModelKind, RunConfig, RunOutcome};
pub use problem::{CaseLabel, DiffusionCoefficients, ProblemInstance};
pub use smoother::{Coloring, TestVectorSet};
pub use sparse::SparseMatrix;
pub use twogrid::{SolveReport, TwoGridOperator};
