//! End-to-end runs: test vectors, covariance model, coarsening, two-grid
//! evaluation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coarsen::{coarsen, CoarsenOptions, InterpolationOperator, PartitionState, StopCriterion};
use crate::covariance::{
    bin_semivariogram, build_variogram_cloud, fit_semivariogram, median_nearest_neighbor_distance, CovarianceSource,
    EmpiricalCovariance, EmpiricalSemivariogram, FitOutcome, MeanMode, ModelFamily,
};
use crate::error::{Error, Result};
use crate::kriging::MeanHandling;
use crate::metric::{DistanceKind, DistanceOracle, DEFAULT_RADIUS};
use crate::problem::{CaseLabel, ProblemInstance};
use crate::smoother::{generate_test_vectors, TestVectorSet};
use crate::twogrid::{
    estimate_asymptotic_rate, pcg_solve, SolveReport, TwoGridOperator, DEFAULT_MAX_CYCLES, DEFAULT_REDUCTION,
    DEFAULT_STALL_TOL,
};

/// Distance cutoff of the variogram cloud, in multiples of the bin width.
pub const DEFAULT_VARIOGRAM_BINS: f64 = 10.0;
/// Total number of cloud points aimed for; the pair budget is this divided
/// by the number of test vectors.
pub const CLOUD_POINT_BUDGET: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Empirical,
    Spherical,
    Exponential,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [Self::Empirical, Self::Spherical, Self::Exponential];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Empirical => "emp",
            Self::Spherical => "sph",
            Self::Exponential => "exp",
        }
    }

    pub fn family(&self) -> Option<ModelFamily> {
        match self {
            Self::Empirical => None,
            Self::Spherical => Some(ModelFamily::Spherical),
            Self::Exponential => Some(ModelFamily::Exponential),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emp" => Ok(Self::Empirical),
            "sph" => Ok(Self::Spherical),
            "exp" => Ok(Self::Exponential),
            _ => Err(Error::InvalidArgument(format!("unknown model '{s}' (expected emp, sph or exp)"))),
        }
    }
}

/// Model kind plus number of test vectors, written `emp-10`, `sph-1`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CovarianceSpec {
    pub kind: ModelKind,
    pub k: usize,
}

impl CovarianceSpec {
    pub fn new(kind: ModelKind, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        Ok(Self { kind, k })
    }

    /// The eight columns of the result tables.
    pub fn table_columns() -> Vec<CovarianceSpec> {
        let mut v = vec![
            Self { kind: ModelKind::Empirical, k: 10 },
            Self { kind: ModelKind::Empirical, k: 100 },
        ];
        for kind in [ModelKind::Spherical, ModelKind::Exponential] {
            v.extend([1, 10, 100].map(|k| Self { kind, k }));
        }
        v
    }
}

impl fmt::Display for CovarianceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind.as_str(), self.k)
    }
}

impl FromStr for CovarianceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, k) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidArgument(format!("model spec '{s}' is not of the form kind-K")))?;
        let k = k
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad K in model spec '{s}'")))?;
        Self::new(kind.parse()?, k)
    }
}

/// Variogram cloud and binning settings; `None` picks the default.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VariogramOptions {
    pub bin_width: Option<f64>,
    pub max_distance: Option<f64>,
    pub pair_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: CaseLabel,
    pub spec: CovarianceSpec,
    pub nu: usize,
    pub seed: u64,
    pub q_max: usize,
    pub radius: f64,
    pub nc_fraction: f64,
    /// Variance tolerance; replaces the coarse fraction when set.
    pub tolerance: Option<f64>,
    pub mean_mode: MeanMode,
    pub mean_handling: MeanHandling,
    pub batching: bool,
    pub variogram: VariogramOptions,
    pub max_cycles: usize,
    pub stall_tol: f64,
    pub reduction: f64,
    pub max_iterations: usize,
}

impl RunConfig {
    /// Parameters of the result tables for `case`: a quarter of the
    /// variables coarse with caliber 4 for isotropic problems, half with
    /// caliber 2 (square) or 3 (disc) for anisotropic ones.
    pub fn for_case(case: CaseLabel, spec: CovarianceSpec) -> Self {
        let (nc_fraction, q_max) = match case {
            CaseLabel::SAniso => (0.5, 2),
            CaseLabel::CAniso => (0.5, 3),
            _ => (0.25, 4),
        };
        Self {
            case,
            spec,
            nu: 1,
            seed: 0,
            q_max,
            radius: DEFAULT_RADIUS,
            nc_fraction,
            tolerance: None,
            mean_mode: MeanMode::Zero,
            mean_handling: MeanHandling::Blup,
            batching: false,
            variogram: VariogramOptions::default(),
            max_cycles: DEFAULT_MAX_CYCLES,
            stall_tol: DEFAULT_STALL_TOL,
            reduction: DEFAULT_REDUCTION,
            max_iterations: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.spec.k == 0 {
            return bad("K must be >= 1".into());
        }
        if self.q_max == 0 {
            return bad("q_max must be >= 1".into());
        }
        if !(self.radius > 0.0) {
            return bad(format!("radius must be positive, got {}", self.radius));
        }
        if !(self.nc_fraction > 0.0 && self.nc_fraction <= 1.0) {
            return bad(format!("nc fraction must lie in (0, 1], got {}", self.nc_fraction));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return bad(format!("tolerance must be positive, got {t}"));
            }
        }
        if !(self.reduction > 0.0 && self.reduction < 1.0) {
            return bad(format!("reduction must lie in (0, 1), got {}", self.reduction));
        }
        Ok(())
    }

    pub fn stop_criterion(&self, n: usize) -> StopCriterion {
        match self.tolerance {
            Some(t) => StopCriterion::Tolerance(t),
            None => StopCriterion::Count(((self.nc_fraction * n as f64).floor() as usize).clamp(1, n)),
        }
    }

    pub fn coarsen_options(&self, n: usize) -> CoarsenOptions {
        let mut o = CoarsenOptions::new(self.stop_criterion(n));
        o.q_max = self.q_max;
        o.radius = self.radius;
        o.mean_handling = self.mean_handling;
        if self.batching {
            o = o.with_batching();
        }
        o
    }

    fn rate_seed(&self) -> u64 {
        self.seed.wrapping_add(0x5eed_0001)
    }

    fn rhs_seed(&self) -> u64 {
        self.seed.wrapping_add(0x5eed_0002)
    }
}

/// Semivariogram of `vectors` against graph distance, with defaults: bins
/// as wide as the median nearest-neighbor distance, cloud cut off after
/// ten bins, and at most `CLOUD_POINT_BUDGET / K` sampled pairs.
pub fn empirical_semivariogram(
    problem: &ProblemInstance,
    vectors: &TestVectorSet,
    opts: &VariogramOptions,
    seed: u64,
) -> Result<EmpiricalSemivariogram> {
    let delta = opts
        .bin_width
        .unwrap_or_else(|| median_nearest_neighbor_distance(&problem.matrix));
    let max_distance = opts.max_distance.unwrap_or(DEFAULT_VARIOGRAM_BINS * delta);
    let budget = opts
        .pair_budget
        .unwrap_or_else(|| (CLOUD_POINT_BUDGET / vectors.k()).max(1));
    let oracle = DistanceOracle::graph(&problem.matrix);
    let cloud = build_variogram_cloud(vectors, &oracle, max_distance, Some(budget), seed)?;
    let emp = bin_semivariogram(&cloud, delta, DistanceKind::Graph)?;
    if emp.bins.len() < 2 {
        return Err(Error::EmptySemivariogram(format!(
            "{} nonempty bins within distance {max_distance}; at least 2 are needed",
            emp.bins.len()
        )));
    }
    Ok(emp)
}

/// Generates test vectors and fits `family` to their semivariogram.
pub fn fit_case(
    problem: &ProblemInstance,
    family: ModelFamily,
    k: usize,
    nu: usize,
    seed: u64,
    opts: &VariogramOptions,
) -> Result<(EmpiricalSemivariogram, FitOutcome)> {
    let vectors = generate_test_vectors(&problem.matrix, k, nu, seed)?;
    let emp = empirical_semivariogram(problem, &vectors, opts, seed)?;
    let fit = fit_semivariogram(&emp, family)?;
    Ok((emp, fit))
}

/// Partition and interpolation of a coarsening run, with the fitted model
/// when one was used.
pub struct CoarseningOutcome {
    pub state: PartitionState,
    pub interpolation: InterpolationOperator,
    pub semivariogram: Option<EmpiricalSemivariogram>,
    pub fit: Option<FitOutcome>,
}

/// Test vectors, covariance source and greedy coarsening.
pub fn run_coarsen(problem: &ProblemInstance, cfg: &RunConfig) -> Result<CoarseningOutcome> {
    cfg.validate()?;
    let vectors = generate_test_vectors(&problem.matrix, cfg.spec.k, cfg.nu, cfg.seed)?;
    let (semivariogram, fit, source) = match cfg.spec.kind.family() {
        None => (
            None,
            None,
            CovarianceSource::Empirical(EmpiricalCovariance::new(&vectors, cfg.mean_mode)),
        ),
        Some(family) => {
            let emp = empirical_semivariogram(problem, &vectors, &cfg.variogram, cfg.seed)?;
            let fit = fit_semivariogram(&emp, family)?;
            (Some(emp), Some(fit), CovarianceSource::Parametric(fit.model))
        }
    };
    let (state, interpolation) = coarsen(problem, &source, &cfg.coarsen_options(problem.n()))?;
    Ok(CoarseningOutcome {
        state,
        interpolation,
        semivariogram,
        fit,
    })
}

pub struct RunOutcome {
    pub report: SolveReport,
    pub coarsening: CoarseningOutcome,
}

/// Runs the whole method on `problem` as configured.
pub fn run_solve(problem: &ProblemInstance, cfg: &RunConfig) -> Result<RunOutcome> {
    let n = problem.n();
    let setup = Instant::now();
    let coarsening = run_coarsen(problem, cfg)?;
    let op = TwoGridOperator::new(&problem.matrix, &coarsening.interpolation.matrix)?;
    let setup_time = setup.elapsed();

    let solve = Instant::now();
    let rate = estimate_asymptotic_rate(&op, cfg.rate_seed(), cfg.max_cycles, cfg.stall_tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rhs_seed());
    let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let pcg = pcg_solve(&op, &b, cfg.reduction, cfg.max_iterations)?;
    let solve_time = solve.elapsed();

    let report = SolveReport {
        case: problem.label.as_str().to_string(),
        model: cfg.spec.to_string(),
        k_vectors: cfg.spec.k,
        n,
        n_c: coarsening.interpolation.n_c,
        q_max: cfg.q_max,
        radius: cfg.radius,
        rate,
        pcg_iterations: pcg.iterations,
        pcg_converged: pcg.converged,
        residual_history: pcg.residual_history,
        setup_time,
        solve_time,
        diagnostics: coarsening.state.diagnostics,
    };
    Ok(RunOutcome { report, coarsening })
}

/// One table cell: the report, or the error message of a failed run.
pub type TableCell = (CovarianceSpec, std::result::Result<SolveReport, String>);

/// Runs every spec on `problem` with the case defaults of `base`.
pub fn run_table(problem: &ProblemInstance, base: &RunConfig, specs: &[CovarianceSpec]) -> Vec<TableCell> {
    specs
        .iter()
        .map(|&spec| {
            let cfg = RunConfig { spec, ..base.clone() };
            (spec, run_solve(problem, &cfg).map(|o| o.report).map_err(|e| e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_fd_square, DiffusionCoefficients};

    #[test]
    fn spec_parsing() {
        let s: CovarianceSpec = "sph-10".parse().unwrap();
        assert_eq!(s, CovarianceSpec { kind: ModelKind::Spherical, k: 10 });
        assert_eq!(s.to_string(), "sph-10");
        for bad in ["sph", "gau-1", "exp-0", "exp-x", "emp-"] {
            assert!(bad.parse::<CovarianceSpec>().is_err(), "{bad}");
        }
        assert_eq!(CovarianceSpec::table_columns().len(), 8);
    }

    #[test]
    fn case_defaults() {
        let spec = CovarianceSpec::new(ModelKind::Spherical, 1).unwrap();
        let c = RunConfig::for_case(CaseLabel::SAniso, spec);
        assert_eq!((c.nc_fraction, c.q_max, c.radius), (0.5, 2, 4.0));
        let c = RunConfig::for_case(CaseLabel::CAniso, spec);
        assert_eq!((c.nc_fraction, c.q_max), (0.5, 3));
        let c = RunConfig::for_case(CaseLabel::CIso, spec);
        assert_eq!((c.nc_fraction, c.q_max), (0.25, 4));
        assert_eq!(c.stop_criterion(2025), StopCriterion::Count(506));
    }

    #[test]
    fn small_run_is_deterministic() {
        let mut p = generate_fd_square(12, DiffusionCoefficients::ISO).unwrap();
        p.label = CaseLabel::SIso;
        for spec in ["emp-10", "exp-1", "sph-10"] {
            let cfg = RunConfig::for_case(CaseLabel::SIso, spec.parse().unwrap());
            let a = run_solve(&p, &cfg).unwrap();
            let b = run_solve(&p, &cfg).unwrap();
            assert_eq!(a.report.csv_row(), b.report.csv_row());
            assert_eq!(a.report.n_c, 36);
            assert!(a.report.pcg_converged);
            assert!(a.report.rho() < 1.0);
        }
    }

    #[test]
    fn tiny_cutoff_is_an_explicit_error() {
        let p = generate_fd_square(6, DiffusionCoefficients::ISO).unwrap();
        let opts = VariogramOptions {
            max_distance: Some(0.5),
            ..Default::default()
        };
        assert!(matches!(
            fit_case(&p, ModelFamily::Exponential, 1, 1, 0, &opts),
            Err(Error::EmptySemivariogram(_))
        ));
    }
}
