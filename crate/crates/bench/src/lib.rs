//! Shared fixtures for the benchmarks.

use gpamg::pipeline::{empirical_semivariogram, VariogramOptions};
use gpamg::smoother::generate_test_vectors;
use gpamg::{
    coarsen, CaseLabel, CoarsenOptions, CovarianceSource, EmpiricalSemivariogram, InterpolationOperator,
    ParametricModel, ProblemInstance, RunConfig, TestVectorSet, TwoGridOperator,
};

/// A generated case with one smoothed test vector and a fitted model.
pub struct Fixture {
    pub problem: ProblemInstance,
    pub vectors: TestVectorSet,
    pub semivariogram: EmpiricalSemivariogram,
    pub model: ParametricModel,
    pub config: RunConfig,
}

impl Fixture {
    pub fn new(case: CaseLabel) -> Self {
        let config = RunConfig::for_case(case, "sph-1".parse().unwrap());
        let problem = case.generate().unwrap();
        let vectors = generate_test_vectors(&problem.matrix, 1, config.nu, config.seed).unwrap();
        let semivariogram =
            empirical_semivariogram(&problem, &vectors, &VariogramOptions::default(), config.seed).unwrap();
        let model = gpamg::covariance::fit_semivariogram(&semivariogram, gpamg::ModelFamily::Spherical)
            .unwrap()
            .model;
        Self {
            problem,
            vectors,
            semivariogram,
            model,
            config,
        }
    }

    pub fn coarsen_options(&self) -> CoarsenOptions {
        self.config.coarsen_options(self.problem.n())
    }

    pub fn interpolation(&self) -> InterpolationOperator {
        let source = CovarianceSource::Parametric(self.model);
        coarsen(&self.problem, &source, &self.coarsen_options()).unwrap().1
    }

    pub fn two_grid(&self) -> TwoGridOperator {
        TwoGridOperator::new(&self.problem.matrix, &self.interpolation().matrix).unwrap()
    }
}
