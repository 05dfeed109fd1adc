//! Covariance structure of smoothed test vectors.
//!
//! Two routes are provided: the empirical covariance of the test vectors,
//! evaluated entry by entry, and a stationary parametric model obtained by
//! fitting a semivariogram `gamma(h) = C(0) - C(h)` to the binned
//! variogram cloud.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::metric::{DistanceKind, DistanceOracle};
use crate::smoother::TestVectorSet;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    /// Test vectors are centred by construction.
    Zero,
    /// Subtract the per-variable sample mean across test vectors.
    Estimated,
}

/// Empirical covariance `(1/K) sum_k (v_i - mu_i)(v_j - mu_j)` evaluated on
/// demand; the full matrix is never formed.
#[derive(Debug, Clone)]
pub struct EmpiricalCovariance<'a> {
    vectors: &'a TestVectorSet,
    mean_mode: MeanMode,
    means: Vec<f64>,
    /// Added to every diagonal entry.
    pub epsilon: f64,
}

impl<'a> EmpiricalCovariance<'a> {
    pub fn new(vectors: &'a TestVectorSet, mean_mode: MeanMode) -> Self {
        let k = vectors.k() as f64;
        let means = match mean_mode {
            MeanMode::Zero => vec![0.0; vectors.n()],
            MeanMode::Estimated => (0..vectors.n()).map(|i| vectors.row(i).iter().sum::<f64>() / k).collect(),
        };
        Self {
            vectors,
            mean_mode,
            means,
            epsilon: 0.0,
        }
    }

    pub fn mean_mode(&self) -> MeanMode {
        self.mean_mode
    }

    pub fn vectors(&self) -> &TestVectorSet {
        self.vectors
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (vi, vj) = (self.vectors.row(i), self.vectors.row(j));
        let (mi, mj) = (self.means[i], self.means[j]);
        let s: f64 = vi.iter().zip(vj).map(|(a, b)| (a - mi) * (b - mj)).sum();
        let c = s / self.vectors.k() as f64;
        if i == j {
            c + self.epsilon
        } else {
            c
        }
    }
}

/// Free-function form of [`EmpiricalCovariance::entry`].
pub fn empirical_cov_entry(vectors: &TestVectorSet, i: usize, j: usize, mean_mode: MeanMode) -> f64 {
    EmpiricalCovariance::new(vectors, mean_mode).entry(i, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Exponential,
    Spherical,
}

impl ModelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exponential => "exp",
            Self::Spherical => "sph",
        }
    }
}

/// Stationary isotropic model with sill `sigma2` and range `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricModel {
    pub family: ModelFamily,
    pub sigma2: f64,
    pub eta: f64,
}

impl ParametricModel {
    pub fn new(family: ModelFamily, sigma2: f64, eta: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && eta > 0.0 && sigma2.is_finite() && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "model parameters must be positive, got sigma2={sigma2}, eta={eta}"
            )));
        }
        Ok(Self { family, sigma2, eta })
    }

    pub fn semivariogram(&self, h: f64) -> f64 {
        self.sigma2 - self.covariance(h)
    }

    /// `C(d) = sigma2 - gamma(d)`.
    pub fn covariance(&self, d: f64) -> f64 {
        let r = d / self.eta;
        match self.family {
            ModelFamily::Exponential => self.sigma2 * (-r).exp(),
            ModelFamily::Spherical => {
                if r < 1.0 {
                    self.sigma2 * (1.0 - 1.5 * r + 0.5 * r * r * r)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Free-function form of [`ParametricModel::covariance`].
pub fn covariance_from_model(model: &ParametricModel, d: f64) -> f64 {
    model.covariance(d)
}

/// Where local covariance entries come from.
#[derive(Debug, Clone)]
pub enum CovarianceSource<'a> {
    Empirical(EmpiricalCovariance<'a>),
    Parametric(ParametricModel),
}

impl CovarianceSource<'_> {
    /// Prior variance of variable `i`.
    pub fn variance(&self, i: usize) -> f64 {
        match self {
            Self::Empirical(c) => c.entry(i, i),
            Self::Parametric(m) => m.sigma2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub distance: f64,
    pub sq_diff: f64,
}

/// Variogram cloud over pairs `i < j` with `d(i, j) <= max_distance`.
///
/// With `pair_budget = Some(b)` at most `b` eligible pairs are drawn
/// uniformly without replacement (deterministic in `seed`); `None` keeps
/// every pair. Each kept pair contributes one point per test vector.
pub fn build_variogram_cloud(
    vectors: &TestVectorSet,
    oracle: &DistanceOracle<'_>,
    max_distance: f64,
    pair_budget: Option<usize>,
    seed: u64,
) -> Result<Vec<CloudPoint>> {
    if !(max_distance > 0.0) {
        return Err(Error::InvalidArgument("max_distance must be positive".into()));
    }
    if vectors.n() != oracle.n() {
        return Err(Error::DimensionMismatch {
            expected: oracle.n(),
            found: vectors.n(),
        });
    }
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..vectors.n() {
        pairs.extend(
            oracle
                .neighborhood(i, max_distance)
                .into_iter()
                .filter(|&(j, _)| j > i)
                .map(|(j, d)| (i, j, d)),
        );
    }
    if let Some(budget) = pair_budget {
        if budget < pairs.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = rand::seq::index::sample(&mut rng, pairs.len(), budget).into_vec();
            keep.sort_unstable();
            pairs = keep.into_iter().map(|k| pairs[k]).collect();
        }
    }
    let mut cloud = Vec::with_capacity(pairs.len() * vectors.k());
    for (i, j, d) in pairs {
        for (a, b) in vectors.row(i).iter().zip(vectors.row(j)) {
            cloud.push(CloudPoint {
                distance: d,
                sq_diff: (a - b) * (a - b),
            });
        }
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemivariogramBin {
    /// Mean distance of the cloud points in the bin.
    pub h: f64,
    pub count: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSemivariogram {
    pub bin_width: f64,
    pub bins: Vec<SemivariogramBin>,
    pub kind: DistanceKind,
}

impl EmpiricalSemivariogram {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["h", "count", "gamma"]);
        for b in &self.bins {
            t.push(vec![fmt_f64(b.h), b.count.to_string(), fmt_f64(b.gamma)]);
        }
        t
    }
}

/// Bins the cloud into `[b*delta, (b+1)*delta)` and reports
/// `gamma = sum(sq_diff) / (2 * count)` per nonempty bin, located at the
/// mean distance of its points.
pub fn bin_semivariogram(cloud: &[CloudPoint], delta: f64, kind: DistanceKind) -> Result<EmpiricalSemivariogram> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let mut acc: Vec<(f64, usize, f64)> = Vec::new();
    for p in cloud {
        let b = (p.distance / delta).floor() as usize;
        if b >= acc.len() {
            acc.resize(b + 1, (0.0, 0, 0.0));
        }
        acc[b].0 += p.distance;
        acc[b].1 += 1;
        acc[b].2 += p.sq_diff;
    }
    let bins = acc
        .into_iter()
        .filter(|&(_, c, _)| c > 0)
        .map(|(dsum, count, ssum)| SemivariogramBin {
            h: dsum / count as f64,
            count,
            gamma: ssum / (2.0 * count as f64),
        })
        .collect();
    Ok(EmpiricalSemivariogram {
        bin_width: delta,
        bins,
        kind,
    })
}

/// Median over variables of the graph distance to the nearest neighbour
/// (the shortest incident edge).
pub fn median_nearest_neighbor_distance(matrix: &SparseMatrix) -> f64 {
    let mut nn: Vec<f64> = (0..matrix.n())
        .filter_map(|i| {
            let (cols, vals) = matrix.row(i);
            cols.iter()
                .zip(vals)
                .filter(|&(&j, &v)| j != i && v != 0.0)
                .map(|(_, &v)| 1.0 / v.abs())
                .min_by(f64::total_cmp)
        })
        .collect();
    if nn.is_empty() {
        return 1.0;
    }
    nn.sort_by(f64::total_cmp);
    nn[nn.len() / 2]
}

/// Result of a weighted least-squares semivariogram fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOutcome {
    pub model: ParametricModel,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Weighted residual `sum_b count_b / h_b^2 * (gamma_b - gamma_theta(h_b))^2`.
pub fn fit_residual(emp: &EmpiricalSemivariogram, model: &ParametricModel) -> f64 {
    emp.bins
        .iter()
        .filter(|b| b.h > 0.0)
        .map(|b| {
            let r = b.gamma - model.semivariogram(b.h);
            b.count as f64 / (b.h * b.h) * r * r
        })
        .sum()
}

const GRID_POINTS: usize = 41;
const NM_MAX_ITER: usize = 4000;

struct FitBox {
    lo: [f64; 2],
    hi: [f64; 2],
}

fn fit_box(emp: &EmpiricalSemivariogram) -> Result<FitBox> {
    let pos: Vec<&SemivariogramBin> = emp.bins.iter().filter(|b| b.h > 0.0).collect();
    if pos.len() < 2 {
        return Err(Error::EmptySemivariogram(format!(
            "need at least 2 nonempty bins at positive distance, found {}",
            pos.len()
        )));
    }
    let gmax = pos.iter().map(|b| b.gamma).fold(0.0f64, f64::max);
    if !(gmax > 0.0) {
        return Err(Error::EmptySemivariogram("semivariogram is identically zero".into()));
    }
    let hmin = pos.iter().map(|b| b.h).fold(f64::INFINITY, f64::min);
    let hmax = pos.iter().map(|b| b.h).fold(0.0f64, f64::max);
    Ok(FitBox {
        lo: [(gmax * 1e-3).ln(), (hmin * 1e-4).ln()],
        hi: [(gmax * 1e3).ln(), (hmax * 1e3).ln()],
    })
}

/// The log-spaced `(sigma2, eta)` grid that seeds the fit.
pub fn search_grid(emp: &EmpiricalSemivariogram, family: ModelFamily) -> Result<Vec<ParametricModel>> {
    fit_box(emp)?;
    let pos: Vec<&SemivariogramBin> = emp.bins.iter().filter(|b| b.h > 0.0).collect();
    let gmax = pos.iter().map(|b| b.gamma).fold(0.0f64, f64::max);
    let hmin = pos.iter().map(|b| b.h).fold(f64::INFINITY, f64::min);
    let hmax = pos.iter().map(|b| b.h).fold(0.0f64, f64::max);
    let logspace = |a: f64, b: f64| {
        (0..GRID_POINTS).map(move |k| (a.ln() + (b.ln() - a.ln()) * k as f64 / (GRID_POINTS - 1) as f64).exp())
    };
    let mut grid = Vec::with_capacity(GRID_POINTS * GRID_POINTS);
    for s in logspace(gmax * 0.1, gmax * 10.0) {
        for e in logspace(hmin * 0.01, hmax * 10.0) {
            grid.push(ParametricModel { family, sigma2: s, eta: e });
        }
    }
    Ok(grid)
}

/// Fits `family` to `emp` by weighted least squares with weights
/// `count_b / h_b^2`: log-grid search, then Nelder–Mead in
/// `(ln sigma2, ln eta)`. On hitting the iteration cap the best point found
/// is returned with `converged = false`.
pub fn fit_semivariogram(emp: &EmpiricalSemivariogram, family: ModelFamily) -> Result<FitOutcome> {
    let bx = fit_box(emp)?;
    let to_model = |x: [f64; 2]| {
        let s = x[0].clamp(bx.lo[0], bx.hi[0]);
        let e = x[1].clamp(bx.lo[1], bx.hi[1]);
        ParametricModel {
            family,
            sigma2: s.exp(),
            eta: e.exp(),
        }
    };
    let objective = |x: [f64; 2]| fit_residual(emp, &to_model(x));

    let start = search_grid(emp, family)?
        .into_iter()
        .map(|m| (m, fit_residual(emp, &m)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(m, _)| [m.sigma2.ln(), m.eta.ln()])
        .expect("grid is nonempty");

    let nm = nelder_mead(objective, start, 0.25, NM_MAX_ITER);
    let model = to_model(nm.x);
    Ok(FitOutcome {
        model,
        residual: fit_residual(emp, &model),
        converged: nm.converged,
        iterations: nm.iterations,
    })
}

/// Fitted curve sampled on the bin distances of `emp`.
pub fn fitted_curve_csv(emp: &EmpiricalSemivariogram, fit: &FitOutcome) -> CsvTable {
    let mut t = CsvTable::new(["h", "gamma_model", "family", "sigma2", "eta", "converged"]);
    for b in &emp.bins {
        t.push(vec![
            fmt_f64(b.h),
            fmt_f64(fit.model.semivariogram(b.h)),
            fit.model.family.as_str().to_string(),
            fmt_f64(fit.model.sigma2),
            fmt_f64(fit.model.eta),
            fit.converged.to_string(),
        ]);
    }
    t
}

struct NmResult {
    x: [f64; 2],
    converged: bool,
    iterations: usize,
}

/// Two-dimensional Nelder–Mead with standard coefficients. Terminates when
/// the simplex has collapsed in both value and position.
fn nelder_mead(f: impl Fn([f64; 2]) -> f64, x0: [f64; 2], step: f64, max_iter: usize) -> NmResult {
    let mut simplex = [x0, [x0[0] + step, x0[1]], [x0[0], x0[1] + step]];
    let mut values = simplex.map(&f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    for it in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|k| simplex[k]);
        values = order.map(|k| values[k]);

        let fspread = (values[2] - values[0]).abs();
        let xspread = simplex[1..]
            .iter()
            .map(|p| (p[0] - simplex[0][0]).abs().max((p[1] - simplex[0][1]).abs()))
            .fold(0.0f64, f64::max);
        if fspread <= 1e-10 * values[0].abs() + 1e-300 && xspread < 1e-10 {
            return NmResult {
                x: simplex[0],
                converged: true,
                iterations: it,
            };
        }

        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, simplex[2], 0.5)
            };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = lerp(simplex[0], simplex[k], 0.5);
                    values[k] = f(simplex[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NmResult {
        x: simplex[best],
        converged: false,
        iterations: max_iter,
    }
}
