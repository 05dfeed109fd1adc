//! Local Kriging predictors.
//!
//! For a fine variable `i` and its interpolatory set `C_i`, simple Kriging
//! uses the conditional mean of a zero-mean field,
//! `w = C_{i,C_i} C_{C_i}^{-1}`, with variance
//! `C_ii - C_{i,C_i} C_{C_i}^{-1} C_{C_i,i}`. Ordinary Kriging estimates a
//! constant mean by BLUP, which constrains the weights to sum to one and
//! adds `(1 - C_{i,C_i} C_{C_i}^{-1} 1)^2 / (1^T C_{C_i}^{-1} 1)` to the
//! variance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::covariance::CovarianceSource;
use crate::error::{Error, Result};
use crate::metric::DistanceOracle;
use crate::smoother::TestVectorSet;

/// Relative size of the diagonal shift applied to a singular empirical
/// local covariance.
pub const EPSILON_SCALE: f64 = 1e-8;
/// Condition number above which a stencil is flagged.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanHandling {
    ZeroMean,
    Blup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalSource {
    Empirical,
    Parametric,
}

/// Dense covariance over `C_i ∪ {i}`.
#[derive(Debug, Clone)]
pub struct LocalCovariance {
    pub fine: usize,
    pub members: Vec<usize>,
    /// `C_{C_i}`
    pub cc: DMatrix<f64>,
    /// `C_{C_i, i}`
    pub ci: DVector<f64>,
    /// `C_{i,i}`
    pub cii: f64,
    pub source: LocalSource,
    /// Diagonal shift applied, zero when none was needed.
    pub epsilon: f64,
    /// Whether the full local matrix admits a Cholesky factorization.
    pub positive_definite: bool,
}

impl LocalCovariance {
    /// Builds a local model from explicit blocks.
    pub fn from_blocks(fine: usize, members: Vec<usize>, cc: DMatrix<f64>, ci: DVector<f64>, cii: f64) -> Self {
        let mut lc = Self {
            fine,
            members,
            cc,
            ci,
            cii,
            source: LocalSource::Parametric,
            epsilon: 0.0,
            positive_definite: false,
        };
        lc.positive_definite = lc.full().cholesky().is_some();
        lc
    }

    pub fn q(&self) -> usize {
        self.members.len()
    }

    /// The full `(q+1) x (q+1)` matrix ordered as `(C_i, i)`.
    pub fn full(&self) -> DMatrix<f64> {
        let q = self.q();
        let mut m = DMatrix::zeros(q + 1, q + 1);
        m.view_mut((0, 0), (q, q)).copy_from(&self.cc);
        for a in 0..q {
            m[(a, q)] = self.ci[a];
            m[(q, a)] = self.ci[a];
        }
        m[(q, q)] = self.cii;
        m
    }

    fn regularize(&mut self, eps: f64) {
        for a in 0..self.q() {
            self.cc[(a, a)] += eps;
        }
        self.cii += eps;
        self.epsilon += eps;
    }
}

/// Assembles the local covariance of `fine` and `members`.
///
/// Parametric sources evaluate `C_theta` at pairwise oracle distances
/// (truncated at `pair_radius`, beyond which the covariance is taken as
/// zero). Empirical matrices that fail Cholesky are shifted once by
/// `1e-8 * max diagonal`; parametric ones are only flagged.
pub fn assemble_local_cov(
    fine: usize,
    members: &[usize],
    source: &CovarianceSource<'_>,
    oracle: &DistanceOracle<'_>,
    pair_radius: f64,
) -> Result<LocalCovariance> {
    if members.contains(&fine) {
        return Err(Error::InvalidArgument(format!("fine variable {fine} is in its own interpolatory set")));
    }
    let q = members.len();
    let mut lc = match source {
        CovarianceSource::Empirical(emp) => {
            let cc = DMatrix::from_fn(q, q, |a, b| emp.entry(members[a], members[b]));
            let ci = DVector::from_fn(q, |a, _| emp.entry(members[a], fine));
            let mut lc = LocalCovariance::from_blocks(fine, members.to_vec(), cc, ci, emp.entry(fine, fine));
            lc.source = LocalSource::Empirical;
            lc
        }
        CovarianceSource::Parametric(model) => {
            let mut pts = members.to_vec();
            pts.push(fine);
            let d = oracle.pairwise(&pts, pair_radius);
            let cov = |a: usize, b: usize| {
                let v = d[(a, b)];
                if v.is_finite() {
                    model.covariance(v)
                } else {
                    0.0
                }
            };
            let cc = DMatrix::from_fn(q, q, |a, b| cov(a, b));
            let ci = DVector::from_fn(q, |a, _| cov(a, q));
            LocalCovariance::from_blocks(fine, members.to_vec(), cc, ci, cov(q, q))
        }
    };
    if !lc.positive_definite && lc.source == LocalSource::Empirical {
        let dmax = lc.full().diagonal().iter().copied().fold(0.0f64, f64::max);
        let eps = EPSILON_SCALE * if dmax > 0.0 { dmax } else { 1.0 };
        lc.regularize(eps);
        lc.positive_definite = lc.full().cholesky().is_some();
    }
    Ok(lc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingStencil {
    pub fine: usize,
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
    /// Predictive variance as computed (may be slightly negative).
    pub variance: f64,
    /// Variance of the simple-Kriging predictor on the same set.
    pub simple_variance: f64,
    pub mean_handling: MeanHandling,
    pub ill_conditioned: bool,
}

impl KrigingStencil {
    /// Stencil with no coarse information: prior variance, no weights.
    pub fn empty(fine: usize, prior: f64, mean_handling: MeanHandling) -> Self {
        Self {
            fine,
            members: Vec::new(),
            weights: Vec::new(),
            variance: prior,
            simple_variance: prior,
            mean_handling,
            ill_conditioned: false,
        }
    }

    /// Variance clamped at zero, used for selection and reporting.
    pub fn clamped_variance(&self) -> f64 {
        self.variance.max(0.0)
    }
}

/// Solves `C x = rhs` for the small symmetric `C`: Cholesky first, pivoted
/// LU when `C` is not positive definite.
fn solve_sym(c: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = c.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    c.clone()
        .full_piv_lu()
        .solve(rhs)
        .ok_or_else(|| Error::Singular("local covariance".into()))
}

fn condition_number(c: &DMatrix<f64>) -> f64 {
    if c.nrows() == 0 {
        return 1.0;
    }
    let ev = SymmetricEigen::new(c.clone()).eigenvalues;
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `C^{-1} c` and `C^{-1} 1` for the local model.
fn local_solves(lc: &LocalCovariance) -> Result<(DVector<f64>, DVector<f64>)> {
    let q = lc.q();
    let mut rhs = DMatrix::zeros(q, 2);
    rhs.set_column(0, &lc.ci);
    rhs.column_mut(1).fill(1.0);
    let x = solve_sym(&lc.cc, &rhs)?;
    Ok((x.column(0).into_owned(), x.column(1).into_owned()))
}

pub fn simple_kriging(lc: &LocalCovariance) -> Result<KrigingStencil> {
    if lc.q() == 0 {
        return Ok(KrigingStencil::empty(lc.fine, lc.cii, MeanHandling::ZeroMean));
    }
    let (u, _) = local_solves(lc)?;
    let variance = lc.cii - lc.ci.dot(&u);
    Ok(KrigingStencil {
        fine: lc.fine,
        members: lc.members.clone(),
        weights: u.iter().copied().collect(),
        variance,
        simple_variance: variance,
        mean_handling: MeanHandling::ZeroMean,
        ill_conditioned: condition_number(&lc.cc) > CONDITION_WARNING,
    })
}

/// Ordinary Kriging: weights from the bordered system
/// `[C 1; 1^T 0] [w; lambda] = [c; 1]`.
pub fn ordinary_kriging(lc: &LocalCovariance) -> Result<KrigingStencil> {
    let q = lc.q();
    if q == 0 {
        return Ok(KrigingStencil::empty(lc.fine, lc.cii, MeanHandling::Blup));
    }
    let mut bordered = DMatrix::zeros(q + 1, q + 1);
    bordered.view_mut((0, 0), (q, q)).copy_from(&lc.cc);
    let mut rhs = DVector::zeros(q + 1);
    for a in 0..q {
        bordered[(a, q)] = 1.0;
        bordered[(q, a)] = 1.0;
        rhs[a] = lc.ci[a];
    }
    rhs[q] = 1.0;
    let sol = bordered
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("bordered Kriging system".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("bordered Kriging system".into()));
    }

    let (u, v) = local_solves(lc)?;
    let simple = lc.cii - lc.ci.dot(&u);
    let ones_cinv_ones = v.sum();
    let correction = (1.0 - u.sum()).powi(2) / ones_cinv_ones;
    Ok(KrigingStencil {
        fine: lc.fine,
        members: lc.members.clone(),
        weights: sol.rows(0, q).iter().copied().collect(),
        variance: simple + correction,
        simple_variance: simple,
        mean_handling: MeanHandling::Blup,
        ill_conditioned: condition_number(&lc.cc) > CONDITION_WARNING,
    })
}

pub fn krige(lc: &LocalCovariance, mean_handling: MeanHandling) -> Result<KrigingStencil> {
    match mean_handling {
        MeanHandling::ZeroMean => simple_kriging(lc),
        MeanHandling::Blup => ordinary_kriging(lc),
    }
}

/// Least-squares coupling of `i` to `j`: `p = <V_i, V_j> / |V_j|^2` and the
/// relative residual `1 - X_ij^2` with `X` the (uncentred) correlation.
pub fn ls_pairwise_strength(vectors: &TestVectorSet, i: usize, j: usize) -> Result<(f64, f64)> {
    let (vi, vj) = (vectors.row(i), vectors.row(j));
    let nj: f64 = vj.iter().map(|x| x * x).sum();
    let ni: f64 = vi.iter().map(|x| x * x).sum();
    if nj == 0.0 {
        return Err(Error::ZeroNorm(j));
    }
    if ni == 0.0 {
        return Err(Error::ZeroNorm(i));
    }
    let ip: f64 = vi.iter().zip(vj).map(|(a, b)| a * b).sum();
    let corr2 = ip * ip / (ni * nj);
    Ok((ip / nj, 1.0 - corr2))
}

/// Least-squares interpolation of `i` from `members` using the zero-mean
/// empirical covariance: weights `C_{i,C} C_C^{-1}` and the Schur
/// complement `C_ii - C_{i,C} C_C^{-1} C_{C,i}` as residual.
pub fn ls_multi_interpolation(vectors: &TestVectorSet, i: usize, members: &[usize]) -> Result<(Vec<f64>, f64)> {
    let q = members.len();
    if q > vectors.k() {
        return Err(Error::Singular(format!(
            "Gram matrix of {q} variables from {} test vectors",
            vectors.k()
        )));
    }
    let k = vectors.k() as f64;
    let cov = |a: usize, b: usize| -> f64 {
        vectors.row(a).iter().zip(vectors.row(b)).map(|(x, y)| x * y).sum::<f64>() / k
    };
    let cc = DMatrix::from_fn(q, q, |a, b| cov(members[a], members[b]));
    let ci = DVector::from_fn(q, |a, _| cov(members[a], i));
    let ch = cc
        .cholesky()
        .ok_or_else(|| Error::Singular("Gram matrix of interpolatory set".into()))?;
    let p = ch.solve(&ci);
    let residual = cov(i, i) - ci.dot(&p);
    Ok((p.iter().copied().collect(), residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{EmpiricalCovariance, MeanMode, ModelFamily, ParametricModel};
    use crate::problem::{generate_fd_square, DiffusionCoefficients};
    use crate::smoother::generate_test_vectors;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(q: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(q, q) * 0.1
    }

    fn local_from_full(full: &DMatrix<f64>) -> LocalCovariance {
        let q = full.nrows() - 1;
        LocalCovariance::from_blocks(
            q,
            (0..q).collect(),
            full.view((0, 0), (q, q)).into_owned(),
            full.view((0, q), (q, 1)).column(0).into_owned(),
            full[(q, q)],
        )
    }

    #[test]
    fn scalar_schur_complement() {
        let rho = 0.3;
        let lc = LocalCovariance::from_blocks(1, vec![0], DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, rho), 1.0);
        let s = simple_kriging(&lc).unwrap();
        assert!((s.weights[0] - rho).abs() < 1e-15);
        assert!((s.variance - (1.0 - rho * rho)).abs() < 1e-15);
    }

    #[test]
    fn no_information() {
        let lc = LocalCovariance::from_blocks(2, vec![0, 1], DMatrix::identity(2, 2), DVector::zeros(2), 1.7);
        let s = simple_kriging(&lc).unwrap();
        assert_eq!(s.weights, vec![0.0, 0.0]);
        assert_eq!(s.variance, 1.7);
    }

    #[test]
    fn ordinary_single_point() {
        let lc = LocalCovariance::from_blocks(1, vec![0], DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, 0.5), 1.5);
        let s = ordinary_kriging(&lc).unwrap();
        assert!((s.weights[0] - 1.0).abs() < 1e-15);
        assert!((s.variance - (1.5 - 2.0 * 0.5 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn ordinary_symmetric_pair() {
        let cc = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        let lc = LocalCovariance::from_blocks(2, vec![0, 1], cc, DVector::from_element(2, 0.4), 1.0);
        let s = ordinary_kriging(&lc).unwrap();
        assert!((s.weights[0] - 0.5).abs() < 1e-15 && (s.weights[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ordinary_matches_lagrangian_and_appendix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let full = random_spd(5, &mut rng);
            let lc = local_from_full(&full);
            let s = ordinary_kriging(&lc).unwrap();
            // dense inverse of the bordered Lagrangian system
            let mut b = DMatrix::zeros(5, 5);
            b.view_mut((0, 0), (4, 4)).copy_from(&lc.cc);
            for a in 0..4 {
                b[(a, 4)] = 1.0;
                b[(4, a)] = 1.0;
            }
            let mut rhs = DVector::zeros(5);
            rhs.rows_mut(0, 4).copy_from(&lc.ci);
            rhs[4] = 1.0;
            let sol = b.try_inverse().unwrap() * rhs;
            // closed form p_sharp + constant-sum correction
            let cinv = lc.cc.clone().try_inverse().unwrap();
            let ones = DVector::from_element(4, 1.0);
            let p = cinv.clone() * &lc.ci;
            let v = &cinv * &ones;
            let w = &p + &v * ((1.0 - p.sum()) / v.sum());
            for a in 0..4 {
                assert!((s.weights[a] - sol[a]).abs() < 1e-12);
                assert!((s.weights[a] - w[a]).abs() < 1e-12);
            }
            assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn variance_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for q in 1..6 {
            let lc = local_from_full(&random_spd(q + 1, &mut rng));
            let s = simple_kriging(&lc).unwrap();
            let o = ordinary_kriging(&lc).unwrap();
            let cinv = lc.cc.clone().try_inverse().unwrap();
            let ones = DVector::from_element(q, 1.0);
            let u = &cinv * &lc.ci;
            let corr = (1.0 - u.sum()).powi(2) / (ones.transpose() * &cinv * &ones)[(0, 0)];
            assert!(corr >= 0.0);
            assert!((o.variance - s.variance - corr).abs() < 1e-10);
            assert!(s.variance >= -1e-10);
        }
    }

    #[test]
    fn self_inclusion_rejected() {
        let p = generate_fd_square(3, DiffusionCoefficients::ISO).unwrap();
        let m = ParametricModel::new(ModelFamily::Exponential, 1.0, 1.0).unwrap();
        let o = DistanceOracle::graph(&p.matrix);
        assert!(assemble_local_cov(4, &[1, 4], &CovarianceSource::Parametric(m), &o, 8.0).is_err());
    }

    #[test]
    fn spherical_decorrelates_beyond_range() {
        let p = generate_fd_square(5, DiffusionCoefficients::ISO).unwrap();
        let m = ParametricModel::new(ModelFamily::Spherical, 1.0, 1.0).unwrap();
        let o = DistanceOracle::graph(&p.matrix);
        // variables 11 and 13 are two grid steps apart
        let lc = assemble_local_cov(12, &[11, 13], &CovarianceSource::Parametric(m), &o, 8.0).unwrap();
        assert_eq!(lc.cc, DMatrix::identity(2, 2));
    }

    #[test]
    fn parametric_collinear_direct_evaluation() {
        let p = generate_fd_square(5, DiffusionCoefficients::ISO).unwrap();
        let m = ParametricModel::new(ModelFamily::Exponential, 1.3, 1.7).unwrap();
        let o = DistanceOracle::graph(&p.matrix);
        let lc = assemble_local_cov(11, &[10, 12], &CovarianceSource::Parametric(m), &o, 8.0).unwrap();
        let c = |d: f64| 1.3 * (-d / 1.7).exp();
        let expect = DMatrix::from_row_slice(3, 3, &[c(0.0), c(2.0), c(1.0), c(2.0), c(0.0), c(1.0), c(1.0), c(1.0), c(0.0)]);
        assert!((lc.full() - expect).abs().max() < 1e-15);
        assert!(lc.positive_definite);
    }

    #[test]
    fn empirical_rank_one_regularized() {
        let p = generate_fd_square(6, DiffusionCoefficients::ISO).unwrap();
        let v = generate_test_vectors(&p.matrix, 1, 1, 1).unwrap();
        let emp = EmpiricalCovariance::new(&v, MeanMode::Zero);
        let o = DistanceOracle::graph(&p.matrix);
        let src = CovarianceSource::Empirical(emp);
        for (i, j) in [(0, 1), (7, 8), (14, 20)] {
            let lc = assemble_local_cov(i, &[j], &src, &o, 8.0).unwrap();
            assert!(lc.epsilon > 0.0);
            assert!(lc.positive_definite);
        }
    }

    #[test]
    fn pairwise_least_squares() {
        let v = TestVectorSet::from_columns(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]]).unwrap();
        assert_eq!(ls_pairwise_strength(&v, 0, 1).unwrap(), (1.0, 0.0));
        let (p, s) = ls_pairwise_strength(&v, 0, 2).unwrap();
        assert_eq!((p, s), (0.0, 1.0));
        let z = TestVectorSet::from_columns(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(ls_pairwise_strength(&z, 0, 1), Err(Error::ZeroNorm(1))));
    }

    #[test]
    fn pairwise_matches_scalar_minimization() {
        let p = generate_fd_square(6, DiffusionCoefficients::ISO).unwrap();
        let v = generate_test_vectors(&p.matrix, 8, 1, 12).unwrap();
        let (vi, vj) = (v.row(14), v.row(15));
        let obj = |t: f64| vi.iter().zip(vj).map(|(a, b)| (a - t * b).powi(2)).sum::<f64>();
        // coarse scan then golden-section refinement
        let mut best = -5.0;
        for k in 0..=1000 {
            let t = -5.0 + 0.01 * k as f64;
            if obj(t) < obj(best) {
                best = t;
            }
        }
        let (mut lo, mut hi) = (best - 0.01, best + 0.01);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while hi - lo > 1e-12 {
            let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if obj(a) < obj(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let (pp, s) = ls_pairwise_strength(&v, 14, 15).unwrap();
        assert!((pp - 0.5 * (lo + hi)).abs() < 1e-8);
        let ni: f64 = vi.iter().map(|x| x * x).sum();
        assert!((s - obj(pp) / ni).abs() < 1e-12);
    }

    #[test]
    fn multi_interpolation_cases() {
        let p = generate_fd_square(6, DiffusionCoefficients::ISO).unwrap();
        let v = generate_test_vectors(&p.matrix, 8, 1, 21).unwrap();
        // normal-equations oracle on raw vectors
        let members = [3, 9, 16];
        let vc = DMatrix::from_fn(3, 8, |a, l| v.row(members[a])[l]);
        let vi = DVector::from_fn(8, |l, _| v.row(10)[l]);
        let oracle = (&vc * vc.transpose()).try_inverse().unwrap() * (&vc * &vi);
        let (w, r) = ls_multi_interpolation(&v, 10, &members).unwrap();
        for a in 0..3 {
            assert!((w[a] - oracle[a]).abs() < 1e-10);
        }
        assert!(r >= 0.0);

        // singleton agrees with the pairwise strength
        let (w1, r1) = ls_multi_interpolation(&v, 10, &[9]).unwrap();
        let (p1, s1) = ls_pairwise_strength(&v, 10, 9).unwrap();
        assert!((w1[0] - p1).abs() < 1e-12);
        let cii = v.row(10).iter().map(|x| x * x).sum::<f64>() / 8.0;
        assert!((r1 - cii * s1).abs() < 1e-12);

        // exact representation
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|l| {
                let mut c = v.column(l);
                c[10] = 2.0 * c[3] - 0.5 * c[9];
                c
            })
            .collect();
        let exact = TestVectorSet::from_columns(&cols).unwrap();
        let (w, r) = ls_multi_interpolation(&exact, 10, &[3, 9]).unwrap();
        assert!(r.abs() < 1e-10);
        assert!((w[0] - 2.0).abs() < 1e-10 && (w[1] + 0.5).abs() < 1e-10);

        assert!(ls_multi_interpolation(&exact, 10, &[1, 2, 3, 4, 5]).is_err());
    }

    #[test]
    fn appendix_identity_on_empirical_covariance() {
        let p = generate_fd_square(8, DiffusionCoefficients::ISO).unwrap();
        let v = generate_test_vectors(&p.matrix, 10, 1, 2).unwrap();
        let emp = EmpiricalCovariance::new(&v, MeanMode::Zero);
        let o = DistanceOracle::graph(&p.matrix);
        let src = CovarianceSource::Empirical(emp);
        for (i, members) in [(27usize, vec![19usize, 26, 28, 35]), (0, vec![1, 8]), (40, vec![30, 41, 50])] {
            let lc = assemble_local_cov(i, &members, &src, &o, 16.0).unwrap();
            assert_eq!(lc.epsilon, 0.0);
            let ok = ordinary_kriging(&lc).unwrap();
            let (ps, _) = ls_multi_interpolation(&v, i, &members).unwrap();
            let cinv = lc.cc.clone().try_inverse().unwrap();
            let ones = DVector::from_element(members.len(), 1.0);
            let row = ones.transpose() * &cinv;
            let denom = row.sum();
            let shift = (1.0 - ps.iter().sum::<f64>()) / denom;
            for a in 0..members.len() {
                assert!((ok.weights[a] - (ps[a] + shift * row[a])).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn adding_a_point_never_raises_simple_variance(seed in 0u64..500, q in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let full = random_spd(q + 2, &mut rng);
            // members 0..=q, fine q+1; compare against members 0..q
            let big = local_from_full(&full);
            let mut keep: Vec<usize> = (0..q).collect();
            keep.push(q + 1);
            let small_full = full.select_rows(&keep).select_columns(&keep);
            let small = local_from_full(&small_full);
            let vb = simple_kriging(&big).unwrap().variance;
            let vs = simple_kriging(&small).unwrap().variance;
            prop_assert!(vb <= vs + 1e-10);
        }

        #[test]
        fn blup_weights_sum_to_one(seed in 0u64..500, q in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lc = local_from_full(&random_spd(q + 1, &mut rng));
            let s = ordinary_kriging(&lc).unwrap();
            prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
