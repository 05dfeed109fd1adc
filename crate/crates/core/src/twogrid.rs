//! Two-grid cycle, convergence-rate estimation and preconditioned CG.

use std::time::Duration;

use nalgebra::{Cholesky, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coarsen::CoarsenDiagnostics;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::smoother::ColoredGaussSeidel;
use crate::sparse::{dot, norm2, SparseMatrix};

pub const DEFAULT_STALL_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_CYCLES: usize = 200;
/// Cycles run before the stall test is consulted.
pub const MIN_CYCLES: usize = 10;
pub const DEFAULT_REDUCTION: f64 = 1e-8;

/// `P^T A P`, averaged with its transpose.
pub fn galerkin(a: &SparseMatrix, p: &SparseMatrix) -> Result<SparseMatrix> {
    if a.nrows() != a.ncols() || p.nrows() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: p.nrows(),
        });
    }
    let ac = p.transpose().matmul(&a.matmul(p));
    let act = ac.transpose();
    let n = ac.nrows();
    let mut triplets = Vec::with_capacity(2 * ac.nnz());
    for (m, w) in [(&ac, 0.5), (&act, 0.5)] {
        for i in 0..n {
            let (cols, vals) = m.row(i);
            triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, w * v)));
        }
    }
    Ok(SparseMatrix::from_triplets(n, n, triplets))
}

/// V(1,1) two-grid method with a dense direct coarse solve.
pub struct TwoGridOperator {
    a: SparseMatrix,
    p: SparseMatrix,
    pt: SparseMatrix,
    ac: SparseMatrix,
    coarse: Cholesky<f64, Dyn>,
    smoother: ColoredGaussSeidel,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
}

impl TwoGridOperator {
    pub fn new(a: &SparseMatrix, p: &SparseMatrix) -> Result<Self> {
        let ac = galerkin(a, p)?;
        let coarse = ac.to_dense().cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            a: a.clone(),
            p: p.clone(),
            pt: p.transpose(),
            ac,
            coarse,
            smoother: ColoredGaussSeidel::new(a)?,
            pre_sweeps: 1,
            post_sweeps: 1,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn interpolation(&self) -> &SparseMatrix {
        &self.p
    }

    pub fn coarse_matrix(&self) -> &SparseMatrix {
        &self.ac
    }

    pub fn smoother(&self) -> &ColoredGaussSeidel {
        &self.smoother
    }

    fn residual(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let ax = self.a.mul_vec(x);
        b.iter().zip(ax).map(|(bi, v)| bi - v).collect()
    }

    /// `x <- x + P A_c^{-1} P^T (b - A x)`
    pub fn coarse_correct(&self, b: &[f64], x: &mut [f64]) {
        let rc = DVector::from_vec(self.pt.mul_vec(&self.residual(b, x)));
        let ec = self.coarse.solve(&rc);
        for (xi, d) in x.iter_mut().zip(self.p.mul_vec(ec.as_slice())) {
            *xi += d;
        }
    }

    /// One cycle: forward sweeps, coarse correction, reverse sweeps.
    pub fn vcycle_apply(&self, b: &[f64], x: &mut [f64]) {
        for _ in 0..self.pre_sweeps {
            self.smoother.sweep(&self.a, x, b, false);
        }
        self.coarse_correct(b, x);
        for _ in 0..self.post_sweeps {
            self.smoother.sweep(&self.a, x, b, true);
        }
    }

    /// One cycle on `A x = r` from a zero guess.
    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; r.len()];
        self.vcycle_apply(r, &mut z);
        z
    }

    /// Error propagation `E e` (one cycle with zero right-hand side).
    pub fn propagate_error(&self, e: &[f64]) -> Vec<f64> {
        let zero = vec![0.0; e.len()];
        let mut x = e.to_vec();
        self.vcycle_apply(&zero, &mut x);
        x
    }

    fn a_norm(&self, v: &[f64]) -> f64 {
        dot(v, &self.a.mul_vec(v)).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Energy-norm contraction of the last cycle.
    pub rho: f64,
    /// Euclidean-norm contraction of the last cycle.
    pub rho_2norm: f64,
    pub cycles: usize,
    /// Whether consecutive ratios settled within the stall tolerance.
    pub settled: bool,
    pub diverged: bool,
}

/// Power iteration on the error propagator with a random start.
pub fn estimate_asymptotic_rate(op: &TwoGridOperator, seed: u64, max_cycles: usize, stall_tol: f64) -> Result<RateEstimate> {
    if max_cycles < MIN_CYCLES {
        return Err(Error::InvalidArgument(format!("max_cycles must be at least {MIN_CYCLES}")));
    }
    let n = op.a.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut norm = op.a_norm(&e);
    if norm == 0.0 {
        return Err(Error::ZeroNorm(0));
    }
    e.iter_mut().for_each(|v| *v /= norm);
    let mut prev = f64::NAN;
    let mut est = RateEstimate {
        rho: 0.0,
        rho_2norm: 0.0,
        cycles: 0,
        settled: false,
        diverged: false,
    };
    for k in 1..=max_cycles {
        let next = op.propagate_error(&e);
        let new_norm = op.a_norm(&next);
        est.cycles = k;
        est.rho_2norm = norm2(&next) / norm2(&e);
        est.rho = new_norm;
        if new_norm == 0.0 || !new_norm.is_finite() {
            est.settled = new_norm == 0.0;
            break;
        }
        if k >= MIN_CYCLES && (new_norm - prev).abs() < stall_tol {
            est.settled = true;
            break;
        }
        prev = new_norm;
        norm = new_norm;
        e = next.into_iter().map(|v| v / norm).collect();
    }
    est.diverged = !(est.rho <= 1.0);
    Ok(est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Euclidean residual norms, starting with the initial one.
    pub residual_history: Vec<f64>,
}

/// Preconditioned conjugate gradients from a zero initial guess, stopping
/// once the residual has been reduced by `reduction`.
pub fn pcg(
    a: &SparseMatrix,
    b: &[f64],
    precond: impl Fn(&[f64]) -> Vec<f64>,
    reduction: f64,
    max_it: usize,
) -> Result<PcgResult> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("right-hand side is not finite".into()));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = norm2(&r);
    let mut history = vec![r0];
    if r0 == 0.0 {
        return Ok(PcgResult {
            x,
            iterations: 0,
            converged: true,
            residual_history: history,
        });
    }
    let mut z = precond(&r);
    let mut rz = dot(&r, &z);
    if rz <= 0.0 {
        return Err(Error::IndefinitePreconditioner(rz));
    }
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    for k in 1..=max_it {
        a.mul_vec_into(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rn = norm2(&r);
        history.push(rn);
        if rn <= reduction * r0 {
            return Ok(PcgResult {
                x,
                iterations: k,
                converged: true,
                residual_history: history,
            });
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        if rz_new <= 0.0 {
            return Err(Error::IndefinitePreconditioner(rz_new));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(PcgResult {
        x,
        iterations: max_it,
        converged: false,
        residual_history: history,
    })
}

/// PCG with one two-grid cycle as preconditioner.
pub fn pcg_solve(op: &TwoGridOperator, b: &[f64], reduction: f64, max_it: usize) -> Result<PcgResult> {
    pcg(&op.a, b, |r| op.precondition(r), reduction, max_it)
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub case: String,
    pub model: String,
    pub k_vectors: usize,
    pub n: usize,
    pub n_c: usize,
    pub q_max: usize,
    pub radius: f64,
    pub rate: RateEstimate,
    pub pcg_iterations: usize,
    pub pcg_converged: bool,
    pub residual_history: Vec<f64>,
    pub setup_time: Duration,
    pub solve_time: Duration,
    pub diagnostics: CoarsenDiagnostics,
}

impl SolveReport {
    pub const CSV_HEADER: [&'static str; 15] = [
        "case",
        "model",
        "K",
        "n_c",
        "q_max",
        "radius",
        "rho",
        "k",
        "n",
        "rho_2norm",
        "converged",
        "negative_variances",
        "embeddability_failures",
        "empty_stencils",
        "q_reductions",
    ];

    pub fn rho(&self) -> f64 {
        self.rate.rho
    }

    /// Table row; timings are left out so output is reproducible.
    pub fn csv_row(&self) -> Vec<String> {
        let d = &self.diagnostics;
        vec![
            self.case.clone(),
            self.model.clone(),
            self.k_vectors.to_string(),
            self.n_c.to_string(),
            self.q_max.to_string(),
            fmt_f64(self.radius),
            format!("{:.6}", self.rate.rho),
            self.pcg_iterations.to_string(),
            self.n.to_string(),
            format!("{:.6}", self.rate.rho_2norm),
            self.pcg_converged.to_string(),
            d.negative_variances.to_string(),
            d.embeddability_failures.to_string(),
            d.empty_stencils.to_string(),
            d.q_reductions.to_string(),
        ]
    }

    pub fn csv_table(reports: &[SolveReport]) -> CsvTable {
        let mut t = CsvTable::new(Self::CSV_HEADER);
        for r in reports {
            t.push(r.csv_row());
        }
        t
    }

    pub fn residual_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["iteration", "residual"]);
        for (k, r) in self.residual_history.iter().enumerate() {
            t.push(vec![k.to_string(), fmt_f64(*r)]);
        }
        t
    }
}
