//! Graph coloring, colored Gauss–Seidel relaxation and smoothed test vectors.
//!
//! Colored Gauss–Seidel updates all variables of one color simultaneously
//! (no two of them are coupled) and walks the colors in ascending order, or
//! descending for the reverse sweep. A forward sweep followed by a reverse
//! sweep is a symmetric iteration, which the two-grid preconditioner needs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub color_of: Vec<usize>,
    pub num_colors: usize,
    classes: Vec<Vec<usize>>,
}

impl Coloring {
    /// Variables of color `c`, in ascending index order.
    pub fn class(&self, c: usize) -> &[usize] {
        &self.classes[c]
    }

    /// True when no stored off-diagonal entry joins two equal colors.
    pub fn is_valid_for(&self, matrix: &SparseMatrix) -> bool {
        (0..matrix.nrows()).all(|i| {
            matrix
                .row(i)
                .0
                .iter()
                .all(|&j| j == i || self.color_of[i] != self.color_of[j])
        })
    }
}

/// First-fit coloring in natural index order.
pub fn greedy_coloring(matrix: &SparseMatrix) -> Coloring {
    let n = matrix.nrows();
    let mut color_of = vec![usize::MAX; n];
    let mut forbidden: Vec<usize> = Vec::new();
    let mut num_colors = 0;
    for i in 0..n {
        // forbidden[c] == i marks color c as taken by a neighbour of i
        for &j in matrix.row(i).0 {
            if j != i && color_of[j] != usize::MAX {
                let c = color_of[j];
                if c >= forbidden.len() {
                    forbidden.resize(c + 1, usize::MAX);
                }
                forbidden[c] = i;
            }
        }
        let c = (0..).find(|&c| forbidden.get(c) != Some(&i)).unwrap();
        color_of[i] = c;
        num_colors = num_colors.max(c + 1);
    }
    let mut classes = vec![Vec::new(); num_colors];
    for (i, &c) in color_of.iter().enumerate() {
        classes[c].push(i);
    }
    Coloring {
        color_of,
        num_colors,
        classes,
    }
}

/// Colored Gauss–Seidel with the coloring and inverse diagonal precomputed.
#[derive(Debug, Clone)]
pub struct ColoredGaussSeidel {
    coloring: Coloring,
    inv_diag: Vec<f64>,
}

impl ColoredGaussSeidel {
    pub fn new(matrix: &SparseMatrix) -> Result<Self> {
        Self::with_coloring(matrix, greedy_coloring(matrix))
    }

    pub fn with_coloring(matrix: &SparseMatrix, coloring: Coloring) -> Result<Self> {
        let inv_diag = matrix
            .diagonal()
            .into_iter()
            .enumerate()
            .map(|(i, d)| if d == 0.0 { Err(Error::ZeroDiagonal(i)) } else { Ok(1.0 / d) })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { coloring, inv_diag })
    }

    pub fn coloring(&self) -> &Coloring {
        &self.coloring
    }

    /// One full sweep over all colors, in place.
    pub fn sweep(&self, matrix: &SparseMatrix, x: &mut [f64], b: &[f64], reverse: bool) {
        let nc = self.coloring.num_colors;
        for step in 0..nc {
            let c = if reverse { nc - 1 - step } else { step };
            for &i in self.coloring.class(c) {
                let (cols, vals) = matrix.row(i);
                let mut s = b[i];
                for (&j, &v) in cols.iter().zip(vals) {
                    if j != i {
                        s -= v * x[j];
                    }
                }
                x[i] = s * self.inv_diag[i];
            }
        }
    }
}

/// One colored Gauss–Seidel sweep, returning the updated iterate.
pub fn colored_gauss_seidel_sweep(
    matrix: &SparseMatrix,
    coloring: &Coloring,
    x: &[f64],
    b: &[f64],
    reverse: bool,
) -> Result<Vec<f64>> {
    if x.len() != matrix.n() || b.len() != matrix.n() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n(),
            found: x.len().min(b.len()),
        });
    }
    let gs = ColoredGaussSeidel::with_coloring(matrix, coloring.clone())?;
    let mut out = x.to_vec();
    gs.sweep(matrix, &mut out, b, reverse);
    Ok(out)
}

/// `K` smoothed test vectors stored row-major: row `i` holds the `K`
/// samples of variable `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestVectorSet {
    n: usize,
    k: usize,
    data: Vec<f64>,
    pub nu: usize,
    pub seed: u64,
}

impl TestVectorSet {
    /// Builds a set from columns (one `Vec` per test vector).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one test vector".into()));
        }
        let n = columns[0].len();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.len(),
            });
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("test vectors must be finite".into()));
        }
        let mut data = vec![0.0; n * k];
        for (l, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * k + l] = v;
            }
        }
        Ok(Self {
            n,
            k,
            data,
            nu: 0,
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of test vectors.
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.k + l]).collect()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new((1..=self.k).map(|l| format!("v{l}")));
        for i in 0..self.n {
            t.push(self.row(i).iter().map(|&v| fmt_f64(v)).collect());
        }
        t
    }
}

/// Draws `k` standard-normal vectors and relaxes each `nu` times against a
/// zero right-hand side.
///
/// Column `l` uses ChaCha8 seeded with `seed` on stream `l`, so output is
/// reproducible across platforms and independent of how many columns are
/// requested.
pub fn generate_test_vectors(matrix: &SparseMatrix, k: usize, nu: usize, seed: u64) -> Result<TestVectorSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let n = matrix.n();
    let gs = ColoredGaussSeidel::new(matrix)?;
    let zero = vec![0.0; n];
    let columns: Vec<Vec<f64>> = (0..k)
        .map(|l| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..nu {
                gs.sweep(matrix, &mut v, &zero, false);
            }
            v
        })
        .collect();
    let mut set = TestVectorSet::from_columns(&columns)?;
    set.nu = nu;
    set.seed = seed;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_fd_square, generate_fem_circle, DiffusionCoefficients};
    use crate::sparse::dot;
    use nalgebra::DMatrix;

    fn lap(m: usize) -> SparseMatrix {
        generate_fd_square(m, DiffusionCoefficients::ISO).unwrap().matrix
    }

    #[test]
    fn red_black_on_grid() {
        let c = greedy_coloring(&lap(3));
        assert_eq!(c.num_colors, 2);
        assert_eq!(c.color_of, vec![0, 1, 0, 1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn diagonal_matrix_one_color_and_exact_solve() {
        let a = SparseMatrix::from_triplets(3, 3, [(0, 0, 2.0), (1, 1, 4.0), (2, 2, 5.0)]);
        let c = greedy_coloring(&a);
        assert_eq!(c.num_colors, 1);
        let x = colored_gauss_seidel_sweep(&a, &c, &[7.0, 7.0, 7.0], &[1.0, 2.0, 3.0], false).unwrap();
        for (a, b) in x.iter().zip([0.5, 0.5, 0.6]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn fem_coloring_is_valid() {
        let a = generate_fem_circle(30, DiffusionCoefficients::ISO).unwrap().matrix;
        let c = greedy_coloring(&a);
        assert!(c.num_colors <= a.max_degree() + 1);
        // brute-force edge scan
        for i in 0..a.n() {
            for &j in a.row(i).0 {
                assert!(i == j || c.color_of[i] != c.color_of[j]);
            }
        }
    }

    #[test]
    fn two_by_two_sweep() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]);
        let c = greedy_coloring(&a);
        let x = colored_gauss_seidel_sweep(&a, &c, &[1.0, 1.0], &[0.0, 0.0], false).unwrap();
        assert_eq!(x, vec![0.5, 0.25]);
    }

    #[test]
    fn zero_diagonal_rejected() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]);
        assert!(matches!(ColoredGaussSeidel::new(&a), Err(Error::ZeroDiagonal(1))));
    }

    /// Iteration matrix of `sweeps` applied to the error with b = 0.
    fn iteration_matrix(a: &SparseMatrix, gs: &ColoredGaussSeidel, reverse_seq: &[bool]) -> DMatrix<f64> {
        let n = a.n();
        let zero = vec![0.0; n];
        let mut s = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for &r in reverse_seq {
                gs.sweep(a, &mut e, &zero, r);
            }
            s.set_column(j, &nalgebra::DVector::from_vec(e));
        }
        s
    }

    #[test]
    fn symmetric_sweep_pair_is_a_self_adjoint() {
        let a = lap(4);
        let gs = ColoredGaussSeidel::new(&a).unwrap();
        let s = iteration_matrix(&a, &gs, &[false, true]);
        let ad = a.to_dense();
        let lhs = &ad * &s;
        let rhs = s.transpose() * &ad;
        assert!((lhs - rhs).abs().max() < 1e-10);
    }

    #[test]
    fn red_black_equals_lexicographic_within_color() {
        let a = lap(5);
        let c = greedy_coloring(&a);
        let b: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let x0: Vec<f64> = (0..25).map(|i| (i as f64 * 0.11).cos()).collect();
        let got = colored_gauss_seidel_sweep(&a, &c, &x0, &b, false).unwrap();
        // dense oracle: ordinary Gauss-Seidel in the order red then black
        let d = a.to_dense();
        let mut x = x0.clone();
        for color in 0..2 {
            for i in (0..25).filter(|&i| c.color_of[i] == color) {
                let s: f64 = (0..25).filter(|&j| j != i).map(|j| d[(i, j)] * x[j]).sum();
                x[i] = (b[i] - s) / d[(i, i)];
            }
        }
        for (g, o) in got.iter().zip(&x) {
            assert!((g - o).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_never_increases_energy() {
        let a = lap(10);
        let gs = ColoredGaussSeidel::new(&a).unwrap();
        let tv = generate_test_vectors(&a, 1, 0, 3).unwrap();
        let mut x = tv.column(0);
        let zero = vec![0.0; a.n()];
        let mut energy = dot(&x, &a.mul_vec(&x));
        for s in 0..10 {
            gs.sweep(&a, &mut x, &zero, s % 2 == 1);
            let e = dot(&x, &a.mul_vec(&x));
            assert!(e <= energy * (1.0 + 1e-14));
            energy = e;
        }
    }

    #[test]
    fn raw_noise_statistics() {
        let a = lap(45);
        let tv = generate_test_vectors(&a, 3, 0, 11).unwrap();
        for l in 0..3 {
            let col = tv.column(l);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            assert!((0.8..=1.2).contains(&var), "variance {var}");
        }
    }

    #[test]
    fn one_sweep_lowers_rayleigh_quotient() {
        let a = lap(45);
        let rq = |v: &[f64]| dot(v, &a.mul_vec(v)) / dot(v, v);
        let raw = generate_test_vectors(&a, 2, 0, 5).unwrap();
        let smooth = generate_test_vectors(&a, 2, 1, 5).unwrap();
        for l in 0..2 {
            assert!(rq(&smooth.column(l)) < rq(&raw.column(l)));
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let a = lap(8);
        let x = generate_test_vectors(&a, 4, 1, 42).unwrap();
        let y = generate_test_vectors(&a, 4, 1, 42).unwrap();
        assert_eq!(x, y);
        let z = generate_test_vectors(&a, 4, 1, 43).unwrap();
        assert_ne!(x, z);
        // column l does not depend on K
        let w = generate_test_vectors(&a, 2, 1, 42).unwrap();
        assert_eq!(w.column(1), x.column(1));
        assert_eq!(x.to_csv().rows.len(), 64);
    }
}
