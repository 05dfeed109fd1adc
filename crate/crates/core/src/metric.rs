//! Pseudo-distances between variables.
//!
//! The graph distance `d^A(i, j)` is the shortest path in the matrix graph
//! where edge `{i, j}` has length `1 / |A_ij|`. It is measured in the units
//! of the matrix entries: rescaling `A` by `alpha` rescales every graph
//! distance (and therefore any localization radius) by `1 / alpha`.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::ProblemInstance;
use crate::sparse::SparseMatrix;

/// Default localization radius in graph distance.
pub const DEFAULT_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Truncated Dijkstra from `source`: every `j` with `d^A(source, j) <= radius`,
/// sorted by ascending distance and then index.
pub fn graph_distances_from(matrix: &SparseMatrix, source: usize, radius: f64) -> Vec<(usize, f64)> {
    let mut best: HashMap<usize, f64> = HashMap::new();
    let mut settled = Vec::new();
    let mut heap = BinaryHeap::new();
    best.insert(source, 0.0);
    heap.push(HeapEntry { dist: 0.0, node: source });
    while let Some(HeapEntry { dist, node }) = heap.pop() {
        if dist > best[&node] {
            continue;
        }
        settled.push((node, dist));
        let (cols, vals) = matrix.row(node);
        for (&j, &v) in cols.iter().zip(vals) {
            if j == node || v == 0.0 {
                continue;
            }
            let nd = dist + 1.0 / v.abs();
            if nd > radius {
                continue;
            }
            match best.entry(j) {
                Entry::Occupied(mut e) => {
                    if nd < *e.get() {
                        e.insert(nd);
                        heap.push(HeapEntry { dist: nd, node: j });
                    }
                }
                Entry::Vacant(e) => {
                    e.insert(nd);
                    heap.push(HeapEntry { dist: nd, node: j });
                }
            }
        }
    }
    // heap order already ascending in (dist, node); stale entries were skipped
    settled
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Graph,
    Coordinate,
}

/// Distance source over the variables of one problem.
#[derive(Debug, Clone, Copy)]
pub struct DistanceOracle<'a> {
    kind: DistanceKind,
    matrix: &'a SparseMatrix,
    coords: Option<&'a [[f64; 2]]>,
}

impl<'a> DistanceOracle<'a> {
    pub fn graph(matrix: &'a SparseMatrix) -> Self {
        Self {
            kind: DistanceKind::Graph,
            matrix,
            coords: None,
        }
    }

    pub fn coordinate(problem: &'a ProblemInstance) -> Result<Self> {
        let coords = problem.coords.as_deref().ok_or(Error::MissingCoordinates)?;
        Ok(Self {
            kind: DistanceKind::Coordinate,
            matrix: &problem.matrix,
            coords: Some(coords),
        })
    }

    pub fn new(kind: DistanceKind, problem: &'a ProblemInstance) -> Result<Self> {
        match kind {
            DistanceKind::Graph => Ok(Self::graph(&problem.matrix)),
            DistanceKind::Coordinate => Self::coordinate(problem),
        }
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// All variables within `radius` of `i`, sorted by (distance, index).
    pub fn neighborhood(&self, i: usize, radius: f64) -> Vec<(usize, f64)> {
        match self.kind {
            DistanceKind::Graph => graph_distances_from(self.matrix, i, radius),
            DistanceKind::Coordinate => {
                let c = self.coords.expect("coordinate oracle has coords");
                let mut out: Vec<(usize, f64)> = (0..c.len())
                    .map(|j| (j, euclidean(c[i], c[j])))
                    .filter(|&(_, d)| d <= radius)
                    .collect();
                out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                out
            }
        }
    }

    /// Pairwise distances among `points`; pairs farther apart than
    /// `radius` are reported as infinity.
    pub fn pairwise(&self, points: &[usize], radius: f64) -> DMatrix<f64> {
        let q = points.len();
        let mut d = DMatrix::from_element(q, q, f64::INFINITY);
        match self.kind {
            DistanceKind::Coordinate => {
                let c = self.coords.expect("coordinate oracle has coords");
                for a in 0..q {
                    for b in 0..q {
                        let v = euclidean(c[points[a]], c[points[b]]);
                        if v <= radius {
                            d[(a, b)] = v;
                        }
                    }
                }
            }
            DistanceKind::Graph => {
                for a in 0..q {
                    d[(a, a)] = 0.0;
                    if a + 1 == q {
                        break;
                    }
                    let near: HashMap<usize, f64> =
                        graph_distances_from(self.matrix, points[a], radius).into_iter().collect();
                    for b in a + 1..q {
                        if let Some(&v) = near.get(&points[b]) {
                            d[(a, b)] = v;
                            d[(b, a)] = v;
                        }
                    }
                }
            }
        }
        d
    }
}

#[inline]
pub fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// The up-to-`q_max` coarse variables within `radius` of `i`, nearest
/// first, ties broken by ascending index.
pub fn nearest_coarse(
    i: usize,
    is_coarse: &[bool],
    oracle: &DistanceOracle<'_>,
    q_max: usize,
    radius: f64,
) -> Vec<(usize, f64)> {
    oracle
        .neighborhood(i, radius)
        .into_iter()
        .filter(|&(j, _)| j != i && is_coarse[j])
        .take(q_max)
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    sxy / (sxx * syy).sqrt()
}

/// Pearson correlation of graph and coordinate distance over `sample_pairs`
/// uniformly drawn pairs `i != j` (graph distances untruncated).
pub fn distance_correlation(problem: &ProblemInstance, sample_pairs: usize, seed: u64) -> Result<f64> {
    let coords = problem.coords.as_deref().ok_or(Error::MissingCoordinates)?;
    let n = problem.n();
    if n < 2 || sample_pairs < 2 {
        return Err(Error::InvalidArgument("need at least two variables and two pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(usize, usize)> = (0..sample_pairs)
        .map(|_| loop {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                break (i, j);
            }
        })
        .collect();
    pairs.sort_unstable();

    let mut graph = Vec::with_capacity(pairs.len());
    let mut coord = Vec::with_capacity(pairs.len());
    let mut current: Option<(usize, Vec<f64>)> = None;
    for (i, j) in pairs {
        if current.as_ref().map(|c| c.0) != Some(i) {
            let mut dist = vec![f64::INFINITY; n];
            for (k, d) in graph_distances_from(&problem.matrix, i, f64::INFINITY) {
                dist[k] = d;
            }
            current = Some((i, dist));
        }
        let d = current.as_ref().unwrap().1[j];
        if d.is_finite() {
            graph.push(d);
            coord.push(euclidean(coords[i], coords[j]));
        }
    }
    Ok(pearson(&graph, &coord))
}

/// Local embeddability diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Embeddability {
    pub embeddable: bool,
    pub min_eigenvalue: f64,
}

/// Tests `w^T [D^2] w <= 0` for all `w` with `1^T w = 0` through positive
/// semidefiniteness of the double-centered matrix `-1/2 J D^2 J`.
pub fn check_local_embeddability(d: &DMatrix<f64>) -> Embeddability {
    let q = d.nrows();
    if q <= 1 {
        return Embeddability {
            embeddable: true,
            min_eigenvalue: 0.0,
        };
    }
    let d2 = d.map(|v| v * v);
    let j = DMatrix::<f64>::identity(q, q) - DMatrix::from_element(q, q, 1.0 / q as f64);
    let mut b = -0.5 * &j * d2 * &j;
    b = 0.5 * (&b + b.transpose());
    let min_eigenvalue = SymmetricEigen::new(b)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Embeddability {
        embeddable: min_eigenvalue >= -1e-10,
        min_eigenvalue,
    }
}
