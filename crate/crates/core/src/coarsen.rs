//! Greedy coarsening by maximum predictive variance.
//!
//! Starting from an all-fine partition, the fine variable with the largest
//! Kriging variance is moved to the coarse set, and every fine variable
//! within the localization radius of it gets a fresh interpolatory set and
//! stencil. The loop stops at a coarse-set size or once no fine variance
//! exceeds a tolerance.

use crate::covariance::CovarianceSource;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::kriging::{assemble_local_cov, krige, KrigingStencil, MeanHandling};
use crate::metric::{check_local_embeddability, nearest_coarse, DistanceKind, DistanceOracle, DEFAULT_RADIUS};
use crate::problem::ProblemInstance;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCriterion {
    /// Stop once this many variables are coarse.
    Count(usize),
    /// Stop once every fine variance is at most this value.
    Tolerance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarsenOptions {
    pub stop: StopCriterion,
    pub q_max: usize,
    pub radius: f64,
    pub mean_handling: MeanHandling,
    pub distance: DistanceKind,
    /// Minimum separation for simultaneous additions; `None` selects one
    /// variable per iteration.
    pub batch_separation: Option<f64>,
}

impl CoarsenOptions {
    pub fn new(stop: StopCriterion) -> Self {
        Self {
            stop,
            q_max: 4,
            radius: DEFAULT_RADIUS,
            mean_handling: MeanHandling::Blup,
            distance: DistanceKind::Graph,
            batch_separation: None,
        }
    }

    /// Enables batching with the default separation `2 * radius + 1`.
    pub fn with_batching(mut self) -> Self {
        self.batch_separation = Some(2.0 * self.radius + 1.0);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.q_max == 0 {
            return Err(Error::InvalidArgument("q_max must be at least 1".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {}", self.radius)));
        }
        match self.stop {
            StopCriterion::Count(c) if c == 0 || c > n => {
                Err(Error::InvalidArgument(format!("coarse count {c} outside [1, {n}]")))
            }
            StopCriterion::Tolerance(t) if !(t > 0.0) => {
                Err(Error::InvalidArgument(format!("tolerance must be positive, got {t}")))
            }
            _ => match self.batch_separation {
                Some(s) if s < 2.0 * self.radius => Err(Error::InvalidArgument(format!(
                    "batch separation {s} below twice the radius {}",
                    self.radius
                ))),
                _ => Ok(()),
            },
        }
    }
}

/// Counters gathered while coarsening.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoarsenDiagnostics {
    /// Final stencils whose computed variance is negative.
    pub negative_variances: usize,
    /// Final stencils whose local distance matrix fails the embeddability test.
    pub embeddability_failures: usize,
    /// Fine variables left without coarse neighbors.
    pub empty_stencils: usize,
    /// Times a non positive definite local matrix forced a smaller set.
    pub q_reductions: usize,
    /// Final stencils that needed a diagonal shift.
    pub regularized: usize,
    pub ill_conditioned: usize,
}

#[derive(Debug, Clone)]
pub struct PartitionState {
    coarse: Vec<usize>,
    is_coarse: Vec<bool>,
    variance: Vec<f64>,
    stencils: Vec<KrigingStencil>,
    regularized: Vec<bool>,
    /// Fine variables touched by the most recent update.
    pub last_updated: Vec<usize>,
    pub diagnostics: CoarsenDiagnostics,
}

impl PartitionState {
    pub fn n(&self) -> usize {
        self.is_coarse.len()
    }

    /// Coarse variables in insertion order.
    pub fn coarse(&self) -> &[usize] {
        &self.coarse
    }

    pub fn fine(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_coarse[i]).collect()
    }

    pub fn is_coarse(&self, i: usize) -> bool {
        self.is_coarse[i]
    }

    pub fn coarse_mask(&self) -> &[bool] {
        &self.is_coarse
    }

    /// Selection variance: zero for coarse variables, the clamped Kriging
    /// variance for fine ones.
    pub fn variance(&self, i: usize) -> f64 {
        self.variance[i]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variance
    }

    /// Stencil of a fine variable (meaningless for coarse ones).
    pub fn stencil(&self, i: usize) -> &KrigingStencil {
        &self.stencils[i]
    }

    pub fn max_fine_variance(&self) -> f64 {
        (0..self.n())
            .filter(|&i| !self.is_coarse[i])
            .map(|i| self.variance[i])
            .fold(0.0, f64::max)
    }

    fn set_stencil(&mut self, i: usize, stencil: KrigingStencil, regularized: bool) {
        self.variance[i] = stencil.clamped_variance();
        self.stencils[i] = stencil;
        self.regularized[i] = regularized;
    }

    fn make_coarse(&mut self, i: usize) {
        self.is_coarse[i] = true;
        self.coarse.push(i);
        self.variance[i] = 0.0;
        self.stencils[i] = KrigingStencil::empty(i, 0.0, self.stencils[i].mean_handling);
        self.regularized[i] = false;
    }
}

/// All-fine partition with prior variances and empty stencils.
pub fn init_variances(n: usize, source: &CovarianceSource<'_>, mean_handling: MeanHandling) -> PartitionState {
    let variance: Vec<f64> = (0..n).map(|i| source.variance(i)).collect();
    PartitionState {
        coarse: Vec::new(),
        is_coarse: vec![false; n],
        stencils: (0..n).map(|i| KrigingStencil::empty(i, variance[i], mean_handling)).collect(),
        variance,
        regularized: vec![false; n],
        last_updated: Vec::new(),
        diagnostics: CoarsenDiagnostics::default(),
    }
}

/// Fine variable of largest variance, first index on ties.
pub fn select_next(state: &PartitionState) -> Result<usize> {
    let mut best: Option<usize> = None;
    for i in 0..state.n() {
        if state.is_coarse[i] {
            continue;
        }
        match best {
            Some(b) if state.variance[i] <= state.variance[b] => {}
            _ => best = Some(i),
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no fine variables left".into()))
}

/// Greedy sweep of the fine variables in descending variance, accepting a
/// candidate only if it is farther than `min_separation` from everything
/// already accepted. At most `limit` variables are returned, and only
/// variables whose variance exceeds `floor`.
pub fn select_batch(
    state: &PartitionState,
    oracle: &DistanceOracle<'_>,
    min_separation: f64,
    limit: usize,
    floor: f64,
) -> Result<Vec<usize>> {
    let first = select_next(state)?;
    if !min_separation.is_finite() || limit <= 1 {
        return Ok(vec![first]);
    }
    let mut order: Vec<usize> = state.fine().into_iter().filter(|&i| state.variance[i] > floor).collect();
    order.sort_by(|&a, &b| state.variance[b].total_cmp(&state.variance[a]).then(a.cmp(&b)));
    let mut blocked = vec![false; state.n()];
    let mut accepted = Vec::new();
    for i in order {
        if blocked[i] {
            continue;
        }
        accepted.push(i);
        if accepted.len() == limit {
            break;
        }
        for (j, _) in oracle.neighborhood(i, min_separation) {
            blocked[j] = true;
        }
    }
    if accepted.is_empty() {
        accepted.push(first);
    }
    Ok(accepted)
}

/// Stencil of `i` from its nearest coarse variables. A local covariance
/// that is not positive definite drops its farthest member until it is.
/// Returns the stencil, whether a diagonal shift was used, and the number
/// of dropped members.
pub fn compute_stencil(
    i: usize,
    is_coarse: &[bool],
    oracle: &DistanceOracle<'_>,
    source: &CovarianceSource<'_>,
    opts: &CoarsenOptions,
) -> Result<(KrigingStencil, bool, usize)> {
    let mut members: Vec<usize> = nearest_coarse(i, is_coarse, oracle, opts.q_max, opts.radius)
        .into_iter()
        .map(|(j, _)| j)
        .collect();
    let mut dropped = 0;
    loop {
        let lc = assemble_local_cov(i, &members, source, oracle, 2.0 * opts.radius)?;
        if !lc.positive_definite && members.len() > 1 {
            members.pop();
            dropped += 1;
            continue;
        }
        let stencil = krige(&lc, opts.mean_handling)?;
        return Ok((stencil, lc.epsilon > 0.0, dropped));
    }
}

/// Moves `added` into the coarse set and recomputes the stencil of every
/// fine variable within the radius of an added one.
pub fn update_after_add(
    state: &mut PartitionState,
    added: &[usize],
    oracle: &DistanceOracle<'_>,
    source: &CovarianceSource<'_>,
    opts: &CoarsenOptions,
) -> Result<()> {
    for &a in added {
        if state.is_coarse[a] {
            return Err(Error::InvalidArgument(format!("variable {a} is already coarse")));
        }
        state.make_coarse(a);
    }
    let mut affected: Vec<usize> = added
        .iter()
        .flat_map(|&a| oracle.neighborhood(a, opts.radius))
        .map(|(j, _)| j)
        .filter(|&j| !state.is_coarse[j])
        .collect();
    affected.sort_unstable();
    affected.dedup();
    for &j in &affected {
        let (stencil, reg, dropped) = compute_stencil(j, &state.is_coarse, oracle, source, opts)?;
        state.diagnostics.q_reductions += dropped;
        state.set_stencil(j, stencil, reg);
    }
    state.last_updated = affected;
    Ok(())
}

/// Interpolation in canonical form: identity rows for coarse variables,
/// Kriging weights for fine ones. Coarse columns follow insertion order.
#[derive(Debug, Clone)]
pub struct InterpolationOperator {
    pub n: usize,
    pub n_c: usize,
    /// Column of each coarse variable, `None` for fine ones.
    pub coarse_index: Vec<Option<usize>>,
    pub matrix: SparseMatrix,
}

impl InterpolationOperator {
    pub fn from_state(state: &PartitionState) -> Self {
        let n = state.n();
        let mut coarse_index = vec![None; n];
        for (c, &i) in state.coarse.iter().enumerate() {
            coarse_index[i] = Some(c);
        }
        let mut triplets = Vec::new();
        for i in 0..n {
            match coarse_index[i] {
                Some(c) => triplets.push((i, c, 1.0)),
                None => {
                    let s = &state.stencils[i];
                    for (&j, &w) in s.members.iter().zip(&s.weights) {
                        let c = coarse_index[j].expect("stencil members are coarse");
                        triplets.push((i, c, w));
                    }
                }
            }
        }
        let n_c = state.coarse.len();
        Self {
            n,
            n_c,
            coarse_index,
            matrix: SparseMatrix::from_triplets(n, n_c, triplets),
        }
    }
}

/// Runs the greedy loop to completion and assembles the interpolation.
pub fn coarsen_with_oracle(
    oracle: &DistanceOracle<'_>,
    source: &CovarianceSource<'_>,
    opts: &CoarsenOptions,
) -> Result<(PartitionState, InterpolationOperator)> {
    let n = oracle.n();
    opts.validate(n)?;
    let mut state = init_variances(n, source, opts.mean_handling);
    loop {
        let (limit, floor) = match opts.stop {
            StopCriterion::Count(nc) => {
                if state.coarse.len() >= nc {
                    break;
                }
                (nc - state.coarse.len(), f64::NEG_INFINITY)
            }
            StopCriterion::Tolerance(t) => {
                if state.coarse.len() == n || state.max_fine_variance() <= t {
                    break;
                }
                (n, t)
            }
        };
        let added = match opts.batch_separation {
            Some(sep) => select_batch(&state, oracle, sep, limit, floor)?,
            None => vec![select_next(&state)?],
        };
        update_after_add(&mut state, &added, oracle, source, opts)?;
    }
    finalize_diagnostics(&mut state, oracle, opts);
    let p = InterpolationOperator::from_state(&state);
    Ok((state, p))
}

pub fn coarsen(
    problem: &ProblemInstance,
    source: &CovarianceSource<'_>,
    opts: &CoarsenOptions,
) -> Result<(PartitionState, InterpolationOperator)> {
    let oracle = DistanceOracle::new(opts.distance, problem)?;
    coarsen_with_oracle(&oracle, source, opts)
}

fn finalize_diagnostics(state: &mut PartitionState, oracle: &DistanceOracle<'_>, opts: &CoarsenOptions) {
    let mut d = state.diagnostics;
    for i in 0..state.n() {
        if state.is_coarse[i] {
            continue;
        }
        let s = &state.stencils[i];
        if s.members.is_empty() {
            d.empty_stencils += 1;
            continue;
        }
        if s.variance < 0.0 {
            d.negative_variances += 1;
        }
        if s.ill_conditioned {
            d.ill_conditioned += 1;
        }
        if state.regularized[i] {
            d.regularized += 1;
        }
        if s.members.len() >= 2 {
            let mut pts = s.members.clone();
            pts.push(i);
            if !check_local_embeddability(&oracle.pairwise(&pts, 2.0 * opts.radius)).embeddable {
                d.embeddability_failures += 1;
            }
        }
    }
    state.diagnostics = d;
}

/// Splitting as CSV with columns `index, x, y, role`; coordinates are left
/// blank when the problem has none.
pub fn splitting_csv(problem: &ProblemInstance, state: &PartitionState) -> CsvTable {
    let mut t = CsvTable::new(["index", "x", "y", "role"]);
    for i in 0..state.n() {
        let (x, y) = match &problem.coords {
            Some(c) => (fmt_f64(c[i][0]), fmt_f64(c[i][1])),
            None => (String::new(), String::new()),
        };
        let role = if state.is_coarse[i] { "C" } else { "F" };
        t.push(vec![i.to_string(), x, y, role.to_string()]);
    }
    t
}
