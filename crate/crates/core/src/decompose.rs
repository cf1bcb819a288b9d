//! Problem decomposition: DBSCAN for additive mixtures and PC skeleton
//! learning for multiplicative factorizations, plus recombination of the
//! per-part results.
//!
//! Variable indices are 0-based throughout; `x1` is index 0.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::expr::{BinaryOp, ExprError, Node};
use crate::{Density, Expression};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecomposeError {
    #[error("eps must be positive and finite, got {0}")]
    InvalidEps(f64),
    #[error("min_pts must be at least 1")]
    InvalidMinPts,
    #[error("need more than {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("conditioning set is rank deficient")]
    SingularConditioning,
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),
    #[error("invalid variable selection: {0}")]
    InvalidIndices(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("need at least 2 variables, got {0}")]
    TooFewVariables(usize),
    #[error("weights must be non-negative and sum to 1, got sum {0}")]
    WeightMismatch(f64),
    #[error("blocks do not partition 0..{0}")]
    PartitionError(usize),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// DBSCAN output. `None` marks noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub labels: Vec<Option<usize>>,
    pub k: usize,
    /// Fraction of all samples in each cluster.
    pub weights: Vec<f64>,
}

impl ClusterLabels {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Row indices of cluster `c`, in input order.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(c))
            .map(|(i, _)| i)
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Density-based clustering with the Euclidean metric.
///
/// A point's neighborhood includes the point itself, so a core point has
/// at least `min_pts` samples (itself included) within `eps`. Clusters are
/// grown in input order; a border point reachable from several clusters
/// stays in the first, which is the one with the lowest id.
pub fn dbscan(
    samples: ArrayView2<'_, f64>,
    eps: f64,
    min_pts: usize,
) -> Result<ClusterLabels, DecomposeError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(DecomposeError::InvalidEps(eps));
    }
    if min_pts == 0 {
        return Err(DecomposeError::InvalidMinPts);
    }
    let n = samples.nrows();
    let rows: Vec<Vec<f64>> = samples.rows().into_iter().map(|r| r.to_vec()).collect();
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| sq_dist(&rows[i], &rows[j]) <= eps2)
            .collect()
    };
    let core: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            rows.iter()
                .filter(|r| sq_dist(&rows[i], r) <= eps2)
                .take(min_pts)
                .count()
                >= min_pts
        })
        .collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut k = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !core[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(k);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbors(p) {
                if labels[q].is_none() {
                    labels[q] = Some(k);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        k += 1;
    }
    let mut counts = vec![0usize; k];
    for c in labels.iter().flatten() {
        counts[*c] += 1;
    }
    let weights = counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect();
    Ok(ClusterLabels { labels, k, weights })
}

fn column_stats(data: ArrayView2<'_, f64>, j: usize) -> Result<(f64, f64), DecomposeError> {
    let col = data.column(j);
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
    if !(ss > 0.0) {
        return Err(DecomposeError::ConstantColumn(j));
    }
    Ok((mean, ss.sqrt()))
}

/// Correlation matrix of the selected columns.
fn correlation(data: ArrayView2<'_, f64>, cols: &[usize]) -> Result<DMatrix<f64>, DecomposeError> {
    let stats = cols
        .iter()
        .map(|&j| column_stats(data, j))
        .collect::<Result<Vec<_>, _>>()?;
    let m = cols.len();
    let mut r = DMatrix::identity(m, m);
    for a in 0..m {
        for b in (a + 1)..m {
            let (ma, sa) = stats[a];
            let (mb, sb) = stats[b];
            let ca = data.column(cols[a]);
            let cb = data.column(cols[b]);
            let s: f64 = ca.iter().zip(cb).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let v = (s / (sa * sb)).clamp(-1.0, 1.0);
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    Ok(r)
}

/// Sample partial correlation of columns `i` and `j` given the columns in
/// `cond`, from the correlation matrix via regression residuals.
pub fn partial_correlation(
    data: ArrayView2<'_, f64>,
    i: usize,
    j: usize,
    cond: &[usize],
) -> Result<f64, DecomposeError> {
    let d = data.ncols();
    if i == j || i >= d || j >= d || cond.iter().any(|&s| s == i || s == j || s >= d) {
        return Err(DecomposeError::InvalidIndices(format!(
            "i={i}, j={j}, S={cond:?} with {d} columns"
        )));
    }
    let n = data.nrows();
    if n <= cond.len() + 3 {
        return Err(DecomposeError::TooFewSamples {
            needed: cond.len() + 3,
            found: n,
        });
    }
    let mut cols = vec![i, j];
    cols.extend_from_slice(cond);
    let r = correlation(data, &cols)?;
    if cond.is_empty() {
        return Ok(r[(0, 1)]);
    }
    let m = cond.len();
    let rss = r.view((2, 2), (m, m)).into_owned();
    let chol = rss.cholesky().ok_or(DecomposeError::SingularConditioning)?;
    if (0..m).any(|k| chol.l()[(k, k)] < 1e-10) {
        return Err(DecomposeError::SingularConditioning);
    }
    let ri = r.view((0, 2), (1, m)).transpose();
    let rj = r.view((1, 2), (1, m)).transpose();
    let si = chol.solve(&ri);
    let sj = chol.solve(&rj);
    let cov = r[(0, 1)] - ri.dot(&sj);
    let vi = 1.0 - ri.dot(&si);
    let vj = 1.0 - rj.dot(&sj);
    if !(vi > 1e-12 && vj > 1e-12) {
        return Err(DecomposeError::SingularConditioning);
    }
    Ok((cov / (vi * vj).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Independence {
    Independent,
    Dependent,
}

/// Fisher z test of zero partial correlation at level `alpha`.
pub fn ci_test(
    r: f64,
    n: usize,
    card_s: usize,
    alpha: f64,
) -> Result<Independence, DecomposeError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DecomposeError::InvalidAlpha(alpha));
    }
    if n <= card_s + 3 {
        return Err(DecomposeError::TooFewSamples {
            needed: card_s + 3,
            found: n,
        });
    }
    let r = r.clamp(-(1.0 - 1e-12), 1.0 - 1e-12);
    let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln();
    let stat = ((n - card_s - 3) as f64).sqrt() * z.abs();
    let threshold = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok(if stat < threshold {
        Independence::Independent
    } else {
        Independence::Dependent
    })
}

/// Undirected skeleton and its connected components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub d: usize,
    /// Edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Components sorted by their smallest member; members ascending.
    pub components: Vec<Vec<usize>>,
}

impl DependencyGraph {
    pub fn from_edges(d: usize, mut edges: Vec<(usize, usize)>) -> Self {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let components = components(d, &edges);
        DependencyGraph {
            d,
            edges,
            components,
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let e = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&e).is_ok()
    }
}

/// Connected components by breadth-first search from the lowest index.
pub fn components(d: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); d];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; d];
    let mut out = Vec::new();
    for s in 0..d {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Calls `f` on each `k`-subset of `items` in lexicographic order until it
/// returns `true`.
fn any_subset(
    items: &[usize],
    k: usize,
    mut f: impl FnMut(&[usize]) -> Result<bool, DecomposeError>,
) -> Result<bool, DecomposeError> {
    if k > items.len() {
        return Ok(false);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut subset = vec![0; k];
    loop {
        for (s, &i) in subset.iter_mut().zip(&idx) {
            *s = items[i];
        }
        if f(&subset)? {
            return Ok(true);
        }
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < items.len() - k + p) else {
            return Ok(false);
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// PC skeleton search from the complete graph.
///
/// For `l = 0..=max_cond` (default `d - 2`), every ordered adjacent pair
/// `(i, j)` in lexicographic order is tested against each `l`-subset `S` of
/// `adj(i) \ {j}`, also in lexicographic order; the edge is removed at the
/// first subset judged independent. Adjacency updates take effect
/// immediately.
pub fn pc_skeleton(
    data: ArrayView2<'_, f64>,
    alpha: f64,
    max_cond: Option<usize>,
) -> Result<DependencyGraph, DecomposeError> {
    let d = data.ncols();
    if d < 2 {
        return Err(DecomposeError::TooFewVariables(d));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DecomposeError::InvalidAlpha(alpha));
    }
    let n = data.nrows();
    let max_cond = max_cond.unwrap_or(d - 2);
    let mut adj = vec![vec![true; d]; d];
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = false;
    }
    for l in 0..=max_cond {
        let mut any_testable = false;
        for i in 0..d {
            for j in 0..d {
                if !adj[i][j] {
                    continue;
                }
                let others: Vec<usize> = (0..d).filter(|&k| k != j && adj[i][k]).collect();
                if others.len() < l {
                    continue;
                }
                any_testable = true;
                let independent = any_subset(&others, l, |s| {
                    let r = partial_correlation(data, i, j, s)?;
                    Ok(ci_test(r, n, s.len(), alpha)? == Independence::Independent)
                })?;
                if independent {
                    adj[i][j] = false;
                    adj[j][i] = false;
                }
            }
        }
        if !any_testable {
            break;
        }
    }
    let edges = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .filter(|&(i, j)| adj[i][j])
        .collect();
    Ok(DependencyGraph::from_edges(d, edges))
}

/// `g(x) = sum_i w_i f_i(x)`.
#[derive(Debug, Clone)]
pub struct MixtureDensity<D> {
    parts: Vec<(f64, D)>,
}

impl<D: Density> MixtureDensity<D> {
    pub fn parts(&self) -> &[(f64, D)] {
        &self.parts
    }
}

impl MixtureDensity<Expression> {
    /// The combined expression `w1 * e1 + w2 * e2 + ...`.
    pub fn expression(&self) -> Expression {
        let var_count = self.parts[0].1.var_count();
        let root = self
            .parts
            .iter()
            .map(|(w, e)| {
                if *w == 1.0 {
                    e.root().clone()
                } else {
                    Node::binary(BinaryOp::Mul, Node::constant(*w), e.root().clone())
                }
            })
            .reduce(|acc, t| Node::binary(BinaryOp::Add, acc, t))
            .expect("at least one part");
        Expression::new(root, var_count).expect("parts share the variable count")
    }
}

impl<D: Density> Density for MixtureDensity<D> {
    fn dim(&self) -> usize {
        self.parts[0].1.dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|(w, f)| w * f.density(x)).sum()
    }
}

/// Weighted sum of per-cluster densities. Weights must be non-negative and
/// sum to one within `1e-9`.
pub fn recombine_additive<D: Density>(
    parts: Vec<(f64, D)>,
) -> Result<MixtureDensity<D>, DecomposeError> {
    let total: f64 = parts.iter().map(|p| p.0).sum();
    if parts.is_empty() || parts.iter().any(|p| !(p.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(DecomposeError::WeightMismatch(total));
    }
    let d = parts[0].1.dim();
    if parts.iter().any(|p| p.1.dim() != d) {
        return Err(DecomposeError::InvalidIndices(
            "parts have different dimensions".into(),
        ));
    }
    Ok(MixtureDensity { parts })
}

/// `g(x) = prod_i f_i(x restricted to block i)`.
#[derive(Debug, Clone)]
pub struct ProductDensity<D> {
    d: usize,
    blocks: Vec<(Vec<usize>, D)>,
}

impl<D: Density> ProductDensity<D> {
    pub fn blocks(&self) -> &[(Vec<usize>, D)] {
        &self.blocks
    }
}

impl ProductDensity<Expression> {
    /// The combined expression over all `d` variables, each block's local
    /// variables renamed to their global indices.
    pub fn expression(&self) -> Expression {
        let root = self
            .blocks
            .iter()
            .map(|(block, e)| e.root().map_vars(&|k| block[k]))
            .reduce(|acc, t| Node::binary(BinaryOp::Mul, acc, t))
            .expect("at least one block");
        Expression::new(root, self.d).expect("block indices are below d")
    }
}

impl<D: Density> Density for ProductDensity<D> {
    fn dim(&self) -> usize {
        self.d
    }

    fn density(&self, x: &[f64]) -> f64 {
        let mut sub = Vec::with_capacity(self.d);
        self.blocks
            .iter()
            .map(|(block, f)| {
                sub.clear();
                sub.extend(block.iter().map(|&k| x[k]));
                f.density(&sub)
            })
            .product()
    }
}

/// Product of per-block densities. Blocks must partition `0..d` and each
/// density's dimension must equal its block size.
pub fn recombine_multiplicative<D: Density>(
    blocks: Vec<(Vec<usize>, D)>,
    d: usize,
) -> Result<ProductDensity<D>, DecomposeError> {
    let mut seen = vec![false; d];
    for (block, f) in &blocks {
        if block.is_empty() || f.dim() != block.len() {
            return Err(DecomposeError::PartitionError(d));
        }
        for &k in block {
            if k >= d || seen[k] {
                return Err(DecomposeError::PartitionError(d));
            }
            seen[k] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(DecomposeError::PartitionError(d));
    }
    Ok(ProductDensity { d, blocks })
}
