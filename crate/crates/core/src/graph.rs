//! Undirected graphs, learnable edge masks and the two normalized operators
//! built from them.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GplError, Result};
use crate::linalg::Matrix;

/// Binary node label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn flip(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
        })
    }
}

/// Immutable undirected graph with node features and held-out labels.
///
/// Edges are stored once each as `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<Label>,
    // (neighbor, edge index) per node, sorted by neighbor
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl SparseGraph {
    /// Validates and canonicalizes the edge list: `(j, i)` duplicates of
    /// `(i, j)` collapse to a single undirected edge.
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        features: Matrix,
        labels: Vec<Label>,
    ) -> Result<Self> {
        if features.rows() != n {
            return Err(GplError::FeatureRows {
                expected: n,
                found: features.rows(),
            });
        }
        if labels.len() != n {
            return Err(GplError::LabelCount {
                expected: n,
                found: labels.len(),
            });
        }
        let mut canon = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GplError::IndexOutOfRange { i, j, n });
            }
            if i == j {
                return Err(GplError::SelfLoop(i));
            }
            canon.push((i.min(j), i.max(j)));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self::from_canonical(n, canon, features, labels))
    }

    fn from_canonical(
        n: usize,
        edges: Vec<(usize, usize)>,
        features: Matrix,
        labels: Vec<Label>,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            adjacency[i].push((j, e));
            adjacency[j].push((i, e));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            n,
            edges,
            features,
            labels,
            adjacency,
        }
    }

    /// Same nodes, features and labels with a different (already canonical) edge set.
    pub(crate) fn with_edges(&self, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        Self::from_canonical(self.n, edges, self.features.clone(), self.labels.clone())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// `(neighbor, edge index)` pairs of node `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn is_heterophilic(&self, edge: usize) -> bool {
        let (i, j) = self.edges[edge];
        self.labels[i] != self.labels[j]
    }

    pub fn positive_nodes(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.labels[i].is_positive())
            .collect()
    }

    /// Fraction of edges whose endpoints carry different labels.
    pub fn heterophily_ratio(&self) -> Result<f64> {
        if self.edges.is_empty() {
            return Err(GplError::NoEdges);
        }
        let cross = (0..self.edges.len())
            .filter(|&e| self.is_heterophilic(e))
            .count();
        Ok(cross as f64 / self.edges.len() as f64)
    }

    /// Mean edge weight over homophilic and heterophilic edges, in that order.
    /// A class with no edges reports `NaN`.
    pub fn mean_weight_by_type(&self, weights: &[f64]) -> (f64, f64) {
        let (mut homo, mut hetero) = ((0.0, 0usize), (0.0, 0usize));
        for (e, &w) in weights.iter().enumerate() {
            let slot = if self.is_heterophilic(e) {
                &mut hetero
            } else {
                &mut homo
            };
            slot.0 += w;
            slot.1 += 1;
        }
        let mean = |(s, c): (f64, usize)| if c == 0 { f64::NAN } else { s / c as f64 };
        (mean(homo), mean(hetero))
    }

    /// Rewire edges so that the heterophily ratio matches `target_h`,
    /// keeping the edge count fixed.
    ///
    /// Each step deletes a uniformly random edge of the over-represented
    /// type and inserts a uniformly random absent pair of the other type,
    /// until the cross-class edge count equals `round(target_h * |E|)`.
    pub fn rewire_to_heterophily(&self, target_h: f64, seed: u64) -> Result<SparseGraph> {
        if !(0.0..=1.0).contains(&target_h) {
            return Err(GplError::InvalidArgument(format!(
                "target heterophily {target_h} outside [0, 1]"
            )));
        }
        let m = self.edges.len();
        if m == 0 {
            return Err(GplError::NoEdges);
        }
        let pos = self.positive_nodes();
        let neg: Vec<usize> = (0..self.n)
            .filter(|&i| !self.labels[i].is_positive())
            .collect();
        let cross_pairs = pos.len() * neg.len();
        let within_pairs = pairs(pos.len()) + pairs(neg.len());
        let target = (target_h * m as f64).round() as usize;
        if target > cross_pairs || m - target > within_pairs {
            return Err(GplError::UnreachableHeterophily {
                target: target_h,
                edges: m,
                min: m.saturating_sub(within_pairs) as f64 / m as f64,
                max: cross_pairs.min(m) as f64 / m as f64,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut present: HashSet<(usize, usize)> = self.edges.iter().copied().collect();
        let (mut cross, mut within): (Vec<_>, Vec<_>) = self
            .edges
            .iter()
            .copied()
            .partition(|&(i, j)| self.labels[i] != self.labels[j]);

        while cross.len() != target {
            let add_cross = cross.len() < target;
            let (remove_from, add_to) = if add_cross {
                (&mut within, &mut cross)
            } else {
                (&mut cross, &mut within)
            };
            let k = rng.random_range(0..remove_from.len());
            let removed = remove_from.swap_remove(k);
            present.remove(&removed);
            let pair = if add_cross {
                sample_absent_cross(&pos, &neg, &present, &mut rng)
            } else {
                sample_absent_within(&pos, &neg, &present, &mut rng)
            };
            // the removed pair is absent again, so a candidate always exists
            let pair = pair.expect("an absent pair of the requested type exists");
            present.insert(pair);
            add_to.push(pair);
        }

        let mut edges = cross;
        edges.extend(within);
        Ok(self.with_edges(edges))
    }
}

fn pairs(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

fn canonical(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

const REJECTION_TRIES: usize = 256;

fn sample_absent_cross(
    pos: &[usize],
    neg: &[usize],
    present: &HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, usize)> {
    for _ in 0..REJECTION_TRIES {
        let p = canonical(
            pos[rng.random_range(0..pos.len())],
            neg[rng.random_range(0..neg.len())],
        );
        if !present.contains(&p) {
            return Some(p);
        }
    }
    let absent: Vec<_> = pos
        .iter()
        .flat_map(|&a| neg.iter().map(move |&b| canonical(a, b)))
        .filter(|p| !present.contains(p))
        .collect();
    pick(&absent, rng)
}

fn sample_absent_within(
    pos: &[usize],
    neg: &[usize],
    present: &HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, usize)> {
    let (wp, wn) = (pairs(pos.len()), pairs(neg.len()));
    for _ in 0..REJECTION_TRIES {
        let class = if rng.random_range(0..wp + wn) < wp {
            pos
        } else {
            neg
        };
        let a = class[rng.random_range(0..class.len())];
        let b = class[rng.random_range(0..class.len())];
        if a == b {
            continue;
        }
        let p = canonical(a, b);
        if !present.contains(&p) {
            return Some(p);
        }
    }
    let mut absent = Vec::new();
    for class in [pos, neg] {
        for (x, &a) in class.iter().enumerate() {
            for &b in &class[x + 1..] {
                let p = canonical(a, b);
                if !present.contains(&p) {
                    absent.push(p);
                }
            }
        }
    }
    absent.sort_unstable();
    pick(&absent, rng)
}

fn pick(items: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Option<(usize, usize)> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.random_range(0..items.len())])
    }
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Initial mask weight for every edge.
pub const INITIAL_MASK_WEIGHT: f64 = 0.95;

/// Learnable per-edge weights `sigmoid(theta_e)`, one parameter per
/// undirected edge so the weighted adjacency stays symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    raw: Vec<f64>,
}

impl EdgeMask {
    /// All edges at [`INITIAL_MASK_WEIGHT`].
    pub fn new(num_edges: usize) -> Self {
        Self::uniform(num_edges, INITIAL_MASK_WEIGHT)
    }

    /// Panics unless `0 < weight < 1`.
    pub fn uniform(num_edges: usize, weight: f64) -> Self {
        assert!(
            weight > 0.0 && weight < 1.0,
            "mask weight must lie in (0, 1)"
        );
        Self {
            raw: vec![logit(weight); num_edges],
        }
    }

    pub fn from_raw(raw: Vec<f64>) -> Self {
        Self { raw }
    }

    pub fn for_graph(g: &SparseGraph) -> Self {
        Self::new(g.num_edges())
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn weight(&self, edge: usize) -> f64 {
        sigmoid(self.raw[edge])
    }

    pub fn weights(&self) -> Vec<f64> {
        self.raw.iter().map(|&t| sigmoid(t)).collect()
    }

    pub(crate) fn check(&self, g: &SparseGraph) -> Result<()> {
        if self.raw.len() != g.num_edges() {
            return Err(GplError::MaskMismatch {
                expected: g.num_edges(),
                found: self.raw.len(),
            });
        }
        Ok(())
    }
}

/// Sparse row-major operator over the nodes of a graph. Each stored entry
/// remembers the undirected edge it came from (`None` for diagonal entries).
#[derive(Debug, Clone)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    edge_ids: Vec<Option<usize>>,
}

impl SparseOperator {
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// `(column, value, edge)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64, Option<usize>)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r.clone()])
            .zip(&self.edge_ids[r])
            .map(|((&c, &v), &e)| (c, v, e))
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .filter(|&(c, _, _)| c == j)
            .map(|(_, v, _)| v)
            .sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v, _)| v).sum()
    }

    /// `self * x` for an `n x c` dense matrix.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.n, "operator/matrix shape mismatch");
        let mut out = Matrix::zeros(self.n, x.cols());
        for i in 0..self.n {
            for (j, v, _) in self.row(i) {
                let src = x.row(j);
                for (o, &s) in out.row_mut(i).iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        out
    }

    /// `self^T * x`.
    pub fn apply_transpose(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.n, "operator/matrix shape mismatch");
        let mut out = Matrix::zeros(self.n, x.cols());
        for i in 0..self.n {
            for (j, v, _) in self.row(i) {
                for c in 0..x.cols() {
                    out[(j, c)] += v * x[(i, c)];
                }
            }
        }
        out
    }

    /// `self * v` for a vector.
    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).map(|(j, a, _)| a * v[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v, _) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// Row-stochastic label-propagation operator `D_M^{-1} (M ⊙ A)`.
/// Isolated nodes (or nodes whose masked degree is zero) get an identity row.
#[derive(Debug, Clone)]
pub struct PropagationOperator(SparseOperator);

impl PropagationOperator {
    pub fn new(g: &SparseGraph, mask: &EdgeMask) -> Result<Self> {
        mask.check(g)?;
        Ok(Self::from_weights(g, &mask.weights()))
    }

    /// Panics if `weights.len() != g.num_edges()`.
    pub fn from_weights(g: &SparseGraph, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), g.num_edges(), "one weight per edge");
        let n = g.num_nodes();
        let mut op = SparseOperator {
            n,
            row_ptr: Vec::with_capacity(n + 1),
            cols: Vec::new(),
            vals: Vec::new(),
            edge_ids: Vec::new(),
        };
        op.row_ptr.push(0);
        for i in 0..n {
            let nbrs = g.neighbors(i);
            let degree: f64 = nbrs.iter().map(|&(_, e)| weights[e]).sum();
            if degree > 0.0 {
                for &(j, e) in nbrs {
                    op.cols.push(j);
                    op.vals.push(weights[e] / degree);
                    op.edge_ids.push(Some(e));
                }
            } else {
                op.cols.push(i);
                op.vals.push(1.0);
                op.edge_ids.push(None);
            }
            op.row_ptr.push(op.cols.len());
        }
        Self(op)
    }

    pub fn inner(&self) -> &SparseOperator {
        &self.0
    }

    /// `M ⊙ A` without the degree division. Only used to inject a fault
    /// into the validation suite.
    pub(crate) fn without_normalization(g: &SparseGraph, weights: &[f64]) -> Self {
        let mut op = Self::from_weights(g, weights);
        for (v, e) in op.0.vals.iter_mut().zip(&op.0.edge_ids) {
            if let Some(e) = e {
                *v = weights[*e];
            }
        }
        op
    }
}

impl std::ops::Deref for PropagationOperator {
    type Target = SparseOperator;

    fn deref(&self) -> &SparseOperator {
        &self.0
    }
}

/// Symmetric graph-convolution operator `D̃^{-1/2} (M ⊙ A + I) D̃^{-1/2}`.
#[derive(Debug, Clone)]
pub struct GcnOperator(SparseOperator);

impl GcnOperator {
    pub fn new(g: &SparseGraph, mask: &EdgeMask) -> Result<Self> {
        mask.check(g)?;
        Ok(Self::from_weights(g, &mask.weights()))
    }

    /// Unmasked operator (every edge weight 1).
    pub fn unit(g: &SparseGraph) -> Self {
        Self::from_weights(g, &vec![1.0; g.num_edges()])
    }

    pub fn from_weights(g: &SparseGraph, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), g.num_edges(), "one weight per edge");
        let n = g.num_nodes();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| {
                let d: f64 = 1.0 + g.neighbors(i).iter().map(|&(_, e)| weights[e]).sum::<f64>();
                1.0 / d.sqrt()
            })
            .collect();
        let mut op = SparseOperator {
            n,
            row_ptr: Vec::with_capacity(n + 1),
            cols: Vec::new(),
            vals: Vec::new(),
            edge_ids: Vec::new(),
        };
        op.row_ptr.push(0);
        for i in 0..n {
            let mut self_done = false;
            for &(j, e) in g.neighbors(i) {
                if !self_done && j > i {
                    op.cols.push(i);
                    op.vals.push(inv_sqrt[i] * inv_sqrt[i]);
                    op.edge_ids.push(None);
                    self_done = true;
                }
                op.cols.push(j);
                op.vals.push(weights[e] * inv_sqrt[i] * inv_sqrt[j]);
                op.edge_ids.push(Some(e));
            }
            if !self_done {
                op.cols.push(i);
                op.vals.push(inv_sqrt[i] * inv_sqrt[i]);
                op.edge_ids.push(None);
            }
            op.row_ptr.push(op.cols.len());
        }
        Self(op)
    }
}

impl std::ops::Deref for GcnOperator {
    type Target = SparseOperator;

    fn deref(&self) -> &SparseOperator {
        &self.0
    }
}
