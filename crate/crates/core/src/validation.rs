//! Executable oracles: finite-difference gradient checks, heterophily
//! influence, the influence/belief-delta identity, the P-N distance
//! contraction and the irreducibility diagnostic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GplError, Result};
use crate::gnn::{self, ClassifierState};
use crate::graph::{logit, EdgeMask, GcnOperator, Label, PropagationOperator, SparseGraph};
use crate::linalg::Matrix;
use crate::propagation::{
    init_beliefs, propagate, BeliefMatrix, IdentifiedNodes, LplProblem, PropagationConfig,
};
use crate::synth::{PUSplit, PlantedConfig};

pub const HI_STEP: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_QUANTILE: f64 = 0.01;

fn final_negative(
    op: &PropagationOperator,
    e0: &BeliefMatrix,
    cfg: PropagationConfig,
    a: usize,
) -> f64 {
    propagate(op, e0, cfg).negative(a)
}

fn check_node(g: &SparseGraph, i: usize) -> Result<()> {
    if i < g.num_nodes() {
        Ok(())
    } else {
        Err(GplError::NodeOutOfRange {
            node: i,
            n: g.num_nodes(),
        })
    }
}

fn influence_on(
    op: &PropagationOperator,
    e0: &BeliefMatrix,
    cfg: PropagationConfig,
    a: usize,
    b: usize,
) -> f64 {
    let start = e0.negative(a);
    let p = e0.negative(b);
    let eval = |q: f64| {
        let mut e = e0.clone();
        e.set(b, 1.0 - q, q);
        (final_negative(op, &e, cfg, a) - start).abs()
    };
    ((eval(p + HI_STEP) - eval(p - HI_STEP)) / (2.0 * HI_STEP)).abs()
}

/// Sensitivity of `|P_a(-1)^(K) - P_a(-1)^(0)|` to `P_b(-1)^(0)`, with
/// `P_b(+1)` moved in step to stay on the simplex.
pub fn heterophily_influence(
    g: &SparseGraph,
    mask: &EdgeMask,
    e0: &BeliefMatrix,
    cfg: PropagationConfig,
    a: usize,
    b: usize,
) -> Result<f64> {
    check_node(g, a)?;
    check_node(g, b)?;
    if a == b {
        return Err(GplError::InvalidArgument("influence needs a != b".into()));
    }
    let op = PropagationOperator::new(g, mask)?;
    Ok(influence_on(&op, e0, cfg, a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceReport {
    pub target: usize,
    /// `(source, HI)` for every source initialised at `[0, 1]`.
    pub per_source: Vec<(usize, f64)>,
    pub sum: f64,
    pub delta: f64,
    pub residual: f64,
    /// `P_a(+1)` after propagation, reported alongside the sum.
    pub final_positive: f64,
}

/// Sum of influence over negative sources against the belief change of a
/// positive target. Every row of `e0` must be pure.
pub fn check_influence_identity(
    g: &SparseGraph,
    mask: &EdgeMask,
    e0: &BeliefMatrix,
    cfg: PropagationConfig,
    a: usize,
) -> Result<InfluenceReport> {
    let op = PropagationOperator::new(g, mask)?;
    influence_identity_with(&op, g, e0, cfg, a)
}

fn influence_identity_with(
    op: &PropagationOperator,
    g: &SparseGraph,
    e0: &BeliefMatrix,
    cfg: PropagationConfig,
    a: usize,
) -> Result<InfluenceReport> {
    check_node(g, a)?;
    for i in 0..e0.num_nodes() {
        let neg = e0.negative(i);
        if !(neg == 0.0 || neg == 1.0) || e0.row_sum(i) != 1.0 {
            return Err(GplError::InvalidArgument(format!(
                "initial belief of node {i} is not pure"
            )));
        }
    }
    if e0.negative(a) != 0.0 {
        return Err(GplError::InvalidArgument(format!(
            "target {a} must start as positive"
        )));
    }
    let per_source: Vec<(usize, f64)> = (0..e0.num_nodes())
        .filter(|&b| b != a && e0.negative(b) == 1.0)
        .map(|b| (b, influence_on(op, e0, cfg, a, b)))
        .collect();
    let sum: f64 = per_source.iter().map(|(_, v)| v).sum();
    let last = propagate(op, e0, cfg);
    let delta = (last.negative(a) - e0.negative(a)).abs();
    Ok(InfluenceReport {
        target: a,
        per_source,
        sum,
        delta,
        residual: (sum - delta).abs(),
        final_positive: last.positive(a),
    })
}

/// `1/2 * sum_{i in P, j in N} op_ij * |x_i - x_j|^2` over the stored
/// entries of `op`, with classes from `labels`.
pub fn dpn_distance_with(op: &PropagationOperator, labels: &[Label], x: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in (0..labels.len()).filter(|&i| labels[i].is_positive()) {
        for (j, w, _) in op.row(i) {
            if labels[j].is_positive() {
                continue;
            }
            let d2: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += w * d2;
        }
    }
    0.5 * total
}

/// P-N distance under the row-normalised masked adjacency.
pub fn dpn_distance(x: &Matrix, g: &SparseGraph, mask: &EdgeMask) -> Result<f64> {
    let op = PropagationOperator::new(g, mask)?;
    Ok(dpn_distance_with(&op, g.labels(), x))
}

/// `(D_PN(x), D_PN(op * x))`.
pub fn check_pn_contraction(g: &SparseGraph, mask: &EdgeMask, x: &Matrix) -> Result<(f64, f64)> {
    let op = PropagationOperator::new(g, mask)?;
    let before = dpn_distance_with(&op, g.labels(), x);
    let after = dpn_distance_with(&op, g.labels(), &op.apply(x));
    Ok((before, after))
}

/// Upper `quantile` of the scores by nearest rank; `quantile = 0` is the max.
pub fn irreducibility_diagnostic(scores: &[f64], quantile: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(GplError::EmptyScores);
    }
    if let Some(&bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(GplError::ScoreRange(bad));
    }
    if !(0.0..1.0).contains(&quantile) {
        return Err(GplError::InvalidArgument(format!(
            "quantile must lie in [0, 1), got {quantile}"
        )));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((1.0 - quantile) * s.len() as f64).ceil() as usize;
    Ok(s[rank.clamp(1, s.len()) - 1])
}

/// Bayes posterior of the planted feature model, smoothed by one step of
/// `alpha * p + (1 - alpha) * W p` over the unmasked graph.
pub fn oracle_posteriors(g: &SparseGraph, cfg: &PlantedConfig, alpha: f64) -> Vec<f64> {
    let n_pos = g.labels().iter().filter(|l| l.is_positive()).count();
    let prior = n_pos as f64 / g.num_nodes() as f64;
    let half = cfg.feature_separation / 2.0;
    let feature_post: Vec<f64> = (0..g.num_nodes())
        .map(|i| {
            // log-likelihood ratio of N(+half, 1) vs N(-half, 1) on axis 0
            let llr = 2.0 * half * g.features()[(i, 0)];
            crate::graph::sigmoid(llr + (prior / (1.0 - prior)).ln())
        })
        .collect();
    let op = PropagationOperator::from_weights(g, &vec![1.0; g.num_edges()]);
    op.apply_vec(&feature_post)
        .iter()
        .zip(&feature_post)
        .map(|(m, p)| alpha * p + (1.0 - alpha) * m)
        .collect()
}

/// Erdős–Rényi graph with random labels and uniform features.
pub fn random_graph(n: usize, p: f64, d: usize, rng: &mut ChaCha8Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let mut x = Matrix::zeros(n, d);
    for v in x.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    let labels = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    SparseGraph::new(n, &edges, x, labels).expect("valid random graph")
}

pub fn random_mask(num_edges: usize, rng: &mut ChaCha8Rng) -> EdgeMask {
    EdgeMask::from_raw(
        (0..num_edges)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect(),
    )
}

/// Bipartite P-N instance whose propagation operator is symmetric and
/// doubly stochastic: a convex combination of random perfect matchings
/// between two halves of `2 * half` nodes.
pub fn doubly_stochastic_instance(
    half: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> (SparseGraph, EdgeMask, Matrix) {
    let n = 2 * half;
    let mut b = Matrix::zeros(half, half);
    let parts = rng.random_range(1..=4);
    let mut lambdas: Vec<f64> = (0..parts).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = lambdas.iter().sum();
    lambdas.iter_mut().for_each(|l| *l /= total);
    for &l in &lambdas {
        let mut perm: Vec<usize> = (0..half).collect();
        for i in (1..half).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        for (i, &j) in perm.iter().enumerate() {
            b[(i, j)] += l;
        }
    }
    let mut edges = Vec::new();
    for i in 0..half {
        for j in 0..half {
            if b[(i, j)] > 0.0 {
                edges.push((i, half + j));
            }
        }
    }
    let labels = (0..n)
        .map(|i| {
            if i < half {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    let mut x = Matrix::zeros(n, d);
    for v in x.as_mut_slice() {
        *v = rng.random_range(-2.0..2.0);
    }
    let g = SparseGraph::new(n, &edges, x.clone(), labels).expect("valid bipartite graph");
    // edges come back sorted as (i, half + j), matching insertion order
    let raw = g
        .edges()
        .iter()
        .map(|&(i, j)| logit(0.9 * b[(i, j - half)]))
        .collect();
    (g, EdgeMask::from_raw(raw), x)
}

fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6)
}

/// Fault injected into the suite to confirm its checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Propagate with `M ⊙ A` instead of `D_M^{-1} (M ⊙ A)`.
    SkipRowNormalization,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteOptions {
    pub fault: Option<Fault>,
    /// Scales instance counts; 1.0 is the full suite.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub instances: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    /// Reported rows never fail the suite.
    pub asserted: bool,
    pub passed: bool,
}

impl CheckRow {
    fn new(check: &str, instances: usize, max_residual: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            instances,
            max_residual,
            tolerance,
            asserted: true,
            passed: max_residual <= tolerance,
        }
    }
}

fn propagation_op(g: &SparseGraph, mask: &EdgeMask, fault: Option<Fault>) -> PropagationOperator {
    match fault {
        Some(Fault::SkipRowNormalization) => {
            PropagationOperator::without_normalization(g, &mask.weights())
        }
        None => PropagationOperator::from_weights(g, &mask.weights()),
    }
}

fn random_cfg(rng: &mut ChaCha8Rng, max_k: usize) -> PropagationConfig {
    PropagationConfig::new(rng.random_range(0.1..0.9), rng.random_range(1..=max_k))
        .expect("alpha in range")
}

/// Random pure-row split: every node is an observed positive, an
/// identified positive, or an identified negative.
fn random_pure_beliefs(
    g: &SparseGraph,
    rng: &mut ChaCha8Rng,
) -> (PUSplit, IdentifiedNodes, BeliefMatrix) {
    let n = g.num_nodes();
    let mut observed = vec![0];
    let mut id = IdentifiedNodes::default();
    for i in 1..n {
        match rng.random_range(0..3) {
            0 => observed.push(i),
            1 => id.positives.push(i),
            _ => id.negatives.push(i),
        }
    }
    let split = PUSplit::from_sets(n, observed, 0.5, 0.0);
    let e0 = init_beliefs(&split, Some(&id)).expect("valid identified sets");
    (split, id, e0)
}

/// Max relative error between the mask gradient and central differences.
pub fn lpl_gradient_check(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let n = rng.random_range(4..=12);
        let g = random_graph(n, 0.4, 1, &mut rng);
        let mask = random_mask(g.num_edges(), &mut rng);
        let cfg = random_cfg(&mut rng, 4);
        let (split, id, e0) = random_pure_beliefs(&g, &mut rng);
        let positives: Vec<usize> = split
            .positives()
            .iter()
            .chain(&id.positives)
            .copied()
            .collect();
        let problem = LplProblem {
            graph: &g,
            e0: &e0,
            cfg,
            positives: &positives,
            negatives: &id.negatives,
        };
        let (_, grad) = problem.loss_and_gradient(&mask)?;
        for e in 0..mask.len() {
            let mut probe = mask.clone();
            probe.raw_mut()[e] += FD_STEP;
            let up = problem.loss(&probe)?;
            probe.raw_mut()[e] -= 2.0 * FD_STEP;
            let down = problem.loss(&probe)?;
            worst = worst.max(relative_error((up - down) / (2.0 * FD_STEP), grad.0[e]));
        }
    }
    Ok(worst)
}

/// Max relative error between classifier gradients and central differences.
pub fn classifier_gradient_check(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for t in 0..instances {
        let n = rng.random_range(4..=10);
        let d = rng.random_range(1..=4);
        let g = random_graph(n, 0.4, d, &mut rng);
        let mask = random_mask(g.num_edges(), &mut rng);
        let op = GcnOperator::new(&g, &mask)?;
        let k = rng.random_range(1..n);
        let split = PUSplit::from_sets(n, (0..k).collect(), 0.5, 0.0);
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let sel = gnn::select_top(&scores, split.unlabeled(), rng.random_range(0.0..1.0));
        let state = ClassifierState::new(d, 3, seed.wrapping_add(t as u64));
        let (_, grad) = gnn::loss_and_gradient(&state.params, &op, g.features(), &split, &sel)?;
        let flat = state.params.flatten();
        let analytic = grad.flatten();
        let mut probe = state.params.clone();
        let mut loss_at = |f: &[f64]| -> Result<f64> {
            probe.set_flat(f);
            gnn::pu_loss(&gnn::forward(&probe, &op, g.features()), &split, &sel)
        };
        for k in 0..flat.len() {
            let mut f = flat.clone();
            f[k] += FD_STEP;
            let up = loss_at(&f)?;
            f[k] -= 2.0 * FD_STEP;
            let down = loss_at(&f)?;
            worst = worst.max(relative_error((up - down) / (2.0 * FD_STEP), analytic[k]));
        }
    }
    Ok(worst)
}

fn conservation_check(instances: usize, seed: u64, fault: Option<Fault>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let n = rng.random_range(2..=30);
        let g = random_graph(n, rng.random_range(0.05..0.6), 1, &mut rng);
        let mask = random_mask(g.num_edges(), &mut rng);
        let cfg = random_cfg(&mut rng, 20);
        let mut e0 = BeliefMatrix::uniform(n);
        for i in 0..n {
            let p: f64 = rng.random();
            e0.set(i, p, 1.0 - p);
        }
        let out = propagate(&propagation_op(&g, &mask, fault), &e0, cfg);
        for i in 0..n {
            worst = worst.max((out.row_sum(i) - 1.0).abs());
        }
    }
    worst
}

/// Max row-sum deviation of propagated beliefs over random instances.
pub fn propagation_conservation_check(instances: usize, seed: u64) -> f64 {
    conservation_check(instances, seed, None)
}

fn influence_identity_check(instances: usize, seed: u64, fault: Option<Fault>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let n = rng.random_range(3..=20);
        let g = random_graph(n, rng.random_range(0.1..0.5), 1, &mut rng);
        let mask = random_mask(g.num_edges(), &mut rng);
        let cfg = random_cfg(&mut rng, 4);
        let (_, _, e0) = random_pure_beliefs(&g, &mut rng);
        let op = propagation_op(&g, &mask, fault);
        worst = worst.max(influence_identity_with(&op, &g, &e0, cfg, 0)?.residual);
    }
    Ok(worst)
}

/// Max identity residual over random graphs with `n <= 20`, `K <= 4`.
pub fn influence_identity_batch(instances: usize, seed: u64) -> Result<f64> {
    influence_identity_check(instances, seed, None)
}

/// Influence must vanish when no path of length `<= K` joins source and
/// target; returns the largest such influence.
pub fn path_support_check(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let n = rng.random_range(3..=15);
        let g = random_graph(n, 0.2, 1, &mut rng);
        let mask = random_mask(g.num_edges(), &mut rng);
        let cfg = random_cfg(&mut rng, 4);
        let (_, _, e0) = random_pure_beliefs(&g, &mut rng);
        // hop distances from node 0 by breadth-first search
        let mut dist = vec![usize::MAX; n];
        dist[0] = 0;
        let mut queue = std::collections::VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in g.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for b in 1..n {
            if dist[b] > cfg.k_prop() {
                worst = worst.max(heterophily_influence(&g, &mask, &e0, cfg, 0, b)?);
            }
        }
    }
    Ok(worst)
}

/// Largest `after - before` over doubly stochastic bipartite instances.
pub fn pn_contraction_batch(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let half = rng.random_range(1..=15);
        let d = rng.random_range(1..=5);
        let (g, mask, x) = doubly_stochastic_instance(half, d, &mut rng);
        let (before, after) = check_pn_contraction(&g, &mask, &x)?;
        worst = worst.max(after - before);
    }
    Ok(worst)
}

/// Number of unrestricted random instances (any graph, any mask) where
/// one aggregation step increases the P-N distance by more than `slack`.
pub fn pn_contraction_violations(instances: usize, seed: u64, slack: f64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0;
    for _ in 0..instances {
        let n = rng.random_range(2..=30);
        let d = rng.random_range(1..=5);
        let g = random_graph(n, rng.random_range(0.05..0.5), d, &mut rng);
        let mask = random_mask(g.num_edges(), &mut rng);
        let (before, after) = check_pn_contraction(&g, &mask, g.features())?;
        if after > before + slack {
            count += 1;
        }
    }
    Ok(count)
}

/// Run every oracle with fixed seeds.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<CheckRow>> {
    let scale = if opts.scale > 0.0 { opts.scale } else { 1.0 };
    let count = |base: usize| ((base as f64 * scale).ceil() as usize).max(1);
    let fault = opts.fault;
    let mut rows = Vec::new();

    let k = count(20);
    rows.push(CheckRow::new(
        "lpl_gradient",
        k,
        lpl_gradient_check(k, 11)?,
        1e-4,
    ));
    let k = count(20);
    rows.push(CheckRow::new(
        "classifier_gradient",
        k,
        classifier_gradient_check(k, 12)?,
        1e-4,
    ));
    let k = count(100);
    rows.push(CheckRow::new(
        "propagation_conservation",
        k,
        conservation_check(k, 13, fault),
        1e-10,
    ));
    let k = count(50);
    rows.push(CheckRow::new(
        "influence_identity",
        k,
        influence_identity_check(k, 14, fault)?,
        1e-6,
    ));
    let k = count(30);
    rows.push(CheckRow::new(
        "influence_path_support",
        k,
        path_support_check(k, 15)?,
        1e-9,
    ));
    let k = count(100);
    rows.push(CheckRow::new(
        "pn_contraction",
        k,
        pn_contraction_batch(k, 16)?.max(0.0),
        1e-9,
    ));
    let k = count(1000);
    let mut unrestricted = CheckRow::new(
        "pn_contraction_unrestricted",
        k,
        pn_contraction_violations(k, 17, 1e-9)? as f64,
        0.0,
    );
    unrestricted.asserted = false;
    rows.push(unrestricted);

    let planted = |h: f64| PlantedConfig {
        n: 1000,
        h,
        feature_separation: 8.0,
        seed: 18,
        ..Default::default()
    };
    let diag = |h: f64| -> Result<f64> {
        let cfg = planted(h);
        let g = crate::synth::generate_planted(&cfg)?;
        irreducibility_diagnostic(&oracle_posteriors(&g, &cfg, 0.5), DEFAULT_QUANTILE)
    };
    let homo = diag(0.0)?;
    let hetero = diag(0.9)?;
    rows.push(CheckRow::new(
        "irreducibility_homophilic",
        1,
        1.0 - homo,
        0.01,
    ));
    let mut gap = CheckRow::new("irreducibility_gap", 1, hetero - homo, -0.05);
    gap.passed = hetero <= homo - 0.05;
    rows.push(gap);
    Ok(rows)
}

pub fn suite_passed(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.passed || !r.asserted)
}
