//! K-step label propagation over a masked graph, the label propagation loss,
//! and its exact gradient with respect to the raw edge-mask parameters.
//!
//! The update is `E(k) = alpha * E(k-1) + (1 - alpha) * P * E(k-1)` with
//! `P = D_M^{-1} (M ⊙ A)`. Column 0 of a belief matrix holds the positive
//! class posterior, column 1 the negative one.

use std::collections::BTreeSet;

use crate::error::{GplError, Result};
use crate::graph::{EdgeMask, PropagationOperator, SparseGraph};
use crate::linalg::Matrix;
use crate::synth::PUSplit;

/// Log clamp used by the propagation loss.
pub const LOG_EPS: f64 = 1e-12;

pub const POS: usize = 0;
pub const NEG: usize = 1;

/// `n x 2` row-stochastic class-posterior beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMatrix(Matrix);

impl BeliefMatrix {
    pub fn uniform(n: usize) -> Self {
        Self(Matrix::filled(n, 2, 0.5))
    }

    /// Panics unless `m` has two columns.
    pub fn from_matrix(m: Matrix) -> Self {
        assert_eq!(m.cols(), 2, "beliefs have two columns");
        Self(m)
    }

    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn positive(&self, i: usize) -> f64 {
        self.0[(i, POS)]
    }

    pub fn negative(&self, i: usize) -> f64 {
        self.0[(i, NEG)]
    }

    pub fn set(&mut self, i: usize, positive: f64, negative: f64) {
        self.0[(i, POS)] = positive;
        self.0[(i, NEG)] = negative;
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.positive(i) + self.negative(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    alpha: f64,
    k_prop: usize,
}

impl PropagationConfig {
    pub fn new(alpha: f64, k_prop: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GplError::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self { alpha, k_prop })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k_prop(&self) -> usize {
        self.k_prop
    }
}

/// Unlabeled nodes already assigned a provisional class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentifiedNodes {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Observed and identified positives start at `[1, 0]`, identified
/// negatives at `[0, 1]`, everything else at `[0.5, 0.5]`.
pub fn init_beliefs(split: &PUSplit, identified: Option<&IdentifiedNodes>) -> Result<BeliefMatrix> {
    let n = split.num_nodes();
    let mut e0 = BeliefMatrix::uniform(n);
    let check = |i: usize| {
        if i < n {
            Ok(i)
        } else {
            Err(GplError::NodeOutOfRange { node: i, n })
        }
    };
    for &i in split.positives() {
        e0.set(check(i)?, 1.0, 0.0);
    }
    if let Some(id) = identified {
        let pos: BTreeSet<usize> = id.positives.iter().copied().collect();
        for &i in &id.negatives {
            if pos.contains(&i) {
                return Err(GplError::ConflictingIdentified(i));
            }
            e0.set(check(i)?, 0.0, 1.0);
        }
        for &i in &pos {
            e0.set(check(i)?, 1.0, 0.0);
        }
    }
    Ok(e0)
}

/// Apply the propagation update exactly `k_prop` times.
pub fn propagate(
    op: &PropagationOperator,
    e0: &BeliefMatrix,
    cfg: PropagationConfig,
) -> BeliefMatrix {
    propagate_trace(op, e0, cfg)
        .pop()
        .expect("trace holds at least E(0)")
}

/// All iterates `E(0) ..= E(K)`.
fn propagate_trace(
    op: &PropagationOperator,
    e0: &BeliefMatrix,
    cfg: PropagationConfig,
) -> Vec<BeliefMatrix> {
    let a = cfg.alpha;
    let mut trace = Vec::with_capacity(cfg.k_prop + 1);
    trace.push(e0.clone());
    for _ in 0..cfg.k_prop {
        let prev = trace.last().expect("non-empty").matrix();
        let mixed = op.apply(prev);
        let next: Vec<f64> = prev
            .as_slice()
            .iter()
            .zip(mixed.as_slice())
            .map(|(&p, &m)| a * p + (1.0 - a) * m)
            .collect();
        trace.push(BeliefMatrix(Matrix::from_vec(prev.rows(), 2, next)));
    }
    trace
}

fn clamped_log(x: f64) -> f64 {
    (x + LOG_EPS).ln()
}

// zero slope once the clamp dominates
fn clamped_log_slope(x: f64) -> f64 {
    if x <= LOG_EPS {
        0.0
    } else {
        1.0 / (x + LOG_EPS)
    }
}

/// Label propagation loss: mean log-probability that positives are called
/// negative, plus (when `negatives` is non-empty) the mean log-probability
/// that negatives are called positive.
pub fn lpl_loss(beliefs: &BeliefMatrix, positives: &[usize], negatives: &[usize]) -> Result<f64> {
    if positives.is_empty() {
        return Err(GplError::EmptyPositives);
    }
    let pos: f64 = positives
        .iter()
        .map(|&i| clamped_log(beliefs.negative(i)))
        .sum::<f64>()
        / positives.len() as f64;
    let neg = if negatives.is_empty() {
        0.0
    } else {
        negatives
            .iter()
            .map(|&i| clamped_log(beliefs.positive(i)))
            .sum::<f64>()
            / negatives.len() as f64
    };
    Ok(pos + neg)
}

/// d(loss)/d(theta_e), one entry per undirected edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LplGradient(pub Vec<f64>);

impl LplGradient {
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

/// The inputs of one label-propagation-loss evaluation, minus the mask.
#[derive(Debug, Clone, Copy)]
pub struct LplProblem<'a> {
    pub graph: &'a SparseGraph,
    pub e0: &'a BeliefMatrix,
    pub cfg: PropagationConfig,
    pub positives: &'a [usize],
    pub negatives: &'a [usize],
}

impl LplProblem<'_> {
    pub fn loss(&self, mask: &EdgeMask) -> Result<f64> {
        let op = PropagationOperator::new(self.graph, mask)?;
        lpl_loss(
            &propagate(&op, self.e0, self.cfg),
            self.positives,
            self.negatives,
        )
    }

    /// Loss and exact reverse-mode gradient through the unrolled iteration,
    /// including the mask-dependent row normalization.
    pub fn loss_and_gradient(&self, mask: &EdgeMask) -> Result<(f64, LplGradient)> {
        let g = self.graph;
        let n = g.num_nodes();
        let weights = mask.weights();
        mask.check(g)?;
        let op = PropagationOperator::from_weights(g, &weights);
        let trace = propagate_trace(&op, self.e0, self.cfg);
        let last = trace.last().expect("non-empty");
        let loss = lpl_loss(last, self.positives, self.negatives)?;

        // dL/dE(K)
        let mut grad_e = Matrix::zeros(n, 2);
        let np = self.positives.len() as f64;
        for &i in self.positives {
            grad_e[(i, NEG)] += clamped_log_slope(last.negative(i)) / np;
        }
        if !self.negatives.is_empty() {
            let nn = self.negatives.len() as f64;
            for &i in self.negatives {
                grad_e[(i, POS)] += clamped_log_slope(last.positive(i)) / nn;
            }
        }

        // dL/dP for every stored operator entry, in CSR order
        let a = self.cfg.alpha;
        let entries: Vec<(usize, usize, Option<usize>, f64)> = (0..n)
            .flat_map(|i| op.row(i).map(move |(j, v, e)| (i, j, e, v)))
            .collect();
        let mut grad_p = vec![0.0; entries.len()];
        for k in (1..trace.len()).rev() {
            let prev = trace[k - 1].matrix();
            for (slot, &(i, j, e, _)) in grad_p.iter_mut().zip(&entries) {
                if e.is_some() {
                    *slot += (1.0 - a)
                        * (grad_e[(i, POS)] * prev[(j, POS)] + grad_e[(i, NEG)] * prev[(j, NEG)]);
                }
            }
            let back = op.apply_transpose(&grad_e);
            let next: Vec<f64> = grad_e
                .as_slice()
                .iter()
                .zip(back.as_slice())
                .map(|(&ge, &b)| a * ge + (1.0 - a) * b)
                .collect();
            grad_e = Matrix::from_vec(n, 2, next);
        }

        // through P_ij = w_ij / s_i, then w = sigmoid(theta)
        let mut grad_w = vec![0.0; g.num_edges()];
        let mut start = 0;
        for i in 0..n {
            let len = op.row(i).count();
            let row = &entries[start..start + len];
            let gp = &grad_p[start..start + len];
            start += len;
            if row.iter().all(|r| r.2.is_none()) {
                continue;
            }
            let s: f64 = g.neighbors(i).iter().map(|&(_, e)| weights[e]).sum();
            let centered: f64 = row.iter().zip(gp).map(|(r, &d)| d * r.3).sum();
            for (r, &d) in row.iter().zip(gp) {
                if let Some(e) = r.2 {
                    grad_w[e] += (d - centered) / s;
                }
            }
        }
        let grad = grad_w
            .iter()
            .zip(&weights)
            .map(|(&gw, &w)| gw * w * (1.0 - w))
            .collect();
        Ok((loss, LplGradient(grad)))
    }
}

/// d(loss)/d(theta) for every raw mask parameter.
pub fn lpl_gradient(
    g: &SparseGraph,
    mask: &EdgeMask,
    e0: &BeliefMatrix,
    cfg: PropagationConfig,
    positives: &[usize],
    negatives: &[usize],
) -> Result<LplGradient> {
    let problem = LplProblem {
        graph: g,
        e0,
        cfg,
        positives,
        negatives,
    };
    problem.loss_and_gradient(mask).map(|(_, grad)| grad)
}

/// Gradient-descent settings for the inner (mask) problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSchedule {
    pub steps: usize,
    pub lr: f64,
}

/// Relative loss change below which mask optimization stops early.
pub const MASK_REL_TOL: f64 = 1e-5;
const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps_taken: usize,
}

/// Descent on the raw mask parameters along the gradient scaled to unit
/// max-norm, so `lr` is the largest change of any parameter in one step.
/// A halving backtracking line search keeps every accepted step from
/// increasing the loss.
pub fn optimize_mask(
    problem: &LplProblem<'_>,
    mask: &EdgeMask,
    schedule: MaskSchedule,
) -> Result<(EdgeMask, MaskReport)> {
    if !(schedule.lr >= 0.0 && schedule.lr.is_finite()) {
        return Err(GplError::InvalidArgument(format!(
            "mask learning rate must be finite and non-negative, got {}",
            schedule.lr
        )));
    }
    let (mut loss, mut grad) = problem.loss_and_gradient(mask)?;
    if !loss.is_finite() {
        return Err(GplError::NonFiniteLoss(format!(
            "initial label propagation loss is {loss}"
        )));
    }
    let initial_loss = loss;
    let mut current = mask.clone();
    let mut steps_taken = 0;
    if schedule.lr == 0.0 {
        return Ok((
            current,
            MaskReport {
                initial_loss,
                final_loss: loss,
                steps_taken,
            },
        ));
    }

    for _ in 0..schedule.steps {
        let scale = grad.max_abs();
        if scale == 0.0 {
            break;
        }
        let mut lr = schedule.lr / scale;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let raw = current
                .raw()
                .iter()
                .zip(&grad.0)
                .map(|(&t, &d)| t - lr * d)
                .collect();
            let candidate = EdgeMask::from_raw(raw);
            let cand_loss = problem.loss(&candidate)?;
            if cand_loss.is_finite() && cand_loss <= loss {
                accepted = Some((candidate, cand_loss));
                break;
            }
            lr *= 0.5;
        }
        let Some((next, next_loss)) = accepted else {
            break;
        };
        let rel = (loss - next_loss).abs() / loss.abs().max(f64::MIN_POSITIVE);
        current = next;
        loss = next_loss;
        steps_taken += 1;
        if rel < MASK_REL_TOL {
            break;
        }
        grad = problem.loss_and_gradient(&current)?.1;
    }
    Ok((
        current,
        MaskReport {
            initial_loss,
            final_loss: loss,
            steps_taken,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize) -> SparseGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        SparseGraph::new(n, &edges, Matrix::zeros(n, 1), vec![Label::Positive; n]).unwrap()
    }

    fn split(n: usize, positives: &[usize]) -> PUSplit {
        PUSplit::from_sets(n, positives.to_vec(), 0.5, 0.0)
    }

    #[test]
    fn init_beliefs_examples() {
        let e = init_beliefs(&split(3, &[0]), None).unwrap();
        assert_eq!(e.matrix().as_slice(), &[1.0, 0.0, 0.5, 0.5, 0.5, 0.5]);

        let id = IdentifiedNodes {
            positives: vec![],
            negatives: vec![2],
        };
        let e = init_beliefs(&split(3, &[0]), Some(&id)).unwrap();
        assert_eq!(e.matrix().as_slice(), &[1.0, 0.0, 0.5, 0.5, 0.0, 1.0]);

        let e = init_beliefs(&split(3, &[]), None).unwrap();
        assert!(e.matrix().as_slice().iter().all(|&v| v == 0.5));

        let id = IdentifiedNodes {
            positives: vec![1],
            negatives: vec![1],
        };
        assert!(matches!(
            init_beliefs(&split(3, &[0]), Some(&id)),
            Err(GplError::ConflictingIdentified(1))
        ));
    }

    #[test]
    fn propagate_examples() {
        let g = path(2);
        let op = PropagationOperator::new(&g, &EdgeMask::new(1)).unwrap();
        let e0 = BeliefMatrix::from_matrix(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));

        let cfg0 = PropagationConfig::new(0.5, 0).unwrap();
        assert_eq!(propagate(&op, &e0, cfg0), e0);

        let cfg1 = PropagationConfig::new(0.5, 1).unwrap();
        let e1 = propagate(&op, &e0, cfg1);
        assert!(e1
            .matrix()
            .as_slice()
            .iter()
            .all(|&v| (v - 0.5).abs() < 1e-15));

        let cfg = PropagationConfig::new(0.999, 5).unwrap();
        let e5 = propagate(&op, &e0, cfg);
        assert!(e5.matrix().max_abs_diff(e0.matrix()) <= 0.01);
    }

    #[test]
    fn alpha_must_be_open_interval() {
        assert!(PropagationConfig::new(0.0, 1).is_err());
        assert!(PropagationConfig::new(1.0, 1).is_err());
    }

    #[test]
    fn lpl_loss_examples() {
        let b = BeliefMatrix::from_matrix(Matrix::from_rows(&[vec![0.5, 0.5]]));
        assert!((lpl_loss(&b, &[0], &[]).unwrap() - 0.5f64.ln()).abs() < 1e-11);

        let b = BeliefMatrix::from_matrix(Matrix::from_rows(&[vec![1.0, 0.0]]));
        assert!((lpl_loss(&b, &[0], &[]).unwrap() - (-27.631_021_115_928_547)).abs() < 1e-9);

        let b = BeliefMatrix::from_matrix(Matrix::from_rows(&[
            vec![0.8, 0.2],
            vec![0.6, 0.4],
            vec![0.3, 0.7],
        ]));
        let expected = 0.5 * (0.2f64.ln() + 0.4f64.ln()) + 0.3f64.ln();
        let got = lpl_loss(&b, &[0, 1], &[2]).unwrap();
        assert!((got - expected).abs() < 1e-10);
        assert!((got - (-2.467)).abs() < 1e-3);

        assert!(matches!(
            lpl_loss(&b, &[], &[2]),
            Err(GplError::EmptyPositives)
        ));
    }

    #[test]
    fn gradient_is_zero_at_floor() {
        let g = path(4);
        let s = split(4, &[0, 1, 2, 3]);
        let e0 = init_beliefs(&s, None).unwrap();
        let cfg = PropagationConfig::new(0.5, 3).unwrap();
        let grad = lpl_gradient(&g, &EdgeMask::new(3), &e0, cfg, &[0, 1, 2, 3], &[]).unwrap();
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn null_update_leaves_mask() {
        let g = path(3);
        let s = split(3, &[0]);
        let e0 = init_beliefs(&s, None).unwrap();
        let problem = LplProblem {
            graph: &g,
            e0: &e0,
            cfg: PropagationConfig::new(0.5, 2).unwrap(),
            positives: &[0],
            negatives: &[],
        };
        let mask = EdgeMask::new(2);
        let (out, _) = optimize_mask(&problem, &mask, MaskSchedule { steps: 1, lr: 0.0 }).unwrap();
        assert_eq!(out, mask);
    }

    #[test]
    fn optimization_never_increases_loss() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 10;
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < 0.3 {
                        edges.push((i, j));
                    }
                }
            }
            let g =
                SparseGraph::new(n, &edges, Matrix::zeros(n, 1), vec![Label::Positive; n]).unwrap();
            let s = split(n, &[0, 1, 2]);
            let id = IdentifiedNodes {
                positives: vec![3],
                negatives: vec![7, 8, 9],
            };
            let e0 = init_beliefs(&s, Some(&id)).unwrap();
            let problem = LplProblem {
                graph: &g,
                e0: &e0,
                cfg: PropagationConfig::new(0.5, 3).unwrap(),
                positives: &[0, 1, 2, 3],
                negatives: &[7, 8, 9],
            };
            let mask = EdgeMask::for_graph(&g);
            let before = problem.loss(&mask).unwrap();
            let (out, report) =
                optimize_mask(&problem, &mask, MaskSchedule { steps: 30, lr: 5.0 }).unwrap();
            let after = problem.loss(&out).unwrap();
            assert_eq!(report.initial_loss, before);
            assert!(after <= before, "seed {seed}: {after} > {before}");
        }
    }

    #[test]
    fn planted_mask_downweights_heterophilic_edges() {
        use crate::synth::{generate_planted, make_pu_split, PlantedConfig};
        let g = generate_planted(&PlantedConfig {
            n: 300,
            h: 0.7,
            ..Default::default()
        })
        .unwrap();
        let s = make_pu_split(&g, 0.5, 0).unwrap();
        let (hidden, negatives): (Vec<usize>, Vec<usize>) = s
            .unlabeled()
            .iter()
            .partition(|&&i| g.labels()[i].is_positive());
        let id = IdentifiedNodes {
            positives: hidden.clone(),
            negatives: negatives.clone(),
        };
        let e0 = init_beliefs(&s, Some(&id)).unwrap();
        let positives: Vec<usize> = s.positives().iter().chain(&hidden).copied().collect();
        let problem = LplProblem {
            graph: &g,
            e0: &e0,
            cfg: PropagationConfig::new(0.5, 10).unwrap(),
            positives: &positives,
            negatives: &negatives,
        };
        let (mask, _) = optimize_mask(
            &problem,
            &EdgeMask::for_graph(&g),
            MaskSchedule {
                steps: 200,
                lr: 0.1,
            },
        )
        .unwrap();
        let (homo, hetero) = g.mean_weight_by_type(&mask.weights());
        assert!(hetero < homo, "hetero {hetero} homo {homo}");
    }
}
