//! Two-layer graph convolution classifier with hand-written backward pass,
//! the group-averaged PU loss, top-fraction selection and Adam.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GplError, Result};
use crate::graph::{sigmoid, GcnOperator, Label};
use crate::linalg::Matrix;
use crate::propagation::LOG_EPS;
use crate::synth::PUSplit;

pub const DEFAULT_HIDDEN: usize = 16;
pub const DEFAULT_LR: f64 = 0.01;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Classifier parameters. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `D x H`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `H x 1`, stored flat.
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Params {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w1: Matrix::zeros(input_dim, hidden),
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn num_params(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice(),
            &self.b1,
            &self.w2,
            std::slice::from_ref(&self.b2),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }

    /// All parameters in a fixed order (`w1` row-major, `b1`, `w2`, `b2`).
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut rest = flat;
        for dst in self.slices_mut() {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState {
    pub params: Params,
    m: Params,
    v: Params,
    t: u64,
}

impl ClassifierState {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(input_dim, hidden);
        let b = 1.0 / (input_dim as f64).sqrt();
        for w in params.w1.as_mut_slice() {
            *w = rng.random_range(-b..=b);
        }
        let b = 1.0 / (hidden as f64).sqrt();
        for w in &mut params.w2 {
            *w = rng.random_range(-b..=b);
        }
        Self::from_params(params)
    }

    /// Fresh optimizer state around given parameters.
    pub fn from_params(params: Params) -> Self {
        let (d, h) = (params.input_dim(), params.hidden());
        Self {
            params,
            m: Params::zeros(d, h),
            v: Params::zeros(d, h),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    fn adam_step(&mut self, grad: &Params, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powf(self.t as f64);
        let bc2 = 1.0 - BETA2.powf(self.t as f64);
        let groups = self
            .params
            .slices_mut()
            .into_iter()
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
            .zip(grad.slices());
        for (((p, m), v), g) in groups {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

struct Activations {
    sx: Matrix,
    pre1: Matrix,
    h1: Matrix,
    z: Vec<f64>,
}

fn forward_full(params: &Params, op: &GcnOperator, x: &Matrix) -> Activations {
    assert_eq!(x.cols(), params.input_dim(), "feature dimension");
    assert_eq!(x.rows(), op.num_nodes(), "feature rows");
    // S X W1 computed as (S X) W1
    let sx = op.apply(x);
    let mut pre1 = sx.matmul(&params.w1);
    for i in 0..pre1.rows() {
        for (v, b) in pre1.row_mut(i).iter_mut().zip(&params.b1) {
            *v += b;
        }
    }
    let mut h1 = pre1.clone();
    for v in h1.as_mut_slice() {
        *v = v.max(0.0);
    }
    let hw: Vec<f64> = (0..h1.rows())
        .map(|i| h1.row(i).iter().zip(&params.w2).map(|(a, b)| a * b).sum())
        .collect();
    let z = op
        .apply_vec(&hw)
        .into_iter()
        .map(|a| sigmoid(a + params.b2))
        .collect();
    Activations { sx, pre1, h1, z }
}

/// Positive posterior `z` for every node.
pub fn forward(params: &Params, op: &GcnOperator, x: &Matrix) -> Vec<f64> {
    forward_full(params, op, x).z
}

/// Provisional positives `S` (top-scored unlabeled nodes) and the remaining
/// unlabeled nodes, both ascending by node id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub rest: Vec<usize>,
}

/// Take the `floor(pi_hat * |U| + 0.5)` highest scores in `unlabeled`;
/// equal scores prefer the lower node id.
pub fn select_top(scores: &[f64], unlabeled: &[usize], pi_hat: f64) -> SelectionResult {
    let k = ((pi_hat.clamp(0.0, 1.0) * unlabeled.len() as f64 + 0.5).floor() as usize)
        .min(unlabeled.len());
    let mut order = unlabeled.to_vec();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut selected = order[..k].to_vec();
    let mut rest = order[k..].to_vec();
    selected.sort_unstable();
    rest.sort_unstable();
    SelectionResult { selected, rest }
}

/// Selection treating every unlabeled node as negative.
pub fn all_negative(split: &PUSplit) -> SelectionResult {
    SelectionResult {
        selected: Vec::new(),
        rest: split.unlabeled().to_vec(),
    }
}

fn groups<'a>(split: &'a PUSplit, sel: &'a SelectionResult) -> (Vec<usize>, &'a [usize]) {
    let pos = split
        .positives()
        .iter()
        .chain(&sel.selected)
        .copied()
        .collect();
    (pos, &sel.rest)
}

/// Mean positive cross-entropy over `P + S` plus mean negative
/// cross-entropy over `U \ S`. Empty groups contribute nothing.
pub fn pu_loss(z: &[f64], split: &PUSplit, sel: &SelectionResult) -> Result<f64> {
    let (pos, neg) = groups(split, sel);
    group_loss(z, &pos, neg)
}

fn group_loss(z: &[f64], pos: &[usize], neg: &[usize]) -> Result<f64> {
    if pos.is_empty() && neg.is_empty() {
        return Err(GplError::EmptyGroups);
    }
    let mean = |nodes: &[usize], f: &dyn Fn(f64) -> f64| {
        if nodes.is_empty() {
            0.0
        } else {
            nodes.iter().map(|&i| f(z[i])).sum::<f64>() / nodes.len() as f64
        }
    };
    Ok(mean(pos, &|p| -(p + LOG_EPS).ln()) + mean(neg, &|p| -(1.0 - p + LOG_EPS).ln()))
}

/// Loss and exact gradient with respect to every parameter.
pub fn loss_and_gradient(
    params: &Params,
    op: &GcnOperator,
    x: &Matrix,
    split: &PUSplit,
    sel: &SelectionResult,
) -> Result<(f64, Params)> {
    let act = forward_full(params, op, x);
    let (pos, neg) = groups(split, sel);
    let loss = group_loss(&act.z, &pos, neg)?;
    let n = act.z.len();

    // dL/d(pre-sigmoid)
    let mut g2 = vec![0.0; n];
    for &i in &pos {
        let z = act.z[i];
        g2[i] += -z * (1.0 - z) / (z + LOG_EPS) / pos.len() as f64;
    }
    for &i in neg {
        let z = act.z[i];
        g2[i] += z * (1.0 - z) / (1.0 - z + LOG_EPS) / neg.len() as f64;
    }

    let hidden = params.hidden();
    let mut grad = Params::zeros(params.input_dim(), hidden);
    grad.b2 = g2.iter().sum();
    let d_hw = Matrix::from_vec(n, 1, g2);
    let d_hw = op.apply_transpose(&d_hw);
    let mut d_pre1 = Matrix::zeros(n, hidden);
    for i in 0..n {
        let up = d_hw[(i, 0)];
        for k in 0..hidden {
            grad.w2[k] += act.h1[(i, k)] * up;
            if act.pre1[(i, k)] > 0.0 {
                d_pre1[(i, k)] = up * params.w2[k];
            }
        }
    }
    for i in 0..n {
        for (b, d) in grad.b1.iter_mut().zip(d_pre1.row(i)) {
            *b += d;
        }
    }
    grad.w1 = act.sx.t_matmul(&d_pre1);
    Ok((loss, grad))
}

/// One Adam update on the PU loss; returns the loss before the update.
/// `lr = 0` leaves parameters and optimizer state untouched.
pub fn backward_and_step(
    state: &mut ClassifierState,
    op: &GcnOperator,
    x: &Matrix,
    split: &PUSplit,
    sel: &SelectionResult,
    lr: f64,
) -> Result<f64> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(GplError::InvalidArgument(format!(
            "classifier learning rate must be finite and non-negative, got {lr}"
        )));
    }
    let (loss, grad) = loss_and_gradient(&state.params, op, x, split, sel)?;
    if !loss.is_finite() {
        return Err(GplError::NonFiniteLoss(format!(
            "classifier loss is {loss}"
        )));
    }
    if lr > 0.0 {
        state.adam_step(&grad, lr);
    }
    Ok(loss)
}

/// `+1` where `z >= threshold`.
pub fn predict_labels(z: &[f64], threshold: f64) -> Result<Vec<Label>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GplError::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(z.iter()
        .map(|&p| {
            if p >= threshold {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect())
}

const CHECKPOINT_MAGIC: &str = "gpl-checkpoint v1";

/// Plain-text checkpoint:
///
/// ```text
/// gpl-checkpoint v1
/// w1 <D> <H>
/// <D lines of H values>
/// b1 <H>
/// <H values>
/// w2 <H> 1
/// <H values>
/// b2 1
/// <value>
/// ```
///
/// Values use the shortest representation that parses back to the same
/// `f64`. Optimizer moments are not stored.
pub fn checkpoint_to_string(params: &Params) -> String {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let (d, h) = (params.input_dim(), params.hidden());
    let mut out = format!("{CHECKPOINT_MAGIC}\nw1 {d} {h}\n");
    for i in 0..d {
        let _ = writeln!(out, "{}", join(params.w1.row(i)));
    }
    let _ = writeln!(out, "b1 {h}\n{}", join(&params.b1));
    let _ = writeln!(out, "w2 {h} 1\n{}", join(&params.w2));
    let _ = writeln!(out, "b2 1\n{}", params.b2);
    out
}

pub fn checkpoint_from_str(text: &str, file: &str) -> Result<Params> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| {
            GplError::parse(file, 0, format!("unexpected end of file, expected {what}"))
        })
    };
    let (ln, magic) = next("header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(GplError::parse(
            file,
            ln,
            format!("expected '{CHECKPOINT_MAGIC}'"),
        ));
    }
    let floats = |ln: usize, line: &str, want: usize| -> Result<Vec<f64>> {
        let v = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| GplError::parse(file, ln, e.to_string()))?;
        if v.len() != want {
            return Err(GplError::parse(
                file,
                ln,
                format!("expected {want} values, found {}", v.len()),
            ));
        }
        Ok(v)
    };
    let header = |ln: usize, line: &str, name: &str, dims: usize| -> Result<Vec<usize>> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(GplError::parse(
                file,
                ln,
                format!("expected '{name}' header"),
            ));
        }
        let v = parts
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| GplError::parse(file, ln, e.to_string()))?;
        if v.len() != dims {
            return Err(GplError::parse(
                file,
                ln,
                format!("'{name}' needs {dims} dimensions"),
            ));
        }
        Ok(v)
    };

    let (ln, l) = next("w1 header")?;
    let dh = header(ln, l, "w1", 2)?;
    let (d, h) = (dh[0], dh[1]);
    let mut params = Params::zeros(d, h);
    for i in 0..d {
        let (ln, l) = next("w1 row")?;
        params.w1.row_mut(i).copy_from_slice(&floats(ln, l, h)?);
    }
    let (ln, l) = next("b1 header")?;
    if header(ln, l, "b1", 1)? != [h] {
        return Err(GplError::parse(file, ln, "b1 size disagrees with w1"));
    }
    let (ln, l) = next("b1 values")?;
    params.b1 = floats(ln, l, h)?;
    let (ln, l) = next("w2 header")?;
    if header(ln, l, "w2", 2)? != [h, 1] {
        return Err(GplError::parse(file, ln, "w2 shape disagrees with w1"));
    }
    let (ln, l) = next("w2 values")?;
    params.w2 = floats(ln, l, h)?;
    let (ln, l) = next("b2 header")?;
    if header(ln, l, "b2", 1)? != [1] {
        return Err(GplError::parse(file, ln, "b2 must be a scalar"));
    }
    let (ln, l) = next("b2 value")?;
    params.b2 = floats(ln, l, 1)?[0];
    Ok(params)
}

pub fn save_checkpoint(params: &Params, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params)).map_err(|e| GplError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Params> {
    let text = std::fs::read_to_string(path).map_err(|e| GplError::io(path, e))?;
    checkpoint_from_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeMask, SparseGraph};

    fn split(n: usize, positives: &[usize]) -> PUSplit {
        PUSplit::from_sets(n, positives.to_vec(), 0.5, 0.0)
    }

    fn small_graph(seed: u64) -> SparseGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    edges.push((i, j));
                }
            }
        }
        let mut x = Matrix::zeros(n, 3);
        for v in x.as_mut_slice() {
            *v = rng.random_range(-1.0..1.0);
        }
        SparseGraph::new(n, &edges, x, vec![Label::Negative; n]).unwrap()
    }

    #[test]
    fn zero_parameters_give_half() {
        let g = small_graph(0);
        let z = forward(&Params::zeros(3, 4), &GcnOperator::unit(&g), g.features());
        assert!(z.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn isolated_node_scalar_chain() {
        let g = SparseGraph::new(
            1,
            &[],
            Matrix::from_vec(1, 1, vec![1.0]),
            vec![Label::Positive],
        )
        .unwrap();
        let mut p = Params::zeros(1, 1);
        p.w1[(0, 0)] = 1.0;
        p.w2[0] = 1.0;
        let z = forward(&p, &GcnOperator::unit(&g), g.features());
        assert!((z[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn random_outputs_in_open_interval() {
        for seed in 0..10 {
            let g = small_graph(seed);
            let state = ClassifierState::new(3, 5, seed);
            let z = forward(&state.params, &GcnOperator::unit(&g), g.features());
            assert!(z.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn init_bounds_and_determinism() {
        let s = ClassifierState::new(4, 16, 3);
        assert!(s.params.w1.as_slice().iter().all(|w| w.abs() <= 0.5));
        assert!(s.params.w2.iter().all(|w| w.abs() <= 0.25));
        assert!(s.params.b1.iter().all(|&b| b == 0.0) && s.params.b2 == 0.0);
        assert_eq!(s, ClassifierState::new(4, 16, 3));
        assert_ne!(s, ClassifierState::new(4, 16, 4));
    }

    #[test]
    fn selection_examples() {
        let u: Vec<usize> = (0..8).collect();
        let scores = [0.1, 0.9, 0.3, 0.8, 0.2, 0.4, 0.5, 0.6];
        assert!(select_top(&scores, &u, 0.0).selected.is_empty());
        assert_eq!(select_top(&scores, &u, 0.25).selected, vec![1, 3]);
        assert_eq!(select_top(&scores, &u, 1.0).selected, u);
        let tied = [0.5; 8];
        assert_eq!(select_top(&tied, &u, 0.25).selected, vec![0, 1]);
        // 0.125 * 4 + 0.5 rounds up
        assert_eq!(select_top(&scores, &[0, 2, 4, 6], 0.125).selected, vec![6]);
    }

    #[test]
    fn selection_is_idempotent_and_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let u: Vec<usize> = (0..50).step_by(2).collect();
        let a = select_top(&scores, &u, 0.3);
        assert_eq!(a, select_top(&scores, &u, 0.3));
        let b = select_top(&scores, &u, 0.3 + 0.5 / u.len() as f64);
        assert!(b.selected.len().abs_diff(a.selected.len()) <= 1);
        assert!(a.selected.iter().all(|i| b.selected.contains(i)));
    }

    #[test]
    fn loss_examples() {
        let s = split(2, &[0]);
        let sel = SelectionResult {
            selected: vec![],
            rest: vec![1],
        };
        let l = pu_loss(&[0.5, 0.5], &s, &sel).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-9);

        let l = pu_loss(&[1.0, 0.0], &s, &sel).unwrap();
        assert!(l < 1e-10);

        let s = split(3, &[0]);
        let sel = SelectionResult {
            selected: vec![],
            rest: vec![1, 2],
        };
        let l = pu_loss(&[0.8, 0.4, 0.2], &s, &sel).unwrap();
        let want = -(0.8f64).ln() + 0.5 * (-(0.6f64).ln() - (0.8f64).ln());
        assert!((l - want).abs() < 1e-9);
        assert!((l - 0.590).abs() < 5e-4);

        let empty = split(0, &[]);
        assert!(matches!(
            pu_loss(&[], &empty, &SelectionResult::default()),
            Err(GplError::EmptyGroups)
        ));
    }

    #[test]
    fn loss_ignores_order_within_groups() {
        let s = split(4, &[0, 1]);
        let sel = SelectionResult {
            selected: vec![],
            rest: vec![2, 3],
        };
        let a = pu_loss(&[0.7, 0.6, 0.3, 0.1], &s, &sel).unwrap();
        let b = pu_loss(&[0.6, 0.7, 0.1, 0.3], &s, &sel).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..10 {
            let g = small_graph(seed);
            let weights: Vec<f64> = (0..g.num_edges())
                .map(|e| 0.2 + 0.1 * (e % 7) as f64)
                .collect();
            let op = GcnOperator::from_weights(&g, &weights);
            let s = split(6, &[0, 1]);
            let sel = select_top(&[0.0, 0.0, 0.9, 0.1, 0.2, 0.3], s.unlabeled(), 0.25);
            let state = ClassifierState::new(3, 3, seed);
            let (_, grad) = loss_and_gradient(&state.params, &op, g.features(), &s, &sel).unwrap();
            let flat = state.params.flatten();
            let analytic = grad.flatten();
            let mut probe = state.params.clone();
            for k in 0..flat.len() {
                let h = 1e-5;
                let mut f = flat.clone();
                f[k] += h;
                probe.set_flat(&f);
                let up = pu_loss(&forward(&probe, &op, g.features()), &s, &sel).unwrap();
                f[k] -= 2.0 * h;
                probe.set_flat(&f);
                let down = pu_loss(&forward(&probe, &op, g.features()), &s, &sel).unwrap();
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-6);
                assert!(
                    rel <= 1e-4,
                    "seed {seed} param {k}: fd {fd} analytic {}",
                    analytic[k]
                );
            }
        }
    }

    #[test]
    fn null_step_keeps_parameters() {
        let g = small_graph(2);
        let op = GcnOperator::unit(&g);
        let s = split(6, &[0]);
        let mut state = ClassifierState::new(3, 4, 0);
        let before = state.clone();
        let loss =
            backward_and_step(&mut state, &op, g.features(), &s, &all_negative(&s), 0.0).unwrap();
        assert!(loss.is_finite());
        assert_eq!(state, before);
        assert!(
            backward_and_step(&mut state, &op, g.features(), &s, &all_negative(&s), -1.0).is_err()
        );
    }

    #[test]
    fn training_fits_separable_graph() {
        use crate::synth::{generate_planted, make_pu_split, PlantedConfig};
        let g = generate_planted(&PlantedConfig {
            n: 200,
            h: 0.1,
            feature_separation: 6.0,
            ..Default::default()
        })
        .unwrap();
        let s = make_pu_split(&g, 0.5, 0).unwrap();
        // use the true labels as the selection to make the task separable
        let sel = SelectionResult {
            selected: s
                .unlabeled()
                .iter()
                .copied()
                .filter(|&i| g.labels()[i].is_positive())
                .collect(),
            rest: s
                .unlabeled()
                .iter()
                .copied()
                .filter(|&i| !g.labels()[i].is_positive())
                .collect(),
        };
        let op = GcnOperator::new(&g, &EdgeMask::for_graph(&g)).unwrap();
        let mut state = ClassifierState::new(g.features().cols(), DEFAULT_HIDDEN, 0);
        let mut loss = f64::INFINITY;
        for _ in 0..200 {
            loss = backward_and_step(&mut state, &op, g.features(), &s, &sel, DEFAULT_LR).unwrap();
        }
        assert!(loss < 0.1, "{loss}");
    }

    #[test]
    fn predict_examples() {
        use Label::*;
        assert_eq!(
            predict_labels(&[0.9, 0.1], 0.5).unwrap(),
            vec![Positive, Negative]
        );
        assert_eq!(predict_labels(&[0.5], 0.5).unwrap(), vec![Positive]);
        assert_eq!(
            predict_labels(&[0.5 - 1e-9; 3], 0.5).unwrap(),
            vec![Negative; 3]
        );
        assert!(predict_labels(&[0.5], 1.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = ClassifierState::new(5, 7, 9).params;
        let text = checkpoint_to_string(&p);
        assert_eq!(checkpoint_from_str(&text, "mem").unwrap(), p);
        let broken = text.replacen("b1 7", "b1 6", 1);
        assert!(checkpoint_from_str(&broken, "mem").is_err());
        assert!(checkpoint_from_str("nope", "mem").is_err());
    }
}
