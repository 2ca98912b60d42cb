//! Planted two-block graphs with a controllable heterophily ratio, label
//! binarization and positive-unlabeled splits.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GplError, Result};
use crate::graph::{Label, SparseGraph};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n: usize,
    /// Fraction of nodes labeled positive.
    pub pi_p: f64,
    /// Target heterophily ratio.
    pub h: f64,
    pub avg_degree: f64,
    pub feature_dim: usize,
    /// Class means sit at `±feature_separation / 2` on the first axis.
    pub feature_separation: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            pi_p: 0.2,
            h: 0.7,
            avg_degree: 10.0,
            feature_dim: 8,
            feature_separation: 1.0,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GplError::InvalidArgument(msg));
        if !(self.pi_p > 0.0 && self.pi_p < 1.0) {
            return bad(format!("pi_p must lie in (0, 1), got {}", self.pi_p));
        }
        if !(0.0..=1.0).contains(&self.h) {
            return bad(format!("h must lie in [0, 1], got {}", self.h));
        }
        if !(self.avg_degree >= 1.0) {
            return bad(format!("avg_degree must be >= 1, got {}", self.avg_degree));
        }
        if self.n < 2 || self.feature_dim == 0 {
            return bad("need n >= 2 and feature_dim >= 1".into());
        }
        Ok(())
    }
}

/// Sample a planted graph.
///
/// The first `floor(pi_p * n)` nodes are positive. Exactly
/// `round(h * |E|)` cross-class edges are drawn uniformly from the
/// cross-class pairs; the remaining edges are split between the two
/// within-class blocks in proportion to their pair counts. Features are
/// unit-variance Gaussians around the class means.
pub fn generate_planted(cfg: &PlantedConfig) -> Result<SparseGraph> {
    cfg.validate()?;
    let n = cfg.n;
    let n_pos = (cfg.pi_p * n as f64).floor() as usize;
    if n_pos == 0 || n_pos == n {
        return Err(GplError::Infeasible(format!(
            "pi_p = {} leaves one class empty at n = {n}",
            cfg.pi_p
        )));
    }
    let n_neg = n - n_pos;
    let m = (n as f64 * cfg.avg_degree / 2.0).round() as usize;
    let cross_pairs = n_pos * n_neg;
    let pp_pairs = n_pos * (n_pos - 1) / 2;
    let nn_pairs = n_neg * (n_neg - 1) / 2;
    let within_pairs = pp_pairs + nn_pairs;

    let cross = (cfg.h * m as f64).round() as usize;
    let within = m - cross;
    if cross > cross_pairs || within > within_pairs {
        return Err(GplError::Infeasible(format!(
            "{m} edges with heterophily {}: achievable range [{:.4}, {:.4}]",
            cfg.h,
            m.saturating_sub(within_pairs) as f64 / m as f64,
            cross_pairs.min(m) as f64 / m as f64
        )));
    }
    let mut pp = ((within as f64) * pp_pairs as f64 / within_pairs as f64).round() as usize;
    pp = pp.min(pp_pairs).max(within.saturating_sub(nn_pairs));
    let nn = within - pp;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = Vec::with_capacity(m);
    let pos: Vec<usize> = (0..n_pos).collect();
    let neg: Vec<usize> = (n_pos..n).collect();
    sample_block(&pos, &pos, pp, &mut rng, &mut edges);
    sample_block(&neg, &neg, nn, &mut rng, &mut edges);
    sample_block(&pos, &neg, cross, &mut rng, &mut edges);

    let labels: Vec<Label> = (0..n)
        .map(|i| {
            if i < n_pos {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    let half = cfg.feature_separation / 2.0;
    let mut features = Matrix::zeros(n, cfg.feature_dim);
    for i in 0..n {
        for v in features.row_mut(i) {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v = noise;
        }
        features.row_mut(i)[0] += if i < n_pos { half } else { -half };
    }
    SparseGraph::new(n, &edges, features, labels)
}

/// Draw `count` distinct unordered pairs `(a, b)`, `a` from `left`, `b`
/// from `right`, `a != b`. `left == right` means a within-block draw.
fn sample_block(
    left: &[usize],
    right: &[usize],
    count: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<(usize, usize)>,
) {
    if count == 0 {
        return;
    }
    let same = std::ptr::eq(left, right);
    let total = if same {
        left.len() * (left.len() - 1) / 2
    } else {
        left.len() * right.len()
    };
    let decode = |k: usize| -> (usize, usize) {
        if same {
            // k-th pair of the strict upper triangle, row-major
            let mut row = 0;
            let mut rem = k;
            let len = left.len();
            while rem >= len - 1 - row {
                rem -= len - 1 - row;
                row += 1;
            }
            (left[row], left[row + 1 + rem])
        } else {
            (left[k / right.len()], right[k % right.len()])
        }
    };
    if count * 4 >= total {
        for k in index::sample(rng, total, count) {
            let (a, b) = decode(k);
            out.push((a.min(b), a.max(b)));
        }
        return;
    }
    let mut seen = HashSet::with_capacity(count);
    while seen.len() < count {
        let a = left[rng.random_range(0..left.len())];
        let b = right[rng.random_range(0..right.len())];
        if a == b {
            continue;
        }
        let p = (a.min(b), a.max(b));
        if seen.insert(p) {
            out.push(p);
        }
    }
}

/// Majority class becomes positive, every other class negative; ties go
/// to the smallest class id.
pub fn binarize_labels(classes: &[u32]) -> Result<Vec<Label>> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in classes {
        *counts.entry(c).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(GplError::SingleClass);
    }
    // BTreeMap iterates ascending, so strict > keeps the smallest id on ties
    let mut best = (0, 0);
    for (&c, &k) in &counts {
        if k > best.1 {
            best = (c, k);
        }
    }
    Ok(classes
        .iter()
        .map(|&c| {
            if c == best.0 {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect())
}

/// Observed positives `P` and unlabeled nodes `U` of a transductive split.
#[derive(Debug, Clone, PartialEq)]
pub struct PUSplit {
    n: usize,
    positives: Vec<usize>,
    unlabeled: Vec<usize>,
    r_p: f64,
    pi_true: f64,
}

impl PUSplit {
    /// `U` is the complement of `positives`.
    pub fn from_sets(n: usize, mut positives: Vec<usize>, r_p: f64, pi_true: f64) -> Self {
        positives.sort_unstable();
        positives.dedup();
        let mut in_p = vec![false; n];
        for &i in &positives {
            in_p[i] = true;
        }
        let unlabeled = (0..n).filter(|&i| !in_p[i]).collect();
        Self {
            n,
            positives,
            unlabeled,
            r_p,
            pi_true,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn r_p(&self) -> f64 {
        self.r_p
    }

    /// Fraction of hidden positives among the unlabeled nodes.
    pub fn pi_true(&self) -> f64 {
        self.pi_true
    }
}

/// Reveal a uniformly random `round(r_p * #positives)` (at least one) of
/// the true positives; everything else is unlabeled.
pub fn make_pu_split(g: &SparseGraph, r_p: f64, seed: u64) -> Result<PUSplit> {
    if !(r_p > 0.0 && r_p <= 1.0) {
        return Err(GplError::InvalidArgument(format!(
            "r_p must lie in (0, 1], got {r_p}"
        )));
    }
    let truth = g.positive_nodes();
    if truth.is_empty() {
        return Err(GplError::NoPositives);
    }
    let k = ((r_p * truth.len() as f64 + 0.5).floor() as usize).clamp(1, truth.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed: Vec<usize> = index::sample(&mut rng, truth.len(), k)
        .into_iter()
        .map(|x| truth[x])
        .collect();
    let mut split = PUSplit::from_sets(g.num_nodes(), observed, r_p, 0.0);
    let hidden = split
        .unlabeled
        .iter()
        .filter(|&&i| g.labels()[i].is_positive())
        .count();
    split.pi_true = if split.unlabeled.is_empty() {
        0.0
    } else {
        hidden as f64 / split.unlabeled.len() as f64
    };
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_is_deterministic_and_hits_ratio() {
        let cfg = PlantedConfig {
            n: 1000,
            pi_p: 0.5,
            h: 0.5,
            avg_degree: 10.0,
            ..Default::default()
        };
        let g = generate_planted(&cfg).unwrap();
        let h = g.heterophily_ratio().unwrap();
        assert!((0.47..=0.53).contains(&h), "{h}");
        assert_eq!(g, generate_planted(&cfg).unwrap());
        assert_eq!(g.positive_nodes().len(), 500);
    }

    #[test]
    fn planted_homophilic_and_degree() {
        for seed in 0..50 {
            for h in [0.0, 0.3, 0.8] {
                let cfg = PlantedConfig {
                    n: 300,
                    h,
                    seed,
                    ..Default::default()
                };
                let g = generate_planted(&cfg).unwrap();
                assert!((g.heterophily_ratio().unwrap() - h).abs() <= 0.03);
                let mean_deg = 2.0 * g.num_edges() as f64 / g.num_nodes() as f64;
                assert!((mean_deg - cfg.avg_degree).abs() <= 0.1 * cfg.avg_degree);
            }
        }
    }

    #[test]
    fn planted_infeasible_reports_range() {
        let cfg = PlantedConfig {
            n: 20,
            pi_p: 0.05,
            h: 1.0,
            avg_degree: 10.0,
            ..Default::default()
        };
        let err = generate_planted(&cfg).unwrap_err();
        assert!(err.to_string().contains("achievable range"), "{err}");
    }

    #[test]
    fn binarize_examples() {
        use Label::*;
        assert_eq!(
            binarize_labels(&[0, 0, 1, 2]).unwrap(),
            vec![Positive, Positive, Negative, Negative]
        );
        assert_eq!(
            binarize_labels(&[1, 1, 0, 0]).unwrap(),
            vec![Negative, Negative, Positive, Positive]
        );
        assert!(matches!(
            binarize_labels(&[3, 3]),
            Err(GplError::SingleClass)
        ));
    }

    fn counted_graph(pos: usize, neg: usize) -> SparseGraph {
        let n = pos + neg;
        let labels = (0..n)
            .map(|i| {
                if i < pos {
                    Label::Positive
                } else {
                    Label::Negative
                }
            })
            .collect();
        SparseGraph::new(n, &[], Matrix::zeros(n, 1), labels).unwrap()
    }

    #[test]
    fn split_examples() {
        let g = counted_graph(100, 300);
        let s = make_pu_split(&g, 0.5, 7).unwrap();
        assert_eq!(s.positives().len(), 50);
        assert_eq!(s.unlabeled().len(), 350);
        assert!((s.pi_true() - 50.0 / 350.0).abs() < 1e-15);
        assert!(s.positives().iter().all(|&i| g.labels()[i].is_positive()));
        assert_eq!(s, make_pu_split(&g, 0.5, 7).unwrap());

        let s = make_pu_split(&g, 1.0, 7).unwrap();
        assert_eq!(s.pi_true(), 0.0);
        assert!(s.unlabeled().iter().all(|&i| !g.labels()[i].is_positive()));

        assert!(matches!(
            make_pu_split(&counted_graph(0, 4), 0.5, 0),
            Err(GplError::NoPositives)
        ));
    }
}
