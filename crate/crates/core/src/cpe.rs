//! Class-prior estimation from the score distributions of the positive and
//! unlabeled sets: `pi_hat = min_c Q_u(c) / Q_p(c)` with `Q(c)` the fraction
//! of scores at or above `c`.

use serde::Serialize;

use crate::error::{GplError, Result};

/// Non-empty scores in `[0, 1]`, kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    sorted: Vec<f64>,
}

impl ScoreSet {
    pub fn new(mut scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(GplError::EmptyScores);
        }
        if let Some(&bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(GplError::ScoreRange(bad));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { sorted: scores })
    }

    /// Scores of the given nodes.
    pub fn gather(scores: &[f64], nodes: &[usize]) -> Result<Self> {
        Self::new(nodes.iter().map(|&i| scores[i]).collect())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    fn count_at_least(&self, c: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&s| s < c)
    }
}

/// Fraction of scores `>= c`.
pub fn empirical_q(s: &ScoreSet, c: f64) -> f64 {
    s.count_at_least(c) as f64 / s.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub c: f64,
    pub q_u: f64,
    pub q_p: f64,
    pub ratio: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorEstimate {
    pub pi_hat: f64,
    pub c_star: f64,
    pub q_floor: f64,
    /// One point per candidate threshold, ascending in `c`.
    pub curve: Vec<CurvePoint>,
}

/// Default admissibility floor on `Q_p(c)`: thresholds must keep at least
/// ten positive scores, bounded to `[0.05, 0.5]` so tiny positive sets
/// still admit their median.
pub fn default_q_floor(num_positive: usize) -> f64 {
    (10.0 / num_positive as f64).min(0.5).max(0.05)
}

pub fn estimate_prior(scores_p: &ScoreSet, scores_u: &ScoreSet) -> Result<PriorEstimate> {
    estimate_prior_with_floor(scores_p, scores_u, default_q_floor(scores_p.len()))
}

/// Minimize the ratio over the observed scores plus zero. Ties keep the
/// smallest threshold.
pub fn estimate_prior_with_floor(
    scores_p: &ScoreSet,
    scores_u: &ScoreSet,
    q_floor: f64,
) -> Result<PriorEstimate> {
    let mut candidates: Vec<f64> = std::iter::once(0.0)
        .chain(scores_p.sorted.iter().copied())
        .chain(scores_u.sorted.iter().copied())
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best: Option<(f64, f64)> = None;
    let mut max_qp = 0.0_f64;
    let curve: Vec<CurvePoint> = candidates
        .into_iter()
        .map(|c| {
            let q_u = empirical_q(scores_u, c);
            let q_p = empirical_q(scores_p, c);
            let ratio = if q_p > 0.0 { q_u / q_p } else { f64::INFINITY };
            let admissible = q_p >= q_floor;
            max_qp = max_qp.max(q_p);
            if admissible && best.is_none_or(|(r, _)| ratio < r) {
                best = Some((ratio, c));
            }
            CurvePoint {
                c,
                q_u,
                q_p,
                ratio,
                admissible,
            }
        })
        .collect();
    let (ratio, c_star) = best.ok_or(GplError::NoAdmissibleThreshold { q_floor, max_qp })?;
    Ok(PriorEstimate {
        pi_hat: ratio.clamp(0.0, 1.0),
        c_star,
        q_floor,
        curve,
    })
}

pub fn prior_error(pi_hat: f64, pi_true: f64) -> f64 {
    (pi_hat - pi_true).abs()
}
