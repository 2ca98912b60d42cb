use crate::graph::Label;

pub use crate::cpe::prior_error;

/// F1 of the positive class restricted to `eval_set`. Zero when there are
/// no true positives.
pub fn f1_score(pred: &[Label], truth: &[Label], eval_set: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction/truth length mismatch");
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for &i in eval_set {
        match (pred[i].is_positive(), truth[i].is_positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn examples() {
        let all: Vec<usize> = (0..4).collect();
        assert_eq!(f1_score(&[P, N, P, N], &[P, N, P, N], &all), 1.0);

        // TP=2, FP=1, FN=1
        let pred = [P, P, P, N, N];
        let truth = [P, P, N, P, N];
        let f = f1_score(&pred, &truth, &(0..5).collect::<Vec<_>>());
        assert!((f - 2.0 / 3.0).abs() < 1e-15);

        assert_eq!(f1_score(&[N, N], &[P, N], &[0, 1]), 0.0);
    }

    #[test]
    fn restricted_to_eval_set() {
        let pred = [P, P, N];
        let truth = [N, P, N];
        assert_eq!(f1_score(&pred, &truth, &[1, 2]), 1.0);
    }

    #[test]
    fn relabeling_symmetry() {
        let pred = [P, N, P, P, N, N];
        let truth = [P, P, N, P, N, P];
        let perm = [3, 5, 0, 1, 4, 2];
        let pp: Vec<Label> = perm.iter().map(|&i| pred[i]).collect();
        let tt: Vec<Label> = perm.iter().map(|&i| truth[i]).collect();
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(f1_score(&pred, &truth, &all), f1_score(&pp, &tt, &all));
    }
}
