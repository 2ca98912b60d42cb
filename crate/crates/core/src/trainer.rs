//! The alternating GPL loop and the U-as-negative baseline.

use std::io::Write;

use serde::Serialize;

use crate::config::KeyValues;
use crate::cpe::{estimate_prior, prior_error, PriorEstimate, ScoreSet};
use crate::error::{GplError, Result};
use crate::gnn::{
    all_negative, backward_and_step, forward, predict_labels, select_top, ClassifierState,
    SelectionResult, DEFAULT_HIDDEN, DEFAULT_LR,
};
use crate::graph::{EdgeMask, GcnOperator, SparseGraph};
use crate::metrics::f1_score;
use crate::propagation::{
    init_beliefs, optimize_mask, IdentifiedNodes, LplProblem, MaskSchedule, PropagationConfig,
};
use crate::synth::PUSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// `lr / sqrt(epoch)`
    InvSqrt,
}

impl std::str::FromStr for LrSchedule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "constant" => Ok(Self::Constant),
            "inv_sqrt" => Ok(Self::InvSqrt),
            _ => Err(format!("unknown schedule '{s}' (constant | inv_sqrt)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub outer_epochs: usize,
    pub k_prop: usize,
    pub k_inner: usize,
    pub alpha: f64,
    pub lr_mask: f64,
    pub lr_clf: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub clf_steps_per_epoch: usize,
    pub warmup_steps: usize,
    pub hidden: usize,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            outer_epochs: 10,
            k_prop: 10,
            k_inner: 50,
            alpha: 0.5,
            lr_mask: 0.05,
            lr_clf: DEFAULT_LR,
            lr_schedule: LrSchedule::Constant,
            seed: 0,
            clf_steps_per_epoch: 20,
            warmup_steps: 50,
            hidden: DEFAULT_HIDDEN,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 12] = [
        "outer_epochs",
        "k_prop",
        "k_inner",
        "alpha",
        "lr_mask",
        "lr_clf",
        "lr_schedule",
        "seed",
        "clf_steps_per_epoch",
        "warmup_steps",
        "hidden",
        "threshold",
    ];

    /// Consume the training keys present in `kv`; absent keys keep their
    /// current value.
    pub fn apply(&mut self, kv: &mut KeyValues) -> Result<()> {
        kv.take_into("outer_epochs", &mut self.outer_epochs)?;
        kv.take_into("k_prop", &mut self.k_prop)?;
        kv.take_into("k_inner", &mut self.k_inner)?;
        kv.take_into("alpha", &mut self.alpha)?;
        kv.take_into("lr_mask", &mut self.lr_mask)?;
        kv.take_into("lr_clf", &mut self.lr_clf)?;
        kv.take_into("lr_schedule", &mut self.lr_schedule)?;
        kv.take_into("seed", &mut self.seed)?;
        kv.take_into("clf_steps_per_epoch", &mut self.clf_steps_per_epoch)?;
        kv.take_into("warmup_steps", &mut self.warmup_steps)?;
        kv.take_into("hidden", &mut self.hidden)?;
        kv.take_into("threshold", &mut self.threshold)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GplError::InvalidArgument(m));
        if self.outer_epochs == 0 || self.k_prop == 0 || self.hidden == 0 {
            return bad("outer_epochs, k_prop and hidden must be at least 1".into());
        }
        if !(self.lr_mask >= 0.0 && self.lr_clf >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            ));
        }
        PropagationConfig::new(self.alpha, self.k_prop).map(|_| ())
    }

    fn propagation(&self) -> Result<PropagationConfig> {
        PropagationConfig::new(self.alpha, self.k_prop)
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr_clf,
            LrSchedule::InvSqrt => self.lr_clf / (epoch as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lpl_loss: f64,
    pub pi_hat: f64,
    pub clf_loss: f64,
    pub f1: f64,
    pub mean_weight_homo: f64,
    pub mean_weight_hetero: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)
                .map_err(|e| GplError::InvalidArgument(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| GplError::io("<trace>", e))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    fn push(&mut self, r: EpochRecord) -> Result<()> {
        // the homophilic/heterophilic means are NaN when a class has no edges
        let checks = [
            ("pi_hat", r.pi_hat),
            ("clf_loss", r.clf_loss),
            ("f1", r.f1),
            ("lpl_loss", r.lpl_loss),
        ];
        if let Some((what, _)) = checks.iter().find(|(_, v)| !v.is_finite()) {
            return Err(GplError::NonFiniteTrace {
                epoch: r.epoch,
                what: what.to_string(),
            });
        }
        self.records.push(r);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub f1: f64,
    pub pi_hat: f64,
    pub pi_true: f64,
    pub prior_error: f64,
    pub mean_weight_homo: f64,
    pub mean_weight_hetero: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GplOutcome {
    pub classifier: ClassifierState,
    pub mask: EdgeMask,
    pub prior: PriorEstimate,
    pub trace: TrainTrace,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub classifier: ClassifierState,
    pub prior: PriorEstimate,
    pub trace: TrainTrace,
}

impl GplOutcome {
    pub fn summary(&self, split: &PUSplit, cfg: &TrainConfig) -> Summary {
        summarize(&self.trace, self.prior.pi_hat, split, cfg)
    }
}

impl BaselineOutcome {
    pub fn summary(&self, split: &PUSplit, cfg: &TrainConfig) -> Summary {
        summarize(&self.trace, self.prior.pi_hat, split, cfg)
    }
}

fn summarize(trace: &TrainTrace, pi_hat: f64, split: &PUSplit, cfg: &TrainConfig) -> Summary {
    let last = trace.last().expect("at least one epoch");
    Summary {
        f1: last.f1,
        pi_hat,
        pi_true: split.pi_true(),
        prior_error: prior_error(pi_hat, split.pi_true()),
        mean_weight_homo: last.mean_weight_homo,
        mean_weight_hetero: last.mean_weight_hetero,
        epochs: trace.len(),
        seed: cfg.seed,
    }
}

fn check_inputs(g: &SparseGraph, split: &PUSplit, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if g.num_nodes() == 0 {
        return Err(GplError::InvalidArgument("graph has no nodes".into()));
    }
    if split.num_nodes() != g.num_nodes() {
        return Err(GplError::InvalidArgument(format!(
            "split covers {} nodes, graph has {}",
            split.num_nodes(),
            g.num_nodes()
        )));
    }
    if split.positives().is_empty() {
        return Err(GplError::EmptyPositives);
    }
    if split.unlabeled().is_empty() {
        return Err(GplError::InvalidArgument("no unlabeled nodes".into()));
    }
    Ok(())
}

fn prior_from_scores(z: &[f64], split: &PUSplit) -> Result<PriorEstimate> {
    estimate_prior(
        &ScoreSet::gather(z, split.positives())?,
        &ScoreSet::gather(z, split.unlabeled())?,
    )
}

fn f1_on_unlabeled(z: &[f64], g: &SparseGraph, split: &PUSplit, threshold: f64) -> Result<f64> {
    let pred = predict_labels(z, threshold)?;
    Ok(f1_score(&pred, g.labels(), split.unlabeled()))
}

fn train_steps(
    state: &mut ClassifierState,
    op: &GcnOperator,
    g: &SparseGraph,
    split: &PUSplit,
    sel: &SelectionResult,
    steps: usize,
    lr: f64,
) -> Result<f64> {
    let mut loss = f64::NAN;
    for _ in 0..steps {
        loss = backward_and_step(state, op, g.features(), split, sel, lr)?;
    }
    if steps == 0 {
        loss = crate::gnn::pu_loss(&forward(&state.params, op, g.features()), split, sel)?;
    }
    Ok(loss)
}

/// Classifier trained for `warmup_steps` with every unlabeled node as a
/// negative on the unmasked structure, and its prior estimate.
fn warmup(
    g: &SparseGraph,
    split: &PUSplit,
    cfg: &TrainConfig,
) -> Result<(ClassifierState, PriorEstimate)> {
    let mut state = ClassifierState::new(g.features().cols(), cfg.hidden, cfg.seed);
    let op = GcnOperator::unit(g);
    train_steps(
        &mut state,
        &op,
        g,
        split,
        &all_negative(split),
        cfg.warmup_steps,
        cfg.lr_clf,
    )?;
    let z = forward(&state.params, &op, g.features());
    Ok((state, prior_from_scores(&z, split)?))
}

/// Prior estimate that seeds the first epoch.
pub fn first_epoch_prior(
    g: &SparseGraph,
    split: &PUSplit,
    cfg: &TrainConfig,
) -> Result<PriorEstimate> {
    check_inputs(g, split, cfg)?;
    warmup(g, split, cfg).map(|(_, p)| p)
}

fn is_degenerate(prior: &PriorEstimate) -> bool {
    // a single candidate above zero means every score was identical
    prior.curve.len() <= 2
}

pub fn run_gpl(g: &SparseGraph, split: &PUSplit, cfg: &TrainConfig) -> Result<GplOutcome> {
    check_inputs(g, split, cfg)?;
    let prop = cfg.propagation()?;
    let (mut state, mut prior) = warmup(g, split, cfg)?;
    let mut warnings = Vec::new();
    if is_degenerate(&prior) {
        warnings.push(format!(
            "warmup scores are constant; starting prior {} is uninformative",
            prior.pi_hat
        ));
    }
    let unit = GcnOperator::unit(g);
    let z0 = forward(&state.params, &unit, g.features());
    let mut sel = select_top(&z0, split.unlabeled(), prior.pi_hat);
    let mut mask = EdgeMask::for_graph(g);
    let mut trace = TrainTrace::default();

    for epoch in 1..=cfg.outer_epochs {
        // (a) beliefs from observed positives and the latest selection
        let identified = IdentifiedNodes {
            positives: sel.selected.clone(),
            negatives: sel.rest.clone(),
        };
        let e0 = init_beliefs(split, Some(&identified))?;
        let positives: Vec<usize> = split
            .positives()
            .iter()
            .chain(&sel.selected)
            .copied()
            .collect();
        let problem = LplProblem {
            graph: g,
            e0: &e0,
            cfg: prop,
            positives: &positives,
            negatives: &sel.rest,
        };
        // (b) inner mask problem
        let (next, report) = optimize_mask(
            &problem,
            &mask,
            MaskSchedule {
                steps: cfg.k_inner,
                lr: cfg.lr_mask,
            },
        )?;
        mask = next;
        // (c) prior on the optimized structure
        let op = GcnOperator::new(g, &mask)?;
        let z = forward(&state.params, &op, g.features());
        prior = prior_from_scores(&z, split)?;
        // (d) selection
        sel = select_top(&z, split.unlabeled(), prior.pi_hat);
        // (e) classifier
        let clf_loss = train_steps(
            &mut state,
            &op,
            g,
            split,
            &sel,
            cfg.clf_steps_per_epoch,
            cfg.lr_at(epoch),
        )?;
        let z = forward(&state.params, &op, g.features());
        let (homo, hetero) = g.mean_weight_by_type(&mask.weights());
        trace.push(EpochRecord {
            epoch,
            lpl_loss: report.final_loss,
            pi_hat: prior.pi_hat,
            clf_loss,
            f1: f1_on_unlabeled(&z, g, split, cfg.threshold)?,
            mean_weight_homo: homo,
            mean_weight_hetero: hetero,
        })?;
    }
    Ok(GplOutcome {
        classifier: state,
        mask,
        prior,
        trace,
        warnings,
    })
}

/// Same classifier, optimizer and step budget; unit edge weights, no prior
/// estimation in the loss and every unlabeled node labeled negative. The
/// per-epoch prior is still estimated from its scores for comparison.
pub fn run_baseline(
    g: &SparseGraph,
    split: &PUSplit,
    cfg: &TrainConfig,
) -> Result<BaselineOutcome> {
    check_inputs(g, split, cfg)?;
    let (mut state, mut prior) = warmup(g, split, cfg)?;
    let op = GcnOperator::unit(g);
    let sel = all_negative(split);
    let mut trace = TrainTrace::default();
    for epoch in 1..=cfg.outer_epochs {
        let clf_loss = train_steps(
            &mut state,
            &op,
            g,
            split,
            &sel,
            cfg.clf_steps_per_epoch,
            cfg.lr_at(epoch),
        )?;
        let z = forward(&state.params, &op, g.features());
        prior = prior_from_scores(&z, split)?;
        trace.push(EpochRecord {
            epoch,
            lpl_loss: 0.0,
            pi_hat: prior.pi_hat,
            clf_loss,
            f1: f1_on_unlabeled(&z, g, split, cfg.threshold)?,
            mean_weight_homo: 1.0,
            mean_weight_hetero: 1.0,
        })?;
    }
    Ok(BaselineOutcome {
        classifier: state,
        prior,
        trace,
    })
}
