//! Losses, negative sampling, the SGD/AdaGrad training loop, and early
//! stopping.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetSplit, LabeledTriple};
use crate::error::{KgError, Result};
use crate::eval;
use crate::params::{self, MatrixId, ModelKind, ParameterSet};
use crate::scoring::{self, SparseGradient};

/// Loss used by the training loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    MaxMargin,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Initial AdaGrad learning rate α.
    pub alpha: f64,
    /// L2 regularization weight λ.
    pub lambda: f64,
    /// Negatives generated per positive, η.
    pub eta: usize,
    /// Batches per epoch; batch size is ⌈|train|/batch_count⌉.
    pub batch_count: usize,
    /// Maximum number of epochs.
    pub max_iter: usize,
    /// Validate every this many epochs.
    pub validate_every: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub adagrad_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            lambda: 0.0,
            eta: 1,
            batch_count: 100,
            max_iter: 1000,
            validate_every: 50,
            seed: 0,
            loss: LossKind::Logistic,
            adagrad_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(KgError::Value("alpha must be nonnegative".into()));
        }
        if self.lambda < 0.0 {
            return Err(KgError::Value("lambda must be nonnegative".into()));
        }
        if self.eta < 1 {
            return Err(KgError::Value("eta must be at least 1".into()));
        }
        if self.validate_every < 1 {
            return Err(KgError::Value("validate_every must be at least 1".into()));
        }
        if self.batch_count < 1 {
            return Err(KgError::Value("batch_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxIter,
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// (epoch, validation metric) pairs, strictly increasing in epoch.
    pub validation_history: Vec<(usize, f64)>,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable log(1 + exp(z)).
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Negative log-likelihood of the logistic model for one triple:
/// log(1 + exp(−yφ)). The λ‖Θ‖² term is accounted per update step in
/// [`loss_gradient`], not here.
pub fn logistic_loss(params: &ParameterSet, triple: &LabeledTriple) -> Result<f64> {
    let phi = scoring::score(params, triple.r, triple.s, triple.o)?;
    Ok(log1p_exp(-f64::from(triple.y) * phi))
}

/// Gradient of the per-triple regularized logistic objective:
/// −y σ(−yφ) ∇φ + 2λv on touched rows.
pub fn loss_gradient(
    params: &ParameterSet,
    triple: &LabeledTriple,
    lambda: f64,
) -> Result<SparseGradient> {
    let phi = scoring::score(params, triple.r, triple.s, triple.o)?;
    let y = f64::from(triple.y);
    let mut grad = scoring::gradient(params, triple.r, triple.s, triple.o)?;
    grad.scale(-y * sigmoid(-y * phi));
    grad.add_l2(params, lambda);
    Ok(grad)
}

/// Draw η negatives from a positive by corrupting either the subject
/// (probability 1/2) or the object with a uniformly sampled entity.
/// Collisions with known positives are not checked.
pub fn sample_negatives(
    positive: &LabeledTriple,
    eta: usize,
    n_entities: usize,
    rng: &mut impl Rng,
) -> Vec<LabeledTriple> {
    assert!(n_entities > 0, "vocabulary must be nonempty");
    (0..eta)
        .map(|_| {
            let e = rng.gen_range(0..n_entities);
            if rng.gen_bool(0.5) {
                LabeledTriple::new(positive.r, e, positive.o, -1)
            } else {
                LabeledTriple::new(positive.r, positive.s, e, -1)
            }
        })
        .collect()
}

/// Max-margin loss max(0, γ + φ(neg) − φ(pos)).
pub fn max_margin_loss(
    params: &ParameterSet,
    pos: &LabeledTriple,
    neg: &LabeledTriple,
    gamma: f64,
) -> Result<f64> {
    let phi_pos = scoring::score(params, pos.r, pos.s, pos.o)?;
    let phi_neg = scoring::score(params, neg.r, neg.s, neg.o)?;
    Ok((gamma + phi_neg - phi_pos).max(0.0))
}

fn max_margin_gradient(
    params: &ParameterSet,
    pos: &LabeledTriple,
    neg: &LabeledTriple,
    gamma: f64,
) -> Result<Option<SparseGradient>> {
    let phi_pos = scoring::score(params, pos.r, pos.s, pos.o)?;
    let phi_neg = scoring::score(params, neg.r, neg.s, neg.o)?;
    if gamma + phi_neg - phi_pos <= 0.0 {
        return Ok(None);
    }
    let mut g_pos = scoring::gradient(params, pos.r, pos.s, pos.o)?;
    g_pos.scale(-1.0);
    let g_neg = scoring::gradient(params, neg.r, neg.s, neg.o)?;
    for e in g_neg.entries {
        // merge into the positive gradient
        if let Some(existing) = g_pos
            .entries
            .iter_mut()
            .find(|x| x.matrix == e.matrix && x.row == e.row)
        {
            for (a, b) in existing.values.iter_mut().zip(&e.values) {
                *a += b;
            }
        } else {
            g_pos.entries.push(e);
        }
    }
    Ok(Some(g_pos))
}

/// One AdaGrad update: per coordinate, acc += g² then
/// v −= α·g / (√acc + ε).
pub fn adagrad_step(params: &mut ParameterSet, grad: &SparseGradient, alpha: f64, eps: f64) {
    for e in &grad.entries {
        let pm = params.matrix_mut(e.matrix).expect("matrix present");
        let acc = pm.acc.row_mut(e.row);
        for (k, &g) in e.values.iter().enumerate() {
            acc[k] += g * g;
        }
        let steps: Vec<f64> = e
            .values
            .iter()
            .enumerate()
            .map(|(k, &g)| alpha * g / (acc[k].sqrt() + eps))
            .collect();
        let row = pm.value.row_mut(e.row);
        for (k, step) in steps.into_iter().enumerate() {
            row[k] -= step;
        }
    }
}

/// Project touched entity rows back onto the unit ball (original TransE
/// recipe, used with the max-margin loss).
fn project_entities(params: &mut ParameterSet, grad: &SparseGradient) {
    let rows: Vec<usize> = grad
        .entries
        .iter()
        .filter(|e| e.matrix == MatrixId::EntRe)
        .map(|e| e.row)
        .collect();
    for row in rows {
        let r = params.ent_re.value.row_mut(row);
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1.0 {
            for x in r {
                *x /= norm;
            }
        }
    }
}

/// The validation metric used for early stopping: AP when the data has
/// observed negatives, filtered MRR otherwise.
fn validation_metric(params: &ParameterSet, split: &DatasetSplit) -> Result<f64> {
    let has_negatives = split.valid.iter().any(|t| t.y == -1);
    if has_negatives {
        let mut scored = Vec::with_capacity(split.valid.len());
        for t in &split.valid {
            scored.push((scoring::score(params, t.r, t.s, t.o)?, t.y));
        }
        Ok(eval::average_precision(&scored)?.average_precision)
    } else {
        let report = eval::ranking_metrics(params, &split.valid, &split.all_known_positives)?;
        Ok(report.mrr_filtered)
    }
}

/// SGD with AdaGrad over uniformly sampled batches, validating every
/// `validate_every` epochs and stopping when the validation metric stops
/// improving. Returns the parameters from the best validation point.
pub fn train(
    split: &DatasetSplit,
    model: ModelKind,
    k: usize,
    config: &TrainConfig,
) -> Result<(ParameterSet, TrainReport)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(KgError::Value("training set is empty".into()));
    }
    let n = split.vocabulary.n_entities();
    let m = split.vocabulary.n_relations();
    let mut params = params::init(model, n, m, k, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let batch_size = split.train.len().div_ceil(config.batch_count);
    let has_negatives = split.train.iter().any(|t| t.y == -1);
    let margin = match model {
        ModelKind::TransE { margin, .. } => margin,
        _ => 1.0,
    };

    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut previous_score = 0.0;
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxIter;
    let mut epochs_run = 0;

    let mut batch = Vec::with_capacity(batch_size * 2);
    for epoch in 1..=config.max_iter {
        epochs_run = epoch;
        for _ in 0..config.batch_count {
            batch.clear();
            for _ in 0..batch_size {
                let idx = rng.gen_range(0..split.train.len());
                batch.push(split.train[idx]);
            }
            if !has_negatives {
                let positives: Vec<LabeledTriple> = batch.clone();
                for pos in &positives {
                    batch.extend(sample_negatives(pos, config.eta, n, &mut rng));
                }
            }
            match config.loss {
                LossKind::Logistic => {
                    for triple in &batch {
                        let loss = logistic_loss(&params, triple)?;
                        if !loss.is_finite() {
                            return Err(KgError::Diverged {
                                epoch,
                                message: format!("non-finite loss on triple {:?}", triple.key()),
                            });
                        }
                        let grad = loss_gradient(&params, triple, config.lambda)?;
                        adagrad_step(&mut params, &grad, config.alpha, config.adagrad_eps);
                    }
                }
                LossKind::MaxMargin => {
                    // Pair each negative with a positive, replicating
                    // positives when the counts differ.
                    let (pos, neg): (Vec<_>, Vec<_>) =
                        batch.iter().partition(|t| t.y == 1);
                    let pairs: Vec<(LabeledTriple, LabeledTriple)> = if has_negatives {
                        if pos.is_empty() || neg.is_empty() {
                            continue;
                        }
                        neg.iter()
                            .enumerate()
                            .map(|(i, &&n)| (*pos[i % pos.len()], n))
                            .collect()
                    } else {
                        pos.iter()
                            .flat_map(|&&p| {
                                sample_negatives(&p, config.eta, n, &mut rng)
                                    .into_iter()
                                    .map(move |neg| (p, neg))
                            })
                            .collect()
                    };
                    for (p, ng) in pairs {
                        let loss = max_margin_loss(&params, &p, &ng, margin)?;
                        if !loss.is_finite() {
                            return Err(KgError::Diverged {
                                epoch,
                                message: format!("non-finite loss on triple {:?}", p.key()),
                            });
                        }
                        if let Some(grad) = max_margin_gradient(&params, &p, &ng, margin)? {
                            adagrad_step(&mut params, &grad, config.alpha, config.adagrad_eps);
                            project_entities(&mut params, &grad);
                        }
                    }
                }
            }
        }
        if epoch % config.validate_every == 0 {
            let current = validation_metric(&params, split)?;
            history.push((epoch, current));
            if current > best_score {
                best_score = current;
                best_epoch = epoch;
                best_params = params.clone();
            }
            if current <= previous_score {
                stop_reason = StopReason::EarlyStop;
                break;
            }
            previous_score = current;
        }
    }

    if history.is_empty() {
        // Never validated (max_iter < validate_every): the final
        // parameters are the best known.
        best_params = params;
        best_epoch = epochs_run;
    }

    Ok((
        best_params,
        TrainReport {
            epochs_run,
            validation_history: history,
            best_epoch,
            stop_reason,
        },
    ))
}
