//! Alternating optimisation: rebuild a small boundary tree under the current
//! embedding, then take gradient steps on fresh samples with the tree structure
//! frozen, until the mean loss stops changing.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::soft_path::{loss_and_grad, SiblingSet};
use crate::transform::{adam_step, init_params, AdamConfig, AdamState, LayerParams, MlpArchitecture, ParameterSet};
use crate::tree::{BoundaryTree, Embedder, Sample};
use crate::{Error, Result};

/// Which tree the per-iteration test error is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalTree {
    /// The small tree of the current iteration, re-embedded with the updated weights.
    #[default]
    Iteration,
    /// A tree rebuilt over the whole training set.
    FullTrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: MlpArchitecture,
    /// Samples presented to each rebuilt tree.
    pub tree_build_samples: usize,
    /// Gradient steps per outer iteration, one fresh sample each.
    pub grad_steps_per_iter: usize,
    pub convergence_rel_threshold: f64,
    pub max_outer_iters: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub max_children: Option<usize>,
    pub siblings: SiblingSet,
    pub eval_tree: EvalTree,
}

impl TrainConfig {
    /// Defaults: threshold 1e-3, at most 200 outer iterations, Adam defaults,
    /// unlimited fan-out.
    pub fn new(arch: MlpArchitecture, tree_build_samples: usize, grad_steps_per_iter: usize) -> Self {
        TrainConfig {
            arch,
            tree_build_samples,
            grad_steps_per_iter,
            convergence_rel_threshold: 1e-3,
            max_outer_iters: 200,
            adam: AdamConfig::default(),
            seed: 0,
            max_children: None,
            siblings: SiblingSet::default(),
            eval_tree: EvalTree::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tree_build_samples == 0 {
            return Err(Error::usage("tree_build_samples must be positive"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::usage("max_outer_iters must be positive"));
        }
        if self.convergence_rel_threshold.is_nan() || self.convergence_rel_threshold <= 0.0 {
            return Err(Error::usage("convergence threshold must be positive"));
        }
        if self.max_children == Some(0) {
            return Err(Error::usage("max_children must be positive"));
        }
        Ok(())
    }
}

/// Metrics of one completed outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iter: usize,
    /// Mean loss over the iteration's gradient steps (0 when there are none).
    pub mean_loss: f64,
    /// Size of the tree built at the start of the iteration.
    pub nodes: usize,
    pub test_error: Option<f64>,
    /// Gradient steps whose loss hit the probability clamp.
    pub clamps: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<IterationRecord>,
}

impl TrainLog {
    pub fn total_clamps(&self) -> usize {
        self.records.iter().map(|r| r.clamps).sum()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Hooks for timing and progress reporting.
pub trait TrainObserver {
    /// Seconds on some monotonic clock. The default clock always reads 0.
    fn now(&mut self) -> f64 {
        0.0
    }

    fn on_iteration(&mut self, _record: &IterationRecord, _params: &ParameterSet) {}
}

/// Observer that ignores everything.
#[derive(Debug, Default)]
pub struct Silent;

impl TrainObserver for Silent {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParameterSet,
    pub adam: AdamState,
    pub log: TrainLog,
    pub stop: StopReason,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Invalid(#[from] Error),
    /// Training produced a non-finite loss or gradient. `last_good` holds the
    /// parameters before the failing step.
    #[error("training diverged at iteration {iter}, step {step}: {error}")]
    Diverged {
        error: Error,
        iter: usize,
        step: usize,
        last_good: Box<ParameterSet>,
        log: TrainLog,
    },
}

/// True when the relative change of the last two iteration-mean losses is below
/// `threshold`. Needs at least two records.
pub fn converged(log: &TrainLog, threshold: f64) -> bool {
    let n = log.records.len();
    if n < 2 {
        return false;
    }
    let prev = log.records[n - 2].mean_loss;
    let cur = log.records[n - 1].mean_loss;
    (cur - prev).abs() / f64::max(1e-12, prev) < threshold
}

/// Cycles through a seeded permutation of sample indices. Every request is served
/// from a single permutation, so the samples within one iteration never repeat.
struct SampleStream {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl SampleStream {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        SampleStream { order, pos: 0, rng }
    }

    fn take(&mut self, k: usize) -> &[usize] {
        if self.pos + k > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let s = &self.order[self.pos..self.pos + k];
        self.pos += k;
        s
    }
}

/// Trains from freshly initialised weights (seeded by `config.seed`).
pub fn train(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> core::result::Result<TrainOutcome, TrainError> {
    let params = init_params(&config.arch, config.seed);
    train_from(params, train_set, test_set, config, observer)
}

/// Trains starting from `params` with fresh optimizer state.
pub fn train_from(
    params: ParameterSet,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> core::result::Result<TrainOutcome, TrainError> {
    let adam = AdamState::new(config.adam, &config.arch);
    train_resume(params, adam, train_set, test_set, config, observer)
}

/// Trains starting from `params` and previously accumulated Adam moments. The
/// hyperparameters in `config.adam` replace those stored in `adam`.
pub fn train_resume(
    mut params: ParameterSet,
    mut adam: AdamState,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> core::result::Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::usage("training set is empty").into());
    }
    if params.architecture() != &config.arch {
        return Err(Error::usage("initial parameters do not match the configured architecture").into());
    }
    if train_set.feature_dim() != config.arch.input_dim() {
        return Err(Error::dimension("training features", config.arch.input_dim(), train_set.feature_dim()).into());
    }
    if let Some(t) = test_set {
        if t.feature_dim() != train_set.feature_dim() && !t.is_empty() {
            return Err(Error::dimension("test features", train_set.feature_dim(), t.feature_dim()).into());
        }
    }
    let per_iter = config.tree_build_samples + config.grad_steps_per_iter;
    if train_set.len() <= per_iter {
        return Err(Error::usage(format!(
            "training set of {} samples must exceed {} samples per iteration",
            train_set.len(),
            per_iter
        ))
        .into());
    }
    let classes = train_set.classes().max(test_set.map_or(0, |t| t.classes()));
    let samples = train_set.samples();
    let mut stream = SampleStream::new(samples.len(), config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let fresh = AdamState::new(config.adam, &config.arch);
    let same_shape = |a: &[LayerParams], b: &[LayerParams]| {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| x.weight.shape() == y.weight.shape() && x.bias.shape() == y.bias.shape())
    };
    if !same_shape(&adam.first_moment, &fresh.first_moment) || !same_shape(&adam.second_moment, &fresh.second_moment) {
        return Err(Error::usage("optimizer state does not match the configured architecture").into());
    }
    adam.config = config.adam;
    let mut log = TrainLog::default();

    for iter in 1..=config.max_outer_iters {
        let started = observer.now();
        let picked = stream.take(per_iter).to_vec();
        let (build_idx, grad_idx) = picked.split_at(config.tree_build_samples);

        let build: Vec<Sample> = build_idx.iter().map(|&i| samples[i].clone()).collect();
        let mut tree = BoundaryTree::build(&build, &params, config.max_children, classes)?;
        let nodes = tree.len();

        let mut loss_sum = 0.0;
        let mut clamps = 0;
        for (step, &i) in grad_idx.iter().enumerate() {
            let diverged = |error: Error, params: &ParameterSet, log: &TrainLog| TrainError::Diverged {
                error,
                iter,
                step: step + 1,
                last_good: Box::new(params.clone()),
                log: log.clone(),
            };
            let r = match loss_and_grad(&tree, &params, &samples[i], config.siblings) {
                Ok(r) => r,
                Err(e) => return Err(diverged(e, &params, &log)),
            };
            if !r.loss.is_finite() {
                return Err(diverged(Error::NonFinite(format!("loss = {}", r.loss)), &params, &log));
            }
            if let Err(e) = adam_step(&mut params, &r.grads, &mut adam) {
                return Err(diverged(e, &params, &log));
            }
            loss_sum += r.loss;
            clamps += usize::from(r.clamped);
        }
        let mean_loss = if grad_idx.is_empty() {
            0.0
        } else {
            loss_sum / grad_idx.len() as f64
        };

        let test_error = match test_set.filter(|t| !t.is_empty()) {
            None => None,
            Some(t) => Some(match config.eval_tree {
                EvalTree::Iteration => {
                    tree.refresh_cache(&params);
                    error_rate(&tree, &params, t)
                }
                EvalTree::FullTrain => evaluate(&params, train_set, t, config.max_children)?.test_error,
            }),
        };

        let record = IterationRecord {
            iter,
            mean_loss,
            nodes,
            test_error,
            clamps,
            seconds: observer.now() - started,
        };
        observer.on_iteration(&record, &params);
        log.records.push(record);
        if converged(&log, config.convergence_rel_threshold) {
            return Ok(TrainOutcome {
                params,
                adam,
                log,
                stop: StopReason::Converged,
            });
        }
    }
    Ok(TrainOutcome {
        params,
        adam,
        log,
        stop: StopReason::MaxIterations,
    })
}

/// Fraction of `test` samples misclassified by hard traversal of `tree`.
pub fn error_rate<E: Embedder>(tree: &BoundaryTree, embed: &E, test: &Dataset) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let wrong = test
        .samples()
        .iter()
        .filter(|s| tree.predict(embed, &s.features) != s.label)
        .count();
    wrong as f64 / test.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub test_error: f64,
    pub nodes: usize,
}

/// Builds a tree over the whole training set with `embed` and measures its hard
/// classification error on `test`.
pub fn evaluate<E: Embedder>(
    embed: &E,
    train_set: &Dataset,
    test_set: &Dataset,
    max_children: Option<usize>,
) -> Result<Evaluation> {
    let tree = build_full_tree(embed, train_set, test_set.classes(), max_children)?;
    Ok(Evaluation {
        test_error: error_rate(&tree, embed, test_set),
        nodes: tree.len(),
    })
}

/// Tree over every training sample, in dataset order.
pub fn build_full_tree<E: Embedder>(
    embed: &E,
    train_set: &Dataset,
    extra_classes: usize,
    max_children: Option<usize>,
) -> Result<BoundaryTree> {
    let classes = train_set.classes().max(extra_classes);
    BoundaryTree::build(train_set.samples(), embed, max_children, classes)
}
