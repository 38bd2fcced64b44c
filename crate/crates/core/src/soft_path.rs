//! Softmax relaxation of the greedy traversal.
//!
//! At each decision the query's transition probability to candidate `j` is
//! `softmax(-d_j)` over the candidate set, with `d` the Euclidean distance between
//! embeddings. The greedy path is the one the hard traversal takes. The class
//! prediction aggregates the probabilities of the last decision's candidates by
//! label and renormalizes; the log-probabilities of the earlier transitions are added
//! to every class score, so they cancel after normalization but stay on the tape.
//!
//! Query and stored samples are embedded with the same [`BoundParams`] on one tape,
//! so gradients from every stored sample on the path flow into the shared weights.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::diff::{NodeRef, Tape, Tensor};
use crate::transform::{forward, BoundParams, ParamGrads, ParameterSet};
use crate::tree::{argmin_lowest_id, BoundaryTree, NodeId, Sample, StopMode, ROOT};
use crate::{Error, Result};

/// Probabilities below this are clamped inside the loss's logarithm.
pub const LOG_CLAMP: f64 = 1e-30;

/// One softmax decision on the greedy path.
#[derive(Debug, Clone)]
pub struct Decision {
    pub node: NodeId,
    /// The decision node first (unless excluded by the fan-out bound), then its children.
    pub candidates: Vec<NodeId>,
    pub distances: Vec<NodeRef>,
    pub log_probs: Vec<NodeRef>,
    /// Index into `candidates` of the transition taken.
    pub chosen: usize,
}

impl Decision {
    pub fn chosen_id(&self) -> NodeId {
        self.candidates[self.chosen]
    }
}

/// Greedy path with its tape handles.
#[derive(Debug, Clone)]
pub struct PathTrace {
    pub decisions: Vec<Decision>,
    pub final_node: NodeId,
    pub stop: StopMode,
    /// Embedding of the query.
    pub query: NodeRef,
}

impl PathTrace {
    /// Nodes visited from the root to the final node.
    pub fn visited(&self) -> Vec<NodeId> {
        let mut v = vec![ROOT];
        for d in &self.decisions {
            if d.chosen_id() != d.node {
                v.push(d.chosen_id());
            }
        }
        v
    }
}

/// Which nodes' transition probabilities form the class prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SiblingSet {
    /// All candidates of the last decision, minus the decision node when the path
    /// ended by descending into a leaf.
    #[default]
    LastDecision,
    /// The final node and its siblings in the tree, weighted by the decision at
    /// their parent. Falls back to [`SiblingSet::LastDecision`] when the final node
    /// is the root.
    TreeSiblings,
}

/// Greedy path for query `y`, recording embeddings, distances and transition
/// log-probabilities on `tape`.
///
/// The transition followed at each decision is the closest candidate with ties to
/// the lowest id, i.e. the argmax of the softmax; it is picked from the distances so
/// that the node sequence is exactly that of [`BoundaryTree::traverse`].
pub fn greedy_path<'a>(
    tape: &mut Tape<'a>,
    tree: &'a BoundaryTree,
    params: &BoundParams,
    y: &'a [f64],
) -> Result<PathTrace> {
    let query = forward(tape, params, y)?;
    let mut embedded: Vec<Option<NodeRef>> = vec![None; tree.len()];
    let mut decisions = Vec::new();
    let mut cur = ROOT;
    loop {
        let candidates = tree.candidates(cur);
        if candidates.is_empty() {
            return Ok(PathTrace {
                decisions,
                final_node: cur,
                stop: StopMode::Leaf,
                query,
            });
        }
        let mut distances = Vec::with_capacity(candidates.len());
        for &c in &candidates {
            let e = match embedded[c] {
                Some(e) => e,
                None => {
                    let e = forward(tape, params, &tree.node(c).sample.features)?;
                    embedded[c] = Some(e);
                    e
                }
            };
            distances.push(tape.l2_distance(e, query)?);
        }
        let log_probs = tape.neg_dist_log_softmax(&distances)?;
        let values: Vec<f64> = distances.iter().map(|d| tape.scalar(*d)).collect();
        let chosen = argmin_lowest_id(&candidates, &values);
        let next = candidates[chosen];
        decisions.push(Decision {
            node: cur,
            candidates,
            distances,
            log_probs,
            chosen,
        });
        if next == cur {
            return Ok(PathTrace {
                decisions,
                final_node: cur,
                stop: StopMode::Stayed,
                query,
            });
        }
        cur = next;
    }
}

/// Log-probability of the greedy path: the sum of the chosen transitions'
/// log-probabilities (zero for an empty path).
pub fn path_log_prob(tape: &mut Tape<'_>, trace: &PathTrace) -> Result<NodeRef> {
    let terms: Vec<NodeRef> = trace.decisions.iter().map(|d| d.log_probs[d.chosen]).collect();
    match tape.add_all(&terms)? {
        Some(n) => Ok(n),
        None => Ok(tape.constant(Tensor::scalar(0.0))),
    }
}

/// Per-class log-probabilities. `None` marks a class with no mass (`-inf`).
#[derive(Debug, Clone)]
pub struct ClassLogProbs {
    pub nodes: Vec<Option<NodeRef>>,
}

impl ClassLogProbs {
    pub fn log_prob(&self, tape: &Tape<'_>, class: usize) -> f64 {
        self.nodes[class].map_or(f64::NEG_INFINITY, |n| tape.scalar(n))
    }

    pub fn probs(&self, tape: &Tape<'_>) -> Vec<f64> {
        (0..self.nodes.len()).map(|c| libm::exp(self.log_prob(tape, c))).collect()
    }

    pub fn classes(&self) -> usize {
        self.nodes.len()
    }
}

/// Groups transition log-probabilities by label and normalizes:
/// `log(s_c / sum(s))` with `s_c = sum of p_k over members with label c`.
/// `prefix`, if given, is added to every class score before normalizing.
pub fn aggregate_class_log_probs(
    tape: &mut Tape<'_>,
    log_probs: &[NodeRef],
    labels: &[usize],
    classes: usize,
    prefix: Option<NodeRef>,
) -> Result<ClassLogProbs> {
    if log_probs.len() != labels.len() || log_probs.is_empty() {
        return Err(Error::usage(format!(
            "aggregation over {} probabilities and {} labels",
            log_probs.len(),
            labels.len()
        )));
    }
    let mut scores: Vec<Option<NodeRef>> = vec![None; classes];
    for (c, score) in scores.iter_mut().enumerate() {
        let members: Vec<NodeRef> = log_probs
            .iter()
            .zip(labels)
            .filter(|(_, l)| **l == c)
            .map(|(n, _)| *n)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut s = if members.len() == 1 {
            members[0]
        } else {
            tape.logsumexp(&members)?
        };
        if let Some(p) = prefix {
            s = tape.add(p, s)?;
        }
        *score = Some(s);
    }
    if let Some(&bad) = labels.iter().find(|l| **l >= classes) {
        return Err(Error::usage(format!("label {bad} not below class count {classes}")));
    }
    let present: Vec<NodeRef> = scores.iter().flatten().copied().collect();
    let total = tape.logsumexp(&present)?;
    let nodes = scores
        .into_iter()
        .map(|s| s.map(|s| tape.sub(s, total)).transpose())
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassLogProbs { nodes })
}

/// Class log-probabilities of the tree's soft prediction along `trace`.
pub fn class_log_prob(
    tape: &mut Tape<'_>,
    trace: &PathTrace,
    tree: &BoundaryTree,
    siblings: SiblingSet,
) -> Result<ClassLogProbs> {
    let classes = tree.classes();
    let Some(last) = trace.decisions.len().checked_sub(1) else {
        // a single reachable node predicts its own label with certainty
        let mut nodes = vec![None; classes];
        nodes[tree.label(trace.final_node)] = Some(tape.constant(Tensor::scalar(0.0)));
        return Ok(ClassLogProbs { nodes });
    };

    let mut agg = last;
    let mut drop_decision_node = trace.stop == StopMode::Leaf;
    if siblings == SiblingSet::TreeSiblings && trace.stop == StopMode::Stayed {
        if let Some(parent) = tree.parent(trace.final_node) {
            if let Some(i) = trace
                .decisions
                .iter()
                .rposition(|d| d.node == parent && d.chosen_id() == trace.final_node)
            {
                agg = i;
                drop_decision_node = true;
            }
        }
    }

    let d = &trace.decisions[agg];
    let mut members = Vec::with_capacity(d.candidates.len());
    let mut labels = Vec::with_capacity(d.candidates.len());
    for (k, &c) in d.candidates.iter().enumerate() {
        if drop_decision_node && c == d.node {
            continue;
        }
        members.push(d.log_probs[k]);
        labels.push(tree.label(c));
    }
    let before: Vec<NodeRef> = trace.decisions[..agg]
        .iter()
        .map(|d| d.log_probs[d.chosen])
        .collect();
    let prefix = tape.add_all(&before)?;
    aggregate_class_log_probs(tape, &members, &labels, classes, prefix)
}

/// Cross-entropy term of one query.
#[derive(Debug, Clone, Copy)]
pub struct LossTerm {
    pub node: NodeRef,
    /// The true class probability was below [`LOG_CLAMP`]; the loss is the constant
    /// `-ln(LOG_CLAMP)` and carries no gradient.
    pub clamped: bool,
}

/// `-log p(true_label)`, clamped at [`LOG_CLAMP`].
pub fn loss(tape: &mut Tape<'_>, class_log_probs: &ClassLogProbs, true_label: usize) -> Result<LossTerm> {
    if true_label >= class_log_probs.classes() {
        return Err(Error::usage(format!(
            "label {true_label} not below class count {}",
            class_log_probs.classes()
        )));
    }
    let floor = libm::log(LOG_CLAMP);
    match class_log_probs.nodes[true_label] {
        Some(n) if tape.scalar(n) >= floor => Ok(LossTerm {
            node: tape.neg(n),
            clamped: false,
        }),
        _ => Ok(LossTerm {
            node: tape.constant(Tensor::scalar(-floor)),
            clamped: true,
        }),
    }
}

/// Loss value and parameter gradients for one training sample against a frozen tree.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grads: ParamGrads,
    pub clamped: bool,
}

/// Builds a fresh tape for `sample`, runs the greedy path, the class prediction and
/// the loss, and back-propagates into every parameter.
pub fn loss_and_grad(
    tree: &BoundaryTree,
    params: &ParameterSet,
    sample: &Sample,
    siblings: SiblingSet,
) -> Result<LossAndGrad> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let trace = greedy_path(&mut tape, tree, &bound, &sample.features)?;
    let clp = class_log_prob(&mut tape, &trace, tree, siblings)?;
    let term = loss(&mut tape, &clp, sample.label)?;
    let mut grads = tape.backward(term.node)?;
    Ok(LossAndGrad {
        loss: tape.scalar(term.node),
        grads: bound.gradients(&tape, &mut grads),
        clamped: term.clamped,
    })
}
