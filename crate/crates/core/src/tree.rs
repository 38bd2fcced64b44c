//! Online boundary tree over raw samples.
//!
//! Queries descend greedily: at each node the candidates are the node itself and
//! its children, and the query moves to the candidate closest in embedding space.
//! Descent stops when the node beats all of its children or when a leaf is
//! reached. Training inserts a sample as a child of the stopping node only when the
//! stopping node's label is wrong, so every edge joins two different classes.

use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::diff::kernels;
use crate::{Error, Result};

/// Arena index of a tree node. The root is always `0`, and a child always has a
/// larger id than its parent.
pub type NodeId = usize;

pub const ROOT: NodeId = 0;

/// Maps raw feature vectors into the space where distances are measured.
pub trait Embedder {
    /// Version of the mapping. Embeddings cached under one stamp are reused only
    /// while the embedder reports the same stamp.
    fn stamp(&self) -> u64;

    /// Expected input length, if fixed.
    fn input_dim(&self) -> Option<usize>;

    fn embed(&self, x: &[f64]) -> Vec<f64>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn stamp(&self) -> u64 {
        (**self).stamp()
    }

    fn input_dim(&self) -> Option<usize> {
        (**self).input_dim()
    }

    fn embed(&self, x: &[f64]) -> Vec<f64> {
        (**self).embed(x)
    }
}

/// Raw features are used directly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Embedder for Identity {
    fn stamp(&self) -> u64 {
        0
    }

    fn input_dim(&self) -> Option<usize> {
        None
    }

    fn embed(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// A feature vector with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Sample { features, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub sample: Sample,
    pub parent: Option<NodeId>,
    /// In insertion order, hence ascending ids.
    pub children: Vec<NodeId>,
}

/// Why a traversal stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    /// The current node was closer than all of its children.
    Stayed,
    /// A node without children was reached.
    Leaf,
}

/// One greedy step: distances from the query to each candidate and the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct HardDecision {
    pub node: NodeId,
    /// The decision node first (unless excluded by the fan-out bound), then its children.
    pub candidates: Vec<NodeId>,
    pub distances: Vec<f64>,
    pub chosen: NodeId,
}

/// Record of a hard greedy traversal.
#[derive(Debug, Clone, PartialEq)]
pub struct HardTrace {
    pub decisions: Vec<HardDecision>,
    pub final_node: NodeId,
    pub stop: StopMode,
}

impl HardTrace {
    /// Nodes visited from the root to the final node.
    pub fn visited(&self) -> Vec<NodeId> {
        let mut v = vec![ROOT];
        for d in &self.decisions {
            if d.chosen != d.node {
                v.push(d.chosen);
            }
        }
        v
    }
}

/// Index of the smallest distance; ties go to the lowest node id.
pub(crate) fn argmin_lowest_id(candidates: &[NodeId], distances: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..candidates.len() {
        let better = distances[i] < distances[best]
            || (distances[i] == distances[best] && candidates[i] < candidates[best]);
        if better {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
struct EmbeddingCache {
    stamp: u64,
    rows: Vec<Vec<f64>>,
}

/// Arena-backed boundary tree for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTree {
    nodes: Vec<TreeNode>,
    max_children: Option<usize>,
    classes: usize,
    dim: usize,
    cache: Option<EmbeddingCache>,
}

impl BoundaryTree {
    /// One-node tree rooted at `first`.
    ///
    /// `max_children = Some(k)` bounds the fan-out: a node with `k` children is no
    /// longer a candidate for its own decision, so queries must descend past it.
    pub fn new(first: Sample, max_children: Option<usize>, classes: usize) -> Result<Self> {
        if first.label >= classes {
            return Err(Error::usage(format!("label {} not below class count {classes}", first.label)));
        }
        if max_children == Some(0) {
            return Err(Error::usage("max_children must be positive"));
        }
        let dim = first.features.len();
        Ok(BoundaryTree {
            nodes: vec![TreeNode {
                sample: first,
                parent: None,
                children: Vec::new(),
            }],
            max_children,
            classes,
            dim,
            cache: None,
        })
    }

    /// Rebuilds a tree from `(parent, sample)` pairs in id order, as stored in a
    /// snapshot. Validates the links and the edge-boundary property.
    pub fn from_parts(
        parts: Vec<(Option<NodeId>, Sample)>,
        max_children: Option<usize>,
        classes: usize,
    ) -> Result<Self> {
        let mut iter = parts.into_iter();
        let Some((root_parent, root)) = iter.next() else {
            return Err(Error::usage("a tree needs at least one node"));
        };
        if root_parent.is_some() {
            return Err(Error::usage("node 0 must be the root"));
        }
        let mut tree = BoundaryTree::new(root, max_children, classes)?;
        for (id, (parent, sample)) in iter.enumerate().map(|(i, p)| (i + 1, p)) {
            let Some(parent) = parent else {
                return Err(Error::usage(format!("node {id} has no parent but is not the root")));
            };
            if parent >= id {
                return Err(Error::usage(format!("node {id} has parent {parent}, expected a smaller id")));
            }
            tree.check_sample(&sample)?;
            if tree.nodes[parent].sample.label == sample.label {
                return Err(Error::usage(format!(
                    "edge {parent} -> {id} joins two nodes labelled {}",
                    sample.label
                )));
            }
            tree.attach(parent, sample);
        }
        Ok(tree)
    }

    /// Builds a tree online: the first sample is the root, the rest go through
    /// [`BoundaryTree::insert_if_wrong`] in order.
    pub fn build<E: Embedder>(
        samples: &[Sample],
        embed: &E,
        max_children: Option<usize>,
        classes: usize,
    ) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::usage("cannot build a tree from no samples"));
        };
        if let Some(d) = embed.input_dim() {
            if first.features.len() != d {
                return Err(Error::dimension("sample features", d, first.features.len()));
            }
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != first.features.len() {
                return Err(Error::usage(format!(
                    "sample {i} has {} features, expected {}",
                    s.features.len(),
                    first.features.len()
                )));
            }
        }
        let mut tree = BoundaryTree::new(first.clone(), max_children, classes)?;
        tree.refresh_cache(embed);
        for s in &samples[1..] {
            tree.insert_if_wrong(embed, s.clone())?;
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn max_children(&self) -> Option<usize> {
        self.max_children
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn label(&self, id: NodeId) -> usize {
        self.nodes[id].sample.label
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    /// Parent-child pairs in child-id order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| n.parent.map(|p| (p, id)))
    }

    /// Candidate set of a decision at `id`: the node itself (unless its fan-out is
    /// full) followed by its children. Empty for a leaf.
    pub fn candidates(&self, id: NodeId) -> Vec<NodeId> {
        let children = &self.nodes[id].children;
        if children.is_empty() {
            return Vec::new();
        }
        let full = self.max_children.is_some_and(|k| children.len() >= k);
        let mut c = Vec::with_capacity(children.len() + 1);
        if !full {
            c.push(id);
        }
        c.extend_from_slice(children);
        c
    }

    /// Checks parent/child link consistency and that every edge crosses classes.
    pub fn check_invariants(&self) -> Result<()> {
        if self.nodes[ROOT].parent.is_some() {
            return Err(Error::usage("root has a parent"));
        }
        for (id, n) in self.nodes.iter().enumerate() {
            if n.sample.label >= self.classes {
                return Err(Error::usage(format!("node {id} label out of range")));
            }
            if id != ROOT {
                let Some(p) = n.parent else {
                    return Err(Error::usage(format!("node {id} is detached")));
                };
                if !self.nodes[p].children.contains(&id) {
                    return Err(Error::usage(format!("node {id} missing from children of {p}")));
                }
                if self.nodes[p].sample.label == n.sample.label {
                    return Err(Error::usage(format!("edge {p} -> {id} does not cross classes")));
                }
            }
            for &c in &n.children {
                if self.nodes[c].parent != Some(id) {
                    return Err(Error::usage(format!("child {c} of {id} points elsewhere")));
                }
            }
        }
        Ok(())
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.label >= self.classes {
            return Err(Error::usage(format!("label {} not below class count {}", s.label, self.classes)));
        }
        if s.features.len() != self.dim {
            return Err(Error::dimension("sample features", self.dim, s.features.len()));
        }
        Ok(())
    }

    fn attach(&mut self, parent: NodeId, sample: Sample) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            sample,
            parent: Some(parent),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Recomputes every node's cached embedding under `embed`, unless the cache
    /// already carries `embed`'s stamp.
    pub fn refresh_cache<E: Embedder>(&mut self, embed: &E) {
        let stamp = embed.stamp();
        if self.cache.as_ref().is_some_and(|c| c.stamp == stamp && c.rows.len() == self.nodes.len()) {
            return;
        }
        let rows = self.nodes.iter().map(|n| embed.embed(&n.sample.features)).collect();
        self.cache = Some(EmbeddingCache { stamp, rows });
    }

    /// Drops all cached embeddings.
    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Whether cached embeddings are valid for `embed`.
    pub fn cache_matches<E: Embedder>(&self, embed: &E) -> bool {
        self.cache.as_ref().is_some_and(|c| c.stamp == embed.stamp())
    }

    fn embedding_of<E: Embedder>(&self, id: NodeId, embed: &E) -> Cow<'_, [f64]> {
        match &self.cache {
            Some(c) if c.stamp == embed.stamp() => Cow::Borrowed(&c.rows[id]),
            _ => Cow::Owned(embed.embed(&self.nodes[id].sample.features)),
        }
    }

    /// Greedy descent for a raw query `y`.
    pub fn traverse<E: Embedder>(&self, embed: &E, y: &[f64]) -> HardTrace {
        let q = embed.embed(y);
        self.traverse_embedded(embed, &q)
    }

    /// Greedy descent for a query already mapped by `embed`.
    pub fn traverse_embedded<E: Embedder>(&self, embed: &E, q: &[f64]) -> HardTrace {
        let mut cur = ROOT;
        let mut decisions = Vec::new();
        loop {
            let candidates = self.candidates(cur);
            if candidates.is_empty() {
                return HardTrace {
                    decisions,
                    final_node: cur,
                    stop: StopMode::Leaf,
                };
            }
            let distances: Vec<f64> = candidates
                .iter()
                .map(|&c| kernels::l2(&self.embedding_of(c, embed), q))
                .collect();
            let chosen = candidates[argmin_lowest_id(&candidates, &distances)];
            decisions.push(HardDecision {
                node: cur,
                candidates,
                distances,
                chosen,
            });
            if chosen == cur {
                return HardTrace {
                    decisions,
                    final_node: cur,
                    stop: StopMode::Stayed,
                };
            }
            cur = chosen;
        }
    }

    /// Label of the node where greedy descent stops.
    pub fn predict<E: Embedder>(&self, embed: &E, y: &[f64]) -> usize {
        self.label(self.traverse(embed, y).final_node)
    }

    /// Inserts `query` under its stopping node when that node's label is wrong.
    /// Returns whether the tree grew.
    pub fn insert_if_wrong<E: Embedder>(&mut self, embed: &E, query: Sample) -> Result<bool> {
        self.check_sample(&query)?;
        let cache_live = self.cache_matches(embed) && self.cache.as_ref().unwrap().rows.len() == self.nodes.len();
        let q = embed.embed(&query.features);
        let trace = self.traverse_embedded(embed, &q);
        if self.label(trace.final_node) == query.label {
            return Ok(false);
        }
        self.attach(trace.final_node, query);
        if cache_live {
            self.cache.as_mut().unwrap().rows.push(q);
        } else {
            self.cache = None;
        }
        Ok(true)
    }
}
