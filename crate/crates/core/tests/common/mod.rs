//! Reference implementations used as test oracles. Everything here is written
//! independently of the library's traversal, softmax and network code.

#![allow(dead_code)]

use betree_core::diff::Tensor;
use betree_core::transform::{Activation, LayerParams, MlpArchitecture, ParameterSet};
use betree_core::tree::{BoundaryTree, Identity, NodeId, Sample};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Plain nested-loop forward pass of a fully connected network.
pub fn oracle_embed(params: &ParameterSet, x: &[f64]) -> Vec<f64> {
    let act = params.architecture().activation();
    let n = params.layers().len();
    let mut h = x.to_vec();
    for (k, layer) in params.layers().iter().enumerate() {
        let dims = layer.weight.shape().dims();
        let (rows, cols) = (dims[0], dims[1]);
        let w = layer.weight.data();
        let mut out = vec![0.0; rows];
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = layer.bias.data()[r];
            for c in 0..cols {
                s += w[r * cols + c] * h[c];
            }
            *o = if k + 1 == n {
                s
            } else {
                match act {
                    Activation::Relu => s.max(0.0),
                    Activation::Tanh => s.tanh(),
                }
            };
        }
        h = out;
    }
    h
}

pub fn oracle_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Uniform weights in `[-scale, scale]` and biases in `[-0.1, 0.1]`.
pub fn random_params(rng: &mut ChaCha8Rng, sizes: &[usize], act: Activation, scale: f64) -> ParameterSet {
    let arch = MlpArchitecture::new(sizes.to_vec(), act).unwrap();
    let layers = arch
        .layer_shapes()
        .map(|(out, inp)| {
            let w: Vec<f64> = (0..out * inp).map(|_| rng.random_range(-scale..scale)).collect();
            let b: Vec<f64> = (0..out).map(|_| rng.random_range(-0.1..0.1)).collect();
            LayerParams {
                weight: Tensor::matrix(out, inp, w).unwrap(),
                bias: Tensor::vector(b),
            }
        })
        .collect();
    ParameterSet::from_layers(arch, layers).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A tree of exactly `nodes` nodes grown by inserting random labelled points that
/// the current tree misclassifies, so every edge joins different labels.
pub fn random_tree(
    rng: &mut ChaCha8Rng,
    nodes: usize,
    dim: usize,
    classes: usize,
    max_children: Option<usize>,
) -> BoundaryTree {
    loop {
        let first = Sample::new(random_point(rng, dim), rng.random_range(0..classes));
        let mut tree = BoundaryTree::new(first, max_children, classes).unwrap();
        for _ in 0..100 * nodes {
            if tree.len() == nodes {
                return tree;
            }
            let s = Sample::new(random_point(rng, dim), rng.random_range(0..classes));
            tree.insert_if_wrong(&Identity, s).unwrap();
        }
        if tree.len() == nodes {
            return tree;
        }
    }
}

/// Candidate set of a stochastic step from `n`: the node itself unless its fan-out
/// is exhausted, then its children. Empty at a leaf.
pub fn oracle_candidates(tree: &BoundaryTree, n: NodeId) -> Vec<NodeId> {
    let children = &tree.nodes()[n].children;
    if children.is_empty() {
        return Vec::new();
    }
    let full = tree.max_children().is_some_and(|m| children.len() >= m);
    let mut c = if full { Vec::new() } else { vec![n] };
    c.extend(children.iter().copied());
    c
}

/// Transition probabilities `softmax(-d)` computed in plain floating point.
pub fn oracle_softmax(dists: &[f64]) -> Vec<f64> {
    let m = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = dists.iter().map(|d| (-(d - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Every node sequence a stochastic traversal can produce, with its probability.
/// A traversal stops when it stays at a node or enters a leaf.
pub fn enumerate_paths(tree: &BoundaryTree, embed: &dyn Fn(&[f64]) -> Vec<f64>, y: &[f64]) -> Vec<(Vec<NodeId>, f64)> {
    let q = embed(y);
    let emb: Vec<Vec<f64>> = tree.nodes().iter().map(|n| embed(&n.sample.features)).collect();
    let mut out = Vec::new();
    let mut stack = vec![(vec![0usize], 1.0f64)];
    while let Some((path, p)) = stack.pop() {
        let cur = *path.last().unwrap();
        let cands = oracle_candidates(tree, cur);
        if cands.is_empty() {
            out.push((path, p));
            continue;
        }
        let probs = oracle_softmax(&cands.iter().map(|&c| oracle_dist(&emb[c], &q)).collect::<Vec<_>>());
        for (&c, &pc) in cands.iter().zip(&probs) {
            if c == cur {
                out.push((path.clone(), p * pc));
            } else {
                let mut next = path.clone();
                next.push(c);
                stack.push((next, p * pc));
            }
        }
    }
    out
}

/// Expected one-hot label of the final node over all stochastic traversals.
pub fn full_class_expectation(tree: &BoundaryTree, embed: &dyn Fn(&[f64]) -> Vec<f64>, y: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; tree.classes()];
    for (path, p) in enumerate_paths(tree, embed, y) {
        e[tree.nodes()[*path.last().unwrap()].sample.label] += p;
    }
    e
}

/// Node count of a boundary tree grown over `samples` in order with raw features,
/// using an independent greedy traversal.
pub fn replay_node_count(samples: &[Sample]) -> usize {
    let mut points: Vec<(&[f64], usize)> = vec![(&samples[0].features, samples[0].label)];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    for s in &samples[1..] {
        let mut cur = 0;
        loop {
            if children[cur].is_empty() {
                break;
            }
            let mut best = cur;
            let mut best_d = oracle_dist(points[cur].0, &s.features);
            for &c in &children[cur] {
                let d = oracle_dist(points[c].0, &s.features);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if best == cur {
                break;
            }
            cur = best;
        }
        if points[cur].1 != s.label {
            points.push((&s.features, s.label));
            children.push(Vec::new());
            children[cur].push(points.len() - 1);
        }
    }
    points.len()
}

/// Every parent/child pair carries different labels.
pub fn edges_cross_classes(tree: &BoundaryTree) -> bool {
    tree.nodes()
        .iter()
        .all(|n| n.parent.is_none_or(|p| tree.nodes()[p].sample.label != n.sample.label))
}
