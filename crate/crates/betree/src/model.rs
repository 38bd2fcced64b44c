use betree_core::transform::ParameterSet;
use betree_core::tree::{Embedder, Identity};

/// The embedding used by a command: raw features or a trained network.
#[derive(Debug, Clone)]
pub enum Model {
    Identity,
    Mlp(ParameterSet),
}

impl Model {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            Model::Identity => input_dim,
            Model::Mlp(p) => p.architecture().output_dim(),
        }
    }
}

impl Embedder for Model {
    fn stamp(&self) -> u64 {
        match self {
            Model::Identity => Identity.stamp(),
            Model::Mlp(p) => p.stamp(),
        }
    }

    fn input_dim(&self) -> Option<usize> {
        match self {
            Model::Identity => None,
            Model::Mlp(p) => Embedder::input_dim(p),
        }
    }

    fn embed(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::Identity => x.to_vec(),
            Model::Mlp(p) => Embedder::embed(p, x),
        }
    }
}
