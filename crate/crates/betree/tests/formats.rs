use std::path::Path;

use betree::checkpoint::{read_adam, read_checkpoint, write_adam, write_checkpoint};
use betree::dot::to_dot;
use betree::embedding_csv::{read_embedding_csv, write_embedding_csv};
use betree::idx::load_idx;
use betree::snapshot::{decode_tree, encode_tree};
use betree_core::data::gen_half_moons;
use betree_core::transform::{init_params, Activation, AdamConfig, AdamState, MlpArchitecture};
use betree_core::tree::{BoundaryTree, Identity, Sample};
use proptest::prelude::*;

/// Label histogram read straight from the label file bytes.
fn raw_label_histogram(path: &Path) -> Vec<usize> {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(u32::from_be_bytes(bytes[0..4].try_into().unwrap()), 0x801);
    let n = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let mut h = vec![0; 10];
    for &b in &bytes[8..8 + n] {
        h[b as usize] += 1;
    }
    h
}

#[test]
fn bundled_mnist_subset_loads_with_expected_histogram() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist10k");
    let labels = dir.join("labels-idx1-ubyte");
    let ds = load_idx(&dir.join("images-idx3-ubyte"), &labels).unwrap();
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.feature_dim(), 784);
    assert_eq!(ds.classes(), 10);
    let expected = [1001, 1127, 991, 1032, 980, 863, 1014, 1070, 944, 978];
    assert_eq!(ds.label_counts(), expected);
    assert_eq!(raw_label_histogram(&labels), expected);
    assert!(ds.samples().iter().flat_map(|s| &s.features).all(|&p| (0.0..=1.0).contains(&p)));
}

proptest! {
    #[test]
    fn embedding_csv_round_trips_exactly(
        rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), 0usize..5), 1..40)
    ) {
        let samples: Vec<Sample> = rows.into_iter().map(|(f, l)| Sample::new(f, l)).collect();
        let mut buf = Vec::new();
        write_embedding_csv(&mut buf, &samples).unwrap();
        let back = read_embedding_csv(buf.as_slice(), Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back.samples(), samples.as_slice());
    }

    #[test]
    fn tree_snapshot_round_trips(seed in 0u64..500, n in 2usize..80, mc in prop::option::of(1usize..4)) {
        let ds = gen_half_moons(n, 0.2, seed).unwrap();
        let tree = BoundaryTree::build(ds.samples(), &Identity, mc, 2).unwrap();
        let back = decode_tree(&encode_tree(&tree), Path::new("mem.bin")).unwrap();
        prop_assert_eq!(back.nodes(), tree.nodes());
        prop_assert_eq!(back.max_children(), tree.max_children());
        prop_assert_eq!(back.classes(), tree.classes());
    }
}

#[test]
fn checkpoint_and_adam_state_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let arch = MlpArchitecture::new(vec![4, 7, 3], Activation::Tanh).unwrap();
    let params = init_params(&arch, 9);
    let ckpt = dir.path().join("m.ckpt");
    write_checkpoint(&ckpt, &params).unwrap();
    assert_eq!(read_checkpoint(&ckpt, Activation::Tanh).unwrap(), params);

    let mut adam = AdamState::new(AdamConfig::default(), &arch);
    adam.step = 17;
    adam.first_moment[0].weight.data_mut()[3] = 0.25;
    adam.second_moment[1].bias.data_mut()[2] = 1e-9;
    let path = dir.path().join("m.ckpt.adam");
    write_adam(&path, &adam, &arch).unwrap();
    assert_eq!(read_adam(&path, &arch, AdamConfig::default()).unwrap(), adam);
}

#[test]
fn dot_output_reparses_to_the_tree_edges() {
    let ds = gen_half_moons(300, 0.2, 3).unwrap();
    let tree = BoundaryTree::build(ds.samples(), &Identity, None, 2).unwrap();
    let dot = to_dot(&tree);
    let mut edges = Vec::new();
    let mut labels = Vec::new();
    for line in dot.lines().map(str::trim) {
        if let Some((a, b)) = line.strip_suffix(';').and_then(|l| l.split_once(" -> ")) {
            edges.push((a[1..].parse::<usize>().unwrap(), b[1..].parse::<usize>().unwrap()));
        } else if let Some(rest) = line.strip_prefix('n').and_then(|l| l.split_once("[label=\"")) {
            let text = rest.1.split('"').next().unwrap();
            let (id, label) = text.split_once(':').unwrap();
            labels.push((id.parse::<usize>().unwrap(), label.parse::<usize>().unwrap()));
        }
    }
    assert_eq!(labels.len(), tree.len());
    for (id, label) in labels {
        assert_eq!(tree.label(id), label);
    }
    let expected: Vec<_> = tree.edges().collect();
    assert_eq!(edges, expected);
    assert!(edges.iter().all(|&(p, c)| tree.label(p) != tree.label(c)));
}
