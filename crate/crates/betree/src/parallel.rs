//! Multi-threaded evaluation of read-only queries.

use std::num::NonZeroUsize;

use betree_core::data::Dataset;
use betree_core::trainer::error_rate;
use betree_core::tree::{BoundaryTree, Embedder};

/// Same value as [`error_rate`], splitting the test samples across `threads` scoped
/// threads. The tree's embedding cache must already match `embed` for the threads
/// to share it.
pub fn error_rate_threads<E: Embedder + Sync>(tree: &BoundaryTree, embed: &E, test: &Dataset, threads: NonZeroUsize) -> f64 {
    let threads = threads.get().min(test.len().max(1));
    if threads == 1 {
        return error_rate(tree, embed, test);
    }
    let chunk = test.len().div_ceil(threads);
    let wrong: usize = std::thread::scope(|s| {
        let handles: Vec<_> = test
            .samples()
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || part.iter().filter(|q| tree.predict(embed, &q.features) != q.label).count())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).sum()
    });
    wrong as f64 / test.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use betree_core::data::gen_half_moons;
    use betree_core::tree::Identity;

    #[test]
    fn matches_sequential() {
        let train = gen_half_moons(300, 0.3, 1).unwrap();
        let test = gen_half_moons(101, 0.3, 2).unwrap();
        let tree = BoundaryTree::build(train.samples(), &Identity, None, 2).unwrap();
        let seq = error_rate(&tree, &Identity, &test);
        for t in [1, 2, 3, 8, 500] {
            let par = error_rate_threads(&tree, &Identity, &test, NonZeroUsize::new(t).unwrap());
            assert_eq!(par.to_bits(), seq.to_bits());
        }
    }
}
