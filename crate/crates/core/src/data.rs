//! Datasets, the synthetic half-moons generator and seeded splitting.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tree::Sample;
use crate::{Error, Result};

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    HalfMoons,
    Idx,
    Csv,
}

/// Labelled samples with a uniform feature length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    classes: usize,
    provenance: Provenance,
}

impl Dataset {
    /// Validates that every sample has `dim` features and a label below `classes`.
    /// `dim` is taken from the first sample.
    pub fn new(samples: Vec<Sample>, classes: usize, provenance: Provenance) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::usage(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if s.label >= classes {
                return Err(Error::usage(format!("sample {i} has label {} with {classes} classes", s.label)));
            }
        }
        Ok(Dataset {
            samples,
            dim,
            classes,
            provenance,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples[..n.min(self.len())].to_vec(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            samples: Vec::new(),
            dim: self.dim,
            classes: self.classes,
            provenance: self.provenance,
        }
    }

    /// Per-class sample counts.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}

/// Two interleaving half circles in the plane.
///
/// Class 0 lies on the upper unit semicircle centred at `(0, 0)`, class 1 on the
/// lower unit semicircle centred at `(1, 0.5)`. Each class gets evenly spaced angles
/// on `[0, pi]` (class 0 gets `n / 2` points, class 1 the rest), isotropic Gaussian
/// noise of standard deviation `noise_sd` is added, and the result is shuffled.
pub fn gen_half_moons(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::usage(format!("half-moons needs at least 2 samples, got {n}")));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::usage(format!("noise standard deviation must be >= 0, got {noise_sd}")));
    }
    let n_upper = n / 2;
    let n_lower = n - n_upper;
    let angle = |i: usize, count: usize| {
        if count == 1 {
            0.0
        } else {
            PI * i as f64 / (count - 1) as f64
        }
    };
    let mut samples = Vec::with_capacity(n);
    for i in 0..n_upper {
        let t = angle(i, n_upper);
        samples.push(Sample::new(alloc::vec![libm::cos(t), libm::sin(t)], 0));
    }
    for i in 0..n_lower {
        let t = angle(i, n_lower);
        samples.push(Sample::new(alloc::vec![1.0 - libm::cos(t), 0.5 - libm::sin(t)], 1));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).expect("validated noise");
        for s in &mut samples {
            for v in &mut s.features {
                *v += normal.sample(&mut rng);
            }
        }
    }
    samples.shuffle(&mut rng);
    Dataset::new(samples, 2, Provenance::HalfMoons)
}

/// Seeded Fisher-Yates shuffle followed by contiguous splits of the given fractions.
/// Each split has `floor(fraction * len)` samples.
pub fn shuffle_split(ds: &Dataset, seed: u64, fractions: &[f64]) -> Result<Vec<Dataset>> {
    if fractions.is_empty() || fractions.iter().any(|f| f.is_nan() || *f <= 0.0) {
        return Err(Error::usage(format!("split fractions must be positive, got {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::usage(format!("split fractions sum to {total} > 1")));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for f in fractions {
        let size = ((f * ds.len() as f64) + 1e-9) as usize;
        let end = (start + size).min(ds.len());
        out.push(Dataset {
            samples: order[start..end].iter().map(|&i| ds.samples[i].clone()).collect(),
            ..ds.clone_meta()
        });
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn noiseless_points_lie_on_arcs() {
        let ds = gen_half_moons(4, 0.0, 1).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.label_counts(), vec![2, 2]);
        for s in ds.samples() {
            let (cx, cy) = if s.label == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = libm::hypot(s.features[0] - cx, s.features[1] - cy);
            assert!((r - 1.0).abs() < 1e-12);
            if s.label == 0 {
                assert!(s.features[1] >= -1e-12);
            } else {
                assert!(s.features[1] <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn half_moons_is_deterministic() {
        let a = gen_half_moons(100, 0.1, 5).unwrap();
        let b = gen_half_moons(100, 0.1, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_half_moons(100, 0.1, 6).unwrap());
        assert!(gen_half_moons(1, 0.1, 0).is_err());
        assert!(gen_half_moons(10, -1.0, 0).is_err());
    }

    #[test]
    fn half_moons_is_learnable_by_one_nn() {
        let ds = gen_half_moons(1000, 0.1, 21).unwrap();
        let parts = shuffle_split(&ds, 3, &[0.8, 0.2]).unwrap();
        let (train, test) = (&parts[0], &parts[1]);
        let mut correct = 0;
        for q in test.samples() {
            let nearest = train
                .samples()
                .iter()
                .min_by(|a, b| {
                    let da = libm::hypot(a.features[0] - q.features[0], a.features[1] - q.features[1]);
                    let db = libm::hypot(b.features[0] - q.features[0], b.features[1] - q.features[1]);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            correct += usize::from(nearest.label == q.label);
        }
        assert!(correct as f64 / test.len() as f64 >= 0.95);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![Sample::new(vec![1.0], 0), Sample::new(vec![1.0, 2.0], 0)], 2, Provenance::Csv).is_err());
        assert!(Dataset::new(vec![Sample::new(vec![1.0], 2)], 2, Provenance::Csv).is_err());
    }

    fn key(s: &Sample) -> (Vec<u64>, usize) {
        (s.features.iter().map(|v| v.to_bits()).collect(), s.label)
    }

    #[test]
    fn split_sizes_disjoint_and_complete() {
        let ds = gen_half_moons(1000, 0.1, 2).unwrap();
        let parts = shuffle_split(&ds, 9, &[0.8, 0.2]).unwrap();
        assert_eq!(parts[0].len(), 800);
        assert_eq!(parts[1].len(), 200);
        let mut all: Vec<_> = parts.iter().flat_map(|p| p.samples().iter().map(key)).collect();
        let mut orig: Vec<_> = ds.samples().iter().map(key).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(parts, shuffle_split(&ds, 9, &[0.8, 0.2]).unwrap());
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = gen_half_moons(10, 0.1, 2).unwrap();
        assert!(shuffle_split(&ds, 0, &[0.7, 0.4]).is_err());
        assert!(shuffle_split(&ds, 0, &[0.0]).is_err());
        assert!(shuffle_split(&ds, 0, &[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn full_split_is_a_permutation(n in 2usize..200, seed in 0u64..1000) {
            let ds = gen_half_moons(n, 0.2, seed).unwrap();
            let parts = shuffle_split(&ds, seed ^ 0xabc, &[1.0]).unwrap();
            proptest::prop_assert_eq!(parts.len(), 1);
            let mut a: Vec<_> = parts[0].samples().iter().map(key).collect();
            let mut b: Vec<_> = ds.samples().iter().map(key).collect();
            a.sort();
            b.sort();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
