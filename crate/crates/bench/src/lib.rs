//! Seeded fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylesearch_core::bovw::DescriptorSet;
use stylesearch_core::{BBox, Detection, FeatureVector, ItemId};

fn row(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// `n` uniform random vectors of length `dim` with ids `v00000..`.
pub fn vectors(n: usize, dim: usize, seed: u64) -> Vec<(ItemId, FeatureVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let id = ItemId::from(format!("v{i:05}").as_str());
            (id, FeatureVector::new(row(&mut rng, dim)).unwrap())
        })
        .collect()
}

pub fn queries(n: usize, dim: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| FeatureVector::new(row(&mut rng, dim)).unwrap()).collect()
}

/// `images` descriptor sets of `per_image` local descriptors each.
pub fn descriptor_sets(images: usize, per_image: usize, dim: usize, seed: u64) -> Vec<DescriptorSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..images)
        .map(|i| DescriptorSet {
            image_ref: format!("img{i}"),
            descriptors: (0..per_image)
                .map(|_| FeatureVector::new(row(&mut rng, dim)).unwrap())
                .collect(),
        })
        .collect()
}

/// Boxes scattered over a 640x480 frame with random confidences.
pub fn detections(n: usize, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let bbox = BBox::new(
                rng.random_range(0.0..600.0),
                rng.random_range(0.0..440.0),
                rng.random_range(10.0..120.0),
                rng.random_range(10.0..120.0),
            )
            .unwrap();
            let class = ["chair", "sofa", "lamp", "table"][i % 4];
            Detection::new(class, bbox, rng.random_range(0.0..=1.0)).unwrap()
        })
        .collect()
}
