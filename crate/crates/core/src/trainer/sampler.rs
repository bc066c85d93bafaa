use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::labeler::{ConfidenceMap, LabelMap, IGNORE};

/// Added to every margin before it is used as a sampling weight.
pub const SAMPLE_WEIGHT_FLOOR: f64 = 1e-6;

/// Pixel indices (row-major) and their hard pseudo-labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomBatch {
    pub indices: Vec<usize>,
    pub labels: Vec<u16>,
}

impl RandomBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone)]
struct ClassPool {
    label: u16,
    pixels: Vec<usize>,
    dist: Option<WeightedIndex<f64>>,
}

/// Class-balanced sampler over a pseudo-label map: every present class
/// contributes `n_per_class` draws with replacement, weighted by margin plus
/// a floor. Classes whose weights are all zero are drawn uniformly.
#[derive(Debug, Clone)]
pub struct RandomSetSampler {
    pools: Vec<ClassPool>,
    n_per_class: usize,
}

impl RandomSetSampler {
    pub fn new(pseudo: &LabelMap, conf: &ConfidenceMap, n_per_class: usize, floor: f64) -> Result<Self> {
        if pseudo.dim() != conf.values().dim() {
            return Err(Error::shape(format!(
                "labels {:?} vs confidence {:?}",
                pseudo.dim(),
                conf.values().dim()
            )));
        }
        if n_per_class == 0 {
            return Err(Error::invalid("n_per_class must be positive"));
        }
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(Error::invalid("sampling floor must be finite and non-negative"));
        }
        let num = pseudo.inferred_classes();
        if num == 0 {
            return Err(Error::invalid("pseudo-label map has no labelled pixels"));
        }
        let mut members: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); num];
        for (i, (&l, &c)) in pseudo.values().iter().zip(conf.values().iter()).enumerate() {
            if l == IGNORE {
                continue;
            }
            let m = &mut members[l as usize];
            m.0.push(i);
            m.1.push(c as f64 + floor);
        }
        let pools = members
            .into_iter()
            .enumerate()
            .filter(|(_, (px, _))| !px.is_empty())
            .map(|(k, (pixels, weights))| ClassPool {
                label: k as u16,
                pixels,
                dist: WeightedIndex::new(&weights).ok(),
            })
            .collect();
        Ok(Self { pools, n_per_class })
    }

    pub fn n_per_class(&self) -> usize {
        self.n_per_class
    }

    /// Labels of the classes present in the map, ascending.
    pub fn classes(&self) -> Vec<u16> {
        self.pools.iter().map(|p| p.label).collect()
    }

    pub fn batch_len(&self) -> usize {
        self.pools.len() * self.n_per_class
    }

    /// Draws one batch, class by class in ascending label order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RandomBatch {
        let mut indices = Vec::with_capacity(self.batch_len());
        let mut labels = Vec::with_capacity(self.batch_len());
        for pool in &self.pools {
            for _ in 0..self.n_per_class {
                let j = match &pool.dist {
                    Some(d) => d.sample(rng),
                    None => rng.random_range(0..pool.pixels.len()),
                };
                indices.push(pool.pixels[j]);
                labels.push(pool.label);
            }
        }
        RandomBatch { indices, labels }
    }
}

/// One class-balanced, margin-weighted draw with the default weight floor.
pub fn sample_random_set<R: Rng + ?Sized>(
    pseudo: &LabelMap,
    conf: &ConfidenceMap,
    n_per_class: usize,
    rng: &mut R,
) -> Result<RandomBatch> {
    Ok(RandomSetSampler::new(pseudo, conf, n_per_class, SAMPLE_WEIGHT_FLOOR)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_winner_always_drawn() {
        let labels = LabelMap::from_raw(array![[0u16, 0, 0], [1, 0, 1]]);
        let conf = ConfidenceMap::new(array![[0.0f32, 1.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let s = RandomSetSampler::new(&labels, &conf, 50, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = s.sample(&mut rng);
        assert_eq!(&b.indices[..50], &[1usize; 50][..]);
        // class 1 has all-zero weights and falls back to uniform
        assert!(b.indices[50..].iter().all(|&i| i == 3 || i == 5));
        assert!(b.labels[50..].iter().all(|&l| l == 1));
    }

    #[test]
    fn singleton_class_repeats() {
        let labels = LabelMap::from_raw(array![[2u16, IGNORE]]);
        let conf = ConfidenceMap::new(array![[0.4f32, 0.9]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_random_set(&labels, &conf, 64, &mut rng).unwrap();
        assert_eq!(b.indices, vec![0; 64]);
        assert_eq!(b.labels, vec![2; 64]);
    }

    #[test]
    fn absent_classes_skipped_and_empty_rejected() {
        let labels = LabelMap::from_raw(array![[0u16, 3]]);
        let conf = ConfidenceMap::new(Array2::zeros((1, 2))).unwrap();
        let s = RandomSetSampler::new(&labels, &conf, 4, SAMPLE_WEIGHT_FLOOR).unwrap();
        assert_eq!(s.classes(), vec![0, 3]);
        assert_eq!(s.batch_len(), 8);

        let empty = LabelMap::from_raw(array![[IGNORE, IGNORE]]);
        assert!(RandomSetSampler::new(&empty, &conf, 4, 0.0).is_err());
        assert!(RandomSetSampler::new(&labels, &conf, 0, 0.0).is_err());
    }
}
