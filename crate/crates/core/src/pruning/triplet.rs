use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Dataset;
use crate::seed::{self, purpose};

/// Indices into a dataset's training split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl Triplet {
    /// `class(anchor) == class(positive) != class(negative)` and the anchor
    /// and positive are distinct images.
    pub fn is_valid(&self, labels: &[usize]) -> bool {
        let get = |i: usize| labels.get(i).copied();
        match (get(self.anchor), get(self.positive), get(self.negative)) {
            (Some(a), Some(p), Some(n)) => a == p && a != n && self.anchor != self.positive,
            _ => false,
        }
    }
}

/// Class-balanced triplet sampling over the training split.
///
/// Anchor classes cycle through every class that has at least two images;
/// anchor and positive are distinct draws from that class, the negative is
/// drawn from a uniformly chosen different non-empty class.
pub fn sample_triplets(dataset: &Dataset, count: usize, seed: u64) -> Result<Vec<Triplet>> {
    let groups = dataset.train_by_class();
    let anchors: Vec<usize> = (0..groups.len())
        .filter(|&c| groups[c].len() >= 2)
        .collect();
    let nonempty: Vec<usize> = (0..groups.len())
        .filter(|&c| !groups[c].is_empty())
        .collect();
    if nonempty.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "triplets need at least two non-empty classes, found {}",
            nonempty.len()
        )));
    }
    if anchors.is_empty() {
        return Err(Error::DegenerateDataset(
            "no class has two images to form an anchor/positive pair".into(),
        ));
    }
    let mut rng = seed::rng(seed, &[purpose::TRIPLETS]);
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let class = anchors[t % anchors.len()];
        let members = &groups[class];
        let a = rng.random_range(0..members.len());
        let mut p = rng.random_range(0..members.len() - 1);
        if p >= a {
            p += 1;
        }
        let others: Vec<usize> = nonempty.iter().copied().filter(|&c| c != class).collect();
        let neg_class = others[rng.random_range(0..others.len())];
        let neg_members = &groups[neg_class];
        out.push(Triplet {
            anchor: members[a],
            positive: members[p],
            negative: neg_members[rng.random_range(0..neg_members.len())],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Sample, SyntheticSpec, Tensor, TensorShape};

    fn tiny(labels: &[usize], classes: usize) -> Dataset {
        let shape = TensorShape::new(1, 1, 1);
        Dataset {
            shape,
            classes,
            train: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| Sample {
                    image: Tensor::from_vec(shape, vec![i as f64]).unwrap(),
                    label,
                })
                .collect(),
            test: vec![],
            seed: 0,
        }
    }

    fn labels(ds: &Dataset) -> Vec<usize> {
        ds.train.iter().map(|s| s.label).collect()
    }

    #[test]
    fn two_by_two() {
        let ds = tiny(&[0, 0, 1, 1], 2);
        let ts = sample_triplets(&ds, 4, 1).unwrap();
        assert_eq!(ts.len(), 4);
        assert!(ts.iter().all(|t| t.is_valid(&labels(&ds))));
    }

    #[test]
    fn deterministic() {
        let ds = tiny(&[0, 0, 0, 1, 1, 2, 2, 2], 3);
        assert_eq!(
            sample_triplets(&ds, 50, 9).unwrap(),
            sample_triplets(&ds, 50, 9).unwrap()
        );
        assert_ne!(
            sample_triplets(&ds, 50, 9).unwrap(),
            sample_triplets(&ds, 50, 10).unwrap()
        );
    }

    #[test]
    fn ten_thousand_on_ten_classes_all_valid() {
        let ds = SyntheticSpec {
            classes: 10,
            train_per_class: 5,
            test_per_class: 1,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let ts = sample_triplets(&ds, 10_000, 3).unwrap();
        let labels = labels(&ds);
        assert_eq!(ts.iter().filter(|t| t.is_valid(&labels)).count(), 10_000);
    }

    #[test]
    fn singleton_classes_only_serve_as_negatives() {
        let ds = tiny(&[0, 0, 1], 2);
        let ts = sample_triplets(&ds, 20, 2).unwrap();
        assert!(ts.iter().all(|t| t.negative == 2));
    }

    #[test]
    fn degenerate_sets_rejected() {
        assert!(matches!(
            sample_triplets(&tiny(&[0, 0, 0], 2), 4, 1),
            Err(Error::DegenerateDataset(_))
        ));
        assert!(matches!(
            sample_triplets(&tiny(&[0, 1, 2], 3), 4, 1),
            Err(Error::DegenerateDataset(_))
        ));
    }
}
