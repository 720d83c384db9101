use rand::seq::SliceRandom;
use std::collections::BTreeMap;

use crate::identify::Sample;
use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Shuffles the sequence ids with `seed` and moves whole sequences into the
/// training set until it holds at least `ratio` of the samples. At least one
/// sequence always lands in the test set. Samples keep their input order.
pub fn split_by_sequence(samples: &[Sample], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.sequence_id).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Domain(format!(
            "splitting by sequence needs at least two sequences, found {}",
            counts.len()
        )));
    }
    let mut order: Vec<u32> = counts.keys().copied().collect();
    order.shuffle(&mut stream_rng(seed, stream::SPLIT));
    let target = ratio * samples.len() as f64;
    let mut in_train = BTreeMap::new();
    let mut n_train = 0usize;
    for (i, id) in order.iter().enumerate() {
        let train = (n_train as f64) < target && i + 1 < order.len();
        if train {
            n_train += counts[id];
        }
        in_train.insert(*id, train);
    }
    let (train, test) = samples.iter().cloned().partition(|s| in_train[&s.sequence_id]);
    Ok(DatasetSplit { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Candidate;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn data(lengths: &[usize]) -> Vec<Sample> {
        let mut out = Vec::new();
        for (seq, &n) in lengths.iter().enumerate() {
            for _ in 0..n {
                out.push(Sample {
                    sample_id: out.len() as u64,
                    sequence_id: seq as u32,
                    candidates: vec![Candidate::new(10.0, 0.0, 0.0)],
                    beam: 0,
                    label: 0,
                });
            }
        }
        out
    }

    fn seqs(s: &[Sample]) -> HashSet<u32> {
        s.iter().map(|x| x.sequence_id).collect()
    }

    #[test]
    fn ten_equal_sequences_split_eight_two() {
        let split = split_by_sequence(&data(&[10; 10]), 0.8, 3).unwrap();
        assert_eq!(seqs(&split.train).len(), 8);
        assert_eq!(seqs(&split.test).len(), 2);
        assert_eq!(split.train.len(), 80);
    }

    #[test]
    fn single_sequence_is_an_error() {
        assert!(split_by_sequence(&data(&[5]), 0.8, 0).is_err());
        assert!(split_by_sequence(&data(&[5, 5]), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_and_within_one_sequence_of_ratio(
            lengths in proptest::collection::vec(1usize..60, 2..25),
            ratio in 0.1f64..0.95,
            seed in 0u64..1000,
        ) {
            let d = data(&lengths);
            let split = split_by_sequence(&d, ratio, seed).unwrap();
            prop_assert!(seqs(&split.train).is_disjoint(&seqs(&split.test)));
            prop_assert_eq!(split.train.len() + split.test.len(), d.len());
            prop_assert!(!split.test.is_empty());
            // Greedy accounting: the training set stops at the first sequence
            // that reaches the target, unless only the test sequence is left.
            let biggest = *lengths.iter().max().unwrap() as f64;
            let target = ratio * d.len() as f64;
            let n_train = split.train.len() as f64;
            prop_assert!(n_train < target + biggest);
            if seqs(&split.test).len() > 1 {
                prop_assert!(n_train >= target);
            }
        }
    }
}
