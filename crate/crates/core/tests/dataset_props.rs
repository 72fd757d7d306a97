use std::collections::BTreeMap;

use programl_core::dataset::{root_count, split_corpus, Split};
use proptest::prelude::*;

fn direct_root_count(n: usize) -> usize {
    ((n as f64 / 10.0).ceil() as usize).min(10)
}

#[test]
fn root_count_matches_direct_evaluation() {
    for n in 1..=10_000 {
        assert_eq!(root_count(n), direct_root_count(n), "|V| = {n}");
    }
}

fn files(n: usize) -> Vec<(String, usize, usize)> {
    (0..n).map(|i| (format!("f{i:05}.ll"), i, i)).collect()
}

#[test]
fn split_sizes_are_within_one_file_of_three_one_one() {
    for n in 5..=1500 {
        let (tr, va, te) = split_corpus(files(n), n as u64).unwrap().sizes();
        assert_eq!(tr + va + te, n);
        for (got, share) in [(tr, 3.0), (va, 1.0), (te, 1.0)] {
            let ideal = n as f64 * share / 5.0;
            assert!((got as f64 - ideal).abs() <= 1.0, "n={n}: {got} vs {ideal}");
        }
    }
}

#[test]
fn tiny_corpora_are_rejected() {
    for n in 0..5 {
        assert!(split_corpus(files(n), 0).is_err());
    }
}

proptest! {
    #[test]
    fn every_file_lands_in_exactly_one_split(n in 5usize..400, seed in any::<u64>()) {
        let m = split_corpus(files(n), seed).unwrap();
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for e in &m.entries {
            prop_assert!(seen.insert(&e.path, e.split).is_none(), "{} listed twice", e.path);
        }
        prop_assert_eq!(seen.len(), n);
    }

    #[test]
    fn split_ignores_input_order(n in 5usize..200, seed in any::<u64>(), rot in 0usize..200) {
        let mut shuffled = files(n);
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        let a = split_corpus(files(n), seed).unwrap();
        let b = split_corpus(shuffled, seed).unwrap();
        for e in &a.entries {
            prop_assert_eq!(b.split_of(&e.path), Some(e.split));
        }
    }
}
