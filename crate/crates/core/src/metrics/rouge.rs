use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: usize, hyp_total: usize, ref_total: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(overlap, hyp_total);
        let recall = ratio(overlap, ref_total);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

fn ngram_counts<T: Eq + Hash>(xs: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && xs.len() >= n {
        for g in xs.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap. `n = 0` scores zero.
pub fn rouge_n<T: Eq + Hash>(hyp: &[T], reference: &[T], n: usize) -> RougeScore {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let overlap = h
        .iter()
        .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(overlap, h.values().sum(), r.values().sum())
}

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l<T: Eq>(hyp: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(hyp, reference), hyp.len(), reference.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn rouge_n_examples() {
        let s = rouge_n(&toks("a b d c"), &toks("a b c d"), 2);
        assert!(close(s.precision, 1.0 / 3.0) && close(s.recall, 1.0 / 3.0) && close(s.f1, 1.0 / 3.0));
        let same = rouge_n(&toks("x y z"), &toks("x y z"), 1);
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));
        assert_eq!(rouge_n(&toks("a b"), &toks("c d"), 1).f1, 0.0);
        assert_eq!(rouge_n(&toks("a"), &toks("a"), 2), RougeScore::default());
    }

    #[test]
    fn rouge_n_clips_repeats() {
        let s = rouge_n(&toks("the the the"), &toks("the cat"), 1);
        assert!(close(s.precision, 1.0 / 3.0));
        assert!(close(s.recall, 0.5));
    }

    #[test]
    fn rouge_l_examples() {
        let s = rouge_l(&toks("the cat on mat"), &toks("the cat sat on the mat"));
        assert!(close(s.precision, 1.0));
        assert!(close(s.recall, 2.0 / 3.0));
        assert!(close(s.f1, 0.8));
        assert_eq!(rouge_l(&toks("a b"), &toks("a b")).f1, 1.0);
        assert_eq!(rouge_l::<&str>(&[], &toks("a")), RougeScore::default());
        assert_eq!(rouge_l::<&str>(&[], &[]), RougeScore::default());
    }

    /// Longest common subsequence by enumerating every subsequence of `a`.
    fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
        let is_subseq = |s: &[u8]| {
            let mut it = b.iter();
            s.iter().all(|x| it.any(|y| y == x))
        };
        (0u32..1 << a.len())
            .filter_map(|mask| {
                let s: Vec<u8> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
                is_subseq(&s).then_some(s.len())
            })
            .max()
            .unwrap_or(0)
    }

    proptest! {
        #[test]
        fn lcs_matches_enumeration(
            a in prop::collection::vec(0u8..4, 0..10),
            b in prop::collection::vec(0u8..4, 0..10),
        ) {
            prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn rouge_l_self_and_symmetry(
            a in prop::collection::vec(0u8..6, 1..20),
            b in prop::collection::vec(0u8..6, 0..20),
        ) {
            prop_assert_eq!(rouge_l(&a, &a).f1, 1.0);
            let ab = rouge_l(&a, &b);
            let ba = rouge_l(&b, &a);
            prop_assert!(close(ab.f1, ba.f1));
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert!((0.0..=1.0).contains(&ab.f1));
        }
    }
}
