//! Levenshtein distance with an edit breakdown, and WER/CER.

use serde::Serialize;

use crate::bridge::{normalize, NormalizeFlags};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EditCounts {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    fn step(self, sub: usize, ins: usize, del: usize) -> Self {
        Self {
            distance: self.distance + sub + ins + del,
            substitutions: self.substitutions + sub,
            insertions: self.insertions + ins,
            deletions: self.deletions + del,
        }
    }

    // Smaller is better: fewer edits, then more substitutions. For a fixed
    // distance and length difference, more substitutions also means fewer
    // deletions and fewer insertions, so this realizes the documented
    // substitution > deletion > insertion preference.
    fn key(&self) -> (usize, std::cmp::Reverse<usize>) {
        (self.distance, std::cmp::Reverse(self.substitutions))
    }
}

/// Minimal edit distance turning `reference` into `hypothesis`.
///
/// Among minimal edit scripts, the one with the most substitutions is
/// reported (equivalently, the fewest deletions and insertions).
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let n = hypothesis.len();
    let mut prev: Vec<EditCounts> = (0..=n)
        .map(|j| EditCounts::default().step(0, j, 0))
        .collect();
    let mut cur = prev.clone();
    for r in reference {
        cur[0] = prev[0].step(0, 0, 1);
        for j in 1..=n {
            let diag = if *r == hypothesis[j - 1] {
                prev[j - 1]
            } else {
                prev[j - 1].step(1, 0, 0)
            };
            let del = prev[j].step(0, 0, 1);
            let ins = cur[j - 1].step(0, 1, 0);
            cur[j] = [diag, del, ins]
                .into_iter()
                .min_by_key(EditCounts::key)
                .expect("three candidates");
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRate {
    pub rate: f64,
    pub reference_len: usize,
    #[serde(flatten)]
    pub counts: EditCounts,
}

fn rate<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<ErrorRate> {
    if reference.is_empty() {
        return Err(Error::Domain(
            "reference is empty after normalization".into(),
        ));
    }
    let counts = edit_distance(reference, hypothesis);
    Ok(ErrorRate {
        rate: counts.distance as f64 / reference.len() as f64,
        reference_len: reference.len(),
        counts,
    })
}

/// Word error rate over whitespace-separated words of the normalized texts.
pub fn wer(reference: &str, hypothesis: &str, flags: NormalizeFlags) -> Result<ErrorRate> {
    let r = normalize(reference, flags);
    let h = normalize(hypothesis, flags);
    let rw: Vec<&str> = r.split_whitespace().collect();
    let hw: Vec<&str> = h.split_whitespace().collect();
    rate(&rw, &hw)
}

/// Character error rate over the non-whitespace characters of the
/// normalized texts.
pub fn cer(reference: &str, hypothesis: &str, flags: NormalizeFlags) -> Result<ErrorRate> {
    let chars = |s: &str| -> Vec<char> {
        normalize(s, flags)
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect()
    };
    rate(&chars(reference), &chars(hypothesis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NONE: NormalizeFlags = NormalizeFlags::NONE;

    #[test]
    fn basic_distances() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]).distance, 0);
        let c = edit_distance(&["a", "b", "c"], &["a", "x", "c"]);
        assert_eq!((c.distance, c.substitutions), (1, 1));
        let c = edit_distance::<u8>(&[], &[1, 2]);
        assert_eq!((c.distance, c.insertions), (2, 2));
        let c = edit_distance::<u8>(&[1, 2], &[]);
        assert_eq!((c.distance, c.deletions), (2, 2));
    }

    #[test]
    fn substitutions_preferred() {
        // "ab" -> "ba": two substitutions or one deletion plus one insertion
        let c = edit_distance(&['a', 'b'], &['b', 'a']);
        assert_eq!(
            c,
            EditCounts {
                distance: 2,
                substitutions: 2,
                insertions: 0,
                deletions: 0
            }
        );
    }

    #[test]
    fn word_and_char_rates() {
        let r = wer("a b c", "a x c", NONE).unwrap();
        assert!((r.rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(wer("a b c", "a b c", NONE).unwrap().rate, 0.0);
        assert_eq!(wer("a b c", "", NONE).unwrap().rate, 1.0);
        assert!((cer("abc", "axc", NONE).unwrap().rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cer("a bc", "abc", NONE).unwrap().rate, 0.0);
        assert_eq!(cer("abc", "", NONE).unwrap().rate, 1.0);
        assert!(matches!(
            wer(" . ", "a", NormalizeFlags::ALL),
            Err(Error::Domain(_))
        ));
        assert_eq!(
            wer("Hello, World", "hello world", NormalizeFlags::ALL)
                .unwrap()
                .rate,
            0.0
        );
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..3, 0..7)
    }

    proptest! {
        #[test]
        fn symmetric(a in seq(), b in seq()) {
            prop_assert_eq!(edit_distance(&a, &b).distance, edit_distance(&b, &a).distance);
        }

        #[test]
        fn triangle(a in seq(), b in seq(), c in seq()) {
            let ab = edit_distance(&a, &b).distance;
            let bc = edit_distance(&b, &c).distance;
            prop_assert!(edit_distance(&a, &c).distance <= ab + bc);
        }

        #[test]
        fn counts_are_consistent(a in seq(), b in seq()) {
            let c = edit_distance(&a, &b);
            prop_assert_eq!(c.distance, c.substitutions + c.insertions + c.deletions);
            prop_assert_eq!(a.len() + c.insertions, b.len() + c.deletions);
        }
    }
}
