//! Collapsing functions for CTC and transducer alignments, plus exhaustive
//! inverse-image enumeration.
//!
//! The enumerators are deliberately naive (generate everything, then
//! filter) and exist as test oracles for the dynamic-programming losses.

use crate::error::{Error, Result};
use crate::seq::{AlignmentSeq, TokenSeq};
use crate::vocab::{TokenId, Vocab};

/// Upper bound on `(|V|+1)^T` for [`ctc_inverse_enumerate`].
pub const CTC_ENUMERATION_LIMIT: u128 = 10_000_000;
/// Upper bound on `binomial(T+N, N)` for [`tra_inverse_enumerate`].
pub const TRA_ENUMERATION_LIMIT: u128 = 1_000_000;

/// CTC collapse: merge runs of identical ids, then drop blanks.
pub fn ctc_collapse(a: &AlignmentSeq, vocab: &Vocab) -> Result<TokenSeq> {
    a.check(vocab)?;
    let blank = vocab.blank_id();
    let mut out = Vec::new();
    let mut prev: Option<TokenId> = None;
    for &id in a.ids() {
        if prev != Some(id) && id != blank {
            out.push(id);
        }
        prev = Some(id);
    }
    Ok(TokenSeq::new(out, vocab.name()))
}

/// All alignments of length `frames` that collapse to `w`.
pub fn ctc_inverse_enumerate(
    w: &TokenSeq,
    frames: usize,
    vocab: &Vocab,
) -> Result<Vec<AlignmentSeq>> {
    if frames == 0 {
        return Err(Error::usage("frame count must be at least 1"));
    }
    let width = vocab.len() as u128;
    let total = (0..frames).try_fold(1u128, |acc, _| acc.checked_mul(width));
    match total {
        Some(n) if n <= CTC_ENUMERATION_LIMIT => {}
        _ => {
            return Err(Error::Capacity(format!(
                "{}^{frames} alignments exceed the enumeration limit",
                vocab.len()
            )))
        }
    }
    let mut out = Vec::new();
    let mut digits = vec![0usize; frames];
    loop {
        let candidate = AlignmentSeq(digits.clone());
        if ctc_collapse(&candidate, vocab)?.ids() == w.ids() {
            out.push(candidate);
        }
        // odometer increment
        let mut i = frames;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < vocab.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Transducer collapse: drop the `frames` blanks of a lattice path.
pub fn tra_collapse(z: &AlignmentSeq, frames: usize, vocab: &Vocab) -> Result<TokenSeq> {
    z.check(vocab)?;
    let blank = vocab.blank_id();
    let blanks = z.ids().iter().filter(|&&id| id == blank).count();
    if blanks != frames {
        return Err(Error::InvalidAlignment(format!(
            "expected {frames} blanks, found {blanks}"
        )));
    }
    let ids = z.ids().iter().copied().filter(|&id| id != blank).collect();
    Ok(TokenSeq::new(ids, vocab.name()))
}

pub(crate) fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// All lattice paths for `w` over `frames` frames: interleavings of the
/// `frames` blanks with the labels of `w` in order, keeping only those whose
/// final symbol is a blank (a path must leave the last frame through blank).
pub fn tra_inverse_enumerate(
    w: &TokenSeq,
    frames: usize,
    vocab: &Vocab,
) -> Result<Vec<AlignmentSeq>> {
    if frames == 0 {
        return Err(Error::usage("frame count must be at least 1"));
    }
    let n = w.len();
    let total = binomial((frames + n) as u128, n as u128);
    if total > TRA_ENUMERATION_LIMIT {
        return Err(Error::Capacity(format!(
            "binomial({}, {n}) interleavings exceed the enumeration limit",
            frames + n
        )));
    }
    let blank = vocab.blank_id();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(frames + n);
    interleave(w.ids(), frames, blank, &mut current, &mut out);
    out.retain(|z| z.ids().last() == Some(&blank));
    Ok(out)
}

fn interleave(
    labels: &[TokenId],
    blanks_left: usize,
    blank: TokenId,
    current: &mut Vec<TokenId>,
    out: &mut Vec<AlignmentSeq>,
) {
    if labels.is_empty() && blanks_left == 0 {
        out.push(AlignmentSeq(current.clone()));
        return;
    }
    if let Some((&first, rest)) = labels.split_first() {
        current.push(first);
        interleave(rest, blanks_left, blank, current, out);
        current.pop();
    }
    if blanks_left > 0 {
        current.push(blank);
        interleave(labels, blanks_left - 1, blank, current, out);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // ids: 0 = blank, 1 = a, 2 = b
    fn vocab() -> Vocab {
        Vocab::from_tokens("t", &["<b>", "a", "b"], "<b>", None).unwrap()
    }

    fn seq(ids: &[usize]) -> TokenSeq {
        vocab().seq(ids.to_vec()).unwrap()
    }

    fn al(ids: &[usize]) -> AlignmentSeq {
        AlignmentSeq(ids.to_vec())
    }

    #[test]
    fn ctc_collapse_examples() {
        let v = vocab();
        assert!(ctc_collapse(&al(&[0, 0, 0]), &v).unwrap().is_empty());
        assert_eq!(
            ctc_collapse(&al(&[1, 1, 0, 1, 2]), &v).unwrap().ids(),
            &[1, 1, 2]
        );
        assert_eq!(
            ctc_collapse(&al(&[1, 0, 0, 2, 2]), &v).unwrap().ids(),
            &[1, 2]
        );
        assert!(ctc_collapse(&al(&[3]), &v).is_err());
    }

    #[test]
    fn ctc_enumeration_examples() {
        let single = Vocab::from_tokens("s", &["<b>", "a"], "<b>", None).unwrap();
        let w = single.seq(vec![1]).unwrap();
        // oracle: of the 8 sequences over {a, blank}, those collapsing to (a)
        let mut expect = 0;
        for code in 0..8u32 {
            let a: Vec<usize> = (0..3).map(|i| ((code >> i) & 1) as usize).collect();
            if ctc_collapse(&al(&a), &single).unwrap().ids() == [1] {
                expect += 1;
            }
        }
        assert_eq!(expect, 6);
        assert_eq!(ctc_inverse_enumerate(&w, 3, &single).unwrap().len(), 6);

        let v = vocab();
        assert_eq!(
            ctc_inverse_enumerate(&seq(&[1, 2]), 2, &v).unwrap(),
            vec![al(&[1, 2])]
        );
        assert!(ctc_inverse_enumerate(&seq(&[1, 1]), 2, &v)
            .unwrap()
            .is_empty());
        assert_eq!(
            ctc_inverse_enumerate(&seq(&[1, 1]), 3, &v).unwrap(),
            vec![al(&[1, 0, 1])]
        );
    }

    #[test]
    fn ctc_enumeration_guard() {
        let big = Vocab::from_tokens(
            "g",
            &["<b>", "a", "b", "c", "d", "e", "f", "g", "h", "i"],
            "<b>",
            None,
        )
        .unwrap();
        let err = ctc_inverse_enumerate(&big.seq(vec![1]).unwrap(), 8, &big).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn tra_collapse_examples() {
        let v = vocab();
        assert!(tra_collapse(&al(&[0, 0]), 2, &v).unwrap().is_empty());
        assert_eq!(tra_collapse(&al(&[1, 0]), 1, &v).unwrap().ids(), &[1]);
        assert_eq!(
            tra_collapse(&al(&[0, 1, 0, 2]), 2, &v).unwrap().ids(),
            &[1, 2]
        );
        assert!(matches!(
            tra_collapse(&al(&[1, 0]), 2, &v),
            Err(Error::InvalidAlignment(_))
        ));
    }

    #[test]
    fn tra_enumeration_examples() {
        let v = vocab();
        assert_eq!(
            tra_inverse_enumerate(&seq(&[1]), 1, &v).unwrap(),
            vec![al(&[1, 0])]
        );
        assert_eq!(
            tra_inverse_enumerate(&seq(&[]), 2, &v).unwrap(),
            vec![al(&[0, 0])]
        );
        let mut got = tra_inverse_enumerate(&seq(&[1]), 2, &v).unwrap();
        got.sort();
        assert_eq!(got, vec![al(&[0, 1, 0]), al(&[1, 0, 0])]);
    }

    #[test]
    fn tra_enumeration_guard() {
        let v = vocab();
        let long = seq(&[1; 12]);
        assert!(matches!(
            tra_inverse_enumerate(&long, 20, &v),
            Err(Error::Capacity(_))
        ));
    }

    fn adjacent_equal_pairs(w: &[usize]) -> usize {
        w.windows(2).filter(|p| p[0] == p[1]).count()
    }

    proptest! {
        #[test]
        fn ctc_round_trip_and_feasibility(w in prop::collection::vec(1usize..3, 0..4), frames in 1usize..7) {
            let v = vocab();
            let target = seq(&w);
            let all = ctc_inverse_enumerate(&target, frames, &v).unwrap();
            for a in &all {
                prop_assert_eq!(ctc_collapse(a, &v).unwrap().into_ids(), w.clone());
            }
            let mut dedup = all.clone();
            dedup.sort();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), all.len());
            let empty = frames < w.len() + adjacent_equal_pairs(&w);
            prop_assert_eq!(all.is_empty(), empty);
        }

        #[test]
        fn ctc_collapse_idempotent(a in prop::collection::vec(0usize..3, 1..10)) {
            let v = vocab();
            let once = ctc_collapse(&al(&a), &v).unwrap();
            let twice = ctc_collapse(&AlignmentSeq(once.ids().to_vec()), &v).unwrap();
            // a blank between equal tokens keeps both, and collapsing again
            // merges them, so idempotence holds exactly when no repeats remain
            prop_assert_eq!(once == twice, adjacent_equal_pairs(once.ids()) == 0);
        }

        #[test]
        fn tra_round_trip_and_count(n in 0usize..4, frames in 1usize..6) {
            let v = Vocab::from_tokens("d", &["<b>", "a", "b", "c"], "<b>", None).unwrap();
            let w = v.seq((1..=n).collect()).unwrap();
            let all = tra_inverse_enumerate(&w, frames, &v).unwrap();
            for z in &all {
                prop_assert_eq!(z.len(), frames + n);
                prop_assert_eq!(&tra_collapse(z, frames, &v).unwrap(), &w);
            }
            prop_assert_eq!(all.len() as u128, binomial((frames - 1 + n) as u128, n as u128));
        }
    }
}
