//! Masked-LM contract, a table-driven implementation, and mask sampling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::Rng;
use crate::seq::{MaskedSeq, TokenSeq};
use crate::vocab::Vocab;

/// Embedding provider over a partially masked sequence.
///
/// Returns one `dim()`-wide row per input position, already projected into
/// the feature space the emitters consume. Must be deterministic.
pub trait MaskedLm: Sync {
    fn vocab(&self) -> &Vocab;
    fn dim(&self) -> usize;
    fn embed(&self, seq: &MaskedSeq) -> Result<FeatureMatrix>;
}

/// Embedding lookup with neighbour blending.
///
/// Row `m` is `(1 - alpha) * table[ids[m]] + alpha * mean(table[ids[j]])`,
/// the mean running over observed positions `j != m` with
/// `|j - m| <= window`. With no such neighbour the row is the plain lookup.
#[derive(Debug, Clone)]
pub struct TableMaskedLm {
    vocab: Vocab,
    dim: usize,
    alpha: f64,
    window: usize,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    dim: usize,
    alpha: f64,
    window: usize,
    table: Vec<Vec<f64>>,
}

impl TableMaskedLm {
    pub fn new(vocab: Vocab, alpha: f64, window: usize, table: Vec<Vec<f64>>) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::data(format!("alpha {alpha} outside [0, 1]")));
        }
        if vocab.mask_id().is_none() {
            return Err(Error::data("masked LM vocabulary needs a mask token"));
        }
        if table.len() != vocab.len() {
            return Err(Error::data(format!(
                "embedding table has {} rows, vocabulary has {}",
                table.len(),
                vocab.len()
            )));
        }
        let dim = table.first().map_or(0, Vec::len);
        if dim == 0 || table.iter().any(|r| r.len() != dim) {
            return Err(Error::data("embedding rows must share a positive width"));
        }
        if table.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::data("embedding table must be finite"));
        }
        Ok(Self {
            vocab,
            dim,
            alpha,
            window,
            table: table.concat(),
        })
    }

    pub fn from_json_str(s: &str, vocab: Vocab) -> Result<Self> {
        let f: TableFile = serde_json::from_str(s)?;
        let lm = Self::new(vocab, f.alpha, f.window, f.table)?;
        if lm.dim != f.dim {
            return Err(Error::data(format!(
                "declared dim {} but table rows have width {}",
                f.dim, lm.dim
            )));
        }
        Ok(lm)
    }

    pub fn load(path: impl AsRef<Path>, vocab: Vocab) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, vocab)
    }

    fn lookup(&self, id: usize) -> &[f64] {
        &self.table[id * self.dim..(id + 1) * self.dim]
    }
}

impl MaskedLm for TableMaskedLm {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, seq: &MaskedSeq) -> Result<FeatureMatrix> {
        if let Some(&bad) = seq.ids().iter().find(|&&id| id >= self.vocab.len()) {
            return Err(Error::usage(format!("token id {bad} out of range")));
        }
        let n = seq.len();
        let mut values = Vec::with_capacity(n * self.dim);
        for m in 0..n {
            let base = self.lookup(seq.ids()[m]);
            let lo = m.saturating_sub(self.window);
            let hi = (m + self.window).min(n.saturating_sub(1));
            let neighbours: Vec<usize> =
                (lo..=hi).filter(|&j| j != m && seq.observed()[j]).collect();
            if neighbours.is_empty() || self.alpha == 0.0 {
                values.extend_from_slice(base);
                continue;
            }
            let k = neighbours.len() as f64;
            for (d, &own) in base.iter().enumerate() {
                let mean: f64 = neighbours
                    .iter()
                    .map(|&j| self.lookup(seq.ids()[j])[d])
                    .sum::<f64>()
                    / k;
                values.push((1.0 - self.alpha) * own + self.alpha * mean);
            }
        }
        FeatureMatrix::new(n, self.dim, values)
    }
}

/// Runs `lm.embed` and checks the row-count contract.
pub fn embed(lm: &dyn MaskedLm, seq: &MaskedSeq) -> Result<FeatureMatrix> {
    let e = lm.embed(seq)?;
    if e.rows() != seq.len() {
        return Err(Error::data(format!(
            "masked LM returned {} rows for {} positions",
            e.rows(),
            seq.len()
        )));
    }
    Ok(e)
}

/// Replaces the 0-based `positions` of `w` with the mask token.
pub fn apply_masks(w: &TokenSeq, positions: &[usize], vocab: &Vocab) -> Result<MaskedSeq> {
    let mask = vocab
        .mask_id()
        .ok_or_else(|| Error::usage("vocabulary has no mask token"))?;
    let mut ids = w.ids().to_vec();
    for &p in positions {
        let slot = ids
            .get_mut(p)
            .ok_or_else(|| Error::usage(format!("mask position {p} out of range")))?;
        *slot = mask;
    }
    Ok(MaskedSeq::new(ids, mask))
}

/// Training-time masking: draw `n ~ Uniform{1..=M}`, then mask a uniformly
/// chosen `n`-subset of positions.
pub fn sample_mask(w: &TokenSeq, vocab: &Vocab, rng: &mut Rng) -> Result<MaskedSeq> {
    if w.is_empty() {
        return Err(Error::usage("cannot sample a mask for an empty sequence"));
    }
    let n_mask = rng.uniform_inclusive(1, w.len());
    let positions = rng.subset(w.len(), n_mask);
    apply_masks(w, &positions, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence_vocab() -> Vocab {
        Vocab::from_tokens(
            "bert",
            &[
                "<blk>", "[MASK]", "Tokyo", "is", "the", "capital", "of", "Japan", ".",
            ],
            "<blk>",
            Some("[MASK]"),
        )
        .unwrap()
    }

    fn table_lm(alpha: f64, window: usize) -> TableMaskedLm {
        let v = Vocab::from_tokens(
            "b",
            &["<blk>", "[MASK]", "x", "y", "z"],
            "<blk>",
            Some("[MASK]"),
        )
        .unwrap();
        let table = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![4.0, 4.0],
        ];
        TableMaskedLm::new(v, alpha, window, table).unwrap()
    }

    #[test]
    fn masks_the_example_sentence() {
        let v = sentence_vocab();
        let w = v
            .seq_from_strs(&["Tokyo", "is", "the", "capital", "of", "Japan", "."])
            .unwrap();
        let masked = apply_masks(&w, &[1, 3], &v).unwrap();
        assert_eq!(
            v.render(masked.ids()),
            ["Tokyo", "[MASK]", "the", "[MASK]", "of", "Japan", "."]
        );
        assert_eq!(masked.masked_positions(), vec![1, 3]);
    }

    #[test]
    fn empty_and_full_masks() {
        let v = sentence_vocab();
        let w = v.seq_from_strs(&["Tokyo", "is"]).unwrap();
        let none = apply_masks(&w, &[], &v).unwrap();
        assert_eq!(none.ids(), w.ids());
        assert!(none.observed().iter().all(|&o| o));
        let all = apply_masks(&w, &[0, 1], &v).unwrap();
        assert_eq!(all.masked_count(), 2);
        assert!(matches!(apply_masks(&w, &[2], &v), Err(Error::Usage(_))));
    }

    #[test]
    fn single_token_is_always_masked() {
        let v = sentence_vocab();
        let w = v.seq_from_strs(&["Japan"]).unwrap();
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            assert_eq!(sample_mask(&w, &v, &mut rng).unwrap().masked_count(), 1);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let v = sentence_vocab();
        let w = v
            .seq_from_strs(&["Tokyo", "is", "the", "capital", "of", "Japan", "."])
            .unwrap();
        let a = sample_mask(&w, &v, &mut Rng::new(99)).unwrap();
        let b = sample_mask(&w, &v, &mut Rng::new(99)).unwrap();
        assert_eq!(a, b);
        assert!(sample_mask(&v.seq(vec![]).unwrap(), &v, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn zero_alpha_is_plain_lookup() {
        let lm = table_lm(0.0, 1);
        let seq = MaskedSeq::new(vec![2, 1, 4], 1);
        let e = embed(&lm, &seq).unwrap();
        assert_eq!(e.row(0), &[1.0, 0.0]);
        assert_eq!(e.row(1), &[0.0, 0.0]);
        assert_eq!(e.row(2), &[4.0, 4.0]);
        let swapped = embed(&lm, &MaskedSeq::new(vec![4, 1, 2], 1)).unwrap();
        assert_eq!(swapped.row(0), e.row(2));
        assert_eq!(swapped.row(2), e.row(0));
    }

    #[test]
    fn half_alpha_blends_observed_neighbours() {
        let lm = table_lm(0.5, 1);
        // x [MASK] z: position 0 sees nothing observed within distance 1
        // except position 1, which is masked
        let e = embed(&lm, &MaskedSeq::new(vec![2, 1, 4], 1)).unwrap();
        assert_eq!(e.row(0), &[1.0, 0.0]);
        // masked middle: 0.5*[0,0] + 0.5*mean([1,0],[4,4]) = [1.25, 1.0]
        assert_eq!(e.row(1), &[1.25, 1.0]);
        assert_eq!(e.row(2), &[4.0, 4.0]);
        // x y z fully observed
        let e = embed(&lm, &MaskedSeq::new(vec![2, 3, 4], 1)).unwrap();
        assert_eq!(e.row(0), &[0.5, 1.0]);
        assert_eq!(e.row(1), &[1.25, 2.0]);
        assert_eq!(e.row(2), &[2.0, 3.0]);
    }

    #[test]
    fn embed_rejects_bad_ids() {
        let lm = table_lm(0.0, 1);
        assert!(embed(&lm, &MaskedSeq::new(vec![9], 1)).is_err());
    }
}
