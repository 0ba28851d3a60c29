//! Brute-force reference implementations used by the integration and
//! acceptance tests. Everything here is deliberately naive and shares no
//! code with the library's dynamic programs.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use bectra::{EmissionMatrix, JointLattice, PredictionEmitter, TokenId};

/// Merge repeats, then drop blanks.
pub fn collapse(a: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &x in a {
        if Some(x) != prev && x != blank {
            out.push(x);
        }
        prev = Some(x);
    }
    out
}

/// Linear-domain probability of `w`: the sum over every length-T
/// sequence over all columns that collapses to `w`, skipping `excluded`
/// columns (such as a mask column).
pub fn ctc_probability(e: &EmissionMatrix, w: &[usize], blank: usize, excluded: &[usize]) -> f64 {
    let cols: Vec<usize> = (0..e.cols()).filter(|c| !excluded.contains(c)).collect();
    let frames = e.rows();
    let mut digits = vec![0usize; frames];
    let mut total = 0.0;
    loop {
        let a: Vec<usize> = digits.iter().map(|&d| cols[d]).collect();
        if collapse(&a, blank) == w {
            total += a
                .iter()
                .enumerate()
                .map(|(t, &v)| e.get(t, v).exp())
                .product::<f64>();
        }
        let mut i = 0;
        loop {
            if i == frames {
                return total;
            }
            digits[i] += 1;
            if digits[i] < cols.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Sum over every monotone lattice path that emits `w` and ends with a
/// blank out of the last node.
pub fn transducer_probability(lattice: &JointLattice, w: &[usize], blank: usize) -> f64 {
    fn walk(l: &JointLattice, w: &[usize], blank: usize, t: usize, u: usize) -> f64 {
        let last_t = l.frames() - 1;
        let mut p = 0.0;
        if u < w.len() {
            p += l.get(t, u, w[u]).exp() * walk(l, w, blank, t, u + 1);
        }
        if t < last_t {
            p += l.get(t, u, blank).exp() * walk(l, w, blank, t + 1, u);
        } else if u == w.len() {
            p += l.get(t, u, blank).exp();
        }
        p
    }
    walk(lattice, w, blank, 0, 0)
}

/// Same as [`transducer_probability`] but querying an emitter directly.
pub fn emitter_probability(
    em: &dyn PredictionEmitter,
    frames: usize,
    w: &[usize],
    blank: usize,
) -> f64 {
    fn walk(
        em: &dyn PredictionEmitter,
        frames: usize,
        w: &[usize],
        blank: usize,
        t: usize,
        u: usize,
    ) -> f64 {
        let row = em.step(&w[..u], t);
        let mut p = 0.0;
        if u < w.len() {
            p += row[w[u]].exp() * walk(em, frames, w, blank, t, u + 1);
        }
        if t + 1 < frames {
            p += row[blank].exp() * walk(em, frames, w, blank, t + 1, u);
        } else if u == w.len() {
            p += row[blank].exp();
        }
        p
    }
    walk(em, frames, w, blank, 0, 0)
}

/// All sequences over `tokens` of length `0..=max_len`.
pub fn all_sequences<T: Clone>(tokens: &[T], max_len: usize) -> Vec<Vec<T>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for t in tokens {
                let mut q: Vec<T> = p.clone();
                q.push(t.clone());
                next.push(q);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Highest-probability output of length at most `max_len`, ties to the
/// lexicographically smaller sequence. Returns the sequence and its log
/// probability.
pub fn exhaustive_decode(
    em: &dyn PredictionEmitter,
    frames: usize,
    tokens: &[TokenId],
    blank: usize,
    max_len: usize,
) -> (Vec<TokenId>, f64) {
    let mut best: Option<(Vec<TokenId>, f64)> = None;
    for y in all_sequences(tokens, max_len) {
        let lp = emitter_probability(em, frames, &y, blank).ln();
        let better = match &best {
            None => true,
            Some((by, bs)) => lp > *bs || (lp == *bs && y < *by),
        };
        if better {
            best = Some((y, lp));
        }
    }
    best.expect("at least the empty sequence")
}

/// Levenshtein distance by its recursive definition, memoized on suffix
/// positions.
pub fn edit_distance_recursive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(
        a: &[T],
        b: &[T],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j + 1, memo)
                .min(go(a, b, i + 1, j, memo))
                .min(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Number of greedy longest-match wordpieces of `text` over `pieces`.
/// Panics if a word cannot be covered.
pub fn wordpiece_count(text: &str, pieces: &HashSet<String>, marker: &str) -> usize {
    let mut count = 0;
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            loop {
                let body: String = chars[start..end].iter().collect();
                let key = if start == 0 {
                    body
                } else {
                    format!("{marker}{body}")
                };
                if pieces.contains(&key) {
                    break;
                }
                end -= 1;
                assert!(end > start, "word {word:?} not coverable");
            }
            count += 1;
            start = end;
        }
    }
    count
}

/// Relative error between an analytic gradient and central differences of
/// `f` around `x`, as `|g - fd| / max(|g|, |fd|)` in the 2-norm.
pub fn finite_difference_error(x: &[f64], g: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut fd = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        fd.push((up - down) / (2.0 * step));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let scale = norm(g).max(norm(&fd)).max(1e-12);
    norm(&diff) / scale
}
