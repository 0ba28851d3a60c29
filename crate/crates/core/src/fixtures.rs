//! Seeded fixture builders shared by tests, the acceptance suite and the CLI
//! examples.

use crate::bertctc::LinearConcatEmitter;
use crate::error::Result;
use crate::masklm::TableMaskedLm;
use crate::matrix::{EmissionMatrix, FeatureMatrix};
use crate::rng::Rng;
use crate::seq::TokenSeq;
use crate::vocab::{TokenId, Vocab};

/// Uniform logits in `[-scale, scale]`, softmax-normalized.
pub fn random_emissions(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> EmissionMatrix {
    let logits = random_logits(rng, rows * cols, scale);
    EmissionMatrix::from_logits(rows, cols, logits).expect("finite logits")
}

pub fn random_logits(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * (2.0 * rng.uniform_f64() - 1.0))
        .collect()
}

/// Output-token sequence with length drawn from `0..=max_len`.
pub fn random_seq(rng: &mut Rng, vocab: &Vocab, max_len: usize) -> TokenSeq {
    let outputs: Vec<TokenId> = vocab.output_ids().collect();
    let len = rng.uniform_inclusive(0, max_len);
    let ids = (0..len)
        .map(|_| outputs[rng.uniform_inclusive(0, outputs.len() - 1)])
        .collect();
    vocab.seq(ids).expect("output ids")
}

/// Emissions whose best path collapses to `ids`: one frame peaked on each
/// token followed by one blank-peaked frame. Off-peak entries are jittered.
pub fn peaked_emissions(
    ids: &[TokenId],
    vocab: &Vocab,
    peak: f64,
    rng: &mut Rng,
) -> EmissionMatrix {
    let cols = vocab.len();
    let mut logits = Vec::new();
    let mut frame = |hot: TokenId, rng: &mut Rng| {
        let mut row = random_logits(rng, cols, 0.1);
        row[hot] = peak;
        logits.extend(row);
    };
    frame(vocab.blank_id(), rng);
    for &id in ids {
        frame(id, rng);
        frame(vocab.blank_id(), rng);
    }
    let rows = 2 * ids.len() + 1;
    EmissionMatrix::from_logits(rows, cols, logits).expect("finite logits")
}

/// One utterance of the homophone set: encoder output and reference.
#[derive(Debug, Clone)]
pub struct HomophoneUtterance {
    pub h: FeatureMatrix,
    pub reference: TokenSeq,
    /// Whether the acoustics alone favor the wrong homophone.
    pub acoustically_wrong: bool,
}

/// Sentences in which "new" and "knew" sound alike and only the surrounding
/// words tell them apart.
///
/// The masked LM embeds context words into a two-dimensional space ("place"
/// words on the first axis, "person" words on the second) and the mask
/// token at the origin. The conditioned emitter's acoustic projection is the
/// identity on `H`, and its context projection pushes the pooled first axis
/// toward "new" and the second toward "knew". With every token masked the
/// context term vanishes and the emitter reduces to the acoustics.
#[derive(Debug, Clone)]
pub struct HomophoneFixture {
    pub vocab: Vocab,
    pub lm: TableMaskedLm,
    pub emitter: LinearConcatEmitter,
    pub utterances: Vec<HomophoneUtterance>,
}

const HOMOPHONE_TOKENS: [&str; 13] = [
    "<blk>", "[MASK]", "new", "knew", "york", "city", "it", "that", "i", "she", "the", "is", "big",
];

const HOMOPHONE_SENTENCES: [&str; 24] = [
    "new york",
    "new york city",
    "the new city",
    "new city",
    "the city is new",
    "york is new",
    "the new york",
    "new big city",
    "big new york",
    "the big new city",
    "new york is big",
    "the city is big new",
    "i knew it",
    "she knew it",
    "i knew that",
    "she knew that",
    "knew it",
    "she knew",
    "i knew",
    "that i knew",
    "it is she i knew",
    "she knew i",
    "i knew she",
    "i knew it is big",
];

const PEAK: f64 = 8.0;
const CONTEXT_GAIN: f64 = 3.0;

pub fn homophone_fixture(seed: u64) -> Result<HomophoneFixture> {
    let vocab = Vocab::from_tokens("homophone", &HOMOPHONE_TOKENS, "<blk>", Some("[MASK]"))?;
    let cols = vocab.len();
    let id = |t: &str| vocab.id(t).expect("fixture token");

    let mut table = vec![vec![0.0, 0.0]; cols];
    for t in ["york", "city"] {
        table[id(t)] = vec![1.0, 0.0];
    }
    for t in ["it", "that", "i", "she"] {
        table[id(t)] = vec![0.0, 1.0];
    }
    let lm = TableMaskedLm::new(vocab.clone(), 0.0, 1, table)?;

    let acoustic: Vec<Vec<f64>> = (0..cols)
        .map(|i| (0..cols).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut context = vec![vec![0.0; cols]; 2];
    context[0][id("new")] = CONTEXT_GAIN;
    context[1][id("knew")] = CONTEXT_GAIN;
    let emitter = LinearConcatEmitter::new(acoustic, context)?;

    let mut rng = Rng::new(seed);
    let (new, knew) = (id("new"), id("knew"));
    let mut utterances = Vec::new();
    for (n, sentence) in HOMOPHONE_SENTENCES.iter().enumerate() {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        let reference = vocab.seq_from_strs(&words)?;
        // every fourth utterance is acoustically clear
        let acoustically_wrong = n % 4 != 3;
        let margin = 0.2 + 0.3 * rng.uniform_f64();
        let mut rows = vec![frame(&mut rng, cols, vocab.blank_id())];
        for &tok in reference.ids() {
            let mut row = frame(&mut rng, cols, tok);
            if tok == new || tok == knew {
                let other = if tok == new { knew } else { new };
                row[tok] = PEAK;
                row[other] = if acoustically_wrong {
                    PEAK + margin
                } else {
                    PEAK - margin
                };
            }
            rows.push(row);
            rows.push(frame(&mut rng, cols, vocab.blank_id()));
        }
        utterances.push(HomophoneUtterance {
            h: FeatureMatrix::from_rows(&rows, cols)?,
            reference,
            acoustically_wrong,
        });
    }
    Ok(HomophoneFixture {
        vocab,
        lm,
        emitter,
        utterances,
    })
}

fn frame(rng: &mut Rng, cols: usize, hot: TokenId) -> Vec<f64> {
    let mut row = random_logits(rng, cols, 0.1);
    row[hot] = PEAK;
    row
}

/// Two vocabularies over the same small word list: a character-level ASR
/// vocabulary and a masked-LM vocabulary holding some whole words, some
/// multi-character pieces and every single character.
#[derive(Debug, Clone)]
pub struct DualVocabFixture {
    pub asr: Vocab,
    pub bert: Vocab,
    pub words: Vec<&'static str>,
}

const DUAL_WORDS: [&str; 12] = [
    "tokyo", "is", "the", "capital", "of", "japan", "mclean", "lane", "new", "york", "it", "a",
];

pub fn dual_vocab_fixture() -> Result<DualVocabFixture> {
    let letters: Vec<char> = {
        let mut cs: Vec<char> = DUAL_WORDS.iter().flat_map(|w| w.chars()).collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    };
    let mut asr = vec!["<blk>".to_string()];
    for c in &letters {
        asr.push(c.to_string());
        asr.push(format!("##{c}"));
    }
    let mut bert = vec!["<blk>".to_string(), "[MASK]".to_string()];
    for w in [
        "tokyo", "is", "the", "of", "japan", "new", "it", "a", "mc", "cap", "lane",
    ] {
        bert.push(w.to_string());
    }
    for p in ["##ital", "##lean", "##york", "##an"] {
        bert.push(p.to_string());
    }
    for c in &letters {
        for t in [c.to_string(), format!("##{c}")] {
            if !bert.contains(&t) {
                bert.push(t);
            }
        }
    }
    let asr_refs: Vec<&str> = asr.iter().map(String::as_str).collect();
    let bert_refs: Vec<&str> = bert.iter().map(String::as_str).collect();
    Ok(DualVocabFixture {
        asr: Vocab::from_tokens("asr", &asr_refs, "<blk>", None)?,
        bert: Vocab::from_tokens("bert", &bert_refs, "<blk>", Some("[MASK]"))?,
        words: DUAL_WORDS.to_vec(),
    })
}

impl DualVocabFixture {
    /// Between one and `max_words` words drawn uniformly from the list.
    pub fn random_sentence(&self, rng: &mut Rng, max_words: usize) -> String {
        let n = rng.uniform_inclusive(1, max_words);
        (0..n)
            .map(|_| self.words[rng.uniform_inclusive(0, self.words.len() - 1)])
            .collect::<Vec<_>>()
            .join(" ")
    }
}
