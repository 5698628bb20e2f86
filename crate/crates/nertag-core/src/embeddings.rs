//! Input-layer embeddings: pretrained word vectors, compositional
//! character-to-word (C2W) embeddings built from two character LSTMs, and
//! POS-tag embeddings. `assemble_input` concatenates the pieces into the
//! per-token vector the sentence Bi-LSTM consumes.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{
    normalize_chars, normalized_form, Sentence, Token, Vocab, CHAR_VOCAB_SIZE, UNK_WORD_INDEX,
};
use crate::lstm::{lstm_forward, LstmParams};
use crate::math::Mat;

/// A lookup table of embedding rows. The first `trainable_rows` rows take
/// gradient updates; the rest stay frozen. Storage is row major, so the
/// trainable block is a contiguous prefix of the weight data.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Mat,
    pub trainable_rows: usize,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize, trainable: bool) -> Self {
        EmbeddingTable {
            weights: Mat::zeros(rows, dim),
            trainable_rows: if trainable { rows } else { 0 },
        }
    }

    pub fn init(rows: usize, dim: usize, trainable: bool, rng: &mut impl Rng) -> Self {
        let mut t = EmbeddingTable::zeros(rows, dim, trainable);
        crate::init::xavier_fill(&mut t.weights, rng);
        t
    }

    pub fn rows(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.weights.row(i)
    }

    /// Flat length of the trainable prefix of the weight data.
    pub fn trainable_len(&self) -> usize {
        self.trainable_rows * self.dim()
    }
}

/// Character-to-word parameters: a character embedding table and one LSTM
/// per reading direction. The word representation is the concatenation of
/// the final hidden states of both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct C2wParams {
    pub char_table: EmbeddingTable,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl C2wParams {
    pub fn init(char_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        C2wParams {
            char_table: EmbeddingTable::init(CHAR_VOCAB_SIZE, char_dim, true, rng),
            fwd: LstmParams::init(hidden, char_dim, rng),
            bwd: LstmParams::init(hidden, char_dim, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden_size()
    }
}

/// Runs both character LSTMs over a word's normalized character indices
/// and concatenates their final hidden states. Panics on an empty word.
pub fn c2w_embed(chars: &[usize], p: &C2wParams) -> Vec<f64> {
    assert!(!chars.is_empty(), "c2w_embed on empty word");
    let xs: Vec<Vec<f64>> = chars.iter().map(|&c| p.char_table.row(c).to_vec()).collect();
    let fwd_states = lstm_forward(&xs, &p.fwd, None);
    let rev: Vec<Vec<f64>> = xs.into_iter().rev().collect();
    let bwd_states = lstm_forward(&rev, &p.bwd, None);

    let mut out = fwd_states.last().unwrap().h.clone();
    out.extend_from_slice(&bwd_states.last().unwrap().h);
    out
}

/// Pretrained word vectors keyed by normalized form.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedEmbeddings {
    dim: usize,
    index: BTreeMap<String, usize>,
    vectors: Mat,
    /// Normalized forms that appeared more than once in the source file;
    /// the last occurrence won.
    pub duplicates: Vec<String>,
}

impl PretrainedEmbeddings {
    /// An empty table with the given dimension, for training without
    /// pretrained vectors.
    pub fn empty(dim: usize) -> Self {
        PretrainedEmbeddings { dim, index: BTreeMap::new(), vectors: Mat::zeros(0, dim), duplicates: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(&normalized_form(word)).map(|&r| self.vectors.row(r))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Word2vecError {
    #[error("missing `<count> <dim>` header line")]
    MissingHeader,
    #[error("malformed header `{0}`")]
    BadHeader(String),
    #[error("line {line}: expected {expected} values for `{word}`, found {found}")]
    DimensionMismatch { line: usize, word: String, expected: usize, found: usize },
    #[error("line {line}: unparsable value `{value}`")]
    BadValue { line: usize, value: String },
    #[error("header declares {declared} rows, file has {found}")]
    RowCountMismatch { declared: usize, found: usize },
}

/// Parses the word2vec text format: a `<count> <dim>` header followed by
/// `count` lines of `word v1 .. v_dim`. Keys are normalized; when two rows
/// normalize to the same form the later one wins and the form is recorded
/// in `duplicates`.
pub fn parse_word2vec(text: &str) -> Result<PretrainedEmbeddings, Word2vecError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Word2vecError::MissingHeader)?;
    let mut parts = header.split_whitespace();
    let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(d), None) => {
            let c: usize = c.parse().map_err(|_| Word2vecError::BadHeader(header.to_string()))?;
            let d: usize = d.parse().map_err(|_| Word2vecError::BadHeader(header.to_string()))?;
            (c, d)
        }
        _ => return Err(Word2vecError::BadHeader(header.to_string())),
    };

    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut duplicates = Vec::new();
    let mut found = 0usize;
    for (i, raw) in lines {
        let line = i + 1;
        found += 1;
        let mut fields = raw.split_whitespace();
        let word = fields.next().expect("non-blank line has a first field");
        let mut vector = Vec::with_capacity(dim);
        for value in fields {
            let v: f64 = value
                .parse()
                .map_err(|_| Word2vecError::BadValue { line, value: value.to_string() })?;
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(Word2vecError::DimensionMismatch {
                line,
                word: word.to_string(),
                expected: dim,
                found: vector.len(),
            });
        }
        let key = normalized_form(word);
        if rows.insert(key.clone(), vector).is_some() {
            duplicates.push(key);
        }
    }
    if found != count {
        return Err(Word2vecError::RowCountMismatch { declared: count, found });
    }

    let mut index = BTreeMap::new();
    let mut vectors = Vec::with_capacity(rows.len());
    for (r, (word, vector)) in rows.into_iter().enumerate() {
        index.insert(word, r);
        vectors.push(vector);
    }
    Ok(PretrainedEmbeddings { dim, index, vectors: Mat::from_rows(&vectors), duplicates })
}

/// Builds the model's word table from a vocabulary and pretrained vectors.
///
/// Row 0 is the unknown-word row (random init) and always trains; every
/// vocabulary word found in `pretrained` gets its vector as a row, frozen
/// unless `trainable` asks for fine-tuning. The returned map takes
/// vocabulary indices to table rows, with out-of-table words falling back
/// to row 0.
pub fn build_word_table(
    vocab: &Vocab,
    pretrained: &PretrainedEmbeddings,
    trainable: bool,
    rng: &mut impl Rng,
) -> (EmbeddingTable, Vec<u32>) {
    let dim = pretrained.dim();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(1 + pretrained.len());
    let mut unk = Mat::zeros(1, dim);
    crate::init::xavier_fill(&mut unk, rng);
    rows.push(unk.row(0).to_vec());

    let mut word_rows = alloc::vec![UNK_WORD_INDEX; vocab.word_count()];
    for (i, word) in vocab.words().enumerate() {
        let vocab_index = i + 1;
        if let Some(v) = pretrained.get(word) {
            word_rows[vocab_index] = rows.len() as u32;
            rows.push(v.to_vec());
        }
    }
    let trainable_rows = if trainable { rows.len() } else { 1 };
    (EmbeddingTable { weights: Mat::from_rows(&rows), trainable_rows }, word_rows)
}

/// Word-vector lookup for a surface form: normalized vocabulary lookup,
/// then the table row behind it (the unknown row when the word is absent
/// from the table).
pub fn lookup_word<'a>(
    surface: &str,
    table: &'a EmbeddingTable,
    word_rows: &[u32],
    vocab: &Vocab,
) -> &'a [f64] {
    let idx = vocab.word_index(surface) as usize;
    table.row(word_rows[idx] as usize)
}

/// A token reduced to the indices the model consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenInput {
    /// Vocabulary index of the normalized surface.
    pub word: u32,
    /// Normalized character indices; never empty.
    pub chars: Vec<usize>,
    /// POS index.
    pub pos: usize,
}

impl TokenInput {
    pub fn from_token(tok: &Token, vocab: &Vocab) -> TokenInput {
        TokenInput {
            word: vocab.word_index(tok.surface()),
            chars: normalize_chars(tok.surface()),
            pos: tok.pos().index(),
        }
    }
}

/// Indexes a whole sentence against a vocabulary.
pub fn index_sentence(vocab: &Vocab, sent: &Sentence) -> Vec<TokenInput> {
    sent.tokens().iter().map(|t| TokenInput::from_token(t, vocab)).collect()
}

/// Concatenates word vector, C2W vector, and (when present) POS vector for
/// one token.
pub fn assemble_input(
    input: &TokenInput,
    word_table: &EmbeddingTable,
    word_rows: &[u32],
    c2w: &C2wParams,
    pos_table: Option<&EmbeddingTable>,
) -> Vec<f64> {
    let row = word_rows[input.word as usize] as usize;
    let mut x = word_table.row(row).to_vec();
    x.extend_from_slice(&c2w_embed(&input.chars, c2w));
    if let Some(pos) = pos_table {
        x.extend_from_slice(pos.row(input.pos));
    }
    x
}
