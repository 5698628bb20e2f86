//! Tagged-corpus handling: the IOB tagset over five entity classes, the
//! 26-tag POS inventory, tab-separated corpus files, character
//! normalization, and the vocabulary shared by training and inference.
//!
//! Corpus files carry one token per line as `SURFACE<TAB>POS<TAB>NE`, with a
//! blank line between sentences. Gold NE columns must form a valid IOB
//! sequence; violations are parse errors, not warnings.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

/// The five entity classes: person, location, brand/product, event, and
/// food & beverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityType {
    Per,
    Loc,
    Ind,
    Evt,
    Fnb,
}

impl EntityType {
    pub const ALL: [EntityType; 5] =
        [EntityType::Per, EntityType::Loc, EntityType::Ind, EntityType::Evt, EntityType::Fnb];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Loc => "LOC",
            EntityType::Ind => "IND",
            EntityType::Evt => "EVT",
            EntityType::Fnb => "FNB",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, UnknownLabel> {
        EntityType::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// Part-of-speech inventory (INACL tagset, 26 tags). `Cur` is the currency
/// tag, written `$$$` in corpus files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PosTag {
    Nno,
    Nnp,
    Prn,
    Prr,
    Pri,
    Prk,
    Adj,
    Vbi,
    Vbt,
    Vbp,
    Vbl,
    Vbe,
    Adv,
    Adk,
    Neg,
    Ccn,
    Csn,
    Ppo,
    Int,
    Kua,
    Num,
    Art,
    Par,
    Uns,
    Cur,
    Sym,
}

impl PosTag {
    pub const ALL: [PosTag; 26] = [
        PosTag::Nno,
        PosTag::Nnp,
        PosTag::Prn,
        PosTag::Prr,
        PosTag::Pri,
        PosTag::Prk,
        PosTag::Adj,
        PosTag::Vbi,
        PosTag::Vbt,
        PosTag::Vbp,
        PosTag::Vbl,
        PosTag::Vbe,
        PosTag::Adv,
        PosTag::Adk,
        PosTag::Neg,
        PosTag::Ccn,
        PosTag::Csn,
        PosTag::Ppo,
        PosTag::Int,
        PosTag::Kua,
        PosTag::Num,
        PosTag::Art,
        PosTag::Par,
        PosTag::Uns,
        PosTag::Cur,
        PosTag::Sym,
    ];

    pub const COUNT: usize = 26;

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Nno => "NNO",
            PosTag::Nnp => "NNP",
            PosTag::Prn => "PRN",
            PosTag::Prr => "PRR",
            PosTag::Pri => "PRI",
            PosTag::Prk => "PRK",
            PosTag::Adj => "ADJ",
            PosTag::Vbi => "VBI",
            PosTag::Vbt => "VBT",
            PosTag::Vbp => "VBP",
            PosTag::Vbl => "VBL",
            PosTag::Vbe => "VBE",
            PosTag::Adv => "ADV",
            PosTag::Adk => "ADK",
            PosTag::Neg => "NEG",
            PosTag::Ccn => "CCN",
            PosTag::Csn => "CSN",
            PosTag::Ppo => "PPO",
            PosTag::Int => "INT",
            PosTag::Kua => "KUA",
            PosTag::Num => "NUM",
            PosTag::Art => "ART",
            PosTag::Par => "PAR",
            PosTag::Uns => "UNS",
            PosTag::Cur => "$$$",
            PosTag::Sym => "SYM",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<PosTag> {
        PosTag::ALL.get(i).copied()
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, UnknownLabel> {
        PosTag::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// IOB named-entity tag. Eleven values: `O` plus `B-X`/`I-X` for each of
/// the five entity classes.
///
/// The dense index order puts `O` at 0 followed by B/I pairs in
/// [`EntityType::ALL`] order, so an all-zero score vector decodes to all-`O`
/// under lowest-index tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IobTag {
    O,
    B(EntityType),
    I(EntityType),
}

impl IobTag {
    pub const COUNT: usize = 11;

    pub fn index(self) -> usize {
        match self {
            IobTag::O => 0,
            IobTag::B(e) => 1 + 2 * e.index(),
            IobTag::I(e) => 2 + 2 * e.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<IobTag> {
        match i {
            0 => Some(IobTag::O),
            1..=10 => {
                let e = EntityType::ALL[(i - 1) / 2];
                Some(if i % 2 == 1 { IobTag::B(e) } else { IobTag::I(e) })
            }
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = IobTag> {
        (0..IobTag::COUNT).map(|i| IobTag::from_index(i).unwrap())
    }

    /// Whether `self` may follow `prev` (`None` = sentence start) under IOB
    /// rules: `I-X` needs an immediately preceding `B-X` or `I-X`.
    pub fn can_follow(self, prev: Option<IobTag>) -> bool {
        match self {
            IobTag::I(e) => matches!(prev, Some(IobTag::B(p)) | Some(IobTag::I(p)) if p == e),
            _ => true,
        }
    }
}

impl fmt::Display for IobTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IobTag::O => f.write_str("O"),
            IobTag::B(e) => write!(f, "B-{e}"),
            IobTag::I(e) => write!(f, "I-{e}"),
        }
    }
}

impl FromStr for IobTag {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, UnknownLabel> {
        if s == "O" {
            return Ok(IobTag::O);
        }
        let err = || UnknownLabel(s.to_string());
        let (prefix, entity) = s.split_once('-').ok_or_else(err)?;
        let entity: EntityType = entity.parse().map_err(|_| err())?;
        match prefix {
            "B" => Ok(IobTag::B(entity)),
            "I" => Ok(IobTag::I(entity)),
            _ => Err(err()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

/// One IOB rule violation inside a tag sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IobViolation {
    /// Token position of the offending tag.
    pub index: usize,
    pub tag: IobTag,
    /// Tag before it, `None` at sentence start.
    pub prev: Option<IobTag>,
}

impl fmt::Display for IobViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.prev {
            Some(p) => write!(f, "{} at token {} cannot follow {}", self.tag, self.index, p),
            None => write!(f, "{} at token {} cannot start a sentence", self.tag, self.index),
        }
    }
}

/// Returns every position whose tag is illegal under IOB rules. Empty
/// result means the sequence is valid.
pub fn validate_iob(tags: &[IobTag]) -> Vec<IobViolation> {
    let mut violations = Vec::new();
    let mut prev = None;
    for (index, &tag) in tags.iter().enumerate() {
        if !tag.can_follow(prev) {
            violations.push(IobViolation { index, tag, prev });
        }
        prev = Some(tag);
    }
    violations
}

/// Half-open token span `[start, end)` labeled with an entity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("invalid IOB sequence: {0}")]
    InvalidIob(IobViolation),
    #[error("span {start}..{end} is empty or out of bounds for length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("span starting at {0} overlaps the previous span or is out of order")]
    Overlap(usize),
}

/// Extracts entity spans from a *valid* IOB sequence. The first violation
/// is reported as an error.
pub fn tags_to_spans(tags: &[IobTag]) -> Result<Vec<EntitySpan>, SpanError> {
    if let Some(&v) = validate_iob(tags).first() {
        return Err(SpanError::InvalidIob(v));
    }
    Ok(tags_to_spans_lenient(tags))
}

/// Extracts spans without requiring validity: an `I-X` with no legal
/// predecessor opens a new `X` span. Used on predicted sequences, which a
/// softmax head may emit in malformed order.
pub fn tags_to_spans_lenient(tags: &[IobTag]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (t, &tag) in tags.iter().enumerate() {
        match tag {
            IobTag::O => {
                if let Some(s) = open.take() {
                    spans.push(s);
                }
            }
            IobTag::B(e) => {
                if let Some(s) = open.take() {
                    spans.push(s);
                }
                open = Some(EntitySpan { start: t, end: t + 1, entity: e });
            }
            IobTag::I(e) => match &mut open {
                Some(s) if s.entity == e => s.end = t + 1,
                _ => {
                    if let Some(s) = open.take() {
                        spans.push(s);
                    }
                    open = Some(EntitySpan { start: t, end: t + 1, entity: e });
                }
            },
        }
    }
    if let Some(s) = open {
        spans.push(s);
    }
    spans
}

/// Inverse of [`tags_to_spans`]: writes `B-X I-X...` runs over an all-`O`
/// sequence of length `len`. Spans must be sorted, non-empty, in bounds,
/// and non-overlapping.
pub fn spans_to_tags(spans: &[EntitySpan], len: usize) -> Result<Vec<IobTag>, SpanError> {
    let mut tags = alloc::vec![IobTag::O; len];
    let mut prev_end = 0;
    for span in spans {
        if span.start >= span.end || span.end > len {
            return Err(SpanError::OutOfBounds { start: span.start, end: span.end, len });
        }
        if span.start < prev_end {
            return Err(SpanError::Overlap(span.start));
        }
        prev_end = span.end;
        tags[span.start] = IobTag::B(span.entity);
        for tag in tags.iter_mut().take(span.end).skip(span.start + 1) {
            *tag = IobTag::I(span.entity);
        }
    }
    Ok(tags)
}

/// Number of distinct character codes after normalization: `a`..`z`, the
/// digit class `0`, and the unknown class.
pub const CHAR_VOCAB_SIZE: usize = 28;
pub const DIGIT_CHAR_INDEX: usize = 26;
pub const UNK_CHAR_INDEX: usize = 27;

/// Replacement character standing in for anything outside `a-z0-9` after
/// lowercasing.
pub const UNK_CHAR: char = '\u{fffd}';

fn char_index(c: char) -> usize {
    let lc = c.to_ascii_lowercase();
    if lc.is_ascii_lowercase() {
        lc as usize - 'a' as usize
    } else if lc.is_ascii_digit() {
        DIGIT_CHAR_INDEX
    } else {
        UNK_CHAR_INDEX
    }
}

/// Maps a surface form to character-class indices: ASCII letters are
/// lowercased, every digit collapses to one class, anything else to the
/// unknown class. Total and length-preserving (per `char`).
pub fn normalize_chars(surface: &str) -> Vec<usize> {
    surface.chars().map(char_index).collect()
}

/// The normalized surface as text; used as the key for word lookups, so
/// `Rp35` and `rp99` share an entry.
pub fn normalized_form(surface: &str) -> String {
    surface
        .chars()
        .map(|c| match char_index(c) {
            DIGIT_CHAR_INDEX => '0',
            UNK_CHAR_INDEX => UNK_CHAR,
            i => (b'a' + i as u8) as char,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("token surface is empty")]
    EmptySurface,
    #[error("token surface contains a tab or line break")]
    IllegalCharacter,
}

/// One corpus token: surface form, POS tag, NE tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    surface: String,
    pos: PosTag,
    ne: IobTag,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: PosTag, ne: IobTag) -> Result<Token, TokenError> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(TokenError::EmptySurface);
        }
        if surface.contains(['\t', '\n', '\r']) {
            return Err(TokenError::IllegalCharacter);
        }
        Ok(Token { surface, pos, ne })
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn pos(&self) -> PosTag {
        self.pos
    }

    pub fn ne(&self) -> IobTag {
        self.ne
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SentenceError {
    #[error("sentence has no tokens")]
    Empty,
    #[error("invalid IOB sequence: {0}")]
    InvalidIob(IobViolation),
}

/// Non-empty token sequence whose NE column is a valid IOB sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Result<Sentence, SentenceError> {
        if tokens.is_empty() {
            return Err(SentenceError::Empty);
        }
        let tags: Vec<IobTag> = tokens.iter().map(Token::ne).collect();
        if let Some(&v) = validate_iob(&tags).first() {
            return Err(SentenceError::InvalidIob(v));
        }
        Ok(Sentence { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn ne_tags(&self) -> Vec<IobTag> {
        self.tokens.iter().map(Token::ne).collect()
    }

    /// Gold entity spans; infallible because the IOB sequence was validated
    /// at construction.
    pub fn spans(&self) -> Vec<EntitySpan> {
        tags_to_spans_lenient(&self.ne_tags())
    }

    /// Token surfaces joined by single spaces.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(tok.surface());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: expected 3 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: empty token surface")]
    EmptySurface { line: usize },
    #[error("line {line}: unknown POS tag `{symbol}`")]
    UnknownPos { line: usize, symbol: String },
    #[error("line {line}: unknown NE label `{label}`")]
    UnknownNe { line: usize, label: String },
    #[error("line {line}: {violation}")]
    InvalidIob { line: usize, violation: IobViolation },
}

/// Parses a tab-separated corpus. Blank lines delimit sentences; runs of
/// blank lines are tolerated. Errors carry 1-based line numbers.
pub fn parse_conll(text: &str) -> Result<Vec<Sentence>, ParseError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut token_lines: Vec<usize> = Vec::new();

    let mut flush = |tokens: &mut Vec<Token>, token_lines: &mut Vec<usize>| {
        if tokens.is_empty() {
            return Ok(());
        }
        let tags: Vec<IobTag> = tokens.iter().map(Token::ne).collect();
        if let Some(&violation) = validate_iob(&tags).first() {
            return Err(ParseError::InvalidIob { line: token_lines[violation.index], violation });
        }
        sentences.push(Sentence { tokens: core::mem::take(tokens) });
        token_lines.clear();
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            flush(&mut tokens, &mut token_lines)?;
            continue;
        }
        let mut cols = raw.split('\t');
        let (surface, pos, ne) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
            (Some(s), Some(p), Some(n), None) => (s, p, n),
            _ => {
                let found = raw.split('\t').count();
                return Err(ParseError::ColumnCount { line, found });
            }
        };
        let pos: PosTag =
            pos.parse().map_err(|_| ParseError::UnknownPos { line, symbol: pos.to_string() })?;
        let ne: IobTag =
            ne.parse().map_err(|_| ParseError::UnknownNe { line, label: ne.to_string() })?;
        let token = Token::new(surface, pos, ne).map_err(|e| match e {
            TokenError::EmptySurface => ParseError::EmptySurface { line },
            // `lines()` and the tab split make other illegal characters
            // unreachable here.
            TokenError::IllegalCharacter => ParseError::EmptySurface { line },
        })?;
        tokens.push(token);
        token_lines.push(line);
    }
    flush(&mut tokens, &mut token_lines)?;
    Ok(sentences)
}

/// Renders sentences back to the tab-separated format. Inverse of
/// [`parse_conll`] for any corpus that parser accepts.
pub fn serialize_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for (i, sent) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for tok in sent.tokens() {
            out.push_str(tok.surface());
            out.push('\t');
            out.push_str(tok.pos().as_str());
            out.push('\t');
            let _ = fmt::write(&mut out, format_args!("{}", tok.ne()));
            out.push('\n');
        }
    }
    out
}

/// Word vocabulary keyed by normalized surface form. Index 0 is reserved
/// for unknown words; known words occupy `1..word_count()` in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: BTreeMap<String, u32>,
}

/// Index of the unknown-word entry.
pub const UNK_WORD_INDEX: u32 = 0;

impl Vocab {
    /// Builds a vocabulary from training sentences plus the words of a
    /// pretrained embedding table; both sides are normalized first.
    pub fn build(sentences: &[Sentence], pretrained_words: &BTreeSet<String>) -> Vocab {
        let mut forms = BTreeSet::new();
        for sent in sentences {
            for tok in sent.tokens() {
                forms.insert(normalized_form(tok.surface()));
            }
        }
        for w in pretrained_words {
            forms.insert(normalized_form(w));
        }
        let words =
            forms.into_iter().enumerate().map(|(i, w)| (w, i as u32 + 1)).collect();
        Vocab { words }
    }

    /// Reassembles a vocabulary from its sorted word list (as produced by
    /// [`Vocab::words`]); used when loading saved models.
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Vocab {
        let words = words.into_iter().enumerate().map(|(i, w)| (w, i as u32 + 1)).collect();
        Vocab { words }
    }

    /// Total entries including the unknown slot.
    pub fn word_count(&self) -> usize {
        self.words.len() + 1
    }

    /// Index for a surface form, normalizing first; unseen words map to
    /// [`UNK_WORD_INDEX`].
    pub fn word_index(&self, surface: &str) -> u32 {
        self.words.get(&normalized_form(surface)).copied().unwrap_or(UNK_WORD_INDEX)
    }

    /// Known words in index order (index 1 first).
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.keys().map(String::as_str)
    }
}
