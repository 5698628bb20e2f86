//! File loading and formatting around the core corpus types.
//!
//! Gold corpora go through the strict parser (invalid IOB is a data bug
//! worth failing on). Prediction files and tag inputs get their own
//! readers: predicted sequences are allowed to break the IOB scheme, and
//! tag inputs carry no NE column at all.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use nertag_core::corpus::{parse_conll, IobTag, PosTag, Sentence};
use nertag_core::embeddings::{parse_word2vec, PretrainedEmbeddings};

/// An annotated corpus from a CoNLL-style three-column file, fully
/// validated.
pub fn read_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading corpus {}", path.display()))?;
    let sents =
        parse_conll(&text).with_context(|| format!("parsing corpus {}", path.display()))?;
    Ok(sents)
}

/// Pretrained vectors in the word2vec text format.
pub fn read_vectors(path: &Path) -> Result<PretrainedEmbeddings> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading vectors {}", path.display()))?;
    let pre =
        parse_word2vec(&text).with_context(|| format!("parsing vectors {}", path.display()))?;
    Ok(pre)
}

/// One not-yet-tagged sentence: surfaces with POS tags.
pub type TagInput = Vec<(String, PosTag)>;

/// Sentences to tag: two-column (surface, POS) lines split on blank lines.
/// A third column is tolerated and ignored, so existing annotated files
/// can be re-tagged directly.
pub fn read_tag_input(path: &Path) -> Result<Vec<TagInput>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading input {}", path.display()))?;
    let mut sentences = Vec::new();
    let mut current: TagInput = Vec::new();
    for (num, line) in text.lines().enumerate() {
        let num = num + 1;
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 && cols.len() != 3 {
            bail!("line {num}: expected 2 or 3 tab-separated columns, found {}", cols.len());
        }
        if cols[0].is_empty() {
            bail!("line {num}: empty surface form");
        }
        let pos = PosTag::from_str(cols[1])
            .with_context(|| format!("line {num}: unknown POS tag {:?}", cols[1]))?;
        current.push((cols[0].to_string(), pos));
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// A predictions file: like a corpus, but the tag sequences may violate
/// the IOB scheme (softmax decoders genuinely emit such output), so only
/// the per-line format is checked.
pub fn read_predictions(path: &Path) -> Result<Vec<Vec<IobTag>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading predictions {}", path.display()))?;
    let mut sentences = Vec::new();
    let mut current: Vec<IobTag> = Vec::new();
    for (num, line) in text.lines().enumerate() {
        let num = num + 1;
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            bail!("line {num}: expected 3 tab-separated columns, found {}", cols.len());
        }
        let tag = IobTag::from_str(cols[2])
            .with_context(|| format!("line {num}: unknown NE tag {:?}", cols[2]))?;
        current.push(tag);
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Three-column output for tagged sentences, one blank line between
/// sentences, matching the corpus format byte for byte.
pub fn format_tagged(sentences: &[TagInput], tags: &[Vec<IobTag>]) -> String {
    assert_eq!(sentences.len(), tags.len(), "tag rows must align with input");
    let mut out = String::new();
    for (i, (sent, sent_tags)) in sentences.iter().zip(tags).enumerate() {
        assert_eq!(sent.len(), sent_tags.len(), "tag count must match sentence {i}");
        if i > 0 {
            out.push('\n');
        }
        for ((surface, pos), tag) in sent.iter().zip(sent_tags) {
            out.push_str(surface);
            out.push('\t');
            out.push_str(pos.as_str());
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn tag_input_accepts_two_and_three_columns() {
        let f = temp_file("Halo\tINT\nJoko\tNNP\tB-PER\n\nBandung\tNNP\n");
        let sents = read_tag_input(f.path()).unwrap();
        assert_eq!(sents.len(), 2);
        assert_eq!(sents[0].len(), 2);
        assert_eq!(sents[0][0], ("Halo".to_string(), PosTag::Int));
        assert_eq!(sents[1][0].0, "Bandung");
    }

    #[test]
    fn tag_input_reports_bad_lines() {
        let f = temp_file("Halo\n");
        let err = read_tag_input(f.path()).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");

        let f = temp_file("ok\tNNO\nHalo\tZZZ\n");
        let err = format!("{:#}", read_tag_input(f.path()).unwrap_err());
        assert!(err.contains("line 2") && err.contains("ZZZ"), "{err}");
    }

    #[test]
    fn empty_input_gives_no_sentences() {
        let f = temp_file("");
        assert!(read_tag_input(f.path()).unwrap().is_empty());
        assert!(read_predictions(f.path()).unwrap().is_empty());
    }

    #[test]
    fn predictions_allow_invalid_iob() {
        // An orphan I- tag is rejected by the strict corpus parser but
        // fine in a predictions file.
        let f = temp_file("promo\tNNO\tI-EVT\nhour\tNNO\tI-EVT\n");
        let tags = read_predictions(f.path()).unwrap();
        assert_eq!(tags, vec![vec![
            IobTag::from_str("I-EVT").unwrap(),
            IobTag::from_str("I-EVT").unwrap(),
        ]]);
        assert!(read_corpus(f.path()).is_err());
    }

    #[test]
    fn tagged_output_round_trips_through_the_strict_parser() {
        let input: Vec<TagInput> = vec![
            vec![("Joko".into(), PosTag::Nnp), ("makan".into(), PosTag::Vbt)],
            vec![("sate".into(), PosTag::Nno)],
        ];
        let tags = vec![
            vec![IobTag::from_str("B-PER").unwrap(), IobTag::from_str("O").unwrap()],
            vec![IobTag::from_str("B-FNB").unwrap()],
        ];
        let text = format_tagged(&input, &tags);
        let parsed = parse_conll(&text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].tokens()[0].surface(), "Joko");
    }
}
