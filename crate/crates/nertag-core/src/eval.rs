//! Entity-level evaluation: exact-match span scoring with per-class and
//! micro-averaged precision, recall, and F1.
//!
//! A predicted span counts only when its start, end, and entity class all
//! match a gold span; partial overlaps score as one false positive plus
//! one false negative. Gold sequences must be valid IOB; predictions are
//! segmented leniently so malformed softmax output still evaluates.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::{
    tags_to_spans, tags_to_spans_lenient, EntitySpan, EntityType, IobTag, IobViolation, Sentence,
    SpanError,
};

/// Exact-match counts for one entity class (or pooled over all classes).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassScore {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ClassScore {
    /// `tp / (tp + fp)`; 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.true_pos, self.true_pos + self.false_pos)
    }

    /// `tp / (tp + fn)`; 0 when no gold spans exist.
    pub fn recall(&self) -> f64 {
        ratio(self.true_pos, self.true_pos + self.false_neg)
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class scores plus the micro-averaged overall row (pooled counts,
/// not an average of per-class F1).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScoreReport {
    pub per_class: [ClassScore; 5],
    pub overall: ClassScore,
}

impl ScoreReport {
    pub fn class(&self, entity: EntityType) -> &ClassScore {
        &self.per_class[entity.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences, predictions have {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {index}: gold has {gold} tokens, prediction has {pred}")]
    SentenceLength { index: usize, gold: usize, pred: usize },
    #[error("sentence {index}: gold tags invalid: {violation}")]
    InvalidGold { index: usize, violation: IobViolation },
}

fn gold_spans(index: usize, tags: &[IobTag]) -> Result<Vec<EntitySpan>, EvalError> {
    tags_to_spans(tags).map_err(|e| match e {
        SpanError::InvalidIob(violation) => EvalError::InvalidGold { index, violation },
        // tags_to_spans only returns IOB errors.
        _ => unreachable!(),
    })
}

/// Scores aligned gold and predicted tag sequences.
pub fn score(gold: &[Vec<IobTag>], pred: &[Vec<IobTag>]) -> Result<ScoreReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::SentenceCount { gold: gold.len(), pred: pred.len() });
    }
    let mut report = ScoreReport::default();
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::SentenceLength { index, gold: g.len(), pred: p.len() });
        }
        let gold_set: BTreeSet<EntitySpan> = gold_spans(index, g)?.into_iter().collect();
        let pred_set: BTreeSet<EntitySpan> = tags_to_spans_lenient(p).into_iter().collect();

        for span in &pred_set {
            let class = &mut report.per_class[span.entity.index()];
            if gold_set.contains(span) {
                class.true_pos += 1;
            } else {
                class.false_pos += 1;
            }
        }
        for span in &gold_set {
            if !pred_set.contains(span) {
                report.per_class[span.entity.index()].false_neg += 1;
            }
        }
    }
    for class in &report.per_class {
        report.overall.true_pos += class.true_pos;
        report.overall.false_pos += class.false_pos;
        report.overall.false_neg += class.false_neg;
    }
    Ok(report)
}

/// Renders the report as TSV: one row per class in PER, LOC, IND, EVT,
/// FNB order, then OVERALL. Columns are
/// `class tp fp fn precision recall f1`, metrics with four decimals.
pub fn report_tsv(report: &ScoreReport) -> String {
    let mut out = String::new();
    let mut row = |name: &str, s: &ClassScore| {
        out.push_str(&alloc::format!(
            "{name}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\n",
            s.true_pos,
            s.false_pos,
            s.false_neg,
            s.precision(),
            s.recall(),
            s.f1(),
        ));
    };
    for entity in EntityType::ALL {
        row(entity.as_str(), report.class(entity));
    }
    row("OVERALL", &report.overall);
    out
}

/// A span with its surface text, for error reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanMention {
    pub span: EntitySpan,
    pub text: String,
}

/// Disagreements on one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceDiff {
    pub index: usize,
    /// Gold spans the prediction missed.
    pub missed: Vec<SpanMention>,
    /// Predicted spans with no gold counterpart.
    pub spurious: Vec<SpanMention>,
}

fn mention(sent: &Sentence, span: EntitySpan) -> SpanMention {
    let mut text = String::new();
    for (i, tok) in sent.tokens()[span.start..span.end].iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        text.push_str(tok.surface());
    }
    SpanMention { span, text }
}

/// Lists every span-level disagreement between gold sentences and
/// predicted tags; sentences that match exactly are omitted.
pub fn diff(gold: &[Sentence], pred: &[Vec<IobTag>]) -> Result<Vec<SentenceDiff>, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::SentenceCount { gold: gold.len(), pred: pred.len() });
    }
    let mut diffs = Vec::new();
    for (index, (sent, p)) in gold.iter().zip(pred).enumerate() {
        if sent.len() != p.len() {
            return Err(EvalError::SentenceLength { index, gold: sent.len(), pred: p.len() });
        }
        let gold_set: BTreeSet<EntitySpan> = sent.spans().into_iter().collect();
        let pred_set: BTreeSet<EntitySpan> = tags_to_spans_lenient(p).into_iter().collect();
        let missed: Vec<SpanMention> =
            gold_set.difference(&pred_set).map(|&s| mention(sent, s)).collect();
        let spurious: Vec<SpanMention> =
            pred_set.difference(&gold_set).map(|&s| mention(sent, s)).collect();
        if !missed.is_empty() || !spurious.is_empty() {
            diffs.push(SentenceDiff { index, missed, spurious });
        }
    }
    Ok(diffs)
}
