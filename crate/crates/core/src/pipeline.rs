//! End-to-end workflows shared by the command line and the experiment
//! harnesses: vocabulary building, staged training with best-dev selection,
//! corpus evaluation, the recall curve and the speaker-strategy comparison.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::config::RunConfig;
use crate::corpus::text::tokenize_words;
use crate::corpus::QaExample;
use crate::encoder::Vocab;
use crate::error::{Error, Result};
use crate::eval::{CorpusScorer, MetricReport};
use crate::layout::PreparedDoc;
use crate::model::{CorefModel, DocPrediction, SpeakerMode};
use crate::preprocess::speaker_name_pieces;
use crate::proposal::{mention_scores, propose, score_spans};
use crate::qa_pretrain::{prepare_qa_all, qa_epoch};
use crate::train::{Adam, StepKind, Trainer};
use crate::types::{Document, Span};

/// Vocabulary over document words, speaker names and QA text.
pub fn corpus_vocab(docs: &[&[Document]], qa: &[QaExample], min_count: usize) -> Vocab {
    let mut words: Vec<String> = Vec::new();
    for d in docs.iter().flat_map(|set| set.iter()) {
        words.extend(d.words().map(str::to_string));
        for s in d.speakers() {
            words.extend(speaker_name_pieces(s));
        }
    }
    for ex in qa {
        for text in [&ex.context, &ex.question] {
            words.extend(tokenize_words(text).into_iter().map(|w| w.text));
        }
    }
    Vocab::build(words.iter().map(String::as_str), min_count)
}

pub fn prepare_all(model: &CorefModel, docs: &[Document]) -> Result<Vec<PreparedDoc>> {
    docs.iter().map(|d| model.prepare(d)).collect()
}

/// Predicts and scores a corpus.
pub fn evaluate_corpus(model: &CorefModel, docs: &[PreparedDoc]) -> Result<(MetricReport, Vec<DocPrediction>)> {
    let preds = model.predict_all(docs)?;
    let mut scorer = CorpusScorer::new();
    for (d, p) in docs.iter().zip(&preds) {
        scorer.add(&d.doc.gold_clusters, p.clusters.clusters());
    }
    Ok((scorer.report(), preds))
}

/// Gold-mention recall of the proposal stage alone, micro-averaged.
pub fn proposal_recall(model: &CorefModel, docs: &[PreparedDoc]) -> Result<f64> {
    let mut gold_n = 0;
    let mut hits = 0;
    for d in docs {
        let mut g = crate::autograd::Graph::new(&model.params);
        let encoded = model.encode_document(&mut g, d)?;
        let vars = score_spans(&mut g, &model.proposal, d, encoded);
        let scores = mention_scores(&g, &vars, d);
        let kept: BTreeSet<Span> = propose(&scores, d.num_words(), model.config.proposal.keep_ratio)
            .into_iter()
            .map(|m| m.span)
            .collect();
        let gold = d.doc.gold_mentions();
        gold_n += gold.len();
        hits += gold.intersection(&kept).count();
    }
    Ok(if gold_n == 0 { 1.0 } else { hits as f64 / gold_n as f64 })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub stage: String,
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub marginal: f64,
    pub proposal: f64,
    pub mention_recall: f64,
    pub slate_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_f1: Option<f64>,
}

/// Which stages a training run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub proposal: bool,
    pub qa: bool,
    pub joint: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        proposal: true,
        qa: true,
        joint: true,
    };
}

pub struct TrainOutcome {
    pub best_epoch: Option<usize>,
    pub best_dev: Option<MetricReport>,
    pub final_train_loss: f64,
    pub log: Vec<LogRecord>,
    /// Optimizer state after the last joint epoch.
    pub optimizer: Option<Adam>,
    /// Joint epochs completed, including those of a resumed run.
    pub joint_epochs: usize,
    /// Parameters after the last joint epoch, kept when the model was reset
    /// to an earlier best-dev epoch.
    pub last_params: Option<ParamStore>,
}

/// Optimizer state and epoch counter to continue joint training from.
pub struct Resume {
    pub optimizer: Adam,
    pub epoch: usize,
}

/// Runs proposal pretraining, QA pretraining and joint training in order,
/// as enabled by `stages` and the epoch counts of `cfg`. When `dev` is
/// non-empty the joint stage keeps the parameters of the epoch with the best
/// dev CoNLL average F1. `resume` continues the joint stage's optimizer.
#[allow(clippy::too_many_arguments)]
pub fn train_model(
    model: &mut CorefModel,
    cfg: &RunConfig,
    stages: Stages,
    resume: Option<Resume>,
    train: &[PreparedDoc],
    dev: &[PreparedDoc],
    qa: &[QaExample],
    mut on_record: impl FnMut(&LogRecord),
) -> Result<TrainOutcome> {
    let mut log = Vec::new();
    let mut emit = |r: LogRecord, log: &mut Vec<LogRecord>| {
        on_record(&r);
        log.push(r);
    };
    let tc = cfg.train_config();
    let mut final_train_loss = f64::NAN;
    if stages.proposal && cfg.train.proposal_epochs > 0 {
        let mut trainer = Trainer::new(model, tc.clone());
        for _ in 0..cfg.train.proposal_epochs {
            let m = trainer.epoch(model, train, StepKind::Proposal)?;
            emit(
                LogRecord {
                    stage: "proposal".into(),
                    epoch: m.epoch,
                    step: trainer.optimizer.step,
                    loss: m.loss,
                    marginal: 0.0,
                    proposal: m.proposal,
                    mention_recall: m.mention_recall,
                    slate_accuracy: 0.0,
                    exact_match: None,
                    dev_f1: None,
                },
                &mut log,
            );
        }
    }
    if stages.qa && cfg.train.qa_epochs > 0 && !qa.is_empty() {
        let data = prepare_qa_all(model, qa)?;
        let mut trainer = Trainer::new(model, tc.clone());
        for _ in 0..cfg.train.qa_epochs {
            let m = qa_epoch(&mut trainer, model, &data)?;
            emit(
                LogRecord {
                    stage: "qa".into(),
                    epoch: m.epoch,
                    step: trainer.optimizer.step,
                    loss: m.loss,
                    marginal: m.loss,
                    proposal: 0.0,
                    mention_recall: 0.0,
                    slate_accuracy: 0.0,
                    exact_match: Some(m.exact_match),
                    dev_f1: None,
                },
                &mut log,
            );
        }
    }
    let mut best: Option<(usize, MetricReport, ParamStore)> = None;
    let mut optimizer = None;
    let mut joint_epochs = 0;
    if stages.joint && cfg.train.epochs > 0 {
        let mut trainer = Trainer::new(model, tc.clone());
        if let Some(r) = resume {
            trainer.optimizer = r.optimizer;
            trainer.epoch = r.epoch;
        }
        for _ in 0..cfg.train.epochs {
            let m = trainer.epoch(model, train, StepKind::Joint { alpha: tc.alpha })?;
            final_train_loss = m.loss;
            let dev_report = if dev.is_empty() {
                None
            } else {
                Some(evaluate_corpus(model, dev)?.0)
            };
            if let Some(r) = dev_report {
                if best.as_ref().is_none_or(|b| r.conll_avg_f1 > b.1.conll_avg_f1) {
                    best = Some((m.epoch, r, model.params.clone()));
                }
            }
            emit(
                LogRecord {
                    stage: "joint".into(),
                    epoch: m.epoch,
                    step: trainer.optimizer.step,
                    loss: m.loss,
                    marginal: m.marginal,
                    proposal: m.proposal,
                    mention_recall: m.mention_recall,
                    slate_accuracy: m.slate_accuracy,
                    exact_match: None,
                    dev_f1: dev_report.map(|r| r.conll_avg_f1),
                },
                &mut log,
            );
        }
        joint_epochs = trainer.epoch;
        optimizer = Some(trainer.optimizer);
    }
    let (best_epoch, best_dev, last_params) = match best {
        Some((epoch, report, params)) => {
            let last = std::mem::replace(&mut model.params, params);
            (Some(epoch), Some(report), Some(last))
        }
        None => (None, None, None),
    };
    Ok(TrainOutcome {
        best_epoch,
        best_dev,
        final_train_loss,
        log,
        optimizer,
        joint_epochs,
        last_params,
    })
}

/// Fresh model for `cfg` over `vocab`, seeded by `train.seed`.
pub fn new_model(cfg: &RunConfig, vocab: Vocab) -> Result<CorefModel> {
    CorefModel::new(cfg.model_config(), vocab, cfg.train.seed)
}

/// Proposal and post-linking mention recall at one keep ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub keep_ratio: f64,
    pub proposal_recall: f64,
    /// Gold mentions recovered by the proposal or as a decoded answer span.
    pub linking_recall: f64,
}

/// Recall at each keep ratio, micro-averaged over gold mentions.
pub fn recall_curve(model: &mut CorefModel, docs: &[PreparedDoc], keep_ratios: &[f64]) -> Result<Vec<RecallPoint>> {
    let original = model.config.proposal.keep_ratio;
    let mut out = Vec::with_capacity(keep_ratios.len());
    for &ratio in keep_ratios {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Config(format!("keep ratio {ratio} outside (0, 1]")));
        }
        model.config.proposal.keep_ratio = ratio;
        let preds = model.predict_all(docs);
        model.config.proposal.keep_ratio = original;
        let preds = preds?;
        let (mut gold_n, mut prop_hits, mut link_hits) = (0usize, 0usize, 0usize);
        for (d, p) in docs.iter().zip(&preds) {
            let gold = d.doc.gold_mentions();
            let proposed = p.proposed_spans();
            let mut linked: BTreeSet<Span> = proposed.clone();
            linked.extend(p.retrieved.iter().copied());
            linked.extend(p.clusters.mentions());
            gold_n += gold.len();
            prop_hits += gold.intersection(&proposed).count();
            link_hits += gold.intersection(&linked).count();
        }
        let frac = |k: usize| if gold_n == 0 { 1.0 } else { k as f64 / gold_n as f64 };
        out.push(RecallPoint {
            keep_ratio: ratio,
            proposal_recall: frac(prop_hits),
            linking_recall: frac(link_hits),
        });
    }
    Ok(out)
}

/// Last speaker-count bucket; it holds every document with at least this
/// many speakers.
pub const MAX_SPEAKER_BUCKET: usize = 7;

pub fn speaker_bucket(doc: &Document) -> usize {
    doc.speakers().len().min(MAX_SPEAKER_BUCKET)
}

/// CoNLL average F1 per speaker-count bucket.
pub fn bucketed_f1(docs: &[PreparedDoc], preds: &[DocPrediction]) -> BTreeMap<usize, (usize, f64)> {
    let mut scorers: BTreeMap<usize, (usize, CorpusScorer)> = BTreeMap::new();
    for (d, p) in docs.iter().zip(preds) {
        let e = scorers.entry(speaker_bucket(&d.doc)).or_default();
        e.0 += 1;
        e.1.add(&d.doc.gold_clusters, p.clusters.clusters());
    }
    scorers
        .into_iter()
        .map(|(k, (n, s))| (k, (n, s.report().conll_avg_f1)))
        .collect()
}

/// One bucket of the speaker-strategy comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRow {
    pub speakers: usize,
    pub docs: usize,
    pub text_f1: f64,
    pub feature_f1: f64,
}

/// Trains one model with speaker names in the text and one with a
/// same-speaker pair feature, then compares dev F1 per speaker count.
pub fn speaker_ablation(
    cfg: &RunConfig,
    train: &[Document],
    dev: &[Document],
    mut on_record: impl FnMut(SpeakerMode, &LogRecord),
) -> Result<Vec<SpeakerRow>> {
    if !train.iter().chain(dev).any(|d| !d.speakers().is_empty()) {
        return Err(Error::Config("speaker ablation needs documents with speakers".into()));
    }
    let vocab = corpus_vocab(&[train, dev], &[], cfg.encoder.vocab_min_count);
    let mut tables = Vec::new();
    for mode in [SpeakerMode::Text, SpeakerMode::Feature] {
        let mut c = cfg.clone();
        c.speaker_mode = mode;
        let mut model = new_model(&c, vocab.clone())?;
        let tr = prepare_all(&model, train)?;
        let dv = prepare_all(&model, dev)?;
        let stages = Stages {
            qa: false,
            ..Stages::ALL
        };
        train_model(&mut model, &c, stages, None, &tr, &dv, &[], |r| on_record(mode, r))?;
        let preds = model.predict_all(&dv)?;
        tables.push(bucketed_f1(&dv, &preds));
    }
    Ok(tables[0]
        .iter()
        .map(|(&k, &(n, text_f1))| SpeakerRow {
            speakers: k,
            docs: n,
            text_f1,
            feature_f1: tables[1].get(&k).map_or(0.0, |v| v.1),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_cap_at_seven() {
        let mk = |k: usize| {
            let names: Vec<String> = (0..k).map(|i| format!("S{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let sentences: Vec<Vec<&str>> = (0..k).map(|_| vec!["hi"]).collect();
            Document::from_sentences("d", &sentences, Some(&refs), vec![])
        };
        assert_eq!(speaker_bucket(&mk(3)), 3);
        assert_eq!(speaker_bucket(&mk(7)), 7);
        assert_eq!(speaker_bucket(&mk(9)), 7);
        assert_eq!(
            speaker_bucket(&Document::from_sentences("d", &[vec!["x"]], None, vec![])),
            0
        );
    }

    #[test]
    fn vocab_covers_speakers_and_qa() {
        let doc = Document::from_sentences("d", &[vec!["hello"]], Some(&["Mary_Ann"]), vec![]);
        let qa = QaExample {
            id: "q".into(),
            context: "Zed ran.".into(),
            question: "Who ran?".into(),
            answers: vec![],
        };
        let v = corpus_vocab(&[std::slice::from_ref(&doc)], &[qa], 1);
        for w in ["hello", "Mary", "Ann", "Zed", "Who"] {
            assert!(v.id(w).is_some(), "{w}");
        }
    }
}
