//! Pretraining the linking network on extractive question answering: the
//! question plays the query, every candidate span of the context is an
//! option next to the dummy, and gold answers are marginalized over.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{GradStore, Graph};
use crate::corpus::text::{split_sentences, tokenize_words, words_covering};
use crate::corpus::QaExample;
use crate::decode::CandidateSlate;
use crate::error::{Error, Result};
use crate::layout::PreparedDoc;
use crate::linking::score_answers;
use crate::model::CorefModel;
use crate::train::Trainer;
use crate::types::{Document, Span, Token};

/// A QA example mapped onto the model's candidate inventory.
#[derive(Debug, Clone)]
pub struct PreparedQa {
    pub id: String,
    pub context: PreparedDoc,
    pub question: Vec<u32>,
    /// Candidate indices of the gold answers; empty when unanswerable.
    pub answers: Vec<usize>,
}

/// Tokenizes context and question and locates answers among the candidates.
/// Answers that are not candidates (too long, crossing a sentence) are
/// dropped with a warning; an example left without answers is skipped
/// unless it was unanswerable to begin with.
pub fn prepare_qa(model: &CorefModel, ex: &QaExample) -> Result<Option<PreparedQa>> {
    let words = tokenize_words(&ex.context);
    let sentences = split_sentences(&words);
    let tokens = words
        .iter()
        .zip(&sentences)
        .enumerate()
        .map(|(i, (w, &s))| Token {
            text: w.text.clone(),
            word_index: i,
            sentence_index: s,
            speaker: None,
        })
        .collect();
    let doc = Document {
        doc_key: ex.id.clone(),
        genre: "qa".into(),
        tokens,
        gold_clusters: Vec::new(),
    };
    let cfg = &model.config.proposal;
    let context = PreparedDoc::new(
        &doc,
        &model.vocab,
        false,
        cfg.max_span_length,
        cfg.cross_sentence,
        model.window_size(),
    )?;
    let mut answers = BTreeSet::new();
    for a in &ex.answers {
        match words_covering(&words, *a).and_then(|s| context.candidate_index.get(&s)) {
            Some(&k) => {
                answers.insert(k);
            }
            None => log::warn!("QA example {}: answer at {:?} is not a candidate span", ex.id, a),
        }
    }
    if !ex.answers.is_empty() && answers.is_empty() {
        return Ok(None);
    }
    let mut question: Vec<u32> = tokenize_words(&ex.question)
        .iter()
        .flat_map(|w| model.vocab.tokenize(&w.text))
        .collect();
    question.truncate(model.window_size() / 2);
    Ok(Some(PreparedQa {
        id: ex.id.clone(),
        context,
        question,
        answers: answers.into_iter().collect(),
    }))
}

/// Prepares every example, skipping those whose answers cannot be placed.
pub fn prepare_qa_all(model: &CorefModel, examples: &[QaExample]) -> Result<Vec<PreparedQa>> {
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        if let Some(p) = prepare_qa(model, ex)? {
            out.push(p);
        }
    }
    Ok(out)
}

/// Loss, slate and gradients of one example.
pub struct QaStep {
    pub loss: f64,
    pub slate: CandidateSlate,
    pub grads: GradStore,
}

fn gold_options(qa: &PreparedQa, scored: &[usize]) -> Vec<usize> {
    let gold: Vec<usize> = scored
        .iter()
        .enumerate()
        .filter(|(_, c)| qa.answers.contains(c))
        .map(|(k, _)| k)
        .collect();
    if gold.is_empty() {
        vec![scored.len()]
    } else {
        gold
    }
}

/// Marginal loss of one example; `dropout_seed` selects training mode.
pub fn qa_step(model: &CorefModel, qa: &PreparedQa, dropout_seed: Option<u64>) -> Result<QaStep> {
    let mut g = match dropout_seed {
        Some(seed) => Graph::training(&model.params, ChaCha8Rng::seed_from_u64(seed)),
        None => Graph::new(&model.params),
    };
    let spans: Vec<(usize, usize)> = qa
        .context
        .candidates
        .iter()
        .map(|&s| qa.context.piece_span(s))
        .collect();
    let answers = score_answers(
        &mut g,
        &model.encoder,
        &model.answer,
        &model.vocab,
        &qa.question,
        &qa.context.tokens.ids,
        &spans,
    )?;
    let scored: Vec<usize> = (0..spans.len()).filter(|&k| answers.column[k].is_some()).collect();
    let cols: Vec<usize> = scored.iter().map(|&k| answers.column[k].unwrap()).collect();
    let eps = g.input(Array2::zeros((1, 1)));
    let full = if cols.is_empty() {
        eps
    } else {
        let s = g.gather_flat(answers.var, cols);
        g.concat_cols(vec![s, eps])
    };
    let gold = gold_options(qa, &scored);
    let all = g.log_sum_exp(full, (0..=scored.len()).collect());
    let gold_lse = g.log_sum_exp(full, gold);
    let loss = g.sub(all, gold_lse);
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            detail: format!("QA loss is {value} on {}", qa.id),
        });
    }
    let row = g.value(full).row(0).to_vec();
    let candidates: Vec<Span> = scored.iter().map(|&k| qa.context.candidates[k]).collect();
    let slate = CandidateSlate::new(Span::new(0, 0), candidates, row[..scored.len()].to_vec())?;
    let grads = if dropout_seed.is_some() {
        g.backward_scalar(loss).params
    } else {
        GradStore::new(&model.params)
    };
    Ok(QaStep {
        loss: value,
        slate,
        grads,
    })
}

/// Whether the slate's best option is a gold answer (the dummy for
/// unanswerable examples).
pub fn exact_match(qa: &PreparedQa, slate: &CandidateSlate) -> bool {
    match slate.best() {
        None => qa.answers.is_empty(),
        Some(span) => qa.answers.iter().any(|&k| qa.context.candidates[k] == span),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QaMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub exact_match: f64,
}

/// One optimizer step per example over `data`.
pub fn qa_epoch(trainer: &mut Trainer, model: &mut CorefModel, data: &[PreparedQa]) -> Result<QaMetrics> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let epoch_seed = trainer
        .config
        .seed
        .wrapping_mul(999_983)
        .wrapping_add(trainer.epoch as u64);
    if trainer.config.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    }
    let mut loss = 0.0;
    let mut hits = 0;
    for (k, &i) in order.iter().enumerate() {
        let step = qa_step(
            model,
            &data[i],
            Some(epoch_seed.wrapping_mul(7919).wrapping_add(k as u64)),
        )
        .map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence {
                step: trainer.optimizer.step,
                detail,
            },
            e => e,
        })?;
        loss += step.loss;
        hits += exact_match(&data[i], &step.slate) as usize;
        trainer
            .optimizer
            .update(&mut model.params, &step.grads, &trainer.config.optim);
    }
    let n = data.len().max(1) as f64;
    let m = QaMetrics {
        epoch: trainer.epoch,
        loss: loss / n,
        exact_match: hits as f64 / n,
    };
    trainer.epoch += 1;
    Ok(m)
}

/// Exact match of the current parameters in evaluation mode.
pub fn qa_exact_match(model: &CorefModel, data: &[PreparedQa]) -> Result<f64> {
    let mut hits = 0;
    for qa in data {
        let step = qa_step(model, qa, None)?;
        hits += exact_match(qa, &step.slate) as usize;
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}
