//! The full coreference model: shared encoder, proposal heads and answer head,
//! plus the per-document forward pass used by training and prediction.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamGroup, ParamId, ParamStore, Var};
use crate::decode::{decode_clusters, drop_crossing, CandidateSlate};
use crate::encoder::{Encoder, EncoderConfig, Vocab};
use crate::error::{Error, Result};
use crate::heads::SpanHead;
use crate::layout::PreparedDoc;
use crate::linking::{
    build_query, forward_scores, pair_score, prune_candidates, AnswerScores, LinkingConfig, PairScore,
};
use crate::proposal::{
    mention_scores, propose, score_spans, MentionScore, ProposalConfig, ProposalHeads, ProposalVars,
};
use crate::types::{ClusterSet, Document, Span};

/// How speaker identity reaches the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerMode {
    /// Speaker names are inserted into the text between tags.
    Text,
    /// A learned weight on a same-speaker indicator is added to pair scores.
    Feature,
    /// Speakers are ignored.
    Ignore,
}

impl std::str::FromStr for SpeakerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(SpeakerMode::Text),
            "feature" => Ok(SpeakerMode::Feature),
            "ignore" => Ok(SpeakerMode::Ignore),
            _ => Err(Error::Config(format!(
                "unknown speaker mode {s:?} (text, feature, ignore)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub proposal: ProposalConfig,
    pub linking: LinkingConfig,
    pub speaker_mode: SpeakerMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.proposal.validate()?;
        self.linking.validate()?;
        if self.encoder.max_positions < 8 || !self.encoder.max_positions.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window size {} must be even and at least 8",
                self.encoder.max_positions
            )));
        }
        Ok(())
    }
}

pub struct CorefModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub proposal: ProposalHeads,
    pub answer: SpanHead,
    pub speaker_weight: Option<ParamId>,
}

const SPEAKER_WEIGHT: &str = "linking.speaker_weight";

impl CorefModel {
    /// Freshly initialized model; `config.encoder.vocab_size` is set from `vocab`.
    pub fn new(mut config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.encoder.vocab_size = vocab.len();
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(config.encoder.clone(), &mut params, &mut rng)?;
        let d = config.encoder.hidden_dim;
        let proposal = ProposalHeads::new(d, &mut params, &mut rng);
        let answer = SpanHead::new("linking.answer", d, &mut params, &mut rng);
        let speaker_weight = (config.speaker_mode == SpeakerMode::Feature)
            .then(|| params.add_zeros(SPEAKER_WEIGHT, ParamGroup::Heads, (1, 1)));
        Ok(CorefModel {
            config,
            vocab,
            params,
            encoder,
            proposal,
            answer,
            speaker_weight,
        })
    }

    /// Wraps loaded parameters, checking names and shapes.
    pub fn bind(config: ModelConfig, vocab: Vocab, params: ParamStore) -> Result<Self> {
        config.validate()?;
        if config.encoder.vocab_size != vocab.len() {
            return Err(Error::VocabMismatch(format!(
                "model expects {} pieces, vocabulary has {}",
                config.encoder.vocab_size,
                vocab.len()
            )));
        }
        let encoder = Encoder::bind(config.encoder.clone(), &params)?;
        let d = config.encoder.hidden_dim;
        let proposal = ProposalHeads::bind(d, &params)?;
        let answer = SpanHead::bind("linking.answer", d, &params)?;
        let speaker_weight = match config.speaker_mode {
            SpeakerMode::Feature => Some(
                params
                    .id(SPEAKER_WEIGHT)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter {SPEAKER_WEIGHT}")))?,
            ),
            _ => None,
        };
        Ok(CorefModel {
            config,
            vocab,
            params,
            encoder,
            proposal,
            answer,
            speaker_weight,
        })
    }

    pub fn window_size(&self) -> usize {
        self.config.encoder.max_positions
    }

    pub fn prepare(&self, doc: &Document) -> Result<PreparedDoc> {
        PreparedDoc::new(
            doc,
            &self.vocab,
            self.config.speaker_mode == SpeakerMode::Text,
            self.config.proposal.max_span_length,
            self.config.proposal.cross_sentence,
            self.window_size(),
        )
    }

    fn speaker_in_query(&self) -> bool {
        self.config.speaker_mode == SpeakerMode::Text && self.config.linking.speaker_in_query
    }

    /// Encodes each window and keeps, for every piece, the row from the
    /// window that owns it.
    pub fn encode_document(&self, g: &mut Graph, doc: &PreparedDoc) -> Result<Var> {
        let mut parts = Vec::with_capacity(doc.windows.len());
        for w in &doc.windows {
            let x = self.encoder.encode(g, &doc.tokens.ids[w.range()])?;
            if w.owned.is_empty() {
                continue;
            }
            if w.owned == w.range() {
                parts.push(x);
            } else {
                let rows = (w.owned.start - w.start..w.owned.end - w.start).collect();
                parts.push(g.gather_rows(x, rows));
            }
        }
        Ok(if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_rows(parts)
        })
    }

    /// Runs encoding, proposal, forward scoring of every proposed mention and
    /// of every pruned candidate (for backward scores). `dropout_seed`
    /// selects training mode.
    pub fn run<'a>(&'a self, doc: &PreparedDoc, dropout_seed: Option<u64>) -> Result<DocRun<'a>> {
        let graph_for = |stream: u64| match dropout_seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                Graph::training(&self.params, rng)
            }
            None => Graph::new(&self.params),
        };
        let mut main = graph_for(0);
        let encoded = self.encode_document(&mut main, doc)?;
        let vars = score_spans(&mut main, &self.proposal, doc, encoded);
        let scores = mention_scores(&main, &vars, doc);
        let proposed = propose(&scores, doc.num_words(), self.config.proposal.keep_ratio);

        let first: Vec<Span> = proposed.iter().map(|m| m.span).collect();
        let mut queries = self.run_queries(doc, &first, 1, &graph_for)?;
        let cap = self.config.linking.antecedent_cap;
        let pruned: Vec<Vec<Span>> = queries
            .iter()
            .map(|q| {
                let ranked: Vec<(Span, f64)> = doc
                    .candidates
                    .iter()
                    .zip(&q.values)
                    .filter(|(s, v)| **s != q.span && v.is_some())
                    .map(|(&s, v)| (s, v.unwrap()))
                    .collect();
                prune_candidates(&ranked, cap)
            })
            .collect();
        let known: BTreeSet<Span> = first.iter().copied().collect();
        let extra: Vec<Span> = pruned
            .iter()
            .flatten()
            .copied()
            .collect::<BTreeSet<Span>>()
            .difference(&known)
            .copied()
            .collect();
        let more = self.run_queries(doc, &extra, 1 + first.len() as u64, &graph_for)?;
        queries.extend(more);
        let query_index = queries.iter().enumerate().map(|(k, q)| (q.span, k)).collect();
        Ok(DocRun {
            main,
            vars,
            scores,
            proposed,
            queries,
            query_index,
            pruned,
        })
    }

    fn run_queries<'a, F>(
        &'a self,
        doc: &PreparedDoc,
        spans: &[Span],
        stream0: u64,
        graph_for: &F,
    ) -> Result<Vec<QueryRun<'a>>>
    where
        F: Fn(u64) -> Graph<'a> + Sync,
    {
        spans
            .par_iter()
            .enumerate()
            .map(|(k, &span)| {
                let mut graph = graph_for(stream0 + k as u64);
                let query = build_query(doc, span, self.speaker_in_query())?;
                let answers = forward_scores(&mut graph, &self.encoder, &self.answer, &self.vocab, doc, &query)?;
                let row = graph.value(answers.var);
                let values = answers.column.iter().map(|c| c.map(|c| row[[0, c]])).collect();
                Ok(QueryRun {
                    span,
                    graph,
                    answers,
                    values,
                })
            })
            .collect()
    }

    /// Whether the first words of two spans share a known speaker.
    pub fn same_speaker(doc: &PreparedDoc, a: Span, b: Span) -> bool {
        let sa = &doc.doc.tokens[a.start].speaker;
        sa.is_some() && *sa == doc.doc.tokens[b.start].speaker
    }

    /// Current value of the speaker-feature weight (0 when unused).
    pub fn speaker_weight_value(&self) -> f64 {
        self.speaker_weight.map_or(0.0, |id| self.params.get(id)[[0, 0]])
    }

    /// Pair scores and slates of a finished run.
    pub fn slates(&self, doc: &PreparedDoc, run: &DocRun) -> Result<(Vec<CandidateSlate>, Vec<PairScore>)> {
        let lambda = self.config.linking.lambda_mix;
        let w = self.speaker_weight_value();
        let mut slates = Vec::with_capacity(run.proposed.len());
        let mut pairs = Vec::new();
        for (qi, cands) in run.pruned.iter().enumerate() {
            let i = run.queries[qi].span;
            let mut scores = Vec::with_capacity(cands.len());
            for &j in cands {
                let (fwd, bwd) = run.directional(doc, i, j);
                let p = pair_score(i, j, fwd, bwd, run.s_m(doc, i), run.s_m(doc, j), lambda);
                let feature = if self.speaker_weight.is_some() && Self::same_speaker(doc, i, j) {
                    w
                } else {
                    0.0
                };
                scores.push(p.overall + feature);
                pairs.push(p);
            }
            slates.push(CandidateSlate::new(i, cands.clone(), scores)?);
        }
        Ok((slates, pairs))
    }

    /// Evaluation-mode prediction for one document.
    pub fn predict(&self, doc: &PreparedDoc) -> Result<DocPrediction> {
        let run = self.run(doc, None)?;
        let (slates, pairs) = self.slates(doc, &run)?;
        let clusters = drop_crossing(&decode_clusters(&slates), |s| run.s_m(doc, s));
        let retrieved = slates.iter().filter_map(CandidateSlate::best).collect();
        Ok(DocPrediction {
            doc_key: doc.doc.doc_key.clone(),
            proposed: run.proposed.clone(),
            mention_scores: run.scores.clone(),
            slates,
            pairs,
            clusters,
            retrieved,
        })
    }

    /// Predicts many documents in parallel, preserving order.
    pub fn predict_all(&self, docs: &[PreparedDoc]) -> Result<Vec<DocPrediction>> {
        docs.par_iter().map(|d| self.predict(d)).collect()
    }
}

/// Forward scoring of one query.
pub struct QueryRun<'a> {
    pub span: Span,
    pub graph: Graph<'a>,
    pub answers: AnswerScores,
    /// Score of each document candidate, `None` when no chunk could hold it.
    pub values: Vec<Option<f64>>,
}

/// Everything computed for one document before slate assembly.
pub struct DocRun<'a> {
    pub main: Graph<'a>,
    pub vars: ProposalVars,
    pub scores: Vec<MentionScore>,
    pub proposed: Vec<MentionScore>,
    /// Proposed-mention queries first (in rank order), then extra queries for
    /// pruned candidates.
    pub queries: Vec<QueryRun<'a>>,
    pub query_index: HashMap<Span, usize>,
    /// Pruned candidates of each proposed-mention query.
    pub pruned: Vec<Vec<Span>>,
}

impl DocRun<'_> {
    pub fn s_m(&self, doc: &PreparedDoc, span: Span) -> f64 {
        self.scores[doc.candidate_index[&span]].s_m
    }

    /// `(s_a(j|i), s_a(i|j))`; the backward score falls back to the forward
    /// one when the query for `j` could not place `i` in any chunk.
    pub fn directional(&self, doc: &PreparedDoc, i: Span, j: Span) -> (f64, f64) {
        let fwd =
            self.queries[self.query_index[&i]].values[doc.candidate_index[&j]].expect("pruned candidates are scored");
        let bwd = self.queries[self.query_index[&j]].values[doc.candidate_index[&i]].unwrap_or(fwd);
        (fwd, bwd)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocPrediction {
    pub doc_key: String,
    pub proposed: Vec<MentionScore>,
    pub mention_scores: Vec<MentionScore>,
    pub slates: Vec<CandidateSlate>,
    pub pairs: Vec<PairScore>,
    pub clusters: ClusterSet,
    /// Spans chosen as best answers by some query.
    pub retrieved: BTreeSet<Span>,
}

impl DocPrediction {
    pub fn proposed_spans(&self) -> BTreeSet<Span> {
        self.proposed.iter().map(|m| m.span).collect()
    }

    /// Proposal at another keep ratio from the stored mention scores.
    pub fn proposed_at(&self, num_words: usize, keep_ratio: f64) -> BTreeSet<Span> {
        propose(&self.mention_scores, num_words, keep_ratio)
            .into_iter()
            .map(|m| m.span)
            .collect()
    }
}
