//! Mention linking: tagged-sentence queries, answer-span scoring over packed
//! query/context chunks, top-C pruning and pair-score combination.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::encoder::vocab::{CLS, MENTION_CLOSE, MENTION_OPEN, SEP};
use crate::encoder::{Encoder, PackedSequence, Vocab, PACKING_OVERHEAD};
use crate::error::{Error, Result};
use crate::heads::SpanHead;
use crate::layout::PreparedDoc;
use crate::preprocess::{make_windows, speaker_name_pieces, Piece, Window, SPEAKER_CLOSE, SPEAKER_OPEN};
use crate::proposal::rank_order;
use crate::types::Span;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingConfig {
    /// Candidates kept per query (C).
    pub antecedent_cap: usize,
    /// Weight of the mention scores in the pair score.
    pub lambda_mix: f64,
    /// Prefix each query with its sentence's speaker tag group.
    pub speaker_in_query: bool,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        LinkingConfig {
            antecedent_cap: 50,
            lambda_mix: 0.5,
            speaker_in_query: true,
        }
    }
}

impl LinkingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.antecedent_cap == 0 {
            return Err(Error::Config("antecedent_cap must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_mix) {
            return Err(Error::Config(format!("lambda_mix {} outside [0, 1]", self.lambda_mix)));
        }
        Ok(())
    }
}

/// The sentence containing a mention, with the mention wrapped in tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionQuery {
    pub source_span: Span,
    pub pieces: Vec<Piece>,
}

impl MentionQuery {
    /// The query with the two mention tags removed.
    pub fn untagged(&self) -> Vec<Piece> {
        self.pieces
            .iter()
            .filter(|p| p.text != MENTION_OPEN && p.text != MENTION_CLOSE)
            .cloned()
            .collect()
    }
}

/// Pieces of the sentence(s) covering `span`, optionally preceded by the
/// speaker tag group of the first word.
pub fn sentence_pieces(doc: &PreparedDoc, span: Span, with_speaker: bool) -> Vec<Piece> {
    let d = &doc.doc;
    let first = d.sentence_of(span.start).start;
    let last = d.sentence_of(span.end).end;
    let mut out = Vec::new();
    if with_speaker {
        if let Some(name) = &d.tokens[first].speaker {
            out.push(Piece::special(SPEAKER_OPEN));
            out.extend(speaker_name_pieces(name).into_iter().map(Piece::special));
            out.push(Piece::special(SPEAKER_CLOSE));
        }
    }
    out.extend((first..=last).map(|w| Piece::word(d.tokens[w].text.clone(), w)));
    out
}

pub fn build_query(doc: &PreparedDoc, span: Span, with_speaker: bool) -> Result<MentionQuery> {
    if span.start > span.end || span.end >= doc.num_words() {
        return Err(Error::Contract(format!(
            "span {span} outside document of {} words",
            doc.num_words()
        )));
    }
    let mut pieces = Vec::new();
    for p in sentence_pieces(doc, span, with_speaker) {
        let word = match p.origin {
            crate::preprocess::Origin::Word(w) => Some(w),
            crate::preprocess::Origin::Special => None,
        };
        if word == Some(span.start) {
            pieces.push(Piece::special(MENTION_OPEN));
        }
        pieces.push(p);
        if word == Some(span.end) {
            pieces.push(Piece::special(MENTION_CLOSE));
        }
    }
    Ok(MentionQuery {
        source_span: span,
        pieces,
    })
}

/// Piece ids of a query, cut to at most `max_len` pieces around the mention
/// tags when too long.
pub fn query_ids(vocab: &Vocab, query: &MentionQuery, max_len: usize) -> Vec<u32> {
    let mut ids = Vec::new();
    let mut open = 0;
    let mut close = 0;
    for p in &query.pieces {
        if p.text == MENTION_OPEN {
            open = ids.len();
        }
        ids.extend(vocab.tokenize(&p.text));
        if p.text == MENTION_CLOSE {
            close = ids.len();
        }
    }
    if ids.len() <= max_len {
        return ids;
    }
    let tagged = close - open;
    let start = if tagged >= max_len {
        open
    } else {
        open.saturating_sub((max_len - tagged) / 2).min(ids.len() - max_len)
    };
    ids[start..start + max_len].to_vec()
}

/// Context chunks for a query of `query_len` pieces under a `max_positions`
/// budget. Chunks advance by half their size; ownership follows
/// [`make_windows`].
pub fn context_chunks(context_len: usize, query_len: usize, max_positions: usize) -> Result<Vec<Window>> {
    let budget = max_positions
        .checked_sub(query_len + PACKING_OVERHEAD)
        .filter(|&b| b >= 2)
        .ok_or_else(|| {
            Error::Contract(format!(
                "query of {query_len} pieces leaves no room for context in {max_positions} positions"
            ))
        })?;
    make_windows(context_len, budget - budget % 2)
}

/// Chunk that scores a piece interval: the owner of its first piece if the
/// interval fits there, else the first chunk containing it.
pub fn chunk_for(chunks: &[Window], first: usize, last: usize) -> Option<usize> {
    let fits = |w: &Window| w.start <= first && last < w.end();
    chunks
        .iter()
        .position(|w| w.owned.contains(&first) && fits(w))
        .or_else(|| chunks.iter().position(fits))
}

/// Answer scores for a set of candidate piece intervals.
#[derive(Debug, Clone)]
pub struct AnswerScores {
    /// `1 × m` scores of the intervals that fit some chunk.
    pub var: Var,
    /// Column of each requested interval in `var`, `None` if unscored.
    pub column: Vec<Option<usize>>,
}

/// Scores `spans` (piece intervals within `context`) as answers to `query`.
#[allow(clippy::too_many_arguments)]
pub fn score_answers(
    g: &mut Graph,
    encoder: &Encoder,
    head: &SpanHead,
    vocab: &Vocab,
    query: &[u32],
    context: &[u32],
    spans: &[(usize, usize)],
) -> Result<AnswerScores> {
    let chunks = context_chunks(context.len(), query.len(), encoder.config.max_positions)?;
    let owner: Vec<Option<usize>> = spans.iter().map(|&(f, l)| chunk_for(&chunks, f, l)).collect();
    let (cls, sep) = (vocab.reserved(CLS), vocab.reserved(SEP));
    let mut parts = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    for (k, chunk) in chunks.iter().enumerate() {
        let mine: Vec<usize> = (0..spans.len()).filter(|&i| owner[i] == Some(k)).collect();
        if mine.is_empty() {
            continue;
        }
        let packed = PackedSequence::pack(query, &context[chunk.range()], cls, sep);
        let x = encoder.encode_packed(g, &packed)?;
        let shift = |p: usize| packed.context_offset + p - chunk.start;
        let firsts = mine.iter().map(|&i| shift(spans[i].0)).collect();
        let lasts = mine.iter().map(|&i| shift(spans[i].1)).collect();
        let scores = head.score(g, x, firsts, lasts);
        parts.push(g.transpose(scores));
        order.extend(mine);
    }
    let mut column = vec![None; spans.len()];
    let var = match parts.len() {
        0 => g.input(ndarray::Array2::zeros((1, 0))),
        1 => parts[0],
        _ => g.concat_cols(parts),
    };
    let var = if order.windows(2).all(|w| w[0] < w[1]) {
        var
    } else {
        let mut sorted: Vec<(usize, usize)> = order.iter().enumerate().map(|(c, &i)| (i, c)).collect();
        sorted.sort_unstable();
        let perm = sorted.iter().map(|&(_, c)| c).collect();
        order = sorted.iter().map(|&(i, _)| i).collect();
        g.gather_flat(var, perm)
    };
    for (c, &i) in order.iter().enumerate() {
        column[i] = Some(c);
    }
    Ok(AnswerScores { var, column })
}

/// Forward scores of every candidate span of `doc` under the query for
/// `source`. The source span itself is scored but callers exclude it.
pub fn forward_scores(
    g: &mut Graph,
    encoder: &Encoder,
    head: &SpanHead,
    vocab: &Vocab,
    doc: &PreparedDoc,
    query: &MentionQuery,
) -> Result<AnswerScores> {
    let max_query = encoder.config.max_positions / 2;
    let q = query_ids(vocab, query, max_query);
    let spans: Vec<(usize, usize)> = doc.candidates.iter().map(|&s| doc.piece_span(s)).collect();
    score_answers(g, encoder, head, vocab, &q, &doc.tokens.ids, &spans)
}

/// Top `cap` spans by score, ties by `(start, end)`.
pub fn prune_candidates(scores: &[(Span, f64)], cap: usize) -> Vec<Span> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| rank_order(*a, *b));
    ranked.into_iter().take(cap).map(|(s, _)| s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: Span,
    pub j: Span,
    /// Score of `j` as an answer to the query for `i`.
    pub forward: f64,
    /// Score of `i` as an answer to the query for `j`.
    pub backward: f64,
    pub bidirectional: f64,
    pub overall: f64,
}

/// Bidirectional score `(forward + backward) / 2` and overall score
/// `λ (s_m(i) + s_m(j)) + (1 − λ) bidirectional`.
pub fn pair_score(i: Span, j: Span, forward: f64, backward: f64, sm_i: f64, sm_j: f64, lambda_mix: f64) -> PairScore {
    let bidirectional = 0.5 * (forward + backward);
    let overall = lambda_mix * (sm_i + sm_j) + (1.0 - lambda_mix) * bidirectional;
    PairScore {
        i,
        j,
        forward,
        backward,
        bidirectional,
        overall,
    }
}
