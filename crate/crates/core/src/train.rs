//! Joint training: marginal log-likelihood over pruned slates plus the
//! auxiliary proposal loss, mention-proposal pretraining and the optimizer.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::{GradStore, Graph, ParamGroup, ParamStore, Var};
use crate::decode::gold_options;
use crate::error::{Error, Result};
use crate::eval::mention_recall;
use crate::layout::PreparedDoc;
use crate::model::{CorefModel, DocRun};
use crate::proposal::{proposal_pretrain_loss, proposal_targets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub encoder_lr: f64,
    pub head_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub freeze_encoder: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            encoder_lr: 1e-5,
            head_lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: Some(1.0),
            freeze_encoder: false,
        }
    }
}

/// Adam with one learning rate per parameter group.
#[derive(Debug, Clone)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Array2<f64>> = params.entries().iter().map(|e| Array2::zeros(e.value.dim())).collect();
        Adam {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. Encoder parameters are left untouched when frozen.
    pub fn update(&mut self, params: &mut ParamStore, grads: &GradStore, cfg: &OptimConfig) {
        self.step += 1;
        let norm = params
            .ids()
            .filter_map(|id| grads.get(id))
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let scale = match cfg.grad_clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let group = params.entry(id).group;
            if group == ParamGroup::Encoder && cfg.freeze_encoder {
                continue;
            }
            let Some(g) = grads.get(id) else { continue };
            let lr = match group {
                ParamGroup::Encoder => cfg.encoder_lr,
                ParamGroup::Heads => cfg.head_lr,
            };
            let k = id.index();
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            let p = params.get_mut(id);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                let g = g * scale;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Weight of the proposal loss added to the marginal loss.
    pub alpha: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub optim: OptimConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            alpha: 0.1,
            seed: 42,
            shuffle: true,
            optim: OptimConfig::default(),
        }
    }
}

/// Loss terms and diagnostics of one document step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub loss: f64,
    pub marginal: f64,
    pub proposal: f64,
    pub mention_recall: f64,
    pub slates: usize,
    pub slates_correct: usize,
}

fn check_finite(step: u64, what: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            detail: format!("{what} is {value}"),
        })
    }
}

/// Marginal loss over every proposed-mention slate, built on a separate
/// graph whose inputs are the mention scores and each query's answer scores.
struct SlateLoss {
    total: Var,
    mention_input: Var,
    answer_inputs: Vec<Var>,
    slates: usize,
    correct: usize,
}

fn slate_loss(g: &mut Graph, model: &CorefModel, doc: &PreparedDoc, run: &DocRun) -> Result<SlateLoss> {
    let lambda = model.config.linking.lambda_mix;
    let mention_input = g.input(run.main.value(run.vars.s_m).clone());
    let answer_inputs: Vec<Var> = run
        .queries
        .iter()
        .map(|q| g.input(q.graph.value(q.answers.var).clone()))
        .collect();
    let cluster_of = doc.doc.gold_cluster_index();
    let weight = model.speaker_weight.map(|id| g.param(id));
    let (slates, _) = model.slates(doc, run)?;
    let mut losses = Vec::new();
    let mut correct = 0;
    for (qi, slate) in slates.iter().enumerate() {
        let gold = gold_options(slate, &cluster_of);
        let best = slate.best().map_or(slate.epsilon(), |b| {
            slate.candidates.iter().position(|&c| c == b).unwrap()
        });
        if gold.contains(&best) {
            correct += 1;
        }
        if slate.candidates.is_empty() {
            continue;
        }
        let i = slate.query_span;
        let qrun = &run.queries[qi];
        let ci = doc.candidate_index[&i];
        let fwd_cols: Vec<usize> = slate
            .candidates
            .iter()
            .map(|j| qrun.answers.column[doc.candidate_index[j]].expect("pruned candidates are scored"))
            .collect();
        let fwd = g.gather_flat(answer_inputs[qi], fwd_cols.clone());
        let mut back_parts = Vec::with_capacity(slate.candidates.len());
        for (k, j) in slate.candidates.iter().enumerate() {
            let jq = run.query_index[j];
            back_parts.push(match run.queries[jq].answers.column[ci] {
                Some(c) => g.gather_flat(answer_inputs[jq], vec![c]),
                None => g.gather_flat(answer_inputs[qi], vec![fwd_cols[k]]),
            });
        }
        let bwd = if back_parts.len() == 1 {
            back_parts[0]
        } else {
            g.concat_cols(back_parts)
        };
        let smi = g.gather_flat(mention_input, vec![ci; slate.candidates.len()]);
        let smj = g.gather_flat(
            mention_input,
            slate.candidates.iter().map(|j| doc.candidate_index[j]).collect(),
        );
        let sm = g.add(smi, smj);
        let sm = g.scale(sm, lambda);
        let bid = g.add(fwd, bwd);
        let bid = g.scale(bid, 0.5);
        let bid = g.scale(bid, 1.0 - lambda);
        let mut overall = g.add(sm, bid);
        if let Some(w) = weight {
            let ind: Vec<f64> = slate
                .candidates
                .iter()
                .map(|&j| if CorefModel::same_speaker(doc, i, j) { 1.0 } else { 0.0 })
                .collect();
            let ind = g.input_row(ind);
            let feat = g.matmul(w, ind);
            overall = g.add(overall, feat);
        }
        let eps = g.input(Array2::zeros((1, 1)));
        let full = g.concat_cols(vec![overall, eps]);
        let all = g.log_sum_exp(full, (0..=slate.candidates.len()).collect());
        let gold_lse = g.log_sum_exp(full, gold);
        losses.push(g.sub(all, gold_lse));
    }
    let total = match losses.len() {
        0 => g.input(Array2::zeros((1, 1))),
        1 => losses[0],
        _ => {
            let cat = g.concat_cols(losses);
            g.sum_all(cat)
        }
    };
    Ok(SlateLoss {
        total,
        mention_input,
        answer_inputs,
        slates: slates.len(),
        correct,
    })
}

/// Which loss terms a step optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepKind {
    /// Proposal loss only.
    Proposal,
    /// Marginal loss plus `alpha` times the proposal loss.
    Joint { alpha: f64 },
}

/// Loss and parameter gradients for one document.
pub fn document_step(
    model: &CorefModel,
    doc: &PreparedDoc,
    kind: StepKind,
    seed: u64,
    step: u64,
) -> Result<(StepReport, GradStore)> {
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let gold = doc.doc.gold_mentions();
    let targets = proposal_targets(doc, &gold, model.config.proposal.negative_ratio, &mut sample_rng);
    match kind {
        StepKind::Proposal => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0);
            let mut g = Graph::training(&model.params, rng);
            let encoded = model.encode_document(&mut g, doc)?;
            let vars = crate::proposal::score_spans(&mut g, &model.proposal, doc, encoded);
            let loss = proposal_pretrain_loss(&mut g, &vars, &targets);
            let value = g.scalar(loss);
            check_finite(step, "proposal loss", value)?;
            let grads = g.backward_scalar(loss).params;
            let scores = crate::proposal::mention_scores(&g, &vars, doc);
            let proposed = crate::proposal::propose(&scores, doc.num_words(), model.config.proposal.keep_ratio);
            let spans: std::collections::BTreeSet<_> = proposed.iter().map(|m| m.span).collect();
            Ok((
                StepReport {
                    loss: value,
                    proposal: value,
                    mention_recall: mention_recall(&gold, &spans),
                    ..StepReport::default()
                },
                grads,
            ))
        }
        StepKind::Joint { alpha } => {
            let mut run = model.run(doc, Some(seed))?;
            let aux = proposal_pretrain_loss(&mut run.main, &run.vars, &targets);
            let aux_value = run.main.scalar(aux);
            let mut cg = Graph::new(&model.params);
            let sl = slate_loss(&mut cg, model, doc, &run)?;
            let marginal = cg.scalar(sl.total);
            check_finite(step, "marginal loss", marginal)?;
            check_finite(step, "proposal loss", aux_value)?;
            let cgrads = cg.backward_scalar(sl.total);
            let mut seeds = vec![(aux, Array2::from_elem((1, 1), alpha))];
            if let Some(gm) = cgrads.node(sl.mention_input) {
                seeds.push((run.vars.s_m, gm.clone()));
            }
            let mut grads = cgrads.params.clone();
            grads.merge(&run.main.backward(&seeds).params);
            let query_grads: Vec<Option<GradStore>> = run
                .queries
                .par_iter()
                .zip(&sl.answer_inputs)
                .map(|(q, &input)| {
                    cgrads
                        .node(input)
                        .map(|gq| q.graph.backward(&[(q.answers.var, gq.clone())]).params)
                })
                .collect();
            for g in query_grads.iter().flatten() {
                grads.merge(g);
            }
            if !grads.all_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: "non-finite gradient".into(),
                });
            }
            let proposed: std::collections::BTreeSet<_> = run.proposed.iter().map(|m| m.span).collect();
            Ok((
                StepReport {
                    loss: marginal + alpha * aux_value,
                    marginal,
                    proposal: aux_value,
                    mention_recall: mention_recall(&gold, &proposed),
                    slates: sl.slates,
                    slates_correct: sl.correct,
                },
                grads,
            ))
        }
    }
}

/// Averages of one pass over the training documents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub marginal: f64,
    pub proposal: f64,
    pub mention_recall: f64,
    pub slate_accuracy: f64,
}

/// Training state carried across epochs.
pub struct Trainer {
    pub config: TrainConfig,
    pub optimizer: Adam,
    pub epoch: usize,
}

impl Trainer {
    pub fn new(model: &CorefModel, config: TrainConfig) -> Self {
        Trainer {
            optimizer: Adam::new(&model.params),
            config,
            epoch: 0,
        }
    }

    /// One pass over `docs`, one optimizer step per document.
    pub fn epoch(&mut self, model: &mut CorefModel, docs: &[PreparedDoc], kind: StepKind) -> Result<EpochMetrics> {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        let epoch_seed = self.config.seed.wrapping_mul(1_000_003).wrapping_add(self.epoch as u64);
        if self.config.shuffle {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        }
        let mut m = EpochMetrics {
            epoch: self.epoch,
            ..EpochMetrics::default()
        };
        let mut slates = 0;
        let mut correct = 0;
        for (k, &d) in order.iter().enumerate() {
            let step_seed = epoch_seed.wrapping_mul(7919).wrapping_add(k as u64);
            let (report, grads) = document_step(model, &docs[d], kind, step_seed, self.optimizer.step)?;
            self.optimizer.update(&mut model.params, &grads, &self.config.optim);
            m.steps += 1;
            m.loss += report.loss;
            m.marginal += report.marginal;
            m.proposal += report.proposal;
            m.mention_recall += report.mention_recall;
            slates += report.slates;
            correct += report.slates_correct;
        }
        let n = m.steps.max(1) as f64;
        m.loss /= n;
        m.marginal /= n;
        m.proposal /= n;
        m.mention_recall /= n;
        m.slate_accuracy = if slates == 0 {
            0.0
        } else {
            correct as f64 / slates as f64
        };
        log::debug!("epoch {} loss {:.5} recall {:.3}", m.epoch, m.loss, m.mention_recall);
        self.epoch += 1;
        Ok(m)
    }
}
