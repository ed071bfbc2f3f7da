//! Subcommand implementations.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use log::{info, warn};
use serde::Serialize;

use spanlink::checkpoint::{load_checkpoint, save_checkpoint};
use spanlink::config::RunConfig;
use spanlink::corpus::{
    gap_to_document, parse_conll, parse_gap, parse_gap_predictions, parse_qa, write_conll, write_gap_predictions,
    write_gap_string, write_qa_string, QaExample,
};
use spanlink::encoder::Vocab;
use spanlink::eval::{gap_decisions, gap_score, CorpusScorer, MetricReport, Prf};
use spanlink::model::{CorefModel, SpeakerMode};
use spanlink::pipeline::{
    corpus_vocab, new_model, prepare_all, proposal_recall, recall_curve as curve, speaker_ablation as ablation,
    train_model, LogRecord, Resume, Stages,
};
use spanlink::{synthetic, Document, Error};

use crate::ConfigArgs;

/// A command line that parses but cannot run as given.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Maps an error chain onto the process exit code.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Config(_) => 1,
                Error::Divergence { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

fn resolve(args: &ConfigArgs) -> Result<RunConfig> {
    let base = if args.desk {
        RunConfig::desk()
    } else {
        RunConfig::default()
    };
    Ok(RunConfig::resolve(base, args.config.as_deref(), &args.overrides)?)
}

fn read_docs(path: Option<&Path>) -> Result<Vec<Document>> {
    match path {
        Some(p) => Ok(parse_conll(p)?),
        None => Ok(Vec::new()),
    }
}

fn read_qa(cfg: &RunConfig) -> Result<Vec<QaExample>> {
    let mut out = Vec::new();
    for p in &cfg.data.qa {
        out.extend(parse_qa(p)?);
    }
    Ok(out)
}

/// Corpora named by the configuration, loaded once per command.
struct Data {
    train: Vec<Document>,
    dev: Vec<Document>,
    test: Vec<Document>,
    qa: Vec<QaExample>,
}

impl Data {
    fn load(cfg: &RunConfig) -> Result<Self> {
        Ok(Data {
            train: read_docs(cfg.data.train.as_deref())?,
            dev: read_docs(cfg.data.dev.as_deref())?,
            test: read_docs(cfg.data.test.as_deref())?,
            qa: read_qa(cfg)?,
        })
    }

    fn vocab(&self, cfg: &RunConfig) -> Vocab {
        corpus_vocab(
            &[&self.train, &self.dev, &self.test],
            &self.qa,
            cfg.encoder.vocab_min_count,
        )
    }
}

/// Applies the run's non-structural settings to a loaded model. Encoder
/// shapes must agree; switching to the feature speaker mode adds its weight.
fn adapt(model: CorefModel, cfg: &RunConfig) -> Result<CorefModel> {
    let want = cfg.model_config();
    let have = &model.config.encoder;
    if (have.hidden_dim, have.num_layers, have.num_heads, have.max_positions)
        != (
            want.encoder.hidden_dim,
            want.encoder.num_layers,
            want.encoder.num_heads,
            want.encoder.max_positions,
        )
    {
        return Err(Error::Config(format!(
            "checkpoint encoder (hidden {}, layers {}, heads {}, window {}) differs from the configuration",
            have.hidden_dim, have.num_layers, have.num_heads, have.max_positions
        ))
        .into());
    }
    let CorefModel {
        mut config,
        vocab,
        mut params,
        ..
    } = model;
    config.encoder.dropout = want.encoder.dropout;
    config.proposal = want.proposal;
    config.linking = want.linking;
    if want.speaker_mode == SpeakerMode::Feature && params.id("linking.speaker_weight").is_none() {
        params.add_zeros("linking.speaker_weight", spanlink::autograd::ParamGroup::Heads, (1, 1));
    }
    config.speaker_mode = want.speaker_mode;
    Ok(CorefModel::bind(config, vocab, params)?)
}

fn starting_model(cfg: &RunConfig, init: Option<&Path>, data: &Data) -> Result<CorefModel> {
    match init {
        Some(dir) => {
            let (model, _, meta) = load_checkpoint(dir).with_context(|| format!("loading {}", dir.display()))?;
            info!("initialized from {} ({} stage)", dir.display(), meta.stage);
            adapt(model, cfg)
        }
        None => Ok(new_model(cfg, data.vocab(cfg))?),
    }
}

struct LogSink(BufWriter<File>);

impl LogSink {
    fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(LogSink(BufWriter::new(f)))
    }

    fn record(&mut self, r: &LogRecord) -> std::io::Result<()> {
        info!(
            "{} epoch {} step {}: loss {:.4} recall {:.3}{}{}",
            r.stage,
            r.epoch,
            r.step,
            r.loss,
            r.mention_recall,
            r.exact_match.map(|v| format!(" em {v:.3}")).unwrap_or_default(),
            r.dev_f1.map(|v| format!(" dev F1 {v:.4}")).unwrap_or_default(),
        );
        let line = serde_json::to_string(r).map_err(std::io::Error::other)?;
        writeln!(self.0, "{line}")
    }
}

/// Runs `train_model` with log lines going to `log_path`.
fn run_stages(
    model: &mut CorefModel,
    cfg: &RunConfig,
    stages: Stages,
    resume: Option<Resume>,
    data: &Data,
    log_path: &Path,
) -> Result<spanlink::pipeline::TrainOutcome> {
    let train = prepare_all(model, &data.train)?;
    let dev = prepare_all(model, &data.dev)?;
    let mut sink = LogSink::create(log_path)?;
    let mut io_err = None;
    let outcome = train_model(model, cfg, stages, resume, &train, &dev, &data.qa, |r| {
        if let Err(e) = sink.record(r) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    sink.0.flush()?;
    Ok(outcome)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn pretrain_mentions(args: &ConfigArgs, init: Option<&Path>) -> Result<()> {
    let cfg = resolve(args)?;
    if cfg.data.train.is_none() {
        return Err(usage("pretrain-mentions needs data.train"));
    }
    let data = Data::load(&cfg)?;
    cfg.echo(&cfg.output_dir)?;
    let mut model = starting_model(&cfg, init, &data)?;
    let stages = Stages {
        proposal: true,
        qa: false,
        joint: false,
    };
    let log = cfg.output_dir.join("proposal_log.jsonl");
    run_stages(&mut model, &cfg, stages, None, &data, &log)?;
    let dir = cfg.output_dir.join("proposal");
    save_checkpoint(&dir, &model, None, "proposal", cfg.train.proposal_epochs)?;
    info!("saved {}", dir.display());
    if !data.dev.is_empty() {
        let dev = prepare_all(&model, &data.dev)?;
        let recall = proposal_recall(&model, &dev)?;
        println!(
            "dev mention recall at keep ratio {}: {recall:.4}",
            cfg.proposal.keep_ratio
        );
        write_json(
            &cfg.output_dir.join("proposal_recall.json"),
            &serde_json::json!({ "keep_ratio": cfg.proposal.keep_ratio, "recall": recall }),
        )?;
    }
    Ok(())
}

pub fn pretrain_qa(args: &ConfigArgs, init: Option<&Path>) -> Result<()> {
    let cfg = resolve(args)?;
    if cfg.data.qa.is_empty() {
        return Err(usage("pretrain-qa needs data.qa"));
    }
    if cfg.train.qa_epochs == 0 {
        return Err(usage("pretrain-qa needs train.qa_epochs > 0"));
    }
    let data = Data::load(&cfg)?;
    cfg.echo(&cfg.output_dir)?;
    let mut model = starting_model(&cfg, init, &data)?;
    let stages = Stages {
        proposal: false,
        qa: true,
        joint: false,
    };
    let log = cfg.output_dir.join("qa_log.jsonl");
    let outcome = run_stages(&mut model, &cfg, stages, None, &data, &log)?;
    if let Some(em) = outcome.log.last().and_then(|r| r.exact_match) {
        println!("final QA exact match: {em:.4}");
    }
    let dir = cfg.output_dir.join("qa");
    save_checkpoint(&dir, &model, None, "qa", cfg.train.qa_epochs)?;
    info!("saved {}", dir.display());
    Ok(())
}

pub fn train(args: &ConfigArgs, init: Option<&Path>, resume: Option<&Path>, freeze_encoder: bool) -> Result<()> {
    let mut cfg = resolve(args)?;
    if freeze_encoder {
        cfg.train.freeze_encoder = true;
    }
    if cfg.data.train.is_none() {
        return Err(usage("train needs data.train"));
    }
    let data = Data::load(&cfg)?;
    cfg.echo(&cfg.output_dir)?;
    let (mut model, resume) = match resume {
        Some(dir) => {
            let (model, optimizer, meta) =
                load_checkpoint(dir).with_context(|| format!("loading {}", dir.display()))?;
            let optimizer =
                optimizer.ok_or_else(|| usage(format!("{} has no optimizer state to resume from", dir.display())))?;
            info!(
                "resuming from {} at epoch {}, step {}",
                dir.display(),
                meta.epoch,
                meta.step
            );
            let epoch = meta.epoch;
            (adapt(model, &cfg)?, Some(Resume { optimizer, epoch }))
        }
        None => (starting_model(&cfg, init, &data)?, None),
    };
    let stages = Stages {
        proposal: false,
        qa: false,
        joint: true,
    };
    let log = cfg.output_dir.join("train_log.jsonl");
    let outcome = run_stages(&mut model, &cfg, stages, resume, &data, &log)?;
    // `train_model` has restored the best dev epoch; `last` keeps the final state.
    let last_dir = cfg.output_dir.join("last");
    let best_dir = cfg.output_dir.join("model");
    if let Some(opt) = &outcome.optimizer {
        let params = outcome.last_params.clone().unwrap_or_else(|| model.params.clone());
        let last = CorefModel::bind(model.config.clone(), model.vocab.clone(), params)?;
        save_checkpoint(&last_dir, &last, Some(opt), "joint", outcome.joint_epochs)?;
    }
    save_checkpoint(
        &best_dir,
        &model,
        None,
        "joint",
        outcome.best_epoch.map_or(outcome.joint_epochs, |e| e + 1),
    )?;
    match outcome.best_dev {
        Some(r) => println!(
            "best dev CoNLL F1 {:.4} at epoch {}",
            r.conll_avg_f1,
            outcome.best_epoch.unwrap_or_default()
        ),
        None => println!("final train loss {:.4}", outcome.final_train_loss),
    }
    info!("saved {}", best_dir.display());
    Ok(())
}

fn is_gap(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"))
}

fn load_model(dir: &Path) -> Result<CorefModel> {
    let (model, _, _) = load_checkpoint(dir).with_context(|| format!("loading {}", dir.display()))?;
    Ok(model)
}

pub fn predict(model_dir: &Path, input: &Path, output: &Path) -> Result<()> {
    let model = load_model(model_dir)?;
    if is_gap(input) {
        let examples = parse_gap(input)?;
        let mut rows = Vec::with_capacity(examples.len());
        for ex in &examples {
            let gap = gap_to_document(ex)?;
            let doc = model.prepare(&gap.document)?;
            let pred = model.predict(&doc)?;
            let (a, b) = gap_decisions(&gap, &pred.clusters);
            rows.push((ex.example_id.clone(), a, b));
        }
        std::fs::write(output, write_gap_predictions(&rows))
            .with_context(|| format!("writing {}", output.display()))?;
    } else {
        let docs = parse_conll(input)?;
        let prepared = prepare_all(&model, &docs)?;
        let preds = model.predict_all(&prepared)?;
        let clusters: Vec<Vec<Vec<_>>> = preds.into_iter().map(|p| p.clusters.into_inner()).collect();
        write_conll(&docs, &clusters, output)?;
    }
    info!("wrote {}", output.display());
    Ok(())
}

fn prf_row(name: &str, p: &Prf) -> String {
    format!(
        "{name:<8} {:>9.2} {:>9.2} {:>9.2}",
        100.0 * p.precision,
        100.0 * p.recall,
        100.0 * p.f1
    )
}

fn print_report(r: &MetricReport) {
    println!("{:<8} {:>9} {:>9} {:>9}", "metric", "P", "R", "F1");
    println!("{}", prf_row("MUC", &r.muc));
    println!("{}", prf_row("B3", &r.b_cubed));
    println!("{}", prf_row("CEAFe", &r.ceaf_phi4));
    println!("{:<8} {:>29.2}", "CoNLL", 100.0 * r.conll_avg_f1);
}

pub fn evaluate(gold: &Path, pred: &Path, json: bool) -> Result<()> {
    if is_gap(gold) {
        let examples = parse_gap(gold)?;
        let text = std::fs::read_to_string(pred).with_context(|| format!("reading {}", pred.display()))?;
        let rows = parse_gap_predictions(&text)?;
        let r = gap_score(&examples, &rows);
        if json {
            println!("{}", serde_json::to_string(&serde_json::json!({ "gap": r }))?);
        } else {
            println!("masculine F1 {:.2}", 100.0 * r.masculine_f1);
            println!("feminine F1  {:.2}", 100.0 * r.feminine_f1);
            println!("bias (F/M)   {:.3}", r.bias);
            println!("overall F1   {:.2}", 100.0 * r.overall_f1);
        }
        return Ok(());
    }
    let gold_docs = parse_conll(gold)?;
    let pred_docs = parse_conll(pred)?;
    let mut by_key: HashMap<&str, &Document> = pred_docs.iter().map(|d| (d.doc_key.as_str(), d)).collect();
    let mut scorer = CorpusScorer::new();
    for g in &gold_docs {
        match by_key.remove(g.doc_key.as_str()) {
            Some(p) => {
                if p.len() != g.len() {
                    return Err(Error::ParseDocument {
                        doc_key: g.doc_key.clone(),
                        message: format!("gold has {} words, prediction {}", g.len(), p.len()),
                    }
                    .into());
                }
                scorer.add(&g.gold_clusters, &p.gold_clusters);
            }
            None => {
                warn!("no prediction for {}; scoring it as empty", g.doc_key);
                scorer.add(&g.gold_clusters, &[]);
            }
        }
    }
    for key in by_key.keys() {
        warn!("prediction for {key} has no gold document; ignored");
    }
    let r = scorer.report();
    if json {
        println!("{}", serde_json::to_string(&r)?);
    } else {
        print_report(&r);
    }
    Ok(())
}

pub fn recall_curve(model_dir: &Path, input: &Path, ratios: &[f64], json: bool) -> Result<()> {
    if ratios.is_empty() {
        return Err(usage("recall-curve needs at least one ratio"));
    }
    let mut model = load_model(model_dir)?;
    let docs = parse_conll(input)?;
    let prepared = prepare_all(&model, &docs)?;
    let points = curve(&mut model, &prepared, ratios)?;
    if json {
        println!("{}", serde_json::to_string(&points)?);
    } else {
        println!("{:>10} {:>16} {:>15}", "keep", "proposal recall", "linking recall");
        for p in &points {
            println!(
                "{:>10.3} {:>16.4} {:>15.4}",
                p.keep_ratio, p.proposal_recall, p.linking_recall
            );
        }
    }
    Ok(())
}

pub fn speaker_ablation(args: &ConfigArgs, json: bool) -> Result<()> {
    let cfg = resolve(args)?;
    if cfg.data.train.is_none() || cfg.data.dev.is_none() {
        return Err(usage("speaker-ablation needs data.train and data.dev"));
    }
    let data = Data::load(&cfg)?;
    cfg.echo(&cfg.output_dir)?;
    let rows = ablation(&cfg, &data.train, &data.dev, |mode, r| {
        info!("[{mode:?}] {} epoch {}: loss {:.4}", r.stage, r.epoch, r.loss);
    })?;
    write_json(&cfg.output_dir.join("speaker_ablation.json"), &rows)?;
    if json {
        println!("{}", serde_json::to_string(&rows)?);
    } else {
        println!("{:>8} {:>5} {:>9} {:>11}", "speakers", "docs", "text F1", "feature F1");
        for r in &rows {
            let label = if r.speakers == spanlink::pipeline::MAX_SPEAKER_BUCKET {
                format!("{}+", r.speakers)
            } else {
                r.speakers.to_string()
            };
            println!(
                "{label:>8} {:>5} {:>9.2} {:>11.2}",
                r.docs,
                100.0 * r.text_f1,
                100.0 * r.feature_f1
            );
        }
    }
    Ok(())
}

pub fn gen_synthetic(kind: &str, count: usize, seed: u64, max_speakers: usize, output: &Path) -> Result<()> {
    let write = |text: String| std::fs::write(output, text).with_context(|| format!("writing {}", output.display()));
    match kind {
        "narrative" | "dialogue" => {
            let docs = if kind == "narrative" {
                synthetic::narrative_corpus(count, seed)
            } else {
                if max_speakers == 0 {
                    return Err(usage("--max-speakers must be at least 1"));
                }
                synthetic::dialogue_corpus(count, max_speakers, seed)
            };
            let clusters: Vec<_> = docs.iter().map(|d| d.gold_clusters.clone()).collect();
            write_conll(&docs, &clusters, output)?;
        }
        "qa" => write(write_qa_string(&synthetic::qa_corpus(count, seed))?)?,
        "gap" => write(write_gap_string(&synthetic::gap_examples(count, seed))?)?,
        other => {
            return Err(usage(format!(
                "unknown corpus kind {other:?} (narrative, dialogue, qa, gap)"
            )))
        }
    }
    Ok(())
}
