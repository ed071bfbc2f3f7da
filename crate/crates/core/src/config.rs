//! Run configuration: one TOML file with dotted keys (`proposal.keep_ratio =
//! 0.2`), `key=value` overrides on top, and a seed override from the
//! environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::linking::LinkingConfig;
use crate::model::{ModelConfig, SpeakerMode};
use crate::proposal::ProposalConfig;
use crate::train::{OptimConfig, TrainConfig};

/// Environment variable that overrides `train.seed`.
pub const SEED_ENV: &str = "SPANLINK_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// SQuAD- or Quoref-style JSON files for linking pretraining.
    pub qa: Vec<PathBuf>,
    pub gap: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    /// Sliding window size `T` in pieces.
    pub window: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub dropout: f64,
    /// Minimum word count for a whole-word vocabulary entry.
    pub vocab_min_count: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            window: 512,
            hidden_dim: 64,
            num_layers: 2,
            num_heads: 4,
            dropout: 0.1,
            vocab_min_count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalSection {
    pub max_span_length: usize,
    pub keep_ratio: f64,
    /// Negatives kept per positive in the proposal loss; 0 keeps all.
    pub negative_ratio: usize,
    pub cross_sentence: bool,
}

impl Default for ProposalSection {
    fn default() -> Self {
        let p = ProposalConfig::default();
        ProposalSection {
            max_span_length: p.max_span_length,
            keep_ratio: p.keep_ratio,
            negative_ratio: p.negative_ratio.unwrap_or(0),
            cross_sentence: p.cross_sentence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub seed: u64,
    pub epochs: usize,
    pub proposal_epochs: usize,
    pub qa_epochs: usize,
    pub alpha: f64,
    pub encoder_lr: f64,
    pub head_lr: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub freeze_encoder: bool,
    pub shuffle: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            seed: t.seed,
            epochs: t.epochs,
            proposal_epochs: 5,
            qa_epochs: 0,
            alpha: t.alpha,
            encoder_lr: t.optim.encoder_lr,
            head_lr: t.optim.head_lr,
            grad_clip: t.optim.grad_clip.unwrap_or(0.0),
            freeze_encoder: t.optim.freeze_encoder,
            shuffle: t.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub speaker_mode: SpeakerMode,
    pub data: DataConfig,
    pub encoder: EncoderSection,
    pub proposal: ProposalSection,
    pub linking: LinkingConfig,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("runs/default"),
            speaker_mode: SpeakerMode::Text,
            data: DataConfig::default(),
            encoder: EncoderSection::default(),
            proposal: ProposalSection::default(),
            linking: LinkingConfig::default(),
            train: TrainSection::default(),
        }
    }
}

/// Sets `path` (dotted) inside `table`, creating intermediate tables.
fn set_dotted(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::Config(format!("empty key in {path:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{p} in {path:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Small settings that train in seconds on one CPU core.
    pub fn desk() -> Self {
        RunConfig {
            encoder: EncoderSection {
                window: 64,
                hidden_dim: 32,
                num_layers: 2,
                num_heads: 2,
                dropout: 0.0,
                vocab_min_count: 1,
            },
            proposal: ProposalSection {
                max_span_length: 3,
                keep_ratio: 0.6,
                ..ProposalSection::default()
            },
            linking: LinkingConfig {
                antecedent_cap: 20,
                ..LinkingConfig::default()
            },
            train: TrainSection {
                epochs: 30,
                proposal_epochs: 15,
                encoder_lr: 1e-3,
                head_lr: 2e-3,
                ..TrainSection::default()
            },
            ..RunConfig::default()
        }
    }

    /// Reads `path` (if any) over `base`, then applies `key=value`
    /// overrides and the seed environment variable.
    pub fn resolve(base: RunConfig, path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = toml::to_string(&base).map_err(|e| Error::Serialize(e.to_string()))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::Serialize(e.to_string()))?;
        if let Some(path) = path {
            let file = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let user: toml::Table =
                toml::from_str(&file).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut table, user);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_dotted(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            let seed: i64 = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={seed:?} is not an integer")))?;
            set_dotted(&mut table, "train.seed", toml::Value::Integer(seed))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut m = self.model_config();
        m.encoder.vocab_size = 1;
        m.validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        let e = &self.encoder;
        let p = &self.proposal;
        ModelConfig {
            encoder: EncoderConfig {
                vocab_size: 0,
                hidden_dim: e.hidden_dim,
                num_layers: e.num_layers,
                num_heads: e.num_heads,
                max_positions: e.window,
                dropout: e.dropout,
            },
            proposal: ProposalConfig {
                max_span_length: p.max_span_length,
                keep_ratio: p.keep_ratio,
                negative_ratio: (p.negative_ratio > 0).then_some(p.negative_ratio),
                cross_sentence: p.cross_sentence,
            },
            linking: self.linking.clone(),
            speaker_mode: self.speaker_mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            alpha: t.alpha,
            seed: t.seed,
            shuffle: t.shuffle,
            optim: OptimConfig {
                encoder_lr: t.encoder_lr,
                head_lr: t.head_lr,
                grad_clip: (t.grad_clip > 0.0).then_some(t.grad_clip),
                freeze_encoder: t.freeze_encoder,
                ..OptimConfig::default()
            },
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Writes the resolved configuration to `dir/config.toml`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}
