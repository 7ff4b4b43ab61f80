//! Run configuration: flat dotted-key TOML files, `key=value` overrides,
//! resolved snapshots and their hash, and the shipped presets.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::augment::OpMode;
use crate::corpus::DatasetId;
use crate::error::{Error, Result};
use crate::head::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    /// Masked-language encoder; read out at the mask position.
    #[default]
    Encoder,
    /// Causal decoder; read out at the last position.
    Decoder,
}

/// Which parameters the decoupled weight decay acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyScope {
    #[default]
    All,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub name: String,
    pub kind: BackboneKind,
    /// `p1`, `p2`, or a path to a UTF-8 template containing `{T}`.
    pub prompt: String,
    pub max_len: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub vocab_size: usize,
    /// Low-rank wrapper on the attention projections; 0 disables it.
    pub lora_rank: usize,
    pub lora_alpha: f64,
    /// Masked-language pretraining epochs over the training text before
    /// fine-tuning; only meaningful for encoders built from scratch.
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    /// Optional path to saved backbone weights.
    pub weights: Option<String>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            name: "tiny-encoder".into(),
            kind: BackboneKind::Encoder,
            prompt: "p1".into(),
            max_len: 96,
            d_model: 48,
            layers: 1,
            heads: 2,
            ffn: 96,
            vocab_size: 3000,
            lora_rank: 0,
            lora_alpha: 16.0,
            pretrain_epochs: 0,
            pretrain_lr: 1e-3,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// JSONL corpus.
    pub corpus: Option<String>,
    /// Saved StkBase JSON.
    pub stk_base: Option<String>,
    /// Synonym JSON (`word -> [synonyms]`); the bundled base when unset.
    pub synonyms: Option<String>,
    pub stopwords: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    /// OpenAI-compatible chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub timeout_secs: u64,
    pub retries: usize,
    pub max_in_flight: usize,
    pub cache_dir: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "meta-llama/Meta-Llama-3-70B-Instruct".into(),
            api_key_env: "CITSS_API_KEY".into(),
            temperature: 0.0,
            max_tokens: 512,
            timeout_secs: 120,
            retries: 3,
            max_in_flight: 4,
            cache_dir: "stk_cache".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub dataset: DatasetId,
    /// Maximum one-side context range `l`.
    pub context_range: usize,
    pub validation_fraction: f64,
    pub beta: f64,
    pub gamma: f64,
    pub op_mode: OpMode,
    pub lambda1: f64,
    pub lambda2: f64,
    pub omega: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub d: usize,
    pub d_z: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping; 0 means never.
    pub patience: usize,
    pub seed: u64,
    /// Dropout after the adapter activation.
    pub dropout: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub grad_clip: f64,
    pub penalty_scope: PenaltyScope,
    /// Seeds per setting in an ablation.
    pub run_count: usize,
    pub backbone: BackboneConfig,
    pub data: DataConfig,
    pub service: ServiceConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: DatasetId::AclArc,
            context_range: 3,
            validation_fraction: 0.15,
            beta: 0.6,
            gamma: 0.1,
            op_mode: OpMode::Mixed,
            lambda1: 0.2,
            lambda2: 0.1,
            omega: 0.01,
            tau1: 1.0,
            tau2: 1.0,
            d: 1024,
            d_z: 256,
            batch_size: 4,
            learning_rate: 2e-5,
            max_epochs: 10,
            patience: 0,
            seed: 0,
            dropout: 0.0,
            grad_clip: 0.0,
            penalty_scope: PenaltyScope::All,
            run_count: 3,
            backbone: BackboneConfig::default(),
            data: DataConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

const PRESETS: &[&str] = &[
    "acl-arc-scibert",
    "acl-arc-llama3",
    "focal-scibert",
    "focal-llama3",
    "act2-scibert",
    "act2-llama3",
    "desk",
];

impl TrainConfig {
    pub fn preset_names() -> &'static [&'static str] {
        PRESETS
    }

    /// Published per-dataset settings, plus `desk`, the small CPU setup.
    pub fn preset(name: &str) -> Option<TrainConfig> {
        let mut c = TrainConfig::default();
        if name == "desk" {
            c.lambda1 = 0.2;
            c.lambda2 = 0.1;
            c.d = 64;
            c.d_z = 32;
            c.batch_size = 8;
            c.learning_rate = 1e-3;
            c.max_epochs = 6;
            c.backbone.pretrain_epochs = 2;
            return Some(c);
        }
        let (dataset, model) = name.rsplit_once('-')?;
        let llama = match model {
            "scibert" => false,
            "llama3" => true,
            _ => return None,
        };
        match dataset {
            "acl-arc" => {
                c.dataset = DatasetId::AclArc;
                c.tau1 = 1.0;
                c.tau2 = 1.0;
                c.d = 1024;
                c.d_z = 256;
                c.batch_size = 4;
                (c.lambda1, c.lambda2, c.beta) = if llama { (0.1, 0.2, 0.4) } else { (0.2, 0.1, 0.6) };
            }
            "focal" => {
                c.dataset = DatasetId::Focal;
                c.lambda1 = 0.2;
                c.lambda2 = 0.1;
                c.tau1 = 5.0;
                c.tau2 = 1.0;
                (c.d, c.d_z, c.batch_size, c.beta) =
                    if llama { (1024, 256, 4, 0.7) } else { (256, 128, 16, 0.6) };
            }
            "act2" => {
                c.dataset = DatasetId::Act2;
                c.lambda1 = 0.1;
                c.tau1 = 0.1;
                c.lambda2 = 0.2;
                c.tau2 = 10.0;
                (c.d, c.d_z, c.batch_size, c.beta) =
                    if llama { (128, 64, 4, 0.4) } else { (256, 128, 16, 0.3) };
            }
            _ => return None,
        }
        c.backbone = if llama {
            BackboneConfig {
                name: "meta-llama/Meta-Llama-3-8B-Instruct".into(),
                kind: BackboneKind::Decoder,
                prompt: "p2".into(),
                max_len: 512,
                d_model: 4096,
                layers: 32,
                heads: 32,
                ffn: 14336,
                vocab_size: 128256,
                lora_rank: if dataset == "act2" { 8 } else { 16 },
                lora_alpha: 16.0,
                ..BackboneConfig::default()
            }
        } else {
            BackboneConfig {
                name: "allenai/scibert_scivocab_uncased".into(),
                kind: BackboneKind::Encoder,
                prompt: "p1".into(),
                max_len: 512,
                d_model: 768,
                layers: 12,
                heads: 12,
                ffn: 3072,
                vocab_size: 31090,
                ..BackboneConfig::default()
            }
        };
        Some(c)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        Self::from_table(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn from_table(table: Table) -> Result<Self> {
        let cfg: TrainConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn to_table(&self) -> Table {
        match Value::try_from(self).expect("config serializes") {
            Value::Table(t) => t,
            _ => unreachable!(),
        }
    }

    /// Applies `key=value` overrides; unknown keys are rejected. Values are
    /// read as TOML literals, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = self.to_table();
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {raw:?} is not key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            if !is_known_key(key) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
            set_path(&mut table, key, parse_literal(value))?;
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.max_epochs < 1 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if self.d == 0 || self.d_z == 0 {
            return bad("d and d_z must be positive".into());
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("dropout", self.dropout)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if self.grad_clip < 0.0 {
            return bad("grad_clip must be nonnegative".into());
        }
        if self.run_count < 1 {
            return bad("run_count must be at least 1".into());
        }
        let b = &self.backbone;
        if b.max_len < 4 || b.d_model == 0 || b.layers == 0 || b.heads == 0 {
            return bad("backbone dimensions must be positive and max_len ≥ 4".into());
        }
        if !b.d_model.is_multiple_of(b.heads) {
            return bad(format!("backbone.d_model {} not divisible by heads {}", b.d_model, b.heads));
        }
        self.loss_weights().validate()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            omega: self.omega,
            tau1: self.tau1,
            tau2: self.tau2,
        }
    }

    /// Resolved configuration as flat dotted keys, one per line, sorted.
    pub fn snapshot(&self) -> String {
        let mut lines = Vec::new();
        flatten("", &self.to_table(), &mut lines);
        lines.sort();
        let mut s = String::new();
        for l in lines {
            let _ = writeln!(s, "{l}");
        }
        s
    }

    /// SHA-256 of the snapshot, hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot().as_bytes()))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..8].to_string()
    }
}

fn known_keys() -> Vec<String> {
    let mut lines = Vec::new();
    flatten("", &TrainConfig::default().to_table(), &mut lines);
    let mut keys: Vec<String> = lines
        .into_iter()
        .map(|l| l.split(" = ").next().unwrap_or_default().to_string())
        .collect();
    // optional keys are absent from the serialized default
    keys.extend(
        ["backbone.weights", "data.corpus", "data.stk_base", "data.synonyms", "data.stopwords"]
            .map(String::from),
    );
    keys
}

fn is_known_key(key: &str) -> bool {
    known_keys().iter().any(|k| k == key)
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push(format!("{key} = {other}")),
        }
    }
}

fn parse_literal(value: &str) -> Value {
    format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().ok_or_else(|| Error::Config("empty key".into()))?;
    let mut cur = table;
    for p in parts {
        cur = match cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("{key:?}: {p} is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acl_arc_scibert_preset_matches_published_values() {
        let c = TrainConfig::preset("acl-arc-scibert").unwrap();
        assert_eq!((c.lambda1, c.lambda2, c.tau1, c.tau2), (0.2, 0.1, 1.0, 1.0));
        assert_eq!((c.batch_size, c.d, c.d_z), (4, 1024, 256));
        assert_eq!((c.beta, c.gamma, c.learning_rate, c.omega), (0.6, 0.1, 2e-5, 0.01));
        assert_eq!((c.context_range, c.max_epochs), (3, 10));
    }

    #[test]
    fn llama_presets_use_decoder_and_lora() {
        let c = TrainConfig::preset("act2-llama3").unwrap();
        assert_eq!(c.backbone.kind, BackboneKind::Decoder);
        assert_eq!(c.backbone.lora_rank, 8);
        assert_eq!((c.d, c.d_z, c.beta, c.tau2), (128, 64, 0.4, 10.0));
        assert_eq!(TrainConfig::preset("focal-llama3").unwrap().backbone.lora_rank, 16);
        assert!(TrainConfig::preset("acl-arc-bert").is_none());
        for name in TrainConfig::preset_names() {
            TrainConfig::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn flat_dotted_keys_parse() {
        let c = TrainConfig::from_toml_str(
            "lambda1 = 0.3\nbackbone.kind = \"decoder\"\nbackbone.lora_rank = 4\nop_mode = \"gr-only\"\n",
        )
        .unwrap();
        assert_eq!(c.lambda1, 0.3);
        assert_eq!(c.backbone.kind, BackboneKind::Decoder);
        assert_eq!(c.backbone.lora_rank, 4);
        assert_eq!(c.op_mode, OpMode::GrOnly);
        assert_eq!(c.lambda2, TrainConfig::default().lambda2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(TrainConfig::from_toml_str("lambda3 = 1").is_err());
        assert!(TrainConfig::from_toml_str("backbone.depth = 1").is_err());
        let c = TrainConfig::default();
        assert!(c.with_overrides(&["lambda3=0"]).is_err());
        assert!(c.with_overrides(&["lambda1"]).is_err());
    }

    #[test]
    fn overrides_win_over_file_values() {
        let c = TrainConfig::from_toml_str("lambda1 = 0.2\nlambda2 = 0.1\n").unwrap();
        let o = c.with_overrides(&["lambda1=0", "lambda2=0", "backbone.prompt=p2"]).unwrap();
        assert_eq!((o.lambda1, o.lambda2), (0.0, 0.0));
        assert_eq!(o.backbone.prompt, "p2");
        let snap = o.snapshot();
        assert!(snap.contains("lambda1 = 0.0\n"), "{snap}");
        assert!(snap.contains("lambda2 = 0.0\n"));
    }

    #[test]
    fn optional_keys_can_be_overridden() {
        let o = TrainConfig::default()
            .with_overrides(&["data.corpus=corpus.jsonl"])
            .unwrap();
        assert_eq!(o.data.corpus.as_deref(), Some("corpus.jsonl"));
        assert!(o.snapshot().contains("data.corpus = \"corpus.jsonl\""));
    }

    #[test]
    fn invalid_values_rejected() {
        let c = TrainConfig::default();
        assert!(c.with_overrides(&["max_epochs=0"]).is_err());
        assert!(c.with_overrides(&["tau1=0"]).is_err());
        assert!(c.with_overrides(&["lambda2=-1"]).is_err());
        assert!(c.with_overrides(&["beta=1.5"]).is_err());
    }

    #[test]
    fn snapshot_round_trips_and_hash_is_stable() {
        let c = TrainConfig::preset("focal-llama3").unwrap().with_overrides(&["seed=7"]).unwrap();
        let back = TrainConfig::from_toml_str(&c.snapshot()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.hash(), TrainConfig::default().hash());
        assert_eq!(c.short_hash().len(), 8);
    }

    #[test]
    fn shipped_config_files_match_presets() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in TrainConfig::preset_names() {
            let file = TrainConfig::load(&dir.join(format!("{name}.toml"))).unwrap();
            assert_eq!(file, TrainConfig::preset(name).unwrap(), "{name}");
        }
    }
}
