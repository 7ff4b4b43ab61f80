//! The trainable model (backbone plus head) and its checkpoint directory.

use std::fs;
use std::path::Path;

use citss_core::config::TrainConfig;
use citss_core::corpus::CitationContext;
use citss_core::rng::{self, Stream};
use citss_core::stk::StkBase;
use citss_core::synonyms::SynonymBase;
use citss_core::Label;
use citss_nn::tokenizer::Tokenizer;
use citss_nn::{ParamId, ParamStore};
use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::head::Head;
use crate::{Result, TrainError};

pub const PARAMS_FILE: &str = "params.bin";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone)]
pub struct Model {
    pub config: TrainConfig,
    pub store: ParamStore,
    pub backbone: Backbone,
    pub head: Head,
    /// Set once masked-language pretraining has run (empty when skipped).
    pub pretrain_losses: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    config_hash: String,
    config: TrainConfig,
    tokenizer: Tokenizer,
}

/// Texts the vocabulary is built from: training contexts, every keyphrase in
/// the base and every synonym, so perturbed text stays in-vocabulary.
pub fn vocabulary_texts<'a>(
    train: &'a [CitationContext],
    stk: &'a StkBase,
    synonyms: &'a SynonymBase,
) -> Vec<&'a str> {
    let mut texts: Vec<&str> = train.iter().flat_map(|c| c.sentences.iter().map(String::as_str)).collect();
    texts.extend(stk.global().values().flatten().map(String::as_str));
    for (word, syns) in synonyms.entries() {
        texts.push(word);
        texts.extend(syns.iter().map(String::as_str));
    }
    texts
}

impl Model {
    /// Fresh model; parameter initialization is seeded from `config.seed`.
    /// Backbone weights named in the config are loaded by parameter name.
    pub fn build(config: &TrainConfig, tokenizer: Tokenizer) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::global(config.seed, Stream::Init, 0);
        let mut store = ParamStore::new();
        let backbone = Backbone::build(&config.backbone, tokenizer, &mut store, &mut rng)?;
        let head = Head::new(&mut store, backbone.hidden_size(), config.d, config.d_z, Label::COUNT, &mut rng);
        let mut model = Model {
            config: config.clone(),
            store,
            backbone,
            head,
            pretrain_losses: None,
        };
        if let Some(path) = &config.backbone.weights {
            model.load_backbone_weights(Path::new(path))?;
        }
        Ok(model)
    }

    pub fn from_corpus(config: &TrainConfig, train: &[CitationContext], stk: &StkBase, synonyms: &SynonymBase) -> Result<Self> {
        let tokenizer = Tokenizer::build(vocabulary_texts(train, stk, synonyms), config.backbone.vocab_size);
        Self::build(config, tokenizer)
    }

    pub fn backbone_ids(&self) -> Vec<ParamId> {
        self.backbone.transformer.param_ids()
    }

    pub fn trainable_count(&self) -> usize {
        self.store.count_trainable()
    }

    fn load_backbone_weights(&mut self, path: &Path) -> Result<()> {
        let other = ParamStore::read(path)?;
        for id in self.backbone_ids() {
            let name = self.store.name(id).to_string();
            if name.contains(".lora_") {
                continue;
            }
            let src = other
                .find(&name)
                .ok_or_else(|| TrainError::Checkpoint(format!("{}: missing tensor {name}", path.display())))?;
            if other.value(src).dim() != self.store.value(id).dim() {
                return Err(TrainError::Checkpoint(format!("{}: shape mismatch for {name}", path.display())));
            }
            *self.store.value_mut(id) = other.value(src).clone();
        }
        Ok(())
    }

    /// Writes `params.bin` and `meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        self.store.save(&dir.join(PARAMS_FILE))?;
        let meta = Meta {
            config_hash: self.config.hash(),
            config: self.config.clone(),
            tokenizer: self.backbone.tokenizer.clone(),
        };
        let path = dir.join(META_FILE);
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| TrainError::io(&path, e))
    }

    /// Restores a model saved with [`Model::save`]. The stored configuration
    /// hash must match the stored configuration.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(META_FILE);
        let text = fs::read_to_string(&path).map_err(|e| TrainError::io(&path, e))?;
        let mut meta: Meta = serde_json::from_str(&text)?;
        if meta.config.hash() != meta.config_hash {
            return Err(TrainError::Checkpoint(format!(
                "{}: configuration hash {} does not match its configuration",
                path.display(),
                meta.config_hash
            )));
        }
        meta.tokenizer.reindex();
        let mut config = meta.config;
        config.backbone.weights = None;
        let mut model = Model::build(&config, meta.tokenizer)?;
        model
            .store
            .load(&dir.join(PARAMS_FILE))
            .map_err(|e| TrainError::Checkpoint(format!("{}: {e}", dir.display())))?;
        model.pretrain_losses = Some(Vec::new());
        Ok(model)
    }

    /// Checks that a checkpoint can serve a configuration: same backbone and
    /// head dimensions.
    pub fn check_compatible(&self, config: &TrainConfig) -> Result<()> {
        let (a, b) = (&self.config, config);
        let same = a.d == b.d
            && a.d_z == b.d_z
            && a.backbone.kind == b.backbone.kind
            && a.backbone.d_model == b.backbone.d_model
            && a.backbone.layers == b.backbone.layers
            && a.backbone.prompt == b.backbone.prompt
            && a.backbone.lora_rank == b.backbone.lora_rank;
        if same {
            Ok(())
        } else {
            Err(TrainError::Checkpoint("checkpoint does not match the configured backbone or head".into()))
        }
    }
}
