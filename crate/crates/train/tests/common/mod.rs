#![allow(dead_code)]

use citss_core::config::TrainConfig;
use citss_core::synonyms::SynonymBase;
use citss_core::synthetic::{generate, SynthSpec};
use citss_train::{Model, TrainData};

/// 37-context pool: floor(0.15·37) = 5 held out, 32 left for training.
pub fn toy_data(seed: u64) -> TrainData {
    let corpus = generate(&SynthSpec::small(37, 12), seed).unwrap();
    assert_eq!(corpus.split.train.len(), 32);
    TrainData {
        split: corpus.split,
        stk: corpus.stk,
        synonyms: SynonymBase::builtin(),
    }
}

/// Desk preset shrunk for fast tests.
pub fn toy_config() -> TrainConfig {
    let mut c = TrainConfig::preset("desk").unwrap();
    c.batch_size = 4;
    c.max_epochs = 2;
    c.d = 16;
    c.d_z = 8;
    c.backbone.d_model = 16;
    c.backbone.ffn = 32;
    c.backbone.pretrain_epochs = 1;
    c
}

pub fn toy_model(cfg: &TrainConfig, data: &TrainData) -> Model {
    Model::from_corpus(cfg, &data.split.train, &data.stk, &data.synonyms).unwrap()
}
