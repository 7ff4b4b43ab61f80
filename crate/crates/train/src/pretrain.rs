//! Masked-language pretraining of a from-scratch backbone on unlabeled text.

use citss_core::rng::{self, Stream};
use citss_nn::optim::AdamW;
use citss_nn::tape::Tape;
use citss_nn::tokenizer::{CLS, MASK, SEP};
use citss_nn::transformer::Bound;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::Model;

pub const MASK_RATE: f64 = 0.15;
const BATCH: usize = 8;

/// Mean masked-token loss per epoch.
pub fn pretrain_mlm(model: &mut Model, texts: &[String], epochs: usize, lr: f64, seed: u64) -> Vec<f64> {
    if epochs == 0 || texts.is_empty() {
        return Vec::new();
    }
    let max_len = model.backbone.max_len();
    let encoded: Vec<Vec<u32>> = texts
        .iter()
        .map(|t| {
            let mut ids = vec![CLS];
            ids.extend(model.backbone.tokenizer.encode(t).into_iter().take(max_len - 2));
            ids.push(SEP);
            ids
        })
        .filter(|ids| ids.len() > 2)
        .collect();

    // every backbone tensor learns here, including ones a wrapper freezes later
    let ids = model.backbone_ids();
    let was: Vec<bool> = ids.iter().map(|&id| model.store.is_trainable(id)).collect();
    let head_ids = model.head.param_ids();
    for &id in &ids {
        model.store.set_trainable(id, true);
    }
    for &id in &head_ids {
        model.store.set_trainable(id, false);
    }

    let mut opt = AdamW::new(lr, 0.0);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order.shuffle(&mut rng::global(seed, Stream::Other(1), epoch as u64));
        let mut mask_rng = rng::global(seed, Stream::Other(2), epoch as u64);
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(BATCH) {
            let mut tape = Tape::new();
            let bound = Bound::all(&mut tape, &model.store);
            let mut parts = Vec::new();
            let mut n_masked = 0;
            for &i in chunk {
                let mut ids = encoded[i].clone();
                let inner = ids.len() - 2;
                let mut positions: Vec<usize> = (1..=inner).filter(|_| mask_rng.random_bool(MASK_RATE)).collect();
                if positions.is_empty() {
                    positions.push(mask_rng.random_range(1..=inner));
                }
                let targets: Vec<usize> = positions.iter().map(|&p| ids[p] as usize).collect();
                for &p in &positions {
                    ids[p] = MASK;
                }
                let h = model.backbone.transformer.forward(&mut tape, &bound, &ids);
                let rows = tape.select_rows(h, &positions);
                let logits = model.backbone.transformer.lm_logits(&mut tape, &bound, rows);
                let lp = tape.log_softmax(logits);
                parts.push(tape.pick(lp, &targets));
                n_masked += positions.len();
            }
            let all = tape.concat_rows(&parts);
            let s = tape.sum(all);
            let loss = tape.scale(s, -1.0 / n_masked as f64);
            total += tape.scalar(loss) * n_masked as f64;
            count += n_masked;
            let grads = tape.backward(loss, &model.store);
            opt.step(&mut model.store, &grads, |_| false);
        }
        let mean = total / count as f64;
        log::debug!("mlm epoch {epoch}: loss {mean:.4}");
        losses.push(mean);
    }

    for (&id, &t) in ids.iter().zip(&was) {
        model.store.set_trainable(id, t);
    }
    for &id in &head_ids {
        model.store.set_trainable(id, true);
    }
    losses
}
