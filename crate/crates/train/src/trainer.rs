//! The fine-tuning loop: three-stream encoding, loss assembly, decoupled
//! weight decay, per-epoch validation and best-checkpoint selection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use citss_core::augment::{kp_transform_seeded, sample_sc_seeded, schedule_op, PerturbOp, TransformedSample};
use citss_core::config::PenaltyScope;
use citss_core::corpus::{CitationContext, DatasetSplit};
use citss_core::eval::MetricReport;
use citss_core::rng::{self, Stream};
use citss_core::stk::StkBase;
use citss_core::synonyms::SynonymBase;
use citss_core::Label;
use citss_nn::optim::{clip_global_norm, AdamW};
use citss_nn::tape::{Tape, Var};
use citss_nn::transformer::Bound;
use citss_nn::{ParamId, ParamStore};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::backbone::EncodedPrompt;
use crate::head;
use crate::model::Model;
use crate::pretrain::pretrain_mlm;
use crate::{Result, TrainError};

const PREDICT_CHUNK: usize = 32;

#[derive(Debug, Clone)]
pub struct TrainData {
    pub split: DatasetSplit,
    pub stk: StkBase,
    pub synonyms: SynonymBase,
}

/// Reported after every optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEvent {
    pub epoch: usize,
    pub step: usize,
    pub batch_size: usize,
    /// Backbone forwards performed by this step.
    pub forwards: u64,
    pub op: PerturbOp,
    pub l_cls: f64,
    pub l_sc: f64,
    pub l_kp: f64,
    pub l_total: f64,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    pub observer: Option<&'a mut dyn FnMut(&StepEvent)>,
    /// Skip scoring the test split at the best checkpoint.
    pub skip_test: bool,
}

/// Loss columns are summed over the epoch's steps, except `l_pnt`, which is
/// the penalty after the epoch's last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_cls: f64,
    pub l_sc: f64,
    pub l_kp: f64,
    pub l_pnt: f64,
    pub l_total: f64,
    pub val_macro_f1: f64,
    pub val_accuracy: f64,
    pub forwards: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config_hash: String,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: MetricReport,
    pub test: Option<MetricReport>,
    pub stopped_early: bool,
    pub trainable_params: usize,
    pub total_forwards: u64,
    pub pretrain_losses: Vec<f64>,
}

pub const EPOCHS_CSV_HEADER: &str = "epoch,l_cls,l_sc,l_kp,l_pnt,l_total,val_macro_f1,val_accuracy,forwards";

impl RunMetrics {
    pub fn epochs_csv(&self) -> String {
        let mut s = format!("{EPOCHS_CSV_HEADER}\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                e.epoch, e.l_cls, e.l_sc, e.l_kp, e.l_pnt, e.l_total, e.val_macro_f1, e.val_accuracy, e.forwards
            );
        }
        s
    }

    /// `metrics.json` and `epochs.csv` in `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        let p = dir.join("metrics.json");
        fs::write(&p, serde_json::to_string_pretty(self)?).map_err(|e| TrainError::io(&p, e))?;
        let p = dir.join("epochs.csv");
        fs::write(&p, self.epochs_csv()).map_err(|e| TrainError::io(&p, e))
    }
}

fn labels_of(contexts: &[CitationContext]) -> Result<Vec<usize>> {
    contexts
        .iter()
        .map(|c| c.label.map(Label::index).ok_or_else(|| TrainError::Unlabeled(c.sample_id.clone())))
        .collect()
}

fn decay_set(model: &Model) -> Vec<bool> {
    let mut set = vec![false; model.store.len()];
    match model.config.penalty_scope {
        PenaltyScope::All => {
            for id in model.store.trainable_ids() {
                set[id.0] = true;
            }
        }
        PenaltyScope::Head => {
            for id in model.head.param_ids() {
                set[id.0] = true;
            }
        }
    }
    set
}

/// `½·Σθ²` over the decayed parameters.
fn penalty(store: &ParamStore, decayed: &[bool]) -> f64 {
    0.5 * store.sum_squares((0..store.len()).filter(|&i| decayed[i]).map(ParamId))
}

fn encode_batch(model: &Model, tape: &mut Tape, bound: &Bound, prompts: &[EncodedPrompt]) -> Var {
    let rows: Vec<Var> = prompts.iter().map(|p| model.backbone.encode(tape, bound, p)).collect();
    tape.concat_rows(&rows)
}

fn dump_batch(batch: &[&CitationContext], sc: &[TransformedSample], kp: &[TransformedSample], losses: [f64; 3]) -> String {
    let json = serde_json::json!({
        "samples": batch.iter().map(|c| serde_json::json!({"sample_id": c.sample_id, "text": c.text()})).collect::<Vec<_>>(),
        "sc": sc.iter().map(TransformedSample::text).collect::<Vec<_>>(),
        "kp": kp.iter().map(TransformedSample::text).collect::<Vec<_>>(),
        "l_cls": losses[0], "l_sc": losses[1], "l_kp": losses[2],
    });
    json.to_string()
}

/// Runs masked-language pretraining once per model when the backbone starts
/// from scratch.
pub fn ensure_pretrained(model: &mut Model, train_set: &[CitationContext]) {
    if model.pretrain_losses.is_some() {
        return;
    }
    let b = &model.config.backbone;
    let losses = if b.weights.is_none() && b.pretrain_epochs > 0 {
        let texts: Vec<String> = train_set.iter().map(|c| c.clone().clipped(model.config.context_range).text()).collect();
        let (epochs, lr, seed) = (b.pretrain_epochs, b.pretrain_lr, model.config.seed);
        pretrain_mlm(model, &texts, epochs, lr, seed)
    } else {
        Vec::new()
    };
    model.pretrain_losses = Some(losses);
}

/// Fine-tunes `model` on `data`. On return the model holds the parameters of
/// the epoch with the best validation Macro-F1 + Accuracy.
pub fn train(model: &mut Model, data: &TrainData, mut opts: TrainOptions<'_>) -> Result<RunMetrics> {
    let cfg = model.config.clone();
    cfg.validate()?;
    let train_set: Vec<CitationContext> =
        data.split.train.iter().map(|c| c.clone().clipped(cfg.context_range)).collect();
    if train_set.is_empty() {
        return Err(TrainError::EmptyTraining);
    }
    if data.split.validation.is_empty() {
        return Err(TrainError::Unsupported("training needs a non-empty validation split".into()));
    }
    let train_labels = labels_of(&train_set)?;
    let prompts: Vec<EncodedPrompt> = train_set.iter().map(|c| model.backbone.prepare(c)).collect::<Result<_>>()?;

    ensure_pretrained(model, &train_set);

    let decayed = decay_set(model);
    let mut opt = AdamW::new(cfg.learning_rate, cfg.omega);
    let (use_sc, use_kp) = (cfg.lambda1 > 0.0, cfg.lambda2 > 0.0);

    let mut epochs = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, usize, MetricReport, ParamStore)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut step = 0usize;
    let mut total_forwards = 0u64;

    for epoch in 0..cfg.max_epochs {
        let op = schedule_op(epoch, cfg.op_mode);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::global(cfg.seed, Stream::Shuffle, epoch as u64));
        let start = model.backbone.forward_count();
        let mut rec = EpochRecord {
            epoch,
            l_cls: 0.0,
            l_sc: 0.0,
            l_kp: 0.0,
            l_pnt: 0.0,
            l_total: 0.0,
            val_macro_f1: 0.0,
            val_accuracy: 0.0,
            forwards: 0,
        };

        for idx in order.chunks(cfg.batch_size) {
            let before = model.backbone.forward_count();
            let batch: Vec<&CitationContext> = idx.iter().map(|&i| &train_set[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
            let sc: Vec<TransformedSample> = if use_sc {
                batch.iter().map(|c| sample_sc_seeded(c, epoch, cfg.seed)).collect()
            } else {
                Vec::new()
            };
            let kp: Vec<TransformedSample> = if use_kp {
                batch
                    .iter()
                    .map(|c| kp_transform_seeded(c, cfg.op_mode, cfg.beta, cfg.gamma, &data.stk, &data.synonyms, epoch, cfg.seed))
                    .collect::<citss_core::Result<_>>()?
            } else {
                Vec::new()
            };

            let mut tape = Tape::new();
            let bound = Bound::all(&mut tape, &model.store);
            let mut drop_rng = rng::global(cfg.seed, Stream::Dropout, step as u64);
            let mut adapter = |tape: &mut Tape, x: Var| {
                let d = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut drop_rng as &mut dyn rand::RngCore));
                model.head.adapter(tape, &bound, x, d)
            };

            let orig: Vec<EncodedPrompt> = idx.iter().map(|&i| prompts[i].clone()).collect();
            let x = encode_batch(model, &mut tape, &bound, &orig);
            let z = adapter(&mut tape, x);
            let logits = model.head.logits(&mut tape, &bound, z);
            let l_cls = head::cls_loss(&mut tape, logits, &labels);

            let mut stream = |tape: &mut Tape, samples: &[TransformedSample], tau: f64| -> Result<Var> {
                let p: Vec<EncodedPrompt> = samples.iter().map(|s| model.backbone.prepare(s)).collect::<Result<_>>()?;
                let xt = encode_batch(model, tape, &bound, &p);
                let zt = adapter(tape, xt);
                Ok(head::infonce(tape, z, zt, tau))
            };
            let l_sc = if use_sc { Some(stream(&mut tape, &sc, cfg.tau1)?) } else { None };
            let l_kp = if use_kp { Some(stream(&mut tape, &kp, cfg.tau2)?) } else { None };
            let total = head::weighted(&mut tape, l_cls, l_sc.map(|v| (v, cfg.lambda1)), l_kp.map(|v| (v, cfg.lambda2)));

            let values = [
                tape.scalar(l_cls),
                l_sc.map_or(0.0, |v| tape.scalar(v)),
                l_kp.map_or(0.0, |v| tape.scalar(v)),
            ];
            let t = tape.scalar(total);
            if !t.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    step,
                    dump: dump_batch(&batch, &sc, &kp, values),
                });
            }
            let mut grads = tape.backward(total, &model.store);
            drop(tape);
            if cfg.grad_clip > 0.0 {
                clip_global_norm(&mut grads, cfg.grad_clip);
            }
            opt.step(&mut model.store, &grads, |id| decayed[id.0]);

            let l_pnt = penalty(&model.store, &decayed);
            rec.l_cls += values[0];
            rec.l_sc += values[1];
            rec.l_kp += values[2];
            rec.l_pnt = l_pnt;
            rec.l_total += t + cfg.omega * l_pnt;
            let forwards = model.backbone.forward_count() - before;
            if let Some(obs) = opts.observer.as_mut() {
                obs(&StepEvent {
                    epoch,
                    step,
                    batch_size: batch.len(),
                    forwards,
                    op,
                    l_cls: values[0],
                    l_sc: values[1],
                    l_kp: values[2],
                    l_total: t + cfg.omega * l_pnt,
                });
            }
            step += 1;
        }
        rec.forwards = model.backbone.forward_count() - start;
        total_forwards += rec.forwards;

        let val = evaluate(model, &data.split.validation)?;
        rec.val_macro_f1 = val.macro_f1;
        rec.val_accuracy = val.accuracy;
        log::info!(
            "epoch {epoch}: l_cls {:.4} l_sc {:.4} l_kp {:.4} val macro-F1 {:.4} acc {:.4}",
            rec.l_cls,
            rec.l_sc,
            rec.l_kp,
            val.macro_f1,
            val.accuracy
        );
        epochs.push(rec);
        let score = val.selection_score();
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, epoch, val, model.store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, best_val, store) = best.expect("at least one epoch");
    model.store = store;
    let test = if opts.skip_test || data.split.test.is_empty() {
        None
    } else {
        Some(evaluate(model, &data.split.test)?)
    };
    Ok(RunMetrics {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        epochs,
        best_epoch,
        best_val,
        test,
        stopped_early,
        trainable_params: model.store.trainable_ids().map(|id| model.store.value(id).len()).sum(),
        total_forwards,
        pretrain_losses: model.pretrain_losses.clone().unwrap_or_default(),
    })
}

/// Class probabilities for each context; one backbone forward per context.
pub fn predict_proba(model: &Model, contexts: &[CitationContext]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(contexts.len());
    for chunk in contexts.chunks(PREDICT_CHUNK) {
        let prompts: Vec<EncodedPrompt> = chunk
            .iter()
            .map(|c| model.backbone.prepare(&c.clone().clipped(model.config.context_range)))
            .collect::<Result<_>>()?;
        let mut tape = Tape::new();
        let bound = Bound::all(&mut tape, &model.store);
        let x = encode_batch(model, &mut tape, &bound, &prompts);
        let z = model.head.adapter(&mut tape, &bound, x, None);
        let logits = model.head.logits(&mut tape, &bound, z);
        let p = tape.softmax(logits);
        out.extend(tape.value(p).rows().into_iter().map(|r| r.to_vec()));
    }
    Ok(out)
}

/// Argmax labels; the inference path never builds transforms.
pub fn predict(model: &Model, contexts: &[CitationContext]) -> Result<Vec<Label>> {
    Ok(predict_proba(model, contexts)?
        .iter()
        .map(|p| {
            let best = p
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            Label::from_index(best.0).expect("six classes")
        })
        .collect())
}

pub fn evaluate(model: &Model, contexts: &[CitationContext]) -> Result<MetricReport> {
    let labels = labels_of(contexts)?;
    let preds: Vec<usize> = predict(model, contexts)?.into_iter().map(Label::index).collect();
    Ok(MetricReport::from_predictions(&preds, &labels, Label::COUNT)?)
}

