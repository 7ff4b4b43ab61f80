mod common;

use citss_core::augment::schedule_op;
use citss_core::config::BackboneKind;
use citss_train::trainer::{evaluate, predict, predict_proba, StepEvent};
use citss_train::{train, Model, TrainError, TrainOptions};
use common::{toy_config, toy_data, toy_model};

fn run_with_events(cfg: &citss_core::config::TrainConfig) -> (Vec<StepEvent>, citss_train::RunMetrics, Model) {
    let data = toy_data(0);
    let mut model = toy_model(cfg, &data);
    let mut events = Vec::new();
    let mut obs = |e: &StepEvent| events.push(e.clone());
    let metrics = train(
        &mut model,
        &data,
        TrainOptions {
            observer: Some(&mut obs),
            skip_test: false,
        },
    )
    .unwrap();
    (events, metrics, model)
}

#[test]
fn forward_accounting_per_step() {
    for (l1, l2, per) in [(0.2, 0.1, 3), (0.0, 0.1, 2), (0.2, 0.0, 2), (0.0, 0.0, 1)] {
        let mut cfg = toy_config();
        cfg.max_epochs = 1;
        cfg.lambda1 = l1;
        cfg.lambda2 = l2;
        let (events, metrics, _) = run_with_events(&cfg);
        assert_eq!(events.len(), 8);
        for e in &events {
            assert_eq!(e.forwards, per * e.batch_size as u64, "λ=({l1},{l2})");
        }
        assert_eq!(metrics.total_forwards, per * 32);
    }
}

#[test]
fn predict_is_one_forward_per_sample_and_batch_invariant() {
    let cfg = toy_config();
    let data = toy_data(1);
    let model = toy_model(&cfg, &data);
    let test = &data.split.test;
    model.backbone.reset_forward_count();
    let all = predict_proba(&model, test).unwrap();
    assert_eq!(model.backbone.forward_count(), test.len() as u64);
    for (i, ctx) in test.iter().enumerate() {
        let one = predict_proba(&model, std::slice::from_ref(ctx)).unwrap();
        for (a, b) in one[0].iter().zip(&all[i]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(predict(&model, &[]).unwrap().is_empty());
}

#[test]
fn same_seed_same_metrics() {
    let cfg = toy_config();
    let (ea, a, ma) = run_with_events(&cfg);
    let (eb, b, mb) = run_with_events(&cfg);
    assert_eq!(a, b);
    assert_eq!(ea, eb);
    assert_eq!(ma.store, mb.store);
}

#[test]
fn best_checkpoint_is_kept() {
    let mut cfg = toy_config();
    cfg.max_epochs = 3;
    let data = toy_data(2);
    let mut model = toy_model(&cfg, &data);
    let m = train(&mut model, &data, TrainOptions::default()).unwrap();
    let best = m
        .epochs
        .iter()
        .map(|e| e.val_macro_f1 + e.val_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(m.best_val.selection_score(), best);
    assert_eq!(m.epochs[m.best_epoch].val_macro_f1 + m.epochs[m.best_epoch].val_accuracy, best);
    assert_eq!(evaluate(&model, &data.split.validation).unwrap(), m.best_val);
    assert!(m.test.is_some());
}

#[test]
fn patience_stops_after_stale_epochs() {
    let mut cfg = toy_config();
    cfg.max_epochs = 8;
    cfg.patience = 1;
    cfg.learning_rate = 1e-9;
    let data = toy_data(3);
    let mut model = toy_model(&cfg, &data);
    let m = train(&mut model, &data, TrainOptions::default()).unwrap();
    assert!(m.stopped_early);
    assert_eq!(m.epochs.len(), m.best_epoch + 2);
}

#[test]
fn epochs_follow_the_op_schedule() {
    let mut cfg = toy_config();
    cfg.max_epochs = 3;
    let (events, _, _) = run_with_events(&cfg);
    for e in events {
        assert_eq!(e.op, schedule_op(e.epoch, cfg.op_mode));
    }
}

#[test]
fn non_finite_loss_aborts_with_dump() {
    let mut cfg = toy_config();
    cfg.tau1 = 5e-324;
    let data = toy_data(0);
    let mut model = toy_model(&cfg, &data);
    match train(&mut model, &data, TrainOptions::default()) {
        Err(TrainError::NonFinite { epoch, step, dump }) => {
            assert_eq!((epoch, step), (0, 0));
            assert!(dump.contains("syn-train-"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_training_split_is_an_error() {
    let cfg = toy_config();
    let mut data = toy_data(0);
    let mut model = toy_model(&cfg, &data);
    data.split.train.clear();
    assert!(matches!(train(&mut model, &data, TrainOptions::default()), Err(TrainError::EmptyTraining)));
}

#[test]
fn checkpoint_round_trip_predicts_identically() {
    let cfg = toy_config();
    let data = toy_data(4);
    let mut model = toy_model(&cfg, &data);
    train(&mut model, &data, TrainOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = Model::load(dir.path()).unwrap();
    back.check_compatible(&cfg).unwrap();
    assert_eq!(
        predict_proba(&back, &data.split.test).unwrap(),
        predict_proba(&model, &data.split.test).unwrap()
    );
    let mut other = cfg.clone();
    other.d_z = 4;
    assert!(back.check_compatible(&other).is_err());
}

#[test]
fn low_rank_wrapper_freezes_the_base() {
    let mut cfg = toy_config();
    cfg.backbone.lora_rank = 2;
    cfg.max_epochs = 1;
    let data = toy_data(5);
    let mut model = toy_model(&cfg, &data);
    citss_train::trainer::ensure_pretrained(&mut model, &data.split.train);
    let before = model.store.clone();
    train(&mut model, &data, TrainOptions::default()).unwrap();
    for id in model.store.ids() {
        let name = model.store.name(id);
        let changed = model.store.value(id) != before.value(id);
        if name.starts_with("head.") || name.contains(".lora_") {
            assert!(model.store.is_trainable(id), "{name}");
        } else {
            assert!(!changed, "{name} moved");
        }
    }
}

#[test]
fn decoder_with_instruction_prompt_trains() {
    let mut cfg = toy_config();
    cfg.backbone.kind = BackboneKind::Decoder;
    cfg.backbone.prompt = "p2".into();
    cfg.backbone.max_len = 192;
    cfg.max_epochs = 1;
    let data = toy_data(6);
    let mut model = toy_model(&cfg, &data);
    let p = model.backbone.prepare(&data.split.train[0]).unwrap();
    assert_eq!(p.readout, p.ids.len() - 1);
    let m = train(&mut model, &data, TrainOptions::default()).unwrap();
    assert_eq!(m.total_forwards, 3 * 32);
}
