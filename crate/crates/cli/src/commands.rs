//! Subcommand bodies.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use citss_core::augment::{kp_transform_seeded, sample_sc_seeded, OpMode};
use citss_core::client::TextGenerator;
use citss_core::config::TrainConfig;
use citss_core::corpus::{load_contexts, load_dataset_with, save_dataset, CitationContext, DatasetSplit, LoadOptions};
use citss_core::eval::{ifp_baseline, t_test, AblationSetting};
use citss_core::stk::{extract_stks, write_failure_report, ExtractOptions, StkBase, StkStats};
use citss_core::synonyms::SynonymBase;
use citss_core::synthetic::{generate, PlantedResponder, SynthSpec};
use citss_core::Label;
use citss_train::ablation::{ablation_suite, ReportSplit};
use citss_train::trainer::{evaluate, predict_proba, StepEvent, EPOCHS_CSV_HEADER};
use citss_train::{train, Model, TrainData, TrainOptions};
use serde_json::json;

use crate::http::ServiceClient;
use crate::rundir::{RunDir, CHECKPOINT_DIR};
use crate::{usage, Command, ConfigArgs, DataArgs, ReportSplitArg, SplitArg, Strategy};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::ExtractStk { config, data, out, planted } => extract_stk(&config, &data, &out, planted),
        Command::AugmentPreview {
            config,
            data,
            strategy,
            epoch,
            beta,
            gamma,
            op,
            split,
            limit,
            output,
        } => {
            let mut cfg = resolve_config(&config, &data)?;
            if let Some(b) = beta {
                cfg.beta = b;
            }
            if let Some(g) = gamma {
                cfg.gamma = g;
            }
            if let Some(op) = op {
                cfg.op_mode = OpMode::parse(&op).map_err(|e| usage(e.to_string()))?;
            }
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            augment_preview(&cfg, strategy, epoch, split, limit, output.as_deref())
        }
        Command::Train { config, data, out } => train_cmd(&resolve_config(&config, &data)?, &out),
        Command::Evaluate { checkpoint, data, split, out } => evaluate_cmd(&checkpoint, &data, split, &out),
        Command::Predict { checkpoint, data, out } => predict_cmd(&checkpoint, &data, &out),
        Command::Ablation { config, data, split, out } => ablation_cmd(&resolve_config(&config, &data)?, split, &out),
        Command::IfpBaseline { config, data, split, out } => ifp_cmd(&resolve_config(&config, &data)?, split, &out),
        Command::SynthCorpus { out, train_pool, test, seed } => synth_corpus(&out, train_pool, test, seed),
    }
}

/// File or preset, then `--set`, trailing overrides, `--seed`, and the data
/// path flags, in that order.
pub fn resolve_config(args: &ConfigArgs, data: &DataArgs) -> Result<TrainConfig> {
    let path = Path::new(&args.config);
    let base = if path.is_file() {
        TrainConfig::load(path).map_err(|e| usage(e.to_string()))?
    } else if let Some(p) = TrainConfig::preset(&args.config) {
        p
    } else {
        return Err(usage(format!(
            "config {:?} is neither a file nor a preset ({})",
            args.config,
            TrainConfig::preset_names().join(", ")
        )));
    };
    let mut overrides: Vec<String> = args.set.iter().chain(&args.overrides).cloned().collect();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut cfg = base.with_overrides(&overrides).map_err(|e| usage(e.to_string()))?;
    if let Some(p) = &data.corpus {
        cfg.data.corpus = Some(p.display().to_string());
    }
    if let Some(p) = &data.stk {
        cfg.data.stk_base = Some(p.display().to_string());
    }
    Ok(cfg)
}

fn load_split(cfg: &TrainConfig) -> Result<DatasetSplit> {
    let path = cfg
        .data
        .corpus
        .as_deref()
        .ok_or_else(|| usage("no corpus given; pass --corpus or set data.corpus"))?;
    let opts = LoadOptions {
        max_range: cfg.context_range,
        validation_fraction: cfg.validation_fraction,
        split_seed: cfg.seed,
        reserve_missing_validation: true,
    };
    let split = load_dataset_with(path, cfg.dataset, &opts)?;
    let (tr, va, te) = split.sizes();
    log::info!("{path}: {tr} train / {va} validation / {te} test");
    Ok(split)
}

fn load_train_data(cfg: &TrainConfig) -> Result<TrainData> {
    let split = load_split(cfg)?;
    let stk = match cfg.data.stk_base.as_deref() {
        Some(p) => {
            let mut base = StkBase::load(p)?;
            base.restrict_to_training(&split);
            base
        }
        None => {
            log::warn!("no keyphrase base given; KP positives use synonym substitution only");
            StkBase::default()
        }
    };
    let synonyms = match cfg.data.synonyms.as_deref() {
        Some(p) => SynonymBase::load(p, cfg.data.stopwords.as_deref().map(Path::new))?,
        None => SynonymBase::builtin(),
    };
    Ok(TrainData { split, stk, synonyms })
}

fn select(split: &DatasetSplit, which: SplitArg) -> Vec<CitationContext> {
    match which {
        SplitArg::Train => split.train.clone(),
        SplitArg::Validation => split.validation.clone(),
        SplitArg::Test => split.test.clone(),
        SplitArg::All => split.iter_named().map(|(_, c)| c.clone()).collect(),
    }
}

fn nonempty(contexts: Vec<CitationContext>, which: SplitArg) -> Result<Vec<CitationContext>> {
    if contexts.is_empty() {
        return Err(usage(format!("the corpus has no {which:?} records; choose another --split").to_lowercase()));
    }
    Ok(contexts)
}

fn extract_stk(args: &ConfigArgs, data: &DataArgs, out: &Path, planted: bool) -> Result<()> {
    let cfg = resolve_config(args, data)?;
    let split = load_split(&cfg)?;
    let run = RunDir::create(out, &cfg.snapshot(), &cfg.short_hash())?;
    let opts = ExtractOptions {
        retries: cfg.service.retries,
        cache_dir: Some(cfg.service.cache_dir.clone().into()),
        max_in_flight: cfg.service.max_in_flight,
    };
    let client: Box<dyn TextGenerator> = if planted {
        Box::new(PlantedResponder::default())
    } else {
        Box::new(ServiceClient::from_config(&cfg.service))
    };
    let outcome = extract_stks(&split, client.as_ref(), &opts)?;
    log::info!(
        "{} mentions over {} samples; {} remote calls, {} cache hits, {} failures",
        outcome.base.total_mentions(),
        outcome.base.per_sample().len(),
        outcome.remote_calls,
        outcome.cache_hits,
        outcome.failures.len()
    );
    let base_path = run.file("stk_base.json");
    outcome.base.save(&base_path)?;
    write_failure_report(run.file("failures.jsonl"), &outcome.failures)?;
    run.write("stk_stats.json", serde_json::to_string_pretty(&StkStats::from_base(&outcome.base))?)?;
    println!("{}", base_path.display());
    Ok(())
}

fn augment_preview(
    cfg: &TrainConfig,
    strategy: Strategy,
    epoch: usize,
    which: SplitArg,
    limit: Option<usize>,
    output: Option<&Path>,
) -> Result<()> {
    let data = load_train_data(cfg)?;
    let contexts = nonempty(select(&data.split, which), which)?;
    let mut w: Box<dyn Write> = match output {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for ctx in contexts.iter().take(limit.unwrap_or(usize::MAX)) {
        let t = match strategy {
            Strategy::Sc => sample_sc_seeded(ctx, epoch, cfg.seed),
            Strategy::Kp => kp_transform_seeded(
                ctx,
                cfg.op_mode,
                cfg.beta,
                cfg.gamma,
                &data.stk,
                &data.synonyms,
                epoch,
                cfg.seed,
            )?,
        };
        writeln!(w, "{}", serde_json::to_string(&t)?)?;
    }
    w.flush()?;
    Ok(())
}

fn step_logger(e: &StepEvent) {
    log::debug!(
        "epoch {} step {}: op {} l_cls {:.4} l_sc {:.4} l_kp {:.4} total {:.4}",
        e.epoch,
        e.step,
        e.op,
        e.l_cls,
        e.l_sc,
        e.l_kp,
        e.l_total
    );
}

fn train_cmd(cfg: &TrainConfig, out: &Path) -> Result<()> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let data = load_train_data(cfg)?;
    let run = RunDir::create(out, &cfg.snapshot(), &cfg.short_hash())?;
    let mut model = Model::from_corpus(cfg, &data.split.train, &data.stk, &data.synonyms)?;
    log::info!("{} trainable parameters", model.trainable_count());
    let mut observer = step_logger;
    let metrics = train(
        &mut model,
        &data,
        TrainOptions {
            observer: Some(&mut observer),
            skip_test: false,
        },
    )?;
    model.save(&run.file(CHECKPOINT_DIR))?;
    metrics.save(&run.path)?;
    println!("best epoch {} (validation)\n{}", metrics.best_epoch, metrics.best_val.to_table());
    if let Some(test) = &metrics.test {
        println!("\ntest\n{}", test.to_table());
    }
    println!("\n{}", run.path.display());
    Ok(())
}

fn load_model(checkpoint: &Path) -> Result<Model> {
    Model::load(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))
}

fn evaluate_cmd(checkpoint: &Path, data: &Path, which: SplitArg, out: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let cfg = &model.config;
    let opts = LoadOptions {
        max_range: cfg.context_range,
        reserve_missing_validation: false,
        ..LoadOptions::default()
    };
    let split = load_dataset_with(data, cfg.dataset, &opts)?;
    let contexts = nonempty(select(&split, which), which)?;
    let run = RunDir::create(out, &cfg.snapshot(), &cfg.short_hash())?;
    let report = evaluate(&model, &contexts)?;
    run.write("metrics.json", serde_json::to_string_pretty(&report)?)?;
    let table = report.to_table();
    run.write("report.txt", format!("{table}\n"))?;
    println!("{table}\n\n{}", run.path.display());
    Ok(())
}

fn predict_cmd(checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let cfg = &model.config;
    let contexts: Vec<CitationContext> = load_contexts(data, cfg.dataset)?;
    let run = RunDir::create(out, &cfg.snapshot(), &cfg.short_hash())?;
    let probs = predict_proba(&model, &contexts)?;
    let mut lines = String::new();
    for (ctx, p) in contexts.iter().zip(&probs) {
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        let by_label: serde_json::Map<String, serde_json::Value> =
            Label::ALL.iter().zip(p).map(|(l, v)| (l.name().to_string(), json!(v))).collect();
        let row = json!({
            "id": ctx.sample_id,
            "label": Label::from_index(best).expect("six classes").name(),
            "probabilities": by_label,
        });
        let _ = writeln!(lines, "{row}");
    }
    let path = run.write("predictions.jsonl", lines)?;
    log::info!("{} predictions", contexts.len());
    println!("{}", path.display());
    Ok(())
}

fn ablation_cmd(cfg: &TrainConfig, split: ReportSplitArg, out: &Path) -> Result<()> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let data = load_train_data(cfg)?;
    let run = RunDir::create(out, &cfg.snapshot(), &cfg.short_hash())?;
    let split = match split {
        ReportSplitArg::Validation => ReportSplit::Validation,
        ReportSplitArg::Test => ReportSplit::Test,
    };
    let outcome = ablation_suite(cfg, &data, split, |setting, seed, m| {
        let r = m.test.as_ref().unwrap_or(&m.best_val);
        log::info!(
            "{} seed {seed}: Macro-F1 {:.4}, accuracy {:.4} (best epoch {})",
            setting.name(),
            r.macro_f1,
            r.accuracy,
            m.best_epoch
        );
    })?;
    run.write("ablation.csv", outcome.table.to_csv())?;
    run.write("metrics.json", serde_json::to_string_pretty(&outcome)?)?;

    let mut csv = format!("setting,seed,{EPOCHS_CSV_HEADER}\n");
    for r in &outcome.runs {
        for line in r.metrics.epochs_csv().lines().skip(1) {
            let _ = writeln!(csv, "{},{},{line}", r.setting.name(), r.seed);
        }
    }
    run.write("epochs.csv", csv)?;

    let report_of = |r: &citss_train::ablation::AblationRun| match split {
        ReportSplit::Validation => r.metrics.best_val.clone(),
        ReportSplit::Test => r.metrics.test.clone().unwrap_or_else(|| r.metrics.best_val.clone()),
    };
    let values = |s: AblationSetting, f: fn(&citss_core::eval::MetricReport) -> f64| -> Vec<f64> {
        outcome.runs.iter().filter(|r| r.setting == s).map(|r| f(&report_of(r))).collect()
    };
    let mut tests = serde_json::Map::new();
    if cfg.run_count >= 2 {
        for s in AblationSetting::ALL.into_iter().filter(|&s| s != AblationSetting::NoContrast) {
            let p_f1 = t_test(&values(s, |r| r.macro_f1), &values(AblationSetting::NoContrast, |r| r.macro_f1))?;
            let p_acc = t_test(&values(s, |r| r.accuracy), &values(AblationSetting::NoContrast, |r| r.accuracy))?;
            tests.insert(s.name().to_string(), json!({"macro_f1_p": p_f1, "accuracy_p": p_acc}));
        }
    }
    run.write(
        "significance.json",
        serde_json::to_string_pretty(&json!({
            "test": "two-sided Welch t-test over per-run metrics against the no-contrast setting",
            "runs_per_setting": cfg.run_count,
            "p_values": tests,
        }))?,
    )?;
    println!("{}\n\n{}", outcome.table, run.path.display());
    Ok(())
}

fn ifp_cmd(cfg: &TrainConfig, which: SplitArg, out: &Path) -> Result<()> {
    let split = load_split(cfg)?;
    let contexts = nonempty(select(&split, which), which)?;
    let run = RunDir::create(out, &cfg.snapshot(), &cfg.short_hash())?;
    let client = ServiceClient::from_config(&cfg.service);
    let outcome = ifp_baseline(&contexts, &client)?;
    if outcome.failures > 0 {
        log::warn!("{} of {} requests failed; scored as wrong", outcome.failures, contexts.len());
    }
    let mut lines = String::new();
    for (ctx, p) in contexts.iter().zip(&outcome.predictions) {
        let _ = writeln!(lines, "{}", json!({"id": ctx.sample_id, "label": p.map(Label::name)}));
    }
    run.write("predictions.jsonl", lines)?;
    run.write("metrics.json", serde_json::to_string_pretty(&outcome.report)?)?;
    println!(
        "{}\nservice failures {}\n\n{}",
        outcome.report.to_table(),
        outcome.failures,
        run.path.display()
    );
    Ok(())
}

fn synth_corpus(out: &Path, train_pool: usize, test: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let corpus = generate(&SynthSpec::small(train_pool, test), seed)?;
    let cp = out.join("corpus.jsonl");
    save_dataset(&corpus.split, &cp)?;
    let sp = out.join("stk_base.json");
    corpus.stk.save(&sp)?;
    let (tr, va, te) = corpus.split.sizes();
    log::info!("{tr} train / {va} validation / {te} test, {} planted mentions", corpus.stk.total_mentions());
    println!("{}\n{}", cp.display(), sp.display());
    Ok(())
}
