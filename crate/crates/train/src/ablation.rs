//! Four-setting contrastive-loss ablation over several seeds.

use std::collections::BTreeMap;

use citss_core::config::TrainConfig;
use citss_core::eval::{AblationSetting, AblationTable, MetricReport, RunAggregate};
use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::trainer::{ensure_pretrained, train, RunMetrics, TrainData, TrainOptions};
use crate::Result;

/// Which split's best-checkpoint metrics feed the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportSplit {
    Validation,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRun {
    pub setting: AblationSetting,
    pub seed: u64,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub table: AblationTable,
    pub runs: Vec<AblationRun>,
    pub split: ReportSplit,
}

/// Runs every setting for seeds `config.seed .. config.seed + run_count`.
/// Within a seed all settings start from the same initialized (and, for
/// from-scratch backbones, pretrained) model.
pub fn ablation_suite(
    config: &TrainConfig,
    data: &TrainData,
    split: ReportSplit,
    mut progress: impl FnMut(AblationSetting, u64, &RunMetrics),
) -> Result<AblationOutcome> {
    let mut reports: BTreeMap<AblationSetting, Vec<MetricReport>> = BTreeMap::new();
    let mut runs = Vec::new();
    for k in 0..config.run_count as u64 {
        let mut seeded = config.clone();
        seeded.seed = config.seed + k;
        let mut base = Model::from_corpus(&seeded, &data.split.train, &data.stk, &data.synonyms)?;
        ensure_pretrained(&mut base, &data.split.train);
        for setting in AblationSetting::ALL {
            let mut model = base.clone();
            (model.config.lambda1, model.config.lambda2) = setting.lambdas(config.lambda1, config.lambda2);
            let metrics = train(
                &mut model,
                data,
                TrainOptions {
                    skip_test: split == ReportSplit::Validation,
                    ..TrainOptions::default()
                },
            )?;
            progress(setting, seeded.seed, &metrics);
            let report = match split {
                ReportSplit::Validation => metrics.best_val.clone(),
                ReportSplit::Test => metrics.test.clone().unwrap_or_else(|| metrics.best_val.clone()),
            };
            reports.entry(setting).or_default().push(report);
            runs.push(AblationRun {
                setting,
                seed: seeded.seed,
                metrics,
            });
        }
    }
    let aggregates = reports
        .into_iter()
        .map(|(s, r)| Ok((s, RunAggregate::from_reports(&r)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(AblationOutcome {
        table: AblationTable::from_aggregates(aggregates),
        runs,
        split,
    })
}
