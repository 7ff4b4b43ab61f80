//! Classification metrics, multi-run aggregation, Welch's t-test, the
//! ablation table, and the instruction-following prompting baseline.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::client::TextGenerator;
use crate::corpus::CitationContext;
use crate::error::{Error, Result};
use crate::label::Label;

const IFP_TEMPLATE: &str = include_str!("../prompts/ifp.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub n_samples: usize,
    /// Predictions that could not be mapped to a class; scored as wrong.
    #[serde(default)]
    pub invalid: usize,
}

impl MetricReport {
    pub fn from_predictions(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        let opt: Vec<Option<usize>> = preds.iter().copied().map(Some).collect();
        Self::from_optional(&opt, labels, classes)
    }

    /// `None` predictions count against the true class and against accuracy
    /// but belong to no class themselves.
    pub fn from_optional(
        preds: &[Option<usize>],
        labels: &[usize],
        classes: usize,
    ) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: preds.len(),
                right: labels.len(),
            });
        }
        if preds.is_empty() {
            return Err(Error::Empty("predictions"));
        }
        if let Some(bad) = labels
            .iter()
            .chain(preds.iter().flatten())
            .find(|&&c| c >= classes)
        {
            return Err(Error::Dimension(format!("class {bad} outside {classes} classes")));
        }
        let mut tp = vec![0usize; classes];
        let mut fp = vec![0usize; classes];
        let mut fn_ = vec![0usize; classes];
        let mut correct = 0;
        for (p, &y) in preds.iter().zip(labels) {
            match p {
                Some(p) if *p == y => {
                    tp[y] += 1;
                    correct += 1;
                }
                Some(p) => {
                    fp[*p] += 1;
                    fn_[y] += 1;
                }
                None => fn_[y] += 1,
            }
        }
        let per_class_f1: Vec<f64> = (0..classes)
            .map(|c| {
                let denom = 2 * tp[c] + fp[c] + fn_[c];
                if denom == 0 {
                    0.0
                } else {
                    2.0 * tp[c] as f64 / denom as f64
                }
            })
            .collect();
        Ok(MetricReport {
            macro_f1: per_class_f1.iter().sum::<f64>() / classes as f64,
            accuracy: correct as f64 / preds.len() as f64,
            per_class_f1,
            n_samples: preds.len(),
            invalid: preds.iter().filter(|p| p.is_none()).count(),
        })
    }

    /// The model-selection score: Macro-F1 + Accuracy.
    pub fn selection_score(&self) -> f64 {
        self.macro_f1 + self.accuracy
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:>8}", "class", "F1");
        for (label, f1) in Label::ALL.iter().zip(&self.per_class_f1) {
            let _ = writeln!(s, "{:<18} {:>8.4}", label.name(), f1);
        }
        let _ = writeln!(s, "{:<18} {:>8.4}", "Macro-F1", self.macro_f1);
        let _ = writeln!(s, "{:<18} {:>8.4}", "Accuracy", self.accuracy);
        let _ = write!(s, "{:<18} {:>8}", "samples", self.n_samples);
        if self.invalid > 0 {
            let _ = write!(s, "\n{:<18} {:>8}", "invalid", self.invalid);
        }
        s
    }
}

/// Unweighted mean of per-class F1 over all `classes`; a class absent from
/// both predictions and labels contributes zero.
pub fn macro_f1(preds: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    Ok(MetricReport::from_predictions(preds, labels, classes)?.macro_f1)
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Two-sided Welch (unequal-variance) t-test p-value.
pub fn t_test(runs_a: &[f64], runs_b: &[f64]) -> Result<f64> {
    if runs_a.len() < 2 || runs_b.len() < 2 {
        return Err(Error::Invalid("t-test needs at least two runs per side".into()));
    }
    let (ma, mb) = (mean(runs_a), mean(runs_b));
    let (va, vb) = (
        sample_variance(runs_a) / runs_a.len() as f64,
        sample_variance(runs_b) / runs_b.len() as f64,
    );
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (va * va / (runs_a.len() - 1) as f64 + vb * vb / (runs_b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

/// Mean and population standard deviation over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("run values"));
        }
        let m = mean(values);
        let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
        Ok(Stat {
            mean: m,
            std: var.sqrt(),
        })
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub macro_f1: Stat,
    pub accuracy: Stat,
    pub run_count: usize,
    pub macro_f1_runs: Vec<f64>,
    pub accuracy_runs: Vec<f64>,
}

impl RunAggregate {
    pub fn from_reports(reports: &[MetricReport]) -> Result<Self> {
        let macro_f1_runs: Vec<f64> = reports.iter().map(|r| r.macro_f1).collect();
        let accuracy_runs: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
        Ok(RunAggregate {
            macro_f1: Stat::from_values(&macro_f1_runs)?,
            accuracy: Stat::from_values(&accuracy_runs)?,
            run_count: reports.len(),
            macro_f1_runs,
            accuracy_runs,
        })
    }
}

/// Average relative improvement (in percent) of Macro-F1 and Accuracy over a
/// baseline.
pub fn improvement_pct(macro_f1: f64, accuracy: f64, base_macro_f1: f64, base_accuracy: f64) -> f64 {
    50.0 * ((macro_f1 / base_macro_f1 - 1.0) + (accuracy / base_accuracy - 1.0))
}

/// The four contrastive-loss settings compared in an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationSetting {
    Full,
    NoSc,
    NoKp,
    NoContrast,
}

impl AblationSetting {
    pub const ALL: [AblationSetting; 4] = [
        AblationSetting::Full,
        AblationSetting::NoSc,
        AblationSetting::NoKp,
        AblationSetting::NoContrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationSetting::Full => "SC+KP",
            AblationSetting::NoSc => "λ1=0",
            AblationSetting::NoKp => "λ2=0",
            AblationSetting::NoContrast => "λ1,λ2=0",
        }
    }

    /// Loss weights `(lambda1, lambda2)` for this setting.
    pub fn lambdas(self, lambda1: f64, lambda2: f64) -> (f64, f64) {
        match self {
            AblationSetting::Full => (lambda1, lambda2),
            AblationSetting::NoSc => (0.0, lambda2),
            AblationSetting::NoKp => (lambda1, 0.0),
            AblationSetting::NoContrast => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub aggregate: RunAggregate,
    /// Relative to the no-contrast row; `None` when that row is absent.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn from_aggregates(aggregates: BTreeMap<AblationSetting, RunAggregate>) -> Self {
        let base = aggregates
            .get(&AblationSetting::NoContrast)
            .map(|a| (a.macro_f1.mean, a.accuracy.mean));
        let rows = aggregates
            .into_iter()
            .map(|(setting, aggregate)| AblationRow {
                setting,
                improvement_pct: base.map(|(bm, ba)| {
                    improvement_pct(aggregate.macro_f1.mean, aggregate.accuracy.mean, bm, ba)
                }),
                aggregate,
            })
            .collect();
        AblationTable { rows }
    }

    pub fn row(&self, setting: AblationSetting) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "setting,macro_f1_mean,macro_f1_std,accuracy_mean,accuracy_std,imp_pct,runs\n",
        );
        for r in &self.rows {
            let a = &r.aggregate;
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{},{}",
                r.setting.name(),
                a.macro_f1.mean,
                a.macro_f1.std,
                a.accuracy.mean,
                a.accuracy.std,
                r.improvement_pct.map_or(String::new(), |v| format!("{v:.2}")),
                a.run_count
            );
        }
        s
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>16} {:>16} {:>8}", "setting", "Macro-F1", "Accuracy", "Imp.(%)")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>16} {:>16} {:>8}",
                r.setting.name(),
                r.aggregate.macro_f1.to_string(),
                r.aggregate.accuracy.to_string(),
                r.improvement_pct.map_or("-".into(), |v| format!("{v:.1}"))
            )?;
        }
        if self.rows.iter().any(|r| r.aggregate.run_count < 5) {
            write!(f, "note: few runs per setting; t-tests on these runs have low power")?;
        }
        Ok(())
    }
}

pub fn build_ifp_prompt(context: &CitationContext) -> String {
    IFP_TEMPLATE.trim_end().replace("{T}", &context.text())
}

/// The label named in the first `[...]` of a reply, if it maps to a class.
pub fn parse_ifp_reply(reply: &str) -> Option<Label> {
    let start = reply.find('[')?;
    let end = start + reply[start..].find(']')?;
    Label::parse(reply[start + 1..end].trim()).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfpOutcome {
    pub report: MetricReport,
    pub predictions: Vec<Option<Label>>,
    /// Replies without a mappable bracketed label.
    pub invalid: usize,
    /// Service errors.
    pub failures: usize,
}

/// Training-free baseline: prompt the service per labeled sample and score
/// the bracketed answer.
pub fn ifp_baseline(contexts: &[CitationContext], client: &dyn TextGenerator) -> Result<IfpOutcome> {
    let labels: Vec<usize> = contexts
        .iter()
        .map(|c| {
            c.label
                .map(Label::index)
                .ok_or_else(|| Error::InvalidCorpus(format!("{} has no label", c.sample_id)))
        })
        .collect::<Result<_>>()?;
    let mut predictions = Vec::with_capacity(contexts.len());
    let (mut invalid, mut failures) = (0, 0);
    for ctx in contexts {
        match client.generate(&build_ifp_prompt(ctx)) {
            Ok(reply) => {
                let p = parse_ifp_reply(&reply);
                if p.is_none() {
                    invalid += 1;
                }
                predictions.push(p);
            }
            Err(e) => {
                log::warn!("{}: {e}", ctx.sample_id);
                failures += 1;
                predictions.push(None);
            }
        }
    }
    let idx: Vec<Option<usize>> = predictions.iter().map(|p| p.map(Label::index)).collect();
    Ok(IfpOutcome {
        report: MetricReport::from_optional(&idx, &labels, Label::COUNT)?,
        predictions,
        invalid,
        failures,
    })
}
