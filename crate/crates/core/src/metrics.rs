//! Confusion matrices and detection metrics.
//!
//! ACC is the macro average of one-vs-rest accuracy over all classes. PPV and
//! TPR collapse the classes to attack versus normal, with every class except
//! 0 counted as an attack by default; per-class and macro-averaged variants
//! are reported alongside.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{preds} predictions for {truth} labels")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("class id {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no sample was predicted positive")]
    NoPositivePredictions,
    #[error("no sample is truly positive")]
    NoPositiveTruth,
    #[error("positive class set is empty")]
    EmptyPositiveSet,
}

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

pub fn confusion(
    preds: &[usize],
    truth: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    let m = class_names.len();
    let mut counts = vec![vec![0u64; m]; m];
    for (&p, &t) in preds.iter().zip(truth) {
        if let Some(&class) = [p, t].iter().find(|&&c| c >= m) {
            return Err(MetricsError::ClassOutOfRange { class, classes: m });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: class_names.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneVsRest {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl OneVsRest {
    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn_).0
    }
}

/// `num / den`, or `(0, true)` when the denominator is zero.
fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Counts with class `class` as positive and every other class negative.
    pub fn one_vs_rest(&self, class: usize) -> OneVsRest {
        let total = self.total();
        let tp = self.counts[class][class];
        let row: u64 = self.counts[class].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[class]).sum();
        OneVsRest {
            tp,
            fp: col - tp,
            fn_: row - tp,
            tn: total + tp - row - col,
        }
    }

    /// Counts after collapsing to `positive` versus everything else.
    pub fn binary(&self, positive: &BTreeSet<usize>) -> OneVsRest {
        let mut out = OneVsRest {
            tp: 0,
            tn: 0,
            fp: 0,
            fn_: 0,
        };
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                match (positive.contains(&t), positive.contains(&p)) {
                    (true, true) => out.tp += n,
                    (false, false) => out.tn += n,
                    (false, true) => out.fp += n,
                    (true, false) => out.fn_ += n,
                }
            }
        }
        out
    }

    /// Every class except 0.
    pub fn attack_classes(&self) -> BTreeSet<usize> {
        (1..self.num_classes()).collect()
    }
}

/// Average over classes of one-vs-rest `(TP + TN) / (TP + TN + FP + FN)`.
pub fn acc_macro(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    if cm.total() == 0 || cm.num_classes() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let sum: f64 = (0..cm.num_classes()).map(|i| cm.one_vs_rest(i).accuracy()).sum();
    Ok(sum / cm.num_classes() as f64)
}

pub fn acc_standard(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / cm.total() as f64)
}

/// `TP / (TP + FP)` with `positive` as the positive class set.
pub fn ppv(cm: &ConfusionMatrix, positive: &BTreeSet<usize>) -> Result<f64, MetricsError> {
    if positive.is_empty() {
        return Err(MetricsError::EmptyPositiveSet);
    }
    let c = cm.binary(positive);
    match ratio(c.tp, c.tp + c.fp) {
        (_, true) => Err(MetricsError::NoPositivePredictions),
        (v, false) => Ok(v),
    }
}

/// `TP / (TP + FN)` with `positive` as the positive class set.
pub fn tpr(cm: &ConfusionMatrix, positive: &BTreeSet<usize>) -> Result<f64, MetricsError> {
    if positive.is_empty() {
        return Err(MetricsError::EmptyPositiveSet);
    }
    let c = cm.binary(positive);
    match ratio(c.tp, c.tp + c.fn_) {
        (_, true) => Err(MetricsError::NoPositiveTruth),
        (v, false) => Ok(v),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    #[serde(flatten)]
    pub counts: OneVsRest,
    pub acc: f64,
    pub ppv: f64,
    pub tpr: f64,
    pub ppv_undefined: bool,
    pub tpr_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub acc_macro: f64,
    pub acc_standard: f64,
    /// Attack-vs-normal precision; 0 with `ppv_undefined` set when nothing
    /// was predicted as an attack.
    pub ppv: f64,
    pub ppv_undefined: bool,
    pub tpr: f64,
    pub tpr_undefined: bool,
    /// Per-class precision and recall averaged over classes.
    pub ppv_macro: f64,
    pub tpr_macro: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self, MetricsError> {
        let acc_macro = acc_macro(&cm)?;
        let acc_standard = acc_standard(&cm)?;
        let attacks = cm.attack_classes();
        let (ppv, ppv_undefined) = undefined_as_zero(ppv(&cm, &attacks))?;
        let (tpr, tpr_undefined) = undefined_as_zero(tpr(&cm, &attacks))?;
        let per_class: Vec<ClassMetrics> = (0..cm.num_classes())
            .map(|i| {
                let counts = cm.one_vs_rest(i);
                let (ppv, ppv_undefined) = ratio(counts.tp, counts.tp + counts.fp);
                let (tpr, tpr_undefined) = ratio(counts.tp, counts.tp + counts.fn_);
                ClassMetrics {
                    name: cm.class_names[i].clone(),
                    counts,
                    acc: counts.accuracy(),
                    ppv,
                    tpr,
                    ppv_undefined,
                    tpr_undefined,
                }
            })
            .collect();
        let m = per_class.len() as f64;
        let ppv_macro = per_class.iter().map(|c| c.ppv).sum::<f64>() / m;
        let tpr_macro = per_class.iter().map(|c| c.tpr).sum::<f64>() / m;
        Ok(MetricsReport {
            samples: cm.total(),
            acc_macro,
            acc_standard,
            ppv,
            ppv_undefined,
            tpr,
            tpr_undefined,
            ppv_macro,
            tpr_macro,
            per_class,
            confusion: cm,
        })
    }

    /// Human-readable `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let flag = |undefined: bool| if undefined { " (undefined)" } else { "" };
        writeln!(out, "samples: {}", self.samples).ok();
        writeln!(out, "acc_macro: {:.6}", self.acc_macro).ok();
        writeln!(out, "acc_standard: {:.6}", self.acc_standard).ok();
        writeln!(out, "ppv: {:.6}{}", self.ppv, flag(self.ppv_undefined)).ok();
        writeln!(out, "tpr: {:.6}{}", self.tpr, flag(self.tpr_undefined)).ok();
        writeln!(out, "ppv_macro: {:.6}", self.ppv_macro).ok();
        writeln!(out, "tpr_macro: {:.6}", self.tpr_macro).ok();
        for c in &self.per_class {
            writeln!(
                out,
                "class.{}: tp={} tn={} fp={} fn={} acc={:.6} ppv={:.6}{} tpr={:.6}{}",
                c.name,
                c.counts.tp,
                c.counts.tn,
                c.counts.fp,
                c.counts.fn_,
                c.acc,
                c.ppv,
                flag(c.ppv_undefined),
                c.tpr,
                flag(c.tpr_undefined)
            )
            .ok();
        }
        out
    }
}

fn undefined_as_zero(r: Result<f64, MetricsError>) -> Result<(f64, bool), MetricsError> {
    match r {
        Ok(v) => Ok((v, false)),
        Err(MetricsError::NoPositivePredictions | MetricsError::NoPositiveTruth | MetricsError::EmptyPositiveSet) => {
            Ok((0.0, true))
        }
        Err(e) => Err(e),
    }
}
