//! Train/test splitting, confusion matrices, the ICBHI micro scores and the
//! macro (class-averaged) scores.
//!
//! Class 0 is the normal/healthy class for every task. Scores with a zero
//! denominator are undefined and reported as such rather than as 0.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("class {0} has no items to split")]
    EmptyClass(usize),
    #[error("need at least 2 items to split, got {0}")]
    TooFewItems(usize),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("{preds} predictions but {truths} truths")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("zero denominator: {0}")]
    ZeroDenominator(String),
    #[error("task expects {expected} classes, confusion matrix has {found}")]
    ClassCountMismatch { expected: usize, found: usize },
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("malformed confusion matrix CSV")]
    MalformedCsv,
}

/// The four classification problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    /// normal vs crackles-or-wheezes
    Anomaly2,
    /// normal, crackles, wheezes, both
    Anomaly4,
    /// healthy vs unhealthy
    Patho2,
    /// healthy, chronic, non-chronic
    Patho3,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Anomaly2, Task::Anomaly4, Task::Patho2, Task::Patho3];

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Task::Anomaly2 => &["normal", "abnormal"],
            Task::Anomaly4 => &["normal", "crackles", "wheezes", "both"],
            Task::Patho2 => &["healthy", "unhealthy"],
            Task::Patho3 => &["healthy", "chronic", "non-chronic"],
        }
    }

    pub fn n_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn is_pathology(self) -> bool {
        matches!(self, Task::Patho2 | Task::Patho3)
    }

    /// Class index by name (case-insensitive) or by decimal index.
    pub fn parse_label(self, s: &str) -> Option<usize> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return (i < self.n_classes()).then_some(i);
        }
        self.class_names().iter().position(|n| n.eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Anomaly2 => "anomaly2",
            Task::Anomaly4 => "anomaly4",
            Task::Patho2 => "patho2",
            Task::Patho3 => "patho3",
        })
    }
}

impl FromStr for Task {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| MetricsError::UnknownTask(s.to_string()))
    }
}

fn check_ratio(ratio: f64) -> Result<(), MetricsError> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidRatio(ratio))
    }
}

/// Seeded train/test split of item indices. Stratified splits put
/// `round(ratio * n_c)` items of every class into train. Both index lists
/// are returned sorted.
pub fn split(
    labels: &[usize],
    n_classes: usize,
    ratio: f64,
    seed: u64,
    stratify: bool,
) -> Result<(Vec<usize>, Vec<usize>), MetricsError> {
    check_ratio(ratio)?;
    if labels.len() < 2 {
        return Err(MetricsError::TooFewItems(labels.len()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(MetricsError::LabelOutOfRange { label, n_classes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let pools: Vec<Vec<usize>> = if stratify {
        (0..n_classes).map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect()).collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    for (c, mut pool) in pools.into_iter().enumerate() {
        if pool.is_empty() {
            return Err(MetricsError::EmptyClass(c));
        }
        pool.shuffle(&mut rng);
        let k = (ratio * pool.len() as f64).round() as usize;
        train.extend_from_slice(&pool[..k]);
        test.extend_from_slice(&pool[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Seeded split where all items sharing a group id (e.g. a patient) land on
/// the same side. Groups are taken in shuffled order while that brings the
/// train size closer to `ratio * n`.
pub fn split_grouped(groups: &[u32], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), MetricsError> {
    check_ratio(ratio)?;
    let mut by_group: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    if by_group.len() < 2 {
        return Err(MetricsError::TooFewItems(by_group.len()));
    }
    let mut order: Vec<Vec<usize>> = by_group.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = ratio * groups.len() as f64;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let last = order.len() - 1;
    for (k, members) in order.into_iter().enumerate() {
        let before = (train.len() as f64 - target).abs();
        let after = ((train.len() + members.len()) as f64 - target).abs();
        // Keep both sides non-empty.
        let take = (train.is_empty() || after < before) && !(k == last && test.is_empty());
        if take {
            train.extend(members);
        } else {
            test.extend(members);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// `counts[true][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: &[&str]) -> Self {
        let n = class_names.len();
        Self { counts: vec![vec![0; n]; n], class_names: class_names.iter().map(|s| s.to_string()).collect() }
    }

    pub fn for_task(task: Task) -> Self {
        Self::new(task.class_names())
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<(), MetricsError> {
        let n_classes = self.n_classes();
        for label in [truth, pred] {
            if label >= n_classes {
                return Err(MetricsError::LabelOutOfRange { label, n_classes });
            }
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    /// N_c
    pub fn row_total(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_total(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    /// C_c
    pub fn correct(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Count-wise sum.
    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix, MetricsError> {
        if other.n_classes() != self.n_classes() {
            return Err(MetricsError::ClassCountMismatch { expected: self.n_classes(), found: other.n_classes() });
        }
        let mut out = self.clone();
        for (r, o) in out.counts.iter_mut().zip(&other.counts) {
            r.iter_mut().zip(o).for_each(|(a, b)| *a += b);
        }
        Ok(out)
    }

    /// Relabels class `c` as `mapping[c]` on both axes.
    pub fn remap(&self, mapping: &[usize], class_names: &[&str]) -> Result<ConfusionMatrix, MetricsError> {
        if mapping.len() != self.n_classes() {
            return Err(MetricsError::ClassCountMismatch { expected: self.n_classes(), found: mapping.len() });
        }
        let mut out = Self::new(class_names);
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                let (mt, mp) = (mapping[t], mapping[p]);
                if mt >= out.n_classes() || mp >= out.n_classes() {
                    return Err(MetricsError::LabelOutOfRange { label: mt.max(mp), n_classes: out.n_classes() });
                }
                out.counts[mt][mp] += n;
            }
        }
        Ok(out)
    }

    /// Four anomaly classes collapsed to normal vs abnormal.
    pub fn collapse_anomaly(&self) -> Result<ConfusionMatrix, MetricsError> {
        self.remap(&[0, 1, 1, 1], Task::Anomaly2.class_names())
    }

    /// Header `true\pred,<class names>`, then one row per true class with
    /// the class name first.
    pub fn to_csv(&self) -> String {
        let mut out = format!("true\\pred,{}\n", self.class_names.join(","));
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ConfusionMatrix, MetricsError> {
        let bad = || MetricsError::MalformedCsv;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(bad)?;
        let names: Vec<&str> = header.split(',').skip(1).collect();
        let mut cm = Self::new(&names);
        for (t, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').skip(1).collect();
            if t >= names.len() || cells.len() != names.len() {
                return Err(bad());
            }
            for (p, c) in cells.iter().enumerate() {
                cm.counts[t][p] = c.trim().parse().map_err(|_| bad())?;
            }
        }
        Ok(cm)
    }
}

/// Confusion matrix from parallel label lists.
pub fn confusion(preds: &[usize], truths: &[usize], n_classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), truths: truths.len() });
    }
    let names: Vec<String> = (0..n_classes).map(|c| format!("class{c}")).collect();
    let mut cm = ConfusionMatrix::new(&names.iter().map(String::as_str).collect::<Vec<_>>());
    for (&p, &t) in preds.iter().zip(truths) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

fn check_task(cm: &ConfusionMatrix, task: Task) -> Result<(), MetricsError> {
    if cm.n_classes() != task.n_classes() {
        return Err(MetricsError::ClassCountMismatch { expected: task.n_classes(), found: cm.n_classes() });
    }
    Ok(())
}

fn specificity(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    match cm.row_total(0) {
        0 => Err(MetricsError::ZeroDenominator("no normal instances".into())),
        n => Ok(cm.correct(0) as f64 / n as f64),
    }
}

fn sensitivity(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let n: u64 = (1..cm.n_classes()).map(|c| cm.row_total(c)).sum();
    let c: u64 = (1..cm.n_classes()).map(|c| cm.correct(c)).sum();
    match n {
        0 => Err(MetricsError::ZeroDenominator("no abnormal instances".into())),
        n => Ok(c as f64 / n as f64),
    }
}

/// ICBHI micro scores: (sensitivity, specificity, score).
pub fn icbhi_micro(cm: &ConfusionMatrix, task: Task) -> Result<(f64, f64, f64), MetricsError> {
    check_task(cm, task)?;
    let (sens, spec) = (sensitivity(cm)?, specificity(cm)?);
    Ok((sens, spec, (sens + spec) / 2.0))
}

/// Class-averaged scores. Recall and accuracy coincide per class (C_c/N_c).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
}

/// Precision per class; never-predicted classes get 0.
fn precisions(cm: &ConfusionMatrix) -> Vec<f64> {
    (0..cm.n_classes())
        .map(|c| match cm.col_total(c) {
            0 => {
                log::warn!("class {} is never predicted; precision set to 0", cm.class_names[c]);
                0.0
            }
            n => cm.correct(c) as f64 / n as f64,
        })
        .collect()
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn macro_scores(cm: &ConfusionMatrix) -> Result<MacroScores, MetricsError> {
    let recall = (0..cm.n_classes())
        .map(|c| match cm.row_total(c) {
            0 => Err(MetricsError::ZeroDenominator(format!("class {} has no instances", cm.class_names[c]))),
            n => Ok(cm.correct(c) as f64 / n as f64),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let precision = precisions(cm);
    let f1s: Vec<f64> = precision.iter().zip(&recall).map(|(&p, &r)| f1(p, r)).collect();
    Ok(MacroScores {
        accuracy: mean(&recall),
        precision: mean(&precision),
        recall: mean(&recall),
        f1: mean(&f1s),
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1s,
    })
}

/// Both groups of scores for one confusion matrix. `None` marks an
/// undefined value; `undefined` names those fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub class_names: Vec<String>,
    pub support: Vec<u64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub icbhi_score: Option<f64>,
    pub macro_accuracy: Option<f64>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub macro_f1: Option<f64>,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<Option<f64>>,
    pub undefined: Vec<String>,
}

pub fn report(cm: &ConfusionMatrix, task: Task) -> Result<MetricsReport, MetricsError> {
    check_task(cm, task)?;
    let n = cm.n_classes();
    let sens = sensitivity(cm).ok();
    let spec = specificity(cm).ok();
    let score = sens.zip(spec).map(|(a, b)| (a + b) / 2.0);
    let precision = precisions(cm);
    let recall: Vec<Option<f64>> = (0..n)
        .map(|c| match cm.row_total(c) {
            0 => None,
            t => Some(cm.correct(c) as f64 / t as f64),
        })
        .collect();
    let all_recall: Option<Vec<f64>> = recall.iter().copied().collect();
    let macro_recall = all_recall.as_deref().map(mean);
    let macro_f1 = all_recall.as_ref().map(|r| {
        let f: Vec<f64> = precision.iter().zip(r).map(|(&p, &r)| f1(p, r)).collect();
        mean(&f)
    });
    let mut rep = MetricsReport {
        task,
        class_names: cm.class_names.clone(),
        support: (0..n).map(|c| cm.row_total(c)).collect(),
        sensitivity: sens,
        specificity: spec,
        icbhi_score: score,
        macro_accuracy: macro_recall,
        macro_precision: Some(mean(&precision)),
        macro_recall,
        macro_f1,
        per_class_precision: precision,
        per_class_recall: recall,
        undefined: Vec::new(),
    };
    rep.undefined = rep.fields().into_iter().filter(|(_, v)| v.is_none()).map(|(k, _)| k.to_string()).collect();
    Ok(rep)
}

impl MetricsReport {
    /// Headline fields in table order.
    pub fn fields(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("icbhi_score", self.icbhi_score),
            ("macro_accuracy", self.macro_accuracy),
            ("macro_precision", self.macro_precision),
            ("macro_recall", self.macro_recall),
            ("macro_f1", self.macro_f1),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table, one row per labelled report.
    pub fn table(rows: &[(String, &MetricsReport)]) -> String {
        let heads = ["Spec", "Sens", "Score", "Acc", "Prec", "Rec", "F1"];
        let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<width$}", "Model");
        for h in heads {
            out.push_str(&format!(" {h:>6}"));
        }
        out.push('\n');
        for (label, r) in rows {
            out.push_str(&format!("{label:<width$}"));
            let vals = [
                r.specificity,
                r.sensitivity,
                r.icbhi_score,
                r.macro_accuracy,
                r.macro_precision,
                r.macro_recall,
                r.macro_f1,
            ];
            for v in vals {
                match v {
                    Some(x) => out.push_str(&format!(" {x:>6.3}")),
                    None => out.push_str(&format!(" {:>6}", "n/a")),
                }
            }
            out.push('\n');
        }
        out
    }
}
