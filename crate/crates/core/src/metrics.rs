//! Confusion matrices and the scores derived from them.

use std::fmt::Write as _;

use thiserror::Error;

use crate::datamodel::EmotionClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{preds} predictions but {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class index {index} out of range for {n_classes} classes")]
    ClassOutOfRange { index: usize, n_classes: usize },
    #[error("{0} is undefined on an empty confusion matrix")]
    Undefined(&'static str),
    #[error("cannot merge a {0}-class matrix with a {1}-class matrix")]
    ClassCountMismatch(usize, usize),
}

/// `n x n` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
    total: u64,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
            total: 0,
        }
    }

    /// From nested rows, e.g. `[[8, 2], [3, 7]]`.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MetricsError> {
        let n = rows.len();
        let mut cm = Self::new(n);
        for (y, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MetricsError::ClassCountMismatch(n, row.len()));
            }
            for (p, &c) in row.iter().enumerate() {
                cm.counts[y * n + p] = c;
                cm.total += c;
            }
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<(), MetricsError> {
        for index in [truth, pred] {
            if index >= self.n_classes {
                return Err(MetricsError::ClassOutOfRange {
                    index,
                    n_classes: self.n_classes,
                });
            }
        }
        self.counts[truth * self.n_classes + pred] += 1;
        self.total += 1;
        Ok(())
    }

    /// Cellwise sum.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if other.n_classes != self.n_classes {
            return Err(MetricsError::ClassCountMismatch(self.n_classes, other.n_classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    /// Row sum: `tp + fn`.
    pub fn support(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(c, p)).sum()
    }

    /// Column sum: `tp + fp`.
    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|y| self.get(y, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_classes).map(|r| r.to_vec()).collect()
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (&p, &y) in preds.iter().zip(labels) {
        cm.add(y, p)?;
    }
    Ok(cm)
}

/// Confusion matrix over the seven emotions.
pub fn emotion_confusion(preds: &[EmotionClass], labels: &[EmotionClass]) -> Result<ConfusionMatrix, MetricsError> {
    let p: Vec<usize> = preds.iter().map(|c| c.index()).collect();
    let y: Vec<usize> = labels.iter().map(|c| c.index()).collect();
    confusion(&p, &y, crate::datamodel::NUM_CLASSES)
}

/// Per-class F1. A class with `tp + fp = 0`, `tp + fn = 0` or
/// `prec + rec = 0` scores 0.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<f64> {
    (0..cm.n_classes)
        .map(|c| {
            let tp = cm.true_positives(c) as f64;
            let pred = cm.predicted(c);
            let sup = cm.support(c);
            if pred == 0 || sup == 0 {
                return 0.0;
            }
            let prec = tp / pred as f64;
            let rec = tp / sup as f64;
            if prec + rec == 0.0 {
                0.0
            } else {
                2.0 * prec * rec / (prec + rec)
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1 over all classes of the matrix.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    if cm.n_classes == 0 {
        return 0.0;
    }
    per_class_f1(cm).iter().sum::<f64>() / cm.n_classes as f64
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    if cm.total == 0 {
        return Err(MetricsError::Undefined("accuracy"));
    }
    let trace: u64 = (0..cm.n_classes).map(|c| cm.true_positives(c)).sum();
    Ok(trace as f64 / cm.total as f64)
}

/// How classes without any true samples enter [`mean_class_recall`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecallConvention {
    /// Average only over classes with support (the default).
    #[default]
    ExcludeUnsupported,
    /// Unsupported classes count as recall 0.
    IncludeAsZero,
}

pub fn mean_class_recall(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    mean_class_recall_with(cm, RecallConvention::default())
}

pub fn mean_class_recall_with(cm: &ConfusionMatrix, convention: RecallConvention) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    let mut supported = 0usize;
    for c in 0..cm.n_classes {
        let sup = cm.support(c);
        if sup > 0 {
            sum += cm.true_positives(c) as f64 / sup as f64;
            supported += 1;
        }
    }
    if supported == 0 {
        return Err(MetricsError::Undefined("mean class recall"));
    }
    let denom = match convention {
        RecallConvention::ExcludeUnsupported => supported,
        RecallConvention::IncludeAsZero => cm.n_classes,
    };
    Ok(sum / denom as f64)
}

/// Scores of one evaluated split.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub name: String,
    pub n: u64,
    pub macro_f1: f64,
    pub accuracy: Option<f64>,
    pub mean_class_recall: Option<f64>,
    pub per_class_f1: Vec<f64>,
}

impl MetricsReport {
    pub fn from_confusion(name: impl Into<String>, cm: &ConfusionMatrix) -> Self {
        Self {
            name: name.into(),
            n: cm.total(),
            macro_f1: macro_f1(cm),
            accuracy: accuracy(cm).ok(),
            mean_class_recall: mean_class_recall(cm).ok(),
            per_class_f1: per_class_f1(cm),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `name,n,macro_f1,accuracy,mean_class_recall,f1_<class>...`, floats in
/// shortest round-trip form; undefined scores are left empty.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("name,n,macro_f1,accuracy,mean_class_recall");
    for c in EmotionClass::ALL {
        let _ = write!(out, ",f1_{}", c.name());
    }
    out.push('\n');
    for r in reports {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            r.name,
            r.n,
            r.macro_f1,
            opt(r.accuracy),
            opt(r.mean_class_recall)
        );
        for f in &r.per_class_f1 {
            let _ = write!(out, ",{f}");
        }
        out.push('\n');
    }
    out
}

pub fn reports_to_text(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(
            out,
            "{:<12} n={:<6} macro-F1={:.4}  accuracy={}  mean-recall={}",
            r.name,
            r.n,
            r.macro_f1,
            r.accuracy.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into()),
            r.mean_class_recall
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "n/a".into()),
        );
    }
    out
}
