//! Multi-domain weighted softmax cross-entropy, its class and dataset weight
//! formulas, and the squared-error loss of the AV regressor.
//!
//! For a batch of `N` samples where sample `i` belongs to domain `j(i)`:
//!
//! ```text
//! loss = 1/N Σᵢ w_class[j][yᵢ] · w_dataset[j] · CE(softmax(zᵢ), yᵢ)
//! w_class[j][c]  = N_total[j] / (N_class[j][c] · nbclass)
//! w_dataset[j]   = 1 / log(N_total[j])
//! ```
//!
//! Each sample contributes only through the head of its own domain; the
//! zero weight that other heads would receive is realized by routing.

use thiserror::Error;

use crate::datamodel::{DatasetBundle, DomainMeta, NUM_CLASSES};
use crate::numerics::{log_sum_exp, softmax_stable, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("domain {domain}: N_total = {n_total} is too small for a dataset weight (need >= 2)")]
    InvalidDomain { domain: usize, n_total: u64 },
    #[error("domain {domain}: N_total is 0, class weights undefined")]
    EmptyDomain { domain: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("domain {0} has no loss weights")]
    UnknownDomain(usize),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch arrays differ in length: {0}")]
    LengthMismatch(String),
    #[error("invalid logarithm base {0}")]
    InvalidLogBase(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Base of the logarithm inside the dataset weight. Natural log by default.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Base(f64),
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Base(b) => x.ln() / b.ln(),
        }
    }
}

/// Class weights of one domain plus the classes whose count was zero.
///
/// Zero-count classes get weight 0 rather than infinity; they are listed in
/// `zero_count_classes` so callers can warn.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    pub zero_count_classes: Vec<usize>,
}

impl ClassWeights {
    pub fn has_warning(&self) -> bool {
        !self.zero_count_classes.is_empty()
    }
}

pub fn class_weights(meta: &DomainMeta, nbclass: usize) -> Result<ClassWeights, ObjectiveError> {
    class_weights_from_counts(meta.domain_id, &meta.class_counts[..nbclass.min(NUM_CLASSES)], nbclass)
}

/// Class weights from raw counts; `counts.len()` classes, `nbclass` in the
/// denominator.
pub fn class_weights_from_counts(
    domain: usize,
    counts: &[u64],
    nbclass: usize,
) -> Result<ClassWeights, ObjectiveError> {
    let n_total: u64 = counts.iter().sum();
    if n_total == 0 {
        return Err(ObjectiveError::EmptyDomain { domain });
    }
    let mut zero = Vec::new();
    let weights = counts
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            if n == 0 {
                zero.push(c);
                0.0
            } else {
                n_total as f64 / (n as f64 * nbclass as f64)
            }
        })
        .collect();
    Ok(ClassWeights {
        weights,
        zero_count_classes: zero,
    })
}

/// `1 / log(N_total)`; the caller supplies `N_total` directly.
pub fn dataset_weight(n_total: f64, base: LogBase) -> Result<f64, ObjectiveError> {
    if let LogBase::Base(b) = base {
        if !(b > 0.0) || b == 1.0 || !b.is_finite() {
            return Err(ObjectiveError::InvalidLogBase(b));
        }
    }
    if !(n_total > 1.0) {
        return Err(ObjectiveError::InvalidDomain {
            domain: 0,
            n_total: n_total.max(0.0) as u64,
        });
    }
    Ok(1.0 / base.log(n_total))
}

pub fn dataset_weights(metas: &[DomainMeta], base: LogBase) -> Result<Vec<f64>, ObjectiveError> {
    metas
        .iter()
        .map(|m| {
            if m.n_total <= 1 {
                return Err(ObjectiveError::InvalidDomain {
                    domain: m.domain_id,
                    n_total: m.n_total,
                });
            }
            dataset_weight(m.n_total as f64, base)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub w_class: Vec<Vec<f64>>,
    pub w_dataset: Vec<f64>,
    /// `(domain, class)` pairs that had no training samples.
    pub zero_count_classes: Vec<(usize, usize)>,
}

impl LossWeights {
    /// All weights 1; reduces the loss to plain mean cross-entropy.
    pub fn uniform(n_domains: usize, n_classes: usize) -> Self {
        Self {
            w_class: vec![vec![1.0; n_classes]; n_domains],
            w_dataset: vec![1.0; n_domains],
            zero_count_classes: Vec::new(),
        }
    }

    /// Weights computed once from the training-set counts.
    pub fn from_metas(metas: &[DomainMeta], nbclass: usize, base: LogBase) -> Result<Self, ObjectiveError> {
        let w_dataset = dataset_weights(metas, base)?;
        let mut w_class = Vec::with_capacity(metas.len());
        let mut zero = Vec::new();
        for m in metas {
            let cw = class_weights(m, nbclass)?;
            zero.extend(cw.zero_count_classes.iter().map(|&c| (m.domain_id, c)));
            w_class.push(cw.weights);
        }
        Ok(Self {
            w_class,
            w_dataset,
            zero_count_classes: zero,
        })
    }

    pub fn from_bundle(bundle: &DatasetBundle, base: LogBase) -> Result<Self, ObjectiveError> {
        Self::from_metas(bundle.domains(), NUM_CLASSES, base)
    }

    pub fn n_domains(&self) -> usize {
        self.w_dataset.len()
    }

    /// Combined per-sample scale `w_class · w_dataset`.
    pub fn sample_weight(&self, domain: usize, label: usize) -> Result<f64, ObjectiveError> {
        let row = self.w_class.get(domain).ok_or(ObjectiveError::UnknownDomain(domain))?;
        let wc = row.get(label).ok_or(ObjectiveError::LabelOutOfRange {
            label,
            n_classes: row.len(),
        })?;
        Ok(wc * self.w_dataset[domain])
    }
}

/// Softmax cross-entropy of one sample: `log Σ exp(z) − z_y`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<f64, ObjectiveError> {
    if label >= logits.len() {
        return Err(ObjectiveError::LabelOutOfRange {
            label,
            n_classes: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::InvalidInput("non-finite logit".into()).into());
    }
    Ok(log_sum_exp(logits) - logits[label])
}

/// Loss value and `∂loss/∂logits` for every sample.
pub fn multidomain_loss(
    logits: &[Vec<f64>],
    labels: &[usize],
    domain_ids: &[usize],
    weights: &LossWeights,
) -> Result<(f64, Vec<Vec<f64>>), ObjectiveError> {
    if logits.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    if logits.len() != labels.len() || logits.len() != domain_ids.len() {
        return Err(ObjectiveError::LengthMismatch(format!(
            "{} logits, {} labels, {} domain ids",
            logits.len(),
            labels.len(),
            domain_ids.len()
        )));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for ((z, &y), &j) in logits.iter().zip(labels).zip(domain_ids) {
        let (l, g) = weighted_sample_loss(z, y, j, weights, n)?;
        loss += l;
        grads.push(g);
    }
    Ok((loss, grads))
}

/// One sample's share of the batch loss (already divided by `batch_len`) and
/// its logit gradient `s · (softmax(z) − onehot(y))`.
pub(crate) fn weighted_sample_loss(
    logits: &[f64],
    label: usize,
    domain: usize,
    weights: &LossWeights,
    batch_len: f64,
) -> Result<(f64, Vec<f64>), ObjectiveError> {
    let s = weights.sample_weight(domain, label)? / batch_len;
    let ce = softmax_cross_entropy(logits, label)?;
    let mut g = softmax_stable(logits)?;
    g[label] -= 1.0;
    for v in &mut g {
        *v *= s;
    }
    Ok((s * ce, g))
}

/// Mean squared error over the two coordinates and its gradient `pred − target`.
pub fn mse_loss(pred: [f64; 2], target: [f64; 2]) -> (f64, [f64; 2]) {
    let d = [pred[0] - target[0], pred[1] - target[1]];
    ((d[0] * d[0] + d[1] * d[1]) / 2.0, d)
}
