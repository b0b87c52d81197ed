//! Training loop, evaluation, cross-database evaluation and the
//! representation-size sweep.

use std::fmt::Write as _;

use thiserror::Error;

use crate::datamodel::{DatasetBundle, FeatureRecord, NUM_CLASSES};
use crate::metrics::{accuracy, confusion, macro_f1, mean_class_recall, ConfusionMatrix, MetricsReport};
use crate::model::{
    av_regressor_backprop, backprop, init_params, predict, AvSource, Linear, ModelConfig, ModelError, ModelParams,
    Variant,
};
use crate::numerics::SeededRng;
use crate::objective::{LogBase, LossWeights, ObjectiveError};
use crate::optim::{adam_init, adam_step, AdamConfig, AdamState, OptimError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("incompatible data: {0}")]
    Incompatible(String),
    #[error("{split} set: {count} records lack arousal-valence values required by variant {variant}")]
    MissingAv {
        split: &'static str,
        count: usize,
        variant: Variant,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("optimizer: {0}")]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once this many epochs pass after the best evaluation without a
    /// strictly better weighted F1.
    pub patience: usize,
    /// Evaluate every `eval_every` epochs and after the last one.
    pub eval_every: usize,
    /// Drives batch order, dropout masks and the AV regressor fit.
    pub seed: u64,
    pub av_regressor_epochs: usize,
    pub av_regressor_lr: f64,
    pub log_base: LogBase,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            seed: model.seed,
            model,
            adam: AdamConfig::default(),
            batch_size: 64,
            max_epochs: 200,
            patience: 30,
            eval_every: 1,
            av_regressor_epochs: 200,
            av_regressor_lr: 1e-2,
            log_base: LogBase::Natural,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(TrainError::InvalidConfig("eval cadence must be >= 1".into()));
        }
        if !(self.av_regressor_lr > 0.0) {
            return Err(TrainError::InvalidConfig("AV regressor lr must be > 0".into()));
        }
        Ok(())
    }
}

/// One completed epoch. Evaluation fields are `None` on epochs that were not
/// evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub domain_f1: Option<Vec<f64>>,
    pub domain_accuracy: Option<Vec<Option<f64>>>,
    pub weighted_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub n_domains: usize,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn best_weighted_f1(&self) -> Option<f64> {
        self.epochs
            .iter()
            .filter_map(|e| e.weighted_f1)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    /// `epoch,loss,f1_dom0,...,f1_weighted`; empty cells on epochs without
    /// evaluation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss");
        for j in 0..self.n_domains {
            let _ = write!(out, ",f1_dom{j}");
        }
        out.push_str(",f1_weighted\n");
        for e in &self.epochs {
            let _ = write!(out, "{},{}", e.epoch, e.loss);
            for j in 0..self.n_domains {
                out.push(',');
                if let Some(f) = &e.domain_f1 {
                    let _ = write!(out, "{}", f[j]);
                }
            }
            out.push(',');
            if let Some(w) = e.weighted_f1 {
                let _ = write!(out, "{w}");
            }
            out.push('\n');
        }
        out
    }
}

/// Scores of one classifier head on one domain's records.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainEval {
    pub domain_id: usize,
    pub name: String,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub macro_f1: f64,
    pub accuracy: Option<f64>,
    pub mean_class_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub domains: Vec<DomainEval>,
    pub weighted_f1: f64,
}

impl EvalReport {
    pub fn reports(&self) -> Vec<MetricsReport> {
        let mut out: Vec<MetricsReport> = self
            .domains
            .iter()
            .map(|d| MetricsReport::from_confusion(d.name.clone(), &d.confusion))
            .collect();
        let mut all = ConfusionMatrix::new(NUM_CLASSES);
        for d in &self.domains {
            all.merge(&d.confusion).expect("same class count");
        }
        let mut pooled = MetricsReport::from_confusion("all", &all);
        pooled.macro_f1 = self.weighted_f1;
        out.push(pooled);
        out
    }
}

/// `Σⱼ (nⱼ / n) · F1ⱼ`; zero when there are no records.
pub fn weighted_f1(per_domain: &[(usize, f64)]) -> f64 {
    let total: usize = per_domain.iter().map(|(n, _)| n).sum();
    if total == 0 {
        return 0.0;
    }
    per_domain.iter().map(|&(n, f)| n as f64 / total as f64 * f).sum()
}

/// Confusion matrix of head `head` on the records of domain `domain`.
pub fn head_confusion(
    params: &ModelParams,
    cfg: &ModelConfig,
    bundle: &DatasetBundle,
    head: usize,
    domain: usize,
) -> Result<ConfusionMatrix, ModelError> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for r in bundle.domain_records(domain) {
        preds.push(predict(params, cfg, r, head)?.index());
        labels.push(r.label.index());
    }
    Ok(confusion(&preds, &labels, NUM_CLASSES).expect("valid class indices"))
}

/// Each domain scored with its own head.
pub fn evaluate(params: &ModelParams, cfg: &ModelConfig, bundle: &DatasetBundle) -> Result<EvalReport, ModelError> {
    let mut domains = Vec::with_capacity(bundle.n_domains());
    for meta in bundle.domains() {
        let j = meta.domain_id;
        let cm = head_confusion(params, cfg, bundle, j, j)?;
        domains.push(DomainEval {
            domain_id: j,
            name: meta.name.clone(),
            n: meta.n_total as usize,
            macro_f1: macro_f1(&cm),
            accuracy: accuracy(&cm).ok(),
            mean_class_recall: mean_class_recall(&cm).ok(),
            confusion: cm,
        });
    }
    let weighted = weighted_f1(&domains.iter().map(|d| (d.n, d.macro_f1)).collect::<Vec<_>>());
    Ok(EvalReport {
        domains,
        weighted_f1: weighted,
    })
}

/// Macro F1 of every head on every domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossEval {
    pub names: Vec<String>,
    /// `f1[head][domain]`.
    pub f1: Vec<Vec<f64>>,
}

impl CrossEval {
    /// Rows are heads, columns are evaluated domains.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("head");
        for n in &self.names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.f1) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn cross_evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    bundle: &DatasetBundle,
) -> Result<CrossEval, ModelError> {
    let n = bundle.n_domains();
    if params.heads.len() < n {
        return Err(ModelError::UnknownDomain {
            domain: n - 1,
            n_domains: params.heads.len(),
        });
    }
    let mut f1 = vec![vec![0.0; n]; n];
    for (head, row) in f1.iter_mut().enumerate() {
        for (domain, cell) in row.iter_mut().enumerate() {
            *cell = macro_f1(&head_confusion(params, cfg, bundle, head, domain)?);
        }
    }
    Ok(CrossEval {
        names: bundle.domain_names(),
        f1,
    })
}

/// A single global shuffle of record indices cut into contiguous batches;
/// the last batch may be short.
pub fn make_batches(bundle: &DatasetBundle, batch_size: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    make_index_batches(bundle.len(), batch_size, rng)
}

pub(crate) fn make_index_batches(n: usize, batch_size: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

fn check_compatible(train: &DatasetBundle, test: &DatasetBundle, cfg: &TrainConfig) -> Result<(), TrainError> {
    let m = &cfg.model;
    if train.is_empty() {
        return Err(TrainError::Incompatible("training set is empty".into()));
    }
    for (name, b) in [("train", train), ("test", test)] {
        if b.dim() != m.dim {
            return Err(TrainError::Incompatible(format!(
                "{name} set has feature dimension {}, model expects {}",
                b.dim(),
                m.dim
            )));
        }
        if b.n_domains() != m.n_domains {
            return Err(TrainError::Incompatible(format!(
                "{name} set has {} domains, model has {} heads",
                b.n_domains(),
                m.n_domains
            )));
        }
    }
    if train.domain_names() != test.domain_names() {
        return Err(TrainError::Incompatible("train and test domain names differ".into()));
    }
    if m.uses_av() {
        let missing = train.missing_av();
        if missing > 0 {
            return Err(TrainError::MissingAv {
                split: "train",
                count: missing,
                variant: m.variant,
            });
        }
        let missing = test.missing_av();
        if m.av_source == AvSource::GroundTruth && missing > 0 {
            return Err(TrainError::MissingAv {
                split: "test",
                count: missing,
                variant: m.variant,
            });
        }
    }
    Ok(())
}

/// Fits the clipped linear AV regressor by Adam on squared error. Returns
/// the final full-set MSE.
pub fn fit_av_regressor(
    head: &mut Linear,
    bundle: &DatasetBundle,
    epochs: usize,
    batch_size: usize,
    adam: AdamConfig,
    rng: &mut SeededRng,
) -> Result<f64, TrainError> {
    let records: Vec<&FeatureRecord> = bundle.records().iter().collect();
    if records.is_empty() {
        return Err(TrainError::Incompatible("no records to fit the AV regressor".into()));
    }
    let mut state = adam_init(head, adam)?;
    for _ in 0..epochs {
        for batch in make_index_batches(records.len(), batch_size, rng) {
            let refs: Vec<&FeatureRecord> = batch.iter().map(|&i| records[i]).collect();
            let (_, grad) = av_regressor_backprop(head, &refs)?;
            adam_step(&mut state, head, &grad)?;
        }
    }
    Ok(av_regressor_backprop(head, &records)?.0)
}

/// Output of a full training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    /// Parameters of the best evaluated epoch.
    pub params: ModelParams,
    pub history: TrainHistory,
    /// Optimizer state captured together with `params`.
    pub adam: Option<AdamState>,
}

pub fn train(
    train_bundle: &DatasetBundle,
    test_bundle: &DatasetBundle,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    let r = train_full(train_bundle, test_bundle, cfg)?;
    Ok((r.params, r.history))
}

pub fn train_full(
    train_bundle: &DatasetBundle,
    test_bundle: &DatasetBundle,
    cfg: &TrainConfig,
) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    check_compatible(train_bundle, test_bundle, cfg)?;
    let weights = LossWeights::from_bundle(train_bundle, cfg.log_base)?;
    let mut params = init_params(&cfg.model)?;
    let mut history = TrainHistory {
        n_domains: cfg.model.n_domains,
        ..Default::default()
    };
    if cfg.max_epochs == 0 {
        return Ok(TrainResult {
            params,
            history,
            adam: None,
        });
    }
    let mut rng = SeededRng::new(cfg.seed);
    if let Some(head) = params.av_head.as_mut() {
        let adam = AdamConfig {
            lr: cfg.av_regressor_lr,
            ..cfg.adam
        };
        fit_av_regressor(
            head,
            train_bundle,
            cfg.av_regressor_epochs,
            cfg.batch_size,
            adam,
            &mut rng,
        )?;
    }
    let mut adam = adam_init(&params, cfg.adam)?;
    let records = train_bundle.records();
    let mut best: Option<(f64, usize, ModelParams, AdamState)> = None;

    for epoch in 1..=cfg.max_epochs {
        let mut epoch_loss = 0.0;
        for (b, batch) in make_index_batches(records.len(), cfg.batch_size, &mut rng)
            .into_iter()
            .enumerate()
        {
            let refs: Vec<&FeatureRecord> = batch.iter().map(|&i| &records[i]).collect();
            let (loss, grads) = backprop(&params, &cfg.model, &refs, &weights, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            adam_step(&mut adam, &mut params, &grads)?;
            epoch_loss += loss * refs.len() as f64;
        }
        let mut stats = EpochStats {
            epoch,
            loss: epoch_loss / records.len() as f64,
            domain_f1: None,
            domain_accuracy: None,
            weighted_f1: None,
        };
        let evaluate_now = epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs;
        let mut stop = false;
        if evaluate_now {
            let report = evaluate(&params, &cfg.model, test_bundle)?;
            stats.domain_f1 = Some(report.domains.iter().map(|d| d.macro_f1).collect());
            stats.domain_accuracy = Some(report.domains.iter().map(|d| d.accuracy).collect());
            stats.weighted_f1 = Some(report.weighted_f1);
            if best.as_ref().is_none_or(|(f, ..)| report.weighted_f1 > *f) {
                best = Some((report.weighted_f1, epoch, params.clone(), adam.clone()));
            }
            let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
            stop = epoch - best_epoch > cfg.patience;
        }
        history.epochs.push(stats);
        if stop {
            break;
        }
    }
    let (_, best_epoch, best_params, best_adam) = best.expect("last epoch is always evaluated");
    history.best_epoch = Some(best_epoch);
    Ok(TrainResult {
        params: best_params,
        history,
        adam: Some(best_adam),
    })
}

/// One row of a representation-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variant: Variant,
    pub k: usize,
    /// Weighted multi-domain F1 of each run.
    pub run_f1: Vec<f64>,
}

impl SweepRow {
    pub fn mean_f1(&self) -> f64 {
        self.run_f1.iter().sum::<f64>() / self.run_f1.len() as f64
    }

    /// Population standard deviation over runs.
    pub fn std_f1(&self) -> f64 {
        let m = self.mean_f1();
        (self.run_f1.iter().map(|f| (f - m).powi(2)).sum::<f64>() / self.run_f1.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// `variant,k,runs,mean_f1,std_f1`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,k,runs,mean_f1,std_f1\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.variant,
                r.k,
                r.run_f1.len(),
                r.mean_f1(),
                r.std_f1()
            );
        }
        out
    }

    /// Successive differences of mean F1 along the rows.
    pub fn gains(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].mean_f1() - w[0].mean_f1()).collect()
    }
}

/// Trains one model per `(k, run)`. Run `r` uses `seed + r` for both the
/// initialization and the training stream, so every `k` sees the same seeds.
/// Up to `jobs` runs execute concurrently; results do not depend on `jobs`.
pub fn sweep_representation_size(
    ks: &[usize],
    variant: Variant,
    train_bundle: &DatasetBundle,
    test_bundle: &DatasetBundle,
    cfg: &TrainConfig,
    runs: usize,
    jobs: usize,
) -> Result<SweepTable, TrainError> {
    if ks.is_empty() || runs == 0 {
        return Err(TrainError::InvalidConfig(
            "sweep needs at least one k and one run".into(),
        ));
    }
    let tasks: Vec<(usize, usize)> = ks.iter().flat_map(|&k| (0..runs).map(move |r| (k, r))).collect();
    let run_one = |&(k, run): &(usize, usize)| -> Result<f64, TrainError> {
        let mut c = cfg.clone();
        c.model.variant = variant;
        c.model.k = k;
        c.model.seed = cfg.model.seed.wrapping_add(run as u64);
        c.seed = cfg.seed.wrapping_add(run as u64);
        let (_, hist) = train(train_bundle, test_bundle, &c)?;
        Ok(hist.best_weighted_f1().unwrap_or(0.0))
    };
    let jobs = jobs.max(1);
    let mut results: Vec<Option<Result<f64, TrainError>>> = (0..tasks.len()).map(|_| None).collect();
    if jobs == 1 {
        for (slot, t) in results.iter_mut().zip(&tasks) {
            *slot = Some(run_one(t));
        }
    } else {
        let chunk = tasks.len().div_ceil(jobs);
        std::thread::scope(|s| {
            for (slots, ts) in results.chunks_mut(chunk).zip(tasks.chunks(chunk)) {
                let run_one = &run_one;
                s.spawn(move || {
                    for (slot, t) in slots.iter_mut().zip(ts) {
                        *slot = Some(run_one(t));
                    }
                });
            }
        });
    }
    let mut it = results.into_iter().map(|r| r.expect("every task ran"));
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let run_f1 = (0..runs).map(|_| it.next().unwrap()).collect::<Result<Vec<_>, _>>()?;
        rows.push(SweepRow { variant, k, run_f1 });
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{synth_generate, SynthConfig};

    #[test]
    fn batch_sizes_and_coverage() {
        let mut rng = SeededRng::new(1);
        let batches = make_index_batches(10, 4, &mut rng);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(make_index_batches(10, 4, &mut SeededRng::new(1)), batches);
    }

    #[test]
    fn weighted_f1_by_hand() {
        // 30 samples at 0.6 and 10 at 0.2 -> 0.75*0.6 + 0.25*0.2 = 0.5
        assert!((weighted_f1(&[(30, 0.6), (10, 0.2)]) - 0.5).abs() < 1e-15);
        assert_eq!(weighted_f1(&[]), 0.0);
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (tr, te) = synth_generate(&SynthConfig {
            dim: 8,
            train_counts: vec![20, 20, 20],
            test_counts: vec![5, 5, 5],
            ..Default::default()
        })
        .unwrap();
        let mut cfg = TrainConfig::new(ModelConfig::new(Variant::Cake, 2, 8, 3));
        cfg.max_epochs = 0;
        let (p, h) = train(&tr, &te, &cfg).unwrap();
        assert_eq!(p, init_params(&cfg.model).unwrap());
        assert!(h.epochs.is_empty());
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            n_domains: 2,
            epochs: vec![
                EpochStats {
                    epoch: 1,
                    loss: 0.5,
                    domain_f1: None,
                    domain_accuracy: None,
                    weighted_f1: None,
                },
                EpochStats {
                    epoch: 2,
                    loss: 0.25,
                    domain_f1: Some(vec![0.5, 1.0]),
                    domain_accuracy: None,
                    weighted_f1: Some(0.75),
                },
            ],
            best_epoch: Some(2),
        };
        assert_eq!(
            h.to_csv(),
            "epoch,loss,f1_dom0,f1_dom1,f1_weighted\n1,0.5,,,\n2,0.25,0.5,1,0.75\n"
        );
    }
}
