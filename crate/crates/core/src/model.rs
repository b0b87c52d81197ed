//! Linear heads and their exact forward/backward passes.
//!
//! Every variant shares the same shape: an embedding `e` of dimension `d`
//! fed to one 7-way linear classifier per domain.
//!
//! | variant    | embedding                          | d     |
//! |------------|------------------------------------|-------|
//! | `Cake`     | `W x + b`                          | k     |
//! | `CakeNorm` | `(W x + b) / ‖W x + b‖`            | k     |
//! | `Av`       | `(arousal, valence)`               | 2     |
//! | `AvK`      | `concat(W x + b, arousal, valence)`| k + 2 |
//!
//! Arousal-valence either comes from the record (ground truth) or from a
//! frozen linear regressor on the features. Dropout, when enabled, acts on
//! the input features of the embedding head with inverted scaling.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::datamodel::{Av, EmotionClass, FeatureRecord, NUM_CLASSES};
use crate::numerics::{argmax, finite_diff_grad, norm2, rel_error, Mat64, SeededRng};
use crate::objective::{mse_loss, weighted_sample_loss, LossWeights, ObjectiveError};

/// Pre-normalization norms below this are rejected by `CakeNorm`.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("record {0:?} has no arousal-valence values but the model needs them")]
    MissingAv(String),
    #[error("the model has no arousal-valence regressor head")]
    NoAvHead,
    #[error("embedding norm {0:e} is below {NORM_EPS:e}; cannot project onto the unit sphere")]
    DegenerateNorm(f64),
    #[error("unknown domain {domain} (model has {n_domains} heads)")]
    UnknownDomain { domain: usize, n_domains: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Cake,
    Av,
    AvK,
    CakeNorm,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cake => "cake",
            Variant::Av => "av",
            Variant::AvK => "avk",
            Variant::CakeNorm => "cake-norm",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Cake => 0,
            Variant::Av => 1,
            Variant::AvK => 2,
            Variant::CakeNorm => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        [Variant::Cake, Variant::Av, Variant::AvK, Variant::CakeNorm]
            .get(c as usize)
            .copied()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cake" => Ok(Variant::Cake),
            "av" => Ok(Variant::Av),
            "avk" => Ok(Variant::AvK),
            "cake-norm" | "cake_norm" | "cakenorm" => Ok(Variant::CakeNorm),
            other => Err(format!("unknown variant {other:?} (cake | av | avk | cake-norm)")),
        }
    }
}

/// Where arousal-valence inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AvSource {
    /// The values stored on each record.
    GroundTruth,
    /// A linear regressor fit on the training set, then frozen.
    #[default]
    Regressed,
}

impl FromStr for AvSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ground-truth" | "ground_truth" | "gt" => Ok(AvSource::GroundTruth),
            "regressed" => Ok(AvSource::Regressed),
            other => Err(format!("unknown av source {other:?} (ground-truth | regressed)")),
        }
    }
}

impl fmt::Display for AvSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AvSource::GroundTruth => "ground-truth",
            AvSource::Regressed => "regressed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub k: usize,
    pub dim: usize,
    pub n_domains: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub av_source: AvSource,
}

impl ModelConfig {
    pub fn new(variant: Variant, k: usize, dim: usize, n_domains: usize) -> Self {
        Self {
            variant,
            k,
            dim,
            n_domains,
            dropout_rate: 0.5,
            seed: 0,
            av_source: AvSource::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        match self.variant {
            Variant::Av if self.k != 0 => return bad(format!("variant av requires k = 0, got {}", self.k)),
            Variant::Cake | Variant::CakeNorm | Variant::AvK if self.k == 0 => {
                return bad(format!("variant {} requires k >= 1", self.variant))
            }
            _ => {}
        }
        if self.dim == 0 {
            return bad("feature dimension must be >= 1".into());
        }
        if self.n_domains == 0 {
            return bad("need at least one domain head".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} not in [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Input dimension of the classifier heads.
    pub fn embed_dim(&self) -> usize {
        match self.variant {
            Variant::Cake | Variant::CakeNorm => self.k,
            Variant::Av => 2,
            Variant::AvK => self.k + 2,
        }
    }

    pub fn has_embed_head(&self) -> bool {
        self.variant != Variant::Av
    }

    pub fn uses_av(&self) -> bool {
        matches!(self.variant, Variant::Av | Variant::AvK)
    }

    pub fn has_av_head(&self) -> bool {
        self.uses_av() && self.av_source == AvSource::Regressed
    }
}

/// A linear map `W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Mat64,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            w: Mat64::zeros(out_dim, in_dim),
            b: vec![0.0; out_dim],
        }
    }

    /// Weights uniform in `±1/√in_dim`, zero bias.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut l = Self::zeros(out_dim, in_dim);
        for w in l.w.as_mut_slice() {
            *w = rng.uniform(-bound, bound);
        }
        l
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut y = self
            .w
            .matvec(x)
            .map_err(|e| ModelError::DimensionMismatch(e.to_string()))?;
        for (v, b) in y.iter_mut().zip(&self.b) {
            *v += b;
        }
        Ok(y)
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }
}

/// A collection of flat tensors that the optimizer can walk in a fixed order.
pub trait TensorSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites every value from `flat`, which must have `num_values()` entries.
    fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_values(), "flat parameter length");
        let mut off = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl TensorSet for Linear {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice(), &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), &mut self.b]
    }
}

impl TensorSet for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `k x D`, absent for `Av`.
    pub embed: Option<Linear>,
    /// `2 x D`, present when AV is regressed. Frozen during classification training.
    pub av_head: Option<Linear>,
    /// One `7 x d` head per domain.
    pub heads: Vec<Linear>,
}

/// Trainable tensors: embedding head, then each classifier head. The AV
/// regressor is not part of this set.
impl TensorSet for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(e) = &self.embed {
            out.extend(e.tensors());
        }
        for h in &self.heads {
            out.extend(h.tensors());
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.embed {
            out.extend(e.tensors_mut());
        }
        for h in &mut self.heads {
            out.extend(h.tensors_mut());
        }
        out
    }
}

/// `∂loss/∂θ` for every trainable tensor of [`ModelParams`], same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embed: Option<Linear>,
    pub heads: Vec<Linear>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            embed: params.embed.as_ref().map(|e| Linear::zeros(e.out_dim(), e.in_dim())),
            heads: params
                .heads
                .iter()
                .map(|h| Linear::zeros(h.out_dim(), h.in_dim()))
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.flatten())
    }
}

impl TensorSet for Gradients {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(e) = &self.embed {
            out.extend(e.tensors());
        }
        for h in &self.heads {
            out.extend(h.tensors());
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.embed {
            out.extend(e.tensors_mut());
        }
        for h in &mut self.heads {
            out.extend(h.tensors_mut());
        }
        out
    }
}

pub fn init_params(cfg: &ModelConfig) -> Result<ModelParams, ModelError> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let embed = cfg.has_embed_head().then(|| Linear::init(cfg.k, cfg.dim, &mut rng));
    let av_head = cfg.has_av_head().then(|| Linear::init(2, cfg.dim, &mut rng));
    let d = cfg.embed_dim();
    let heads = (0..cfg.n_domains)
        .map(|_| Linear::init(NUM_CLASSES, d, &mut rng))
        .collect();
    Ok(ModelParams { embed, av_head, heads })
}

/// Checks that `params` has the shapes `cfg` implies.
pub fn check_shapes(params: &ModelParams, cfg: &ModelConfig) -> Result<(), ModelError> {
    let mismatch = |m: String| Err(ModelError::DimensionMismatch(m));
    match (&params.embed, cfg.has_embed_head()) {
        (Some(e), true) if e.out_dim() == cfg.k && e.in_dim() == cfg.dim && e.b.len() == cfg.k => {}
        (None, false) => {}
        _ => return mismatch(format!("embedding head does not match k={} D={}", cfg.k, cfg.dim)),
    }
    match (&params.av_head, cfg.has_av_head()) {
        (Some(a), true) if a.out_dim() == 2 && a.in_dim() == cfg.dim && a.b.len() == 2 => {}
        (None, false) => {}
        _ => return mismatch("arousal-valence head does not match the config".into()),
    }
    if params.heads.len() != cfg.n_domains {
        return mismatch(format!("{} heads for {} domains", params.heads.len(), cfg.n_domains));
    }
    let d = cfg.embed_dim();
    for (j, h) in params.heads.iter().enumerate() {
        if h.out_dim() != NUM_CLASSES || h.in_dim() != d || h.b.len() != NUM_CLASSES {
            return mismatch(format!("head {j} is not {NUM_CLASSES}x{d}"));
        }
    }
    Ok(())
}

/// Linear AV regression clipped to `[-1, 1]` per coordinate.
pub fn av_regress(params: &ModelParams, features: &[f64]) -> Result<Av, ModelError> {
    let head = params.av_head.as_ref().ok_or(ModelError::NoAvHead)?;
    let raw = head.forward(features)?;
    Ok(Av::new(raw[0].clamp(-1.0, 1.0), raw[1].clamp(-1.0, 1.0)))
}

fn resolve_av(
    params: &ModelParams,
    cfg: &ModelConfig,
    features: &[f64],
    av: Option<Av>,
    id: &str,
) -> Result<Av, ModelError> {
    match cfg.av_source {
        AvSource::GroundTruth => av.ok_or_else(|| ModelError::MissingAv(id.to_string())),
        AvSource::Regressed => av_regress(params, features),
    }
}

/// Intermediate values of one forward pass, kept for backprop.
struct Forward {
    /// Input to the embedding head after dropout.
    input: Vec<f64>,
    /// Output of the embedding head before normalization.
    pre_norm: Vec<f64>,
    norm: f64,
    embedding: Vec<f64>,
}

fn forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    features: &[f64],
    av: Option<Av>,
    mask: Option<&[bool]>,
    id: &str,
) -> Result<Forward, ModelError> {
    if features.len() != cfg.dim {
        return Err(ModelError::DimensionMismatch(format!(
            "expected {} features, got {}",
            cfg.dim,
            features.len()
        )));
    }
    let av = if cfg.uses_av() {
        Some(resolve_av(params, cfg, features, av, id)?)
    } else {
        None
    };
    let Some(embed) = &params.embed else {
        let av = av.expect("av variant");
        return Ok(Forward {
            input: Vec::new(),
            pre_norm: Vec::new(),
            norm: 0.0,
            embedding: av.to_array().to_vec(),
        });
    };
    let input: Vec<f64> = match mask {
        Some(m) => {
            if m.len() != features.len() {
                return Err(ModelError::DimensionMismatch(format!(
                    "dropout mask has {} entries for {} features",
                    m.len(),
                    features.len()
                )));
            }
            let scale = 1.0 / (1.0 - cfg.dropout_rate);
            features
                .iter()
                .zip(m)
                .map(|(&x, &keep)| if keep { x * scale } else { 0.0 })
                .collect()
        }
        None => features.to_vec(),
    };
    let pre_norm = embed.forward(&input)?;
    let mut norm = 0.0;
    let mut embedding = pre_norm.clone();
    if cfg.variant == Variant::CakeNorm {
        norm = norm2(&pre_norm);
        if !(norm >= NORM_EPS) {
            return Err(ModelError::DegenerateNorm(norm));
        }
        for v in &mut embedding {
            *v /= norm;
        }
    }
    if let Some(av) = av {
        embedding.extend(av.to_array());
    }
    Ok(Forward {
        input,
        pre_norm,
        norm,
        embedding,
    })
}

/// The `d`-dimensional embedding of one sample.
pub fn embed(
    params: &ModelParams,
    cfg: &ModelConfig,
    features: &[f64],
    av: Option<Av>,
    dropout_mask: Option<&[bool]>,
) -> Result<Vec<f64>, ModelError> {
    Ok(forward(params, cfg, features, av, dropout_mask, "<input>")?.embedding)
}

/// Logits of head `domain_id` for an embedding.
pub fn classify(params: &ModelParams, embedding: &[f64], domain_id: usize) -> Result<Vec<f64>, ModelError> {
    let head = params.heads.get(domain_id).ok_or(ModelError::UnknownDomain {
        domain: domain_id,
        n_domains: params.heads.len(),
    })?;
    head.forward(embedding)
}

/// Class of an embedding under head `domain_id`; ties go to the lowest index.
pub fn predict_embedding(
    params: &ModelParams,
    embedding: &[f64],
    domain_id: usize,
) -> Result<EmotionClass, ModelError> {
    let logits = classify(params, embedding, domain_id)?;
    Ok(EmotionClass::from_index(argmax(&logits)).expect("7 logits"))
}

/// Inference (no dropout) with the head of `domain_id`.
pub fn predict(
    params: &ModelParams,
    cfg: &ModelConfig,
    record: &FeatureRecord,
    domain_id: usize,
) -> Result<EmotionClass, ModelError> {
    let f = forward(params, cfg, &record.features, record.av, None, &record.id)?;
    predict_embedding(params, &f.embedding, domain_id)
}

/// Draws one keep-mask per sample; `true` keeps the coordinate.
pub fn draw_dropout_masks(cfg: &ModelConfig, n: usize, rng: &mut SeededRng) -> Vec<Vec<bool>> {
    (0..n)
        .map(|_| (0..cfg.dim).map(|_| rng.next_f64() >= cfg.dropout_rate).collect())
        .collect()
}

fn check_batch(batch: &[&FeatureRecord], masks: Option<&[Vec<bool>]>) -> Result<(), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} dropout masks for {} samples",
                m.len(),
                batch.len()
            )));
        }
    }
    Ok(())
}

/// Weighted multi-domain loss of a batch, forward only.
pub fn batch_loss(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&FeatureRecord],
    weights: &LossWeights,
    masks: Option<&[Vec<bool>]>,
) -> Result<f64, ModelError> {
    check_batch(batch, masks)?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for (i, r) in batch.iter().enumerate() {
        let f = forward(params, cfg, &r.features, r.av, masks.map(|m| m[i].as_slice()), &r.id)?;
        let logits = classify(params, &f.embedding, r.domain_id)?;
        loss += weighted_sample_loss(&logits, r.label.index(), r.domain_id, weights, n)?.0;
    }
    Ok(loss)
}

/// Loss and exact gradients with the given dropout masks held fixed.
pub fn backprop_with_masks(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&FeatureRecord],
    weights: &LossWeights,
    masks: Option<&[Vec<bool>]>,
) -> Result<(f64, Gradients), ModelError> {
    check_batch(batch, masks)?;
    let n = batch.len() as f64;
    let k = cfg.k;
    let mut grads = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (i, r) in batch.iter().enumerate() {
        let f = forward(params, cfg, &r.features, r.av, masks.map(|m| m[i].as_slice()), &r.id)?;
        let j = r.domain_id;
        let logits = classify(params, &f.embedding, j)?;
        let (l, g_logits) = weighted_sample_loss(&logits, r.label.index(), j, weights, n)?;
        loss += l;

        let head = &params.heads[j];
        let g_head = &mut grads.heads[j];
        g_head.w.add_outer(&g_logits, &f.embedding, 1.0);
        for (gb, g) in g_head.b.iter_mut().zip(&g_logits) {
            *gb += g;
        }
        let Some(g_embed) = grads.embed.as_mut() else {
            continue;
        };
        let g_e = head.w.matvec_t(&g_logits).expect("head shape");
        // AV coordinates (the tail under AvK) are inputs, not parameters.
        let g_e = &g_e[..k];
        let g_u: Vec<f64> = if cfg.variant == Variant::CakeNorm {
            // d(u/‖u‖)/du = (I − ê êᵀ) / ‖u‖
            let e = &f.embedding[..k];
            let proj: f64 = e.iter().zip(g_e).map(|(a, b)| a * b).sum();
            g_e.iter().zip(e).map(|(g, ei)| (g - ei * proj) / f.norm).collect()
        } else {
            g_e.to_vec()
        };
        debug_assert_eq!(f.pre_norm.len(), k);
        g_embed.w.add_outer(&g_u, &f.input, 1.0);
        for (gb, g) in g_embed.b.iter_mut().zip(&g_u) {
            *gb += g;
        }
    }
    Ok((loss, grads))
}

/// Loss and gradients; draws fresh dropout masks from `rng` when the config
/// has a nonzero rate and an embedding head.
pub fn backprop(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&FeatureRecord],
    weights: &LossWeights,
    rng: Option<&mut SeededRng>,
) -> Result<(f64, Gradients), ModelError> {
    let masks = match rng {
        Some(rng) if cfg.dropout_rate > 0.0 && cfg.has_embed_head() => Some(draw_dropout_masks(cfg, batch.len(), rng)),
        _ => None,
    };
    backprop_with_masks(params, cfg, batch, weights, masks.as_deref())
}

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub n_coords: usize,
    pub max_rel_error: f64,
    /// Flat index (in [`TensorSet`] order) of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares [`backprop_with_masks`] against central differences of
/// [`batch_loss`] for every trainable coordinate, masks held fixed.
pub fn gradient_check(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&FeatureRecord],
    weights: &LossWeights,
    masks: Option<&[Vec<bool>]>,
    eps: f64,
) -> Result<GradCheck, ModelError> {
    let (_, grads) = backprop_with_masks(params, cfg, batch, weights, masks)?;
    let analytic = grads.flatten();
    let flat = params.flatten();
    let mut probe = params.clone();
    let mut failure = None;
    let numeric = finite_diff_grad(
        |theta| {
            probe.assign_flat(theta);
            match batch_loss(&probe, cfg, batch, weights, masks) {
                Ok(l) => l,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &flat,
        eps,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let numeric = numeric.map_err(|e| ModelError::InvalidConfig(format!("finite differences: {e}")))?;
    let mut out = GradCheck {
        n_coords: flat.len(),
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: numeric.first().copied().unwrap_or(0.0),
    };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let r = rel_error(a, n);
        if r > out.max_rel_error {
            out = GradCheck {
                max_rel_error: r,
                worst_index: i,
                analytic: a,
                numeric: n,
                ..out
            };
        }
    }
    Ok(out)
}

/// Mean squared error of the clipped AV regressor on a batch, and its
/// gradient w.r.t. the regressor head. Coordinates clipped at ±1 pass no
/// gradient.
pub fn av_regressor_backprop(head: &Linear, batch: &[&FeatureRecord]) -> Result<(f64, Linear), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grad = Linear::zeros(head.out_dim(), head.in_dim());
    let mut loss = 0.0;
    for r in batch {
        let target = r.av.ok_or_else(|| ModelError::MissingAv(r.id.clone()))?;
        let raw = head.forward(&r.features)?;
        let pred = [raw[0].clamp(-1.0, 1.0), raw[1].clamp(-1.0, 1.0)];
        let (l, g) = mse_loss(pred, target.to_array());
        loss += l / n;
        let g_raw: Vec<f64> = (0..2)
            .map(|c| if raw[c].abs() > 1.0 { 0.0 } else { g[c] / n })
            .collect();
        grad.w.add_outer(&g_raw, &r.features, 1.0);
        for (gb, g) in grad.b.iter_mut().zip(&g_raw) {
            *gb += g;
        }
    }
    Ok((loss, grad))
}
