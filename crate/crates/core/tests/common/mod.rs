#![allow(dead_code, clippy::needless_range_loop)]

use cake::datamodel::{synth_generate, Av, DatasetBundle, Split, SynthConfig};
use cake::model::{Linear, ModelConfig, ModelParams, TensorSet, Variant};
use cake::numerics::SeededRng;
use cake::objective::LossWeights;
use cake::{EmotionClass, FeatureRecord};

pub fn random_records(dim: usize, n_domains: usize, n: usize, rng: &mut SeededRng) -> Vec<FeatureRecord> {
    (0..n)
        .map(|i| FeatureRecord {
            id: format!("r{i}"),
            domain_id: rng.below(n_domains),
            features: (0..dim).map(|_| rng.normal()).collect(),
            label: EmotionClass::from_index(rng.below(7)).unwrap(),
            av: Some(Av::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))),
        })
        .collect()
}

pub fn random_weights(n_domains: usize, rng: &mut SeededRng) -> LossWeights {
    LossWeights {
        w_class: (0..n_domains)
            .map(|_| (0..7).map(|_| rng.uniform(0.2, 3.0)).collect())
            .collect(),
        w_dataset: (0..n_domains).map(|_| rng.uniform(0.05, 1.0)).collect(),
        zero_count_classes: Vec::new(),
    }
}

/// Redraws every tensor, the frozen AV head included, as N(0, 1/fan_in) so
/// logits stay O(1) for unit-variance inputs.
pub fn randomize(params: &mut ModelParams, rng: &mut SeededRng) {
    let mut all: Vec<&mut Linear> = Vec::new();
    all.extend(params.embed.as_mut());
    all.extend(params.av_head.as_mut());
    all.extend(params.heads.iter_mut());
    for l in all {
        let scale = 1.0 / (l.in_dim() as f64).sqrt();
        for v in l.w.as_mut_slice() {
            *v = rng.normal() * scale;
        }
        for v in &mut l.b {
            *v = rng.normal() * scale;
        }
    }
}

/// `W x + b` by explicit loops.
pub fn naive_linear(l: &Linear, x: &[f64]) -> Vec<f64> {
    (0..l.out_dim())
        .map(|r| {
            let mut s = l.b[r];
            for c in 0..l.in_dim() {
                s += l.w.get(r, c) * x[c];
            }
            s
        })
        .collect()
}

/// Embedding recomputed from scratch, ground-truth AV, no dropout.
pub fn naive_embedding(p: &ModelParams, cfg: &ModelConfig, r: &FeatureRecord) -> Vec<f64> {
    let av = r.av.map(|a| vec![a.arousal, a.valence]);
    match cfg.variant {
        Variant::Av => av.unwrap(),
        Variant::Cake => naive_linear(p.embed.as_ref().unwrap(), &r.features),
        Variant::CakeNorm => {
            let u = naive_linear(p.embed.as_ref().unwrap(), &r.features);
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter().map(|v| v / n).collect()
        }
        Variant::AvK => {
            let mut u = naive_linear(p.embed.as_ref().unwrap(), &r.features);
            u.extend(av.unwrap());
            u
        }
    }
}

/// Weighted loss recomputed from scratch: ln Σ exp(z) − z_y with plain sums.
pub fn naive_loss(
    p: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&FeatureRecord],
    w: &LossWeights,
    masks: Option<&[Vec<bool>]>,
) -> f64 {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for (i, r) in batch.iter().enumerate() {
        let mut rec = (*r).clone();
        if let Some(m) = masks {
            let scale = 1.0 / (1.0 - cfg.dropout_rate);
            for (x, &keep) in rec.features.iter_mut().zip(&m[i]) {
                *x = if keep { *x * scale } else { 0.0 };
            }
        }
        let e = naive_embedding(p, cfg, &rec);
        let z = naive_linear(&p.heads[r.domain_id], &e);
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = zmax + z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln();
        let y = r.label.index();
        total += w.w_class[r.domain_id][y] * w.w_dataset[r.domain_id] / n * (lse - z[y]);
    }
    total
}

/// Central differences of `f` over the trainable coordinates of `params`.
pub fn central_differences<F: FnMut(&ModelParams) -> f64>(params: &ModelParams, eps: f64, mut f: F) -> Vec<f64> {
    let flat = params.flatten();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(flat.len());
    let mut theta = flat.clone();
    for i in 0..flat.len() {
        theta[i] = flat[i] + eps;
        probe.assign_flat(&theta);
        let plus = f(&probe);
        theta[i] = flat[i] - eps;
        probe.assign_flat(&theta);
        let minus = f(&probe);
        theta[i] = flat[i];
        out.push((plus - minus) / (2.0 * eps));
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// A reduced benchmark, small enough for quick tests.
pub fn small_synth(dim: usize, seed: u64) -> (DatasetBundle, DatasetBundle) {
    synth_generate(&SynthConfig {
        dim,
        train_counts: vec![280, 80, 40],
        test_counts: vec![98, 28, 14],
        seed,
        ..Default::default()
    })
    .unwrap()
}

pub fn bundle_of(dim: usize, names: &[&str], records: Vec<FeatureRecord>) -> DatasetBundle {
    DatasetBundle::new(
        dim,
        names.iter().map(|s| s.to_string()).collect(),
        records,
        Split::Train,
    )
    .unwrap()
}
