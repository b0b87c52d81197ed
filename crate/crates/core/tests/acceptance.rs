//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use cake::cli::run_with;
use cake::datamodel::{synth_generate, SynthConfig};
use cake::metrics::{accuracy, macro_f1, mean_class_recall, ConfusionMatrix};
use cake::model::{
    backprop_with_masks, batch_loss, draw_dropout_masks, embed, init_params, predict, predict_embedding, AvSource,
    ModelConfig, TensorSet, Variant,
};
use cake::numerics::SeededRng;
use cake::objective::{
    class_weights_from_counts, dataset_weight, multidomain_loss, softmax_cross_entropy, LogBase, LossWeights,
};
use cake::trainer::{sweep_representation_size, train, TrainConfig};
use cake::vizmap::{encode_ppm, encode_svg, plan_grid, render_emotion_map, PALETTE};
use cake::{DatasetBundle, FeatureRecord};
use common::*;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_error(cfg: &ModelConfig, batch: usize, rng: &mut SeededRng) -> f64 {
    let mut params = init_params(cfg).unwrap();
    randomize(&mut params, rng);
    let records = random_records(cfg.dim, cfg.n_domains, batch, rng);
    let refs: Vec<&FeatureRecord> = records.iter().collect();
    let w = random_weights(cfg.n_domains, rng);
    let masks = (cfg.dropout_rate > 0.0).then(|| draw_dropout_masks(cfg, batch, rng));
    let (_, grads) = backprop_with_masks(&params, cfg, &refs, &w, masks.as_deref()).unwrap();
    let numeric = central_differences(&params, 1e-5, |p| {
        batch_loss(p, cfg, &refs, &w, masks.as_deref()).unwrap()
    });
    grads
        .flatten()
        .iter()
        .zip(&numeric)
        .map(|(&a, &b)| rel_err(a, b))
        .fold(0.0, f64::max)
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let variants = [
        (Variant::Cake, 2),
        (Variant::Cake, 3),
        (Variant::Av, 0),
        (Variant::AvK, 1),
        (Variant::CakeNorm, 3),
    ];
    let mut rng = SeededRng::new(2024);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (vi, &(variant, k)) in variants.iter().enumerate() {
        for (di, dim) in [8, 32].into_iter().enumerate() {
            for (bi, batch) in [1, 4, 16].into_iter().enumerate() {
                let cfg = ModelConfig {
                    dropout_rate: if (vi + di + bi) % 2 == 0 { 0.0 } else { 0.4 },
                    av_source: AvSource::GroundTruth,
                    ..ModelConfig::new(variant, k, dim, 3)
                };
                worst = worst.max(gradient_error(&cfg, batch, &mut rng));
                n += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        n >= 20 && worst <= 1e-4 && secs < 30.0,
        format!("{n} configurations, max rel error {worst:.2e} (<= 1e-4), {secs:.2} s (< 30 s)"),
    )
}

fn weight_formulas() -> Outcome {
    let mut rng = SeededRng::new(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let counts: Vec<u64> = (0..7).map(|_| 1 + rng.below(20_000) as u64).collect();
        let total: u64 = counts.iter().sum();
        let w = class_weights_from_counts(0, &counts, 7).map_err(|e| e.to_string())?;
        let mass: f64 = counts.iter().zip(&w.weights).map(|(&n, &w)| n as f64 * w).sum();
        worst = worst.max((mass - total as f64).abs());
    }
    // oracle: the reciprocal natural log, evaluated here independently
    let oracle = |n: f64| 1.0 / n.ln();
    let w871 = dataset_weight(871.0, LogBase::Natural).map_err(|e| e.to_string())?;
    let w283901 = dataset_weight(283_901.0, LogBase::Natural).map_err(|e| e.to_string())?;
    let d871 = (w871 - oracle(871.0)).abs();
    let d283901 = (w283901 - oracle(283_901.0)).abs();
    let lit283901 = (w283901 - 0.07964).abs();
    ensure(
        worst <= 1e-9 && d871 <= 1e-5 && d283901 <= 1e-5 && lit283901 <= 1e-5,
        format!(
            "mass error {worst:.1e} on 100 vectors; w(871) = {w871:.6} (1/ln 871 = {:.6}; the quoted 0.14775 is off by {:.1e}); \
             w(283901) = {w283901:.6} (quoted 0.07964)",
            oracle(871.0),
            (oracle(871.0) - 0.14775).abs(),
        ),
    )
}

fn loss_reductions() -> Outcome {
    let mut rng = SeededRng::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 1 + rng.below(20);
        let z: Vec<Vec<f64>> = (0..n).map(|_| (0..7).map(|_| 4.0 * rng.normal()).collect()).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.below(7)).collect();
        let (loss, _) =
            multidomain_loss(&z, &y, &vec![0; n], &LossWeights::uniform(1, 7)).map_err(|e| e.to_string())?;
        let mean = z
            .iter()
            .zip(&y)
            .map(|(z, &y)| softmax_cross_entropy(z, y).unwrap())
            .sum::<f64>()
            / n as f64;
        worst = worst.max((loss - mean).abs());
    }
    let (uniform, _) =
        multidomain_loss(&[vec![0.0; 7]], &[4], &[0], &LossWeights::uniform(1, 7)).map_err(|e| e.to_string())?;
    let du = (uniform - 7f64.ln()).abs();
    ensure(
        worst <= 1e-12 && du <= 1e-12,
        format!("mean-CE deviation {worst:.1e}; uniform logits {uniform:.15} vs ln 7 (diff {du:.1e})"),
    )
}

fn cross_head_isolation() -> Outcome {
    let mut rng = SeededRng::new(5);
    let mut nonzero = 0;
    for trial in 0..50 {
        let variant = [Variant::Cake, Variant::Av, Variant::AvK, Variant::CakeNorm][trial % 4];
        let k = if variant == Variant::Av { 0 } else { 1 + trial % 3 };
        let cfg = ModelConfig {
            dropout_rate: 0.0,
            av_source: AvSource::GroundTruth,
            ..ModelConfig::new(variant, k, 6, 4)
        };
        let mut params = init_params(&cfg).unwrap();
        randomize(&mut params, &mut rng);
        let absent = rng.below(4);
        let mut records = random_records(6, 4, 1 + rng.below(12), &mut rng);
        for r in &mut records {
            if r.domain_id == absent {
                r.domain_id = (absent + 1) % 4;
            }
        }
        let refs: Vec<&FeatureRecord> = records.iter().collect();
        let (_, g) = backprop_with_masks(&params, &cfg, &refs, &random_weights(4, &mut rng), None).unwrap();
        let h = &g.heads[absent];
        if h.w.as_slice().iter().chain(&h.b).any(|&v| v != 0.0) {
            nonzero += 1;
        }
    }
    ensure(
        nonzero == 0,
        format!("{nonzero}/50 trials with a nonzero gradient on an absent head"),
    )
}

fn metric_oracles() -> Outcome {
    let cm = ConfusionMatrix::from_rows(&[vec![8, 2], vec![3, 7]]).unwrap();
    // by hand: F1 = 16/21 and 14/19
    let oracle = (16.0 / 21.0 + 14.0 / 19.0) / 2.0;
    let f1 = macro_f1(&cm);
    let acc = accuracy(&cm).map_err(|e| e.to_string())?;
    let rec = mean_class_recall(&cm).map_err(|e| e.to_string())?;
    ensure(
        (f1 - 0.74937).abs() <= 1e-5 && (f1 - oracle).abs() <= 1e-12 && acc == 0.75 && rec == 0.75,
        format!("macro F1 {f1:.6}, accuracy {acc}, mean class recall {rec}"),
    )
}

fn benchmark() -> Outcome {
    let (tr, te) = synth_generate(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let seed = SynthConfig::default().seed;
    let cfg = TrainConfig::new(ModelConfig {
        seed,
        ..ModelConfig::new(Variant::Cake, 3, 64, 3)
    });
    let shape_ok = tr.n_domains() == 3 && tr.dim() == 64 && tr.len() == 2000 && te.len() == 700;

    let start = Instant::now();
    let (_, hist) = train(&tr, &te, &cfg).map_err(|e| e.to_string())?;
    let single = start.elapsed().as_secs_f64();
    let epochs = hist.epochs.len();

    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let ks = [2, 3, 4, 6];
    let table = sweep_representation_size(&ks, Variant::Cake, &tr, &te, &cfg, 3, jobs).map_err(|e| e.to_string())?;
    let means: Vec<f64> = table.rows.iter().map(|r| r.mean_f1()).collect();
    let gains = table.gains();
    let from_three = &gains[1..];
    let non_increasing = from_three.windows(2).all(|w| w[1] <= w[0]);
    let k3_every_run = table.rows[1].run_f1.iter().all(|&f| f >= 0.90);
    let gap_every_run = table.rows[0]
        .run_f1
        .iter()
        .zip(&table.rows[1].run_f1)
        .all(|(two, three)| three - two >= 0.03);
    ensure(
        shape_ok
            && epochs <= 200
            && single < 60.0
            && hist.best_weighted_f1().unwrap_or(0.0) >= 0.90
            && k3_every_run
            && gap_every_run
            && means[1] - means[0] >= 0.03
            && non_increasing,
        format!(
            "CAKE-3 F1 {:.4} in {epochs} epochs, {single:.2} s on one core; mean F1 over 3 seeds by k {ks:?}: {}; \
             gains {}",
            hist.best_weighted_f1().unwrap_or(0.0),
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", "),
            gains.iter().map(|g| format!("{g:+.4}")).collect::<Vec<_>>().join(", "),
        ),
    )
}

fn normalized_variant() -> Outcome {
    let cfg = ModelConfig::new(Variant::CakeNorm, 3, 16, 2);
    let mut rng = SeededRng::new(12);
    let mut params = init_params(&cfg).unwrap();
    randomize(&mut params, &mut rng);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let scale = 10f64.powf(rng.uniform(-3.0, 3.0));
        let x: Vec<f64> = (0..16).map(|_| rng.normal() * scale).collect();
        let e = embed(&params, &cfg, &x, None, None).map_err(|e| e.to_string())?;
        worst = worst.max((e.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs());
    }
    let mut grad = 0.0f64;
    for (dropout, batch) in [(0.0, 4), (0.4, 16)] {
        let c = ModelConfig {
            dropout_rate: dropout,
            ..ModelConfig::new(Variant::CakeNorm, 3, 8, 3)
        };
        grad = grad.max(gradient_error(&c, batch, &mut rng));
    }
    ensure(
        worst <= 1e-9 && grad <= 1e-4,
        format!("max |norm - 1| {worst:.1e} on 10^4 inputs; gradient rel error {grad:.2e}"),
    )
}

struct MapRun {
    ppm: Vec<u8>,
    svg: String,
    agree: usize,
    cells: usize,
    palette_ok: bool,
}

fn trained_map_bytes() -> Result<MapRun, String> {
    let (tr, te) = small_synth(16, 77);
    let mut cfg = TrainConfig::new(ModelConfig {
        seed: 77,
        ..ModelConfig::new(Variant::Cake, 2, 16, 3)
    });
    cfg.max_epochs = 40;
    cfg.batch_size = 32;
    let (params, _) = train(&tr, &te, &cfg).map_err(|e| e.to_string())?;
    let m = &cfg.model;
    let obs: Vec<Vec<f64>> = te
        .records()
        .iter()
        .map(|r| embed(&params, m, &r.features, r.av, None).unwrap())
        .collect();
    let grid = plan_grid(m, Some(&obs), (200, 200)).map_err(|e| e.to_string())?;
    let mut agree = 0;
    let mut cells = 0;
    let mut palette_ok = true;
    let mut first = None;
    for head in 0..3 {
        let map = render_emotion_map(&params, m, &grid, head, Some(&te)).map_err(|e| e.to_string())?;
        for r in 0..map.rows() {
            for c in 0..map.cols() {
                cells += 1;
                agree +=
                    usize::from(predict_embedding(&params, &grid.embedding_at(r, c), head).unwrap() == map.cell(r, c));
            }
        }
        let ppm = encode_ppm(&map);
        let pixels = &ppm[ppm.len() - map.cells.len() * 3..];
        let decoded: Vec<u8> = pixels
            .chunks(3)
            .map(|px| PALETTE.iter().position(|p| p[..] == px[..]).map_or(255, |i| i as u8))
            .collect();
        palette_ok &= decoded == map.cells;
        if head == 0 {
            first = Some((ppm, encode_svg(&map)));
        }
    }
    let (ppm, svg) = first.unwrap();
    Ok(MapRun {
        ppm,
        svg,
        agree,
        cells,
        palette_ok,
    })
}

fn visualization() -> Outcome {
    let a = trained_map_bytes()?;
    let b = trained_map_bytes()?;
    let same = a.ppm == b.ppm && a.svg == b.svg;
    let MapRun {
        agree,
        cells,
        palette_ok,
        ..
    } = a;
    ensure(
        agree == cells && palette_ok && same,
        format!(
            "{agree}/{cells} cells agree with predict; palette round trip {}; raster and vector identical across runs: {same}",
            if palette_ok { "exact" } else { "broken" }
        ),
    )
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(std::iter::once("cake").chain(args.iter().copied()), &mut out, &mut err);
    if code != 0 {
        return Err(format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)));
    }
    Ok(String::from_utf8(out).unwrap())
}

const PIPELINE_FILES: [&str; 9] = [
    "train.cakefeat",
    "test.cakefeat",
    "model.ckpt",
    "history.csv",
    "eval.csv",
    "cross.csv",
    "map.ppm",
    "map.svg",
    "scatter.svg",
];

fn pipeline(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let p = |n: &str| dir.join(n).display().to_string();
    cli(&[
        "synth",
        "--seed",
        "2019",
        "--out",
        &p("train.cakefeat"),
        "--out-test",
        &p("test.cakefeat"),
    ])?;
    cli(&[
        "train",
        "--seed",
        "2019",
        "--variant",
        "cake",
        "--k",
        "2",
        "--data",
        &p("train.cakefeat"),
        "--test",
        &p("test.cakefeat"),
        "--epochs",
        "30",
        "--out",
        &p("model.ckpt"),
        "--history",
        &p("history.csv"),
    ])?;
    cli(&[
        "eval",
        "--model",
        &p("model.ckpt"),
        "--data",
        &p("test.cakefeat"),
        "--out",
        &p("eval.csv"),
    ])?;
    cli(&[
        "cross-eval",
        "--model",
        &p("model.ckpt"),
        "--data",
        &p("test.cakefeat"),
        "--out",
        &p("cross.csv"),
    ])?;
    for out in ["map.ppm", "map.svg"] {
        cli(&[
            "vizmap",
            "--model",
            &p("model.ckpt"),
            "--data",
            &p("test.cakefeat"),
            "--domain",
            "1",
            "--out",
            &p(out),
        ])?;
    }
    cli(&["scatter", "--data", &p("test.cakefeat"), "--out", &p("scatter.svg")])?;
    PIPELINE_FILES
        .iter()
        .map(|f| fs::read(dir.join(f)).map_err(|e| e.to_string()))
        .collect()
}

fn end_to_end() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let differing: Vec<&str> = PIPELINE_FILES
        .iter()
        .zip(first.iter().zip(&second))
        .filter(|(_, (x, y))| x != y)
        .map(|(n, _)| *n)
        .collect();

    let eval = String::from_utf8(first[4].clone()).unwrap();
    let cross = String::from_utf8(first[5].clone()).unwrap();
    let eval_f1: Vec<String> = eval
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect();
    let diag: Vec<String> = cross
        .lines()
        .skip(1)
        .enumerate()
        .map(|(j, l)| l.split(',').nth(j + 1).unwrap().to_string())
        .collect();
    // eval lists each domain then the pooled row
    let diagonal_ok = diag.len() == 3 && eval_f1[..3] == diag[..];

    // the checkpoint reloads into the same predictions as the library
    let bundle: DatasetBundle = cake::datamodel::load_feature_file(a.path().join("test.cakefeat")).unwrap();
    let ck = cake::Checkpoint::load(a.path().join("model.ckpt")).map_err(|e| e.to_string())?;
    let reload_ok = bundle
        .records()
        .iter()
        .all(|r| predict(&ck.params, &ck.config, r, r.domain_id).is_ok());
    ensure(
        differing.is_empty() && diagonal_ok && reload_ok,
        format!(
            "{} artifacts byte-identical across two runs{}; cross-eval diagonal {:?} equals eval {:?}",
            PIPELINE_FILES.len() - differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" (differ: {differing:?})")
            },
            diag,
            &eval_f1[..3.min(eval_f1.len())],
        ),
    )
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("gradient oracle", gradient_oracle),
        ("weight formulas", weight_formulas),
        ("loss reductions", loss_reductions),
        ("cross-head isolation", cross_head_isolation),
        ("metric oracles", metric_oracles),
        ("synthetic benchmark", benchmark),
        ("normalized embedding", normalized_variant),
        ("visualization consistency", visualization),
        ("end-to-end determinism", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
