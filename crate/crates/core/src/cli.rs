//! The `cake` command line.
//!
//! Every subcommand accepts `--config FILE`, a flat `key = value` file whose
//! keys are the subcommand's long flag names. Blank lines and lines starting
//! with `#` are ignored. A flag given on the command line overrides the same
//! key in the file.
//!
//! Exit codes: 0 on success, 1 on usage errors (usage goes to stderr), 2 on
//! runtime or data errors. Error messages start with the failing module.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{Arg, ArgMatches, Command};

use crate::checkpoint::Checkpoint;
use crate::datamodel::{
    export_csv, import_csv, load_feature_file, synth_generate, write_feature_file, Av, DatasetBundle, EmotionClass,
    FeatureRecord, SynthConfig,
};
use crate::metrics::reports_to_csv;
use crate::model::{draw_dropout_masks, embed, gradient_check, init_params, AvSource, ModelConfig, Variant};
use crate::numerics::{SeededRng, DEFAULT_FD_EPS};
use crate::objective::{LogBase, LossWeights};
use crate::optim::AdamConfig;
use crate::trainer::{cross_evaluate, evaluate, sweep_representation_size, train_full, TrainConfig};
use crate::vizmap::{emit_map_image, plan_grid, render_emotion_map, scatter_av, ImageFormat};
use crate::Error;

/// Exit code for bad invocations.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for failures while running a valid invocation.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

fn runtime(input: &str) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| {
        let full = e.to_string();
        let detail = full.split_once(": ").map_or(full.as_str(), |(_, d)| d);
        CliError::Runtime(format!("{}: {input}: {detail}", e.module()))
    }
}

fn opt(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("VALUE").help(help)
}

fn cli() -> Command {
    let config = || opt("config", "key = value file; flags override its entries");
    let seed = || opt("seed", "seed for every random draw (required)");
    let train_flags = || {
        [
            opt("epochs", "maximum number of epochs [default: 200]"),
            opt("batch-size", "mini-batch size [default: 64]"),
            opt("patience", "epochs without improvement before stopping [default: 30]"),
            opt("lr", "Adam learning rate [default: 0.001]"),
            opt("dropout", "dropout rate on the embedding input [default: 0.5]"),
            opt("av-source", "ground-truth | regressed [default: regressed]"),
            opt("eval-every", "evaluate every N epochs [default: 1]"),
            opt("log-base", "base of the dataset-weight logarithm, or e [default: e]"),
        ]
    };
    Command::new("cake")
        .about("Compact multi-domain emotion embeddings")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("synth")
                .about("Generate a seeded synthetic train/test pair")
                .args([
                    config(),
                    seed(),
                    opt("out", "training set output (.cakefeat, or .csv)"),
                    opt("out-test", "test set output (.cakefeat, or .csv)"),
                    opt("dim", "feature dimension [default: 64]"),
                    opt("latent-dim", "latent dimension [default: 3]"),
                    opt("noise", "latent noise sigma [default: 0.2]"),
                    opt("domain-shift", "per-domain shift sigma [default: 0.05]"),
                    opt("av-noise", "arousal-valence noise sigma [default: 0.02]"),
                    opt(
                        "train-counts",
                        "comma-separated training counts per domain [default: 1400,400,200]",
                    ),
                    opt(
                        "test-counts",
                        "comma-separated test counts per domain [default: 490,140,70]",
                    ),
                    opt("domain-names", "comma-separated domain names"),
                ]),
        )
        .subcommand(
            Command::new("train")
                .about("Train a model and write a checkpoint")
                .args([
                    config(),
                    seed(),
                    opt("variant", "cake | cake-norm | av | avk"),
                    opt("k", "number of learned dimensions"),
                    opt("data", "training set"),
                    opt("test", "evaluation set used for model selection"),
                    opt("out", "checkpoint output"),
                    opt("history", "per-epoch history CSV output"),
                ])
                .args(train_flags()),
        )
        .subcommand(Command::new("eval").about("Score each domain with its own head").args([
            config(),
            opt("model", "checkpoint"),
            opt("data", "evaluation set"),
            opt("out", "CSV output [default: stdout]"),
        ]))
        .subcommand(
            Command::new("cross-eval")
                .about("Score every head on every domain")
                .args([
                    config(),
                    opt("model", "checkpoint"),
                    opt("data", "evaluation set"),
                    opt("out", "CSV output [default: stdout]"),
                ]),
        )
        .subcommand(
            Command::new("sweep")
                .about("Train over several representation sizes")
                .args([
                    config(),
                    seed(),
                    opt("variant", "cake | cake-norm | av | avk [default: cake]"),
                    opt("ks", "comma-separated sizes [default: 2,3,4,6]"),
                    opt("runs", "runs per size, seeds seed..seed+runs-1 [default: 1]"),
                    opt("jobs", "concurrent runs [default: 1]"),
                    opt("data", "training set"),
                    opt("test", "evaluation set"),
                    opt("out", "CSV output [default: stdout]"),
                ])
                .args(train_flags()),
        )
        .subcommand(
            Command::new("vizmap")
                .about("Render the emotion map of one head")
                .args([
                    config(),
                    opt("model", "checkpoint"),
                    opt("data", "records used for axis ranges and F1 labels"),
                    opt("domain", "head index [default: 0]"),
                    opt("resolution", "N or COLSxROWS [default: 200]"),
                    opt("format", "raster | vector [default: from the output extension]"),
                    opt("out", "image output (.ppm or .svg)"),
                ]),
        )
        .subcommand(
            Command::new("scatter")
                .about("Plot records at their arousal-valence coordinates")
                .args([
                    config(),
                    opt("data", "records with AV values"),
                    opt("out", "SVG output"),
                ]),
        )
        .subcommand(
            Command::new("gradcheck")
                .about("Compare analytic gradients with finite differences on random data")
                .args([
                    config(),
                    opt("variant", "cake | cake-norm | av | avk [default: cake]"),
                    opt("k", "number of learned dimensions [default: 3]"),
                    opt("dim", "feature dimension [default: 8]"),
                    opt("domains", "number of domains [default: 3]"),
                    opt("batch", "batch size [default: 4]"),
                    opt("dropout", "dropout rate, masks held fixed [default: 0]"),
                    opt("seed", "seed [default: 0]"),
                    opt("eps", "finite-difference step [default: 1e-5]"),
                    opt("tol", "maximum relative error [default: 1e-4]"),
                ]),
        )
}

/// Flag values merged with an optional config file.
struct Opts {
    sub: Command,
    values: BTreeMap<String, String>,
}

fn parse_config(text: &str, path: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("cli: {path}:{}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Opts {
    fn new(sub: Command, m: &ArgMatches) -> Result<Self, CliError> {
        let known: Vec<String> = sub.get_arguments().map(|a| a.get_id().to_string()).collect();
        let mut values = BTreeMap::new();
        if let Some(path) = m.get_one::<String>("config") {
            let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cli: {path}: {e}")))?;
            for (k, v) in parse_config(&text, path)? {
                if k == "config" || !known.contains(&k) {
                    return Err(CliError::Usage(format!(
                        "cli: {path}: unknown key {k:?} for `{}`",
                        sub.get_name()
                    )));
                }
                if values.insert(k.clone(), v).is_some() {
                    return Err(CliError::Usage(format!("cli: {path}: duplicate key {k:?}")));
                }
            }
        }
        for id in &known {
            if let Some(v) = m.get_one::<String>(id) {
                values.insert(id.clone(), v.clone());
            }
        }
        Ok(Self { sub, values })
    }

    fn usage(&mut self, msg: String) -> CliError {
        CliError::Usage(format!("{msg}\n\n{}", self.sub.render_usage()))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn required(&mut self, key: &str) -> Result<String, CliError> {
        match self.get(key) {
            Some(v) => Ok(v.to_string()),
            None => Err(self.usage(format!("cli: missing required --{key}"))),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.get(key).map(str::to_string) else {
            return Ok(None);
        };
        match raw.parse() {
            Ok(v) => Ok(Some(v)),
            Err(e) => Err(self.usage(format!("cli: invalid value {raw:?} for --{key}: {e}"))),
        }
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn parse_required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.parse(key)? {
            Some(v) => Ok(v),
            None => Err(self.usage(format!("cli: missing required --{key}"))),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.get(key).map(str::to_string) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for part in raw.split(',') {
            match part.trim().parse() {
                Ok(v) => out.push(v),
                Err(e) => return Err(self.usage(format!("cli: invalid entry {part:?} in --{key}: {e}"))),
            }
        }
        Ok(Some(out))
    }
}

fn load_bundle(path: &str) -> Result<DatasetBundle, CliError> {
    let loaded = if has_ext(path, "csv") {
        import_csv(path)
    } else {
        load_feature_file(path)
    };
    loaded.map_err(|e| runtime(path)(e.into()))
}

fn save_bundle(bundle: &DatasetBundle, path: &str) -> Result<(), CliError> {
    let saved = if has_ext(path, "csv") {
        export_csv(bundle, path)
    } else {
        write_feature_file(bundle, path)
    };
    saved.map_err(|e| runtime(path)(e.into()))
}

fn has_ext(path: &str, ext: &str) -> bool {
    Path::new(path).extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn write_output(path: Option<&str>, text: &str, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Runtime(format!("cli: {p}: {e}"))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("cli: stdout: {e}"))),
    }
}

fn load_checkpoint(path: &str) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| runtime(path)(e.into()))
}

fn cmd_synth(o: &mut Opts) -> Result<(), CliError> {
    let seed: u64 = o.parse_required("seed")?;
    let out = o.required("out")?;
    let out_test = o.required("out-test")?;
    let mut cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    cfg.dim = o.parse_or("dim", cfg.dim)?;
    cfg.latent_dim = o.parse_or("latent-dim", cfg.latent_dim)?;
    if cfg.latent_dim != 3 {
        cfg.prototypes = None;
    }
    cfg.noise_sigma = o.parse_or("noise", cfg.noise_sigma)?;
    cfg.domain_shift_sigma = o.parse_or("domain-shift", cfg.domain_shift_sigma)?;
    cfg.av_noise_sigma = o.parse_or("av-noise", cfg.av_noise_sigma)?;
    if let Some(c) = o.list("train-counts")? {
        cfg.train_counts = c;
    }
    if let Some(c) = o.list("test-counts")? {
        cfg.test_counts = c;
    }
    let n = cfg.train_counts.len();
    if n != cfg.n_domains {
        cfg.n_domains = n;
        cfg.class_ratios = vec![vec![1.0; cfg.n_classes]; n];
        cfg.domain_names = (0..n).map(|i| format!("domain{i}")).collect();
    }
    if let Some(names) = o.list::<String>("domain-names")? {
        cfg.domain_names = names;
    }
    let (train, test) = synth_generate(&cfg).map_err(|e| runtime("synth config")(e.into()))?;
    save_bundle(&train, &out)?;
    save_bundle(&test, &out_test)
}

fn train_config(o: &mut Opts, model: ModelConfig) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::new(model);
    cfg.max_epochs = o.parse_or("epochs", cfg.max_epochs)?;
    cfg.batch_size = o.parse_or("batch-size", cfg.batch_size)?;
    cfg.patience = o.parse_or("patience", cfg.patience)?;
    cfg.eval_every = o.parse_or("eval-every", cfg.eval_every)?;
    cfg.adam = AdamConfig {
        lr: o.parse_or("lr", cfg.adam.lr)?,
        ..cfg.adam
    };
    cfg.log_base = match o.get("log-base") {
        None | Some("e") => LogBase::Natural,
        Some(_) => LogBase::Base(o.parse_required("log-base")?),
    };
    Ok(cfg)
}

fn model_config(
    o: &mut Opts,
    variant: Variant,
    k: usize,
    dim: usize,
    n_domains: usize,
    seed: u64,
) -> Result<ModelConfig, CliError> {
    let mut m = ModelConfig::new(variant, k, dim, n_domains);
    m.seed = seed;
    m.dropout_rate = o.parse_or("dropout", m.dropout_rate)?;
    m.av_source = o.parse_or("av-source", m.av_source)?;
    m.validate().map_err(|e| runtime("model config")(e.into()))?;
    Ok(m)
}

fn cmd_train(o: &mut Opts) -> Result<(), CliError> {
    let seed: u64 = o.parse_required("seed")?;
    let variant: Variant = o.parse_required("variant")?;
    let k: usize = if variant == Variant::Av {
        o.parse_or("k", 0)?
    } else {
        o.parse_required("k")?
    };
    let data = o.required("data")?;
    let test = o.required("test")?;
    let out = o.required("out")?;
    let train_set = load_bundle(&data)?;
    let test_set = load_bundle(&test)?;
    let model = model_config(o, variant, k, train_set.dim(), train_set.n_domains(), seed)?;
    let cfg = train_config(o, model)?;
    let result = train_full(&train_set, &test_set, &cfg).map_err(|e| runtime(&data)(e.into()))?;
    Checkpoint {
        config: cfg.model,
        params: result.params,
        adam: result.adam,
    }
    .save(&out)
    .map_err(|e| runtime(&out)(e.into()))?;
    if let Some(h) = o.get("history") {
        write_output(Some(h), &result.history.to_csv(), &mut std::io::sink())?;
    }
    Ok(())
}

fn cmd_eval(o: &mut Opts, cross: bool, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    let model = o.required("model")?;
    let data = o.required("data")?;
    let ck = load_checkpoint(&model)?;
    let bundle = load_bundle(&data)?;
    check_bundle(&ck.config, &bundle, &data)?;
    let csv = if cross {
        cross_evaluate(&ck.params, &ck.config, &bundle)
            .map_err(|e| runtime(&data)(e.into()))?
            .to_csv()
    } else {
        let report = evaluate(&ck.params, &ck.config, &bundle).map_err(|e| runtime(&data)(e.into()))?;
        reports_to_csv(&report.reports())
    };
    write_output(o.get("out"), &csv, stdout)
}

fn check_bundle(cfg: &ModelConfig, bundle: &DatasetBundle, path: &str) -> Result<(), CliError> {
    if bundle.dim() != cfg.dim || bundle.n_domains() != cfg.n_domains {
        return Err(CliError::Runtime(format!(
            "datamodel: {path}: {} domains of dimension {}, the model expects {} of dimension {}",
            bundle.n_domains(),
            bundle.dim(),
            cfg.n_domains,
            cfg.dim
        )));
    }
    Ok(())
}

fn cmd_sweep(o: &mut Opts, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    let seed: u64 = o.parse_required("seed")?;
    let variant: Variant = o.parse_or("variant", Variant::Cake)?;
    let ks: Vec<usize> = o.list("ks")?.unwrap_or_else(|| vec![2, 3, 4, 6]);
    let runs: usize = o.parse_or("runs", 1)?;
    let jobs: usize = o.parse_or("jobs", 1)?;
    let data = o.required("data")?;
    let test = o.required("test")?;
    let train_set = load_bundle(&data)?;
    let test_set = load_bundle(&test)?;
    let k0 = ks.first().copied().unwrap_or(0);
    let model = model_config(o, variant, k0, train_set.dim(), train_set.n_domains(), seed)?;
    let cfg = train_config(o, model)?;
    let table = sweep_representation_size(&ks, variant, &train_set, &test_set, &cfg, runs, jobs)
        .map_err(|e| runtime(&data)(e.into()))?;
    write_output(o.get("out"), &table.to_csv(), stdout)
}

fn parse_resolution(raw: &str) -> Option<(usize, usize)> {
    match raw.split_once(['x', 'X']) {
        Some((c, r)) => Some((c.trim().parse().ok()?, r.trim().parse().ok()?)),
        None => {
            let n = raw.trim().parse().ok()?;
            Some((n, n))
        }
    }
}

fn cmd_vizmap(o: &mut Opts) -> Result<(), CliError> {
    let model = o.required("model")?;
    let out = o.required("out")?;
    let domain: usize = o.parse_or("domain", 0)?;
    let raw = o.get("resolution").unwrap_or("200").to_string();
    let resolution = parse_resolution(&raw).ok_or_else(|| o.usage(format!("cli: invalid --resolution {raw:?}")))?;
    let format = match o.parse::<ImageFormat>("format")? {
        Some(f) => f,
        None if has_ext(&out, "svg") => ImageFormat::Vector,
        None => ImageFormat::Raster,
    };
    let ck = load_checkpoint(&model)?;
    let bundle = match o.get("data").map(str::to_string) {
        Some(p) => {
            let b = load_bundle(&p)?;
            check_bundle(&ck.config, &b, &p)?;
            Some((p, b))
        }
        None => None,
    };
    let observed = match &bundle {
        Some((p, b)) => Some(
            b.records()
                .iter()
                .map(|r| embed(&ck.params, &ck.config, &r.features, r.av, None))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| runtime(p)(e.into()))?,
        ),
        None => None,
    };
    let grid = plan_grid(&ck.config, observed.as_deref(), resolution).map_err(|e| runtime(&model)(e.into()))?;
    let map = render_emotion_map(&ck.params, &ck.config, &grid, domain, bundle.as_ref().map(|(_, b)| b))
        .map_err(|e| runtime(&model)(e.into()))?;
    emit_map_image(&map, &out, format).map_err(|e| runtime(&out)(e.into()))
}

fn cmd_scatter(o: &mut Opts) -> Result<(), CliError> {
    let data = o.required("data")?;
    let out = o.required("out")?;
    let bundle = load_bundle(&data)?;
    scatter_av(&bundle, &out).map_err(|e| runtime(&data)(e.into()))
}

fn cmd_gradcheck(o: &mut Opts, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    let variant: Variant = o.parse_or("variant", Variant::Cake)?;
    let default_k = if variant == Variant::Av { 0 } else { 3 };
    let k: usize = o.parse_or("k", default_k)?;
    let dim: usize = o.parse_or("dim", 8)?;
    let n_domains: usize = o.parse_or("domains", 3)?;
    let batch: usize = o.parse_or("batch", 4)?;
    let seed: u64 = o.parse_or("seed", 0)?;
    let eps: f64 = o.parse_or("eps", DEFAULT_FD_EPS)?;
    let tol: f64 = o.parse_or("tol", 1e-4)?;
    let mut model = ModelConfig::new(variant, k, dim, n_domains);
    model.seed = seed;
    model.dropout_rate = o.parse_or("dropout", 0.0)?;
    model.av_source = AvSource::GroundTruth;
    model.validate().map_err(|e| runtime("gradcheck config")(e.into()))?;
    if batch == 0 {
        return Err(o.usage("cli: --batch must be >= 1".into()));
    }
    let params = init_params(&model).map_err(|e| runtime("gradcheck config")(e.into()))?;
    let mut rng = SeededRng::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let records = random_records(&model, batch, &mut rng);
    let refs: Vec<&FeatureRecord> = records.iter().collect();
    let weights = random_weights(n_domains, &mut rng);
    let masks = (model.dropout_rate > 0.0).then(|| draw_dropout_masks(&model, batch, &mut rng));
    let report = gradient_check(&params, &model, &refs, &weights, masks.as_deref(), eps)
        .map_err(|e| runtime("gradcheck")(e.into()))?;
    let line = format!(
        "{} k={} dim={} batch={}: {} coordinates, max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e})\n",
        variant,
        k,
        dim,
        batch,
        report.n_coords,
        report.max_rel_error,
        report.worst_index,
        report.analytic,
        report.numeric
    );
    write_output(None, &line, stdout)?;
    if report.max_rel_error > tol {
        return Err(CliError::Runtime(format!(
            "model: gradcheck: relative error {:.3e} exceeds {tol:e}",
            report.max_rel_error
        )));
    }
    Ok(())
}

fn random_records(cfg: &ModelConfig, n: usize, rng: &mut SeededRng) -> Vec<FeatureRecord> {
    (0..n)
        .map(|i| FeatureRecord {
            id: format!("probe{i}"),
            domain_id: rng.below(cfg.n_domains),
            features: (0..cfg.dim).map(|_| rng.normal()).collect(),
            label: EmotionClass::from_index(rng.below(EmotionClass::ALL.len())).expect("class"),
            av: Some(Av::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))),
        })
        .collect()
}

fn random_weights(n_domains: usize, rng: &mut SeededRng) -> LossWeights {
    let mut w = LossWeights::uniform(n_domains, EmotionClass::ALL.len());
    for row in &mut w.w_class {
        for v in row.iter_mut() {
            *v = rng.uniform(0.5, 2.0);
        }
    }
    for v in &mut w.w_dataset {
        *v = rng.uniform(0.1, 1.0);
    }
    w
}

/// Runs one invocation, writing reports to `stdout` and diagnostics to
/// `stderr`. Returns the process exit code.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let (name, sub_m) = matches.subcommand().expect("subcommand required");
    let sub = cli()
        .find_subcommand(name)
        .expect("known subcommand")
        .clone()
        .bin_name(format!("cake {name}"));
    let result = Opts::new(sub, sub_m).and_then(|mut o| match name {
        "synth" => cmd_synth(&mut o),
        "train" => cmd_train(&mut o),
        "eval" => cmd_eval(&mut o, false, stdout),
        "cross-eval" => cmd_eval(&mut o, true, stdout),
        "sweep" => cmd_sweep(&mut o, stdout),
        "vizmap" => cmd_vizmap(&mut o),
        "scatter" => cmd_scatter(&mut o),
        "gradcheck" => cmd_gradcheck(&mut o, stdout),
        _ => unreachable!("clap rejects unknown subcommands"),
    });
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
