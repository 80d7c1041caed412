use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hellsemble::data::{
    load_csv, load_feature_csv, stratified_split, DataView, IndexSubset, SplitSpec,
};
use hellsemble::eval::{run_experiment_with_jobs, ExperimentConfig, MetricId};
use hellsemble::hellsemble::{
    self as ens, evaluate_ensemble, AlphaPolicy, FittedHellsemble, HellsembleConfig, Mode,
};
use hellsemble::learners::LearnerSpec;
use hellsemble::seed::{derive_seed, derive_seed_str, hash_str};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Cli, Command};

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Io,
    Config,
    Data,
    Training,
}

/// A failed command: exit code plus one stderr line.
#[derive(Debug)]
pub struct CliError {
    kind: Kind,
    message: String,
}

impl CliError {
    fn new(kind: Kind, message: impl fmt::Display) -> Self {
        Self {
            kind,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Io => 1,
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Training => 4,
        }
    }

    fn token(&self) -> &'static str {
        match self.kind {
            Kind::Io => "E_IO",
            Kind::Config => "E_CONFIG",
            Kind::Data => "E_DATA",
            Kind::Training => "E_TRAIN",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        write!(f, "{} {}", self.token(), one_line)
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::new(Kind::Config, e)
}

fn data_err(e: impl fmt::Display) -> CliError {
    CliError::new(Kind::Data, e)
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::new(Kind::Io, format!("Io: {}: {e}", path.display()))
}

fn train_defaults_iterations() -> usize {
    10
}

fn train_defaults_min_subset() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSplits {
    /// Share of the data held out for validation.
    #[serde(default = "default_validation")]
    pub validation: f64,
    /// Share held out for a final test score, taken before validation.
    #[serde(default)]
    pub test: Option<f64>,
}

fn default_validation() -> f64 {
    0.25
}

impl Default for TrainSplits {
    fn default() -> Self {
        Self {
            validation: default_validation(),
            test: None,
        }
    }
}

/// The `train --config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub candidates: Vec<LearnerSpec>,
    pub router: LearnerSpec,
    pub mode: Mode,
    #[serde(default)]
    pub metric: MetricId,
    #[serde(default)]
    pub alpha_policy: AlphaPolicy,
    #[serde(default = "train_defaults_iterations")]
    pub max_iterations: usize,
    #[serde(default = "train_defaults_min_subset")]
    pub min_subset_size: usize,
    #[serde(default)]
    pub strict_algorithm1: bool,
    #[serde(default)]
    pub splits: TrainSplits,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, seed: u64, config: impl Serialize) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: serde_json::to_value(config).expect("configs serialize"),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }

    fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(path, &text)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Parses JSON, naming the offending field on failure.
fn parse_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("ConfigRead: {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        config_err(format!("ConfigParse: field `{field}`: {}", e.inner()))
    })
}

fn read_model(path: &Path) -> Result<FittedHellsemble, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| data_err(format!("ModelRead: {}: {e}", path.display())))?;
    FittedHellsemble::from_archive(&text).map_err(data_err)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train {
            data,
            label,
            config,
            out,
        } => train(cli, data, label, config, out),
        Command::Predict {
            model,
            data,
            label,
            proba,
            out,
        } => predict(model, data, label.as_deref(), *proba, out.as_deref()),
        Command::Benchmark {
            datasets,
            label,
            grid,
            out,
            jobs,
        } => benchmark(cli, datasets, label, grid.as_deref(), out, *jobs),
        Command::Inspect { model } => inspect(model),
    }
}

fn train(
    cli: &Cli,
    data: &Path,
    label: &str,
    config_path: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let mut config: TrainConfig = parse_config(config_path)?;
    let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    config.seed = Some(seed);

    // every learner seed is tied to the run seed; a seed written in the spec
    // still selects a different stream
    let reseed = |spec: &LearnerSpec, role: u64| {
        let s = derive_seed(seed, &[role, hash_str(&spec.name()), spec.seed]);
        spec.clone().with_seed(s)
    };
    let candidates = config.candidates.iter().map(|s| reseed(s, 0)).collect();
    let mut hc = HellsembleConfig::new(candidates, reseed(&config.router, 1), config.mode);
    hc.metric = config.metric.clone();
    hc.alpha_policy = config.alpha_policy;
    hc.max_iterations = config.max_iterations;
    hc.min_subset_size = config.min_subset_size;
    hc.strict_algorithm1 = config.strict_algorithm1;
    hc.seed = seed;
    hc.validate().map_err(config_err)?;
    let val_split = SplitSpec::new(
        config.splits.validation,
        derive_seed_str(seed, &["validation"]),
    )
    .map_err(config_err)?;
    let test_split = config
        .splits
        .test
        .map(|f| SplitSpec::new(f, derive_seed_str(seed, &["test"])))
        .transpose()
        .map_err(config_err)?;

    let dataset = load_csv(data, label).map_err(data_err)?;
    if cli.verbose {
        eprintln!(
            "loaded {}: {} rows, {} features",
            data.display(),
            dataset.n_rows(),
            dataset.n_features()
        );
    }
    let full = IndexSubset::full(Arc::new(dataset));
    let (test, rest) = match &test_split {
        Some(spec) => {
            let (t, r) = stratified_split(&full, spec).map_err(data_err)?;
            (Some(t), r)
        }
        None => (None, full),
    };
    let (val, train) = stratified_split(&rest, &val_split).map_err(data_err)?;

    let model = ens::fit(&hc, &train, &val).map_err(|e| CliError::new(Kind::Training, e))?;
    write_file(out, &model.to_archive())?;

    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "iteration\tchosen\tcircle_size\tval_score\taccepted"
    );
    for r in model.history() {
        let _ = writeln!(
            stdout,
            "{}\t{}\t{}\t{:.6}\t{}",
            r.iteration,
            r.chosen_spec.name(),
            r.train_size,
            r.val_score,
            r.accepted
        );
    }
    let _ = writeln!(stdout, "members: {}", model.members().len());
    if let Some(test) = &test {
        let metric = hc.metric.resolve().map_err(config_err)?;
        let score = evaluate_ensemble(model.members(), model.router(), test, metric.as_ref())
            .map_err(|e| CliError::new(Kind::Training, e))?;
        let _ = writeln!(stdout, "test {}: {score:.6}", hc.metric);
    }
    if cli.verbose {
        eprintln!(
            "stop reason: {:?}; model written to {}",
            model.stop_reason(),
            out.display()
        );
    }

    let mut manifest = RunManifest::new("train", seed, &config)
        .input("data", data)
        .input("config", config_path);
    manifest.inputs.insert("label".into(), label.into());
    manifest.artifacts.push(out.display().to_string());
    manifest.write(&manifest_path(out))
}

fn predict(
    model_path: &Path,
    data: &Path,
    label: Option<&str>,
    proba: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = read_model(model_path)?;
    let (_, x) = load_feature_csv(data, label).map_err(data_err)?;
    let labels = model.predict(&x).map_err(data_err)?;
    let probs = if proba {
        Some(model.predict_proba(&x).map_err(data_err)?)
    } else {
        None
    };

    let mut text = String::from(if proba {
        "id,prediction,p0,p1\n"
    } else {
        "id,prediction\n"
    });
    for (i, l) in labels.iter().enumerate() {
        match &probs {
            Some(p) => text.push_str(&format!("{i},{l},{},{}\n", p.row(i)[0], p.row(i)[1])),
            None => text.push_str(&format!("{i},{l}\n")),
        }
    }
    match out {
        Some(path) => {
            write_file(path, &text)?;
            let mut manifest =
                RunManifest::new("predict", 0, serde_json::json!({ "proba": proba }))
                    .input("model", model_path)
                    .input("data", data);
            if let Some(l) = label {
                manifest.inputs.insert("label".into(), l.into());
            }
            manifest.artifacts.push(path.display().to_string());
            manifest.write(&manifest_path(path))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| io_err(Path::new("stdout"), e))
        }
    }
}

fn benchmark(
    cli: &Cli,
    dir: &Path,
    label: &str,
    grid: Option<&Path>,
    out: &Path,
    jobs: usize,
) -> Result<(), CliError> {
    let mut config: ExperimentConfig = match grid {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(config_err)?;

    let entries =
        fs::read_dir(dir).map_err(|e| data_err(format!("DatasetDir: {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut datasets = Vec::new();
    for path in &paths {
        let name = path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        match load_csv(path, label) {
            Ok(d) => datasets.push((name, Arc::new(d))),
            Err(e) => eprintln!("W_DATA skipping {}: {e}", path.display()),
        }
    }
    if datasets.is_empty() {
        return Err(data_err(format!(
            "NoDatasets: no loadable CSV in {}",
            dir.display()
        )));
    }
    if cli.verbose {
        eprintln!(
            "running grid on {} dataset(s) with {} job(s)",
            datasets.len(),
            jobs
        );
    }

    let report = run_experiment_with_jobs(&config, &datasets, jobs).map_err(config_err)?;
    let csv_path = out.join("report.csv");
    let json_path = out.join("report.json");
    write_file(&csv_path, &report.to_csv())?;
    write_file(&json_path, &report.to_json())?;

    let failed = report.rows.iter().filter(|r| r.error.is_some()).count()
        + report
            .baselines
            .iter()
            .filter(|b| b.error.is_some())
            .count();
    println!(
        "{} ensemble rows, {} baseline rows, {} failed; report in {}",
        report.rows.len(),
        report.baselines.len(),
        failed,
        out.display()
    );

    let mut manifest = RunManifest::new("benchmark", config.seed, &config).input("datasets", dir);
    manifest.inputs.insert("label".into(), label.into());
    manifest.inputs.insert("jobs".into(), jobs.to_string());
    if let Some(g) = grid {
        manifest
            .inputs
            .insert("grid".into(), g.display().to_string());
    }
    manifest.artifacts = vec![
        csv_path.display().to_string(),
        json_path.display().to_string(),
    ];
    manifest.write(&out.join("manifest.json"))
}

fn inspect(path: &Path) -> Result<(), CliError> {
    let model = read_model(path)?;
    let router = model
        .router()
        .map_or_else(|| "none".to_string(), |r| r.spec().name());
    println!("members: {}, router: {}", model.members().len(), router);
    for (i, m) in model.members().iter().enumerate() {
        println!("member {}: {}", i + 1, m.spec().name());
    }
    println!("mode: {}", model.config().mode.as_str());
    println!("stop: {:?}", model.stop_reason());
    println!("iteration\tchosen\tcircle_size\tmisclassified\talpha\tval_score\taccepted");
    for r in model.history() {
        println!(
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
            r.iteration,
            r.chosen_spec.name(),
            r.train_size,
            r.misclassified_count,
            r.alpha_used,
            r.val_score,
            r.accepted
        );
    }
    let histogram: Vec<String> = model
        .router_histogram()
        .iter()
        .map(|(c, n)| format!("{c}={n}"))
        .collect();
    println!("router labels: {}", histogram.join(" "));
    Ok(())
}
