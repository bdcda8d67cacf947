//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 when inputs fail validation or a step errors, 2 on
//! usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::audio::{mfcc_for_manifest, MfccConfig};
use crate::features::{read_features, scan_store, write_features, DiskStore, ModelId, Source, StoreFilter};
use crate::manifest::{load_manifest, summarize, DatasetManifest, Task};
use crate::sweep::{render_report, run_layer_sweep, run_pca_sweep, PcaPlan, SweepPlan, SweepReport, SystemSpec};
use crate::synth::{generate_corpus, generate_pseudo_ssl, SslSim, SynthSpec};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser, Serialize)]
#[command(name = "trait-probe", version, about = "Layer-wise age and gender probing of speech features")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "TRAIT_PROBE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    /// Output directory.
    #[arg(long, global = true, default_value = "trait-probe-out")]
    pub out: PathBuf,
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// key=value file with sweep settings; explicit flags take precedence.
    #[arg(long, global = true)]
    pub plan: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Generate a synthetic corpus (WAV + manifest), optionally with pseudo-SSL features.
    Synth(SynthArgs),
    /// Extract MFCC baseline features for every manifest utterance.
    Mfcc(MfccArgs),
    /// Train and score one probe per model layer.
    SweepLayers(SweepLayersArgs),
    /// Reduce each model's best layer with PCA and probe every width.
    SweepPca(SweepPcaArgs),
    /// Render CSV and SVG from a saved report.json.
    Report(ReportArgs),
    /// Check a manifest (and optionally a feature store) and print summary counts.
    Validate(ValidateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value = "synth")]
    pub name: String,
    #[arg(long, default_value_t = 40)]
    pub speakers: usize,
    #[arg(long, default_value_t = 10)]
    pub utterances: usize,
    /// Age classes, as `6-11` or `6,8,10`.
    #[arg(long, default_value = "6-11")]
    pub ages: String,
    /// Duration range in seconds, `lo-hi`.
    #[arg(long, default_value = "0.25-0.4")]
    pub duration: String,
    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,
    /// Also write pseudo-SSL features for this model into `<out>/features`.
    #[arg(long)]
    pub ssl_model: Option<String>,
    /// Per-layer class-signal decay for pseudo-SSL features.
    #[arg(long, default_value_t = 0.7)]
    pub decay: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct MfccArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args, Serialize, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Skip the MFCC baseline and the significance tests against it.
    #[arg(long)]
    pub no_baseline: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepLayersArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Comma-separated model names.
    #[arg(long)]
    pub models: Option<String>,
    /// Layers to probe, as `0-12` or `0,3,6`; default all.
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepPcaArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// `model:layer` pairs, comma-separated.
    #[arg(long)]
    pub best_layers: Option<String>,
    /// Widths to try, comma-separated; default 512 down to 32.
    #[arg(long)]
    pub ks: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature directory to check against the manifest.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Models whose layers must be present; MFCC is always checked.
    #[arg(long)]
    pub models: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// Parses `argv` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().format_target(false).try_init();
    if cli.quiet {
        log::set_max_level(log::LevelFilter::Error);
    }

    let started = now();
    let result = dispatch(&cli);
    let (code, status) = match &result {
        Ok(_) => (0, "ok".to_string()),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            (2, format!("usage error: {e}"))
        }
        Err(e) => {
            eprintln!("error: {e}");
            (1, format!("error: {e}"))
        }
    };
    let outputs = result.unwrap_or_default();
    if let Err(e) = write_run_record(&cli, &argv, started, &status, &outputs) {
        eprintln!("warning: could not write run.json: {e}");
    }
    code
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    argv: Vec<String>,
    seed: u64,
    jobs: u16,
    config: &'a Cli,
    plan: Option<BTreeMap<String, String>>,
    started_unix_s: u64,
    finished_unix_s: u64,
    status: &'a str,
    outputs: &'a [PathBuf],
}

fn write_run_record(cli: &Cli, argv: &[OsString], started: u64, status: &str, outputs: &[PathBuf]) -> Result<(), BoxError> {
    fs::create_dir_all(&cli.out)?;
    let record = RunRecord {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        seed: cli.seed,
        jobs: cli.jobs,
        config: cli,
        plan: cli.plan.as_deref().map(read_plan).transpose().ok().flatten(),
        started_unix_s: started,
        finished_unix_s: now(),
        status,
        outputs,
    };
    fs::write(cli.out.join("run.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>, BoxError> {
    let plan = cli.plan.as_deref().map(read_plan).transpose()?.unwrap_or_default();
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Mfcc(a) => mfcc(cli, a),
        Command::SweepLayers(a) => sweep_layers(cli, a, &plan),
        Command::SweepPca(a) => sweep_pca(cli, a, &plan),
        Command::Report(a) => {
            let report = SweepReport::load_json(&a.input)?;
            Ok(render_report(&report, &cli.out)?)
        }
        Command::Validate(a) => validate(a),
    }
}

/// Reads `key=value` pairs, several per line allowed, `#` starts a comment.
pub fn read_plan(path: &Path) -> Result<BTreeMap<String, String>, BoxError> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("plan {}: {e}", path.display())))?;
    parse_plan(&text).map_err(|e| UsageError(format!("plan {}: {e}", path.display())).into())
}

pub fn parse_plan(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for token in line.split_whitespace() {
            let (k, v) = token.split_once('=').ok_or_else(|| format!("line {}: expected key=value, got '{token}'", n + 1))?;
            if !PLAN_KEYS.contains(&k) {
                return Err(format!("line {}: unknown key '{k}'", n + 1));
            }
            out.insert(k.to_string(), v.to_string());
        }
    }
    Ok(out)
}

const PLAN_KEYS: [&str; 10] =
    ["task", "models", "layers", "best_layers", "ks", "max_epochs", "patience", "batch_size", "learning_rate", "baseline"];

fn usage(msg: impl Into<String>) -> BoxError {
    Box::new(UsageError(msg.into()))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, BoxError>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|x| x.trim().parse::<T>().map_err(|e| usage(format!("{what} '{x}': {e}")))).collect()
}

/// `a-b` inclusive or a comma list.
fn parse_int_range(s: &str, what: &str) -> Result<Vec<i32>, BoxError> {
    match s.split_once('-') {
        Some((a, b)) if !a.is_empty() => {
            let a: i32 = a.trim().parse().map_err(|_| usage(format!("{what} '{s}'")))?;
            let b: i32 = b.trim().parse().map_err(|_| usage(format!("{what} '{s}'")))?;
            if a > b {
                return Err(usage(format!("{what} '{s}' is empty")));
            }
            Ok((a..=b).collect())
        }
        _ => parse_list(s, what),
    }
}

fn pick<'a>(flag: &'a Option<String>, plan: &'a BTreeMap<String, String>, key: &str) -> Option<&'a str> {
    flag.as_deref().or_else(|| plan.get(key).map(String::as_str))
}

fn parse_opt<T: std::str::FromStr>(flag: Option<T>, plan: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, BoxError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => plan.get(key).map(|v| v.parse::<T>().map_err(|_| usage(format!("plan key {key}: bad value '{v}'")))).transpose(),
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<Vec<PathBuf>, BoxError> {
    let (lo, hi) = a.duration.split_once('-').ok_or_else(|| usage(format!("duration '{}' must be lo-hi", a.duration)))?;
    let ssl_sim = match &a.ssl_model {
        Some(m) => Some(SslSim::new(m.parse::<ModelId>().map_err(usage)?, a.decay)),
        None => None,
    };
    let spec = SynthSpec {
        dataset_name: a.name.clone(),
        n_speakers: a.speakers,
        utterances_per_speaker: a.utterances,
        ages: parse_int_range(&a.ages, "ages")?,
        duration_s: (lo.parse().map_err(|_| usage("bad duration"))?, hi.parse().map_err(|_| usage("bad duration"))?),
        test_fraction: a.test_fraction,
        seed: cli.seed,
        ssl_sim,
        ..SynthSpec::default()
    };
    let manifest = generate_corpus(&spec, &cli.out)?;
    let mut outputs = vec![cli.out.join(crate::synth::MANIFEST_FILE), cli.out.join("wav")];
    if spec.ssl_sim.is_some() {
        let dir = cli.out.join("features");
        let n = generate_pseudo_ssl(&spec, &manifest, &dir)?;
        log::info!("wrote {n} pseudo-SSL feature files to {}", dir.display());
        outputs.push(dir);
    }
    fs::write(cli.out.join("synth_spec.json"), serde_json::to_string_pretty(&spec)?)?;
    Ok(outputs)
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn mfcc(cli: &Cli, a: &MfccArgs) -> Result<Vec<PathBuf>, BoxError> {
    let manifest = load_manifest(&a.manifest)?;
    fs::create_dir_all(&cli.out)?;
    let mats = mfcc_for_manifest(&manifest, &manifest_root(&a.manifest), &MfccConfig::default())?;
    let mut outputs = Vec::with_capacity(mats.len());
    for m in &mats {
        outputs.push(write_features(m, &cli.out)?);
    }
    log::info!("wrote {} MFCC files to {}", outputs.len(), cli.out.display());
    Ok(outputs)
}

fn base_plan(cli: &Cli, task: Option<&str>, train: &TrainArgs, plan: &BTreeMap<String, String>) -> Result<SweepPlan, BoxError> {
    let task: Task = task.ok_or_else(|| usage("--task is required (age or gender)"))?.parse().map_err(usage)?;
    let mut p = SweepPlan::new(task);
    p.seed = cli.seed;
    p.jobs = cli.jobs as usize;
    if let Some(v) = parse_opt(train.max_epochs, plan, "max_epochs")? {
        p.train.max_epochs = v;
    }
    if let Some(v) = parse_opt(train.patience, plan, "patience")? {
        p.train.patience = v;
    }
    if let Some(v) = parse_opt(train.batch_size, plan, "batch_size")? {
        p.train.batch_size = v;
    }
    if let Some(v) = parse_opt(train.learning_rate, plan, "learning_rate")? {
        p.train.learning_rate = v;
    }
    let plan_baseline: Option<bool> = parse_opt(None, plan, "baseline")?;
    p.include_mfcc = !train.no_baseline && plan_baseline.unwrap_or(true);
    if p.train.patience >= p.train.max_epochs {
        p.train.patience = p.train.max_epochs.saturating_sub(1).max(1);
    }
    Ok(p)
}

fn finish_report(cli: &Cli, report: &SweepReport) -> Result<Vec<PathBuf>, BoxError> {
    fs::create_dir_all(&cli.out)?;
    let json = cli.out.join("report.json");
    report.save_json(&json)?;
    let mut outputs = vec![json];
    outputs.extend(render_report(report, &cli.out)?);
    for model in report.models() {
        if let Some(best) = report.best_row(model) {
            log::info!(
                "{model}: best layer {:?} k {:?} accuracy {:.4}",
                best.layer,
                best.k,
                best.accuracy().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(outputs)
}

fn load_checked_manifest(path: &Path) -> Result<DatasetManifest, BoxError> {
    let m = load_manifest(path)?;
    m.validate()?;
    Ok(m)
}

fn sweep_layers(cli: &Cli, a: &SweepLayersArgs, plan: &BTreeMap<String, String>) -> Result<Vec<PathBuf>, BoxError> {
    let manifest = load_checked_manifest(&a.manifest)?;
    let mut p = base_plan(cli, pick(&a.task, plan, "task"), &a.train, plan)?;
    let models: Vec<ModelId> = parse_list(pick(&a.models, plan, "models").ok_or_else(|| usage("--models is required"))?, "model")?;
    let layers: Option<Vec<i16>> = pick(&a.layers, plan, "layers")
        .map(|s| parse_int_range(s, "layers").map(|v| v.into_iter().map(|l| l as i16).collect()))
        .transpose()?;
    for m in models {
        p.systems.push(match &layers {
            Some(l) => SystemSpec { model: m, layers: l.clone() },
            None => SystemSpec::all_layers(m),
        });
    }
    let report = run_layer_sweep(&manifest, &DiskStore::new(&a.features), &p)?;
    finish_report(cli, &report)
}

fn sweep_pca(cli: &Cli, a: &SweepPcaArgs, plan: &BTreeMap<String, String>) -> Result<Vec<PathBuf>, BoxError> {
    let manifest = load_checked_manifest(&a.manifest)?;
    let mut p = base_plan(cli, pick(&a.task, plan, "task"), &a.train, plan)?;
    let best = pick(&a.best_layers, plan, "best_layers").ok_or_else(|| usage("--best-layers is required (model:layer,...)"))?;
    let mut best_layers = Vec::new();
    for item in best.split(',') {
        let (m, l) = item.split_once(':').ok_or_else(|| usage(format!("best layer '{item}' must be model:layer")))?;
        best_layers.push((m.parse::<ModelId>().map_err(usage)?, l.parse::<i16>().map_err(|_| usage(format!("layer '{l}'")))?));
    }
    let ks = pick(&a.ks, plan, "ks").map(|s| parse_list::<usize>(s, "k")).transpose()?;
    p.pca = Some(PcaPlan { best_layers, ks });
    let report = run_pca_sweep(&manifest, &DiskStore::new(&a.features), &p)?;
    finish_report(cli, &report)
}

fn validate(a: &ValidateArgs) -> Result<Vec<PathBuf>, BoxError> {
    let manifest = load_checked_manifest(&a.manifest)?;
    print!("{}", summarize(&manifest));
    let Some(dir) = &a.features else {
        return Ok(Vec::new());
    };
    let mut sources = vec![(Source::Mfcc, -1i16)];
    if let Some(models) = &a.models {
        for m in parse_list::<ModelId>(models, "model")? {
            sources.extend((0..m.spec().n_layers as i16).map(|l| (Source::Ssl(m), l)));
        }
    }
    for (source, layer) in sources {
        let handles = scan_store(dir, &manifest, StoreFilter { source, layer, split: None })?;
        for h in &handles {
            read_features(&h.path)?;
        }
        println!("{source}\tL{layer}\t{} files ok", handles.len());
    }
    Ok(Vec::new())
}
