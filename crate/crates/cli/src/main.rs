use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use lifelong_hash::data::{make_split, Bundle, HyperParams};
use lifelong_hash::experiments::{
    ablation_runner, default_axis_values, forgetting_protocol, sensitivity_sweep, timing_bench, write_ablation_csv,
    write_forgetting_csv, write_sweep_csv, write_timing_csv, SplitConfig, SweepGrid, SweepMode, TimingConfig, Variant,
};
use lifelong_hash::lifelong::{train_lifelong, write_lifelong_trace};
use lifelong_hash::model::{prepare_output_dir, DatabaseScope, HashModel, QueryScope, Task};
use lifelong_hash::original::{train_original, write_original_trace, TrainingSet};
use lifelong_hash::retrieval::write_pr_csv;
use lifelong_hash::synth::{generate, SynthConfig};
use lifelong_hash::Error;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "lhash", version, about = "Lifelong cross-modal hashing: data, training, evaluation and experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Overwrite non-empty output directories.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file of hyperparameters (flat, HyperParams field names).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named loss-weight preset, applied before the config file.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Worker threads for experiment cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bundle.
    Synth(SynthArgs),
    /// Train the label network, both hash networks and the original codes.
    TrainOriginal(TrainOriginalArgs),
    /// Learn codes for the incremental classes with the original codes frozen.
    TrainLifelong(TrainLifelongArgs),
    /// Cross-modal retrieval metrics of a model.
    Eval(EvalArgs),
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 128)]
    d_img: usize,
    #[arg(long, default_value_t = 64)]
    d_txt: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Label cardinality table, e.g. `1:0.5,2:0.3,3:0.2`.
    #[arg(long)]
    cardinality: Option<String>,
    #[arg(long)]
    co_occurrence: Option<f64>,
}

#[derive(Args)]
struct SplitArgs {
    /// Number of trailing classes held back for the lifelong phase.
    #[arg(long, default_value_t = 1)]
    incremental_classes: usize,
    #[arg(long, default_value_t = 0.1)]
    query_fraction: f64,
}

#[derive(Args)]
struct TrainOriginalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = ["16", "32", "48", "64"])]
    k: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct TrainLifelongArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    a1: Option<usize>,
    #[arg(long)]
    a2: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    I2t,
    T2i,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum QueryArg {
    All,
    Original,
    Incremental,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatabaseArg {
    All,
    Original,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Both)]
    task: TaskArg,
    #[arg(long, default_value_t = 2)]
    radius: u32,
    #[arg(long, value_enum, default_value_t = QueryArg::All)]
    queries: QueryArg,
    #[arg(long, value_enum, default_value_t = DatabaseArg::All)]
    database: DatabaseArg,
    /// JSON report; a `<stem>_<task>_pr.csv` curve is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Experiment {
    /// MAP on original-class queries before and after each lifelong stage.
    Forgetting(ForgettingArgs),
    /// Full model against variants with one loss term or setting removed.
    Ablation(AblationArgs),
    /// Lifelong update time against retraining from scratch.
    Timing(TimingArgs),
    /// MAP over a grid of loss weights.
    Sensitivity(SensitivityArgs),
}

#[derive(Args)]
struct ForgettingArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Classes added per stage, e.g. `1,1,1`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    schedule: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    query_fraction: f64,
}

#[derive(Args)]
struct AblationArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "intra,inter,quant,O,I,Q,B")]
    variants: Vec<String>,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000")]
    sizes: Vec<usize>,
    /// Original items per incremental item.
    #[arg(long, default_value_t = 4)]
    ratio: usize,
    /// Count sampling and similarity setup in the lifelong time.
    #[arg(long)]
    include_setup: bool,
}

#[derive(Args)]
struct SensitivityArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "alpha,beta,gamma,lambda,mu")]
    params: Vec<String>,
    /// Values for every axis; defaults to 1e-2 through 1e5 in steps of 10.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Full factorial grid instead of one axis at a time.
    #[arg(long)]
    factorial: bool,
    #[command(flatten)]
    split: SplitArgs,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<Value, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.global.json;
    match run(cli) {
        Ok(summary) => {
            if json {
                let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (code, kind, reason) = match f {
                Failure::Usage(m) => (1, "usage", m),
                Failure::Lib(e) if e.is_numerical() => (3, "numerical", e.to_string()),
                Failure::Lib(e @ Error::Config(_)) => (2, "config", e.to_string()),
                Failure::Lib(e) => (2, "data", e.to_string()),
            };
            eprintln!("error[{kind}]: {}", reason.replace('\n', " "));
            if json {
                let _ = writeln!(std::io::stdout().lock(), "{}", json!({ "schema_version": SCHEMA_VERSION, "status": "error", "kind": kind, "reason": reason }));
            }
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Synth(a) => synth(g, a),
        Command::TrainOriginal(a) => train_original_cmd(g, a),
        Command::TrainLifelong(a) => train_lifelong_cmd(g, a),
        Command::Eval(a) => eval(a),
        Command::Experiment(Experiment::Forgetting(a)) => forgetting(g, a),
        Command::Experiment(Experiment::Ablation(a)) => ablation(g, a),
        Command::Experiment(Experiment::Timing(a)) => timing(g, a),
        Command::Experiment(Experiment::Sensitivity(a)) => sensitivity(g, a),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Lib(Error::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).unwrap_or_default();
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn csv<F>(path: &Path, write: F) -> Result<(), Failure>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| io_err(path, e))?;
    write_file(path, &buf)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn summary(command: &str, fields: Value) -> Value {
    let mut out = Map::new();
    out.insert("schema_version".into(), json!(SCHEMA_VERSION));
    out.insert("command".into(), json!(command));
    out.insert("status".into(), json!("ok"));
    if let Value::Object(f) = fields {
        out.extend(f);
    }
    Value::Object(out)
}

/// Effective hyperparameters: `base`, then the preset, then the config
/// file, then command-line overrides.
fn resolve_hyper(g: &Global, base: HyperParams, overrides: &[(&str, Option<Value>)]) -> Result<HyperParams, Failure> {
    let mut value = to_value(&base);
    let obj = value.as_object_mut().expect("hyperparameters serialize to an object");
    if let Some(name) = &g.preset {
        let p = to_value(&HyperParams::preset(name)?);
        for key in ["alpha", "beta", "gamma", "lambda", "mu"] {
            obj.insert(key.into(), p[key].clone());
        }
    }
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(file) = file else {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())).into());
        };
        obj.extend(file);
    }
    if let Some(seed) = g.seed {
        obj.insert("seed".into(), json!(seed));
    }
    for (key, v) in overrides {
        if let Some(v) = v {
            obj.insert((*key).into(), v.clone());
        }
    }
    Ok(HyperParams::from_json(&value.to_string())?)
}

fn parse_cardinality(text: &str) -> Result<BTreeMap<usize, f64>, Failure> {
    text.split(',')
        .map(|pair| {
            let (c, p) = pair
                .split_once(':')
                .ok_or_else(|| Failure::Usage(format!("cardinality entry '{pair}' is not size:probability")))?;
            let c = c.trim().parse().map_err(|_| Failure::Usage(format!("bad cardinality size '{c}'")))?;
            let p = p.trim().parse().map_err(|_| Failure::Usage(format!("bad cardinality probability '{p}'")))?;
            Ok((c, p))
        })
        .collect()
}

fn synth(g: &Global, a: &SynthArgs) -> Outcome {
    let mut cfg = SynthConfig {
        classes: a.classes,
        per_class: a.per_class,
        d_img: a.d_img,
        d_txt: a.d_txt,
        noise_sigma: a.noise,
        seed: g.seed.unwrap_or(0),
        ..SynthConfig::default()
    };
    if let Some(t) = &a.cardinality {
        cfg.label_cardinality_probs = parse_cardinality(t)?;
    }
    if let Some(c) = a.co_occurrence {
        cfg.co_occurrence = c;
    }
    let bundle = generate(&cfg)?;
    prepare_output_dir(&a.out, g.force)?;
    bundle.save(&a.out)?;
    Ok(summary(
        "synth",
        json!({ "out": a.out, "count": bundle.len(), "classes": bundle.labels.classes(), "config": to_value(&cfg) }),
    ))
}

fn load_bundle(dir: &Path) -> Result<Bundle, Failure> {
    Ok(Bundle::load(dir)?)
}

fn train_original_cmd(g: &Global, a: &TrainOriginalArgs) -> Outcome {
    let bundle = load_bundle(&a.data)?;
    let k = a.k.as_ref().map(|k| json!(k.parse::<usize>().unwrap_or(16)));
    let hp = resolve_hyper(g, HyperParams::default(), &[("k", k), ("epochs_original", a.epochs.map(|e| json!(e)))])?;
    let split = make_split(&bundle.labels, a.split.incremental_classes, a.split.query_fraction, hp.seed)?;
    let original = train_original(&TrainingSet::from_bundle(&bundle, &split.original_indices), &hp)?;
    let trace = original.trace.clone();
    let model = HashModel::from_original(original, split, hp.clone());
    model.save(&a.out, g.force)?;
    let trace_path = a.out.join("trace_original.csv");
    csv(&trace_path, |w| write_original_trace(w, &trace))?;
    let maps = task_maps(&model, &bundle, QueryScope::OriginalClasses, DatabaseScope::Original)?;
    Ok(summary(
        "train-original",
        json!({
            "out": a.out,
            "m": model.bx.rows(),
            "final_objective": trace.last().map(|r| r.total),
            "map_original_classes": maps,
            "hyper": to_value(&hp),
        }),
    ))
}

fn task_maps(model: &HashModel, bundle: &Bundle, q: QueryScope, db: DatabaseScope) -> Result<Value, Failure> {
    let mut out = Map::new();
    for task in [Task::I2t, Task::T2i] {
        let r = model.evaluate(bundle, task, q, db, 2)?;
        out.insert(task.to_string(), json!(r.report.map));
    }
    Ok(Value::Object(out))
}

fn train_lifelong_cmd(g: &Global, a: &TrainLifelongArgs) -> Outcome {
    let bundle = load_bundle(&a.data)?;
    let model = HashModel::load(&a.model)?;
    if model.meta.lifelong.is_some() {
        return Err(Error::Config(format!("{} already holds a lifelong model", a.model.display())).into());
    }
    let hp = resolve_hyper(
        g,
        model.meta.hyper.clone(),
        &[
            ("a1", a.a1.map(|v| json!(v))),
            ("a2", a.a2.map(|v| json!(v))),
            ("epochs_lifelong", a.epochs.map(|e| json!(e))),
        ],
    )?;
    if hp.k != model.meta.k {
        return Err(Error::Config(format!("k = {} differs from the model's k = {}", hp.k, model.meta.k)).into());
    }
    let lifelong = train_lifelong(&bundle, &model.meta.split, &model.original(), &hp)?;
    let trace = lifelong.trace.clone();
    let checksums = json!({ "before": lifelong.frozen_checksum_before, "after": lifelong.frozen_checksum_after });
    let updated = model.with_lifelong(lifelong, hp.clone());
    updated.save(&a.out, g.force)?;
    let trace_path = a.out.join("trace_lifelong.csv");
    csv(&trace_path, |w| write_lifelong_trace(w, &trace))?;
    Ok(summary(
        "train-lifelong",
        json!({
            "out": a.out,
            "n": updated.incremental.as_ref().map(|c| c.0.rows()),
            "final_objective": trace.last().map(|r| r.total),
            "frozen_checksums": checksums,
            "map_all": task_maps(&updated, &bundle, QueryScope::All, DatabaseScope::All)?,
            "hyper": to_value(&hp),
        }),
    ))
}

fn eval(a: &EvalArgs) -> Outcome {
    let bundle = load_bundle(&a.data)?;
    let model = HashModel::load(&a.model)?;
    let tasks: &[Task] = match a.task {
        TaskArg::I2t => &[Task::I2t],
        TaskArg::T2i => &[Task::T2i],
        TaskArg::Both => &[Task::I2t, Task::T2i],
    };
    let queries = match a.queries {
        QueryArg::All => QueryScope::All,
        QueryArg::Original => QueryScope::OriginalClasses,
        QueryArg::Incremental => QueryScope::IncrementalClasses,
    };
    let database = match a.database {
        DatabaseArg::All => DatabaseScope::All,
        DatabaseArg::Original => DatabaseScope::Original,
    };
    let mut reports = Vec::new();
    for &task in tasks {
        let r = model.evaluate(&bundle, task, queries, database, a.radius)?;
        if let Some(out) = &a.out {
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("eval");
            let pr = out.with_file_name(format!("{stem}_{task}_pr.csv"));
            csv(&pr, |w| write_pr_csv(w, &r.report.pr_curve))?;
        }
        reports.push(r);
    }
    let maps: Map<String, Value> = reports.iter().map(|r| (r.task.to_string(), json!(r.report.map))).collect();
    let body = json!({
        "schema_version": SCHEMA_VERSION,
        "hyper": to_value(&model.meta.hyper),
        "reports": to_value(&reports),
    });
    if let Some(out) = &a.out {
        write_json(out, &body)?;
    }
    Ok(summary("eval", json!({ "map": maps, "radius": a.radius, "out": a.out })))
}

fn experiment_out(g: &Global, dir: &Path) -> Result<(), Failure> {
    Ok(prepare_output_dir(dir, g.force)?)
}

fn forgetting(g: &Global, a: &ForgettingArgs) -> Outcome {
    let bundle = load_bundle(&a.data)?;
    let hp = resolve_hyper(g, HyperParams::default(), &[])?;
    let split = SplitConfig { incremental_classes: a.schedule.iter().sum(), query_fraction: a.query_fraction, seed: hp.seed };
    experiment_out(g, &a.out)?;
    let report = forgetting_protocol(&bundle, &a.schedule, split, &hp)?;
    csv(&a.out.join("forgetting.csv"), |w| write_forgetting_csv(w, &report))?;
    write_json(&a.out.join("forgetting.json"), &to_value(&report))?;
    Ok(summary("experiment forgetting", json!({ "out": a.out, "report": to_value(&report) })))
}

fn ablation(g: &Global, a: &AblationArgs) -> Outcome {
    let bundle = load_bundle(&a.data)?;
    let hp = resolve_hyper(g, HyperParams::default(), &[])?;
    let variants = a.variants.iter().map(|v| Variant::parse(v.trim())).collect::<Result<Vec<_>, _>>()?;
    let split = SplitConfig { incremental_classes: a.split.incremental_classes, query_fraction: a.split.query_fraction, seed: hp.seed };
    experiment_out(g, &a.out)?;
    let report = ablation_runner(&bundle, &hp, &variants, split, g.jobs)?;
    csv(&a.out.join("ablation.csv"), |w| write_ablation_csv(w, &report))?;
    write_json(&a.out.join("ablation.json"), &to_value(&report))?;
    Ok(summary("experiment ablation", json!({ "out": a.out, "report": to_value(&report) })))
}

fn timing(g: &Global, a: &TimingArgs) -> Outcome {
    let hp = resolve_hyper(g, HyperParams::default(), &[])?;
    let cfg = TimingConfig { ratio: a.ratio, seed: hp.seed, include_setup: a.include_setup, ..TimingConfig::default() };
    experiment_out(g, &a.out)?;
    let report = timing_bench(&a.sizes, &hp, cfg)?;
    csv(&a.out.join("timing.csv"), |w| write_timing_csv(w, &report))?;
    write_json(&a.out.join("timing.json"), &to_value(&report))?;
    Ok(summary("experiment timing", json!({ "out": a.out, "report": to_value(&report) })))
}

fn sensitivity(g: &Global, a: &SensitivityArgs) -> Outcome {
    let bundle = load_bundle(&a.data)?;
    let hp = resolve_hyper(g, HyperParams::default(), &[])?;
    let values = a.values.clone().unwrap_or_else(default_axis_values);
    let grid = SweepGrid {
        mode: if a.factorial { SweepMode::Factorial } else { SweepMode::PerAxis },
        axes: a.params.iter().map(|p| (p.trim().to_string(), values.clone())).collect(),
    };
    let split = SplitConfig { incremental_classes: a.split.incremental_classes, query_fraction: a.split.query_fraction, seed: hp.seed };
    experiment_out(g, &a.out)?;
    let report = sensitivity_sweep(&bundle, &hp, &grid, split, g.jobs)?;
    csv(&a.out.join("sensitivity.csv"), |w| write_sweep_csv(w, &report))?;
    write_json(&a.out.join("sensitivity.json"), &to_value(&report))?;
    Ok(summary("experiment sensitivity", json!({ "out": a.out, "report": to_value(&report) })))
}
