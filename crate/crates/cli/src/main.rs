//! `trafficmtl` command line: synthesise or ingest packet logs, label flows,
//! train and evaluate models, run sweeps and check gradients.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::Value;

use trafficmtl::baselines::Task;
use trafficmtl::flow::{self, FlowSample};
use trafficmtl::harness::{self, DividerChoice, EvalSplit, ExperimentConfig, Regime, RunMetadata, SweepAxis};
use trafficmtl::labels::{self, DividerSet, TaskLabels};
use trafficmtl::model::Model;
use trafficmtl::mtl::{self, LambdaSetting, MtlArchitecture, MtlModel, MtlSample};
use trafficmtl::nn::gradcheck;
use trafficmtl::synth;
use trafficmtl::{Error, ErrorCategory};

/// Environment variable naming the default config file.
const CONFIG_ENV: &str = "TRAFFICMTL_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "trafficmtl", version, about = "Multi-task traffic classification")]
struct Cli {
    /// JSON object of flag names to values; command-line flags take precedence.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labelled packet log.
    Synth(SynthArgs),
    /// Segment a packet log into flows.
    Ingest(IngestArgs),
    /// Derive dividers and per-flow task labels.
    Label(LabelArgs),
    /// Train one seed and save a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on labelled flows.
    Evaluate(EvaluateArgs),
    /// Write class predictions for flows.
    Predict(PredictArgs),
    /// Run one experiment per value of an axis.
    Sweep(SweepArgs),
    /// Finite-difference check of every parameter of a small model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Flows per class.
    #[arg(long, default_value_t = 100)]
    flows: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON array of class profiles replacing the built-in ones.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth label sidecar.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = flow::DEFAULT_UDP_TIMEOUT)]
    udp_timeout: f64,
    #[arg(long, default_value_t = 100)]
    min_packets: usize,
    /// Label sidecar (src,dst,sport,dport,proto,label) applied to the flows.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(long)]
    flows: Option<PathBuf>,
    /// Per-flow label table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dividers_out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    labels_per_class: usize,
    /// `auto`, `full`, a divider JSON object, or a path to one.
    #[arg(long, default_value = "auto")]
    dividers: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args, Clone)]
struct ExperimentArgs {
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long, default_value = "mtl")]
    regime: Regime,
    /// Task of the single-task regime.
    #[arg(long, default_value = "traffic")]
    task: Task,
    #[arg(long, default_value_t = 20)]
    labels_per_class: usize,
    #[arg(long, default_value_t = 60)]
    k: usize,
    /// A number or `ratio`.
    #[arg(long, default_value = "1")]
    lambda: LambdaSetting,
    /// `auto`, `full`, a divider JSON object, or a path to one.
    #[arg(long, default_value = "auto")]
    dividers: String,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Epochs for runs over the labelled subset only (single-task traffic,
    /// transfer fine-tuning).
    #[arg(long, default_value_t = 40)]
    finetune_epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = flow::DEFAULT_MAX_LEN)]
    max_len: f64,
    #[arg(long, default_value_t = flow::DEFAULT_MAX_IAT)]
    max_iat: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Leave wall-clock timestamps out of the checkpoint.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    flows: Option<PathBuf>,
    /// `test` re-derives the training run's held-out flows; `all` scores every flow.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    axis: Option<SweepAxis>,
    /// Comma-separated values; divider values are separated by `;`.
    #[arg(long)]
    values: Option<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    seeds: Vec<u64>,
    /// Combined long-format CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 12)]
    k: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

enum Failure {
    Usage(String),
    Core(Error),
    /// The command ran but its check did not pass.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::DataFormat => 3,
        ErrorCategory::ShapeConfig => 4,
        ErrorCategory::Numerical => 5,
        ErrorCategory::Io => 6,
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            let one_line = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {one_line}", e.category().as_str());
            ExitCode::from(exit_code(e.category()))
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error[numerical]: {msg}");
            ExitCode::from(5)
        }
    }
}

fn run(argv: Vec<OsString>) -> CliResult {
    let matches = parse(&argv)?;
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(first_line(&e.to_string())))?;
    let cli = match &cli.config {
        Some(path) => {
            let merged = merge_config(&argv, &matches, path)?;
            let matches = parse(&merged)?;
            Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(first_line(&e.to_string())))?
        }
        None => cli,
    };
    match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Label(a) => label_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    }
}

fn first_line(s: &str) -> String {
    s.lines()
        .next()
        .unwrap_or_default()
        .trim_start_matches("error: ")
        .to_owned()
}

fn parse(argv: &[OsString]) -> CliResult<ArgMatches> {
    match Cli::command().try_get_matches_from(argv) {
        Ok(m) => Ok(m),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                let _ = e.print();
                std::process::exit(0);
            }
            _ => Err(Failure::Usage(first_line(&e.to_string()))),
        },
    }
}

/// Appends `--key value` for every config entry the subcommand accepts and
/// the command line did not set.
fn merge_config(argv: &[OsString], matches: &ArgMatches, path: &Path) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, Value> =
        serde_json::from_str(&text).map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
    let Some((name, sub)) = matches.subcommand() else {
        return Ok(argv.to_vec());
    };
    let command = Cli::command();
    let sub_cmd = command.find_subcommand(name).expect("parsed subcommand exists");
    let mut out = argv.to_vec();
    for (key, value) in map {
        let id = key.replace('-', "_");
        let Some(arg) = sub_cmd
            .get_arguments()
            .find(|a| a.get_id().as_str() == id || a.get_long() == Some(key.as_str()))
        else {
            continue;
        };
        if sub.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        let long = format!("--{}", arg.get_long().unwrap_or(&key));
        let is_flag = matches!(arg.get_action(), clap::ArgAction::SetTrue);
        match value {
            Value::Bool(true) if is_flag => out.push(long.into()),
            Value::Bool(false) if is_flag => {}
            Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(plain).collect();
                out.push(format!("{long}={}", joined.join(",")).into());
            }
            other => out.push(format!("{long}={}", plain(&other)).into()),
        }
    }
    Ok(out)
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Failure::Usage(format!("missing required --{flag}")))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult {
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_flows(path: &Path) -> CliResult<Vec<FlowSample>> {
    Ok(flow::read_flows_jsonl(open(path)?)?)
}

/// `auto`, `full`, inline JSON, or a file holding divider JSON.
fn divider_choice(text: &str) -> CliResult<DividerChoice> {
    let trimmed = text.trim();
    if trimmed == "auto" || trimmed == "full" || trimmed.starts_with('{') {
        return trimmed.parse().map_err(|e: String| Failure::Core(Error::Config(e)));
    }
    let path = Path::new(trimmed);
    let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(DividerChoice::Explicit(DividerSet::from_json(&json)?))
}

fn synth_cmd(a: SynthArgs) -> CliResult {
    let out = required(&a.out, "out")?;
    let profiles = match &a.profiles {
        Some(p) => {
            serde_json::from_reader(open(p)?).map_err(|e| Error::data(p.display().to_string(), e.to_string()))?
        }
        None => synth::default_profiles(a.classes),
    };
    let data = synth::generate_synthetic(&profiles, a.flows, a.seed)?;
    let mut w = create(out)?;
    flow::write_packet_csv(&mut w, &data.packets)?;
    finish(w, out)?;
    if let Some(path) = &a.labels_out {
        let mut w = create(path)?;
        flow::write_label_map(&mut w, &data.labels)?;
        finish(w, path)?;
    }
    println!(
        "wrote {} packets in {} flows ({} classes)",
        data.packets.len(),
        data.labels.len(),
        profiles.len()
    );
    Ok(())
}

fn ingest_cmd(a: IngestArgs) -> CliResult {
    let input = required(&a.input, "in")?;
    let out = required(&a.out, "out")?;
    let (packets, diagnostics) = flow::read_packet_csv(open(input)?)?;
    for d in &diagnostics {
        eprintln!("warning: {}:{}: {}", input.display(), d.line, d.message);
    }
    let mut flows = flow::segment_flows(&packets, a.udp_timeout)?;
    let segmented = flows.len();
    let mut labelled = 0;
    if let Some(path) = &a.labels {
        let map: HashMap<_, _> = flow::read_label_map(open(path)?)?;
        labelled = flow::apply_label_map(&mut flows, &map);
    }
    let flows = flow::filter_min_packets(flows, a.min_packets);
    let mut w = create(out)?;
    flow::write_flows_jsonl(&mut w, &flows)?;
    finish(w, out)?;
    println!(
        "{} packets, {} flows segmented, {} labelled, {} kept with >= {} packets",
        packets.len(),
        segmented,
        labelled,
        flows.len(),
        a.min_packets
    );
    Ok(())
}

fn label_cmd(a: LabelArgs) -> CliResult {
    let flows = read_flows(required(&a.flows, "flows")?)?;
    let selected = labels::select_labeled(&flows, a.labels_per_class, a.seed)?;
    let dividers = match divider_choice(&a.dividers)? {
        DividerChoice::Auto => {
            labels::dividers_from_flows(flows.iter().zip(&selected).filter(|(_, &s)| s).map(|(f, _)| f))?
        }
        DividerChoice::Full => labels::dividers_from_flows(flows.iter())?,
        DividerChoice::Explicit(d) => d,
    };
    if let Some(path) = &a.dividers_out {
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, &dividers).map_err(|e| Error::data("dividers output", e.to_string()))?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
        finish(w, path)?;
    }
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_writer(create(path)?);
        let csv_err = |e: csv::Error| Error::data("label output", e.to_string());
        w.write_record([
            "flow_id",
            "bandwidth",
            "duration",
            "bw_class",
            "dur_class",
            "traffic_label",
            "mask",
        ])
        .map_err(csv_err)?;
        for (f, keep) in flows.iter().zip(&selected) {
            let l = TaskLabels::for_flow(f, &dividers)?;
            w.write_record([
                f.flow_id.to_string(),
                f.bandwidth.to_string(),
                f.duration.to_string(),
                l.y_bw.to_string(),
                l.y_dur.to_string(),
                f.traffic_label.map(|t| t.to_string()).unwrap_or_default(),
                u8::from(*keep).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    println!(
        "bandwidth dividers {:?}, duration dividers {:?}, {} flows, {} labelled",
        dividers.bw_dividers,
        dividers.d_dividers,
        flows.len(),
        selected.iter().filter(|&&s| s).count()
    );
    Ok(())
}

fn experiment_config(a: &ExperimentArgs, seeds: Vec<u64>) -> CliResult<ExperimentConfig> {
    let config = ExperimentConfig {
        dataset: a.flows.as_ref().map(|p| p.display().to_string()),
        regime: a.regime,
        single_task: a.task,
        labeled_per_class: a.labels_per_class,
        k: a.k,
        lambda: a.lambda,
        dividers: divider_choice(&a.dividers)?,
        seeds,
        train_fraction: a.train_fraction,
        epochs: a.epochs,
        finetune_epochs: a.finetune_epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        patience: (a.patience > 0).then_some(a.patience),
        min_delta: ExperimentConfig::default().min_delta,
        max_len: a.max_len,
        max_iat: a.max_iat,
    };
    config.validate()?;
    Ok(config)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::data("json output", e.to_string()))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let flows_path = required(&a.exp.flows, "flows")?;
    let out = required(&a.out, "out")?;
    let config = experiment_config(&a.exp, vec![a.seed])?;
    let flows = read_flows(flows_path)?;
    let run = harness::run_seed(&flows, &config, a.seed)?;

    let mut metadata = run.metadata.to_map();
    if !a.deterministic {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        metadata.insert("created_unix".into(), Value::from(now));
    }
    let mut w = create(out)?;
    run.model.save_json(&mut w, metadata)?;
    finish(w, out)?;

    let report = harness::MetricsReport {
        summary: harness::summarize(std::slice::from_ref(&run.report)),
        runs: vec![run.report],
        config,
    };
    if let Some(path) = &a.metrics {
        let mut w = create(path)?;
        harness::write_metrics_csv(&mut w, &report)?;
        finish(w, path)?;
    }
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    print_summary(&report.summary);
    Ok(())
}

fn print_summary(summary: &BTreeMap<String, harness::AccuracySummary>) {
    for (task, s) in summary {
        println!("{task}: accuracy {:.4} (min {:.4}, max {:.4})", s.mean, s.min, s.max);
    }
}

fn load_model(path: &Path) -> CliResult<(Model, BTreeMap<String, Value>)> {
    Ok(Model::load_json(open(path)?)?)
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let (model, meta) = load_model(required(&a.model, "model")?)?;
    let meta = RunMetadata::from_map(&meta)?;
    let flows = read_flows(required(&a.flows, "flows")?)?;
    let split = match a.split.as_str() {
        "test" => EvalSplit::Test,
        "all" => EvalSplit::All,
        other => return Err(Failure::Usage(format!("--split must be test or all, got '{other}'"))),
    };
    let (rows, tasks) = harness::evaluate_checkpoint(&model, &meta, &flows, split)?;
    if let Some(path) = &a.metrics {
        let mut w = create(path)?;
        harness::write_task_metrics_csv(&mut w, meta.regime, &[(meta.seed, &tasks)])?;
        finish(w, path)?;
    }
    if let Some(path) = &a.predictions {
        let mut w = create(path)?;
        harness::write_predictions_csv(&mut w, &rows)?;
        finish(w, path)?;
    }
    for (task, m) in &tasks {
        println!("{task}: accuracy {:.4} ({}/{})", m.accuracy, m.correct, m.total);
    }
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> CliResult {
    let (model, meta) = load_model(required(&a.model, "model")?)?;
    let meta = RunMetadata::from_map(&meta)?;
    let out = required(&a.out, "out")?;
    let flows = read_flows(required(&a.flows, "flows")?)?;
    let features = meta.feature_config();
    let inputs = flows
        .iter()
        .map(|f| Ok((f.flow_id, flow::extract_features(f, &features)?.to_input())))
        .collect::<trafficmtl::Result<Vec<_>>>()?;
    let rows = harness::predict_rows(
        &model,
        inputs.iter().map(|(id, x)| (*id, x.as_slice())),
        meta.dividers.dur_classes(),
    )?;
    let mut w = create(out)?;
    harness::write_predictions_csv(&mut w, &rows)?;
    finish(w, out)?;
    println!("wrote {} predictions", rows.len());
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> CliResult {
    let flows_path = required(&a.exp.flows, "flows")?;
    let axis = a.axis.ok_or_else(|| Failure::Usage("missing required --axis".into()))?;
    let values = a
        .values
        .as_deref()
        .ok_or_else(|| Failure::Usage("missing required --values".into()))?;
    let sep = if axis == SweepAxis::Dividers { ';' } else { ',' };
    let values: Vec<String> = values
        .split(sep)
        .map(|v| v.trim().to_owned())
        .filter(|v| !v.is_empty())
        .collect();
    let base = experiment_config(&a.exp, a.seeds.clone())?;
    let flows = read_flows(flows_path)?;
    let outcome = harness::sweep(&flows, &base, axis, &values)?;
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        harness::write_sweep_csv(&mut w, &outcome)?;
        finish(w, path)?;
    }
    if let Some(path) = &a.report {
        write_json(path, &outcome)?;
    }
    for cell in &outcome.cells {
        match (&cell.report, &cell.error) {
            (Some(r), _) => {
                let acc = r.accuracy(mtl::HEAD_TRAFFIC).map_or("-".into(), |v| format!("{v:.4}"));
                println!("{axis}={}: traffic accuracy {acc}", cell.value);
            }
            (None, Some(e)) => println!("{axis}={}: failed: {e}", cell.value),
            (None, None) => {}
        }
    }
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> CliResult {
    use rand::{Rng, SeedableRng};

    let arch = MtlArchitecture::with_trunk(a.k, mtl::small_trunk(), 5, 5, 5)?;
    let model = MtlModel::new(arch.clone(), a.seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed ^ 0xa5a5);
    let samples: Vec<MtlSample> = (0..a.batch.max(1))
        .map(|i| MtlSample {
            flow_id: i as u64,
            input: (0..2 * a.k)
                .map(|j| {
                    if j % 2 == 0 {
                        rng.random_range(0.0..1.0)
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect(),
            labels: TaskLabels {
                y_bw: rng.random_range(1..=5),
                y_dur: rng.random_range(1..=5),
                // every other sample is masked
                y_traffic: (i % 2 == 0).then(|| rng.random_range(1..=5)),
            },
        })
        .collect();
    let examples = samples
        .iter()
        .map(|s| mtl::to_example(s, &arch, a.lambda))
        .collect::<trafficmtl::Result<Vec<_>>>()?;
    let refs: Vec<_> = examples.iter().collect();
    let report = gradcheck::check_gradients(model.model.network(), model.model.params(), &refs, a.step, a.tol)?;
    for g in &report.groups {
        let status = if g.failed == 0 { "ok" } else { "FAIL" };
        println!(
            "{:<24} {:>6} params  max rel err {:.3e}  {status}",
            g.name, g.checked, g.max_rel_error
        );
    }
    println!(
        "{}: {} parameters, max relative error {:.3e}, tolerance {:.0e}",
        if report.passed() { "PASS" } else { "FAIL" },
        report.checked,
        report.max_rel_error,
        report.tolerance
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "{} parameters exceed tolerance {}",
            report.failures.len(),
            a.tol
        )))
    }
}
