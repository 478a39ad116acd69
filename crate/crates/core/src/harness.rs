//! Seeded experiments over a labelled flow set, and sweeps over one axis.
//!
//! For every seed: a stratified train/test split, a traffic-label mask on the
//! training flows only, divider derivation (from the labelled training subset
//! unless fixed dividers are given), training under the chosen regime and
//! evaluation on the held-out flows. Data preparation never depends on the
//! regime, so the three regimes see identical inputs and labels for a seed;
//! each run records a fingerprint of them to make that checkable.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{self, split_joint_label, Task, TransferConfig, HEAD_JOINT};
use crate::error::{Error, Result};
use crate::flow::{extract_features, FeatureConfig, FlowSample, DEFAULT_MAX_IAT, DEFAULT_MAX_LEN};
use crate::labels::{dividers_from_flows, select_labeled, DividerSet, TaskLabels};
use crate::model::{argmax, Model};
use crate::mtl::{
    self, LambdaSetting, MtlArchitecture, MtlModel, MtlSample, HEAD_BANDWIDTH, HEAD_DURATION, HEAD_TRAFFIC,
};
use crate::nn::{AdamConfig, EpochStats, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Mtl,
    Single,
    Transfer,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Mtl => "mtl",
            Regime::Single => "single",
            Regime::Transfer => "transfer",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mtl" => Ok(Regime::Mtl),
            "single" => Ok(Regime::Single),
            "transfer" => Ok(Regime::Transfer),
            other => Err(format!("unknown regime '{other}' (expected mtl, single or transfer)")),
        }
    }
}

/// Where bandwidth/duration dividers come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DividerChoice {
    /// Class means of the labelled training subset.
    Auto,
    /// Class means of every training flow (uses traffic labels the model never sees).
    Full,
    Explicit(DividerSet),
}

impl Serialize for DividerChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DividerChoice::Auto => s.serialize_str("auto"),
            DividerChoice::Full => s.serialize_str("full"),
            DividerChoice::Explicit(d) => d.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for DividerChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Set(DividerSet),
        }
        match Repr::deserialize(d)? {
            Repr::Name(n) => n.parse().map_err(serde::de::Error::custom),
            Repr::Set(s) => {
                s.validate().map_err(serde::de::Error::custom)?;
                Ok(DividerChoice::Explicit(s))
            }
        }
    }
}

impl FromStr for DividerChoice {
    type Err = String;

    /// `auto`, `full`, or a divider JSON object.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "auto" => Ok(DividerChoice::Auto),
            "full" => Ok(DividerChoice::Full),
            text => DividerSet::from_json(text)
                .map(DividerChoice::Explicit)
                .map_err(|e| format!("dividers must be auto, full or a JSON object: {e}")),
        }
    }
}

impl fmt::Display for DividerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DividerChoice::Auto => f.write_str("auto"),
            DividerChoice::Full => f.write_str("full"),
            DividerChoice::Explicit(d) => f.write_str(&serde_json::to_string(d).map_err(|_| fmt::Error)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Echoed into reports; the harness itself takes flows in memory.
    pub dataset: Option<String>,
    pub regime: Regime,
    /// Task trained by the single-task regime.
    pub single_task: Task,
    pub labeled_per_class: usize,
    pub k: usize,
    pub lambda: LambdaSetting,
    pub dividers: DividerChoice,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    /// Epoch budget for runs over the full training set.
    pub epochs: usize,
    /// Epoch budget for runs over the labelled subset only (single-task
    /// traffic and transfer fine-tuning).
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: Option<usize>,
    pub min_delta: f64,
    pub max_len: f64,
    pub max_iat: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            regime: Regime::Mtl,
            single_task: Task::Traffic,
            labeled_per_class: 20,
            k: 60,
            lambda: LambdaSetting::Fixed(1.0),
            dividers: DividerChoice::Auto,
            seeds: vec![1, 2, 3],
            train_fraction: 0.8,
            epochs: 40,
            finetune_epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
            patience: Some(5),
            min_delta: 1e-3,
            max_len: DEFAULT_MAX_LEN,
            max_iat: DEFAULT_MAX_IAT,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.labeled_per_class == 0 {
            return Err(Error::Config("labeled_per_class must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.max_len > 0.0) || !(self.max_iat > 0.0) {
            return Err(Error::Config(
                "learning rate, max_len and max_iat must be positive".into(),
            ));
        }
        if let LambdaSetting::Fixed(l) = self.lambda {
            LambdaSetting::Fixed(l).resolve(1, 1)?;
        }
        // shape rules are checked before any data is touched
        MtlArchitecture::standard(self.k, 2, 2, 2)?;
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            k: self.k,
            max_len: self.max_len,
            max_iat: self.max_iat,
        }
    }

    pub fn train_config(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch_size,
            seed,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            patience: self.patience,
            min_delta: self.min_delta,
        }
    }
}

/// Independent sub-seed for one purpose, derived from a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_SPLIT: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_SHUFFLE: u64 = 4;

/// Number of traffic classes, requiring every flow to carry a label in 1..=C
/// with no class missing.
pub fn traffic_classes(flows: &[FlowSample]) -> Result<usize> {
    let mut seen = BTreeMap::new();
    for f in flows {
        let label = f
            .traffic_label
            .ok_or_else(|| Error::data("flows", format!("flow {} has no traffic label", f.flow_id)))?;
        *seen.entry(label).or_insert(0usize) += 1;
    }
    let classes = seen.len();
    if classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 traffic classes, found {classes}"
        )));
    }
    if seen.keys().copied().ne(1..=classes as u32) {
        return Err(Error::data(
            "flows",
            format!(
                "traffic labels must be 1..={classes}, found {:?}",
                seen.keys().collect::<Vec<_>>()
            ),
        ));
    }
    Ok(classes)
}

/// Stratified split: in every class a seeded shuffle sends
/// `round(fraction · n)` flows to training (at least one to each side when the
/// class has two or more flows). Returns sorted index lists.
pub fn split_indices(flows: &[FlowSample], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<Option<u32>, Vec<usize>> = BTreeMap::new();
    for (i, f) in flows.iter().enumerate() {
        by_class.entry(f.traffic_label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let mut n_train = (fraction * n as f64).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        }
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Inputs and labels for one seed, identical across regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Vec<MtlSample>,
    /// Test samples keep their true traffic label.
    pub test: Vec<MtlSample>,
    pub dividers: DividerSet,
    pub n_traffic: usize,
    pub fingerprint: String,
}

impl PreparedData {
    pub fn n_labelled(&self) -> usize {
        self.train.iter().filter(|s| s.labels.y_traffic.is_some()).count()
    }

    pub fn architecture(&self, k: usize) -> Result<MtlArchitecture> {
        MtlArchitecture::standard(
            k,
            self.dividers.bw_classes(),
            self.dividers.dur_classes(),
            self.n_traffic,
        )
    }
}

pub fn prepare_data(flows: &[FlowSample], config: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    config.validate()?;
    let n_traffic = traffic_classes(flows)?;
    let (train_idx, test_idx) = split_indices(flows, config.train_fraction, derive_seed(seed, STREAM_SPLIT));
    let train_flows: Vec<FlowSample> = train_idx.iter().map(|&i| flows[i].clone()).collect();
    let selected = select_labeled(&train_flows, config.labeled_per_class, derive_seed(seed, STREAM_LABELS))?;

    let dividers = match &config.dividers {
        DividerChoice::Auto => {
            dividers_from_flows(train_flows.iter().zip(&selected).filter(|(_, &s)| s).map(|(f, _)| f))?
        }
        DividerChoice::Full => dividers_from_flows(train_flows.iter())?,
        DividerChoice::Explicit(d) => {
            d.validate()?;
            d.clone()
        }
    };

    let features = config.feature_config();
    let sample = |flow: &FlowSample, traffic: Option<u32>| -> Result<MtlSample> {
        let mut labels = TaskLabels::for_flow(flow, &dividers)?;
        labels.y_traffic = traffic;
        Ok(MtlSample::new(
            flow.flow_id,
            &extract_features(flow, &features)?,
            labels,
        ))
    };
    let train = train_flows
        .iter()
        .zip(&selected)
        .map(|(f, &keep)| sample(f, if keep { f.traffic_label } else { None }))
        .collect::<Result<Vec<_>>>()?;
    let test = labelled_samples(test_idx.iter().map(|&i| &flows[i]), &dividers, &features)?;
    let fingerprint = fingerprint(&train, &test);
    Ok(PreparedData {
        train,
        test,
        dividers,
        n_traffic,
        fingerprint,
    })
}

/// SHA-256 over every input value (bit patterns) and label of both splits.
pub fn fingerprint(train: &[MtlSample], test: &[MtlSample]) -> String {
    let mut h = Sha256::new();
    for (tag, part) in [(b'r', train), (b'e', test)] {
        h.update([tag]);
        h.update((part.len() as u64).to_le_bytes());
        for s in part {
            h.update(s.flow_id.to_le_bytes());
            for v in &s.input {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update(s.labels.y_bw.to_le_bytes());
            h.update(s.labels.y_dur.to_le_bytes());
            h.update(s.labels.y_traffic.map_or(0, |t| t + 1).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub flow_id: u64,
    pub bw_class: Option<u32>,
    pub dur_class: Option<u32>,
    pub traffic_class: Option<u32>,
    pub p_traffic_max: Option<f64>,
}

/// Class predictions from whichever heads `model` has. A joint bandwidth ×
/// duration head is decoded into both classes using `n_dur`.
pub fn predict_rows<'a, I>(model: &Model, inputs: I, n_dur: usize) -> Result<Vec<PredictionRow>>
where
    I: IntoIterator<Item = (u64, &'a [f64])>,
{
    let heads: Vec<String> = model.network().heads().iter().map(|h| h.name.clone()).collect();
    let mut ws = model.workspace();
    inputs
        .into_iter()
        .map(|(flow_id, input)| {
            let probs = model.predict_proba(input, &mut ws)?;
            let mut row = PredictionRow {
                flow_id,
                bw_class: None,
                dur_class: None,
                traffic_class: None,
                p_traffic_max: None,
            };
            for (name, p) in heads.iter().zip(&probs) {
                let best = argmax(p);
                let class = best as u32 + 1;
                match name.as_str() {
                    HEAD_BANDWIDTH => row.bw_class = Some(class),
                    HEAD_DURATION => row.dur_class = Some(class),
                    HEAD_TRAFFIC => {
                        row.traffic_class = Some(class);
                        row.p_traffic_max = Some(p[best]);
                    }
                    HEAD_JOINT => {
                        let (b, d) = split_joint_label(best as u32, n_dur);
                        row.bw_class = Some(b);
                        row.dur_class = Some(d);
                    }
                    _ => {}
                }
            }
            Ok(row)
        })
        .collect()
}

/// `(flow_id, input)` pairs for [`predict_rows`].
pub fn sample_inputs(samples: &[MtlSample]) -> impl Iterator<Item = (u64, &[f64])> {
    samples.iter().map(|s| (s.flow_id, s.input.as_slice()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true − 1][predicted − 1]`
    pub confusion: Vec<Vec<usize>>,
}

fn task_metrics(pairs: impl Iterator<Item = (u32, u32)>, classes: usize) -> TaskMetrics {
    let mut confusion = vec![vec![0usize; classes]; classes];
    let (mut correct, mut total) = (0, 0);
    for (truth, pred) in pairs {
        confusion[truth as usize - 1][pred as usize - 1] += 1;
        total += 1;
        correct += usize::from(truth == pred);
    }
    TaskMetrics {
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        correct,
        total,
        confusion,
    }
}

/// Scores predictions against the samples' labels, for every task the
/// predictions cover.
pub fn score(
    rows: &[PredictionRow],
    samples: &[MtlSample],
    classes: [usize; 3],
) -> Result<BTreeMap<String, TaskMetrics>> {
    if rows.len() != samples.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} samples",
            rows.len(),
            samples.len()
        )));
    }
    let mut out = BTreeMap::new();
    type Pick = (&'static str, fn(&PredictionRow) -> Option<u32>, fn(&MtlSample) -> Option<u32>);
    let pick: [Pick; 3] = [
        (HEAD_BANDWIDTH, |r| r.bw_class, |s| Some(s.labels.y_bw)),
        (HEAD_DURATION, |r| r.dur_class, |s| Some(s.labels.y_dur)),
        (HEAD_TRAFFIC, |r| r.traffic_class, |s| s.labels.y_traffic),
    ];
    for ((name, pred, truth), n) in pick.into_iter().zip(classes) {
        if rows.iter().all(|r| pred(r).is_none()) {
            continue;
        }
        let pairs: Vec<(u32, u32)> = rows
            .iter()
            .zip(samples)
            .filter_map(|(r, s)| Some((truth(s)?, pred(r)?)))
            .collect();
        if let Some(&(t, p)) = pairs
            .iter()
            .find(|(t, p)| *t as usize > n || *p as usize > n || *t == 0 || *p == 0)
        {
            return Err(Error::Shape(format!("{name}: class pair ({t}, {p}) outside 1..={n}")));
        }
        out.insert(name.to_owned(), task_metrics(pairs.into_iter(), n));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHistory {
    pub stage: String,
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub fingerprint: String,
    pub lambda: f64,
    pub dividers: DividerSet,
    pub n_train: usize,
    pub n_test: usize,
    pub n_labelled: usize,
    pub tasks: BTreeMap<String, TaskMetrics>,
    pub history: Vec<StageHistory>,
    pub predictions: Vec<PredictionRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedReport>,
    pub summary: BTreeMap<String, AccuracySummary>,
}

impl MetricsReport {
    pub fn accuracy(&self, task: &str) -> Option<f64> {
        self.summary.get(task).map(|s| s.mean)
    }
}

/// A finished seed: its report and the trained model.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub report: SeedReport,
    pub model: Model,
    pub metadata: RunMetadata,
}

pub fn run_seed(flows: &[FlowSample], config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let data = prepare_data(flows, config, seed)?;
    run_prepared(&data, config, seed)
}

/// Trains and evaluates one seed on already prepared data.
pub fn run_prepared(data: &PreparedData, config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let arch = data.architecture(config.k)?;
    let init_seed = derive_seed(seed, STREAM_INIT);
    let shuffle_seed = derive_seed(seed, STREAM_SHUFFLE);
    let full = config.train_config(config.epochs, shuffle_seed);
    let small = config.train_config(config.finetune_epochs, shuffle_seed);
    let n_labelled = data.n_labelled();

    let mut lambda = 0.0;
    let (model, history) = match config.regime {
        Regime::Mtl => {
            lambda = config.lambda.resolve(data.train.len(), n_labelled)?;
            let mut m = MtlModel::new(arch.clone(), init_seed)?;
            let h = mtl::train(&mut m, &data.train, lambda, &full)?;
            (
                m.model,
                vec![StageHistory {
                    stage: "mtl".into(),
                    epochs: h,
                }],
            )
        }
        Regime::Single => {
            let budget = if config.single_task == Task::Traffic {
                &small
            } else {
                &full
            };
            let (m, h) = baselines::train_single_task(&arch, &data.train, config.single_task, init_seed, budget)?;
            (
                m,
                vec![StageHistory {
                    stage: format!("single-{}", config.single_task),
                    epochs: h,
                }],
            )
        }
        Regime::Transfer => {
            let cfg = TransferConfig {
                pretrain: full,
                finetune: small,
            };
            let out = baselines::train_transfer(&arch, &data.train, init_seed, &cfg)?;
            let history = vec![
                StageHistory {
                    stage: "pretrain".into(),
                    epochs: out.pretrain_history,
                },
                StageHistory {
                    stage: "finetune".into(),
                    epochs: out.finetune_history,
                },
            ];
            (out.model, history)
        }
    };

    let predictions = predict_rows(&model, sample_inputs(&data.test), arch.n_dur)?;
    let tasks = score(&predictions, &data.test, [arch.n_bw, arch.n_dur, arch.n_traffic])?;
    let report = SeedReport {
        seed,
        fingerprint: data.fingerprint.clone(),
        lambda,
        dividers: data.dividers.clone(),
        n_train: data.train.len(),
        n_test: data.test.len(),
        n_labelled,
        tasks,
        history,
        predictions,
    };
    let metadata = RunMetadata::new(config, &report, data.n_traffic);
    Ok(SeedRun {
        report,
        model,
        metadata,
    })
}

pub fn summarize(runs: &[SeedReport]) -> BTreeMap<String, AccuracySummary> {
    let mut by_task: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for (task, m) in &run.tasks {
            by_task.entry(task.clone()).or_default().push(m.accuracy);
        }
    }
    by_task
        .into_iter()
        .map(|(task, acc)| {
            let mean = acc.iter().sum::<f64>() / acc.len() as f64;
            let min = acc.iter().copied().fold(f64::INFINITY, f64::min);
            let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // keep the mean inside [min, max] despite rounding
            (
                task,
                AccuracySummary {
                    mean: mean.clamp(min, max),
                    min,
                    max,
                },
            )
        })
        .collect()
}

pub fn run_experiment(flows: &[FlowSample], config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate()?;
    let runs = config
        .seeds
        .iter()
        .map(|&seed| run_seed(flows, config, seed).map(|r| r.report))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        config: config.clone(),
        summary: summarize(&runs),
        runs,
    })
}

/// Everything needed to rebuild a run's inputs, labels and split from the
/// raw flows; stored in checkpoint metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub regime: Regime,
    pub single_task: Task,
    pub seed: u64,
    pub k: usize,
    pub max_len: f64,
    pub max_iat: f64,
    pub train_fraction: f64,
    pub labeled_per_class: usize,
    pub lambda: f64,
    pub dividers: DividerSet,
    pub n_traffic: usize,
    pub fingerprint: String,
}

impl RunMetadata {
    pub fn new(config: &ExperimentConfig, report: &SeedReport, n_traffic: usize) -> Self {
        RunMetadata {
            regime: config.regime,
            single_task: config.single_task,
            seed: report.seed,
            k: config.k,
            max_len: config.max_len,
            max_iat: config.max_iat,
            train_fraction: config.train_fraction,
            labeled_per_class: config.labeled_per_class,
            lambda: report.lambda,
            dividers: report.dividers.clone(),
            n_traffic,
            fingerprint: report.fingerprint.clone(),
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            k: self.k,
            max_len: self.max_len,
            max_iat: self.max_iat,
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }

    pub fn from_map(map: &BTreeMap<String, serde_json::Value>) -> Result<Self> {
        let value = serde_json::Value::Object(map.clone().into_iter().collect());
        serde_json::from_value(value).map_err(|e| Error::data("checkpoint metadata", e.to_string()))
    }
}

/// Which flows [`evaluate_checkpoint`] scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    /// The held-out flows of the run that produced the checkpoint.
    Test,
    All,
}

/// Samples with true traffic labels for the given flows.
pub fn labelled_samples<'a, I>(flows: I, dividers: &DividerSet, features: &FeatureConfig) -> Result<Vec<MtlSample>>
where
    I: IntoIterator<Item = &'a FlowSample>,
{
    flows
        .into_iter()
        .map(|f| {
            let mut labels = TaskLabels::for_flow(f, dividers)?;
            labels.y_traffic = f.traffic_label;
            Ok(MtlSample::new(f.flow_id, &extract_features(f, features)?, labels))
        })
        .collect()
}

/// Re-derives the run's split from `meta` and scores `model` on it.
pub fn evaluate_checkpoint(
    model: &Model,
    meta: &RunMetadata,
    flows: &[FlowSample],
    split: EvalSplit,
) -> Result<(Vec<PredictionRow>, BTreeMap<String, TaskMetrics>)> {
    let n_traffic = traffic_classes(flows)?;
    if n_traffic != meta.n_traffic {
        return Err(Error::Config(format!(
            "model has {} traffic classes, flows have {n_traffic}",
            meta.n_traffic
        )));
    }
    let chosen: Vec<&FlowSample> = match split {
        EvalSplit::All => flows.iter().collect(),
        EvalSplit::Test => {
            let (_, test) = split_indices(flows, meta.train_fraction, derive_seed(meta.seed, STREAM_SPLIT));
            test.into_iter().map(|i| &flows[i]).collect()
        }
    };
    let samples = labelled_samples(chosen, &meta.dividers, &meta.feature_config())?;
    let rows = predict_rows(model, sample_inputs(&samples), meta.dividers.dur_classes())?;
    let tasks = score(
        &rows,
        &samples,
        [meta.dividers.bw_classes(), meta.dividers.dur_classes(), n_traffic],
    )?;
    Ok((rows, tasks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Labels,
    K,
    Lambda,
    Dividers,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Labels => "labels",
            SweepAxis::K => "k",
            SweepAxis::Lambda => "lambda",
            SweepAxis::Dividers => "dividers",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "labels" => Ok(SweepAxis::Labels),
            "k" => Ok(SweepAxis::K),
            "lambda" => Ok(SweepAxis::Lambda),
            "dividers" => Ok(SweepAxis::Dividers),
            other => Err(format!(
                "unknown sweep axis '{other}' (expected labels, k, lambda or dividers)"
            )),
        }
    }
}

/// `base` with the axis set to `value`.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let bad = |e: String| Error::Config(format!("{axis} value '{value}': {e}"));
    match axis {
        SweepAxis::Labels => {
            cfg.labeled_per_class = value
                .trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
        }
        SweepAxis::K => {
            cfg.k = value
                .trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
        }
        SweepAxis::Lambda => cfg.lambda = value.parse().map_err(bad)?,
        SweepAxis::Dividers => cfg.dividers = value.parse().map_err(bad)?,
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub cells: Vec<SweepCell>,
}

/// One experiment per value with the base seeds. A failing cell is recorded
/// and the sweep moves on.
pub fn sweep(
    flows: &[FlowSample],
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let cells = values
        .iter()
        .map(
            |value| match apply_axis(base, axis, value).and_then(|cfg| run_experiment(flows, &cfg)) {
                Ok(report) => SweepCell {
                    value: value.clone(),
                    report: Some(report),
                    error: None,
                },
                Err(e) => SweepCell {
                    value: value.clone(),
                    report: None,
                    error: Some(format!("[{}] {e}", e.category().as_str())),
                },
            },
        )
        .collect();
    Ok(SweepOutcome { axis, cells })
}

fn csv_err(e: csv::Error) -> Error {
    Error::data("csv output", e.to_string())
}

pub const SWEEP_CSV_HEADER: [&str; 9] = [
    "axis",
    "value",
    "seed",
    "task",
    "accuracy",
    "regime",
    "k",
    "lambda",
    "labels_per_class",
];

/// Long-format table with one row per (cell, seed, task). Failed cells get a
/// single row with task `error` and an empty accuracy.
pub fn write_sweep_csv<W: Write>(writer: W, outcome: &SweepOutcome) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
    let axis = outcome.axis.to_string();
    for cell in &outcome.cells {
        match &cell.report {
            Some(report) => {
                let c = &report.config;
                for run in &report.runs {
                    for (task, m) in &run.tasks {
                        w.write_record([
                            axis.clone(),
                            cell.value.clone(),
                            run.seed.to_string(),
                            task.clone(),
                            m.accuracy.to_string(),
                            c.regime.to_string(),
                            c.k.to_string(),
                            run.lambda.to_string(),
                            c.labeled_per_class.to_string(),
                        ])
                        .map_err(csv_err)?;
                    }
                }
            }
            None => {
                w.write_record([axis.as_str(), &cell.value, "", "error", "", "", "", "", ""])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::data("csv output", e.to_string()))
}

pub const METRICS_CSV_HEADER: [&str; 6] = ["seed", "task", "accuracy", "correct", "total", "regime"];

pub fn write_metrics_csv<W: Write>(writer: W, report: &MetricsReport) -> Result<()> {
    let runs: Vec<(u64, &BTreeMap<String, TaskMetrics>)> = report.runs.iter().map(|r| (r.seed, &r.tasks)).collect();
    write_task_metrics_csv(writer, report.config.regime, &runs)
}

/// One row per (seed, task).
pub fn write_task_metrics_csv<W: Write>(
    writer: W,
    regime: Regime,
    runs: &[(u64, &BTreeMap<String, TaskMetrics>)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_CSV_HEADER).map_err(csv_err)?;
    for (seed, tasks) in runs {
        for (task, m) in *tasks {
            w.write_record([
                seed.to_string(),
                task.clone(),
                m.accuracy.to_string(),
                m.correct.to_string(),
                m.total.to_string(),
                regime.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::data("csv output", e.to_string()))
}

pub const PREDICTIONS_CSV_HEADER: [&str; 5] = ["flow_id", "bw_class", "dur_class", "traffic_class", "p_traffic_max"];

/// Absent predictions are written as empty fields.
pub fn write_predictions_csv<W: Write>(writer: W, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTIONS_CSV_HEADER).map_err(csv_err)?;
    let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.flow_id.to_string(),
            opt(r.bw_class),
            opt(r.dur_class),
            opt(r.traffic_class),
            r.p_traffic_max.map(|p| p.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::data("csv output", e.to_string()))
}
