//! Comparison regimes on the same trunk: one head trained on one task, and
//! transfer learning (pretrain on the joint bandwidth/duration label, swap the
//! head, fine-tune on the traffic labels).

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::mtl::{MtlArchitecture, MtlSample, HEAD_BANDWIDTH, HEAD_DURATION, HEAD_TRAFFIC};
use crate::nn::{self, EpochStats, Example, HeadSpec, HeadTarget, TrainConfig};

/// Head name of the pretraining stage.
pub const HEAD_JOINT: &str = "bw_dur";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Bandwidth,
    Duration,
    Traffic,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Bandwidth, Task::Duration, Task::Traffic];

    pub fn name(self) -> &'static str {
        match self {
            Task::Bandwidth => HEAD_BANDWIDTH,
            Task::Duration => HEAD_DURATION,
            Task::Traffic => HEAD_TRAFFIC,
        }
    }

    pub fn classes(self, arch: &MtlArchitecture) -> usize {
        match self {
            Task::Bandwidth => arch.n_bw,
            Task::Duration => arch.n_dur,
            Task::Traffic => arch.n_traffic,
        }
    }

    /// The sample's 1-based label for this task, if it has one.
    pub fn label(self, sample: &MtlSample) -> Option<u32> {
        match self {
            Task::Bandwidth => Some(sample.labels.y_bw),
            Task::Duration => Some(sample.labels.y_dur),
            Task::Traffic => sample.labels.y_traffic,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bandwidth" | "bw" => Ok(Task::Bandwidth),
            "duration" | "dur" => Ok(Task::Duration),
            "traffic" => Ok(Task::Traffic),
            other => Err(format!(
                "unknown task '{other}' (expected bandwidth, duration or traffic)"
            )),
        }
    }
}

/// 0-based class of the `(bw, dur)` pair in a single softmax over
/// `n_bw × n_dur` classes.
pub fn joint_label(y_bw: u32, y_dur: u32, n_dur: usize) -> u32 {
    (y_bw - 1) * n_dur as u32 + (y_dur - 1)
}

/// Inverse of [`joint_label`].
pub fn split_joint_label(id: u32, n_dur: usize) -> (u32, u32) {
    (id / n_dur as u32 + 1, id % n_dur as u32 + 1)
}

fn target(class: u32, classes: usize, what: &str) -> Result<HeadTarget> {
    if class == 0 || class as usize > classes {
        return Err(Error::Config(format!("{what} label {class} outside 1..={classes}")));
    }
    Ok(HeadTarget {
        class: class as usize - 1,
        weight: 1.0,
    })
}

/// Examples for a one-head network on `task`; unlabelled traffic samples are
/// dropped.
pub fn single_task_examples(samples: &[MtlSample], arch: &MtlArchitecture, task: Task) -> Result<Vec<Example>> {
    let classes = task.classes(arch);
    let mut out = Vec::new();
    for s in samples {
        if let Some(label) = task.label(s) {
            out.push(Example {
                input: s.input.clone(),
                targets: vec![Some(target(label, classes, task.name())?)],
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no samples carry a {task} label")));
    }
    Ok(out)
}

pub fn single_task_model(arch: &MtlArchitecture, task: Task, seed: u64) -> Result<Model> {
    Model::new(
        arch.spec_with_heads(vec![HeadSpec::new(task.name(), task.classes(arch))]),
        seed,
    )
}

/// Trains the trunk plus one head on `task` alone.
pub fn train_single_task(
    arch: &MtlArchitecture,
    samples: &[MtlSample],
    task: Task,
    init_seed: u64,
    config: &TrainConfig,
) -> Result<(Model, Vec<EpochStats>)> {
    let examples = single_task_examples(samples, arch, task)?;
    let mut model = single_task_model(arch, task, init_seed)?;
    let network = model.network().clone();
    let history = nn::fit(&network, model.params_mut(), &examples, config)?;
    Ok((model, history))
}

/// Pretraining examples: every sample, labelled with its joint `(bw, dur)` class.
pub fn joint_examples(samples: &[MtlSample], arch: &MtlArchitecture) -> Result<Vec<Example>> {
    let classes = arch.n_bw * arch.n_dur;
    samples
        .iter()
        .map(|s| {
            target(s.labels.y_bw, arch.n_bw, HEAD_BANDWIDTH)?;
            target(s.labels.y_dur, arch.n_dur, HEAD_DURATION)?;
            let id = joint_label(s.labels.y_bw, s.labels.y_dur, arch.n_dur);
            Ok(Example {
                input: s.input.clone(),
                targets: vec![Some(target(id + 1, classes, HEAD_JOINT)?)],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    /// Trunk plus joint head after pretraining.
    pub pretrained: Model,
    /// Trunk plus traffic head after fine-tuning.
    pub model: Model,
    pub pretrain_history: Vec<EpochStats>,
    pub finetune_history: Vec<EpochStats>,
}

/// Copies the trunk of `source` (bitwise) under a freshly drawn traffic head.
pub fn replace_head(source: &Model, arch: &MtlArchitecture, head_seed: u64) -> Result<Model> {
    let spec = arch.spec_with_heads(vec![HeadSpec::new(HEAD_TRAFFIC, arch.n_traffic)]);
    if spec.trunk != source.network().spec().trunk || spec.input != source.network().spec().input {
        return Err(Error::Shape(
            "source model trunk does not match the target architecture".into(),
        ));
    }
    let network = nn::Network::build(spec.clone())?;
    let mut params = vec![0.0; network.param_count()];
    let trunk = source.trunk_params();
    params[..trunk.len()].copy_from_slice(trunk);
    network.init_head(0, &mut params, &mut ChaCha8Rng::seed_from_u64(head_seed));
    Model::from_parts(spec, params)
}

/// Stage 1 trains on every sample's joint label; stage 2 swaps in a new
/// traffic head and fine-tunes all layers on the traffic-labelled samples.
pub fn train_transfer(
    arch: &MtlArchitecture,
    samples: &[MtlSample],
    init_seed: u64,
    config: &TransferConfig,
) -> Result<TransferOutcome> {
    let finetune_examples = single_task_examples(samples, arch, Task::Traffic)?;
    let pretrain_examples = joint_examples(samples, arch)?;

    let joint_spec = arch.spec_with_heads(vec![HeadSpec::new(HEAD_JOINT, arch.n_bw * arch.n_dur)]);
    let mut pretrained = Model::new(joint_spec, init_seed)?;
    let network = pretrained.network().clone();
    let pretrain_history = nn::fit(&network, pretrained.params_mut(), &pretrain_examples, &config.pretrain)?;

    let mut model = replace_head(&pretrained, arch, init_seed ^ 0x005e_ed0f_7a11)?;
    let network = model.network().clone();
    let finetune_history = if config.finetune.epochs == 0 {
        Vec::new()
    } else {
        nn::fit(&network, model.params_mut(), &finetune_examples, &config.finetune)?
    };
    Ok(TransferOutcome {
        pretrained,
        model,
        pretrain_history,
        finetune_history,
    })
}
