//! Hard parameter sharing: one convolutional trunk, three softmax heads
//! (bandwidth class, duration class, traffic class) trained under
//!
//! ```text
//! total = Σ_i [ ℓ(bw_i) + ℓ(dur_i) + λ · mask_i · ℓ(traffic_i) ]
//! ```
//!
//! where `mask_i` is 1 only for the few flows that carry a traffic label. A
//! masked sample contributes neither loss nor gradient through the traffic
//! head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FeatureMatrix;
use crate::labels::TaskLabels;
use crate::model::{argmax, Model};
use crate::nn::{self, EpochStats, Example, HeadSpec, HeadTarget, LayerSpec, NetworkSpec, Shape, TrainConfig};

pub const HEAD_BANDWIDTH: &str = "bandwidth";
pub const HEAD_DURATION: &str = "duration";
pub const HEAD_TRAFFIC: &str = "traffic";

/// Input lengths at which one 128-filter convolution is dropped from the trunk.
pub const REDUCED_TRUNK_K: [usize; 2] = [30, 45];

/// Conv32 ×2, pool, Conv64 ×2, pool, Conv128 ×2, pool, FC256 ×2, ReLU after
/// every conv and dense layer.
pub fn full_trunk() -> Vec<LayerSpec> {
    trunk_with_stages(&[&[32, 32], &[64, 64], &[128, 128]], &[256, 256])
}

/// [`full_trunk`] with a single 128-filter convolution in the last stage.
pub fn reduced_trunk() -> Vec<LayerSpec> {
    trunk_with_stages(&[&[32, 32], &[64, 64], &[128]], &[256, 256])
}

/// Convolution stages (each followed by a max-pool), a flatten, then dense layers.
pub fn trunk_with_stages(stages: &[&[usize]], dense: &[usize]) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for stage in stages {
        for &filters in *stage {
            layers.push(LayerSpec::conv(filters));
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::pool());
    }
    layers.push(LayerSpec::Flatten);
    for &n in dense {
        layers.push(LayerSpec::dense(n));
        layers.push(LayerSpec::Relu);
    }
    layers
}

/// Small trunk with every layer type (filters 4/8/16) for finite-difference
/// checks; valid for k ≥ 12.
pub fn small_trunk() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(4),
        LayerSpec::Relu,
        LayerSpec::pool(),
        LayerSpec::conv(8),
        LayerSpec::Relu,
        LayerSpec::conv(16),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::dense(16),
        LayerSpec::Relu,
    ]
}

/// Trunk for input length `k`: the reduced variant at k = 30 and 45, the full
/// one otherwise.
pub fn standard_trunk(k: usize) -> Vec<LayerSpec> {
    if REDUCED_TRUNK_K.contains(&k) {
        reduced_trunk()
    } else {
        full_trunk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlArchitecture {
    pub k: usize,
    pub trunk: Vec<LayerSpec>,
    pub n_bw: usize,
    pub n_dur: usize,
    pub n_traffic: usize,
}

impl MtlArchitecture {
    /// Standard trunk for `k`, shape-checked at construction.
    pub fn standard(k: usize, n_bw: usize, n_dur: usize, n_traffic: usize) -> Result<Self> {
        Self::with_trunk(k, standard_trunk(k), n_bw, n_dur, n_traffic)
    }

    pub fn with_trunk(k: usize, trunk: Vec<LayerSpec>, n_bw: usize, n_dur: usize, n_traffic: usize) -> Result<Self> {
        let arch = MtlArchitecture {
            k,
            trunk,
            n_bw,
            n_dur,
            n_traffic,
        };
        let width = arch.trunk_output_width()?;
        if width == 0 {
            return Err(Error::Shape("trunk output has zero width".into()));
        }
        Ok(arch)
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(self.k, 2)
    }

    /// Width of the flattened trunk output (the layer before the first dense).
    pub fn flatten_width(&self) -> Result<usize> {
        let mut shape = self.input_shape();
        for layer in &self.trunk {
            if *layer == LayerSpec::Flatten {
                return Ok(shape.size());
            }
            shape = layer.output_shape(shape)?;
        }
        Ok(shape.size())
    }

    pub fn trunk_output_width(&self) -> Result<usize> {
        let mut shape = self.input_shape();
        for layer in &self.trunk {
            shape = layer.output_shape(shape)?;
        }
        Ok(shape.size())
    }

    pub fn network_spec(&self) -> NetworkSpec {
        self.spec_with_heads(vec![
            HeadSpec::new(HEAD_BANDWIDTH, self.n_bw),
            HeadSpec::new(HEAD_DURATION, self.n_dur),
            HeadSpec::new(HEAD_TRAFFIC, self.n_traffic),
        ])
    }

    /// Same trunk with arbitrary heads (used by the baselines).
    pub fn spec_with_heads(&self, heads: Vec<HeadSpec>) -> NetworkSpec {
        NetworkSpec {
            input: self.input_shape(),
            trunk: self.trunk.clone(),
            heads,
        }
    }
}

/// One model input with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlSample {
    pub flow_id: u64,
    pub input: Vec<f64>,
    pub labels: TaskLabels,
}

impl MtlSample {
    pub fn new(flow_id: u64, features: &FeatureMatrix, labels: TaskLabels) -> Self {
        MtlSample {
            flow_id,
            input: features.to_input(),
            labels,
        }
    }
}

/// Three-head model; parameters are the shared trunk plus Wᴮ, Wᴰ, Wᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlModel {
    pub arch: MtlArchitecture,
    pub model: Model,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadProbabilities {
    pub bw: Vec<f64>,
    pub dur: Vec<f64>,
    pub traffic: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub bw_class: u32,
    pub dur_class: u32,
    pub traffic_class: u32,
    pub p_traffic_max: f64,
}

impl MtlModel {
    pub fn new(arch: MtlArchitecture, seed: u64) -> Result<Self> {
        let model = Model::new(arch.network_spec(), seed)?;
        Ok(MtlModel { arch, model })
    }

    pub fn from_model(model: Model) -> Result<Self> {
        let spec = model.network().spec();
        let names: Vec<&str> = spec.heads.iter().map(|h| h.name.as_str()).collect();
        if names != [HEAD_BANDWIDTH, HEAD_DURATION, HEAD_TRAFFIC] {
            return Err(Error::Shape(format!("not a multi-task model: heads {names:?}")));
        }
        let arch = MtlArchitecture {
            k: spec.input.len,
            trunk: spec.trunk.clone(),
            n_bw: spec.heads[0].classes,
            n_dur: spec.heads[1].classes,
            n_traffic: spec.heads[2].classes,
        };
        Ok(MtlModel { arch, model })
    }

    pub fn forward(&self, features: &FeatureMatrix) -> Result<HeadProbabilities> {
        if features.k != self.arch.k {
            return Err(Error::Shape(format!(
                "features have k={}, model expects k={}",
                features.k, self.arch.k
            )));
        }
        let mut ws = self.model.workspace();
        let mut probs = self.model.predict_proba(&features.to_input(), &mut ws)?.into_iter();
        let mut next = || probs.next().expect("three heads");
        Ok(HeadProbabilities {
            bw: next(),
            dur: next(),
            traffic: next(),
        })
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Result<Prediction> {
        Ok(prediction_from(&self.forward(features)?))
    }

    /// Predictions for pre-flattened inputs, reusing one workspace.
    pub fn predict_inputs<'a, I>(&self, inputs: I) -> Result<Vec<Prediction>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut ws = self.model.workspace();
        inputs
            .into_iter()
            .map(|input| {
                let p = self.model.predict_proba(input, &mut ws)?;
                Ok(prediction_from(&HeadProbabilities {
                    bw: p[0].clone(),
                    dur: p[1].clone(),
                    traffic: p[2].clone(),
                }))
            })
            .collect()
    }
}

fn prediction_from(p: &HeadProbabilities) -> Prediction {
    let t = argmax(&p.traffic);
    Prediction {
        bw_class: argmax(&p.bw) as u32 + 1,
        dur_class: argmax(&p.dur) as u32 + 1,
        traffic_class: t as u32 + 1,
        p_traffic_max: p.traffic[t],
    }
}

fn class_index(class: u32, classes: usize, task: &str) -> Result<usize> {
    if class == 0 || class as usize > classes {
        return Err(Error::Config(format!("{task} label {class} outside 1..={classes}")));
    }
    Ok(class as usize - 1)
}

/// Converts a labelled sample into per-head targets; the traffic target is
/// absent (masked) unless the sample carries a traffic label.
pub fn to_example(sample: &MtlSample, arch: &MtlArchitecture, lambda: f64) -> Result<Example> {
    let l = &sample.labels;
    let traffic = match l.y_traffic {
        Some(t) => Some(HeadTarget {
            class: class_index(t, arch.n_traffic, "traffic")?,
            weight: lambda,
        }),
        None => None,
    };
    Ok(Example {
        input: sample.input.clone(),
        targets: vec![
            Some(HeadTarget {
                class: class_index(l.y_bw, arch.n_bw, "bandwidth")?,
                weight: 1.0,
            }),
            Some(HeadTarget {
                class: class_index(l.y_dur, arch.n_dur, "duration")?,
                weight: 1.0,
            }),
            traffic,
        ],
    })
}

/// Summed loss terms of the multi-task objective over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtlLoss {
    pub total: f64,
    pub bw: f64,
    pub dur: f64,
    /// Unweighted traffic loss over mask-1 samples.
    pub traffic: f64,
    /// `λ`-weighted traffic term; `total = bw + dur + weighted_traffic`.
    pub weighted_traffic: f64,
    pub labelled: usize,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    Ok(())
}

fn mtl_loss_impl(model: &MtlModel, batch: &[MtlSample], lambda: f64, grad: Option<&mut [f64]>) -> Result<MtlLoss> {
    check_lambda(lambda)?;
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let examples = batch
        .iter()
        .map(|s| to_example(s, &model.arch, lambda))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Example> = examples.iter().collect();
    let net = model.model.network();
    let mut ws = net.workspace();
    let loss = net.batch_loss(model.model.params(), &refs, &mut ws, grad)?;
    Ok(MtlLoss {
        total: loss.total,
        bw: loss.head_weighted[0],
        dur: loss.head_weighted[1],
        traffic: loss.head_loss[2],
        weighted_traffic: loss.head_weighted[2],
        labelled: loss.head_count[2],
    })
}

pub fn masked_mtl_loss(model: &MtlModel, batch: &[MtlSample], lambda: f64) -> Result<MtlLoss> {
    mtl_loss_impl(model, batch, lambda, None)
}

/// Loss and its gradient with respect to every parameter.
pub fn masked_mtl_gradient(model: &MtlModel, batch: &[MtlSample], lambda: f64) -> Result<(MtlLoss, Vec<f64>)> {
    let mut grad = vec![0.0; model.model.network().param_count()];
    let loss = mtl_loss_impl(model, batch, lambda, Some(&mut grad))?;
    Ok((loss, grad))
}

/// λ choice: a fixed value, or the ratio of bandwidth/duration-labelled
/// samples to traffic-labelled samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSetting {
    Fixed(f64),
    SampleRatio,
}

impl LambdaSetting {
    pub fn resolve(&self, n_samples: usize, n_labelled: usize) -> Result<f64> {
        match *self {
            LambdaSetting::Fixed(v) => {
                check_lambda(v)?;
                Ok(v)
            }
            LambdaSetting::SampleRatio => {
                if n_labelled == 0 {
                    return Err(Error::Config("lambda ratio needs at least one labelled sample".into()));
                }
                Ok(n_samples as f64 / n_labelled as f64)
            }
        }
    }
}

impl Default for LambdaSetting {
    fn default() -> Self {
        LambdaSetting::Fixed(1.0)
    }
}

impl Serialize for LambdaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LambdaSetting::Fixed(v) => s.serialize_f64(*v),
            LambdaSetting::SampleRatio => s.serialize_str("ratio"),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(LambdaSetting::Fixed(v)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for LambdaSetting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "ratio" => Ok(LambdaSetting::SampleRatio),
            other => other
                .parse::<f64>()
                .map(LambdaSetting::Fixed)
                .map_err(|_| format!("lambda must be a number or 'ratio', got '{other}'")),
        }
    }
}

impl std::fmt::Display for LambdaSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaSetting::Fixed(v) => write!(f, "{v}"),
            LambdaSetting::SampleRatio => f.write_str("ratio"),
        }
    }
}

/// Trains all three heads with Adam on the masked objective. Returns the
/// per-epoch loss history.
pub fn train(
    model: &mut MtlModel,
    dataset: &[MtlSample],
    lambda: f64,
    config: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    check_lambda(lambda)?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let examples = dataset
        .iter()
        .map(|s| to_example(s, &model.arch, lambda))
        .collect::<Result<Vec<_>>>()?;
    let MtlModel { model, .. } = model;
    let network = model.network().clone();
    nn::fit(&network, model.params_mut(), &examples, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny_arch() -> MtlArchitecture {
        MtlArchitecture::with_trunk(12, small_trunk(), 5, 5, 5).unwrap()
    }

    fn random_batch(n: usize, labelled: usize, k: usize, seed: u64) -> Vec<MtlSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| MtlSample {
                flow_id: i as u64,
                input: (0..2 * k)
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
                    y_traffic: (i < labelled).then(|| rng.random_range(1..=5)),
                },
            })
            .collect()
    }

    #[test]
    fn trunk_shapes() {
        let a60 = MtlArchitecture::standard(60, 5, 5, 5).unwrap();
        assert_eq!(a60.flatten_width().unwrap(), 512);
        let full30 = MtlArchitecture::with_trunk(30, full_trunk(), 5, 5, 5);
        match full30 {
            Err(Error::Shape(m)) => assert!(m.contains("zero-dimensional"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            MtlArchitecture::standard(30, 5, 5, 5).unwrap().flatten_width().unwrap(),
            128
        );
        assert_eq!(
            MtlArchitecture::standard(45, 5, 5, 5).unwrap().flatten_width().unwrap(),
            384
        );
        // k = 45 does not collapse with the full trunk either
        assert!(MtlArchitecture::with_trunk(45, full_trunk(), 5, 5, 5).is_ok());
    }

    #[test]
    fn fresh_model_is_near_uniform() {
        let model = MtlModel::new(MtlArchitecture::standard(60, 5, 5, 5).unwrap(), 3).unwrap();
        let max_entropy = 5f64.ln();
        let batch = random_batch(100, 0, 60, 4);
        let mut ws = model.model.workspace();
        for s in &batch {
            for p in model.model.predict_proba(&s.input, &mut ws).unwrap() {
                let h: f64 = -p.iter().map(|q| q * q.ln()).sum::<f64>();
                assert!(h > 0.95 * max_entropy, "entropy {h}");
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heads_share_one_trunk_pass() {
        let model = MtlModel::new(tiny_arch(), 1).unwrap();
        let sample = &random_batch(1, 1, 12, 2)[0];
        let net = model.model.network();
        let mut ws = net.workspace();
        net.forward(model.model.params(), &sample.input, &mut ws).unwrap();
        let feat = ws.trunk_output().to_vec();
        // each head's logits are exactly its own dense layer over the same features
        for (h, head) in net.heads().iter().enumerate() {
            let p = model.model.head_params(h);
            let (w, b) = p.split_at(head.classes * head.in_dim);
            for c in 0..head.classes {
                let z: f64 = b[c]
                    + w[c * head.in_dim..(c + 1) * head.in_dim]
                        .iter()
                        .zip(&feat)
                        .map(|(a, x)| a * x)
                        .sum::<f64>();
                assert!((z - ws.logits[h][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fully_masked_batch() {
        let model = MtlModel::new(tiny_arch(), 5).unwrap();
        let batch = random_batch(16, 0, 12, 6);
        let (loss, grad) = masked_mtl_gradient(&model, &batch, 1.0).unwrap();
        assert_eq!(loss.total, loss.bw + loss.dur);
        assert_eq!(loss.weighted_traffic, 0.0);
        let range = model.model.network().heads()[2].param_range();
        assert!(grad[range].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn lambda_scales_traffic_term() {
        let model = MtlModel::new(tiny_arch(), 7).unwrap();
        let batch = random_batch(16, 6, 12, 8);
        let a = masked_mtl_loss(&model, &batch, 1.5).unwrap();
        let b = masked_mtl_loss(&model, &batch, 3.0).unwrap();
        assert_eq!(b.weighted_traffic, 2.0 * a.weighted_traffic);
        assert!(((b.total - b.bw - b.dur) - 2.0 * (a.total - a.bw - a.dur)).abs() < 1e-10);
        assert!((a.total - (a.bw + a.dur + a.weighted_traffic)).abs() < 1e-10);
        assert_eq!(a.labelled, 6);
    }

    /// Recomputes the three sums sample by sample with an explicit mask factor.
    #[test]
    fn loss_matches_sum_decomposition_oracle() {
        let model = MtlModel::new(tiny_arch(), 9).unwrap();
        let batch = random_batch(20, 7, 12, 10);
        let lambda = 2.5;
        let loss = masked_mtl_loss(&model, &batch, lambda).unwrap();
        let (mut bw, mut dur, mut tr) = (0.0, 0.0, 0.0);
        let mut ws = model.model.workspace();
        for s in &batch {
            let p = model.model.predict_proba(&s.input, &mut ws).unwrap();
            bw += -p[0][s.labels.y_bw as usize - 1].ln();
            dur += -p[1][s.labels.y_dur as usize - 1].ln();
            let mask = f64::from(s.labels.traffic_mask());
            let t = s.labels.y_traffic.unwrap_or(1) as usize - 1;
            tr += mask * -p[2][t].ln();
        }
        assert!((loss.bw - bw).abs() < 1e-12);
        assert!((loss.dur - dur).abs() < 1e-12);
        assert!((loss.total - (bw + dur + lambda * tr)).abs() < 1e-12);
    }

    /// Masking the traffic softmax input (logits × 0) blocks the same gradient
    /// as dropping the masked loss term.
    #[test]
    fn logit_masking_is_equivalent() {
        let model = MtlModel::new(tiny_arch(), 11).unwrap();
        let sample = random_batch(1, 0, 12, 12).remove(0);
        let net = model.model.network();
        let mut ws = net.workspace();
        net.forward(model.model.params(), &sample.input, &mut ws).unwrap();
        // d/dz ℓ(softmax(m·z), y) = m · (softmax(m·z) − onehot) = 0 at m = 0
        let masked_logits: Vec<f64> = ws.logits[2].iter().map(|z| 0.0 * z).collect();
        let p = nn::softmax(&masked_logits);
        let d_logits: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(c, q)| 0.0 * (q - f64::from(c == 0)))
            .collect();
        assert!(d_logits.iter().all(|&g| g == 0.0));
        let (_, grad) = masked_mtl_gradient(&model, std::slice::from_ref(&sample), 1.0).unwrap();
        assert!(grad[net.heads()[2].param_range()].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn full_model_gradient_check() {
        let model = MtlModel::new(tiny_arch(), 13).unwrap();
        let batch = random_batch(6, 3, 12, 14);
        let examples: Vec<Example> = batch.iter().map(|s| to_example(s, &model.arch, 1.7).unwrap()).collect();
        let refs: Vec<&Example> = examples.iter().collect();
        let report =
            nn::gradcheck::check_gradients(model.model.network(), model.model.params(), &refs, 1e-4, 1e-4).unwrap();
        assert!(
            report.passed(),
            "{:?}",
            &report.failures[..report.failures.len().min(5)]
        );
        assert_eq!(report.checked, model.model.network().param_count());
    }

    #[test]
    fn trunk_gradient_is_sum_of_task_gradients() {
        let model = MtlModel::new(tiny_arch(), 15).unwrap();
        let batch = random_batch(10, 4, 12, 16);
        let (_, all) = masked_mtl_gradient(&model, &batch, 2.0).unwrap();
        let net = model.model.network();
        let mut sum = vec![0.0; net.param_count()];
        for keep in 0..3 {
            let examples: Vec<Example> = batch
                .iter()
                .map(|s| {
                    let mut e = to_example(s, &model.arch, 2.0).unwrap();
                    for (h, t) in e.targets.iter_mut().enumerate() {
                        if h != keep {
                            *t = None;
                        }
                    }
                    e
                })
                .collect();
            let refs: Vec<&Example> = examples.iter().collect();
            let mut g = vec![0.0; net.param_count()];
            net.batch_loss(model.model.params(), &refs, &mut net.workspace(), Some(&mut g))
                .unwrap();
            for (s, x) in sum.iter_mut().zip(&g) {
                *s += x;
            }
        }
        for i in 0..net.trunk_param_count() {
            assert!((all[i] - sum[i]).abs() <= 1e-12 * (1.0 + all[i].abs()), "param {i}");
        }
    }

    #[test]
    fn zero_lambda_freezes_traffic_head() {
        let mut model = MtlModel::new(tiny_arch(), 17).unwrap();
        let before = model.model.head_params(2).to_vec();
        let data = random_batch(40, 10, 12, 18);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 1,
            patience: None,
            ..Default::default()
        };
        train(&mut model, &data, 0.0, &cfg).unwrap();
        assert_eq!(model.model.head_params(2), &before[..]);
        assert_ne!(
            model.model.head_params(0),
            model
                .model
                .head_params(0)
                .iter()
                .map(|_| 0.0)
                .collect::<Vec<_>>()
                .as_slice()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let data = random_batch(30, 10, 12, 20);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            seed: 4,
            patience: None,
            ..Default::default()
        };
        let run = || {
            let mut m = MtlModel::new(tiny_arch(), 21).unwrap();
            train(&mut m, &data, 1.0, &cfg).unwrap();
            m.model.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = MtlModel::new(tiny_arch(), 1).unwrap();
        assert!(masked_mtl_loss(&model, &[], 1.0).is_err());
        let batch = random_batch(2, 1, 12, 1);
        assert!(masked_mtl_loss(&model, &batch, -1.0).is_err());
        let fm = FeatureMatrix {
            k: 10,
            channel_iat: vec![0.0; 10],
            channel_len: vec![0.0; 10],
            valid_len: 10,
        };
        assert!(matches!(model.forward(&fm), Err(Error::Shape(_))));
    }

    #[test]
    fn lambda_setting_parsing() {
        assert_eq!("ratio".parse::<LambdaSetting>().unwrap(), LambdaSetting::SampleRatio);
        assert_eq!("2.5".parse::<LambdaSetting>().unwrap(), LambdaSetting::Fixed(2.5));
        assert_eq!(LambdaSetting::SampleRatio.resolve(2000, 100).unwrap(), 20.0);
        let v: LambdaSetting = serde_json::from_str("\"ratio\"").unwrap();
        assert_eq!(v, LambdaSetting::SampleRatio);
        assert_eq!(serde_json::to_string(&LambdaSetting::Fixed(10.0)).unwrap(), "10.0");
    }
}
