//! A shared trunk feeding any number of dense + softmax heads.
//!
//! All trainable values live in one flat `Vec<f64>`: trunk layers first, in
//! order, each as `[weights.., biases..]`, then each head the same way. The
//! trunk occupies the prefix `0..trunk_param_count()`, which is what makes head
//! replacement a matter of re-initialising a suffix.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, LayerSpec, Shape};
use super::loss::{softmax_into, softmax_xent_into};
use crate::error::{Error, Result};

/// Shrink factor on the Glorot range of head weights.
pub const HEAD_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub classes: usize,
}

impl HeadSpec {
    pub fn new(name: impl Into<String>, classes: usize) -> Self {
        HeadSpec {
            name: name.into(),
            classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Shape,
    pub trunk: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub offset: usize,
    pub weights: usize,
    pub biases: usize,
}

impl LayerPlan {
    fn weight_range(&self) -> Range<usize> {
        self.offset..self.offset + self.weights
    }

    fn bias_range(&self) -> Range<usize> {
        self.offset + self.weights..self.offset + self.weights + self.biases
    }

    pub fn param_range(&self) -> Range<usize> {
        self.offset..self.offset + self.weights + self.biases
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadPlan {
    pub name: String,
    pub classes: usize,
    pub in_dim: usize,
    pub offset: usize,
}

impl HeadPlan {
    fn weight_range(&self) -> Range<usize> {
        self.offset..self.offset + self.classes * self.in_dim
    }

    fn bias_range(&self) -> Range<usize> {
        let w = self.offset + self.classes * self.in_dim;
        w..w + self.classes
    }

    pub fn param_range(&self) -> Range<usize> {
        self.offset..self.offset + self.classes * (self.in_dim + 1)
    }
}

/// Supervision for one head on one sample. `weight` multiplies both the loss
/// term and its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadTarget {
    pub class: usize,
    pub weight: f64,
}

/// One training input with a (possibly absent) target per head.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub targets: Vec<Option<HeadTarget>>,
}

/// Summed losses over a batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchLoss {
    /// Unweighted cross-entropy sums per head (only samples with a target).
    pub head_loss: Vec<f64>,
    /// `Σ weight · loss` per head.
    pub head_weighted: Vec<f64>,
    pub head_count: Vec<usize>,
    /// Sum of `head_weighted`.
    pub total: f64,
}

/// Per-sample scratch space reused across forward/backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
    delta_a: Vec<f64>,
    delta_b: Vec<f64>,
    d_feat: Vec<f64>,
    d_tmp: Vec<f64>,
    d_logits: Vec<f64>,
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl Workspace {
    /// Flat output of the shared trunk from the last forward pass.
    pub fn trunk_output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<LayerPlan>,
    heads: Vec<HeadPlan>,
    trunk_params: usize,
    param_count: usize,
}

impl Network {
    /// Resolves shapes and parameter offsets, failing on any layer that
    /// would produce an empty output.
    pub fn build(spec: NetworkSpec) -> Result<Self> {
        if spec.input.size() == 0 {
            return Err(Error::Shape("network input has a zero dimension".into()));
        }
        let mut shape = spec.input;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(spec.trunk.len());
        for (i, layer) in spec.trunk.iter().enumerate() {
            let output = layer
                .output_shape(shape)
                .map_err(|e| Error::Shape(format!("trunk layer {i}: {}", strip_shape(e))))?;
            let (weights, biases) = layer.param_counts(shape);
            layers.push(LayerPlan {
                spec: *layer,
                input: shape,
                output,
                offset,
                weights,
                biases,
            });
            offset += weights + biases;
            shape = output;
        }
        if shape.len != 1 {
            return Err(Error::Shape(format!(
                "trunk output must be flat, got length {} (end the trunk with flatten/dense)",
                shape.len
            )));
        }
        if spec.heads.is_empty() {
            return Err(Error::Shape("network needs at least one head".into()));
        }
        let trunk_params = offset;
        let mut heads = Vec::with_capacity(spec.heads.len());
        for head in &spec.heads {
            if head.classes < 2 {
                return Err(Error::Shape(format!("head '{}' needs at least 2 classes", head.name)));
            }
            heads.push(HeadPlan {
                name: head.name.clone(),
                classes: head.classes,
                in_dim: shape.channels,
                offset,
            });
            offset += head.classes * (shape.channels + 1);
        }
        Ok(Network {
            spec,
            layers,
            heads,
            trunk_params,
            param_count: offset,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[LayerPlan] {
        &self.layers
    }

    pub fn heads(&self) -> &[HeadPlan] {
        &self.heads
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn trunk_param_count(&self) -> usize {
        self.trunk_params
    }

    /// Width of the flat trunk output feeding every head.
    pub fn feature_width(&self) -> usize {
        self.layers.last().map_or(self.spec.input.size(), |l| l.output.size())
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    /// Human-readable owner of parameter `index`.
    pub fn param_owner(&self, index: usize) -> String {
        if let Some((i, l)) = self
            .layers
            .iter()
            .enumerate()
            .find(|(_, l)| l.param_range().contains(&index))
        {
            return format!("trunk[{i}] {}", l.spec.label());
        }
        match self.heads.iter().find(|h| h.param_range().contains(&index)) {
            Some(h) => format!("head '{}'", h.name),
            None => format!("parameter {index} (out of range)"),
        }
    }

    /// Named parameter groups in layout order.
    pub fn param_groups(&self) -> Vec<(String, Range<usize>)> {
        let mut groups: Vec<(String, Range<usize>)> = self
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.weights + l.biases > 0)
            .map(|(i, l)| (format!("trunk[{i}] {}", l.spec.label()), l.param_range()))
            .collect();
        groups.extend(
            self.heads
                .iter()
                .map(|h| (format!("head '{}'", h.name), h.param_range())),
        );
        groups
    }

    /// He-uniform weights for the trunk, zero biases. Heads draw from a
    /// Glorot-uniform range shrunk by [`HEAD_INIT_SCALE`] so a fresh model
    /// starts close to uniform on every task.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count];
        for layer in &self.layers {
            let fan_in = layer.spec.fan_in(layer.input);
            if layer.weights == 0 {
                continue;
            }
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in &mut params[layer.weight_range()] {
                *w = rng.random_range(-limit..limit);
            }
        }
        for h in 0..self.heads.len() {
            self.init_head(h, &mut params, rng);
        }
        params
    }

    pub fn init_head<R: Rng + ?Sized>(&self, head: usize, params: &mut [f64], rng: &mut R) {
        let h = &self.heads[head];
        let limit = HEAD_INIT_SCALE * (6.0 / (h.in_dim + h.classes) as f64).sqrt();
        for w in &mut params[h.weight_range()] {
            *w = rng.random_range(-limit..limit);
        }
        params[h.bias_range()].fill(0.0);
    }

    pub fn workspace(&self) -> Workspace {
        let mut acts = vec![vec![0.0; self.spec.input.size()]];
        let mut argmax = Vec::with_capacity(self.layers.len());
        let mut widest = self.spec.input.size();
        for l in &self.layers {
            acts.push(vec![0.0; l.output.size()]);
            argmax.push(match l.spec {
                LayerSpec::MaxPool1d { .. } => vec![0; l.output.size()],
                _ => Vec::new(),
            });
            widest = widest.max(l.output.size());
        }
        let feat = self.feature_width();
        let max_classes = self.heads.iter().map(|h| h.classes).max().unwrap_or(0);
        Workspace {
            acts,
            argmax,
            delta_a: vec![0.0; widest],
            delta_b: vec![0.0; widest],
            d_feat: vec![0.0; feat],
            d_tmp: vec![0.0; feat],
            d_logits: vec![0.0; max_classes],
            logits: self.heads.iter().map(|h| vec![0.0; h.classes]).collect(),
            probs: self.heads.iter().map(|h| vec![0.0; h.classes]).collect(),
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count,
                params.len()
            )));
        }
        Ok(())
    }

    /// Forward pass for one sample; fills `ws.logits` and `ws.probs`.
    pub fn forward(&self, params: &[f64], input: &[f64], ws: &mut Workspace) -> Result<()> {
        self.check_params(params)?;
        if input.len() != self.spec.input.size() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {} ({}x{})",
                input.len(),
                self.spec.input.size(),
                self.spec.input.len,
                self.spec.input.channels
            )));
        }
        ws.acts[0].copy_from_slice(input);
        for (i, l) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(i + 1);
            let x = &before[i];
            let y = &mut after[0];
            match l.spec {
                LayerSpec::Conv1d { kernel, .. } => layers::conv1d_fwd(
                    x,
                    l.input,
                    &params[l.weight_range()],
                    &params[l.bias_range()],
                    kernel,
                    y,
                ),
                LayerSpec::MaxPool1d { size } => layers::maxpool_fwd(x, l.input, size, y, &mut ws.argmax[i]),
                LayerSpec::Dense { .. } => layers::dense_fwd(x, &params[l.weight_range()], &params[l.bias_range()], y),
                LayerSpec::Relu => layers::relu_fwd(x, y),
                LayerSpec::Flatten => y.copy_from_slice(x),
            }
        }
        let feat = ws.acts.last().expect("input activation");
        for (h, head) in self.heads.iter().enumerate() {
            layers::dense_fwd(
                feat,
                &params[head.weight_range()],
                &params[head.bias_range()],
                &mut ws.logits[h],
            );
            softmax_into(&ws.logits[h], &mut ws.probs[h]);
        }
        Ok(())
    }

    /// Forward + cross-entropy for one sample, optionally accumulating the
    /// weighted gradient into `grad`. Returns the unweighted loss per head
    /// (`None` where the head has no target).
    pub fn sample_loss(
        &self,
        params: &[f64],
        example: &Example,
        ws: &mut Workspace,
        grad: Option<&mut [f64]>,
    ) -> Result<Vec<Option<f64>>> {
        if example.targets.len() != self.heads.len() {
            return Err(Error::Shape(format!(
                "example has {} targets for {} heads",
                example.targets.len(),
                self.heads.len()
            )));
        }
        self.forward(params, &example.input, ws)?;
        let mut losses = vec![None; self.heads.len()];
        for (h, target) in example.targets.iter().enumerate() {
            if let Some(t) = target {
                losses[h] = Some(softmax_xent_into(&ws.logits[h], t.class, &mut ws.probs[h])?);
            }
        }
        if let Some(grad) = grad {
            if grad.len() != self.param_count {
                return Err(Error::Shape("gradient buffer length mismatch".into()));
            }
            self.backward(params, example, ws, grad);
        }
        Ok(losses)
    }

    fn backward(&self, params: &[f64], example: &Example, ws: &mut Workspace, grad: &mut [f64]) {
        let Workspace {
            acts,
            argmax,
            delta_a,
            delta_b,
            d_feat,
            d_tmp,
            d_logits,
            probs,
            ..
        } = ws;
        let feat = acts.last().expect("input activation");
        d_feat.fill(0.0);
        let mut any = false;
        for (h, head) in self.heads.iter().enumerate() {
            let Some(t) = example.targets[h] else { continue };
            if t.weight == 0.0 {
                continue;
            }
            any = true;
            let dl = &mut d_logits[..head.classes];
            for (d, &p) in dl.iter_mut().zip(&probs[h]) {
                *d = t.weight * p;
            }
            dl[t.class] -= t.weight;
            let (w_grad, b_grad) = grad[head.param_range()].split_at_mut(head.classes * head.in_dim);
            layers::dense_bwd(feat, &params[head.weight_range()], dl, w_grad, b_grad, Some(d_tmp));
            for (a, b) in d_feat.iter_mut().zip(d_tmp.iter()) {
                *a += b;
            }
        }
        if !any {
            return;
        }
        let Some(first_param) = self.layers.iter().position(|l| l.weights + l.biases > 0) else {
            return;
        };
        let mut d_out: &mut Vec<f64> = delta_a;
        let mut d_in: &mut Vec<f64> = delta_b;
        d_out[..d_feat.len()].copy_from_slice(d_feat);
        for i in (first_param..self.layers.len()).rev() {
            let l = &self.layers[i];
            let x = &acts[i];
            let y = &acts[i + 1];
            let dy = &d_out[..l.output.size()];
            let need_input = i > first_param;
            let dx = &mut d_in[..l.input.size()];
            match l.spec {
                LayerSpec::Conv1d { kernel, filters } => {
                    let (w_grad, b_grad) = grad[l.param_range()].split_at_mut(l.weights);
                    layers::conv1d_bwd(
                        x,
                        l.input,
                        &params[l.weight_range()],
                        kernel,
                        filters,
                        dy,
                        w_grad,
                        b_grad,
                        need_input.then_some(dx),
                    );
                }
                LayerSpec::Dense { .. } => {
                    let (w_grad, b_grad) = grad[l.param_range()].split_at_mut(l.weights);
                    layers::dense_bwd(
                        x,
                        &params[l.weight_range()],
                        dy,
                        w_grad,
                        b_grad,
                        need_input.then_some(dx),
                    );
                }
                LayerSpec::MaxPool1d { .. } => layers::maxpool_bwd(dy, &argmax[i], dx),
                LayerSpec::Relu => layers::relu_bwd(y, dy, dx),
                LayerSpec::Flatten => dx.copy_from_slice(dy),
            }
            std::mem::swap(&mut d_out, &mut d_in);
        }
    }

    /// Summed losses over `batch`; accumulates the gradient of `total` into
    /// `grad` when given.
    pub fn batch_loss(
        &self,
        params: &[f64],
        batch: &[&Example],
        ws: &mut Workspace,
        mut grad: Option<&mut [f64]>,
    ) -> Result<BatchLoss> {
        let n_heads = self.heads.len();
        let mut out = BatchLoss {
            head_loss: vec![0.0; n_heads],
            head_weighted: vec![0.0; n_heads],
            head_count: vec![0; n_heads],
            total: 0.0,
        };
        for example in batch {
            let losses = self.sample_loss(params, example, ws, grad.as_deref_mut())?;
            for (h, loss) in losses.iter().enumerate() {
                if let (Some(loss), Some(t)) = (loss, example.targets[h]) {
                    out.head_loss[h] += loss;
                    out.head_weighted[h] += t.weight * loss;
                    out.head_count[h] += 1;
                }
            }
        }
        out.total = out.head_weighted.iter().sum();
        Ok(out)
    }

    /// Class probabilities for every head.
    pub fn predict_proba(&self, params: &[f64], input: &[f64], ws: &mut Workspace) -> Result<Vec<Vec<f64>>> {
        self.forward(params, input, ws)?;
        Ok(ws.probs.clone())
    }

    /// Errors naming the first layer whose gradient holds a NaN or infinity.
    pub fn check_gradient(&self, grad: &[f64]) -> Result<()> {
        match grad.iter().position(|g| !g.is_finite()) {
            Some(i) => Err(Error::NonFiniteGradient {
                layer: self.param_owner(i),
            }),
            None => Ok(()),
        }
    }
}

fn strip_shape(e: Error) -> String {
    match e {
        Error::Shape(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Network {
        Network::build(NetworkSpec {
            input: Shape::new(10, 2),
            trunk: vec![
                LayerSpec::conv(3),
                LayerSpec::Relu,
                LayerSpec::pool(),
                LayerSpec::Flatten,
                LayerSpec::dense(5),
                LayerSpec::Relu,
            ],
            heads: vec![HeadSpec::new("a", 3), HeadSpec::new("b", 2)],
        })
        .unwrap()
    }

    #[test]
    fn layout_and_counts() {
        let net = small();
        // conv 3*3*2+3, dense 5*12+5, heads 3*6 and 2*6
        assert_eq!(net.trunk_param_count(), 21 + 65);
        assert_eq!(net.param_count(), 21 + 65 + 18 + 12);
        assert_eq!(net.feature_width(), 5);
        assert_eq!(net.param_owner(0), "trunk[0] conv1d(3, k=3)");
        assert_eq!(net.param_owner(net.param_count() - 1), "head 'b'");
    }

    #[test]
    fn probabilities_normalised() {
        let net = small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = net.init_params(&mut rng);
        let mut ws = net.workspace();
        let input: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        for p in net.predict_proba(&params, &input, &mut ws).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_targets_give_zero_gradient() {
        let net = small();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = net.init_params(&mut rng);
        let mut ws = net.workspace();
        let ex = Example {
            input: vec![0.5; 20],
            targets: vec![None, Some(HeadTarget { class: 1, weight: 0.0 })],
        };
        let mut grad = vec![0.0; net.param_count()];
        let loss = net.batch_loss(&params, &[&ex], &mut ws, Some(&mut grad)).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
        assert_eq!(loss.head_count, vec![0, 1]);
        assert_eq!(loss.total, 0.0);
    }

    #[test]
    fn wrong_input_length_is_shape_error() {
        let net = small();
        let params = vec![0.0; net.param_count()];
        let mut ws = net.workspace();
        assert!(matches!(net.forward(&params, &[0.0; 3], &mut ws), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_check_names_layer() {
        let net = small();
        let mut grad = vec![0.0; net.param_count()];
        grad[30] = f64::NAN;
        match net.check_gradient(&grad) {
            Err(Error::NonFiniteGradient { layer }) => assert!(layer.contains("dense")),
            other => panic!("{other:?}"),
        }
    }
}
