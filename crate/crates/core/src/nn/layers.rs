//! Layer descriptions and their forward/backward kernels.
//!
//! Activations are `(length, channels)` row-major. Convolutions are "valid"
//! (no padding, stride 1) and pooling uses floor semantics, so an odd
//! trailing element is dropped.

use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize },
    MaxPool1d { size: usize },
    Dense { neurons: usize },
    Relu,
    Flatten,
}

impl LayerSpec {
    pub fn conv(filters: usize) -> Self {
        LayerSpec::Conv1d { filters, kernel: 3 }
    }

    pub fn pool() -> Self {
        LayerSpec::MaxPool1d { size: 2 }
    }

    pub fn dense(neurons: usize) -> Self {
        LayerSpec::Dense { neurons }
    }

    pub fn label(&self) -> String {
        match self {
            LayerSpec::Conv1d { filters, kernel } => format!("conv1d({filters}, k={kernel})"),
            LayerSpec::MaxPool1d { size } => format!("maxpool1d({size})"),
            LayerSpec::Dense { neurons } => format!("dense({neurons})"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::Flatten => "flatten".into(),
        }
    }

    /// Output shape for `input`, or a shape error naming the collapse.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv1d { filters, kernel } => {
                if filters == 0 || kernel == 0 {
                    return Err(Error::Shape(format!("{} has a zero dimension", self.label())));
                }
                if input.len < kernel {
                    return Err(Error::Shape(format!(
                        "{} on length {} reduces the input to a zero-dimensional output",
                        self.label(),
                        input.len
                    )));
                }
                Ok(Shape::new(input.len - kernel + 1, filters))
            }
            LayerSpec::MaxPool1d { size } => {
                if size == 0 {
                    return Err(Error::Shape("pool size must be positive".into()));
                }
                if input.len < size {
                    return Err(Error::Shape(format!(
                        "{} on length {} reduces the input to a zero-dimensional output",
                        self.label(),
                        input.len
                    )));
                }
                Ok(Shape::new(input.len / size, input.channels))
            }
            LayerSpec::Dense { neurons } => {
                if input.len != 1 {
                    return Err(Error::Shape(format!(
                        "dense layer needs a flat input, got length {} (insert a flatten)",
                        input.len
                    )));
                }
                if neurons == 0 {
                    return Err(Error::Shape("dense layer with zero neurons".into()));
                }
                Ok(Shape::new(1, neurons))
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::Flatten => Ok(Shape::new(1, input.size())),
        }
    }

    /// `(weight count, bias count)` for a layer fed with `input`.
    pub fn param_counts(&self, input: Shape) -> (usize, usize) {
        match *self {
            LayerSpec::Conv1d { filters, kernel } => (filters * kernel * input.channels, filters),
            LayerSpec::Dense { neurons } => (neurons * input.channels, neurons),
            _ => (0, 0),
        }
    }

    pub fn fan_in(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Conv1d { kernel, .. } => kernel * input.channels,
            LayerSpec::Dense { .. } => input.channels,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub len: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(len: usize, channels: usize) -> Self {
        Shape { len, channels }
    }

    pub fn size(&self) -> usize {
        self.len * self.channels
    }
}

/// Valid 1D convolution. Weights are laid out `[filter][tap][in_channel]`, so
/// output position `i` is the product of the contiguous input window starting
/// at `i * cin` with each filter; the windows overlap, which a row stride of
/// `cin` expresses without copying.
pub(crate) fn conv1d_fwd(
    input: &[f64],
    in_shape: Shape,
    weights: &[f64],
    bias: &[f64],
    kernel: usize,
    out: &mut [f64],
) {
    let cin = in_shape.channels;
    let cout = bias.len();
    let span = kernel * cin;
    let out_len = in_shape.len + 1 - kernel;
    for row in out[..out_len * cout].chunks_exact_mut(cout) {
        row.copy_from_slice(bias);
    }
    gemm(
        (out_len, span, cout),
        input,
        (cin, 1),
        weights,
        (1, span),
        1.0,
        out,
        (cout, 1),
    );
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_bwd(
    input: &[f64],
    in_shape: Shape,
    weights: &[f64],
    kernel: usize,
    cout: usize,
    d_out: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    d_input: Option<&mut [f64]>,
) {
    let cin = in_shape.channels;
    let span = kernel * cin;
    let out_len = in_shape.len + 1 - kernel;
    for row in d_out[..out_len * cout].chunks_exact(cout) {
        for (b, g) in d_bias.iter_mut().zip(row) {
            *b += g;
        }
    }
    // dW[f][p] += sum_i dY[i][f] * window_i[p]
    gemm(
        (cout, out_len, span),
        d_out,
        (1, cout),
        input,
        (cin, 1),
        1.0,
        d_weights,
        (span, 1),
    );
    if let Some(d_in) = d_input {
        d_in.fill(0.0);
        // one product per tap: dX[i + t][c] += sum_f dY[i][f] * W[f][t][c]
        for t in 0..kernel {
            gemm(
                (out_len, cout, cin),
                d_out,
                (cout, 1),
                &weights[t * cin..],
                (span, 1),
                1.0,
                &mut d_in[t * cin..],
                (cin, 1),
            );
        }
    }
}

/// Max pooling; records the winning input index per output (first on ties).
pub(crate) fn maxpool_fwd(input: &[f64], in_shape: Shape, size: usize, out: &mut [f64], argmax: &mut [u32]) {
    let c = in_shape.channels;
    let out_len = in_shape.len / size;
    for i in 0..out_len {
        for ch in 0..c {
            let mut best = (i * size) * c + ch;
            for j in 1..size {
                let idx = (i * size + j) * c + ch;
                if input[idx] > input[best] {
                    best = idx;
                }
            }
            out[i * c + ch] = input[best];
            argmax[i * c + ch] = best as u32;
        }
    }
}

pub(crate) fn maxpool_bwd(d_out: &[f64], argmax: &[u32], d_input: &mut [f64]) {
    d_input.fill(0.0);
    for (g, &idx) in d_out.iter().zip(argmax) {
        d_input[idx as usize] += g;
    }
}

/// `out[o] = bias[o] + w[o] · x` with `w` laid out `[out][in]`.
pub(crate) fn dense_fwd(x: &[f64], weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, y) in out.iter_mut().enumerate() {
        *y = bias[o] + dot(x, &weights[o * n_in..(o + 1) * n_in]);
    }
}

pub(crate) fn dense_bwd(
    x: &[f64],
    weights: &[f64],
    d_out: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    mut d_x: Option<&mut [f64]>,
) {
    let n_in = x.len();
    if let Some(dx) = d_x.as_deref_mut() {
        dx.fill(0.0);
    }
    for (o, &g) in d_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        d_bias[o] += g;
        axpy(&mut d_weights[o * n_in..(o + 1) * n_in], g, x);
        if let Some(dx) = d_x.as_deref_mut() {
            axpy(dx, g, &weights[o * n_in..(o + 1) * n_in]);
        }
    }
}

pub(crate) fn relu_fwd(input: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(input) {
        *o = if v > 0.0 { v } else { 0.0 };
    }
}

pub(crate) fn relu_bwd(output: &[f64], d_out: &[f64], d_input: &mut [f64]) {
    for ((d, &g), &y) in d_input.iter_mut().zip(d_out).zip(output) {
        *d = if y > 0.0 { g } else { 0.0 };
    }
}

/// Valid convolution of a `(L, C_in)` tensor. `weights` is
/// `[filter][tap][in_channel]`; the filter count is `bias.len()`.
pub fn conv1d_forward(input: &Tensor, weights: &[f64], bias: &[f64], kernel: usize) -> Result<Tensor> {
    let (len, cin) = input.len_channels()?;
    let spec = LayerSpec::Conv1d {
        filters: bias.len(),
        kernel,
    };
    let in_shape = Shape::new(len, cin);
    let out_shape = spec.output_shape(in_shape)?;
    if weights.len() != bias.len() * kernel * cin {
        return Err(Error::Shape(format!(
            "conv weights: expected {} values, got {}",
            bias.len() * kernel * cin,
            weights.len()
        )));
    }
    let mut out = vec![0.0; out_shape.size()];
    conv1d_fwd(input.data(), in_shape, weights, bias, kernel, &mut out);
    let out = Tensor::new(vec![out_shape.len, out_shape.channels], out)?;
    out.check_finite("conv1d output")?;
    Ok(out)
}

/// Max pooling with window and stride 2.
pub fn maxpool1d(input: &Tensor) -> Result<Tensor> {
    let (len, c) = input.len_channels()?;
    let in_shape = Shape::new(len, c);
    let out_shape = LayerSpec::pool().output_shape(in_shape)?;
    let mut out = vec![0.0; out_shape.size()];
    let mut argmax = vec![0; out_shape.size()];
    maxpool_fwd(input.data(), in_shape, 2, &mut out, &mut argmax);
    Tensor::new(vec![out_shape.len, c], out)
}
