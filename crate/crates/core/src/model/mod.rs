//! Network descriptions shared by the dense reference and the streaming engine.
//!
//! A [`NetworkSpec`] is a plain, unchecked description. [`NetworkSpec::validate`]
//! checks the layer chain and produces a [`Network`], which carries the inferred
//! per-layer output shapes and is immutable from then on.

mod generate;
mod io;
pub mod rng;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{random_input, random_network, HeadChoice, RandomNetConfig};
pub use io::{load_model, save_model, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer {layer}: expected {expected} input values/channels, found {found}")]
    ShapeMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: output would have an empty dimension")]
    EmptyOutput { layer: usize },
    #[error("layer {layer}: {reason}")]
    BadHead { layer: usize, reason: &'static str },
    #[error("layer {layer}: {what} has {found} values, shape requires {expected}")]
    ParameterLength {
        layer: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: non-finite parameter at index {index}")]
    NonFiniteParameter { layer: usize, index: usize },
    #[error("layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: &'static str },
    #[error("infeasible shape: {0}")]
    InfeasibleShape(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported layer kind `{0}`")]
    UnsupportedLayer(String),
    #[error("weight blob has {found} bytes, manifest declares {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Elementwise non-linearity. Every variant satisfies `f(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Identity, Activation::Relu, Activation::Tanh];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

/// Feature map shape, `(rows, cols, channels)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape3 {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl Shape3 {
    pub const fn new(rows: usize, cols: usize, channels: usize) -> Self {
        Shape3 { rows, cols, channels }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major `(row, col, channel)` offset.
    #[inline]
    pub const fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.cols + col) * self.channels + channel
    }
}

impl fmt::Display for Shape3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.rows, self.cols, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `(rows, cols)`
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    /// Layout `[out][in][kh][kw]`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel.0 * self.kernel.1
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize, ky: usize, kx: usize) -> f32 {
        let (kh, kw) = self.kernel;
        self.weights[((out * self.in_channels + inp) * kh + ky) * kw + kx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// Layout `[out][in]`; the input index is row-major over the incoming map.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv(ConvLayer),
    Dense(DenseLayer),
    /// Spatial mean per channel. No parameters, identity activation.
    GlobalAverage,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv(_) => "conv",
            LayerSpec::Dense(_) => "dense",
            LayerSpec::GlobalAverage => "global_average",
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            LayerSpec::Conv(c) => c.activation,
            LayerSpec::Dense(d) => d.activation,
            LayerSpec::GlobalAverage => Activation::Identity,
        }
    }

    pub fn bias(&self) -> &[f32] {
        match self {
            LayerSpec::Conv(c) => &c.bias,
            LayerSpec::Dense(d) => &d.bias,
            LayerSpec::GlobalAverage => &[],
        }
    }

    pub fn is_head(&self) -> bool {
        !matches!(self, LayerSpec::Conv(_))
    }
}

/// Unchecked network description.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_shape: Shape3,
    pub layers: Vec<LayerSpec>,
}

/// Output length and leading padding along one spatial axis.
pub(crate) fn conv_axis(input: usize, kernel: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if input < kernel {
                None
            } else {
                Some(((input - kernel) / stride + 1, 0))
            }
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

impl NetworkSpec {
    pub fn new(input_shape: Shape3, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec { input_shape, layers }
    }

    /// Checks the layer chain and infers every layer's output shape.
    pub fn validate(&self) -> Result<Network, ModelError> {
        if self.input_shape.is_empty() {
            return Err(ModelError::EmptyOutput { layer: 0 });
        }
        if self.layers.is_empty() {
            return Err(ModelError::InvalidLayer {
                layer: 0,
                reason: "network has no layers",
            });
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape;
        let mut seen_head = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let n = i + 1;
            let next = match layer {
                LayerSpec::Conv(c) => {
                    if seen_head {
                        return Err(ModelError::BadHead {
                            layer: n,
                            reason: "convolution after a dense or global_average layer",
                        });
                    }
                    if c.kernel.0 == 0 || c.kernel.1 == 0 || c.stride.0 == 0 || c.stride.1 == 0 {
                        return Err(ModelError::InvalidLayer {
                            layer: n,
                            reason: "kernel and stride must be at least 1",
                        });
                    }
                    if c.out_channels == 0 {
                        return Err(ModelError::EmptyOutput { layer: n });
                    }
                    if c.in_channels != cur.channels {
                        return Err(ModelError::ShapeMismatch {
                            layer: n,
                            expected: cur.channels,
                            found: c.in_channels,
                        });
                    }
                    check_params(n, "weights", c.weight_count(), &c.weights)?;
                    check_params(n, "bias", c.out_channels, &c.bias)?;
                    let rows = conv_axis(cur.rows, c.kernel.0, c.stride.0, c.padding);
                    let cols = conv_axis(cur.cols, c.kernel.1, c.stride.1, c.padding);
                    match (rows, cols) {
                        (Some((r, _)), Some((q, _))) => Shape3::new(r, q, c.out_channels),
                        _ => return Err(ModelError::EmptyOutput { layer: n }),
                    }
                }
                LayerSpec::Dense(d) => {
                    seen_head = true;
                    if d.outputs == 0 {
                        return Err(ModelError::EmptyOutput { layer: n });
                    }
                    if d.inputs != cur.len() {
                        return Err(ModelError::ShapeMismatch {
                            layer: n,
                            expected: cur.len(),
                            found: d.inputs,
                        });
                    }
                    check_params(n, "weights", d.inputs * d.outputs, &d.weights)?;
                    check_params(n, "bias", d.outputs, &d.bias)?;
                    Shape3::new(1, 1, d.outputs)
                }
                LayerSpec::GlobalAverage => {
                    if seen_head {
                        return Err(ModelError::BadHead {
                            layer: n,
                            reason: "global_average may only follow convolutions",
                        });
                    }
                    seen_head = true;
                    Shape3::new(1, 1, cur.channels)
                }
            };
            shapes.push(next);
            cur = next;
        }
        Ok(Network {
            spec: self.clone(),
            shapes,
        })
    }
}

fn check_params(layer: usize, what: &'static str, expected: usize, values: &[f32]) -> Result<(), ModelError> {
    if values.len() != expected {
        return Err(ModelError::ParameterLength {
            layer,
            what,
            expected,
            found: values.len(),
        });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteParameter { layer, index });
    }
    Ok(())
}

/// A validated network. Immutable; share it freely between evaluators.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Shape3>,
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> Shape3 {
        self.spec.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.spec.layers
    }

    /// Output shape of layer `n` (1-based); `n = 0` is the input.
    pub fn shape(&self, n: usize) -> Shape3 {
        if n == 0 {
            self.spec.input_shape
        } else {
            self.shapes[n - 1]
        }
    }

    /// Inferred output shapes, one per layer.
    pub fn inferred_shapes(&self) -> &[Shape3] {
        &self.shapes
    }

    pub fn output_len(&self) -> usize {
        self.shape(self.spec.layers.len()).len()
    }

    pub fn has_zero_bias(&self) -> bool {
        self.first_nonzero_bias().is_none()
    }

    /// 1-based index of the first layer carrying a nonzero bias.
    pub fn first_nonzero_bias(&self) -> Option<usize> {
        self.spec
            .layers
            .iter()
            .position(|l| l.bias().iter().any(|&b| b != 0.0))
            .map(|i| i + 1)
    }

    /// Same layers on a different input size. Fails when the new geometry
    /// does not chain, e.g. a dense layer sized for the old feature map.
    pub fn with_input_size(&self, rows: usize, cols: usize) -> Result<Network, ModelError> {
        let mut spec = self.spec.clone();
        spec.input_shape.rows = rows;
        spec.input_shape.cols = cols;
        spec.validate()
    }

    pub fn parameter_count(&self) -> usize {
        self.spec
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv(c) => c.weights.len() + c.bias.len(),
                LayerSpec::Dense(d) => d.weights.len() + d.bias.len(),
                LayerSpec::GlobalAverage => 0,
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn conv(k: (usize, usize), s: (usize, usize), padding: Padding, cin: usize, cout: usize) -> LayerSpec {
        LayerSpec::Conv(ConvLayer {
            kernel: k,
            stride: s,
            padding,
            in_channels: cin,
            out_channels: cout,
            activation: Activation::Relu,
            weights: vec![0.5; cout * cin * k.0 * k.1],
            bias: vec![0.0; cout],
        })
    }

    #[test]
    fn activations_vanish_at_zero() {
        for f in Activation::ALL {
            assert_eq!(f.apply(0.0), 0.0);
            assert_eq!(f.apply(-1.5), f.apply(-1.5));
        }
    }

    #[test]
    fn valid_conv_shape() {
        let spec = NetworkSpec::new(Shape3::new(28, 28, 1), vec![conv((3, 3), (1, 1), Padding::Valid, 1, 4)]);
        let net = spec.validate().unwrap();
        assert_eq!(net.shape(1), Shape3::new(26, 26, 4));
    }

    #[test]
    fn same_conv_shape() {
        let spec = NetworkSpec::new(Shape3::new(28, 28, 1), vec![conv((3, 3), (1, 1), Padding::Same, 1, 4)]);
        assert_eq!(spec.validate().unwrap().shape(1), Shape3::new(28, 28, 4));
        let spec = NetworkSpec::new(Shape3::new(7, 8, 1), vec![conv((3, 3), (2, 2), Padding::Same, 1, 2)]);
        assert_eq!(spec.validate().unwrap().shape(1), Shape3::new(4, 4, 2));
    }

    #[test]
    fn same_padding_split() {
        assert_eq!(conv_axis(5, 3, 1, Padding::Same), Some((5, 1)));
        assert_eq!(conv_axis(5, 4, 1, Padding::Same), Some((5, 1)));
        assert_eq!(conv_axis(6, 3, 2, Padding::Same), Some((3, 0)));
        assert_eq!(conv_axis(2, 3, 1, Padding::Valid), None);
        assert_eq!(conv_axis(7, 3, 2, Padding::Valid), Some((3, 0)));
    }

    #[test]
    fn broken_channel_chain() {
        let spec = NetworkSpec::new(
            Shape3::new(10, 10, 1),
            vec![
                conv((3, 3), (1, 1), Padding::Valid, 1, 8),
                conv((3, 3), (1, 1), Padding::Valid, 4, 2),
            ],
        );
        assert!(matches!(
            spec.validate(),
            Err(ModelError::ShapeMismatch {
                layer: 2,
                expected: 8,
                found: 4
            })
        ));
    }

    #[test]
    fn collapsing_conv_is_empty_output() {
        let spec = NetworkSpec::new(Shape3::new(2, 10, 1), vec![conv((3, 3), (1, 1), Padding::Valid, 1, 1)]);
        assert!(matches!(spec.validate(), Err(ModelError::EmptyOutput { layer: 1 })));
    }

    #[test]
    fn conv_after_head_is_rejected() {
        let spec = NetworkSpec::new(
            Shape3::new(5, 5, 1),
            vec![LayerSpec::GlobalAverage, conv((1, 1), (1, 1), Padding::Valid, 1, 1)],
        );
        assert!(matches!(spec.validate(), Err(ModelError::BadHead { layer: 2, .. })));
        let spec = NetworkSpec::new(
            Shape3::new(5, 5, 1),
            vec![
                LayerSpec::Dense(DenseLayer {
                    inputs: 25,
                    outputs: 2,
                    activation: Activation::Identity,
                    weights: vec![0.0; 50],
                    bias: vec![0.0; 2],
                }),
                LayerSpec::GlobalAverage,
            ],
        );
        assert!(matches!(spec.validate(), Err(ModelError::BadHead { layer: 2, .. })));
    }

    #[test]
    fn parameter_lengths_are_checked() {
        let mut layer = conv((3, 3), (1, 1), Padding::Valid, 1, 2);
        if let LayerSpec::Conv(c) = &mut layer {
            c.weights.pop();
        }
        let spec = NetworkSpec::new(Shape3::new(5, 5, 1), vec![layer]);
        assert!(matches!(
            spec.validate(),
            Err(ModelError::ParameterLength { what: "weights", .. })
        ));
    }

    #[test]
    fn validate_is_idempotent() {
        let spec = NetworkSpec::new(
            Shape3::new(9, 6, 2),
            vec![conv((3, 2), (2, 1), Padding::Same, 2, 3), LayerSpec::GlobalAverage],
        );
        let once = spec.validate().unwrap();
        let twice = once.spec().validate().unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn rebinding_input_size() {
        let spec = NetworkSpec::new(
            Shape3::new(9, 6, 1),
            vec![conv((3, 3), (1, 1), Padding::Valid, 1, 3), LayerSpec::GlobalAverage],
        );
        let net = spec.validate().unwrap();
        let wide = net.with_input_size(9, 30).unwrap();
        assert_eq!(wide.shape(1), Shape3::new(7, 28, 3));
        assert!(net.with_input_size(2, 30).is_err());
    }
}
