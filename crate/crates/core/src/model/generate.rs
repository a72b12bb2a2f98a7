use std::ops::RangeInclusive;

use super::rng::FixtureRng;
use super::{
    conv_axis, Activation, ConvLayer, DenseLayer, LayerSpec, ModelError, Network, NetworkSpec, Padding, Shape3,
};
use crate::dense_ref::Tensor3;

/// Which layers to put after the convolution stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadChoice {
    /// Conv stack only; the last feature map is the output.
    None,
    GlobalAverage,
    GlobalAverageDense,
    /// Dense layer over the full last feature map.
    Dense,
    /// Drawn per network from the four options above.
    Any,
}

#[derive(Debug, Clone)]
pub struct RandomNetConfig {
    /// Number of convolution layers.
    pub depth: usize,
    pub height: RangeInclusive<usize>,
    pub width: RangeInclusive<usize>,
    /// Input and per-layer channel counts.
    pub channels: RangeInclusive<usize>,
    pub max_kernel: usize,
    /// `None` draws an activation per layer.
    pub activation: Option<Activation>,
    pub head: HeadChoice,
    pub head_outputs: RangeInclusive<usize>,
    pub allow_stride: bool,
    pub allow_same: bool,
}

impl Default for RandomNetConfig {
    fn default() -> Self {
        RandomNetConfig {
            depth: 2,
            height: 4..=16,
            width: 4..=16,
            channels: 1..=8,
            max_kernel: 3,
            activation: None,
            head: HeadChoice::Any,
            head_outputs: 1..=10,
            allow_stride: true,
            allow_same: true,
        }
    }
}

fn check_range(name: &str, r: &RangeInclusive<usize>) -> Result<(), ModelError> {
    if r.is_empty() || *r.start() == 0 {
        return Err(ModelError::InfeasibleShape(format!(
            "{name} range {}..={} must be non-empty and positive",
            r.start(),
            r.end()
        )));
    }
    Ok(())
}

/// Draws a zero-bias network with weights uniform in `[-1, 1)`.
///
/// Per conv layer: padding (`same` with probability 1/2 when allowed), then
/// kernel rows/cols uniform in `1..=max_kernel` (capped by the current map
/// size under `valid`), then stride 2 with probability 1/4 per axis when
/// allowed, then output channels, activation and weights in `[out][in][kh][kw]`
/// order. The result is a pure function of `seed` and `config`.
pub fn random_network(seed: u64, config: &RandomNetConfig) -> Result<Network, ModelError> {
    if config.depth == 0 {
        return Err(ModelError::InfeasibleShape("depth must be at least 1".into()));
    }
    if config.max_kernel == 0 {
        return Err(ModelError::InfeasibleShape("max_kernel must be at least 1".into()));
    }
    check_range("height", &config.height)?;
    check_range("width", &config.width)?;
    check_range("channels", &config.channels)?;
    check_range("head_outputs", &config.head_outputs)?;

    let mut rng = FixtureRng::new(seed);
    let rows = rng.range(*config.height.start(), *config.height.end());
    let cols = rng.range(*config.width.start(), *config.width.end());
    let c0 = rng.range(*config.channels.start(), *config.channels.end());
    let input_shape = Shape3::new(rows, cols, c0);

    let mut cur = input_shape;
    let mut layers = Vec::new();
    for _ in 0..config.depth {
        let padding = if config.allow_same && rng.chance(1, 2) {
            Padding::Same
        } else {
            Padding::Valid
        };
        let cap = |n: usize| match padding {
            Padding::Valid => config.max_kernel.min(n),
            Padding::Same => config.max_kernel,
        };
        let kh = rng.range(1, cap(cur.rows));
        let kw = rng.range(1, cap(cur.cols));
        let mut stride = |n: usize| {
            if config.allow_stride && n >= 2 && rng.chance(1, 4) {
                2
            } else {
                1
            }
        };
        let sh = stride(cur.rows);
        let sw = stride(cur.cols);
        let out_channels = rng.range(*config.channels.start(), *config.channels.end());
        let activation = config.activation.unwrap_or_else(|| rng.pick(&Activation::ALL));
        let count = out_channels * cur.channels * kh * kw;
        let weights = (0..count).map(|_| rng.symmetric_f32()).collect();
        let (out_rows, _) = conv_axis(cur.rows, kh, sh, padding).expect("kernel capped to map");
        let (out_cols, _) = conv_axis(cur.cols, kw, sw, padding).expect("kernel capped to map");
        layers.push(LayerSpec::Conv(ConvLayer {
            kernel: (kh, kw),
            stride: (sh, sw),
            padding,
            in_channels: cur.channels,
            out_channels,
            activation,
            weights,
            bias: vec![0.0; out_channels],
        }));
        cur = Shape3::new(out_rows, out_cols, out_channels);
    }

    let head = match config.head {
        HeadChoice::Any => rng.pick(&[
            HeadChoice::None,
            HeadChoice::GlobalAverage,
            HeadChoice::GlobalAverageDense,
            HeadChoice::Dense,
        ]),
        other => other,
    };
    let dense = |rng: &mut FixtureRng, inputs: usize| {
        let outputs = rng.range(*config.head_outputs.start(), *config.head_outputs.end());
        let activation = config.activation.unwrap_or_else(|| rng.pick(&Activation::ALL));
        let weights = (0..inputs * outputs).map(|_| rng.symmetric_f32()).collect();
        LayerSpec::Dense(DenseLayer {
            inputs,
            outputs,
            activation,
            weights,
            bias: vec![0.0; outputs],
        })
    };
    match head {
        HeadChoice::None | HeadChoice::Any => {}
        HeadChoice::GlobalAverage => layers.push(LayerSpec::GlobalAverage),
        HeadChoice::GlobalAverageDense => {
            layers.push(LayerSpec::GlobalAverage);
            layers.push(dense(&mut rng, cur.channels));
        }
        HeadChoice::Dense => layers.push(dense(&mut rng, cur.len())),
    }

    NetworkSpec::new(input_shape, layers).validate()
}

/// Random input of the given shape. Each element is nonzero with probability
/// `density` and then uniform in `(0, 1]`.
pub fn random_input(seed: u64, shape: Shape3, density: f64) -> Tensor3 {
    let mut rng = FixtureRng::new(seed);
    let data = (0..shape.len())
        .map(|_| {
            let keep = rng.unit_f64() < density;
            let v = 1.0 - rng.unit_f64();
            if keep {
                v
            } else {
                0.0
            }
        })
        .collect();
    Tensor3::from_vec(shape, data).expect("length matches shape")
}
