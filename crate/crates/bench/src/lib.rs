//! Fixtures shared by the criterion benches.

use conecast::{random_input, random_network, Activation, HeadChoice, Network, RandomNetConfig, Tensor3};

/// A seeded conv stack with a global-average head and a matching input of
/// the given density.
pub fn fixture(seed: u64, depth: usize, rows: usize, cols: usize, channels: usize, density: f64) -> (Network, Tensor3) {
    let config = RandomNetConfig {
        depth,
        height: rows..=rows,
        width: cols..=cols,
        channels: channels..=channels,
        max_kernel: 3,
        activation: Some(Activation::Tanh),
        head: HeadChoice::GlobalAverage,
        allow_stride: false,
        allow_same: true,
        ..RandomNetConfig::default()
    };
    let net = random_network(seed, &config).expect("feasible fixture");
    let input = random_input(seed, net.input_shape(), density);
    (net, input)
}
