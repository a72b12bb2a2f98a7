//! Model persistence: a JSON manifest plus a raw little-endian `f32` blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Activation, ConvLayer, DenseLayer, LayerSpec, ModelError, Network, NetworkSpec, Padding, Shape3};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u64,
    input_shape: [usize; 3],
    layers: Vec<ManifestLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ManifestLayer {
    Conv {
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: Padding,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        weights_offset: usize,
        bias_offset: usize,
    },
    Dense {
        #[serde(rename = "in")]
        inputs: usize,
        #[serde(rename = "out")]
        outputs: usize,
        activation: Activation,
        weights_offset: usize,
        bias_offset: usize,
    },
    GlobalAverage,
}

const KNOWN_KINDS: [&str; 3] = ["conv", "dense", "global_average"];

fn push_tensor(blob: &mut Vec<u8>, values: &[f32]) -> usize {
    let offset = blob.len();
    for v in values {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    offset
}

/// Writes `net` as a manifest and a weight blob. Tensors are laid out in layer
/// order, weights before bias.
pub fn save_model(net: &Network, manifest_path: &Path, blob_path: &Path) -> Result<(), ModelError> {
    let spec = net.spec();
    let mut blob = Vec::with_capacity(net.parameter_count() * 4);
    let layers = spec
        .layers
        .iter()
        .map(|layer| match layer {
            LayerSpec::Conv(c) => ManifestLayer::Conv {
                kernel: [c.kernel.0, c.kernel.1],
                stride: [c.stride.0, c.stride.1],
                padding: c.padding,
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                activation: c.activation,
                weights_offset: push_tensor(&mut blob, &c.weights),
                bias_offset: push_tensor(&mut blob, &c.bias),
            },
            LayerSpec::Dense(d) => ManifestLayer::Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                activation: d.activation,
                weights_offset: push_tensor(&mut blob, &d.weights),
                bias_offset: push_tensor(&mut blob, &d.bias),
            },
            LayerSpec::GlobalAverage => ManifestLayer::GlobalAverage,
        })
        .collect();
    let s = spec.input_shape;
    let manifest = Manifest {
        version: FORMAT_VERSION,
        input_shape: [s.rows, s.cols, s.channels],
        layers,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| ModelError::Format(e.to_string()))?;
    text.push('\n');
    fs::write(manifest_path, text)?;
    fs::write(blob_path, blob)?;
    Ok(())
}

fn read_tensor(blob: &[u8], offset: usize, count: usize, what: &str) -> Result<Vec<f32>, ModelError> {
    let end = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(offset))
        .filter(|&end| end <= blob.len())
        .ok_or_else(|| ModelError::Format(format!("{what} at byte {offset} runs past the end of the blob")))?;
    Ok(blob[offset..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn parse_manifest(text: &str) -> Result<Manifest, ModelError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
    match value.get("version") {
        Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(ModelError::Format(format!(
                "unsupported manifest version {v}, this reader supports {FORMAT_VERSION}"
            )))
        }
        None => return Err(ModelError::Format("manifest has no version".into())),
    }
    if let Some(layers) = value.get("layers").and_then(Value::as_array) {
        for layer in layers {
            let kind = layer
                .get("kind")
                .and_then(Value::as_str)
                .ok_or_else(|| ModelError::Format("layer without a string `kind`".into()))?;
            if !KNOWN_KINDS.contains(&kind) {
                return Err(ModelError::UnsupportedLayer(kind.to_string()));
            }
        }
    }
    serde_json::from_value(value).map_err(|e| ModelError::Format(e.to_string()))
}

/// Reads a manifest and weight blob and validates the result.
pub fn load_model(manifest_path: &Path, blob_path: &Path) -> Result<Network, ModelError> {
    let manifest = parse_manifest(&fs::read_to_string(manifest_path)?)?;
    let blob = fs::read(blob_path)?;

    let declared: usize = manifest
        .layers
        .iter()
        .map(|l| match l {
            ManifestLayer::Conv {
                kernel,
                in_channels,
                out_channels,
                ..
            } => out_channels * in_channels * kernel[0] * kernel[1] + out_channels,
            ManifestLayer::Dense { inputs, outputs, .. } => inputs * outputs + outputs,
            ManifestLayer::GlobalAverage => 0,
        })
        .sum::<usize>()
        * 4;
    if declared != blob.len() {
        return Err(ModelError::SizeMismatch {
            expected: declared,
            found: blob.len(),
        });
    }

    let layers = manifest
        .layers
        .into_iter()
        .map(|l| -> Result<LayerSpec, ModelError> {
            Ok(match l {
                ManifestLayer::Conv {
                    kernel,
                    stride,
                    padding,
                    in_channels,
                    out_channels,
                    activation,
                    weights_offset,
                    bias_offset,
                } => LayerSpec::Conv(ConvLayer {
                    kernel: (kernel[0], kernel[1]),
                    stride: (stride[0], stride[1]),
                    padding,
                    in_channels,
                    out_channels,
                    activation,
                    weights: read_tensor(
                        &blob,
                        weights_offset,
                        out_channels * in_channels * kernel[0] * kernel[1],
                        "conv weights",
                    )?,
                    bias: read_tensor(&blob, bias_offset, out_channels, "conv bias")?,
                }),
                ManifestLayer::Dense {
                    inputs,
                    outputs,
                    activation,
                    weights_offset,
                    bias_offset,
                } => LayerSpec::Dense(DenseLayer {
                    inputs,
                    outputs,
                    activation,
                    weights: read_tensor(&blob, weights_offset, inputs * outputs, "dense weights")?,
                    bias: read_tensor(&blob, bias_offset, outputs, "dense bias")?,
                }),
                ManifestLayer::GlobalAverage => LayerSpec::GlobalAverage,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let [rows, cols, channels] = manifest.input_shape;
    NetworkSpec::new(Shape3::new(rows, cols, channels), layers).validate()
}
