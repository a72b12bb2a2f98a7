//! Conventional layer-by-layer forward pass.
//!
//! This is the correctness reference for the streaming engine and is written
//! for clarity, not speed. Dot products accumulate in `f64` in a fixed order:
//! kernel row, kernel column, then input channel, all ascending; the bias is
//! added first and the activation is applied once per unit.

use thiserror::Error;

use crate::model::{conv_axis, ConvLayer, DenseLayer, LayerSpec, Network, Shape3};

#[derive(Debug, Error, PartialEq)]
pub enum ForwardError {
    #[error("expected input of shape {expected}, found {found}")]
    ShapeMismatch { expected: Shape3, found: Shape3 },
    #[error("tensor of shape {shape} needs {expected} values, found {found}")]
    LengthMismatch {
        shape: Shape3,
        expected: usize,
        found: usize,
    },
}

/// Dense feature map, row-major over `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: Shape3,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(shape: Shape3) -> Self {
        Tensor3 {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape3, data: Vec<f64>) -> Result<Self, ForwardError> {
        if data.len() != shape.len() {
            return Err(ForwardError::LengthMismatch {
                shape,
                expected: shape.len(),
                found: data.len(),
            });
        }
        Ok(Tensor3 { shape, data })
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.shape.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.shape.index(row, col, channel);
        self.data[i] = value;
    }

    /// Values of one row, `(col, channel)` order.
    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.shape.cols * self.shape.channels;
        &self.data[row * n..(row + 1) * n]
    }

    /// Values of one column, `(row, channel)` order.
    pub fn column(&self, col: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shape.rows * self.shape.channels);
        for r in 0..self.shape.rows {
            for c in 0..self.shape.channels {
                out.push(self.get(r, col, c));
            }
        }
        out
    }

    /// Copy with every row at index `>= rows` set to zero.
    pub fn zero_rows_from(&self, rows: usize) -> Tensor3 {
        let mut out = self.clone();
        let start = rows.min(self.shape.rows) * self.shape.cols * self.shape.channels;
        out.data[start..].iter_mut().for_each(|v| *v = 0.0);
        out
    }

    /// Copy with every column at index `>= cols` set to zero.
    pub fn zero_cols_from(&self, cols: usize) -> Tensor3 {
        let mut out = self.clone();
        for r in 0..self.shape.rows {
            for q in cols..self.shape.cols {
                for c in 0..self.shape.channels {
                    out.set(r, q, c, 0.0);
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn conv_forward(layer: &ConvLayer, input: &Tensor3) -> Tensor3 {
    let s = input.shape();
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let (rows, pad_top) = conv_axis(s.rows, kh, sh, layer.padding).expect("validated geometry");
    let (cols, pad_left) = conv_axis(s.cols, kw, sw, layer.padding).expect("validated geometry");
    let mut out = Tensor3::zeros(Shape3::new(rows, cols, layer.out_channels));
    for r in 0..rows {
        for q in 0..cols {
            for o in 0..layer.out_channels {
                let mut acc = f64::from(layer.bias[o]);
                for ky in 0..kh {
                    let Some(ir) = (r * sh + ky).checked_sub(pad_top).filter(|&i| i < s.rows) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(iq) = (q * sw + kx).checked_sub(pad_left).filter(|&i| i < s.cols) else {
                            continue;
                        };
                        for c in 0..layer.in_channels {
                            acc += f64::from(layer.weight(o, c, ky, kx)) * input.get(ir, iq, c);
                        }
                    }
                }
                out.set(r, q, o, layer.activation.apply(acc));
            }
        }
    }
    out
}

fn dense_layer_forward(layer: &DenseLayer, input: &Tensor3) -> Tensor3 {
    let x = input.data();
    let data = (0..layer.outputs)
        .map(|m| {
            let w = &layer.weights[m * layer.inputs..(m + 1) * layer.inputs];
            let acc = w
                .iter()
                .zip(x)
                .fold(f64::from(layer.bias[m]), |acc, (&w, &x)| acc + f64::from(w) * x);
            layer.activation.apply(acc)
        })
        .collect();
    Tensor3 {
        shape: Shape3::new(1, 1, layer.outputs),
        data,
    }
}

fn global_average(input: &Tensor3) -> Tensor3 {
    let s = input.shape();
    let count = (s.rows * s.cols) as f64;
    let mut sums = vec![0.0; s.channels];
    for px in input.data().chunks_exact(s.channels) {
        for (acc, v) in sums.iter_mut().zip(px) {
            *acc += v;
        }
    }
    Tensor3 {
        shape: Shape3::new(1, 1, s.channels),
        data: sums.into_iter().map(|v| v / count).collect(),
    }
}

/// Whether `layer` can consume a map of shape `input`.
fn accepts(layer: &LayerSpec, input: Shape3) -> bool {
    match layer {
        LayerSpec::Conv(c) => {
            c.in_channels == input.channels
                && conv_axis(input.rows, c.kernel.0, c.stride.0, c.padding).is_some()
                && conv_axis(input.cols, c.kernel.1, c.stride.1, c.padding).is_some()
        }
        LayerSpec::Dense(d) => d.inputs == input.len(),
        LayerSpec::GlobalAverage => !input.is_empty(),
    }
}

/// One layer of the reference forward pass.
///
/// `expected` is the input shape the layer was validated against.
pub fn layer_forward(layer: &LayerSpec, expected: Shape3, input: &Tensor3) -> Result<Tensor3, ForwardError> {
    if input.shape() != expected || !accepts(layer, expected) {
        return Err(ForwardError::ShapeMismatch {
            expected,
            found: input.shape(),
        });
    }
    Ok(match layer {
        LayerSpec::Conv(c) => conv_forward(c, input),
        LayerSpec::Dense(d) => dense_layer_forward(d, input),
        LayerSpec::GlobalAverage => global_average(input),
    })
}

/// Full reference forward pass; returns the last layer's values flattened
/// row-major.
pub fn dense_forward(net: &Network, input: &Tensor3) -> Result<Vec<f64>, ForwardError> {
    let mut cur = input.clone();
    for (i, layer) in net.layers().iter().enumerate() {
        cur = layer_forward(layer, net.shape(i), &cur)?;
    }
    Ok(cur.into_vec())
}
