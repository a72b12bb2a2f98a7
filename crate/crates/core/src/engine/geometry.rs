//! Connectivity in streaming coordinates.
//!
//! The engine streams along one spatial axis (`s`) and treats the other as the
//! cross axis (`x`). For [`StreamAxis::Rows`] that is `(s, x) = (row, col)`;
//! for [`StreamAxis::Columns`] it is `(s, x) = (col, row)`.

use std::ops::Range;

use crate::model::{conv_axis, ConvLayer, Shape3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamAxis {
    Rows,
    Columns,
}

/// One spatial axis of a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AxisGeom {
    pub in_len: usize,
    pub out_len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl AxisGeom {
    /// Output positions whose window covers input position `i`.
    pub fn targets(&self, i: usize) -> Range<usize> {
        let ip = i + self.pad;
        let lo = (ip + 1).saturating_sub(self.kernel).div_ceil(self.stride);
        let hi = (ip / self.stride + 1).min(self.out_len);
        lo..hi.max(lo)
    }

    /// Kernel tap connecting input `i` to output `r`.
    #[inline]
    pub fn tap(&self, i: usize, r: usize) -> usize {
        i + self.pad - r * self.stride
    }

    /// First in-bounds input position read by output `r`.
    pub fn first_dep(&self, r: usize) -> usize {
        (r * self.stride).saturating_sub(self.pad)
    }

    /// Last in-bounds input position read by output `r`.
    pub fn last_dep(&self, r: usize) -> usize {
        (r * self.stride + self.kernel - 1 - self.pad).min(self.in_len - 1)
    }
}

/// Feature map layout in streaming coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MapGeom {
    pub shape: Shape3,
    pub axis: StreamAxis,
}

impl MapGeom {
    pub fn stream_len(&self) -> usize {
        match self.axis {
            StreamAxis::Rows => self.shape.rows,
            StreamAxis::Columns => self.shape.cols,
        }
    }

    pub fn cross_len(&self) -> usize {
        match self.axis {
            StreamAxis::Rows => self.shape.cols,
            StreamAxis::Columns => self.shape.rows,
        }
    }

    /// Scalars in one stream slice.
    pub fn slice_len(&self) -> usize {
        self.cross_len() * self.shape.channels
    }

    #[inline]
    pub fn to_row_col(self, s: usize, x: usize) -> (usize, usize) {
        match self.axis {
            StreamAxis::Rows => (s, x),
            StreamAxis::Columns => (x, s),
        }
    }

    /// Row-major `(row, col, channel)` offset.
    #[inline]
    pub fn flat(&self, s: usize, x: usize, c: usize) -> usize {
        let (row, col) = self.to_row_col(s, x);
        self.shape.index(row, col, c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvGeom {
    pub s: AxisGeom,
    pub x: AxisGeom,
    pub in_channels: usize,
    pub out_channels: usize,
    kernel: (usize, usize),
    axis: StreamAxis,
}

impl ConvGeom {
    pub fn new(layer: &ConvLayer, input: Shape3, axis: StreamAxis) -> Self {
        let axis_geom = |in_len: usize, kernel: usize, stride: usize| {
            let (out_len, pad) = conv_axis(in_len, kernel, stride, layer.padding).expect("validated geometry");
            AxisGeom {
                in_len,
                out_len,
                kernel,
                stride,
                pad,
            }
        };
        let rows = axis_geom(input.rows, layer.kernel.0, layer.stride.0);
        let cols = axis_geom(input.cols, layer.kernel.1, layer.stride.1);
        let (s, x) = match axis {
            StreamAxis::Rows => (rows, cols),
            StreamAxis::Columns => (cols, rows),
        };
        ConvGeom {
            s,
            x,
            in_channels: layer.in_channels,
            out_channels: layer.out_channels,
            kernel: layer.kernel,
            axis,
        }
    }

    /// Offset into the `[out][in][kh][kw]` weight array for stream/cross taps.
    #[inline]
    pub fn weight_index(&self, out: usize, inp: usize, tap_s: usize, tap_x: usize) -> usize {
        let (ky, kx) = match self.axis {
            StreamAxis::Rows => (tap_s, tap_x),
            StreamAxis::Columns => (tap_x, tap_s),
        };
        ((out * self.in_channels + inp) * self.kernel.0 + ky) * self.kernel.1 + kx
    }
}
