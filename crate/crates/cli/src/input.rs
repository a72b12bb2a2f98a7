//! Input files: IDX (ubyte images and labels), CSV and raw little-endian f32.

use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;
use conecast::{Shape3, Tensor3};

use crate::error::CliError;

pub const IDX_IMAGES: u32 = 0x0000_0803;
pub const IDX_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Idx,
    Csv,
    Raw32,
}

impl InputFormat {
    /// Guess from the file extension; anything unknown is raw f32.
    pub fn from_path(path: &Path) -> InputFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => InputFormat::Csv,
            Some("idx") | Some("ubyte") | Some("idx3-ubyte") => InputFormat::Idx,
            _ => InputFormat::Raw32,
        }
    }
}

/// A decoded input tensor.
#[derive(Debug, Clone)]
pub struct InputFile {
    pub format: InputFormat,
    pub values: Tensor3,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn shape_error(path: &Path, expected: Shape3, detail: String) -> CliError {
    CliError::Input(format!(
        "{}: expected input of shape {expected}, {detail}",
        path.display()
    ))
}

/// Reads one input of shape `expected`. For IDX image files `index` selects
/// the image.
pub fn read_input(path: &Path, format: InputFormat, expected: Shape3, index: usize) -> Result<InputFile, CliError> {
    let values = match format {
        InputFormat::Raw32 => {
            let bytes = read(path)?;
            if bytes.len() != expected.len() * 4 {
                return Err(shape_error(path, expected, format!("found {} bytes", bytes.len())));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect();
            Tensor3::from_vec(expected, data).expect("length checked")
        }
        InputFormat::Csv => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            if lines.len() != expected.rows {
                return Err(shape_error(path, expected, format!("found {} lines", lines.len())));
            }
            let per_line = expected.cols * expected.channels;
            let mut data = Vec::with_capacity(expected.len());
            for (n, line) in lines.iter().enumerate() {
                let before = data.len();
                for field in line.split(',') {
                    let v: f64 = field.trim().parse().map_err(|_| {
                        CliError::Input(format!(
                            "{}:{}: not a number: {:?}",
                            path.display(),
                            n + 1,
                            field.trim()
                        ))
                    })?;
                    data.push(v);
                }
                if data.len() - before != per_line {
                    return Err(shape_error(
                        path,
                        expected,
                        format!("line {} has {} values", n + 1, data.len() - before),
                    ));
                }
            }
            Tensor3::from_vec(expected, data).expect("length checked")
        }
        InputFormat::Idx => {
            let bytes = read(path)?;
            let (dims, body) = parse_idx(path, &bytes, IDX_IMAGES)?;
            let (count, rows, cols) = (dims[0], dims[1], dims[2]);
            if expected.channels != 1 || rows != expected.rows || cols != expected.cols {
                return Err(shape_error(path, expected, format!("found {rows}x{cols} images")));
            }
            if index >= count {
                return Err(CliError::Input(format!(
                    "{}: image index {index} out of range ({count} images)",
                    path.display()
                )));
            }
            let n = rows * cols;
            let data = body[index * n..(index + 1) * n]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect();
            Tensor3::from_vec(expected, data).expect("length checked")
        }
    };
    if !values.is_finite() {
        return Err(CliError::Input(format!("{}: non-finite input value", path.display())));
    }
    Ok(InputFile { format, values })
}

/// Reads an IDX label file.
pub fn read_labels(path: &Path) -> Result<Vec<u8>, CliError> {
    let bytes = read(path)?;
    let (_, body) = parse_idx(path, &bytes, IDX_LABELS)?;
    Ok(body.to_vec())
}

fn parse_idx<'a>(path: &Path, bytes: &'a [u8], magic: u32) -> Result<(Vec<usize>, &'a [u8]), CliError> {
    let bad = |what: &str| CliError::Input(format!("{}: {what}", path.display()));
    let word = |i: usize| -> Option<u32> {
        let b = bytes.get(4 * i..4 * i + 4)?;
        Some(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    };
    let found = word(0).ok_or_else(|| bad("truncated IDX header"))?;
    if found != magic {
        return Err(bad(&format!("IDX magic {found:#010x}, expected {magic:#010x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (1..=ndim)
        .map(|i| word(i).map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("truncated IDX header"))?;
    let body = &bytes[4 * (ndim + 1)..];
    let len: usize = dims.iter().product();
    if body.len() != len {
        return Err(bad(&format!(
            "IDX body has {} bytes, header declares {len}",
            body.len()
        )));
    }
    Ok((dims, body))
}

/// Writes `values` in `format`. IDX output quantizes to ubyte and needs a
/// single channel.
pub fn write_input(path: &Path, format: InputFormat, values: &Tensor3) -> Result<(), CliError> {
    let s = values.shape();
    let bytes = match format {
        InputFormat::Raw32 => values.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
        InputFormat::Csv => {
            let mut text = String::new();
            for r in 0..s.rows {
                let row: Vec<String> = values.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(text, "{}", row.join(",")).unwrap();
            }
            text.into_bytes()
        }
        InputFormat::Idx => {
            if s.channels != 1 {
                return Err(CliError::Input(format!(
                    "IDX images need one channel, input has {}",
                    s.channels
                )));
            }
            let mut out = Vec::with_capacity(16 + s.len());
            for word in [IDX_IMAGES, 1, s.rows as u32, s.cols as u32] {
                out.extend_from_slice(&word.to_be_bytes());
            }
            out.extend(values.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
            out
        }
    };
    std::fs::write(path, bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
