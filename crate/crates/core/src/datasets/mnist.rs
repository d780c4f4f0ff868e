use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

const IMAGE_DIM: usize = 784;
const IDX_IMAGES: [u8; 4] = [0, 0, 8, 3];
const IDX_LABELS: [u8; 4] = [0, 0, 8, 1];

/// Which on-disk layout an MNIST file used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MnistFormat {
    /// One image per line: 784 whitespace-separated {0,1} values, optionally followed by a label.
    Text,
    /// IDX ubyte images, binarized at intensity 0.5.
    Idx,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<usize> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .ok_or_else(|| Error::Format("IDX header is truncated".into()))
}

fn labels_path(images: &Path) -> Option<PathBuf> {
    let name = images.file_name()?.to_str()?;
    let swapped = name.replace("images-idx3", "labels-idx1").replace("images.idx3", "labels.idx1");
    (swapped != name).then(|| images.with_file_name(swapped)).filter(|p| p.exists())
}

fn load_idx(bytes: &[u8], path: &Path, limit: Option<usize>) -> Result<(Array2<f64>, Vec<f64>)> {
    let count = be_u32(bytes, 4)?;
    let (rows, cols) = (be_u32(bytes, 8)?, be_u32(bytes, 12)?);
    if rows * cols != IMAGE_DIM {
        return Err(Error::Format(format!("IDX images are {rows}x{cols}, expected 28x28")));
    }
    let payload = &bytes[16..];
    if payload.len() != count * IMAGE_DIM {
        return Err(Error::Format(format!(
            "IDX header declares {count} images but payload holds {} bytes",
            payload.len()
        )));
    }
    let n = limit.map_or(count, |l| l.min(count));
    let images = Array2::from_shape_fn((n, IMAGE_DIM), |(i, j)| {
        if f64::from(payload[i * IMAGE_DIM + j]) / 255.0 > 0.5 {
            1.0
        } else {
            0.0
        }
    });
    let labels = match labels_path(path) {
        Some(lp) => {
            let lb = std::fs::read(lp)?;
            if lb.get(..4) != Some(&IDX_LABELS[..]) {
                return Err(Error::Format("label file has a bad IDX magic number".into()));
            }
            let lc = be_u32(&lb, 4)?;
            if lc != count || lb.len() != 8 + lc {
                return Err(Error::Format(format!("label file declares {lc} labels for {count} images")));
            }
            lb[8..8 + n].iter().map(|&v| f64::from(v)).collect()
        }
        None => vec![-1.0; n],
    };
    Ok((images, labels))
}

fn load_text(text: &str, limit: Option<usize>) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if limit.is_some_and(|l| labels.len() >= l) {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != IMAGE_DIM && fields.len() != IMAGE_DIM + 1 {
            return Err(Error::Format(format!(
                "line {}: expected {IMAGE_DIM} or {} values, found {}",
                lineno + 1,
                IMAGE_DIM + 1,
                fields.len()
            )));
        }
        for f in &fields[..IMAGE_DIM] {
            let v: f64 = f.parse().map_err(|_| Error::Format(format!("line {}: bad value '{f}'", lineno + 1)))?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::Format(format!("line {}: value {v} is not binary", lineno + 1)));
            }
            values.push(v);
        }
        labels.push(match fields.get(IMAGE_DIM) {
            Some(l) => l.parse().map_err(|_| Error::Format(format!("line {}: bad label '{l}'", lineno + 1)))?,
            None => -1.0,
        });
    }
    let n = labels.len();
    Ok((Array2::from_shape_vec((n, IMAGE_DIM), values).map_err(|e| Error::Format(e.to_string()))?, labels))
}

/// Loads binarized MNIST from a text split or an IDX image file (labels are
/// picked up from the sibling IDX label file when present; missing labels are −1).
pub fn mnist_load(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let (format, (images, labels)) = if bytes.starts_with(&IDX_IMAGES) {
        (MnistFormat::Idx, load_idx(&bytes, path, limit)?)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::Format("MNIST text file is not UTF-8".into()))?;
        (MnistFormat::Text, load_text(text, limit)?)
    };
    let n = labels.len();
    Dataset::new(
        "mnist",
        images,
        vec!["label".into()],
        Array2::from_shape_vec((n, 1), labels).map_err(|e| Error::Format(e.to_string()))?,
        serde_json::json!({ "source": path.display().to_string(), "format": format, "limit": limit }),
    )
}
