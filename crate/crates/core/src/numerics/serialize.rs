//! Binary parameter files.
//!
//! Layout: an 8-byte little-endian `u64` giving the JSON header length, the
//! UTF-8 JSON header, then a contiguous little-endian `f64` payload. For
//! networks the payload holds every layer in order, weights row-major
//! followed by biases.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Activation, Layer, Mlp, Real};
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "latgeo-params";
const MAX_HEADER: u64 = 64 << 20;

/// Writes a framed header + payload record.
pub fn write_framed<W: Write, H: Serialize>(mut w: W, header: &H, payload: &[f64]) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a framed record written by [`write_framed`].
pub fn read_framed<R: Read, H: DeserializeOwned>(mut r: R) -> Result<(H, Vec<f64>)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|e| Error::Format(format!("missing header length prefix: {e}")))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(Error::Format(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let header: H = serde_json::from_slice(&json)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(Error::Format(format!("payload of {} bytes is not a whole number of f64", rest.len())));
    }
    let payload = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, payload))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerHeader {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    #[serde(default)]
    pub residual: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkHeader {
    pub name: String,
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<LayerHeader>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsHeader {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub networks: Vec<NetworkHeader>,
}

/// Serializes named networks into one parameter file.
pub fn write_networks<T: Real, W: Write>(w: W, nets: &[(&str, &Mlp<T>)]) -> Result<()> {
    let mut payload = Vec::new();
    let mut networks = Vec::with_capacity(nets.len());
    for (name, net) in nets {
        let mut layers = Vec::with_capacity(net.layers().len());
        for layer in net.layers() {
            layers.push(LayerHeader {
                rows: layer.out_dim(),
                cols: layer.in_dim(),
                activation: layer.activation(),
                residual: layer.is_residual(),
            });
            payload.extend(layer.weight().iter().map(|v| v.as_f64()));
            payload.extend(layer.bias().iter().map(|v| v.as_f64()));
        }
        networks.push(NetworkHeader {
            name: (*name).to_string(),
            input_dim: net.input_dim(),
            output_dim: net.output_dim(),
            layers,
        });
    }
    let header = ParamsHeader {
        format: PARAMS_FORMAT.into(),
        version: 1,
        scalar: "f64".into(),
        networks,
    };
    write_framed(w, &header, &payload)
}

pub fn read_networks<T: Real, R: Read>(r: R) -> Result<Vec<(String, Mlp<T>)>> {
    let (header, payload): (ParamsHeader, Vec<f64>) = read_framed(r)?;
    if header.format != PARAMS_FORMAT {
        return Err(Error::Format(format!("unexpected format `{}`", header.format)));
    }
    let expected: usize = header
        .networks
        .iter()
        .flat_map(|n| &n.layers)
        .map(|l| l.rows * l.cols + l.rows)
        .sum();
    if expected != payload.len() {
        return Err(Error::Format(format!(
            "header declares {expected} parameters, payload holds {}",
            payload.len()
        )));
    }
    let mut cursor = 0usize;
    let mut take = |n: usize| {
        let s = &payload[cursor..cursor + n];
        cursor += n;
        s.iter().map(|&v| T::lit(v)).collect::<Vec<T>>()
    };
    let mut out = Vec::with_capacity(header.networks.len());
    for net in &header.networks {
        let mut layers = Vec::with_capacity(net.layers.len());
        for l in &net.layers {
            let w = Array2::from_shape_vec((l.rows, l.cols), take(l.rows * l.cols))
                .map_err(|e| Error::Format(e.to_string()))?;
            let b = Array1::from_vec(take(l.rows));
            layers.push(Layer::new(w, b, l.activation, l.residual)?);
        }
        let mlp = Mlp::new(net.input_dim, layers)?;
        if mlp.output_dim() != net.output_dim {
            return Err(Error::Format(format!("network `{}` output dimension mismatch", net.name)));
        }
        out.push((net.name.clone(), mlp));
    }
    Ok(out)
}

pub fn save_networks<T: Real>(path: impl AsRef<Path>, nets: &[(&str, &Mlp<T>)]) -> Result<()> {
    write_networks(BufWriter::new(File::create(path)?), nets)
}

pub fn load_networks<T: Real>(path: impl AsRef<Path>) -> Result<Vec<(String, Mlp<T>)>> {
    read_networks(BufReader::new(File::open(path)?))
}
