//! Deterministic dataset generators and loaders, plus the on-disk dataset format.

mod mnist;
mod pendulum;
mod robot;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::serialize::{read_framed, write_framed};

pub use mnist::{mnist_load, MnistFormat};
pub use pendulum::{match_pendulum_angle, pendulum_generate, render_pendulum, PendulumConfig};
pub use robot::{robot_generate, ArmChain, RobotArmConfig, IK_TOLERANCE};

/// Samples with per-sample annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `count × dim`
    pub samples: Array2<f64>,
    pub annotation_columns: Vec<String>,
    /// `count × annotation_columns.len()`
    pub annotations: Array2<f64>,
    /// Generator config echo, seed and any loader details.
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    name: String,
    count: usize,
    dim: usize,
    annotation_columns: Vec<String>,
    meta: serde_json::Value,
}

const FORMAT: &str = "latgeo-dataset";

/// Annotation CSV written next to a dataset file.
pub fn annotations_path(path: &Path) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(".annotations.csv");
    path.with_file_name(name)
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        samples: Array2<f64>,
        annotation_columns: Vec<String>,
        annotations: Array2<f64>,
        meta: serde_json::Value,
    ) -> Result<Self> {
        if annotations.nrows() != samples.nrows() {
            return Err(Error::InvalidData(format!(
                "{} annotation rows for {} samples",
                annotations.nrows(),
                samples.nrows()
            )));
        }
        if annotations.ncols() != annotation_columns.len() {
            return Err(Error::InvalidData("annotation columns do not match their names".into()));
        }
        if samples.iter().chain(annotations.iter()).any(|v| v.is_nan()) {
            return Err(Error::InvalidData("dataset contains NaN".into()));
        }
        Ok(Self {
            name: name.into(),
            samples,
            annotation_columns,
            annotations,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn annotation(&self, column: &str) -> Option<ArrayView1<'_, f64>> {
        let i = self.annotation_columns.iter().position(|c| c == column)?;
        Some(self.annotations.column(i))
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            name: self.name.clone(),
            samples: self.samples.slice(s![..n, ..]).to_owned(),
            annotation_columns: self.annotation_columns.clone(),
            annotations: self.annotations.slice(s![..n, ..]).to_owned(),
            meta: self.meta.clone(),
        }
    }

    /// Writes the framed sample file and its annotation CSV; returns both paths.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<[PathBuf; 2]> {
        let path = path.as_ref();
        let header = DatasetHeader {
            format: FORMAT.into(),
            version: 1,
            name: self.name.clone(),
            count: self.len(),
            dim: self.dim(),
            annotation_columns: self.annotation_columns.clone(),
            meta: self.meta.clone(),
        };
        let payload: Vec<f64> = self.samples.iter().copied().collect();
        let mut w = BufWriter::new(File::create(path)?);
        write_framed(&mut w, &header, &payload)?;
        w.flush()?;

        let ann = annotations_path(path);
        let mut w = BufWriter::new(File::create(&ann)?);
        writeln!(w, "index,{}", self.annotation_columns.join(","))?;
        for (i, row) in self.annotations.outer_iter().enumerate() {
            write!(w, "{i}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok([path.to_path_buf(), ann])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (header, payload): (DatasetHeader, Vec<f64>) = read_framed(BufReader::new(File::open(path)?))?;
        if header.format != FORMAT {
            return Err(Error::Format(format!("not a dataset file (format '{}')", header.format)));
        }
        if payload.len() != header.count * header.dim {
            return Err(Error::Format(format!(
                "header declares {}x{} values, payload holds {}",
                header.count,
                header.dim,
                payload.len()
            )));
        }
        let samples = Array2::from_shape_vec((header.count, header.dim), payload)
            .map_err(|e| Error::Format(e.to_string()))?;

        let text = std::fs::read_to_string(annotations_path(path))?;
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| Error::Format("empty annotation file".into()))?;
        let columns: Vec<String> = head.split(',').skip(1).map(str::to_owned).collect();
        if columns != header.annotation_columns {
            return Err(Error::Format("annotation header disagrees with dataset header".into()));
        }
        let mut values = Vec::with_capacity(header.count * columns.len());
        let mut rows = 0;
        for line in lines.filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() + 1 {
                return Err(Error::Format(format!("annotation row {rows} has {} fields", fields.len())));
            }
            for f in &fields[1..] {
                values.push(f.parse::<f64>().map_err(|e| Error::Format(format!("annotation value '{f}': {e}")))?);
            }
            rows += 1;
        }
        let annotations =
            Array2::from_shape_vec((rows, columns.len()), values).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(header.name, samples, columns, annotations, header.meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn save_load_round_trip() {
        let d = Dataset::new(
            "toy",
            array![[0.0, 1.5], [2.25, -3.0], [1e-300, 7.0]],
            vec!["angle".into(), "step".into()],
            array![[10.0, 0.0], [20.5, 1.0], [30.0, 2.0]],
            serde_json::json!({"seed": 4}),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("toy.bin");
        let [a, b] = d.save(&p).unwrap();
        assert_eq!(b.file_name().unwrap(), "toy.annotations.csv");
        assert!(a.exists());
        assert_eq!(Dataset::load(&p).unwrap(), d);
        assert_eq!(d.head(2).len(), 2);
        assert_eq!(d.annotation("step").unwrap()[2], 2.0);
    }

    #[test]
    fn rejects_inconsistent_data() {
        assert!(Dataset::new("x", Array2::zeros((2, 2)), vec!["a".into()], Array2::zeros((3, 1)), serde_json::Value::Null).is_err());
        assert!(Dataset::new("x", array![[f64::NAN]], vec![], Array2::zeros((1, 0)), serde_json::Value::Null).is_err());
    }

    #[test]
    fn rejects_truncated_payload() {
        let d = Dataset::new("t", Array2::ones((4, 3)), vec![], Array2::zeros((4, 0)), serde_json::Value::Null).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        d.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(Dataset::load(&p).is_err());
    }
}
