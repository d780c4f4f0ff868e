use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Mlp, Real};

use super::metric::{metric_batch, mf_of};

/// A regular grid over a 2-d latent window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_range: [f64; 2], y_range: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        let g = Self { x_range, y_range, nx, ny };
        g.validate()?;
        Ok(g)
    }

    /// Square grid `n × n` over `[lo, hi]²`.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new([lo, hi], [lo, hi], n, n)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_range = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[1] > r[0];
        if !ok_range(self.x_range) || !ok_range(self.y_range) {
            return Err(Error::InvalidConfig(format!(
                "grid ranges must satisfy min < max: x={:?} y={:?}",
                self.x_range, self.y_range
            )));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid resolution must be >= 2 per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        (self.x_range[1] - self.x_range[0]) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_range[1] - self.y_range[0]) / (self.ny - 1) as f64
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x_range[0] + ix as f64 * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.y_range[0] + iy as f64 * self.dy()
    }

    /// Row-major index, `y` outer.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn node(&self, index: usize) -> [f64; 2] {
        let (ix, iy) = self.coords(index);
        [self.x(ix), self.y(iy)]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_range[0] && p[0] <= self.x_range[1] && p[1] >= self.y_range[0] && p[1] <= self.y_range[1]
    }

    pub fn nearest(&self, p: [f64; 2]) -> usize {
        let snap = |v: f64, lo: f64, d: f64, n: usize| (((v - lo) / d).round().max(0.0) as usize).min(n - 1);
        let ix = snap(p[0], self.x_range[0], self.dx(), self.nx);
        let iy = snap(p[1], self.y_range[0], self.dy(), self.ny);
        self.index(ix, iy)
    }

    /// All nodes as an `N × 2` matrix in index order.
    pub fn nodes<T: Real>(&self) -> Array2<T> {
        Array2::from_shape_fn((self.len(), 2), |(i, c)| T::lit(self.node(i)[c]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    MagnificationFactor,
    GraphDistance,
}

/// A scalar field sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub grid: GridSpec,
    pub kind: FieldKind,
    pub source: Option<[f64; 2]>,
    pub values: Vec<f64>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    grid: &'a GridSpec,
    kind: FieldKind,
    source: Option<[f64; 2]>,
    min: f64,
    max: f64,
    csv_layout: &'static str,
    pgm_normalization: &'static str,
}

impl DistanceField {
    pub fn new(grid: GridSpec, kind: FieldKind, source: Option<[f64; 2]>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("field has {} values for {} nodes", values.len(), grid.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NonFinite(format!("field value {v} is not finite and nonnegative")));
        }
        Ok(Self { grid, kind, source, values })
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "zx,zy,value")?;
        for (i, v) in self.values.iter().enumerate() {
            let [x, y] = self.grid.node(i);
            writeln!(w, "{x},{y},{v}")?;
        }
        Ok(())
    }

    pub fn sidecar_json(&self) -> Result<String> {
        let s = Sidecar {
            grid: &self.grid,
            kind: self.kind,
            source: self.source,
            min: self.min(),
            max: self.max(),
            csv_layout: "row-major, y outer, x inner",
            pgm_normalization: "min-max to 0..255, row 0 is the largest y",
        };
        Ok(serde_json::to_string_pretty(&s)?)
    }

    /// 8-bit binary PGM with min-max normalization; the top image row is the largest `y`.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let (lo, hi) = (self.min(), self.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        write!(w, "P5\n{} {}\n255\n", self.grid.nx, self.grid.ny)?;
        let mut bytes = Vec::with_capacity(self.grid.len());
        for iy in (0..self.grid.ny).rev() {
            for ix in 0..self.grid.nx {
                let v = (self.at(ix, iy) - lo) / span;
                bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Writes `<stem>.csv`, `<stem>.json` and, if requested, `<stem>.pgm`; returns the paths.
    pub fn export(&self, dir: impl AsRef<Path>, stem: &str, pgm: bool) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        let mut w = BufWriter::new(File::create(&csv)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        std::fs::write(&json, self.sidecar_json()?)?;
        let mut out = vec![csv, json];
        if pgm {
            let p = dir.join(format!("{stem}.pgm"));
            let mut w = BufWriter::new(File::create(&p)?);
            self.write_pgm(&mut w)?;
            w.flush()?;
            out.push(p);
        }
        Ok(out)
    }
}

pub(crate) fn require_planar<T: Real>(decoder: &Mlp<T>) -> Result<()> {
    if decoder.input_dim() != 2 {
        return Err(Error::InvalidConfig(format!(
            "latent fields need a 2-d latent space, decoder takes {}",
            decoder.input_dim()
        )));
    }
    Ok(())
}

/// Magnification factor at every grid node.
pub fn mf_field<T: Real>(decoder: &Mlp<T>, grid: &GridSpec) -> Result<DistanceField> {
    grid.validate()?;
    require_planar(decoder)?;
    let metrics = metric_batch(decoder, grid.nodes::<T>().view(), None)?;
    let values = metrics.iter().map(|g| mf_of(g).map(|v| v.as_f64())).collect::<Result<Vec<_>>>()?;
    DistanceField::new(*grid, FieldKind::MagnificationFactor, None, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Layer};
    use ndarray::Array1;

    fn identity() -> Mlp<f64> {
        Mlp::new(2, vec![Layer::new(Array2::eye(2), Array1::zeros(2), Activation::Linear, false).unwrap()]).unwrap()
    }

    #[test]
    fn grid_indexing() {
        let g = GridSpec::new([-1.0, 1.0], [0.0, 2.0], 3, 5).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.node(g.index(2, 4)), [1.0, 2.0]);
        assert_eq!(g.coords(7), (1, 2));
        assert_eq!(g.nearest([0.1, 0.9]), g.index(1, 2));
        assert_eq!(g.nearest([-9.0, 9.0]), g.index(0, 4));
        assert!(GridSpec::new([1.0, 1.0], [0.0, 1.0], 3, 3).is_err());
        assert!(GridSpec::new([0.0, 1.0], [0.0, 1.0], 1, 3).is_err());
    }

    #[test]
    fn identity_mf_is_one() {
        let f = mf_field(&identity(), &GridSpec::square(-3.0, 3.0, 7).unwrap()).unwrap();
        assert!(f.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn mf_independent_of_resolution_at_shared_nodes() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let dec = Mlp::<f64>::init(
            2,
            &[crate::numerics::LayerSpec::dense(8, Activation::Tanh), crate::numerics::LayerSpec::dense(3, Activation::Linear)],
            &mut rng,
        )
        .unwrap();
        let coarse = mf_field(&dec, &GridSpec::square(-2.0, 2.0, 5).unwrap()).unwrap();
        let fine = mf_field(&dec, &GridSpec::square(-2.0, 2.0, 9).unwrap()).unwrap();
        for iy in 0..5 {
            for ix in 0..5 {
                assert!((coarse.at(ix, iy) - fine.at(2 * ix, 2 * iy)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exports_have_expected_shape() {
        let f = mf_field(&identity(), &GridSpec::new([0.0, 1.0], [0.0, 1.0], 4, 3).unwrap()).unwrap();
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "zx,zy,value");
        assert_eq!(lines.len(), 13);
        assert!(lines[2].starts_with("0.3333333333333333,0,"));
        let mut pgm = Vec::new();
        f.write_pgm(&mut pgm).unwrap();
        assert!(pgm.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(pgm.len(), b"P5\n4 3\n255\n".len() + 12);
        let side: serde_json::Value = serde_json::from_str(&f.sidecar_json().unwrap()).unwrap();
        assert_eq!(side["kind"], "magnification-factor");
        assert_eq!(side["grid"]["nx"], 4);
    }

    #[test]
    fn rejects_non_planar_decoder() {
        let d = Mlp::<f64>::new(3, vec![Layer::new(Array2::<f64>::eye(3), Array1::zeros(3), Activation::Linear, false).unwrap()]).unwrap();
        assert!(mf_field(&d, &GridSpec::square(0.0, 1.0, 3).unwrap()).is_err());
    }
}
