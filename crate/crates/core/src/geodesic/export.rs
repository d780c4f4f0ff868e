use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde_json::json;

use super::optimize::{GeodesicResult, PathCurve};
use crate::error::{Error, Result};
use crate::numerics::{Mlp, Real};
use crate::riemann::velocities;

fn write_path_csv<T: Real, W: Write>(mut w: W, times: &[T], points: &Array2<T>, vel: &Array1<T>) -> Result<()> {
    write!(w, "t")?;
    for j in 1..=points.ncols() {
        write!(w, ",z_{j}")?;
    }
    writeln!(w, ",velocity")?;
    for (i, t) in times.iter().enumerate() {
        write!(w, "{}", t.as_f64())?;
        for v in points.row(i) {
            write!(w, ",{}", v.as_f64())?;
        }
        writeln!(w, ",{}", vel[i].as_f64())?;
    }
    Ok(())
}

impl<T: Real> GeodesicResult<T> {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_path_csv(w, &self.times, &self.points, &self.velocities)
    }

    /// The straight segment sampled at the same parameters.
    pub fn write_straight_csv<W: Write>(&self, w: W) -> Result<()> {
        let (z0, z1) = (self.points_at_ends()?.0, self.points_at_ends()?.1);
        let pts = PathCurve::Straight { z0, z1 }.eval_many(&self.times)?.0;
        write_path_csv(w, &self.times, &pts, &self.straight_velocities)
    }

    fn points_at_ends(&self) -> Result<(Array1<T>, Array1<T>)> {
        let e = self.curve.eval_many(&[T::zero(), T::one()])?.0;
        Ok((e.row(0).to_owned(), e.row(1).to_owned()))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "length": self.length.as_f64(),
            "straight_length": self.straight_length.as_f64(),
            "euclidean_distance": self.euclidean_distance.as_f64(),
            "unsmoothed_length": self.unsmoothed_length.as_f64(),
            "unsmoothed_straight_length": self.unsmoothed_straight_length.as_f64(),
            "iterations": self.iterations,
            "best_iteration": self.best_iteration,
            "straight_retained": self.curve.is_straight(),
            "validation": self.validation.as_f64(),
            "straight_validation": self.straight_validation.as_f64(),
            "pretrain_validations": self.pretrain_validations,
            "max_endpoint_error": self.max_endpoint_error,
            "config": self.config,
        })
    }

    /// Writes `<stem>.csv`, `<stem>.straight.csv`, `<stem>.json` and the
    /// iteration trace `<stem>.trace.csv`; returns the paths.
    pub fn export(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let paths: Vec<PathBuf> = ["csv", "straight.csv", "json", "trace.csv"]
            .iter()
            .map(|ext| dir.join(format!("{stem}.{ext}")))
            .collect();
        let mut w = BufWriter::new(File::create(&paths[0])?);
        self.write_csv(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(&paths[1])?);
        self.write_straight_csv(&mut w)?;
        w.flush()?;
        std::fs::write(&paths[2], serde_json::to_string_pretty(&self.summary_json())?)?;
        let mut w = BufWriter::new(File::create(&paths[3])?);
        writeln!(w, "iteration,length,max_velocity,validation,endpoint_error")?;
        for r in &self.trace {
            writeln!(w, "{},{},{},{},{}", r.iteration, r.length, r.max_velocity, r.validation, r.endpoint_error)?;
        }
        w.flush()?;
        Ok(paths)
    }
}

/// Decoded means along the geodesic and along the straight segment at equally spaced parameters.
#[derive(Clone, Debug)]
pub struct DecodedPath<T> {
    pub times: Vec<T>,
    pub geodesic_points: Array2<T>,
    /// `(frames, Nx)`
    pub geodesic_frames: Array2<T>,
    pub geodesic_velocities: Array1<T>,
    pub straight_points: Array2<T>,
    pub straight_frames: Array2<T>,
    pub straight_velocities: Array1<T>,
}

/// Decodes `frames` samples `t = k/(frames − 1)` of the result's curve and of the straight segment.
pub fn interpolate_and_decode<T: Real>(
    decoder: &Mlp<T>,
    result: &GeodesicResult<T>,
    frames: usize,
) -> Result<DecodedPath<T>> {
    if frames < 2 {
        return Err(Error::InvalidConfig(format!("need at least two frames, got {frames}")));
    }
    let times: Vec<T> = (0..frames).map(|k| T::lit(k as f64 / (frames - 1) as f64)).collect();
    let smoothing = result.config.smoothing.as_ref();
    let (gp, gd) = result.curve.eval_many(&times)?;
    let ends = result.curve.eval_many(&[T::zero(), T::one()])?.0;
    let straight = PathCurve::Straight {
        z0: ends.row(0).to_owned(),
        z1: ends.row(1).to_owned(),
    };
    let (sp, sd) = straight.eval_many(&times)?;
    Ok(DecodedPath {
        geodesic_frames: decoder.forward_batch(gp.view())?,
        geodesic_velocities: velocities(decoder, gp.view(), gd.view(), smoothing)?,
        straight_frames: decoder.forward_batch(sp.view())?,
        straight_velocities: velocities(decoder, sp.view(), sd.view(), smoothing)?,
        geodesic_points: gp,
        straight_points: sp,
        times,
    })
}

fn write_pgm(path: &Path, side: usize, pixels: ndarray::ArrayView1<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{side} {side}\n255\n")?;
    let bytes: Vec<u8> = pixels.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

impl<T: Real> DecodedPath<T> {
    /// CSV with one row per frame: `path,frame,t,velocity,x_1..x_Nx`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "path,frame,t,velocity")?;
        for j in 1..=self.geodesic_frames.ncols() {
            write!(w, ",x_{j}")?;
        }
        writeln!(w)?;
        for (name, frames, vel) in [
            ("geodesic", &self.geodesic_frames, &self.geodesic_velocities),
            ("straight", &self.straight_frames, &self.straight_velocities),
        ] {
            for (k, row) in frames.outer_iter().enumerate() {
                write!(w, "{name},{k},{},{}", self.times[k].as_f64(), vel[k].as_f64())?;
                for v in row {
                    write!(w, ",{}", v.as_f64())?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// One `side × side` PGM per frame, `<stem>_{geodesic,straight}_NNN.pgm`.
    pub fn write_pgm_frames(&self, dir: impl AsRef<Path>, stem: &str, side: usize) -> Result<Vec<PathBuf>> {
        if side * side != self.geodesic_frames.ncols() {
            return Err(Error::InvalidConfig(format!(
                "frames of dimension {} are not {side}x{side} images",
                self.geodesic_frames.ncols()
            )));
        }
        let mut out = Vec::new();
        for (name, frames) in [("geodesic", &self.geodesic_frames), ("straight", &self.straight_frames)] {
            for (k, row) in frames.outer_iter().enumerate() {
                let p = dir.as_ref().join(format!("{stem}_{name}_{k:03}.pgm"));
                write_pgm(&p, side, row.mapv(|v| v.as_f64()).view())?;
                out.push(p);
            }
        }
        Ok(out)
    }
}
