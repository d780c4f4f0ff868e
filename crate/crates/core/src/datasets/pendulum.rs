use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::rng::indexed;

/// Rendering and sampling settings for the pendulum images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub image_size: usize,
    pub sample_count: usize,
    pub noise_std: f64,
    /// Angles are drawn uniformly from `[min, max)` degrees.
    pub angle_range: [f64; 2],
    pub rod_length: f64,
    pub rod_width: f64,
    pub seed: u64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            image_size: 16,
            sample_count: 15000,
            noise_std: 0.05,
            angle_range: [0.0, 360.0],
            rod_length: 6.0,
            rod_width: 2.0,
            seed: 0,
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 2 || self.sample_count == 0 {
            return Err(Error::InvalidConfig("pendulum needs image_size >= 2 and at least one sample".into()));
        }
        if !(self.noise_std >= 0.0) || !(self.rod_length > 0.0) || !(self.rod_width > 0.0) {
            return Err(Error::InvalidConfig("pendulum noise must be >= 0 and rod dimensions positive".into()));
        }
        if !(self.angle_range[1] > self.angle_range[0]) {
            return Err(Error::InvalidConfig("pendulum angle range must be increasing".into()));
        }
        Ok(())
    }
}

fn segment_distance(px: f64, py: f64, bx: f64, by: f64) -> f64 {
    // Segment from the origin to (bx, by).
    let len2 = bx * bx + by * by;
    let t = ((px * bx + py * by) / len2).clamp(0.0, 1.0);
    let (dx, dy) = (px - t * bx, py - t * by);
    (dx * dx + dy * dy).sqrt()
}

/// Noise-free image of a rod hanging from the image center at `angle_deg`
/// (0° points down, angles increase counter-clockwise on screen).
///
/// Coverage ramps linearly over one pixel around the rod boundary, so the
/// image is a continuous function of the angle.
pub fn render_pendulum(cfg: &PendulumConfig, angle_deg: f64) -> Array1<f64> {
    let n = cfg.image_size;
    let c = (n as f64 - 1.0) / 2.0;
    let a = angle_deg.to_radians();
    let (bx, by) = (cfg.rod_length * a.sin(), cfg.rod_length * a.cos());
    let half = cfg.rod_width / 2.0;
    Array1::from_shape_fn(n * n, |i| {
        let (row, col) = (i / n, i % n);
        let d = segment_distance(col as f64 - c, row as f64 - c, bx, by);
        (half + 0.5 - d).clamp(0.0, 1.0)
    })
}

/// Pendulum images with angle annotations. Sample `i` uses its own random
/// stream, so any subset can be regenerated independently.
pub fn pendulum_generate(cfg: &PendulumConfig) -> Result<Dataset> {
    cfg.validate()?;
    let dim = cfg.image_size * cfg.image_size;
    let mut samples = Array2::zeros((cfg.sample_count, dim));
    let mut angles = Array2::zeros((cfg.sample_count, 1));
    for i in 0..cfg.sample_count {
        let mut rng = indexed(cfg.seed, "pendulum", i as u64);
        let angle = rng.random_range(cfg.angle_range[0]..cfg.angle_range[1]);
        let mut img = render_pendulum(cfg, angle);
        if cfg.noise_std > 0.0 {
            for v in img.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v = (*v + cfg.noise_std * e).clamp(0.0, 1.0);
            }
        }
        samples.row_mut(i).assign(&img);
        angles[[i, 0]] = angle;
    }
    Dataset::new(
        "pendulum",
        samples,
        vec!["angle_deg".into()],
        angles,
        serde_json::json!({ "generator": "pendulum", "config": cfg, "seed": cfg.seed }),
    )
}

/// Angle whose noise-free rendering best matches `image` in squared error,
/// searched on a `step_deg` grid over `[0, 360)`.
pub fn match_pendulum_angle(cfg: &PendulumConfig, image: ndarray::ArrayView1<f64>, step_deg: f64) -> f64 {
    let steps = (360.0 / step_deg).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for s in 0..steps {
        let a = s as f64 * step_deg;
        let r = render_pendulum(cfg, a);
        let e: f64 = r.iter().zip(image.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
        if e < best.0 {
            best = (e, a);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean() -> PendulumConfig {
        PendulumConfig {
            noise_std: 0.0,
            sample_count: 20,
            seed: 9,
            ..PendulumConfig::default()
        }
    }

    #[test]
    fn renderer_is_deterministic_and_symmetric() {
        let cfg = clean();
        assert_eq!(render_pendulum(&cfg, 0.0), render_pendulum(&cfg, 0.0));
        for a in [0.0, 17.0, 95.5, 200.0] {
            let img = render_pendulum(&cfg, a);
            let flip = render_pendulum(&cfg, a + 180.0);
            let n = img.len();
            for i in 0..n {
                assert!((img[i] - flip[n - 1 - i]).abs() < 1e-6);
            }
            assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(img.sum() > 5.0);
        }
    }

    #[test]
    fn generation_shape_range_and_determinism() {
        let cfg = PendulumConfig {
            sample_count: 50,
            seed: 2,
            ..PendulumConfig::default()
        };
        let a = pendulum_generate(&cfg).unwrap();
        assert_eq!(a.samples.dim(), (50, 256));
        assert!(a.samples.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.annotation("angle_deg").unwrap().iter().all(|&v| (0.0..360.0).contains(&v)));
        assert_eq!(a, pendulum_generate(&cfg).unwrap());
        let first = pendulum_generate(&PendulumConfig { sample_count: 10, ..cfg.clone() }).unwrap();
        assert_eq!(first.samples, a.head(10).samples);
    }

    #[test]
    fn clean_images_depend_on_angle_only() {
        let d = pendulum_generate(&clean()).unwrap();
        for (row, ang) in d.samples.outer_iter().zip(d.annotation("angle_deg").unwrap()) {
            assert_eq!(row, render_pendulum(&clean(), *ang));
        }
    }

    #[test]
    fn template_matching_recovers_angles() {
        let cfg = clean();
        for a in [3.0, 91.0, 181.0, 359.0] {
            let got = match_pendulum_angle(&cfg, render_pendulum(&cfg, a).view(), 1.0);
            assert_eq!(got, a);
        }
    }

    #[test]
    fn default_counts() {
        let cfg = PendulumConfig::default();
        assert_eq!((cfg.sample_count, cfg.image_size * cfg.image_size), (15000, 256));
    }
}
