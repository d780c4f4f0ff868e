use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{draw_pair, encode_means, latent_window, pearson, share, solve_pair, PairOutcome, WINDOW_PAD};
use crate::datasets::{pendulum_generate, render_pendulum, Dataset, PendulumConfig};
use crate::error::{Error, Result};
use crate::geodesic::{interpolate_and_decode, Domain, GeodesicConfig};
use crate::iwae::{train_with, IwaeModel, Preset, TrainConfig, TrainReport};
use crate::numerics::rng::substream;
use crate::riemann::{GridGraph, Smoothing};

/// Settings of the pendulum experiment: data, training, geodesics and the graph oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumExperiment {
    pub data: PendulumConfig,
    pub train: TrainConfig,
    pub geodesic: GeodesicConfig,
    pub pairs: usize,
    /// The first `oracle_pairs` pairs are also measured on the grid graph.
    pub oracle_pairs: usize,
    pub oracle_resolution: usize,
    pub triangle_checks: usize,
    /// Decoded frames per pair for the rotation monotonicity check.
    pub frames: usize,
    /// Confine geodesics to the latent data window the oracle grid covers.
    pub confine: bool,
    /// Metric smoothing of the separate oracle comparison run.
    pub oracle_smoothing: Option<Smoothing>,
    pub seed: u64,
}

impl PendulumExperiment {
    /// 5000 images, 200 epochs of the pendulum preset, smoothing `λ = 2000` at
    /// full rank; the oracle comparison uses the raw metric.
    pub fn desk(seed: u64) -> Self {
        Self {
            data: PendulumConfig {
                sample_count: 5000,
                seed,
                ..PendulumConfig::default()
            },
            train: Preset::Pendulum.train_config(seed),
            geodesic: GeodesicConfig {
                smoothing: Some(Smoothing { lambda: 2000.0, rank: 2 }),
                max_iters: 1000,
                speed_weight: 1.0,
                seed,
                ..GeodesicConfig::default()
            },
            pairs: 50,
            oracle_pairs: 10,
            oracle_resolution: 100,
            triangle_checks: 100,
            frames: 16,
            confine: true,
            oracle_smoothing: None,
            seed,
        }
    }

    /// The ordering run: every pair, no graph oracle.
    pub fn ordering_run(&self) -> Self {
        Self {
            oracle_pairs: 0,
            triangle_checks: 0,
            ..self.clone()
        }
    }

    /// The oracle run: the first `oracle_pairs` pairs under `oracle_smoothing`,
    /// each compared with the graph shortest path.
    pub fn oracle_run(&self) -> Self {
        Self {
            geodesic: GeodesicConfig {
                smoothing: self.oracle_smoothing,
                ..self.geodesic.clone()
            },
            pairs: self.oracle_pairs,
            frames: 0,
            ..self.clone()
        }
    }
}

/// Generates the images and trains the pendulum model.
pub fn train_pendulum(
    exp: &PendulumExperiment,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(Dataset, IwaeModel<f64>, TrainReport)> {
    let data = pendulum_generate(&exp.data)?;
    let spec = Preset::Pendulum.model_spec(data.dim());
    let mut model = spec.build(&mut substream(exp.seed, "model-init"))?;
    let report = train_with(&mut model, data.samples.view(), &exp.train, on_epoch)?;
    Ok((data, model, report))
}

/// `|a − b|` wrapped to `[0, 180]` degrees.
pub fn circular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Random sample pairs whose rotation angles differ by a value in `(0, 180]`.
pub fn pendulum_pairs(angles: ArrayView1<f64>, count: usize, seed: u64) -> Result<Vec<(usize, usize, f64)>> {
    let mut rng = substream(seed, "pendulum-pairs");
    (0..count)
        .map(|_| {
            let (a, b) = draw_pair(&mut rng, angles.len(), |a, b| circular_difference(angles[a], angles[b]) > 0.0)?;
            Ok((a, b, circular_difference(angles[a], angles[b])))
        })
        .collect()
}

/// Outcome of [`run_pendulum`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumReport {
    pub outcomes: Vec<PairOutcome>,
    /// Per pair: share of adjacent decoded geodesic frames whose rotation
    /// continues in the overall direction.
    pub geodesic_monotone: Vec<f64>,
    pub straight_monotone: Vec<f64>,
    pub triangle_checked: usize,
    pub triangle_violations: usize,
}

impl PendulumReport {
    pub fn ordering_share(&self) -> f64 {
        share(self.outcomes.iter().map(|o| o.geodesic_length < o.straight_length))
    }

    pub fn length_correlation(&self) -> f64 {
        let x: Vec<f64> = self.outcomes.iter().map(|o| o.separation).collect();
        let y: Vec<f64> = self.outcomes.iter().map(|o| o.geodesic_length).collect();
        pearson(&x, &y)
    }

    pub fn flatness_share(&self) -> f64 {
        share(self.outcomes.iter().map(|o| o.geodesic_cv <= o.straight_cv))
    }

    /// `geodesic / oracle` for every pair measured on the graph.
    pub fn oracle_ratios(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter_map(|o| o.oracle_length.map(|g| o.geodesic_length / g))
            .collect()
    }
}

struct AngleMatcher {
    templates: Vec<Array1<f64>>,
}

impl AngleMatcher {
    fn new(cfg: &PendulumConfig) -> Self {
        let clean = PendulumConfig {
            noise_std: 0.0,
            ..cfg.clone()
        };
        Self {
            templates: (0..360).map(|a| render_pendulum(&clean, a as f64)).collect(),
        }
    }

    fn angle(&self, image: ArrayView1<f64>) -> f64 {
        let mut best = (f64::INFINITY, 0usize);
        for (a, t) in self.templates.iter().enumerate() {
            let e: f64 = t.iter().zip(image.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
            if e < best.0 {
                best = (e, a);
            }
        }
        best.1 as f64
    }

    /// Share of adjacent frames rotating in the direction of the whole sequence.
    fn monotone_share(&self, frames: ndarray::ArrayView2<f64>) -> f64 {
        let angles: Vec<f64> = frames.outer_iter().map(|f| self.angle(f)).collect();
        let signed = |a: f64, b: f64| {
            let d = (b - a).rem_euclid(360.0);
            if d > 180.0 {
                d - 360.0
            } else {
                d
            }
        };
        let steps: Vec<f64> = angles.windows(2).map(|w| signed(w[0], w[1])).collect();
        let total: f64 = steps.iter().sum();
        share(steps.iter().map(|s| *s == 0.0 || s.signum() == total.signum()))
    }
}

/// Solves the geodesic pairs on a trained model, runs the graph oracle on
/// the first `oracle_pairs` of them and checks decoded rotation monotonicity.
pub fn run_pendulum(
    exp: &PendulumExperiment,
    data: &Dataset,
    model: &IwaeModel<f64>,
    mut on_pair: impl FnMut(&PairOutcome),
) -> Result<PendulumReport> {
    let angles = data
        .annotation("angle_deg")
        .ok_or_else(|| Error::InvalidData("pendulum data lacks the angle_deg annotation".into()))?;
    let latents = encode_means(model, data.samples.view())?;
    let pairs = pendulum_pairs(angles, exp.pairs, exp.seed)?;
    let matcher = AngleMatcher::new(&exp.data);
    let mut cfg = exp.geodesic.clone();
    if exp.confine {
        cfg.domain = Some(Domain::around(latents.view(), WINDOW_PAD)?);
    }
    let graph = if exp.oracle_pairs > 0 || exp.triangle_checks > 0 {
        let grid = latent_window(latents.view(), WINDOW_PAD, exp.oracle_resolution)?;
        Some(GridGraph::build(model.decoder(), &grid, exp.geodesic.smoothing.as_ref())?)
    } else {
        None
    };

    let mut report = PendulumReport {
        outcomes: Vec::with_capacity(pairs.len()),
        geodesic_monotone: Vec::new(),
        straight_monotone: Vec::new(),
        triangle_checked: 0,
        triangle_violations: 0,
    };
    for (i, &(a, b, diff)) in pairs.iter().enumerate() {
        let (mut outcome, result) = solve_pair(model, latents.view(), i, (a, b), diff, &cfg)?;
        if let (Some(g), true) = (&graph, i < exp.oracle_pairs) {
            outcome.oracle_length = Some(g.distance([outcome.z0[0], outcome.z0[1]], [outcome.z1[0], outcome.z1[1]]));
        }
        if exp.frames >= 2 {
            let decoded = interpolate_and_decode(model.decoder(), &result, exp.frames)?;
            report.geodesic_monotone.push(matcher.monotone_share(decoded.geodesic_frames.view()));
            report.straight_monotone.push(matcher.monotone_share(decoded.straight_frames.view()));
        }
        on_pair(&outcome);
        report.outcomes.push(outcome);
    }

    if let Some(g) = &graph {
        use rand::Rng;
        let mut rng = substream(exp.seed, "oracle-triangles");
        let nodes = g.grid().len();
        for _ in 0..exp.triangle_checks {
            let (a, b, c) = (rng.random_range(0..nodes), rng.random_range(0..nodes), rng.random_range(0..nodes));
            let (from_a, from_b) = (g.distances_from_node(a), g.distances_from_node(b));
            let detour = from_a[b] + from_b[c];
            // Allow for the rounding of summing the same edges in another order.
            if from_a[c] > detour * (1.0 + 1e-12) {
                report.triangle_violations += 1;
            }
            report.triangle_checked += 1;
        }
    }
    Ok(report)
}
