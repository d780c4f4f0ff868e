//! End-to-end pipelines shared by the command-line tool and the acceptance suite:
//! data generation, training, paired geodesic runs and their summary statistics.

mod pendulum;
mod robot;
mod suites;

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::geodesic::{optimize_geodesic, GeodesicConfig, GeodesicResult};
use crate::iwae::IwaeModel;
use crate::numerics::rng::substream;
use crate::riemann::GridSpec;

pub use pendulum::{
    circular_difference, pendulum_pairs, run_pendulum, train_pendulum, PendulumExperiment, PendulumReport,
};
pub use robot::{end_effector_jumps, run_robot, train_robot, RobotExperiment, RobotReport};
pub use suites::{flat_metric_suite, linear_fixture, pendulum_suite, robot_suite, Criterion, SuiteReport, SUITES};

/// Padding of the latent data window, as a share of its extent per axis.
pub const WINDOW_PAD: f64 = 0.05;

/// Endpoints and measurements of one geodesic problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub pair: usize,
    /// Row indices of the endpoint samples.
    pub a: usize,
    pub b: usize,
    /// Dataset-specific separation of the endpoints (angle in degrees, timesteps, ...).
    pub separation: f64,
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
    pub geodesic_length: f64,
    pub straight_length: f64,
    pub euclidean_distance: f64,
    pub geodesic_cv: f64,
    pub straight_cv: f64,
    pub straight_retained: bool,
    pub iterations: usize,
    pub max_endpoint_error: f64,
    /// Graph shortest-path length, when the oracle was run for this pair.
    pub oracle_length: Option<f64>,
}

/// Coefficient of variation (population standard deviation over mean).
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if mean == 0.0 {
        0.0
    } else {
        var.sqrt() / mean
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Two distinct random rows `(a, b)`, redrawn until `accept(a, b)` holds.
pub(crate) fn draw_pair<R: Rng>(rng: &mut R, rows: usize, accept: impl Fn(usize, usize) -> bool) -> Result<(usize, usize)> {
    if rows < 2 {
        return Err(Error::InvalidData("need at least two samples to form pairs".into()));
    }
    for _ in 0..100_000 {
        let a = rng.random_range(0..rows);
        let b = rng.random_range(0..rows);
        if a != b && accept(a, b) {
            return Ok((a, b));
        }
    }
    Err(Error::InvalidData("could not draw an admissible sample pair".into()))
}

/// Solves one geodesic problem between latent rows `a` and `b` of `latents`.
pub(crate) fn solve_pair(
    model: &IwaeModel<f64>,
    latents: ArrayView2<f64>,
    pair: usize,
    (a, b): (usize, usize),
    separation: f64,
    cfg: &GeodesicConfig,
) -> Result<(PairOutcome, GeodesicResult<f64>)> {
    let (z0, z1) = (latents.row(a), latents.row(b));
    let r = optimize_geodesic(model, z0, z1, cfg)?;
    let outcome = PairOutcome {
        pair,
        a,
        b,
        separation,
        z0: z0.to_vec(),
        z1: z1.to_vec(),
        geodesic_length: r.length,
        straight_length: r.straight_length,
        euclidean_distance: r.euclidean_distance,
        geodesic_cv: coefficient_of_variation(r.velocities.as_slice().expect("contiguous")),
        straight_cv: coefficient_of_variation(r.straight_velocities.as_slice().expect("contiguous")),
        straight_retained: r.curve.is_straight(),
        iterations: r.iterations,
        max_endpoint_error: r.max_endpoint_error,
        oracle_length: None,
    };
    Ok((outcome, r))
}

/// Geodesics between `count` random pairs of distinct samples. The separation
/// is the absolute difference of the `separation` annotation, or 0 without one.
pub fn run_random_pairs(
    model: &IwaeModel<f64>,
    data: &Dataset,
    count: usize,
    separation: Option<&str>,
    cfg: &GeodesicConfig,
    mut on_pair: impl FnMut(&PairOutcome),
) -> Result<Vec<PairOutcome>> {
    let column = match separation {
        Some(name) => Some(
            data.annotation(name)
                .ok_or_else(|| Error::InvalidData(format!("dataset lacks the {name} annotation")))?,
        ),
        None => None,
    };
    let latents = encode_means(model, data.samples.view())?;
    let mut rng = substream(cfg.seed, "pairs");
    (0..count)
        .map(|i| {
            let (a, b) = draw_pair(&mut rng, data.len(), |_, _| true)?;
            let sep = column.map_or(0.0, |c| (c[a] - c[b]).abs());
            let (outcome, _) = solve_pair(model, latents.view(), i, (a, b), sep, cfg)?;
            on_pair(&outcome);
            Ok(outcome)
        })
        .collect()
}

/// Encoder means of every row of `data`.
pub fn encode_means(model: &IwaeModel<f64>, data: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(model.encode_batch(data)?.0)
}

/// Axis-aligned window around 2-d latent points, padded by `pad` of its extent on each side.
pub fn latent_window(latents: ArrayView2<f64>, pad: f64, resolution: usize) -> Result<GridSpec> {
    if latents.ncols() != 2 {
        return Err(Error::InvalidConfig(format!("latent window needs 2-d latents, got {}", latents.ncols())));
    }
    let range = |j: usize| {
        let c: Array1<f64> = latents.column(j).to_owned();
        let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let span = (hi - lo).max(1e-9);
        [lo - pad * span, hi + pad * span]
    };
    GridSpec::new(range(0), range(1), resolution, resolution)
}

/// CSV of pair outcomes, one row per pair.
pub fn write_pairs_csv<W: Write>(mut w: W, separation_name: &str, outcomes: &[PairOutcome]) -> Result<()> {
    let dim = outcomes.first().map_or(0, |o| o.z0.len());
    write!(w, "pair,a,b,{separation_name}")?;
    for j in 1..=dim {
        write!(w, ",z0_{j}")?;
    }
    for j in 1..=dim {
        write!(w, ",z1_{j}")?;
    }
    writeln!(
        w,
        ",geodesic_length,straight_length,euclidean_distance,oracle_length,geodesic_cv,straight_cv,straight_retained,iterations"
    )?;
    for o in outcomes {
        write!(w, "{},{},{},{}", o.pair, o.a, o.b, o.separation)?;
        for v in o.z0.iter().chain(&o.z1) {
            write!(w, ",{v}")?;
        }
        let oracle = o.oracle_length.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            ",{},{},{},{oracle},{},{},{},{}",
            o.geodesic_length, o.straight_length, o.euclidean_distance, o.geodesic_cv, o.straight_cv, o.straight_retained, o.iterations
        )?;
    }
    Ok(())
}

/// Fraction of `flags` that are true.
pub(crate) fn share(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags {
        hit += f as usize;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}
