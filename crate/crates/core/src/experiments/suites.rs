use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{run_pendulum, run_robot, PendulumExperiment, PendulumReport, RobotExperiment, RobotReport};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::geodesic::{optimize_geodesic, GeodesicConfig};
use crate::iwae::IwaeModel;
use crate::numerics::linalg::determinant;
use crate::numerics::rng::substream;
use crate::numerics::Activation;
use crate::riemann::{magnification_factor, metric_tensor, straight_line_profile};

/// Names accepted by the `eval` command.
pub const SUITES: [&str; 3] = ["flat-metric", "pendulum-ordering", "robot-smoothness"];

/// One measured property against its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub criterion: String,
    pub measured: f64,
    /// Human-readable comparison, e.g. `">= 0.9"`.
    pub threshold: String,
    pub pass: bool,
}

impl Criterion {
    pub fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            criterion: name.into(),
            measured,
            threshold: format!("<= {limit}"),
            pass: measured <= limit,
        }
    }

    pub fn at_least(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            criterion: name.into(),
            measured,
            threshold: format!(">= {limit}"),
            pass: measured >= limit,
        }
    }

    pub fn above(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            criterion: name.into(),
            measured,
            threshold: format!("> {limit}"),
            pass: measured > limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub criteria: Vec<Criterion>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn new(suite: &str, criteria: Vec<Criterion>) -> Self {
        let pass = criteria.iter().all(|c| c.pass);
        Self {
            suite: suite.into(),
            criteria,
            pass,
        }
    }
}

/// Checks a model whose decoder is one linear layer `x = Wz + b` against
/// the closed forms of a flat metric.
pub fn flat_metric_suite(model: &IwaeModel<f64>, geodesic: &GeodesicConfig, pairs: usize, seed: u64) -> Result<SuiteReport> {
    let dec = model.decoder();
    let [layer] = dec.layers() else {
        return Err(Error::InvalidNetwork("flat-metric suite needs a single-layer decoder".into()));
    };
    if layer.activation() != Activation::Linear || layer.is_residual() {
        return Err(Error::InvalidNetwork("flat-metric suite needs a linear decoder".into()));
    }
    let w = layer.weight();
    let wtw = w.t().dot(w);
    let mf_exact = determinant(wtw.view())?.max(0.0).sqrt();
    let nz = model.latent_dim();
    let mut rng = substream(seed, "flat-metric");
    let mut point = || Array1::from_shape_fn(nz, |_| rng.random_range(-2.0..2.0));
    let (mut g_err, mut len_err, mut mf_err, mut geo_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let z = point();
        let g = metric_tensor(dec, z.view(), None)?;
        g_err = g_err.max((g.matrix() - &wtw).iter().fold(0.0, |m, v| m.max(v.abs())));
        mf_err = mf_err.max((magnification_factor(dec, z.view())? - mf_exact).abs());
        let z1 = point();
        let exact = w.dot(&(&z1 - &z)).mapv(|v| v * v).sum().sqrt();
        let (len, _) = straight_line_profile(dec, z.view(), z1.view(), geodesic.n, None)?;
        len_err = len_err.max((len - exact).abs());
    }
    for _ in 0..pairs {
        let (z0, z1) = (point(), point());
        let exact = w.dot(&(&z1 - &z0)).mapv(|v| v * v).sum().sqrt();
        let r = optimize_geodesic(model, z0.view(), z1.view(), geodesic)?;
        geo_err = geo_err.max((r.length - exact).abs() / exact);
    }
    Ok(SuiteReport::new(
        "flat-metric",
        vec![
            Criterion::at_most("metric equals WᵀW (max abs error)", g_err, 1e-12),
            Criterion::at_most("straight-line length equals ‖W(z1−z0)‖ (max abs error)", len_err, 1e-9),
            Criterion::at_most("magnification factor equals √det(WᵀW) (max abs error)", mf_err, 1e-10),
            Criterion::at_most("geodesic length relative error vs straight line", geo_err, 1e-3),
        ],
    ))
}

fn max_endpoint_error(r: &PendulumReport) -> f64 {
    r.outcomes.iter().fold(0.0f64, |m, o| m.max(o.max_endpoint_error))
}

pub(crate) fn pendulum_criteria(r: &PendulumReport) -> Vec<Criterion> {
    let mono = r.geodesic_monotone.iter().sum::<f64>() / r.geodesic_monotone.len().max(1) as f64;
    vec![
        Criterion::at_least("share of pairs with geodesic shorter than straight line", r.ordering_share(), 0.9),
        Criterion::above("Pearson correlation of angle difference and geodesic length", r.length_correlation(), 0.9),
        Criterion::at_least("share of pairs with flatter velocity than straight line", r.flatness_share(), 0.7),
        Criterion::at_least("mean share of monotone decoded rotation steps", mono, 0.9),
        Criterion::at_most("max endpoint error over all iterations", max_endpoint_error(r), 1e-9),
    ]
}

pub(crate) fn oracle_criteria(r: &PendulumReport) -> Vec<Criterion> {
    let ratio_err = r.oracle_ratios().iter().fold(0.0f64, |m, q| m.max((q - 1.0).abs()));
    vec![
        Criterion::at_most("max |geodesic / graph-oracle length − 1|", ratio_err, 0.15),
        Criterion::at_most("oracle triangle-inequality violations", r.triangle_violations as f64, 0.0),
        Criterion::at_most("max endpoint error over all oracle-run iterations", max_endpoint_error(r), 1e-9),
    ]
}

/// Runs [`PendulumExperiment::ordering_run`] and, when it has oracle pairs,
/// [`PendulumExperiment::oracle_run`]; returns both reports.
pub fn pendulum_suite(
    exp: &PendulumExperiment,
    data: &Dataset,
    model: &IwaeModel<f64>,
) -> Result<(SuiteReport, PendulumReport, Option<PendulumReport>)> {
    let main = run_pendulum(&exp.ordering_run(), data, model, |_| {})?;
    let mut criteria = pendulum_criteria(&main);
    let oracle = if exp.oracle_pairs > 0 || exp.triangle_checks > 0 {
        let r = run_pendulum(&exp.oracle_run(), data, model, |_| {})?;
        criteria.extend(oracle_criteria(&r));
        Some(r)
    } else {
        None
    };
    Ok((SuiteReport::new("pendulum-ordering", criteria), main, oracle))
}

pub(crate) fn robot_criteria(r: &RobotReport) -> Vec<Criterion> {
    vec![
        Criterion::at_least("share of pairs with geodesic shorter than straight line", r.ordering_share(), 0.9),
        Criterion::at_least("share of pairs whose max end-effector jump is <= 0.5x straight", r.smoothness_share(0.5), 0.7),
    ]
}

pub fn robot_suite(exp: &RobotExperiment, data: &Dataset, model: &IwaeModel<f64>) -> Result<(SuiteReport, RobotReport)> {
    let r = run_robot(exp, data, model, |_| {})?;
    Ok((SuiteReport::new("robot-smoothness", robot_criteria(&r)), r))
}

/// A model whose decoder is the linear map `w` (useful as a flat-metric fixture).
pub fn linear_fixture(w: Array2<f64>, seed: u64) -> Result<IwaeModel<f64>> {
    use crate::iwae::{LikelihoodKind, ModelSpec};
    use crate::numerics::{Layer, Mlp};
    let (nx, nz) = w.dim();
    let spec = ModelSpec {
        data_dim: nx,
        latent_dim: nz,
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        residual_blocks: 0,
        likelihood: LikelihoodKind::GaussianGlobalVar,
    };
    let base: IwaeModel<f64> = spec.build(&mut substream(seed, "fixture"))?;
    let decoder = Mlp::new(nz, vec![Layer::new(w, Array1::zeros(nx), Activation::Linear, false)?])?;
    IwaeModel::from_parts(
        base.encoder_trunk().clone(),
        base.encoder_mean().clone(),
        base.encoder_std().clone(),
        decoder,
        LikelihoodKind::GaussianGlobalVar,
        base.log_variance(),
    )
}
