use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{draw_pair, encode_means, share, solve_pair, PairOutcome, WINDOW_PAD};
use crate::datasets::{robot_generate, ArmChain, Dataset, RobotArmConfig};
use crate::error::Result;
use crate::geodesic::{interpolate_and_decode, Domain, GeodesicConfig};
use crate::iwae::{train_with, IwaeModel, Preset, TrainConfig, TrainReport};
use crate::numerics::rng::substream;

/// Settings of the robot-arm experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotExperiment {
    pub data: RobotArmConfig,
    pub train: TrainConfig,
    pub geodesic: GeodesicConfig,
    pub pairs: usize,
    /// Decoded frames per interpolation for the end-effector comparison.
    pub frames: usize,
    /// Confine geodesics to the padded bounding box of the encoded data.
    pub confine: bool,
    pub seed: u64,
}

impl RobotExperiment {
    pub fn desk(seed: u64) -> Self {
        Self {
            data: RobotArmConfig {
                seed,
                ..RobotArmConfig::default()
            },
            train: Preset::Robot.train_config(seed),
            geodesic: GeodesicConfig {
                speed_weight: 1.0,
                seed,
                ..GeodesicConfig::default()
            },
            pairs: 20,
            frames: 32,
            confine: false,
            seed,
        }
    }
}

/// Generates both trajectories and trains the robot model on the training one.
pub fn train_robot(
    exp: &RobotExperiment,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(Dataset, Dataset, IwaeModel<f64>, TrainReport)> {
    let (train, validation) = robot_generate(&exp.data)?;
    let spec = Preset::Robot.model_spec(train.dim());
    let mut model = spec.build(&mut substream(exp.seed, "model-init"))?;
    let report = train_with(&mut model, train.samples.view(), &exp.train, on_epoch)?;
    Ok((train, validation, model, report))
}

/// Distances between consecutive tool positions of decoded joint vectors.
pub fn end_effector_jumps(chain: &ArmChain, joints: ArrayView2<f64>) -> Result<Vec<f64>> {
    let pts = joints
        .outer_iter()
        .map(|q| chain.forward(&q.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(pts
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2) + (w[1][2] - w[0][2]).powi(2)).sqrt())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotReport {
    pub outcomes: Vec<PairOutcome>,
    /// Largest inter-frame tool displacement along the decoded geodesic, per pair.
    pub geodesic_max_jump: Vec<f64>,
    pub straight_max_jump: Vec<f64>,
}

impl RobotReport {
    pub fn ordering_share(&self) -> f64 {
        share(self.outcomes.iter().map(|o| o.geodesic_length < o.straight_length))
    }

    /// Share of pairs whose geodesic max jump is at most `factor` times the straight one.
    pub fn smoothness_share(&self, factor: f64) -> f64 {
        share(self.geodesic_max_jump.iter().zip(&self.straight_max_jump).map(|(g, s)| *g <= factor * s))
    }
}

/// Geodesics between random training samples, compared through forward kinematics.
pub fn run_robot(
    exp: &RobotExperiment,
    data: &Dataset,
    model: &IwaeModel<f64>,
    mut on_pair: impl FnMut(&PairOutcome),
) -> Result<RobotReport> {
    let latents = encode_means(model, data.samples.view())?;
    let mut cfg = exp.geodesic.clone();
    if exp.confine {
        cfg.domain = Some(Domain::around(latents.view(), WINDOW_PAD)?);
    }
    let steps = data.annotation("timestep");
    let mut rng = substream(exp.seed, "robot-pairs");
    let mut report = RobotReport {
        outcomes: Vec::new(),
        geodesic_max_jump: Vec::new(),
        straight_max_jump: Vec::new(),
    };
    let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    for i in 0..exp.pairs {
        let (a, b) = draw_pair(&mut rng, data.len(), |_, _| true)?;
        let sep = steps.map_or(0.0, |s| (s[a] - s[b]).abs());
        let (outcome, result) = solve_pair(model, latents.view(), i, (a, b), sep, &cfg)?;
        let decoded = interpolate_and_decode(model.decoder(), &result, exp.frames)?;
        report
            .geodesic_max_jump
            .push(max(end_effector_jumps(&exp.data.chain, decoded.geodesic_frames.view())?));
        report
            .straight_max_jump
            .push(max(end_effector_jumps(&exp.data.chain, decoded.straight_frames.view())?));
        on_pair(&outcome);
        report.outcomes.push(outcome);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jumps_follow_forward_kinematics() {
        let chain = ArmChain::default();
        let q = ndarray::Array2::from_elem((3, 6), chain.joint_offset);
        let j = end_effector_jumps(&chain, q.view()).unwrap();
        assert_eq!(j, vec![0.0, 0.0]);
        let mut q2 = q.clone();
        q2[[1, 0]] += std::f64::consts::FRAC_PI_2;
        let j = end_effector_jumps(&chain, q2.view()).unwrap();
        let p0 = chain.forward(&q.row(0).to_vec()).unwrap();
        let reach = (p0[0] * p0[0] + p0[1] * p0[1]).sqrt();
        assert!((j[0] - reach * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tiny_end_to_end_run() {
        let mut exp = RobotExperiment::desk(2);
        exp.data.timestep_count = 200;
        exp.data.validation_count = 10;
        exp.train.epochs = 2;
        exp.pairs = 2;
        exp.frames = 5;
        exp.geodesic = GeodesicConfig {
            n: 16,
            max_iters: 10,
            pretrain_curves: 1,
            fit_iters: 5,
            pretrain_points: 8,
            ..exp.geodesic
        };
        let (train, _, model, _) = train_robot(&exp, |_, _| {}).unwrap();
        let r = run_robot(&exp, &train, &model, |_| {}).unwrap();
        assert_eq!(r.outcomes.len(), 2);
        assert_eq!(r.geodesic_max_jump.len(), 2);
        assert!(r.straight_max_jump.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
