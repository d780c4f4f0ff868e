use nalgebra::{Matrix3, Matrix3x6, Matrix6, Rotation3, SVector, Vector3};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::rng::substream;

type Joints = SVector<f64, 6>;

/// A 6-joint serial arm: base yaw, shoulder pitch, elbow pitch, forearm
/// roll, wrist pitch and tool roll. Link lengths sum to 1.2 m.
///
/// Stored joint values are the physical angles plus `joint_offset`, which
/// keeps every recorded angle positive along the default trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmChain {
    pub base_height: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub wrist: f64,
    /// Tool tip offset perpendicular to the last roll axis.
    pub tool_offset: f64,
    pub joint_offset: f64,
    /// Physical rest posture the redundant degrees of freedom are pulled toward.
    pub home: [f64; 6],
}

impl Default for ArmChain {
    fn default() -> Self {
        Self {
            base_height: 0.15,
            upper_arm: 0.5,
            forearm: 0.45,
            wrist: 0.08,
            tool_offset: 0.02,
            joint_offset: std::f64::consts::PI,
            home: [0.0, -0.3, 1.0, 0.0, 0.5, 0.0],
        }
    }
}

struct Frames {
    origins: [Vector3<f64>; 6],
    axes: [Vector3<f64>; 6],
    tip: Vector3<f64>,
}

impl ArmChain {
    pub fn total_length(&self) -> f64 {
        self.base_height + self.upper_arm + self.forearm + self.wrist + self.tool_offset
    }

    fn shoulder(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.base_height)
    }

    fn frames(&self, q: &Joints) -> Frames {
        let x = Vector3::x_axis();
        let y = Vector3::y_axis();
        let z = Vector3::z_axis();
        let mut rot = Rotation3::identity();
        let mut pos = Vector3::zeros();
        let mut origins = [Vector3::zeros(); 6];
        let mut axes = [Vector3::zeros(); 6];
        let joint_axes = [z, y, y, x, y, x];
        let links = [
            Vector3::new(0.0, 0.0, self.base_height),
            Vector3::new(self.upper_arm, 0.0, 0.0),
            Vector3::new(self.forearm, 0.0, 0.0),
            Vector3::zeros(),
            Vector3::new(self.wrist, 0.0, 0.0),
            Vector3::new(0.0, self.tool_offset, 0.0),
        ];
        for i in 0..6 {
            origins[i] = pos;
            axes[i] = rot * joint_axes[i].into_inner();
            rot *= Rotation3::from_axis_angle(&joint_axes[i], q[i]);
            pos += rot * links[i];
        }
        Frames { origins, axes, tip: pos }
    }

    fn physical(&self, stored: &[f64]) -> Joints {
        Joints::from_iterator(stored.iter().map(|v| v - self.joint_offset))
    }

    /// Tool position for stored joint values.
    pub fn forward(&self, stored: &[f64]) -> Result<[f64; 3]> {
        if stored.len() != 6 {
            return Err(Error::DimensionMismatch {
                context: "arm joint vector",
                expected: 6,
                actual: stored.len(),
            });
        }
        let p = self.frames(&self.physical(stored)).tip;
        Ok([p.x, p.y, p.z])
    }

    fn position_jacobian(&self, f: &Frames) -> Matrix3x6<f64> {
        let mut j = Matrix3x6::zeros();
        for i in 0..6 {
            j.set_column(i, &f.axes[i].cross(&(f.tip - f.origins[i])));
        }
        j
    }

    /// Damped least squares with a null-space pull toward `home`, starting
    /// from `start` (physical angles). The last iterations of the budget
    /// drop the posture term, which leaks slightly into the task space.
    fn solve(&self, target: &Vector3<f64>, start: Joints, damping: f64, max_iters: usize) -> (Joints, f64) {
        const POLISH: usize = 20;
        let home = Joints::from_row_slice(&self.home);
        let mut q = start;
        let mut posture = true;
        for it in 0..max_iters {
            if it + POLISH >= max_iters {
                posture = false;
            }
            let f = self.frames(&q);
            let e = target - f.tip;
            let j = self.position_jacobian(&f);
            let a = j * j.transpose() + Matrix3::identity() * (damping * damping);
            let Some(a_inv) = a.try_inverse() else { break };
            let pinv = j.transpose() * a_inv;
            let mut step = pinv * e;
            if posture {
                step += (Matrix6::identity() - pinv * j) * ((home - q) * 0.2);
            }
            q += step;
            if step.norm() < 1e-12 {
                if !posture {
                    break;
                }
                posture = false;
            }
        }
        let residual = (target - self.frames(&q).tip).norm();
        (q, residual)
    }
}

/// Circle-tracing trajectory settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotArmConfig {
    pub timestep_count: usize,
    pub validation_count: usize,
    pub radius: f64,
    /// The circle lies in the horizontal plane through `center`.
    pub center: [f64; 3],
    pub noise_std: f64,
    pub ik_damping: f64,
    pub ik_max_iters: usize,
    pub chain: ArmChain,
    pub seed: u64,
}

impl Default for RobotArmConfig {
    fn default() -> Self {
        Self {
            timestep_count: 6284,
            validation_count: 150,
            radius: 0.4,
            center: [0.5, 0.0, -0.15],
            noise_std: 0.03,
            ik_damping: 1e-3,
            ik_max_iters: 200,
            chain: ArmChain::default(),
            seed: 0,
        }
    }
}

/// Maximum tolerated distance between a commanded point and the solved tool position.
pub const IK_TOLERANCE: f64 = 1e-6;

impl RobotArmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timestep_count < 2 || self.validation_count < 2 {
            return Err(Error::InvalidConfig("robot trajectories need at least two timesteps".into()));
        }
        if !(self.radius > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("robot radius must be positive and noise nonnegative".into()));
        }
        let c = &self.chain;
        let reach = c.upper_arm + c.forearm + c.wrist;
        let inner = (c.upper_arm - c.forearm).abs() + c.wrist + c.tool_offset;
        let shoulder = c.shoulder();
        for k in 0..360 {
            let d = (self.point(k as f64 / 360.0 * std::f64::consts::TAU) - shoulder).norm();
            if d > 0.95 * reach || d < inner {
                return Err(Error::InvalidConfig(format!(
                    "circle leaves the arm workspace ({d:.3} m from the shoulder, allowed {inner:.3}..{:.3})",
                    0.95 * reach
                )));
            }
        }
        Ok(())
    }

    pub fn point(&self, phase: f64) -> Vector3<f64> {
        Vector3::new(
            self.center[0] + self.radius * phase.cos(),
            self.center[1] + self.radius * phase.sin(),
            self.center[2],
        )
    }

    /// Noise-free stored joint vectors for `count` points, phase `2πk/(count−1)`.
    pub fn trajectory(&self, count: usize) -> Result<(Array2<f64>, Array2<f64>)> {
        self.validate()?;
        let chain = &self.chain;
        let mut joints = Array2::zeros((count, 6));
        let mut ann = Array2::zeros((count, 5));
        let mut q = Joints::from_row_slice(&chain.home);
        for k in 0..count {
            let phase = std::f64::consts::TAU * k as f64 / (count - 1) as f64;
            let target = self.point(phase);
            let (sol, residual) = chain.solve(&target, q, self.ik_damping, self.ik_max_iters);
            if !(residual <= IK_TOLERANCE) {
                return Err(Error::InvalidConfig(format!(
                    "inverse kinematics missed timestep {k} by {residual:.3e} m"
                )));
            }
            q = sol;
            for i in 0..6 {
                joints[[k, i]] = q[i] + chain.joint_offset;
            }
            ann.row_mut(k).assign(&ndarray::arr1(&[k as f64, phase, target.x, target.y, target.z]));
        }
        Ok((joints, ann))
    }
}

fn noisy(cfg: &RobotArmConfig, count: usize, stream: &str, name: &str) -> Result<Dataset> {
    let (mut joints, ann) = cfg.trajectory(count)?;
    let mut rng = substream(cfg.seed, stream);
    for v in joints.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += cfg.noise_std * e;
    }
    Dataset::new(
        name,
        joints,
        ["timestep", "phase", "px", "py", "pz"].map(String::from).to_vec(),
        ann,
        serde_json::json!({ "generator": "robot", "config": cfg, "seed": cfg.seed }),
    )
}

/// Training and validation trajectories of the arm tracing a horizontal circle.
pub fn robot_generate(cfg: &RobotArmConfig) -> Result<(Dataset, Dataset)> {
    Ok((
        noisy(cfg, cfg.timestep_count, "robot-train", "robot-train")?,
        noisy(cfg, cfg.validation_count, "robot-validation", "robot-validation")?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RobotArmConfig {
        RobotArmConfig {
            timestep_count: 400,
            validation_count: 20,
            ..RobotArmConfig::default()
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let chain = ArmChain::default();
        let q = Joints::from_row_slice(&[0.3, -0.2, 0.9, 0.4, 0.6, -0.7]);
        let j = chain.position_jacobian(&chain.frames(&q));
        let h = 1e-6;
        for i in 0..6 {
            let mut a = q;
            let mut b = q;
            a[i] += h;
            b[i] -= h;
            let fd = (chain.frames(&a).tip - chain.frames(&b).tip) / (2.0 * h);
            assert!((fd - j.column(i)).norm() < 1e-8);
        }
    }

    #[test]
    fn forward_kinematics_round_trip() {
        let cfg = small();
        let (joints, ann) = cfg.trajectory(cfg.timestep_count).unwrap();
        for (q, a) in joints.outer_iter().zip(ann.outer_iter()) {
            let p = cfg.chain.forward(q.as_slice().unwrap()).unwrap();
            let err = ((p[0] - a[2]).powi(2) + (p[1] - a[3]).powi(2) + (p[2] - a[4]).powi(2)).sqrt();
            assert!(err < IK_TOLERANCE, "{err}");
        }
        assert!(joints.iter().all(|&v| v > 0.0));
        let first = joints.row(0);
        let last = joints.row(joints.nrows() - 1);
        assert!((&first - &last).iter().all(|d| d.abs() < 1e-3));
    }

    #[test]
    fn generation_counts_and_determinism() {
        let cfg = small();
        let (tr, va) = robot_generate(&cfg).unwrap();
        assert_eq!(tr.samples.dim(), (400, 6));
        assert_eq!(va.samples.dim(), (20, 6));
        assert_eq!(robot_generate(&cfg).unwrap().0, tr);
        let d = RobotArmConfig::default();
        assert_eq!((d.timestep_count, d.validation_count), (6284, 150));
    }

    #[test]
    fn unreachable_circle_is_rejected() {
        let cfg = RobotArmConfig {
            radius: 0.9,
            ..small()
        };
        assert!(robot_generate(&cfg).is_err());
    }
}
