use latgeo::datasets::{pendulum_generate, robot_generate, PendulumConfig, RobotArmConfig};

use super::{path_opt, Context};
use crate::failure::Failure;
use crate::settings::Settings;
use crate::{DatasetKind, GenerateArgs};

pub(super) fn run(ctx: &Context, mut s: Settings, a: GenerateArgs) -> Result<u8, Failure> {
    let name = match a.dataset {
        DatasetKind::Pendulum => "pendulum",
        DatasetKind::Robot => "robot",
    };
    let out = path_opt(&mut s, "out", a.out)?.unwrap_or_else(|| ctx.data_dir.join(name));
    let seed = s.value("seed", a.seed, 0u64)?;
    let mut run = ctx.start(&format!("generate {name}"), &out)?;
    match a.dataset {
        DatasetKind::Pendulum => {
            let d = PendulumConfig::default();
            if s.opt("validation-count", a.validation_count)?.is_some() {
                return Err(Failure::Usage("--validation-count applies to the robot dataset".into()));
            }
            let cfg = PendulumConfig {
                sample_count: s.value("count", a.count, d.sample_count)?,
                noise_std: s.value("noise", a.noise, d.noise_std)?,
                image_size: s.value("image-size", a.image_size, d.image_size)?,
                seed,
                ..d
            };
            let data = pendulum_generate(&cfg)?;
            run.outputs(data.save(run.path("pendulum.bin"))?);
            println!("wrote {} pendulum images to {}", data.len(), out.display());
        }
        DatasetKind::Robot => {
            let d = RobotArmConfig::default();
            if s.opt("image-size", a.image_size)?.is_some() {
                return Err(Failure::Usage("--image-size applies to the pendulum dataset".into()));
            }
            let cfg = RobotArmConfig {
                timestep_count: s.value("count", a.count, d.timestep_count)?,
                validation_count: s.value("validation-count", a.validation_count, d.validation_count)?,
                noise_std: s.value("noise", a.noise, d.noise_std)?,
                seed,
                ..d
            };
            let (train, validation) = robot_generate(&cfg)?;
            run.outputs(train.save(run.path("robot-train.bin"))?);
            run.outputs(validation.save(run.path("robot-validation.bin"))?);
            println!(
                "wrote {} training and {} validation timesteps to {}",
                train.len(),
                validation.len(),
                out.display()
            );
        }
    }
    run.finish(Some(seed), s.finish()?, 0)?;
    Ok(0)
}
