mod eval;
mod field;
mod generate;
mod geodesic;
mod train;

use std::path::{Path, PathBuf};

use latgeo::datasets::{annotations_path, Dataset};
use latgeo::geodesic::{GeodesicConfig, Normalization};
use latgeo::iwae::sidecar_path;
use latgeo::riemann::Smoothing;
use latgeo::IwaeModel64;

use crate::failure::Failure;
use crate::manifest::Run;
use crate::settings::Settings;
use crate::{Cli, Command, SolverArgs};

/// Dispatches a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<u8, Failure> {
    let s = Settings::load(cli.config.as_deref())?;
    let ctx = Context {
        data_dir: cli.data_dir,
        config: cli.config,
    };
    match cli.command {
        Command::Generate(a) => generate::run(&ctx, s, a),
        Command::Train(a) => train::run(&ctx, s, a),
        Command::Geodesic(a) => geodesic::run(&ctx, s, a),
        Command::Field(a) => field::run(&ctx, s, a),
        Command::Eval(a) => eval::run(&ctx, s, a),
    }
}

pub(crate) struct Context {
    data_dir: PathBuf,
    config: Option<PathBuf>,
}

impl Context {
    /// Existing `path`, else `path` under the data directory when relative.
    fn locate(&self, path: &Path) -> PathBuf {
        if path.exists() || path.is_absolute() {
            return path.to_path_buf();
        }
        let alt = self.data_dir.join(path);
        if alt.exists() {
            alt
        } else {
            path.to_path_buf()
        }
    }

    fn start(&self, command: &str, out: &Path) -> Result<Run, Failure> {
        let mut run = Run::start(command, out)?;
        if let Some(c) = &self.config {
            run.input(c);
        }
        Ok(run)
    }

    fn load_dataset(&self, run: &mut Run, path: &Path) -> Result<Dataset, Failure> {
        let path = self.locate(path);
        let data = Dataset::load(&path)?;
        run.input(&path);
        let ann = annotations_path(&path);
        if ann.exists() {
            run.input(ann);
        }
        Ok(data)
    }

    fn load_checkpoint(&self, run: &mut Run, path: &Path) -> Result<IwaeModel64, Failure> {
        let (model, _) = IwaeModel64::load(path)?;
        run.input(path);
        run.input(sidecar_path(path));
        Ok(model)
    }
}

/// Curve optimizer settings over `base`.
fn solver_config(s: &mut Settings, a: &SolverArgs, base: GeodesicConfig, latent_dim: usize) -> Result<GeodesicConfig, Failure> {
    let normalization = match s
        .value("normalization", a.normalization.clone(), "rescale".to_string())?
        .as_str()
    {
        "rescale" => Normalization::Rescale,
        "blend" => Normalization::Blend,
        other => return Err(Failure::Usage(format!("--normalization must be rescale or blend, got {other}"))),
    };
    let base_smoothing = base.smoothing;
    let smoothing = match (s.opt("lambda", a.lambda)?, s.opt("rank", a.rank)?) {
        (Some(lambda), rank) => Some(Smoothing::new(lambda, rank.unwrap_or(latent_dim))?),
        (None, Some(_)) => return Err(Failure::Usage("--rank needs --lambda".into())),
        (None, None) => base_smoothing,
    };
    if let Some(sm) = &smoothing {
        sm.validate_for(latent_dim)?;
    }
    let cfg = GeodesicConfig {
        n: s.value("n", a.n, base.n)?,
        learning_rate: s.value("learning-rate", a.learning_rate, base.learning_rate)?,
        max_iters: s.value("max-iters", a.max_iters, base.max_iters)?,
        patience: s.value("patience", a.patience, base.patience)?,
        smoothing,
        lambda_phi: s.value("lambda-phi", a.lambda_phi, base.lambda_phi)?,
        pretrain_curves: s.value("pretrain-curves", a.pretrain_curves, base.pretrain_curves)?,
        control_count: s.value("control-count", a.control_count, base.control_count)?,
        fit_iters: s.value("fit-iters", a.fit_iters, base.fit_iters)?,
        pretrain_points: s.value("pretrain-points", a.pretrain_points, base.pretrain_points)?,
        normalization,
        speed_weight: s.value("speed-weight", a.speed_weight, base.speed_weight)?,
        domain: base.domain,
        seed: s.value("seed", a.seed, base.seed)?,
    };
    s.record("smoothing", &cfg.smoothing);
    cfg.validate()?;
    Ok(cfg)
}

/// Side length when `dim` is a square image of at least 4×4 pixels.
fn image_side(dim: usize) -> Option<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    (side >= 4 && side * side == dim).then_some(side)
}

fn out_dir(s: &mut Settings, flag: Option<PathBuf>) -> Result<PathBuf, Failure> {
    Ok(PathBuf::from(s.required::<String>("out", flag.map(|p| p.display().to_string()))?))
}

fn path_opt(s: &mut Settings, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, Failure> {
    Ok(s.opt::<String>(key, flag.map(|p| p.display().to_string()))?.map(PathBuf::from))
}
