use latgeo::experiments::{encode_means, latent_window};
use latgeo::riemann::{mf_field, GridGraph, GridSpec, Smoothing};

use super::{out_dir, path_opt, Context};
use crate::failure::Failure;
use crate::settings::{Coords, Settings};
use crate::{FieldArgs, FieldKindArg};

pub(super) fn run(ctx: &Context, mut s: Settings, a: FieldArgs) -> Result<u8, Failure> {
    let out = out_dir(&mut s, a.out)?;
    let checkpoint = path_opt(&mut s, "checkpoint", a.checkpoint)?
        .ok_or_else(|| Failure::Usage("missing --checkpoint".into()))?;
    let resolution = s.value("resolution", a.resolution, 100usize)?;
    let x_range = s.opt::<Coords>("x-range", a.x_range)?;
    let y_range = s.opt::<Coords>("y-range", a.y_range)?;
    let data = path_opt(&mut s, "data", a.data)?;
    let source = s.opt::<Coords>("source", a.source)?;
    let lambda = s.opt("lambda", a.lambda)?;
    let rank = s.opt("rank", a.rank)?;

    let mut run = ctx.start("field", &out)?;
    let model = ctx.load_checkpoint(&mut run, &checkpoint)?;
    if model.latent_dim() != 2 {
        return Err(Failure::Usage(format!(
            "fields need a 2-d latent space, the checkpoint has {}",
            model.latent_dim()
        )));
    }
    let window = match &data {
        Some(p) => {
            let d = ctx.load_dataset(&mut run, p)?;
            Some(latent_window(encode_means(&model, d.samples.view())?.view(), 0.05, resolution)?)
        }
        None => None,
    };
    let range = |given: Option<Coords>, name: &str, axis: usize| -> Result<[f64; 2], Failure> {
        match (given, &window) {
            (Some(c), _) => c.pair(name),
            (None, Some(w)) => Ok(if axis == 0 { w.x_range } else { w.y_range }),
            (None, None) => Ok([-3.0, 3.0]),
        }
    };
    let grid = GridSpec::new(range(x_range, "x-range", 0)?, range(y_range, "y-range", 1)?, resolution, resolution)?;
    s.record("x-range", &grid.x_range);
    s.record("y-range", &grid.y_range);

    let field = match a.kind {
        FieldKindArg::Mf => {
            if source.is_some() || lambda.is_some() {
                return Err(Failure::Usage("--source and --lambda apply to distance fields".into()));
            }
            s.record("kind", &"mf");
            mf_field(model.decoder(), &grid)?
        }
        FieldKindArg::Distance => {
            s.record("kind", &"distance");
            let source = source.ok_or_else(|| Failure::Usage("distance fields need --source".into()))?;
            let smoothing = match (lambda, rank) {
                (Some(l), r) => Some(Smoothing::new(l, r.unwrap_or(2))?),
                (None, Some(_)) => return Err(Failure::Usage("--rank needs --lambda".into())),
                (None, None) => None,
            };
            if let Some(sm) = &smoothing {
                sm.validate_for(2)?;
            }
            GridGraph::build(model.decoder(), &grid, smoothing.as_ref())?.distance_field(source.pair("source")?)?
        }
    };
    let config = s.finish()?;
    run.outputs(field.export(run.out(), "field", true)?);
    println!(
        "{}x{} field, min {:.6}, median {:.6}, max {:.6}",
        grid.nx,
        grid.ny,
        field.min(),
        field.median(),
        field.max()
    );
    run.finish(None, config, 0)?;
    Ok(0)
}
