use std::io::Write;

use latgeo::datasets::{Dataset, PendulumConfig};
use latgeo::experiments::{
    encode_means, latent_window, run_pendulum, run_random_pairs, write_pairs_csv, PairOutcome, PendulumExperiment,
    WINDOW_PAD,
};
use latgeo::geodesic::{interpolate_and_decode, optimize_geodesic, Domain, GeodesicConfig};
use latgeo::iwae::Preset;
use latgeo::riemann::GridGraph;
use latgeo::IwaeModel64;
use ndarray::Array1;
use serde_json::json;

use super::{image_side, out_dir, path_opt, solver_config, Context};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::settings::{Coords, Settings};
use crate::GeodesicArgs;

pub(super) fn run(ctx: &Context, mut s: Settings, a: GeodesicArgs) -> Result<u8, Failure> {
    let out = out_dir(&mut s, a.out)?;
    let checkpoint = path_opt(&mut s, "checkpoint", a.checkpoint)?
        .ok_or_else(|| Failure::Usage("missing --checkpoint".into()))?;
    let z0 = s.opt::<Coords>("z0", a.z0)?;
    let z1 = s.opt::<Coords>("z1", a.z1)?;
    let pairs = s.opt("pairs", a.pairs)?;
    let data = path_opt(&mut s, "data", a.data)?;
    let quiet = s.flag("quiet", a.quiet)?;
    let confine = s.flag("confine", a.confine)?;
    let mut run = ctx.start("geodesic", &out)?;
    let model = ctx.load_checkpoint(&mut run, &checkpoint)?;
    let cfg = solver_config(&mut s, &a.solver, GeodesicConfig::default(), model.latent_dim())?;

    match (z0, z1, pairs) {
        (Some(z0), Some(z1), None) => {
            let mut cfg = cfg;
            match (&data, confine) {
                (Some(d), true) => {
                    let data = ctx.load_dataset(&mut run, d)?;
                    let latents = encode_means(&model, data.samples.view())?;
                    cfg.domain = Some(Domain::around(latents.view(), WINDOW_PAD)?);
                }
                (None, true) => return Err(Failure::Usage("--confine needs --data".into())),
                (Some(_), false) => return Err(Failure::Usage("with --z0/--z1, --data is only used by --confine".into())),
                (None, false) => {}
            }
            let frames = s.value("frames", a.frames, 0usize)?;
            let config = s.finish()?;
            single(&mut run, &model, z0, z1, frames, &cfg)?;
            run.finish(Some(cfg.seed), config, 0)?;
        }
        (None, None, Some(count)) => {
            let data = data.ok_or_else(|| Failure::Usage("--pairs needs --data".into()))?;
            let data = ctx.load_dataset(&mut run, &data)?;
            let frames = s.value("frames", a.frames, 0usize)?;
            let resolution = s.value("oracle-resolution", a.oracle_resolution, 100usize)?;
            let oracle = !s.flag("no-oracle", a.no_oracle)? && model.latent_dim() == 2;
            let config = s.finish()?;
            let job = PairsJob {
                count,
                frames,
                resolution,
                oracle,
                confine,
                quiet,
            };
            pairs_mode(&mut run, &model, &data, &job, &cfg)?;
            run.finish(Some(cfg.seed), config, 0)?;
        }
        _ => {
            return Err(Failure::Usage(
                "give either --z0 and --z1, or --pairs with --data".into(),
            ))
        }
    }
    Ok(0)
}

fn single(run: &mut Run, model: &IwaeModel64, z0: Coords, z1: Coords, frames: usize, cfg: &GeodesicConfig) -> Result<(), Failure> {
    let nz = model.latent_dim();
    for (name, z) in [("z0", &z0), ("z1", &z1)] {
        if z.0.len() != nz {
            return Err(Failure::Usage(format!(
                "--{name} has {} coordinates but the checkpoint's latent dimension is {nz}",
                z.0.len()
            )));
        }
    }
    let (z0, z1) = (Array1::from(z0.0), Array1::from(z1.0));
    let r = optimize_geodesic(model, z0.view(), z1.view(), cfg)?;
    run.outputs(r.export(run.out(), "geodesic")?);
    if frames >= 2 {
        let decoded = interpolate_and_decode(model.decoder(), &r, frames)?;
        match image_side(model.data_dim()) {
            Some(side) => run.outputs(decoded.write_pgm_frames(run.out(), "frame", side)?),
            None => {
                let p = run.path("frames.csv");
                let mut w = std::io::BufWriter::new(std::fs::File::create(&p)?);
                decoded.write_csv(&mut w)?;
                w.flush()?;
                run.output(p);
            }
        }
    }
    println!(
        "geodesic length {:.6}, straight-line length {:.6}, Euclidean latent distance {:.6}{}",
        r.length,
        r.straight_length,
        r.euclidean_distance,
        if r.curve.is_straight() { " (straight line retained)" } else { "" }
    );
    Ok(())
}

struct PairsJob {
    count: usize,
    frames: usize,
    resolution: usize,
    oracle: bool,
    confine: bool,
    quiet: bool,
}

fn pairs_mode(run: &mut Run, model: &IwaeModel64, data: &Dataset, job: &PairsJob, cfg: &GeodesicConfig) -> Result<(), Failure> {
    let progress = |o: &PairOutcome| {
        if !job.quiet {
            eprintln!(
                "pair {}: separation {:.3}, geodesic {:.5}, straight {:.5}",
                o.pair, o.separation, o.geodesic_length, o.straight_length
            );
        }
    };
    let (separation, outcomes, extra) = if data.annotation("angle_deg").is_some() {
        let exp = PendulumExperiment {
            data: serde_json::from_value::<PendulumConfig>(data.meta["config"].clone()).unwrap_or_default(),
            train: Preset::Pendulum.train_config(cfg.seed),
            geodesic: cfg.clone(),
            pairs: job.count,
            oracle_pairs: if job.oracle { job.count } else { 0 },
            oracle_resolution: job.resolution,
            triangle_checks: 0,
            frames: job.frames,
            confine: job.confine,
            oracle_smoothing: cfg.smoothing,
            seed: cfg.seed,
        };
        let r = run_pendulum(&exp, data, model, progress)?;
        let extra = json!({
            "length_correlation": r.length_correlation(),
            "flatness_share": r.flatness_share(),
            "oracle_ratios": r.oracle_ratios(),
            "geodesic_monotone": r.geodesic_monotone,
            "straight_monotone": r.straight_monotone,
        });
        ("angle_difference_deg", r.outcomes, extra)
    } else {
        let column = data.annotation("timestep").is_some().then_some("timestep");
        let latents = encode_means(model, data.samples.view())?;
        let mut cfg = cfg.clone();
        if job.confine {
            cfg.domain = Some(Domain::around(latents.view(), WINDOW_PAD)?);
        }
        let mut outcomes = run_random_pairs(model, data, job.count, column, &cfg, progress)?;
        if job.oracle {
            let grid = latent_window(latents.view(), WINDOW_PAD, job.resolution)?;
            let graph = GridGraph::build(model.decoder(), &grid, cfg.smoothing.as_ref())?;
            for o in &mut outcomes {
                o.oracle_length = Some(graph.distance([o.z0[0], o.z0[1]], [o.z1[0], o.z1[1]]));
            }
        }
        let name = if column.is_some() { "timestep_difference" } else { "separation" };
        (name, outcomes, json!({}))
    };

    let csv = run.path("pairs.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv)?);
    write_pairs_csv(&mut w, separation, &outcomes)?;
    w.flush()?;
    run.output(csv);
    let shorter = outcomes.iter().filter(|o| o.geodesic_length < o.straight_length).count();
    let summary = run.path("pairs.json");
    let mut body = json!({
        "pairs": outcomes.len(),
        "separation": separation,
        "geodesic_shorter_share": shorter as f64 / outcomes.len().max(1) as f64,
        "mean_geodesic_length": mean(outcomes.iter().map(|o| o.geodesic_length)),
        "mean_straight_length": mean(outcomes.iter().map(|o| o.straight_length)),
        "mean_euclidean_distance": mean(outcomes.iter().map(|o| o.euclidean_distance)),
    });
    if let (Some(b), Some(e)) = (body.as_object_mut(), extra.as_object()) {
        b.extend(e.clone());
    }
    std::fs::write(&summary, serde_json::to_string_pretty(&body)?)?;
    run.output(summary);
    println!("{shorter} of {} geodesics are shorter than the straight line", outcomes.len());
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
