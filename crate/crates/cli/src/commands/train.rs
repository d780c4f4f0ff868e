use std::io::Write;
use std::path::Path;

use latgeo::datasets::{mnist_load, Dataset};
use latgeo::iwae::{train_with, Preset, TrainConfig};
use latgeo::numerics::rng::substream;
use serde_json::json;

use super::{out_dir, path_opt, Context};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::settings::Settings;
use crate::TrainArgs;

fn infer_preset(name: &str) -> Option<Preset> {
    match name {
        "pendulum" => Some(Preset::Pendulum),
        "mnist" => Some(Preset::Mnist),
        n if n.starts_with("robot") => Some(Preset::Robot),
        _ => None,
    }
}

/// A latgeo dataset file, or a raw MNIST file when that format does not parse.
fn load_any(ctx: &Context, run: &mut Run, path: &Path, limit: Option<usize>) -> Result<Dataset, Failure> {
    match ctx.load_dataset(run, path) {
        Ok(d) => Ok(d),
        Err(Failure::Io(first)) => {
            let located = ctx.locate(path);
            match mnist_load(&located, limit) {
                Ok(d) => {
                    run.input(located);
                    Ok(d)
                }
                Err(_) => Err(Failure::Io(first)),
            }
        }
        Err(e) => Err(e),
    }
}

pub(super) fn run(ctx: &Context, mut s: Settings, a: TrainArgs) -> Result<u8, Failure> {
    let out = out_dir(&mut s, a.out)?;
    let data_path = path_opt(&mut s, "data", a.data)?.ok_or_else(|| Failure::Usage("missing --data".into()))?;
    let limit = s.opt("limit", a.limit)?;
    let quiet = s.flag("quiet", a.quiet)?;
    let mut run = ctx.start("train", &out)?;
    let data = load_any(ctx, &mut run, &data_path, limit)?;

    let preset: Preset = match s.opt::<String>("preset", a.preset)? {
        Some(p) => p.parse()?,
        None => infer_preset(&data.name).ok_or_else(|| {
            Failure::Usage(format!("cannot infer a preset from dataset '{}'; pass --preset", data.name))
        })?,
    };
    s.record("preset", &preset);
    let seed = s.value("seed", a.seed, 0u64)?;
    let base = preset.train_config(seed);
    let cfg = TrainConfig {
        k: s.value("k", a.k, base.k)?,
        learning_rate: s.value("learning-rate", a.learning_rate, base.learning_rate)?,
        batch_size: s.value("batch-size", a.batch_size, base.batch_size)?,
        epochs: s.value("epochs", a.epochs, base.epochs)?,
        seed,
    };
    let mut spec = preset.model_spec(data.dim());
    if let Some(h) = s.opt("hidden", a.hidden)? {
        spec.encoder_hidden.iter_mut().chain(spec.decoder_hidden.iter_mut()).for_each(|w| *w = h);
    }
    spec.latent_dim = s.value("latent-dim", a.latent_dim, spec.latent_dim)?;
    s.record("model", &spec);
    let config = s.finish()?;

    let mut model = spec.build(&mut substream(seed, "model-init"))?;
    let epochs = cfg.epochs;
    let report = train_with(&mut model, data.samples.view(), &cfg, |e, b| {
        if !quiet {
            eprintln!("epoch {}/{epochs} bound {b:.4}", e + 1);
        }
    })?;

    run.outputs(model.save(run.path("model.bin"), &model.meta(Some(&cfg), Some(report.final_bound)))?);
    let trace = run.path("trace.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&trace)?);
    writeln!(w, "epoch,bound")?;
    for (e, b) in report.trace.iter().enumerate() {
        writeln!(w, "{},{b}", e + 1)?;
    }
    w.flush()?;
    run.output(trace);
    let summary = run.path("report.json");
    std::fs::write(
        &summary,
        serde_json::to_string_pretty(&json!({
            "dataset": data.name,
            "samples": data.len(),
            "parameters": model.num_params(),
            "initial_bound": report.initial_bound,
            "final_bound": report.final_bound,
        }))?,
    )?;
    run.output(summary);
    println!(
        "bound {:.4} -> {:.4} after {epochs} epochs; checkpoint in {}",
        report.initial_bound,
        report.final_bound,
        out.display()
    );
    run.finish(Some(seed), config, 0)?;
    Ok(0)
}
