use std::io::Write;

use latgeo::datasets::{PendulumConfig, RobotArmConfig};
use latgeo::experiments::{
    flat_metric_suite, pendulum_suite, robot_suite, write_pairs_csv, PairOutcome, PendulumExperiment, RobotExperiment,
    SuiteReport, SUITES,
};
use latgeo::geodesic::GeodesicConfig;

use super::{out_dir, path_opt, solver_config, Context};
use crate::failure::Failure;
use crate::manifest::Run;
use crate::settings::Settings;
use crate::EvalArgs;

fn write_pairs(run: &mut Run, name: &str, separation: &str, outcomes: &[PairOutcome]) -> Result<(), Failure> {
    let p = run.path(name);
    let mut w = std::io::BufWriter::new(std::fs::File::create(&p)?);
    write_pairs_csv(&mut w, separation, outcomes)?;
    w.flush()?;
    run.output(p);
    Ok(())
}

pub(super) fn run(ctx: &Context, mut s: Settings, a: EvalArgs) -> Result<u8, Failure> {
    let suite = s.required::<String>("suite", a.suite)?;
    if !SUITES.contains(&suite.as_str()) {
        return Err(Failure::Usage(format!("unknown suite '{suite}'; expected one of {SUITES:?}")));
    }
    let out = out_dir(&mut s, a.out)?;
    let checkpoint = path_opt(&mut s, "checkpoint", a.checkpoint)?
        .ok_or_else(|| Failure::Usage("missing --checkpoint".into()))?;
    let data = path_opt(&mut s, "data", a.data)?;
    let mut run = ctx.start(&format!("eval {suite}"), &out)?;
    let model = ctx.load_checkpoint(&mut run, &checkpoint)?;
    let nz = model.latent_dim();

    let (report, seed) = match suite.as_str() {
        "flat-metric" => {
            let cfg = solver_config(&mut s, &a.solver, GeodesicConfig::default(), nz)?;
            let pairs = s.value("pairs", a.pairs, 5usize)?;
            (flat_metric_suite(&model, &cfg, pairs, cfg.seed)?, cfg.seed)
        }
        "pendulum-ordering" => {
            let data = ctx.load_dataset(&mut run, &data.ok_or_else(|| Failure::Usage("suite needs --data".into()))?)?;
            let seed = s.value("seed", a.solver.seed, 0u64)?;
            let mut exp = PendulumExperiment::desk(seed);
            if let Ok(c) = serde_json::from_value::<PendulumConfig>(data.meta["config"].clone()) {
                exp.data = c;
            }
            exp.geodesic = solver_config(&mut s, &a.solver, exp.geodesic, nz)?;
            exp.pairs = s.value("pairs", a.pairs, exp.pairs)?;
            exp.oracle_pairs = s.value("oracle-pairs", a.oracle_pairs, exp.oracle_pairs)?;
            exp.oracle_resolution = s.value("oracle-resolution", a.oracle_resolution, exp.oracle_resolution)?;
            exp.triangle_checks = s.value("triangle-checks", a.triangle_checks, exp.triangle_checks)?;
            exp.frames = s.value("frames", a.frames, exp.frames)?;
            let (report, detail, oracle) = pendulum_suite(&exp, &data, &model)?;
            write_pairs(&mut run, "pairs.csv", "angle_difference_deg", &detail.outcomes)?;
            if let Some(o) = oracle {
                write_pairs(&mut run, "oracle-pairs.csv", "angle_difference_deg", &o.outcomes)?;
            }
            (report, seed)
        }
        _ => {
            let data = ctx.load_dataset(&mut run, &data.ok_or_else(|| Failure::Usage("suite needs --data".into()))?)?;
            let seed = s.value("seed", a.solver.seed, 0u64)?;
            let mut exp = RobotExperiment::desk(seed);
            if let Ok(c) = serde_json::from_value::<RobotArmConfig>(data.meta["config"].clone()) {
                exp.data = c;
            }
            exp.geodesic = solver_config(&mut s, &a.solver, exp.geodesic, nz)?;
            exp.pairs = s.value("pairs", a.pairs, exp.pairs)?;
            exp.frames = s.value("frames", a.frames, exp.frames)?;
            for (key, flag) in [("oracle-pairs", a.oracle_pairs), ("oracle-resolution", a.oracle_resolution), ("triangle-checks", a.triangle_checks)] {
                if s.opt(key, flag)?.is_some() {
                    return Err(Failure::Usage(format!("--{key} applies to the pendulum suite")));
                }
            }
            let (report, detail) = robot_suite(&exp, &data, &model)?;
            write_pairs(&mut run, "pairs.csv", "timestep_difference", &detail.outcomes)?;
            (report, seed)
        }
    };
    let config = s.finish()?;
    let p = run.path("report.json");
    std::fs::write(&p, serde_json::to_string_pretty(&report)?)?;
    run.output(p);
    print_report(&report);
    let code = if report.pass { 0 } else { 2 };
    run.finish(Some(seed), config, code)?;
    Ok(code)
}

fn print_report(r: &SuiteReport) {
    for c in &r.criteria {
        println!("{} {}: {} (threshold {})", if c.pass { "PASS" } else { "FAIL" }, c.criterion, c.measured, c.threshold);
    }
    println!("suite {}: {}", r.suite, if r.pass { "pass" } else { "fail" });
}
