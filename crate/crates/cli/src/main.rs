use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use drivebench::bench::{comparison_csv, prepare, run_ablation, run_suite, Ablation, Suite};
use drivebench::controllers::{ControllerConfig, SpeedMode};
use drivebench::datagen::{generate, write_dataset, DatagenConfig};
use drivebench::episode::{EpisodeConfig, PilotSpec, PolicyKind};
use drivebench::localization::{evaluate, urban_track, tune, TuneGrid, UkfParams};
use drivebench::metrics::aggregate;
use drivebench::policies::{NcConfig, Representation, ShortcutConfig, UncertainConfig};
use drivebench::world::{Prepared, Scenario, DEFAULT_GNSS_SIGMA};

#[derive(Parser)]
#[command(name = "drivebench", version, about = "Closed-loop driving benchmark on a 2D simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate one policy on scenarios and write a JSON + CSV report.
    Run(RunArgs),
    /// Run a paired ablation and write side-by-side metrics.
    Ablate(AblateArgs),
    /// Record expert rollouts into a labelled dataset.
    Datagen(DatagenArgs),
    /// Raw vs filtered GNSS error on the urban track.
    UkfEval(UkfArgs),
    /// Write the built-in suites as scenario files.
    Fixtures(FixturesArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Seeds as a list ("0,1,2"), a half-open range ("0..5") or one value.
    #[arg(long, env = "DRIVEBENCH_SEED", default_value = "0")]
    seeds: String,
    #[arg(long, default_value_t = 1)]
    evals: u32,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Validation)]
    preset: Preset,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in suite name or scenario JSON file; repeatable.
    #[arg(long, required = true)]
    scenario: Vec<String>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Expert)]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value_t = ControllerArg::Weighted)]
    controller: ControllerArg,
    /// Put the stop-sign buffer in front of the controller.
    #[arg(long)]
    stop_buffer: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(value_enum)]
    which: AblationArg,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long, default_value = "expert")]
    scenario: Vec<String>,
    /// Frames kept per second of driving.
    #[arg(long, default_value_t = 4.0)]
    fps: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct UkfArgs {
    /// GNSS noise per axis (m).
    #[arg(long, default_value_t = DEFAULT_GNSS_SIGMA)]
    sigma: f64,
    /// Grid-search the noise model on separate tuning seeds first.
    #[arg(long)]
    tune: bool,
    #[arg(long, env = "DRIVEBENCH_SEED", default_value = "0..20")]
    seeds: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct FixturesArgs {
    #[arg(long, default_value = "scenarios")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Validation,
    /// Dense traffic: brake threshold 0.33.
    Dense,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Expert,
    ExpertPath,
    ExpertWaypoints,
    Tp,
    Nc,
    Uncertain,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Weighted,
    Argmax,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    Conditioning,
    ArgmaxVsWeighted,
    BrakeThreshold,
    StopBuffer,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Conditioning => Ablation::Conditioning,
            AblationArg::ArgmaxVsWeighted => Ablation::ArgmaxVsWeighted,
            AblationArg::BrakeThreshold => Ablation::BrakeThreshold,
            AblationArg::StopBuffer => Ablation::StopBuffer,
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        (a..b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<u64>().with_context(|| format!("bad seed '{x}'")))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        bail!("at least one seed is required");
    }
    Ok(seeds)
}

fn controller(preset: Preset) -> ControllerConfig<f64> {
    match preset {
        Preset::Validation => ControllerConfig::default(),
        Preset::Dense => ControllerConfig::dense(),
    }
}

fn load_scenarios(names: &[String]) -> Result<Vec<Arc<Prepared>>> {
    let mut scenarios: Vec<Scenario> = Vec::new();
    for n in names {
        match n.parse::<Suite>() {
            Ok(suite) => scenarios.extend(suite.scenarios()),
            Err(_) => scenarios.push(Scenario::load(Path::new(n))?),
        }
    }
    Ok(prepare(scenarios)?)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let seeds = parse_seeds(&a.common.seeds)?;
    let routes = load_scenarios(&a.scenario)?;
    let mut ctrl = controller(a.common.preset);
    ctrl.speed_mode = match a.controller {
        ControllerArg::Weighted => SpeedMode::Weighted,
        ControllerArg::Argmax => SpeedMode::Argmax,
    };
    let policy = match a.policy {
        PolicyArg::Expert => PolicyKind::Expert,
        PolicyArg::ExpertPath => PolicyKind::ExpertPlanner {
            representation: Representation::Path,
        },
        PolicyArg::ExpertWaypoints => PolicyKind::ExpertPlanner {
            representation: Representation::Waypoints,
        },
        PolicyArg::Tp => PolicyKind::Shortcut(ShortcutConfig::default()),
        PolicyArg::Nc => PolicyKind::Nc(NcConfig::default()),
        PolicyArg::Uncertain => PolicyKind::Uncertain(UncertainConfig::default()),
    };
    let spec = PilotSpec {
        controller: ctrl,
        stop_buffer: a.stop_buffer,
        ..PilotSpec::new(policy)
    };
    let cfg = EpisodeConfig::default();
    let results = pool(a.common.jobs)?.install(|| run_suite(&routes, &spec, &seeds, a.common.evals, &cfg));
    let report = aggregate(&results)?;
    report.write_files(&a.common.out, "report")?;
    let m = &report.mean;
    println!(
        "{} episodes: DS {:.2} RC {:.2} IS {:.3}  -> {}",
        results.len(),
        m.ds,
        m.rc,
        m.is_,
        a.common.out.join("report.csv").display()
    );
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let seeds = parse_seeds(&a.common.seeds)?;
    let which = Ablation::from(a.which);
    let cfg = EpisodeConfig::default();
    let ctrl = controller(a.common.preset);
    let variants = pool(a.common.jobs)?.install(|| run_ablation(which, ctrl, &seeds, a.common.evals, &cfg))?;
    std::fs::create_dir_all(&a.common.out)?;
    let table = comparison_csv(&variants)?;
    std::fs::write(a.common.out.join(format!("{which}.csv")), &table)?;
    std::fs::write(
        a.common.out.join(format!("{which}.json")),
        serde_json::to_string_pretty(&variants)?,
    )?;
    print!("{table}");
    Ok(())
}

fn cmd_datagen(a: DatagenArgs) -> Result<()> {
    let seeds = parse_seeds(&a.common.seeds)?;
    let routes = load_scenarios(&a.scenario)?;
    let cfg = DatagenConfig {
        fps_out: a.fps,
        ..Default::default()
    };
    let data = pool(a.common.jobs)?.install(|| generate(&routes, &seeds, &cfg));
    write_dataset(&a.common.out.join("dataset.jsonl"), &data.records)?;
    aggregate(&data.scorecards)?.write_files(&a.common.out, "scorecards")?;
    let kept = data.scorecards.iter().filter(|r| r.ds == 100.0).count();
    println!(
        "{} records from {}/{} episodes with DS 100",
        data.records.len(),
        kept,
        data.scorecards.len()
    );
    Ok(())
}

fn cmd_ukf(a: UkfArgs) -> Result<()> {
    let seeds = parse_seeds(&a.seeds)?;
    let params = if a.tune {
        let tracks: Vec<_> = (1000..1005).map(|s| urban_track(s, a.sigma)).collect();
        tune(&tracks, &TuneGrid::default(), a.sigma, 0.05, &drivebench::Params::car())?.params
    } else {
        UkfParams::diagonal(1e-3, 1e-3, 1e-2, a.sigma)
    };
    let report = evaluate(&seeds, a.sigma, &params)?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("ukf.json"), serde_json::to_string_pretty(&report)?)?;
    let mut w = csv::Writer::from_path(a.out.join("ukf.csv"))?;
    w.write_record(["seed", "raw", "filtered", "max_asymmetry", "min_eigenvalue"])?;
    for r in &report.seeds {
        w.write_record([
            r.seed.to_string(),
            r.raw.to_string(),
            r.filtered.to_string(),
            r.max_asymmetry.to_string(),
            r.min_eigenvalue.to_string(),
        ])?;
    }
    w.write_record([
        "mean".to_string(),
        report.mean_raw.to_string(),
        report.mean_filtered.to_string(),
        String::new(),
        String::new(),
    ])?;
    w.flush()?;
    println!("raw {:.3} m, filtered {:.3} m over {} seeds", report.mean_raw, report.mean_filtered, seeds.len());
    Ok(())
}

fn cmd_fixtures(a: FixturesArgs) -> Result<()> {
    for suite in Suite::ALL {
        let dir = a.out.join(suite.name());
        std::fs::create_dir_all(&dir)?;
        for s in suite.scenarios() {
            s.save(&dir.join(format!("{}.json", s.name)))?;
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Ablate(a) => cmd_ablate(a),
        Cmd::Datagen(a) => cmd_datagen(a),
        Cmd::UkfEval(a) => cmd_ukf(a),
        Cmd::Fixtures(a) => cmd_fixtures(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("0,2, 5").unwrap(), vec![0, 2, 5]);
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3]);
        assert!(parse_seeds("4..4").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn dense_preset_lowers_threshold() {
        assert_eq!(controller(Preset::Dense).brake_threshold, 0.33);
        assert_eq!(controller(Preset::Validation).brake_threshold, 0.5);
    }
}
