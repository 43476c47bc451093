//! Batch runs over scenario suites and the paired ablation configurations.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerConfig, SpeedMode};
use crate::episode::{run, EpisodeConfig, PilotSpec, PolicyKind};
use crate::fixtures;
use crate::metrics::{aggregate, BenchmarkReport, EpisodeResult, MetricsError, CSV_COLUMNS};
use crate::policies::{NcConfig, ShortcutConfig, UncertainConfig};
use crate::world::{Prepared, Scenario, ScenarioError};

/// Built-in scenario suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Expert,
    Deviation,
    CornerFar,
    CornerNear,
    Uncertainty,
    Occlusion,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Expert,
        Suite::Deviation,
        Suite::CornerFar,
        Suite::CornerNear,
        Suite::Uncertainty,
        Suite::Occlusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Expert => "expert",
            Suite::Deviation => "deviation",
            Suite::CornerFar => "corner-far",
            Suite::CornerNear => "corner-near",
            Suite::Uncertainty => "uncertainty",
            Suite::Occlusion => "occlusion",
        }
    }

    pub fn scenarios(self) -> Vec<Scenario> {
        match self {
            Suite::Expert => fixtures::expert_suite(),
            Suite::Deviation => fixtures::deviation_suite(),
            Suite::CornerFar => vec![fixtures::corner(false)],
            Suite::CornerNear => vec![fixtures::corner(true)],
            Suite::Uncertainty => fixtures::uncertainty_suite(),
            Suite::Occlusion => fixtures::occlusion_suite(),
        }
    }

    pub fn prepared(self) -> Vec<Arc<Prepared>> {
        prepare(self.scenarios()).expect("built-in suites are valid")
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite '{s}'"))
    }
}

pub fn prepare(scenarios: Vec<Scenario>) -> Result<Vec<Arc<Prepared>>, ScenarioError> {
    scenarios.into_iter().map(Prepared::new).collect()
}

/// Runs every (route, seed, eval) episode. Episodes run in parallel on the
/// current rayon pool; results come back ordered by route, then seed, then
/// evaluation.
pub fn run_suite(routes: &[Arc<Prepared>], spec: &PilotSpec, seeds: &[u64], evals: u32, cfg: &EpisodeConfig) -> Vec<EpisodeResult> {
    let jobs: Vec<(usize, u64, u32)> = (0..routes.len())
        .flat_map(|r| seeds.iter().flat_map(move |&s| (0..evals).map(move |e| (r, s, e))))
        .collect();
    jobs.par_iter()
        .map(|&(r, seed, eval)| run(&routes[r], spec, seed, eval, cfg).result)
        .collect()
}

/// Paired comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Target points against navigation commands after a lateral push.
    Conditioning,
    /// Argmax against confidence-weighted speed on ambiguous events.
    ArgmaxVsWeighted,
    /// Weighted speed at each brake threshold.
    BrakeThreshold,
    /// Stop-sign buffer off and on under occlusion.
    StopBuffer,
}

pub const BRAKE_THRESHOLDS: [f64; 4] = [0.50, 0.40, 0.33, 0.25];

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Conditioning,
        Ablation::ArgmaxVsWeighted,
        Ablation::BrakeThreshold,
        Ablation::StopBuffer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Conditioning => "conditioning",
            Ablation::ArgmaxVsWeighted => "argmax-vs-weighted",
            Ablation::BrakeThreshold => "brake-threshold",
            Ablation::StopBuffer => "stop-buffer",
        }
    }

    pub fn suite(self) -> Suite {
        match self {
            Ablation::Conditioning => Suite::Deviation,
            Ablation::ArgmaxVsWeighted | Ablation::BrakeThreshold => Suite::Uncertainty,
            Ablation::StopBuffer => Suite::Occlusion,
        }
    }

    /// Labelled pilot configurations, built on `controller`.
    pub fn variants(self, controller: ControllerConfig<f64>) -> Vec<(String, PilotSpec)> {
        let with = |policy, controller| PilotSpec {
            controller,
            ..PilotSpec::new(policy)
        };
        let uncertain = PolicyKind::Uncertain(UncertainConfig::default());
        match self {
            Ablation::Conditioning => vec![
                ("tp".into(), with(PolicyKind::Shortcut(ShortcutConfig::default()), controller)),
                ("nc".into(), with(PolicyKind::Nc(NcConfig::default()), controller)),
            ],
            Ablation::ArgmaxVsWeighted => vec![
                (
                    "argmax".into(),
                    with(
                        uncertain,
                        ControllerConfig {
                            speed_mode: SpeedMode::Argmax,
                            ..controller
                        },
                    ),
                ),
                (
                    "weighted".into(),
                    with(
                        uncertain,
                        ControllerConfig {
                            speed_mode: SpeedMode::Weighted,
                            ..controller
                        },
                    ),
                ),
            ],
            Ablation::BrakeThreshold => BRAKE_THRESHOLDS
                .iter()
                .map(|&t| {
                    let c = ControllerConfig {
                        speed_mode: SpeedMode::Weighted,
                        brake_threshold: t,
                        ..controller
                    };
                    (format!("threshold {t:.2}"), with(uncertain, c))
                })
                .collect(),
            Ablation::StopBuffer => [false, true]
                .into_iter()
                .map(|on| {
                    let spec = PilotSpec {
                        stop_buffer: on,
                        ..with(uncertain, controller)
                    };
                    (format!("buffer {}", if on { "on" } else { "off" }), spec)
                })
                .collect(),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown ablation '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub spec: PilotSpec,
    pub report: BenchmarkReport,
}

/// Runs every variant of `which` on its suite.
pub fn run_ablation(
    which: Ablation,
    controller: ControllerConfig<f64>,
    seeds: &[u64],
    evals: u32,
    cfg: &EpisodeConfig,
) -> Result<Vec<Variant>, MetricsError> {
    let routes = which.suite().prepared();
    which
        .variants(controller)
        .into_iter()
        .map(|(label, spec)| {
            let report = aggregate(&run_suite(&routes, &spec, seeds, evals, cfg))?;
            Ok(Variant { label, spec, report })
        })
        .collect()
}

/// Side-by-side table: one mean row and one std row per variant.
pub fn comparison_csv(variants: &[Variant]) -> Result<String, csv::Error> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["variant", "row"];
    header.extend(CSV_COLUMNS);
    out.write_record(&header)?;
    for v in variants {
        for (row, m) in [("mean", &v.report.mean), ("std", &v.report.std)] {
            let mut rec = vec![v.label.clone(), row.to_string()];
            rec.extend(m.values().iter().map(|x| x.to_string()));
            out.write_record(&rec)?;
        }
    }
    let bytes = out.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn suite_results_are_ordered_and_counted() {
        let routes = prepare(vec![fixtures::straight(60.0), fixtures::straight(80.0)]).unwrap();
        let res = run_suite(&routes, &PilotSpec::expert(), &[0, 1, 2], 3, &EpisodeConfig::default());
        assert_eq!(res.len(), 18);
        let order: Vec<(u64, u32)> = res[..9].iter().map(|r| (r.seed, r.eval)).collect();
        let want: Vec<(u64, u32)> = (0..3).flat_map(|s| (0..3).map(move |e| (s, e))).collect();
        assert_eq!(order, want);
        assert!(res[9..].iter().all(|r| (r.km_driven - 0.08).abs() < 0.01));
    }

    #[test]
    fn brake_sweep_uses_the_fixed_grid() {
        let v = Ablation::BrakeThreshold.variants(ControllerConfig::default());
        let t: Vec<f64> = v.iter().map(|(_, s)| s.controller.brake_threshold).collect();
        assert_eq!(t, BRAKE_THRESHOLDS.to_vec());
    }

    #[test]
    fn comparison_table_layout() {
        let routes = prepare(vec![fixtures::straight(60.0)]).unwrap();
        let report = aggregate(&run_suite(&routes, &PilotSpec::expert(), &[0, 1], 1, &EpisodeConfig::default())).unwrap();
        let v = vec![Variant {
            label: "a".into(),
            spec: PilotSpec::expert(),
            report,
        }];
        let text = comparison_csv(&v).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("variant,row,DS,RC,IS"));
        assert!(lines[1].starts_with("a,mean,100,100,1"));
    }
}
