//! Recorded GNSS tracks: synthesis, JSON-lines storage and noise tuning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{covariance_health, run_filter, UkfError, UkfParams};
use crate::controllers::{LongitudinalController, PidGains};
use crate::dynamics::step_bicycle;
use crate::world::{gnss_sample, stream_rng, streams};
use crate::{Command, Params, Point, State};

/// One sample of a track. `cmd` is the command applied during the step that
/// ended at `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub t: f64,
    pub cmd: Command,
    pub gnss: Point,
    pub truth: State,
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

/// Piecewise program of `(end time, target speed, steer)`.
const URBAN_PROGRAM: [(f64, f64, f64); 12] = [
    (8.0, 8.0, 0.0),
    (11.0, 5.0, 0.0),
    (13.6, 5.0, 0.25),
    (24.0, 8.0, 0.0),
    (28.0, 0.0, 0.0),
    (32.0, 0.0, 0.0),
    (40.0, 8.0, 0.0),
    (43.0, 5.0, 0.0),
    (45.6, 5.0, -0.25),
    (49.0, 8.0, 0.05),
    (54.0, 8.0, -0.05),
    (60.0, 0.0, 0.0),
];

/// Commands for a 60 s stop-and-go drive with two turns, starting at rest.
pub fn urban_commands(dt: f64, vehicle: &Params) -> Vec<Command> {
    let steps = (60.0 / dt).round() as usize;
    let mut lon = LongitudinalController::new(PidGains::longitudinal(), 0.3);
    let mut state = State::default();
    let mut cmds = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let &(_, target, steer) = URBAN_PROGRAM
            .iter()
            .find(|p| t < p.0)
            .unwrap_or(&URBAN_PROGRAM[URBAN_PROGRAM.len() - 1]);
        let (throttle, brake) = lon.command(target, state.speed, dt);
        let cmd = Command::new(steer, throttle, brake);
        state = step_bicycle(&state, &cmd, vehicle, dt);
        cmds.push(cmd);
    }
    cmds
}

/// Drives `cmds` from `start` and samples GNSS with per-axis std `sigma`.
pub fn synthesize_track<R: Rng>(
    start: &State,
    cmds: &[Command],
    vehicle: &Params,
    dt: f64,
    sigma: f64,
    rng: &mut R,
) -> Vec<TrackRecord> {
    let mut truth = *start;
    let mut out = Vec::with_capacity(cmds.len() + 1);
    out.push(TrackRecord {
        t: 0.0,
        cmd: Command::coast(),
        gnss: gnss_sample(truth.position(), sigma, rng),
        truth,
    });
    for (k, cmd) in cmds.iter().enumerate() {
        truth = step_bicycle(&truth, cmd, vehicle, dt);
        out.push(TrackRecord {
            t: (k + 1) as f64 * dt,
            cmd: *cmd,
            gnss: gnss_sample(truth.position(), sigma, rng),
            truth,
        });
    }
    out
}

pub fn write_track(path: &Path, track: &[TrackRecord]) -> Result<(), TrackError> {
    let io = |source| TrackError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for rec in track {
        let line = serde_json::to_string(rec).expect("track records serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_track(path: &Path) -> Result<Vec<TrackRecord>, TrackError> {
    let name = path.display().to_string();
    let io = |source| TrackError::Io {
        path: name.clone(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| TrackError::Parse {
            path: name.clone(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Candidate per-step process noise standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub q_pos: Vec<f64>,
    pub q_yaw: Vec<f64>,
    pub q_speed: Vec<f64>,
    /// Multipliers on the nominal GNSS sigma.
    pub r_scale: Vec<f64>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            q_pos: vec![1e-4, 1e-3, 1e-2],
            q_yaw: vec![1e-4, 1e-3, 1e-2],
            q_speed: vec![1e-3, 1e-2, 5e-2],
            r_scale: vec![1.0, 1.5, 2.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub params: UkfParams,
    pub mean_error: f64,
}

/// Grid search minimising the mean filtered error over `tracks`.
/// Ties keep the earliest grid point.
pub fn tune(
    tracks: &[Vec<TrackRecord>],
    grid: &TuneGrid,
    sigma: f64,
    dt: f64,
    vehicle: &Params,
) -> Result<TuneResult, UkfError> {
    let mut best: Option<TuneResult> = None;
    for &qp in &grid.q_pos {
        for &qy in &grid.q_yaw {
            for &qs in &grid.q_speed {
                for &rs in &grid.r_scale {
                    let params = UkfParams::diagonal(qp, qy, qs, sigma * rs);
                    let mut total = 0.0;
                    for track in tracks {
                        total += run_filter(track, dt, vehicle, &params)?.mean_error;
                    }
                    let mean_error = total / tracks.len().max(1) as f64;
                    if best.is_none_or(|b| mean_error < b.mean_error) {
                        best = Some(TuneResult { params, mean_error });
                    }
                }
            }
        }
    }
    Ok(best.unwrap_or(TuneResult {
        params: UkfParams::default(),
        mean_error: f64::NAN,
    }))
}

/// The 60 s urban track at 20 Hz with GNSS noise from the seed's GNSS stream.
pub fn urban_track(seed: u64, sigma: f64) -> Vec<TrackRecord> {
    let vehicle = Params::car();
    let dt = 0.05;
    let cmds = urban_commands(dt, &vehicle);
    let mut rng = stream_rng(seed, streams::GNSS);
    synthesize_track(&State::default(), &cmds, &vehicle, dt, sigma, &mut rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedErrors {
    pub seed: u64,
    pub raw: f64,
    pub filtered: f64,
    /// Largest covariance asymmetry seen on any step.
    pub max_asymmetry: f64,
    /// Smallest covariance eigenvalue seen on any step.
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub sigma: f64,
    pub params: UkfParams,
    pub seeds: Vec<SeedErrors>,
    pub mean_raw: f64,
    pub mean_filtered: f64,
}

/// Raw and filtered position errors on the urban track for each seed.
pub fn evaluate(seeds: &[u64], sigma: f64, params: &UkfParams) -> Result<ErrorReport, UkfError> {
    let vehicle = Params::car();
    let rows = seeds
        .iter()
        .map(|&seed| {
            let track = urban_track(seed, sigma);
            let run = run_filter(&track, 0.05, &vehicle, params)?;
            let (mut asym, mut eig) = (0.0f64, f64::INFINITY);
            for e in &run.estimates {
                let (a, m) = covariance_health(&e.cov);
                asym = asym.max(a);
                eig = eig.min(m);
            }
            Ok(SeedErrors {
                seed,
                raw: run.raw_error,
                filtered: run.mean_error,
                max_asymmetry: asym,
                min_eigenvalue: eig,
            })
        })
        .collect::<Result<Vec<_>, UkfError>>()?;
    let n = rows.len().max(1) as f64;
    Ok(ErrorReport {
        sigma,
        params: *params,
        mean_raw: rows.iter().map(|r| r.raw).sum::<f64>() / n,
        mean_filtered: rows.iter().map(|r| r.filtered).sum::<f64>() / n,
        seeds: rows,
    })
}
