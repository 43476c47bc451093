//! Expert label generation, shift/rotation augmentation and the JSON-lines
//! dataset format.
//!
//! Records carry the vehicle state and labels only. Every clean frame gets an
//! augmented counterpart whose labels are re-expressed in a virtual frame
//! shifted sideways and rotated; the labels still describe the original
//! lane-center trajectory, not a recovery maneuver.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{PATH_COUNT, WAYPOINT_COUNT, WAYPOINT_SPACING_S};
use crate::episode::{run_episode, EpisodeConfig, Pilot, PilotStep};
use crate::expert::{Expert, ExpertConfig};
use crate::geometry::global_to_local;
use crate::metrics::EpisodeResult;
use crate::policies::{nav_command, route_path_points, target_point, NavCommand};
use crate::world::{Prepared, SimConfig, World};
use crate::{Point, Pose, State};


pub const SCHEMA_VERSION: u32 = 1;

/// Virtual camera perturbation applied to a frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    /// Lateral shift of the virtual frame, left positive (m).
    pub shift: f64,
    /// Rotation of the virtual frame, CCW positive (rad).
    pub rot: f64,
}

impl Augmentation {
    /// Virtual frame expressed in the original ego frame.
    pub fn frame(&self) -> Pose {
        Pose::new(0.0, self.shift, self.rot)
    }

    /// Original ego-frame point seen from the virtual frame.
    pub fn apply(&self, p: Point) -> Point {
        global_to_local(&self.frame(), p)
    }

    pub fn invert(&self, p: Point) -> Point {
        crate::geometry::local_to_global(&self.frame(), p)
    }
}

/// One training sample. Label points are in the ego frame, or in the virtual
/// frame described by `aug` when present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub route: String,
    pub seed: u64,
    pub time: f64,
    /// True vehicle state; augmentation does not move it.
    pub ego: State,
    pub tp: Point,
    pub command: NavCommand,
    pub waypoints: [Point; WAYPOINT_COUNT],
    pub path: [Point; PATH_COUNT],
    pub speed_class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aug: Option<Augmentation>,
    /// Reserved for sensor payloads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<serde_json::Value>,
}

impl FrameRecord {
    /// Every label point, TP first.
    pub fn label_points(&self) -> Vec<Point> {
        let mut v = vec![self.tp];
        v.extend_from_slice(&self.waypoints);
        v.extend_from_slice(&self.path);
        v
    }

    fn map_points(&self, f: impl Fn(Point) -> Point) -> FrameRecord {
        FrameRecord {
            tp: f(self.tp),
            waypoints: self.waypoints.map(&f),
            path: self.path.map(&f),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Shift is drawn from `[-shift_range, shift_range]` (m).
    pub shift_range: f64,
    /// Rotation is drawn from `[-rot_range, rot_range]` (rad).
    pub rot_range: f64,
    /// Probability of loading the augmented counterpart.
    pub load_probability: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            shift_range: 1.0,
            rot_range: 5f64.to_radians(),
            load_probability: 0.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("shard offset {offset} is not below factor {factor}")]
    BadShard { factor: usize, offset: usize },
    #[error("frame is already augmented")]
    AlreadyAugmented,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported dataset schema {0}")]
    Schema(u32),
}

/// Re-expresses every label of an unaugmented record in the perturbed frame.
pub fn augment_with(record: &FrameRecord, aug: Augmentation) -> Result<FrameRecord, DatagenError> {
    if record.aug.is_some() {
        return Err(DatagenError::AlreadyAugmented);
    }
    let mut out = record.map_points(|p| aug.apply(p));
    out.aug = Some(aug);
    Ok(out)
}

pub fn augment_frame<R: Rng>(record: &FrameRecord, cfg: &AugmentationConfig, rng: &mut R) -> Result<FrameRecord, DatagenError> {
    let shift = uniform(rng, cfg.shift_range);
    let rot = uniform(rng, cfg.rot_range);
    augment_with(record, Augmentation { shift, rot })
}

fn uniform<R: Rng>(rng: &mut R, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

/// Labels of an augmented record mapped back to the original ego frame.
pub fn deaugment(record: &FrameRecord) -> FrameRecord {
    match record.aug {
        Some(aug) => {
            let mut out = record.map_points(|p| aug.invert(p));
            out.aug = None;
            out
        }
        None => record.clone(),
    }
}

/// Picks the augmented variant with probability `p`.
pub fn select_frame<'a, R: Rng>(clean: &'a FrameRecord, augmented: &'a FrameRecord, p: f64, rng: &mut R) -> &'a FrameRecord {
    if rng.random::<f64>() < p {
        augmented
    } else {
        clean
    }
}

/// Expert rollout with its scorecard.
#[derive(Clone, Debug)]
pub struct RecordedEpisode {
    pub result: EpisodeResult,
    pub frames: Vec<FrameRecord>,
}

pub fn is_clean(result: &EpisodeResult) -> bool {
    result.ds == 100.0
}

/// Keeps only episodes with a perfect driving score.
pub fn filter_routes(episodes: Vec<RecordedEpisode>) -> Vec<RecordedEpisode> {
    episodes.into_iter().filter(|e| is_clean(&e.result)).collect()
}

/// Every `factor`-th item starting at `offset`.
pub fn shard_subsample<T: Clone>(items: &[T], factor: usize, offset: usize) -> Result<Vec<T>, DatagenError> {
    if offset >= factor {
        return Err(DatagenError::BadShard { factor, offset });
    }
    Ok(items.iter().skip(offset).step_by(factor).cloned().collect())
}

/// What the expert saw and decided before one tick.
struct Snapshot {
    time: f64,
    state: State,
    tp: Point,
    command: NavCommand,
    path: [Point; PATH_COUNT],
    class: usize,
}

struct Recorder {
    expert: Expert,
    snaps: Vec<Snapshot>,
}

impl Pilot for Recorder {
    fn drive(&mut self, world: &World) -> PilotStep {
        let (cmd, d) = self.expert.act(world);
        self.snaps.push(Snapshot {
            time: world.time,
            state: world.ego.state,
            tp: target_point(world),
            command: nav_command(world),
            path: route_path_points(world),
            class: d.speed_class_index,
        });
        PilotStep {
            cmd,
            class: Some(d.speed_class_index),
        }
    }
}

/// Drives the expert through one episode and keeps `fps_out` frames per
/// second. Waypoints are the realized future positions every 250 ms; past the
/// end of the episode they repeat the final position.
pub fn record_episode(data: &Arc<Prepared>, expert: ExpertConfig, sim: SimConfig, seed: u64, fps_out: f64) -> RecordedEpisode {
    let world = World::new(Arc::clone(data), sim);
    let dt = world.cfg.dt;
    let mut rec = Recorder {
        expert: Expert::new(expert),
        snaps: Vec::new(),
    };
    let cfg = EpisodeConfig {
        sim,
        record: true,
        ..Default::default()
    };
    let ep = run_episode(world, &mut rec, seed, 0, &cfg);
    // trace[i] is the state after i ticks
    let positions: Vec<Point> = ep.trace.iter().map(|f| f.state.position()).collect();
    let per_wp = (WAYPOINT_SPACING_S / dt).round() as usize;
    let every = ((1.0 / (fps_out * dt)).round() as usize).max(1);
    let frames = rec
        .snaps
        .iter()
        .enumerate()
        .step_by(every)
        .map(|(i, s)| FrameRecord {
            route: data.scenario.name.clone(),
            seed,
            time: s.time,
            ego: s.state,
            tp: s.tp,
            command: s.command,
            waypoints: std::array::from_fn(|k| {
                let j = (i + per_wp * (k + 1)).min(positions.len() - 1);
                global_to_local(&s.state.pose, positions[j])
            }),
            path: s.path,
            speed_class: s.class,
            aug: None,
            sensors: None,
        })
        .collect();
    RecordedEpisode {
        result: ep.result,
        frames,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatagenConfig {
    pub expert: ExpertConfig,
    pub sim: SimConfig,
    pub fps_out: f64,
    pub augmentation: AugmentationConfig,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            expert: ExpertConfig::default(),
            sim: SimConfig::default(),
            fps_out: 4.0,
            augmentation: AugmentationConfig::default(),
        }
    }
}

/// Clean frames of the kept episodes, each followed by its augmented
/// counterpart, plus the scorecards of every recorded episode.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub records: Vec<FrameRecord>,
    pub scorecards: Vec<EpisodeResult>,
}

/// Records every route for every seed, drops episodes below DS 100 and adds
/// augmented counterparts. Augmentation draws come from the policy stream of
/// each episode seed.
pub fn generate(routes: &[Arc<Prepared>], seeds: &[u64], cfg: &DatagenConfig) -> Dataset {
    use rayon::prelude::*;
    let jobs: Vec<(usize, u64)> = routes
        .iter()
        .enumerate()
        .flat_map(|(r, _)| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let episodes: Vec<RecordedEpisode> = jobs
        .par_iter()
        .map(|&(r, seed)| {
            let sim = SimConfig {
                rng_seed: crate::episode::episode_seed(seed, 0),
                ..cfg.sim
            };
            record_episode(&routes[r], cfg.expert, sim, seed, cfg.fps_out)
        })
        .collect();
    let scorecards = episodes.iter().map(|e| e.result.clone()).collect();
    let mut records = Vec::new();
    for ep in filter_routes(episodes) {
        let mut rng = crate::world::stream_rng(
            crate::episode::episode_seed(ep.result.seed, 0),
            crate::world::streams::POLICY,
        );
        for f in ep.frames {
            let aug = augment_frame(&f, &cfg.augmentation, &mut rng).expect("recorded frames are clean");
            records.push(f);
            records.push(aug);
        }
    }
    Dataset { records, scorecards }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: u32,
}

/// Writes a `{"schema":1}` header line followed by one record per line.
pub fn write_records<W: Write>(w: W, records: &[FrameRecord]) -> Result<(), DatagenError> {
    let mut w = BufWriter::new(w);
    let header = serde_json::to_string(&Header { schema: SCHEMA_VERSION }).expect("header serializes");
    writeln!(w, "{header}")?;
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_records`]. A completely empty input is an
/// empty dataset.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<FrameRecord>, DatagenError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let parse = |e: serde_json::Error| DatagenError::Parse {
            line: n,
            msg: e.to_string(),
        };
        if i == 0 {
            let h: Header = serde_json::from_str(&line).map_err(parse)?;
            if h.schema != SCHEMA_VERSION {
                return Err(DatagenError::Schema(h.schema));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(parse)?);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[FrameRecord]) -> Result<(), DatagenError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_records(std::fs::File::create(path)?, records)
}

pub fn read_dataset(path: &Path) -> Result<Vec<FrameRecord>, DatagenError> {
    read_records(BufReader::new(std::fs::File::open(path)?))
}
