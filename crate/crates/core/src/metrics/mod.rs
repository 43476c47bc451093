//! Infraction detection, route scorecards and multi-seed aggregation.
//!
//! An episode scores route completion (RC, percent), an infraction score (IS)
//! that starts at 1 and is multiplied by a penalty factor per infraction, and
//! the driving score DS = RC · IS. Infractions are also reported per
//! kilometer of route driven.

mod report;


use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{ActorKind, Phase, RawEvent, TimedEvent};

pub use report::{aggregate, seed_std, BenchmarkReport, MetricRow, ReportError, CSV_COLUMNS, STD_CONVENTION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    CollisionPedestrian,
    CollisionVehicle,
    CollisionStatic,
    RedLight,
    StopSign,
    RouteDeviation,
    Timeout,
    Blocked,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 8] = [
        InfractionKind::CollisionPedestrian,
        InfractionKind::CollisionVehicle,
        InfractionKind::CollisionStatic,
        InfractionKind::RedLight,
        InfractionKind::StopSign,
        InfractionKind::RouteDeviation,
        InfractionKind::Timeout,
        InfractionKind::Blocked,
    ];

    /// Report column name.
    pub fn column(self) -> &'static str {
        match self {
            InfractionKind::CollisionPedestrian => "Ped",
            InfractionKind::CollisionVehicle => "Veh",
            InfractionKind::CollisionStatic => "Stat",
            InfractionKind::RedLight => "Red",
            InfractionKind::StopSign => "Stop",
            InfractionKind::RouteDeviation => "Dev",
            InfractionKind::Timeout => "TO",
            InfractionKind::Blocked => "Block",
        }
    }

    /// Terminal infractions end the episode and do not enter the IS product.
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            InfractionKind::RouteDeviation | InfractionKind::Timeout | InfractionKind::Blocked
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfractionEvent {
    pub kind: InfractionKind,
    pub route_s: f64,
    pub time: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no distance driven")]
    NoDistance,
    #[error("penalty factor for {0:?} must lie in (0, 1], got {1}")]
    BadFactor(InfractionKind, f64),
    #[error("no results to aggregate")]
    Empty,
}

/// Multiplicative IS penalty per non-terminal infraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTable {
    pub pedestrian: f64,
    pub vehicle: f64,
    pub static_: f64,
    pub red_light: f64,
    pub stop_sign: f64,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        PenaltyTable {
            pedestrian: 0.50,
            vehicle: 0.60,
            static_: 0.65,
            red_light: 0.70,
            stop_sign: 0.80,
        }
    }
}

impl PenaltyTable {
    pub fn factor(&self, kind: InfractionKind) -> f64 {
        match kind {
            InfractionKind::CollisionPedestrian => self.pedestrian,
            InfractionKind::CollisionVehicle => self.vehicle,
            InfractionKind::CollisionStatic => self.static_,
            InfractionKind::RedLight => self.red_light,
            InfractionKind::StopSign => self.stop_sign,
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for kind in InfractionKind::ALL {
            let f = self.factor(kind);
            if !(f > 0.0 && f <= 1.0) {
                return Err(MetricsError::BadFactor(kind, f));
            }
        }
        Ok(())
    }
}

/// Per-tick ego record used by the detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub time: f64,
    pub route_s: f64,
    /// Distance to the route path, positive to the left (m).
    pub lateral: f64,
    pub speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Lateral distance from the route that counts as deviating (m).
    pub deviation_distance: f64,
    /// Continuous standstill that counts as blocked (s).
    pub blocked_time: f64,
    pub blocked_speed: f64,
    /// A stop sign is obeyed when the speed on its area drops below this (m/s).
    pub stop_speed: f64,
    /// Episode time budget (s).
    pub time_limit: f64,
}

impl DetectorConfig {
    pub fn new(time_limit: f64) -> Self {
        DetectorConfig {
            deviation_distance: 30.0,
            blocked_time: 90.0,
            blocked_speed: 0.1,
            stop_speed: 0.1,
            time_limit,
        }
    }
}

/// Online infraction detector; feed it one tick at a time.
#[derive(Clone, Debug)]
pub struct InfractionDetector {
    pub cfg: DetectorConfig,
    events: Vec<InfractionEvent>,
    still_since: Option<f64>,
    terminal: Option<InfractionKind>,
}

impl InfractionDetector {
    pub fn new(cfg: DetectorConfig) -> Self {
        InfractionDetector {
            cfg,
            events: Vec::new(),
            still_since: None,
            terminal: None,
        }
    }

    fn push(&mut self, kind: InfractionKind, sample: &TickSample) {
        if self.terminal.is_some() {
            return;
        }
        self.events.push(InfractionEvent {
            kind,
            route_s: sample.route_s,
            time: sample.time,
        });
        if kind.is_terminal() {
            self.terminal = Some(kind);
        }
    }

    /// Processes the events raised during one tick followed by the state at its
    /// end. Returns the terminal infraction once one occurred.
    pub fn observe(&mut self, sample: &TickSample, raw: &[TimedEvent]) -> Option<InfractionKind> {
        for e in raw {
            let kind = match &e.event {
                RawEvent::Collision { kind, .. } => Some(match kind {
                    ActorKind::Pedestrian => InfractionKind::CollisionPedestrian,
                    ActorKind::Vehicle | ActorKind::Cyclist => InfractionKind::CollisionVehicle,
                }),
                RawEvent::Offroad => Some(InfractionKind::CollisionStatic),
                RawEvent::StopLineCrossed { phase: Phase::Red, .. } => Some(InfractionKind::RedLight),
                RawEvent::StopSignPassed { min_speed, .. } if *min_speed >= self.cfg.stop_speed => {
                    Some(InfractionKind::StopSign)
                }
                _ => None,
            };
            if let Some(k) = kind {
                self.push(k, sample);
            }
        }
        if sample.lateral.abs() > self.cfg.deviation_distance {
            self.push(InfractionKind::RouteDeviation, sample);
        }
        if sample.speed < self.cfg.blocked_speed {
            let t0 = *self.still_since.get_or_insert(sample.time);
            if sample.time - t0 >= self.cfg.blocked_time - 1e-9 {
                self.push(InfractionKind::Blocked, sample);
            }
        } else {
            self.still_since = None;
        }
        if sample.time > self.cfg.time_limit + 1e-9 {
            self.push(InfractionKind::Timeout, sample);
        }
        self.terminal
    }

    pub fn terminal(&self) -> Option<InfractionKind> {
        self.terminal
    }

    pub fn events(&self) -> &[InfractionEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<InfractionEvent> {
        self.events
    }
}

/// Replays a stored tick history. `raw` events are matched to samples by time.
pub fn detect_infractions(raw: &[TimedEvent], history: &[TickSample], cfg: DetectorConfig) -> Vec<InfractionEvent> {
    let mut det = InfractionDetector::new(cfg);
    let mut next = 0;
    for sample in history {
        let start = next;
        while next < raw.len() && raw[next].time <= sample.time + 1e-9 {
            next += 1;
        }
        if det.observe(sample, &raw[start..next]).is_some() {
            break;
        }
    }
    det.into_events()
}

/// Product of the penalty factors of all non-terminal events.
pub fn infraction_score(events: &[InfractionEvent], penalties: &PenaltyTable) -> f64 {
    events
        .iter()
        .filter(|e| !e.kind.is_terminal())
        .map(|e| penalties.factor(e.kind))
        .product()
}

/// DS in percent from RC (percent) and IS.
pub fn driving_score(rc: f64, is_: f64) -> f64 {
    rc * is_
}

pub fn infraction_counts(events: &[InfractionEvent]) -> [u32; 8] {
    let mut c = [0; 8];
    for e in events {
        c[e.kind.index()] += 1;
    }
    c
}

/// Infractions per kilometer for every kind.
pub fn per_km_rates(events: &[InfractionEvent], km_driven: f64) -> Result<BTreeMap<InfractionKind, f64>, MetricsError> {
    if !(km_driven > 0.0) {
        return Err(MetricsError::NoDistance);
    }
    let counts = infraction_counts(events);
    Ok(InfractionKind::ALL
        .iter()
        .map(|&k| (k, counts[k.index()] as f64 / km_driven))
        .collect())
}

/// Scorecard of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub route: String,
    pub seed: u64,
    pub eval: u32,
    pub rc: f64,
    pub is_: f64,
    pub ds: f64,
    pub events: Vec<InfractionEvent>,
    pub km_driven: f64,
    /// Empty when no distance was driven.
    pub per_km: BTreeMap<InfractionKind, f64>,
    pub duration: f64,
}

impl EpisodeResult {
    pub fn new(
        route: &str,
        seed: u64,
        eval: u32,
        rc: f64,
        events: Vec<InfractionEvent>,
        km_driven: f64,
        duration: f64,
        penalties: &PenaltyTable,
    ) -> Self {
        let rc = rc.clamp(0.0, 100.0);
        let is_ = infraction_score(&events, penalties);
        EpisodeResult {
            route: route.to_string(),
            seed,
            eval,
            rc,
            is_,
            ds: driving_score(rc, is_),
            per_km: per_km_rates(&events, km_driven).unwrap_or_default(),
            events,
            km_driven,
            duration,
        }
    }

    pub fn counts(&self) -> [u32; 8] {
        infraction_counts(&self.events)
    }

    pub fn count(&self, kind: InfractionKind) -> u32 {
        self.counts()[kind.index()]
    }
}
