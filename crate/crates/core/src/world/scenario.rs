use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::SPEED_CLASS_COUNT;
use crate::world::actors::{ActorKind, Gate};
use crate::world::signals::{StopSign, TrafficLight};
use crate::{Command, Point};

/// Either a fixed value or a closed range sampled uniformly per episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(f64),
    Range([f64; 2]),
}

impl Param {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Param::Fixed(v) => v,
            Param::Range([a, b]) if b > a => rng.random_range(a..=b),
            Param::Range([a, _]) => a,
        }
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Fixed(v)
    }
}

fn zero() -> Param {
    Param::Fixed(0.0)
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "params")]
pub enum TriggerAction {
    /// Pedestrian walking across the route `ahead` meters in front of the ego,
    /// from `lateral` (left positive) to the mirrored side.
    PedestrianCrossing {
        ahead: Param,
        lateral: Param,
        speed: Param,
        #[serde(default = "zero")]
        delay: Param,
    },
    /// Cyclist heading across the route. With `probability` it crosses
    /// completely, otherwise it stops at `yield_lateral`.
    CyclistCutIn {
        ahead: Param,
        lateral: Param,
        speed: Param,
        probability: f64,
        #[serde(default = "zero")]
        along: Param,
        yield_lateral: f64,
    },
    /// Vehicle driving toward the ego in the lane `offset` meters to the left.
    OpposingVehicle {
        ahead: Param,
        speed: Param,
        offset: f64,
    },
    /// Yellow phase of `light` starts `delay` seconds after firing.
    LightChange { light: usize, delay: Param },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrigger {
    /// Route arc length at which the trigger fires.
    pub s: f64,
    #[serde(flatten)]
    pub action: TriggerAction,
}

/// Instantaneous displacement of the ego once it passes `route_s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub route_s: f64,
    pub lateral_offset: f64,
    pub heading_error: f64,
    /// Half-width of a uniform jitter added to the lateral offset.
    #[serde(default)]
    pub lateral_jitter: f64,
}

/// Stretch of route where the future is ambiguous to a learned driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityWindow {
    pub s_start: f64,
    pub s_end: f64,
    /// The window closes after this long even if the ego is still inside (s).
    pub max_duration: f64,
    /// Mixing weight of the alternative distribution.
    pub weight: Param,
    /// Unnormalized class weights of the alternative.
    pub alternative: [f64; SPEED_CLASS_COUNT],
}

/// How well stop signs can be seen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionSpec {
    /// Signs closer than this to the ego center are not visible (m).
    pub occlusion: Param,
    /// Per-frame probability of detecting a visible sign.
    #[serde(default = "one")]
    pub detection_prob: f64,
}

impl Default for PerceptionSpec {
    fn default() -> Self {
        PerceptionSpec {
            occlusion: Param::Fixed(0.0),
            detection_prob: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    #[serde(default)]
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum BehaviorSpec {
    Static,
    Keyframes {
        keys: Vec<(f64, Command)>,
    },
    FollowPath {
        path: Vec<Point>,
        profile: Vec<(f64, f64)>,
        #[serde(default)]
        despawn_at_end: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub kind: ActorKind,
    pub start: StartState,
    pub behavior: BehaviorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<Gate>,
}

/// Route file: map, route, signals, scripted traffic and probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub lanes: Vec<Vec<Point>>,
    pub lane_width: f64,
    #[serde(default)]
    pub intersections: Vec<Vec<Point>>,
    /// Route path, already resampled at 1 m.
    pub route: Vec<Point>,
    pub target_points: Vec<Point>,
    #[serde(default)]
    pub triggers: Vec<ScenarioTrigger>,
    #[serde(default)]
    pub lights: Vec<TrafficLight>,
    #[serde(default)]
    pub signs: Vec<StopSign>,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default)]
    pub ambiguity: Vec<AmbiguityWindow>,
    #[serde(default)]
    pub perception: PerceptionSpec,
    #[serde(default)]
    pub ego_speed: f64,
    /// Episode time budget; derived from the route length when absent (s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        Self::parse(text, "<input>")
    }

    fn parse(text: &str, path: &str) -> Result<Scenario, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: name.clone(),
            source,
        })?;
        Self::parse(&text, &name)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigger_json_shape() {
        let t = ScenarioTrigger {
            s: 50.0,
            action: TriggerAction::LightChange {
                light: 0,
                delay: Param::Range([1.0, 2.0]),
            },
        };
        let v: serde_json::Value = serde_json::to_value(&t).unwrap();
        assert_eq!(v["s"], 50.0);
        assert_eq!(v["kind"], "light_change");
        assert_eq!(v["params"]["delay"], serde_json::json!([1.0, 2.0]));
        let back: ScenarioTrigger = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn parse_error_has_position() {
        let err = Scenario::from_json("{\n  \"lanes\": [,]\n}").unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }
}
