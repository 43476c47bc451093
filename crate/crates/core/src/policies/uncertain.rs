use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::SpeedDistribution;
use crate::expert::{Expert, ExpertConfig};
use crate::world::{stream_rng, streams, World};
use crate::Box2;

use super::{emit, route_path_points, Policy, PolicyStep, Representation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertainConfig {
    /// Inside an ambiguity window the primary mode lags the expert by this
    /// long (s).
    pub reaction_lag: f64,
    /// Perceive stop signs with occlusion and missed detections instead of
    /// privileged knowledge.
    pub perception: bool,
    pub representation: Representation,
}

impl Default for UncertainConfig {
    fn default() -> Self {
        UncertainConfig {
            reaction_lag: 0.6,
            perception: true,
            representation: Representation::Path,
        }
    }
}

/// Surrogate with a multi-modal speed head.
///
/// Outside ambiguity windows it reproduces the expert's class one-hot. Inside
/// a window the distribution mixes the (lagged) expert class with the window's
/// alternative using the window weight.
#[derive(Clone, Debug)]
pub struct UncertainSpeedPolicy {
    pub cfg: UncertainConfig,
    expert: Expert,
    classes: VecDeque<usize>,
    entered: Vec<Option<f64>>,
    rng: ChaCha8Rng,
}

impl UncertainSpeedPolicy {
    pub fn new(cfg: UncertainConfig, expert: ExpertConfig, seed: u64) -> Self {
        UncertainSpeedPolicy {
            cfg,
            expert: Expert::new(expert),
            classes: VecDeque::new(),
            entered: Vec::new(),
            rng: stream_rng(seed, streams::PERCEPTION),
        }
    }

    /// Which stop signs are seen this step.
    pub fn visible_signs(&mut self, world: &World) -> Vec<bool> {
        let p = world.ego.state.position();
        let r = &world.resolved;
        world
            .signs()
            .iter()
            .map(|s| {
                let detected = self.rng.random::<f64>() < r.detection_prob;
                detected && s.trigger_area.center.distance(p) > r.occlusion
            })
            .collect()
    }

    /// Index of the ambiguity window active at the current state.
    pub fn active_window(&mut self, world: &World) -> Option<usize> {
        let windows = &world.resolved.windows;
        self.entered.resize(windows.len(), None);
        let s = world.progress.s;
        let mut active = None;
        for (i, w) in windows.iter().enumerate() {
            if s < w.s_start || s > w.s_end {
                continue;
            }
            let t0 = *self.entered[i].get_or_insert(world.time);
            if active.is_none() && world.time - t0 <= w.max_duration {
                active = Some(i);
            }
        }
        active
    }

    /// Mixture for expert class `current` given the window state.
    pub fn distribution(&mut self, world: &World, current: usize) -> SpeedDistribution<f64> {
        let lag = (self.cfg.reaction_lag / world.cfg.dt).round() as usize;
        self.classes.push_back(current);
        while self.classes.len() > lag + 1 {
            self.classes.pop_front();
        }
        match self.active_window(world) {
            Some(i) => {
                let w = &world.resolved.windows[i];
                let stale = self.classes.front().copied().unwrap_or(current);
                let base = SpeedDistribution::one_hot(stale);
                match SpeedDistribution::new(w.alternative) {
                    Some(alt) => base.mix(&alt, w.weight),
                    None => base,
                }
            }
            None => SpeedDistribution::one_hot(current),
        }
    }
}

impl Policy for UncertainSpeedPolicy {
    fn act(&mut self, world: &World) -> PolicyStep {
        let visible = if self.cfg.perception {
            self.visible_signs(world)
        } else {
            vec![true; world.signs().len()]
        };
        let decision = self.expert.decide(world, Some(&visible));
        let dist = self.distribution(world, decision.speed_class_index);
        let pose = world.ego.state.pose;
        let signs: Vec<Box2> = world
            .signs()
            .iter()
            .zip(&visible)
            .filter(|(_, v)| **v)
            .map(|(s, _)| s.trigger_area.to_local(&pose))
            .collect();
        PolicyStep {
            output: emit(self.cfg.representation, route_path_points(world), dist),
            signs,
        }
    }
}
