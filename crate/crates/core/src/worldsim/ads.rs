//! The driving stack under test and the seam between it and the simulator.

use serde::{Deserialize, Serialize};

use super::episode::SimConfig;
use super::map::TerrainModel;
use super::planner::Planner;
use super::vehicle::{Command, EgoState};
use super::{ScenarioConfig, WeatherParams};
use crate::lidar::PointCloud;
use crate::perception::{cluster, phantom_rng, road_water_false_positive, Detection, PerceptionConfig};
use crate::Result;

/// Everything the simulator hands to the stack for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame: u64,
    pub time: f64,
    /// Localisation is assumed perfect.
    pub ego: EgoState,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdsOutput {
    pub command: Command,
    pub detections: Vec<Detection>,
}

/// Produces the command for frame n from the frame-n observation. The
/// simulator applies it in the n → n+1 update.
pub trait Driver {
    fn drive(&mut self, obs: &Observation) -> Result<AdsOutput>;
}

/// Perception, the road-water model and the planner.
#[derive(Debug, Clone)]
pub struct AdsStack {
    planner: Planner,
    perception: PerceptionConfig,
    terrain: TerrainModel,
    weather: WeatherParams,
    seed: u64,
}

impl AdsStack {
    pub fn new(scenario: &ScenarioConfig, cfg: &SimConfig) -> Result<Self> {
        let map = scenario.map();
        let route = map.route(&scenario.ego.start, &scenario.ego.end)?;
        Ok(Self {
            planner: Planner::new(cfg.planner.clone(), route, scenario.ego.target_speed),
            perception: cfg.perception.clone(),
            terrain: map.terrain,
            weather: scenario.weather.clone(),
            seed: scenario.seed,
        })
    }

    /// One perception and planning cycle; `now` is the stack's own clock.
    pub fn process(&mut self, obs: &Observation, now: f64) -> AdsOutput {
        let mut detections = cluster(&obs.cloud, &self.perception, &self.terrain);
        let mut rng = phantom_rng(self.seed, obs.frame);
        if let Some(d) =
            road_water_false_positive(&self.weather, &obs.ego.pose(), &self.terrain, &self.perception, &mut rng)
        {
            detections.push(d);
        }
        let command = self.planner.plan(&obs.ego, &detections, now);
        AdsOutput { command, detections }
    }
}

/// Runs the stack in-process. Its clock reads (n + 1)·dt while handling
/// frame n, as it would after the grant that follows the frame-n data.
pub struct DirectDriver {
    pub stack: AdsStack,
    pub dt: f64,
}

impl Driver for DirectDriver {
    fn drive(&mut self, obs: &Observation) -> Result<AdsOutput> {
        let now = (obs.frame + 1) as f64 * self.dt;
        Ok(self.stack.process(obs, now))
    }
}
