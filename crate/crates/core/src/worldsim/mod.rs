//! Kinematic closed-loop world: scenario description, actor motion, the
//! planner stub and the episode loop.

mod ads;
mod episode;
pub mod map;
mod planner;
mod vehicle;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scene::{Catalog, FogField};
use crate::{Error, Result};

pub use ads::{AdsOutput, AdsStack, DirectDriver, Driver, Observation};
pub use episode::{
    fog_noise_radius, run_direct, run_episode, write_trace, Episode, NpcPose, Outcome, RunStats, SimConfig, TraceFrame,
    D_MIN_SENTINEL, FOG_PROBE_RAYS,
};
pub use map::{Map, MapId, Route, TerrainModel};
pub use planner::{Planner, PlannerConfig};
pub use vehicle::{
    ego_footprint, step, Command, EgoState, Footprint, NpcPlan, NpcState, WorldState, EGO_LENGTH, EGO_WIDTH, HEADWAY,
    MIN_GAP, WHEELBASE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherParams {
    /// Meteorological optical range, metres; absent or null means clear.
    #[serde(
        default = "clear_mor",
        serialize_with = "ser_mor",
        deserialize_with = "de_mor"
    )]
    pub mor: f64,
    /// Degrees above the horizon; negative is night.
    pub sun_altitude: f64,
    /// Standing water on the road, 0 (dry) to 1 (flooded).
    pub road_water: f64,
}

fn clear_mor() -> f64 {
    f64::INFINITY
}

fn ser_mor<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_mor<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl WeatherParams {
    pub fn clear() -> Self {
        Self {
            mor: f64::INFINITY,
            sun_altitude: 45.0,
            road_water: 0.0,
        }
    }

    pub fn foggy(mor: f64) -> Self {
        Self {
            mor,
            ..Self::clear()
        }
    }

    pub fn is_clear(&self) -> bool {
        self.mor.is_infinite()
    }

    pub fn fog(&self) -> FogField {
        if self.is_clear() {
            FogField::clear()
        } else {
            FogField::from_mor(self.mor)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mor > 0.0) {
            return Err(Error::Scenario(format!("mor must be positive, got {}", self.mor)));
        }
        if !(-90.0..=90.0).contains(&self.sun_altitude) {
            return Err(Error::Scenario(format!(
                "sun_altitude {} outside [-90, 90]",
                self.sun_altitude
            )));
        }
        if !(0.0..=1.0).contains(&self.road_water) {
            return Err(Error::Scenario(format!("road_water {} outside [0, 1]", self.road_water)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSpec {
    pub start: String,
    pub end: String,
    pub target_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcSpec {
    pub model: String,
    pub speed: f64,
    pub start: String,
    pub end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub map_id: MapId,
    pub ego: EgoSpec,
    #[serde(default)]
    pub npcs: Vec<NpcSpec>,
    pub weather: WeatherParams,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn map(&self) -> &'static Map {
        self.map_id.map()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Checks every invariant, including that both routes exist and that no
    /// two actors spawn on top of each other.
    pub fn validate(&self) -> Result<()> {
        let map = self.map();
        let reject = |e: Error| Error::Scenario(e.to_string());
        if self.ego.start == self.ego.end {
            return Err(Error::Scenario("ego start and end coincide".into()));
        }
        if !(self.ego.target_speed > 0.0 && self.ego.target_speed.is_finite()) {
            return Err(Error::Scenario("ego target_speed must be positive".into()));
        }
        self.weather.validate()?;
        let ego_route = map.route(&self.ego.start, &self.ego.end).map_err(reject)?;
        let (ex, ey, eyaw) = ego_route.at(0.0);
        let mut spawned = vec![Footprint {
            x: ex,
            y: ey,
            yaw: eyaw,
            half_length: 0.5 * EGO_LENGTH,
            half_width: 0.5 * EGO_WIDTH,
        }];
        for (i, n) in self.npcs.iter().enumerate() {
            if !(n.speed >= 0.0 && n.speed.is_finite()) {
                return Err(Error::Scenario(format!("npc {i} speed must be non-negative")));
            }
            let spec = Catalog::builtin().model(&n.model).map_err(reject)?;
            let route = map.route(&n.start, &n.end).map_err(reject)?;
            let plan = NpcPlan {
                spec: spec.clone(),
                route,
            };
            let (x, y, yaw) = plan.route.at(0.0);
            let fp = Footprint {
                x,
                y,
                yaw,
                half_length: plan.half_length() + 0.5 * MIN_GAP,
                half_width: plan.half_width(),
            };
            if spawned.iter().any(|o| o.overlaps(&fp)) {
                return Err(Error::Scenario(format!("npc {i} spawns on top of another actor")));
            }
            spawned.push(fp);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> ScenarioConfig {
        ScenarioConfig {
            map_id: MapId::WallCorridor,
            ego: EgoSpec {
                start: "west.start".into(),
                end: "east.end".into(),
                target_speed: 10.0,
            },
            npcs: vec![NpcSpec {
                model: "sedan".into(),
                speed: 5.0,
                start: "west.mid".into(),
                end: "east.end".into(),
            }],
            weather: WeatherParams::foggy(30.0),
            seed: 7,
        }
    }

    #[test]
    fn json_roundtrip_and_clear_mor() {
        let s = sample();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), s);
        let mut c = s.clone();
        c.weather = WeatherParams::clear();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"mor\":null"));
        assert!(ScenarioConfig::from_json(&text).unwrap().weather.is_clear());
    }

    #[test]
    fn invariants_rejected() {
        let mut s = sample();
        s.ego.end = s.ego.start.clone();
        assert!(matches!(s.validate(), Err(Error::Scenario(_))));
        let mut s = sample();
        s.npcs[0].speed = -1.0;
        assert!(s.validate().is_err());
        let mut s = sample();
        s.npcs[0].start = "nowhere".into();
        assert!(s.validate().is_err());
        let mut s = sample();
        s.weather.mor = 0.0;
        assert!(s.validate().is_err());
        let mut s = sample();
        s.weather.sun_altitude = 95.0;
        assert!(s.validate().is_err());
        let mut s = sample();
        s.npcs[0].start = "west.start".into();
        assert!(s.validate().is_err(), "spawn overlap");
        let mut s = sample();
        s.npcs[0].model = "zeppelin".into();
        assert!(s.validate().is_err());
    }
}
