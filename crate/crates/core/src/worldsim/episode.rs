//! The closed loop: scan, detect, plan, step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ads::{AdsStack, DirectDriver, Driver, Observation};
use super::map::{Map, Route};
use super::planner::PlannerConfig;
use super::vehicle::{ego_footprint, place_npc, step, Command, EgoState, NpcPlan, NpcState, WorldState, WHEELBASE};
use super::ScenarioConfig;
use crate::lidar::{Lidar, LidarConfig};
use crate::perception::{score, PerceptionConfig, Terrain};
use crate::scene::{Catalog, Pose3, Scene};
use crate::{Error, Result, Vec3};

/// Stand-in for the minimum distance when no NPC ever exists.
pub const D_MIN_SENTINEL: f64 = 1e4;
pub const FOG_PROBE_RAYS: usize = 36;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub max_frames: u64,
    /// Seconds without `stuck_progress` metres of route progress.
    pub stuck_timeout: f64,
    pub stuck_progress: f64,
    /// Largest tolerated distance from the route, metres.
    pub route_tolerance: f64,
    /// Route counts as complete this close to its end.
    pub arrive_margin: f64,
    pub lidar: LidarConfig,
    pub perception: PerceptionConfig,
    pub planner: PlannerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_frames: 2000,
            stuck_timeout: 15.0,
            stuck_progress: 1.0,
            route_tolerance: 2.0,
            arrive_margin: 1.0,
            lidar: LidarConfig::default(),
            perception: PerceptionConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.max_frames == 0 {
            return Err(Error::config("dt and max_frames must be positive"));
        }
        if !(self.stuck_timeout > 0.0) || !(self.route_tolerance > 0.0) {
            return Err(Error::config("stuck_timeout and route_tolerance must be positive"));
        }
        self.lidar.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    Collided,
    Stuck,
    RouteViolation,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpcPose {
    pub actor_id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub speed: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub frame: u64,
    pub t: f64,
    pub ego: EgoState,
    pub npcs: Vec<NpcPose>,
    /// Issued from this frame's observation.
    pub command: Command,
    /// Used in the update that produced this frame.
    pub applied: Command,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub in_fog_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n_fp: usize,
    pub n_fn: usize,
    pub n_fog: usize,
    pub n_frame: usize,
    pub d_min: f64,
    pub collided: bool,
    pub stuck: bool,
    pub route_violation: bool,
    pub outcome: Outcome,
    pub trace: Vec<TraceFrame>,
}

impl RunStats {
    pub fn is_corner_case(&self) -> bool {
        self.collided || self.stuck || self.route_violation
    }
}

pub fn write_trace<W: Write>(stats: &RunStats, mut w: W) -> Result<()> {
    for f in &stats.trace {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Radius of the fog-noise shell: the 90th percentile (nearest rank) of the
/// waveform peak distances of fog-won echoes on horizontal probe beams, or 0
/// when no probe returns fog.
pub fn fog_noise_radius(scene: &Scene, lidar: &Lidar, sensor: &Pose3) -> f64 {
    if scene.fog.is_clear() {
        return 0.0;
    }
    let mut ranges: Vec<f64> = (0..FOG_PROBE_RAYS)
        .filter_map(|k| {
            let az = (k as f64 * 360.0 / FOG_PROBE_RAYS as f64).to_radians();
            let dir = sensor.dir_to_world(&Vec3::new(az.cos(), az.sin(), 0.0)).normalize();
            lidar.trace(scene, &sensor.position, &dir)
        })
        .filter(|e| e.fog)
        .map(|e| e.peak_range)
        .collect();
    if ranges.is_empty() {
        return 0.0;
    }
    ranges.sort_by(f64::total_cmp);
    let rank = (0.9 * ranges.len() as f64).ceil() as usize;
    ranges[rank.max(1) - 1]
}

/// World, sensor and bookkeeping for one scenario.
pub struct Episode {
    pub cfg: SimConfig,
    pub map: &'static Map,
    pub plans: Vec<NpcPlan>,
    pub route: Route,
    pub lidar: Lidar,
    pub state: WorldState,
    fog: crate::scene::FogField,
}

impl Episode {
    pub fn new(scenario: &ScenarioConfig, cfg: &SimConfig) -> Result<Self> {
        scenario.validate()?;
        cfg.validate()?;
        let map = scenario.map();
        let route = map.route(&scenario.ego.start, &scenario.ego.end)?;
        let (x, y, yaw) = route.at(0.0);
        let ego = EgoState {
            x,
            y,
            z: map.terrain.ground_z(x, y),
            yaw,
            pitch: map.pitch_at(x, y, yaw, WHEELBASE),
            speed: 0.0,
        };
        let mut plans = Vec::new();
        let mut npcs = Vec::new();
        for (i, n) in scenario.npcs.iter().enumerate() {
            let plan = NpcPlan {
                spec: Catalog::builtin().model(&n.model)?.clone(),
                route: map.route(&n.start, &n.end)?,
            };
            let mut st = NpcState {
                actor_id: i as u32 + 1,
                model: n.model.clone(),
                s: 0.0,
                speed: n.speed,
                desired_speed: n.speed,
                active: true,
                x: 0.0,
                y: 0.0,
                z: 0.0,
                yaw: 0.0,
            };
            place_npc(&mut st, &plan, map);
            plans.push(plan);
            npcs.push(st);
        }
        Ok(Self {
            cfg: cfg.clone(),
            map,
            plans,
            route,
            lidar: Lidar::new(cfg.lidar.clone())?,
            state: WorldState {
                frame: 0,
                time: 0.0,
                ego,
                npcs,
            },
            fog: scenario.weather.fog(),
        })
    }

    pub fn scene(&self) -> Result<Scene> {
        let mut prims = self.map.statics.clone();
        for (n, plan) in self.state.npcs.iter().zip(&self.plans) {
            if n.active {
                prims.push(plan.primitive(n)?);
            }
        }
        Scene::new(prims, self.fog.clone(), self.map.bounds)
    }

    pub fn sensor_pose(&self) -> Pose3 {
        self.lidar.sensor_pose(&self.state.ego.pose())
    }

    pub fn observe(&self, scene: &Scene) -> Observation {
        let sensor = self.sensor_pose();
        Observation {
            frame: self.state.frame,
            time: self.state.time,
            ego: self.state.ego,
            cloud: self.lidar.scan(scene, &sensor, self.state.frame),
        }
    }

    pub fn advance(&mut self, cmd: Command) {
        self.state = step(&self.state, self.map, &self.plans, cmd, self.cfg.dt);
    }
}

/// Runs a scenario to completion against `driver`.
pub fn run_episode(scenario: &ScenarioConfig, cfg: &SimConfig, driver: &mut dyn Driver) -> Result<RunStats> {
    let mut ep = Episode::new(scenario, cfg)?;
    let mut stats = RunStats {
        n_fp: 0,
        n_fn: 0,
        n_fog: 0,
        n_frame: 0,
        d_min: D_MIN_SENTINEL,
        collided: false,
        stuck: false,
        route_violation: false,
        outcome: Outcome::Timeout,
        trace: Vec::new(),
    };
    let route_len = ep.route.length();
    let mut progress = 0.0;
    let mut checkpoint = (0.0, 0.0);
    let mut applied = Command::default();

    for _ in 0..cfg.max_frames {
        let scene = ep.scene()?;
        let obs = ep.observe(&scene);
        let out = driver.drive(&obs)?;
        let st = &ep.state;
        let sensor = obs.cloud.sensor_pose;

        let active: Vec<(&NpcState, &NpcPlan)> = st.npcs.iter().zip(&ep.plans).filter(|(n, _)| n.active).collect();
        let truth: Vec<_> = active.iter().map(|(n, p)| p.truth(n)).collect();
        let sc = score(&out.detections, &truth, &sensor.position, &cfg.perception);
        stats.n_fp += sc.false_positives;
        stats.n_fn += sc.false_negatives;

        let radius = fog_noise_radius(&scene, &ep.lidar, &sensor);
        let ego = &st.ego;
        let dist = |n: &NpcState| (n.x - ego.x).hypot(n.y - ego.y);
        let in_fog = active.iter().any(|(n, _)| dist(n) < radius);
        if in_fog {
            stats.n_fog += 1;
        }
        for (n, _) in &active {
            stats.d_min = stats.d_min.min(dist(n));
        }

        let efp = ego_footprint(ego);
        let collided = active.iter().any(|(n, p)| efp.overlaps(&p.footprint(n)));
        let (s, lateral) = ep.route.project_window(ego.x, ego.y, progress - 5.0, progress + 20.0);
        progress = s;
        if s - checkpoint.1 >= cfg.stuck_progress {
            checkpoint = (st.time, s);
        }
        let outcome = if collided {
            Some(Outcome::Collided)
        } else if lateral > cfg.route_tolerance {
            Some(Outcome::RouteViolation)
        } else if s >= route_len - cfg.arrive_margin {
            Some(Outcome::Reached)
        } else if st.time - checkpoint.0 >= cfg.stuck_timeout {
            Some(Outcome::Stuck)
        } else {
            None
        };

        stats.trace.push(TraceFrame {
            frame: st.frame,
            t: st.time,
            ego: *ego,
            npcs: st
                .npcs
                .iter()
                .map(|n| NpcPose {
                    actor_id: n.actor_id,
                    x: n.x,
                    y: n.y,
                    z: n.z,
                    yaw: n.yaw,
                    speed: n.speed,
                    active: n.active,
                })
                .collect(),
            command: out.command,
            applied,
            fp: sc.false_positives,
            fn_: sc.false_negatives,
            in_fog_noise: in_fog,
        });
        stats.n_frame += 1;

        if let Some(o) = outcome {
            stats.outcome = o;
            break;
        }
        applied = out.command;
        ep.advance(out.command);
    }
    stats.collided = stats.outcome == Outcome::Collided;
    stats.stuck = stats.outcome == Outcome::Stuck;
    stats.route_violation = stats.outcome == Outcome::RouteViolation;
    Ok(stats)
}

/// Runs a scenario with the in-process stack.
pub fn run_direct(scenario: &ScenarioConfig, cfg: &SimConfig) -> Result<RunStats> {
    let mut driver = DirectDriver {
        stack: AdsStack::new(scenario, cfg)?,
        dt: cfg.dt,
    };
    run_episode(scenario, cfg, &mut driver)
}
