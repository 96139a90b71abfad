//! Actor state and the fixed-step motion update.

use serde::{Deserialize, Serialize};

use super::map::{Map, Route};
use crate::perception::{Terrain, TruthActor};
use crate::scene::{ModelSpec, Pose, Pose3, Primitive};
use crate::{Result, Vec3};

pub const EGO_LENGTH: f64 = 4.6;
pub const EGO_WIDTH: f64 = 1.9;
pub const WHEELBASE: f64 = 2.8;
pub const MAX_STEER_DEG: f64 = 35.0;
pub const MAX_ACCEL: f64 = 3.0;
pub const MAX_DECEL: f64 = 6.0;
pub const GRAVITY: f64 = 9.81;
/// NPC time headway to the actor in front, seconds.
pub const HEADWAY: f64 = 2.0;
/// Standstill bumper gap kept by NPCs, metres.
pub const MIN_GAP: f64 = 2.0;
const LEADER_LOOKAHEAD: f64 = 60.0;
const LANE_HALF_WIDTH: f64 = 1.6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub throttle: f64,
    pub brake: f64,
    pub steer: f64,
}

impl Command {
    pub fn clamped(self) -> Self {
        Self {
            throttle: self.throttle.clamp(0.0, 1.0),
            brake: self.brake.clamp(0.0, 1.0),
            steer: self.steer.clamp(-1.0, 1.0),
        }
    }

    pub fn full_brake() -> Self {
        Self {
            throttle: 0.0,
            brake: 1.0,
            steer: 0.0,
        }
    }
}

/// Ego body state; (x, y) is the footprint centre, z the ground under it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub speed: f64,
}

impl EgoState {
    pub fn pose(&self) -> Pose3 {
        Pose3::new(Vec3::new(self.x, self.y, self.z), self.yaw, self.pitch, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcState {
    pub actor_id: u32,
    pub model: String,
    /// Arc length along the NPC's route.
    pub s: f64,
    pub speed: f64,
    pub desired_speed: f64,
    /// False once the NPC has reached the end of its route and left the scene.
    pub active: bool,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub frame: u64,
    pub time: f64,
    pub ego: EgoState,
    pub npcs: Vec<NpcState>,
}

/// Oriented footprint rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Footprint {
    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.yaw.sin_cos();
        [(c, s), (-s, c)]
    }

    fn radius_along(&self, ax: (f64, f64)) -> f64 {
        let [u, v] = self.axes();
        self.half_length * (u.0 * ax.0 + u.1 * ax.1).abs() + self.half_width * (v.0 * ax.0 + v.1 * ax.1).abs()
    }

    /// Separating-axis overlap test.
    pub fn overlaps(&self, other: &Footprint) -> bool {
        let d = (other.x - self.x, other.y - self.y);
        self.axes().into_iter().chain(other.axes()).all(|ax| {
            (d.0 * ax.0 + d.1 * ax.1).abs() <= self.radius_along(ax) + other.radius_along(ax)
        })
    }

    /// Overlap with an axis-aligned rectangle.
    pub fn overlaps_aabb(&self, min: (f64, f64), max: (f64, f64)) -> bool {
        let other = Footprint {
            x: 0.5 * (min.0 + max.0),
            y: 0.5 * (min.1 + max.1),
            yaw: 0.0,
            half_length: 0.5 * (max.0 - min.0),
            half_width: 0.5 * (max.1 - min.1),
        };
        self.overlaps(&other)
    }

    pub fn half_diagonal(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }
}

pub fn ego_footprint(e: &EgoState) -> Footprint {
    Footprint {
        x: e.x,
        y: e.y,
        yaw: e.yaw,
        half_length: 0.5 * EGO_LENGTH,
        half_width: 0.5 * EGO_WIDTH,
    }
}

/// Static description of an NPC alongside its route.
#[derive(Debug, Clone)]
pub struct NpcPlan {
    pub spec: ModelSpec,
    pub route: Route,
}

impl NpcPlan {
    pub fn half_length(&self) -> f64 {
        0.5 * self.spec.length()
    }

    pub fn half_width(&self) -> f64 {
        match self.spec.shape {
            crate::scene::ModelShape::Box { width, .. } => 0.5 * width,
            crate::scene::ModelShape::Cylinder { radius, .. } => radius,
        }
    }

    pub fn footprint(&self, n: &NpcState) -> Footprint {
        Footprint {
            x: n.x,
            y: n.y,
            yaw: n.yaw,
            half_length: self.half_length(),
            half_width: self.half_width(),
        }
    }

    pub fn truth(&self, n: &NpcState) -> TruthActor {
        TruthActor {
            actor_id: n.actor_id,
            center: Vec3::new(n.x, n.y, n.z),
            yaw: n.yaw,
            half_length: self.half_length(),
            half_width: self.half_width(),
        }
    }

    pub fn primitive(&self, n: &NpcState) -> Result<Primitive> {
        self.spec.primitive(Pose::new(n.x, n.y, n.z, n.yaw), n.actor_id)
    }
}

/// Places an NPC at arc length `s` of its route.
pub fn place_npc(n: &mut NpcState, plan: &NpcPlan, map: &Map) {
    let (x, y, yaw) = plan.route.at(n.s);
    n.x = x;
    n.y = y;
    n.yaw = yaw;
    n.z = map.terrain.ground_z(x, y);
}

/// Advances every actor by one step. NPC speeds are chosen from the previous
/// state so the update does not depend on NPC order.
pub fn step(state: &WorldState, map: &Map, plans: &[NpcPlan], cmd: Command, dt: f64) -> WorldState {
    let cmd = cmd.clamped();
    let mut next = state.clone();
    next.frame += 1;
    next.time = next.frame as f64 * dt;

    let e = &state.ego;
    let accel = cmd.throttle * MAX_ACCEL - cmd.brake * MAX_DECEL - GRAVITY * e.pitch.sin();
    let v = (e.speed + accel * dt).max(0.0);
    let delta = cmd.steer * MAX_STEER_DEG.to_radians();
    let ego = &mut next.ego;
    ego.speed = v;
    if v > 0.0 {
        ego.x += v * e.yaw.cos() * dt;
        ego.y += v * e.yaw.sin() * dt;
        ego.yaw = wrap_angle(e.yaw + v / WHEELBASE * delta.tan() * dt);
        ego.z = map.terrain.ground_z(ego.x, ego.y);
        ego.pitch = map.pitch_at(ego.x, ego.y, ego.yaw, WHEELBASE);
    }

    for (i, n) in state.npcs.iter().enumerate() {
        if !n.active {
            continue;
        }
        let plan = &plans[i];
        let (gap, lead_speed) = leader_gap(state, plans, i);
        let mut v = n.desired_speed;
        if let Some(gap) = gap {
            let bound = (gap - MIN_GAP + lead_speed * dt) / (HEADWAY + dt);
            v = v.min(bound.max(0.0));
        }
        let out = &mut next.npcs[i];
        out.speed = v;
        out.s = n.s + v * dt;
        if out.s >= plan.route.length() {
            out.s = plan.route.length();
            out.active = false;
            out.speed = 0.0;
        }
        place_npc(out, plan, map);
    }
    next
}

/// Bumper gap to, and speed of, the nearest actor ahead in NPC `i`'s lane.
fn leader_gap(state: &WorldState, plans: &[NpcPlan], i: usize) -> (Option<f64>, f64) {
    let me = &state.npcs[i];
    let plan = &plans[i];
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |x: f64, y: f64, half_length: f64, speed: f64| {
        let (s, d) = plan.route.project_window(x, y, me.s, me.s + LEADER_LOOKAHEAD);
        if s > me.s + 1e-9 && d < LANE_HALF_WIDTH {
            let gap = s - me.s - plan.half_length() - half_length;
            if best.map_or(true, |(g, _)| gap < g) {
                best = Some((gap, speed));
            }
        }
    };
    consider(state.ego.x, state.ego.y, 0.5 * EGO_LENGTH, state.ego.speed);
    for (j, o) in state.npcs.iter().enumerate() {
        if j != i && o.active {
            consider(o.x, o.y, plans[j].half_length(), o.speed);
        }
    }
    match best {
        Some((g, v)) => (Some(g), v),
        None => (None, 0.0),
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::map::MapId;

    fn world(speed: f64) -> WorldState {
        WorldState {
            frame: 0,
            time: 0.0,
            ego: EgoState {
                x: 0.0,
                y: 0.0,
                z: 0.0,
                yaw: 0.0,
                pitch: 0.0,
                speed,
            },
            npcs: Vec::new(),
        }
    }

    #[test]
    fn braking_arithmetic() {
        let map = MapId::WallCorridor.map();
        let cmd = Command {
            throttle: 0.0,
            brake: 1.0,
            steer: 0.0,
        };
        let next = step(&world(10.0), map, &[], cmd, 0.05);
        assert!((next.ego.speed - 9.7).abs() < 1e-12);
        assert_eq!(next.frame, 1);
    }

    #[test]
    fn stationary_world_only_counts_frames() {
        let map = MapId::WallCorridor.map();
        let s = world(0.0);
        let next = step(&s, map, &[], Command::default(), 0.05);
        assert_eq!(next.ego, s.ego);
        assert_eq!(next.frame, 1);
    }

    #[test]
    fn footprint_overlap() {
        let a = Footprint {
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
            half_length: 2.0,
            half_width: 1.0,
        };
        let mut b = Footprint { x: 3.9, ..a };
        assert!(a.overlaps(&b));
        b.x = 4.1;
        assert!(!a.overlaps(&b));
        b.yaw = std::f64::consts::FRAC_PI_4;
        b.x = 4.0;
        assert!(a.overlaps(&b));
        assert!(a.overlaps_aabb((1.5, -3.0), (2.5, 3.0)));
        assert!(!a.overlaps_aabb((2.1, -3.0), (2.5, 3.0)));
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }
}
