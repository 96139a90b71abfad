//! Pure-pursuit route follower with a braking corridor.

use serde::{Deserialize, Serialize};

use super::map::Route;
use super::vehicle::{wrap_angle, Command, EgoState, Footprint, EGO_LENGTH, MAX_DECEL, MAX_STEER_DEG, WHEELBASE};
use crate::perception::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub corridor_width: f64,
    /// Clearance added to the braking distance, metres past the front bumper.
    pub standoff: f64,
    /// Seconds the corridor must stay clear before driving off again.
    pub resume_after: f64,
    pub lookahead_min: f64,
    pub lookahead_gain: f64,
    /// Speed cap where the route bends.
    pub curve_speed: f64,
    pub speed_gain: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            corridor_width: 2.2,
            standoff: 8.0,
            resume_after: 1.0,
            lookahead_min: 4.0,
            lookahead_gain: 0.5,
            curve_speed: 6.0,
            speed_gain: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planner {
    pub cfg: PlannerConfig,
    pub route: Route,
    pub target_speed: f64,
    progress: f64,
    blocked_at: Option<f64>,
}

impl Planner {
    pub fn new(cfg: PlannerConfig, route: Route, target_speed: f64) -> Self {
        Self {
            cfg,
            route,
            target_speed,
            progress: 0.0,
            blocked_at: None,
        }
    }

    /// Route progress of the last planned state.
    pub fn progress(&self) -> f64 {
        self.progress
    }

    /// Ego-aligned braking corridor, starting at the front bumper.
    pub fn corridor(&self, ego: &EgoState) -> Footprint {
        let len = ego.speed * ego.speed / (2.0 * MAX_DECEL) + self.cfg.standoff;
        let front = 0.5 * EGO_LENGTH;
        let mid = front + 0.5 * len;
        Footprint {
            x: ego.x + mid * ego.yaw.cos(),
            y: ego.y + mid * ego.yaw.sin(),
            yaw: ego.yaw,
            half_length: 0.5 * len,
            half_width: 0.5 * self.cfg.corridor_width,
        }
    }

    pub fn blocked_by(&self, ego: &EgoState, dets: &[Detection]) -> bool {
        let c = self.corridor(ego);
        dets.iter().any(|d| {
            let (lo, hi) = (d.min(), d.max());
            c.overlaps_aabb((lo.x, lo.y), (hi.x, hi.y))
        })
    }

    /// One control decision at virtual time `now`.
    pub fn plan(&mut self, ego: &EgoState, dets: &[Detection], now: f64) -> Command {
        let (s, _) = self
            .route
            .project_window(ego.x, ego.y, self.progress - 5.0, self.progress + 20.0);
        self.progress = s;
        if s >= self.route.length() {
            return Command::default();
        }

        let ld = (self.cfg.lookahead_min + self.cfg.lookahead_gain * ego.speed).max(self.cfg.lookahead_min);
        let (tx, ty, _) = self.route.at(s + ld);
        let alpha = wrap_angle((ty - ego.y).atan2(tx - ego.x) - ego.yaw);
        let dist = (tx - ego.x).hypot(ty - ego.y).max(1e-6);
        let delta = (2.0 * WHEELBASE * alpha.sin() / dist).atan();
        let steer = (delta / MAX_STEER_DEG.to_radians()).clamp(-1.0, 1.0);

        if self.blocked_by(ego, dets) {
            self.blocked_at = Some(now);
        }
        if let Some(t) = self.blocked_at {
            if now - t < self.cfg.resume_after {
                return Command {
                    throttle: 0.0,
                    brake: 1.0,
                    steer,
                };
            }
            self.blocked_at = None;
        }

        let (_, _, h0) = self.route.at(s);
        let (_, _, h1) = self.route.at(s + 15.0);
        let mut target = self.target_speed;
        if wrap_angle(h1 - h0).abs() > 0.3 {
            target = target.min(self.cfg.curve_speed);
        }
        let err = target - ego.speed;
        let (throttle, brake) = if err >= 0.0 {
            ((err * self.cfg.speed_gain).min(1.0), 0.0)
        } else if err < -0.5 {
            (0.0, (-err * self.cfg.speed_gain).min(1.0))
        } else {
            (0.0, 0.0)
        };
        Command { throttle, brake, steer }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;

    fn ego(speed: f64) -> EgoState {
        EgoState {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            yaw: 0.0,
            pitch: 0.0,
            speed,
        }
    }

    fn planner() -> Planner {
        Planner::new(
            PlannerConfig::default(),
            Route::new(vec![(0.0, 0.0), (100.0, 0.0)]).unwrap(),
            10.0,
        )
    }

    fn phantom(x: f64) -> Detection {
        Detection {
            center: Vec3::new(x, 0.0, 0.6),
            extent: Vec3::new(1.2, 1.2, 0.8),
            point_count: 5,
            fog_points: 0,
            actor_points: 0,
            synthetic: true,
        }
    }

    #[test]
    fn straight_route_drives_on() {
        let c = planner().plan(&ego(5.0), &[], 0.0);
        assert!(c.steer.abs() < 1e-12);
        assert!(c.throttle > 0.0 && c.brake == 0.0);
    }

    #[test]
    fn phantom_ahead_brakes_and_holds() {
        let mut p = planner();
        let c = p.plan(&ego(5.0), &[phantom(10.0)], 0.0);
        assert_eq!(c.brake, 1.0);
        assert_eq!(c.throttle, 0.0);
        // Still held half a second after the corridor clears.
        assert_eq!(p.plan(&ego(2.0), &[], 0.5).brake, 1.0);
        assert!(p.plan(&ego(0.0), &[], 1.05).throttle > 0.0);
    }

    #[test]
    fn detection_beside_corridor_ignored() {
        let mut d = phantom(10.0);
        d.center.y = 2.0;
        assert!(planner().plan(&ego(5.0), &[d], 0.0).brake == 0.0);
    }

    #[test]
    fn route_end_gives_zero_command() {
        let mut p = planner();
        let mut e = ego(3.0);
        e.x = 100.0;
        p.progress = 99.0;
        assert_eq!(p.plan(&e, &[], 0.0), Command::default());
    }
}
