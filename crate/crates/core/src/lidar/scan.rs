use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::pulse::{hard_amplitude, hard_at, make_echo, soft_at};
use super::{Beam, Echo, LidarConfig, PulseResponse};
use crate::scene::{FogMode, Pose3, Scene};
use crate::{Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Peak from a solid surface; `actor_id` is set for world actors.
    Hard { actor_id: Option<u32> },
    FogNoise,
}

impl Provenance {
    pub fn is_fog(&self) -> bool {
        matches!(self, Provenance::FogNoise)
    }

    pub fn code(&self) -> u8 {
        match self {
            Provenance::Hard { .. } => 0,
            Provenance::FogNoise => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    /// Sensor frame, metres.
    pub position: Vec3,
    pub intensity: f64,
    pub channel: usize,
    pub azimuth: f64,
    pub provenance: Provenance,
    /// Distance to the first hard surface along the beam, if any.
    pub true_range: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
    pub frame: u64,
    pub sensor_pose: Pose3,
}

impl PointCloud {
    pub fn world_points(&self) -> impl Iterator<Item = (Vec3, &LidarPoint)> + '_ {
        let rot = self.sensor_pose.rotation();
        let origin = self.sensor_pose.position;
        self.points
            .iter()
            .map(move |p| (rot * p.position + origin, p))
    }

    pub fn fog_count(&self) -> usize {
        self.points.iter().filter(|p| p.provenance.is_fog()).count()
    }
}

/// Fog backscatter of an unobstructed beam in homogeneous fog, with its
/// running maximum. Any ray whose target lies at or beyond `R` sees exactly
/// this value at `R`.
#[derive(Debug)]
struct SkyTable {
    key: (u64, u64),
    values: Vec<f64>,
    /// Index of the first maximum over `values[..=i]`.
    prefix_arg: Vec<usize>,
    /// Maximum over `values[i..]`.
    suffix_max: Vec<f64>,
}

/// A configured sensor with the per-fog caches used by [`Lidar::scan`].
#[derive(Debug)]
pub struct Lidar {
    cfg: LidarConfig,
    grid: Vec<f64>,
    beams: Vec<Beam>,
    sky: Mutex<Option<Arc<SkyTable>>>,
}

impl Clone for Lidar {
    fn clone(&self) -> Self {
        Self {
            cfg: self.cfg.clone(),
            grid: self.grid.clone(),
            beams: self.beams.clone(),
            sky: Mutex::new(self.sky.lock().expect("sky cache").clone()),
        }
    }
}

impl Lidar {
    pub fn new(cfg: LidarConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            grid: cfg.range_grid(),
            beams: cfg.emit_directions(),
            cfg,
            sky: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &LidarConfig {
        &self.cfg
    }

    pub fn beams(&self) -> &[Beam] {
        &self.beams
    }

    /// World pose of the sensor for an ego body pose.
    pub fn sensor_pose(&self, ego: &Pose3) -> Pose3 {
        let m = &self.cfg.mount;
        let rot = ego.rotation() * m.rotation();
        let (roll, pitch, yaw) = rot.euler_angles();
        Pose3::new(ego.to_world(&m.position), yaw, -pitch, roll)
    }

    fn sky_table(&self, alpha: f64, scene: &Scene) -> Arc<SkyTable> {
        let key = (alpha.to_bits(), scene.fog.beta_of_mor.to_bits());
        let mut slot = self.sky.lock().expect("sky cache");
        if let Some(t) = slot.as_ref().filter(|t| t.key == key) {
            return Arc::clone(t);
        }
        let profile = scene.fog.profile(&Vec3::zeros(), &Vec3::x(), f64::INFINITY);
        let values: Vec<f64> = self
            .grid
            .iter()
            .map(|&r| soft_at(&profile, r, f64::INFINITY, &self.cfg))
            .collect();
        let mut prefix_arg = Vec::with_capacity(values.len());
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
            prefix_arg.push(best);
        }
        let mut suffix_max = values.clone();
        for i in (0..suffix_max.len().saturating_sub(1)).rev() {
            suffix_max[i] = suffix_max[i].max(suffix_max[i + 1]);
        }
        let t = Arc::new(SkyTable {
            key,
            values,
            prefix_arg,
            suffix_max,
        });
        *slot = Some(Arc::clone(&t));
        t
    }

    /// Full sweep. The result is identical to running the per-ray pipeline
    /// (`raycast`, `hard_response`, `soft_response`, `total_response`,
    /// `select_return`) on every beam.
    pub fn scan(&self, scene: &Scene, sensor: &Pose3, frame: u64) -> PointCloud {
        let rot = sensor.rotation();
        let sky = match scene.fog.mode {
            FogMode::Homogeneous { alpha } => Some(self.sky_table(alpha, scene)),
            FogMode::Voxel(_) => None,
        };
        let mut points = Vec::new();
        for beam in &self.beams {
            let dir = rot * beam.dir;
            let (echo, hit) = match &sky {
                Some(t) => self.trace_homogeneous(scene, &sensor.position, &dir, t),
                None => self.trace_general(scene, &sensor.position, &dir),
            };
            if let Some(e) = echo {
                points.push(LidarPoint {
                    position: beam.dir * e.range,
                    intensity: e.intensity,
                    channel: beam.channel,
                    azimuth: beam.azimuth,
                    provenance: if e.fog {
                        Provenance::FogNoise
                    } else {
                        Provenance::Hard {
                            actor_id: hit.and_then(|h| h.actor_id),
                        }
                    },
                    true_range: hit.map(|h| h.distance),
                });
            }
        }
        PointCloud {
            points,
            frame,
            sensor_pose: *sensor,
        }
    }

    /// Echo for one world-frame beam.
    pub fn trace(&self, scene: &Scene, origin: &Vec3, dir: &Vec3) -> Option<Echo> {
        match scene.fog.mode {
            FogMode::Homogeneous { alpha } => {
                let t = self.sky_table(alpha, scene);
                self.trace_homogeneous(scene, origin, dir, &t).0
            }
            FogMode::Voxel(_) => self.trace_general(scene, origin, dir).0,
        }
    }

    fn trace_homogeneous(
        &self,
        scene: &Scene,
        origin: &Vec3,
        dir: &Vec3,
        sky: &SkyTable,
    ) -> (Option<Echo>, Option<crate::scene::Hit>) {
        let cfg = &self.cfg;
        let floor = cfg.noise_floor();
        let hit = scene.raycast_unchecked(origin, dir, cfg.max_range);
        let Some(h) = hit else {
            let i = *sky.prefix_arg.last().expect("non-empty grid");
            let v = sky.values[i];
            let echo = (v >= floor && v > 0.0).then(|| make_echo(self.grid[i], v, None, cfg));
            return (echo, None);
        };

        let r0 = h.distance;
        let len = cfg.pulse_length();
        let depth = scene
            .path_attenuation_sum(origin, dir, r0)
            .map(|p| p.optical_depth())
            .unwrap_or(0.0);
        let amp = hard_amplitude(r0, h.reflectivity, depth, cfg);
        let profile = scene.fog.profile(origin, dir, f64::INFINITY);

        // Samples up to r0 carry only the unobstructed fog return.
        let split = self.grid.partition_point(|&r| r <= r0);
        let mut best: Option<(usize, f64)> = split
            .checked_sub(1)
            .map(|j| sky.prefix_arg[j])
            .map(|i| (i, sky.values[i]));

        // Inside the hard window the truncated fog return never exceeds the
        // unobstructed one, so hard + S∞ bounds each sample. Visit samples by
        // decreasing bound and stop once no bound can win.
        let reachable = sky.suffix_max.get(split).map_or(0.0, |m| amp + m);
        if best.is_some_and(|(_, b)| reachable < b) {
            let echo = best
                .filter(|&(_, v)| v >= floor && v > 0.0)
                .map(|(i, v)| make_echo(self.grid[i], v, Some(r0), cfg));
            return (echo, hit);
        }
        let end = self.grid.partition_point(|&r| r <= r0 + len);
        // Bounds for the window, on the stack for the usual few dozen samples.
        let mut stack = [0.0; 96];
        let mut heap = Vec::new();
        let loose: &mut [f64] = if end - split <= stack.len() {
            &mut stack[..end - split]
        } else {
            heap.resize(end - split, 0.0);
            &mut heap
        };
        for (k, l) in loose.iter_mut().enumerate() {
            let i = split + k;
            *l = amp * sin2_upper(std::f64::consts::PI * (self.grid[i] - r0) / len) + sky.values[i];
        }
        // Loosest bound first, then every sample whose bound still reaches
        // the running best; each skipped sample is strictly below it.
        let top = (0..loose.len()).reduce(|a, b| if loose[b] > loose[a] { b } else { a });
        let order = top.into_iter().chain((0..loose.len()).filter(|&k| Some(k) != top));
        for k in order {
            let i = split + k;
            if best.is_some_and(|(_, b)| loose[k] < b) {
                continue;
            }
            let hard = hard_at(self.grid[i], r0, amp, len);
            if best.is_some_and(|(_, b)| hard + sky.values[i] < b) {
                continue;
            }
            let v = hard + soft_at(&profile, self.grid[i], r0, cfg);
            let wins = match best {
                None => true,
                Some((bi, b)) => v > b || (v == b && i < bi),
            };
            if wins {
                best = Some((i, v));
            }
        }
        let echo = best
            .filter(|&(_, v)| v >= floor && v > 0.0)
            .map(|(i, v)| make_echo(self.grid[i], v, Some(r0), cfg));
        (echo, hit)
    }

    fn trace_general(&self, scene: &Scene, origin: &Vec3, dir: &Vec3) -> (Option<Echo>, Option<crate::scene::Hit>) {
        let (_, _, total, hit) = self.responses(scene, origin, dir);
        (super::select_return(&total, &self.cfg, self.cfg.noise_floor()), hit)
    }

    /// Hard, fog and total curves for one world-frame beam.
    pub fn responses(
        &self,
        scene: &Scene,
        origin: &Vec3,
        dir: &Vec3,
    ) -> (PulseResponse, PulseResponse, PulseResponse, Option<crate::scene::Hit>) {
        let cfg = &self.cfg;
        let hit = scene.raycast_unchecked(origin, dir, cfg.max_range);
        let r0 = hit.map_or(f64::INFINITY, |h| h.distance);
        let hard = match hit {
            Some(h) => {
                let path = scene
                    .path_attenuation_sum(origin, dir, r0)
                    .expect("unit beam direction");
                super::hard_response(r0, h.reflectivity, &path, cfg).expect("valid hit")
            }
            None => PulseResponse::zeros(&self.grid, None),
        };
        let profile = scene.fog_profile(origin, dir, cfg.max_range + cfg.pulse_length());
        let soft = super::soft_response(&profile, r0, cfg);
        let total = super::total_response(&hard, &soft).expect("shared grid");
        (hard, soft, total, hit)
    }
}

/// Upper bound on sin²(x) for x in [0, π] without calling `sin`: the Taylor
/// series cut after its x⁵ term overestimates sin on [0, π/2].
fn sin2_upper(x: f64) -> f64 {
    let y = x.min(std::f64::consts::PI - x).max(0.0);
    let y2 = y * y;
    let s = (y * (1.0 - y2 / 6.0 + y2 * y2 / 120.0)).min(1.0);
    s * s * (1.0 + 1e-9) + 1e-24
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lidar::select_return;
    use crate::scene::{Aabb, FogField, Pose, Primitive, Shape};

    fn scene(mor: f64) -> Scene {
        let ground = Primitive::new(Shape::GroundPlane, Pose::new(0.0, 0.0, 0.0, 0.0), 0.4, None).unwrap();
        let car = Primitive::new(
            Shape::OrientedBox {
                half_extents: Vec3::new(2.3, 0.95, 0.75),
            },
            Pose::new(12.0, 1.0, 0.0, 0.3),
            0.7,
            Some(1),
        )
        .unwrap();
        Scene::new(
            vec![ground, car],
            FogField::from_mor(mor),
            Aabb::new(Vec3::new(-200.0, -200.0, -5.0), Vec3::new(200.0, 200.0, 50.0)),
        )
        .unwrap()
    }

    fn small_lidar() -> Lidar {
        Lidar::new(LidarConfig {
            channels: 8,
            horizontal_resolution: 6.0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn fast_path_matches_full_pipeline_bitwise() {
        let lidar = small_lidar();
        for mor in [f64::INFINITY, 200.0, 30.0, 8.0] {
            let s = scene(mor);
            let pose = Pose3::at(0.0, 0.0, 1.9);
            let t = lidar.sky_table(crate::scene::alpha_from_mor(mor), &s);
            for beam in lidar.beams() {
                let fast = lidar.trace_homogeneous(&s, &pose.position, &beam.dir, &t).0;
                let (_, _, total, _) = lidar.responses(&s, &pose.position, &beam.dir);
                let full = select_return(&total, lidar.config(), lidar.config().noise_floor());
                assert_eq!(fast, full, "mor {mor} beam {beam:?}");
            }
        }
    }

    #[test]
    fn sin2_bound_holds() {
        for k in 0..=10_000 {
            let x = std::f64::consts::PI * k as f64 / 10_000.0;
            let s = x.sin();
            assert!(sin2_upper(x) >= s * s, "{x}");
        }
    }

    #[test]
    fn empty_clear_scene_gives_empty_cloud() {
        let lidar = small_lidar();
        let s = Scene::new(
            vec![],
            FogField::clear(),
            Aabb::new(Vec3::repeat(-100.0), Vec3::repeat(100.0)),
        )
        .unwrap();
        assert!(lidar.scan(&s, &Pose3::at(0.0, 0.0, 2.0), 0).points.is_empty());
    }

    #[test]
    fn scan_is_deterministic_and_bounded() {
        let lidar = small_lidar();
        let s = scene(20.0);
        let pose = Pose3::at(0.0, 0.0, 1.9);
        let a = lidar.scan(&s, &pose, 3);
        let b = lidar.clone().scan(&s, &pose, 3);
        assert_eq!(a, b);
        assert!(a.points.len() <= lidar.config().ray_count());
        assert!(a.points.iter().all(|p| p.intensity > 0.0));
    }

    #[test]
    fn sensor_pose_composes_mount() {
        let lidar = small_lidar();
        let ego = Pose3::new(Vec3::new(5.0, 1.0, 0.0), std::f64::consts::FRAC_PI_2, 0.1, 0.0);
        let s = lidar.sensor_pose(&ego);
        assert!((s.yaw - ego.yaw).abs() < 1e-12);
        assert!((s.pitch - 0.1).abs() < 1e-12);
        let up = ego.dir_to_world(&Vec3::z()) * 1.9;
        assert!((s.position - (ego.position + up)).norm() < 1e-12);
    }
}
