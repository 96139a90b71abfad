//! Static world geometry, actor footprints and the fog field.

mod catalog;
mod fog;
mod geometry;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

pub use catalog::{Catalog, ModelShape, ModelSpec};
pub use fog::{
    alpha_from_mor, mor_from_alpha, FogField, FogHeader, FogMode, FogProfile, PathAttenuation,
    VoxelGrid, DEFAULT_BETA_OF_MOR,
};
pub use geometry::{Pose, Pose3, Primitive, Shape, RAY_EPSILON};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, lo: &Vec3, hi: &Vec3) -> bool {
        self.contains(lo) && self.contains(hi)
    }

    /// Entry and exit ray parameters, if the line meets the box.
    pub fn clip(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let mut lo = (self.min[a] - origin[a]) / dir[a];
            let mut hi = (self.max[a] - origin[a]) / dir[a];
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// First hard target along a ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub distance: f64,
    pub reflectivity: f64,
    pub actor_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub fog: FogField,
    pub bounds: Aabb,
}

/// JSON snapshot: primitives plus the fog header, without voxel data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub primitives: Vec<Primitive>,
    pub fog: FogHeader,
    pub bounds: Aabb,
}

fn check_unit(direction: &Vec3) -> Result<()> {
    let n = direction.norm();
    if !n.is_finite() || n == 0.0 {
        return Err(Error::input("ray direction is degenerate"));
    }
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("ray direction not normalized (|d| = {n})")));
    }
    Ok(())
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>, fog: FogField, bounds: Aabb) -> Result<Self> {
        let s = Self {
            primitives,
            fog,
            bounds,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.fog.validate()?;
        for (i, p) in self.primitives.iter().enumerate() {
            p.validate()?;
            let inside = match p.aabb() {
                Some((lo, hi)) => self.bounds.contains_box(&lo, &hi),
                None => {
                    let z = p.pose.position.z;
                    z >= self.bounds.min.z && z <= self.bounds.max.z
                }
            };
            if !inside {
                return Err(Error::input(format!("primitive {i} lies outside the world bounds")));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            primitives: self.primitives.clone(),
            fog: self.fog.header(),
            bounds: self.bounds,
        }
    }

    /// Nearest hard target within `max_range`. Equal distances resolve to the
    /// smallest actor id, then the brightest surface, so primitive order never
    /// matters.
    pub fn raycast(&self, origin: &Vec3, direction: &Vec3, max_range: f64) -> Result<Option<Hit>> {
        check_unit(direction)?;
        if !(max_range > 0.0) {
            return Err(Error::input("max_range must be positive"));
        }
        Ok(self.raycast_unchecked(origin, direction, max_range))
    }

    pub(crate) fn raycast_unchecked(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for p in &self.primitives {
            let Some(t) = p.intersect(origin, dir) else {
                continue;
            };
            if t > max_range {
                continue;
            }
            let cand = Hit {
                distance: t,
                reflectivity: p.reflectivity,
                actor_id: p.actor_id,
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    let key = |h: &Hit| (h.actor_id.unwrap_or(u32::MAX), -h.reflectivity);
                    t < b.distance || (t == b.distance && key(&cand) < key(b))
                }
            };
            if better {
                best = Some(cand);
            }
        }
        best
    }

    /// Distance at which the ray leaves the world bounds.
    pub fn exit_distance(&self, origin: &Vec3, dir: &Vec3) -> f64 {
        self.bounds
            .clip(origin, dir)
            .map_or(0.0, |(_, t1)| t1.max(0.0))
    }

    /// One-way attenuation sum to distance `r`, clamped to the world bounds.
    pub fn path_attenuation_sum(&self, origin: &Vec3, direction: &Vec3, r: f64) -> Result<PathAttenuation> {
        check_unit(direction)?;
        if !(r >= 0.0) {
            return Err(Error::input("path length must be >= 0"));
        }
        let exit = self.exit_distance(origin, direction);
        let (r, clamped) = if r > exit { (exit, true) } else { (r, false) };
        Ok(match &self.fog.mode {
            FogMode::Homogeneous { alpha } => PathAttenuation {
                sum_alpha: *alpha,
                dr: r,
                clamped,
            },
            FogMode::Voxel(g) => {
                let depth: f64 = g
                    .traverse(origin, direction, r)
                    .iter()
                    .map(|(a, b, alpha)| (b - a) * alpha)
                    .sum();
                PathAttenuation {
                    sum_alpha: depth / g.dr,
                    dr: g.dr,
                    clamped,
                }
            }
        })
    }

    /// Fog profile along a ray, cut at the world bounds.
    pub fn fog_profile(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> FogProfile {
        let end = self.exit_distance(origin, dir).min(max_range);
        self.fog.profile(origin, dir, end)
    }

    /// Nearest hard target per horizontal sector of the sensor frame. Each
    /// sector is sampled at one-degree spacing or finer; sectors with no hit
    /// report `max_range`.
    pub fn probe_openness(&self, sensor: &Pose3, azimuth_sectors: usize, max_range: f64) -> Result<Vec<f64>> {
        if azimuth_sectors < 4 {
            return Err(Error::input("probe_openness needs at least 4 sectors"));
        }
        let width = 360.0 / azimuth_sectors as f64;
        let sub = width.ceil().max(1.0) as usize;
        let rot = sensor.rotation();
        let mut out = Vec::with_capacity(azimuth_sectors);
        for s in 0..azimuth_sectors {
            let mut nearest = max_range;
            for k in 0..sub {
                let az = ((s as f64) + (k as f64 + 0.5) / sub as f64) * width;
                let (sa, ca) = az.to_radians().sin_cos();
                let dir = rot * Vec3::new(ca, sa, 0.0);
                if let Some(h) = self.raycast_unchecked(&sensor.position, &dir, max_range) {
                    nearest = nearest.min(h.distance);
                }
            }
            out.push(nearest);
        }
        Ok(out)
    }

    /// Primitives that belong to a world actor.
    pub fn actors(&self) -> impl Iterator<Item = &Primitive> {
        self.primitives.iter().filter(|p| p.actor_id.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bounds() -> Aabb {
        Aabb::new(Vec3::new(-100.0, -100.0, -10.0), Vec3::new(100.0, 100.0, 50.0))
    }

    fn ground() -> Primitive {
        Primitive::new(Shape::GroundPlane, Pose::new(0.0, 0.0, 0.0, 0.0), 0.3, None).unwrap()
    }

    #[test]
    fn raycast_basic_cases() {
        let wall = Primitive::new(
            Shape::AxisBox {
                half_extents: Vec3::new(0.5, 5.0, 2.0),
            },
            Pose::new(10.5, 0.0, 0.0, 0.0),
            0.8,
            Some(3),
        )
        .unwrap();
        let s = Scene::new(vec![ground(), wall], FogField::clear(), bounds()).unwrap();
        let h = s
            .raycast(&Vec3::new(0.0, 0.0, 2.0), &-Vec3::z(), 100.0)
            .unwrap()
            .unwrap();
        assert_relative_eq!(h.distance, 2.0);
        let h = s
            .raycast(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x(), 100.0)
            .unwrap()
            .unwrap();
        assert_relative_eq!(h.distance, 10.0);
        assert_eq!(h.reflectivity, 0.8);
        assert_eq!(h.actor_id, Some(3));
        assert!(s
            .raycast(&Vec3::new(0.0, 0.0, 1.0), &Vec3::z(), 100.0)
            .unwrap()
            .is_none());
        assert!(s.raycast(&Vec3::zeros(), &Vec3::zeros(), 10.0).is_err());
        // Beyond max_range counts as a miss.
        assert!(s
            .raycast(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x(), 9.0)
            .unwrap()
            .is_none());
    }

    #[test]
    fn scene_rejects_out_of_bounds_primitive() {
        let far = Primitive::new(
            Shape::Cylinder {
                radius: 1.0,
                height: 1.0,
            },
            Pose::new(150.0, 0.0, 0.0, 0.0),
            0.5,
            None,
        )
        .unwrap();
        assert!(Scene::new(vec![far], FogField::clear(), bounds()).is_err());
    }

    #[test]
    fn homogeneous_transmission_closed_form() {
        let s = Scene::new(vec![], FogField::from_mor(30.0), bounds()).unwrap();
        let pa = s
            .path_attenuation_sum(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x(), 30.0)
            .unwrap();
        assert!(!pa.clamped);
        assert_relative_eq!(pa.transmission(), 0.05, epsilon = 1e-12);
        let pa = s
            .path_attenuation_sum(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x(), 500.0)
            .unwrap();
        assert!(pa.clamped);
        assert_relative_eq!(pa.dr, 100.0);
    }

    #[test]
    fn openness_wall_on_the_right() {
        let wall = Primitive::new(
            Shape::AxisBox {
                half_extents: Vec3::new(20.0, 0.5, 2.0),
            },
            Pose::new(0.0, -5.5, 0.0, 0.0),
            0.5,
            None,
        )
        .unwrap();
        let s = Scene::new(vec![wall], FogField::clear(), bounds()).unwrap();
        let o = s
            .probe_openness(&Pose3::at(0.0, 0.0, 1.0), 12, 80.0)
            .unwrap();
        // Sector 9 spans 270..300 degrees, i.e. straight to the right.
        assert!(o[9] >= 5.0 && o[9] < 5.8);
        assert_eq!(o[3], 80.0);
        assert!(s.probe_openness(&Pose3::at(0.0, 0.0, 1.0), 3, 80.0).is_err());
    }

    #[test]
    fn snapshot_omits_voxel_payload() {
        let g = VoxelGrid::filled([2, 2, 2], Vec3::zeros(), 1.0, 0.1).unwrap();
        let s = Scene::new(vec![ground()], FogField::voxel(g), bounds()).unwrap();
        let json = serde_json::to_string(&s.snapshot()).unwrap();
        assert!(json.contains("\"mode\":\"voxel\""));
        assert!(!json.contains("alphas"));
        let back: Scene = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
