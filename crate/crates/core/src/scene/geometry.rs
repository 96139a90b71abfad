//! Analytic primitives and exact ray intersections.

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Rays closer than this to their origin never count as a hit.
pub const RAY_EPSILON: f64 = 1e-9;

/// Position and heading of a primitive. Boxes, cylinders and ramps are
/// anchored at the centre of their bottom face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    #[serde(default)]
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            position: Vec3::new(x, y, z),
            yaw,
        }
    }
}

/// Full rigid pose used for sensors and the ego body: nose-up pitch and
/// right-side-down roll are positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose3 {
    pub position: Vec3,
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
}

impl Pose3 {
    pub fn new(position: Vec3, yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            position,
            yaw,
            pitch,
            roll,
        }
    }

    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vec3::new(x, y, z), 0.0, 0.0, 0.0)
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        // A positive rotation about +y tips +x downwards, hence the sign flip.
        Rotation3::from_euler_angles(self.roll, -self.pitch, self.yaw)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local + self.position
    }

    pub fn dir_to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local
    }
}

/// Shape-specific extents, all in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box; `pose.yaw` is ignored.
    AxisBox { half_extents: Vec3 },
    /// Box rotated by `pose.yaw` about the vertical axis.
    OrientedBox { half_extents: Vec3 },
    /// Vertical cylinder.
    Cylinder { radius: f64, height: f64 },
    /// Infinite horizontal plane at `pose.position.z`.
    GroundPlane,
    /// Inclined rectangle rising by `rise` over the horizontal `run` along
    /// the yaw direction, `width` wide.
    Ramp { run: f64, width: f64, rise: f64 },
}

impl Shape {
    fn extents(&self) -> Vec<f64> {
        match *self {
            Shape::AxisBox { half_extents } | Shape::OrientedBox { half_extents } => {
                half_extents.iter().copied().collect()
            }
            Shape::Cylinder { radius, height } => vec![radius, height],
            Shape::GroundPlane => Vec::new(),
            Shape::Ramp { run, width, rise } => vec![run, width, rise],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub pose: Pose,
    pub reflectivity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_id: Option<u32>,
}

impl Primitive {
    pub fn new(shape: Shape, pose: Pose, reflectivity: f64, actor_id: Option<u32>) -> Result<Self> {
        let p = Self {
            shape,
            pose,
            reflectivity,
            actor_id,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(Error::input(format!(
                "reflectivity {} outside [0, 1]",
                self.reflectivity
            )));
        }
        if self.shape.extents().iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::input(format!(
                "primitive extents must be strictly positive: {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Horizontal footprint AABB and vertical span, `None` for unbounded shapes.
    pub fn aabb(&self) -> Option<(Vec3, Vec3)> {
        let p = self.pose.position;
        match self.shape {
            Shape::AxisBox { half_extents: h } => Some((
                Vec3::new(p.x - h.x, p.y - h.y, p.z),
                Vec3::new(p.x + h.x, p.y + h.y, p.z + 2.0 * h.z),
            )),
            Shape::OrientedBox { half_extents: h } => {
                let (s, c) = self.pose.yaw.sin_cos();
                let ex = (c * h.x).abs() + (s * h.y).abs();
                let ey = (s * h.x).abs() + (c * h.y).abs();
                Some((
                    Vec3::new(p.x - ex, p.y - ey, p.z),
                    Vec3::new(p.x + ex, p.y + ey, p.z + 2.0 * h.z),
                ))
            }
            Shape::Cylinder { radius, height } => Some((
                Vec3::new(p.x - radius, p.y - radius, p.z),
                Vec3::new(p.x + radius, p.y + radius, p.z + height),
            )),
            Shape::GroundPlane => None,
            Shape::Ramp { run, width, rise } => {
                let (s, c) = self.pose.yaw.sin_cos();
                let corners = [(0.0, -0.5), (0.0, 0.5), (1.0, -0.5), (1.0, 0.5)];
                let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, p.z);
                let mut hi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, p.z + rise);
                for (u, v) in corners {
                    let x = p.x + c * u * run - s * v * width;
                    let y = p.y + s * u * run + c * v * width;
                    lo.x = lo.x.min(x);
                    lo.y = lo.y.min(y);
                    hi.x = hi.x.max(x);
                    hi.y = hi.y.max(y);
                }
                Some((lo, hi))
            }
        }
    }

    /// Nearest positive ray parameter at which `origin + t * dir` meets the
    /// surface. `dir` must be unit length.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let p = self.pose.position;
        match self.shape {
            Shape::AxisBox { half_extents: h } => {
                let lo = Vec3::new(p.x - h.x, p.y - h.y, p.z);
                let hi = Vec3::new(p.x + h.x, p.y + h.y, p.z + 2.0 * h.z);
                slab(origin, dir, &lo, &hi)
            }
            Shape::OrientedBox { half_extents: h } => {
                let (o, d) = to_local(origin, dir, &p, self.pose.yaw);
                slab(
                    &o,
                    &d,
                    &Vec3::new(-h.x, -h.y, 0.0),
                    &Vec3::new(h.x, h.y, 2.0 * h.z),
                )
            }
            Shape::Cylinder { radius, height } => cylinder(origin, dir, &p, radius, height),
            Shape::GroundPlane => {
                if dir.z.abs() < 1e-15 {
                    return None;
                }
                let t = (p.z - origin.z) / dir.z;
                (t > RAY_EPSILON).then_some(t)
            }
            Shape::Ramp { run, width, rise } => {
                let (o, d) = to_local(origin, dir, &p, self.pose.yaw);
                let k = rise / run;
                let denom = d.z - k * d.x;
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = -(o.z - k * o.x) / denom;
                if t <= RAY_EPSILON {
                    return None;
                }
                let u = o.x + t * d.x;
                let v = o.y + t * d.y;
                (u >= 0.0 && u <= run && v.abs() <= 0.5 * width).then_some(t)
            }
        }
    }
}

fn to_local(origin: &Vec3, dir: &Vec3, anchor: &Vec3, yaw: f64) -> (Vec3, Vec3) {
    let (s, c) = yaw.sin_cos();
    let rel = origin - anchor;
    let o = Vec3::new(c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z);
    let d = Vec3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
    (o, d)
}

fn slab(origin: &Vec3, dir: &Vec3, lo: &Vec3, hi: &Vec3) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        let o = origin[axis];
        let d = dir[axis];
        if d.abs() < 1e-15 {
            if o < lo[axis] || o > hi[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let mut t0 = (lo[axis] - o) * inv;
        let mut t1 = (hi[axis] - o) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_near > RAY_EPSILON {
        Some(t_near)
    } else if t_far > RAY_EPSILON {
        Some(t_far)
    } else {
        None
    }
}

fn cylinder(origin: &Vec3, dir: &Vec3, base: &Vec3, radius: f64, height: f64) -> Option<f64> {
    let ox = origin.x - base.x;
    let oy = origin.y - base.y;
    let z_lo = base.z;
    let z_hi = base.z + height;
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > RAY_EPSILON && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };

    let a = dir.x * dir.x + dir.y * dir.y;
    if a > 1e-15 {
        let b = 2.0 * (ox * dir.x + oy * dir.y);
        let c = ox * ox + oy * oy - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = origin.z + t * dir.z;
                if z >= z_lo && z <= z_hi {
                    consider(t);
                }
            }
        }
    }
    if dir.z.abs() > 1e-15 {
        for zc in [z_lo, z_hi] {
            let t = (zc - origin.z) / dir.z;
            let x = ox + t * dir.x;
            let y = oy + t * dir.y;
            if x * x + y * y <= radius * radius {
                consider(t);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn prim(shape: Shape, pose: Pose) -> Primitive {
        Primitive::new(shape, pose, 0.5, None).unwrap()
    }

    #[test]
    fn rejects_bad_reflectivity_and_extents() {
        let pose = Pose::new(0.0, 0.0, 0.0, 0.0);
        assert!(Primitive::new(Shape::GroundPlane, pose, 1.2, None).is_err());
        assert!(Primitive::new(
            Shape::Cylinder {
                radius: 0.0,
                height: 1.0
            },
            pose,
            0.5,
            None
        )
        .is_err());
    }

    #[test]
    fn oriented_box_matches_axis_box_at_zero_yaw() {
        let h = Vec3::new(1.0, 2.0, 0.5);
        let a = prim(Shape::AxisBox { half_extents: h }, Pose::new(5.0, 0.0, 0.0, 0.0));
        let b = prim(Shape::OrientedBox { half_extents: h }, Pose::new(5.0, 0.0, 0.0, 0.0));
        let o = Vec3::new(0.0, 0.3, 0.4);
        let d = Vec3::x();
        assert_relative_eq!(a.intersect(&o, &d).unwrap(), 4.0);
        assert_relative_eq!(b.intersect(&o, &d).unwrap(), 4.0);
    }

    #[test]
    fn rotated_box_face_distance() {
        // A 90 degree yaw swaps the footprint axes.
        let b = prim(
            Shape::OrientedBox {
                half_extents: Vec3::new(2.0, 0.5, 0.5),
            },
            Pose::new(10.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2),
        );
        let t = b.intersect(&Vec3::new(0.0, 0.0, 0.5), &Vec3::x()).unwrap();
        assert_relative_eq!(t, 9.5, epsilon = 1e-12);
    }

    #[test]
    fn cylinder_side_and_cap() {
        let c = prim(
            Shape::Cylinder {
                radius: 0.5,
                height: 2.0,
            },
            Pose::new(4.0, 0.0, 0.0, 0.0),
        );
        assert_relative_eq!(
            c.intersect(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x()).unwrap(),
            3.5
        );
        let down = -Vec3::z();
        assert_relative_eq!(
            c.intersect(&Vec3::new(4.0, 0.0, 5.0), &down).unwrap(),
            3.0
        );
        assert!(c.intersect(&Vec3::new(0.0, 0.0, 3.0), &Vec3::x()).is_none());
    }

    #[test]
    fn ramp_surface_height() {
        let rise = 10f64.to_radians().tan() * 20.0;
        let r = prim(
            Shape::Ramp {
                run: 20.0,
                width: 6.0,
                rise,
            },
            Pose::new(0.0, 0.0, 0.0, 0.0),
        );
        let t = r.intersect(&Vec3::new(10.0, 0.0, 10.0), &-Vec3::z()).unwrap();
        assert_relative_eq!(t, 10.0 - 10.0 * 10f64.to_radians().tan(), epsilon = 1e-12);
        assert!(r.intersect(&Vec3::new(25.0, 0.0, 10.0), &-Vec3::z()).is_none());
        assert!(r.intersect(&Vec3::new(10.0, 3.5, 10.0), &-Vec3::z()).is_none());
    }

    #[test]
    fn pose3_pitch_up_raises_forward_axis() {
        let p = Pose3::new(Vec3::zeros(), 0.0, 10f64.to_radians(), 0.0);
        let f = p.dir_to_world(&Vec3::x());
        assert!(f.z > 0.17 && f.z < 0.18);
        let q = Pose3::new(Vec3::zeros(), std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        assert_relative_eq!(q.dir_to_world(&Vec3::x()).y, 1.0, epsilon = 1e-12);
    }
}
