//! NPC model catalog: footprint shape and reflectivity per model id.

use serde::{Deserialize, Serialize};

use super::{Pose, Primitive, Shape};
use crate::{Error, Result, Vec3};

const BUILTIN: &str = include_str!("../../data/catalog.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelShape {
    Box { length: f64, width: f64, height: f64 },
    Cylinder { radius: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub shape: ModelShape,
    pub reflectivity: f64,
}

impl ModelSpec {
    /// Primitive for this model standing at `pose` (bottom centre, heading yaw).
    pub fn primitive(&self, pose: Pose, actor_id: u32) -> Result<Primitive> {
        let shape = match self.shape {
            ModelShape::Box {
                length,
                width,
                height,
            } => Shape::OrientedBox {
                half_extents: Vec3::new(length, width, height) * 0.5,
            },
            ModelShape::Cylinder { radius, height } => Shape::Cylinder { radius, height },
        };
        Primitive::new(shape, pose, self.reflectivity, Some(actor_id))
    }

    /// Horizontal half-diagonal, the radius of the footprint's bounding circle.
    pub fn half_diagonal(&self) -> f64 {
        match self.shape {
            ModelShape::Box { length, width, .. } => 0.5 * length.hypot(width),
            ModelShape::Cylinder { radius, .. } => radius,
        }
    }

    pub fn length(&self) -> f64 {
        match self.shape {
            ModelShape::Box { length, .. } => length,
            ModelShape::Cylinder { radius, .. } => 2.0 * radius,
        }
    }

    pub fn height(&self) -> f64 {
        match self.shape {
            ModelShape::Box { height, .. } | ModelShape::Cylinder { height, .. } => height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub models: Vec<ModelSpec>,
    pub small_targets: Vec<String>,
    pub tall_vehicles: Vec<String>,
}

impl Catalog {
    pub fn builtin() -> &'static Catalog {
        static CATALOG: std::sync::OnceLock<Catalog> = std::sync::OnceLock::new();
        CATALOG.get_or_init(|| Catalog::from_json(BUILTIN).expect("builtin catalog is valid"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Catalog = serde_json::from_str(text)?;
        for m in &c.models {
            if !(0.0..=1.0).contains(&m.reflectivity) {
                return Err(Error::config(format!("model {} reflectivity out of range", m.id)));
            }
        }
        for id in c.small_targets.iter().chain(&c.tall_vehicles) {
            if c.get(id).is_none() {
                return Err(Error::config(format!("catalog subset names unknown model {id}")));
            }
        }
        Ok(c)
    }

    pub fn get(&self, id: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.id == id)
    }

    pub fn model(&self, id: &str) -> Result<&ModelSpec> {
        self.get(id)
            .ok_or_else(|| Error::input(format!("unknown NPC model '{id}'")))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|m| m.id.as_str())
    }
}
