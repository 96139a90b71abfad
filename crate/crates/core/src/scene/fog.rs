//! Fog attenuation fields, ray path sums and the FOGV voxel file format.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Aabb;
use crate::{Error, Result, Vec3};

/// Default backscatter scale: beta = BETA_OF_MOR / MOR.
pub const DEFAULT_BETA_OF_MOR: f64 = 0.046;

const FOGV_MAGIC: &[u8; 4] = b"FOGV";

/// Attenuation coefficient (1/m) whose meteorological optical range is `mor`.
/// An infinite MOR maps to clear air.
pub fn alpha_from_mor(mor: f64) -> f64 {
    if mor.is_infinite() {
        0.0
    } else {
        20f64.ln() / mor
    }
}

pub fn mor_from_alpha(alpha: f64) -> f64 {
    if alpha > 0.0 {
        20f64.ln() / alpha
    } else {
        f64::INFINITY
    }
}

/// Regular grid of attenuation coefficients, stored x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub dr: f64,
    pub alphas: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], origin: Vec3, dr: f64, alphas: Vec<f64>) -> Result<Self> {
        let g = Self {
            dims,
            origin,
            dr,
            alphas,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn filled(dims: [usize; 3], origin: Vec3, dr: f64, alpha: f64) -> Result<Self> {
        Self::new(dims, origin, dr, vec![alpha; dims[0] * dims[1] * dims[2]])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dr > 0.0) || !self.dr.is_finite() {
            return Err(Error::input(format!("voxel edge {} must be positive", self.dr)));
        }
        let n = self.dims.iter().product::<usize>();
        if n == 0 || n != self.alphas.len() {
            return Err(Error::input(format!(
                "voxel grid {:?} needs {} values, got {}",
                self.dims,
                n,
                self.alphas.len()
            )));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::input("voxel alpha values must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.alphas[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, alpha: f64) {
        let idx = self.index(i, j, k);
        self.alphas[idx] = alpha;
    }

    pub fn extent(&self) -> Aabb {
        let size = Vec3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.dr;
        Aabb::new(self.origin, self.origin + size)
    }

    /// Piecewise-constant alpha along `origin + t * dir` for t in [0, t_end].
    /// Voxel faces hit exactly by the ray count towards the voxel on the
    /// positive side of each axis.
    pub fn traverse(&self, origin: &Vec3, dir: &Vec3, t_end: f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let Some((t_in, t_out)) = self.extent().clip(origin, dir) else {
            return out;
        };
        let t_lo = t_in.max(0.0);
        let t_hi = t_out.min(t_end);
        if t_hi <= t_lo {
            return out;
        }

        let start = origin + dir * t_lo;
        let mut cell = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let rel = (start[a] - self.origin[a]) / self.dr;
            let mut c = rel.floor() as i64;
            // Entering through the far face of the grid lands one past the end.
            c = c.clamp(0, self.dims[a] as i64 - 1);
            cell[a] = c;
            let d = dir[a];
            if d > 0.0 {
                step[a] = 1;
                let face = self.origin[a] + (c + 1) as f64 * self.dr;
                t_max[a] = t_lo + (face - start[a]) / d;
                t_delta[a] = self.dr / d;
            } else if d < 0.0 {
                step[a] = -1;
                let face = self.origin[a] + c as f64 * self.dr;
                t_max[a] = t_lo + (face - start[a]) / d;
                t_delta[a] = -self.dr / d;
            }
        }

        let mut t = t_lo;
        loop {
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            let t_next = t_max[axis].min(t_hi);
            if t_next > t {
                let alpha = self.get(cell[0] as usize, cell[1] as usize, cell[2] as usize);
                match out.last_mut() {
                    Some((_, end, a)) if *a == alpha && *end == t => *end = t_next,
                    _ => out.push((t, t_next, alpha)),
                }
                t = t_next;
            }
            if t >= t_hi {
                break;
            }
            cell[axis] += step[axis];
            if cell[axis] < 0 || cell[axis] >= self.dims[axis] as i64 {
                break;
            }
            t_max[axis] += t_delta[axis];
        }
        out
    }

    pub fn write_fogv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FOGV_MAGIC)?;
        for d in self.dims {
            let d = u32::try_from(d).map_err(|_| Error::input("voxel dims exceed u32"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in self.origin.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.dr.to_le_bytes())?;
        for a in &self.alphas {
            w.write_all(&a.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_fogv<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FOGV_MAGIC {
            return Err(Error::input("not a FOGV voxel file"));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let mut f = || -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let origin = Vec3::new(f()?, f()?, f()?);
        let dr = f()?;
        let n = dims.iter().product::<usize>();
        let mut alphas = Vec::with_capacity(n);
        for _ in 0..n {
            alphas.push(f()?);
        }
        Self::new(dims, origin, dr, alphas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FogMode {
    Homogeneous { alpha: f64 },
    Voxel(VoxelGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogField {
    #[serde(flatten)]
    pub mode: FogMode,
    pub beta_of_mor: f64,
}

impl Default for FogField {
    fn default() -> Self {
        Self::clear()
    }
}

impl FogField {
    pub fn clear() -> Self {
        Self::homogeneous(0.0)
    }

    pub fn homogeneous(alpha: f64) -> Self {
        Self {
            mode: FogMode::Homogeneous { alpha },
            beta_of_mor: DEFAULT_BETA_OF_MOR,
        }
    }

    pub fn from_mor(mor: f64) -> Self {
        Self::homogeneous(alpha_from_mor(mor))
    }

    pub fn voxel(grid: VoxelGrid) -> Self {
        Self {
            mode: FogMode::Voxel(grid),
            beta_of_mor: DEFAULT_BETA_OF_MOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_of_mor >= 0.0) || !self.beta_of_mor.is_finite() {
            return Err(Error::input("beta_of_mor must be finite and >= 0"));
        }
        match &self.mode {
            FogMode::Homogeneous { alpha } => {
                if !(*alpha >= 0.0) || !alpha.is_finite() {
                    return Err(Error::input(format!("fog alpha {alpha} must be finite and >= 0")));
                }
                Ok(())
            }
            FogMode::Voxel(g) => g.validate(),
        }
    }

    pub fn is_clear(&self) -> bool {
        match &self.mode {
            FogMode::Homogeneous { alpha } => *alpha == 0.0,
            FogMode::Voxel(g) => g.alphas.iter().all(|a| *a == 0.0),
        }
    }

    /// Backscatter coefficient for a local attenuation value.
    pub fn beta_of_alpha(&self, alpha: f64) -> f64 {
        self.beta_of_mor * alpha / 20f64.ln()
    }

    /// Attenuation and backscatter along a ray, out to `t_end`.
    pub fn profile(&self, origin: &Vec3, dir: &Vec3, t_end: f64) -> FogProfile {
        let k = self.beta_of_alpha(1.0);
        match &self.mode {
            FogMode::Homogeneous { alpha } => FogProfile::homogeneous(*alpha, k),
            FogMode::Voxel(g) => FogProfile::from_segments(&g.traverse(origin, dir, t_end), k),
        }
    }

    pub fn header(&self) -> FogHeader {
        match &self.mode {
            FogMode::Homogeneous { alpha } => FogHeader {
                mode: "homogeneous".into(),
                alpha: Some(*alpha),
                mor: Some(mor_from_alpha(*alpha)).filter(|m| m.is_finite()),
                dims: None,
                origin: None,
                dr: None,
                beta_of_mor: self.beta_of_mor,
            },
            FogMode::Voxel(g) => FogHeader {
                mode: "voxel".into(),
                alpha: None,
                mor: None,
                dims: Some(g.dims),
                origin: Some(g.origin),
                dr: Some(g.dr),
                beta_of_mor: self.beta_of_mor,
            },
        }
    }
}

/// Fog description without the voxel payload, used by scene snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogHeader {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec3>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dr: Option<f64>,
    pub beta_of_mor: f64,
}

/// Result of integrating attenuation along a ray. `dr * sum_alpha` is the
/// one-way optical depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathAttenuation {
    pub sum_alpha: f64,
    pub dr: f64,
    /// The requested range ran past the world bounds and was shortened.
    pub clamped: bool,
}

impl PathAttenuation {
    pub fn optical_depth(&self) -> f64 {
        self.dr * self.sum_alpha
    }

    /// One-way transmission T(R).
    pub fn transmission(&self) -> f64 {
        (-self.optical_depth()).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    start: f64,
    end: f64,
    alpha: f64,
    tau_start: f64,
}

/// Piecewise-constant attenuation along one ray with cumulative optical
/// depth, starting at the sensor. Beyond the last segment the air is clear.
#[derive(Debug, Clone, PartialEq)]
pub struct FogProfile {
    segs: Vec<Segment>,
    beta_per_alpha: f64,
}

impl FogProfile {
    pub fn homogeneous(alpha: f64, beta_per_alpha: f64) -> Self {
        let segs = if alpha > 0.0 {
            vec![Segment {
                start: 0.0,
                end: f64::INFINITY,
                alpha,
                tau_start: 0.0,
            }]
        } else {
            Vec::new()
        };
        Self {
            segs,
            beta_per_alpha,
        }
    }

    /// Build from `(start, end, alpha)` runs sorted by start.
    pub fn from_segments(runs: &[(f64, f64, f64)], beta_per_alpha: f64) -> Self {
        let mut segs = Vec::with_capacity(runs.len());
        let mut tau = 0.0;
        for &(start, end, alpha) in runs {
            if alpha == 0.0 || end <= start {
                continue;
            }
            segs.push(Segment {
                start,
                end,
                alpha,
                tau_start: tau,
            });
            tau += alpha * (end - start);
        }
        Self {
            segs,
            beta_per_alpha,
        }
    }

    pub fn is_clear(&self) -> bool {
        self.segs.is_empty() || self.beta_per_alpha == 0.0
    }

    /// Homogeneous attenuation, if the whole ray sees one constant value.
    pub fn uniform_alpha(&self) -> Option<f64> {
        match self.segs.as_slice() {
            [] => Some(0.0),
            [s] if s.start == 0.0 && s.end == f64::INFINITY => Some(s.alpha),
            _ => None,
        }
    }

    pub fn beta_per_alpha(&self) -> f64 {
        self.beta_per_alpha
    }

    /// Distance beyond which there is no more fog.
    pub fn fog_end(&self) -> f64 {
        self.segs.last().map_or(0.0, |s| s.end)
    }

    /// Segment boundaries, useful as quadrature breakpoints.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.segs.iter().flat_map(|s| [s.start, s.end])
    }

    fn find(&self, r: f64) -> Option<&Segment> {
        // Segment starts sort ascending; pick the last one starting at or before r.
        let i = self.segs.partition_point(|s| s.start <= r);
        let s = self.segs.get(i.checked_sub(1)?)?;
        (r < s.end).then_some(s)
    }

    pub fn alpha_at(&self, r: f64) -> f64 {
        self.find(r).map_or(0.0, |s| s.alpha)
    }

    pub fn beta_at(&self, r: f64) -> f64 {
        self.beta_per_alpha * self.alpha_at(r)
    }

    /// One-way optical depth from the sensor to distance r.
    pub fn tau_at(&self, r: f64) -> f64 {
        let i = self.segs.partition_point(|s| s.start <= r);
        match i.checked_sub(1).map(|j| &self.segs[j]) {
            None => 0.0,
            Some(s) => s.tau_start + s.alpha * (r.min(s.end) - s.start),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mor_alpha_round_trip() {
        assert_relative_eq!(mor_from_alpha(alpha_from_mor(30.0)), 30.0, epsilon = 1e-12);
        assert_eq!(alpha_from_mor(f64::INFINITY), 0.0);
        assert!(mor_from_alpha(0.0).is_infinite());
    }

    #[test]
    fn traverse_two_voxels() {
        let mut g = VoxelGrid::filled([4, 1, 1], Vec3::zeros(), 1.0, 0.0).unwrap();
        g.set(1, 0, 0, 0.1);
        g.set(2, 0, 0, 0.1);
        let segs = g.traverse(&Vec3::new(0.0, 0.5, 0.5), &Vec3::x(), 10.0);
        let depth: f64 = segs.iter().map(|(a, b, al)| (b - a) * al).sum();
        assert_relative_eq!(depth, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn grazing_face_uses_positive_side() {
        let mut g = VoxelGrid::filled([2, 2, 1], Vec3::zeros(), 1.0, 0.0).unwrap();
        g.set(0, 1, 0, 0.3);
        g.set(1, 1, 0, 0.3);
        // Ray runs exactly along the y = 1 face between the two rows.
        let segs = g.traverse(&Vec3::new(0.0, 1.0, 0.5), &Vec3::x(), 2.0);
        let depth: f64 = segs.iter().map(|(a, b, al)| (b - a) * al).sum();
        assert_relative_eq!(depth, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_traversal_is_exact_for_constant_grid() {
        let g = VoxelGrid::filled([10, 10, 10], Vec3::zeros(), 0.5, 0.2).unwrap();
        let d = Vec3::new(1.0, 0.7, 0.3).normalize();
        let segs = g.traverse(&Vec3::new(0.1, 0.2, 0.3), &d, 3.0);
        let depth: f64 = segs.iter().map(|(a, b, al)| (b - a) * al).sum();
        assert_relative_eq!(depth, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn fogv_round_trip_and_bad_magic() {
        let g = VoxelGrid::new(
            [2, 1, 2],
            Vec3::new(-1.0, 2.0, 0.5),
            0.25,
            vec![0.0, 0.1, 0.2, 0.3],
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_fogv(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 12 + 32 + 32);
        assert_eq!(&buf[..4], b"FOGV");
        assert_eq!(VoxelGrid::read_fogv(buf.as_slice()).unwrap(), g);
        buf[0] = b'X';
        assert!(VoxelGrid::read_fogv(buf.as_slice()).is_err());
    }

    #[test]
    fn profile_tau_accumulates() {
        let p = FogProfile::from_segments(&[(1.0, 2.0, 0.5), (2.0, 4.0, 0.25)], 1.0);
        assert_eq!(p.tau_at(0.5), 0.0);
        assert_relative_eq!(p.tau_at(1.5), 0.25);
        assert_relative_eq!(p.tau_at(3.0), 0.75);
        assert_relative_eq!(p.tau_at(10.0), 1.0);
        assert_eq!(p.alpha_at(4.5), 0.0);
        assert_eq!(p.alpha_at(2.0), 0.25);
    }
}
