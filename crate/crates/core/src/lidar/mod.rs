//! Pulse-level LiDAR model: beam layout, hard and fog returns, peak picking
//! and full scans.

mod export;
mod pulse;
mod scan;

use serde::{Deserialize, Serialize};

use crate::scene::Pose3;
use crate::{Error, Result, Vec3, SPEED_OF_LIGHT};

pub use export::{write_csv, write_ply, write_pulse_csv};
pub use pulse::{
    crossover, hard_response, select_return, soft_at, soft_response, total_response, Echo,
    PulseResponse, QUAD_MIN_PANELS, QUAD_PANELS_PER_PULSE,
};
pub use scan::{LidarPoint, Lidar, PointCloud, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub channels: usize,
    /// Lowest and highest beam elevation, degrees.
    pub vertical_fov: [f64; 2],
    /// Azimuth step, degrees.
    pub horizontal_resolution: f64,
    /// Mount pose relative to the ego body frame (bottom centre of the car).
    pub mount: Pose3,
    pub p0: f64,
    /// Half-power pulse width, seconds.
    pub tau_h: f64,
    pub c_a: f64,
    pub max_range: f64,
    pub range_bin: f64,
    pub near_field: f64,
    /// Report the raw argmax instead of subtracting half the pulse length.
    #[serde(default)]
    pub raw_argmax: bool,
    /// Receiver floor relative to `c_a * p0`.
    #[serde(default = "default_noise_floor")]
    pub noise_floor_rel: f64,
}

fn default_noise_floor() -> f64 {
    1e-9
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            vertical_fov: [-25.0, 2.0],
            horizontal_resolution: 1.5,
            mount: Pose3::at(0.0, 0.0, 1.9),
            p0: 1.0,
            tau_h: 20e-9,
            c_a: 1.0,
            max_range: 80.0,
            range_bin: 0.1,
            near_field: 1.0,
            raw_argmax: false,
            noise_floor_rel: default_noise_floor(),
        }
    }
}

/// One emitted beam in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub channel: usize,
    pub azimuth: f64,
    pub elevation: f64,
    pub dir: Vec3,
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("lidar needs at least one channel"));
        }
        if !(self.tau_h > 0.0) {
            return Err(Error::config("tau_h must be positive"));
        }
        if !(self.range_bin > 0.0) {
            return Err(Error::config("range_bin must be positive"));
        }
        if self.range_bin > self.pulse_length() / 10.0 {
            return Err(Error::config(format!(
                "range_bin {} m does not resolve the {:.3} m pulse",
                self.range_bin,
                self.pulse_length()
            )));
        }
        let steps = 360.0 / self.horizontal_resolution;
        if !(self.horizontal_resolution > 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::config("horizontal_resolution must divide 360"));
        }
        if !(self.max_range > 0.0) || !(self.near_field > 0.0) {
            return Err(Error::config("max_range and near_field must be positive"));
        }
        if self.vertical_fov[0] > self.vertical_fov[1] {
            return Err(Error::config("vertical_fov must be [min, max]"));
        }
        if !(self.p0 > 0.0) || !(self.c_a > 0.0) || !(self.noise_floor_rel > 0.0) {
            return Err(Error::config("p0, c_a and noise_floor_rel must be positive"));
        }
        Ok(())
    }

    /// c * tau_H: the spatial length of the pulse window.
    pub fn pulse_length(&self) -> f64 {
        SPEED_OF_LIGHT * self.tau_h
    }

    pub fn azimuth_steps(&self) -> usize {
        (360.0 / self.horizontal_resolution).round() as usize
    }

    pub fn ray_count(&self) -> usize {
        self.channels * self.azimuth_steps()
    }

    pub fn noise_floor(&self) -> f64 {
        self.noise_floor_rel * self.c_a * self.p0
    }

    /// Sampling grid of the response curves: multiples of `range_bin` out to
    /// `max_range` plus one pulse length.
    pub fn range_grid(&self) -> Vec<f64> {
        let n = ((self.max_range + self.pulse_length()) / self.range_bin).ceil() as usize;
        (1..=n).map(|k| k as f64 * self.range_bin).collect()
    }

    pub fn elevations(&self) -> Vec<f64> {
        let [lo, hi] = self.vertical_fov;
        if self.channels == 1 {
            return vec![0.5 * (lo + hi)];
        }
        let step = (hi - lo) / (self.channels - 1) as f64;
        (0..self.channels).map(|c| lo + step * c as f64).collect()
    }

    /// All beams, azimuth-major, channel order within each azimuth.
    pub fn emit_directions(&self) -> Vec<Beam> {
        let elev = self.elevations();
        let mut out = Vec::with_capacity(self.ray_count());
        for k in 0..self.azimuth_steps() {
            let az = k as f64 * self.horizontal_resolution;
            let (sa, ca) = az.to_radians().sin_cos();
            for (channel, &e) in elev.iter().enumerate() {
                let (se, ce) = e.to_radians().sin_cos();
                out.push(Beam {
                    channel,
                    azimuth: az,
                    elevation: e,
                    dir: Vec3::new(ce * ca, ce * sa, se),
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beam_counts_and_elevations() {
        let cfg = LidarConfig {
            channels: 1,
            vertical_fov: [0.0, 0.0],
            horizontal_resolution: 90.0,
            ..Default::default()
        };
        let b = cfg.emit_directions();
        assert_eq!(b.len(), 4);
        assert!((b[1].dir - Vec3::y()).norm() < 1e-12);
        assert_eq!(b[3].azimuth, 270.0);

        let cfg = LidarConfig {
            channels: 32,
            horizontal_resolution: 0.2,
            ..Default::default()
        };
        assert_eq!(cfg.emit_directions().len(), 57_600);

        let cfg = LidarConfig {
            channels: 2,
            vertical_fov: [-10.0, 10.0],
            ..Default::default()
        };
        assert_eq!(cfg.elevations(), vec![-10.0, 10.0]);
    }

    #[test]
    fn config_validation() {
        assert!(LidarConfig::default().validate().is_ok());
        let bad = LidarConfig {
            horizontal_resolution: 7.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let coarse = LidarConfig {
            range_bin: 1.0,
            ..Default::default()
        };
        assert!(coarse.validate().is_err());
        let none = LidarConfig {
            channels: 0,
            ..Default::default()
        };
        assert!(none.validate().is_err());
    }
}
