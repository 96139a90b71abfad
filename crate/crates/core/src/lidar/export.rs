//! ASCII PLY and CSV writers for clouds and pulse curves.

use std::io::Write;

use super::{PointCloud, PulseResponse};
use crate::{Error, Result};

pub fn write_ply<W: Write>(cloud: &PointCloud, mut w: W) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment frame {}", cloud.frame)?;
    writeln!(w, "element vertex {}", cloud.points.len())?;
    for name in ["x", "y", "z", "intensity"] {
        writeln!(w, "property double {name}")?;
    }
    writeln!(w, "property uint channel")?;
    writeln!(w, "property uchar provenance")?;
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        writeln!(
            w,
            "{} {} {} {:e} {} {}",
            p.position.x,
            p.position.y,
            p.position.z,
            p.intensity,
            p.channel,
            p.provenance.code()
        )?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(cloud: &PointCloud, mut w: W) -> Result<()> {
    writeln!(w, "x,y,z,intensity,channel,provenance")?;
    for p in &cloud.points {
        writeln!(
            w,
            "{},{},{},{:e},{},{}",
            p.position.x,
            p.position.y,
            p.position.z,
            p.intensity,
            p.channel,
            p.provenance.code()
        )?;
    }
    Ok(())
}

/// Debug dump of one beam's curves: `R, P_hard, P_soft, P_total`.
pub fn write_pulse_csv<W: Write>(hard: &PulseResponse, soft: &PulseResponse, mut w: W) -> Result<()> {
    if hard.samples.len() != soft.samples.len() {
        return Err(Error::input("pulse responses are sampled on different grids"));
    }
    writeln!(w, "r,p_hard,p_soft,p_total")?;
    for (h, s) in hard.samples.iter().zip(&soft.samples) {
        writeln!(w, "{},{:e},{:e},{:e}", h.0, h.1, s.1, h.1 + s.1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lidar::{LidarPoint, Provenance};
    use crate::scene::Pose3;
    use crate::Vec3;

    #[test]
    fn ply_header_and_rows() {
        let cloud = PointCloud {
            points: vec![LidarPoint {
                position: Vec3::new(1.0, 2.0, 3.0),
                intensity: 0.5,
                channel: 4,
                azimuth: 0.0,
                provenance: Provenance::FogNoise,
                true_range: None,
            }],
            frame: 7,
            sensor_pose: Pose3::at(0.0, 0.0, 0.0),
        };
        let mut buf = Vec::new();
        write_ply(&cloud, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("element vertex 1"));
        assert!(text.contains("property uchar provenance"));
        assert!(text.trim_end().ends_with("1 2 3 5e-1 4 1"));

        let mut buf = Vec::new();
        write_csv(&cloud, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x,y,z,intensity,channel,provenance\n1,2,3,5e-1,4,1\n"
        );
    }
}
