//! Detector stub of the stack under test: ground removal, grid clustering,
//! greedy scoring against ground truth, and the synthetic road-water phantom.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lidar::{PointCloud, Provenance};
use crate::scene::Pose3;
use crate::worldsim::WeatherParams;
use crate::{Result, Vec3};

/// Height of the drivable surface under a world position.
pub trait Terrain {
    fn ground_z(&self, x: f64, y: f64) -> f64;
}

/// Flat ground at a fixed height.
impl Terrain for f64 {
    fn ground_z(&self, _x: f64, _y: f64) -> f64 {
        *self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub cell: f64,
    pub min_cluster_size: usize,
    pub match_radius: f64,
    pub ground_epsilon: f64,
    /// Truth actors farther than this from the sensor are not expected.
    pub detection_range: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            cell: 0.5,
            min_cluster_size: 5,
            match_radius: 2.5,
            ground_epsilon: 0.3,
            detection_range: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Centre of the axis-aligned box, world frame.
    pub center: Vec3,
    /// Full box size.
    pub extent: Vec3,
    pub point_count: usize,
    /// Points whose peak came from fog backscatter.
    pub fog_points: usize,
    /// Hard points on world actors.
    pub actor_points: usize,
    /// Injected by the road-water model rather than clustered.
    #[serde(default)]
    pub synthetic: bool,
}

impl Detection {
    /// Only static scenery, which the scorer neither rewards nor penalises.
    pub fn is_static(&self) -> bool {
        !self.synthetic && self.fog_points == 0 && self.actor_points == 0
    }

    pub fn min(&self) -> Vec3 {
        self.center - self.extent * 0.5
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.extent * 0.5
    }
}

/// Ground-truth footprint of one actor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthActor {
    pub actor_id: u32,
    /// Footprint centre at ground level.
    pub center: Vec3,
    pub yaw: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl TruthActor {
    /// Horizontal distance from `p` to the footprint, zero inside it.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        let u = (c * dx + s * dy).abs() - self.half_length;
        let v = (-s * dx + c * dy).abs() - self.half_width;
        u.max(0.0).hypot(v.max(0.0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Index into the detection list and the matched actor.
    pub matches: Vec<(usize, u32)>,
    /// False positives whose points include fog backscatter.
    pub fog_false_positives: usize,
}

type Cell = (i64, i64, i64);

/// Grid clustering of non-ground points into axis-aligned detections.
pub fn cluster(cloud: &PointCloud, cfg: &PerceptionConfig, terrain: &dyn Terrain) -> Vec<Detection> {
    let mut cells: BTreeMap<Cell, Vec<(Vec3, Provenance)>> = BTreeMap::new();
    for (w, p) in cloud.world_points() {
        if w.z - terrain.ground_z(w.x, w.y) < cfg.ground_epsilon {
            continue;
        }
        let key = (
            (w.x / cfg.cell).floor() as i64,
            (w.y / cfg.cell).floor() as i64,
            (w.z / cfg.cell).floor() as i64,
        );
        cells.entry(key).or_default().push((w, p.provenance));
    }

    let mut seen: BTreeSet<Cell> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in cells.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(c) = queue.pop_front() {
            members.push(c);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let n = (c.0 + dx, c.1 + dy, c.2 + dz);
                        if cells.contains_key(&n) && seen.insert(n) {
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        let count: usize = members.iter().map(|c| cells[c].len()).sum();
        if count < cfg.min_cluster_size {
            continue;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let (mut fog, mut actor) = (0, 0);
        for c in &members {
            for (w, prov) in &cells[c] {
                lo = lo.inf(w);
                hi = hi.sup(w);
                match prov {
                    Provenance::FogNoise => fog += 1,
                    Provenance::Hard { actor_id: Some(_) } => actor += 1,
                    Provenance::Hard { actor_id: None } => {}
                }
            }
        }
        out.push(Detection {
            center: (lo + hi) * 0.5,
            extent: hi - lo,
            point_count: count,
            fog_points: fog,
            actor_points: actor,
            synthetic: false,
        });
    }
    out
}

/// Greedy matching by increasing distance, then actor id, then detection
/// centre, so the result does not depend on list order. Static detections
/// are skipped.
pub fn score(dets: &[Detection], truth: &[TruthActor], sensor: &Vec3, cfg: &PerceptionConfig) -> DetectionScore {
    let mut pairs: Vec<(f64, u32, [f64; 3], usize, usize)> = Vec::new();
    for (di, d) in dets.iter().enumerate() {
        if d.is_static() {
            continue;
        }
        for (ti, t) in truth.iter().enumerate() {
            let dist = t.distance_to(&d.center);
            if dist <= cfg.match_radius {
                pairs.push((dist, t.actor_id, [d.center.x, d.center.y, d.center.z], di, ti));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2[0].total_cmp(&b.2[0]))
            .then(a.2[1].total_cmp(&b.2[1]))
            .then(a.2[2].total_cmp(&b.2[2]))
    });

    let in_range = |t: &TruthActor| {
        (t.center.x - sensor.x).hypot(t.center.y - sensor.y) <= cfg.detection_range
    };
    let mut det_used = vec![false; dets.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut s = DetectionScore::default();
    for (_, id, _, di, ti) in pairs {
        if det_used[di] || truth_used[ti] {
            continue;
        }
        det_used[di] = true;
        truth_used[ti] = true;
        s.matches.push((di, id));
        if in_range(&truth[ti]) {
            s.true_positives += 1;
        }
    }
    s.matches.sort_unstable();
    for (di, d) in dets.iter().enumerate() {
        if !det_used[di] && !d.is_static() {
            s.false_positives += 1;
            if d.fog_points > 0 {
                s.fog_false_positives += 1;
            }
        }
    }
    s.false_negatives = truth
        .iter()
        .zip(&truth_used)
        .filter(|(t, used)| !**used && in_range(t))
        .count();
    s
}

/// Injection probability of the road-water phantom.
pub fn phantom_probability(weather: &WeatherParams) -> f64 {
    let night = if weather.sun_altitude < 0.0 { 1.0 } else { 0.2 };
    (weather.road_water * night).clamp(0.0, 1.0)
}

/// Independent stream per (scenario seed, frame), so the phantom sequence is
/// the same however frames are scheduled.
pub fn phantom_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7761_7465_725f_6670);
    rng.set_stream(frame);
    rng
}

/// Synthetic reflection off standing water: with the weather-dependent
/// probability, one phantom obstacle 8 to 15 m ahead of the ego.
pub fn road_water_false_positive<R: Rng>(
    weather: &WeatherParams,
    ego: &Pose3,
    terrain: &dyn Terrain,
    cfg: &PerceptionConfig,
    rng: &mut R,
) -> Option<Detection> {
    let u: f64 = rng.gen();
    if u >= phantom_probability(weather) {
        return None;
    }
    let ahead = rng.gen_range(8.0..=15.0);
    let (s, c) = ego.yaw.sin_cos();
    let x = ego.position.x + c * ahead;
    let y = ego.position.y + s * ahead;
    let z = terrain.ground_z(x, y) + 0.6;
    Some(Detection {
        center: Vec3::new(x, y, z),
        extent: Vec3::new(1.2, 1.2, 0.8),
        point_count: cfg.min_cluster_size,
        fog_points: 0,
        actor_points: 0,
        synthetic: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub center: Vec3,
    pub extent: Vec3,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionLogEntry {
    pub frame: u64,
    pub detections: Vec<DetectionRecord>,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub fn write_detection_log<W: Write>(entry: &DetectionLogEntry, mut w: W) -> Result<()> {
    serde_json::to_writer(&mut w, entry)?;
    w.write_all(b"\n")?;
    Ok(())
}

impl DetectionLogEntry {
    pub fn new(frame: u64, dets: &[Detection], s: &DetectionScore) -> Self {
        Self {
            frame,
            detections: dets
                .iter()
                .map(|d| DetectionRecord {
                    center: d.center,
                    extent: d.extent,
                    points: d.point_count,
                })
                .collect(),
            fp: s.false_positives,
            fn_: s.false_negatives,
        }
    }
}
