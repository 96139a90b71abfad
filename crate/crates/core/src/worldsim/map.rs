//! Hand-authored lane graphs with their static geometry.

use std::collections::HashMap;
use std::sync::OnceLock;

use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::perception::Terrain;
use crate::scene::{Aabb, Pose, Primitive, Shape};
use crate::{Error, Result, Vec3};

pub const LANE_OFFSET: f64 = 1.75;
pub const ROAD_REFLECTIVITY: f64 = 0.4;
pub const WALL_REFLECTIVITY: f64 = 0.5;
pub const SLOPE_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapId {
    FlatJunction,
    TunnelApproach,
    Slope,
    WallCorridor,
}

impl MapId {
    pub const ALL: [MapId; 4] = [
        MapId::FlatJunction,
        MapId::TunnelApproach,
        MapId::Slope,
        MapId::WallCorridor,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MapId::FlatJunction => "flat-junction",
            MapId::TunnelApproach => "tunnel-approach",
            MapId::Slope => "slope",
            MapId::WallCorridor => "wall-corridor",
        }
    }

    pub fn map(&self) -> &'static Map {
        static MAPS: OnceLock<HashMap<MapId, Map>> = OnceLock::new();
        &MAPS.get_or_init(|| MapId::ALL.iter().map(|id| (*id, Map::build(*id))).collect())[self]
    }
}

impl std::str::FromStr for MapId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MapId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::input(format!("unknown map '{s}'")))
    }
}

/// Ground height model of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerrainModel {
    Flat,
    /// Flat at z = 0 up to `x0`, a constant grade over `run`, then a plateau.
    Ramp { x0: f64, run: f64, rise: f64 },
}

impl TerrainModel {
    pub fn height(&self, x: f64) -> f64 {
        match *self {
            TerrainModel::Flat => 0.0,
            TerrainModel::Ramp { x0, run, rise } => ((x - x0) / run).clamp(0.0, 1.0) * rise,
        }
    }
}

impl Terrain for TerrainModel {
    fn ground_z(&self, x: f64, _y: f64) -> f64 {
        self.height(x)
    }
}

#[derive(Debug, Clone)]
struct Edge {
    points: Vec<(f64, f64)>,
    length: f64,
}

/// Polyline with cumulative arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub points: Vec<(f64, f64)>,
    cum: Vec<f64>,
}

impl Route {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().map_or(true, |q| (q.0 - p.0).hypot(q.1 - p.1) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return Err(Error::input("route needs at least two distinct points"));
        }
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let l = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            cum.push(cum.last().unwrap() + l);
        }
        Ok(Self { points: pts, cum })
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn segment(&self, s: f64) -> usize {
        let i = self.cum.partition_point(|&c| c <= s);
        i.clamp(1, self.points.len() - 1) - 1
    }

    /// Position and heading at arc length `s`, extrapolated past either end.
    pub fn at(&self, s: f64) -> (f64, f64, f64) {
        let i = self.segment(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let len = self.cum[i + 1] - self.cum[i];
        let u = (s - self.cum[i]) / len;
        let heading = (b.1 - a.1).atan2(b.0 - a.0);
        (a.0 + u * (b.0 - a.0), a.1 + u * (b.1 - a.1), heading)
    }

    /// Arc length of the closest point and the distance to it, searching the
    /// whole polyline.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        self.project_window(x, y, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Like [`Route::project`] but only over arc lengths in `[s_lo, s_hi]`.
    pub fn project_window(&self, x: f64, y: f64, s_lo: f64, s_hi: f64) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for i in 0..self.points.len() - 1 {
            if self.cum[i + 1] < s_lo || self.cum[i] > s_hi {
                continue;
            }
            let (a, b) = (self.points[i], self.points[i + 1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            let u = (((x - a.0) * dx + (y - a.1) * dy) / len2).clamp(0.0, 1.0);
            let (px, py) = (a.0 + u * dx, a.1 + u * dy);
            let d = (x - px).hypot(y - py);
            if d < best.1 {
                best = (self.cum[i] + u * len2.sqrt(), d);
            }
        }
        best
    }

    /// Signed lateral offset of a point, positive to the left.
    pub fn lateral(&self, s: f64, x: f64, y: f64) -> f64 {
        let (px, py, h) = self.at(s);
        -(x - px) * h.sin() + (y - py) * h.cos()
    }
}

#[derive(Debug, Clone)]
pub struct Map {
    pub id: MapId,
    pub statics: Vec<Primitive>,
    pub terrain: TerrainModel,
    pub bounds: Aabb,
    names: Vec<String>,
    positions: Vec<(f64, f64)>,
    index: HashMap<String, NodeIndex>,
    graph: DiGraph<usize, Edge>,
    ego_starts: Vec<String>,
    ego_ends: Vec<String>,
}

impl Map {
    fn new(id: MapId, terrain: TerrainModel, bounds: Aabb) -> Self {
        Self {
            id,
            statics: Vec::new(),
            terrain,
            bounds,
            names: Vec::new(),
            positions: Vec::new(),
            index: HashMap::new(),
            graph: DiGraph::new(),
            ego_starts: Vec::new(),
            ego_ends: Vec::new(),
        }
    }

    fn node(&mut self, name: &str, x: f64, y: f64) {
        let i = self.names.len();
        self.names.push(name.to_string());
        self.positions.push((x, y));
        let n = self.graph.add_node(i);
        self.index.insert(name.to_string(), n);
    }

    fn edge_via(&mut self, from: &str, to: &str, via: &[(f64, f64)]) {
        let a = self.index[from];
        let b = self.index[to];
        let mut points = vec![self.positions[self.graph[a]]];
        points.extend_from_slice(via);
        points.push(self.positions[self.graph[b]]);
        let length = points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .sum();
        self.graph.add_edge(a, b, Edge { points, length });
    }

    fn edge(&mut self, from: &str, to: &str) {
        self.edge_via(from, to, &[]);
    }

    fn chain(&mut self, names: &[&str]) {
        for w in names.windows(2) {
            self.edge(w[0], w[1]);
        }
    }

    fn wall(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, height: f64) {
        let p = Primitive::new(
            Shape::AxisBox {
                half_extents: Vec3::new(0.5 * (x1 - x0), 0.5 * (y1 - y0), 0.5 * height),
            },
            Pose::new(0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.0, 0.0),
            WALL_REFLECTIVITY,
            None,
        )
        .expect("static wall");
        self.statics.push(p);
    }

    fn build(id: MapId) -> Map {
        let mut m = match id {
            MapId::FlatJunction => Self::flat_junction(),
            MapId::TunnelApproach => Self::tunnel_approach(),
            MapId::Slope => Self::slope(),
            MapId::WallCorridor => Self::wall_corridor(),
        };
        if !matches!(m.terrain, TerrainModel::Ramp { .. }) {
            m.statics.insert(
                0,
                Primitive::new(Shape::GroundPlane, Pose::new(0.0, 0.0, 0.0, 0.0), ROAD_REFLECTIVITY, None)
                    .expect("ground"),
            );
        }
        m
    }

    fn flat_junction() -> Map {
        let mut m = Map::new(
            MapId::FlatJunction,
            TerrainModel::Flat,
            Aabb::new(Vec3::new(-130.0, -130.0, -5.0), Vec3::new(130.0, 130.0, 40.0)),
        );
        let arms = [("east", 1.0, 0.0), ("north", 0.0, 1.0), ("west", -1.0, 0.0), ("south", 0.0, -1.0)];
        for (name, dx, dy) in arms {
            let (px, py) = (-dy, dx);
            let at = |d: f64, side: f64| (d * dx + side * LANE_OFFSET * px, d * dy + side * LANE_OFFSET * py);
            for (node, d, side) in [
                ("in_start", 80.0, 1.0),
                ("in_mid", 40.0, 1.0),
                ("in_stop", 8.0, 1.0),
                ("out_start", 8.0, -1.0),
                ("out_mid", 40.0, -1.0),
                ("out_end", 78.0, -1.0),
            ] {
                let (x, y) = at(d, side);
                m.node(&format!("{name}.{node}"), x, y);
            }
            m.chain(&[&format!("{name}.in_start"), &format!("{name}.in_mid"), &format!("{name}.in_stop")]);
            m.chain(&[&format!("{name}.out_start"), &format!("{name}.out_mid"), &format!("{name}.out_end")]);
        }
        for (a, adx, ady) in arms {
            for (b, bdx, bdy) in arms {
                if a == b {
                    continue;
                }
                let from = format!("{a}.in_stop");
                let to = format!("{b}.out_start");
                let p0 = m.positions[m.graph[m.index[&from]]];
                let p2 = m.positions[m.graph[m.index[&to]]];
                // Quadratic Bezier through the crossing of the two lane lines.
                let det = -adx * bdy + ady * bdx;
                let via: Vec<(f64, f64)> = if det.abs() < 1e-9 {
                    Vec::new()
                } else {
                    let (rx, ry) = (p2.0 - p0.0, p2.1 - p0.1);
                    let t = (rx * bdy - ry * bdx) / -det;
                    let c = (p0.0 - adx * t, p0.1 - ady * t);
                    (1..8)
                        .map(|k| {
                            let u = k as f64 / 8.0;
                            let w0 = (1.0 - u) * (1.0 - u);
                            let w1 = 2.0 * u * (1.0 - u);
                            let w2 = u * u;
                            (
                                w0 * p0.0 + w1 * c.0 + w2 * p2.0,
                                w0 * p0.1 + w1 * c.1 + w2 * p2.1,
                            )
                        })
                        .collect()
                };
                m.edge_via(&from, &to, &via);
            }
        }
        for (a, ..) in arms {
            for start in ["in_start", "in_mid"] {
                m.ego_starts.push(format!("{a}.{start}"));
            }
            for end in ["out_mid", "out_end"] {
                m.ego_ends.push(format!("{a}.{end}"));
            }
        }
        m
    }

    fn tunnel_approach() -> Map {
        let mut m = Map::new(
            MapId::TunnelApproach,
            TerrainModel::Flat,
            Aabb::new(Vec3::new(-130.0, -60.0, -5.0), Vec3::new(130.0, 60.0, 40.0)),
        );
        for (n, x, y) in [
            ("west.start", -110.0, 0.0),
            ("west.mid", -70.0, 0.0),
            ("fork", -35.0, 0.0),
            ("portal", -6.0, 0.0),
            ("tunnel.exit", 46.0, 0.0),
            ("east.end", 90.0, 0.0),
            ("bypass.a", -15.0, 12.0),
            ("bypass.b", 15.0, 22.0),
            ("bypass.end", 60.0, 22.0),
        ] {
            m.node(n, x, y);
        }
        m.chain(&["west.start", "west.mid", "fork", "portal", "tunnel.exit", "east.end"]);
        m.chain(&["fork", "bypass.a", "bypass.b", "bypass.end"]);
        // Single-lane bore, open to the sky, with a facade around the portal.
        m.wall(0.0, 40.0, 1.35, 3.35, 5.0);
        m.wall(0.0, 40.0, -3.35, -1.35, 5.0);
        m.wall(0.0, 2.0, 3.35, 8.0, 5.0);
        m.wall(0.0, 2.0, -8.0, -3.35, 5.0);
        m.ego_starts = vec!["west.start".into(), "west.mid".into()];
        m.ego_ends = vec![
            "tunnel.exit".into(),
            "east.end".into(),
            "bypass.b".into(),
            "bypass.end".into(),
        ];
        m
    }

    fn slope() -> Map {
        let run = 40.0;
        let rise = run * SLOPE_DEG.to_radians().tan();
        let mut m = Map::new(
            MapId::Slope,
            TerrainModel::Ramp { x0: 0.0, run, rise },
            Aabb::new(Vec3::new(-130.0, -60.0, -5.0), Vec3::new(130.0, 60.0, 40.0)),
        );
        for (n, x) in [
            ("base.start", -100.0),
            ("base.mid", -50.0),
            ("ramp.foot", 0.0),
            ("ramp.mid", 20.0),
            ("crest", 40.0),
            ("top.mid", 70.0),
            ("top.end", 110.0),
        ] {
            m.node(n, x, 0.0);
        }
        m.chain(&["base.start", "base.mid", "ramp.foot", "ramp.mid", "crest", "top.mid", "top.end"]);
        let ground = |shape, pose| Primitive::new(shape, pose, ROAD_REFLECTIVITY, None).expect("terrain");
        m.statics.push(ground(Shape::GroundPlane, Pose::new(0.0, 0.0, 0.0, 0.0)));
        m.statics.push(ground(
            Shape::Ramp {
                run,
                width: 20.0,
                rise,
            },
            Pose::new(0.0, 0.0, 0.0, 0.0),
        ));
        m.statics.push(ground(
            Shape::AxisBox {
                half_extents: Vec3::new(40.0, 10.0, 0.5 * rise),
            },
            Pose::new(run + 40.0, 0.0, 0.0, 0.0),
        ));
        m.ego_starts = vec!["base.start".into(), "base.mid".into()];
        m.ego_ends = vec!["crest".into(), "top.mid".into(), "top.end".into()];
        m
    }

    fn wall_corridor() -> Map {
        let mut m = Map::new(
            MapId::WallCorridor,
            TerrainModel::Flat,
            Aabb::new(Vec3::new(-130.0, -60.0, -5.0), Vec3::new(130.0, 60.0, 40.0)),
        );
        for (n, x) in [
            ("west.start", -100.0),
            ("west.mid", -50.0),
            ("mid", 0.0),
            ("east.mid", 50.0),
            ("east.end", 100.0),
        ] {
            m.node(n, x, 0.0);
        }
        for (n, x) in [
            ("back.start", 100.0),
            ("back.mid", 50.0),
            ("back.center", 0.0),
            ("back.west", -50.0),
            ("back.end", -100.0),
        ] {
            m.node(n, x, 2.0 * LANE_OFFSET);
        }
        m.chain(&["west.start", "west.mid", "mid", "east.mid", "east.end"]);
        m.chain(&["back.start", "back.mid", "back.center", "back.west", "back.end"]);
        // Building frontage four metres to the right of the eastbound lane.
        m.wall(-60.0, 60.0, -8.0, -4.0, 8.0);
        m.ego_starts = vec!["west.start".into(), "west.mid".into(), "back.start".into(), "back.mid".into()];
        m.ego_ends = vec!["east.mid".into(), "east.end".into(), "back.west".into(), "back.end".into()];
        m
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn node_names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn position(&self, name: &str) -> Option<(f64, f64)> {
        self.index.get(name).map(|n| self.positions[self.graph[*n]])
    }

    fn path(&self, start: &str, end: &str) -> Result<Vec<NodeIndex>> {
        let (Some(&a), Some(&b)) = (self.index.get(start), self.index.get(end)) else {
            return Err(Error::input(format!(
                "waypoint {start} or {end} is not on map {}",
                self.id.name()
            )));
        };
        if a == b {
            return Err(Error::input("route start and end coincide"));
        }
        petgraph::algo::astar(&self.graph, a, |n| n == b, |e| e.weight().length, |_| 0.0)
            .map(|(_, path)| path)
            .ok_or_else(|| Error::input(format!("no lane route from {start} to {end}")))
    }

    /// Shortest lane-graph route between two nodes.
    pub fn route(&self, start: &str, end: &str) -> Result<Route> {
        let path = self.path(start, end)?;
        let mut points: Vec<(f64, f64)> = Vec::new();
        for w in path.windows(2) {
            let e = self.graph.find_edge(w[0], w[1]).expect("edge on path");
            points.extend_from_slice(&self.graph[e].points);
        }
        Route::new(points)
    }

    /// Node names along the shortest route, both ends included.
    pub fn route_nodes(&self, start: &str, end: &str) -> Result<Vec<String>> {
        Ok(self
            .path(start, end)?
            .into_iter()
            .map(|n| self.names[self.graph[n]].clone())
            .collect())
    }

    /// Ego (start, end) pairs with a route, in a fixed order.
    pub fn ego_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for s in &self.ego_starts {
            for e in &self.ego_ends {
                if self.route(s, e).is_ok() {
                    out.push((s.clone(), e.clone()));
                }
            }
        }
        out
    }

    /// Every node pair with a route of at least `min_len` metres.
    pub fn routable_pairs(&self, min_len: f64) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for s in &self.names {
            for e in &self.names {
                if s != e && self.route(s, e).is_ok_and(|r| r.length() >= min_len) {
                    out.push((s.clone(), e.clone()));
                }
            }
        }
        out
    }

    /// Pitch of a vehicle with the given heading, from the terrain under its axles.
    pub fn pitch_at(&self, x: f64, y: f64, yaw: f64, wheelbase: f64) -> f64 {
        let (s, c) = yaw.sin_cos();
        let h = 0.5 * wheelbase;
        let zf = self.terrain.ground_z(x + c * h, y + s * h);
        let zr = self.terrain.ground_z(x - c * h, y - s * h);
        (zf - zr).atan2(wheelbase)
    }
}
