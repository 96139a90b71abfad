//! Corner-case discovery by simulated annealing over scenario descriptions.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::perception::Terrain;
use crate::scene::Catalog;
use crate::worldsim::{run_direct, EgoSpec, MapId, NpcSpec, Outcome, RunStats, ScenarioConfig, SimConfig, WeatherParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SafetyFactor {
    /// A slower vehicle ahead on the ego's lane.
    F1,
    /// Standing water on the road, worst at night.
    F2,
    /// Pedestrians, bicycles, motorcycles and small cars.
    F3,
    /// Trucks and SUVs.
    F4,
    /// Sloped terrain.
    F5,
}

impl SafetyFactor {
    pub const ALL: [SafetyFactor; 5] = [Self::F1, Self::F2, Self::F3, Self::F4, Self::F5];

    pub fn name(self) -> &'static str {
        match self {
            Self::F1 => "slow-lead-vehicle",
            Self::F2 => "road-water-reflection",
            Self::F3 => "small-target",
            Self::F4 => "tall-vehicle",
            Self::F5 => "slope",
        }
    }
}

impl fmt::Display for SafetyFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SafetyFactor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| s.eq_ignore_ascii_case(&f.to_string()) || s == f.name())
            .ok_or_else(|| Error::input(format!("unknown safety factor '{s}'")))
    }
}

/// Deduplicated, sorted factor set.
pub fn factor_set(factors: &[SafetyFactor]) -> Vec<SafetyFactor> {
    let mut v = factors.to_vec();
    v.sort();
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub t0: f64,
    pub r_cool: f64,
    pub t_min: f64,
    pub max_cycle: usize,
    pub max_scenario: usize,
    /// Probability that a mutation is factor-guided.
    pub p_factor: f64,
    pub c1: f64,
    pub c2: f64,
    /// Floor applied to d_min before inversion, metres.
    pub contact_distance: f64,
    /// Fog held fixed for every searched scenario, metres.
    pub mor: f64,
    pub maps: Vec<MapId>,
    pub ego_speed: (f64, f64),
    pub max_npcs: usize,
    pub mutate_retries: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            r_cool: 0.8,
            t_min: 0.05,
            max_cycle: 10,
            max_scenario: 1000,
            p_factor: 0.5,
            c1: 1.0,
            c2: 10.0,
            contact_distance: 0.01,
            mor: 30.0,
            maps: MapId::ALL.to_vec(),
            ego_speed: (4.0, 14.0),
            max_npcs: 6,
            mutate_retries: 32,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if !(self.r_cool > 0.0 && self.r_cool < 1.0) {
            return bad("r_cool must lie in (0, 1)");
        }
        if !(self.t_min > 0.0 && self.t0 >= self.t_min) {
            return bad("need 0 < t_min <= t0");
        }
        if !(0.0..=1.0).contains(&self.p_factor) {
            return bad("p_factor must lie in [0, 1]");
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.contact_distance > 0.0) {
            return bad("c1, c2 and contact_distance must be positive");
        }
        if !(self.mor > 0.0) || self.maps.is_empty() || self.max_npcs == 0 {
            return bad("mor, maps and max_npcs must be non-empty and positive");
        }
        if !(self.ego_speed.0 > 0.0 && self.ego_speed.1 >= self.ego_speed.0) {
            return bad("ego_speed must be a positive range");
        }
        Ok(())
    }

    /// Probability of the add-NPC form at temperature `t`.
    pub fn p_add(&self, t: f64) -> f64 {
        (0.1 + 0.2 * t).min(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub o: f64,
    pub perception_term: f64,
    pub proximity_term: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `o = −(c1·(n_fp + n_fn + n_fog)/n_frame + c2/d_min)`; lower is closer to a
/// corner case.
pub fn objective(stats: &StatsSummary, c1: f64, c2: f64, contact_distance: f64) -> Result<ObjectiveBreakdown> {
    if stats.n_frame == 0 {
        return Err(Error::input("objective needs at least one frame"));
    }
    let d = stats.d_min.max(contact_distance);
    let perception_term = c1 * (stats.n_fp + stats.n_fn + stats.n_fog) as f64 / stats.n_frame as f64;
    let proximity_term = c2 / d;
    Ok(ObjectiveBreakdown {
        o: -(perception_term + proximity_term),
        perception_term,
        proximity_term,
        c1,
        c2,
    })
}

/// The counters of a run, without its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub n_fp: usize,
    pub n_fn: usize,
    pub n_fog: usize,
    pub n_frame: usize,
    pub d_min: f64,
    pub outcome: Outcome,
}

impl From<&RunStats> for StatsSummary {
    fn from(s: &RunStats) -> Self {
        Self {
            n_fp: s.n_fp,
            n_fn: s.n_fn,
            n_fog: s.n_fog,
            n_frame: s.n_frame,
            d_min: s.d_min,
            outcome: s.outcome,
        }
    }
}

impl StatsSummary {
    pub fn is_corner_case(&self) -> bool {
        matches!(self.outcome, Outcome::Collided | Outcome::Stuck | Outcome::RouteViolation)
    }
}

/// Identity of a scenario for uniqueness: map plus ego start and end.
pub type ScenarioKey = (MapId, String, String);

pub fn scenario_key(s: &ScenarioConfig) -> ScenarioKey {
    (s.map_id, s.ego.start.clone(), s.ego.end.clone())
}

/// Short content hash of a scenario's JSON form.
pub fn scenario_hash(s: &ScenarioConfig) -> String {
    let json = serde_json::to_vec(s).expect("scenario serialises");
    hex::encode(&Sha256::digest(&json)[..8])
}

fn max_speed(model: &str) -> f64 {
    match model {
        "pedestrian" => 2.0,
        "bicycle" => 6.0,
        _ => 14.0,
    }
}

fn vehicle_models() -> Vec<String> {
    Catalog::builtin()
        .ids()
        .filter(|m| !matches!(*m, "pedestrian" | "bicycle"))
        .map(String::from)
        .collect()
}

fn all_models() -> Vec<String> {
    Catalog::builtin().ids().map(String::from).collect()
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, v: &'a [T]) -> Result<&'a T> {
    v.choose(rng).ok_or_else(|| Error::input("nothing to choose from"))
}

/// An NPC on a random lane route of at least 20 m.
fn random_npc(s: &ScenarioConfig, models: &[String], rng: &mut ChaCha8Rng) -> Result<NpcSpec> {
    let pairs = s.map().routable_pairs(20.0);
    let (start, end) = pick(rng, &pairs)?.clone();
    let model = pick(rng, models)?.clone();
    let speed = rng.gen_range(0.0..=max_speed(&model));
    Ok(NpcSpec {
        model,
        speed,
        start,
        end,
    })
}

/// An NPC starting at a node of the ego route ahead of the ego and following
/// the ego's route to its end, slower than the ego. On sloped maps nodes on
/// the incline are preferred.
fn lead_npc(s: &ScenarioConfig, models: &[String], prefer_slope: bool, rng: &mut ChaCha8Rng) -> Result<NpcSpec> {
    let map = s.map();
    let nodes = map.route_nodes(&s.ego.start, &s.ego.end)?;
    let inner: Vec<&String> = nodes[1..nodes.len() - 1].iter().collect();
    let mut candidates = inner.clone();
    if prefer_slope {
        let sloped: Vec<&String> = inner
            .iter()
            .copied()
            .filter(|n| {
                let (x, y) = map.position(n).unwrap_or_default();
                map.pitch_at(x, y, 0.0, 2.0).abs() > 1e-3 || map.terrain.ground_z(x, y) > 1.0
            })
            .collect();
        if !sloped.is_empty() {
            candidates = sloped;
        }
    }
    let start = match candidates.choose(rng) {
        Some(n) => (*n).clone(),
        None => return random_npc(s, models, rng),
    };
    let model = pick(rng, models)?.clone();
    let speed = rng.gen_range(0.1..0.5) * s.ego.target_speed.min(max_speed(&model));
    Ok(NpcSpec {
        model,
        speed,
        start,
        end: s.ego.end.clone(),
    })
}

fn night_and_water(w: &mut WeatherParams, rng: &mut ChaCha8Rng) {
    w.road_water = rng.gen_range(0.6..=1.0);
    w.sun_altitude = rng.gen_range(-30.0..=0.0);
}

/// Draws a fresh scenario whose key is not in `history`. With factors, one
/// is picked to seed the scenario and its constraints are applied.
pub fn init_unique_scenario(
    history: &HashSet<ScenarioKey>,
    factors: &[SafetyFactor],
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ScenarioConfig, Option<SafetyFactor>)> {
    let seed_factor = factors.choose(rng).copied();
    let free = |m: &MapId| {
        m.map()
            .ego_pairs()
            .into_iter()
            .filter(|(a, b)| !history.contains(&(*m, a.clone(), b.clone())))
            .collect::<Vec<_>>()
    };
    let mut maps: Vec<MapId> = cfg.maps.iter().copied().filter(|m| !free(m).is_empty()).collect();
    if maps.is_empty() {
        return Err(Error::Exhausted("every ego start/end pair has been used".into()));
    }
    if seed_factor == Some(SafetyFactor::F5) && maps.contains(&MapId::Slope) {
        maps = vec![MapId::Slope];
    }
    let map_id = *pick(rng, &maps)?;
    let (start, end) = pick(rng, &free(&map_id))?.clone();
    let mut s = ScenarioConfig {
        map_id,
        ego: EgoSpec {
            start,
            end,
            target_speed: rng.gen_range(cfg.ego_speed.0..=cfg.ego_speed.1),
        },
        npcs: Vec::new(),
        weather: WeatherParams {
            mor: cfg.mor,
            sun_altitude: rng.gen_range(-30.0..=60.0),
            road_water: rng.gen_range(0.0..=0.3),
        },
        seed: rng.gen(),
    };
    let catalog = Catalog::builtin();
    let models = match seed_factor {
        Some(SafetyFactor::F3) => catalog.small_targets.clone(),
        Some(SafetyFactor::F4) => catalog.tall_vehicles.clone(),
        _ => all_models(),
    };
    match seed_factor {
        Some(SafetyFactor::F1) => s.npcs.push(lead_npc(&s, &vehicle_models(), false, rng)?),
        Some(SafetyFactor::F5) => s.npcs.push(lead_npc(&s, &all_models(), true, rng)?),
        Some(SafetyFactor::F2) => night_and_water(&mut s.weather, rng),
        _ => {}
    }
    let extra = rng.gen_range(1..=2);
    for _ in 0..cfg.mutate_retries {
        if s.npcs.len() >= extra.max(1) {
            break;
        }
        let candidate = random_npc(&s, &models, rng)?;
        s.npcs.push(candidate);
        if s.validate().is_err() {
            s.npcs.pop();
        }
    }
    s.validate()?;
    Ok((s, seed_factor))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationKind {
    Init,
    AddNpc,
    ChangeModel,
    ChangeSpeed,
    ChangeWeather,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mutation {
    pub scenario: ScenarioConfig,
    pub kind: MutationKind,
    pub factor: Option<SafetyFactor>,
}

/// Picks the form: add with probability `p_add(t)`, otherwise one of the
/// other three uniformly. Model and speed changes need an NPC to act on and
/// fall back to adding one.
pub fn choose_kind(s: &ScenarioConfig, t: f64, cfg: &SearchConfig, rng: &mut ChaCha8Rng) -> MutationKind {
    let kind = if rng.gen_bool(cfg.p_add(t)) {
        MutationKind::AddNpc
    } else {
        *[MutationKind::ChangeModel, MutationKind::ChangeSpeed, MutationKind::ChangeWeather]
            .choose(rng)
            .expect("non-empty")
    };
    match kind {
        MutationKind::ChangeModel | MutationKind::ChangeSpeed if s.npcs.is_empty() => MutationKind::AddNpc,
        MutationKind::AddNpc if s.npcs.len() >= cfg.max_npcs => MutationKind::ChangeSpeed,
        k => k,
    }
}

fn guidance(kind: MutationKind, factors: &[SafetyFactor]) -> Vec<SafetyFactor> {
    use SafetyFactor::*;
    let fits = |f: &SafetyFactor| match kind {
        MutationKind::AddNpc => matches!(f, F1 | F3 | F4 | F5),
        MutationKind::ChangeModel => matches!(f, F3 | F4),
        MutationKind::ChangeSpeed => matches!(f, F1),
        MutationKind::ChangeWeather => matches!(f, F2),
        MutationKind::Init => false,
    };
    factors.iter().copied().filter(fits).collect()
}

fn apply(
    s: &ScenarioConfig,
    kind: MutationKind,
    factor: Option<SafetyFactor>,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ScenarioConfig> {
    use SafetyFactor::*;
    let catalog = Catalog::builtin();
    let mut out = s.clone();
    match kind {
        MutationKind::AddNpc => {
            let npc = match factor {
                Some(F1) => lead_npc(s, &vehicle_models(), false, rng)?,
                Some(F5) => lead_npc(s, &all_models(), true, rng)?,
                Some(F3) => random_npc(s, &catalog.small_targets, rng)?,
                Some(F4) => random_npc(s, &catalog.tall_vehicles, rng)?,
                _ => random_npc(s, &all_models(), rng)?,
            };
            out.npcs.push(npc);
        }
        MutationKind::ChangeModel => {
            let i = rng.gen_range(0..out.npcs.len());
            let pool = match factor {
                Some(F3) => catalog.small_targets.clone(),
                Some(F4) => catalog.tall_vehicles.clone(),
                _ => all_models(),
            };
            let others: Vec<String> = pool.into_iter().filter(|m| *m != out.npcs[i].model).collect();
            let n = &mut out.npcs[i];
            n.model = pick(rng, &others)?.clone();
            n.speed = n.speed.min(max_speed(&n.model));
        }
        MutationKind::ChangeSpeed => {
            let on_route: Vec<usize> = (0..out.npcs.len()).filter(|&i| out.npcs[i].end == s.ego.end).collect();
            if factor == Some(F1) && !on_route.is_empty() {
                let i = *pick(rng, &on_route)?;
                let n = &mut out.npcs[i];
                n.speed = rng.gen_range(0.1..0.5) * s.ego.target_speed.min(max_speed(&n.model));
            } else {
                let i = rng.gen_range(0..out.npcs.len());
                let n = &mut out.npcs[i];
                let step = (1.0 + 4.0 * t) * rng.gen_range(-1.0..=1.0);
                n.speed = (n.speed + step).clamp(0.0, max_speed(&n.model));
            }
        }
        MutationKind::ChangeWeather => {
            if factor == Some(F2) {
                night_and_water(&mut out.weather, rng);
            } else {
                let w = &mut out.weather;
                w.sun_altitude = (w.sun_altitude + 60.0 * t.min(1.0) * rng.gen_range(-1.0..=1.0)).clamp(-90.0, 90.0);
                w.road_water = (w.road_water + 0.5 * t.min(1.0) * rng.gen_range(-1.0..=1.0)).clamp(0.0, 1.0);
            }
        }
        MutationKind::Init => return Err(Error::input("init is not a mutation")),
    }
    Ok(out)
}

/// One of the four mutation forms, possibly factor-guided. Invalid results
/// (such as an NPC spawning on another actor) are redrawn.
pub fn mutate(
    s: &ScenarioConfig,
    t: f64,
    factors: &[SafetyFactor],
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Mutation> {
    for _ in 0..cfg.mutate_retries {
        let kind = choose_kind(s, t, cfg, rng);
        let fitting = guidance(kind, factors);
        let factor = if !fitting.is_empty() && rng.gen_bool(cfg.p_factor) {
            fitting.choose(rng).copied()
        } else {
            None
        };
        let scenario = apply(s, kind, factor, t, rng)?;
        if scenario.validate().is_ok() {
            return Ok(Mutation {
                scenario,
                kind,
                factor,
            });
        }
    }
    Err(Error::Exhausted("no valid mutation within the retry limit".into()))
}

/// Metropolis acceptance for minimisation.
pub fn accept(o_old: f64, o_new: f64, t: f64, rng: &mut impl Rng) -> bool {
    o_new < o_old || rng.gen::<f64>() < ((o_old - o_new) / t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Annealing on the objective with factor-guided initialisation and mutation.
    SaFactor,
    /// Same, with the objective replaced by a uniform random value.
    SaRandomObjective,
    /// Unguided initialisation and mutation, every mutation kept.
    PureRandom,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Self::SaFactor, Self::SaRandomObjective, Self::PureRandom];

    pub fn name(self) -> &'static str {
        match self {
            Self::SaFactor => "sa-factor",
            Self::SaRandomObjective => "sa-random-objective",
            Self::PureRandom => "pure-random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLogEntry {
    pub iteration: usize,
    #[serde(rename = "scenario-hash")]
    pub scenario_hash: String,
    #[serde(rename = "mutation-kind")]
    pub mutation_kind: MutationKind,
    #[serde(rename = "factor-used")]
    pub factor_used: Option<SafetyFactor>,
    pub o_old: Option<f64>,
    pub o_new: f64,
    pub accepted: bool,
    #[serde(rename = "T")]
    pub t: f64,
    /// Value of the objective formula on `stats`, whatever drove acceptance.
    pub o_stats: f64,
    pub stats: StatsSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerCase {
    pub scenario: ScenarioConfig,
    /// Seeding factor plus any factor used by the mutation that produced it
    /// or by accepted mutations leading to it.
    pub factors: Vec<SafetyFactor>,
    pub stats: RunStats,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub cases: Vec<CornerCase>,
    pub log: Vec<SearchLogEntry>,
    pub episodes: usize,
    /// The budget ran out before the search finished on its own.
    pub partial: bool,
    /// Why the search ended, when not by budget.
    pub stopped: Option<String>,
}

impl SearchReport {
    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.log {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Independent random streams for one search.
pub struct SearchRngs {
    pub init: ChaCha8Rng,
    pub mutate: ChaCha8Rng,
    pub accept: ChaCha8Rng,
    pub objective: ChaCha8Rng,
}

impl SearchRngs {
    pub fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            init: stream(1),
            mutate: stream(2),
            accept: stream(3),
            objective: stream(4),
        }
    }
}

/// Runs episodes, never more than the budget, caching results by scenario.
pub trait Simulate {
    fn simulate(&mut self, s: &ScenarioConfig) -> Result<RunStats>;
}

pub struct DirectSimulator {
    pub cfg: SimConfig,
}

impl Simulate for DirectSimulator {
    fn simulate(&mut self, s: &ScenarioConfig) -> Result<RunStats> {
        run_direct(s, &self.cfg)
    }
}

struct Evaluated {
    summary: StatsSummary,
    o: f64,
    o_stats: f64,
}

struct Runner<'a> {
    sim: &'a mut dyn Simulate,
    cfg: &'a SearchConfig,
    algorithm: Algorithm,
    budget: usize,
    episodes: usize,
    objective_rng: ChaCha8Rng,
    last_stats: Option<RunStats>,
}

impl Runner<'_> {
    fn evaluate(&mut self, s: &ScenarioConfig) -> Result<Option<Evaluated>> {
        if self.episodes >= self.budget {
            return Ok(None);
        }
        self.episodes += 1;
        let stats = self.sim.simulate(s)?;
        let summary = StatsSummary::from(&stats);
        let o_stats = objective(&summary, self.cfg.c1, self.cfg.c2, self.cfg.contact_distance)?.o;
        let o = match self.algorithm {
            Algorithm::SaRandomObjective => -self.objective_rng.gen::<f64>(),
            _ => o_stats,
        };
        self.last_stats = Some(stats);
        Ok(Some(Evaluated { summary, o, o_stats }))
    }
}

/// Simulated-annealing corner-case discovery.
///
/// Per outer iteration a fresh scenario is drawn and simulated. Unless it is
/// already a corner case it is annealed: each temperature level runs up to
/// `max_cycle` mutations, a corner case ends the scenario, otherwise the
/// mutation is kept by the acceptance rule and the temperature is cooled
/// until it drops below `t_min`. The objective of the current scenario is
/// reused rather than re-simulated.
pub fn discover(
    factors: &[SafetyFactor],
    algorithm: Algorithm,
    budget: usize,
    cfg: &SearchConfig,
    seed: u64,
    sim: &mut dyn Simulate,
) -> Result<SearchReport> {
    cfg.validate()?;
    if budget == 0 {
        return Err(Error::config("budget must be at least 1"));
    }
    let factors = match algorithm {
        Algorithm::PureRandom => Vec::new(),
        _ => factor_set(factors),
    };
    let mut rngs = SearchRngs::new(seed);
    let mut runner = Runner {
        sim,
        cfg,
        algorithm,
        budget,
        episodes: 0,
        objective_rng: rngs.objective.clone(),
        last_stats: None,
    };
    let mut history: HashSet<ScenarioKey> = HashSet::new();
    let mut cases = Vec::new();
    let mut log = Vec::new();
    let mut stopped = None;
    let mut partial = false;

    'outer: for _ in 0..cfg.max_scenario {
        let (mut s, seed_factor) = match init_unique_scenario(&history, &factors, cfg, &mut rngs.init) {
            Ok(v) => v,
            Err(Error::Exhausted(m)) => {
                stopped = Some(m);
                break;
            }
            Err(e) => return Err(e),
        };
        let mut chain: Vec<SafetyFactor> = seed_factor.into_iter().collect();
        let mut t = cfg.t0;
        let Some(ev) = runner.evaluate(&s)? else {
            partial = true;
            break;
        };
        log.push(SearchLogEntry {
            iteration: runner.episodes - 1,
            scenario_hash: scenario_hash(&s),
            mutation_kind: MutationKind::Init,
            factor_used: seed_factor,
            o_old: None,
            o_new: ev.o,
            accepted: true,
            t,
            o_stats: ev.o_stats,
            stats: ev.summary.clone(),
        });
        if ev.summary.is_corner_case() {
            history.insert(scenario_key(&s));
            cases.push(CornerCase {
                scenario: s,
                factors: factor_set(&chain),
                stats: runner.last_stats.take().expect("just simulated"),
                iteration: runner.episodes - 1,
            });
            continue;
        }
        let mut o = ev.o;
        while t >= cfg.t_min {
            for _ in 0..cfg.max_cycle {
                let m = match mutate(&s, t, &factors, cfg, &mut rngs.mutate) {
                    Ok(m) => m,
                    Err(Error::Exhausted(_)) => continue,
                    Err(e) => return Err(e),
                };
                let Some(ev) = runner.evaluate(&m.scenario)? else {
                    partial = true;
                    break 'outer;
                };
                let corner = ev.summary.is_corner_case();
                let accepted = corner
                    || match algorithm {
                        Algorithm::PureRandom => true,
                        _ => accept(o, ev.o, t, &mut rngs.accept),
                    };
                log.push(SearchLogEntry {
                    iteration: runner.episodes - 1,
                    scenario_hash: scenario_hash(&m.scenario),
                    mutation_kind: m.kind,
                    factor_used: m.factor,
                    o_old: Some(o),
                    o_new: ev.o,
                    accepted,
                    t,
                    o_stats: ev.o_stats,
                    stats: ev.summary.clone(),
                });
                if accepted {
                    s = m.scenario;
                    o = ev.o;
                    chain.extend(m.factor);
                }
                if corner {
                    history.insert(scenario_key(&s));
                    cases.push(CornerCase {
                        scenario: s,
                        factors: factor_set(&chain),
                        stats: runner.last_stats.take().expect("just simulated"),
                        iteration: runner.episodes - 1,
                    });
                    continue 'outer;
                }
            }
            t *= cfg.r_cool;
        }
    }
    Ok(SearchReport {
        cases,
        log,
        episodes: runner.episodes,
        partial,
        stopped,
    })
}
