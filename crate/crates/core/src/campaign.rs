//! Command-line modes: single episodes, discovery, algorithm comparison,
//! point-cloud snapshots and the lockstep demo.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::io::{create, ensure_dir, write_json, Manifest};
use crate::lidar::{write_ply, Provenance};
use crate::search::{
    discover, objective, Algorithm, DirectSimulator, SafetyFactor, SearchConfig, SearchReport, Simulate, StatsSummary,
};
use crate::sync::{feedback_shift, ratio_report, run_synced, Transport};
use crate::worldsim::{run_direct, write_trace, Episode, RunStats, ScenarioConfig, SimConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Episode,
    Discover,
    Compare,
    ScanOnly,
    SyncDemo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Episode => "episode",
            Mode::Discover => "discover",
            Mode::Compare => "compare",
            Mode::ScanOnly => "scan-only",
            Mode::SyncDemo => "sync-demo",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Mode::Episode, Mode::Discover, Mode::Compare, Mode::ScanOnly, Mode::SyncDemo]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown mode '{s}'")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncMode {
    #[default]
    Off,
    Inproc,
    Socket,
}

impl SyncMode {
    fn transport(self) -> Option<Transport> {
        match self {
            SyncMode::Off => None,
            SyncMode::Inproc => Some(Transport::Inproc),
            SyncMode::Socket => Some(Transport::Socket),
        }
    }
}

impl FromStr for SyncMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(SyncMode::Off),
            "inproc" => Ok(SyncMode::Inproc),
            "socket" => Ok(SyncMode::Socket),
            _ => Err(Error::config(format!("unknown sync mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub mode: Mode,
    /// Required by episode, scan-only and sync-demo.
    pub scenario: Option<ScenarioConfig>,
    pub factors: Vec<SafetyFactor>,
    pub budget: usize,
    pub repetitions: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub sync: SyncMode,
    /// Overrides the scenario's fog, metres.
    pub mor: Option<f64>,
    /// Visibilities for scan-only; null is clear air.
    pub scan_mors: Vec<Option<f64>>,
    pub sim: SimConfig,
    pub search: SearchConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Episode,
            scenario: None,
            factors: SafetyFactor::ALL.to_vec(),
            budget: 100,
            repetitions: 1,
            out: PathBuf::from("out"),
            seed: 0,
            sync: SyncMode::Off,
            mor: None,
            scan_mors: vec![None, Some(200.0), Some(50.0), Some(20.0)],
            sim: SimConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if matches!(self.mode, Mode::Discover | Mode::Compare) && self.budget == 0 {
            return Err(Error::config("budget must be at least 1"));
        }
        if let Some(m) = self.mor {
            if !(m > 0.0) {
                return Err(Error::config("mor must be positive"));
            }
        }
        self.sim.validate()?;
        self.search.validate()?;
        if matches!(self.mode, Mode::Episode | Mode::ScanOnly | Mode::SyncDemo) {
            self.scenario()?.validate()?;
        }
        Ok(())
    }

    /// The scenario with the fog override applied.
    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let mut s = self
            .scenario
            .clone()
            .ok_or_else(|| Error::config(format!("mode {} needs a scenario", self.mode)))?;
        if let Some(m) = self.mor {
            s.weather.mor = m;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    /// The run stopped before doing everything it was asked to.
    pub incomplete: bool,
}

/// Seed of repetition `round`.
pub fn round_seed(master: u64, round: usize) -> u64 {
    master.wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, Serialize)]
struct EpisodeSummary {
    #[serde(flatten)]
    stats: StatsSummary,
    collided: bool,
    stuck: bool,
    route_violation: bool,
    objective: f64,
}

impl EpisodeSummary {
    fn new(stats: &RunStats, search: &SearchConfig) -> Result<Self> {
        let summary = StatsSummary::from(stats);
        let objective = objective(&summary, search.c1, search.c2, search.contact_distance)?.o;
        Ok(Self {
            stats: summary,
            collided: stats.collided,
            stuck: stats.stuck,
            route_violation: stats.route_violation,
            objective,
        })
    }
}

struct Artifacts {
    root: PathBuf,
    files: Vec<PathBuf>,
    diagnostics: Vec<PathBuf>,
}

impl Artifacts {
    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(p.clone());
        Ok(p)
    }

    fn diagnostic(&mut self, rel: &str) -> PathBuf {
        let p = self.root.join(rel);
        self.diagnostics.push(p.clone());
        p
    }

    fn trace(&mut self, rel: &str, stats: &RunStats) -> Result<()> {
        let mut w = create(&self.path(rel)?)?;
        write_trace(stats, &mut w)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }
}

/// Episodes through the lockstep middleware instead of a direct call.
pub struct SyncedSimulator {
    pub cfg: SimConfig,
    pub transport: Transport,
}

impl Simulate for SyncedSimulator {
    fn simulate(&mut self, s: &ScenarioConfig) -> Result<RunStats> {
        Ok(run_synced(s, &self.cfg, self.transport)?.0)
    }
}

/// Memoises a deterministic simulator by scenario. Compare mode shares one per
/// round, since the algorithms draw the same initial scenarios. Every call
/// still counts against the caller's episode budget.
pub struct MemoSimulator {
    inner: Box<dyn Simulate>,
    keep_trace: bool,
    cache: HashMap<String, RunStats>,
    pub hits: usize,
}

impl MemoSimulator {
    pub fn new(inner: Box<dyn Simulate>, keep_trace: bool) -> Self {
        Self {
            inner,
            keep_trace,
            cache: HashMap::new(),
            hits: 0,
        }
    }
}

impl Simulate for MemoSimulator {
    fn simulate(&mut self, s: &ScenarioConfig) -> Result<RunStats> {
        let key = serde_json::to_string(s)?;
        if let Some(stats) = self.cache.get(&key) {
            self.hits += 1;
            return Ok(stats.clone());
        }
        let mut stats = self.inner.simulate(s)?;
        if !self.keep_trace {
            stats.trace = Vec::new();
        }
        self.cache.insert(key, stats.clone());
        Ok(stats)
    }
}

fn simulator(cfg: &CampaignConfig) -> Box<dyn Simulate> {
    match cfg.sync.transport() {
        None => Box::new(DirectSimulator { cfg: cfg.sim.clone() }),
        Some(transport) => Box::new(SyncedSimulator {
            cfg: cfg.sim.clone(),
            transport,
        }),
    }
}

fn mor_label(mor: Option<f64>) -> String {
    match mor {
        Some(m) => format!("{m}"),
        None => "inf".into(),
    }
}

/// Runs one campaign and writes its artifacts and manifest under `cfg.out`.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutcome> {
    cfg.validate()?;
    ensure_dir(&cfg.out)?;
    let mut art = Artifacts {
        root: cfg.out.clone(),
        files: Vec::new(),
        diagnostics: Vec::new(),
    };
    let hashed = CampaignConfig {
        out: PathBuf::new(),
        ..cfg.clone()
    };
    let mut manifest = Manifest::new(cfg.mode.name(), &hashed, cfg.seed)?;
    let mut incomplete = false;
    match cfg.mode {
        Mode::Episode => {
            let s = cfg.scenario()?;
            manifest.seeds.push(s.seed);
            let stats = match cfg.sync.transport() {
                None => run_direct(&s, &cfg.sim)?,
                Some(t) => {
                    let (stats, log) = run_synced(&s, &cfg.sim, t)?;
                    if stats != run_direct(&s, &cfg.sim)? {
                        return Err(Error::protocol("lockstep run diverged from the direct run"));
                    }
                    log.write_jsonl(create(&art.path("session_log.jsonl")?)?)?;
                    log.write_wall_jsonl(create(&art.diagnostic("session_wall.jsonl"))?)?;
                    stats
                }
            };
            write_json(&art.path("stats.json")?, &EpisodeSummary::new(&stats, &cfg.search)?)?;
            art.trace("trace.jsonl", &stats)?;
        }
        Mode::Discover => {
            let mut sim = simulator(cfg);
            let report = discover(&cfg.factors, Algorithm::SaFactor, cfg.budget, &cfg.search, cfg.seed, sim.as_mut())?;
            incomplete = report.stopped.is_some();
            write_report(&mut art, "", &report, true)?;
        }
        Mode::Compare => {
            let mut rows = Vec::new();
            for round in 0..cfg.repetitions {
                let seed = round_seed(cfg.seed, round);
                manifest.seeds.push(seed);
                let mut sim = MemoSimulator::new(simulator(cfg), false);
                for alg in Algorithm::ALL {
                    let report = discover(&cfg.factors, alg, cfg.budget, &cfg.search, seed, &mut sim)?;
                    incomplete |= report.stopped.is_some();
                    log::info!("{} round {round}: {} corner cases", alg.name(), report.cases.len());
                    write_report(&mut art, &format!("{}/r{round}/", alg.name()), &report, false)?;
                    rows.push((alg, round, report.cases.len()));
                }
            }
            write_compare_csv(&art.path("summary.csv")?, &rows)?;
        }
        Mode::ScanOnly => {
            let base = cfg.scenario()?;
            manifest.seeds.push(base.seed);
            let mors: Vec<Option<f64>> = match cfg.mor {
                Some(m) => vec![Some(m)],
                None => cfg.scan_mors.clone(),
            };
            let mut counts = String::from("mor,points,fog_points,hard_points\n");
            for mor in mors {
                let mut s = base.clone();
                s.weather.mor = mor.unwrap_or(f64::INFINITY);
                let ep = Episode::new(&s, &cfg.sim)?;
                let cloud = ep.observe(&ep.scene()?).cloud;
                let label = mor_label(mor);
                let mut w = create(&art.path(&format!("scan_mor-{label}.ply"))?)?;
                write_ply(&cloud, &mut w)?;
                std::io::Write::flush(&mut w)?;
                let fog = cloud.points.iter().filter(|p| p.provenance == Provenance::FogNoise).count();
                counts.push_str(&format!("{label},{},{fog},{}\n", cloud.points.len(), cloud.points.len() - fog));
            }
            std::fs::write(art.path("counts.csv")?, counts)?;
        }
        Mode::SyncDemo => {
            let s = cfg.scenario()?;
            manifest.seeds.push(s.seed);
            let transport = cfg.sync.transport().unwrap_or(Transport::Socket);
            let (stats, log) = run_synced(&s, &cfg.sim, transport)?;
            let identical = stats == run_direct(&s, &cfg.sim)?;
            let ratio = ratio_report(&log)?;
            let shift = feedback_shift(&stats.trace, 3);
            log.write_jsonl(create(&art.path("session_log.jsonl")?)?)?;
            log.write_wall_jsonl(create(&art.diagnostic("session_wall.jsonl"))?)?;
            art.trace("trace.jsonl", &stats)?;
            write_json(
                &art.path("sync_report.json")?,
                &serde_json::json!({
                    "transport": transport,
                    "frames": ratio.frames,
                    "r_ads": ratio.r_ads,
                    "command_shift": shift,
                    "identical_to_direct": identical,
                }),
            )?;
            write_json(&art.diagnostic("sync_wall.json"), &serde_json::json!({ "r_wall": ratio.r_wall }))?;
            if ratio.r_ads != 1.0 || shift != Some(1) || !identical {
                return Err(Error::protocol(format!(
                    "lockstep check failed: r_ads {}, shift {shift:?}, identical {identical}",
                    ratio.r_ads
                )));
            }
        }
    }
    manifest.record(&art.root, &art.files)?;
    manifest.diagnostics = art
        .diagnostics
        .iter()
        .map(|p| p.strip_prefix(&art.root).unwrap_or(p).to_string_lossy().into_owned())
        .collect();
    manifest.write(&cfg.out)?;
    Ok(CampaignOutcome {
        dir: cfg.out.clone(),
        manifest,
        incomplete,
    })
}

#[derive(Serialize)]
struct CaseEntry<'a> {
    file: String,
    map_id: &'a str,
    start: &'a str,
    end: &'a str,
    factors: &'a [SafetyFactor],
    outcome: crate::worldsim::Outcome,
    iteration: usize,
}

fn write_report(art: &mut Artifacts, prefix: &str, report: &SearchReport, traces: bool) -> Result<()> {
    report.write_log(create(&art.path(&format!("{prefix}search_log.jsonl"))?)?)?;
    let mut entries = Vec::new();
    for (i, c) in report.cases.iter().enumerate() {
        let file = format!("{prefix}cases/case-{i:03}.json");
        write_json(&art.path(&file)?, &c.scenario)?;
        if traces {
            art.trace(&format!("{prefix}cases/case-{i:03}.trace.jsonl"), &c.stats)?;
        }
        entries.push(CaseEntry {
            file,
            map_id: c.scenario.map_id.name(),
            start: &c.scenario.ego.start,
            end: &c.scenario.ego.end,
            factors: &c.factors,
            outcome: c.stats.outcome,
            iteration: c.iteration,
        });
    }
    write_json(
        &art.path(&format!("{prefix}cases.json"))?,
        &serde_json::json!({
            "episodes": report.episodes,
            "partial": report.partial,
            "stopped": report.stopped,
            "cases": entries,
        }),
    )
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_compare_csv(path: &Path, rows: &[(Algorithm, usize, usize)]) -> Result<()> {
    let mut text = String::from("algorithm,round,corner_cases_found,mean,stddev\n");
    for alg in Algorithm::ALL {
        let found: Vec<f64> = rows.iter().filter(|r| r.0 == alg).map(|r| r.2 as f64).collect();
        let (mean, sd) = mean_std(&found);
        for r in rows.iter().filter(|r| r.0 == alg) {
            text.push_str(&format!("{},{},{},{mean:.4},{sd:.4}\n", alg.name(), r.1, r.2));
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Process exit status for a campaign result.
pub fn exit_code(result: &Result<CampaignOutcome>) -> i32 {
    match result {
        Ok(o) if o.incomplete => 3,
        Ok(_) => 0,
        Err(Error::Protocol(_)) => 2,
        Err(Error::Exhausted(_)) => 3,
        Err(_) => 1,
    }
}
