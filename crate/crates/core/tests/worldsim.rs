mod common;

use common::scenario;
use fogbench::worldsim::{run_direct, Command, Episode, MapId, Outcome, SimConfig, D_MIN_SENTINEL, HEADWAY};
use fogbench::scene::Catalog;

#[test]
fn headway_holds_behind_a_slower_npc() {
    let s = scenario(
        MapId::FlatJunction,
        "north.in_start",
        "south.out_end",
        5.0,
        &[
            ("truck", 3.0, "west.in_mid", "east.out_end"),
            ("sedan", 10.0, "west.in_start", "east.out_end"),
        ],
        f64::INFINITY,
        3,
    );
    let mut ep = Episode::new(&s, &SimConfig::default()).unwrap();
    let catalog = Catalog::builtin();
    let half = |m: &str| 0.5 * catalog.model(m).unwrap().length();
    let mut closest = f64::INFINITY;
    let mut followed = 0;
    for _ in 0..500 {
        ep.advance(Command::full_brake());
        let [front, rear] = [&ep.state.npcs[0], &ep.state.npcs[1]];
        if !(front.active && rear.active) {
            continue;
        }
        let gap = (front.x - rear.x).hypot(front.y - rear.y) - half("truck") - half("sedan");
        assert!(
            gap >= HEADWAY * rear.speed - 1e-9,
            "frame {}: gap {gap} m at {} m/s",
            ep.state.frame,
            rear.speed
        );
        if rear.speed < 9.0 {
            followed += 1;
        }
        closest = closest.min(gap);
    }
    assert!(followed > 100, "the rear NPC never caught up");
    assert!(closest.is_finite());
}

#[test]
fn empty_map_clear_weather_reaches_goal() {
    let s = scenario(MapId::FlatJunction, "west.in_mid", "east.out_mid", 8.0, &[], f64::INFINITY, 0);
    let stats = run_direct(&s, &SimConfig::default()).unwrap();
    assert_eq!(stats.outcome, Outcome::Reached);
    assert!(!stats.collided);
    assert_eq!(stats.d_min, D_MIN_SENTINEL);
    assert_eq!(stats.n_fog, 0);
}

#[test]
fn runs_are_deterministic_and_frames_are_accounted() {
    let s = common::slow_lead(30.0);
    let cfg = SimConfig::default();
    let a = run_direct(&s, &cfg).unwrap();
    let b = run_direct(&s, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_frame, a.trace.len());
    for (i, f) in a.trace.iter().enumerate() {
        assert_eq!(f.frame, i as u64);
    }
}

#[test]
fn collision_implies_proximity() {
    let stats = run_direct(&common::slow_lead(30.0), &SimConfig::default()).unwrap();
    assert!(stats.collided);
    let sedan = Catalog::builtin().model("sedan").unwrap();
    let ego_half_diagonal = 0.5 * 4.6f64.hypot(1.9);
    assert!(stats.d_min <= ego_half_diagonal + sedan.half_diagonal() + 0.01, "d_min {}", stats.d_min);
}

#[test]
fn clear_weather_has_no_fog_frames() {
    let stats = run_direct(&common::slow_lead(f64::INFINITY), &SimConfig::default()).unwrap();
    assert_eq!(stats.n_fog, 0);
    assert!(stats.trace.iter().all(|f| !f.in_fog_noise));
}

#[test]
fn slow_lead_mechanism() {
    let cfg = SimConfig::default();
    let fog = run_direct(&common::slow_lead(30.0), &cfg).unwrap();
    let clear = run_direct(&common::slow_lead(f64::INFINITY), &cfg).unwrap();
    assert_eq!(fog.outcome, Outcome::Collided);
    assert!(!clear.collided);
    // The stack brakes for the lead in clear air, so it keeps its distance.
    assert!(clear.d_min > fog.d_min);
}

#[test]
fn tunnel_mouth_mechanism() {
    let cfg = SimConfig::default();
    let fog = run_direct(&common::tunnel_mouth(30.0), &cfg).unwrap();
    let clear = run_direct(&common::tunnel_mouth(f64::INFINITY), &cfg).unwrap();
    assert_eq!(fog.outcome, Outcome::Stuck);
    let last = fog.trace.last().unwrap();
    assert!(last.fp >= 1, "stuck with nothing detected");
    assert!(last.ego.speed < 0.1);
    assert_eq!(clear.outcome, Outcome::Reached);
    assert_eq!(clear.n_fp, 0);
}

#[test]
fn crest_mechanism() {
    let stats = run_direct(&common::crest_lead(30.0), &SimConfig::default()).unwrap();
    assert_eq!(stats.outcome, Outcome::Collided);
}
