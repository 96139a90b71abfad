#![allow(dead_code)]

use fogbench::worldsim::{EgoSpec, MapId, NpcSpec, ScenarioConfig, WeatherParams};

pub fn scenario(
    map_id: MapId,
    start: &str,
    end: &str,
    target_speed: f64,
    npcs: &[(&str, f64, &str, &str)],
    mor: f64,
    seed: u64,
) -> ScenarioConfig {
    ScenarioConfig {
        map_id,
        ego: EgoSpec {
            start: start.into(),
            end: end.into(),
            target_speed,
        },
        npcs: npcs
            .iter()
            .map(|&(model, speed, start, end)| NpcSpec {
                model: model.into(),
                speed,
                start: start.into(),
                end: end.into(),
            })
            .collect(),
        weather: WeatherParams::foggy(mor),
        seed,
    }
}

/// Slow lead vehicle ahead on a straight junction crossing.
pub fn slow_lead(mor: f64) -> ScenarioConfig {
    scenario(
        MapId::FlatJunction,
        "west.in_start",
        "east.out_end",
        12.0,
        &[("sedan", 2.0, "west.in_mid", "east.out_end")],
        mor,
        1,
    )
}

/// Slow approach to the tunnel portal.
pub fn tunnel_mouth(mor: f64) -> ScenarioConfig {
    scenario(MapId::TunnelApproach, "west.mid", "tunnel.exit", 3.0, &[], mor, 1)
}

/// Climb towards a slow vehicle just past the crest.
pub fn crest_lead(mor: f64) -> ScenarioConfig {
    scenario(
        MapId::Slope,
        "base.start",
        "top.end",
        12.0,
        &[("sedan", 1.0, "crest", "top.end")],
        mor,
        1,
    )
}
