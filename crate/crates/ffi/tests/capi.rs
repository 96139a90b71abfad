use std::ffi::{CStr, CString};
use std::ptr;

use fogbench_ffi::*;

const SLOW_LEAD: &str = r#"{"map_id":"flat-junction","ego":{"start":"west.in_start","end":"east.out_end","target_speed":12.0},"npcs":[{"model":"sedan","speed":2.0,"start":"west.in_mid","end":"east.out_end"}],"weather":{"mor":30.0,"sun_altitude":45.0,"road_water":0.0},"seed":1}"#;

fn last_error() -> String {
    let p = fb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(json: &str) -> *mut FbScenario {
    let text = CString::new(json).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { fb_scenario_from_json(text.as_ptr(), &mut s) }, FbStatus::Ok);
    assert!(fb_last_error().is_null());
    s
}

#[test]
fn episode_round_trip() {
    let s = load(SLOW_LEAD);
    let sim = CString::new(r#"{"max_frames": 400}"#).unwrap();
    let mut stats = ptr::null_mut();
    unsafe {
        assert_eq!(fb_run_episode(s, sim.as_ptr(), &mut stats), FbStatus::Ok);
        assert_eq!(fb_stats_outcome(stats), FbOutcome::Collided);
        let frames = fb_stats_frames(stats);
        assert!(frames > 0 && frames <= 400);
        let (mut fp, mut fog) = (usize::MAX, usize::MAX);
        fb_stats_counts(stats, &mut fp, ptr::null_mut(), &mut fog);
        assert!(fp > 0 && fog <= frames);
        assert!(fb_stats_d_min(stats) < 10.0);

        let mut json = ptr::null_mut();
        assert_eq!(fb_stats_to_json(stats, &mut json), FbStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["n_frame"].as_u64(), Some(frames as u64));
        assert_eq!(v["trace"].as_array().map(Vec::len), Some(frames));
        fb_string_free(json);
        fb_stats_free(stats);

        assert_eq!(fb_scenario_set_mor(s, f64::INFINITY), FbStatus::Ok);
        assert_eq!(fb_run_episode(s, sim.as_ptr(), &mut stats), FbStatus::Ok);
        assert_ne!(fb_stats_outcome(stats), FbOutcome::Collided);
        fb_stats_free(stats);
        fb_scenario_free(s);
    }
}

#[test]
fn errors_are_reported() {
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(fb_scenario_from_json(ptr::null(), &mut s), FbStatus::NullArgument);
        assert!(last_error().contains("json"));

        let bad = CString::new("{not json").unwrap();
        assert_eq!(fb_scenario_from_json(bad.as_ptr(), &mut s), FbStatus::Scenario);
        assert!(s.is_null());

        let unknown = CString::new(SLOW_LEAD.replace("west.in_start", "nowhere")).unwrap();
        assert_ne!(fb_scenario_from_json(unknown.as_ptr(), &mut s), FbStatus::Ok);
        assert!(!last_error().is_empty());

        let ok = load(SLOW_LEAD);
        assert_eq!(fb_scenario_set_mor(ok, -1.0), FbStatus::InvalidInput);
        assert_eq!(fb_run_episode(ok, ptr::null(), ptr::null_mut()), FbStatus::NullArgument);
        let bad_sim = CString::new(r#"{"dt": "fast"}"#).unwrap();
        let mut stats = ptr::null_mut();
        assert_eq!(fb_run_episode(ok, bad_sim.as_ptr(), &mut stats), FbStatus::InvalidInput);
        fb_scenario_free(ok);

        fb_scenario_free(ptr::null_mut());
        fb_stats_free(ptr::null_mut());
        fb_string_free(ptr::null_mut());
    }
}

#[test]
fn campaign_reports_exit_status() {
    let dir = std::env::temp_dir().join(format!("fogbench-ffi-{}", std::process::id()));
    let cfg = serde_json::json!({
        "mode": "episode",
        "scenario": serde_json::from_str::<serde_json::Value>(SLOW_LEAD).unwrap(),
        "sim": {"max_frames": 200},
        "out": dir,
    });
    let text = CString::new(cfg.to_string()).unwrap();
    let mut code = -1;
    assert_eq!(unsafe { fb_run_campaign(text.as_ptr(), &mut code) }, FbStatus::Ok);
    assert_eq!(code, 0);
    assert!(dir.join("manifest.json").exists());
    std::fs::remove_dir_all(&dir).unwrap();

    let text = CString::new(r#"{"mode": "nonsense"}"#).unwrap();
    assert_ne!(unsafe { fb_run_campaign(text.as_ptr(), &mut code) }, FbStatus::Ok);
    assert_eq!(code, 1);
}
