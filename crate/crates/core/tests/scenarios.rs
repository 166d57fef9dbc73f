use declos::geometry::inf_norm_dist;
use declos::scenario::ScenarioConfig;
use declos::sim::{certify_trace, compute_metrics, SimTrace, TraceError};
use declos::{load_scenario, run, InflationMode, PlanningMode};

fn scenario(name: &str) -> ScenarioConfig {
    load_scenario(format!("{}/../../scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn eleven_agent_scenario_has_published_positions() {
    let c = scenario("paper_11agents");
    assert_eq!(c.agents.len(), 11);
    assert_eq!(c.workspace.obstacles_m.len(), 10);
    assert_eq!(c.agents[0].start_m, [19.3, 6.6]);
    assert_eq!(c.agents[0].goal_m, [16.2, 10.4]);
    assert_eq!(c.agents[10].start_m, [5.0, 7.0]);
    assert_eq!(c.agents[10].goal_m, [6.8, 8.4]);
    assert_eq!(c.delta_min_m, 0.8);
    assert_eq!(c.dt_s, 0.1);
}

#[test]
fn corridor_scenarios() {
    for name in ["corridor", "corridor_full"] {
        let c = scenario(name);
        assert_eq!(c.delta_min_m, 3.0);
        assert_eq!(c.agents[0].start_m, [20.0, 18.0]);
        assert_eq!(c.agents[1].start_m, [20.0, 22.0]);
        assert_eq!(c.agents[0].goal_m, [20.0, 25.0]);
        assert_eq!(c.agents[1].goal_m, [20.0, 15.0]);
    }
    assert!(matches!(scenario("corridor").inflation, InflationMode::Adaptive { .. }));
    assert_eq!(scenario("corridor_full").inflation, InflationMode::Full);
}

#[test]
fn shipped_scenarios_round_trip() {
    for name in ["paper_11agents", "corridor", "corridor_full"] {
        let c = scenario(name);
        assert_eq!(ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }
}

#[test]
fn stored_traces_replay() {
    let mut c = scenario("paper_11agents");
    c.master_seed = 9;
    for mode in [PlanningMode::DecLos, PlanningMode::Clairvoyant] {
        c.mode = mode;
        let (sc, params, _) = c.build().unwrap();
        let trace = run(&sc, &params).unwrap();
        let text = trace.to_jsonl_string();
        let back = SimTrace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.to_jsonl_string(), text);
        assert!(certify_trace(&back).is_empty());
        let m = compute_metrics(&back).unwrap();
        assert!(m.min_interagent_distance_m >= 0.8);
        for (i, f) in m.finished.iter().enumerate() {
            if *f {
                let straight = inf_norm_dist(back.header.starts[i], back.header.goals[i]);
                assert!(m.path_length_m[i] + 1e-9 >= straight - 0.5);
            }
        }
        if mode == PlanningMode::Clairvoyant {
            assert_eq!(m.brake_event_count, 0);
        }
    }
}

#[test]
fn tampered_traces_are_caught() {
    let c = scenario("corridor");
    let (sc, params, _) = c.build().unwrap();
    let text = run(&sc, &params).unwrap().to_jsonl_string();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Move agent 2 on top of agent 1 in the first tick.
    let mut tick: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    tick["positions"][1] = tick["positions"][0].clone();
    lines[1] = tick.to_string();
    let bad = SimTrace::read_jsonl(lines.join("\n").as_bytes()).unwrap();
    assert!(!certify_trace(&bad).is_empty());

    let broken = text.replacen("\"type\":\"tick\"", "\"type\":\"tock\"", 1);
    assert!(matches!(SimTrace::read_jsonl(broken.as_bytes()), Err(TraceError::Json { line: 2, .. })));
}
