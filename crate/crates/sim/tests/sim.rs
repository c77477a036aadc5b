use std::sync::Arc;

use graphdsl_core::ids::ElementId;
use graphdsl_core::meta::{parse_metamodel, Metamodel};
use graphdsl_core::model::Size;
use graphdsl_core::protocol::{Command, MessageKind};
use graphdsl_sim::fixtures::{flowchart_conflicts, widen_on_move};
use graphdsl_sim::{
    exhaustive_interleave, run_scenario, Action, DeliverySchedule, Scenario, ScenarioError, SimOptions, Simulation,
    Step,
};

const NODE: ElementId = ElementId(0x11);

fn repo_file(rel: &str) -> String {
    let path = format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn flowchart() -> Arc<Metamodel> {
    Arc::new(parse_metamodel(&repo_file("metamodels/flowchart.json")).unwrap())
}

fn position(m: &graphdsl_core::model::GraphModelInstance) -> (i64, i64) {
    let n = m.node(NODE).unwrap();
    (n.x, n.y)
}

#[test]
fn stale_move_conflict_reverts_the_late_mover() {
    let scenario = Scenario::from_json(&repo_file("scenarios/stale-move-conflict.json")).unwrap();
    let (report, sim) = Simulation::new(flowchart(), scenario, SimOptions::default()).run();
    assert!(report.converged, "{report}");
    assert_eq!((report.committed, report.rejected, report.reverted), (2, 1, 1));
    assert_eq!(report.reverts_per_client, [0, 1]);
    assert!(report.summary().contains("reverted: 1, converged: true"));
    assert_eq!(position(sim.hub().service(ElementId(1)).unwrap().model()), (1, 1));
    for c in 0..2 {
        assert_eq!(position(sim.client(c).replica().unwrap()), (1, 1));
    }
    let revert = sim.delivered_to(1).iter().find(|m| m.kind == MessageKind::Revert).unwrap();
    assert_eq!(revert.commands.len(), 1);
}

#[test]
fn post_move_hook_stack_reaches_everyone_in_order() {
    let mm = flowchart();
    let scenario = Scenario::from_json(&repo_file("scenarios/post-move-resize.json")).unwrap();
    let options = SimOptions { hooks: Arc::new(widen_on_move(&mm)), ..SimOptions::default() };
    let (report, sim) = Simulation::new(mm, scenario, options).run();
    assert!(report.converged, "{report}");
    for c in 0..3 {
        let edits: Vec<_> = sim.delivered_to(c).iter().filter(|m| m.kind == MessageKind::Edit).collect();
        assert_eq!(edits.len(), 2);
        let stack = &edits[1].commands;
        assert_eq!(stack.len(), 2);
        assert!(matches!(stack[0], Command::MoveNode { .. }));
        assert!(matches!(stack[1], Command::ResizeNode { new_size: Size { width: 80, height: 30 }, .. }));
        let n = sim.client(c).replica().unwrap().node(NODE).unwrap();
        assert_eq!((n.x, n.y, n.width), (1, 1, 80));
    }
}

#[test]
fn single_client_never_conflicts() {
    let s = Scenario::random_edits(3, 1, 100, 2, DeliverySchedule::Fifo { latency: 1 });
    let r = run_scenario(flowchart(), &s);
    assert!(r.converged, "{r}");
    assert_eq!(r.rejected, 0);
    assert_eq!(r.reverted, 0);
    assert!(r.committed > 80, "{r}");
    assert!(r.replay_equivalent && r.broadcast_order_ok);
}

#[test]
fn concurrent_random_edits_converge() {
    let mm = flowchart();
    let mut rejected = 0;
    for seed in 0..5 {
        let s = Scenario::random_edits(seed, 3, 200, 3, DeliverySchedule::RandomDelay { min: 1, max: 25 });
        let r = run_scenario(mm.clone(), &s);
        assert!(r.converged, "seed {seed}: {r}");
        assert!(r.replay_equivalent, "seed {seed}");
        assert!(r.broadcast_order_ok, "seed {seed}");
        assert!(r.integrity_errors.is_empty(), "seed {seed}");
        rejected += r.rejected;
    }
    assert!(rejected > 0, "the workload should produce some conflicts");
}

#[test]
fn reports_are_deterministic() {
    let s = Scenario::random_edits(42, 3, 60, 3, DeliverySchedule::RandomDelay { min: 0, max: 10 });
    let a = run_scenario(flowchart(), &s);
    let b = run_scenario(flowchart(), &s);
    assert_eq!(a.canonical_json(), b.canonical_json());
    assert!(!a.canonical_json().contains("wallTime"));
    assert!(a.to_json().contains("wallTimeMs"));
}

#[test]
fn disconnect_and_reconnect_resynchronize() {
    let mut s = Scenario::random_edits(5, 2, 40, 3, DeliverySchedule::RandomDelay { min: 1, max: 8 });
    s.script.insert(20, Step { client_index: 1, delay: 0, action: Action::Disconnect });
    s.script.insert(40, Step { client_index: 1, delay: 5, action: Action::Reconnect });
    let r = run_scenario(flowchart(), &s);
    assert!(r.converged, "{r}");
    assert!(r.per_client_diff.iter().all(|d| d.connected));
    assert!(r.skipped_edits > 0, "edits while offline are skipped: {r}");
}

#[test]
fn clients_left_offline_are_excluded() {
    let mut s = Scenario::random_edits(6, 2, 20, 2, DeliverySchedule::Fifo { latency: 2 });
    s.script.push(Step { client_index: 0, delay: 0, action: Action::Disconnect });
    let r = run_scenario(flowchart(), &s);
    assert!(r.converged, "{r}");
    assert!(!r.per_client_diff[0].connected);
}

#[test]
fn exhausted_budget_is_reported_not_thrown() {
    let mut s = Scenario::random_edits(7, 2, 10, 100, DeliverySchedule::Fifo { latency: 50 });
    s.quiescence_budget = 1;
    let r = run_scenario(flowchart(), &s);
    assert!(!r.converged);
    let t = r.timeout.unwrap();
    assert!(t.in_flight > 0);
    assert!(!t.in_flight_per_link.is_empty());
}

#[test]
fn every_conflict_interleaving_converges() {
    let mm = flowchart();
    for fixture in flowchart_conflicts(&mm) {
        let r = exhaustive_interleave(mm.clone(), &fixture).unwrap();
        assert!(r.ok(), "{:#?}", r.failures.iter().take(3).collect::<Vec<_>>());
        // Every admissible outcome is actually reachable.
        let reached: Vec<&String> = r.outcomes.keys().collect();
        let expected: Vec<String> = fixture.allowed.iter().map(|l| l.join(",")).collect();
        let mut expected: Vec<&String> = expected.iter().collect();
        expected.sort();
        assert_eq!(reached, expected, "{}", fixture.name);
    }
}

#[test]
fn scenario_validation() {
    let bad = r#"{"seed":1,"clients":1,"script":[{"clientIndex":3,"action":{"kind":"randomEdit"}}]}"#;
    assert_eq!(Scenario::from_json(bad), Err(ScenarioError::UnknownClient { step: 0, client: 3, clients: 1 }));
    let inverted = r#"{"seed":1,"clients":1,"deliverySchedule":{"kind":"randomDelay","min":5,"max":1},"script":[]}"#;
    assert_eq!(Scenario::from_json(inverted), Err(ScenarioError::InvertedBounds { min: 5, max: 1 }));
    assert_eq!(Scenario::from_json(r#"{"seed":1,"clients":0,"script":[]}"#), Err(ScenarioError::NoClients));
    assert!(matches!(Scenario::from_json(r#"{"seed":1}"#), Err(ScenarioError::Parse(_))));
    let s = Scenario::random_edits(1, 2, 3, 1, DeliverySchedule::default());
    assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
}
