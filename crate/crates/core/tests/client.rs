mod common;

use std::sync::Arc;

use common::*;
use graphdsl_core::client::{
    point_along, render_state, Applied, ClientError, LocalEditOutcome, MirrorModel,
};
use graphdsl_core::engine::{apply_command, CommandOutcome};
use graphdsl_core::guard::RuleId;
use graphdsl_core::ids::{ElementId, MessageId};
use graphdsl_core::meta::Metamodel;
use graphdsl_core::model::{point, Size};
use graphdsl_core::protocol::{Command, Message, MessageKind};
use graphdsl_core::random::{random_command, GenConfig};
use graphdsl_core::service::{HookPoint, HookRegistry, HubConfig, ModelHub};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N1: u128 = 0x11;
const N2: u128 = 0x12;

fn hub(mm: &Arc<Metamodel>, hooks: HookRegistry) -> ModelHub {
    ModelHub::new(mm.clone(), Arc::new(hooks), HubConfig { auto_create: true, ..Default::default() })
}

/// Connects `n` mirrors to ROOT; session ids are the indices.
fn mirrors(mm: &Arc<Metamodel>, hub: &mut ModelHub, n: usize) -> Vec<MirrorModel> {
    (0..n)
        .map(|i| {
            let mut m = MirrorModel::new(mm.clone(), format!("u{i}"), ROOT, i as u64 + 1);
            let init = hub.connect(i as u64, &format!("u{i}"), ROOT).unwrap();
            assert_eq!(m.on_server_message(&init.message).applied, Applied::Init);
            m
        })
        .collect()
}

/// Sends everything client `i` has queued, delivering replies immediately.
fn flush(hub: &mut ModelHub, clients: &mut [MirrorModel], i: usize) {
    while let Some(msg) = clients[i].poll_outgoing() {
        for out in hub.receive_message(i as u64, msg) {
            clients[out.session as usize].on_server_message(&out.message);
        }
    }
}

fn move_cmd(id: u128, from: (i64, i64), to: (i64, i64)) -> Command {
    Command::MoveNode {
        id: ElementId(id),
        from_container_id: ROOT,
        to_container_id: ROOT,
        from: point(from.0, from.1),
        to: point(to.0, to.1),
    }
}

/// Two Tasks, N1 at (10,10) and N2 at (100,10), on every mirror.
fn seeded(mm: &Arc<Metamodel>, hooks: HookRegistry, n: usize) -> (ModelHub, Vec<MirrorModel>) {
    let mut h = hub(mm, hooks);
    let mut cs = mirrors(mm, &mut h, n);
    cs[0].local_edit(create_node(N1, "Task", ROOT, 10, 10)).unwrap();
    cs[0].local_edit(create_node(N2, "Task", ROOT, 100, 10)).unwrap();
    flush(&mut h, &mut cs, 0);
    for c in &cs {
        assert_eq!(c.replica().unwrap(), h.service(ROOT).unwrap().model());
    }
    (h, cs)
}

#[test]
fn valid_move_is_sent_and_applied_locally() {
    let mm = Arc::new(flowchart());
    let (_, mut cs) = seeded(&mm, HookRegistry::new(), 1);
    let out = cs[0].local_edit(move_cmd(N1, (10, 10), (1, 1))).unwrap();
    let LocalEditOutcome::Sent(id) = out else { panic!("{out:?}") };
    assert_eq!(cs[0].replica().unwrap().node(ElementId(N1)).unwrap().position(), point(1, 1));
    assert_eq!(cs[0].confirmed().unwrap().node(ElementId(N1)).unwrap().position(), point(10, 10));
    assert_eq!(cs[0].pending_len(), 1);
    let sent = cs[0].drain_outgoing();
    assert_eq!(sent.len(), 1);
    assert_eq!(sent[0].message_id, id);
    assert_eq!(sent[0].kind, MessageKind::Edit);
}

#[test]
fn guard_violation_is_rejected_locally() {
    let mm = Arc::new(flowchart());
    let mut h = hub(&mm, HookRegistry::new());
    let mut cs = mirrors(&mm, &mut h, 1);
    let c = &mut cs[0];
    c.local_edit_batch(vec![
        create_node(1, "Start", ROOT, 0, 0),
        create_node(2, "Task", ROOT, 0, 0),
        create_node(3, "Task", ROOT, 0, 0),
        create_edge(4, "Flow", 1, 2),
    ])
    .unwrap();
    c.drain_outgoing();
    let before = c.replica().unwrap().clone();
    let out = c.local_edit(create_edge(5, "Flow", 1, 3)).unwrap();
    assert_eq!(out, LocalEditOutcome::RejectedLocal(RuleId::ConnectionUpperBound));
    assert_eq!(c.replica().unwrap(), &before);
    assert!(c.drain_outgoing().is_empty());
    assert_eq!(c.pending_len(), 1);
}

#[test]
fn interactions_are_sent_without_touching_the_replica() {
    let mm = Arc::new(flowchart());
    let (_, mut cs) = seeded(&mm, HookRegistry::new(), 1);
    let before = cs[0].replica().unwrap().clone();
    assert!(matches!(cs[0].local_edit(Command::Click { id: ElementId(N1) }), Ok(LocalEditOutcome::Sent(_))));
    assert_eq!(cs[0].replica().unwrap(), &before);
    assert_eq!(cs[0].pending_len(), 0);
    assert_eq!(cs[0].drain_outgoing()[0].kind, MessageKind::Interaction);
}

#[test]
fn edits_need_a_live_connection() {
    let mm = Arc::new(flowchart());
    let mut fresh = MirrorModel::new(mm.clone(), "u", ROOT, 1);
    assert_eq!(fresh.local_edit(create_node(1, "Task", ROOT, 0, 0)), Err(ClientError::NotConnected));
    let (_, mut cs) = seeded(&mm, HookRegistry::new(), 1);
    cs[0].local_edit(move_cmd(N1, (10, 10), (2, 2))).unwrap();
    cs[0].disconnect();
    assert_eq!(cs[0].pending_len(), 0);
    assert!(cs[0].drain_outgoing().is_empty());
    assert_eq!(cs[0].replica(), cs[0].confirmed());
    assert_eq!(cs[0].local_edit(move_cmd(N1, (10, 10), (3, 3))), Err(ClientError::NotConnected));
    cs[0].reconnect();
    assert_eq!(cs[0].local_edit(move_cmd(N1, (10, 10), (3, 3))), Err(ClientError::NotConnected));
}

#[test]
fn pending_edits_are_bounded() {
    let mm = Arc::new(flowchart());
    let mut h = hub(&mm, HookRegistry::new());
    let mut c = MirrorModel::new(mm.clone(), "u", ROOT, 1).with_pending_limit(3);
    c.on_server_message(&h.connect(0, "u", ROOT).unwrap().message);
    for i in 0..3 {
        c.local_edit(create_node(i + 1, "Task", ROOT, 0, 0)).unwrap();
    }
    assert_eq!(c.local_edit(create_node(9, "Task", ROOT, 0, 0)), Err(ClientError::PendingLimit(3)));
}

#[test]
fn stale_local_commands_are_refused() {
    let mm = Arc::new(flowchart());
    let (_, mut cs) = seeded(&mm, HookRegistry::new(), 1);
    assert_eq!(cs[0].local_edit(move_cmd(N1, (0, 0), (1, 1))), Err(ClientError::StaleLocal(ElementId(N1))));
    assert!(matches!(cs[0].local_edit(Command::Restore { id: ROOT, state: graphdsl_core::protocol::RestoredState::Absent }), Err(ClientError::NotAnEdit(_))));
}

#[test]
fn self_echo_confirms_the_head() {
    let mm = Arc::new(flowchart());
    let (mut h, mut cs) = seeded(&mm, HookRegistry::new(), 2);
    cs[0].local_edit(move_cmd(N1, (10, 10), (1, 1))).unwrap();
    let replica = cs[0].replica().unwrap().clone();
    flush(&mut h, &mut cs, 0);
    assert_eq!(cs[0].pending_len(), 0);
    assert_eq!(cs[0].stats().confirmed, 3);
    assert_eq!(cs[0].replica().unwrap(), &replica);
    assert_eq!(cs[1].replica().unwrap(), &replica);
    assert_eq!(cs[0].confirmed().unwrap(), h.service(ROOT).unwrap().model());
}

#[test]
fn hook_amplified_echo_reaches_the_sender() {
    let mm = Arc::new(flowchart());
    let mut hooks = HookRegistry::new();
    hooks
        .register(&mm, HookPoint::PostMove, "Task", |ctx, ev| {
            let old = ctx.model().node(ev.element_id).unwrap().size();
            ctx.apply(Command::ResizeNode { id: ev.element_id, old_size: old, new_size: Size::new(80, 30) })
        })
        .unwrap();
    let (mut h, mut cs) = seeded(&mm, hooks, 2);
    cs[0].local_edit(move_cmd(N1, (10, 10), (1, 1))).unwrap();
    flush(&mut h, &mut cs, 0);
    for c in &cs {
        let n = c.replica().unwrap().node(ElementId(N1)).unwrap();
        assert_eq!((n.x, n.y, n.width, n.height), (1, 1, 80, 30));
        assert_eq!(c.replica().unwrap(), h.service(ROOT).unwrap().model());
    }
}

#[test]
fn server_resize_beats_pending_local_resize() {
    let mm = Arc::new(flowchart());
    let (mut h, mut cs) = seeded(&mm, HookRegistry::new(), 2);
    let resize = |w| Command::ResizeNode { id: ElementId(N1), old_size: Size::new(40, 30), new_size: Size::new(w, 30) };
    cs[0].local_edit(resize(50)).unwrap();
    cs[1].local_edit(resize(70)).unwrap();
    // The server sees client 1 first.
    flush(&mut h, &mut cs, 1);
    assert_eq!(cs[0].pending_len(), 0, "conflicting local edit is discarded");
    assert_eq!(cs[0].replica().unwrap().node(ElementId(N1)).unwrap().width, 70);
    // Client 0's now stale resize is rejected and reverted.
    flush(&mut h, &mut cs, 0);
    assert_eq!(cs[0].stats().reverted, 1);
    for c in &cs {
        assert_eq!(c.replica().unwrap().node(ElementId(N1)).unwrap().width, 70);
        assert_eq!(c.replica().unwrap(), h.service(ROOT).unwrap().model());
    }
}

#[test]
fn foreign_edit_of_untouched_node_keeps_pending_work() {
    let mm = Arc::new(flowchart());
    let (mut h, mut cs) = seeded(&mm, HookRegistry::new(), 2);
    cs[0].local_edit(move_cmd(N1, (10, 10), (5, 5))).unwrap();
    cs[1].local_edit(move_cmd(N2, (100, 10), (200, 20))).unwrap();
    flush(&mut h, &mut cs, 1);
    let r = cs[0].replica().unwrap();
    assert_eq!(cs[0].pending_len(), 1);
    assert_eq!(r.node(ElementId(N1)).unwrap().position(), point(5, 5));
    assert_eq!(r.node(ElementId(N2)).unwrap().position(), point(200, 20));
    flush(&mut h, &mut cs, 0);
    for c in &cs {
        assert_eq!(c.replica().unwrap(), h.service(ROOT).unwrap().model());
    }
}

#[test]
fn revert_restores_central_state() {
    let mm = Arc::new(flowchart());
    let (mut h, mut cs) = seeded(&mm, HookRegistry::new(), 1);
    cs[0].local_edit(move_cmd(N1, (10, 10), (1, 1))).unwrap();
    flush(&mut h, &mut cs, 0);
    // A second client edits from the same state, but the server moves on
    // before its message arrives.
    let mut late = seeded_snapshot_mirror(&mm, &h);
    late.local_edit(move_cmd(N1, (1, 1), (7, 7))).unwrap();
    cs[0].local_edit(move_cmd(N1, (1, 1), (3, 3))).unwrap();
    flush(&mut h, &mut cs, 0);
    let out = h.receive_message(0, late.poll_outgoing().unwrap());
    assert_eq!(out.len(), 1);
    let report = late.on_server_message(&out[0].message);
    assert_eq!(report.applied, Applied::Reverted);
    assert_eq!(late.pending_len(), 0);
    assert_eq!(late.replica().unwrap().node(ElementId(N1)).unwrap().position(), point(3, 3));
}

/// A mirror initialised from the current central model.
fn seeded_snapshot_mirror(mm: &Arc<Metamodel>, h: &ModelHub) -> MirrorModel {
    let mut m = MirrorModel::new(mm.clone(), "late", ROOT, 77);
    m.on_server_message(&Message::init(MessageId(0), "late", h.service(ROOT).unwrap().model().clone()));
    m
}

#[test]
fn mismatching_server_command_triggers_reinit() {
    let mm = Arc::new(flowchart());
    let (mut h, mut cs) = seeded(&mm, HookRegistry::new(), 1);
    let bogus = Message::new(MessageId(5), ROOT, "srv", MessageKind::Edit, vec![move_cmd(N1, (0, 0), (1, 1))]);
    let report = cs[0].on_server_message(&bogus);
    assert!(report.desync);
    let req = cs[0].poll_outgoing().unwrap();
    assert_eq!(req.kind, MessageKind::InitRequest);
    // Edits wait for the snapshot.
    assert_eq!(cs[0].local_edit(move_cmd(N1, (10, 10), (1, 1))), Err(ClientError::NotConnected));
    let out = h.receive_message(0, req);
    assert_eq!(cs[0].on_server_message(&out[0].message).applied, Applied::Init);
    assert_eq!(cs[0].replica().unwrap(), h.service(ROOT).unwrap().model());
}

#[test]
fn local_guard_matches_the_engine() {
    let mm = Arc::new(flowchart());
    let mut h = hub(&mm, HookRegistry::new());
    let mut cs = mirrors(&mm, &mut h, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = GenConfig { stale_rate: 0.0, ..Default::default() };
    let mut agreed = 0;
    for _ in 0..2000 {
        let replica = cs[0].replica().unwrap().clone();
        let cmd = random_command(&mut rng, &replica, &mm, &cfg);
        let mut oracle = replica.clone();
        let expected = apply_command(&mut oracle, &mm, &cmd, true);
        let got = cs[0].local_edit(cmd);
        match (&expected, &got) {
            (Ok(CommandOutcome::Applied { .. }), Ok(LocalEditOutcome::Sent(_))) => {
                assert_eq!(cs[0].replica().unwrap(), &oracle)
            }
            (Ok(CommandOutcome::RejectedConstraint(v)), Ok(LocalEditOutcome::RejectedLocal(r))) => {
                assert_eq!(v.rule, *r)
            }
            (Ok(CommandOutcome::RejectedStale(a)), Err(ClientError::StaleLocal(b))) => assert_eq!(a, b),
            (Err(a), Err(ClientError::Engine(b))) => assert_eq!(a, b),
            other => panic!("disagreement: {other:?}"),
        }
        agreed += 1;
        flush(&mut h, &mut cs, 0);
    }
    assert_eq!(agreed, 2000);
    assert_eq!(cs[0].replica().unwrap(), h.service(ROOT).unwrap().model());
}

#[test]
fn empty_model_renders_palette_only() {
    let mm = flowchart();
    let view = render_state(&empty(&mm), &mm);
    assert!(view.nodes.is_empty() && view.edges.is_empty());
    let groups: Vec<(&str, Vec<&str>)> = view
        .palette
        .iter()
        .map(|g| (g.name, g.entries.iter().map(|e| e.type_name.as_str()).collect()))
        .collect();
    assert_eq!(groups, [("Nodes", vec!["Start", "Task", "Decision"]), ("Containers", vec!["Swimlane"])]);
    let task = &view.palette[0].entries[1];
    assert_eq!((task.width, task.height), (120, 60));
    let form = view.forms.iter().find(|f| f.type_name == "Task").unwrap();
    let names: Vec<&str> = form.fields.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["label", "duration", "priority", "tags"]);
    assert_eq!(view.forms[0].type_name, "Flowchart");
}

#[test]
fn task_renders_rectangle_with_centred_label() {
    let mm = flowchart();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(4, "Swimlane", ROOT, 100, 50));
    let mut c = create_node(5, "Task", ElementId(4), 20, 10);
    if let Command::CreateNode { initial_attributes, width, height, .. } = &mut c {
        *initial_attributes = attrs(&[("label", s("Review"))]);
        (*width, *height) = (120, 60);
    }
    apply_ok(&mut m, &mm, &c);
    let view = render_state(&m, &mm);
    let ids: Vec<u128> = view.nodes.iter().map(|n| n.id.0).collect();
    assert_eq!(ids, [4, 5]);
    let task = &view.nodes[1].shape;
    assert_eq!(task.kind, "roundedRectangle");
    // Absolute: container (100,50) + relative (20,10).
    assert_eq!((task.x, task.y, task.width, task.height), (120, 60, 120, 60));
    assert_eq!(task.children.len(), 1);
    let label = &task.children[0];
    assert_eq!(label.kind, "text");
    assert_eq!(label.text.as_deref(), Some("Review"));
    // Zero-size text centred: 120 + 120/2, 60 + 60/2.
    assert_eq!((label.x, label.y), (180, 90));
    // Swimlane caption: top-left plus (8,16); empty actor renders empty.
    let caption = &view.nodes[0].shape.children[0];
    assert_eq!((caption.x, caption.y), (108, 66));
    assert_eq!(caption.text.as_deref(), Some(""));
}

#[test]
fn decorators_sit_at_fractional_arc_length() {
    let mm = flowchart();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(1, "Start", ROOT, 0, 0));
    apply_ok(&mut m, &mm, &create_node(2, "Task", ROOT, 200, 100));
    let mut e = create_edge(3, "Flow", 1, 2);
    if let Command::CreateEdge { initial_attributes, .. } = &mut e {
        *initial_attributes = attrs(&[("guard", s("ok"))]);
    }
    apply_ok(&mut m, &mm, &e);
    let view = render_state(&m, &mm);
    let edge = &view.edges[0];
    // Centres of 40x30 nodes.
    assert_eq!(edge.points, [(20.0, 15.0), (220.0, 115.0)]);
    let mid = &edge.decorators[1];
    assert_eq!((mid.x, mid.y), (120.0, 65.0));
    assert_eq!(mid.text.as_deref(), Some("ok"));
    let head = &edge.decorators[0];
    assert_eq!((head.x, head.y), (220.0, 115.0));
    assert!((head.angle - 0.5f64.atan().to_degrees()).abs() < 1e-9);
    // With a bend the midpoint follows the path length.
    let (x, y, _) = point_along(&[(0.0, 0.0), (0.0, 30.0), (40.0, 30.0)], 0.5);
    assert_eq!((x, y), (5.0, 30.0));
    assert_eq!(render_state(&m, &mm), view);
}
