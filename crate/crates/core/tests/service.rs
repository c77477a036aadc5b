mod common;

use std::sync::{Arc, Mutex};

use common::*;
use graphdsl_core::engine::apply_command;
use graphdsl_core::ids::{ElementId, MessageId};
use graphdsl_core::meta::Metamodel;
use graphdsl_core::model::{point, GraphModelInstance, Size};
use graphdsl_core::protocol::{encode, Command, Message, MessageKind, RestoredState};
use graphdsl_core::random::{random_command, GenConfig};
use graphdsl_core::schema::{generate_schema, MemoryStore};
use graphdsl_core::service::{
    replay, HookError, HookPoint, HookRegistry, HubConfig, HubError, ModelHub, Outgoing, PersistError, Persistence,
    UnknownType,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N1: u128 = 0x11;

fn hub_with(mm: Metamodel, hooks: HookRegistry) -> ModelHub {
    let config = HubConfig { auto_create: true, ..HubConfig::default() };
    ModelHub::new(Arc::new(mm), Arc::new(hooks), config)
}

fn edit(id: u128, user: &str, cmds: Vec<Command>) -> Message {
    Message::new(MessageId(id), ROOT, user, MessageKind::Edit, cmds)
}

fn interaction(id: u128, cmd: Command) -> Message {
    Message::new(MessageId(id), ROOT, "u1", MessageKind::Interaction, vec![cmd])
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

/// Three sessions on ROOT, with node N1 (a Task) at (10,10).
fn three_sessions(hub: &mut ModelHub) {
    for s in 1..=3 {
        hub.connect(s, &format!("u{s}"), ROOT).unwrap();
    }
    let out = hub.receive_message(1, edit(1, "u1", vec![create_node(N1, "Task", ROOT, 10, 10)]));
    assert_eq!(out.len(), 3);
}

fn sessions(out: &[Outgoing]) -> Vec<u64> {
    out.iter().map(|o| o.session).collect()
}

#[test]
fn post_move_hook_amplifies_the_stack() {
    let mm = flowchart();
    let mut hooks = HookRegistry::new();
    hooks
        .register(&mm, HookPoint::PostMove, "Task", |ctx, ev| {
            let n = ctx.model().node(ev.element_id).unwrap();
            let old = n.size();
            ctx.apply(Command::ResizeNode { id: ev.element_id, old_size: old, new_size: Size::new(80, 30) })
        })
        .unwrap();
    let mut hub = hub_with(mm, hooks);
    three_sessions(&mut hub);
    let out = hub.receive_message(2, edit(2, "u2", vec![move_cmd(N1, (10, 10), (1, 1))]));
    assert_eq!(sessions(&out), [1, 2, 3]);
    let bytes: Vec<String> = out.iter().map(|o| encode(&o.message)).collect();
    assert!(bytes.iter().all(|b| *b == bytes[0]));
    let stack = &out[0].message.commands;
    assert_eq!(stack.len(), 2);
    assert!(matches!(stack[0], Command::MoveNode { .. }));
    assert!(matches!(stack[1], Command::ResizeNode { new_size: Size { width: 80, height: 30 }, .. }));
    assert_eq!(out[0].message.message_id, MessageId(2));
    let n = hub.service(ROOT).unwrap().model().node(ElementId(N1)).unwrap().clone();
    assert_eq!((n.x, n.y, n.width), (1, 1, 80));
}

#[test]
fn stale_move_reverts_only_the_sender() {
    let mut hub = hub_with(flowchart(), HookRegistry::new());
    three_sessions(&mut hub);
    let out = hub.receive_message(1, edit(2, "u1", vec![move_cmd(N1, (10, 10), (1, 1))]));
    assert_eq!(out.len(), 3);
    let before = hub.service(ROOT).unwrap().model().clone();
    let out = hub.receive_message(2, edit(3, "u2", vec![move_cmd(N1, (10, 10), (5, 5))]));
    assert_eq!(sessions(&out), [2]);
    let revert = &out[0].message;
    assert_eq!(revert.kind, MessageKind::Revert);
    assert_eq!(revert.message_id, MessageId(3));
    match &revert.commands[..] {
        [Command::Restore { id, state: RestoredState::Node(n) }] => {
            assert_eq!(*id, ElementId(N1));
            assert_eq!((n.x, n.y), (1, 1));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(hub.service(ROOT).unwrap().model(), &before);
    assert_eq!(hub.service(ROOT).unwrap().stats().rejected, 1);
}

#[test]
fn zero_displacement_move_is_broadcast() {
    let mut hub = hub_with(flowchart(), HookRegistry::new());
    three_sessions(&mut hub);
    let out = hub.receive_message(1, edit(2, "u1", vec![move_cmd(N1, (10, 10), (10, 10))]));
    assert_eq!(out.len(), 3);
    let m = hub.service(ROOT).unwrap().model();
    assert_eq!(m.node(ElementId(N1)).unwrap().version, 1);
    assert_eq!(m.model_version, 2);
}

#[test]
fn rejected_transaction_rolls_back_earlier_commands() {
    let mm = flowchart();
    let store = Arc::new(Mutex::new(MemoryStore::new(generate_schema(&mm))));
    let mut hub = hub_with(mm, HookRegistry::new()).with_persistence(store.clone());
    three_sessions(&mut hub);
    let before = hub.service(ROOT).unwrap().model().clone();
    let rows_before = store.lock().unwrap().load_snapshot(ROOT).unwrap();
    assert_eq!(rows_before, before);
    // Second Start exceeds the root's upper bound of one... after the first succeeded.
    let out = hub.receive_message(
        3,
        edit(
            4,
            "u3",
            vec![
                create_node(0x21, "Start", ROOT, 0, 0),
                move_cmd(N1, (10, 10), (20, 20)),
                create_node(0x22, "Start", ROOT, 0, 0),
            ],
        ),
    );
    assert_eq!(sessions(&out), [3]);
    let ids: Vec<u128> = out[0].message.commands.iter().map(|c| c.target().unwrap().0).collect();
    assert_eq!(ids, [N1, 0x21, 0x22]);
    assert_eq!(hub.service(ROOT).unwrap().model(), &before);
    assert_eq!(store.lock().unwrap().load_snapshot(ROOT).unwrap(), rows_before);
}

struct Broken;

impl Persistence for Broken {
    fn persist(&self, _: &GraphModelInstance) -> Result<(), PersistError> {
        Err(PersistError("disk full".into()))
    }
    fn load(&self, _: ElementId) -> Result<Option<GraphModelInstance>, PersistError> {
        Ok(None)
    }
    fn model_ids(&self) -> Vec<ElementId> {
        vec![]
    }
}

#[test]
fn persistence_failure_aborts_the_transaction() {
    let mm = Arc::new(flowchart());
    let mut svc = graphdsl_core::service::ModelService::new(
        empty(&mm),
        mm.clone(),
        Arc::new(HookRegistry::new()),
        Default::default(),
    )
    .with_persistence(Arc::new(Broken));
    let out = svc.handle(edit(1, "u", vec![create_node(N1, "Task", ROOT, 0, 0)]));
    assert_eq!(out[0].message.kind, MessageKind::Revert);
    assert!(out[0].message.detail.as_deref().unwrap().contains("disk full"));
    assert!(svc.model().elements.is_empty());
}

#[test]
fn hooks_fire_for_subtypes_in_registration_order() {
    let mm = process();
    let mut hooks = HookRegistry::new();
    let order = Arc::new(Mutex::new(Vec::new()));
    for tag in ["first", "second"] {
        let order = order.clone();
        hooks
            .register(&mm, HookPoint::PostCreate, "Activity", move |_, ev| {
                order.lock().unwrap().push((tag, ev.type_name.clone()));
                Ok(())
            })
            .unwrap();
    }
    assert_eq!(
        hooks.register(&mm, HookPoint::PostCreate, "Nope", |_, _| Ok(())).unwrap_err(),
        UnknownType("Nope".into())
    );
    let mut hub = hub_with(mm, hooks);
    hub.connect(1, "u", ROOT).unwrap();
    hub.receive_message(1, edit(1, "u", vec![create_node(1, "Task", ROOT, 0, 0), create_node(2, "End", ROOT, 0, 0)]));
    let seen = order.lock().unwrap().clone();
    assert_eq!(seen, [("first", "Task".to_string()), ("second", "Task".to_string())]);
}

#[test]
fn hook_commands_do_not_retrigger_hooks() {
    let mm = flowchart();
    let mut hooks = HookRegistry::new();
    // Every created Task spawns another one; depth 1 keeps this finite.
    hooks
        .register(&mm, HookPoint::PostCreate, "Task", |ctx, _| {
            let id = ctx.new_id();
            ctx.apply(create_node(id.0, "Task", ctx.model().id, 0, 0))
        })
        .unwrap();
    let mut hub = hub_with(mm, hooks);
    hub.connect(1, "u", ROOT).unwrap();
    let out = hub.receive_message(1, edit(1, "u", vec![create_node(1, "Task", ROOT, 0, 0)]));
    assert_eq!(out[0].message.commands.len(), 2);
    assert_eq!(hub.service(ROOT).unwrap().model().elements.len(), 2);
}

fn duplicate_hooks(mm: &Metamodel) -> HookRegistry {
    let mut hooks = HookRegistry::new();
    hooks
        .register(mm, HookPoint::OnContextMenu("duplicate".into()), "Task", |ctx, ev| {
            let n = ctx.model().node(ev.element_id).unwrap().clone();
            let id = ctx.new_id();
            ctx.apply(Command::CreateNode {
                id,
                type_name: n.type_name.clone(),
                container_id: n.container_id,
                x: n.x + 20,
                y: n.y + 20,
                width: n.width,
                height: n.height,
                initial_attributes: n.attributes.clone(),
            })
        })
        .unwrap();
    // Always tries a second Start; the root allows only one.
    hooks
        .register(mm, HookPoint::OnClick, "Task", |ctx, _| {
            for _ in 0..2 {
                let id = ctx.new_id();
                ctx.apply(create_node(id.0, "Start", ctx.model().id, 0, 0))?;
            }
            Ok(())
        })
        .unwrap();
    hooks
}

#[test]
fn interactions_without_hooks_are_no_ops() {
    let mm = flowchart();
    let hooks = duplicate_hooks(&mm);
    let mut hub = hub_with(mm, hooks);
    three_sessions(&mut hub);
    let before = hub.service(ROOT).unwrap().model().clone();
    assert!(hub.receive_message(1, interaction(5, Command::DoubleClick { id: ElementId(N1) })).is_empty());
    assert_eq!(hub.service(ROOT).unwrap().model(), &before);
    let out = hub.receive_message(
        1,
        interaction(6, Command::ContextMenu { id: ElementId(N1), action_id: "explode".into() }),
    );
    assert_eq!(sessions(&out), [1]);
    assert_eq!(out[0].message.kind, MessageKind::Error);
}

#[test]
fn context_menu_hook_broadcasts_its_commands() {
    let mm = flowchart();
    let hooks = duplicate_hooks(&mm);
    let mut hub = hub_with(mm, hooks);
    three_sessions(&mut hub);
    let out = hub.receive_message(
        2,
        interaction(7, Command::ContextMenu { id: ElementId(N1), action_id: "duplicate".into() }),
    );
    assert_eq!(sessions(&out), [1, 2, 3]);
    assert_eq!(out[0].message.kind, MessageKind::Edit);
    match &out[0].message.commands[..] {
        [Command::CreateNode { x: 30, y: 30, type_name, .. }] => assert_eq!(type_name, "Task"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn failing_click_hook_reverts_without_changes() {
    let mm = flowchart();
    let hooks = duplicate_hooks(&mm);
    let mut hub = hub_with(mm, hooks);
    three_sessions(&mut hub);
    let before = hub.service(ROOT).unwrap().model().clone();
    let out = hub.receive_message(3, interaction(8, Command::Click { id: ElementId(N1) }));
    assert_eq!(sessions(&out), [3]);
    let m = &out[0].message;
    assert_eq!(m.kind, MessageKind::Revert);
    match &m.commands[..] {
        [Command::Restore { id, state: RestoredState::Node(n) }] => {
            assert_eq!(*id, ElementId(N1));
            assert_eq!(Some(n), before.node(ElementId(N1)));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(hub.service(ROOT).unwrap().model(), &before);
}

#[test]
fn run_action_returns_a_report_to_the_sender() {
    let mm = flowchart();
    let mut hub = hub_with(mm, HookRegistry::new());
    three_sessions(&mut hub);
    let out = hub.receive_message(
        2,
        interaction(9, Command::ContextMenu { id: ROOT, action_id: "run".into() }),
    );
    assert_eq!(sessions(&out), [2]);
    assert_eq!(out[0].message.kind, MessageKind::Report);
    let report: serde_json::Value = serde_json::from_str(out[0].message.detail.as_deref().unwrap()).unwrap();
    assert_eq!(report["interpreter"], "flow-log");
    assert_eq!(report["outcome"], "completed");
    let out = hub.receive_message(2, interaction(10, Command::ContextMenu { id: ROOT, action_id: "run:nope".into() }));
    assert_eq!(out[0].message.kind, MessageKind::Error);
}

#[test]
fn connect_semantics() {
    let mm = Arc::new(flowchart());
    let mut strict = ModelHub::new(mm.clone(), Arc::new(HookRegistry::new()), HubConfig::default());
    assert_eq!(strict.connect(1, "u", ElementId(9)).unwrap_err(), HubError::UnknownModel(ElementId(9)));
    strict.create_model(ElementId(9)).unwrap();
    assert_eq!(strict.create_model(ElementId(9)).unwrap_err(), HubError::ModelExists(ElementId(9)));
    let init = strict.connect(1, "u", ElementId(9)).unwrap();
    assert_eq!(init.message.kind, MessageKind::Init);
    let snap = init.message.snapshot.unwrap();
    assert!(snap.elements.is_empty());
    assert_eq!(snap.model_version, 0);
}

#[test]
fn late_joiner_snapshot_equals_replay() {
    let mm = flowchart();
    let mut hub = hub_with(mm.clone(), HookRegistry::new());
    hub.connect(1, "u1", ROOT).unwrap();
    let txns = vec![
        vec![create_node(1, "Start", ROOT, 0, 0), create_node(2, "Task", ROOT, 100, 0)],
        vec![create_edge(3, "Flow", 1, 2)],
        vec![move_cmd(2, (100, 0), (120, 10))],
        vec![create_node(4, "Swimlane", ROOT, 0, 200)],
        vec![create_node(5, "Decision", ElementId(4), 5, 5)],
    ];
    for (i, t) in txns.iter().enumerate() {
        let out = hub.receive_message(1, edit(i as u128 + 10, "u1", t.clone()));
        assert_eq!(out[0].message.kind, MessageKind::Edit, "{:?}", out[0].message.detail);
    }
    let init = hub.connect(2, "u2", ROOT).unwrap().message.snapshot.unwrap();
    let mut oracle = empty(&mm);
    for cmd in txns.iter().flatten() {
        apply_ok(&mut oracle, &mm, cmd);
    }
    assert_eq!(init, oracle);
    let svc = hub.service(ROOT).unwrap();
    assert_eq!(svc.committed().len(), 5);
    assert_eq!(replay(svc.base(), &mm, svc.committed()).unwrap(), init);
}

#[test]
fn malformed_frames_earn_an_error_frame() {
    let mut hub = hub_with(flowchart(), HookRegistry::new());
    three_sessions(&mut hub);
    let before = hub.service(ROOT).unwrap().model().clone();
    for bad in ["{", "[]", r#"{"protocol":9}"#, r#"{"protocol":1,"kind":"edit","commands":[{"type":"teleport"}]}"#] {
        let out = hub.receive(2, bad);
        assert_eq!(sessions(&out), [2], "{bad}");
        assert_eq!(out[0].message.kind, MessageKind::Error);
    }
    // Clients may not send server-only kinds.
    let fake = Message::new(MessageId(1), ROOT, "u2", MessageKind::Report, vec![]);
    assert_eq!(hub.receive_message(2, fake)[0].message.kind, MessageKind::Error);
    assert_eq!(hub.service(ROOT).unwrap().model(), &before);
}

#[test]
fn broadcast_reaches_only_subscribers() {
    let mut hub = hub_with(flowchart(), HookRegistry::new());
    three_sessions(&mut hub);
    hub.connect(4, "u4", ElementId(0x999)).unwrap();
    hub.disconnect(3);
    let out = hub.receive_message(1, edit(2, "u1", vec![move_cmd(N1, (10, 10), (0, 0))]));
    assert_eq!(sessions(&out), [1, 2]);
    // A session on another model cannot edit this one.
    let out = hub.receive_message(4, edit(3, "u4", vec![move_cmd(N1, (0, 0), (1, 1))]));
    assert_eq!(out[0].message.kind, MessageKind::Error);
    // Disconnected sessions are ignored.
    assert!(hub.receive_message(3, edit(4, "u3", vec![move_cmd(N1, (0, 0), (1, 1))])).is_empty());
}

#[test]
fn hook_writes_are_all_in_the_broadcast_stack() {
    let mm = flowchart();
    let mut hooks = HookRegistry::new();
    hooks
        .register(&mm, HookPoint::PostMove, "Task", |ctx, ev| {
            let n = ctx.model().node(ev.element_id).unwrap();
            let grown = Size::new(n.width + 1, n.height);
            ctx.apply(Command::ResizeNode { id: ev.element_id, old_size: n.size(), new_size: grown })
        })
        .unwrap();
    hooks
        .register(&mm, HookPoint::PostAttributeChange, "Flowchart", |ctx, ev| match ev.command {
            Some(Command::SetAttributes { .. }) => {
                let id = ctx.new_id();
                ctx.apply(create_node(id.0, "Task", ctx.model().id, 0, 0))
            }
            _ => Err(HookError::Failed("unexpected".into())),
        })
        .unwrap();
    let mut hub = hub_with(mm.clone(), hooks);
    hub.connect(1, "u", ROOT).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mirror = empty(&mm);
    let cfg = GenConfig { stale_rate: 0.0, invalid_value_rate: 0.0, ..Default::default() };
    for i in 0..400u128 {
        let cmd = random_command(&mut rng, &mirror, &mm, &cfg);
        let out = hub.receive_message(1, edit(i + 100, "u", vec![cmd]));
        if out[0].message.kind == MessageKind::Edit {
            for c in &out[0].message.commands {
                assert!(apply_command(&mut mirror, &mm, c, true).unwrap().is_applied());
            }
        }
        assert_eq!(&mirror, hub.service(ROOT).unwrap().model());
    }
    let svc = hub.service(ROOT).unwrap();
    assert!(svc.stats().committed > 100);
    assert_eq!(&replay(svc.base(), &mm, svc.committed()).unwrap(), svc.model());
}
