//! Conflict fixtures over the shipped flowchart language.

use graphdsl_core::engine::apply_command;
use graphdsl_core::ids::ElementId;
use graphdsl_core::meta::{Literal, Metamodel};
use graphdsl_core::model::{point, AttributeMap, GraphModelInstance, Size};
use graphdsl_core::protocol::{Command, EdgeState, NodeState};

use graphdsl_core::service::{HookError, HookPoint, HookRegistry};

use crate::interleave::ConflictFixture;

const MODEL: ElementId = ElementId(1);
const N1: ElementId = ElementId(0x11);
const N2: ElementId = ElementId(0x12);
const E1: ElementId = ElementId(0x21);

fn task(id: ElementId, x: i64, y: i64) -> Command {
    Command::CreateNode {
        id,
        type_name: "Task".into(),
        container_id: MODEL,
        x,
        y,
        width: 40,
        height: 30,
        initial_attributes: AttributeMap::from([("label".to_string(), vec![Literal::String(format!("t{id}"))])]),
    }
}

fn built(mm: &Metamodel, setup: &[Command]) -> GraphModelInstance {
    let mut m = GraphModelInstance::new(MODEL, mm.graph_model_name());
    for c in setup {
        let _ = apply_command(&mut m, mm, c, true);
    }
    m
}

fn relabel(model: &GraphModelInstance, id: ElementId, attr: &str, value: &str) -> Command {
    let old = model.element(id).expect("fixture element").attributes().clone();
    let mut new = old.clone();
    new.insert(attr.to_string(), vec![Literal::String(value.to_string())]);
    Command::SetAttributes { id, old_assignment: old, new_assignment: new }
}

/// Move/move, move/resize, edit/delete and edit/cascading-delete on one element.
pub fn flowchart_conflicts(mm: &Metamodel) -> Vec<ConflictFixture> {
    let one = vec![task(N1, 10, 10)];
    let base = built(mm, &one);
    let n1 = base.node(N1).expect("created");
    let move_to = |x, y| Command::MoveNode { id: N1, from_container_id: MODEL, to_container_id: MODEL, from: point(10, 10), to: point(x, y) };

    let two = vec![
        task(N1, 10, 10),
        task(N2, 100, 10),
        Command::CreateEdge {
            id: E1,
            type_name: "Flow".into(),
            source_id: N1,
            target_id: N2,
            initial_attributes: AttributeMap::new(),
            bend_points: Vec::new(),
        },
    ];
    let linked = built(mm, &two);

    vec![
        ConflictFixture {
            name: "move/move".into(),
            setup: one.clone(),
            first: vec![move_to(1, 1)],
            second: vec![move_to(50, 50)],
            allowed: vec![vec!["first"], vec!["second"]],
        },
        ConflictFixture {
            name: "move/resize".into(),
            setup: one.clone(),
            first: vec![move_to(1, 1)],
            second: vec![Command::ResizeNode { id: N1, old_size: Size::new(40, 30), new_size: Size::new(80, 60) }],
            allowed: vec![vec!["first", "second"], vec!["second", "first"]],
        },
        ConflictFixture {
            name: "edit/delete".into(),
            setup: one.clone(),
            first: vec![relabel(&base, N1, "label", "renamed")],
            second: vec![Command::DeleteNode { id: N1, old_state: NodeState::from(n1) }],
            allowed: vec![vec!["second"], vec!["first", "second"]],
        },
        ConflictFixture {
            name: "edge edit/cascading delete".into(),
            setup: two,
            first: vec![relabel(&linked, E1, "guard", "ok")],
            second: vec![
                Command::DeleteEdge { id: E1, old_state: EdgeState::from(linked.edge(E1).expect("created")) },
                Command::DeleteNode { id: N2, old_state: NodeState::from(linked.node(N2).expect("created")) },
            ],
            allowed: vec![vec!["second"], vec!["first", "second"]],
        },
    ]
}

/// A post-move hook that widens every moved Task to 80, appending a
/// `resizeNode` to the move's transaction.
pub fn widen_on_move(mm: &Metamodel) -> HookRegistry {
    let mut hooks = HookRegistry::new();
    hooks
        .register(mm, HookPoint::PostMove, "Task", |ctx, ev| {
            let old = ctx.model().node(ev.element_id).map(|n| n.size()).ok_or_else(|| {
                HookError::Failed(format!("moved node {} is gone", ev.element_id))
            })?;
            ctx.apply(Command::ResizeNode { id: ev.element_id, old_size: old, new_size: Size::new(80, old.height) })
        })
        .expect("flowchart defines Task");
    hooks
}
