mod common;

use common::*;
use graphdsl_core::engine::{
    apply_command, deletion_commands, invert, restore, snapshot_state, CommandOutcome, EngineError,
};
use graphdsl_core::guard::{check_connection, check_embedding, validate_model, ModelRule, RuleId};
use graphdsl_core::ids::ElementId;
use graphdsl_core::meta::{Literal, Metamodel};
use graphdsl_core::model::{point, AttributeMap, GraphModelInstance, Size};
use graphdsl_core::protocol::{Command, NodeState, RestoredState};
use graphdsl_core::random::{random_command, GenConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rejected_rule(out: CommandOutcome) -> RuleId {
    match out {
        CommandOutcome::RejectedConstraint(v) => v.rule,
        other => panic!("expected a constraint rejection, got {other:?}"),
    }
}

fn one_task(mm: &Metamodel) -> GraphModelInstance {
    let mut m = empty(mm);
    apply_ok(&mut m, mm, &create_node(1, "Task", ROOT, 10, 10));
    m
}

fn mv(id: u128, from: (i64, i64), to: (i64, i64)) -> Command {
    Command::MoveNode {
        id: ElementId(id),
        from_container_id: ROOT,
        to_container_id: ROOT,
        from: point(from.0, from.1),
        to: point(to.0, to.1),
    }
}

#[test]
fn move_inverse_swaps_points() {
    let mm = flowchart();
    let mut m = one_task(&mm);
    let inv = apply_ok(&mut m, &mm, &mv(1, (10, 10), (1, 1)));
    assert_eq!(inv, mv(1, (1, 1), (10, 10)));
    assert_eq!(m.node(ElementId(1)).unwrap().position(), point(1, 1));
}

#[test]
fn stale_move_is_rejected_and_leaves_model_untouched() {
    let mm = flowchart();
    let mut m = one_task(&mm);
    apply_ok(&mut m, &mm, &mv(1, (10, 10), (1, 1)));
    let before = m.clone();
    let out = apply_command(&mut m, &mm, &mv(1, (10, 10), (50, 50)), true).unwrap();
    assert_eq!(out, CommandOutcome::RejectedStale(ElementId(1)));
    assert_eq!(m, before);
}

#[test]
fn zero_move_inverse_is_itself() {
    let mm = flowchart();
    let mut m = one_task(&mm);
    let c = mv(1, (10, 10), (10, 10));
    assert_eq!(apply_ok(&mut m, &mm, &c), c);
}

#[test]
fn resize_invert_swaps_sizes() {
    let c = Command::ResizeNode { id: ElementId(1), old_size: Size::new(40, 30), new_size: Size::new(80, 30) };
    let expect = Command::ResizeNode { id: ElementId(1), old_size: Size::new(80, 30), new_size: Size::new(40, 30) };
    assert_eq!(invert(&c).unwrap(), expect);
    let mm = flowchart();
    let mut m = one_task(&mm);
    assert_eq!(apply_ok(&mut m, &mm, &c), expect);
}

#[test]
fn interactions_are_not_invertible() {
    assert_eq!(invert(&Command::Click { id: ElementId(1) }), Err(EngineError::NotInvertible));
}

#[test]
fn versions_count_touching_commands() {
    let mm = flowchart();
    let mut m = one_task(&mm);
    assert_eq!(m.node(ElementId(1)).unwrap().version, 0);
    apply_ok(&mut m, &mm, &mv(1, (10, 10), (1, 1)));
    apply_ok(&mut m, &mm, &mv(1, (1, 1), (2, 2)));
    assert_eq!(m.node(ElementId(1)).unwrap().version, 2);
    assert_eq!(m.model_version, 3);
}

#[test]
fn embedding_upper_bound_and_whitelist() {
    let mm = flowchart();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(1, "Start", ROOT, 0, 0));
    let out = apply_command(&mut m, &mm, &create_node(2, "Start", ROOT, 0, 0), true).unwrap();
    assert_eq!(rejected_rule(out), RuleId::EmbeddingUpperBound);

    apply_ok(&mut m, &mm, &create_node(3, "Swimlane", ROOT, 0, 0));
    let lane = ElementId(3);
    let out = apply_command(&mut m, &mm, &create_node(4, "Start", lane, 0, 0), true).unwrap();
    assert_eq!(rejected_rule(out), RuleId::NoEmbedding);
    apply_ok(&mut m, &mm, &create_node(5, "Decision", lane, 0, 0));
    let out = apply_command(&mut m, &mm, &create_node(6, "Decision", lane, 0, 0), true).unwrap();
    assert_eq!(rejected_rule(out), RuleId::EmbeddingUpperBound);
    // Moving a second Decision into the lane hits the same bound.
    apply_ok(&mut m, &mm, &create_node(7, "Decision", ROOT, 0, 0));
    let c = Command::MoveNode {
        id: ElementId(7),
        from_container_id: ROOT,
        to_container_id: lane,
        from: point(0, 0),
        to: point(5, 5),
    };
    assert_eq!(rejected_rule(apply_command(&mut m, &mm, &c, true).unwrap()), RuleId::EmbeddingUpperBound);
}

#[test]
fn embedding_counts_match_brute_force_oracle() {
    // Oracle: count children by walking the declared supertype chain by hand.
    let mm = process();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(1, "Swimlane", ROOT, 0, 0));
    let lane = ElementId(1);
    let mut t = AttributeMap::new();
    t.insert("label".into(), vec![s("a")]);
    for (i, ty) in ["Task", "Decision", "Task", "End"].iter().enumerate() {
        let mut c = create_node(10 + i as u128, ty, lane, 0, 0);
        if let Command::CreateNode { initial_attributes, .. } = &mut c {
            *initial_attributes = t.clone();
        }
        if *ty == "End" {
            c = create_node(10 + i as u128, ty, lane, 0, 0);
        }
        apply_ok(&mut m, &mm, &c);
    }
    let activities = m
        .children_of(lane)
        .unwrap()
        .iter()
        .filter(|id| {
            let mut ty = Some(m.node(**id).unwrap().type_name.as_str());
            while let Some(x) = ty {
                if x == "Activity" {
                    return true;
                }
                ty = mm.super_type(x);
            }
            false
        })
        .count();
    assert_eq!(activities, 3);
    // Task is an Activity, so the lane accepts it; Start is not listed.
    assert_eq!(check_embedding(&m, &mm, lane, "Task", 1).unwrap(), None);
    assert_eq!(check_embedding(&m, &mm, lane, "Start", 1).unwrap().unwrap().rule, RuleId::NoEmbedding);
    // Activity itself is abstract.
    let out = apply_command(&mut m, &mm, &create_node(30, "Activity", lane, 0, 0), true).unwrap();
    assert_eq!(rejected_rule(out), RuleId::AbstractType);
}

#[test]
fn connection_bounds_and_whitelist() {
    let mm = flowchart();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(1, "Start", ROOT, 0, 0));
    apply_ok(&mut m, &mm, &create_node(2, "Decision", ROOT, 0, 0));
    for id in 3..=5 {
        apply_ok(&mut m, &mm, &create_node(id, "Task", ROOT, 0, 0));
    }
    apply_ok(&mut m, &mm, &create_edge(10, "Flow", 1, 2));
    let out = apply_command(&mut m, &mm, &create_edge(11, "Flow", 1, 3), true).unwrap();
    assert_eq!(rejected_rule(out), RuleId::ConnectionUpperBound);
    apply_ok(&mut m, &mm, &create_edge(12, "Flow", 2, 3));
    apply_ok(&mut m, &mm, &create_edge(13, "Flow", 2, 4));
    let out = apply_command(&mut m, &mm, &create_edge(14, "Flow", 2, 5), true).unwrap();
    assert_eq!(rejected_rule(out), RuleId::ConnectionUpperBound);
    // Start declares no incoming connection.
    let out = apply_command(&mut m, &mm, &create_edge(15, "Flow", 3, 1), true).unwrap();
    assert_eq!(rejected_rule(out), RuleId::NoConnection);
    assert_eq!(
        check_connection(&m, &mm, ElementId(3), ElementId(4), "Flow", 1).unwrap(),
        None
    );
    assert_eq!(
        check_connection(&m, &mm, ElementId(99), ElementId(4), "Flow", 1),
        Err(EngineError::UnknownElement(ElementId(99)))
    );
}

#[test]
fn inherited_connection_constraint_admits_subtype_edges() {
    let mm = process();
    let mut m = empty(&mm);
    let mut c = create_node(1, "Task", ROOT, 0, 0);
    if let Command::CreateNode { initial_attributes, .. } = &mut c {
        *initial_attributes = attrs(&[("label", s("a"))]);
    }
    apply_ok(&mut m, &mm, &c);
    apply_ok(&mut m, &mm, &create_node(2, "Start", ROOT, 0, 0));
    // Task's incoming constraint names Link; Flow is a Link.
    apply_ok(&mut m, &mm, &create_edge(3, "Flow", 2, 1));
    let out = apply_command(&mut m, &mm, &create_edge(4, "Link", 2, 1), true).unwrap();
    assert_eq!(rejected_rule(out), RuleId::AbstractType);
}

#[test]
fn validate_reports_lower_bounds_and_missing_attributes() {
    let mm = flowchart();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(1, "Start", ROOT, 0, 0));
    apply_ok(&mut m, &mm, &create_node(2, "Task", ROOT, 0, 0));
    let diags = validate_model(&m, &mm);
    let found: Vec<(ModelRule, ElementId)> = diags.iter().map(|d| (d.rule, d.element)).collect();
    assert_eq!(found, vec![(ModelRule::LowerBound, ElementId(1)), (ModelRule::MissingAttribute, ElementId(2))]);
    assert!(diags[0].message.contains("outgoing Flow"), "{}", diags[0].message);

    let c = Command::SetAttributes {
        id: ElementId(2),
        old_assignment: AttributeMap::new(),
        new_assignment: attrs(&[("label", s("do"))]),
    };
    apply_ok(&mut m, &mm, &c);
    apply_ok(&mut m, &mm, &create_edge(3, "Flow", 1, 2));
    assert_eq!(validate_model(&m, &mm), vec![]);
}

#[test]
fn attribute_checks() {
    let mm = flowchart();
    let mut m = one_task(&mm);
    let set = |a: AttributeMap| Command::SetAttributes {
        id: ElementId(1),
        old_assignment: AttributeMap::new(),
        new_assignment: a,
    };
    let cases = [
        (attrs(&[("duration", s("long"))]), RuleId::AttributeType),
        (attrs(&[("priority", s("urgent"))]), RuleId::AttributeType),
        (attrs(&[("colour", s("red"))]), RuleId::UnknownAttribute),
    ];
    for (a, rule) in cases {
        assert_eq!(rejected_rule(apply_command(&mut m, &mm, &set(a), true).unwrap()), rule);
    }
    let mut two_labels = AttributeMap::new();
    two_labels.insert("label".into(), vec![s("a"), s("b")]);
    assert_eq!(
        rejected_rule(apply_command(&mut m, &mm, &set(two_labels), true).unwrap()),
        RuleId::AttributeCardinality
    );
    let mut tags = AttributeMap::new();
    tags.insert("tags".into(), (0..10).map(|i| s(&i.to_string())).collect());
    apply_ok(&mut m, &mm, &set(tags));

    // The graph model's own attributes go through the same path.
    let c = Command::SetAttributes {
        id: ROOT,
        old_assignment: AttributeMap::new(),
        new_assignment: attrs(&[("title", s("t"))]),
    };
    apply_ok(&mut m, &mm, &c);
    assert_eq!(m.attributes["title"], vec![s("t")]);
}

#[test]
fn stale_attribute_assignment_rejected() {
    let mm = flowchart();
    let mut m = one_task(&mm);
    let c = Command::SetAttributes {
        id: ElementId(1),
        old_assignment: attrs(&[("label", s("x"))]),
        new_assignment: attrs(&[("label", s("y"))]),
    };
    assert_eq!(apply_command(&mut m, &mm, &c, true).unwrap(), CommandOutcome::RejectedStale(ElementId(1)));
    // Without the stale check the old assignment is trusted.
    assert!(apply_command(&mut m, &mm, &c, false).unwrap().is_applied());
}

#[test]
fn delete_is_leaf_only_and_lenient() {
    let mm = flowchart();
    let mut m = one_task(&mm);
    apply_ok(&mut m, &mm, &create_node(2, "Task", ROOT, 0, 0));
    apply_ok(&mut m, &mm, &create_edge(3, "Flow", 1, 2));
    let node = m.node(ElementId(1)).unwrap();
    let mut old = NodeState::from(node);
    let del = Command::DeleteNode { id: ElementId(1), old_state: old.clone() };
    assert_eq!(rejected_rule(apply_command(&mut m, &mm, &del, true).unwrap()), RuleId::HasDependents);

    let cmds = deletion_commands(&m, ElementId(1)).unwrap();
    assert_eq!(cmds.iter().map(|c| c.type_name()).collect::<Vec<_>>(), ["deleteEdge", "deleteNode"]);

    // A delete still wins when the node moved since the client saw it.
    old.x += 100;
    let del_edge = Command::DeleteEdge {
        id: ElementId(3),
        old_state: graphdsl_core::protocol::EdgeState::from(m.edge(ElementId(3)).unwrap()),
    };
    apply_ok(&mut m, &mm, &del_edge);
    let inv = apply_ok(&mut m, &mm, &Command::DeleteNode { id: ElementId(1), old_state: old });
    assert!(matches!(inv, Command::CreateNode { x: 10, .. }));
}

#[test]
fn compound_deletion_and_undo_restore_the_model() {
    let mm = flowchart();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(1, "Swimlane", ROOT, 100, 100));
    apply_ok(&mut m, &mm, &create_node(2, "Task", ElementId(1), 5, 5));
    apply_ok(&mut m, &mm, &create_node(3, "Decision", ElementId(1), 50, 5));
    apply_ok(&mut m, &mm, &create_node(4, "Task", ROOT, 0, 0));
    apply_ok(&mut m, &mm, &create_edge(5, "Flow", 2, 3));
    apply_ok(&mut m, &mm, &create_edge(6, "Flow", 4, 2));
    let before = m.without_versions();

    let cmds = deletion_commands(&m, ElementId(1)).unwrap();
    assert_eq!(cmds.len(), 5);
    let inverses: Vec<Command> = cmds.iter().map(|c| apply_ok(&mut m, &mm, c)).collect();
    assert_eq!(m.elements.len(), 1);
    assert_eq!(m.root_children, vec![ElementId(4)]);
    for inv in inverses.iter().rev() {
        apply_ok(&mut m, &mm, inv);
    }
    assert_eq!(m.without_versions(), before);
}

#[test]
fn container_cannot_enter_itself() {
    let mm = flowchart();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(1, "Swimlane", ROOT, 0, 0));
    let c = Command::MoveNode {
        id: ElementId(1),
        from_container_id: ROOT,
        to_container_id: ElementId(1),
        from: point(0, 0),
        to: point(1, 1),
    };
    assert_eq!(rejected_rule(apply_command(&mut m, &mm, &c, true).unwrap()), RuleId::ContainmentCycle);
}

#[test]
fn moving_a_container_carries_children() {
    let mm = flowchart();
    let mut m = empty(&mm);
    apply_ok(&mut m, &mm, &create_node(1, "Swimlane", ROOT, 100, 100));
    apply_ok(&mut m, &mm, &create_node(2, "Task", ElementId(1), 5, 5));
    apply_ok(&mut m, &mm, &mv(1, (100, 100), (200, 100)));
    assert_eq!(m.absolute_position(ElementId(2)), Some(point(205, 105)));
    assert_eq!(m.node(ElementId(2)).unwrap().version, 0);
}

#[test]
fn unknown_elements_are_errors() {
    let mm = flowchart();
    let mut m = empty(&mm);
    assert_eq!(
        apply_command(&mut m, &mm, &mv(9, (0, 0), (1, 1)), true),
        Err(EngineError::UnknownElement(ElementId(9)))
    );
    assert_eq!(
        apply_command(&mut m, &mm, &create_node(1, "Task", ElementId(77), 0, 0), true),
        Err(EngineError::UnknownElement(ElementId(77)))
    );
    assert!(matches!(
        apply_command(&mut m, &mm, &create_node(1, "Nope", ROOT, 0, 0), true),
        Err(EngineError::UnknownType(_))
    ));
}

#[test]
fn restore_overwrites_and_cascades() {
    let mm = flowchart();
    let mut central = empty(&mm);
    apply_ok(&mut central, &mm, &create_node(1, "Task", ROOT, 10, 10));
    apply_ok(&mut central, &mm, &create_node(2, "Task", ROOT, 0, 0));
    let mut replica = central.clone();
    apply_ok(&mut replica, &mm, &mv(1, (10, 10), (3, 3)));
    apply_ok(&mut replica, &mm, &create_edge(3, "Flow", 1, 2));
    apply_ok(&mut replica, &mm, &create_node(4, "Task", ROOT, 0, 0));
    for id in [1u128, 3, 4] {
        let id = ElementId(id);
        restore(&mut replica, id, &snapshot_state(&central, id)).unwrap();
    }
    replica.model_version = central.model_version;
    assert_eq!(replica, central);
    assert_eq!(snapshot_state(&central, ElementId(3)), RestoredState::Absent);

    // Removing a node drops its edges too.
    let mut r2 = central.clone();
    apply_ok(&mut r2, &mm, &create_edge(3, "Flow", 1, 2));
    restore(&mut r2, ElementId(2), &RestoredState::Absent).unwrap();
    assert!(r2.edge(ElementId(3)).is_none());
}

fn random_model(seed: u64, steps: usize, mm: &Metamodel) -> (GraphModelInstance, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = empty(mm);
    let cfg = GenConfig::default();
    for _ in 0..steps {
        let c = random_command(&mut rng, &m, mm, &cfg);
        let _ = apply_command(&mut m, mm, &c, true);
    }
    (m, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invert_is_an_involution(seed in any::<u64>()) {
        let mm = flowchart();
        let (m, mut rng) = random_model(seed, 30, &mm);
        let c = random_command(&mut rng, &m, &mm, &GenConfig::default());
        prop_assert_eq!(invert(&invert(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn applied_inverse_restores_state(seed in any::<u64>()) {
        let mm = flowchart();
        let (mut m, mut rng) = random_model(seed, 30, &mm);
        for _ in 0..20 {
            let c = random_command(&mut rng, &m, &mm, &GenConfig::default());
            let before = m.clone();
            match apply_command(&mut m, &mm, &c, true) {
                Ok(CommandOutcome::Applied { inverse }) => {
                    let out = apply_command(&mut m, &mm, &inverse, true).unwrap();
                    prop_assert!(out.is_applied(), "inverse of {} rejected: {:?}", c, out);
                    prop_assert_eq!(m.without_versions(), before.without_versions());
                }
                _ => prop_assert_eq!(&m, &before),
            }
        }
    }

    #[test]
    fn stale_check_detects_every_single_field_perturbation(seed in any::<u64>(), dx in 1i64..50, which in 0usize..6) {
        let mm = flowchart();
        let mut m = one_task(&mm);
        apply_ok(&mut m, &mm, &Command::SetAttributes {
            id: ElementId(1),
            old_assignment: AttributeMap::new(),
            new_assignment: attrs(&[("label", s("a")), ("duration", Literal::Integer(seed as i64 % 100))]),
        });
        let n = m.node(ElementId(1)).unwrap().clone();
        let exact: Vec<Command> = vec![
            Command::MoveNode { id: n.id, from_container_id: ROOT, to_container_id: ROOT, from: n.position(), to: point(0, 0) },
            Command::ResizeNode { id: n.id, old_size: n.size(), new_size: Size::new(9, 9) },
            Command::SetAttributes { id: n.id, old_assignment: n.attributes.clone(), new_assignment: AttributeMap::new() },
        ];
        for c in &exact {
            let mut copy = m.clone();
            prop_assert!(apply_command(&mut copy, &mm, c, true).unwrap().is_applied());
        }
        let w = dx as u32;
        let perturbed = match which {
            0 => Command::MoveNode { id: n.id, from_container_id: ROOT, to_container_id: ROOT, from: point(n.x + dx, n.y), to: point(0, 0) },
            1 => Command::MoveNode { id: n.id, from_container_id: ROOT, to_container_id: ROOT, from: point(n.x, n.y - dx), to: point(0, 0) },
            2 => Command::MoveNode { id: n.id, from_container_id: ElementId(77), to_container_id: ROOT, from: n.position(), to: point(0, 0) },
            3 => Command::ResizeNode { id: n.id, old_size: Size::new(n.width + w, n.height), new_size: Size::new(9, 9) },
            4 => Command::ResizeNode { id: n.id, old_size: Size::new(n.width, n.height + w), new_size: Size::new(9, 9) },
            _ => {
                let mut a = n.attributes.clone();
                a.insert("duration".into(), vec![Literal::Integer(seed as i64 % 100 + dx)]);
                Command::SetAttributes { id: n.id, old_assignment: a, new_assignment: AttributeMap::new() }
            }
        };
        let before = m.clone();
        prop_assert_eq!(apply_command(&mut m, &mm, &perturbed, true).unwrap(), CommandOutcome::RejectedStale(n.id));
        prop_assert_eq!(m, before);
    }
}
