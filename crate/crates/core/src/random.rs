//! Random command generation for simulations and property tests.
//!
//! Commands are drawn against the current replica so most are plausible;
//! a tunable share carries stale old-state fields or breaks a constraint,
//! which exercises the rejection paths as well.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::ids::{ElementId, MessageId};
use crate::meta::{Literal, Metamodel, TypeKind, ValueType};
use crate::model::{
    point, AttributeMap, Connector, Edge, Element, GraphModelInstance, Node, Router, RoutingPreference, Size,
};
use crate::protocol::{
    Command, CommandClass, EdgeState, Message, MessageKind, ModelHeader, NodeState, RestoredState,
};

#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    /// Probability that old-state fields are deliberately perturbed.
    pub stale_rate: f64,
    /// Probability that an attribute value is drawn outside its type.
    pub invalid_value_rate: f64,
    /// Coordinate range for positions.
    pub extent: i64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { stale_rate: 0.1, invalid_value_rate: 0.05, extent: 600 }
    }
}

pub fn random_literal<R: Rng + ?Sized>(rng: &mut R, vt: &ValueType) -> Literal {
    match vt {
        ValueType::String => Literal::String(format!("s{}", rng.random_range(0..1000))),
        ValueType::Integer => Literal::Integer(rng.random_range(-100..1000)),
        ValueType::Float => Literal::Float(f64::from(rng.random_range(-1000..1000)) / 8.0),
        ValueType::Boolean => Literal::Boolean(rng.random()),
        ValueType::Enum(lits) => Literal::String(lits.choose(rng).cloned().unwrap_or_default()),
    }
}

/// A random assignment for a type: each attribute is set with probability 1/2.
pub fn random_assignment<R: Rng + ?Sized>(
    rng: &mut R,
    mm: &Metamodel,
    type_name: &str,
    cfg: &GenConfig,
) -> AttributeMap {
    let mut out = AttributeMap::new();
    for def in mm.flatten_attributes(type_name).unwrap_or(&[]) {
        if def.lower == 0 && rng.random_bool(0.5) {
            continue;
        }
        let n = if def.is_multi_valued() { rng.random_range(def.lower.max(0)..=def.lower.max(0) + 3) } else { 1 };
        let values = (0..n)
            .map(|_| {
                if rng.random_bool(cfg.invalid_value_rate) {
                    // Strings are never admitted by numeric types and vice versa.
                    match def.value_type {
                        ValueType::Integer | ValueType::Float | ValueType::Boolean => Literal::String("x".into()),
                        _ => Literal::Integer(1),
                    }
                } else {
                    random_literal(rng, &def.value_type)
                }
            })
            .collect();
        out.insert(def.name.clone(), values);
    }
    if rng.random_bool(cfg.invalid_value_rate / 2.0) {
        out.insert("noSuchAttribute".into(), vec![Literal::Integer(0)]);
    }
    out
}

fn containers(model: &GraphModelInstance) -> Vec<ElementId> {
    let mut v = vec![model.id];
    v.extend(model.nodes().filter(|n| n.is_container()).map(|n| n.id));
    v
}

fn perturb<R: Rng + ?Sized>(rng: &mut R, v: i64) -> i64 {
    v + rng.random_range(1..50) * if rng.random() { 1 } else { -1 }
}

/// One element or editor command drawn against `model`.
pub fn random_command<R: Rng + ?Sized>(
    rng: &mut R,
    model: &GraphModelInstance,
    mm: &Metamodel,
    cfg: &GenConfig,
) -> Command {
    let nodes: Vec<ElementId> = model.nodes().map(|n| n.id).collect();
    let edges: Vec<ElementId> = model.edges().map(|e| e.id).collect();
    let stale = rng.random_bool(cfg.stale_rate);
    let choice = if nodes.is_empty() { 0 } else { rng.random_range(0..100) };
    match choice {
        0..=19 => {
            let types = mm.concrete_node_like();
            let t = types.choose(rng).copied().unwrap_or(mm.graph_model_name());
            let container = *containers(model).choose(rng).expect("root always present");
            Command::CreateNode {
                id: ElementId::random(rng),
                type_name: t.to_string(),
                container_id: container,
                x: rng.random_range(0..cfg.extent),
                y: rng.random_range(0..cfg.extent),
                width: rng.random_range(20..120),
                height: rng.random_range(20..80),
                initial_attributes: random_assignment(rng, mm, t, cfg),
            }
        }
        20..=34 => {
            let types = mm.concrete_types(TypeKind::Edge);
            let t = types.choose(rng).copied().unwrap_or("");
            let s = *nodes.choose(rng).expect("non-empty");
            let d = *nodes.choose(rng).expect("non-empty");
            Command::CreateEdge {
                id: ElementId::random(rng),
                type_name: t.to_string(),
                source_id: s,
                target_id: d,
                initial_attributes: random_assignment(rng, mm, t, cfg),
                bend_points: Vec::new(),
            }
        }
        35..=54 => {
            let n = model.node(*nodes.choose(rng).expect("non-empty")).expect("listed");
            let mut from = n.position();
            if stale {
                from.x = perturb(rng, from.x);
            }
            let to_container =
                if rng.random_bool(0.8) { n.container_id } else { *containers(model).choose(rng).expect("root") };
            Command::MoveNode {
                id: n.id,
                from_container_id: n.container_id,
                to_container_id: to_container,
                from,
                to: point(rng.random_range(0..cfg.extent), rng.random_range(0..cfg.extent)),
            }
        }
        55..=64 => {
            let n = model.node(*nodes.choose(rng).expect("non-empty")).expect("listed");
            let mut old = n.size();
            if stale {
                old.width += rng.random_range(1..10);
            }
            Command::ResizeNode {
                id: n.id,
                old_size: old,
                new_size: Size::new(rng.random_range(20..160), rng.random_range(20..120)),
            }
        }
        65..=76 => {
            let id = if !edges.is_empty() && rng.random_bool(0.5) {
                *edges.choose(rng).expect("non-empty")
            } else if rng.random_bool(0.1) {
                model.id
            } else {
                *nodes.choose(rng).expect("non-empty")
            };
            let (type_name, current) = match model.element(id) {
                Some(e) => (e.type_name().to_string(), e.attributes().clone()),
                None => (model.type_name.clone(), model.attributes.clone()),
            };
            let mut old = current;
            if stale {
                old.insert("__stale".into(), vec![Literal::Boolean(true)]);
            }
            Command::SetAttributes {
                id,
                old_assignment: old,
                new_assignment: random_assignment(rng, mm, &type_name, cfg),
            }
        }
        77..=84 => match model.element(*nodes.choose(rng).expect("non-empty")) {
            Some(Element::Node(n)) => Command::DeleteNode { id: n.id, old_state: NodeState::from(n) },
            _ => unreachable!("node ids map to nodes"),
        },
        85..=89 if !edges.is_empty() => {
            let e = model.edge(*edges.choose(rng).expect("non-empty")).expect("listed");
            Command::DeleteEdge { id: e.id, old_state: EdgeState::from(e) }
        }
        90..=93 if !edges.is_empty() => {
            let e = model.edge(*edges.choose(rng).expect("non-empty")).expect("listed");
            let old_source = if stale { *nodes.choose(rng).expect("non-empty") } else { e.source_id };
            Command::ReconnectEdge {
                id: e.id,
                old_source,
                old_target: e.target_id,
                new_source: if rng.random() { e.source_id } else { *nodes.choose(rng).expect("non-empty") },
                new_target: *nodes.choose(rng).expect("non-empty"),
            }
        }
        94..=97 if !edges.is_empty() => {
            let e = model.edge(*edges.choose(rng).expect("non-empty")).expect("listed");
            let mut old = e.bend_points.clone();
            if stale {
                old.push(point(0, 0));
            }
            let n = rng.random_range(0..4);
            Command::BendEdge {
                id: e.id,
                old_bend_points: old,
                new_bend_points: (0..n)
                    .map(|_| point(rng.random_range(0..cfg.extent), rng.random_range(0..cfg.extent)))
                    .collect(),
            }
        }
        _ => {
            let routers = [Router::Manhattan, Router::Direct, Router::Orthogonal];
            let connectors = [Connector::Normal, Connector::Rounded, Connector::Smooth, Connector::Jumpover];
            let mut previous = model.routing;
            if stale {
                previous.router = *routers.choose(rng).expect("non-empty");
            }
            Command::Routing {
                previous,
                preference: RoutingPreference {
                    router: *routers.choose(rng).expect("non-empty"),
                    connector: *connectors.choose(rng).expect("non-empty"),
                },
            }
        }
    }
}

/// Text mixing ASCII with characters that need escaping or multi-byte UTF-8.
pub fn random_text<R: Rng + ?Sized>(rng: &mut R, max_len: usize) -> String {
    const EXOTIC: &[char] = &['"', '\\', '/', '\n', '\t', '\u{0}', '\u{1f}', 'é', 'ß', '漢', '🦀', '\u{2028}'];
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                *EXOTIC.choose(rng).expect("non-empty")
            } else {
                rng.random_range(b' '..=b'~') as char
            }
        })
        .collect()
}

fn wild_literal<R: Rng + ?Sized>(rng: &mut R) -> Literal {
    match rng.random_range(0..4) {
        0 => Literal::Boolean(rng.random()),
        1 => Literal::Integer(rng.random()),
        2 => {
            // Finite only: JSON has no spelling for NaN or infinities.
            let f = f64::from_bits(rng.random());
            Literal::Float(if f.is_finite() { f } else { rng.random::<f64>() * 1e6 })
        }
        _ => Literal::String(random_text(rng, 12)),
    }
}

fn wild_attributes<R: Rng + ?Sized>(rng: &mut R) -> AttributeMap {
    (0..rng.random_range(0..4))
        .map(|_| (random_text(rng, 8), (0..rng.random_range(0..3)).map(|_| wild_literal(rng)).collect()))
        .collect()
}

fn wild_point<R: Rng + ?Sized>(rng: &mut R) -> crate::model::Point {
    point(rng.random(), rng.random())
}

fn wild_points<R: Rng + ?Sized>(rng: &mut R) -> Vec<crate::model::Point> {
    (0..rng.random_range(0..4)).map(|_| wild_point(rng)).collect()
}

fn wild_routing<R: Rng + ?Sized>(rng: &mut R) -> RoutingPreference {
    let routers = [Router::Manhattan, Router::Direct, Router::Orthogonal];
    let connectors = [Connector::Normal, Connector::Rounded, Connector::Smooth, Connector::Jumpover];
    RoutingPreference { router: *routers.choose(rng).expect("non-empty"), connector: *connectors.choose(rng).expect("non-empty") }
}

fn wild_node_state<R: Rng + ?Sized>(rng: &mut R) -> NodeState {
    NodeState {
        type_name: random_text(rng, 10),
        container_id: ElementId::random(rng),
        x: rng.random(),
        y: rng.random(),
        width: rng.random(),
        height: rng.random(),
        attributes: wild_attributes(rng),
    }
}

fn wild_edge_state<R: Rng + ?Sized>(rng: &mut R) -> EdgeState {
    EdgeState {
        type_name: random_text(rng, 10),
        source_id: ElementId::random(rng),
        target_id: ElementId::random(rng),
        bend_points: wild_points(rng),
        attributes: wild_attributes(rng),
    }
}

/// A structurally arbitrary command of the given class. Field values are
/// not meant to make sense against any model; this feeds codec tests.
pub fn wild_command<R: Rng + ?Sized>(rng: &mut R, class: CommandClass) -> Command {
    let id = ElementId::random(rng);
    match class {
        CommandClass::Interaction => match rng.random_range(0..3) {
            0 => Command::Click { id },
            1 => Command::DoubleClick { id },
            _ => Command::ContextMenu { id, action_id: random_text(rng, 10) },
        },
        CommandClass::Restore => {
            let state = match rng.random_range(0..4) {
                0 => RestoredState::Absent,
                1 => {
                    let s = wild_node_state(rng);
                    RestoredState::Node(Node {
                        id,
                        type_name: s.type_name,
                        x: s.x,
                        y: s.y,
                        width: s.width,
                        height: s.height,
                        container_id: s.container_id,
                        attributes: s.attributes,
                        version: rng.random(),
                        children: rng
                            .random_bool(0.5)
                            .then(|| (0..rng.random_range(0..3)).map(|_| ElementId::random(rng)).collect()),
                    })
                }
                2 => {
                    let s = wild_edge_state(rng);
                    RestoredState::Edge(Edge {
                        id,
                        type_name: s.type_name,
                        source_id: s.source_id,
                        target_id: s.target_id,
                        bend_points: s.bend_points,
                        attributes: s.attributes,
                        version: rng.random(),
                    })
                }
                _ => RestoredState::GraphModel(ModelHeader { attributes: wild_attributes(rng), routing: wild_routing(rng) }),
            };
            Command::Restore { id, state }
        }
        CommandClass::Edit => match rng.random_range(0..10) {
            0 => {
                let s = wild_node_state(rng);
                Command::CreateNode {
                    id,
                    type_name: s.type_name,
                    container_id: s.container_id,
                    x: s.x,
                    y: s.y,
                    width: s.width,
                    height: s.height,
                    initial_attributes: s.attributes,
                }
            }
            1 => Command::DeleteNode { id, old_state: wild_node_state(rng) },
            2 => Command::MoveNode {
                id,
                from_container_id: ElementId::random(rng),
                to_container_id: ElementId::random(rng),
                from: wild_point(rng),
                to: wild_point(rng),
            },
            3 => Command::ResizeNode {
                id,
                old_size: Size::new(rng.random(), rng.random()),
                new_size: Size::new(rng.random(), rng.random()),
            },
            4 => {
                let s = wild_edge_state(rng);
                Command::CreateEdge {
                    id,
                    type_name: s.type_name,
                    source_id: s.source_id,
                    target_id: s.target_id,
                    initial_attributes: s.attributes,
                    bend_points: s.bend_points,
                }
            }
            5 => Command::DeleteEdge { id, old_state: wild_edge_state(rng) },
            6 => Command::ReconnectEdge {
                id,
                old_source: ElementId::random(rng),
                old_target: ElementId::random(rng),
                new_source: ElementId::random(rng),
                new_target: ElementId::random(rng),
            },
            7 => Command::BendEdge { id, old_bend_points: wild_points(rng), new_bend_points: wild_points(rng) },
            8 => Command::SetAttributes {
                id,
                old_assignment: wild_attributes(rng),
                new_assignment: wild_attributes(rng),
            },
            _ => Command::Routing { previous: wild_routing(rng), preference: wild_routing(rng) },
        },
    }
}

/// A well-formed message of a random kind. Init frames carry `snapshot`.
pub fn wild_message<R: Rng + ?Sized>(rng: &mut R, snapshot: &GraphModelInstance) -> Message {
    let kinds = [
        MessageKind::Edit,
        MessageKind::Revert,
        MessageKind::Init,
        MessageKind::InitRequest,
        MessageKind::Interaction,
        MessageKind::Error,
        MessageKind::Report,
    ];
    let kind = *kinds.choose(rng).expect("non-empty");
    let user = random_text(rng, 8);
    let msg_id = MessageId::random(rng);
    let many = |rng: &mut R, class| (0..rng.random_range(1..5)).map(|_| wild_command(rng, class)).collect();
    let mut m = match kind {
        MessageKind::Init => Message::init(msg_id, user, snapshot.clone()),
        MessageKind::Edit => Message::new(msg_id, ElementId::random(rng), user, kind, many(rng, CommandClass::Edit)),
        MessageKind::Revert => {
            Message::new(msg_id, ElementId::random(rng), user, kind, many(rng, CommandClass::Restore))
        }
        MessageKind::Interaction => Message::new(
            msg_id,
            ElementId::random(rng),
            user,
            kind,
            vec![wild_command(rng, CommandClass::Interaction)],
        ),
        _ => Message::new(msg_id, ElementId::random(rng), user, kind, Vec::new()),
    };
    if rng.random_bool(0.3) {
        m.detail = Some(random_text(rng, 30));
    }
    m
}
