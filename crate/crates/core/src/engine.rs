//! Command application, inversion and state restoration.
//!
//! `apply_command` is all-or-nothing: a rejected command leaves the model
//! bit-identical. Inverses are computed from the state actually replaced,
//! not from the old-state fields the command carries.

use std::collections::BTreeSet;

use crate::guard::{check_attributes, check_embedding, check_endpoint, RuleId, Violation};
use crate::ids::ElementId;
use crate::meta::{Direction, Metamodel, TypeKind};
use crate::model::{normalize_attributes, Edge, Element, GraphModelInstance, Node};
use crate::protocol::{Command, EdgeState, NodeState, RestoredState};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("unknown element {0}")]
    UnknownElement(ElementId),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("malformed command: {0}")]
    Malformed(String),
    #[error("command has no inverse")]
    NotInvertible,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandOutcome {
    Applied { inverse: Command },
    RejectedConstraint(Violation),
    /// The command's old-state fields do not match the element.
    RejectedStale(ElementId),
}

impl CommandOutcome {
    pub fn is_applied(&self) -> bool {
        matches!(self, CommandOutcome::Applied { .. })
    }
}

/// Checks and applies one command. With `check_stale` unset the old-state
/// fields are trusted; that mode is only for replaying already-checked history.
pub fn apply_command(
    model: &mut GraphModelInstance,
    mm: &Metamodel,
    cmd: &Command,
    check_stale: bool,
) -> Result<CommandOutcome, EngineError> {
    macro_rules! reject {
        ($v:expr) => {
            if let Some(v) = $v {
                return Ok(CommandOutcome::RejectedConstraint(v));
            }
        };
    }
    let stale = |id| Ok(CommandOutcome::RejectedStale(id));

    let inverse = match cmd {
        Command::CreateNode { id, type_name, container_id, x, y, width, height, initial_attributes } => {
            let kind = mm.kind_of(type_name).ok_or_else(|| EngineError::UnknownType(type_name.clone()))?;
            if !kind.is_node_like() {
                return Err(EngineError::Malformed(format!("{type_name} is not a node type")));
            }
            fresh_id(model, *id)?;
            if *width == 0 || *height == 0 {
                return Err(EngineError::Malformed("node size must be positive".into()));
            }
            reject!(abstract_check(mm, *id, type_name));
            reject!(check_embedding(model, mm, *container_id, type_name, 1)?);
            let attributes = normalize_attributes(initial_attributes);
            reject!(check_attributes(mm, *id, type_name, &attributes));
            let node = Node {
                id: *id,
                type_name: type_name.clone(),
                x: *x,
                y: *y,
                width: *width,
                height: *height,
                container_id: *container_id,
                attributes,
                version: 0,
                children: (kind == TypeKind::Container).then(Vec::new),
            };
            let inverse = Command::DeleteNode { id: *id, old_state: NodeState::from(&node) };
            model.elements.insert(*id, Element::Node(node));
            model.attach_child(*container_id, *id);
            inverse
        }

        Command::DeleteNode { id, old_state } => {
            let node = model.node(*id).ok_or(EngineError::UnknownElement(*id))?;
            // Lenient on purpose: a delete wins over concurrent edits of the node.
            if check_stale && node.type_name != old_state.type_name {
                return stale(*id);
            }
            if node.children.as_ref().is_some_and(|c| !c.is_empty()) || model.incident(*id).next().is_some() {
                return Ok(CommandOutcome::RejectedConstraint(Violation::new(
                    RuleId::HasDependents,
                    *id,
                    "delete children and incident edges first",
                )));
            }
            let inverse = create_node_from(node);
            let container = node.container_id;
            model.elements.remove(id);
            model.detach_child(container, *id);
            inverse
        }

        Command::MoveNode { id, from_container_id, to_container_id, from, to } => {
            let node = model.node(*id).ok_or(EngineError::UnknownElement(*id))?;
            if check_stale && (node.container_id != *from_container_id || node.position() != *from) {
                return stale(*id);
            }
            let current_container = node.container_id;
            let current_pos = node.position();
            let type_name = node.type_name.clone();
            if *to_container_id != current_container {
                if !model.is_element_container(*to_container_id) && model.element(*to_container_id).is_none() {
                    return Err(EngineError::UnknownElement(*to_container_id));
                }
                if model.is_within(*to_container_id, *id) {
                    return Ok(CommandOutcome::RejectedConstraint(Violation::new(
                        RuleId::ContainmentCycle,
                        *id,
                        "a container cannot move into itself",
                    )));
                }
                reject!(check_embedding(model, mm, *to_container_id, &type_name, 1)?);
                model.detach_child(current_container, *id);
                model.attach_child(*to_container_id, *id);
            }
            let node = model.node_mut(*id).expect("checked above");
            node.container_id = *to_container_id;
            node.x = to.x;
            node.y = to.y;
            node.version += 1;
            Command::MoveNode {
                id: *id,
                from_container_id: *to_container_id,
                to_container_id: current_container,
                from: *to,
                to: current_pos,
            }
        }

        Command::ResizeNode { id, old_size, new_size } => {
            let node = model.node(*id).ok_or(EngineError::UnknownElement(*id))?;
            if check_stale && node.size() != *old_size {
                return stale(*id);
            }
            if new_size.width == 0 || new_size.height == 0 {
                return Err(EngineError::Malformed("node size must be positive".into()));
            }
            let current = node.size();
            let node = model.node_mut(*id).expect("checked above");
            node.width = new_size.width;
            node.height = new_size.height;
            node.version += 1;
            Command::ResizeNode { id: *id, old_size: *new_size, new_size: current }
        }

        Command::CreateEdge { id, type_name, source_id, target_id, initial_attributes, bend_points } => {
            let kind = mm.kind_of(type_name).ok_or_else(|| EngineError::UnknownType(type_name.clone()))?;
            if kind != TypeKind::Edge {
                return Err(EngineError::Malformed(format!("{type_name} is not an edge type")));
            }
            fresh_id(model, *id)?;
            reject!(abstract_check(mm, *id, type_name));
            reject!(check_endpoint(model, mm, *source_id, Direction::Outgoing, type_name, 1)?);
            reject!(check_endpoint(model, mm, *target_id, Direction::Incoming, type_name, 1)?);
            let attributes = normalize_attributes(initial_attributes);
            reject!(check_attributes(mm, *id, type_name, &attributes));
            let edge = Edge {
                id: *id,
                type_name: type_name.clone(),
                source_id: *source_id,
                target_id: *target_id,
                bend_points: bend_points.clone(),
                attributes,
                version: 0,
            };
            let inverse = Command::DeleteEdge { id: *id, old_state: EdgeState::from(&edge) };
            model.elements.insert(*id, Element::Edge(edge));
            inverse
        }

        Command::DeleteEdge { id, old_state } => {
            let edge = model.edge(*id).ok_or(EngineError::UnknownElement(*id))?;
            if check_stale && edge.type_name != old_state.type_name {
                return stale(*id);
            }
            let inverse = create_edge_from(edge);
            model.elements.remove(id);
            inverse
        }

        Command::ReconnectEdge { id, old_source, old_target, new_source, new_target } => {
            let edge = model.edge(*id).ok_or(EngineError::UnknownElement(*id))?;
            if check_stale && (edge.source_id != *old_source || edge.target_id != *old_target) {
                return stale(*id);
            }
            let (cur_source, cur_target) = (edge.source_id, edge.target_id);
            let type_name = edge.type_name.clone();
            if *new_source != cur_source {
                reject!(check_endpoint(model, mm, *new_source, Direction::Outgoing, &type_name, 1)?);
            }
            if *new_target != cur_target {
                reject!(check_endpoint(model, mm, *new_target, Direction::Incoming, &type_name, 1)?);
            }
            let edge = model.edge_mut(*id).expect("checked above");
            edge.source_id = *new_source;
            edge.target_id = *new_target;
            edge.version += 1;
            Command::ReconnectEdge {
                id: *id,
                old_source: *new_source,
                old_target: *new_target,
                new_source: cur_source,
                new_target: cur_target,
            }
        }

        Command::BendEdge { id, old_bend_points, new_bend_points } => {
            let edge = model.edge(*id).ok_or(EngineError::UnknownElement(*id))?;
            if check_stale && edge.bend_points != *old_bend_points {
                return stale(*id);
            }
            let edge = model.edge_mut(*id).expect("checked above");
            let current = std::mem::replace(&mut edge.bend_points, new_bend_points.clone());
            edge.version += 1;
            Command::BendEdge { id: *id, old_bend_points: new_bend_points.clone(), new_bend_points: current }
        }

        Command::SetAttributes { id, old_assignment, new_assignment } => {
            let new = normalize_attributes(new_assignment);
            let (type_name, current) = if *id == model.id {
                (model.type_name.clone(), &model.attributes)
            } else {
                let e = model.element(*id).ok_or(EngineError::UnknownElement(*id))?;
                (e.type_name().to_string(), e.attributes())
            };
            if check_stale && *current != normalize_attributes(old_assignment) {
                return stale(*id);
            }
            reject!(check_attributes(mm, *id, &type_name, &new));
            let current = current.clone();
            if *id == model.id {
                model.attributes = new.clone();
            } else {
                match model.elements.get_mut(id).expect("checked above") {
                    Element::Node(n) => n.attributes = new.clone(),
                    Element::Edge(e) => e.attributes = new.clone(),
                }
                model.elements.get_mut(id).expect("checked above").bump_version();
            }
            Command::SetAttributes { id: *id, old_assignment: new, new_assignment: current }
        }

        Command::Routing { previous, preference } => {
            if check_stale && model.routing != *previous {
                return stale(model.id);
            }
            let current = std::mem::replace(&mut model.routing, *preference);
            Command::Routing { previous: *preference, preference: current }
        }

        Command::Click { .. }
        | Command::DoubleClick { .. }
        | Command::ContextMenu { .. }
        | Command::Restore { .. } => {
            return Err(EngineError::Malformed(format!("{} does not edit the model", cmd.type_name())))
        }
    };
    model.model_version += 1;
    Ok(CommandOutcome::Applied { inverse })
}

fn fresh_id(model: &GraphModelInstance, id: ElementId) -> Result<(), EngineError> {
    if id == model.id || model.elements.contains_key(&id) {
        Err(EngineError::Malformed(format!("id {id} already in use")))
    } else {
        Ok(())
    }
}

fn abstract_check(mm: &Metamodel, id: ElementId, type_name: &str) -> Option<Violation> {
    mm.is_abstract(type_name)
        .then(|| Violation::new(RuleId::AbstractType, id, format!("{type_name} is abstract")))
}

fn create_node_from(node: &Node) -> Command {
    Command::CreateNode {
        id: node.id,
        type_name: node.type_name.clone(),
        container_id: node.container_id,
        x: node.x,
        y: node.y,
        width: node.width,
        height: node.height,
        initial_attributes: node.attributes.clone(),
    }
}

fn create_edge_from(edge: &Edge) -> Command {
    Command::CreateEdge {
        id: edge.id,
        type_name: edge.type_name.clone(),
        source_id: edge.source_id,
        target_id: edge.target_id,
        initial_attributes: edge.attributes.clone(),
        bend_points: edge.bend_points.clone(),
    }
}

/// Inverse computed from the command alone, trusting its old-state fields.
pub fn invert(cmd: &Command) -> Result<Command, EngineError> {
    Ok(match cmd {
        Command::CreateNode { id, type_name, container_id, x, y, width, height, initial_attributes } => {
            Command::DeleteNode {
                id: *id,
                old_state: NodeState {
                    type_name: type_name.clone(),
                    container_id: *container_id,
                    x: *x,
                    y: *y,
                    width: *width,
                    height: *height,
                    attributes: initial_attributes.clone(),
                },
            }
        }
        Command::DeleteNode { id, old_state: s } => Command::CreateNode {
            id: *id,
            type_name: s.type_name.clone(),
            container_id: s.container_id,
            x: s.x,
            y: s.y,
            width: s.width,
            height: s.height,
            initial_attributes: s.attributes.clone(),
        },
        Command::MoveNode { id, from_container_id, to_container_id, from, to } => Command::MoveNode {
            id: *id,
            from_container_id: *to_container_id,
            to_container_id: *from_container_id,
            from: *to,
            to: *from,
        },
        Command::ResizeNode { id, old_size, new_size } => {
            Command::ResizeNode { id: *id, old_size: *new_size, new_size: *old_size }
        }
        Command::CreateEdge { id, type_name, source_id, target_id, initial_attributes, bend_points } => {
            Command::DeleteEdge {
                id: *id,
                old_state: EdgeState {
                    type_name: type_name.clone(),
                    source_id: *source_id,
                    target_id: *target_id,
                    bend_points: bend_points.clone(),
                    attributes: initial_attributes.clone(),
                },
            }
        }
        Command::DeleteEdge { id, old_state: s } => Command::CreateEdge {
            id: *id,
            type_name: s.type_name.clone(),
            source_id: s.source_id,
            target_id: s.target_id,
            initial_attributes: s.attributes.clone(),
            bend_points: s.bend_points.clone(),
        },
        Command::ReconnectEdge { id, old_source, old_target, new_source, new_target } => {
            Command::ReconnectEdge {
                id: *id,
                old_source: *new_source,
                old_target: *new_target,
                new_source: *old_source,
                new_target: *old_target,
            }
        }
        Command::BendEdge { id, old_bend_points, new_bend_points } => Command::BendEdge {
            id: *id,
            old_bend_points: new_bend_points.clone(),
            new_bend_points: old_bend_points.clone(),
        },
        Command::SetAttributes { id, old_assignment, new_assignment } => Command::SetAttributes {
            id: *id,
            old_assignment: new_assignment.clone(),
            new_assignment: old_assignment.clone(),
        },
        Command::Routing { previous, preference } => {
            Command::Routing { previous: *preference, preference: *previous }
        }
        Command::Click { .. }
        | Command::DoubleClick { .. }
        | Command::ContextMenu { .. }
        | Command::Restore { .. } => return Err(EngineError::NotInvertible),
    })
}

/// Current authoritative state of `id`, as sent in a revert.
pub fn snapshot_state(model: &GraphModelInstance, id: ElementId) -> RestoredState {
    if id == model.id {
        return RestoredState::GraphModel(crate::protocol::ModelHeader {
            attributes: model.attributes.clone(),
            routing: model.routing,
        });
    }
    match model.element(id) {
        None => RestoredState::Absent,
        Some(Element::Node(n)) => RestoredState::Node(n.clone()),
        Some(Element::Edge(e)) => RestoredState::Edge(e.clone()),
    }
}

/// Overwrites one element with server state. Removing a node also removes
/// whatever depended on it, keeping the replica internally consistent.
pub fn restore(model: &mut GraphModelInstance, id: ElementId, state: &RestoredState) -> Result<(), EngineError> {
    match state {
        RestoredState::GraphModel(h) => {
            if id != model.id {
                return Err(EngineError::Malformed("model header restored onto an element".into()));
            }
            model.attributes = h.attributes.clone();
            model.routing = h.routing;
        }
        RestoredState::Absent => remove_cascading(model, id),
        RestoredState::Node(n) => {
            if n.id != id {
                return Err(EngineError::Malformed("restored node id mismatch".into()));
            }
            if !model.is_element_container(n.container_id) || model.is_within(n.container_id, id) {
                return Err(EngineError::UnknownElement(n.container_id));
            }
            let mut node = n.clone();
            match model.elements.get(&id) {
                Some(Element::Node(old)) => {
                    // Children are owned by the replica, not by the payload.
                    node.children = match (&old.children, &node.children) {
                        (Some(c), Some(_)) => Some(c.clone()),
                        (_, c) => c.as_ref().map(|_| Vec::new()),
                    };
                    if old.children.as_ref().is_some_and(|c| !c.is_empty()) && node.children.is_none() {
                        return Err(EngineError::Malformed("container restored as plain node".into()));
                    }
                    let old_container = old.container_id;
                    model.detach_child(old_container, id);
                }
                Some(Element::Edge(_)) => remove_cascading(model, id),
                None => {
                    node.children = node.children.as_ref().map(|_| {
                        model.nodes().filter(|c| c.container_id == id).map(|c| c.id).collect::<BTreeSet<_>>().into_iter().collect()
                    });
                }
            }
            let container = node.container_id;
            model.elements.insert(id, Element::Node(node));
            model.attach_child(container, id);
        }
        RestoredState::Edge(e) => {
            if e.id != id {
                return Err(EngineError::Malformed("restored edge id mismatch".into()));
            }
            for end in [e.source_id, e.target_id] {
                if model.node(end).is_none() {
                    return Err(EngineError::UnknownElement(end));
                }
            }
            if let Some(Element::Node(_)) = model.elements.get(&id) {
                remove_cascading(model, id);
            }
            model.elements.insert(id, Element::Edge(e.clone()));
        }
    }
    Ok(())
}

fn remove_cascading(model: &mut GraphModelInstance, id: ElementId) {
    let Some(el) = model.elements.remove(&id) else { return };
    if let Element::Node(n) = el {
        model.detach_child(n.container_id, id);
        let edges: Vec<ElementId> = model.incident(id).map(|e| e.id).collect();
        for e in edges {
            model.elements.remove(&e);
        }
        for child in n.children.unwrap_or_default() {
            remove_cascading(model, child);
        }
    }
}

/// Commands deleting `id` together with everything depending on it:
/// incident edges first, then nodes children-before-parents.
pub fn deletion_commands(model: &GraphModelInstance, id: ElementId) -> Result<Vec<Command>, EngineError> {
    match model.element(id) {
        None => Err(EngineError::UnknownElement(id)),
        Some(Element::Edge(e)) => Ok(vec![Command::DeleteEdge { id, old_state: EdgeState::from(e) }]),
        Some(Element::Node(_)) => {
            let mut nodes = Vec::new();
            post_order(model, id, &mut nodes);
            let subtree: BTreeSet<ElementId> = nodes.iter().copied().collect();
            let mut out: Vec<Command> = model
                .edges()
                .filter(|e| subtree.contains(&e.source_id) || subtree.contains(&e.target_id))
                .map(|e| Command::DeleteEdge { id: e.id, old_state: EdgeState::from(e) })
                .collect();
            out.extend(nodes.into_iter().map(|n| {
                let node = model.node(n).expect("subtree node");
                Command::DeleteNode { id: n, old_state: NodeState::from(node) }
            }));
            Ok(out)
        }
    }
}

fn post_order(model: &GraphModelInstance, id: ElementId, out: &mut Vec<ElementId>) {
    if let Some(children) = model.node(id).and_then(|n| n.children.as_ref()) {
        for c in children {
            post_order(model, *c, out);
        }
    }
    out.push(id);
}
