//! Constraint guard: embedding, connection and attribute rules checked
//! against the metamodel before a command is allowed to touch the model.
//!
//! Constraints use whitelist semantics. A constraint naming type `S` applies
//! to every subtype of `S`; every applicable constraint must hold, and an
//! addition needs at least one applicable constraint. Upper bounds are
//! enforced per command, lower bounds only by [`validate_model`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::EngineError;
use crate::ids::ElementId;
use crate::meta::{within_upper, Direction, Metamodel, TypeKind, UNBOUNDED};
use crate::model::{AttributeMap, GraphModelInstance};

/// Stable identifier of the rule a rejected command broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RuleId {
    NoEmbedding,
    EmbeddingUpperBound,
    NoConnection,
    ConnectionUpperBound,
    AbstractType,
    NotAContainer,
    ContainmentCycle,
    HasDependents,
    UnknownAttribute,
    AttributeType,
    AttributeCardinality,
    WrongKind,
    Hook,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("rule id serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// A broken rule together with the elements and types involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub rule: RuleId,
    pub element: ElementId,
    pub message: String,
}

impl Violation {
    pub fn new(rule: RuleId, element: ElementId, message: impl Into<String>) -> Self {
        Violation { rule, element, message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on {}: {}", self.rule, self.element, self.message)
    }
}

/// `Ok(None)` when the check passes, `Ok(Some(v))` on a rule violation.
pub type CheckResult = Result<Option<Violation>, EngineError>;

/// Would changing the number of `node_type` children of `container_id` by
/// `delta` keep every embedding constraint satisfied?
pub fn check_embedding(
    model: &GraphModelInstance,
    mm: &Metamodel,
    container_id: ElementId,
    node_type: &str,
    delta: i64,
) -> CheckResult {
    let container_type = match model.container_type(container_id) {
        Some(t) => t,
        None if model.element(container_id).is_some() => {
            return Ok(Some(Violation::new(
                RuleId::NotAContainer,
                container_id,
                "target is not a container",
            )))
        }
        None => return Err(EngineError::UnknownElement(container_id)),
    };
    if delta <= 0 {
        return Ok(None);
    }
    let children = model.children_of(container_id).unwrap_or(&[]);
    let mut matched = false;
    for c in mm.embedding_constraints(container_type) {
        if !mm.is_subtype(node_type, &c.node_type_name) {
            continue;
        }
        matched = true;
        let count = children
            .iter()
            .filter_map(|id| model.node(*id))
            .filter(|n| mm.is_subtype(&n.type_name, &c.node_type_name))
            .count() as i64;
        if !within_upper(count + delta, c.upper) {
            return Ok(Some(Violation::new(
                RuleId::EmbeddingUpperBound,
                container_id,
                format!("{container_type} holds at most {} {}", c.upper, c.node_type_name),
            )));
        }
    }
    if !matched {
        return Ok(Some(Violation::new(
            RuleId::NoEmbedding,
            container_id,
            format!("{container_type} may not contain {node_type}"),
        )));
    }
    Ok(None)
}

/// Would adding `delta` edges of `edge_type` from `source` to `target` keep
/// every connection constraint on both endpoints satisfied?
pub fn check_connection(
    model: &GraphModelInstance,
    mm: &Metamodel,
    source: ElementId,
    target: ElementId,
    edge_type: &str,
    delta: i64,
) -> CheckResult {
    if let Some(v) = check_endpoint(model, mm, source, Direction::Outgoing, edge_type, delta)? {
        return Ok(Some(v));
    }
    check_endpoint(model, mm, target, Direction::Incoming, edge_type, delta)
}

/// One side of [`check_connection`].
pub fn check_endpoint(
    model: &GraphModelInstance,
    mm: &Metamodel,
    node_id: ElementId,
    direction: Direction,
    edge_type: &str,
    delta: i64,
) -> CheckResult {
    let node = match model.element(node_id) {
        Some(e) => match e.as_node() {
            Some(n) => n,
            None => {
                return Ok(Some(Violation::new(
                    RuleId::WrongKind,
                    node_id,
                    "edge endpoints must be nodes",
                )))
            }
        },
        None => return Err(EngineError::UnknownElement(node_id)),
    };
    if delta <= 0 {
        return Ok(None);
    }
    let mut matched = false;
    for c in mm.connection_constraints(&node.type_name, direction) {
        if !mm.is_subtype(edge_type, &c.edge_type_name) {
            continue;
        }
        matched = true;
        let existing: Box<dyn Iterator<Item = _>> = match direction {
            Direction::Outgoing => Box::new(model.outgoing(node_id)),
            Direction::Incoming => Box::new(model.incoming(node_id)),
        };
        let count = existing.filter(|e| mm.is_subtype(&e.type_name, &c.edge_type_name)).count() as i64;
        if !within_upper(count + delta, c.upper) {
            return Ok(Some(Violation::new(
                RuleId::ConnectionUpperBound,
                node_id,
                format!("{} allows at most {} {direction} {}", node.type_name, c.upper, c.edge_type_name),
            )));
        }
    }
    if !matched {
        return Ok(Some(Violation::new(
            RuleId::NoConnection,
            node_id,
            format!("{} has no {direction} {edge_type}", node.type_name),
        )));
    }
    Ok(None)
}

/// Every assigned attribute exists on the type, has a conforming value and
/// does not exceed its upper bound. Lower bounds are a validation concern.
pub fn check_attributes(
    mm: &Metamodel,
    element: ElementId,
    type_name: &str,
    assignment: &AttributeMap,
) -> Option<Violation> {
    for (name, values) in assignment {
        let Some(def) = mm.attribute(type_name, name) else {
            return Some(Violation::new(
                RuleId::UnknownAttribute,
                element,
                format!("{type_name} has no attribute {name}"),
            ));
        };
        if let Some(bad) = values.iter().find(|v| !def.value_type.admits(v)) {
            return Some(Violation::new(
                RuleId::AttributeType,
                element,
                format!("{name}: `{bad}` is not a {}", def.value_type),
            ));
        }
        if !def.admits_count(values.len()) {
            return Some(Violation::new(
                RuleId::AttributeCardinality,
                element,
                format!("{name} takes at most {} values", def.upper),
            ));
        }
    }
    None
}

/// Attribute map seeded with the declared defaults of a type.
pub fn default_attributes(mm: &Metamodel, type_name: &str) -> AttributeMap {
    mm.flatten_attributes(type_name)
        .map(|attrs| {
            attrs
                .iter()
                .filter_map(|a| a.default_value.clone().map(|v| (a.name.clone(), vec![v])))
                .collect()
        })
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ModelRule {
    LowerBound,
    UpperBound,
    MissingAttribute,
    InvalidAttribute,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelDiagnostic {
    pub rule: ModelRule,
    pub element: ElementId,
    pub message: String,
}

impl fmt::Display for ModelDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} on {}: {}", self.rule, self.element, self.message)
    }
}

/// Extra, language-specific model checks run by [`validate_model_with`].
pub trait ModelValidator {
    fn validate(&self, model: &GraphModelInstance, mm: &Metamodel) -> Vec<ModelDiagnostic>;
}

impl<F> ModelValidator for F
where
    F: Fn(&GraphModelInstance, &Metamodel) -> Vec<ModelDiagnostic>,
{
    fn validate(&self, model: &GraphModelInstance, mm: &Metamodel) -> Vec<ModelDiagnostic> {
        self(model, mm)
    }
}

/// Full check of a model, including lower bounds. Empty iff valid.
pub fn validate_model(model: &GraphModelInstance, mm: &Metamodel) -> Vec<ModelDiagnostic> {
    validate_model_with(model, mm, &[])
}

pub fn validate_model_with(
    model: &GraphModelInstance,
    mm: &Metamodel,
    validators: &[&dyn ModelValidator],
) -> Vec<ModelDiagnostic> {
    let mut out = Vec::new();
    let diag = |rule, element, message: String| ModelDiagnostic { rule, element, message };

    let mut containers: Vec<(ElementId, &str)> = vec![(model.id, model.type_name.as_str())];
    containers.extend(model.nodes().filter(|n| n.is_container()).map(|n| (n.id, n.type_name.as_str())));
    for (cid, ctype) in containers {
        let children = model.children_of(cid).unwrap_or(&[]);
        for c in mm.embedding_constraints(ctype) {
            let count = children
                .iter()
                .filter_map(|id| model.node(*id))
                .filter(|n| mm.is_subtype(&n.type_name, &c.node_type_name))
                .count() as i64;
            if count < c.lower {
                out.push(diag(
                    ModelRule::LowerBound,
                    cid,
                    format!("{ctype} needs at least {} {}, has {count}", c.lower, c.node_type_name),
                ));
            }
            if !within_upper(count, c.upper) {
                out.push(diag(
                    ModelRule::UpperBound,
                    cid,
                    format!("{ctype} allows at most {} {}, has {count}", c.upper, c.node_type_name),
                ));
            }
        }
    }

    for node in model.nodes() {
        for dir in [Direction::Outgoing, Direction::Incoming] {
            for c in mm.connection_constraints(&node.type_name, dir) {
                let edges: Vec<_> = match dir {
                    Direction::Outgoing => model.outgoing(node.id).collect(),
                    Direction::Incoming => model.incoming(node.id).collect(),
                };
                let count =
                    edges.iter().filter(|e| mm.is_subtype(&e.type_name, &c.edge_type_name)).count() as i64;
                if count < c.lower {
                    out.push(diag(
                        ModelRule::LowerBound,
                        node.id,
                        format!("{dir} {}: needs at least {}, has {count}", c.edge_type_name, c.lower),
                    ));
                }
                if c.upper != UNBOUNDED && count > c.upper {
                    out.push(diag(
                        ModelRule::UpperBound,
                        node.id,
                        format!("{dir} {}: allows at most {}, has {count}", c.edge_type_name, c.upper),
                    ));
                }
            }
        }
    }

    let mut typed: Vec<(ElementId, &str, &AttributeMap)> =
        vec![(model.id, model.type_name.as_str(), &model.attributes)];
    typed.extend(model.elements.values().map(|e| (e.id(), e.type_name(), e.attributes())));
    for (id, type_name, attrs) in typed {
        if let Some(v) = check_attributes(mm, id, type_name, attrs) {
            out.push(diag(ModelRule::InvalidAttribute, id, v.message));
        }
        for def in mm.flatten_attributes(type_name).unwrap_or(&[]) {
            let n = attrs.get(&def.name).map_or(0, Vec::len) as i64;
            if n < def.lower {
                out.push(diag(
                    ModelRule::MissingAttribute,
                    id,
                    format!("{type_name}.{} needs at least {} values", def.name, def.lower),
                ));
            }
        }
        if mm.kind_of(type_name).is_none() {
            out.push(diag(ModelRule::InvalidAttribute, id, format!("unknown type {type_name}")));
        } else if mm.kind_of(type_name) != Some(TypeKind::GraphModel) && mm.is_abstract(type_name) {
            out.push(diag(ModelRule::InvalidAttribute, id, format!("{type_name} is abstract")));
        }
    }

    for v in validators {
        out.extend(v.validate(model, mm));
    }
    out
}
