use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::style::{Graphic, Shape, ShapeGeometry};
use super::ui::{Component, GRID_COLUMNS};
use super::{cardinality_ok, AttributeDef, MetamodelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MetaRule {
    DuplicateName,
    UnresolvedReference,
    KindMismatch,
    InheritanceCycle,
    DuplicateAttribute,
    InvalidCardinality,
    InvalidDefault,
    EmptyEnum,
    MissingStyle,
    DuplicateStyle,
    InvalidShape,
    InvalidDecorator,
    InvalidLayout,
    MissingCanvas,
}

impl MetaRule {
    /// Rules that leave names unbound; a metamodel violating them cannot be indexed.
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            MetaRule::DuplicateName
                | MetaRule::UnresolvedReference
                | MetaRule::KindMismatch
                | MetaRule::InheritanceCycle
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule: MetaRule,
    /// The offending element type, style, or profile name.
    pub element: String,
    pub message: String,
}

impl Diagnostic {
    fn new(rule: MetaRule, element: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { rule, element: element.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({}): {}", self.rule, self.element, self.message)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Graph,
    Node,
    Container,
    Edge,
}

struct TypeInfo<'a> {
    kind: Kind,
    is_abstract: bool,
    super_type: Option<&'a str>,
    attributes: &'a [AttributeDef],
}

/// Checks every metamodel invariant. Empty result means the metamodel is valid.
pub fn validate_metamodel(spec: &MetamodelSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut types: BTreeMap<&str, TypeInfo<'_>> = BTreeMap::new();

    let mut entries: Vec<(&str, TypeInfo<'_>)> = vec![(
        spec.graph_model.name.as_str(),
        TypeInfo {
            kind: Kind::Graph,
            is_abstract: false,
            super_type: None,
            attributes: &spec.graph_model.attributes,
        },
    )];
    for t in &spec.node_types {
        entries.push((
            &t.name,
            TypeInfo {
                kind: Kind::Node,
                is_abstract: t.r#abstract,
                super_type: t.super_type.as_deref(),
                attributes: &t.attributes,
            },
        ));
    }
    for t in &spec.container_types {
        entries.push((
            &t.name,
            TypeInfo {
                kind: Kind::Container,
                is_abstract: t.r#abstract,
                super_type: t.super_type.as_deref(),
                attributes: &t.attributes,
            },
        ));
    }
    for t in &spec.edge_types {
        entries.push((
            &t.name,
            TypeInfo {
                kind: Kind::Edge,
                is_abstract: t.r#abstract,
                super_type: t.super_type.as_deref(),
                attributes: &t.attributes,
            },
        ));
    }
    for (name, info) in entries {
        if types.contains_key(name) {
            out.push(Diagnostic::new(
                MetaRule::DuplicateName,
                name,
                format!("type name `{name}` declared more than once"),
            ));
        } else {
            types.insert(name, info);
        }
    }

    // Inheritance references and kinds.
    for (name, info) in &types {
        let Some(sup) = info.super_type else { continue };
        match types.get(sup) {
            None => out.push(Diagnostic::new(
                MetaRule::UnresolvedReference,
                sup,
                format!("superType `{sup}` of `{name}` does not exist"),
            )),
            Some(parent) => {
                let ok = match info.kind {
                    Kind::Node => parent.kind == Kind::Node,
                    Kind::Container => matches!(parent.kind, Kind::Node | Kind::Container),
                    Kind::Edge => parent.kind == Kind::Edge,
                    Kind::Graph => false,
                };
                if !ok {
                    out.push(Diagnostic::new(
                        MetaRule::KindMismatch,
                        *name,
                        format!("`{name}` cannot inherit from `{sup}`"),
                    ));
                }
            }
        }
    }

    // Cycles: walk each chain, bounded by the number of types.
    let mut cyclic: BTreeSet<&str> = BTreeSet::new();
    for name in types.keys() {
        let mut seen = BTreeSet::new();
        let mut cur = *name;
        while let Some(sup) = types.get(cur).and_then(|t| t.super_type) {
            if !seen.insert(cur) {
                break;
            }
            if sup == *name {
                cyclic.insert(name);
                break;
            }
            cur = sup;
        }
    }
    for name in &cyclic {
        out.push(Diagnostic::new(
            MetaRule::InheritanceCycle,
            *name,
            format!("`{name}` inherits from itself"),
        ));
    }

    // Attributes: per-type validity and uniqueness along the flattened chain.
    for (name, info) in &types {
        for attr in info.attributes {
            check_attribute(&mut out, name, attr);
        }
        if cyclic.contains(name) {
            continue;
        }
        let mut chain = vec![info];
        let mut cur = info.super_type;
        while let Some(sup) = cur {
            let Some(parent) = types.get(sup) else { break };
            if cyclic.contains(sup) {
                chain.clear();
                break;
            }
            chain.push(parent);
            cur = parent.super_type;
        }
        let mut seen = BTreeSet::new();
        for t in chain.iter().rev() {
            for attr in t.attributes {
                if !seen.insert(attr.name.as_str()) {
                    out.push(Diagnostic::new(
                        MetaRule::DuplicateAttribute,
                        *name,
                        format!("attribute `{}` declared twice in the hierarchy of `{name}`", attr.name),
                    ));
                }
            }
        }
    }

    // Embedding and connection constraint references.
    let node_like = |n: &str| matches!(types.get(n).map(|t| t.kind), Some(Kind::Node | Kind::Container));
    let edge_like = |n: &str| matches!(types.get(n).map(|t| t.kind), Some(Kind::Edge));
    let embeddings = std::iter::once((&spec.graph_model.name, &spec.graph_model.embedding))
        .chain(spec.container_types.iter().map(|c| (&c.name, &c.embedding)));
    for (owner, constraints) in embeddings {
        for c in constraints {
            if !node_like(&c.node_type_name) {
                out.push(Diagnostic::new(
                    MetaRule::UnresolvedReference,
                    &c.node_type_name,
                    format!("embedding constraint of `{owner}` names unknown node type `{}`", c.node_type_name),
                ));
            }
            if !cardinality_ok(c.lower, c.upper) {
                out.push(Diagnostic::new(
                    MetaRule::InvalidCardinality,
                    owner,
                    format!("embedding `{}` has bounds [{}, {}]", c.node_type_name, c.lower, c.upper),
                ));
            }
        }
    }
    let connections = spec
        .node_types
        .iter()
        .map(|n| (&n.name, &n.connections))
        .chain(spec.container_types.iter().map(|c| (&c.name, &c.connections)));
    for (owner, constraints) in connections {
        for c in constraints {
            if !edge_like(&c.edge_type_name) {
                out.push(Diagnostic::new(
                    MetaRule::UnresolvedReference,
                    &c.edge_type_name,
                    format!("{} connection of `{owner}` names unknown edge type `{}`", c.direction, c.edge_type_name),
                ));
            }
            if !cardinality_ok(c.lower, c.upper) {
                out.push(Diagnostic::new(
                    MetaRule::InvalidCardinality,
                    owner,
                    format!("connection `{}` has bounds [{}, {}]", c.edge_type_name, c.lower, c.upper),
                ));
            }
        }
    }

    check_styles(&mut out, spec, &types);
    check_profiles(&mut out, spec);
    out
}

fn check_attribute(out: &mut Vec<Diagnostic>, owner: &str, attr: &AttributeDef) {
    if !cardinality_ok(attr.lower, attr.upper) {
        out.push(Diagnostic::new(
            MetaRule::InvalidCardinality,
            owner,
            format!("attribute `{}` has bounds [{}, {}]", attr.name, attr.lower, attr.upper),
        ));
    }
    if let super::ValueType::Enum(lits) = &attr.value_type {
        if lits.is_empty() {
            out.push(Diagnostic::new(
                MetaRule::EmptyEnum,
                owner,
                format!("enum attribute `{}` has no literals", attr.name),
            ));
        }
    }
    if let Some(default) = &attr.default_value {
        if !attr.value_type.admits(default) {
            out.push(Diagnostic::new(
                MetaRule::InvalidDefault,
                owner,
                format!("default `{default}` of `{}` is not a {}", attr.name, attr.value_type),
            ));
        }
    }
}

fn check_styles(out: &mut Vec<Diagnostic>, spec: &MetamodelSpec, types: &BTreeMap<&str, TypeInfo<'_>>) {
    let mut node_styles: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &spec.styles.node_styles {
        match types.get(s.type_name.as_str()).map(|t| t.kind) {
            Some(Kind::Node | Kind::Container) => *node_styles.entry(&s.type_name).or_default() += 1,
            _ => out.push(Diagnostic::new(
                MetaRule::UnresolvedReference,
                &s.type_name,
                format!("node style names unknown node type `{}`", s.type_name),
            )),
        }
        check_shape(out, &s.type_name, &s.main_shape);
    }
    let mut edge_styles: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &spec.styles.edge_styles {
        match types.get(s.type_name.as_str()).map(|t| t.kind) {
            Some(Kind::Edge) => *edge_styles.entry(&s.type_name).or_default() += 1,
            _ => out.push(Diagnostic::new(
                MetaRule::UnresolvedReference,
                &s.type_name,
                format!("edge style names unknown edge type `{}`", s.type_name),
            )),
        }
        for d in &s.decorators {
            if !(0.0..=1.0).contains(&d.location) {
                out.push(Diagnostic::new(
                    MetaRule::InvalidDecorator,
                    &s.type_name,
                    format!("decorator location {} outside [0, 1]", d.location),
                ));
            }
            if let Graphic::Shape(shape) = &d.graphic {
                check_shape(out, &s.type_name, shape);
            }
        }
    }
    for (name, info) in types {
        if info.is_abstract || info.kind == Kind::Graph {
            continue;
        }
        let count = if info.kind == Kind::Edge {
            edge_styles.get(name).copied().unwrap_or(0)
        } else {
            node_styles.get(name).copied().unwrap_or(0)
        };
        match count {
            0 => out.push(Diagnostic::new(
                MetaRule::MissingStyle,
                *name,
                format!("non-abstract type `{name}` has no style"),
            )),
            1 => {}
            n => out.push(Diagnostic::new(
                MetaRule::DuplicateStyle,
                *name,
                format!("type `{name}` has {n} styles"),
            )),
        }
    }
}

fn check_shape(out: &mut Vec<Diagnostic>, owner: &str, shape: &Shape) {
    match &shape.geometry {
        ShapeGeometry::Text { .. } if !shape.inner_shapes.is_empty() => out.push(Diagnostic::new(
            MetaRule::InvalidShape,
            owner,
            "text shapes cannot contain inner shapes",
        )),
        ShapeGeometry::Polyline { points } if points.len() < 2 => out.push(Diagnostic::new(
            MetaRule::InvalidShape,
            owner,
            format!("polyline needs at least 2 points, has {}", points.len()),
        )),
        _ => {}
    }
    for inner in &shape.inner_shapes {
        check_shape(out, owner, inner);
    }
}

fn check_profiles(out: &mut Vec<Diagnostic>, spec: &MetamodelSpec) {
    let mut names = BTreeSet::new();
    for p in &spec.ui_profiles {
        if !names.insert(p.name.as_str()) {
            out.push(Diagnostic::new(
                MetaRule::DuplicateName,
                &p.name,
                format!("UI profile `{}` declared more than once", p.name),
            ));
        }
        for (i, row) in p.rows.iter().enumerate() {
            let total: u32 = row.iter().map(|w| w.columns).sum();
            if total > GRID_COLUMNS || row.iter().any(|w| w.columns == 0 || w.columns > GRID_COLUMNS) {
                out.push(Diagnostic::new(
                    MetaRule::InvalidLayout,
                    &p.name,
                    format!("row {i} uses {total} columns; widgets need 1..=12 and a row at most 12"),
                ));
            }
        }
        let canvases = p.widgets().filter(|w| w.component == Component::Canvas).count();
        if canvases != 1 {
            out.push(Diagnostic::new(
                MetaRule::MissingCanvas,
                &p.name,
                format!("profile needs exactly one CANVAS widget, has {canvases}"),
            ));
        }
    }
}
