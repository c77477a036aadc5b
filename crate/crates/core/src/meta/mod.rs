//! The metamodel language: abstract syntax (element types, attributes and
//! cardinality constraints), concrete syntax (shape styles) and UI profiles,
//! all declared in one JSON document.

mod parse;
mod resolve;
pub mod style;
pub mod ui;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parse::{parse_metamodel, serialize_metamodel, MetaError};
pub use resolve::{Metamodel, TypeKind};
pub use style::{
    Appearance, Color, Decorator, EdgeStyle, Font, Graphic, HAlign, LineStyle, NodeStyle, Point,
    Position, Shape, ShapeGeometry, StyleSet, VAlign,
};
pub use ui::{Component, UiProfile, Widget, WidgetStyle};
pub use validate::{validate_metamodel, Diagnostic, MetaRule};

/// Sentinel for an unbounded upper cardinality.
pub const UNBOUNDED: i64 = -1;

/// A parsed DSL definition. Plain data: reference resolution and lookup
/// indexes live in [`Metamodel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetamodelSpec {
    pub graph_model: GraphModelType,
    #[serde(default, rename = "nodes")]
    pub node_types: Vec<NodeType>,
    #[serde(default, rename = "containers")]
    pub container_types: Vec<ContainerType>,
    #[serde(default, rename = "edges")]
    pub edge_types: Vec<EdgeType>,
    #[serde(default)]
    pub styles: StyleSet,
    #[serde(default)]
    pub ui_profiles: Vec<UiProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphModelType {
    pub name: String,
    #[serde(default)]
    pub attributes: Vec<AttributeDef>,
    #[serde(default)]
    pub embedding: Vec<EmbeddingConstraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeType {
    pub name: String,
    #[serde(default)]
    pub r#abstract: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub super_type: Option<String>,
    #[serde(default)]
    pub attributes: Vec<AttributeDef>,
    #[serde(default)]
    pub connections: Vec<ConnectionConstraint>,
}

/// A node type that can also hold nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContainerType {
    pub name: String,
    #[serde(default)]
    pub r#abstract: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub super_type: Option<String>,
    #[serde(default)]
    pub attributes: Vec<AttributeDef>,
    #[serde(default)]
    pub connections: Vec<ConnectionConstraint>,
    #[serde(default)]
    pub embedding: Vec<EmbeddingConstraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeType {
    pub name: String,
    #[serde(default)]
    pub r#abstract: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub super_type: Option<String>,
    #[serde(default)]
    pub attributes: Vec<AttributeDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ValueType {
    String,
    Integer,
    Float,
    Boolean,
    Enum(Vec<String>),
}

impl ValueType {
    pub fn admits(&self, literal: &Literal) -> bool {
        match (self, literal) {
            (ValueType::String, Literal::String(_))
            | (ValueType::Integer, Literal::Integer(_))
            | (ValueType::Boolean, Literal::Boolean(_)) => true,
            (ValueType::Float, Literal::Float(f)) => f.is_finite(),
            (ValueType::Enum(literals), Literal::String(s)) => literals.iter().any(|l| l == s),
            _ => false,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::String => f.write_str("string"),
            ValueType::Integer => f.write_str("integer"),
            ValueType::Float => f.write_str("float"),
            ValueType::Boolean => f.write_str("boolean"),
            ValueType::Enum(lits) => write!(f, "enum({})", lits.join("|")),
        }
    }
}

/// A typed attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Boolean(bool),
    Integer(i64),
    Float(f64),
    String(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Boolean(b) => write!(f, "{b}"),
            Literal::Integer(i) => write!(f, "{i}"),
            Literal::Float(x) => write!(f, "{x}"),
            Literal::String(s) => f.write_str(s),
        }
    }
}

fn default_one() -> i64 {
    1
}

fn default_unbounded() -> i64 {
    UNBOUNDED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttributeDef {
    pub name: String,
    pub value_type: ValueType,
    #[serde(default)]
    pub lower: i64,
    #[serde(default = "default_one")]
    pub upper: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_value: Option<Literal>,
}

impl AttributeDef {
    pub fn is_multi_valued(&self) -> bool {
        self.upper != 1
    }

    pub fn admits_count(&self, n: usize) -> bool {
        let n = n as i64;
        n <= self.upper || self.upper == UNBOUNDED
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EmbeddingConstraint {
    pub node_type_name: String,
    #[serde(default)]
    pub lower: i64,
    #[serde(default = "default_unbounded")]
    pub upper: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Direction {
    Incoming,
    Outgoing,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Incoming => "incoming",
            Direction::Outgoing => "outgoing",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConnectionConstraint {
    pub direction: Direction,
    pub edge_type_name: String,
    #[serde(default)]
    pub lower: i64,
    #[serde(default = "default_unbounded")]
    pub upper: i64,
}

/// `count` fits under `upper`, honoring the unbounded sentinel.
pub fn within_upper(count: i64, upper: i64) -> bool {
    upper == UNBOUNDED || count <= upper
}

/// Shared cardinality sanity rule: `lower >= 0` and `upper` is unbounded or `>= lower`.
pub fn cardinality_ok(lower: i64, upper: i64) -> bool {
    lower >= 0 && (upper == UNBOUNDED || upper >= lower)
}

impl MetamodelSpec {
    /// Names of every declared element type, graph model first.
    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.graph_model.name.as_str())
            .chain(self.node_types.iter().map(|t| t.name.as_str()))
            .chain(self.container_types.iter().map(|t| t.name.as_str()))
            .chain(self.edge_types.iter().map(|t| t.name.as_str()))
    }
}
