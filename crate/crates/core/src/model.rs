//! Runtime instance of a graph model.
//!
//! Coordinates of a node are relative to its container, so moving a
//! container carries its subtree along without touching the children.
//! Child lists are kept sorted by element id; replicas that received the
//! same commands therefore agree on order regardless of arrival timing.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::ElementId;
pub use crate::meta::{Literal, Point};

/// Attribute name to its values. Unset attributes have no entry.
pub type AttributeMap = BTreeMap<String, Vec<Literal>>;

/// Drops empty value lists so that "absent" and "empty" compare equal.
pub fn normalize_attributes(map: &AttributeMap) -> AttributeMap {
    map.iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub width: u32,
    pub height: u32,
}

impl Size {
    pub fn new(width: u32, height: u32) -> Self {
        Size { width, height }
    }
}

pub fn point(x: i64, y: i64) -> Point {
    Point { x, y }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Node {
    pub id: ElementId,
    pub type_name: String,
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
    pub container_id: ElementId,
    #[serde(default)]
    pub attributes: AttributeMap,
    pub version: u64,
    /// Present iff the node is a container.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<ElementId>>,
}

impl Node {
    pub fn position(&self) -> Point {
        point(self.x, self.y)
    }

    pub fn size(&self) -> Size {
        Size::new(self.width, self.height)
    }

    pub fn is_container(&self) -> bool {
        self.children.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Edge {
    pub id: ElementId,
    pub type_name: String,
    pub source_id: ElementId,
    pub target_id: ElementId,
    #[serde(default)]
    pub bend_points: Vec<Point>,
    #[serde(default)]
    pub attributes: AttributeMap,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Element {
    Node(Node),
    Edge(Edge),
}

impl Element {
    pub fn id(&self) -> ElementId {
        match self {
            Element::Node(n) => n.id,
            Element::Edge(e) => e.id,
        }
    }

    pub fn type_name(&self) -> &str {
        match self {
            Element::Node(n) => &n.type_name,
            Element::Edge(e) => &e.type_name,
        }
    }

    pub fn attributes(&self) -> &AttributeMap {
        match self {
            Element::Node(n) => &n.attributes,
            Element::Edge(e) => &e.attributes,
        }
    }

    pub fn version(&self) -> u64 {
        match self {
            Element::Node(n) => n.version,
            Element::Edge(e) => e.version,
        }
    }

    pub(crate) fn bump_version(&mut self) {
        match self {
            Element::Node(n) => n.version += 1,
            Element::Edge(e) => e.version += 1,
        }
    }

    pub fn as_node(&self) -> Option<&Node> {
        match self {
            Element::Node(n) => Some(n),
            Element::Edge(_) => None,
        }
    }

    pub fn as_edge(&self) -> Option<&Edge> {
        match self {
            Element::Edge(e) => Some(e),
            Element::Node(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Router {
    Manhattan,
    #[default]
    Direct,
    Orthogonal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Connector {
    #[default]
    Normal,
    Rounded,
    Smooth,
    Jumpover,
}

/// Editor-level edge layout preference. Stored and shared, never computed on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingPreference {
    pub router: Router,
    pub connector: Connector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphModelInstance {
    pub id: ElementId,
    pub type_name: String,
    #[serde(default)]
    pub attributes: AttributeMap,
    #[serde(default)]
    pub elements: BTreeMap<ElementId, Element>,
    #[serde(default)]
    pub root_children: Vec<ElementId>,
    pub model_version: u64,
    #[serde(default)]
    pub routing: RoutingPreference,
}

impl GraphModelInstance {
    pub fn new(id: ElementId, type_name: impl Into<String>) -> Self {
        GraphModelInstance {
            id,
            type_name: type_name.into(),
            attributes: AttributeMap::new(),
            elements: BTreeMap::new(),
            root_children: Vec::new(),
            model_version: 0,
            routing: RoutingPreference::default(),
        }
    }

    pub fn element(&self, id: ElementId) -> Option<&Element> {
        self.elements.get(&id)
    }

    pub fn node(&self, id: ElementId) -> Option<&Node> {
        self.elements.get(&id).and_then(Element::as_node)
    }

    pub fn edge(&self, id: ElementId) -> Option<&Edge> {
        self.elements.get(&id).and_then(Element::as_edge)
    }

    pub(crate) fn node_mut(&mut self, id: ElementId) -> Option<&mut Node> {
        match self.elements.get_mut(&id) {
            Some(Element::Node(n)) => Some(n),
            _ => None,
        }
    }

    pub(crate) fn edge_mut(&mut self, id: ElementId) -> Option<&mut Edge> {
        match self.elements.get_mut(&id) {
            Some(Element::Edge(e)) => Some(e),
            _ => None,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.elements.values().filter_map(Element::as_node)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.elements.values().filter_map(Element::as_edge)
    }

    /// Whether `id` names the graph model or an existing container.
    pub fn is_element_container(&self, id: ElementId) -> bool {
        id == self.id || self.node(id).is_some_and(Node::is_container)
    }

    /// Children of the graph model or of a container node.
    pub fn children_of(&self, container_id: ElementId) -> Option<&[ElementId]> {
        if container_id == self.id {
            Some(&self.root_children)
        } else {
            self.node(container_id)?.children.as_deref()
        }
    }

    /// Type name of the graph model or of a container node.
    pub fn container_type(&self, container_id: ElementId) -> Option<&str> {
        if container_id == self.id {
            Some(&self.type_name)
        } else {
            self.node(container_id).filter(|n| n.is_container()).map(|n| n.type_name.as_str())
        }
    }

    pub(crate) fn children_mut(&mut self, container_id: ElementId) -> Option<&mut Vec<ElementId>> {
        if container_id == self.id {
            Some(&mut self.root_children)
        } else {
            self.node_mut(container_id)?.children.as_mut()
        }
    }

    pub(crate) fn attach_child(&mut self, container_id: ElementId, child: ElementId) {
        if let Some(children) = self.children_mut(container_id) {
            if let Err(pos) = children.binary_search(&child) {
                children.insert(pos, child);
            }
        }
    }

    pub(crate) fn detach_child(&mut self, container_id: ElementId, child: ElementId) {
        if let Some(children) = self.children_mut(container_id) {
            if let Ok(pos) = children.binary_search(&child) {
                children.remove(pos);
            }
        }
    }

    pub fn outgoing(&self, node: ElementId) -> impl Iterator<Item = &Edge> {
        self.edges().filter(move |e| e.source_id == node)
    }

    pub fn incoming(&self, node: ElementId) -> impl Iterator<Item = &Edge> {
        self.edges().filter(move |e| e.target_id == node)
    }

    /// Edges with `node` as source or target.
    pub fn incident(&self, node: ElementId) -> impl Iterator<Item = &Edge> {
        self.edges().filter(move |e| e.source_id == node || e.target_id == node)
    }

    /// Whether `inner` is `outer` or lies inside it.
    pub fn is_within(&self, inner: ElementId, outer: ElementId) -> bool {
        let mut cur = inner;
        // Bounded walk: a corrupt model with a cycle must not hang us.
        for _ in 0..=self.elements.len() {
            if cur == outer {
                return true;
            }
            match self.node(cur) {
                Some(n) => cur = n.container_id,
                None => return false,
            }
        }
        false
    }

    /// Absolute model-space position of a node (sum of container offsets).
    pub fn absolute_position(&self, id: ElementId) -> Option<Point> {
        let mut n = self.node(id)?;
        let (mut x, mut y) = (n.x, n.y);
        for _ in 0..self.elements.len() {
            match self.node(n.container_id) {
                Some(parent) => {
                    x += parent.x;
                    y += parent.y;
                    n = parent;
                }
                None => break,
            }
        }
        Some(point(x, y))
    }

    /// Copy with every version counter zeroed, for comparisons that ignore them.
    pub fn without_versions(&self) -> GraphModelInstance {
        let mut m = self.clone();
        m.model_version = 0;
        for e in m.elements.values_mut() {
            match e {
                Element::Node(n) => n.version = 0,
                Element::Edge(e) => e.version = 0,
            }
        }
        m
    }

    /// Broken links: dangling edge endpoints, child lists out of sync with
    /// `container_id`, or nodes reachable from no container. Empty for every
    /// model the engine produces.
    pub fn integrity_errors(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in self.edges() {
            for (end, id) in [("source", e.source_id), ("target", e.target_id)] {
                if self.node(id).is_none() {
                    out.push(format!("edge {} has dangling {end} {id}", e.id));
                }
            }
        }
        let mut listed = 0;
        for container in std::iter::once(self.id).chain(self.nodes().filter(|n| n.is_container()).map(|n| n.id)) {
            for child in self.children_of(container).unwrap_or(&[]) {
                listed += 1;
                match self.node(*child) {
                    Some(n) if n.container_id == container => {}
                    Some(_) => out.push(format!("{child} is listed under {container} but points elsewhere")),
                    None => out.push(format!("{container} lists missing child {child}")),
                }
            }
        }
        if listed != self.nodes().count() {
            out.push(format!("{} nodes but {listed} child-list entries", self.nodes().count()));
        }
        out
    }

    /// Structural differences against `other`, empty iff equal.
    pub fn diff(&self, other: &GraphModelInstance) -> Vec<ModelDiff> {
        let mut out = Vec::new();
        if self.id != other.id || self.type_name != other.type_name {
            out.push(ModelDiff::Identity);
        }
        if self.attributes != other.attributes || self.routing != other.routing {
            out.push(ModelDiff::Header);
        }
        if self.model_version != other.model_version {
            out.push(ModelDiff::ModelVersion { left: self.model_version, right: other.model_version });
        }
        if self.root_children != other.root_children {
            out.push(ModelDiff::RootChildren);
        }
        for (id, e) in &self.elements {
            match other.elements.get(id) {
                None => out.push(ModelDiff::OnlyLeft(*id)),
                Some(o) if o != e => out.push(ModelDiff::Differs(*id)),
                _ => {}
            }
        }
        for id in other.elements.keys() {
            if !self.elements.contains_key(id) {
                out.push(ModelDiff::OnlyRight(*id));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ModelDiff {
    Identity,
    Header,
    ModelVersion { left: u64, right: u64 },
    RootChildren,
    OnlyLeft(ElementId),
    OnlyRight(ElementId),
    Differs(ElementId),
}

impl fmt::Display for ModelDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelDiff::Identity => f.write_str("model id or type differs"),
            ModelDiff::Header => f.write_str("model attributes or routing differ"),
            ModelDiff::ModelVersion { left, right } => write!(f, "model version {left} vs {right}"),
            ModelDiff::RootChildren => f.write_str("root children differ"),
            ModelDiff::OnlyLeft(id) => write!(f, "{id} only on the left"),
            ModelDiff::OnlyRight(id) => write!(f, "{id} only on the right"),
            ModelDiff::Differs(id) => write!(f, "{id} differs"),
        }
    }
}
