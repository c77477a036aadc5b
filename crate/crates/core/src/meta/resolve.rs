use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::parse::MetaError;
use super::style::{EdgeStyle, NodeStyle};
use super::ui::UiProfile;
use super::{
    validate_metamodel, AttributeDef, ConnectionConstraint, Direction, EmbeddingConstraint,
    MetaRule, MetamodelSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TypeKind {
    GraphModel,
    Node,
    Container,
    Edge,
}

impl TypeKind {
    pub fn is_node_like(self) -> bool {
        matches!(self, TypeKind::Node | TypeKind::Container)
    }
}

#[derive(Debug, Clone)]
struct TypeEntry {
    kind: TypeKind,
    is_abstract: bool,
    super_type: Option<String>,
    /// Flattened attributes, ancestor first.
    attributes: Vec<AttributeDef>,
    /// Effective embedding constraints (own plus inherited), containers and graph model only.
    embedding: Vec<EmbeddingConstraint>,
    /// Effective connection constraints (own plus inherited), node-like types only.
    connections: Vec<ConnectionConstraint>,
}

/// A metamodel with every name reference bound and lookup tables built.
///
/// Construction only requires the structural rules (names, references, acyclic
/// inheritance) to hold; style and layout problems are reported by
/// [`validate_metamodel`] without preventing indexing.
#[derive(Debug, Clone)]
pub struct Metamodel {
    spec: MetamodelSpec,
    types: BTreeMap<String, TypeEntry>,
    subtypes: BTreeMap<String, BTreeSet<String>>,
}

impl Metamodel {
    pub fn new(spec: MetamodelSpec) -> Result<Self, MetaError> {
        if let Some(d) = validate_metamodel(&spec).into_iter().find(|d| d.rule.is_structural()) {
            return Err(match d.rule {
                MetaRule::DuplicateName => MetaError::DuplicateName(d.element),
                MetaRule::InheritanceCycle => MetaError::InheritanceCycle(d.element),
                MetaRule::KindMismatch => MetaError::KindMismatch(d.element),
                _ => MetaError::UnresolvedReference(d.element),
            });
        }

        let mut own: BTreeMap<String, (TypeKind, bool, Option<String>, Vec<AttributeDef>)> =
            BTreeMap::new();
        let mut own_embedding: BTreeMap<String, Vec<EmbeddingConstraint>> = BTreeMap::new();
        let mut own_connections: BTreeMap<String, Vec<ConnectionConstraint>> = BTreeMap::new();

        let g = &spec.graph_model;
        own.insert(g.name.clone(), (TypeKind::GraphModel, false, None, g.attributes.clone()));
        own_embedding.insert(g.name.clone(), g.embedding.clone());
        for t in &spec.node_types {
            own.insert(
                t.name.clone(),
                (TypeKind::Node, t.r#abstract, t.super_type.clone(), t.attributes.clone()),
            );
            own_connections.insert(t.name.clone(), t.connections.clone());
        }
        for t in &spec.container_types {
            own.insert(
                t.name.clone(),
                (TypeKind::Container, t.r#abstract, t.super_type.clone(), t.attributes.clone()),
            );
            own_connections.insert(t.name.clone(), t.connections.clone());
            own_embedding.insert(t.name.clone(), t.embedding.clone());
        }
        for t in &spec.edge_types {
            own.insert(
                t.name.clone(),
                (TypeKind::Edge, t.r#abstract, t.super_type.clone(), t.attributes.clone()),
            );
        }

        let mut types = BTreeMap::new();
        let mut subtypes: BTreeMap<String, BTreeSet<String>> =
            own.keys().map(|k| (k.clone(), BTreeSet::from([k.clone()]))).collect();
        for (name, (kind, is_abstract, super_type, _)) in &own {
            // Root-first chain: acyclicity was established above.
            let mut chain = vec![name.clone()];
            let mut cur = super_type.clone();
            while let Some(sup) = cur {
                subtypes.get_mut(&sup).expect("resolved supertype").insert(name.clone());
                cur = own[&sup].2.clone();
                chain.push(sup);
            }
            chain.reverse();

            let mut attributes: Vec<AttributeDef> = Vec::new();
            let mut embedding = Vec::new();
            let mut connections = Vec::new();
            for t in &chain {
                for a in &own[t].3 {
                    if !attributes.iter().any(|x| x.name == a.name) {
                        attributes.push(a.clone());
                    }
                }
                embedding.extend(own_embedding.get(t).into_iter().flatten().cloned());
                connections.extend(own_connections.get(t).into_iter().flatten().cloned());
            }
            types.insert(
                name.clone(),
                TypeEntry {
                    kind: *kind,
                    is_abstract: *is_abstract,
                    super_type: super_type.clone(),
                    attributes,
                    embedding,
                    connections,
                },
            );
        }

        Ok(Metamodel { spec, types, subtypes })
    }

    pub fn spec(&self) -> &MetamodelSpec {
        &self.spec
    }

    pub fn into_spec(self) -> MetamodelSpec {
        self.spec
    }

    pub fn graph_model_name(&self) -> &str {
        &self.spec.graph_model.name
    }

    pub fn contains(&self, type_name: &str) -> bool {
        self.types.contains_key(type_name)
    }

    pub fn kind_of(&self, type_name: &str) -> Option<TypeKind> {
        self.types.get(type_name).map(|t| t.kind)
    }

    pub fn is_abstract(&self, type_name: &str) -> bool {
        self.types.get(type_name).is_some_and(|t| t.is_abstract)
    }

    pub fn super_type(&self, type_name: &str) -> Option<&str> {
        self.types.get(type_name).and_then(|t| t.super_type.as_deref())
    }

    /// The type itself followed by its ancestors, most specific first.
    pub fn supertype_chain<'a>(&'a self, type_name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        std::iter::successors(self.types.get_key_value(type_name).map(|(k, _)| k.as_str()), |t| {
            self.super_type(t)
        })
    }

    /// Reflexive-transitive closure of the inverse superType relation.
    pub fn subtypes_of(&self, type_name: &str) -> Result<&BTreeSet<String>, MetaError> {
        self.subtypes
            .get(type_name)
            .ok_or_else(|| MetaError::UnknownType(type_name.to_string()))
    }

    /// `sub` equals `sup` or inherits from it.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        self.supertype_chain(sub).any(|t| t == sup)
    }

    /// Own plus inherited attributes, ancestor first.
    pub fn flatten_attributes(&self, type_name: &str) -> Result<&[AttributeDef], MetaError> {
        self.types
            .get(type_name)
            .map(|t| t.attributes.as_slice())
            .ok_or_else(|| MetaError::UnknownType(type_name.to_string()))
    }

    pub fn attribute(&self, type_name: &str, attribute: &str) -> Option<&AttributeDef> {
        self.types.get(type_name)?.attributes.iter().find(|a| a.name == attribute)
    }

    /// Embedding constraints in force for a container or graph-model type.
    pub fn embedding_constraints(&self, container_type: &str) -> &[EmbeddingConstraint] {
        self.types.get(container_type).map(|t| t.embedding.as_slice()).unwrap_or(&[])
    }

    /// Connection constraints in force for a node-like type in one direction.
    pub fn connection_constraints<'a>(
        &'a self,
        node_type: &str,
        direction: Direction,
    ) -> impl Iterator<Item = &'a ConnectionConstraint> + 'a {
        self.types
            .get(node_type)
            .map(|t| t.connections.as_slice())
            .unwrap_or(&[])
            .iter()
            .filter(move |c| c.direction == direction)
    }

    /// Every declared type of the given kind, in declaration order.
    pub fn types_of_kind(&self, kind: TypeKind) -> Vec<&str> {
        let s = &self.spec;
        match kind {
            TypeKind::GraphModel => vec![s.graph_model.name.as_str()],
            TypeKind::Node => s.node_types.iter().map(|t| t.name.as_str()).collect(),
            TypeKind::Container => s.container_types.iter().map(|t| t.name.as_str()).collect(),
            TypeKind::Edge => s.edge_types.iter().map(|t| t.name.as_str()).collect(),
        }
    }

    /// Non-abstract types of a kind, in declaration order.
    pub fn concrete_types(&self, kind: TypeKind) -> Vec<&str> {
        self.types_of_kind(kind).into_iter().filter(|t| !self.is_abstract(t)).collect()
    }

    /// Concrete node and container types, nodes first.
    pub fn concrete_node_like(&self) -> Vec<&str> {
        let mut v = self.concrete_types(TypeKind::Node);
        v.extend(self.concrete_types(TypeKind::Container));
        v
    }

    pub fn node_style(&self, type_name: &str) -> Option<&NodeStyle> {
        self.spec.styles.node_styles.iter().find(|s| s.type_name == type_name)
    }

    pub fn edge_style(&self, type_name: &str) -> Option<&EdgeStyle> {
        self.spec.styles.edge_styles.iter().find(|s| s.type_name == type_name)
    }

    /// The profile for a role, falling back to the first declared profile.
    pub fn ui_profile_for(&self, role: Option<&str>) -> Option<&UiProfile> {
        let profiles = &self.spec.ui_profiles;
        role.and_then(|r| profiles.iter().find(|p| p.serves_role(r)))
            .or_else(|| profiles.first())
    }
}
