//! Table-per-class relational mapping of a metamodel.
//!
//! Every concrete type gets its own table carrying all inherited attribute
//! columns; abstract types get none. Polymorphic associations (a node's
//! container, an edge's endpoints, a bend point's edge) are spread over one
//! nullable foreign-key column per concrete target type.

mod ddl;
mod store;

use serde::Serialize;

use crate::meta::{Metamodel, TypeKind, ValueType};

pub use ddl::emit_ddl;
pub use store::{Cell, MemoryStore, StoreError, StoredRow};

/// Fixed name of the table holding one row per graph model.
pub const ROOT_TABLE: &str = "graphmodel";
/// Fixed name of the table holding edge bend points.
pub const BEND_POINT_TABLE: &str = "bendpoint";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ColumnType {
    Text,
    Integer,
    Real,
    Boolean,
}

impl ColumnType {
    pub fn sql(self) -> &'static str {
        match self {
            ColumnType::Text => "TEXT",
            ColumnType::Integer => "INTEGER",
            ColumnType::Real => "REAL",
            ColumnType::Boolean => "BOOLEAN",
        }
    }

    fn of(vt: &ValueType) -> Self {
        match vt {
            ValueType::String | ValueType::Enum(_) => ColumnType::Text,
            ValueType::Integer => ColumnType::Integer,
            ValueType::Float => ColumnType::Real,
            ValueType::Boolean => ColumnType::Boolean,
        }
    }
}

/// What a column stores, so rows can be mapped back to model elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ColumnRole {
    Id,
    ModelId,
    Version,
    ModelVersion,
    RoutingRouter,
    RoutingConnector,
    X,
    Y,
    Width,
    Height,
    /// Container reference, one column per concrete container type (or the root).
    Container(String),
    Source(String),
    Target(String),
    Attribute(String),
    Owner,
    Index,
    Value,
    EdgeId,
    /// Bend point owner, one column per concrete edge type.
    Edge(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Column {
    pub name: String,
    pub column_type: ColumnType,
    pub nullable: bool,
    pub role: ColumnRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ForeignKey {
    pub column: String,
    pub target_table: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum TableSource {
    Root,
    Type { type_name: String, kind: TypeKind },
    MultiValued { type_name: String, attribute: String },
    BendPoints,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub primary_key: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
    pub source: TableSource,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_by_role(&self, role: &ColumnRole) -> Option<usize> {
        self.columns.iter().position(|c| &c.role == role)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RelationalSchema {
    /// Name of the graph-model type stored in the root table.
    pub root_type: String,
    pub tables: Vec<Table>,
}

impl RelationalSchema {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Table of a concrete element type.
    pub fn type_table(&self, type_name: &str) -> Option<&Table> {
        self.tables
            .iter()
            .find(|t| matches!(&t.source, TableSource::Type { type_name: n, .. } if n == type_name))
    }

    pub fn side_table(&self, type_name: &str, attribute: &str) -> Option<&Table> {
        self.tables.iter().find(|t| {
            matches!(&t.source, TableSource::MultiValued { type_name: n, attribute: a } if n == type_name && a == attribute)
        })
    }
}

/// Lower snake case: `PlaceToTransition` becomes `place_to_transition`.
pub fn snake_case(name: &str) -> String {
    let chars: Vec<char> = name.chars().collect();
    let mut out = String::with_capacity(name.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_alphanumeric() {
            if !out.ends_with('_') && !out.is_empty() {
                out.push('_');
            }
            continue;
        }
        if c.is_ascii_uppercase() && i > 0 {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase());
            let boundary = prev.is_ascii_lowercase()
                || prev.is_ascii_digit()
                || (prev.is_ascii_uppercase() && next_lower);
            if boundary && !out.ends_with('_') {
                out.push('_');
            }
        }
        out.push(c.to_ascii_lowercase());
    }
    out.trim_end_matches('_').to_string()
}

fn col(name: impl Into<String>, column_type: ColumnType, nullable: bool, role: ColumnRole) -> Column {
    Column { name: name.into(), column_type, nullable, role }
}

fn fk(column: &str, target: &str) -> ForeignKey {
    ForeignKey { column: column.to_string(), target_table: target.to_string() }
}

/// Picks a column name for an attribute that clashes with nothing already in the table.
fn attribute_column_name(columns: &[Column], attribute: &str) -> String {
    let base = snake_case(attribute);
    let taken = |n: &str| columns.iter().any(|c| c.name == n);
    if !taken(&base) {
        return base;
    }
    let prefixed = format!("attr_{base}");
    let mut candidate = prefixed.clone();
    let mut n = 2;
    while taken(&candidate) {
        candidate = format!("{prefixed}_{n}");
        n += 1;
    }
    candidate
}

/// Adds attribute columns and returns the side tables for multi-valued ones.
fn add_attributes(
    mm: &Metamodel,
    type_name: &str,
    table: &mut Table,
) -> Vec<Table> {
    let mut side = Vec::new();
    for def in mm.flatten_attributes(type_name).unwrap_or(&[]) {
        let ct = ColumnType::of(&def.value_type);
        if def.is_multi_valued() {
            let name = format!("{}_{}_values", table.name, snake_case(&def.name));
            side.push(Table {
                name,
                columns: vec![
                    col("owner_id", ColumnType::Text, false, ColumnRole::Owner),
                    col("idx", ColumnType::Integer, false, ColumnRole::Index),
                    col("value", ct, false, ColumnRole::Value),
                ],
                primary_key: vec!["owner_id".into(), "idx".into()],
                foreign_keys: vec![fk("owner_id", &table.name)],
                source: TableSource::MultiValued {
                    type_name: type_name.to_string(),
                    attribute: def.name.clone(),
                },
            });
        } else {
            let name = attribute_column_name(&table.columns, &def.name);
            table.columns.push(col(name, ct, true, ColumnRole::Attribute(def.name.clone())));
        }
    }
    side
}

/// Maps a metamodel to its table-per-class schema. Tables are listed root
/// first, then by type declaration order; `emit_ddl` fixes the final order.
pub fn generate_schema(mm: &Metamodel) -> RelationalSchema {
    let mut tables = Vec::new();
    let text = ColumnType::Text;
    let int = ColumnType::Integer;

    let mut root = Table {
        name: ROOT_TABLE.into(),
        columns: vec![
            col("id", text, false, ColumnRole::Id),
            col("model_version", int, false, ColumnRole::ModelVersion),
            col("routing_router", text, false, ColumnRole::RoutingRouter),
            col("routing_connector", text, false, ColumnRole::RoutingConnector),
        ],
        primary_key: vec!["id".into()],
        foreign_keys: vec![],
        source: TableSource::Root,
    };
    let root_side = add_attributes(mm, mm.graph_model_name(), &mut root);
    tables.push(root);
    tables.extend(root_side);

    let node_like = mm.concrete_node_like();
    let containers = mm.concrete_types(TypeKind::Container);
    let edges = mm.concrete_types(TypeKind::Edge);
    // (column suffix, target table, metamodel type) for the container association.
    let mut container_targets: Vec<(String, String, String)> =
        vec![(ROOT_TABLE.into(), ROOT_TABLE.into(), mm.graph_model_name().to_string())];
    container_targets.extend(containers.iter().map(|c| (snake_case(c), snake_case(c), c.to_string())));

    for &t in &node_like {
        let kind = mm.kind_of(t).expect("listed type");
        let name = snake_case(t);
        let mut table = Table {
            name: name.clone(),
            columns: vec![
                col("id", text, false, ColumnRole::Id),
                col("model_id", text, false, ColumnRole::ModelId),
                col("version", int, false, ColumnRole::Version),
                col("x", int, false, ColumnRole::X),
                col("y", int, false, ColumnRole::Y),
                col("width", int, false, ColumnRole::Width),
                col("height", int, false, ColumnRole::Height),
            ],
            primary_key: vec!["id".into()],
            foreign_keys: vec![fk("model_id", ROOT_TABLE)],
            source: TableSource::Type { type_name: t.to_string(), kind },
        };
        for (suffix, target, ty) in &container_targets {
            let c = format!("container_{suffix}");
            table.columns.push(col(&c, text, true, ColumnRole::Container(ty.clone())));
            table.foreign_keys.push(fk(&c, target));
        }
        let side = add_attributes(mm, t, &mut table);
        tables.push(table);
        tables.extend(side);
    }

    for &t in &edges {
        let name = snake_case(t);
        let mut table = Table {
            name: name.clone(),
            columns: vec![
                col("id", text, false, ColumnRole::Id),
                col("model_id", text, false, ColumnRole::ModelId),
                col("version", int, false, ColumnRole::Version),
            ],
            primary_key: vec!["id".into()],
            foreign_keys: vec![fk("model_id", ROOT_TABLE)],
            source: TableSource::Type { type_name: t.to_string(), kind: TypeKind::Edge },
        };
        for (prefix, role) in [("source", 0), ("target", 1)] {
            for &n in &node_like {
                let c = format!("{prefix}_{}", snake_case(n));
                let r = if role == 0 { ColumnRole::Source(n.into()) } else { ColumnRole::Target(n.into()) };
                table.columns.push(col(&c, text, true, r));
                table.foreign_keys.push(fk(&c, &snake_case(n)));
            }
        }
        let side = add_attributes(mm, t, &mut table);
        tables.push(table);
        tables.extend(side);
    }

    if !edges.is_empty() {
        let mut bends = Table {
            name: BEND_POINT_TABLE.into(),
            columns: vec![
                col("edge_id", text, false, ColumnRole::EdgeId),
                col("idx", int, false, ColumnRole::Index),
                col("x", int, false, ColumnRole::X),
                col("y", int, false, ColumnRole::Y),
            ],
            primary_key: vec!["edge_id".into(), "idx".into()],
            foreign_keys: vec![],
            source: TableSource::BendPoints,
        };
        for &e in &edges {
            let c = format!("edge_{}", snake_case(e));
            bends.columns.push(col(&c, text, true, ColumnRole::Edge(e.into())));
            bends.foreign_keys.push(fk(&c, &snake_case(e)));
        }
        tables.push(bends);
    }

    RelationalSchema { root_type: mm.graph_model_name().to_string(), tables }
}
