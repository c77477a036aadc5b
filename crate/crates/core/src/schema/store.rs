//! In-memory table store honoring a generated schema.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};

use super::{ColumnRole, ColumnType, RelationalSchema, Table, TableSource};
use crate::ids::ElementId;
use crate::meta::{Literal, TypeKind};
use crate::model::{point, AttributeMap, Edge, Element, GraphModelInstance, Node, RoutingPreference};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Text(String),
    Integer(i64),
    Real(f64),
    Boolean(bool),
}

impl Cell {
    fn text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn int(&self) -> Option<i64> {
        match self {
            Cell::Integer(i) => Some(*i),
            _ => None,
        }
    }

    fn csv_field(&self) -> String {
        match self {
            Cell::Null => String::new(),
            Cell::Text(s) => s.clone(),
            Cell::Integer(i) => i.to_string(),
            Cell::Real(f) => f.to_string(),
            Cell::Boolean(b) => b.to_string(),
        }
    }
}

fn cell_of(literal: &Literal) -> Cell {
    match literal {
        Literal::Boolean(b) => Cell::Boolean(*b),
        Literal::Integer(i) => Cell::Integer(*i),
        Literal::Float(f) => Cell::Real(*f),
        Literal::String(s) => Cell::Text(s.clone()),
    }
}

fn literal_of(cell: &Cell) -> Option<Literal> {
    match cell {
        Cell::Null => None,
        Cell::Text(s) => Some(Literal::String(s.clone())),
        Cell::Integer(i) => Some(Literal::Integer(*i)),
        Cell::Real(f) => Some(Literal::Float(*f)),
        Cell::Boolean(b) => Some(Literal::Boolean(*b)),
    }
}

fn fits(column_type: ColumnType, cell: &Cell) -> bool {
    matches!(
        (column_type, cell),
        (_, Cell::Null)
            | (ColumnType::Text, Cell::Text(_))
            | (ColumnType::Integer, Cell::Integer(_))
            | (ColumnType::Real, Cell::Real(_))
            | (ColumnType::Boolean, Cell::Boolean(_))
    )
}

/// One row as seen from outside: every column of its table, by name.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRow {
    pub table: String,
    pub id: String,
    pub cells: BTreeMap<String, Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown model {0}")]
    UnknownModel(ElementId),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

type Rows = BTreeMap<String, Vec<Cell>>;

#[derive(Debug, Clone)]
pub struct MemoryStore {
    schema: RelationalSchema,
    data: BTreeMap<String, Rows>,
}

fn mismatch(msg: impl Into<String>) -> StoreError {
    StoreError::SchemaMismatch(msg.into())
}

fn serde_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

impl MemoryStore {
    pub fn new(schema: RelationalSchema) -> Self {
        let data = schema.tables.iter().map(|t| (t.name.clone(), Rows::new())).collect();
        MemoryStore { schema, data }
    }

    pub fn schema(&self) -> &RelationalSchema {
        &self.schema
    }

    /// Row key: the primary-key cells joined, indices zero-padded so keys sort numerically.
    fn key(table: &Table, cells: &[Cell]) -> String {
        table
            .primary_key
            .iter()
            .filter_map(|k| table.column_index(k))
            .map(|i| match &cells[i] {
                Cell::Integer(n) => format!("{n:020}"),
                other => other.csv_field(),
            })
            .collect::<Vec<_>>()
            .join("\u{1f}")
    }

    fn insert(&mut self, table: &Table, cells: Vec<Cell>) -> Result<(), StoreError> {
        for (c, v) in table.columns.iter().zip(&cells) {
            if !fits(c.column_type, v) || (!c.nullable && *v == Cell::Null) {
                return Err(mismatch(format!("{}.{} cannot hold {v:?}", table.name, c.name)));
            }
        }
        let key = Self::key(table, &cells);
        self.data.get_mut(&table.name).expect("table registered").insert(key, cells);
        Ok(())
    }

    pub fn model_ids(&self) -> Vec<ElementId> {
        self.data
            .get(super::ROOT_TABLE)
            .map(|rows| rows.keys().filter_map(|k| k.parse().ok()).collect())
            .unwrap_or_default()
    }

    /// Every row of a table, in key order.
    pub fn rows(&self, table: &str) -> Vec<StoredRow> {
        let Some(t) = self.schema.table(table) else { return Vec::new() };
        self.data[table]
            .iter()
            .map(|(key, cells)| StoredRow {
                table: table.to_string(),
                id: key.clone(),
                cells: t.columns.iter().map(|c| c.name.clone()).zip(cells.iter().cloned()).collect(),
            })
            .collect()
    }

    fn remove_model(&mut self, id: ElementId) {
        let id_text = id.to_string();
        let mut owners: BTreeSet<String> = BTreeSet::from([id_text.clone()]);
        if let Some(rows) = self.data.get_mut(super::ROOT_TABLE) {
            rows.remove(&id_text);
        }
        for t in &self.schema.tables {
            if let Some(i) = t.column_by_role(&ColumnRole::ModelId) {
                let rows = self.data.get_mut(&t.name).expect("table registered");
                rows.retain(|key, cells| {
                    let mine = cells[i].text() == Some(id_text.as_str());
                    if mine {
                        owners.insert(key.clone());
                    }
                    !mine
                });
            }
        }
        for t in &self.schema.tables {
            let role = match t.source {
                TableSource::MultiValued { .. } => ColumnRole::Owner,
                TableSource::BendPoints => ColumnRole::EdgeId,
                _ => continue,
            };
            let i = t.column_by_role(&role).expect("owner column");
            let rows = self.data.get_mut(&t.name).expect("table registered");
            rows.retain(|_, cells| !cells[i].text().is_some_and(|o| owners.contains(o)));
        }
    }

    fn attribute_cells(
        &mut self,
        table: &Table,
        type_name: &str,
        owner: &str,
        attributes: &AttributeMap,
        cells: &mut [Cell],
    ) -> Result<(), StoreError> {
        for (i, c) in table.columns.iter().enumerate() {
            if let ColumnRole::Attribute(name) = &c.role {
                if let Some(values) = attributes.get(name) {
                    match values.as_slice() {
                        [] => {}
                        [v] => cells[i] = cell_of(v),
                        _ => return Err(mismatch(format!("{type_name}.{name} is single-valued"))),
                    }
                }
            }
        }
        for name in attributes.keys() {
            let single = table.columns.iter().any(|c| c.role == ColumnRole::Attribute(name.clone()));
            let side = self.schema.side_table(type_name, name).cloned();
            match (single, side) {
                (true, _) => {}
                (false, Some(side)) => {
                    for (idx, v) in attributes[name].iter().enumerate() {
                        let row = vec![Cell::Text(owner.to_string()), Cell::Integer(idx as i64), cell_of(v)];
                        self.insert(&side, row)?;
                    }
                }
                (false, None) => return Err(mismatch(format!("no column for {type_name}.{name}"))),
            }
        }
        Ok(())
    }

    /// Replaces everything stored for `model.id` with the given snapshot.
    pub fn store_snapshot(&mut self, model: &GraphModelInstance) -> Result<(), StoreError> {
        // Validate against a scratch copy so a failed store leaves the old snapshot intact.
        let mut scratch = self.clone();
        scratch.remove_model(model.id);
        scratch.write_model(model)?;
        *self = scratch;
        Ok(())
    }

    fn write_model(&mut self, model: &GraphModelInstance) -> Result<(), StoreError> {
        let model_id = model.id.to_string();
        let root = self.schema.table(super::ROOT_TABLE).cloned().ok_or_else(|| mismatch("no root table"))?;
        let mut cells = vec![Cell::Null; root.columns.len()];
        for (i, c) in root.columns.iter().enumerate() {
            cells[i] = match c.role {
                ColumnRole::Id => Cell::Text(model_id.clone()),
                ColumnRole::ModelVersion => Cell::Integer(model.model_version as i64),
                ColumnRole::RoutingRouter => Cell::Text(serde_name(&model.routing.router)),
                ColumnRole::RoutingConnector => Cell::Text(serde_name(&model.routing.connector)),
                _ => Cell::Null,
            };
        }
        self.attribute_cells(&root, &model.type_name, &model_id, &model.attributes, &mut cells)?;
        self.insert(&root, cells)?;

        for element in model.elements.values() {
            let type_name = element.type_name();
            let table = self
                .schema
                .type_table(type_name)
                .cloned()
                .ok_or_else(|| mismatch(format!("no table for type {type_name}")))?;
            let id = element.id().to_string();
            let mut cells = vec![Cell::Null; table.columns.len()];
            for (i, c) in table.columns.iter().enumerate() {
                cells[i] = match (&c.role, element) {
                    (ColumnRole::Id, _) => Cell::Text(id.clone()),
                    (ColumnRole::ModelId, _) => Cell::Text(model_id.clone()),
                    (ColumnRole::Version, _) => Cell::Integer(element.version() as i64),
                    (ColumnRole::X, Element::Node(n)) => Cell::Integer(n.x),
                    (ColumnRole::Y, Element::Node(n)) => Cell::Integer(n.y),
                    (ColumnRole::Width, Element::Node(n)) => Cell::Integer(i64::from(n.width)),
                    (ColumnRole::Height, Element::Node(n)) => Cell::Integer(i64::from(n.height)),
                    (ColumnRole::Container(t), Element::Node(n)) => {
                        if model.container_type(n.container_id) == Some(t.as_str()) {
                            Cell::Text(n.container_id.to_string())
                        } else {
                            Cell::Null
                        }
                    }
                    (ColumnRole::Source(t), Element::Edge(e)) => endpoint_cell(model, e.source_id, t),
                    (ColumnRole::Target(t), Element::Edge(e)) => endpoint_cell(model, e.target_id, t),
                    _ => Cell::Null,
                };
            }
            if let Element::Node(n) = element {
                let has_container = table
                    .columns
                    .iter()
                    .zip(&cells)
                    .any(|(c, v)| matches!(c.role, ColumnRole::Container(_)) && *v != Cell::Null);
                if !has_container {
                    return Err(mismatch(format!("container of {} has no column", n.id)));
                }
            }
            self.attribute_cells(&table, type_name, &id, element.attributes(), &mut cells)?;
            self.insert(&table, cells)?;

            if let Element::Edge(e) = element {
                let bends = self
                    .schema
                    .table(super::BEND_POINT_TABLE)
                    .cloned()
                    .ok_or_else(|| mismatch("no bend point table"))?;
                for (idx, p) in e.bend_points.iter().enumerate() {
                    let row = bends
                        .columns
                        .iter()
                        .map(|c| match &c.role {
                            ColumnRole::EdgeId => Cell::Text(id.clone()),
                            ColumnRole::Index => Cell::Integer(idx as i64),
                            ColumnRole::X => Cell::Integer(p.x),
                            ColumnRole::Y => Cell::Integer(p.y),
                            ColumnRole::Edge(t) if *t == e.type_name => Cell::Text(id.clone()),
                            _ => Cell::Null,
                        })
                        .collect();
                    self.insert(&bends, row)?;
                }
            }
        }
        Ok(())
    }

    /// Rebuilds a model from its rows.
    pub fn load_snapshot(&self, id: ElementId) -> Result<GraphModelInstance, StoreError> {
        let id_text = id.to_string();
        let root = self.schema.table(super::ROOT_TABLE).ok_or_else(|| mismatch("no root table"))?;
        let cells = self.data[super::ROOT_TABLE].get(&id_text).ok_or(StoreError::UnknownModel(id))?;
        let mut model = GraphModelInstance::new(id, self.schema.root_type.clone());
        let mut routing = RoutingPreference::default();
        for (c, v) in root.columns.iter().zip(cells) {
            match c.role {
                ColumnRole::ModelVersion => model.model_version = int_cell(v, c)? as u64,
                ColumnRole::RoutingRouter => {
                    routing.router = serde_json::from_value(serde_json::Value::String(text_cell(v, c)?.into()))
                        .map_err(|e| mismatch(e.to_string()))?
                }
                ColumnRole::RoutingConnector => {
                    routing.connector = serde_json::from_value(serde_json::Value::String(text_cell(v, c)?.into()))
                        .map_err(|e| mismatch(e.to_string()))?
                }
                _ => {}
            }
        }
        model.routing = routing;
        model.attributes = self.read_attributes(root, &self.schema.root_type, &id_text, cells);

        for table in &self.schema.tables {
            let TableSource::Type { type_name, kind } = &table.source else { continue };
            let model_col = table.column_by_role(&ColumnRole::ModelId).expect("type tables carry model id");
            for cells in self.data[&table.name].values() {
                if cells[model_col].text() != Some(id_text.as_str()) {
                    continue;
                }
                let element = self.read_element(table, type_name, *kind, cells)?;
                model.elements.insert(element.id(), element);
            }
        }

        if let Some(bends) = self.schema.table(super::BEND_POINT_TABLE) {
            let e_col = bends.column_by_role(&ColumnRole::EdgeId).expect("edge id column");
            let (x_col, y_col) = (
                bends.column_by_role(&ColumnRole::X).expect("x"),
                bends.column_by_role(&ColumnRole::Y).expect("y"),
            );
            // Keys sort by (edge, zero-padded index), so points arrive in order.
            for cells in self.data[&bends.name].values() {
                let Some(edge_id) = cells[e_col].text().and_then(|s| s.parse::<ElementId>().ok()) else {
                    continue;
                };
                if let Some(Element::Edge(e)) = model.elements.get_mut(&edge_id) {
                    let x = int_cell(&cells[x_col], &bends.columns[x_col])?;
                    let y = int_cell(&cells[y_col], &bends.columns[y_col])?;
                    e.bend_points.push(point(x, y));
                }
            }
        }

        let placements: Vec<(ElementId, ElementId)> =
            model.nodes().map(|n| (n.id, n.container_id)).collect();
        for (child, container) in placements {
            if !model.is_element_container(container) {
                return Err(mismatch(format!("{child} placed in missing container {container}")));
            }
            model.attach_child(container, child);
        }
        Ok(model)
    }

    fn read_attributes(&self, table: &Table, type_name: &str, owner: &str, cells: &[Cell]) -> AttributeMap {
        let mut attrs = AttributeMap::new();
        for (c, v) in table.columns.iter().zip(cells) {
            if let (ColumnRole::Attribute(name), Some(lit)) = (&c.role, literal_of(v)) {
                attrs.insert(name.clone(), vec![lit]);
            }
        }
        for side in &self.schema.tables {
            let TableSource::MultiValued { type_name: t, attribute } = &side.source else { continue };
            if t != type_name {
                continue;
            }
            let prefix = format!("{owner}\u{1f}");
            let values: Vec<Literal> = self.data[&side.name]
                .range(prefix.clone()..)
                .take_while(|(k, _)| k.starts_with(&prefix))
                .filter_map(|(_, row)| literal_of(&row[2]))
                .collect();
            if !values.is_empty() {
                attrs.insert(attribute.clone(), values);
            }
        }
        attrs
    }

    fn read_element(&self, table: &Table, type_name: &str, kind: TypeKind, cells: &[Cell]) -> Result<Element, StoreError> {
        let get = |role: ColumnRole| -> Result<&Cell, StoreError> {
            table
                .column_by_role(&role)
                .map(|i| &cells[i])
                .ok_or_else(|| mismatch(format!("{} lacks {role:?}", table.name)))
        };
        let id_s = get(ColumnRole::Id)?.text().ok_or_else(|| mismatch("null id"))?.to_string();
        let id: ElementId = id_s.parse().map_err(|_| mismatch(format!("bad id {id_s}")))?;
        let version = get(ColumnRole::Version)?.int().ok_or_else(|| mismatch("null version"))? as u64;
        let attributes = self.read_attributes(table, type_name, &id_s, cells);
        let pick = |f: fn(&ColumnRole) -> bool, what: &str| -> Result<ElementId, StoreError> {
            let set: Vec<&str> = table
                .columns
                .iter()
                .zip(cells)
                .filter(|(c, v)| f(&c.role) && **v != Cell::Null)
                .filter_map(|(_, v)| v.text())
                .collect();
            match set.as_slice() {
                [one] => one.parse().map_err(|_| mismatch(format!("bad {what} id"))),
                _ => Err(mismatch(format!("{id}: expected exactly one {what} column, found {}", set.len()))),
            }
        };
        if kind == TypeKind::Edge {
            Ok(Element::Edge(Edge {
                id,
                type_name: type_name.to_string(),
                source_id: pick(|r| matches!(r, ColumnRole::Source(_)), "source")?,
                target_id: pick(|r| matches!(r, ColumnRole::Target(_)), "target")?,
                bend_points: Vec::new(),
                attributes,
                version,
            }))
        } else {
            let int = |role| get(role).and_then(|c| c.int().ok_or_else(|| mismatch("null geometry")));
            Ok(Element::Node(Node {
                id,
                type_name: type_name.to_string(),
                x: int(ColumnRole::X)?,
                y: int(ColumnRole::Y)?,
                width: int(ColumnRole::Width)? as u32,
                height: int(ColumnRole::Height)? as u32,
                container_id: pick(|r| matches!(r, ColumnRole::Container(_)), "container")?,
                attributes,
                version,
                children: (kind == TypeKind::Container).then(Vec::new),
            }))
        }
    }

    /// Writes one CSV file per table (header row, RFC 4180 quoting).
    pub fn export_csv(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for table in &self.schema.tables {
            let path = dir.join(format!("{}.csv", table.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(table.columns.iter().map(|c| c.name.as_str()))?;
            for cells in self.data[&table.name].values() {
                w.write_record(cells.iter().map(Cell::csv_field))?;
            }
            w.flush()?;
            written.push(path);
        }
        Ok(written)
    }
}

fn endpoint_cell(model: &GraphModelInstance, node: ElementId, type_name: &str) -> Cell {
    match model.node(node) {
        Some(n) if n.type_name == type_name => Cell::Text(node.to_string()),
        _ => Cell::Null,
    }
}

fn int_cell(v: &Cell, c: &super::Column) -> Result<i64, StoreError> {
    v.int().ok_or_else(|| mismatch(format!("{} is not an integer", c.name)))
}

fn text_cell<'a>(v: &'a Cell, c: &super::Column) -> Result<&'a str, StoreError> {
    v.text().ok_or_else(|| mismatch(format!("{} is not text", c.name)))
}
