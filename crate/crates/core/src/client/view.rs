//! Projection of a replica into drawable items, palette and property forms.
//! Pure: equal inputs give equal view models.

use serde::Serialize;

use crate::ids::ElementId;
use crate::meta::{
    Appearance, AttributeDef, Graphic, HAlign, Metamodel, Point, Position, Shape, ShapeGeometry, TypeKind, ValueType,
    VAlign, UNBOUNDED,
};
use crate::model::{AttributeMap, Edge, GraphModelInstance, Node};

/// Size given to nodes whose type has no style.
const FALLBACK_SIZE: (u32, u32) = (80, 40);

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ShapeItem {
    pub kind: &'static str,
    /// Absolute top-left corner.
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
    /// Absolute vertices, polylines only.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corner_radius: Option<u32>,
    /// Resolved template, text only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub appearance: Appearance,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ShapeItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeItem {
    pub id: ElementId,
    pub type_name: String,
    pub container_id: ElementId,
    pub shape: ShapeItem,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecoratorItem {
    pub location: f64,
    pub x: f64,
    pub y: f64,
    /// Direction of the edge at the decorator, degrees from the x axis.
    pub angle: f64,
    pub graphic: Graphic,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeItem {
    pub id: ElementId,
    pub type_name: String,
    /// Source centre, bend points, target centre.
    pub points: Vec<(f64, f64)>,
    pub appearance: Appearance,
    pub decorators: Vec<DecoratorItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PaletteEntry {
    pub type_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PaletteGroup {
    pub name: &'static str,
    pub entries: Vec<PaletteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FormField {
    pub name: String,
    pub value_type: String,
    pub lower: i64,
    /// `None` when unbounded.
    pub upper: Option<i64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PropertyForm {
    pub type_name: String,
    pub fields: Vec<FormField>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewModel {
    /// Containment pre-order: containers before their content.
    pub nodes: Vec<NodeItem>,
    pub edges: Vec<EdgeItem>,
    pub palette: Vec<PaletteGroup>,
    pub forms: Vec<PropertyForm>,
}

/// Replaces each `${name}` with the attribute's values, comma-separated.
pub fn expand_template(template: &str, attributes: &AttributeMap) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find('}') {
            Some(end) => {
                let name = &after[..end];
                if let Some(values) = attributes.get(name) {
                    let parts: Vec<String> = values.iter().map(ToString::to_string).collect();
                    out.push_str(&parts.join(", "));
                }
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Top-left of a `w`×`h` box placed in its parent box by `pos`.
fn anchor(pos: &Position, parent: (i64, i64, u32, u32), w: u32, h: u32) -> (i64, i64) {
    let (px, py, pw, ph) = parent;
    let (pw, ph, w, h) = (pw as i64, ph as i64, w as i64, h as i64);
    let x = match pos.h_align {
        HAlign::Left => px,
        HAlign::Center => px + (pw - w).div_euclid(2),
        HAlign::Right => px + pw - w,
    };
    let y = match pos.v_align {
        VAlign::Top => py,
        VAlign::Middle => py + (ph - h).div_euclid(2),
        VAlign::Bottom => py + ph - h,
    };
    (x + pos.dx, y + pos.dy)
}

/// Instantiates a shape at a fixed box; `scale` maps declared polyline
/// coordinates onto that box.
fn instantiate(shape: &Shape, x: i64, y: i64, width: u32, height: u32, attrs: &AttributeMap) -> ShapeItem {
    let (dw, dh) = shape.geometry.size();
    let points = match &shape.geometry {
        ShapeGeometry::Polyline { points } => points
            .iter()
            .map(|p| Point {
                x: x + if dw == 0 { p.x } else { p.x * width as i64 / dw as i64 },
                y: y + if dh == 0 { p.y } else { p.y * height as i64 / dh as i64 },
            })
            .collect(),
        _ => Vec::new(),
    };
    let (corner_radius, text) = match &shape.geometry {
        ShapeGeometry::RoundedRectangle { corner_radius, .. } => (Some(*corner_radius), None),
        ShapeGeometry::Text { text } => (None, Some(expand_template(text, attrs))),
        _ => (None, None),
    };
    let children = shape
        .inner_shapes
        .iter()
        .map(|inner| {
            let (w, h) = inner.geometry.size();
            let (cx, cy) = anchor(&inner.position, (x, y, width, height), w, h);
            instantiate(inner, cx, cy, w, h, attrs)
        })
        .collect();
    ShapeItem {
        kind: shape.geometry.kind_name(),
        x,
        y,
        width,
        height,
        points,
        corner_radius,
        text,
        appearance: shape.appearance.clone(),
        children,
    }
}

fn node_item(model: &GraphModelInstance, mm: &Metamodel, n: &Node) -> NodeItem {
    let abs = model.absolute_position(n.id).unwrap_or(Point { x: n.x, y: n.y });
    let shape = match mm.node_style(&n.type_name) {
        Some(style) => instantiate(&style.main_shape, abs.x, abs.y, n.width, n.height, &n.attributes),
        None => ShapeItem {
            kind: "rectangle",
            x: abs.x,
            y: abs.y,
            width: n.width,
            height: n.height,
            points: Vec::new(),
            corner_radius: None,
            text: None,
            appearance: Appearance::default(),
            children: Vec::new(),
        },
    };
    NodeItem { id: n.id, type_name: n.type_name.clone(), container_id: n.container_id, shape }
}

fn centre(model: &GraphModelInstance, id: ElementId) -> (f64, f64) {
    match (model.node(id), model.absolute_position(id)) {
        (Some(n), Some(p)) => (p.x as f64 + n.width as f64 / 2.0, p.y as f64 + n.height as f64 / 2.0),
        _ => (0.0, 0.0),
    }
}

/// Point and direction at fraction `t` of the polyline's length.
pub fn point_along(points: &[(f64, f64)], t: f64) -> (f64, f64, f64) {
    let t = t.clamp(0.0, 1.0);
    let seg_len = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0).hypot(b.1 - a.1);
    let total: f64 = points.windows(2).map(|w| seg_len(w[0], w[1])).sum();
    let Some(&first) = points.first() else { return (0.0, 0.0, 0.0) };
    if total == 0.0 {
        return (first.0, first.1, 0.0);
    }
    let mut remaining = t * total;
    let mut last = (first.0, first.1, 0.0);
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = seg_len(a, b);
        if len == 0.0 {
            continue;
        }
        let angle = (b.1 - a.1).atan2(b.0 - a.0).to_degrees();
        if remaining <= len {
            let f = remaining / len;
            return (a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f, angle);
        }
        remaining -= len;
        last = (b.0, b.1, angle);
    }
    last
}

fn edge_item(model: &GraphModelInstance, mm: &Metamodel, e: &Edge) -> EdgeItem {
    let mut points = vec![centre(model, e.source_id)];
    points.extend(e.bend_points.iter().map(|p| (p.x as f64, p.y as f64)));
    points.push(centre(model, e.target_id));
    let style = mm.edge_style(&e.type_name);
    let decorators = style
        .map(|s| {
            s.decorators
                .iter()
                .map(|d| {
                    let (x, y, angle) = point_along(&points, d.location);
                    let text = match &d.graphic {
                        Graphic::Shape(Shape { geometry: ShapeGeometry::Text { text }, .. }) => {
                            Some(expand_template(text, &e.attributes))
                        }
                        _ => None,
                    };
                    DecoratorItem { location: d.location, x, y, angle, graphic: d.graphic.clone(), text }
                })
                .collect()
        })
        .unwrap_or_default();
    EdgeItem {
        id: e.id,
        type_name: e.type_name.clone(),
        points,
        appearance: style.map(|s| s.appearance.clone()).unwrap_or_default(),
        decorators,
    }
}

fn palette_entry(mm: &Metamodel, t: &str) -> PaletteEntry {
    let (width, height) = match mm.node_style(t).map(|s| s.main_shape.geometry.size()) {
        Some((w, h)) if w > 0 && h > 0 => (w, h),
        _ => FALLBACK_SIZE,
    };
    PaletteEntry { type_name: t.to_string(), width, height }
}

fn field(def: &AttributeDef) -> FormField {
    FormField {
        name: def.name.clone(),
        value_type: def.value_type.to_string(),
        lower: def.lower,
        upper: (def.upper != UNBOUNDED).then_some(def.upper),
        options: match &def.value_type {
            ValueType::Enum(lits) => lits.clone(),
            _ => Vec::new(),
        },
        default: def.default_value.as_ref().map(ToString::to_string),
    }
}

/// Default size for a new node of `type_name`, from its style.
pub fn default_size(mm: &Metamodel, type_name: &str) -> (u32, u32) {
    let e = palette_entry(mm, type_name);
    (e.width, e.height)
}

pub fn render_state(model: &GraphModelInstance, mm: &Metamodel) -> ViewModel {
    let mut nodes = Vec::new();
    let mut stack: Vec<ElementId> = model.root_children.iter().rev().copied().collect();
    while let Some(id) = stack.pop() {
        let Some(n) = model.node(id) else { continue };
        nodes.push(node_item(model, mm, n));
        if let Some(children) = &n.children {
            stack.extend(children.iter().rev());
        }
    }
    let edges = model.edges().map(|e| edge_item(model, mm, e)).collect();
    let palette = [("Nodes", TypeKind::Node), ("Containers", TypeKind::Container)]
        .into_iter()
        .map(|(name, kind)| PaletteGroup {
            name,
            entries: mm.concrete_types(kind).into_iter().map(|t| palette_entry(mm, t)).collect(),
        })
        .filter(|g| !g.entries.is_empty())
        .collect();
    let mut form_types = vec![mm.graph_model_name()];
    form_types.extend(mm.concrete_node_like());
    form_types.extend(mm.concrete_types(TypeKind::Edge));
    let forms = form_types
        .into_iter()
        .map(|t| PropertyForm {
            type_name: t.to_string(),
            fields: mm.flatten_attributes(t).unwrap_or(&[]).iter().map(field).collect(),
        })
        .collect();
    ViewModel { nodes, edges, palette, forms }
}
