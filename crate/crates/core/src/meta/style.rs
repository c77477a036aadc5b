//! Concrete syntax: how nodes and edges are drawn.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StyleSet {
    #[serde(default)]
    pub node_styles: Vec<NodeStyle>,
    #[serde(default)]
    pub edge_styles: Vec<EdgeStyle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeStyle {
    pub type_name: String,
    pub main_shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeStyle {
    pub type_name: String,
    #[serde(default)]
    pub decorators: Vec<Decorator>,
    #[serde(default)]
    pub appearance: Appearance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Shape {
    #[serde(flatten)]
    pub geometry: ShapeGeometry,
    #[serde(default)]
    pub position: Position,
    #[serde(default)]
    pub appearance: Appearance,
    #[serde(default)]
    pub inner_shapes: Vec<Shape>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

/// Kind-dependent geometry. Text carries a template where `${attr}` is
/// replaced by the element's attribute values at render time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ShapeGeometry {
    Rectangle { width: u32, height: u32 },
    Ellipse { width: u32, height: u32 },
    #[serde(rename_all = "camelCase")]
    RoundedRectangle { width: u32, height: u32, corner_radius: u32 },
    Polyline { points: Vec<Point> },
    Text { text: String },
}

impl ShapeGeometry {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ShapeGeometry::Rectangle { .. } => "rectangle",
            ShapeGeometry::Ellipse { .. } => "ellipse",
            ShapeGeometry::RoundedRectangle { .. } => "roundedRectangle",
            ShapeGeometry::Polyline { .. } => "polyline",
            ShapeGeometry::Text { .. } => "text",
        }
    }

    /// Declared extent. Polylines use their bounding box from the origin;
    /// text has no extent and sits on its anchor.
    pub fn size(&self) -> (u32, u32) {
        match self {
            ShapeGeometry::Rectangle { width, height }
            | ShapeGeometry::Ellipse { width, height }
            | ShapeGeometry::RoundedRectangle { width, height, .. } => (*width, *height),
            ShapeGeometry::Polyline { points } => {
                let w = points.iter().map(|p| p.x.max(0)).max().unwrap_or(0);
                let h = points.iter().map(|p| p.y.max(0)).max().unwrap_or(0);
                (w as u32, h as u32)
            }
            ShapeGeometry::Text { .. } => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum HAlign {
    #[default]
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum VAlign {
    #[default]
    Top,
    Middle,
    Bottom,
}

/// Placement relative to the parent shape: an anchor plus a pixel offset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Position {
    #[serde(default)]
    pub h_align: HAlign,
    #[serde(default)]
    pub v_align: VAlign,
    #[serde(default)]
    pub dx: i64,
    #[serde(default)]
    pub dy: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decorator {
    pub location: f64,
    pub graphic: Graphic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Graphic {
    ArrowHead {
        length: u32,
        width: u32,
        #[serde(default)]
        appearance: Appearance,
    },
    Shape(Shape),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LineStyle {
    #[default]
    Solid,
    Dash,
    Dot,
    Dashdot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Font {
    pub family: String,
    pub size: u32,
    #[serde(default)]
    pub bold: bool,
    #[serde(default)]
    pub italic: bool,
}

fn default_line_width() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Appearance {
    #[serde(default = "Color::white")]
    pub background: Color,
    #[serde(default = "Color::black")]
    pub foreground: Color,
    #[serde(default = "default_line_width")]
    pub line_width: u32,
    #[serde(default)]
    pub line_style: LineStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font: Option<Font>,
}

impl Default for Appearance {
    fn default() -> Self {
        Appearance {
            background: Color::white(),
            foreground: Color::black(),
            line_width: default_line_width(),
            line_style: LineStyle::Solid,
            font: None,
        }
    }
}

/// An RGB color written as `#RRGGBB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Color(pub u8, pub u8, pub u8);

impl Color {
    pub fn white() -> Self {
        Color(0xff, 0xff, 0xff)
    }

    pub fn black() -> Self {
        Color(0, 0, 0)
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02X}{:02X}{:02X}", self.0, self.1, self.2)
    }
}

impl FromStr for Color {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s
            .strip_prefix('#')
            .filter(|h| h.len() == 6 && h.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| format!("invalid color `{s}`, expected #RRGGBB"))?;
        let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap();
        Ok(Color(byte(0), byte(2), byte(4)))
    }
}

impl Serialize for Color {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Color {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
