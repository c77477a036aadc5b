//! Wire protocol: the command vocabulary and the message envelope exchanged
//! between clients and the server, plus the JSON codec.
//!
//! Encoding is canonical (struct field order, sorted maps, no whitespace),
//! so equal messages always produce identical bytes.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ids::{ElementId, MessageId};
use crate::model::{AttributeMap, Edge, GraphModelInstance, Node, Point, RoutingPreference, Size};

pub const PROTOCOL_VERSION: u64 = 1;

/// Everything needed to recreate a deleted node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeState {
    pub type_name: String,
    pub container_id: ElementId,
    pub x: i64,
    pub y: i64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub attributes: AttributeMap,
}

impl From<&Node> for NodeState {
    fn from(n: &Node) -> Self {
        NodeState {
            type_name: n.type_name.clone(),
            container_id: n.container_id,
            x: n.x,
            y: n.y,
            width: n.width,
            height: n.height,
            attributes: n.attributes.clone(),
        }
    }
}

/// Everything needed to recreate a deleted edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeState {
    pub type_name: String,
    pub source_id: ElementId,
    pub target_id: ElementId,
    #[serde(default)]
    pub bend_points: Vec<Point>,
    #[serde(default)]
    pub attributes: AttributeMap,
}

impl From<&Edge> for EdgeState {
    fn from(e: &Edge) -> Self {
        EdgeState {
            type_name: e.type_name.clone(),
            source_id: e.source_id,
            target_id: e.target_id,
            bend_points: e.bend_points.clone(),
            attributes: e.attributes.clone(),
        }
    }
}

/// Model-level state that is not an element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelHeader {
    #[serde(default)]
    pub attributes: AttributeMap,
    #[serde(default)]
    pub routing: RoutingPreference,
}

/// Authoritative state carried by a `restore` command in a revert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum RestoredState {
    /// The element does not exist on the server.
    Absent,
    Node(Node),
    Edge(Edge),
    GraphModel(ModelHeader),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum Command {
    CreateNode {
        id: ElementId,
        type_name: String,
        container_id: ElementId,
        x: i64,
        y: i64,
        width: u32,
        height: u32,
        #[serde(default)]
        initial_attributes: AttributeMap,
    },
    DeleteNode {
        id: ElementId,
        old_state: NodeState,
    },
    MoveNode {
        id: ElementId,
        from_container_id: ElementId,
        to_container_id: ElementId,
        from: Point,
        to: Point,
    },
    ResizeNode {
        id: ElementId,
        old_size: Size,
        new_size: Size,
    },
    CreateEdge {
        id: ElementId,
        type_name: String,
        source_id: ElementId,
        target_id: ElementId,
        #[serde(default)]
        initial_attributes: AttributeMap,
        #[serde(default)]
        bend_points: Vec<Point>,
    },
    DeleteEdge {
        id: ElementId,
        old_state: EdgeState,
    },
    ReconnectEdge {
        id: ElementId,
        old_source: ElementId,
        old_target: ElementId,
        new_source: ElementId,
        new_target: ElementId,
    },
    BendEdge {
        id: ElementId,
        old_bend_points: Vec<Point>,
        new_bend_points: Vec<Point>,
    },
    /// Replaces the whole attribute map of an element or of the graph model.
    SetAttributes {
        id: ElementId,
        old_assignment: AttributeMap,
        new_assignment: AttributeMap,
    },
    Routing {
        previous: RoutingPreference,
        preference: RoutingPreference,
    },
    Click {
        id: ElementId,
    },
    DoubleClick {
        id: ElementId,
    },
    ContextMenu {
        id: ElementId,
        action_id: String,
    },
    /// Server-authoritative state of one element; only valid inside a revert.
    Restore {
        id: ElementId,
        state: RestoredState,
    },
}

pub const COMMAND_TYPES: &[&str] = &[
    "createNode",
    "deleteNode",
    "moveNode",
    "resizeNode",
    "createEdge",
    "deleteEdge",
    "reconnectEdge",
    "bendEdge",
    "setAttributes",
    "routing",
    "click",
    "doubleClick",
    "contextMenu",
    "restore",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandClass {
    /// Changes the model (element and editor commands).
    Edit,
    /// User gesture forwarded to hooks; never changes the model by itself.
    Interaction,
    Restore,
}

impl Command {
    pub fn class(&self) -> CommandClass {
        match self {
            Command::Click { .. } | Command::DoubleClick { .. } | Command::ContextMenu { .. } => {
                CommandClass::Interaction
            }
            Command::Restore { .. } => CommandClass::Restore,
            _ => CommandClass::Edit,
        }
    }

    /// Wire tag of the variant.
    pub fn type_name(&self) -> &'static str {
        match self {
            Command::CreateNode { .. } => "createNode",
            Command::DeleteNode { .. } => "deleteNode",
            Command::MoveNode { .. } => "moveNode",
            Command::ResizeNode { .. } => "resizeNode",
            Command::CreateEdge { .. } => "createEdge",
            Command::DeleteEdge { .. } => "deleteEdge",
            Command::ReconnectEdge { .. } => "reconnectEdge",
            Command::BendEdge { .. } => "bendEdge",
            Command::SetAttributes { .. } => "setAttributes",
            Command::Routing { .. } => "routing",
            Command::Click { .. } => "click",
            Command::DoubleClick { .. } => "doubleClick",
            Command::ContextMenu { .. } => "contextMenu",
            Command::Restore { .. } => "restore",
        }
    }

    /// The element the command is about, if any.
    pub fn target(&self) -> Option<ElementId> {
        match self {
            Command::CreateNode { id, .. }
            | Command::DeleteNode { id, .. }
            | Command::MoveNode { id, .. }
            | Command::ResizeNode { id, .. }
            | Command::CreateEdge { id, .. }
            | Command::DeleteEdge { id, .. }
            | Command::ReconnectEdge { id, .. }
            | Command::BendEdge { id, .. }
            | Command::SetAttributes { id, .. }
            | Command::Click { id }
            | Command::DoubleClick { id }
            | Command::ContextMenu { id, .. }
            | Command::Restore { id, .. } => Some(*id),
            Command::Routing { .. } => None,
        }
    }

    /// Elements whose state the command reads or writes. Edge endpoints
    /// count; containers do not, so two users filling the same container
    /// never conflict on it.
    pub fn affected(&self, graph_model_id: ElementId, out: &mut BTreeSet<ElementId>) {
        match self {
            Command::CreateEdge { id, source_id, target_id, .. } => {
                out.extend([*id, *source_id, *target_id]);
            }
            Command::DeleteEdge { id, old_state } => {
                out.extend([*id, old_state.source_id, old_state.target_id]);
            }
            Command::ReconnectEdge { id, old_source, old_target, new_source, new_target } => {
                out.extend([*id, *old_source, *old_target, *new_source, *new_target]);
            }
            Command::Routing { .. } => {
                out.insert(graph_model_id);
            }
            other => out.extend(other.target()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MessageKind {
    Edit,
    Revert,
    Init,
    InitRequest,
    Interaction,
    /// Server-side failure unrelated to a specific edit (malformed input, unknown action).
    Error,
    /// Output of an interpreter run.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Message {
    pub protocol: u64,
    pub message_id: MessageId,
    pub graph_model_id: ElementId,
    pub user_id: String,
    pub kind: MessageKind,
    #[serde(default)]
    pub commands: Vec<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<GraphModelInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Message {
    pub fn new(
        message_id: MessageId,
        graph_model_id: ElementId,
        user_id: impl Into<String>,
        kind: MessageKind,
        commands: Vec<Command>,
    ) -> Self {
        Message {
            protocol: PROTOCOL_VERSION,
            message_id,
            graph_model_id,
            user_id: user_id.into(),
            kind,
            commands,
            snapshot: None,
            detail: None,
        }
    }

    pub fn init(message_id: MessageId, user_id: impl Into<String>, snapshot: GraphModelInstance) -> Self {
        let mut m = Message::new(message_id, snapshot.id, user_id, MessageKind::Init, Vec::new());
        m.snapshot = Some(snapshot);
        m
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    /// Structural invariants of each message kind.
    pub fn check(&self) -> Result<(), ProtocolError> {
        let invalid = |why: &str| Err(ProtocolError::InvalidMessage(why.to_string()));
        if self.protocol != PROTOCOL_VERSION {
            return Err(ProtocolError::UnsupportedVersion(self.protocol));
        }
        let all = |class| self.commands.iter().all(|c| c.class() == class);
        match self.kind {
            MessageKind::Edit => {
                if self.commands.is_empty() {
                    return invalid("edit without commands");
                }
                if !all(CommandClass::Edit) {
                    return invalid("edit may only carry element and editor commands");
                }
            }
            MessageKind::Interaction => {
                if self.commands.len() != 1 || !all(CommandClass::Interaction) {
                    return invalid("interaction carries exactly one interaction command");
                }
            }
            MessageKind::Revert => {
                if self.commands.is_empty() || !all(CommandClass::Restore) {
                    return invalid("revert carries one or more restore commands");
                }
            }
            MessageKind::Init => {
                if self.snapshot.is_none() || !self.commands.is_empty() {
                    return invalid("init carries a snapshot and no commands");
                }
            }
            MessageKind::InitRequest | MessageKind::Error | MessageKind::Report => {
                if !self.commands.is_empty() {
                    return invalid("message kind carries no commands");
                }
            }
        }
        if self.kind != MessageKind::Init && self.snapshot.is_some() {
            return invalid("only init carries a snapshot");
        }
        Ok(())
    }
}

/// Union of [`Command::affected`] over every command of the message.
pub fn affected_elements(message: &Message) -> BTreeSet<ElementId> {
    let mut out = BTreeSet::new();
    for c in &message.commands {
        c.affected(message.graph_model_id, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("decode error at byte {position}: {reason}")]
    DecodeError { position: usize, reason: String },
    #[error("unknown command type `{0}`")]
    UnknownCommandType(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u64),
    #[error("invalid message: {0}")]
    InvalidMessage(String),
}

pub fn encode(message: &Message) -> String {
    serde_json::to_string(message).expect("messages always serialize")
}

/// Decodes and validates one message frame.
pub fn decode(text: &str) -> Result<Message, ProtocolError> {
    let value: Value = serde_json::from_str(text).map_err(|e| decode_error(text, &e))?;
    let Value::Object(obj) = &value else {
        return Err(ProtocolError::DecodeError { position: 0, reason: "expected an object".into() });
    };
    match obj.get("protocol").and_then(Value::as_u64) {
        Some(PROTOCOL_VERSION) => {}
        Some(v) => return Err(ProtocolError::UnsupportedVersion(v)),
        None => {
            return Err(ProtocolError::DecodeError {
                position: 0,
                reason: "missing or non-integer `protocol`".into(),
            })
        }
    }
    if let Some(Value::Array(cmds)) = obj.get("commands") {
        for c in cmds {
            if let Some(t) = c.get("type").and_then(Value::as_str) {
                if !COMMAND_TYPES.contains(&t) {
                    return Err(ProtocolError::UnknownCommandType(t.to_string()));
                }
            }
        }
    }
    let message: Message = serde_json::from_str(text).map_err(|e| decode_error(text, &e))?;
    message.check()?;
    Ok(message)
}

/// Like [`decode`] for raw frames; invalid UTF-8 is a decode error.
pub fn decode_bytes(bytes: &[u8]) -> Result<Message, ProtocolError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ProtocolError::DecodeError {
        position: e.valid_up_to(),
        reason: "invalid UTF-8".into(),
    })?;
    decode(text)
}

fn decode_error(text: &str, e: &serde_json::Error) -> ProtocolError {
    ProtocolError::DecodeError { position: byte_offset(text, e.line(), e.column()), reason: e.to_string() }
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target() {
            Some(id) => write!(f, "{}({id})", self.type_name()),
            None => write!(f, "{}", self.type_name()),
        }
    }
}
