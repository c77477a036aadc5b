//! Headless client: a mirror of the central model, optimistic local edits
//! and the server-priority reconciliation of incoming messages.

mod view;

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::engine::{apply_command, restore, CommandOutcome, EngineError};
use crate::guard::RuleId;
use crate::ids::{ElementId, MessageId};
use crate::meta::Metamodel;
use crate::model::GraphModelInstance;
use crate::protocol::{affected_elements, Command, CommandClass, Message, MessageKind};

pub use view::{
    default_size, expand_template, point_along, render_state, DecoratorItem, EdgeItem, FormField, NodeItem,
    PaletteEntry, PaletteGroup, PropertyForm, ShapeItem, ViewModel,
};

pub const DEFAULT_PENDING_LIMIT: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum LocalEditOutcome {
    Sent(MessageId),
    /// The local guard refused; nothing was sent.
    RejectedLocal(RuleId),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("not connected")]
    NotConnected,
    #[error("{0} edits await confirmation")]
    PendingLimit(usize),
    #[error("command is stale against the local replica at {0}")]
    StaleLocal(ElementId),
    #[error("edit carries no commands")]
    Empty,
    #[error("{0} commands cannot be sent as an edit")]
    NotAnEdit(&'static str),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// What an incoming message did to the mirror.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    Init,
    /// Our own edit came back committed.
    Confirmed,
    Foreign,
    Reverted,
    Error,
    Report,
    /// Dropped: not addressed to a live mirror, or superseded by a pending init.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplyReport {
    pub applied: Applied,
    /// Pending local edits dropped because the server touched the same elements.
    pub discarded: Vec<MessageId>,
    /// Confirmed state no longer matched a server command; an init request was queued.
    pub desync: bool,
}

impl ApplyReport {
    fn of(applied: Applied) -> Self {
        ApplyReport { applied, discarded: Vec::new(), desync: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MirrorStats {
    pub sent: u64,
    pub rejected_local: u64,
    pub confirmed: u64,
    pub foreign: u64,
    pub reverted: u64,
    pub discarded: u64,
    pub desyncs: u64,
    pub errors: u64,
}

#[derive(Debug, Clone)]
struct Pending {
    message: Message,
    affected: BTreeSet<ElementId>,
}

/// A client's replica. `confirmed` tracks exactly what the server has
/// broadcast; `replica` is `confirmed` with the still-pending local edits
/// replayed on top, and is what the user sees.
#[derive(Debug, Clone)]
pub struct MirrorModel {
    mm: Arc<Metamodel>,
    user_id: String,
    model_id: ElementId,
    confirmed: Option<GraphModelInstance>,
    replica: Option<GraphModelInstance>,
    pending: VecDeque<Pending>,
    pending_limit: usize,
    connected: bool,
    awaiting_init: bool,
    rng: StdRng,
    outbox: VecDeque<Message>,
    reports: Vec<Message>,
    errors: Vec<String>,
    stats: MirrorStats,
}

impl MirrorModel {
    /// `seed` drives message-id generation, keeping simulations reproducible.
    pub fn new(mm: Arc<Metamodel>, user_id: impl Into<String>, model_id: ElementId, seed: u64) -> Self {
        MirrorModel {
            mm,
            user_id: user_id.into(),
            model_id,
            confirmed: None,
            replica: None,
            pending: VecDeque::new(),
            pending_limit: DEFAULT_PENDING_LIMIT,
            connected: true,
            awaiting_init: true,
            rng: StdRng::seed_from_u64(seed),
            outbox: VecDeque::new(),
            reports: Vec::new(),
            errors: Vec::new(),
            stats: MirrorStats::default(),
        }
    }

    pub fn with_pending_limit(mut self, limit: usize) -> Self {
        self.pending_limit = limit;
        self
    }

    pub fn metamodel(&self) -> &Metamodel {
        &self.mm
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn model_id(&self) -> ElementId {
        self.model_id
    }

    /// What the user sees; `None` until the first init.
    pub fn replica(&self) -> Option<&GraphModelInstance> {
        self.replica.as_ref()
    }

    /// Last server-confirmed state.
    pub fn confirmed(&self) -> Option<&GraphModelInstance> {
        self.confirmed.as_ref()
    }

    pub fn pending(&self) -> impl Iterator<Item = &Message> {
        self.pending.iter().map(|p| &p.message)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_ready(&self) -> bool {
        self.connected && !self.awaiting_init && self.replica.is_some()
    }

    pub fn stats(&self) -> MirrorStats {
        self.stats
    }

    pub fn reports(&self) -> &[Message] {
        &self.reports
    }

    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    /// Next frame for the transport.
    pub fn poll_outgoing(&mut self) -> Option<Message> {
        self.outbox.pop_front()
    }

    /// All queued frames, oldest first.
    pub fn drain_outgoing(&mut self) -> Vec<Message> {
        self.outbox.drain(..).collect()
    }

    /// Connection lost: unconfirmed work is dropped (no offline queue) and a
    /// fresh init is needed before editing again.
    pub fn disconnect(&mut self) {
        self.connected = false;
        self.awaiting_init = true;
        self.pending.clear();
        self.outbox.clear();
        self.replica.clone_from(&self.confirmed);
    }

    /// Transport is back; editing resumes once the server's init arrives.
    pub fn reconnect(&mut self) {
        self.connected = true;
        self.awaiting_init = true;
    }

    fn next_id(&mut self) -> MessageId {
        MessageId::random(&mut self.rng)
    }

    fn message(&mut self, kind: MessageKind, commands: Vec<Command>) -> Message {
        let id = self.next_id();
        Message::new(id, self.model_id, self.user_id.clone(), kind, commands)
    }

    /// Sends a single command: interactions go straight out, edits go
    /// through [`local_edit_batch`](Self::local_edit_batch).
    pub fn local_edit(&mut self, cmd: Command) -> Result<LocalEditOutcome, ClientError> {
        match cmd.class() {
            CommandClass::Interaction => self.interact(cmd),
            CommandClass::Restore => Err(ClientError::NotAnEdit("restore")),
            CommandClass::Edit => self.local_edit_batch(vec![cmd]),
        }
    }

    /// Forwards a gesture; the replica is left alone.
    pub fn interact(&mut self, cmd: Command) -> Result<LocalEditOutcome, ClientError> {
        if cmd.class() != CommandClass::Interaction {
            return Err(ClientError::NotAnEdit(cmd.type_name()));
        }
        if !self.is_ready() {
            return Err(ClientError::NotConnected);
        }
        let m = self.message(MessageKind::Interaction, vec![cmd]);
        let id = m.message_id;
        self.outbox.push_back(m);
        self.stats.sent += 1;
        Ok(LocalEditOutcome::Sent(id))
    }

    /// Applies the commands to the replica as one unit and, if the local
    /// guard accepts all of them, sends them as one edit message.
    pub fn local_edit_batch(&mut self, commands: Vec<Command>) -> Result<LocalEditOutcome, ClientError> {
        if commands.is_empty() {
            return Err(ClientError::Empty);
        }
        if let Some(c) = commands.iter().find(|c| c.class() != CommandClass::Edit) {
            return Err(ClientError::NotAnEdit(c.type_name()));
        }
        if !self.is_ready() {
            return Err(ClientError::NotConnected);
        }
        if self.pending.len() >= self.pending_limit {
            return Err(ClientError::PendingLimit(self.pending.len()));
        }
        let replica = self.replica.as_ref().expect("ready implies a replica");
        let mut next = replica.clone();
        for c in &commands {
            match apply_command(&mut next, &self.mm, c, true)? {
                CommandOutcome::Applied { .. } => {}
                CommandOutcome::RejectedConstraint(v) => {
                    self.stats.rejected_local += 1;
                    return Ok(LocalEditOutcome::RejectedLocal(v.rule));
                }
                CommandOutcome::RejectedStale(id) => return Err(ClientError::StaleLocal(id)),
            }
        }
        self.replica = Some(next);
        let m = self.message(MessageKind::Edit, commands);
        let id = m.message_id;
        self.pending.push_back(Pending { affected: affected_elements(&m), message: m.clone() });
        self.outbox.push_back(m);
        self.stats.sent += 1;
        Ok(LocalEditOutcome::Sent(id))
    }

    /// Asks the server for a fresh snapshot.
    pub fn request_init(&mut self) {
        self.awaiting_init = true;
        let m = self.message(MessageKind::InitRequest, Vec::new());
        self.outbox.push_back(m);
    }

    /// Rebuilds the replica from `confirmed` plus pending edits, dropping
    /// pending edits that no longer apply.
    fn rebuild(&mut self, discarded: &mut Vec<MessageId>) {
        let Some(confirmed) = &self.confirmed else { return };
        let start = discarded.len();
        let mut replica = confirmed.clone();
        let mut kept = VecDeque::with_capacity(self.pending.len());
        for p in self.pending.drain(..) {
            let mut next = replica.clone();
            let ok = p
                .message
                .commands
                .iter()
                .all(|c| matches!(apply_command(&mut next, &self.mm, c, true), Ok(CommandOutcome::Applied { .. })));
            if ok {
                replica = next;
                kept.push_back(p);
            } else {
                discarded.push(p.message.message_id);
            }
        }
        self.stats.discarded += (discarded.len() - start) as u64;
        self.pending = kept;
        self.replica = Some(replica);
    }

    /// Applies server commands to `confirmed` in order; false on the first
    /// one that does not apply.
    fn apply_confirmed(&mut self, commands: &[Command]) -> bool {
        let Some(confirmed) = self.confirmed.as_mut() else { return false };
        commands
            .iter()
            .all(|c| matches!(apply_command(confirmed, &self.mm, c, true), Ok(CommandOutcome::Applied { .. })))
    }

    fn desync(&mut self) -> ApplyReport {
        self.stats.desyncs += 1;
        self.pending.clear();
        self.request_init();
        ApplyReport { applied: Applied::Ignored, discarded: Vec::new(), desync: true }
    }

    /// Reconciles one server message. The server always wins: local edits
    /// touching what the server changed are dropped, and the replica is
    /// rebuilt from confirmed state.
    pub fn on_server_message(&mut self, msg: &Message) -> ApplyReport {
        if msg.graph_model_id != self.model_id || !self.connected {
            return ApplyReport::of(Applied::Ignored);
        }
        match msg.kind {
            MessageKind::Init => {
                let Some(snapshot) = &msg.snapshot else { return ApplyReport::of(Applied::Ignored) };
                self.confirmed = Some(snapshot.clone());
                self.replica = Some(snapshot.clone());
                let discarded: Vec<MessageId> = self.pending.drain(..).map(|p| p.message.message_id).collect();
                self.stats.discarded += discarded.len() as u64;
                self.awaiting_init = false;
                ApplyReport { applied: Applied::Init, discarded, desync: false }
            }
            _ if self.awaiting_init => ApplyReport::of(Applied::Ignored),
            MessageKind::Edit => self.on_edit(msg),
            MessageKind::Revert => {
                let mut ok = true;
                if let Some(confirmed) = self.confirmed.as_mut() {
                    for c in &msg.commands {
                        if let Command::Restore { id, state } = c {
                            ok &= restore(confirmed, *id, state).is_ok();
                        }
                    }
                }
                if !ok {
                    return self.desync();
                }
                self.stats.reverted += 1;
                self.pending.retain(|p| p.message.message_id != msg.message_id);
                let mut discarded = Vec::new();
                self.rebuild(&mut discarded);
                ApplyReport { applied: Applied::Reverted, discarded, desync: false }
            }
            MessageKind::Error => {
                self.stats.errors += 1;
                self.errors.push(msg.detail.clone().unwrap_or_default());
                let before = self.pending.len();
                self.pending.retain(|p| p.message.message_id != msg.message_id);
                let mut discarded = Vec::new();
                if self.pending.len() != before {
                    self.rebuild(&mut discarded);
                }
                ApplyReport { applied: Applied::Error, discarded, desync: false }
            }
            MessageKind::Report => {
                self.reports.push(msg.clone());
                ApplyReport::of(Applied::Report)
            }
            MessageKind::InitRequest | MessageKind::Interaction => ApplyReport::of(Applied::Ignored),
        }
    }

    fn on_edit(&mut self, msg: &Message) -> ApplyReport {
        if !self.apply_confirmed(&msg.commands) {
            return self.desync();
        }
        if let Some(pos) = self.pending.iter().position(|p| p.message.message_id == msg.message_id) {
            let mine = self.pending.remove(pos).expect("position is in range");
            self.stats.confirmed += 1;
            let mut discarded = Vec::new();
            // The usual case: our oldest edit, untouched by hooks, so the
            // replica already is confirmed + pending.
            if pos != 0 || mine.message.commands != msg.commands {
                self.rebuild(&mut discarded);
            }
            return ApplyReport { applied: Applied::Confirmed, discarded, desync: false };
        }
        self.stats.foreign += 1;
        if self.pending.is_empty() {
            self.replica.clone_from(&self.confirmed);
            return ApplyReport::of(Applied::Foreign);
        }
        let touched = affected_elements(msg);
        let mut discarded = Vec::new();
        self.pending.retain(|p| {
            let conflict = !p.affected.is_disjoint(&touched);
            if conflict {
                discarded.push(p.message.message_id);
            }
            !conflict
        });
        self.stats.discarded += discarded.len() as u64;
        self.rebuild(&mut discarded);
        ApplyReport { applied: Applied::Foreign, discarded, desync: false }
    }
}
