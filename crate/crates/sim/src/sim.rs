//! Deterministic multi-client simulation over a virtual clock.
//!
//! The real server hub and client mirrors run unmodified; the only stand-in
//! is the transport, which carries encoded frames over per-client links.
//! Each link is FIFO like a socket: a frame never overtakes the one sent
//! before it on the same link, but frames on different links interleave
//! freely according to their drawn latencies.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use graphdsl_core::client::{LocalEditOutcome, MirrorModel};
use graphdsl_core::ids::MessageId;
use graphdsl_core::meta::Metamodel;
use graphdsl_core::protocol::{decode, encode, Command, Message, MessageKind};
use graphdsl_core::random::{random_command, GenConfig};
use graphdsl_core::service::{replay, HookRegistry, HubConfig, ModelHub, ServiceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::scenario::{Action, Scenario};

/// Attempts per `randomEdit` step before it counts as skipped.
const RANDOM_EDIT_ATTEMPTS: usize = 25;

#[derive(Clone)]
pub struct SimOptions {
    pub hooks: Arc<HookRegistry>,
    /// `seed` is overridden by the scenario's.
    pub service: ServiceConfig,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { hooks: Arc::new(HookRegistry::default()), service: ServiceConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Link {
    /// Client to server.
    Up(usize),
    /// Server to client.
    Down(usize),
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::Up(c) => write!(f, "client{c}->server"),
            Link::Down(c) => write!(f, "server->client{c}"),
        }
    }
}

#[derive(Debug, Clone)]
enum Event {
    Deliver { link: Link, text: String, epoch: u64 },
    Step(usize),
}

/// Deliveries at a given tick run before scripted steps at that tick.
type EventKey = (u64, u8, u64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ClientDiff {
    pub client: usize,
    pub connected: bool,
    pub diffs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HarnessTimeout {
    pub deliveries_after_script: u64,
    pub in_flight: usize,
    pub in_flight_per_link: BTreeMap<String, usize>,
    pub pending_per_client: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceReport {
    pub converged: bool,
    pub per_client_diff: Vec<ClientDiff>,
    /// Frames sent by clients.
    pub messages_sent: u64,
    /// Frames sent by the server.
    pub messages_delivered: u64,
    pub committed: u64,
    pub rejected: u64,
    /// Revert frames that reached a client.
    pub reverted: u64,
    pub reverts_per_client: Vec<u64>,
    pub local_rejections: u64,
    pub skipped_edits: u64,
    pub dropped_frames: u64,
    /// Central model equals the replay of all committed stacks from the base.
    pub replay_equivalent: bool,
    /// Every connected client saw each broadcast since its last init exactly once, in server order.
    pub broadcast_order_ok: bool,
    pub integrity_errors: Vec<String>,
    pub virtual_time: u64,
    pub events: u64,
    pub timeout: Option<HarnessTimeout>,
    #[serde(skip)]
    pub wall_time_ms: f64,
}

impl ConvergenceReport {
    /// Everything except wall time; identical for identical inputs.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Canonical JSON plus the wall time.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("reports always serialize");
        v["wallTimeMs"] = serde_json::json!(self.wall_time_ms);
        serde_json::to_string_pretty(&v).expect("reports always serialize")
    }

    pub fn summary(&self) -> String {
        format!(
            "sent: {}, committed: {}, rejected: {}, reverted: {}, converged: {}",
            self.messages_sent, self.committed, self.rejected, self.reverted, self.converged
        )
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary())?;
        writeln!(f, "replay equivalent: {}", self.replay_equivalent)?;
        writeln!(f, "broadcast order ok: {}", self.broadcast_order_ok)?;
        writeln!(f, "local rejections: {}, skipped edits: {}", self.local_rejections, self.skipped_edits)?;
        writeln!(f, "virtual time: {}, events: {}, wall time: {:.1} ms", self.virtual_time, self.events, self.wall_time_ms)?;
        for d in &self.per_client_diff {
            let state = if !d.connected {
                "disconnected".to_string()
            } else if d.diffs.is_empty() {
                "in sync".to_string()
            } else {
                d.diffs.join("; ")
            };
            writeln!(f, "client {}: {state}", d.client)?;
        }
        for e in &self.integrity_errors {
            writeln!(f, "integrity: {e}")?;
        }
        if let Some(t) = &self.timeout {
            writeln!(f, "timeout: {} frames in flight after {} deliveries", t.in_flight, t.deliveries_after_script)?;
        }
        Ok(())
    }
}

struct SimClient {
    mirror: MirrorModel,
    connected: bool,
    /// Bumped on every disconnect/reconnect; frames from an older epoch are dropped.
    epoch: u64,
    /// Broadcast positions at which in-flight init frames were taken.
    init_bases: VecDeque<usize>,
    received_base: usize,
    received: Vec<MessageId>,
    delivered: Vec<Message>,
    reverts: u64,
}

pub struct Simulation {
    mm: Arc<Metamodel>,
    scenario: Scenario,
    hub: ModelHub,
    clients: Vec<SimClient>,
    rng: ChaCha8Rng,
    queue: BTreeMap<EventKey, Event>,
    link_last: BTreeMap<Link, u64>,
    now: u64,
    seq: u64,
    /// Edit broadcasts in commit order.
    broadcasts: Vec<MessageId>,
    sent: u64,
    delivered: u64,
    dropped: u64,
    local_rejections: u64,
    skipped: u64,
    events: u64,
}

impl Simulation {
    pub fn new(mm: Arc<Metamodel>, scenario: Scenario, options: SimOptions) -> Self {
        let mut service = options.service;
        service.seed = scenario.seed;
        let hub = ModelHub::new(mm.clone(), options.hooks, HubConfig { auto_create: true, service });
        let clients = (0..scenario.clients)
            .map(|i| SimClient {
                mirror: MirrorModel::new(mm.clone(), user_name(i), scenario.model_id, client_seed(scenario.seed, i)),
                connected: false,
                epoch: 0,
                init_bases: VecDeque::new(),
                received_base: 0,
                received: Vec::new(),
                delivered: Vec::new(),
                reverts: 0,
            })
            .collect();
        let mut sim = Simulation {
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            mm,
            scenario,
            hub,
            clients,
            queue: BTreeMap::new(),
            link_last: BTreeMap::new(),
            now: 0,
            seq: 0,
            broadcasts: Vec::new(),
            sent: 0,
            delivered: 0,
            dropped: 0,
            local_rejections: 0,
            skipped: 0,
            events: 0,
        };
        for c in 0..sim.clients.len() {
            sim.connect(c);
        }
        let mut at = 0;
        for (i, step) in sim.scenario.script.iter().enumerate() {
            at += step.delay;
            sim.seq += 1;
            sim.queue.insert((at, 1, sim.seq), Event::Step(i));
        }
        sim
    }

    pub fn hub(&self) -> &ModelHub {
        &self.hub
    }

    pub fn client(&self, i: usize) -> &MirrorModel {
        &self.clients[i].mirror
    }

    /// Every server frame client `i` received, in arrival order.
    pub fn delivered_to(&self, i: usize) -> &[Message] {
        &self.clients[i].delivered
    }

    pub fn run(mut self) -> (ConvergenceReport, Simulation) {
        let started = Instant::now();
        let mut steps_left = self.scenario.script.len();
        let mut after_script = 0u64;
        let mut timeout = None;
        while let Some(((time, _, _), event)) = self.queue.pop_first() {
            self.now = time;
            self.events += 1;
            match event {
                Event::Step(i) => {
                    steps_left -= 1;
                    self.step(i);
                }
                Event::Deliver { link, text, epoch } => {
                    if steps_left == 0 {
                        after_script += 1;
                    }
                    self.deliver(link, &text, epoch);
                }
            }
            if steps_left == 0 && after_script > self.scenario.quiescence_budget {
                timeout = Some(self.timeout_diagnostics(after_script));
                break;
            }
        }
        let mut report = self.report(timeout);
        report.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        (report, self)
    }

    fn connect(&mut self, c: usize) {
        let client = &mut self.clients[c];
        client.connected = true;
        client.epoch += 1;
        let out = self
            .hub
            .connect(c as u64, &user_name(c), self.scenario.model_id)
            .expect("auto-create is on, so connecting cannot fail");
        self.clients[c].init_bases.push_back(self.broadcasts.len());
        self.send(Link::Down(c), &out.message);
    }

    fn step(&mut self, i: usize) {
        let step = self.scenario.script[i].clone();
        let c = step.client_index;
        match step.action {
            Action::RandomEdit => self.random_edit(c),
            Action::ExplicitCommand { command } => self.explicit(c, command),
            Action::Disconnect => {
                if self.clients[c].connected {
                    let client = &mut self.clients[c];
                    client.mirror.disconnect();
                    client.connected = false;
                    client.epoch += 1;
                    client.init_bases.clear();
                    self.hub.disconnect(c as u64);
                }
            }
            Action::Reconnect => {
                if !self.clients[c].connected {
                    self.clients[c].mirror.reconnect();
                    self.connect(c);
                }
            }
        }
        self.flush(c);
    }

    fn random_edit(&mut self, c: usize) {
        let cfg = GenConfig { stale_rate: 0.0, invalid_value_rate: 0.0, ..GenConfig::default() };
        for _ in 0..RANDOM_EDIT_ATTEMPTS {
            let mirror = &mut self.clients[c].mirror;
            let Some(replica) = mirror.replica().filter(|_| mirror.is_ready()) else { break };
            let cmd = random_command(&mut self.rng, replica, &self.mm, &cfg);
            match mirror.local_edit(cmd) {
                Ok(LocalEditOutcome::Sent(_)) => return,
                Ok(LocalEditOutcome::RejectedLocal(_)) => self.local_rejections += 1,
                Err(graphdsl_core::client::ClientError::PendingLimit(_)) => break,
                Err(_) => self.local_rejections += 1,
            }
        }
        self.skipped += 1;
    }

    fn explicit(&mut self, c: usize, command: Command) {
        match self.clients[c].mirror.local_edit(command) {
            Ok(LocalEditOutcome::Sent(_)) => {}
            Ok(LocalEditOutcome::RejectedLocal(_)) => self.local_rejections += 1,
            Err(_) => self.skipped += 1,
        }
    }

    fn flush(&mut self, c: usize) {
        for m in self.clients[c].mirror.drain_outgoing() {
            self.send(Link::Up(c), &m);
        }
    }

    fn send(&mut self, link: Link, message: &Message) {
        match link {
            Link::Up(_) => self.sent += 1,
            Link::Down(_) => self.delivered += 1,
        }
        let delay = self.scenario.delivery_schedule.draw(&mut self.rng);
        let last = self.link_last.get(&link).copied().unwrap_or(0);
        let at = (self.now + delay).max(last);
        self.link_last.insert(link, at);
        let epoch = match link {
            Link::Up(c) | Link::Down(c) => self.clients[c].epoch,
        };
        self.seq += 1;
        self.queue.insert((at, 0, self.seq), Event::Deliver { link, text: encode(message), epoch });
    }

    fn deliver(&mut self, link: Link, text: &str, epoch: u64) {
        let (Link::Up(c) | Link::Down(c)) = link;
        if self.clients[c].epoch != epoch {
            self.dropped += 1;
            return;
        }
        match link {
            Link::Up(c) => {
                let out = self.hub.receive(c as u64, text);
                let mut recorded = false;
                for o in out {
                    match o.message.kind {
                        // One broadcast fans out into a frame per subscriber.
                        MessageKind::Edit if !recorded => {
                            self.broadcasts.push(o.message.message_id);
                            recorded = true;
                        }
                        MessageKind::Init => {
                            let s = o.session as usize;
                            self.clients[s].init_bases.push_back(self.broadcasts.len());
                        }
                        _ => {}
                    }
                    self.send(Link::Down(o.session as usize), &o.message);
                }
            }
            Link::Down(c) => {
                let msg = decode(text).expect("the server only sends valid frames");
                let client = &mut self.clients[c];
                match msg.kind {
                    MessageKind::Init => {
                        client.received_base = client.init_bases.pop_front().unwrap_or(0);
                        client.received.clear();
                    }
                    MessageKind::Edit => client.received.push(msg.message_id),
                    MessageKind::Revert => client.reverts += 1,
                    _ => {}
                }
                client.mirror.on_server_message(&msg);
                client.delivered.push(msg);
                self.flush(c);
            }
        }
    }

    fn timeout_diagnostics(&self, after_script: u64) -> HarnessTimeout {
        let mut per_link = BTreeMap::new();
        for e in self.queue.values() {
            if let Event::Deliver { link, .. } = e {
                *per_link.entry(link.to_string()).or_insert(0) += 1;
            }
        }
        HarnessTimeout {
            deliveries_after_script: after_script,
            in_flight: self.queue.len(),
            in_flight_per_link: per_link,
            pending_per_client: self.clients.iter().map(|c| c.mirror.pending_len()).collect(),
        }
    }

    fn report(&self, timeout: Option<HarnessTimeout>) -> ConvergenceReport {
        let svc = self.hub.service(self.scenario.model_id).expect("clients connected at start");
        let central = svc.model();
        let mut per_client_diff = Vec::new();
        let mut order_ok = true;
        for (i, c) in self.clients.iter().enumerate() {
            let mut diffs = Vec::new();
            if c.connected {
                match c.mirror.replica() {
                    Some(r) if c.mirror.is_ready() => diffs.extend(central.diff(r).iter().map(|d| d.to_string())),
                    _ => diffs.push("no snapshot".into()),
                }
                if c.mirror.pending_len() > 0 {
                    diffs.push(format!("{} pending edits", c.mirror.pending_len()));
                }
                if self.broadcasts.get(c.received_base..) != Some(&c.received[..]) {
                    order_ok = false;
                }
            }
            per_client_diff.push(ClientDiff { client: i, connected: c.connected, diffs });
        }
        let replay_equivalent =
            replay(svc.base(), &self.mm, svc.committed()).is_ok_and(|m| m.diff(central).is_empty());
        let stats = svc.stats();
        ConvergenceReport {
            converged: timeout.is_none() && per_client_diff.iter().all(|d| d.diffs.is_empty()),
            per_client_diff,
            messages_sent: self.sent,
            messages_delivered: self.delivered,
            committed: stats.committed,
            rejected: stats.rejected,
            reverted: self.clients.iter().map(|c| c.reverts).sum(),
            reverts_per_client: self.clients.iter().map(|c| c.reverts).collect(),
            local_rejections: self.local_rejections,
            skipped_edits: self.skipped,
            dropped_frames: self.dropped,
            replay_equivalent,
            broadcast_order_ok: order_ok,
            integrity_errors: central.integrity_errors(),
            virtual_time: self.now,
            events: self.events,
            timeout,
            wall_time_ms: 0.0,
        }
    }
}

fn user_name(i: usize) -> String {
    format!("user{i}")
}

fn client_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 + 1)
}

/// Runs `scenario` to quiescence with no hooks and returns its report.
pub fn run_scenario(mm: Arc<Metamodel>, scenario: &Scenario) -> ConvergenceReport {
    run_scenario_with(mm, scenario, SimOptions::default())
}

pub fn run_scenario_with(mm: Arc<Metamodel>, scenario: &Scenario, options: SimOptions) -> ConvergenceReport {
    Simulation::new(mm, scenario.clone(), options).run().0
}
