//! Exhaustive exploration of every delivery order for two conflicting edits.
//!
//! Two clients start from the same synchronized model. Each issues one
//! fixed edit at some point; the explorer branches on every choice of
//! "client issues its edit" or "deliver the head frame of some link", with
//! links FIFO as in the simulator. Every terminal state is checked.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use graphdsl_core::client::MirrorModel;
use graphdsl_core::engine::apply_command;
use graphdsl_core::ids::ElementId;
use graphdsl_core::meta::Metamodel;
use graphdsl_core::model::GraphModelInstance;
use graphdsl_core::protocol::{decode, encode, Command};
use graphdsl_core::service::{replay, HookRegistry, HubConfig, ModelHub};
use serde::Serialize;

use crate::sim::Link;

/// Two edits on overlapping elements, issued by two different clients.
#[derive(Debug, Clone)]
pub struct ConflictFixture {
    pub name: String,
    /// Commands building the shared starting model.
    pub setup: Vec<Command>,
    pub first: Vec<Command>,
    pub second: Vec<Command>,
    /// Admissible sequences of committed edits, by label ("first", "second").
    pub allowed: Vec<Vec<&'static str>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InterleaveReport {
    pub fixture: String,
    pub interleavings: u64,
    /// Committed label sequence to how many interleavings ended with it.
    pub outcomes: BTreeMap<String, u64>,
    pub failures: Vec<String>,
}

impl InterleaveReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.interleavings > 0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("setup command {index} was not applied: {reason}")]
    Setup { index: usize, reason: String },
}

const MODEL: ElementId = ElementId(1);

#[derive(Clone)]
struct State {
    hub: ModelHub,
    clients: [MirrorModel; 2],
    issued: [bool; 2],
    links: BTreeMap<Link, VecDeque<String>>,
}

impl State {
    fn choices(&self) -> Vec<Choice> {
        let mut out: Vec<Choice> = (0..2).filter(|&c| !self.issued[c]).map(Choice::Issue).collect();
        out.extend(self.links.iter().filter(|(_, q)| !q.is_empty()).map(|(l, _)| Choice::Deliver(*l)));
        out
    }

    fn flush(&mut self, c: usize) {
        for m in self.clients[c].drain_outgoing() {
            self.links.entry(Link::Up(c)).or_default().push_back(encode(&m));
        }
    }

    fn apply(&mut self, choice: Choice, fixture: &ConflictFixture) {
        match choice {
            Choice::Issue(c) => {
                self.issued[c] = true;
                let cmds = if c == 0 { fixture.first.clone() } else { fixture.second.clone() };
                // A locally stale or invalid edit is simply never sent.
                let _ = self.clients[c].local_edit_batch(cmds);
                self.flush(c);
            }
            Choice::Deliver(link) => {
                let text = self.links.get_mut(&link).and_then(VecDeque::pop_front).expect("chosen link is non-empty");
                match link {
                    Link::Up(c) => {
                        for o in self.hub.receive(c as u64, &text) {
                            self.links.entry(Link::Down(o.session as usize)).or_default().push_back(encode(&o.message));
                        }
                    }
                    Link::Down(c) => {
                        let msg = decode(&text).expect("server frames are valid");
                        self.clients[c].on_server_message(&msg);
                        self.flush(c);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Choice {
    Issue(usize),
    Deliver(Link),
}

fn build_base(mm: &Metamodel, setup: &[Command]) -> Result<GraphModelInstance, FixtureError> {
    let mut model = GraphModelInstance::new(MODEL, mm.graph_model_name());
    for (index, cmd) in setup.iter().enumerate() {
        match apply_command(&mut model, mm, cmd, true) {
            Ok(o) if o.is_applied() => {}
            Ok(o) => return Err(FixtureError::Setup { index, reason: format!("{o:?}") }),
            Err(e) => return Err(FixtureError::Setup { index, reason: e.to_string() }),
        }
    }
    Ok(model)
}

pub fn exhaustive_interleave(mm: Arc<Metamodel>, fixture: &ConflictFixture) -> Result<InterleaveReport, FixtureError> {
    let base = build_base(&mm, &fixture.setup)?;
    let mut hub = ModelHub::new(mm.clone(), Arc::new(HookRegistry::default()), HubConfig::default());
    hub.import_model(base.clone()).expect("fresh hub");
    let mut clients = [0, 1].map(|i| MirrorModel::new(mm.clone(), format!("user{i}"), MODEL, i as u64 + 1));
    for (i, client) in clients.iter_mut().enumerate() {
        let init = hub.connect(i as u64, &format!("user{i}"), MODEL).expect("model imported");
        client.on_server_message(&init.message);
    }
    let start = State { hub, clients, issued: [false; 2], links: BTreeMap::new() };

    let mut report =
        InterleaveReport { fixture: fixture.name.clone(), interleavings: 0, outcomes: BTreeMap::new(), failures: Vec::new() };
    let mut stack = vec![(start, Vec::<String>::new())];
    while let Some((state, path)) = stack.pop() {
        let choices = state.choices();
        if choices.is_empty() {
            report.interleavings += 1;
            check_terminal(&mm, fixture, &state, &path, &mut report);
            continue;
        }
        for choice in choices {
            let mut next = state.clone();
            next.apply(choice, fixture);
            let mut p = path.clone();
            p.push(match choice {
                Choice::Issue(c) => format!("issue{c}"),
                Choice::Deliver(l) => l.to_string(),
            });
            stack.push((next, p));
        }
    }
    Ok(report)
}

fn check_terminal(mm: &Metamodel, fixture: &ConflictFixture, state: &State, path: &[String], report: &mut InterleaveReport) {
    let svc = state.hub.service(MODEL).expect("imported");
    let central = svc.model();
    let mut labels = Vec::new();
    let mut fail = |why: String| report.failures.push(format!("{}: {why} [{}]", fixture.name, path.join(", ")));
    for stack in svc.committed() {
        if *stack == fixture.first {
            labels.push("first");
        } else if *stack == fixture.second {
            labels.push("second");
        } else {
            fail(format!("unexpected committed stack {stack:?}"));
        }
    }
    if !fixture.allowed.contains(&labels) {
        fail(format!("committed sequence {labels:?} is not admissible"));
    }
    for (i, c) in state.clients.iter().enumerate() {
        match c.replica() {
            Some(r) => {
                let d = central.diff(r);
                if !d.is_empty() {
                    fail(format!("client {i} diverged: {d:?}"));
                }
            }
            None => fail(format!("client {i} has no replica")),
        }
        if c.pending_len() > 0 {
            fail(format!("client {i} still has {} pending edits", c.pending_len()));
        }
    }
    match replay(svc.base(), mm, svc.committed()) {
        Ok(m) if m == *central => {}
        Ok(_) => fail("central model differs from the replay of its log".into()),
        Err(e) => fail(format!("replay failed: {e}")),
    }
    for e in central.integrity_errors() {
        fail(e);
    }
    *report.outcomes.entry(labels.join(",")).or_insert(0) += 1;
}
