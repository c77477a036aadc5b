//! Scenario files: who does what, when, and how the network delays it.

use graphdsl_core::ids::ElementId;
use graphdsl_core::protocol::Command;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub clients: usize,
    #[serde(default = "default_model_id")]
    pub model_id: ElementId,
    #[serde(default)]
    pub delivery_schedule: DeliverySchedule,
    pub script: Vec<Step>,
    /// Deliveries allowed after the script ends before giving up on quiescence.
    #[serde(default = "default_quiescence_budget")]
    pub quiescence_budget: u64,
}

fn default_model_id() -> ElementId {
    ElementId(1)
}

fn default_quiescence_budget() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum DeliverySchedule {
    /// Every frame takes `latency` ticks.
    Fifo { latency: u64 },
    /// Each frame draws its own latency from `min..=max`. Links stay FIFO,
    /// so reordering happens only between different links.
    RandomDelay { min: u64, max: u64 },
}

impl Default for DeliverySchedule {
    fn default() -> Self {
        DeliverySchedule::Fifo { latency: 1 }
    }
}

impl DeliverySchedule {
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            DeliverySchedule::Fifo { latency } => latency,
            DeliverySchedule::RandomDelay { min, max } => rng.random_range(min..=max),
        }
    }
}

/// One scripted action. `delay` is measured from the previous step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Step {
    pub client_index: usize,
    #[serde(default)]
    pub delay: u64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum Action {
    /// A locally valid edit drawn against the client's replica.
    RandomEdit,
    ExplicitCommand { command: Command },
    Disconnect,
    Reconnect,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario needs at least one client")]
    NoClients,
    #[error("step {step} names client {client}, but there are only {clients}")]
    UnknownClient { step: usize, client: usize, clients: usize },
    #[error("randomDelay bounds are inverted ({min} > {max})")]
    InvertedBounds { min: u64, max: u64 },
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios always serialize")
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        if self.clients == 0 {
            return Err(ScenarioError::NoClients);
        }
        if let DeliverySchedule::RandomDelay { min, max } = self.delivery_schedule {
            if min > max {
                return Err(ScenarioError::InvertedBounds { min, max });
            }
        }
        for (step, s) in self.script.iter().enumerate() {
            if s.client_index >= self.clients {
                return Err(ScenarioError::UnknownClient { step, client: s.client_index, clients: self.clients });
            }
        }
        Ok(())
    }

    /// `clients` users each making `edits_per_client` random edits, with
    /// steps interleaved at random and `max_gap` ticks at most between them.
    pub fn random_edits(
        seed: u64,
        clients: usize,
        edits_per_client: usize,
        max_gap: u64,
        delivery_schedule: DeliverySchedule,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_a210);
        let mut left = vec![edits_per_client; clients];
        let mut script = Vec::with_capacity(clients * edits_per_client);
        while left.iter().any(|&n| n > 0) {
            let live: Vec<usize> = (0..clients).filter(|&c| left[c] > 0).collect();
            let c = live[rng.random_range(0..live.len())];
            left[c] -= 1;
            script.push(Step { client_index: c, delay: rng.random_range(0..=max_gap), action: Action::RandomEdit });
        }
        Scenario {
            seed,
            clients,
            model_id: default_model_id(),
            delivery_schedule,
            script,
            quiescence_budget: default_quiescence_budget(),
        }
    }
}
