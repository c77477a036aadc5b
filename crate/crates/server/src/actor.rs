//! One task per open model. The task owns the [`ModelService`], so edits to a
//! model are serialized without locks and different models run in parallel.

use std::collections::BTreeMap;

use graphdsl_core::ids::MessageId;
use graphdsl_core::protocol::encode;
use graphdsl_core::service::{Audience, ModelService, Reply, SessionId};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

pub type Outbox = UnboundedSender<String>;

#[derive(Debug)]
pub enum ModelRequest {
    /// Sends the init frame on `outbox`, then subscribes it.
    Connect { session: SessionId, user: String, outbox: Outbox },
    Text { session: SessionId, text: String },
    Binary { session: SessionId, bytes: Vec<u8> },
    Disconnect { session: SessionId },
}

struct Subscriber {
    user: String,
    outbox: Outbox,
}

pub fn spawn(service: ModelService) -> UnboundedSender<ModelRequest> {
    let (tx, rx) = unbounded_channel();
    tokio::spawn(run(service, rx));
    tx
}

async fn run(mut service: ModelService, mut rx: UnboundedReceiver<ModelRequest>) {
    let mut subs: BTreeMap<SessionId, Subscriber> = BTreeMap::new();
    while let Some(req) = rx.recv().await {
        match req {
            ModelRequest::Connect { session, user, outbox } => {
                let init = service.init_message(MessageId(0), &user);
                if outbox.send(encode(&init)).is_ok() {
                    tracing::debug!(model = %service.id(), session, %user, "connected");
                    subs.insert(session, Subscriber { user, outbox });
                }
            }
            ModelRequest::Text { session, text } => {
                let Some(user) = subs.get(&session).map(|s| s.user.clone()) else { continue };
                let replies = service.handle_text(&user, &text);
                route(&mut subs, session, replies);
            }
            ModelRequest::Binary { session, bytes } => {
                let Some(user) = subs.get(&session).map(|s| s.user.clone()) else { continue };
                let replies = service.handle_bytes(&user, &bytes);
                route(&mut subs, session, replies);
            }
            ModelRequest::Disconnect { session } => {
                subs.remove(&session);
            }
        }
    }
}

fn route(subs: &mut BTreeMap<SessionId, Subscriber>, sender: SessionId, replies: Vec<Reply>) {
    for reply in replies {
        let frame = encode(&reply.message);
        match reply.to {
            Audience::Sender => {
                if let Some(s) = subs.get(&sender) {
                    if s.outbox.send(frame).is_err() {
                        subs.remove(&sender);
                    }
                }
            }
            // A closed outbox means the socket is gone; drop it quietly.
            Audience::All => subs.retain(|_, s| s.outbox.send(frame.clone()).is_ok()),
        }
    }
}
