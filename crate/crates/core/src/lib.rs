//! Metamodel-driven collaborative graph modeling: metamodel language, runtime
//! graph models, the wire protocol, the authoritative server core, the client
//! mirror and the model interpreter.

pub mod client;
pub mod engine;
pub mod guard;
pub mod ids;
pub mod interpreter;
pub mod meta;
pub mod model;
pub mod protocol;
pub mod random;
pub mod schema;
pub mod service;
