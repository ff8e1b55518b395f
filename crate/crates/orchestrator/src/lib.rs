//! Mission orchestration: the engine loop, its event log, replay and the
//! operator HTTP API.

pub mod engine;
pub mod events;
pub mod leaves;
pub mod replay;
pub mod server;
