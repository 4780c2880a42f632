//! The distributed dynamic-programming protocol run by every agent.

pub mod agent;
pub mod codec;

pub use agent::{AgentState, Estimate, Ingest, NeighborBuffer};
pub use codec::{decode_message, encode_message, message_len, ProtocolMessage, HEADER_LEN};
