//! Wire format for the estimates agents exchange with their neighbours.
//!
//! ```text
//! offset  size  field
//! 0       4     sender id          u32 little-endian
//! 4       4     iteration          u32 little-endian
//! 8       8     utility J          f64 little-endian (IEEE-754)
//! 16      m     state x            bit k at byte k/8, bit k%8; m = ceil(n/8)
//! ```
//!
//! Padding bits past coordinate `n - 1` must be zero.

use crate::error::CodecError;
use crate::model::StateVector;

pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone)]
pub struct ProtocolMessage {
    pub sender_id: u32,
    pub iteration: u32,
    pub utility: f64,
    pub state: StateVector,
}

/// Bit-for-bit equality, including the float payload.
impl PartialEq for ProtocolMessage {
    fn eq(&self, other: &Self) -> bool {
        self.sender_id == other.sender_id
            && self.iteration == other.iteration
            && self.utility.to_bits() == other.utility.to_bits()
            && self.state == other.state
    }
}

impl Eq for ProtocolMessage {}

/// Encoded size of a message carrying `n_total` coordinates.
pub const fn message_len(n_total: usize) -> usize {
    HEADER_LEN + n_total.div_ceil(8)
}

pub fn encode_message(msg: &ProtocolMessage) -> Vec<u8> {
    let n = msg.state.len();
    let mut out = Vec::with_capacity(message_len(n));
    out.extend_from_slice(&msg.sender_id.to_le_bytes());
    out.extend_from_slice(&msg.iteration.to_le_bytes());
    out.extend_from_slice(&msg.utility.to_le_bytes());
    out.extend_from_slice(&msg.state.to_le_bytes());
    out
}

pub fn decode_message(bytes: &[u8], n_total: usize) -> Result<ProtocolMessage, CodecError> {
    let expected = message_len(n_total);
    if bytes.len() != expected {
        return Err(CodecError::Length {
            expected,
            got: bytes.len(),
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let sender_id = word(0);
    let iteration = word(4);
    let utility = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let state =
        StateVector::from_le_bytes(n_total, payload).ok_or(CodecError::Padding { n_total })?;
    Ok(ProtocolMessage {
        sender_id,
        iteration,
        utility,
        state,
    })
}
