//! Binary wire format for coordinator/agent messages.
//!
//! Little-endian layout:
//! `version:u8 | kind:u8 | round:u32 | agent_id:u32 | dim:u32 | storage:u8 |
//! mean:f64×dim | precision:f64×(dim(dim+1)/2 dense, dim diagonal)`.
//! Dense precisions are packed as the lower triangle, row by row.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::error::FusionError;
use crate::gaussian::{GaussianBelief, Precision};

pub const WIRE_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    PriorBroadcast,
    PosteriorUpload,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentMessage {
    pub kind: MessageKind,
    pub round: u32,
    pub agent_id: u32,
    pub belief: GaussianBelief,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported wire version {found} (expected {expected})")]
    VersionMismatch { expected: u8, found: u8 },
    #[error("message carries an invalid belief: {0}")]
    InvalidBelief(#[from] FusionError),
}

impl AgentMessage {
    pub fn new(kind: MessageKind, round: u32, agent_id: u32, belief: GaussianBelief) -> Result<Self, WireError> {
        if round == 0 {
            return Err(WireError::Malformed("rounds are numbered from 1".into()));
        }
        Ok(Self {
            kind,
            round,
            agent_id,
            belief,
        })
    }
}

pub fn serialize_message(msg: &AgentMessage) -> Vec<u8> {
    let d = msg.belief.dim();
    let mut out = Vec::with_capacity(15 + 8 * (d + d * (d + 1) / 2));
    out.push(WIRE_VERSION);
    out.push(match msg.kind {
        MessageKind::PriorBroadcast => 0,
        MessageKind::PosteriorUpload => 1,
    });
    out.extend_from_slice(&msg.round.to_le_bytes());
    out.extend_from_slice(&msg.agent_id.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    match msg.belief.precision() {
        Precision::Dense(m) => {
            out.push(0);
            out.extend(msg.belief.mean().iter().flat_map(|v| v.to_le_bytes()));
            for i in 0..d {
                for j in 0..=i {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
        Precision::Diagonal(p) => {
            out.push(1);
            out.extend(msg.belief.mean().iter().flat_map(|v| v.to_le_bytes()));
            out.extend(p.iter().flat_map(|v| v.to_le_bytes()));
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WireError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| WireError::Malformed(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, WireError> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| WireError::Malformed(format!("{what} length overflows")))?;
        Ok(self
            .take(bytes, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn deserialize_message(bytes: &[u8]) -> Result<AgentMessage, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let version = r.u8("version")?;
    if version != WIRE_VERSION {
        return Err(WireError::VersionMismatch {
            expected: WIRE_VERSION,
            found: version,
        });
    }
    let kind = match r.u8("kind")? {
        0 => MessageKind::PriorBroadcast,
        1 => MessageKind::PosteriorUpload,
        k => return Err(WireError::Malformed(format!("unknown message kind {k}"))),
    };
    let round = r.u32("round")?;
    let agent_id = r.u32("agent id")?;
    let d = r.u32("dimension")? as usize;
    let storage = r.u8("storage kind")?;
    let mean = DVector::from_vec(r.f64s(d, "mean")?);
    let precision = match storage {
        0 => {
            let packed = r.f64s(d * (d + 1) / 2, "precision")?;
            let mut m = DMatrix::zeros(d, d);
            let mut k = 0;
            for i in 0..d {
                for j in 0..=i {
                    m[(i, j)] = packed[k];
                    m[(j, i)] = packed[k];
                    k += 1;
                }
            }
            Precision::Dense(m)
        }
        1 => Precision::Diagonal(DVector::from_vec(r.f64s(d, "precision")?)),
        s => return Err(WireError::Malformed(format!("unknown storage kind {s}"))),
    };
    if r.pos != bytes.len() {
        return Err(WireError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let belief = GaussianBelief::new(mean, precision)?;
    AgentMessage::new(kind, round, agent_id, belief)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn dense_msg() -> AgentMessage {
        let b = GaussianBelief::dense(dvector![0.1, -2.5], dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
        AgentMessage::new(MessageKind::PosteriorUpload, 3, 7, b).unwrap()
    }

    #[test]
    fn layout_and_round_trip() {
        let msg = dense_msg();
        let bytes = serialize_message(&msg);
        assert_eq!(bytes.len(), 15 + 8 * (2 + 3));
        assert_eq!(&bytes[..2], &[1, 1]);
        assert_eq!(&bytes[2..6], &3u32.to_le_bytes());
        assert_eq!(bytes[14], 0);
        assert_eq!(deserialize_message(&bytes).unwrap(), msg);

        let diag = GaussianBelief::diagonal(dvector![1.0, 2.0, 3.0], dvector![0.5, 1.5, 2.5]).unwrap();
        let msg = AgentMessage::new(MessageKind::PriorBroadcast, 1, 0, diag).unwrap();
        let bytes = serialize_message(&msg);
        assert_eq!(bytes.len(), 15 + 8 * 6);
        assert_eq!(deserialize_message(&bytes).unwrap(), msg);
    }

    #[test]
    fn rejects_bad_buffers() {
        let bytes = serialize_message(&dense_msg());
        assert!(matches!(
            deserialize_message(&bytes[..bytes.len() - 1]),
            Err(WireError::Malformed(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(deserialize_message(&extra), Err(WireError::Malformed(_))));
        let mut wrong = bytes.clone();
        wrong[0] = 9;
        assert_eq!(
            deserialize_message(&wrong),
            Err(WireError::VersionMismatch { expected: 1, found: 9 })
        );
        let mut round0 = bytes;
        round0[2..6].copy_from_slice(&0u32.to_le_bytes());
        assert!(deserialize_message(&round0).is_err());
        assert!(matches!(deserialize_message(&[]), Err(WireError::Malformed(_))));
    }
}
