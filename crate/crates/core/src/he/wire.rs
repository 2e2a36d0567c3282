//! Ciphertext envelope shared by the transport and the file formats:
//! `"HSC1" | tag (1) | level (2, BE) | scale (8, IEEE-754 BE) | payload length (4, BE) | payload`.
//! Plain ciphertexts carry level `0xFFFF`, standing for unbounded depth.

use super::plain::PlainCiphertext;
use super::{BackendTag, Body, Ciphertext, HeContext, HeError, UNBOUNDED_DEPTH};

pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"HSC1";
const HEADER_LEN: usize = 4 + 1 + 2 + 8 + 4;
const PLAIN_LEVEL: u16 = u16::MAX;

impl HeContext {
    pub fn ciphertext_to_bytes(&self, c: &Ciphertext) -> Vec<u8> {
        let payload = match &c.body {
            Body::Plain(p) => p.payload(),
            Body::Ckks(ct) => self.ckks_ctx().ciphertext_payload(ct),
        };
        let level = match c.tag() {
            BackendTag::Plain => PLAIN_LEVEL,
            BackendTag::Ckks => c.level as u16,
        };
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(CIPHERTEXT_MAGIC);
        out.push(c.tag().code());
        out.extend_from_slice(&level.to_be_bytes());
        out.extend_from_slice(&c.scale.to_be_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Parses one envelope from the front of `bytes`, returning the
    /// ciphertext and the number of bytes consumed.
    pub fn ciphertext_from_prefix(&self, bytes: &[u8]) -> Result<(Ciphertext, usize), HeError> {
        if bytes.len() < HEADER_LEN {
            return Err(HeError::Malformed("truncated ciphertext header".into()));
        }
        if &bytes[..4] != CIPHERTEXT_MAGIC {
            return Err(HeError::Malformed("bad ciphertext magic".into()));
        }
        let tag = BackendTag::from_code(bytes[4])
            .ok_or_else(|| HeError::Malformed(format!("unknown backend tag {}", bytes[4])))?;
        if tag != self.tag() {
            return Err(HeError::TagMismatch { left: self.tag(), right: tag });
        }
        let level = u16::from_be_bytes([bytes[5], bytes[6]]);
        let scale = f64::from_be_bytes(bytes[7..15].try_into().unwrap());
        let len = u32::from_be_bytes(bytes[15..19].try_into().unwrap()) as usize;
        let end = HEADER_LEN
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| HeError::Malformed("truncated ciphertext payload".into()))?;
        let payload = &bytes[HEADER_LEN..end];
        let ct = match tag {
            BackendTag::Plain => {
                if level != PLAIN_LEVEL {
                    return Err(HeError::Malformed(format!("plain ciphertext with level {level}")));
                }
                let p = PlainCiphertext::from_payload(payload)
                    .ok_or_else(|| HeError::Malformed("bad plain payload".into()))?;
                Ciphertext { level: UNBOUNDED_DEPTH, scale: 1.0, body: Body::Plain(p) }
            }
            BackendTag::Ckks => {
                let ct = self.ckks_ctx().ciphertext_from_payload(payload, level as usize, scale)?;
                Ciphertext::from_ckks(ct)
            }
        };
        Ok((ct, end))
    }

    pub fn ciphertext_from_bytes(&self, bytes: &[u8]) -> Result<Ciphertext, HeError> {
        let (ct, used) = self.ciphertext_from_prefix(bytes)?;
        if used != bytes.len() {
            return Err(HeError::Malformed(format!("{} trailing bytes after ciphertext", bytes.len() - used)));
        }
        Ok(ct)
    }
}
