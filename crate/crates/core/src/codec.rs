//! Length-prefixed little-endian word arrays.
//!
//! Every serialized object is `count: u32 LE` followed by `count` words, each
//! a `u32 LE`.

use crate::error::{Error, Result};

pub fn encode_words(words: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * words.len());
    out.extend_from_slice(&(words.len() as u32).to_le_bytes());
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

/// Decodes one word array from the front of `bytes`, returning it and the
/// number of bytes consumed.
pub fn decode_words(bytes: &[u8]) -> Result<(Vec<u32>, usize)> {
    let count = read_u32(bytes, 0)? as usize;
    let end = 4 + count * 4;
    if bytes.len() < end {
        return Err(Error::Codec(format!("need {end} bytes, have {}", bytes.len())));
    }
    let words = bytes[4..end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((words, end))
}

pub(crate) fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Codec(format!("truncated u32 at offset {at}")))
}

/// Objects with a word-array wire form.
pub trait WordCodec: Sized {
    fn to_words(&self) -> Vec<u32>;
    fn from_words(words: &[u32]) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        encode_words(&self.to_words())
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (words, used) = decode_words(bytes)?;
        if used != bytes.len() {
            return Err(Error::Codec(format!("{} trailing bytes", bytes.len() - used)));
        }
        Self::from_words(&words)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_count_then_words() {
        let b = encode_words(&[1, 0xDEAD_BEEF]);
        assert_eq!(b, vec![2, 0, 0, 0, 1, 0, 0, 0, 0xEF, 0xBE, 0xAD, 0xDE]);
        let (w, used) = decode_words(&b).unwrap();
        assert_eq!(w, vec![1, 0xDEAD_BEEF]);
        assert_eq!(used, 12);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let b = encode_words(&[1, 2, 3]);
        assert!(decode_words(&b[..b.len() - 1]).is_err());
        assert!(decode_words(&[1, 0]).is_err());
    }
}
