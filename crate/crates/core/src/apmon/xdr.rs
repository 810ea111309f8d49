//! Minimal XDR primitives: big-endian 4-byte aligned scalars and
//! length-prefixed, zero-padded strings.

use thiserror::Error;

pub const MAX_STRING_LEN: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("string of {0} bytes exceeds the {MAX_STRING_LEN}-byte limit")]
pub struct StringTooLong(pub usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("decode error at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

impl DecodeError {
    pub(crate) fn new(offset: usize, reason: impl Into<String>) -> Self {
        Self {
            offset,
            reason: reason.into(),
        }
    }
}

fn padding(len: usize) -> usize {
    (4 - len % 4) % 4
}

/// Encoded size of a string: length word, bytes, padding.
pub fn string_size(len: usize) -> usize {
    4 + len + padding(len)
}

pub fn xdr_encode_int32(v: i32) -> [u8; 4] {
    v.to_be_bytes()
}

pub fn xdr_encode_real32(v: f32) -> [u8; 4] {
    v.to_be_bytes()
}

pub fn xdr_encode_real64(v: f64) -> [u8; 8] {
    v.to_be_bytes()
}

pub fn xdr_encode_string(s: &str) -> Result<Vec<u8>, StringTooLong> {
    let mut out = Vec::with_capacity(string_size(s.len()));
    put_string(&mut out, s)?;
    Ok(out)
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str) -> Result<(), StringTooLong> {
    let b = s.as_bytes();
    if b.len() > MAX_STRING_LEN {
        return Err(StringTooLong(b.len()));
    }
    out.extend_from_slice(&(b.len() as u32).to_be_bytes());
    out.extend_from_slice(b);
    out.extend(std::iter::repeat_n(0u8, padding(b.len())));
    Ok(())
}

/// Cursor over an XDR buffer that reports the offset of every failure.
pub struct XdrReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> XdrReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N], DecodeError> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| DecodeError::new(self.pos, format!("truncated {what}")))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice of length N"))
    }

    pub fn int32(&mut self) -> Result<i32, DecodeError> {
        self.take::<4>("int32").map(i32::from_be_bytes)
    }

    pub fn real32(&mut self) -> Result<f32, DecodeError> {
        self.take::<4>("real32").map(f32::from_be_bytes)
    }

    pub fn real64(&mut self) -> Result<f64, DecodeError> {
        self.take::<8>("real64").map(f64::from_be_bytes)
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let start = self.pos;
        let len = u32::from_be_bytes(self.take::<4>("string length")?) as usize;
        if len > MAX_STRING_LEN {
            return Err(DecodeError::new(
                start,
                format!("string length {len} too large"),
            ));
        }
        let body = self.pos;
        let end = body + len + padding(len);
        if end > self.buf.len() {
            return Err(DecodeError::new(body, "truncated string"));
        }
        if self.buf[body + len..end].iter().any(|&b| b != 0) {
            return Err(DecodeError::new(body + len, "non-zero string padding"));
        }
        let s = std::str::from_utf8(&self.buf[body..body + len])
            .map_err(|e| DecodeError::new(body + e.valid_up_to(), "invalid utf-8"))?;
        self.pos = end;
        Ok(s.to_owned())
    }
}
