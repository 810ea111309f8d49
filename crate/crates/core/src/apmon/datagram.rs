use std::fmt;

use thiserror::Error;

use super::xdr::{self, put_string, DecodeError, StringTooLong, XdrReader};

/// Upper bound on an encoded datagram.
pub const MAX_DATAGRAM_BYTES: usize = 8192;
pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_CLUSTER: &str = "LISA";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error(transparent)]
    StringTooLong(#[from] StringTooLong),
    #[error("datagram of {0} bytes exceeds {MAX_DATAGRAM_BYTES}")]
    DatagramTooLarge(usize),
    #[error("datagram has no parameters")]
    Empty,
}

/// On-wire value type codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum XdrValueType {
    String = 0,
    Int32 = 2,
    Real32 = 4,
    Real64 = 5,
}

impl XdrValueType {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_code(code: i32) -> Option<Self> {
        Some(match code {
            0 => Self::String,
            2 => Self::Int32,
            4 => Self::Real32,
            5 => Self::Real64,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::String => "STRING",
            Self::Int32 => "INT32",
            Self::Real32 => "REAL32",
            Self::Real64 => "REAL64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum XdrValue {
    String(String),
    Int32(i32),
    Real32(f32),
    Real64(f64),
}

impl XdrValue {
    pub fn value_type(&self) -> XdrValueType {
        match self {
            XdrValue::String(_) => XdrValueType::String,
            XdrValue::Int32(_) => XdrValueType::Int32,
            XdrValue::Real32(_) => XdrValueType::Real32,
            XdrValue::Real64(_) => XdrValueType::Real64,
        }
    }

    fn encoded_len(&self) -> usize {
        match self {
            XdrValue::String(s) => xdr::string_size(s.len()),
            XdrValue::Int32(_) | XdrValue::Real32(_) => 4,
            XdrValue::Real64(_) => 8,
        }
    }
}

impl fmt::Display for XdrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XdrValue::String(s) => f.write_str(s),
            XdrValue::Int32(v) => write!(f, "{v}"),
            XdrValue::Real32(v) => write!(f, "{v:?}"),
            XdrValue::Real64(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: XdrValue,
}

impl Param {
    pub fn new(name: impl Into<String>, value: XdrValue) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }

    /// Bytes this parameter occupies inside a datagram.
    pub fn encoded_len(&self) -> usize {
        xdr::string_size(self.name.len()) + 4 + self.value.encoded_len()
    }
}

/// One reporting datagram:
/// `string(header) string(cluster) string(node) int32(n) n × (string(name) int32(type) value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Datagram {
    pub header: String,
    pub cluster: String,
    pub node: String,
    pub params: Vec<Param>,
}

/// Header literal carrying the protocol version and the endpoint password.
pub fn header_for(password: &str) -> String {
    format!("v:{PROTOCOL_VERSION}p:{password}")
}

impl Datagram {
    /// Size of everything but the parameters.
    pub fn envelope_len(header: &str, cluster: &str, node: &str) -> usize {
        xdr::string_size(header.len())
            + xdr::string_size(cluster.len())
            + xdr::string_size(node.len())
            + 4
    }

    pub fn encoded_len(&self) -> usize {
        Self::envelope_len(&self.header, &self.cluster, &self.node)
            + self.params.iter().map(Param::encoded_len).sum::<usize>()
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        if self.params.is_empty() {
            return Err(EncodeError::Empty);
        }
        let len = self.encoded_len();
        if len > MAX_DATAGRAM_BYTES {
            return Err(EncodeError::DatagramTooLarge(len));
        }
        let mut out = Vec::with_capacity(len);
        put_string(&mut out, &self.header)?;
        put_string(&mut out, &self.cluster)?;
        put_string(&mut out, &self.node)?;
        out.extend_from_slice(&xdr::xdr_encode_int32(self.params.len() as i32));
        for p in &self.params {
            put_string(&mut out, &p.name)?;
            out.extend_from_slice(&xdr::xdr_encode_int32(p.value.value_type().code()));
            match &p.value {
                XdrValue::String(s) => put_string(&mut out, s)?,
                XdrValue::Int32(v) => out.extend_from_slice(&xdr::xdr_encode_int32(*v)),
                XdrValue::Real32(v) => out.extend_from_slice(&xdr::xdr_encode_real32(*v)),
                XdrValue::Real64(v) => out.extend_from_slice(&xdr::xdr_encode_real64(*v)),
            }
        }
        debug_assert_eq!(out.len(), len);
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        if buf.len() > MAX_DATAGRAM_BYTES {
            return Err(DecodeError::new(MAX_DATAGRAM_BYTES, "datagram too large"));
        }
        let mut r = XdrReader::new(buf);
        let header = r.string()?;
        let cluster = r.string()?;
        let node = r.string()?;
        let count_at = r.position();
        let count = r.int32()?;
        // every parameter takes at least 12 bytes
        if count < 1 || count as usize > r.remaining() / 12 {
            return Err(DecodeError::new(
                count_at,
                format!("bad parameter count {count}"),
            ));
        }
        let mut params = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = r.string()?;
            let type_at = r.position();
            let code = r.int32()?;
            let value = match XdrValueType::from_code(code) {
                Some(XdrValueType::String) => XdrValue::String(r.string()?),
                Some(XdrValueType::Int32) => XdrValue::Int32(r.int32()?),
                Some(XdrValueType::Real32) => XdrValue::Real32(r.real32()?),
                Some(XdrValueType::Real64) => XdrValue::Real64(r.real64()?),
                None => {
                    return Err(DecodeError::new(
                        type_at,
                        format!("unknown value type {code}"),
                    ));
                }
            };
            params.push(Param { name, value });
        }
        if r.remaining() != 0 {
            return Err(DecodeError::new(r.position(), "trailing bytes"));
        }
        Ok(Self {
            header,
            cluster,
            node,
            params,
        })
    }

    /// `<cluster> <node> <name> <type> <value>` lines, one per parameter.
    pub fn param_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.params.iter().map(move |p| {
            format!(
                "{} {} {} {} {}",
                self.cluster,
                self.node,
                p.name,
                p.value.value_type().name(),
                p.value
            )
        })
    }
}
