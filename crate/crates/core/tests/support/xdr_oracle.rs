//! Independent XDR datagram reader used to check encoder output byte by byte.

use std::io::{Cursor, Read};

use byteorder::{BigEndian, ReadBytesExt};

#[derive(Debug, Clone, PartialEq)]
pub enum OracleValue {
    Str(String),
    I32(i32),
    F32(u32),
    F64(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleDatagram {
    pub header: String,
    pub cluster: String,
    pub node: String,
    pub params: Vec<(String, OracleValue)>,
}

fn string(c: &mut Cursor<&[u8]>) -> Result<String, String> {
    let len = c.read_u32::<BigEndian>().map_err(|e| e.to_string())? as usize;
    let padded = len.div_ceil(4) * 4;
    let rest = c.get_ref().len() - c.position() as usize;
    if padded > rest {
        return Err(format!("string of {len} bytes past end"));
    }
    let mut buf = vec![0u8; padded];
    c.read_exact(&mut buf).map_err(|e| e.to_string())?;
    if buf[len..].iter().any(|&b| b != 0) {
        return Err("non-zero padding".into());
    }
    buf.truncate(len);
    String::from_utf8(buf).map_err(|e| e.to_string())
}

pub fn read_datagram(bytes: &[u8]) -> Result<OracleDatagram, String> {
    if !bytes.len().is_multiple_of(4) {
        return Err("length not a multiple of 4".into());
    }
    let mut c = Cursor::new(bytes);
    let header = string(&mut c)?;
    let cluster = string(&mut c)?;
    let node = string(&mut c)?;
    let n = c.read_i32::<BigEndian>().map_err(|e| e.to_string())?;
    let mut params = Vec::new();
    for _ in 0..n {
        let name = string(&mut c)?;
        let code = c.read_i32::<BigEndian>().map_err(|e| e.to_string())?;
        let v = match code {
            0 => OracleValue::Str(string(&mut c)?),
            2 => OracleValue::I32(c.read_i32::<BigEndian>().map_err(|e| e.to_string())?),
            4 => OracleValue::F32(c.read_u32::<BigEndian>().map_err(|e| e.to_string())?),
            5 => OracleValue::F64(c.read_u64::<BigEndian>().map_err(|e| e.to_string())?),
            other => return Err(format!("type code {other}")),
        };
        params.push((name, v));
    }
    if c.position() as usize != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok(OracleDatagram {
        header,
        cluster,
        node,
        params,
    })
}
