//! Checkpoint framing: `MFT1` magic, u16 version, u8 trainer kind, u32
//! payload length, payload, CRC-32 of everything before it. All integers are
//! little-endian.

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MFT1";
pub const VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 1 + 4;

pub const KIND_SURROGATE: u8 = 1;
pub const KIND_TOY_SGD: u8 = 2;

pub fn encode(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + payload.len() + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Validates framing and returns the payload.
pub fn decode(kind: u8, bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < HEADER + 4 {
        return Err(Error::Checkpoint(format!("blob too short ({} bytes)", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    if bytes[6] != kind {
        return Err(Error::Checkpoint(format!(
            "blob is for trainer kind {}, expected {kind}",
            bytes[6]
        )));
    }
    let len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    if bytes.len() != HEADER + len + 4 {
        return Err(Error::Checkpoint(format!(
            "length mismatch: header says {len} payload bytes, blob has {}",
            bytes.len().saturating_sub(HEADER + 4)
        )));
    }
    let body = &bytes[..HEADER + len];
    let stored = u32::from_le_bytes(bytes[HEADER + len..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    Ok(&bytes[HEADER..HEADER + len])
}

#[derive(Default)]
pub struct Writer(Vec<u8>);

impl Writer {
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated payload".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > self.buf.len() / 8 {
            return Err(Error::Checkpoint("truncated payload".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!("{} trailing bytes", self.buf.len())))
        }
    }
}
