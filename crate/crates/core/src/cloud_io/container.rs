use std::fs;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

const MAGIC_LEN: usize = 8;

/// The four container kinds, keyed by their 8-byte ASCII magic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magic {
    /// `REDALPRB`: N×C class probabilities.
    Probabilities,
    /// `REDALFTR`: N×F feature rows.
    Features,
    /// `REDALREG`: N region ids.
    Regions,
    /// `REDALLBL`: N u8 class ids.
    Labels,
}

impl Magic {
    pub fn bytes(self) -> &'static [u8; MAGIC_LEN] {
        match self {
            Magic::Probabilities => b"REDALPRB",
            Magic::Features => b"REDALFTR",
            Magic::Regions => b"REDALREG",
            Magic::Labels => b"REDALLBL",
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        [
            Magic::Probabilities,
            Magic::Features,
            Magic::Regions,
            Magic::Labels,
        ]
        .into_iter()
        .find(|m| m.bytes().as_slice() == bytes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Probabilities(Matrix),
    Features(Matrix),
    Regions(Vec<u32>),
    Labels(Vec<u8>),
}

impl Payload {
    pub fn magic(&self) -> Magic {
        match self {
            Payload::Probabilities(_) => Magic::Probabilities,
            Payload::Features(_) => Magic::Features,
            Payload::Regions(_) => Magic::Regions,
            Payload::Labels(_) => Magic::Labels,
        }
    }

    pub fn into_matrix(self) -> Option<Matrix> {
        match self {
            Payload::Probabilities(m) | Payload::Features(m) => Some(m),
            _ => None,
        }
    }
}

fn dim(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value)
        .map_err(|_| Error::validation(format!("{what} {value} does not fit in u32")))
}

pub fn encode(payload: &Payload) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(payload.magic().bytes());
    match payload {
        Payload::Probabilities(m) | Payload::Features(m) => {
            if let Some(i) = m.data().iter().position(|v| v.is_nan()) {
                return Err(Error::validation(format!(
                    "NaN at flat index {i} in matrix payload"
                )));
            }
            out.reserve(8 + 4 * m.data().len());
            out.extend_from_slice(&dim(m.rows(), "row count")?.to_le_bytes());
            out.extend_from_slice(&dim(m.cols(), "column count")?.to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Payload::Regions(ids) => {
            out.reserve(4 + 4 * ids.len());
            out.extend_from_slice(&dim(ids.len(), "point count")?.to_le_bytes());
            for v in ids {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Payload::Labels(labels) => {
            out.extend_from_slice(&dim(labels.len(), "point count")?.to_le_bytes());
            out.extend_from_slice(labels);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format(format!("header truncated before {what}")))?;
        self.pos = end;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn expect_remaining(&self, expected: usize, what: &str) -> Result<&[u8]> {
        let rest = &self.bytes[self.pos..];
        if rest.len() != expected {
            return Err(Error::format(format!(
                "{what}: header implies {expected} payload bytes, found {}",
                rest.len()
            )));
        }
        Ok(rest)
    }
}

fn decode_matrix(reader: &mut Reader<'_>, what: &str) -> Result<Matrix> {
    let rows = reader.u32("row count")? as usize;
    let cols = reader.u32("column count")? as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(format!("{what}: dimensions {rows}x{cols} overflow")))?;
    let payload = reader.expect_remaining(expected, what)?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    if let Some(i) = data.iter().position(|v| v.is_nan()) {
        return Err(Error::format(format!("{what}: NaN at flat index {i}")));
    }
    Matrix::new(rows, cols, data)
}

/// Decodes any container, validating magic and dimensions before the payload.
pub fn decode(bytes: &[u8]) -> Result<Payload> {
    if bytes.len() < MAGIC_LEN {
        return Err(Error::format(format!(
            "file of {} bytes is too short for a magic",
            bytes.len()
        )));
    }
    let magic = Magic::from_bytes(&bytes[..MAGIC_LEN]).ok_or_else(|| {
        Error::format(format!(
            "unknown magic {:?}",
            String::from_utf8_lossy(&bytes[..MAGIC_LEN])
        ))
    })?;
    let mut reader = Reader {
        bytes,
        pos: MAGIC_LEN,
    };
    Ok(match magic {
        Magic::Probabilities => Payload::Probabilities(decode_matrix(&mut reader, "REDALPRB")?),
        Magic::Features => Payload::Features(decode_matrix(&mut reader, "REDALFTR")?),
        Magic::Regions => {
            let n = reader.u32("point count")? as usize;
            let payload = reader.expect_remaining(n * 4, "REDALREG")?;
            Payload::Regions(
                payload
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                    .collect(),
            )
        }
        Magic::Labels => {
            let n = reader.u32("point count")? as usize;
            Payload::Labels(reader.expect_remaining(n, "REDALLBL")?.to_vec())
        }
    })
}

/// Decodes a container and insists on a specific magic.
pub fn decode_as(bytes: &[u8], expected: Magic) -> Result<Payload> {
    if bytes.len() >= MAGIC_LEN {
        if let Some(found) = Magic::from_bytes(&bytes[..MAGIC_LEN]) {
            if found != expected {
                return Err(Error::format(format!(
                    "magic mismatch: expected {}, found {}",
                    String::from_utf8_lossy(expected.bytes()),
                    String::from_utf8_lossy(found.bytes())
                )));
            }
        }
    }
    decode(bytes)
}

pub fn save_matrix(path: impl AsRef<Path>, payload: &Payload) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(payload)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Payload> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub(crate) fn load_expect(path: &Path, expected: Magic) -> Result<Payload> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_as(&bytes, expected)
}
