//! `SNUT` v1 topology snapshot, all integers little-endian:
//!
//! ```text
//! "SNUT" | version u16 | reserved u16 | width u32 | height u32
//! trained_epochs u32 | rng_seed u64 | params_len u32 | params (JSON)
//! 3 × table: n_pre u64 | n_post u64 | count u64 | count × (pre u32, post u32, weight f64)
//! ```
//!
//! Tables are stored in the order enc→proc, proc→dec, lateral.

use std::path::Path;

use super::{NetworkParams, NetworkTopology};
use crate::error::{FormatError, Result};
use crate::lif::SynapseTable;
use crate::raster::Dims;

pub const MAGIC: [u8; 4] = *b"SNUT";
pub const VERSION: u16 = 1;

fn put_table(out: &mut Vec<u8>, t: &SynapseTable) {
    out.extend((t.n_pre() as u64).to_le_bytes());
    out.extend((t.n_post() as u64).to_le_bytes());
    out.extend((t.len() as u64).to_le_bytes());
    for (pre, post, w) in t.entries() {
        out.extend((pre as u32).to_le_bytes());
        out.extend((post as u32).to_le_bytes());
        out.extend(w.to_bits().to_le_bytes());
    }
}

pub fn encode_topology(t: &NetworkTopology) -> Result<Vec<u8>> {
    let params = serde_json::to_vec(&t.params).map_err(|e| FormatError::Malformed(e.to_string()))?;
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    out.extend(0u16.to_le_bytes());
    out.extend((t.dims.width as u32).to_le_bytes());
    out.extend((t.dims.height as u32).to_le_bytes());
    out.extend(t.trained_epochs.to_le_bytes());
    out.extend(t.rng_seed.to_le_bytes());
    out.extend((params.len() as u32).to_le_bytes());
    out.extend(params);
    for table in [&t.enc_proc, &t.proc_dec, &t.lateral] {
        put_table(&mut out, table);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(FormatError::Truncated {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn table(&mut self) -> Result<SynapseTable> {
        let n_pre = self.u64()?;
        let n_post = self.u64()?;
        let count = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if count.checked_mul(16).is_none_or(|b| b > remaining) {
            return Err(FormatError::Truncated {
                expected: self.pos.saturating_add(count.saturating_mul(16) as usize),
                found: self.bytes.len(),
            }
            .into());
        }
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let pre = self.u32()? as usize;
            let post = self.u32()? as usize;
            let w = f64::from_bits(self.u64()?);
            entries.push((pre, post, w));
        }
        SynapseTable::from_entries(n_pre as usize, n_post as usize, entries)
            .map_err(|e| FormatError::Malformed(e.to_string()).into())
    }
}

pub fn decode_topology(bytes: &[u8]) -> Result<NetworkTopology> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.array()?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic { expected: MAGIC, found: magic }.into());
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(FormatError::VersionMismatch { expected: VERSION, found: version }.into());
    }
    r.take(2)?;
    let (width, height) = (r.u32()? as usize, r.u32()? as usize);
    let trained_epochs = r.u32()?;
    let rng_seed = r.u64()?;
    let plen = r.u32()? as usize;
    let params: NetworkParams =
        serde_json::from_slice(r.take(plen)?).map_err(|e| FormatError::Malformed(format!("params: {e}")))?;
    let dims = Dims::new(width, height).map_err(|e| FormatError::Malformed(e.to_string()))?;
    let enc_proc = r.table()?;
    let proc_dec = r.table()?;
    let lateral = r.table()?;
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.pos).into());
    }
    let t = NetworkTopology { dims, params, enc_proc, proc_dec, lateral, trained_epochs, rng_seed };
    let n = dims.len();
    let ok = t.enc_proc.n_pre() == t.encoding_size()
        && t.enc_proc.n_post() == n
        && t.proc_dec.n_pre() == n
        && t.proc_dec.n_post() == t.decision_size()
        && t.lateral.n_pre() == n
        && t.lateral.n_post() == n;
    if !ok {
        return Err(FormatError::Malformed("table sizes do not match the layer sizes".into()).into());
    }
    t.params.validate().map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(t)
}

pub fn write_topology(t: &NetworkTopology, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_topology(t)?)?;
    Ok(())
}

pub fn read_topology(path: impl AsRef<Path>) -> Result<NetworkTopology> {
    decode_topology(&std::fs::read(path)?)
}
