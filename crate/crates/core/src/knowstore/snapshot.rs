//! Binary snapshot of a [`MarkovModel`].
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "SEER"
//! version    u8       SNAPSHOT_VERSION
//! max_order  u32
//! total      u64      order-1 count sum
//! per order k = 1..=max_order:
//!   states   u64
//!   per state (ascending):
//!     k × string      (u32 length + UTF-8 bytes)
//!     succ   u32
//!     per successor (ascending bssid): string, count u64
//! crc32      u32      IEEE CRC-32 of every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{MarkovModel, StoreError};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SEER";
pub const SNAPSHOT_VERSION: u8 = 1;

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode_snapshot(model: &MarkovModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.push(SNAPSHOT_VERSION);
    buf.extend_from_slice(&(model.max_order() as u32).to_le_bytes());
    buf.extend_from_slice(&model.total_records().to_le_bytes());
    for table in model.tables() {
        buf.extend_from_slice(&(table.len() as u64).to_le_bytes());
        for (state, succ) in table {
            for s in state {
                put_str(&mut buf, s);
            }
            buf.extend_from_slice(&(succ.len() as u32).to_le_bytes());
            for (to, count) in succ {
                put_str(&mut buf, to);
                buf.extend_from_slice(&count.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> StoreError {
    StoreError::CorruptSnapshot(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, StoreError> {
        let len = self.u32()? as usize;
        let at = self.pos;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| corrupt(format!("invalid UTF-8 at byte {at}")))
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<MarkovModel, StoreError> {
    if bytes.len() < SNAPSHOT_MAGIC.len() + 1 + 4 + 8 + 4 {
        return Err(corrupt("file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != SNAPSHOT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.take(1)?[0];
    if version != SNAPSHOT_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let max_order = r.u32()? as usize;
    let total = r.u64()?;
    let mut model = MarkovModel::new(max_order).map_err(|_| corrupt("zero order"))?;
    for order in 1..=max_order {
        let states = r.u64()?;
        let mut previous: Option<Vec<String>> = None;
        for _ in 0..states {
            let state = (0..order).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
            if previous.as_ref().is_some_and(|p| *p >= state) {
                return Err(corrupt("states out of order"));
            }
            let succ = r.u32()?;
            if succ == 0 {
                return Err(corrupt("state without successors"));
            }
            for _ in 0..succ {
                let to = r.string()?;
                let count = r.u64()?;
                if count == 0 || model.count(&state, &to) != 0 {
                    return Err(corrupt("zero or duplicate count"));
                }
                model.add(order, state.clone(), to, count);
            }
            previous = Some(state);
        }
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    if model.total_records() != total {
        return Err(corrupt("record total does not match order-1 counts"));
    }
    Ok(model)
}

/// Writes the snapshot next to `path` and renames it into place so readers
/// never see a partial file.
pub fn persist(model: &MarkovModel, path: &Path) -> Result<(), StoreError> {
    let bytes = encode_snapshot(model);
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn restore(path: &Path) -> Result<MarkovModel, StoreError> {
    decode_snapshot(&fs::read(path)?)
}
