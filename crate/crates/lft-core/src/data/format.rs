//! The `LFTD` binary dataset container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"LFTD"
//! u32     version (= 1)
//! u32     vocab_size
//! u32     k
//! u64     record_count
//! u32     metadata_len, then metadata bytes (UTF-8 JSON provenance)
//! per record:
//!   u32   prompt_len,   then prompt ids   (u32 each)
//!   u32   response_len, then response ids (u32 each)
//!   per response position:
//!     u8  entry_count, then entries as (u32 token_id, f32 prob)
//! u64     FNV-1a 64 checksum over all preceding bytes
//! ```
//!
//! Reading validates structure (magic, version, bounds, checksum) and
//! reports the byte offset of the first problem; semantic invariants are
//! the job of `verify_dataset`, so that a damaged record can be named
//! rather than aborting the whole file.

use crate::data::dataset::{LogitsDataset, LogitsRecord, Provenance};
use crate::distrib::SparseTopK;
use crate::error::{Error, Result};
use crate::util::{atomic_write, fnv1a64};
use std::path::Path;

const MAGIC: &[u8; 4] = b"LFTD";
const VERSION: u32 = 1;

pub fn write_dataset_to_vec(ds: &LogitsDataset) -> Result<Vec<u8>> {
    if ds.k > u8::MAX as usize {
        return Err(Error::invalid_input(format!(
            "k = {} does not fit the on-disk entry count (max 255)",
            ds.k
        )));
    }
    let meta = serde_json::to_string(&ds.provenance)
        .map_err(|e| Error::invalid_input(format!("provenance serialization: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.vocab_size as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.k as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.records.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta.as_bytes());
    for rec in &ds.records {
        if rec.teacher.len() != rec.response.len() {
            return Err(Error::invalid_input(
                "teacher list length must equal response length",
            ));
        }
        buf.extend_from_slice(&(rec.prompt.len() as u32).to_le_bytes());
        for &t in &rec.prompt {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        buf.extend_from_slice(&(rec.response.len() as u32).to_le_bytes());
        for &t in &rec.response {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        for sparse in &rec.teacher {
            if sparse.entries().len() > u8::MAX as usize {
                return Err(Error::invalid_input("more than 255 entries in a position"));
            }
            buf.push(sparse.entries().len() as u8);
            for &(id, p) in sparse.entries() {
                buf.extend_from_slice(&id.to_le_bytes());
                buf.extend_from_slice(&(p as f32).to_le_bytes());
            }
        }
    }
    let sum = fnv1a64(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    Ok(buf)
}

pub fn write_dataset(ds: &LogitsDataset, path: &Path) -> Result<()> {
    let bytes = write_dataset_to_vec(ds)?;
    atomic_write(path, &bytes)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_dataset_from_slice(bytes: &[u8]) -> Result<LogitsDataset> {
    if bytes.len() < 12 {
        return Err(Error::format(bytes.len() as u64, "file too short"));
    }
    // Checksum first: everything else is meaningless on a damaged file.
    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let actual = fnv1a64(&bytes[..body_end]);

    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, "bad magic, not an LFTD file"));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    if stored != actual {
        return Err(Error::format(
            body_end as u64,
            format!("checksum mismatch: stored {stored:#018x}, computed {actual:#018x}"),
        ));
    }
    let vocab_size = c.u32("vocab_size")? as usize;
    let k = c.u32("k")? as usize;
    let record_count = c.u64("record_count")? as usize;
    let meta_len = c.u32("metadata_len")? as usize;
    let meta_off = c.pos;
    let meta_bytes = c.take(meta_len, "metadata")?;
    let meta_str = std::str::from_utf8(meta_bytes)
        .map_err(|e| Error::format(meta_off as u64, format!("metadata is not UTF-8: {e}")))?;
    let provenance: Provenance = serde_json::from_str(meta_str)
        .map_err(|e| Error::format(meta_off as u64, format!("metadata is not valid JSON: {e}")))?;

    let mut records = Vec::with_capacity(record_count.min(1 << 20));
    for _ in 0..record_count {
        let prompt_len = c.u32("prompt_len")? as usize;
        let mut prompt = Vec::with_capacity(prompt_len);
        for _ in 0..prompt_len {
            let off = c.pos;
            let t = c.u32("prompt id")?;
            if t as usize >= vocab_size {
                return Err(Error::format(
                    off as u64,
                    format!("prompt id {t} out of range for vocab size {vocab_size}"),
                ));
            }
            prompt.push(t);
        }
        let response_len = c.u32("response_len")? as usize;
        let mut response = Vec::with_capacity(response_len);
        for _ in 0..response_len {
            let off = c.pos;
            let t = c.u32("response id")?;
            if t as usize >= vocab_size {
                return Err(Error::format(
                    off as u64,
                    format!("response id {t} out of range for vocab size {vocab_size}"),
                ));
            }
            response.push(t);
        }
        let mut teacher = Vec::with_capacity(response_len);
        for _ in 0..response_len {
            let count = c.u8("entry_count")? as usize;
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                let off = c.pos;
                let id = c.u32("entry token id")?;
                if id as usize >= vocab_size {
                    return Err(Error::format(
                        off as u64,
                        format!("entry id {id} out of range for vocab size {vocab_size}"),
                    ));
                }
                let p = c.f32("entry probability")?;
                if !p.is_finite() {
                    return Err(Error::format(off as u64, "non-finite probability"));
                }
                entries.push((id, p as f64));
            }
            teacher.push(SparseTopK::from_parts(entries, k, vocab_size));
        }
        records.push(LogitsRecord {
            prompt,
            response,
            teacher,
        });
    }
    if c.pos != body_end {
        return Err(Error::format(
            c.pos as u64,
            format!("{} trailing bytes before checksum", body_end - c.pos),
        ));
    }
    Ok(LogitsDataset {
        vocab_size,
        k,
        records,
        provenance,
    })
}

pub fn read_dataset(path: &Path) -> Result<LogitsDataset> {
    let bytes = std::fs::read(path)?;
    read_dataset_from_slice(&bytes)
}
