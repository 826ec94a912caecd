//! Line-delimited text exchange format for externally produced logits.
//!
//! Line 1 is a header object; every following non-empty line is one record:
//!
//! ```text
//! {"vocab_size": 32000, "k": 5, "provenance": {...}}
//! {"prompt_ids": [1, 9], "response_ids": [4, 2], "topk": [[[4, 0.81], [7, 0.05]], [[2, 0.97]]]}
//! ```
//!
//! `topk` holds one array per response position, each entry an `[id, prob]`
//! pair. Entries may arrive in any order and are canonicalized on import;
//! everything else is validated strictly, and errors name the line and
//! field. The JSON Schema lives at `docs/external_logits.schema.json`.

use crate::data::dataset::{LogitsDataset, LogitsRecord, Provenance};
use crate::distrib::SparseTopK;
use crate::error::{Error, Result};
use crate::util::atomic_write;
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;

/// Import gate on each row's probability mass; rows above it are rejected
/// outright before the stricter per-type tolerance applies.
pub const IMPORT_SUM_TOL: f64 = 1e-6;

#[derive(Serialize, Deserialize)]
struct Header {
    vocab_size: usize,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    prompt_ids: Vec<u32>,
    response_ids: Vec<u32>,
    topk: Vec<Vec<(u32, f64)>>,
}

pub fn export_external_logits(ds: &LogitsDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header = Header {
        vocab_size: ds.vocab_size,
        k: ds.k,
        provenance: Some(ds.provenance.clone()),
    };
    out.push_str(&serde_json::to_string(&header).expect("serialize header"));
    out.push('\n');
    for rec in &ds.records {
        let row = Row {
            prompt_ids: rec.prompt.clone(),
            response_ids: rec.response.clone(),
            topk: rec
                .teacher
                .iter()
                .map(|s| s.entries().to_vec())
                .collect(),
        };
        out.push_str(&serde_json::to_string(&row).expect("serialize row"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

pub fn import_external_logits(path: &Path) -> Result<LogitsDataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines().enumerate();

    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::text_format(1, "header", "file is empty"))?;
    let header_line = header_line?;
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| Error::text_format(1, "header", e.to_string()))?;
    if header.vocab_size == 0 {
        return Err(Error::text_format(1, "vocab_size", "must be >= 1"));
    }
    if header.k == 0 {
        return Err(Error::text_format(1, "k", "must be >= 1"));
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::text_format(lineno, "record", e.to_string()))?;
        records.push(row_to_record(row, lineno, header.vocab_size, header.k)?);
    }

    let ds = LogitsDataset {
        vocab_size: header.vocab_size,
        k: header.k,
        records,
        provenance: header.provenance.unwrap_or(Provenance {
            teacher_id: "external".to_string(),
            seed: 0,
            k: header.k,
            tau: 1.0,
            source: "external-import".to_string(),
        }),
    };
    ds.validate()?;
    Ok(ds)
}

fn row_to_record(row: Row, lineno: usize, vocab_size: usize, k: usize) -> Result<LogitsRecord> {
    if row.prompt_ids.is_empty() {
        return Err(Error::text_format(lineno, "prompt_ids", "must be non-empty"));
    }
    if row.response_ids.is_empty() {
        return Err(Error::text_format(
            lineno,
            "response_ids",
            "must be non-empty",
        ));
    }
    for (field, ids) in [("prompt_ids", &row.prompt_ids), ("response_ids", &row.response_ids)] {
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::text_format(
                lineno,
                field,
                format!("token id {bad} out of range for vocab size {vocab_size}"),
            ));
        }
    }
    if row.topk.len() != row.response_ids.len() {
        return Err(Error::text_format(
            lineno,
            "topk",
            format!(
                "{} position arrays for {} response tokens",
                row.topk.len(),
                row.response_ids.len()
            ),
        ));
    }
    let mut teacher = Vec::with_capacity(row.topk.len());
    for (pos, mut entries) in row.topk.into_iter().enumerate() {
        if entries.len() > k {
            return Err(Error::text_format(
                lineno,
                "topk",
                format!("position {pos} has {} entries, k = {k}", entries.len()),
            ));
        }
        let mut ids: Vec<u32> = entries.iter().map(|e| e.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::text_format(
                lineno,
                "topk",
                format!("duplicate token ids at position {pos}"),
            ));
        }
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        if sum > 1.0 + IMPORT_SUM_TOL {
            return Err(Error::text_format(
                lineno,
                "topk",
                format!("position {pos} probabilities sum to {sum} > 1 + {IMPORT_SUM_TOL}"),
            ));
        }
        // External producers may emit entries in any order.
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let sparse = SparseTopK::new(entries, k, vocab_size)
            .map_err(|e| Error::text_format(lineno, "topk", format!("position {pos}: {e}")))?;
        teacher.push(sparse);
    }
    Ok(LogitsRecord {
        prompt: row.prompt_ids,
        response: row.response_ids,
        teacher,
    })
}
