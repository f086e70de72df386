//! File formats for encoded datasets and constraint universes.
//!
//! The CSV form has a header `case_id,k,label,<constraint>...`. The binary
//! cache is `PPMENC01`, a little-endian u64 length and the JSON metadata
//! (universe and row ids), then the matrix bytes and the label bytes.

use std::io::{Read, Write};

use ppm_core::encoder::{ConstraintUniverse, EncodedDataset, RowId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"PPMENC01";

#[derive(Debug, Error)]
pub enum DataFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("not an encoded-dataset cache")]
    BadMagic,
    #[error("corrupt cache: {0}")]
    Corrupt(&'static str),
}

pub fn write_dataset_csv<W: Write>(data: &EncodedDataset, out: W) -> Result<(), DataFileError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["case_id".to_string(), "k".to_string(), "label".to_string()];
    header.extend(data.column_index.constraints.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for i in 0..data.n_rows {
        let id = &data.row_index[i];
        let mut rec = vec![
            id.case_id.clone(),
            id.k.map(|k| k.to_string()).unwrap_or_default(),
            data.labels[i].to_string(),
        ];
        rec.extend(data.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    n_rows: usize,
    n_cols: usize,
    column_index: ConstraintUniverse,
    row_index: Vec<RowId>,
}

pub fn write_dataset_cache<W: Write>(data: &EncodedDataset, mut out: W) -> Result<(), DataFileError> {
    let meta = serde_json::to_vec(&CacheMeta {
        n_rows: data.n_rows,
        n_cols: data.n_cols,
        column_index: data.column_index.clone(),
        row_index: data.row_index.clone(),
    })?;
    out.write_all(MAGIC)?;
    out.write_all(&(meta.len() as u64).to_le_bytes())?;
    out.write_all(&meta)?;
    out.write_all(&data.matrix)?;
    out.write_all(&data.labels)?;
    out.flush()?;
    Ok(())
}

pub fn read_dataset_cache<R: Read>(mut input: R) -> Result<EncodedDataset, DataFileError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DataFileError::BadMagic);
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| DataFileError::Corrupt("length"))?;
    let mut meta = vec![0u8; len];
    input.read_exact(&mut meta)?;
    let meta: CacheMeta = serde_json::from_slice(&meta)?;
    if meta.column_index.len() != meta.n_cols || meta.row_index.len() != meta.n_rows {
        return Err(DataFileError::Corrupt("dimensions"));
    }
    let cells = meta.n_rows.checked_mul(meta.n_cols).ok_or(DataFileError::Corrupt("dimensions"))?;
    let mut matrix = vec![0u8; cells];
    input.read_exact(&mut matrix)?;
    let mut labels = vec![0u8; meta.n_rows];
    input.read_exact(&mut labels)?;
    if matrix.iter().any(|&v| v > 3) || labels.iter().any(|&y| y > 1) {
        return Err(DataFileError::Corrupt("cell values"));
    }
    Ok(EncodedDataset {
        n_rows: meta.n_rows,
        n_cols: meta.n_cols,
        matrix,
        labels,
        column_index: meta.column_index,
        row_index: meta.row_index,
    })
}

pub fn universe_to_json(u: &ConstraintUniverse) -> Result<String, DataFileError> {
    Ok(serde_json::to_string_pretty(u)?)
}

pub fn universe_from_json(s: &str) -> Result<ConstraintUniverse, DataFileError> {
    Ok(serde_json::from_str(s)?)
}
