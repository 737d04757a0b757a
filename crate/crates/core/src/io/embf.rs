//! EMBF binary embedding matrices.
//!
//! ```text
//! offset 0   8 bytes  magic "EMBF0001"
//! offset 8   u32 LE   n (rows)
//! offset 12  u32 LE   d (columns)
//! offset 16  n*d f32 LE, row-major
//! ```
//!
//! Row ids live in `<path>.ids.jsonl`, one JSON string per line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::jsonl;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EMBF0001";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum EmbfError {
    #[error("file is {len} bytes, shorter than the {HEADER_LEN}-byte header")]
    TruncatedHeader { len: usize },
    #[error("bad magic at byte offset {offset}: expected {expected:#04x}, found {found:#04x}")]
    BadMagic { offset: usize, expected: u8, found: u8 },
    #[error(
        "header (bytes 8..16) declares n={n}, d={d}: {expected} payload bytes expected from offset 16, found {found}"
    )]
    SizeMismatch { n: u32, d: u32, expected: u64, found: u64 },
    #[error("non-finite value {value} at row {row}, column {col} (byte offset {offset})")]
    NonFinite {
        row: usize,
        col: usize,
        offset: usize,
        value: f32,
    },
    #[error("id sidecar has {found} ids for {n} rows")]
    IdCount { n: usize, found: usize },
}

/// Row-major `n x d` matrix of f32 with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    ids: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::invalid(format!("{} values for a {n}x{d} matrix", data.len())));
        }
        if ids.len() != n {
            return Err(Error::invalid(format!("{} ids for {n} rows", ids.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                i / d.max(1),
                i % d.max(1)
            )));
        }
        Ok(EmbeddingMatrix { n, d, data, ids })
    }

    /// Builds from rows, with ids `"0"`, `"1"`, ...
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows have different lengths"));
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(rows.len(), d, rows.concat(), ids)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Values widened to f64, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

pub fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".ids.jsonl");
    PathBuf::from(s)
}

pub fn write_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let n = u32::try_from(m.n).map_err(|_| Error::invalid("row count exceeds u32"))?;
    let d = u32::try_from(m.d).map_err(|_| Error::invalid("dimension exceeds u32"))?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    write(MAGIC)?;
    write(&n.to_le_bytes())?;
    write(&d.to_le_bytes())?;
    for v in &m.data {
        write(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    jsonl::write_all(&ids_path(path), &m.ids)
}

/// Decodes an EMBF payload (without the id sidecar).
pub fn decode(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f32>), EmbfError> {
    if bytes.len() < HEADER_LEN {
        return Err(EmbfError::TruncatedHeader { len: bytes.len() });
    }
    for (offset, (&found, &expected)) in bytes[..8].iter().zip(MAGIC.iter()).enumerate() {
        if found != expected {
            return Err(EmbfError::BadMagic {
                offset,
                expected,
                found,
            });
        }
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let d = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    let expected = n as u64 * d as u64 * 4;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if expected != found {
        return Err(EmbfError::SizeMismatch { n, d, expected, found });
    }
    let (n, d) = (n as usize, d as usize);
    let mut data = Vec::with_capacity(n * d);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let value = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !value.is_finite() {
            return Err(EmbfError::NonFinite {
                row: i / d,
                col: i % d,
                offset: HEADER_LEN + 4 * i,
                value,
            });
        }
        data.push(value);
    }
    Ok((n, d, data))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let embf = |source| Error::Embf {
        path: path.to_path_buf(),
        source,
    };
    let (n, d, data) = decode(&bytes).map_err(embf)?;
    let ids: Vec<String> = jsonl::read_all(&ids_path(path))?;
    if ids.len() != n {
        return Err(embf(EmbfError::IdCount { n, found: ids.len() }));
    }
    Ok(EmbeddingMatrix { n, d, data, ids })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            2,
            3,
            vec![1.0, -2.5, 0.0, 3.25, 1e-30, -0.0],
            vec!["a".into(), "b\n\"q\"".into()],
        )
        .unwrap()
    }

    #[test]
    fn empty_matrix_is_sixteen_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.embf");
        let m = EmbeddingMatrix::new(0, 7, vec![], vec![]).unwrap();
        write_embeddings(&p, &m).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 16);
        assert_eq!(fs::read(ids_path(&p)).unwrap(), b"");
        assert_eq!(read_embeddings(&p).unwrap(), m);
    }

    #[test]
    fn two_by_three_length_and_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.embf");
        let m = sample();
        write_embeddings(&p, &m).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 16 + 24);
        let back = read_embeddings(&p).unwrap();
        let bits = |m: &EmbeddingMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
        assert_eq!(back.ids(), m.ids());
    }

    #[test]
    fn short_sidecar_is_id_count_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.embf");
        write_embeddings(&p, &sample()).unwrap();
        fs::write(ids_path(&p), "\"a\"\n").unwrap();
        match read_embeddings(&p).unwrap_err() {
            Error::Embf { source, .. } => assert_eq!(source, EmbfError::IdCount { n: 2, found: 1 }),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn distinct_errors() {
        let mut bytes = MAGIC.to_vec();
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(f32::NAN.to_le_bytes());
        assert!(matches!(
            decode(&bytes),
            Err(EmbfError::NonFinite {
                row: 0,
                col: 0,
                offset: 16,
                ..
            })
        ));

        bytes.truncate(18);
        assert!(matches!(decode(&bytes), Err(EmbfError::SizeMismatch { .. })));

        bytes[3] = b'X';
        assert!(matches!(decode(&bytes), Err(EmbfError::BadMagic { offset: 3, .. })));

        assert!(matches!(
            decode(&bytes[..5]),
            Err(EmbfError::TruncatedHeader { len: 5 })
        ));
    }

    #[test]
    fn constructor_rejects_nan() {
        assert!(EmbeddingMatrix::new(1, 1, vec![f32::INFINITY], vec!["x".into()]).is_err());
    }
}
