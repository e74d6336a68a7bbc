//! On-disk formats.
//!
//! `PRNK` embedding matrix: magic `PRNK`, `u16` version, `u32` dim,
//! `u32` count, then `count × dim` little-endian `f32`, row-major. The row
//! index is the join key used by `samples.jsonl`.
//!
//! `PRNH` checkpoint: magic `PRNH`, `u16` version, `u32` number of layer
//! dims, that many `u32` dims, `f64` sigma floor, then every parameter as a
//! little-endian `f32` in declaration order.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{Category, EmbeddingVector, Sample};
use crate::error::{Error, Result};
use crate::reward::{param_count, RewardHead};

pub const MATRIX_MAGIC: &[u8; 4] = b"PRNK";
pub const MATRIX_VERSION: u16 = 1;
const MATRIX_HEADER_LEN: u64 = 4 + 2 + 4 + 4;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PRNH";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Dense row-major embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be positive".into()));
        }
        Ok(EmbeddingMatrix {
            dim,
            data: Vec::new(),
        })
    }

    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of dim {dim}",
                data.len()
            )));
        }
        Ok(EmbeddingMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> Option<&[f32]> {
        (i < self.count()).then(|| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Appends a row and returns its index.
    pub fn push(&mut self, row: &[f32]) -> Result<usize> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(self.count() - 1)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write_matrix_header(&mut w, self.dim, self.count()).map_err(io)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let (dim, count) = parse_matrix_header(path, &bytes)?;
        let expected = MATRIX_HEADER_LEN as usize + dim * count * 4;
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                format!(
                    "header declares {count} rows of dim {dim} ({expected} bytes) but file holds {} bytes",
                    bytes.len()
                ),
            ));
        }
        let data = bytes[MATRIX_HEADER_LEN as usize..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(EmbeddingMatrix { dim, data })
    }
}

fn write_matrix_header(w: &mut impl Write, dim: usize, count: usize) -> std::io::Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&MATRIX_VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(count as u32).to_le_bytes())
}

fn parse_matrix_header(path: &Path, bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < MATRIX_HEADER_LEN as usize {
        return Err(Error::format(path, "truncated PRNK header"));
    }
    if &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::format(path, "bad magic, expected PRNK"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MATRIX_VERSION {
        return Err(Error::format(path, format!("unsupported PRNK version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::format(path, "PRNK dim is zero"));
    }
    Ok((dim, count))
}

/// Appends rows to a `PRNK` file in place (creating it when absent) and
/// returns the index of the first appended row.
pub fn append_matrix_rows(path: impl AsRef<Path>, dim: usize, rows: &[f32]) -> Result<usize> {
    let path = path.as_ref();
    if dim == 0 || rows.len() % dim != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} values do not form rows of dim {dim}",
            rows.len()
        )));
    }
    let io = |e| Error::io(path, e);
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(io)?;
    let len = file.metadata().map_err(io)?.len();
    let start = if len == 0 {
        write_matrix_header(&mut file, dim, 0).map_err(io)?;
        0
    } else {
        let mut header = [0u8; MATRIX_HEADER_LEN as usize];
        file.read_exact(&mut header).map_err(io)?;
        let (d, count) = parse_matrix_header(path, &header)?;
        if d != dim {
            return Err(Error::DimensionMismatch { expected: d, got: dim });
        }
        if len != MATRIX_HEADER_LEN + (d * count * 4) as u64 {
            return Err(Error::format(path, "row count disagrees with file length"));
        }
        count
    };
    let added = rows.len() / dim;
    file.seek(SeekFrom::End(0)).map_err(io)?;
    let mut buf = Vec::with_capacity(rows.len() * 4);
    for v in rows {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf).map_err(io)?;
    file.seek(SeekFrom::Start(10)).map_err(io)?;
    file.write_all(&((start + added) as u32).to_le_bytes())
        .map_err(io)?;
    file.flush().map_err(io)?;
    Ok(start)
}

/// Reads rows `first..first + count` of a `PRNK` file without loading the
/// rest; returns the dim and the row-major values.
pub fn read_matrix_rows(path: impl AsRef<Path>, first: usize, count: usize) -> Result<(usize, Vec<f32>)> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut file = File::open(path).map_err(io)?;
    let mut header = [0u8; MATRIX_HEADER_LEN as usize];
    file.read_exact(&mut header).map_err(io)?;
    let (dim, total) = parse_matrix_header(path, &header)?;
    if first + count > total {
        return Err(Error::format(
            path,
            format!("rows {first}..{} requested but file holds {total}", first + count),
        ));
    }
    file.seek(SeekFrom::Start(MATRIX_HEADER_LEN + (first * dim * 4) as u64))
        .map_err(io)?;
    let mut bytes = vec![0u8; count * dim * 4];
    file.read_exact(&mut bytes).map_err(io)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((dim, data))
}

/// One line of `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub prompt_id: String,
    #[serde(default)]
    pub prompt_text: String,
    pub category: Category,
    pub source: String,
    pub embedding_row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aesthetic_score: Option<f64>,
}

impl SampleRow {
    pub fn into_sample(self, embedding: EmbeddingVector) -> Sample {
        Sample {
            sample_id: self.sample_id,
            prompt_id: self.prompt_id,
            prompt_text: self.prompt_text,
            category: self.category,
            source: self.source,
            embedding,
            aesthetic_score: self.aesthetic_score,
        }
    }

    pub fn from_sample(sample: &Sample, embedding_row: usize) -> Self {
        SampleRow {
            sample_id: sample.sample_id.clone(),
            prompt_id: sample.prompt_id.clone(),
            prompt_text: sample.prompt_text.clone(),
            category: sample.category,
            source: sample.source.clone(),
            embedding_row,
            aesthetic_score: sample.aesthetic_score,
        }
    }
}

/// Parses a JSON-lines file, keeping 1-based line numbers. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<(usize, T)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: impl AsRef<Path>,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::format(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Serializes a head; parameters are narrowed to `f32`.
pub fn encode_checkpoint(head: &RewardHead) -> Vec<u8> {
    let dims = head.dims();
    let mut buf = Vec::with_capacity(18 + 4 * dims.len() + 4 * head.num_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&head.sigma_floor().to_le_bytes());
    for &p in head.params() {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    buf
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<RewardHead> {
    let fail = |m: &str| Error::format(path, m);
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(fail("truncated PRNH checkpoint"));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(fail("bad magic, expected PRNH"));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported PRNH version {version}")));
    }
    let n_dims = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if n_dims > 64 {
        return Err(fail("implausible layer count"));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
    }
    let sigma_floor = f64::from_le_bytes(take(8)?.try_into().unwrap());
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(fail("invalid layer dims"));
    }
    let n = param_count(&dims);
    let raw = take(4 * n)?;
    if !cur.is_empty() {
        return Err(fail("trailing bytes after parameters"));
    }
    let params = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    RewardHead::from_params(&dims, sigma_floor, params)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_checkpoint(path: impl AsRef<Path>, head: &RewardHead) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(head)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<RewardHead> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn matrix_header_layout_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.prnk");
        EmbeddingMatrix::from_rows(2, vec![1.0, -2.5, 0.0, 3.0])
            .unwrap()
            .write(&path)
            .unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"PRNK");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[2, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 14 + 16);
    }

    #[test]
    fn matrix_rejects_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.prnk");
        EmbeddingMatrix::from_rows(2, vec![1.0, 2.0]).unwrap().write(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&path, &bytes).unwrap();
        let err = EmbeddingMatrix::read(&path).unwrap_err();
        assert!(err.to_string().contains("header declares"));
        std::fs::write(&path, b"NOPE\x01\x00").unwrap();
        assert!(EmbeddingMatrix::read(&path).is_err());
    }

    #[test]
    fn append_grows_file_in_place() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shared.prnk");
        assert_eq!(append_matrix_rows(&path, 3, &[1.0, 2.0, 3.0]).unwrap(), 0);
        assert_eq!(append_matrix_rows(&path, 3, &[4.0, 5.0, 6.0, 7.0, 8.0, 9.0]).unwrap(), 1);
        let m = EmbeddingMatrix::read(&path).unwrap();
        assert_eq!(m.count(), 3);
        assert_eq!(m.row(2).unwrap(), &[7.0, 8.0, 9.0]);
        assert!(append_matrix_rows(&path, 2, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_narrows_to_f32() {
        let mut rng = Rng::new(4);
        let head = RewardHead::init(&[5, 3, 2], 1e-4, &mut rng).unwrap();
        let bytes = encode_checkpoint(&head);
        assert_eq!(&bytes[..4], b"PRNH");
        let back = decode_checkpoint(Path::new("mem"), &bytes).unwrap();
        assert_eq!(back.dims(), head.dims());
        assert_eq!(back.sigma_floor(), head.sigma_floor());
        for (a, b) in back.params().iter().zip(head.params()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(encode_checkpoint(&back), bytes);
        assert!(decode_checkpoint(Path::new("mem"), &bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn matrix_round_trip(dim in 1usize..6, rows in proptest::collection::vec(-1e6f32..1e6, 0..40)) {
            let n = rows.len() / dim * dim;
            let m = EmbeddingMatrix::from_rows(dim, rows[..n].to_vec()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.prnk");
            m.write(&path).unwrap();
            prop_assert_eq!(EmbeddingMatrix::read(&path).unwrap(), m);
        }
    }
}
