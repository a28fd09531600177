use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gradcore::Tensor;

/// Temporally adjacent pairs: row `i` of `prev` precedes row `i` of `next`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub prev: Tensor,
    pub next: Tensor,
}

pub const PAIR_MAGIC: &[u8; 4] = b"TSPB";
pub const PAIR_VERSION: u32 = 1;

impl PairBatch {
    pub fn new(prev: Tensor, next: Tensor) -> Result<Self> {
        if prev.shape() != next.shape() || prev.shape().len() != 2 {
            return Err(Error::shape(format!(
                "pair slices differ: {:?} vs {:?}",
                prev.shape(),
                next.shape()
            )));
        }
        if !prev.is_finite() || !next.is_finite() {
            return Err(Error::invalid("pair batch contains non-finite entries"));
        }
        Ok(Self { prev, next })
    }

    pub fn len(&self) -> usize {
        self.prev.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.prev.cols()
    }

    pub fn select(&self, idx: &[usize]) -> PairBatch {
        PairBatch {
            prev: self.prev.select_rows(idx),
            next: self.next.select_rows(idx),
        }
    }

    /// Same pairs with time reversed.
    pub fn reversed(&self) -> PairBatch {
        PairBatch {
            prev: self.next.clone(),
            next: self.prev.clone(),
        }
    }

    /// Column-wise `next - prev`.
    pub fn deltas(&self) -> Tensor {
        let data = self
            .next
            .data()
            .iter()
            .zip(self.prev.data())
            .map(|(n, p)| n - p)
            .collect();
        Tensor::matrix(self.len(), self.dim(), data).unwrap()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w =
            csv::Writer::from_writer(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let d = self.dim();
        let header: Vec<String> = (0..d)
            .map(|i| format!("prev_{i}"))
            .chain((0..d).map(|i| format!("next_{i}")))
            .collect();
        w.write_record(&header)?;
        for r in 0..self.len() {
            let rec: Vec<String> = self
                .prev
                .row(r)
                .iter()
                .chain(self.next.row(r))
                .map(|v| format!("{v:e}"))
                .collect();
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr =
            csv::Reader::from_reader(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
        let header = rdr.headers()?.clone();
        if header.len() % 2 != 0 || header.is_empty() {
            return Err(Error::Format(format!(
                "pair CSV needs prev_i/next_i column pairs, got {} columns",
                header.len()
            )));
        }
        let d = header.len() / 2;
        for i in 0..d {
            if header[i] != format!("prev_{i}") || header[d + i] != format!("next_{i}") {
                return Err(Error::Format(format!(
                    "unexpected pair CSV header {header:?}"
                )));
            }
        }
        let (mut prev, mut next) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Format(format!("row {}: bad number `{field}`", line + 2))
                })?;
                if j < d {
                    prev.push(v);
                } else {
                    next.push(v);
                }
            }
        }
        let n = prev.len() / d;
        PairBatch::new(Tensor::matrix(n, d, prev)?, Tensor::matrix(n, d, next)?)
    }

    /// Binary layout: magic `TSPB`, version u32, rows u64, cols u64, then
    /// `prev` and `next` as row-major little-endian f64.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        w.write_all(PAIR_MAGIC).map_err(io)?;
        w.write_all(&PAIR_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.len() as u64).to_le_bytes())
            .map_err(io)?;
        w.write_all(&(self.dim() as u64).to_le_bytes())
            .map_err(io)?;
        for v in self.prev.data().iter().chain(self.next.data()) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..4] != PAIR_MAGIC {
            return Err(Error::Format("missing TSPB header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != PAIR_VERSION {
            return Err(Error::Format(format!("unsupported TSPB version {version}")));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let n = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(16))
            .ok_or_else(|| Error::Format("TSPB dimensions overflow".into()))?;
        if bytes.len() != 24 + n {
            return Err(Error::Format(format!(
                "TSPB payload is {} bytes, expected {n}",
                bytes.len() - 24
            )));
        }
        let vals: Vec<f64> = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let half = rows * cols;
        PairBatch::new(
            Tensor::matrix(rows, cols, vals[..half].to_vec())?,
            Tensor::matrix(rows, cols, vals[half..].to_vec())?,
        )
    }
}
