//! Binary tensor container for network snapshots.
//!
//! Layout: 4-byte magic `EOI1`, then zero or more records until EOF. Each
//! record is `u32 name_len (LE) | name bytes (UTF-8) | u32 rank | rank * u32
//! dims | product(dims) * f32 (LE)`. Values are stored f32; in-memory math is
//! f64, so a save/load round trip quantizes to f32.

use crate::nnkit::{Linear, Mlp};
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"EOI1";

// Hard caps so corrupt or hostile headers cannot request absurd allocations.
const MAX_NAME_LEN: usize = 1024;
const MAX_RANK: usize = 8;
const MAX_ELEMS: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn from_matrix(name: &str, a: &Array2<f64>) -> Self {
        NamedTensor {
            name: name.to_string(),
            dims: vec![a.nrows(), a.ncols()],
            data: a.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_vector(name: &str, a: &Array1<f64>) -> Self {
        NamedTensor {
            name: name.to_string(),
            dims: vec![a.len()],
            data: a.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::Corrupt(format!(
                "tensor {} has rank {}, expected 2",
                self.name,
                self.dims.len()
            )));
        }
        let data: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        Array2::from_shape_vec((self.dims[0], self.dims[1]), data)
            .map_err(|e| Error::Corrupt(format!("tensor {}: {e}", self.name)))
    }

    pub fn to_vector(&self) -> Result<Array1<f64>> {
        if self.dims.len() != 1 {
            return Err(Error::Corrupt(format!(
                "tensor {} has rank {}, expected 1",
                self.name,
                self.dims.len()
            )));
        }
        Ok(Array1::from_iter(self.data.iter().map(|&v| v as f64)))
    }
}

/// Ordered collection of named tensors with unique names.
#[derive(Debug, Clone, Default)]
pub struct TensorDict {
    tensors: Vec<NamedTensor>,
}

impl TensorDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: NamedTensor) {
        self.tensors.push(t);
    }

    pub fn extend(&mut self, ts: Vec<NamedTensor>) {
        self.tensors.extend(ts);
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Corrupt(format!("missing tensor {name}")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedTensor> {
        self.tensors.iter()
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_tensors(w: &mut impl Write, tensors: &TensorDict) -> Result<()> {
    w.write_all(&MAGIC)?;
    for t in tensors.iter() {
        let elems: usize = t.dims.iter().product();
        assert_eq!(elems, t.data.len(), "tensor {} dims vs data", t.name);
        write_u32(w, t.name.len() as u32)?;
        w.write_all(t.name.as_bytes())?;
        write_u32(w, t.dims.len() as u32)?;
        for &d in &t.dims {
            write_u32(w, d as u32)?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a u32, distinguishing clean EOF (Ok(None)) from a torn read.
fn read_u32_or_eof(r: &mut impl Read) -> Result<Option<u32>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(Error::Corrupt("truncated u32".into()));
        }
        filled += n;
    }
    Ok(Some(u32::from_le_bytes(buf)))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    read_u32_or_eof(r)?.ok_or_else(|| Error::Corrupt("unexpected EOF".into()))
}

fn read_exact_vec(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<u8>> {
    // Read in bounded chunks so a huge claimed length on a short stream
    // fails before allocating everything.
    let mut out = Vec::new();
    let mut remaining = len;
    let mut chunk = [0u8; 8192];
    while remaining > 0 {
        let want = remaining.min(chunk.len());
        let n = r.read(&mut chunk[..want])?;
        if n == 0 {
            return Err(Error::Corrupt(format!("truncated {what}")));
        }
        out.extend_from_slice(&chunk[..n]);
        remaining -= n;
    }
    Ok(out)
}

pub fn read_tensors(r: &mut impl Read) -> Result<TensorDict> {
    let mut magic = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut magic[filled..])?;
        if n == 0 {
            return Err(Error::Corrupt("file shorter than magic".into()));
        }
        filled += n;
    }
    if magic != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let mut dict = TensorDict::new();
    while let Some(name_len) = read_u32_or_eof(r)? {
        let name_len = name_len as usize;
        if name_len == 0 || name_len > MAX_NAME_LEN {
            return Err(Error::Corrupt(format!("bad name length {name_len}")));
        }
        let name_bytes = read_exact_vec(r, name_len, "tensor name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?;
        let rank = read_u32(r)? as usize;
        if rank > MAX_RANK {
            return Err(Error::Corrupt(format!("tensor {name}: rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut elems: usize = 1;
        for _ in 0..rank {
            let d = read_u32(r)? as usize;
            elems = elems
                .checked_mul(d)
                .filter(|&e| e <= MAX_ELEMS)
                .ok_or_else(|| Error::Corrupt(format!("tensor {name}: size overflow")))?;
            dims.push(d);
        }
        let bytes = read_exact_vec(r, elems * 4, "tensor data")?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if dict.tensors.iter().any(|t| t.name == name) {
            return Err(Error::Corrupt(format!("duplicate tensor {name}")));
        }
        dict.push(NamedTensor { name, dims, data });
    }
    Ok(dict)
}

pub fn save_file(path: &Path, tensors: &TensorDict) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensors(&mut f, tensors)?;
    f.flush()?;
    Ok(())
}

pub fn load_file(path: &Path) -> Result<TensorDict> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tensors(&mut f)
}

impl Linear {
    pub fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        vec![
            NamedTensor::from_matrix(&format!("{prefix}.w"), &self.w),
            NamedTensor::from_vector(&format!("{prefix}.b"), &self.b),
        ]
    }

    pub fn from_tensors(dict: &TensorDict, prefix: &str, in_dim: usize, out_dim: usize) -> Result<Linear> {
        let w = dict.get(&format!("{prefix}.w"))?.to_matrix()?;
        let b = dict.get(&format!("{prefix}.b"))?.to_vector()?;
        if w.dim() != (in_dim, out_dim) || b.len() != out_dim {
            return Err(Error::Corrupt(format!(
                "{prefix}: expected ({in_dim}, {out_dim}), got {:?} / {}",
                w.dim(),
                b.len()
            )));
        }
        Ok(Linear { w, b })
    }
}

impl Mlp {
    pub fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = self.l1.to_tensors(&format!("{prefix}.l1"));
        out.extend(self.l2.to_tensors(&format!("{prefix}.l2")));
        out.extend(self.l3.to_tensors(&format!("{prefix}.l3")));
        out
    }

    pub fn from_tensors(
        dict: &TensorDict,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
    ) -> Result<Mlp> {
        Ok(Mlp {
            l1: Linear::from_tensors(dict, &format!("{prefix}.l1"), in_dim, hidden)?,
            l2: Linear::from_tensors(dict, &format!("{prefix}.l2"), hidden, hidden)?,
            l3: Linear::from_tensors(dict, &format!("{prefix}.l3"), hidden, out_dim)?,
        })
    }
}
