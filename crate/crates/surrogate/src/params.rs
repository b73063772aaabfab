//! Named parameter tensors and their binary checkpoint format.
//!
//! A checkpoint is little-endian: the 8-byte magic `GRAINNET`, a `u32`
//! version, a `u32`-length-prefixed UTF-8 config echo, a `u32` block count,
//! then per block a `u32`-prefixed name, a `u32` rank, `u32` dims and the
//! `f64` values.

use std::io::{Read, Write};

use crate::tensor::Tensor;
use crate::SurrogateError;

const MAGIC: &[u8; 8] = b"GRAINNET";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn write(&self, config_echo: &str, out: &mut impl Write) -> Result<(), SurrogateError> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        write_str(out, config_echo)?;
        out.write_all(&(self.len() as u32).to_le_bytes())?;
        for (name, t) in self.names.iter().zip(&self.tensors) {
            write_str(out, name)?;
            out.write_all(&(t.dims().len() as u32).to_le_bytes())?;
            for d in t.dims() {
                out.write_all(&(*d as u32).to_le_bytes())?;
            }
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint, returning the config echo alongside the store.
    pub fn read(inp: &mut impl Read) -> Result<(String, ParamStore), SurrogateError> {
        let mut magic = [0u8; 8];
        inp.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SurrogateError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(inp)?;
        if version != VERSION {
            return Err(SurrogateError::Checkpoint(format!("unsupported version {version}")));
        }
        let echo = read_str(inp)?;
        let n = read_u32(inp)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..n {
            let name = read_str(inp)?;
            let rank = read_u32(inp)? as usize;
            if rank > 8 {
                return Err(SurrogateError::Checkpoint(format!("rank {rank} for '{name}'")));
            }
            let dims = (0..rank)
                .map(|_| read_u32(inp).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let len: usize = dims.iter().product();
            let mut buf = vec![0u8; len * 8];
            inp.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.push(name, Tensor::new(&dims, data));
        }
        Ok((echo, store))
    }

    /// Checks that `other` has the same names and shapes, slot for slot.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.dims() == b.dims())
    }
}

fn write_str(out: &mut impl Write, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

fn read_u32(inp: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    inp.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(inp: &mut impl Read) -> Result<String, SurrogateError> {
    let n = read_u32(inp)? as usize;
    if n > 1 << 20 {
        return Err(SurrogateError::Checkpoint(format!("string of {n} bytes")));
    }
    let mut b = vec![0u8; n];
    inp.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| SurrogateError::Checkpoint("name is not UTF-8".into()))
}
