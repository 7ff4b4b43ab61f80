//! Named parameter storage with a flat binary checkpoint format.
//!
//! `params.bin` layout, little-endian: magic `CTSP`, u32 count, then per
//! tensor: u32 name length, UTF-8 name, u32 rows, u32 cols, rows·cols f64.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    trainable: Vec<bool>,
}

const MAGIC: &[u8; 4] = b"CTSP";

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        self.trainable.push(trainable);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|id| self.trainable[id.0])
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.trainable[id.0] = trainable;
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn count_trainable(&self) -> usize {
        self.trainable_ids().map(|id| self.values[id.0].len()).sum()
    }

    /// Sum of squares over the selected parameters.
    pub fn sum_squares(&self, ids: impl Iterator<Item = ParamId>) -> f64 {
        ids.map(|id| self.values[id.0].iter().map(|v| v * v).sum::<f64>()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for (name, v) in self.names.iter().zip(&self.values) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(v.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(v.ncols() as u32).to_le_bytes());
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Parses a parameter file into a fresh store; every tensor is marked
    /// trainable.
    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("not a parameter file".into()));
        }
        let read_u32 = |b: &mut &[u8]| -> Result<u32> {
            let mut buf = [0u8; 4];
            b.read_exact(&mut buf)?;
            Ok(u32::from_le_bytes(buf))
        };
        let count = read_u32(&mut bytes)? as usize;
        let mut out = ParamStore::new();
        for _ in 0..count {
            let n = read_u32(&mut bytes)? as usize;
            let mut name = vec![0u8; n];
            bytes.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| NnError::Format(e.to_string()))?;
            if out.find(&name).is_some() {
                return Err(NnError::Format(format!("duplicate tensor {name}")));
            }
            let (r, c) = (read_u32(&mut bytes)? as usize, read_u32(&mut bytes)? as usize);
            let mut data = Vec::with_capacity(r * c);
            for _ in 0..r * c {
                let mut buf = [0u8; 8];
                bytes.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            out.add(name, Array2::from_shape_vec((r, c), data).expect("sized"), true);
        }
        if !bytes.is_empty() {
            return Err(NnError::Format("trailing bytes".into()));
        }
        Ok(out)
    }

    /// Overwrites values by name; every stored tensor must exist here with
    /// the same shape, and every tensor here must be present.
    pub fn load_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let other = Self::from_bytes(bytes)?;
        if other.len() != self.len() {
            return Err(NnError::Format(format!("{} tensors stored, {} expected", other.len(), self.len())));
        }
        for (name, value) in other.names.iter().zip(other.values) {
            let id = self
                .find(name)
                .ok_or_else(|| NnError::Format(format!("unexpected tensor {name}")))?;
            if self.values[id.0].dim() != value.dim() {
                return Err(NnError::Format(format!(
                    "{name}: stored shape {:?}, expected {:?}",
                    value.dim(),
                    self.values[id.0].dim()
                )));
            }
            self.values[id.0] = value;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.load_bytes(&bytes)
    }
}
