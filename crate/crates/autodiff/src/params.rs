//! Named parameter registry and the checkpoint format.
//!
//! A checkpoint directory holds `params.bin` (all values, little-endian
//! binary64, concatenated in registry order), `params.idx` (one line per
//! tensor: `name<TAB>shape<TAB>offset<TAB>count`, offsets in values) and
//! `config.txt` (free text supplied by the caller).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{AdError, Result};
use crate::tensor::{numel, Tensor};

const INDEX_HEADER: &str = "# musefm params v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `[-bound, bound]`.
    Uniform(f64),
    Zeros,
    Ones,
    /// Values supplied by the caller.
    Given,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    pub init: Init,
    /// Buffers (running statistics) are stored but not optimized.
    pub trainable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, p: Param) -> Result<Tensor> {
        if self.index.contains_key(&p.name) {
            return Err(AdError::DuplicateName(p.name));
        }
        let t = p.tensor.clone();
        self.index.insert(p.name.clone(), self.params.len());
        self.params.push(p);
        Ok(t)
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut impl Rng) -> Result<Tensor> {
        let n = numel(shape);
        let data = match init {
            Init::Uniform(b) => (0..n).map(|_| rng.gen_range(-b..=b)).collect(),
            Init::Zeros | Init::Given => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        let tensor = Tensor::leaf(shape, data)?;
        self.insert(Param { name: name.to_string(), tensor, init, trainable: true })
    }

    pub fn add_with(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let tensor = Tensor::leaf(shape, data)?;
        self.insert(Param { name: name.to_string(), tensor, init: Init::Given, trainable: true })
    }

    pub fn add_buffer(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let tensor = Tensor::constant(shape, data)?;
        self.insert(Param { name: name.to_string(), tensor, init: Init::Given, trainable: false })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].tensor)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn trainable(&self) -> Vec<Tensor> {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.clone()).collect()
    }

    pub fn num_trainable_values(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(|p| p.tensor.zero_grad());
    }

    /// Copies of all values, trainable and buffers, in registry order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.tensor.to_vec()).collect()
    }

    pub fn restore(&self, values: &[Vec<f64>]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(AdError::Checkpoint(format!("{} tensors for {} parameters", values.len(), self.params.len())));
        }
        for (p, v) in self.params.iter().zip(values) {
            p.tensor.set_values(v)?;
        }
        Ok(())
    }
}

pub fn save_checkpoint(dir: &Path, store: &ParamStore, config: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut bin = Vec::new();
    let mut idx = String::from(INDEX_HEADER);
    idx.push('\n');
    let mut offset = 0;
    for p in store.iter() {
        let v = p.tensor.values();
        bin.extend(v.iter().flat_map(|x| x.to_le_bytes()));
        let shape: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
        idx.push_str(&format!("{}\t{}\t{}\t{}\n", p.name, shape.join(","), offset, v.len()));
        offset += v.len();
    }
    fs::write(dir.join("params.bin"), bin)?;
    fs::write(dir.join("params.idx"), idx)?;
    fs::write(dir.join("config.txt"), config)?;
    Ok(())
}

/// Loads values into an existing registry; every registered tensor must be
/// present with the same shape. Returns the stored config text.
pub fn load_checkpoint(dir: &Path, store: &ParamStore) -> Result<String> {
    let bad = |m: String| AdError::Checkpoint(m);
    let bin = fs::read(dir.join("params.bin"))?;
    let idx = fs::read_to_string(dir.join("params.idx"))?;
    let config = fs::read_to_string(dir.join("config.txt"))?;
    if bin.len() % 8 != 0 {
        return Err(bad(format!("params.bin length {} is not a multiple of 8", bin.len())));
    }
    let mut lines = idx.lines();
    if lines.next() != Some(INDEX_HEADER) {
        return Err(bad("params.idx has an unknown header".into()));
    }
    let mut entries = HashMap::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let parsed = (|| -> Option<(Vec<usize>, usize, usize)> {
            if f.len() != 4 {
                return None;
            }
            let shape = if f[1].is_empty() {
                Vec::new()
            } else {
                f[1].split(',').map(|s| s.parse().ok()).collect::<Option<Vec<usize>>>()?
            };
            Some((shape, f[2].parse().ok()?, f[3].parse().ok()?))
        })();
        let (shape, off, count) = parsed.ok_or_else(|| bad(format!("malformed index line: {line}")))?;
        if (off + count) * 8 > bin.len() || numel(&shape) != count {
            return Err(bad(format!("index entry {} is inconsistent with params.bin", f[0])));
        }
        entries.insert(f[0].to_string(), (shape, off, count));
    }
    for p in store.iter() {
        let (shape, off, count) =
            entries.get(&p.name).ok_or_else(|| bad(format!("parameter {} missing", p.name)))?;
        if shape.as_slice() != p.tensor.shape() {
            return Err(bad(format!("parameter {} has shape {:?}, expected {:?}", p.name, shape, p.tensor.shape())));
        }
        let vals: Vec<f64> = bin[off * 8..(off + count) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        p.tensor.set_values(&vals)?;
    }
    Ok(config)
}
