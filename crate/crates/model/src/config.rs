//! Model configuration, task identifiers, instruction templates and the
//! byte-level tokenizer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use musefm_core::profile::{ProfileName, SystemParams};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskId {
    Ce,
    Pre,
    Det,
    Dec,
    Loc,
}

impl TaskId {
    /// Canonical order; per-task weight lists follow it.
    pub const ALL: [TaskId; 5] = [TaskId::Ce, TaskId::Pre, TaskId::Det, TaskId::Dec, TaskId::Loc];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short lowercase key used in file names and CSV columns.
    pub fn key(self) -> &'static str {
        match self {
            TaskId::Ce => "ce",
            TaskId::Pre => "pre",
            TaskId::Det => "det",
            TaskId::Dec => "dec",
            TaskId::Loc => "loc",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskId::Ce => "CE",
            TaskId::Pre => "PRECODING",
            TaskId::Det => "DET",
            TaskId::Dec => "DECODING",
            TaskId::Loc => "LOC",
        })
    }
}

impl FromStr for TaskId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" | "channel-estimation" => Ok(TaskId::Ce),
            "pre" | "precoding" => Ok(TaskId::Pre),
            "det" | "detection" => Ok(TaskId::Det),
            "dec" | "decoding" => Ok(TaskId::Dec),
            "loc" | "localization" => Ok(TaskId::Loc),
            other => Err(ModelError::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub n_t: usize,
    pub subcarriers: usize,
    pub users: usize,
    pub pilots_ce: usize,
    pub pilots_loc: usize,
    pub data_len: usize,
    pub code_n: usize,
    pub code_m: usize,
    pub grid: usize,
    pub patch: usize,
    pub scene_dim: usize,
    pub scene_depth: usize,
    pub scene_heads: usize,
    pub hyper_emb: usize,
    pub hyper_hidden: Vec<usize>,
    pub mlp_ratio: usize,
    pub seq_cap: usize,
}

impl ModelConfig {
    pub fn toy() -> Self {
        Self {
            d: 32,
            layers: 2,
            heads: 4,
            n_t: 16,
            subcarriers: 8,
            users: 2,
            pilots_ce: 2,
            pilots_loc: 4,
            data_len: 2,
            code_n: 16,
            code_m: 8,
            grid: 32,
            patch: 8,
            scene_dim: 32,
            scene_depth: 1,
            scene_heads: 4,
            hyper_emb: 32,
            hyper_hidden: vec![64],
            mlp_ratio: 4,
            seq_cap: 64,
        }
    }

    pub fn paper() -> Self {
        Self {
            d: 768,
            layers: 12,
            heads: 12,
            n_t: 64,
            subcarriers: 48,
            users: 4,
            pilots_ce: 4,
            pilots_loc: 8,
            data_len: 2,
            code_n: 64,
            code_m: 32,
            grid: 100,
            patch: 10,
            scene_dim: 256,
            scene_depth: 4,
            scene_heads: 8,
            hyper_emb: 768,
            hyper_hidden: vec![512],
            mlp_ratio: 4,
            seq_cap: 256,
        }
    }

    pub fn for_profile(name: ProfileName) -> Self {
        match name {
            ProfileName::Toy => Self::toy(),
            ProfileName::Paper => Self::paper(),
        }
    }

    /// Copies the system dimensions of `params` over this config.
    pub fn with_system(mut self, params: &SystemParams) -> Self {
        self.n_t = params.n_t();
        self.subcarriers = params.array.subcarriers;
        self.users = params.users;
        self.pilots_ce = params.pilots_ce;
        self.pilots_loc = params.pilots_loc;
        self.data_len = params.data_len;
        self.code_n = params.code_n;
        self.code_m = params.code_m;
        self.grid = params.grid;
        self
    }

    pub fn scene_tokens(&self) -> usize {
        let s = self.grid / self.patch;
        s * s
    }

    pub fn features(&self) -> usize {
        2 * self.n_t
    }

    /// Number of data tokens for `task`.
    pub fn data_tokens(&self, task: TaskId) -> usize {
        match task {
            TaskId::Ce | TaskId::Loc => self.subcarriers,
            TaskId::Det => self.users + self.data_len,
            TaskId::Pre => self.users,
            TaskId::Dec => 2 * self.code_n - self.code_m,
        }
    }

    pub fn sequence_len(&self, task: TaskId) -> usize {
        self.scene_tokens() + 1 + self.data_tokens(task)
    }

    /// Length of the hypernetwork output vector.
    pub fn theta_len(&self) -> usize {
        2 * self.d * self.features() + self.d + self.features()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        let positive = [
            ("d", self.d),
            ("layers", self.layers),
            ("heads", self.heads),
            ("n_t", self.n_t),
            ("subcarriers", self.subcarriers),
            ("users", self.users),
            ("pilots_ce", self.pilots_ce),
            ("pilots_loc", self.pilots_loc),
            ("data_len", self.data_len),
            ("code_n", self.code_n),
            ("code_m", self.code_m),
            ("grid", self.grid),
            ("patch", self.patch),
            ("scene_dim", self.scene_dim),
            ("scene_heads", self.scene_heads),
            ("hyper_emb", self.hyper_emb),
            ("mlp_ratio", self.mlp_ratio),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{k} must be positive"));
        }
        if self.grid % self.patch != 0 {
            return bad(format!("grid {} not divisible by patch {}", self.grid, self.patch));
        }
        if self.d % self.heads != 0 {
            return bad(format!("d {} not divisible by heads {}", self.d, self.heads));
        }
        if self.scene_dim % self.scene_heads != 0 {
            return bad(format!("scene_dim {} not divisible by scene_heads {}", self.scene_dim, self.scene_heads));
        }
        if self.code_m > self.code_n || 2 * self.code_n - self.code_m > self.features() {
            return bad(format!("code ({}, {}) needs 2n - m <= 2 N_t = {}", self.code_n, self.code_m, self.features()));
        }
        if self.users > self.n_t || self.pilots_ce > self.n_t || self.pilots_loc > self.n_t {
            return bad("users and pilot lengths must not exceed n_t".into());
        }
        if let Some(t) = TaskId::ALL.iter().find(|&&t| self.sequence_len(t) > self.seq_cap) {
            return Err(ModelError::SequenceOverflow { len: self.sequence_len(*t), cap: self.seq_cap });
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let hidden: Vec<String> = self.hyper_hidden.iter().map(usize::to_string).collect();
        vec![
            ("d", self.d.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("n_t", self.n_t.to_string()),
            ("subcarriers", self.subcarriers.to_string()),
            ("users", self.users.to_string()),
            ("pilots_ce", self.pilots_ce.to_string()),
            ("pilots_loc", self.pilots_loc.to_string()),
            ("data_len", self.data_len.to_string()),
            ("code_n", self.code_n.to_string()),
            ("code_m", self.code_m.to_string()),
            ("grid", self.grid.to_string()),
            ("patch", self.patch.to_string()),
            ("scene_dim", self.scene_dim.to_string()),
            ("scene_depth", self.scene_depth.to_string()),
            ("scene_heads", self.scene_heads.to_string()),
            ("hyper_emb", self.hyper_emb.to_string()),
            ("hyper_hidden", hidden.join(",")),
            ("mlp_ratio", self.mlp_ratio.to_string()),
            ("seq_cap", self.seq_cap.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Sets one field from its text form. Returns `false` for keys that are
    /// not model fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| parse_usize(key, v);
        match key {
            "d" => self.d = num(value)?,
            "layers" => self.layers = num(value)?,
            "heads" => self.heads = num(value)?,
            "n_t" => self.n_t = num(value)?,
            "subcarriers" => self.subcarriers = num(value)?,
            "users" => self.users = num(value)?,
            "pilots_ce" => self.pilots_ce = num(value)?,
            "pilots_loc" => self.pilots_loc = num(value)?,
            "data_len" => self.data_len = num(value)?,
            "code_n" => self.code_n = num(value)?,
            "code_m" => self.code_m = num(value)?,
            "grid" => self.grid = num(value)?,
            "patch" => self.patch = num(value)?,
            "scene_dim" => self.scene_dim = num(value)?,
            "scene_depth" => self.scene_depth = num(value)?,
            "scene_heads" => self.scene_heads = num(value)?,
            "hyper_emb" => self.hyper_emb = num(value)?,
            "hyper_hidden" => {
                self.hyper_hidden = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|v| num(v.trim())).collect::<Result<_>>()?
                }
            }
            "mlp_ratio" => self.mlp_ratio = num(value)?,
            "seq_cap" => self.seq_cap = num(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses a complete config file; every field must appear exactly once.
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut cfg = Self::toy();
        for (k, _) in cfg.entries() {
            if !kv.contains_key(k) {
                return Err(ModelError::Config(format!("missing key '{k}'")));
            }
        }
        for (k, v) in &kv {
            if !cfg.set(k, v)? {
                return Err(ModelError::Config(format!("unknown key '{k}'")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| ModelError::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

/// `key = value` lines; `#` starts a comment. Duplicate keys are rejected.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ModelError::Config(format!("line {}: expected key = value", n + 1)))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(ModelError::Config(format!("line {}: duplicate key '{}'", n + 1, k.trim())));
        }
    }
    Ok(out)
}

/// Byte-level tokenization: ids are the UTF-8 bytes (vocabulary 256).
pub fn tokenize(text: &str) -> Result<Vec<usize>> {
    if text.is_empty() {
        return Err(ModelError::Config("empty instruction".into()));
    }
    Ok(text.bytes().map(usize::from).collect())
}

pub fn detokenize(ids: &[usize]) -> Result<String> {
    let bytes = ids
        .iter()
        .map(|&i| u8::try_from(i).map_err(|_| ModelError::Config(format!("token {i} outside the byte vocabulary"))))
        .collect::<Result<Vec<u8>>>()?;
    String::from_utf8(bytes).map_err(|e| ModelError::Config(e.to_string()))
}

pub const VOCAB: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstruction {
    pub text: String,
    pub task: TaskId,
}

impl TaskInstruction {
    /// The instruction template for `task`; `snr_db` is ignored for decoding.
    pub fn new(task: TaskId, cfg: &ModelConfig, snr_db: f64) -> Self {
        let text = match task {
            TaskId::Ce => format!("Channel estimation, pilot length is {}, SNR = {snr_db} dB", cfg.pilots_ce),
            TaskId::Det => format!(
                "MIMO detection, transmitting antenna number is {}, data length is {}, SNR is {snr_db} dB",
                cfg.users, cfg.data_len
            ),
            TaskId::Dec => format!(
                "Channel decoding for polar codes with encoded bit length n = {} and information bit length m = {}",
                cfg.code_n, cfg.code_m
            ),
            TaskId::Pre => format!("Multi-user precoding, user number is {}, SNR is {snr_db} dB", cfg.users),
            TaskId::Loc => format!(
                "User localization, signal length for localization is {}, SNR is {snr_db} dB",
                cfg.pilots_loc
            ),
        };
        Self { text, task }
    }

    /// Recovers the task from the text's identifier prefix.
    pub fn parse(text: &str) -> Result<Self> {
        const PREFIXES: [(&str, TaskId); 5] = [
            ("Channel estimation", TaskId::Ce),
            ("MIMO detection", TaskId::Det),
            ("Channel decoding", TaskId::Dec),
            ("Multi-user precoding", TaskId::Pre),
            ("User localization", TaskId::Loc),
        ];
        PREFIXES
            .iter()
            .find(|(p, _)| text.starts_with(p))
            .map(|&(_, task)| Self { text: text.to_string(), task })
            .ok_or_else(|| ModelError::Config(format!("no task identifier in instruction '{text}'")))
    }
}
