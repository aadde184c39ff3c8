//! Task-specific input shaping to a common `T x 2 N_t` real layout, and
//! per-task batch normalization.
//!
//! Complex vectors become interleaved real features: feature `2n` is the real
//! part of entry `n`, feature `2n + 1` the imaginary part.

use musefm_autodiff::{ParamStore, Tensor};
use musefm_core::CMat;

use crate::config::{ModelConfig, TaskId};
use crate::error::{ModelError, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running averages updated.
    Train,
    /// Running averages, nothing mutated.
    Eval,
}

/// Raw inputs of one single-task batch.
#[derive(Debug, Clone)]
pub enum RawBatch {
    /// `L_p x M` received pilots per sample.
    Ce(Vec<CMat>),
    Loc(Vec<CMat>),
    /// Channel `N_t x K` and received block `N_t x L_d` per sample.
    Det { h: Vec<CMat>, y: Vec<CMat> },
    /// Noisy CSI `N_t x K` per sample.
    Pre(Vec<CMat>),
    /// ECCT input `s_tilde` (length `2n - m`) per sample.
    Dec(Vec<Vec<f64>>),
}

impl RawBatch {
    pub fn task(&self) -> TaskId {
        match self {
            RawBatch::Ce(_) => TaskId::Ce,
            RawBatch::Loc(_) => TaskId::Loc,
            RawBatch::Det { .. } => TaskId::Det,
            RawBatch::Pre(_) => TaskId::Pre,
            RawBatch::Dec(_) => TaskId::Dec,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            RawBatch::Ce(v) | RawBatch::Loc(v) | RawBatch::Pre(v) => v.len(),
            RawBatch::Det { h, .. } => h.len(),
            RawBatch::Dec(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Writes column `c` of `m` as interleaved reals into `dst`.
pub fn interleave_column(m: &CMat, c: usize, dst: &mut [f64]) {
    for r in 0..m.nrows() {
        dst[2 * r] = m[(r, c)].re;
        dst[2 * r + 1] = m[(r, c)].im;
    }
}

fn shape_err(task: TaskId, what: String) -> ModelError {
    ModelError::Shape(format!("{task}: {what}"))
}

/// Unnormalized `[B, T, 2 N_t]` input values.
pub fn shape_inputs(cfg: &ModelConfig, raw: &RawBatch) -> Result<Vec<f64>> {
    let task = raw.task();
    let f = cfg.features();
    let t = cfg.data_tokens(task);
    let b = raw.len();
    if b == 0 {
        return Err(shape_err(task, "empty batch".into()));
    }
    let mut x = vec![0.0; b * t * f];
    match raw {
        RawBatch::Ce(ys) | RawBatch::Loc(ys) => {
            for (s, y) in ys.iter().enumerate() {
                if y.ncols() != cfg.subcarriers || y.nrows() > cfg.n_t {
                    return Err(shape_err(task, format!("pilots {:?}, expected L_p x {}", y.shape(), cfg.subcarriers)));
                }
                for m in 0..cfg.subcarriers {
                    let row = &mut x[(s * t + m) * f..(s * t + m + 1) * f];
                    for p in 0..y.nrows() {
                        row[2 * p] = y[(p, m)].re;
                        row[2 * p + 1] = y[(p, m)].im;
                    }
                }
            }
        }
        RawBatch::Det { h, y } => {
            if y.len() != h.len() {
                return Err(shape_err(task, "channel and signal counts differ".into()));
            }
            for (s, (h, y)) in h.iter().zip(y).enumerate() {
                if h.shape() != (cfg.n_t, cfg.users) || y.shape() != (cfg.n_t, cfg.data_len) {
                    return Err(shape_err(task, format!("H {:?}, Y {:?}", h.shape(), y.shape())));
                }
                for k in 0..cfg.users {
                    interleave_column(h, k, &mut x[(s * t + k) * f..(s * t + k + 1) * f]);
                }
                for l in 0..cfg.data_len {
                    let r = s * t + cfg.users + l;
                    interleave_column(y, l, &mut x[r * f..(r + 1) * f]);
                }
            }
        }
        RawBatch::Pre(hs) => {
            for (s, h) in hs.iter().enumerate() {
                if h.shape() != (cfg.n_t, cfg.users) {
                    return Err(shape_err(task, format!("H {:?}", h.shape())));
                }
                for k in 0..cfg.users {
                    interleave_column(h, k, &mut x[(s * t + k) * f..(s * t + k + 1) * f]);
                }
            }
        }
        RawBatch::Dec(ss) => {
            for (s, v) in ss.iter().enumerate() {
                if v.len() != t {
                    return Err(shape_err(task, format!("s_tilde of length {}, expected {t}", v.len())));
                }
                for (i, &val) in v.iter().enumerate() {
                    x[(s * t + i) * f + i] = val;
                }
            }
        }
    }
    Ok(x)
}

/// Non-affine batch normalization over all rows of a `[rows, F]` block.
/// Running statistics are registry buffers, so checkpoints carry them.
#[derive(Debug, Clone)]
pub(crate) struct BatchNorm {
    mean: Tensor,
    var: Tensor,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, features: usize) -> Result<Self> {
        Ok(Self {
            mean: store.add_buffer(&format!("{name}.running_mean"), &[features], vec![0.0; features])?,
            var: store.add_buffer(&format!("{name}.running_var"), &[features], vec![1.0; features])?,
        })
    }

    pub fn apply(&self, x: &mut [f64], mode: Mode) {
        let f = self.mean.numel();
        let rows = x.len() / f;
        let (mean, var) = match mode {
            Mode::Eval => (self.mean.to_vec(), self.var.to_vec()),
            Mode::Train => {
                let mut mean = vec![0.0; f];
                for row in x.chunks(f) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; f];
                for row in x.chunks(f) {
                    for j in 0..f {
                        var[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                let unbiased = if rows > 1 { rows as f64 / (rows - 1) as f64 } else { 1.0 };
                let mix = |old: &[f64], new: &[f64], s: f64| -> Vec<f64> {
                    old.iter().zip(new).map(|(o, n)| (1.0 - BN_MOMENTUM) * o + BN_MOMENTUM * s * n).collect()
                };
                let rm = mix(&self.mean.values(), &mean, 1.0);
                let rv = mix(&self.var.values(), &var, unbiased);
                self.mean.set_values(&rm).expect("same length");
                self.var.set_values(&rv).expect("same length");
                (mean, var)
            }
        };
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        for row in x.chunks_mut(f) {
            for j in 0..f {
                row[j] = (row[j] - mean[j]) * inv[j];
            }
        }
    }
}

/// Whether `task` inputs pass through batch normalization.
pub fn normalized(task: TaskId) -> bool {
    task != TaskId::Dec
}

#[cfg(test)]
mod tests {
    use super::*;
    use musefm_core::channel::awgn;

    #[test]
    fn ce_padding_layout() {
        let cfg = ModelConfig::toy();
        let y = awgn(2, 8, 1.0, 1);
        let x = shape_inputs(&cfg, &RawBatch::Ce(vec![y.clone()])).unwrap();
        assert_eq!(x.len(), 8 * 32);
        for m in 0..8 {
            let row = &x[m * 32..(m + 1) * 32];
            assert_eq!(row[0], y[(0, m)].re);
            assert_eq!(row[3], y[(1, m)].im);
            assert!(row[4..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn decoding_is_diagonal() {
        let cfg = ModelConfig::toy();
        let s: Vec<f64> = (1..=24).map(f64::from).collect();
        let x = shape_inputs(&cfg, &RawBatch::Dec(vec![s])).unwrap();
        for r in 0..24 {
            for c in 0..32 {
                let want = if r == c { (r + 1) as f64 } else { 0.0 };
                assert_eq!(x[r * 32 + c], want);
            }
        }
    }

    #[test]
    fn rejects_wrong_dimensions() {
        let cfg = ModelConfig::toy();
        assert!(shape_inputs(&cfg, &RawBatch::Ce(vec![awgn(2, 7, 1.0, 1)])).is_err());
        assert!(shape_inputs(&cfg, &RawBatch::Pre(vec![awgn(16, 3, 1.0, 1)])).is_err());
        assert!(shape_inputs(&cfg, &RawBatch::Dec(vec![vec![0.0; 23]])).is_err());
        assert!(shape_inputs(&cfg, &RawBatch::Pre(vec![])).is_err());
    }
}
