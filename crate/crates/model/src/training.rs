//! Task losses, validation metrics and the multi-task training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use musefm_autodiff::{clip_grad_norm, cosine_lr, load_checkpoint, save_checkpoint, Adam, AdamConfig, AdError, Tensor};
use musefm_core::datastore::crc64;
use musefm_core::phytasks::{ber, loc_error, nmse, sum_rate};
use musefm_core::profile::ProfileName;
use musefm_core::seed::mix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_key_values, ModelConfig, TaskId, TaskInstruction};
use crate::data::{Target, TaskSamples};
use crate::error::{ModelError, Result};
use crate::net::{Forward, Model};
use crate::postprocess::{decode_block, to_channels, to_positions, to_precoders, to_symbols};
use crate::preprocess::Mode;

/// Column order of per-task values in the training log.
pub const LOG_ORDER: [TaskId; 5] = [TaskId::Ce, TaskId::Det, TaskId::Pre, TaskId::Dec, TaskId::Loc];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub adam: AdamConfig,
    /// Training weights in [`TaskId::ALL`] order.
    pub alpha: [f64; 5],
    /// Validation weights in [`TaskId::ALL`] order.
    pub beta: [f64; 5],
    pub seed: u64,
    pub profile: ProfileName,
    pub clip_norm: f64,
}

impl TrainConfig {
    pub fn toy() -> Self {
        Self {
            batch_size: 50,
            epochs: 20,
            lr0: 1e-3,
            adam: AdamConfig::default(),
            alpha: [1.0, 0.1, 1.0, 1.0, 1.0],
            beta: [1.0; 5],
            seed: 0,
            profile: ProfileName::Toy,
            clip_norm: 1.0,
        }
    }

    pub fn paper() -> Self {
        Self { batch_size: 100, epochs: 500, lr0: 1e-4, profile: ProfileName::Paper, ..Self::toy() }
    }

    pub fn for_profile(name: ProfileName) -> Self {
        match name {
            ProfileName::Toy => Self::toy(),
            ProfileName::Paper => Self::paper(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |w: &[f64; 5]| w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || w.iter().all(|&v| v == 0.0);
        if bad(&self.alpha) {
            return Err(ModelError::Config("alpha weights must be non-negative and not all zero".into()));
        }
        if bad(&self.beta) {
            return Err(ModelError::Config("beta weights must be non-negative and not all zero".into()));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(ModelError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ModelError::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(ModelError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let list = |w: &[f64; 5]| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "profile = {}", self.profile);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "lr0 = {}", self.lr0);
        let _ = writeln!(s, "adam_beta1 = {}", self.adam.beta1);
        let _ = writeln!(s, "adam_beta2 = {}", self.adam.beta2);
        let _ = writeln!(s, "adam_eps = {}", self.adam.eps);
        let _ = writeln!(s, "alpha = {}", list(&self.alpha));
        let _ = writeln!(s, "beta = {}", list(&self.beta));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "clip_norm = {}", self.clip_norm);
        s
    }

    /// Sets one field from text. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| ModelError::Config(format!("invalid value '{v}' for {key}")))
        }
        match key {
            "profile" => self.profile = value.parse().map_err(|e| ModelError::Config(format!("{e}")))?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr0" => self.lr0 = num(key, value)?,
            "adam_beta1" => self.adam.beta1 = num(key, value)?,
            "adam_beta2" => self.adam.beta2 = num(key, value)?,
            "adam_eps" => self.adam.eps = num(key, value)?,
            "alpha" => self.alpha = parse_weights(value)?,
            "beta" => self.beta = parse_weights(value)?,
            "seed" => self.seed = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Applies `key = value` overrides; unknown keys are rejected.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_key_values(text)? {
            if !self.set(&k, &v)? {
                return Err(ModelError::Config(format!("unknown training key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> u64 {
        crc64(self.to_text().as_bytes())
    }
}

/// Five comma-separated weights in [`TaskId::ALL`] order.
pub fn parse_weights(text: &str) -> Result<[f64; 5]> {
    let vals = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| ModelError::Config(format!("invalid weight '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    vals.try_into().map_err(|v: Vec<f64>| ModelError::Config(format!("expected 5 weights, got {}", v.len())))
}

/// `-sum_k log2(1 + SINR_k)` averaged over the batch. `w` is `[B, K, 2 N_t]`,
/// `a` the operator from [`crate::data::rate_operator`].
pub fn neg_sum_rate(w: &Tensor, a: &Tensor, sigma2: &Tensor) -> Result<Tensor> {
    let (b, k) = (w.shape()[0], w.shape()[1]);
    // g2[b, j, i] = |h_i^H w_j|^2
    let g2 = w.matmul(a)?.square()?.reshape(&[b, k, k, 2])?.sum_axis(3, false)?;
    let total = g2.sum_axis(1, false)?.add(sigma2)?;
    let mut eye = vec![0.0; k * k];
    (0..k).for_each(|i| eye[i * k + i] = 1.0);
    let signal = g2.mul(&Tensor::constant(&[k, k], eye)?)?.sum_axis(1, false)?;
    let interference = total.sub(&signal)?;
    let rate = total.log()?.sub(&interference.log()?)?.scale(1.0 / std::f64::consts::LN_2)?;
    Ok(rate.sum_axis(1, false)?.mean()?.neg()?)
}

/// Unweighted training loss of one task batch.
pub fn task_loss(fwd: &Forward, target: &Target, cfg: &ModelConfig, p_max: f64) -> Result<Tensor> {
    match target {
        Target::Ce(t) => Ok(fwd.ce(cfg)?.mse_loss(t)?),
        Target::Det(t) => Ok(fwd.det(cfg)?.mse_loss(t)?),
        Target::Loc(t) => Ok(fwd.loc()?.mse_loss(t)?),
        Target::Pre { a, sigma2 } => neg_sum_rate(&fwd.pre(cfg, p_max)?, a, sigma2),
        Target::Dec(t) => Ok(fwd.dec_logits(cfg)?.bce_with_logits(t)?),
    }
}

/// `sum_n alpha_n loss_n`.
pub fn multitask_loss(losses: &[f64; 5], alpha: &[f64; 5]) -> f64 {
    losses.iter().zip(alpha).map(|(l, a)| l * a).sum()
}

fn non_finite(task: TaskId, e: ModelError) -> ModelError {
    match e {
        ModelError::Autodiff(AdError::NonFinite(op)) => ModelError::NonFiniteLoss { task, detail: format!("in {op}") },
        e => e,
    }
}

/// Forward pass and loss on samples `idx` of `task`.
pub fn batch_loss(model: &Model, samples: &TaskSamples, task: TaskId, idx: &[usize], mode: Mode) -> Result<Tensor> {
    let cfg = model.config();
    let batch = samples.batch(task, idx, cfg)?;
    let instr = TaskInstruction::new(task, cfg, samples.snr(task));
    let run = || -> Result<Tensor> {
        let fwd = model.forward(&batch.raw, &batch.graphs, &instr, mode)?;
        task_loss(&fwd, &batch.target, cfg, samples.p_max)
    };
    run().map_err(|e| non_finite(task, e))
}

/// Per-sample evaluation metric: NMSE for CE and DET, sum rate for
/// precoding, BER on information bits for decoding, normalized distance for
/// localization.
pub fn evaluate(model: &Model, samples: &TaskSamples, task: TaskId, batch_size: usize) -> Result<Vec<f64>> {
    let n = samples.len(task);
    if n == 0 {
        return Err(ModelError::EmptySplit("evaluation"));
    }
    let cfg = model.config();
    let instr = TaskInstruction::new(task, cfg, samples.snr(task));
    let mut out = Vec::with_capacity(n);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = samples.batch(task, chunk, cfg)?;
        let fwd = model.forward(&batch.raw, &batch.graphs, &instr, Mode::Eval).map_err(|e| non_finite(task, e))?;
        match task {
            TaskId::Ce => {
                for (est, &i) in to_channels(&fwd.ce(cfg)?.to_vec(), cfg).iter().zip(chunk) {
                    out.push(nmse(est, &samples.ce[i].h)?);
                }
            }
            TaskId::Det => {
                for (est, &i) in to_symbols(&fwd.det(cfg)?.to_vec(), cfg).iter().zip(chunk) {
                    out.push(nmse(est, &samples.det[i].x)?);
                }
            }
            TaskId::Pre => {
                for (w, &i) in to_precoders(&fwd.pre(cfg, samples.p_max)?.to_vec(), cfg).iter().zip(chunk) {
                    let p = &samples.pre[i];
                    out.push(sum_rate(&p.h_true, w, p.sigma2)?);
                }
            }
            TaskId::Dec => {
                let logits = fwd.dec_logits(cfg)?.to_vec();
                for (l, &i) in logits.chunks(cfg.code_n).zip(chunk) {
                    let d = &samples.dec[i];
                    let block = decode_block(l, &d.s_hat, &samples.code)?;
                    out.push(ber(&block.bits, &d.b)?);
                }
            }
            TaskId::Loc => {
                for (p, &i) in to_positions(&fwd.loc()?.to_vec()).iter().zip(chunk) {
                    out.push(loc_error(*p, samples.loc[i].pos));
                }
            }
        }
    }
    Ok(out)
}

/// Validation metric of a task from per-sample values: the mean, negated
/// for the sum rate so that lower is better everywhere.
pub fn task_metric(task: TaskId, per_sample: &[f64]) -> f64 {
    let mean = per_sample.iter().sum::<f64>() / per_sample.len().max(1) as f64;
    if task == TaskId::Pre {
        -mean
    } else {
        mean
    }
}

/// `sum_n beta_n metric_n` and the per-task metrics ([`TaskId::ALL`]
/// order). Tasks with zero weight are skipped and report 0.
pub fn validation_loss(model: &Model, samples: &TaskSamples, beta: &[f64; 5], batch_size: usize) -> Result<(f64, [f64; 5])> {
    let mut metrics = [0.0; 5];
    for task in TaskId::ALL {
        if beta[task.index()] != 0.0 {
            metrics[task.index()] = task_metric(task, &evaluate(model, samples, task, batch_size)?);
        }
    }
    Ok((multitask_loss(&metrics, beta), metrics))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Learning rate of the epoch's first step.
    pub lr: f64,
    /// Mean unweighted training loss per task, [`TaskId::ALL`] order.
    pub train: [f64; 5],
    pub train_total: f64,
    pub val: [f64; 5],
    pub val_total: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: f64,
}

pub fn log_header() -> Vec<String> {
    let mut h = vec!["epoch".to_string(), "lr".to_string()];
    h.extend(LOG_ORDER.iter().map(|t| format!("loss_{}", t.key())));
    h.push("val_total".into());
    h.extend(LOG_ORDER.iter().map(|t| format!("val_{}", t.key())));
    h.push("train_total".into());
    h.push("config_hash".into());
    h
}

fn log_record(e: &EpochLog, hash: &str) -> Vec<String> {
    let mut r = vec![e.epoch.to_string(), format!("{:e}", e.lr)];
    r.extend(LOG_ORDER.iter().map(|t| format!("{:e}", e.train[t.index()])));
    r.push(format!("{:e}", e.val_total));
    r.extend(LOG_ORDER.iter().map(|t| format!("{:e}", e.val[t.index()])));
    r.push(format!("{:e}", e.train_total));
    r.push(hash.to_string());
    r
}

/// Hash identifying a model/training configuration pair in CSV artifacts.
pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    format!("{:016x}", crc64(format!("{}{}", model.to_text(), train.to_text()).as_bytes()))
}

/// Writes the model parameters and config to `dir`.
pub fn save_model(model: &Model, dir: &Path) -> Result<()> {
    Ok(save_checkpoint(dir, model.store(), &model.config().to_text())?)
}

/// Rebuilds a model from a checkpoint directory.
pub fn load_model(dir: &Path) -> Result<Model> {
    let text = fs::read_to_string(dir.join("config.txt"))?;
    let model = Model::new(ModelConfig::from_text(&text)?, 0)?;
    load_checkpoint(dir, model.store())?;
    Ok(model)
}

/// Multi-task training. Each step draws one batch per task with nonzero
/// `alpha`, accumulates the weighted gradients, clips and takes one Adam
/// step. Steps per epoch follow the largest task; smaller tasks wrap around
/// their shuffled order. With `out`, the best-validation checkpoint goes to
/// `out/checkpoint` and the per-epoch log to `out/train_log.csv`. The model
/// ends holding the best-validation parameters.
pub fn fit(
    model: &Model,
    train: &TaskSamples,
    val: &TaskSamples,
    tc: &TrainConfig,
    out: Option<&Path>,
    mut progress: impl FnMut(&EpochLog),
) -> Result<FitOutcome> {
    tc.validate()?;
    let active: Vec<TaskId> = TaskId::ALL.into_iter().filter(|t| tc.alpha[t.index()] > 0.0).collect();
    for &t in &TaskId::ALL {
        if train.len(t) == 0 {
            return Err(ModelError::EmptySplit("training"));
        }
        if tc.beta[t.index()] > 0.0 && val.len(t) == 0 {
            return Err(ModelError::EmptySplit("validation"));
        }
    }
    let bs = tc.batch_size;
    let steps = active.iter().map(|&t| train.len(t).div_ceil(bs)).max().unwrap_or(1);
    let total_steps = steps * tc.epochs;
    let params = model.parameters();
    let mut adam = Adam::new(tc.adam, &params);
    let hash = config_hash(model.config(), tc);

    let mut writer = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("train_config.txt"), tc.to_text())?;
            let mut w = csv::Writer::from_path(dir.join("train_log.csv"))?;
            w.write_record(log_header())?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };

    let mut log = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, Vec<Vec<f64>>)> = None;
    for epoch in 1..=tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(tc.seed, epoch as u64));
        let orders: Vec<Vec<usize>> = TaskId::ALL
            .iter()
            .map(|&t| {
                let mut o: Vec<usize> = (0..train.len(t)).collect();
                o.shuffle(&mut rng);
                o
            })
            .collect();
        let mut sums = [0.0; 5];
        let lr_first = cosine_lr(tc.lr0, (epoch - 1) * steps, total_steps);
        for s in 0..steps {
            model.store().zero_grad();
            for &task in &active {
                let order = &orders[task.index()];
                let idx: Vec<usize> = (0..bs.min(order.len())).map(|i| order[(s * bs + i) % order.len()]).collect();
                let loss = batch_loss(model, train, task, &idx, Mode::Train)?;
                sums[task.index()] += loss.item();
                loss.scale(tc.alpha[task.index()])?.backward().map_err(|e| non_finite(task, e.into()))?;
            }
            clip_grad_norm(&params, tc.clip_norm);
            adam.step(&params, cosine_lr(tc.lr0, (epoch - 1) * steps + s, total_steps));
        }
        let train_loss = sums.map(|v| v / steps as f64);
        let (val_total, val_metrics) = validation_loss(model, val, &tc.beta, bs.max(100))?;
        let entry = EpochLog {
            epoch,
            lr: lr_first,
            train: train_loss,
            train_total: multitask_loss(&train_loss, &tc.alpha),
            val: val_metrics,
            val_total,
        };
        if let Some(w) = writer.as_mut() {
            w.write_record(log_record(&entry, &hash))?;
            w.flush()?;
        }
        if best.as_ref().is_none_or(|(v, _, _)| val_total < *v) {
            best = Some((val_total, epoch, model.store().snapshot()));
            if let Some(dir) = out {
                save_model(model, &dir.join("checkpoint"))?;
            }
        }
        progress(&entry);
        log.push(entry);
    }
    let (best_val, best_epoch, snap) = best.expect("at least one epoch");
    model.store().restore(&snap)?;
    Ok(FitOutcome { log, best_epoch, best_val })
}
