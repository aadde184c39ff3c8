//! The network: scene encoder, instruction hypernetwork, unified
//! encoder/decoder with generated parameters, and the transformer backbone.
//!
//! Backbone sequence layout is `[scene tokens; cls; data tokens]`. The scene
//! prefix is dropped before decoding, so decoder row 0 is the cls token and
//! rows `1..` are the data tokens.

use std::collections::BTreeMap;

use musefm_autodiff::{Init, ParamStore, Tensor};
use musefm_core::scene::SceneGraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{tokenize, ModelConfig, TaskId, TaskInstruction, VOCAB};
use crate::error::{ModelError, Result};
use crate::layers::{Block, Linear};
use crate::preprocess::{normalized, shape_inputs, BatchNorm, Mode, RawBatch};

/// Parameter-name prefixes of the four trainable groups.
pub const GROUPS: [&str; 4] = ["scene.", "hyper.", "backbone.", "embed."];

/// Affine parameters of the unified encoder and decoder.
#[derive(Debug, Clone)]
pub struct GeneratedParams {
    /// `D x 2 N_t`.
    pub w_en: Tensor,
    pub b_en: Tensor,
    /// `2 N_t x D`.
    pub w_de: Tensor,
    pub b_de: Tensor,
}

#[derive(Debug, Clone)]
struct SceneEncoder {
    patch: Linear,
    pos: Tensor,
    blocks: Vec<Block>,
    out: Linear,
}

#[derive(Debug, Clone)]
struct HyperNet {
    layers: Vec<Linear>,
}

/// Output of a forward pass before task extraction.
#[derive(Debug, Clone)]
pub struct Forward {
    pub task: TaskId,
    /// `[B, 1 + T, 2 N_t]`: cls row then data rows.
    pub post: Tensor,
}

#[derive(Debug)]
pub struct Model {
    cfg: ModelConfig,
    store: ParamStore,
    scene: SceneEncoder,
    hyper: HyperNet,
    token_embed: Tensor,
    cls: Tensor,
    pos: Tensor,
    blocks: Vec<Block>,
    bn: BTreeMap<TaskId, BatchNorm>,
}

/// Row-major `P x P` patches of a `W x W` graph, patches in row-major order.
pub fn patchify(graph: &SceneGraph, p: usize) -> Vec<f64> {
    let w = graph.w;
    let s = w / p;
    let mut out = Vec::with_capacity(w * w);
    for pr in 0..s {
        for pc in 0..s {
            for r in 0..p {
                for c in 0..p {
                    out.push(f64::from(graph.get(pr * p + r, pc * p + c)));
                }
            }
        }
    }
    out
}

impl Model {
    /// Fresh model with parameters drawn from `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (d, f) = (cfg.d, cfg.features());

        let ds = cfg.scene_dim;
        let scene = SceneEncoder {
            patch: Linear::new(&mut store, "scene.patch", cfg.patch * cfg.patch, ds, 1.0, &mut rng)?,
            pos: store.add("scene.pos", &[cfg.scene_tokens(), ds], Init::Zeros, &mut rng)?,
            blocks: (0..cfg.scene_depth)
                .map(|i| Block::new(&mut store, &format!("scene.block{i}"), ds, cfg.scene_heads, cfg.mlp_ratio, &mut rng))
                .collect::<Result<_>>()?,
            out: Linear::new(&mut store, "scene.out", ds, d, 1.0, &mut rng)?,
        };

        let token_embed = store.add("embed.tokens", &[VOCAB, cfg.hyper_emb], Init::Uniform(1.0), &mut rng)?;
        let mut widths = vec![cfg.hyper_emb];
        widths.extend(&cfg.hyper_hidden);
        widths.push(cfg.theta_len());
        let n_layers = widths.len() - 1;
        let hyper = HyperNet {
            layers: (0..n_layers)
                .map(|i| {
                    let scale = if i + 1 == n_layers { 0.01 } else { 1.0 };
                    Linear::new(&mut store, &format!("hyper.layer{i}"), widths[i], widths[i + 1], scale, &mut rng)
                })
                .collect::<Result<_>>()?,
        };

        let cls = store.add("embed.cls", &[d], Init::Uniform(1.0 / (d as f64).sqrt()), &mut rng)?;
        let pos = store.add("embed.pos", &[cfg.seq_cap, d], Init::Zeros, &mut rng)?;
        let blocks = (0..cfg.layers)
            .map(|i| Block::new(&mut store, &format!("backbone.block{i}"), d, cfg.heads, cfg.mlp_ratio, &mut rng))
            .collect::<Result<_>>()?;

        let mut bn = BTreeMap::new();
        for t in TaskId::ALL.into_iter().filter(|&t| normalized(t)) {
            bn.insert(t, BatchNorm::new(&mut store, &format!("bn.{}", t.key()), f)?);
        }
        Ok(Self { cfg, store, scene, hyper, token_embed, cls, pos, blocks, bn })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.store.trainable()
    }

    /// Embedding lookup, mean pooling over tokens, then the ReLU MLP.
    pub fn hypernet_forward(&self, ids: &[usize]) -> Result<GeneratedParams> {
        if ids.is_empty() {
            return Err(ModelError::Config("empty instruction".into()));
        }
        let mut h = self.token_embed.embedding(ids)?.mean_axis(0, true)?;
        let last = self.hyper.layers.len() - 1;
        for (i, l) in self.hyper.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if i < last {
                h = h.relu()?;
            }
        }
        let (d, f) = (self.cfg.d, self.cfg.features());
        let mut at = 0;
        let mut take = |len: usize| {
            let s = h.slice(1, at, at + len);
            at += len;
            s
        };
        Ok(GeneratedParams {
            w_en: take(d * f)?.reshape(&[d, f])?,
            b_en: take(d)?.reshape(&[d])?,
            w_de: take(f * d)?.reshape(&[f, d])?,
            b_de: take(f)?.reshape(&[f])?,
        })
    }

    pub fn instruction_params(&self, instr: &TaskInstruction) -> Result<GeneratedParams> {
        self.hypernet_forward(&tokenize(&instr.text)?)
    }

    /// `[B, L_s, D]` scene embeddings.
    pub fn scene_encode(&self, graphs: &[&SceneGraph]) -> Result<Tensor> {
        let (w, p) = (self.cfg.grid, self.cfg.patch);
        let ls = self.cfg.scene_tokens();
        let mut data = Vec::with_capacity(graphs.len() * w * w);
        for g in graphs {
            if g.w != w {
                return Err(ModelError::Shape(format!("scene graph of width {}, expected {w}", g.w)));
            }
            data.extend(patchify(g, p));
        }
        let x = Tensor::constant(&[graphs.len(), ls, p * p], data)?;
        let mut h = self.scene.patch.forward(&x)?.add(&self.scene.pos)?;
        for b in &self.scene.blocks {
            h = b.forward(&h)?;
        }
        self.scene.out.forward(&h)
    }

    /// Shaped and (for all tasks but decoding) batch-normalized inputs,
    /// `[B, T, 2 N_t]`. In training mode this updates the running statistics.
    pub fn preprocess(&self, raw: &RawBatch, mode: Mode) -> Result<Tensor> {
        let task = raw.task();
        let mut x = shape_inputs(&self.cfg, raw)?;
        if let Some(bn) = self.bn.get(&task) {
            bn.apply(&mut x, mode);
        }
        Ok(Tensor::constant(&[raw.len(), self.cfg.data_tokens(task), self.cfg.features()], x)?)
    }

    /// `X_pre W_en^T + b_en`.
    pub fn unified_encode(&self, x_pre: &Tensor, theta: &GeneratedParams) -> Result<Tensor> {
        Ok(x_pre.matmul(&theta.w_en.transpose(0, 1)?)?.add(&theta.b_en)?)
    }

    /// `X_de W_de^T + b_de`.
    pub fn unified_decode(&self, x_de: &Tensor, theta: &GeneratedParams) -> Result<Tensor> {
        Ok(x_de.matmul(&theta.w_de.transpose(0, 1)?)?.add(&theta.b_de)?)
    }

    /// Assembles `[scene; cls; data]`, adds position embeddings and runs the
    /// blocks. Returns the full `[B, L_s + 1 + T, D]` output.
    pub fn backbone_forward(&self, scene_emb: &Tensor, x_emb: &Tensor) -> Result<Tensor> {
        let b = x_emb.shape()[0];
        let d = self.cfg.d;
        let len = scene_emb.shape()[1] + 1 + x_emb.shape()[1];
        if len > self.cfg.seq_cap {
            return Err(ModelError::SequenceOverflow { len, cap: self.cfg.seq_cap });
        }
        let cls = self.cls.reshape(&[1, 1, d])?.add(&Tensor::zeros(&[b, 1, d]))?;
        let seq = Tensor::concat(&[scene_emb.clone(), cls, x_emb.clone()], 1)?;
        let mut h = seq.add(&self.pos.slice(0, 0, len)?)?;
        for blk in &self.blocks {
            h = blk.forward(&h)?;
        }
        Ok(h)
    }

    /// Full pipeline up to the unified decoder output.
    pub fn forward(&self, raw: &RawBatch, graphs: &[&SceneGraph], instr: &TaskInstruction, mode: Mode) -> Result<Forward> {
        let task = raw.task();
        if instr.task != task {
            return Err(ModelError::Config(format!("instruction for {} used on a {task} batch", instr.task)));
        }
        if graphs.len() != raw.len() {
            return Err(ModelError::Shape(format!("{} scene graphs for {} samples", graphs.len(), raw.len())));
        }
        let theta = self.instruction_params(instr)?;
        let scene = self.scene_encode(graphs)?;
        let x_emb = self.unified_encode(&self.preprocess(raw, mode)?, &theta)?;
        let out = self.backbone_forward(&scene, &x_emb)?;
        let ls = self.cfg.scene_tokens();
        let x_de = out.slice(1, ls, out.shape()[1])?;
        Ok(Forward { task, post: self.unified_decode(&x_de, &theta)? })
    }
}

impl Forward {
    fn rows(&self, start: usize, end: usize, features: usize) -> Result<Tensor> {
        Ok(self.post.slice(1, start, end)?.slice(2, 0, features)?)
    }

    pub fn batch(&self) -> usize {
        self.post.shape()[0]
    }

    /// `[B, M, 2 N_t]`: rows `1..` as interleaved channel columns.
    pub fn ce(&self, cfg: &ModelConfig) -> Result<Tensor> {
        self.rows(1, 1 + cfg.subcarriers, cfg.features())
    }

    /// `[B, K, 2 N_t]` precoders scaled so each sample has total power `p_max`.
    pub fn pre(&self, cfg: &ModelConfig, p_max: f64) -> Result<Tensor> {
        let w = self.rows(1, 1 + cfg.users, cfg.features())?;
        let power = w.square()?.sum_axis(2, true)?.sum_axis(1, true)?;
        Ok(w.div(&power.sqrt()?)?.scale(p_max.sqrt())?)
    }

    /// `[B, L_d, 2 K]`: the last `L_d` rows, first `2K` features.
    pub fn det(&self, cfg: &ModelConfig) -> Result<Tensor> {
        let t = self.post.shape()[1];
        self.rows(t - cfg.data_len, t, 2 * cfg.users)
    }

    /// `[B, 2]` normalized position from the cls row.
    pub fn loc(&self) -> Result<Tensor> {
        let b = self.batch();
        Ok(self.rows(0, 1, 2)?.reshape(&[b, 2])?)
    }

    /// `[B, n]` noise logits from feature 0 of the first `n` data rows.
    pub fn dec_logits(&self, cfg: &ModelConfig) -> Result<Tensor> {
        let b = self.batch();
        Ok(self.rows(1, 1 + cfg.code_n, 1)?.reshape(&[b, cfg.code_n])?)
    }
}
