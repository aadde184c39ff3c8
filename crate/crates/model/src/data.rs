//! Flattened per-task sample lists drawn from stored scenarios, and batch
//! assembly with training targets.

use musefm_autodiff::Tensor;
use musefm_core::channel::{awgn, snr_to_sigma2};
use musefm_core::datastore::ScenarioBundle;
use musefm_core::phytasks::make_decoding_sample;
use musefm_core::polar::PolarCode;
use musefm_core::profile::SystemParams;
use musefm_core::scene::SceneGraph;
use musefm_core::seed::{mix, stream_seed, Stream};
use musefm_core::CMat;

use crate::config::{ModelConfig, TaskId};
use crate::error::{ModelError, Result};
use crate::postprocess::{columns_to_rows, symbols_to_rows};
use crate::preprocess::RawBatch;

#[derive(Debug, Clone)]
pub struct CeSample {
    pub scene: usize,
    /// `L_p x M` received pilots.
    pub y: CMat,
    pub selection: Vec<usize>,
    /// `N_t x M` true channel.
    pub h: CMat,
}

#[derive(Debug, Clone)]
pub struct LocSample {
    pub scene: usize,
    pub y: CMat,
    pub selection: Vec<usize>,
    pub h: CMat,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct DetSample {
    pub scene: usize,
    pub h: CMat,
    pub y: CMat,
    pub x: CMat,
}

#[derive(Debug, Clone)]
pub struct PreSample {
    pub scene: usize,
    pub h_noisy: CMat,
    pub h_true: CMat,
    pub sigma2: f64,
}

#[derive(Debug, Clone)]
pub struct DecSample {
    pub scene: usize,
    pub s_tilde: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub z_tilde: Vec<u8>,
    pub b: Vec<u8>,
    pub ebn0_db: f64,
}

/// Task samples of one split. Scene indices point into `graphs`.
#[derive(Debug, Clone)]
pub struct TaskSamples {
    pub graphs: Vec<SceneGraph>,
    pub ce: Vec<CeSample>,
    pub loc: Vec<LocSample>,
    pub det: Vec<DetSample>,
    pub pre: Vec<PreSample>,
    pub dec: Vec<DecSample>,
    /// Instruction SNR per task in [`TaskId::ALL`] order (E_b/N_0 for decoding).
    pub snr_db: [f64; 5],
    pub p_max: f64,
    pub code: PolarCode,
}

/// Targets aligned with the extracted outputs of [`crate::net::Forward`].
#[derive(Debug, Clone)]
pub enum Target {
    /// `[B, M, 2 N_t]`.
    Ce(Tensor),
    /// `[B, L_d, 2 K]`.
    Det(Tensor),
    /// `[B, 2]`.
    Loc(Tensor),
    /// Real sum-rate operator `[B, 2 N_t, 2 K]` and noise `[B, 1]`.
    Pre { a: Tensor, sigma2: Tensor },
    /// `[B, n]` noise bits.
    Dec(Tensor),
}

#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub raw: RawBatch,
    pub graphs: Vec<&'a SceneGraph>,
    pub target: Target,
}

/// `[2 N_t, 2 K]` matrix `A` with `(w A)[2i] = Re(h_i^H w)` and
/// `(w A)[2i + 1] = Im(h_i^H w)` for an interleaved precoder row `w`.
pub fn rate_operator(h: &CMat) -> Vec<f64> {
    let (n_t, k) = h.shape();
    let cols = 2 * k;
    let mut a = vec![0.0; 2 * n_t * cols];
    for i in 0..k {
        for n in 0..n_t {
            let (hr, hi) = (h[(n, i)].re, h[(n, i)].im);
            a[(2 * n) * cols + 2 * i] = hr;
            a[(2 * n + 1) * cols + 2 * i] = hi;
            a[(2 * n) * cols + 2 * i + 1] = -hi;
            a[(2 * n + 1) * cols + 2 * i + 1] = hr;
        }
    }
    a
}

impl TaskSamples {
    pub fn from_bundles(bundles: &[ScenarioBundle], params: &SystemParams) -> Result<Self> {
        let code = PolarCode::design(params.code_n, params.code_m, params.code_design_ebn0_db)?;
        let mut s = Self {
            graphs: Vec::with_capacity(bundles.len()),
            ce: Vec::new(),
            loc: Vec::new(),
            det: Vec::new(),
            pre: Vec::new(),
            dec: Vec::new(),
            snr_db: [params.snr_ce_db, params.snr_pre_db, params.snr_det_db, params.ebn0_db[0], params.snr_loc_db],
            p_max: params.p_max,
            code,
        };
        for (si, b) in bundles.iter().enumerate() {
            s.graphs.push(b.graph.clone());
            for d in &b.drops {
                for (u, obs) in d.ce.iter().enumerate() {
                    s.ce.push(CeSample { scene: si, y: obs.y.clone(), selection: obs.selection.clone(), h: d.channels.h[u].clone() });
                }
                for (u, l) in d.loc.iter().enumerate() {
                    s.loc.push(LocSample {
                        scene: si,
                        y: l.obs.y.clone(),
                        selection: l.obs.selection.clone(),
                        h: d.channels.h[u].clone(),
                        pos: l.pos,
                    });
                }
                s.det.push(DetSample { scene: si, h: d.det.h.clone(), y: d.det.y.clone(), x: d.det.x.clone() });
                s.pre.push(PreSample {
                    scene: si,
                    h_noisy: d.pre.h_noisy.clone(),
                    h_true: d.pre.h_true.clone(),
                    sigma2: d.pre.sigma2,
                });
                s.dec.push(DecSample {
                    scene: si,
                    s_tilde: d.dec.s_tilde.clone(),
                    s_hat: d.dec.s_hat.clone(),
                    z_tilde: d.dec.z_tilde.clone(),
                    b: d.dec.b.clone(),
                    ebn0_db: d.dec.ebn0_db,
                });
            }
        }
        if bundles.is_empty() {
            return Err(ModelError::EmptySplit("scenario"));
        }
        Ok(s)
    }

    pub fn len(&self, task: TaskId) -> usize {
        match task {
            TaskId::Ce => self.ce.len(),
            TaskId::Loc => self.loc.len(),
            TaskId::Det => self.det.len(),
            TaskId::Pre => self.pre.len(),
            TaskId::Dec => self.dec.len(),
        }
    }

    pub fn snr(&self, task: TaskId) -> f64 {
        self.snr_db[task.index()]
    }

    /// Same samples with every scene graph replaced by free space.
    pub fn with_empty_scenes(&self) -> Self {
        let mut s = self.clone();
        for g in &mut s.graphs {
            *g = SceneGraph::zeros(g.w);
        }
        s
    }

    /// Redraws the noisy observations of `task` at a new SNR (E_b/N_0 for
    /// decoding), keeping the clean channels, symbols and messages.
    pub fn at_snr(&self, task: TaskId, snr_db: f64, seed: u64) -> Result<Self> {
        let mut s = self.clone();
        let noise_seed = |i: usize| stream_seed(mix(seed, task.index() as u64), Stream::Eval, i as u64);
        let sigma2 = snr_to_sigma2(snr_db, 1.0);
        let pilots = |h: &CMat, sel: &[usize], i: usize| {
            let n = awgn(sel.len(), h.ncols(), sigma2, noise_seed(i));
            CMat::from_fn(sel.len(), h.ncols(), |r, c| h[(sel[r], c)] + n[(r, c)])
        };
        match task {
            TaskId::Ce => {
                for (i, c) in s.ce.iter_mut().enumerate() {
                    c.y = pilots(&c.h, &c.selection, i);
                }
            }
            TaskId::Loc => {
                for (i, l) in s.loc.iter_mut().enumerate() {
                    l.y = pilots(&l.h, &l.selection, i);
                }
            }
            TaskId::Det => {
                for (i, d) in s.det.iter_mut().enumerate() {
                    d.y = &d.h * &d.x + awgn(d.h.nrows(), d.x.ncols(), sigma2, noise_seed(i));
                }
            }
            TaskId::Pre => {
                for (i, p) in s.pre.iter_mut().enumerate() {
                    p.h_noisy = &p.h_true + awgn(p.h_true.nrows(), p.h_true.ncols(), sigma2, noise_seed(i));
                    p.sigma2 = sigma2;
                }
            }
            TaskId::Dec => {
                for (i, d) in s.dec.iter_mut().enumerate() {
                    let smp = make_decoding_sample(&d.b, &self.code, snr_db, noise_seed(i))?;
                    d.s_tilde = smp.s_tilde;
                    d.s_hat = smp.s_hat;
                    d.z_tilde = smp.z_tilde;
                    d.ebn0_db = snr_db;
                }
            }
        }
        s.snr_db[task.index()] = snr_db;
        Ok(s)
    }

    pub fn batch(&self, task: TaskId, idx: &[usize], cfg: &ModelConfig) -> Result<Batch<'_>> {
        let b = idx.len();
        if b == 0 {
            return Err(ModelError::Shape(format!("empty {task} batch")));
        }
        if let Some(&i) = idx.iter().find(|&&i| i >= self.len(task)) {
            return Err(ModelError::Shape(format!("{task} sample {i} out of range")));
        }
        let f = cfg.features();
        let (raw, scenes, target) = match task {
            TaskId::Ce => {
                let items: Vec<&CeSample> = idx.iter().map(|&i| &self.ce[i]).collect();
                let t: Vec<f64> = items.iter().flat_map(|c| columns_to_rows(&c.h)).collect();
                (
                    RawBatch::Ce(items.iter().map(|c| c.y.clone()).collect()),
                    items.iter().map(|c| c.scene).collect::<Vec<_>>(),
                    Target::Ce(Tensor::constant(&[b, cfg.subcarriers, f], t)?),
                )
            }
            TaskId::Loc => {
                let items: Vec<&LocSample> = idx.iter().map(|&i| &self.loc[i]).collect();
                let t: Vec<f64> = items.iter().flat_map(|l| l.pos).collect();
                (
                    RawBatch::Loc(items.iter().map(|l| l.y.clone()).collect()),
                    items.iter().map(|l| l.scene).collect(),
                    Target::Loc(Tensor::constant(&[b, 2], t)?),
                )
            }
            TaskId::Det => {
                let items: Vec<&DetSample> = idx.iter().map(|&i| &self.det[i]).collect();
                let t: Vec<f64> = items.iter().flat_map(|d| symbols_to_rows(&d.x)).collect();
                (
                    RawBatch::Det {
                        h: items.iter().map(|d| d.h.clone()).collect(),
                        y: items.iter().map(|d| d.y.clone()).collect(),
                    },
                    items.iter().map(|d| d.scene).collect(),
                    Target::Det(Tensor::constant(&[b, cfg.data_len, 2 * cfg.users], t)?),
                )
            }
            TaskId::Pre => {
                let items: Vec<&PreSample> = idx.iter().map(|&i| &self.pre[i]).collect();
                let a: Vec<f64> = items.iter().flat_map(|p| rate_operator(&p.h_true)).collect();
                (
                    RawBatch::Pre(items.iter().map(|p| p.h_noisy.clone()).collect()),
                    items.iter().map(|p| p.scene).collect(),
                    Target::Pre {
                        a: Tensor::constant(&[b, f, 2 * cfg.users], a)?,
                        sigma2: Tensor::constant(&[b, 1], items.iter().map(|p| p.sigma2).collect())?,
                    },
                )
            }
            TaskId::Dec => {
                let items: Vec<&DecSample> = idx.iter().map(|&i| &self.dec[i]).collect();
                let t: Vec<f64> = items.iter().flat_map(|d| d.z_tilde.iter().map(|&z| f64::from(z))).collect();
                (
                    RawBatch::Dec(items.iter().map(|d| d.s_tilde.clone()).collect()),
                    items.iter().map(|d| d.scene).collect(),
                    Target::Dec(Tensor::constant(&[b, cfg.code_n], t)?),
                )
            }
        };
        Ok(Batch { raw, graphs: scenes.into_iter().map(|s| &self.graphs[s]).collect(), target })
    }
}
