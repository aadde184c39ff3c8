//! Input/target synthesis for the five physical-layer tasks and their
//! evaluation metrics.
//!
//! Noise levels are given in dB against unit per-entry channel power, which
//! normalized channels satisfy on average.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{awgn_with, snr_to_sigma2};
use crate::polar::PolarCode;
use crate::scene::ROOM_SIDE;
use crate::{geom::Vec3, seed, CMat, Error, Result, C64};

/// `(1 - sign(x)) / 2` with `sign(0) = +1`.
pub fn bin(x: f64) -> u8 {
    u8::from(x < 0.0)
}

/// Sign with `sign(0) = +1`.
pub fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// How pilot antennas are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PilotSelection {
    /// Indices `floor(i * N_t / L_p)`.
    #[default]
    Even,
    /// `L_p` distinct indices drawn from the observation seed, sorted.
    Random,
}

pub fn even_selection(n_t: usize, l_p: usize) -> Vec<usize> {
    (0..l_p).map(|i| i * n_t / l_p).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    /// `L_p x M` received pilots.
    pub y: CMat,
    /// Antenna index observed by each pilot row (rows of `W_s`).
    pub selection: Vec<usize>,
    pub snr_db: f64,
    pub user: usize,
}

impl PilotObservation {
    /// Dense `L_p x N_t` selection matrix.
    pub fn selection_matrix(&self, n_t: usize) -> CMat {
        let mut w = CMat::zeros(self.selection.len(), n_t);
        for (r, &c) in self.selection.iter().enumerate() {
            w[(r, c)] = C64::new(1.0, 0.0);
        }
        w
    }
}

pub fn make_pilot_obs(h_k: &CMat, l_p: usize, snr_db: f64, seed: u64) -> Result<PilotObservation> {
    make_pilot_obs_with(h_k, l_p, snr_db, seed, PilotSelection::Even)
}

pub fn make_pilot_obs_with(
    h_k: &CMat,
    l_p: usize,
    snr_db: f64,
    seed: u64,
    mode: PilotSelection,
) -> Result<PilotObservation> {
    let n_t = h_k.nrows();
    if l_p == 0 || l_p > n_t {
        return Err(Error::InvalidArgument(format!("pilot length {l_p} outside 1..={n_t}")));
    }
    let mut rng = seed::rng(seed);
    let selection = match mode {
        PilotSelection::Even => even_selection(n_t, l_p),
        PilotSelection::Random => {
            let mut s = sample(&mut rng, n_t, l_p).into_vec();
            s.sort_unstable();
            s
        }
    };
    let noise = awgn_with(&mut rng, l_p, h_k.ncols(), snr_to_sigma2(snr_db, 1.0));
    let y = CMat::from_fn(l_p, h_k.ncols(), |r, c| h_k[(selection[r], c)] + noise[(r, c)]);
    Ok(PilotObservation { y, selection, snr_db, user: 0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSample {
    /// `N_t x K` channel at the chosen subcarrier.
    pub h: CMat,
    /// `N_t x L_d` received block.
    pub y: CMat,
    /// `K x L_d` transmitted QPSK symbols.
    pub x: CMat,
    pub snr_db: f64,
    pub subcarrier: usize,
}

pub fn qpsk_symbol(re_bit: bool, im_bit: bool) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(if re_bit { -s } else { s }, if im_bit { -s } else { s })
}

pub fn make_detection_sample(h_m: &CMat, l_d: usize, snr_db: f64, seed: u64) -> Result<DetectionSample> {
    let (n_t, k) = h_m.shape();
    if k == 0 || k > n_t {
        return Err(Error::InvalidArgument(format!("{k} users for {n_t} antennas")));
    }
    let mut rng = seed::rng(seed);
    let mut x = CMat::zeros(k, l_d);
    for r in 0..k {
        for c in 0..l_d {
            x[(r, c)] = qpsk_symbol(rng.gen(), rng.gen());
        }
    }
    let noise = awgn_with(&mut rng, n_t, l_d, snr_to_sigma2(snr_db, 1.0));
    let y = h_m * &x + noise;
    Ok(DetectionSample { h: h_m.clone(), y, x, snr_db, subcarrier: 0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingSample {
    pub h_true: CMat,
    pub h_noisy: CMat,
    pub sigma2: f64,
    pub p_max: f64,
    pub subcarrier: usize,
}

/// CSI corrupted at `snr_db`; the receivers see noise of the same level.
pub fn make_precoding_sample(h_m: &CMat, snr_db: f64, p_max: f64, seed: u64) -> PrecodingSample {
    let sigma2 = snr_to_sigma2(snr_db, 1.0);
    let noise = awgn_with(&mut seed::rng(seed), h_m.nrows(), h_m.ncols(), sigma2);
    PrecodingSample { h_true: h_m.clone(), h_noisy: h_m + noise, sigma2, p_max, subcarrier: 0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodingSample {
    pub b: Vec<u8>,
    pub s_code: Vec<u8>,
    pub s_bpsk: Vec<f64>,
    pub s_hat: Vec<f64>,
    /// `[|s_hat|, P bin(sign(s_hat))]`, length `2n - m`.
    pub s_tilde: Vec<f64>,
    /// `bin(sign(s_hat * s_bpsk))`.
    pub z_tilde: Vec<u8>,
    pub ebn0_db: f64,
}

pub fn ebn0_to_sigma2(ebn0_db: f64, rate: f64) -> f64 {
    1.0 / (2.0 * rate * 10f64.powf(ebn0_db / 10.0))
}

/// ECCT input vector `[|s_hat|, syndrome of the hard decision]`.
pub fn ecct_preprocess(s_hat: &[f64], code: &PolarCode) -> Vec<f64> {
    let hard: Vec<u8> = s_hat.iter().map(|&v| bin(v)).collect();
    let mut out: Vec<f64> = s_hat.iter().map(|v| v.abs()).collect();
    out.extend(code.syndrome(&hard).into_iter().map(f64::from));
    out
}

pub fn random_bits(m: usize, seed: u64) -> Vec<u8> {
    let mut rng = seed::rng(seed);
    (0..m).map(|_| u8::from(rng.gen::<bool>())).collect()
}

pub fn make_decoding_sample(b: &[u8], code: &PolarCode, ebn0_db: f64, seed: u64) -> Result<DecodingSample> {
    let sigma = ebn0_to_sigma2(ebn0_db, code.rate()).sqrt();
    make_decoding_sample_with_sigma(b, code, ebn0_db, sigma, seed)
}

fn make_decoding_sample_with_sigma(
    b: &[u8],
    code: &PolarCode,
    ebn0_db: f64,
    sigma: f64,
    seed: u64,
) -> Result<DecodingSample> {
    let s_code = code.encode(b)?;
    let s_bpsk: Vec<f64> = s_code.iter().map(|&c| 1.0 - 2.0 * f64::from(c)).collect();
    let mut rng = seed::rng(seed);
    let s_hat: Vec<f64> = s_bpsk
        .iter()
        .map(|&s| s + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let s_tilde = ecct_preprocess(&s_hat, code);
    let z_tilde = s_hat.iter().zip(&s_bpsk).map(|(&a, &b)| bin(sign(a * b))).collect();
    Ok(DecodingSample { b: b.to_vec(), s_code, s_bpsk, s_hat, s_tilde, z_tilde, ebn0_db })
}

/// Noiseless decoding sample (used to check the clean-codeword properties).
pub fn make_clean_decoding_sample(b: &[u8], code: &PolarCode) -> Result<DecodingSample> {
    make_decoding_sample_with_sigma(b, code, f64::INFINITY, 0.0, 0)
}

/// Maps predicted flip probabilities to multiplicative-noise signs.
pub fn probs_to_signs(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&v| sign(1.0 - 2.0 * v)).collect()
}

/// `bin(sign(s_hat * z_hat))`: hard codeword estimate.
pub fn ecct_postprocess(s_hat: &[f64], z_hat: &[f64]) -> Result<Vec<u8>> {
    if s_hat.len() != z_hat.len() {
        return Err(Error::ShapeMismatch(format!(
            "s_hat has {} entries, z_hat {}",
            s_hat.len(),
            z_hat.len()
        )));
    }
    Ok(s_hat.iter().zip(z_hat).map(|(&s, &z)| bin(sign(s * z))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationSample {
    pub obs: PilotObservation,
    /// Position normalized to `[0, 1]^2` by the room side.
    pub pos: [f64; 2],
}

pub fn normalize_position(p: Vec3) -> [f64; 2] {
    [(p.x + ROOM_SIDE / 2.0) / ROOM_SIDE, (p.y + ROOM_SIDE / 2.0) / ROOM_SIDE]
}

pub fn make_localization_sample(
    h_k: &CMat,
    pos: Vec3,
    l_p: usize,
    snr_db: f64,
    seed: u64,
) -> Result<LocalizationSample> {
    Ok(LocalizationSample { obs: make_pilot_obs(h_k, l_p, snr_db, seed)?, pos: normalize_position(pos) })
}

/// Per-user SINRs for precoders `w` (columns) over channels `h` (columns).
pub fn sinrs(h: &CMat, w: &CMat, sigma2: f64) -> Result<Vec<f64>> {
    if sigma2 <= 0.0 {
        return Err(Error::InvalidArgument(format!("noise variance {sigma2} must be positive")));
    }
    if h.shape() != w.shape() {
        return Err(Error::ShapeMismatch(format!("H {:?} vs W {:?}", h.shape(), w.shape())));
    }
    let g = h.adjoint() * w;
    let k = h.ncols();
    Ok((0..k)
        .map(|i| {
            let total: f64 = (0..k).map(|j| g[(i, j)].norm_sqr()).sum();
            let s = g[(i, i)].norm_sqr();
            s / (total - s + sigma2)
        })
        .collect())
}

pub fn sum_rate(h: &CMat, w: &CMat, sigma2: f64) -> Result<f64> {
    Ok(sinrs(h, w, sigma2)?.iter().map(|g| (1.0 + g).log2()).sum())
}

pub fn nmse(est: &CMat, truth: &CMat) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", est.shape(), truth.shape())));
    }
    let den = truth.norm_squared();
    if den == 0.0 {
        return Err(Error::InvalidArgument("nmse against an all-zero reference".into()));
    }
    Ok((est - truth).norm_squared() / den)
}

pub fn nmse_real(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", est.len(), truth.len())));
    }
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("nmse against an all-zero reference".into()));
    }
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum::<f64>() / den)
}

pub fn ber(est: &[u8], truth: &[u8]) -> Result<f64> {
    if est.len() != truth.len() || truth.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} vs {} bits", est.len(), truth.len())));
    }
    let errs = est.iter().zip(truth).filter(|(a, b)| (*a & 1) != (*b & 1)).count();
    Ok(errs as f64 / truth.len() as f64)
}

pub fn loc_error(est: [f64; 2], truth: [f64; 2]) -> f64 {
    (est[0] - truth[0]).hypot(est[1] - truth[1])
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
