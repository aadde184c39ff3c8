//! Conversions between extracted output tensors and task-domain values.

use musefm_core::phytasks::{ecct_postprocess, probs_to_signs};
use musefm_core::polar::PolarCode;
use musefm_core::{CMat, C64};

use crate::config::ModelConfig;
use crate::error::Result;
use crate::preprocess::interleave_column;

/// Interleaved rows (one per matrix column) back to a complex matrix:
/// `rows[c]` holds column `c` of an `nrows x ncols` result.
pub fn rows_to_columns(rows: &[f64], nrows: usize, ncols: usize) -> CMat {
    CMat::from_fn(nrows, ncols, |r, c| {
        let base = c * 2 * nrows + 2 * r;
        C64::new(rows[base], rows[base + 1])
    })
}

/// Inverse of [`rows_to_columns`].
pub fn columns_to_rows(m: &CMat) -> Vec<f64> {
    let n = 2 * m.nrows();
    let mut out = vec![0.0; n * m.ncols()];
    for c in 0..m.ncols() {
        interleave_column(m, c, &mut out[c * n..(c + 1) * n]);
    }
    out
}

/// `[B, M, 2 N_t]` to `N_t x M` channel estimates.
pub fn to_channels(values: &[f64], cfg: &ModelConfig) -> Vec<CMat> {
    let per = cfg.subcarriers * cfg.features();
    values.chunks(per).map(|v| rows_to_columns(v, cfg.n_t, cfg.subcarriers)).collect()
}

/// `[B, K, 2 N_t]` to `N_t x K` precoders.
pub fn to_precoders(values: &[f64], cfg: &ModelConfig) -> Vec<CMat> {
    let per = cfg.users * cfg.features();
    values.chunks(per).map(|v| rows_to_columns(v, cfg.n_t, cfg.users)).collect()
}

/// `[B, L_d, 2 K]` to `K x L_d` symbol blocks.
pub fn to_symbols(values: &[f64], cfg: &ModelConfig) -> Vec<CMat> {
    let per = cfg.data_len * 2 * cfg.users;
    values.chunks(per).map(|v| rows_to_columns(v, cfg.users, cfg.data_len)).collect()
}

/// Interleaved `[L_d, 2K]` target layout of a `K x L_d` symbol block.
pub fn symbols_to_rows(x: &CMat) -> Vec<f64> {
    columns_to_rows(x)
}

pub fn to_positions(values: &[f64]) -> Vec<[f64; 2]> {
    values.chunks(2).map(|v| [v[0], v[1]]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedBlock {
    /// Predicted flip probabilities.
    pub p_hat: Vec<f64>,
    pub codeword: Vec<u8>,
    pub bits: Vec<u8>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Noise probabilities from logits, hard codeword `bin(sign(s_hat * z_hat))`,
/// then the information bits.
pub fn decode_block(logits: &[f64], s_hat: &[f64], code: &PolarCode) -> Result<DecodedBlock> {
    let p_hat: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    decode_with_probs(p_hat, s_hat, code)
}

pub fn decode_with_probs(p_hat: Vec<f64>, s_hat: &[f64], code: &PolarCode) -> Result<DecodedBlock> {
    let codeword = ecct_postprocess(s_hat, &probs_to_signs(&p_hat))?;
    let bits = code.extract_info(&codeword)?;
    Ok(DecodedBlock { p_hat, codeword, bits })
}
