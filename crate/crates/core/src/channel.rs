//! Frequency-domain multipath channels for a UPA base station.
//!
//! For user `k` and subcarrier `m`
//!
//! ```text
//! h[m] = sum_l beta_l * exp(-j 2 pi f_m tau_l) * a_m(theta_l, phi_l)
//! ```
//!
//! with the UPA steering vector
//! `a_m[n_v * N_h + n_h] = exp(j k_m d (n_v sin(phi) sin(theta) + n_h cos(theta))) / sqrt(N_t)`.
//! Path gains are frequency-flat free-space amplitudes with a constant
//! reflection loss per bounce.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::propagation::{Path, PathList, SPEED_OF_LIGHT};
use crate::{seed, CMat, CVec, C64};

/// Amplitude reflection coefficient applied per bounce.
pub const REFLECTION_GAIN: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_h: usize,
    pub n_v: usize,
    /// Element spacing in metres.
    pub element_spacing_m: f64,
    pub carrier_hz: f64,
    pub subcarriers: usize,
    pub spacing_hz: f64,
}

impl ArrayGeometry {
    pub fn half_wavelength(n_h: usize, n_v: usize, carrier_hz: f64, subcarriers: usize, spacing_hz: f64) -> Self {
        Self {
            n_h,
            n_v,
            element_spacing_m: SPEED_OF_LIGHT / carrier_hz / 2.0,
            carrier_hz,
            subcarriers,
            spacing_hz,
        }
    }

    pub fn n_t(&self) -> usize {
        self.n_h * self.n_v
    }

    /// Frequency of subcarrier `m`, centred on the carrier.
    pub fn subcarrier_hz(&self, m: usize) -> f64 {
        self.carrier_hz + (m as f64 - (self.subcarriers as f64 - 1.0) / 2.0) * self.spacing_hz
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

/// UPA response towards `(theta, phi)` at frequency `f_hz`; unit norm.
pub fn steering_vector(theta: f64, phi: f64, f_hz: f64, geom: &ArrayGeometry) -> CVec {
    let k = 2.0 * std::f64::consts::PI * f_hz / SPEED_OF_LIGHT;
    let kd = k * geom.element_spacing_m;
    let v_step = phi.sin() * theta.sin();
    let h_step = theta.cos();
    let amp = 1.0 / (geom.n_t() as f64).sqrt();
    CVec::from_iterator(
        geom.n_t(),
        (0..geom.n_v).flat_map(|nv| {
            (0..geom.n_h).map(move |nh| {
                C64::from_polar(amp, kd * (nv as f64 * v_step + nh as f64 * h_step))
            })
        }),
    )
}

/// Complex gain of a path: free-space amplitude at the carrier times
/// [`REFLECTION_GAIN`] per bounce. Delay phase is applied in
/// [`assemble_channel`].
pub fn path_gain(path: &Path, geom: &ArrayGeometry) -> C64 {
    let lambda = geom.carrier_wavelength();
    let mag = lambda / (4.0 * std::f64::consts::PI * path.length)
        * REFLECTION_GAIN.powi(i32::from(path.n_bounces));
    C64::new(mag, 0.0)
}

/// N_t x M channel of one user from its traced paths.
pub fn assemble_channel(paths: &PathList, geom: &ArrayGeometry) -> CMat {
    assemble_from(&paths.paths, geom, |p| path_gain(p, geom))
}

/// Same as [`assemble_channel`] with caller-supplied path gains.
pub fn assemble_from(paths: &[Path], geom: &ArrayGeometry, gain: impl Fn(&Path) -> C64) -> CMat {
    let mut h = CMat::zeros(geom.n_t(), geom.subcarriers);
    for p in paths {
        let beta = gain(p);
        for m in 0..geom.subcarriers {
            let f = geom.subcarrier_hz(m);
            let coef = beta * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * p.delay);
            let a = steering_vector(p.aod_elevation, p.aod_azimuth, f, geom);
            let mut col = h.column_mut(m);
            col.axpy(coef, &a, C64::new(1.0, 0.0));
        }
    }
    h
}

/// Scale `h` so its mean per-subcarrier squared norm is `N_t`. Returns the
/// applied amplitude factor (`None` for an all-zero channel).
pub fn normalize_channel(h: &mut CMat) -> Option<f64> {
    let energy = h.norm_squared();
    if energy <= 0.0 || !energy.is_finite() {
        return None;
    }
    let scale = ((h.nrows() * h.ncols()) as f64 / energy).sqrt();
    *h *= C64::new(scale, 0.0);
    Some(scale)
}

/// Per-user channels of one drop, each N_t x M and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub h: Vec<CMat>,
    /// Amplitude factor that was applied to each user's raw channel.
    pub scale: Vec<f64>,
}

impl ChannelTensor {
    pub fn users(&self) -> usize {
        self.h.len()
    }

    /// N_t x K matrix of all users at subcarrier `m`.
    pub fn subcarrier(&self, m: usize) -> CMat {
        let n_t = self.h[0].nrows();
        CMat::from_fn(n_t, self.users(), |n, k| self.h[k][(n, m)])
    }
}

pub fn snr_to_sigma2(snr_db: f64, signal_power: f64) -> f64 {
    signal_power * 10f64.powf(-snr_db / 10.0)
}

/// Circularly-symmetric complex Gaussian noise with variance `sigma2` per
/// entry, filled in row-major order.
pub fn awgn_with(rng: &mut impl Rng, rows: usize, cols: usize, sigma2: f64) -> CMat {
    let s = (sigma2 / 2.0).sqrt();
    let mut out = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            out[(r, c)] = C64::new(re * s, im * s);
        }
    }
    out
}

pub fn awgn(rows: usize, cols: usize, sigma2: f64, seed: u64) -> CMat {
    awgn_with(&mut seed::rng(seed), rows, cols, sigma2)
}
