//! Model-based reference algorithms.

use nalgebra::linalg::SymmetricEigen;

use crate::phytasks::{sum_rate, PilotObservation};
use crate::{CMat, Error, Result, C64};

/// Minimum-norm least squares per subcarrier: `W_s^H (W_s W_s^H)^-1 Y_p`.
/// With a distinct-row selection `W_s W_s^H = I`, so observed antenna rows are
/// copied and the others are zero.
pub fn ls_estimate(obs: &PilotObservation, n_t: usize) -> Result<CMat> {
    let mut seen = vec![false; n_t];
    for &s in &obs.selection {
        if s >= n_t || seen[s] {
            return Err(Error::Singular("pilot selection with repeated or out-of-range antenna"));
        }
        seen[s] = true;
    }
    let mut h = CMat::zeros(n_t, obs.y.ncols());
    for (r, &s) in obs.selection.iter().enumerate() {
        h.row_mut(s).copy_from(&obs.y.row(r));
    }
    Ok(h)
}

fn gram_solve(h: &CMat, y: &CMat, ridge: f64, what: &'static str) -> Result<CMat> {
    if h.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch(format!("H has {} rows, y {}", h.nrows(), y.nrows())));
    }
    let hh = h.adjoint();
    let mut g = &hh * h;
    for i in 0..g.nrows() {
        g[(i, i)] += C64::new(ridge, 0.0);
    }
    let chol = g.cholesky().ok_or(Error::Singular(what))?;
    Ok(chol.solve(&(hh * y)))
}

/// `(H^H H)^-1 H^H y`, column-wise for a block `y`.
pub fn zf_detect(h: &CMat, y: &CMat) -> Result<CMat> {
    gram_solve(h, y, 0.0, "H^H H in zero-forcing detection")
}

/// `(H^H H + sigma2 I)^-1 H^H y`.
pub fn lmmse_detect(h: &CMat, y: &CMat, sigma2: f64) -> Result<CMat> {
    if sigma2 < 0.0 {
        return Err(Error::InvalidArgument(format!("negative noise variance {sigma2}")));
    }
    gram_solve(h, y, sigma2, "regularized Gram matrix in LMMSE detection")
}

/// Channel-inversion precoder with equal per-user power summing to `p_max`.
pub fn zf_precode(h: &CMat, p_max: f64) -> Result<CMat> {
    let (n_t, k) = h.shape();
    if k > n_t {
        return Err(Error::Singular("more users than antennas in ZF precoding"));
    }
    let eye = CMat::identity(k, k);
    let inv_gram = (h.adjoint() * h)
        .cholesky()
        .ok_or(Error::Singular("rank-deficient channel in ZF precoding"))?
        .solve(&eye);
    let mut w = h * inv_gram;
    let per_user = p_max / k as f64;
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Singular("rank-deficient channel in ZF precoding"));
        }
        col *= C64::new(per_user.sqrt() / n, 0.0);
    }
    Ok(w)
}

/// Matched-filter precoder, `sqrt(p_max / K) h_k / |h_k|` per user.
pub fn mrt_precode(h: &CMat, p_max: f64) -> CMat {
    let per_user = (p_max / h.ncols() as f64).sqrt();
    let mut w = h.clone();
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col *= C64::new(per_user / n, 0.0);
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub v: CMat,
    pub u: Vec<C64>,
    pub w: Vec<f64>,
    pub mu: f64,
    /// Sum rate of the initial point followed by one entry per iteration.
    pub rate_trace: Vec<f64>,
}

/// Weighted-MMSE sum-rate maximization for single-antenna users, started
/// from the matched filter. Returns the best iterate seen.
pub fn wmmse_precode(h: &CMat, p_max: f64, sigma2: f64, iters: usize, tol: f64) -> Result<WmmseState> {
    if iters == 0 {
        return Err(Error::InvalidArgument("WMMSE needs at least one iteration".into()));
    }
    let (n_t, k) = h.shape();
    let mut v = mrt_precode(h, p_max);
    let mut rate = sum_rate(h, &v, sigma2)?;
    let mut state = WmmseState {
        v: v.clone(),
        u: vec![C64::new(0.0, 0.0); k],
        w: vec![1.0; k],
        mu: 0.0,
        rate_trace: vec![rate],
    };
    let mut best = rate;
    for _ in 0..iters {
        let g = h.adjoint() * &v;
        let mut u = Vec::with_capacity(k);
        let mut wts = Vec::with_capacity(k);
        for i in 0..k {
            let total: f64 = (0..k).map(|j| g[(i, j)].norm_sqr()).sum::<f64>() + sigma2;
            u.push(g[(i, i)] / total);
            let mse = 1.0 - g[(i, i)].norm_sqr() / total;
            wts.push(1.0 / mse.max(1e-300));
        }
        let mut a = CMat::zeros(n_t, n_t);
        for j in 0..k {
            let hj = h.column(j);
            let c = wts[j] * u[j].norm_sqr();
            a += (&hj * hj.adjoint()) * C64::new(c, 0.0);
        }
        let a = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        let b = CMat::from_fn(n_t, k, |n, j| h[(n, j)] * u[j] * wts[j]);
        let (v_new, mu) = power_constrained_solve(a, &b, p_max);
        let new_rate = sum_rate(h, &v_new, sigma2)?;
        state.rate_trace.push(new_rate);
        v = v_new;
        if new_rate > best {
            best = new_rate;
            state.v = v.clone();
            state.u = u;
            state.w = wts;
            state.mu = mu;
        }
        let gain = new_rate - rate;
        rate = new_rate;
        if gain < tol {
            break;
        }
    }
    Ok(state)
}

/// Solves `(A + mu I) V = B` with the smallest `mu >= 0` such that
/// `|V|_F^2 <= p_max`. Directions with negligible eigenvalue and negligible
/// projection are treated as a pseudo-inverse null space.
fn power_constrained_solve(a: CMat, b: &CMat, p_max: f64) -> (CMat, f64) {
    let eig = SymmetricEigen::new(a);
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let u = eig.eigenvectors;
    let proj = u.adjoint() * b;
    let weight: Vec<f64> = (0..proj.nrows()).map(|i| proj.row(i).norm_squared()).collect();
    let total: f64 = weight.iter().sum();
    let lam_max = lam.iter().cloned().fold(0.0, f64::max);
    let null = |i: usize| weight[i] <= 1e-14 * total && lam[i] <= 1e-12 * lam_max.max(1e-300);
    let power = |mu: f64| -> f64 {
        (0..lam.len())
            .filter(|&i| !null(i))
            .map(|i| {
                let d = lam[i] + mu;
                if d > 0.0 {
                    weight[i] / (d * d)
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    };
    let mu = if power(0.0) <= p_max {
        0.0
    } else {
        let mut hi = lam_max.max(1e-12);
        while power(hi) > p_max {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while power(lo) - power(hi) > 1e-10 && hi - lo > 1e-15 * hi {
            let mid = 0.5 * (lo + hi);
            if power(mid) > p_max {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let mut scaled = proj;
    for i in 0..lam.len() {
        let d = lam[i] + mu;
        let f = if null(i) || d <= 0.0 { 0.0 } else { 1.0 / d };
        scaled.row_mut(i).scale_mut(f);
    }
    (u * scaled, mu)
}

/// Sum rate of zero-forcing with equal power; convenience for comparisons.
pub fn zf_sum_rate(h: &CMat, p_max: f64, sigma2: f64) -> Result<f64> {
    sum_rate(h, &zf_precode(h, p_max)?, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::awgn;
    use crate::phytasks::make_pilot_obs;

    #[test]
    fn ls_partial_selection() {
        let h = awgn(8, 2, 1.0, 3);
        let obs = make_pilot_obs(&h, 4, f64::INFINITY, 0).unwrap();
        let est = ls_estimate(&obs, 8).unwrap();
        for r in 0..8 {
            for c in 0..2 {
                let want = if r % 2 == 0 { h[(r, c)] } else { C64::new(0.0, 0.0) };
                assert_eq!(est[(r, c)], want);
            }
        }
    }

    #[test]
    fn scalar_lmmse() {
        let h = CMat::from_element(1, 1, C64::new(1.0, 0.0));
        let y = CMat::from_element(1, 1, C64::new(1.0, 0.0));
        let x = lmmse_detect(&h, &y, 1.0).unwrap();
        assert!((x[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zf_detect_singular() {
        let h = CMat::zeros(4, 2);
        assert!(zf_detect(&h, &CMat::zeros(4, 1)).is_err());
    }

    #[test]
    fn zf_precoder_nulls_interference() {
        let h = awgn(16, 4, 1.0, 7);
        let w = zf_precode(&h, 1.0).unwrap();
        assert!((w.norm_squared() - 1.0).abs() < 1e-12);
        let g = h.adjoint() * &w;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(g[(i, j)].norm_sqr() < 1e-20);
                }
            }
        }
    }

    #[test]
    fn single_user_wmmse_is_mrt() {
        let h = awgn(8, 1, 1.0, 11);
        let st = wmmse_precode(&h, 2.0, 0.1, 50, 1e-12).unwrap();
        let want = (1.0 + 2.0 * h.norm_squared() / 0.1).log2();
        assert!((st.rate_trace.last().unwrap() - want).abs() < 1e-6);
        assert!(st.v.norm_squared() <= 2.0 + 1e-9);
    }

    #[test]
    fn wmmse_respects_power() {
        let h = awgn(16, 4, 1.0, 12);
        let st = wmmse_precode(&h, 1.0, 0.1, 100, 1e-9).unwrap();
        assert!(st.v.norm_squared() <= 1.0 + 1e-9);
        assert!(st.w.iter().all(|&w| w > 0.0));
    }
}
