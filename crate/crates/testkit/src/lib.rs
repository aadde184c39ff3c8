//! Reference computations for tests.
//!
//! Everything here is written directly from the defining formulas, on plain
//! arrays, without calling into the library crates, so it can serve as an
//! independent oracle.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const C: f64 = 299_792_458.0;

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn golden_min(lo: f64, hi: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Shortest `tx -> plane -> rx` length by direct minimization of
/// `|tx - P| + |P - rx|` over points `P` of the plane `x[axis] = coord`
/// (Fermat's principle). Returns the length and the minimizing point.
pub fn fermat_reflection(tx: [f64; 3], rx: [f64; 3], axis: usize, coord: f64) -> (f64, [f64; 3]) {
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let (u, v) = (others[0], others[1]);
    let span = |i: usize| (tx[i].min(rx[i]) - 1.0, tx[i].max(rx[i]) + 1.0);
    let point = |a: f64, b: f64| {
        let mut p = [0.0; 3];
        p[axis] = coord;
        p[u] = a;
        p[v] = b;
        p
    };
    let cost = |p: [f64; 3]| dist3(tx, p) + dist3(p, rx);
    let (ulo, uhi) = span(u);
    let (vlo, vhi) = span(v);
    let inner = |a: f64| golden_min(vlo, vhi, 120, |b| cost(point(a, b)));
    let a = golden_min(ulo, uhi, 120, |a| cost(point(a, inner(a))));
    let p = point(a, inner(a));
    (cost(p), p)
}

/// Dense-sampling blockage test: `n` interior points of the segment `p q`
/// are checked against `inside`.
pub fn sampled_blocked(p: [f64; 2], q: [f64; 2], n: usize, inside: impl Fn([f64; 2]) -> bool) -> bool {
    (1..=n).any(|i| {
        let t = i as f64 / (n + 1) as f64;
        inside([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])])
    })
}

/// Axis-aligned obstacle footprint `[lo, hi]` (closed).
#[derive(Debug, Clone, Copy)]
pub struct RectObstacle {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

/// Circular obstacle footprint (open disc).
#[derive(Debug, Clone, Copy)]
pub struct DiscObstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Reflecting rectangle in the plane `x[axis] = coord`; `lo`/`hi` bound the
/// two remaining coordinates in increasing axis order.
#[derive(Debug, Clone, Copy)]
pub struct Mirror {
    pub axis: usize,
    pub coord: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

pub fn inside_obstacle(p: [f64; 2], rects: &[RectObstacle], discs: &[DiscObstacle]) -> bool {
    rects
        .iter()
        .any(|r| p[0] >= r.lo[0] && p[0] <= r.hi[0] && p[1] >= r.lo[1] && p[1] <= r.hi[1])
        || discs
            .iter()
            .any(|d| (p[0] - d.center[0]).hypot(p[1] - d.center[1]) < d.radius)
}

/// Sorted lengths of the LOS and single-bounce paths between `tx` and `rx`:
/// reflection points from [`fermat_reflection`], blockage from
/// [`sampled_blocked`] with `samples` points per leg.
pub fn oracle_path_lengths(
    tx: [f64; 3],
    rx: [f64; 3],
    rects: &[RectObstacle],
    discs: &[DiscObstacle],
    mirrors: &[Mirror],
    samples: usize,
) -> Vec<f64> {
    let inside = |p: [f64; 2]| inside_obstacle(p, rects, discs);
    let xy = |p: [f64; 3]| [p[0], p[1]];
    let mut out = Vec::new();
    if !sampled_blocked(xy(tx), xy(rx), samples, inside) {
        out.push(dist3(tx, rx));
    }
    for m in mirrors {
        let st = tx[m.axis] - m.coord;
        let sr = rx[m.axis] - m.coord;
        if st == 0.0 || sr == 0.0 || st.signum() != sr.signum() {
            continue;
        }
        let (len, p) = fermat_reflection(tx, rx, m.axis, m.coord);
        let others: Vec<usize> = (0..3).filter(|&a| a != m.axis).collect();
        let on_face = others
            .iter()
            .enumerate()
            .all(|(k, &a)| p[a] >= m.lo[k] - 1e-9 && p[a] <= m.hi[k] + 1e-9);
        if !on_face {
            continue;
        }
        if sampled_blocked(xy(tx), xy(p), samples, inside) || sampled_blocked(xy(p), xy(rx), samples, inside) {
            continue;
        }
        out.push(len);
    }
    out.sort_by(f64::total_cmp);
    out
}

/// One ray: complex gain, delay (s), elevation and azimuth (rad).
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub gain: C64,
    pub delay: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Channel vector at frequency `f` written out element by element:
/// `sum_l g_l e^{-j 2 pi f tau_l} e^{j k d (n_v sin(phi) sin(theta) + n_h cos(theta))} / sqrt(N_t)`
/// with element index `n_v * n_h_count + n_h`.
pub fn direct_channel(rays: &[Ray], n_h: usize, n_v: usize, spacing: f64, f: f64) -> Vec<C64> {
    let n_t = n_h * n_v;
    let k = 2.0 * std::f64::consts::PI * f / C;
    let mut out = vec![C64::new(0.0, 0.0); n_t];
    for nv in 0..n_v {
        for nh in 0..n_h {
            let mut acc = C64::new(0.0, 0.0);
            for r in rays {
                let delay_ph = -2.0 * std::f64::consts::PI * f * r.delay;
                let arr_ph =
                    k * spacing * (nv as f64 * r.phi.sin() * r.theta.sin() + nh as f64 * r.theta.cos());
                let ph = delay_ph + arr_ph;
                acc += r.gain * C64::new(ph.cos(), ph.sin()) / (n_t as f64).sqrt();
            }
            out[nv * n_h + nh] = acc;
        }
    }
    out
}

/// Explicit Kronecker power of `F = [[1,0],[1,1]]`.
pub fn kron_generator(n: usize) -> Vec<Vec<u8>> {
    let mut g = vec![vec![1u8]];
    while g.len() < n {
        let s = g.len();
        let mut next = vec![vec![0u8; 2 * s]; 2 * s];
        for (bi, bj, f) in [(0, 0, 1u8), (0, 1, 0), (1, 0, 1), (1, 1, 1)] {
            for i in 0..s {
                for j in 0..s {
                    next[bi * s + i][bj * s + j] = f & g[i][j];
                }
            }
        }
        g = next;
    }
    g
}

/// GF(2) product of bit matrices.
pub fn gf2_matmul(a: &[Vec<u8>], b: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).fold(0u8, |acc, k| acc ^ (row[k] & b[k][c])))
                .collect()
        })
        .collect()
}

/// Row vector times matrix over GF(2).
pub fn gf2_vecmat(v: &[u8], m: &[Vec<u8>]) -> Vec<u8> {
    gf2_matmul(&[v.to_vec()], m).remove(0)
}

/// Gaussian elimination with partial pivoting on a dense complex system.
pub fn gauss_solve(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Vec<C64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .expect("non-empty");
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                let t = a[col][c];
                a[r][c] -= f * t;
            }
            let t = b[col];
            b[r] -= f * t;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    x
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xs[i];
            xs[i] = orig + h;
            let fp = f(&xs);
            xs[i] = orig - h;
            let fm = f(&xs);
            xs[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)` in the infinity norm.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = a.iter().chain(b).map(|v| v.abs()).fold(floor, f64::max);
    num / den
}

/// Monte-Carlo mean distance between two independent uniform points of the
/// unit square.
pub fn mean_uniform_square_distance(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let (a, b, c, d): (f64, f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen(), rng.gen());
        acc += (a - c).hypot(b - d);
    }
    acc / samples as f64
}
