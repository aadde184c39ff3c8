//! Differentiable primitives. Every op checks shapes up front and rejects
//! non-finite results.

use crate::error::{shape_err, Result};
use crate::tensor::{numel, Ctx, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        st[d] = st[d + 1] * shape[d + 1];
    }
    st
}

/// Source offset of every element of `out_shape` when dimension `d` of the
/// output advances the source by `st[d]`.
fn strided_map(out_shape: &[usize], st: &[usize]) -> Vec<usize> {
    let n = numel(out_shape);
    let nd = out_shape.len();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; nd];
    let mut cur = 0usize;
    for _ in 0..n {
        map.push(cur);
        for d in (0..nd).rev() {
            idx[d] += 1;
            cur += st[d];
            if idx[d] < out_shape[d] {
                break;
            }
            cur -= st[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    map
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let nd = a.len().max(b.len());
    let dim = |s: &[usize], d: usize| if d < nd - s.len() { 1 } else { s[d - (nd - s.len())] };
    (0..nd)
        .map(|d| match (dim(a, d), dim(b, d)) {
            (x, y) if x == y => Ok(x),
            (1, y) => Ok(y),
            (x, 1) => Ok(x),
            _ => Err(shape_err(op, format!("cannot broadcast {a:?} with {b:?}"))),
        })
        .collect()
}

/// `None` when no broadcasting is needed.
fn index_map(src: &[usize], out: &[usize]) -> Option<Vec<usize>> {
    if src == out {
        return None;
    }
    let off = out.len() - src.len();
    let src_st = strides(src);
    let mut st = vec![0; out.len()];
    for d in 0..src.len() {
        if src[d] != 1 {
            st[d + off] = src_st[d];
        }
    }
    Some(strided_map(out, &st))
}

#[inline]
fn at(map: &Option<Vec<usize>>, i: usize) -> usize {
    map.as_ref().map_or(i, |m| m[i])
}

/// `C (+)= A B` for an `m x k` by `k x n` product with arbitrary operand
/// strides and a row-major `C`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_st: (usize, usize), b: &[f64], b_st: (usize, usize), c: &mut [f64], accumulate: bool) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    assert!(a.len() > (m - 1) * a_st.0 + (k - 1) * a_st.1);
    assert!(b.len() > (k - 1) * b_st.0 + (n - 1) * b_st.1);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_st.0 as isize,
            a_st.1 as isize,
            b.as_ptr(),
            b_st.0 as isize,
            b_st.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(shape_err(op, format!("axis {axis} out of range for {shape:?}")));
    }
    Ok((numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..])))
}

fn last_dim(op: &'static str, shape: &[usize]) -> Result<usize> {
    match shape.last() {
        Some(&n) if n > 0 => Ok(n),
        _ => Err(shape_err(op, format!("needs a non-empty last axis, got {shape:?}"))),
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

impl Tensor {
    fn binary(
        &self,
        other: &Tensor,
        op: &'static str,
        f: fn(f64, f64) -> f64,
        da: fn(f64, f64) -> f64,
        db: fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let shape = broadcast_shape(op, self.shape(), other.shape())?;
        let n = numel(&shape);
        let ma = index_map(self.shape(), &shape);
        let mb = index_map(other.shape(), &shape);
        let out = {
            let (av, bv) = (self.values(), other.values());
            (0..n).map(|i| f(av[at(&ma, i)], bv[at(&mb, i)])).collect()
        };
        let back = move |c: &Ctx| {
            let (av, bv) = (c.parents[0].values(), c.parents[1].values());
            let mut ga = c.parents[0].requires_grad().then(|| vec![0.0; av.len()]);
            let mut gb = c.parents[1].requires_grad().then(|| vec![0.0; bv.len()]);
            for i in 0..n {
                let (ia, ib) = (at(&ma, i), at(&mb, i));
                let (x, y, g) = (av[ia], bv[ib], c.grad[i]);
                if let Some(ga) = ga.as_mut() {
                    ga[ia] += g * da(x, y);
                }
                if let Some(gb) = gb.as_mut() {
                    gb[ib] += g * db(x, y);
                }
            }
            vec![ga, gb]
        };
        Tensor::from_op(shape, out, vec![self.clone(), other.clone()], op, Box::new(back))
    }

    /// `df(x, y)` is the derivative given the input and output values.
    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Tensor> {
        let out = self.values().iter().map(|&x| f(x)).collect();
        let back = move |c: &Ctx| {
            let xv = c.parents[0].values();
            vec![Some(xv.iter().zip(c.out).zip(c.grad).map(|((&x, &y), &g)| g * df(x, y)).collect())]
        };
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], op, Box::new(back))
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "add", |x, y| x + y, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "sub", |x, y| x - y, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "mul", |x, y| x * y, |_, y| y, |x, _| x)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "div", |x, y| x / y, |_, y| 1.0 / y, |x, y| -x / (y * y))
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.unary("neg", |x| -x, |_, _| -1.0)
    }

    pub fn scale(&self, s: f64) -> Result<Tensor> {
        self.unary("scale", move |x| s * x, move |_, _| s)
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        self.unary("add_scalar", move |x| x + s, |_, _| 1.0)
    }

    pub fn square(&self) -> Result<Tensor> {
        self.unary("square", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.unary("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn log(&self) -> Result<Tensor> {
        self.unary("log", f64::ln, |x, _| 1.0 / x)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary("sigmoid", stable_sigmoid, |_, y| y * (1.0 - y))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Result<Tensor> {
        self.unary(
            "gelu",
            |x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            |x, _| {
                let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            },
        )
    }

    /// `[..., m, k] x [k, n]` (shared right operand) or `[..., m, k] x [..., k, n]`
    /// with identical leading dimensions.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (ash, bsh) = (self.shape().to_vec(), other.shape().to_vec());
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(shape_err("matmul", format!("operands must be at least 2-D, got {ash:?} and {bsh:?}")));
        }
        let (na, nb) = (ash.len(), bsh.len());
        let (m, k) = (ash[na - 2], ash[na - 1]);
        let (k2, n) = (bsh[nb - 2], bsh[nb - 1]);
        if k != k2 {
            return Err(shape_err("matmul", format!("inner dimensions differ: {ash:?} x {bsh:?}")));
        }
        let shared = nb == 2;
        if !shared && ash[..na - 2] != bsh[..nb - 2] {
            return Err(shape_err("matmul", format!("batch dimensions differ: {ash:?} x {bsh:?}")));
        }
        let mut shape = ash[..na - 1].to_vec();
        shape.push(n);
        let batch = numel(&ash[..na - 2]);
        let mut out = vec![0.0; numel(&shape)];
        {
            let (av, bv) = (self.values(), other.values());
            if shared {
                gemm(batch * m, k, n, &av, (k, 1), &bv, (n, 1), &mut out, false);
            } else {
                for i in 0..batch {
                    gemm(m, k, n, &av[i * m * k..], (k, 1), &bv[i * k * n..], (n, 1), &mut out[i * m * n..], false);
                }
            }
        }
        let back = move |c: &Ctx| {
            let (av, bv) = (c.parents[0].values(), c.parents[1].values());
            let g = c.grad;
            let ga = c.parents[0].requires_grad().then(|| {
                let mut ga = vec![0.0; av.len()];
                if shared {
                    gemm(batch * m, n, k, g, (n, 1), &bv, (1, n), &mut ga, false);
                } else {
                    for i in 0..batch {
                        gemm(m, n, k, &g[i * m * n..], (n, 1), &bv[i * k * n..], (1, n), &mut ga[i * m * k..], false);
                    }
                }
                ga
            });
            let gb = c.parents[1].requires_grad().then(|| {
                let mut gb = vec![0.0; bv.len()];
                if shared {
                    gemm(k, batch * m, n, &av, (1, k), g, (n, 1), &mut gb, false);
                } else {
                    for i in 0..batch {
                        gemm(k, m, n, &av[i * m * k..], (1, k), &g[i * m * n..], (n, 1), &mut gb[i * k * n..], false);
                    }
                }
                gb
            });
            vec![ga, gb]
        };
        Tensor::from_op(shape, out, vec![self.clone(), other.clone()], "matmul", Box::new(back))
    }

    fn reduce_axis(&self, op: &'static str, axis: usize, keepdim: bool, scale: f64) -> Result<Tensor> {
        let (outer, n, inner) = check_axis(op, self.shape(), axis)?;
        let mut out = vec![0.0; outer * inner];
        {
            let x = self.values();
            for o in 0..outer {
                for j in 0..n {
                    let src = &x[(o * n + j) * inner..(o * n + j + 1) * inner];
                    let dst = &mut out[o * inner..(o + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
                }
            }
            out.iter_mut().for_each(|v| *v *= scale);
        }
        let mut shape = self.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        let back = move |c: &Ctx| {
            let mut gx = vec![0.0; outer * n * inner];
            for o in 0..outer {
                let g = &c.grad[o * inner..(o + 1) * inner];
                for j in 0..n {
                    let dst = &mut gx[(o * n + j) * inner..(o * n + j + 1) * inner];
                    dst.iter_mut().zip(g).for_each(|(d, g)| *d = scale * g);
                }
            }
            vec![Some(gx)]
        };
        Tensor::from_op(shape, out, vec![self.clone()], op, Box::new(back))
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        self.reduce_axis("sum_axis", axis, keepdim, 1.0)
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor> {
        let n = self.shape().get(axis).copied().unwrap_or(1).max(1);
        self.reduce_axis("mean_axis", axis, keepdim, 1.0 / n as f64)
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&self) -> Result<Tensor> {
        self.reshape(&[self.numel()])?.reduce_axis("sum", 0, false, 1.0)
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(shape_err("mean", "empty tensor"));
        }
        self.reshape(&[n])?.reduce_axis("mean", 0, false, 1.0 / n as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(shape_err("reshape", format!("{:?} to {shape:?}", self.shape())));
        }
        let back = |c: &Ctx| vec![Some(c.grad.to_vec())];
        Tensor::from_op(shape.to_vec(), self.to_vec(), vec![self.clone()], "reshape", Box::new(back))
    }

    /// Output dimension `d` is input dimension `perm[d]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
            return Err(shape_err("permute", format!("{perm:?} is not a permutation of {nd} axes")));
        }
        let in_st = strides(self.shape());
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape()[p]).collect();
        let st: Vec<usize> = perm.iter().map(|&p| in_st[p]).collect();
        let map = strided_map(&shape, &st);
        let out = {
            let x = self.values();
            map.iter().map(|&j| x[j]).collect()
        };
        let back = move |c: &Ctx| {
            let mut gx = vec![0.0; map.len()];
            for (i, &j) in map.iter().enumerate() {
                gx[j] = c.grad[i];
            }
            vec![Some(gx)]
        };
        Tensor::from_op(shape, out, vec![self.clone()], "permute", Box::new(back))
    }

    pub fn transpose(&self, a: usize, b: usize) -> Result<Tensor> {
        let mut perm: Vec<usize> = (0..self.ndim()).collect();
        if a >= perm.len() || b >= perm.len() {
            return Err(shape_err("transpose", format!("axes {a}, {b} for {:?}", self.shape())));
        }
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// Entries `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        let (outer, n, inner) = check_axis("slice", self.shape(), axis)?;
        if start > end || end > n {
            return Err(shape_err("slice", format!("range {start}..{end} on axis of length {n}")));
        }
        let len = end - start;
        let mut out = Vec::with_capacity(outer * len * inner);
        {
            let x = self.values();
            for o in 0..outer {
                out.extend_from_slice(&x[(o * n + start) * inner..(o * n + end) * inner]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let back = move |c: &Ctx| {
            let mut gx = vec![0.0; outer * n * inner];
            for o in 0..outer {
                gx[(o * n + start) * inner..(o * n + end) * inner]
                    .copy_from_slice(&c.grad[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        };
        Tensor::from_op(shape, out, vec![self.clone()], "slice", Box::new(back))
    }

    /// Joins tensors that agree on every axis except `axis`.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
        let (outer, _, inner) = check_axis("concat", first.shape(), axis)?;
        let mut lens = Vec::with_capacity(parts.len());
        for p in parts {
            let ok = p.ndim() == first.ndim()
                && p.shape().iter().zip(first.shape()).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !ok {
                return Err(shape_err("concat", format!("{:?} vs {:?} on axis {axis}", p.shape(), first.shape())));
            }
            lens.push(p.shape()[axis]);
        }
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        let vals: Vec<_> = parts.iter().map(Tensor::values).collect();
        for o in 0..outer {
            for (v, &l) in vals.iter().zip(&lens) {
                out.extend_from_slice(&v[o * l * inner..(o + 1) * l * inner]);
            }
        }
        drop(vals);
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let back = move |c: &Ctx| {
            let mut grads: Vec<Vec<f64>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (g, &l) in grads.iter_mut().zip(&lens) {
                    g.extend_from_slice(&c.grad[pos..pos + l * inner]);
                    pos += l * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        };
        Tensor::from_op(shape, out, parts.to_vec(), "concat", Box::new(back))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Tensor> {
        let n = last_dim("softmax", self.shape())?;
        let mut out = self.to_vec();
        for row in out.chunks_mut(n) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let back = move |c: &Ctx| {
            let mut gx = vec![0.0; c.out.len()];
            for ((gx, y), g) in gx.chunks_mut(n).zip(c.out.chunks(n)).zip(c.grad.chunks(n)) {
                let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                for i in 0..n {
                    gx[i] = y[i] * (g[i] - dot);
                }
            }
            vec![Some(gx)]
        };
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], "softmax", Box::new(back))
    }

    /// Normalization over the last axis, without affine parameters.
    pub fn layer_norm(&self, eps: f64) -> Result<Tensor> {
        let n = last_dim("layer_norm", self.shape())?;
        let mut out = self.to_vec();
        let mut rstd = Vec::with_capacity(out.len() / n);
        for row in out.chunks_mut(n) {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mu) * r);
            rstd.push(r);
        }
        let back = move |c: &Ctx| {
            let mut gx = vec![0.0; c.out.len()];
            for (((gx, y), g), &r) in gx.chunks_mut(n).zip(c.out.chunks(n)).zip(c.grad.chunks(n)).zip(&rstd) {
                let mg = g.iter().sum::<f64>() / n as f64;
                let mgy = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                for i in 0..n {
                    gx[i] = r * (g[i] - mg - y[i] * mgy);
                }
            }
            vec![Some(gx)]
        };
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], "layer_norm", Box::new(back))
    }

    /// Rows of a `[V, D]` table selected by `ids`, shape `[ids.len(), D]`.
    pub fn embedding(&self, ids: &[usize]) -> Result<Tensor> {
        let (v, d) = match self.shape() {
            &[v, d] => (v, d),
            s => return Err(shape_err("embedding", format!("table must be 2-D, got {s:?}"))),
        };
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(shape_err("embedding", format!("id {bad} outside vocabulary of {v}")));
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        {
            let t = self.values();
            for &i in ids {
                out.extend_from_slice(&t[i * d..(i + 1) * d]);
            }
        }
        let rows = ids.len();
        let ids = ids.to_vec();
        let back = move |c: &Ctx| {
            let mut gt = vec![0.0; v * d];
            for (r, &i) in ids.iter().enumerate() {
                gt[i * d..(i + 1) * d].iter_mut().zip(&c.grad[r * d..(r + 1) * d]).for_each(|(a, b)| *a += b);
            }
            vec![Some(gt)]
        };
        Tensor::from_op(vec![rows, d], out, vec![self.clone()], "embedding", Box::new(back))
    }

    /// Mean of squared differences over all entries.
    pub fn mse_loss(&self, target: &Tensor) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(shape_err("mse_loss", format!("{:?} vs {:?}", self.shape(), target.shape())));
        }
        let n = self.numel();
        if n == 0 {
            return Err(shape_err("mse_loss", "empty tensors"));
        }
        let loss = {
            let (p, t) = (self.values(), target.values());
            p.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
        };
        let back = move |c: &Ctx| {
            let (p, t) = (c.parents[0].values(), c.parents[1].values());
            let s = 2.0 * c.grad[0] / n as f64;
            let gp: Vec<f64> = p.iter().zip(t.iter()).map(|(a, b)| s * (a - b)).collect();
            let gt = c.parents[1].requires_grad().then(|| gp.iter().map(|g| -g).collect());
            vec![Some(gp), gt]
        };
        Tensor::from_op(vec![], vec![loss], vec![self.clone(), target.clone()], "mse_loss", Box::new(back))
    }

    /// Mean binary cross-entropy between `sigmoid(self)` and `target`, in the
    /// overflow-free logits form.
    pub fn bce_with_logits(&self, target: &Tensor) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(shape_err("bce_with_logits", format!("{:?} vs {:?}", self.shape(), target.shape())));
        }
        let n = self.numel();
        if n == 0 {
            return Err(shape_err("bce_with_logits", "empty tensors"));
        }
        let loss = {
            let (x, t) = (self.values(), target.values());
            x.iter()
                .zip(t.iter())
                .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
                .sum::<f64>()
                / n as f64
        };
        let back = move |c: &Ctx| {
            let (x, t) = (c.parents[0].values(), c.parents[1].values());
            let s = c.grad[0] / n as f64;
            let gx = x.iter().zip(t.iter()).map(|(&x, &t)| s * (stable_sigmoid(x) - t)).collect();
            let gt = c.parents[1].requires_grad().then(|| x.iter().map(|&x| -s * x).collect());
            vec![Some(gx), gt]
        };
        Tensor::from_op(vec![], vec![loss], vec![self.clone(), target.clone()], "bce_with_logits", Box::new(back))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::leaf(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape("t", &[2, 3, 4], &[4]).unwrap(), vec![2, 3, 4]);
        assert_eq!(broadcast_shape("t", &[2, 1, 4], &[3, 1]).unwrap(), vec![2, 3, 4]);
        assert_eq!(broadcast_shape("t", &[], &[5]).unwrap(), vec![5]);
        assert!(broadcast_shape("t", &[2, 3], &[2]).is_err());
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        let y = t(&[2, 4], &[3.0; 8]).softmax().unwrap();
        assert!(y.values().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    fn row_moments(row: &[f64]) -> (f64, f64) {
        let n = row.len() as f64;
        let mu = row.iter().sum::<f64>() / n;
        (mu, row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n)
    }

    #[test]
    fn layer_norm_moments() {
        let raw = [1.0, 2.0, 4.0, 8.0, 16.0, -3.0, 0.5, 0.25, 9.0, 1.0];
        let x = t(&[2, 5], &raw);
        for row in x.layer_norm(0.0).unwrap().values().chunks(5) {
            let (mu, var) = row_moments(row);
            assert!(mu.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
        // With eps > 0 the variance is v / (v + eps) exactly.
        for (row, src) in x.layer_norm(1e-5).unwrap().values().chunks(5).zip(raw.chunks(5)) {
            let (mu, var) = row_moments(row);
            let (_, v) = row_moments(src);
            assert!(mu.abs() < 1e-12);
            assert!((var - v / (v + 1e-5)).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_backward_is_uniform() {
        let x = t(&[3, 4], &[0.5; 12]);
        x.mean().unwrap().backward().unwrap();
        assert!(x.grad().unwrap().iter().all(|&g| (g - 1.0 / 12.0).abs() < 1e-16));
    }

    #[test]
    fn squared_norm_backward() {
        let v = [1.0, -2.0, 0.5];
        let x = t(&[3], &v);
        x.square().unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = t(&[2], &[1.0, 3.0]);
        let loss = x.mul(&x).unwrap().sum().unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0, 12.0]);
    }

    #[test]
    fn non_scalar_backward_fails() {
        let x = t(&[2], &[1.0, 3.0]);
        assert!(x.scale(2.0).unwrap().backward().is_err());
    }

    #[test]
    fn matmul_small() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[5.0, 6.0]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![17.0, 39.0]);
        assert!(a.matmul(&t(&[3, 1], &[0.0; 3])).is_err());
    }

    #[test]
    fn non_finite_is_reported() {
        let x = t(&[1], &[-1.0]);
        assert!(x.log().is_err());
    }

    #[test]
    fn slice_concat_roundtrip() {
        let x = t(&[2, 5], &(0..10).map(f64::from).collect::<Vec<_>>());
        let a = x.slice(1, 0, 2).unwrap();
        let b = x.slice(1, 2, 5).unwrap();
        assert_eq!(Tensor::concat(&[a, b], 1).unwrap().to_vec(), x.to_vec());
    }
}
