//! Differentiable operations on [`Tensor`].

use super::{numel, Float, Tensor};
use crate::error::{Error, Result};

/// Row-major strides for `shape`.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Split `shape` around `axis` into (outer, axis_len, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::Index {
            what: op,
            index: axis,
            bound: shape.len(),
        });
    }
    Ok(())
}

fn permute_data(data: &[Float], shape: &[usize], axes: &[usize]) -> Vec<Float> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    let nd = out_shape.len();
    if n == 0 {
        return out;
    }
    let mut idx = vec![0usize; nd];
    let mut src = 0usize;
    for _ in 0..n {
        out.push(data[src]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            src += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            src -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    out
}

/// `c[m×n] += a[m×k] · b[k×n]`
fn mm_acc(a: &[Float], b: &[Float], c: &mut [Float], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · b[k×n]ᵀ`
fn mm_bt_acc(g: &[Float], b: &[Float], out: &mut [Float], m: usize, n: usize, k: usize) {
    let mut bt = vec![0.0; n * k];
    for p in 0..k {
        for j in 0..n {
            bt[j * k + p] = b[p * n + j];
        }
    }
    mm_acc(g, &bt, out, m, n, k);
}

/// `out[k×n] += a[m×k]ᵀ · g[m×n]`
fn mm_at_acc(a: &[Float], g: &[Float], out: &mut [Float], m: usize, k: usize, n: usize) {
    let mut at = vec![0.0; k * m];
    for i in 0..m {
        for p in 0..k {
            at[p * m + i] = a[i * k + p];
        }
    }
    mm_acc(&at, g, out, k, m, n);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

const GELU_C: Float = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: Float = 0.044_715;

impl Tensor {
    /// Batched matrix product `[..., m, k] × [..., k, n]`.
    ///
    /// Batch dimensions must match exactly, or one operand must be a plain
    /// matrix that is shared across the other's batch.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        if k != k2 || !(ba == bb || ba.is_empty() || bb.is_empty()) {
            return Err(Error::dim("matmul", sa, sb));
        }
        let batch_dims = if ba.is_empty() { bb } else { ba };
        let batch = numel(batch_dims);
        let a_step = if ba.is_empty() { 0 } else { m * k };
        let b_step = if bb.is_empty() { 0 } else { k * n };

        let mut out = vec![0.0; batch * m * n];
        for t in 0..batch {
            mm_acc(
                &self.data()[t * a_step..t * a_step + m * k],
                &other.data()[t * b_step..t * b_step + k * n],
                &mut out[t * m * n..(t + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = batch_dims.to_vec();
        shape.extend([m, n]);

        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone(), other.clone()],
            move |g| {
                let ga = a.requires_grad().then(|| {
                    let mut ga = vec![0.0; a.numel()];
                    for t in 0..batch {
                        mm_bt_acc(
                            &g[t * m * n..(t + 1) * m * n],
                            &b.data()[t * b_step..t * b_step + k * n],
                            &mut ga[t * a_step..t * a_step + m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    ga
                });
                let gb = b.requires_grad().then(|| {
                    let mut gb = vec![0.0; b.numel()];
                    for t in 0..batch {
                        mm_at_acc(
                            &a.data()[t * a_step..t * a_step + m * k],
                            &g[t * m * n..(t + 1) * m * n],
                            &mut gb[t * b_step..t * b_step + k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    gb
                });
                vec![ga, gb]
            },
        ))
    }

    /// Pointwise binary operation on equal shapes. A one-element operand
    /// is broadcast as a scalar.
    pub fn elementwise(&self, other: &Tensor, op: BinaryOp) -> Result<Tensor> {
        if self.shape() != other.shape() {
            if other.numel() == 1 && self.numel() != 1 {
                return self.with_scalar_tensor(other, op, false);
            }
            if self.numel() == 1 && other.numel() != 1 {
                return other.with_scalar_tensor(self, op, true);
            }
            return Err(Error::dim(op_name(op), self.shape(), other.shape()));
        }
        let (x, y) = (self.data(), other.data());
        let out: Vec<Float> = match op {
            BinaryOp::Add => x.iter().zip(y).map(|(a, b)| a + b).collect(),
            BinaryOp::Sub => x.iter().zip(y).map(|(a, b)| a - b).collect(),
            BinaryOp::Mul => x.iter().zip(y).map(|(a, b)| a * b).collect(),
        };
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            move |g| match op {
                BinaryOp::Add => vec![
                    a.requires_grad().then(|| g.to_vec()),
                    b.requires_grad().then(|| g.to_vec()),
                ],
                BinaryOp::Sub => vec![
                    a.requires_grad().then(|| g.to_vec()),
                    b.requires_grad().then(|| g.iter().map(|v| -v).collect()),
                ],
                BinaryOp::Mul => vec![
                    a.requires_grad()
                        .then(|| g.iter().zip(b.data()).map(|(gv, bv)| gv * bv).collect()),
                    b.requires_grad()
                        .then(|| g.iter().zip(a.data()).map(|(gv, av)| gv * av).collect()),
                ],
            },
        ))
    }

    // `self` is the full tensor, `s` a one-element tensor. `swapped` means s
    // was the left operand.
    fn with_scalar_tensor(&self, s: &Tensor, op: BinaryOp, swapped: bool) -> Result<Tensor> {
        let c = s.item();
        let out: Vec<Float> = self
            .data()
            .iter()
            .map(|&x| match (op, swapped) {
                (BinaryOp::Add, _) => x + c,
                (BinaryOp::Sub, false) => x - c,
                (BinaryOp::Sub, true) => c - x,
                (BinaryOp::Mul, _) => x * c,
            })
            .collect();
        let (a, b) = (self.clone(), s.clone());
        let parents = if swapped {
            vec![s.clone(), self.clone()]
        } else {
            vec![self.clone(), s.clone()]
        };
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            parents,
            move |g| {
                let sign: Float = if op == BinaryOp::Sub && swapped {
                    -1.0
                } else {
                    1.0
                };
                let ga = a.requires_grad().then(|| match op {
                    BinaryOp::Mul => g.iter().map(|v| v * c).collect(),
                    _ => g.iter().map(|v| v * sign).collect(),
                });
                let gb = b.requires_grad().then(|| {
                    let total: Float = match op {
                        BinaryOp::Mul => g.iter().zip(a.data()).map(|(gv, av)| gv * av).sum(),
                        BinaryOp::Sub if !swapped => -g.iter().sum::<Float>(),
                        _ => g.iter().sum(),
                    };
                    vec![total]
                });
                if swapped {
                    vec![gb, ga]
                } else {
                    vec![ga, gb]
                }
            },
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(other, BinaryOp::Mul)
    }

    pub fn scale(&self, c: Float) -> Tensor {
        let out = self.data().iter().map(|x| x * c).collect();
        Tensor::from_op(out, self.shape().to_vec(), vec![self.clone()], move |g| {
            vec![Some(g.iter().map(|v| v * c).collect())]
        })
    }

    /// `s + λ·(o − s)` with `o = self`, `s = other`, elementwise.
    ///
    /// Exact at the endpoints: λ = 1 returns `o`, λ = 0 returns `s`, and
    /// positions where `o == s` return `s` unchanged for every λ.
    pub fn lerp(&self, other: &Tensor, lambda: Float) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::dim("lerp", self.shape(), other.shape()));
        }
        if lambda == 1.0 {
            return Ok(self.clone());
        }
        let out = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&o, &s)| if o == s { s } else { s + lambda * (o - s) })
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            move |g| {
                vec![
                    a.requires_grad()
                        .then(|| g.iter().map(|v| v * lambda).collect()),
                    b.requires_grad()
                        .then(|| g.iter().map(|v| v * (1.0 - lambda)).collect()),
                ]
            },
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(Error::dim("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            self.data().to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// Reorder axes; `axes[i]` names the input axis that becomes output axis `i`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if axes.len() != nd
            || axes
                .iter()
                .any(|&a| a >= nd || std::mem::replace(&mut seen[a], true))
        {
            return Err(Error::dim("permute", self.shape(), axes));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let out = permute_data(self.data(), self.shape(), axes);
        let mut inverse = vec![0; nd];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let out_shape_bw = out_shape.clone();
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![self.clone()],
            move |g| vec![Some(permute_data(g, &out_shape_bw, &inverse))],
        ))
    }

    /// Gather slices along `axis`; output position `i` takes input slice `indices[i]`.
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Result<Tensor> {
        check_axis("index_select axis", self.shape(), axis)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::Index {
                what: "index_select",
                index: bad,
                bound: len,
            });
        }
        let m = indices.len();
        let mut out = Vec::with_capacity(outer * m * inner);
        for o in 0..outer {
            for &i in indices {
                let start = (o * len + i) * inner;
                out.extend_from_slice(&self.data()[start..start + inner]);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = m;
        let indices = indices.to_vec();
        let src_numel = self.numel();
        Ok(Tensor::from_op(out, shape, vec![self.clone()], move |g| {
            let mut gi = vec![0.0; src_numel];
            for o in 0..outer {
                for (j, &i) in indices.iter().enumerate() {
                    let src = (o * m + j) * inner;
                    let dst = (o * len + i) * inner;
                    for t in 0..inner {
                        gi[dst + t] += g[src + t];
                    }
                }
            }
            vec![Some(gi)]
        }))
    }

    /// Add a vector along the last axis (bias broadcast over leading dims).
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let d = *self.shape().last().unwrap_or(&0);
        if bias.shape() != [d] {
            return Err(Error::dim("add_bias", self.shape(), bias.shape()));
        }
        let out = self
            .data()
            .chunks(d)
            .flat_map(|row| row.iter().zip(bias.data()).map(|(x, b)| x + b))
            .collect();
        let (x, b) = (self.clone(), bias.clone());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), bias.clone()],
            move |g| {
                let gb = b.requires_grad().then(|| {
                    let mut gb = vec![0.0; d];
                    for row in g.chunks(d) {
                        gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    gb
                });
                vec![x.requires_grad().then(|| g.to_vec()), gb]
            },
        ))
    }

    /// `x · W + b` over the last axis; `W` is `[in, out]`.
    pub fn linear(&self, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
        self.matmul(weight)?.add_bias(bias)
    }

    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis("softmax axis", self.shape(), axis)?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let max = (0..n)
                    .map(|j| x[at(j)])
                    .fold(Float::NEG_INFINITY, Float::max);
                let mut sum = 0.0;
                for j in 0..n {
                    let e = (x[at(j)] - max).exp();
                    y[at(j)] = e;
                    sum += e;
                }
                for j in 0..n {
                    y[at(j)] /= sum;
                }
            }
        }
        let probs = y.clone();
        Ok(Tensor::from_op(
            y,
            self.shape().to_vec(),
            vec![self.clone()],
            move |g| {
                let mut gx = vec![0.0; probs.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * n + j) * inner + i;
                        let dot: Float = (0..n).map(|j| g[at(j)] * probs[at(j)]).sum();
                        for j in 0..n {
                            gx[at(j)] = probs[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Normalize over the last axis (population variance), then apply
    /// `gain` and `bias`.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: Float) -> Result<Tensor> {
        let d = *self.shape().last().unwrap_or(&0);
        if gain.shape() != [d] || bias.shape() != [d] {
            return Err(Error::dim("layer_norm", self.shape(), gain.shape()));
        }
        let rows = self.numel() / d.max(1);
        let mut xhat = vec![0.0; self.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; self.numel()];
        for r in 0..rows {
            let x = &self.data()[r * d..(r + 1) * d];
            let mean = x.iter().sum::<Float>() / d as Float;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<Float>() / d as Float;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let h = (x[c] - mean) * is;
                xhat[r * d + c] = h;
                out[r * d + c] = h * gain.data()[c] + bias.data()[c];
            }
        }
        let (x, gm, bs) = (self.clone(), gain.clone(), bias.clone());
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), gain.clone(), bias.clone()],
            move |g| {
                let gx = x.requires_grad().then(|| {
                    let mut gx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let dh: Vec<Float> = gr.iter().zip(gm.data()).map(|(a, b)| a * b).collect();
                        let mean_dh = dh.iter().sum::<Float>() / d as Float;
                        let mean_dh_h =
                            dh.iter().zip(hr).map(|(a, b)| a * b).sum::<Float>() / d as Float;
                        for c in 0..d {
                            gx[r * d + c] = inv_std[r] * (dh[c] - mean_dh - hr[c] * mean_dh_h);
                        }
                    }
                    gx
                });
                let gg = gm.requires_grad().then(|| {
                    let mut gg = vec![0.0; d];
                    for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                        for c in 0..d {
                            gg[c] += gr[c] * hr[c];
                        }
                    }
                    gg
                });
                let gb = bs.requires_grad().then(|| {
                    let mut gb = vec![0.0; d];
                    for gr in g.chunks(d) {
                        gb.iter_mut().zip(gr).for_each(|(a, v)| *a += v);
                    }
                    gb
                });
                vec![gx, gg, gb]
            },
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor {
        let out = self
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()))
            .collect();
        let x = self.clone();
        Tensor::from_op(out, self.shape().to_vec(), vec![self.clone()], move |g| {
            let gx = g
                .iter()
                .zip(x.data())
                .map(|(gv, &v)| {
                    let t = (GELU_C * (v + GELU_K * v * v * v)).tanh();
                    let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v);
                    gv * (0.5 * (1.0 + t) + 0.5 * v * dt)
                })
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn sum(&self) -> Tensor {
        let total = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(vec![total], Vec::new(), vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1);
        self.sum().scale(1.0 / n as Float)
    }

    /// Mean over rows of `−log softmax(logits)[target]`, logits `[l, N]`.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Tensor> {
        let (l, n) = logits_dims("cross_entropy", self, targets.len())?;
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::Index {
                what: "cross_entropy target",
                index: bad,
                bound: n,
            });
        }
        let mut probs = vec![0.0; l * n];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &self.data()[r * n..(r + 1) * n];
            let lse = log_sum_exp(row);
            loss += lse - row[t];
            for c in 0..n {
                probs[r * n + c] = (row[c] - lse).exp();
            }
        }
        let targets = targets.to_vec();
        Ok(Tensor::from_op(
            vec![loss / l as Float],
            Vec::new(),
            vec![self.clone()],
            move |g| {
                let s = g[0] / l as Float;
                let mut gx: Vec<Float> = probs.iter().map(|p| p * s).collect();
                for (r, &t) in targets.iter().enumerate() {
                    gx[r * n + t] -= s;
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Mean over rows of `−Σ_c y[c]·log softmax(logits)[c]` for target
    /// distributions `y` (`[l, N]`, each row summing to one).
    pub fn soft_cross_entropy(&self, targets: &[Float]) -> Result<Tensor> {
        let n = *self.shape().last().unwrap_or(&0);
        if self.ndim() != 2 || targets.len() != self.numel() {
            return Err(Error::dim(
                "soft_cross_entropy",
                self.shape(),
                &[targets.len()],
            ));
        }
        let l = self.shape()[0];
        for (r, row) in targets.chunks(n).enumerate() {
            let s: Float = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 as Float || row.iter().any(|&p| p < 0.0) {
                return Err(Error::Contract(format!(
                    "target row {r} is not a probability distribution (sum {s})"
                )));
            }
        }
        let mut probs = vec![0.0; l * n];
        let mut loss = 0.0;
        for r in 0..l {
            let row = &self.data()[r * n..(r + 1) * n];
            let lse = log_sum_exp(row);
            for c in 0..n {
                let logp = row[c] - lse;
                loss -= targets[r * n + c] * logp;
                probs[r * n + c] = logp.exp();
            }
        }
        let targets = targets.to_vec();
        Ok(Tensor::from_op(
            vec![loss / l as Float],
            Vec::new(),
            vec![self.clone()],
            move |g| {
                let s = g[0] / l as Float;
                let gx = probs
                    .iter()
                    .zip(&targets)
                    .map(|(p, y)| (p - y) * s)
                    .collect();
                vec![Some(gx)]
            },
        ))
    }
}

fn op_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
    }
}

fn logits_dims(op: &'static str, logits: &Tensor, rows: usize) -> Result<(usize, usize)> {
    if logits.ndim() != 2 || logits.shape()[0] != rows {
        return Err(Error::dim(op, logits.shape(), &[rows]));
    }
    Ok((logits.shape()[0], logits.shape()[1]))
}

fn log_sum_exp(row: &[Float]) -> Float {
    let max = row.iter().copied().fold(Float::NEG_INFINITY, Float::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<Float>().ln()
}
