//! Recorded computation graph. Every op appends a node holding its output;
//! [`Tape::backward`] walks the nodes in reverse and accumulates gradients.

use crate::tensor::{gemm_acc, MatView, Scalar};
use crate::{NnError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        shared_b: bool,
    },
    Add(Var, Var),
    Mul(Var, Var),
    /// `y` repeated over the leading dimensions of `x`.
    AddBroadcast(Var, Var),
    Scale(Var, T),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax(Var),
    /// Keeps the logistic gate of the forward pass for the backward pass.
    Gelu {
        x: Var,
        gate: Vec<T>,
    },
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    PrependRow {
        x: Var,
        row: Var,
    },
    SelectRow {
        x: Var,
        index: usize,
    },
    Sum(Var),
    Mse {
        pred: Var,
        target: Vec<T>,
        denom: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Vec<T>,
    shape: Vec<usize>,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

const LN_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// `0.5 * (1 + tanh(z))` written as the logistic `1 / (1 + exp(-2z))`, which
/// is cheaper than `tanh` and saturates cleanly at both ends.
fn gelu_gate<T: Scalar>(v: T, c: T, a: T) -> T {
    let z = c * (v + a * v * v * v);
    T::one() / (T::one() + (-(z + z)).exp())
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, shape: Vec<usize>, op: Op<T>) -> Var {
        debug_assert_eq!(value.len(), numel(&shape));
        self.nodes.push(Node { value, shape, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Vec<T>, shape: Vec<usize>) -> Result<Var> {
        if value.len() != numel(&shape) {
            return Err(NnError::BadData {
                len: value.len(),
                shape,
            });
        }
        Ok(self.push(value, shape, Op::Leaf))
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Gradient of the last `backward` loss with respect to `v`; `None` if
    /// `v` did not influence it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> NnError {
        NnError::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    /// `a @ b` over the last two axes. `b` is either a matrix shared by
    /// every leading index of `a`, or has the same leading dimensions.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a @ b^T` over the last two axes (`b` is `[..., n, k]`).
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let op = if trans_b { "matmul_t" } else { "matmul" };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(self.mismatch(op, a, b));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (bk, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        if bk != k {
            return Err(self.mismatch(op, a, b));
        }
        let lead_a = &sa[..sa.len() - 2];
        let lead_b = &sb[..sb.len() - 2];
        let shared_b = lead_b.is_empty();
        if !shared_b && lead_a != lead_b {
            return Err(self.mismatch(op, a, b));
        }
        let batch = numel(lead_a);
        let mut out = vec![T::zero(); batch * m * n];
        {
            let av = self.value(a);
            let bv = self.value(b);
            if shared_b {
                let bm = MatView::row_major(bv, sb[0], sb[1]);
                let bm = if trans_b { bm.transposed() } else { bm };
                gemm_acc(MatView::row_major(av, batch * m, k), bm, &mut out);
            } else {
                let bsz = k * n;
                for i in 0..batch {
                    let am = MatView::row_major(&av[i * m * k..(i + 1) * m * k], m, k);
                    let bslice = &bv[i * bsz..(i + 1) * bsz];
                    let bm = if trans_b {
                        MatView::row_major(bslice, n, k).transposed()
                    } else {
                        MatView::row_major(bslice, k, n)
                    };
                    gemm_acc(am, bm, &mut out[i * m * n..(i + 1) * m * n]);
                }
            }
        }
        let mut shape = lead_a.to_vec();
        shape.extend([m, n]);
        Ok(self.push(
            out,
            shape,
            Op::MatMul {
                a,
                b,
                trans_b,
                batch,
                m,
                k,
                n,
                shared_b,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("add", a, b));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| *x + *y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| *x * *y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Mul(a, b)))
    }

    /// `x + y` where `y`'s shape equals the trailing dimensions of `x`
    /// (bias rows, position tables).
    pub fn add_broadcast(&mut self, x: Var, y: Var) -> Result<Var> {
        let sx = self.shape(x);
        let sy = self.shape(y);
        if sy.len() > sx.len() || sx[sx.len() - sy.len()..] != *sy {
            return Err(self.mismatch("add_broadcast", x, y));
        }
        let yv = self.value(y);
        let mut out = self.value(x).to_vec();
        for chunk in out.chunks_mut(yv.len().max(1)) {
            chunk.iter_mut().zip(yv).for_each(|(a, b)| *a += *b);
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(out, shape, Op::AddBroadcast(x, y)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).iter().map(|v| *v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(out, shape, Op::Scale(x, c))
    }

    /// Normalizes over the last axis (epsilon 1e-6), then applies `gain` and
    /// `bias` of that axis' length.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().ok_or_else(|| self.mismatch("layer_norm", x, gain))?;
        if self.shape(gain) != [d] {
            return Err(self.mismatch("layer_norm", x, gain));
        }
        if self.shape(bias) != [d] {
            return Err(self.mismatch("layer_norm", x, bias));
        }
        let rows = numel(&sx) / d.max(1);
        let xv = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        let inv_d = T::one() / T::lit(d as f64);
        let eps = T::lit(LN_EPS);
        let mut out = Vec::with_capacity(xv.len());
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        for row in xv.chunks(d) {
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() * inv_d;
            let rstd = T::one() / (var + eps).sqrt();
            out.extend(
                row.iter()
                    .zip(g.iter().zip(b))
                    .map(|(v, (g, b))| (*v - mean) * rstd * *g + *b),
            );
            means.push(mean);
            rstds.push(rstd);
        }
        Ok(self.push(
            out,
            sx,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean: means,
                rstd: rstds,
            },
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().unwrap_or(&1);
        let mut out = Vec::with_capacity(numel(&sx));
        for row in self.value(x).chunks(d.max(1)) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let start = out.len();
            let mut total = T::zero();
            for v in row {
                let e = (*v - mx).exp();
                total += e;
                out.push(e);
            }
            let inv = T::one() / total;
            out[start..].iter_mut().for_each(|v| *v *= inv);
        }
        self.push(out, sx, Op::Softmax(x))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let c = T::lit(GELU_C);
        let a = T::lit(GELU_A);
        let gate: Vec<T> = self.value(x).iter().map(|&v| gelu_gate(v, c, a)).collect();
        let out = self.value(x).iter().zip(&gate).map(|(&v, &s)| v * s).collect();
        let shape = self.shape(x).to_vec();
        self.push(out, shape, Op::Gelu { x, gate })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != numel(self.shape(x)) {
            return Err(NnError::ShapeMismatch {
                op: "reshape",
                left: self.shape(x).to_vec(),
                right: shape,
            });
        }
        let out = self.value(x).to_vec();
        Ok(self.push(out, shape, Op::Reshape(x)))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let mut seen = vec![false; sx.len()];
        if perm.len() != sx.len() || perm.iter().any(|&p| p >= sx.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(NnError::ShapeMismatch {
                op: "permute",
                left: sx,
                right: perm.to_vec(),
            });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| sx[p]).collect();
        let mut out = vec![T::zero(); numel(&sx)];
        permute_into(self.value(x), &sx, perm, &mut out, false);
        Ok(self.push(
            out,
            out_shape,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
        ))
    }

    /// `[B, N, D]` and a `[D]` row give `[B, N + 1, D]` with the row first.
    pub fn prepend_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || self.shape(row) != [sx[2]] {
            return Err(self.mismatch("prepend_row", x, row));
        }
        let (b, n, d) = (sx[0], sx[1], sx[2]);
        let xv = self.value(x);
        let rv = self.value(row);
        let mut out = Vec::with_capacity(b * (n + 1) * d);
        for chunk in xv.chunks(n * d) {
            out.extend_from_slice(rv);
            out.extend_from_slice(chunk);
        }
        Ok(self.push(out, vec![b, n + 1, d], Op::PrependRow { x, row }))
    }

    /// Row `index` of every `[N, D]` block of a `[B, N, D]` tensor.
    pub fn select_row(&mut self, x: Var, index: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || index >= sx[1] {
            return Err(NnError::ShapeMismatch {
                op: "select_row",
                left: sx,
                right: vec![index],
            });
        }
        let (b, n, d) = (sx[0], sx[1], sx[2]);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(b * d);
        for i in 0..b {
            let start = (i * n + index) * d;
            out.extend_from_slice(&xv[start..start + d]);
        }
        Ok(self.push(out, vec![b, d], Op::SelectRow { x, index }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        self.push(vec![s], vec![], Op::Sum(x))
    }

    /// `sum((pred - target)^2) / denom` as a scalar. Shards of one batch pass
    /// the full batch's element count as `denom` so their gradients add up.
    pub fn mse(&mut self, pred: Var, target: &[T], denom: usize) -> Result<Var> {
        if self.value(pred).len() != target.len() {
            return Err(NnError::ShapeMismatch {
                op: "mse",
                left: self.shape(pred).to_vec(),
                right: vec![target.len()],
            });
        }
        let denom = T::lit(denom as f64);
        let s = self
            .value(pred)
            .iter()
            .zip(target)
            .map(|(p, t)| (*p - *t) * (*p - *t))
            .sum::<T>()
            / denom;
        Ok(self.push(
            vec![s],
            vec![],
            Op::Mse {
                pred,
                target: target.to_vec(),
                denom,
            },
        ))
    }

    /// Adds `src` into the gradient of `v`, or takes a copy if it has none yet.
    fn accumulate(grads: &mut [Option<Vec<T>>], v: Var, src: &[T]) {
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(src).for_each(|(g, d)| *g += *d),
            slot => *slot = Some(src.to_vec()),
        }
    }

    fn grad_buf<'g>(grads: &'g mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'g mut Vec<T> {
        grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()])
    }

    /// Populates gradients of the scalar `loss` for every node it depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NnError::NotScalar(self.nodes[loss.0].shape.clone()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let nodes = &self.nodes;

        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul {
                    a,
                    b,
                    trans_b,
                    batch,
                    m,
                    k,
                    n,
                    shared_b,
                } => {
                    let (m, k, n) = (*m, *k, *n);
                    let av = &nodes[a.0].value;
                    let bv = &nodes[b.0].value;
                    if *shared_b {
                        let rows = batch * m;
                        let gm = MatView::row_major(&gy, rows, n);
                        let bm = if *trans_b {
                            MatView::row_major(bv, n, k)
                        } else {
                            MatView::row_major(bv, k, n).transposed()
                        };
                        gemm_acc(gm, bm, Self::grad_buf(&mut grads, nodes, *a));
                        let am = MatView::row_major(av, rows, k);
                        let gb = Self::grad_buf(&mut grads, nodes, *b);
                        if *trans_b {
                            gemm_acc(gm.transposed(), am, gb);
                        } else {
                            gemm_acc(am.transposed(), gm, gb);
                        }
                    } else {
                        for i in 0..*batch {
                            let gm = MatView::row_major(&gy[i * m * n..(i + 1) * m * n], m, n);
                            let bs = &bv[i * k * n..(i + 1) * k * n];
                            let bm = if *trans_b {
                                MatView::row_major(bs, n, k)
                            } else {
                                MatView::row_major(bs, k, n).transposed()
                            };
                            let ga = Self::grad_buf(&mut grads, nodes, *a);
                            gemm_acc(gm, bm, &mut ga[i * m * k..(i + 1) * m * k]);
                            let am = MatView::row_major(&av[i * m * k..(i + 1) * m * k], m, k);
                            let gb = Self::grad_buf(&mut grads, nodes, *b);
                            let gb = &mut gb[i * k * n..(i + 1) * k * n];
                            if *trans_b {
                                gemm_acc(gm.transposed(), am, gb);
                            } else {
                                gemm_acc(am.transposed(), gm, gb);
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    Self::accumulate(&mut grads, *a, &gy);
                    Self::accumulate(&mut grads, *b, &gy);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let g = Self::grad_buf(&mut grads, nodes, *a);
                    for ((g, d), y) in g.iter_mut().zip(&gy).zip(bv) {
                        *g += *d * *y;
                    }
                    let g = Self::grad_buf(&mut grads, nodes, *b);
                    for ((g, d), x) in g.iter_mut().zip(&gy).zip(av) {
                        *g += *d * *x;
                    }
                }
                Op::AddBroadcast(x, y) => {
                    Self::accumulate(&mut grads, *x, &gy);
                    let period = nodes[y.0].value.len().max(1);
                    let g = Self::grad_buf(&mut grads, nodes, *y);
                    for chunk in gy.chunks(period) {
                        g.iter_mut().zip(chunk).for_each(|(g, d)| *g += *d);
                    }
                }
                Op::Scale(x, c) => {
                    let g = Self::grad_buf(&mut grads, nodes, *x);
                    g.iter_mut().zip(&gy).for_each(|(g, d)| *g += *d * *c);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    mean,
                    rstd,
                } => {
                    let d = *node.shape.last().unwrap_or(&1);
                    let xv = &nodes[x.0].value;
                    let gv = &nodes[gain.0].value;
                    let inv_d = T::one() / T::lit(d as f64);
                    let mut dgain = vec![T::zero(); d];
                    let mut dbias = vec![T::zero(); d];
                    let mut dx = vec![T::zero(); xv.len()];
                    let mut xhat = vec![T::zero(); d];
                    let mut dxhat = vec![T::zero(); d];
                    for (r, (xrow, grow)) in xv.chunks(d).zip(gy.chunks(d)).enumerate() {
                        let (mu, rs) = (mean[r], rstd[r]);
                        let mut sum_dxhat = T::zero();
                        let mut sum_dxhat_xhat = T::zero();
                        for j in 0..d {
                            xhat[j] = (xrow[j] - mu) * rs;
                            dxhat[j] = grow[j] * gv[j];
                            dgain[j] += grow[j] * xhat[j];
                            dbias[j] += grow[j];
                            sum_dxhat += dxhat[j];
                            sum_dxhat_xhat += dxhat[j] * xhat[j];
                        }
                        let out = &mut dx[r * d..(r + 1) * d];
                        for j in 0..d {
                            out[j] = rs * (dxhat[j] - inv_d * sum_dxhat - xhat[j] * inv_d * sum_dxhat_xhat);
                        }
                    }
                    for (v, src) in [(x, dx), (gain, dgain), (bias, dbias)] {
                        let g = Self::grad_buf(&mut grads, nodes, *v);
                        g.iter_mut().zip(&src).for_each(|(g, d)| *g += *d);
                    }
                }
                Op::Softmax(x) => {
                    let d = *node.shape.last().unwrap_or(&1);
                    let yv = &node.value;
                    let g = Self::grad_buf(&mut grads, nodes, *x);
                    for ((grow, yrow), dyrow) in g.chunks_mut(d).zip(yv.chunks(d)).zip(gy.chunks(d)) {
                        let dot: T = yrow.iter().zip(dyrow).map(|(y, dy)| *y * *dy).sum();
                        for j in 0..d {
                            grow[j] += yrow[j] * (dyrow[j] - dot);
                        }
                    }
                }
                Op::Gelu { x, gate } => {
                    let c2 = T::lit(2.0 * GELU_C);
                    let three_a = T::lit(3.0 * GELU_A);
                    let xv = &nodes[x.0].value;
                    let g = Self::grad_buf(&mut grads, nodes, *x);
                    for (((g, d), &v), &s) in g.iter_mut().zip(&gy).zip(xv).zip(gate) {
                        let ds = c2 * s * (T::one() - s) * (T::one() + three_a * v * v);
                        *g += *d * (s + v * ds);
                    }
                }
                Op::Reshape(x) => Self::accumulate(&mut grads, *x, &gy),
                Op::Permute { x, perm } => {
                    let sx = nodes[x.0].shape.clone();
                    let g = Self::grad_buf(&mut grads, nodes, *x);
                    permute_into(&gy, &sx, perm, g, true);
                }
                Op::PrependRow { x, row } => {
                    let s = &node.shape;
                    let (n1, d) = (s[1], s[2]);
                    let g = Self::grad_buf(&mut grads, nodes, *row);
                    for block in gy.chunks(n1 * d) {
                        g.iter_mut().zip(&block[..d]).for_each(|(g, v)| *g += *v);
                    }
                    let g = Self::grad_buf(&mut grads, nodes, *x);
                    for (gblock, block) in g.chunks_mut((n1 - 1) * d).zip(gy.chunks(n1 * d)) {
                        gblock.iter_mut().zip(&block[d..]).for_each(|(g, v)| *g += *v);
                    }
                }
                Op::SelectRow { x, index } => {
                    let sx = &nodes[x.0].shape;
                    let (n, d) = (sx[1], sx[2]);
                    let g = Self::grad_buf(&mut grads, nodes, *x);
                    for (i, row) in gy.chunks(d).enumerate() {
                        let start = (i * n + index) * d;
                        g[start..start + d].iter_mut().zip(row).for_each(|(g, v)| *g += *v);
                    }
                }
                Op::Sum(x) => {
                    let g = Self::grad_buf(&mut grads, nodes, *x);
                    g.iter_mut().for_each(|g| *g += gy[0]);
                }
                Op::Mse {
                    pred,
                    target,
                    denom,
                } => {
                    let pv = &nodes[pred.0].value;
                    let scale = gy[0] * T::lit(2.0) / *denom;
                    let g = Self::grad_buf(&mut grads, nodes, *pred);
                    for ((g, p), t) in g.iter_mut().zip(pv).zip(target) {
                        *g += scale * (*p - *t);
                    }
                }
            }
            grads[idx] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }
}

/// Copies (or, with `accumulate`, adds the inverse permutation of) `src` into
/// `dst`. Without `accumulate`, `src` has shape `shape` and `dst` receives the
/// permuted layout; with it, `src` is in permuted layout and is added back
/// into `dst` of shape `shape`.
fn permute_into<T: Scalar>(src: &[T], shape: &[usize], perm: &[usize], dst: &mut [T], accumulate: bool) {
    let nd = shape.len();
    if nd == 0 {
        if accumulate {
            dst[0] += src[0];
        } else {
            dst[0] = src[0];
        }
        return;
    }
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd - 1).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    // stride in the unpermuted layout for each permuted axis
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let inner = out_shape[nd - 1];
    let inner_stride = strides[nd - 1];
    let total = numel(shape);
    if total == 0 {
        return;
    }
    let mut idx = vec![0usize; nd];
    let mut out_pos = 0;
    while out_pos < total {
        let base: usize = idx[..nd - 1].iter().zip(&strides).map(|(i, s)| i * s).sum();
        for j in 0..inner {
            let in_pos = base + j * inner_stride;
            if accumulate {
                dst[in_pos] += src[out_pos + j];
            } else {
                dst[out_pos + j] = src[in_pos];
            }
        }
        out_pos += inner;
        for ax in (0..nd - 1).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}
