use std::sync::Arc;

use super::kernels::{gemm_nt, gemm_tn};
use super::{as_matrix, SparseMatrix, Tensor};
use crate::error::{KitsError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary op maps onto the left one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `b` has shape `[n]` or `[1, n]` and repeats over the leading rows of `a`.
    Row,
    /// `b` has `a`'s shape with a trailing 1 and repeats along the last axis.
    Col,
}

impl Broadcast {
    fn resolve(a: &Tensor, b: &Tensor) -> Result<Self> {
        if a.shape() == b.shape() {
            return Ok(Broadcast::Same);
        }
        let n = a.last_dim();
        let bs = b.shape();
        if (bs == [n] || bs == [1, n]) && a.rank() >= 1 {
            return Ok(Broadcast::Row);
        }
        if a.rank() >= 1
            && bs.len() == a.rank()
            && bs[..bs.len() - 1] == a.shape()[..a.rank() - 1]
            && bs[bs.len() - 1] == 1
        {
            return Ok(Broadcast::Col);
        }
        Err(KitsError::Dimension(format!("cannot broadcast {:?} against {:?}", bs, a.shape())))
    }

    #[inline]
    fn index(self, i: usize, n: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Row => i % n,
            Broadcast::Col => i / n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryKind {
    Relu,
    Abs,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryKind, Var, Var, Broadcast),
    Unary(UnaryKind, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    ConcatLast(Vec<Var>),
    SliceLast { src: Var, start: usize },
    GatherRows(Var, Vec<usize>),
    Propagate(Arc<SparseMatrix>, Var),
    RowCosine(Var, Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
    grad: Option<Tensor>,
}

/// Cosine similarity with zero-norm vectors mapped to 0, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (dot, na, nb) = cosine_parts(a, b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Euclidean norm, accumulated in the same order as [`cosine`] does.
pub fn norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
}

/// [`cosine`] with both norms supplied; bit-identical to it when the norms
/// come from [`norm`].
pub fn cosine_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot = a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y);
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn cosine_parts(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    (dot, aa.sqrt(), bb.sqrt())
}

/// Define-by-run record of executed ops.
///
/// Nodes are appended in execution order, so every node's inputs precede it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copies `v` into a constant leaf; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let bc = Broadcast::resolve(av, bv)?;
        let n = av.last_dim();
        let bd = bv.data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = bd[bc.index(i, n)];
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                }
            })
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Binary(kind, a, b, bc), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    fn unary(&mut self, kind: UnaryKind, a: Var) -> Var {
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .map(|&x| match kind {
                UnaryKind::Relu => x.max(0.0),
                UnaryKind::Abs => x.abs(),
            })
            .collect();
        let out = Tensor { shape: av.shape().to_vec(), data };
        let rg = self.needs(&[a]);
        self.push(out, Op::Unary(kind, a), rg)
    }

    /// max(x, 0); the adjoint at exactly 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Relu, a)
    }

    /// |x|; the adjoint is sign(x) with sign(0) = 0.
    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Abs, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let out = Tensor { shape: av.shape().to_vec(), data: av.data().iter().map(|x| x * c).collect() };
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let out = Tensor { shape: av.shape().to_vec(), data: av.data().iter().map(|x| x + c).collect() };
        let rg = self.needs(&[a]);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.sum() / av.numel().max(1) as f64;
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshaped(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Concatenates along the final axis; all other axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| KitsError::Dimension("concat of zero tensors".into()))?;
        let lead = {
            let s = self.value(*first).shape();
            if s.is_empty() {
                return Err(KitsError::Dimension("concat of scalars".into()));
            }
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = self.value(*p).shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(KitsError::Dimension(format!(
                    "concat_last: leading dims {:?} vs {:?}",
                    lead,
                    &s[..s.len().saturating_sub(1)]
                )));
            }
            widths.push(s[s.len() - 1]);
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = self.value(*p).data();
            for r in 0..rows {
                data[r * total + offset..r * total + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead;
        shape.push(total);
        let rg = self.needs(parts);
        Ok(self.push(Tensor { shape, data }, Op::ConcatLast(parts.to_vec()), rg))
    }

    /// Splits the final axis into consecutive chunks of the given widths.
    pub fn split_last(&mut self, a: Var, widths: &[usize]) -> Result<Vec<Var>> {
        let s = self.value(a).shape().to_vec();
        let last = *s.last().ok_or_else(|| KitsError::Dimension("split of a scalar".into()))?;
        if widths.iter().sum::<usize>() != last {
            return Err(KitsError::Dimension(format!("split widths {:?} do not sum to {}", widths, last)));
        }
        let rows = self.value(a).numel() / last.max(1);
        let mut out = Vec::with_capacity(widths.len());
        let mut start = 0;
        for &w in widths {
            let src = self.value(a).data();
            let mut data = Vec::with_capacity(rows * w);
            for r in 0..rows {
                data.extend_from_slice(&src[r * last + start..r * last + start + w]);
            }
            let mut shape = s.clone();
            *shape.last_mut().unwrap() = w;
            let rg = self.needs(&[a]);
            out.push(self.push(Tensor { shape, data }, Op::SliceLast { src: a, start }, rg));
            start += w;
        }
        Ok(out)
    }

    /// Selects rows of a matrix; backward scatter-adds, so duplicates accumulate.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (n, d) = as_matrix(self.value(a))?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(KitsError::Index(format!("row {} out of range for {} rows", bad, n)));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor { shape: vec![idx.len(), d], data }, Op::GatherRows(a, idx.to_vec()), rg))
    }

    /// Applies a constant `n×n` operator to every `n`-row slice of `a`.
    ///
    /// `a` is `[s·n, d]`; slice `k` occupies rows `k·n..(k+1)·n`.
    pub fn propagate(&mut self, op: &Arc<SparseMatrix>, a: Var) -> Result<Var> {
        let (rows, d) = as_matrix(self.value(a))?;
        let n = op.n_rows();
        if op.n_cols() != n || n == 0 || rows % n != 0 {
            return Err(KitsError::Dimension(format!(
                "propagate: operator {}×{} against {} rows",
                op.n_rows(),
                op.n_cols(),
                rows
            )));
        }
        let src = self.value(a).data();
        let mut data = vec![0.0; rows * d];
        for s in 0..rows / n {
            let base = s * n;
            for i in 0..n {
                let out = &mut data[(base + i) * d..(base + i + 1) * d];
                for (j, w) in op.row(i) {
                    let inp = &src[(base + j) * d..(base + j + 1) * d];
                    for (o, x) in out.iter_mut().zip(inp) {
                        *o += w * x;
                    }
                }
            }
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor { shape: vec![rows, d], data }, Op::Propagate(Arc::clone(op), a), rg))
    }

    /// Row-wise cosine similarity of two `[r, d]` matrices, giving `[r, 1]`.
    /// Rows with zero norm yield 0 and pass no gradient.
    pub fn row_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, d) = as_matrix(self.value(a))?;
        if self.value(b).shape() != [r, d] {
            return Err(KitsError::Dimension(format!(
                "row_cosine of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let data = (0..r).map(|i| cosine(&ad[i * d..(i + 1) * d], &bd[i * d..(i + 1) * d])).collect();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor { shape: vec![r, 1], data }, Op::RowCosine(a, b), rg))
    }

    /// Smallest |x| over every relu/abs input recorded so far.
    ///
    /// Finite-difference checks are only meaningful when this exceeds the step.
    pub fn min_kink_distance(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Unary(_, a) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.nodes[a.0].value.data().iter().map(|x| x.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Branch indicators of every non-smooth op recorded so far, in tape
    /// order: the sign of each relu/abs input, and for each row cosine whether
    /// it was clamped to ±1 or hit a zero-norm row.
    ///
    /// Two evaluations with equal patterns follow the same smooth branch.
    pub fn kink_pattern(&self) -> Vec<i8> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Unary(_, a) => {
                    out.extend(self.nodes[a.0].value.data().iter().map(|&x| x.partial_cmp(&0.0).map_or(0, |o| o as i8)))
                }
                Op::RowCosine(a, b) => {
                    let d = self.nodes[a.0].value.last_dim();
                    let (ad, bd) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    for (i, &c) in node.value.data().iter().enumerate() {
                        let (_, na, nb) = cosine_parts(&ad[i * d..(i + 1) * d], &bd[i * d..(i + 1) * d]);
                        out.push(if na == 0.0 || nb == 0.0 {
                            2
                        } else if c.abs() == 1.0 {
                            1
                        } else {
                            0
                        });
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Reverse sweep from a scalar root. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(KitsError::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = Vec::new();
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(vec![1.0]);
        let mut leaf_updates = Vec::new();
        let nodes = &self.nodes;

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                let target = &nodes[v.0];
                if target.requires_grad {
                    f(adj[v.0].get_or_insert_with(|| vec![0.0; target.value.numel()]));
                }
            };
            match &node.op {
                Op::Leaf => leaf_updates.push((i, g)),
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    let n = bv.shape()[1];
                    acc(*a, &mut |da| gemm_nt(m, n, k, &g, bv.data(), da));
                    acc(*b, &mut |db| gemm_tn(m, k, n, av.data(), &g, db));
                }
                Op::Binary(kind, a, b, bc) => {
                    let (ad, bd) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    let n = nodes[a.0].value.last_dim();
                    acc(*a, &mut |da| match kind {
                        BinaryKind::Add | BinaryKind::Sub => da.iter_mut().zip(&g).for_each(|(d, x)| *d += x),
                        BinaryKind::Mul => {
                            for (j, (d, x)) in da.iter_mut().zip(&g).enumerate() {
                                *d += x * bd[bc.index(j, n)];
                            }
                        }
                    });
                    acc(*b, &mut |db| {
                        for (j, &x) in g.iter().enumerate() {
                            db[bc.index(j, n)] += match kind {
                                BinaryKind::Add => x,
                                BinaryKind::Sub => -x,
                                BinaryKind::Mul => x * ad[j],
                            };
                        }
                    });
                }
                Op::Unary(kind, a) => {
                    let ad = nodes[a.0].value.data();
                    acc(*a, &mut |da| {
                        for ((d, &x), &gx) in da.iter_mut().zip(ad).zip(&g) {
                            let local = match kind {
                                UnaryKind::Relu if x > 0.0 => 1.0,
                                UnaryKind::Relu => 0.0,
                                UnaryKind::Abs if x > 0.0 => 1.0,
                                UnaryKind::Abs if x < 0.0 => -1.0,
                                UnaryKind::Abs => 0.0,
                            };
                            *d += local * gx;
                        }
                    });
                }
                Op::Scale(a, c) => acc(*a, &mut |da| da.iter_mut().zip(&g).for_each(|(d, x)| *d += c * x)),
                Op::AddScalar(a) | Op::Reshape(a) => {
                    acc(*a, &mut |da| da.iter_mut().zip(&g).for_each(|(d, x)| *d += x))
                }
                Op::Sum(a) => acc(*a, &mut |da| da.iter_mut().for_each(|d| *d += g[0])),
                Op::Mean(a) => {
                    let n = nodes[a.0].value.numel().max(1) as f64;
                    acc(*a, &mut |da| da.iter_mut().for_each(|d| *d += g[0] / n));
                }
                Op::ConcatLast(parts) => {
                    let total = node.value.last_dim();
                    let rows = node.value.numel() / total.max(1);
                    let mut offset = 0;
                    for p in parts {
                        let w = nodes[p.0].value.last_dim();
                        acc(*p, &mut |dp| {
                            for r in 0..rows {
                                let src = &g[r * total + offset..r * total + offset + w];
                                dp[r * w..(r + 1) * w].iter_mut().zip(src).for_each(|(d, x)| *d += x);
                            }
                        });
                        offset += w;
                    }
                }
                Op::SliceLast { src, start } => {
                    let last = nodes[src.0].value.last_dim();
                    let w = node.value.last_dim();
                    let rows = node.value.numel() / w.max(1);
                    acc(*src, &mut |ds| {
                        for r in 0..rows {
                            ds[r * last + start..r * last + start + w]
                                .iter_mut()
                                .zip(&g[r * w..(r + 1) * w])
                                .for_each(|(d, x)| *d += x);
                        }
                    });
                }
                Op::GatherRows(a, idx) => {
                    let d = nodes[a.0].value.last_dim();
                    acc(*a, &mut |da| {
                        for (r, &src) in idx.iter().enumerate() {
                            da[src * d..(src + 1) * d]
                                .iter_mut()
                                .zip(&g[r * d..(r + 1) * d])
                                .for_each(|(t, x)| *t += x);
                        }
                    });
                }
                Op::Propagate(op, a) => {
                    let n = op.n_rows();
                    let d = node.value.last_dim();
                    let rows = node.value.numel() / d.max(1);
                    acc(*a, &mut |da| {
                        for s in 0..rows / n {
                            let base = s * n;
                            for i in 0..n {
                                let gi = &g[(base + i) * d..(base + i + 1) * d];
                                for (j, w) in op.row(i) {
                                    da[(base + j) * d..(base + j + 1) * d]
                                        .iter_mut()
                                        .zip(gi)
                                        .for_each(|(t, x)| *t += w * x);
                                }
                            }
                        }
                    });
                }
                Op::RowCosine(a, b) => {
                    let (ad, bd) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    let d = nodes[a.0].value.last_dim();
                    // d cos / d x = y/(|x||y|) - cos·x/|x|²
                    let cos_grad = |dst: &mut [f64], from_first: bool| {
                        for (r, &gr) in g.iter().enumerate() {
                            let (x, y) = (&ad[r * d..(r + 1) * d], &bd[r * d..(r + 1) * d]);
                            let (dot, na, nb) = cosine_parts(x, y);
                            if na == 0.0 || nb == 0.0 {
                                continue;
                            }
                            let c = dot / (na * nb);
                            let (own, other, n_own) = if from_first { (x, y, na) } else { (y, x, nb) };
                            for k in 0..d {
                                dst[r * d + k] += gr * (other[k] / (na * nb) - c * own[k] / (n_own * n_own));
                            }
                        }
                    };
                    acc(*a, &mut |da| cos_grad(da, true));
                    acc(*b, &mut |db| cos_grad(db, false));
                }
            }
        }

        for (i, g) in leaf_updates {
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(existing) => existing.data_mut().iter_mut().zip(&g).for_each(|(e, x)| *e += x),
                None => node.grad = Some(Tensor { shape: node.value.shape().to_vec(), data: g }),
            }
        }
        Ok(())
    }
}
