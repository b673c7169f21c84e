//! Minimal reverse-mode autodiff over [`Matrix`] values.
//!
//! A [`Tape`] records a define-by-run graph; [`Tape::backward`] walks it in
//! reverse and accumulates gradients for every node. The op set is exactly
//! what the seq2seq backbone and the memory attention need, nothing more.
//! Every backward rule is covered by finite-difference tests.

use crate::numerics::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Scale(Var, f64),
    /// C = A * B
    MatMul(Var, Var),
    /// C = A * B^T
    MatMulNT(Var, Var),
    /// Broadcast a 1 x m row onto every row of an n x m matrix.
    AddRow(Var, Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, eps: f64 },
    Gelu(Var),
    ConcatRows(Var, Var),
    ConcatCols(Vec<Var>),
    ColSlice { x: Var, start: usize, len: usize },
    GatherRows { table: Var, ids: Vec<usize> },
    MeanRows(Var),
    Reshape(Var),
    /// Mean over heads of per-head scaled dot products between a 1 x d query
    /// and each row of a T x d key matrix; output 1 x T.
    HeadMeanDots { query: Var, keys: Var, heads: usize },
    /// Sum of per-position negative log likelihoods; output 1 x 1.
    CrossEntropySum { logits: Var, targets: Vec<usize> },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Grads {
    by_node: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.by_node[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.by_node[v.0].take()
    }

    /// Gradient of a leaf, or zeros when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Matrix {
        match self.by_node[v.0] {
            Some(ref g) => g.clone(),
            None => Matrix::zeros(rows, cols),
        }
    }
}

fn gelu_scalar(x: f64) -> f64 {
    // tanh approximation; smooth everywhere, which keeps finite-difference
    // probes well behaved.
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_nt(self.value(b));
        self.push(value, Op::MatMulNT(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, r) = (self.value(a), self.value(row));
        assert_eq!(r.rows(), 1);
        assert_eq!(m.cols(), r.cols());
        let value = Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) + r.get(0, j));
        self.push(value, Op::AddRow(a, row))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut value = Matrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            let row = m.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let out = value.row_mut(i);
            let mut sum = 0.0;
            for (o, &x) in out.iter_mut().zip(row.iter()) {
                *o = (x - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let (m, g, b) = (self.value(x), self.value(gain), self.value(bias));
        assert_eq!(g.rows(), 1);
        assert_eq!(b.rows(), 1);
        assert_eq!(g.cols(), m.cols());
        assert_eq!(b.cols(), m.cols());
        let n = m.cols() as f64;
        let mut value = Matrix::zeros(m.rows(), m.cols());
        for i in 0..m.rows() {
            let row = m.row(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..m.cols() {
                let xhat = (row[j] - mean) * inv;
                value.set(i, j, xhat * g.get(0, j) + b.get(0, j));
            }
        }
        self.push(value, Op::LayerNorm { x, gain, bias, eps })
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::from_fn(m.rows(), m.cols(), |i, j| gelu_scalar(m.get(i, j)));
        self.push(value, Op::Gelu(a))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (self.value(a), self.value(b));
        assert_eq!(ma.cols(), mb.cols());
        let mut data = Vec::with_capacity((ma.rows() + mb.rows()) * ma.cols());
        data.extend_from_slice(ma.data());
        data.extend_from_slice(mb.data());
        let value = Matrix::from_vec(ma.rows() + mb.rows(), ma.cols(), data).unwrap();
        self.push(value, Op::ConcatRows(a, b))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut value = Matrix::zeros(rows, total);
        let mut offset = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows(), rows);
            for i in 0..rows {
                for j in 0..m.cols() {
                    value.set(i, offset + j, m.get(i, j));
                }
            }
            offset += m.cols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn col_slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let m = self.value(x);
        assert!(start + len <= m.cols());
        let value = Matrix::from_fn(m.rows(), len, |i, j| m.get(i, start + j));
        self.push(value, Op::ColSlice { x, start, len })
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Matrix::zeros(ids.len(), t.cols());
        for (i, &id) in ids.iter().enumerate() {
            assert!(id < t.rows(), "gather_rows: id {id} out of range");
            value.row_mut(i).copy_from_slice(t.row(id));
        }
        self.push(value, Op::GatherRows { table, ids: ids.to_vec() })
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let n = m.rows() as f64;
        let mut value = Matrix::zeros(1, m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                value.set(0, j, value.get(0, j) + m.get(i, j) / n);
            }
        }
        self.push(value, Op::MeanRows(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.rows() * m.cols(), rows * cols);
        let value = Matrix::from_vec(rows, cols, m.data().to_vec()).unwrap();
        self.push(value, Op::Reshape(a))
    }

    /// raw_t = (1/H) * sum_h <q_h, k_{t,h}> / sqrt(d/H), where `_h` selects
    /// the h-th contiguous column block.
    pub fn head_mean_dots(&mut self, query: Var, keys: Var, heads: usize) -> Var {
        let (q, k) = (self.value(query), self.value(keys));
        assert_eq!(q.rows(), 1);
        assert_eq!(q.cols(), k.cols());
        assert_eq!(q.cols() % heads, 0);
        let dh = q.cols() / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut value = Matrix::zeros(1, k.rows());
        for t in 0..k.rows() {
            let mut acc = 0.0;
            for h in 0..heads {
                let mut dot = 0.0;
                for j in h * dh..(h + 1) * dh {
                    dot += q.get(0, j) * k.get(t, j);
                }
                acc += dot * scale;
            }
            value.set(0, t, acc / heads as f64);
        }
        self.push(value, Op::HeadMeanDots { query, keys, heads })
    }

    /// Sum over positions of -log softmax(logits_i)[target_i].
    pub fn cross_entropy_sum(&mut self, logits: Var, targets: &[usize]) -> Var {
        let m = self.value(logits);
        assert_eq!(m.rows(), targets.len());
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            assert!(t < m.cols());
            let row = m.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let value = Matrix::from_vec(1, 1, vec![total]).unwrap();
        self.push(value, Op::CrossEntropySum { logits, targets: targets.to_vec() })
    }

    /// Reverse pass from a scalar root. Gradients accumulate for every node
    /// reached from the root.
    pub fn backward(&self, root: Var) -> Grads {
        let root_val = self.value(root);
        assert_eq!(root_val.shape(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::from_vec(1, 1, vec![1.0]).unwrap());

        for idx in (0..self.nodes.len()).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(&mut grads, *a, &g, self);
                    acc(&mut grads, *b, &g, self);
                }
                Op::Scale(a, c) => {
                    acc_owned(&mut grads, *a, g.scale(*c), self);
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&g);
                    acc_owned(&mut grads, *a, da, self);
                    acc_owned(&mut grads, *b, db, self);
                }
                Op::MatMulNT(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.matmul_tn(self.value(*a));
                    acc_owned(&mut grads, *a, da, self);
                    acc_owned(&mut grads, *b, db, self);
                }
                Op::AddRow(a, row) => {
                    let mut drow = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            drow.set(0, j, drow.get(0, j) + g.get(i, j));
                        }
                    }
                    acc(&mut grads, *a, &g, self);
                    acc_owned(&mut grads, *row, drow, self);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let dot: f64 =
                            (0..y.cols()).map(|j| g.get(i, j) * y.get(i, j)).sum();
                        for j in 0..y.cols() {
                            dx.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    acc_owned(&mut grads, *a, dx, self);
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let m = self.value(*x);
                    let gn = self.value(*gain);
                    let n = m.cols() as f64;
                    let mut dx = Matrix::zeros(m.rows(), m.cols());
                    let mut dgain = Matrix::zeros(1, m.cols());
                    let mut dbias = Matrix::zeros(1, m.cols());
                    for i in 0..m.rows() {
                        let row = m.row(i);
                        let mean = row.iter().sum::<f64>() / n;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        // dy/dxhat = gain, then the standard layernorm pullback.
                        let dxhat: Vec<f64> =
                            (0..m.cols()).map(|j| g.get(i, j) * gn.get(0, j)).collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / n;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                        for j in 0..m.cols() {
                            dx.set(
                                i,
                                j,
                                inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat),
                            );
                            dgain.set(0, j, dgain.get(0, j) + g.get(i, j) * xhat[j]);
                            dbias.set(0, j, dbias.get(0, j) + g.get(i, j));
                        }
                    }
                    acc_owned(&mut grads, *x, dx, self);
                    acc_owned(&mut grads, *gain, dgain, self);
                    acc_owned(&mut grads, *bias, dbias, self);
                }
                Op::Gelu(a) => {
                    let m = self.value(*a);
                    let dx = Matrix::from_fn(m.rows(), m.cols(), |i, j| {
                        g.get(i, j) * gelu_grad_scalar(m.get(i, j))
                    });
                    acc_owned(&mut grads, *a, dx, self);
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.value(*a).rows();
                    let cols = g.cols();
                    let da = Matrix::from_fn(ra, cols, |i, j| g.get(i, j));
                    let db = Matrix::from_fn(g.rows() - ra, cols, |i, j| g.get(ra + i, j));
                    acc_owned(&mut grads, *a, da, self);
                    acc_owned(&mut grads, *b, db, self);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let dp = Matrix::from_fn(g.rows(), w, |i, j| g.get(i, offset + j));
                        acc_owned(&mut grads, *p, dp, self);
                        offset += w;
                    }
                }
                Op::ColSlice { x, start, len } => {
                    let m = self.value(*x);
                    let mut dx = Matrix::zeros(m.rows(), m.cols());
                    for i in 0..g.rows() {
                        for j in 0..*len {
                            dx.set(i, start + j, g.get(i, j));
                        }
                    }
                    acc_owned(&mut grads, *x, dx, self);
                }
                Op::GatherRows { table, ids } => {
                    let t = self.value(*table);
                    let mut dt = Matrix::zeros(t.rows(), t.cols());
                    for (i, &id) in ids.iter().enumerate() {
                        for j in 0..t.cols() {
                            dt.set(id, j, dt.get(id, j) + g.get(i, j));
                        }
                    }
                    acc_owned(&mut grads, *table, dt, self);
                }
                Op::MeanRows(a) => {
                    let m = self.value(*a);
                    let n = m.rows() as f64;
                    let dx = Matrix::from_fn(m.rows(), m.cols(), |_, j| g.get(0, j) / n);
                    acc_owned(&mut grads, *a, dx, self);
                }
                Op::Reshape(a) => {
                    let m = self.value(*a);
                    let dx = Matrix::from_vec(m.rows(), m.cols(), g.data().to_vec()).unwrap();
                    acc_owned(&mut grads, *a, dx, self);
                }
                Op::HeadMeanDots { query, keys, heads } => {
                    let q = self.value(*query);
                    let k = self.value(*keys);
                    let dh = q.cols() / heads;
                    // Uniform per-head scaling collapses to one coefficient.
                    let coef = 1.0 / (*heads as f64 * (dh as f64).sqrt());
                    let mut dq = Matrix::zeros(1, q.cols());
                    let mut dk = Matrix::zeros(k.rows(), k.cols());
                    for t in 0..k.rows() {
                        let gt = g.get(0, t) * coef;
                        for j in 0..q.cols() {
                            dq.set(0, j, dq.get(0, j) + gt * k.get(t, j));
                            dk.set(t, j, gt * q.get(0, j));
                        }
                    }
                    acc_owned(&mut grads, *query, dq, self);
                    acc_owned(&mut grads, *keys, dk, self);
                }
                Op::CrossEntropySum { logits, targets } => {
                    let m = self.value(*logits);
                    let gs = g.get(0, 0);
                    let mut dl = Matrix::zeros(m.rows(), m.cols());
                    for (i, &t) in targets.iter().enumerate() {
                        let row = m.row(i);
                        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let mut sum = 0.0;
                        for &v in row {
                            sum += (v - max).exp();
                        }
                        for j in 0..m.cols() {
                            let p = (row[j] - max).exp() / sum;
                            let delta = if j == t { 1.0 } else { 0.0 };
                            dl.set(i, j, gs * (p - delta));
                        }
                    }
                    acc_owned(&mut grads, *logits, dl, self);
                }
            }
        }
        Grads { by_node: grads }
    }
}

fn acc(grads: &mut [Option<Matrix>], v: Var, delta: &Matrix, tape: &Tape) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign_scaled(delta, 1.0),
        slot @ None => {
            let shape = tape.value(v).shape();
            debug_assert_eq!(delta.shape(), shape);
            *slot = Some(delta.clone());
        }
    }
}

fn acc_owned(grads: &mut [Option<Matrix>], v: Var, delta: Matrix, tape: &Tape) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign_scaled(&delta, 1.0),
        slot @ None => {
            debug_assert_eq!(delta.shape(), tape.value(v).shape());
            *slot = Some(delta);
        }
    }
}
