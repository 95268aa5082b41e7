//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records every operation of one forward pass; `backward`
//! walks it in reverse and accumulates gradients into every node. Tensors
//! are row-major and the first dimension is the batch.

/// A node on the tape: value, shape and the gradient accumulated by
/// `backward` (same length as the value).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    fn new(shape: Vec<usize>, value: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        debug_assert!(value.iter().all(|v| v.is_finite()), "non-finite value on tape");
        let grad = vec![0.0; value.len()];
        Self { shape, value, grad }
    }

    fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch row.
    fn row(&self) -> usize {
        self.value.len() / self.shape[0].max(1)
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var },
    Relu(Var),
    MaxPoolRows { x: Var, argmax: Vec<usize> },
    Dense { x: Var, w: Var, b: Var },
    Softmax(Var),
    Bce { p: Var, target: Vec<f64> },
    Huber { x: Var, target: Vec<f64>, delta: f64 },
    Gather { x: Var, idx: Vec<usize> },
    Add(Var, Var),
}

/// Lower clamp applied to probabilities inside the cross-entropy.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<(Tensor, Op)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, t: Tensor, op: Op) -> Var {
        self.nodes.push((t, op));
        Var(self.nodes.len() - 1)
    }

    fn t(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].0
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        self.t(v)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.t(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.t(v).shape
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.t(v).grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, shape: &[usize], value: Vec<f64>) -> Var {
        assert_eq!(
            shape.iter().product::<usize>(),
            value.len(),
            "leaf shape {shape:?} does not match {} values",
            value.len()
        );
        self.push(Tensor::new(shape.to_vec(), value), Op::Leaf)
    }

    /// Same-padded, stride-1 convolution. `x` is `[B, C, H, W]`, `w` is
    /// `[F, C, KH, KW]` with odd kernel sizes, `b` is `[F]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        assert_eq!(xs.len(), 4, "conv input must be [B, C, H, W]");
        assert_eq!(ws.len(), 4, "conv kernel must be [F, C, KH, KW]");
        let [bn, c, h, wd] = [xs[0], xs[1], xs[2], xs[3]];
        let [f, wc, kh, kw] = [ws[0], ws[1], ws[2], ws[3]];
        assert_eq!(c, wc, "conv channel mismatch");
        assert!(kh % 2 == 1 && kw % 2 == 1, "conv kernels must be odd");
        assert_eq!(self.shape(b), [f], "conv bias shape");
        let (ph, pw) = (kh / 2, kw / 2);
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = vec![0.0; bn * f * h * wd];
        for n in 0..bn {
            for fo in 0..f {
                let o = &mut out[(n * f + fo) * h * wd..(n * f + fo + 1) * h * wd];
                o.iter_mut().for_each(|v| *v = bv[fo]);
                for ci in 0..c {
                    let xin = &xv[(n * c + ci) * h * wd..(n * c + ci + 1) * h * wd];
                    for di in 0..kh {
                        for dj in 0..kw {
                            let k = wv[((fo * c + ci) * kh + di) * kw + dj];
                            for i in 0..h {
                                let ii = i + di;
                                if ii < ph || ii - ph >= h {
                                    continue;
                                }
                                for j in 0..wd {
                                    let jj = j + dj;
                                    if jj < pw || jj - pw >= wd {
                                        continue;
                                    }
                                    o[i * wd + j] += k * xin[(ii - ph) * wd + (jj - pw)];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.push(Tensor::new(vec![bn, f, h, wd], out), Op::Conv2d { x, w, b })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.t(x);
        let v = t.value.iter().map(|&a| a.max(0.0)).collect();
        let shape = t.shape.clone();
        self.push(Tensor::new(shape, v), Op::Relu(x))
    }

    /// Max over non-overlapping windows of `pool` rows; a final partial
    /// window is kept, so `H` becomes `ceil(H / pool)`.
    pub fn max_pool_rows(&mut self, x: Var, pool: usize) -> Var {
        assert!(pool > 0);
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 4, "pool input must be [B, C, H, W]");
        let [bn, c, h, w] = [xs[0], xs[1], xs[2], xs[3]];
        let ho = h.div_ceil(pool);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(bn * c * ho * w);
        let mut argmax = Vec::with_capacity(bn * c * ho * w);
        for nc in 0..bn * c {
            for i in 0..ho {
                for j in 0..w {
                    let mut best = (nc * h + i * pool) * w + j;
                    for r in i * pool + 1..((i + 1) * pool).min(h) {
                        let idx = (nc * h + r) * w + j;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best);
                }
            }
        }
        self.push(Tensor::new(vec![bn, c, ho, w], out), Op::MaxPoolRows { x, argmax })
    }

    /// `y = x W^T + b` per batch row; `x` is flattened after the batch
    /// dimension, `w` is `[M, N]`, `b` is `[M]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (bn, n) = (self.t(x).batch(), self.t(x).row());
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 2, "dense weight must be [M, N]");
        let m = ws[0];
        assert_eq!(ws[1], n, "dense input width {n} does not match weight {ws:?}");
        assert_eq!(self.shape(b), [m], "dense bias shape");
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = vec![0.0; bn * m];
        for r in 0..bn {
            let xr = &xv[r * n..(r + 1) * n];
            for k in 0..m {
                let wr = &wv[k * n..(k + 1) * n];
                out[r * m + k] = bv[k] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        self.push(Tensor::new(vec![bn, m], out), Op::Dense { x, w, b })
    }

    /// Softmax over each batch row.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (bn, k) = (self.t(x).batch(), self.t(x).row());
        let xv = self.value(x);
        let mut out = vec![0.0; bn * k];
        for r in 0..bn {
            let row = &xv[r * k..(r + 1) * k];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &v) in out[r * k..(r + 1) * k].iter_mut().zip(row) {
                *o = (v - mx).exp();
                z += *o;
            }
            out[r * k..(r + 1) * k].iter_mut().for_each(|o| *o /= z);
        }
        self.push(Tensor::new(vec![bn, k], out), Op::Softmax(x))
    }

    /// Binary cross-entropy averaged over every entry. Probabilities are
    /// clamped to `[PROB_EPS, 1 - PROB_EPS]`; the gradient is taken at the
    /// clamped value.
    pub fn bce(&mut self, p: Var, target: Vec<f64>) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.len(), target.len(), "bce target length");
        let loss = bce_value(pv, &target);
        self.push(Tensor::new(vec![1], vec![loss]), Op::Bce { p, target })
    }

    /// Mean Huber loss between `x` (any shape) and `target`.
    pub fn huber(&mut self, x: Var, target: Vec<f64>, delta: f64) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), target.len(), "huber target length");
        let n = xv.len().max(1) as f64;
        let loss = xv.iter().zip(&target).map(|(a, t)| huber(a - t, delta)).sum::<f64>() / n;
        self.push(Tensor::new(vec![1], vec![loss]), Op::Huber { x, target, delta })
    }

    /// Picks `x[r, idx[r]]` from each row of a `[B, K]` tensor.
    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let (bn, k) = (self.t(x).batch(), self.t(x).row());
        assert_eq!(idx.len(), bn, "gather index count");
        assert!(idx.iter().all(|&i| i < k), "gather index out of range");
        let xv = self.value(x);
        let out = idx.iter().enumerate().map(|(r, &i)| xv[r * k + i]).collect();
        self.push(Tensor::new(vec![bn], out), Op::Gather { x, idx })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, v), Op::Add(a, b))
    }

    /// Back-propagates from a single-element `root`, overwriting all
    /// previously accumulated gradients.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.t(root).value.len(), 1, "backward needs a scalar root");
        for (t, _) in &mut self.nodes {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[root.0].0.grad[0] = 1.0;
        for i in (0..=root.0).rev() {
            let (before, after) = self.nodes.split_at_mut(i);
            let (node, op) = &after[0];
            if node.grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            backprop(before, node, op);
        }
    }
}

pub fn huber(e: f64, delta: f64) -> f64 {
    if e.abs() <= delta {
        0.5 * e * e
    } else {
        delta * (e.abs() - 0.5 * delta)
    }
}

fn bce_value(p: &[f64], y: &[f64]) -> f64 {
    let n = p.len().max(1) as f64;
    -p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()
        })
        .sum::<f64>()
        / n
}

fn backprop(before: &mut [(Tensor, Op)], node: &Tensor, op: &Op) {
    let g = &node.grad;
    match op {
        Op::Leaf => {}
        Op::Relu(x) => {
            let xt = &mut before[x.0].0;
            for ((dx, &v), &d) in xt.grad.iter_mut().zip(&node.value).zip(g) {
                if v > 0.0 {
                    *dx += d;
                }
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                before[v.0].0.grad.iter_mut().zip(g).for_each(|(dx, d)| *dx += d);
            }
        }
        Op::Gather { x, idx } => {
            let xt = &mut before[x.0].0;
            let k = xt.row();
            for (r, &i) in idx.iter().enumerate() {
                xt.grad[r * k + i] += g[r];
            }
        }
        Op::MaxPoolRows { x, argmax } => {
            let xt = &mut before[x.0].0;
            for (&src, &d) in argmax.iter().zip(g) {
                xt.grad[src] += d;
            }
        }
        Op::Softmax(x) => {
            let k = node.row();
            let xt = &mut before[x.0].0;
            for r in 0..node.batch() {
                let y = &node.value[r * k..(r + 1) * k];
                let dy = &g[r * k..(r + 1) * k];
                let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                for j in 0..k {
                    xt.grad[r * k + j] += y[j] * (dy[j] - dot);
                }
            }
        }
        Op::Bce { p, target } => {
            let pt = &mut before[p.0].0;
            let n = target.len().max(1) as f64;
            for ((dp, &pv), &y) in pt.grad.iter_mut().zip(&pt.value).zip(target) {
                let pc = pv.clamp(PROB_EPS, 1.0 - PROB_EPS);
                *dp += g[0] * -(y / pc - (1.0 - y) / (1.0 - pc)) / n;
            }
        }
        Op::Huber { x, target, delta } => {
            let xt = &mut before[x.0].0;
            let n = target.len().max(1) as f64;
            for ((dx, &v), &t) in xt.grad.iter_mut().zip(&xt.value).zip(target) {
                *dx += g[0] * (v - t).clamp(-delta, *delta) / n;
            }
        }
        Op::Dense { x, w, b } => {
            let (bn, m) = (node.batch(), node.row());
            let n = before[x.0].0.row();
            for r in 0..bn {
                for k in 0..m {
                    before[b.0].0.grad[k] += g[r * m + k];
                }
            }
            {
                let (xs, ws) = two(before, *x, *w);
                for r in 0..bn {
                    let xr = &xs.value[r * n..(r + 1) * n];
                    for k in 0..m {
                        let d = g[r * m + k];
                        if d == 0.0 {
                            continue;
                        }
                        let wg = &mut ws.grad[k * n..(k + 1) * n];
                        wg.iter_mut().zip(xr).for_each(|(a, &xv)| *a += d * xv);
                    }
                }
                for r in 0..bn {
                    let xg = &mut xs.grad[r * n..(r + 1) * n];
                    for k in 0..m {
                        let d = g[r * m + k];
                        if d == 0.0 {
                            continue;
                        }
                        let wr = &ws.value[k * n..(k + 1) * n];
                        xg.iter_mut().zip(wr).for_each(|(a, &wv)| *a += d * wv);
                    }
                }
            }
        }
        Op::Conv2d { x, w, b } => {
            let ns = &node.shape;
            let [bn, f, h, wd] = [ns[0], ns[1], ns[2], ns[3]];
            let ws_shape = before[w.0].0.shape.clone();
            let [c, kh, kw] = [ws_shape[1], ws_shape[2], ws_shape[3]];
            let (ph, pw) = (kh / 2, kw / 2);
            for n in 0..bn {
                for fo in 0..f {
                    let go = &g[(n * f + fo) * h * wd..(n * f + fo + 1) * h * wd];
                    before[b.0].0.grad[fo] += go.iter().sum::<f64>();
                }
            }
            let (xs, ws) = two(before, *x, *w);
            for n in 0..bn {
                for fo in 0..f {
                    let go = &g[(n * f + fo) * h * wd..(n * f + fo + 1) * h * wd];
                    for ci in 0..c {
                        let base = (n * c + ci) * h * wd;
                        for di in 0..kh {
                            for dj in 0..kw {
                                let widx = ((fo * c + ci) * kh + di) * kw + dj;
                                let k = ws.value[widx];
                                let mut dk = 0.0;
                                for i in 0..h {
                                    let ii = i + di;
                                    if ii < ph || ii - ph >= h {
                                        continue;
                                    }
                                    for j in 0..wd {
                                        let jj = j + dj;
                                        if jj < pw || jj - pw >= wd {
                                            continue;
                                        }
                                        let src = base + (ii - ph) * wd + (jj - pw);
                                        let d = go[i * wd + j];
                                        dk += d * xs.value[src];
                                        xs.grad[src] += d * k;
                                    }
                                }
                                ws.grad[widx] += dk;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Two distinct earlier nodes, mutably.
fn two(nodes: &mut [(Tensor, Op)], a: Var, b: Var) -> (&mut Tensor, &mut Tensor) {
    assert_ne!(a.0, b.0, "operand aliasing is not supported");
    if a.0 < b.0 {
        let (lo, hi) = nodes.split_at_mut(b.0);
        (&mut lo[a.0].0, &mut hi[0].0)
    } else {
        let (lo, hi) = nodes.split_at_mut(a.0);
        (&mut hi[0].0, &mut lo[b.0].0)
    }
}

/// Binary cross-entropy of probabilities against targets, averaged over
/// all entries.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> Result<f64, crate::LearnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(crate::LearnError::Shape(format!(
            "bce over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    Ok(bce_value(pred, target))
}
