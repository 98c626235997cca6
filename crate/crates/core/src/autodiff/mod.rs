//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation of one forward evaluation; calling
//! [`Tape::backward`] on a scalar node returns gradients for every node that
//! depends on a trainable leaf. Operations cover exactly what the autoencoders
//! and clustering objectives need.

mod kernels;

pub(crate) use kernels::{conv_forward, sigmoid, ConvGeom};

use kernels::{conv_backward_input, conv_backward_weight, matmul, matmul_nt_acc, matmul_tn_acc};

use crate::num::Scalar;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape {shape:?} does not match {} values",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::zero(); n],
        }
    }

    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn add_assign(&mut self, other: &[S]) {
        for (a, &b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Relu(Var),
    LeakyRelu(Var, S),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Sum(Var),
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    ConvTranspose {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Norm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<S>,
        inv_std: Vec<S>,
        batch_stats: bool,
    },
    GlobalAvgPool(Var),
    TimeSlice { x: Var, t: usize },
    Upsample { x: Var, steps: usize, channels: usize, factor: usize },
    SquaredDistance { a: Var, b: Var, scale: S },
    PairwiseEuclid { z: Var, w: Var },
    PairwiseCid { z: Var, w: Var, steps: usize, channels: usize, eps: S },
    StudentT { d: Var, alpha: S },
    KlToTarget { q: Var, p: Vec<S> },
    GaussianKl { mu: Var, logvar: Var },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Normalisation statistics of one channel-normalisation layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not influence the root.
    pub fn get_or_zeros(&self, v: Var, like: &[usize]) -> Tensor<S> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.to_vec()))
    }
}

#[derive(Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], "matmul {sa:?} x {sb:?}");
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let data = matmul(&self.value(a).data, &self.value(b).data, n, k, m);
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::new(vec![n, m], data), Op::MatMul(a, b), ng)
    }

    /// Adds a `[m]` bias to every row of an `[n, m]` matrix.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let m = *self.shape(a).last().unwrap();
        assert_eq!(self.value(b).len(), m, "bias width");
        let mut out = self.value(a).clone();
        let bias = &self.value(b).data;
        for row in out.data.chunks_mut(m) {
            for (x, &bv) in row.iter_mut().zip(bias) {
                *x += bv;
            }
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::AddBias(a, b), ng)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<S>, f: impl Fn(S, S) -> S) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shape mismatch");
        let va = self.value(a);
        let data = va
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(va.shape.clone(), data);
        let ng = self.needs(a) || self.needs(b);
        self.push(t, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn map(&mut self, a: Var, op: Op<S>, f: impl Fn(S) -> S) -> Var {
        let va = self.value(a);
        let t = Tensor::new(va.shape.clone(), va.data.iter().map(|&x| f(x)).collect());
        let ng = self.needs(a);
        self.push(t, op, ng)
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        self.map(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| if x > S::zero() { x } else { S::zero() })
    }

    pub fn leaky_relu(&mut self, a: Var, slope: S) -> Var {
        self.map(a, Op::LeakyRelu(a, slope), |x| if x > S::zero() { x } else { slope * x })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), |x| x.exp())
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().fold(S::zero(), |acc, &x| acc + x);
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let mut t = self.value(a).clone();
        assert_eq!(shape.iter().product::<usize>(), t.len(), "reshape size");
        t.shape = shape;
        let ng = self.needs(a);
        self.push(t, Op::Reshape(a), ng)
    }

    /// Columns `start..start+len` of an `[n, m]` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let s = self.shape(x);
        let (n, m) = (s[0], s[1]);
        assert!(start + len <= m, "slice out of range");
        let src = &self.value(x).data;
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            data.extend_from_slice(&src[i * m + start..i * m + start + len]);
        }
        let ng = self.needs(x);
        self.push(Tensor::new(vec![n, len], data), Op::SliceCols { x, start }, ng)
    }

    /// Horizontal concatenation of `[n, m_i]` matrices.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let n = self.shape(parts[0])[0];
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let s = self.shape(p);
                assert_eq!(s.len(), 2, "concat expects matrices");
                assert_eq!(s[0], n, "concat row mismatch");
                s[1]
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data[i * w..(i + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::new(vec![n, total], data), Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Stride-1 convolution of `[n, c_in, len]` by `[c_out, c_in, k]` plus `[c_out]` bias.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Var {
        let (sx, sw) = (self.shape(x), self.shape(w));
        assert_eq!(sx[1], sw[1], "conv channel mismatch");
        let geom = ConvGeom {
            batch: sx[0],
            c_in: sx[1],
            c_out: sw[0],
            len_in: sx[2],
            kernel: sw[2],
            pad,
        };
        let mut y = conv_forward(&self.value(x).data, &self.value(w).data, &geom);
        let lo = geom.len_out();
        add_channel_bias(&mut y, &self.value(b).data, geom.batch, geom.c_out, lo);
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            Tensor::new(vec![geom.batch, geom.c_out, lo], y),
            Op::Conv { x, w, b, geom },
            ng,
        )
    }

    /// Stride-1 transposed convolution; weight is `[c_in, c_out, k]`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Var {
        let (sx, sw) = (self.shape(x), self.shape(w));
        assert_eq!(sx[1], sw[0], "transposed conv channel mismatch");
        let (batch, c_in, len_in, c_out, kernel) = (sx[0], sx[1], sx[2], sw[1], sw[2]);
        let len_out = len_in + kernel - 1 - 2 * pad;
        // The equivalent forward convolution maps c_out -> c_in over len_out.
        let geom = ConvGeom {
            batch,
            c_in: c_out,
            c_out: c_in,
            len_in: len_out,
            kernel,
            pad,
        };
        let mut y = vec![S::zero(); batch * c_out * len_out];
        conv_backward_input(&mut y, &self.value(x).data, &self.value(w).data, &geom);
        add_channel_bias(&mut y, &self.value(b).data, batch, c_out, len_out);
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            Tensor::new(vec![batch, c_out, len_out], y),
            Op::ConvTranspose { x, w, b, geom },
            ng,
        )
    }

    /// Non-overlapping max pooling along the last axis of `[n, c, len]`.
    pub fn max_pool1d(&mut self, x: Var, kernel: usize) -> Var {
        let s = self.shape(x).to_vec();
        let (rows, len) = (s[0] * s[1], s[2]);
        let lo = len / kernel;
        let src = &self.value(x).data;
        let mut out = Vec::with_capacity(rows * lo);
        let mut argmax = Vec::with_capacity(rows * lo);
        for r in 0..rows {
            for t in 0..lo {
                let base = r * len + t * kernel;
                let mut best = base;
                for i in base + 1..base + kernel {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
        let ng = self.needs(x);
        self.push(
            Tensor::new(vec![s[0], s[1], lo], out),
            Op::MaxPool { x, argmax },
            ng,
        )
    }

    /// Per-channel normalisation of `[n, c, len]` followed by a learned affine map.
    ///
    /// With `frozen = None` the statistics come from the batch itself and are
    /// returned so callers can freeze them; otherwise the given statistics are
    /// treated as constants.
    pub fn channel_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        frozen: Option<&NormStats<S>>,
    ) -> (Var, NormStats<S>) {
        let s = self.shape(x).to_vec();
        let (n, c, l) = (s[0], s[1], s[2]);
        let src = &self.value(x).data;
        let eps = S::of(NORM_EPS);
        let stats = match frozen {
            Some(st) => st.clone(),
            None => {
                let cnt = S::of_usize(n * l);
                let mut mean = vec![S::zero(); c];
                let mut var = vec![S::zero(); c];
                for ch in 0..c {
                    let mut acc = S::zero();
                    for i in 0..n {
                        for &v in &src[(i * c + ch) * l..(i * c + ch + 1) * l] {
                            acc += v;
                        }
                    }
                    mean[ch] = acc / cnt;
                    let mut acc2 = S::zero();
                    for i in 0..n {
                        for &v in &src[(i * c + ch) * l..(i * c + ch + 1) * l] {
                            let d = v - mean[ch];
                            acc2 += d * d;
                        }
                    }
                    var[ch] = acc2 / cnt;
                }
                NormStats { mean, var }
            }
        };
        let inv_std: Vec<S> = stats.var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let g = &self.value(gamma).data;
        let bt = &self.value(beta).data;
        let mut normalized = vec![S::zero(); src.len()];
        let mut out = vec![S::zero(); src.len()];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * l;
                for t in 0..l {
                    let xh = (src[base + t] - stats.mean[ch]) * inv_std[ch];
                    normalized[base + t] = xh;
                    out[base + t] = g[ch] * xh + bt[ch];
                }
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let v = self.push(
            Tensor::new(s, out),
            Op::Norm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats: frozen.is_none(),
            },
            ng,
        );
        (v, stats)
    }

    /// Mean over the last axis: `[n, c, len] -> [n, c]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        let l = s[2];
        let inv = S::one() / S::of_usize(l);
        let data = self
            .value(x)
            .data
            .chunks(l)
            .map(|r| r.iter().fold(S::zero(), |a, &v| a + v) * inv)
            .collect();
        let ng = self.needs(x);
        self.push(Tensor::new(vec![s[0], s[1]], data), Op::GlobalAvgPool(x), ng)
    }

    /// Time step `t` of `[n, c, len]` as an `[n, c]` matrix.
    pub fn time_slice(&mut self, x: Var, t: usize) -> Var {
        let s = self.shape(x).to_vec();
        let (n, c, l) = (s[0], s[1], s[2]);
        let src = &self.value(x).data;
        let data = (0..n * c).map(|r| src[r * l + t]).collect();
        let ng = self.needs(x);
        self.push(Tensor::new(vec![n, c], data), Op::TimeSlice { x, t }, ng)
    }

    /// `[n, steps*channels]` time-major sequence to `[n, channels, steps*factor]`,
    /// repeating every step `factor` times.
    pub fn upsample(&mut self, x: Var, steps: usize, channels: usize, factor: usize) -> Var {
        let n = self.shape(x)[0];
        assert_eq!(self.shape(x)[1], steps * channels, "upsample width");
        let src = &self.value(x).data;
        let lo = steps * factor;
        let mut data = vec![S::zero(); n * channels * lo];
        for i in 0..n {
            for t in 0..steps {
                for c in 0..channels {
                    let v = src[i * steps * channels + t * channels + c];
                    let base = (i * channels + c) * lo + t * factor;
                    data[base..base + factor].iter_mut().for_each(|d| *d = v);
                }
            }
        }
        let ng = self.needs(x);
        self.push(
            Tensor::new(vec![n, channels, lo], data),
            Op::Upsample {
                x,
                steps,
                channels,
                factor,
            },
            ng,
        )
    }

    /// `scale · Σ (a - b)²` as a scalar.
    pub fn squared_distance(&mut self, a: Var, b: Var, scale: S) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len(), "squared distance sizes");
        let s = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .fold(S::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
        let ng = self.needs(a) || self.needs(b);
        self.push(
            Tensor::scalar(s * scale),
            Op::SquaredDistance { a, b, scale },
            ng,
        )
    }

    /// Euclidean distances between rows of `[b, d]` and rows of `[k, d]`.
    pub fn pairwise_euclid(&mut self, z: Var, w: Var) -> Var {
        let (b, d) = (self.shape(z)[0], self.shape(z)[1]);
        let k = self.shape(w)[0];
        assert_eq!(self.shape(w)[1], d, "centroid width");
        let (zv, wv) = (&self.value(z).data, &self.value(w).data);
        let mut out = Vec::with_capacity(b * k);
        for i in 0..b {
            for j in 0..k {
                out.push(crate::matrix::sq_dist(&zv[i * d..(i + 1) * d], &wv[j * d..(j + 1) * d]).sqrt());
            }
        }
        let ng = self.needs(z) || self.needs(w);
        self.push(Tensor::new(vec![b, k], out), Op::PairwiseEuclid { z, w }, ng)
    }

    /// Complexity-invariant distances between rows of `[b, steps*channels]` and
    /// rows of `[k, steps*channels]`, both laid out time-major.
    pub fn pairwise_cid(&mut self, z: Var, w: Var, steps: usize, channels: usize, eps: S) -> Var {
        let (b, d) = (self.shape(z)[0], self.shape(z)[1]);
        let k = self.shape(w)[0];
        assert_eq!(d, steps * channels, "cid layout");
        assert_eq!(self.shape(w)[1], d, "centroid width");
        let (zv, wv) = (&self.value(z).data, &self.value(w).data);
        let mut out = Vec::with_capacity(b * k);
        for i in 0..b {
            for j in 0..k {
                out.push(crate::losses::cid_layout(
                    &zv[i * d..(i + 1) * d],
                    &wv[j * d..(j + 1) * d],
                    steps,
                    channels,
                    eps,
                ));
            }
        }
        let ng = self.needs(z) || self.needs(w);
        self.push(
            Tensor::new(vec![b, k], out),
            Op::PairwiseCid {
                z,
                w,
                steps,
                channels,
                eps,
            },
            ng,
        )
    }

    /// Row-normalised Student's t kernel over a distance matrix.
    pub fn student_t(&mut self, d: Var, alpha: S) -> Var {
        let k = self.shape(d)[1];
        let q = crate::losses::student_t_rows(&self.value(d).data, k, alpha);
        let shape = self.shape(d).to_vec();
        let ng = self.needs(d);
        self.push(Tensor::new(shape, q), Op::StudentT { d, alpha }, ng)
    }

    /// `Σ p ln(p / q)` with the target `p` held constant.
    pub fn kl_to_target(&mut self, q: Var, p: Vec<S>) -> Var {
        assert_eq!(self.value(q).len(), p.len(), "target shape");
        let v = crate::losses::kl_flat(&self.value(q).data, &p);
        let ng = self.needs(q);
        self.push(Tensor::scalar(v), Op::KlToTarget { q, p }, ng)
    }

    /// `½ Σ (μ² + e^{logvar} − 1 − logvar)`: KL of a diagonal Gaussian from the standard normal.
    pub fn gaussian_kl(&mut self, mu: Var, logvar: Var) -> Var {
        let v = crate::losses::gaussian_kl(&self.value(mu).data, &self.value(logvar).data);
        let ng = self.needs(mu) || self.needs(logvar);
        self.push(Tensor::scalar(v), Op::GaussianKl { mu, logvar }, ng)
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients<S> {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(S::one()));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<Tensor<S>>], v: Var, delta: &[S]) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => t.add_assign(delta),
            slot @ None => {
                *slot = Some(Tensor::new(self.shape(v).to_vec(), delta.to_vec()));
            }
        }
    }

    fn acc_with(&self, grads: &mut [Option<Tensor<S>>], v: Var, f: impl FnOnce(&mut [S])) {
        if !self.needs(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.shape(v).to_vec()));
        }
        f(&mut slot.as_mut().unwrap().data);
    }

    fn propagate(&self, idx: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let node = &self.nodes[idx];
        let gd = &g.data;
        let out = &node.value.data;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                self.acc_with(grads, *a, |ga| matmul_nt_acc(ga, gd, vb, n, k, m));
                self.acc_with(grads, *b, |gb| matmul_tn_acc(gb, va, gd, n, k, m));
            }
            Op::AddBias(a, b) => {
                self.acc(grads, *a, gd);
                let m = self.value(*b).len();
                self.acc_with(grads, *b, |gb| {
                    for row in gd.chunks(m) {
                        for (x, &y) in gb.iter_mut().zip(row) {
                            *x += y;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, gd);
                self.acc(grads, *b, gd);
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, gd);
                let neg: Vec<S> = gd.iter().map(|&x| -x).collect();
                self.acc(grads, *b, &neg);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                if self.needs(*a) {
                    let d: Vec<S> = gd.iter().zip(vb).map(|(&x, &y)| x * y).collect();
                    self.acc(grads, *a, &d);
                }
                if self.needs(*b) {
                    let d: Vec<S> = gd.iter().zip(va).map(|(&x, &y)| x * y).collect();
                    self.acc(grads, *b, &d);
                }
            }
            Op::Scale(a, s) => {
                let d: Vec<S> = gd.iter().map(|&x| x * *s).collect();
                self.acc(grads, *a, &d);
            }
            Op::Relu(a) => {
                let d: Vec<S> = gd
                    .iter()
                    .zip(out)
                    .map(|(&x, &y)| if y > S::zero() { x } else { S::zero() })
                    .collect();
                self.acc(grads, *a, &d);
            }
            Op::LeakyRelu(a, slope) => {
                let va = &self.value(*a).data;
                let d: Vec<S> = gd
                    .iter()
                    .zip(va)
                    .map(|(&x, &y)| if y > S::zero() { x } else { x * *slope })
                    .collect();
                self.acc(grads, *a, &d);
            }
            Op::Sigmoid(a) => {
                let d: Vec<S> = gd
                    .iter()
                    .zip(out)
                    .map(|(&x, &y)| x * y * (S::one() - y))
                    .collect();
                self.acc(grads, *a, &d);
            }
            Op::Tanh(a) => {
                let d: Vec<S> = gd
                    .iter()
                    .zip(out)
                    .map(|(&x, &y)| x * (S::one() - y * y))
                    .collect();
                self.acc(grads, *a, &d);
            }
            Op::Exp(a) => {
                let d: Vec<S> = gd.iter().zip(out).map(|(&x, &y)| x * y).collect();
                self.acc(grads, *a, &d);
            }
            Op::Sum(a) => {
                let d = vec![gd[0]; self.value(*a).len()];
                self.acc(grads, *a, &d);
            }
            Op::Reshape(a) => self.acc(grads, *a, gd),
            Op::SliceCols { x, start } => {
                let m = self.shape(*x)[1];
                let len = node.value.shape[1];
                self.acc_with(grads, *x, |gx| {
                    for (i, row) in gd.chunks(len).enumerate() {
                        for (dst, &v) in gx[i * m + start..i * m + start + len].iter_mut().zip(row) {
                            *dst += v;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.shape[1];
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    self.acc_with(grads, p, |gp| {
                        for (i, row) in gp.chunks_mut(w).enumerate() {
                            for (dst, &v) in row.iter_mut().zip(&gd[i * total + off..i * total + off + w]) {
                                *dst += v;
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::Conv { x, w, b, geom } => {
                let wv = &self.value(*w).data;
                let xv = &self.value(*x).data;
                self.acc_with(grads, *x, |gx| conv_backward_input(gx, gd, wv, geom));
                self.acc_with(grads, *w, |gw| conv_backward_weight(gw, xv, gd, geom));
                self.acc_with(grads, *b, |gb| {
                    channel_bias_grad(gb, gd, geom.batch, geom.c_out, geom.len_out())
                });
            }
            Op::ConvTranspose { x, w, b, geom } => {
                // Output is the input-adjoint of `geom`; its own adjoints swap roles.
                let wv = &self.value(*w).data;
                let xv = &self.value(*x).data;
                if self.needs(*x) {
                    let d = conv_forward(gd, wv, geom);
                    self.acc(grads, *x, &d);
                }
                self.acc_with(grads, *w, |gw| conv_backward_weight(gw, gd, xv, geom));
                self.acc_with(grads, *b, |gb| {
                    channel_bias_grad(gb, gd, geom.batch, geom.c_in, geom.len_in)
                });
            }
            Op::MaxPool { x, argmax } => {
                self.acc_with(grads, *x, |gx| {
                    for (&src, &v) in argmax.iter().zip(gd) {
                        gx[src] += v;
                    }
                });
            }
            Op::Norm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats,
            } => {
                let s = self.shape(*x);
                let (n, c, l) = (s[0], s[1], s[2]);
                let gam = &self.value(*gamma).data;
                let mut sum_g = vec![S::zero(); c];
                let mut sum_gx = vec![S::zero(); c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * l;
                        for t in 0..l {
                            sum_g[ch] += gd[base + t];
                            sum_gx[ch] += gd[base + t] * normalized[base + t];
                        }
                    }
                }
                self.acc(grads, *gamma, &sum_gx);
                self.acc(grads, *beta, &sum_g);
                if self.needs(*x) {
                    let cnt = S::of_usize(n * l);
                    let mut d = vec![S::zero(); gd.len()];
                    for i in 0..n {
                        for ch in 0..c {
                            let base = (i * c + ch) * l;
                            let k = gam[ch] * inv_std[ch];
                            for t in 0..l {
                                d[base + t] = if *batch_stats {
                                    k * (gd[base + t]
                                        - sum_g[ch] / cnt
                                        - normalized[base + t] * sum_gx[ch] / cnt)
                                } else {
                                    k * gd[base + t]
                                };
                            }
                        }
                    }
                    self.acc(grads, *x, &d);
                }
            }
            Op::GlobalAvgPool(x) => {
                let l = self.shape(*x)[2];
                let inv = S::one() / S::of_usize(l);
                self.acc_with(grads, *x, |gx| {
                    for (row, &v) in gx.chunks_mut(l).zip(gd) {
                        row.iter_mut().for_each(|r| *r += v * inv);
                    }
                });
            }
            Op::TimeSlice { x, t } => {
                let l = self.shape(*x)[2];
                self.acc_with(grads, *x, |gx| {
                    for (r, &v) in gd.iter().enumerate() {
                        gx[r * l + t] += v;
                    }
                });
            }
            Op::Upsample {
                x,
                steps,
                channels,
                factor,
            } => {
                let (steps, channels, factor) = (*steps, *channels, *factor);
                let lo = steps * factor;
                self.acc_with(grads, *x, |gx| {
                    let n = gx.len() / (steps * channels);
                    for i in 0..n {
                        for t in 0..steps {
                            for c in 0..channels {
                                let base = (i * channels + c) * lo + t * factor;
                                let s = gd[base..base + factor].iter().fold(S::zero(), |a, &v| a + v);
                                gx[i * steps * channels + t * channels + c] += s;
                            }
                        }
                    }
                });
            }
            Op::SquaredDistance { a, b, scale } => {
                let two = S::of(2.0) * *scale * gd[0];
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                let diff: Vec<S> = va.iter().zip(vb).map(|(&x, &y)| two * (x - y)).collect();
                self.acc(grads, *a, &diff);
                if self.needs(*b) {
                    let neg: Vec<S> = diff.iter().map(|&x| -x).collect();
                    self.acc(grads, *b, &neg);
                }
            }
            Op::PairwiseEuclid { z, w } => {
                let (b, d) = (self.shape(*z)[0], self.shape(*z)[1]);
                let k = self.shape(*w)[0];
                let (zv, wv) = (&self.value(*z).data, &self.value(*w).data);
                let mut gz = vec![S::zero(); b * d];
                let mut gw = vec![S::zero(); k * d];
                for i in 0..b {
                    for j in 0..k {
                        let dist = out[i * k + j];
                        if dist <= S::zero() {
                            continue;
                        }
                        let f = gd[i * k + j] / dist;
                        for e in 0..d {
                            let diff = (zv[i * d + e] - wv[j * d + e]) * f;
                            gz[i * d + e] += diff;
                            gw[j * d + e] -= diff;
                        }
                    }
                }
                self.acc(grads, *z, &gz);
                self.acc(grads, *w, &gw);
            }
            Op::PairwiseCid {
                z,
                w,
                steps,
                channels,
                eps,
            } => {
                let (b, d) = (self.shape(*z)[0], self.shape(*z)[1]);
                let k = self.shape(*w)[0];
                let (zv, wv) = (&self.value(*z).data, &self.value(*w).data);
                let mut gz = vec![S::zero(); b * d];
                let mut gw = vec![S::zero(); k * d];
                for i in 0..b {
                    for j in 0..k {
                        let gij = gd[i * k + j];
                        if gij == S::zero() {
                            continue;
                        }
                        crate::losses::cid_grad_acc(
                            &zv[i * d..(i + 1) * d],
                            &wv[j * d..(j + 1) * d],
                            *steps,
                            *channels,
                            *eps,
                            gij,
                            &mut gz[i * d..(i + 1) * d],
                            &mut gw[j * d..(j + 1) * d],
                        );
                    }
                }
                self.acc(grads, *z, &gz);
                self.acc(grads, *w, &gw);
            }
            Op::StudentT { d, alpha } => {
                let k = node.value.shape[1];
                let dv = &self.value(*d).data;
                let e = (*alpha + S::one()) / S::of(2.0);
                let mut gdist = vec![S::zero(); dv.len()];
                for (r, ((qrow, grow), drow)) in out
                    .chunks(k)
                    .zip(gd.chunks(k))
                    .zip(dv.chunks(k))
                    .enumerate()
                {
                    // q = u / U with u = (1 + d/α)^(-e):
                    // ∂L/∂u_l = (g_l - Σ_j g_j q_j) / U, ∂u/∂d = -(e/α) u / (1 + d/α).
                    let dot = qrow.iter().zip(grow).fold(S::zero(), |a, (&q, &g)| a + q * g);
                    for j in 0..k {
                        let base = S::one() + drow[j] / *alpha;
                        gdist[r * k + j] = (grow[j] - dot) * qrow[j] * (-e / *alpha) / base;
                    }
                }
                self.acc(grads, *d, &gdist);
            }
            Op::KlToTarget { q, p } => {
                let qv = &self.value(*q).data;
                let d: Vec<S> = p.iter().zip(qv).map(|(&pv, &qv)| -gd[0] * pv / qv).collect();
                self.acc(grads, *q, &d);
            }
            Op::GaussianKl { mu, logvar } => {
                let (m, lv) = (&self.value(*mu).data, &self.value(*logvar).data);
                let gm: Vec<S> = m.iter().map(|&x| gd[0] * x).collect();
                let half = S::of(0.5);
                let gl: Vec<S> = lv.iter().map(|&x| gd[0] * half * (x.exp() - S::one())).collect();
                self.acc(grads, *mu, &gm);
                self.acc(grads, *logvar, &gl);
            }
        }
    }
}

fn add_channel_bias<S: Scalar>(y: &mut [S], bias: &[S], batch: usize, c: usize, l: usize) {
    for n in 0..batch {
        for ch in 0..c {
            y[(n * c + ch) * l..(n * c + ch + 1) * l]
                .iter_mut()
                .for_each(|v| *v += bias[ch]);
        }
    }
}

fn channel_bias_grad<S: Scalar>(gb: &mut [S], gy: &[S], batch: usize, c: usize, l: usize) {
    for n in 0..batch {
        for ch in 0..c {
            gb[ch] += gy[(n * c + ch) * l..(n * c + ch + 1) * l]
                .iter()
                .fold(S::zero(), |a, &v| a + v);
        }
    }
}

#[cfg(test)]
mod tests;
