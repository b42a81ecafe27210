use super::kernels::{self, conv_out};
use super::tensor::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Relu {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Clamp {
        x: Var,
        lo: T,
        hi: T,
    },
    Norm {
        x: Var,
        per_instance: bool,
        inv_std: Vec<T>,
    },
    MaxPool2 {
        x: Var,
        arg: Vec<u32>,
    },
    Upsample2x {
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Affine {
        x: Var,
        scale: T,
    },
    Square {
        x: Var,
    },
    Abs {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Sum {
        x: Var,
    },
    GlobalAvgPool {
        x: Var,
    },
    SliceBatch {
        x: Var,
        start: usize,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Define-by-run reverse-mode tape over 4-axis tensors.
///
/// Every op appends a node; [`Tape::backward`] walks the nodes in reverse.
/// Nodes whose inputs carry no gradient are recorded but skipped on the way
/// back, so the same tape serves inference and training.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A copy of `v` cut off from the gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// Cross-correlation with square kernels, zero padding and optional bias.
    ///
    /// `w` is `[out, in, k, k]`; `b` is `[1, out, 1, 1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x);
        let ws = self.shape(w);
        assert_eq!(ws[2], ws[3], "conv2d: square kernels only");
        assert_eq!(
            xs[1], ws[1],
            "conv2d: input has {} channels, kernel expects {}",
            xs[1], ws[1]
        );
        let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ws[0], ws[2]);
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv2d: kernel larger than padded input");
        let ho = conv_out(h, k, stride, pad);
        let wo = conv_out(wd, k, stride, pad);
        let kk = cin * k * k;
        let p = ho * wo;
        let mut out = Tensor::zeros([n, cout, ho, wo]);
        let mut cols = vec![T::zero(); kk * p];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bias = b.map(|b| self.value(b).data());
            let od = out.data_mut();
            for i in 0..n {
                let xi = &xv[i * cin * h * wd..(i + 1) * cin * h * wd];
                let oi = &mut od[i * cout * p..(i + 1) * cout * p];
                if k == 1 && stride == 1 && pad == 0 {
                    T::gemm(cout, kk, p, T::one(), wv, kk as isize, 1, xi, p as isize, 1, T::zero(), oi, p as isize, 1);
                } else {
                    kernels::im2col(xi, cin, h, wd, k, stride, pad, &mut cols);
                    T::gemm(cout, kk, p, T::one(), wv, kk as isize, 1, &cols, p as isize, 1, T::zero(), oi, p as isize, 1);
                }
                if let Some(bias) = bias {
                    for (o, &bv) in bias.iter().enumerate() {
                        for v in &mut oi[o * p..(o + 1) * p] {
                            *v = *v + bv;
                        }
                    }
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, &inputs)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::from_f64_lossy(slope);
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        self.push(out, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu { x }, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(T::tanh);
        self.push(out, Op::Tanh { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(out, Op::Sigmoid { x }, &[x])
    }

    /// Clamps forward; passes the gradient only strictly inside `(lo, hi)`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::from_f64_lossy(lo), T::from_f64_lossy(hi));
        let out = self.value(x).map(|v| v.max(lo).min(hi));
        self.push(out, Op::Clamp { x, lo, hi }, &[x])
    }

    /// Affine-free normalization to zero mean and unit (biased) variance,
    /// per `(item, channel)` when `per_instance`, otherwise per channel over
    /// the whole batch.
    pub fn normalize(&mut self, x: Var, per_instance: bool, eps: f64) -> Var {
        let eps = T::from_f64_lossy(eps);
        let src = self.value(x);
        let [n, c, h, w] = src.shape();
        let plane = h * w;
        let mut out = src.clone();
        let groups = if per_instance { n * c } else { c };
        let mut inv_std = vec![T::zero(); groups];
        let count = T::from_usize(if per_instance { plane } else { n * plane }).unwrap();
        let od = out.data_mut();
        for (g, inv) in inv_std.iter_mut().enumerate() {
            let ranges: Vec<std::ops::Range<usize>> = if per_instance {
                vec![g * plane..(g + 1) * plane]
            } else {
                (0..n).map(|i| (i * c + g) * plane..(i * c + g + 1) * plane).collect()
            };
            let mut mean = T::zero();
            for r in &ranges {
                mean = mean + od[r.clone()].iter().copied().sum::<T>();
            }
            mean = mean / count;
            let mut var = T::zero();
            for r in &ranges {
                var = var + od[r.clone()].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
            }
            var = var / count;
            *inv = T::one() / (var + eps).sqrt();
            for r in &ranges {
                for v in &mut od[r.clone()] {
                    *v = (*v - mean) * *inv;
                }
            }
        }
        self.push(
            out,
            Op::Norm {
                x,
                per_instance,
                inv_std,
            },
            &[x],
        )
    }

    pub fn maxpool2(&mut self, x: Var) -> Var {
        let [n, c, h, w] = self.shape(x);
        assert!(h % 2 == 0 && w % 2 == 0, "maxpool2: odd spatial size {h}x{w}");
        let mut out = Tensor::zeros([n, c, h / 2, w / 2]);
        let arg = kernels::maxpool2(self.value(x).data(), n * c, h, w, out.data_mut());
        self.push(out, Op::MaxPool2 { x, arg }, &[x])
    }

    pub fn upsample2x(&mut self, x: Var) -> Var {
        let [n, c, h, w] = self.shape(x);
        let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
        kernels::upsample2x(self.value(x).data(), n * c, h, w, out.data_mut());
        self.push(out, Op::Upsample2x { x }, &[x])
    }

    /// Channel concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let sa = self.shape(a);
        let sb = self.shape(b);
        assert!(
            sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3],
            "concat: incompatible shapes {sa:?} and {sb:?}"
        );
        let plane = sa[2] * sa[3];
        let (ca, cb) = (sa[1], sb[1]);
        let mut data = Vec::with_capacity(sa[0] * (ca + cb) * plane);
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            for i in 0..sa[0] {
                data.extend_from_slice(&av[i * ca * plane..(i + 1) * ca * plane]);
                data.extend_from_slice(&bv[i * cb * plane..(i + 1) * cb * plane]);
            }
        }
        let out = Tensor::from_vec([sa[0], ca + cb, sa[2], sa[3]], data);
        self.push(out, Op::Concat { a, b }, &[a, b])
    }

    fn zip_values(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.shape(), bv.shape(), "elementwise op on mismatched shapes");
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_values(a, b, |x, y| x + y);
        self.push(out, Op::Add { a, b }, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_values(a, b, |x, y| x - y);
        self.push(out, Op::Sub { a, b }, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_values(a, b, |x, y| x * y);
        self.push(out, Op::Mul { a, b }, &[a, b])
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (s, t) = (T::from_f64_lossy(scale), T::from_f64_lossy(shift));
        let out = self.value(x).map(|v| v * s + t);
        self.push(out, Op::Affine { x, scale: s }, &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square { x }, &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(T::abs);
        self.push(out, Op::Abs { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).mean());
        self.push(out, Op::Mean { x }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).data().iter().copied().sum());
        self.push(out, Op::Sum { x }, &[x])
    }

    /// `[n, c, h, w] -> [n, c, 1, 1]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let [n, c, h, w] = src.shape();
        let plane = h * w;
        let denom = T::from_usize(plane).unwrap();
        let data = src
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().copied().sum::<T>() / denom)
            .collect();
        let out = Tensor::from_vec([n, c, 1, 1], data);
        self.push(out, Op::GlobalAvgPool { x }, &[x])
    }

    pub fn slice_batch(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).slice_batch(start, len);
        self.push(out, Op::SliceBatch { x, start }, &[x])
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        assert_eq!(self.value(loss).len(), 1, "backward() needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn accum(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backward_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let (stride, pad) = (*stride, *pad);
                let xv = self.value(*x);
                let wv = self.value(*w);
                let [n, cin, h, wd] = xv.shape();
                let [cout, _, k, _] = wv.shape();
                let [_, _, ho, wo] = y.shape();
                let p = ho * wo;
                let kk = cin * k * k;
                let pointwise = k == 1 && stride == 1 && pad == 0;
                let need_x = self.wants(*x);
                let need_w = self.wants(*w);
                let mut dw = Tensor::zeros(wv.shape());
                let mut dx = Tensor::zeros(xv.shape());
                let mut cols = vec![T::zero(); kk * p];
                let mut dcols = vec![T::zero(); kk * p];
                let gd = g.data();
                for i in 0..n {
                    let gi = &gd[i * cout * p..(i + 1) * cout * p];
                    let xi = &xv.data()[i * cin * h * wd..(i + 1) * cin * h * wd];
                    if need_w {
                        let src: &[T] = if pointwise {
                            xi
                        } else {
                            kernels::im2col(xi, cin, h, wd, k, stride, pad, &mut cols);
                            &cols
                        };
                        T::gemm(cout, p, kk, T::one(), gi, p as isize, 1, src, 1, p as isize, T::one(), dw.data_mut(), kk as isize, 1);
                    }
                    if need_x {
                        let dxi = &mut dx.data_mut()[i * cin * h * wd..(i + 1) * cin * h * wd];
                        if pointwise {
                            T::gemm(kk, cout, p, T::one(), wv.data(), 1, kk as isize, gi, p as isize, 1, T::zero(), dxi, p as isize, 1);
                        } else {
                            T::gemm(kk, cout, p, T::one(), wv.data(), 1, kk as isize, gi, p as isize, 1, T::zero(), &mut dcols, p as isize, 1);
                            kernels::col2im(&dcols, cin, h, wd, k, stride, pad, dxi);
                        }
                    }
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let mut db = Tensor::zeros([1, cout, 1, 1]);
                        for i in 0..n {
                            for o in 0..cout {
                                let s: T = gd[(i * cout + o) * p..(i * cout + o + 1) * p].iter().copied().sum();
                                db.data_mut()[o] = db.data()[o] + s;
                            }
                        }
                        self.accum(grads, *b, db);
                    }
                }
                if need_w {
                    self.accum(grads, *w, dw);
                }
                if need_x {
                    self.accum(grads, *x, dx);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &v)| if v > T::zero() { gv } else { gv * *slope })
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(g.shape(), data));
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(g.shape(), data));
            }
            Op::Tanh { x } => {
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &t)| gv * (T::one() - t * t))
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(g.shape(), data));
            }
            Op::Sigmoid { x } => {
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gv, &s)| gv * s * (T::one() - s))
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(g.shape(), data));
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &v)| if v > *lo && v < *hi { gv } else { T::zero() })
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(g.shape(), data));
            }
            Op::Norm {
                x,
                per_instance,
                inv_std,
            } => {
                let [n, c, h, w] = y.shape();
                let plane = h * w;
                let mut dx = Tensor::zeros(y.shape());
                let count = T::from_usize(if *per_instance { plane } else { n * plane }).unwrap();
                for (gi, &inv) in inv_std.iter().enumerate() {
                    let ranges: Vec<std::ops::Range<usize>> = if *per_instance {
                        vec![gi * plane..(gi + 1) * plane]
                    } else {
                        (0..n).map(|i| (i * c + gi) * plane..(i * c + gi + 1) * plane).collect()
                    };
                    let mut mg = T::zero();
                    let mut mgy = T::zero();
                    for r in &ranges {
                        for j in r.clone() {
                            mg = mg + g.data()[j];
                            mgy = mgy + g.data()[j] * y.data()[j];
                        }
                    }
                    mg = mg / count;
                    mgy = mgy / count;
                    let dd = dx.data_mut();
                    for r in &ranges {
                        for j in r.clone() {
                            dd[j] = inv * (g.data()[j] - mg - y.data()[j] * mgy);
                        }
                    }
                }
                self.accum(grads, *x, dx);
            }
            Op::MaxPool2 { x, arg } => {
                let mut dx = Tensor::zeros(self.shape(*x));
                let dd = dx.data_mut();
                for (gv, &src) in g.data().iter().zip(arg) {
                    dd[src as usize] = dd[src as usize] + *gv;
                }
                self.accum(grads, *x, dx);
            }
            Op::Upsample2x { x } => {
                let [n, c, h, w] = self.shape(*x);
                let mut dx = Tensor::zeros([n, c, h, w]);
                kernels::upsample2x_backward(g.data(), n * c, h, w, dx.data_mut());
                self.accum(grads, *x, dx);
            }
            Op::Concat { a, b } => {
                let sa = self.shape(*a);
                let sb = self.shape(*b);
                let plane = sa[2] * sa[3];
                let (ca, cb) = (sa[1], sb[1]);
                let mut ga = Vec::with_capacity(sa.iter().product());
                let mut gb = Vec::with_capacity(sb.iter().product());
                for i in 0..sa[0] {
                    let base = i * (ca + cb) * plane;
                    ga.extend_from_slice(&g.data()[base..base + ca * plane]);
                    gb.extend_from_slice(&g.data()[base + ca * plane..base + (ca + cb) * plane]);
                }
                self.accum(grads, *a, Tensor::from_vec(sa, ga));
                self.accum(grads, *b, Tensor::from_vec(sb, gb));
            }
            Op::Add { a, b } => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Sub { a, b } => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.map(|v| -v));
            }
            Op::Mul { a, b } => {
                if self.wants(*a) {
                    let bv = self.value(*b);
                    let data = g.data().iter().zip(bv.data()).map(|(&gv, &v)| gv * v).collect();
                    self.accum(grads, *a, Tensor::from_vec(g.shape(), data));
                }
                if self.wants(*b) {
                    let av = self.value(*a);
                    let data = g.data().iter().zip(av.data()).map(|(&gv, &v)| gv * v).collect();
                    self.accum(grads, *b, Tensor::from_vec(g.shape(), data));
                }
            }
            Op::Affine { x, scale } => {
                self.accum(grads, *x, g.map(|v| v * *scale));
            }
            Op::Square { x } => {
                let xv = self.value(*x);
                let two = T::one() + T::one();
                let data = g.data().iter().zip(xv.data()).map(|(&gv, &v)| two * gv * v).collect();
                self.accum(grads, *x, Tensor::from_vec(g.shape(), data));
            }
            Op::Abs { x } => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &v)| {
                        if v > T::zero() {
                            gv
                        } else if v < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.accum(grads, *x, Tensor::from_vec(g.shape(), data));
            }
            Op::Mean { x } => {
                let shape = self.shape(*x);
                let n = T::from_usize(shape.iter().product()).unwrap();
                self.accum(grads, *x, Tensor::full(shape, g.item() / n));
            }
            Op::Sum { x } => {
                let shape = self.shape(*x);
                self.accum(grads, *x, Tensor::full(shape, g.item()));
            }
            Op::GlobalAvgPool { x } => {
                let shape = self.shape(*x);
                let plane = shape[2] * shape[3];
                let denom = T::from_usize(plane).unwrap();
                let mut data = Vec::with_capacity(shape.iter().product());
                for &gv in g.data() {
                    data.extend(std::iter::repeat_n(gv / denom, plane));
                }
                self.accum(grads, *x, Tensor::from_vec(shape, data));
            }
            Op::SliceBatch { x, start } => {
                let shape = self.shape(*x);
                let per = shape[1] * shape[2] * shape[3];
                let mut dx = Tensor::zeros(shape);
                dx.data_mut()[start * per..start * per + g.len()].copy_from_slice(g.data());
                self.accum(grads, *x, dx);
            }
        }
    }
}
