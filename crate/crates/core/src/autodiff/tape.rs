//! Reverse-mode tape over dense tensors.
//!
//! Nodes are appended eagerly (forward values computed at record time) and
//! referenced by index, so a [`Var`] is just a copyable handle. The op set
//! is exactly what the latent model and raymarcher need: matmul, 1D convs
//! (composing to separable 2D convs), transposed conv, elementwise maps,
//! reductions, trilinear grid sampling and clamped ray accumulation.
//!
//! Backward walks the node list in reverse and accumulates into per-node
//! gradient slots in a fixed order, so gradients are bit-reproducible for
//! a given tape.

use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Logistic(Var),
    Softplus(Var),
    LeakyRelu(Var, f64),
    Clamp(Var, f64, f64),
    Sum(Var),
    Matmul(Var, Var),
    AddRowBroadcast(Var, Var),
    ConvH { x: Var, w: Var, b: Var },
    ConvW { x: Var, w: Var, b: Var },
    ConvTranspose2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    ConcatChannels(Var, Var),
    CropHw { x: Var, h0: usize, w0: usize },
    Reshape(Var),
    TrilinearSample { grid: Var, local: Var },
    RayAccumulate { tau: Var, vals: Var },
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-leaf gradients produced by a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, densified: unreachable nodes get zeros.
    pub fn grad_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add: shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape(), data);
        self.push(Op::Add(a, b), t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "sub: shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let t = Tensor::new(ta.shape(), data);
        self.push(Op::Sub(a, b), t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul: shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape(), data);
        self.push(Op::Mul(a, b), t)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let data = self.value(a).data().iter().map(|x| x * c).collect();
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::Scale(a, c), t)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let data = self.value(a).data().iter().map(|x| x + c).collect();
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::AddScalar(a), t)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|x| x.exp()).collect();
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::Exp(a), t)
    }

    /// Natural log; the input must be strictly positive.
    pub fn ln(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).data().iter().map(|x| x.ln()).collect();
        assert!(
            self.value(a).data().iter().all(|&x| x > 0.0),
            "ln: input must be strictly positive"
        );
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::Ln(a), t)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|x| x * x).collect();
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::Square(a), t)
    }

    pub fn logistic(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| logistic(x)).collect();
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::Logistic(a), t)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| softplus(x)).collect();
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::Softplus(a), t)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&x| if x > 0.0 { x } else { slope * x })
            .collect();
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::LeakyRelu(a, slope), t)
    }

    /// Clamp to [lo, hi]; subgradient 0 on the clamped branch.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let data = self.value(a).data().iter().map(|x| x.clamp(lo, hi)).collect();
        let t = Tensor::new(self.value(a).shape(), data);
        self.push(Op::Clamp(a, lo, hi), t)
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    // ---- linear algebra --------------------------------------------------

    /// a: [m,k] times b: [k,n] -> [m,n].
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        assert_eq!(sa.len(), 2, "matmul lhs must be 2-D");
        assert_eq!(sb.len(), 2, "matmul rhs must be 2-D");
        assert_eq!(sa[1], sb[0], "matmul inner dims");
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Op::Matmul(a, b), Tensor::new(&[m, n], out))
    }

    /// x: [m,n] plus row-broadcast bias b: [n].
    pub fn add_row_broadcast(&mut self, x: Var, b: Var) -> Var {
        let sx = self.value(x).shape().to_vec();
        assert_eq!(sx.len(), 2);
        assert_eq!(self.value(b).len(), sx[1], "bias length must match columns");
        let bd = self.value(b).data().to_vec();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .chunks(sx[1])
            .flat_map(|row| row.iter().zip(&bd).map(|(v, bb)| v + bb).collect::<Vec<_>>())
            .collect();
        self.push(Op::AddRowBroadcast(x, b), Tensor::new(&sx, data))
    }

    /// Fully connected layer on row vectors: x [m,k] w [k,n] b [n].
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row_broadcast(y, b)
    }

    // ---- convolutions ----------------------------------------------------

    /// k x 1 convolution along H with same padding.
    /// x: [Cin,H,W], w: [Cout,Cin,k] (k odd), b: [Cout].
    pub fn conv_h(&mut self, x: Var, w: Var, b: Var) -> Var {
        let out = conv_axis_forward(self.value(x), self.value(w), self.value(b), Axis::H);
        self.push(Op::ConvH { x, w, b }, out)
    }

    /// 1 x k convolution along W with same padding.
    pub fn conv_w(&mut self, x: Var, w: Var, b: Var) -> Var {
        let out = conv_axis_forward(self.value(x), self.value(w), self.value(b), Axis::W);
        self.push(Op::ConvW { x, w, b }, out)
    }

    /// Separable 2D convolution: k x 1 along H then 1 x k along W, each pass
    /// followed by leaky-ReLU when `slope` is given (None = linear).
    pub fn separable_conv2d(
        &mut self,
        x: Var,
        wcol: Var,
        bcol: Var,
        wrow: Var,
        brow: Var,
        slope: Option<f64>,
    ) -> Var {
        let mut y = self.conv_h(x, wcol, bcol);
        if let Some(s) = slope {
            y = self.leaky_relu(y, s);
        }
        let mut z = self.conv_w(y, wrow, brow);
        if let Some(s) = slope {
            z = self.leaky_relu(z, s);
        }
        z
    }

    /// Transposed 2D convolution. x: [Cin,H,W], w: [Cin,Cout,k,k], b: [Cout].
    /// Output spatial size: (n-1)*stride - 2*pad + k.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let out = conv_transpose_forward(self.value(x), self.value(w), self.value(b), stride, pad);
        self.push(Op::ConvTranspose2d { x, w, b, stride, pad }, out)
    }

    // ---- structure -------------------------------------------------------

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        assert_eq!(sa.len(), 3);
        assert_eq!(&sa[1..], &sb[1..], "concat: spatial dims must match");
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let t = Tensor::new(&[sa[0] + sb[0], sa[1], sa[2]], data);
        self.push(Op::ConcatChannels(a, b), t)
    }

    /// Crop [C,H,W] to [C,h,w] starting at (h0,w0).
    pub fn crop_hw(&mut self, x: Var, h0: usize, w0: usize, h: usize, w: usize) -> Var {
        let sx = self.value(x).shape().to_vec();
        assert_eq!(sx.len(), 3);
        assert!(h0 + h <= sx[1] && w0 + w <= sx[2], "crop out of bounds");
        let (c, hh, ww) = (sx[0], sx[1], sx[2]);
        let xd = self.value(x).data();
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for i in 0..h {
                let base = ci * hh * ww + (h0 + i) * ww + w0;
                data.extend_from_slice(&xd[base..base + w]);
            }
        }
        self.push(Op::CropHw { x, h0, w0 }, Tensor::new(&[c, h, w], data))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).reshaped(shape).expect("reshape: element count mismatch");
        self.push(Op::Reshape(x), t)
    }

    // ---- sampling and accumulation ----------------------------------------

    /// Trilinear sample of grid [C,D,H,W] at local coordinates [3] in
    /// [-1,1]^3 (voxel centers at the cube boundary). Coordinates are
    /// clamped; the clamped branch has zero gradient.
    pub fn trilinear_sample(&mut self, grid: Var, local: Var) -> Var {
        let g = self.value(grid);
        assert_eq!(g.shape().len(), 4, "grid must be [C,D,H,W]");
        assert_eq!(self.value(local).len(), 3, "local must be a 3-vector");
        let l = self.value(local).data();
        let out = trilinear_forward(g, [l[0], l[1], l[2]]);
        let c = g.shape()[0];
        self.push(Op::TrilinearSample { grid, local }, Tensor::new(&[c], out))
    }

    /// Clamped front-to-back accumulation over one ray.
    ///
    /// `tau`: [K] per-sample opacity increments (alpha_k * dt, must be >= 0).
    /// `vals`: [C,K] per-sample channel values. Output [C+1]: the first C
    /// entries are sum_k w_k vals[c,k], the last is the total opacity
    /// A = sum_k w_k, where w_k = min(P_k,1) - min(P_{k-1},1) and P is the
    /// running sum of tau. Saturated steps get zero weight and zero
    /// gradient (min-with-1 subgradient).
    pub fn ray_accumulate(&mut self, tau: Var, vals: Var) -> Var {
        let (tt, vv) = (self.value(tau), self.value(vals));
        assert_eq!(tt.shape().len(), 1);
        assert_eq!(vv.shape().len(), 2);
        assert_eq!(vv.shape()[1], tt.len(), "vals columns must match tau length");
        let (out, _, _) = ray_accumulate_forward(tt.data(), vv.data(), vv.shape()[0]);
        let c = vv.shape()[0];
        self.push(Op::RayAccumulate { tau, vals }, Tensor::new(&[c + 1], out))
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse pass from a scalar loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_seeded(vec![(loss, Tensor::scalar(1.0))])
    }

    /// Reverse pass seeded with upstream gradients at arbitrary nodes.
    /// Used to splice externally-differentiated computations (the
    /// raymarcher) into the tape.
    pub fn backward_seeded(&self, seeds: Vec<(Var, Tensor)>) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut top = 0usize;
        for (v, g) in seeds {
            if g.shape() != self.value(v).shape() {
                return Err(Error::Shape(format!(
                    "seed shape {:?} does not match node shape {:?}",
                    g.shape(),
                    self.value(v).shape()
                )));
            }
            top = top.max(v.0);
            accumulate(&mut grads[v.0], g);
        }
        for i in (0..=top.min(self.nodes.len().saturating_sub(1))).rev() {
            let Some(up) = grads[i].take() else { continue };
            self.vjp(i, &up, &mut grads);
            grads[i] = Some(up);
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, i: usize, up: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(&mut grads[a.0], up.clone());
                accumulate(&mut grads[b.0], up.clone());
            }
            Op::Sub(a, b) => {
                accumulate(&mut grads[a.0], up.clone());
                let neg = map_tensor(up, |v| -v);
                accumulate(&mut grads[b.0], neg);
            }
            Op::Mul(a, b) => {
                let ga = zip_tensor(up, self.value(*b), |u, y| u * y);
                let gb = zip_tensor(up, self.value(*a), |u, x| u * x);
                accumulate(&mut grads[a.0], ga);
                accumulate(&mut grads[b.0], gb);
            }
            Op::Scale(a, c) => {
                accumulate(&mut grads[a.0], map_tensor(up, |v| v * c));
            }
            Op::AddScalar(a) => {
                accumulate(&mut grads[a.0], up.clone());
            }
            Op::Exp(a) => {
                let g = zip_tensor(up, &self.nodes[i].value, |u, y| u * y);
                accumulate(&mut grads[a.0], g);
            }
            Op::Ln(a) => {
                let g = zip_tensor(up, self.value(*a), |u, x| u / x);
                accumulate(&mut grads[a.0], g);
            }
            Op::Square(a) => {
                let g = zip_tensor(up, self.value(*a), |u, x| u * 2.0 * x);
                accumulate(&mut grads[a.0], g);
            }
            Op::Logistic(a) => {
                let g = zip_tensor(up, &self.nodes[i].value, |u, y| u * y * (1.0 - y));
                accumulate(&mut grads[a.0], g);
            }
            Op::Softplus(a) => {
                let g = zip_tensor(up, self.value(*a), |u, x| u * logistic(x));
                accumulate(&mut grads[a.0], g);
            }
            Op::LeakyRelu(a, slope) => {
                let g = zip_tensor(up, self.value(*a), |u, x| if x > 0.0 { u } else { u * slope });
                accumulate(&mut grads[a.0], g);
            }
            Op::Clamp(a, lo, hi) => {
                let g = zip_tensor(up, self.value(*a), |u, x| if x > *lo && x < *hi { u } else { 0.0 });
                accumulate(&mut grads[a.0], g);
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                let g = Tensor::full(&shape, up.item());
                accumulate(&mut grads[a.0], g);
            }
            Op::Matmul(a, b) => {
                let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                // dA = dC B^T ; dB = A^T dC
                let bt = transpose2(self.value(*b).data(), k, n);
                let da = matmul_kernel(up.data(), &bt, m, n, k);
                let at = transpose2(self.value(*a).data(), m, k);
                let db = matmul_kernel(&at, up.data(), k, m, n);
                accumulate(&mut grads[a.0], Tensor::new(&[m, k], da));
                accumulate(&mut grads[b.0], Tensor::new(&[k, n], db));
            }
            Op::AddRowBroadcast(x, b) => {
                let n = self.value(*b).len();
                let mut db = vec![0.0; n];
                for row in up.data().chunks(n) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                accumulate(&mut grads[x.0], up.clone());
                accumulate(&mut grads[b.0], Tensor::new(&[n], db));
            }
            Op::ConvH { x, w, b } => {
                let (dx, dw, db) = conv_axis_backward(self.value(*x), self.value(*w), up, Axis::H);
                accumulate(&mut grads[x.0], dx);
                accumulate(&mut grads[w.0], dw);
                accumulate(&mut grads[b.0], db);
            }
            Op::ConvW { x, w, b } => {
                let (dx, dw, db) = conv_axis_backward(self.value(*x), self.value(*w), up, Axis::W);
                accumulate(&mut grads[x.0], dx);
                accumulate(&mut grads[w.0], dw);
                accumulate(&mut grads[b.0], db);
            }
            Op::ConvTranspose2d { x, w, b, stride, pad } => {
                let (dx, dw, db) =
                    conv_transpose_backward(self.value(*x), self.value(*w), up, *stride, *pad);
                accumulate(&mut grads[x.0], dx);
                accumulate(&mut grads[w.0], dw);
                accumulate(&mut grads[b.0], db);
            }
            Op::ConcatChannels(a, b) => {
                let na = self.value(*a).len();
                let sa = self.value(*a).shape().to_vec();
                let sb = self.value(*b).shape().to_vec();
                let ga = Tensor::new(&sa, up.data()[..na].to_vec());
                let gb = Tensor::new(&sb, up.data()[na..].to_vec());
                accumulate(&mut grads[a.0], ga);
                accumulate(&mut grads[b.0], gb);
            }
            Op::CropHw { x, h0, w0 } => {
                let sx = self.value(*x).shape().to_vec();
                let (c, hh, ww) = (sx[0], sx[1], sx[2]);
                let so = self.nodes[i].value.shape();
                let (h, w) = (so[1], so[2]);
                let mut dx = vec![0.0; c * hh * ww];
                for ci in 0..c {
                    for r in 0..h {
                        let src = ci * h * w + r * w;
                        let dst = ci * hh * ww + (h0 + r) * ww + w0;
                        for q in 0..w {
                            dx[dst + q] += up.data()[src + q];
                        }
                    }
                }
                accumulate(&mut grads[x.0], Tensor::new(&sx, dx));
            }
            Op::Reshape(x) => {
                let sx = self.value(*x).shape().to_vec();
                let g = up.reshaped(&sx).expect("reshape grad");
                accumulate(&mut grads[x.0], g);
            }
            Op::TrilinearSample { grid, local } => {
                let l = self.value(*local).data();
                let (dgrid, dlocal) =
                    trilinear_backward(self.value(*grid), [l[0], l[1], l[2]], up.data());
                accumulate(&mut grads[grid.0], dgrid);
                accumulate(&mut grads[local.0], Tensor::new(&[3], dlocal.to_vec()));
            }
            Op::RayAccumulate { tau, vals } => {
                let c = self.value(*vals).shape()[0];
                let (dtau, dvals) = ray_accumulate_backward(
                    self.value(*tau).data(),
                    self.value(*vals).data(),
                    c,
                    up.data(),
                );
                let k = self.value(*tau).len();
                accumulate(&mut grads[tau.0], Tensor::new(&[k], dtau));
                accumulate(&mut grads[vals.0], Tensor::new(&[c, k], dvals));
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            debug_assert_eq!(acc.shape(), g.shape());
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

fn map_tensor(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape(), t.data().iter().map(|&v| f(v)).collect())
}

fn zip_tensor(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(a.shape(), a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose2(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Axis {
    H,
    W,
}

/// Same-padded 1D convolution along H or W of a [C,H,W] tensor.
fn conv_axis_forward(x: &Tensor, w: &Tensor, b: &Tensor, axis: Axis) -> Tensor {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, wcin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    assert_eq!(cin, wcin, "conv: input channels mismatch");
    assert_eq!(k % 2, 1, "conv kernel must be odd for same padding");
    assert_eq!(b.len(), cout);
    let r = (k / 2) as isize;
    let xd = x.data();
    let wdat = w.data();
    let mut out = vec![0.0; cout * h * wd];
    for co in 0..cout {
        let bias = b.data()[co];
        for v in &mut out[co * h * wd..(co + 1) * h * wd] {
            *v = bias;
        }
        for ci in 0..cin {
            for (d, &wv) in wdat[(co * cin + ci) * k..(co * cin + ci) * k + k].iter().enumerate() {
                if wv == 0.0 {
                    continue;
                }
                let off = d as isize - r;
                match axis {
                    Axis::H => {
                        for i in 0..h as isize {
                            let src = i + off;
                            if src < 0 || src >= h as isize {
                                continue;
                            }
                            let srow = ci * h * wd + src as usize * wd;
                            let orow = co * h * wd + i as usize * wd;
                            for q in 0..wd {
                                out[orow + q] += wv * xd[srow + q];
                            }
                        }
                    }
                    Axis::W => {
                        for i in 0..h {
                            let srow = ci * h * wd + i * wd;
                            let orow = co * h * wd + i * wd;
                            for q in 0..wd as isize {
                                let src = q + off;
                                if src < 0 || src >= wd as isize {
                                    continue;
                                }
                                out[orow + q as usize] += wv * xd[srow + src as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[cout, h, wd], out)
}

fn conv_axis_backward(x: &Tensor, w: &Tensor, up: &Tensor, axis: Axis) -> (Tensor, Tensor, Tensor) {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, _, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let r = (k / 2) as isize;
    let xd = x.data();
    let wdat = w.data();
    let ud = up.data();
    let mut dx = vec![0.0; cin * h * wd];
    let mut dw = vec![0.0; cout * cin * k];
    let mut db = vec![0.0; cout];
    for co in 0..cout {
        for v in ud[co * h * wd..(co + 1) * h * wd].iter() {
            db[co] += v;
        }
        for ci in 0..cin {
            for d in 0..k {
                let off = d as isize - r;
                let wv = wdat[(co * cin + ci) * k + d];
                let mut wacc = 0.0;
                match axis {
                    Axis::H => {
                        for i in 0..h as isize {
                            let src = i + off;
                            if src < 0 || src >= h as isize {
                                continue;
                            }
                            let srow = ci * h * wd + src as usize * wd;
                            let orow = co * h * wd + i as usize * wd;
                            for q in 0..wd {
                                let u = ud[orow + q];
                                wacc += u * xd[srow + q];
                                dx[srow + q] += u * wv;
                            }
                        }
                    }
                    Axis::W => {
                        for i in 0..h {
                            let srow = ci * h * wd + i * wd;
                            let orow = co * h * wd + i * wd;
                            for q in 0..wd as isize {
                                let src = q + off;
                                if src < 0 || src >= wd as isize {
                                    continue;
                                }
                                let u = ud[orow + q as usize];
                                wacc += u * xd[srow + src as usize];
                                dx[srow + src as usize] += u * wv;
                            }
                        }
                    }
                }
                dw[(co * cin + ci) * k + d] += wacc;
            }
        }
    }
    (
        Tensor::new(x.shape(), dx),
        Tensor::new(w.shape(), dw),
        Tensor::new(&[cout], db),
    )
}

fn conv_transpose_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (wcin, cout, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(cin, wcin, "conv_transpose: input channels mismatch");
    assert_eq!(b.len(), cout);
    let oh = (h - 1) * stride + kh;
    let ow = (wd - 1) * stride + kw;
    assert!(oh > 2 * pad && ow > 2 * pad, "conv_transpose: padding too large");
    let (oh, ow) = (oh - 2 * pad, ow - 2 * pad);
    let xd = x.data();
    let wdat = w.data();
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        let bias = b.data()[co];
        for v in &mut out[co * oh * ow..(co + 1) * oh * ow] {
            *v = bias;
        }
    }
    for ci in 0..cin {
        for i in 0..h {
            for j in 0..wd {
                let xv = xd[ci * h * wd + i * wd + j];
                if xv == 0.0 {
                    continue;
                }
                for co in 0..cout {
                    let wbase = ((ci * cout + co) * kh) * kw;
                    for ki in 0..kh {
                        let oi = (i * stride + ki) as isize - pad as isize;
                        if oi < 0 || oi >= oh as isize {
                            continue;
                        }
                        for kj in 0..kw {
                            let oj = (j * stride + kj) as isize - pad as isize;
                            if oj < 0 || oj >= ow as isize {
                                continue;
                            }
                            out[co * oh * ow + oi as usize * ow + oj as usize] +=
                                xv * wdat[wbase + ki * kw + kj];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[cout, oh, ow], out)
}

fn conv_transpose_backward(
    x: &Tensor,
    w: &Tensor,
    up: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (_, cout, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let (oh, ow) = (up.shape()[1], up.shape()[2]);
    let xd = x.data();
    let wdat = w.data();
    let ud = up.data();
    let mut dx = vec![0.0; cin * h * wd];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; cout];
    for co in 0..cout {
        for v in ud[co * oh * ow..(co + 1) * oh * ow].iter() {
            db[co] += v;
        }
    }
    for ci in 0..cin {
        for i in 0..h {
            for j in 0..wd {
                let xv = xd[ci * h * wd + i * wd + j];
                let mut acc = 0.0;
                for co in 0..cout {
                    let wbase = ((ci * cout + co) * kh) * kw;
                    for ki in 0..kh {
                        let oi = (i * stride + ki) as isize - pad as isize;
                        if oi < 0 || oi >= oh as isize {
                            continue;
                        }
                        for kj in 0..kw {
                            let oj = (j * stride + kj) as isize - pad as isize;
                            if oj < 0 || oj >= ow as isize {
                                continue;
                            }
                            let u = ud[co * oh * ow + oi as usize * ow + oj as usize];
                            acc += u * wdat[wbase + ki * kw + kj];
                            dw[wbase + ki * kw + kj] += u * xv;
                        }
                    }
                }
                dx[ci * h * wd + i * wd + j] += acc;
            }
        }
    }
    (
        Tensor::new(x.shape(), dx),
        Tensor::new(w.shape(), dw),
        Tensor::new(&[cout], db),
    )
}

/// Shared by the tape op and the raymarcher: sample a [C,D,H,W] grid at
/// local coordinates in [-1,1]^3 (x -> W, y -> H, z -> D), clamped.
pub(crate) fn trilinear_forward(grid: &Tensor, local: [f64; 3]) -> Vec<f64> {
    let mut out = vec![0.0; grid.shape()[0]];
    trilinear_forward_into(grid, local, &mut out);
    out
}

/// Allocation-free forward for the raymarcher's inner loop.
pub(crate) fn trilinear_forward_into(grid: &Tensor, local: [f64; 3], out: &mut [f64]) {
    let s = grid.shape();
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    let gd = grid.data();
    let (ix, fx) = axis_coord(local[0], w);
    let (iy, fy) = axis_coord(local[1], h);
    let (iz, fz) = axis_coord(local[2], d);
    for (ci, o) in out.iter_mut().enumerate().take(c) {
        let base = ci * d * h * w;
        let mut acc = 0.0;
        for (dz, wz) in [(0usize, 1.0 - fz), (1, fz)] {
            let z = (iz + dz).min(d - 1);
            for (dy, wy) in [(0usize, 1.0 - fy), (1, fy)] {
                let y = (iy + dy).min(h - 1);
                for (dx, wx) in [(0usize, 1.0 - fx), (1, fx)] {
                    let x = (ix + dx).min(w - 1);
                    acc += wz * wy * wx * gd[base + (z * h + y) * w + x];
                }
            }
        }
        *o = acc;
    }
}

/// Gradients of `trilinear_forward` w.r.t. grid and local coordinates.
pub(crate) fn trilinear_backward(
    grid: &Tensor,
    local: [f64; 3],
    up: &[f64],
) -> (Tensor, [f64; 3]) {
    let mut dgrid = vec![0.0; grid.len()];
    let mut dlocal = [0.0; 3];
    trilinear_backward_into(grid, local, up, &mut dgrid, &mut dlocal);
    (Tensor::new(grid.shape(), dgrid), dlocal)
}

/// Accumulating backward for the raymarcher: adds into `dgrid`/`dlocal`.
pub(crate) fn trilinear_backward_into(
    grid: &Tensor,
    local: [f64; 3],
    up: &[f64],
    dgrid: &mut [f64],
    dlocal: &mut [f64; 3],
) {
    let s = grid.shape();
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    debug_assert_eq!(up.len(), c);
    let gd = grid.data();
    let (ix, fx) = axis_coord(local[0], w);
    let (iy, fy) = axis_coord(local[1], h);
    let (iz, fz) = axis_coord(local[2], d);
    // d(grid coord)/d(local), zero outside the open interval (-1, 1).
    let sx = if local[0] > -1.0 && local[0] < 1.0 { (w - 1) as f64 / 2.0 } else { 0.0 };
    let sy = if local[1] > -1.0 && local[1] < 1.0 { (h - 1) as f64 / 2.0 } else { 0.0 };
    let sz = if local[2] > -1.0 && local[2] < 1.0 { (d - 1) as f64 / 2.0 } else { 0.0 };
    for (ci, &u) in up.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        let base = ci * d * h * w;
        for (dz, wz, gz) in [(0usize, 1.0 - fz, -1.0), (1, fz, 1.0)] {
            let z = (iz + dz).min(d - 1);
            for (dy, wy, gy) in [(0usize, 1.0 - fy, -1.0), (1, fy, 1.0)] {
                let y = (iy + dy).min(h - 1);
                for (dx, wx, gx) in [(0usize, 1.0 - fx, -1.0), (1, fx, 1.0)] {
                    let x = (ix + dx).min(w - 1);
                    let v = gd[base + (z * h + y) * w + x];
                    dgrid[base + (z * h + y) * w + x] += u * wz * wy * wx;
                    dlocal[0] += u * gx * wz * wy * v * sx;
                    dlocal[1] += u * gy * wz * wx * v * sy;
                    dlocal[2] += u * gz * wy * wx * v * sz;
                }
            }
        }
    }
}

/// Map a local coordinate in [-1,1] to (base index, fraction) with voxel
/// centers at -1 and +1.
#[inline]
fn axis_coord(l: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let g = (l.clamp(-1.0, 1.0) + 1.0) * 0.5 * (n - 1) as f64;
    let i = (g.floor() as usize).min(n - 2);
    (i, g - i as f64)
}

/// Returns (out [C+1], weights [K], crossing index m or K if no clamp).
pub(crate) fn ray_accumulate_forward(
    tau: &[f64],
    vals: &[f64],
    c: usize,
) -> (Vec<f64>, Vec<f64>, usize) {
    let k = tau.len();
    let mut out = vec![0.0; c + 1];
    let mut weights = vec![0.0; k];
    let mut acc = 0.0;
    let mut m = k;
    for (i, &t) in tau.iter().enumerate() {
        let next = (acc + t).min(1.0);
        let w = next - acc;
        if m == k && acc + t >= 1.0 {
            m = i;
        }
        weights[i] = w;
        for ci in 0..c {
            out[ci] += w * vals[ci * k + i];
        }
        acc = next;
    }
    out[c] = acc;
    (out, weights, m)
}

pub(crate) fn ray_accumulate_backward(
    tau: &[f64],
    vals: &[f64],
    c: usize,
    up: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let k = tau.len();
    let (_, weights, m) = ray_accumulate_forward(tau, vals, c);
    let mut dtau = vec![0.0; k];
    let mut dvals = vec![0.0; c * k];
    // u_i = dL/dw_i
    let mut u = vec![0.0; k];
    for i in 0..k {
        let mut acc = up[c]; // alpha output
        for ci in 0..c {
            acc += up[ci] * vals[ci * k + i];
        }
        u[i] = acc;
        for ci in 0..c {
            dvals[ci * k + i] = up[ci] * weights[i];
        }
    }
    let um = if m < k { u[m] } else { 0.0 };
    for i in 0..k {
        if i < m {
            dtau[i] = u[i] - um;
        }
    }
    (dtau, dvals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient_is_two_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let z = tape.leaf(Tensor::new(&[2], vec![1.0, 2.0]));
        let y = tape.square(x);
        let g = tape.backward(y).unwrap();
        assert!(g.grad(z).is_none());
        assert_eq!(g.grad_or_zeros(z, &[2]).data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[2], vec![1.0, 2.0]));
        let y = tape.square(x);
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn replaying_backward_is_bit_identical() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[4], vec![0.3, -1.2, 2.5, 0.01]));
        let e = tape.exp(x);
        let s = tape.sum(e);
        let g1 = tape.backward(s).unwrap();
        let g2 = tape.backward(s).unwrap();
        let a = g1.grad(x).unwrap().data();
        let b = g2.grad(x).unwrap().data();
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn matmul_forward_small() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(Tensor::new(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]));
        let c = tape.matmul(a, b);
        assert_eq!(tape.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn trilinear_constant_grid_everywhere() {
        let mut tape = Tape::new();
        let grid = tape.leaf(Tensor::full(&[1, 3, 3, 3], 7.0));
        for l in [[-1.0, -1.0, -1.0], [0.0, 0.0, 0.0], [0.3, -0.7, 0.9], [1.0, 1.0, 1.0]] {
            let local = tape.leaf(Tensor::new(&[3], l.to_vec()));
            let v = tape.trilinear_sample(grid, local);
            assert!((tape.value(v).data()[0] - 7.0).abs() < 1e-12, "at {l:?}");
        }
    }

    #[test]
    fn trilinear_corner_and_centroid() {
        let mut tape = Tape::new();
        // 2x2x2 grid, channel value = linear index.
        let grid = tape.leaf(Tensor::new(&[1, 2, 2, 2], (0..8).map(|v| v as f64).collect()));
        let corner = tape.leaf(Tensor::new(&[3], vec![-1.0, -1.0, -1.0]));
        let v = tape.trilinear_sample(grid, corner);
        assert_eq!(tape.value(v).data()[0], 0.0);
        let hi = tape.leaf(Tensor::new(&[3], vec![1.0, 1.0, 1.0]));
        let v = tape.trilinear_sample(grid, hi);
        assert_eq!(tape.value(v).data()[0], 7.0);
        let mid = tape.leaf(Tensor::new(&[3], vec![0.0, 0.0, 0.0]));
        let v = tape.trilinear_sample(grid, mid);
        assert_eq!(tape.value(v).data()[0], 3.5); // mean of 0..8
    }

    #[test]
    fn separable_conv_identity_kernel_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[1, 3, 4], (0..12).map(|v| v as f64 * 0.5).collect()));
        // Centered delta kernels, 1 channel.
        let wc = tape.leaf(Tensor::new(&[1, 1, 3], vec![0.0, 1.0, 0.0]));
        let wr = tape.leaf(Tensor::new(&[1, 1, 3], vec![0.0, 1.0, 0.0]));
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.separable_conv2d(x, wc, b, wr, b, None);
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn separable_box_blur_keeps_constant_interior() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 5, 5], 2.0));
        let third = 1.0 / 3.0;
        let wc = tape.leaf(Tensor::new(&[1, 1, 3], vec![third; 3]));
        let wr = tape.leaf(Tensor::new(&[1, 1, 3], vec![third; 3]));
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.separable_conv2d(x, wc, b, wr, b, None);
        // Interior away from the zero-padded border is exactly preserved.
        let v = tape.value(y).data()[2 * 5 + 2];
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn separable_conv_matches_dense_2d_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (cin, cmid, cout, h, w, k) = (2, 3, 2, 5, 6, 3);
        let x: Vec<f64> = (0..cin * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wc: Vec<f64> = (0..cmid * cin * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wr: Vec<f64> = (0..cout * cmid * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(&[cin, h, w], x.clone()));
        let wcv = tape.leaf(Tensor::new(&[cmid, cin, k], wc.clone()));
        let wrv = tape.leaf(Tensor::new(&[cout, cmid, k], wr.clone()));
        let bc = tape.leaf(Tensor::zeros(&[cmid]));
        let br = tape.leaf(Tensor::zeros(&[cout]));
        let y = tape.separable_conv2d(xv, wcv, bc, wrv, br, None);
        // Dense oracle: 2D kernel[co][ci][dy][dx] = sum_cm wc[cm,ci,dy]*wr[co,cm,dx]
        let r = k / 2;
        let mut oracle = vec![0.0; cout * h * w];
        for co in 0..cout {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for dy in 0..k {
                            let si = i as isize + dy as isize - r as isize;
                            if si < 0 || si >= h as isize {
                                continue;
                            }
                            for dx in 0..k {
                                let sj = j as isize + dx as isize - r as isize;
                                if sj < 0 || sj >= w as isize {
                                    continue;
                                }
                                let mut kk = 0.0;
                                for cm in 0..cmid {
                                    kk += wc[(cm * cin + ci) * k + dy] * wr[(co * cmid + cm) * k + dx];
                                }
                                acc += kk * x[ci * h * w + si as usize * w + sj as usize];
                            }
                        }
                    }
                    oracle[co * h * w + i * w + j] = acc;
                }
            }
        }
        for (a, b) in tape.value(y).data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn conv_transpose_output_size_doubles_with_stride_two() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 3, 5], 1.0));
        let w = tape.leaf(Tensor::full(&[1, 2, 4, 4], 0.1));
        let b = tape.leaf(Tensor::zeros(&[2]));
        let y = tape.conv_transpose2d(x, w, b, 2, 1);
        assert_eq!(tape.value(y).shape(), &[2, 6, 10]);
    }

    #[test]
    fn ray_accumulate_unclamped_hand_case() {
        let mut tape = Tape::new();
        let tau = tape.leaf(Tensor::new(&[3], vec![0.1, 0.2, 0.3]));
        let vals = tape.leaf(Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]));
        let out = tape.ray_accumulate(tau, vals);
        let o = tape.value(out).data();
        assert!((o[0] - (0.1 + 0.4 + 0.9)).abs() < 1e-12);
        assert!((o[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn ray_accumulate_saturates_exactly_at_one() {
        let mut tape = Tape::new();
        let tau = tape.leaf(Tensor::new(&[4], vec![0.5, 0.4, 0.4, 0.2]));
        let vals = tape.leaf(Tensor::new(&[1, 4], vec![1.0; 4]));
        let out = tape.ray_accumulate(tau, vals);
        let o = tape.value(out).data();
        assert_eq!(o[1], 1.0); // total opacity telescopes to exactly 1
        assert_eq!(o[0], 1.0);
        // Weights: 0.5, 0.4, 0.1 (clamped), 0 -> gradient of tau[3] is 0.
        let g = tape.backward_seeded(vec![(out, Tensor::new(&[2], vec![1.0, 0.0]))]).unwrap();
        let dtau = g.grad(tau).unwrap().data();
        assert_eq!(dtau[3], 0.0);
        assert_eq!(dtau[2], 0.0); // crossing step is itself clamped
    }
}
