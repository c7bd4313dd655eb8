//! Tape of forward operations and the reverse sweep over it.

use super::adam::{ParamId, ParamStore};
use super::conv::ConvGeom;
use super::linalg::{gemm, DenseLu};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Denominator guard for the relative squared errors.
pub const REL_EPS: f64 = 1e-12;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Add(Var, Var),
    AddChannels { x: Var, s: Var },
    ChannelMean(Var),
    Upsample2(Var),
    Conv { x: Var, k: Var, b: Option<Var>, geom: ConvGeom, cols: Vec<f64> },
    TConv { x: Var, k: Var, b: Option<Var>, geom: ConvGeom },
    AvgPool2(Var),
    Reshape(Var),
    Symmetrize(Var),
    ApplyOp { x: Var, l: Var },
    Solve { l: Var, f: Var, lu: DenseLu },
    RelSq { pred: Var, target: Var },
    PairRelSq { pred: Var, target: Var },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single forward pass. Parameters are read from the store by reference;
/// nothing recorded here mutates a tensor once it has been produced.
pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

fn shape_err(op: &str, msg: String) -> Error {
    Error::Shape(format!("{op}: {msg}"))
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self { store, nodes: Vec::new(), param_nodes: vec![None; store.len()] }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.value(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("forward {name}")));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Input, false, "input")
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node { value: Tensor::zeros(&[1]), op: Op::Param(id), needs_grad: true });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    /// `x·W + b` for `x: [batch, n]`, `W: [n, m]`, `b: [m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(shape_err("linear", format!("x {xs:?} · W {ws:?}")));
        }
        let (batch, n, m) = (xs[0], xs[1], ws[1]);
        let mut out = vec![0.0; batch * m];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != m {
                return Err(shape_err("linear", format!("bias has {} entries, expected {m}", bv.len())));
            }
            for row in out.chunks_mut(m) {
                row.copy_from_slice(bv.data());
            }
        }
        gemm(batch, n, m, self.value(x).data(), false, self.value(w).data(), false, 1.0, &mut out);
        let needs = self.needs(x) || self.needs(w) || b.map(|b| self.needs(b)).unwrap_or(false);
        self.push(Tensor::new(&[batch, m], out)?, Op::Linear { x, w, b }, needs, "linear")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.max(0.0)).collect();
        let t = Tensor::new(xv.shape(), data)?;
        let needs = self.needs(x);
        self.push(t, Op::Relu(x), needs, "relu")
    }

    /// `relu(x·W + b)` or `x·W + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>, relu: bool) -> Result<Var> {
        let y = self.linear(x, w, b)?;
        if relu {
            self.relu(y)
        } else {
            Ok(y)
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", format!("{:?} + {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(av.shape(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(t, Op::Add(a, b), needs, "add")
    }

    fn dims4(&self, v: Var, op: &str) -> Result<[usize; 4]> {
        let s = self.shape(v);
        if s.len() != 4 {
            return Err(shape_err(op, format!("expected [batch, channels, h, w], got {s:?}")));
        }
        Ok([s[0], s[1], s[2], s[3]])
    }

    /// Adds a single-channel image `s: [b,1,h,w]` to every channel of `x`.
    pub fn add_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let [b, c, h, w] = self.dims4(x, "add_channels")?;
        if self.shape(s) != [b, 1, h, w] {
            return Err(shape_err("add_channels", format!("{:?} onto {:?}", self.shape(s), self.shape(x))));
        }
        let (xv, sv) = (self.value(x).data(), self.value(s).data());
        let plane = h * w;
        let mut out = xv.to_vec();
        for bi in 0..b {
            let src = &sv[bi * plane..(bi + 1) * plane];
            for ci in 0..c {
                let dst = &mut out[(bi * c + ci) * plane..][..plane];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        let needs = self.needs(x) || self.needs(s);
        self.push(Tensor::new(&[b, c, h, w], out)?, Op::AddChannels { x, s }, needs, "add_channels")
    }

    /// Mean over channels: `[b,c,h,w] → [b,1,h,w]`.
    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = self.dims4(x, "channel_mean")?;
        let xv = self.value(x).data();
        let plane = h * w;
        let mut out = vec![0.0; b * plane];
        for bi in 0..b {
            let dst = &mut out[bi * plane..(bi + 1) * plane];
            for ci in 0..c {
                for (d, v) in dst.iter_mut().zip(&xv[(bi * c + ci) * plane..][..plane]) {
                    *d += v;
                }
            }
            dst.iter_mut().for_each(|d| *d /= c as f64);
        }
        let needs = self.needs(x);
        self.push(Tensor::new(&[b, 1, h, w], out)?, Op::ChannelMean(x), needs, "channel_mean")
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = self.dims4(x, "upsample2")?;
        let xv = self.value(x).data();
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![0.0; b * c * h2 * w2];
        for p in 0..b * c {
            for y in 0..h2 {
                for xx in 0..w2 {
                    out[p * h2 * w2 + y * w2 + xx] = xv[p * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let needs = self.needs(x);
        self.push(Tensor::new(&[b, c, h2, w2], out)?, Op::Upsample2(x), needs, "upsample2")
    }

    fn channel_bias(&self, b: Option<Var>, channels: usize, op: &str) -> Result<Option<Vec<f64>>> {
        match b {
            None => Ok(None),
            Some(b) => {
                let bv = self.value(b);
                if bv.len() != channels {
                    return Err(shape_err(op, format!("bias has {} entries, expected {channels}", bv.len())));
                }
                Ok(Some(bv.data().to_vec()))
            }
        }
    }

    /// Same-padded 4×4 convolution, `x: [b,c,h,w]`, `k: [c_out,c,4,4]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let [batch, c, h, w] = self.dims4(x, "conv2d")?;
        let ks = self.shape(k).to_vec();
        if ks.len() != 4 || ks[1] != c || ks[2] != 4 || ks[3] != 4 || !(stride == 1 || stride == 2) {
            return Err(shape_err("conv2d", format!("kernel {ks:?} on input {:?} stride {stride}", self.shape(x))));
        }
        let co = ks[0];
        let geom = ConvGeom::new(c, h, w, stride);
        let (rows, width) = (geom.cols_rows(), geom.cols_width());
        let bias = self.channel_bias(b, co, "conv2d")?;
        let mut cols = vec![0.0; batch * rows * width];
        let mut out = vec![0.0; batch * co * width];
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        for bi in 0..batch {
            let col = &mut cols[bi * rows * width..][..rows * width];
            geom.im2col(&xv[bi * c * h * w..][..c * h * w], col);
            let o = &mut out[bi * co * width..][..co * width];
            gemm(co, rows, width, kv, false, col, false, 0.0, o);
            if let Some(bias) = &bias {
                for (ci, chunk) in o.chunks_mut(width).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bias[ci]);
                }
            }
        }
        let needs = self.needs(x) || self.needs(k) || b.map(|b| self.needs(b)).unwrap_or(false);
        let t = Tensor::new(&[batch, co, geom.out_h, geom.out_w], out)?;
        self.push(t, Op::Conv { x, k, b, geom, cols }, needs, "conv2d")
    }

    /// Transposed convolution: the adjoint of [`Graph::conv2d`] with the same
    /// stride. `x: [b,c_in,h,w]`, `k: [c_in,c_out,4,4]`, output
    /// `[b,c_out,h·stride,w·stride]`.
    pub fn tconv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let [batch, ci, h, w] = self.dims4(x, "tconv2d")?;
        let ks = self.shape(k).to_vec();
        if ks.len() != 4 || ks[0] != ci || ks[2] != 4 || ks[3] != 4 || !(stride == 1 || stride == 2) {
            return Err(shape_err("tconv2d", format!("kernel {ks:?} on input {:?} stride {stride}", self.shape(x))));
        }
        let co = ks[1];
        let geom = ConvGeom::new(co, h * stride, w * stride, stride);
        debug_assert_eq!((geom.out_h, geom.out_w), (h, w));
        let (rows, width) = (geom.cols_rows(), geom.cols_width());
        let bias = self.channel_bias(b, co, "tconv2d")?;
        let plane_out = geom.h * geom.w;
        let mut out = vec![0.0; batch * co * plane_out];
        let mut cols = vec![0.0; rows * width];
        let xv = self.value(x).data();
        let kv = self.value(k).data();
        for bi in 0..batch {
            gemm(rows, ci, width, kv, true, &xv[bi * ci * width..][..ci * width], false, 0.0, &mut cols);
            let o = &mut out[bi * co * plane_out..][..co * plane_out];
            geom.col2im(&cols, o);
            if let Some(bias) = &bias {
                for (c, chunk) in o.chunks_mut(plane_out).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bias[c]);
                }
            }
        }
        let needs = self.needs(x) || self.needs(k) || b.map(|b| self.needs(b)).unwrap_or(false);
        let t = Tensor::new(&[batch, co, geom.h, geom.w], out)?;
        self.push(t, Op::TConv { x, k, b, geom }, needs, "tconv2d")
    }

    /// 2×2 average pooling with stride 2.
    pub fn avgpool2(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = self.dims4(x, "avgpool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err("avgpool2", format!("spatial size {h}x{w} is not even")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let xv = self.value(x).data();
        let mut out = vec![0.0; b * c * ho * wo];
        for p in 0..b * c {
            let src = &xv[p * h * w..][..h * w];
            for y in 0..ho {
                for xx in 0..wo {
                    let s = src[2 * y * w + 2 * xx]
                        + src[2 * y * w + 2 * xx + 1]
                        + src[(2 * y + 1) * w + 2 * xx]
                        + src[(2 * y + 1) * w + 2 * xx + 1];
                    out[p * ho * wo + y * wo + xx] = 0.25 * s;
                }
            }
        }
        let needs = self.needs(x);
        self.push(Tensor::new(&[b, c, ho, wo], out)?, Op::AvgPool2(x), needs, "avgpool2")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        let needs = self.needs(x);
        self.push(t, Op::Reshape(x), needs, "reshape")
    }

    /// `(W + Wᵀ)/2`, exactly symmetric.
    pub fn symmetrize(&mut self, w: Var) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || ws[0] != ws[1] {
            return Err(shape_err("symmetrize", format!("{ws:?} is not square")));
        }
        let t = symmetrized(self.value(w));
        let needs = self.needs(w);
        self.push(t, Op::Symmetrize(w), needs, "symmetrize")
    }

    /// Row-wise `L x` for `x: [batch, m]`, `L: [m, m]`.
    pub fn apply_operator(&mut self, x: Var, l: Var) -> Result<Var> {
        let (xs, ls) = (self.shape(x).to_vec(), self.shape(l).to_vec());
        if xs.len() != 2 || ls != [xs[1], xs[1]] {
            return Err(shape_err("apply_operator", format!("L {ls:?} on x {xs:?}")));
        }
        let (batch, m) = (xs[0], xs[1]);
        let mut out = vec![0.0; batch * m];
        gemm(batch, m, m, self.value(x).data(), false, self.value(l).data(), true, 0.0, &mut out);
        let needs = self.needs(x) || self.needs(l);
        self.push(Tensor::new(&[batch, m], out)?, Op::ApplyOp { x, l }, needs, "apply_operator")
    }

    /// Row-wise solve `L v = f` by LU factorization.
    pub fn solve(&mut self, l: Var, f: Var) -> Result<Var> {
        let (fs, ls) = (self.shape(f).to_vec(), self.shape(l).to_vec());
        if fs.len() != 2 || ls != [fs[1], fs[1]] {
            return Err(shape_err("solve", format!("L {ls:?} with f {fs:?}")));
        }
        let m = fs[1];
        let lu = DenseLu::factor(self.value(l).data(), m)?;
        let mut out = Vec::with_capacity(self.value(f).len());
        for row in self.value(f).rows() {
            out.extend(lu.solve(row));
        }
        let needs = self.needs(l) || self.needs(f);
        self.push(Tensor::new(&fs, out)?, Op::Solve { l, f, lu }, needs, "solve")
    }

    fn check_pair(&self, pred: Var, target: Var, op: &str) -> Result<()> {
        let (ps, ts) = (self.shape(pred), self.shape(target));
        if ps.len() != 2 || ps != ts {
            return Err(shape_err(op, format!("prediction {ps:?} vs target {ts:?}")));
        }
        Ok(())
    }

    /// `mean_k ‖t_k − p_k‖² / (‖t_k‖² + 1e-12)` over the rows of a batch.
    pub fn rel_sq(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_pair(pred, target, "rel_sq")?;
        let rows = rel_sq_rows(self.value(pred), self.value(target));
        let mean = rows.iter().sum::<f64>() / rows.len().max(1) as f64;
        let needs = self.needs(pred) || self.needs(target);
        self.push(Tensor::scalar(mean), Op::RelSq { pred, target }, needs, "rel_sq")
    }

    /// Superposition form: mean over all ordered row pairs `(i, j)` of
    /// `‖(t_i + t_j) − (p_i + p_j)‖² / (‖t_i + t_j‖² + 1e-12)`.
    pub fn pair_rel_sq(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_pair(pred, target, "pair_rel_sq")?;
        let v = pair_rel_sq_value(self.value(pred), self.value(target));
        let needs = self.needs(pred) || self.needs(target);
        self.push(Tensor::scalar(v), Op::PairRelSq { pred, target }, needs, "pair_rel_sq")
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        let mut s = 0.0;
        for &t in terms {
            if self.value(t).len() != 1 {
                return Err(shape_err("sum", "terms must be scalars".into()));
            }
            s += self.scalar(t);
        }
        let needs = terms.iter().any(|&t| self.needs(t));
        self.push(Tensor::scalar(s), Op::Sum(terms.to_vec()), needs, "sum")
    }

    /// Reverse sweep from a scalar node. Returns one gradient per store
    /// parameter (zero for parameters the graph never touched).
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = self.store.zero_grads();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let Op::Param(id) = node.op {
                out[id.0].add_assign(&g);
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
        }
        for (p, g) in self.store.params().iter().zip(&out) {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of '{}'", p.name)));
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (batch, n, m) = (xv.shape()[0], xv.shape()[1], wv.shape()[1]);
                if self.needs(*x) {
                    let mut dx = vec![0.0; batch * n];
                    gemm(batch, m, n, gd, false, wv.data(), true, 0.0, &mut dx);
                    self.accumulate(grads, *x, Tensor::new(&[batch, n], dx)?);
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; n * m];
                    gemm(n, batch, m, xv.data(), true, gd, false, 0.0, &mut dw);
                    self.accumulate(grads, *w, Tensor::new(&[n, m], dw)?);
                }
                if let Some(b) = b {
                    let mut db = vec![0.0; m];
                    for row in gd.chunks(m) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(&[m], db)?);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let dx = xv.data().iter().zip(gd).map(|(a, d)| if *a > 0.0 { *d } else { 0.0 }).collect();
                self.accumulate(grads, *x, Tensor::new(xv.shape(), dx)?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddChannels { x, s } => {
                self.accumulate(grads, *x, g.clone());
                if self.needs(*s) {
                    let sh = self.shape(*s).to_vec();
                    let c = self.shape(*x)[1];
                    let plane = sh[2] * sh[3];
                    let mut ds = vec![0.0; sh[0] * plane];
                    for bi in 0..sh[0] {
                        for ci in 0..c {
                            for (d, v) in ds[bi * plane..][..plane].iter_mut().zip(&gd[(bi * c + ci) * plane..][..plane]) {
                                *d += v;
                            }
                        }
                    }
                    self.accumulate(grads, *s, Tensor::new(&sh, ds)?);
                }
            }
            Op::ChannelMean(x) => {
                let sh = self.shape(*x).to_vec();
                let (c, plane) = (sh[1], sh[2] * sh[3]);
                let mut dx = vec![0.0; sh.iter().product()];
                for bi in 0..sh[0] {
                    for ci in 0..c {
                        for (d, v) in dx[(bi * c + ci) * plane..][..plane].iter_mut().zip(&gd[bi * plane..][..plane]) {
                            *d = v / c as f64;
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(&sh, dx)?);
            }
            Op::Upsample2(x) => {
                let sh = self.shape(*x).to_vec();
                let (h, w) = (sh[2], sh[3]);
                let w2 = 2 * w;
                let mut dx = vec![0.0; sh.iter().product()];
                for p in 0..sh[0] * sh[1] {
                    for y in 0..2 * h {
                        for xx in 0..w2 {
                            dx[p * h * w + (y / 2) * w + xx / 2] += gd[p * 4 * h * w + y * w2 + xx];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(&sh, dx)?);
            }
            Op::Conv { x, k, b, geom, cols } => {
                let sh = self.shape(*x).to_vec();
                let batch = sh[0];
                let kv = self.value(*k);
                let co = kv.shape()[0];
                let (rows, width) = (geom.cols_rows(), geom.cols_width());
                let in_len = geom.channels * geom.h * geom.w;
                let mut dk = vec![0.0; co * rows];
                let mut dx = if self.needs(*x) { Some(vec![0.0; batch * in_len]) } else { None };
                let mut dcols = vec![0.0; rows * width];
                for bi in 0..batch {
                    let go = &gd[bi * co * width..][..co * width];
                    let col = &cols[bi * rows * width..][..rows * width];
                    gemm(co, width, rows, go, false, col, true, 1.0, &mut dk);
                    if let Some(dx) = dx.as_mut() {
                        gemm(rows, co, width, kv.data(), true, go, false, 0.0, &mut dcols);
                        geom.col2im(&dcols, &mut dx[bi * in_len..][..in_len]);
                    }
                }
                self.accumulate(grads, *k, Tensor::new(kv.shape(), dk)?);
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Tensor::new(&sh, dx)?);
                }
                if let Some(b) = b {
                    self.accumulate(grads, *b, channel_sums(gd, batch, co, width)?);
                }
            }
            Op::TConv { x, k, b, geom } => {
                let sh = self.shape(*x).to_vec();
                let (batch, ci) = (sh[0], sh[1]);
                let kv = self.value(*k);
                let co = geom.channels;
                let (rows, width) = (geom.cols_rows(), geom.cols_width());
                let out_plane = geom.h * geom.w;
                let xv = self.value(*x).data();
                let mut dk = vec![0.0; ci * rows];
                let mut dx = if self.needs(*x) { Some(vec![0.0; batch * ci * width]) } else { None };
                let mut cols = vec![0.0; rows * width];
                for bi in 0..batch {
                    geom.im2col(&gd[bi * co * out_plane..][..co * out_plane], &mut cols);
                    gemm(ci, width, rows, &xv[bi * ci * width..][..ci * width], false, &cols, true, 1.0, &mut dk);
                    if let Some(dx) = dx.as_mut() {
                        gemm(ci, rows, width, kv.data(), false, &cols, false, 0.0, &mut dx[bi * ci * width..][..ci * width]);
                    }
                }
                self.accumulate(grads, *k, Tensor::new(kv.shape(), dk)?);
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Tensor::new(&sh, dx)?);
                }
                if let Some(b) = b {
                    self.accumulate(grads, *b, channel_sums(gd, batch, co, out_plane)?);
                }
            }
            Op::AvgPool2(x) => {
                let sh = self.shape(*x).to_vec();
                let (h, w) = (sh[2], sh[3]);
                let (ho, wo) = (h / 2, w / 2);
                let mut dx = vec![0.0; sh.iter().product()];
                for p in 0..sh[0] * sh[1] {
                    for y in 0..h {
                        for xx in 0..w {
                            dx[p * h * w + y * w + xx] = 0.25 * gd[p * ho * wo + (y / 2) * wo + xx / 2];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(&sh, dx)?);
            }
            Op::Reshape(x) => {
                let sh = self.shape(*x).to_vec();
                self.accumulate(grads, *x, g.clone().reshaped(&sh)?);
            }
            Op::Symmetrize(w) => {
                let dw = symmetrized(g);
                self.accumulate(grads, *w, dw);
            }
            Op::ApplyOp { x, l } => {
                let (xv, lv) = (self.value(*x), self.value(*l));
                let (batch, m) = (xv.shape()[0], xv.shape()[1]);
                if self.needs(*x) {
                    let mut dx = vec![0.0; batch * m];
                    gemm(batch, m, m, gd, false, lv.data(), false, 0.0, &mut dx);
                    self.accumulate(grads, *x, Tensor::new(&[batch, m], dx)?);
                }
                if self.needs(*l) {
                    let mut dl = vec![0.0; m * m];
                    gemm(m, batch, m, gd, true, xv.data(), false, 0.0, &mut dl);
                    self.accumulate(grads, *l, Tensor::new(&[m, m], dl)?);
                }
            }
            Op::Solve { l, f, lu } => {
                // v = L⁻¹ f  ⇒  ∂f = L⁻ᵀ g,  ∂L = −(L⁻ᵀ g) vᵀ
                let v = &node.value;
                let (batch, m) = (v.shape()[0], v.shape()[1]);
                let mut lam = Vec::with_capacity(batch * m);
                for row in gd.chunks(m) {
                    lam.extend(lu.solve_transpose(row));
                }
                if self.needs(*l) {
                    let mut dl = vec![0.0; m * m];
                    gemm(m, batch, m, &lam, true, v.data(), false, 0.0, &mut dl);
                    dl.iter_mut().for_each(|d| *d = -*d);
                    self.accumulate(grads, *l, Tensor::new(&[m, m], dl)?);
                }
                self.accumulate(grads, *f, Tensor::new(&[batch, m], lam)?);
            }
            Op::RelSq { pred, target } => {
                let (pv, tv) = (self.value(*pred), self.value(*target));
                let (batch, m) = (pv.shape()[0], pv.shape()[1]);
                let up = gd[0] / batch as f64;
                let mut dp = vec![0.0; batch * m];
                let mut dt = vec![0.0; batch * m];
                for k in 0..batch {
                    let p = &pv.data()[k * m..][..m];
                    let t = &tv.data()[k * m..][..m];
                    let d = t.iter().map(|x| x * x).sum::<f64>() + REL_EPS;
                    let e2: f64 = t.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                    let r = e2 / d;
                    for i in 0..m {
                        let e = t[i] - p[i];
                        dp[k * m + i] = -up * 2.0 * e / d;
                        dt[k * m + i] = up * (2.0 * e / d - 2.0 * r * t[i] / d);
                    }
                }
                self.accumulate(grads, *pred, Tensor::new(&[batch, m], dp)?);
                self.accumulate(grads, *target, Tensor::new(&[batch, m], dt)?);
            }
            Op::PairRelSq { pred, target } => {
                let (pv, tv) = (self.value(*pred), self.value(*target));
                let (batch, m) = (pv.shape()[0], pv.shape()[1]);
                let up = gd[0] / (batch * batch) as f64;
                let e: Vec<f64> = tv.data().iter().zip(pv.data()).map(|(t, p)| t - p).collect();
                let mut de = vec![0.0; batch * m];
                let mut dt = vec![0.0; batch * m];
                let mut s = vec![0.0; m];
                let mut tt = vec![0.0; m];
                for i in 0..batch {
                    for j in 0..batch {
                        for q in 0..m {
                            s[q] = e[i * m + q] + e[j * m + q];
                            tt[q] = tv.data()[i * m + q] + tv.data()[j * m + q];
                        }
                        let d = tt.iter().map(|x| x * x).sum::<f64>() + REL_EPS;
                        let r = s.iter().map(|x| x * x).sum::<f64>() / d;
                        for q in 0..m {
                            let ge = up * 2.0 * s[q] / d;
                            let gt = -up * 2.0 * r * tt[q] / d;
                            de[i * m + q] += ge;
                            de[j * m + q] += ge;
                            dt[i * m + q] += gt;
                            dt[j * m + q] += gt;
                        }
                    }
                }
                // e = t − p
                let dp: Vec<f64> = de.iter().map(|v| -v).collect();
                let dt: Vec<f64> = dt.iter().zip(&de).map(|(a, b)| a + b).collect();
                self.accumulate(grads, *pred, Tensor::new(&[batch, m], dp)?);
                self.accumulate(grads, *target, Tensor::new(&[batch, m], dt)?);
            }
            Op::Sum(terms) => {
                for &t in terms {
                    self.accumulate(grads, t, g.clone());
                }
            }
        }
        Ok(())
    }
}

fn channel_sums(gd: &[f64], batch: usize, channels: usize, plane: usize) -> Result<Tensor> {
    let mut db = vec![0.0; channels];
    for bi in 0..batch {
        for (c, d) in db.iter_mut().enumerate() {
            *d += gd[(bi * channels + c) * plane..][..plane].iter().sum::<f64>();
        }
    }
    Tensor::new(&[channels], db)
}

pub(crate) fn symmetrized(w: &Tensor) -> Tensor {
    let n = w.shape()[0];
    let wd = w.data();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = 0.5 * (wd[i * n + j] + wd[j * n + i]);
        }
    }
    Tensor::new(&[n, n], out).expect("square")
}

/// Per-row relative squared errors `‖t_k − p_k‖² / (‖t_k‖² + 1e-12)`.
pub fn rel_sq_rows(pred: &Tensor, target: &Tensor) -> Vec<f64> {
    pred.rows()
        .zip(target.rows())
        .map(|(p, t)| {
            let e2: f64 = t.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            e2 / (t.iter().map(|x| x * x).sum::<f64>() + REL_EPS)
        })
        .collect()
}

fn pair_rel_sq_value(pred: &Tensor, target: &Tensor) -> f64 {
    let (batch, m) = (pred.shape()[0], pred.shape()[1]);
    let p = pred.data();
    let t = target.data();
    let mut total = 0.0;
    for i in 0..batch {
        for j in 0..batch {
            let mut num = 0.0;
            let mut den = 0.0;
            for q in 0..m {
                let ts = t[i * m + q] + t[j * m + q];
                let es = ts - (p[i * m + q] + p[j * m + q]);
                num += es * es;
                den += ts * ts;
            }
            total += num / (den + REL_EPS);
        }
    }
    total / (batch * batch).max(1) as f64
}

/// Stand-alone convolution forward (used by tests and exports).
pub fn conv2d_forward(x: &Tensor, k: &Tensor, stride: usize) -> Result<Tensor> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let xv = g.input(x.clone())?;
    let kv = g.input(k.clone())?;
    let y = g.conv2d(xv, kv, None, stride)?;
    Ok(g.value(y).clone())
}

/// Stand-alone transposed-convolution forward.
pub fn tconv2d_forward(x: &Tensor, k: &Tensor, stride: usize) -> Result<Tensor> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let xv = g.input(x.clone())?;
    let kv = g.input(k.clone())?;
    let y = g.tconv2d(xv, kv, None, stride)?;
    Ok(g.value(y).clone())
}
