//! Encoder/decoder architectures and the latent operator.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{init_he_normal, init_variance_scaling, Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result};

/// Conv channel widths of the four encoder stages.
pub const ENCODER_CHANNELS: [usize; 4] = [8, 16, 32, 64];
/// Output channels of the four stride-2 decoder stages.
pub const DECODER_CHANNELS: [usize; 4] = [32, 16, 8, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    Dense,
    Conv,
}

/// How the raw operator matrix `W` starts out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorInit {
    Identity,
    HeNormal,
    /// Constant diagonals, 1 on the main diagonal falling linearly to 0 at
    /// the far corner.
    Toeplitz,
}

impl OperatorInit {
    pub fn code(self) -> u8 {
        match self {
            OperatorInit::Identity => 0,
            OperatorInit::HeNormal => 1,
            OperatorInit::Toeplitz => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(OperatorInit::Identity),
            1 => Some(OperatorInit::HeNormal),
            2 => Some(OperatorInit::Toeplitz),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorInit::Identity => "identity",
            OperatorInit::HeNormal => "he-normal",
            OperatorInit::Toeplitz => "toeplitz",
        }
    }

    /// `m × m` starting matrix.
    pub fn matrix(self, m: usize, seed: u64) -> Result<Tensor> {
        match self {
            OperatorInit::Identity => Ok(Tensor::identity(m)),
            OperatorInit::HeNormal => Tensor::new(&[m, m], init_he_normal(m * m, m, seed)?),
            OperatorInit::Toeplitz => {
                let span = (m.max(2) - 1) as f64;
                let data = (0..m * m)
                    .map(|k| {
                        let (i, j) = (k / m, k % m);
                        1.0 - (i.abs_diff(j) as f64) / span
                    })
                    .collect();
                Tensor::new(&[m, m], data)
            }
        }
    }
}

/// Shape of both autoencoders. `grid` is the number of points in 1D or the
/// side length in 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub kind: ArchKind,
    pub grid: usize,
    pub latent: usize,
    /// Hidden width of the dense coders.
    pub width: usize,
    /// Number of hidden ReLU layers per dense coder.
    pub depth: usize,
    pub resnet: bool,
    pub operator_init: OperatorInit,
}

impl Architecture {
    /// The 1D default: width = grid, two hidden layers, skips on.
    pub fn dense(grid: usize, latent: usize) -> Self {
        Self {
            kind: ArchKind::Dense,
            grid,
            latent,
            width: grid,
            depth: 2,
            resnet: true,
            operator_init: OperatorInit::Identity,
        }
    }

    pub fn conv(grid: usize, latent: usize) -> Self {
        Self {
            kind: ArchKind::Conv,
            grid,
            latent,
            width: 0,
            depth: 0,
            resnet: false,
            operator_init: OperatorInit::Identity,
        }
    }

    /// Length of a flattened `u` or `F`.
    pub fn input_len(&self) -> usize {
        match self.kind {
            ArchKind::Dense => self.grid,
            ArchKind::Conv => self.grid * self.grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.latent == 0 || self.grid == 0 {
            return bad("grid and latent size must be positive".into());
        }
        match self.kind {
            ArchKind::Dense => {
                if self.width == 0 {
                    return bad("dense width must be positive".into());
                }
                if self.resnet && self.width != self.grid {
                    return bad(format!(
                        "skip connections need width = grid ({} vs {})",
                        self.width, self.grid
                    ));
                }
            }
            ArchKind::Conv => {
                if self.grid % 16 != 0 {
                    return bad(format!("conv grid side {} is not a multiple of 16", self.grid));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
enum Encoder {
    Dense { hidden: Vec<Layer>, out: Layer },
    Conv { stages: Vec<Layer>, out: Layer },
}

#[derive(Debug, Clone)]
enum Decoder {
    Dense { first: Layer, hidden: Vec<Layer>, out: Layer },
    Conv { stub: Layer, stages: Vec<Layer>, last: Layer },
}

/// Parameters of `ψ_u`, `ψ_u⁻¹`, `φ_F`, `φ_F⁻¹` and the raw operator `W`.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Architecture,
    pub store: ParamStore,
    enc_u: Encoder,
    dec_u: Decoder,
    enc_f: Encoder,
    dec_f: Decoder,
    operator: ParamId,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let len = shape.iter().product();
        let data = init_variance_scaling(len, fan_in, self.rng.next_u64())?;
        Ok(self.store.add(name, Tensor::new(shape, data)?, true))
    }

    fn layer(&mut self, name: &str, shape: &[usize], fan_in: usize, bias_len: usize) -> Result<Layer> {
        let w = self.weight(format!("{name}.w"), shape, fan_in)?;
        let b = self.store.add(format!("{name}.b"), Tensor::zeros(&[bias_len]), false);
        Ok(Layer { w, b })
    }

    fn dense(&mut self, name: &str, n: usize, m: usize) -> Result<Layer> {
        self.layer(name, &[n, m], n, m)
    }

    fn encoder(&mut self, prefix: &str, a: &Architecture) -> Result<Encoder> {
        match a.kind {
            ArchKind::Dense => {
                let mut hidden = Vec::new();
                let mut n = a.grid;
                for i in 0..a.depth {
                    hidden.push(self.dense(&format!("{prefix}.hidden{i}"), n, a.width)?);
                    n = a.width;
                }
                let out = self.dense(&format!("{prefix}.out"), n, a.latent)?;
                Ok(Encoder::Dense { hidden, out })
            }
            ArchKind::Conv => {
                let mut stages = Vec::new();
                let mut c = 1;
                for (i, &co) in ENCODER_CHANNELS.iter().enumerate() {
                    stages.push(self.layer(&format!("{prefix}.conv{i}"), &[co, c, 4, 4], c * 16, co)?);
                    c = co;
                }
                let side = a.grid / 16;
                let flat = c * side * side;
                let out = self.dense(&format!("{prefix}.out"), flat, a.latent)?;
                Ok(Encoder::Conv { stages, out })
            }
        }
    }

    fn decoder(&mut self, prefix: &str, a: &Architecture) -> Result<Decoder> {
        match a.kind {
            ArchKind::Dense => {
                let first = self.dense(&format!("{prefix}.first"), a.latent, a.width)?;
                let hidden = (0..a.depth)
                    .map(|i| self.dense(&format!("{prefix}.hidden{i}"), a.width, a.width))
                    .collect::<Result<_>>()?;
                let out = self.dense(&format!("{prefix}.out"), a.width, a.grid)?;
                Ok(Decoder::Dense { first, hidden, out })
            }
            ArchKind::Conv => {
                let side = a.grid / 16;
                let c0 = DECODER_CHANNELS[0];
                let stub = self.dense(&format!("{prefix}.stub"), a.latent, c0 * side * side)?;
                let mut stages = Vec::new();
                let mut c = c0;
                for (i, &co) in DECODER_CHANNELS.iter().enumerate() {
                    // a stride-2 transposed conv touches 4 of the 16 taps per output pixel
                    stages.push(self.layer(&format!("{prefix}.tconv{i}"), &[c, co, 4, 4], c * 4, co)?);
                    c = co;
                }
                let last = self.layer(&format!("{prefix}.last"), &[c, 1, 4, 4], c * 16, 1)?;
                Ok(Decoder::Conv { stub, stages, last })
            }
        }
    }
}

impl Model {
    /// Fresh model with seeded initial weights and `W` set by the
    /// architecture's operator init.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let mut b = Builder { store: &mut store, rng: ChaCha8Rng::seed_from_u64(seed) };
        let enc_u = b.encoder("u.enc", &arch)?;
        let dec_u = b.decoder("u.dec", &arch)?;
        let enc_f = b.encoder("f.enc", &arch)?;
        let dec_f = b.decoder("f.dec", &arch)?;
        let op_seed = b.rng.next_u64();
        let w = arch.operator_init.matrix(arch.latent, op_seed)?;
        let operator = store.add("operator", w, false);
        Ok(Self { arch, store, enc_u, dec_u, enc_f, dec_f, operator })
    }

    pub fn operator_id(&self) -> ParamId {
        self.operator
    }

    pub fn latent(&self) -> usize {
        self.arch.latent
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len()
    }

    /// `L = (W + Wᵀ)/2`.
    pub fn operator(&self) -> Tensor {
        crate::autodiff::graph::symmetrized(self.store.value(self.operator))
    }

    /// `G = L⁻¹`.
    pub fn greens(&self) -> Result<Tensor> {
        let l = self.operator();
        let m = self.latent();
        let lu = crate::autodiff::DenseLu::factor(l.data(), m)?;
        Tensor::new(&[m, m], lu.inverse())
    }

    pub fn encode_u(&self, g: &mut Graph, u: Var) -> Result<Var> {
        encode(g, &self.enc_u, &self.arch, u)
    }

    pub fn decode_u(&self, g: &mut Graph, v: Var) -> Result<Var> {
        decode(g, &self.dec_u, &self.arch, v)
    }

    pub fn encode_f(&self, g: &mut Graph, f: Var) -> Result<Var> {
        encode(g, &self.enc_f, &self.arch, f)
    }

    pub fn decode_f(&self, g: &mut Graph, f: Var) -> Result<Var> {
        decode(g, &self.dec_f, &self.arch, f)
    }

    /// Symmetrized operator node.
    pub fn operator_node(&self, g: &mut Graph) -> Result<Var> {
        let w = g.param(self.operator);
        g.symmetrize(w)
    }

    /// Checks that a `[batch, len]` tensor fits the model input.
    pub fn check_batch(&self, t: &Tensor) -> Result<()> {
        let s = t.shape();
        if s.len() != 2 || s[1] != self.input_len() {
            return Err(Error::Shape(format!(
                "expected rows of length {}, got shape {s:?}",
                self.input_len()
            )));
        }
        Ok(())
    }

    fn run<F>(&self, x: &Tensor, f: F) -> Result<Tensor>
    where
        F: Fn(&Self, &mut Graph, Var) -> Result<Var>,
    {
        let mut g = Graph::new(&self.store);
        let xv = g.input(x.clone())?;
        let y = f(self, &mut g, xv)?;
        Ok(g.value(y).clone())
    }

    /// Batch `ψ_u(u)`.
    pub fn encode_u_batch(&self, u: &Tensor) -> Result<Tensor> {
        self.check_batch(u)?;
        self.run(u, |m, g, x| m.encode_u(g, x))
    }

    pub fn encode_f_batch(&self, f: &Tensor) -> Result<Tensor> {
        self.check_batch(f)?;
        self.run(f, |m, g, x| m.encode_f(g, x))
    }

    pub fn decode_u_batch(&self, v: &Tensor) -> Result<Tensor> {
        self.run(v, |m, g, x| m.decode_u(g, x))
    }

    pub fn decode_f_batch(&self, f: &Tensor) -> Result<Tensor> {
        self.run(f, |m, g, x| m.decode_f(g, x))
    }
}

fn dense(g: &mut Graph, l: Layer, x: Var, relu: bool) -> Result<Var> {
    let (w, b) = (g.param(l.w), g.param(l.b));
    g.dense(x, w, Some(b), relu)
}

fn encode(g: &mut Graph, enc: &Encoder, a: &Architecture, x: Var) -> Result<Var> {
    match enc {
        Encoder::Dense { hidden, out } => {
            let mut h = x;
            for l in hidden {
                h = dense(g, *l, h, true)?;
            }
            if a.resnet {
                h = g.add(h, x)?;
            }
            dense(g, *out, h, false)
        }
        Encoder::Conv { stages, out } => {
            let batch = g.shape(x)[0];
            let img = g.reshape(x, &[batch, 1, a.grid, a.grid])?;
            let mut h = img;
            let mut skip = img;
            for (i, l) in stages.iter().enumerate() {
                let (k, b) = (g.param(l.w), g.param(l.b));
                h = g.conv2d(h, k, Some(b), 1)?;
                h = g.relu(h)?;
                if a.resnet {
                    h = g.add_channels(h, skip)?;
                }
                h = g.avgpool2(h)?;
                if a.resnet && i + 1 < stages.len() {
                    skip = g.avgpool2(skip)?;
                }
            }
            let flat: usize = g.shape(h)[1..].iter().product();
            let h = g.reshape(h, &[batch, flat])?;
            dense(g, *out, h, false)
        }
    }
}

fn decode(g: &mut Graph, dec: &Decoder, a: &Architecture, v: Var) -> Result<Var> {
    match dec {
        Decoder::Dense { first, hidden, out } => {
            let d1 = dense(g, *first, v, false)?;
            let mut h = d1;
            for l in hidden {
                h = dense(g, *l, h, true)?;
            }
            if a.resnet {
                h = g.add(h, d1)?;
            }
            dense(g, *out, h, false)
        }
        Decoder::Conv { stub, stages, last } => {
            let batch = g.shape(v)[0];
            let side = a.grid / 16;
            let h = dense(g, *stub, v, false)?;
            let mut h = g.reshape(h, &[batch, DECODER_CHANNELS[0], side, side])?;
            for (i, l) in stages.iter().enumerate() {
                let (k, b) = (g.param(l.w), g.param(l.b));
                let mut y = g.tconv2d(h, k, Some(b), 2)?;
                if i + 1 < stages.len() {
                    y = g.relu(y)?;
                }
                if a.resnet {
                    let mean = g.channel_mean(h)?;
                    let up = g.upsample2(mean)?;
                    y = g.add_channels(y, up)?;
                }
                h = y;
            }
            let (k, b) = (g.param(last.w), g.param(last.b));
            let mut y = g.tconv2d(h, k, Some(b), 1)?;
            if a.resnet {
                y = g.add(y, h)?;
            }
            g.reshape(y, &[batch, a.grid * a.grid])
        }
    }
}
