//! Fully-connected encoder/decoder with reverse-mode gradients computed
//! in-module. The encoder ends in a bounded activation so latent codes stay
//! inside the unit hypercube with margin delta.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::AdamState;
use crate::rng::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BOUND_MARGIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    /// Scaled logistic mapping reals into [delta, 1 - delta].
    Bounded,
}

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "none" => Ok(Activation::Identity),
            "bounded" => Ok(Activation::Bounded),
            other => Err(Error::InvalidArgument(format!("unknown activation {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
            Activation::Bounded => "bounded",
        }
    }

    fn apply(&self, x: f64, delta: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
            Activation::Bounded => {
                let s = 1.0 / (1.0 + (-x).exp());
                delta + (1.0 - 2.0 * delta) * s
            }
        }
    }

    // subgradient at the ReLU kink is taken as 0
    fn derivative(&self, x: f64, delta: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
            Activation::Bounded => {
                let s = 1.0 / (1.0 + (-x).exp());
                (1.0 - 2.0 * delta) * s * (1.0 - s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_width: usize, out_width: usize, activation: Activation) -> Self {
        LayerSpec {
            in_width,
            out_width,
            activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// in_width x out_width
    pub w: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    pub bound_margin: f64,
}

/// Per-layer inputs and pre-activations retained by `forward` for `backward`.
pub struct Tape {
    inputs: Vec<Matrix>,
    preacts: Vec<Matrix>,
    n_enc: usize,
    batch: usize,
}

#[derive(Clone, Debug)]
pub struct NetGradients {
    pub encoder: Vec<(Matrix, Vec<f64>)>,
    pub decoder: Vec<(Matrix, Vec<f64>)>,
}

fn check_chain(specs: &[LayerSpec], what: &str) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Empty(format!("{what} has no layers")));
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].out_width != pair[1].in_width {
            return Err(Error::LayerChain {
                index: i,
                out: pair[0].out_width,
                expected: pair[1].in_width,
            });
        }
    }
    Ok(())
}

/// Builds a network with uniformly drawn weights and zero biases,
/// deterministic under the seed. The default range is width-scaled,
/// min(1, sqrt(6/(in+out))); `raw_init` uses the raw [-1, 1] range.
pub fn init_params(
    specs_enc: &[LayerSpec],
    specs_dec: &[LayerSpec],
    seed: u64,
    raw_init: bool,
) -> Result<NetworkParams> {
    check_chain(specs_enc, "encoder")?;
    check_chain(specs_dec, "decoder")?;
    let d_latent = specs_enc.last().unwrap().out_width;
    if specs_dec[0].in_width != d_latent {
        return Err(Error::LayerChain {
            index: specs_enc.len() - 1,
            out: d_latent,
            expected: specs_dec[0].in_width,
        });
    }
    let mut rng = stream_rng(seed, "net-init");
    let mut build = |specs: &[LayerSpec]| -> Vec<Layer> {
        specs
            .iter()
            .map(|s| {
                let scale = if raw_init {
                    1.0
                } else {
                    (6.0 / (s.in_width + s.out_width) as f64).sqrt().min(1.0)
                };
                let mut w = Matrix::zeros(s.in_width, s.out_width);
                for v in &mut w.data {
                    *v = rng.gen_range(-scale..scale);
                }
                Layer {
                    w,
                    b: vec![0.0; s.out_width],
                    activation: s.activation,
                }
            })
            .collect()
    };
    Ok(NetworkParams {
        encoder: build(specs_enc),
        decoder: build(specs_dec),
        bound_margin: DEFAULT_BOUND_MARGIN,
    })
}

/// Identity encoder/decoder of width n: h(x) = x, g(z) = z. Used when the
/// data already lives in the hypercube and only the density model trains.
pub fn identity_params(n: usize) -> NetworkParams {
    let layer = Layer {
        w: Matrix::identity(n),
        b: vec![0.0; n],
        activation: Activation::Identity,
    };
    NetworkParams {
        encoder: vec![layer.clone()],
        decoder: vec![layer],
        bound_margin: DEFAULT_BOUND_MARGIN,
    }
}

impl NetworkParams {
    pub fn input_width(&self) -> usize {
        self.encoder[0].w.rows
    }

    pub fn latent_width(&self) -> usize {
        self.encoder.last().unwrap().w.cols
    }

    /// Encoder then decoder; the tape retains everything backward needs.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix, Tape)> {
        if x.cols != self.input_width() {
            return Err(Error::DimMismatch(format!(
                "input has {} columns, encoder expects {}",
                x.cols,
                self.input_width()
            )));
        }
        let mut inputs = Vec::with_capacity(self.encoder.len() + self.decoder.len());
        let mut preacts = Vec::with_capacity(inputs.capacity());
        let mut cur = x.clone();
        let mut z = Matrix::zeros(0, 0);
        for layer in self.encoder.iter().chain(&self.decoder) {
            let mut pre = cur.matmul(&layer.w);
            pre.add_row_vector(&layer.b);
            let mut out = pre.clone();
            for v in &mut out.data {
                *v = layer.activation.apply(*v, self.bound_margin);
            }
            inputs.push(cur);
            preacts.push(pre);
            cur = out;
            if inputs.len() == self.encoder.len() {
                z = cur.clone();
            }
        }
        let tape = Tape {
            inputs,
            preacts,
            n_enc: self.encoder.len(),
            batch: x.rows,
        };
        Ok((z, cur, tape))
    }

    /// Reverse-mode pass. `d_xhat` is the loss sensitivity at the decoder
    /// output; `d_z_inject` is added at the bottleneck (the density term's
    /// gradient w.r.t. z). Returns parameter gradients and dL/dX.
    pub fn backward(
        &self,
        tape: &Tape,
        d_xhat: &Matrix,
        d_z_inject: &Matrix,
    ) -> Result<(NetGradients, Matrix)> {
        let n_layers = self.encoder.len() + self.decoder.len();
        if tape.inputs.len() != n_layers {
            return Err(Error::DimMismatch("tape does not match network".into()));
        }
        if d_xhat.rows != tape.batch || d_z_inject.rows != tape.batch {
            return Err(Error::DimMismatch("sensitivity batch size mismatch".into()));
        }
        let all_layers: Vec<&Layer> = self.encoder.iter().chain(&self.decoder).collect();
        let mut grads: Vec<(Matrix, Vec<f64>)> = Vec::with_capacity(n_layers);
        let mut d_out = d_xhat.clone();
        for (li, layer) in all_layers.iter().enumerate().rev() {
            if li == tape.n_enc - 1 {
                // bottleneck: add the injected latent sensitivity
                for (a, &b) in d_out.data.iter_mut().zip(&d_z_inject.data) {
                    *a += b;
                }
            }
            let pre = &tape.preacts[li];
            let mut delta = d_out;
            for (dv, &p) in delta.data.iter_mut().zip(&pre.data) {
                *dv *= layer.activation.derivative(p, self.bound_margin);
            }
            let input = &tape.inputs[li];
            let dw = input.t_matmul(&delta);
            let mut db = vec![0.0; layer.b.len()];
            for r in 0..delta.rows {
                for (acc, &v) in db.iter_mut().zip(delta.row(r)) {
                    *acc += v;
                }
            }
            d_out = delta.matmul_t(&layer.w);
            grads.push((dw, db));
        }
        grads.reverse();
        let decoder = grads.split_off(tape.n_enc);
        Ok((
            NetGradients {
                encoder: grads,
                decoder,
            },
            d_out,
        ))
    }

    pub fn param_count(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(|l| l.w.data.len() + l.b.len())
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.encoder.iter().chain(&self.decoder) {
            out.extend_from_slice(&l.w.data);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            let wl = l.w.data.len();
            l.w.data.copy_from_slice(&flat[off..off + wl]);
            off += wl;
            let bl = l.b.len();
            l.b.copy_from_slice(&flat[off..off + bl]);
            off += bl;
        }
        assert_eq!(off, flat.len());
    }

    pub fn is_finite(&self) -> bool {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .all(|l| l.w.is_finite() && l.b.iter().all(|x| x.is_finite()))
    }
}

impl NetGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.encoder.iter().chain(&self.decoder) {
            out.extend_from_slice(&w.data);
            out.extend_from_slice(b);
        }
        out
    }
}

/// (1/M) sum_m ||x_m - xhat_m||^2
pub fn reconstruction_loss(x: &Matrix, xhat: &Matrix) -> Result<f64> {
    if x.rows != xhat.rows || x.cols != xhat.cols {
        return Err(Error::DimMismatch("reconstruction shapes differ".into()));
    }
    if x.rows == 0 {
        return Err(Error::Empty("reconstruction on empty batch".into()));
    }
    let mut acc = 0.0;
    for (&a, &b) in x.data.iter().zip(&xhat.data) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc / x.rows as f64)
}

/// dL/dXhat for `reconstruction_loss`.
pub fn reconstruction_grad(x: &Matrix, xhat: &Matrix) -> Matrix {
    let m = x.rows as f64;
    let mut g = Matrix::zeros(x.rows, x.cols);
    for i in 0..g.data.len() {
        g.data[i] = 2.0 * (xhat.data[i] - x.data[i]) / m;
    }
    g
}

/// Minimizes reconstruction loss alone with Adam mini-batch SGD. Batch
/// indices are reshuffled once per epoch from the run seed.
pub fn pretrain(
    mut params: NetworkParams,
    x_train: &Matrix,
    epochs: usize,
    lr: f64,
    batch: usize,
    seed: u64,
) -> Result<NetworkParams> {
    if x_train.rows == 0 {
        return Err(Error::Empty("pretrain on empty training set".into()));
    }
    if epochs == 0 {
        return Ok(params);
    }
    let batch = batch.max(1).min(x_train.rows);
    let mut adam = AdamState::new(params.param_count());
    let mut rng = stream_rng(seed, "batch");
    let mut order: Vec<usize> = (0..x_train.rows).collect();
    for _ in 0..epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(batch) {
            let xb = x_train.select_rows(chunk);
            let (_, xhat, tape) = params.forward(&xb)?;
            let d_xhat = reconstruction_grad(&xb, &xhat);
            let d_z = Matrix::zeros(xb.rows, params.latent_width());
            let (grads, _) = params.backward(&tape, &d_xhat, &d_z)?;
            let mut flat = params.flatten();
            adam.step(&mut flat, &grads.flatten(), lr);
            params.assign_from_flat(&flat);
        }
    }
    Ok(params)
}

pub(crate) fn shuffle<R: Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Architecture presets named after the reference configurations.
pub fn preset(name: &str, bound_latent: bool) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>)> {
    use Activation::*;
    let bottleneck = if bound_latent { Bounded } else { Identity };
    let spec = |widths: &[usize], act: Activation| -> (Vec<LayerSpec>, Vec<LayerSpec>) {
        // widths = encoder widths including input and latent; decoder mirrors
        let mut enc = Vec::new();
        for w in widths.windows(2) {
            enc.push(LayerSpec::new(w[0], w[1], act));
        }
        enc.last_mut().unwrap().activation = bottleneck;
        let mut dec = Vec::new();
        let rev: Vec<usize> = widths.iter().rev().copied().collect();
        for w in rev.windows(2) {
            dec.push(LayerSpec::new(w[0], w[1], act));
        }
        dec.last_mut().unwrap().activation = Identity;
        (enc, dec)
    };
    match name {
        "toy3d" => Ok(spec(&[3, 128, 64, 32, 2], Relu)),
        "mnist" => Ok(spec(&[784, 128, 64, 32], Relu)),
        "fmnist" => Ok(spec(&[784, 256, 128, 64, 32, 16], Relu)),
        "thyroid" => Ok(spec(&[6, 12, 4, 2], Tanh)),
        "kddcup" | "kddcup_rev" => Ok(spec(&[120, 60, 30, 20, 10], Tanh)),
        "arrhythmia" => Ok(spec(&[274, 64, 32], Tanh)),
        other => Err(Error::InvalidArgument(format!("unknown preset {other}"))),
    }
}
