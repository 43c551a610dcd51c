//! Small fully-connected networks in `f64` with exact reverse-mode gradients,
//! plus SGD, RMSProp and Adam.
//!
//! Forward and backward passes skip zero inputs, which keeps the first layer
//! cheap on one-hot observations.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
    /// Only valid on the last layer.
    Softmax,
}

impl Activation {
    fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
            Activation::Softmax => 2,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            2 => Some(Activation::Softmax),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    /// Input size followed by each layer's output size.
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    /// Weights start uniform in `±init_scale / sqrt(fan_in)`; biases start at 0.
    pub init_scale: f64,
}

impl NetSpec {
    /// `input → hidden… → output` with rectifiers on hidden layers.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, head: Activation) -> Self {
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(output);
        let mut activations = vec![Activation::Relu; hidden.len()];
        activations.push(head);
        Self {
            layer_sizes,
            activations,
            init_scale: 1.0,
        }
    }

    pub fn with_init_scale(mut self, s: f64) -> Self {
        self.init_scale = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let last = self.activations.len() - 1;
        if self.activations[..last].contains(&Activation::Softmax) {
            return Err(Error::Config("softmax is only allowed as the final activation".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }
}

/// Parameter containers that can be walked as a flat list of tensors.
///
/// Optimizers and gradient utilities only rely on this view, so composite
/// networks (dueling heads, policy-value nets) reuse them unchanged.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
    fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.l2_norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }
}

/// Copies every value of `src` into `dst`; shapes must agree.
pub fn copy_params<P: ParamTensors>(dst: &mut P, src: &P) {
    for (d, s) in dst.tensors_mut().into_iter().zip(src.tensors()) {
        d.copy_from_slice(s);
    }
}

/// `dst += s · src`.
pub fn add_scaled<P: ParamTensors>(dst: &mut P, src: &P, s: f64) {
    for (d, x) in dst.tensors_mut().into_iter().zip(src.tensors()) {
        for (a, b) in d.iter_mut().zip(x) {
            *a += s * b;
        }
    }
}

/// Multi-layer perceptron. Also used as its own gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

pub type Grads = Mlp;

/// Values recorded by [`Mlp::forward`] for reuse in [`Mlp::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(|v| v.as_slice()).unwrap_or(&self.input)
    }
}

/// Indices of non-zero entries when the vector is sparse enough to benefit.
fn sparse_support(x: &[f64]) -> Option<Vec<usize>> {
    let nz = x.iter().filter(|v| **v != 0.0).count();
    (nz * 3 < x.len()).then(|| (0..x.len()).filter(|&i| x[i] != 0.0).collect())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(spec: &NetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .zip(&spec.activations)
            .map(|(io, &act)| {
                let (inputs, outputs) = (io[0], io[1]);
                let bound = spec.init_scale / (inputs as f64).sqrt();
                let mut layer = Layer::zeros(inputs, outputs, act);
                if bound > 0.0 {
                    for w in &mut layer.weights {
                        *w = rng.random_range(-bound..bound);
                    }
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::shape("layer chain", w[0].outputs, w[1].inputs));
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::shape("layer tensors", l.inputs * l.outputs, l.weights.len()));
            }
        }
        let last = layers.len() - 1;
        if layers[..last].iter().any(|l| l.activation == Activation::Softmax) {
            return Err(Error::Config("softmax is only allowed as the final activation".into()));
        }
        Ok(Self { layers })
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs, l.activation))
                .collect(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, input: &[f64]) -> Result<Activations> {
        if input.len() != self.input_len() {
            return Err(Error::shape("network input", self.input_len(), input.len()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().map(|v| v.as_slice()).unwrap_or(input);
            let mut z = layer.bias.clone();
            match sparse_support(x) {
                Some(nz) => {
                    for (o, zo) in z.iter_mut().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        *zo += nz.iter().map(|&i| row[i] * x[i]).sum::<f64>();
                    }
                }
                None => {
                    for (o, zo) in z.iter_mut().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        *zo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                    }
                }
            }
            let a = match layer.activation {
                Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => z.clone(),
                Activation::Softmax => softmax(&z),
            };
            pre.push(z);
            post.push(a);
        }
        Ok(Activations {
            input: input.to_vec(),
            pre,
            post,
        })
    }

    /// Network output for `input`, without keeping intermediate values.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut acts = self.forward(input)?;
        Ok(acts.post.pop().unwrap_or_default())
    }

    /// Gradients of a scalar loss given `output_grad = dL/d(output)`.
    /// Returns the parameter gradients and `dL/d(input)`.
    pub fn backward(&self, acts: &Activations, output_grad: &[f64]) -> Result<(Grads, Vec<f64>)> {
        let mut grads = self.zeros_like();
        let dx = self.backward_into(acts, output_grad, &mut grads, true)?;
        Ok((grads, dx.unwrap_or_default()))
    }

    /// Accumulates parameter gradients into `grads`. The input gradient is
    /// only computed when `want_input_grad` is set.
    pub fn backward_into(
        &self,
        acts: &Activations,
        output_grad: &[f64],
        grads: &mut Grads,
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        if output_grad.len() != self.output_len() {
            return Err(Error::shape("output gradient", self.output_len(), output_grad.len()));
        }
        if acts.post.len() != self.layers.len() || acts.input.len() != self.input_len() {
            return Err(Error::shape("activations", self.layers.len(), acts.post.len()));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape("gradient layers", self.layers.len(), grads.layers.len()));
        }

        let mut delta = output_grad.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let z = &acts.pre[li];
            let a = &acts.post[li];
            let dz: Vec<f64> = match layer.activation {
                Activation::Relu => delta
                    .iter()
                    .zip(z)
                    .map(|(d, &zv)| if zv > 0.0 { *d } else { 0.0 })
                    .collect(),
                Activation::Identity => delta,
                Activation::Softmax => {
                    let dot: f64 = a.iter().zip(&delta).map(|(s, g)| s * g).sum();
                    a.iter().zip(&delta).map(|(s, g)| s * (g - dot)).collect()
                }
            };
            let x = if li == 0 { &acts.input } else { &acts.post[li - 1] };
            let g = &mut grads.layers[li];
            let nz = sparse_support(x);
            for (o, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                match &nz {
                    Some(idx) => idx.iter().for_each(|&i| row[i] += d * x[i]),
                    None => row.iter_mut().zip(x).for_each(|(r, v)| *r += d * v),
                }
            }
            if li == 0 && !want_input_grad {
                return Ok(None);
            }
            let mut dx = vec![0.0; layer.inputs];
            for (o, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                dx.iter_mut().zip(row).for_each(|(acc, w)| *acc += w * d);
            }
            delta = dx;
        }
        Ok(Some(delta))
    }

    const MAGIC: &'static [u8; 4] = b"DRLK";
    const VERSION: u32 = 1;

    /// Flat little-endian encoding: a 16-byte header (`DRLK`, version,
    /// layer count, reserved 0), then per layer `inputs`, `outputs`,
    /// activation code as `u32` followed by the weights and biases as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.param_count() + 12 * self.layers.len());
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for l in &self.layers {
            for v in [l.inputs as u32, l.outputs as u32, l.activation.code()] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Format("unexpected end of data".into()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != Self::MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n_layers = u32_at(take(4)?) as usize;
        take(4)?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let inputs = u32_at(take(4)?) as usize;
            let outputs = u32_at(take(4)?) as usize;
            let activation = Activation::from_code(u32_at(take(4)?))
                .ok_or_else(|| Error::Format("unknown activation code".into()))?;
            let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
                let raw = take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
                Ok(raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect())
            };
            let weights = read_f64s(inputs * outputs)?;
            let bias = read_f64s(outputs)?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
                activation,
            });
        }
        if !cur.is_empty() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Mlp::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())
    }

    pub fn load(path: &Path) -> std::io::Result<Result<Self>> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Ok(Self::from_bytes(&buf))
    }
}

impl ParamTensors for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

pub const RMSPROP_EPS: f64 = 1e-6;
pub const RMSPROP_DECAY: f64 = 0.99;
pub const ADAM_LR: f64 = 1e-3;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    /// `g² ← ρ g² + (1−ρ) g²`, `θ ← θ − lr · g / sqrt(g² + ε)`.
    RmsProp { lr: f64, decay: f64, eps: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn rmsprop(lr: f64) -> Self {
        OptimizerKind::RmsProp {
            lr,
            decay: RMSPROP_DECAY,
            eps: RMSPROP_EPS,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// Optimizer plus its per-parameter accumulators, created on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub kind: OptimizerKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    pub t: u64,
}

impl OptState {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            first: Vec::new(),
            second: Vec::new(),
            t: 0,
        }
    }

    fn ensure_shape(acc: &mut Vec<Vec<f64>>, shape: &[usize]) -> Result<()> {
        if acc.is_empty() {
            *acc = shape.iter().map(|&n| vec![0.0; n]).collect();
        }
        if acc.len() != shape.len() {
            return Err(Error::shape("optimizer tensors", acc.len(), shape.len()));
        }
        for (a, &n) in acc.iter().zip(shape) {
            if a.len() != n {
                return Err(Error::shape("optimizer accumulator", a.len(), n));
            }
        }
        Ok(())
    }

    pub fn step<P: ParamTensors + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.tensors();
        let shape: Vec<usize> = g.iter().map(|t| t.len()).collect();
        let mut p = params.tensors_mut();
        if p.len() != g.len() {
            return Err(Error::shape("parameter tensors", p.len(), g.len()));
        }
        for (pt, gt) in p.iter().zip(&g) {
            if pt.len() != gt.len() {
                return Err(Error::shape("parameter tensor", pt.len(), gt.len()));
            }
        }
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (pt, gt) in p.iter_mut().zip(&g) {
                    pt.iter_mut().zip(gt.iter()).for_each(|(x, d)| *x -= lr * d);
                }
            }
            OptimizerKind::RmsProp { lr, decay, eps } => {
                Self::ensure_shape(&mut self.second, &shape)?;
                for ((pt, gt), st) in p.iter_mut().zip(&g).zip(&mut self.second) {
                    for ((x, &d), s) in pt.iter_mut().zip(gt.iter()).zip(st.iter_mut()) {
                        *s = decay * *s + (1.0 - decay) * d * d;
                        *x -= lr * d / (*s + eps).sqrt();
                    }
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                Self::ensure_shape(&mut self.first, &shape)?;
                Self::ensure_shape(&mut self.second, &shape)?;
                let t = (self.t + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((pt, gt), mt), vt) in p.iter_mut().zip(&g).zip(&mut self.first).zip(&mut self.second) {
                    for (((x, &d), m), v) in pt.iter_mut().zip(gt.iter()).zip(mt.iter_mut()).zip(vt.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        let mhat = *m / c1;
                        let vhat = *v / c2;
                        *x -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        self.t += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(inputs: usize, outputs: usize, w: Vec<f64>, b: Vec<f64>, act: Activation) -> Mlp {
        Mlp::from_layers(vec![Layer {
            inputs,
            outputs,
            weights: w,
            bias: b,
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input() {
        let net = single(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], Activation::Identity);
        assert_eq!(net.predict(&[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
    }

    #[test]
    fn relu_and_softmax_heads() {
        let relu = single(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], Activation::Relu);
        assert_eq!(relu.predict(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        let sm = single(2, 2, vec![0.0; 4], vec![0.0; 2], Activation::Softmax);
        assert_eq!(sm.predict(&[5.0, 1.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn forward_rejects_wrong_input_len() {
        let net = single(2, 1, vec![1.0, 1.0], vec![0.0], Activation::Identity);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_only_last() {
        let spec = NetSpec {
            layer_sizes: vec![2, 2, 2],
            activations: vec![Activation::Softmax, Activation::Identity],
            init_scale: 1.0,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn scalar_squared_loss_gradient() {
        // L = (w·x − t)², w=1, x=2, t=0 ⇒ dL/dw = 2(wx−t)x = 8
        let net = single(1, 1, vec![1.0], vec![0.0], Activation::Identity);
        let acts = net.forward(&[2.0]).unwrap();
        let y = acts.output()[0];
        let (g, dx) = net.backward(&acts, &[2.0 * (y - 0.0)]).unwrap();
        assert_eq!(g.layers[0].weights[0], 8.0);
        assert_eq!(dx, vec![4.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&NetSpec::mlp(4, &[5], 3, Activation::Softmax), &mut rng).unwrap();
        let acts = net.forward(&[0.1, -0.3, 0.7, 1.0]).unwrap();
        let (g, dx) = net.backward(&acts, &[0.0; 3]).unwrap();
        assert_eq!(g.l2_norm(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_seeded() {
        let spec = NetSpec::mlp(6, &[8, 4], 2, Activation::Identity);
        let a = Mlp::new(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = Mlp::new(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / 6f64.sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(a.layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&NetSpec::mlp(3, &[4], 2, Activation::Identity), &mut rng).unwrap();
        let zero = net.zeros_like();
        for kind in [
            OptimizerKind::Sgd { lr: 0.1 },
            OptimizerKind::rmsprop(0.01),
            OptimizerKind::adam(ADAM_LR),
        ] {
            let mut p = net.clone();
            let mut opt = OptState::new(kind);
            opt.step(&mut p, &zero).unwrap();
            assert_eq!(p, net, "{kind:?}");
        }
    }

    #[test]
    fn sgd_step() {
        let mut p = single(1, 1, vec![1.0], vec![0.5], Activation::Identity);
        let g = single(1, 1, vec![2.0], vec![-1.0], Activation::Identity);
        OptState::new(OptimizerKind::Sgd { lr: 0.1 }).step(&mut p, &g).unwrap();
        assert!((p.layers[0].weights[0] - 0.8).abs() < 1e-15);
        assert!((p.layers[0].bias[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_first_step_matches_hand_evaluation() {
        let (lr, rho, g) = (0.01, 0.99, 0.3);
        let expected = -lr * g / ((1.0 - rho) * g * g + 1e-6f64).sqrt();
        let mut p = single(1, 1, vec![0.0], vec![0.0], Activation::Identity);
        let grad = single(1, 1, vec![g], vec![0.0], Activation::Identity);
        let mut opt = OptState::new(OptimizerKind::RmsProp {
            lr,
            decay: rho,
            eps: RMSPROP_EPS,
        });
        opt.step(&mut p, &grad).unwrap();
        assert!((p.layers[0].weights[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = single(1, 1, vec![0.0], vec![0.0], Activation::Identity);
        let grad = single(1, 1, vec![0.37], vec![-4.0], Activation::Identity);
        let mut opt = OptState::new(OptimizerKind::adam(1e-3));
        opt.step(&mut p, &grad).unwrap();
        assert_eq!(opt.t, 1);
        assert!((p.layers[0].weights[0] + 1e-3).abs() < 1e-9);
        assert!((p.layers[0].bias[0] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn optimizer_rejects_mismatched_shapes() {
        let mut p = single(1, 1, vec![0.0], vec![0.0], Activation::Identity);
        let g = single(2, 1, vec![0.0; 2], vec![0.0], Activation::Identity);
        assert!(OptState::new(OptimizerKind::Sgd { lr: 0.1 }).step(&mut p, &g).is_err());
    }

    #[test]
    fn bytes_round_trip_and_header() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&NetSpec::mlp(5, &[4, 3], 2, Activation::Softmax), &mut rng).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..4], b"DRLK");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(Mlp::from_bytes(&bytes).unwrap(), net);
        assert!(Mlp::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Mlp::from_bytes(&bad).is_err());
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&NetSpec::mlp(30, &[7], 3, Activation::Identity), &mut rng).unwrap();
        let mut x = vec![0.0; 30];
        x[4] = 1.0;
        x[17] = -2.0;
        let sparse = net.forward(&x).unwrap();
        let mut dense_out = net.layers[0].bias.clone();
        for (o, v) in dense_out.iter_mut().enumerate() {
            *v += (0..30).map(|i| net.layers[0].weights[o * 30 + i] * x[i]).sum::<f64>();
        }
        for (a, b) in sparse.pre[0].iter().zip(&dense_out) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
