//! The tiny decoder: a sigma net producing density plus hidden features,
//! followed by a color net, with a hand-written reverse pass.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{logistic, softplus, Real};

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("decoder input has {actual} entries, expected {expected}")]
    InputWidth { expected: usize, actual: usize },
    #[error("non-finite decoder input at index {index}; upstream state is corrupted")]
    NonFinite { index: usize },
}

/// Fully-connected layer `y = W x + b`. `W` is stored input-major: the
/// `out_dim` weights leaving input `i` are contiguous at `i * out_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // independent lanes so the loop vectorizes without reassociation
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    for (x, y) in ca.zip(cb) {
        let x: &[T; 8] = x.try_into().unwrap();
        let y: &[T; 8] = y.try_into().unwrap();
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

impl<T: Real> Dense<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    /// Scaled-uniform weights in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`; zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut d = Self::zeros(in_dim, out_dim);
        for w in d.weight.iter_mut() {
            *w = T::lit(rng.gen_range(-a..=a));
        }
        d
    }

    pub fn forward(&self, x: &[T], y: &mut [T]) {
        const B: usize = 16;
        let (n_in, n_out) = (self.in_dim, self.out_dim);
        let x = &x[..n_in];
        // blocks of B outputs accumulate in registers across all inputs;
        // zero inputs (dead ReLU units) contribute nothing and are skipped
        let mut start = 0;
        while start + B <= n_out {
            let mut acc: [T; B] = self.bias[start..start + B].try_into().unwrap();
            for (i, &xi) in x.iter().enumerate() {
                if xi == T::zero() {
                    continue;
                }
                let w: &[T; B] = self.weight[i * n_out + start..i * n_out + start + B].try_into().unwrap();
                for l in 0..B {
                    acc[l] += xi * w[l];
                }
            }
            y[start..start + B].copy_from_slice(&acc);
            start += B;
        }
        for o in start..n_out {
            let mut acc = self.bias[o];
            for (i, &xi) in x.iter().enumerate() {
                acc += xi * self.weight[i * n_out + o];
            }
            y[o] = acc;
        }
    }

    /// Accumulates parameter gradients into `grad`. When given, `dx` receives
    /// the gradient of the trailing `dx.len()` inputs.
    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Dense<T>, mut dx: Option<&mut [T]>) {
        let skip = dx.as_ref().map_or(self.in_dim, |d| self.in_dim - d.len());
        let dy = &dy[..self.out_dim];
        for (b, &g) in grad.bias.iter_mut().zip(dy) {
            *b += g;
        }
        let cols = self.weight.chunks_exact(self.out_dim);
        let gcols = grad.weight.chunks_exact_mut(self.out_dim);
        for (i, ((&xi, col), gcol)) in x[..self.in_dim].iter().zip(cols).zip(gcols).enumerate() {
            if xi != T::zero() {
                for (gw, &g) in gcol.iter_mut().zip(dy) {
                    *gw += xi * g;
                }
            }
            if i < skip {
                continue;
            }
            if let Some(dx) = dx.as_deref_mut() {
                dx[i - skip] = dot(col, dy);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    /// Width of every ReLU layer.
    pub width: usize,
    /// Hidden features passed from the sigma net to the color net.
    pub hidden_features: usize,
    /// Eight ReLU layers (seven in the sigma net, one in the color net)
    /// instead of two; set `width` accordingly (256 for the ablation).
    pub large: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            width: 64,
            hidden_features: 15,
            large: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldOutput<T> {
    pub sigma: T,
    pub rgb: [T; 3],
}

/// Activations recorded by [`MlpParams::forward`] for the reverse pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache<T> {
    input: Vec<T>,
    sigma_acts: Vec<Vec<T>>,
    head: Vec<T>,
    color_acts: Vec<Vec<T>>,
    raw_rgb: [T; 3],
    // backward scratch
    d_a: Vec<T>,
    d_b: Vec<T>,
    d_head: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub sigma_hidden: Vec<Dense<T>>,
    pub sigma_head: Dense<T>,
    pub color_hidden: Vec<Dense<T>>,
    pub color_head: Dense<T>,
}

impl<T: Real> MlpParams<T> {
    pub fn init<R: Rng + ?Sized>(input_dim: usize, cfg: &MlpConfig, rng: &mut R) -> Self {
        let w = cfg.width;
        let h = cfg.hidden_features;
        let sigma_layers = if cfg.large { 7 } else { 1 };
        let mut sigma_hidden = Vec::with_capacity(sigma_layers);
        sigma_hidden.push(Dense::init(input_dim, w, rng));
        for _ in 1..sigma_layers {
            sigma_hidden.push(Dense::init(w, w, rng));
        }
        let sigma_head = Dense::init(w, 1 + h, rng);
        let color_hidden = vec![Dense::init(h, w, rng)];
        let color_head = Dense::init(w, 3, rng);
        Self {
            sigma_hidden,
            sigma_head,
            color_hidden,
            color_head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sigma_hidden[0].in_dim
    }

    pub fn hidden_features(&self) -> usize {
        self.sigma_head.out_dim - 1
    }

    /// Layers in serialization order.
    pub fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.sigma_hidden
            .iter()
            .chain(std::iter::once(&self.sigma_head))
            .chain(self.color_hidden.iter())
            .chain(std::iter::once(&self.color_head))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.sigma_hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.sigma_head))
            .chain(self.color_hidden.iter_mut())
            .chain(std::iter::once(&mut self.color_head))
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(T::zero());
        z
    }

    pub fn fill(&mut self, v: T) {
        for l in self.layers_mut() {
            l.weight.iter_mut().for_each(|x| *x = v);
            l.bias.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += *y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, input: &[T]) -> Result<(), MlpError> {
        if input.len() != self.input_dim() {
            return Err(MlpError::InputWidth {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        if let Some(index) = input.iter().position(|v| !v.is_finite()) {
            return Err(MlpError::NonFinite { index });
        }
        Ok(())
    }

    fn run_sigma_net(&self, cache: &mut MlpCache<T>) {
        cache.sigma_acts.resize(self.sigma_hidden.len(), Vec::new());
        for (l, layer) in self.sigma_hidden.iter().enumerate() {
            let (done, rest) = cache.sigma_acts.split_at_mut(l);
            let x: &[T] = if l == 0 { &cache.input } else { &done[l - 1] };
            let y = &mut rest[0];
            y.resize(layer.out_dim, T::zero());
            layer.forward(x, y);
            y.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        cache.head.resize(self.sigma_head.out_dim, T::zero());
        self.sigma_head
            .forward(cache.sigma_acts.last().unwrap(), &mut cache.head);
    }

    /// Density and color for one decoder input; `cache` keeps the activations.
    pub fn forward(&self, input: &[T], cache: &mut MlpCache<T>) -> Result<FieldOutput<T>, MlpError> {
        self.check_input(input)?;
        cache.input.clear();
        cache.input.extend_from_slice(input);
        self.run_sigma_net(cache);

        cache.color_acts.resize(self.color_hidden.len(), Vec::new());
        for (l, layer) in self.color_hidden.iter().enumerate() {
            let (done, rest) = cache.color_acts.split_at_mut(l);
            let x: &[T] = if l == 0 { &cache.head[1..] } else { &done[l - 1] };
            let y = &mut rest[0];
            y.resize(layer.out_dim, T::zero());
            layer.forward(x, y);
            y.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        let mut raw = [T::zero(); 3];
        self.color_head
            .forward(cache.color_acts.last().unwrap(), &mut raw);
        cache.raw_rgb = raw;
        Ok(FieldOutput {
            sigma: softplus(cache.head[0]),
            rgb: raw.map(logistic),
        })
    }

    /// Density only; skips the color net.
    pub fn forward_sigma(&self, input: &[T], cache: &mut MlpCache<T>) -> Result<T, MlpError> {
        self.check_input(input)?;
        cache.input.clear();
        cache.input.extend_from_slice(input);
        self.run_sigma_net(cache);
        Ok(softplus(cache.head[0]))
    }

    /// Reverse pass for the most recent [`forward`](Self::forward) recorded in
    /// `cache`. Parameter gradients are added into `grads`; the gradient with
    /// respect to the trailing `d_input.len()` inputs is written into `d_input`.
    pub fn backward(
        &self,
        cache: &mut MlpCache<T>,
        d_sigma: T,
        d_rgb: [T; 3],
        grads: &mut MlpParams<T>,
        d_input: &mut [T],
    ) {
        let MlpCache {
            input,
            sigma_acts,
            head,
            color_acts,
            raw_rgb,
            d_a,
            d_b,
            d_head,
        } = cache;

        // color head
        let mut d_raw = [T::zero(); 3];
        for c in 0..3 {
            let s = logistic(raw_rgb[c]);
            d_raw[c] = d_rgb[c] * s * (T::one() - s);
        }
        let nc = self.color_hidden.len();
        d_a.resize(self.color_head.in_dim, T::zero());
        self.color_head.backward(
            &color_acts[nc - 1],
            &d_raw,
            &mut grads.color_head,
            Some(d_a),
        );
        // color hidden layers, d_a holds d(post-ReLU activation)
        d_head.resize(self.sigma_head.out_dim, T::zero());
        for l in (0..nc).rev() {
            for (g, &a) in d_a.iter_mut().zip(&color_acts[l]) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
            let layer = &self.color_hidden[l];
            if l == 0 {
                layer.backward(
                    &head[1..],
                    d_a,
                    &mut grads.color_hidden[l],
                    Some(&mut d_head[1..]),
                );
            } else {
                d_b.resize(layer.in_dim, T::zero());
                layer.backward(&color_acts[l - 1], d_a, &mut grads.color_hidden[l], Some(d_b));
                std::mem::swap(d_a, d_b);
            }
        }
        d_head[0] = d_sigma * logistic(head[0]);

        let ns = self.sigma_hidden.len();
        d_a.resize(self.sigma_head.in_dim, T::zero());
        self.sigma_head
            .backward(&sigma_acts[ns - 1], d_head, &mut grads.sigma_head, Some(d_a));
        for l in (0..ns).rev() {
            for (g, &a) in d_a.iter_mut().zip(&sigma_acts[l]) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
            let layer = &self.sigma_hidden[l];
            if l == 0 {
                layer.backward(input, d_a, &mut grads.sigma_hidden[0], Some(d_input));
            } else {
                d_b.resize(layer.in_dim, T::zero());
                layer.backward(&sigma_acts[l - 1], d_a, &mut grads.sigma_hidden[l], Some(d_b));
                std::mem::swap(d_a, d_b);
            }
        }
    }
}
