use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Linear,
    /// One ReLU hidden layer.
    Mlp {
        hidden: usize,
    },
}

/// Weights of a softmax classifier, flattened into one vector.
///
/// Layout: linear `W (c×d), b (c)`; MLP `W1 (h×d), b1 (h), W2 (c×h), b2 (c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub arch: Architecture,
    pub d: usize,
    pub c: usize,
    pub values: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

pub fn param_count(arch: Architecture, d: usize, c: usize) -> usize {
    match arch {
        Architecture::Linear => c * d + c,
        Architecture::Mlp { hidden } => hidden * d + hidden + c * hidden + c,
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n_in = x.len();
    out.clear();
    out.extend(
        b.iter()
            .zip(w.chunks(n_in))
            .map(|(bi, row)| bi + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()),
    );
}

impl ClassifierParams {
    pub fn zeros(arch: Architecture, d: usize, c: usize) -> Result<Self> {
        if d == 0 || c < 2 {
            return Err(Error::invalid(format!("bad classifier shape d={d}, C={c}")));
        }
        if let Architecture::Mlp { hidden: 0 } = arch {
            return Err(Error::invalid("hidden width must be >= 1"));
        }
        Ok(ClassifierParams {
            arch,
            d,
            c,
            values: vec![0.0; param_count(arch, d, c)],
        })
    }

    /// Every layer's weights and biases drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init(arch: Architecture, d: usize, c: usize, rng: &mut StreamRng) -> Result<Self> {
        let mut p = Self::zeros(arch, d, c)?;
        let layers: Vec<(usize, usize)> = match arch {
            Architecture::Linear => vec![(c * d + c, d)],
            Architecture::Mlp { hidden } => {
                vec![(hidden * d + hidden, d), (c * hidden + c, hidden)]
            }
        };
        let mut offset = 0;
        for (len, fan_in) in layers {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p.values[offset..offset + len] {
                *v = rng.random_range(-bound..bound);
            }
            offset += len;
        }
        Ok(p)
    }

    pub fn n_params(&self) -> usize {
        self.values.len()
    }

    pub fn forward(&self, x: &[f64]) -> ForwardCache {
        debug_assert_eq!(x.len(), self.d);
        let (d, c) = (self.d, self.c);
        let v = &self.values;
        match self.arch {
            Architecture::Linear => {
                let mut logits = Vec::with_capacity(c);
                affine(&v[..c * d], &v[c * d..c * d + c], x, &mut logits);
                ForwardCache {
                    hidden: Vec::new(),
                    logits,
                }
            }
            Architecture::Mlp { hidden: h } => {
                let (w1, rest) = v.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                let mut hid = Vec::with_capacity(h);
                affine(w1, b1, x, &mut hid);
                hid.iter_mut().for_each(|a| *a = a.max(0.0));
                let mut logits = Vec::with_capacity(c);
                affine(w2, b2, &hid, &mut logits);
                ForwardCache {
                    hidden: hid,
                    logits,
                }
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).logits
    }

    /// Accumulates `scale · ∂(grad_logits · logits)/∂θ` into `grads`.
    pub fn backward(
        &self,
        x: &[f64],
        cache: &ForwardCache,
        grad_logits: &[f64],
        scale: f64,
        grads: &mut [f64],
    ) {
        let (d, c) = (self.d, self.c);
        match self.arch {
            Architecture::Linear => {
                let (gw, gb) = grads.split_at_mut(c * d);
                for (k, g) in grad_logits.iter().enumerate() {
                    let g = g * scale;
                    gb[k] += g;
                    for (gw, xv) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *gw += g * xv;
                    }
                }
            }
            Architecture::Mlp { hidden: h } => {
                let w2 = &self.values[h * d + h..h * d + h + c * h];
                let (g1, rest) = grads.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(c * h);
                let mut grad_hidden = vec![0.0; h];
                for (k, g) in grad_logits.iter().enumerate() {
                    let g = g * scale;
                    gb2[k] += g;
                    let row = &w2[k * h..(k + 1) * h];
                    for j in 0..h {
                        gw2[k * h + j] += g * cache.hidden[j];
                        grad_hidden[j] += g * row[j];
                    }
                }
                for j in 0..h {
                    // ReLU: the pre-activation was positive iff the activation is.
                    if cache.hidden[j] <= 0.0 {
                        continue;
                    }
                    let g = grad_hidden[j];
                    gb1[j] += g;
                    for (gw, xv) in g1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gw += g * xv;
                    }
                }
            }
        }
    }

    /// `argmax_k g_k(x)`, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = k;
        }
    }
    best
}
