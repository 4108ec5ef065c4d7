//! Attentive kernel: a membership-gated mixture of base RBF kernels whose
//! per-location weights and memberships come from a small tanh network.
//!
//!   k(x, x') = amp * <z(x), z(x')> * sum_m w_m(x) w_m(x') k_m(x, x')
//!
//! `w` is a softmax followed by l2 normalisation, `z` is l2-normalised.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

/// Fully connected network with tanh on every hidden layer and a linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNet {
    pub layers: Vec<Layer>,
}

struct Trace {
    /// Input to each layer (post-activation of the previous one).
    acts: Vec<Vec<f64>>,
}

impl FeatureNet {
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let std = (1.0 / i as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                Layer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o).map(|_| normal.sample(rng)).collect(),
                    bias: vec![0.0; o],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Trace) {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            acts.push(h.clone());
            h = layer.apply(&h);
            if k < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        (h, Trace { acts })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    fn backward(&self, trace: &Trace, grad_out: &[f64], grad: &mut [f64]) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        let mut g = grad_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &trace.acts[k];
            let base = offsets[k];
            for o in 0..layer.outputs {
                for i in 0..layer.inputs {
                    grad[base + o * layer.inputs + i] += g[o] * input[i];
                }
                grad[base + layer.weights.len() + o] += g[o];
            }
            if k == 0 {
                break;
            }
            // Through the weights, then through the tanh that produced `input`.
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for i in 0..layer.inputs {
                    prev[i] += g[o] * row[i];
                }
            }
            for i in 0..layer.inputs {
                prev[i] *= 1.0 - input[i] * input[i];
            }
            g = prev;
        }
    }

    fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    fn set_params(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attentive {
    pub amplitude: f64,
    /// Fixed base RBF lengthscales.
    pub lengthscales: Vec<f64>,
    pub net: FeatureNet,
    /// Inputs are mapped to `(x - input_center) / input_scale` before the network.
    pub input_center: Vec<f64>,
    pub input_scale: f64,
}

fn l2_normalize(v: &[f64]) -> (Vec<f64>, f64) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < NORM_EPS {
        let u = 1.0 / (v.len() as f64).sqrt();
        (vec![u; v.len()], 0.0)
    } else {
        (v.iter().map(|x| x / n).collect(), n)
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

struct FeatureTrace {
    net: Trace,
    softmax: Vec<f64>,
    w_norm: f64,
    z_norm: f64,
}

impl Attentive {
    /// `M` base lengthscales log-spaced in `[min_len, max_len]` and a
    /// `dim -> hidden -> hidden -> 2M` tanh network.
    pub fn new(
        dim: usize,
        bases: usize,
        (min_len, max_len): (f64, f64),
        hidden: usize,
        input_center: Vec<f64>,
        input_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if bases < 2 {
            return Err(Error::Config(
                "attentive kernel needs at least two base kernels".into(),
            ));
        }
        if input_center.len() != dim
            || !(input_scale > 0.0)
            || !(min_len > 0.0)
            || max_len < min_len
        {
            return Err(Error::Config("invalid attentive kernel geometry".into()));
        }
        let lengthscales = (0..bases)
            .map(|m| {
                let t = m as f64 / (bases - 1) as f64;
                (min_len.ln() + t * (max_len.ln() - min_len.ln())).exp()
            })
            .collect();
        let mut rng = rng::stream(seed, "attentive-init");
        Ok(Self {
            amplitude: 1.0,
            lengthscales,
            net: FeatureNet::new(&[dim, hidden, hidden, 2 * bases], &mut rng),
            input_center,
            input_scale,
        })
    }

    pub fn bases(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_center.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let m = self.bases();
        if m < 2 {
            return Err(Error::Config(
                "attentive kernel needs at least two base kernels".into(),
            ));
        }
        if !(self.amplitude > 0.0) || self.lengthscales.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config(
                "attentive amplitude and lengthscales must be positive".into(),
            ));
        }
        if self.net.output_dim() != 2 * m || self.net.input_dim() != self.input_dim() {
            return Err(Error::Config(
                "attentive network shape does not match kernel".into(),
            ));
        }
        Ok(())
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_center)
            .map(|(v, c)| (v - c) / self.input_scale)
            .collect()
    }

    fn features_traced(&self, x: &[f64]) -> (Vec<f64>, FeatureTrace) {
        let m = self.bases();
        let (out, net) = self.net.forward(&self.scaled(x));
        let sm = softmax(&out[..m]);
        let (w, w_norm) = l2_normalize(&sm);
        let (z, z_norm) = l2_normalize(&out[m..]);
        let mut feat = w;
        feat.extend(z);
        (
            feat,
            FeatureTrace {
                net,
                softmax: sm,
                w_norm,
                z_norm,
            },
        )
    }

    /// Weight vector followed by membership vector, `2M` values.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.features_traced(x).0
    }

    /// Kernel value given precomputed feature vectors.
    pub fn eval_features(&self, a: &[f64], fa: &[f64], b: &[f64], fb: &[f64]) -> f64 {
        let m = self.bases();
        let r2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        let membership: f64 = fa[m..].iter().zip(&fb[m..]).map(|(p, q)| p * q).sum();
        let mix: f64 = (0..m)
            .map(|k| {
                let l = self.lengthscales[k];
                fa[k] * fb[k] * (-r2 / (2.0 * l * l)).exp()
            })
            .sum();
        self.amplitude * membership * mix
    }

    pub(crate) fn params(&self) -> Vec<f64> {
        let mut p = vec![self.amplitude.ln()];
        p.extend(self.net.params());
        p
    }

    pub(crate) fn set_params(&mut self, p: &[f64]) {
        self.amplitude = p[0].exp();
        self.net.set_params(&p[1..]);
    }

    /// `sum_ij G_ij dK_ij/dtheta` by reverse accumulation through the kernel,
    /// the normalisations and the network.
    pub(crate) fn param_grad(&self, xs: &[Vec<f64>], g: &DMatrix<f64>) -> Vec<f64> {
        let n = xs.len();
        let m = self.bases();
        let traced: Vec<(Vec<f64>, FeatureTrace)> =
            xs.iter().map(|x| self.features_traced(x)).collect();
        let mut grad = vec![0.0; 1 + self.net.param_count()];
        let mut gw = vec![vec![0.0; m]; n];
        let mut gz = vec![vec![0.0; m]; n];
        let mut base = vec![0.0; m];
        for i in 0..n {
            let fi = &traced[i].0;
            for j in 0..n {
                let gij = g[(i, j)];
                if gij == 0.0 {
                    continue;
                }
                let fj = &traced[j].0;
                let r2: f64 = xs[i]
                    .iter()
                    .zip(&xs[j])
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                let mut mix = 0.0;
                for k in 0..m {
                    let l = self.lengthscales[k];
                    base[k] = (-r2 / (2.0 * l * l)).exp();
                    mix += fi[k] * fj[k] * base[k];
                }
                let s: f64 = (0..m).map(|k| fi[m + k] * fj[m + k]).sum();
                let kij = self.amplitude * s * mix;
                grad[0] += gij * kij;
                let scale = 2.0 * self.amplitude * gij;
                for k in 0..m {
                    gz[i][k] += scale * mix * fj[m + k];
                    gw[i][k] += scale * s * base[k] * fj[k];
                }
            }
        }
        let net_grad = &mut grad[1..];
        for i in 0..n {
            let (feat, tr) = &traced[i];
            let wbar = &feat[..m];
            let zbar = &feat[m..];
            let mut grad_out = vec![0.0; 2 * m];
            // l2 normalisation of the softmax output, then the softmax itself.
            if tr.w_norm > 0.0 {
                let dot: f64 = wbar.iter().zip(&gw[i]).map(|(a, b)| a * b).sum();
                let g_sm: Vec<f64> = (0..m)
                    .map(|k| (gw[i][k] - wbar[k] * dot) / tr.w_norm)
                    .collect();
                let inner: f64 = tr.softmax.iter().zip(&g_sm).map(|(p, q)| p * q).sum();
                for k in 0..m {
                    grad_out[k] = tr.softmax[k] * (g_sm[k] - inner);
                }
            }
            if tr.z_norm > 0.0 {
                let dot: f64 = zbar.iter().zip(&gz[i]).map(|(a, b)| a * b).sum();
                for k in 0..m {
                    grad_out[m + k] = (gz[i][k] - zbar[k] * dot) / tr.z_norm;
                }
            }
            self.net.backward(&tr.net, &grad_out, net_grad);
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel() -> Attentive {
        Attentive::new(2, 8, (0.25, 8.0), 16, vec![10.0, 10.0], 10.0, 3).unwrap()
    }

    #[test]
    fn lengthscales_log_spaced() {
        let k = kernel();
        assert_eq!(k.bases(), 8);
        assert!((k.lengthscales[0] - 0.25).abs() < 1e-12);
        assert!((k.lengthscales[7] - 8.0).abs() < 1e-12);
        let r = k.lengthscales[1] / k.lengthscales[0];
        assert!((k.lengthscales[5] / k.lengthscales[4] - r).abs() < 1e-12);
    }

    #[test]
    fn features_are_unit_vectors() {
        let k = kernel();
        let f = k.features(&[3.0, 17.0]);
        let m = k.bases();
        let nw: f64 = f[..m].iter().map(|v| v * v).sum();
        let nz: f64 = f[m..].iter().map(|v| v * v).sum();
        assert!((nw - 1.0).abs() < 1e-12 && (nz - 1.0).abs() < 1e-12);
        assert!(f[..m].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn degenerates_to_single_base_rbf() {
        let k = kernel();
        let m = k.bases();
        let mut f = vec![0.0; 2 * m];
        f[3] = 1.0;
        f[m] = 0.6;
        f[m + 1] = 0.8;
        let (a, b) = ([1.0, 2.0], [1.7, 1.1]);
        let r2: f64 = 0.7f64.powi(2) + 0.9f64.powi(2);
        let l = k.lengthscales[3];
        let expect = k.amplitude * (-r2 / (2.0 * l * l)).exp();
        assert!((k.eval_features(&a, &f, &b, &f) - expect).abs() < 1e-10);
    }

    #[test]
    fn network_one_hot_limit() {
        // Drive the softmax to a one-hot weight through the output bias.
        let mut k = kernel();
        let m = k.bases();
        let head = k.net.layers.last_mut().unwrap();
        head.weights.iter_mut().for_each(|w| *w = 0.0);
        head.bias.iter_mut().for_each(|b| *b = 0.0);
        head.bias[2] = 60.0;
        head.bias[m] = 1.0;
        let (a, b) = ([4.0, 4.0], [5.0, 3.5]);
        let l = k.lengthscales[2];
        let r2 = 1.0 + 0.25;
        let expect = k.amplitude * (-r2 / (2.0 * l * l)).exp();
        let got = k.eval_features(&a, &k.features(&a), &b, &k.features(&b));
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }
}
