use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::attentive::Attentive;
use crate::error::{Error, Result};

/// Covariance functions. Positive parameters are optimised in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `signal_var * exp(-r^2 / (2 l^2))`, any input dimension.
    Rbf {
        signal_var: f64,
        lengthscale: f64,
    },
    /// Arcsine (neural-network) kernel with `Sigma = diag(l)^-2`.
    NeuralNet {
        signal_var: f64,
        bias: f64,
        lengthscales: Vec<f64>,
    },
    Attentive(Attentive),
}

impl Kernel {
    pub fn rbf(signal_var: f64, lengthscale: f64) -> Self {
        Kernel::Rbf {
            signal_var,
            lengthscale,
        }
    }

    pub fn neural_net(signal_var: f64, bias: f64, lengthscales: Vec<f64>) -> Self {
        Kernel::NeuralNet {
            signal_var,
            bias,
            lengthscales,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Rbf { .. } => "rbf",
            Kernel::NeuralNet { .. } => "nn",
            Kernel::Attentive(_) => "ak",
        }
    }

    /// Required input dimension, if the kernel fixes one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Kernel::Rbf { .. } => None,
            Kernel::NeuralNet { lengthscales, .. } => Some(lengthscales.len()),
            Kernel::Attentive(a) => Some(a.input_dim()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Rbf {
                signal_var,
                lengthscale,
            } => {
                if !(*signal_var > 0.0 && *lengthscale > 0.0)
                    || !signal_var.is_finite()
                    || !lengthscale.is_finite()
                {
                    return Err(Error::Config(
                        "rbf parameters must be positive and finite".into(),
                    ));
                }
            }
            Kernel::NeuralNet {
                signal_var,
                bias,
                lengthscales,
            } => {
                if !(*signal_var > 0.0 && *bias > 0.0)
                    || lengthscales.is_empty()
                    || lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite()))
                {
                    return Err(Error::Config(
                        "neural-net kernel parameters must be positive".into(),
                    ));
                }
            }
            Kernel::Attentive(a) => a.validate()?,
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.input_dim() {
            Some(d) if d != x.len() => Err(Error::Usage(format!(
                "{} kernel expects {d}-dimensional inputs, got {}",
                self.name(),
                x.len()
            ))),
            _ if x.is_empty() => Err(Error::Usage("empty input vector".into())),
            _ => Ok(()),
        }
    }

    /// Per-point cache that makes pairwise evaluation cheap.
    pub(crate) fn encode(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Kernel::Rbf { .. } => Vec::new(),
            Kernel::NeuralNet {
                bias, lengthscales, ..
            } => {
                vec![1.0 + bias + 2.0 * quad(x, x, lengthscales)]
            }
            Kernel::Attentive(a) => a.features(x),
        }
    }

    pub(crate) fn encode_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.encode(x)).collect()
    }

    pub(crate) fn eval_encoded(&self, a: &[f64], ea: &[f64], b: &[f64], eb: &[f64]) -> f64 {
        match self {
            Kernel::Rbf {
                signal_var,
                lengthscale,
            } => signal_var * (-sq_dist(a, b) / (2.0 * lengthscale * lengthscale)).exp(),
            Kernel::NeuralNet {
                signal_var,
                bias,
                lengthscales,
            } => {
                let u = (bias + 2.0 * quad(a, b, lengthscales)) / (ea[0] * eb[0]).sqrt();
                signal_var * u.clamp(-1.0, 1.0).asin()
            }
            Kernel::Attentive(k) => k.eval_features(a, ea, b, eb),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        if a.len() != b.len() {
            return Err(Error::Usage("kernel inputs differ in dimension".into()));
        }
        Ok(self.eval_encoded(a, &self.encode(a), b, &self.encode(b)))
    }

    /// Prior variance `k(x, x)`.
    pub fn diag(&self, x: &[f64]) -> f64 {
        match self {
            Kernel::Rbf { signal_var, .. } => *signal_var,
            Kernel::Attentive(a) => a.amplitude,
            Kernel::NeuralNet { .. } => {
                let e = self.encode(x);
                self.eval_encoded(x, &e, x, &e)
            }
        }
    }

    /// Upper bound on `k(x, x)` over all inputs.
    pub fn max_variance(&self) -> f64 {
        match self {
            Kernel::Rbf { signal_var, .. } => *signal_var,
            Kernel::NeuralNet { signal_var, .. } => signal_var * std::f64::consts::FRAC_PI_2,
            Kernel::Attentive(a) => a.amplitude,
        }
    }

    pub fn gram(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let enc = self.encode_all(xs);
        gram_encoded(self, xs, &enc)
    }

    /// `rows x cols` cross-covariance.
    pub fn cross(&self, rows: &[Vec<f64>], cols: &[Vec<f64>]) -> DMatrix<f64> {
        let er = self.encode_all(rows);
        let ec = self.encode_all(cols);
        cross_encoded(self, rows, &er, cols, &ec)
    }

    /// Unconstrained hyperparameter vector.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Kernel::Rbf {
                signal_var,
                lengthscale,
            } => vec![signal_var.ln(), lengthscale.ln()],
            Kernel::NeuralNet {
                signal_var,
                bias,
                lengthscales,
            } => {
                let mut p = vec![signal_var.ln(), bias.ln()];
                p.extend(lengthscales.iter().map(|l| l.ln()));
                p
            }
            Kernel::Attentive(a) => a.params(),
        }
    }

    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.params().len() {
            return Err(Error::Usage(
                "hyperparameter vector has the wrong length".into(),
            ));
        }
        let mut k = self.clone();
        match &mut k {
            Kernel::Rbf {
                signal_var,
                lengthscale,
            } => {
                *signal_var = p[0].exp();
                *lengthscale = p[1].exp();
            }
            Kernel::NeuralNet {
                signal_var,
                bias,
                lengthscales,
            } => {
                *signal_var = p[0].exp();
                *bias = p[1].exp();
                for (l, v) in lengthscales.iter_mut().zip(&p[2..]) {
                    *l = v.exp();
                }
            }
            Kernel::Attentive(a) => a.set_params(p),
        }
        k.validate()?;
        Ok(k)
    }

    /// `sum_ij G_ij dK_ij / dp` for every unconstrained parameter `p`.
    pub(crate) fn param_grad(&self, xs: &[Vec<f64>], g: &DMatrix<f64>) -> Vec<f64> {
        let n = xs.len();
        match self {
            Kernel::Rbf {
                signal_var,
                lengthscale,
            } => {
                let l2 = lengthscale * lengthscale;
                let mut out = [0.0; 2];
                for i in 0..n {
                    for j in 0..n {
                        let r2 = sq_dist(&xs[i], &xs[j]);
                        let k = signal_var * (-r2 / (2.0 * l2)).exp();
                        out[0] += g[(i, j)] * k;
                        out[1] += g[(i, j)] * k * r2 / l2;
                    }
                }
                out.to_vec()
            }
            Kernel::NeuralNet {
                signal_var,
                bias,
                lengthscales,
            } => {
                let dim = lengthscales.len();
                let enc = self.encode_all(xs);
                let inv_l2: Vec<f64> = lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
                let mut out = vec![0.0; 2 + dim];
                for i in 0..n {
                    let da = enc[i][0];
                    for j in 0..n {
                        let gij = g[(i, j)];
                        let db = enc[j][0];
                        let root = (da * db).sqrt();
                        let u = ((bias + 2.0 * quad(&xs[i], &xs[j], lengthscales)) / root)
                            .clamp(-1.0, 1.0);
                        let k = signal_var * u.asin();
                        let dk_du = signal_var / (1.0 - u * u).max(1e-300).sqrt();
                        out[0] += gij * k;
                        let du_dbias = bias * (1.0 / root - 0.5 * u * (1.0 / da + 1.0 / db));
                        out[1] += gij * dk_du * du_dbias;
                        for d in 0..dim {
                            let (a, b) = (xs[i][d], xs[j][d]);
                            let dnum = -4.0 * a * b * inv_l2[d];
                            let dda = -4.0 * a * a * inv_l2[d];
                            let ddb = -4.0 * b * b * inv_l2[d];
                            let du = dnum / root - 0.5 * u * (dda / da + ddb / db);
                            out[2 + d] += gij * dk_du * du;
                        }
                    }
                }
                out
            }
            Kernel::Attentive(a) => a.param_grad(xs, g),
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn quad(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((p, q), l)| p * q / (l * l))
        .sum()
}

pub(crate) fn gram_encoded(k: &Kernel, xs: &[Vec<f64>], enc: &[Vec<f64>]) -> DMatrix<f64> {
    let n = xs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = k.eval_encoded(&xs[i], &enc[i], &xs[j], &enc[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub(crate) fn cross_encoded(
    k: &Kernel,
    rows: &[Vec<f64>],
    er: &[Vec<f64>],
    cols: &[Vec<f64>],
    ec: &[Vec<f64>],
) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        k.eval_encoded(&rows[i], &er[i], &cols[j], &ec[j])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rbf_reference_values() {
        let k = Kernel::rbf(1.0, 1.0);
        assert_eq!(k.eval(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0);
        let v = k.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn nn_origin_is_pi_over_six() {
        let k = Kernel::neural_net(1.0, 1.0, vec![1.0, 1.0]);
        let v = k.eval(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v - PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let k = Kernel::neural_net(1.0, 1.0, vec![1.0, 1.0]);
        assert!(matches!(k.eval(&[0.0], &[0.0]), Err(Error::Usage(_))));
        let r = Kernel::rbf(1.0, 1.0);
        assert!(matches!(r.eval(&[0.0], &[0.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn params_round_trip() {
        let k = Kernel::neural_net(0.3, 2.0, vec![1.5, 0.7]);
        let back = k.with_params(&k.params()).unwrap();
        if let (
            Kernel::NeuralNet {
                signal_var: a,
                lengthscales: la,
                ..
            },
            Kernel::NeuralNet {
                signal_var: b,
                lengthscales: lb,
                ..
            },
        ) = (&k, &back)
        {
            assert!((a - b).abs() < 1e-14);
            assert!((la[1] - lb[1]).abs() < 1e-14);
        } else {
            unreachable!()
        }
    }

    #[test]
    fn json_round_trip() {
        let k = Kernel::rbf(0.02, 1.3);
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<Kernel>(&s).unwrap(), k);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(Kernel::rbf(0.0, 1.0).validate().is_err());
        assert!(Kernel::neural_net(1.0, -1.0, vec![1.0]).validate().is_err());
    }
}
