use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{cross_encoded, gram_encoded, Kernel};
use crate::error::{Error, Result};

/// Diagonal jitter tried in order on the exact path.
pub const EXACT_JITTER: [f64; 4] = [0.0, 1e-9, 1e-6, 1e-4];
/// Diagonal jitter tried in order on the inducing covariance.
pub const INDUCING_JITTER: [f64; 3] = [1e-9, 1e-6, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InducingPolicy {
    Exact,
    /// Sparse with `m` strided inducing points once the data exceeds `m`.
    Strided(usize),
    /// Sparse path with every training input as an inducing point.
    All,
}

impl Default for InducingPolicy {
    fn default() -> Self {
        InducingPolicy::Strided(200)
    }
}

/// Serialisable description of a model; fitting it reproduces the posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSpec {
    pub kernel: Kernel,
    pub noise_var: f64,
    pub policy: InducingPolicy,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Posterior {
    Prior,
    Exact {
        chol: Cholesky<f64, Dyn>,
        alpha: DVector<f64>,
        enc: Vec<Vec<f64>>,
    },
    Sparse {
        inducing: Vec<usize>,
        enc: Vec<Vec<f64>>,
        l_m: DMatrix<f64>,
        l_a: DMatrix<f64>,
        c: DVector<f64>,
    },
}

/// Fitted Gaussian-process regressor with a constant (training-mean) prior mean.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Kernel,
    noise_var: f64,
    policy: InducingPolicy,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    y_mean: f64,
    jitter: f64,
    post: Posterior,
}

pub(crate) fn cholesky_with_ladder(
    m: &DMatrix<f64>,
    ladder: &[f64],
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for &j in ladder {
        let mut a = m.clone();
        if j > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += j;
            }
        }
        if let Some(c) = Cholesky::new(a) {
            return Ok((c, j));
        }
    }
    Err(Error::Numerical(format!(
        "covariance of size {} not positive definite after jitter {:e}",
        m.nrows(),
        ladder.last().copied().unwrap_or(0.0)
    )))
}

fn strided(n: usize, m: usize) -> Vec<usize> {
    (0..m).map(|k| k * n / m).collect()
}

fn solve_lower(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    // The factor is non-singular by construction, so the solve cannot fail.
    let ok = l.solve_lower_triangular_mut(b);
    debug_assert!(ok);
}

impl GpModel {
    pub fn fit(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        kernel: Kernel,
        noise_var: f64,
        policy: InducingPolicy,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::Config("noise variance must be positive".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Data(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(Error::Data(format!("non-finite target {t}")));
        }
        if let Some(first) = inputs.first() {
            for x in &inputs {
                kernel.check_dim(x)?;
                if x.len() != first.len() {
                    return Err(Error::Data("inputs differ in dimension".into()));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data("non-finite input".into()));
                }
            }
        }
        let n = inputs.len();
        let y_mean = if n == 0 {
            0.0
        } else {
            targets.iter().sum::<f64>() / n as f64
        };
        let mut model = Self {
            kernel,
            noise_var,
            policy,
            inputs,
            targets,
            y_mean,
            jitter: 0.0,
            post: Posterior::Prior,
        };
        if n == 0 {
            return Ok(model);
        }
        let sparse_m = match policy {
            InducingPolicy::Exact => None,
            InducingPolicy::Strided(0) => {
                return Err(Error::Config("inducing count must be positive".into()));
            }
            InducingPolicy::Strided(m) if n <= m => None,
            InducingPolicy::Strided(m) => Some(m),
            InducingPolicy::All => Some(n),
        };
        match sparse_m {
            None => model.fit_exact()?,
            Some(m) => model.fit_sparse(strided(n, m))?,
        }
        Ok(model)
    }

    fn centred(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.targets.len(),
            self.targets.iter().map(|t| t - self.y_mean),
        )
    }

    fn fit_exact(&mut self) -> Result<()> {
        let enc = self.kernel.encode_all(&self.inputs);
        let mut k = gram_encoded(&self.kernel, &self.inputs, &enc);
        for i in 0..k.nrows() {
            k[(i, i)] += self.noise_var;
        }
        let (chol, jitter) = cholesky_with_ladder(&k, &EXACT_JITTER)?;
        let alpha = chol.solve(&self.centred());
        self.jitter = jitter;
        self.post = Posterior::Exact { chol, alpha, enc };
        Ok(())
    }

    fn fit_sparse(&mut self, inducing: Vec<usize>) -> Result<()> {
        let enc_all = self.kernel.encode_all(&self.inputs);
        let z: Vec<Vec<f64>> = inducing.iter().map(|&i| self.inputs[i].clone()).collect();
        let enc: Vec<Vec<f64>> = inducing.iter().map(|&i| enc_all[i].clone()).collect();
        let kmm = gram_encoded(&self.kernel, &z, &enc);
        let (lm, jitter) = cholesky_with_ladder(&kmm, &INDUCING_JITTER)?;
        let l_m = lm.l();
        let mut v = cross_encoded(&self.kernel, &z, &enc, &self.inputs, &enc_all);
        solve_lower(&l_m, &mut v);
        let m = z.len();
        let mut a = &v * v.transpose() / self.noise_var;
        for i in 0..m {
            a[(i, i)] += 1.0;
        }
        let (la, _) = cholesky_with_ladder(&a, &EXACT_JITTER)?;
        let l_a = la.l();
        let mut c = DMatrix::from_column_slice(m, 1, (&v * self.centred()).as_slice());
        solve_lower(&l_a, &mut c);
        self.jitter = jitter;
        self.post = Posterior::Sparse {
            inducing,
            enc,
            l_m,
            l_a,
            c: c.column(0).into_owned(),
        };
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let (m, v) = self.predict_batch(std::slice::from_ref(&x.to_vec()))?;
        Ok((m[0], v[0]))
    }

    /// Posterior means and variances; variances are clamped at zero.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        for x in xs {
            self.kernel.check_dim(x)?;
            if let Some(first) = self.inputs.first() {
                if first.len() != x.len() {
                    return Err(Error::Usage(
                        "query dimension differs from training inputs".into(),
                    ));
                }
            }
        }
        let eq = self.kernel.encode_all(xs);
        let prior: Vec<f64> = xs
            .iter()
            .zip(&eq)
            .map(|(x, e)| self.kernel.eval_encoded(x, e, x, e))
            .collect();
        match &self.post {
            Posterior::Prior => Ok((vec![self.y_mean; xs.len()], prior)),
            Posterior::Exact { chol, alpha, enc } => {
                let kx = cross_encoded(&self.kernel, &self.inputs, enc, xs, &eq);
                let means = kx.tr_mul(alpha);
                let mut w = kx;
                // Only the lower triangle is read.
                solve_lower(chol.l_dirty(), &mut w);
                Ok(finish(&means, self.y_mean, &prior, &w, None))
            }
            Posterior::Sparse {
                inducing,
                enc,
                l_m,
                l_a,
                c,
            } => {
                let z: Vec<Vec<f64>> = inducing.iter().map(|&i| self.inputs[i].clone()).collect();
                let mut a = cross_encoded(&self.kernel, &z, enc, xs, &eq);
                solve_lower(l_m, &mut a);
                let mut b = a.clone();
                solve_lower(l_a, &mut b);
                let means = b.tr_mul(c) / self.noise_var;
                Ok(finish(&means, self.y_mean, &prior, &a, Some(&b)))
            }
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn policy(&self) -> InducingPolicy {
        self.policy
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.post, Posterior::Sparse { .. })
    }

    /// Indices of the inducing inputs when the sparse path is active.
    pub fn inducing_indices(&self) -> Option<&[usize]> {
        match &self.post {
            Posterior::Sparse { inducing, .. } => Some(inducing),
            _ => None,
        }
    }

    /// Diagonal jitter the factorisation needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn to_spec(&self) -> GpSpec {
        GpSpec {
            kernel: self.kernel.clone(),
            noise_var: self.noise_var,
            policy: self.policy,
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    pub fn from_spec(spec: GpSpec) -> Result<Self> {
        Self::fit(
            spec.inputs,
            spec.targets,
            spec.kernel,
            spec.noise_var,
            spec.policy,
        )
    }

    /// Same data and noise, different kernel.
    pub fn refit_with_kernel(&self, kernel: Kernel) -> Result<Self> {
        Self::fit(
            self.inputs.clone(),
            self.targets.clone(),
            kernel,
            self.noise_var,
            self.policy,
        )
    }
}

fn finish(
    means: &DVector<f64>,
    y_mean: f64,
    prior: &[f64],
    a: &DMatrix<f64>,
    b: Option<&DMatrix<f64>>,
) -> (Vec<f64>, Vec<f64>) {
    let mu = means.iter().map(|m| m + y_mean).collect();
    let var = (0..prior.len())
        .map(|j| {
            let mut v = prior[j] - a.column(j).norm_squared();
            if let Some(b) = b {
                v += b.column(j).norm_squared();
            }
            v.max(0.0)
        })
        .collect();
    (mu, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![i as f64 * 0.37, (i as f64 * 0.91).sin()])
            .collect();
        let ys = xs.iter().map(|x| (x[0] * 0.8).sin() + 0.3 * x[1]).collect();
        (xs, ys)
    }

    #[test]
    fn empty_model_returns_prior() {
        let k = Kernel::rbf(0.7, 1.0);
        let m = GpModel::fit(vec![], vec![], k, 1e-4, InducingPolicy::Exact).unwrap();
        let (mu, var) = m.predict(&[3.0, 1.0]).unwrap();
        assert_eq!(mu, 0.0);
        assert_eq!(var, 0.7);
    }

    #[test]
    fn single_point_interpolates() {
        let k = Kernel::rbf(1.0, 1.0);
        let m = GpModel::fit(
            vec![vec![1.0, 2.0]],
            vec![0.42],
            k,
            1e-12,
            InducingPolicy::Exact,
        )
        .unwrap();
        let (mu, var) = m.predict(&[1.0, 2.0]).unwrap();
        assert!((mu - 0.42).abs() < 1e-9);
        assert!(var < 1e-9);
    }

    #[test]
    fn far_field_recovers_prior() {
        let (xs, ys) = line_data(10);
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        let m = GpModel::fit(xs, ys, Kernel::rbf(0.5, 0.6), 1e-3, InducingPolicy::Exact).unwrap();
        let (mu, var) = m.predict(&[500.0, 500.0]).unwrap();
        assert!((mu - ybar).abs() < 1e-6);
        assert!((var - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_target_rejected() {
        let r = GpModel::fit(
            vec![vec![0.0]],
            vec![f64::NAN],
            Kernel::rbf(1.0, 1.0),
            1e-3,
            InducingPolicy::Exact,
        );
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn sparse_all_matches_exact() {
        let (xs, ys) = line_data(40);
        let k = Kernel::rbf(0.8, 0.9);
        let ex = GpModel::fit(
            xs.clone(),
            ys.clone(),
            k.clone(),
            1e-2,
            InducingPolicy::Exact,
        )
        .unwrap();
        let sp = GpModel::fit(xs, ys, k, 1e-2, InducingPolicy::All).unwrap();
        assert!(sp.is_sparse() && !ex.is_sparse());
        let q: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 * 0.61, 0.2]).collect();
        let (m1, v1) = ex.predict_batch(&q).unwrap();
        let (m2, v2) = sp.predict_batch(&q).unwrap();
        for i in 0..q.len() {
            assert!((m1[i] - m2[i]).abs() < 1e-6, "mean {i}");
            assert!((v1[i] - v2[i]).abs() < 1e-6, "var {i}");
        }
    }

    #[test]
    fn small_data_uses_exact_path() {
        let (xs, ys) = line_data(30);
        let m = GpModel::fit(
            xs,
            ys,
            Kernel::rbf(1.0, 1.0),
            1e-2,
            InducingPolicy::Strided(200),
        )
        .unwrap();
        assert!(!m.is_sparse());
    }

    #[test]
    fn strided_inducing_subset() {
        let (xs, ys) = line_data(50);
        let m = GpModel::fit(
            xs,
            ys,
            Kernel::rbf(1.0, 1.0),
            1e-2,
            InducingPolicy::Strided(10),
        )
        .unwrap();
        let idx = m.inducing_indices().unwrap();
        assert_eq!(idx.len(), 10);
        assert!(idx.windows(2).all(|w| w[0] < w[1]) && *idx.last().unwrap() < 50);
    }

    #[test]
    fn spec_round_trip_reproduces_predictions() {
        let (xs, ys) = line_data(15);
        let m = GpModel::fit(xs, ys, Kernel::rbf(1.0, 1.2), 1e-3, InducingPolicy::Exact).unwrap();
        let s = serde_json::to_string(&m.to_spec()).unwrap();
        let back = GpModel::from_spec(serde_json::from_str(&s).unwrap()).unwrap();
        let q = [2.2, 0.1];
        assert_eq!(m.predict(&q).unwrap(), back.predict(&q).unwrap());
    }
}
