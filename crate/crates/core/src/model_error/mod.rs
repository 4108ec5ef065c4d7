//! Lateral step deviation: a synthetic perturbation oracle standing in for
//! the full-order robot, and the GP that learns it offline.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit, Vector2};
use crate::gp::{train_hyperparams, GpModel, GpSpec, InducingPolicy, Kernel, TrainOptions};
use crate::locomotion::{Stance, Waypoint};

/// Mean deviation magnitude the oracle is calibrated to.
pub const CALIBRATED_MEAN: f64 = 1.75e-2;

/// Parameters of the previous (`_c`) and upcoming (`_n`) steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepContext {
    pub d_c: f64,
    pub dtheta_c: f64,
    pub dz_c: f64,
    pub d_n: f64,
    pub dtheta_n: f64,
    pub dz_n: f64,
    pub stance: Stance,
}

impl StepContext {
    pub fn features(&self) -> [f64; 6] {
        [
            self.d_c,
            self.dtheta_c,
            self.dz_c,
            self.d_n,
            self.dtheta_n,
            self.dz_n,
        ]
    }

    pub fn from_features(f: [f64; 6], stance: Stance) -> Self {
        Self {
            d_c: f[0],
            dtheta_c: f[1],
            dz_c: f[2],
            d_n: f[3],
            dtheta_n: f[4],
            dz_n: f[5],
            stance,
        }
    }

    pub fn with_stance(mut self, stance: Stance) -> Self {
        self.stance = stance;
        self
    }
}

/// Admissible ranges of the step parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextRanges {
    pub d: (f64, f64),
    pub dtheta: (f64, f64),
    pub dz: (f64, f64),
}

impl Default for ContextRanges {
    fn default() -> Self {
        Self {
            d: (0.2, 0.5),
            dtheta: (-0.3, 0.3),
            dz: (-0.1, 0.1),
        }
    }
}

impl ContextRanges {
    fn axis(&self, k: usize) -> (f64, f64) {
        match k % 3 {
            0 => self.d,
            1 => self.dtheta,
            _ => self.dz,
        }
    }

    /// Maps features into the unit box, clamping values outside the ranges.
    pub fn normalize(&self, f: &[f64; 6]) -> Vec<f64> {
        (0..6)
            .map(|k| {
                let (lo, hi) = self.axis(k);
                ((f[k] - lo) / (hi - lo)).clamp(0.0, 1.0)
            })
            .collect()
    }

    /// `n` evenly spaced values per axis, including both ends (the midpoint for `n = 1`).
    pub fn axis_values(&self, k: usize, n: usize) -> Vec<f64> {
        let (lo, hi) = self.axis(k);
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Midpoints of `n` equal cells per axis; disjoint from the endpoint grid.
    pub fn cell_centres(&self, k: usize, n: usize) -> Vec<f64> {
        let (lo, hi) = self.axis(k);
        (0..n)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum OracleForm {
    /// Smooth positive function of the step context, multiplied by `scale`.
    Smooth {
        scale: f64,
    },
    Constant {
        value: f64,
    },
}

/// Ground-truth lateral deviation of the simulated robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationOracle {
    pub form: OracleForm,
    pub noise_std: f64,
}

fn smooth_abs(x: f64, eps: f64) -> f64 {
    (x * x + eps * eps).sqrt()
}

/// Unscaled deviation shape: grows with turning, elevation change and step length.
fn shape(c: &StepContext) -> f64 {
    let turn = (c.dtheta_c * c.dtheta_c + c.dtheta_n * c.dtheta_n) / 0.09;
    let carry = 0.5 * (c.dtheta_c - c.dtheta_n).powi(2) / 0.36;
    let climb = (smooth_abs(c.dz_c, 0.02) + smooth_abs(c.dz_n, 0.02)) / 0.1;
    let length = (c.d_c + c.d_n) / 0.8;
    0.2 + 0.9 * turn + 0.4 * carry + 0.6 * climb + 0.5 * length
}

impl PerturbationOracle {
    pub fn zero() -> Self {
        Self::constant(0.0, 0.0)
    }

    pub fn constant(value: f64, noise_std: f64) -> Self {
        Self {
            form: OracleForm::Constant { value },
            noise_std,
        }
    }

    /// Smooth oracle whose mean magnitude over the admissible ranges equals
    /// [`CALIBRATED_MEAN`] (midpoint quadrature, 6 nodes per axis).
    pub fn calibrated(ranges: &ContextRanges, noise_std: f64) -> Self {
        let nodes: Vec<Vec<f64>> = (0..6).map(|k| ranges.cell_centres(k, 6)).collect();
        let mut sum = 0.0;
        let mut count = 0usize;
        for_each_grid(&nodes, |f| {
            sum += shape(&StepContext::from_features(f, Stance::Left));
            count += 1;
        });
        Self {
            form: OracleForm::Smooth {
                scale: CALIBRATED_MEAN * count as f64 / sum,
            },
            noise_std,
        }
    }

    /// Noise-free deviation magnitude.
    pub fn magnitude(&self, ctx: &StepContext) -> f64 {
        match self.form {
            OracleForm::Smooth { scale } => scale * shape(ctx),
            OracleForm::Constant { value } => value.abs(),
        }
    }

    /// One noisy magnitude draw.
    pub fn sample<R: Rng + ?Sized>(&self, ctx: &StepContext, rng: &mut R) -> f64 {
        let m = self.magnitude(ctx);
        if self.noise_std > 0.0 {
            let n = Normal::new(0.0, self.noise_std).expect("positive std");
            (m + n.sample(rng)).abs()
        } else {
            m
        }
    }
}

/// Anything that predicts the signed lateral deviation of a step.
pub trait DeviationModel: Sync {
    fn deviation(&self, ctx: &StepContext) -> f64;
}

impl DeviationModel for PerturbationOracle {
    fn deviation(&self, ctx: &StepContext) -> f64 {
        ctx.stance.sign() * self.magnitude(ctx)
    }
}

fn for_each_grid(nodes: &[Vec<f64>], mut f: impl FnMut([f64; 6])) {
    let dims: Vec<usize> = nodes.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();
    for mut flat in 0..total {
        let mut x = [0.0; 6];
        for k in (0..6).rev() {
            x[k] = nodes[k][flat % dims[k]];
            flat /= dims[k];
        }
        f(x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub ranges: ContextRanges,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_axis: 4,
            ranges: ContextRanges::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub context: StepContext,
    /// Absolute deviation.
    pub target: f64,
}

/// One noisy oracle draw per grid context. Stances alternate with the grid
/// index; targets are stored as magnitudes.
pub fn generate_training_set(
    oracle: &PerturbationOracle,
    grid: &GridSpec,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if grid.points_per_axis == 0 {
        return Err(Error::Config(
            "training grid needs at least one point per axis".into(),
        ));
    }
    let mut rng = crate::rng::stream(seed, "model-error-train");
    let nodes: Vec<Vec<f64>> = (0..6)
        .map(|k| grid.ranges.axis_values(k, grid.points_per_axis))
        .collect();
    let mut out = Vec::new();
    let mut i = 0usize;
    for_each_grid(&nodes, |f| {
        let stance = if i.is_multiple_of(2) {
            Stance::Left
        } else {
            Stance::Right
        };
        let context = StepContext::from_features(f, stance);
        let signed = stance.sign() * oracle.sample(&context, &mut rng);
        out.push(TrainingSample {
            context,
            target: signed.abs(),
        });
        i += 1;
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelErrorOptions {
    pub noise_var: f64,
    pub inducing: usize,
    pub train: TrainOptions,
}

impl Default for ModelErrorOptions {
    fn default() -> Self {
        Self {
            noise_var: 1e-6,
            inducing: 400,
            train: TrainOptions {
                max_iters: 80,
                max_points: 300,
                learning_rate: 0.1,
                ..TrainOptions::default()
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    ranges: ContextRanges,
    gp: GpSpec,
}

/// GP over normalised step contexts predicting the deviation magnitude.
#[derive(Debug, Clone)]
pub struct ModelErrorGp {
    ranges: ContextRanges,
    gp: GpModel,
}

impl ModelErrorGp {
    pub fn train(
        data: &[TrainingSample],
        ranges: ContextRanges,
        opts: &ModelErrorOptions,
    ) -> Result<Self> {
        let xs: Vec<Vec<f64>> = data
            .iter()
            .map(|s| ranges.normalize(&s.context.features()))
            .collect();
        let ys: Vec<f64> = data.iter().map(|s| s.target).collect();
        let n = ys.len().max(1) as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let kernel = Kernel::rbf(var.max(1e-8), 0.5);
        let policy = InducingPolicy::Strided(opts.inducing);
        let mut gp = GpModel::fit(xs, ys, kernel, opts.noise_var, policy)?;
        if gp.len() >= 5 && opts.train.max_iters > 0 {
            let report = train_hyperparams(&gp, &opts.train)?;
            gp = gp.refit_with_kernel(report.kernel)?;
        }
        Ok(Self { ranges, gp })
    }

    pub fn gp(&self) -> &GpModel {
        &self.gp
    }

    pub fn ranges(&self) -> &ContextRanges {
        &self.ranges
    }

    /// Posterior mean magnitude, clamped at zero.
    pub fn magnitude(&self, ctx: &StepContext) -> Result<f64> {
        if self.gp.is_empty() {
            return Err(Error::Usage("model-error GP has no training data".into()));
        }
        let (m, _) = self.gp.predict(&self.ranges.normalize(&ctx.features()))?;
        Ok(m.max(0.0))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let art = Artifact {
            ranges: self.ranges,
            gp: self.gp.to_spec(),
        };
        let text = serde_json::to_string(&art)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let art: Artifact = serde_json::from_str(&text)?;
        Ok(Self {
            ranges: art.ranges,
            gp: GpModel::from_spec(art.gp)?,
        })
    }
}

/// Signed deviation: positive on left stance, negative on right.
pub fn predict_deviation(model: &ModelErrorGp, ctx: &StepContext) -> Result<f64> {
    Ok(ctx.stance.sign() * model.magnitude(ctx)?)
}

impl DeviationModel for ModelErrorGp {
    fn deviation(&self, ctx: &StepContext) -> f64 {
        predict_deviation(self, ctx).unwrap_or(0.0)
    }
}

/// World-frame offset of a lateral deviation at `waypoint`.
pub fn to_global(deviation: f64, waypoint: &Waypoint) -> Vector2 {
    unit(waypoint.theta + std::f64::consts::FRAC_PI_2) * deviation
}

/// The pose actually reached when executing a step planned to end at `planned`.
pub fn perturb_execution<R: Rng + ?Sized>(
    planned: &Waypoint,
    ctx: &StepContext,
    oracle: &PerturbationOracle,
    rng: &mut R,
) -> (Waypoint, Vector2) {
    let dev = ctx.stance.sign() * oracle.sample(ctx, rng);
    let off = to_global(dev, planned);
    (
        Waypoint {
            x: planned.x + off.x,
            y: planned.y + off.y,
            theta: planned.theta,
        },
        off,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutRow {
    pub context: StepContext,
    pub truth: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutReport {
    pub rows: Vec<HeldOutRow>,
    pub mean_abs_error: f64,
    pub mean_abs_truth: f64,
}

impl HeldOutReport {
    /// Mean truth magnitude over mean prediction error.
    pub fn ratio(&self) -> f64 {
        self.mean_abs_truth / self.mean_abs_error
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "d_c",
            "dtheta_c",
            "dz_c",
            "d_n",
            "dtheta_n",
            "dz_n",
            "stance",
            "truth",
            "predicted",
        ])?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.context.features().iter().map(|v| v.to_string()).collect();
            rec.push(format!("{:?}", r.context.stance).to_lowercase());
            rec.push(r.truth.to_string());
            rec.push(r.predicted.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Compares the model against the noise-free oracle on cell centres of a
/// grid with `points_per_axis` cells, which never coincide with training nodes.
pub fn held_out_report(
    model: &ModelErrorGp,
    oracle: &PerturbationOracle,
    ranges: &ContextRanges,
    points_per_axis: usize,
) -> Result<HeldOutReport> {
    let nodes: Vec<Vec<f64>> = (0..6)
        .map(|k| ranges.cell_centres(k, points_per_axis))
        .collect();
    let mut contexts = Vec::new();
    for_each_grid(&nodes, |f| {
        let stance = if contexts.len() % 2 == 0 {
            Stance::Left
        } else {
            Stance::Right
        };
        contexts.push(StepContext::from_features(f, stance));
    });
    let queries: Vec<Vec<f64>> = contexts
        .iter()
        .map(|c| ranges.normalize(&c.features()))
        .collect();
    let (means, _) = model.gp.predict_batch(&queries)?;
    let rows: Vec<HeldOutRow> = contexts
        .into_iter()
        .zip(means)
        .map(|(context, m)| HeldOutRow {
            truth: oracle.magnitude(&context),
            predicted: m.max(0.0),
            context,
        })
        .collect();
    let n = rows.len().max(1) as f64;
    Ok(HeldOutReport {
        mean_abs_error: rows
            .iter()
            .map(|r| (r.predicted - r.truth).abs())
            .sum::<f64>()
            / n,
        mean_abs_truth: rows.iter().map(|r| r.truth).sum::<f64>() / n,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(stance: Stance) -> StepContext {
        StepContext::from_features([0.4, 0.1, 0.02, 0.3, -0.2, 0.0], stance)
    }

    #[test]
    fn single_point_grid() {
        let g = GridSpec {
            points_per_axis: 1,
            ..Default::default()
        };
        let d =
            generate_training_set(&PerturbationOracle::calibrated(&g.ranges, 1e-3), &g, 1).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn three_per_axis_count() {
        let g = GridSpec {
            points_per_axis: 3,
            ..Default::default()
        };
        let d = generate_training_set(&PerturbationOracle::zero(), &g, 1).unwrap();
        assert_eq!(d.len(), 729);
        assert!(d.iter().all(|s| s.target == 0.0));
    }

    #[test]
    fn calibration_mean() {
        let r = ContextRanges::default();
        let o = PerturbationOracle::calibrated(&r, 0.0);
        let nodes: Vec<Vec<f64>> = (0..6).map(|k| r.cell_centres(k, 6)).collect();
        let mut s = 0.0;
        let mut n = 0.0;
        for_each_grid(&nodes, |f| {
            s += o.magnitude(&StepContext::from_features(f, Stance::Left));
            n += 1.0;
        });
        assert!((s / n - CALIBRATED_MEAN).abs() < 1e-12);
    }

    #[test]
    fn global_offsets() {
        let v = to_global(0.02, &Waypoint::new(0.0, 0.0, 0.0));
        assert!(v.x.abs() < 1e-15 && (v.y - 0.02).abs() < 1e-15);
        let w = to_global(0.02, &Waypoint::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        assert!((w.x + 0.02).abs() < 1e-15 && w.y.abs() < 1e-15);
        assert_eq!(to_global(0.0, &Waypoint::new(1.0, 2.0, 0.7)).norm(), 0.0);
    }

    #[test]
    fn fixed_oracle_shifts_left_step() {
        let mut rng = crate::rng::from_seed(3);
        let planned = Waypoint::new(1.0, 1.0, 0.0);
        let (real, _) = perturb_execution(
            &planned,
            &ctx(Stance::Left),
            &PerturbationOracle::constant(0.0175, 0.0),
            &mut rng,
        );
        assert_eq!(real.x, 1.0);
        assert!((real.y - 1.0175).abs() < 1e-15);
        let (same, off) = perturb_execution(
            &planned,
            &ctx(Stance::Right),
            &PerturbationOracle::zero(),
            &mut rng,
        );
        assert_eq!(same, planned);
        assert_eq!(off.norm(), 0.0);
    }

    #[test]
    fn oracle_is_antisymmetric() {
        let o = PerturbationOracle::calibrated(&ContextRanges::default(), 0.0);
        assert!(o.deviation(&ctx(Stance::Left)) > 0.0);
        assert_eq!(
            o.deviation(&ctx(Stance::Left)),
            -o.deviation(&ctx(Stance::Right))
        );
    }

    #[test]
    fn untrained_model_is_usage_error() {
        let m = ModelErrorGp::train(&[], ContextRanges::default(), &ModelErrorOptions::default())
            .unwrap();
        assert!(matches!(
            predict_deviation(&m, &ctx(Stance::Left)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn constant_targets_are_recovered() {
        let g = GridSpec {
            points_per_axis: 2,
            ..Default::default()
        };
        let data = generate_training_set(&PerturbationOracle::constant(0.02, 0.0), &g, 0).unwrap();
        let m = ModelErrorGp::train(&data, g.ranges, &ModelErrorOptions::default()).unwrap();
        let l = predict_deviation(&m, &ctx(Stance::Left)).unwrap();
        let r = predict_deviation(&m, &ctx(Stance::Right)).unwrap();
        assert!((l - 0.02).abs() < 1e-3);
        assert_eq!(l, -r);
    }
}
