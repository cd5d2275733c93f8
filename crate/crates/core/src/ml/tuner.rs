//! Bayesian hyperparameter search with a Gaussian-process surrogate.
//!
//! Parameters are mapped to the unit cube. The surrogate uses a
//! squared-exponential kernel with one length scale per dimension, chosen
//! by coordinate ascent of the log marginal likelihood over a fixed grid,
//! on standardized objective values with a `1e-6` noise floor. After a
//! shifted Halton initial design of `max(5, dim + 1)` points, each trial
//! maximizes expected improvement over 1024 seeded uniform candidates.

use std::collections::HashMap;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::dataset::{stratified_folds, LabeledDataset};
use super::forest::{train_forest_with, ForestParams};
use crate::error::{ensure, Error, Result};
use crate::exec::Execution;
use crate::seeds;

const NOISE_FLOOR: f64 = 1e-6;
const LENGTH_SCALE_GRID: [f64; 7] = [0.05, 0.1, 0.2, 0.35, 0.6, 1.0, 2.0];
const CANDIDATES: usize = 1024;
const EI_XI: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub integer: bool,
}

impl ParamRange {
    pub fn integer(name: &str, low: i64, high: i64) -> Self {
        Self {
            name: name.into(),
            low: low as f64,
            high: high as f64,
            integer: true,
        }
    }

    pub fn real(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            low,
            high,
            integer: false,
        }
    }

    fn decode(&self, u: f64) -> f64 {
        let v = self.low + u.clamp(0.0, 1.0) * (self.high - self.low);
        if self.integer {
            v.round().clamp(self.low, self.high)
        } else {
            v
        }
    }

    fn encode(&self, v: f64) -> f64 {
        if self.high > self.low {
            (v - self.low) / (self.high - self.low)
        } else {
            0.5
        }
    }
}

/// Search space and budget for forest tuning. The objective is mean
/// stratified `cv_folds`-fold accuracy on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperparamSpace {
    pub params: Vec<ParamRange>,
    pub budget: usize,
    pub cv_folds: usize,
}

impl HyperparamSpace {
    /// `n_trees` in 10..=300, `max_depth` in 2..=32, `min_samples_leaf` in
    /// 1..=16, `features_per_split` in 1..=S.
    pub fn forest(n_features: usize, budget: usize) -> Self {
        Self {
            params: vec![
                ParamRange::integer("n_trees", 10, 300),
                ParamRange::integer("max_depth", 2, 32),
                ParamRange::integer("min_samples_leaf", 1, 16),
                ParamRange::integer("features_per_split", 1, n_features.max(1) as i64),
            ],
            budget,
            cv_folds: 5,
        }
    }

    pub fn forest_params(&self, point: &[f64]) -> ForestParams {
        let mut p = ForestParams::default();
        for (range, &v) in self.params.iter().zip(point) {
            match range.name.as_str() {
                "n_trees" => p.n_trees = v as usize,
                "max_depth" => p.max_depth = v as usize,
                "min_samples_leaf" => p.min_samples_leaf = v as usize,
                "features_per_split" => p.features_per_split = Some(v as usize),
                _ => {}
            }
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    /// Decoded parameter values, in space order.
    pub params: Vec<f64>,
    pub objective: f64,
    /// Part of the quasi-random initial design.
    pub initial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub trials: Vec<Trial>,
    pub best: usize,
    /// Every trial returned the same objective value.
    pub flat: bool,
}

impl TuningResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }

    /// CSV trial log: `trial,initial,<param names...>,objective`.
    pub fn log_csv(&self, params: &[ParamRange]) -> String {
        let mut s = String::from("trial,initial");
        for p in params {
            s.push(',');
            s.push_str(&p.name);
        }
        s.push_str(",objective\n");
        for t in &self.trials {
            s.push_str(&format!("{},{}", t.index, t.initial));
            for v in &t.params {
                s.push_str(&format!(",{v:?}"));
            }
            s.push_str(&format!(",{:?}\n", t.objective));
        }
        s
    }
}

fn kernel(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    (-0.5 * d2).exp()
}

/// Zero-mean GP regression on standardized targets.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    lengthscales: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_std: f64,
    log_ml: f64,
}

impl GaussianProcess {
    pub fn fit(x: &[Vec<f64>], y: &[f64], lengthscales: &[f64], noise: f64) -> Result<Self> {
        ensure!(
            !x.is_empty() && x.len() == y.len(),
            "GP needs matching nonempty inputs"
        );
        let n = x.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var > 0.0 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));

        let mut jitter = noise.max(NOISE_FLOOR);
        let chol = loop {
            let k = DMatrix::from_fn(n, n, |i, j| {
                kernel(&x[i], &x[j], lengthscales) + if i == j { jitter } else { 0.0 }
            });
            if let Some(c) = Cholesky::new(k) {
                break c;
            }
            jitter *= 10.0;
            ensure!(jitter < 1.0, "GP covariance is not positive definite");
        };
        let alpha = chol.solve(&ys);
        let log_det: f64 = chol
            .l_dirty()
            .diagonal()
            .iter()
            .take(n)
            .map(|d| d.ln())
            .sum();
        let log_ml =
            -0.5 * ys.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            x: x.to_vec(),
            lengthscales: lengthscales.to_vec(),
            chol,
            alpha,
            y_mean,
            y_std,
            log_ml,
        })
    }

    /// Fits with length scales picked from a grid by coordinate ascent of
    /// the marginal likelihood.
    pub fn fit_marginal_likelihood(x: &[Vec<f64>], y: &[f64], noise: f64) -> Result<Self> {
        let dim = x.first().map_or(0, Vec::len);
        let mut scales = vec![0.35; dim];
        let mut best = Self::fit(x, y, &scales, noise)?;
        for _ in 0..3 {
            let mut changed = false;
            for d in 0..dim {
                for &l in &LENGTH_SCALE_GRID {
                    if l == scales[d] {
                        continue;
                    }
                    let mut trial = scales.clone();
                    trial[d] = l;
                    let gp = Self::fit(x, y, &trial, noise)?;
                    if gp.log_ml > best.log_ml {
                        best = gp;
                        scales = trial;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Ok(best)
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_ml
    }

    /// Posterior mean and variance in the original objective units.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| kernel(xi, q, &self.lengthscales)),
        );
        let mean = ks.dot(&self.alpha);
        let v = self.chol.solve(&ks);
        let var = (1.0 - ks.dot(&v)).max(0.0);
        (
            self.y_mean + self.y_std * mean,
            var * self.y_std * self.y_std,
        )
    }
}

fn expected_improvement(mean: f64, var: f64, best: f64, normal: &Normal) -> f64 {
    let sd = var.sqrt();
    let gain = mean - best - EI_XI;
    if sd < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    gain * normal.cdf(z) + sd * normal.pdf(z)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Maximizes `objective` over the box `ranges`.
pub fn bayesian_optimize<F>(
    ranges: &[ParamRange],
    budget: usize,
    seed: u64,
    objective: F,
) -> Result<TuningResult>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = ranges.len();
    ensure!(dim >= 1, "search space has no parameters");
    ensure!(
        dim <= PRIMES.len(),
        "at most {} parameters are supported",
        PRIMES.len()
    );
    for r in ranges {
        ensure!(r.low <= r.high, "empty range for `{}`", r.name);
    }
    ensure!(
        budget >= 2 && budget >= dim + 2,
        "budget {budget} is below the minimum of {} evaluations",
        (dim + 2).max(2)
    );
    let n_initial = (dim + 1).max(5).min(budget);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");

    let mut shift_rng = seeds::substream(seed, seeds::TUNER, 0);
    let shift: Vec<f64> = (0..dim).map(|_| shift_rng.random()).collect();

    let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut trials: Vec<Trial> = Vec::with_capacity(budget);
    let mut encoded: Vec<Vec<f64>> = Vec::with_capacity(budget);

    for t in 0..budget {
        let initial = t < n_initial;
        let u: Vec<f64> = if initial {
            (0..dim)
                .map(|d| (radical_inverse(t as u64 + 1, PRIMES[d]) + shift[d]).fract())
                .collect()
        } else {
            let ys: Vec<f64> = trials.iter().map(|t| t.objective).collect();
            let mut rng = seeds::substream(seed, seeds::TUNER, t as u64 + 1);
            let candidates: Vec<Vec<f64>> = (0..CANDIDATES)
                .map(|_| (0..dim).map(|_| rng.random()).collect())
                .collect();
            let flat = ys.iter().all(|&y| y == ys[0]);
            if flat {
                candidates[0].clone()
            } else {
                let gp = GaussianProcess::fit_marginal_likelihood(&encoded, &ys, NOISE_FLOOR)?;
                let incumbent = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut best = (f64::NEG_INFINITY, 0);
                for (i, c) in candidates.iter().enumerate() {
                    let (m, v) = gp.predict(c);
                    let ei = expected_improvement(m, v, incumbent, &normal);
                    if ei > best.0 {
                        best = (ei, i);
                    }
                }
                candidates[best.1].clone()
            }
        };
        let params: Vec<f64> = ranges.iter().zip(&u).map(|(r, &v)| r.decode(v)).collect();
        let key: Vec<u64> = params.iter().map(|v| v.to_bits()).collect();
        let value = *cache.entry(key).or_insert_with(|| objective(&params));
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "objective returned {value} at {params:?}"
            )));
        }
        encoded.push(
            ranges
                .iter()
                .zip(&params)
                .map(|(r, &v)| r.encode(v))
                .collect(),
        );
        trials.push(Trial {
            index: t,
            params,
            objective: value,
            initial,
        });
    }

    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.objective > trials[best].objective {
            best = i;
        }
    }
    let flat = trials.iter().all(|t| t.objective == trials[0].objective);
    if flat {
        warn!(
            "all {} trials returned the same objective; keeping the first",
            trials.len()
        );
    }
    Ok(TuningResult { trials, best, flat })
}

/// Mean accuracy over stratified folds. `folds[i]` is the fold of row `i`.
pub fn cross_val_accuracy(
    data: &LabeledDataset,
    params: &ForestParams,
    folds: &[usize],
    n_folds: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    let accuracies = exec.map_range(n_folds, |f| -> Result<f64> {
        let train_rows: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
        let test_rows: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == f).collect();
        if test_rows.is_empty() {
            return Ok(f64::NAN);
        }
        let model = train_forest_with(
            &data.subset(&train_rows),
            params,
            seeds::derive(seed, seeds::CV_FOREST, f as u64),
            exec,
        )?;
        let correct = test_rows
            .iter()
            .filter(|&&i| {
                model
                    .predict_row(&data.features[i])
                    .map(|p| p.label == data.labels[i])
                    .unwrap_or(false)
            })
            .count();
        Ok(correct as f64 / test_rows.len() as f64)
    });
    let accuracies: Vec<f64> = accuracies.into_iter().collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = accuracies.into_iter().filter(|a| !a.is_nan()).collect();
    ensure!(!defined.is_empty(), "no non-empty cross-validation folds");
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Tunes forest hyperparameters on `train`; returns the best parameters
/// found and the full trial log.
pub fn tune_bayesian(
    train: &LabeledDataset,
    space: &HyperparamSpace,
    seed: u64,
    exec: Execution,
) -> Result<(ForestParams, TuningResult)> {
    train.validate()?;
    ensure!(
        space.cv_folds >= 2,
        "need at least 2 cross-validation folds"
    );
    ensure!(
        train.len() >= space.cv_folds,
        "{} training rows cannot fill {} folds",
        train.len(),
        space.cv_folds
    );
    let folds = stratified_folds(train, space.cv_folds, seeds::derive(seed, seeds::FOLDS, 0))?;
    let failure = std::sync::Mutex::new(None);
    let result = bayesian_optimize(&space.params, space.budget, seed, |point| {
        let params = space.forest_params(point);
        match cross_val_accuracy(train, &params, &folds, space.cv_folds, seed, exec) {
            Ok(acc) => acc,
            Err(e) => {
                failure.lock().expect("poisoned").get_or_insert(e);
                0.0
            }
        }
    })?;
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok((space.forest_params(&result.best_trial().params), result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMeta;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gp_interpolates_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let gp = GaussianProcess::fit_marginal_likelihood(&x, &y, NOISE_FLOOR).unwrap();
        for (p, v) in x.iter().zip(&y) {
            let (m, var) = gp.predict(p);
            assert!((m - v).abs() < 1e-4, "{m} vs {v}");
            assert!(var < 1e-4);
        }
        let (_, far) = gp.predict(&[5.0, 5.0]);
        assert!(far > 0.5 * gp.y_std * gp.y_std);
    }

    #[test]
    fn finds_concave_optimum() {
        // dense-grid oracle for the synthetic objective
        let f = |x: f64| -(x - 0.63).powi(2) + 0.1 * (x * 3.0).cos();
        let grid_best = (0..=100_000)
            .map(|i| i as f64 / 100_000.0 * 10.0 - 5.0)
            .max_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        let range = [ParamRange::real("x", -5.0, 5.0)];
        let r = bayesian_optimize(&range, 20, 3, |p| f(p[0])).unwrap();
        let found = r.best_trial().params[0];
        // 10% of the search width
        assert!(
            (found - grid_best).abs() <= 1.0,
            "found {found}, grid {grid_best}"
        );
        assert_eq!(r.trials.len(), 20);
        assert_eq!(r.trials.iter().filter(|t| t.initial).count(), 5);
    }

    #[test]
    fn degenerate_budget_returns_best_initial() {
        let range = [ParamRange::real("x", 0.0, 1.0)];
        let r = bayesian_optimize(&range, 5, 9, |p| -(p[0] - 0.5).abs()).unwrap();
        assert!(r.trials.iter().all(|t| t.initial));
        let best = r
            .trials
            .iter()
            .map(|t| t.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_trial().objective, best);
    }

    #[test]
    fn flat_objective_keeps_first_trial() {
        let range = [
            ParamRange::real("x", 0.0, 1.0),
            ParamRange::integer("n", 1, 4),
        ];
        let r = bayesian_optimize(&range, 8, 0, |_| 0.25).unwrap();
        assert!(r.flat);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn budget_and_range_checks() {
        let ranges = HyperparamSpace::forest(8, 5).params;
        assert!(bayesian_optimize(&ranges, 5, 0, |_| 0.0).is_err());
        assert!(bayesian_optimize(&[ParamRange::real("x", 1.0, 0.0)], 10, 0, |_| 0.0).is_err());
    }

    #[test]
    fn repeatable_trial_log() {
        let ranges = vec![
            ParamRange::real("a", 0.0, 1.0),
            ParamRange::integer("b", 0, 10),
        ];
        let f = |p: &[f64]| -(p[0] - 0.2).powi(2) - (p[1] - 7.0).powi(2) / 100.0;
        let a = bayesian_optimize(&ranges, 12, 77, f).unwrap();
        let b = bayesian_optimize(&ranges, 12, 77, f).unwrap();
        assert_eq!(a.log_csv(&ranges), b.log_csv(&ranges));
        assert!(a.trials.iter().all(|t| t.params[1].fract() == 0.0));
    }

    fn blobs() -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let meta = FeatureMeta {
            level: 1,
            peaks: 2,
            wavelet: "db1".into(),
            sample_rate: 1.0,
            window: 2,
        };
        let mut f = Vec::new();
        let mut l = Vec::new();
        for i in 0..60 {
            let c = i % 2;
            f.push(
                (0..4)
                    .map(|_| rng.random::<f64>() + c as f64 * 0.8)
                    .collect(),
            );
            l.push(format!("c{c}"));
        }
        LabeledDataset::new(f, l, meta).unwrap()
    }

    #[test]
    fn forest_tuning_is_deterministic() {
        let ds = blobs();
        let mut space = HyperparamSpace::forest(4, 6);
        space.params[0] = ParamRange::integer("n_trees", 5, 20);
        let (pa, ra) = tune_bayesian(&ds, &space, 4, Execution::Parallel).unwrap();
        let (pb, rb) = tune_bayesian(&ds, &space, 4, Execution::Sequential).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ra, rb);
        assert!(ra.best_trial().objective > 0.7);
        assert!(pa.features_per_split.unwrap() <= 4);
    }
}
