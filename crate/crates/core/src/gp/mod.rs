//! Exact Gaussian-process inference.
//!
//! Targets are centered on their mean and divided by their (population)
//! standard deviation before any linear algebra; kernel specs handed in and
//! out are always in target units (watts). All solves go through a Cholesky
//! factor of the training Gram matrix with escalating diagonal jitter.

mod fit;

pub use fit::{
    fd_gradient, fd_gradient_five_point, fit_hyperparameters, FitOptions, FitOutcome, ParamSpace,
};

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{eval_white_noise, KernelSpec, MainKernel};

/// First jitter factor (relative to the mean Gram diagonal).
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter factor tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Row-major `n × d` input points.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    dim: usize,
    data: Vec<f64>,
}

impl Inputs {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("input dimension must be >= 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(Inputs { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Inputs {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(1, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Inputs::new(dim, data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Keep only the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Inputs {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Inputs {
            dim: self.dim,
            data,
        }
    }
}

/// Observed inputs and targets for one system.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Inputs,
    targets: DVector<f64>,
    target_mean: f64,
    target_scale: f64,
}

impl TrainingSet {
    /// Validates the data and records the centering constants.
    ///
    /// `target_scale` is the population standard deviation of the targets,
    /// or 1 when the targets are (numerically) constant.
    pub fn new(inputs: Inputs, targets: Vec<f64>) -> Result<Self> {
        let n = inputs.len();
        if n == 0 {
            return Err(Error::InvalidTrainingSet("no training points".into()));
        }
        if targets.len() != n {
            return Err(Error::InvalidTrainingSet(format!(
                "{} targets for {n} input rows",
                targets.len()
            )));
        }
        if let Some(k) = inputs.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTrainingSet(format!(
                "non-finite input in row {}",
                k / inputs.dim()
            )));
        }
        if let Some(k) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTrainingSet(format!("non-finite target in row {k}")));
        }
        for i in 1..n {
            if inputs.row(i)[0] <= inputs.row(i - 1)[0] {
                return Err(Error::InvalidTrainingSet(format!(
                    "time index not strictly increasing at row {i}"
                )));
            }
        }
        let mean = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
        Ok(TrainingSet {
            inputs,
            targets: DVector::from_vec(targets),
            target_mean: mean,
            target_scale: scale,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &Inputs {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    pub fn scaled_targets(&self) -> DVector<f64> {
        self.targets
            .map(|y| (y - self.target_mean) / self.target_scale)
    }

    /// Every `stride`-th row, always keeping the last one.
    pub fn thinned(&self, stride: usize) -> Result<TrainingSet> {
        let n = self.len();
        if stride <= 1 {
            return Ok(self.clone());
        }
        let mut idx: Vec<usize> = (0..n).rev().step_by(stride).collect();
        idx.reverse();
        let targets = idx.iter().map(|&i| self.targets[i]).collect();
        TrainingSet::new(self.inputs.select(&idx), targets)
    }
}

/// Predictive mean and covariance in target units.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPrediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl PosteriorPrediction {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Copy of `spec` expressed for targets divided by `scale`.
pub fn rescale_spec(spec: &KernelSpec, scale: f64) -> KernelSpec {
    let mut out = spec.clone();
    out.noise_variance /= scale * scale;
    if let Some(main) = &mut out.main {
        match main {
            MainKernel::Stationary { amplitude, .. } | MainKernel::Periodic { amplitude, .. } => {
                *amplitude /= scale
            }
        }
    }
    out
}

/// Pairwise covariance between two point lists.
///
/// The white-noise term is added only when `with_noise` is set and `a`
/// and `b` hold the same sample list, i.e. on the diagonal of a training
/// Gram matrix.
pub fn build_covariance(
    a: &Inputs,
    b: &Inputs,
    spec: &KernelSpec,
    with_noise: bool,
) -> Result<DMatrix<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    spec.check_dim(a.dim())?;
    let same = with_noise && a == b;
    if same || std::ptr::eq(a, b) {
        return Ok(gram(a, spec, same));
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        spec.eval_main(a.row(i), b.row(j))
    }))
}

fn gram(x: &Inputs, spec: &KernelSpec, noise: bool) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let mut v = spec.eval_main(x.row(i), x.row(j));
            if noise {
                v += eval_white_noise(i, j, spec.noise_variance);
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factor of `k + ε·mean(diag)·I`, escalating ε by ×10 from
/// [`JITTER_START`] to [`JITTER_MAX`].
pub(crate) fn jittered_cholesky(
    k: &DMatrix<f64>,
    spec: &KernelSpec,
) -> Result<Cholesky<f64, Dyn>> {
    let n = k.nrows();
    let mean_diag = if n == 0 { 0.0 } else { k.trace() / n as f64 };
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut eps = JITTER_START;
    loop {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += eps * base;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok(ch);
        }
        if eps >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(Error::Conditioning {
                spec: spec.to_string(),
                jitter: eps,
            });
        }
        eps *= 10.0;
    }
}

/// A GP conditioned on a training set, ready for repeated prediction.
#[derive(Debug, Clone)]
pub struct GpModel {
    train: TrainingSet,
    spec: KernelSpec,
    scaled_spec: KernelSpec,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y: DVector<f64>,
}

impl GpModel {
    pub fn new(train: TrainingSet, spec: &KernelSpec) -> Result<Self> {
        spec.validate()?;
        spec.check_dim(train.inputs().dim())?;
        let scaled_spec = rescale_spec(spec, train.target_scale());
        let k = gram(train.inputs(), &scaled_spec, true);
        let chol = jittered_cholesky(&k, spec)?;
        let y = train.scaled_targets();
        let alpha = chol.solve(&y);
        Ok(GpModel {
            train,
            spec: spec.clone(),
            scaled_spec,
            chol,
            alpha,
            y,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.train
    }

    /// Posterior of the latent function at `query`.
    pub fn predict(&self, query: &Inputs) -> Result<PosteriorPrediction> {
        let x = self.train.inputs();
        let k_star = build_covariance(query, x, &self.scaled_spec, false)?;
        let k_ss = build_covariance(query, query, &self.scaled_spec, false)?;
        let mean_s = &k_star * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star.transpose())
            .ok_or_else(|| Error::Conditioning {
                spec: self.spec.to_string(),
                jitter: JITTER_MAX,
            })?;
        let cov_s = k_ss - v.transpose() * v;
        let (mu, s) = (self.train.target_mean(), self.train.target_scale());
        let mean = mean_s.map(|m| mu + s * m);
        Ok(PosteriorPrediction {
            mean,
            cov: finish_cov(cov_s * (s * s)),
        })
    }

    /// `-½ yᵀK⁻¹y - ½ log|K| - (n/2) log 2π` on the scaled targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        let fit = self.y.dot(&self.alpha);
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        -0.5 * fit - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Symmetrize and clamp tiny negative variances to zero.
fn finish_cov(mut c: DMatrix<f64>) -> DMatrix<f64> {
    let m = c.nrows();
    for i in 0..m {
        for j in (i + 1)..m {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    for i in 0..m {
        if c[(i, i)] < 0.0 {
            c[(i, i)] = 0.0;
        }
    }
    c
}

/// Posterior mean and covariance at `query` given `train`.
pub fn posterior(train: &TrainingSet, query: &Inputs, spec: &KernelSpec) -> Result<PosteriorPrediction> {
    GpModel::new(train.clone(), spec)?.predict(query)
}

/// The no-data posterior: constant mean `mean`, covariance `K(X*, X*)`.
pub fn prior_prediction(query: &Inputs, spec: &KernelSpec, mean: f64) -> Result<PosteriorPrediction> {
    let cov = build_covariance(query, query, spec, false)?;
    Ok(PosteriorPrediction {
        mean: DVector::from_element(query.len(), mean),
        cov,
    })
}

pub fn log_marginal_likelihood(train: &TrainingSet, spec: &KernelSpec) -> Result<f64> {
    Ok(GpModel::new(train.clone(), spec)?.log_marginal_likelihood())
}

/// `count` draws from `N(0, K(X, X))`, one per row of the result.
///
/// Without white noise, identical input rows are the same random variable
/// and receive identical values.
pub fn sample_prior(
    query: &Inputs,
    spec: &KernelSpec,
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    spec.validate()?;
    spec.check_dim(query.dim())?;
    let (unique, map) = if spec.noise_variance == 0.0 {
        dedupe_rows(query)
    } else {
        (query.clone(), (0..query.len()).collect())
    };
    let k = gram(&unique, spec, true);
    let chol = jittered_cholesky(&k, spec)?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = unique.len();
    let mut out = DMatrix::zeros(count, query.len());
    let mut z = DVector::zeros(u);
    for draw in 0..count {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let f = &l * &z;
        for (col, &src) in map.iter().enumerate() {
            out[(draw, col)] = f[src];
        }
    }
    Ok(out)
}

fn dedupe_rows(x: &Inputs) -> (Inputs, Vec<usize>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut unique = Inputs::empty(x.dim());
    let mut map = Vec::with_capacity(x.len());
    for row in x.rows() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let next = seen.len();
        let idx = *seen.entry(key).or_insert_with(|| {
            unique.data.extend_from_slice(row);
            next
        });
        map.push(idx);
    }
    (unique, map)
}
