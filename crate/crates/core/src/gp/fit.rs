//! Marginal-likelihood hyperparameter fitting.
//!
//! Positive hyperparameters are optimized in log space inside fixed box
//! bounds by a projected BFGS ascent on central finite-difference
//! gradients, restarted from log-uniform random points.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{gram, jittered_cholesky, rescale_spec, Inputs, TrainingSet};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, MainKernel, Stationary};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once one accepted step improves the objective by less than this.
    pub tol: f64,
    /// Central-difference step in log-parameter space.
    pub fd_step: f64,
    /// Run restarts on the rayon pool.
    pub parallel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 3,
            seed: 0,
            max_iter: 200,
            tol: 1e-6,
            fd_step: 1e-5,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Best spec, in target units.
    pub spec: KernelSpec,
    /// Objective of `spec` on the scaled targets.
    pub log_likelihood: f64,
    /// Final objective per restart; `None` when the restart never produced
    /// a finite value.
    pub restart_objectives: Vec<Option<f64>>,
    pub best_restart: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Amplitude,
    Lengthscale(usize),
    Alpha,
    Roughness,
    Noise,
}

/// Log-space parameterization of a kernel template on one training set.
///
/// Bounds (scaled-target units): `h ∈ [0.01, 10]`, `σ² ∈ [1e-6, 1]`,
/// `α ∈ [0.1, 100]`, `w ∈ [0.05, 10]`; a lengthscale on the time column
/// lies in `[1, 10·range]`, on any other column in
/// `[0.01·range, 10·range]` (range taken as 1 when the column is constant).
/// The period and Matérn ν are not fitted.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    template: KernelSpec,
    slots: Vec<Slot>,
    bounds: Vec<(f64, f64)>,
}

impl ParamSpace {
    pub fn new(template: &KernelSpec, train: &TrainingSet) -> Result<Self> {
        let x = train.inputs();
        let template = template.conformed_to(x.dim())?;
        let ranges: Vec<f64> = (0..x.dim())
            .map(|j| {
                let col = x.column(j);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .collect();
        let length_bounds = |col: usize| {
            let r = ranges[col];
            if col == 0 {
                (1.0, (10.0 * r).max(10.0))
            } else {
                let r = if r > 0.0 { r } else { 1.0 };
                (0.01 * r, 10.0 * r)
            }
        };

        let mut slots = Vec::new();
        let mut bounds = Vec::new();
        if let Some(main) = &template.main {
            slots.push(Slot::Amplitude);
            bounds.push((0.01, 10.0));
            let (n_len, offset) = match main {
                MainKernel::Stationary { lengthscales, .. } => (lengthscales.len(), 0),
                MainKernel::Periodic { lengthscales, .. } => (lengthscales.len(), 1),
            };
            for k in 0..n_len {
                slots.push(Slot::Lengthscale(k));
                bounds.push(length_bounds(k + offset));
            }
            if matches!(main.base(), Stationary::RationalQuadratic { .. }) {
                slots.push(Slot::Alpha);
                bounds.push((0.1, 100.0));
            }
            if matches!(main, MainKernel::Periodic { .. }) {
                slots.push(Slot::Roughness);
                bounds.push((0.05, 10.0));
            }
        }
        slots.push(Slot::Noise);
        bounds.push((1e-6, 1.0));
        let bounds = bounds.into_iter().map(|(a, b): (f64, f64)| (a.ln(), b.ln())).collect();
        Ok(ParamSpace {
            template,
            slots,
            bounds,
        })
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    /// Log-space box bounds, one pair per parameter.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn names(&self) -> Vec<String> {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Amplitude => "log_h".to_string(),
                Slot::Lengthscale(k) => format!("log_l{k}"),
                Slot::Alpha => "log_alpha".to_string(),
                Slot::Roughness => "log_w".to_string(),
                Slot::Noise => "log_sigma2".to_string(),
            })
            .collect()
    }

    /// Log parameters of a (scaled-space) spec with this template's shape.
    pub fn pack(&self, spec: &KernelSpec) -> Vec<f64> {
        self.slots
            .iter()
            .map(|slot| {
                let v = match (slot, &spec.main) {
                    (Slot::Noise, _) => spec.noise_variance,
                    (_, None) => unreachable!("slot without main kernel"),
                    (Slot::Amplitude, Some(m)) => m.amplitude(),
                    (Slot::Lengthscale(k), Some(m)) => match m {
                        MainKernel::Stationary { lengthscales, .. }
                        | MainKernel::Periodic { lengthscales, .. } => lengthscales[*k],
                    },
                    (Slot::Alpha, Some(m)) => match m.base() {
                        Stationary::RationalQuadratic { alpha } => alpha,
                        _ => unreachable!(),
                    },
                    (Slot::Roughness, Some(MainKernel::Periodic { roughness, .. })) => *roughness,
                    (Slot::Roughness, _) => unreachable!(),
                };
                v.ln()
            })
            .collect()
    }

    pub fn unpack(&self, theta: &[f64]) -> KernelSpec {
        let mut spec = self.template.clone();
        for (slot, &t) in self.slots.iter().zip(theta) {
            let v = t.exp();
            match slot {
                Slot::Noise => spec.noise_variance = v,
                other => {
                    let main = spec.main.as_mut().expect("slot without main kernel");
                    match (other, main) {
                        (Slot::Amplitude, MainKernel::Stationary { amplitude, .. })
                        | (Slot::Amplitude, MainKernel::Periodic { amplitude, .. }) => *amplitude = v,
                        (Slot::Lengthscale(k), MainKernel::Stationary { lengthscales, .. })
                        | (Slot::Lengthscale(k), MainKernel::Periodic { lengthscales, .. }) => {
                            lengthscales[*k] = v
                        }
                        (Slot::Alpha, MainKernel::Stationary { base, .. })
                        | (Slot::Alpha, MainKernel::Periodic { base, .. }) => {
                            *base = Stationary::RationalQuadratic { alpha: v }
                        }
                        (Slot::Roughness, MainKernel::Periodic { roughness, .. }) => *roughness = v,
                        _ => unreachable!(),
                    }
                }
            }
        }
        spec
    }

    /// Log marginal likelihood on the scaled targets at log-parameters
    /// `theta`; `-inf` if the Gram matrix cannot be factorized.
    pub fn objective(&self, train: &TrainingSet, theta: &[f64]) -> f64 {
        let y = train.scaled_targets();
        scaled_lml(train.inputs(), &y, &self.unpack(theta)).unwrap_or(f64::NEG_INFINITY)
    }

    fn clamp(&self, theta: &mut [f64]) {
        for (t, &(lo, hi)) in theta.iter_mut().zip(&self.bounds) {
            *t = t.clamp(lo, hi);
        }
    }
}

fn scaled_lml(x: &Inputs, y: &DVector<f64>, spec: &KernelSpec) -> Result<f64> {
    let k = gram(x, spec, true);
    let chol = jittered_cholesky(&k, spec)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let n = y.len() as f64;
    let v = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Conditioning {
            spec: spec.to_string(),
            jitter: 0.0,
        })
    }
}

/// Central-difference gradient, the one the optimizer uses.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Fourth-order five-point stencil, for checking [`fd_gradient`].
pub fn fd_gradient_five_point<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let at = |i: usize, dx: f64, probe: &mut Vec<f64>| {
        probe[i] = x[i] + dx;
        let v = f(probe);
        probe[i] = x[i];
        v
    };
    (0..x.len())
        .map(|i| {
            let p2 = at(i, 2.0 * step, &mut probe);
            let p1 = at(i, step, &mut probe);
            let m1 = at(i, -step, &mut probe);
            let m2 = at(i, -2.0 * step, &mut probe);
            (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step)
        })
        .collect()
}

struct Ascent {
    theta: Vec<f64>,
    value: f64,
}

fn projected_bfgs(
    space: &ParamSpace,
    train: &TrainingSet,
    start: Vec<f64>,
    opts: &FitOptions,
) -> Option<Ascent> {
    let y = train.scaled_targets();
    let x = train.inputs();
    let f = |t: &[f64]| scaled_lml(x, &y, &space.unpack(t)).unwrap_or(f64::NEG_INFINITY);
    let grad = |t: &[f64]| DVector::from_vec(fd_gradient(f, t, opts.fd_step));

    let n = space.dim();
    let mut theta = start;
    space.clamp(&mut theta);
    let mut value = f(&theta);
    if !value.is_finite() {
        return None;
    }
    let mut g = grad(&theta);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let eps = 1e-12;

    for _ in 0..opts.max_iter {
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        // Components pinned at a bound by the gradient do not move.
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let (lo, hi) = space.bounds[i];
                !((theta[i] <= lo + eps && g[i] < 0.0) || (theta[i] >= hi - eps && g[i] > 0.0))
            })
            .collect();
        let g_free = DVector::from_fn(n, |i, _| if free[i] { g[i] } else { 0.0 });
        if g_free.amax() < 1e-10 {
            break;
        }
        let mut dir = &h_inv * &g_free;
        for i in 0..n {
            if !free[i] {
                dir[i] = 0.0;
            }
        }
        if dir.dot(&g_free) <= 0.0 {
            h_inv = DMatrix::identity(n, n);
            dir = g_free.clone();
        }
        let longest = dir.amax();
        if longest > 2.0 {
            dir *= 2.0 / longest;
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-10 {
            let mut cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + step * d).collect();
            space.clamp(&mut cand);
            let moved: f64 = cand.iter().zip(&theta).zip(g.iter()).map(|((c, t), gi)| (c - t) * gi).sum();
            let v = f(&cand);
            if v.is_finite() && v >= value + 1e-4 * moved && v > value {
                accepted = Some((cand, v));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, v)) = accepted else { break };

        let g_new = grad(&cand);
        let s = DVector::from_iterator(n, cand.iter().zip(&theta).map(|(c, t)| c - t));
        // Curvature pair for minimizing -f.
        let yv = -(&g_new - &g);
        let sy = s.dot(&yv);
        if sy > 1e-12 && g_new.iter().all(|v| v.is_finite()) {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * yv.transpose();
            let right = &eye - rho * &yv * s.transpose();
            h_inv = left * &h_inv * right + rho * &s * s.transpose();
        }
        let improvement = v - value;
        theta = cand;
        value = v;
        g = g_new;
        if improvement < opts.tol {
            break;
        }
    }
    Some(Ascent { theta, value })
}

/// Maximize the log marginal likelihood of `template`'s shape on `train`.
///
/// Deterministic for a given `opts.seed`: restart starting points are
/// drawn up front in order, and the best objective wins with ties going
/// to the lowest restart index.
pub fn fit_hyperparameters(
    train: &TrainingSet,
    template: &KernelSpec,
    opts: &FitOptions,
) -> Result<FitOutcome> {
    if opts.restarts == 0 {
        return Err(Error::Fit("restarts must be >= 1".into()));
    }
    let space = ParamSpace::new(template, train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|_| space.bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect())
        .collect();

    let run = |start: Vec<f64>| projected_bfgs(&space, train, start, opts);
    let results: Vec<Option<Ascent>> = if opts.parallel {
        starts.into_par_iter().map(run).collect()
    } else {
        starts.into_iter().map(run).collect()
    };

    let mut best: Option<(usize, &Ascent)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some(a) = r {
            if best.is_none_or(|(_, b)| a.value > b.value) {
                best = Some((i, a));
            }
        }
    }
    let Some((best_restart, ascent)) = best else {
        return Err(Error::Fit(format!(
            "no restart of `{template}` produced a finite objective"
        )));
    };
    let scaled = space.unpack(&ascent.theta);
    Ok(FitOutcome {
        spec: rescale_spec(&scaled, 1.0 / train.target_scale()),
        log_likelihood: ascent.value,
        restart_objectives: results.iter().map(|r| r.as_ref().map(|a| a.value)).collect(),
        best_restart,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::log_marginal_likelihood;
    use crate::kernels::MaternNu;

    fn grid_set(n: usize, f: impl Fn(f64) -> f64) -> TrainingSet {
        let rows: Vec<[f64; 1]> = (0..n).map(|i| [i as f64]).collect();
        let y = (0..n).map(|i| f(i as f64)).collect();
        TrainingSet::new(Inputs::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn pack_unpack_round_trip() {
        let rows: Vec<[f64; 2]> = (0..5).map(|i| [i as f64 * 10.0, 0.1 * i as f64]).collect();
        let train = TrainingSet::new(Inputs::from_rows(&rows).unwrap(), vec![1.0, 2.0, 0.0, 3.0, 1.0]).unwrap();
        let spec = KernelSpec::periodic(Stationary::RationalQuadratic { alpha: 2.0 }, 1.5, 0.3, 288.0, vec![0.2], 0.01);
        let space = ParamSpace::new(&spec, &train).unwrap();
        assert_eq!(space.names(), ["log_h", "log_l0", "log_alpha", "log_w", "log_sigma2"]);
        let theta = space.pack(&spec);
        let again = space.pack(&space.unpack(&theta));
        for (a, b) in theta.iter().zip(&again) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(space.unpack(&theta).family(), spec.family());
    }

    #[test]
    fn objective_matches_public_lml() {
        let train = grid_set(12, |x| (x / 3.0).sin() * 50.0 + 200.0);
        let spec = KernelSpec::stationary(Stationary::Matern(MaternNu::FiveHalves), 40.0, vec![3.0], 4.0);
        let space = ParamSpace::new(&spec, &train).unwrap();
        let scaled = rescale_spec(&spec, train.target_scale());
        let a = space.objective(&train, &space.pack(&scaled));
        let b = log_marginal_likelihood(&train, &spec).unwrap();
        assert!((a - b).abs() < 1e-9 * b.abs());
    }

    #[test]
    fn more_restarts_never_worse() {
        let train = grid_set(30, |x| (x / 2.0).sin() + 0.5 * (x / 0.7).cos());
        let tmpl: KernelSpec = "rq() + whitenoise()".parse().unwrap();
        let one = fit_hyperparameters(&train, &tmpl, &FitOptions { restarts: 1, seed: 5, ..Default::default() }).unwrap();
        let five = fit_hyperparameters(&train, &tmpl, &FitOptions { restarts: 5, seed: 5, ..Default::default() }).unwrap();
        assert!(five.log_likelihood >= one.log_likelihood);
        assert_eq!(one.restart_objectives[0], five.restart_objectives[0]);
    }

    #[test]
    fn constant_zero_targets_drive_noise_down() {
        let train = grid_set(20, |_| 0.0);
        let tmpl: KernelSpec = "se() + whitenoise()".parse().unwrap();
        let out = fit_hyperparameters(&train, &tmpl, &FitOptions { restarts: 2, ..Default::default() }).unwrap();
        assert!(out.spec.noise_variance < 1e-4 * train.target_scale().powi(2));
    }

    #[test]
    fn fit_is_deterministic_and_parallel_agnostic() {
        let train = grid_set(25, |x| (x / 4.0).sin() * 3.0);
        let tmpl: KernelSpec = "matern32() + whitenoise()".parse().unwrap();
        let opts = FitOptions { restarts: 3, seed: 11, ..Default::default() };
        let a = fit_hyperparameters(&train, &tmpl, &opts).unwrap();
        let b = fit_hyperparameters(&train, &tmpl, &FitOptions { parallel: false, ..opts }).unwrap();
        assert_eq!(a.spec, b.spec);
        assert_eq!(a.best_restart, b.best_restart);
    }

    #[test]
    fn zero_restarts_rejected() {
        let train = grid_set(3, |x| x);
        let tmpl: KernelSpec = "se()".parse().unwrap();
        assert!(fit_hyperparameters(&train, &tmpl, &FitOptions { restarts: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn central_and_five_point_agree_on_smooth_function() {
        let f = |x: &[f64]| x[0].sin() * x[1].exp();
        let x = [0.3, -0.2];
        let a = fd_gradient(f, &x, 1e-5);
        let b = fd_gradient_five_point(f, &x, 1e-3);
        assert!((a[0] - 0.3f64.cos() * (-0.2f64).exp()).abs() < 1e-9);
        assert!((a[1] - b[1]).abs() < 1e-9);
    }
}
