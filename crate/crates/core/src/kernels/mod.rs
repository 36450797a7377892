//! Covariance kernels.
//!
//! A [`KernelSpec`] is one main kernel (a stationary kernel, or a periodic
//! warp around a stationary base) plus an optional white-noise term. Inputs
//! are rows of `[time_index, hrv, ...]`. Stationary kernels see the joint
//! per-dimension scaled distance over all columns. A periodic kernel warps
//! column 0 only and multiplies by its base kernel over the remaining
//! columns, so `Periodic.lengthscales` has one entry per non-time column.
//!
//! The textual form is documented in [`syntax`].

pub mod syntax;

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// One solar day in 5-minute steps.
pub const DAY_STEPS: f64 = 288.0;

/// Smoothness of a Matérn kernel. Only the half-integer closed forms exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn from_value(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(MaternNu::Half)
        } else if nu == 1.5 {
            Ok(MaternNu::ThreeHalves)
        } else if nu == 2.5 {
            Ok(MaternNu::FiveHalves)
        } else {
            Err(Error::InvalidKernel(format!(
                "Matérn nu must be one of 1/2, 3/2, 5/2, got {nu}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

/// Stationary kernel families; the only legal periodic bases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stationary {
    SquaredExponential,
    RationalQuadratic { alpha: f64 },
    Matern(MaternNu),
}

impl Stationary {
    /// Unit-amplitude kernel as a function of the scaled squared distance.
    #[inline]
    pub fn radial(&self, r2: f64) -> f64 {
        match *self {
            Stationary::SquaredExponential => eval_se(r2, 1.0),
            Stationary::RationalQuadratic { alpha } => eval_rq(r2, 1.0, alpha),
            Stationary::Matern(nu) => eval_matern(r2.sqrt(), 1.0, nu),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Stationary::SquaredExponential => Family::SquaredExponential,
            Stationary::RationalQuadratic { .. } => Family::RationalQuadratic,
            Stationary::Matern(_) => Family::Matern,
        }
    }

    /// Human-facing name as used in report tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            Stationary::SquaredExponential => "Squared Exponential",
            Stationary::RationalQuadratic { .. } => "Rational Quadratic",
            Stationary::Matern(MaternNu::Half) => "Matern12",
            Stationary::Matern(MaternNu::ThreeHalves) => "Matern32",
            Stationary::Matern(MaternNu::FiveHalves) => "Matern52",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    WhiteNoise,
    SquaredExponential,
    RationalQuadratic,
    Matern,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MainKernel {
    Stationary {
        base: Stationary,
        amplitude: f64,
        lengthscales: Vec<f64>,
    },
    Periodic {
        base: Stationary,
        amplitude: f64,
        roughness: f64,
        period: f64,
        /// Lengthscales of the base kernel over the non-time columns.
        lengthscales: Vec<f64>,
    },
}

impl MainKernel {
    pub fn amplitude(&self) -> f64 {
        match self {
            MainKernel::Stationary { amplitude, .. } | MainKernel::Periodic { amplitude, .. } => {
                *amplitude
            }
        }
    }

    pub fn base(&self) -> Stationary {
        match self {
            MainKernel::Stationary { base, .. } | MainKernel::Periodic { base, .. } => *base,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            MainKernel::Stationary { lengthscales, .. } => lengthscales.len(),
            MainKernel::Periodic { lengthscales, .. } => lengthscales.len() + 1,
        }
    }

    /// Main-kernel covariance between two input rows.
    #[inline]
    pub fn eval(&self, xi: &[f64], xj: &[f64]) -> f64 {
        match self {
            MainKernel::Stationary {
                base,
                amplitude,
                lengthscales,
            } => {
                let r2 = scaled_sq_dist(xi, xj, lengthscales);
                amplitude * amplitude * base.radial(r2)
            }
            MainKernel::Periodic {
                base,
                amplitude,
                roughness,
                period,
                lengthscales,
            } => {
                let time = eval_periodic(xi[0] - xj[0], *amplitude, *roughness, *period, *base);
                if lengthscales.is_empty() {
                    time
                } else {
                    let r2 = scaled_sq_dist(&xi[1..], &xj[1..], lengthscales);
                    time * base.radial(r2)
                }
            }
        }
    }
}

/// Declarative covariance function: optional main kernel plus white noise
/// keyed on sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub main: Option<MainKernel>,
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn white_noise(noise_variance: f64) -> Self {
        KernelSpec {
            main: None,
            noise_variance,
        }
    }

    pub fn stationary(base: Stationary, amplitude: f64, lengthscales: Vec<f64>, noise: f64) -> Self {
        KernelSpec {
            main: Some(MainKernel::Stationary {
                base,
                amplitude,
                lengthscales,
            }),
            noise_variance: noise,
        }
    }

    pub fn periodic(
        base: Stationary,
        amplitude: f64,
        roughness: f64,
        period: f64,
        lengthscales: Vec<f64>,
        noise: f64,
    ) -> Self {
        KernelSpec {
            main: Some(MainKernel::Periodic {
                base,
                amplitude,
                roughness,
                period,
                lengthscales,
            }),
            noise_variance: noise,
        }
    }

    pub fn family(&self) -> Family {
        match &self.main {
            None => Family::WhiteNoise,
            Some(MainKernel::Periodic { .. }) => Family::Periodic,
            Some(MainKernel::Stationary { base, .. }) => base.family(),
        }
    }

    /// Input dimensionality implied by the lengthscales, `None` for pure
    /// white noise (which accepts any dimensionality).
    pub fn input_dim(&self) -> Option<usize> {
        self.main.as_ref().map(MainKernel::input_dim)
    }

    /// Name used in report tables: a periodic kernel is reported by its base.
    pub fn display_name(&self) -> String {
        match &self.main {
            None => "White Noise".to_string(),
            Some(MainKernel::Periodic { base, .. }) => base.display_name().to_string(),
            Some(MainKernel::Stationary { base, .. }) => format!("{} (plain)", base.display_name()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidKernel(format!(
                "{what} must be finite and > 0, got {v}"
            )))
        };
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidKernel(format!(
                "noise variance must be finite and >= 0, got {}",
                self.noise_variance
            )));
        }
        let Some(main) = &self.main else {
            return Ok(());
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(main.amplitude()) {
            return bad("amplitude h", main.amplitude());
        }
        if let Stationary::RationalQuadratic { alpha } = main.base() {
            if !pos(alpha) {
                return bad("RQ index alpha", alpha);
            }
        }
        match main {
            MainKernel::Stationary { lengthscales, .. } => {
                for &l in lengthscales {
                    if !pos(l) {
                        return bad("lengthscale", l);
                    }
                }
            }
            MainKernel::Periodic {
                roughness,
                period,
                lengthscales,
                ..
            } => {
                if !pos(*roughness) {
                    return bad("roughness w", *roughness);
                }
                if !pos(*period) {
                    return bad("period T", *period);
                }
                for &l in lengthscales {
                    if !pos(l) {
                        return bad("lengthscale", l);
                    }
                }
            }
        }
        Ok(())
    }

    /// Fill in lengthscales for a template parsed without them so that the
    /// spec accepts `dim`-column inputs. Existing lengthscales must already
    /// match.
    pub fn conformed_to(&self, dim: usize) -> Result<KernelSpec> {
        let mut out = self.clone();
        match &mut out.main {
            None => {}
            Some(MainKernel::Stationary { lengthscales, .. }) => {
                if lengthscales.is_empty() {
                    *lengthscales = vec![1.0; dim];
                }
            }
            Some(MainKernel::Periodic { lengthscales, .. }) => {
                if dim == 0 {
                    return Err(Error::Dimension {
                        expected: 1,
                        got: 0,
                    });
                }
                if lengthscales.is_empty() {
                    *lengthscales = vec![1.0; dim - 1];
                }
            }
        }
        if let Some(d) = out.input_dim() {
            if d != dim {
                return Err(Error::Dimension {
                    expected: d,
                    got: dim,
                });
            }
        }
        Ok(out)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self.input_dim() {
            Some(d) if d != dim => Err(Error::Dimension {
                expected: d,
                got: dim,
            }),
            _ => Ok(()),
        }
    }

    /// Main-kernel value only (no noise).
    #[inline]
    pub fn eval_main(&self, xi: &[f64], xj: &[f64]) -> f64 {
        self.main.as_ref().map_or(0.0, |m| m.eval(xi, xj))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        syntax::write_spec(self, f)
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        syntax::parse_spec(s)
    }
}

#[inline]
fn scaled_sq_dist(xi: &[f64], xj: &[f64], lengthscales: &[f64]) -> f64 {
    xi.iter()
        .zip(xj)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum()
}

/// Kronecker-delta noise on sample indices.
#[inline]
pub fn eval_white_noise(i: usize, j: usize, sigma2: f64) -> f64 {
    if i == j {
        sigma2
    } else {
        0.0
    }
}

/// `h² exp(-r2)`; note there is no ½ in the exponent.
#[inline]
pub fn eval_se(r2: f64, h: f64) -> f64 {
    h * h * (-r2).exp()
}

#[inline]
pub fn eval_rq(r2: f64, h: f64, alpha: f64) -> f64 {
    h * h * (-alpha * (r2 / alpha).ln_1p()).exp()
}

/// Half-integer Matérn closed forms in the scaled distance `r`.
#[inline]
pub fn eval_matern(r: f64, h: f64, nu: MaternNu) -> f64 {
    let h2 = h * h;
    match nu {
        MaternNu::Half => h2 * (-r).exp(),
        MaternNu::ThreeHalves => {
            let s = 3f64.sqrt() * r;
            h2 * (1.0 + s) * (-s).exp()
        }
        MaternNu::FiveHalves => {
            let s = 5f64.sqrt() * r;
            h2 * (1.0 + s + 5.0 * r * r / 3.0) * (-s).exp()
        }
    }
}

/// Periodic warp of a time difference.
///
/// The base kernel receives the scaled squared distance
/// `u² / (2 w²)` with `u = 2 |sin(π d / T)|`, so an SE base gives
/// `h² exp(-2 sin²(π d / T) / w²)`.
#[inline]
pub fn eval_periodic(d_time: f64, h: f64, w: f64, period: f64, base: Stationary) -> f64 {
    let phase = d_time.abs().rem_euclid(period) / period;
    let s = (PI * phase).sin();
    let r2 = 2.0 * s * s / (w * w);
    h * h * base.radial(r2)
}

/// Full composite covariance: main kernel plus white noise on sample indices.
pub fn eval_composite(xi: &[f64], xj: &[f64], i: usize, j: usize, spec: &KernelSpec) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(Error::Dimension {
            expected: xi.len(),
            got: xj.len(),
        });
    }
    spec.check_dim(xi.len())?;
    Ok(spec.eval_main(xi, xj) + eval_white_noise(i, j, spec.noise_variance))
}
