//! Acceptance checks, one per criterion. Runs as a plain binary so every
//! criterion reports a line even when an earlier one fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Duration as ChronoDuration, TimeZone, Utc};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvgp::experiments::report::render_table;
use pvgp::experiments::{
    forecast_48h, forecast_4h, generate_synthetic, mae, run_grid, set_one_grid, set_two_grid, CloudMode, Dataset,
    ExperimentConfig, ForecastOptions, Horizon, Scenario, SynthParams, SystemData,
};
use pvgp::geo::{latlon_to_tm, tm_to_latlon, GeoPoint, TimeIndex, TmParams, STEPS_PER_DAY};
use pvgp::gp::{
    build_covariance, fd_gradient, fd_gradient_five_point, fit_hyperparameters, posterior, sample_prior, FitOptions,
    Inputs, ParamSpace, TrainingSet,
};
use pvgp::kernels::{KernelSpec, MainKernel, MaternNu, Stationary};
use pvgp::pipeline::{
    assemble, filter_systems, hrv_patch_mean, read_metadata, read_power, HrvFrame, HrvRasterStack, NightThreshold,
    PvSystem, RasterGeometry,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap()
}

// ---------------------------------------------------------------------------
// Independent kernel formulas for the posterior oracle.

fn radial_oracle(base: Stationary, r2: f64) -> f64 {
    match base {
        Stationary::SquaredExponential => (-r2).exp(),
        Stationary::RationalQuadratic { alpha } => (1.0 + r2 / alpha).powf(-alpha),
        Stationary::Matern(nu) => {
            let r = r2.sqrt();
            match nu {
                MaternNu::Half => (-r).exp(),
                MaternNu::ThreeHalves => (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp(),
                MaternNu::FiveHalves => {
                    (1.0 + 5f64.sqrt() * r + 5.0 * r2 / 3.0) * (-(5f64.sqrt()) * r).exp()
                }
            }
        }
    }
}

fn k_oracle(spec: &KernelSpec, a: &[f64], b: &[f64]) -> f64 {
    match &spec.main {
        None => 0.0,
        Some(MainKernel::Stationary {
            base,
            amplitude,
            lengthscales,
        }) => {
            let mut r2 = 0.0;
            for d in 0..a.len() {
                r2 += ((a[d] - b[d]) / lengthscales[d]).powi(2);
            }
            amplitude.powi(2) * radial_oracle(*base, r2)
        }
        Some(MainKernel::Periodic {
            base,
            amplitude,
            roughness,
            period,
            lengthscales,
        }) => {
            let s = (std::f64::consts::PI * (a[0] - b[0]).abs() / period).sin();
            let r2_time = 2.0 * s * s / roughness.powi(2);
            let mut r2_rest = 0.0;
            for d in 1..a.len() {
                r2_rest += ((a[d] - b[d]) / lengthscales[d - 1]).powi(2);
            }
            amplitude.powi(2) * radial_oracle(*base, r2_time) * radial_oracle(*base, r2_rest)
        }
    }
}

fn random_base(rng: &mut ChaCha8Rng) -> Stationary {
    match rng.gen_range(0..5) {
        0 => Stationary::SquaredExponential,
        1 => Stationary::RationalQuadratic {
            alpha: rng.gen_range(0.5..5.0),
        },
        2 => Stationary::Matern(MaternNu::Half),
        3 => Stationary::Matern(MaternNu::ThreeHalves),
        _ => Stationary::Matern(MaternNu::FiveHalves),
    }
}

/// Random spec of the given family index: 0 white noise, 1 SE, 2 RQ,
/// 3 Matérn, 4 periodic.
fn random_spec(rng: &mut ChaCha8Rng, family: usize, dim: usize) -> KernelSpec {
    let h = rng.gen_range(0.5..1.5);
    let noise = rng.gen_range(0.2..1.0);
    let ls: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..3.0)).collect();
    match family {
        0 => KernelSpec::white_noise(noise),
        1 => KernelSpec::stationary(Stationary::SquaredExponential, h, ls, noise),
        2 => KernelSpec::stationary(
            Stationary::RationalQuadratic {
                alpha: rng.gen_range(0.5..5.0),
            },
            h,
            ls,
            noise,
        ),
        3 => {
            let nu = [MaternNu::Half, MaternNu::ThreeHalves, MaternNu::FiveHalves][rng.gen_range(0..3)];
            KernelSpec::stationary(Stationary::Matern(nu), h, ls, noise)
        }
        _ => {
            let base = random_base(rng);
            let w = rng.gen_range(0.3..3.0);
            let period = rng.gen_range(5.0..50.0);
            KernelSpec::periodic(base, h, w, period, ls[1..].to_vec(), noise)
        }
    }
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, dim: usize, span: f64) -> Inputs {
    let data = (0..n * dim).map(|_| rng.gen_range(0.0..span)).collect();
    Inputs::new(dim, data).unwrap()
}

/// Random rows with a strictly increasing first (time) column.
fn random_series_inputs(rng: &mut ChaCha8Rng, n: usize, dim: usize, span: f64) -> Inputs {
    let mut t = 0.0;
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        t += rng.gen_range(0.1..span / n as f64);
        data.push(t);
        data.extend((1..dim).map(|_| rng.gen_range(0.0..span)));
    }
    Inputs::new(dim, data).unwrap()
}

fn rel_err(got: &DMatrix<f64>, want: &DMatrix<f64>, floor: f64) -> f64 {
    (got - want).norm() / want.norm().max(floor)
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let family = case % 5;
        let dim = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=5);
        let spec = random_spec(&mut rng, family, dim);
        let x = random_series_inputs(&mut rng, n, dim, 10.0);
        let q = random_inputs(&mut rng, m, dim, 10.0);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0) + 5.0).collect();
        let train = TrainingSet::new(x.clone(), y.clone()).map_err(|e| e.to_string())?;
        let got = posterior(&train, &q, &spec).map_err(|e| format!("case {case}: {e}"))?;

        let mu = y.iter().sum::<f64>() / n as f64;
        let k = DMatrix::from_fn(n, n, |i, j| {
            k_oracle(&spec, x.row(i), x.row(j)) + if i == j { spec.noise_variance } else { 0.0 }
        });
        let k_inv = k.try_inverse().ok_or("oracle Gram not invertible")?;
        let ks = DMatrix::from_fn(m, n, |i, j| k_oracle(&spec, q.row(i), x.row(j)));
        let kss = DMatrix::from_fn(m, m, |i, j| k_oracle(&spec, q.row(i), q.row(j)));
        let resid = DVector::from_iterator(n, y.iter().map(|v| v - mu));
        let mean = ks.clone() * &k_inv * resid;
        let mean = DMatrix::from_iterator(m, 1, mean.iter().map(|v| v + mu));
        let cov = kss - &ks * &k_inv * ks.transpose();

        let total = spec.main.as_ref().map_or(0.0, |mk| mk.amplitude().powi(2)) + spec.noise_variance;
        let got_mean = DMatrix::from_iterator(m, 1, got.mean.iter().copied());
        let e_mean = rel_err(&got_mean, &mean, 1.0);
        let e_cov = rel_err(&got.cov, &cov, total);
        worst = worst.max(e_mean).max(e_cov);
        ensure(
            e_mean <= 1e-8 && e_cov <= 1e-8,
            format!("case {case} ({}): mean err {e_mean:.2e}, cov err {e_cov:.2e}", spec),
        )?;
    }
    within(started.elapsed(), Duration::from_secs(10))?;
    Ok(format!("200 posteriors, worst relative error {worst:.1e}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = f64::INFINITY;
    let names = ["white noise", "SE", "RQ", "Matern", "periodic", "composite"];
    for (family, name) in names.iter().enumerate() {
        for trial in 0..50 {
            let n = rng.gen_range(2..=20);
            let dim = rng.gen_range(1..=3);
            let spec = if family == 5 {
                let mut s = random_spec(&mut rng, 4, dim);
                s.noise_variance = rng.gen_range(0.0..0.5);
                s
            } else {
                let mut s = random_spec(&mut rng, family, dim);
                if family != 0 {
                    s.noise_variance = 0.0;
                }
                s
            };
            // Repeat some rows so the noiseless Grams are singular.
            let mut x = random_inputs(&mut rng, n, dim, 20.0);
            if n > 3 {
                let dup = x.row(0).to_vec();
                x = {
                    let mut data = x.as_slice().to_vec();
                    data[dim..2 * dim].copy_from_slice(&dup);
                    Inputs::new(dim, data).unwrap()
                };
            }
            let k = build_covariance(&x, &x, &spec, true).map_err(|e| e.to_string())?;
            let min = SymmetricEigen::new(k.clone()).eigenvalues.min();
            let tol = 1e-8 * k.trace().max(f64::MIN_POSITIVE);
            ensure(min >= -tol, format!("{name} trial {trial}: min eigenvalue {min:.3e} ({spec})"))?;
            worst = worst.min(min / k.trace());
        }
    }
    Ok(format!("300 Gram matrices PSD, lowest eigenvalue/trace {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempts = 0;
    while done < 50 {
        attempts += 1;
        ensure(attempts < 500, "too many unusable random instances")?;
        let family = 1 + done % 4;
        let dim = rng.gen_range(1..=2);
        let n = rng.gen_range(8..=20);
        let template = random_spec(&mut rng, family, dim);
        let mut sorted: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..40.0)).collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut data = Vec::with_capacity(n * dim);
        for t in &sorted {
            data.push(*t);
            for _ in 1..dim {
                data.push(rng.gen_range(0.0..1.0));
            }
        }
        let x = Inputs::new(dim, data).unwrap();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + rng.gen_range(-0.3..0.3)).collect();
        let train = TrainingSet::new(x, y).map_err(|e| e.to_string())?;
        let space = ParamSpace::new(&template, &train).map_err(|e| e.to_string())?;
        let theta: Vec<f64> = space
            .bounds()
            .iter()
            .map(|&(lo, hi)| {
                // Stay clear of the box so every probe is interior.
                let pad = 0.1 * (hi - lo);
                rng.gen_range(lo + pad..=hi - pad)
            })
            .collect();
        let f = |t: &[f64]| space.objective(&train, t);
        if !f(&theta).is_finite() {
            continue;
        }
        let g = fd_gradient(f, &theta, 1e-5);
        let g5 = fd_gradient_five_point(f, &theta, 1e-3);
        let scale = g5.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = g.iter().zip(&g5).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        ensure(err <= 1e-4, format!("instance {done}: gradient mismatch {err:.2e} ({template})"))?;
        worst = worst.max(err);
        done += 1;
    }
    Ok(format!("50 gradients agree, worst relative difference {worst:.1e}"))
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let truth = KernelSpec::stationary(Stationary::SquaredExponential, 2.0, vec![3.0], 0.1);
    let template: KernelSpec = "se() + whitenoise()".parse().map_err(|e: pvgp::Error| e.to_string())?;
    let mut hits = 0;
    let mut report = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let mut xs: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..30.0)).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        let x = Inputs::new(1, xs).unwrap();
        let draw = sample_prior(&x, &truth, 1, 500 + seed).map_err(|e| e.to_string())?;
        let y: Vec<f64> = draw.row(0).iter().copied().collect();
        let train = TrainingSet::new(x, y).map_err(|e| e.to_string())?;
        let opts = FitOptions {
            restarts: 5,
            seed,
            ..Default::default()
        };
        let fit = fit_hyperparameters(&train, &template, &opts).map_err(|e| e.to_string())?;
        let Some(MainKernel::Stationary {
            amplitude,
            lengthscales,
            ..
        }) = &fit.spec.main
        else {
            return Err(format!("unexpected fitted shape {}", fit.spec));
        };
        let d_h = (amplitude.ln() - 2f64.ln()).abs();
        let d_l = (lengthscales[0].ln() - 3f64.ln()).abs();
        let d_n = (fit.spec.noise_variance.ln() - 0.1f64.ln()).abs();
        if d_h <= 0.5 && d_l <= 0.5 && d_n <= 0.5 {
            hits += 1;
        }
        report.push(format!("h={amplitude:.2} l={:.2} s2={:.3}", lengthscales[0], fit.spec.noise_variance));
    }
    within(started.elapsed(), Duration::from_secs(60))?;
    ensure(hits >= 7, format!("only {hits}/10 seeds recovered: {}", report.join("; ")))?;
    Ok(format!("{hits}/10 seeds within 0.5 in log space"))
}

fn criterion_5() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let one = mae(&[100.0], &[0.0]).map_err(|e| e.to_string())?;
    ensure(close(one, 100.0), format!("single point gave {one}"))?;
    let pair = mae(&[100.0, 200.0], &[150.0, 250.0]).map_err(|e| e.to_string())?;
    ensure(close(pair, 50.0), format!("pair gave {pair}"))?;
    let same = mae(&[1.5, 2.5, 300.0], &[1.5, 2.5, 300.0]).map_err(|e| e.to_string())?;
    ensure(same == 0.0, format!("identical series gave {same}"))?;
    ensure(mae(&[1.0], &[1.0, 2.0]).is_err(), "length mismatch accepted")?;
    Ok("100, 50 and 0 exactly".into())
}

fn dms(d: f64, m: f64, s: f64) -> f64 {
    d + m / 60.0 + s / 3600.0
}

fn criterion_6() -> Outcome {
    let p = TmParams::default();
    let (e, n) = latlon_to_tm(dms(52.0, 39.0, 27.2531), dms(1.0, 43.0, 4.5177), &p).map_err(|e| e.to_string())?;
    ensure(
        (e - 651_409.903).abs() <= 0.01 && (n - 313_177.270).abs() <= 0.01,
        format!("worked example gave E {e:.3} N {n:.3}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let lat = rng.gen_range(49.9..60.9);
        let lon = rng.gen_range(-8.0..1.8);
        let (e, n) = latlon_to_tm(lat, lon, &p).map_err(|e| e.to_string())?;
        let (lat2, lon2) = tm_to_latlon(e, n, &p).map_err(|e| e.to_string())?;
        worst = worst.max((lat - lat2).abs()).max((lon - lon2).abs());
    }
    ensure(worst <= 1e-8, format!("round trip error {worst:.2e} degrees"))?;
    Ok(format!("worked example within 1 cm, round trip error {worst:.1e} degrees"))
}

/// SPA elevation, refraction off, used to vet the corpus timestamps.
fn spa_elevation(lat: f64, lon: f64, t: DateTime<Utc>) -> f64 {
    let pos = solar_positioning::SolarPositions::new()
        .at(&t, solar_positioning::Location { latitude: lat, longitude: lon }, 0.0, 69.0, None)
        .expect("valid SPA input");
    pos.elevation_angle()
}

fn criterion_7() -> Outcome {
    let meta = "system_id,latitude,longitude,capacity_w\n\
                1,52.0,-1.0,1000\n\
                2,52.0,30.0,1000\n\
                3,52.5,-1.5,\n\
                4,53.0,-2.0,1000\n\
                5,53.5,-2.5,1000\n";
    let metadata = read_metadata(meta.as_bytes(), "corpus", &TmParams::default()).map_err(|e| e.to_string())?;

    let mut power = String::from("timestamp_utc,system_id,power_w\n");
    for day in 0..5i64 {
        let noon = epoch() + ChronoDuration::days(day) + ChronoDuration::hours(12);
        let midnight = epoch() + ChronoDuration::days(day + 1);
        for id in 1..=5 {
            power.push_str(&format!("{},{id},500\n", noon.format("%Y-%m-%dT%H:%M:%SZ")));
            // System 4 generates on three nights, system 5 on two.
            let night = if (id == 4 && day < 3) || (id == 5 && day < 2) { 300 } else { 0 };
            power.push_str(&format!("{},{id},{night}\n", midnight.format("%Y-%m-%dT%H:%M:%SZ")));
            if night > 0 {
                let (lat, lon) = if id == 4 { (53.0, -2.0) } else { (53.5, -2.5) };
                let el = spa_elevation(lat, lon, midnight);
                ensure(el < -5.0, format!("corpus night at {midnight} has SPA elevation {el:.2}"))?;
            }
        }
    }
    let power = read_power(power.as_bytes(), "corpus").map_err(|e| e.to_string())?;
    let out = filter_systems(&metadata, &power, &Default::default(), &NightThreshold::default());

    let mut removed: Vec<(i64, &str)> = out.removed.iter().map(|r| (r.system_id, r.reason.code())).collect();
    removed.sort();
    let want = vec![(2, "out-of-bounds"), (3, "missing-metadata"), (4, "overnight-generation")];
    ensure(removed == want, format!("removed {removed:?}"))?;
    let kept: Vec<i64> = out.kept.iter().map(|s| s.system_id).collect();
    ensure(kept == vec![1, 5], format!("kept {kept:?}"))?;
    Ok("3 removed with codes out-of-bounds, missing-metadata, overnight-generation".into())
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for case in 0..100 {
        // A fresh raster, position and size per case.
        let (w, h) = (rng.gen_range(12..40usize), rng.gen_range(12..40usize));
        let pixel = [500.0, 1000.0, 3000.0][rng.gen_range(0..3)];
        let geometry = RasterGeometry {
            origin_easting: rng.gen_range(0.0..600_000.0f64).floor(),
            origin_northing: rng.gen_range(100_000.0..1_200_000.0f64).floor(),
            pixel_size: pixel,
        };
        let frames: Vec<HrvFrame> = (0..3)
            .map(|t| HrvFrame {
                time: TimeIndex(t),
                values: (0..w * h).map(|_| rng.gen_range(0.0f32..1100.0)).collect(),
            })
            .collect();
        let stack = HrvRasterStack::new(geometry, w, h, frames.clone()).map_err(|e| e.to_string())?;

        let size = [2usize, 6, 12][case % 3];
        let half = (size / 2) as i64;
        let px = rng.gen_range(half..=w as i64 - half);
        let py = rng.gen_range(half..=h as i64 - half);
        let easting = geometry.origin_easting + (px as f64 + rng.gen_range(0.01..0.99)) * pixel;
        let northing = geometry.origin_northing - (py as f64 + rng.gen_range(0.01..0.99)) * pixel;
        let t = rng.gen_range(0..3usize);
        let system = PvSystem {
            system_id: case as i64,
            location: GeoPoint {
                latitude: 0.0,
                longitude: 0.0,
                easting,
                northing,
            },
            capacity_w: 1000.0,
            provenance: "oracle".into(),
        };
        let got = hrv_patch_mean(&stack, &system, size, TimeIndex(t as i64), 1023.0).map_err(|e| e.to_string())?;

        let cx = ((easting - geometry.origin_easting) / pixel).floor() as i64;
        let cy = ((geometry.origin_northing - northing) / pixel).floor() as i64;
        let mut sum = 0.0f64;
        for y in (cy - half)..(cy + half) {
            for x in (cx - half)..(cx + half) {
                sum += f64::from(frames[t].values[y as usize * w + x as usize]);
            }
        }
        let want = (sum / (size * size) as f64 / 1023.0).clamp(0.0, 1.0);
        ensure(got == want, format!("case {case}: size {size} at ({px},{py}) gave {got}, oracle {want}"))?;
    }
    Ok("100 random rasters, patches equal the double-loop oracle exactly".into())
}

fn synthetic_dataset(scenario: Scenario, days: usize, systems: &[(i64, f64, f64, f64)], seed: u64) -> Dataset {
    let params = SynthParams::default();
    let systems = systems
        .iter()
        .map(|&(id, lat, lon, cap)| {
            let system = PvSystem {
                system_id: id,
                location: GeoPoint::new(lat, lon, &TmParams::default()).unwrap(),
                capacity_w: cap,
                provenance: "synthetic".into(),
            };
            let data = generate_synthetic(scenario, days, &system, epoch(), seed ^ id as u64, &params).unwrap();
            SystemData {
                system,
                power: data.power,
                stack: Arc::new(data.stack),
            }
        })
        .collect();
    Dataset {
        epoch: epoch(),
        systems,
        sensor_max: 1023.0,
    }
}

const FOUR_SYSTEMS: [(i64, f64, f64, f64); 4] = [
    (709, 51.45, -0.97, 2460.0),
    (1556, 52.2, 0.12, 3870.0),
    (1627, 53.48, -2.24, 2820.0),
    (1872, 50.72, -3.53, 3960.0),
];

fn criterion_9() -> Outcome {
    let started = Instant::now();
    let data = synthetic_dataset(Scenario::Scattered, 31, &FOUR_SYSTEMS[..2], 9);
    let ids: Vec<i64> = data.systems.iter().map(|s| s.system.system_id).collect();
    let grid: Vec<ExperimentConfig> = set_two_grid(&ids, 21, 10, 120).into_iter().filter(|c| c.patch_px == 6).collect();
    ensure(grid.len() == 2, format!("expected 2 settings, got {}", grid.len()))?;
    let opts = ForecastOptions {
        restarts: 2,
        max_iter: 100,
        ..Default::default()
    };
    let report = run_grid(&grid, &data, 9, &opts, 0).map_err(|e| e.to_string())?;
    ensure(report.failed_cells() == 0, format!("{} failed cells", report.failed_cells()))?;
    let avg = |mode: CloudMode| {
        report
            .rows
            .iter()
            .find(|r| r.cloud_mode == mode)
            .and_then(|r| r.average_mae())
            .ok_or(format!("no {mode} row"))
    };
    let given = avg(CloudMode::Given)?;
    let persisted = avg(CloudMode::Persistence)?;
    within(started.elapsed(), Duration::from_secs(600))?;
    ensure(given < persisted, format!("given MAE {given:.1} W not below persistence {persisted:.1} W"))?;
    Ok(format!("given {given:.1} W < persistence {persisted:.1} W"))
}

fn criterion_10() -> Outcome {
    // Thirty training days before day 30, then a two-day horizon.
    let data = synthetic_dataset(Scenario::Scattered, 32, &FOUR_SYSTEMS, 10);
    let ids: Vec<i64> = data.systems.iter().map(|s| s.system.system_id).collect();
    let grid = set_one_grid(&ids, 30, 1);
    let opts = ForecastOptions {
        max_train_points: 96,
        restarts: 1,
        max_iter: 30,
        ..Default::default()
    };
    let report = run_grid(&grid, &data, 10, &opts, 0).map_err(|e| e.to_string())?;
    ensure(report.rows.len() == 10, format!("{} rows", report.rows.len()))?;
    ensure(report.failed_cells() == 0, format!("{} failed cells", report.failed_cells()))?;
    let shape: Vec<(u32, usize, String)> =
        report.rows.iter().map(|r| (r.training_days, r.patch_px, r.kernel_name.clone())).collect();
    let m12 = "Matern12".to_string();
    let want = vec![
        (7, 2, m12.clone()),
        (14, 2, m12.clone()),
        (21, 2, m12.clone()),
        (30, 2, m12.clone()),
        (21, 2, m12.clone()),
        (21, 6, m12.clone()),
        (21, 12, m12.clone()),
        (21, 2, "Squared Exponential".to_string()),
        (21, 2, "Rational Quadratic".to_string()),
        (21, 2, m12),
    ];
    ensure(shape == want, format!("row layout {shape:?}"))?;

    let table = render_table(&report);
    let lines: Vec<&str> = table.lines().collect();
    ensure(lines.len() == 12, format!("table has {} lines", lines.len()))?;
    for head in ["Training Period", "Sky Coverage", "Kernel Structure", "System 709", "System 1872", "Average (MAE)"] {
        ensure(lines[0].contains(head), format!("header lacks {head}: {}", lines[0]))?;
    }
    ensure(!lines[0].contains("Horizon") && !lines[0].contains("Cloud Coverage"), "constant columns shown")?;
    for (line, label) in lines[2..6].iter().zip(["1 week", "2 weeks", "3 weeks", "1 month"]) {
        ensure(line.starts_with(label), format!("expected {label}: {line}"))?;
    }
    ensure(lines[7].contains("6x6") && lines[8].contains("12x12"), "patch sweep labels")?;

    // Horizon lengths, straight from the forecasting entry points.
    let sys = &data.systems[0];
    let series = assemble(
        &sys.system,
        &sys.power,
        data.epoch,
        &sys.stack,
        grid[0].patch_px,
        1023.0,
        (TimeIndex(0), TimeIndex(32 * STEPS_PER_DAY)),
    )
    .map_err(|e| e.to_string())?;
    let cfg = |horizon: Horizon, start: i64| ExperimentConfig {
        horizon,
        forecast_start: TimeIndex(start),
        test_days: 1,
        ..grid[0].clone()
    };
    let f48 = forecast_48h(&series, &cfg(Horizon::Hours48, 29 * STEPS_PER_DAY), &opts, 1).map_err(|e| e.to_string())?;
    let f4 = forecast_4h(&series, &cfg(Horizon::Hours4, 30 * STEPS_PER_DAY + 120), &opts, 1).map_err(|e| e.to_string())?;
    ensure(
        f48.query.len() == 576 && f48.prediction.len() == 576,
        format!("48h horizon has {} steps", f48.query.len()),
    )?;
    ensure(f4.query.len() == 48 && f4.prediction.len() == 48, format!("4h horizon has {} steps", f4.query.len()))?;
    Ok("10 rows in table layout, horizons of 576 and 48 steps".into())
}

const RUN_CONFIG: &str = r#"
seed = 11
jobs = 2
output_dir = "out"

[data]
metadata = "data/metadata.csv"
power = "data/power.csv"
hrv = "data/hrv_{id}.hrv"

[forecast]
max_train_points = 64
restarts = 2
max_iter = 30

[experiment]
grid = "set-two"
first_test_day = 21
test_days = 2

[synth]
scenario = "scattered"
days = 23
start_date = "2021-06-01"

[[synth.systems]]
system_id = 709
latitude = 51.45
longitude = -0.97
capacity_w = 2460.0

[[synth.systems]]
system_id = 1556
latitude = 52.2
longitude = 0.12
capacity_w = 3870.0
"#;

fn run_cli(config: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pvgp"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("pvgp {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)),
    )
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, RUN_CONFIG).map_err(|e| e.to_string())?;
    run_cli(&cfg, &["synth"])?;

    let files = ["report.csv", "report_samples.csv", "report_table.txt", "boxplot_system.csv", "boxplot_testing_day.csv"];
    let mut runs = Vec::new();
    for jobs in ["1", "4"] {
        run_cli(&cfg, &["experiment", "--jobs", jobs])?;
        let out = dir.path().join("out");
        let bytes: Result<Vec<Vec<u8>>, String> =
            files.iter().map(|f| std::fs::read(out.join(f)).map_err(|e| e.to_string())).collect();
        runs.push(bytes?);
    }
    for (i, f) in files.iter().enumerate() {
        ensure(runs[0][i] == runs[1][i], format!("{f} differs between runs"))?;
    }
    Ok(format!("{} report files byte-identical across two runs", files.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("posterior matches explicit-inverse oracle", criterion_1),
        ("kernel Gram matrices are PSD", criterion_2),
        ("finite-difference gradient is consistent", criterion_3),
        ("SE hyperparameters are recovered", criterion_4),
        ("MAE examples", criterion_5),
        ("projection worked example and round trip", criterion_6),
        ("system filter corpus", criterion_7),
        ("HRV patch mean matches naive oracle", criterion_8),
        ("given cloud beats persistence on scattered data", criterion_9),
        ("48h grid layout and horizon lengths", criterion_10),
        ("experiment output is reproducible", criterion_11),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2}: PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
