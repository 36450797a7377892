//! Ellipsoidal transverse Mercator via Krüger's n-series to sixth order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Projection constants. Defaults are the British National Grid
/// (Airy 1830 ellipsoid, true origin 49°N 2°W).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TmParams {
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Scale factor on the central meridian.
    pub scale_factor: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub false_easting: f64,
    pub false_northing: f64,
}

impl Default for TmParams {
    fn default() -> Self {
        TmParams::BRITISH_NATIONAL_GRID
    }
}

impl TmParams {
    pub const BRITISH_NATIONAL_GRID: TmParams = TmParams {
        semi_major: 6_377_563.396,
        semi_minor: 6_356_256.909,
        scale_factor: 0.999_601_271_7,
        origin_lat: 49.0,
        origin_lon: -2.0,
        false_easting: 400_000.0,
        false_northing: -100_000.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.semi_major.is_finite()
            && self.semi_minor.is_finite()
            && self.semi_minor > 0.0
            && self.semi_minor <= self.semi_major
            && self.scale_factor.is_finite()
            && self.scale_factor > 0.0
            && self.origin_lat.abs() < 90.0
            && self.origin_lon.abs() <= 180.0
            && self.false_easting.is_finite()
            && self.false_northing.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid projection constants {self:?}")))
        }
    }
}

struct Series {
    e: f64,
    /// Rectifying radius times the central scale factor.
    k0a: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
    /// Northing of the true origin measured from the equator.
    y0: f64,
}

impl Series {
    fn new(p: &TmParams) -> Self {
        let (a, b) = (p.semi_major, p.semi_minor);
        let e = ((a * a - b * b) / (a * a)).sqrt();
        let n = (a - b) / (a + b);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;
        let big_a = a / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
                + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1983433.0 * n6 / 1935360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
                + 167603.0 * n6 / 181440.0,
            49561.0 * n4 / 161280.0 - 179.0 * n5 / 168.0 + 6601661.0 * n6 / 7257600.0,
            34729.0 * n5 / 80640.0 - 3418889.0 * n6 / 1995840.0,
            212378941.0 * n6 / 319334400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
                + 96199.0 * n6 / 604800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
                - 1118711.0 * n6 / 3870720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161280.0 - 11.0 * n5 / 504.0 - 830251.0 * n6 / 7257600.0,
            4583.0 * n5 / 161280.0 - 108847.0 * n6 / 3991680.0,
            20648693.0 * n6 / 638668800.0,
        ];
        let mut s = Series {
            e,
            k0a: p.scale_factor * big_a,
            alpha,
            beta,
            y0: 0.0,
        };
        let (xi0, _) = s.forward_unit(p.origin_lat.to_radians(), 0.0);
        s.y0 = s.k0a * xi0;
        s
    }

    fn conformal_tau(&self, tau: f64) -> f64 {
        let e = self.e;
        let sigma = (e * (e * tau / tau.hypot(1.0)).atanh()).sinh();
        tau * sigma.hypot(1.0) - sigma * tau.hypot(1.0)
    }

    /// Geodetic latitude tangent from the conformal one, by Newton.
    fn geodetic_tau(&self, taup: f64) -> f64 {
        let e2m = 1.0 - self.e * self.e;
        let mut tau = taup / e2m;
        for _ in 0..10 {
            let tau1 = tau.hypot(1.0);
            let taupa = self.conformal_tau(tau);
            let d = (taup - taupa) / taupa.hypot(1.0) * (1.0 + e2m * tau * tau) / (e2m * tau1);
            tau += d;
            if d.abs() <= 1e-15 * tau.abs().max(1.0) {
                break;
            }
        }
        tau
    }

    /// (ξ, η) on the unit rectifying sphere.
    fn forward_unit(&self, phi: f64, lam: f64) -> (f64, f64) {
        let taup = self.conformal_tau(phi.tan());
        let xip = taup.atan2(lam.cos());
        let etap = (lam.sin() / taup.hypot(lam.cos())).asinh();
        let (mut xi, mut eta) = (xip, etap);
        for (j, a) in self.alpha.iter().enumerate() {
            let k = 2.0 * (j + 1) as f64;
            xi += a * (k * xip).sin() * (k * etap).cosh();
            eta += a * (k * xip).cos() * (k * etap).sinh();
        }
        (xi, eta)
    }
}

/// Geographic degrees to (easting, northing) metres.
pub fn latlon_to_tm(lat: f64, lon: f64, params: &TmParams) -> Result<(f64, f64)> {
    if !(lat.is_finite() && lon.is_finite()) || lat.abs() > 90.0 || lon.abs() > 180.0 {
        return Err(Error::Projection(format!("({lat}, {lon}) is not a geographic coordinate")));
    }
    if lat.abs() == 90.0 {
        return Err(Error::Projection(format!("latitude {lat} is a pole")));
    }
    let dlon = (lon - params.origin_lon + 540.0).rem_euclid(360.0) - 180.0;
    if dlon.abs() >= 90.0 {
        return Err(Error::Projection(format!(
            "longitude {lon} is 90° or more from the central meridian"
        )));
    }
    let s = Series::new(params);
    let (xi, eta) = s.forward_unit(lat.to_radians(), dlon.to_radians());
    Ok((
        params.false_easting + s.k0a * eta,
        params.false_northing + s.k0a * xi - s.y0,
    ))
}

/// Inverse of [`latlon_to_tm`], returning (latitude, longitude) degrees.
pub fn tm_to_latlon(easting: f64, northing: f64, params: &TmParams) -> Result<(f64, f64)> {
    if !(easting.is_finite() && northing.is_finite()) {
        return Err(Error::Projection("non-finite grid coordinate".into()));
    }
    let s = Series::new(params);
    let xi = (northing - params.false_northing + s.y0) / s.k0a;
    let eta = (easting - params.false_easting) / s.k0a;
    let (mut xip, mut etap) = (xi, eta);
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xip -= b * (k * xi).sin() * (k * eta).cosh();
        etap -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let lam = etap.sinh().atan2(xip.cos());
    let taup = xip.sin() / etap.sinh().hypot(xip.cos());
    let phi = s.geodetic_tau(taup).atan();
    let lon = (params.origin_lon + lam.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    Ok((phi.to_degrees(), lon))
}
