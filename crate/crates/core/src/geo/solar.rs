//! Low-precision solar position (NOAA / Meeus formulation), no refraction.
//! Good to a few hundredths of a degree for dates within a few centuries
//! of J2000.

use chrono::{DateTime, Utc};

/// Declination and equation of time (minutes) at Julian century `t`.
fn declination_and_eot(t: f64) -> (f64, f64) {
    let l0 = (280.466_46 + t * (36_000.769_83 + t * 0.000_303_2)).rem_euclid(360.0);
    let m = 357.529_11 + t * (35_999.050_29 - 0.000_153_7 * t);
    let ecc = 0.016_708_634 - t * (0.000_042_037 + 0.000_000_126_7 * t);
    let m_rad = m.to_radians();
    let center = m_rad.sin() * (1.914_602 - t * (0.004_817 + 0.000_014 * t))
        + (2.0 * m_rad).sin() * (0.019_993 - 0.000_101 * t)
        + (3.0 * m_rad).sin() * 0.000_289;
    let true_long = l0 + center;
    let omega = (125.04 - 1934.136 * t).to_radians();
    let app_long = (true_long - 0.005_69 - 0.004_78 * omega.sin()).to_radians();
    let eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.000_59 - t * 0.001_813))) / 60.0) / 60.0;
    let eps = (eps0 + 0.002_56 * omega.cos()).to_radians();
    let decl = (eps.sin() * app_long.sin()).asin();

    let y = (eps / 2.0).tan().powi(2);
    let l0r = l0.to_radians();
    let eot = y * (2.0 * l0r).sin() - 2.0 * ecc * m_rad.sin()
        + 4.0 * ecc * y * m_rad.sin() * (2.0 * l0r).cos()
        - 0.5 * y * y * (4.0 * l0r).sin()
        - 1.25 * ecc * ecc * (2.0 * m_rad).sin();
    (decl, 4.0 * eot.to_degrees())
}

/// Solar elevation in degrees above the geometric horizon.
pub fn solar_elevation_deg(lat: f64, lon: f64, t: DateTime<Utc>) -> f64 {
    let secs = t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9;
    let jd = secs / 86_400.0 + 2_440_587.5;
    let century = (jd - 2_451_545.0) / 36_525.0;
    let (decl, eot) = declination_and_eot(century);
    let minutes_utc = secs.rem_euclid(86_400.0) / 60.0;
    let true_solar = (minutes_utc + eot + 4.0 * lon).rem_euclid(1440.0);
    let hour_angle = (true_solar / 4.0 - 180.0).to_radians();
    let phi = lat.to_radians();
    let cos_zenith = phi.sin() * decl.sin() + phi.cos() * decl.cos() * hour_angle.cos();
    90.0 - cos_zenith.clamp(-1.0, 1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn equator_equinox_noon_is_overhead() {
        // March equinox 2021 fell at 09:37 UTC on the 20th; solar noon at
        // lon 0 is near 12:07 UTC.
        let t = Utc.with_ymd_and_hms(2021, 3, 20, 12, 7, 0).unwrap();
        let el = solar_elevation_deg(0.0, 0.0, t);
        assert!((el - 90.0).abs() < 1.0, "{el}");
    }

    #[test]
    fn midnight_is_below_horizon_at_mid_latitudes() {
        for month in 1..=12 {
            let t = Utc.with_ymd_and_hms(2021, month, 15, 0, 0, 0).unwrap();
            assert!(solar_elevation_deg(52.0, 0.0, t) < 0.0);
            assert!(solar_elevation_deg(-40.0, 0.0, t) < 0.0);
        }
    }

    #[test]
    fn continuous_over_five_minute_steps() {
        let start = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
        let mut prev = solar_elevation_deg(51.5, -1.0, start);
        for k in 1..(288 * 3) {
            let t = start + chrono::Duration::minutes(5 * k);
            let el = solar_elevation_deg(51.5, -1.0, t);
            assert!((el - prev).abs() < 2.0);
            prev = el;
        }
    }
}
