//! Physical constants (SI, CODATA 2018).

use std::f64::consts::PI;

pub const C0: f64 = 299_792_458.0;
pub const H: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = H / (2.0 * PI);
pub const KB: f64 = 1.380_649e-23;
pub const EPS0: f64 = 8.854_187_812_8e-12;
pub const MU0: f64 = 1.256_637_062_12e-6;

/// First zero of J1', the TE11 cutoff constant of a circular guide.
pub const TE11_ROOT: f64 = 1.841_183_781_340_659;

/// Converts dBm to watts.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}
