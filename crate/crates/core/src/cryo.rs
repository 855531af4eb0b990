//! Thermal occupation, low-temperature BCS surface loss with a residual floor, and the
//! two-fluid kinetic-inductance frequency shift.

use crate::consts::{H, KB};
use crate::error::{Error, Result};
use crate::resonfit::levenberg_marquardt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Weak-coupling BCS gap ratio `Δ(0) / (k_B Tc)`.
pub const BCS_GAP_RATIO: f64 = 1.764;

pub const SURFACE_MODEL: &str = "low-temperature BCS: Rs = A f^2 / T exp(-alpha Tc / T), 1/Qi = Rs/G + 1/Q_res";
pub const SHIFT_MODEL: &str = "two-fluid: lambda = lambda0 / sqrt(1 - (T/Tc)^4), df/f = -(gamma/2)(lambda/lambda0 - 1)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MBParams {
    pub tc: f64,
    /// Gap ratio `Δ(0) / (k_B Tc)`.
    pub alpha: f64,
    /// Geometry factor in ohms.
    pub g: f64,
    /// BCS prefactor in ohm K / Hz^2.
    pub a: f64,
    pub q_res: f64,
    pub lambda_l0: f64,
    /// Kinetic-inductance fraction.
    pub gamma: f64,
}

impl MBParams {
    /// Bulk niobium defaults with the BCS term switched off.
    pub fn niobium() -> Self {
        Self {
            tc: 9.2,
            alpha: BCS_GAP_RATIO,
            g: 270.0,
            a: 0.0,
            q_res: 3e7,
            lambda_l0: 39e-9,
            gamma: 2e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tc > 0.0) || !self.tc.is_finite() {
            return Err(Error::Domain(format!("Tc {} must be positive", self.tc)));
        }
        if !(self.q_res > 0.0) {
            return Err(Error::Domain(format!("Q_res {} must be positive", self.q_res)));
        }
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return Err(Error::Domain(format!("prefactor A {} must be non-negative", self.a)));
        }
        if !(self.g > 0.0) || !(self.alpha > 0.0) {
            return Err(Error::Domain("geometry factor and gap ratio must be positive".into()));
        }
        Ok(())
    }

    pub fn alpha_tc(&self) -> f64 {
        self.alpha * self.tc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhotonRegime {
    #[default]
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalPoint {
    pub temperature_k: f64,
    pub qi: f64,
    pub df_over_f: f64,
    #[serde(default, skip_serializing)]
    pub regime: PhotonRegime,
}

impl ThermalPoint {
    pub fn new(temperature_k: f64, qi: f64, df_over_f: f64) -> Result<Self> {
        let p = Self {
            temperature_k,
            qi,
            df_over_f,
            regime: PhotonRegime::Low,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_k > 0.0) || !self.temperature_k.is_finite() {
            return Err(Error::Domain(format!("temperature {} must be positive", self.temperature_k)));
        }
        if !(self.qi > 0.0) || !self.qi.is_finite() {
            return Err(Error::Domain(format!("Qi {} must be positive", self.qi)));
        }
        Ok(())
    }
}

/// Reads `temperature_k,qi,df_over_f` rows.
pub fn read_series<R: Read>(reader: R) -> Result<Vec<ThermalPoint>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ["temperature_k", "qi", "df_over_f"] {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(Error::Parse(format!("missing column {col}")));
        }
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<ThermalPoint>() {
        let p = row?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_series<W: Write>(points: &[ThermalPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Bose-Einstein occupation `1 / (exp(h f / k_B T) - 1)`.
pub fn thermal_occupation(f: f64, t: f64) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    let x = H * f / (KB * t);
    1.0 / x.exp_m1()
}

fn bcs_loss(p: &MBParams, f: f64, t: f64) -> f64 {
    p.a * f * f / t * (-p.alpha_tc() / t).exp() / p.g
}

/// Surface resistance `A f^2 / T exp(-α Tc / T)`.
pub fn surface_resistance(p: &MBParams, f: f64, t: f64) -> Result<f64> {
    p.validate()?;
    check_low_t(p, t)?;
    Ok(p.a * f * f / t * (-p.alpha_tc() / t).exp())
}

fn check_low_t(p: &MBParams, t: f64) -> Result<()> {
    if !(t > 0.0 && t < 0.5 * p.tc) {
        return Err(Error::Domain(format!(
            "temperature {t} K outside the low-temperature range (0, {}) K",
            0.5 * p.tc
        )));
    }
    Ok(())
}

pub fn qi_of_temperature(p: &MBParams, f: f64, t: f64) -> Result<f64> {
    p.validate()?;
    if !(f > 0.0) {
        return Err(Error::Domain(format!("frequency {f} must be positive")));
    }
    check_low_t(p, t)?;
    Ok(1.0 / (bcs_loss(p, f, t) + 1.0 / p.q_res))
}

/// Two-fluid penetration depth ratio `λ_L(T) / λ_L0`.
pub fn penetration_ratio(t: f64, tc: f64) -> Result<f64> {
    if !(t >= 0.0 && t < tc) {
        return Err(Error::Domain(format!("temperature {t} K must lie in [0, Tc = {tc}) K")));
    }
    Ok(1.0 / (1.0 - (t / tc).powi(4)).sqrt())
}

pub fn freq_shift_of_temperature(p: &MBParams, _f: f64, t: f64) -> Result<f64> {
    p.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("temperature {t} must be positive")));
    }
    Ok(-0.5 * p.gamma * (penetration_ratio(t, p.tc)? - 1.0))
}

/// Temperature where the BCS loss equals the residual floor, searched on `(0, α Tc)`
/// where the BCS term is increasing.
pub fn crossover_temperature(p: &MBParams, f: f64) -> Result<f64> {
    p.validate()?;
    if p.a == 0.0 {
        return Err(Error::Domain("no BCS loss, floor never crossed".into()));
    }
    let x = p.alpha_tc();
    let gap = |t: f64| (p.a * f * f / (p.g * t)).ln() - x / t + p.q_res.ln();
    let (mut lo, mut hi) = (1e-3 * x, x);
    if gap(hi) < 0.0 || gap(lo) > 0.0 {
        return Err(Error::Domain("BCS loss does not cross the floor below alpha Tc".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Prefactor `A` placing the floor crossing at `t_star`.
pub fn prefactor_for_crossover(p: &MBParams, f: f64, t_star: f64) -> Result<f64> {
    p.validate()?;
    if !(t_star > 0.0 && t_star < p.alpha_tc()) {
        return Err(Error::Domain(format!("crossover {t_star} K out of range")));
    }
    Ok(p.g * t_star / (p.q_res * f * f) * (p.alpha_tc() / t_star).exp())
}

/// Synthetic series with multiplicative Gaussian noise on Qi and δf/f.
pub fn synth_series(p: &MBParams, f: f64, temperatures: &[f64], noise: f64, seed: u64) -> Result<Vec<ThermalPoint>> {
    if !(noise >= 0.0) {
        return Err(Error::Domain(format!("noise {noise} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, noise).map_err(|e| Error::Domain(e.to_string()))?;
    temperatures
        .iter()
        .map(|&t| {
            let qi = qi_of_temperature(p, f, t)? * (1.0 + n.sample(&mut rng));
            let df = freq_shift_of_temperature(p, f, t)? * (1.0 + n.sample(&mut rng));
            ThermalPoint::new(t, qi.max(f64::MIN_POSITIVE), df)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbFitReport {
    pub a_prefactor: f64,
    pub alpha_tc_k: f64,
    pub q_res: f64,
    pub t_star_k: f64,
}

#[derive(Debug, Clone)]
pub struct ThermalFit {
    pub params: MBParams,
    pub t_star: f64,
    pub rms_log_residual: f64,
    /// Points where the BCS loss exceeds the floor under the fitted model.
    pub bcs_points: usize,
}

impl ThermalFit {
    pub fn report(&self) -> MbFitReport {
        MbFitReport {
            a_prefactor: self.params.a,
            alpha_tc_k: self.params.alpha_tc(),
            q_res: self.params.q_res,
            t_star_k: self.t_star,
        }
    }
}

const MIN_POINTS: usize = 6;
const MIN_PER_REGIME: usize = 2;

/// Fits `(A, α Tc, Q_res)` on `ln(1/Qi)`; `base` supplies Tc, G, λ_L0 and γ.
pub fn fit_thermal_series(points: &[ThermalPoint], f: f64, base: &MBParams) -> Result<ThermalFit> {
    let free = || {
        vec!["a_prefactor".to_string(), "alpha_tc_k".to_string(), "q_res".to_string()]
    };
    if points.len() < MIN_POINTS {
        return Err(Error::UnderConstrained { free: free() });
    }
    for p in points {
        p.validate()?;
    }
    if !(f > 0.0) {
        return Err(Error::Domain(format!("frequency {f} must be positive")));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.temperature_k.total_cmp(&b.temperature_k));
    let t: Vec<f64> = pts.iter().map(|p| p.temperature_k).collect();
    let y: Vec<f64> = pts.iter().map(|p| (1.0 / p.qi).ln()).collect();
    let m = pts.len();

    // floor from the coldest third, exponent from the warmest half above it
    let cold = (m / 3).max(1);
    let floor0 = y[..cold].iter().map(|v| v.exp()).sum::<f64>() / cold as f64;
    let warm: Vec<(f64, f64)> = (m / 2..m)
        .filter_map(|i| {
            let excess = y[i].exp() - floor0;
            (excess > 0.0).then(|| (1.0 / t[i], (excess * t[i]).ln()))
        })
        .collect();
    let (c0, x0) = if warm.len() >= 2 {
        let n = warm.len() as f64;
        let mx = warm.iter().map(|v| v.0).sum::<f64>() / n;
        let my = warm.iter().map(|v| v.1).sum::<f64>() / n;
        let sxy: f64 = warm.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum();
        let sxx: f64 = warm.iter().map(|v| (v.0 - mx).powi(2)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let x = (-slope).max(0.1 * base.alpha_tc());
        (my + x * mx, x)
    } else {
        (0.0, base.alpha_tc())
    };
    // model: ln(exp(c - x/T) / T + exp(-lnQ))
    let model = |p: &[f64], t: f64| {
        let b = p[0] - p[1] * x0 / t - t.ln();
        let r = -p[2];
        let hi = b.max(r);
        hi + ((b - hi).exp() + (r - hi).exp()).ln()
    };
    let p0 = [c0, 1.0, -floor0.ln()];
    let out = levenberg_marquardt(
        |p: &[f64], r: &mut [f64]| {
            for i in 0..m {
                r[i] = model(p, t[i]) - y[i];
            }
        },
        m,
        &p0,
        500,
    );
    let p = &out.p;
    let x = p[1] * x0;
    let scale = f * f / base.g;
    let params = MBParams {
        a: p[0].exp() / scale,
        alpha: x / base.tc,
        q_res: p[2].exp(),
        ..*base
    };
    if !params.a.is_finite() || !(x > 0.0) || !params.q_res.is_finite() {
        return Err(Error::UnderConstrained { free: free() });
    }
    let bcs_points = t.iter().filter(|&&ti| bcs_loss(&params, f, ti) > 1.0 / params.q_res).count();
    let floor_points = m - bcs_points;
    if bcs_points < MIN_PER_REGIME {
        return Err(Error::UnderConstrained {
            free: vec!["a_prefactor".into(), "alpha_tc_k".into()],
        });
    }
    if floor_points < MIN_PER_REGIME {
        return Err(Error::UnderConstrained { free: vec!["q_res".into()] });
    }
    let t_star = crossover_temperature(&params, f)?;
    Ok(ThermalFit {
        params,
        t_star,
        rms_log_residual: (out.cost / m as f64).sqrt(),
        bcs_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const F: f64 = 98.2e9;

    fn nb_crossing(t_star: f64) -> MBParams {
        let mut p = MBParams::niobium();
        p.a = prefactor_for_crossover(&p, F, t_star).unwrap();
        p
    }

    fn grid() -> Vec<f64> {
        (0..18).map(|i| 1.0 + 0.2 * i as f64).collect()
    }

    #[test]
    fn occupation_values() {
        assert!((thermal_occupation(100e9, 1.0) - 0.0083).abs() < 5e-5);
        assert_eq!(thermal_occupation(100e9, 0.0), 0.0);
        let rj = KB * 4.8 / (H * 10e9);
        assert!((thermal_occupation(10e9, 4.8) / rj - 1.0).abs() < 0.05);
    }

    #[test]
    fn floor_limits() {
        let mut p = MBParams::niobium();
        assert_eq!(qi_of_temperature(&p, F, 2.0).unwrap(), p.q_res);
        p.a = 1e-22;
        assert!((qi_of_temperature(&p, F, 0.05).unwrap() / p.q_res - 1.0).abs() < 1e-12);
        assert!(qi_of_temperature(&p, F, 4.6).is_err());
        assert!(qi_of_temperature(&p, F, 0.0).is_err());
    }

    #[test]
    fn deviates_below_crossover() {
        let p = nb_crossing(2.3);
        let pure = MBParams { q_res: f64::INFINITY, ..p };
        for t in [1.0, 1.5, 2.0, 2.2] {
            let ratio = qi_of_temperature(&pure, F, t).unwrap() / qi_of_temperature(&p, F, t).unwrap();
            assert!(ratio > 2.0, "{t} {ratio}");
        }
        assert!((crossover_temperature(&p, F).unwrap() - 2.3).abs() < 1e-9);
    }

    #[test]
    fn two_fluid_shift() {
        assert!((penetration_ratio(4.6, 9.2).unwrap() - 1.0328).abs() < 1e-4);
        let p = MBParams::niobium();
        assert!(freq_shift_of_temperature(&p, F, 1e-3).unwrap().abs() < 1e-15);
        assert!(freq_shift_of_temperature(&p, F, 9.2).is_err());
        let mut last = 0.0;
        for i in 1..90 {
            let s = freq_shift_of_temperature(&p, F, 0.1 * i as f64).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn noiseless_round_trip() {
        let p = nb_crossing(2.3);
        let s = synth_series(&p, F, &grid(), 0.0, 0).unwrap();
        let fit = fit_thermal_series(&s, F, &MBParams::niobium()).unwrap();
        assert!((fit.params.q_res / p.q_res - 1.0).abs() < 1e-3);
        assert!((fit.params.alpha_tc() / p.alpha_tc() - 1.0).abs() < 1e-3);
        assert!((fit.params.a / p.a - 1.0).abs() < 1e-3);
        assert!((fit.t_star - 2.3).abs() < 1e-3);
    }

    #[test]
    fn floor_only_is_under_constrained() {
        let p = nb_crossing(4.0);
        let temps: Vec<f64> = (0..10).map(|i| 0.5 + 0.1 * i as f64).collect();
        let s = synth_series(&p, F, &temps, 0.01, 3).unwrap();
        match fit_thermal_series(&s, F, &MBParams::niobium()) {
            Err(Error::UnderConstrained { free }) => assert!(free.iter().any(|f| f == "alpha_tc_k")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            fit_thermal_series(&s[..4], F, &MBParams::niobium()),
            Err(Error::UnderConstrained { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let p = nb_crossing(2.3);
        let s = synth_series(&p, F, &grid(), 0.0, 0).unwrap();
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("temperature_k,qi,df_over_f"));
        let back = read_series(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert!(read_series("t,qi\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn occupation_monotone(f in 1e9..1e12f64, t in 0.1..10.0f64) {
            prop_assert!(thermal_occupation(f, t * 1.01) > thermal_occupation(f, t));
            prop_assert!(thermal_occupation(f * 1.01, t) < thermal_occupation(f, t));
        }

        #[test]
        fn qi_decreasing(ts in 1.6..3.2f64, t in 0.3..4.0f64) {
            let p = nb_crossing(ts);
            let a = qi_of_temperature(&p, F, t).unwrap();
            let b = qi_of_temperature(&p, F, t + 0.5).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn harmonic_identity(ts in 1.6..3.2f64, t in 0.5..4.5f64) {
            let p = nb_crossing(ts);
            let pure = MBParams { q_res: f64::INFINITY, ..p };
            let lhs = 1.0 / qi_of_temperature(&p, F, t).unwrap();
            let rhs = 1.0 / qi_of_temperature(&pure, F, t).unwrap() + 1.0 / p.q_res;
            prop_assert!((lhs / rhs - 1.0).abs() < 1e-12);
        }

        #[test]
        fn fit_inverts_generate(ts in 1.8..2.8f64, q in 1e6..1e9f64, alpha in 1.5..2.1f64) {
            let mut base = MBParams::niobium();
            base.q_res = q;
            base.alpha = alpha;
            base.a = prefactor_for_crossover(&base, F, ts).unwrap();
            let s = synth_series(&base, F, &grid(), 0.0, 0).unwrap();
            let fit = fit_thermal_series(&s, F, &MBParams::niobium()).unwrap();
            prop_assert!((fit.params.q_res / q - 1.0).abs() < 1e-3);
            prop_assert!((fit.params.alpha_tc() / base.alpha_tc() - 1.0).abs() < 1e-3);
            prop_assert!((fit.t_star / ts - 1.0).abs() < 1e-3);
        }
    }
}
