//! Driven Kerr (Duffing) steady state and the empirical two-state lineshape.
//!
//! Both models are phenomenological. All rates are cyclic frequencies in Hz.

use crate::consts::{dbm_to_watt, H};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    pub f_lin: f64,
    pub kappa_tot: f64,
    pub kappa_c: f64,
    /// Frequency shift per photon, positive for an up-shift.
    pub beta: f64,
    pub power: f64,
}

impl DuffingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_tot > 0.0) || !(self.kappa_c > 0.0 && self.kappa_c <= self.kappa_tot) {
            return Err(Error::Domain(format!(
                "need 0 < kappa_c <= kappa_tot, got {} and {}",
                self.kappa_c, self.kappa_tot
            )));
        }
        if !(self.f_lin > 0.0) || !self.beta.is_finite() || !(self.power >= 0.0) {
            return Err(Error::Domain("f_lin must be positive, beta finite and power non-negative".into()));
        }
        Ok(())
    }

    /// Drive term `κc P / (2π h f)` in Hz^2 per photon.
    pub fn drive(&self) -> f64 {
        self.kappa_c * self.power / (2.0 * PI * H * self.f_lin)
    }

    pub fn with_power(&self, power: f64) -> Self {
        Self { power, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Single,
    Lower,
    Middle,
    Upper,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Single => "single",
            Branch::Lower => "lower",
            Branch::Middle => "middle",
            Branch::Upper => "upper",
        }
    }

    pub fn stable(self) -> bool {
        self != Branch::Middle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub photons: f64,
    pub branch: Branch,
}

fn polish(c: [f64; 4], mut x: f64) -> f64 {
    for _ in 0..6 {
        let p = ((c[0] * x + c[1]) * x + c[2]) * x + c[3];
        let d = (3.0 * c[0] * x + 2.0 * c[1]) * x + c[2];
        if d == 0.0 {
            break;
        }
        let step = p / d;
        x -= step;
        if step.abs() <= 1e-15 * x.abs() {
            break;
        }
    }
    x
}

// real roots of c0 x^3 + c1 x^2 + c2 x + c3, ascending
fn cubic_roots(c: [f64; 4]) -> Vec<f64> {
    let (a, b, cc) = (c[1] / c[0], c[2] / c[0], c[3] / c[0]);
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * cc) / 54.0;
    let mut out = if r * r < q * q * q {
        let th = (r / q.powf(1.5)).clamp(-1.0, 1.0).acos();
        let s = -2.0 * q.sqrt();
        vec![
            s * (th / 3.0).cos() - a / 3.0,
            s * ((th + 2.0 * PI) / 3.0).cos() - a / 3.0,
            s * ((th - 2.0 * PI) / 3.0).cos() - a / 3.0,
        ]
    } else {
        let big = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
        let small = if big != 0.0 { q / big } else { 0.0 };
        vec![big + small - a / 3.0]
    };
    for x in out.iter_mut() {
        *x = polish(c, *x);
    }
    out.sort_by(|x, y| x.total_cmp(y));
    out
}

/// Intracavity photon numbers solving `n [(δ - β n)^2 + (κ/2)^2] = κc P / (2π h f)`.
pub fn steady_state_response(p: &DuffingParams, f_probe: f64) -> Result<Vec<Root>> {
    p.validate()?;
    if !(f_probe > 0.0) {
        return Err(Error::Domain(format!("probe frequency {f_probe} must be positive")));
    }
    let d = f_probe - p.f_lin;
    let k2 = 0.25 * p.kappa_tot * p.kappa_tot;
    let rhs = p.drive();
    if p.beta == 0.0 || rhs == 0.0 {
        return Ok(vec![Root {
            photons: rhs / (d * d + k2),
            branch: Branch::Single,
        }]);
    }
    let b = p.beta;
    let roots: Vec<f64> = cubic_roots([b * b, -2.0 * b * d, d * d + k2, -rhs])
        .into_iter()
        .filter(|&n| n > 0.0)
        .collect();
    Ok(match roots.len() {
        3 => vec![
            Root { photons: roots[0], branch: Branch::Lower },
            Root { photons: roots[1], branch: Branch::Middle },
            Root { photons: roots[2], branch: Branch::Upper },
        ],
        _ => vec![Root {
            photons: roots.last().copied().unwrap_or(0.0),
            branch: Branch::Single,
        }],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub power: f64,
    pub photons: f64,
    /// Probe detuning from `f_lin` in Hz.
    pub detuning: f64,
}

/// Onset of bistability: `n = κ/(√3 β)`, `δ = (√3/2) κ sign β`.
pub fn critical_point(p: &DuffingParams) -> Result<CriticalPoint> {
    p.validate()?;
    if p.beta == 0.0 {
        return Err(Error::NoBifurcation);
    }
    let k = p.kappa_tot;
    let n = k / (3f64.sqrt() * p.beta.abs());
    let d = 0.5 * 3f64.sqrt() * k * p.beta.signum();
    let lhs = n * ((d - p.beta * n).powi(2) + 0.25 * k * k);
    Ok(CriticalPoint {
        power: lhs * 2.0 * PI * H * p.f_lin / p.kappa_c,
        photons: n,
        detuning: d,
    })
}

pub fn bifurcation_power(p: &DuffingParams) -> Result<f64> {
    Ok(critical_point(p)?.power)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Up,
    Down,
}

/// Adiabatic sweep following the root continuous with the previous point.
pub fn sweep_branch(p: &DuffingParams, freqs: &[f64], dir: SweepDirection) -> Result<Vec<f64>> {
    let order: Vec<usize> = match dir {
        SweepDirection::Up => (0..freqs.len()).collect(),
        SweepDirection::Down => (0..freqs.len()).rev().collect(),
    };
    let mut out = vec![0.0; freqs.len()];
    let mut prev: Option<f64> = None;
    for i in order {
        let roots = steady_state_response(p, freqs[i])?;
        let stable = roots.iter().filter(|r| r.branch.stable()).map(|r| r.photons);
        let n = match prev {
            None => stable.fold(f64::INFINITY, f64::min),
            Some(q) => stable.min_by(|a, b| (a - q).abs().total_cmp(&(b - q).abs())).unwrap_or(0.0),
        };
        out[i] = n;
        prev = Some(n);
    }
    Ok(out)
}

/// Area between the up and down sweep responses, in photons times Hz.
pub fn hysteresis_area(p: &DuffingParams, freqs: &[f64]) -> Result<f64> {
    let up = sweep_branch(p, freqs, SweepDirection::Up)?;
    let down = sweep_branch(p, freqs, SweepDirection::Down)?;
    Ok((1..freqs.len())
        .map(|i| {
            let w = freqs[i] - freqs[i - 1];
            0.5 * w * ((up[i] - down[i]).abs() + (up[i - 1] - down[i - 1]).abs())
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearState {
    pub f: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetastableStates {
    pub state1: LinearState,
    pub state2: LinearState,
    /// Drive power where the shift saturates, in W.
    pub p_sat: f64,
}

/// Decades below `p_sat` over which the two-state model interpolates.
pub const TRANSITION_DECADES: f64 = 2.0;

impl MetastableStates {
    /// The measured low- and high-power states of the 98.2 GHz device.
    pub fn measured() -> Self {
        let f1 = 98.218508e9;
        Self {
            state1: LinearState { f: f1, q: 3e7 },
            state2: LinearState { f: f1 + 24e3, q: 1.3e7 },
            p_sat: dbm_to_watt(-80.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: &LinearState| s.f > 0.0 && s.q > 0.0 && s.f.is_finite() && s.q.is_finite();
        if !ok(&self.state1) || !ok(&self.state2) || !(self.p_sat > 0.0) {
            return Err(Error::Domain("states need positive f, Q and saturation power".into()));
        }
        Ok(())
    }

    /// Interpolation weight, 0 far below `p_sat` and 1 from `p_sat` on.
    pub fn weight(&self, power: f64) -> f64 {
        if !(power > 0.0) {
            return 0.0;
        }
        (1.0 + (power / self.p_sat).log10() / TRANSITION_DECADES).clamp(0.0, 1.0)
    }

    /// Frequency of maximum response at `power`.
    pub fn peak_frequency(&self, power: f64) -> f64 {
        self.state1.f + self.weight(power) * (self.state2.f - self.state1.f)
    }

    // Duffing model whose upper-branch peak (height 1) sits at the interpolated frequency
    fn model(&self, power: f64) -> DuffingParams {
        let w = self.weight(power);
        let shift = w * (self.state2.f - self.state1.f);
        let tilt = 4.0 * w * (1.0 - w);
        let q = (self.state1.q.ln() + w * (self.state2.q.ln() - self.state1.q.ln())).exp();
        let f = self.state1.f + shift;
        let kappa = f / q;
        // drive() equals (κ/2)^2, so the Lorentzian peak holds one photon
        let power_unit = 0.25 * kappa * kappa * 2.0 * PI * H * (self.state1.f + shift * (1.0 - tilt)) / kappa;
        DuffingParams {
            f_lin: self.state1.f + shift * (1.0 - tilt),
            kappa_tot: kappa,
            kappa_c: kappa,
            beta: shift * tilt,
            power: power_unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub freq_hz: f64,
    pub response_mag: f64,
    pub branch_label: String,
}

/// Normalized response along an upward sweep: Lorentzian at state 1 for low power,
/// Lorentzian at state 2 from `p_sat` on, Duffing-tilted in between.
pub fn two_state_lineshape(m: &MetastableStates, power: f64, f_probe: &[f64]) -> Result<Vec<SpectrumPoint>> {
    m.validate()?;
    if !(power >= 0.0) {
        return Err(Error::Domain(format!("power {power} must be non-negative")));
    }
    let p = m.model(power);
    let resp = sweep_branch(&p, f_probe, SweepDirection::Up)?;
    f_probe
        .iter()
        .zip(resp)
        .map(|(&f, n)| {
            let roots = steady_state_response(&p, f)?;
            let branch = roots
                .iter()
                .filter(|r| r.branch.stable())
                .min_by(|a, b| (a.photons - n).abs().total_cmp(&(b.photons - n).abs()))
                .map(|r| r.branch)
                .unwrap_or(Branch::Single);
            Ok(SpectrumPoint {
                freq_hz: f,
                response_mag: n,
                branch_label: branch.label().into(),
            })
        })
        .collect()
}

/// All roots over a sweep, normalized to the linear peak photon number.
pub fn response_spectrum(p: &DuffingParams, f_probe: &[f64]) -> Result<Vec<SpectrumPoint>> {
    let k2 = 0.25 * p.kappa_tot * p.kappa_tot;
    let peak = p.drive() / k2;
    let norm = if peak > 0.0 { peak } else { 1.0 };
    let mut out = Vec::new();
    for &f in f_probe {
        for r in steady_state_response(p, f)? {
            out.push(SpectrumPoint {
                freq_hz: f,
                response_mag: r.photons / norm,
                branch_label: r.branch.label().into(),
            });
        }
    }
    Ok(out)
}

pub fn write_spectrum<W: Write>(points: &[SpectrumPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonfit::{model_s11, Environment, ResonanceFit};
    use proptest::prelude::*;

    fn base(beta: f64, power: f64) -> DuffingParams {
        DuffingParams {
            f_lin: 98.2e9,
            kappa_tot: 3.3e3,
            kappa_c: 1.5e3,
            beta,
            power,
        }
    }

    fn grid(p: &DuffingParams, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| p.f_lin + (lo + (hi - lo) * i as f64 / (n - 1) as f64) * p.kappa_tot)
            .collect()
    }

    #[test]
    fn linear_limit_matches_reflection_model() {
        let p = base(0.0, 1e-15);
        let (f0, qtot) = (p.f_lin, p.f_lin / p.kappa_tot);
        let qc = p.f_lin / p.kappa_c;
        let qi = 1.0 / (1.0 / qtot - 1.0 / qc);
        let fit = ResonanceFit::new(f0, qi, qc, Environment { a: 1.0, phi: 0.0, tau: 0.0 }).unwrap();
        for f in grid(&p, -5.0, 5.0, 101) {
            let n = steady_state_response(&p, f).unwrap()[0].photons;
            // |1 - S11|^2 = κc^2 / (δ^2 + κ^2/4)
            let s = model_s11(&fit, f);
            let oracle = (1.0 - s).norm_sqr() * p.power / (2.0 * PI * H * p.f_lin * p.kappa_c);
            assert!((n / oracle - 1.0).abs() < 1e-9, "{n} {oracle}");
        }
    }

    #[test]
    fn critical_scalings() {
        let p = base(1e-3, 0.0);
        let c = critical_point(&p).unwrap();
        let c2 = critical_point(&DuffingParams { beta: 2e-3, ..p }).unwrap();
        assert!((c2.photons / c.photons - 0.5).abs() < 1e-12);
        let k2 = critical_point(&DuffingParams { kappa_tot: 6.6e3, kappa_c: 1.5e3, ..p }).unwrap();
        assert!((k2.power / c.power - 8.0).abs() < 1e-9);
        assert!(matches!(bifurcation_power(&base(0.0, 0.0)), Err(Error::NoBifurcation)));
    }

    #[test]
    fn triple_root_at_threshold() {
        let p = base(1e-3, 0.0);
        let c = critical_point(&p).unwrap();
        let q = p.with_power(c.power);
        // cubic coefficients in the scaled variable n / n_c
        let d = c.detuning;
        let b = q.beta;
        let nc = c.photons;
        let poly = |n: f64| n * ((d - b * n).powi(2) + 0.25 * q.kappa_tot.powi(2)) - q.drive();
        let dpoly = |n: f64| (d - b * n).powi(2) + 0.25 * q.kappa_tot.powi(2) - 2.0 * b * n * (d - b * n);
        let scale = q.drive();
        assert!(poly(nc).abs() < 1e-9 * scale);
        assert!((dpoly(nc) * nc).abs() < 1e-9 * scale);
        let hot = p.with_power(1.2 * c.power);
        let triple = (0..400)
            .map(|i| q.f_lin + d * (1.0 + i as f64 / 200.0))
            .filter(|&f| steady_state_response(&hot, f).unwrap().len() == 3)
            .count();
        assert!(triple > 0);
    }

    #[test]
    fn below_threshold_single_root() {
        let p = base(1e-3, 0.0);
        let pc = bifurcation_power(&p).unwrap();
        let q = p.with_power(0.9 * pc);
        for f in grid(&q, -3.0, 6.0, 900) {
            assert_eq!(steady_state_response(&q, f).unwrap().len(), 1);
        }
    }

    #[test]
    fn bistable_window_is_up_shifted() {
        let p = base(1e-3, 0.0);
        let q = p.with_power(5.0 * bifurcation_power(&p).unwrap());
        let freqs = grid(&q, -3.0, 10.0, 1300);
        let triple: Vec<f64> = freqs
            .iter()
            .copied()
            .filter(|&f| steady_state_response(&q, f).unwrap().len() == 3)
            .collect();
        assert!(!triple.is_empty());
        assert!(triple.iter().all(|&f| f > q.f_lin));
        assert!(hysteresis_area(&q, &freqs).unwrap() > 0.0);
        let below = p.with_power(0.5 * bifurcation_power(&p).unwrap());
        assert!(hysteresis_area(&below, &freqs).unwrap() < 1e-9);
    }

    #[test]
    fn two_state_endpoints() {
        let m = MetastableStates::measured();
        assert_eq!(m.peak_frequency(0.0), 98.218508e9);
        assert!((m.peak_frequency(m.p_sat) - m.state1.f - 24e3).abs() < 1e-6);
        let k1 = m.state1.f / m.state1.q;
        let freqs: Vec<f64> = (0..201).map(|i| m.state1.f + (i as f64 - 100.0) * 0.05 * k1).collect();
        let s = two_state_lineshape(&m, 0.0, &freqs).unwrap();
        for pt in &s {
            let d = pt.freq_hz - m.state1.f;
            let lor = 0.25 * k1 * k1 / (d * d + 0.25 * k1 * k1);
            assert!((pt.response_mag - lor).abs() < 1e-9);
        }
        let k2 = m.state2.f / m.state2.q;
        let hi = two_state_lineshape(&m, 10.0 * m.p_sat, &freqs).unwrap();
        for pt in &hi {
            let d = pt.freq_hz - m.state2.f;
            let lor = 0.25 * k2 * k2 / (d * d + 0.25 * k2 * k2);
            assert!((pt.response_mag - lor).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_header() {
        let p = base(1e-3, 1e-16);
        let s = response_spectrum(&p, &grid(&p, -1.0, 1.0, 5)).unwrap();
        let mut buf = Vec::new();
        write_spectrum(&s, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("freq_hz,response_mag,branch_label\n"));
    }

    proptest! {
        #[test]
        fn peak_monotone_in_power(a in -100.0..-60.0f64, b in 0.0..20.0f64) {
            let m = MetastableStates::measured();
            prop_assert!(m.peak_frequency(dbm_to_watt(a + b)) >= m.peak_frequency(dbm_to_watt(a)));
        }

        #[test]
        fn max_photons_monotone_in_power(x in -3.0..8.0f64, s in 1.0..10.0f64) {
            let p = base(1e-3, 0.0);
            let pc = bifurcation_power(&p).unwrap();
            let f = p.f_lin + x * p.kappa_tot;
            let top = |w: f64| steady_state_response(&p.with_power(w), f).unwrap().iter().map(|r| r.photons).fold(0.0, f64::max);
            prop_assert!(top(s * pc * 1.3) >= top(s * pc) * (1.0 - 1e-12));
        }

        #[test]
        fn roots_satisfy_cubic(x in -3.0..8.0f64, s in 0.1..10.0f64) {
            let p = base(1e-3, 0.0);
            let q = p.with_power(s * bifurcation_power(&p).unwrap());
            let f = q.f_lin + x * q.kappa_tot;
            let d = f - q.f_lin;
            for r in steady_state_response(&q, f).unwrap() {
                let n = r.photons;
                let lhs = n * ((d - q.beta * n).powi(2) + 0.25 * q.kappa_tot.powi(2));
                prop_assert!((lhs / q.drive() - 1.0).abs() < 1e-9);
            }
        }
    }
}
