//! Rydberg hybrid cavity-QED figures of merit and weak-probe cavity EIT spectra.
//!
//! Every rate, coupling and detuning is a cyclic frequency in Hz, so `g` here is the
//! `g / 2π` of angular conventions.

use crate::consts::{C0, EPS0, H, HBAR};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

pub const FIELD_CONVENTION: &str = "zero-point field E = sqrt(h f / (2 eps0 V))";
pub const RATE_CONVENTION: &str = "cyclic frequencies (Hz); g means g/2pi = d E / h";

/// Single-photon coupling of the mm-wave transition, Hz.
pub const G_MM: f64 = 460e3;
/// Single-atom cooperativity the default Rydberg linewidth is sized to reproduce.
pub const C_MM_TARGET: f64 = 2.2e4;
pub const MM_F0: f64 = 98.2e9;
pub const MM_Q: f64 = 3e7;

/// Rydberg linewidth implied by `C = 4 g^2 / (Γ κ)` at the default coupling and cavity.
pub fn default_rydberg_linewidth() -> f64 {
    4.0 * G_MM * G_MM / (C_MM_TARGET * (MM_F0 / MM_Q))
}

/// Vacuum field per photon in V/m.
pub fn per_photon_field(f: f64, v: f64) -> Result<f64> {
    if !(f > 0.0) || !(v > 0.0) {
        return Err(Error::Domain(format!("frequency {f} and volume {v} must be positive")));
    }
    Ok((H * f / (2.0 * EPS0 * v)).sqrt())
}

/// `g = d E / (2π ħ)` in Hz.
pub fn coupling_g(d: f64, e: f64) -> Result<f64> {
    if !(d >= 0.0) || !(e >= 0.0) {
        return Err(Error::Domain("dipole and field must be non-negative".into()));
    }
    Ok(d * e / (2.0 * PI * HBAR))
}

/// `C = (24 F / π) / (k w0)^2`.
pub fn coop_optical(finesse: f64, w0: f64, wavelength: f64) -> Result<f64> {
    if !(finesse > 0.0) || !(w0 > 0.0) || !(wavelength > 0.0) {
        return Err(Error::Domain("finesse, waist and wavelength must be positive".into()));
    }
    let kw = 2.0 * PI / wavelength * w0;
    Ok(24.0 * finesse / PI / (kw * kw))
}

/// `C = 4 g^2 / (Γ κ)`.
pub fn coop_mm(g: f64, gamma: f64, kappa: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(kappa > 0.0) {
        return Err(Error::Domain("linewidths must be positive".into()));
    }
    Ok(4.0 * g * g / (gamma * kappa))
}

pub fn collective_enhancement(g: f64, n: f64) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::Domain(format!("atom number {n} must be non-negative")));
    }
    Ok(g * n.sqrt())
}

/// Finesse of a sub-wavelength resonator, equal to its Q.
pub fn finesse_q_equivalence(f0: f64, q: f64) -> Result<f64> {
    if !(f0 > 0.0) || !(q > 0.0) {
        return Err(Error::Domain("f0 and Q must be positive".into()));
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalCavity {
    pub finesse: f64,
    pub waist_m: f64,
    pub wavelength_m: f64,
    /// Single-atom coupling, Hz.
    pub g_hz: f64,
    /// Full linewidth, Hz.
    pub kappa_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmCavity {
    pub f0_hz: f64,
    pub q: f64,
    pub volume_m3: f64,
    pub g_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atoms {
    pub n_atoms: f64,
    pub gamma_5p_hz: f64,
    pub gamma_ryd_hz: f64,
    /// Linewidth of the upper Rydberg level of the mm-wave transition.
    #[serde(default)]
    pub gamma_mid_hz: Option<f64>,
    pub omega_b_hz: f64,
    pub n_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridParams {
    pub optical: OpticalCavity,
    pub mmwave: MmCavity,
    pub atoms: Atoms,
}

impl HybridParams {
    /// Values sized to the 98.2 GHz cavity and the 780 nm Fabry-Perot of the hybrid setup.
    pub fn reference() -> Self {
        let f0 = MM_F0;
        let lambda = C0 / f0;
        Self {
            optical: OpticalCavity {
                finesse: 1e4,
                waist_m: 80e-6,
                wavelength_m: 780e-9,
                g_hz: 600e3,
                kappa_hz: 1e6,
            },
            mmwave: MmCavity {
                f0_hz: f0,
                q: MM_Q,
                volume_m3: 0.14 * lambda.powi(3),
                g_hz: G_MM,
            },
            atoms: Atoms {
                n_atoms: 1e4,
                gamma_5p_hz: 6.07e6,
                gamma_ryd_hz: default_rydberg_linewidth(),
                gamma_mid_hz: None,
                omega_b_hz: 60e6,
                n_mm: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.atoms;
        let rates = [
            self.optical.g_hz,
            self.optical.kappa_hz,
            self.mmwave.g_hz,
            a.n_atoms,
            a.gamma_5p_hz,
            a.gamma_ryd_hz,
            a.gamma_mid_hz.unwrap_or(0.0),
            a.omega_b_hz,
            a.n_mm,
        ];
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Domain("rates and counts must be non-negative".into()));
        }
        if !(self.optical.finesse > 0.0) || !(self.mmwave.q > 0.0) || !(self.optical.kappa_hz > 0.0) {
            return Err(Error::Domain("finesse, Q and cavity linewidth must be positive".into()));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        let a = &self.atoms;
        if a.n_atoms == 0.0 || self.optical.g_hz == 0.0 {
            Regime::Bare
        } else if a.omega_b_hz == 0.0 {
            Regime::Rabi
        } else if a.n_mm == 0.0 || self.mmwave.g_hz == 0.0 {
            Regime::Eit
        } else {
            Regime::MmSplit
        }
    }

    /// Atomic self-energy entering the cavity denominator.
    pub fn self_energy(&self, delta: f64) -> Complex64 {
        let a = &self.atoms;
        let i = Complex64::i();
        let g_mid = a.gamma_mid_hz.unwrap_or(a.gamma_ryd_hz);
        let inner = i * delta + 0.5 * g_mid;
        let mm = self.mmwave.g_hz.powi(2) * a.n_mm;
        let ryd = i * delta + 0.5 * a.gamma_ryd_hz + if mm > 0.0 { mm / inner } else { Complex64::new(0.0, 0.0) };
        let ctl = 0.25 * a.omega_b_hz * a.omega_b_hz;
        let p5 = i * delta + 0.5 * a.gamma_5p_hz + if ctl > 0.0 { ctl / ryd } else { Complex64::new(0.0, 0.0) };
        let gn = self.optical.g_hz.powi(2) * a.n_atoms;
        if gn > 0.0 {
            gn / p5
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Bare,
    Rabi,
    Eit,
    MmSplit,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Bare => "bare",
            Regime::Rabi => "rabi",
            Regime::Eit => "eit",
            Regime::MmSplit => "mm_split",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSpectrum {
    pub detunings: Vec<f64>,
    pub transmission: Vec<f64>,
    pub regime: Regime,
}

impl TransmissionSpectrum {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["detuning_hz", "transmission"])?;
        for (d, t) in self.detunings.iter().zip(&self.transmission) {
            w.write_record([d.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Weak-probe transmission `|(κ/2) / (iδ + κ/2 + Σ(δ))|^2`, unity at bare resonance.
pub fn eit_transmission(p: &HybridParams, detunings: &[f64]) -> Result<TransmissionSpectrum> {
    p.validate()?;
    if detunings.is_empty() {
        return Err(Error::Domain("detuning array is empty".into()));
    }
    if detunings.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("detunings must be strictly increasing".into()));
    }
    let half = 0.5 * p.optical.kappa_hz;
    let transmission = detunings
        .iter()
        .map(|&d| {
            let den = Complex64::new(half, d) + p.self_energy(d);
            (half / den.norm()).powi(2).min(1.0)
        })
        .collect();
    Ok(TransmissionSpectrum {
        detunings: detunings.to_vec(),
        transmission,
        regime: p.regime(),
    })
}

// interior local maxima refined by a parabola through three points
fn local_maxima(s: &TransmissionSpectrum) -> Vec<(f64, f64)> {
    let (x, y) = (&s.detunings, &s.transmission);
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
            let den = a - 2.0 * b + c;
            let t = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            let (x0, x1) = if t >= 0.0 { (x[i], x[i + 1]) } else { (x[i], x[i - 1]) };
            out.push((x0 + t.abs() * (x1 - x0), b - 0.25 * (a - c) * t));
        }
    }
    out
}

/// Distance between the two highest local maxima, 0 for a bare cavity.
pub fn extract_splitting(s: &TransmissionSpectrum) -> Result<f64> {
    let mut peaks = local_maxima(s);
    if s.regime == Regime::Bare {
        return if peaks.len() <= 1 {
            Ok(0.0)
        } else {
            Err(Error::Shape {
                found: peaks.len(),
                expected: 1,
            })
        };
    }
    if peaks.len() < 2 {
        return Err(Error::Shape {
            found: peaks.len(),
            expected: 2,
        });
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok((peaks[0].0 - peaks[1].0).abs())
}

/// Evenly spaced detunings over `[-half_span, half_span]`.
pub fn detuning_grid(half_span: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| -half_span + 2.0 * half_span * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(rename = "System")]
    pub system: String,
    #[serde(rename = "V/λ³")]
    pub v_over_lambda3: String,
    #[serde(rename = "f GHz")]
    pub f_ghz: String,
    #[serde(rename = "Finesse")]
    pub finesse: String,
}

const LITERATURE: [(&str, &str, &str, &str); 6] = [
    ("2D superconducting resonators", "1e-6", "1.53", "1e6 - 3e7"),
    ("3D superconducting resonators for qubits", "0.1", "11", "7e8"),
    ("Accelerator cavity", "1", "1-10", "1e11"),
    ("MM-wave Fabry-Perot cavity", "260", "51", "4.6e9"),
    ("Optical Fabry-Perot microcavity", "6000", "4.6e5", "1e5"),
    ("Microsphere cavity", "9000", "3e5", "1e6"),
];

/// Comparison rows with this cavity inserted third, matching the literature order.
pub fn table1(v_over_lambda3: f64, f0: f64, q: f64) -> Result<Vec<TableRow>> {
    let finesse = finesse_q_equivalence(f0, q)?;
    let ours = TableRow {
        system: "This mm-wave cavity".into(),
        v_over_lambda3: format!("{v_over_lambda3:.2}"),
        f_ghz: format!("{:.1}", f0 / 1e9),
        finesse: format!("{finesse:.1e}"),
    };
    let mut rows: Vec<TableRow> = LITERATURE
        .iter()
        .map(|&(s, v, f, fin)| TableRow {
            system: s.into(),
            v_over_lambda3: v.into(),
            f_ghz: f.into(),
            finesse: fin.into(),
        })
        .collect();
    rows.insert(2, ours);
    Ok(rows)
}

pub fn write_table1<W: Write>(rows: &[TableRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiguresOfMerit {
    pub e_mm_v_per_m: f64,
    pub g_mm_hz: f64,
    pub kappa_mm_hz: f64,
    pub gamma_ryd_hz: f64,
    pub c_mm: f64,
    pub c_opt: f64,
    pub g_collective_hz: f64,
    pub field_convention: String,
    pub rate_convention: String,
}

pub fn figures_of_merit(p: &HybridParams) -> Result<FiguresOfMerit> {
    p.validate()?;
    let kappa = p.mmwave.f0_hz / p.mmwave.q;
    Ok(FiguresOfMerit {
        e_mm_v_per_m: per_photon_field(p.mmwave.f0_hz, p.mmwave.volume_m3)?,
        g_mm_hz: p.mmwave.g_hz,
        kappa_mm_hz: kappa,
        gamma_ryd_hz: p.atoms.gamma_ryd_hz,
        c_mm: coop_mm(p.mmwave.g_hz, p.atoms.gamma_ryd_hz, kappa)?,
        c_opt: coop_optical(p.optical.finesse, p.optical.waist_m, p.optical.wavelength_m)?,
        g_collective_hz: collective_enhancement(p.optical.g_hz, p.atoms.n_atoms)?,
        field_convention: FIELD_CONVENTION.into(),
        rate_convention: RATE_CONVENTION.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn per_photon_field_of_the_mm_cavity() {
        let lambda = C0 / 98.2e9;
        let v = 0.14 * lambda.powi(3);
        let e = per_photon_field(98.2e9, v).unwrap();
        let hand = (HBAR * 2.0 * PI * 98.2e9 / (2.0 * EPS0 * v)).sqrt();
        assert!((e / hand - 1.0).abs() < 1e-12);
        assert!((e - 0.03).abs() < 0.002, "{e}");
        assert!((per_photon_field(98.2e9, 4.0 * v).unwrap() / e - 0.5).abs() < 1e-12);
        let scaled = per_photon_field(4.0 * 98.2e9, 0.14 * (lambda / 4.0).powi(3)).unwrap();
        assert!((scaled / e - 16.0).abs() < 1e-9);
    }

    #[test]
    fn coupling_inversion() {
        let lambda = C0 / 98.2e9;
        let e = per_photon_field(98.2e9, 0.14 * lambda.powi(3)).unwrap();
        let d = 2.0 * PI * HBAR * G_MM / e;
        assert!((coupling_g(d, e).unwrap() - G_MM).abs() < 1e-6);
        assert_eq!(coupling_g(0.0, e).unwrap(), 0.0);
    }

    #[test]
    fn cooperativities() {
        let c = coop_optical(1e4, 80e-6, 780e-9).unwrap();
        assert!((c - 0.184).abs() < 5e-4, "{c}");
        assert!((coop_optical(2e4, 80e-6, 780e-9).unwrap() / c - 2.0).abs() < 1e-12);
        assert!((coop_optical(1e4, 160e-6, 780e-9).unwrap() / c - 0.25).abs() < 1e-12);
        let gamma = default_rydberg_linewidth();
        assert!((gamma - 11.75e3).abs() < 10.0, "{gamma}");
        let kappa = MM_F0 / MM_Q;
        assert!((kappa - 3.2733e3).abs() < 0.1);
        let cm = coop_mm(G_MM, gamma, kappa).unwrap();
        assert!((cm / 2.2e4 - 1.0).abs() < 1e-12);
        assert!((coop_mm(2.0 * G_MM, gamma, kappa).unwrap() / cm - 4.0).abs() < 1e-12);
    }

    #[test]
    fn collective_and_finesse() {
        assert_eq!(collective_enhancement(5.0, 1.0).unwrap(), 5.0);
        assert!((collective_enhancement(5.0, 100.0).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(collective_enhancement(5.0, 0.0).unwrap(), 0.0);
        assert_eq!(finesse_q_equivalence(98.2e9, 3e7).unwrap(), 3e7);
    }

    #[test]
    fn bare_cavity_is_lorentzian() {
        let mut p = HybridParams::reference();
        p.atoms.n_atoms = 0.0;
        let d = detuning_grid(5e6, 401);
        let s = eit_transmission(&p, &d).unwrap();
        assert_eq!(s.regime, Regime::Bare);
        for (x, t) in d.iter().zip(&s.transmission) {
            let k = 0.5 * p.optical.kappa_hz;
            assert!((t - k * k / (x * x + k * k)).abs() < 1e-12);
        }
        assert_eq!(extract_splitting(&s).unwrap(), 0.0);
    }

    #[test]
    fn rabi_splitting_matches_coupled_modes() {
        let mut p = HybridParams::reference();
        p.atoms.omega_b_hz = 0.0;
        let gn = collective_enhancement(p.optical.g_hz, p.atoms.n_atoms).unwrap();
        let s = eit_transmission(&p, &detuning_grid(2.0 * gn, 8001)).unwrap();
        assert_eq!(s.regime, Regime::Rabi);
        let split = extract_splitting(&s).unwrap();
        assert!((split / (2.0 * gn) - 1.0).abs() < 0.02, "{split} {gn}");
    }

    #[test]
    fn mm_splitting_follows_square_root() {
        let mut p = HybridParams::reference();
        let d = detuning_grid(12e6, 24001);
        let mut split = |n: f64| {
            p.atoms.n_mm = n;
            let s = eit_transmission(&p, &d).unwrap();
            assert_eq!(s.regime, Regime::MmSplit);
            extract_splitting(&s).unwrap()
        };
        let a = split(4.0);
        let b = split(16.0);
        assert!((b / a - 2.0).abs() < 0.02, "{a} {b}");
    }

    #[test]
    fn eit_has_central_window() {
        let p = HybridParams::reference();
        let s = eit_transmission(&p, &[-1e3, 0.0, 1e3]).unwrap();
        assert_eq!(s.regime, Regime::Eit);
        assert!(s.transmission[1] > 0.5);
        assert!(extract_splitting(&TransmissionSpectrum {
            detunings: vec![0.0, 1.0, 2.0],
            transmission: vec![0.0, 1.0, 0.0],
            regime: Regime::Rabi,
        })
        .is_err());
        assert!(eit_transmission(&p, &[]).is_err());
        assert!(eit_transmission(&p, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn table_has_the_cavity_row() {
        let rows = table1(0.14, 98.2e9, 3e7).unwrap();
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[2].v_over_lambda3, "0.14");
        assert_eq!(rows[2].f_ghz, "98.2");
        assert_eq!(rows[2].finesse, "3.0e7");
        let mut buf = Vec::new();
        write_table1(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("System,V/λ³,f GHz,Finesse\n"));
    }

    proptest! {
        #[test]
        fn transmission_is_bounded(
            n in 0.0..1e5f64, g in 0.0..1e6f64, k in 1e3..1e7f64, g5 in 0.0..1e7f64,
            gr in 0.0..1e5f64, om in 0.0..1e8f64, nmm in 0.0..100.0f64, d in -1e8..1e8f64,
        ) {
            let mut p = HybridParams::reference();
            p.atoms.n_atoms = n;
            p.optical.g_hz = g;
            p.optical.kappa_hz = k;
            p.atoms.gamma_5p_hz = g5;
            p.atoms.gamma_ryd_hz = gr;
            p.atoms.omega_b_hz = om;
            p.atoms.n_mm = nmm;
            let s = eit_transmission(&p, &[d]).unwrap();
            prop_assert!(s.transmission[0] >= 0.0 && s.transmission[0] <= 1.0);
        }

        #[test]
        fn coop_mm_linear_in_q(q in 1e5..1e9f64, s in 1.1..10.0f64) {
            let g = default_rydberg_linewidth();
            let c1 = coop_mm(G_MM, g, MM_F0 / q).unwrap();
            let c2 = coop_mm(G_MM, g, MM_F0 / (s * q)).unwrap();
            prop_assert!((c2 / c1 / s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn coop_mm_metamorphic(s in 0.1..10.0f64) {
            let g = default_rydberg_linewidth();
            let k = MM_F0 / MM_Q;
            let c = coop_mm(G_MM, g, k).unwrap();
            // g^2 scaling with Γκ leaves C fixed, a lone rate change does not
            prop_assert!((coop_mm(G_MM * s, g * s, k * s).unwrap() / c - 1.0).abs() < 1e-12);
            if (s - 1.0).abs() > 1e-3 {
                prop_assert!((coop_mm(G_MM, g * s, k * s).unwrap() / c - 1.0).abs() > 1e-6);
            }
        }
    }
}
