//! One-port reflection of a resonator: model, synthesis and fitting.
//!
//! The fit follows the usual chain: cable delay from the off-resonant phase slope,
//! an algebraic circle fit in the complex plane, a phase-versus-frequency fit for `f0`
//! and `Qtot`, and finally a complex least-squares refinement of all six parameters.

use crate::consts::HBAR;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};

pub const MIN_TRACE_POINTS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTrace {
    pub frequencies: Vec<f64>,
    pub s11: Vec<Complex64>,
    pub power_in: Option<f64>,
    pub temperature: Option<f64>,
}

/// Optional sidecar next to a trace CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    #[serde(default)]
    pub power_dbm: Option<f64>,
    #[serde(default)]
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    freq_hz: f64,
    re_s11: f64,
    im_s11: f64,
}

impl ReflectionTrace {
    pub fn new(frequencies: Vec<f64>, s11: Vec<Complex64>) -> Result<Self> {
        let t = Self {
            frequencies,
            s11,
            power_in: None,
            temperature: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.len() != self.s11.len() {
            return Err(Error::Domain(format!(
                "{} frequencies but {} samples",
                self.frequencies.len(),
                self.s11.len()
            )));
        }
        if self.frequencies.len() < MIN_TRACE_POINTS {
            return Err(Error::Domain(format!(
                "trace needs at least {MIN_TRACE_POINTS} points, got {}",
                self.frequencies.len()
            )));
        }
        if !self.frequencies.iter().all(|f| f.is_finite() && *f > 0.0) {
            return Err(Error::Domain("frequencies must be positive and finite".into()));
        }
        if self.frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("frequencies must be strictly increasing".into()));
        }
        if !self.s11.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Domain("s11 samples must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.frequencies[self.len() - 1] - self.frequencies[0]
    }

    /// Reads `freq_hz,re_s11,im_s11` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for col in ["freq_hz", "re_s11", "im_s11"] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::Parse(format!("missing column {col}")));
            }
        }
        let mut f = Vec::new();
        let mut s = Vec::new();
        for row in rdr.deserialize() {
            let r: TraceRow = row?;
            f.push(r.freq_hz);
            s.push(Complex64::new(r.re_s11, r.im_s11));
        }
        Self::new(f, s)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["freq_hz", "re_s11", "im_s11"])?;
        for (f, z) in self.frequencies.iter().zip(&self.s11) {
            w.write_record([format!("{f:.6}"), format!("{:.12e}", z.re), format!("{:.12e}", z.im)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn with_meta(mut self, meta: &TraceMeta) -> Self {
        self.power_in = meta.power_dbm.map(crate::consts::dbm_to_watt);
        self.temperature = meta.temperature_k;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub a: f64,
    pub phi: f64,
    /// Electrical delay in seconds.
    pub tau: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            a: 1.0,
            phi: 0.0,
            tau: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Parameter covariance in the order `f0, Qi, Qc, a, phi, tau`.
    pub covariance: Option<DMatrix<f64>>,
    pub condition: f64,
    pub ill_conditioned: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceFit {
    pub f0: f64,
    pub qi: f64,
    pub qc: f64,
    pub qtot: f64,
    pub env: Environment,
    /// RMS magnitude of the complex misfit.
    pub residual: f64,
    pub diagnostics: Diagnostics,
}

/// JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub f0_hz: f64,
    pub qi: f64,
    pub qc: f64,
    pub qtot: f64,
    pub a: f64,
    pub phi_rad: f64,
    pub tau_s: f64,
    pub residual: f64,
}

fn harmonic(qi: f64, qc: f64) -> f64 {
    1.0 / (1.0 / qi + 1.0 / qc)
}

impl ResonanceFit {
    pub fn new(f0: f64, qi: f64, qc: f64, env: Environment) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return Err(Error::Domain(format!("f0 {f0} must be positive")));
        }
        if !(qi > 0.0 && qc > 0.0) || !qi.is_finite() || !qc.is_finite() {
            return Err(Error::Domain(format!("quality factors must be positive, got Qi {qi} Qc {qc}")));
        }
        Ok(Self {
            f0,
            qi,
            qc,
            qtot: harmonic(qi, qc),
            env,
            residual: 0.0,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn report(&self) -> FitReport {
        FitReport {
            f0_hz: self.f0,
            qi: self.qi,
            qc: self.qc,
            qtot: self.qtot,
            a: self.env.a,
            phi_rad: self.env.phi,
            tau_s: self.env.tau,
            residual: self.residual,
        }
    }
}

impl From<&FitReport> for ResonanceFit {
    fn from(r: &FitReport) -> Self {
        Self {
            f0: r.f0_hz,
            qi: r.qi,
            qc: r.qc,
            qtot: harmonic(r.qi, r.qc),
            env: Environment {
                a: r.a,
                phi: r.phi_rad,
                tau: r.tau_s,
            },
            residual: r.residual,
            diagnostics: Diagnostics::default(),
        }
    }
}

fn s11_raw(f0: f64, qtot: f64, qc: f64, env: &Environment, f: f64) -> Complex64 {
    let x = (f - f0) / f0;
    let res = Complex64::new(1.0, 0.0) - (2.0 * qtot / qc) / Complex64::new(1.0, 2.0 * qtot * x);
    let phase = env.phi - 2.0 * PI * f * env.tau;
    Complex64::from_polar(env.a, phase) * res
}

/// `a e^{i phi} e^{-2 pi i f tau} [1 - (2Qtot/Qc) / (1 + 2i Qtot (f/f0 - 1))]`.
pub fn model_s11(fit: &ResonanceFit, f: f64) -> Complex64 {
    s11_raw(fit.f0, fit.qtot, fit.qc, &fit.env, f)
}

/// Samples the model on `points` frequencies spanning `span` around `f0`, plus
/// circular complex Gaussian noise with `E|n|^2 = noise_sigma^2`.
pub fn synth_trace(fit: &ResonanceFit, span: f64, points: usize, noise_sigma: f64, seed: u64) -> Result<ReflectionTrace> {
    if points < MIN_TRACE_POINTS {
        return Err(Error::Domain(format!("need at least {MIN_TRACE_POINTS} points")));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::Domain(format!("span {span} must be positive")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Domain(format!("noise sigma {noise_sigma} must be non-negative")));
    }
    let step = span / (points - 1) as f64;
    let f: Vec<f64> = (0..points).map(|i| fit.f0 - 0.5 * span + i as f64 * step).collect();
    let mut s: Vec<Complex64> = f.iter().map(|&x| model_s11(fit, x)).collect();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, noise_sigma / 2f64.sqrt()).expect("finite sigma");
        for z in &mut s {
            *z += Complex64::new(nd.sample(&mut rng), nd.sample(&mut rng));
        }
    }
    ReflectionTrace::new(f, s)
}

/// Linewidth `kappa = f0/Q` (Hz) and energy lifetime `tau = Q/(2 pi f0)` (s).
pub fn linewidth_and_lifetime(f0: f64, q: f64) -> Result<(f64, f64)> {
    if !(f0 > 0.0 && q > 0.0) {
        return Err(Error::Domain("f0 and Q must be positive".into()));
    }
    Ok((f0 / q, q / (2.0 * PI * f0)))
}

pub const PHOTON_CONVENTION: &str =
    "input-referred one-port: n = 4 kc P / (hbar w0 ktot^2), kc = w0/Qc, ktot = w0/Qtot";
pub const STORED_CONVENTION: &str = "stored energy: n = P / (hbar w0 ktot), P read as dissipated intracavity power";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberEstimate {
    pub n: f64,
    /// Same power read as dissipated intracavity power.
    pub n_stored: f64,
    pub convention: String,
    pub power_in: f64,
    pub f0: f64,
    pub qi: f64,
    pub qc: f64,
}

pub fn photon_number(fit: &ResonanceFit, power_in: f64) -> Result<PhotonNumberEstimate> {
    if !(power_in >= 0.0 && power_in.is_finite()) {
        return Err(Error::Domain(format!("power {power_in} must be non-negative")));
    }
    let w0 = 2.0 * PI * fit.f0;
    let kc = w0 / fit.qc;
    let kt = w0 / fit.qtot;
    Ok(PhotonNumberEstimate {
        n: 4.0 * kc * power_in / (HBAR * w0 * kt * kt),
        n_stored: power_in / (HBAR * w0 * kt),
        convention: PHOTON_CONVENTION.into(),
        power_in,
        f0: fit.f0,
        qi: fit.qi,
        qc: fit.qc,
    })
}

/// Input power giving `n` photons under the input-referred convention.
pub fn power_for_photons(fit: &ResonanceFit, n: f64) -> f64 {
    let w0 = 2.0 * PI * fit.f0;
    let kc = w0 / fit.qc;
    let kt = w0 / fit.qtot;
    n * HBAR * w0 * kt * kt / (4.0 * kc)
}

/// Least-squares problem with a fixed residual length.
pub(crate) struct LmOutcome {
    pub p: Vec<f64>,
    pub cost: f64,
    pub jtj: DMatrix<f64>,
    pub iterations: usize,
}

/// Levenberg-Marquardt with central-difference Jacobian; parameters should be O(1).
pub(crate) fn levenberg_marquardt<F>(res: F, m: usize, p0: &[f64], max_iter: usize) -> LmOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let np = p0.len();
    let mut p = p0.to_vec();
    let eval = |p: &[f64]| {
        let mut r = vec![0.0; m];
        res(p, &mut r);
        r
    };
    let cost_of = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let jac = |p: &[f64]| {
        let mut j = DMatrix::zeros(m, np);
        let mut q = p.to_vec();
        for k in 0..np {
            let h = 1e-6 * p[k].abs().max(1.0);
            q[k] = p[k] + h;
            let rp = eval(&q);
            q[k] = p[k] - h;
            let rm = eval(&q);
            q[k] = p[k];
            for i in 0..m {
                j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        j
    };
    let mut r = eval(&p);
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut j = jac(&p);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-30);
            }
            let step = match a.cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rq = eval(&q);
            let cq = cost_of(&rq);
            if cq.is_finite() && cq < cost {
                let small = step.iter().zip(&p).all(|(s, v)| s.abs() <= 1e-12 * v.abs().max(1.0));
                let rel = (cost - cq) / cost.max(f64::MIN_POSITIVE);
                p = q;
                r = rq;
                cost = cq;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if small || rel < 1e-15 {
                    it = max_iter;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
        j = jac(&p);
    }
    let jtj = j.transpose() * &j;
    LmOutcome {
        p,
        cost,
        jtj,
        iterations: it,
    }
}

// least-squares circle through points (Kasa), returns center and radius
fn circle_fit(z: &[Complex64]) -> Option<(Complex64, f64)> {
    let n = z.len() as f64;
    let mean = z.iter().sum::<Complex64>() / n;
    let mut a = DMatrix::<f64>::zeros(3, 3);
    let mut b = DVector::<f64>::zeros(3);
    for w in z {
        let d = w - mean;
        let row = [d.re, d.im, 1.0];
        let rhs = -(d.re * d.re + d.im * d.im);
        for i in 0..3 {
            for k in 0..3 {
                a[(i, k)] += row[i] * row[k];
            }
            b[i] += row[i] * rhs;
        }
    }
    let sol = a.lu().solve(&b)?;
    let c = Complex64::new(-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = c.norm_sqr() - sol[2];
    if !(r2 > 0.0) || !r2.is_finite() {
        return None;
    }
    Some((c + mean, r2.sqrt()))
}

fn unwrap(phases: &mut [f64]) {
    for i in 1..phases.len() {
        let mut d = phases[i] - phases[i - 1];
        while d > PI {
            phases[i] -= 2.0 * PI;
            d -= 2.0 * PI;
        }
        while d < -PI {
            phases[i] += 2.0 * PI;
            d += 2.0 * PI;
        }
    }
}

// delay from the phase slope of the outer tenth on each side, one intercept per wing
fn wing_delay(t: &ReflectionTrace) -> f64 {
    let n = t.len();
    let k = (n / 10).max(3);
    let mut ph: Vec<f64> = t.s11.iter().map(|z| z.arg()).collect();
    unwrap(&mut ph);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for wing in [0..k, n - k..n] {
        let m = wing.len() as f64;
        let fm = wing.clone().map(|i| t.frequencies[i]).sum::<f64>() / m;
        let pm = wing.clone().map(|i| ph[i]).sum::<f64>() / m;
        for i in wing {
            let df = t.frequencies[i] - fm;
            sxy += df * (ph[i] - pm);
            sxx += df * df;
        }
    }
    -(sxy / sxx) / (2.0 * PI)
}

fn undelay(t: &ReflectionTrace, tau: f64) -> Vec<Complex64> {
    t.frequencies
        .iter()
        .zip(&t.s11)
        .map(|(&f, &z)| z * Complex64::from_polar(1.0, 2.0 * PI * f * tau))
        .collect()
}

fn circle_misfit(z: &[Complex64]) -> f64 {
    match circle_fit(z) {
        Some((c, r)) => z.iter().map(|w| ((w - c).norm() - r).powi(2)).sum::<f64>(),
        None => f64::INFINITY,
    }
}

// noise level from neighbour differences, insensitive to the smooth resonance
fn noise_estimate(z: &[Complex64]) -> f64 {
    let n = z.len();
    let s: f64 = (1..n - 1)
        .map(|i| (z[i + 1] - 2.0 * z[i] + z[i - 1]).norm_sqr())
        .sum::<f64>()
        / (n - 2) as f64;
    (s / 6.0).sqrt()
}

fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

struct Initial {
    f0: f64,
    qtot: f64,
    qc: f64,
    env: Environment,
}

// mean over five neighbours of |z - edge|, `edge` being the off-resonant level
fn smoothed_deviation(z: &[Complex64]) -> Vec<f64> {
    let n = z.len();
    let k = (n / 20).max(2);
    let edge = (z[..k].iter().sum::<Complex64>() + z[n - k..].iter().sum::<Complex64>()) / (2 * k) as f64;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            (lo..hi).map(|j| (z[j] - edge).norm()).sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn initial_guess(t: &ReflectionTrace) -> Result<Initial> {
    let span = t.span();
    let tw = wing_delay(t);
    // a resonance must stand out once the bare cable delay is removed
    let zw = undelay(t, tw);
    let sigma = noise_estimate(&zw);
    let scale = zw.iter().map(|w| w.norm()).fold(0.0f64, f64::max);
    let feature = smoothed_deviation(&zw).into_iter().fold(0.0f64, f64::max);
    if !(feature > 4.0 * sigma / 5f64.sqrt()) || !(feature > 1e-9 * scale) {
        return Err(Error::NoResonance {
            radius: 0.5 * feature,
            noise: sigma,
        });
    }
    let half = 0.5 / span;
    let tau = golden(|x| circle_misfit(&undelay(t, x)), tw - half, tw + half, 60);
    let tau = if circle_misfit(&undelay(t, tau)) <= circle_misfit(&undelay(t, tw)) {
        tau
    } else {
        tw
    };
    let z = undelay(t, tau);
    let (c, r) = circle_fit(&z).ok_or(Error::NoResonance {
        radius: 0.0,
        noise: sigma,
    })?;
    if !(r > 2.0 * sigma / (t.len() as f64).sqrt()) {
        return Err(Error::NoResonance { radius: r, noise: sigma });
    }
    let smooth = smoothed_deviation(&z);
    let imax = (0..t.len()).max_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).unwrap();
    let f0 = t.frequencies[imax];
    let half_level = smooth[imax] / 2f64.sqrt();
    let mut lo = imax;
    while lo > 0 && smooth[lo] > half_level {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < t.len() && smooth[hi] > half_level {
        hi += 1;
    }
    let width = (t.frequencies[hi] - t.frequencies[lo]).max(2.0 * span / t.len() as f64);
    let qtot0 = f0 / width;

    // phase of the points around the circle center
    let mut th: Vec<f64> = z.iter().map(|w| (w - c).arg()).collect();
    unwrap(&mut th);
    let th0 = th[imax];
    let fr = f0;
    let wr = f0 / qtot0;
    let out = levenberg_marquardt(
        |p: &[f64], out: &mut [f64]| {
            let f0 = fr + p[1] * wr;
            let q = qtot0 * p[2].exp();
            for (i, (&f, &a)) in t.frequencies.iter().zip(&th).enumerate() {
                out[i] = a - (p[0] - 2.0 * (2.0 * q * (f - f0) / f0).atan());
            }
        },
        t.len(),
        &[th0, 0.0, 0.0],
        200,
    );
    let f0 = fr + out.p[1] * wr;
    let qtot = qtot0 * out.p[2].exp();
    let theta0 = out.p[0];
    let a_c = c - Complex64::from_polar(r, theta0);
    let a = a_c.norm();
    let qc = (qtot * a / r).max(qtot * 1.000001);
    Ok(Initial {
        f0,
        qtot,
        qc,
        env: Environment {
            a,
            phi: a_c.arg(),
            tau,
        },
    })
}

/// Complex least-squares fit of [`model_s11`] to a trace.
pub fn fit_reflection(trace: &ReflectionTrace, guess: Option<&ResonanceFit>) -> Result<ResonanceFit> {
    trace.validate()?;
    let init = match guess {
        Some(g) => Initial {
            f0: g.f0,
            qtot: g.qtot,
            qc: g.qc,
            env: g.env,
        },
        None => initial_guess(trace)?,
    };
    let qi0 = {
        let inv = 1.0 / init.qtot - 1.0 / init.qc;
        if inv > 0.0 {
            1.0 / inv
        } else {
            1e3 * init.qtot
        }
    };
    let span = trace.span();
    let fr = init.f0;
    let wr = init.f0 / init.qtot;
    let fc = 0.5 * (trace.frequencies[0] + trace.frequencies[trace.len() - 1]);
    // delay enters as a phase slope referenced to the trace center
    let unpack = |p: &[f64]| {
        let f0 = fr + p[0] * wr;
        let qi = qi0 * p[1].exp();
        let qc = init.qc * p[2].exp();
        let a = init.env.a * p[3];
        let tau = init.env.tau + p[5] / span;
        let phi = init.env.phi + p[4] + 2.0 * PI * fc * (tau - init.env.tau);
        (f0, qi, qc, Environment { a, phi, tau })
    };
    let out = levenberg_marquardt(
        |p: &[f64], out: &mut [f64]| {
            let (f0, qi, qc, env) = unpack(p);
            let qt = harmonic(qi, qc);
            for (i, (&f, &z)) in trace.frequencies.iter().zip(&trace.s11).enumerate() {
                let d = s11_raw(f0, qt, qc, &env, f) - z;
                out[2 * i] = d.re;
                out[2 * i + 1] = d.im;
            }
        },
        2 * trace.len(),
        &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        300,
    );
    let (f0, qi, qc, env) = unpack(&out.p);
    let mut fit = ResonanceFit::new(f0, qi, qc, env)?;
    let npts = trace.len();
    fit.residual = (out.cost / npts as f64).sqrt();

    // covariance in physical units via the chain rule of the scaled parameters
    let dof = (2 * npts).saturating_sub(6).max(1) as f64;
    let s2 = out.cost / dof;
    let scale = [wr, qi, qc, init.env.a, 1.0, 1.0 / span];
    let eig = nalgebra::SymmetricEigen::new(out.jtj.clone());
    let (mn, mx) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v.abs()), b.max(v.abs())));
    let condition = if mn > 0.0 { mx / mn } else { f64::INFINITY };
    let cov = out.jtj.clone().try_inverse().map(|inv| {
        DMatrix::from_fn(6, 6, |i, k| s2 * inv[(i, k)] * scale[i] * scale[k])
    });
    fit.diagnostics = Diagnostics {
        ill_conditioned: cov.is_none() || !(condition < 1e12),
        covariance: cov,
        condition,
        iterations: out.iterations,
    };
    let (lo, hi) = (trace.frequencies[0], trace.frequencies[npts - 1]);
    if !(fit.f0 >= lo && fit.f0 <= hi) {
        return Err(Error::NoResonance {
            radius: 0.0,
            noise: fit.residual,
        });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measured_fit() -> ResonanceFit {
        ResonanceFit::new(98.2e9, 3e7, 1e7, Environment::default()).unwrap()
    }

    #[test]
    fn model_limits() {
        let crit = ResonanceFit::new(98.2e9, 1e6, 1e6, Environment::default()).unwrap();
        assert!(model_s11(&crit, 98.2e9).norm() < 1e-12);
        let over = ResonanceFit::new(98.2e9, 1e12, 1e6, Environment::default()).unwrap();
        assert!((model_s11(&over, 98.2e9) + 1.0).norm() < 1e-5);
        let off = model_s11(&measured_fit(), 98.2e9 * 1.01);
        assert!((off.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn harmonic_sum_holds() {
        let f = measured_fit();
        assert!(((1.0 / f.qtot) / (1.0 / f.qi + 1.0 / f.qc) - 1.0).abs() < 1e-12);
        assert!(ResonanceFit::new(1e9, -1.0, 1.0, Environment::default()).is_err());
    }

    #[test]
    fn noiseless_round_trip() {
        let mut truth = measured_fit();
        truth.env = Environment {
            a: 0.7,
            phi: 0.4,
            tau: 2e-9,
        };
        let width = truth.f0 / truth.qtot;
        let t = synth_trace(&truth, 10.0 * width, 401, 0.0, 1).unwrap();
        let fit = fit_reflection(&t, None).unwrap();
        assert!((fit.qi / truth.qi - 1.0).abs() < 1e-3, "{}", fit.qi);
        assert!((fit.qc / truth.qc - 1.0).abs() < 1e-3, "{}", fit.qc);
        assert!(((fit.f0 - truth.f0) / width).abs() < 1e-3);
        assert!((fit.env.a / 0.7 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_trace_has_no_resonance() {
        let f: Vec<f64> = (0..64).map(|i| 1e9 + i as f64 * 1e3).collect();
        let s = vec![Complex64::new(0.5, 0.1); 64];
        let t = ReflectionTrace::new(f, s).unwrap();
        let r = fit_reflection(&t, None);
        assert!(matches!(r, Err(Error::NoResonance { .. })), "{r:?}");
    }

    #[test]
    fn synth_is_reproducible() {
        let f = measured_fit();
        let a = synth_trace(&f, 1e5, 64, 0.1, 7).unwrap();
        let b = synth_trace(&f, 1e5, 64, 0.1, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_trace(&f, 1e5, 64, 0.0, 7).unwrap();
        for (x, fr) in c.s11.iter().zip(&c.frequencies) {
            assert_eq!(*x, model_s11(&f, *fr));
        }
    }

    #[test]
    fn figures_of_merit() {
        let (k, tau) = linewidth_and_lifetime(98.2e9, 3e7).unwrap();
        assert!((k - 3273.333).abs() < 1e-3);
        assert!((tau - 48.6e-6).abs() < 0.05e-6, "{tau}");
        let (k2, tau2) = linewidth_and_lifetime(98.2e9, 6e7).unwrap();
        assert!((k2 * 2.0 - k).abs() < 1e-9 && (tau2 / tau - 2.0).abs() < 1e-12);
    }

    #[test]
    fn photon_number_linear() {
        let f = ResonanceFit::new(98.2e9, 3e7, 3e7, Environment::default()).unwrap();
        assert_eq!(photon_number(&f, 0.0).unwrap().n, 0.0);
        let p = power_for_photons(&f, 1.0);
        assert!((photon_number(&f, p).unwrap().n - 1.0).abs() < 1e-12);
        let n1 = photon_number(&f, 1e-18).unwrap().n;
        let n2 = photon_number(&f, 2e-18).unwrap().n;
        assert_eq!(n2, 2.0 * n1);
        assert!(photon_number(&f, -1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = synth_trace(&measured_fit(), 1e5, 32, 0.01, 3).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ReflectionTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 32);
        for (a, b) in back.s11.iter().zip(&t.s11) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(ReflectionTrace::read_csv("freq_hz,re\n1,2\n".as_bytes()).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]

        #[test]
        fn fit_inverts_synth(
            lq in 4.0..9.0f64, r in -0.5..0.5f64, f0 in 90e9..110e9f64,
            span in 5.0..20.0f64, a in 0.5..1.0f64, phi in -3.0..3.0f64, seed in 0u64..1000,
        ) {
            let qi = 10f64.powf(lq);
            let truth = ResonanceFit::new(f0, qi, qi * 10f64.powf(r), Environment { a, phi, tau: 1e-9 }).unwrap();
            let sigma = 1e-3 * a;
            let t = synth_trace(&truth, span * f0 / truth.qtot, 401, sigma, seed).unwrap();
            let fit = fit_reflection(&t, None).unwrap();
            proptest::prop_assert!((fit.qi / qi - 1.0).abs() < 0.02, "Qi {} vs {}", fit.qi, qi);
            proptest::prop_assert!((fit.qc / truth.qc - 1.0).abs() < 0.02);
            proptest::prop_assert!((fit.f0 / f0 - 1.0).abs() < 1e-3 / truth.qtot);
            proptest::prop_assert!((1.0 / fit.qtot - 1.0 / fit.qi - 1.0 / fit.qc).abs() * fit.qtot < 1e-12);
        }

        #[test]
        fn passive_without_delay(
            lq in 3.0..9.0f64, r in -2.0..2.0f64, a in 0.1..1.0f64, phi in -3.0..3.0f64, x in -50.0..50.0f64,
        ) {
            let qi = 10f64.powf(lq);
            let fit = ResonanceFit::new(1e11, qi, qi * 10f64.powf(r), Environment { a, phi, tau: 0.0 }).unwrap();
            let s = model_s11(&fit, 1e11 * (1.0 + x / fit.qtot));
            proptest::prop_assert!(s.norm() <= a * (1.0 + 1e-12));
        }

        #[test]
        fn photon_number_scales_linearly(lp in -22.0..-8.0f64, c in 0.01..100.0f64, lq in 4.0..9.0f64) {
            let f = ResonanceFit::new(98.2e9, 10f64.powf(lq), 1e7, Environment::default()).unwrap();
            let p = 10f64.powf(lp);
            let n1 = photon_number(&f, p).unwrap();
            let n2 = photon_number(&f, c * p).unwrap();
            proptest::prop_assert!((n2.n / (c * n1.n) - 1.0).abs() < 1e-12);
            proptest::prop_assert!((n2.n_stored / (c * n1.n_stored) - 1.0).abs() < 1e-12);
        }
    }
}
