//! Single-run pipelines. Each writes its artifacts into the stage and returns notes
//! for the manifest.

use crate::config::{DuffingConfig, FitConfig, MbConfig, ModesConfig, QedConfig, RenderConfig, Table1Config};
use crate::stage::Stage;
use crate::{CliError, Context};
use serde::Serialize;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use tubecav::consts::dbm_to_watt;
use tubecav::cryo::{self, MBParams};
use tubecav::duffing;
use tubecav::geometry::{cutoff_frequency, preset, CavityGeometry, PresetName};
use tubecav::hybridqed::{self, HybridParams, TransmissionSpectrum};
use tubecav::modesolver::{self, ModeSummary, NORMALIZATION};
use tubecav::resonfit::{self, ReflectionTrace, TraceMeta};

pub type Notes = Vec<String>;

/// Default solver target as a fraction of the expected frequency, low enough that the
/// nearest modes are the lowest ones.
pub const LOWEST_SHIFT: f64 = 0.8;

pub(crate) fn json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| CliError::Physics(e.into()))?;
    b.push(b'\n');
    Ok(b)
}

pub(crate) fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> tubecav::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub(crate) fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Geometry and solver target described by a modes block.
pub fn resolve_geometry(ctx: &Context, cfg: &ModesConfig) -> Result<(String, CavityGeometry, f64), CliError> {
    match (&cfg.geometry, &cfg.preset) {
        (Some(path), _) => {
            let g = CavityGeometry::from_json(&read(&ctx.resolve(path))?)?;
            let target = cfg.target_hz.unwrap_or(LOWEST_SHIFT * cutoff_frequency(g.min_diameter())?);
            Ok((path.display().to_string(), g, target))
        }
        (None, Some(name)) => {
            let p: PresetName = name.parse().map_err(|_| {
                let all: Vec<&str> = PresetName::ALL.iter().map(|p| p.as_str()).collect();
                CliError::Usage(format!("unknown preset `{name}`, expected one of {}", all.join(", ")))
            })?;
            Ok((name.clone(), preset(p), cfg.target_hz.unwrap_or(LOWEST_SHIFT * p.target_frequency())))
        }
        (None, None) => Err(CliError::Usage("modes needs `preset` or `geometry`".into())),
    }
}

#[derive(Serialize)]
struct ModesOutput {
    geometry: String,
    resolution: f64,
    target_hz: f64,
    normalization: &'static str,
    modes: Vec<ModeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coarse_hz: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extrapolated_hz: Option<Vec<f64>>,
}

pub fn modes(ctx: &Context, cfg: &ModesConfig, stage: &mut Stage) -> Result<Notes, CliError> {
    let resolution = cfg.resolution;
    if !(resolution >= 4.0) {
        return Err(CliError::Usage(format!("resolution {resolution} must be at least 4")));
    }
    if cfg.n_modes == 0 {
        return Err(CliError::Usage("n_modes must be at least 1".into()));
    }
    let (name, geom, target) = resolve_geometry(ctx, cfg)?;
    let (modes, coarse, extra) = match cfg.richardson_ratio {
        Some(ratio) => {
            let e = modesolver::solve_geometry(&geom, resolution, ratio, target, cfg.n_modes)?;
            (e.fine, Some(e.coarse_hz), Some(e.extrapolated_hz))
        }
        None => {
            let dom = Arc::new(modesolver::discretize(&geom, resolution)?);
            (modesolver::solve_modes(dom, target, cfg.n_modes)?, None, None)
        }
    };
    let out = ModesOutput {
        geometry: name,
        resolution,
        target_hz: target,
        normalization: NORMALIZATION,
        modes: modes.iter().map(|m| m.summary()).collect(),
        coarse_hz: coarse,
        extrapolated_hz: extra,
    };
    stage.write("modes.json", &json(&out)?)?;
    stage.write("geometry.json", geom.to_json()?.as_bytes())?;
    if cfg.field_dump {
        for (i, m) in modes.iter().enumerate() {
            let (bytes, side) = m.field_dump();
            stage.write(&format!("mode{i}.f32"), &bytes)?;
            stage.write(&format!("mode{i}.json"), &json(&side)?)?;
        }
    }
    Ok(vec![
        format!("field normalization: {NORMALIZATION}"),
        "mode volume: energy over peak |E|^2 at fully uncut grid nodes".into(),
        format!("resolution: {resolution} cells per smallest diameter"),
    ])
}

#[derive(Serialize)]
struct FitDetails {
    linewidth_hz: f64,
    lifetime_s: f64,
    condition: f64,
    ill_conditioned: bool,
    iterations: usize,
    photons: Option<resonfit::PhotonNumberEstimate>,
    temperature_k: Option<f64>,
}

pub fn fit(ctx: &Context, cfg: &FitConfig, stage: &mut Stage) -> Result<Notes, CliError> {
    let path = cfg
        .trace
        .as_ref()
        .ok_or_else(|| CliError::Usage("fit needs a trace (`--trace` or `fit.trace`)".into()))?;
    let path = ctx.resolve(path);
    let mut trace = ReflectionTrace::read_csv(read(&path)?.as_bytes())?;
    let meta_path = match &cfg.meta {
        Some(m) => Some(ctx.resolve(m)),
        None => Some(path.with_extension("json")).filter(|p| p.exists()),
    };
    if let Some(m) = meta_path {
        let meta: TraceMeta = serde_json::from_str(&read(&m)?).map_err(|e| CliError::Usage(format!("{}: {e}", m.display())))?;
        trace = trace.with_meta(&meta);
    }
    let f = resonfit::fit_reflection(&trace, None)?;
    let (lw, tau) = resonfit::linewidth_and_lifetime(f.f0, f.qtot)?;
    let photons = trace.power_in.map(|p| resonfit::photon_number(&f, p)).transpose()?;
    stage.write("fit.json", &json(&f.report())?)?;
    stage.write(
        "fit_details.json",
        &json(&FitDetails {
            linewidth_hz: lw,
            lifetime_s: tau,
            condition: f.diagnostics.condition,
            ill_conditioned: f.diagnostics.ill_conditioned,
            iterations: f.diagnostics.iterations,
            photons,
            temperature_k: trace.temperature,
        })?,
    )?;
    Ok(vec![format!("photon number: {}", resonfit::PHOTON_CONVENTION)])
}

pub fn mb(ctx: &Context, cfg: &MbConfig, stage: &mut Stage) -> Result<Notes, CliError> {
    let series = match (&cfg.series, &cfg.synthetic) {
        (Some(p), _) => cryo::read_series(read(&ctx.resolve(p))?.as_bytes())?,
        (None, Some(s)) => {
            if s.points < 2 || !(s.t_max_k > s.t_min_k) {
                return Err(CliError::Usage("synthetic series needs 2+ points and t_max > t_min".into()));
            }
            let mut p = cfg.base;
            p.a = cryo::prefactor_for_crossover(&p, cfg.f_hz, s.t_star_k)?;
            let temps: Vec<f64> = (0..s.points)
                .map(|i| s.t_min_k + (s.t_max_k - s.t_min_k) * i as f64 / (s.points - 1) as f64)
                .collect();
            cryo::synth_series(&p, cfg.f_hz, &temps, s.noise, ctx.seed)?
        }
        (None, None) => return Err(CliError::Usage("mb needs `series` or `synthetic`".into())),
    };
    let fit = cryo::fit_thermal_series(&series, cfg.f_hz, &cfg.base)?;
    stage.write("series.csv", &csv_bytes(|b| cryo::write_series(&series, b))?)?;
    stage.write("mb_fit.json", &json(&fit.report())?)?;
    let p: MBParams = fit.params;
    let lo = series.iter().map(|s| s.temperature_k).fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .map(|s| s.temperature_k)
        .fold(0.0, f64::max)
        .min(0.499 * p.tc);
    let model: Vec<cryo::ThermalPoint> = (0..200)
        .map(|i| lo + (hi - lo) * i as f64 / 199.0)
        .map(|t| {
            cryo::ThermalPoint::new(
                t,
                cryo::qi_of_temperature(&p, cfg.f_hz, t)?,
                cryo::freq_shift_of_temperature(&p, cfg.f_hz, t)?,
            )
        })
        .collect::<tubecav::Result<_>>()?;
    stage.write("mb_model.csv", &csv_bytes(|b| cryo::write_series(&model, b))?)?;
    Ok(vec![
        format!("surface loss: {}", cryo::SURFACE_MODEL),
        format!("frequency shift: {}", cryo::SHIFT_MODEL),
    ])
}

#[derive(Serialize)]
struct DuffingSummary {
    critical: Option<duffing::CriticalPoint>,
    drive_levels: Vec<f64>,
    two_state_powers_dbm: Vec<f64>,
    two_state_peaks_hz: Vec<f64>,
}

pub fn duffing(_ctx: &Context, cfg: &DuffingConfig, stage: &mut Stage) -> Result<Notes, CliError> {
    if cfg.points < 2 {
        return Err(CliError::Usage("duffing.points must be at least 2".into()));
    }
    let p = cfg.params;
    p.validate()?;
    let critical = match duffing::critical_point(&p) {
        Ok(c) => Some(c),
        Err(tubecav::Error::NoBifurcation) => None,
        Err(e) => return Err(e.into()),
    };
    let span = cfg.half_span_linewidths * p.kappa_tot;
    let freqs: Vec<f64> = (0..cfg.points)
        .map(|i| p.f_lin - span + 2.0 * span * i as f64 / (cfg.points - 1) as f64)
        .collect();
    let reference_power = critical.map(|c| c.power).unwrap_or(p.power.max(1e-18));
    for (i, lvl) in cfg.drive_levels.iter().enumerate() {
        let q = p.with_power(lvl * reference_power);
        let s = duffing::response_spectrum(&q, &freqs)?;
        stage.write(&format!("duffing_{i}.csv"), &csv_bytes(|b| duffing::write_spectrum(&s, b))?)?;
    }
    let m = cfg.states;
    let k1 = m.state1.f / m.state1.q;
    let lo = m.state1.f.min(m.state2.f) - cfg.half_span_linewidths * k1;
    let hi = m.state1.f.max(m.state2.f) + cfg.half_span_linewidths * k1;
    let tf: Vec<f64> = (0..cfg.points)
        .map(|i| lo + (hi - lo) * i as f64 / (cfg.points - 1) as f64)
        .collect();
    let mut peaks = Vec::new();
    for (i, dbm) in cfg.two_state_powers_dbm.iter().enumerate() {
        let w = dbm_to_watt(*dbm);
        let s = duffing::two_state_lineshape(&m, w, &tf)?;
        peaks.push(m.peak_frequency(w));
        stage.write(&format!("two_state_{i}.csv"), &csv_bytes(|b| duffing::write_spectrum(&s, b))?)?;
    }
    stage.write(
        "duffing.json",
        &json(&DuffingSummary {
            critical,
            drive_levels: cfg.drive_levels.clone(),
            two_state_powers_dbm: cfg.two_state_powers_dbm.clone(),
            two_state_peaks_hz: peaks,
        })?,
    )?;
    Ok(vec![
        "duffing power axis: incident drive power, photon number from kc P / (2 pi h f)".into(),
        "two-state lineshape: phenomenological interpolation between measured states".into(),
        "duffing spectra: drive levels in units of the bifurcation power".into(),
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct Splittings {
    pub rabi_hz: f64,
    pub rabi_expected_hz: f64,
    pub mm_split_hz: f64,
    pub mm_bare_expected_hz: f64,
}

/// The four-panel cascade: bare cavity, vacuum Rabi splitting, EIT, mm-wave splitting.
pub fn cascade(p: &HybridParams, n_mm: f64) -> [HybridParams; 4] {
    let mut bare = *p;
    bare.atoms.n_atoms = 0.0;
    let mut rabi = *p;
    rabi.atoms.omega_b_hz = 0.0;
    rabi.atoms.n_mm = 0.0;
    let mut eit = *p;
    eit.atoms.n_mm = 0.0;
    let mut split = *p;
    split.atoms.n_mm = n_mm;
    [bare, rabi, eit, split]
}

/// Cascade spectra and the splittings read off them.
pub fn qed_spectra(cfg: &QedConfig) -> Result<(Vec<TransmissionSpectrum>, Splittings), CliError> {
    if cfg.points < 3 || !(cfg.half_span_hz > 0.0) {
        return Err(CliError::Usage("qed needs 3+ points and a positive span".into()));
    }
    let g_coll = hybridqed::collective_enhancement(cfg.params.optical.g_hz, cfg.params.atoms.n_atoms)?;
    let d = hybridqed::detuning_grid(cfg.half_span_hz, cfg.points);
    let spectra: Vec<TransmissionSpectrum> = cascade(&cfg.params, cfg.n_mm)
        .iter()
        .map(|p| hybridqed::eit_transmission(p, &d))
        .collect::<tubecav::Result<_>>()?;
    // the mm splitting sits inside the EIT window, far from the outer polaritons
    let window = 4.0 * cfg.params.mmwave.g_hz * cfg.n_mm.sqrt().max(1.0);
    let inner: Vec<usize> = (0..d.len()).filter(|&i| d[i].abs() <= window).collect();
    let mm = TransmissionSpectrum {
        detunings: inner.iter().map(|&i| d[i]).collect(),
        transmission: inner.iter().map(|&i| spectra[3].transmission[i]).collect(),
        regime: spectra[3].regime,
    };
    let split = Splittings {
        rabi_hz: hybridqed::extract_splitting(&spectra[1])?,
        rabi_expected_hz: 2.0 * g_coll,
        mm_split_hz: hybridqed::extract_splitting(&mm)?,
        mm_bare_expected_hz: 2.0 * cfg.params.mmwave.g_hz * cfg.n_mm.sqrt(),
    };
    Ok((spectra, split))
}

pub fn qed(_ctx: &Context, cfg: &QedConfig, stage: &mut Stage) -> Result<Notes, CliError> {
    let fom = hybridqed::figures_of_merit(&cfg.params)?;
    let (spectra, split) = qed_spectra(cfg)?;
    stage.write("figures.json", &json(&fom)?)?;
    for (i, s) in spectra.iter().enumerate() {
        let name = format!("eit_{}_{}.csv", i + 1, s.regime.label());
        stage.write(&name, &csv_bytes(|b| s.write_csv(b))?)?;
    }
    stage.write("splittings.json", &json(&split)?)?;
    Ok(vec![
        format!("per-photon field: {}", hybridqed::FIELD_CONVENTION),
        format!("rates: {}", hybridqed::RATE_CONVENTION),
        "EIT: weak-probe nested susceptibility, intermediate Rydberg linewidth defaults to gamma_ryd".into(),
    ])
}

pub fn table1(_ctx: &Context, cfg: &Table1Config, stage: &mut Stage) -> Result<Notes, CliError> {
    let rows = hybridqed::table1(cfg.v_over_lambda3, cfg.f_hz, cfg.q)?;
    stage.write("table1.csv", &csv_bytes(|b| hybridqed::write_table1(&rows, b))?)?;
    Ok(vec!["finesse of a sub-wavelength cavity taken equal to Q".into()])
}

pub fn render(ctx: &Context, cfg: &RenderConfig, stage: &mut Stage) -> Result<Notes, CliError> {
    if cfg.csv.is_empty() {
        return Err(CliError::Usage("render needs at least one csv".into()));
    }
    let texts: Vec<String> = cfg.csv.iter().map(|p| read(&ctx.resolve(p))).collect::<Result<_, _>>()?;
    let svg = crate::svg::render(cfg, &texts).map_err(|e| CliError::Usage(e.to_string()))?;
    let name = if cfg.output.ends_with(".svg") {
        cfg.output.clone()
    } else {
        format!("{}.svg", cfg.output)
    };
    stage.write(&name, svg.as_bytes())?;
    Ok(vec![])
}
