//! Run configuration: one JSON document shared by every command.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use tubecav::cryo::MBParams;
use tubecav::duffing::{DuffingParams, MetastableStates};
use tubecav::hybridqed::HybridParams;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub modes: Option<ModesConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub mb: Option<MbConfig>,
    #[serde(default)]
    pub duffing: Option<DuffingConfig>,
    #[serde(default)]
    pub qed: Option<QedConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub table1: Option<Table1Config>,
    #[serde(default)]
    pub render: Option<RenderConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    #[serde(default)]
    pub preset: Option<String>,
    /// Geometry JSON file, used instead of a preset.
    #[serde(default)]
    pub geometry: Option<PathBuf>,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "one")]
    pub n_modes: usize,
    #[serde(default)]
    /// Solver shift; the modes nearest to it are returned.
    pub target_hz: Option<f64>,
    /// Coarse-grid ratio for Richardson extrapolation; absent means a single solve.
    #[serde(default)]
    pub richardson_ratio: Option<f64>,
    #[serde(default)]
    pub field_dump: bool,
}

impl Default for ModesConfig {
    fn default() -> Self {
        Self {
            preset: Some("cross3_hybrid".into()),
            geometry: None,
            resolution: default_resolution(),
            n_modes: 1,
            target_hz: None,
            richardson_ratio: None,
            field_dump: false,
        }
    }
}

fn default_resolution() -> f64 {
    12.0
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Metadata sidecar; defaults to the trace path with a `.json` extension when present.
    #[serde(default)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbConfig {
    #[serde(default)]
    pub series: Option<PathBuf>,
    #[serde(default = "mm_f0")]
    pub f_hz: f64,
    /// Fixed parameters (Tc, G, λ_L0, γ); fitted ones are ignored.
    #[serde(default = "MBParams::niobium")]
    pub base: MBParams,
    /// Generates a series when no file is given.
    #[serde(default)]
    pub synthetic: Option<SyntheticSeries>,
}

impl Default for MbConfig {
    fn default() -> Self {
        Self {
            series: None,
            f_hz: mm_f0(),
            base: MBParams::niobium(),
            synthetic: Some(SyntheticSeries::default()),
        }
    }
}

fn mm_f0() -> f64 {
    98.2e9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSeries {
    #[serde(default = "t_star")]
    pub t_star_k: f64,
    #[serde(default = "noise")]
    pub noise: f64,
    #[serde(default = "t_lo")]
    pub t_min_k: f64,
    #[serde(default = "t_hi")]
    pub t_max_k: f64,
    #[serde(default = "t_points")]
    pub points: usize,
}

impl Default for SyntheticSeries {
    fn default() -> Self {
        Self {
            t_star_k: t_star(),
            noise: noise(),
            t_min_k: t_lo(),
            t_max_k: t_hi(),
            points: t_points(),
        }
    }
}

fn t_star() -> f64 {
    2.3
}
fn noise() -> f64 {
    0.05
}
fn t_lo() -> f64 {
    1.0
}
fn t_hi() -> f64 {
    4.4
}
fn t_points() -> usize {
    18
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuffingConfig {
    #[serde(default = "default_duffing")]
    pub params: DuffingParams,
    /// Drive powers in units of the bifurcation power for the Kerr spectra.
    #[serde(default = "drive_levels")]
    pub drive_levels: Vec<f64>,
    #[serde(default = "MetastableStates::measured")]
    pub states: MetastableStates,
    #[serde(default = "two_state_powers")]
    pub two_state_powers_dbm: Vec<f64>,
    /// Probe half span in linewidths of state 1.
    #[serde(default = "half_span")]
    pub half_span_linewidths: f64,
    #[serde(default = "spectrum_points")]
    pub points: usize,
}

impl Default for DuffingConfig {
    fn default() -> Self {
        Self {
            params: default_duffing(),
            drive_levels: drive_levels(),
            states: MetastableStates::measured(),
            two_state_powers_dbm: two_state_powers(),
            half_span_linewidths: half_span(),
            points: spectrum_points(),
        }
    }
}

pub fn default_duffing() -> DuffingParams {
    let m = MetastableStates::measured();
    let kappa = m.state1.f / m.state1.q;
    DuffingParams {
        f_lin: m.state1.f,
        kappa_tot: kappa,
        kappa_c: 0.5 * kappa,
        beta: 1e-3,
        power: 0.0,
    }
}

fn drive_levels() -> Vec<f64> {
    vec![0.25, 1.0, 4.0]
}
fn two_state_powers() -> Vec<f64> {
    vec![-130.0, -100.0, -90.0, -80.0]
}
fn half_span() -> f64 {
    12.0
}
fn spectrum_points() -> usize {
    801
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QedConfig {
    #[serde(default = "HybridParams::reference")]
    pub params: HybridParams,
    #[serde(default = "qed_span")]
    pub half_span_hz: f64,
    #[serde(default = "qed_points")]
    pub points: usize,
    /// mm-wave photon number of the last cascade panel.
    #[serde(default = "qed_nmm")]
    pub n_mm: f64,
}

impl Default for QedConfig {
    fn default() -> Self {
        Self {
            params: HybridParams::reference(),
            half_span_hz: qed_span(),
            points: qed_points(),
            n_mm: qed_nmm(),
        }
    }
}

fn qed_span() -> f64 {
    100e6
}
fn qed_points() -> usize {
    4001
}
fn qed_nmm() -> f64 {
    25.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Config {
    #[serde(default = "table_v")]
    pub v_over_lambda3: f64,
    #[serde(default = "mm_f0")]
    pub f_hz: f64,
    #[serde(default = "table_q")]
    pub q: f64,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            v_over_lambda3: table_v(),
            f_hz: mm_f0(),
            q: table_q(),
        }
    }
}

fn table_v() -> f64 {
    0.14
}
fn table_q() -> f64 {
    3e7
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Piezo,
    Thermal,
    TwoState,
    Qed,
    Modes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValues {
    List { values: Vec<f64> },
    Range { start: f64, stop: f64, step: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    #[serde(flatten)]
    pub values: AxisValues,
}

impl Axis {
    pub fn points(&self) -> Result<Vec<f64>, String> {
        match &self.values {
            AxisValues::List { values } => Ok(values.clone()),
            AxisValues::Range { start, stop, step } => {
                if !(*step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                    return Err(format!("axis {}: need step > 0 and stop >= start", self.name));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                if n > 1_000_000 {
                    return Err(format!("axis {}: {n} points is too many", self.name));
                }
                Ok((0..n).map(|i| start + i as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub pipeline: Pipeline,
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub piezo: PiezoConfig,
    #[serde(default)]
    pub mb: Option<MbConfig>,
    #[serde(default)]
    pub duffing: Option<DuffingConfig>,
    #[serde(default)]
    pub qed: Option<QedConfig>,
    #[serde(default)]
    pub modes: Option<ModesConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiezoConfig {
    #[serde(default = "sensitivity")]
    pub sensitivity_hz_per_v: f64,
    #[serde(default = "v_max")]
    pub v_max: f64,
}

impl Default for PiezoConfig {
    fn default() -> Self {
        Self {
            sensitivity_hz_per_v: sensitivity(),
            v_max: v_max(),
        }
    }
}

fn sensitivity() -> f64 {
    0.1e6
}
fn v_max() -> f64 {
    180.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Scatter,
    Line,
    Dual,
    Panels,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    /// One CSV per panel for `panels`, otherwise a single CSV.
    pub csv: Vec<PathBuf>,
    pub x: String,
    /// First column on the left axis; `dual` puts the second on the right axis.
    pub y: Vec<String>,
    #[serde(default = "plot_kind")]
    pub kind: PlotKind,
    #[serde(default)]
    pub log_x: bool,
    #[serde(default)]
    pub log_y: bool,
    #[serde(default)]
    pub title: String,
    #[serde(default = "svg_name")]
    pub output: String,
}

fn plot_kind() -> PlotKind {
    PlotKind::Line
}
fn svg_name() -> String {
    "plot.svg".into()
}

/// Parses a config, reporting schema violations with the offending field path.
pub fn parse(text: &str) -> Result<RunConfig, String> {
    if text.trim().is_empty() {
        return Err("config is empty".into());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format!("config field `{path}`: {}", e.inner())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_rejected() {
        assert!(parse("").is_err());
        assert!(parse("  \n").is_err());
        assert!(parse("{}").is_ok());
    }

    #[test]
    fn errors_carry_field_path() {
        let e = parse(r#"{"modes": {"resolution": "high"}}"#).unwrap_err();
        assert!(e.contains("modes.resolution"), "{e}");
        let e = parse(r#"{"sweep": {"pipeline": "piezo", "axes": [], "bogus": 1}}"#).unwrap_err();
        assert!(e.contains("sweep"), "{e}");
    }

    #[test]
    fn range_axis_is_inclusive() {
        let a: Axis = serde_json::from_str(r#"{"name": "voltage_v", "start": 0, "stop": 180, "step": 20}"#).unwrap();
        let p = a.points().unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(p[9], 180.0);
        let l: Axis = serde_json::from_str(r#"{"name": "x", "values": [3, 1]}"#).unwrap();
        assert_eq!(l.points().unwrap(), vec![3.0, 1.0]);
    }
}
