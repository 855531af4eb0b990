//! Parameter grids evaluated point by point on a bounded worker pool.

use crate::commands;
use crate::config::{DuffingConfig, MbConfig, ModesConfig, Pipeline, QedConfig, SweepConfig};
use crate::stage::{PointFailure, Stage};
use crate::{CliError, Context};
use rayon::prelude::*;
use std::io::Write;
use std::sync::Arc;
use tubecav::consts::dbm_to_watt;
use tubecav::cryo;
use tubecav::modesolver;

/// Axis names each pipeline accepts, and the columns it reports.
pub fn schema(p: Pipeline) -> (&'static [&'static str], &'static [&'static str]) {
    match p {
        Pipeline::Piezo => (&["voltage_v", "sensitivity_hz_per_v"], &["delta_f_hz"]),
        Pipeline::Thermal => (
            &["temperature_k", "t_star_k", "q_res", "f_hz"],
            &["qi", "df_over_f", "n_thermal"],
        ),
        Pipeline::TwoState => (&["power_dbm"], &["weight", "peak_hz"]),
        Pipeline::Qed => (
            &["n_mm", "n_atoms", "omega_b_hz", "g_mm_hz", "g_opt_hz"],
            &["rabi_hz", "mm_split_hz"],
        ),
        Pipeline::Modes => (&["resolution", "target_hz"], &["f_hz", "v_over_lambda3"]),
    }
}

/// Grid points in row-major order, last axis fastest.
pub fn grid(cfg: &SweepConfig) -> Result<Vec<Vec<f64>>, CliError> {
    if cfg.axes.is_empty() {
        return Err(CliError::Usage("sweep needs at least one axis".into()));
    }
    let (allowed, _) = schema(cfg.pipeline);
    let mut values = Vec::new();
    for (i, a) in cfg.axes.iter().enumerate() {
        if !allowed.contains(&a.name.as_str()) {
            return Err(CliError::Usage(format!(
                "sweep.axes[{i}]: `{}` is not a {:?} parameter, expected one of {}",
                a.name,
                cfg.pipeline,
                allowed.join(", ")
            )));
        }
        if cfg.axes[..i].iter().any(|b| b.name == a.name) {
            return Err(CliError::Usage(format!("sweep.axes[{i}]: `{}` repeated", a.name)));
        }
        let v = a.points().map_err(CliError::Usage)?;
        if v.is_empty() {
            return Err(CliError::Usage(format!("sweep.axes[{i}]: no values")));
        }
        values.push(v);
    }
    let total: usize = values.iter().map(Vec::len).product();
    if total > 1_000_000 {
        return Err(CliError::Usage(format!("sweep grid has {total} points")));
    }
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut p = vec![0.0; values.len()];
        for (d, v) in values.iter().enumerate().rev() {
            p[d] = v[idx % v.len()];
            idx /= v.len();
        }
        out.push(p);
    }
    Ok(out)
}

pub fn grid_len(cfg: &SweepConfig) -> Result<usize, CliError> {
    grid(cfg).map(|g| g.len())
}

fn value(names: &[&str], point: &[f64], key: &str) -> Option<f64> {
    names.iter().position(|n| *n == key).map(|i| point[i])
}

fn eval(ctx: &Context, cfg: &SweepConfig, names: &[&str], x: &[f64]) -> Result<Vec<f64>, CliError> {
    let get = |k: &str| value(names, x, k);
    match cfg.pipeline {
        Pipeline::Piezo => {
            let s = get("sensitivity_hz_per_v").unwrap_or(cfg.piezo.sensitivity_hz_per_v);
            let v = get("voltage_v").unwrap_or(0.0);
            Ok(modesolver::piezo_tuning_curve(s, cfg.piezo.v_max, &[v])?)
        }
        Pipeline::Thermal => {
            let mb = cfg.mb.clone().unwrap_or_else(MbConfig::default);
            let f = get("f_hz").unwrap_or(mb.f_hz);
            let mut p = mb.base;
            if let Some(q) = get("q_res") {
                p.q_res = q;
            }
            let t_star = get("t_star_k").or(mb.synthetic.map(|s| s.t_star_k));
            if let Some(ts) = t_star {
                p.a = cryo::prefactor_for_crossover(&p, f, ts)?;
            }
            let t = get("temperature_k").unwrap_or(1.0);
            Ok(vec![
                cryo::qi_of_temperature(&p, f, t)?,
                cryo::freq_shift_of_temperature(&p, f, t)?,
                cryo::thermal_occupation(f, t),
            ])
        }
        Pipeline::TwoState => {
            let d = cfg.duffing.clone().unwrap_or_else(DuffingConfig::default);
            d.states.validate()?;
            let w = dbm_to_watt(get("power_dbm").unwrap_or(-130.0));
            Ok(vec![d.states.weight(w), d.states.peak_frequency(w)])
        }
        Pipeline::Qed => {
            let mut q = cfg.qed.clone().unwrap_or_else(QedConfig::default);
            if let Some(v) = get("n_mm") {
                q.n_mm = v;
            }
            if let Some(v) = get("n_atoms") {
                q.params.atoms.n_atoms = v;
            }
            if let Some(v) = get("omega_b_hz") {
                q.params.atoms.omega_b_hz = v;
            }
            if let Some(v) = get("g_mm_hz") {
                q.params.mmwave.g_hz = v;
            }
            if let Some(v) = get("g_opt_hz") {
                q.params.optical.g_hz = v;
            }
            q.params.validate()?;
            let (_, s) = commands::qed_spectra(&q)?;
            Ok(vec![s.rabi_hz, s.mm_split_hz])
        }
        Pipeline::Modes => {
            let mut m = cfg.modes.clone().unwrap_or_else(ModesConfig::default);
            if let Some(r) = get("resolution") {
                m.resolution = r;
            }
            if let Some(t) = get("target_hz") {
                m.target_hz = Some(t);
            }
            let (_, geom, target) = commands::resolve_geometry(ctx, &m)?;
            let dom = Arc::new(modesolver::discretize(&geom, m.resolution)?);
            let modes = modesolver::solve_modes(dom, target, 1)?;
            let s = modes[0].summary();
            Ok(vec![s.f_hz, s.v_over_lambda3])
        }
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:?}")
}

/// Evaluates every grid point and writes `sweep.csv` in grid order.
pub fn run(ctx: &Context, cfg: &SweepConfig, stage: &mut Stage) -> Result<(Vec<String>, Vec<PointFailure>), CliError> {
    let points = grid(cfg)?;
    let names: Vec<&str> = cfg.axes.iter().map(|a| a.name.as_str()).collect();
    let (_, columns) = schema(cfg.pipeline);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<f64>, CliError>> =
        pool.install(|| points.par_iter().map(|x| eval(ctx, cfg, &names, x)).collect());

    let mut failures = Vec::new();
    let mut buf = Vec::new();
    let header: Vec<&str> = names.iter().chain(columns.iter()).copied().collect();
    writeln!(buf, "{}", header.join(","))?;
    for (i, (x, r)) in points.iter().zip(&results).enumerate() {
        let mut row: Vec<String> = x.iter().map(|&v| fmt_value(v)).collect();
        match r {
            Ok(y) => row.extend(y.iter().map(|&v| fmt_value(v))),
            Err(e) => {
                row.extend(columns.iter().map(|_| String::new()));
                failures.push(PointFailure {
                    index: i,
                    point: names.iter().map(|n| n.to_string()).zip(x.iter().copied()).collect(),
                    error: e.to_string(),
                });
            }
        }
        writeln!(buf, "{}", row.join(","))?;
    }
    stage.write("sweep.csv", &buf)?;
    Ok((
        vec![
            format!("sweep pipeline: {:?}", cfg.pipeline),
            format!("grid points: {}, last axis varies fastest", points.len()),
            format!("worker threads: {}", ctx.threads),
        ],
        failures,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Axis;

    fn sweep(json: &str) -> SweepConfig {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn grid_order_is_row_major() {
        let s = sweep(r#"{"pipeline": "thermal", "axes": [{"name": "q_res", "values": [1e6, 1e7]}, {"name": "temperature_k", "values": [1, 2, 3]}]}"#);
        let g = grid(&s).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[1], vec![1e6, 2.0]);
        assert_eq!(g[3], vec![1e7, 1.0]);
    }

    #[test]
    fn unknown_axis_is_usage_error() {
        let s = sweep(r#"{"pipeline": "piezo", "axes": [{"name": "temperature_k", "values": [1]}]}"#);
        assert!(matches!(grid(&s), Err(CliError::Usage(_))));
        let mut s = s;
        s.axes = vec![];
        assert!(grid(&s).is_err());
        let a: Axis = serde_json::from_str(r#"{"name": "voltage_v", "values": [1]}"#).unwrap();
        s.axes = vec![a.clone(), a];
        assert!(grid(&s).is_err());
    }
}
