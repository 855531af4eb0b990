//! Vector eigenmodes of metallic tube cavities.
//!
//! The curl-curl operator is discretized on a conformal Yee grid ([`grid`]), assembled
//! with a grad-div penalty that lifts the static gradient fields ([`operator`]) and solved
//! by shift-invert Lanczos ([`eigen`]). Remaining gradient-like vectors are rejected by
//! their divergence fraction.

pub mod cutoff2d;
pub mod eigen;
pub mod grid;
pub mod mode;
pub mod operator;
pub mod slater;

pub use cutoff2d::cutoff_2d;
pub use eigen::LanczosOptions;
pub use grid::{build, discretize, BoxRegion, DiscretizedDomain, DomainSource, Region, DEFAULT_UNKNOWN_BUDGET};
pub use mode::{mode_volume, EigenMode, FieldSidecar, ModeSummary, NORMALIZATION};
pub use operator::{assemble, Operator, DEFAULT_GRAD_SCALE};
pub use slater::{slater_shift, slater_shift_degenerate, Deformation, Patch};

use crate::consts::C0;
use crate::error::{Error, Result};
use crate::geometry::CavityGeometry;
use std::f64::consts::PI;
use std::sync::Arc;

/// Vectors whose grad-div share exceeds this are treated as gradient fields.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-6;
/// Returned modes must reach this relative residual.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub grad_scale: f64,
    pub lanczos: LanczosOptions,
    /// Upper bound on the number of Lanczos pairs requested while searching.
    pub max_pairs: usize,
    pub residual_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grad_scale: DEFAULT_GRAD_SCALE,
            lanczos: LanczosOptions::default(),
            max_pairs: 64,
            residual_tol: RESIDUAL_TOLERANCE,
        }
    }
}

fn k2_of(f: f64) -> f64 {
    let k = 2.0 * PI * f / C0;
    k * k
}

/// The `n_modes` modes nearest `target_f`, sorted by ascending frequency.
pub fn solve_modes(domain: Arc<DiscretizedDomain>, target_f: f64, n_modes: usize) -> Result<Vec<EigenMode>> {
    solve_modes_with(domain, target_f, n_modes, &SolveOptions::default())
}

pub fn solve_modes_with(
    domain: Arc<DiscretizedDomain>,
    target_f: f64,
    n_modes: usize,
    opts: &SolveOptions,
) -> Result<Vec<EigenMode>> {
    if !(target_f > 0.0 && target_f.is_finite()) {
        return Err(Error::Domain(format!("target frequency {target_f} must be positive")));
    }
    if n_modes == 0 {
        return Err(Error::Domain("n_modes must be at least 1".into()));
    }
    let op = assemble(&domain, opts.grad_scale);
    if op.n() == 0 {
        return Err(Error::Domain("domain has no vacuum edges".into()));
    }
    let an = eigen::analyze(&op)?;
    let kt = k2_of(target_f);

    // Cholesky only succeeds below the spectrum, which is where the shift must sit
    let mut si = None;
    let mut last_err = None;
    for s in [0.8, 0.5, 0.2, -0.05] {
        match eigen::ShiftInvert::new(&op, &an, s * kt) {
            Ok(f) => {
                si = Some(f);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let si = match si {
        Some(s) => s,
        None => return Err(last_err.unwrap_or_else(|| Error::Factorization("no admissible shift".into()))),
    };

    let mut nev = (n_modes + 2).min(op.n());
    loop {
        let pairs = eigen::lowest(&op, &si, nev, &opts.lanczos)?;
        let top = pairs.last().map(|p| p.lam).unwrap_or(0.0);
        let mut physical: Vec<&eigen::Pair> = pairs
            .iter()
            .filter(|p| p.lam > 1e-3 * kt && op.divergence_fraction(&p.x) <= DIVERGENCE_TOLERANCE)
            .collect();
        // nearest to the target, confirmed once the computed range extends past them
        physical.sort_by(|a, b| (a.lam - kt).abs().total_cmp(&(b.lam - kt).abs()));
        let confirmed = physical.len() >= n_modes && {
            let far = (physical[n_modes - 1].lam - kt).abs();
            top >= kt + far
        };
        if confirmed || nev >= opts.max_pairs.min(op.n()) {
            if physical.is_empty() {
                return Err(Error::Convergence {
                    iterations: opts.lanczos.max_restarts,
                    residuals: pairs.iter().map(|p| p.residual).collect(),
                });
            }
            let mut chosen: Vec<&eigen::Pair> = physical.into_iter().take(n_modes).collect();
            chosen.sort_by(|a, b| a.lam.total_cmp(&b.lam));
            let bad: Vec<f64> = chosen.iter().map(|p| p.residual).filter(|&r| !(r <= 1e-4)).collect();
            if !bad.is_empty() {
                return Err(Error::Convergence {
                    iterations: opts.lanczos.max_restarts,
                    residuals: bad,
                });
            }
            return Ok(chosen
                .into_iter()
                .map(|p| {
                    let field = scatter(&op, &domain, &p.x);
                    EigenMode::new(domain.clone(), p.lam, field, p.residual, op.divergence_fraction(&p.x))
                })
                .collect());
        }
        nev = (2 * nev).min(opts.max_pairs).min(op.n());
    }
}

fn scatter(op: &Operator, dom: &DiscretizedDomain, x: &[f64]) -> [Vec<f64>; 3] {
    let mut field = [
        vec![0.0; dom.edge_len[0].len()],
        vec![0.0; dom.edge_len[1].len()],
        vec![0.0; dom.edge_len[2].len()],
    ];
    for (u, e) in op.edges.iter().enumerate() {
        field[e.axis][e.index] = x[u];
    }
    field
}

/// Two-grid Richardson extrapolation for a quantity converging as `h^order`.
pub fn richardson(fine: f64, coarse: f64, ratio: f64, order: f64) -> f64 {
    fine + (fine - coarse) / (ratio.powf(order) - 1.0)
}

/// Observed convergence order from three grids refined by a constant `ratio`.
pub fn observed_order(coarse: f64, medium: f64, fine: f64, ratio: f64) -> f64 {
    ((coarse - medium) / (medium - fine)).abs().ln() / ratio.ln()
}

/// Assumed convergence order of the conformal scheme.
pub const CONVERGENCE_ORDER: f64 = 2.0;

/// Result of a two-grid solve.
#[derive(Debug, Clone)]
pub struct Extrapolated {
    pub fine: Vec<EigenMode>,
    pub coarse_hz: Vec<f64>,
    pub extrapolated_hz: Vec<f64>,
    pub ratio: f64,
}

/// Solves at `h` and `h * ratio` and extrapolates each frequency.
pub fn solve_extrapolated(
    source: DomainSource,
    h: f64,
    ratio: f64,
    target_f: f64,
    n_modes: usize,
) -> Result<Extrapolated> {
    if !(ratio > 1.0) {
        return Err(Error::Domain(format!("grid ratio {ratio} must exceed 1")));
    }
    let fine_dom = Arc::new(build(source.clone(), h, DEFAULT_UNKNOWN_BUDGET)?);
    let fine = solve_modes(fine_dom, target_f, n_modes)?;
    let coarse_dom = Arc::new(build(source, h * ratio, DEFAULT_UNKNOWN_BUDGET)?);
    let coarse = solve_modes(coarse_dom, target_f, n_modes)?;
    let coarse_hz: Vec<f64> = coarse.iter().map(|m| m.frequency).collect();
    let extrapolated_hz = fine
        .iter()
        .zip(&coarse_hz)
        .map(|(f, &c)| richardson(f.frequency, c, ratio, CONVERGENCE_ORDER))
        .collect();
    Ok(Extrapolated {
        fine,
        coarse_hz,
        extrapolated_hz,
        ratio,
    })
}

/// Two-grid solve of a tube geometry at `resolution` cells per diameter.
pub fn solve_geometry(
    geometry: &CavityGeometry,
    resolution: f64,
    ratio: f64,
    target_f: f64,
    n_modes: usize,
) -> Result<Extrapolated> {
    if !(resolution >= 8.0) || !(resolution / ratio >= 8.0) {
        return Err(Error::Domain(format!("resolution {resolution} too coarse for ratio {ratio}")));
    }
    let h = geometry.min_diameter() / resolution;
    solve_extrapolated(DomainSource::Geometry(geometry.clone()), h, ratio, target_f, n_modes)
}

/// Closed-form lowest TE101 frequency of an `a x b x l` box (`b` smallest).
pub fn box_te101(a: f64, l: f64) -> f64 {
    0.5 * C0 * (1.0 / (a * a) + 1.0 / (l * l)).sqrt()
}

/// Linear piezo tuning `Δf = s V`, saturating at `s v_max`.
pub fn piezo_tuning_curve(sensitivity: f64, v_max: f64, voltages: &[f64]) -> Result<Vec<f64>> {
    if !(sensitivity >= 0.0) {
        return Err(Error::Domain(format!("sensitivity {sensitivity} must be non-negative")));
    }
    if !(v_max >= 0.0) {
        return Err(Error::Domain(format!("v_max {v_max} must be non-negative")));
    }
    voltages
        .iter()
        .map(|&v| {
            if v.is_nan() || v < 0.0 {
                Err(Error::Domain(format!("voltage {v} below 0")))
            } else {
                Ok(sensitivity * v.min(v_max))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piezo_examples() {
        let s = 0.1e6;
        let v = piezo_tuning_curve(s, 180.0, &[0.0, 100.0, 250.0]).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 10e6).abs() < 1e-6);
        assert!((v[2] - 18e6).abs() < 1e-6);
        assert!(piezo_tuning_curve(-1.0, 180.0, &[1.0]).is_err());
        assert!(piezo_tuning_curve(s, 180.0, &[-1.0]).is_err());
    }

    #[test]
    fn richardson_removes_quadratic_error() {
        let exact = 3.0;
        let f = |h: f64| exact + 0.7 * h * h;
        let e = richardson(f(0.1), f(0.2), 2.0, 2.0);
        assert!((e - exact).abs() < 1e-12);
        let p = observed_order(f(0.4), f(0.2), f(0.1), 2.0);
        assert!((p - 2.0).abs() < 1e-9);
    }

    #[test]
    fn box_fundamental() {
        let (a, b, l) = (2.0e-3, 1.0e-3, 2.5e-3);
        let dom = Arc::new(build(DomainSource::Box(BoxRegion::new(a, b, l)), b / 8.0, DEFAULT_UNKNOWN_BUDGET).unwrap());
        let target = box_te101(a, l);
        let modes = solve_modes(dom, target, 2).unwrap();
        assert!((modes[0].frequency / target - 1.0).abs() < 0.02, "{}", modes[0].frequency);
        assert!(modes[0].frequency <= modes[1].frequency);
        assert!(modes[0].divergence <= DIVERGENCE_TOLERANCE);
        assert!(modes[0].residual < 1e-6, "{}", modes[0].residual);
    }

    #[test]
    fn bad_targets() {
        let dom = Arc::new(build(DomainSource::Box(BoxRegion::new(1e-3, 1e-3, 1e-3)), 0.25e-3, DEFAULT_UNKNOWN_BUDGET).unwrap());
        assert!(solve_modes(dom.clone(), -1.0, 1).is_err());
        assert!(solve_modes(dom, 1e11, 0).is_err());
    }
}
