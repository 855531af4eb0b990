//! TE cutoff of a circular guide from the 2D Neumann Laplacian on the cross-section.
//!
//! Cut-cell finite volumes: unknowns at cell centers, mass equal to the cell area
//! inside the disc and fluxes through the open part of each cell side.

use crate::consts::C0;
use crate::error::{Error, Result};
use faer::{Mat, Side};
use std::f64::consts::PI;

const AREA_SUBLINES: usize = 256;

fn chord(r: f64, offset: f64, a: f64, b: f64) -> f64 {
    if offset.abs() >= r {
        return 0.0;
    }
    let w = (r * r - offset * offset).sqrt();
    (b.min(w) - a.max(-w)).max(0.0)
}

/// Lowest nonzero Neumann eigenfrequency of a disc of `diameter` at `resolution`
/// cells per diameter.
pub fn cutoff_2d(diameter: f64, resolution: usize) -> Result<f64> {
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::Domain(format!("diameter {diameter} must be positive")));
    }
    if resolution < 16 {
        return Err(Error::Domain(format!("resolution {resolution} below minimum of 16")));
    }
    let n = resolution;
    let r = 0.5 * diameter;
    let h = diameter / n as f64;
    let x = |i: usize| -r + i as f64 * h;

    let mut area = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dx = h / AREA_SUBLINES as f64;
            area[i * n + j] = (0..AREA_SUBLINES)
                .map(|s| chord(r, x(i) + (s as f64 + 0.5) * dx, x(j), x(j + 1)) * dx)
                .sum();
        }
    }
    let id: Vec<usize> = {
        let mut next = 0;
        area.iter()
            .map(|&a| {
                if a > 1e-9 * h * h {
                    next += 1;
                    next - 1
                } else {
                    usize::MAX
                }
            })
            .collect()
    };
    let m = id.iter().filter(|&&v| v != usize::MAX).count();
    let mut lap = Mat::<f64>::zeros(m, m);
    let mut link = |a: usize, b: usize, w: f64| {
        let (p, q) = (id[a], id[b]);
        if p == usize::MAX || q == usize::MAX || w <= 0.0 {
            return;
        }
        lap[(p, p)] += w;
        lap[(q, q)] += w;
        lap[(p, q)] -= w;
        lap[(q, p)] -= w;
    };
    for i in 0..n {
        for j in 0..n {
            if i + 1 < n {
                let l = chord(r, x(i + 1), x(j), x(j + 1));
                link(i * n + j, (i + 1) * n + j, l / h);
            }
            if j + 1 < n {
                let l = chord(r, x(j + 1), x(i), x(i + 1));
                link(i * n + j, i * n + j + 1, l / h);
            }
        }
    }
    // symmetric scaling by the cell areas
    let s: Vec<f64> = area.iter().filter(|&&a| a > 1e-9 * h * h).map(|a| a.sqrt().recip()).collect();
    for p in 0..m {
        for q in 0..m {
            lap[(p, q)] *= s[p] * s[q];
        }
    }
    let ev = lap
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::Convergence {
            iterations: 0,
            residuals: vec![],
        })?;
    let scale = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mu = ev
        .into_iter()
        .find(|&v| v > 1e-10 * scale)
        .ok_or_else(|| Error::DegenerateInput("no nonzero eigenvalue".into()))?;
    Ok(C0 * mu.sqrt() / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cutoff_frequency;

    #[test]
    fn matches_analytic_at_32() {
        let d = 1.6e-3;
        let f = cutoff_2d(d, 32).unwrap();
        let fa = cutoff_frequency(d).unwrap();
        assert!((f / fa - 1.0).abs() < 0.02, "{f} {fa}");
    }

    #[test]
    fn scales_inversely_with_diameter() {
        let a = cutoff_2d(1.6e-3, 20).unwrap();
        let b = cutoff_2d(3.2e-3, 20).unwrap();
        assert!((a / b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn refinement_reduces_error() {
        let d = 1.6e-3;
        let fa = cutoff_frequency(d).unwrap();
        let e: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| (cutoff_2d(d, n).unwrap() / fa - 1.0).abs())
            .collect();
        assert!(e[1] < e[0] && e[2] < e[1], "{e:?}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(cutoff_2d(1e-3, 15).is_err());
        assert!(cutoff_2d(-1e-3, 32).is_err());
    }
}
