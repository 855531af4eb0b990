//! Wall deformations and first-order Slater frequency shifts.

use super::grid::{unit, DiscretizedDomain, Region};
use super::mode::EigenMode;
use crate::error::{Error, Result};
use crate::geometry::{CavityGeometry, Vec3};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Part of one tube wall: axial range (relative to the tube center, meters) and
/// azimuth range (radians, measured from `reference` around the tube axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub tube: usize,
    pub axial: (f64, f64),
    pub azimuth: (f64, f64),
    pub reference: Vec3,
}

/// Normal wall displacement over a patch; `delta > 0` moves the wall into the vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub patch: Patch,
    pub delta: f64,
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

// local frame (axis, e1, e2) of the patched tube
fn frame(g: &CavityGeometry, p: &Patch) -> (Vec3, Vec3, Vec3) {
    let a = g.tubes[p.tube].axis;
    let r = p.reference;
    let ra = dot(r, a);
    let mut e1 = [r[0] - ra * a[0], r[1] - ra * a[1], r[2] - ra * a[2]];
    let n = dot(e1, e1).sqrt();
    if n < 1e-12 {
        // any perpendicular will do
        let t = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let ta = dot(t, a);
        e1 = [t[0] - ta * a[0], t[1] - ta * a[1], t[2] - ta * a[2]];
    }
    let n = dot(e1, e1).sqrt();
    e1 = [e1[0] / n, e1[1] / n, e1[2] / n];
    (a, e1, cross(a, e1))
}

fn angle_in(phi: f64, range: (f64, f64)) -> bool {
    let span = range.1 - range.0;
    if span >= 2.0 * PI {
        return true;
    }
    let d = (phi - range.0).rem_euclid(2.0 * PI);
    d <= span
}

impl Deformation {
    pub fn validate(&self, g: &CavityGeometry) -> Result<()> {
        if self.patch.tube >= g.tubes.len() {
            return Err(Error::Domain(format!("patch tube {} out of range", self.patch.tube)));
        }
        let t = &g.tubes[self.patch.tube];
        if !(self.patch.axial.1 > self.patch.axial.0) || !(self.patch.azimuth.1 > self.patch.azimuth.0) {
            return Err(Error::EmptySelection);
        }
        if self.delta.abs() >= t.radius() {
            return Err(Error::Domain("displacement exceeds tube radius".into()));
        }
        Ok(())
    }

    /// First-order theory is only flagged valid for `|delta| <= h`.
    pub fn first_order_valid(&self, h: f64) -> bool {
        self.delta.abs() <= h
    }

    pub fn region<'a>(&'a self, g: &'a CavityGeometry) -> DeformedRegion<'a> {
        let (axis, e1, e2) = frame(g, &self.patch);
        DeformedRegion {
            geometry: g,
            def: self,
            axis,
            e1,
            e2,
        }
    }
}

/// Tube union with one wall patch displaced.
pub struct DeformedRegion<'a> {
    geometry: &'a CavityGeometry,
    def: &'a Deformation,
    axis: Vec3,
    e1: Vec3,
    e2: Vec3,
}

const SEGMENT_SAMPLES: usize = 512;

impl DeformedRegion<'_> {
    // (axial coordinate, radial distance, azimuth) in the patched tube frame
    fn local(&self, p: Vec3) -> (f64, f64, f64) {
        let t = &self.geometry.tubes[self.def.patch.tube];
        let q = [p[0] - t.center[0], p[1] - t.center[1], p[2] - t.center[2]];
        let s = dot(q, self.axis);
        let x = dot(q, self.e1);
        let y = dot(q, self.e2);
        (s, x.hypot(y), y.atan2(x))
    }

    fn in_shell(&self, p: Vec3) -> bool {
        let t = &self.geometry.tubes[self.def.patch.tube];
        let r = t.radius();
        let (s, rho, phi) = self.local(p);
        let pa = &self.def.patch;
        if s < pa.axial.0 || s > pa.axial.1 || !angle_in(phi, pa.azimuth) {
            return false;
        }
        let d = self.def.delta;
        let inside = if d >= 0.0 {
            rho > r - d && rho <= r
        } else {
            rho > r && rho < r - d
        };
        if !inside {
            return false;
        }
        !self
            .geometry
            .tubes
            .iter()
            .enumerate()
            .any(|(i, o)| i != pa.tube && o.contains(p))
    }

    fn near_patch(&self, mid: Vec3, margin: f64) -> bool {
        let t = &self.geometry.tubes[self.def.patch.tube];
        let (s, rho, _) = self.local(mid);
        let pa = &self.def.patch;
        let r = t.radius();
        let d = self.def.delta.abs();
        s >= pa.axial.0 - margin
            && s <= pa.axial.1 + margin
            && rho >= r - d - margin
            && rho <= r + d + margin
    }
}

impl Region for DeformedRegion<'_> {
    fn vacuum_length(&self, p0: Vec3, u: Vec3, len: f64) -> f64 {
        let mid = [p0[0] + 0.5 * len * u[0], p0[1] + 0.5 * len * u[1], p0[2] + 0.5 * len * u[2]];
        if !self.near_patch(mid, len) {
            return self.geometry.union_length(p0, u, len);
        }
        let dt = len / SEGMENT_SAMPLES as f64;
        let n = (0..SEGMENT_SAMPLES)
            .filter(|&i| {
                let t = (i as f64 + 0.5) * dt;
                self.contains([p0[0] + t * u[0], p0[1] + t * u[1], p0[2] + t * u[2]])
            })
            .count();
        n as f64 * dt
    }

    fn contains(&self, p: Vec3) -> bool {
        let base = self.geometry.contains(p);
        if self.def.delta >= 0.0 {
            base && !self.in_shell(p)
        } else {
            base || self.in_shell(p)
        }
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        let (mut lo, mut hi) = (self.geometry.bounding_box.lo, self.geometry.bounding_box.hi);
        let d = self.def.delta.abs();
        for k in 0..3 {
            lo[k] -= d;
            hi[k] += d;
        }
        (lo, hi)
    }
}

/// Trilinear interpolation of the edge field component `a` at `p`.
fn interp_edge(mode: &EigenMode, a: usize, p: Vec3) -> f64 {
    let d = &mode.domain;
    let s = d.edge_shape(a);
    let mut base = [0usize; 3];
    let mut w = [0.0; 3];
    for k in 0..3 {
        let off = if k == a { 0.5 } else { 0.0 };
        let x = (p[k] - d.origin[k]) / d.h - off;
        if x < 0.0 || x >= (s[k] - 1) as f64 {
            return 0.0;
        }
        base[k] = x.floor() as usize;
        w[k] = x - base[k] as f64;
    }
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for c in 0..8 {
        let o = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        let mut wt = 1.0;
        for k in 0..3 {
            wt *= if o[k] == 1 { w[k] } else { 1.0 - w[k] };
        }
        let idx = DiscretizedDomain::lin(s, base[0] + o[0], base[1] + o[1], base[2] + o[2]);
        // metal edges carry no unknown and are left out of the stencil
        if wt != 0.0 && d.edge_len[a][idx] > 0.0 {
            acc += wt * mode.field[a][idx];
            wsum += wt;
        }
    }
    if wsum > 0.0 {
        acc / wsum
    } else {
        0.0
    }
}

// curl component along `n` on face (n, g): circulation over vacuum area
fn face_curl(mode: &EigenMode, n: usize, g: [usize; 3]) -> f64 {
    let d = &mode.domain;
    let fs = d.face_shape(n);
    let area = d.face_area[n][DiscretizedDomain::lin(fs, g[0], g[1], g[2])];
    if area <= 0.0 {
        return 0.0;
    }
    let (b, c) = ((n + 1) % 3, (n + 2) % 3);
    let mut circ = 0.0;
    for (ax, off, sg) in [(b, [0, 0, 0], 1.0), (c, unit(b), 1.0), (b, unit(c), -1.0), (c, [0, 0, 0], -1.0)] {
        let s = d.edge_shape(ax);
        let q = [g[0] + off[0], g[1] + off[1], g[2] + off[2]];
        let idx = DiscretizedDomain::lin(s, q[0], q[1], q[2]);
        circ += sg * d.edge_len[ax][idx] * mode.field[ax][idx];
    }
    circ / area
}

fn interp_curl(mode: &EigenMode, n: usize, p: Vec3) -> f64 {
    let d = &mode.domain;
    let fs = d.face_shape(n);
    let mut base = [0usize; 3];
    let mut w = [0.0; 3];
    for k in 0..3 {
        let off = if k == n { 0.0 } else { 0.5 };
        let x = (p[k] - d.origin[k]) / d.h - off;
        if x < 0.0 || x >= (fs[k] - 1) as f64 {
            return 0.0;
        }
        base[k] = x.floor() as usize;
        w[k] = x - base[k] as f64;
    }
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for c in 0..8 {
        let o = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        let mut wt = 1.0;
        for k in 0..3 {
            wt *= if o[k] == 1 { w[k] } else { 1.0 - w[k] };
        }
        let g = [base[0] + o[0], base[1] + o[1], base[2] + o[2]];
        if wt != 0.0 && d.face_area[n][DiscretizedDomain::lin(fs, g[0], g[1], g[2])] > 0.0 {
            acc += wt * face_curl(mode, n, g);
            wsum += wt;
        }
    }
    if wsum > 0.0 {
        acc / wsum
    } else {
        0.0
    }
}

fn field_at(mode: &EigenMode, p: Vec3) -> (Vec3, Vec3) {
    let e = [interp_edge(mode, 0, p), interp_edge(mode, 1, p), interp_edge(mode, 2, p)];
    let k = mode.k();
    let hc = [
        interp_curl(mode, 0, p) / k,
        interp_curl(mode, 1, p) / k,
        interp_curl(mode, 2, p) / k,
    ];
    (e, hc)
}

struct WallSample {
    weight: f64,
    e: Vec<Vec3>,
    hc: Vec<Vec3>,
}

// wall values are extrapolated linearly from one and two cells inside the vacuum
fn wall_samples(modes: &[&EigenMode], def: &Deformation) -> Result<Vec<WallSample>> {
    let dom = &modes[0].domain;
    let g = dom
        .source
        .geometry()
        .ok_or_else(|| Error::Domain("deformations need a tube geometry".into()))?;
    def.validate(g)?;
    let t = &g.tubes[def.patch.tube];
    let (axis, e1, e2) = frame(g, &def.patch);
    let r = t.radius();
    let h = dom.h;
    let pa = &def.patch;
    let ns = (((pa.axial.1 - pa.axial.0) / h * 4.0).ceil() as usize).max(4);
    let span = (pa.azimuth.1 - pa.azimuth.0).min(2.0 * PI);
    let np = ((span * r / h * 4.0).ceil() as usize).max(4);
    let ds = (pa.axial.1 - pa.axial.0) / ns as f64;
    let dp = span / np as f64;
    // exact swept volume per unit area of the reference wall
    let d = def.delta;
    let dv = (r * r - (r - d) * (r - d)) / 2.0 * dp * ds;
    let mut out = Vec::new();
    for i in 0..ns {
        let s = pa.axial.0 + (i as f64 + 0.5) * ds;
        for j in 0..np {
            let phi = pa.azimuth.0 + (j as f64 + 0.5) * dp;
            let dir = [
                phi.cos() * e1[0] + phi.sin() * e2[0],
                phi.cos() * e1[1] + phi.sin() * e2[1],
                phi.cos() * e1[2] + phi.sin() * e2[2],
            ];
            let at = |rho: f64| -> Vec3 {
                [
                    t.center[0] + s * axis[0] + rho * dir[0],
                    t.center[1] + s * axis[1] + rho * dir[1],
                    t.center[2] + s * axis[2] + rho * dir[2],
                ]
            };
            let wall = at(r);
            let covered = g
                .tubes
                .iter()
                .enumerate()
                .any(|(k, o)| k != pa.tube && o.contains(wall));
            if covered || s.abs() > t.half_length {
                continue;
            }
            let (p1, p2) = (at(r - h), at(r - 2.0 * h));
            let mut es = Vec::with_capacity(modes.len());
            let mut hs = Vec::with_capacity(modes.len());
            for m in modes {
                let (ea, ha) = field_at(m, p1);
                let (eb, hb) = field_at(m, p2);
                es.push(std::array::from_fn(|k| 2.0 * ea[k] - eb[k]));
                hs.push(std::array::from_fn(|k| 2.0 * ha[k] - hb[k]));
            }
            out.push(WallSample { weight: dv, e: es, hc: hs });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(out)
}

/// First-order shift `Δf = f (ΔU_H - ΔU_E) / U` for a single mode.
pub fn slater_shift(mode: &EigenMode, def: &Deformation) -> Result<f64> {
    if def.delta == 0.0 {
        return Ok(0.0);
    }
    let samples = wall_samples(&[mode], def)?;
    let u = 2.0 * mode.field_energy();
    let mut acc = 0.0;
    for s in &samples {
        acc += s.weight * (dot(s.hc[0], s.hc[0]) - dot(s.e[0], s.e[0]));
    }
    Ok(mode.frequency * acc / u)
}

/// First-order shifts of a degenerate (or nearly degenerate) group of modes,
/// from the eigenvalues of the perturbation matrix, sorted ascending.
pub fn slater_shift_degenerate(modes: &[EigenMode], def: &Deformation) -> Result<Vec<f64>> {
    if modes.is_empty() {
        return Err(Error::DegenerateInput("no modes given".into()));
    }
    if def.delta == 0.0 {
        return Ok(vec![0.0; modes.len()]);
    }
    let refs: Vec<&EigenMode> = modes.iter().collect();
    let samples = wall_samples(&refs, def)?;
    let k = modes.len();
    let norms: Vec<f64> = modes.iter().map(|m| (2.0 * m.field_energy()).sqrt()).collect();
    let w = DMatrix::from_fn(k, k, |i, j| {
        samples
            .iter()
            .map(|s| s.weight * (dot(s.hc[i], s.hc[j]) - dot(s.e[i], s.e[j])))
            .sum::<f64>()
            / (norms[i] * norms[j])
    });
    let f0 = modes.iter().map(|m| m.frequency).sum::<f64>() / k as f64;
    let eig = SymmetricEigen::new((&w + w.transpose()) * 0.5);
    let mut v: Vec<f64> = eig.eigenvalues.iter().map(|x| x * f0).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{preset, PresetName};

    #[test]
    fn angle_ranges() {
        assert!(angle_in(0.1, (0.0, 0.5)));
        assert!(angle_in(-0.1, (-0.2, 0.2)));
        assert!(angle_in(3.0, (2.5, 3.5)));
        assert!(angle_in(-3.0, (2.5, 3.5)));
        assert!(!angle_in(1.0, (0.0, 0.5)));
    }

    #[test]
    fn deformed_region_removes_shell() {
        let g = preset(PresetName::Cross3Hybrid);
        let r = g.tubes[0].radius();
        let def = Deformation {
            patch: Patch {
                tube: 0,
                axial: (2.0e-3, 3.0e-3),
                azimuth: (-0.5, 0.5),
                reference: [0.0, 0.0, 1.0],
            },
            delta: 50e-6,
        };
        let reg = def.region(&g);
        let inside = [2.5e-3, 0.0, r - 20e-6];
        assert!(g.contains(inside));
        assert!(!reg.contains(inside));
        assert!(reg.contains([2.5e-3, 0.0, r - 80e-6]));
        // outside the axial range the wall is untouched
        assert!(reg.contains([4.0e-3, 0.0, r - 20e-6]));
        let out = Deformation { delta: -50e-6, ..def };
        let reg = out.region(&g);
        assert!(reg.contains([2.5e-3, 0.0, r + 20e-6]));
        assert!(!g.contains([2.5e-3, 0.0, r + 20e-6]));
    }

    #[test]
    fn validation() {
        let g = preset(PresetName::Elbow);
        let mut def = Deformation {
            patch: Patch {
                tube: 5,
                axial: (0.0, 1e-3),
                azimuth: (0.0, 1.0),
                reference: [0.0, 0.0, 1.0],
            },
            delta: 1e-6,
        };
        assert!(def.validate(&g).is_err());
        def.patch.tube = 0;
        assert!(def.validate(&g).is_ok());
        def.patch.axial = (1.0, 1.0);
        assert!(matches!(def.validate(&g), Err(Error::EmptySelection)));
        assert!(def.first_order_valid(1e-4));
    }
}
