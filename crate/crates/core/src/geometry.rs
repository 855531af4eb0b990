//! Cylindrical tube unions, analytic cutoff and preset cavities.

use crate::consts::{C0, TE11_ROOT};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn axpy(a: f64, x: Vec3, y: Vec3) -> Vec3 {
    [a * x[0] + y[0], a * x[1] + y[1], a * x[2] + y[2]]
}

/// Cutoff frequency of the lowest (TE11) mode of a circular guide of diameter `d`.
pub fn cutoff_frequency(d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("diameter must be positive, got {d}")));
    }
    Ok(TE11_ROOT * C0 / (PI * d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub mode_constant: f64,
    pub diameter: f64,
    pub cutoff_frequency: f64,
}

impl CutoffSpec {
    pub fn te11(diameter: f64) -> Result<Self> {
        Ok(Self {
            mode_constant: TE11_ROOT,
            diameter,
            cutoff_frequency: cutoff_frequency(diameter)?,
        })
    }
}

/// A finite circular cylinder with flat end caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub center: Vec3,
    pub axis: Vec3,
    #[serde(rename = "diameter_m")]
    pub diameter: f64,
    #[serde(rename = "half_length_m")]
    pub half_length: f64,
}

impl Tube {
    pub fn new(center: Vec3, axis: Vec3, diameter: f64, half_length: f64) -> Result<Self> {
        let t = Self {
            center,
            axis,
            diameter,
            half_length,
        };
        t.normalized()
    }

    /// Tube that starts at `origin` and extends a length `2*half_length` along `dir`.
    pub fn arm(origin: Vec3, dir: Vec3, diameter: f64, half_length: f64) -> Result<Self> {
        let n = dot(dir, dir).sqrt();
        let u = [dir[0] / n, dir[1] / n, dir[2] / n];
        Self::new(axpy(half_length, u, origin), u, diameter, half_length)
    }

    fn normalized(mut self) -> Result<Self> {
        let finite = self.center.iter().chain(self.axis.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("tube center and axis must be finite".into()));
        }
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return Err(Error::Domain(format!("tube diameter {} must be positive", self.diameter)));
        }
        if !(self.half_length > 0.0 && self.half_length.is_finite()) {
            return Err(Error::Domain(format!(
                "tube half length {} must be positive",
                self.half_length
            )));
        }
        let n = dot(self.axis, self.axis).sqrt();
        if !(n > 1e-300) {
            return Err(Error::Domain("tube axis must be nonzero".into()));
        }
        for k in 0..3 {
            self.axis[k] /= n;
        }
        Ok(self)
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let q = sub(p, self.center);
        let qa = dot(q, self.axis);
        let rad2 = dot(q, q) - qa * qa;
        let r = self.radius();
        qa.abs() <= self.half_length && rad2 < r * r
    }

    /// Parameter interval `[t0, t1]` (clipped to `[0, len]`) where the segment
    /// `p0 + t*u` lies inside the tube. Returns `None` for an empty overlap.
    /// `u` must be a unit vector.
    pub fn segment_interval(&self, p0: Vec3, u: Vec3, len: f64) -> Option<(f64, f64)> {
        let q = sub(p0, self.center);
        let qa = dot(q, self.axis);
        let ua = dot(u, self.axis);
        let qp = axpy(-qa, self.axis, q);
        let up = axpy(-ua, self.axis, u);
        let a = dot(up, up);
        let b = 2.0 * dot(qp, up);
        let r = self.radius();
        let c = dot(qp, qp) - r * r;
        let (mut t0, mut t1);
        if a > 1e-14 {
            let disc = b * b - 4.0 * a * c;
            if disc <= 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            t0 = (-b - sq) / (2.0 * a);
            t1 = (-b + sq) / (2.0 * a);
        } else {
            if c >= 0.0 {
                return None;
            }
            t0 = f64::NEG_INFINITY;
            t1 = f64::INFINITY;
        }
        if ua.abs() > 1e-14 {
            let s0 = (-self.half_length - qa) / ua;
            let s1 = (self.half_length - qa) / ua;
            t0 = t0.max(s0.min(s1));
            t1 = t1.min(s0.max(s1));
        } else if qa.abs() > self.half_length * (1.0 + 1e-12) {
            // caps are closed so that arms meeting on a grid plane do not leave a sheet
            return None;
        }
        let t0 = t0.clamp(0.0, len);
        let t1 = t1.clamp(0.0, len);
        (t1 > t0).then_some((t0, t1))
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        let r = self.radius();
        for k in 0..3 {
            let a = self.axis[k];
            let ext = a.abs() * self.half_length + r * (1.0 - a * a).max(0.0).sqrt();
            lo[k] = self.center[k] - ext;
            hi[k] = self.center[k] + ext;
        }
        (lo, hi)
    }

    pub fn volume(&self) -> f64 {
        PI * self.radius().powi(2) * 2.0 * self.half_length
    }

    fn segment(&self) -> (Vec3, Vec3) {
        (
            axpy(-self.half_length, self.axis, self.center),
            axpy(self.half_length, self.axis, self.center),
        )
    }

    /// Applies `p -> rot*p + shift`.
    pub fn transformed(&self, rot: &[[f64; 3]; 3], shift: Vec3) -> Tube {
        let mv = |v: Vec3| -> Vec3 {
            [
                dot(rot[0], v),
                dot(rot[1], v),
                dot(rot[2], v),
            ]
        };
        let c = mv(self.center);
        Tube {
            center: [c[0] + shift[0], c[1] + shift[1], c[2] + shift[2]],
            axis: mv(self.axis),
            diameter: self.diameter,
            half_length: self.half_length,
        }
    }
}

// closest distance between two segments
fn segment_distance(p: (Vec3, Vec3), q: (Vec3, Vec3)) -> f64 {
    let d1 = sub(p.1, p.0);
    let d2 = sub(q.1, q.0);
    let r = sub(p.0, q.0);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let c = dot(d1, r);
    let b = dot(d1, d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-20 * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    let x = axpy(s, d1, p.0);
    let y = axpy(t, d2, q.0);
    let w = sub(x, y);
    dot(w, w).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec3,
    pub hi: Vec3,
}

/// Union of tubes forming the vacuum region of a cavity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CavityGeometry {
    pub tubes: Vec<Tube>,
    #[serde(rename = "ports")]
    pub coupling_ports: Vec<usize>,
    #[serde(skip)]
    pub bounding_box: BoundingBox,
}

#[derive(Deserialize)]
struct GeometryDoc {
    tubes: Vec<Tube>,
    #[serde(default)]
    ports: Vec<usize>,
}

impl CavityGeometry {
    pub fn new(tubes: Vec<Tube>, coupling_ports: Vec<usize>) -> Result<Self> {
        if tubes.is_empty() {
            return Err(Error::Domain("geometry needs at least one tube".into()));
        }
        let tubes = tubes
            .into_iter()
            .map(|t| t.normalized())
            .collect::<Result<Vec<_>>>()?;
        if let Some(&p) = coupling_ports.iter().find(|&&p| p >= tubes.len()) {
            return Err(Error::Domain(format!("port index {p} out of range")));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for t in &tubes {
            let (a, b) = t.bbox();
            for k in 0..3 {
                lo[k] = lo[k].min(a[k]);
                hi[k] = hi[k].max(b[k]);
            }
        }
        let g = Self {
            tubes,
            coupling_ports,
            bounding_box: BoundingBox { lo, hi },
        };
        if !g.is_connected() {
            return Err(Error::Domain("tubes do not form a connected union".into()));
        }
        Ok(g)
    }

    // tubes are linked when their axis segments come closer than the sum of radii
    fn is_connected(&self) -> bool {
        let n = self.tubes.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if seen[j] {
                    continue;
                }
                let (a, b) = (&self.tubes[i], &self.tubes[j]);
                let gap = segment_distance(a.segment(), b.segment());
                if gap < a.radius() + b.radius() {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.tubes.iter().any(|t| t.contains(p))
    }

    /// Length of `[0, len]` along `p0 + t*u` covered by the union of tubes.
    pub fn union_length(&self, p0: Vec3, u: Vec3, len: f64) -> f64 {
        let mut iv: intervals::Intervals = intervals::Intervals::new();
        for t in &self.tubes {
            if let Some(x) = t.segment_interval(p0, u, len) {
                iv.push(x);
            }
        }
        iv.union_length()
    }

    pub fn min_diameter(&self) -> f64 {
        self.tubes.iter().map(|t| t.diameter).fold(f64::INFINITY, f64::min)
    }

    pub fn transformed(&self, rot: &[[f64; 3]; 3], shift: Vec3) -> Result<Self> {
        Self::new(
            self.tubes.iter().map(|t| t.transformed(rot, shift)).collect(),
            self.coupling_ports.clone(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GeometryDoc = serde_json::from_str(text)?;
        Self::new(doc.tubes, doc.ports)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

mod intervals {
    pub struct Intervals {
        v: Vec<(f64, f64)>,
    }

    impl Intervals {
        pub fn new() -> Self {
            Self { v: Vec::new() }
        }

        pub fn push(&mut self, x: (f64, f64)) {
            self.v.push(x);
        }

        pub fn union_length(mut self) -> f64 {
            match self.v.len() {
                0 => return 0.0,
                1 => return self.v[0].1 - self.v[0].0,
                _ => {}
            }
            self.v.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut tot = 0.0;
            let (mut c0, mut c1) = self.v[0];
            for &(a, b) in &self.v[1..] {
                if a > c1 {
                    tot += c1 - c0;
                    c0 = a;
                    c1 = b;
                } else {
                    c1 = c1.max(b);
                }
            }
            tot + c1 - c0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Elbow,
    Tee,
    Star4,
    Cross3Hybrid,
    Quasicyl15,
}

impl PresetName {
    pub const ALL: [PresetName; 5] = [
        PresetName::Elbow,
        PresetName::Tee,
        PresetName::Star4,
        PresetName::Cross3Hybrid,
        PresetName::Quasicyl15,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Elbow => "elbow",
            PresetName::Tee => "tee",
            PresetName::Star4 => "star4",
            PresetName::Cross3Hybrid => "cross3_hybrid",
            PresetName::Quasicyl15 => "quasicyl15",
        }
    }

    /// Documented resonance the preset is calibrated against.
    pub fn target_frequency(&self) -> f64 {
        match self {
            PresetName::Elbow => 109e9,
            PresetName::Tee => 98e9,
            PresetName::Star4 => 92e9,
            PresetName::Cross3Hybrid => 98.2e9,
            PresetName::Quasicyl15 => 30e9,
        }
    }
}

impl std::str::FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Lookup(s.to_string()))
    }
}

pub const PRESET_DIAMETER: f64 = 1.6e-3;
pub const HYBRID_DIAMETER: f64 = 1.5e-3;
/// Default tube half length in diameters.
pub const HALF_LENGTH_DIAMETERS: f64 = 4.0;
/// Default distance, in diameters, that a bored arm runs past the junction point.
pub const ARM_OVERSHOOT_DIAMETERS: f64 = 0.1;

pub fn preset(name: PresetName) -> CavityGeometry {
    preset_with_half_length(name, HALF_LENGTH_DIAMETERS)
}

/// Preset geometry with tube half lengths of `hl_diam` diameters.
///
/// Layout (origin at the common intersection point):
/// - elbow: arms along +x and +y meeting at the corner
/// - tee: arms along -x, +x and +y
/// - star4: the tee plus an arm along +z, four beams out of one junction
///
/// Arms are bored from their far end and run `ARM_OVERSHOOT_DIAMETERS` past the
/// junction point, as a drill tip would.
/// - cross3_hybrid: three through tubes along x, y, z with half lengths
///   `hl`, `1.125 hl`, `1.25 hl` (the x tube carries the coupling port)
/// - quasicyl15: 15 parallel z tubes, one on axis, 6 on a 1.3 mm ring and 8 on a
///   2.5 mm ring
pub fn preset_with_half_length(name: PresetName, hl_diam: f64) -> CavityGeometry {
    preset_with_dims(name, hl_diam, ARM_OVERSHOOT_DIAMETERS)
}

/// Preset with explicit half length and arm overshoot, both in diameters.
pub fn preset_with_dims(name: PresetName, hl_diam: f64, overshoot_diam: f64) -> CavityGeometry {
    let o = [0.0; 3];
    let ex = [1.0, 0.0, 0.0];
    let ey = [0.0, 1.0, 0.0];
    let ez = [0.0, 0.0, 1.0];
    let mx = [-1.0, 0.0, 0.0];
    let d = match name {
        PresetName::Cross3Hybrid => HYBRID_DIAMETER,
        _ => PRESET_DIAMETER,
    };
    let hl = hl_diam * d;
    // arms are bored from outside and run past the junction point by `over`
    let over = overshoot_diam * d;
    let arm = |dir: Vec3| {
        let start = [-over * dir[0], -over * dir[1], -over * dir[2]];
        Tube::arm(start, dir, d, hl + 0.5 * over).unwrap()
    };
    let through = |axis: Vec3, h: f64| Tube::new(o, axis, d, h).unwrap();
    let (tubes, ports) = match name {
        PresetName::Elbow => (vec![arm(ex), arm(ey)], vec![0]),
        PresetName::Tee => (vec![arm(mx), arm(ex), arm(ey)], vec![2]),
        PresetName::Star4 => (vec![arm(mx), arm(ex), arm(ey), arm(ez)], vec![2]),
        PresetName::Cross3Hybrid => (
            vec![through(ex, hl), through(ey, 1.125 * hl), through(ez, 1.25 * hl)],
            vec![0],
        ),
        PresetName::Quasicyl15 => {
            let mut t = vec![through(ez, hl)];
            for k in 0..6 {
                let a = k as f64 * PI / 3.0;
                t.push(Tube::new([1.3e-3 * a.cos(), 1.3e-3 * a.sin(), 0.0], ez, d, hl).unwrap());
            }
            for k in 0..8 {
                let a = k as f64 * PI / 4.0;
                t.push(Tube::new([2.5e-3 * a.cos(), 2.5e-3 * a.sin(), 0.0], ez, d, hl).unwrap());
            }
            (t, vec![0])
        }
    };
    CavityGeometry::new(tubes, ports).expect("preset geometry is valid")
}
