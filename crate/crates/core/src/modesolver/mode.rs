use super::grid::DiscretizedDomain;
use crate::consts::C0;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const NORMALIZATION: &str = "sum over vacuum edges of l_e h^2 E_e^2 = 1";

/// Resonant solution on a discretized domain.
#[derive(Debug, Clone)]
pub struct EigenMode {
    pub frequency: f64,
    /// Edge-tangential field per axis, zero on metal edges.
    pub field: [Vec<f64>; 3],
    pub normalization: &'static str,
    pub volume: f64,
    pub volume_ratio: f64,
    pub residual: f64,
    pub divergence: f64,
    pub domain: Arc<DiscretizedDomain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub f_hz: f64,
    pub v_m3: f64,
    pub v_over_lambda3: f64,
    pub residual: f64,
}

/// Sidecar describing a raw little-endian f32 field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    /// `[nx, ny, nz, 3]` node grid, component index fastest.
    pub shape: [usize; 4],
    pub spacing_m: f64,
    pub origin_m: [f64; 3],
    pub dtype: String,
    pub layout: String,
    pub normalization: String,
}

impl FieldSidecar {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: FieldSidecar = serde_json::from_str(text)?;
        if s.shape[3] != 3 || s.shape[..3].iter().any(|&n| n == 0) {
            return Err(Error::Parse(format!("bad field shape {:?}", s.shape)));
        }
        if !(s.spacing_m > 0.0) {
            return Err(Error::Parse("spacing must be positive".into()));
        }
        if s.dtype != "f32le" {
            return Err(Error::Parse(format!("unsupported dtype {}", s.dtype)));
        }
        s.shape[..3]
            .iter()
            .try_fold(3usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::Parse("field shape overflows".into()))?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    /// Decodes a raw dump matching this sidecar.
    pub fn decode(&self, bytes: &[u8]) -> Result<Vec<f32>> {
        if bytes.len() != 4 * self.len() {
            return Err(Error::Parse(format!(
                "dump has {} bytes, expected {}",
                bytes.len(),
                4 * self.len()
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

impl EigenMode {
    pub(crate) fn new(
        domain: Arc<DiscretizedDomain>,
        k2: f64,
        field: [Vec<f64>; 3],
        residual: f64,
        divergence: f64,
    ) -> Self {
        let frequency = C0 * k2.max(0.0).sqrt() / (2.0 * std::f64::consts::PI);
        let mut m = Self {
            frequency,
            field,
            normalization: NORMALIZATION,
            volume: 0.0,
            volume_ratio: 0.0,
            residual,
            divergence,
            domain,
        };
        if let Ok((v, r)) = mode_volume(&m) {
            m.volume = v;
            m.volume_ratio = r;
        }
        m
    }

    pub fn wavelength(&self) -> f64 {
        C0 / self.frequency
    }

    pub fn k(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency / C0
    }

    /// `sum l_e h^2 E_e^2`, the discrete `∫|E|^2 dV`.
    pub fn field_energy(&self) -> f64 {
        let h2 = self.domain.h * self.domain.h;
        (0..3)
            .map(|a| {
                self.field[a]
                    .iter()
                    .zip(&self.domain.edge_len[a])
                    .map(|(e, l)| e * e * l * h2)
                    .sum::<f64>()
            })
            .sum()
    }

    /// Node-averaged field vector.
    pub fn node_field(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let d = &self.domain;
        let g = [i, j, k];
        let mut out = [0.0; 3];
        for a in 0..3 {
            let s = d.edge_shape(a);
            let mut acc = 0.0;
            if g[a] < s[a] {
                acc += self.field[a][DiscretizedDomain::lin(s, i, j, k)];
            }
            if g[a] > 0 {
                let mut q = g;
                q[a] -= 1;
                acc += self.field[a][DiscretizedDomain::lin(s, q[0], q[1], q[2])];
            }
            out[a] = 0.5 * acc;
        }
        out
    }

    /// Largest node intensity `|E|^2` over nodes whose six incident edges lie
    /// entirely in vacuum, or over all nodes when there are none.
    ///
    /// Nodes on cut cells sit next to re-entrant wall edges where the field is
    /// singular, so their values grow without bound under refinement.
    pub fn max_node_intensity(&self) -> f64 {
        let d = &self.domain;
        let n = d.nodes;
        let full = |a: usize, g: [usize; 3]| {
            let s = d.edge_shape(a);
            g[a] < s[a] && d.edge_len[a][DiscretizedDomain::lin(s, g[0], g[1], g[2])] >= d.h * (1.0 - 1e-12)
        };
        let mut interior = 0.0f64;
        let mut any = 0.0f64;
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let e = self.node_field(i, j, k);
                    let v = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
                    any = any.max(v);
                    let g = [i, j, k];
                    let uncut = (0..3).all(|a| {
                        let mut q = g;
                        g[a] > 0 && full(a, g) && {
                            q[a] -= 1;
                            full(a, q)
                        }
                    });
                    if uncut {
                        interior = interior.max(v);
                    }
                }
            }
        }
        if interior > 0.0 {
            interior
        } else {
            any
        }
    }

    pub fn summary(&self) -> ModeSummary {
        ModeSummary {
            f_hz: self.frequency,
            v_m3: self.volume,
            v_over_lambda3: self.volume_ratio,
            residual: self.residual,
        }
    }

    /// Node-averaged field as little-endian f32 plus its sidecar.
    pub fn field_dump(&self) -> (Vec<u8>, FieldSidecar) {
        let n = self.domain.nodes;
        let mut bytes = Vec::with_capacity(n[0] * n[1] * n[2] * 12);
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    for v in self.node_field(i, j, k) {
                        bytes.extend_from_slice(&(v as f32).to_le_bytes());
                    }
                }
            }
        }
        let side = FieldSidecar {
            shape: [n[0], n[1], n[2], 3],
            spacing_m: self.domain.h,
            origin_m: self.domain.origin,
            dtype: "f32le".into(),
            layout: "row-major x,y,z,component; node-averaged edge fields".into(),
            normalization: self.normalization.into(),
        };
        (bytes, side)
    }
}

/// `V = ∫|E|^2 dV / max|E|^2` and `V / λ^3` with `λ = c/f`.
pub fn mode_volume(mode: &EigenMode) -> Result<(f64, f64)> {
    let energy = mode.field_energy();
    let peak = mode.max_node_intensity();
    if !(energy > 0.0) || !(peak > 0.0) {
        return Err(Error::DegenerateInput("mode has zero field energy".into()));
    }
    if !(mode.frequency > 0.0) {
        return Err(Error::DegenerateInput("mode frequency must be positive".into()));
    }
    let v = energy / peak;
    Ok((v, v / mode.wavelength().powi(3)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modesolver::grid::{build, BoxRegion, DomainSource, DEFAULT_UNKNOWN_BUDGET};

    #[test]
    fn uniform_field_fills_box() {
        let b = BoxRegion::new(2e-3, 1.5e-3, 3e-3);
        let dom = Arc::new(build(DomainSource::Box(b), 0.25e-3, DEFAULT_UNKNOWN_BUDGET).unwrap());
        let field = [
            dom.edge_len[0].iter().map(|&l| if l > 0.0 { 1.0 } else { 0.0 }).collect(),
            vec![0.0; dom.edge_len[1].len()],
            vec![0.0; dom.edge_len[2].len()],
        ];
        let m = EigenMode::new(dom, 1e6, field, 0.0, 0.0);
        let (v, _) = mode_volume(&m).unwrap();
        // x edges on the y and z walls are metal, so the field fills the interior rows
        let interior = 2e-3 * (1.5e-3 - 0.25e-3) * (3e-3 - 0.25e-3);
        assert!((v / interior - 1.0).abs() < 1e-9, "{v} {interior}");
    }

    #[test]
    fn zero_field_is_rejected() {
        let b = BoxRegion::new(1e-3, 1e-3, 1e-3);
        let dom = Arc::new(build(DomainSource::Box(b), 0.25e-3, DEFAULT_UNKNOWN_BUDGET).unwrap());
        let field = [
            vec![0.0; dom.edge_len[0].len()],
            vec![0.0; dom.edge_len[1].len()],
            vec![0.0; dom.edge_len[2].len()],
        ];
        let m = EigenMode::new(dom, 1e6, field, 0.0, 0.0);
        assert!(matches!(mode_volume(&m), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn sidecar_parse() {
        let s = r#"{"shape":[2,3,4,3],"spacing_m":1e-4,"origin_m":[0,0,0],"dtype":"f32le","layout":"x","normalization":"n"}"#;
        let side = FieldSidecar::from_json(s).unwrap();
        assert_eq!(side.len(), 72);
        assert!(side.decode(&[0u8; 288]).is_ok());
        assert!(side.decode(&[0u8; 10]).is_err());
        assert!(FieldSidecar::from_json(&s.replace("[2,3,4,3]", "[2,3,4,2]")).is_err());
    }
}
