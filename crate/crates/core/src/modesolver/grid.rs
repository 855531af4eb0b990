//! Conformal Yee discretization of a vacuum region bounded by perfect conductors.
//!
//! Every grid edge stores the length of its vacuum portion and every face the area
//! of its vacuum portion. Edges fully in metal carry no unknown.

use crate::error::{Error, Result};
use crate::geometry::{CavityGeometry, Vec3};
use rayon::prelude::*;

use super::slater::Deformation;

/// Anything that can report how much of a straight segment lies in vacuum.
pub trait Region: Sync {
    /// Vacuum length along `p0 + t*u`, `t` in `[0, len]`, with `u` a unit axis vector.
    fn vacuum_length(&self, p0: Vec3, u: Vec3, len: f64) -> f64;
    fn contains(&self, p: Vec3) -> bool;
    fn bounds(&self) -> (Vec3, Vec3);
}

impl<T: Region + ?Sized> Region for &T {
    fn vacuum_length(&self, p0: Vec3, u: Vec3, len: f64) -> f64 {
        (**self).vacuum_length(p0, u, len)
    }

    fn contains(&self, p: Vec3) -> bool {
        (**self).contains(p)
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        (**self).bounds()
    }
}

impl Region for CavityGeometry {
    fn vacuum_length(&self, p0: Vec3, u: Vec3, len: f64) -> f64 {
        self.union_length(p0, u, len)
    }

    fn contains(&self, p: Vec3) -> bool {
        CavityGeometry::contains(self, p)
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        (self.bounding_box.lo, self.bounding_box.hi)
    }
}

/// Axis-aligned rectangular box, used as a closed-form test cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl BoxRegion {
    pub fn new(a: f64, b: f64, l: f64) -> Self {
        Self {
            lo: [0.0; 3],
            hi: [a, b, l],
        }
    }
}

impl Region for BoxRegion {
    fn vacuum_length(&self, p0: Vec3, u: Vec3, len: f64) -> f64 {
        let mut t0 = 0.0f64;
        let mut t1 = len;
        for k in 0..3 {
            if u[k].abs() > 1e-14 {
                let s0 = (self.lo[k] - p0[k]) / u[k];
                let s1 = (self.hi[k] - p0[k]) / u[k];
                t0 = t0.max(s0.min(s1));
                t1 = t1.min(s0.max(s1));
            } else {
                // edges lying in a wall plane are tangential to the conductor
                let tol = 1e-9 * (self.hi[k] - self.lo[k]);
                if p0[k] <= self.lo[k] + tol || p0[k] >= self.hi[k] - tol {
                    return 0.0;
                }
            }
        }
        (t1 - t0).max(0.0)
    }

    fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        (self.lo, self.hi)
    }
}

/// What a domain was built from.
#[derive(Debug, Clone)]
pub enum DomainSource {
    Geometry(CavityGeometry),
    Box(BoxRegion),
    Deformed(CavityGeometry, Deformation),
}

impl DomainSource {
    pub fn geometry(&self) -> Option<&CavityGeometry> {
        match self {
            DomainSource::Geometry(g) | DomainSource::Deformed(g, _) => Some(g),
            DomainSource::Box(_) => None,
        }
    }

    pub fn region(&self) -> Box<dyn Region + '_> {
        match self {
            DomainSource::Geometry(g) => Box::new(g),
            DomainSource::Box(b) => Box::new(*b),
            DomainSource::Deformed(g, d) => Box::new(d.region(g)),
        }
    }
}

/// Default cap on vacuum edge unknowns.
pub const DEFAULT_UNKNOWN_BUDGET: usize = 2_500_000;
const NODE_BUDGET: usize = 40_000_000;
const PAD: i64 = 2;
const FACE_SUBLINES: usize = 8;

/// Uniform Yee grid with conformal edge lengths and face areas.
#[derive(Debug, Clone)]
pub struct DiscretizedDomain {
    pub h: f64,
    /// Node counts along x, y, z.
    pub nodes: [usize; 3],
    pub origin: Vec3,
    /// Vacuum length of each edge, per edge axis.
    pub edge_len: [Vec<f64>; 3],
    /// Vacuum area of each face, per face normal.
    pub face_area: [Vec<f64>; 3],
    pub source: DomainSource,
}

#[inline]
pub(crate) fn unit(a: usize) -> [usize; 3] {
    let mut e = [0; 3];
    e[a] = 1;
    e
}

impl DiscretizedDomain {
    /// Cells along x, y, z.
    pub fn dims(&self) -> [usize; 3] {
        [self.nodes[0] - 1, self.nodes[1] - 1, self.nodes[2] - 1]
    }

    pub fn edge_shape(&self, a: usize) -> [usize; 3] {
        let mut s = self.nodes;
        s[a] -= 1;
        s
    }

    pub fn face_shape(&self, n: usize) -> [usize; 3] {
        let mut s = self.nodes;
        s[(n + 1) % 3] -= 1;
        s[(n + 2) % 3] -= 1;
        s
    }

    #[inline]
    pub fn lin(shape: [usize; 3], i: usize, j: usize, k: usize) -> usize {
        (i * shape[1] + j) * shape[2] + k
    }

    pub fn node_pos(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
            self.origin[2] + k as f64 * self.h,
        ]
    }

    pub fn free_edges(&self) -> usize {
        self.edge_len.iter().map(|v| v.iter().filter(|&&l| l > 0.0).count()).sum()
    }

    /// Vacuum volume implied by the edge lengths.
    pub fn vacuum_volume(&self) -> f64 {
        let h2 = self.h * self.h;
        self.edge_len.iter().map(|v| v.iter().sum::<f64>()).sum::<f64>() * h2 / 3.0
    }

    /// Number of vacuum components, edges being linked through shared open faces.
    pub fn vacuum_components(&self) -> usize {
        let (comp, _) = self.edge_components();
        let mut roots: Vec<usize> = comp.into_iter().filter(|&c| c != usize::MAX).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    fn edge_offsets(&self) -> [usize; 4] {
        let mut o = [0; 4];
        for a in 0..3 {
            o[a + 1] = o[a] + self.edge_len[a].len();
        }
        o
    }

    // component label per global edge (usize::MAX for metal edges) and edge offsets
    fn edge_components(&self) -> (Vec<usize>, [usize; 4]) {
        let offs = self.edge_offsets();
        let mut uf = UnionFind::new(offs[3]);
        for n in 0..3 {
            let (b, c) = ((n + 1) % 3, (n + 2) % 3);
            let fs = self.face_shape(n);
            let (sb, sc) = (self.edge_shape(b), self.edge_shape(c));
            let (eb, ec) = (unit(b), unit(c));
            for i in 0..fs[0] {
                for j in 0..fs[1] {
                    for k in 0..fs[2] {
                        if self.face_area[n][Self::lin(fs, i, j, k)] <= 0.0 {
                            continue;
                        }
                        let g = [i, j, k];
                        let ids = [
                            offs[b] + Self::lin(sb, g[0], g[1], g[2]),
                            offs[b] + Self::lin(sb, g[0] + ec[0], g[1] + ec[1], g[2] + ec[2]),
                            offs[c] + Self::lin(sc, g[0], g[1], g[2]),
                            offs[c] + Self::lin(sc, g[0] + eb[0], g[1] + eb[1], g[2] + eb[2]),
                        ];
                        let mut first = None;
                        for &e in &ids {
                            if self.global_len(e, &offs) > 0.0 {
                                match first {
                                    None => first = Some(e),
                                    Some(f) => uf.union(f, e),
                                }
                            }
                        }
                    }
                }
            }
        }
        let comp = (0..offs[3])
            .map(|e| {
                if self.global_len(e, &offs) > 0.0 {
                    uf.find(e)
                } else {
                    usize::MAX
                }
            })
            .collect();
        (comp, offs)
    }

    #[inline]
    fn global_len(&self, e: usize, offs: &[usize; 4]) -> f64 {
        let a = if e < offs[1] {
            0
        } else if e < offs[2] {
            1
        } else {
            2
        };
        self.edge_len[a][e - offs[a]]
    }

    // keep only the largest vacuum component
    fn remove_islands(&mut self) {
        let (comp, offs) = self.edge_components();
        let mut counts = std::collections::HashMap::new();
        for &c in comp.iter().filter(|&&c| c != usize::MAX) {
            *counts.entry(c).or_insert(0usize) += 1;
        }
        if counts.len() <= 1 {
            return;
        }
        let keep = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&c, _)| c)
            .unwrap();
        for a in 0..3 {
            for (idx, l) in self.edge_len[a].iter_mut().enumerate() {
                let c = comp[offs[a] + idx];
                if c != usize::MAX && c != keep {
                    *l = 0.0;
                }
            }
        }
        for n in 0..3 {
            let (b, c) = ((n + 1) % 3, (n + 2) % 3);
            let fs = self.face_shape(n);
            let (sb, sc) = (self.edge_shape(b), self.edge_shape(c));
            let (eb, ec) = (unit(b), unit(c));
            for i in 0..fs[0] {
                for j in 0..fs[1] {
                    for k in 0..fs[2] {
                        let f = Self::lin(fs, i, j, k);
                        if self.face_area[n][f] <= 0.0 {
                            continue;
                        }
                        let l = [
                            self.edge_len[b][Self::lin(sb, i, j, k)],
                            self.edge_len[b][Self::lin(sb, i + ec[0], j + ec[1], k + ec[2])],
                            self.edge_len[c][Self::lin(sc, i, j, k)],
                            self.edge_len[c][Self::lin(sc, i + eb[0], j + eb[1], k + eb[2])],
                        ];
                        if l.iter().all(|&x| x <= 0.0) {
                            self.face_area[n][f] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Discretizes a tube geometry at `resolution` cells per (smallest) tube diameter.
pub fn discretize(geometry: &CavityGeometry, resolution: f64) -> Result<DiscretizedDomain> {
    if !(resolution >= 8.0) {
        return Err(Error::Domain(format!("resolution {resolution} below minimum of 8")));
    }
    let h = geometry.min_diameter() / resolution;
    build(DomainSource::Geometry(geometry.clone()), h, DEFAULT_UNKNOWN_BUDGET)
        .map_err(|e| rescale_capacity(e, resolution))
}

fn rescale_capacity(e: Error, resolution: f64) -> Error {
    match e {
        Error::Capacity { needed, budget, .. } => {
            let r = resolution * (budget as f64 / needed as f64).cbrt();
            Error::Capacity {
                needed,
                budget,
                suggested: r.floor().max(1.0) as usize,
            }
        }
        other => other,
    }
}

/// Discretizes an arbitrary source with explicit grid spacing and unknown budget.
pub fn build(source: DomainSource, h: f64, budget: usize) -> Result<DiscretizedDomain> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("grid spacing {h} must be positive")));
    }
    let region_box = source.region();
    let region: &dyn Region = region_box.as_ref();
    let (lo, hi) = region.bounds();
    let mut nodes = [0usize; 3];
    let mut origin = [0.0; 3];
    for k in 0..3 {
        let ilo = (lo[k] / h + 1e-9).floor() as i64 - PAD;
        let ihi = (hi[k] / h - 1e-9).ceil() as i64 + PAD;
        nodes[k] = (ihi - ilo + 1) as usize;
        origin[k] = ilo as f64 * h;
    }
    let total_nodes = nodes[0] * nodes[1] * nodes[2];
    if total_nodes > NODE_BUDGET {
        return Err(Error::Capacity {
            needed: 3 * total_nodes,
            budget: 3 * NODE_BUDGET,
            suggested: 0,
        });
    }
    let mut dom = DiscretizedDomain {
        h,
        nodes,
        origin,
        edge_len: [Vec::new(), Vec::new(), Vec::new()],
        face_area: [Vec::new(), Vec::new(), Vec::new()],
        source: source.clone(),
    };
    for a in 0..3 {
        let s = dom.edge_shape(a);
        let u = unit_f(a);
        let slab = s[1] * s[2];
        let mut v = vec![0.0; s[0] * slab];
        let d = &dom;
        v.par_chunks_mut(slab).enumerate().for_each(|(i, out)| {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let p = d.node_pos(i, j, k);
                    let l = region.vacuum_length(p, u, h);
                    out[j * s[2] + k] = if l < 1e-6 * h { 0.0 } else { l.min(h) };
                }
            }
        });
        dom.edge_len[a] = v;
    }
    let free = dom.free_edges();
    if free > budget {
        return Err(Error::Capacity {
            needed: free,
            budget,
            suggested: 0,
        });
    }
    for n in 0..3 {
        dom.face_area[n] = face_areas(&dom, region, n);
    }
    dom.remove_islands();
    Ok(dom)
}

fn unit_f(a: usize) -> Vec3 {
    let mut u = [0.0; 3];
    u[a] = 1.0;
    u
}

fn face_areas(dom: &DiscretizedDomain, region: &dyn Region, n: usize) -> Vec<f64> {
    let h = dom.h;
    let (b, c) = ((n + 1) % 3, (n + 2) % 3);
    let fs = dom.face_shape(n);
    let (sb, sc) = (dom.edge_shape(b), dom.edge_shape(c));
    let (eb, ec) = (unit(b), unit(c));
    let ub = unit_f(b);
    let slab = fs[1] * fs[2];
    let mut out = vec![0.0; fs[0] * slab];
    let lin = DiscretizedDomain::lin;
    out.par_chunks_mut(slab).enumerate().for_each(|(i, row)| {
        for j in 0..fs[1] {
            for k in 0..fs[2] {
                let l = [
                    dom.edge_len[b][lin(sb, i, j, k)],
                    dom.edge_len[b][lin(sb, i + ec[0], j + ec[1], k + ec[2])],
                    dom.edge_len[c][lin(sc, i, j, k)],
                    dom.edge_len[c][lin(sc, i + eb[0], j + eb[1], k + eb[2])],
                ];
                let full = l.iter().all(|&x| x >= h * (1.0 - 1e-12));
                let empty = l.iter().all(|&x| x <= 0.0);
                let area = if full {
                    h * h
                } else if empty {
                    0.0
                } else {
                    let p0 = dom.node_pos(i, j, k);
                    let mut acc = 0.0;
                    for s in 0..FACE_SUBLINES {
                        let mut p = p0;
                        p[c] += (s as f64 + 0.5) * h / FACE_SUBLINES as f64;
                        acc += region.vacuum_length(p, ub, h) * h / FACE_SUBLINES as f64;
                    }
                    let lmax = l.iter().cloned().fold(0.0, f64::max);
                    if acc <= 1e-9 * h * h && lmax > 0.0 {
                        // sub-lines missed a thin sliver next to an open edge
                        (2.0 / 3.0) * lmax * h / (4 * FACE_SUBLINES) as f64
                    } else {
                        acc.min(h * h)
                    }
                };
                row[j * fs[2] + k] = area;
            }
        }
    });
    out
}
