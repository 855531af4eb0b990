//! Sparse assembly of the conformal curl-curl operator.
//!
//! Unknowns are tangential field values on vacuum edges. The discrete operator is
//! `K = C^T W C` where `C` maps edge fields to face circulations (entries `±l_e`) and
//! `W = h / A_f`. The mass matrix is diagonal, `M_e = l_e h^2`, and eigenvalues are
//! `k^2 = (2 pi f / c)^2`. A grad-div term `s h G G^T` built from unit node incidence
//! lifts the static gradient fields away from zero without touching solenoidal modes.

use super::grid::{unit, DiscretizedDomain};
use rayon::prelude::*;

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut data = Vec::with_capacity(nnz);
        for r in &rows {
            for &(c, v) in r {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(r, yr)| {
            let mut s = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            *yr = s;
        });
    }

    /// `y = A^T x`.
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for p in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[p]] += self.data[p] * xr;
            }
        }
    }
}

/// Global edge reference: axis and linear index inside that axis' edge array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRef {
    pub axis: usize,
    pub index: usize,
}

/// Assembled generalized eigenproblem `(K + P) x = k^2 M x`.
#[derive(Debug, Clone)]
pub struct Operator {
    /// Curl-curl plus grad-div, symmetric, full pattern.
    pub stiffness: Csr,
    /// Diagonal mass `l_e h^2`.
    pub mass: Vec<f64>,
    /// Signed unit node incidence (edges x potentials).
    pub grad: Csr,
    pub grad_scale: f64,
    /// Unknown index of each edge, per axis (`usize::MAX` for metal).
    pub edge_unknown: [Vec<usize>; 3],
    pub edges: Vec<EdgeRef>,
    pub h: f64,
}

/// Weight of the grad-div regularization relative to `h G G^T`.
pub const DEFAULT_GRAD_SCALE: f64 = 2.0;
// larger floating conductors are left unregularized; their gradient modes are filtered later
const MAX_POTENTIAL_DEGREE: usize = 4096;

impl Operator {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// `x^T P x / x^T (K+P) x`, the share of the Rayleigh quotient carried by divergence.
    pub fn divergence_fraction(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.grad.ncols];
        self.grad.matvec_t(x, &mut g);
        let p = self.grad_scale * self.h * g.iter().map(|v| v * v).sum::<f64>();
        let mut y = vec![0.0; self.n()];
        self.stiffness.matvec(x, &mut y);
        let t: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        if t > 0.0 {
            p / t
        } else {
            0.0
        }
    }

    /// Relative residual `|(K+P)x - lam M x|_{M^-1} / (lam |x|_M)`.
    pub fn residual(&self, x: &[f64], lam: f64) -> f64 {
        let mut y = vec![0.0; self.n()];
        self.stiffness.matvec(x, &mut y);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.n() {
            let r = y[i] - lam * self.mass[i] * x[i];
            num += r * r / self.mass[i];
            den += self.mass[i] * x[i] * x[i];
        }
        (num.sqrt()) / (lam.abs().max(f64::MIN_POSITIVE) * den.sqrt())
    }
}

// the four edges bounding face (n, g): (axis, node, sign)
#[inline]
fn face_edges(n: usize, g: [usize; 3]) -> [(usize, [usize; 3], f64); 4] {
    let (b, c) = ((n + 1) % 3, (n + 2) % 3);
    let (eb, ec) = (unit(b), unit(c));
    let add = |p: [usize; 3], e: [usize; 3]| [p[0] + e[0], p[1] + e[1], p[2] + e[2]];
    [
        (b, g, 1.0),
        (c, add(g, eb), 1.0),
        (b, add(g, ec), -1.0),
        (c, g, -1.0),
    ]
}

struct NodePotentials {
    // potential index per node, usize::MAX for ground
    id: Vec<usize>,
    // incident (unknown, sign) lists for potentials with more than one node
    members: std::collections::HashMap<usize, Vec<(usize, f64)>>,
    count: usize,
}

/// Builds the operator for `dom` with grad-div weight `grad_scale`.
pub fn assemble(dom: &DiscretizedDomain, grad_scale: f64) -> Operator {
    let h = dom.h;
    let mut edge_unknown: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut edges = Vec::new();
    let mut mass = Vec::new();
    for a in 0..3 {
        edge_unknown[a] = vec![usize::MAX; dom.edge_len[a].len()];
        for (i, &l) in dom.edge_len[a].iter().enumerate() {
            if l > 0.0 {
                edge_unknown[a][i] = edges.len();
                edges.push(EdgeRef { axis: a, index: i });
                mass.push(l * h * h);
            }
        }
    }
    let pots = node_potentials(dom, &edge_unknown);
    let n = edges.len();
    let lin = DiscretizedDomain::lin;
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let e = edges[u];
            let s = dom.edge_shape(e.axis);
            let g = unravel(s, e.index);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(32);
            let le = dom.edge_len[e.axis][e.index];
            for n_ax in 0..3 {
                if n_ax == e.axis {
                    continue;
                }
                let fs = dom.face_shape(n_ax);
                // the edge is one of the two in-plane axes of the face; faces at g and g - e_other
                let other = 3 - n_ax - e.axis;
                for back in [false, true] {
                    let mut fg = g;
                    if back {
                        if fg[other] == 0 {
                            continue;
                        }
                        fg[other] -= 1;
                    }
                    if fg[0] >= fs[0] || fg[1] >= fs[1] || fg[2] >= fs[2] {
                        continue;
                    }
                    let area = dom.face_area[n_ax][lin(fs, fg[0], fg[1], fg[2])];
                    if area <= 0.0 {
                        continue;
                    }
                    let w = h / area;
                    let fe = face_edges(n_ax, fg);
                    let own = fe
                        .iter()
                        .find(|(ax, p, _)| *ax == e.axis && *p == g)
                        .map(|t| t.2)
                        .expect("edge belongs to face");
                    for (ax, p, sg) in fe {
                        let es = dom.edge_shape(ax);
                        let idx = lin(es, p[0], p[1], p[2]);
                        let v = edge_unknown[ax][idx];
                        if v == usize::MAX {
                            continue;
                        }
                        row.push((v, w * own * le * sg * dom.edge_len[ax][idx]));
                    }
                }
            }
            // grad-div: potentials at both ends
            let reg = grad_scale * h;
            let end = {
                let mut q = g;
                q[e.axis] += 1;
                q
            };
            let nid0 = lin(dom.nodes, g[0], g[1], g[2]);
            let nid1 = lin(dom.nodes, end[0], end[1], end[2]);
            let (p0, p1) = (pots.id[nid0], pots.id[nid1]);
            if p0 != p1 {
                for (p, node, sgn) in [(p0, g, -1.0), (p1, end, 1.0)] {
                    if p == usize::MAX {
                        continue;
                    }
                    match pots.members.get(&p) {
                        Some(list) => {
                            if list.len() <= MAX_POTENTIAL_DEGREE {
                                for &(v, s2) in list {
                                    row.push((v, reg * sgn * s2));
                                }
                            }
                        }
                        None => {
                            for (v, s2) in node_incidence(dom, &edge_unknown, node) {
                                row.push((v, reg * sgn * s2));
                            }
                        }
                    }
                }
            }
            row.sort_unstable_by_key(|t| t.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            merged
        })
        .collect();
    let stiffness = Csr::from_rows(n, rows);
    let grad_rows: Vec<Vec<(usize, f64)>> = edges
        .iter()
        .map(|e| {
            let s = dom.edge_shape(e.axis);
            let g = unravel(s, e.index);
            let mut q = g;
            q[e.axis] += 1;
            let p0 = pots.id[lin(dom.nodes, g[0], g[1], g[2])];
            let p1 = pots.id[lin(dom.nodes, q[0], q[1], q[2])];
            let mut r = Vec::new();
            if p0 != p1 {
                if p0 != usize::MAX {
                    r.push((p0, -1.0));
                }
                if p1 != usize::MAX {
                    r.push((p1, 1.0));
                }
                r.sort_unstable_by_key(|t| t.0);
            }
            r
        })
        .collect();
    Operator {
        stiffness,
        mass,
        grad: Csr::from_rows(pots.count, grad_rows),
        grad_scale,
        edge_unknown,
        edges,
        h,
    }
}

pub(crate) fn unravel(s: [usize; 3], idx: usize) -> [usize; 3] {
    let k = idx % s[2];
    let j = (idx / s[2]) % s[1];
    let i = idx / (s[1] * s[2]);
    [i, j, k]
}

// free edges touching a node with sign +1 when the node is the edge end
fn node_incidence(
    dom: &DiscretizedDomain,
    edge_unknown: &[Vec<usize>; 3],
    g: [usize; 3],
) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(6);
    for a in 0..3 {
        let s = dom.edge_shape(a);
        if g[a] < s[a] {
            let v = edge_unknown[a][DiscretizedDomain::lin(s, g[0], g[1], g[2])];
            if v != usize::MAX {
                out.push((v, -1.0));
            }
        }
        if g[a] > 0 {
            let mut q = g;
            q[a] -= 1;
            let v = edge_unknown[a][DiscretizedDomain::lin(s, q[0], q[1], q[2])];
            if v != usize::MAX {
                out.push((v, 1.0));
            }
        }
    }
    out
}

// potentials are the connected components of the metal-edge graph, except the one
// holding the outer box (ground)
fn node_potentials(dom: &DiscretizedDomain, edge_unknown: &[Vec<usize>; 3]) -> NodePotentials {
    let nn = dom.nodes[0] * dom.nodes[1] * dom.nodes[2];
    let mut parent: Vec<usize> = (0..nn).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let lin = DiscretizedDomain::lin;
    for a in 0..3 {
        let s = dom.edge_shape(a);
        for idx in 0..edge_unknown[a].len() {
            if edge_unknown[a][idx] != usize::MAX {
                continue;
            }
            let g = unravel(s, idx);
            let mut q = g;
            q[a] += 1;
            let (x, y) = (lin(dom.nodes, g[0], g[1], g[2]), lin(dom.nodes, q[0], q[1], q[2]));
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            if rx != ry {
                parent[rx.max(ry)] = rx.min(ry);
            }
        }
    }
    let ground = find(&mut parent, 0);
    let mut id = vec![usize::MAX; nn];
    let mut root_id = std::collections::HashMap::new();
    let mut size = std::collections::HashMap::new();
    let mut count = 0;
    for x in 0..nn {
        let r = find(&mut parent, x);
        if r == ground {
            continue;
        }
        let p = *root_id.entry(r).or_insert_with(|| {
            count += 1;
            count - 1
        });
        id[x] = p;
        *size.entry(p).or_insert(0usize) += 1;
    }
    let mut members: std::collections::HashMap<usize, Vec<(usize, f64)>> =
        std::collections::HashMap::new();
    for (&p, &sz) in &size {
        if sz > 1 {
            members.insert(p, Vec::new());
        }
    }
    if !members.is_empty() {
        for a in 0..3 {
            let s = dom.edge_shape(a);
            for idx in 0..edge_unknown[a].len() {
                let v = edge_unknown[a][idx];
                if v == usize::MAX {
                    continue;
                }
                let g = unravel(s, idx);
                let mut q = g;
                q[a] += 1;
                let p0 = id[lin(dom.nodes, g[0], g[1], g[2])];
                let p1 = id[lin(dom.nodes, q[0], q[1], q[2])];
                if p0 == p1 {
                    continue;
                }
                if let Some(l) = members.get_mut(&p0) {
                    l.push((v, -1.0));
                }
                if let Some(l) = members.get_mut(&p1) {
                    l.push((v, 1.0));
                }
            }
        }
    }
    NodePotentials { id, members, count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modesolver::grid::{build, BoxRegion, DomainSource, DEFAULT_UNKNOWN_BUDGET};

    fn small_box() -> DiscretizedDomain {
        build(
            DomainSource::Box(BoxRegion::new(3e-3, 2e-3, 4e-3)),
            0.5e-3,
            DEFAULT_UNKNOWN_BUDGET,
        )
        .unwrap()
    }

    #[test]
    fn stiffness_is_symmetric() {
        let op = assemble(&small_box(), 2.0);
        let k = &op.stiffness;
        let mut map = std::collections::HashMap::new();
        for r in 0..k.nrows {
            for p in k.indptr[r]..k.indptr[r + 1] {
                map.insert((r, k.indices[p]), k.data[p]);
            }
        }
        for (&(r, c), &v) in &map {
            let w = map.get(&(c, r)).copied().unwrap_or(0.0);
            assert!((v - w).abs() <= 1e-12 * v.abs().max(1.0), "{r} {c} {v} {w}");
        }
    }

    #[test]
    fn gradients_have_no_curl() {
        // x = G phi with G = diag(1/l) * incidence is annihilated by the curl part
        let dom = small_box();
        let op = assemble(&dom, 0.0);
        let np = op.grad.ncols;
        let phi: Vec<f64> = (0..np).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut x = vec![0.0; op.n()];
        for (u, e) in op.edges.iter().enumerate() {
            let mut s = 0.0;
            for p in op.grad.indptr[u]..op.grad.indptr[u + 1] {
                s += op.grad.data[p] * phi[op.grad.indices[p]];
            }
            x[u] = s / dom.edge_len[e.axis][e.index];
        }
        let mut y = vec![0.0; op.n()];
        op.stiffness.matvec(&x, &mut y);
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(ny < 1e-9 * nx / (dom.h * dom.h), "{ny} {nx}");
    }
}
