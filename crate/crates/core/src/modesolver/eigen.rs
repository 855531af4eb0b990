//! Shift-invert thick-restart Lanczos for `(K+P) x = lam M x`.
//!
//! `K+P - sigma M` is factored once by sparse Cholesky, so `sigma` must lie below the
//! spectrum; the iteration then runs on `M^1/2 (K+P - sigma M)^-1 M^1/2` whose largest
//! eigenvalues belong to the smallest `lam`.

use super::operator::Operator;
use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::{MatMut, Side};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Relative residual target on the transformed operator.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov basis size; grows with the number of wanted pairs when smaller.
    pub basis: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_restarts: 60,
            basis: 48,
            seed: 0x5eed,
        }
    }
}

/// Factored `K+P - sigma M`.
pub struct ShiftInvert {
    llt: Llt<usize, f64>,
    pub sigma: f64,
    sqrt_m: Vec<f64>,
}

/// Symbolic Cholesky analysis of the operator pattern, reusable across shifts.
pub struct Analysis {
    symbolic: SymbolicLlt<usize>,
    pattern: SymbolicSparseColMat<usize>,
    diag_pos: Vec<usize>,
}

pub fn analyze(op: &Operator) -> Result<Analysis> {
    let k = &op.stiffness;
    let n = k.nrows;
    // symmetric matrix: CSR arrays double as CSC
    let pattern = SymbolicSparseColMat::new_checked(n, n, k.indptr.clone(), None, k.indices.clone());
    let symbolic = SymbolicLlt::try_new(pattern.as_ref(), Side::Lower)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let mut diag_pos = vec![usize::MAX; n];
    for r in 0..n {
        for p in k.indptr[r]..k.indptr[r + 1] {
            if k.indices[p] == r {
                diag_pos[r] = p;
            }
        }
        if diag_pos[r] == usize::MAX {
            return Err(Error::Factorization(format!("row {r} has no diagonal entry")));
        }
    }
    Ok(Analysis {
        symbolic,
        pattern,
        diag_pos,
    })
}

impl ShiftInvert {
    pub fn new(op: &Operator, an: &Analysis, sigma: f64) -> Result<Self> {
        let mut vals = op.stiffness.data.clone();
        for (r, &p) in an.diag_pos.iter().enumerate() {
            vals[p] -= sigma * op.mass[r];
        }
        let mat = SparseColMat::new(an.pattern.clone(), vals);
        let llt = Llt::try_new_with_symbolic(an.symbolic.clone(), mat.as_ref(), Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            llt,
            sigma,
            sqrt_m: op.mass.iter().map(|m| m.sqrt()).collect(),
        })
    }

    /// `X <- (K+P - sigma M)^-1 X` for column-major `X` with `cols` columns.
    pub fn solve(&self, x: &mut [f64], cols: usize) {
        let n = self.sqrt_m.len();
        let m = MatMut::from_column_major_slice_mut(x, n, cols);
        self.llt.solve_in_place(m);
    }

    // y <- M^1/2 S^-1 M^1/2 y
    fn apply(&self, y: &mut [f64]) {
        for (v, s) in y.iter_mut().zip(&self.sqrt_m) {
            *v *= s;
        }
        self.solve(y, 1);
        for (v, s) in y.iter_mut().zip(&self.sqrt_m) {
            *v *= s;
        }
    }
}

/// Eigenpair of the pencil with `lam = k^2` and `x` normalized to `x^T M x = 1`.
#[derive(Debug, Clone)]
pub struct Pair {
    pub lam: f64,
    pub x: Vec<f64>,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>], coef: &mut [f64]) {
    for _ in 0..2 {
        for (i, q) in basis.iter().enumerate() {
            let c = dot(q, v);
            coef[i] += c;
            for (a, b) in v.iter_mut().zip(q) {
                *a -= c * b;
            }
        }
    }
}

/// Computes the `nev` smallest eigenpairs above `si.sigma`.
pub fn lowest(op: &Operator, si: &ShiftInvert, nev: usize, opts: &LanczosOptions) -> Result<Vec<Pair>> {
    let n = op.n();
    let nev = nev.min(n);
    let mmax = opts.basis.max(2 * nev + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_unit = |basis: &[Vec<f64>]| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut c = vec![0.0; basis.len()];
        orthogonalize(&mut v, basis, &mut c);
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= nv);
        v
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(mmax + 1);
    let mut hmat = DMatrix::<f64>::zeros(mmax, mmax);
    let mut next = random_unit(&basis);
    let mut last_res = vec![f64::INFINITY; nev];
    let mut beta_last = 0.0;
    for restart in 0..=opts.max_restarts {
        while basis.len() < mmax {
            let j = basis.len();
            let mut w = next.clone();
            basis.push(next);
            si.apply(&mut w);
            let mut coef = vec![0.0; j + 1];
            orthogonalize(&mut w, &basis, &mut coef);
            for i in 0..=j {
                hmat[(i, j)] = coef[i];
                hmat[(j, i)] = coef[i];
            }
            let beta = dot(&w, &w).sqrt();
            let scale = coef.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            next = if beta > 1e-13 * scale.max(f64::MIN_POSITIVE) {
                w.iter().map(|a| a / beta).collect()
            } else {
                random_unit(&basis)
            };
            beta_last = beta;
        }
        let beta = beta_last;
        let eig = SymmetricEigen::new(hmat.clone());
        let mut order: Vec<usize> = (0..mmax).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta_max = eig.eigenvalues[order[0]].abs();
        let res: Vec<f64> = order[..nev]
            .iter()
            .map(|&i| beta * eig.eigenvectors[(mmax - 1, i)].abs() / theta_max)
            .collect();
        let done = res.iter().all(|&r| r <= opts.tol);
        let keep = if done {
            nev
        } else {
            (nev + (mmax - nev) / 2).min(mmax - 1)
        };
        let ritz: Vec<Vec<f64>> = order[..keep]
            .iter()
            .map(|&i| {
                let mut y = vec![0.0; n];
                for (r, q) in basis.iter().enumerate() {
                    let c = eig.eigenvectors[(r, i)];
                    if c != 0.0 {
                        for (a, b) in y.iter_mut().zip(q) {
                            *a += c * b;
                        }
                    }
                }
                y
            })
            .collect();
        if done {
            let pairs = order[..nev]
                .iter()
                .zip(ritz)
                .map(|(&i, y)| {
                    let x: Vec<f64> = y.iter().zip(&si.sqrt_m).map(|(a, s)| a / s).collect();
                    Pair {
                        lam: si.sigma + 1.0 / eig.eigenvalues[i],
                        x,
                        residual: 0.0,
                    }
                })
                .collect();
            return polish(op, si, pairs);
        }
        last_res = res;
        if restart == opts.max_restarts {
            break;
        }
        basis = ritz;
        hmat.fill(0.0);
        for (r, &i) in order[..keep].iter().enumerate() {
            hmat[(r, r)] = eig.eigenvalues[i];
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_restarts,
        residuals: last_res,
    })
}

/// One block inverse iteration followed by Rayleigh-Ritz, then true residuals.
fn polish(op: &Operator, si: &ShiftInvert, pairs: Vec<Pair>) -> Result<Vec<Pair>> {
    let n = op.n();
    let k = pairs.len();
    if k == 0 {
        return Ok(pairs);
    }
    let mut block = vec![0.0; n * k];
    for (c, p) in pairs.iter().enumerate() {
        for i in 0..n {
            block[c * n + i] = op.mass[i] * p.x[i];
        }
    }
    si.solve(&mut block, k);
    let cols: Vec<&[f64]> = block.chunks(n).collect();
    let mut kx = vec![vec![0.0; n]; k];
    for c in 0..k {
        op.stiffness.matvec(cols[c], &mut kx[c]);
    }
    let a = DMatrix::from_fn(k, k, |i, j| dot(cols[i], &kx[j]));
    let b = DMatrix::from_fn(k, k, |i, j| {
        cols[i].iter().zip(cols[j]).zip(&op.mass).map(|((x, y), m)| x * y * m).sum()
    });
    let a = (&a + a.transpose()) * 0.5;
    let b = (&b + b.transpose()) * 0.5;
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("Ritz basis lost rank".into()))?;
    let linv = chol.l().try_inverse().expect("triangular factor invertible");
    let c = &linv * &a * linv.transpose();
    let eig = SymmetricEigen::new((&c + c.transpose()) * 0.5);
    let coef = linv.transpose() * &eig.eigenvectors;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let out = order
        .into_iter()
        .map(|j| {
            let mut x = vec![0.0; n];
            for (i, col) in cols.iter().enumerate() {
                let w = coef[(i, j)];
                for (a, b) in x.iter_mut().zip(col.iter()) {
                    *a += w * b;
                }
            }
            let nm: f64 = x.iter().zip(&op.mass).map(|(v, m)| v * v * m).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nm);
            let lam = eig.eigenvalues[j];
            let residual = op.residual(&x, lam);
            Pair { lam, x, residual }
        })
        .collect();
    Ok(out)
}
