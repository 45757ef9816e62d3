//! Compressed-row complex matrices, ILU(0), and preconditioned BiCGSTAB and
//! GMRES.

use rayon::prelude::*;

use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Square sparse matrix in compressed row layout with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from per-row entry lists; duplicates are summed, exact zeros
    /// are kept so the pattern stays predictable.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, C64)>>) -> Self {
        assert_eq!(rows.len(), n, "one entry list per row");
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                assert!(c < n, "column {c} out of range");
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[C64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(ZERO)
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, a)| a * x[j]).sum();
        });
    }

    pub fn mul(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `(lower, upper)` bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut up = 0;
        for i in 0..self.n {
            for &j in self.row(i).0 {
                if j < i {
                    lo = lo.max(i - j);
                } else {
                    up = up.max(j - i);
                }
            }
        }
        (lo, up)
    }

    /// Whether `a_ij` stored ⇔ `a_ji` stored.
    pub fn is_pattern_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.row(i)
                .0
                .iter()
                .all(|&j| self.row(j).0.binary_search(&i).is_ok())
        })
    }
}

pub(crate) fn norm(x: &[C64]) -> f64 {
    x.par_iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

// ⟨a, b⟩ = Σ conj(a) b
fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.par_iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    /// Fails when a pivot vanishes or a diagonal entry is missing.
    pub fn new(a: &CsrMatrix) -> Option<Self> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag = vec![0; n];
        for i in 0..n {
            let (c, _) = lu.row(i);
            diag[i] = lu.row_ptr[i] + c.binary_search(&i).ok()?;
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                pos[lu.cols[p]] = p;
            }
            for p in start..diag[i] {
                let k = lu.cols[p];
                let pivot = lu.vals[diag[k]];
                if pivot == ZERO {
                    return None;
                }
                let factor = lu.vals[p] / pivot;
                lu.vals[p] = factor;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let at = pos[lu.cols[q]];
                    if at != usize::MAX {
                        let v = lu.vals[q];
                        lu.vals[at] -= factor * v;
                    }
                }
            }
            for p in start..end {
                pos[lu.cols[p]] = usize::MAX;
            }
            if lu.vals[diag[i]] == ZERO || !lu.vals[diag[i]].is_finite() {
                return None;
            }
        }
        Some(Self { lu, diag })
    }

    /// `z = (LU)⁻¹ r`.
    pub fn apply(&self, r: &[C64], z: &mut [C64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for p in lu.row_ptr[i]..self.diag[i] {
                s -= lu.vals[p] * z[lu.cols[p]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[p] * z[lu.cols[p]];
            }
            z[i] = s / lu.vals[self.diag[i]];
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovResult {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// `‖b − Ax‖/‖b‖`, recomputed from scratch at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Right-preconditioned BiCGSTAB from a zero initial guess.
pub fn bicgstab(a: &CsrMatrix, b: &[C64], m: Option<&Ilu0>, tol: f64, max_iter: usize) -> KrylovResult {
    let n = a.n;
    let bnorm = norm(b);
    let mut x = vec![ZERO; n];
    if bnorm == 0.0 {
        return KrylovResult {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let precond = |v: &[C64], out: &mut [C64]| match m {
        Some(m) => m.apply(v, out),
        None => out.copy_from_slice(v),
    };
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![ZERO; n];
    let mut v = vec![ZERO; n];
    let mut p_hat = vec![ZERO; n];
    let mut s_hat = vec![ZERO; n];
    let mut t = vec![ZERO; n];
    let (mut rho, mut alpha, mut omega) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    let mut iterations = 0;
    let mut best = (f64::INFINITY, x.clone());
    while iterations < max_iter {
        iterations += 1;
        let mut rho_new = dotc(&r_hat, &r);
        if rho_new.norm() < 1e-300 || omega == ZERO {
            // breakdown: restart the shadow residual
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|z| *z = ZERO);
            v.iter_mut().for_each(|z| *z = ZERO);
            rho = C64::new(1.0, 0.0);
            alpha = C64::new(1.0, 0.0);
            omega = C64::new(1.0, 0.0);
            rho_new = dotc(&r_hat, &r);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(&r)
            .zip(&v)
            .for_each(|((pi, ri), vi)| *pi = ri + beta * (*pi - omega * vi));
        precond(&p, &mut p_hat);
        a.matvec(&p_hat, &mut v);
        let denom = dotc(&r_hat, &v);
        if denom.norm() < 1e-300 {
            omega = ZERO;
            continue;
        }
        alpha = rho / denom;
        // r becomes s in place
        r.par_iter_mut().zip(&v).for_each(|(ri, vi)| *ri -= alpha * vi);
        if norm(&r) / bnorm <= tol {
            x.par_iter_mut().zip(&p_hat).for_each(|(xi, pi)| *xi += alpha * pi);
            break;
        }
        precond(&r, &mut s_hat);
        a.matvec(&s_hat, &mut t);
        let tt = dotc(&t, &t).re;
        omega = if tt > 0.0 { dotc(&t, &r) / tt } else { ZERO };
        x.par_iter_mut()
            .zip(&p_hat)
            .zip(&s_hat)
            .for_each(|((xi, pi), si)| *xi += alpha * pi + omega * si);
        r.par_iter_mut().zip(&t).for_each(|(ri, ti)| *ri -= omega * ti);
        let rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            break;
        }
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= tol {
            break;
        }
    }
    let finish = |x: Vec<C64>| {
        let ax = a.mul(&x);
        let res: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        (norm(&res) / bnorm, x)
    };
    let (mut rel, mut x) = finish(x);
    if !(rel <= tol) && best.0.is_finite() {
        let (rb, xb) = finish(best.1);
        if rb < rel || !rel.is_finite() {
            rel = rb;
            x = xb;
        }
    }
    KrylovResult {
        x,
        iterations,
        relative_residual: rel,
        converged: rel <= tol,
    }
}

/// Right-preconditioned restarted GMRES(`restart`) from a zero initial guess.
pub fn gmres(
    a: &CsrMatrix,
    b: &[C64],
    m: Option<&Ilu0>,
    tol: f64,
    max_iter: usize,
    restart: usize,
) -> KrylovResult {
    let n = a.n;
    let bnorm = norm(b);
    let mut x = vec![ZERO; n];
    if bnorm == 0.0 {
        return KrylovResult {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let restart = restart.max(1);
    let precond = |v: &[C64], out: &mut [C64]| match m {
        Some(m) => m.apply(v, out),
        None => out.copy_from_slice(v),
    };
    let mut iterations = 0;
    let mut w = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    while iterations < max_iter {
        let ax = a.mul(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let mut rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|v| v / beta).collect()];
        // Hessenberg columns, already rotated
        let mut hess: Vec<Vec<C64>> = Vec::new();
        let mut rot: Vec<(C64, C64)> = Vec::new();
        let mut g = vec![C64::new(beta, 0.0)];
        for _ in 0..restart {
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            let j = basis.len() - 1;
            precond(&basis[j], &mut z);
            a.matvec(&z, &mut w);
            let mut col = Vec::with_capacity(j + 2);
            for v in &basis {
                let hij = dotc(v, &w);
                w.par_iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hij * vi);
                col.push(hij);
            }
            let hnext = norm(&w);
            col.push(C64::new(hnext, 0.0));
            for (k, (c, s)) in rot.iter().enumerate() {
                let (u, v) = (col[k], col[k + 1]);
                col[k] = c.conj() * u + s.conj() * v;
                col[k + 1] = -s * u + c * v;
            }
            let (u, v) = (col[j], col[j + 1]);
            let den = (u.norm_sqr() + v.norm_sqr()).sqrt();
            let (c, s) = if den == 0.0 {
                (C64::new(1.0, 0.0), ZERO)
            } else {
                (u / den, v / den)
            };
            col[j] = c.conj() * u + s.conj() * v;
            col[j + 1] = ZERO;
            rot.push((c, s));
            let gj = g[j];
            g[j] = c.conj() * gj;
            g.push(-s * gj);
            hess.push(col);
            rel = g[j + 1].norm() / bnorm;
            if rel <= tol || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        // back substitution for the Krylov coefficients
        let k = hess.len();
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                s -= hess[l][i] * yl;
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![ZERO; n];
        for (yi, v) in y.iter().zip(&basis) {
            update.par_iter_mut().zip(v).for_each(|(u, vi)| *u += yi * vi);
        }
        precond(&update, &mut z);
        x.par_iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
        if !rel.is_finite() {
            break;
        }
    }
    let ax = a.mul(&x);
    let res: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let rel = norm(&res) / bnorm;
    KrylovResult {
        x,
        iterations,
        relative_residual: rel,
        converged: rel <= tol,
    }
}
