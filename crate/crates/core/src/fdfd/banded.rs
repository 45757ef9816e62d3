//! Direct band LU with partial pivoting for small systems.

use super::sparse::CsrMatrix;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// LU factors of a band matrix. Row `i` stores columns `i − kl ..= i + ku + kl`
/// to leave room for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    store: Vec<C64>,
    pivots: Vec<usize>,
}

impl BandLu {
    /// `None` if the matrix is numerically singular.
    pub fn factor(a: &CsrMatrix) -> Option<Self> {
        let n = a.n;
        let (kl, ku) = a.bandwidth();
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            width,
            store: vec![ZERO; n * width],
            pivots: vec![0; n],
        };
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                *lu.at(i, j) = x;
            }
        }
        let scale = a.vals.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let last_col = |k: usize| (k + ku + kl).min(n - 1);
        for k in 0..n {
            let bottom = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.get(k, k).norm();
            for i in k + 1..=bottom {
                let m = lu.get(i, k).norm();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if !(best > 1e-300 * scale.max(1e-300)) {
                return None;
            }
            lu.pivots[k] = p;
            if p != k {
                for j in k..=last_col(k) {
                    let t = lu.get(k, j);
                    *lu.at(k, j) = lu.get(p, j);
                    *lu.at(p, j) = t;
                }
            }
            let pivot = lu.get(k, k);
            for i in k + 1..=bottom {
                let f = lu.get(i, k) / pivot;
                *lu.at(i, k) = f;
                if f == ZERO {
                    continue;
                }
                for j in k + 1..=last_col(k) {
                    let u = lu.get(k, j);
                    *lu.at(i, j) -= f * u;
                }
            }
        }
        Some(lu)
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.width - 1 - self.kl);
        i * self.width + (j + self.kl - i)
    }

    fn at(&mut self, i: usize, j: usize) -> &mut C64 {
        let o = self.offset(i, j);
        &mut self.store[o]
    }

    fn get(&self, i: usize, j: usize) -> C64 {
        self.store[self.offset(i, j)]
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                x[i] -= self.get(i, k) * xk;
            }
        }
        let reach = self.width - 1 - self.kl;
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= self.get(k, j) * x[j];
            }
            x[k] = s / self.get(k, k);
        }
        x
    }
}
