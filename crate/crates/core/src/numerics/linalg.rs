//! Banded LU with partial pivoting and a constant-coefficient tridiagonal solver.

use crate::error::{Error, Result};

/// Square banded matrix in LAPACK-style band storage with room for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // row-major over (row, offset); column j of row i sits at i * width + (j + kl - i)
    // with width = 2 kl + ku + 1 after fill
    data: Vec<f64>,
    piv: Vec<usize>,
    factored: bool,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, data: vec![0.0; n * width], piv: vec![0; n], factored: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.kl - i)
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
        self.factored = false;
    }

    /// Add `v` to entry `(i, j)`. Panics if the entry lies outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// `y = A x` for the unfactored matrix.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorisation with row partial pivoting.
    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let kuf = self.kl + self.ku;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularMatrix(k));
            }
            self.piv[k] = p;
            let last_col = (k + kuf).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solve `A x = b` in place after [`BandMatrix::factor`].
    pub fn solve(&self, b: &mut [f64]) {
        assert!(self.factored, "factor before solve");
        let n = self.n;
        let kl = self.kl;
        let kuf = self.kl + self.ku;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + kuf).min(n - 1) {
                s -= self.data[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.data[self.idx(k, k)];
        }
    }
}

/// Solve the bordered system `[[A, c], [d^T, e]] [x; s] = [r; q]` given a factored `A`.
pub fn solve_bordered(a: &BandMatrix, c: &[f64], d: &[f64], e: f64, r: &[f64], q: f64) -> Result<(Vec<f64>, f64)> {
    let mut y = r.to_vec();
    a.solve(&mut y);
    let mut w = c.to_vec();
    a.solve(&mut w);
    let dy: f64 = d.iter().zip(&y).map(|(a, b)| a * b).sum();
    let dw: f64 = d.iter().zip(&w).map(|(a, b)| a * b).sum();
    let schur = e - dw;
    if schur == 0.0 || !schur.is_finite() {
        return Err(Error::SingularMatrix(a.dim()));
    }
    let s = (q - dy) / schur;
    for (yi, wi) in y.iter_mut().zip(&w) {
        *yi -= s * wi;
    }
    Ok((y, s))
}

/// Pre-factored tridiagonal matrix (Thomas algorithm without pivoting).
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    cprime: Vec<f64>,
    denom: Vec<f64>,
}

impl Tridiagonal {
    /// `lower[i]` multiplies `x[i-1]`, `diag[i]` multiplies `x[i]`, `upper[i]` multiplies `x[i+1]`.
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut cprime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let l = if i > 0 { lower[i] } else { 0.0 };
            let d = diag[i] - l * prev_c;
            if d == 0.0 {
                return Err(Error::SingularMatrix(i));
            }
            denom[i] = d;
            cprime[i] = if i + 1 < n { upper[i] / d } else { 0.0 };
            prev_c = cprime[i];
        }
        Ok(Tridiagonal { lower: lower.to_vec(), cprime, denom })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        let mut prev = 0.0;
        for i in 0..n {
            let l = if i > 0 { self.lower[i] } else { 0.0 };
            b[i] = (b[i] - l * prev) / self.denom[i];
            prev = b[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            b[i] -= self.cprime[i] * b[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_solve_needs_pivoting() {
        // first pivot is zero, forcing a row swap
        let n = 6;
        let mut a = BandMatrix::new(n, 2, 1);
        let dense = [
            [0.0, 2.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 3.0, 0.0, 0.0, 0.0],
            [4.0, 1.0, 5.0, 1.0, 0.0, 0.0],
            [0.0, 2.0, 1.0, 6.0, 2.0, 0.0],
            [0.0, 0.0, 1.0, 1.0, 7.0, 1.0],
            [0.0, 0.0, 0.0, 3.0, 1.0, 8.0],
        ];
        for i in 0..n {
            for j in 0..n {
                if dense[i][j] != 0.0 {
                    a.add(i, j, dense[i][j]);
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|k| 1.0 + k as f64).collect();
        let mut b = a.mul_vec(&x);
        a.factor().unwrap();
        a.solve(&mut b);
        for k in 0..n {
            assert!((b[k] - x[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn bordered_system() {
        let n = 4;
        let mut a = BandMatrix::new(n, 1, 1);
        for i in 0..n {
            a.add(i, i, 4.0);
            if i > 0 {
                a.add(i, i - 1, 1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, 1.0);
            }
        }
        let c = [1.0, 0.0, 0.0, 2.0];
        let d = [0.0, 1.0, 1.0, 0.0];
        let e = 3.0;
        let x = [1.0, -1.0, 2.0, 0.5];
        let s = 0.7;
        let mut r = a.mul_vec(&x);
        for i in 0..n {
            r[i] += c[i] * s;
        }
        let q = d.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + e * s;
        a.factor().unwrap();
        let (xs, ss) = solve_bordered(&a, &c, &d, e, &r, q).unwrap();
        assert!((ss - s).abs() < 1e-12);
        for i in 0..n {
            assert!((xs[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn thomas_solve() {
        let n = 5;
        let lower = vec![-1.0; n];
        let diag = vec![3.0; n];
        let upper = vec![-1.0; n];
        let t = Tridiagonal::new(&lower, &diag, &upper).unwrap();
        let x: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = 3.0 * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                s
            })
            .collect();
        t.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
    }
}
