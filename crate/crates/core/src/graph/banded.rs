//! Symmetric banded storage and its Cholesky factor.
//!
//! Variables are eliminated in index order. Chain-structured graphs give a
//! bandwidth of 5 (3×3 blocks between neighbours), so factorization and
//! triangular solves are linear in the state dimension.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{LeoError, Result};

/// Lower triangle of a symmetric band matrix; row `i` stores columns
/// `i - bw ..= i`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)` of the symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Adds `blk` at rows `r0..r0+3`, cols `c0..c0+3` of the symmetric
    /// matrix (and implicitly its transpose). Diagonal blocks must be symmetric.
    pub fn add_block(&mut self, r0: usize, c0: usize, blk: &Matrix3<f64>) {
        for p in 0..3 {
            for q in 0..3 {
                if r0 == c0 && q > p {
                    continue;
                }
                self.add(r0 + p, c0 + q, blk[(p, q)]);
            }
        }
    }

    pub fn add_diagonal(&mut self, scale_by_diag: f64, floor: f64) {
        for i in 0..self.n {
            let k = self.idx(i, i);
            self.data[k] += scale_by_diag * self.data[k].max(floor);
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Banded Cholesky `M = L Lᵀ`. Fails with a gauge error when a pivot
    /// collapses relative to its original diagonal entry.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = self.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = l.data[l.idx(i, j)];
                for k in klo..j {
                    s -= l.data[l.idx(i, k)] * l.data[l.idx(j, k)];
                }
                if i == j {
                    let orig = self.data[self.idx(i, i)];
                    if !(s > 1e-12 * orig.abs()) || !s.is_finite() || orig <= 0.0 {
                        return Err(LeoError::Gauge { column: i });
                    }
                    let k = l.idx(i, i);
                    l.data[k] = s.sqrt();
                } else {
                    let d = l.data[l.idx(j, j)];
                    let k = l.idx(i, j);
                    l.data[k] = s / d;
                }
            }
        }
        Ok(BandCholesky { l })
    }
}

/// Lower band factor `L`; the square-root information matrix is `R = Lᵀ`.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.l.data[self.l.idx(i, j)]
    }

    /// Solves `L y = v`.
    pub fn solve_lower(&self, v: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        for i in 0..n {
            let mut s = v[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * v[k];
            }
            v[i] = s / self.at(i, i);
        }
    }

    /// Solves `R x = Lᵀ x = v`.
    pub fn solve_upper(&self, v: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        for i in (0..n).rev() {
            let mut s = v[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= self.at(k, i) * v[k];
            }
            v[i] = s / self.at(i, i);
        }
    }

    /// Solves `L Lᵀ x = v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut x = v.as_slice().to_vec();
        self.solve_lower(&mut x);
        self.solve_upper(&mut x);
        DVector::from_vec(x)
    }

    /// Upper-triangular `R` as a dense matrix.
    pub fn sqrt_info_dense(&self) -> DMatrix<f64> {
        let n = self.l.n;
        DMatrix::from_fn(n, n, |i, j| {
            if j >= i && j - i <= self.l.bw {
                self.at(j, i)
            } else {
                0.0
            }
        })
    }

    /// Dense `(L Lᵀ)⁻¹`. Quadratic memory; meant for small graphs and checks.
    pub fn inverse_dense(&self) -> DMatrix<f64> {
        let n = self.l.n;
        let mut out = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = DVector::zeros(n);
            e[c] = 1.0;
            out.set_column(c, &self.solve(&e));
        }
        out
    }

    /// Covariance block for variable `var` without forming the full inverse.
    pub fn marginal_block(&self, var: usize) -> Matrix3<f64> {
        let n = self.l.n;
        let mut out = Matrix3::zeros();
        for c in 0..3 {
            let mut e = DVector::zeros(n);
            e[3 * var + c] = 1.0;
            let x = self.solve(&e);
            for r in 0..3 {
                out[(r, c)] = x[3 * var + r];
            }
        }
        out
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, bw: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                m.add(i, j, rng.random_range(-1.0..1.0));
            }
            m.add(i, i, 2.0 * bw as f64 + 1.0 + rng.random_range(0.0..1.0));
        }
        m
    }

    #[test]
    fn factor_matches_dense() {
        let m = random_band(17, 5, 1);
        let dense = m.to_dense();
        let chol = m.cholesky().unwrap();
        let r = chol.sqrt_info_dense();
        assert!((r.transpose() * &r - &dense).amax() < 1e-12);
        let v = DVector::from_fn(17, |i, _| (i as f64).sin());
        let x = chol.solve(&v);
        assert!((&dense * &x - &v).amax() < 1e-12);
        assert!((m.mul_vec(&x) - &v).amax() < 1e-12);
        let inv = chol.inverse_dense();
        assert!((&inv * &dense - DMatrix::identity(17, 17)).amax() < 1e-12);
        let ld = dense.clone().cholesky().unwrap().l().diagonal().map(f64::ln).sum() * 2.0;
        assert!((chol.log_det() - ld).abs() < 1e-12);
        let blk = chol.marginal_block(2);
        assert!((blk - inv.fixed_view::<3, 3>(6, 6)).amax() < 1e-14);
    }

    #[test]
    fn upper_solve_inverts_r() {
        let m = random_band(12, 2, 4);
        let chol = m.cholesky().unwrap();
        let r = chol.sqrt_info_dense();
        let v: Vec<f64> = (0..12).map(|i| i as f64 - 3.0).collect();
        let mut x = v.clone();
        chol.solve_upper(&mut x);
        let back = &r * DVector::from_vec(x);
        assert!((back - DVector::from_vec(v)).amax() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_gauge_error() {
        let mut m = BandMatrix::zeros(3, 2);
        m.add_block(0, 0, &Matrix3::new(1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0));
        assert!(matches!(m.cholesky(), Err(LeoError::Gauge { column: 1 })));
        let z = BandMatrix::zeros(6, 5);
        assert!(matches!(z.cholesky(), Err(LeoError::Gauge { column: 0 })));
    }
}
