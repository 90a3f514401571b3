//! Banded matrices and an LU factorization with partial pivoting.
//!
//! Storage is row-oriented: row `i` keeps columns `i - kl ..= i + ku + kl`,
//! leaving room for the fill produced by row interchanges. Multipliers of
//! the elimination stay in the physical row where they were computed, the
//! same convention as LAPACK `gbtrf`.

use nalgebra::ComplexField;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: ComplexField<RealField = f64> + Copy> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![T::zero(); n * width] }
    }

    pub fn identity(n: usize, kl: usize, ku: usize) -> Self {
        let mut m = Self::zeros(n, kl, ku);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            T::zero()
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let k = self.slot(i, j);
        self.data[k] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let k = self.slot(i, j);
        self.data[k] += value;
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = T::zero();
            for j in lo..=hi {
                acc += self.data[self.slot(i, j)] * x[j];
            }
            y[i] = acc;
        }
    }

    /// Entry-wise map into another scalar type with the same band layout.
    pub fn map<U: ComplexField<RealField = f64> + Copy>(&self, f: impl Fn(T) -> U) -> BandMatrix<U> {
        BandMatrix {
            n: self.n,
            kl: self.kl,
            ku: self.ku,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Transpose (not conjugated); swaps the bandwidths.
    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<T> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                d[(i, j)] = self.get(i, j);
            }
        }
        d
    }

    pub fn factor(self) -> Result<BandLu<T>> {
        BandLu::new(self)
    }
}

/// LU factors of a banded matrix.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    m: BandMatrix<T>,
    pivots: Vec<usize>,
}

impl<T: ComplexField<RealField = f64> + Copy> BandLu<T> {
    fn new(mut m: BandMatrix<T>) -> Result<Self> {
        let n = m.n;
        let (kl, ku) = (m.kl, m.ku);
        let mut pivots = vec![0; n];
        let scale = m.data.iter().fold(0.0f64, |acc, v| acc.max(v.modulus()));
        let tiny = scale * f64::EPSILON * n as f64;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = m.data[m.slot(k, k)].modulus();
            for i in k + 1..=last_row {
                let a = m.data[m.slot(i, k)].modulus();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(Error::Singular(format!("zero pivot at column {k} of {n}")));
            }
            pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (m.slot(k, j), m.slot(p, j));
                    m.data.swap(a, b);
                }
            }
            let pivot = m.data[m.slot(k, k)];
            for i in k + 1..=last_row {
                let s = m.slot(i, k);
                let factor = m.data[s] / pivot;
                m.data[s] = factor;
                if factor == T::zero() {
                    continue;
                }
                for j in k + 1..=last_col {
                    let src = m.data[m.slot(k, j)];
                    let dst = m.slot(i, j);
                    m.data[dst] -= factor * src;
                }
            }
        }
        Ok(Self { m, pivots })
    }

    pub fn dim(&self) -> usize {
        self.m.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.m.n;
        let (kl, ku) = (self.m.kl, self.m.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == T::zero() {
                continue;
            }
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.m.data[self.m.slot(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.m.data[self.m.slot(k, j)] * b[j];
            }
            b[k] = acc / self.m.data[self.m.slot(k, k)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                m.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        m
    }

    #[test]
    fn solve_matches_dense_real() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (7, 2, 1, 2), (40, 3, 5, 3), (200, 8, 8, 4)] {
            let a = random_band(n, kl, ku, seed);
            let dense = a.to_dense();
            let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut x = rhs.clone();
            a.clone().factor().unwrap().solve_in_place(&mut x);
            let r = &dense * DVector::from_vec(x) - DVector::from_vec(rhs);
            assert!(r.amax() < 1e-9, "n={n} residual {}", r.amax());
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // Permutation-like matrix that needs row interchanges.
        let mut a = BandMatrix::<f64>::zeros(4, 1, 1);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(2, 3, 2.0);
        a.set(3, 2, 3.0);
        let mut b = vec![1.0, 2.0, 3.0, 4.0];
        a.factor().unwrap().solve_in_place(&mut b);
        assert_eq!(b, vec![2.0, 1.0, 4.0 / 3.0, 1.5]);
    }

    #[test]
    fn singular_matrix_reported() {
        let a = BandMatrix::<f64>::zeros(3, 1, 1);
        assert!(matches!(a.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn complex_solve_and_transpose() {
        let n = 60;
        let a = random_band(n, 4, 2, 9).map(|v| Complex64::new(v, 0.3 * v * v));
        let dense: DMatrix<Complex64> = a.to_dense();
        let t = a.transpose();
        assert_eq!(t.bandwidths(), (2, 4));
        assert!((t.to_dense() - dense.transpose()).camax() < 1e-15);
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut x = rhs.clone();
        a.factor().unwrap().solve_in_place(&mut x);
        let r = &dense * DVector::from_vec(x) - DVector::from_vec(rhs);
        assert!(r.camax() < 1e-8);
    }
}
