//! Dense and banded complex linear algebra used by the shooting solver and
//! the main equation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

/// A complex number with a separate binary exponent, for determinants that
/// would overflow `f64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub mantissa: C64,
    pub exp2: i64,
}

impl Scaled {
    pub fn one() -> Self {
        Self { mantissa: C64::new(1.0, 0.0), exp2: 0 }
    }

    fn normalize(mut self) -> Self {
        let a = self.mantissa.norm();
        if a == 0.0 || !a.is_finite() {
            return self;
        }
        let e = a.log2().floor() as i64;
        self.mantissa /= 2f64.powi(e as i32);
        self.exp2 += e;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.norm() == 0.0
    }

    /// `self / other` as an ordinary complex number.
    pub fn ratio(self, other: Scaled) -> C64 {
        let d = (self.exp2 - other.exp2).clamp(-2000, 2000) as i32;
        self.mantissa / other.mantissa * 2f64.powi(d)
    }

    pub fn to_c64(self) -> C64 {
        self.mantissa * 2f64.powi(self.exp2.clamp(-2000, 2000) as i32)
    }

    pub fn arg(&self) -> f64 {
        self.mantissa.arg()
    }

    /// Natural logarithm of the modulus.
    pub fn ln_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.exp2 as f64 * std::f64::consts::LN_2
    }
}

impl std::ops::Mul<C64> for Scaled {
    type Output = Self;

    fn mul(self, z: C64) -> Self {
        Self { mantissa: self.mantissa * z, exp2: self.exp2 }.normalize()
    }
}

/// Square band matrix with `kl` sub- and `ku` superdiagonals. Each row keeps
/// room for the fill-in created by partial pivoting.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    size: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn new(size: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { size, kl, ku, width, data: vec![C64::new(0.0, 0.0); size * width] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.kl >= row && col <= row + self.kl + self.ku);
        row * self.width + col + self.kl - row
    }

    pub fn set(&mut self, row: usize, col: usize, v: C64) {
        let i = self.idx(row, col);
        self.data[i] = v;
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        if col + self.kl < row || col > row + self.kl + self.ku {
            return C64::new(0.0, 0.0);
        }
        self.data[self.idx(row, col)]
    }

    /// LU factorization with partial pivoting. Never fails; a zero pivot is
    /// reported by `BandLu::det` and rejected by `BandLu::solve`.
    pub fn factor(mut self) -> BandLu {
        let n = self.size;
        let (kl, ku) = (self.kl, self.ku);
        let mut perm = vec![0usize; n];
        let mut det = Scaled::one();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0_f64;
        for j in 0..n {
            let last_row = (j + kl).min(n - 1);
            let last_col = (j + kl + ku).min(n - 1);
            let mut p = j;
            let mut best = self.get(j, j).norm();
            for r in j + 1..=last_row {
                let v = self.get(r, j).norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            perm[j] = p;
            if p != j {
                for c in j..=last_col {
                    let (a, b) = (self.idx(j, c), self.idx(p, c));
                    self.data.swap(a, b);
                }
                det = det * C64::new(-1.0, 0.0);
            }
            let piv = self.get(j, j);
            det = det * piv;
            min_pivot = min_pivot.min(piv.norm());
            max_pivot = max_pivot.max(piv.norm());
            if piv.norm() == 0.0 {
                continue;
            }
            for r in j + 1..=last_row {
                let ir = self.idx(r, j);
                let l = self.data[ir] / piv;
                if l.norm() == 0.0 {
                    continue;
                }
                self.data[ir] = l;
                for c in j + 1..=last_col {
                    let a = self.get(j, c);
                    let ic = self.idx(r, c);
                    self.data[ic] -= l * a;
                }
            }
        }
        BandLu { m: self, perm, det, min_pivot, max_pivot }
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    perm: Vec<usize>,
    det: Scaled,
    min_pivot: f64,
    max_pivot: f64,
}

impl BandLu {
    pub fn det(&self) -> Scaled {
        self.det
    }

    /// Ratio of the smallest to the largest pivot modulus.
    pub fn pivot_ratio(&self) -> f64 {
        if self.max_pivot == 0.0 {
            0.0
        } else {
            self.min_pivot / self.max_pivot
        }
    }

    pub fn solve(&self, rhs: &mut [C64]) -> Result<()> {
        let n = self.m.size;
        let (kl, ku) = (self.m.kl, self.m.ku);
        if self.min_pivot == 0.0 {
            return Err(Error::Singular { pivot: 0.0 });
        }
        for j in 0..n {
            let p = self.perm[j];
            if p != j {
                rhs.swap(j, p);
            }
            let bj = rhs[j];
            for r in j + 1..=(j + kl).min(n - 1) {
                let l = self.m.get(r, j);
                rhs[r] -= l * bj;
            }
        }
        for j in (0..n).rev() {
            let mut s = rhs[j];
            for c in j + 1..=(j + kl + ku).min(n - 1) {
                s -= self.m.get(j, c) * rhs[c];
            }
            rhs[j] = s / self.m.get(j, j);
        }
        Ok(())
    }
}

/// Row-major `a (n x m) * b (m x p)`.
pub fn matmul(a: &[C64], b: &[C64], n: usize, m: usize, p: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * p];
    for i in 0..n {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..p {
                out[i * p + j] += aik * b[k * p + j];
            }
        }
    }
    out
}

pub fn to_dmatrix(a: &[C64], rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_row_slice(rows, cols, a)
}

/// Solves the dense square system `a x = b` (row-major `a`).
pub fn dense_solve(a: &[C64], b: &[C64], n: usize) -> Result<Vec<C64>> {
    let m = to_dmatrix(a, n, n);
    let lu = m.lu();
    let x = lu.solve(&nalgebra::DVector::from_column_slice(b)).ok_or(Error::Singular { pivot: 0.0 })?;
    Ok(x.iter().copied().collect())
}

/// Inverse of a dense square matrix (row-major in and out).
pub fn dense_inverse(a: &[C64], n: usize) -> Result<Vec<C64>> {
    let inv = to_dmatrix(a, n, n).try_inverse().ok_or(Error::Singular { pivot: 0.0 })?;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(inv[(i, j)]);
        }
    }
    Ok(out)
}

pub fn dense_det(a: &[C64], n: usize) -> C64 {
    to_dmatrix(a, n, n).determinant()
}

/// Largest and smallest singular values.
pub fn singular_extremes(m: &DMatrix<C64>) -> (f64, f64) {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (max, min)
}
