//! Associated matrices `F(x)`: lower part stored explicitly, ones on the
//! superdiagonal, zeros above it.

use std::fmt::Write as _;

use crate::coefficients::{make_sigma, CoefficientSet, SigmaSet};
use crate::error::{Error, Result};
use crate::poly::Function1D;
use crate::C64;

const CHECK_SAMPLES: usize = 64;
const SELFADJOINT_RTOL: f64 = 1e-10;

/// An `n x n` matrix function of the class with unit superdiagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociatedMatrix {
    n: usize,
    /// Row-major lower triangle: entry `(k, j)` with `j <= k` (1-based) at `k(k-1)/2 + j - 1`.
    lower: Vec<Function1D>,
}

fn tri(k: usize, j: usize) -> usize {
    k * (k - 1) / 2 + j - 1
}

impl AssociatedMatrix {
    /// `F^0`: the shift matrix.
    pub fn zero(n: usize) -> Self {
        Self { n, lower: vec![Function1D::zero(); n * (n + 1) / 2] }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Entry `f_{k,j}` for `j <= k` (1-based).
    pub fn entry(&self, k: usize, j: usize) -> &Function1D {
        assert!(j >= 1 && j <= k && k <= self.n);
        &self.lower[tri(k, j)]
    }

    pub fn set_entry(&mut self, k: usize, j: usize, f: Function1D) {
        assert!(j >= 1 && j <= k && k <= self.n);
        self.lower[tri(k, j)] = f;
    }

    /// Nonzero lower entries as `(k, j, f)`, 1-based.
    pub fn nonzero_entries(&self) -> Vec<(usize, usize, &Function1D)> {
        let mut out = Vec::new();
        for k in 1..=self.n {
            for j in 1..=k {
                let f = self.entry(k, j);
                if f.pieces().iter().flatten().any(|c| c.norm() != 0.0) {
                    out.push((k, j, f));
                }
            }
        }
        out
    }

    /// Full matrix value at `x`, row-major.
    pub fn eval(&self, x: f64) -> Vec<C64> {
        let n = self.n;
        let mut m = vec![C64::new(0.0, 0.0); n * n];
        for k in 1..=n {
            for j in 1..=k {
                m[(k - 1) * n + j - 1] = self.entry(k, j).eval(x);
            }
            if k < n {
                m[(k - 1) * n + k] = C64::new(1.0, 0.0);
            }
        }
        m
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.lower.iter().fold(vec![0.0, 1.0], |acc, f| crate::poly::union_breaks(&acc, f.breaks()))
    }

    pub fn from_coefficients(coeffs: &CoefficientSet) -> Result<Self> {
        associated_matrix(&make_sigma(coeffs))
    }

    pub fn star(&self) -> Self {
        star_matrix(self)
    }

    /// Text dump, one line per stored lower entry: `k j <breaks> | <piece> | ...`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for k in 1..=self.n {
            for j in 1..=k {
                let f = self.entry(k, j);
                let _ = write!(s, "{k} {j}");
                for b in f.breaks() {
                    let _ = write!(s, " {}", crate::io::fmt_f64(*b));
                }
                for p in f.pieces() {
                    s.push_str(" |");
                    for c in p {
                        let _ = write!(s, " {} {}", crate::io::fmt_f64(c.re), crate::io::fmt_f64(c.im));
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Regularization of the differential expression into an associated matrix.
pub fn associated_matrix(sigma: &SigmaSet) -> Result<AssociatedMatrix> {
    let n = sigma.n;
    if n < 2 {
        return Err(Error::UnsupportedOrder(n));
    }
    if sigma.sigma.len() != n - 1 {
        return Err(Error::Representation(format!("expected {} sigma functions", n - 1)));
    }
    let mut f = AssociatedMatrix::zero(n);
    if n == 2 {
        let s = -&sigma.sigma[0];
        f.set_entry(1, 1, -&s);
        f.set_entry(2, 1, -&(&s * &s));
        f.set_entry(2, 2, s);
        return Ok(f);
    }
    let p = n / 2;
    let size = n - p;
    let sg = &sigma.sigma;
    let mut q: Vec<Vec<Option<Function1D>>> = vec![vec![None; size]; size];
    q[0][1] = Some(&sg[0] + &sg[1]);
    q[1][0] = Some(&sg[0] - &sg[1]);
    for k in 1..p {
        q[k][k] = Some(sg[2 * k].clone());
    }
    for k in 1..=(n - p).saturating_sub(2) {
        q[k][k + 1] = Some(sg[2 * k + 1].clone());
        q[k + 1][k] = Some(-&sg[2 * k + 1]);
    }
    for k in p + 1..=n {
        let sign = if (k + n + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
        for j in 1..=n - p {
            if let Some(e) = &q[j - 1][n - k] {
                f.set_entry(k, j, e.scale(C64::new(sign, 0.0)));
            }
        }
    }
    Ok(f)
}

/// `f*_{k,j} = (-1)^{k+j+1} f_{n-j+1, n-k+1}`.
pub fn star_matrix(f: &AssociatedMatrix) -> AssociatedMatrix {
    let n = f.n;
    let mut s = AssociatedMatrix::zero(n);
    for k in 1..=n {
        for j in 1..=k {
            let sign = if (k + j + 1) % 2 == 0 { 1.0 } else { -1.0 };
            s.set_entry(k, j, f.entry(n - j + 1, n - k + 1).scale(C64::new(sign, 0.0)));
        }
    }
    s
}

/// Outcome of the class and self-adjointness checks.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassReport {
    pub in_fn: bool,
    pub selfadjoint: bool,
    pub max_violation: f64,
    pub trace_defect: f64,
}

pub fn check_class(f: &AssociatedMatrix) -> ClassReport {
    check_class_with_tol(f, SELFADJOINT_RTOL)
}

/// Class check with a caller-chosen relative tolerance for the self-adjointness condition.
pub fn check_class_with_tol(f: &AssociatedMatrix, rtol: f64) -> ClassReport {
    let n = f.n;
    let star = star_matrix(f);
    let mut trace_defect = 0.0_f64;
    let mut violation = 0.0_f64;
    let mut scale = 1.0_f64;
    for s in 0..=CHECK_SAMPLES {
        let x = s as f64 / CHECK_SAMPLES as f64;
        let mut tr = C64::new(0.0, 0.0);
        for k in 1..=n {
            tr += f.entry(k, k).eval(x);
            for j in 1..=k {
                let a = f.entry(k, j).eval(x);
                scale = scale.max(a.norm());
                // F* must equal the entrywise conjugate of F
                violation = violation.max((star.entry(k, j).eval(x) - a.conj()).norm());
            }
        }
        trace_defect = trace_defect.max(tr.norm());
    }
    let in_fn = trace_defect <= 1e-12 * scale;
    let max_violation = violation / scale;
    ClassReport { in_fn, selfadjoint: in_fn && max_violation < rtol, max_violation, trace_defect }
}
