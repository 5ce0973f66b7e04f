//! Piecewise polynomials on `[0, 1]` with complex coefficients.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::C64;

/// A piecewise polynomial on `[0, 1]`.
///
/// Piece `i` lives on `[breaks[i], breaks[i+1]]` and stores its coefficients
/// in ascending powers of the local variable `x - breaks[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Function1D {
    breaks: Vec<f64>,
    pieces: Vec<Vec<C64>>,
}

impl Function1D {
    pub fn new(breaks: Vec<f64>, pieces: Vec<Vec<C64>>) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::Representation("need at least two breakpoints".into()));
        }
        if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(Error::Representation("breakpoints must start at 0 and end at 1".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Representation("breakpoints must be strictly increasing".into()));
        }
        if pieces.len() + 1 != breaks.len() {
            return Err(Error::Representation(format!(
                "{} breakpoints need {} pieces, got {}",
                breaks.len(),
                breaks.len() - 1,
                pieces.len()
            )));
        }
        if pieces.iter().any(|p| p.is_empty()) {
            return Err(Error::Representation("empty polynomial piece".into()));
        }
        if pieces.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Representation("non-finite coefficient".into()));
        }
        Ok(Self { breaks, pieces })
    }

    pub fn zero() -> Self {
        Self::constant(C64::new(0.0, 0.0))
    }

    pub fn constant(c: C64) -> Self {
        Self { breaks: vec![0.0, 1.0], pieces: vec![vec![c]] }
    }

    /// Single-piece polynomial `sum coeffs[i] x^i`.
    pub fn polynomial(coeffs: &[C64]) -> Self {
        let pieces = if coeffs.is_empty() { vec![C64::new(0.0, 0.0)] } else { coeffs.to_vec() };
        Self { breaks: vec![0.0, 1.0], pieces: vec![pieces] }
    }

    pub fn real_polynomial(coeffs: &[f64]) -> Self {
        let c: Vec<C64> = coeffs.iter().map(|&a| C64::new(a, 0.0)).collect();
        Self::polynomial(&c)
    }

    /// Piecewise polynomial from coefficients given in the global variable `x`.
    pub fn from_global_pieces(breaks: Vec<f64>, global: Vec<Vec<C64>>) -> Result<Self> {
        let local = breaks.iter().zip(&global).map(|(&a, p)| taylor_shift(p, a)).collect();
        Self::new(breaks, local)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Vec<C64>] {
        &self.pieces
    }

    pub fn degree(&self) -> usize {
        self.pieces.iter().map(|p| p.len() - 1).max().unwrap_or(0)
    }

    fn piece_index(&self, x: f64) -> usize {
        let last = self.pieces.len() - 1;
        if x >= self.breaks[last] {
            return last;
        }
        // largest i with breaks[i] <= x
        match self.breaks[..=last].binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// Value at `x`; a breakpoint takes the right piece, except `x = 1`.
    pub fn eval(&self, x: f64) -> C64 {
        let i = self.piece_index(x);
        horner(&self.pieces[i], x - self.breaks[i])
    }

    /// Value of the piece to the left of `x` (used for one-sided limits).
    pub fn eval_left(&self, x: f64) -> C64 {
        let mut i = self.piece_index(x);
        if i > 0 && x <= self.breaks[i] {
            i -= 1;
        }
        horner(&self.pieces[i], x - self.breaks[i])
    }

    pub fn derivative(&self) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                if p.len() == 1 {
                    vec![C64::new(0.0, 0.0)]
                } else {
                    p.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect()
                }
            })
            .collect();
        Self { breaks: self.breaks.clone(), pieces }
    }

    pub fn nth_derivative(&self, m: usize) -> Self {
        (0..m).fold(self.clone(), |f, _| f.derivative())
    }

    /// Continuous antiderivative vanishing at `x = 0`.
    pub fn antiderivative(&self) -> Self {
        let mut acc = C64::new(0.0, 0.0);
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (i, p) in self.pieces.iter().enumerate() {
            let mut q = Vec::with_capacity(p.len() + 1);
            q.push(acc);
            q.extend(p.iter().enumerate().map(|(j, c)| c / (j + 1) as f64));
            let h = self.breaks[i + 1] - self.breaks[i];
            acc = horner(&q, h);
            pieces.push(q);
        }
        Self { breaks: self.breaks.clone(), pieces }
    }

    pub fn integral(&self) -> C64 {
        let anti = self.antiderivative();
        let last = anti.pieces.len() - 1;
        horner(&anti.pieces[last], 1.0 - anti.breaks[last])
    }

    /// Same function on a finer set of breakpoints (must contain the current ones).
    pub fn refine(&self, breaks: &[f64]) -> Self {
        let mut pieces = Vec::with_capacity(breaks.len() - 1);
        for w in breaks.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let i = self.piece_index(mid);
            pieces.push(taylor_shift(&self.pieces[i], w[0] - self.breaks[i]));
        }
        Self { breaks: breaks.to_vec(), pieces }
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_coeffs(|a| a * c)
    }

    pub fn conj(&self) -> Self {
        self.map_coeffs(|a| a.conj())
    }

    fn map_coeffs(&self, f: impl Fn(C64) -> C64) -> Self {
        let pieces = self.pieces.iter().map(|p| p.iter().map(|&a| f(a)).collect()).collect();
        Self { breaks: self.breaks.clone(), pieces }
    }

    /// `sum_i c_i * f_i` over a common refinement.
    pub fn linear_combination(terms: &[(C64, &Function1D)]) -> Self {
        terms.iter().fold(Self::zero(), |acc, (c, f)| &acc + &f.scale(*c))
    }

    /// Largest jump of the derivatives of order `0..=order` at interior breakpoints.
    pub fn continuity_defect(&self, order: usize) -> f64 {
        let mut worst = 0.0_f64;
        let mut f = self.clone();
        for _ in 0..=order {
            for i in 1..f.pieces.len() {
                let x = f.breaks[i];
                let left = horner(&f.pieces[i - 1], x - f.breaks[i - 1]);
                let right = f.pieces[i][0];
                worst = worst.max((left - right).norm());
            }
            f = f.derivative();
        }
        worst
    }

    /// Largest modulus over `m + 1` equispaced samples.
    pub fn max_abs_sampled(&self, m: usize) -> f64 {
        (0..=m).map(|i| self.eval(i as f64 / m as f64).norm()).fold(0.0, f64::max)
    }

    /// Drops trailing zero coefficients and merges nothing else.
    pub fn trimmed(&self) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let mut q = p.clone();
                while q.len() > 1 && q.last().is_some_and(|c| c.norm() == 0.0) {
                    q.pop();
                }
                q
            })
            .collect();
        Self { breaks: self.breaks.clone(), pieces }
    }

    fn binary(&self, other: &Self, op: impl Fn(&[C64], &[C64]) -> Vec<C64>) -> Self {
        let breaks = union_breaks(&self.breaks, &other.breaks);
        let a = if breaks == self.breaks { self.clone() } else { self.refine(&breaks) };
        let b = if breaks == other.breaks { other.clone() } else { other.refine(&breaks) };
        let pieces = a.pieces.iter().zip(&b.pieces).map(|(p, q)| op(p, q)).collect();
        Self { breaks, pieces }
    }
}

fn add_coeffs(p: &[C64], q: &[C64]) -> Vec<C64> {
    let len = p.len().max(q.len());
    (0..len).map(|i| p.get(i).copied().unwrap_or_default() + q.get(i).copied().unwrap_or_default()).collect()
}

fn mul_coeffs(p: &[C64], q: &[C64]) -> Vec<C64> {
    let mut r = vec![C64::new(0.0, 0.0); p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            r[i + j] += a * b;
        }
    }
    r
}

pub(crate) fn horner(p: &[C64], t: f64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * t + c)
}

/// Coefficients of `q(s) = p(s + d)`.
pub(crate) fn taylor_shift(p: &[C64], d: f64) -> Vec<C64> {
    let mut c = p.to_vec();
    if d == 0.0 {
        return c;
    }
    let m = c.len();
    for i in 0..m {
        for j in (i..m - 1).rev() {
            let t = c[j + 1] * d;
            c[j] += t;
        }
    }
    c
}

pub fn union_breaks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().chain(b).copied().collect();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v.dedup();
    v
}

impl Add for &Function1D {
    type Output = Function1D;
    fn add(self, rhs: &Function1D) -> Function1D {
        self.binary(rhs, add_coeffs)
    }
}

impl Sub for &Function1D {
    type Output = Function1D;
    fn sub(self, rhs: &Function1D) -> Function1D {
        self.binary(&-rhs, add_coeffs)
    }
}

impl Mul for &Function1D {
    type Output = Function1D;
    fn mul(self, rhs: &Function1D) -> Function1D {
        self.binary(rhs, mul_coeffs)
    }
}

impl Neg for &Function1D {
    type Output = Function1D;
    fn neg(self) -> Function1D {
        self.map_coeffs(|a| -a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn step() -> Function1D {
        Function1D::new(vec![0.0, 0.5, 1.0], vec![vec![c(1.0)], vec![c(-1.0)]]).unwrap()
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(Function1D::new(vec![0.0, 0.7, 0.7, 1.0], vec![vec![c(1.0)]; 3]).is_err());
        assert!(Function1D::new(vec![0.1, 1.0], vec![vec![c(1.0)]]).is_err());
        assert!(Function1D::new(vec![0.0, 1.0], vec![]).is_err());
    }

    #[test]
    fn breakpoint_takes_right_piece_except_at_one() {
        let f = step();
        assert_eq!(f.eval(0.5), c(-1.0));
        assert_eq!(f.eval_left(0.5), c(1.0));
        assert_eq!(f.eval(1.0), c(-1.0));
        assert_eq!(f.eval(0.0), c(1.0));
    }

    #[test]
    fn antiderivative_of_step_is_continuous_tent() {
        let g = step().antiderivative();
        assert!((g.eval(0.25) - c(0.25)).norm() < 1e-15);
        assert!((g.eval(0.5) - c(0.5)).norm() < 1e-15);
        assert!((g.eval(0.75) - c(0.25)).norm() < 1e-15);
        assert!(g.continuity_defect(0) < 1e-15);
        assert!(step().integral().norm() < 1e-15);
    }

    #[test]
    fn taylor_shift_matches_direct_evaluation() {
        let p = vec![c(1.0), c(-2.0), c(0.5), c(3.0)];
        let q = taylor_shift(&p, 0.3);
        for &s in &[0.0, 0.1, 0.7] {
            assert!((horner(&q, s) - horner(&p, s + 0.3)).norm() < 1e-13);
        }
    }

    fn arb_poly() -> impl Strategy<Value = Function1D> {
        (prop::collection::vec(-2.0f64..2.0, 1..5), prop::collection::vec(-2.0f64..2.0, 1..5), 0.1f64..0.9).prop_map(
            |(a, b, x0)| {
                let pa = a.iter().map(|&v| c(v)).collect();
                let pb = b.iter().map(|&v| C64::new(0.0, v)).collect();
                Function1D::new(vec![0.0, x0, 1.0], vec![pa, pb]).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn derivative_inverts_antiderivative(f in arb_poly(), x in 0.0f64..1.0) {
            let g = f.antiderivative().derivative();
            prop_assert!((g.eval(x) - f.eval(x)).norm() < 1e-12);
        }

        #[test]
        fn product_is_pointwise(f in arb_poly(), g in arb_poly(), x in 0.0f64..1.0) {
            let h = &f * &g;
            prop_assert!((h.eval(x) - f.eval(x) * g.eval(x)).norm() < 1e-11);
            let s = &f - &g;
            prop_assert!((s.eval(x) - (f.eval(x) - g.eval(x))).norm() < 1e-12);
        }

        #[test]
        fn refine_preserves_values(f in arb_poly(), x in 0.0f64..1.0) {
            let r = f.refine(&union_breaks(f.breaks(), &[0.0, 0.33, 0.61, 1.0]));
            prop_assert!((r.eval(x) - f.eval(x)).norm() < 1e-12);
        }
    }
}
