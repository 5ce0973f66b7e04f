//! Chebyshev-Lobatto grid on `[0, 1]`, Clenshaw-Curtis cumulative
//! integration and local interpolation back to piecewise polynomials.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::dense_solve;
use crate::poly::Function1D;
use crate::C64;

/// Nodes `x_j = (1 - cos(pi j / N)) / 2` with the cumulative integration
/// matrix `Q`, where `(Q f)_i` approximates the integral of `f` over `[0, x_i]`.
#[derive(Clone, Debug)]
pub struct ChebGrid {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ChebGrid {
    /// `size` must be `2^m + 1` with `size >= 33`.
    pub fn new(size: usize) -> Result<Self> {
        if size < 33 || !(size - 1).is_power_of_two() {
            return Err(Error::Input(format!("grid size must be 2^m + 1 and at least 33, got {size}")));
        }
        let n = size - 1;
        let nodes: Vec<f64> = (0..=n).map(|j| node(j, n)).collect();
        let mut cumulative = vec![0.0; size * size];
        let mut unit = vec![0.0; size];
        for col in 0..size {
            unit.iter_mut().for_each(|u| *u = 0.0);
            unit[col] = 1.0;
            let c = cumulative_values(&unit);
            for (row, v) in c.into_iter().enumerate() {
                cumulative[row * size + col] = v;
            }
        }
        Ok(Self { nodes, cumulative })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrals over `[0, x_i]` for every node.
    pub fn cumulative(&self, f: &[C64]) -> Vec<C64> {
        let m = self.len();
        (0..m).map(|i| self.cumulative[i * m..(i + 1) * m].iter().zip(f).map(|(w, v)| v * *w).sum()).collect()
    }

    /// Clenshaw-Curtis weights for the whole interval.
    pub fn weights(&self) -> &[f64] {
        let m = self.len();
        &self.cumulative[(m - 1) * m..]
    }

    pub fn integral(&self, f: &[C64]) -> C64 {
        self.weights().iter().zip(f).map(|(w, v)| v * *w).sum()
    }

    /// Piecewise polynomial through the node values, one degree-8 piece per
    /// block of 8 grid intervals.
    pub fn interpolate(&self, values: &[C64]) -> Result<Function1D> {
        const BLOCK: usize = 8;
        let n = self.len() - 1;
        let mut breaks = vec![0.0];
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + BLOCK).min(n);
            let a = self.nodes[start];
            let h = self.nodes[end] - a;
            let m = end - start + 1;
            // Vandermonde in the scaled variable (x - a) / h
            let mut vand = vec![C64::new(0.0, 0.0); m * m];
            for i in 0..m {
                let t = (self.nodes[start + i] - a) / h;
                let mut p = 1.0;
                for j in 0..m {
                    vand[i * m + j] = C64::new(p, 0.0);
                    p *= t;
                }
            }
            let scaled = dense_solve(&vand, &values[start..=end], m)?;
            let coeffs = scaled.iter().enumerate().map(|(j, c)| c / h.powi(j as i32)).collect();
            pieces.push(coeffs);
            breaks.push(self.nodes[end]);
            start = end;
        }
        Function1D::new(breaks, pieces)
    }
}

fn node(j: usize, n: usize) -> f64 {
    if j == 0 {
        return 0.0;
    }
    if 2 * j == n {
        return 0.5;
    }
    if 2 * j > n {
        return 1.0 - node(n - j, n);
    }
    // sin^2 form avoids cancellation near x = 0
    let s = (PI * j as f64 / (2 * n) as f64).sin();
    s * s
}

/// Chebyshev coefficients of the interpolant, integrated term by term and
/// evaluated back at the nodes.
fn cumulative_values(f: &[f64]) -> Vec<f64> {
    let n = f.len() - 1;
    let mut a = vec![0.0; n + 1];
    for (k, ak) in a.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, fj) in f.iter().enumerate() {
            // node x_j corresponds to t = -cos(pi j / n)
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            s += w * fj * (PI * (k * j) as f64 / n as f64).cos() * if k % 2 == 1 { -1.0 } else { 1.0 };
        }
        *ak = 2.0 * s / n as f64;
    }
    a[0] *= 0.5;
    a[n] *= 0.5;
    // integral in t of sum a_k T_k, from -1
    let mut b = vec![0.0; n + 2];
    for k in 1..=n + 1 {
        let prev = if k == 1 { 2.0 * a[0] } else { a[k - 1] };
        let next = if k < n { a[k + 1] } else { 0.0 };
        b[k] = (prev - next) / (2 * k) as f64;
    }
    // fix the constant so that the value at t = -1 vanishes
    let at_minus_one: f64 = (1..=n + 1).map(|k| if k % 2 == 1 { -b[k] } else { b[k] }).sum();
    b[0] = -at_minus_one;
    (0..=n)
        .map(|j| {
            let t = -(PI * j as f64 / n as f64).cos();
            chebyshev_eval(&b, t) * 0.5
        })
        .collect()
}

fn chebyshev_eval(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(ChebGrid::new(32).is_err());
        assert!(ChebGrid::new(17).is_err());
        assert!(ChebGrid::new(65).is_ok());
    }

    #[test]
    fn nodes_include_endpoints_and_midpoint() {
        let g = ChebGrid::new(129).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[128], 1.0);
        assert!((g.nodes()[64] - 0.5).abs() < 1e-16);
    }

    #[test]
    fn weights_integrate_smooth_functions() {
        let g = ChebGrid::new(65).unwrap();
        let f: Vec<C64> = g.nodes().iter().map(|&x| re((3.0 * x).exp())).collect();
        let exact = ((3.0f64).exp() - 1.0) / 3.0;
        assert!((g.integral(&f) - re(exact)).norm() < 1e-13);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let g = ChebGrid::new(65).unwrap();
        let f: Vec<C64> = g.nodes().iter().map(|&x| C64::new((5.0 * x).cos(), x * x)).collect();
        let c = g.cumulative(&f);
        for (x, v) in g.nodes().iter().zip(&c) {
            let exact = C64::new((5.0 * x).sin() / 5.0, x * x * x / 3.0);
            assert!((v - exact).norm() < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn interpolation_reproduces_values_and_shape() {
        let g = ChebGrid::new(129).unwrap();
        let vals: Vec<C64> = g.nodes().iter().map(|&x| C64::new((4.0 * x).sin(), (x - 0.3).powi(3))).collect();
        let p = g.interpolate(&vals).unwrap();
        for x in [0.013f64, 0.25, 0.5, 0.77, 0.999] {
            let exact = C64::new((4.0 * x).sin(), (x - 0.3).powi(3));
            assert!((p.eval(x) - exact).norm() < 1e-12, "x = {x}");
        }
        assert_eq!(p.pieces().len(), 16);
    }
}
