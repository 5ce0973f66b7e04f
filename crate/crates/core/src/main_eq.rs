//! The truncated main equation `(I - R(x)) psi(x) = psi~(x)`: index set,
//! scalings, kernels built from a model problem on a Chebyshev grid,
//! assembly, solution with invertibility diagnostics, and reconstruction of
//! the Weyl solutions of the target problem.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::assoc::AssociatedMatrix;
use crate::error::{Error, Result};
use crate::forward::SpectralData;
use crate::grid::ChebGrid;
use crate::ode::{dop853, lagrange_bracket, weyl_trajectory, LinearSystem, Shooting, Tolerance};
use crate::poly::Function1D;
use crate::C64;

/// `(l, k, eps)`: `eps = 0` refers to the target data, `eps = 1` to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IndexTriple {
    pub l: usize,
    pub k: usize,
    pub eps: u8,
}

/// `xi_l = sum_k (l^{-(n-1)} |lambda - lambda~| + l^{-n} |beta - beta~|)`,
/// stored at position `l - 1`.
pub fn xi_weights(data: &SpectralData, model: &SpectralData) -> Result<Vec<f64>> {
    if data.n != model.n {
        return Err(Error::Input(format!("data have n = {}, model has n = {}", data.n, model.n)));
    }
    let n = data.n;
    let count = data.count();
    (1..=count)
        .map(|l| {
            let lf = l as f64;
            let mut xi = 0.0;
            for k in 1..n {
                let (Some(d), Some(m)) = (data.get(l, k), model.get(l, k)) else {
                    return Err(Error::Input(format!("index (l, k) = ({l}, {k}) missing from data or model")));
                };
                xi += (d.lambda - m.lambda).norm() * lf.powi(1 - n as i32)
                    + (d.beta - m.beta).norm() * lf.powi(-(n as i32));
            }
            Ok(xi)
        })
        .collect()
}

/// `w_{l,k}(x) = l^{-k} exp(-x l cot(k pi / n))`.
pub fn w_scaling(l: usize, k: usize, x: f64, n: usize) -> f64 {
    w_scaling_with_rate(l, k, x, n, 1.0)
}

/// `l^{-k} exp(-rate x l cot(k pi / n))`; `rate = pi` follows the growth of
/// `Phi_{k+1}(x, lambda_{l,k})` on the unit interval.
pub fn w_scaling_with_rate(l: usize, k: usize, x: f64, n: usize, rate: f64) -> f64 {
    let cot = 1.0 / (std::f64::consts::PI * k as f64 / n as f64).tan();
    (l as f64).powi(-(k as i32)) * (-rate * x * l as f64 * cot).exp()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Rows `r_j`, `j = 0..=n`, with `y^(j) = r_j . Y` for the quasi-derivative
/// vector `Y` of a solution of `Y' = (F + Lambda) Y`.
fn derivative_rows(f: &AssociatedMatrix, lam_entry: C64) -> Vec<Vec<Function1D>> {
    let n = f.order();
    let entries = f.nonzero_entries();
    let mut rows = Vec::with_capacity(n + 1);
    let mut r: Vec<Function1D> =
        (0..n).map(|c| Function1D::constant(C64::new(f64::from(u8::from(c == 0)), 0.0))).collect();
    rows.push(r.clone());
    for _ in 0..n {
        let mut next: Vec<Function1D> = r.iter().map(|g| g.derivative()).collect();
        for c in 1..n {
            next[c] = &next[c] + &r[c - 1];
        }
        next[0] = &next[0] + &r[n - 1].scale(lam_entry);
        for &(k, j, e) in &entries {
            next[j - 1] = &next[j - 1] + &(&r[k - 1] * e);
        }
        r = next.into_iter().map(|g| g.trimmed()).collect();
        rows.push(r.clone());
    }
    rows
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Key {
    re: u64,
    im: u64,
    col: usize,
    dual: bool,
}

impl Key {
    fn new(lambda: C64, col: usize, dual: bool) -> Self {
        Self { re: lambda.re.to_bits(), im: lambda.im.to_bits(), col, dual }
    }
}

/// Weyl solution sampled on the grid.
#[derive(Clone, Debug)]
struct Trajectory {
    /// Quasi-derivative vectors per node.
    quasi: Vec<Vec<C64>>,
    /// Ordinary derivatives `y^(0) .. y^(n)` per node.
    derivs: Vec<Vec<C64>>,
}

/// Weyl solutions of the model matrix `F~` and of `F~*` on a shared grid,
/// together with integrals of products for nearly coincident spectral points.
#[derive(Clone, Debug)]
pub struct ModelCache {
    n: usize,
    f: AssociatedMatrix,
    fstar: AssociatedMatrix,
    grid: ChebGrid,
    tol: Tolerance,
    close_factor: f64,
    trajs: HashMap<Key, Trajectory>,
    /// `int_0^{x_i} z y` per node, keyed by (star, direct).
    pairs: HashMap<(Key, Key), Vec<C64>>,
}

impl ModelCache {
    pub fn new(model: &AssociatedMatrix, grid: ChebGrid, tol: Tolerance) -> Self {
        Self {
            n: model.order(),
            f: model.clone(),
            fstar: model.star(),
            grid,
            tol,
            close_factor: 1.0,
            trajs: HashMap::new(),
            pairs: HashMap::new(),
        }
    }

    /// Pairs with `|lambda - mu| <= factor * max(|lambda|, |mu|, 1)^{(n-1)/n}`
    /// are integrated instead of using the bracket quotient.
    pub fn with_close_factor(mut self, factor: f64) -> Self {
        self.close_factor = factor;
        self
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &ChebGrid {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn model(&self) -> &AssociatedMatrix {
        &self.f
    }

    fn system(&self, lambda: C64, dual: bool) -> LinearSystem<'_> {
        if dual {
            LinearSystem::dual(&self.fstar, lambda)
        } else {
            LinearSystem::direct(&self.f, lambda)
        }
    }

    /// Caches `Phi~_col(., lambda)` (or `Phi~*_col` when `dual`) for each of `cols`.
    pub fn insert_weyl(&mut self, lambda: C64, cols: &[usize], dual: bool) -> Result<()> {
        let todo: Vec<usize> =
            cols.iter().copied().filter(|&c| !self.trajs.contains_key(&Key::new(lambda, c, dual))).collect();
        if todo.is_empty() {
            return Ok(());
        }
        let sys = self.system(lambda, dual);
        let sh = Shooting::new(&sys, self.grid.nodes(), self.tol)?;
        let idx: Vec<usize> = self.grid.nodes().iter().map(|&x| sh.node_index(x).expect("grid node")).collect();
        let rows = derivative_rows(if dual { &self.fstar } else { &self.f }, sys.lam_entry());
        let mut made = Vec::with_capacity(todo.len());
        for &col in &todo {
            let all = sh.weyl(col)?;
            let quasi: Vec<Vec<C64>> = idx.iter().map(|&i| all[i].clone()).collect();
            if quasi.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Singular { pivot: 0.0 });
            }
            let derivs = self
                .grid
                .nodes()
                .iter()
                .zip(&quasi)
                .map(|(&x, y)| rows.iter().map(|r| r.iter().zip(y).map(|(g, v)| g.eval(x) * v).sum()).collect())
                .collect();
            made.push((col, Trajectory { quasi, derivs }));
        }
        for (col, t) in made {
            self.trajs.insert(Key::new(lambda, col, dual), t);
        }
        Ok(())
    }

    fn traj(&self, lambda: C64, col: usize, dual: bool) -> Result<&Trajectory> {
        self.trajs
            .get(&Key::new(lambda, col, dual))
            .ok_or_else(|| Error::Input(format!("no cached Weyl solution {col} (dual: {dual}) at {lambda}")))
    }

    /// Quasi-derivatives of a cached Weyl solution at grid node `node`.
    pub fn weyl(&self, lambda: C64, col: usize, dual: bool, node: usize) -> Result<&[C64]> {
        Ok(&self.traj(lambda, col, dual)?.quasi[node])
    }

    /// Ordinary derivatives `y^(0) .. y^(n)` of a cached Weyl solution.
    pub fn derivatives(&self, lambda: C64, col: usize, dual: bool, node: usize) -> Result<&[C64]> {
        Ok(&self.traj(lambda, col, dual)?.derivs[node])
    }

    pub fn is_close(&self, mu: C64, lambda: C64) -> bool {
        let scale = mu.norm().max(lambda.norm()).max(1.0).powf((self.n as f64 - 1.0) / self.n as f64);
        (lambda - mu).norm() <= self.close_factor * scale
    }

    /// Caches `int_0^x Phi~*_a(t, mu) Phi~_b(t, lambda) dt` at every node
    /// when the pair is close; both solutions must already be cached.
    pub fn insert_pair(&mut self, a: usize, mu: C64, b: usize, lambda: C64) -> Result<()> {
        if !self.is_close(mu, lambda) {
            return Ok(());
        }
        let key = (Key::new(mu, a, true), Key::new(lambda, b, false));
        if self.pairs.contains_key(&key) {
            return Ok(());
        }
        let n = self.n;
        let z = self.traj(mu, a, true)?;
        let y = self.traj(lambda, b, false)?;
        let zs = self.system(mu, true);
        let ys = self.system(lambda, false);
        let nodes = self.grid.nodes();
        let mut cum = vec![C64::new(0.0, 0.0); nodes.len()];
        let mut state = vec![C64::new(0.0, 0.0); 2 * n + 1];
        for i in 0..nodes.len() - 1 {
            // scale both solutions to unit size so the integral is not
            // swamped by the error control of a large component
            let sz = z.quasi[i].iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
            let sy = y.quasi[i].iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
            for j in 0..n {
                state[j] = z.quasi[i][j] / sz;
                state[n + j] = y.quasi[i][j] / sy;
            }
            state[2 * n] = C64::new(0.0, 0.0);
            dop853(
                |x, u, du| {
                    zs.apply(x, &u[..n], 1, &mut du[..n]);
                    ys.apply(x, &u[n..2 * n], 1, &mut du[n..2 * n]);
                    du[2 * n] = u[0] * u[n];
                },
                nodes[i],
                nodes[i + 1],
                &mut state,
                self.tol,
            )?;
            cum[i + 1] = cum[i] + state[2 * n] * (sz * sy);
        }
        self.pairs.insert(key, cum);
        Ok(())
    }

    /// `D~_{a,b}(x, mu, lambda) = <Phi~*_a(x, mu), Phi~_b(x, lambda)> / (lambda - mu)`
    /// at grid node `node`; close pairs use the integral representation.
    pub fn d_kernel(&self, a: usize, b: usize, mu: C64, lambda: C64, node: usize) -> Result<C64> {
        let n = self.n;
        let gap = lambda - mu;
        let pole = a + b == n + 1;
        if pole && gap.norm() <= 1e-13 * lambda.norm().max(mu.norm()).max(1.0) {
            return Err(Error::PoleProximity { gap: gap.norm() });
        }
        if !self.is_close(mu, lambda) {
            let z = self.weyl(mu, a, true, node)?;
            let y = self.weyl(lambda, b, false, node)?;
            return Ok(lagrange_bracket(z, y)? / gap);
        }
        let cum = self
            .pairs
            .get(&(Key::new(mu, a, true), Key::new(lambda, b, false)))
            .ok_or_else(|| Error::Input(format!("no cached product integral for ({a}, {b}) at ({mu}, {lambda})")))?;
        let last = cum.len() - 1;
        Ok(if a + b > n + 1 {
            cum[node]
        } else if pole {
            let sign = if a % 2 == 1 { 1.0 } else { -1.0 };
            cum[node] + sign / gap
        } else {
            cum[node] - cum[last]
        })
    }

    /// `d^m/dx^m D~_{a,b}` for `m >= 1`, i.e. `(z y)^{(m-1)}`.
    fn d_kernel_derivative(&self, a: usize, b: usize, mu: C64, lambda: C64, node: usize, m: usize) -> Result<C64> {
        let z = self.derivatives(mu, a, true, node)?;
        let y = self.derivatives(lambda, b, false, node)?;
        Ok((0..m).map(|r| z[r] * y[m - 1 - r] * binom(m - 1, r)).sum())
    }

    /// Largest violation of the Weyl boundary conditions over the cache.
    pub fn boundary_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for (key, t) in &self.trajs {
            let first = &t.quasi[0];
            let last = &t.quasi[t.quasi.len() - 1];
            let scale = first.iter().chain(last.iter()).map(|v| v.norm()).fold(1.0, f64::max);
            for j in 1..=key.col {
                let target = if j == key.col { 1.0 } else { 0.0 };
                worst = worst.max((first[j - 1] - target).norm());
            }
            for s in 1..=n - key.col {
                worst = worst.max(last[s - 1].norm() / scale);
            }
        }
        worst
    }
}

/// Settings of the inverse solver.
#[derive(Clone, Copy, Debug)]
pub struct MainOptions {
    pub grid_size: usize,
    pub tol: Tolerance,
    pub close_factor: f64,
    /// Smallest singular value of `I - R` below which a node raises the
    /// solvability alarm.
    pub alarm: f64,
    /// Exponent rate of the row scaling, see [`w_scaling_with_rate`].
    pub weight_rate: f64,
}

impl Default for MainOptions {
    fn default() -> Self {
        Self {
            grid_size: 129,
            tol: Tolerance::default(),
            close_factor: 1.0,
            alarm: 1e-10,
            weight_rate: std::f64::consts::PI,
        }
    }
}

/// One pair `(l, k)` of the index set with its position(s) in the system.
#[derive(Clone, Copy, Debug)]
struct Group {
    l: usize,
    k: usize,
    xi: f64,
    /// Row of `(l, k, 0)`; absent when `xi = 0`.
    i0: Option<usize>,
    i1: usize,
    lambda: [C64; 2],
    beta: [C64; 2],
}

/// Assembled system at one node.
#[derive(Clone, Debug)]
pub struct TruncatedMainEquation {
    pub x: f64,
    pub node: usize,
    pub index: Vec<IndexTriple>,
    pub r: DMatrix<C64>,
    pub psi_tilde: DVector<C64>,
    pub xi: Vec<f64>,
}

impl TruncatedMainEquation {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// `|| (I - R) psi - psi~ ||_inf`.
    pub fn residual(&self, psi: &DVector<C64>) -> f64 {
        let lhs = psi - &self.r * psi;
        (lhs - &self.psi_tilde).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Solution at one node.
#[derive(Clone, Debug)]
pub struct NodeSolution {
    pub x: f64,
    pub psi: DVector<C64>,
    /// `phi[j][i]`: `j`-th derivative of `phi` for index `i`.
    pub phi: Vec<Vec<C64>>,
    pub sigma_min: f64,
    pub cond: f64,
    pub residual: f64,
}

/// Weyl solutions `Phi_{k0}(x, lambda)` of the target problem, `k0 = 1..n`,
/// with ordinary derivatives up to order `n`.
#[derive(Clone, Debug)]
pub struct WeylReconstruction {
    pub lambda: C64,
    pub nodes: Vec<f64>,
    /// `values[node][k0 - 1][j]`.
    pub values: Vec<Vec<Vec<C64>>>,
}

/// The main equation for given data and a model problem.
#[derive(Clone, Debug)]
pub struct MainEquation {
    n: usize,
    cache: ModelCache,
    xi: Vec<f64>,
    index: Vec<IndexTriple>,
    groups: Vec<Group>,
    alarm: f64,
    weight_rate: f64,
}

impl MainEquation {
    /// `data` and `model_data` are truncated to the common count.
    pub fn new(
        model: &AssociatedMatrix,
        data: &SpectralData,
        model_data: &SpectralData,
        opts: &MainOptions,
    ) -> Result<Self> {
        let n = data.n;
        if model.order() != n {
            return Err(Error::Input(format!("model matrix has order {}, data n = {n}", model.order())));
        }
        let count = data.count().min(model_data.count());
        let data = data.truncated(count);
        let model_data = model_data.truncated(count);
        let xi = xi_weights(&data, &model_data)?;
        let mut index = Vec::new();
        let mut groups = Vec::new();
        for l in 1..=count {
            for k in 1..n {
                let d = data.get(l, k).expect("checked by xi_weights");
                let m = model_data.get(l, k).expect("checked by xi_weights");
                let x = xi[l - 1];
                let i0 = if x != 0.0 {
                    index.push(IndexTriple { l, k, eps: 0 });
                    Some(index.len() - 1)
                } else {
                    None
                };
                index.push(IndexTriple { l, k, eps: 1 });
                groups.push(Group {
                    l,
                    k,
                    xi: x,
                    i0,
                    i1: index.len() - 1,
                    lambda: [d.lambda, m.lambda],
                    beta: [d.beta, m.beta],
                });
            }
        }
        let grid = ChebGrid::new(opts.grid_size)?;
        let mut cache = ModelCache::new(model, grid, opts.tol).with_close_factor(opts.close_factor);
        for g in &groups {
            for lam in g.lambda {
                cache.insert_weyl(lam, &[g.k + 1], false)?;
                cache.insert_weyl(lam, &[n - g.k + 1], true)?;
            }
        }
        for g in &groups {
            for mu in g.lambda {
                for g0 in &groups {
                    for lam in g0.lambda {
                        cache.insert_pair(n - g.k + 1, mu, g0.k + 1, lam)?;
                    }
                }
            }
        }
        Ok(Self { n, cache, xi, index, groups, alarm: opts.alarm, weight_rate: opts.weight_rate })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn cache(&self) -> &ModelCache {
        &self.cache
    }

    pub fn nodes(&self) -> &[f64] {
        self.cache.nodes()
    }

    pub fn index(&self) -> &[IndexTriple] {
        &self.index
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Spectral point `lambda_{l,k,eps}` of an index.
    pub fn lambda_of(&self, v: IndexTriple) -> C64 {
        let g = self.groups.iter().find(|g| g.l == v.l && g.k == v.k).expect("index in range");
        g.lambda[v.eps as usize]
    }

    fn sign(p: usize) -> f64 {
        if p.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// `G~_{(l,k,eps),(l0,k0,eps0)}(x)` at a node.
    pub fn g_kernel(&self, v: IndexTriple, v0: IndexTriple, node: usize) -> Result<C64> {
        let n = self.n;
        let g = self.groups.iter().find(|g| g.l == v.l && g.k == v.k).expect("index in range");
        let lam0 = self.lambda_of(v0);
        let d = self.cache.d_kernel(n - v.k + 1, v0.k + 1, g.lambda[v.eps as usize], lam0, node)?;
        Ok(g.beta[v.eps as usize] * Self::sign(n - v.k) * d)
    }

    /// Coefficient of `phi_v` in row `v0` of the untransformed system
    /// `phi_{v0} - sum K_{v0,v} phi_v = phi~_{v0}`, with the two columns of a
    /// group with `xi = 0` merged; `m = 0` gives `K`, `m >= 1` its `m`-th
    /// derivative in `x`.
    fn k_entries(&self, row: IndexTriple, node: usize, m: usize) -> Result<Vec<C64>> {
        let n = self.n;
        let lam0 = self.lambda_of(row);
        let mut out = vec![C64::new(0.0, 0.0); self.index.len()];
        for g in &self.groups {
            let a = n - g.k + 1;
            let b = row.k + 1;
            let mut t = [C64::new(0.0, 0.0); 2];
            for eps in 0..2 {
                let d = if m == 0 {
                    self.cache.d_kernel(a, b, g.lambda[eps], lam0, node)?
                } else {
                    self.cache.d_kernel_derivative(a, b, g.lambda[eps], lam0, node, m)?
                };
                t[eps] = g.beta[eps] * Self::sign(n - g.k + eps) * d;
            }
            match g.i0 {
                Some(i0) => {
                    out[i0] = t[0];
                    out[g.i1] = t[1];
                }
                None => out[g.i1] = t[0] + t[1],
            }
        }
        Ok(out)
    }

    /// `psi = Q phi` for a vector in index order.
    fn apply_q(&self, x: f64, phi: &[C64]) -> Vec<C64> {
        let mut psi = vec![C64::new(0.0, 0.0); phi.len()];
        for g in &self.groups {
            let w = w_scaling_with_rate(g.l, g.k, x, self.n, self.weight_rate);
            psi[g.i1] = phi[g.i1] / w;
            if let Some(i0) = g.i0 {
                psi[i0] = (phi[i0] - phi[g.i1]) / (w * g.xi);
            }
        }
        psi
    }

    /// `phi = P psi`, the inverse of [`Self::apply_q`].
    fn apply_p(&self, x: f64, psi: &[C64]) -> Vec<C64> {
        let mut phi = vec![C64::new(0.0, 0.0); psi.len()];
        for g in &self.groups {
            let w = w_scaling_with_rate(g.l, g.k, x, self.n, self.weight_rate);
            phi[g.i1] = psi[g.i1] * w;
            if let Some(i0) = g.i0 {
                phi[i0] = (psi[i0] * g.xi + psi[g.i1]) * w;
            }
        }
        phi
    }

    /// `phi~_v(x)` and its derivatives at a node: `out[j][i]`.
    fn model_phi(&self, node: usize) -> Result<Vec<Vec<C64>>> {
        let mut out = vec![vec![C64::new(0.0, 0.0); self.index.len()]; self.n + 1];
        for (i, v) in self.index.iter().enumerate() {
            let d = self.cache.derivatives(self.lambda_of(*v), v.k + 1, false, node)?;
            for j in 0..=self.n {
                out[j][i] = d[j];
            }
        }
        Ok(out)
    }

    /// Assembles `R(x)` and `psi~(x)` at a grid node.
    pub fn assemble(&self, node: usize) -> Result<TruncatedMainEquation> {
        let x = self.nodes()[node];
        let k = self.k_matrix(node, 0)?;
        let r = self.transform(x, &k);
        let phi = self.model_phi(node)?;
        let psi_tilde = DVector::from_vec(self.apply_q(x, &phi[0]));
        Ok(TruncatedMainEquation { x, node, index: self.index.clone(), r, psi_tilde, xi: self.xi.clone() })
    }

    fn k_matrix(&self, node: usize, m: usize) -> Result<DMatrix<C64>> {
        let dim = self.index.len();
        let mut k = DMatrix::zeros(dim, dim);
        for (i, v0) in self.index.iter().enumerate() {
            let row = self.k_entries(*v0, node, m)?;
            for (j, val) in row.into_iter().enumerate() {
                k[(i, j)] = val;
            }
        }
        Ok(k)
    }

    /// `Q K P`.
    fn transform(&self, x: f64, k: &DMatrix<C64>) -> DMatrix<C64> {
        let dim = self.index.len();
        let mut kp = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut unit = vec![C64::new(0.0, 0.0); dim];
            unit[j] = C64::new(1.0, 0.0);
            let col = self.apply_p(x, &unit);
            let prod = k * DVector::from_vec(col);
            kp.set_column(j, &prod);
        }
        let mut out = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let col: Vec<C64> = kp.column(j).iter().copied().collect();
            out.set_column(j, &DVector::from_vec(self.apply_q(x, &col)));
        }
        out
    }

    /// Solves the main equation at a node, then the differentiated equations
    /// for `phi^(j)`, `j = 1..=n`, with the same matrix.
    pub fn solve_node(&self, node: usize) -> Result<NodeSolution> {
        let n = self.n;
        let eq = self.assemble(node)?;
        let x = eq.x;
        let dim = eq.dim();
        let a = DMatrix::<C64>::identity(dim, dim) - &eq.r;
        let sv = a.clone().singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(smin > self.alarm) {
            return Err(Error::Solvability { x, sigma_min: smin });
        }
        let lu = a.lu();
        let psi = lu.solve(&eq.psi_tilde).ok_or(Error::Singular { pivot: 0.0 })?;
        let residual = eq.residual(&psi);
        let model_phi = self.model_phi(node)?;
        let mut phi = vec![self.apply_p(x, psi.as_slice())];
        let kd: Vec<DMatrix<C64>> = (1..=n).map(|m| self.k_matrix(node, m)).collect::<Result<_>>()?;
        for j in 1..=n {
            let mut rhs = DVector::from_vec(model_phi[j].clone());
            for i in 0..j {
                let prev = DVector::from_vec(phi[i].clone());
                rhs += &kd[j - i - 1] * prev * C64::new(binom(j, i), 0.0);
            }
            let rhs_psi = DVector::from_vec(self.apply_q(x, rhs.as_slice()));
            let sol = lu.solve(&rhs_psi).ok_or(Error::Singular { pivot: 0.0 })?;
            phi.push(self.apply_p(x, sol.as_slice()));
        }
        Ok(NodeSolution { x, psi, phi, sigma_min: smin, cond: smax / smin, residual })
    }

    pub fn solve_all(&self) -> Result<Vec<NodeSolution>> {
        (0..self.nodes().len()).map(|i| self.solve_node(i)).collect()
    }

    /// `Phi_{k0}(x, lambda) = Phi~_{k0}(x, lambda)
    ///   + sum_V (-1)^{eps+n-k} beta_{l,k,eps} phi_{l,k,eps}(x) D~_{n-k+1,k0}(x, lambda_{l,k,eps}, lambda)`.
    pub fn reconstruct_weyl(&mut self, solutions: &[NodeSolution], lambda: C64) -> Result<WeylReconstruction> {
        let n = self.n;
        if solutions.len() != self.nodes().len() {
            return Err(Error::Input(format!(
                "{} node solutions for {} grid nodes",
                solutions.len(),
                self.nodes().len()
            )));
        }
        for g in &self.groups {
            for mu in g.lambda {
                let gap = (mu - lambda).norm();
                if gap <= 1e-8 * mu.norm().max(1.0) {
                    return Err(Error::PoleProximity { gap });
                }
            }
        }
        let cols: Vec<usize> = (1..=n).collect();
        self.cache.insert_weyl(lambda, &cols, false)?;
        let groups = self.groups.clone();
        for g in &groups {
            for mu in g.lambda {
                for &k0 in &cols {
                    self.cache.insert_pair(n - g.k + 1, mu, k0, lambda)?;
                }
            }
        }
        let mut values = Vec::with_capacity(solutions.len());
        for (node, sol) in solutions.iter().enumerate() {
            let mut per_col = Vec::with_capacity(n);
            for &k0 in &cols {
                let mut v: Vec<C64> = self.cache.derivatives(lambda, k0, false, node)?.to_vec();
                for g in &self.groups {
                    let a = n - g.k + 1;
                    for eps in 0..2 {
                        let mu = g.lambda[eps];
                        let i = match (eps, g.i0) {
                            (0, Some(i0)) => i0,
                            _ => g.i1,
                        };
                        let s = g.beta[eps] * Self::sign(eps + n - g.k);
                        let mut e = vec![self.cache.d_kernel(a, k0, mu, lambda, node)?];
                        for m in 1..=n {
                            e.push(self.cache.d_kernel_derivative(a, k0, mu, lambda, node, m)?);
                        }
                        for (j, vj) in v.iter_mut().enumerate() {
                            let term: C64 = (0..=j).map(|q| sol.phi[q][i] * e[j - q] * binom(j, q)).sum();
                            *vj += s * term;
                        }
                    }
                }
                per_col.push(v);
            }
            values.push(per_col);
        }
        Ok(WeylReconstruction { lambda, nodes: self.nodes().to_vec(), values })
    }
}

/// `phi_v(x) = Phi_{k+1}(x, lambda_v)` and derivatives for a known target
/// matrix, transformed to `psi` with the same scalings as the system.
pub fn oracle_psi(eq: &MainEquation, target: &AssociatedMatrix, tol: Tolerance) -> Result<Vec<DVector<C64>>> {
    let nodes = eq.nodes().to_vec();
    let mut cols: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); eq.index().len()]; nodes.len()];
    for (i, v) in eq.index().iter().enumerate() {
        let t = weyl_trajectory(target, eq.lambda_of(*v), &nodes, tol)?;
        let n = target.order();
        for (node, m) in t.values.iter().enumerate() {
            cols[node][i] = m[v.k];
            debug_assert!(v.k < n);
        }
    }
    Ok(nodes.iter().zip(cols).map(|(&x, phi)| DVector::from_vec(eq.apply_q(x, &phi))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::Provenance;
    use std::f64::consts::PI;

    fn dirichlet(count: usize) -> SpectralData {
        let rec: Vec<(usize, C64, C64)> = (1..=count)
            .map(|l| {
                let a = (PI * l as f64).powi(2);
                (1, C64::new(-a, 0.0), C64::new(2.0 * a, 0.0))
            })
            .collect();
        SpectralData::from_unordered(2, &rec, Provenance::Computed)
    }

    #[test]
    fn xi_of_shifted_first_eigenvalue() {
        let model = dirichlet(4);
        let mut data = model.clone();
        data.entries[0].lambda += 1.0;
        let xi = xi_weights(&data, &model).unwrap();
        assert!((xi[0] - 1.0).abs() < 1e-15);
        assert!(xi[1..].iter().all(|&v| v == 0.0));
        assert!(xi_weights(&model, &model).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn w_values() {
        assert!((w_scaling(3, 2, 0.0, 5) - 1.0 / 9.0).abs() < 1e-15);
        assert!((w_scaling(7, 1, 0.4, 2) - 1.0 / 7.0).abs() < 1e-15);
        assert!((w_scaling(2, 1, 1.0, 4) - (-2.0f64).exp() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rate_scales_the_exponent() {
        let pi = std::f64::consts::PI;
        assert_eq!(w_scaling_with_rate(5, 2, 0.3, 4, 1.0), w_scaling(5, 2, 0.3, 4));
        assert!((w_scaling_with_rate(2, 1, 1.0, 4, pi) - (-2.0 * pi).exp() / 2.0).abs() < 1e-16);
        // cot(pi / 2) = 0: the middle track of n = 4 is not scaled in x
        assert!((w_scaling_with_rate(3, 2, 0.7, 4, pi) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_rows_of_free_matrix() {
        let f = AssociatedMatrix::zero(3);
        let rows = derivative_rows(&f, C64::new(2.0, 0.0));
        // y''' = y^[3] = lambda y for F = 0
        assert_eq!(rows[3][0].eval(0.3), C64::new(2.0, 0.0));
        assert_eq!(rows[2][2].eval(0.3), C64::new(1.0, 0.0));
    }

    #[test]
    fn kernel_forms_agree() {
        // the bracket quotient and the integral representation of D~
        let f = AssociatedMatrix::zero(2);
        let grid = ChebGrid::new(33).unwrap();
        let mu = C64::new(-20.0, 3.0);
        let lam = C64::new(-25.0, 1.0);
        let mut far = ModelCache::new(&f, grid.clone(), Tolerance::default()).with_close_factor(0.0);
        let mut near = ModelCache::new(&f, grid, Tolerance::default()).with_close_factor(1e6);
        for c in [&mut far, &mut near] {
            c.insert_weyl(mu, &[1, 2], true).unwrap();
            c.insert_weyl(lam, &[1, 2], false).unwrap();
            for a in 1..=2 {
                for b in 1..=2 {
                    c.insert_pair(a, mu, b, lam).unwrap();
                }
            }
        }
        for node in [0, 5, 16, 32] {
            for a in 1..=2 {
                for b in 1..=2 {
                    let d1 = far.d_kernel(a, b, mu, lam, node).unwrap();
                    let d2 = near.d_kernel(a, b, mu, lam, node).unwrap();
                    assert!((d1 - d2).norm() < 1e-9 * (1.0 + d1.norm()), "{a} {b} {node}: {d1} {d2}");
                }
            }
        }
        assert!(far.boundary_defect() < 1e-9);
    }

    #[test]
    fn identical_data_give_identity_system() {
        let f = AssociatedMatrix::zero(2);
        let model = dirichlet(3);
        let opts = MainOptions { grid_size: 33, ..MainOptions::default() };
        let eq = MainEquation::new(&f, &model, &model, &opts).unwrap();
        assert_eq!(eq.index().len(), 3);
        let sol = eq.solve_node(7).unwrap();
        let e = eq.assemble(7).unwrap();
        assert!(e.r.iter().all(|v| v.norm() == 0.0));
        assert!((sol.psi.clone() - e.psi_tilde).norm() == 0.0);
    }
}
