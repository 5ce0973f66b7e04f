//! Spectral data of the problems `L_k`: characteristic functions, eigenvalues,
//! the Weyl-Yurko matrix, weight matrices and weight numbers.

use std::f64::consts::PI;

use crate::assoc::AssociatedMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dense_inverse, matmul, Scaled};
use crate::ode::{LinearSystem, Shooting, Tolerance};
use crate::roots::{PolarBox, RootFinder};
use crate::C64;

/// Where a spectral data set came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Computed,
    Loaded,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEntry {
    pub l: usize,
    pub k: usize,
    pub lambda: C64,
    pub beta: C64,
}

/// Eigenvalues and weight numbers `{lambda_{l,k}, beta_{l,k}}`, sorted by
/// `k` then `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    pub n: usize,
    pub entries: Vec<SpectralEntry>,
    pub provenance: Provenance,
}

impl SpectralData {
    /// Builds a data set from records in any order; within each `k` the
    /// index `l` is the rank by modulus.
    pub fn from_unordered(n: usize, records: &[(usize, C64, C64)], provenance: Provenance) -> Self {
        let mut entries = Vec::with_capacity(records.len());
        for k in 1..n {
            let mut track: Vec<(C64, C64)> = records.iter().filter(|r| r.0 == k).map(|r| (r.1, r.2)).collect();
            track.sort_by(|a, b| {
                a.0.norm()
                    .partial_cmp(&b.0.norm())
                    .unwrap()
                    .then(a.0.re.partial_cmp(&b.0.re).unwrap())
                    .then(a.0.im.partial_cmp(&b.0.im).unwrap())
            });
            for (i, (lambda, beta)) in track.into_iter().enumerate() {
                entries.push(SpectralEntry { l: i + 1, k, lambda, beta });
            }
        }
        Self { n, entries, provenance }
    }

    /// Number of indices `l` per problem (the largest `l` present).
    pub fn count(&self) -> usize {
        self.entries.iter().map(|e| e.l).max().unwrap_or(0)
    }

    pub fn get(&self, l: usize, k: usize) -> Option<&SpectralEntry> {
        self.entries.iter().find(|e| e.l == l && e.k == k)
    }

    pub fn lambda(&self, l: usize, k: usize) -> C64 {
        self.get(l, k).map(|e| e.lambda).unwrap_or(C64::new(f64::NAN, f64::NAN))
    }

    pub fn beta(&self, l: usize, k: usize) -> C64 {
        self.get(l, k).map(|e| e.beta).unwrap_or(C64::new(f64::NAN, f64::NAN))
    }

    /// Entries of problem `k` ordered by `l`.
    pub fn track(&self, k: usize) -> Vec<SpectralEntry> {
        let mut t: Vec<SpectralEntry> = self.entries.iter().filter(|e| e.k == k).copied().collect();
        t.sort_by_key(|e| e.l);
        t
    }

    /// Keeps indices `l <= count`.
    pub fn truncated(&self, count: usize) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().filter(|e| e.l <= count).copied().collect(),
            provenance: self.provenance,
        }
    }

    pub fn sort(&mut self) {
        self.entries.sort_by_key(|e| (e.k, e.l));
    }
}

/// Numerical settings for the forward solver.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions {
    pub tol: Tolerance,
    /// Residue circle radius as a fraction of the distance to the nearest
    /// other eigenvalue.
    pub radius_factor: f64,
    pub residue_nodes: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self { tol: Tolerance::default(), radius_factor: 0.25, residue_nodes: 64 }
    }
}

/// `(pi / sin(pi k / n))^n`.
pub fn track_constant(n: usize, k: usize) -> f64 {
    (PI / (PI * k as f64 / n as f64).sin()).powi(n as i32)
}

/// Main asymptotic term `(-1)^{n-k} c_k (l + chi)^n`.
pub fn predicted_eigenvalue(n: usize, k: usize, l: usize, chi: f64) -> C64 {
    let sign = if (n - k).is_multiple_of(2) { 1.0 } else { -1.0 };
    C64::new(sign * track_constant(n, k) * (l as f64 + chi).powi(n as i32), 0.0)
}

/// A value of `M(lambda)`.
#[derive(Clone, Debug)]
pub struct WeylMatrixSample {
    pub lambda: C64,
    /// Row-major `n x n`, unit lower-triangular.
    pub m: Vec<C64>,
}

/// Laurent data of `M` at an eigenvalue and `N = M<0>^{-1} M<-1>`.
#[derive(Clone, Debug)]
pub struct WeightMatrix {
    pub lambda0: C64,
    pub n: Vec<C64>,
    pub residue: Vec<C64>,
    pub constant: Vec<C64>,
    pub radius: f64,
}

impl WeightMatrix {
    pub fn order(&self) -> usize {
        (self.n.len() as f64).sqrt().round() as usize
    }

    /// Largest entry outside the positions `(r+1, r)` for `r` in `pole_cols`
    /// (1-based), relative to the largest entry.
    pub fn structure_violation(&self, pole_cols: &[usize]) -> f64 {
        let n = self.order();
        let norm = self.n.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let mut worst: f64 = 0.0;
        for j in 1..=n {
            for r in 1..=n {
                if j == r + 1 && pole_cols.contains(&r) {
                    continue;
                }
                worst = worst.max(self.n[(j - 1) * n + r - 1].norm() / norm);
            }
        }
        worst
    }
}

/// Forward solver for `F` (direct side) or for `F*` with the parameter entering
/// as `(-1)^n lambda` (dual side).
#[derive(Clone, Debug)]
pub struct ForwardSolver<'a> {
    f: &'a AssociatedMatrix,
    dual: bool,
    pub opts: ForwardOptions,
}

impl<'a> ForwardSolver<'a> {
    pub fn new(f: &'a AssociatedMatrix) -> Self {
        Self { f, dual: false, opts: ForwardOptions::default() }
    }

    /// Solver for `Z' = (G + (-1)^n Lambda) Z`, `G` being the given matrix
    /// (normally `F*`).
    pub fn dual(fstar: &'a AssociatedMatrix) -> Self {
        Self { f: fstar, dual: true, opts: ForwardOptions::default() }
    }

    pub fn with_options(mut self, opts: ForwardOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn order(&self) -> usize {
        self.f.order()
    }

    pub fn matrix(&self) -> &AssociatedMatrix {
        self.f
    }

    pub fn system(&self, lambda: C64) -> LinearSystem<'a> {
        if self.dual {
            LinearSystem::dual(self.f, lambda)
        } else {
            LinearSystem::direct(self.f, lambda)
        }
    }

    pub fn shooting(&self, lambda: C64, extra: &[f64]) -> Result<Shooting> {
        Shooting::new(&self.system(lambda), extra, self.opts.tol)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k >= self.order() {
            return Err(Error::Input(format!("problem index k = {k} outside 1..{}", self.order() - 1)));
        }
        Ok(())
    }

    pub fn char_function_scaled(&self, k: usize, lambda: C64) -> Result<Scaled> {
        self.check_k(k)?;
        Ok(self.shooting(lambda, &[])?.char_det(k))
    }

    pub fn char_function(&self, k: usize, lambda: C64) -> Result<C64> {
        Ok(self.char_function_scaled(k, lambda)?.to_c64())
    }

    /// The first `count` eigenvalues of `L_k` ordered by modulus.
    pub fn eigenvalues(&self, k: usize, count: usize) -> Result<Vec<C64>> {
        self.check_k(k)?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let n = self.order();
        let chi = crate::asymptotics::chi_constants(n)?[k - 1];
        match self.guided_search(k, count, chi)? {
            Some(v) => Ok(v),
            None => self.subdivision_search(k, count, chi),
        }
    }

    /// Eigenvalues by Newton from the positions predicted with a trial track
    /// offset; `None` unless a zero count confirms exactly these roots.
    pub fn eigenvalues_guided(&self, k: usize, count: usize, chi_guess: f64) -> Result<Option<Vec<C64>>> {
        self.check_k(k)?;
        self.guided_search(k, count, chi_guess)
    }

    /// Eigenvalues by exhaustive subdivision of a disk; `chi` only sizes the disk.
    pub fn eigenvalues_unguided(&self, k: usize, count: usize) -> Result<Vec<C64>> {
        self.check_k(k)?;
        self.subdivision_search(k, count, 0.5)
    }

    fn finder(&self, k: usize) -> RootFinder<impl FnMut(C64) -> Result<Scaled> + '_> {
        RootFinder::new(move |z| self.char_function_scaled(k, z), self.order())
    }

    fn guided_search(&self, k: usize, count: usize, chi: f64) -> Result<Option<Vec<C64>>> {
        let n = self.order();
        let sign = if self.dual && n % 2 == 1 { -1.0 } else { 1.0 };
        let mut rf = self.finder(k);
        let mut roots = Vec::with_capacity(count + 1);
        for l in 1..=count + 1 {
            let start = predicted_eigenvalue(n, k, l, chi) * sign;
            match rf.newton(start, 60)? {
                Some(z) => roots.push(z),
                None => return Ok(None),
            }
        }
        if roots.windows(2).any(|w| w[1].norm() <= w[0].norm() * (1.0 + 1e-9)) {
            return Ok(None);
        }
        let rc = 0.5 * (roots[count - 1].norm() + roots[count].norm());
        match rf.count(&PolarBox::disk(rc, 0.3))? {
            Some(c) if c == count => {
                roots.truncate(count);
                Ok(Some(roots))
            }
            _ => Ok(None),
        }
    }

    fn subdivision_search(&self, k: usize, count: usize, chi: f64) -> Result<Vec<C64>> {
        let n = self.order();
        let mut r = track_constant(n, k) * (count as f64 + 1.0 + chi.abs()).powi(n as i32);
        let mut rf = self.finder(k);
        for _ in 0..12 {
            let z = rf.zeros_in(PolarBox::disk(r, 0.3), k)?;
            if z.len() > count {
                return Ok(z.into_iter().take(count).collect());
            }
            r *= 2.0;
        }
        Err(Error::RootSearch { k, detail: format!("fewer than {count} eigenvalues within |lambda| < {r:e}") })
    }

    /// Quasi-derivatives of `Phi_k` at `x = 0`.
    fn weyl_column(&self, sh: &Shooting, k: usize) -> Result<Vec<C64>> {
        Ok(sh.weyl(k)?.swap_remove(0))
    }

    pub fn weyl_matrix(&self, lambda: C64) -> Result<WeylMatrixSample> {
        let n = self.order();
        let sh = self.shooting(lambda, &[])?;
        let mut m = vec![C64::new(0.0, 0.0); n * n];
        for k in 1..=n {
            let col = self.weyl_column(&sh, k)?;
            for j in k..n {
                m[j * n + k - 1] = col[j];
            }
            m[(k - 1) * n + k - 1] = C64::new(1.0, 0.0);
        }
        Ok(WeylMatrixSample { lambda, m })
    }

    /// `M_{k+1,k}(lambda)`.
    pub fn weyl_entry(&self, k: usize, lambda: C64) -> Result<C64> {
        let sh = self.shooting(lambda, &[])?;
        Ok(self.weyl_column(&sh, k)?[k])
    }

    fn circle(&self, lambda0: C64, radius: f64) -> Vec<C64> {
        let m = self.opts.residue_nodes;
        (0..m).map(|j| lambda0 + C64::from_polar(radius, 2.0 * PI * (j as f64 + 0.5) / m as f64)).collect()
    }

    /// `Res M_{k+1,k}` at `lambda0` by trapezoid quadrature on a circle.
    pub fn residue(&self, k: usize, lambda0: C64, radius: f64) -> Result<C64> {
        let pts = self.circle(lambda0, radius);
        let mut s = C64::new(0.0, 0.0);
        for &z in &pts {
            s += self.weyl_entry(k, z)? * (z - lambda0);
        }
        Ok(s / pts.len() as f64)
    }

    pub fn weight_matrix(&self, lambda0: C64, radius: f64) -> Result<WeightMatrix> {
        let n = self.order();
        if !(radius > 1e-12 * lambda0.norm().max(1.0)) {
            return Err(Error::Radius { re: lambda0.re, im: lambda0.im, radius });
        }
        let pts = self.circle(lambda0, radius);
        let mut res = vec![C64::new(0.0, 0.0); n * n];
        let mut cst = vec![C64::new(0.0, 0.0); n * n];
        for &z in &pts {
            let w = self.weyl_matrix(z)?;
            for i in 0..n * n {
                res[i] += w.m[i] * (z - lambda0);
                cst[i] += w.m[i];
            }
        }
        let m = pts.len() as f64;
        res.iter_mut().for_each(|v| *v /= m);
        cst.iter_mut().for_each(|v| *v /= m);
        let nmat = matmul(&dense_inverse(&cst, n)?, &res, n, n, n);
        Ok(WeightMatrix { lambda0, n: nmat, residue: res, constant: cst, radius })
    }

    /// Weight numbers for given eigenvalues (`eigen[k-1]` lists problem `k`).
    pub fn weight_numbers(&self, eigen: &[Vec<C64>]) -> Result<SpectralData> {
        let n = self.order();
        let mut entries = Vec::new();
        for (ki, track) in eigen.iter().enumerate() {
            let k = ki + 1;
            for (li, &lam) in track.iter().enumerate() {
                let gap = track
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != li)
                    .map(|(_, &mu)| (mu - lam).norm())
                    .fold(f64::INFINITY, f64::min);
                let gap = if gap.is_finite() { gap } else { lam.norm().max(1.0) };
                let beta = self.residue(k, lam, self.opts.radius_factor * gap)?;
                if beta.norm() < 1e-10 * lam.norm().max(1.0) {
                    return Err(Error::DegenerateWeight { l: li + 1, k });
                }
                entries.push(SpectralEntry { l: li + 1, k, lambda: lam, beta });
            }
        }
        Ok(SpectralData { n, entries, provenance: Provenance::Computed })
    }

    /// Eigenvalues and weight numbers for `l <= count` and all `k`.
    pub fn spectral_data(&self, count: usize) -> Result<SpectralData> {
        let n = self.order();
        let eigen: Vec<Vec<C64>> = (1..n).map(|k| self.eigenvalues(k, count)).collect::<Result<_>>()?;
        self.weight_numbers(&eigen)
    }
}

/// `Delta_{k,k}(lambda)` for `F`.
pub fn char_function(f: &AssociatedMatrix, k: usize, lambda: C64) -> Result<C64> {
    ForwardSolver::new(f).char_function(k, lambda)
}

pub fn find_eigenvalues(f: &AssociatedMatrix, k: usize, count: usize) -> Result<Vec<C64>> {
    ForwardSolver::new(f).eigenvalues(k, count)
}

pub fn weyl_matrix(f: &AssociatedMatrix, lambda: C64) -> Result<WeylMatrixSample> {
    ForwardSolver::new(f).weyl_matrix(lambda)
}

/// Weight matrix at an eigenvalue, with the circle radius taken from the
/// distance to the nearest eigenvalue in `others` that does not coincide with
/// `lambda0`; the structure is checked against the columns in `pole_cols`.
pub fn weight_matrix(f: &AssociatedMatrix, lambda0: C64, others: &[C64], pole_cols: &[usize]) -> Result<WeightMatrix> {
    let solver = ForwardSolver::new(f);
    let scale = lambda0.norm().max(1.0);
    let gap =
        others.iter().map(|&mu| (mu - lambda0).norm()).filter(|&d| d > 1e-8 * scale).fold(f64::INFINITY, f64::min);
    let gap = if gap.is_finite() { gap } else { scale };
    let w = solver.weight_matrix(lambda0, solver.opts.radius_factor * gap)?;
    let ratio = w.structure_violation(pole_cols);
    if ratio > 1e-8 {
        return Err(Error::Structure { re: lambda0.re, im: lambda0.im, ratio });
    }
    Ok(w)
}

pub fn weight_numbers(f: &AssociatedMatrix, eigen: &[Vec<C64>]) -> Result<SpectralData> {
    ForwardSolver::new(f).weight_numbers(eigen)
}

/// The matrix `J = [(-1)^j delta_{j, n-k+1}]` (row-major).
pub fn duality_j(n: usize) -> Vec<C64> {
    let mut j = vec![C64::new(0.0, 0.0); n * n];
    for r in 1..=n {
        let c = n - r + 1;
        j[(r - 1) * n + c - 1] = C64::new(if r % 2 == 0 { 1.0 } else { -1.0 }, 0.0);
    }
    j
}

/// `|| M*(lambda)^T - J M(lambda)^{-1} J^{-1} ||_max`.
pub fn duality_defect(f: &AssociatedMatrix, lambda: C64) -> Result<f64> {
    let n = f.order();
    let fstar = f.star();
    let m = ForwardSolver::new(f).weyl_matrix(lambda)?.m;
    let ms = ForwardSolver::dual(&fstar).weyl_matrix(lambda)?.m;
    let j = duality_j(n);
    let rhs = matmul(&matmul(&j, &dense_inverse(&m, n)?, n, n, n), &dense_inverse(&j, n)?, n, n, n);
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            worst = worst.max((ms[c * n + r] - rhs[r * n + c]).norm());
        }
    }
    Ok(worst)
}
