//! Coefficient recovery from reconstructed Weyl solutions and the full
//! inverse pipeline: validate, solve the main equation on the grid,
//! reconstruct, recover.

use crate::assoc::AssociatedMatrix;
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::forward::{ForwardSolver, SpectralData};
use crate::grid::ChebGrid;
use crate::linalg::dense_solve;
use crate::main_eq::{MainEquation, MainOptions, NodeSolution, WeylReconstruction};
use crate::validate::{validate_with, ValidationOptions, ValidationReport};
use crate::C64;

/// `p_0 .. p_{n-1}` of `y^(n) + sum p_s y^(s) = lambda y` at every node,
/// from the Wronskian of the reconstructed Weyl solutions.
pub fn expanded_from_weyl(rec: &WeylReconstruction) -> Result<Vec<Vec<C64>>> {
    let n = rec.values.first().map(|v| v.len()).ok_or_else(|| Error::Input("empty reconstruction".into()))?;
    rec.values
        .iter()
        .map(|cols| {
            let mut a = Vec::with_capacity(n * n);
            let mut b = Vec::with_capacity(n);
            for c in cols {
                a.extend_from_slice(&c[..n]);
                b.push(rec.lambda * c[0] - c[n]);
            }
            dense_solve(&a, &b, n)
        })
        .collect()
}

/// Antiderivative of `tau_0` for `n = 2` from the Riccati form: with
/// `m = y'/y` for the solution `y(0) = 1, y'(0) = 0`,
/// `int_0^x tau_0 = lambda x - m(x) - int_0^x m^2`.
fn riccati_antiderivative(rec: &WeylReconstruction, grid: &ChebGrid) -> Result<Vec<C64>> {
    let d0 = rec.values[0][0][1];
    let mut m = Vec::with_capacity(rec.values.len());
    for cols in &rec.values {
        let y = cols[0][0] - d0 * cols[1][0];
        let dy = cols[0][1] - d0 * cols[1][1];
        if y.norm() < 1e-8 {
            return Err(Error::Singular { pivot: y.norm() });
        }
        m.push(dy / y);
    }
    let sq: Vec<C64> = m.iter().map(|v| v * v).collect();
    let int_sq = grid.cumulative(&sq);
    Ok(rec.nodes.iter().zip(m.iter().zip(&int_sq)).map(|(&x, (mi, si))| rec.lambda * x - mi + m[0] - si).collect())
}

/// Coefficients `tau_nu` from a reconstruction, `n = 2, 3, 4`.
pub fn recover_coefficients(rec: &WeylReconstruction, grid: &ChebGrid) -> Result<CoefficientSet> {
    let n = rec.values.first().map(|v| v.len()).unwrap_or(0);
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    if n == 2 {
        let anti = riccati_antiderivative(rec, grid)?;
        return CoefficientSet::new(2, grid.interpolate(&anti)?, Vec::new());
    }
    let p = expanded_from_weyl(rec)?;
    let col = |s: usize| -> Vec<C64> { p.iter().map(|row| row[s]).collect() };
    let int_p0 = grid.cumulative(&col(0));
    let (tau1, higher) = if n == 3 {
        let t1: Vec<C64> = col(1).iter().map(|v| v / 2.0).collect();
        (t1.clone(), vec![grid.interpolate(&t1)?])
    } else {
        let tau2 = grid.interpolate(&col(2))?;
        let dtau2 = tau2.derivative();
        let t1: Vec<C64> = col(1).iter().zip(&rec.nodes).map(|(v, &x)| (v - dtau2.eval(x)) / 2.0).collect();
        (t1.clone(), vec![grid.interpolate(&t1)?, tau2])
    };
    let anti: Vec<C64> = int_p0.iter().zip(&tau1).map(|(i, t)| i - (t - tau1[0])).collect();
    CoefficientSet::new(n, grid.interpolate(&anti)?, higher)
}

/// Largest difference of two coefficient sets sampled on `[a, b]`.
pub fn coefficient_distance(c1: &CoefficientSet, c2: &CoefficientSet, a: f64, b: f64, samples: usize) -> f64 {
    let n = c1.order();
    let mut worst = 0.0_f64;
    for s in 0..=samples {
        let x = a + (b - a) * s as f64 / samples as f64;
        worst = worst.max((c1.tau0_antiderivative().eval(x) - c2.tau0_antiderivative().eval(x)).norm());
        for nu in 1..=n.saturating_sub(2) {
            worst = worst.max((c1.tau(nu).eval(x) - c2.tau(nu).eval(x)).norm());
        }
    }
    worst
}

/// Settings of the inverse pipeline.
#[derive(Clone, Debug)]
pub struct InverseOptions {
    pub main: MainOptions,
    pub validation: ValidationOptions,
    /// Run even when validation fails.
    pub force: bool,
    /// Regular points at which the Weyl solutions are reconstructed; the
    /// first is used, the second checks independence of `lambda`.
    pub probes: [C64; 2],
    /// Largest admissible difference between the two recoveries.
    pub consistency_tol: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self {
            main: MainOptions::default(),
            validation: ValidationOptions::default(),
            force: false,
            probes: [C64::new(0.0, 1.0), C64::new(-0.5, 2.0)],
            consistency_tol: 1e-2,
        }
    }
}

/// Outcome of the inverse pipeline.
#[derive(Clone, Debug)]
pub struct InverseResult {
    pub coefficients: CoefficientSet,
    pub report: ValidationReport,
    pub nodes: Vec<f64>,
    pub sigma_min: Vec<f64>,
    pub residual: Vec<f64>,
    /// Difference between the recoveries at the two probe points.
    pub lambda_dependence: f64,
    pub solutions: Vec<NodeSolution>,
}

impl InverseResult {
    /// CSV `x,sigma_min,residual`.
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("x,sigma_min,residual\n");
        for ((x, sm), r) in self.nodes.iter().zip(&self.sigma_min).zip(&self.residual) {
            s.push_str(&format!("{},{},{}\n", crate::io::fmt_f64(*x), crate::io::fmt_f64(*sm), crate::io::fmt_f64(*r)));
        }
        s
    }
}

/// Model spectral data with the same count as `data`.
pub fn model_spectral_data(model: &AssociatedMatrix, count: usize) -> Result<SpectralData> {
    ForwardSolver::new(model).spectral_data(count)
}

/// Validate, solve on the grid, reconstruct and recover.
pub fn solve_inverse(data: &SpectralData, model: &CoefficientSet, opts: &InverseOptions) -> Result<InverseResult> {
    if model.order() != data.n {
        return Err(Error::Input(format!("model has order {}, data n = {}", model.order(), data.n)));
    }
    let f = AssociatedMatrix::from_coefficients(model)?;
    let model_data = model_spectral_data(&f, data.count())?;
    solve_inverse_with_model_data(data, &f, &model_data, opts)
}

pub fn solve_inverse_with_model_data(
    data: &SpectralData,
    model: &AssociatedMatrix,
    model_data: &SpectralData,
    opts: &InverseOptions,
) -> Result<InverseResult> {
    let report = validate_with(data, model_data, &opts.validation);
    if !report.overall_pass() && !opts.force {
        return Err(Error::Validation(report.failed()));
    }
    let mut eq = MainEquation::new(model, data, model_data, &opts.main)?;
    let solutions = eq.solve_all()?;
    let grid = eq.cache().grid().clone();
    let rec = eq.reconstruct_weyl(&solutions, opts.probes[0])?;
    let coefficients = recover_coefficients(&rec, &grid)?;
    let rec2 = eq.reconstruct_weyl(&solutions, opts.probes[1])?;
    let second = recover_coefficients(&rec2, &grid)?;
    let lambda_dependence = coefficient_distance(&coefficients, &second, 0.0, 1.0, 200);
    if !(lambda_dependence <= opts.consistency_tol) {
        return Err(Error::Inconsistent(format!("recoveries at the two probe points differ by {lambda_dependence:e}")));
    }
    Ok(InverseResult {
        coefficients,
        report,
        nodes: grid.nodes().to_vec(),
        sigma_min: solutions.iter().map(|s| s.sigma_min).collect(),
        residual: solutions.iter().map(|s| s.residual).collect(),
        lambda_dependence,
        solutions,
    })
}
