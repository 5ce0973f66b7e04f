//! Asymptotic constants of eigenvalues and weight numbers: the track offsets
//! `chi_k`, least-squares tail fits for `n = 2, 3, 4` and remainder
//! diagnostics.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::assoc::AssociatedMatrix;
use crate::coefficients::AsymptoticParameters;
use crate::error::{Error, Result};
use crate::forward::{ForwardSolver, SpectralData};
use crate::C64;

/// Eigenvalues of the free matrix used for `chi_k`.
const CHI_COUNT: usize = 8;

/// `(sin(pi k / n) / pi) ((-1)^{n-k} lambda)^{1/n} - l`.
pub fn track_offset(n: usize, k: usize, l: usize, lambda: C64) -> C64 {
    let sign = if (n - k).is_multiple_of(2) { 1.0 } else { -1.0 };
    let root = (lambda * sign).powf(1.0 / n as f64);
    root * ((PI * k as f64 / n as f64).sin() / PI) - l as f64
}

/// `chi_k`, `k = 1..n-1`, from the eigenvalues of the free matrix.
pub fn chi_constants(n: usize) -> Result<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Vec<f64>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&n) {
        return Ok(v.clone());
    }
    if n < 2 {
        return Err(Error::UnsupportedOrder(n));
    }
    let f0 = AssociatedMatrix::zero(n);
    let solver = ForwardSolver::new(&f0);
    let mut chi = Vec::with_capacity(n - 1);
    for k in 1..n {
        let mut guided = None;
        for guess in [0.25, 0.5, 0.0, 0.75] {
            guided = solver.eigenvalues_guided(k, CHI_COUNT, guess)?;
            if guided.is_some() {
                break;
            }
        }
        let ev = match guided {
            Some(v) => v,
            None => solver.eigenvalues_unguided(k, CHI_COUNT)?,
        };
        let ls: Vec<usize> = (3..=CHI_COUNT).collect();
        let ys: Vec<C64> = ls.iter().map(|&l| track_offset(n, k, l, ev[l - 1])).collect();
        let (c, resid) = fit(&ls, &ys, &|l| vec![1.0, 1.0 / l, 1.0 / (l * l)])?;
        if resid > 1e-3 {
            return Err(Error::Fit(format!("track offset for k = {k} does not settle (residual {resid:e})")));
        }
        chi.push(c[0].re);
    }
    cache.lock().unwrap().insert(n, chi.clone());
    Ok(chi)
}

/// Least squares `y_l ~ sum c_j basis(l)_j`; returns the coefficients and the
/// RMS residual.
fn fit(ls: &[usize], ys: &[C64], basis: &dyn Fn(f64) -> Vec<f64>) -> Result<(Vec<C64>, f64)> {
    let m = basis(1.0).len();
    if ls.len() < m + 1 {
        return Err(Error::Fit(format!("need at least {} indices for the tail fit, have {}", m + 1, ls.len())));
    }
    let rows: Vec<Vec<f64>> = ls.iter().map(|&l| basis(l as f64)).collect();
    // column scaling keeps the normal matrix well conditioned
    let scales: Vec<f64> = (0..m).map(|j| rows.iter().map(|r| r[j].abs()).fold(0.0, f64::max).max(1e-300)).collect();
    let a = DMatrix::from_fn(ls.len(), m, |i, j| C64::new(rows[i][j] / scales[j], 0.0));
    let b = DVector::from_column_slice(ys);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-14).map_err(|e| Error::Fit(e.to_string()))?;
    let r = &a * &x - &b;
    let rms = (r.iter().map(|v| v.norm_sqr()).sum::<f64>() / ls.len() as f64).sqrt();
    let coeffs: Vec<C64> = x.iter().zip(&scales).map(|(v, s)| v / *s).collect();
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Fit("non-finite fit coefficients".into()));
    }
    Ok((coeffs, rms))
}

/// Tail indices used by the fits: the upper two thirds of the range.
fn tail(count: usize) -> Vec<usize> {
    let start = (count / 3).max(2);
    (start..=count).collect()
}

/// Fits the leading coefficient on the full tail and on its upper half and
/// rejects the fit when they disagree.
fn stable_fit(
    name: &str,
    ls: &[usize],
    ys: &[C64],
    basis: &dyn Fn(f64) -> Vec<f64>,
    residuals: &mut Vec<(String, f64)>,
) -> Result<Vec<C64>> {
    let (c, rms) = fit(ls, ys, basis)?;
    residuals.push((format!("{name}-rms"), rms));
    let half = ls.len() / 2;
    let m = basis(1.0).len();
    if ls.len() - half > m {
        let (c2, _) = fit(&ls[half..], &ys[half..], basis)?;
        let drift = (c2[0] - c[0]).norm();
        residuals.push((format!("{name}-drift"), drift));
        if drift > 0.25 * (1.0 + c[0].norm()) || !drift.is_finite() {
            return Err(Error::Fit(format!("{name}: tail fits disagree by {drift:e}")));
        }
    }
    Ok(c)
}

/// Constants of the eigenvalue and weight asymptotics estimated from data.
pub fn fit_asymptotics(data: &SpectralData) -> Result<AsymptoticParameters> {
    let n = data.n;
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    let count = data.count();
    if count < 6 {
        return Err(Error::Fit(format!("need at least 6 indices per problem, have {count}")));
    }
    let ls = tail(count);
    let mut residuals = Vec::new();
    let mut chi = Vec::with_capacity(n - 1);
    for k in 1..n {
        let ys: Vec<C64> = ls.iter().map(|&l| track_offset(n, k, l, data.lambda(l, k))).collect();
        let c = stable_fit(&format!("chi{k}"), &ls, &ys, &|l| vec![1.0, 1.0 / l, 1.0 / (l * l)], &mut residuals)?;
        chi.push(c[0].re);
    }
    let mut params =
        AsymptoticParameters { n, chi, theta: None, t0: None, t1: None, sigma_int: None, residuals: Vec::new() };
    match n {
        3 => {
            let mut acc = C64::new(0.0, 0.0);
            for k in 1..=2 {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                let ys: Vec<C64> = ls
                    .iter()
                    .map(|&l| {
                        (data.lambda(l, k) * sign).powf(1.0 / 3.0) * (3f64.sqrt() / (2.0 * PI)) - (l as f64 + 1.0 / 6.0)
                    })
                    .collect();
                let c = stable_fit(
                    &format!("theta-k{k}"),
                    &ls,
                    &ys,
                    &|l| vec![1.0, 1.0 / l, 1.0 / (l * l)],
                    &mut residuals,
                )?;
                // a mean `s` of tau_1 moves the scaled root by `-s / (2 pi^2 l)`
                acc += -c[1] * (2.0 * PI * PI);
            }
            params.sigma_int = Some(acc / 2.0);
        }
        4 => {
            let a = |l: f64| PI * l + PI / 2.0;
            let ys: Vec<C64> = ls.iter().map(|&l| data.lambda(l, 2) - a(l as f64).powi(4)).collect();
            let c = stable_fit("theta", &ls, &ys, &|l| vec![a(l).powi(2), a(l), 1.0, 1.0 / a(l)], &mut residuals)?;
            let theta = -c[0].re;
            let s = c[1].re;
            let yb: Vec<C64> = ls.iter().map(|&l| -data.beta(l, 2) / (data.lambda(l, 2) * 4.0) - 1.0).collect();
            let cb = stable_fit(
                "t0",
                &ls,
                &yb,
                &|l| vec![(PI * l).powi(-2), (PI * l).powi(-3), (PI * l).powi(-4)],
                &mut residuals,
            )?;
            let t0 = 4.0 * cb[0].re - 2.0 * theta;
            let ysig: Vec<C64> = ls
                .iter()
                .map(|&l| (data.lambda(l, 3) - data.lambda(l, 1)) / (8.0 * (PI * l as f64 + PI / 4.0)))
                .collect();
            let cs = stable_fit("sigma", &ls, &ysig, &|l| vec![1.0, 1.0 / l, 1.0 / (l * l)], &mut residuals)?;
            params.theta = Some(theta);
            params.t0 = Some(t0);
            params.t1 = Some(s - t0);
            params.sigma_int = Some(cs[0]);
        }
        _ => {}
    }
    params.residuals = residuals;
    Ok(params)
}

/// Remainders `kappa_{l,k} = offset - chi_k` and `kappa0 = -beta / (n lambda) - 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Remainder {
    pub l: usize,
    pub k: usize,
    pub kappa: C64,
    pub kappa0: C64,
}

pub fn remainders(data: &SpectralData) -> Result<Vec<Remainder>> {
    let n = data.n;
    let chi = chi_constants(n)?;
    Ok(data
        .entries
        .iter()
        .map(|e| Remainder {
            l: e.l,
            k: e.k,
            kappa: track_offset(n, e.k, e.l, e.lambda) - chi[e.k - 1],
            kappa0: -e.beta / (e.lambda * n as f64) - 1.0,
        })
        .collect())
}
