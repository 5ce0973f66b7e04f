//! Command-line front end: argument parsing, run configuration and the
//! five commands. Outputs are written only after a command succeeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::asymptotics::{fit_asymptotics, remainders};
use crate::coefficients::{AsymptoticParameters, CoefficientSet};
use crate::error::{Error, Result};
use crate::forward::{ForwardOptions, ForwardSolver, Provenance, SpectralData};
use crate::io::{self, fmt_f64};
use crate::main_eq::MainOptions;
use crate::ode::Tolerance;
use crate::recover::{coefficient_distance, solve_inverse, InverseOptions};
use crate::validate::validate_spectral_data;
use crate::AssociatedMatrix;

/// Environment variable holding the log filter, e.g. `HOSPEC_LOG=debug`.
pub const LOG_ENV: &str = "HOSPEC_LOG";

#[derive(Parser, Debug)]
#[command(name = "hospec", version, about = "Forward and inverse spectral problems for higher-order operators")]
pub struct Cli {
    #[command(flatten)]
    pub numerics: NumericArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct NumericArgs {
    /// Chebyshev grid size for the inverse solve (2^m + 1, at least 33).
    #[arg(long, global = true, default_value_t = 129)]
    pub grid: usize,
    /// Relative tolerance of the integrator.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub rtol: f64,
    /// Absolute tolerance of the integrator.
    #[arg(long, global = true, default_value_t = 1e-14)]
    pub atol: f64,
    /// Residue circle radius as a fraction of the distance to the nearest eigenvalue.
    #[arg(long, global = true, default_value_t = 0.25)]
    pub radius_factor: f64,
    /// Smallest singular value of `I - R` accepted before the solvability alarm.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub alarm: f64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Eigenvalues and weight numbers of a coefficient file.
    Forward {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Eigenvalues per problem.
        #[arg(long = "L", default_value_t = 10)]
        count: usize,
        /// Remainder CSV; defaults to `<out>.kappa.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Recover coefficients from spectral data and a model coefficient file.
    Inverse {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use only the first `L` indices of the data.
        #[arg(long = "L")]
        count: Option<usize>,
        /// Continue when validation fails.
        #[arg(long)]
        force: bool,
        /// Shift the model `tau_0` by this constant.
        #[arg(long)]
        perturb_model: Option<f64>,
        /// Diagnostics CSV; defaults to `<out>.diag.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check spectral data against model spectral data.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Fit the asymptotic constants of spectral data.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward then inverse for a coefficient file.
    Roundtrip {
        #[arg(long)]
        coeffs: PathBuf,
        /// `l=1,lambda=0.05,beta=0.1`: perturb row `l` of the data by the
        /// given relative amounts and invert against the file itself.
        #[arg(long)]
        perturb: Option<String>,
        #[arg(long = "L", default_value_t = 20)]
        count: usize,
        /// Write the recovered coefficients here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Checked numerical settings shared by all commands.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub grid_size: usize,
    pub tol: Tolerance,
    pub radius_factor: f64,
    pub alarm: f64,
}

impl RunConfig {
    pub fn from_args(a: &NumericArgs) -> Result<Self> {
        if a.grid < 33 || !(a.grid - 1).is_power_of_two() {
            return Err(Error::Input(format!("grid size {} is not of the form 2^m + 1 with m >= 5", a.grid)));
        }
        for (name, v) in [("rtol", a.rtol), ("atol", a.atol), ("radius-factor", a.radius_factor)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Input(format!("{name} must be positive, got {v}")));
            }
        }
        if !(a.alarm >= 0.0) {
            return Err(Error::Input(format!("alarm must be nonnegative, got {}", a.alarm)));
        }
        Ok(Self {
            grid_size: a.grid,
            tol: Tolerance { rtol: a.rtol, atol: a.atol },
            radius_factor: a.radius_factor,
            alarm: a.alarm,
        })
    }

    pub fn forward_options(&self) -> ForwardOptions {
        ForwardOptions { tol: self.tol, radius_factor: self.radius_factor, ..ForwardOptions::default() }
    }

    pub fn inverse_options(&self, force: bool) -> InverseOptions {
        InverseOptions {
            main: MainOptions { grid_size: self.grid_size, tol: self.tol, alarm: self.alarm, ..MainOptions::default() },
            force,
            ..InverseOptions::default()
        }
    }
}

fn check_count(count: usize) -> Result<usize> {
    if count == 0 {
        return Err(Error::Input("L must be at least 1".into()));
    }
    Ok(count)
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn forward_data(coeffs: &CoefficientSet, count: usize, cfg: &RunConfig) -> Result<SpectralData> {
    let f = AssociatedMatrix::from_coefficients(coeffs)?;
    ForwardSolver::new(&f).with_options(cfg.forward_options()).spectral_data(count)
}

pub fn remainder_csv(data: &SpectralData) -> Result<String> {
    let rows: Vec<Vec<String>> = remainders(data)?
        .iter()
        .map(|r| {
            vec![
                r.l.to_string(),
                r.k.to_string(),
                fmt_f64(r.kappa.re),
                fmt_f64(r.kappa.im),
                fmt_f64(r.kappa0.re),
                fmt_f64(r.kappa0.im),
            ]
        })
        .collect();
    Ok(io::csv(&["l", "k", "kappa_re", "kappa_im", "kappa0_re", "kappa0_im"], &rows))
}

pub fn format_parameters(p: &AsymptoticParameters) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n = {}", p.n);
    for (k, c) in p.chi.iter().enumerate() {
        let _ = writeln!(out, "chi{} = {}", k + 1, fmt_f64(*c));
    }
    for (name, v) in [("theta", p.theta), ("t0", p.t0), ("t1", p.t1)] {
        if let Some(v) = v {
            let _ = writeln!(out, "{name} = {}", fmt_f64(v));
        }
    }
    if let Some(s) = p.sigma_int {
        let _ = writeln!(out, "sigma = {} {}", fmt_f64(s.re), fmt_f64(s.im));
    }
    for (name, r) in &p.residuals {
        let _ = writeln!(out, "residual.{name} = {}", fmt_f64(*r));
    }
    out
}

/// Relative perturbation of one row of spectral data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub l: usize,
    pub lambda: f64,
    pub beta: f64,
}

impl std::str::FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Perturbation { l: 1, lambda: 0.0, beta: 0.0 };
        for part in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Input(format!("bad perturbation item {part:?}")))?;
            let bad = || Error::Input(format!("bad value in perturbation item {part:?}"));
            match k.trim() {
                "l" => p.l = v.trim().parse().map_err(|_| bad())?,
                "lambda" => p.lambda = v.trim().parse().map_err(|_| bad())?,
                "beta" => p.beta = v.trim().parse().map_err(|_| bad())?,
                other => return Err(Error::Input(format!("unknown perturbation key {other:?}"))),
            }
        }
        if p.l == 0 {
            return Err(Error::Input("perturbation row l must be at least 1".into()));
        }
        Ok(p)
    }
}

impl Perturbation {
    pub fn apply(&self, data: &SpectralData) -> SpectralData {
        let mut d = data.clone();
        for e in d.entries.iter_mut().filter(|e| e.l == self.l) {
            e.lambda *= 1.0 + self.lambda;
            e.beta *= 1.0 + self.beta;
        }
        d.provenance = Provenance::Loaded;
        d
    }
}

/// Runs one command; the returned text goes to standard output.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = RunConfig::from_args(&cli.numerics)?;
    match &cli.command {
        Command::Forward { coeffs, out, count, csv } => {
            let c = io::load_coefficients(coeffs)?;
            let data = forward_data(&c, check_count(*count)?, &cfg)?;
            let table = remainder_csv(&data)?;
            io::save_spectral(out, &data)?;
            io::write_text(&csv.clone().unwrap_or_else(|| with_suffix(out, ".kappa.csv")), &table)?;
            Ok(format!("wrote {} eigenvalues per problem for n = {} to {}\n", data.count(), data.n, out.display()))
        }
        Command::Inverse { data, model, out, count, force, perturb_model, csv } => {
            let mut d = io::load_spectral(data)?;
            if let Some(l) = count {
                d = d.truncated(check_count(*l)?);
            }
            let mut m = io::load_coefficients(model)?;
            if let Some(eps) = perturb_model {
                m = m.shifted_tau0(*eps);
            }
            let res = solve_inverse(&d, &m, &cfg.inverse_options(*force))?;
            let mut msg = format!("{}\n", res.report);
            let smin = res.sigma_min.iter().copied().fold(f64::INFINITY, f64::min);
            let _ = writeln!(msg, "smallest singular value {smin:e}");
            let _ = writeln!(msg, "probe dependence {:e}", res.lambda_dependence);
            let _ = writeln!(msg, "self-adjoint defect {:e}", res.coefficients.selfadjoint_defect());
            io::save_coefficients(out, &res.coefficients)?;
            io::write_text(&csv.clone().unwrap_or_else(|| with_suffix(out, ".diag.csv")), &res.diagnostics_csv())?;
            Ok(msg)
        }
        Command::Validate { data, model } => {
            let d = io::load_spectral(data)?;
            let m = io::load_spectral(model)?;
            let report = validate_spectral_data(&d, &m);
            if report.overall_pass() {
                Ok(format!("{report}\n"))
            } else {
                eprintln!("{report}");
                Err(Error::Validation(report.failed()))
            }
        }
        Command::Fit { data, out } => {
            let d = io::load_spectral(data)?;
            let p = fit_asymptotics(&d)?;
            let text = format_parameters(&p);
            io::write_text(out, &text)?;
            Ok(text)
        }
        Command::Roundtrip { coeffs, perturb, count, out } => {
            let c = io::load_coefficients(coeffs)?;
            let count = check_count(*count)?;
            let data = forward_data(&c, count, &cfg)?;
            info!("forward done, {} entries", data.entries.len());
            let mut msg = String::new();
            let recovered = match perturb {
                None => {
                    let zero = CoefficientSet::zero(c.order())?;
                    let res = solve_inverse(&data, &zero, &cfg.inverse_options(true))?;
                    let err = coefficient_distance(&res.coefficients, &c, 0.05, 0.95, 400);
                    let _ = writeln!(msg, "uniform error on [0.05, 0.95]: {err:e}");
                    res.coefficients
                }
                Some(spec) => {
                    let p: Perturbation = spec.parse()?;
                    let target = p.apply(&data);
                    let res = solve_inverse(&target, &c, &cfg.inverse_options(false))?;
                    let back = forward_data(&res.coefficients, p.l.max(2).min(count), &cfg)?;
                    let mut worst = 0.0_f64;
                    for e in &back.entries {
                        if let Some(t) = target.get(e.l, e.k) {
                            worst = worst.max((e.lambda - t.lambda).norm() / t.lambda.norm());
                            worst = worst.max((e.beta - t.beta).norm() / t.beta.norm());
                        }
                    }
                    let _ = writeln!(msg, "largest relative data mismatch after recovery: {worst:e}");
                    res.coefficients
                }
            };
            let _ = writeln!(msg, "self-adjoint defect {:e}", recovered.selfadjoint_defect());
            if let Some(p) = out {
                io::save_coefficients(p, &recovered)?;
            }
            Ok(msg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numerics(grid: usize) -> NumericArgs {
        NumericArgs { grid, rtol: 1e-12, atol: 1e-14, radius_factor: 0.25, alarm: 1e-10 }
    }

    #[test]
    fn grid_size_must_be_dyadic_plus_one() {
        assert!(RunConfig::from_args(&numerics(33)).is_ok());
        assert!(RunConfig::from_args(&numerics(257)).is_ok());
        for bad in [17, 64, 100, 130] {
            assert!(matches!(RunConfig::from_args(&numerics(bad)), Err(Error::Input(_))), "{bad}");
        }
        let mut a = numerics(65);
        a.rtol = 0.0;
        assert!(RunConfig::from_args(&a).is_err());
    }

    #[test]
    fn perturbation_spec() {
        let p: Perturbation = "l=2, lambda=0.05,beta=-0.1".parse().unwrap();
        assert_eq!(p, Perturbation { l: 2, lambda: 0.05, beta: -0.1 });
        assert!("l=0".parse::<Perturbation>().is_err());
        assert!("gamma=1".parse::<Perturbation>().is_err());
        assert!("lambda".parse::<Perturbation>().is_err());
    }

    #[test]
    fn parses_commands() {
        let cli = Cli::try_parse_from([
            "hospec", "inverse", "--data", "d", "--model", "m", "--out", "o", "--force", "--L", "7",
        ])
        .unwrap();
        match cli.command {
            Command::Inverse { force, count, .. } => {
                assert!(force);
                assert_eq!(count, Some(7));
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["hospec", "forward", "--coeffs", "c"]).is_err());
    }
}
