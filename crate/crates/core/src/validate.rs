//! Checks that spectral data are admissible input for the main equation:
//! separated eigenvalues, symmetry, signs of the weights, no overlap with the
//! model and a flat l2 tail.

use std::fmt;

use crate::asymptotics::fit_asymptotics;
use crate::forward::SpectralData;
use crate::main_eq::xi_weights;
use crate::C64;

pub const A1: &str = "A-1";
pub const A2: &str = "A-2";
pub const SYMMETRY: &str = "symmetry";
pub const SIGN_CONDITION: &str = "sign-condition";
pub const BETA_NONZERO: &str = "beta-nonzero";
pub const NON_OVERLAP: &str = "non-overlap";
pub const L2_TAIL: &str = "l2-tail";

/// Thresholds of the individual checks. Distances are relative:
/// `|a - b| / max(|a|, |b|, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct ValidationOptions {
    pub distinct_rtol: f64,
    pub symmetry_rtol: f64,
    pub overlap_rtol: f64,
    /// `|beta| / max(|lambda|, 1)` below this counts as zero.
    pub beta_rtol: f64,
    /// Largest admissible share of the partial sum of `(l^{n-2} xi_l)^2`
    /// gained over the last third of the range.
    pub l2_flatness: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { distinct_rtol: 1e-8, symmetry_rtol: 1e-7, overlap_rtol: 1e-9, beta_rtol: 1e-12, l2_flatness: 0.1 }
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// The quantity compared against the threshold.
    pub evidence: f64,
    /// Offending `(l, k)` indices.
    pub offenders: Vec<(usize, usize)>,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<15} {} evidence={:.3e}", self.name, if self.passed { "pass" } else { "FAIL" }, self.evidence)?;
        if !self.offenders.is_empty() {
            let shown: Vec<String> = self.offenders.iter().take(8).map(|(l, k)| format!("({l},{k})")).collect();
            write!(f, " at {}", shown.join(" "))?;
            if self.offenders.len() > 8 {
                write!(f, " +{} more", self.offenders.len() - 8)?;
            }
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Residuals of the asymptotic tail fits when they could be run.
    pub fit_residuals: Option<Vec<(String, f64)>>,
    /// Partial sums of `(l^{n-2} xi_l)^2`.
    pub l2_partial_sums: Vec<f64>,
}

impl ValidationReport {
    pub fn overall_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.to_string()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        if let Some(r) = &self.fit_residuals {
            for (name, v) in r {
                writeln!(f, "fit {name} = {v:.3e}")?;
            }
        }
        write!(f, "overall: {}", if self.overall_pass() { "pass" } else { "FAIL" })
    }
}

fn rel_dist(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

fn check(
    name: &'static str,
    passed: bool,
    evidence: f64,
    offenders: Vec<(usize, usize)>,
    detail: impl Into<String>,
) -> Check {
    Check { name, passed, evidence, offenders, detail: detail.into() }
}

fn check_distinct(data: &SpectralData, opts: &ValidationOptions) -> Check {
    let mut worst = f64::INFINITY;
    let mut offenders = Vec::new();
    for k in 1..data.n {
        let t = data.track(k);
        for (i, a) in t.iter().enumerate() {
            for b in &t[i + 1..] {
                let d = rel_dist(a.lambda, b.lambda);
                worst = worst.min(d);
                if d <= opts.distinct_rtol {
                    offenders.push((b.l, k));
                }
            }
        }
    }
    check(A1, offenders.is_empty(), worst, offenders, "smallest relative gap within a problem")
}

fn check_separated(data: &SpectralData, opts: &ValidationOptions) -> Check {
    let mut worst = f64::INFINITY;
    let mut offenders = Vec::new();
    for k in 1..data.n.saturating_sub(1) {
        let next = data.track(k + 1);
        for a in data.track(k) {
            for b in &next {
                let d = rel_dist(a.lambda, b.lambda);
                worst = worst.min(d);
                if d <= opts.distinct_rtol {
                    offenders.push((a.l, k));
                }
            }
        }
    }
    check(A2, offenders.is_empty(), worst, offenders, "smallest relative gap between neighbouring problems")
}

fn check_symmetry(data: &SpectralData, opts: &ValidationOptions) -> Check {
    let n = data.n;
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut worst = 0.0_f64;
    let mut offenders = Vec::new();
    let mut missing = 0;
    for e in &data.entries {
        let Some(p) = data.get(e.l, n - e.k) else {
            missing += 1;
            offenders.push((e.l, e.k));
            continue;
        };
        let d = rel_dist(e.lambda, p.lambda.conj() * sign).max(rel_dist(e.beta, p.beta.conj() * sign));
        worst = worst.max(d);
        if d > opts.symmetry_rtol {
            offenders.push((e.l, e.k));
        }
    }
    let detail = if missing > 0 { format!("{missing} entries lack a partner index") } else { String::new() };
    check(SYMMETRY, offenders.is_empty(), worst, offenders, detail)
}

fn check_sign(data: &SpectralData) -> Check {
    let n = data.n;
    let p = n / 2;
    let s = if (p + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut worst = f64::INFINITY;
    let mut offenders = Vec::new();
    for e in data.track(p) {
        let v = if n.is_multiple_of(2) { s * e.beta.re } else { s * e.lambda.re } / e.lambda.norm().max(1.0);
        worst = worst.min(v);
        if v.is_nan() || v <= 0.0 {
            offenders.push((e.l, p));
        }
    }
    let what = if n.is_multiple_of(2) {
        format!("(-1)^{} beta_(l,{p}) > 0", p + 1)
    } else {
        format!("(-1)^{} Re lambda_(l,{p}) > 0", p + 1)
    };
    check(SIGN_CONDITION, offenders.is_empty(), worst, offenders, what)
}

fn check_beta(data: &SpectralData, opts: &ValidationOptions) -> Check {
    let mut worst = f64::INFINITY;
    let mut offenders = Vec::new();
    for e in &data.entries {
        let v = e.beta.norm() / e.lambda.norm().max(1.0);
        worst = worst.min(v);
        if v.is_nan() || v <= opts.beta_rtol {
            offenders.push((e.l, e.k));
        }
    }
    check(BETA_NONZERO, offenders.is_empty(), worst, offenders, "")
}

/// Data eigenvalues must avoid the model spectrum. A row `l` that coincides
/// with the model row (`xi_l = 0`) cancels from the main equation and is
/// exempt, unless every row coincides.
fn check_overlap(data: &SpectralData, model: &SpectralData, xi: &[f64], opts: &ValidationOptions) -> Check {
    let identical = |l: usize| xi.get(l - 1).is_some_and(|&x| x == 0.0);
    let mut worst = f64::INFINITY;
    let mut offenders = Vec::new();
    for e in &data.entries {
        if identical(e.l) {
            continue;
        }
        for m in &model.entries {
            let d = rel_dist(e.lambda, m.lambda);
            worst = worst.min(d);
            if d <= opts.overlap_rtol {
                offenders.push((e.l, e.k));
                break;
            }
        }
    }
    let all_same = !xi.is_empty() && xi.iter().all(|&x| x == 0.0);
    if all_same {
        return check(NON_OVERLAP, false, 0.0, Vec::new(), "data coincide with the model");
    }
    check(NON_OVERLAP, offenders.is_empty(), worst, offenders, "smallest relative distance to the model spectrum")
}

fn check_l2(n: usize, xi: &[f64], opts: &ValidationOptions) -> (Check, Vec<f64>) {
    let mut sums = Vec::with_capacity(xi.len());
    let mut acc = 0.0;
    for (i, x) in xi.iter().enumerate() {
        let l = (i + 1) as f64;
        acc += (l.powi(n as i32 - 2) * x).powi(2);
        sums.push(acc);
    }
    let total = acc;
    if total == 0.0 {
        return (check(L2_TAIL, true, 0.0, Vec::new(), "no difference from the model"), sums);
    }
    if xi.len() < 3 {
        return (check(L2_TAIL, false, f64::NAN, Vec::new(), "range too short to judge the tail"), sums);
    }
    let cut = xi.len() - xi.len().div_ceil(3);
    let gain = (total - sums[cut - 1]) / total;
    let passed = gain.is_finite() && gain <= opts.l2_flatness;
    let detail = format!("share of the partial sum gained over l > {cut}");
    (check(L2_TAIL, passed, gain, Vec::new(), detail), sums)
}

/// Runs every check; failures are report entries, not errors.
pub fn validate_spectral_data(data: &SpectralData, model: &SpectralData) -> ValidationReport {
    validate_with(data, model, &ValidationOptions::default())
}

pub fn validate_with(data: &SpectralData, model: &SpectralData, opts: &ValidationOptions) -> ValidationReport {
    let mut checks = vec![
        check_distinct(data, opts),
        check_separated(data, opts),
        check_symmetry(data, opts),
        check_sign(data),
        check_beta(data, opts),
    ];
    let (overlap, l2, sums) = match xi_weights(data, model) {
        Ok(xi) => {
            let (l2, sums) = check_l2(data.n, &xi, opts);
            (check_overlap(data, model, &xi, opts), l2, sums)
        }
        Err(e) => {
            let fail = |name| check(name, false, f64::NAN, Vec::new(), e.to_string());
            (fail(NON_OVERLAP), fail(L2_TAIL), Vec::new())
        }
    };
    checks.push(overlap);
    checks.push(l2);
    let fit_residuals = if (2..=4).contains(&data.n) { fit_asymptotics(data).ok().map(|p| p.residuals) } else { None };
    ValidationReport { checks, fit_residuals, l2_partial_sums: sums }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::Provenance;
    use std::f64::consts::PI;

    fn dirichlet(count: usize, shift: f64) -> SpectralData {
        let rec: Vec<(usize, C64, C64)> = (1..=count)
            .map(|l| {
                let a = (PI * l as f64).powi(2);
                (1, C64::new(-a + shift, 0.0), C64::new(2.0 * a, 0.0))
            })
            .collect();
        SpectralData::from_unordered(2, &rec, Provenance::Computed)
    }

    #[test]
    fn identical_data_fail_only_non_overlap() {
        let d = dirichlet(10, 0.0);
        let r = validate_spectral_data(&d, &d);
        assert_eq!(r.failed(), vec![NON_OVERLAP.to_string()]);
        assert!(r.check(L2_TAIL).unwrap().passed);
    }

    #[test]
    fn shifted_row_passes() {
        let model = dirichlet(10, 0.0);
        let mut data = model.clone();
        data.entries[0].lambda += 1.0;
        let r = validate_spectral_data(&data, &model);
        assert!(r.overall_pass(), "{r}");
    }

    #[test]
    fn negative_beta_breaks_sign_condition() {
        let model = dirichlet(10, 0.0);
        let mut data = dirichlet(10, 0.5);
        data.entries[2].beta = -data.entries[2].beta;
        let r = validate_spectral_data(&data, &model);
        let c = r.check(SIGN_CONDITION).unwrap();
        assert!(!c.passed);
        assert_eq!(c.offenders, vec![(3, 1)]);
        assert_eq!(r.failed().len(), 1);
    }

    #[test]
    fn flat_tail_passes_and_growing_tail_fails() {
        let model = dirichlet(12, 0.0);
        let n2 = |l: usize| (PI * l as f64).powi(2);
        let decaying: Vec<(usize, C64, C64)> =
            (1..=12).map(|l| (1, C64::new(-n2(l) + 1.0 / l as f64, 0.0), C64::new(2.0 * n2(l), 0.0))).collect();
        let d = SpectralData::from_unordered(2, &decaying, Provenance::Computed);
        assert!(validate_spectral_data(&d, &model).check(L2_TAIL).unwrap().passed);
        let growing: Vec<(usize, C64, C64)> =
            (1..=12).map(|l| (1, C64::new(-n2(l) + l as f64, 0.0), C64::new(2.0 * n2(l), 0.0))).collect();
        let d = SpectralData::from_unordered(2, &growing, Provenance::Computed);
        let r = validate_spectral_data(&d, &model);
        assert_eq!(r.failed(), vec![L2_TAIL.to_string()]);
    }
}
