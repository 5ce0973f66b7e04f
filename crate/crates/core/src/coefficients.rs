//! Coefficient sets `tau_nu`, the sign-mapped `sigma_nu`, the expanded form
//! `p_s`, and model problems built from asymptotic constants.

use crate::error::{Error, Result};
use crate::poly::Function1D;
use crate::C64;

const SAMPLES: usize = 64;

/// Coefficients `tau_0 .. tau_{n-2}` of the differential expression.
///
/// `tau_0` may be a distribution and is always carried by its antiderivative.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    n: usize,
    tau0_antiderivative: Function1D,
    /// `tau[nu - 1]` holds `tau_nu` for `nu = 1..=n-2`.
    tau: Vec<Function1D>,
}

impl CoefficientSet {
    pub fn new(n: usize, tau0_antiderivative: Function1D, tau: Vec<Function1D>) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedOrder(n));
        }
        if tau.len() != n - 2 {
            return Err(Error::Representation(format!(
                "order {n} needs {} coefficients besides tau0, got {}",
                n - 2,
                tau.len()
            )));
        }
        for (i, t) in tau.iter().enumerate() {
            let nu = i + 1;
            // W_2^{nu-1} asks for nu-2 continuous derivatives across breakpoints
            if nu >= 2 {
                let defect = t.continuity_defect(nu - 2);
                if defect > 1e-10 * (1.0 + t.max_abs_sampled(SAMPLES)) {
                    return Err(Error::Representation(format!(
                        "tau{nu} must have {} continuous derivative(s), jump {defect:e}",
                        nu - 2
                    )));
                }
            }
        }
        Ok(Self { n, tau0_antiderivative, tau })
    }

    /// Builds the set from an ordinary (non-distributional) `tau_0`.
    pub fn with_direct_tau0(n: usize, tau0: &Function1D, tau: Vec<Function1D>) -> Result<Self> {
        Self::new(n, tau0.antiderivative(), tau)
    }

    pub fn zero(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedOrder(n));
        }
        Self::new(n, Function1D::zero(), vec![Function1D::zero(); n - 2])
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn tau0_antiderivative(&self) -> &Function1D {
        &self.tau0_antiderivative
    }

    /// `tau_nu` for `nu >= 1`.
    pub fn tau(&self, nu: usize) -> &Function1D {
        assert!(nu >= 1 && nu <= self.n - 2, "tau index {nu} out of range");
        &self.tau[nu - 1]
    }

    pub fn higher(&self) -> &[Function1D] {
        &self.tau
    }

    /// Sobolev index `nu - 1` of the class `W_2^{nu-1}` for `tau_nu`.
    pub fn smoothness_class(nu: usize) -> i32 {
        nu as i32 - 1
    }

    /// Largest imaginary part of `i^{n+nu} tau_nu` over the sample grid
    /// (the antiderivative stands in for `tau_0`).
    pub fn selfadjoint_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for nu in 0..=self.n - 2 {
            let f = if nu == 0 { &self.tau0_antiderivative } else { &self.tau[nu - 1] };
            let phase = i_pow(self.n + nu);
            for s in 0..=SAMPLES {
                let x = s as f64 / SAMPLES as f64;
                worst = worst.max((phase * f.eval(x)).im.abs());
            }
        }
        worst
    }

    pub fn is_selfadjoint(&self, tol: f64) -> bool {
        self.selfadjoint_defect() <= tol
    }

    /// Adds `eps * x` to the antiderivative of `tau_0`, i.e. shifts `tau_0` by `eps`.
    pub fn shifted_tau0(&self, eps: f64) -> Self {
        let shift = Function1D::real_polynomial(&[0.0, eps]);
        Self { n: self.n, tau0_antiderivative: &self.tau0_antiderivative + &shift, tau: self.tau.clone() }
    }

    /// Breakpoints of every coefficient, merged.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.tau
            .iter()
            .fold(self.tau0_antiderivative.breaks().to_vec(), |acc, f| crate::poly::union_breaks(&acc, f.breaks()))
    }
}

/// `i^m`.
pub fn i_pow(m: usize) -> C64 {
    match m % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// The functions `sigma_nu` that parameterize the associated matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSet {
    pub n: usize,
    pub sigma: Vec<Function1D>,
}

impl SigmaSet {
    /// Order of the singularity carried by `sigma_nu`: one for `nu = 0`, zero otherwise.
    pub fn singularity_order(nu: usize) -> usize {
        usize::from(nu == 0)
    }
}

/// Sign `(-1)^{floor(nu/2) + nu}` relating `sigma_nu` to `tau_nu` for `nu >= 1`.
pub fn sigma_sign(nu: usize) -> f64 {
    if (nu / 2 + nu).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn make_sigma(coeffs: &CoefficientSet) -> SigmaSet {
    let n = coeffs.order();
    let mut sigma = Vec::with_capacity(n - 1);
    sigma.push(-&coeffs.tau0_antiderivative);
    for nu in 1..=n - 2 {
        sigma.push(coeffs.tau(nu).scale(C64::new(sigma_sign(nu), 0.0)));
    }
    SigmaSet { n, sigma }
}

/// Classical coefficients of `y^(n) + sum_s p_s y^(s)`.
#[derive(Clone, Debug)]
pub struct ExpandedCoefficients {
    /// `p[s]` for `s = 0..=n-2`. `p[0]` is the piecewise derivative of
    /// `p0_antiderivative` and misses point masses at jumps.
    pub p: Vec<Function1D>,
    pub p0_antiderivative: Function1D,
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Expands the divergence form into `p_s` with the Leibniz rule.
pub fn tau_to_p(coeffs: &CoefficientSet) -> ExpandedCoefficients {
    let n = coeffs.order();
    let mut p = vec![Function1D::zero(); n - 1];
    let mut p0_anti = coeffs.tau0_antiderivative.clone();
    let mut p0_direct = coeffs.tau0_antiderivative.derivative();

    // adds c * tau^{(d)} to p_s
    let mut push = |s: usize, c: f64, tau: &Function1D, d: usize| {
        if c == 0.0 || s > n - 2 {
            return;
        }
        let term = tau.nth_derivative(d).scale(C64::new(c, 0.0));
        if s == 0 {
            p0_direct = &p0_direct + &term;
            let anti = if d == 0 {
                tau.antiderivative()
            } else {
                let g = tau.nth_derivative(d - 1);
                &g - &Function1D::constant(g.eval(0.0))
            };
            p0_anti = &p0_anti + &anti.scale(C64::new(c, 0.0));
        } else {
            p[s] = &p[s] + &term;
        }
    };

    for nu in 1..=n - 2 {
        let tau = coeffs.tau(nu);
        let k = nu / 2;
        if nu % 2 == 0 {
            // (tau y^(k))^(k)
            for i in 0..=k {
                push(k + i, binom(k, i), tau, k - i);
            }
        } else {
            // (tau y^(k))^(k+1) + (tau y^(k+1))^(k)
            for i in 0..=k + 1 {
                push(k + i, binom(k + 1, i), tau, k + 1 - i);
            }
            for i in 0..=k {
                push(k + 1 + i, binom(k, i), tau, k - i);
            }
        }
    }
    p[0] = p0_direct;
    ExpandedCoefficients { p, p0_antiderivative: p0_anti }
}

/// Constants read off the eigenvalue and weight asymptotics.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticParameters {
    pub n: usize,
    /// `chi_k` for `k = 1..n-1`.
    pub chi: Vec<f64>,
    /// Mean of `tau_2` (n = 4).
    pub theta: Option<f64>,
    /// `tau_2(0)` and `tau_2(1)` (n = 4).
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    /// Mean of `tau_1` (n = 3, 4).
    pub sigma_int: Option<C64>,
    /// Named residuals of the tail fits.
    pub residuals: Vec<(String, f64)>,
}

/// Model problem whose spectral data share the main asymptotic terms with `params`.
pub fn build_model_problem(params: &AsymptoticParameters, n: usize) -> Result<CoefficientSet> {
    match n {
        2 => CoefficientSet::zero(2),
        3 => {
            let s = params.sigma_int.ok_or_else(|| Error::Fit("missing mean of tau1".into()))?;
            CoefficientSet::new(3, Function1D::zero(), vec![Function1D::constant(s)])
        }
        4 => {
            let missing = || Error::Fit("missing constants for the n = 4 model".into());
            let theta = params.theta.ok_or_else(missing)?;
            let t0 = params.t0.ok_or_else(missing)?;
            let t1 = params.t1.ok_or_else(missing)?;
            let s = params.sigma_int.ok_or_else(missing)?;
            let tau2 = Function1D::real_polynomial(&[
                t0,
                -4.0 * t0 - 2.0 * t1 + 6.0 * theta,
                3.0 * t0 + 3.0 * t1 - 6.0 * theta,
            ]);
            CoefficientSet::new(4, Function1D::zero(), vec![Function1D::constant(s), tau2])
        }
        _ => Err(Error::UnsupportedOrder(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn re(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn sigma0_is_negated_antiderivative() {
        let c = CoefficientSet::new(2, Function1D::real_polynomial(&[0.0, 1.0]), vec![]).unwrap();
        let s = make_sigma(&c);
        assert!(close(s.sigma[0].eval(0.3), re(-0.3)));
        assert_eq!(SigmaSet::singularity_order(0), 1);
        assert_eq!(SigmaSet::singularity_order(2), 0);
    }

    #[test]
    fn sigma_signs() {
        // (-1)^{floor(nu/2) + nu}: nu = 1 gives -1, nu = 2 gives -1, nu = 3 gives +1
        let c4 = CoefficientSet::new(4, Function1D::zero(), vec![Function1D::constant(re(2.5)), Function1D::zero()])
            .unwrap();
        assert!(close(make_sigma(&c4).sigma[1].eval(0.4), re(-2.5)));
        let c5 = CoefficientSet::new(
            5,
            Function1D::zero(),
            vec![Function1D::zero(), Function1D::constant(re(1.0)), Function1D::constant(re(1.0))],
        )
        .unwrap();
        let s5 = make_sigma(&c5);
        assert!(close(s5.sigma[2].eval(0.7), re(-1.0)));
        assert!(close(s5.sigma[3].eval(0.7), re(1.0)));
    }

    #[test]
    fn p_for_constant_fourth_order() {
        let (a, cst, q) = (1.5, 0.25, -2.0);
        let c = CoefficientSet::with_direct_tau0(
            4,
            &Function1D::constant(re(q)),
            vec![Function1D::constant(re(cst)), Function1D::constant(re(a))],
        )
        .unwrap();
        let p = tau_to_p(&c);
        assert!(close(p.p[2].eval(0.3), re(a)));
        assert!(close(p.p[1].eval(0.3), re(2.0 * cst)));
        assert!(close(p.p[0].eval(0.3), re(q)));
        assert!(close(p.p0_antiderivative.eval(0.3), re(0.3 * q)));
    }

    #[test]
    fn p_picks_up_derivative_of_tau2() {
        let c = CoefficientSet::new(
            4,
            Function1D::zero(),
            vec![Function1D::zero(), Function1D::real_polynomial(&[0.0, 1.0])],
        )
        .unwrap();
        let p = tau_to_p(&c);
        assert!(close(p.p[2].eval(0.6), re(0.6)));
        assert!(close(p.p[1].eval(0.6), re(1.0)));
        assert!(close(p.p[0].eval(0.6), re(0.0)));
    }

    #[test]
    fn zero_coefficients_expand_to_zero() {
        for n in 2..6 {
            let p = tau_to_p(&CoefficientSet::zero(n).unwrap());
            assert!(p.p.iter().all(|f| f.max_abs_sampled(8) == 0.0));
        }
    }

    #[test]
    fn model_problem_constraints() {
        let params = AsymptoticParameters {
            n: 4,
            chi: vec![],
            theta: Some(1.0),
            t0: Some(1.0),
            t1: Some(1.0),
            sigma_int: Some(C64::new(0.0, 0.0)),
            residuals: vec![],
        };
        let m = build_model_problem(&params, 4).unwrap();
        assert!(close(m.tau(2).eval(0.37), re(1.0)));

        let params = AsymptoticParameters { theta: Some(0.0), t0: Some(1.0), t1: Some(0.0), ..params };
        let m = build_model_problem(&params, 4).unwrap();
        let t2 = m.tau(2);
        assert!(close(t2.eval(0.5), re(3.0 * 0.25 - 2.0 + 1.0)));
        assert!(close(t2.integral(), re(0.0)));
        assert!(close(t2.eval(0.0), re(1.0)));
        assert!(close(t2.eval(1.0), re(0.0)));

        let m2 = build_model_problem(&params, 2).unwrap();
        assert_eq!(m2.tau0_antiderivative().max_abs_sampled(8), 0.0);
        assert!(build_model_problem(&params, 6).is_err());
    }

    #[test]
    fn tau2_must_be_continuous() {
        let jump = Function1D::new(vec![0.0, 0.5, 1.0], vec![vec![re(0.0)], vec![re(1.0)]]).unwrap();
        assert!(CoefficientSet::new(4, Function1D::zero(), vec![Function1D::zero(), jump.clone()]).is_err());
        assert!(CoefficientSet::new(4, Function1D::zero(), vec![jump, Function1D::zero()]).is_ok());
    }

    #[test]
    fn selfadjoint_flag_for_fourth_order() {
        let good = CoefficientSet::new(
            4,
            Function1D::real_polynomial(&[0.0, 1.0]),
            vec![Function1D::constant(C64::new(0.0, 0.7)), Function1D::real_polynomial(&[1.0, -4.0, 3.0])],
        )
        .unwrap();
        assert!(good.is_selfadjoint(1e-12));
        let bad = CoefficientSet::new(4, Function1D::zero(), vec![Function1D::constant(re(0.7)), Function1D::zero()])
            .unwrap();
        assert!(!bad.is_selfadjoint(1e-12));
    }

    fn arb_set() -> impl Strategy<Value = CoefficientSet> {
        prop::collection::vec(-1.0f64..1.0, 9).prop_map(|v| {
            CoefficientSet::new(
                4,
                Function1D::real_polynomial(&v[0..3]),
                vec![Function1D::real_polynomial(&v[3..6]), Function1D::real_polynomial(&v[6..9])],
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn sigma_map_inverts(c in arb_set(), x in 0.0f64..1.0) {
            let s = make_sigma(&c);
            prop_assert!(close(-s.sigma[0].eval(x), c.tau0_antiderivative().eval(x)));
            for nu in 1..=2 {
                prop_assert!(close(s.sigma[nu].eval(x) * sigma_sign(nu), c.tau(nu).eval(x)));
            }
        }

        #[test]
        fn tau_to_p_is_linear(a in arb_set(), b in arb_set(), alpha in -2.0f64..2.0, x in 0.0f64..1.0) {
            let comb = CoefficientSet::new(
                4,
                &a.tau0_antiderivative().scale(re(alpha)) + b.tau0_antiderivative(),
                (1..=2).map(|nu| &a.tau(nu).scale(re(alpha)) + b.tau(nu)).collect(),
            ).unwrap();
            let (pa, pb, pc) = (tau_to_p(&a), tau_to_p(&b), tau_to_p(&comb));
            for s in 0..3 {
                let lhs = pc.p[s].eval(x);
                let rhs = pa.p[s].eval(x) * alpha + pb.p[s].eval(x);
                prop_assert!((lhs - rhs).norm() < 1e-10);
            }
        }
    }
}
