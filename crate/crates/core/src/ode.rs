//! Linear first-order systems `Y' = (F(x) + Lambda) Y`: an adaptive
//! Dormand-Prince 8(5,3) integrator, segment propagators, multiple shooting
//! for Weyl solutions and characteristic determinants, quasi-derivatives and
//! the Lagrange bracket.

use crate::assoc::AssociatedMatrix;
use crate::error::{Error, Result};
use crate::linalg::{matmul, BandMatrix, Scaled};
use crate::poly::{union_breaks, Function1D};
use crate::C64;

/// `lambda` together with an `n`-th root `rho`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPoint {
    pub lambda: C64,
    pub rho: C64,
}

impl SpectralPoint {
    /// Root with `arg rho = arg(lambda) / n`, `arg lambda` in `(-pi, pi]`; for
    /// `Im lambda >= 0` this lies in the sector `[0, pi/n]`.
    pub fn new(lambda: C64, n: usize) -> Self {
        let rho = if lambda.norm() == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::from_polar(lambda.norm().powf(1.0 / n as f64), lambda.arg() / n as f64)
        };
        Self { lambda, rho }
    }
}

/// Right-hand side `(F(x) + Lambda) Y`, where `Lambda` has the single entry
/// `lam_entry` in the bottom-left corner.
#[derive(Clone, Debug)]
pub struct LinearSystem<'a> {
    n: usize,
    entries: Vec<(usize, usize, &'a Function1D)>,
    breaks: Vec<f64>,
    lam_entry: C64,
}

impl<'a> LinearSystem<'a> {
    /// System for `y^[n] = lambda y`.
    pub fn direct(f: &'a AssociatedMatrix, lambda: C64) -> Self {
        Self::with_entry(f, lambda)
    }

    /// System for `(-1)^n z^[n] = mu z` with the matrix `F*` already formed.
    pub fn dual(fstar: &'a AssociatedMatrix, mu: C64) -> Self {
        let sign = if fstar.order().is_multiple_of(2) { 1.0 } else { -1.0 };
        Self::with_entry(fstar, mu * sign)
    }

    fn with_entry(f: &'a AssociatedMatrix, lam_entry: C64) -> Self {
        let entries = f.nonzero_entries().into_iter().map(|(k, j, e)| (k - 1, j - 1, e)).collect();
        Self { n: f.order(), entries, breaks: f.breakpoints(), lam_entry }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn lam_entry(&self) -> C64 {
        self.lam_entry
    }

    /// `|lam_entry|^{1/n}`: the exponential rate of the solutions.
    pub fn growth(&self) -> f64 {
        self.lam_entry.norm().powf(1.0 / self.n as f64)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    /// `out = (F(x) + Lambda) y` for `y` with `cols` columns (row-major).
    pub fn apply(&self, x: f64, y: &[C64], cols: usize, out: &mut [C64]) {
        let n = self.n;
        for r in 0..n - 1 {
            out[r * cols..(r + 1) * cols].copy_from_slice(&y[(r + 1) * cols..(r + 2) * cols]);
        }
        for v in &mut out[(n - 1) * cols..n * cols] {
            *v = C64::new(0.0, 0.0);
        }
        for c in 0..cols {
            out[(n - 1) * cols + c] += self.lam_entry * y[c];
        }
        for &(k, j, f) in &self.entries {
            let v = f.eval(x);
            for c in 0..cols {
                out[k * cols + c] += v * y[j * cols + c];
            }
        }
    }
}

/// Integrator tolerances.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14 }
    }
}

mod tableau {
    pub const C2: f64 = 0.526001519587677318785587544488E-01;
    pub const C3: f64 = 0.789002279381515978178381316732E-01;
    pub const C4: f64 = 0.118350341907227396726757197510E+00;
    pub const C5: f64 = 0.281649658092772603273242802490E+00;
    pub const C6: f64 = 0.333333333333333333333333333333E+00;
    pub const C7: f64 = 0.25E+00;
    pub const C8: f64 = 0.307692307692307692307692307692E+00;
    pub const C9: f64 = 0.651282051282051282051282051282E+00;
    pub const C10: f64 = 0.6E+00;
    pub const C11: f64 = 0.857142857142857142857142857142E+00;

    pub const A21: f64 = 5.26001519587677318785587544488E-2;
    pub const A31: f64 = 1.97250569845378994544595329183E-2;
    pub const A32: f64 = 5.91751709536136983633785987549E-2;
    pub const A41: f64 = 2.95875854768068491816892993775E-2;
    pub const A43: f64 = 8.87627564304205475450678981324E-2;
    pub const A51: f64 = 2.41365134159266685502369798665E-1;
    pub const A53: f64 = -8.845_494_793_282_861E-1;
    pub const A54: f64 = 9.24834003261792003115737966543E-1;
    pub const A61: f64 = 3.703_703_703_703_703_5E-2;
    pub const A64: f64 = 1.70828608729473871279604482173E-1;
    pub const A65: f64 = 1.25467687566822425016691814123E-1;
    pub const A71: f64 = 3.7109375E-2;
    pub const A74: f64 = 1.70252211019544039314978060272E-1;
    pub const A75: f64 = 6.02165389804559606850219397283E-2;
    pub const A76: f64 = -1.7578125E-2;
    pub const A81: f64 = 3.70920001185047927108779319836E-2;
    pub const A84: f64 = 1.70383925712239993810214054705E-1;
    pub const A85: f64 = 1.07262030446373284651809199168E-1;
    pub const A86: f64 = -1.531_943_774_862_440_2E-2;
    pub const A87: f64 = 8.27378916381402288758473766002E-3;
    pub const A91: f64 = 6.24110958716075717114429577812E-1;
    pub const A94: f64 = -3.360_892_629_446_941_4;
    pub const A95: f64 = -8.682_193_468_417_26E-1;
    pub const A96: f64 = 2.75920996994467083049415600797E1;
    pub const A97: f64 = 2.01540675504778934086186788979E1;
    pub const A98: f64 = -4.348_988_418_106_996E1;
    pub const A101: f64 = 4.77662536438264365890433908527E-1;
    pub const A104: f64 = -2.488_114_619_971_667_7;
    pub const A105: f64 = -5.902_908_268_368_43E-1;
    pub const A106: f64 = 2.12300514481811942347288949897E1;
    pub const A107: f64 = 1.52792336328824235832596922938E1;
    pub const A108: f64 = -3.328_821_096_898_486E1;
    pub const A109: f64 = -2.033_120_170_850_862_7E-2;
    pub const A111: f64 = -9.371_424_300_859_873E-1;
    pub const A114: f64 = 5.18637242884406370830023853209E0;
    pub const A115: f64 = 1.09143734899672957818500254654E0;
    pub const A116: f64 = -8.149_787_010_746_927;
    pub const A117: f64 = -1.852_006_565_999_696E1;
    pub const A118: f64 = 2.27394870993505042818970056734E1;
    pub const A119: f64 = 2.49360555267965238987089396762E0;
    pub const A1110: f64 = -3.046_764_471_898_219_6;
    pub const A121: f64 = 2.27331014751653820792359768449E0;
    pub const A124: f64 = -1.053_449_546_673_725E1;
    pub const A125: f64 = -2.000_872_058_224_862_5;
    pub const A126: f64 = -1.795_893_186_311_88E1;
    pub const A127: f64 = 2.79488845294199600508499808837E1;
    pub const A128: f64 = -2.858_998_277_135_023_5;
    pub const A129: f64 = -8.872_856_933_530_63;
    pub const A1210: f64 = 1.23605671757943030647266201528E1;
    pub const A1211: f64 = 6.43392746015763530355970484046E-1;

    pub const B1: f64 = 5.42937341165687622380535766363E-2;
    pub const B6: f64 = 4.45031289275240888144113950566E0;
    pub const B7: f64 = 1.89151789931450038304281599044E0;
    pub const B8: f64 = -5.801_203_960_010_585;
    pub const B9: f64 = 3.111_643_669_578_199E-1;
    pub const B10: f64 = -1.521_609_496_625_161E-1;
    pub const B11: f64 = 2.01365400804030348374776537501E-1;
    pub const B12: f64 = 4.47106157277725905176885569043E-2;

    pub const BHH1: f64 = 0.244094488188976377952755905512E+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547E+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412E-01;

    pub const ER1: f64 = 1.312_004_499_419_488E-2;
    pub const ER6: f64 = -1.225_156_446_376_204_4;
    pub const ER7: f64 = -4.957_589_496_572_502E-1;
    pub const ER8: f64 = 1.664_377_182_454_986_4;
    pub const ER9: f64 = -3.503_288_487_499_736_6E-1;
    pub const ER10: f64 = 3.341_791_187_130_175E-1;
    pub const ER11: f64 = 8.192_320_648_511_571E-2;
    pub const ER12: f64 = -2.235_530_786_388_629_4E-2;
}

fn axpy_stage(y: &[C64], h: f64, terms: &[(f64, &[C64])], out: &mut [C64]) {
    out.copy_from_slice(y);
    for &(a, k) in terms {
        let c = a * h;
        for (o, v) in out.iter_mut().zip(k) {
            *o += v * c;
        }
    }
}

/// Integrates `y' = f(x, y)` from `a` to `b` in place with DOP853.
pub fn dop853<F>(mut f: F, a: f64, b: f64, y: &mut [C64], tol: Tolerance) -> Result<usize>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    use tableau::*;
    let dim = y.len();
    let z = C64::new(0.0, 0.0);
    let mut k: Vec<Vec<C64>> = vec![vec![z; dim]; 12];
    let mut tmp = vec![z; dim];
    let mut ynew = vec![z; dim];
    let mut x = a;
    let mut h = b - a;
    let mut steps = 0usize;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    f(x, y, &mut k[0]);
    while x < b {
        if x + h > b {
            h = b - x;
        }
        if h <= 1e-14 * (1.0 + x.abs()) {
            return Err(Error::Accuracy { x, achieved: f64::NAN });
        }
        let (k1, rest) = k.split_at_mut(1);
        let k1 = &k1[0];
        let [k2, k3, k4, k5, k6, k7, k8, k9, k10, k11, k12] = rest else { unreachable!() };
        axpy_stage(y, h, &[(A21, k1)], &mut tmp);
        f(x + C2 * h, &tmp, k2);
        axpy_stage(y, h, &[(A31, k1), (A32, k2)], &mut tmp);
        f(x + C3 * h, &tmp, k3);
        axpy_stage(y, h, &[(A41, k1), (A43, k3)], &mut tmp);
        f(x + C4 * h, &tmp, k4);
        axpy_stage(y, h, &[(A51, k1), (A53, k3), (A54, k4)], &mut tmp);
        f(x + C5 * h, &tmp, k5);
        axpy_stage(y, h, &[(A61, k1), (A64, k4), (A65, k5)], &mut tmp);
        f(x + C6 * h, &tmp, k6);
        axpy_stage(y, h, &[(A71, k1), (A74, k4), (A75, k5), (A76, k6)], &mut tmp);
        f(x + C7 * h, &tmp, k7);
        axpy_stage(y, h, &[(A81, k1), (A84, k4), (A85, k5), (A86, k6), (A87, k7)], &mut tmp);
        f(x + C8 * h, &tmp, k8);
        axpy_stage(y, h, &[(A91, k1), (A94, k4), (A95, k5), (A96, k6), (A97, k7), (A98, k8)], &mut tmp);
        f(x + C9 * h, &tmp, k9);
        axpy_stage(
            y,
            h,
            &[(A101, k1), (A104, k4), (A105, k5), (A106, k6), (A107, k7), (A108, k8), (A109, k9)],
            &mut tmp,
        );
        f(x + C10 * h, &tmp, k10);
        axpy_stage(
            y,
            h,
            &[(A111, k1), (A114, k4), (A115, k5), (A116, k6), (A117, k7), (A118, k8), (A119, k9), (A1110, k10)],
            &mut tmp,
        );
        f(x + C11 * h, &tmp, k11);
        axpy_stage(
            y,
            h,
            &[
                (A121, k1),
                (A124, k4),
                (A125, k5),
                (A126, k6),
                (A127, k7),
                (A128, k8),
                (A129, k9),
                (A1210, k10),
                (A1211, k11),
            ],
            &mut tmp,
        );
        f(x + h, &tmp, k12);
        let mut scale_ref = 0.0_f64;
        for i in 0..dim {
            let incr = k1[i] * B1
                + k6[i] * B6
                + k7[i] * B7
                + k8[i] * B8
                + k9[i] * B9
                + k10[i] * B10
                + k11[i] * B11
                + k12[i] * B12;
            ynew[i] = y[i] + incr * h;
            scale_ref = scale_ref.max(y[i].norm()).max(ynew[i].norm());
        }
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..dim {
            let sk = tol.atol * scale_ref.max(1e-300) + tol.rtol * y[i].norm().max(ynew[i].norm());
            let incr = k1[i] * B1
                + k6[i] * B6
                + k7[i] * B7
                + k8[i] * B8
                + k9[i] * B9
                + k10[i] * B10
                + k11[i] * B11
                + k12[i] * B12;
            let e2 = incr - k1[i] * BHH1 - k9[i] * BHH2 - k12[i] * BHH3;
            err2 += (e2.norm() / sk).powi(2);
            let e = k1[i] * ER1
                + k6[i] * ER6
                + k7[i] * ER7
                + k8[i] * ER8
                + k9[i] * ER9
                + k10[i] * ER10
                + k11[i] * ER11
                + k12[i] * ER12;
            err += (e.norm() / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * dim as f64)).sqrt();
        let fac11 = err.powf(1.0 / 8.0);
        let fac = (fac11 / facold.powf(0.0) / 0.9).clamp(1.0 / 6.0, 3.0);
        steps += 1;
        if err <= 1.0 || !err.is_finite() && false {
            facold = err.max(1e-4);
            x += h;
            y.copy_from_slice(&ynew);
            f(x, y, &mut k[0]);
            let mut hn = h / fac;
            if last_rejected {
                hn = hn.min(h);
            }
            last_rejected = false;
            h = hn;
        } else {
            h /= (fac11 / 0.9).clamp(1.0 + 1e-3, 3.0);
            last_rejected = true;
        }
        if steps > 100_000 {
            return Err(Error::Accuracy { x, achieved: err });
        }
    }
    Ok(steps)
}

/// Propagates the `n x cols` block `y` across `[a, b]`.
pub fn propagate(sys: &LinearSystem, a: f64, b: f64, y: &mut [C64], cols: usize, tol: Tolerance) -> Result<usize> {
    dop853(|x, u, du| sys.apply(x, u, cols, du), a, b, y, tol)
}

/// Shooting nodes: `[0, 1]`, the coefficient breakpoints and `extra`, with
/// each gap subdivided until `h * max(growth, 1) <= 2`.
pub fn shooting_nodes(breaks: &[f64], extra: &[f64], growth: f64) -> Vec<f64> {
    let base = union_breaks(&union_breaks(&[0.0, 1.0], breaks), extra);
    let g = growth.max(1.0);
    let mut nodes = vec![0.0];
    for w in base.windows(2) {
        let parts = ((w[1] - w[0]) * g / 2.0).ceil().max(1.0) as usize;
        for i in 1..parts {
            nodes.push(w[0] + (w[1] - w[0]) * i as f64 / parts as f64);
        }
        nodes.push(w[1]);
    }
    nodes
}

/// Segment propagators of one system on a fixed node set.
#[derive(Clone, Debug)]
pub struct Shooting {
    n: usize,
    nodes: Vec<f64>,
    props: Vec<Vec<C64>>,
}

impl Shooting {
    pub fn new(sys: &LinearSystem, extra: &[f64], tol: Tolerance) -> Result<Self> {
        let n = sys.order();
        let nodes = shooting_nodes(sys.breakpoints(), extra, sys.growth());
        let mut props = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let mut p = identity(n);
            propagate(sys, w[0], w[1], &mut p, n, tol)?;
            props.push(p);
        }
        Ok(Self { n, nodes, props })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of an exact node value.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        self.nodes.iter().position(|&v| v == x)
    }

    /// Fundamental matrix `C(x)` at every node.
    pub fn fundamental(&self) -> Vec<Vec<C64>> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.nodes.len());
        out.push(identity(n));
        for p in &self.props {
            let next = matmul(p, out.last().unwrap(), n, n, n);
            out.push(next);
        }
        out
    }

    /// Global block system with `k` conditions at 0 and `n - k` at 1.
    fn assemble(&self, k: usize) -> BandMatrix {
        let n = self.n;
        let m = n - k;
        let segs = self.props.len();
        let size = n * (segs + 1);
        let mut a = BandMatrix::new(size, k + n - 1, n - k.min(n - 1));
        let one = C64::new(1.0, 0.0);
        for i in 0..k {
            a.set(i, i, one);
        }
        for (s, p) in self.props.iter().enumerate() {
            for r in 0..n {
                let row = k + s * n + r;
                for c in 0..n {
                    a.set(row, s * n + c, -p[r * n + c]);
                }
                a.set(row, (s + 1) * n + r, one);
            }
        }
        for i in 0..m {
            a.set(k + n * segs + i, n * segs + i, one);
        }
        a
    }

    /// Characteristic function `Delta_{k,k}` for `1 <= k <= n - 1`.
    pub fn char_det(&self, k: usize) -> Scaled {
        let n = self.n;
        let m = n - k;
        let segs = self.props.len();
        let det = self.assemble(k).factor().det();
        let flips = m * (m.saturating_sub(1)) / 2 + m * n * segs;
        if flips % 2 == 1 {
            det * C64::new(-1.0, 0.0)
        } else {
            det
        }
    }

    /// Weyl solution `Phi_k` (quasi-derivative vectors) at every node.
    pub fn weyl(&self, k: usize) -> Result<Vec<Vec<C64>>> {
        let n = self.n;
        let lu = self.assemble(k).factor();
        let mut rhs = vec![C64::new(0.0, 0.0); lu_size(n, self.props.len())];
        rhs[k - 1] = C64::new(1.0, 0.0);
        lu.solve(&mut rhs)?;
        Ok(rhs.chunks(n).map(|c| c.to_vec()).collect())
    }

    /// Weyl solution together with the pivot ratio of the block system.
    pub fn weyl_with_pivots(&self, k: usize) -> Result<(Vec<Vec<C64>>, f64)> {
        let n = self.n;
        let lu = self.assemble(k).factor();
        let mut rhs = vec![C64::new(0.0, 0.0); lu_size(n, self.props.len())];
        rhs[k - 1] = C64::new(1.0, 0.0);
        lu.solve(&mut rhs)?;
        Ok((rhs.chunks(n).map(|c| c.to_vec()).collect(), lu.pivot_ratio()))
    }
}

fn lu_size(n: usize, segs: usize) -> usize {
    n * (segs + 1)
}

pub fn identity(n: usize) -> Vec<C64> {
    let mut m = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        m[i * n + i] = C64::new(1.0, 0.0);
    }
    m
}

/// Which solution a trajectory holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    FundamentalAtZero,
    Weyl,
}

/// Matrix-valued solution sampled on a grid.
#[derive(Clone, Debug)]
pub struct MatrixTrajectory {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<C64>>,
    pub point: SpectralPoint,
    pub kind: TrajectoryKind,
}

/// Fundamental matrix `C(x, lambda)` with `C(0) = I` on `grid`.
pub fn fundamental_matrix(f: &AssociatedMatrix, lambda: C64, grid: &[f64], tol: Tolerance) -> Result<MatrixTrajectory> {
    let sys = LinearSystem::direct(f, lambda);
    let sh = Shooting::new(&sys, grid, tol)?;
    let all = sh.fundamental();
    let values = grid.iter().map(|&x| all[sh.node_index(x).expect("grid node")].clone()).collect();
    Ok(MatrixTrajectory {
        grid: grid.to_vec(),
        values,
        point: SpectralPoint::new(lambda, f.order()),
        kind: TrajectoryKind::FundamentalAtZero,
    })
}

/// Weyl matrix `Phi(x, lambda)` (columns `Phi_1 .. Phi_n`) on `grid`.
pub fn weyl_trajectory(f: &AssociatedMatrix, lambda: C64, grid: &[f64], tol: Tolerance) -> Result<MatrixTrajectory> {
    let n = f.order();
    let sys = LinearSystem::direct(f, lambda);
    let sh = Shooting::new(&sys, grid, tol)?;
    let cols: Vec<Vec<Vec<C64>>> = (1..=n).map(|k| sh.weyl(k)).collect::<Result<_>>()?;
    let values = grid
        .iter()
        .map(|&x| {
            let i = sh.node_index(x).expect("grid node");
            let mut m = vec![C64::new(0.0, 0.0); n * n];
            for (k, col) in cols.iter().enumerate() {
                for j in 0..n {
                    m[j * n + k] = col[i][j];
                }
            }
            m
        })
        .collect();
    Ok(MatrixTrajectory {
        grid: grid.to_vec(),
        values,
        point: SpectralPoint::new(lambda, n),
        kind: TrajectoryKind::Weyl,
    })
}

/// Quasi-derivatives `y^[0] .. y^[n]` of a piecewise polynomial `y`.
pub fn quasi_derivative_column(f: &AssociatedMatrix, y: &Function1D) -> Vec<Function1D> {
    let n = f.order();
    let mut q = vec![y.clone()];
    for k in 1..=n {
        let mut next = q[k - 1].derivative();
        for j in 1..=k {
            next = &next - &(f.entry(k, j) * &q[j - 1]);
        }
        q.push(next);
    }
    q
}

/// `<z, y> = sum_k (-1)^k z^[k] y^[n-1-k]`.
pub fn lagrange_bracket(z: &[C64], y: &[C64]) -> Result<C64> {
    if z.len() != y.len() || z.is_empty() {
        return Err(Error::Input(format!("bracket needs equal lengths, got {} and {}", z.len(), y.len())));
    }
    let n = z.len();
    Ok((0..n)
        .map(|k| {
            let t = z[k] * y[n - 1 - k];
            if k % 2 == 0 {
                t
            } else {
                -t
            }
        })
        .sum())
}

/// CSV lines `x,re,im` for entry `(row, col)` (0-based) of a trajectory.
pub fn trajectory_csv(t: &MatrixTrajectory, row: usize, col: usize) -> String {
    let n = (t.values[0].len() as f64).sqrt() as usize;
    let mut s = String::from("x,re,im\n");
    for (x, m) in t.grid.iter().zip(&t.values) {
        let v = m[row * n + col];
        s.push_str(&format!("{},{},{}\n", crate::io::fmt_f64(*x), crate::io::fmt_f64(v.re), crate::io::fmt_f64(v.im)));
    }
    s
}
