//! Zeros of an analytic function given through scaled values: winding counts
//! on polar contours, Newton refinement and box subdivision.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::Scaled;
use crate::C64;

/// Outcome of tracking the phase along a contour.
enum Phase {
    Change(f64),
    NearZero,
}

pub(crate) struct RootFinder<F>
where
    F: FnMut(C64) -> Result<Scaled>,
{
    f: F,
    /// Phase density hint: expected phase change per unit of `|dz| / |z|^{1 - 1/n}`.
    n: usize,
    pub evals: usize,
}

/// Polar box `r0 <= |z| <= r1`, `t0 <= arg z <= t1`. With `t1 - t0 = 2 pi`
/// the box is an annulus (or a disk when `r0 = 0`).
#[derive(Clone, Copy, Debug)]
pub(crate) struct PolarBox {
    pub r0: f64,
    pub r1: f64,
    pub t0: f64,
    pub t1: f64,
}

impl PolarBox {
    pub fn disk(r: f64, offset: f64) -> Self {
        Self { r0: 0.0, r1: r, t0: offset, t1: offset + 2.0 * PI }
    }

    fn is_annulus(&self) -> bool {
        self.t1 - self.t0 >= 2.0 * PI - 1e-12
    }

    fn contains(&self, z: C64, slack: f64) -> bool {
        let r = z.norm();
        if r < self.r0 - slack * self.r1 || r > self.r1 * (1.0 + slack) {
            return false;
        }
        if self.is_annulus() {
            return true;
        }
        let mut t = z.arg();
        while t < self.t0 {
            t += 2.0 * PI;
        }
        while t > self.t0 + 2.0 * PI {
            t -= 2.0 * PI;
        }
        t <= self.t1 + slack || (t - 2.0 * PI) >= self.t0 - slack
    }

    fn center(&self) -> C64 {
        if self.is_annulus() && self.r0 == 0.0 {
            return C64::from_polar(0.5 * self.r1, self.t0);
        }
        C64::from_polar(0.5 * (self.r0 + self.r1), 0.5 * (self.t0 + self.t1))
    }
}

fn principal(a: f64) -> f64 {
    let mut d = a % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d < -PI {
        d += 2.0 * PI;
    }
    d
}

impl<F> RootFinder<F>
where
    F: FnMut(C64) -> Result<Scaled>,
{
    pub fn new(f: F, n: usize) -> Self {
        Self { f, n, evals: 0 }
    }

    pub fn value(&mut self, z: C64) -> Result<Scaled> {
        self.evals += 1;
        (self.f)(z)
    }

    fn arg_at(&mut self, z: C64) -> Result<Option<f64>> {
        let v = self.value(z)?;
        if v.is_zero() || !v.mantissa.re.is_finite() {
            return Ok(None);
        }
        Ok(Some(v.arg()))
    }

    /// Phase change along `path(t)`, `t` in `[0, 1]`.
    fn phase_along(&mut self, path: &dyn Fn(f64) -> C64, pieces: usize) -> Result<Phase> {
        let mut total = 0.0;
        let mut t_prev = 0.0;
        let Some(mut a_prev) = self.arg_at(path(0.0))? else { return Ok(Phase::NearZero) };
        for i in 1..=pieces {
            let t_next = i as f64 / pieces as f64;
            let Some(a_next) = self.arg_at(path(t_next))? else { return Ok(Phase::NearZero) };
            match self.refine(path, t_prev, t_next, a_prev, a_next, 0)? {
                Phase::Change(d) => total += d,
                Phase::NearZero => return Ok(Phase::NearZero),
            }
            t_prev = t_next;
            a_prev = a_next;
        }
        Ok(Phase::Change(total))
    }

    fn refine(&mut self, path: &dyn Fn(f64) -> C64, ta: f64, tb: f64, aa: f64, ab: f64, depth: usize) -> Result<Phase> {
        let tm = 0.5 * (ta + tb);
        let Some(am) = self.arg_at(path(tm))? else { return Ok(Phase::NearZero) };
        let d1 = principal(am - aa);
        let d2 = principal(ab - am);
        let d = principal(ab - aa);
        if d1.abs() < PI / 4.0 && d2.abs() < PI / 4.0 && (d1 + d2 - d).abs() < 1e-8 {
            return Ok(Phase::Change(d));
        }
        if depth > 40 {
            return Ok(Phase::NearZero);
        }
        let p1 = self.refine(path, ta, tm, aa, am, depth + 1)?;
        let Phase::Change(c1) = p1 else { return Ok(Phase::NearZero) };
        let p2 = self.refine(path, tm, tb, am, ab, depth + 1)?;
        let Phase::Change(c2) = p2 else { return Ok(Phase::NearZero) };
        Ok(Phase::Change(c1 + c2))
    }

    fn arc(&mut self, r: f64, ta: f64, tb: f64) -> Result<Phase> {
        let density = 4.0 + r.powf(1.0 / self.n as f64);
        let pieces = ((tb - ta).abs() * density).ceil().max(8.0) as usize;
        self.phase_along(&|t| C64::from_polar(r, ta + (tb - ta) * t), pieces)
    }

    fn ray(&mut self, t: f64, ra: f64, rb: f64) -> Result<Phase> {
        let rm = ra.max(rb);
        let pieces =
            (((rb - ra).abs() / rm.max(1e-300)) * (4.0 + rm.powf(1.0 / self.n as f64))).ceil().max(4.0) as usize;
        self.phase_along(&|s| C64::from_polar(ra + (rb - ra) * s, t), pieces)
    }

    /// Number of zeros inside the box, or `None` when a zero sits on its boundary.
    pub fn count(&mut self, b: &PolarBox) -> Result<Option<usize>> {
        let mut total = 0.0;
        let mut add = |p: Phase| match p {
            Phase::Change(d) => {
                total += d;
                true
            }
            Phase::NearZero => false,
        };
        if b.is_annulus() {
            let outer = self.arc(b.r1, b.t0, b.t1)?;
            if !add(outer) {
                return Ok(None);
            }
            if b.r0 > 0.0 {
                let inner = self.arc(b.r0, b.t1, b.t0)?;
                if !add(inner) {
                    return Ok(None);
                }
            }
        } else {
            let outer = self.arc(b.r1, b.t0, b.t1)?;
            if !add(outer) {
                return Ok(None);
            }
            let down = self.ray(b.t1, b.r1, b.r0)?;
            if !add(down) {
                return Ok(None);
            }
            if b.r0 > 0.0 {
                let inner = self.arc(b.r0, b.t1, b.t0)?;
                if !add(inner) {
                    return Ok(None);
                }
            }
            let up = self.ray(b.t0, b.r0, b.r1)?;
            if !add(up) {
                return Ok(None);
            }
        }
        let w = total / (2.0 * PI);
        if (w - w.round()).abs() > 0.05 || w.round() < 0.0 {
            return Ok(None);
        }
        Ok(Some(w.round() as usize))
    }

    /// Newton iteration with a central-difference derivative.
    pub fn newton(&mut self, start: C64, max_iter: usize) -> Result<Option<C64>> {
        let mut z = start;
        for _ in 0..max_iter {
            let scale = z.norm().max(1.0);
            let h = 1e-6 * scale;
            let v = self.value(z)?;
            if v.is_zero() {
                return Ok(Some(z));
            }
            let vp = self.value(z + h)?;
            let vm = self.value(z - h)?;
            let slope = vp.ratio(v) - vm.ratio(v);
            if slope.norm() == 0.0 || !slope.re.is_finite() {
                return Ok(None);
            }
            let step = C64::new(2.0 * h, 0.0) / slope;
            if !step.re.is_finite() || !step.im.is_finite() {
                return Ok(None);
            }
            z -= step;
            if step.norm() <= 1e-13 * scale {
                return Ok(Some(z));
            }
        }
        Ok(None)
    }

    /// All zeros inside `outer` by recursive subdivision.
    pub fn zeros_in(&mut self, outer: PolarBox, k: usize) -> Result<Vec<C64>> {
        let scale = outer.r1;
        let mut found = Vec::new();
        let c0 = self.count_nudged(outer, k)?;
        let mut stack = vec![(outer, c0)];
        while let Some((b, c)) = stack.pop() {
            if c == 0 {
                continue;
            }
            if c == 1 {
                if let Some(z) = self.newton(b.center(), 60)? {
                    if b.contains(z, 1e-9) {
                        found.push(z);
                        continue;
                    }
                }
            }
            let radial = b.r1 - b.r0;
            let angular = 0.5 * (b.r0 + b.r1) * (b.t1 - b.t0);
            if radial.max(angular) < 1e-10 * scale {
                let z = b.center();
                return Err(Error::Multiplicity { k, re: z.re, im: z.im });
            }
            let children = self.split(b, c, k)?;
            stack.extend(children);
        }
        found.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        for (i, a) in found.iter().enumerate() {
            if found[i + 1..].iter().any(|b| (a - b).norm() < 1e-7 * a.norm().max(1.0)) {
                return Err(Error::Multiplicity { k, re: a.re, im: a.im });
            }
        }
        Ok(found)
    }

    fn count_nudged(&mut self, b: PolarBox, k: usize) -> Result<usize> {
        let mut bb = b;
        for attempt in 0..8 {
            if let Some(c) = self.count(&bb)? {
                return Ok(c);
            }
            let f = 1.0 + 1e-3 * (attempt as f64 + 1.0);
            bb.r1 = b.r1 * f;
        }
        Err(Error::RootSearch { k, detail: format!("no clean contour near radius {:e}", b.r1) })
    }

    fn split(&mut self, b: PolarBox, c: usize, k: usize) -> Result<Vec<(PolarBox, usize)>> {
        for attempt in 0..12 {
            let frac = 0.5 + 0.0731 * attempt as f64 * if attempt % 2 == 0 { 1.0 } else { -1.0 };
            let (p, q) = if b.is_annulus() && b.r0 == 0.0 && attempt == 0 {
                // a disk: split by a circle first
                let r = b.r1 * frac;
                (PolarBox { r1: r, ..b }, PolarBox { r0: r, ..b })
            } else if b.is_annulus() {
                let t = b.t0 + PI * (1.0 + 0.1 * attempt as f64);
                (PolarBox { t1: t, ..b }, PolarBox { t0: t, t1: b.t0 + 2.0 * PI, ..b })
            } else if b.r1 - b.r0 > 0.5 * (b.r0 + b.r1) * (b.t1 - b.t0) {
                let r = b.r0 + (b.r1 - b.r0) * frac;
                (PolarBox { r1: r, ..b }, PolarBox { r0: r, ..b })
            } else {
                let t = b.t0 + (b.t1 - b.t0) * frac;
                (PolarBox { t1: t, ..b }, PolarBox { t0: t, ..b })
            };
            let (Some(cp), Some(cq)) = (self.count(&p)?, self.count(&q)?) else { continue };
            if cp + cq == c {
                return Ok(vec![(p, cp), (q, cq)]);
            }
        }
        let z = b.center();
        Err(Error::RootSearch { k, detail: format!("inconsistent winding counts near {z}") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scaled(z: C64) -> Scaled {
        Scaled::one() * z
    }

    #[test]
    fn counts_and_finds_polynomial_zeros() {
        let roots = [C64::new(-1.0, 0.0), C64::new(2.0, 1.0), C64::new(2.0, -1.0), C64::new(0.0, 5.0)];
        let f = |z: C64| Ok(scaled(roots.iter().map(|r| z - r).product()));
        let mut rf = RootFinder::new(f, 1);
        assert_eq!(rf.count(&PolarBox::disk(3.0, 0.3)).unwrap(), Some(3));
        let z = rf.zeros_in(PolarBox::disk(6.0, 0.3), 1).unwrap();
        assert_eq!(z.len(), 4);
        for r in roots {
            assert!(z.iter().any(|w| (w - r).norm() < 1e-10), "{r}");
        }
    }

    #[test]
    fn finds_sine_zeros_on_real_axis() {
        // sin(sqrt(-z)) / sqrt(-z) vanishes at z = -(pi l)^2
        let f = |z: C64| {
            let s = (-z).sqrt();
            Ok(scaled(if s.norm() < 1e-8 { C64::new(1.0, 0.0) } else { s.sin() / s }))
        };
        let mut rf = RootFinder::new(f, 2);
        let z = rf.zeros_in(PolarBox::disk(150.0, 0.3), 1).unwrap();
        assert_eq!(z.len(), 3);
        for (l, w) in z.iter().enumerate() {
            let exact = -(PI * (l + 1) as f64).powi(2);
            assert!((w - exact).norm() < 1e-9 * exact.abs());
        }
    }

    #[test]
    fn double_zero_is_reported() {
        let f = |z: C64| Ok(scaled((z - 1.0) * (z - 1.0)));
        let mut rf = RootFinder::new(f, 1);
        let r = rf.zeros_in(PolarBox::disk(2.0, 0.3), 1);
        assert!(matches!(r, Err(Error::Multiplicity { .. }) | Err(Error::RootSearch { .. })), "{r:?}");
    }
}
