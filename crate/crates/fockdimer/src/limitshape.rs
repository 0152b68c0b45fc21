//! Saddle-point analysis of single-edge probabilities.
//!
//! For an edge at macroscopic position `(x, y)` the integrand of the inverse
//! behaves like `exp(n(F(u) - F(v)))` with
//!
//! ```text
//! F(u; x, y) = 1/l Σ_j [y log E(α_j, u) + (1-y) log E(β_j, u)]
//!            - 1/k Σ_j [x log E(γ_j, u) + (1-x) log E(δ_j, u)]
//! ```
//!
//! Only `dF` and `d²F` enter the decision procedures; both are single valued.
//! In angle coordinates `z` (the point `exp(2iz)` on the sphere, `z` itself on
//! the torus) `dF/dz` is real on the real ovals, which is what makes the
//! double-root conditions a real linear system in `(x, y)`.

use crate::curve::{theta1_derivs, Curve};
use crate::inverse::Method;
use crate::kasteleyn::FockModel;
use crate::lattice::Family;
use crate::measures::{marginal, EdgePair};
use crate::{Error, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A critical point closer than this to a real oval counts as real.
pub const REAL_TOL: f64 = 1e-7;
/// The two non-forced critical points closer than this form a double root.
pub const DOUBLE_ROOT_TOL: f64 = 1e-6;
/// Default number of samples per real oval of an arctic curve.
pub const ARCTIC_SAMPLES: usize = 2048;

const MERGE_TOL: f64 = 1e-13;
const ARC_SAMPLES: usize = 256;
const OVAL_SAMPLES: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Pole {
    angle: f64,
    family: Family,
    /// Coefficient `c[0] + c[1] x + c[2] y` of `log E(angle, u)` in `F`.
    c: [f64; 3],
}

impl Pole {
    fn coef(&self, x: f64, y: f64) -> f64 {
        self.c[0] + self.c[1] * x + self.c[2] * y
    }
}

/// The action `F(·; x, y)` of a periodic model.
#[derive(Clone, Debug)]
pub struct Action {
    pub curve: Curve,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    /// Distinct poles of `dF`, in increasing angle from the first α.
    poles: Vec<Pole>,
}

/// Which real oval of the curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    /// The oval carrying the angles.
    A0,
    /// The second oval of the torus, `Im z = Im τ / 2`.
    A1,
}

impl std::str::FromStr for Component {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "a0" | "A0" => Ok(Component::A0),
            "a1" | "A1" => Ok(Component::A1),
            _ => Err(Error::Config(format!("unknown component {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "lowercase")]
pub enum Phase {
    Liquid,
    /// The extra critical points sit on the arc of `A0` with this index
    /// (arc `i` joins poles `i` and `i+1`, see [`Action::arc_families`]).
    Frozen {
        component: usize,
    },
    Gas {
        oval: usize,
    },
    /// The two extra critical points coincide.
    Boundary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub y: f64,
    pub phase: Phase,
    /// All critical points, in angle coordinates.
    pub witnesses: Vec<C64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPoints {
    /// Angle coordinates; real part in `[a, a + period)` for the first α
    /// angle `a`, imaginary part in `[0, Im τ)` on the torus.
    pub points: Vec<C64>,
    /// Number of zeros of `dF` on the whole curve.
    pub expected: usize,
    /// Independent count: degree of the cleared polynomial on the sphere,
    /// argument principle on the torus.
    pub certified: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcticSample {
    /// Real coordinate of the double critical point along the oval.
    pub u0: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArcticCurve {
    pub component: Component,
    pub samples: Vec<ArcticSample>,
    /// Grid points where the linear system was singular.
    pub skipped: usize,
}

impl Action {
    /// `alpha`, `beta` have period `l`, `gamma`, `delta` period `k`. Angles
    /// are taken modulo the period of the curve and must satisfy the cyclic
    /// order `α < γ < β < δ` family by family.
    pub fn new(
        curve: Curve,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        delta: Vec<f64>,
    ) -> Result<Action, Error> {
        if [&alpha, &beta, &gamma, &delta].iter().any(|v| v.is_empty()) {
            return Err(Error::Config(
                "every angle family needs at least one value".into(),
            ));
        }
        if alpha.len() != beta.len() || gamma.len() != delta.len() {
            return Err(Error::Config(
                "alpha/beta share one period and gamma/delta another".into(),
            ));
        }
        if [&alpha, &beta, &gamma, &delta]
            .iter()
            .any(|v| v.iter().any(|a| !a.is_finite()))
        {
            return Err(Error::Config("angles must be finite".into()));
        }
        let period = curve.period();
        let (l, k) = (alpha.len() as f64, gamma.len() as f64);
        let mut raw = Vec::new();
        raw.extend(alpha.iter().map(|&a| (a, Family::A, [0.0, 0.0, 1.0 / l])));
        raw.extend(
            beta.iter()
                .map(|&a| (a, Family::B, [1.0 / l, 0.0, -1.0 / l])),
        );
        raw.extend(gamma.iter().map(|&a| (a, Family::C, [0.0, -1.0 / k, 0.0])));
        raw.extend(
            delta
                .iter()
                .map(|&a| (a, Family::D, [-1.0 / k, 1.0 / k, 0.0])),
        );
        for p in &mut raw {
            p.0 = p.0.rem_euclid(period);
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut poles: Vec<Pole> = Vec::new();
        for (angle, family, c) in raw {
            if let Some(last) = poles.last_mut() {
                if angle - last.angle < MERGE_TOL {
                    if last.family != family {
                        return Err(Error::Config(format!(
                            "angle {angle} is shared by two families"
                        )));
                    }
                    (0..3).for_each(|i| last.c[i] += c[i]);
                    continue;
                }
            }
            poles.push(Pole { angle, family, c });
        }
        let np = poles.len();
        if np > 1 && poles[0].angle + period - poles[np - 1].angle < MERGE_TOL {
            let last = poles.pop().unwrap();
            if last.family != poles[0].family {
                return Err(Error::Config("angle shared by two families".into()));
            }
            (0..3).for_each(|i| poles[0].c[i] += last.c[i]);
        }
        let np = poles.len();
        let start = (0..np)
            .find(|&i| poles[i].family == Family::A && poles[(i + np - 1) % np].family != Family::A)
            .ok_or_else(|| {
                Error::Config("angles must satisfy alpha < gamma < beta < delta cyclically".into())
            })?;
        poles.rotate_left(start);
        let base = poles[0].angle;
        for p in &mut poles {
            if p.angle < base {
                p.angle += period;
            }
        }
        let order = [Family::A, Family::C, Family::B, Family::D];
        let mut stage = 0;
        for p in &poles {
            while stage < 4 && order[stage] != p.family {
                stage += 1;
            }
            if stage == 4 {
                return Err(Error::Config(
                    "angles must satisfy alpha < gamma < beta < delta cyclically".into(),
                ));
            }
        }
        Ok(Action {
            curve,
            alpha,
            beta,
            gamma,
            delta,
            poles,
        })
    }

    pub fn homogeneous(
        curve: Curve,
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
    ) -> Result<Action, Error> {
        Action::new(curve, vec![alpha], vec![beta], vec![gamma], vec![delta])
    }

    /// Action of a model whose α, β angles have period `l` and γ, δ angles
    /// period `k`.
    pub fn from_model(m: &FockModel, k: usize, l: usize) -> Result<Action, Error> {
        let a = &m.angles;
        let n = m.n();
        if k == 0 || l == 0 || k > n || l > n {
            return Err(Error::Config(format!(
                "periods ({k}, {l}) do not fit n = {n}"
            )));
        }
        let periodic = |v: &[f64], p: usize| (0..n).all(|j| (v[j] - v[j % p]).abs() < 1e-12);
        if !(periodic(&a.alpha, l)
            && periodic(&a.beta, l)
            && periodic(&a.gamma, k)
            && periodic(&a.delta, k))
        {
            return Err(Error::Config(format!("angles are not ({k}, {l})-periodic")));
        }
        Action::new(
            m.curve,
            a.alpha[..l].to_vec(),
            a.beta[..l].to_vec(),
            a.gamma[..k].to_vec(),
            a.delta[..k].to_vec(),
        )
    }

    pub fn period(&self) -> f64 {
        self.curve.period()
    }

    fn tau_im(&self) -> Option<f64> {
        match self.curve {
            Curve::Genus0 => None,
            Curve::Genus1 { tau_im } => Some(tau_im),
        }
    }

    /// Number of distinct poles of `dF`.
    pub fn pole_count(&self) -> usize {
        self.poles.len()
    }

    /// Pole angles, increasing from the first α.
    pub fn pole_angles(&self) -> Vec<(f64, Family)> {
        self.poles.iter().map(|p| (p.angle, p.family)).collect()
    }

    /// Families at the two ends of arc `i` of `A0`.
    pub fn arc_families(&self, i: usize) -> (Family, Family) {
        let np = self.poles.len();
        (self.poles[i % np].family, self.poles[(i + 1) % np].family)
    }

    fn check_xy(x: f64, y: f64) -> Result<(), Error> {
        if !(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0) {
            return Err(Error::Domain(format!(
                "({x}, {y}) is not in the open unit square"
            )));
        }
        Ok(())
    }

    /// `d/dz log E(a, z)` up to an additive constant, and its derivative.
    fn h(&self, z: C64, a: f64) -> (C64, C64) {
        let w = z - a;
        match self.curve {
            // d/dz log(exp(2iz) - exp(2ia)) = i + cot(z - a)
            Curve::Genus0 => {
                let (s, c) = (w.sin(), w.cos());
                (c / s, -(s * s).inv())
            }
            Curve::Genus1 { tau_im } => {
                let (t0, t1, t2) = theta1_derivs(w * PI, (-PI * tau_im).exp());
                let r = t1 / t0;
                (r * PI, (t2 / t0 - r * r) * (PI * PI))
            }
        }
    }

    /// `dF/dz` and `d²F/dz²` split as `A + xB + yC`.
    fn affine_dz(&self, z: C64) -> ([C64; 3], [C64; 3]) {
        let mut g = [C64::new(0.0, 0.0); 3];
        let mut gp = [C64::new(0.0, 0.0); 3];
        for p in &self.poles {
            let (h, hp) = self.h(z, p.angle);
            for i in 0..3 {
                g[i] += h * p.c[i];
                gp[i] += hp * p.c[i];
            }
        }
        (g, gp)
    }

    /// `dF/dz` and `d²F/dz²` in the angle coordinate.
    pub fn dfdz(&self, z: C64, x: f64, y: f64) -> (C64, C64) {
        let (g, gp) = self.affine_dz(z);
        (g[0] + g[1] * x + g[2] * y, gp[0] + gp[1] * x + gp[2] * y)
    }

    fn check_point(&self, u: C64) -> Result<(), Error> {
        for p in &self.poles {
            let d = match self.curve {
                Curve::Genus0 => (u - self.curve.point(C64::new(p.angle, 0.0))).norm(),
                Curve::Genus1 { .. } => {
                    let w = u - p.angle;
                    let re = w.re - w.re.round();
                    let tau = self.tau_im().unwrap();
                    let im = w.im - (w.im / tau).round() * tau;
                    re.hypot(im)
                }
            };
            if d < 1e-14 {
                return Err(Error::Domain(format!("{u} is an angle of the model")));
            }
        }
        Ok(())
    }

    /// `F(u; x, y)` in the uniformizing coordinate `u` of the curve, with
    /// principal logarithms.
    pub fn f(&self, u: C64, x: f64, y: f64) -> Result<C64, Error> {
        self.check_point(u)?;
        Ok(self
            .poles
            .iter()
            .map(|p| {
                let e = match self.curve {
                    Curve::Genus0 => u - self.curve.point(C64::new(p.angle, 0.0)),
                    Curve::Genus1 { tau_im } => {
                        theta1_derivs((u - p.angle) * PI, (-PI * tau_im).exp()).0
                    }
                };
                e.ln() * p.coef(x, y)
            })
            .sum())
    }

    /// `∂F/∂u` and `∂²F/∂u²` in the uniformizing coordinate of the curve.
    pub fn df(&self, u: C64, x: f64, y: f64) -> Result<(C64, C64), Error> {
        self.check_point(u)?;
        match self.curve {
            Curve::Genus0 => {
                let mut d1 = C64::new(0.0, 0.0);
                let mut d2 = C64::new(0.0, 0.0);
                for p in &self.poles {
                    let r = (u - self.curve.point(C64::new(p.angle, 0.0))).inv();
                    d1 += r * p.coef(x, y);
                    d2 -= r * r * p.coef(x, y);
                }
                Ok((d1, d2))
            }
            Curve::Genus1 { .. } => Ok(self.dfdz(u, x, y)),
        }
    }

    /// Numerator of `∂F/∂u` on the sphere, cleared of its denominators,
    /// coefficients from degree 0 upwards. Its nominal degree is the number
    /// of poles minus two; the leading coefficient vanishes when `∞` is a
    /// critical point.
    pub fn critical_polynomial(&self, x: f64, y: f64) -> Result<Vec<C64>, Error> {
        if self.curve.genus() != 0 {
            return Err(Error::Domain(
                "the critical polynomial exists on the sphere only".into(),
            ));
        }
        let pts: Vec<(C64, f64)> = self
            .poles
            .iter()
            .map(|p| (self.curve.point(C64::new(p.angle, 0.0)), p.coef(x, y)))
            .collect();
        let np = pts.len();
        let mut num = vec![C64::new(0.0, 0.0); np];
        for (i, &(_, c)) in pts.iter().enumerate() {
            let mut prod = vec![C64::new(1.0, 0.0)];
            for (j, &(q, _)) in pts.iter().enumerate() {
                if j != i {
                    prod = mul_linear(&prod, q);
                }
            }
            for (a, b) in num.iter_mut().zip(&prod) {
                *a += b * c;
            }
        }
        // the coefficients of F sum to zero, so the top coefficient cancels
        num.pop();
        Ok(num)
    }

    fn fold(&self, z: C64) -> C64 {
        let base = self.poles[0].angle;
        let re = base + (z.re - base).rem_euclid(self.period());
        let im = match self.tau_im() {
            None => z.im,
            Some(tau) => z.im.rem_euclid(tau),
        };
        C64::new(re, im)
    }

    /// Oval on which a folded critical point lies, if any.
    pub fn oval_of(&self, z: C64) -> Option<Component> {
        match self.tau_im() {
            None => (z.im.abs() < REAL_TOL).then_some(Component::A0),
            Some(tau) => {
                if z.im < REAL_TOL || tau - z.im < REAL_TOL {
                    Some(Component::A0)
                } else if (z.im - tau / 2.0).abs() < REAL_TOL {
                    Some(Component::A1)
                } else {
                    None
                }
            }
        }
    }

    /// All zeros of `dF` on the curve, with multiplicity, in angle
    /// coordinates. On the sphere they are the roots of the cleared
    /// polynomial; on the torus they are located by sign changes on the
    /// two real ovals and Newton iteration off them, and their number is
    /// certified by the argument principle.
    pub fn critical_points(&self, x: f64, y: f64) -> Result<CriticalPoints, Error> {
        Self::check_xy(x, y)?;
        match self.tau_im() {
            None => self.critical_points_sphere(x, y),
            Some(tau) => self.critical_points_torus(x, y, tau),
        }
    }

    fn critical_points_sphere(&self, x: f64, y: f64) -> Result<CriticalPoints, Error> {
        let mut poly = self.critical_polynomial(x, y)?;
        let nominal = poly.len() - 1;
        let scale = poly.iter().map(|c| c.norm()).fold(0.0, f64::max);
        while poly.len() > 1 && poly.last().unwrap().norm() <= 1e-12 * scale {
            poly.pop();
        }
        let roots = poly_roots(&poly)?;
        let mut points: Vec<C64> = roots
            .iter()
            .map(|&r| self.fold(C64::new(r.arg() / 2.0, -r.norm().ln() / 2.0)))
            .collect();
        // roots at u = ∞
        points.resize(nominal, C64::new(self.poles[0].angle, f64::NEG_INFINITY));
        Ok(CriticalPoints {
            points,
            expected: self.poles.len() - 2,
            certified: nominal,
        })
    }

    fn real_roots(
        &self,
        x: f64,
        y: f64,
        im: f64,
        a: f64,
        b: f64,
        samples: usize,
        clustered: bool,
    ) -> Vec<f64> {
        let g = |s: f64| self.dfdz(C64::new(s, im), x, y).0.re;
        let at = |k: usize| {
            let t = (k as f64 + 0.5) / samples as f64;
            if clustered {
                a + (b - a) * (1.0 - (PI * t).cos()) / 2.0
            } else {
                a + (b - a) * t
            }
        };
        let mut pts: Vec<f64> = (0..samples).map(at).collect();
        if !clustered {
            // closed oval
            pts.push(pts[0] + (b - a));
        }
        let vals: Vec<f64> = pts.iter().map(|&s| g(s)).collect();
        let mut out = Vec::new();
        for i in 0..pts.len() - 1 {
            let (mut lo, mut hi, glo) = (pts[i], pts[i + 1], vals[i]);
            if vals[i] == 0.0 {
                out.push(lo);
                continue;
            }
            if glo.signum() == vals[i + 1].signum() {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid).signum() == glo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }

    /// Total change of `arg dF` along `Im z = c` over one real period.
    fn arg_change(&self, x: f64, y: f64, c: f64) -> f64 {
        let base = self.poles[0].angle
            + 0.5 * (self.poles[1 % self.poles.len()].angle - self.poles[0].angle);
        let g = |s: f64| self.dfdz(C64::new(s, c), x, y).0;
        fn seg(g: &dyn Fn(f64) -> C64, a: f64, b: f64, ga: C64, gb: C64, depth: u32) -> f64 {
            let d = (gb / ga).arg();
            if d.abs() < 0.3 || depth > 60 {
                return d;
            }
            let m = 0.5 * (a + b);
            let gm = g(m);
            seg(g, a, m, ga, gm, depth + 1) + seg(g, m, b, gm, gb, depth + 1)
        }
        let n = 256;
        let s: Vec<f64> = (0..=n)
            .map(|k| base + self.period() * k as f64 / n as f64)
            .collect();
        let v: Vec<C64> = s.iter().map(|&t| g(t)).collect();
        (0..n)
            .map(|k| seg(&g, s[k], s[k + 1], v[k], v[k + 1], 0))
            .sum()
    }

    fn winding(&self, x: f64, y: f64, lo: f64, hi: f64) -> Result<i64, Error> {
        let w = (self.arg_change(x, y, lo) - self.arg_change(x, y, hi)) / (2.0 * PI);
        if (w - w.round()).abs() > 0.05 {
            return Err(Error::NoConvergence(format!(
                "argument principle gives {w}"
            )));
        }
        Ok(w.round() as i64)
    }

    fn newton(&self, x: f64, y: f64, mut z: C64, tau: f64) -> Option<C64> {
        for _ in 0..60 {
            let (g, gp) = self.dfdz(z, x, y);
            let step = g / gp;
            if !step.re.is_finite() || !step.im.is_finite() {
                return None;
            }
            z -= step;
            if z.im.abs() > 2.0 * tau {
                return None;
            }
            if step.norm() < 1e-14 * (1.0 + z.norm()) {
                return Some(z);
            }
        }
        let (g, _) = self.dfdz(z, x, y);
        (g.norm() < 1e-9).then_some(z)
    }

    fn critical_points_torus(&self, x: f64, y: f64, tau: f64) -> Result<CriticalPoints, Error> {
        let np = self.poles.len();
        let period = self.period();
        let mut points = Vec::new();
        for i in 0..np {
            let a = self.poles[i].angle;
            let b = if i + 1 < np {
                self.poles[i + 1].angle
            } else {
                self.poles[0].angle + period
            };
            points.extend(
                self.real_roots(x, y, 0.0, a, b, ARC_SAMPLES, true)
                    .into_iter()
                    .map(|s| C64::new(s, 0.0)),
            );
        }
        let base = self.poles[0].angle;
        points.extend(
            self.real_roots(x, y, tau / 2.0, base, base + period, OVAL_SAMPLES, false)
                .into_iter()
                .map(|s| C64::new(s, tau / 2.0)),
        );
        let h = 1e-6 * tau;
        let around = self.winding(x, y, -h, tau / 2.0 + h)? + np as i64;
        let strip = self.winding(x, y, h, tau / 2.0 - h)?;
        let certified = around + strip;
        if certified < 0 {
            return Err(Error::Verification(format!(
                "negative zero count {certified}"
            )));
        }
        let certified = certified as usize;
        if points.len() < certified {
            // conjugate pair off the real ovals
            let mut found: Vec<C64> = Vec::new();
            'grids: for grid in [16usize, 64] {
                for i in 0..grid {
                    for j in 0..grid {
                        let seed = C64::new(
                            base + period * (i as f64 + 0.5) / grid as f64,
                            tau / 2.0 * (j as f64 + 0.5) / grid as f64,
                        );
                        let Some(z) = self.newton(x, y, seed, tau) else {
                            continue;
                        };
                        let mut z = self.fold(z);
                        if z.im > tau / 2.0 {
                            z = self.fold(z.conj());
                        }
                        let on_real = points.iter().any(|p| (p - z).norm() < 1e-8);
                        if !on_real && !found.iter().any(|p| (p - z).norm() < 1e-8) {
                            found.push(z);
                        }
                        if points.len() + 2 * found.len() >= certified {
                            break 'grids;
                        }
                    }
                }
            }
            for z in found {
                points.push(z);
                points.push(self.fold(z.conj()));
            }
        }
        if points.len() != certified {
            return Err(Error::Verification(format!(
                "found {} zeros of dF but the argument principle counts {certified}",
                points.len()
            )));
        }
        Ok(CriticalPoints {
            points,
            expected: np,
            certified,
        })
    }

    fn arc_of(&self, s: f64) -> usize {
        let np = self.poles.len();
        (0..np)
            .rev()
            .find(|&i| self.poles[i].angle <= s)
            .unwrap_or(np - 1)
    }

    /// Liquid if the non-forced pair of critical points is non-real, frozen
    /// or gaseous according to the oval carrying it otherwise.
    pub fn classify_phase(&self, x: f64, y: f64) -> Result<PhasePoint, Error> {
        let cp = self.critical_points(x, y)?;
        if cp.certified != cp.expected {
            return Err(Error::Verification(format!(
                "{} critical points, expected {}",
                cp.certified, cp.expected
            )));
        }
        let pts = &cp.points;
        let closest = |v: &[C64]| {
            let mut d = f64::INFINITY;
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    d = d.min((v[i] - v[j]).norm());
                }
            }
            d
        };
        let off: Vec<C64> = pts
            .iter()
            .copied()
            .filter(|&z| self.oval_of(z).is_none())
            .collect();
        let phase = if !off.is_empty() {
            if off.len() != 2 {
                return Err(Error::Verification(format!(
                    "{} non-real critical points",
                    off.len()
                )));
            }
            if closest(&off) < DOUBLE_ROOT_TOL {
                Phase::Boundary
            } else {
                Phase::Liquid
            }
        } else {
            let a1: Vec<C64> = pts
                .iter()
                .copied()
                .filter(|&z| self.oval_of(z) == Some(Component::A1))
                .collect();
            if a1.len() > 2 {
                if closest(&a1) < DOUBLE_ROOT_TOL {
                    Phase::Boundary
                } else {
                    Phase::Gas { oval: 0 }
                }
            } else {
                let np = self.poles.len();
                let mut per_arc = vec![Vec::new(); np];
                for &z in pts
                    .iter()
                    .filter(|&&z| self.oval_of(z) == Some(Component::A0))
                {
                    per_arc[self.arc_of(z.re)].push(z);
                }
                let forced =
                    |i: usize| usize::from(self.poles[i].family == self.poles[(i + 1) % np].family);
                let arc = (0..np)
                    .find(|&i| per_arc[i].len() >= forced(i) + 2)
                    .ok_or_else(|| {
                        Error::Verification("no arc carries the extra critical points".into())
                    })?;
                if closest(&per_arc[arc]) < DOUBLE_ROOT_TOL {
                    Phase::Boundary
                } else {
                    Phase::Frozen { component: arc }
                }
            }
        };
        Ok(PhasePoint {
            x,
            y,
            phase,
            witnesses: cp.points,
        })
    }

    /// Point `(x, y)` having `z0` as a double critical point, if the linear
    /// system is regular.
    pub fn arctic_point(&self, z0: C64) -> Option<(f64, f64)> {
        let (g, gp) = self.affine_dz(z0);
        let (b, c, b2, c2) = (g[1].re, g[2].re, gp[1].re, gp[2].re);
        let det = b * c2 - c * b2;
        let scale = (b.abs() + c.abs()) * (b2.abs() + c2.abs());
        if !(det.abs() > 1e-13 * scale) {
            return None;
        }
        let (r1, r2) = (-g[0].re, -gp[0].re);
        Some(((r1 * c2 - c * r2) / det, (b * r2 - r1 * b2) / det))
    }

    /// Arctic curve traced by double critical points on one real oval,
    /// sampled on a grid offset by half a step from the angles. Solutions
    /// outside the closed unit square are dropped.
    pub fn arctic_curve(&self, component: Component, samples: usize) -> Result<ArcticCurve, Error> {
        let im = match (component, self.tau_im()) {
            (Component::A0, _) => 0.0,
            (Component::A1, Some(tau)) => tau / 2.0,
            (Component::A1, None) => {
                return Err(Error::Domain("the sphere has a single real oval".into()))
            }
        };
        if samples == 0 {
            return Err(Error::Config("need at least one sample".into()));
        }
        let base = self.poles[0].angle;
        let mut out = Vec::with_capacity(samples);
        let mut skipped = 0;
        for k in 0..samples {
            let s = base + self.period() * (k as f64 + 0.5) / samples as f64;
            match self.arctic_point(C64::new(s, im)) {
                Some((x, y)) => {
                    let tol = 1e-12;
                    if x >= -tol && x <= 1.0 + tol && y >= -tol && y <= 1.0 + tol {
                        out.push(ArcticSample { u0: s, x, y });
                    }
                }
                None => skipped += 1,
            }
        }
        Ok(ArcticCurve {
            component,
            samples: out,
            skipped,
        })
    }
}

fn mul_linear(p: &[C64], root: C64) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); p.len() + 1];
    for (i, &c) in p.iter().enumerate() {
        out[i + 1] += c;
        out[i] -= c * root;
    }
    out
}

fn horner(p: &[C64], z: C64) -> (C64, C64) {
    let mut v = C64::new(0.0, 0.0);
    let mut d = C64::new(0.0, 0.0);
    for &c in p.iter().rev() {
        d = d * z + v;
        v = v * z + c;
    }
    (v, d)
}

/// Roots of a polynomial (coefficients from degree 0) as eigenvalues of its
/// companion matrix, polished by Newton steps.
pub fn poly_roots(p: &[C64]) -> Result<Vec<C64>, Error> {
    let d = p.len() - 1;
    if d == 0 {
        return Ok(Vec::new());
    }
    let lead = p[d];
    let mut m = DMatrix::<C64>::zeros(d, d);
    for i in 1..d {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..d {
        m[(i, d - 1)] = -p[i] / lead;
    }
    let ev = m
        .eigenvalues()
        .ok_or_else(|| Error::NoConvergence("companion eigenvalues".into()))?;
    Ok(ev
        .iter()
        .map(|&r| {
            let mut z = r;
            for _ in 0..3 {
                let (v, dv) = horner(p, z);
                let next = z - v / dv;
                if !next.re.is_finite() || horner(p, next).0.norm() >= v.norm() {
                    break;
                }
                z = next;
            }
            z
        })
        .collect())
}

/// Cross ratio `(β-α)(δ-γ)/((β-γ)(δ-α))` of four points of the unit
/// circle in cyclic order `α, γ, β, δ`.
pub fn cross_ratio(alpha: C64, gamma: C64, beta: C64, delta: C64) -> Result<f64, Error> {
    let pts = [alpha, gamma, beta, delta];
    for i in 0..4 {
        if (pts[i].norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "{} is not on the unit circle",
                pts[i]
            )));
        }
        for j in i + 1..4 {
            if (pts[i] - pts[j]).norm() < 1e-12 {
                return Err(Error::Domain("repeated point".into()));
            }
        }
    }
    let r = (beta - alpha) * (delta - gamma) / ((beta - gamma) * (delta - alpha));
    if r.im.abs() > 1e-9 * r.norm() || r.re <= 1.0 {
        return Err(Error::Domain(
            "points are not in the cyclic order alpha, gamma, beta, delta".into(),
        ));
    }
    Ok(r.re)
}

/// [`cross_ratio`] of the points `exp(2i·angle)`.
pub fn angle_cross_ratio(alpha: f64, gamma: f64, beta: f64, delta: f64) -> Result<f64, Error> {
    let p = |a: f64| C64::new(0.0, 2.0 * a).exp();
    cross_ratio(p(alpha), p(gamma), p(beta), p(delta))
}

/// Angles `(α, β, γ, δ)` of the points `±exp(±iθ/2)` with cross ratio
/// `r = cos(θ/2)^-2`.
pub fn ellipse_angles(r: f64) -> Result<[f64; 4], Error> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::Domain(format!("cross ratio {r} must exceed 1")));
    }
    let theta = 2.0 * (1.0 / r.sqrt()).acos();
    Ok([
        -theta / 4.0,
        PI / 2.0 - theta / 4.0,
        theta / 4.0,
        PI / 2.0 + theta / 4.0,
    ])
}

/// `r²X² + r²Y² + 2r(2-r)XY - (r-1)` with `X = x - 1/2`, `Y = y - 1/2`.
pub fn ellipse_residual(r: f64, x: f64, y: f64) -> f64 {
    let (a, b) = (x - 0.5, y - 0.5);
    r * r * a * a + r * r * b * b + 2.0 * r * (2.0 - r) * a * b - (r - 1.0)
}

/// South-west edge `w = (2i, 2j+1)`, `b = (2i-1, 2j)` closest to the
/// macroscopic point `(x, y)` of `Az_n`.
pub fn sw_edge_near(n: usize, x: f64, y: f64) -> EdgePair {
    let n = n as f64;
    let i = (x * n).round().clamp(1.0, n) as i32;
    let j = (y * n).round().clamp(0.0, n - 1.0) as i32;
    ((2 * i, 2 * j + 1), (2 * i - 1, 2 * j))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub x: f64,
    pub y: f64,
    pub white: (i32, i32),
    pub black: (i32, i32),
    pub marginal: f64,
    pub phase: Phase,
}

/// Exact marginal of the south-west edge nearest each point, next to the
/// limiting phase there.
pub fn finite_n_probe(
    m: &FockModel,
    action: &Action,
    points: &[(f64, f64)],
) -> Result<Vec<ProbeRow>, Error> {
    if m.n() > 64 {
        return Err(Error::Domain("the probe supports n ≤ 64".into()));
    }
    let method = if m.curve.genus() == 0 {
        Method::Residue
    } else {
        Method::Quadrature
    };
    points
        .iter()
        .map(|&(x, y)| {
            let (w, b) = sw_edge_near(m.n(), x, y);
            let p = marginal(m, &[(w, b)], method)?;
            let phase = action.classify_phase(x, y)?.phase;
            Ok(ProbeRow {
                n: m.n(),
                x,
                y,
                white: w,
                black: b,
                marginal: p,
                phase,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kasteleyn::AngleAssignment;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform() -> Action {
        Action::homogeneous(Curve::Genus0, 0.0, PI / 2.0, PI / 4.0, 3.0 * PI / 4.0).unwrap()
    }

    fn biased(tau_im: f64) -> Action {
        Action::homogeneous(
            Curve::genus1(tau_im).unwrap(),
            0.0,
            0.5,
            1.0 / 6.0,
            2.0 / 3.0,
        )
        .unwrap()
    }

    fn periodic(k: usize, l: usize) -> Action {
        // figure-style parameters, ordered alpha < gamma < beta < delta
        let alpha = vec![0.744904, 0.448131, 0.599648][..l].to_vec();
        let beta = vec![2.35367, 1.58096, 2.20249][..l].to_vec();
        let gamma = vec![1.21721, 0.983251, 1.18328][..k].to_vec();
        let delta = vec![3.05117, 2.38214, 2.74699][..k].to_vec();
        Action::new(Curve::Genus0, alpha, beta, gamma, delta).unwrap()
    }

    #[test]
    fn cross_ratio_examples() {
        let i = C64::i();
        let one = C64::new(1.0, 0.0);
        assert!((cross_ratio(one, i, -one, -i).unwrap() - 2.0).abs() < 1e-15);
        let a = ellipse_angles(2.0).unwrap();
        assert!((angle_cross_ratio(a[0], a[2], a[1], a[3]).unwrap() - 2.0).abs() < 1e-12);
        for r in [1.2, 4.0] {
            let a = ellipse_angles(r).unwrap();
            assert!((angle_cross_ratio(a[0], a[2], a[1], a[3]).unwrap() - r).abs() < 1e-12);
        }
        assert!(cross_ratio(one, one, -one, -i).is_err());
        assert!(cross_ratio(one, -one, i, -i).is_err());
    }

    #[test]
    fn cross_ratio_mobius_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = |a: f64| C64::new(0.0, a).exp();
        for _ in 0..20 {
            let pts = [p(0.1), p(1.2), p(2.9), p(4.4)];
            // z -> e^{iφ}(z - a)/(1 - ā z) preserves the unit circle
            let a = C64::from_polar(rng.random_range(0.0..0.9), rng.random_range(0.0..2.0 * PI));
            let rot = p(rng.random_range(0.0..2.0 * PI));
            let m = |z: C64| rot * (z - a) / (C64::new(1.0, 0.0) - a.conj() * z);
            let r0 = cross_ratio(pts[0], pts[1], pts[2], pts[3]).unwrap();
            let r1 = cross_ratio(m(pts[0]), m(pts[1]), m(pts[2]), m(pts[3])).unwrap();
            assert!((r0 - r1).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for act in [uniform(), periodic(3, 2), biased(1.0)] {
            for _ in 0..20 {
                let (x, y) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
                let u = match act.curve {
                    Curve::Genus0 => {
                        C64::from_polar(rng.random_range(0.5..0.9), rng.random_range(0.0..2.0 * PI))
                    }
                    _ => C64::new(rng.random_range(0.0..1.0), rng.random_range(0.1..0.4)),
                };
                let e = 1e-5;
                let (d1, d2) = act.df(u, x, y).unwrap();
                let fd1 = (act.f(u + e, x, y).unwrap() - act.f(u - e, x, y).unwrap()) / (2.0 * e);
                let fd2 =
                    (act.df(u + e, x, y).unwrap().0 - act.df(u - e, x, y).unwrap().0) / (2.0 * e);
                assert!((d1 - fd1).norm() < 1e-7 * (1.0 + d1.norm()), "{d1} {fd1}");
                assert!((d2 - fd2).norm() < 1e-7 * (1.0 + d2.norm()));
            }
        }
        assert!(uniform().f(C64::new(1.0, 0.0), 0.5, 0.5).is_err());
    }

    #[test]
    fn homogeneous_quadratic() {
        let act = uniform();
        let (x, y) = (0.4, 0.55);
        let p = act.critical_polynomial(x, y).unwrap();
        assert_eq!(p.len(), 3);
        let disc = (p[1] * p[1] - p[2] * p[0] * 4.0).sqrt();
        let q = [(-p[1] + disc) / (p[2] * 2.0), (-p[1] - disc) / (p[2] * 2.0)];
        let mut roots = poly_roots(&p).unwrap();
        roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        let mut q = q.to_vec();
        q.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        for (a, b) in roots.iter().zip(&q) {
            assert!((a - b).norm() < 1e-12);
        }
        // off the unit circle, related by u -> 1/ū
        assert!((roots[0].norm() - 1.0).abs() > 0.1);
        assert!((roots[0] - roots[1].conj().inv()).norm() < 1e-12);
        // at the centre the pair is {0, ∞}
        let c = act.critical_points(0.5, 0.5).unwrap();
        assert_eq!(c.points.len(), 2);
        assert!(c.points.iter().any(|z| z.im > 10.0) && c.points.iter().any(|z| z.im < -10.0));
        assert_eq!(act.classify_phase(0.5, 0.5).unwrap().phase, Phase::Liquid);
        let corner = act.critical_polynomial(0.05, 0.05).unwrap();
        assert!(poly_roots(&corner)
            .unwrap()
            .iter()
            .all(|r| (r.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn periodic_degree_and_real_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (k, l) in [(2, 2), (3, 2), (1, 3)] {
            let act = periodic(k, l);
            for _ in 0..30 {
                let (x, y) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
                let cp = act.critical_points(x, y).unwrap();
                assert_eq!(cp.certified, 2 * k + 2 * l - 2);
                let real = cp.points.iter().filter(|z| z.im.abs() < REAL_TOL).count();
                assert!(real + 4 >= 2 * k + 2 * l);
                for z in cp.points.iter().filter(|z| z.im.abs() >= REAL_TOL) {
                    assert!(cp.points.iter().any(|w| (w - z.conj()).norm() < 1e-9));
                }
            }
        }
    }

    #[test]
    fn uniform_phases() {
        let act = uniform();
        assert_eq!(act.classify_phase(0.5, 0.5).unwrap().phase, Phase::Liquid);
        let p = act.classify_phase(0.05, 0.05).unwrap().phase;
        assert!(matches!(p, Phase::Frozen { .. }));
        // the four corners are four different frozen arcs
        let mut comps = Vec::new();
        for (x, y) in [(0.05, 0.05), (0.95, 0.05), (0.05, 0.95), (0.95, 0.95)] {
            let Phase::Frozen { component } = act.classify_phase(x, y).unwrap().phase else {
                panic!()
            };
            assert_ne!(act.arc_families(component).0, act.arc_families(component).1);
            comps.push(component);
        }
        comps.sort();
        comps.dedup();
        assert_eq!(comps.len(), 4);
        assert!(act.classify_phase(0.0, 0.5).is_err());
    }

    #[test]
    fn circle_and_ellipses() {
        let c = uniform()
            .arctic_curve(Component::A0, ARCTIC_SAMPLES)
            .unwrap();
        assert!(c.samples.len() > ARCTIC_SAMPLES / 2);
        for s in &c.samples {
            assert!(((s.x - 0.5).powi(2) + (s.y - 0.5).powi(2) - 0.25).abs() < 1e-10);
        }
        for r in [1.2, 4.0, 1.3797] {
            let a = ellipse_angles(r).unwrap();
            let act = Action::homogeneous(Curve::Genus0, a[0], a[1], a[2], a[3]).unwrap();
            let c = act.arctic_curve(Component::A0, ARCTIC_SAMPLES).unwrap();
            assert!(c.samples.len() > 100);
            for s in &c.samples {
                // mirrored in x with respect to the lattice coordinates
                assert!(ellipse_residual(r, 1.0 - s.x, s.y).abs() < 1e-10);
                assert!(ellipse_residual(r / (r - 1.0), s.x, s.y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tangency_points() {
        for act in [uniform(), periodic(2, 2), periodic(1, 3)] {
            for (a, fam) in act.pole_angles() {
                let mut lim = (0.0, 0.0);
                for s in [-1e-7, 1e-7] {
                    let (x, y) = act.arctic_point(C64::new(a + s, 0.0)).unwrap();
                    lim.0 += x / 2.0;
                    lim.1 += y / 2.0;
                }
                let (x, y) = lim;
                let side = match fam {
                    Family::A => y,
                    Family::B => 1.0 - y,
                    Family::C => x,
                    Family::D => 1.0 - x,
                };
                assert!(side.abs() < 1e-5, "{fam:?} {x} {y}");
            }
        }
    }

    #[test]
    fn arctic_points_are_boundary() {
        for act in [uniform(), periodic(3, 2)] {
            let c = act.arctic_curve(Component::A0, 64).unwrap();
            for s in c
                .samples
                .iter()
                .filter(|s| s.x > 1e-3 && s.x < 1.0 - 1e-3 && s.y > 1e-3 && s.y < 1.0 - 1e-3)
            {
                assert_eq!(
                    act.classify_phase(s.x, s.y).unwrap().phase,
                    Phase::Boundary,
                    "{s:?}"
                );
            }
        }
    }

    #[test]
    fn genus1_zero_count() {
        // at the centre all four zeros sit on A1, for the biased and the
        // unbiased angles alike
        for act in [
            biased(1.0),
            Action::homogeneous(Curve::genus1(1.0).unwrap(), 0.0, 0.5, 0.25, 0.75).unwrap(),
        ] {
            let cp = act.critical_points(0.5, 0.5).unwrap();
            assert_eq!(cp.certified, 4);
            assert_eq!(
                cp.points
                    .iter()
                    .filter(|&&z| act.oval_of(z) == Some(Component::A1))
                    .count(),
                4
            );
            assert_eq!(
                act.classify_phase(0.5, 0.5).unwrap().phase,
                Phase::Gas { oval: 0 }
            );
        }
        let act = biased(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut liquid = 0;
        for _ in 0..20 {
            let (x, y) = (rng.random_range(0.02..0.98), rng.random_range(0.02..0.98));
            let cp = act.critical_points(x, y).unwrap();
            assert_eq!(cp.certified, 4);
            assert_eq!(cp.points.len(), 4);
            // at least two zeros on A1, and non-real zeros come in conjugate pairs
            assert!(
                cp.points
                    .iter()
                    .filter(|&&z| act.oval_of(z) == Some(Component::A1))
                    .count()
                    >= 2
            );
            let off: Vec<_> = cp
                .points
                .iter()
                .filter(|&&z| act.oval_of(z).is_none())
                .collect();
            for z in &off {
                assert!(off.iter().any(|w| (act.fold(w.conj()) - **z).norm() < 1e-9));
            }
            liquid += usize::from(!off.is_empty());
        }
        assert!(liquid > 0);
    }

    #[test]
    fn df_real_on_ovals() {
        let act = Action::homogeneous(Curve::genus1(0.7).unwrap(), 0.0, 0.6, 0.3, 0.85).unwrap();
        for k in 0..50 {
            let s = 0.013 + k as f64 / 50.0;
            for im in [0.0, 0.35] {
                let (g, gp) = act.dfdz(C64::new(s, im), 0.3, 0.6);
                assert!(
                    g.im.abs() < 1e-10 * (1.0 + g.norm())
                        && gp.im.abs() < 1e-10 * (1.0 + gp.norm())
                );
            }
        }
    }

    #[test]
    fn biased_gas_bubble() {
        let act = biased(3f64.sqrt());
        assert_eq!(
            act.classify_phase(0.5, 0.5).unwrap().phase,
            Phase::Gas { oval: 0 }
        );
        assert_eq!(act.classify_phase(0.3, 0.5).unwrap().phase, Phase::Liquid);
        assert!(matches!(
            act.classify_phase(0.03, 0.03).unwrap().phase,
            Phase::Frozen { .. }
        ));
        let outer = act.arctic_curve(Component::A0, 512).unwrap();
        let inner = act.arctic_curve(Component::A1, 512).unwrap();
        assert!(!outer.samples.is_empty() && !inner.samples.is_empty());
        let r = |s: &ArcticSample| (s.x - 0.5).hypot(s.y - 0.5);
        let rin = inner.samples.iter().map(r).fold(0.0, f64::max);
        let rout = outer.samples.iter().map(r).fold(f64::INFINITY, f64::min);
        assert!(rin < rout);
    }

    #[test]
    fn finite_n_coherence() {
        let act = uniform();
        let mut dev = Vec::new();
        for n in [16, 32, 48] {
            let m = FockModel::genus0(AngleAssignment::homogeneous(
                n,
                0.0,
                PI / 2.0,
                PI / 4.0,
                3.0 * PI / 4.0,
            ))
            .unwrap();
            // 1/16 falls on a lattice edge for every n here
            let rows =
                finite_n_probe(&m, &act, &[(0.08, 0.08), (0.5, 0.5), (0.0625, 0.0625)]).unwrap();
            assert!(matches!(rows[0].phase, Phase::Frozen { .. }));
            assert_eq!(rows[1].phase, Phase::Liquid);
            let p = rows[2].marginal;
            dev.push(p.min(1.0 - p));
            if n == 48 {
                let p = rows[0].marginal;
                assert!(p < 0.01 || p > 0.99, "{p}");
                assert!(rows[1].marginal > 0.1 && rows[1].marginal < 0.9);
            }
        }
        assert!(dev[0] > dev[1] && dev[1] > dev[2], "{dev:?}");
    }

    #[test]
    fn bad_configurations() {
        assert!(Action::homogeneous(Curve::Genus0, 0.0, 0.5, 1.0, 1.5).is_err());
        assert!(Action::homogeneous(Curve::Genus0, 0.0, 1.0, 1.0, 2.0).is_err());
        assert!(Action::new(Curve::Genus0, vec![0.1], vec![], vec![0.5], vec![2.0]).is_err());
        assert!(uniform().arctic_curve(Component::A1, 10).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn affine_in_xy(x in 0.05f64..0.95, y in 0.05f64..0.95, re in 0.0f64..3.0, im in 0.05f64..0.5) {
            let act = periodic(2, 2);
            let u = C64::new(re, im);
            let f = |x: f64, y: f64| act.dfdz(u, x, y).0;
            let lhs = f(x, y);
            let rhs = f(0.0, 0.0) + (f(1.0, 0.0) - f(0.0, 0.0)) * x + (f(0.0, 1.0) - f(0.0, 0.0)) * y;
            prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
        }
    }
}
