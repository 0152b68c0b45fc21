//! The inverse Kasteleyn matrix as a double contour integral.
//!
//! Three engines evaluate the same formula: exact residue sums on the sphere
//! (with Laurent expansions for repeated angles), trapezoid quadrature on
//! elliptic contours (both genera), and the specialised exponent displays for
//! constant angles. Direct LU inversion serves as the oracle.

use crate::curve::Curve;
use crate::kasteleyn::FockModel;
use crate::kernelforms::{
    ext_g_form, ext_g_to_base, g_form, p_point, MeromorphicProduct, ThetaShift, WindowVertex,
};
use crate::lattice::{ExtendedGraph, Family, FormalDivisor, Region, Track, VertexId};
use crate::{Error, C64};
use nalgebra::DMatrix;
use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use twofloat::TwoFloat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Residue,
    Quadrature,
    Direct,
    Homogeneous,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "residue" => Ok(Method::Residue),
            "quadrature" => Ok(Method::Quadrature),
            "direct" => Ok(Method::Direct),
            "homogeneous" => Ok(Method::Homogeneous),
            _ => Err(Error::Config(format!("unknown method {s}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Residue => "residue",
            Method::Quadrature => "quadrature",
            Method::Direct => "direct",
            Method::Homogeneous => "homogeneous",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseEntry {
    pub b: VertexId,
    pub w: VertexId,
    pub value: C64,
    pub method: Method,
    pub err_estimate: f64,
}

/// Counterclockwise ellipse `c + A cos θ + i B sin θ` in the angle coordinate,
/// around the real segment `[lo, hi]` widened by `eps` on both sides.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contour {
    pub lo: f64,
    pub hi: f64,
    pub eps: f64,
    pub height: f64,
}

impl Contour {
    fn axes(&self) -> (f64, f64, f64) {
        (
            0.5 * (self.lo + self.hi),
            0.5 * (self.hi - self.lo) + self.eps,
            self.height,
        )
    }

    /// Nodes `z_k` and weights `z'(θ_k)/(i N)`, so that `Σ f(z_k) w_k`
    /// approximates `(2πi)^{-1} ∮ f(z) dz`.
    pub fn nodes(&self, n: usize) -> Vec<(C64, C64)> {
        let (c, a, b) = self.axes();
        (0..n)
            .map(|k| {
                let th = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                let z = C64::new(c + a * th.cos(), b * th.sin());
                let dz = C64::new(-a * th.sin(), b * th.cos());
                (z, dz / (C64::i() * n as f64))
            })
            .collect()
    }

    /// Whether the real point `x` lies inside the ellipse.
    pub fn encloses(&self, x: f64) -> bool {
        let (c, a, _) = self.axes();
        (x - c).abs() < a
    }
}

fn hull(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(*x), hi.max(*x))
        })
}

fn contour_around(m: &FockModel, fam: Family) -> Result<Contour, Error> {
    let a = &m.angles;
    let own = match fam {
        Family::A => &a.alpha,
        Family::C => &a.gamma,
        _ => unreachable!(),
    };
    let (lo, hi) = hull(own);
    let period = m.curve.period();
    let mut gap = f64::INFINITY;
    for (f, v) in [
        (Family::A, &a.alpha),
        (Family::B, &a.beta),
        (Family::C, &a.gamma),
        (Family::D, &a.delta),
    ] {
        if f == fam {
            continue;
        }
        for &x in v.iter() {
            for k in [-1.0, 0.0, 1.0] {
                let y = x + k * period;
                let d = if y < lo {
                    lo - y
                } else if y > hi {
                    y - hi
                } else {
                    0.0
                };
                gap = gap.min(d);
            }
        }
    }
    if !(gap > 0.0) {
        return Err(Error::Config(
            "angles of different families coincide".into(),
        ));
    }
    let eps = 0.25 * gap;
    let height = match m.curve {
        Curve::Genus0 => eps,
        Curve::Genus1 { tau_im } => eps.min(tau_im / 4.0),
    };
    Ok(Contour {
        lo,
        hi,
        eps,
        height,
    })
}

/// `C1` around the `γ` angles and `C2` around the `α` angles.
pub fn build_contours(m: &FockModel) -> Result<(Contour, Contour), Error> {
    Ok((contour_around(m, Family::C)?, contour_around(m, Family::A)?))
}

/// The three ingredients of the inverse formula for one pair:
/// `(2πi)^{-2} θ(p)^{-1} ∮∮ θ(p+v-u)/E(u,v) U(u) V(v) - (2πi)^{-1} ∮ S(v)`.
#[derive(Clone, Debug)]
pub struct KinvIntegrand {
    pub u_part: MeromorphicProduct,
    pub v_part: MeromorphicProduct,
    pub single: Option<MeromorphicProduct>,
}

fn beta_over_delta(n: usize) -> MeromorphicProduct {
    let mut g = MeromorphicProduct::one();
    for j in 1..=n as i32 {
        g.mul_prime(Track::new(Family::B, j), 1);
        g.mul_prime(Track::new(Family::D, j), -1);
    }
    g
}

/// Integrand of the general formula for `b, w` in `Az_n`.
pub fn integrand(m: &FockModel, b: (i32, i32), w: (i32, i32)) -> Result<KinvIntegrand, Error> {
    let g = &m.graph;
    if g.black_index(b.0, b.1).is_none() || g.white_index(w.0, w.1).is_none() {
        return Err(Error::Domain(format!(
            "({b:?}, {w:?}) is not a black/white pair of Az_{}",
            m.n()
        )));
    }
    let bd = beta_over_delta(m.n());
    let u_part = g_form(m, b, (0, 0))?.mul(&bd);
    let v_part = g_form(m, (0, 0), w)?.mul(&bd.inverse());
    let single = if b.0 > w.0 {
        Some(g_form(m, b, w)?)
    } else {
        None
    };
    Ok(KinvIntegrand {
        u_part,
        v_part,
        single,
    })
}

/// Integrand built from the constant-angle displays.
pub fn homogeneous_integrand(
    m: &FockModel,
    b: (i32, i32),
    w: (i32, i32),
) -> Result<KinvIntegrand, Error> {
    if !m.angles.is_homogeneous() {
        return Err(Error::Domain(
            "angles are not constant in each family".into(),
        ));
    }
    let n = m.n() as i32;
    let (al, be, ga, de) = (
        Track::new(Family::A, 1),
        Track::new(Family::B, 1),
        Track::new(Family::C, 1),
        Track::new(Family::D, 1),
    );
    let (bx, by, wx, wy) = (b.0, b.1, w.0, w.1);
    let db = FormalDivisor::base_point()
        .with(be, by / 2)
        .with(al, -by / 2)
        .with(ga, (bx + 1) / 2)
        .with(de, -(bx - 1) / 2);
    let dw = FormalDivisor::base_point()
        .with(ga, wx / 2)
        .with(de, -wx / 2)
        .with(al, -(wy + 1) / 2)
        .with(be, (wy - 1) / 2);
    let mut u = MeromorphicProduct::one();
    u.mul_theta(ThetaShift::Minus, &db, 1);
    u.mul_prime(al, by / 2);
    u.mul_prime(be, n - by / 2);
    u.mul_prime(ga, -(bx + 1) / 2);
    u.mul_prime(de, -(n - (bx - 1) / 2));
    let mut v = MeromorphicProduct::one();
    v.mul_theta(ThetaShift::Plus, &dw, 1);
    v.mul_prime(ga, wx / 2);
    v.mul_prime(de, n - wx / 2);
    v.mul_prime(be, -(n - (wy - 1) / 2));
    v.mul_prime(al, -(wy + 1) / 2);
    let single = (bx > wx).then(|| {
        let mut s = MeromorphicProduct::one();
        s.mul_theta(ThetaShift::Minus, &db, 1);
        s.mul_theta(ThetaShift::Plus, &dw, 1);
        s.mul_prime(al, (by - wy - 1) / 2);
        s.mul_prime(be, -(by - wy + 1) / 2);
        s.mul_prime(de, (bx - wx - 1) / 2);
        s.mul_prime(ga, -(bx - wx + 1) / 2);
        s
    });
    Ok(KinvIntegrand {
        u_part: u,
        v_part: v,
        single,
    })
}

/// Integrand from the south-west neighbour display, `b = (2i-1, 2j)`,
/// `w = (2i, 2j+1)`.
pub fn homogeneous_sw_integrand(m: &FockModel, i: i32, j: i32) -> Result<KinvIntegrand, Error> {
    if !m.angles.is_homogeneous() {
        return Err(Error::Domain(
            "angles are not constant in each family".into(),
        ));
    }
    let n = m.n() as i32;
    if !(1 <= i && i <= n && 0 <= j && j < n) {
        return Err(Error::Domain(format!("(i, j) = ({i}, {j}) out of range")));
    }
    let (al, be, ga, de) = (
        Track::new(Family::A, 1),
        Track::new(Family::B, 1),
        Track::new(Family::C, 1),
        Track::new(Family::D, 1),
    );
    let common = FormalDivisor::base_point()
        .with(be, j)
        .with(al, -j)
        .with(ga, i)
        .with(de, -i);
    let db = common.clone().with(de, 1);
    let dw = common.with(al, -1);
    let mut u = MeromorphicProduct::one();
    u.mul_theta(ThetaShift::Minus, &db, 1);
    u.mul_prime(al, j);
    u.mul_prime(be, n - j);
    u.mul_prime(ga, -i);
    u.mul_prime(de, -(n - i + 1));
    let mut v = MeromorphicProduct::one();
    v.mul_theta(ThetaShift::Plus, &dw, 1);
    v.mul_prime(ga, i);
    v.mul_prime(de, n - i);
    v.mul_prime(be, -(n - j));
    v.mul_prime(al, -(j + 1));
    Ok(KinvIntegrand {
        u_part: u,
        v_part: v,
        single: None,
    })
}

// ---------------------------------------------------------------------------
// Residue engine (sphere). Forms are rational in ζ = exp(2iz):
// E(a, u) = ζ_u - ζ_a. Residues at high-order poles cancel heavily, so the
// series arithmetic runs in double-double precision.

type Dd = Complex<TwoFloat>;

fn dd(z: C64) -> Dd {
    Complex::new(TwoFloat::from(z.re), TwoFloat::from(z.im))
}

fn to_c64(z: Dd) -> C64 {
    C64::new(f64::from(z.re), f64::from(z.im))
}

fn dd_real(x: f64) -> Dd {
    dd(C64::new(x, 0.0))
}

// one Newton step from the f64 reciprocal; twofloat's own quotient of two
// double-doubles drops the low word
fn dd_recip(d: Dd) -> Dd {
    let r0 = dd(C64::new(1.0, 0.0) / to_c64(d));
    r0 * (dd_real(2.0) - d * r0)
}

fn dd_powi(d: Dd, e: i32) -> Dd {
    if e >= 0 {
        d.powu(e as u32)
    } else {
        dd_recip(d).powu(e.unsigned_abs())
    }
}

/// `c · Π (ζ - p_k)^{e_k}` with distinct points.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalForm {
    pub constant: C64,
    /// `(angle, ζ, exponent)`.
    pub factors: Vec<(f64, C64, i32)>,
}

impl RationalForm {
    pub fn from_product(m: &FockModel, g: &MeromorphicProduct) -> RationalForm {
        let mut r = RationalForm {
            constant: C64::new(1.0, 0.0),
            factors: Vec::new(),
        };
        for (t, e) in &g.prime_exponents {
            r.mul_point(m.angle(*t), *e);
        }
        r
    }

    pub fn mul_point(&mut self, angle: f64, e: i32) {
        match self.factors.iter_mut().find(|f| f.0 == angle) {
            Some(f) => f.2 += e,
            None => self
                .factors
                .push((angle, (C64::i() * 2.0 * angle).exp(), e)),
        }
        self.factors.retain(|f| f.2 != 0);
    }

    pub fn evaluate(&self, z: C64) -> C64 {
        self.factors
            .iter()
            .fold(self.constant, |acc, f| acc * (z - f.1).powi(f.2))
    }

    pub fn order_at(&self, angle: f64) -> i32 {
        self.factors
            .iter()
            .find(|f| f.0 == angle)
            .map_or(0, |f| f.2)
    }

    /// Taylor coefficients, up to `h^{len-1}`, of the form times
    /// `(ζ - p)^{-e_p}` at the factor `p = factors[idx]`.
    fn regular_series(&self, idx: usize, len: usize) -> Vec<Dd> {
        let c = self.factors[idx].1;
        let mut s = vec![Dd::zero(); len];
        s[0] = dd(self.constant);
        for (k, f) in self.factors.iter().enumerate() {
            if k == idx {
                continue;
            }
            let coef = binomial_series(dd(c) - dd(f.1), f.2, len);
            s = mul_series(&s, &coef);
        }
        s
    }

    /// Residue of `R(ζ) dζ` at the factor with the given angle.
    pub fn residue_at(&self, angle: f64) -> C64 {
        match self.factors.iter().position(|f| f.0 == angle) {
            Some(idx) => to_c64(self.residue_index(idx)),
            None => C64::new(0.0, 0.0),
        }
    }

    fn residue_index(&self, idx: usize) -> Dd {
        let order = -self.factors[idx].2;
        if order <= 0 {
            return Dd::zero();
        }
        self.regular_series(idx, order as usize)[order as usize - 1]
    }

    /// Groups the factors whose angle lies in `set` into clusters that are
    /// well separated from every other factor, so that each cluster can be
    /// expanded in an annulus around its centre.
    fn clusters(&self, set: &[f64], guard: &[C64]) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = (0..self.factors.len())
            .filter(|&i| set.contains(&self.factors[i].0))
            .map(|i| vec![i])
            .collect();
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..groups.len() {
                for j in i + 1..groups.len() {
                    let merged: Vec<usize> = groups[i].iter().chain(&groups[j]).copied().collect();
                    let (_, ratio) = self.spread(&merged, guard);
                    if ratio <= CLUSTER_RATIO && best.is_none_or(|b| ratio < b.0) {
                        best = Some((ratio, i, j));
                    }
                }
            }
            let Some((_, i, j)) = best else { break };
            let g = groups.remove(j);
            groups[i].extend(g);
        }
        groups
    }

    /// Centre of a group and the ratio of its radius to the distance from
    /// the centre to the nearest other factor or guard point.
    fn spread(&self, group: &[usize], guard: &[C64]) -> (C64, f64) {
        if group.len() == 1 {
            return (self.factors[group[0]].1, 0.0);
        }
        let c = group.iter().map(|&i| self.factors[i].1).sum::<C64>() / group.len() as f64;
        let radius = group
            .iter()
            .map(|&i| (self.factors[i].1 - c).norm())
            .fold(0.0, f64::max);
        let rho = (0..self.factors.len())
            .filter(|i| !group.contains(i))
            .map(|i| (self.factors[i].1 - c).norm())
            .chain(guard.iter().map(|g| (g - c).norm()))
            .fold(f64::INFINITY, f64::min);
        (c, radius / rho)
    }

    /// Laurent coefficients `a_{-1}, ..., a_{-k}` of the form in the annulus
    /// around a cluster, together with the centre. Without `k`, as many as
    /// needed for full accuracy.
    fn cluster_laurent(&self, group: &[usize], k: Option<usize>, guard: &[C64]) -> (C64, Vec<Dd>) {
        let (c, ratio) = self.spread(group, guard);
        let e: i32 = group.iter().map(|&i| self.factors[i].2).sum();
        let extra = if ratio == 0.0 {
            0
        } else {
            ((1e-32f64).ln() / ratio.ln()).ceil().clamp(1.0, 400.0) as usize
        };
        let k = k.unwrap_or(((-e).max(0) as usize + extra).max(1));
        let smax = ((-1 - e).max(0) as usize) + extra;
        let rmax = (e + k as i32 + smax as i32).max(0) as usize;
        // regular part Σ t_s h^s
        let mut t = vec![Dd::zero(); smax + 1];
        t[0] = dd(self.constant);
        for (i, f) in self.factors.iter().enumerate() {
            if group.contains(&i) {
                continue;
            }
            t = mul_series(&t, &binomial_series(dd(c) - dd(f.1), f.2, smax + 1));
        }
        // cluster part h^e Σ c_r h^{-r}
        let mut cr = vec![Dd::zero(); rmax + 1];
        cr[0] = Dd::one();
        for &i in group {
            let f = &self.factors[i];
            let d = dd(f.1) - dd(c);
            if d.is_zero() {
                continue;
            }
            // (1 - d x)^e with x = 1/h
            cr = mul_series(
                &cr,
                &binomial_series(Dd::one(), f.2, rmax + 1)
                    .iter()
                    .zip(powers(-d, rmax + 1))
                    .map(|(b, p)| b * p)
                    .collect::<Vec<_>>(),
            );
        }
        // a_j = Σ_s c_{e+s-j} t_s
        let out = (1..=k as i32)
            .map(|q| {
                let mut a = Dd::zero();
                for (s, ts) in t.iter().enumerate() {
                    let r = e + s as i32 + q;
                    if r >= 0 && (r as usize) <= rmax {
                        a += cr[r as usize] * ts;
                    }
                }
                a
            })
            .collect();
        (c, out)
    }

    /// Sum of the residues of `R(ζ) dζ` at the factors with angle in `set`.
    pub fn residue_sum(&self, set: &[f64]) -> C64 {
        to_c64(self.residue_sum_dd(set))
    }

    fn residue_sum_dd(&self, set: &[f64]) -> Dd {
        self.clusters(set, &[])
            .iter()
            .map(|g| self.cluster_laurent(g, Some(1), &[]).1[0])
            .fold(Dd::zero(), |a, b| a + b)
    }

    /// Coefficients `b_0, ..., b_D` of the polynomial part of the form at
    /// infinity.
    fn polynomial_part(&self) -> Vec<Dd> {
        let deg: i32 = self.factors.iter().map(|f| f.2).sum();
        if deg < 0 {
            return Vec::new();
        }
        let len = deg as usize + 1;
        // R = c ζ^D Π (1 - p w)^e with w = 1/ζ
        let mut s = self.series_at_infinity(len);
        s.reverse();
        s
    }

    /// Coefficients of `c Π (1 - p w)^e` up to `w^{len-1}`.
    fn series_at_infinity(&self, len: usize) -> Vec<Dd> {
        let mut s = vec![Dd::zero(); len];
        s[0] = dd(self.constant);
        for f in &self.factors {
            let coef: Vec<Dd> = binomial_series(Dd::one(), f.2, len)
                .iter()
                .zip(powers(-dd(f.1), len))
                .map(|(b, p)| b * p)
                .collect();
            s = mul_series(&s, &coef);
        }
        s
    }

    /// Adds the factor `(ζ - z)^e`, merging with a factor at the same point.
    fn mul_at(&mut self, key: f64, z: C64, e: i32) {
        match self.factors.iter_mut().find(|f| f.1 == z) {
            Some(f) => f.2 += e,
            None => self.factors.push((key, z, e)),
        }
        self.factors.retain(|f| f.2 != 0);
    }

    /// Residue of `R(ζ) dζ` at infinity.
    pub fn residue_at_infinity(&self) -> C64 {
        to_c64(self.residue_at_infinity_dd())
    }

    fn residue_at_infinity_dd(&self) -> Dd {
        let total: i32 = self.factors.iter().map(|f| f.2).sum();
        let k = total + 1;
        if k < 0 {
            return Dd::zero();
        }
        -self.series_at_infinity(k as usize + 1)[k as usize]
    }
}

/// Separation below which nearby poles are expanded together.
const CLUSTER_RATIO: f64 = 0.4;

fn powers(x: Dd, len: usize) -> Vec<Dd> {
    let mut out = Vec::with_capacity(len);
    let mut p = Dd::one();
    for _ in 0..len {
        out.push(p);
        p *= x;
    }
    out
}

/// Taylor coefficients of `(d + h)^e` up to `h^{len-1}`.
fn binomial_series(d: Dd, e: i32, len: usize) -> Vec<Dd> {
    let mut coef = vec![Dd::zero(); len];
    let mut b = TwoFloat::from(1.0);
    let inv = dd_recip(d);
    let mut pw = dd_powi(d, e);
    for (r, cr) in coef.iter_mut().enumerate() {
        *cr = pw * b;
        b = b * (e as f64 - r as f64) / (r as f64 + 1.0);
        pw *= inv;
    }
    coef
}

fn mul_series(a: &[Dd], b: &[Dd]) -> Vec<Dd> {
    let n = a.len();
    let mut out = vec![Dd::zero(); n];
    for i in 0..n {
        if a[i].is_zero() {
            continue;
        }
        for j in 0..n - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn family_values(m: &FockModel, fam: Family) -> Vec<f64> {
    let v = match fam {
        Family::A => &m.angles.alpha,
        Family::B => &m.angles.beta,
        Family::C => &m.angles.gamma,
        Family::D => &m.angles.delta,
    };
    let mut out: Vec<f64> = Vec::new();
    for &x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// How the outer integral over `C2` is evaluated by the residue engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidueRoute {
    /// Sum of residues at the enclosed `α` poles.
    Inside,
    /// Minus the sum of residues at every other pole, including infinity.
    Outside,
}

/// Evaluates an integrand on the sphere by residues.
pub fn residue_evaluate(
    m: &FockModel,
    it: &KinvIntegrand,
    route: ResidueRoute,
) -> Result<C64, Error> {
    if m.curve.genus() != 0 {
        return Err(Error::Domain("the residue engine requires genus 0".into()));
    }
    let gammas = family_values(m, Family::C);
    let alphas = family_values(m, Family::A);
    let r1 = RationalForm::from_product(m, &it.u_part);
    let r2 = RationalForm::from_product(m, &it.v_part);
    let outer = |r: &RationalForm| -> Dd {
        match route {
            ResidueRoute::Inside => r.residue_sum_dd(&alphas),
            ResidueRoute::Outside => {
                let others = (0..r.factors.len())
                    .filter(|&i| !alphas.contains(&r.factors[i].0))
                    .map(|i| r.residue_index(i))
                    .fold(Dd::zero(), |a, b| a + b);
                -(others + r.residue_at_infinity_dd())
            }
        }
    };
    // the expansion around a cluster must converge on the α contour
    let guard: Vec<C64> = alphas.iter().map(|a| (C64::i() * 2.0 * a).exp()).collect();
    // inner(v) = Σ coef · (ζ_v - point)^power
    let mut inner: Vec<(f64, C64, i32, Dd)> = Vec::new();
    let push_clusters = |set: &[f64], sign: f64, inner: &mut Vec<(f64, C64, i32, Dd)>| {
        for group in r1.clusters(set, &guard) {
            // Σ_cluster res R1(u) / (ζ_v - ζ_u) dζ_u = Σ_s a_{-1-s} (ζ_v - c)^{-(s+1)}
            let (c, coefs) = r1.cluster_laurent(&group, None, &guard);
            let key = if group.len() == 1 {
                r1.factors[group[0]].0
            } else {
                f64::NAN
            };
            for (s, a) in coefs.into_iter().enumerate() {
                if !a.is_zero() {
                    inner.push((key, c, -(s as i32 + 1), a * dd_real(sign)));
                }
            }
        }
    };
    let merged = it.single.is_some() && route == ResidueRoute::Inside;
    if merged {
        // The subtracted single integral is the residue at u = v, so the
        // difference is the inner integral over a contour enclosing the γ's
        // and v, i.e. minus the residues at every other pole. This avoids a
        // cancellation between two large terms.
        let others: Vec<f64> = r1
            .factors
            .iter()
            .filter(|f| f.2 < 0 && !gammas.contains(&f.0))
            .map(|f| f.0)
            .collect();
        push_clusters(&others, -1.0, &mut inner);
        for (k, b) in r1.polynomial_part().into_iter().enumerate() {
            inner.push((f64::NAN, C64::new(0.0, 0.0), k as i32, -b));
        }
    } else {
        push_clusters(&gammas, 1.0, &mut inner);
    }
    let mut total = Dd::zero();
    for (key, c, e, a) in inner {
        let mut r = r2.clone();
        r.mul_at(key, c, e);
        total += a * outer(&r);
    }
    if let (Some(sg), false) = (&it.single, merged) {
        let r3 = RationalForm::from_product(m, sg);
        total -= outer(&r3);
    }
    Ok(to_c64(total))
}

/// `K^{-1}_{b,w}` by exact residues (genus 0).
pub fn kinv_entry_residue(m: &FockModel, b: (i32, i32), w: (i32, i32)) -> Result<C64, Error> {
    residue_evaluate(m, &integrand(m, b, w)?, ResidueRoute::Inside)
}

// ---------------------------------------------------------------------------
// Quadrature engine (both genera).

/// Maximal number of nodes per contour.
pub const MAX_NODES: usize = 1 << 16;
const START_NODES: usize = 32;

fn form_density(m: &FockModel, z: C64) -> C64 {
    // converts a ζ-form on the sphere to the angle coordinate
    match m.curve {
        Curve::Genus0 => m.curve.point_dz(z),
        _ => C64::new(1.0, 0.0),
    }
}

fn theta_p(m: &FockModel) -> f64 {
    p_point(m).value()
}

/// Evaluates a batch of integrands with a fixed number of nodes.
fn quadrature_fixed(
    m: &FockModel,
    its: &[KinvIntegrand],
    c1: &Contour,
    c2: &Contour,
    n: usize,
) -> Result<Vec<C64>, Error> {
    let un = c1.nodes(n);
    let vn = c2.nodes(n);
    let p = theta_p(m);
    let tp = m.curve.theta_re(p);
    // M_{ik} = θ(p + v_k - u_i) / E(u_i, v_k) with densities and weights
    let mut mat = vec![C64::new(0.0, 0.0); n * n];
    for (i, (u, wu)) in un.iter().enumerate() {
        let du = form_density(m, *u) * wu;
        for (k, (v, wv)) in vn.iter().enumerate() {
            let dv = form_density(m, *v) * wv;
            mat[i * n + k] =
                m.curve.theta(C64::new(p, 0.0) + v - u) / m.curve.prime_form(*u, *v) * du * dv / tp;
        }
    }
    let mut out = Vec::with_capacity(its.len());
    for it in its {
        let uv: Vec<C64> = un
            .iter()
            .map(|(u, _)| it.u_part.evaluate(m, *u))
            .collect::<Result<_, _>>()?;
        let vv: Vec<C64> = vn
            .iter()
            .map(|(v, _)| it.v_part.evaluate(m, *v))
            .collect::<Result<_, _>>()?;
        let mut s = C64::new(0.0, 0.0);
        for i in 0..n {
            let row = &mat[i * n..(i + 1) * n];
            let inner: C64 = row.iter().zip(&vv).map(|(a, b)| a * b).sum();
            s += uv[i] * inner;
        }
        if let Some(sg) = &it.single {
            for (v, wv) in &vn {
                s -= sg.evaluate(m, *v)? * form_density(m, *v) * wv;
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Quadrature with node doubling. Returns values and error estimates.
pub fn quadrature_evaluate(m: &FockModel, its: &[KinvIntegrand]) -> Result<Vec<(C64, f64)>, Error> {
    let (c1, c2) = build_contours(m)?;
    let mut n = START_NODES;
    let mut prev = quadrature_fixed(m, its, &c1, &c2, n)?;
    loop {
        n *= 2;
        let cur = quadrature_fixed(m, its, &c1, &c2, n)?;
        let errs: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| (a - b).norm()).collect();
        let done = cur
            .iter()
            .zip(&errs)
            .all(|(v, e)| *e < 1e-10 * (1.0 + v.norm()));
        if done {
            return Ok(cur.into_iter().zip(errs).collect());
        }
        if n >= MAX_NODES {
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            return Err(Error::NoConvergence(format!(
                "quadrature error estimate {worst:e} at {n} nodes"
            )));
        }
        prev = cur;
    }
}

pub fn kinv_entry_quadrature(
    m: &FockModel,
    b: (i32, i32),
    w: (i32, i32),
) -> Result<InverseEntry, Error> {
    let r = quadrature_evaluate(m, &[integrand(m, b, w)?])?;
    Ok(InverseEntry {
        b: VertexId::black(b.0, b.1),
        w: VertexId::white(w.0, w.1),
        value: r[0].0,
        method: Method::Quadrature,
        err_estimate: r[0].1,
    })
}

/// `K^{-1}_{b,w}` from the contour formula: residues on the sphere,
/// quadrature on the torus.
pub fn kinv_entry(m: &FockModel, b: (i32, i32), w: (i32, i32)) -> Result<InverseEntry, Error> {
    match m.curve {
        Curve::Genus0 => Ok(InverseEntry {
            b: VertexId::black(b.0, b.1),
            w: VertexId::white(w.0, w.1),
            value: kinv_entry_residue(m, b, w)?,
            method: Method::Residue,
            err_estimate: 0.0,
        }),
        _ => kinv_entry_quadrature(m, b, w),
    }
}

/// Constant-angle specialisation, evaluated with the model's engine.
pub fn kinv_homogeneous(m: &FockModel, b: (i32, i32), w: (i32, i32)) -> Result<C64, Error> {
    let it = homogeneous_integrand(m, b, w)?;
    evaluate_integrand(m, &it)
}

pub fn kinv_homogeneous_sw(m: &FockModel, i: i32, j: i32) -> Result<C64, Error> {
    let it = homogeneous_sw_integrand(m, i, j)?;
    evaluate_integrand(m, &it)
}

pub fn evaluate_integrand(m: &FockModel, it: &KinvIntegrand) -> Result<C64, Error> {
    match m.curve {
        Curve::Genus0 => residue_evaluate(m, it, ResidueRoute::Inside),
        _ => Ok(quadrature_evaluate(m, std::slice::from_ref(it))?[0].0),
    }
}

/// Whole inverse from the contour formula, rows indexed by black vertices.
pub fn kinv_matrix(m: &FockModel, method: Method) -> Result<DMatrix<C64>, Error> {
    let g = &m.graph;
    let (nb, nw) = (g.blacks.len(), g.whites.len());
    let mut out = DMatrix::<C64>::zeros(nb, nw);
    match method {
        Method::Direct => return Ok(kinv_direct(&m.build_matrix().matrix)?.0),
        Method::Quadrature => {
            let mut its = Vec::with_capacity(nb * nw);
            for b in &g.blacks {
                for w in &g.whites {
                    its.push(integrand(m, (b.x, b.y), (w.x, w.y))?);
                }
            }
            let vals = quadrature_evaluate(m, &its)?;
            for (k, (v, _)) in vals.into_iter().enumerate() {
                out[(k / nw, k % nw)] = v;
            }
        }
        Method::Residue | Method::Homogeneous => {
            for (i, b) in g.blacks.iter().enumerate() {
                for (j, w) in g.whites.iter().enumerate() {
                    out[(i, j)] = if method == Method::Residue {
                        kinv_entry_residue(m, (b.x, b.y), (w.x, w.y))?
                    } else {
                        kinv_homogeneous(m, (b.x, b.y), (w.x, w.y))?
                    };
                }
            }
        }
    }
    Ok(out)
}

/// LU inverse of a Kasteleyn matrix (rows white, columns black) and the
/// residual `max |K K^{-1} - Id|`.
pub fn kinv_direct(k: &DMatrix<C64>) -> Result<(DMatrix<C64>, f64), Error> {
    let inv = k
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Domain("Kasteleyn matrix is singular".into()))?;
    let r = k * &inv - DMatrix::<C64>::identity(k.nrows(), k.ncols());
    let res = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok((inv, res))
}

// ---------------------------------------------------------------------------
// Extended window.

/// Kasteleyn entry of an edge of the extended window.
pub fn ext_weight(m: &FockModel, ext: &ExtendedGraph, e: usize) -> C64 {
    let ed = &ext.edges[e];
    let num = m.prime(m.angle(ed.alpha), m.angle(ed.beta));
    if m.curve.genus() == 0 {
        return num;
    }
    // faces of the rhombus: D(f) = D(w) + beta, D(f') = D(w) + alpha
    let dw = ext.white_abel[ed.w].evaluate(|t| m.angle(t), m.d);
    let tf = m.curve.theta_re(m.t + dw + m.angle(ed.beta));
    let tfp = m.curve.theta_re(m.t + dw + m.angle(ed.alpha));
    num / (tf * tfp)
}

/// Integrand of the contour formula for a pair of window vertices.
pub fn ext_integrand(ext: &ExtendedGraph, b: usize, w: usize) -> Result<KinvIntegrand, Error> {
    let n = ext.base.n;
    let bd = beta_over_delta(n);
    let u_part = ext_g_to_base(ext, WindowVertex::Black(b))?.mul(&bd);
    let v_part = ext_g_to_base(ext, WindowVertex::White(w))?
        .inverse()
        .mul(&bd.inverse());
    let (bv, wv) = (ext.blacks[b], ext.whites[w]);
    let right = if ext.black_region[b] == Region::Aztec && ext.white_region[w] == Region::Aztec {
        bv.x > wv.x
    } else {
        let g = ext_g_form(ext, WindowVertex::Black(b), WindowVertex::White(w))?;
        g.prime_exponents
            .iter()
            .any(|(t, e)| t.family == Family::C && *e < 0)
    };
    let single = if right {
        Some(ext_g_form(
            ext,
            WindowVertex::Black(b),
            WindowVertex::White(w),
        )?)
    } else {
        None
    };
    Ok(KinvIntegrand {
        u_part,
        v_part,
        single,
    })
}

fn formula_entry(m: &FockModel, ext: &ExtendedGraph, b: usize, w: usize) -> Result<C64, Error> {
    evaluate_integrand(m, &ext_integrand(ext, b, w)?)
}

/// Entry of the inverse on the extended window. Pairs in the block
/// `b ∈ Q_N ∪ Q_S`, `w ∈ Q_W ∪ Q_E` are rejected.
///
/// Pairs between different quadrants are zero by the block structure. The
/// contour formula agrees there except when `b` and `w` sit in opposite
/// quadrants and a track of the fourth family separates them.
pub fn extended_kinv_entry(
    m: &FockModel,
    ext: &ExtendedGraph,
    b: usize,
    w: usize,
) -> Result<C64, Error> {
    use Region::*;
    let (rb, rw) = (ext.black_region[b], ext.white_region[w]);
    match (rb, rw) {
        (North | South, West | East) => {
            Err(Error::Domain("pair lies in the undetermined block".into()))
        }
        (West | East | South, North)
        | (West | East | North, South)
        | (East, West)
        | (West, East) => Ok(C64::new(0.0, 0.0)),
        (North | South, Aztec) => propagate_column(m, ext, w, rb).map(|c| c[b]),
        (North, North) | (South, South) => propagate_column(m, ext, w, rb).map(|c| c[b]),
        (Aztec, West | East) => propagate_row(m, ext, b, rw).map(|r| r[w]),
        (West, West) | (East, East) => propagate_row(m, ext, b, rw).map(|r| r[w]),
        _ => formula_entry(m, ext, b, w),
    }
}

/// Column `A_{·,w}` on the blacks of quadrant `q` (north or south), from
/// `Σ_b K_{w',b} A_{b,w} = δ_{w',w}` at the whites of `q`, level by level.
/// Entries outside `q` come from the formula.
fn propagate_column(
    m: &FockModel,
    ext: &ExtendedGraph,
    w: usize,
    q: Region,
) -> Result<Vec<C64>, Error> {
    let nb = ext.blacks.len();
    let mut col: Vec<Option<C64>> = vec![None; nb];
    for lvl in 0..ext.depth {
        for (wp, reg) in ext.white_region.iter().enumerate() {
            if *reg != q || ext.white_level[wp] != Some(lvl) {
                continue;
            }
            let Some(icy) = ext.white_icy[wp] else {
                continue;
            };
            let mut rhs = C64::new(if wp == w { 1.0 } else { 0.0 }, 0.0);
            for &e in &ext.white_adj[wp] {
                if e == icy {
                    continue;
                }
                let bb = ext.edges[e].b;
                let val = match col[bb] {
                    Some(v) => v,
                    None => {
                        let v = formula_entry(m, ext, bb, w)?;
                        col[bb] = Some(v);
                        v
                    }
                };
                rhs -= ext_weight(m, ext, e) * val;
            }
            col[ext.edges[icy].b] = Some(rhs / ext_weight(m, ext, icy));
        }
    }
    Ok(col
        .into_iter()
        .map(|v| v.unwrap_or(C64::new(f64::NAN, f64::NAN)))
        .collect())
}

/// Row `A_{b,·}` on the whites of quadrant `q` (west or east), from
/// `Σ_w A_{b,w} K_{w,b'} = δ_{b,b'}` at the blacks of `q`.
fn propagate_row(
    m: &FockModel,
    ext: &ExtendedGraph,
    b: usize,
    q: Region,
) -> Result<Vec<C64>, Error> {
    let nw = ext.whites.len();
    let mut row: Vec<Option<C64>> = vec![None; nw];
    for lvl in 0..ext.depth {
        for (bp, reg) in ext.black_region.iter().enumerate() {
            if *reg != q || ext.black_level[bp] != Some(lvl) {
                continue;
            }
            let Some(icy) = ext.black_icy[bp] else {
                continue;
            };
            let mut rhs = C64::new(if bp == b { 1.0 } else { 0.0 }, 0.0);
            for &e in &ext.black_adj[bp] {
                if e == icy {
                    continue;
                }
                let ww = ext.edges[e].w;
                let val = match row[ww] {
                    Some(v) => v,
                    None => {
                        let v = formula_entry(m, ext, b, ww)?;
                        row[ww] = Some(v);
                        v
                    }
                };
                rhs -= val * ext_weight(m, ext, e);
            }
            row[ext.edges[icy].w] = Some(rhs / ext_weight(m, ext, icy));
        }
    }
    Ok(row
        .into_iter()
        .map(|v| v.unwrap_or(C64::new(f64::NAN, f64::NAN)))
        .collect())
}

/// Region-aware entry used by the measure checks; rows of the same column
/// are computed together.
pub fn extended_block(
    m: &FockModel,
    ext: &ExtendedGraph,
    bs: &[usize],
    ws: &[usize],
) -> Result<DMatrix<C64>, Error> {
    let mut a = DMatrix::<C64>::zeros(bs.len(), ws.len());
    for (i, &b) in bs.iter().enumerate() {
        for (j, &w) in ws.iter().enumerate() {
            a[(i, j)] = extended_kinv_entry(m, ext, b, w)?;
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kasteleyn::AngleAssignment;
    use crate::lattice::Region;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_angles(rng: &mut ChaCha8Rng, n: usize, period: f64) -> AngleAssignment {
        let q = period / 4.0;
        let mut fam = |k: usize| {
            let mut v: Vec<f64> = (0..n)
                .map(|_| (k as f64 + rng.random_range(0.1..0.9)) * q)
                .collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v
        };
        let (alpha, gamma, beta, delta) = (fam(0), fam(1), fam(2), fam(3));
        AngleAssignment {
            alpha,
            beta,
            gamma,
            delta,
        }
    }

    fn max_dev(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn residue_engine_matches_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=4 {
            for _ in 0..3 {
                let m = FockModel::genus0(random_angles(&mut rng, n, PI)).unwrap();
                let direct = kinv_matrix(&m, Method::Direct).unwrap();
                let res = kinv_matrix(&m, Method::Residue).unwrap();
                assert!(
                    max_dev(&direct, &res) < 1e-12,
                    "n={n}: {}",
                    max_dev(&direct, &res)
                );
                let k = m.build_matrix().matrix;
                let id = DMatrix::<C64>::identity(k.nrows(), k.nrows());
                assert!(max_dev(&(&k * &res), &id) < 1e-10);
            }
        }
    }

    #[test]
    fn quadrature_genus1_matches_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=3 {
            let m = FockModel::new(
                Curve::genus1(1.0).unwrap(),
                random_angles(&mut rng, n, 1.0),
                0.37,
                0.21,
            )
            .unwrap();
            let direct = kinv_matrix(&m, Method::Direct).unwrap();
            let quad = kinv_matrix(&m, Method::Quadrature).unwrap();
            assert!(
                max_dev(&direct, &quad) < 1e-8,
                "n={n}: {}",
                max_dev(&direct, &quad)
            );
        }
    }

    #[test]
    fn quadrature_genus0_matches_residues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = FockModel::genus0(random_angles(&mut rng, 2, PI)).unwrap();
        let q = kinv_matrix(&m, Method::Quadrature).unwrap();
        let r = kinv_matrix(&m, Method::Residue).unwrap();
        assert!(max_dev(&q, &r) < 1e-10);
    }

    #[test]
    fn opposite_indicator_fails() {
        // with "b right of w" read as b_x < w_x the product K K^{-1} is not Id
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = FockModel::genus0(random_angles(&mut rng, 2, PI)).unwrap();
        let (b, w) = ((1, 0), (2, 3));
        let mut it = integrand(&m, b, w).unwrap();
        assert!(it.single.is_none());
        it.single = Some(g_form(&m, b, w).unwrap());
        let wrong = residue_evaluate(&m, &it, ResidueRoute::Inside).unwrap();
        let right = kinv_entry_residue(&m, b, w).unwrap();
        assert!((wrong - right).norm() > 1e-3);
    }

    #[test]
    fn homogeneous_displays_agree() {
        for n in 1..=3 {
            let m = FockModel::genus0(AngleAssignment::homogeneous(n, 0.1, 1.8, 0.9, 2.6)).unwrap();
            let h = kinv_matrix(&m, Method::Homogeneous).unwrap();
            let r = kinv_matrix(&m, Method::Residue).unwrap();
            assert!(max_dev(&h, &r) < 1e-9);
            for i in 1..=n as i32 {
                for j in 0..n as i32 {
                    let sw = kinv_homogeneous_sw(&m, i, j).unwrap();
                    let gen = kinv_homogeneous(&m, (2 * i - 1, 2 * j), (2 * i, 2 * j + 1)).unwrap();
                    assert!((sw - gen).norm() < 1e-12);
                }
            }
        }
        let m = FockModel::new(
            Curve::genus1(1.0).unwrap(),
            AngleAssignment::homogeneous(2, 0.05, 0.55, 0.3, 0.8),
            0.2,
            0.1,
        )
        .unwrap();
        let direct = kinv_matrix(&m, Method::Direct).unwrap();
        let g = &m.graph;
        for (i, b) in g.blacks.iter().enumerate() {
            for (j, w) in g.whites.iter().enumerate() {
                let h = kinv_homogeneous(&m, (b.x, b.y), (w.x, w.y)).unwrap();
                assert!((h - direct[(i, j)]).norm() < 1e-9);
            }
        }
        let sw = kinv_homogeneous_sw(&m, 1, 0).unwrap();
        assert!(
            (sw - direct[(g.black_index(1, 0).unwrap(), g.white_index(2, 1).unwrap())]).norm()
                < 1e-9
        );
        let bad = FockModel::genus0(AngleAssignment {
            alpha: vec![0.1, 0.2],
            ..AngleAssignment::homogeneous(2, 0.1, 1.8, 0.9, 2.6)
        })
        .unwrap();
        assert!(kinv_homogeneous(&bad, (1, 0), (0, 1)).is_err());
    }

    #[test]
    fn uniform_single_edge() {
        let m = FockModel::genus0(AngleAssignment::homogeneous(
            1,
            0.0,
            PI / 2.0,
            PI / 4.0,
            3.0 * PI / 4.0,
        ))
        .unwrap();
        for e in &m.graph.edges {
            let kinv = kinv_entry_residue(&m, (e.b.x, e.b.y), (e.w.x, e.w.y)).unwrap();
            let p = m.fock_weight(e) * kinv;
            assert!((p - 0.5).norm() < 1e-14);
        }
    }

    #[test]
    fn direct_inverse_small() {
        let m = FockModel::genus0(AngleAssignment::homogeneous(
            1,
            0.0,
            PI / 2.0,
            PI / 4.0,
            3.0 * PI / 4.0,
        ))
        .unwrap();
        let k = m.build_matrix().matrix;
        let (inv, res) = kinv_direct(&k).unwrap();
        assert!(res < 1e-14);
        let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
        assert!((inv[(0, 0)] - k[(1, 1)] / det).norm() < 1e-14);
        assert!((inv[(0, 1)] + k[(0, 1)] / det).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [4, 6] {
            let m = FockModel::genus0(random_angles(&mut rng, n, PI)).unwrap();
            assert!(kinv_direct(&m.build_matrix().matrix).unwrap().1 < 1e-11);
            let m = FockModel::new(
                Curve::genus1(1.0).unwrap(),
                random_angles(&mut rng, n, 1.0),
                0.1,
                0.4,
            )
            .unwrap();
            let k = m.build_matrix().matrix;
            let (inv, res) = kinv_direct(&k).unwrap();
            assert!(res < 1e-11);
            // reversing the black order permutes the rows of the inverse
            let nb = k.ncols();
            let kp = DMatrix::from_fn(k.nrows(), nb, |i, j| k[(i, nb - 1 - j)]);
            let (invp, _) = kinv_direct(&kp).unwrap();
            assert!((0..nb)
                .all(|i| (0..nb).all(|j| (invp[(i, j)] - inv[(nb - 1 - i, j)]).norm() < 1e-10)));
        }
        assert!(kinv_direct(&DMatrix::<C64>::zeros(2, 2)).is_err());
    }

    #[test]
    fn contour_construction() {
        let m = FockModel::genus0(AngleAssignment::homogeneous(
            1,
            0.0,
            PI / 2.0,
            PI / 4.0,
            3.0 * PI / 4.0,
        ))
        .unwrap();
        let (c1, c2) = build_contours(&m).unwrap();
        let a = &m.angles;
        assert!(
            c1.encloses(a.gamma[0])
                && !c1.encloses(a.alpha[0])
                && !c1.encloses(a.beta[0])
                && !c1.encloses(a.delta[0])
        );
        assert!(c2.encloses(a.alpha[0]) && !c2.encloses(a.gamma[0]));
        let angles = AngleAssignment {
            alpha: vec![0.0, 0.05],
            gamma: vec![0.2, 0.3],
            beta: vec![0.5, 0.6],
            delta: vec![0.75, 0.8],
        };
        let m1 = FockModel::new(Curve::genus1(1.0).unwrap(), angles, 0.0, 0.0).unwrap();
        let (c1, _) = build_contours(&m1).unwrap();
        assert!((c1.eps - 0.0375).abs() < 1e-15);
        let angles = AngleAssignment {
            alpha: vec![0.92, 0.95],
            gamma: vec![0.2, 0.3],
            beta: vec![0.5, 0.6],
            delta: vec![0.7, 0.75],
        };
        let m1 = FockModel::new(Curve::genus1(1.0).unwrap(), angles, 0.0, 0.0).unwrap();
        let (c1, _) = build_contours(&m1).unwrap();
        assert!((c1.eps - 0.05).abs() < 1e-15);
    }

    #[test]
    fn winding_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for m in [
            FockModel::genus0(random_angles(&mut rng, 3, PI)).unwrap(),
            FockModel::new(
                Curve::genus1(1.0).unwrap(),
                random_angles(&mut rng, 3, 1.0),
                0.0,
                0.0,
            )
            .unwrap(),
        ] {
            let (c1, c2) = build_contours(&m).unwrap();
            let a = m.angles.clone();
            for (c, own) in [(c1, &a.gamma), (c2, &a.alpha)] {
                for (fam, vals) in [(&a.alpha, 0), (&a.gamma, 1), (&a.beta, 2), (&a.delta, 3)] {
                    let _ = vals;
                    for &x in fam.iter() {
                        let s: C64 = c
                            .nodes(4096)
                            .iter()
                            .map(|(z, w)| {
                                m.curve.dlog_prime_form(C64::new(x, 0.0), *z).0
                                    * m.curve.point_dz(*z)
                                    * w
                            })
                            .sum();
                        let want = if std::ptr::eq(fam, own) { 1.0 } else { 0.0 };
                        assert!((s - want).norm() < 1e-8, "{s}");
                    }
                }
            }
        }
    }

    #[test]
    fn deformed_contours_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=3 {
            let m = FockModel::genus0(random_angles(&mut rng, n, PI)).unwrap();
            for b in &m.graph.blacks {
                for w in &m.graph.whites {
                    let it = integrand(&m, (b.x, b.y), (w.x, w.y)).unwrap();
                    let a = residue_evaluate(&m, &it, ResidueRoute::Inside).unwrap();
                    let o = residue_evaluate(&m, &it, ResidueRoute::Outside).unwrap();
                    assert!((a - o).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn repeated_angles_are_continuous() {
        let base = AngleAssignment::homogeneous(3, 0.1, 1.8, 0.9, 2.6);
        let m = FockModel::genus0(base.clone()).unwrap();
        let mut pert = base;
        pert.alpha[1] += 1e-6;
        pert.gamma[2] -= 1e-6;
        let mp = FockModel::genus0(pert).unwrap();
        for b in &m.graph.blacks {
            for w in &m.graph.whites {
                let x = kinv_entry_residue(&m, (b.x, b.y), (w.x, w.y)).unwrap();
                let y = kinv_entry_residue(&mp, (b.x, b.y), (w.x, w.y)).unwrap();
                assert!((x - y).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn residue_column_identity_large_n() {
        // high-order poles; LU loses digits here, so check K A = Id directly
        let n = 24;
        let m = FockModel::genus0(AngleAssignment::homogeneous(
            n,
            0.0,
            PI / 2.0,
            PI / 4.0,
            3.0 * PI / 4.0,
        ))
        .unwrap();
        let k = m.build_matrix().matrix;
        let g = &m.graph;
        for wi in [0, g.whites.len() / 3, g.whites.len() - 1] {
            let w = &g.whites[wi];
            let col: Vec<C64> = g
                .blacks
                .iter()
                .map(|b| kinv_entry_residue(&m, (b.x, b.y), (w.x, w.y)).unwrap())
                .collect();
            let scale = col.iter().map(|z| z.norm()).fold(1.0, f64::max);
            let r = &k * nalgebra::DVector::from_vec(col);
            for (j, z) in r.iter().enumerate() {
                let want = if j == wi { 1.0 } else { 0.0 };
                assert!(
                    (z - want).norm() < 1e-14 * scale,
                    "w={wi} row {j}: {z} scale {scale}"
                );
            }
        }
    }

    fn ext_model(genus1: bool) -> (FockModel, ExtendedGraph) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = if genus1 {
            FockModel::new(
                Curve::genus1(1.0).unwrap(),
                random_angles(&mut rng, 2, 1.0),
                0.31,
                0.17,
            )
            .unwrap()
        } else {
            FockModel::genus0(random_angles(&mut rng, 2, PI)).unwrap()
        };
        (m, ExtendedGraph::new(2, 2).unwrap())
    }

    fn ext_kmatrix(m: &FockModel, ext: &ExtendedGraph) -> DMatrix<C64> {
        let mut k = DMatrix::<C64>::zeros(ext.whites.len(), ext.blacks.len());
        for (e, ed) in ext.edges.iter().enumerate() {
            k[(ed.w, ed.b)] = ext_weight(m, ext, e);
        }
        k
    }

    fn rejected(ext: &ExtendedGraph, b: usize, w: usize) -> bool {
        use Region::*;
        matches!(
            (ext.black_region[b], ext.white_region[w]),
            (North | South, West | East)
        )
    }

    #[test]
    fn extended_weight_restricts_to_base() {
        let (m, ext) = ext_model(true);
        let k = m.build_matrix().matrix;
        for (e, ed) in ext.edges.iter().enumerate() {
            let (w, b) = (ext.whites[ed.w], ext.blacks[ed.b]);
            if let (Some(wi), Some(bi)) =
                (m.graph.white_index(w.x, w.y), m.graph.black_index(b.x, b.y))
            {
                assert!((ext_weight(&m, &ext, e) - k[(wi, bi)]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn extended_zero_blocks() {
        for genus1 in [false, true] {
            let (m, ext) = ext_model(genus1);
            for (b, rb) in ext.black_region.iter().enumerate() {
                for (w, rw) in ext.white_region.iter().enumerate() {
                    let zero = matches!(
                        (rb, rw),
                        (Region::Aztec, Region::North | Region::South)
                            | (Region::West | Region::East, Region::Aztec)
                    );
                    if zero && (b + w) % 3 == 0 {
                        let v = extended_kinv_entry(&m, &ext, b, w).unwrap();
                        assert!(
                            v.norm() < 1e-10,
                            "{:?} {:?}: {v}",
                            ext.blacks[b],
                            ext.whites[w]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn side_quadrant_formula_vanishes() {
        // the contour formula itself is zero for b in Q_W ∪ Q_E, w in Q_N ∪ Q_S
        let (m, ext) = ext_model(false);
        let mut count = 0;
        for (b, rb) in ext.black_region.iter().enumerate() {
            for (w, rw) in ext.white_region.iter().enumerate() {
                if matches!(rb, Region::West | Region::East)
                    && matches!(rw, Region::North | Region::South)
                {
                    assert!(formula_entry(&m, &ext, b, w).unwrap().norm() < 1e-10);
                    count += 1;
                }
            }
        }
        assert!(count > 50);
    }

    #[test]
    fn extended_icy_entries_and_light_cone() {
        let (m, ext) = ext_model(false);
        for (w, rw) in ext.white_region.iter().enumerate() {
            if *rw != Region::North {
                continue;
            }
            let col = propagate_column(&m, &ext, w, Region::North).unwrap();
            if let Some(icy) = ext.white_icy[w] {
                let want = C64::new(1.0, 0.0) / ext_weight(&m, &ext, icy);
                assert!((col[ext.edges[icy].b] - want).norm() < 1e-10);
            }
            for (b, rb) in ext.black_region.iter().enumerate() {
                if *rb == Region::North && !ext.in_light_cone(ext.whites[w], ext.blacks[b]) {
                    assert!(
                        col[b].norm() < 1e-10,
                        "{:?} {:?}: {}",
                        ext.whites[w],
                        ext.blacks[b],
                        col[b]
                    );
                }
            }
        }
        assert!(extended_kinv_entry(
            &m,
            &ext,
            ext.black_index(0, 2 * 2 + 2).unwrap(),
            ext.white_index(-2, 0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn window_identity() {
        for genus1 in [false, true] {
            let (m, ext) = ext_model(genus1);
            let k = ext_kmatrix(&m, &ext);
            let (nb, nw) = (ext.blacks.len(), ext.whites.len());
            let mut a = DMatrix::<C64>::from_element(nb, nw, C64::new(f64::NAN, 0.0));
            for w in 0..nw {
                for b in 0..nb {
                    if !rejected(&ext, b, w)
                        && (!genus1 || ext.white_region[w] == Region::Aztec || w % 2 == 0)
                    {
                        a[(b, w)] = extended_kinv_entry(&m, &ext, b, w).unwrap();
                    }
                }
            }
            let mut checked = 0;
            for wr in (0..nw).filter(|&w| ext.white_complete(w)) {
                for wc in 0..nw {
                    let terms: Vec<C64> = ext.white_adj[wr]
                        .iter()
                        .map(|&e| k[(wr, ext.edges[e].b)] * a[(ext.edges[e].b, wc)])
                        .collect();
                    if terms.iter().any(|z| z.re.is_nan()) {
                        continue;
                    }
                    let sum: C64 = terms.iter().sum();
                    let want = if wr == wc { 1.0 } else { 0.0 };
                    assert!(
                        (sum - want).norm() < 1e-9,
                        "genus1={genus1} {:?} {:?}: {sum}",
                        ext.whites[wr],
                        ext.whites[wc]
                    );
                    checked += 1;
                }
            }
            for br in (0..nb).filter(|&b| ext.black_complete(b)) {
                for bc in 0..nb {
                    let terms: Vec<C64> = ext.black_adj[br]
                        .iter()
                        .map(|&e| a[(bc, ext.edges[e].w)] * k[(ext.edges[e].w, br)])
                        .collect();
                    if terms.iter().any(|z| z.re.is_nan()) {
                        continue;
                    }
                    let sum: C64 = terms.iter().sum();
                    let want = if br == bc { 1.0 } else { 0.0 };
                    assert!(
                        (sum - want).norm() < 1e-9,
                        "genus1={genus1} {:?} {:?}: {sum}",
                        ext.blacks[bc],
                        ext.blacks[br]
                    );
                    checked += 1;
                }
            }
            assert!(checked > 200);
        }
    }

    #[test]
    fn laurent_series_examples() {
        // 1/(ζ-1)^2 (ζ-2): residue at 1 is -1, at 2 is 1, at infinity 0
        let mut r = RationalForm {
            constant: C64::new(1.0, 0.0),
            factors: vec![],
        };
        r.factors.push((0.0, C64::new(1.0, 0.0), -2));
        r.factors.push((1.0, C64::new(2.0, 0.0), -1));
        assert!((r.residue_at(0.0) + 1.0).norm() < 1e-15);
        assert!((r.residue_at(1.0) - 1.0).norm() < 1e-15);
        assert!(r.residue_at_infinity().norm() < 1e-15);
        // ζ^2/(ζ-1): residue at infinity is -1
        let mut r = RationalForm {
            constant: C64::new(1.0, 0.0),
            factors: vec![],
        };
        r.factors.push((0.0, C64::new(0.0, 0.0), 2));
        r.factors.push((1.0, C64::new(1.0, 0.0), -1));
        assert!((r.residue_at_infinity() + 1.0).norm() < 1e-15);
    }
}
