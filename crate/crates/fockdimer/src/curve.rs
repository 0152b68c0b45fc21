//! Theta functions, prime forms and Jacobi elliptic functions on the two
//! supported M-curves.
//!
//! Points of the real component `A0` are described by a real *angle
//! coordinate* `z`. For the Riemann sphere the angle `z` (defined modulo `π`)
//! stands for the point `exp(2iz)` of the unit circle; for the torus
//! `C/(Z + τZ)` it is the point `z` itself (defined modulo 1). All functions
//! of this module take angle coordinates, possibly complex.
//!
//! The classical theta functions use the convention
//!
//! ```text
//! θ1(z|τ) = 2 Σ_{m≥0} (-1)^m q^{(m+1/2)^2} sin((2m+1)z)
//! θ2(z|τ) = 2 Σ_{m≥0} q^{(m+1/2)^2} cos((2m+1)z)
//! θ3(z|τ) = 1 + 2 Σ_{m≥1} q^{m^2} cos(2mz)
//! θ4(z|τ) = 1 + 2 Σ_{m≥1} (-1)^m q^{m^2} cos(2mz)
//! ```
//!
//! with nome `q = exp(iπτ)`, `τ = i·tau_im`.

use crate::lattice::{FormalDivisor, Track};
use crate::{Error, C64};
use std::f64::consts::PI;

/// Smallest accepted imaginary part of the modular parameter.
pub const MIN_TAU_IM: f64 = 0.125;
const MAX_TERMS: usize = 64;

/// The M-curve carrying the train-track angles.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Curve {
    /// Riemann sphere, real component the unit circle.
    Genus0,
    /// Rectangular torus with `τ = i·tau_im`.
    Genus1 { tau_im: f64 },
}

/// Value of the Abel-Jacobi map. On the sphere the Jacobian is trivial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JacobianPoint {
    Unit,
    /// Real point of `R/Z`, stored in `[0, 1)`.
    Real(f64),
}

impl JacobianPoint {
    pub fn value(&self) -> f64 {
        match self {
            JacobianPoint::Unit => 0.0,
            JacobianPoint::Real(x) => *x,
        }
    }
}

impl Curve {
    pub fn genus1(tau_im: f64) -> Result<Curve, Error> {
        if !(tau_im.is_finite() && tau_im >= MIN_TAU_IM) {
            return Err(Error::Config(format!(
                "tau_im must be finite and at least {MIN_TAU_IM}, got {tau_im}"
            )));
        }
        Ok(Curve::Genus1 { tau_im })
    }

    pub fn genus(&self) -> usize {
        match self {
            Curve::Genus0 => 0,
            Curve::Genus1 { .. } => 1,
        }
    }

    /// Period of the angle coordinate: `π` on the sphere, `1` on the torus.
    pub fn period(&self) -> f64 {
        match self {
            Curve::Genus0 => PI,
            Curve::Genus1 { .. } => 1.0,
        }
    }

    pub fn nome(&self) -> Option<f64> {
        match self {
            Curve::Genus0 => None,
            Curve::Genus1 { tau_im } => Some((-PI * tau_im).exp()),
        }
    }

    /// Canonical representative of an angle, in `[0, period)`.
    pub fn canonical(&self, a: f64) -> f64 {
        let p = self.period();
        let r = a.rem_euclid(p);
        if r >= p {
            0.0
        } else {
            r
        }
    }

    /// Uniformizing coordinate of the point with angle coordinate `z`:
    /// `exp(2iz)` on the sphere, `z` on the torus.
    pub fn point(&self, z: C64) -> C64 {
        match self {
            Curve::Genus0 => (C64::i() * 2.0 * z).exp(),
            Curve::Genus1 { .. } => z,
        }
    }

    /// Derivative of [`Curve::point`] with respect to `z`.
    pub fn point_dz(&self, z: C64) -> C64 {
        match self {
            Curve::Genus0 => C64::i() * 2.0 * (C64::i() * 2.0 * z).exp(),
            Curve::Genus1 { .. } => C64::new(1.0, 0.0),
        }
    }

    /// Riemann theta function: `1` on the sphere, `θ3(πz|τ)` on the torus.
    pub fn theta(&self, z: C64) -> C64 {
        match self {
            Curve::Genus0 => C64::new(1.0, 0.0),
            Curve::Genus1 { tau_im } => theta3(PI * z, (-PI * tau_im).exp()),
        }
    }

    /// Real version of [`Curve::theta`].
    pub fn theta_re(&self, x: f64) -> f64 {
        match self {
            Curve::Genus0 => 1.0,
            Curve::Genus1 { tau_im } => theta3_re(PI * x, (-PI * tau_im).exp()),
        }
    }

    /// Prime form `E(a, b)` in angle coordinates: `exp(2ib) - exp(2ia)` on the
    /// sphere and `θ1(π(b-a)) / (π θ1'(0))` on the torus.
    pub fn prime_form(&self, a: C64, b: C64) -> C64 {
        match self {
            Curve::Genus0 => self.point(b) - self.point(a),
            Curve::Genus1 { tau_im } => {
                let q = (-PI * tau_im).exp();
                theta1(PI * (b - a), q) / (PI * theta1_prime0(q))
            }
        }
    }

    /// Logarithmic derivative `∂/∂b log E(a, b)` and its derivative, with
    /// respect to the uniformizing coordinate `point(b)`.
    ///
    /// On the sphere this is `1/(u-A)` and `-1/(u-A)^2`; on the torus
    /// `π θ1'/θ1` and `π^2 (θ1''/θ1 - (θ1'/θ1)^2)` evaluated at `π(b-a)`.
    pub fn dlog_prime_form(&self, a: C64, b: C64) -> (C64, C64) {
        match self {
            Curve::Genus0 => {
                let r = C64::new(1.0, 0.0) / (self.point(b) - self.point(a));
                (r, -r * r)
            }
            Curve::Genus1 { tau_im } => {
                let q = (-PI * tau_im).exp();
                let (f, f1, f2) = theta1_derivs(PI * (b - a), q);
                let l = f1 / f;
                (l * PI, (f2 / f - l * l) * PI * PI)
            }
        }
    }

    /// Abel-Jacobi image of a formal divisor, with `angle` giving the value
    /// attached to each train-track and `d_value` the value at the base face.
    pub fn abel_jacobi(
        &self,
        dv: &FormalDivisor,
        angle: impl Fn(Track) -> f64,
        d_value: f64,
    ) -> JacobianPoint {
        match self {
            Curve::Genus0 => JacobianPoint::Unit,
            Curve::Genus1 { .. } => {
                let x = dv.evaluate(angle, d_value);
                JacobianPoint::Real(self.canonical(x))
            }
        }
    }

    /// Complementary modulus `k' = θ4(0)^2/θ3(0)^2` of the torus.
    pub fn kprime(&self) -> Option<f64> {
        self.nome().map(kprime_from_nome)
    }
}

fn series_done(bound: f64, scale: f64) -> bool {
    bound <= 1e-17 * scale || bound < 1e-300
}

/// `θ1(z|q)`.
pub fn theta1(z: C64, q: f64) -> C64 {
    theta1_derivs(z, q).0
}

/// `θ1`, `θ1'` and `θ1''` at `z`.
pub fn theta1_derivs(z: C64, q: f64) -> (C64, C64, C64) {
    let growth = z.im.abs();
    let mut s0 = C64::new(0.0, 0.0);
    let mut s1 = C64::new(0.0, 0.0);
    let mut s2 = C64::new(0.0, 0.0);
    let mut scale = 0.0f64;
    for m in 0..MAX_TERMS {
        let k = (2 * m + 1) as f64;
        let e = (m as f64 + 0.5).powi(2);
        let c = if m % 2 == 0 { 1.0 } else { -1.0 } * 2.0 * q.powf(e);
        let bound = c.abs() * (k * growth).exp() * k * k;
        scale = scale.max(bound);
        let arg = z * k;
        let (sn, cs) = (arg.sin(), arg.cos());
        s0 += sn * c;
        s1 += cs * (c * k);
        s2 -= sn * (c * k * k);
        if m > 0 && series_done(bound, scale) {
            break;
        }
    }
    (s0, s1, s2)
}

/// `θ1'(0|q)`.
pub fn theta1_prime0(q: f64) -> f64 {
    let mut s = 0.0;
    for m in 0..MAX_TERMS {
        let k = (2 * m + 1) as f64;
        let t = if m % 2 == 0 { 1.0 } else { -1.0 } * 2.0 * k * q.powf((m as f64 + 0.5).powi(2));
        s += t;
        if t.abs() <= 1e-17 * s.abs() {
            break;
        }
    }
    s
}

/// `θ2(z|q)`.
pub fn theta2(z: C64, q: f64) -> C64 {
    let growth = z.im.abs();
    let mut s = C64::new(0.0, 0.0);
    let mut scale = 0.0f64;
    for m in 0..MAX_TERMS {
        let k = (2 * m + 1) as f64;
        let c = 2.0 * q.powf((m as f64 + 0.5).powi(2));
        let bound = c * (k * growth).exp();
        scale = scale.max(bound);
        s += (z * k).cos() * c;
        if m > 0 && series_done(bound, scale) {
            break;
        }
    }
    s
}

fn theta34(z: C64, q: f64, alternate: bool) -> C64 {
    let growth = z.im.abs();
    let mut s = C64::new(1.0, 0.0);
    for m in 1..MAX_TERMS {
        let k = (2 * m) as f64;
        let sign = if alternate && m % 2 == 1 { -1.0 } else { 1.0 };
        let c = sign * 2.0 * q.powi((m * m) as i32);
        let bound = c.abs() * (k * growth).exp();
        s += (z * k).cos() * c;
        if series_done(bound, s.norm().max(1e-300)) {
            break;
        }
    }
    s
}

/// `θ3(z|q)`.
pub fn theta3(z: C64, q: f64) -> C64 {
    theta34(z, q, false)
}

/// `θ4(z|q)`.
pub fn theta4(z: C64, q: f64) -> C64 {
    theta34(z, q, true)
}

/// `θ3(x|q)` for real `x`.
pub fn theta3_re(x: f64, q: f64) -> f64 {
    theta3(C64::new(x, 0.0), q).re
}

/// `k' = θ4(0)^2/θ3(0)^2`.
pub fn kprime_from_nome(q: f64) -> f64 {
    let z = C64::new(0.0, 0.0);
    (theta4(z, q).re / theta3(z, q).re).powi(2)
}

/// Solves `θ4(0)^2/θ3(0)^2 = kp` for `tau_im` by bisection.
pub fn nome_from_kprime(kp: f64) -> Result<Curve, Error> {
    if !(kp > 0.0 && kp < 1.0) {
        return Err(Error::Domain(format!("k' must lie in (0,1), got {kp}")));
    }
    let f = |tau_im: f64| kprime_from_nome((-PI * tau_im).exp()) - kp;
    let (mut lo, mut hi) = (MIN_TAU_IM, 40.0);
    if f(lo) > 0.0 {
        return Err(Error::Domain(format!(
            "k' = {kp} needs tau_im below {MIN_TAU_IM}"
        )));
    }
    if f(hi) < 0.0 {
        return Err(Error::Domain(format!("k' = {kp} too close to 1")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let tau_im = 0.5 * (lo + hi);
    if f(tau_im).abs() > 1e-12 {
        return Err(Error::NoConvergence(format!(
            "nome inversion for k' = {kp} stalled at residual {:e}",
            f(tau_im)
        )));
    }
    Curve::genus1(tau_im)
}

/// Jacobi functions for a fixed modulus, evaluated through theta quotients.
#[derive(Clone, Copy, Debug)]
pub struct Jacobi {
    pub q: f64,
    pub k: f64,
    pub kprime: f64,
    /// Quarter period `K = (π/2) θ3(0)^2`.
    pub quarter: f64,
    t2: f64,
    t3: f64,
    t4: f64,
}

impl Jacobi {
    pub fn from_modulus(k: f64) -> Result<Jacobi, Error> {
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::Domain(format!("modulus must lie in (0,1), got {k}")));
        }
        let kp = (1.0 - k * k).sqrt();
        let curve = nome_from_kprime(kp)?;
        Ok(Jacobi::from_nome(curve.nome().unwrap()))
    }

    pub fn from_nome(q: f64) -> Jacobi {
        let z = C64::new(0.0, 0.0);
        let (t2, t3, t4) = (theta2(z, q).re, theta3(z, q).re, theta4(z, q).re);
        Jacobi {
            q,
            k: (t2 / t3).powi(2),
            kprime: (t4 / t3).powi(2),
            quarter: 0.5 * PI * t3 * t3,
            t2,
            t3,
            t4,
        }
    }

    fn arg(&self, u: f64) -> C64 {
        C64::new(u / (self.t3 * self.t3), 0.0)
    }

    pub fn sn(&self, u: f64) -> f64 {
        let z = self.arg(u);
        self.t3 / self.t2 * (theta1(z, self.q) / theta4(z, self.q)).re
    }

    pub fn cn(&self, u: f64) -> f64 {
        let z = self.arg(u);
        self.t4 / self.t2 * (theta2(z, self.q) / theta4(z, self.q)).re
    }

    pub fn dn(&self, u: f64) -> f64 {
        let z = self.arg(u);
        self.t4 / self.t3 * (theta3(z, self.q) / theta4(z, self.q)).re
    }

    pub fn cs(&self, u: f64) -> f64 {
        let z = self.arg(u);
        self.t4 / self.t3 * (theta2(z, self.q) / theta1(z, self.q)).re
    }
}

/// `cs(z|k)`.
pub fn jacobi_cs(z: f64, k: f64) -> Result<f64, Error> {
    Ok(Jacobi::from_modulus(k)?.cs(z))
}

/// `dn(z|k)`.
pub fn jacobi_dn(z: f64, k: f64) -> Result<f64, Error> {
    Ok(Jacobi::from_modulus(k)?.dn(z))
}

/// Complete elliptic integral `K(k)`.
pub fn quarter_period(k: f64) -> Result<f64, Error> {
    Ok(Jacobi::from_modulus(k)?.quarter)
}
