//! Fock's Kasteleyn matrix on the Aztec diamond, partition functions and
//! gauge transformations.
//!
//! Angles live on the real component of the curve. All prime forms are
//! evaluated with one fixed real lift in which the four families appear as
//! consecutive intervals `α < γ < β < δ` inside a single period.

use crate::curve::{nome_from_kprime, theta1, theta2, Curve};
use crate::lattice::{
    abel_divisor_at, AztecGraph, Color, Edge, FaceClass, FaceId, Family, Track, VertexId,
};
use crate::{Error, C64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Train-track angles of the four families, indexed from 1 in the maths and
/// from 0 in the vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleAssignment {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
}

impl AngleAssignment {
    pub fn homogeneous(n: usize, a: f64, b: f64, c: f64, d: f64) -> Self {
        AngleAssignment {
            alpha: vec![a; n],
            beta: vec![b; n],
            gamma: vec![c; n],
            delta: vec![d; n],
        }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// Angle of a track. Tracks beyond the diamond (indices outside `1..n`)
    /// reuse the nearest angle of their family.
    pub fn angle(&self, t: Track) -> f64 {
        let v = match t.family {
            Family::A => &self.alpha,
            Family::B => &self.beta,
            Family::C => &self.gamma,
            Family::D => &self.delta,
        };
        let i = (t.index - 1).clamp(0, v.len() as i32 - 1) as usize;
        v[i]
    }

    pub fn is_homogeneous(&self) -> bool {
        [&self.alpha, &self.beta, &self.gamma, &self.delta]
            .iter()
            .all(|v| v.iter().all(|x| *x == v[0]))
    }

    fn family(&self, f: Family) -> &Vec<f64> {
        match f {
            Family::A => &self.alpha,
            Family::B => &self.beta,
            Family::C => &self.gamma,
            Family::D => &self.delta,
        }
    }

    fn family_mut(&mut self, f: Family) -> &mut Vec<f64> {
        match f {
            Family::A => &mut self.alpha,
            Family::B => &mut self.beta,
            Family::C => &mut self.gamma,
            Family::D => &mut self.delta,
        }
    }

    /// Checks the cyclic order `α < γ < β < δ` on a circle of the given
    /// period and returns the angles lifted to one window `[s, s+period)`
    /// where the families are consecutive intervals.
    pub fn lifted(&self, period: f64) -> Result<AngleAssignment, Error> {
        let n = self.n();
        if n == 0
            || [&self.beta, &self.gamma, &self.delta]
                .iter()
                .any(|v| v.len() != n)
        {
            return Err(Error::Config(
                "the four angle families must have the same positive length".into(),
            ));
        }
        let mut pts: Vec<(f64, Family)> = Vec::with_capacity(4 * n);
        for f in [Family::A, Family::B, Family::C, Family::D] {
            for &x in self.family(f) {
                if !x.is_finite() {
                    return Err(Error::Config("angles must be finite".into()));
                }
                pts.push((x.rem_euclid(period), f));
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pts.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 != w[1].1 {
                return Err(Error::Config(format!(
                    "angles of two families coincide at {}",
                    w[0].0
                )));
            }
        }
        let m = pts.len();
        if pts[0].1 != pts[m - 1].1 && pts[0].0 + period == pts[m - 1].0 {
            return Err(Error::Config("angles of two families coincide".into()));
        }
        // start at the first α that follows a δ
        let start = (0..m)
            .find(|&i| pts[i].1 == Family::A && pts[(i + m - 1) % m].1 == Family::D)
            .ok_or_else(|| {
                Error::Config("angles violate the cyclic order alpha < gamma < beta < delta".into())
            })?;
        let order = [Family::A, Family::C, Family::B, Family::D];
        let mut stage = 0;
        for k in 0..m {
            let f = pts[(start + k) % m].1;
            while order[stage] != f {
                stage += 1;
                if stage == 4 {
                    return Err(Error::Config(
                        "angles violate the cyclic order alpha < gamma < beta < delta".into(),
                    ));
                }
            }
        }
        if stage != 3 {
            return Err(Error::Config("every family must be present".into()));
        }
        let last_d = pts[(start + m - 1) % m].0;
        let first_a = pts[start].0;
        let gap = (first_a - last_d).rem_euclid(period);
        let s = last_d + 0.5 * if gap == 0.0 { period } else { gap };
        let mut out = self.clone();
        for f in [Family::A, Family::B, Family::C, Family::D] {
            for x in out.family_mut(f).iter_mut() {
                *x = s + (*x - s).rem_euclid(period);
            }
        }
        Ok(out)
    }
}

/// Fock's dimer model on `Az_n`.
#[derive(Clone, Debug)]
pub struct FockModel {
    pub graph: AztecGraph,
    pub curve: Curve,
    /// Lifted angles (see [`AngleAssignment::lifted`]).
    pub angles: AngleAssignment,
    pub t: f64,
    pub d: f64,
}

impl FockModel {
    pub fn new(curve: Curve, angles: AngleAssignment, t: f64, d: f64) -> Result<FockModel, Error> {
        if !(t.is_finite() && d.is_finite()) {
            return Err(Error::Config("t and d must be finite".into()));
        }
        if let Curve::Genus1 { tau_im } = curve {
            Curve::genus1(tau_im)?;
        }
        let lifted = angles.lifted(curve.period())?;
        let graph = AztecGraph::new(angles.n())?;
        Ok(FockModel {
            graph,
            curve,
            angles: lifted,
            t,
            d,
        })
    }

    pub fn genus0(angles: AngleAssignment) -> Result<FockModel, Error> {
        FockModel::new(Curve::Genus0, angles, 0.0, 0.0)
    }

    pub fn n(&self) -> usize {
        self.graph.n
    }

    pub fn angle(&self, t: Track) -> f64 {
        self.angles.angle(t)
    }

    /// Real value of the discrete Abel map at a point of the diamond graph.
    pub fn abel_value(&self, x: i32, y: i32) -> f64 {
        abel_divisor_at(x, y).evaluate(|t| self.angle(t), self.d)
    }

    /// `θ(t + D(f))` for a face.
    pub fn face_theta(&self, f: FaceId) -> f64 {
        self.curve.theta_re(self.t + self.abel_value(f.x, f.y))
    }

    pub fn prime(&self, a: f64, b: f64) -> C64 {
        self.curve.prime_form(C64::new(a, 0.0), C64::new(b, 0.0))
    }

    /// Kasteleyn entry `E(α, β) / (θ(t + D(f)) θ(t + D(f')))` of an edge.
    pub fn fock_weight(&self, e: &Edge) -> C64 {
        let num = self.prime(self.angle(e.alpha), self.angle(e.beta));
        match self.curve {
            Curve::Genus0 => num,
            _ => num / (self.face_theta(e.f) * self.face_theta(e.fp)),
        }
    }

    pub fn build_matrix(&self) -> KasteleynMatrix {
        let g = &self.graph;
        let mut m = DMatrix::<C64>::zeros(g.whites.len(), g.blacks.len());
        for e in &g.edges {
            let i = g.white_index(e.w.x, e.w.y).unwrap();
            let j = g.black_index(e.b.x, e.b.y).unwrap();
            m[(i, j)] = self.fock_weight(e);
        }
        KasteleynMatrix { matrix: m }
    }

    /// Edge weights `|K_{w,b}|` indexed like the graph's edges.
    pub fn edge_moduli(&self) -> Vec<f64> {
        self.graph
            .edges
            .iter()
            .map(|e| self.fock_weight(e).norm())
            .collect()
    }

    /// The model on `Az_{n-1}` appearing in the product recurrence.
    pub fn reduced(&self) -> Option<FockModel> {
        let n = self.n();
        if n <= 1 {
            return None;
        }
        let a = &self.angles;
        let angles = AngleAssignment {
            alpha: a.alpha[..n - 1].to_vec(),
            beta: a.beta[1..].to_vec(),
            gamma: a.gamma[..n - 1].to_vec(),
            delta: a.delta[1..].to_vec(),
        };
        let graph = AztecGraph::new(n - 1).ok()?;
        Some(FockModel {
            graph,
            curve: self.curve,
            angles,
            t: self.t,
            d: self.d + a.beta[0] - a.delta[0],
        })
    }

    /// Multiplier `Z_n / Z_{n-1}` of the product recurrence, as a logarithm.
    pub fn log_recurrence_multiplier(&self) -> f64 {
        let n = self.n();
        let a = &self.angles;
        let mut s = 0.0;
        for j in 0..n {
            s += self.prime(a.alpha[j], a.beta[j]).norm().ln();
            s += self.prime(a.gamma[j], a.delta[j]).norm().ln();
        }
        if self.curve.genus() == 0 {
            return s;
        }
        for (f, c) in &self.graph.faces {
            match c {
                FaceClass::Odd => {
                    let (al, be, ga, de) = odd_face_tracks(*f);
                    let df = self.t + self.abel_value(f.x, f.y);
                    let shift = self.angle(al) + self.angle(be) - self.angle(ga) - self.angle(de);
                    s -= self.curve.theta_re(df).ln() - self.curve.theta_re(df + shift).ln();
                }
                FaceClass::Boundary | FaceClass::Corner => s -= self.face_theta(*f).ln(),
                FaceClass::InteriorEven => {}
            }
        }
        s
    }

    /// `log Z_n` from the product recurrence.
    pub fn log_partition_product(&self) -> f64 {
        let mut s = self.log_recurrence_multiplier();
        let mut m = self.reduced();
        while let Some(r) = m {
            s += r.log_recurrence_multiplier();
            m = r.reduced();
        }
        s
    }

    pub fn partition_product(&self) -> f64 {
        self.log_partition_product().exp()
    }

    /// Factor relating the partition functions before and after a spider
    /// move at an odd face.
    pub fn spider_factor(&self, f: FaceId) -> Result<f64, Error> {
        if self.graph.face_class(f) != Some(FaceClass::Odd) {
            return Err(Error::Domain(format!(
                "spider moves act on odd faces, got {f:?}"
            )));
        }
        let (al, be, ga, de) = odd_face_tracks(f);
        let (al, be, ga, de) = (
            self.angle(al),
            self.angle(be),
            self.angle(ga),
            self.angle(de),
        );
        let mut num = 1.0;
        for (dx, dy) in [(-1, -1), (1, -1), (1, 1), (-1, 1)] {
            num *= self.face_theta(FaceId {
                x: f.x + dx,
                y: f.y + dy,
            });
        }
        let df = self.t + self.abel_value(f.x, f.y);
        let e = (self.prime(al, be) * self.prime(ga, de)).norm();
        Ok(num / e * self.curve.theta_re(df + al + be - ga - de) / self.curve.theta_re(df))
    }

    /// Factor of a degree-two vertex contraction between faces `f` and `fp`,
    /// the two edges being crossed by tracks with angles `a` and `b`.
    pub fn contraction_factor(&self, a: f64, b: f64, f: FaceId, fp: FaceId) -> f64 {
        self.prime(a, b).norm() / (self.face_theta(f) * self.face_theta(fp))
    }

    /// `log` of the product of all move factors reducing `Az_n` to
    /// `Az_{n-1}`: one spider move per odd face, then the contraction (or
    /// removal of the forced pendant edge) at every original vertex.
    pub fn log_sweep_factor(&self) -> f64 {
        let g = &self.graph;
        let mut s = 0.0;
        for (f, c) in &g.faces {
            if *c == FaceClass::Odd {
                s += self.spider_factor(*f).unwrap().ln();
            }
        }
        for w in &g.whites {
            let k = (w.y + 1) / 2;
            let (a, b) = (
                self.angle(Track::new(Family::A, k)),
                self.angle(Track::new(Family::B, k)),
            );
            s += self
                .contraction_factor(
                    a,
                    b,
                    FaceId { x: w.x, y: w.y + 1 },
                    FaceId { x: w.x, y: w.y - 1 },
                )
                .ln();
        }
        for b in &g.blacks {
            let i = (b.x + 1) / 2;
            let (c, d) = (
                self.angle(Track::new(Family::C, i)),
                self.angle(Track::new(Family::D, i)),
            );
            s += self
                .contraction_factor(
                    c,
                    d,
                    FaceId { x: b.x - 1, y: b.y },
                    FaceId { x: b.x + 1, y: b.y },
                )
                .ln();
        }
        s
    }
}

/// Tracks `(α, β, γ, δ)` below, above, left and right of an odd face.
pub fn odd_face_tracks(f: FaceId) -> (Track, Track, Track, Track) {
    (
        Track::row(f.y - 1),
        Track::row(f.y),
        Track::column(f.x - 1),
        Track::column(f.x),
    )
}

/// Kasteleyn matrix, rows indexed by white vertices and columns by black
/// vertices in the graph's order.
#[derive(Clone, Debug, PartialEq)]
pub struct KasteleynMatrix {
    pub matrix: DMatrix<C64>,
}

impl KasteleynMatrix {
    pub fn log_abs_det(&self) -> f64 {
        log_abs_det(&self.matrix)
    }

    pub fn abs_det(&self) -> f64 {
        self.log_abs_det().exp()
    }

    /// Full inverse by LU, rows indexed by black vertices.
    pub fn inverse(&self) -> Result<DMatrix<C64>, Error> {
        self.matrix
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Domain("Kasteleyn matrix is singular".into()))
    }
}

pub fn log_abs_det(m: &DMatrix<C64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].norm().ln()).sum()
}

/// Checks the Kasteleyn condition on every inner face of `Az_n`: the
/// alternating product of phases around a face of degree `2k` is
/// `(-1)^(k+1)`. Returns the largest deviation.
pub fn kasteleyn_defect(g: &AztecGraph, k: &DMatrix<C64>) -> f64 {
    let entry = |w: VertexId, b: VertexId| {
        k[(
            g.white_index(w.x, w.y).unwrap(),
            g.black_index(b.x, b.y).unwrap(),
        )]
    };
    let mut worst = 0.0f64;
    for f in g.inner_faces() {
        let ring = g.face_boundary(f).unwrap();
        worst = worst.max(face_phase_defect(&ring, &entry));
    }
    worst
}

/// Deviation of the alternating phase product around a face given by its
/// boundary vertices in counterclockwise order, starting at a white vertex.
pub fn face_phase_defect(ring: &[VertexId], entry: &dyn Fn(VertexId, VertexId) -> C64) -> f64 {
    let k = ring.len() / 2;
    let mut p = C64::new(1.0, 0.0);
    for j in 0..k {
        let w = ring[2 * j];
        let b = ring[2 * j + 1];
        let bprev = ring[(2 * j + ring.len() - 1) % ring.len()];
        let num = entry(w, b);
        let den = entry(w, bprev);
        p *= (num / num.norm()) / (den / den.norm());
    }
    let want = if k % 2 == 1 { 1.0 } else { -1.0 };
    (p - want).norm()
}

/// Face weight `Π ν(w_j b_j) / ν(w_j b_{j-1})` of an inner face.
pub fn face_weight(g: &AztecGraph, nu: &dyn Fn(&Edge) -> f64, f: FaceId) -> Result<f64, Error> {
    let ring = match g.face_class(f) {
        Some(FaceClass::Odd) | Some(FaceClass::InteriorEven) => g.face_boundary(f).unwrap(),
        _ => return Err(Error::Domain(format!("face {f:?} is not an inner face"))),
    };
    let e = |w: VertexId, b: VertexId| nu(g.edge((w.x, w.y), (b.x, b.y)).unwrap());
    debug_assert_eq!(ring[0].color, Color::White);
    Ok(e(ring[0], ring[1]) * e(ring[2], ring[3]) / (e(ring[0], ring[3]) * e(ring[2], ring[1])))
}

/// Genus-0 closed form of the partition function. Both displayed forms are
/// evaluated and must agree.
pub fn genus0_closed_form(m: &FockModel) -> Result<f64, Error> {
    Ok(log_genus0_closed_form(m)?.exp())
}

pub fn log_genus0_closed_form(m: &FockModel) -> Result<f64, Error> {
    if m.curve.genus() != 0 {
        return Err(Error::Domain("closed form requires genus 0".into()));
    }
    let n = m.n();
    let a = &m.angles;
    let (mut first, mut second) = (0.0, 0.0);
    for l in 0..n {
        for j in 0..n - l {
            let (al, ga) = (a.alpha[j], a.gamma[j]);
            let (be, de) = (a.beta[j + l], a.delta[j + l]);
            first += ((be - al).sin() * (de - ga).sin()).abs().ln();
            second += ((de - be).sin() * (ga - al).sin() + (be - ga).sin() * (de - al).sin())
                .abs()
                .ln();
        }
    }
    let base = (n * (n + 1)) as f64 * 2f64.ln();
    if (first - second).abs() > 1e-10 * (1.0 + first.abs()) {
        return Err(Error::Verification(format!(
            "the two closed forms disagree: {first} vs {second} (logs)"
        )));
    }
    Ok(base + first)
}

/// Stanley's edge weights: the four edges of the odd face in row `j` carry
/// `x_j` (bottom left), `y_j` (bottom right), `z_j` (top left) and `w_j`
/// (top right).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StanleyWeights {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

impl StanleyWeights {
    pub fn validate(&self) -> Result<usize, Error> {
        let n = self.x.len();
        if n == 0 || self.y.len() != n || self.z.len() != n || self.w.len() != n {
            return Err(Error::Config(
                "Stanley weights need four lists of equal positive length".into(),
            ));
        }
        if [&self.x, &self.y, &self.z, &self.w]
            .iter()
            .any(|v| v.iter().any(|x| !(*x > 0.0 && x.is_finite())))
        {
            return Err(Error::Domain("Stanley weights must be positive".into()));
        }
        Ok(n)
    }

    /// Weight of an edge of `Az_n`.
    pub fn edge_weight(&self, e: &Edge) -> f64 {
        let odd = if e.f.x.rem_euclid(2) == 1 { e.f } else { e.fp };
        let j = ((odd.y + 1) / 2 - 1) as usize;
        let left = e.w.x < odd.x;
        let below = e.b.y < odd.y;
        match (left, below) {
            (true, true) => self.x[j],
            (false, true) => self.y[j],
            (true, false) => self.z[j],
            (false, false) => self.w[j],
        }
    }

    /// Product formula `Π_{l} Π_{j} (x_j w_{j+l} + y_j z_{j+l})`.
    pub fn partition(&self) -> Result<f64, Error> {
        let n = self.validate()?;
        let mut p = 1.0;
        for l in 0..n {
            for j in 0..n - l {
                p *= self.x[j] * self.w[j + l] + self.y[j] * self.z[j + l];
            }
        }
        Ok(p)
    }

    /// The reference matching: in odd-face row `j`, the top-left edges of
    /// faces `1..=j` and the bottom-right edges of faces `j..=n`.
    pub fn reference_matching(n: usize) -> Vec<((i32, i32), (i32, i32))> {
        let mut m = Vec::new();
        for j in 1..=n as i32 {
            let fy = 2 * j - 1;
            for i in 1..=n as i32 {
                let fx = 2 * i - 1;
                if i <= j {
                    m.push(((fx - 1, fy), (fx, fy + 1)));
                }
                if i >= j {
                    m.push(((fx + 1, fy), (fx, fy - 1)));
                }
            }
        }
        m
    }
}

/// Stanley's formula for the partition function.
pub fn stanley_partition(s: &StanleyWeights) -> Result<f64, Error> {
    s.partition()
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f changes sign on (lo, hi); stops when the interval cannot shrink
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Genus-0 Fock angles gauge equivalent to Stanley's weights, with
/// `γ ≡ gamma`, `δ ≡ delta` and prescribed `α_1`. Angles are in `R/πZ`.
pub fn stanley_to_fock(
    s: &StanleyWeights,
    alpha1: f64,
    gamma: f64,
    delta: f64,
) -> Result<AngleAssignment, Error> {
    let n = s.validate()?;
    // lift so that alpha1 < gamma < delta < alpha1 + π
    let a1 = alpha1;
    let g = a1 + (gamma - a1).rem_euclid(PI);
    let d = a1 + (delta - a1).rem_euclid(PI);
    if !(a1 < g && g < d) {
        return Err(Error::Config(
            "need alpha1 < gamma < delta cyclically, all distinct".into(),
        ));
    }
    let sn = |x: f64| x.sin().abs();
    let mut alpha = vec![a1];
    let mut beta = Vec::new();
    for j in 0..n {
        let aj = alpha[j];
        // |sin(δ-β)|/|sin(β-γ)| decreases from ∞ to 0 on (γ, δ)
        let target = s.x[j] * s.w[j] / (s.y[j] * s.z[j]) * sn(d - aj) / sn(g - aj);
        let bj = bisect(g, d, |b| (sn(d - b) / sn(b - g)).ln() - target.ln());
        beta.push(bj);
        if j + 1 < n {
            // |sin(δ-α)|/|sin(γ-α)| increases from 0 to ∞ on (δ, γ+π); α is
            // stored in (δ-π, γ)
            let target = s.y[j + 1] * s.z[j] / (s.x[j + 1] * s.w[j]) * sn(d - bj) / sn(bj - g);
            let a = bisect(d, g + PI, |a| (sn(d - a) / sn(g - a)).ln() - target.ln());
            alpha.push(a - PI);
        }
    }
    Ok(AngleAssignment {
        alpha,
        beta,
        gamma: vec![gamma; n],
        delta: vec![delta; n],
    })
}

/// Biased 2×2 periodic weights: row strip `j`, column strip `i` carries
/// `pattern[j mod 4][i mod 4]`.
pub fn biased_weight(a: f64, b: f64, e: &Edge) -> f64 {
    let pat = [
        [1.0 / b, a, b, a],
        [a / b, 1.0, a * b, 1.0],
        [b, a, 1.0 / b, a],
        [a * b, 1.0, a / b, 1.0],
    ];
    let j = e.w.y.min(e.b.y).rem_euclid(4) as usize;
    let i = e.w.x.min(e.b.x).rem_euclid(4) as usize;
    pat[j][i]
}

/// Result of [`biased2x2_to_fock`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasedParameters {
    pub rho: f64,
    pub kprime: f64,
    pub curve: Curve,
    pub t: f64,
}

impl BiasedParameters {
    /// Homogeneous angles `α, γ = α+ρ, β = α+1/2, δ = γ+1/2` with `α = 0`.
    pub fn angles(&self, n: usize) -> AngleAssignment {
        AngleAssignment::homogeneous(n, 0.0, 0.5, self.rho, self.rho + 0.5)
    }

    pub fn model(&self, n: usize) -> Result<FockModel, Error> {
        FockModel::new(self.curve, self.angles(n), self.t, 0.0)
    }
}

/// `b` as a function of `k'` for fixed `a`.
pub fn biased_b_of_kprime(a: f64, kp: f64) -> f64 {
    if (a - 1.0).abs() < 1e-9 {
        return kp.sqrt();
    }
    ((1.0 / kp + a * a).sqrt() - (1.0 / kp + 1.0 / (a * a)).sqrt())
        / ((kp + a * a).sqrt() - (kp + 1.0 / (a * a)).sqrt())
}

/// Genus-1 parameters (`ρ`, `τ`, `t = 1/4`) whose Fock weights are gauge
/// equivalent to the biased 2×2 weights `(a, b)`.
pub fn biased2x2_to_fock(a: f64, b: f64) -> Result<BiasedParameters, Error> {
    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b < 1.0) {
        return Err(Error::Domain(format!(
            "need a > 0 and 0 < b < 1, got a={a}, b={b}"
        )));
    }
    let kp = bisect(1e-12, 1.0 - 1e-15, |k| biased_b_of_kprime(a, k) - b);
    let curve = nome_from_kprime(kp)?;
    let q = curve.nome().unwrap();
    // θ2(πρ)/θ1(πρ) decreases from ∞ to 0 on (0, 1/2)
    let ratio =
        |r: f64| (theta2(C64::new(PI * r, 0.0), q).re / theta1(C64::new(PI * r, 0.0), q).re).ln();
    let rho = bisect(1e-14, 0.5 - 1e-14, |r| ratio(r) - a.ln());
    Ok(BiasedParameters {
        rho,
        kprime: kp,
        curve,
        t: 0.25,
    })
}
