//! Meromorphic forms `g_{x,y}(u)` in the kernel of the Kasteleyn matrix.
//!
//! A form is stored as a formal product of prime forms `E(angle, u)` and
//! theta factors, so that repeated angles accumulate into pole orders and
//! theta factors telescope along paths.

use crate::curve::{Curve, JacobianPoint};
use crate::kasteleyn::FockModel;
use crate::lattice::{abel_divisor_at, ExtendedGraph, FormalDivisor, Track};
use crate::{Error, C64};
use std::collections::BTreeMap;

/// Which of the two theta factors of the kernel forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ThetaShift {
    /// `θ(t + u + D)`, attached to white vertices.
    Plus,
    /// `θ(-t + u - D)`, attached to black vertices.
    Minus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThetaFactor {
    pub exponent: i32,
    pub shift: ThetaShift,
    pub divisor: FormalDivisor,
}

/// `Π E(angle(T), u)^{e_T} · Π θ(±t + u ± D)^{e}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeromorphicProduct {
    pub prime_exponents: BTreeMap<Track, i32>,
    pub theta_factors: Vec<ThetaFactor>,
}

impl MeromorphicProduct {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn is_one(&self) -> bool {
        self.prime_exponents.is_empty() && self.theta_factors.is_empty()
    }

    pub fn mul_prime(&mut self, t: Track, e: i32) {
        let x = self.prime_exponents.entry(t).or_insert(0);
        *x += e;
        if *x == 0 {
            self.prime_exponents.remove(&t);
        }
    }

    pub fn mul_theta(&mut self, shift: ThetaShift, divisor: &FormalDivisor, e: i32) {
        if let Some(i) = self
            .theta_factors
            .iter()
            .position(|f| f.shift == shift && &f.divisor == divisor)
        {
            self.theta_factors[i].exponent += e;
            if self.theta_factors[i].exponent == 0 {
                self.theta_factors.remove(i);
            }
        } else if e != 0 {
            self.theta_factors.push(ThetaFactor {
                exponent: e,
                shift,
                divisor: divisor.clone(),
            });
        }
    }

    pub fn mul(&self, other: &MeromorphicProduct) -> MeromorphicProduct {
        let mut r = self.clone();
        for (t, e) in &other.prime_exponents {
            r.mul_prime(*t, *e);
        }
        for f in &other.theta_factors {
            r.mul_theta(f.shift, &f.divisor, f.exponent);
        }
        r
    }

    pub fn inverse(&self) -> MeromorphicProduct {
        let mut r = self.clone();
        r.prime_exponents.values_mut().for_each(|e| *e = -*e);
        r.theta_factors
            .iter_mut()
            .for_each(|f| f.exponent = -f.exponent);
        r
    }

    /// Value at `u` (angle coordinate).
    pub fn evaluate(&self, m: &FockModel, u: C64) -> Result<C64, Error> {
        let mut v = C64::new(1.0, 0.0);
        for (t, e) in &self.prime_exponents {
            let a = m.angle(*t);
            let x = m.curve.prime_form(C64::new(a, 0.0), u);
            if x.norm() == 0.0 && *e < 0 {
                return Err(Error::Domain(format!("pole of the form at u = {u}")));
            }
            v *= x.powi(*e);
        }
        if m.curve.genus() > 0 {
            for f in &self.theta_factors {
                v *= m.curve.theta(theta_argument(m, f, u)).powi(f.exponent);
            }
        }
        Ok(v)
    }

    /// Poles and zeros by angle value: `(angle, order)` with positive order
    /// for zeros, merged over tracks with equal angles. Theta factors are
    /// not included.
    pub fn pole_zero_profile(&self, m: &FockModel) -> Vec<(f64, i32)> {
        let mut out: Vec<(f64, i32)> = Vec::new();
        for (t, e) in &self.prime_exponents {
            let a = m.angle(*t);
            match out.iter_mut().find(|(x, _)| *x == a) {
                Some(p) => p.1 += e,
                None => out.push((a, *e)),
            }
        }
        out.retain(|p| p.1 != 0);
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

pub(crate) fn theta_argument(m: &FockModel, f: &ThetaFactor, u: C64) -> C64 {
    let d = f.divisor.evaluate(|t| m.angle(t), m.d);
    match f.shift {
        ThetaShift::Plus => u + (m.t + d),
        ThetaShift::Minus => u - (m.t + d),
    }
}

fn is_face(p: (i32, i32)) -> bool {
    (p.0 - p.1).rem_euclid(2) == 0
}

/// Factor `g_{p,q}` of one step of the diamond graph of the square lattice.
pub fn diamond_step(p: (i32, i32), q: (i32, i32)) -> Result<MeromorphicProduct, Error> {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    if dx.abs() + dy.abs() != 1 {
        return Err(Error::Domain(format!(
            "{p:?} and {q:?} are not adjacent in the diamond graph"
        )));
    }
    let track = if dx == 0 {
        Track::row(p.1.min(q.1))
    } else {
        Track::column(p.0.min(q.0))
    };
    let (face_first, v) = if is_face(p) { (true, q) } else { (false, p) };
    let white = v.0.rem_euclid(2) == 0;
    // g_{f,w} = θ(t+u+D(w)) / E(T,u) and g_{b,f} = θ(-t+u-D(b)) / E(T,u)
    let mut g = MeromorphicProduct::one();
    g.mul_prime(track, -1);
    let shift = if white {
        ThetaShift::Plus
    } else {
        ThetaShift::Minus
    };
    g.mul_theta(shift, &abel_divisor_at(v.0, v.1), 1);
    let forward = if white { face_first } else { !face_first };
    Ok(if forward { g } else { g.inverse() })
}

/// Product of step factors along a path of the diamond graph.
pub fn path_product(path: &[(i32, i32)]) -> Result<MeromorphicProduct, Error> {
    let mut g = MeromorphicProduct::one();
    for w in path.windows(2) {
        g = g.mul(&diamond_step(w[0], w[1])?);
    }
    Ok(g)
}

/// Staircase path: horizontal moves first, then vertical ones.
pub fn staircase(x: (i32, i32), y: (i32, i32)) -> Vec<(i32, i32)> {
    let mut p = vec![x];
    let mut c = x;
    while c.0 != y.0 {
        c.0 += (y.0 - c.0).signum();
        p.push(c);
    }
    while c.1 != y.1 {
        c.1 += (y.1 - c.1).signum();
        p.push(c);
    }
    p
}

/// `g_{x,y}` for points of the diamond graph of `Az_n`.
pub fn g_form(m: &FockModel, x: (i32, i32), y: (i32, i32)) -> Result<MeromorphicProduct, Error> {
    let s = m.graph.size();
    for p in [x, y] {
        if p.0 < 0 || p.1 < 0 || p.0 > s || p.1 > s {
            return Err(Error::Domain(format!(
                "{p:?} is outside the diamond graph of Az_{}",
                m.n()
            )));
        }
    }
    path_product(&staircase(x, y))
}

/// `|Σ_{b~w} K_{w,b} g_{b,x}(u)|` for a white vertex with four neighbours.
pub fn kernel_check(m: &FockModel, w: (i32, i32), x: (i32, i32), u: C64) -> Result<f64, Error> {
    let wi = m
        .graph
        .white_index(w.0, w.1)
        .ok_or_else(|| Error::Domain(format!("{w:?} is not a white vertex")))?;
    let edges: Vec<_> = m.graph.white_edges(wi).collect();
    if edges.len() != 4 {
        return Err(Error::Domain(format!("{w:?} is on the boundary")));
    }
    let mut s = C64::new(0.0, 0.0);
    for ei in edges {
        let e = &m.graph.edges[ei];
        s += m.fock_weight(e) * g_form(m, (e.b.x, e.b.y), x)?.evaluate(m, u)?;
    }
    Ok(s.norm())
}

/// `p = Σ (δ_j - β_j) - t - D(0)`.
pub fn p_point(m: &FockModel) -> JacobianPoint {
    match m.curve {
        Curve::Genus0 => JacobianPoint::Unit,
        _ => {
            let a = &m.angles;
            let s: f64 = a.delta.iter().zip(&a.beta).map(|(d, b)| d - b).sum();
            JacobianPoint::Real((s - m.t - m.d).rem_euclid(1.0))
        }
    }
}

/// Forms on the extended window, built from primal edges: for `b ~ w`,
/// `g_{b,w}(u) = θ(-t+u-D(b)) θ(t+u+D(w)) / (E(α,u) E(β,u))`.
pub fn ext_edge_form(ext: &ExtendedGraph, edge: usize) -> MeromorphicProduct {
    let e = &ext.edges[edge];
    let mut g = MeromorphicProduct::one();
    g.mul_prime(e.alpha, -1);
    g.mul_prime(e.beta, -1);
    g.mul_theta(ThetaShift::Minus, &ext.black_abel[e.b], 1);
    g.mul_theta(ThetaShift::Plus, &ext.white_abel[e.w], 1);
    g
}

/// A vertex of the extended window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WindowVertex {
    White(usize),
    Black(usize),
}

/// Shortest path in the extended window (breadth first, deterministic).
pub fn ext_path(
    ext: &ExtendedGraph,
    from: WindowVertex,
    to: WindowVertex,
) -> Option<Vec<WindowVertex>> {
    use std::collections::VecDeque;
    let nw = ext.whites.len();
    let key = |v: WindowVertex| match v {
        WindowVertex::White(i) => i,
        WindowVertex::Black(i) => nw + i,
    };
    let mut prev: Vec<Option<WindowVertex>> = vec![None; nw + ext.blacks.len()];
    let mut seen = vec![false; nw + ext.blacks.len()];
    let mut q = VecDeque::from([from]);
    seen[key(from)] = true;
    while let Some(v) = q.pop_front() {
        if v == to {
            let mut path = vec![to];
            let mut c = to;
            while let Some(p) = prev[key(c)] {
                path.push(p);
                c = p;
            }
            path.reverse();
            return Some(path);
        }
        let nbrs: Vec<WindowVertex> = match v {
            WindowVertex::White(i) => ext.white_adj[i]
                .iter()
                .map(|&e| WindowVertex::Black(ext.edges[e].b))
                .collect(),
            WindowVertex::Black(i) => ext.black_adj[i]
                .iter()
                .map(|&e| WindowVertex::White(ext.edges[e].w))
                .collect(),
        };
        for u in nbrs {
            if !seen[key(u)] {
                seen[key(u)] = true;
                prev[key(u)] = Some(v);
                q.push_back(u);
            }
        }
    }
    None
}

/// Product of edge forms along a primal path of the window.
pub fn ext_path_product(
    ext: &ExtendedGraph,
    path: &[WindowVertex],
) -> Result<MeromorphicProduct, Error> {
    let mut g = MeromorphicProduct::one();
    for s in path.windows(2) {
        let (w, b, forward) = match (s[0], s[1]) {
            (WindowVertex::Black(b), WindowVertex::White(w)) => (w, b, true),
            (WindowVertex::White(w), WindowVertex::Black(b)) => (w, b, false),
            _ => return Err(Error::Domain("path must alternate colours".into())),
        };
        let e = ext
            .edge_between(w, b)
            .ok_or_else(|| Error::Domain("consecutive path vertices are not adjacent".into()))?;
        let f = ext_edge_form(ext, e);
        g = g.mul(&if forward { f } else { f.inverse() });
    }
    Ok(g)
}

/// `g_{x,y}` on the extended window between primal vertices.
pub fn ext_g_form(
    ext: &ExtendedGraph,
    x: WindowVertex,
    y: WindowVertex,
) -> Result<MeromorphicProduct, Error> {
    let p =
        ext_path(ext, x, y).ok_or_else(|| Error::Domain("vertices are not connected".into()))?;
    ext_path_product(ext, &p)
}

/// `g_{v,0}` on the window, where `0` is the base face `(0,0)`; the path
/// goes through the black vertex `(1,0)`.
pub fn ext_g_to_base(ext: &ExtendedGraph, v: WindowVertex) -> Result<MeromorphicProduct, Error> {
    let b0 = ext.black_index(1, 0).unwrap();
    let last = diamond_step((1, 0), (0, 0))?;
    Ok(ext_g_form(ext, v, WindowVertex::Black(b0))?.mul(&last))
}
