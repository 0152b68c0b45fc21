//! Boltzmann probabilities of dimer configurations.
//!
//! Edge marginals come from the determinantal formula
//! `P(e_1..e_k) = Π K_{w_i,b_i} · det(K⁻¹_{b_i,w_j})`. Exhaustive enumeration
//! on small diamonds is the oracle, and exact samples are drawn by sequential
//! conditioning with rank-one Schur complement updates.

use crate::inverse::{
    ext_weight, extended_kinv_entry, kinv_direct, kinv_entry, kinv_entry_residue, kinv_homogeneous,
    Method,
};
use crate::kasteleyn::FockModel;
use crate::lattice::{AztecGraph, ExtendedGraph, Region, VertexId};
use crate::{Error, C64};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest diamond handled by exhaustive enumeration.
pub const MAX_ENUMERATION_N: usize = 4;

/// Tolerance when snapping probabilities into `[0, 1]`.
pub const CLAMP_TOL: f64 = 1e-11;

/// Largest imaginary part tolerated in a probability.
pub const IMAG_TOL: f64 = 1e-9;

/// An edge given by its white and black endpoint coordinates.
pub type EdgePair = ((i32, i32), (i32, i32));

/// A perfect matching, as indices into `AztecGraph::edges`, sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matching {
    pub edges: Vec<usize>,
}

impl Matching {
    /// Whether every vertex is covered exactly once.
    pub fn is_perfect(&self, g: &AztecGraph) -> bool {
        let mut wseen = vec![false; g.whites.len()];
        let mut bseen = vec![false; g.blacks.len()];
        for &e in &self.edges {
            let Some(ed) = g.edges.get(e) else {
                return false;
            };
            let wi = g.white_index(ed.w.x, ed.w.y).unwrap();
            let bi = g.black_index(ed.b.x, ed.b.y).unwrap();
            if wseen[wi] || bseen[bi] {
                return false;
            }
            wseen[wi] = true;
            bseen[bi] = true;
        }
        wseen.iter().all(|&s| s) && bseen.iter().all(|&s| s)
    }

    pub fn pairs(&self, g: &AztecGraph) -> Vec<EdgePair> {
        self.edges
            .iter()
            .map(|&e| {
                (
                    (g.edges[e].w.x, g.edges[e].w.y),
                    (g.edges[e].b.x, g.edges[e].b.y),
                )
            })
            .collect()
    }

    pub fn contains(&self, e: usize) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    /// Boltzmann weight `Π |K_e|`.
    pub fn weight(&self, moduli: &[f64]) -> f64 {
        self.edges.iter().map(|&e| moduli[e]).product()
    }
}

/// All perfect matchings of `Az_n`, by backtracking over white vertices.
pub fn enumerate_matchings(g: &AztecGraph) -> Result<Vec<Matching>, Error> {
    if g.n > MAX_ENUMERATION_N {
        return Err(Error::Domain(format!(
            "enumeration needs n ≤ {MAX_ENUMERATION_N}, got {}",
            g.n
        )));
    }
    let adj: Vec<Vec<(usize, usize)>> = (0..g.whites.len())
        .map(|wi| {
            g.white_edges(wi)
                .map(|e| (e, g.black_index(g.edges[e].b.x, g.edges[e].b.y).unwrap()))
                .collect()
        })
        .collect();
    let mut used = vec![false; g.blacks.len()];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    fn rec(
        wi: usize,
        adj: &[Vec<(usize, usize)>],
        used: &mut [bool],
        stack: &mut Vec<usize>,
        out: &mut Vec<Matching>,
    ) {
        if wi == adj.len() {
            let mut edges = stack.clone();
            edges.sort_unstable();
            out.push(Matching { edges });
            return;
        }
        for &(e, bi) in &adj[wi] {
            if !used[bi] {
                used[bi] = true;
                stack.push(e);
                rec(wi + 1, adj, used, stack, out);
                stack.pop();
                used[bi] = false;
            }
        }
    }
    rec(0, &adj, &mut used, &mut stack, &mut out);
    Ok(out)
}

/// Exact probability of each matching, `ν(M)/Z`, by enumeration.
pub fn enumeration_probabilities(m: &FockModel) -> Result<(Vec<Matching>, Vec<f64>), Error> {
    let ms = enumerate_matchings(&m.graph)?;
    let moduli = m.edge_moduli();
    let w: Vec<f64> = ms.iter().map(|x| x.weight(&moduli)).collect();
    let z: f64 = w.iter().sum();
    Ok((ms, w.into_iter().map(|v| v / z).collect()))
}

/// Probability that all given edges are present, by enumeration.
pub fn enumeration_marginal(m: &FockModel, edges: &[EdgePair]) -> Result<f64, Error> {
    let idx = edge_indices(&m.graph, edges)?;
    let (ms, p) = enumeration_probabilities(m)?;
    Ok(ms
        .iter()
        .zip(&p)
        .filter(|(x, _)| idx.iter().all(|&e| x.contains(e)))
        .map(|(_, q)| q)
        .sum())
}

fn edge_indices(g: &AztecGraph, edges: &[EdgePair]) -> Result<Vec<usize>, Error> {
    let mut idx = Vec::with_capacity(edges.len());
    for &(w, b) in edges {
        let e = g
            .edge_index(w, b)
            .ok_or_else(|| Error::Domain(format!("{w:?}-{b:?} is not an edge of Az_{}", g.n)))?;
        if idx.contains(&e) {
            return Err(Error::Domain(format!("edge {w:?}-{b:?} listed twice")));
        }
        idx.push(e);
    }
    Ok(idx)
}

/// Turns a complex determinant value into a probability: the imaginary part
/// must vanish and tiny excursions outside `[0, 1]` are snapped back.
pub fn to_probability(z: C64) -> Result<f64, Error> {
    if z.im.abs() > IMAG_TOL * (1.0 + z.re.abs()) {
        return Err(Error::Verification(format!(
            "probability has imaginary part {:e}",
            z.im
        )));
    }
    let p = z.re;
    if p < -CLAMP_TOL || p > 1.0 + CLAMP_TOL || p.is_nan() {
        return Err(Error::Verification(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `Π K_{w_i,b_i} · det(A_{b_i,w_j})` for a square block `A` of the inverse.
pub fn determinantal(kw: &[C64], block: &DMatrix<C64>) -> C64 {
    let prod: C64 = kw.iter().product();
    if kw.is_empty() {
        return C64::new(1.0, 0.0);
    }
    prod * block.clone().determinant()
}

/// Joint probability of a set of edges from the inverse Kasteleyn matrix.
/// `Method::Direct` inverts `K` by LU; the other methods evaluate the
/// needed entries of the contour formula.
pub fn marginal(m: &FockModel, edges: &[EdgePair], method: Method) -> Result<f64, Error> {
    let g = &m.graph;
    let idx = edge_indices(g, edges)?;
    if idx.len() > g.whites.len() {
        return Err(Error::Domain("more edges than vertices".into()));
    }
    let kw: Vec<C64> = idx.iter().map(|&e| m.fock_weight(&g.edges[e])).collect();
    let block = match method {
        Method::Direct => {
            let (inv, _) = kinv_direct(&m.build_matrix().matrix)?;
            DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
                let b = g.edges[idx[i]].b;
                let w = g.edges[idx[j]].w;
                inv[(
                    g.black_index(b.x, b.y).unwrap(),
                    g.white_index(w.x, w.y).unwrap(),
                )]
            })
        }
        _ => {
            let mut a = DMatrix::<C64>::zeros(idx.len(), idx.len());
            for i in 0..idx.len() {
                for j in 0..idx.len() {
                    let b = g.edges[idx[i]].b;
                    let w = g.edges[idx[j]].w;
                    let (b, w) = ((b.x, b.y), (w.x, w.y));
                    a[(i, j)] = match method {
                        Method::Residue => kinv_entry_residue(m, b, w)?,
                        Method::Homogeneous => kinv_homogeneous(m, b, w)?,
                        _ => kinv_entry(m, b, w)?.value,
                    };
                }
            }
            a
        }
    };
    to_probability(determinantal(&kw, &block))
}

/// Single-edge marginals of every edge, from one LU inverse.
pub fn edge_marginals(m: &FockModel) -> Result<Vec<f64>, Error> {
    let g = &m.graph;
    let (inv, _) = kinv_direct(&m.build_matrix().matrix)?;
    g.edges
        .iter()
        .map(|e| {
            let bi = g.black_index(e.b.x, e.b.y).unwrap();
            let wi = g.white_index(e.w.x, e.w.y).unwrap();
            to_probability(m.fock_weight(e) * inv[(bi, wi)])
        })
        .collect()
}

/// Inverse Kasteleyn matrix of the graph with the already-sampled edges
/// removed, maintained by rank-one Schur complements.
#[derive(Clone, Debug)]
pub struct ConditionedKernel {
    /// Rows are blacks, columns whites of the original graph; rows and
    /// columns of matched vertices are stale.
    pub inverse: DMatrix<C64>,
    /// Edges conditioned to be present.
    pub present: Vec<usize>,
}

impl ConditionedKernel {
    pub fn new(inverse: DMatrix<C64>) -> Self {
        ConditionedKernel {
            inverse,
            present: Vec::new(),
        }
    }

    /// Conditions on the edge `(w1, b1)` being present:
    /// `L'_{b,w} = L_{b,w} - L_{b,w1} L_{b1,w} / L_{b1,w1}`.
    pub fn condition(&mut self, e: usize, w1: usize, b1: usize) -> Result<(), Error> {
        let piv = self.inverse[(b1, w1)];
        if piv.norm() < 1e-12 {
            return Err(Error::NoConvergence(format!(
                "pivot {:e} too small",
                piv.norm()
            )));
        }
        let col = self.inverse.column(w1).into_owned();
        let row = self.inverse.row(b1).into_owned();
        self.inverse -= col * row / piv;
        self.present.push(e);
        Ok(())
    }
}

/// Draws one matching from the Boltzmann measure. White vertices are visited
/// in lexicographic order of `(x, y)`.
pub fn sample(m: &FockModel, seed: u64) -> Result<Matching, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inv, _) = kinv_direct(&m.build_matrix().matrix)?;
    sample_with(m, &inv, &mut rng)
}

/// `count` independent samples; sample `i` uses stream `i` of the seed.
pub fn sample_many(m: &FockModel, seed: u64, count: usize) -> Result<Vec<Matching>, Error> {
    let (inv, _) = kinv_direct(&m.build_matrix().matrix)?;
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sample_with(m, &inv, &mut rng)
        })
        .collect()
}

fn sample_with(m: &FockModel, inv: &DMatrix<C64>, rng: &mut ChaCha8Rng) -> Result<Matching, Error> {
    let g = &m.graph;
    let mut order: Vec<usize> = (0..g.whites.len()).collect();
    order.sort_by_key(|&i| (g.whites[i].x, g.whites[i].y));
    let mut last = None;
    for attempt in 0..3 {
        if attempt > 0 {
            // re-pivot: visit the whites in another order
            order.rotate_left(g.whites.len() / 3 + attempt);
        }
        match sample_in_order(m, inv, &order, rng) {
            Ok(x) => return Ok(x),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap())
}

fn sample_in_order(
    m: &FockModel,
    inv: &DMatrix<C64>,
    order: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Matching, Error> {
    let g = &m.graph;
    let mut ker = ConditionedKernel::new(inv.clone());
    let mut bused = vec![false; g.blacks.len()];
    for &wi in order {
        let cands: Vec<(usize, usize, f64)> = g
            .white_edges(wi)
            .filter_map(|e| {
                let bi = g.black_index(g.edges[e].b.x, g.edges[e].b.y).unwrap();
                if bused[bi] {
                    return None;
                }
                let p = to_probability(m.fock_weight(&g.edges[e]) * ker.inverse[(bi, wi)])
                    .unwrap_or(0.0);
                Some((e, bi, p))
            })
            .collect();
        let total: f64 = cands.iter().map(|c| c.2).sum();
        if !(total > 0.5 && total < 1.5) {
            return Err(Error::NoConvergence(format!(
                "conditional probabilities sum to {total}"
            )));
        }
        let mut r = rng.random::<f64>() * total;
        let mut pick = cands.len() - 1;
        for (i, c) in cands.iter().enumerate() {
            if r < c.2 {
                pick = i;
                break;
            }
            r -= c.2;
        }
        let (e, bi, _) = cands[pick];
        ker.condition(e, wi, bi)?;
        bused[bi] = true;
    }
    let mut edges = ker.present;
    edges.sort_unstable();
    Ok(Matching { edges })
}

/// Result of comparing the window determinantal formula with the finite
/// Boltzmann measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedMeasureCheck {
    /// `Π K̃_e · det Ã` over all the edges.
    pub probability: f64,
    /// Boltzmann probability of the Aztec edges times the icy indicators of
    /// the quadrant edges.
    pub product: f64,
}

/// Both sides of the frozen-measure factorization for edges of the window,
/// given as window edge indices.
pub fn extended_measure_check(
    m: &FockModel,
    ext: &ExtendedGraph,
    edges: &[usize],
) -> Result<ExtendedMeasureCheck, Error> {
    let mut seen = Vec::new();
    for &e in edges {
        if e >= ext.edges.len() || seen.contains(&e) {
            return Err(Error::Domain(format!("bad window edge {e}")));
        }
        seen.push(e);
    }
    let kw: Vec<C64> = edges.iter().map(|&e| ext_weight(m, ext, e)).collect();
    let mut a = DMatrix::<C64>::zeros(edges.len(), edges.len());
    for (i, &ei) in edges.iter().enumerate() {
        for (j, &ej) in edges.iter().enumerate() {
            a[(i, j)] = extended_kinv_entry(m, ext, ext.edges[ei].b, ext.edges[ej].w)?;
        }
    }
    let probability = to_probability(determinantal(&kw, &a))?;
    let mut aztec = Vec::new();
    let mut icy = 1.0;
    for &e in edges {
        let ed = &ext.edges[e];
        if ext.white_region[ed.w] == Region::Aztec && ext.black_region[ed.b] == Region::Aztec {
            let (w, b): (VertexId, VertexId) = (ext.whites[ed.w], ext.blacks[ed.b]);
            aztec.push(((w.x, w.y), (b.x, b.y)));
        } else if !ed.icy {
            icy = 0.0;
        }
    }
    let boltzmann = if aztec.is_empty() {
        1.0
    } else {
        marginal(m, &aztec, Method::Direct)?
    };
    let out = ExtendedMeasureCheck {
        probability,
        product: boltzmann * icy,
    };
    if (out.probability - out.product).abs() > 1e-9 {
        return Err(Error::Verification(format!(
            "window probability {} differs from the frozen product {}",
            out.probability, out.product
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::Curve;
    use crate::kasteleyn::AngleAssignment;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::f64::consts::PI;

    fn random_angles(rng: &mut ChaCha8Rng, n: usize, period: f64) -> AngleAssignment {
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

    fn genus0(seed: u64, n: usize) -> FockModel {
        FockModel::genus0(random_angles(&mut ChaCha8Rng::seed_from_u64(seed), n, PI)).unwrap()
    }

    #[test]
    fn matching_counts() {
        for (n, want) in [(1, 2), (2, 8), (3, 64), (4, 1024)] {
            let g = AztecGraph::new(n).unwrap();
            let ms = enumerate_matchings(&g).unwrap();
            assert_eq!(ms.len(), want);
            assert!(ms.iter().all(|x| x.is_perfect(&g)));
        }
        assert!(enumerate_matchings(&AztecGraph::new(5).unwrap()).is_err());
    }

    #[test]
    fn symmetric_single_edge() {
        let m = FockModel::genus0(AngleAssignment::homogeneous(
            1,
            0.0,
            PI / 2.0,
            PI / 4.0,
            3.0 * PI / 4.0,
        ))
        .unwrap();
        for e in &m.graph.edges {
            let p = marginal(&m, &[((e.w.x, e.w.y), (e.b.x, e.b.y))], Method::Direct).unwrap();
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn marginals_match_enumeration() {
        for seed in 0..3 {
            let m = genus0(seed, 2);
            let g = &m.graph;
            for e in &g.edges {
                let pair = ((e.w.x, e.w.y), (e.b.x, e.b.y));
                let want = enumeration_marginal(&m, &[pair]).unwrap();
                for method in [Method::Direct, Method::Residue] {
                    let p = marginal(&m, &[pair], method).unwrap();
                    assert!((p - want).abs() < 1e-10, "{method:?}: {p} vs {want}");
                }
            }
        }
    }

    #[test]
    fn pair_marginals_match_enumeration() {
        let m = genus0(5, 3);
        let g = &m.graph;
        for i in (0..g.edges.len()).step_by(3) {
            for j in (i + 1..g.edges.len()).step_by(5) {
                let (a, b) = (&g.edges[i], &g.edges[j]);
                let pa = ((a.w.x, a.w.y), (a.b.x, a.b.y));
                let pb = ((b.w.x, b.w.y), (b.b.x, b.b.y));
                let want = enumeration_marginal(&m, &[pa, pb]).unwrap();
                let p = marginal(&m, &[pa, pb], Method::Direct).unwrap();
                assert!((p - want).abs() < 1e-10);
                let (p1, p2) = (
                    marginal(&m, &[pa], Method::Direct).unwrap(),
                    marginal(&m, &[pb], Method::Direct).unwrap(),
                );
                assert!(p1 + p2 - p <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn genus1_marginals_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = FockModel::new(
            Curve::genus1(0.8).unwrap(),
            random_angles(&mut rng, 2, 1.0),
            0.2,
            0.4,
        )
        .unwrap();
        for e in m.graph.edges.iter().step_by(2) {
            let pair = ((e.w.x, e.w.y), (e.b.x, e.b.y));
            let want = enumeration_marginal(&m, &[pair]).unwrap();
            assert!((marginal(&m, &[pair], Method::Quadrature).unwrap() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn frozen_corner_product() {
        // a large cross-ratio concentrates the corners; two disjoint edges
        let a = AngleAssignment::homogeneous(2, 0.0, 0.12, 0.05, 1.7);
        let m = FockModel::genus0(a).unwrap();
        let e1 = ((0, 1), (1, 0));
        let e2 = ((4, 3), (3, 4));
        let want = enumeration_marginal(&m, &[e1, e2]).unwrap();
        assert!((marginal(&m, &[e1, e2], Method::Direct).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn probability_snapping() {
        assert_eq!(to_probability(C64::new(-1e-12, 0.0)).unwrap(), 0.0);
        assert_eq!(to_probability(C64::new(1.0 + 1e-12, 0.0)).unwrap(), 1.0);
        assert!(to_probability(C64::new(-1e-6, 0.0)).is_err());
        assert!(to_probability(C64::new(0.5, 1e-3)).is_err());
    }

    #[test]
    fn gauge_invariance() {
        use crate::kasteleyn::{stanley_to_fock, StanleyWeights};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 2;
        let mut v = |k: usize| {
            (0..k)
                .map(|_| rng.random_range(0.5..2.0))
                .collect::<Vec<f64>>()
        };
        let s = StanleyWeights {
            x: v(n),
            y: v(n),
            z: v(n),
            w: v(n),
        };
        let m = FockModel::genus0(stanley_to_fock(&s, 0.3, 1.1, 2.2).unwrap()).unwrap();
        let g = &m.graph;
        let sz: f64 = {
            let ms = enumerate_matchings(g).unwrap();
            ms.iter()
                .map(|x| {
                    x.edges
                        .iter()
                        .map(|&e| s.edge_weight(&g.edges[e]))
                        .product::<f64>()
                })
                .sum()
        };
        for e in &g.edges {
            let pair = ((e.w.x, e.w.y), (e.b.x, e.b.y));
            let ms = enumerate_matchings(g).unwrap();
            let idx = g.edge_index(pair.0, pair.1).unwrap();
            let ps: f64 = ms
                .iter()
                .filter(|x| x.contains(idx))
                .map(|x| {
                    x.edges
                        .iter()
                        .map(|&e| s.edge_weight(&g.edges[e]))
                        .product::<f64>()
                })
                .sum::<f64>()
                / sz;
            assert!((marginal(&m, &[pair], Method::Direct).unwrap() - ps).abs() < 1e-9);
        }
    }

    #[test]
    fn samples_are_perfect_matchings() {
        let m = genus0(3, 4);
        for x in sample_many(&m, 17, 20).unwrap() {
            assert!(x.is_perfect(&m.graph));
        }
        assert_eq!(sample(&m, 5).unwrap(), sample(&m, 5).unwrap());
    }

    #[test]
    fn sampler_n1_frequencies() {
        let m = FockModel::genus0(AngleAssignment::homogeneous(
            1,
            0.0,
            PI / 2.0,
            PI / 4.0,
            3.0 * PI / 4.0,
        ))
        .unwrap();
        let xs = sample_many(&m, 1, 10_000).unwrap();
        let ms = enumerate_matchings(&m.graph).unwrap();
        let f = xs.iter().filter(|x| **x == ms[0]).count() as f64 / 1e4;
        assert!((f - 0.5).abs() < 0.02, "{f}");
    }

    #[test]
    fn sampler_chi_squared() {
        let m = genus0(2, 2);
        let (ms, p) = enumeration_probabilities(&m).unwrap();
        let n = 100_000;
        let xs = sample_many(&m, 2024, n).unwrap();
        let mut counts = vec![0usize; ms.len()];
        for x in &xs {
            counts[ms.iter().position(|y| y == x).unwrap()] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&p)
            .map(|(&c, &q)| (c as f64 - q * n as f64).powi(2) / (q * n as f64))
            .sum();
        let pval = 1.0 - ChiSquared::new((ms.len() - 1) as f64).unwrap().cdf(chi2);
        assert!(pval > 1e-3, "chi2 {chi2} p {pval}");
    }

    #[test]
    fn sampler_error_shrinks() {
        let m = genus0(8, 2);
        let g = &m.graph;
        let exact = edge_marginals(&m).unwrap();
        let xs = sample_many(&m, 99, 100_000).unwrap();
        let mut errs = Vec::new();
        for n in [1_000, 10_000, 100_000] {
            let mut worst = 0.0f64;
            for e in 0..g.edges.len() {
                let f = xs[..n].iter().filter(|x| x.contains(e)).count() as f64 / n as f64;
                worst = worst.max((f - exact[e]).abs() * (n as f64).sqrt());
            }
            errs.push(worst);
        }
        // scaled errors stay bounded, i.e. the raw error decays like 1/√N
        assert!(errs.iter().all(|&e| e < 4.0), "{errs:?}");
    }

    #[test]
    fn extended_measure() {
        let m = genus0(6, 2);
        let ext = ExtendedGraph::new(2, 2).unwrap();
        let icy_n = (0..ext.edges.len())
            .find(|&e| ext.edges[e].icy && ext.white_region[ext.edges[e].w] == Region::North)
            .unwrap();
        let r = extended_measure_check(&m, &ext, &[icy_n]).unwrap();
        assert!((r.probability - 1.0).abs() < 1e-9);
        let plain = (0..ext.edges.len())
            .find(|&e| {
                !ext.edges[e].icy
                    && ext.white_region[ext.edges[e].w] == Region::North
                    && ext.black_region[ext.edges[e].b] == Region::North
            })
            .unwrap();
        let r = extended_measure_check(&m, &ext, &[plain]).unwrap();
        assert!(r.probability.abs() < 1e-9);
        let az = (0..ext.edges.len())
            .find(|&e| {
                ext.white_region[ext.edges[e].w] == Region::Aztec
                    && ext.black_region[ext.edges[e].b] == Region::Aztec
            })
            .unwrap();
        let r = extended_measure_check(&m, &ext, &[az, icy_n]).unwrap();
        let ed = &ext.edges[az];
        let (w, b) = (ext.whites[ed.w], ext.blacks[ed.b]);
        let p = marginal(&m, &[((w.x, w.y), (b.x, b.y))], Method::Direct).unwrap();
        assert!((r.probability - p).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn marginals_sum_to_one(seed in 0u64..1000) {
            let m = genus0(seed, 3);
            let g = &m.graph;
            let p = edge_marginals(&m).unwrap();
            for wi in 0..g.whites.len() {
                let s: f64 = g.white_edges(wi).map(|e| p[e]).sum();
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
        }
    }
}
