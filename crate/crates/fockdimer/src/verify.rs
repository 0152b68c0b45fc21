//! The acceptance checks, shared by the integration test and `selftest`.
//!
//! Every check returns a [`Check`] instead of panicking, so a caller can
//! print one line per criterion and decide what a failure means.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::curve::Curve;
use crate::inverse::{
    ext_weight, extended_kinv_entry, kinv_homogeneous, kinv_homogeneous_sw, kinv_matrix, Method,
};
use crate::kasteleyn::{
    biased2x2_to_fock, face_weight, log_genus0_closed_form, stanley_partition, stanley_to_fock,
    AngleAssignment, FockModel, StanleyWeights,
};
use crate::kernelforms::{g_form, kernel_check};
use crate::lattice::{AztecGraph, Edge, ExtendedGraph, Region};
use crate::limitshape::{
    ellipse_angles, ellipse_residual, finite_n_probe, Action, Component, Phase, ARCTIC_SAMPLES,
    REAL_TOL,
};
use crate::measures::{
    enumerate_matchings, enumeration_marginal, enumeration_probabilities, extended_measure_check,
    marginal, sample_many,
};
use crate::{Error, C64};

/// Size of a run. `Full` is the acceptance scale; `Quick` caps every
/// lattice at `n = 3` and shrinks the sample counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn cap(self, n: usize) -> usize {
        match self {
            Scale::Full => n,
            Scale::Quick => n.min(3),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{tag}] {:>2} {:<26} {:>8.2}s  {}",
            self.id, self.name, self.seconds, self.detail
        )
    }
}

/// Outcome of a check body: `Ok(detail)` passes, `Err(detail)` fails.
type Outcome = Result<String, String>;

fn run(id: usize, name: &'static str, body: impl FnOnce() -> Outcome) -> Check {
    let t = Instant::now();
    let r = body();
    let seconds = t.elapsed().as_secs_f64();
    let (pass, detail) = match r {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Check {
        id,
        name,
        pass,
        detail,
        seconds,
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn time_limit(t: Instant, limit: f64, what: &str) -> Result<(), String> {
    let s = t.elapsed().as_secs_f64();
    ensure(s < limit, || format!("{what} took {s:.1}s, limit {limit}s"))
}

/// Random angles in the four quarters of `[0, period)`, in the order
/// α < γ < β < δ.
pub fn random_angles(rng: &mut ChaCha8Rng, n: usize, period: f64) -> AngleAssignment {
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

fn random_genus1(rng: &mut ChaCha8Rng, n: usize, tau_im: f64) -> Result<FockModel, Error> {
    let a = random_angles(rng, n, 1.0);
    let (t, d) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    FockModel::new(Curve::genus1(tau_im)?, a, t, d)
}

fn max_dev(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn matching_counts(_scale: Scale) -> Check {
    run(1, "matching counts", || {
        let t = Instant::now();
        let mut got = Vec::new();
        for n in 1..=4usize {
            let g = AztecGraph::new(n).map_err(err)?;
            let ms = enumerate_matchings(&g).map_err(err)?;
            let want = 1usize << (n * (n + 1) / 2);
            ensure(ms.len() == want, || {
                format!("n={n}: {} matchings, want {want}", ms.len())
            })?;
            ensure(ms.iter().all(|m| m.is_perfect(&g)), || {
                format!("n={n}: imperfect matching")
            })?;
            got.push(ms.len());
        }
        time_limit(t, 1.0, "enumeration")?;
        Ok(format!("{got:?}"))
    })
}

pub fn partition_equality(scale: Scale) -> Check {
    run(2, "partition equality", || {
        let t = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut w0, mut w1) = (0.0f64, 0.0f64);
        for trial in 0..20 {
            let n = scale.cap(1 + trial % 5);
            let m = FockModel::genus0(random_angles(&mut rng, n, PI)).map_err(err)?;
            let d = m.build_matrix().log_abs_det();
            w0 = w0.max((d - m.log_partition_product()).abs());
        }
        for tau_im in [1.0, 3f64.sqrt()] {
            for trial in 0..20 {
                let n = scale.cap(1 + trial % 4);
                let m = random_genus1(&mut rng, n, tau_im).map_err(err)?;
                let d = m.build_matrix().log_abs_det();
                w1 = w1.max((d - m.log_partition_product()).abs());
            }
        }
        // |log a - log b| bounds the relative error to first order
        ensure(w0 <= 1e-10, || format!("genus 0 rel {w0:.2e}"))?;
        ensure(w1 <= 1e-8, || format!("genus 1 rel {w1:.2e}"))?;
        time_limit(t, 30.0, "partition trials")?;
        Ok(format!("max rel: genus 0 {w0:.1e}, genus 1 {w1:.1e}"))
    })
}

pub fn closed_forms(scale: Scale) -> Check {
    run(3, "closed forms", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut wc = 0.0f64;
        for trial in 0..20 {
            let n = scale.cap(1 + trial % 5);
            let m = FockModel::genus0(random_angles(&mut rng, n, PI)).map_err(err)?;
            let d = m.build_matrix().log_abs_det();
            wc = wc.max((d - log_genus0_closed_form(&m).map_err(err)?).abs());
        }
        ensure(wc <= 1e-10, || format!("closed form rel {wc:.2e}"))?;
        // constant angles with β = α + π/2, δ = γ + π/2
        let mut wh = 0.0f64;
        for n in 1..=scale.cap(6) {
            let (al, ga) = (
                rng.random_range(0.0..PI / 2.0),
                rng.random_range(0.0..PI / 2.0),
            );
            let (al, ga) = (al.min(ga), al.max(ga) + 1e-3);
            let a = AngleAssignment::homogeneous(n, al, al + PI / 2.0, ga, ga + PI / 2.0);
            let m = FockModel::genus0(a).map_err(err)?;
            let want = (n * (n + 1)) as f64 * 2f64.ln();
            let z = m.build_matrix().abs_det();
            wh = wh
                .max(rel(z, want.exp()))
                .max((log_genus0_closed_form(&m).map_err(err)? - want).abs());
        }
        ensure(wh <= 1e-12, || format!("half-turn rel {wh:.2e}"))?;
        let mut ws = 0.0f64;
        for n in 1..=4 {
            let mut v = |k: usize| {
                (0..k)
                    .map(|_| rng.random_range(0.2..5.0))
                    .collect::<Vec<f64>>()
            };
            let s = StanleyWeights {
                x: v(n),
                y: v(n),
                z: v(n),
                w: v(n),
            };
            let g = AztecGraph::new(n).map_err(err)?;
            let sum: f64 = enumerate_matchings(&g)
                .map_err(err)?
                .iter()
                .map(|m| {
                    m.edges
                        .iter()
                        .map(|&e| s.edge_weight(&g.edges[e]))
                        .product::<f64>()
                })
                .sum();
            ws = ws.max(rel(stanley_partition(&s).map_err(err)?, sum));
        }
        ensure(ws <= 1e-10, || format!("Stanley rel {ws:.2e}"))?;
        Ok(format!(
            "closed form {wc:.1e}, half-turn {wh:.1e}, Stanley {ws:.1e}"
        ))
    })
}

pub fn inverse_formula(scale: Scale) -> Check {
    run(4, "inverse formula", || {
        let t = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut w0, mut w1, mut wid) = (0.0f64, 0.0f64, 0.0f64);
        let id_dev = |m: &FockModel, a: &DMatrix<C64>| {
            let k = m.build_matrix().matrix;
            max_dev(&(&k * a), &DMatrix::identity(k.nrows(), k.nrows()))
        };
        for n in 1..=scale.cap(4) {
            for _ in 0..3 {
                let m = FockModel::genus0(random_angles(&mut rng, n, PI)).map_err(err)?;
                let direct = kinv_matrix(&m, Method::Direct).map_err(err)?;
                let res = kinv_matrix(&m, Method::Residue).map_err(err)?;
                w0 = w0.max(max_dev(&direct, &res));
                wid = wid.max(id_dev(&m, &res));
            }
        }
        for n in 1..=3 {
            for tau_im in [1.0, 3f64.sqrt()] {
                let m = random_genus1(&mut rng, n, tau_im).map_err(err)?;
                let direct = kinv_matrix(&m, Method::Direct).map_err(err)?;
                let quad = kinv_matrix(&m, Method::Quadrature).map_err(err)?;
                w1 = w1.max(max_dev(&direct, &quad));
                wid = wid.max(id_dev(&m, &quad));
            }
        }
        ensure(w0 <= 1e-12, || format!("residue vs LU {w0:.2e}"))?;
        ensure(w1 <= 1e-8, || format!("quadrature vs LU {w1:.2e}"))?;
        ensure(wid <= 1e-9, || format!("K K^-1 - Id {wid:.2e}"))?;
        time_limit(t, 120.0, "inverse checks")?;
        Ok(format!(
            "residue {w0:.1e}, quadrature {w1:.1e}, identity {wid:.1e}"
        ))
    })
}

pub fn homogeneous_specialization(scale: Scale) -> Check {
    run(5, "homogeneous formulas", || {
        let mut w = 0.0f64;
        for n in 1..=scale.cap(3) {
            let m = FockModel::genus0(AngleAssignment::homogeneous(n, 0.1, 1.8, 0.9, 2.6))
                .map_err(err)?;
            let r = kinv_matrix(&m, Method::Residue).map_err(err)?;
            let h = kinv_matrix(&m, Method::Homogeneous).map_err(err)?;
            w = w.max(max_dev(&h, &r));
            let g = &m.graph;
            for i in 1..=n as i32 {
                for j in 0..n as i32 {
                    let sw = kinv_homogeneous_sw(&m, i, j).map_err(err)?;
                    let bi = g.black_index(2 * i - 1, 2 * j).ok_or("missing black")?;
                    let wi = g.white_index(2 * i, 2 * j + 1).ok_or("missing white")?;
                    w = w.max((sw - r[(bi, wi)]).norm());
                }
            }
        }
        for n in 1..=scale.cap(3) {
            let m = FockModel::new(
                Curve::genus1(1.0).map_err(err)?,
                AngleAssignment::homogeneous(n, 0.05, 0.55, 0.3, 0.8),
                0.2,
                0.1,
            )
            .map_err(err)?;
            let q = kinv_matrix(&m, Method::Quadrature).map_err(err)?;
            let g = &m.graph;
            for (i, b) in g.blacks.iter().enumerate() {
                for (j, wv) in g.whites.iter().enumerate() {
                    let h = kinv_homogeneous(&m, (b.x, b.y), (wv.x, wv.y)).map_err(err)?;
                    w = w.max((h - q[(i, j)]).norm());
                }
            }
        }
        ensure(w <= 1e-9, || format!("max deviation {w:.2e}"))?;
        Ok(format!("max deviation {w:.1e}"))
    })
}

pub fn kernel_identity(_scale: Scale) -> Check {
    run(6, "kernel identity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut worst = 0.0f64;
        let n = 3;
        for genus1 in [false, true] {
            let m = if genus1 {
                random_genus1(&mut rng, n, 1.0).map_err(err)?
            } else {
                FockModel::genus0(random_angles(&mut rng, n, PI)).map_err(err)?
            };
            let s = m.graph.size();
            let inner: Vec<_> = m
                .graph
                .whites
                .iter()
                .filter(|w| w.x > 0 && w.x < s)
                .map(|w| (w.x, w.y))
                .collect();
            let span = m.curve.period();
            for _ in 0..50 {
                let w = inner[rng.random_range(0..inner.len())];
                let x = (rng.random_range(0..=s), rng.random_range(0..=s));
                let u = C64::new(rng.random_range(0.0..span), rng.random_range(0.05..0.2));
                // the sum cancels terms of this size
                let scale: f64 = m
                    .graph
                    .white_edges(m.graph.white_index(w.0, w.1).ok_or("missing white")?)
                    .map(|e| {
                        let ed = &m.graph.edges[e];
                        let g = g_form(&m, (ed.b.x, ed.b.y), x).and_then(|g| g.evaluate(&m, u));
                        g.map(|g| (m.fock_weight(ed) * g).norm())
                    })
                    .sum::<Result<f64, Error>>()
                    .map_err(err)?;
                let r = kernel_check(&m, w, x, u).map_err(err)?;
                worst = worst.max(r / scale.max(1.0));
            }
        }
        ensure(worst <= 1e-9, || format!("worst residual {worst:.2e}"))?;
        Ok(format!("100 triples, worst residual {worst:.1e}"))
    })
}

pub fn measures(scale: Scale) -> Check {
    run(7, "measures", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut w = 0.0f64;
        for n in 1..=3 {
            let m = FockModel::genus0(random_angles(&mut rng, n, PI)).map_err(err)?;
            let g = &m.graph;
            let pair = |e: &Edge| ((e.w.x, e.w.y), (e.b.x, e.b.y));
            for e in &g.edges {
                let want = enumeration_marginal(&m, &[pair(e)]).map_err(err)?;
                for method in [Method::Direct, Method::Residue] {
                    w = w.max((marginal(&m, &[pair(e)], method).map_err(err)? - want).abs());
                }
            }
            for i in (0..g.edges.len()).step_by(3) {
                for j in (i + 1..g.edges.len()).step_by(7) {
                    let set = [pair(&g.edges[i]), pair(&g.edges[j])];
                    let want = enumeration_marginal(&m, &set).map_err(err)?;
                    w = w.max((marginal(&m, &set, Method::Residue).map_err(err)? - want).abs());
                }
            }
        }
        ensure(w <= 1e-10, || format!("marginal deviation {w:.2e}"))?;
        let m = FockModel::genus0(random_angles(&mut rng, 2, PI)).map_err(err)?;
        let (ms, p) = enumeration_probabilities(&m).map_err(err)?;
        let draws = if scale == Scale::Full {
            100_000
        } else {
            20_000
        };
        let xs = sample_many(&m, 2024, draws).map_err(err)?;
        let mut counts = vec![0usize; ms.len()];
        for x in &xs {
            counts[ms
                .iter()
                .position(|y| y == x)
                .ok_or("sample is not a matching")?] += 1;
        }
        let nf = draws as f64;
        let chi2: f64 = counts
            .iter()
            .zip(&p)
            .map(|(&c, &q)| (c as f64 - q * nf).powi(2) / (q * nf))
            .sum();
        let dist = ChiSquared::new((ms.len() - 1) as f64).map_err(|e| e.to_string())?;
        let pval = 1.0 - dist.cdf(chi2);
        ensure(pval > 1e-3, || {
            format!("chi2 {chi2:.2} over {} cells, p {pval:.2e}", ms.len())
        })?;
        Ok(format!(
            "marginals {w:.1e}, chi2 {chi2:.2} ({draws} draws, p {pval:.3})"
        ))
    })
}

pub fn gauge(scale: Scale) -> Check {
    run(8, "gauge transfer", || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut wf, mut wz) = (0.0f64, 0.0f64);
        for n in 1..=scale.cap(4) {
            let mut v = |k: usize| {
                (0..k)
                    .map(|_| rng.random_range(0.2..5.0))
                    .collect::<Vec<f64>>()
            };
            let s = StanleyWeights {
                x: v(n),
                y: v(n),
                z: v(n),
                w: v(n),
            };
            let m =
                FockModel::genus0(stanley_to_fock(&s, 0.2, 0.9, 2.1).map_err(err)?).map_err(err)?;
            let g = &m.graph;
            let kmod = m.edge_moduli();
            let idx = |e: &Edge| {
                g.edge_index((e.w.x, e.w.y), (e.b.x, e.b.y))
                    .unwrap_or(usize::MAX)
            };
            let nu = |e: &Edge| kmod[idx(e)];
            let st = |e: &Edge| s.edge_weight(e);
            for f in g.inner_faces() {
                let (x, y) = (
                    face_weight(g, &nu, f).map_err(err)?,
                    face_weight(g, &st, f).map_err(err)?,
                );
                wf = wf.max((x - y).abs() / y.max(1.0));
            }
            let (mut fock_m0, mut st_m0) = (0.0, 0.0);
            for (wv, bv) in StanleyWeights::reference_matching(n) {
                let e = g.edge(wv, bv).map_err(err)?;
                fock_m0 += nu(e).ln();
                st_m0 += st(e).ln();
            }
            let lhs = s.partition().map_err(err)?.ln();
            wz = wz.max((lhs - (st_m0 - fock_m0 + m.build_matrix().log_abs_det())).abs());
        }
        ensure(wf <= 1e-10, || format!("face weights {wf:.2e}"))?;
        ensure(wz <= 1e-9, || format!("partition transfer {wz:.2e}"))?;
        let mut wb = 0.0f64;
        for b in [0.3, 0.5, 0.8] {
            let p = biased2x2_to_fock(1.0, b).map_err(err)?;
            ensure((p.rho - 0.25).abs() <= 1e-10, || {
                format!("a=1, b={b}: rho {}", p.rho)
            })?;
            wb = wb.max((p.kprime.sqrt() - b).abs());
        }
        ensure(wb <= 1e-10, || format!("b - sqrt(k') {wb:.2e}"))?;
        let p = biased2x2_to_fock(1.7, 0.999).map_err(err)?;
        let dev = (1.7 - 1.0 / (PI * p.rho).tan()).abs();
        ensure(dev < 1e-2, || {
            format!("a - cot(pi rho) = {dev:.2e} at b = 0.999")
        })?;
        Ok(format!(
            "faces {wf:.1e}, transfer {wz:.1e}, biased b {wb:.1e}, cot limit {dev:.1e}"
        ))
    })
}

/// Extension checks for one model: zero blocks, icy entries and the
/// frozen-measure factorization on a window of the given depth.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ExtensionReport {
    pub depth: usize,
    /// Largest `|Ã_{b,w}|` over the zero blocks.
    pub zero_block: f64,
    pub zero_entries: usize,
    /// Largest relative deviation of `Ã_{b,w}` from `1/K̃_{w,b}` on icy edges.
    pub icy: f64,
    pub icy_entries: usize,
    /// Largest gap between both sides of the measure factorization.
    pub measure: f64,
    pub measure_sets: usize,
}

pub fn extension_report(m: &FockModel, depth: usize) -> Result<ExtensionReport, Error> {
    let ext = ExtendedGraph::new(m.n(), depth)?;
    let mut r = ExtensionReport {
        depth,
        ..Default::default()
    };
    for (b, rb) in ext.black_region.iter().enumerate() {
        for (w, rw) in ext.white_region.iter().enumerate() {
            use Region::*;
            if matches!((rb, rw), (Aztec, North | South) | (West | East, Aztec)) {
                r.zero_block = r.zero_block.max(extended_kinv_entry(m, &ext, b, w)?.norm());
                r.zero_entries += 1;
            }
        }
    }
    for (e, ed) in ext.edges.iter().enumerate() {
        if ed.icy {
            let want = C64::new(1.0, 0.0) / ext_weight(m, &ext, e);
            let got = extended_kinv_entry(m, &ext, ed.b, ed.w)?;
            r.icy = r.icy.max((got - want).norm() / want.norm());
            r.icy_entries += 1;
        }
    }
    let region = |e: usize| {
        (
            ext.white_region[ext.edges[e].w],
            ext.black_region[ext.edges[e].b],
        )
    };
    let aztec: Vec<usize> = (0..ext.edges.len())
        .filter(|&e| region(e) == (Region::Aztec, Region::Aztec))
        .collect();
    // north/south blacks against west/east whites are not determined, so
    // each mixed set stays on one axis
    for axis in [[Region::North, Region::South], [Region::West, Region::East]] {
        let on_axis = |e: usize| axis.contains(&region(e).0) && region(e).0 == region(e).1;
        let icy: Vec<usize> = (0..ext.edges.len())
            .filter(|&e| ext.edges[e].icy && on_axis(e))
            .collect();
        let plain: Vec<usize> = (0..ext.edges.len())
            .filter(|&e| !ext.edges[e].icy && on_axis(e))
            .collect();
        if icy.is_empty() || plain.is_empty() {
            continue;
        }
        for k in 0..6 {
            let a = aztec[(5 * k) % aztec.len()];
            let i1 = icy[(3 * k) % icy.len()];
            let i2 = icy[(3 * k + icy.len() / 2) % icy.len()];
            let p = plain[k % plain.len()];
            for set in [vec![a, i1], vec![a, i1, i2], vec![a, p], vec![i1, i2, p]] {
                let mut s = set.clone();
                s.sort();
                s.dedup();
                if s.len() != set.len() {
                    continue;
                }
                let c = extended_measure_check(m, &ext, &set)?;
                r.measure = r.measure.max((c.probability - c.product).abs());
                r.measure_sets += 1;
            }
        }
    }
    Ok(r)
}

pub fn infinite_extension(_scale: Scale) -> Check {
    run(9, "infinite extension", || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut all = ExtensionReport::default();
        for genus1 in [false, true] {
            let m = if genus1 {
                random_genus1(&mut rng, 2, 1.0).map_err(err)?
            } else {
                FockModel::genus0(random_angles(&mut rng, 2, PI)).map_err(err)?
            };
            for depth in 1..=2 {
                let r = extension_report(&m, depth).map_err(err)?;
                all.zero_block = all.zero_block.max(r.zero_block);
                all.icy = all.icy.max(r.icy);
                all.measure = all.measure.max(r.measure);
                all.zero_entries += r.zero_entries;
                all.icy_entries += r.icy_entries;
                all.measure_sets += r.measure_sets;
            }
        }
        let a = all;
        ensure(a.zero_block <= 1e-9, || {
            format!("zero blocks {:.2e}", a.zero_block)
        })?;
        ensure(a.icy <= 1e-9, || format!("icy entries rel {:.2e}", a.icy))?;
        ensure(a.measure <= 1e-9, || {
            format!("measure factorization {:.2e}", a.measure)
        })?;
        Ok(format!(
            "zero blocks {:.1e} ({}), icy {:.1e} ({}), measure {:.1e} ({} sets)",
            a.zero_block, a.zero_entries, a.icy, a.icy_entries, a.measure, a.measure_sets
        ))
    })
}

pub fn arctic_ellipse(_scale: Scale) -> Check {
    run(10, "arctic ellipse", || {
        let mut worst = 0.0f64;
        let mut pts = 0;
        for r in [1.2, 2.0, 4.0] {
            let a = ellipse_angles(r).map_err(err)?;
            let act = Action::homogeneous(Curve::Genus0, a[0], a[1], a[2], a[3]).map_err(err)?;
            let c = act
                .arctic_curve(Component::A0, ARCTIC_SAMPLES)
                .map_err(err)?;
            ensure(c.samples.len() + c.skipped == ARCTIC_SAMPLES, || {
                format!("r={r}: {} samples", c.samples.len())
            })?;
            ensure(c.samples.len() > ARCTIC_SAMPLES / 2, || {
                format!("r={r}: only {} samples", c.samples.len())
            })?;
            for s in &c.samples {
                // the displayed equation holds in the x-mirrored frame
                worst = worst.max(ellipse_residual(r, 1.0 - s.x, s.y).abs());
                if r == 2.0 {
                    worst = worst.max(((s.x - 0.5).powi(2) + (s.y - 0.5).powi(2) - 0.25).abs());
                }
            }
            pts += c.samples.len();
        }
        ensure(worst <= 1e-10, || format!("residual {worst:.2e}"))?;
        Ok(format!("{pts} points, residual {worst:.1e}"))
    })
}

pub fn phase_coherence(scale: Scale) -> Check {
    run(11, "phase coherence", || {
        let t = Instant::now();
        let n = if scale == Scale::Full { 48 } else { 16 };
        let act = Action::homogeneous(Curve::Genus0, 0.0, PI / 2.0, PI / 4.0, 3.0 * PI / 4.0)
            .map_err(err)?;
        let m = FockModel::genus0(AngleAssignment::homogeneous(
            n,
            0.0,
            PI / 2.0,
            PI / 4.0,
            3.0 * PI / 4.0,
        ))
        .map_err(err)?;
        let rows = finite_n_probe(&m, &act, &[(0.08, 0.08), (0.5, 0.5)]).map_err(err)?;
        let (corner, centre) = (rows[0].marginal, rows[1].marginal);
        ensure(matches!(rows[0].phase, Phase::Frozen { .. }), || {
            format!("corner phase {:?}", rows[0].phase)
        })?;
        ensure(rows[1].phase == Phase::Liquid, || {
            format!("centre phase {:?}", rows[1].phase)
        })?;
        // the corner edge is frozen to 0 or 1 depending on its orientation
        ensure(corner.min(1.0 - corner) < 0.01, || {
            format!("corner marginal {corner}")
        })?;
        ensure(centre > 0.1 && centre < 0.9, || {
            format!("centre marginal {centre}")
        })?;
        let p = biased2x2_action(3f64.sqrt())?;
        let phase = p.classify_phase(0.5, 0.5).map_err(err)?.phase;
        ensure(matches!(phase, Phase::Gas { .. }), || {
            format!("biased centre {phase:?}")
        })?;
        let outer = p.arctic_curve(Component::A0, 512).map_err(err)?;
        let inner = p.arctic_curve(Component::A1, 512).map_err(err)?;
        ensure(
            !outer.samples.is_empty() && !inner.samples.is_empty(),
            || "an arctic component is empty".into(),
        )?;
        time_limit(t, 300.0, "phase checks")?;
        Ok(format!(
            "n={n}: corner {corner:.2e}, centre {centre:.4}; biased centre gas, outer {} / inner {} points",
            outer.samples.len(),
            inner.samples.len()
        ))
    })
}

/// Limit-shape action of the biased 2×2 model with `ρ = 1/6`.
fn biased2x2_action(tau_im: f64) -> Result<Action, String> {
    let rho = 1.0 / 6.0;
    Action::homogeneous(
        Curve::genus1(tau_im).map_err(err)?,
        0.0,
        0.5,
        rho,
        rho + 0.5,
    )
    .map_err(err)
}

pub fn root_certificates(scale: Scale) -> Check {
    run(12, "root certificates", || {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let alpha = [0.744904, 0.448131, 0.599648];
        let beta = [2.35367, 1.58096, 2.20249];
        let gamma = [1.21721, 0.983251, 1.18328];
        let delta = [3.05117, 2.38214, 2.74699];
        let (npts0, npts1) = if scale == Scale::Full {
            (100, 50)
        } else {
            (20, 10)
        };
        for (k, l) in [(2usize, 2usize), (3, 2)] {
            let act = Action::new(
                Curve::Genus0,
                alpha[..l].to_vec(),
                beta[..l].to_vec(),
                gamma[..k].to_vec(),
                delta[..k].to_vec(),
            )
            .map_err(err)?;
            let deg = 2 * k + 2 * l - 2;
            for _ in 0..npts0 {
                let (x, y) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
                let p = act.critical_polynomial(x, y).map_err(err)?;
                let cp = act.critical_points(x, y).map_err(err)?;
                ensure(
                    p.len() == deg + 1 && cp.certified == deg && cp.points.len() == deg,
                    || {
                        format!(
                            "({k},{l}) at ({x:.3},{y:.3}): degree {}, {} roots",
                            p.len() - 1,
                            cp.points.len()
                        )
                    },
                )?;
                let real = cp.points.iter().filter(|z| z.im.abs() < REAL_TOL).count();
                ensure(real + 4 >= 2 * k + 2 * l, || {
                    format!("({k},{l}) at ({x:.3},{y:.3}): {real} real roots")
                })?;
            }
        }
        let act = biased2x2_action(3f64.sqrt())?;
        for _ in 0..npts1 {
            let (x, y) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
            let cp = act.critical_points(x, y).map_err(err)?;
            ensure(cp.certified == 4 && cp.points.len() == 4, || {
                format!(
                    "genus 1 at ({x:.3},{y:.3}): certificate {}, found {}",
                    cp.certified,
                    cp.points.len()
                )
            })?;
        }
        Ok(format!(
            "genus 0 {} points, genus 1 {npts1} points, certificate 4",
            2 * npts0
        ))
    })
}

/// All twelve checks in order.
pub fn run_all(scale: Scale) -> Vec<Check> {
    let checks: [fn(Scale) -> Check; 12] = [
        matching_counts,
        partition_equality,
        closed_forms,
        inverse_formula,
        homogeneous_specialization,
        kernel_identity,
        measures,
        gauge,
        infinite_extension,
        arctic_ellipse,
        phase_coherence,
        root_certificates,
    ];
    checks.iter().map(|f| f(scale)).collect()
}
