//! The Aztec diamond `Az_n`, its train-tracks and discrete Abel map, and a
//! finite window of the infinite minimal graph obtained by gluing four
//! hexagonal quadrants to its sides.
//!
//! Coordinates: white vertices sit at `(even, odd)` points and black vertices
//! at `(odd, even)` points of `[0, 2n]^2`; faces are the points whose
//! coordinates have equal parity. Every edge joins `w` to `b = w + (±1, ±1)`
//! and fills one unit square, which is crossed by one row train-track and one
//! column train-track:
//!
//! ```text
//! row strip    y in [j, j+1]:  j = 2k-2 -> α_k (left to right),  j = 2k-1 -> β_k (right to left)
//! column strip x in [i, i+1]:  i = 2k-2 -> γ_k (bottom to top),  i = 2k-1 -> δ_k (top to bottom)
//! ```

use crate::Error;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    White,
    Black,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub color: Color,
    pub x: i32,
    pub y: i32,
}

impl VertexId {
    pub fn white(x: i32, y: i32) -> Self {
        VertexId {
            color: Color::White,
            x,
            y,
        }
    }
    pub fn black(x: i32, y: i32) -> Self {
        VertexId {
            color: Color::Black,
            x,
            y,
        }
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.color {
            Color::White => 'w',
            Color::Black => 'b',
        };
        write!(f, "{c}({},{})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaceClass {
    Odd,
    InteriorEven,
    Boundary,
    Corner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaceId {
    pub x: i32,
    pub y: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
    C,
    D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    LeftToRight,
    RightToLeft,
    BottomToTop,
    TopToBottom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Track {
    pub family: Family,
    pub index: i32,
}

impl Track {
    pub fn new(family: Family, index: i32) -> Self {
        Track { family, index }
    }

    pub fn orientation(&self) -> Orientation {
        match self.family {
            Family::A => Orientation::LeftToRight,
            Family::B => Orientation::RightToLeft,
            Family::C => Orientation::BottomToTop,
            Family::D => Orientation::TopToBottom,
        }
    }

    pub fn is_horizontal(&self) -> bool {
        matches!(self.family, Family::A | Family::B)
    }

    /// Track running along the horizontal strip `y in [j, j+1]`.
    pub fn row(j: i32) -> Track {
        if j.rem_euclid(2) == 0 {
            Track::new(Family::A, j.div_euclid(2) + 1)
        } else {
            Track::new(Family::B, (j + 1).div_euclid(2))
        }
    }

    /// Track running along the vertical strip `x in [i, i+1]`.
    pub fn column(i: i32) -> Track {
        if i.rem_euclid(2) == 0 {
            Track::new(Family::C, i.div_euclid(2) + 1)
        } else {
            Track::new(Family::D, (i + 1).div_euclid(2))
        }
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.family {
            Family::A => "alpha",
            Family::B => "beta",
            Family::C => "gamma",
            Family::D => "delta",
        };
        write!(f, "{s}_{}", self.index)
    }
}

/// Integer combination of train-track angles plus a multiple of the value `d`
/// of the Abel map at the base face `(0, 0)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormalDivisor {
    pub coefficients: BTreeMap<Track, i32>,
    pub base: i32,
}

impl FormalDivisor {
    pub fn base_point() -> Self {
        FormalDivisor {
            coefficients: BTreeMap::new(),
            base: 1,
        }
    }

    pub fn add(&mut self, t: Track, c: i32) {
        let e = self.coefficients.entry(t).or_insert(0);
        *e += c;
        if *e == 0 {
            self.coefficients.remove(&t);
        }
    }

    pub fn with(mut self, t: Track, c: i32) -> Self {
        self.add(t, c);
        self
    }

    /// Sum of the track coefficients.
    pub fn degree(&self) -> i32 {
        self.coefficients.values().sum()
    }

    pub fn plus(&self, other: &FormalDivisor) -> FormalDivisor {
        let mut r = self.clone();
        for (t, c) in &other.coefficients {
            r.add(*t, *c);
        }
        r.base += other.base;
        r
    }

    pub fn minus(&self, other: &FormalDivisor) -> FormalDivisor {
        let mut r = self.clone();
        for (t, c) in &other.coefficients {
            r.add(*t, -*c);
        }
        r.base -= other.base;
        r
    }

    pub fn evaluate(&self, angle: impl Fn(Track) -> f64, d_value: f64) -> f64 {
        self.coefficients
            .iter()
            .map(|(t, c)| *c as f64 * angle(*t))
            .sum::<f64>()
            + self.base as f64 * d_value
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty() && self.base == 0
    }
}

/// An edge `w b` together with its rhombus in the diamond graph.
///
/// `f` is the face on the left of the segment from `w` to `b` and `fp` the
/// face on the right. `alpha` crosses the sides `b f` and `w fp`, `beta`
/// crosses `w f` and `b fp`; the Kasteleyn entry is `E(alpha, beta)` divided
/// by the theta factors of `f` and `fp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub w: VertexId,
    pub b: VertexId,
    pub alpha: Track,
    pub beta: Track,
    pub f: FaceId,
    pub fp: FaceId,
}

impl Edge {
    /// The (horizontal-family, vertical-family) tracks crossing the edge.
    pub fn tracks(&self) -> (Track, Track) {
        if self.alpha.is_horizontal() {
            (self.alpha, self.beta)
        } else {
            (self.beta, self.alpha)
        }
    }
}

#[derive(Clone, Debug)]
pub struct AztecGraph {
    pub n: usize,
    /// White vertices ordered by `(y, x)`.
    pub whites: Vec<VertexId>,
    /// Black vertices ordered by `(y, x)`.
    pub blacks: Vec<VertexId>,
    /// Edges ordered by white index, then by black index.
    pub edges: Vec<Edge>,
    pub faces: Vec<(FaceId, FaceClass)>,
    white_index: HashMap<(i32, i32), usize>,
    black_index: HashMap<(i32, i32), usize>,
    edge_index: HashMap<((i32, i32), (i32, i32)), usize>,
}

/// Edge of `Az_n` (or of its square-lattice continuation) between `w` and
/// `b = w + (sx, sy)`.
pub fn square_edge(w: (i32, i32), b: (i32, i32)) -> Edge {
    let (sx, sy) = (b.0 - w.0, b.1 - w.1);
    debug_assert!(sx.abs() == 1 && sy.abs() == 1);
    let row = Track::row(w.1.min(b.1));
    let col = Track::column(w.0.min(b.0));
    let (alpha, beta) = if sx * sy > 0 { (col, row) } else { (row, col) };
    let f = FaceId {
        x: w.0 + (sx - sy) / 2,
        y: w.1 + (sx + sy) / 2,
    };
    let fp = FaceId {
        x: w.0 + (sx + sy) / 2,
        y: w.1 + (sy - sx) / 2,
    };
    Edge {
        w: VertexId::white(w.0, w.1),
        b: VertexId::black(b.0, b.1),
        alpha,
        beta,
        f,
        fp,
    }
}

impl AztecGraph {
    pub fn new(n: usize) -> Result<AztecGraph, Error> {
        if n == 0 {
            return Err(Error::Config(
                "Aztec diamond size must be at least 1".into(),
            ));
        }
        let m = 2 * n as i32;
        let mut whites = Vec::new();
        let mut blacks = Vec::new();
        for y in 0..=m {
            for x in 0..=m {
                if x % 2 == 0 && y % 2 == 1 {
                    whites.push(VertexId::white(x, y));
                } else if x % 2 == 1 && y % 2 == 0 {
                    blacks.push(VertexId::black(x, y));
                }
            }
        }
        let white_index: HashMap<_, _> = whites
            .iter()
            .enumerate()
            .map(|(i, v)| ((v.x, v.y), i))
            .collect();
        let black_index: HashMap<_, _> = blacks
            .iter()
            .enumerate()
            .map(|(i, v)| ((v.x, v.y), i))
            .collect();
        let mut edges = Vec::new();
        for w in &whites {
            let mut nb: Vec<(usize, (i32, i32))> = Vec::new();
            for (sx, sy) in [(1, 1), (-1, 1), (-1, -1), (1, -1)] {
                let p = (w.x + sx, w.y + sy);
                if let Some(&j) = black_index.get(&p) {
                    nb.push((j, p));
                }
            }
            nb.sort();
            for (_, p) in nb {
                edges.push(square_edge((w.x, w.y), p));
            }
        }
        let edge_index = edges
            .iter()
            .enumerate()
            .map(|(i, e)| (((e.w.x, e.w.y), (e.b.x, e.b.y)), i))
            .collect();
        let mut faces = Vec::new();
        for y in 0..=m {
            for x in 0..=m {
                if (x + y) % 2 != 0 {
                    continue;
                }
                let class = if x % 2 == 1 {
                    FaceClass::Odd
                } else if (x == 0 || x == m) && (y == 0 || y == m) {
                    FaceClass::Corner
                } else if x == 0 || x == m || y == 0 || y == m {
                    FaceClass::Boundary
                } else {
                    FaceClass::InteriorEven
                };
                faces.push((FaceId { x, y }, class));
            }
        }
        Ok(AztecGraph {
            n,
            whites,
            blacks,
            edges,
            faces,
            white_index,
            black_index,
            edge_index,
        })
    }

    pub fn size(&self) -> i32 {
        2 * self.n as i32
    }

    pub fn white_index(&self, x: i32, y: i32) -> Option<usize> {
        self.white_index.get(&(x, y)).copied()
    }

    pub fn black_index(&self, x: i32, y: i32) -> Option<usize> {
        self.black_index.get(&(x, y)).copied()
    }

    pub fn edge_index(&self, w: (i32, i32), b: (i32, i32)) -> Option<usize> {
        self.edge_index.get(&(w, b)).copied()
    }

    pub fn edge(&self, w: (i32, i32), b: (i32, i32)) -> Result<&Edge, Error> {
        self.edge_index(w, b)
            .map(|i| &self.edges[i])
            .ok_or_else(|| Error::Domain(format!("no edge between w{w:?} and b{b:?}")))
    }

    /// The (horizontal-family, vertical-family) tracks crossing an edge.
    pub fn edge_tracks(&self, w: (i32, i32), b: (i32, i32)) -> Result<(Track, Track), Error> {
        Ok(self.edge(w, b)?.tracks())
    }

    /// Indices of the edges at a white vertex.
    pub fn white_edges(&self, wi: usize) -> impl Iterator<Item = usize> + '_ {
        let w = self.whites[wi];
        [(1, 1), (-1, 1), (-1, -1), (1, -1)]
            .into_iter()
            .filter_map(move |(sx, sy)| self.edge_index((w.x, w.y), (w.x + sx, w.y + sy)))
    }

    pub fn face_class(&self, f: FaceId) -> Option<FaceClass> {
        let m = self.size();
        if f.x < 0 || f.y < 0 || f.x > m || f.y > m || (f.x + f.y) % 2 != 0 {
            return None;
        }
        let pos = (f.y as usize) * (m as usize + 1) + f.x as usize;
        // faces are stored row by row, keeping one point in two
        Some(self.faces[pos / 2].1)
    }

    /// Faces grouped by class.
    pub fn face_classes(&self) -> BTreeMap<FaceClass, Vec<FaceId>> {
        let mut r: BTreeMap<FaceClass, Vec<FaceId>> = BTreeMap::new();
        for c in [
            FaceClass::Odd,
            FaceClass::InteriorEven,
            FaceClass::Boundary,
            FaceClass::Corner,
        ] {
            r.insert(c, Vec::new());
        }
        for (f, c) in &self.faces {
            r.get_mut(c).unwrap().push(*f);
        }
        r
    }

    /// Faces on the outer rim, corners included.
    pub fn rim_faces(&self) -> Vec<FaceId> {
        self.faces
            .iter()
            .filter(|(_, c)| matches!(c, FaceClass::Boundary | FaceClass::Corner))
            .map(|(f, _)| *f)
            .collect()
    }

    /// Boundary faces in the sense of the partition function recurrence:
    /// the non-corner rim faces followed by the corners.
    pub fn inner_faces(&self) -> Vec<FaceId> {
        self.faces
            .iter()
            .filter(|(_, c)| matches!(c, FaceClass::Odd | FaceClass::InteriorEven))
            .map(|(f, _)| *f)
            .collect()
    }

    /// Vertices of an inner face in counterclockwise order, starting with a
    /// white vertex.
    pub fn face_boundary(&self, f: FaceId) -> Option<[VertexId; 4]> {
        let v = |dx: i32, dy: i32| (f.x + dx, f.y + dy);
        let ring = [v(1, 0), v(0, 1), v(-1, 0), v(0, -1)];
        let mut out = Vec::new();
        for p in ring {
            if let Some(i) = self.white_index(p.0, p.1) {
                out.push(self.whites[i]);
            } else if let Some(i) = self.black_index(p.0, p.1) {
                out.push(self.blacks[i]);
            } else {
                return None;
            }
        }
        if out[0].color == Color::Black {
            out.rotate_left(1);
        }
        Some([out[0], out[1], out[2], out[3]])
    }

    /// Discrete Abel map at a vertex of the diamond graph (a vertex or a face).
    pub fn abel_divisor(&self, x: i32, y: i32) -> FormalDivisor {
        abel_divisor_at(x, y)
    }
}

/// Discrete Abel map of the point `(x, y)` of the diamond graph of the square
/// lattice, normalised by `D(0,0) = d`.
pub fn abel_divisor_at(x: i32, y: i32) -> FormalDivisor {
    let (ex, ey) = (x - x.rem_euclid(2), y - y.rem_euclid(2));
    let mut d = FormalDivisor::base_point();
    // along the bottom row to (ex, 0), then up to (ex, ey)
    let mut k = 0;
    while k != ex {
        let (j, s) = if ex > k { (k, 1) } else { (k - 2, -1) };
        d.add(Track::column(j), s);
        d.add(Track::column(j + 1), -s);
        k += 2 * s;
    }
    let mut k = 0;
    while k != ey {
        let (j, s) = if ey > k { (k, 1) } else { (k - 2, -1) };
        d.add(Track::row(j + 1), s);
        d.add(Track::row(j), -s);
        k += 2 * s;
    }
    match (x.rem_euclid(2), y.rem_euclid(2)) {
        (0, 0) => {}
        (1, 0) => d.add(Track::column(ex), 1),
        (0, 1) => d.add(Track::row(ey), -1),
        _ => {
            d.add(Track::column(ex), 1);
            d.add(Track::row(ey), -1);
        }
    }
    d
}

/// Region of a vertex of the extended graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Aztec,
    North,
    South,
    West,
    East,
}

/// An edge of the extended window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtEdge {
    pub w: usize,
    pub b: usize,
    /// Track playing the role of `alpha` in the Kasteleyn entry `E(alpha, beta)`.
    pub alpha: Track,
    pub beta: Track,
    pub icy: bool,
}

/// Finite window of the infinite minimal graph `G_n`.
///
/// Quadrant layers are indexed by a level `m = 0..depth`. In the north
/// quadrant the level-`m` white vertices are `(x, 2n+2m+1)` with
/// `x = -m, -m+2, ..., 2n+m`; each has its icy black vertex directly above
/// and two diagonal neighbours below. The other quadrants are images of this
/// one under the symmetries of the square, with the extreme vertices of
/// consecutive quadrants joined along the diagonals.
#[derive(Clone, Debug)]
pub struct ExtendedGraph {
    pub base: AztecGraph,
    pub depth: usize,
    pub whites: Vec<VertexId>,
    pub blacks: Vec<VertexId>,
    pub white_region: Vec<Region>,
    pub black_region: Vec<Region>,
    /// Quadrant level of each vertex (`None` for the Aztec diamond).
    pub white_level: Vec<Option<usize>>,
    pub black_level: Vec<Option<usize>>,
    pub edges: Vec<ExtEdge>,
    /// Edge indices at each white, resp. black, vertex.
    pub white_adj: Vec<Vec<usize>>,
    pub black_adj: Vec<Vec<usize>>,
    /// Icy edge of each quadrant vertex, if it lies in the window.
    pub white_icy: Vec<Option<usize>>,
    pub black_icy: Vec<Option<usize>>,
    /// Discrete Abel map of each vertex.
    pub white_abel: Vec<FormalDivisor>,
    pub black_abel: Vec<FormalDivisor>,
    white_index: HashMap<(i32, i32), usize>,
    black_index: HashMap<(i32, i32), usize>,
}

/// Largest supported window depth.
pub const MAX_DEPTH: usize = 8;

impl ExtendedGraph {
    pub fn new(n: usize, depth: usize) -> Result<ExtendedGraph, Error> {
        if depth > MAX_DEPTH {
            return Err(Error::Config(format!(
                "window depth {depth} exceeds {MAX_DEPTH}"
            )));
        }
        let base = AztecGraph::new(n)?;
        let nn = n as i32;
        let m2 = 2 * nn;
        let mut g = ExtendedGraph {
            depth,
            whites: Vec::new(),
            blacks: Vec::new(),
            white_region: Vec::new(),
            black_region: Vec::new(),
            white_level: Vec::new(),
            black_level: Vec::new(),
            edges: Vec::new(),
            white_adj: Vec::new(),
            black_adj: Vec::new(),
            white_icy: Vec::new(),
            black_icy: Vec::new(),
            white_abel: Vec::new(),
            black_abel: Vec::new(),
            white_index: HashMap::new(),
            black_index: HashMap::new(),
            base,
        };
        for w in g.base.whites.clone() {
            g.add_vertex(w, Region::Aztec, None);
        }
        for b in g.base.blacks.clone() {
            g.add_vertex(b, Region::Aztec, None);
        }
        for e in g.base.edges.clone() {
            g.add_edge((e.w.x, e.w.y), (e.b.x, e.b.y), e.alpha, e.beta, false);
        }
        let a = |k: i32| Track::new(Family::A, k);
        let bt = |k: i32| Track::new(Family::B, k);
        let c = |k: i32| Track::new(Family::C, k);
        let d = |k: i32| Track::new(Family::D, k);
        for m in 0..depth as i32 {
            let mu = Some(m as usize);
            for s in (-m..=m2 + m).step_by(2) {
                // north: white (s, 2n+2m+1), icy black above
                g.add_vertex(VertexId::white(s, m2 + 2 * m + 1), Region::North, mu);
                g.add_vertex(VertexId::black(s, m2 + 2 * m + 2), Region::North, mu);
                // south: mirror image
                g.add_vertex(VertexId::white(s, -2 * m - 1), Region::South, mu);
                g.add_vertex(VertexId::black(s, -2 * m - 2), Region::South, mu);
                // west: black (-2m-1, s), icy white on its left
                g.add_vertex(VertexId::black(-2 * m - 1, s), Region::West, mu);
                g.add_vertex(VertexId::white(-2 * m - 2, s), Region::West, mu);
                // east: mirror image
                g.add_vertex(VertexId::black(m2 + 2 * m + 1, s), Region::East, mu);
                g.add_vertex(VertexId::white(m2 + 2 * m + 2, s), Region::East, mu);
            }
        }
        for m in 0..depth as i32 {
            for s in (-m..=m2 + m).step_by(2) {
                let y = m2 + 2 * m + 1;
                let (kc, kd) = ((s + m + 2) / 2, (s - m) / 2);
                g.add_edge((s, y), (s, y + 1), c(kc), d(kd), true);
                g.add_edge((s, y), (s + 1, y - 1), a(nn + m + 1), c(kc), false);
                g.add_edge((s, y), (s - 1, y - 1), d(kd), a(nn + m + 1), false);
                let y = -2 * m - 1;
                g.add_edge((s, y), (s, y - 1), d(kd), c(kc), true);
                g.add_edge((s, y), (s + 1, y + 1), c(kc), bt(-m), false);
                g.add_edge((s, y), (s - 1, y + 1), bt(-m), d(kd), false);
                let x = -2 * m - 1;
                let (ka, kb) = ((s + m + 2) / 2, (s - m) / 2);
                g.add_edge((x - 1, s), (x, s), a(ka), bt(kb), true);
                g.add_edge((x + 1, s - 1), (x, s), bt(kb), d(-m), false);
                g.add_edge((x + 1, s + 1), (x, s), d(-m), a(ka), false);
                let x = m2 + 2 * m + 1;
                g.add_edge((x + 1, s), (x, s), bt(kb), a(ka), true);
                g.add_edge((x - 1, s - 1), (x, s), c(nn + m + 1), bt(kb), false);
                g.add_edge((x - 1, s + 1), (x, s), a(ka), c(nn + m + 1), false);
            }
            // diagonal seams between consecutive quadrants
            let top = m2 + 2 * m + 1;
            g.add_edge((-m, top), (-2 * m - 1, m2 + m), d(-m), a(nn + m + 1), false);
            g.add_edge(
                (m2 + m, top),
                (m2 + 2 * m + 1, m2 + m),
                a(nn + m + 1),
                c(nn + m + 1),
                false,
            );
            g.add_edge((-m, -2 * m - 1), (-2 * m - 1, -m), bt(-m), d(-m), false);
            g.add_edge(
                (m2 + m, -2 * m - 1),
                (m2 + 2 * m + 1, -m),
                c(nn + m + 1),
                bt(-m),
                false,
            );
        }
        g.compute_abel();
        Ok(g)
    }

    fn add_vertex(&mut self, v: VertexId, r: Region, level: Option<usize>) {
        match v.color {
            Color::White => {
                if self.white_index.contains_key(&(v.x, v.y)) {
                    return;
                }
                self.white_index.insert((v.x, v.y), self.whites.len());
                self.whites.push(v);
                self.white_region.push(r);
                self.white_level.push(level);
                self.white_adj.push(Vec::new());
                self.white_icy.push(None);
            }
            Color::Black => {
                if self.black_index.contains_key(&(v.x, v.y)) {
                    return;
                }
                self.black_index.insert((v.x, v.y), self.blacks.len());
                self.blacks.push(v);
                self.black_region.push(r);
                self.black_level.push(level);
                self.black_adj.push(Vec::new());
                self.black_icy.push(None);
            }
        }
    }

    fn add_edge(&mut self, w: (i32, i32), b: (i32, i32), alpha: Track, beta: Track, icy: bool) {
        let (Some(&wi), Some(&bi)) = (self.white_index.get(&w), self.black_index.get(&b)) else {
            return;
        };
        if self.white_adj[wi].iter().any(|&e| self.edges[e].b == bi) {
            return;
        }
        let k = self.edges.len();
        self.edges.push(ExtEdge {
            w: wi,
            b: bi,
            alpha,
            beta,
            icy,
        });
        self.white_adj[wi].push(k);
        self.black_adj[bi].push(k);
        if icy {
            self.white_icy[wi] = Some(k);
            self.black_icy[bi] = Some(k);
        }
    }

    fn compute_abel(&mut self) {
        let nw = self.whites.len();
        let nb = self.blacks.len();
        let mut wd: Vec<Option<FormalDivisor>> = vec![None; nw];
        let mut bd: Vec<Option<FormalDivisor>> = vec![None; nb];
        for (i, w) in self.base.whites.iter().enumerate() {
            wd[i] = Some(abel_divisor_at(w.x, w.y));
        }
        for (i, b) in self.base.blacks.iter().enumerate() {
            bd[i] = Some(abel_divisor_at(b.x, b.y));
        }
        // D(b) = D(w) + alpha + beta across every edge
        let mut changed = true;
        while changed {
            changed = false;
            for e in &self.edges {
                let step = FormalDivisor::default().with(e.alpha, 1).with(e.beta, 1);
                match (&wd[e.w], &bd[e.b]) {
                    (Some(dw), None) => {
                        bd[e.b] = Some(dw.plus(&step));
                        changed = true;
                    }
                    (None, Some(db)) => {
                        wd[e.w] = Some(db.minus(&step));
                        changed = true;
                    }
                    _ => {}
                }
            }
        }
        self.white_abel = wd
            .into_iter()
            .map(|d| d.expect("window is connected"))
            .collect();
        self.black_abel = bd
            .into_iter()
            .map(|d| d.expect("window is connected"))
            .collect();
    }

    pub fn white_index(&self, x: i32, y: i32) -> Option<usize> {
        self.white_index.get(&(x, y)).copied()
    }

    pub fn black_index(&self, x: i32, y: i32) -> Option<usize> {
        self.black_index.get(&(x, y)).copied()
    }

    pub fn edge_between(&self, wi: usize, bi: usize) -> Option<usize> {
        self.white_adj[wi]
            .iter()
            .copied()
            .find(|&e| self.edges[e].b == bi)
    }

    /// Whether a vertex has all three of its neighbours inside the window.
    pub fn white_complete(&self, wi: usize) -> bool {
        let want = if self.white_region[wi] == Region::Aztec {
            self.base_degree_white(wi)
        } else {
            3
        };
        self.white_adj[wi].len() == want
    }

    pub fn black_complete(&self, bi: usize) -> bool {
        let want = if self.black_region[bi] == Region::Aztec {
            self.base_degree_black(bi)
        } else {
            3
        };
        self.black_adj[bi].len() == want
    }

    fn base_degree_white(&self, wi: usize) -> usize {
        // vertices of Az_n have degree 4 once the first quadrant layer is present
        if self.depth == 0 {
            self.white_adj[wi].len()
        } else {
            4
        }
    }

    fn base_degree_black(&self, bi: usize) -> usize {
        if self.depth == 0 {
            self.black_adj[bi].len()
        } else {
            4
        }
    }

    /// Light cone of a quadrant vertex: for a white vertex of the north or
    /// south quadrant, or a black vertex of the west or east quadrant, the
    /// vertices of the opposite colour in the same quadrant lying in the
    /// 45-degree cone opening away from the Aztec diamond, starting at the
    /// middle of its icy edge.
    pub fn in_light_cone(&self, apex: VertexId, v: VertexId) -> bool {
        let two_n = self.base.size();
        match (apex.color, v.color) {
            (Color::White, Color::Black) => {
                let (Some(ai), Some(bi)) =
                    (self.white_index(apex.x, apex.y), self.black_index(v.x, v.y))
                else {
                    return false;
                };
                let r = self.white_region[ai];
                if self.black_region[bi] != r {
                    return false;
                }
                match r {
                    Region::North => 2 * (v.x - apex.x).abs() <= v.y - apex.y - 1,
                    Region::South => 2 * (v.x - apex.x).abs() <= apex.y - v.y - 1,
                    _ => false,
                }
            }
            (Color::Black, Color::White) => {
                let (Some(ai), Some(wi)) =
                    (self.black_index(apex.x, apex.y), self.white_index(v.x, v.y))
                else {
                    return false;
                };
                let r = self.black_region[ai];
                if self.white_region[wi] != r {
                    return false;
                }
                let _ = two_n;
                match r {
                    Region::West => 2 * (v.y - apex.y).abs() <= apex.x - v.x - 1,
                    Region::East => 2 * (v.y - apex.y).abs() <= v.x - apex.x - 1,
                    _ => false,
                }
            }
            _ => false,
        }
    }
}
