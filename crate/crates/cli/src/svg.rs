//! Static SVG output. Coordinates carry 12 significant digits.

use std::fmt::Write;

use fockdimer::lattice::AztecGraph;
use fockdimer::limitshape::{ArcticSample, Phase};
use fockdimer::measures::Matching;

/// `x` rounded to `digits` significant digits, printed in shortest form.
pub fn sig(x: f64, digits: usize) -> String {
    let r: f64 = format!("{:.*e}", digits - 1, x).parse().unwrap_or(x);
    format!("{r}")
}

fn c(x: f64) -> String {
    sig(x, 12)
}

const SIZE: f64 = 600.0;

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        c(w),
        c(h),
        c(w),
        c(h)
    );
}

/// Unit square with `y` pointing up, optional phase cells and polylines.
pub fn unit_square(curves: &[Vec<ArcticSample>], cells: &[(f64, f64, f64, Phase)]) -> String {
    let mut out = String::new();
    header(&mut out, SIZE, SIZE);
    let px = |x: f64| c(x * SIZE);
    let py = |y: f64| c((1.0 - y) * SIZE);
    for &(x, y, h, phase) in cells {
        let fill = match phase {
            Phase::Liquid => "#f4c95d",
            Phase::Frozen { .. } => "#4a6fa5",
            Phase::Gas { .. } => "#9bc995",
            Phase::Boundary => "#222222",
        };
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            px(x - h / 2.0),
            py(y + h / 2.0),
            c(h * SIZE),
            c(h * SIZE)
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="none" stroke="black"/>"#,
        c(SIZE),
        c(SIZE)
    );
    for curve in curves {
        // break the polyline where consecutive samples jump
        let mut pieces: Vec<Vec<&ArcticSample>> = vec![Vec::new()];
        for s in curve {
            if let Some(last) = pieces.last().and_then(|p| p.last()) {
                if (s.x - last.x).hypot(s.y - last.y) > 0.1 {
                    pieces.push(Vec::new());
                }
            }
            pieces.last_mut().map(|p| p.push(s));
        }
        for p in pieces.iter().filter(|p| p.len() > 1) {
            let pts: Vec<String> = p
                .iter()
                .map(|s| format!("{},{}", px(s.x), py(s.y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="crimson" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Domino picture of a matching: each vertex is a unit square of the
/// diamond rotated by 45 degrees, each matched edge a domino.
pub fn dominoes(g: &AztecGraph, m: &Matching) -> String {
    let s = g.size() as f64;
    let scale = SIZE / (s + 2.0);
    // (x, y) -> ((x + y) / 2, (y - x) / 2), shifted into the picture
    let u = |x: i32, y: i32| (x + y) as f64 / 2.0;
    let v = |x: i32, y: i32| (y - x) as f64 / 2.0 + s / 2.0;
    let mut out = String::new();
    header(&mut out, SIZE, SIZE);
    for &e in &m.edges {
        let ed = &g.edges[e];
        let (cw, cb) = (
            (u(ed.w.x, ed.w.y), v(ed.w.x, ed.w.y)),
            (u(ed.b.x, ed.b.y), v(ed.b.x, ed.b.y)),
        );
        let (x0, x1) = (cw.0.min(cb.0) - 0.5, cw.0.max(cb.0) + 0.5);
        let (y0, y1) = (cw.1.min(cb.1) - 0.5, cw.1.max(cb.1) + 0.5);
        let fill = match (ed.b.x - ed.w.x, ed.b.y - ed.w.y) {
            (1, 1) => "#d1495b",
            (-1, -1) => "#edae49",
            (-1, 1) => "#00798c",
            _ => "#30638e",
        };
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            c((x0 + 1.0) * scale),
            c((s + 1.0 - y1) * scale),
            c((x1 - x0) * scale),
            c((y1 - y0) * scale)
        );
    }
    out.push_str("</svg>\n");
    out
}
