//! Deterministic SVG rendering of planar tessellations.
//!
//! Output is a pure function of the input artifact: fixed-precision number
//! formatting, no timestamps, colors derived from the target index alone.

use std::fmt::Write as _;

use semicoupling::geometry::{BoundaryPiece, ConvexCell};
use semicoupling::laguerre::LaguerreDiagram;
use semicoupling::solver::TransportPlan;
use semicoupling::{Error, Result};

/// Pixels per unit length.
const UNIT: f64 = 100.0;
/// Golden angle in degrees; consecutive targets get well-separated hues.
const HUE_STEP: f64 = 137.507_764_050_037_86;

/// Fill color of target `j`.
pub fn target_color(j: usize) -> String {
    hsl_to_hex((j as f64 * HUE_STEP).rem_euclid(360.0), 0.62, 0.6)
}

fn hsl_to_hex(h: f64, s: f64, l: f64) -> String {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

fn open_svg(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.4} {h:.4}">"#
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{w:.4}" height="{h:.4}" fill="#ffffff"/>"##);
    // Flip into y-up coordinates so geometry below stays in math convention.
    let _ = writeln!(out, r#"<g transform="translate(0 {h:.4}) scale(1 -1)">"#);
}

fn close_svg(out: &mut String) {
    out.push_str("</g>\n</svg>\n");
}

fn dot(out: &mut String, x: f64, y: f64) {
    let _ = writeln!(out, r##"<circle cx="{x:.4}" cy="{y:.4}" r="3" fill="#000000"/>"##);
}

/// Cell mosaic of a grid plan: each cell filled with its target's color,
/// unassigned mass left white, targets drawn as dots. Runs of one target
/// along a row merge into single rectangles.
pub fn render_plan_svg(plan: &TransportPlan<f64>) -> Result<String> {
    if plan.grid.dim() != 2 {
        return Err(Error::Domain("rendering needs a planar plan".into()));
    }
    let assignment = plan.assignment_vec()?;
    let (lo, hi) = plan.grid.window();
    let shape = plan.grid.shape();
    let w = (hi[0] - lo[0]) as f64 * UNIT;
    let h = (hi[1] - lo[1]) as f64 * UNIT;
    let cell = UNIT / plan.grid.m() as f64;
    let mut out = String::new();
    open_svg(&mut out, w, h);
    for iy in 0..shape[1] {
        let row = iy * shape[0];
        let target = |ix: usize| {
            if plan.grid.is_active(row + ix) {
                assignment[row + ix]
            } else {
                -1
            }
        };
        let mut ix = 0;
        while ix < shape[0] {
            let t = target(ix);
            if t < 0 {
                ix += 1;
                continue;
            }
            let mut end = ix + 1;
            while end < shape[0] && target(end) == t {
                end += 1;
            }
            let x = ix as f64 * cell;
            let y = iy as f64 * cell;
            let width = (end - ix) as f64 * cell;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.4}" y="{y:.4}" width="{width:.4}" height="{cell:.4}" fill="{}"/>"#,
                target_color(t as usize)
            );
            ix = end;
        }
    }
    for j in 0..plan.pattern.len() {
        let p = plan.pattern.point(j);
        dot(&mut out, (p[0] - lo[0] as f64) * UNIT, (p[1] - lo[1] as f64) * UNIT);
    }
    close_svg(&mut out);
    Ok(out)
}

/// Power-diagram cells as filled paths with straight edges and circular
/// arcs, sites as dots.
pub fn render_cells_svg(cells: &[ConvexCell<f64>], sites: &[[f64; 2]]) -> Result<String> {
    // Frame the union of the cell disks with half a unit of padding.
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for cell in cells {
        let (q, r) = cell
            .disk()
            .ok_or_else(|| Error::InvalidGeometry("cell without a bounding disk".into()))?;
        for k in 0..2 {
            lo[k] = lo[k].min(q[k] - r);
            hi[k] = hi[k].max(q[k] + r);
        }
    }
    for site in sites {
        for k in 0..2 {
            lo[k] = lo[k].min(site[k]);
            hi[k] = hi[k].max(site[k]);
        }
    }
    if cells.is_empty() && sites.is_empty() {
        lo = [0.0; 2];
        hi = [1.0; 2];
    }
    let pad = 0.5;
    let w = (hi[0] - lo[0] + 2.0 * pad) * UNIT;
    let h = (hi[1] - lo[1] + 2.0 * pad) * UNIT;
    let px = |x: f64| (x - lo[0] + pad) * UNIT;
    let py = |y: f64| (y - lo[1] + pad) * UNIT;
    let mut out = String::new();
    open_svg(&mut out, w, h);
    for (j, cell) in cells.iter().enumerate() {
        let (q, r) = cell.disk().expect("checked above");
        let color = target_color(j);
        let pieces = cell.boundary()?;
        if pieces.is_empty() {
            continue;
        }
        if let [BoundaryPiece::Arc { from, to }] = pieces[..] {
            if to - from >= std::f64::consts::TAU - 1e-9 {
                let _ = writeln!(
                    out,
                    r##"<circle cx="{:.4}" cy="{:.4}" r="{:.4}" fill="{color}" stroke="#1a1a1a" stroke-width="1"/>"##,
                    px(q[0]),
                    py(q[1]),
                    r * UNIT
                );
                continue;
            }
        }
        let start = match pieces[0] {
            BoundaryPiece::Segment { a, .. } => a,
            BoundaryPiece::Arc { from, .. } => [q[0] + r * from.cos(), q[1] + r * from.sin()],
        };
        let mut path = format!("M {:.4} {:.4}", px(start[0]), py(start[1]));
        for piece in &pieces {
            match *piece {
                BoundaryPiece::Segment { b, .. } => {
                    let _ = write!(path, " L {:.4} {:.4}", px(b[0]), py(b[1]));
                }
                BoundaryPiece::Arc { from, to } => {
                    let large = if to - from > std::f64::consts::PI { 1 } else { 0 };
                    let end = [q[0] + r * to.cos(), q[1] + r * to.sin()];
                    let _ = write!(
                        path,
                        " A {:.4} {:.4} 0 {large} 1 {:.4} {:.4}",
                        r * UNIT,
                        r * UNIT,
                        px(end[0]),
                        py(end[1])
                    );
                }
            }
        }
        path.push_str(" Z");
        let _ = writeln!(
            out,
            r##"<path d="{path}" fill="{color}" stroke="#1a1a1a" stroke-width="1"/>"##
        );
    }
    for site in sites {
        dot(&mut out, px(site[0]), py(site[1]));
    }
    close_svg(&mut out);
    Ok(out)
}

/// Convenience wrapper for a freshly solved diagram.
pub fn render_diagram_svg(diagram: &LaguerreDiagram<f64>) -> Result<String> {
    let pattern = diagram.pattern();
    let sites: Vec<[f64; 2]> = (0..pattern.len())
        .map(|j| {
            let p = pattern.point(j);
            [p[0], p[1]]
        })
        .collect();
    render_cells_svg(diagram.cells(), &sites)
}
