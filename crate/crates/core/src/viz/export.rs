//! CSV and SVG writers for projections and density curves.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use super::density::DensityCurve;
use super::Projection2D;
use crate::error::{Error, Result};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn write_points_csv<W: Write>(points: &[Projection2D], mut w: W) -> Result<()> {
    writeln!(w, "item,category,x,y")?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.key, p.category, p.x, p.y)?;
    }
    Ok(())
}

/// Rows of a points CSV as `(item, category, x, y)`.
pub fn read_points_csv<R: BufRead>(r: R) -> Result<Vec<(String, String, f64, f64)>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != "item,category,x,y" {
                return Err(Error::Parse { line: 1, message: format!("unexpected header {line:?}") });
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |message: String| Error::Parse { line: n + 1, message };
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", f.len())));
        }
        let x = f[2].parse().map_err(|e| bad(format!("x: {e}")))?;
        let y = f[3].parse().map_err(|e| bad(format!("y: {e}")))?;
        out.push((f[0].to_string(), f[1].to_string(), x, y));
    }
    Ok(out)
}

pub fn write_curve_csv<W: Write>(curve: &DensityCurve, mut w: W) -> Result<()> {
    writeln!(w, "theta,density")?;
    for (t, d) in curve.theta.iter().zip(&curve.density) {
        writeln!(w, "{t},{d}")?;
    }
    Ok(())
}

pub fn read_curve_csv<R: BufRead>(r: R) -> Result<DensityCurve> {
    let mut curve = DensityCurve { theta: Vec::new(), density: Vec::new() };
    for (n, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        let bad = |message: String| Error::Parse { line: n + 1, message };
        let (t, d) = line.split_once(',').ok_or_else(|| bad("expected theta,density".into()))?;
        curve.theta.push(t.parse().map_err(|e| bad(format!("theta: {e}")))?);
        curve.density.push(d.parse().map_err(|e| bad(format!("density: {e}")))?);
    }
    Ok(curve)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter of the unit-circle points coloured by category, with the
/// angular density drawn as a radial curve outside the circle.
pub fn render_svg(points: &[Projection2D], curve: &DensityCurve) -> String {
    let size = 600.0;
    let c = size / 2.0;
    let r = size * 0.3;
    let mut categories: Vec<&str> = points.iter().map(|p| p.category.as_str()).collect();
    categories.sort_unstable();
    categories.dedup();
    let colour = |cat: &str| {
        let k = categories.iter().position(|&c| c == cat).unwrap_or(0);
        PALETTE[k % PALETTE.len()]
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="{size}" height="{size}" fill="white"/>"#);
    let _ = writeln!(s, r##"<circle cx="{c}" cy="{c}" r="{r}" fill="none" stroke="#cccccc"/>"##);

    let peak = curve.density.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let path: Vec<String> = curve
        .theta
        .iter()
        .zip(&curve.density)
        .map(|(t, d)| {
            let radius = r * (1.05 + 0.6 * d / peak);
            format!("{:.2},{:.2}", c + radius * t.cos(), c - radius * t.sin())
        })
        .collect();
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="none" stroke="#333333" stroke-width="1.5"/>"##,
        path.join(" ")
    );
    for p in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.6"><title>{} ({})</title></circle>"#,
            c + r * p.x,
            c - r * p.y,
            colour(&p.category),
            escape(&p.key),
            escape(&p.category)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `points.csv`, `density.csv` and, if asked, `embedding.svg` into `dir`.
pub fn export(points: &[Projection2D], curve: &DensityCurve, dir: &Path, svg: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_points_csv(points, fs::File::create(dir.join("points.csv"))?)?;
    write_curve_csv(curve, fs::File::create(dir.join("density.csv"))?)?;
    if svg {
        fs::write(dir.join("embedding.svg"), render_svg(points, curve))?;
    }
    Ok(())
}
