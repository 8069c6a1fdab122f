//! Line plots of `T_odd(t, φ)` written as SVG.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use super::dataset::DatasetManifest;
use super::{io_err, PipelineError};
use crate::io;
use crate::phantom::StrokeClass;
use crate::vhed::read_profile;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;
const HEMORRHAGIC: &str = "#c0392b";
const ISCHEMIC: &str = "#2166ac";

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub values: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel at `(x0, y0)` of size `w × h`.
fn panel(out: &mut String, x0: f64, y0: f64, w: f64, h: f64, t: &[f64], series: &[Series], title: &str, note: &str) {
    let (tmin, tmax) = (t[0], t[t.len() - 1]);
    let mut ymax = series.iter().flat_map(|s| &s.values).fold(0.0f64, |m, v| m.max(v.abs()));
    if !(ymax > 0.0) {
        ymax = 1.0;
    }
    let (px0, px1) = (x0 + MARGIN, x0 + w - 16.0);
    let (py0, py1) = (y0 + 32.0, y0 + h - 36.0);
    let sx = |v: f64| px0 + (v - tmin) / (tmax - tmin) * (px1 - px0);
    let sy = |v: f64| py0 + (1.0 - (v + ymax) / (2.0 * ymax)) * (py1 - py0);

    let _ = writeln!(out, r##"<rect x="{px0:.1}" y="{py0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#888"/>"##, px1 - px0, py1 - py0);
    let _ = writeln!(out, r##"<line x1="{px0:.1}" y1="{0:.1}" x2="{px1:.1}" y2="{0:.1}" stroke="#ccc"/>"##, sy(0.0));
    let _ = writeln!(out, r##"<line x1="{0:.1}" y1="{py0:.1}" x2="{0:.1}" y2="{py1:.1}" stroke="#ccc"/>"##, sx(0.0));
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="14">{}</text>"#, px0, y0 + 20.0, escape(title));
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#, px1, y0 + 20.0, escape(note));
    for (v, anchor) in [(ymax, py0 + 4.0), (-ymax, py1)] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{anchor:.1}" font-size="10" text-anchor="end">{v:.2e}</text>"#, px0 - 4.0);
    }
    for v in [tmin, 0.0, tmax] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v}</text>"#, sx(v), py1 + 14.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">t</text>"#, (px0 + px1) / 2.0, py1 + 28.0);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = t.iter().zip(&s.values).map(|(&a, &b)| format!("{:.2},{:.2}", sx(a), sy(b))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{}" stroke-width="1.4"{dash} points="{}"/>"#, s.color, pts.join(" "));
        let ly = py0 + 14.0 + 13.0 * i as f64;
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}"{dash}/>"#, px1 - 150.0, px1 - 128.0, s.color);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#, px1 - 124.0, ly + 3.5, escape(&s.label));
    }
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Real and imaginary parts of one angle's `T_odd`.
pub fn profile_svg(t: &[f64], row: &[Complex64], title: &str, note: &str) -> String {
    let series = [
        Series { label: "Re T_odd".into(), color: "#1b1b1b".into(), dashed: false, values: row.iter().map(|c| c.re).collect() },
        Series { label: "Im T_odd".into(), color: "#d35400".into(), dashed: true, values: row.iter().map(|c| c.im).collect() },
    ];
    let mut body = String::new();
    panel(&mut body, 0.0, 0.0, WIDTH, HEIGHT, t, &series, title, note);
    document(WIDTH, HEIGHT, &body)
}

/// One panel per angle, every sample coloured by class; imaginary parts
/// solid, real parts dashed.
pub fn overlay_svg(t: &[f64], angles: &[f64], samples: &[(String, StrokeClass, Vec<Vec<Complex64>>)]) -> String {
    let cols = 2usize;
    let rows = angles.len().div_ceil(cols);
    let mut body = String::new();
    for (a, phi) in angles.iter().enumerate() {
        let series: Vec<Series> = samples
            .iter()
            .flat_map(|(id, class, prof)| {
                let color = match class {
                    StrokeClass::Hemorrhagic => HEMORRHAGIC,
                    StrokeClass::Ischemic => ISCHEMIC,
                };
                let name = match class {
                    StrokeClass::Hemorrhagic => "hem.",
                    StrokeClass::Ischemic => "isch.",
                };
                [
                    Series {
                        label: format!("Im {id} ({name})"),
                        color: color.into(),
                        dashed: false,
                        values: prof[a].iter().map(|c| c.im).collect(),
                    },
                    Series {
                        label: format!("Re {id}"),
                        color: color.into(),
                        dashed: true,
                        values: prof[a].iter().map(|c| c.re).collect(),
                    },
                ]
            })
            .collect();
        let (x0, y0) = ((a % cols) as f64 * WIDTH, (a / cols) as f64 * HEIGHT);
        panel(&mut body, x0, y0, WIDTH, HEIGHT, t, &series, &format!("φ = {:.4} rad", phi), "");
    }
    document(cols as f64 * WIDTH, rows as f64 * HEIGHT, &body)
}

/// Per sample one plot per angle, plus one overlay of all samples.
pub fn emit_profile_plots(
    manifest: &DatasetManifest,
    ids: &[String],
    delta: f64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::new();
    let mut samples = Vec::new();
    let mut grid: Option<(Vec<f64>, Vec<f64>)> = None;
    for id in ids {
        let rec = manifest
            .records
            .iter()
            .find(|r| &r.id == id)
            .ok_or_else(|| PipelineError::Missing(format!("no sample {id} in manifest")))?;
        let var = rec.variant(delta).ok_or_else(|| PipelineError::Missing(format!("{id} has no profile for delta {delta}")))?;
        let path = var.profile.resolve(manifest.root());
        let (meta, rows) = read_profile(&path).map_err(io_err(&path))?;
        let t: Vec<f64> =
            (0..meta.t_nodes).map(|i| meta.t_min + (meta.t_max - meta.t_min) * i as f64 / (meta.t_nodes - 1) as f64).collect();
        let max_abs = rows.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, row) in rows.iter().enumerate() {
            let title = format!("{id}, φ = {:.4} rad, δ = {delta}", meta.angles[a]);
            let svg = profile_svg(&t, row, &title, &format!("max |T_odd| = {max_abs:.3e}"));
            let p = out_dir.join(format!("{id}_angle{a}.svg"));
            io::write_atomic(&p, svg.as_bytes()).map_err(io_err(&p))?;
            written.push(p);
        }
        grid.get_or_insert((t, meta.angles.clone()));
        samples.push((id.clone(), rec.class, rows));
    }
    if let Some((t, angles)) = grid {
        let p = out_dir.join("overlay.svg");
        io::write_atomic(&p, overlay_svg(&t, &angles, &samples).as_bytes()).map_err(io_err(&p))?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_profile_renders() {
        let t: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let row = vec![Complex64::new(0.0, 0.0); 5];
        let svg = profile_svg(&t, &row, "flat <test>", "max |T_odd| = 0");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("flat &lt;test&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
