use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::Embedding2D;

/// Anchors of a viridis-like sequential colormap.
const COLORMAP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Hex color for a position `t` in [0, 1] along the colormap.
pub fn layout_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let s = t * (COLORMAP.len() - 1) as f64;
    let i = (s.floor() as usize).min(COLORMAP.len() - 2);
    let f = s - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (COLORMAP[i][k] + f * (COLORMAP[i + 1][k] - COLORMAP[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn check_aligned(embedding: &Embedding2D, popularity: &[u64]) -> Result<()> {
    if embedding.points.rows() != embedding.asset_ids.len() || popularity.len() != embedding.asset_ids.len() {
        return Err(Error::invalid(format!(
            "{} points, {} asset ids and {} popularity values do not align",
            embedding.points.rows(),
            embedding.asset_ids.len(),
            popularity.len()
        )));
    }
    Ok(())
}

/// Self-contained SVG scatter colored by `log(1 + popularity)`.
pub fn render_svg(embedding: &Embedding2D, popularity: &[u64]) -> Result<String> {
    check_aligned(embedding, popularity)?;
    const SIZE: f64 = 800.0;
    const MARGIN: f64 = 20.0;
    let pts = &embedding.points;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in pts.iter_rows() {
        for d in 0..2 {
            lo[d] = lo[d].min(r[d]);
            hi[d] = hi[d].max(r[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let max_log = popularity.iter().map(|&p| (p as f64).ln_1p()).fold(0.0, f64::max);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for ((r, id), &p) in pts.iter_rows().zip(&embedding.asset_ids).zip(popularity) {
        let cx = MARGIN + (r[0] - lo[0]) * scale;
        let cy = SIZE - MARGIN - (r[1] - lo[1]) * scale;
        let t = if max_log > 0.0 { (p as f64).ln_1p() / max_log } else { 0.0 };
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="3" fill="{}" fill-opacity="0.8"><title>{} ({p})</title></circle>"#,
            layout_color(t),
            xml_escape(id)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// CSV `asset_id,x,y,popularity`; coordinates use shortest round-trip formatting.
pub fn write_layout_csv<W: Write>(embedding: &Embedding2D, popularity: &[u64], writer: W) -> Result<()> {
    check_aligned(embedding, popularity)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["asset_id", "x", "y", "popularity"])?;
    for ((r, id), p) in embedding.points.iter_rows().zip(&embedding.asset_ids).zip(popularity) {
        w.write_record([id.clone(), r[0].to_string(), r[1].to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a layout CSV back as `(asset_ids, points, popularity)`.
pub fn read_layout_csv<R: Read>(reader: R) -> Result<(Vec<String>, Matrix, Vec<u64>)> {
    let mut r = csv::Reader::from_reader(reader);
    let (mut ids, mut data, mut pops) = (Vec::new(), Vec::new(), Vec::new());
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(Error::parse(line, format!("expected 4 fields, found {}", record.len())));
        }
        let coord = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(line, format!("bad coordinate {s:?}")));
        ids.push(record[0].to_string());
        data.push(coord(&record[1])?);
        data.push(coord(&record[2])?);
        pops.push(record[3].parse().map_err(|_| Error::parse(line, format!("bad popularity {:?}", &record[3])))?);
    }
    let points = Matrix::from_vec(ids.len(), 2, data)?;
    Ok((ids, points, pops))
}

/// Writes `<stem>.svg` and `<stem>.csv` next to each other and returns the SVG.
pub fn emit_scatter(embedding: &Embedding2D, popularity: &[u64], stem: &Path) -> Result<String> {
    let svg = render_svg(embedding, popularity)?;
    let mut csv_bytes = Vec::new();
    write_layout_csv(embedding, popularity, &mut csv_bytes)?;
    fs::write(stem.with_extension("svg"), &svg)?;
    fs::write(stem.with_extension("csv"), csv_bytes)?;
    Ok(svg)
}
