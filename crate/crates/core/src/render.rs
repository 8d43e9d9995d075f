//! Deterministic SVG rendering of stroke sequences.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{delta_decode, Point, StrokeSequence};
use crate::error::{DsdError, Result};

/// Colors cycled by character index when coloring is on.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
    "#7f7f7f",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSpec {
    pub width: f64,
    pub height: f64,
    /// Canvas y of the first point.
    pub baseline: f64,
    /// Canvas x of the first point.
    pub margin: f64,
    pub stroke_width: f64,
    /// Color each character's strokes from [`PALETTE`]; needs eoc labels.
    pub color_by_char: bool,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            width: 750.0,
            height: 120.0,
            baseline: 80.0,
            margin: 10.0,
            stroke_width: 2.0,
            color_by_char: false,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.width, self.height, self.baseline, self.margin, self.stroke_width]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.width <= 0.0 || self.height <= 0.0 || self.stroke_width <= 0.0 {
            return Err(DsdError::Invalid("canvas and stroke width must be positive and finite".into()));
        }
        if !(0.0..=self.height).contains(&self.baseline) {
            return Err(DsdError::Invalid(format!(
                "baseline {} outside canvas height {}",
                self.baseline, self.height
            )));
        }
        Ok(())
    }

    /// Canvas position of the sample's origin.
    pub fn origin(&self) -> Point {
        [self.margin, self.baseline]
    }
}

/// One drawn polyline and the character it belongs to, if known.
#[derive(Clone, Debug, PartialEq)]
struct Piece {
    points: Vec<Point>,
    char_index: Option<usize>,
}

/// Pen-down segments, further split at character boundaries when coloring.
/// Split pieces share their boundary point so the ink stays connected.
fn pieces(sample: &StrokeSequence, spec: &RenderSpec, origin: Point) -> Vec<Piece> {
    let strokes = delta_decode(&sample.points, origin);
    let eoc = sample.eoc.as_ref().filter(|_| spec.color_by_char);
    let Some(eoc) = eoc else {
        return strokes
            .into_iter()
            .map(|points| Piece {
                points,
                char_index: None,
            })
            .collect();
    };
    // Absolute position k is the origin (k = 0) or point k - 1.
    let mut char_of = Vec::with_capacity(eoc.len() + 1);
    let mut c = 0;
    char_of.push(0);
    for &flag in eoc {
        char_of.push(c);
        if flag {
            c += 1;
        }
    }
    let mut out = Vec::new();
    let mut k = 0;
    for stroke in strokes {
        let mut cur = Piece {
            points: Vec::new(),
            char_index: Some(char_of[k]),
        };
        for p in stroke {
            let ci = char_of[k];
            if Some(ci) != cur.char_index {
                let last = *cur.points.last().expect("piece is nonempty once started");
                out.push(std::mem::replace(
                    &mut cur,
                    Piece {
                        points: vec![last],
                        char_index: Some(ci),
                    },
                ));
            }
            cur.points.push(p);
            k += 1;
        }
        out.push(cur);
    }
    out
}

fn header(s: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
}

fn write_paths(s: &mut String, sample: &StrokeSequence, spec: &RenderSpec, origin: Point) {
    for piece in pieces(sample, spec, origin) {
        let color = piece.char_index.map_or("#000000", |i| PALETTE[i % PALETTE.len()]);
        let mut d = String::new();
        for (i, p) in piece.points.iter().enumerate() {
            let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, p[0], p[1]);
        }
        if piece.points.len() == 1 {
            d.push_str(" Z");
        }
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="{}" stroke-linecap="round" stroke-linejoin="round"/>"#,
            spec.stroke_width
        );
    }
}

/// SVG 1.1 text with one `path` per pen-down segment. A one-point segment is
/// drawn as a round-capped dot. Numbers use shortest round-trip formatting,
/// so the output is byte-deterministic.
pub fn render_svg(sample: &StrokeSequence, spec: &RenderSpec) -> Result<String> {
    spec.validate()?;
    let mut s = String::new();
    header(&mut s, spec.width, spec.height);
    write_paths(&mut s, sample, spec, spec.origin());
    s.push_str("</svg>\n");
    Ok(s)
}

/// Stacks samples as rows of one tall canvas, e.g. an interpolation sweep.
/// Row `r` has its origin `r * spec.height` below the first.
pub fn render_grid(samples: &[StrokeSequence], spec: &RenderSpec) -> Result<String> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(DsdError::Empty("samples".into()));
    }
    let mut s = String::new();
    header(&mut s, spec.width, spec.height * samples.len() as f64);
    for (r, x) in samples.iter().enumerate() {
        let o = spec.origin();
        write_paths(&mut s, x, spec, [o[0], o[1] + spec.height * r as f64]);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Absolute points of every `path` in `svg`, in document order. Inverse of
/// the path encoding used by [`render_svg`].
pub fn parse_svg_paths(svg: &str) -> Result<Vec<Vec<Point>>> {
    let mut out = Vec::new();
    let paths = svg.lines().enumerate().filter(|(_, l)| l.trim_start().starts_with("<path"));
    for (i, line) in paths {
        let err = |msg: String| DsdError::Parse { line: i + 1, msg };
        let start = line.find("d=\"").ok_or_else(|| err("path without d".into()))? + 3;
        let end = start + line[start..].find('"').ok_or_else(|| err("unterminated d".into()))?;
        let mut pts = Vec::new();
        let mut tokens = line[start..end].split_whitespace();
        while let Some(tok) = tokens.next() {
            if tok == "Z" {
                continue;
            }
            let x = tok
                .strip_prefix('M')
                .or_else(|| tok.strip_prefix('L'))
                .ok_or_else(|| err(format!("unexpected path token {tok:?}")))?;
            let y = tokens.next().ok_or_else(|| err("missing y".into()))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{v:?}: {e}")));
            pts.push([num(x)?, num(y)?]);
        }
        out.push(pts);
    }
    Ok(out)
}
