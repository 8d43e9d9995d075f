use serde::{Deserialize, Serialize};

use crate::error::{DsdError, Result};

/// One pen step: offset from the previous point and the end-of-stroke flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokePoint {
    pub dx: f64,
    pub dy: f64,
    pub eos: bool,
}

impl StrokePoint {
    pub fn new(dx: f64, dy: f64, eos: bool) -> Self {
        StrokePoint { dx, dy, eos }
    }
}

/// A delta-encoded pen trajectory with its text label.
///
/// `eoc`, when present, has one flag per point; exactly `text.chars().count()`
/// flags are set and the last point always carries one.
#[derive(Clone, Debug, PartialEq)]
pub struct StrokeSequence {
    pub writer_id: String,
    pub text: String,
    pub points: Vec<StrokePoint>,
    pub eoc: Option<Vec<bool>>,
}

/// An absolute point, used for drawing and geometric preprocessing.
pub type Point = [f64; 2];

impl StrokeSequence {
    pub fn new(
        writer_id: impl Into<String>,
        text: impl Into<String>,
        points: Vec<StrokePoint>,
        eoc: Option<Vec<bool>>,
    ) -> Result<Self> {
        let s = StrokeSequence {
            writer_id: writer_id.into(),
            text: text.into(),
            points,
            eoc,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_chars(&self) -> usize {
        self.text.chars().count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(DsdError::Empty("stroke sequence has no points".into()));
        }
        if self.points.iter().any(|p| !p.dx.is_finite() || !p.dy.is_finite()) {
            return Err(DsdError::Invalid("non-finite delta".into()));
        }
        if let Some(eoc) = &self.eoc {
            if eoc.len() != self.points.len() {
                return Err(DsdError::Invalid(format!(
                    "eoc has {} flags for {} points",
                    eoc.len(),
                    self.points.len()
                )));
            }
            let count = eoc.iter().filter(|&&e| e).count();
            if count != self.num_chars() {
                return Err(DsdError::Invalid(format!(
                    "{count} eoc flags for text of {} characters",
                    self.num_chars()
                )));
            }
            if !eoc[eoc.len() - 1] {
                return Err(DsdError::Invalid("last point must end a character".into()));
            }
        }
        Ok(())
    }

    /// Indices of the points carrying `eoc = 1`, one per character.
    pub fn eoc_indices(&self) -> Result<Vec<usize>> {
        let eoc = self
            .eoc
            .as_ref()
            .ok_or_else(|| DsdError::Invalid("sample has no eoc labels".into()))?;
        Ok(eoc
            .iter()
            .enumerate()
            .filter_map(|(i, &e)| e.then_some(i))
            .collect())
    }

    /// Half-open point range `[start, end)` of each character.
    pub fn char_spans(&self) -> Result<Vec<(usize, usize)>> {
        let mut start = 0;
        Ok(self
            .eoc_indices()?
            .into_iter()
            .map(|e| {
                let span = (start, e + 1);
                start = e + 1;
                span
            })
            .collect())
    }

    /// The sub-sample covering characters `[from, to)`. Rows are kept verbatim,
    /// so the first row is the offset from the preceding character's end.
    pub fn crop_chars(&self, from: usize, to: usize) -> Result<StrokeSequence> {
        let spans = self.char_spans()?;
        if from >= to || to > spans.len() {
            return Err(DsdError::Invalid(format!(
                "character range {from}..{to} outside 0..{}",
                spans.len()
            )));
        }
        let (a, b) = (spans[from].0, spans[to - 1].1);
        let text: String = self.text.chars().skip(from).take(to - from).collect();
        StrokeSequence::new(
            self.writer_id.clone(),
            text,
            self.points[a..b].to_vec(),
            self.eoc.as_ref().map(|e| e[a..b].to_vec()),
        )
    }

    /// Absolute positions of the origin followed by every point.
    pub fn absolute(&self, origin: Point) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.points.len() + 1);
        let mut cur = origin;
        out.push(cur);
        for p in &self.points {
            cur = [cur[0] + p.dx, cur[1] + p.dy];
            out.push(cur);
        }
        out
    }

    /// Pen-down strokes in absolute coordinates.
    pub fn strokes(&self, origin: Point) -> Vec<Vec<Point>> {
        delta_decode(&self.points, origin)
    }
}

/// Encodes absolute strokes as deltas. The first point of the first stroke is
/// the origin and produces no row.
pub fn delta_encode(strokes: &[Vec<Point>]) -> Result<Vec<StrokePoint>> {
    let total: usize = strokes.iter().map(Vec::len).sum();
    if total < 2 {
        return Err(DsdError::TooShort { len: total, min: 2 });
    }
    if strokes.iter().any(Vec::is_empty) {
        return Err(DsdError::Invalid("empty stroke".into()));
    }
    if strokes[0].len() < 2 {
        return Err(DsdError::Invalid(
            "leading stroke needs at least two points".into(),
        ));
    }
    let mut rows = Vec::with_capacity(total - 1);
    let mut prev = strokes[0][0];
    for (s, stroke) in strokes.iter().enumerate() {
        let skip = usize::from(s == 0);
        for (i, &p) in stroke.iter().enumerate().skip(skip) {
            rows.push(StrokePoint::new(
                p[0] - prev[0],
                p[1] - prev[1],
                i + 1 == stroke.len(),
            ));
            prev = p;
        }
    }
    Ok(rows)
}

/// Prefix-sums deltas from `origin` and splits after every `eos = 1`.
pub fn delta_decode(points: &[StrokePoint], origin: Point) -> Vec<Vec<Point>> {
    let mut strokes = Vec::new();
    let mut cur = vec![origin];
    let mut pos = origin;
    for p in points {
        pos = [pos[0] + p.dx, pos[1] + p.dy];
        cur.push(pos);
        if p.eos {
            strokes.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        strokes.push(cur);
    }
    strokes
}

/// Horizontal extent of a stroke.
fn x_extent(stroke: &[(Point, bool)]) -> (f64, f64) {
    stroke.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (p, _)| {
        (lo.min(p[0]), hi.max(p[0]))
    })
}

/// Moves delayed strokes to their left-to-right position.
///
/// Stroke `b` must precede stroke `a` when `max_x(b) < min_x(a)`. Any other
/// pair keeps its temporal order (stable topological sort). Idempotent.
pub fn reorder_delayed_strokes(sample: &StrokeSequence) -> Result<StrokeSequence> {
    let abs = sample.absolute([0.0, 0.0]);
    let eoc = sample.eoc.clone();
    // Absolute points with their eoc flag; the origin's flag is always false.
    let mut strokes: Vec<Vec<(Point, bool)>> = Vec::new();
    let mut cur = vec![(abs[0], false)];
    for (i, p) in sample.points.iter().enumerate() {
        let flag = eoc.as_ref().is_some_and(|e| e[i]);
        cur.push((abs[i + 1], flag));
        if p.eos {
            strokes.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        strokes.push(cur);
    }

    let extents: Vec<(f64, f64)> = strokes.iter().map(|s| x_extent(s)).collect();
    let n = strokes.len();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let next = (0..n)
            .find(|&a| {
                !placed[a]
                    && (0..n).all(|b| b == a || placed[b] || extents[b].1 >= extents[a].0)
            })
            .expect("strict interval order is acyclic");
        placed[next] = true;
        order.push(next);
    }
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return Ok(sample.clone());
    }

    let reordered: Vec<&Vec<(Point, bool)>> = order.iter().map(|&i| &strokes[i]).collect();
    let mut points = Vec::with_capacity(sample.points.len());
    let mut flags = Vec::with_capacity(sample.points.len());
    let mut prev = reordered[0][0].0;
    let mut carried = reordered[0][0].1;
    let open_tail = !sample.points[sample.points.len() - 1].eos;
    for (s, stroke) in reordered.iter().enumerate() {
        let skip = usize::from(s == 0);
        let is_last = s + 1 == reordered.len();
        for (i, &(p, f)) in stroke.iter().enumerate().skip(skip) {
            let end = i + 1 == stroke.len() && !(is_last && open_tail);
            points.push(StrokePoint::new(p[0] - prev[0], p[1] - prev[1], end));
            flags.push(f || std::mem::take(&mut carried));
            prev = p;
        }
    }
    StrokeSequence::new(
        sample.writer_id.clone(),
        sample.text.clone(),
        points,
        eoc.map(|_| flags),
    )
}
