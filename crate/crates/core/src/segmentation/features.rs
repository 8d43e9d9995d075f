//! Per-point features for alignment.
//!
//! Row `t` describes point `t` (the end of delta row `t`). Columns:
//!
//! | idx | feature |
//! |-----|---------|
//! | 0, 1 | dx, dy divided by the mean nonzero step length |
//! | 2 | step length, same normalization |
//! | 3, 4 | sin, cos of the writing direction |
//! | 5, 6 | sin(turn), 1 - cos(turn) relative to the previous step |
//! | 7 | pen-up move (previous point ended a stroke) |
//! | 8 | end of stroke |
//! | 9 | x from the sample's left edge / height |
//! | 10 | y from the estimated baseline / height (negative is above) |
//! | 11, 12 | x, y within the stroke bounding box, in [0, 1] |
//! | 13, 14 | stroke width, height / height |
//! | 15 | vicinity aspect (dy - dx) / (dy + dx) over a 5-point window |
//! | 16, 17 | sin, cos of the vicinity chord |
//! | 18 | vicinity curliness: path length / max extent - 2 |
//! | 19 | vicinity linearity: mean squared distance to the chord / height² |
//! | 20, 21, 22 | ascender, descender, core band indicators |
//!
//! "height" is the distance between the estimated core-band top and the
//! baseline (quartiles of y), floored by the mean step length.

use crate::data::StrokeSequence;
use crate::numeric::Tensor;

pub const NUM_FEATURES: usize = 23;
/// Half-width of the vicinity window.
pub const VICINITY: usize = 2;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn unit(dx: f64, dy: f64) -> (f64, f64) {
    let n = dx.hypot(dy);
    if n > 0.0 {
        (dy / n, dx / n)
    } else {
        (0.0, 0.0)
    }
}

pub fn extract_features(x: &StrokeSequence) -> Tensor {
    let n = x.len();
    let abs = x.absolute([0.0, 0.0]);
    let pts = &abs[1..];

    let steps: Vec<f64> = x.points.iter().map(|p| p.dx.hypot(p.dy)).filter(|&l| l > 0.0).collect();
    let step = if steps.is_empty() {
        1.0
    } else {
        steps.iter().sum::<f64>() / steps.len() as f64
    };

    let mut ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
    ys.sort_by(f64::total_cmp);
    let top = quantile(&ys, 0.25);
    let baseline = quantile(&ys, 0.75);
    let height = (baseline - top).max(step);
    let margin = 0.25 * height;
    let x_min = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);

    // stroke id and bounding box of every point (origin belongs to stroke 0)
    let mut stroke_of = vec![0usize; n];
    let mut boxes: Vec<[f64; 4]> = vec![[abs[0][0], abs[0][1], abs[0][0], abs[0][1]]];
    let mut sid = 0;
    for t in 0..n {
        if t > 0 && x.points[t - 1].eos {
            sid += 1;
            boxes.push([pts[t][0], pts[t][1], pts[t][0], pts[t][1]]);
        }
        stroke_of[t] = sid;
        let b = &mut boxes[sid];
        b[0] = b[0].min(pts[t][0]);
        b[1] = b[1].min(pts[t][1]);
        b[2] = b[2].max(pts[t][0]);
        b[3] = b[3].max(pts[t][1]);
    }

    let mut f = Tensor::zeros(n, NUM_FEATURES);
    for t in 0..n {
        let p = x.points[t];
        let row = f.row_mut(t);
        row[0] = p.dx / step;
        row[1] = p.dy / step;
        row[2] = p.dx.hypot(p.dy) / step;
        let (s, c) = unit(p.dx, p.dy);
        row[3] = s;
        row[4] = c;
        if t > 0 {
            let q = x.points[t - 1];
            let (na, nb) = (q.dx.hypot(q.dy), p.dx.hypot(p.dy));
            if na > 0.0 && nb > 0.0 {
                let cross = (q.dx * p.dy - q.dy * p.dx) / (na * nb);
                let dot = (q.dx * p.dx + q.dy * p.dy) / (na * nb);
                row[5] = cross;
                row[6] = 1.0 - dot;
            }
            row[7] = f64::from(u8::from(q.eos));
        }
        row[8] = f64::from(u8::from(p.eos));
        let [px, py] = pts[t];
        row[9] = (px - x_min) / height;
        row[10] = (py - baseline) / height;
        let b = boxes[stroke_of[t]];
        let (w, h) = (b[2] - b[0], b[3] - b[1]);
        row[11] = if w > 0.0 { (px - b[0]) / w } else { 0.5 };
        row[12] = if h > 0.0 { (py - b[1]) / h } else { 0.5 };
        row[13] = w / height;
        row[14] = h / height;

        let lo = t.saturating_sub(VICINITY);
        let hi = (t + VICINITY).min(n - 1);
        let win = &pts[lo..=hi];
        let (wx0, wx1) = win.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p[0]), a.1.max(p[0])));
        let (wy0, wy1) = win.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p[1]), a.1.max(p[1])));
        let (ex, ey) = (wx1 - wx0, wy1 - wy0);
        row[15] = if ex + ey > 0.0 { (ey - ex) / (ey + ex) } else { 0.0 };
        let (first, last) = (win[0], win[win.len() - 1]);
        let (cdx, cdy) = (last[0] - first[0], last[1] - first[1]);
        let (cs, cc) = unit(cdx, cdy);
        row[16] = cs;
        row[17] = cc;
        let path: f64 = win.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum();
        let ext = ex.max(ey);
        row[18] = if ext > 0.0 { (path / ext - 2.0).min(10.0) } else { 0.0 };
        let chord = cdx.hypot(cdy);
        row[19] = if chord > 0.0 {
            win.iter()
                .map(|p| ((p[0] - first[0]) * cdy - (p[1] - first[1]) * cdx) / chord)
                .map(|d| d * d)
                .sum::<f64>()
                / (win.len() as f64 * height * height)
        } else {
            0.0
        };
        let (asc, desc) = (py < top - margin, py > baseline + margin);
        row[20] = f64::from(u8::from(asc));
        row[21] = f64::from(u8::from(desc));
        row[22] = f64::from(u8::from(!asc && !desc));
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{delta_encode, StrokeSequence};

    fn seq(strokes: &[Vec<[f64; 2]>]) -> StrokeSequence {
        StrokeSequence::new("w", "", delta_encode(strokes).unwrap(), None).unwrap()
    }

    #[test]
    fn shape_and_finiteness() {
        for n in 2..12 {
            let s = seq(&[(0..n).map(|i| [i as f64, (i as f64).sin()]).collect()]);
            let f = extract_features(&s);
            assert_eq!(f.dims(), (n - 1, NUM_FEATURES));
            assert!(f.is_finite());
        }
    }

    #[test]
    fn straight_line_has_no_curvature() {
        let s = seq(&[(0..8).map(|i| [2.0 * i as f64, i as f64]).collect()]);
        let f = extract_features(&s);
        for t in 0..f.rows() {
            assert!(f.get(t, 5).abs() < 1e-15);
            assert!(f.get(t, 6).abs() < 1e-15);
        }
    }

    #[test]
    fn vicinity_slope_matches_hand_geometry() {
        // origin then 5 points; the window of point 2 spans points 0..=4
        let s = seq(&[vec![[0.0, 0.0], [1.0, 0.0], [2.0, 1.0], [3.0, 1.0], [4.0, 3.0], [5.0, 3.0]]]);
        let f = extract_features(&s);
        // chord from (1,0) to (5,3)
        let angle = 3.0f64.atan2(4.0);
        assert!((f.get(2, 16) - angle.sin()).abs() < 1e-15);
        assert!((f.get(2, 17) - angle.cos()).abs() < 1e-15);
    }

    #[test]
    fn pen_flags() {
        let s = seq(&[vec![[0.0, 0.0], [1.0, 0.0]], vec![[3.0, 0.0], [4.0, 0.0]]]);
        let f = extract_features(&s);
        assert_eq!(f.get(0, 8), 1.0);
        assert_eq!(f.get(1, 7), 1.0);
        assert_eq!(f.get(2, 7), 0.0);
    }
}
