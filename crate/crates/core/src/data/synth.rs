//! Procedural handwriting: per-character polyline templates under per-writer
//! affine style and deformation.
//!
//! Template units: baseline at y = 0, x-height 1, ascenders 1.8, descenders
//! down to -0.7, y pointing up. Canvas output has y pointing down and is
//! scaled by the writer's `scale` (pixels per template unit) as the last
//! operation, so scaling is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::stroke::{Point, StrokePoint, StrokeSequence};
use crate::error::{DsdError, Result};

/// Maximum distance between consecutive resampled template points.
pub const RESAMPLE_STEP: f64 = 0.25;
/// Horizontal advance of a space, in template units.
pub const SPACE_ADVANCE: f64 = 0.45;

/// Characters that have templates.
pub const SYNTH_CHARACTERS: &str = " abcdefghijklmnopqrstuvwxyz";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWriterStyle {
    pub writer_id: String,
    /// Shear angle in radians; positive leans right.
    pub slant: f64,
    /// Pixels per template unit.
    pub scale: f64,
    /// Extra gap between characters, template units.
    pub spacing: f64,
    /// Seed of this writer's fixed per-character deformation.
    pub jitter_seed: u64,
    /// Std of the per-writer control-point deformation, template units.
    pub jitter: f64,
    /// Std of per-sample control-point noise, template units.
    pub noise: f64,
    /// Join consecutive letters without lifting the pen.
    pub cursive: bool,
}

impl SyntheticWriterStyle {
    pub fn plain(writer_id: impl Into<String>) -> Self {
        SyntheticWriterStyle {
            writer_id: writer_id.into(),
            slant: 0.0,
            scale: 1.0,
            spacing: 0.0,
            jitter_seed: 0,
            jitter: 0.0,
            noise: 0.0,
            cursive: false,
        }
    }

    /// A random but plausible writer.
    pub fn random(writer_id: impl Into<String>, rng: &mut impl Rng) -> Self {
        SyntheticWriterStyle {
            writer_id: writer_id.into(),
            slant: rng.random_range(-0.4..0.4),
            scale: rng.random_range(14.0..26.0),
            spacing: rng.random_range(0.05..0.4),
            jitter_seed: rng.random(),
            jitter: 0.07,
            noise: 0.015,
            cursive: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !(self.spacing >= 0.0) || !(self.jitter >= 0.0) || !(self.noise >= 0.0)
        {
            return Err(DsdError::Invalid(format!(
                "style {}: scale must be > 0 and spacing, jitter, noise >= 0",
                self.writer_id
            )));
        }
        if !self.slant.is_finite() || self.slant.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(DsdError::Invalid(format!("style {}: bad slant", self.writer_id)));
        }
        Ok(())
    }
}

/// `n` random writers named `w0..w{n-1}`.
pub fn random_styles(n: usize, seed: u64) -> Vec<SyntheticWriterStyle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| SyntheticWriterStyle::random(format!("w{i}"), &mut rng))
        .collect()
}

/// Control-point polylines of a character (template units, y up) and its advance.
struct Glyph {
    strokes: &'static [&'static [(f64, f64)]],
    advance: f64,
}

macro_rules! glyph {
    ($adv:expr; $([$(($x:expr, $y:expr)),+ $(,)?]),+ $(,)?) => {
        Glyph { strokes: &[$(&[$(($x, $y)),+]),+], advance: $adv }
    };
}

fn glyph(c: char) -> Option<Glyph> {
    Some(match c {
        'a' => glyph!(0.8; [(0.7, 0.8), (0.4, 1.0), (0.1, 0.8), (0.0, 0.4), (0.2, 0.0), (0.5, 0.05), (0.7, 0.4)],
                          [(0.7, 1.0), (0.7, 0.0)]),
        'b' => glyph!(0.75; [(0.0, 1.8), (0.0, 0.0)],
                           [(0.0, 0.6), (0.3, 1.0), (0.6, 0.8), (0.65, 0.3), (0.35, 0.0), (0.0, 0.1)]),
        'c' => glyph!(0.7; [(0.6, 0.85), (0.35, 1.0), (0.05, 0.75), (0.0, 0.35), (0.2, 0.0), (0.45, 0.0), (0.65, 0.15)]),
        'd' => glyph!(0.8; [(0.6, 0.8), (0.3, 1.0), (0.05, 0.75), (0.0, 0.3), (0.25, 0.0), (0.6, 0.2)],
                          [(0.65, 1.8), (0.65, 0.0)]),
        'e' => glyph!(0.75; [(0.05, 0.5), (0.6, 0.55), (0.55, 0.9), (0.3, 1.0), (0.05, 0.75), (0.0, 0.35), (0.2, 0.0), (0.5, 0.0), (0.65, 0.15)]),
        'f' => glyph!(0.6; [(0.6, 1.7), (0.4, 1.8), (0.2, 1.6), (0.2, 0.0)],
                          [(0.0, 1.0), (0.5, 1.0)]),
        'g' => glyph!(0.75; [(0.6, 0.8), (0.3, 1.0), (0.05, 0.75), (0.05, 0.35), (0.3, 0.15), (0.6, 0.35)],
                           [(0.6, 1.0), (0.6, -0.5), (0.35, -0.7), (0.05, -0.55)]),
        'h' => glyph!(0.75; [(0.0, 1.8), (0.0, 0.0)],
                           [(0.0, 0.6), (0.3, 1.0), (0.55, 0.9), (0.6, 0.6), (0.6, 0.0)]),
        'i' => glyph!(0.3; [(0.1, 1.0), (0.1, 0.0)], [(0.1, 1.35), (0.1, 1.42)]),
        'j' => glyph!(0.45; [(0.3, 1.0), (0.3, -0.5), (0.15, -0.7), (0.0, -0.6)], [(0.3, 1.35), (0.3, 1.42)]),
        'k' => glyph!(0.65; [(0.0, 1.8), (0.0, 0.0)], [(0.55, 1.0), (0.0, 0.45), (0.6, 0.0)]),
        'l' => glyph!(0.35; [(0.1, 1.8), (0.1, 0.1), (0.2, 0.0)]),
        'm' => glyph!(1.05; [(0.0, 1.0), (0.0, 0.0), (0.0, 0.7), (0.25, 1.0), (0.45, 0.8), (0.45, 0.0),
                            (0.45, 0.7), (0.7, 1.0), (0.9, 0.8), (0.9, 0.0)]),
        'n' => glyph!(0.75; [(0.0, 1.0), (0.0, 0.0), (0.0, 0.7), (0.3, 1.0), (0.55, 0.85), (0.6, 0.5), (0.6, 0.0)]),
        'o' => glyph!(0.8; [(0.35, 1.0), (0.05, 0.8), (0.0, 0.4), (0.2, 0.0), (0.5, 0.0), (0.7, 0.4), (0.65, 0.8), (0.35, 1.0)]),
        'p' => glyph!(0.75; [(0.0, 1.0), (0.0, -0.7)],
                           [(0.0, 0.7), (0.3, 1.0), (0.6, 0.8), (0.6, 0.3), (0.3, 0.0), (0.0, 0.15)]),
        'q' => glyph!(0.85; [(0.6, 0.8), (0.3, 1.0), (0.05, 0.75), (0.05, 0.3), (0.3, 0.0), (0.6, 0.2)],
                           [(0.6, 1.0), (0.6, -0.7), (0.75, -0.6)]),
        'r' => glyph!(0.55; [(0.0, 1.0), (0.0, 0.0)], [(0.0, 0.6), (0.25, 0.95), (0.5, 1.0)]),
        's' => glyph!(0.65; [(0.55, 0.9), (0.3, 1.0), (0.05, 0.85), (0.1, 0.6), (0.5, 0.4), (0.55, 0.15), (0.3, 0.0), (0.0, 0.1)]),
        't' => glyph!(0.55; [(0.25, 1.6), (0.25, 0.1), (0.4, 0.0)], [(0.0, 1.0), (0.5, 1.0)]),
        'u' => glyph!(0.75; [(0.0, 1.0), (0.0, 0.3), (0.2, 0.0), (0.45, 0.05), (0.6, 0.35)],
                           [(0.6, 1.0), (0.6, 0.0)]),
        'v' => glyph!(0.7; [(0.0, 1.0), (0.3, 0.0), (0.6, 1.0)]),
        'w' => glyph!(1.0; [(0.0, 1.0), (0.2, 0.0), (0.45, 0.7), (0.7, 0.0), (0.9, 1.0)]),
        'x' => glyph!(0.7; [(0.0, 1.0), (0.6, 0.0)], [(0.6, 1.0), (0.0, 0.0)]),
        'y' => glyph!(0.7; [(0.0, 1.0), (0.3, 0.1)], [(0.6, 1.0), (0.2, -0.5), (0.0, -0.7)]),
        'z' => glyph!(0.7; [(0.0, 1.0), (0.6, 1.0), (0.0, 0.0), (0.6, 0.0)]),
        _ => return None,
    })
}

pub fn has_template(c: char) -> bool {
    c == ' ' || glyph(c).is_some()
}

/// Inserts evenly spaced points so no segment exceeds `step`.
fn resample(poly: &[Point], step: f64) -> Vec<Point> {
    let mut out = vec![poly[0]];
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let n = ((len / step).ceil() as usize).max(1);
        for k in 1..=n {
            let t = k as f64 / n as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Resampled template strokes of `c` in canvas orientation (y down), at
/// scale 1 and with no style applied.
pub fn template_strokes(c: char) -> Option<Vec<Vec<Point>>> {
    let g = glyph(c)?;
    Some(
        g.strokes
            .iter()
            .map(|s| {
                let poly: Vec<Point> = s.iter().map(|&(x, y)| [x, -y]).collect();
                resample(&poly, RESAMPLE_STEP)
            })
            .collect(),
    )
}

fn gaussian(rng: &mut impl Rng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    std * rng.sample::<f64, _>(StandardNormal)
}

/// One absolute canvas point with its flags, before delta encoding.
struct Pen {
    p: Point,
    eos: bool,
    eoc: bool,
}

/// Renders `text` in `style`. `noise_rng` drives the per-sample noise only.
pub fn synth_sample(style: &SyntheticWriterStyle, text: &str, noise_rng: &mut impl Rng) -> Result<StrokeSequence> {
    style.validate()?;
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Err(DsdError::Empty("text".into()));
    }
    if chars[0] == ' ' || chars[chars.len() - 1] == ' ' {
        return Err(DsdError::Invalid("text must not start or end with a space".into()));
    }
    for &c in &chars {
        if !has_template(c) {
            return Err(DsdError::UnknownCharacter(c));
        }
    }
    let shear = style.slant.tan();
    // y is flipped here; scale is applied last.
    let place = |x: f64, y: f64| -> Point { [(x + shear * y) * style.scale, -y * style.scale] };

    let mut pen: Vec<Pen> = Vec::new();
    let mut cursor = 0.0;
    for (ci, &c) in chars.iter().enumerate() {
        if c == ' ' {
            pen.push(Pen {
                p: place(cursor + 0.5 * SPACE_ADVANCE, 0.0),
                eos: true,
                eoc: true,
            });
            cursor += SPACE_ADVANCE + style.spacing;
            continue;
        }
        let g = glyph(c).expect("checked above");
        let mut jitter_rng = ChaCha8Rng::seed_from_u64(style.jitter_seed);
        jitter_rng.set_stream(u64::from(c));
        let ns = g.strokes.len();
        for (si, stroke) in g.strokes.iter().enumerate() {
            let poly: Vec<Point> = stroke
                .iter()
                .map(|&(x, y)| {
                    let jx = gaussian(&mut jitter_rng, style.jitter);
                    let jy = gaussian(&mut jitter_rng, style.jitter);
                    let nx = gaussian(noise_rng, style.noise);
                    let ny = gaussian(noise_rng, style.noise);
                    [x + jx + nx, y + jy + ny]
                })
                .collect();
            let pts = resample(&poly, RESAMPLE_STEP);
            let last_stroke = si + 1 == ns;
            let joins_next = style.cursive
                && last_stroke
                && chars.get(ci + 1).is_some_and(|&n| n != ' ');
            let np = pts.len();
            for (k, q) in pts.into_iter().enumerate() {
                let end = k + 1 == np;
                pen.push(Pen {
                    p: place(cursor + q[0], q[1]),
                    eos: end && !joins_next,
                    eoc: end && last_stroke,
                });
            }
        }
        cursor += g.advance + style.spacing;
    }
    let points = pen
        .windows(2)
        .map(|w| StrokePoint::new(w[1].p[0] - w[0].p[0], w[1].p[1] - w[0].p[1], w[1].eos))
        .collect();
    let eoc = pen[1..].iter().map(|q| q.eoc).collect();
    StrokeSequence::new(style.writer_id.clone(), text, points, Some(eoc))
}

/// One sample per (style, word), writers outermost. Each sample draws its
/// noise from its own stream, so the corpus is reproducible per seed.
pub fn synth_corpus(styles: &[SyntheticWriterStyle], words: &[&str], rng_seed: u64) -> Result<Vec<StrokeSequence>> {
    if styles.is_empty() || words.is_empty() {
        return Err(DsdError::Empty("styles and words must be nonempty".into()));
    }
    let mut out = Vec::with_capacity(styles.len() * words.len());
    for (si, style) in styles.iter().enumerate() {
        for (wi, word) in words.iter().enumerate() {
            out.push(synth_sample(style, word, &mut sample_rng(rng_seed, si, wi))?);
        }
    }
    Ok(out)
}

/// `n` random lowercase strings of length `1..=max_len`, written by
/// `styles` in rotation. Unlike dictionary words these cannot be recognized
/// as wholes, which keeps alignment training from collapsing onto word
/// identity.
pub fn random_letter_corpus(
    styles: &[SyntheticWriterStyle],
    n: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<StrokeSequence>> {
    if styles.is_empty() || max_len == 0 {
        return Err(DsdError::Empty("styles and max_len must be nonempty".into()));
    }
    let letters: Vec<char> = SYNTH_CHARACTERS.chars().filter(|c| *c != ' ').collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=max_len);
            let text: String = (0..len).map(|_| letters[rng.random_range(0..letters.len())]).collect();
            synth_sample(&styles[i % styles.len()], &text, &mut rng)
        })
        .collect()
}

/// Noise stream of sample `(writer, word)` under `seed`.
pub fn sample_rng(seed: u64, writer: usize, word: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((writer as u64) << 32) | word as u64);
    rng
}

/// Common lowercase words built only from templated characters.
pub const WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "it", "you", "that", "he", "was", "for", "on", "are",
    "with", "as", "his", "they", "be", "at", "one", "have", "this", "from", "or", "had", "by",
    "hot", "word", "but", "what", "some", "we", "can", "out", "other", "were", "all", "there",
    "when", "up", "use", "your", "how", "said", "an", "each", "she", "which", "do", "their",
    "time", "if", "will", "way", "about", "many", "then", "them", "write", "would", "like",
    "so", "these", "her", "long", "make", "thing", "see", "him", "two", "has", "look", "more",
    "day", "could", "go", "come", "did", "number", "sound", "no", "most", "people", "my",
    "over", "know", "water", "than", "call", "first", "who", "may", "down", "side", "been",
    "now", "find", "any", "new", "work", "part", "take", "get", "place", "made", "live",
    "where", "after", "back", "little", "only", "round", "man", "year", "came", "show",
    "every", "good", "me", "give", "our", "under", "name", "very", "through", "just", "form",
    "much", "great", "think", "say", "help", "low", "line", "before", "turn", "cause", "same",
    "mean", "differ", "move", "right", "boy", "old", "too", "does", "tell", "sentence", "set",
    "three", "want", "air", "well", "also", "play", "small", "end", "put", "home", "read",
    "hand", "port", "large", "spell", "add", "even", "land", "here", "must", "big", "high",
    "such", "follow", "act", "why", "ask", "men", "change", "went", "light", "kind", "off",
    "need", "house", "picture", "try", "us", "again", "animal", "point", "mother", "world",
    "near", "build", "self", "earth", "father", "head", "stand", "own", "page", "should",
    "country", "found", "answer", "school", "grow", "study", "still", "learn", "plant",
    "cover", "food", "sun", "four", "thought", "let", "keep", "eye", "never", "last", "door",
    "between", "city", "tree", "cross", "since", "hard", "start", "might", "story", "saw",
    "far", "sea", "draw", "left", "late", "run", "while", "press", "close", "night", "real",
    "life", "few", "stop", "open", "seem", "together", "next", "white", "children", "begin",
    "got", "walk", "example", "ease", "paper", "often", "always", "music", "those", "both",
    "mark", "book", "letter", "until", "mile", "river", "car", "feet", "care", "second",
    "group", "carry", "took", "rain", "eat", "room", "friend", "began", "idea", "fish",
    "mountain", "north", "once", "base", "hear", "horse", "cut", "sure", "watch", "color",
    "face", "wood", "main", "enough", "plain", "girl", "usual", "young", "ready", "above",
    "ever", "red", "list", "though", "feel", "talk", "bird", "soon", "body", "dog", "family",
    "direct", "pose", "leave", "song", "measure", "state", "product", "black", "short",
    "numeral", "class", "wind", "question", "happen", "complete", "ship", "area", "half",
    "rock", "order", "fire", "south", "problem", "piece", "told", "knew", "pass", "farm",
    "top", "whole", "king", "size", "heard", "best", "hour", "better", "true", "during",
    "hundred", "am", "remember", "step", "early", "hold", "west", "ground", "interest",
    "reach", "fast", "five", "sing", "listen", "six", "table", "travel", "less", "morning",
    "ten", "simple", "several", "vowel", "toward", "war", "lay", "against", "pattern", "slow",
    "center", "love", "person", "money", "serve", "appear", "road", "map", "science", "rule",
    "govern", "pull", "cold", "notice", "voice", "fall", "power", "town", "fine", "certain",
    "fly", "unit", "lead", "cry", "dark", "machine", "note", "wait", "plan", "figure", "star",
    "box", "noun", "field", "rest", "correct", "able", "pound", "done", "beauty", "drive",
    "stood", "contain", "front", "teach", "week", "final", "gave", "green", "oh", "quick",
    "develop", "sleep", "warm", "free", "minute", "strong", "special", "mind", "behind",
    "clear", "tail", "produce", "fact", "street", "inch", "lot", "nothing", "course", "stay",
    "wheel", "full", "force", "blue", "object", "decide", "surface", "deep", "moon", "island",
    "foot", "yet", "busy", "test", "record", "boat", "common", "gold", "possible", "plane",
    "age", "dry", "wonder", "laugh", "thousand", "ago", "ran", "check", "game", "shape",
    "yes", "hot", "miss", "brought", "heat", "snow", "bed", "bring", "sit", "perhaps", "fill",
    "east", "weight", "language", "among", "thin", "jazz", "quiz", "jump", "zero", "vex",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::stroke::delta_encode;

    #[test]
    fn every_word_is_templated() {
        for w in WORDS {
            assert!(w.chars().all(has_template), "{w}");
        }
        for c in SYNTH_CHARACTERS.chars() {
            assert!(has_template(c));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let styles = random_styles(3, 5);
        let a = synth_corpus(&styles, &["his", "thin"], 9).unwrap();
        let b = synth_corpus(&styles, &["his", "thin"], 9).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&styles, &["his", "thin"], 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scale_two_doubles_deltas_exactly() {
        let mut s1 = random_styles(1, 3).remove(0);
        s1.scale = 1.0;
        let mut s2 = s1.clone();
        s2.scale = 2.0;
        let a = synth_corpus(&[s1], &["quiz jump"], 4).unwrap();
        let b = synth_corpus(&[s2], &["quiz jump"], 4).unwrap();
        assert_eq!(a[0].len(), b[0].len());
        for (p, q) in a[0].points.iter().zip(&b[0].points) {
            assert_eq!(q.dx, 2.0 * p.dx);
            assert_eq!(q.dy, 2.0 * p.dy);
            assert_eq!(p.eos, q.eos);
        }
    }

    #[test]
    fn identity_style_reproduces_template_deltas() {
        for c in "abcxyz".chars() {
            let s = synth_sample(&SyntheticWriterStyle::plain("p"), &c.to_string(), &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap();
            let expect = delta_encode(&template_strokes(c).unwrap()).unwrap();
            assert_eq!(s.points, expect, "{c}");
        }
    }

    #[test]
    fn labels_cover_characters_in_order() {
        let s = synth_sample(&random_styles(1, 1)[0], "the cat", &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let spans = s.char_spans().unwrap();
        assert_eq!(spans.len(), 7);
        assert_eq!(spans[3].1 - spans[3].0, 1);
        assert!(s.points[spans[3].0].eos);
    }

    #[test]
    fn cursive_style_has_no_lift_between_letters() {
        let mut st = SyntheticWriterStyle::plain("c");
        st.cursive = true;
        let s = synth_sample(&st, "nu", &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let e = s.eoc_indices().unwrap();
        assert!(!s.points[e[0]].eos);
    }

    #[test]
    fn rejects_unknown_characters() {
        let st = SyntheticWriterStyle::plain("p");
        assert!(matches!(
            synth_sample(&st, "aB", &mut ChaCha8Rng::seed_from_u64(0)),
            Err(DsdError::UnknownCharacter('B'))
        ));
    }
}
