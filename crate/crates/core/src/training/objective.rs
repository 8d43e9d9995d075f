use std::fmt;

use super::losses::{w_consistency_graph, wct_graph};
use crate::data::StrokeSequence;
use crate::error::Result;
use crate::model::{mat_vec_graph, mdn_losses, DsdModel, Targets};
use crate::numeric::{Bound, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Char,
    Word,
    Sentence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Decoder conditioned on the encoder's own DSDs.
    Enc,
    /// `C_t w̄`.
    Alpha,
    /// Restorer over per-character segment DSDs.
    Beta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Loc,
    Eos,
    Eoc,
    W,
    Wct,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Char, Level::Word, Level::Sentence];
    pub fn name(self) -> &'static str {
        match self {
            Level::Char => "char",
            Level::Word => "word",
            Level::Sentence => "sentence",
        }
    }
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Enc, Method::Alpha, Method::Beta];
    pub fn name(self) -> &'static str {
        match self {
            Method::Enc => "enc",
            Method::Alpha => "alpha",
            Method::Beta => "beta",
        }
    }
}

impl Term {
    pub const ALL: [Term; 5] = [Term::Loc, Term::Eos, Term::Eoc, Term::W, Term::Wct];
    pub fn name(self) -> &'static str {
        match self {
            Term::Loc => "loc",
            Term::Eos => "eos",
            Term::Eoc => "eoc",
            Term::W => "w",
            Term::Wct => "wct",
        }
    }
}

/// Identifies one loss component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LossKey {
    pub level: Level,
    pub method: Method,
    pub term: Term,
}

impl fmt::Display for LossKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.level.name(), self.method.name(), self.term.name())
    }
}

/// Switches that remove loss components and the subgraphs only they use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Drops the decoder and consistency terms of the encoder path.
    pub disable_lf_enc: bool,
    pub disable_lalpha: bool,
    pub disable_lbeta: bool,
    /// Drops every `wct` term.
    pub disable_wct_rec: bool,
}

impl Ablation {
    pub fn enabled(&self, method: Method, term: Term) -> bool {
        let path = match method {
            Method::Enc => !self.disable_lf_enc,
            Method::Alpha => !self.disable_lalpha,
            Method::Beta => !self.disable_lbeta,
        };
        path && !(term == Term::Wct && self.disable_wct_rec)
    }

    /// Parses a comma-separated list of `Lf_enc`, `Lalpha`, `Lbeta`,
    /// `wct_rec`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut a = Ablation::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "Lf_enc" => a.disable_lf_enc = true,
                "Lalpha" => a.disable_lalpha = true,
                "Lbeta" => a.disable_lbeta = true,
                "wct_rec" => a.disable_wct_rec = true,
                other => {
                    return Err(crate::DsdError::Invalid(format!(
                        "unknown ablation {other:?} (expected Lf_enc, Lalpha, Lbeta, wct_rec)"
                    )))
                }
            }
        }
        Ok(a)
    }
}

/// Values of every enabled component and their sum.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    /// Sorted by key; absent keys are disabled.
    pub terms: Vec<(LossKey, f64)>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, level: Level, method: Method, term: Term) -> Option<f64> {
        let key = LossKey { level, method, term };
        self.terms.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    pub fn level_sum(&self, level: Level) -> f64 {
        self.terms.iter().filter(|(k, _)| k.level == level).map(|(_, v)| v).sum()
    }

    pub fn method_sum(&self, method: Method) -> f64 {
        self.terms.iter().filter(|(k, _)| k.method == method).map(|(_, v)| v).sum()
    }

    pub fn has_method(&self, method: Method) -> bool {
        self.terms.iter().any(|(k, _)| k.method == method)
    }
}

/// Loss components on the tape; summed per key over the batch.
pub struct LossGraph {
    pub terms: Vec<(LossKey, Var)>,
    pub total: Var,
}

impl LossGraph {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        LossBreakdown {
            terms: self.terms.iter().map(|(k, v)| (*k, g.value(*v).item())).collect(),
            total: g.value(self.total).item(),
        }
    }
}

struct Accumulator {
    terms: Vec<(LossKey, Var)>,
}

impl Accumulator {
    fn add(&mut self, g: &mut Graph, key: LossKey, v: Var) -> Result<()> {
        match self.terms.iter_mut().find(|(k, _)| *k == key) {
            Some((_, acc)) => *acc = g.add(*acc, v)?,
            None => self.terms.push((key, v)),
        }
        Ok(())
    }
}

/// A contiguous character range of one sentence sample.
struct View {
    sample: StrokeSequence,
    /// Character range in the sentence.
    range: (usize, usize),
    levels: Vec<Level>,
}

/// Sentence, word and character views of a sample. Words are maximal runs
/// of non-space characters; a sentence that is a single word yields one
/// view counted at both levels.
fn views(x: &StrokeSequence) -> Result<Vec<View>> {
    let chars: Vec<char> = x.text.chars().collect();
    let m = chars.len();
    let mut words = Vec::new();
    let mut start = None;
    for (i, &c) in chars.iter().enumerate() {
        match (c == ' ', start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                words.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push((s, m));
    }
    let mut out = Vec::new();
    if words == [(0, m)] {
        out.push(View {
            sample: x.clone(),
            range: (0, m),
            levels: vec![Level::Sentence, Level::Word],
        });
    } else {
        out.push(View {
            sample: x.clone(),
            range: (0, m),
            levels: vec![Level::Sentence],
        });
        for &(a, b) in &words {
            out.push(View {
                sample: x.crop_chars(a, b)?,
                range: (a, b),
                levels: vec![Level::Word],
            });
        }
    }
    for (i, &c) in chars.iter().enumerate() {
        if c != ' ' {
            out.push(View {
                sample: x.crop_chars(i, i + 1)?,
                range: (i, i + 1),
                levels: vec![Level::Char],
            });
        }
    }
    Ok(out)
}

fn targets(model: &DsdModel, x: &StrokeSequence) -> Result<Targets> {
    let f = model.point_features(x);
    let n = x.len();
    let eoc = x.eoc.as_ref().ok_or_else(|| crate::DsdError::Invalid("sample has no eoc labels".into()))?;
    Ok(Targets {
        dx: (0..n).map(|i| f.get(i, 0)).collect(),
        dy: (0..n).map(|i| f.get(i, 1)).collect(),
        eos: (0..n).map(|i| f.get(i, 2)).collect(),
        eoc: eoc.iter().map(|&e| f64::from(u8::from(e))).collect(),
    })
}

/// Builds the full objective for a batch of sentence samples.
pub fn total_loss_graph(
    model: &DsdModel,
    g: &mut Graph,
    p: &Bound,
    batch: &[StrokeSequence],
    ablation: &Ablation,
) -> Result<LossGraph> {
    let mut acc = Accumulator { terms: Vec::new() };
    for x in batch {
        sample_terms(model, g, p, x, ablation, &mut acc)?;
    }
    acc.terms.sort_by_key(|(k, _)| *k);
    let total = match acc.terms.split_first() {
        None => g.constant(Tensor::scalar(0.0)),
        Some(((_, first), rest)) => {
            let mut t = *first;
            for (_, v) in rest {
                t = g.add(t, *v)?;
            }
            t
        }
    };
    Ok(LossGraph { terms: acc.terms, total })
}

/// Evaluates the objective without recording gradients.
pub fn total_loss(model: &DsdModel, batch: &[StrokeSequence], ablation: &Ablation) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let p = model.store.bind(&mut g, false);
    let lg = total_loss_graph(model, &mut g, &p, batch, ablation)?;
    Ok(lg.breakdown(&g))
}

fn last_row(g: &mut Graph, v: Var) -> Var {
    let n = g.value(v).rows();
    g.row(v, n - 1)
}

fn sample_terms(
    model: &DsdModel,
    g: &mut Graph,
    p: &Bound,
    x: &StrokeSequence,
    ab: &Ablation,
    acc: &mut Accumulator,
) -> Result<()> {
    let chars = model.char_indices(&x.text)?;
    let m = chars.len();
    let need_beta = !ab.disable_lbeta;
    // Segment DSD of every character: encoder over that character alone.
    let mut segs: Vec<Option<Var>> = vec![None; m];
    let text: Vec<char> = x.text.chars().collect();
    for t in 0..m {
        if need_beta || text[t] != ' ' {
            let crop = x.crop_chars(t, t + 1)?;
            let h = model.enc_states_graph(g, p, model.point_features(&crop))?;
            segs[t] = Some(last_row(g, h));
        }
    }

    for view in views(x)? {
        let (a, b) = view.range;
        let v = &view.sample;
        let w_enc = if b - a == 1 {
            segs[a].expect("character segment")
        } else {
            model.enc_graph(g, p, v)?
        };
        let cs = model.char_graph(g, p, &chars[a..b])?;
        let mut inv = Vec::with_capacity(cs.len());
        for &c in &cs {
            inv.push(g.inverse(c)?);
        }
        let candidates = |g: &mut Graph, w: Var| -> Result<Var> {
            let rows = inv
                .iter()
                .enumerate()
                .map(|(t, &ci)| {
                    let wt = g.row(w, t);
                    mat_vec_graph(g, ci, wt)
                })
                .collect::<Result<Vec<_>>>()?;
            g.concat_rows(&rows)
        };
        let cand_enc = candidates(g, w_enc)?;
        let w_bar = g.mean_rows(cand_enc);

        let spans = v.char_spans()?;
        let per_point: Vec<usize> = spans
            .iter()
            .enumerate()
            .flat_map(|(i, s)| std::iter::repeat_n(i, s.1 - s.0))
            .collect();
        let tg = targets(model, v)?;
        let dec_points = model.dec_points_graph(g, p, model.teacher_inputs(v))?;

        let mut paths: Vec<(Method, Var, Var)> = Vec::new();
        if !ab.disable_lf_enc {
            paths.push((Method::Enc, w_enc, cand_enc));
        }
        if !ab.disable_lalpha {
            let rows = cs.iter().map(|&c| mat_vec_graph(g, c, w_bar)).collect::<Result<Vec<_>>>()?;
            let w_a = g.concat_rows(&rows)?;
            let cand = candidates(g, w_a)?;
            paths.push((Method::Alpha, w_a, cand));
        }
        if need_beta {
            let seg_rows: Vec<Var> = segs[a..b].iter().map(|s| s.expect("segment")).collect();
            let s = g.concat_rows(&seg_rows)?;
            let w_b = model.restore_graph(g, p, s)?;
            let cand = candidates(g, w_b)?;
            paths.push((Method::Beta, w_b, cand));
        }

        for (method, w, cand) in paths {
            let wp = g.gather_rows(w, &per_point);
            let out = model.dec_cond_graph(g, p, dec_points, wp)?;
            let (loc, eos, eoc) = mdn_losses(g, out, model.config.mixtures, &tg)?;
            let lw = w_consistency_graph(g, cand)?;
            let mut items = vec![(Term::Loc, loc), (Term::Eos, eos), (Term::Eoc, eoc), (Term::W, lw)];
            if ab.enabled(method, Term::Wct) {
                let wct = if method == Method::Enc {
                    g.constant(Tensor::scalar(0.0))
                } else {
                    wct_graph(g, w_enc, w)?
                };
                items.push((Term::Wct, wct));
            }
            for level in &view.levels {
                for &(term, var) in &items {
                    acc.add(
                        g,
                        LossKey {
                            level: *level,
                            method,
                            term,
                        },
                        var,
                    )?;
                }
            }
        }
    }
    Ok(())
}
