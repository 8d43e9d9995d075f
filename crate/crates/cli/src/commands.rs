use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use dsd_core::applications::{
    audit_invertibility, estimate_new_character, generate, identify_writer, interpolate_char_bilinear, interpolate_wcts,
    interpolate_writer, sample_wcts, Codebook, DsdDatabase, NewCharMode, Query, SegmentSource,
};
use dsd_core::data::dataset::ingest_absolute;
use dsd_core::data::synth::{random_styles, WORDS};
use dsd_core::data::{delta_std, load_dataset, save_dataset, synth_corpus, Alphabet, OnInvalid, StrokeSequence};
use dsd_core::model::{mat_vec, DecodeOptions, DsdConfig, DsdModel};
use dsd_core::render::{render_grid, render_svg, RenderSpec};
use dsd_core::segmentation::{train_segmenter, SegNet, SegNetConfig, SegTrainConfig};
use dsd_core::training::{train, Ablation, TrainConfig};

use crate::config::Settings;
use crate::{
    AuditArgs, Command, GenerateArgs, IdentifyArgs, IngestArgs, InterpArgs, NewcharArgs, PartialOutput, RenderArgs,
    SegmentArgs, SynthArgs, TrainArgs, UsageError,
};

pub fn dispatch(cmd: Command, s: &Settings) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(a, s),
        Command::SynthData(a) => synth_data(a, s),
        Command::Segment(a) => segment(a, s),
        Command::Train(a) => train_cmd(a, s),
        Command::Generate(a) => generate_cmd(a, s),
        Command::Interp(a) => interp(a, s),
        Command::Newchar(a) => newchar(a, s),
        Command::Identify(a) => identify(a, s),
        Command::Audit(a) => audit(a, s),
        Command::Render(a) => render(a, s),
    }
}

fn load(path: &Path) -> Result<Vec<StrokeSequence>> {
    let report = load_dataset(path, OnInvalid::Skip).with_context(|| format!("reading {}", path.display()))?;
    for (line, msg) in &report.rejected {
        eprintln!("warning: {}:{line}: skipped: {msg}", path.display());
    }
    for w in &report.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    if report.samples.is_empty() {
        bail!("{} contains no valid samples", path.display());
    }
    Ok(report.samples)
}

fn load_model(path: &Path) -> Result<DsdModel> {
    DsdModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: Option<&PathBuf>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => write_text(p, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn decode_options(s: &Settings, max_steps: Option<usize>, temperature: Option<f64>) -> Result<DecodeOptions> {
    let d = DecodeOptions::default();
    Ok(DecodeOptions {
        max_steps: s.or("max-steps", max_steps, d.max_steps)?,
        temperature: s.or("temperature", temperature, d.temperature)?,
    })
}

fn ingest(a: IngestArgs, s: &Settings) -> Result<()> {
    let input: PathBuf = s.req("input", a.input)?;
    let output: PathBuf = s.req("output", a.output)?;
    let policy = if s.or("fail-fast", a.fail_fast, false)? { OnInvalid::FailFast } else { OnInvalid::Skip };
    let file = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
    let report = ingest_absolute(file, s.or("reorder", a.reorder, false)?, policy)?;
    for (line, msg) in &report.rejected {
        eprintln!("warning: {}:{line}: skipped: {msg}", input.display());
    }
    save_dataset(&output, &report.samples)?;
    println!("ingested {} samples, skipped {}", report.samples.len(), report.rejected.len());
    Ok(())
}

fn synth_data(a: SynthArgs, s: &Settings) -> Result<()> {
    let writers = s.or("writers", a.writers, 8)?;
    let words = s.or("words", a.words, 40)?;
    let seed = s.or("seed", a.seed, 0)?;
    let output: PathBuf = s.req("output", a.output)?;
    if writers == 0 || words == 0 || words > WORDS.len() {
        return Err(UsageError(format!("--writers must be positive and --words in 1..={}", WORDS.len())).into());
    }
    let mut styles = random_styles(writers, seed);
    if s.or("cursive", a.cursive, false)? {
        styles.iter_mut().for_each(|st| st.cursive = true);
    }
    let data = synth_corpus(&styles, &WORDS[..words], seed)?;
    save_dataset(&output, &data)?;
    println!("wrote {} samples from {writers} writers", data.len());
    Ok(())
}

fn segment(a: SegmentArgs, s: &Settings) -> Result<()> {
    let input: PathBuf = s.req("input", a.input)?;
    let output: PathBuf = s.req("output", a.output)?;
    let data = load(&input)?;
    let net = match s.opt("model", a.model)? {
        Some(dir) => SegNet::load(&dir).with_context(|| format!("loading segmenter {}", dir.display()))?,
        None => {
            let defaults = SegTrainConfig::default();
            let cfg = SegTrainConfig {
                steps: s.or("steps", a.steps, defaults.steps)?,
                seed: s.or("seed", a.seed, defaults.seed)?,
                ..defaults
            };
            let net_cfg = SegNetConfig {
                hidden: s.or("hidden", a.hidden, SegNetConfig::default().hidden)?,
                ..SegNetConfig::default()
            };
            let mut net = SegNet::new(net_cfg, Alphabet::default(), cfg.seed);
            let losses = train_segmenter(&mut net, &data, &cfg)?;
            if let Some(last) = losses.last() {
                println!("segmenter trained for {} steps, final loss {last:.4}", losses.len());
            }
            if let Some(dir) = s.opt::<PathBuf>("save-model", a.save_model)? {
                net.save(&dir)?;
            }
            net
        }
    };
    let labelled = data.iter().map(|x| net.segment(x)).collect::<dsd_core::Result<Vec<_>>>()?;
    save_dataset(&output, &labelled)?;
    println!("segmented {} samples", labelled.len());
    Ok(())
}

fn train_cmd(a: TrainArgs, s: &Settings) -> Result<()> {
    let data_path: PathBuf = s.req("data", a.data)?;
    let out: PathBuf = s.req("out", a.out)?;
    let data = load(&data_path)?;
    let mut cfg = DsdConfig::small(s.or("latent", a.latent, 32)?, s.or("mixtures", a.mixtures, 5)?);
    if let Some(chars) = s.opt::<String>("alphabet", a.alphabet)? {
        cfg.alphabet = Alphabet::new(&chars)?;
    }
    cfg.delta_scale = match s.opt("delta-scale", a.delta_scale)? {
        Some(v) => v,
        None => delta_std(&data),
    };
    let d = TrainConfig::default();
    let ablation = match s.opt::<String>("ablate", a.ablate)? {
        Some(list) => Ablation::parse(&list).map_err(|e| UsageError(e.to_string()))?,
        None => Ablation::default(),
    };
    let tc = TrainConfig {
        learning_rate: s.or("lr", a.lr, d.learning_rate)?,
        batch_size: s.or("batch-size", a.batch_size, d.batch_size)?,
        steps: s.or("steps", a.steps, d.steps)?,
        seed: s.or("seed", a.seed, d.seed)?,
        checkpoint_every: s.or("checkpoint-every", a.checkpoint_every, d.checkpoint_every)?,
        log_every: s.or("log-every", a.log_every, d.log_every)?,
        ablation,
        ..d
    };
    tc.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut model = DsdModel::new(cfg, tc.seed)?;
    println!("model parameters: {}", model.num_params());
    fs::create_dir_all(&out)?;
    let report = train(&mut model, &data, &tc, Some(&out))?;
    if let Some(last) = report.log.last() {
        println!("step {} total {:.4} (window mean {:.4})", last.step, last.total, last.window_mean);
    }
    println!("wrote {} in {:.1}s", out.join("final").display(), report.wall_seconds);
    Ok(())
}

fn reference_db(model: &DsdModel, path: &Path, writer: Option<&str>) -> Result<DsdDatabase> {
    let mut samples = load(path)?;
    if let Some(w) = writer {
        samples.retain(|x| x.writer_id == w);
        if samples.is_empty() {
            bail!("no reference samples for writer {w:?}");
        }
    }
    let db = DsdDatabase::build(model, &samples)?;
    for w in &db.warnings {
        eprintln!("warning: {w}");
    }
    Ok(db)
}

fn generate_cmd(a: GenerateArgs, s: &Settings) -> Result<()> {
    let model = load_model(&s.req::<PathBuf>("model", a.model)?)?;
    let text: String = s.req("text", a.text)?;
    let output: PathBuf = s.req("output", a.output)?;
    let writer = s.opt::<String>("writer", a.writer)?;
    let db = reference_db(&model, &s.req::<PathBuf>("refs", a.refs)?, writer.as_deref())?;
    let opts = decode_options(s, a.max_steps, a.temperature)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.or("seed", a.seed, 0)?);
    let (decoded, sampled) = generate(&model, &db, &text, writer.as_deref().unwrap_or("generated"), &mut rng, opts)?;
    let spec = RenderSpec {
        color_by_char: s.or("color", a.color, false)?,
        ..RenderSpec::default()
    };
    write_text(&output, &render_svg(&decoded.sequence, &spec)?)?;
    if let Some(p) = s.opt::<PathBuf>("strokes", a.strokes)? {
        save_dataset(&p, std::slice::from_ref(&decoded.sequence))?;
    }
    for seg in &sampled.segments {
        let part: String = text.chars().skip(seg.start).take(seg.end - seg.start).collect();
        let source = match &seg.source {
            SegmentSource::Stored(k) => format!("stored {k:?}"),
            SegmentSource::Fallback => "fallback".to_string(),
        };
        println!("{part:?}: {source}");
    }
    if decoded.truncated {
        return Err(PartialOutput {
            note: format!(
                "generation truncated after {} points; {} holds the partial output",
                decoded.sequence.len(),
                output.display()
            ),
        }
        .into());
    }
    println!("wrote {} ({} points)", output.display(), decoded.sequence.len());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Level {
    Writer,
    WriterChar,
    Char,
}

impl std::str::FromStr for Level {
    type Err = String;
    fn from_str(v: &str) -> std::result::Result<Self, String> {
        match v {
            "w" => Ok(Level::Writer),
            "wct" => Ok(Level::WriterChar),
            "C" => Ok(Level::Char),
            _ => Err(format!("unknown level {v:?}; expected w, wct or C")),
        }
    }
}

fn interp(a: InterpArgs, s: &Settings) -> Result<()> {
    let model = load_model(&s.req::<PathBuf>("model", a.model)?)?;
    let refs: PathBuf = s.req("refs", a.refs)?;
    let level: Level = s.or("level", a.level, "w".to_string())?.parse().map_err(UsageError)?;
    let wa: String = s.req("writer-a", a.writer_a)?;
    let text: String = s.req("text", a.text)?;
    let output: PathBuf = s.req("output", a.output)?;
    let gammas: Vec<f64> = match s.opt::<f64>("gamma", a.gamma)? {
        Some(g) if (0.0..=1.0).contains(&g) => vec![g],
        Some(g) => return Err(UsageError(format!("--gamma {g} is outside [0, 1]")).into()),
        None => {
            let rows = s.or("rows", a.rows, 5)?;
            if rows < 2 {
                return Err(UsageError("--rows must be at least 2".into()).into());
            }
            (0..rows).map(|r| 1.0 - r as f64 / (rows - 1) as f64).collect()
        }
    };
    let opts = decode_options(s, a.max_steps, a.temperature)?;
    let seed = s.or("seed", a.seed, 0)?;
    let db_a = reference_db(&model, &refs, Some(&wa))?;

    // Conditioning vectors for weight `gamma` on the A side.
    let wcts_at: Box<dyn Fn(f64) -> Result<Vec<Vec<f64>>>> = match level {
        Level::Writer | Level::WriterChar => {
            let wb: String = s.req("writer-b", a.writer_b)?;
            let db_b = reference_db(&model, &refs, Some(&wb))?;
            if level == Level::Writer {
                let cs = model.char_dsd(&text)?;
                let (ma, mb) = (db_a.mean_w, db_b.mean_w);
                Box::new(move |g| {
                    let w = interpolate_writer(&ma, &mb, g)?;
                    Ok(cs.iter().map(|c| mat_vec(c, &w)).collect())
                })
            } else {
                let va = sample_wcts(&model, &db_a, &text)?.wcts;
                let vb = sample_wcts(&model, &db_b, &text)?.wcts;
                Box::new(move |g| Ok(interpolate_wcts(&va, &vb, g)?))
            }
        }
        Level::Char => {
            let text_b: String = s.req("text-b", a.text_b)?;
            if text_b.chars().count() != text.chars().count() {
                return Err(UsageError("--text-b must have as many characters as --text".into()).into());
            }
            let (ca, cb) = (model.char_dsd(&text)?, model.char_dsd(&text_b)?);
            let w = db_a.mean_w;
            Box::new(move |g| {
                let r = [g, 1.0 - g, 0.0, 0.0];
                ca.iter()
                    .zip(&cb)
                    .map(|(x, y)| Ok(mat_vec(&interpolate_char_bilinear([x, y, x, y], r)?, &w)))
                    .collect()
            })
        }
    };

    let mut samples = Vec::with_capacity(gammas.len());
    let mut truncated = 0;
    for &gamma in &gammas {
        let wcts = wcts_at(gamma)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = model.decode_strokes(&wcts, &text, &format!("gamma={gamma}"), &mut rng, opts)?;
        truncated += usize::from(d.truncated);
        samples.push(d.sequence);
    }
    let rows = samples.len();
    write_text(&output, &render_grid(&samples, &RenderSpec::default())?)?;
    if truncated > 0 {
        return Err(PartialOutput {
            note: format!("{truncated} of {rows} rows truncated; {} holds the partial output", output.display()),
        }
        .into());
    }
    println!("wrote {} ({rows} rows)", output.display());
    Ok(())
}

#[derive(Deserialize)]
struct PairRecord {
    w: Vec<f64>,
    w_new: Vec<f64>,
}

#[derive(Serialize)]
struct MatrixOut {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn newchar(a: NewcharArgs, s: &Settings) -> Result<()> {
    let path: PathBuf = s.req("pairs", a.pairs)?;
    let mode: NewCharMode = s
        .or("mode", a.mode, "direct_lsq".to_string())?
        .parse()
        .map_err(|e: dsd_core::DsdError| UsageError(e.to_string()))?;
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let pairs = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<PairRecord>(l)
                .map(|r| (r.w, r.w_new))
                .with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = s.opt::<PathBuf>("model", a.model)?.map(|p| load_model(&p)).transpose()?;
    let c = estimate_new_character(model.as_ref(), &pairs, mode)?;
    let out = MatrixOut {
        rows: c.rows(),
        cols: c.cols(),
        data: c.data().to_vec(),
    };
    write_json(s.opt::<PathBuf>("output", a.output)?.as_ref(), &out)
}

/// A saved codebook, or enrollment samples to build one from.
fn load_codebook(model: &DsdModel, path: &Path) -> Result<Codebook> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(cb) = serde_json::from_str::<Codebook>(&text) {
        if cb.dsds.iter().any(|d| d.len() != model.latent()) || cb.dsds.len() != cb.writers.len() {
            bail!("codebook {} does not match the model", path.display());
        }
        return Ok(cb);
    }
    Ok(Codebook::enroll(model, &load(path)?)?)
}

fn identify(a: IdentifyArgs, s: &Settings) -> Result<()> {
    let model = load_model(&s.req::<PathBuf>("model", a.model)?)?;
    let codebook = load_codebook(&model, &s.req::<PathBuf>("codebook", a.codebook)?)?;
    if let Some(p) = s.opt::<PathBuf>("save-codebook", a.save_codebook)? {
        write_json(Some(&p), &codebook)?;
    }
    let query = load(&s.req::<PathBuf>("queries", a.queries)?)?;
    let per = s.or("words-per-query", a.words_per_query, 10)?;
    if per == 0 {
        return Err(UsageError("--words-per-query must be positive".into()).into());
    }
    let mut writers: Vec<&str> = Vec::new();
    for x in &query {
        if !writers.contains(&x.writer_id.as_str()) {
            writers.push(&x.writer_id);
        }
    }
    let mut queries = Vec::new();
    for w in writers {
        let words: Vec<StrokeSequence> = query.iter().filter(|x| x.writer_id == w).cloned().collect();
        for chunk in words.chunks(per) {
            queries.push(Query {
                label: Some(w.to_string()),
                words: chunk.to_vec(),
            });
        }
    }
    let result = identify_writer(&model, &codebook, &queries)?;
    if let Some(acc) = result.accuracy {
        eprintln!("accuracy {acc:.4} over {} queries", result.predictions.len());
    }
    write_json(s.opt::<PathBuf>("output", a.output)?.as_ref(), &result)
}

fn audit(a: AuditArgs, s: &Settings) -> Result<()> {
    let model = load_model(&s.req::<PathBuf>("model", a.model)?)?;
    let report = audit_invertibility(
        &model,
        s.or("max-len", a.max_len, 2)?,
        s.or("sampled", a.sampled, 0)?,
        s.or("seed", a.seed, 0)?,
    )?;
    eprintln!(
        "{} matrices checked, {} singular, worst condition {:.3e}",
        report.entries.len(),
        report.singular.len(),
        report.worst_condition
    );
    if let Some(p) = s.opt::<PathBuf>("output", a.output)? {
        write_json(Some(&p), &report)?;
    }
    if s.or("strict", a.strict, false)? && !report.singular.is_empty() {
        bail!("singular matrices for {:?}", report.singular);
    }
    Ok(())
}

fn render(a: RenderArgs, s: &Settings) -> Result<()> {
    let data = load(&s.req::<PathBuf>("input", a.input)?)?;
    let output: PathBuf = s.req("output", a.output)?;
    let d = RenderSpec::default();
    let spec = RenderSpec {
        width: s.or("width", a.width, d.width)?,
        height: s.or("height", a.height, d.height)?,
        baseline: s.or("baseline", a.baseline, d.baseline)?,
        stroke_width: s.or("stroke-width", a.stroke_width, d.stroke_width)?,
        color_by_char: s.or("color", a.color, d.color_by_char)?,
        ..d
    };
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let svg = match s.opt::<usize>("index", a.index)? {
        Some(i) => {
            let x = data
                .get(i)
                .ok_or_else(|| UsageError(format!("--index {i} out of range ({} samples)", data.len())))?;
            render_svg(x, &spec)?
        }
        None => render_grid(&data, &spec)?,
    };
    write_text(&output, &svg)?;
    println!("wrote {}", output.display());
    Ok(())
}
