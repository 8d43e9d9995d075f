//! The `dsd` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

pub mod commands;
pub mod config;

use config::{ConfigFile, Settings};

/// Bad arguments or configuration; exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Failure of a command that already wrote partial results; exit code 2
/// with `note` printed on stderr.
#[derive(Debug)]
pub struct PartialOutput {
    pub note: String,
}

impl std::fmt::Display for PartialOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.note)
    }
}

impl std::error::Error for PartialOutput {}

#[derive(Parser, Debug)]
#[command(name = "dsd", version, about = "Handwriting style descriptors: data, training, generation and analysis")]
pub struct Cli {
    /// `key = value` file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert absolute-coordinate JSON lines into a dataset.
    Ingest(IngestArgs),
    /// Write a synthetic multi-writer corpus.
    SynthData(SynthArgs),
    /// Label character boundaries with a segmentation network.
    Segment(SegmentArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Write text in the style of reference samples.
    Generate(GenerateArgs),
    /// Interpolate between writers, conditioning vectors or character matrices.
    Interp(InterpArgs),
    /// Estimate the matrix of a new character from vector pairs.
    Newchar(NewcharArgs),
    /// Identify the writers of query samples.
    Identify(IdentifyArgs),
    /// Check that character matrices have full rank.
    Audit(AuditArgs),
    /// Draw samples as SVG.
    Render(RenderArgs),
}

#[derive(Args, Debug, Default)]
pub struct IngestArgs {
    /// Absolute-coordinate JSON lines.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Move delayed strokes to their left-to-right position.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub reorder: Option<bool>,
    /// Stop at the first invalid record instead of skipping it.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fail_fast: Option<bool>,
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub writers: Option<usize>,
    /// Number of words taken from the built-in word list.
    #[arg(long)]
    pub words: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Join letters within a word.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub cursive: Option<bool>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SegmentArgs {
    /// Samples with text labels.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Load a trained segmenter instead of training one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Where to save a newly trained segmenter.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Dataset with eoc labels.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the log, checkpoints and final model.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub mixtures: Option<usize>,
    /// Model alphabet; defaults to the built-in 86 characters.
    #[arg(long)]
    pub alphabet: Option<String>,
    /// Delta normalisation; defaults to the dataset's delta std.
    #[arg(long)]
    pub delta_scale: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Comma-separated subset of Lf_enc, Lalpha, Lbeta, wct_rec.
    #[arg(long)]
    pub ablate: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference samples with eoc labels.
    #[arg(long, alias = "reference")]
    pub refs: Option<PathBuf>,
    /// Keep only reference samples of this writer.
    #[arg(long)]
    pub writer: Option<String>,
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// 0 draws the most likely point at every step.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// SVG output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the strokes as a dataset line.
    #[arg(long)]
    pub strokes: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub color: Option<bool>,
}

#[derive(Args, Debug, Default)]
pub struct InterpArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference samples with eoc labels.
    #[arg(long, alias = "reference")]
    pub refs: Option<PathBuf>,
    /// w, wct or C.
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long)]
    pub writer_a: Option<String>,
    /// Needed by the w and wct levels.
    #[arg(long)]
    pub writer_b: Option<String>,
    #[arg(long)]
    pub text: Option<String>,
    /// Second text for the C level, same length as --text.
    #[arg(long)]
    pub text_b: Option<String>,
    /// Weight of the A side; without it, a sweep from 1 to 0.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Rows in the sweep.
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct NewcharArgs {
    /// JSON lines of `{"w": [...], "w_new": [...]}`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// direct_lsq or latent_lbfgsb.
    #[arg(long)]
    pub mode: Option<String>,
    /// Needed by latent_lbfgsb.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Enrollment samples, or a codebook saved with --save-codebook.
    #[arg(long, alias = "enroll")]
    pub codebook: Option<PathBuf>,
    /// Samples grouped per writer into queries.
    #[arg(long, alias = "query")]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub save_codebook: Option<PathBuf>,
    #[arg(long)]
    pub words_per_query: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Longest string checked; lengths above 2 are sampled.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Random strings per length above 2.
    #[arg(long)]
    pub sampled: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Exit 2 when any matrix is singular.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
}

#[derive(Args, Debug, Default)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Render only this sample; otherwise all samples, one per row.
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub height: Option<f64>,
    #[arg(long)]
    pub baseline: Option<f64>,
    #[arg(long)]
    pub stroke_width: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub color: Option<bool>,
}

fn long_names(cmd: &clap::Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| l != "config")
        .collect()
}

/// Config-file settings for the chosen subcommand.
fn settings(config: Option<&PathBuf>, name: &str) -> Result<Settings, UsageError> {
    let Some(path) = config else {
        return Ok(Settings::default());
    };
    let file = ConfigFile::load(path)?;
    let root = Cli::command();
    let mut any = BTreeSet::new();
    let mut commands = BTreeSet::new();
    let mut own = BTreeSet::new();
    for sub in root.get_subcommands() {
        let names = long_names(sub);
        if sub.get_name() == name {
            own = names.clone();
        }
        any.extend(names);
        commands.insert(sub.get_name().to_string());
    }
    file.for_command(name, &own, &any, &commands)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    let name = matches.subcommand_name().unwrap_or_default().to_string();
    let result = settings(cli.config.as_ref(), &name)
        .map_err(anyhow::Error::from)
        .and_then(|s| commands::dispatch(cli.command, &s));
    match result {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("{}", usage_for(&name));
            1
        }
        Err(e) if e.is::<PartialOutput>() => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn usage_for(name: &str) -> String {
    let mut root = Cli::command();
    root.build();
    match root.find_subcommand_mut(name) {
        Some(sub) => sub.render_usage().to_string(),
        None => root.render_usage().to_string(),
    }
}
