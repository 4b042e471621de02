use std::path::PathBuf;

use beamlattice::{DecoderConfig, EosMode, FinishRule, Margin, ScorerSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "beamlattice",
    version,
    about = "Joint CTC/attention beam search over posterior grids"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic grids and a manifest.
    Gen(GenArgs),
    /// Decode every utterance of a manifest.
    Decode(DecodeArgs),
    /// Plan segments of long inputs.
    Segment(SegmentArgs),
    /// Check the prefix scorer and search against brute-force enumeration.
    Oracle(OracleArgs),
    /// Time decoding over a sweep of settings.
    Bench(BenchArgs),
    /// Token error rate of decoded output against references.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Style {
    Random,
    Planted,
    #[value(alias = "blank_heavy")]
    BlankHeavy,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub num_utts: usize,
    #[arg(long, default_value_t = 50)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 100)]
    pub max_frames: usize,
    /// Number of real tokens; the grids get one more column for blank.
    #[arg(long, default_value_t = 5)]
    pub vocab: usize,
    #[arg(long, value_enum, default_value_t = Style::Random)]
    pub style: Style,
    /// Silent frame range START:END (blank-heavy style, repeatable); defaults
    /// to the middle fifth of each utterance.
    #[arg(long = "silence", value_parser = parse_range)]
    pub silences: Vec<(usize, usize)>,
    /// Label probability kept on silent frames.
    #[arg(long, default_value_t = 0.0)]
    pub silence_floor: f64,
    #[arg(long, default_value_t = 10)]
    pub frame_shift_ms: u32,
    /// Also write an n-gram table scorer of this order.
    #[arg(long)]
    pub table_order: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let a: usize = a.parse().map_err(|_| format!("bad start {a:?}"))?;
    let b: usize = b.parse().map_err(|_| format!("bad end {b:?}"))?;
    if a >= b {
        return Err(format!("empty range {s:?}"));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args, Clone)]
pub struct DecoderArgs {
    #[arg(long, default_value_t = 3)]
    pub beam: usize,
    #[arg(long, default_value_t = 0.3)]
    pub ctc_weight: f64,
    #[arg(long, default_value_t = 3)]
    pub eos_m: usize,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    pub eos_dend: f64,
    #[arg(long, default_value_t = 2)]
    pub eos_c: usize,
    #[arg(long, default_value = "5")]
    pub m1: Margin,
    #[arg(long, default_value = "inf")]
    pub m2: Margin,
    #[arg(long, default_value = "both")]
    pub eos_mode: EosMode,
    #[arg(long, default_value_t = 1.0)]
    pub max_steps_ratio: f64,
    /// Offer every live hypothesis to the finished set, not only those that
    /// beat the best continuation.
    #[arg(long)]
    pub finish_all: bool,
    #[arg(long, default_value = "uniform")]
    pub scorer: ScorerSpec,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

impl DecoderArgs {
    pub fn config(&self) -> DecoderConfig {
        DecoderConfig {
            beam_width: self.beam,
            ctc_weight: self.ctc_weight,
            eos_m: self.eos_m,
            eos_threshold: self.eos_dend,
            eos_c: self.eos_c,
            margin_m1: self.m1,
            margin_m2: self.m2,
            eos_mode: self.eos_mode,
            max_steps_ratio: self.max_steps_ratio,
            finish_rule: if self.finish_all {
                FinishRule::Always
            } else {
                FinishRule::BeatsBest
            },
            full_range_ctc: false,
        }
    }
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Results file (JSON lines); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the timing report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SegmentMode {
    Vad,
    Hard,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long, value_enum)]
    pub mode: SegmentMode,
    /// Detector output files (vad) or grid/detector files (hard).
    pub inputs: Vec<PathBuf>,
    /// Utterance manifest whose frame counts are segmented (hard).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// A single input length in frames (hard).
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, default_value = "input")]
    pub id: String,
    #[arg(long, default_value_t = 10)]
    pub frame_shift_ms: u32,
    #[arg(long)]
    pub nodemap: Option<PathBuf>,
    /// Minimum segment length in seconds (default 15 for vad, 19 for hard).
    #[arg(long)]
    pub min: Option<f64>,
    /// Maximum segment length in seconds (default 20).
    #[arg(long)]
    pub max: Option<f64>,
    /// Smoothed noise-minus-speech ratio at or below which a frame is speech.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub threshold: f64,
    /// Smoothing window in frames.
    #[arg(long, default_value_t = 11)]
    pub window: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 6)]
    pub max_frames: usize,
    #[arg(long, default_value_t = 3)]
    pub max_vocab: usize,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupt the recursion by one frame; every suite should then fail.
    #[arg(long)]
    pub mutate: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub decoder: DecoderArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,16")]
    pub batch_sizes: Vec<usize>,
    #[arg(long = "m2-sweep", value_delimiter = ',', default_value = "inf,20")]
    pub m2_sweep: Vec<Margin>,
    #[arg(long, value_delimiter = ',', default_value = "both")]
    pub eos_modes: Vec<EosMode>,
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Reports as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Decoded results (JSON lines).
    #[arg(long)]
    pub hyp: PathBuf,
    /// References (JSON lines of {"id", "tokens"}).
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
