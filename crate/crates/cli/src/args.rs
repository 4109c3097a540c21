use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use assetpop_core::features::Representation;
use assetpop_core::models::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "assetpop", version, about = "Embed peer-shared course artifacts and model their popularity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean an event log into interaction sequences and popularity labels.
    Ingest(IngestArgs),
    /// Train asset2vec skip-gram embeddings on interaction sequences.
    TrainEmbed(TrainEmbedArgs),
    /// Average pretrained word vectors over each asset's text.
    EmbedContent(EmbedContentArgs),
    /// Cross-validate popularity models over one or more representations.
    Evaluate(EvaluateArgs),
    /// Lay out asset vectors in 2D with Barnes-Hut t-SNE.
    Tsne(TsneArgs),
    /// Generate a synthetic course with planted structure.
    Synth(SynthArgs),
    /// Rank assets that complete `asset + partner = beacon`, or plain neighbors.
    Partner(PartnerArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub creators: PathBuf,
    /// Assets with fewer events than this are dropped as ghosts.
    #[arg(long, default_value_t = 3)]
    pub min_events: usize,
    /// Course window start (ms since epoch, inclusive).
    #[arg(long)]
    pub course_start: Option<i64>,
    /// Course window end (ms since epoch, inclusive).
    #[arg(long)]
    pub course_end: Option<i64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedFlags {
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub embed_learning_rate: f64,
    /// Negative samples per pair; 0 trains the full softmax.
    #[arg(long, default_value_t = 0)]
    pub negatives: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainEmbedArgs {
    /// Sequences CSV from `ingest`.
    #[arg(long, required_unless_present = "events", conflicts_with = "events")]
    pub sequences: Option<PathBuf>,
    /// Raw events; cleaned the same way `ingest` does.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub min_events: usize,
    #[command(flatten)]
    pub embed: EmbedFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedContentArgs {
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long)]
    pub word_vectors: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RepArg {
    Asset2vec,
    AvgContent,
    Ensemble,
    Instructor,
    All,
}

impl RepArg {
    pub fn expand(list: &[RepArg]) -> Vec<Representation> {
        let mut out: Vec<Representation> = Vec::new();
        for r in list {
            let add: &[Representation] = match r {
                RepArg::Asset2vec => &[Representation::Asset2vec],
                RepArg::AvgContent => &[Representation::AvgContent],
                RepArg::Ensemble => &[Representation::Ensemble],
                RepArg::Instructor => &[Representation::Instructor],
                RepArg::All => &Representation::ALL,
            };
            for a in add {
                if !out.contains(a) {
                    out.push(*a);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArg {
    Baseline,
    Glm,
    Mlp,
    All,
}

impl ModelArg {
    pub fn expand(list: &[ModelArg]) -> Vec<ModelKind> {
        let mut out: Vec<ModelKind> = Vec::new();
        for m in list {
            let add: &[ModelKind] = match m {
                ModelArg::Baseline => &[ModelKind::Baseline],
                ModelArg::Glm => &[ModelKind::Glm],
                ModelArg::Mlp => &[ModelKind::Mlp],
                ModelArg::All => &ModelKind::ALL,
            };
            for a in add {
                if !out.contains(a) {
                    out.push(*a);
                }
            }
        }
        out
    }
}

/// Which labelled assets enter the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    /// Instructor-coded assets when the instructor representation is requested, else every labelled asset.
    Auto,
    /// Only assets with instructor features.
    Coded,
    /// Every labelled asset.
    Labeled,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Labels CSV from `ingest`; otherwise computed from --events and --creators.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub creators: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub min_events: usize,
    /// Asset2vec CSV from `train-embed`; otherwise trained from --events.
    #[arg(long)]
    pub asset2vec: Option<PathBuf>,
    /// Content vectors CSV from `embed-content`; otherwise built from --content and --word-vectors.
    #[arg(long)]
    pub content_vectors: Option<PathBuf>,
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long)]
    pub word_vectors: Option<PathBuf>,
    #[arg(long)]
    pub instructor: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    pub rep: Vec<RepArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    pub model: Vec<ModelArg>,
    #[arg(long, value_enum, default_value = "auto")]
    pub subset: Subset,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.02)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub patience: usize,
    #[command(flatten)]
    pub embed: EmbedFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TsneArgs {
    /// Asset vectors CSV (`asset_id,v0,...`).
    #[arg(long)]
    pub vectors: PathBuf,
    /// Labels CSV used to color points; unlabelled assets get popularity 0.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    /// Compute every pairwise repulsion instead of the quadtree approximation.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub n_students: usize,
    #[arg(long, default_value_t = 3000)]
    pub n_assets: usize,
    #[arg(long, default_value_t = 10)]
    pub n_blocks: usize,
    #[arg(long, default_value_t = 0.85)]
    pub affinity: f64,
    /// Planted popularity weights, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub weights: Option<Vec<f64>>,
    /// Planted log-rate bias (defaults to ln 4).
    #[arg(long, allow_hyphen_values = true)]
    pub bias: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub topic_word_prob: f64,
    #[arg(long, default_value_t = 0.09)]
    pub instructor_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PartnerArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub asset: String,
    /// Target asset; without it the plain nearest neighbors of --asset are listed.
    #[arg(long)]
    pub beacon: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}
