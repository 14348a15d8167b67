use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "detkit", version, about = "Detector evaluation and analysis toolkit")]
pub struct Cli {
    /// Worker threads; 0 means available parallelism.
    #[arg(long, global = true, env = "DETKIT_WORKERS", default_value_t = 0)]
    pub workers: usize,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// No log output.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score prediction files against ground-truth label files.
    Evaluate(EvaluateArgs),
    /// Per-class image and instance counts of a label directory.
    DatasetStats(DatasetStatsArgs),
    /// Seeded train/val/test split of image ids.
    Split(SplitArgs),
    /// Turn raw head output maps into prediction records.
    Decode(DecodeArgs),
    /// Run one-to-many and one-to-one assignment on an instance file.
    AssignDemo(AssignArgs),
    /// Intrinsic-rank redundancy ranking of convolution weights.
    RankAnalyze(RankArgs),
    /// Export sweep and PR curves from an evaluation report.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth label directory (`<id>.txt` per image).
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction directory; a missing file means no predictions.
    #[arg(long)]
    pub pred: PathBuf,
    /// Class names, one per line. Defaults to the nine built-in classes.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',')]
    pub iou_thresholds: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = InterpolationArg::RecallPoints)]
    pub interpolation: InterpolationArg,
    /// Sample count for recall-point interpolation.
    #[arg(long, default_value_t = 101)]
    pub recall_points: usize,
    /// Operating point reported next to the best F1.
    #[arg(long, default_value_t = 0.25)]
    pub fixed_confidence: f64,
    /// Class (name or id) whose recall is the headline sensitivity.
    /// Defaults to `fracture` when that class exists.
    #[arg(long)]
    pub sensitivity_class: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpolationArg {
    RecallPoints,
    AllPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatsFormat {
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct DatasetStatsArgs {
    /// Label directory.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StatsFormat::Json)]
    pub format: StatsFormat,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Take ids from the `*.txt` file stems of a label directory.
    #[arg(long, conflicts_with = "ids", required_unless_present = "ids")]
    pub labels: Option<PathBuf>,
    /// Take ids from a file, one per line.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// Directory for train.txt, val.txt and test.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// train,val,test
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.75, 0.20, 0.05])]
    pub ratios: Vec<f64>,
    /// Keep images sharing the id prefix before the first `_` together.
    #[arg(long)]
    pub patient_level: bool,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Tensor file holding the class and box maps.
    #[arg(long)]
    pub maps: PathBuf,
    /// Sidecar manifest; defaults to `<maps>.manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "cls")]
    pub cls_tensor: String,
    #[arg(long, default_value = "box")]
    pub box_tensor: String,
    /// Prediction file path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    pub conf: f64,
    #[arg(long, default_value_t = 300)]
    pub max_det: usize,
    /// Class maps are logits.
    #[arg(long)]
    pub sigmoid: bool,
    /// Use the greedy-NMS baseline with this IoU threshold.
    #[arg(long)]
    pub nms: Option<f64>,
    /// Suppress across classes in the NMS baseline.
    #[arg(long, requires = "nms")]
    pub class_agnostic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AssignModeArg {
    OneToMany,
    OneToOne,
    Both,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    /// Instance file with `gt` and `pred` records.
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 6.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    #[arg(long, value_enum, default_value_t = AssignModeArg::Both)]
    pub mode: AssignModeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Weight file; every 4-D tensor is analyzed.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Relative singular-value threshold in (0, 1).
    #[arg(long, default_value_t = 0.05)]
    pub lambda_frac: f64,
    /// JSON report path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Text report path; stdout when neither output is given.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveFormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Report written by `evaluate`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = CurveFormatArg::Csv)]
    pub format: CurveFormatArg,
}
