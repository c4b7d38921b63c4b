use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mpn::data::SplitSizes;
use mpn::decide::ClassifierKind;
use mpn::loss::LossConfig;
use mpn::train::{OptimizerKind, TrainConfig};

/// Multi-label fault prediction with an encoder-decoder LSTM.
#[derive(Parser, Debug)]
#[command(name = "mpn", version, about)]
pub struct Cli {
    /// Worker threads for training and prediction
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Master seed; every other seed is derived from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Log progress to stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset
    Generate(GenerateArgs),
    /// Convert raw plant fault files into a dataset
    ConvertPhm(ConvertPhmArgs),
    /// Convert raw activity recordings into a dataset
    ConvertHar(ConvertHarArgs),
    /// Train one configuration and fit its decision rules
    Train(TrainArgs),
    /// Grid-search learning rate, lambda (and beta) on the validation split
    Gridsearch(GridArgs),
    /// Score a model on a dataset split
    Evaluate(EvaluateArgs),
    /// Write per-sample embeddings, probabilities and decisions
    Predict(PredictArgs),
    /// Write per-sample stepwise decisions and score them
    Localize(LocalizeArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Subtract a baseline report from a method report
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Number of samples
    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    /// Output dataset path
    #[arg(long)]
    pub out: PathBuf,

    /// Generator configuration (JSON); defaults to the built-in one
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override the observation noise scale
    #[arg(long, allow_negative_numbers = true)]
    pub noise: Option<f64>,
}

#[derive(Args, Debug)]
pub struct WindowArgs {
    /// Number of windows to draw
    #[arg(long, default_value_t = 1000)]
    pub n_samples: usize,

    /// Let windows share time steps
    #[arg(long)]
    pub allow_overlap: bool,

    /// Keep raw sensor scales instead of standardizing columns
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Args, Debug)]
pub struct ConvertPhmArgs {
    /// Sensor and control reference file
    #[arg(long)]
    pub sensors: PathBuf,

    /// Zone environment file
    #[arg(long)]
    pub environment: Option<PathBuf>,

    /// Fault event file
    #[arg(long)]
    pub faults: PathBuf,

    /// Output dataset path
    #[arg(long)]
    pub out: PathBuf,

    /// Plant id to keep when the files hold several plants
    #[arg(long)]
    pub plant: Option<String>,

    /// Fault codes to label, in label order
    #[arg(long, value_delimiter = ',', default_values_t = mpn::data::phm::PHM_CODES)]
    pub codes: Vec<u32>,

    /// Observed steps per window
    #[arg(long, default_value_t = mpn::data::phm::PHM_HISTORY)]
    pub history: usize,

    /// Forecast steps per window
    #[arg(long, default_value_t = mpn::data::phm::PHM_HORIZON)]
    pub horizon: usize,

    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Args, Debug)]
pub struct ConvertHarArgs {
    /// Recording files
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    /// Output dataset path
    #[arg(long)]
    pub out: PathBuf,

    /// Observed steps per window
    #[arg(long, default_value_t = mpn::data::har::HAR_HISTORY)]
    pub history: usize,

    /// Forecast steps per window
    #[arg(long, default_value_t = mpn::data::har::HAR_HORIZON)]
    pub horizon: usize,

    #[command(flatten)]
    pub windows: WindowArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Train,validation,test sizes; default 500,100,400 when the dataset
    /// has at least 1000 samples, else 50%/10%/rest
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitSizes>,
}

fn parse_split(s: &str) -> Result<SplitSizes, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [train, val, test] => Ok(SplitSizes { train, val, test }),
        _ => Err("expected three comma-separated sizes".into()),
    }
}

#[derive(Args, Debug, Clone)]
pub struct HyperArgs {
    /// Loss configuration
    #[arg(long, default_value = "base", value_parser = parse_loss)]
    pub loss: LossConfig,

    /// Learning rate
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub eta: f64,

    /// L2 penalty weight on weight matrices
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub lambda: f64,

    /// Siamese mixing weight
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub beta: f64,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 300)]
    pub max_epochs: usize,

    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 25)]
    pub patience: usize,

    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    pub optimizer: OptimizerKind,

    /// Clip gradients to this global norm
    #[arg(long, allow_negative_numbers = true)]
    pub clip_norm: Option<f64>,
}

fn parse_loss(s: &str) -> Result<LossConfig, String> {
    s.parse().map_err(|e: mpn::MpnError| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse().map_err(|e: mpn::MpnError| e.to_string())
}

impl HyperArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            eta: self.eta,
            lambda: self.lambda,
            beta: self.beta,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            clip_norm: self.clip_norm,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset path
    #[arg(long)]
    pub data: PathBuf,

    /// Output model path
    #[arg(long)]
    pub model: PathBuf,

    /// Per-epoch history (CSV)
    #[arg(long)]
    pub history_csv: Option<PathBuf>,

    #[command(flatten)]
    pub split: SplitArgs,

    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    /// Dataset path
    #[arg(long)]
    pub data: PathBuf,

    /// Output path for the selected model
    #[arg(long)]
    pub model: PathBuf,

    /// Machine-readable report (JSON)
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Grid points as a JSON array of {"eta", "lambda", "beta"} objects
    #[arg(long)]
    pub grid_file: Option<PathBuf>,

    #[command(flatten)]
    pub split: SplitArgs,

    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    Svm,
    Threshold,
    NearestMean,
    All,
}

impl ClassifierArg {
    pub fn kinds(self) -> Vec<ClassifierKind> {
        match self {
            ClassifierArg::Svm => vec![ClassifierKind::Svm],
            ClassifierArg::Threshold => vec![ClassifierKind::ThresholdZero],
            ClassifierArg::NearestMean => vec![ClassifierKind::NearestMean],
            ClassifierArg::All => ClassifierKind::ALL.to_vec(),
        }
    }

    /// Segment classifier that gates stepwise decisions.
    pub fn primary(self) -> ClassifierKind {
        self.kinds()[0]
    }
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Dataset path
    #[arg(long)]
    pub data: PathBuf,

    /// Model path
    #[arg(long)]
    pub model: PathBuf,

    /// Segment classifier(s) to score
    #[arg(long, value_enum, default_value = "all")]
    pub classifier: ClassifierArg,

    /// Also score stepwise decisions against the broadcast baseline
    #[arg(long)]
    pub localize: bool,

    /// Split to score
    #[arg(long, value_enum, default_value = "test")]
    pub subset: Subset,

    /// Machine-readable report (JSON)
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Dataset path
    #[arg(long)]
    pub data: PathBuf,

    /// Model path
    #[arg(long)]
    pub model: PathBuf,

    /// Output path (JSON Lines, one record per sample)
    #[arg(long)]
    pub out: PathBuf,

    /// Segment classifier for the decisions
    #[arg(long, value_enum, default_value = "svm")]
    pub classifier: ClassifierArg,

    /// Split to predict
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,

    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    /// Dataset path
    #[arg(long)]
    pub data: PathBuf,

    /// Model path
    #[arg(long)]
    pub model: PathBuf,

    /// Output path (JSON Lines, one record per sample)
    #[arg(long)]
    pub out: PathBuf,

    /// Segment classifier gating the stepwise decisions
    #[arg(long, value_enum, default_value = "svm")]
    pub classifier: ClassifierArg,

    /// Split to localize
    #[arg(long, value_enum, default_value = "test")]
    pub subset: Subset,

    /// Machine-readable report (JSON)
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Only check this loss configuration
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossConfig>,

    /// Central difference step
    #[arg(long, default_value_t = 1e-5, allow_negative_numbers = true)]
    pub fd_step: f64,

    /// Random instances per configuration
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Report of the method
    pub method: PathBuf,

    /// Report of the baseline
    pub baseline: PathBuf,

    /// Machine-readable differences (JSON)
    #[arg(long)]
    pub report: Option<PathBuf>,
}
