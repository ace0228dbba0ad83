//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "gitloss",
    version,
    about = "Train and evaluate embeddings under a joint softmax + center + repulsion objective"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write checkpoint, epoch log, and embeddings.
    Train(TrainArgs),
    /// Run the lambda_c x lambda_g grid, averaging repeated seeded runs.
    Sweep(TrainArgs),
    /// Emit the two loss-term curves over a signed distance range.
    Curves(CurvesArgs),
    /// Render a 2-D embedding CSV as an SVG scatter plot.
    Scatter(ScatterArgs),
    /// Sample verification pairs from an embedding CSV and run the
    /// 10-fold threshold protocol.
    Verify(VerifyArgs),
    /// Check every analytic gradient against central finite differences.
    Gradcheck(SharedArgs),
}

/// Flags every subcommand understands.
#[derive(Debug, Args, Clone)]
pub struct SharedArgs {
    /// Base seed for all randomness in this invocation.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory for artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Key = value configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub shared: SharedArgs,

    /// IDX images file for the training split (.gz accepted).
    #[arg(long)]
    pub mnist_images: Option<PathBuf>,

    /// IDX labels file for the training split (.gz accepted).
    #[arg(long)]
    pub mnist_labels: Option<PathBuf>,

    /// IDX images for the evaluation split; defaults to the t10k file next
    /// to the training images.
    #[arg(long)]
    pub val_images: Option<PathBuf>,

    /// IDX labels for the evaluation split.
    #[arg(long)]
    pub val_labels: Option<PathBuf>,

    /// Center-term weight. `sweep` accepts a comma-separated list.
    #[arg(long)]
    pub lambda_c: Option<String>,

    /// Repulsion-term weight. `sweep` accepts a comma-separated list.
    #[arg(long)]
    pub lambda_g: Option<String>,

    /// Center update rate in (0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Initial learning rate. Defaults depend on the optimizer.
    #[arg(long)]
    pub lr: Option<f64>,

    /// SGD momentum.
    #[arg(long)]
    pub momentum: Option<f64>,

    /// Epochs at which the learning rate divides by the decay factor,
    /// comma-separated.
    #[arg(long)]
    pub lr_decay_epochs: Option<String>,

    #[arg(long)]
    pub lr_decay_factor: Option<f64>,

    /// Update rule: sgd or adam.
    #[arg(long)]
    pub optimizer: Option<String>,

    /// Embedding dimension (2 plots directly as a scatter).
    #[arg(long)]
    pub feature_dim: Option<usize>,

    /// Hidden layer widths, comma-separated.
    #[arg(long)]
    pub hidden_dims: Option<String>,

    /// Hidden activation: relu or leaky:<slope>.
    #[arg(long)]
    pub activation: Option<String>,

    /// Seeded runs to average per sweep cell; ignored by `train`.
    #[arg(long)]
    pub runs: Option<usize>,

    /// Use only the first N training samples.
    #[arg(long)]
    pub limit_train: Option<usize>,

    /// Use only the first N evaluation samples.
    #[arg(long)]
    pub limit_val: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub shared: SharedArgs,

    #[arg(long, default_value_t = 1.0)]
    pub lambda_c: f64,

    #[arg(long, default_value_t = 1.0)]
    pub lambda_g: f64,

    /// Lower end of the signed distance range.
    #[arg(long, default_value_t = -2.0)]
    pub t_min: f64,

    /// Upper end of the signed distance range.
    #[arg(long, default_value_t = 2.0)]
    pub t_max: f64,

    /// Number of evenly spaced sample points (at least 2).
    #[arg(long, default_value_t = 401)]
    pub steps: usize,

    /// Also render figures/curves.svg.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    #[command(flatten)]
    pub shared: SharedArgs,

    /// Embedding CSV (label,f1,f2) to plot.
    #[arg(long)]
    pub embeddings: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub shared: SharedArgs,

    /// Embedding CSV to sample pairs from.
    #[arg(long)]
    pub embeddings: PathBuf,

    /// Total pairs to sample (half same-class, half different-class).
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
}
