//! Run configuration: built-in defaults, overridden by an optional
//! `key = value` file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gitloss::loss::{LossWeights, DEFAULT_CENTER_UPDATE_RATE};
use gitloss::network::{Activation, MlpConfig};
use gitloss::optim::LrSchedule;
use gitloss::{Error, Result};

use crate::cli::TrainArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Parameter(format!(
                "unknown optimizer {other:?}, expected sgd or adam"
            ))),
        }
    }

    /// Rate used when none is given: a small step for sum-reduced SGD
    /// gradients, and the schedule's conventional 0.1 start for Adam.
    pub fn default_lr(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 1e-3,
            OptimizerKind::Adam => 0.1,
        }
    }
}

/// Fully resolved settings for `train` and `sweep`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mnist_images: PathBuf,
    pub mnist_labels: PathBuf,
    pub val_images: PathBuf,
    pub val_labels: PathBuf,
    pub limit_train: Option<usize>,
    pub limit_val: Option<usize>,

    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,

    /// Grid values; `train` requires exactly one of each.
    pub lambda_c: Vec<f64>,
    pub lambda_g: Vec<f64>,
    pub alpha: f64,

    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,

    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub runs: usize,
    pub out: PathBuf,
}

impl RunConfig {
    /// The single (lambda_c, lambda_g) pair for `train`.
    pub fn single_weights(&self) -> Result<LossWeights> {
        if self.lambda_c.len() != 1 || self.lambda_g.len() != 1 {
            return Err(Error::Parameter(format!(
                "train takes exactly one lambda_c and one lambda_g (got {} and {}); \
                 use sweep for grids",
                self.lambda_c.len(),
                self.lambda_g.len()
            )));
        }
        LossWeights::new(self.lambda_c[0], self.lambda_g[0], self.alpha)
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            input_dim: 784,
            hidden_dims: self.hidden_dims.clone(),
            feature_dim: self.feature_dim,
            n_classes: 10,
            activation: self.activation,
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            initial: self.lr,
            factor: self.lr_decay_factor,
            decay_epochs: self.lr_decay_epochs.clone(),
        }
    }

    /// Deterministic `key = value` dump of the effective configuration.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("mnist_images", self.mnist_images.display().to_string());
        line("mnist_labels", self.mnist_labels.display().to_string());
        line("val_images", self.val_images.display().to_string());
        line("val_labels", self.val_labels.display().to_string());
        line(
            "limit_train",
            self.limit_train.map_or("none".into(), |v| v.to_string()),
        );
        line(
            "limit_val",
            self.limit_val.map_or("none".into(), |v| v.to_string()),
        );
        line("hidden_dims", join(&self.hidden_dims));
        line("feature_dim", self.feature_dim.to_string());
        line(
            "activation",
            match self.activation {
                Activation::Relu => "relu".into(),
                Activation::LeakyRelu(slope) => format!("leaky:{slope}"),
            },
        );
        line("lambda_c", join(&self.lambda_c));
        line("lambda_g", join(&self.lambda_g));
        line("alpha", self.alpha.to_string());
        line("optimizer", self.optimizer.name().into());
        line("lr", self.lr.to_string());
        line("momentum", self.momentum.to_string());
        line("lr_decay_epochs", join(&self.lr_decay_epochs));
        line("lr_decay_factor", self.lr_decay_factor.to_string());
        line("epochs", self.epochs.to_string());
        line("batch_size", self.batch_size.to_string());
        line("seed", self.seed.to_string());
        line("runs", self.runs.to_string());
        s
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses a `key = value` file: one pair per line, `#` starts a comment,
/// blank lines ignored.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(idx) => &raw[..idx],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parameter(format!(
                "{}:{}: expected key = value, found {raw:?}",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    const KNOWN: &[&str] = &[
        "mnist_images",
        "mnist_labels",
        "val_images",
        "val_labels",
        "limit_train",
        "limit_val",
        "hidden_dims",
        "feature_dim",
        "activation",
        "lambda_c",
        "lambda_g",
        "alpha",
        "optimizer",
        "lr",
        "momentum",
        "lr_decay_epochs",
        "lr_decay_factor",
        "epochs",
        "batch_size",
        "seed",
        "runs",
        "out",
    ];
    for key in map.keys() {
        if !KNOWN.contains(&key.as_str()) {
            return Err(Error::Parameter(format!(
                "{}: unknown configuration key {key:?}",
                path.display()
            )));
        }
    }
    Ok(map)
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .map_err(|_| Error::Parameter(format!("bad {what} entry {item:?}")))
        })
        .collect()
}

fn parse_activation(s: &str) -> Result<Activation> {
    if s == "relu" {
        return Ok(Activation::Relu);
    }
    if let Some(slope) = s.strip_prefix("leaky:") {
        let slope: f64 = slope
            .parse()
            .map_err(|_| Error::Parameter(format!("bad leaky relu slope {slope:?}")))?;
        return Ok(Activation::LeakyRelu(slope));
    }
    Err(Error::Parameter(format!(
        "unknown activation {s:?}, expected relu or leaky:<slope>"
    )))
}

fn parse_scalar<T: std::str::FromStr>(what: &str, s: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::Parameter(format!("bad {what} value {s:?}")))
}

/// Sibling t10k file for a train-split path, used when no explicit
/// evaluation files are given.
fn default_val_path(train_path: &Path) -> PathBuf {
    let name = train_path
        .file_name()
        .map(|n| n.to_string_lossy().replace("train", "t10k"))
        .unwrap_or_else(|| "t10k".into());
    train_path.with_file_name(name)
}

/// Resolves the effective configuration from defaults, the optional config
/// file, and flags, in increasing precedence.
pub fn resolve(args: &TrainArgs) -> Result<RunConfig> {
    let file = match &args.shared.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let file_get = |key: &str| file.get(key).map(String::as_str);

    // Each setting folds flag over file over default.
    let mnist_images = args
        .mnist_images
        .clone()
        .or_else(|| file_get("mnist_images").map(PathBuf::from))
        .ok_or_else(|| {
            Error::Parameter("--mnist-images is required (flag or config file)".into())
        })?;
    let mnist_labels = args
        .mnist_labels
        .clone()
        .or_else(|| file_get("mnist_labels").map(PathBuf::from))
        .ok_or_else(|| {
            Error::Parameter("--mnist-labels is required (flag or config file)".into())
        })?;
    let val_images = args
        .val_images
        .clone()
        .or_else(|| file_get("val_images").map(PathBuf::from))
        .unwrap_or_else(|| default_val_path(&mnist_images));
    let val_labels = args
        .val_labels
        .clone()
        .or_else(|| file_get("val_labels").map(PathBuf::from))
        .unwrap_or_else(|| default_val_path(&mnist_labels));

    let limit_train = match (&args.limit_train, file_get("limit_train")) {
        (Some(v), _) => Some(*v),
        (None, Some(s)) if s != "none" => Some(parse_scalar("limit_train", s)?),
        _ => None,
    };
    let limit_val = match (&args.limit_val, file_get("limit_val")) {
        (Some(v), _) => Some(*v),
        (None, Some(s)) if s != "none" => Some(parse_scalar("limit_val", s)?),
        _ => None,
    };

    let hidden_dims = match (&args.hidden_dims, file_get("hidden_dims")) {
        (Some(s), _) => parse_list("hidden_dims", s)?,
        (None, Some(s)) => parse_list("hidden_dims", s)?,
        _ => vec![512, 256],
    };
    let feature_dim = args
        .feature_dim
        .map(Ok)
        .or_else(|| file_get("feature_dim").map(|s| parse_scalar("feature_dim", s)))
        .transpose()?
        .unwrap_or(2);
    let activation = match (&args.activation, file_get("activation")) {
        (Some(s), _) => parse_activation(s)?,
        (None, Some(s)) => parse_activation(s)?,
        _ => Activation::Relu,
    };

    let lambda_c = match (&args.lambda_c, file_get("lambda_c")) {
        (Some(s), _) => parse_list("lambda_c", s)?,
        (None, Some(s)) => parse_list("lambda_c", s)?,
        _ => vec![0.1],
    };
    let lambda_g = match (&args.lambda_g, file_get("lambda_g")) {
        (Some(s), _) => parse_list("lambda_g", s)?,
        (None, Some(s)) => parse_list("lambda_g", s)?,
        _ => vec![0.1],
    };
    let alpha = args
        .alpha
        .map(Ok)
        .or_else(|| file_get("alpha").map(|s| parse_scalar("alpha", s)))
        .transpose()?
        .unwrap_or(DEFAULT_CENTER_UPDATE_RATE);

    let optimizer = match (&args.optimizer, file_get("optimizer")) {
        (Some(s), _) => OptimizerKind::parse(s)?,
        (None, Some(s)) => OptimizerKind::parse(s)?,
        _ => OptimizerKind::Sgd,
    };
    let lr = args
        .lr
        .map(Ok)
        .or_else(|| file_get("lr").map(|s| parse_scalar("lr", s)))
        .transpose()?
        .unwrap_or_else(|| optimizer.default_lr());
    let momentum = args
        .momentum
        .map(Ok)
        .or_else(|| file_get("momentum").map(|s| parse_scalar("momentum", s)))
        .transpose()?
        .unwrap_or(0.9);
    let lr_decay_epochs = match (&args.lr_decay_epochs, file_get("lr_decay_epochs")) {
        (Some(s), _) if !s.is_empty() => parse_list("lr_decay_epochs", s)?,
        (None, Some(s)) if !s.is_empty() => parse_list("lr_decay_epochs", s)?,
        _ => Vec::new(),
    };
    let lr_decay_factor = args
        .lr_decay_factor
        .map(Ok)
        .or_else(|| file_get("lr_decay_factor").map(|s| parse_scalar("lr_decay_factor", s)))
        .transpose()?
        .unwrap_or(10.0);

    let epochs = args
        .epochs
        .map(Ok)
        .or_else(|| file_get("epochs").map(|s| parse_scalar("epochs", s)))
        .transpose()?
        .unwrap_or(20);
    let batch_size = args
        .batch_size
        .map(Ok)
        .or_else(|| file_get("batch_size").map(|s| parse_scalar("batch_size", s)))
        .transpose()?
        .unwrap_or(128);
    let seed = args
        .shared
        .seed
        .map(Ok)
        .or_else(|| file_get("seed").map(|s| parse_scalar("seed", s)))
        .transpose()?
        .unwrap_or(0);
    let runs = args
        .runs
        .map(Ok)
        .or_else(|| file_get("runs").map(|s| parse_scalar("runs", s)))
        .transpose()?
        .unwrap_or(3);
    let out = args
        .shared
        .out
        .clone()
        .or_else(|| file_get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    if runs == 0 {
        return Err(Error::Parameter("runs must be at least 1".into()));
    }
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be at least 1".into()));
    }
    if lambda_c.is_empty() || lambda_g.is_empty() {
        return Err(Error::Parameter("the lambda grid must be nonempty".into()));
    }

    Ok(RunConfig {
        mnist_images,
        mnist_labels,
        val_images,
        val_labels,
        limit_train,
        limit_val,
        hidden_dims,
        feature_dim,
        activation,
        lambda_c,
        lambda_g,
        alpha,
        optimizer,
        lr,
        momentum,
        lr_decay_epochs,
        lr_decay_factor,
        epochs,
        batch_size,
        seed,
        runs,
        out,
    })
}
