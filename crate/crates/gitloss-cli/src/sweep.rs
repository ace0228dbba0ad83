//! The lambda_c x lambda_g grid runner.
//!
//! Each grid cell trains `runs` models with seeds derived from the base seed
//! (the same seed list in every cell, so cells are comparable) and records
//! the mean of the final-epoch metrics. A cell whose training fails is
//! recorded with a failure marker and the sweep moves on.

use gitloss::data::Dataset;
use gitloss::loss::LossWeights;
use gitloss::rng::SeededRng;
use gitloss::Result;

use crate::trainer::{train_run, TrainSettings};

/// One grid cell's aggregated outcome. Accuracies are percentages; `error`
/// is set when any of the cell's runs failed.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub lambda_c: f64,
    pub lambda_g: f64,
    pub mean_loss: f64,
    pub train_acc_pct: f64,
    pub val_acc_pct: f64,
    pub inter_dist: f64,
    pub intra_dist: f64,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub error: Option<String>,
}

impl SweepRecord {
    pub const CSV_HEADER: &'static str =
        "lambda_c,lambda_g,loss,train_acc_pct,val_acc_pct,inter_dist,intra_dist,runs,seeds,status";

    pub fn to_csv_line(&self) -> String {
        let seeds = self
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(";");
        match &self.error {
            None => format!(
                "{},{},{},{},{},{},{},{},{},ok",
                self.lambda_c,
                self.lambda_g,
                self.mean_loss,
                self.train_acc_pct,
                self.val_acc_pct,
                self.inter_dist,
                self.intra_dist,
                self.runs,
                seeds
            ),
            Some(message) => format!(
                "{},{},,,,,,{},{},failed: {}",
                self.lambda_c,
                self.lambda_g,
                self.runs,
                seeds,
                message.replace([',', '\n'], ";")
            ),
        }
    }
}

/// Seeds used for the repeated runs: one derived stream per run index.
pub fn run_seeds(base_seed: u64, runs: usize) -> Vec<u64> {
    let base = SeededRng::new(base_seed);
    (0..runs).map(|r| base.derive(r as u64).seed()).collect()
}

/// Trains one grid cell `runs` times and averages the final metrics.
pub fn run_cell(
    train: &Dataset,
    val: &Dataset,
    base: &TrainSettings,
    lambda_c: f64,
    lambda_g: f64,
    runs: usize,
    base_seed: u64,
) -> SweepRecord {
    let seeds = run_seeds(base_seed, runs);
    let mut record = SweepRecord {
        lambda_c,
        lambda_g,
        mean_loss: 0.0,
        train_acc_pct: 0.0,
        val_acc_pct: 0.0,
        inter_dist: 0.0,
        intra_dist: 0.0,
        runs,
        seeds: seeds.clone(),
        error: None,
    };
    let attempt = || -> Result<[f64; 5]> {
        let weights = LossWeights::new(lambda_c, lambda_g, base.weights.alpha)?;
        let mut sums = [0.0f64; 5];
        for &seed in &seeds {
            let settings = TrainSettings {
                weights,
                seed,
                ..base.clone()
            };
            let outcome = train_run(train, val, &settings, |_| {})?;
            let (loss, train_acc) = match outcome.rows.last() {
                Some(row) => (row.mean_loss, row.train_acc_pct),
                None => (f64::NAN, f64::NAN),
            };
            sums[0] += loss;
            sums[1] += train_acc;
            sums[2] += outcome.final_val_acc_pct;
            sums[3] += outcome.final_inter_dist;
            sums[4] += outcome.final_intra_dist;
        }
        for s in &mut sums {
            *s /= runs as f64;
        }
        Ok(sums)
    };
    match attempt() {
        Ok([loss, train_acc, val_acc, inter, intra]) => {
            record.mean_loss = loss;
            record.train_acc_pct = train_acc;
            record.val_acc_pct = val_acc;
            record.inter_dist = inter;
            record.intra_dist = intra;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Runs the whole grid in row-major order (lambda_c outer, lambda_g inner).
/// `on_cell` fires after each completed cell.
pub fn run_grid(
    train: &Dataset,
    val: &Dataset,
    base: &TrainSettings,
    lambda_c_grid: &[f64],
    lambda_g_grid: &[f64],
    runs: usize,
    base_seed: u64,
    mut on_cell: impl FnMut(&SweepRecord),
) -> Vec<SweepRecord> {
    let mut records = Vec::with_capacity(lambda_c_grid.len() * lambda_g_grid.len());
    for &lc in lambda_c_grid {
        for &lg in lambda_g_grid {
            let record = run_cell(train, val, base, lc, lg, runs, base_seed);
            on_cell(&record);
            records.push(record);
        }
    }
    records
}
