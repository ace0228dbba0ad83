//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gitloss::checkpoint::save_checkpoint;
use gitloss::data::{load_idx, Dataset};
use gitloss::gradcheck::{
    finite_diff_check, network_finite_diff_check, standard_network_scene, standard_scene,
    LossTerm,
};
use gitloss::loss::{CenterBank, LossWeights};
use gitloss::metrics::{
    read_embeddings_csv, verify_10fold_scores, write_embeddings_csv, ScoredPair,
    VerificationResult,
};
use gitloss::rng::SeededRng;
use gitloss::{Error, Result};

use crate::cli::{CurvesArgs, ScatterArgs, SharedArgs, TrainArgs, VerifyArgs};
use crate::config::{resolve, RunConfig};
use crate::style::{fail_marker, pass_marker};
use crate::svg::{line_chart, scatter_plot};
use crate::sweep::{run_grid, SweepRecord};
use crate::trainer::{train_run, EpochRow, TrainSettings};

/// Threshold every gradient check must beat.
pub const GRADCHECK_THRESHOLD: f64 = 1e-5;

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn out_dir(shared: &SharedArgs) -> PathBuf {
    shared.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn load_split(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let ds = load_idx(images, labels)?;
    match limit {
        Some(n) if n < ds.len() => ds.truncated(n),
        _ => Ok(ds),
    }
}

fn settings_from(cfg: &RunConfig, weights: LossWeights) -> TrainSettings {
    TrainSettings {
        mlp: cfg.mlp_config(),
        weights,
        optimizer: cfg.optimizer,
        momentum: cfg.momentum,
        schedule: cfg.schedule(),
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let weights = cfg.single_weights()?;
    let train = load_split(&cfg.mnist_images, &cfg.mnist_labels, cfg.limit_train)?;
    let val = load_split(&cfg.val_images, &cfg.val_labels, cfg.limit_val)?;

    ensure_dir(&cfg.out)?;
    write_text(&cfg.out.join("config.snapshot"), &cfg.snapshot())?;

    let settings = settings_from(&cfg, weights);
    let mut epochs_csv = String::from(EpochRow::CSV_HEADER);
    epochs_csv.push('\n');
    let outcome = train_run(&train, &val, &settings, |row| {
        epochs_csv.push_str(&row.to_csv_line());
        epochs_csv.push('\n');
        println!(
            "epoch {:>3}  loss {:.6}  train {:.2}%  val {:.2}%  inter {:.3}  intra {:.3}",
            row.epoch,
            row.mean_loss,
            row.train_acc_pct,
            row.val_acc_pct,
            row.inter_dist,
            row.intra_dist
        );
    })?;

    write_text(&cfg.out.join("epochs.csv"), &epochs_csv)?;
    save_checkpoint(&cfg.out.join("model.ckpt"), &settings.mlp, &outcome.state)?;
    write_embeddings_csv(&cfg.out.join("embeddings.csv"), &outcome.embeddings)?;
    println!(
        "final: val {:.2}%  inter {:.3}  intra {:.3}  -> {}",
        outcome.final_val_acc_pct,
        outcome.final_inter_dist,
        outcome.final_intra_dist,
        cfg.out.display()
    );
    Ok(())
}

pub fn cmd_sweep(args: &TrainArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let train = load_split(&cfg.mnist_images, &cfg.mnist_labels, cfg.limit_train)?;
    let val = load_split(&cfg.val_images, &cfg.val_labels, cfg.limit_val)?;

    ensure_dir(&cfg.out)?;
    write_text(&cfg.out.join("config.snapshot"), &cfg.snapshot())?;

    // The per-cell weights replace the lambdas; alpha and the rest carry over.
    let base = settings_from(&cfg, LossWeights::new(0.0, 0.0, cfg.alpha)?);
    let records = run_grid(
        &train,
        &val,
        &base,
        &cfg.lambda_c,
        &cfg.lambda_g,
        cfg.runs,
        cfg.seed,
        |record| {
            println!(
                "cell lambda_c={} lambda_g={}: {}",
                record.lambda_c,
                record.lambda_g,
                match &record.error {
                    None => format!(
                        "loss {:.4} val {:.2}% inter {:.3} intra {:.3}",
                        record.mean_loss,
                        record.val_acc_pct,
                        record.inter_dist,
                        record.intra_dist
                    ),
                    Some(e) => format!("failed ({e})"),
                }
            );
        },
    );

    let mut csv = String::from(SweepRecord::CSV_HEADER);
    csv.push('\n');
    for record in &records {
        csv.push_str(&record.to_csv_line());
        csv.push('\n');
    }
    write_text(&cfg.out.join("sweep.csv"), &csv)?;
    println!("{} records -> {}", records.len(), cfg.out.join("sweep.csv").display());
    Ok(())
}

/// The two loss-term curves over a signed center distance `t`:
/// `lambda_c * t^2 / 2` and `lambda_g / (1 + t^2)`.
pub fn curves_rows(
    lambda_c: f64,
    lambda_g: f64,
    t_min: f64,
    t_max: f64,
    steps: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    if steps < 2 {
        return Err(Error::Parameter(format!(
            "curves need at least 2 steps, got {steps}"
        )));
    }
    if !(t_min < t_max) {
        return Err(Error::Parameter(format!(
            "curve range [{t_min}, {t_max}] is empty"
        )));
    }
    let n = steps - 1;
    Ok((0..steps)
        .map(|k| {
            // Endpoint-exact interpolation; symmetric ranges hit 0 exactly.
            let t = (t_min * (n - k) as f64 + t_max * k as f64) / n as f64;
            (t, lambda_c * t * t / 2.0, lambda_g / (1.0 + t * t))
        })
        .collect())
}

pub fn cmd_curves(args: &CurvesArgs) -> Result<()> {
    let rows = curves_rows(args.lambda_c, args.lambda_g, args.t_min, args.t_max, args.steps)?;
    let out = out_dir(&args.shared);
    ensure_dir(&out)?;

    let mut csv = String::from("t,l_c,l_g\n");
    for &(t, lc, lg) in &rows {
        let _ = writeln!(csv, "{t},{lc},{lg}");
    }
    let csv_path = out.join("curves.csv");
    write_text(&csv_path, &csv)?;
    println!("{} rows -> {}", rows.len(), csv_path.display());

    if args.svg {
        let figures = out.join("figures");
        ensure_dir(&figures)?;
        let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let series = vec![
            (
                format!("center term ({} t^2 / 2)", args.lambda_c),
                rows.iter().map(|r| r.1).collect::<Vec<f64>>(),
            ),
            (
                format!("repulsion term ({} / (1 + t^2))", args.lambda_g),
                rows.iter().map(|r| r.2).collect::<Vec<f64>>(),
            ),
        ];
        let svg = line_chart("loss terms over center distance", &x, &series);
        let svg_path = figures.join("curves.svg");
        write_text(&svg_path, &svg)?;
        println!("figure -> {}", svg_path.display());
    }
    Ok(())
}

pub fn cmd_scatter(args: &ScatterArgs) -> Result<()> {
    let emb = read_embeddings_csv(&args.embeddings)?;
    if emb.dim() != 2 {
        return Err(Error::Parameter(format!(
            "scatter needs 2-D embeddings, this file holds {} dimensions; \
             retrain with --feature-dim 2",
            emb.dim()
        )));
    }
    let mut classes: Vec<usize> = emb.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let groups: Vec<(usize, Vec<(f64, f64)>)> = classes
        .iter()
        .map(|&class| {
            let points = emb
                .labels
                .iter()
                .enumerate()
                .filter(|&(_, &l)| l == class)
                .map(|(i, _)| (emb.features.get(i, 0), emb.features.get(i, 1)))
                .collect();
            (class, points)
        })
        .collect();

    let out = out_dir(&args.shared);
    let figures = out.join("figures");
    ensure_dir(&figures)?;
    let svg = scatter_plot("embedding scatter by class", &groups);
    let path = figures.join("scatter.svg");
    write_text(&path, &svg)?;
    println!(
        "{} points, {} classes -> {}",
        emb.len(),
        groups.len(),
        path.display()
    );
    Ok(())
}

/// Samples the verification pairs: half same-class, half different-class,
/// then shuffles the order (the fold split is positional).
pub fn sample_pairs(
    emb: &gitloss::metrics::EmbeddingSet,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<ScoredPair>> {
    let mut by_class: Vec<Vec<usize>> = Vec::new();
    let mut classes: Vec<usize> = emb.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    for &class in &classes {
        by_class.push(
            emb.labels
                .iter()
                .enumerate()
                .filter(|&(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect(),
        );
    }
    if classes.len() < 2 {
        return Err(Error::Parameter(
            "verification needs at least two classes in the embedding file".into(),
        ));
    }
    let pairable: Vec<usize> = (0..by_class.len())
        .filter(|&c| by_class[c].len() >= 2)
        .collect();
    if pairable.is_empty() {
        return Err(Error::Parameter(
            "no class has two samples to form a same-class pair".into(),
        ));
    }
    if n_pairs < 10 {
        return Err(Error::Parameter(format!(
            "verification needs at least 10 pairs, got {n_pairs}"
        )));
    }

    let distance = |a: usize, b: usize| -> f64 {
        emb.features
            .row(a)
            .iter()
            .zip(emb.features.row(b))
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };

    let mut rng = SeededRng::new(seed);
    let n_same = n_pairs / 2;
    let mut scored: Vec<ScoredPair> = Vec::with_capacity(n_pairs);
    for _ in 0..n_same {
        let class = pairable[rng.index(pairable.len())];
        let members = &by_class[class];
        let a = members[rng.index(members.len())];
        let b = loop {
            let candidate = members[rng.index(members.len())];
            if candidate != a {
                break candidate;
            }
        };
        scored.push((distance(a, b), true));
    }
    for _ in 0..n_pairs - n_same {
        let ca = rng.index(classes.len());
        let cb = loop {
            let candidate = rng.index(classes.len());
            if candidate != ca {
                break candidate;
            }
        };
        let a = by_class[ca][rng.index(by_class[ca].len())];
        let b = by_class[cb][rng.index(by_class[cb].len())];
        scored.push((distance(a, b), false));
    }
    rng.shuffle(&mut scored);
    Ok(scored)
}

pub fn verification_csv(result: &VerificationResult) -> String {
    let mut csv = String::from("fold,threshold,accuracy\n");
    for (fold, (threshold, accuracy)) in result
        .thresholds
        .iter()
        .zip(&result.fold_accuracies)
        .enumerate()
    {
        let _ = writeln!(csv, "{fold},{threshold},{accuracy}");
    }
    let _ = writeln!(csv, "mean,,{}", result.accuracy);
    csv
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let emb = read_embeddings_csv(&args.embeddings)?;
    let seed = args.shared.seed.unwrap_or(0);
    let scored = sample_pairs(&emb, args.pairs, seed)?;
    let result = verify_10fold_scores(&scored)?;

    for (fold, (threshold, accuracy)) in result
        .thresholds
        .iter()
        .zip(&result.fold_accuracies)
        .enumerate()
    {
        println!("fold {fold}: accuracy {accuracy:.4} at threshold {threshold:.6}");
    }
    println!("mean accuracy over 10 folds: {:.4}", result.accuracy);

    let out = out_dir(&args.shared);
    ensure_dir(&out)?;
    let path = out.join("verification.csv");
    write_text(&path, &verification_csv(&result))?;
    println!("-> {}", path.display());
    Ok(())
}

/// Runs the five gradient checks. Returns true when all pass.
pub fn cmd_gradcheck(args: &SharedArgs) -> Result<bool> {
    let seed = args.seed.unwrap_or(0);
    let weights = LossWeights::new(0.1, 0.1, 0.5)?;
    let (features, labels, logits, bank) = standard_scene(seed, 8, 2, 10);

    let mut results: Vec<(&'static str, f64)> = Vec::with_capacity(5);
    for term in [LossTerm::Softmax, LossTerm::Center, LossTerm::Git, LossTerm::Joint] {
        let err = finite_diff_check(term, &features, &labels, &logits, &bank, &weights)?;
        results.push((term.name(), err));
    }
    let (net_config, net_state, net_input, net_labels) = standard_network_scene(seed);
    let net_bank = CenterBank::zeros(net_config.n_classes, net_config.feature_dim);
    let err = network_finite_diff_check(
        net_config.activation,
        &net_state,
        &net_input,
        &net_labels,
        &net_bank,
        &weights,
    )?;
    results.push(("network", err));

    let mut all_pass = true;
    let mut csv = String::from("check,max_rel_error,pass\n");
    for (name, err) in &results {
        let pass = *err < GRADCHECK_THRESHOLD;
        all_pass &= pass;
        let marker = if pass { pass_marker() } else { fail_marker() };
        println!("{marker} {name}: max relative error {err:.3e} (threshold {GRADCHECK_THRESHOLD:.0e})");
        let _ = writeln!(csv, "{name},{err},{pass}");
    }
    let out = out_dir(args);
    ensure_dir(&out)?;
    write_text(&out.join("gradcheck.csv"), &csv)?;
    Ok(all_pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_rows_hit_the_landmarks() {
        let rows = curves_rows(1.0, 1.0, -2.0, 2.0, 401).unwrap();
        assert_eq!(rows.len(), 401);
        let at_zero = rows.iter().find(|r| r.0 == 0.0).expect("0 in the grid");
        assert_eq!(at_zero.1, 0.0);
        assert_eq!(at_zero.2, 1.0); // repulsion term peaks at lambda_g
        let first = rows.first().unwrap();
        let last = rows.last().unwrap();
        assert_eq!(first.0, -2.0);
        assert_eq!(last.0, 2.0);
        assert_eq!(first.2, 1.0 / 5.0);
        assert_eq!(last.2, 1.0 / 5.0);
        assert_eq!(last.1, 2.0); // lambda_c * 4 / 2
    }

    #[test]
    fn curve_rows_are_even_and_monotone() {
        let rows = curves_rows(0.5, 2.0, -2.0, 2.0, 201).unwrap();
        let n = rows.len();
        for k in 0..n / 2 {
            let (t_a, lc_a, lg_a) = rows[k];
            let (t_b, lc_b, lg_b) = rows[n - 1 - k];
            assert_eq!(t_a, -t_b);
            assert!((lc_a - lc_b).abs() < 1e-12);
            assert!((lg_a - lg_b).abs() < 1e-12);
        }
        // Repulsion decays and center grows as |t| increases.
        for w in rows[n / 2..].windows(2) {
            assert!(w[0].2 > w[1].2);
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn curve_rows_validate_inputs() {
        assert!(curves_rows(1.0, 1.0, -2.0, 2.0, 1).is_err());
        assert!(curves_rows(1.0, 1.0, 2.0, -2.0, 10).is_err());
    }

    #[test]
    fn pair_sampling_is_balanced_and_deterministic() {
        let mut rng = SeededRng::new(9);
        let (ds, _) = gitloss::data::make_blobs(&mut rng, 4, 25, 3, 10.0, 0.2).unwrap();
        let emb =
            gitloss::metrics::EmbeddingSet::new(ds.images.clone(), ds.labels.clone()).unwrap();
        let a = sample_pairs(&emb, 200, 5).unwrap();
        let b = sample_pairs(&emb, 200, 5).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a.iter().filter(|p| p.1).count(), 100);
        let as_bits = |pairs: &[ScoredPair]| -> Vec<(u64, bool)> {
            pairs.iter().map(|&(d, s)| (d.to_bits(), s)).collect()
        };
        assert_eq!(as_bits(&a), as_bits(&b));
        let c = sample_pairs(&emb, 200, 6).unwrap();
        assert_ne!(as_bits(&a), as_bits(&c));
    }

    #[test]
    fn pair_sampling_rejects_single_class_embeddings() {
        let features = gitloss::Matrix::zeros(5, 2);
        let emb = gitloss::metrics::EmbeddingSet::new(features, vec![3; 5]).unwrap();
        assert!(sample_pairs(&emb, 100, 0).is_err());
    }
}
