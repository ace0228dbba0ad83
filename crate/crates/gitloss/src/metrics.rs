//! Evaluation: classification accuracy, inter/intra-class distance
//! statistics over an embedding set, and the Euclidean-distance verification
//! protocol with 10-fold cross-validated thresholds.
//!
//! Distance definitions used throughout: per-class centroids are feature
//! means; the intra-class distance is the mean distance from each sample to
//! its own centroid; the inter-class distance is the mean over unordered
//! centroid pairs. Both scale linearly with the features and ignore
//! translations.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Embedded samples with their class labels.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl EmbeddingSet {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::dimension(
                "embeddings vs labels",
                features.shape(),
                (labels.len(), 1),
            ));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("embedding features".into()));
        }
        Ok(EmbeddingSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Inter/intra-class distance summary of an embedding set.
#[derive(Debug, Clone)]
pub struct DistanceReport {
    pub inter_dist: f64,
    pub intra_dist: f64,
    /// One row per class present, ordered by class index.
    pub centroids: Matrix,
    /// The class indices the centroid rows correspond to.
    pub classes: Vec<usize>,
}

/// Outcome of the 10-fold verification protocol.
#[derive(Debug, Clone)]
pub struct VerificationResult {
    /// Mean of the per-fold accuracies.
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Distance threshold each fold selected on the other nine.
    pub thresholds: Vec<f64>,
}

/// Fraction of argmax-correct rows. Ties pick the lowest class index.
pub fn accuracy_from_logits(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Parameter("accuracy over an empty batch".into()));
    }
    if logits.rows() != labels.len() {
        return Err(Error::dimension(
            "logits vs labels",
            logits.shape(),
            (labels.len(), 1),
        ));
    }
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Fraction of exact prediction matches.
pub fn accuracy_from_predictions(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Parameter("accuracy over an empty batch".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::dimension(
            "predictions vs labels",
            (predictions.len(), 1),
            (labels.len(), 1),
        ));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-class centroids plus the mean intra- and inter-class distances.
///
/// Needs at least two classes (the inter distance is undefined otherwise)
/// and at least one sample per present class by construction.
pub fn distance_report(emb: &EmbeddingSet) -> Result<DistanceReport> {
    if emb.is_empty() {
        return Err(Error::Parameter("distance report over an empty set".into()));
    }
    let mut classes: Vec<usize> = emb.labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Parameter(
            "inter-class distance needs at least two classes".into(),
        ));
    }
    let dim = emb.dim();
    let index_of = |class: usize| classes.binary_search(&class).expect("label seen above");

    let mut centroids = Matrix::zeros(classes.len(), dim);
    let mut counts = vec![0usize; classes.len()];
    for (i, &y) in emb.labels.iter().enumerate() {
        let idx = index_of(y);
        counts[idx] += 1;
        let c = centroids.row_mut(idx);
        for (ck, &xk) in c.iter_mut().zip(emb.features.row(i)) {
            *ck += xk;
        }
    }
    for (idx, &count) in counts.iter().enumerate() {
        let inv = 1.0 / count as f64;
        for ck in centroids.row_mut(idx) {
            *ck *= inv;
        }
    }

    let intra_dist = emb
        .labels
        .iter()
        .enumerate()
        .map(|(i, &y)| euclidean(emb.features.row(i), centroids.row(index_of(y))))
        .sum::<f64>()
        / emb.len() as f64;

    let mut inter_sum = 0.0;
    let mut inter_pairs = 0usize;
    for a in 0..classes.len() {
        for b in (a + 1)..classes.len() {
            inter_sum += euclidean(centroids.row(a), centroids.row(b));
            inter_pairs += 1;
        }
    }
    Ok(DistanceReport {
        inter_dist: inter_sum / inter_pairs as f64,
        intra_dist,
        centroids,
        classes,
    })
}

/// One scored verification pair: distance between the two embeddings and
/// whether they actually belong to the same class.
pub type ScoredPair = (f64, bool);

/// 10-fold verification over precomputed distances.
///
/// The pair order is taken as given (shuffle beforehand if the source is
/// ordered); folds are contiguous slices. Each fold's threshold is chosen on
/// the other nine folds by scanning the midpoints of their sorted distances
/// and keeping the first threshold that maximizes training accuracy of the
/// rule `same <=> distance < threshold`.
pub fn verify_10fold_scores(scores: &[ScoredPair]) -> Result<VerificationResult> {
    const FOLDS: usize = 10;
    if scores.len() < FOLDS {
        return Err(Error::Parameter(format!(
            "verification needs at least {FOLDS} pairs, got {}",
            scores.len()
        )));
    }
    if scores.iter().all(|&(_, same)| same) || scores.iter().all(|&(_, same)| !same) {
        return Err(Error::Parameter(
            "verification needs both same and different pairs".into(),
        ));
    }
    let n = scores.len();
    let bound = |f: usize| f * n / FOLDS;

    let mut fold_accuracies = Vec::with_capacity(FOLDS);
    let mut thresholds = Vec::with_capacity(FOLDS);
    for f in 0..FOLDS {
        let (lo, hi) = (bound(f), bound(f + 1));
        let mut same_train: Vec<f64> = Vec::new();
        let mut diff_train: Vec<f64> = Vec::new();
        let mut all_train: Vec<f64> = Vec::with_capacity(n - (hi - lo));
        for (i, &(d, same)) in scores.iter().enumerate() {
            if i >= lo && i < hi {
                continue;
            }
            all_train.push(d);
            if same {
                same_train.push(d);
            } else {
                diff_train.push(d);
            }
        }
        all_train.sort_by(f64::total_cmp);
        same_train.sort_by(f64::total_cmp);
        diff_train.sort_by(f64::total_cmp);

        // Accuracy of `same <=> d < t` on the training pairs, by counting
        // how many of each kind fall below t.
        let train_correct = |t: f64| -> usize {
            let same_below = same_train.partition_point(|&d| d < t);
            let diff_below = diff_train.partition_point(|&d| d < t);
            same_below + (diff_train.len() - diff_below)
        };

        let mut best_threshold = f64::NEG_INFINITY;
        let mut best_correct = 0usize;
        let mut have_candidate = false;
        for w in all_train.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let correct = train_correct(t);
            if !have_candidate || correct > best_correct {
                best_threshold = t;
                best_correct = correct;
                have_candidate = true;
            }
        }
        if !have_candidate {
            // Single training distance; no midpoint exists. Use it directly.
            best_threshold = all_train[0];
        }

        let fold = &scores[lo..hi];
        let correct = fold
            .iter()
            .filter(|&&(d, same)| (d < best_threshold) == same)
            .count();
        fold_accuracies.push(if fold.is_empty() {
            // Contiguous split over >= 10 pairs never leaves a fold empty,
            // but stay defensive about the arithmetic.
            0.0
        } else {
            correct as f64 / fold.len() as f64
        });
        thresholds.push(best_threshold);
    }
    let accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    Ok(VerificationResult {
        accuracy,
        fold_accuracies,
        thresholds,
    })
}

/// A verification pair in feature form.
#[derive(Debug, Clone)]
pub struct VerificationPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub same: bool,
}

/// 10-fold verification from raw feature pairs; scores are their Euclidean
/// distances.
pub fn verify_10fold(pairs: &[VerificationPair]) -> Result<VerificationResult> {
    let scores: Vec<ScoredPair> = pairs
        .iter()
        .map(|p| (euclidean(&p.a, &p.b), p.same))
        .collect();
    verify_10fold_scores(&scores)
}

/// Writes the embedding exchange CSV: header `label,f1..fd`, one row per
/// sample, `.` decimal separator.
pub fn write_embeddings_csv(path: &Path, emb: &EmbeddingSet) -> Result<()> {
    let mut out = String::new();
    out.push_str("label");
    for k in 1..=emb.dim() {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    for (i, &label) in emb.labels.iter().enumerate() {
        let _ = write!(out, "{label}");
        for &v in emb.features.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the embedding exchange CSV written by [`write_embeddings_csv`].
pub fn read_embeddings_csv(path: &Path) -> Result<EmbeddingSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty embedding file"))?;
    let dim = header.split(',').count().saturating_sub(1);
    if dim == 0 || !header.starts_with("label") {
        return Err(Error::format(
            path,
            format!("expected header label,f1..fd, found {header:?}"),
        ));
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label: usize = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("bad label on line {}", lineno + 2)))?;
        labels.push(label);
        let mut seen = 0usize;
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(path, format!("bad feature value on line {}", lineno + 2))
            })?;
            data.push(v);
            seen += 1;
        }
        if seen != dim {
            return Err(Error::format(
                path,
                format!("line {} has {seen} features, expected {dim}", lineno + 2),
            ));
        }
    }
    if labels.is_empty() {
        return Err(Error::Parameter(format!(
            "{}: embedding file holds no samples",
            path.display()
        )));
    }
    let features = Matrix::new(labels.len(), dim, data)?;
    EmbeddingSet::new(features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn mat(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    // ---- accuracy ----

    #[test]
    fn accuracy_trivial_cases() {
        assert_eq!(accuracy_from_predictions(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy_from_predictions(&[0, 0, 0], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(
            accuracy_from_predictions(&[1, 2, 3, 0], &[1, 2, 3, 9]).unwrap(),
            0.75
        );
    }

    #[test]
    fn accuracy_argmax_ties_break_low() {
        let logits = mat(&[vec![1.0, 1.0, 0.0]]);
        assert_eq!(accuracy_from_logits(&logits, &[0]).unwrap(), 1.0);
        assert_eq!(accuracy_from_logits(&logits, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_rejects_empty_input() {
        assert!(accuracy_from_predictions(&[], &[]).is_err());
    }

    // ---- distance report ----

    #[test]
    fn distance_report_point_mass_classes() {
        let features = mat(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![2.0, 0.0]]);
        let report =
            distance_report(&EmbeddingSet::new(features, vec![0, 0, 1]).unwrap()).unwrap();
        assert_eq!(report.intra_dist, 0.0);
        assert_eq!(report.inter_dist, 2.0);
    }

    #[test]
    fn distance_report_hand_computation() {
        // 1-D: class A = {0, 2} and B = {10, 12} -> centroids 1 and 11.
        let features = mat(&[vec![0.0], vec![2.0], vec![10.0], vec![12.0]]);
        let report =
            distance_report(&EmbeddingSet::new(features, vec![0, 0, 1, 1]).unwrap()).unwrap();
        assert_eq!(report.intra_dist, 1.0);
        assert_eq!(report.inter_dist, 10.0);
        assert_eq!(report.centroids, mat(&[vec![1.0], vec![11.0]]));
    }

    #[test]
    fn distance_report_is_translation_invariant() {
        let mut rng = SeededRng::new(4);
        let features = rng.gaussian_matrix(20, 3, 0.0, 2.0).unwrap();
        let labels: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let base =
            distance_report(&EmbeddingSet::new(features.clone(), labels.clone()).unwrap())
                .unwrap();
        let mut shifted = features;
        for i in 0..shifted.rows() {
            for (k, t) in [5.0, -3.0, 0.25].iter().enumerate() {
                shifted.set(i, k, shifted.get(i, k) + t);
            }
        }
        let moved = distance_report(&EmbeddingSet::new(shifted, labels).unwrap()).unwrap();
        assert!((base.inter_dist - moved.inter_dist).abs() < 1e-9);
        assert!((base.intra_dist - moved.intra_dist).abs() < 1e-9);
    }

    #[test]
    fn distance_report_scales_linearly() {
        let mut rng = SeededRng::new(6);
        let features = rng.gaussian_matrix(30, 2, 0.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let base =
            distance_report(&EmbeddingSet::new(features.clone(), labels.clone()).unwrap())
                .unwrap();
        let s = 3.5;
        let scaled =
            distance_report(&EmbeddingSet::new(features.scale(s), labels).unwrap()).unwrap();
        assert!((scaled.inter_dist - s * base.inter_dist).abs() < 1e-9);
        assert!((scaled.intra_dist - s * base.intra_dist).abs() < 1e-9);
    }

    #[test]
    fn distance_report_rejects_a_single_class() {
        let features = mat(&[vec![1.0], vec![2.0]]);
        assert!(distance_report(&EmbeddingSet::new(features, vec![0, 0]).unwrap()).is_err());
    }

    #[test]
    fn zero_noise_blobs_recover_true_center_geometry() {
        let mut rng = SeededRng::new(8);
        let (ds, centers) = crate::data::make_blobs(&mut rng, 4, 10, 3, 12.0, 0.0).unwrap();
        let report = distance_report(
            &EmbeddingSet::new(ds.images.clone(), ds.labels.clone()).unwrap(),
        )
        .unwrap();
        assert!(report.intra_dist < 1e-12);
        let mut expected = 0.0;
        let mut pairs = 0;
        for a in 0..4 {
            for b in (a + 1)..4 {
                expected += euclidean(centers.row(a), centers.row(b));
                pairs += 1;
            }
        }
        expected /= pairs as f64;
        assert!((report.inter_dist - expected).abs() < 1e-9);
    }

    // ---- verification ----

    #[test]
    fn separable_pairs_verify_perfectly() {
        // All same-pair distances strictly below all different-pair ones.
        let mut scores = Vec::new();
        let mut rng = SeededRng::new(1);
        for _ in 0..50 {
            scores.push((rng.uniform(0.0, 1.0), true));
            scores.push((rng.uniform(2.0, 3.0), false));
        }
        let result = verify_10fold_scores(&scores).unwrap();
        assert_eq!(result.accuracy, 1.0);
        assert!(result.fold_accuracies.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn identical_same_pairs_verify_with_positive_threshold() {
        let mut rng = SeededRng::new(2);
        let mut pairs = Vec::new();
        for _ in 0..30 {
            let f: Vec<f64> = (0..4).map(|_| rng.gaussian(0.0, 1.0)).collect();
            pairs.push(VerificationPair {
                a: f.clone(),
                b: f,
                same: true,
            });
            let g: Vec<f64> = (0..4).map(|_| rng.gaussian(0.0, 1.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.gaussian(5.0, 1.0)).collect();
            pairs.push(VerificationPair {
                a: g,
                b: h,
                same: false,
            });
        }
        let result = verify_10fold(&pairs).unwrap();
        assert_eq!(result.accuracy, 1.0);
        assert!(result.thresholds.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn coin_flip_labels_sit_at_chance_level() {
        let mut rng = SeededRng::new(3);
        let scores: Vec<ScoredPair> = (0..10_000)
            .map(|_| (rng.uniform(0.0, 1.0), rng.next_f64() < 0.5))
            .collect();
        let result = verify_10fold_scores(&scores).unwrap();
        assert!(
            (0.47..=0.53).contains(&result.accuracy),
            "chance-level accuracy came out at {}",
            result.accuracy
        );
    }

    #[test]
    fn accuracy_is_the_mean_of_fold_accuracies() {
        let mut rng = SeededRng::new(9);
        let scores: Vec<ScoredPair> = (0..137)
            .map(|_| (rng.uniform(0.0, 2.0), rng.next_f64() < 0.4))
            .collect();
        let result = verify_10fold_scores(&scores).unwrap();
        let mean = result.fold_accuracies.iter().sum::<f64>() / 10.0;
        assert_eq!(result.accuracy, mean);
        assert_eq!(result.fold_accuracies.len(), 10);
        assert_eq!(result.thresholds.len(), 10);
    }

    #[test]
    fn verification_is_invariant_under_increasing_distance_transforms() {
        let mut rng = SeededRng::new(5);
        let scores: Vec<ScoredPair> = (0..200)
            .map(|_| {
                let same = rng.next_f64() < 0.5;
                let d = if same {
                    rng.uniform(0.0, 1.2)
                } else {
                    rng.uniform(0.8, 2.0)
                };
                (d, same)
            })
            .collect();
        let base = verify_10fold_scores(&scores).unwrap();
        // Strictly increasing transform of every distance.
        let warped: Vec<ScoredPair> = scores
            .iter()
            .map(|&(d, same)| (d * d * d + 2.0 * d, same))
            .collect();
        let transformed = verify_10fold_scores(&warped).unwrap();
        assert_eq!(base.fold_accuracies, transformed.fold_accuracies);
    }

    #[test]
    fn too_few_or_one_sided_pairs_are_rejected() {
        let scores = vec![(0.1, true); 9];
        assert!(verify_10fold_scores(&scores).is_err());
        let one_sided = vec![(0.1, true); 20];
        assert!(verify_10fold_scores(&one_sided).is_err());
    }

    // ---- embeddings CSV ----

    #[test]
    fn embeddings_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.csv");
        let mut rng = SeededRng::new(11);
        let features = rng.gaussian_matrix(12, 2, 0.0, 3.0).unwrap();
        let labels: Vec<usize> = (0..12).map(|i| i % 5).collect();
        let emb = EmbeddingSet::new(features, labels).unwrap();
        write_embeddings_csv(&path, &emb).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("label,f1,f2\n"));
        let back = read_embeddings_csv(&path).unwrap();
        assert_eq!(back.labels, emb.labels);
        // Display -> parse is exact for f64.
        assert_eq!(back.features, emb.features);
    }

    #[test]
    fn embeddings_csv_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "label,f1\nx,1.0\n").unwrap();
        assert!(read_embeddings_csv(&path).is_err());
        std::fs::write(&path, "label,f1\n").unwrap();
        assert!(read_embeddings_csv(&path).is_err());
        std::fs::write(&path, "nope\n").unwrap();
        assert!(read_embeddings_csv(&path).is_err());
    }
}
