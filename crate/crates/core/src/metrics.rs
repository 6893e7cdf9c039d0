//! Evaluation of trained models: ensemble prediction over retained samples,
//! test accuracy, expected calibration error, and moment discrepancy against
//! the closed-form posterior on the conjugate task.
//!
//! Retained samples are pooled across agents for prediction; frequentist
//! baselines pass their final iterate as a single "sample". All functions
//! here are pure.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, Dataset, GaussianPosterior, ModelSpec};

/// Default number of equal-width confidence bins.
pub const DEFAULT_CALIBRATION_BINS: usize = 10;

/// Per-bin calibration statistics over `[0, 1]` split into `T` equal-width,
/// right-inclusive intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBins {
    pub counts: Vec<usize>,
    pub accuracy: Vec<f64>,
    pub confidence: Vec<f64>,
    pub total: usize,
}

impl CalibrationBins {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    /// `sum_t (|B_t|/n) |acc(B_t) - conf(B_t)|`; empty bins contribute zero.
    pub fn expected_calibration_error(&self) -> f64 {
        let n = self.total as f64;
        self.counts
            .iter()
            .zip(self.accuracy.iter().zip(&self.confidence))
            .filter(|(&count, _)| count > 0)
            .map(|(&count, (acc, conf))| (count as f64 / n) * (acc - conf).abs())
            .sum()
    }
}

/// Predicted class and its probability; ties go to the lowest class index.
fn top_class(prediction: &ArrayView1<f64>) -> (usize, f64) {
    let mut best = 0;
    let mut conf = prediction[0];
    for (c, &p) in prediction.iter().enumerate().skip(1) {
        if p > conf {
            best = c;
            conf = p;
        }
    }
    (best, conf)
}

fn check_aligned(predictions: &[Array1<f64>], labels: &[usize]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            what: "predictions vs labels",
            expected: predictions.len(),
            actual: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate an empty test set".into(),
        ));
    }
    for (i, (p, &label)) in predictions.iter().zip(labels).enumerate() {
        if label >= p.len() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {}-class prediction at row {i}",
                p.len()
            )));
        }
    }
    Ok(())
}

/// Bayesian model average: the arithmetic mean of the per-sample predictive
/// distributions at `input`.
pub fn ensemble_predict(
    samples: &[Array1<f64>],
    spec: &ModelSpec,
    input: &ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "ensemble prediction needs at least one sample".into(),
        ));
    }
    let mut mean = Array1::zeros(spec.n_classes);
    for theta in samples {
        mean += &models::predictive_distribution(spec, theta, input)?;
    }
    Ok(mean / samples.len() as f64)
}

/// Bins predictions by top-class confidence into `bins` equal-width,
/// right-inclusive intervals of `[0, 1]`.
pub fn calibration_bins(
    predictions: &[Array1<f64>],
    labels: &[usize],
    bins: usize,
) -> Result<CalibrationBins> {
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "calibration needs at least one bin".into(),
        ));
    }
    check_aligned(predictions, labels)?;

    let mut counts = vec![0usize; bins];
    let mut hits = vec![0usize; bins];
    let mut conf_sums = vec![0.0; bins];
    for (prediction, &label) in predictions.iter().zip(labels) {
        let (class, conf) = top_class(&prediction.view());
        let idx = ((conf * bins as f64).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
        conf_sums[idx] += conf;
        if class == label {
            hits[idx] += 1;
        }
    }
    let accuracy = counts
        .iter()
        .zip(&hits)
        .map(|(&c, &h)| if c > 0 { h as f64 / c as f64 } else { 0.0 })
        .collect();
    let confidence = counts
        .iter()
        .zip(&conf_sums)
        .map(|(&c, &s)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok(CalibrationBins {
        counts,
        accuracy,
        confidence,
        total: predictions.len(),
    })
}

/// Expected calibration error with `bins` equal-width confidence bins.
pub fn ece(predictions: &[Array1<f64>], labels: &[usize], bins: usize) -> Result<f64> {
    Ok(calibration_bins(predictions, labels, bins)?.expected_calibration_error())
}

/// Fraction of rows whose top-class prediction matches the label.
pub fn accuracy(predictions: &[Array1<f64>], labels: &[usize]) -> Result<f64> {
    check_aligned(predictions, labels)?;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &label)| top_class(&p.view()).0 == label)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Relative discrepancy of the empirical first two moments against a
/// Gaussian oracle: Euclidean for the mean, Frobenius for the covariance
/// (sample covariance with the `n - 1` denominator). A zero oracle mean
/// falls back to the absolute error.
pub fn posterior_moment_error(
    samples: &[Array1<f64>],
    oracle: &GaussianPosterior,
) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "moment comparison needs at least two samples, got {}",
            samples.len()
        )));
    }
    let m = oracle.mean.len();
    if samples.iter().any(|s| s.len() != m) {
        return Err(Error::ShapeMismatch {
            what: "posterior samples",
            expected: m,
            actual: samples.iter().map(|s| s.len()).find(|&l| l != m).unwrap_or(m),
        });
    }
    let k = samples.len() as f64;
    let mut mean = Array1::zeros(m);
    for s in samples {
        mean += s;
    }
    mean /= k;

    let mut cov = Array2::zeros((m, m));
    for s in samples {
        let d = s - &mean;
        for i in 0..m {
            for j in 0..m {
                cov[[i, j]] += d[i] * d[j];
            }
        }
    }
    cov /= k - 1.0;

    let mean_gap = (&mean - &oracle.mean).dot(&(&mean - &oracle.mean)).sqrt();
    let mean_norm = oracle.mean.dot(&oracle.mean).sqrt();
    let mean_err = if mean_norm > 0.0 { mean_gap / mean_norm } else { mean_gap };

    let cov_gap = (&cov - &oracle.covariance).iter().map(|d| d * d).sum::<f64>().sqrt();
    let cov_norm = oracle.covariance.iter().map(|d| d * d).sum::<f64>().sqrt();
    let cov_err = cov_gap / cov_norm;
    Ok((mean_err, cov_err))
}

/// Accuracy and calibration of the pooled ensemble over a labeled test set.
pub fn classifier_metrics(
    spec: &ModelSpec,
    samples: &[Array1<f64>],
    test: &Dataset,
    bins: usize,
) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty test set".into(),
        ));
    }
    let predictions: Vec<Array1<f64>> = test
        .inputs()
        .rows()
        .into_iter()
        .map(|row| ensemble_predict(samples, spec, &row))
        .collect::<Result<_>>()?;
    let acc = accuracy(&predictions, test.labels())?;
    let cal = ece(&predictions, test.labels(), bins)?;
    Ok((acc, cal))
}

/// One experiment cell's evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub algorithm: String,
    pub topology: String,
    /// Absent for algorithms that never touch the channel.
    pub snr_db: Option<f64>,
    pub seed: u64,
    /// Absent on tasks without a classification target.
    pub accuracy: Option<f64>,
    pub ece: Option<f64>,
    /// Relative moment errors, present on conjugate tasks only.
    pub mean_err: Option<f64>,
    pub cov_err: Option<f64>,
    /// Pooled sample count behind the ensemble.
    pub retained_samples: usize,
}

impl EvaluationReport {
    pub fn csv_header() -> &'static [&'static str] {
        &[
            "algorithm",
            "topology",
            "snr_db",
            "seed",
            "accuracy",
            "ece",
            "mean_err",
            "cov_err",
            "retained_samples",
        ]
    }

    pub fn csv_record(&self) -> Vec<String> {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        vec![
            self.algorithm.clone(),
            self.topology.clone(),
            opt(self.snr_db),
            self.seed.to_string(),
            opt(self.accuracy),
            opt(self.ece),
            opt(self.mean_err),
            opt(self.cov_err),
            self.retained_samples.to_string(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.accuracy.is_none_or(f64::is_finite)
            && self.ece.is_none_or(f64::is_finite)
            && self.snr_db.is_none_or(f64::is_finite)
            && self.mean_err.is_none_or(f64::is_finite)
            && self.cov_err.is_none_or(f64::is_finite);
        if !finite {
            return Err(Error::Internal("evaluation produced non-finite metrics".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TaskKind;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// A prediction with the given top-class confidence on `classes` classes,
    /// peak at `class`, remainder spread evenly.
    fn prediction(classes: usize, class: usize, conf: f64) -> Array1<f64> {
        let rest = (1.0 - conf) / (classes - 1) as f64;
        Array1::from_shape_fn(classes, |c| if c == class { conf } else { rest })
    }

    fn random_simplex(rng: &mut ChaCha8Rng, classes: usize) -> Array1<f64> {
        let raw = Array1::from_shape_fn(classes, |_| -(rng.random::<f64>().ln()));
        let sum = raw.sum();
        raw / sum
    }

    #[test]
    fn single_sample_ensemble_is_the_plain_prediction() {
        let spec = ModelSpec::new(TaskKind::LogisticRegression, 3, 2).unwrap();
        let theta = array![0.4, -1.2, 0.7];
        let x = array![1.0, 0.5, -2.0];
        let direct = models::predictive_distribution(&spec, &theta, &x.view()).unwrap();
        let ensembled = ensemble_predict(std::slice::from_ref(&theta), &spec, &x.view()).unwrap();
        assert_eq!(direct, ensembled);
    }

    #[test]
    fn opposing_saturated_members_average_to_even_odds() {
        let spec = ModelSpec::new(TaskKind::LogisticRegression, 2, 2).unwrap();
        let samples = vec![array![1000.0, 0.0], array![-1000.0, 0.0]];
        let p = ensemble_predict(&samples, &spec, &array![1.0, 0.0].view()).unwrap();
        assert_eq!(p, array![0.5, 0.5]);
    }

    #[test]
    fn ensemble_matches_brute_force_average() {
        let spec = ModelSpec::new(TaskKind::SoftmaxMlp { hidden: 4 }, 3, 5).unwrap();
        let m = spec.dimension();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<Array1<f64>> = (0..100)
            .map(|_| crate::rng::standard_normal_vec(&mut rng, m))
            .collect();
        let x = array![0.3, -0.8, 1.5];

        let mut brute = Array1::zeros(5);
        for s in &samples {
            brute += &models::predictive_distribution(&spec, s, &x.view()).unwrap();
        }
        brute /= 100.0;
        let fast = ensemble_predict(&samples, &spec, &x.view()).unwrap();
        for (a, b) in fast.iter().zip(&brute) {
            assert_close(*a, *b, 1e-12);
        }
        assert_close(fast.sum(), 1.0, 1e-12);
        assert!(fast.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let spec = ModelSpec::new(TaskKind::LogisticRegression, 2, 2).unwrap();
        let err = ensemble_predict(&[], &spec, &array![0.0, 0.0].view()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn perfectly_calibrated_bin_scores_zero() {
        let predictions: Vec<Array1<f64>> = (0..4).map(|_| prediction(2, 0, 0.75)).collect();
        let labels = vec![0, 0, 0, 1];
        assert_eq!(ece(&predictions, &labels, 10).unwrap(), 0.0);
    }

    #[test]
    fn single_bin_miscalibration_is_the_confidence_gap() {
        let predictions: Vec<Array1<f64>> = (0..4).map(|_| prediction(2, 0, 0.8)).collect();
        let labels = vec![0, 0, 1, 1];
        assert_close(ece(&predictions, &labels, 10).unwrap(), 0.3, 1e-12);
    }

    #[test]
    fn bins_weight_their_calibration_gaps_by_occupancy() {
        let mut predictions = Vec::new();
        let mut labels = Vec::new();
        // 30 items at confidence 0.8 with 27 correct, 10 items at 1.0 all
        // correct: 0.75 * 0.1 + 0.25 * 0 = 0.075.
        for i in 0..30 {
            predictions.push(prediction(3, 0, 0.8));
            labels.push(if i < 27 { 0 } else { 1 });
        }
        for _ in 0..10 {
            predictions.push(prediction(3, 1, 1.0));
            labels.push(1);
        }
        assert_close(ece(&predictions, &labels, 10).unwrap(), 0.075, 1e-12);

        let bins = calibration_bins(&predictions, &labels, 10).unwrap();
        assert_eq!(bins.counts.iter().sum::<usize>(), bins.total);
        assert_eq!(bins.counts[7], 30);
        assert_eq!(bins.counts[9], 10);
    }

    #[test]
    fn one_bin_ece_is_accuracy_minus_mean_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..50 {
            let n = rng.random_range(5..40);
            let classes = rng.random_range(2..6);
            let predictions: Vec<Array1<f64>> =
                (0..n).map(|_| random_simplex(&mut rng, classes)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();

            let acc = accuracy(&predictions, &labels).unwrap();
            let mean_conf = predictions
                .iter()
                .map(|p| top_class(&p.view()).1)
                .sum::<f64>()
                / n as f64;
            let coarse = ece(&predictions, &labels, 1).unwrap();
            assert_close(coarse, (acc - mean_conf).abs(), 1e-12);
        }
    }

    #[test]
    fn calibration_ignores_test_set_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let predictions: Vec<Array1<f64>> =
            (0..25).map(|_| random_simplex(&mut rng, 4)).collect();
        let labels: Vec<usize> = (0..25).map(|_| rng.random_range(0..4)).collect();
        let base = ece(&predictions, &labels, 10).unwrap();

        let mut order: Vec<usize> = (0..25).collect();
        order.reverse();
        order.swap(3, 17);
        let shuffled_p: Vec<Array1<f64>> = order.iter().map(|&i| predictions[i].clone()).collect();
        let shuffled_l: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        assert_eq!(base, ece(&shuffled_p, &shuffled_l, 10).unwrap());
    }

    #[test]
    fn accuracy_counts_argmax_matches_with_low_index_ties() {
        let all = vec![prediction(2, 0, 0.9), prediction(2, 1, 0.7)];
        assert_eq!(accuracy(&all, &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&all, &[1, 0]).unwrap(), 0.0);

        let five: Vec<Array1<f64>> = vec![
            prediction(2, 0, 0.6),
            prediction(2, 0, 0.6),
            prediction(2, 1, 0.6),
            prediction(2, 1, 0.6),
            prediction(2, 1, 0.6),
        ];
        assert_eq!(accuracy(&five, &[0, 0, 1, 0, 0]).unwrap(), 0.6);

        let tie = vec![array![0.5, 0.5]];
        assert_eq!(accuracy(&tie, &[0]).unwrap(), 1.0);
        assert_eq!(accuracy(&tie, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_labels_and_misaligned_lists_are_rejected() {
        let p = vec![prediction(3, 0, 0.9)];
        assert!(matches!(
            accuracy(&p, &[3]).unwrap_err(),
            Error::InvalidArgument(_)
        ));
        assert!(matches!(
            ece(&p, &[0, 1], 10).unwrap_err(),
            Error::ShapeMismatch { .. }
        ));
        assert!(matches!(
            ece(&p, &[0], 0).unwrap_err(),
            Error::InvalidArgument(_)
        ));
    }

    #[test]
    fn degenerate_sample_cloud_has_unit_covariance_error() {
        let oracle = GaussianPosterior {
            mean: array![1.0, -2.0],
            covariance: Array2::eye(2) * 0.25,
        };
        let samples = vec![oracle.mean.clone(); 10];
        let (mean_err, cov_err) = posterior_moment_error(&samples, &oracle).unwrap();
        assert_eq!(mean_err, 0.0);
        assert_eq!(cov_err, 1.0);
    }

    #[test]
    fn uniform_shift_shows_up_as_relative_mean_error() {
        let oracle = GaussianPosterior {
            mean: array![3.0, 4.0],
            covariance: Array2::eye(2),
        };
        let delta = array![0.3, -0.4];
        let samples: Vec<Array1<f64>> = (0..8)
            .map(|i| &oracle.mean + &delta + &(Array1::from_elem(2, (i as f64 - 3.5) * 1e-14)))
            .collect();
        let (mean_err, _) = posterior_moment_error(&samples, &oracle).unwrap();
        assert_close(mean_err, 0.5 / 5.0, 1e-9);
    }

    #[test]
    fn exact_draws_match_oracle_moments_at_clt_rate() {
        let sigma = 0.3;
        let oracle = GaussianPosterior {
            mean: array![1.5, -0.5, 2.0],
            covariance: Array2::eye(3) * (sigma * sigma),
        };
        let k = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let samples: Vec<Array1<f64>> = (0..k)
            .map(|_| &oracle.mean + &(crate::rng::standard_normal_vec(&mut rng, 3) * sigma))
            .collect();
        let (mean_err, cov_err) = posterior_moment_error(&samples, &oracle).unwrap();
        let trace = 3.0 * sigma * sigma;
        let mean_norm = oracle.mean.dot(&oracle.mean).sqrt();
        assert!(mean_err < 3.0 * (trace / k as f64).sqrt() / mean_norm, "{mean_err}");
        assert!(cov_err < 0.02, "{cov_err}");
    }

    #[test]
    fn moment_comparison_needs_two_samples() {
        let oracle = GaussianPosterior {
            mean: array![0.0],
            covariance: Array2::eye(1),
        };
        let err = posterior_moment_error(&[array![1.0]], &oracle).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn report_serializes_to_json_and_csv() {
        let report = EvaluationReport {
            algorithm: "cd-dsgld".into(),
            topology: "ring".into(),
            snr_db: Some(20.0),
            seed: 7,
            accuracy: Some(0.875),
            ece: Some(0.0625),
            mean_err: None,
            cov_err: None,
            retained_samples: 500,
        };
        report.validate().unwrap();

        let json = serde_json::to_string(&report).unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);

        assert_eq!(EvaluationReport::csv_header().len(), report.csv_record().len());
        assert_eq!(
            report.csv_record(),
            vec![
                "cd-dsgld".to_string(),
                "ring".to_string(),
                "20".to_string(),
                "7".to_string(),
                "0.875".to_string(),
                "0.0625".to_string(),
                String::new(),
                String::new(),
                "500".to_string(),
            ]
        );
    }
}
