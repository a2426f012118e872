//! Supervised Gaussian classification of multi-tone IQ records, the
//! assignment matrix and fidelity, and readout-error mitigation.
//!
//! The primary path is a per-class Gaussian fit on labeled records
//! (quadratic discriminant); unsupervised EM refinement, a shared
//! covariance, and fitted mixture weights are optional toggles.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::readout::IQRecord;

/// Per-state Gaussian model over flattened IQ vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassifier {
    /// Vector dimension (2 × tone count).
    pub dim: usize,
    /// Per-state mean, `state_count × dim`.
    pub means: Vec<Vec<f64>>,
    /// Per-state covariance, row-major `dim × dim` each.
    pub covariances: Vec<Vec<f64>>,
    /// Mixture weights; uniform unless fitted.
    pub weights: Vec<f64>,
}

/// Training toggles.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Run an unsupervised EM refinement pass after the supervised fit
    /// (at most 50 iterations, monotone log-likelihood).
    pub em_refine: bool,
    /// Pool a single covariance across classes.
    pub shared_covariance: bool,
    /// Fit mixture weights from class populations instead of uniform.
    pub fit_weights: bool,
}

impl GaussianClassifier {
    pub fn state_count(&self) -> usize {
        self.means.len()
    }

    fn cov_matrix(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.covariances[k])
    }

    /// Per-state Gaussian log-likelihoods (plus log weight) of one record.
    pub fn log_likelihoods(&self, record: &IQRecord) -> Result<Vec<f64>> {
        if record.values.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "record dimension {} does not match classifier {}",
                record.values.len(),
                self.dim
            )));
        }
        let x = DVector::from_column_slice(&record.values);
        let mut lls = Vec::with_capacity(self.state_count());
        for k in 0..self.state_count() {
            let mu = DVector::from_column_slice(&self.means[k]);
            let chol = Cholesky::new(self.cov_matrix(k)).ok_or_else(|| {
                Error::Numerical(format!("covariance of state {k} is not positive definite"))
            })?;
            let ln_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let centered = &x - &mu;
            let y = chol.l().solve_lower_triangular(&centered).ok_or_else(|| {
                Error::Numerical("singular Cholesky factor".into())
            })?;
            let maha = y.norm_squared();
            let ll = -0.5 * (maha + ln_det + self.dim as f64 * (2.0 * std::f64::consts::PI).ln())
                + self.weights[k].ln();
            lls.push(ll);
        }
        Ok(lls)
    }
}

fn ridge_scale(cov: &DMatrix<f64>) -> f64 {
    1e-6 * cov.trace() / cov.nrows() as f64
}

/// Fit a per-state Gaussian classifier to labeled records.
///
/// Needs every state `0..d` represented and at least `dim + 1` records per
/// state for an estimable covariance; each covariance is regularized by
/// `λI` with `λ = 1e-6 × trace/dim`.
pub fn train(records: &[IQRecord], opts: &TrainOptions) -> Result<GaussianClassifier> {
    let dim = records
        .first()
        .map(|r| r.values.len())
        .ok_or_else(|| Error::InvalidInput("no training records".into()))?;
    let d = records
        .iter()
        .map(|r| {
            r.true_label
                .ok_or_else(|| Error::InvalidInput("unlabeled training record".into()))
        })
        .try_fold(0usize, |m, l| l.map(|l| m.max(l + 1)))?;
    if d < 2 {
        return Err(Error::InvalidInput("need at least 2 states".into()));
    }

    let mut grouped: Vec<Vec<&IQRecord>> = vec![Vec::new(); d];
    for r in records {
        if r.values.len() != dim {
            return Err(Error::InvalidInput("inconsistent record dimensions".into()));
        }
        grouped[r.true_label.unwrap()].push(r);
    }
    for (k, g) in grouped.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::Coverage { state: k });
        }
        if g.len() < dim + 1 {
            return Err(Error::InvalidInput(format!(
                "state {k} has {} records; need at least {} for a {dim}-dim covariance",
                g.len(),
                dim + 1
            )));
        }
    }

    let mut means = Vec::with_capacity(d);
    let mut covs: Vec<DMatrix<f64>> = Vec::with_capacity(d);
    for g in &grouped {
        let n = g.len() as f64;
        let mut mu = DVector::<f64>::zeros(dim);
        for r in g {
            mu += DVector::from_column_slice(&r.values);
        }
        mu /= n;
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for r in g {
            let c = DVector::from_column_slice(&r.values) - &mu;
            cov += &c * c.transpose();
        }
        cov /= n;
        means.push(mu);
        covs.push(cov);
    }
    if opts.shared_covariance {
        let mut pooled = DMatrix::<f64>::zeros(dim, dim);
        let total: usize = grouped.iter().map(|g| g.len()).sum();
        for (g, cov) in grouped.iter().zip(&covs) {
            pooled += cov * (g.len() as f64 / total as f64);
        }
        covs = vec![pooled; d];
    }
    for cov in &mut covs {
        let lambda = ridge_scale(cov);
        for i in 0..dim {
            cov[(i, i)] += lambda;
        }
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::Numerical(
                "covariance singular even after ridge regularization; degenerate data".into(),
            ));
        }
    }
    let weights = if opts.fit_weights {
        let total: usize = grouped.iter().map(|g| g.len()).sum();
        grouped.iter().map(|g| g.len() as f64 / total as f64).collect()
    } else {
        vec![1.0 / d as f64; d]
    };

    let mut clf = GaussianClassifier {
        dim,
        means: means.iter().map(|m| m.as_slice().to_vec()).collect(),
        covariances: covs
            .iter()
            .map(|c| c.transpose().as_slice().to_vec())
            .collect(),
        weights,
    };
    if opts.em_refine {
        em_refine(&mut clf, records, 50)?;
    }
    Ok(clf)
}

/// One EM pass over the (label-blind) record set; returns the sequence of
/// total log-likelihoods, which is non-decreasing.
pub fn em_refine(
    clf: &mut GaussianClassifier,
    records: &[IQRecord],
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = records.len();
    let d = clf.state_count();
    let dim = clf.dim;
    let mut history: Vec<f64> = Vec::new();
    for _ in 0..max_iters {
        // E step.
        let mut responsibilities = DMatrix::<f64>::zeros(n, d);
        let mut total_ll = 0.0;
        for (r_idx, rec) in records.iter().enumerate() {
            let lls = clf.log_likelihoods(rec)?;
            let max_ll = lls.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut norm = 0.0;
            for (k, &ll) in lls.iter().enumerate() {
                let w = (ll - max_ll).exp();
                responsibilities[(r_idx, k)] = w;
                norm += w;
            }
            for k in 0..d {
                responsibilities[(r_idx, k)] /= norm;
            }
            total_ll += max_ll + norm.ln();
        }
        if let Some(&last) = history.last() {
            if total_ll < last - 1e-9 {
                return Err(Error::Numerical(format!(
                    "EM log-likelihood decreased: {last} → {total_ll}"
                )));
            }
            if (total_ll - last).abs() < 1e-10 * total_ll.abs().max(1.0) {
                history.push(total_ll);
                break;
            }
        }
        history.push(total_ll);
        // M step.
        for k in 0..d {
            let weight_sum: f64 = (0..n).map(|i| responsibilities[(i, k)]).sum();
            if weight_sum < 1e-12 {
                return Err(Error::Numerical(format!(
                    "EM component {k} collapsed to zero weight"
                )));
            }
            let mut mu = DVector::<f64>::zeros(dim);
            for (i, rec) in records.iter().enumerate() {
                mu += responsibilities[(i, k)] * DVector::from_column_slice(&rec.values);
            }
            mu /= weight_sum;
            let mut cov = DMatrix::<f64>::zeros(dim, dim);
            for (i, rec) in records.iter().enumerate() {
                let c = DVector::from_column_slice(&rec.values) - &mu;
                cov += responsibilities[(i, k)] * &c * c.transpose();
            }
            cov /= weight_sum;
            let lambda = ridge_scale(&cov);
            for i in 0..dim {
                cov[(i, i)] += lambda;
            }
            clf.means[k] = mu.as_slice().to_vec();
            clf.covariances[k] = cov.transpose().as_slice().to_vec();
            clf.weights[k] = weight_sum / n as f64;
        }
    }
    Ok(history)
}

/// Classify one record: the argmax state and the per-state log-likelihoods.
/// Ties break toward the lower state index.
pub fn classify(clf: &GaussianClassifier, record: &IQRecord) -> Result<(usize, Vec<f64>)> {
    let lls = clf.log_likelihoods(record)?;
    let mut best = 0;
    for (k, &ll) in lls.iter().enumerate() {
        if ll > lls[best] {
            best = k;
        }
    }
    Ok((best, lls))
}

/// Empirical conditional assignment probabilities and fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    /// `probs[i][j] = P(assigned i | prepared j)`; columns sum to 1.
    pub probs: Vec<Vec<f64>>,
    /// Mean of the diagonal.
    pub fidelity: f64,
}

impl AssignmentMatrix {
    pub fn state_count(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, assigned: usize, prepared: usize) -> f64 {
        self.probs[assigned][prepared]
    }

    fn as_matrix(&self) -> DMatrix<f64> {
        let d = self.state_count();
        DMatrix::from_fn(d, d, |i, j| self.probs[i][j])
    }
}

/// Classify a labeled test set into the empirical assignment matrix.
pub fn assignment_matrix(
    clf: &GaussianClassifier,
    test_records: &[IQRecord],
) -> Result<AssignmentMatrix> {
    let d = clf.state_count();
    let mut counts = vec![vec![0usize; d]; d];
    let mut prepared_totals = vec![0usize; d];
    for rec in test_records {
        let prepared = rec
            .true_label
            .ok_or_else(|| Error::InvalidInput("unlabeled test record".into()))?;
        if prepared >= d {
            return Err(Error::InvalidInput(format!(
                "prepared label {prepared} outside classifier's {d} states"
            )));
        }
        let (assigned, _) = classify(clf, rec)?;
        counts[assigned][prepared] += 1;
        prepared_totals[prepared] += 1;
    }
    for (j, &total) in prepared_totals.iter().enumerate() {
        if total == 0 {
            return Err(Error::Coverage { state: j });
        }
    }
    let probs: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &c)| c as f64 / prepared_totals[j] as f64)
                .collect()
        })
        .collect();
    let fidelity = (0..d).map(|i| probs[i][i]).sum::<f64>() / d as f64;
    Ok(AssignmentMatrix { probs, fidelity })
}

/// Mitigated populations with conditioning diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MitigationResult {
    pub populations: Vec<f64>,
    pub condition_number: f64,
    /// Set when the assignment matrix's condition number exceeds 1e6.
    pub ill_conditioned: bool,
}

/// Correct measured populations through the assignment matrix by solving
/// `am · p = measured` as least squares constrained to the probability
/// simplex (`p ≥ 0`, `Σp = 1`) — not by naive inversion.
pub fn mitigate(measured: &[f64], am: &AssignmentMatrix) -> Result<MitigationResult> {
    let d = am.state_count();
    if measured.len() != d {
        return Err(Error::InvalidInput(format!(
            "measured vector length {} does not match {d} states",
            measured.len()
        )));
    }
    let a = am.as_matrix();
    let svd = a.clone().svd(false, false);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition_number = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };

    let m = DVector::from_column_slice(measured);
    // Active-set solve of the equality-constrained least squares, dropping
    // the most negative coordinate until the solution is feasible.
    let mut support: Vec<usize> = (0..d).collect();
    let populations = loop {
        let k = support.len();
        if k == 0 {
            return Err(Error::Numerical(
                "mitigation active set emptied; assignment matrix degenerate".into(),
            ));
        }
        let a_s = a.select_columns(support.iter());
        let gram = a_s.transpose() * &a_s;
        let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
        kkt.view_mut((0, 0), (k, k)).copy_from(&gram);
        for i in 0..k {
            kkt[(i, k)] = 1.0;
            kkt[(k, i)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(k + 1);
        rhs.rows_mut(0, k).copy_from(&(a_s.transpose() * &m));
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return Err(Error::Numerical("singular KKT system in mitigation".into()));
        };
        let p_s = sol.rows(0, k).clone_owned();
        if let Some((worst_pos, _)) = p_s
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < -1e-12)
            .min_by(|(_, a), (_, b)| a.total_cmp(b))
        {
            support.remove(worst_pos);
            continue;
        }
        let mut p = vec![0.0; d];
        for (pos, &idx) in support.iter().enumerate() {
            p[idx] = p_s[pos].max(0.0);
        }
        // Renormalize away the clamp's rounding.
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        break p;
    };
    Ok(MitigationResult {
        populations,
        condition_number,
        ill_conditioned: condition_number > 1e6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_records(
        means: &[Vec<f64>],
        sigma: f64,
        per_state: usize,
        seed: u64,
    ) -> Vec<IQRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut records = Vec::new();
        for (label, mean) in means.iter().enumerate() {
            for _ in 0..per_state {
                let values = mean.iter().map(|&v| v + noise.sample(&mut rng)).collect();
                records.push(IQRecord {
                    values,
                    true_label: Some(label),
                });
            }
        }
        records
    }

    fn square_means() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0, 1.0, 0.0],
            vec![4.0, 0.0, 0.0, 1.0],
            vec![0.0, 4.0, -1.0, 0.0],
            vec![4.0, 4.0, 0.0, -1.0],
        ]
    }

    #[test]
    fn training_recovers_cluster_means() {
        let means = square_means();
        let records = gaussian_records(&means, 0.1, 400, 11);
        let clf = train(&records, &TrainOptions::default()).unwrap();
        for (k, mean) in means.iter().enumerate() {
            for (a, b) in clf.means[k].iter().zip(mean) {
                // Within a few standard errors of σ/√n.
                assert!((a - b).abs() < 4.0 * 0.1 / (400.0_f64).sqrt());
            }
        }
        assert_eq!(clf.weights, vec![0.25; 4]);
    }

    #[test]
    fn classify_state_mean_and_tie_break() {
        let means = square_means();
        let records = gaussian_records(&means, 0.1, 200, 3);
        let clf = train(&records, &TrainOptions::default()).unwrap();
        for (k, mean) in means.iter().enumerate() {
            let (label, _) = classify(
                &clf,
                &IQRecord {
                    values: mean.clone(),
                    true_label: None,
                },
            )
            .unwrap();
            assert_eq!(label, k);
        }
        // A perfectly symmetric two-state classifier ties at the midpoint
        // and must resolve toward the lower index.
        let sym = GaussianClassifier {
            dim: 2,
            means: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            covariances: vec![vec![1.0, 0.0, 0.0, 1.0]; 2],
            weights: vec![0.5, 0.5],
        };
        let (label, lls) = classify(
            &sym,
            &IQRecord {
                values: vec![0.0, 0.0],
                true_label: None,
            },
        )
        .unwrap();
        assert_eq!(lls[0], lls[1]);
        assert_eq!(label, 0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let records = gaussian_records(&square_means(), 0.1, 50, 5);
        let clf = train(&records, &TrainOptions::default()).unwrap();
        let bad = IQRecord {
            values: vec![0.0; 6],
            true_label: None,
        };
        assert!(classify(&clf, &bad).is_err());
    }

    #[test]
    fn coverage_and_small_sample_errors() {
        let mut records = gaussian_records(&square_means(), 0.1, 50, 5);
        records.retain(|r| r.true_label != Some(2));
        // Relabel one so the max label still implies 4 states.
        records.push(IQRecord {
            values: vec![0.0; 4],
            true_label: Some(3),
        });
        assert!(matches!(
            train(&records, &TrainOptions::default()),
            Err(Error::Coverage { state: 2 })
        ));
        let tiny = gaussian_records(&square_means(), 0.1, 3, 5);
        assert!(train(&tiny, &TrainOptions::default()).is_err());
    }

    #[test]
    fn em_never_decreases_likelihood() {
        let records = gaussian_records(&square_means(), 0.35, 150, 17);
        let mut clf = train(&records, &TrainOptions::default()).unwrap();
        let history = em_refine(&mut clf, &records, 50).unwrap();
        for w in history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "LL decreased: {} → {}", w[0], w[1]);
        }
    }

    #[test]
    fn assignment_matrix_columns_are_distributions() {
        let means = square_means();
        let train_set = gaussian_records(&means, 0.4, 300, 23);
        let test_set = gaussian_records(&means, 0.4, 200, 24);
        let clf = train(&train_set, &TrainOptions::default()).unwrap();
        let am = assignment_matrix(&clf, &test_set).unwrap();
        for j in 0..4 {
            let col_sum: f64 = (0..4).map(|i| am.prob(i, j)).sum();
            assert!((col_sum - 1.0).abs() < 1e-9);
        }
        assert!(am.fidelity > 0.9);
    }

    #[test]
    fn perfect_classifier_gives_identity() {
        let means = square_means();
        let train_set = gaussian_records(&means, 0.05, 200, 31);
        let test_set = gaussian_records(&means, 0.05, 100, 32);
        let clf = train(&train_set, &TrainOptions::default()).unwrap();
        let am = assignment_matrix(&clf, &test_set).unwrap();
        assert_eq!(am.fidelity, 1.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(am.prob(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn fidelity_monotone_in_noise() {
        let means = square_means();
        let mut last = 1.1;
        for &sigma in &[0.2, 0.8, 1.6] {
            let train_set = gaussian_records(&means, sigma, 300, 41);
            let test_set = gaussian_records(&means, sigma, 300, 42);
            let clf = train(&train_set, &TrainOptions::default()).unwrap();
            let am = assignment_matrix(&clf, &test_set).unwrap();
            assert!(am.fidelity < last + 1e-9);
            last = am.fidelity;
        }
    }

    #[test]
    fn classification_invariant_under_affine_map() {
        let means = square_means();
        let train_set = gaussian_records(&means, 0.5, 250, 51);
        let test_set = gaussian_records(&means, 0.5, 120, 52);
        let clf = train(&train_set, &TrainOptions::default()).unwrap();
        let labels: Vec<usize> = test_set
            .iter()
            .map(|r| classify(&clf, r).unwrap().0)
            .collect();

        // Well-conditioned affine map: rotation-ish mixing plus offset.
        let l = [
            [1.3, 0.2, 0.0, -0.1],
            [-0.2, 0.9, 0.1, 0.0],
            [0.0, 0.1, 1.5, 0.3],
            [0.1, 0.0, -0.3, 0.7],
        ];
        let b = [5.0, -2.0, 0.5, 1.0];
        let map = |r: &IQRecord| IQRecord {
            values: (0..4)
                .map(|i| {
                    (0..4).map(|j| l[i][j] * r.values[j]).sum::<f64>() + b[i]
                })
                .collect(),
            true_label: r.true_label,
        };
        let train_mapped: Vec<IQRecord> = train_set.iter().map(&map).collect();
        let test_mapped: Vec<IQRecord> = test_set.iter().map(&map).collect();
        let clf_mapped = train(&train_mapped, &TrainOptions::default()).unwrap();
        let labels_mapped: Vec<usize> = test_mapped
            .iter()
            .map(|r| classify(&clf_mapped, r).unwrap().0)
            .collect();
        assert_eq!(labels, labels_mapped);
    }

    #[test]
    fn mitigate_identity_is_noop() {
        let am = AssignmentMatrix {
            probs: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            fidelity: 1.0,
        };
        let result = mitigate(&[0.2, 0.5, 0.3], &am).unwrap();
        for (a, b) in result.populations.iter().zip([0.2, 0.5, 0.3]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(!result.ill_conditioned);
    }

    #[test]
    fn mitigate_monte_carlo_recovery() {
        // Apply a known assignment matrix to a known population, sample
        // finite shots, and recover the truth within 2/√shots per entry.
        let am = AssignmentMatrix {
            probs: vec![
                vec![0.90, 0.08, 0.01],
                vec![0.08, 0.85, 0.09],
                vec![0.02, 0.07, 0.90],
            ],
            fidelity: 0.883,
        };
        let p_true = [0.6, 0.3, 0.1];
        let ideal: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| am.prob(i, j) * p_true[j]).sum())
            .collect();
        let shots = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 3];
        for _ in 0..shots {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &pi) in ideal.iter().enumerate() {
                acc += pi;
                if u < acc {
                    counts[i] += 1;
                    break;
                }
            }
        }
        let measured: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();
        let result = mitigate(&measured, &am).unwrap();
        let bound = 2.0 / (shots as f64).sqrt();
        for (rec, truth) in result.populations.iter().zip(p_true) {
            assert!(
                (rec - truth).abs() < bound,
                "recovered {rec:.4} vs true {truth:.4} (bound {bound:.4})"
            );
        }
    }

    #[test]
    fn mitigate_output_is_probability_vector() {
        let am = AssignmentMatrix {
            probs: vec![
                vec![0.7, 0.25, 0.1],
                vec![0.2, 0.60, 0.2],
                vec![0.1, 0.15, 0.7],
            ],
            fidelity: 0.667,
        };
        // A measured vector outside the matrix's range image forces the
        // constrained solve to clip.
        let result = mitigate(&[0.98, 0.01, 0.01], &am).unwrap();
        let total: f64 = result.populations.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(result.populations.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn mitigate_flags_ill_conditioning() {
        let am = AssignmentMatrix {
            probs: vec![
                vec![0.5, 0.4999999],
                vec![0.5, 0.5000001],
            ],
            fidelity: 0.5,
        };
        let result = mitigate(&[0.5, 0.5], &am).unwrap();
        assert!(result.ill_conditioned);
    }
}
