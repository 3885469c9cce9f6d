use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, ClassifierSpec, EvalError, FeatureMatrix};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 10,
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub classes: Vec<String>,
    /// Folds actually used, after any reduction for small classes.
    pub folds: usize,
    pub per_fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Population standard deviation of the fold accuracies.
    pub std_accuracy: f64,
    /// `confusion[true][predicted]`, indexed by `classes`.
    pub confusion: Vec<Vec<usize>>,
    pub baseline_accuracy: f64,
}

/// Share of the most frequent label.
pub fn baseline_accuracy(labels: &[String]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut sorted = labels.to_vec();
    sorted.sort();
    let mut best = 0;
    let mut run = 0;
    for i in 0..sorted.len() {
        run = if i > 0 && sorted[i] == sorted[i - 1] {
            run + 1
        } else {
            1
        };
        best = best.max(run);
    }
    best as f64 / labels.len() as f64
}

/// Fold index for every row, plus the number of folds used.
///
/// Stratified: rows of each class (classes in sorted order) are shuffled
/// with a seeded RNG and dealt round-robin, the deal continuing across
/// classes. Folds are reduced to the smallest class size when needed.
pub fn fold_assignment(labels: &[String], opts: &CvOptions) -> Result<(Vec<usize>, usize), EvalError> {
    let n = labels.len();
    let mut classes: Vec<&String> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let mut folds = opts.folds;
    if folds < 2 {
        return Err(EvalError::TooFewSamples(format!(
            "folds must be at least 2, got {folds}"
        )));
    }
    if opts.stratified {
        let smallest = classes
            .iter()
            .map(|c| labels.iter().filter(|l| l == c).count())
            .min()
            .unwrap_or(0);
        if smallest < folds {
            log::warn!("reducing folds from {folds} to {smallest}: smallest class has {smallest} members");
            folds = smallest;
        }
    } else if n < folds {
        log::warn!("reducing folds from {folds} to {n}: only {n} rows");
        folds = n;
    }
    if folds < 2 {
        return Err(EvalError::TooFewSamples(format!(
            "cannot build 2 folds from {n} rows in {} classes",
            classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut assignment = vec![0usize; n];
    let mut deal = 0usize;
    let groups: Vec<Vec<usize>> = if opts.stratified {
        classes
            .iter()
            .map(|c| (0..n).filter(|&i| &labels[i] == *c).collect())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    for mut rows in groups {
        rows.shuffle(&mut rng);
        for r in rows {
            assignment[r] = deal % folds;
            deal += 1;
        }
    }
    Ok((assignment, folds))
}

/// k-fold cross-validation of one classifier. Standardization for the
/// margin-based models happens inside `fit`, on each training portion.
pub fn cross_validate<T: Scalar>(
    features: &FeatureMatrix<T>,
    spec: &ClassifierSpec,
    opts: &CvOptions,
) -> Result<CvResult, EvalError> {
    spec.validate()?;
    features.validate()?;
    let classes = features.classes();
    let (assignment, folds) = fold_assignment(&features.labels, opts)?;
    let outcomes: Vec<Result<(f64, Vec<(usize, usize)>), EvalError>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..features.n_rows()).filter(|&i| assignment[i] != fold).collect();
            let test: Vec<usize> = (0..features.n_rows()).filter(|&i| assignment[i] == fold).collect();
            let model = fit(spec, &features.subset(&train))?;
            let mut pairs = Vec::with_capacity(test.len());
            let mut correct = 0;
            for &i in &test {
                let predicted = &model.classes()[model.predict_index(&features.values[i])];
                let truth = &features.labels[i];
                if predicted == truth {
                    correct += 1;
                }
                let t = classes.binary_search(truth).expect("known label");
                let p = classes.binary_search(predicted).expect("known label");
                pairs.push((t, p));
            }
            Ok((correct as f64 / test.len() as f64, pairs))
        })
        .collect();
    let mut per_fold_accuracy = Vec::with_capacity(folds);
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for outcome in outcomes {
        let (acc, pairs) = outcome?;
        per_fold_accuracy.push(acc);
        for (t, p) in pairs {
            confusion[t][p] += 1;
        }
    }
    let mean_accuracy = per_fold_accuracy.iter().sum::<f64>() / folds as f64;
    let std_accuracy = (per_fold_accuracy
        .iter()
        .map(|a| (a - mean_accuracy).powi(2))
        .sum::<f64>()
        / folds as f64)
        .sqrt();
    Ok(CvResult {
        classes,
        folds,
        per_fold_accuracy,
        mean_accuracy,
        std_accuracy,
        confusion,
        baseline_accuracy: baseline_accuracy(&features.labels),
    })
}

/// Per-fold rows followed by a summary block per classifier.
pub fn write_cv_report<W: Write>(mut w: W, results: &[(ClassifierSpec, CvResult)]) -> std::io::Result<()> {
    writeln!(w, "classifier\tparam_summary\tfold\taccuracy")?;
    for (spec, r) in results {
        for (fold, acc) in r.per_fold_accuracy.iter().enumerate() {
            writeln!(w, "{}\t{}\t{fold}\t{acc:.6}", spec.kind(), spec.param_summary())?;
        }
    }
    writeln!(w)?;
    writeln!(w, "classifier\tparam_summary\tmean\tstd\tbaseline")?;
    for (spec, r) in results {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            spec.kind(),
            spec.param_summary(),
            r.mean_accuracy,
            r.std_accuracy,
            r.baseline_accuracy
        )?;
    }
    Ok(())
}
