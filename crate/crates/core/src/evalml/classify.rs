use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EvalError, FeatureMatrix};
use crate::num::{is_negligible_spread, Scalar};

/// Classifier families, in tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LinearSvm,
    Knn,
    SgdLogistic,
    DecisionTree,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::LinearSvm,
        ClassifierKind::Knn,
        ClassifierKind::SgdLogistic,
        ClassifierKind::DecisionTree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::LinearSvm => "linear_svm",
            ClassifierKind::Knn => "knn",
            ClassifierKind::SgdLogistic => "sgd_logistic",
            ClassifierKind::DecisionTree => "decision_tree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn default_spec(self) -> ClassifierSpec {
        match self {
            ClassifierKind::LinearSvm => ClassifierSpec::LinearSvm { c: 1.0, epochs: 200 },
            ClassifierKind::Knn => ClassifierSpec::Knn {
                k: 5,
                metric: DistanceMetric::Euclidean,
            },
            ClassifierKind::SgdLogistic => ClassifierSpec::SgdLogistic {
                learning_rate: 0.1,
                epochs: 200,
                regularization: 1e-4,
            },
            ClassifierKind::DecisionTree => ClassifierSpec::DecisionTree {
                max_depth: 10,
                min_leaf: 1,
            },
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    LinearSvm {
        c: f64,
        epochs: usize,
    },
    Knn {
        k: usize,
        metric: DistanceMetric,
    },
    SgdLogistic {
        learning_rate: f64,
        epochs: usize,
        regularization: f64,
    },
    DecisionTree {
        max_depth: usize,
        min_leaf: usize,
    },
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::LinearSvm { .. } => ClassifierKind::LinearSvm,
            ClassifierSpec::Knn { .. } => ClassifierKind::Knn,
            ClassifierSpec::SgdLogistic { .. } => ClassifierKind::SgdLogistic,
            ClassifierSpec::DecisionTree { .. } => ClassifierKind::DecisionTree,
        }
    }

    pub fn param_summary(&self) -> String {
        match self {
            ClassifierSpec::LinearSvm { c, epochs } => format!("C={c},epochs={epochs}"),
            ClassifierSpec::Knn { k, metric } => format!("k={k},metric={metric:?}").to_lowercase(),
            ClassifierSpec::SgdLogistic {
                learning_rate,
                epochs,
                regularization,
            } => format!("lr={learning_rate},epochs={epochs},l2={regularization}"),
            ClassifierSpec::DecisionTree { max_depth, min_leaf } => {
                format!("max_depth={max_depth},min_leaf={min_leaf}")
            }
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(EvalError::InvalidSpec(format!("{name} must be positive, got {v}")))
            }
        };
        let at_least_one = |name: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(EvalError::InvalidSpec(format!("{name} must be at least 1")))
            }
        };
        match *self {
            ClassifierSpec::LinearSvm { c, epochs } => {
                positive("C", c)?;
                at_least_one("epochs", epochs)
            }
            ClassifierSpec::Knn { k, .. } => at_least_one("k", k),
            ClassifierSpec::SgdLogistic {
                learning_rate,
                epochs,
                regularization,
            } => {
                positive("learning_rate", learning_rate)?;
                at_least_one("epochs", epochs)?;
                if regularization >= 0.0 && regularization.is_finite() {
                    Ok(())
                } else {
                    Err(EvalError::InvalidSpec("regularization must be non-negative".into()))
                }
            }
            ClassifierSpec::DecisionTree { max_depth, min_leaf } => {
                at_least_one("max_depth", max_depth)?;
                at_least_one("min_leaf", min_leaf)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loss {
    Hinge,
    Logistic,
}

/// One-vs-rest linear scorer over standardized features.
#[derive(Debug, Clone)]
pub struct LinearModel<T> {
    mean: Vec<T>,
    scale: Vec<T>,
    weights: Vec<Vec<T>>,
    bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct KnnModel<T> {
    k: usize,
    metric: DistanceMetric,
    rows: Vec<Vec<T>>,
    labels: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TreeModel<T> {
    nodes: Vec<Node<T>>,
}

#[derive(Debug, Clone)]
enum Model<T> {
    Linear(LinearModel<T>),
    Knn(KnnModel<T>),
    Tree(TreeModel<T>),
}

/// A trained classifier. Predictions are always one of `classes`.
#[derive(Debug, Clone)]
pub struct Fitted<T> {
    classes: Vec<String>,
    model: Model<T>,
}

pub fn fit<T: Scalar>(spec: &ClassifierSpec, train: &FeatureMatrix<T>) -> Result<Fitted<T>, EvalError> {
    spec.validate()?;
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(EvalError::SingleClassTrainingSet);
    }
    let y: Vec<usize> = train
        .labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label drawn from classes"))
        .collect();
    let model = match *spec {
        ClassifierSpec::LinearSvm { c, epochs } => {
            let lambda = 1.0 / (c * train.n_rows() as f64);
            Model::Linear(fit_linear(
                &train.values,
                &y,
                classes.len(),
                Loss::Hinge,
                0.1,
                lambda,
                epochs,
            ))
        }
        ClassifierSpec::SgdLogistic {
            learning_rate,
            epochs,
            regularization,
        } => Model::Linear(fit_linear(
            &train.values,
            &y,
            classes.len(),
            Loss::Logistic,
            learning_rate,
            regularization,
            epochs,
        )),
        ClassifierSpec::Knn { k, metric } => Model::Knn(KnnModel {
            k,
            metric,
            rows: train.values.clone(),
            labels: y,
        }),
        ClassifierSpec::DecisionTree { max_depth, min_leaf } => {
            Model::Tree(fit_tree(&train.values, &y, classes.len(), max_depth, min_leaf))
        }
    };
    Ok(Fitted { classes, model })
}

impl<T: Scalar> Fitted<T> {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Index into `classes()` of the predicted label for one row.
    pub fn predict_index(&self, row: &[T]) -> usize {
        match &self.model {
            Model::Linear(m) => argmax(&m.scores(row)),
            Model::Knn(m) => m.vote(row, self.classes.len()),
            Model::Tree(m) => m.predict(row),
        }
    }

    pub fn predict(&self, rows: &[Vec<T>]) -> Vec<String> {
        rows.iter()
            .map(|r| self.classes[self.predict_index(r)].clone())
            .collect()
    }

    /// Per-class one-vs-rest scores for linear models.
    pub fn decision_scores(&self, row: &[T]) -> Option<Vec<T>> {
        match &self.model {
            Model::Linear(m) => Some(m.scores(row)),
            _ => None,
        }
    }
}

/// First index of the maximum, so ties go to the earlier class.
pub(crate) fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Deterministic visiting order: stepping by a stride coprime to `n` near
/// the golden-ratio fraction of `n` walks every row once per epoch.
pub(crate) fn stride_order(n: usize) -> Vec<usize> {
    if n <= 2 {
        return (0..n).collect();
    }
    let mut stride = ((n as f64) * 0.618).round() as usize;
    stride = stride.clamp(1, n - 1);
    while gcd(stride, n) != 1 {
        stride += 1;
    }
    (0..n).map(|i| (i * stride) % n).collect()
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn fit_linear<T: Scalar>(
    rows: &[Vec<T>],
    y: &[usize],
    n_classes: usize,
    loss: Loss,
    eta0: f64,
    lambda: f64,
    epochs: usize,
) -> LinearModel<T> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let nn = T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); d];
    let mut scale = vec![T::one(); d];
    for c in 0..d {
        let m = rows.iter().map(|r| r[c]).sum::<T>() / nn;
        let var = rows.iter().map(|r| (r[c] - m) * (r[c] - m)).sum::<T>() / nn;
        mean[c] = m;
        let s = var.sqrt();
        if !is_negligible_spread(s, m) && s > T::zero() {
            scale[c] = s;
        }
    }
    let x: Vec<Vec<T>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((&v, &m), &s)| (v - m) / s)
                .collect()
        })
        .collect();
    let order = stride_order(n);
    let eta0 = T::lit(eta0);
    let lambda = T::lit(lambda);
    let mut weights = vec![vec![T::zero(); d]; n_classes];
    let mut bias = vec![T::zero(); n_classes];
    for class in 0..n_classes {
        let w = &mut weights[class];
        let b = &mut bias[class];
        let mut t = T::zero();
        for _ in 0..epochs {
            for &i in &order {
                let eta = eta0 / (T::one() + eta0 * lambda * t);
                t += T::one();
                let target = if y[i] == class { T::one() } else { -T::one() };
                let score = dot(w, &x[i]) + *b;
                let margin = target * score;
                let g = match loss {
                    Loss::Hinge => {
                        if margin < T::one() {
                            -target
                        } else {
                            T::zero()
                        }
                    }
                    Loss::Logistic => -target / (T::one() + margin.exp()),
                };
                let shrink = T::one() - eta * lambda;
                for (wj, &xj) in w.iter_mut().zip(&x[i]) {
                    *wj = *wj * shrink - eta * g * xj;
                }
                *b -= eta * g;
            }
        }
    }
    LinearModel {
        mean,
        scale,
        weights,
        bias,
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

impl<T: Scalar> LinearModel<T> {
    fn scores(&self, row: &[T]) -> Vec<T> {
        let x: Vec<T> = row
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect();
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, &b)| dot(w, &x) + b)
            .collect()
    }
}

impl<T: Scalar> KnnModel<T> {
    fn distance(&self, a: &[T], b: &[T]) -> T {
        match self.metric {
            DistanceMetric::Euclidean => a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt(),
            DistanceMetric::Manhattan => a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum(),
        }
    }

    fn vote(&self, row: &[T], n_classes: usize) -> usize {
        let mut dist: Vec<(T, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (self.distance(row, r), i))
            .collect();
        // Stable sort keeps row order among equal distances.
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut votes = vec![0usize; n_classes];
        for &(_, i) in dist.iter().take(self.k) {
            votes[self.labels[i]] += 1;
        }
        let mut best = 0;
        for c in 1..n_classes {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        best
    }
}

fn majority(y: &[usize], idx: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &i in idx {
        counts[y[i]] += 1;
    }
    let mut best = 0;
    for c in 1..n_classes {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

/// Size-weighted Gini impurity: `sum_side n_side * (1 - sum_c p_c^2)`.
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: usize = counts.iter().map(|&c| c * c).sum();
    n as f64 - sq as f64 / n as f64
}

fn fit_tree<T: Scalar>(
    rows: &[Vec<T>],
    y: &[usize],
    n_classes: usize,
    max_depth: usize,
    min_leaf: usize,
) -> TreeModel<T> {
    let mut nodes = Vec::new();
    let all: Vec<usize> = (0..rows.len()).collect();
    grow(rows, y, n_classes, &all, 0, max_depth, min_leaf, &mut nodes);
    TreeModel { nodes }
}

#[allow(clippy::too_many_arguments)]
fn grow<T: Scalar>(
    rows: &[Vec<T>],
    y: &[usize],
    n_classes: usize,
    idx: &[usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: &mut Vec<Node<T>>,
) -> usize {
    let me = nodes.len();
    nodes.push(Node::Leaf(majority(y, idx, n_classes)));
    let pure = idx.iter().all(|&i| y[i] == y[idx[0]]);
    if pure || depth >= max_depth || idx.len() < 2 * min_leaf {
        return me;
    }
    let Some((feature, threshold)) = best_split(rows, y, n_classes, idx, min_leaf) else {
        return me;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][feature] <= threshold);
    let left = grow(rows, y, n_classes, &l, depth + 1, max_depth, min_leaf, nodes);
    let right = grow(rows, y, n_classes, &r, depth + 1, max_depth, min_leaf, nodes);
    nodes[me] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    me
}

/// Lowest weighted Gini over all axis-aligned midpoint thresholds; the
/// first candidate wins ties (feature index, then threshold ascending).
/// Zero-gain splits are allowed so that XOR-like layouts can be resolved
/// one level deeper.
fn best_split<T: Scalar>(
    rows: &[Vec<T>],
    y: &[usize],
    n_classes: usize,
    idx: &[usize],
    min_leaf: usize,
) -> Option<(usize, T)> {
    let d = rows[idx[0]].len();
    let mut total = vec![0usize; n_classes];
    for &i in idx {
        total[y[i]] += 1;
    }
    let mut best: Option<(f64, usize, T)> = None;
    let mut sorted = idx.to_vec();
    for f in 0..d {
        sorted.sort_by(|&a, &b| rows[a][f].partial_cmp(&rows[b][f]).unwrap_or(std::cmp::Ordering::Equal));
        let mut left = vec![0usize; n_classes];
        for pos in 0..sorted.len() - 1 {
            left[y[sorted[pos]]] += 1;
            let (lo, hi) = (rows[sorted[pos]][f], rows[sorted[pos + 1]][f]);
            if lo == hi {
                continue;
            }
            let nl = pos + 1;
            let nr = sorted.len() - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let score = weighted_gini(&left, nl) + weighted_gini(&right, nr);
            if best.as_ref().map_or(true, |b| score < b.0 - 1e-12) {
                best = Some((score, f, (lo + hi) / T::lit(2.0)));
            }
        }
    }
    best.map(|b| (b.1, b.2))
}

impl<T: Scalar> TreeModel<T> {
    fn predict(&self, row: &[T]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(c) => return *c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    #[cfg(test)]
    fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
