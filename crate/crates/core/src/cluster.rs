//! PCA, genre/component correlation and Ward hierarchical clustering over
//! play-level feature rows.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::num::{euclidean, pearson, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("rows have inconsistent or zero width")]
    BadShape,
    #[error("non-finite input value")]
    NonFinite,
    #[error("{requested} components requested, at most {max} available")]
    TooManyComponents { requested: usize, max: usize },
    #[error("input has no variance")]
    DegenerateInput,
    #[error("only one class present")]
    SingleClass,
    #[error("all pairwise distances are equal")]
    DegenerateDistances,
    #[error("tree has {tree} leaves but {rows} rows were given")]
    LeafMismatch { tree: usize, rows: usize },
}

fn check_rows<T: Scalar>(rows: &[Vec<T>], min_rows: usize) -> Result<usize, ClusterError> {
    if rows.len() < min_rows {
        return Err(ClusterError::TooFewRows {
            needed: min_rows,
            got: rows.len(),
        });
    }
    let f = rows[0].len();
    if f == 0 || rows.iter().any(|r| r.len() != f) {
        return Err(ClusterError::BadShape);
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ClusterError::NonFinite);
    }
    Ok(f)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (unsorted) and eigenvectors as columns of `v`.
pub fn jacobi_eigen<T: Scalar>(mut a: Vec<Vec<T>>) -> (Vec<T>, Vec<Vec<T>>) {
    let n = a.len();
    let mut v = vec![vec![T::zero(); n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let frob = a.iter().flatten().map(|&x| x * x).sum::<T>().sqrt();
    let tol = T::epsilon() * frob;
    for _ in 0..100 {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<T>()
            .sqrt();
        if off <= tol || off < T::lit(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult<T> {
    /// Column means removed before projection.
    pub means: Vec<T>,
    /// Column scales divided out (all ones unless standardized).
    pub scales: Vec<T>,
    /// C x F, orthonormal rows; each row's largest-magnitude entry is
    /// positive.
    pub component_loadings: Vec<Vec<T>>,
    /// N x C.
    pub scores: Vec<Vec<T>>,
    /// Eigenvalues of the retained components.
    pub explained_variance: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
    pub cumulative_ratio: Vec<T>,
}

/// PCA on the sample covariance (divisor N-1) of the mean-centered rows, or
/// on the correlation matrix when `standardize` is set.
pub fn pca<T: Scalar>(rows: &[Vec<T>], n_components: usize, standardize: bool) -> Result<PcaResult<T>, ClusterError> {
    let f = check_rows(rows, 2)?;
    let n = rows.len();
    let max = (n - 1).min(f);
    if n_components > max {
        return Err(ClusterError::TooManyComponents {
            requested: n_components,
            max,
        });
    }
    let nn = T::from_usize_lossy(n);
    let means: Vec<T> = (0..f).map(|c| rows.iter().map(|r| r[c]).sum::<T>() / nn).collect();
    let mut centered: Vec<Vec<T>> = rows
        .iter()
        .map(|r| r.iter().zip(&means).map(|(&x, &m)| x - m).collect())
        .collect();
    let denom = T::from_usize_lossy(n - 1);
    let mut scales = vec![T::one(); f];
    if standardize {
        for (c, s) in scales.iter_mut().enumerate() {
            let sd = (centered.iter().map(|r| r[c] * r[c]).sum::<T>() / denom).sqrt();
            if sd > T::zero() {
                *s = sd;
            }
        }
        for r in centered.iter_mut() {
            for (x, &s) in r.iter_mut().zip(&scales) {
                *x = *x / s;
            }
        }
    }
    let mut cov = vec![vec![T::zero(); f]; f];
    for i in 0..f {
        for j in i..f {
            let v = centered.iter().map(|r| r[i] * r[j]).sum::<T>() / denom;
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    let trace: T = (0..f).map(|i| cov[i][i]).sum();
    if !(trace > T::zero()) {
        return Err(ClusterError::DegenerateInput);
    }
    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let total: T = values.iter().map(|&v| v.max(T::zero())).sum();
    let mut loadings = Vec::with_capacity(n_components);
    let mut explained = Vec::with_capacity(n_components);
    for &c in order.iter().take(n_components) {
        let mut row: Vec<T> = vectors.iter().map(|r| r[c]).collect();
        let mut big = 0;
        for (i, x) in row.iter().enumerate() {
            if x.abs() > row[big].abs() {
                big = i;
            }
        }
        if row[big] < T::zero() {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        loadings.push(row);
        explained.push(values[c].max(T::zero()));
    }
    let ratio: Vec<T> = explained.iter().map(|&v| v / total).collect();
    let mut cumulative = Vec::with_capacity(ratio.len());
    let mut acc = T::zero();
    for &r in &ratio {
        acc += r;
        cumulative.push(acc);
    }
    let scores = centered
        .iter()
        .map(|r| {
            loadings
                .iter()
                .map(|l| r.iter().zip(l).map(|(&x, &w)| x * w).sum())
                .collect()
        })
        .collect();
    Ok(PcaResult {
        means,
        scales,
        component_loadings: loadings,
        scores,
        explained_variance: explained,
        explained_variance_ratio: ratio,
        cumulative_ratio: cumulative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointBiserial<T> {
    pub r: T,
    pub t: T,
    /// Two-sided p-value of `t` with n - 2 degrees of freedom.
    pub p_value: T,
    pub n: usize,
}

/// Pearson correlation between scores and 0/1-coded class membership.
pub fn pc_genre_correlation<T: Scalar>(scores: &[T], in_class: &[bool]) -> Result<PointBiserial<T>, ClusterError> {
    let n = scores.len();
    if in_class.len() != n {
        return Err(ClusterError::BadShape);
    }
    if n < 3 {
        return Err(ClusterError::TooFewRows { needed: 3, got: n });
    }
    if in_class.iter().all(|&c| c) || in_class.iter().all(|&c| !c) {
        return Err(ClusterError::SingleClass);
    }
    let coded: Vec<T> = in_class.iter().map(|&c| if c { T::one() } else { T::zero() }).collect();
    let r = pearson(scores, &coded).ok_or(ClusterError::DegenerateInput)?;
    let df = (n - 2) as f64;
    let rf = r.as_f64();
    let (t, p) = if rf.abs() >= 1.0 {
        (f64::INFINITY.copysign(rf), 0.0)
    } else {
        let t = rf * (df / (1.0 - rf * rf)).sqrt();
        (t, beta_reg(df / 2.0, 0.5, df / (df + t * t)))
    };
    Ok(PointBiserial {
        r,
        t: T::lit(t),
        p_value: T::lit(p),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge<T> {
    /// Cluster ids: leaves are 0..N-1, the i-th merge creates N+i.
    pub a: usize,
    pub b: usize,
    pub height: T,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTree<T> {
    pub n_leaves: usize,
    pub merges: Vec<Merge<T>>,
}

impl<T: Scalar> MergeTree<T> {
    /// Leaves of every cluster id, leaves first then merges.
    fn members(&self) -> Vec<Vec<usize>> {
        let mut m: Vec<Vec<usize>> = (0..self.n_leaves).map(|i| vec![i]).collect();
        for merge in &self.merges {
            let mut joined = m[merge.a].clone();
            joined.extend_from_slice(&m[merge.b]);
            m.push(joined);
        }
        m
    }

    /// Left-to-right leaf order of the drawn dendrogram.
    pub fn leaf_order(&self) -> Vec<usize> {
        if self.merges.is_empty() {
            return (0..self.n_leaves).collect();
        }
        let mut out = Vec::with_capacity(self.n_leaves);
        let mut stack = vec![self.n_leaves + self.merges.len() - 1];
        while let Some(id) = stack.pop() {
            if id < self.n_leaves {
                out.push(id);
            } else {
                let m = &self.merges[id - self.n_leaves];
                stack.push(m.b);
                stack.push(m.a);
            }
        }
        out
    }

    pub fn root_height(&self) -> T {
        self.merges.last().map_or(T::zero(), |m| m.height)
    }
}

/// Ward agglomerative clustering by the Lance-Williams recurrence on
/// squared distances, seeded with Euclidean distances between rows.
/// Each step merges the globally closest pair; ties go to the pair with
/// the smaller (lower id, higher id).
pub fn ward_linkage<T: Scalar>(rows: &[Vec<T>]) -> Result<MergeTree<T>, ClusterError> {
    check_rows(rows, 2)?;
    let n = rows.len();
    let mut d2 = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&rows[i], &rows[j]);
            d2[i][j] = d * d;
            d2[j][i] = d * d;
        }
    }
    // Slot i holds cluster `ids[i]` of `sizes[i]` leaves while `active[i]`.
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(T, usize, usize, (usize, usize))> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                let key = (ids[i].min(ids[j]), ids[i].max(ids[j]));
                let better = match &best {
                    None => true,
                    Some((d, _, _, k)) => d2[i][j] < *d || (d2[i][j] == *d && key < *k),
                };
                if better {
                    best = Some((d2[i][j], i, j, key));
                }
            }
        }
        let (dij, i, j, (a, b)) = best.expect("two active clusters remain");
        let (ni, nj) = (T::from_usize_lossy(sizes[i]), T::from_usize_lossy(sizes[j]));
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let nk = T::from_usize_lossy(sizes[k]);
            let v = ((ni + nk) * d2[i][k] + (nj + nk) * d2[j][k] - nk * dij) / (ni + nj + nk);
            let v = v.max(T::zero());
            d2[i][k] = v;
            d2[k][i] = v;
        }
        sizes[i] += sizes[j];
        active[j] = false;
        ids[i] = n + step;
        merges.push(Merge {
            a,
            b,
            height: dij.sqrt(),
            size: sizes[i],
        });
    }
    Ok(MergeTree { n_leaves: n, merges })
}

/// Index of pair (i, j), i < j, in condensed upper-triangle order.
pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Height of the lowest merge joining each pair, in condensed order.
pub fn cophenetic_distances<T: Scalar>(tree: &MergeTree<T>) -> Vec<T> {
    let n = tree.n_leaves;
    let mut out = vec![T::zero(); n * n.saturating_sub(1) / 2];
    let members = tree.members();
    for m in &tree.merges {
        for &x in &members[m.a] {
            for &y in &members[m.b] {
                out[condensed_index(n, x.min(y), x.max(y))] = m.height;
            }
        }
    }
    out
}

pub fn pairwise_distances<T: Scalar>(rows: &[Vec<T>]) -> Vec<T> {
    let n = rows.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(euclidean(&rows[i], &rows[j]));
        }
    }
    out
}

/// Pearson correlation between original and cophenetic distances. With a
/// single pair the correlation is undefined and 1.0 is returned.
pub fn cophenetic_correlation<T: Scalar>(tree: &MergeTree<T>, rows: &[Vec<T>]) -> Result<T, ClusterError> {
    if tree.n_leaves != rows.len() {
        return Err(ClusterError::LeafMismatch {
            tree: tree.n_leaves,
            rows: rows.len(),
        });
    }
    if rows.len() == 2 {
        return Ok(T::one());
    }
    let d = pairwise_distances(rows);
    let c = cophenetic_distances(tree);
    pearson(&d, &c).ok_or(ClusterError::DegenerateDistances)
}

/// Flat clusters from merges below `threshold`; ids follow the first
/// appearance of each cluster in leaf order.
pub fn cut_tree<T: Scalar>(tree: &MergeTree<T>, threshold: T) -> Vec<usize> {
    let n = tree.n_leaves;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut rep: Vec<usize> = (0..n).collect();
    for m in &tree.merges {
        let (ra, rb) = (rep[m.a], rep[m.b]);
        if m.height < threshold {
            let (x, y) = (find(&mut parent, ra), find(&mut parent, rb));
            parent[y] = x;
        }
        rep.push(ra);
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|leaf| {
            let root = find(&mut parent, leaf);
            if label[root] == usize::MAX {
                label[root] = next;
                next += 1;
            }
            label[root]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterComposition {
    pub cluster: usize,
    pub size: usize,
    /// Counts per genre, in the order given to `cluster_genre_composition`.
    pub counts: Vec<usize>,
    pub purity: f64,
}

pub fn cluster_genre_composition(ids: &[usize], genres: &[String], genre_order: &[String]) -> Vec<ClusterComposition> {
    let k = ids.iter().max().map_or(0, |m| m + 1);
    let mut out: Vec<ClusterComposition> = (0..k)
        .map(|c| ClusterComposition {
            cluster: c,
            size: 0,
            counts: vec![0; genre_order.len()],
            purity: 0.0,
        })
        .collect();
    for (&c, g) in ids.iter().zip(genres) {
        out[c].size += 1;
        if let Some(gi) = genre_order.iter().position(|o| o == g) {
            out[c].counts[gi] += 1;
        }
    }
    for c in &mut out {
        if c.size > 0 {
            c.purity = *c.counts.iter().max().unwrap_or(&0) as f64 / c.size as f64;
        }
    }
    out
}

pub fn write_pca_scores<T: Scalar, W: Write>(mut w: W, row_ids: &[String], p: &PcaResult<T>) -> std::io::Result<()> {
    let header: Vec<String> = (1..=p.component_loadings.len()).map(|c| format!("PC{c}")).collect();
    writeln!(w, "play_id\t{}", header.join("\t"))?;
    for (id, s) in row_ids.iter().zip(&p.scores) {
        let cells: Vec<String> = s.iter().map(|x| format!("{x:.8}")).collect();
        writeln!(w, "{id}\t{}", cells.join("\t"))?;
    }
    Ok(())
}

pub fn write_loadings<T: Scalar, W: Write>(mut w: W, features: &[String], p: &PcaResult<T>) -> std::io::Result<()> {
    let header: Vec<String> = (1..=p.component_loadings.len()).map(|c| format!("PC{c}")).collect();
    writeln!(w, "feature\t{}", header.join("\t"))?;
    for (f, name) in features.iter().enumerate() {
        let cells: Vec<String> = p.component_loadings.iter().map(|l| format!("{:.8}", l[f])).collect();
        writeln!(w, "{name}\t{}", cells.join("\t"))?;
    }
    Ok(())
}

pub fn write_ratios<T: Scalar, W: Write>(mut w: W, p: &PcaResult<T>) -> std::io::Result<()> {
    writeln!(w, "component\teigenvalue\tratio\tcumulative")?;
    for c in 0..p.explained_variance.len() {
        writeln!(
            w,
            "PC{}\t{:.8}\t{:.8}\t{:.8}",
            c + 1,
            p.explained_variance[c],
            p.explained_variance_ratio[c],
            p.cumulative_ratio[c]
        )?;
    }
    Ok(())
}

pub fn write_linkage<T: Scalar, W: Write>(mut w: W, tree: &MergeTree<T>) -> std::io::Result<()> {
    writeln!(w, "merge_index\tcluster_a\tcluster_b\theight\tnew_size")?;
    for (i, m) in tree.merges.iter().enumerate() {
        writeln!(w, "{i}\t{}\t{}\t{:.10}\t{}", m.a, m.b, m.height, m.size)?;
    }
    Ok(())
}
