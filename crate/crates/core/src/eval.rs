//! Classification and ordering metrics over similarity matrices.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{softmax_rows, LabelVector, Matrix, SimilarityMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub macro_auc: f64,
    /// `None` for classes absent from the evaluated labels.
    pub per_class_auc: Vec<Option<f64>>,
    pub rank_monotonicity: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub n_eval: usize,
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predictions(s: &SimilarityMatrix) -> LabelVector {
    let labels = s
        .values()
        .iter_rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (j, &v)| if v > best.1 { (j, v) } else { best },
                )
                .0
        })
        .collect();
    LabelVector::new(labels, s.k()).expect("argmax is in range")
}

pub fn confusion_matrix(predictions: &LabelVector, truth: &LabelVector, k: usize) -> Result<Vec<Vec<usize>>> {
    check_len(predictions.len(), truth.len())?;
    let mut cm = vec![vec![0; k]; k];
    for (&p, &t) in predictions.as_slice().iter().zip(truth.as_slice()) {
        if p >= k || t >= k {
            return Err(Error::invalid(format!("label out of range for {k} classes")));
        }
        cm[t][p] += 1;
    }
    Ok(cm)
}

/// Unweighted mean of per-class F1. A 0/0 precision or recall counts as 0,
/// so classes never predicted and never present contribute 0.
pub fn macro_f1(predictions: &LabelVector, truth: &LabelVector, k: usize) -> Result<f64> {
    let cm = confusion_matrix(predictions, truth, k)?;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let total: f64 = (0..k)
        .map(|c| {
            let tp = cm[c][c];
            let predicted: usize = (0..k).map(|t| cm[t][c]).sum();
            let actual: usize = cm[c].iter().sum();
            let (p, r) = (ratio(tp, predicted), ratio(tp, actual));
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .sum();
    Ok(total / k as f64)
}

/// Mann-Whitney AUC with midranks for ties. `None` when either group is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Result<Option<f64>> {
    check_len(scores.len(), positive.len())?;
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum += order[i..=j].iter().filter(|&&o| positive[o]).count() as f64 * midrank;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok(Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn)))
}

/// One-vs-rest AUC per class on column `j` of `scores`, and their mean over
/// classes present in `truth`.
pub fn auc_macro_ovr(scores: &Matrix, truth: &LabelVector, k: usize) -> Result<(f64, Vec<Option<f64>>)> {
    check_len(scores.rows(), truth.len())?;
    if scores.cols() != k {
        return Err(Error::invalid(format!(
            "scores have {} columns, expected {k}",
            scores.cols()
        )));
    }
    let present = truth.class_counts().iter().filter(|&&n| n > 0).count();
    if present < 2 {
        return Err(Error::invalid(format!(
            "AUC undefined: {present} distinct class(es) in truth"
        )));
    }
    let mut per_class = Vec::with_capacity(k);
    let mut column = vec![0.0; scores.rows()];
    for j in 0..k {
        for (i, v) in column.iter_mut().enumerate() {
            *v = scores.get(i, j);
        }
        let positive: Vec<bool> = truth.as_slice().iter().map(|&t| t == j).collect();
        per_class.push(binary_auc(&column, &positive)?);
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok((defined.iter().sum::<f64>() / defined.len() as f64, per_class))
}

/// Whether `row` strictly decreases in both directions away from `c`.
pub fn is_rank_monotone(row: &[f64], c: usize) -> bool {
    row[c..].windows(2).all(|w| w[0] > w[1]) && row[..=c].windows(2).all(|w| w[0] < w[1])
}

/// Fraction of rows that strictly decrease on both sides of the true class.
pub fn rank_monotonicity(s: &SimilarityMatrix, truth: &LabelVector) -> Result<f64> {
    check_len(s.m(), truth.len())?;
    if let Some(&c) = truth.as_slice().iter().find(|&&c| c >= s.k()) {
        return Err(Error::invalid(format!("label {c} out of range for {} classes", s.k())));
    }
    let ok = (0..s.m()).filter(|&i| is_rank_monotone(s.row(i), truth.get(i))).count();
    Ok(ok as f64 / s.m() as f64)
}

/// Mean similarity row per true class; `None` marks classes with no samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMeanSimilarity {
    pub k: usize,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl ClassMeanSimilarity {
    /// Heatmap CSV: header `true_class,s0,…`, one row per class; absent classes have empty cells.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("true_class");
        for j in 0..self.k {
            write!(out, ",s{j}").unwrap();
        }
        out.push('\n');
        for (c, row) in self.rows.iter().enumerate() {
            write!(out, "{c}").unwrap();
            match row {
                Some(r) => r.iter().for_each(|v| write!(out, ",{v}").unwrap()),
                None => (0..self.k).for_each(|_| out.push(',')),
            }
            out.push('\n');
        }
        out
    }

    /// Number of present classes whose mean row strictly satisfies both chains.
    pub fn monotone_rows(&self) -> usize {
        self.rows
            .iter()
            .enumerate()
            .filter(|(c, r)| r.as_deref().is_some_and(|r| is_rank_monotone(r, *c)))
            .count()
    }

    /// Whether each present row attains its maximum on the diagonal.
    pub fn diagonal_dominant(&self) -> bool {
        self.rows.iter().enumerate().all(|(c, r)| match r {
            Some(r) => r.iter().all(|&v| v <= r[c]),
            None => true,
        })
    }
}

pub fn class_mean_similarity(s: &SimilarityMatrix, truth: &LabelVector, k: usize) -> Result<ClassMeanSimilarity> {
    check_len(s.m(), truth.len())?;
    if s.k() != k {
        return Err(Error::invalid(format!(
            "similarity has {} classes, expected {k}",
            s.k()
        )));
    }
    let mut sums = vec![vec![0.0; k]; k];
    let mut counts = vec![0usize; k];
    for i in 0..s.m() {
        let c = truth.get(i);
        if c >= k {
            return Err(Error::invalid(format!("label {c} out of range")));
        }
        counts[c] += 1;
        for (acc, v) in sums[c].iter_mut().zip(s.row(i)) {
            *acc += v;
        }
    }
    let rows = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &n)| (n > 0).then(|| sum.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    Ok(ClassMeanSimilarity { k, rows })
}

/// All metrics for a (calibrated) similarity matrix.
pub fn evaluate(s: &SimilarityMatrix, truth: &LabelVector, tau: f64) -> Result<MetricsReport> {
    let k = s.k();
    let pred = predictions(s);
    let probs = softmax_rows(s, tau)?;
    let (macro_auc, per_class_auc) = auc_macro_ovr(&probs, truth, k)?;
    Ok(MetricsReport {
        macro_f1: macro_f1(&pred, truth, k)?,
        macro_auc,
        per_class_auc,
        rank_monotonicity: rank_monotonicity(s, truth)?,
        confusion: confusion_matrix(&pred, truth, k)?,
        n_eval: truth.len(),
    })
}
