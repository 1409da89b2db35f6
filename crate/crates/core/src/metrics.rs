//! Binary classification metrics and cross-fold aggregation.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// A ratio that falls back to 0 when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub value: f64,
    /// Set when the denominator was zero.
    pub undefined: bool,
}

impl Rate {
    fn ratio(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Self {
                value: 0.0,
                undefined: true,
            }
        } else {
            Self {
                value: num / den,
                undefined: false,
            }
        }
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Rate {
        Rate::ratio((self.tp + self.tn) as f64, self.total() as f64)
    }

    pub fn precision(&self) -> Rate {
        Rate::ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> Rate {
        Rate::ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self) -> Rate {
        let p = self.precision();
        let r = self.recall();
        let mut f = Rate::ratio(2.0 * p.value * r.value, p.value + r.value);
        f.undefined |= p.undefined || r.undefined;
        f
    }
}

/// Counts with `score >= threshold` predicted positive (label 1).
pub fn confusion<T: Scalar>(
    scores: &[T],
    labels: &[usize],
    threshold: T,
) -> Result<ConfusionCounts> {
    check_inputs(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn check_inputs<T: Scalar>(scores: &[T], labels: &[usize]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            op: "metrics",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: 2,
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    Ok(())
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from mid-ranks in O(n log n).
pub fn auc<T: Scalar>(scores: &[T], labels: &[usize]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN rejected"));

    // sum of positive ranks, ties sharing the average rank
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let positives = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid_rank * positives as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// ROC curve points `(fpr, tpr)` from the highest threshold down, one point
/// per distinct score, starting at `(0, 0)`.
pub fn roc_curve<T: Scalar>(scores: &[T], labels: &[usize]) -> Result<Vec<(f64, f64)>> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::Data("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("NaN rejected"));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / n_neg, tp as f64 / n_pos));
        i = j;
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_curve`].
pub fn trapezoid_auc<T: Scalar>(scores: &[T], labels: &[usize]) -> Result<f64> {
    let pts = roc_curve(scores, labels)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum())
}

/// Mean and sample standard deviation (`n - 1`; zero for one value).
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Data("nothing to aggregate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// The five reported metrics for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub counts: ConfusionCounts,
    /// Precision, recall or F1 hit a zero denominator.
    pub degenerate: bool,
}

pub const METRIC_NAMES: [&str; 5] = ["accuracy", "precision", "recall", "f1", "auc"];

impl BinaryMetrics {
    /// Scores are positive-class probabilities, thresholded at 0.5.
    pub fn evaluate<T: Scalar>(scores: &[T], labels: &[usize]) -> Result<Self> {
        let counts = confusion(scores, labels, T::of(0.5))?;
        let (p, r, f) = (counts.precision(), counts.recall(), counts.f1());
        Ok(Self {
            accuracy: counts.accuracy().value,
            precision: p.value,
            recall: r.value,
            f1: f.value,
            auc: auc(scores, labels)?,
            counts,
            degenerate: p.undefined || r.undefined || f.undefined,
        })
    }

    pub fn values(&self) -> [f64; 5] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.auc,
        ]
    }
}

/// Per-fold metric values with their cross-fold mean ± std.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub label: String,
    pub folds: Vec<[f64; 5]>,
    pub mean: [f64; 5],
    pub std: [f64; 5],
    /// Set when some planned fold did not finish.
    pub incomplete: bool,
}

impl FoldReport {
    pub fn new(label: impl Into<String>, folds: Vec<[f64; 5]>, incomplete: bool) -> Result<Self> {
        let mut mean = [0.0; 5];
        let mut std = [0.0; 5];
        for m in 0..5 {
            let column: Vec<f64> = folds.iter().map(|f| f[m]).collect();
            (mean[m], std[m]) = aggregate(&column)?;
        }
        Ok(Self {
            label: label.into(),
            folds,
            mean,
            std,
            incomplete,
        })
    }

    pub fn metric(&self, name: &str) -> Option<(f64, f64)> {
        let i = METRIC_NAMES.iter().position(|&n| n == name)?;
        Some((self.mean[i], self.std[i]))
    }

    /// One row per fold: `label,fold,accuracy,precision,recall,f1,auc`.
    pub fn write_csv<W: Write>(reports: &[FoldReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label", "fold"];
        header.extend(METRIC_NAMES);
        w.write_record(&header)?;
        for r in reports {
            for (i, f) in r.folds.iter().enumerate() {
                let mut rec = vec![r.label.clone(), i.to_string()];
                rec.extend(f.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv), grouping rows by label in
    /// order of first appearance.
    pub fn read_csv<R: Read>(input: R) -> Result<Vec<FoldReport>> {
        let mut reader = csv::Reader::from_reader(input);
        let mut grouped: Vec<(String, Vec<[f64; 5]>)> = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != 7 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 7 fields, found {}", rec.len()),
                });
            }
            let mut vals = [0.0; 5];
            for (m, v) in vals.iter_mut().enumerate() {
                *v = rec[m + 2].parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad {} value", METRIC_NAMES[m]),
                })?;
            }
            let label = rec[0].to_string();
            match grouped.iter_mut().find(|(l, _)| *l == label) {
                Some((_, folds)) => folds.push(vals),
                None => grouped.push((label, vec![vals])),
            }
        }
        grouped
            .into_iter()
            .map(|(l, f)| FoldReport::new(l, f, false))
            .collect()
    }
}

/// Renders reports as a table with `mean±std` cells in percent.
pub fn render_table(reports: &[FoldReport]) -> String {
    let headers = [
        "Strategy",
        "Accuracy",
        "Precision",
        "Recall",
        "F1-score",
        "AUC",
    ];
    let mut rows: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for r in reports {
        let mut row = vec![if r.incomplete {
            format!("{} (incomplete)", r.label)
        } else {
            r.label.clone()
        }];
        for m in 0..5 {
            row.push(format!("{:.2}±{:.2}", 100.0 * r.mean[m], 100.0 * r.std[m]));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            writeln!(out, "{}", "-".repeat(total)).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_and_boundary_confusion() {
        let c = confusion(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!((c.fp, c.fn_, c.tp, c.tn), (0, 0, 2, 2));
        let c = confusion(&[0.5, 0.5, 0.5], &[1, 0, 0], 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 2, 0, 0));
        assert!(confusion::<f64>(&[], &[], 0.5).is_err());
        assert!(confusion(&[0.1], &[0, 1], 0.5).is_err());
    }

    #[test]
    fn rates_from_counts() {
        let all = ConfusionCounts {
            tp: 1,
            fp: 0,
            tn: 1,
            fn_: 0,
        };
        for r in [all.accuracy(), all.precision(), all.recall(), all.f1()] {
            assert_eq!(r.value, 1.0);
        }
        let missed = ConfusionCounts {
            tp: 0,
            fp: 1,
            tn: 3,
            fn_: 2,
        };
        assert_eq!(missed.recall().value, 0.0);
        assert_eq!(missed.f1().value, 0.0);

        let c = ConfusionCounts {
            tp: 3,
            fp: 1,
            tn: 0,
            fn_: 2,
        };
        assert_abs_diff_eq!(c.precision().value, 0.75);
        assert_abs_diff_eq!(c.recall().value, 0.6);
        assert_abs_diff_eq!(c.f1().value, 2.0 * 0.45 / 1.35, epsilon = 1e-15);
        assert_abs_diff_eq!(c.f1().value, 0.666667, epsilon = 1e-6);
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let none_predicted = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 4,
            fn_: 3,
        };
        let p = none_predicted.precision();
        assert!(p.undefined);
        assert_eq!(p.value, 0.0);
        assert!(none_predicted.f1().undefined);
        assert!(!none_predicted.recall().undefined);
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(auc(&[0.4; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn trapezoid_handles_ties() {
        let s = [0.3, 0.3, 0.7, 0.1, 0.7];
        let y = [1, 0, 1, 0, 0];
        assert_abs_diff_eq!(
            trapezoid_auc(&s, &y).unwrap(),
            auc(&s, &y).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn aggregate_cases() {
        assert_eq!(aggregate(&[70.0, 70.0, 70.0]).unwrap(), (70.0, 0.0));
        let (m, s) = aggregate(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert_abs_diff_eq!(s, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(aggregate(&[4.2]).unwrap(), (4.2, 0.0));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn report_csv_round_trip_and_table() {
        let r = FoldReport::new(
            "acl",
            vec![[0.7, 0.6, 0.5, 0.55, 0.8], [0.72, 0.62, 0.52, 0.56, 0.81]],
            false,
        )
        .unwrap();
        let mut buf = Vec::new();
        FoldReport::write_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        let back = FoldReport::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![r.clone()]);
        let table = render_table(&[r]);
        assert!(table.contains("AUC"));
        assert!(table.contains("80.50±0.71"), "{table}");
    }
}
