//! Evaluation metrics: MSE / MAE, Pearson, Spearman (average ranks), Kendall
//! tau-b, and accuracy with macro precision / recall / F1 over the five
//! rating levels.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::datapipe::{AnnotationType, ScoredSample};
use crate::error::{Error, Result};
use crate::model::HeadScores;
use crate::taxonomy::{Dimension, RatingLevel};

fn check_lengths(pred: usize, gt: usize) -> Result<()> {
    if pred != gt {
        return Err(Error::LengthMismatch { left: pred, right: gt });
    }
    if pred == 0 {
        return Err(Error::Empty);
    }
    Ok(())
}

/// `(mse, mae)`
pub fn regression_metrics(pred: &[f64], gt: &[f64]) -> Result<(f64, f64)> {
    check_lengths(pred.len(), gt.len())?;
    let n = pred.len() as f64;
    let (se, ae) = pred.iter().zip(gt).fold((0.0, 0.0), |(se, ae), (p, g)| {
        let r = p - g;
        (se + r * r, ae + r.abs())
    });
    Ok((se / n, ae / n))
}

/// Correlation coefficients; `None` marks an undefined value (constant input).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub plcc: Option<f64>,
    pub srcc: Option<f64>,
    pub krcc: Option<f64>,
}

pub const MIN_CORRELATION_SAMPLES: usize = 3;

pub fn correlation_metrics(pred: &[f64], gt: &[f64]) -> Result<Correlations> {
    check_lengths(pred.len(), gt.len())?;
    if pred.len() < MIN_CORRELATION_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_CORRELATION_SAMPLES, found: pred.len() });
    }
    if pred.iter().chain(gt).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(Correlations { plcc: pearson(pred, gt), srcc: spearman(pred, gt), krcc: kendall_tau_b(pred, gt) })
}

/// Pearson product-moment correlation, `None` if either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties assigned their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    // -0.0 and 0.0 must tie
    let v: Vec<f64> = v.iter().map(|x| x + 0.0).collect();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Kendall tau-b in O(n log n) (Knight's merge-sort method).
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 {
        return None;
    }
    let mut pairs: Vec<(f64, f64)> = a.iter().zip(b).map(|(x, y)| (x + 0.0, y + 0.0)).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));

    let tie_pairs = |run: u64| run * (run - 1) / 2;
    let (mut ties_a, mut ties_joint) = (0u64, 0u64);
    let (mut run_a, mut run_joint) = (1u64, 1u64);
    for w in pairs.windows(2) {
        if w[1].0 == w[0].0 {
            run_a += 1;
            if w[1].1 == w[0].1 {
                run_joint += 1;
            } else {
                ties_joint += tie_pairs(run_joint);
                run_joint = 1;
            }
        } else {
            ties_a += tie_pairs(run_a);
            ties_joint += tie_pairs(run_joint);
            run_a = 1;
            run_joint = 1;
        }
    }
    ties_a += tie_pairs(run_a);
    ties_joint += tie_pairs(run_joint);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut scratch = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut scratch);

    let mut ties_b = 0u64;
    let mut run_b = 1u64;
    for w in ys.windows(2) {
        if w[1] == w[0] {
            run_b += 1;
        } else {
            ties_b += tie_pairs(run_b);
            run_b = 1;
        }
    }
    ties_b += tie_pairs(run_b);

    let total = (n as u64) * (n as u64 - 1) / 2;
    let denom_a = (total - ties_a) as f64;
    let denom_b = (total - ties_b) as f64;
    if denom_a == 0.0 || denom_b == 0.0 {
        return None;
    }
    let numer = total as f64 - ties_a as f64 - ties_b as f64 + ties_joint as f64 - 2.0 * swaps as f64;
    Some((numer / libm::sqrt(denom_a * denom_b)).clamp(-1.0, 1.0))
}

/// Bottom-up merge sort returning the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], scratch: &mut [f64]) -> u64 {
    let n = v.len();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if v[j].total_cmp(&v[i]) == Ordering::Less {
                    scratch[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    scratch[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            scratch[k..k + mid - i].copy_from_slice(&v[i..mid]);
            k += mid - i;
            scratch[k..k + hi - j].copy_from_slice(&v[j..hi]);
            lo = hi;
        }
        v.copy_from_slice(scratch);
        width *= 2;
    }
    swaps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
}

/// Accuracy and macro P/R/F1. The macro average always divides by five;
/// zero denominators contribute 0.
pub fn classification_metrics(pred: &[RatingLevel], gt: &[RatingLevel]) -> Result<Classification> {
    check_lengths(pred.len(), gt.len())?;
    let mut tp = [0usize; 5];
    let mut pred_count = [0usize; 5];
    let mut gt_count = [0usize; 5];
    for (p, g) in pred.iter().zip(gt) {
        let (pi, gi) = (usize::from(p.code()) - 1, usize::from(g.code()) - 1);
        pred_count[pi] += 1;
        gt_count[gi] += 1;
        if pi == gi {
            tp[pi] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..5 {
        let precision = ratio(tp[c], pred_count[c]);
        let recall = ratio(tp[c], gt_count[c]);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    Ok(Classification {
        accuracy: tp.iter().sum::<usize>() as f64 / pred.len() as f64,
        precision_macro: p_sum / 5.0,
        recall_macro: r_sum / 5.0,
        f1_macro: f_sum / 5.0,
    })
}

/// Which score source a report evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Lm,
    Reg,
    Expert,
    Metavoter,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [HeadKind::Lm, HeadKind::Reg, HeadKind::Expert, HeadKind::Metavoter];

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Lm => "lm",
            HeadKind::Reg => "reg",
            HeadKind::Expert => "expert",
            HeadKind::Metavoter => "metavoter",
        }
    }

    /// Whether this source scores every dimension, not just the overall one.
    pub fn has_dimension_scores(self) -> bool {
        matches!(self, HeadKind::Lm | HeadKind::Expert)
    }

    pub fn overall_score(self, scores: &HeadScores) -> Option<f64> {
        match self {
            HeadKind::Lm => Some(scores.lm_overall),
            HeadKind::Reg => Some(scores.reg),
            HeadKind::Expert => Some(scores.expert[Dimension::OverallAesthetic.index()]),
            HeadKind::Metavoter => scores.fused,
        }
    }

    pub fn dimension_score(self, scores: &HeadScores, dim: Dimension) -> Option<f64> {
        match self {
            HeadKind::Lm => Some(scores.lm_dims[dim.index()]),
            HeadKind::Expert => Some(scores.expert[dim.index()]),
            HeadKind::Reg | HeadKind::Metavoter => None,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const OVERALL_ROW: &str = "overall";

/// Metrics for one target (a dimension, or `"overall"` over every sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub target: String,
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub plcc: Option<f64>,
    pub srcc: Option<f64>,
    pub krcc: Option<f64>,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
}

impl MetricsRow {
    /// Scores are clamped to [0, 1] before levels are derived; regression and
    /// correlation metrics use the raw values.
    pub fn compute(target: &str, pred: &[f64], gt: &[f64]) -> Result<Self> {
        let (mse, mae) = regression_metrics(pred, gt)?;
        let corr = if pred.len() >= MIN_CORRELATION_SAMPLES {
            correlation_metrics(pred, gt)?
        } else {
            Correlations { plcc: None, srcc: None, krcc: None }
        };
        let levels =
            |v: &[f64]| -> Result<Vec<RatingLevel>> {
                v.iter()
                    .map(|s| {
                        if s.is_nan() {
                            Err(Error::NonFiniteInput)
                        } else {
                            RatingLevel::from_score(s.clamp(0.0, 1.0))
                        }
                    })
                    .collect()
            };
        let cls = classification_metrics(&levels(pred)?, &levels(gt)?)?;
        Ok(MetricsRow {
            target: target.to_string(),
            n: pred.len(),
            mse,
            mae,
            plcc: corr.plcc,
            srcc: corr.srcc,
            krcc: corr.krcc,
            accuracy: cls.accuracy,
            precision_macro: cls.precision_macro,
            recall_macro: cls.recall_macro,
            f1_macro: cls.f1_macro,
        })
    }
}

pub const LEVEL_SOURCE: &str = "rating_from_score(clamp(head score, 0, 1))";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub head: HeadKind,
    pub n: usize,
    pub level_source: String,
    pub rows: Vec<MetricsRow>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn row(&self, target: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.target == target)
    }

    pub fn overall(&self) -> &MetricsRow {
        self.row(OVERALL_ROW).expect("every report has an overall row")
    }
}

/// Evaluates one head over `samples`. Dimension rows (LM and Expert heads)
/// use only twelve-dimension samples; the overall row uses all of them.
pub fn evaluate(samples: &[ScoredSample], predictions: &[HeadScores], head: HeadKind) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let by_id: BTreeMap<&str, &HeadScores> = predictions.iter().map(|p| (p.sample_id.as_str(), p)).collect();
    let mut matched = Vec::with_capacity(samples.len());
    for s in samples {
        let p = by_id.get(s.sample_id.as_str()).ok_or_else(|| Error::MissingPrediction(s.sample_id.clone()))?;
        matched.push((s, *p));
    }

    let mut rows = Vec::new();
    if head.has_dimension_scores() {
        let detailed: Vec<_> = matched.iter().filter(|(s, _)| s.f == AnnotationType::TwelveDim).collect();
        if !detailed.is_empty() {
            for dim in Dimension::ALL {
                let (pred, gt): (Vec<f64>, Vec<f64>) = detailed
                    .iter()
                    .map(|(s, p)| (head.dimension_score(p, dim).unwrap_or(f64::NAN), s.scores[&dim]))
                    .unzip();
                rows.push(MetricsRow::compute(dim.as_str(), &pred, &gt)?);
            }
        }
    }
    let mut pred = Vec::with_capacity(matched.len());
    let mut gt = Vec::with_capacity(matched.len());
    for (s, p) in &matched {
        pred.push(head.overall_score(p).ok_or_else(|| Error::MissingPrediction(s.sample_id.clone()))?);
        gt.push(s.overall());
    }
    rows.push(MetricsRow::compute(OVERALL_ROW, &pred, &gt)?);

    Ok(MetricsReport { head, n: samples.len(), level_source: LEVEL_SOURCE.into(), rows, provenance: BTreeMap::new() })
}
