//! Task metrics and multi-task transfer gains.
//!
//! Per-task metrics (mIoU, RMSE, mean angular error, best-threshold edge F)
//! plus the signed percent transfer gain against a single-task baseline:
//!
//! ```text
//! delta = (mt - st) / st * 100   for higher-is-better metrics
//! delta = (st - mt) / st * 100   for lower-is-better metrics
//! ```
//!
//! so positive always means the multi-task model improved. The averaged gain
//! is the arithmetic mean of the per-task deltas. Percent values are kept at
//! full precision internally and rounded to two decimals only when rendered.

use crate::error::{Error, Result};
use crate::field::{shape_mismatch, FieldTensor, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricDirection {
    HigherBetter,
    LowerBetter,
}

/// A named metric value with its improvement direction.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetric {
    pub name: String,
    pub value: f64,
    pub direction: MetricDirection,
}

impl TaskMetric {
    pub fn new(name: impl Into<String>, value: f64, direction: MetricDirection) -> Self {
        Self {
            name: name.into(),
            value,
            direction,
        }
    }
}

/// Signed percent transfer gain of a multi-task result over its single-task
/// baseline.
pub fn delta_tau(mt: &TaskMetric, st: &TaskMetric) -> Result<f64> {
    if mt.direction != st.direction || mt.name != st.name {
        return Err(Error::parameter(
            "metrics",
            format!("cannot compare {} against {}", mt.name, st.name),
        ));
    }
    if st.value == 0.0 {
        return Err(Error::DivisionByZero {
            what: format!("single-task baseline for {}", st.name),
        });
    }
    Ok(match st.direction {
        MetricDirection::HigherBetter => (mt.value - st.value) / st.value * 100.0,
        MetricDirection::LowerBetter => (st.value - mt.value) / st.value * 100.0,
    })
}

/// Arithmetic mean of per-task transfer gains.
pub fn delta_mtl(deltas: &[f64]) -> Result<f64> {
    if deltas.is_empty() {
        return Err(Error::EmptyInput {
            what: "transfer gains",
        });
    }
    Ok(deltas.iter().sum::<f64>() / deltas.len() as f64)
}

/// Mean intersection-over-union over the classes present in either map;
/// classes absent from both ground truth and prediction are excluded.
pub fn miou(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(shape_mismatch("miou", (gt.len(), 1, 1), (pred.len(), 1, 1)));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fnn = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        if p >= num_classes || g >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: p.max(g),
                num_classes,
            });
        }
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnn[g] += 1;
        }
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for c in 0..num_classes {
        let union = tp[c] + fp[c] + fnn[c];
        if union == 0 {
            continue;
        }
        total += tp[c] as f64 / union as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::EmptyInput {
            what: "classes present in either map",
        });
    }
    Ok(total / counted as f64)
}

/// Root mean squared error.
pub fn rmse(pred: &ScalarField, gt: &ScalarField) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(shape_mismatch(
            "rmse",
            (gt.height(), gt.width(), 1),
            (pred.height(), pred.width(), 1),
        ));
    }
    let n = pred.data().len() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| (p - g) * (p - g))
        .sum();
    Ok((sum / n).sqrt())
}

/// Mean angular error in degrees between per-pixel normal vectors. Both
/// inputs are renormalized internally; zero-length vectors are rejected.
pub fn mean_angular_error(pred: &FieldTensor, gt: &FieldTensor) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(shape_mismatch("mean_angular_error", gt.shape(), pred.shape()));
    }
    let (h, w, c) = pred.shape();
    if c != 3 {
        return Err(Error::invalid(format!("normals need 3 channels, got {c}")));
    }
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let mut dot = 0.0;
            let mut np = 0.0;
            let mut ng = 0.0;
            for ch in 0..3 {
                let p = pred.get(y, x, ch);
                let g = gt.get(y, x, ch);
                dot += p * g;
                np += p * p;
                ng += g * g;
            }
            if np == 0.0 || ng == 0.0 {
                return Err(Error::invalid(format!("zero-length normal at ({y}, {x})")));
            }
            let cos = (dot / (np.sqrt() * ng.sqrt())).clamp(-1.0, 1.0);
            total += cos.acos().to_degrees();
        }
    }
    Ok(total / (h * w) as f64)
}

/// Chebyshev dilation of a binary mask by `radius`.
fn dilate(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            let y0 = y.saturating_sub(radius);
            let x0 = x.saturating_sub(radius);
            for yy in y0..=(y + radius).min(h - 1) {
                for xx in x0..=(x + radius).min(w - 1) {
                    out[yy * w + xx] = true;
                }
            }
        }
    }
    out
}

/// Best F-measure over thresholds 0.01..=0.99 (step 0.01). A predicted edge
/// pixel is a true positive when it lies within Chebyshev `tolerance_radius`
/// of a ground-truth edge pixel; recall applies the symmetric rule. Ties
/// resolve to the lowest threshold.
pub fn edge_f_best(
    edge_prob: &ScalarField,
    gt_edges: &ScalarField,
    tolerance_radius: usize,
) -> Result<(f64, f64)> {
    if !edge_prob.same_shape(gt_edges) {
        return Err(shape_mismatch(
            "edge_f_best",
            (gt_edges.height(), gt_edges.width(), 1),
            (edge_prob.height(), edge_prob.width(), 1),
        ));
    }
    if let Some(v) = edge_prob.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("edge probability {v} outside [0, 1]")));
    }
    if let Some(v) = gt_edges.data().iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::invalid(format!("ground-truth edge value {v} is not binary")));
    }
    let (h, w) = (edge_prob.height(), edge_prob.width());
    let gt: Vec<bool> = gt_edges.data().iter().map(|&v| v == 1.0).collect();
    let gt_dilated = dilate(&gt, h, w, tolerance_radius);
    let gt_count = gt.iter().filter(|&&b| b).count();

    // Max probability within the tolerance window of each ground-truth edge
    // pixel: that pixel is recalled at any threshold at or below the max.
    let mut gt_best_prob = Vec::with_capacity(gt_count);
    for y in 0..h {
        for x in 0..w {
            if !gt[y * w + x] {
                continue;
            }
            let y0 = y.saturating_sub(tolerance_radius);
            let x0 = x.saturating_sub(tolerance_radius);
            let mut best: f64 = 0.0;
            for yy in y0..=(y + tolerance_radius).min(h - 1) {
                for xx in x0..=(x + tolerance_radius).min(w - 1) {
                    best = best.max(edge_prob.get(yy, xx));
                }
            }
            gt_best_prob.push(best);
        }
    }

    let mut best_f = 0.0;
    let mut best_threshold = 0.01;
    for step in 1..=99u32 {
        let threshold = step as f64 / 100.0;
        let mut pred_count = 0usize;
        let mut matched_pred = 0usize;
        for i in 0..h * w {
            if edge_prob.data()[i] >= threshold {
                pred_count += 1;
                if gt_dilated[i] {
                    matched_pred += 1;
                }
            }
        }
        let recalled = gt_best_prob.iter().filter(|&&m| m >= threshold).count();
        let precision = if pred_count > 0 {
            matched_pred as f64 / pred_count as f64
        } else {
            0.0
        };
        let recall = if gt_count > 0 {
            recalled as f64 / gt_count as f64
        } else {
            0.0
        };
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if f > best_f {
            best_f = f;
            best_threshold = threshold;
        }
    }
    Ok((best_f, best_threshold))
}

/// One ingested comparison row: single-task and multi-task values of one
/// metric.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRow {
    pub task: String,
    pub direction: MetricDirection,
    pub st_value: f64,
    pub mt_value: f64,
}

/// Parses the `task,direction,st_value,mt_value` CSV ingestion format.
/// `direction` is `higher` or `lower`.
pub fn parse_transfer_csv(text: &str) -> Result<Vec<TransferRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != "task,direction,st_value,mt_value" {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected header `task,direction,st_value,mt_value`, got `{line}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields, got {}", parts.len()),
            });
        }
        let direction = match parts[1].trim() {
            "higher" => MetricDirection::HigherBetter,
            "lower" => MetricDirection::LowerBetter,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("direction must be `higher` or `lower`, got `{other}`"),
                })
            }
        };
        let parse_value = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("{what} `{s}` is not a number"),
            })
        };
        rows.push(TransferRow {
            task: parts[0].trim().to_string(),
            direction,
            st_value: parse_value(parts[2], "st_value")?,
            mt_value: parse_value(parts[3], "mt_value")?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput {
            what: "transfer rows",
        });
    }
    Ok(rows)
}

/// Per-task transfer gains plus their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub per_task: Vec<(String, f64)>,
    pub delta_mtl: f64,
}

impl TransferReport {
    pub fn from_rows(rows: &[TransferRow]) -> Result<Self> {
        let mut per_task = Vec::with_capacity(rows.len());
        for row in rows {
            let st = TaskMetric::new(row.task.clone(), row.st_value, row.direction);
            let mt = TaskMetric::new(row.task.clone(), row.mt_value, row.direction);
            per_task.push((row.task.clone(), delta_tau(&mt, &st)?));
        }
        let mean = delta_mtl(&per_task.iter().map(|(_, d)| *d).collect::<Vec<_>>())?;
        Ok(Self {
            per_task,
            delta_mtl: mean,
        })
    }

    /// CSV rendering: `task,delta` rows and a `delta_mtl` footer, rounded to
    /// two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,delta\n");
        for (task, delta) in &self.per_task {
            out.push_str(&format!("{task},{delta:.2}\n"));
        }
        out.push_str(&format!("delta_mtl,{:.2}\n", self.delta_mtl));
        out
    }
}
