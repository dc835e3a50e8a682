use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ActivityInstance;
use crate::rjmcmc::ChainSamples;

/// Area shared by two discs.
fn disc_intersection(d: f64, r1: f64, r2: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1))
        .clamp(-1.0, 1.0)
        .acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2))
        .clamp(-1.0, 1.0)
        .acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
        .max(0.0)
        .sqrt();
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k
}

/// Temporal IoU times spatial disc IoU.
pub fn cylinder_iou(a: &ActivityInstance, b: &ActivityInstance) -> f64 {
    let overlap = a.end_s().min(b.end_s()) - a.start_s.max(b.start_s);
    if overlap <= 0.0 {
        return 0.0;
    }
    let union = a.end_s().max(b.end_s()) - a.start_s.min(b.start_s);
    let t_iou = overlap / union;
    let d = ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2)).sqrt();
    let inter = disc_intersection(d, a.radius_m, b.radius_m);
    if inter <= 0.0 {
        return 0.0;
    }
    let s_iou = inter / (PI * a.radius_m * a.radius_m + PI * b.radius_m * b.radius_m - inter);
    t_iou * s_iou
}

/// Greedy one-to-one matching by descending IoU (ties: lower truth index,
/// then lower detection index). Returns `(truth, detected, iou)` triples.
pub fn greedy_matches(
    truth: &[ActivityInstance],
    detected: &[ActivityInstance],
    threshold: f64,
) -> Vec<(usize, usize, f64)> {
    let mut pairs = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            let v = cylinder_iou(t, d);
            if v > 0.0 && v >= threshold {
                pairs.push((i, j, v));
            }
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut out = Vec::new();
    for (i, j, v) in pairs {
        if !used_t[i] && !used_d[j] {
            used_t[i] = true;
            used_d[j] = true;
            out.push((i, j, v));
        }
    }
    out
}

/// Metrics of one configuration sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub n_true: usize,
    pub n_detected: usize,
    /// `|n_detected - n_true| / n_true`, or the absolute difference when
    /// there is no truth.
    pub count_error: f64,
    pub signed_error: f64,
    pub n_matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SampleEval {
    pub fn compute(
        truth: &[ActivityInstance],
        detected: &[ActivityInstance],
        threshold: f64,
    ) -> Self {
        let (nt, nd) = (truth.len(), detected.len());
        let diff = nd as f64 - nt as f64;
        let (count_error, signed_error) = if nt == 0 {
            (diff.abs(), diff)
        } else {
            (diff.abs() / nt as f64, diff / nt as f64)
        };
        let m = greedy_matches(truth, detected, threshold).len();
        // Vacuous cases: nothing detected has precision 1, nothing to find
        // has recall 1.
        let precision = if nd == 0 { 1.0 } else { m as f64 / nd as f64 };
        let recall = if nt == 0 { 1.0 } else { m as f64 / nt as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            n_true: nt,
            n_detected: nd,
            count_error,
            signed_error,
            n_matched: m,
            precision,
            recall,
            f1,
        }
    }
}

/// Averages over every stored sample of every chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub n_true: usize,
    pub count_error: f64,
    pub signed_error: f64,
    /// No truth: errors are absolute counts rather than relative.
    pub count_error_absolute: bool,
    pub mean_detected: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou_threshold: f64,
}

pub fn evaluate(
    chains: &[ChainSamples],
    truth: &[ActivityInstance],
    iou_threshold: f64,
) -> Result<EvalReport> {
    if chains.is_empty() {
        return Err(Error::contract("evaluate needs at least one chain"));
    }
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::contract("iou threshold must lie in [0, 1]"));
    }
    let mut acc = [0.0; 6];
    let mut n = 0usize;
    for c in chains {
        for s in &c.samples {
            let e = SampleEval::compute(truth, &s.config.instances, iou_threshold);
            for (a, v) in acc.iter_mut().zip([
                e.count_error,
                e.signed_error,
                e.n_detected as f64,
                e.precision,
                e.recall,
                e.f1,
            ]) {
                *a += v;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::contract("chains hold no samples"));
    }
    let k = n as f64;
    Ok(EvalReport {
        n_samples: n,
        n_true: truth.len(),
        count_error: acc[0] / k,
        signed_error: acc[1] / k,
        count_error_absolute: truth.is_empty(),
        mean_detected: acc[2] / k,
        precision: acc[3] / k,
        recall: acc[4] / k,
        f1: acc[5] / k,
        iou_threshold,
    })
}
