use super::Configuration;
use crate::data::FaceDetection;
use crate::error::{Error, Result};

/// Identity posterior of one detection, averaged over configuration
/// samples.
///
/// Within a sample, every instance covering the detection's observer and
/// time contributes a prior that is uniform over its participants and `eps`
/// for anyone else; these multiply and are combined with the classifier
/// log-scores by Bayes' rule.
pub fn face_posterior<'a>(
    det: &FaceDetection,
    samples: impl IntoIterator<Item = &'a Configuration>,
    eps: f64,
) -> Result<Vec<f64>> {
    let scores = det
        .scores
        .as_ref()
        .ok_or_else(|| Error::contract("face detection has no score vector"))?;
    if !(eps > 0.0) {
        return Err(Error::contract("eps must be > 0"));
    }
    let n = scores.len();
    let mut acc = vec![0.0; n];
    let mut count = 0usize;
    let mut log_post = vec![0.0; n];
    for config in samples {
        count += 1;
        log_post.copy_from_slice(scores);
        for inst in &config.instances {
            if !inst.covers(det.observer, det.t) {
                continue;
            }
            let inside = -(inst.participants.len() as f64).ln();
            let outside = eps.ln();
            for (a, lp) in log_post.iter_mut().enumerate() {
                *lp += if inst.has(crate::ActorId(a as u32)) {
                    inside
                } else {
                    outside
                };
            }
        }
        let m = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = log_post.iter().map(|v| (v - m).exp()).sum();
        for (o, v) in acc.iter_mut().zip(&log_post) {
            *o += (v - m).exp() / z;
        }
    }
    if count == 0 {
        return Err(Error::contract("no configuration samples"));
    }
    acc.iter_mut().for_each(|v| *v /= count as f64);
    Ok(acc)
}

/// Identity posterior and its argmax for one detection.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FaceCorrection {
    pub observer: crate::ActorId,
    pub t: f64,
    pub detected: Option<crate::ActorId>,
    pub corrected: crate::ActorId,
    pub posterior: Vec<f64>,
}

/// Posterior-corrected identities of every scored detection; unscored ones
/// are skipped. Ties in the argmax go to the lowest id.
pub fn correct_faces(
    faces: &[FaceDetection],
    samples: &[&Configuration],
    eps: f64,
) -> Result<Vec<FaceCorrection>> {
    let mut out = Vec::new();
    for d in faces.iter().filter(|d| d.scores.is_some()) {
        let p = face_posterior(d, samples.iter().copied(), eps)?;
        let best = (0..p.len()).fold(0, |b, k| if p[k] > p[b] { k } else { b });
        out.push(FaceCorrection {
            observer: d.observer,
            t: d.t,
            detected: d.detected,
            corrected: crate::ActorId(best as u32),
            posterior: p,
        });
    }
    Ok(out)
}
