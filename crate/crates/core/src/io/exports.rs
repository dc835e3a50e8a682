use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atomic_write;
use super::table::{num, write_table};
use crate::data::DataBundle;
use crate::error::{Error, Result};
use crate::ids::ActorId;
use crate::model::{ActivityInstance, FaceCorrection};
use crate::posteriors::LocalizationRow;
use crate::sim::{SweepCurve, SyntheticDataset};
use crate::summarize::{KeyframeSummary, MapSummary, VideoSummary};

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn name(names: &[String], a: ActorId) -> String {
    names
        .get(a.index())
        .cloned()
        .unwrap_or_else(|| a.0.to_string())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(v)?;
    buf.push(b'\n');
    atomic_write(path, &buf)
}

pub fn write_localization(path: &Path, names: &[String], rows: &[LocalizationRow]) -> Result<()> {
    let rows: Vec<_> = rows
        .iter()
        .map(|r| {
            vec![
                name(names, r.actor),
                num(r.t),
                num(r.mean_x),
                num(r.mean_y),
                num(r.std_x),
                num(r.std_y),
                r.conditioned.to_string(),
            ]
        })
        .collect();
    let h = header(&[
        "actor",
        "t",
        "mean_x",
        "mean_y",
        "std_x",
        "std_y",
        "conditioned",
    ]);
    write_table(path, "localization", &h, &rows)
}

pub fn write_keyframes(path: &Path, names: &[String], s: &KeyframeSummary) -> Result<()> {
    let rows: Vec<_> = s
        .frames
        .iter()
        .map(|f| {
            vec![
                f.rank.to_string(),
                name(names, f.actor),
                num(f.t),
                f.votes.to_string(),
            ]
        })
        .collect();
    write_table(
        path,
        "keyframes",
        &header(&["rank", "actor", "t", "votes"]),
        &rows,
    )
}

/// One row per placement; circles without placements get empty frame
/// fields.
pub fn write_map(path: &Path, names: &[String], s: &MapSummary) -> Result<()> {
    let mut rows = Vec::new();
    for c in &s.circles {
        let circle = vec![
            c.instance_id.to_string(),
            num(c.center[0]),
            num(c.center[1]),
            num(c.radius_m),
        ];
        let mut any = false;
        for p in s
            .placements
            .iter()
            .filter(|p| p.instance_id == c.instance_id)
        {
            any = true;
            let mut r = circle.clone();
            r.extend([name(names, p.actor), num(p.t), num(p.pos[0]), num(p.pos[1])]);
            rows.push(r);
        }
        if !any {
            let mut r = circle;
            r.extend((0..4).map(|_| String::new()));
            rows.push(r);
        }
    }
    let h = header(&["instance_id", "cx", "cy", "r", "actor", "t", "px", "py"]);
    write_table(path, "map", &h, &rows)
}

/// Frames in playback order with the super node each came from.
pub fn write_video(path: &Path, data: &DataBundle, s: &VideoSummary) -> Result<()> {
    let mut rows = Vec::new();
    for (n, node) in s.nodes.iter().enumerate() {
        for &i in &node.path {
            let f = data
                .frames
                .get(i)
                .ok_or_else(|| Error::contract(format!("video frame {i} is not in the bundle")))?;
            rows.push(vec![
                (rows.len() + 1).to_string(),
                name(&data.actor_names, f.actor),
                num(f.t),
                n.to_string(),
            ]);
        }
    }
    write_table(
        path,
        "video",
        &header(&["rank", "actor", "t", "node"]),
        &rows,
    )
}

pub fn write_face_corrections(path: &Path, names: &[String], c: &[FaceCorrection]) -> Result<()> {
    let rows: Vec<_> = c
        .iter()
        .map(|x| {
            vec![
                name(names, x.observer),
                num(x.t),
                x.detected.map(|a| name(names, a)).unwrap_or_default(),
                name(names, x.corrected),
                num(x.posterior[x.corrected.index()]),
            ]
        })
        .collect();
    let h = header(&[
        "observer",
        "t",
        "detected_id",
        "corrected_id",
        "p_corrected",
    ]);
    write_table(path, "faces_corrected", &h, &rows)
}

pub fn write_curve(path: &Path, curve: &SweepCurve) -> Result<()> {
    let rows: Vec<_> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                num(p.place_std_m),
                num(p.mean),
                num(p.std),
                num(p.signed_mean),
                num(p.f1_mean),
                p.n_ok.to_string(),
                p.n_failed.to_string(),
            ]
        })
        .collect();
    let h = header(&[
        "place_std_m",
        "mean",
        "std",
        "signed_mean",
        "f1_mean",
        "n_ok",
        "n_failed",
    ]);
    write_table(path, "curve", &h, &rows)
}

/// Any evaluation record, as pretty JSON.
pub fn write_eval<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    write_json(path, report)
}

/// True identity of one face detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceTruth {
    pub observer: ActorId,
    pub t: f64,
    pub true_id: ActorId,
}

/// Ground truth of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub format: String,
    pub version: u32,
    pub instances: Vec<ActivityInstance>,
    pub faces: Vec<FaceTruth>,
}

impl TruthFile {
    pub fn of(ds: &SyntheticDataset) -> Self {
        Self {
            format: "coactivity-truth".into(),
            version: 1,
            instances: ds.truth.clone(),
            faces: ds
                .data
                .faces
                .iter()
                .zip(&ds.face_truth)
                .map(|(d, &true_id)| FaceTruth {
                    observer: d.observer,
                    t: d.t,
                    true_id,
                })
                .collect(),
        }
    }
}

pub fn write_truth(path: &Path, truth: &TruthFile) -> Result<()> {
    write_json(path, truth)
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(path, 0, e.to_string()))?;
    let t: TruthFile =
        serde_json::from_str(&text).map_err(|e| Error::data(path, e.line(), e.to_string()))?;
    if t.format != "coactivity-truth" || t.version != 1 {
        return Err(Error::data(path, 1, "not a version 1 truth file"));
    }
    for (k, inst) in t.instances.iter().enumerate() {
        inst.validate()
            .map_err(|e| Error::data(path, 0, format!("instance {k}: {e}")))?;
    }
    Ok(t)
}
