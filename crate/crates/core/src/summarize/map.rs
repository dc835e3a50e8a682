use serde::{Deserialize, Serialize};

use super::{pooled_map, KeyframeSummary};
use crate::error::{Error, Result};
use crate::ids::ActorId;
use crate::model::factors::assign_frame;
use crate::rjmcmc::ChainSamples;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapOptions {
    /// Lattice points per radius; the candidate lattice has spacing
    /// `r / lattice_steps`.
    pub lattice_steps: u32,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { lattice_steps: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCircle {
    pub instance_id: usize,
    pub center: [f64; 2],
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub instance_id: usize,
    /// Position in the input frame list.
    pub frame_index: usize,
    pub actor: ActorId,
    pub t: f64,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub circles: Vec<MapCircle>,
    pub placements: Vec<Placement>,
    /// Keyframes no instance covers.
    pub unplaced: Vec<usize>,
}

/// Integer lattice offsets `(i, j)` with `i² + j² <= n²`, ordered by `j`
/// then `i`.
pub(crate) fn disc_lattice(n: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            if i * i + j * j <= n * n {
                out.push((i, j));
            }
        }
    }
    out
}

/// Farthest-point order over the lattice starting at the centre; ties go to
/// lattice order. Distances are compared exactly in integer units.
pub(crate) fn lattice_fps(n: i64, count: usize) -> Vec<(i64, i64)> {
    let pts = disc_lattice(n);
    let mut min_d = vec![i64::MAX; pts.len()];
    let mut out = Vec::with_capacity(count);
    let mut next = pts
        .iter()
        .position(|&p| p == (0, 0))
        .expect("centre is a lattice point");
    while out.len() < count {
        let c = pts[next];
        out.push(c);
        for (k, p) in pts.iter().enumerate() {
            let d = (p.0 - c.0).pow(2) + (p.1 - c.1).pow(2);
            min_d[k] = min_d[k].min(d);
        }
        // Once every point is used all distances are 0 and points repeat.
        next = (0..pts.len()).fold(0, |b, k| if min_d[k] > min_d[b] { k } else { b });
    }
    out
}

/// Place keyframes inside the circles of the highest-scoring sample: each
/// keyframe goes to the instance covering it, and each instance's frames
/// (in time order) take farthest-point lattice positions.
pub fn map_summary(
    summary: &KeyframeSummary,
    chains: &[ChainSamples],
    opts: &MapOptions,
) -> Result<MapSummary> {
    if opts.lattice_steps == 0 {
        return Err(Error::contract("lattice_steps must be >= 1"));
    }
    let config = pooled_map(chains)
        .ok_or_else(|| Error::contract("map summary needs at least one sample"))?;
    if config.is_empty() {
        return Err(Error::contract(
            "the highest-scoring sample has no instances",
        ));
    }
    let circles = config
        .instances
        .iter()
        .enumerate()
        .map(|(k, inst)| MapCircle {
            instance_id: k,
            center: inst.center,
            radius_m: inst.radius_m,
        })
        .collect();
    let mut groups: Vec<Vec<&super::SelectedFrame>> = vec![Vec::new(); config.len()];
    let mut unplaced = Vec::new();
    for f in &summary.frames {
        match assign_frame(config, f.actor, f.t) {
            Some(k) => groups[k].push(f),
            None => unplaced.push(f.index),
        }
    }
    let n = opts.lattice_steps as i64;
    let mut placements = Vec::new();
    for (k, group) in groups.iter().enumerate() {
        let inst = &config.instances[k];
        let h = inst.radius_m / n as f64;
        for (f, (i, j)) in group.iter().zip(lattice_fps(n, group.len())) {
            placements.push(Placement {
                instance_id: k,
                frame_index: f.index,
                actor: f.actor,
                t: f.t,
                pos: [inst.center[0] + i as f64 * h, inst.center[1] + j as f64 * h],
            });
        }
    }
    Ok(MapSummary {
        circles,
        placements,
        unplaced,
    })
}
