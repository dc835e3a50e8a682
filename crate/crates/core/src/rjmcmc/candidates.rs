//! Data-driven birth candidates: stretches of time during which groups of
//! actors' posterior-mean trajectories stay close together.

use serde::{Deserialize, Serialize};

use crate::gp::GpPosterior;
use crate::ids::ActorId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Sorted, distinct.
    pub participants: Vec<ActorId>,
    pub t_start: f64,
    pub t_end: f64,
    pub center: [f64; 2],
    /// Std of the proposed start around `mid - span / 2`.
    pub start_std_s: f64,
}

impl Candidate {
    pub fn mid(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Pairs whose means stay within `threshold_m` of each other and of the
/// run's running center for at least `min_run_s`, plus, for each such run,
/// the larger group of everyone who is near the pair's center for at least
/// half of it. A pair walking together is cut into several short runs.
pub fn find_candidates(
    posteriors: &[GpPosterior],
    threshold_m: f64,
    min_run_s: f64,
) -> Vec<Candidate> {
    let Some(first) = posteriors.first() else {
        return Vec::new();
    };
    let grid = first.grid;
    let n = grid.n_points;
    let mut out: Vec<Candidate> = Vec::new();
    let push = |out: &mut Vec<Candidate>, c: Candidate| {
        let dup = out.iter().any(|o| {
            o.participants == c.participants
                && (o.t_start - c.t_start).abs() < 1e-9
                && (o.t_end - c.t_end).abs() < 1e-9
        });
        if !dup {
            out.push(c);
        }
    };
    for a in 0..posteriors.len() {
        for b in a + 1..posteriors.len() {
            let (ma, mb) = (&posteriors[a].mean, &posteriors[b].mean);
            let mut i = 0;
            while i < n {
                if dist(ma[i], mb[i]) >= threshold_m {
                    i += 1;
                    continue;
                }
                let lo = i;
                let mut sum = [0.0; 2];
                while i < n && dist(ma[i], mb[i]) < threshold_m {
                    let mid = [0.5 * (ma[i][0] + mb[i][0]), 0.5 * (ma[i][1] + mb[i][1])];
                    let k = (i - lo) as f64;
                    if i > lo && dist(mid, [sum[0] / k, sum[1] / k]) >= threshold_m {
                        break;
                    }
                    sum[0] += mid[0];
                    sum[1] += mid[1];
                    i += 1;
                }
                let hi = i - 1;
                let (t0, t1) = (grid.point(lo), grid.point(hi));
                if t1 - t0 < min_run_s {
                    continue;
                }
                let k = (hi - lo + 1) as f64;
                let mut c = [0.0; 2];
                for j in lo..=hi {
                    c[0] += 0.5 * (ma[j][0] + mb[j][0]) / k;
                    c[1] += 0.5 * (ma[j][1] + mb[j][1]) / k;
                }
                let start_std_s = (0.25 * (t1 - t0)).max(10.0);
                let mut pair = vec![posteriors[a].actors[0], posteriors[b].actors[0]];
                pair.sort();
                push(
                    &mut out,
                    Candidate {
                        participants: pair.clone(),
                        t_start: t0,
                        t_end: t1,
                        center: c,
                        start_std_s,
                    },
                );

                let mut group = Vec::new();
                let mut gc = [0.0; 2];
                for p in posteriors {
                    let near = (lo..=hi)
                        .filter(|&j| dist(p.mean[j], c) < threshold_m)
                        .count();
                    if 2 * near > hi - lo {
                        group.push(p.actors[0]);
                        for j in lo..=hi {
                            gc[0] += p.mean[j][0];
                            gc[1] += p.mean[j][1];
                        }
                    }
                }
                if group.len() > 2 {
                    let m = group.len() as f64 * k;
                    group.sort();
                    push(
                        &mut out,
                        Candidate {
                            participants: group,
                            t_start: t0,
                            t_end: t1,
                            center: [gc[0] / m, gc[1] / m],
                            start_std_s,
                        },
                    );
                }
            }
        }
    }
    out
}
