#![allow(dead_code)]

pub mod summ;

use std::collections::HashMap;

use coactivity::gp::{GpHyperParams, GpsObservation, TimeGrid};
use coactivity::model::{
    config_logprob, ActivityInstance, ActivityType, Configuration, ModelParams, OverlapMatrix,
};
use coactivity::par::Execution;
use coactivity::rjmcmc::{Inference, LatticeSpec, MoveWeights, SamplerConfig};
use coactivity::{ActorId, TypeIdx};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn mean_diff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()))
        .fold(0.0, f64::max)
}

pub fn random_obs(
    rng: &mut impl Rng,
    actor: u32,
    n: usize,
    t0: f64,
    t1: f64,
) -> Vec<GpsObservation> {
    (0..n)
        .map(|_| GpsObservation {
            actor: ActorId(actor),
            t: rng.random_range(t0..t1),
            pos: [
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
            ],
            noise_std: rng.random_range(5.0..40.0),
        })
        .collect()
}

/// Posterior on the grid by conditioning the dense joint (obs + grid)
/// Gaussian through a Schur complement. LU solve with one step of
/// iterative refinement; the covariance is symmetrised.
pub fn schur_gp(
    obs: &[GpsObservation],
    hyper: &GpHyperParams,
    grid: &TimeGrid,
) -> (Vec<[f64; 2]>, DMatrix<f64>) {
    let ts = grid.points();
    let all: Vec<f64> = obs.iter().map(|o| o.t).chain(ts.iter().copied()).collect();
    let m = obs.len();
    let n = ts.len();
    let mut joint = DMatrix::from_fn(m + n, m + n, |i, j| hyper.kernel_value(all[i] - all[j]));
    for (i, o) in obs.iter().enumerate() {
        joint[(i, i)] += o.noise_std * o.noise_std;
    }
    let k_oo = joint.view((0, 0), (m, m)).into_owned();
    let k_og = joint.view((0, m), (m, n)).into_owned();
    let k_gg = joint.view((m, m), (n, n)).into_owned();
    let lu = k_oo.clone().lu();
    let solve = |b: &DMatrix<f64>| {
        let x = lu.solve(b).expect("invertible");
        let r = b - &k_oo * &x;
        x + lu.solve(&r).expect("invertible")
    };
    let mut cov = &k_gg - k_og.transpose() * solve(&k_og);
    cov = (&cov + cov.transpose()) * 0.5;
    let mut mean = vec![[0.0; 2]; n];
    for c in 0..2 {
        let r = DMatrix::from_iterator(m, 1, obs.iter().map(|o| o.pos[c] - hyper.mean_m[c]));
        let s = k_og.transpose() * solve(&r);
        for i in 0..n {
            mean[i][c] = hyper.mean_m[c] + s[(i, 0)];
        }
    }
    (mean, cov)
}

/// Condition a stacked Gaussian on `A x = 0` with noise variance `noise_var`.
/// Dense LU solve with one step of iterative refinement; the covariance is
/// symmetrised.
pub fn schur_condition(
    mean: &[[f64; 2]],
    cov: &DMatrix<f64>,
    a: &DMatrix<f64>,
    noise_var: f64,
) -> (Vec<[f64; 2]>, DMatrix<f64>) {
    let m = a.nrows();
    let s = a * cov * a.transpose() + DMatrix::identity(m, m) * noise_var;
    let lu = s.clone().lu();
    let solve = |b: &DMatrix<f64>| {
        let x = lu.solve(b).expect("invertible");
        let r = b - &s * &x;
        x + lu.solve(&r).expect("invertible")
    };
    let b = a * cov;
    let x = solve(&b);
    let mut new_cov = cov - b.transpose() * x;
    new_cov = (&new_cov + new_cov.transpose()) * 0.5;
    let mut out = mean.to_vec();
    for c in 0..2 {
        let mu = DMatrix::from_iterator(mean.len(), 1, mean.iter().map(|p| p[c]));
        let shift = b.transpose() * solve(&(a * &mu));
        for i in 0..mean.len() {
            out[i][c] -= shift[(i, 0)];
        }
    }
    (out, new_cov)
}

/// Piecewise-linear path through `(t, pos)` waypoints, sampled every `dt`
/// seconds with isotropic Gaussian noise.
pub fn waypoint_obs(
    rng: &mut impl Rng,
    actor: u32,
    waypoints: &[(f64, [f64; 2])],
    dt: f64,
    noise: f64,
) -> Vec<GpsObservation> {
    use rand_distr::{Distribution, Normal};
    let nd = Normal::new(0.0, noise).unwrap();
    let (t0, t1) = (waypoints[0].0, waypoints[waypoints.len() - 1].0);
    let mut out = Vec::new();
    let mut t = t0;
    while t <= t1 + 1e-9 {
        let k = waypoints
            .iter()
            .rposition(|w| w.0 <= t)
            .unwrap()
            .min(waypoints.len() - 2);
        let (ta, a) = waypoints[k];
        let (tb, b) = waypoints[k + 1];
        let f = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.push(GpsObservation {
            actor: ActorId(actor),
            t,
            pos: [
                a[0] + f * (b[0] - a[0]) + nd.sample(rng),
                a[1] + f * (b[1] - a[1]) + nd.sample(rng),
            ],
            noise_std: noise,
        });
        t += dt;
    }
    out
}

pub fn bundle(n_actors: usize, gps: Vec<GpsObservation>) -> coactivity::data::DataBundle {
    let mut b = coactivity::data::DataBundle {
        actor_names: (0..n_actors).map(|i| format!("a{i}")).collect(),
        gps,
        ..Default::default()
    };
    b.sort();
    b
}

pub fn meeting_type(
    span_median_s: f64,
    span_log_std: f64,
    radius_median_m: f64,
) -> coactivity::model::ActivityType {
    coactivity::model::ActivityType {
        label: "meeting".into(),
        span_median_s,
        span_log_std,
        radius_median_m,
        radius_log_std: 0.2,
        participants_median: 2.0,
        participants_log_std: 0.3,
        feature_prior: Vec::new(),
        face_rate_participant_per_min: 2.0,
        face_rate_nonparticipant_per_min: 0.1,
        excursion_rate_per_s: 1.0,
    }
}

/// Two actors walking in from opposite sides, standing together at the
/// origin during `[300, 600]` and leaving again.
pub fn colocation(rng: &mut impl Rng, noise: f64) -> coactivity::data::DataBundle {
    let a = waypoint_obs(
        rng,
        0,
        &[
            (0.0, [-600.0, 0.0]),
            (300.0, [0.0, 0.0]),
            (600.0, [0.0, 0.0]),
            (900.0, [600.0, 0.0]),
        ],
        10.0,
        noise,
    );
    let b = waypoint_obs(
        rng,
        1,
        &[
            (0.0, [0.0, -600.0]),
            (300.0, [0.0, 0.0]),
            (600.0, [0.0, 0.0]),
            (900.0, [0.0, 600.0]),
        ],
        10.0,
        noise,
    );
    bundle(2, [a, b].concat())
}

/// Two actors meeting at the origin during `[100, 300]` and again at
/// `(400, 0)` during `[500, 700]`.
pub fn two_meetings(rng: &mut impl Rng, noise: f64) -> coactivity::data::DataBundle {
    let a = waypoint_obs(
        rng,
        0,
        &[
            (0.0, [-300.0, 0.0]),
            (100.0, [0.0, 0.0]),
            (300.0, [0.0, 0.0]),
            (400.0, [200.0, 200.0]),
            (500.0, [400.0, 0.0]),
            (700.0, [400.0, 0.0]),
            (800.0, [700.0, 0.0]),
        ],
        10.0,
        noise,
    );
    let b = waypoint_obs(
        rng,
        1,
        &[
            (0.0, [0.0, -300.0]),
            (100.0, [0.0, 0.0]),
            (300.0, [0.0, 0.0]),
            (500.0, [400.0, 0.0]),
            (700.0, [400.0, 0.0]),
            (800.0, [400.0, 300.0]),
        ],
        10.0,
        noise,
    );
    bundle(2, [a, b].concat())
}

/// All sets of mutually compatible lattice instances with at most `cap`
/// members, as sorted index lists.
fn enumerate(all: &[ActivityInstance], overlap: &OverlapMatrix, cap: usize) -> Vec<Vec<usize>> {
    fn rec(
        all: &[ActivityInstance],
        ov: &OverlapMatrix,
        cap: usize,
        from: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        out.push(cur.clone());
        if cur.len() == cap {
            return;
        }
        for k in from..all.len() {
            if cur.iter().all(|&j| ov.compatible(&all[j], &all[k])) {
                cur.push(k);
                rec(all, ov, cap, k + 1, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(all, overlap, cap, 0, &mut Vec::new(), &mut out);
    out
}

pub fn walk_hyper() -> GpHyperParams {
    GpHyperParams {
        length_scale_s: 60.0,
        signal_std_m: 400.0,
        ..Default::default()
    }
}

/// Total variation between one lattice-mode chain and exhaustive
/// enumeration of the configuration posterior.
pub fn lattice_tv(seed: u64, n_iters: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let data = two_meetings(&mut rng, 15.0);
    let types: Vec<ActivityType> = vec![ActivityType {
        excursion_rate_per_s: 0.01,
        ..meeting_type(180.0, 0.5, 30.0)
    }];
    let overlap = OverlapMatrix::disjoint_within_type(1);
    let params = ModelParams {
        c_u: 0.2,
        ..Default::default()
    };
    let lattice = LatticeSpec {
        centers: vec![[0.0, 0.0], [400.0, 0.0]],
        spans_s: vec![150.0, 200.0],
        starts_s: vec![100.0, 150.0, 500.0, 550.0],
        radius_m: 40.0,
        type_id: TypeIdx(0),
        participants: vec![ActorId(0), ActorId(1)],
        max_instances: 2,
    };
    let mut weights = MoveWeights::birth_death_only();
    weights.center = 1.0;
    weights.span = 1.0;
    weights.start_time = 1.0;
    let sampler = SamplerConfig {
        n_iters,
        burn_in: 1000,
        refresh_period: 0,
        n_draws: 10,
        grid_points: 100,
        weights,
        lattice: Some(lattice.clone()),
        ..Default::default()
    };
    let inf = Inference::new(
        &data,
        &types,
        &overlap,
        &params,
        &walk_hyper(),
        sampler,
        Execution::Sequential,
    )
    .unwrap();
    let all = lattice.instances();
    let ens = inf.ensemble(seed, 0).unwrap();
    let sets = enumerate(&all, &overlap, lattice.max_instances);
    let scores: Vec<f64> = sets
        .iter()
        .map(|s| {
            let c = Configuration {
                instances: s.iter().map(|&k| all[k].clone()).collect(),
            };
            config_logprob(&c, &inf.ctx, &ens).unwrap()
        })
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    let exact: HashMap<Vec<usize>, f64> = sets
        .iter()
        .cloned()
        .zip(scores.iter().map(|s| (s - m).exp() / z))
        .collect();

    let out = inf.run(seed).unwrap();
    let mut emp: HashMap<Vec<usize>, f64> = HashMap::new();
    let w = 1.0 / out.samples.len() as f64;
    for c in out.configs() {
        let mut key: Vec<usize> = c
            .instances
            .iter()
            .map(|i| all.iter().position(|a| a == i).unwrap())
            .collect();
        key.sort();
        *emp.entry(key).or_default() += w;
    }
    let mut tv = 0.0;
    for (k, p) in &exact {
        tv += (p - emp.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in &emp {
        if !exact.contains_key(k) {
            tv += q;
        }
    }
    0.5 * tv
}

/// Owned inputs of a model evaluation with hand-made trajectory draws.
pub struct World {
    pub data: coactivity::data::DataBundle,
    pub types: Vec<ActivityType>,
    pub overlap: OverlapMatrix,
    pub params: ModelParams,
    pub ens: coactivity::gp::TrajectoryEnsemble,
}

impl World {
    pub fn ctx(&self) -> coactivity::model::ModelContext<'_> {
        coactivity::model::ModelContext::new(&self.data, &self.types, &self.overlap, &self.params)
            .unwrap()
    }
}

/// Random walks as draws, GPS times, frames and face detections over
/// `[0, 600]` s, two types with 3-dimensional feature priors.
pub fn random_world(rng: &mut impl Rng, n_actors: usize, n_points: usize, n_draws: usize) -> World {
    use coactivity::data::{FaceDetection, FrameRecord};
    use coactivity::model::FeaturePrior;
    use rand_distr::{Distribution, StandardNormal};
    let grid = TimeGrid::new(0.0, 600.0, n_points).unwrap();
    let mut draws = Vec::new();
    for _ in 0..n_draws {
        let mut d = Vec::new();
        for _ in 0..n_actors {
            let mut p = [rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0)];
            for _ in 0..n_points {
                d.push(p);
                let z: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
                p = [p[0] + 12.0 * z[0], p[1] + 12.0 * z[1]];
            }
        }
        draws.push(d);
    }
    let ens = coactivity::gp::TrajectoryEnsemble {
        actors: (0..n_actors as u32).map(ActorId).collect(),
        grid,
        seed: 0,
        draws,
        log_density: vec![0.0; n_draws],
    };
    let mut gps = Vec::new();
    let mut frames = Vec::new();
    let mut faces = Vec::new();
    for a in 0..n_actors as u32 {
        for _ in 0..15 {
            gps.push(GpsObservation {
                actor: ActorId(a),
                t: rng.random_range(0.0..600.0),
                pos: [0.0, 0.0],
                noise_std: 10.0,
            });
        }
        for _ in 0..8 {
            frames.push(FrameRecord {
                actor: ActorId(a),
                t: rng.random_range(0.0..600.0),
                kp_count: rng.random_range(0..500),
                features: (0..3).map(|_| StandardNormal.sample(rng)).collect(),
            });
        }
        for _ in 0..10 {
            faces.push(FaceDetection {
                observer: ActorId(a),
                t: rng.random_range(0.0..600.0),
                detected: if rng.random_bool(0.8) {
                    Some(ActorId(rng.random_range(0..n_actors as u32)))
                } else {
                    None
                },
                scores: Some((0..n_actors).map(|_| StandardNormal.sample(rng)).collect()),
            });
        }
    }
    let mut data = coactivity::data::DataBundle {
        actor_names: (0..n_actors).map(|i| format!("a{i}")).collect(),
        gps,
        frames,
        faces,
        ..Default::default()
    };
    data.sort();
    let types = (0..2)
        .map(|k| ActivityType {
            label: format!("t{k}"),
            span_median_s: rng.random_range(60.0..300.0),
            span_log_std: rng.random_range(0.1..1.0),
            radius_median_m: rng.random_range(10.0..60.0),
            radius_log_std: rng.random_range(0.1..0.8),
            participants_median: rng.random_range(2.0..4.0),
            participants_log_std: rng.random_range(0.2..0.8),
            feature_prior: (0..3)
                .map(|_| FeaturePrior {
                    mean: rng.random_range(-1.0..1.0),
                    var: rng.random_range(0.3..2.0),
                })
                .collect(),
            face_rate_participant_per_min: rng.random_range(1.0..3.0),
            face_rate_nonparticipant_per_min: rng.random_range(0.05..0.5),
            excursion_rate_per_s: rng.random_range(0.01..0.2),
        })
        .collect();
    World {
        data,
        types,
        overlap: OverlapMatrix::permissive(2),
        params: ModelParams {
            c_u: rng.random_range(0.1..1.0),
            ..Default::default()
        },
        ens,
    }
}

pub fn random_instance(rng: &mut impl Rng, w: &World) -> ActivityInstance {
    let n = w.data.n_actors();
    let k = rng.random_range(2..=n);
    let participants = rand::seq::index::sample(rng, n, k)
        .into_iter()
        .map(|i| ActorId(i as u32))
        .collect();
    let start = rng.random_range(0.0..500.0);
    ActivityInstance::new(
        TypeIdx(rng.random_range(0..w.types.len() as u32)),
        [
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
        ],
        rng.random_range(10.0..80.0),
        start,
        rng.random_range(10.0..(600.0 - start)),
        participants,
    )
}

pub fn random_config(rng: &mut impl Rng, w: &World, max: usize) -> Configuration {
    let n = rng.random_range(0..=max);
    Configuration {
        instances: (0..n).map(|_| random_instance(rng, w)).collect(),
    }
}

/// Bayes rule with a uniform-over-participants prior and `eps` elsewhere.
pub fn bayes_face_oracle(scores: &[f64], participants: &[usize], eps: f64) -> Vec<f64> {
    let p = participants.len() as f64;
    let un: Vec<f64> = scores
        .iter()
        .enumerate()
        .map(|(a, s)| {
            s.exp()
                * if participants.contains(&a) {
                    1.0 / p
                } else {
                    eps
                }
        })
        .collect();
    let z: f64 = un.iter().sum();
    un.iter().map(|u| u / z).collect()
}
