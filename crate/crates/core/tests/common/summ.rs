//! Generators and brute-force oracles for summarization.

use coactivity::data::{DataBundle, FaceDetection, FrameMatch, FrameRecord};
use coactivity::gp::{build_gp, GpHyperParams, GpPosterior, GpsObservation, TimeGrid};
use coactivity::model::{ActivityInstance, Configuration};
use coactivity::rjmcmc::{ChainSample, ChainSamples, MoveStats};
use coactivity::summarize::{Constraints, Disc, FrameDistanceWeights, TrellisContext};
use coactivity::{ActorId, TypeIdx};
use rand::Rng;

pub fn chain_scored(configs: Vec<(f64, Vec<ActivityInstance>)>) -> ChainSamples {
    ChainSamples {
        seed: 0,
        burn_in: 0,
        n_iters: configs.len(),
        samples: configs
            .into_iter()
            .enumerate()
            .map(|(i, (s, v))| ChainSample {
                iteration: i,
                log_score: s,
                config: Configuration { instances: v },
            })
            .collect(),
        stats: MoveStats::default(),
    }
}

pub fn chain_of(configs: Vec<Vec<ActivityInstance>>) -> ChainSamples {
    chain_scored(configs.into_iter().map(|v| (0.0, v)).collect())
}

pub fn inst(actors: &[u32], start: f64, span: f64) -> ActivityInstance {
    ActivityInstance::new(
        TypeIdx(0),
        [0.0, 0.0],
        30.0,
        start,
        span,
        actors.iter().map(|&a| ActorId(a)).collect(),
    )
}

pub fn frame(actor: u32, t: f64, kp: u32, features: Vec<f64>) -> FrameRecord {
    FrameRecord {
        actor: ActorId(actor),
        t,
        kp_count: kp,
        features,
    }
}

pub fn random_frames(
    rng: &mut impl Rng,
    n: usize,
    n_actors: u32,
    t_max: f64,
    dim: usize,
) -> Vec<FrameRecord> {
    (0..n)
        .map(|_| {
            frame(
                rng.random_range(0..n_actors),
                // Coarse times so ties occur.
                (rng.random_range(0.0..t_max) / 10.0).round() * 10.0,
                rng.random_range(0..100),
                (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            )
        })
        .collect()
}

pub fn random_instance(rng: &mut impl Rng, n_actors: u32, t_max: f64) -> ActivityInstance {
    let k = rng.random_range(2..=n_actors.max(2));
    let mut actors: Vec<u32> = (0..n_actors).collect();
    for i in 0..actors.len() {
        let j = rng.random_range(i..actors.len());
        actors.swap(i, j);
    }
    actors.truncate(k as usize);
    let mut x = inst(
        &actors,
        rng.random_range(-50.0..t_max),
        rng.random_range(20.0..t_max / 2.0),
    );
    x.center = [
        rng.random_range(-500.0..500.0),
        rng.random_range(-500.0..500.0),
    ];
    x.radius_m = rng.random_range(10.0..80.0);
    x
}

pub fn random_chains(
    rng: &mut impl Rng,
    n_chains: usize,
    n_samples: usize,
    n_actors: u32,
    t_max: f64,
) -> Vec<ChainSamples> {
    (0..n_chains)
        .map(|_| {
            chain_scored(
                (0..n_samples)
                    .map(|_| {
                        let n = rng.random_range(0..4);
                        let v = (0..n)
                            .map(|_| random_instance(rng, n_actors, t_max))
                            .collect();
                        (rng.random_range(-100.0..0.0), v)
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Nested-loop recount of covering (sample, instance) pairs.
pub fn oracle_votes(frames: &[FrameRecord], chains: &[ChainSamples]) -> Vec<u32> {
    let mut v = vec![0; frames.len()];
    for (i, f) in frames.iter().enumerate() {
        for c in chains {
            for s in &c.samples {
                for x in &s.config.instances {
                    if x.start_s <= f.t
                        && f.t <= x.start_s + x.span_s
                        && x.participants.contains(&f.actor)
                    {
                        v[i] += 1;
                    }
                }
            }
        }
    }
    v
}

pub fn oracle_distance(
    frames: &[FrameRecord],
    chains: &[ChainSamples],
    w: &FrameDistanceWeights,
    i: usize,
    j: usize,
) -> f64 {
    let (a, b) = (&frames[i], &frames[j]);
    let covers = |x: &ActivityInstance, f: &FrameRecord| {
        x.start_s <= f.t && f.t <= x.start_s + x.span_s && x.participants.contains(&f.actor)
    };
    let (mut pairs, mut diff) = (0usize, 0usize);
    for c in chains {
        for s in &c.samples {
            for x in &s.config.instances {
                pairs += 1;
                if covers(x, a) != covers(x, b) {
                    diff += 1;
                }
            }
        }
    }
    let ac = if pairs == 0 {
        0.0
    } else {
        diff as f64 / pairs as f64
    };
    let feat: f64 = a
        .features
        .iter()
        .zip(&b.features)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    w.w_ac * ac
        + w.w_feat * feat / w.feat_scale
        + w.w_time * (a.t - b.t).abs() / w.time_scale_s
        + w.w_id * if a.actor == b.actor { 0.0 } else { 1.0 }
}

/// Whether frame `a` precedes `b` in the tie-break order.
fn earlier(frames: &[FrameRecord], a: usize, b: usize) -> bool {
    (frames[a].t, frames[a].actor, a) < (frames[b].t, frames[b].actor, b)
}

/// Pick order by recomputing every min-distance from scratch at each step.
pub fn oracle_fps(
    frames: &[FrameRecord],
    chains: &[ChainSamples],
    w: &FrameDistanceWeights,
    k: usize,
    vote_floor: f64,
) -> Vec<usize> {
    let votes = oracle_votes(frames, chains);
    let max = *votes.iter().max().unwrap();
    let mut pool: Vec<usize> = (0..frames.len())
        .filter(|&i| votes[i] as f64 >= vote_floor * max as f64)
        .collect();
    if pool.is_empty() {
        pool = (0..frames.len()).collect();
    }
    let mut seed = pool[0];
    for &i in &pool {
        if votes[i] > votes[seed] || (votes[i] == votes[seed] && earlier(frames, i, seed)) {
            seed = i;
        }
    }
    let mut picked = vec![seed];
    while picked.len() < k.min(pool.len()) {
        let mut best: Option<(usize, f64)> = None;
        for &i in pool.iter().filter(|i| !picked.contains(i)) {
            let m = picked
                .iter()
                .map(|&p| oracle_distance(frames, chains, w, p, i))
                .fold(f64::INFINITY, f64::min);
            best = match best {
                Some((b, bm)) if bm > m || (bm == m && earlier(frames, b, i)) => Some((b, bm)),
                _ => Some((i, m)),
            };
        }
        picked.push(best.unwrap().0);
    }
    picked
}

/// Lattice offsets inside the unit-`n` disc, brute force farthest-point
/// order from the centre with ties to the smallest `(j, i)`.
pub fn oracle_lattice_fps(n: i64, count: usize) -> Vec<(i64, i64)> {
    let mut pts = vec![];
    for j in -n..=n {
        for i in -n..=n {
            if i * i + j * j <= n * n {
                pts.push((i, j));
            }
        }
    }
    let mut out = vec![(0, 0)];
    while out.len() < count {
        let score = |p: &(i64, i64)| {
            out.iter()
                .map(|q: &(i64, i64)| (p.0 - q.0).pow(2) + (p.1 - q.1).pow(2))
                .min()
                .unwrap()
        };
        let best = pts
            .iter()
            .copied()
            .max_by(|a, b| score(a).cmp(&score(b)).then((b.1, b.0).cmp(&(a.1, a.0))))
            .unwrap();
        out.push(best);
    }
    out
}

/// Small multi-actor world for the video trellis: straight-line walks,
/// frames every `dt`, some faces and keypoint matches.
pub struct VideoWorld {
    pub data: DataBundle,
    pub posteriors: Vec<GpPosterior>,
    pub chains: Vec<ChainSamples>,
}

pub fn video_world(rng: &mut impl Rng, n_actors: u32, n_frames: usize, dt: f64) -> VideoWorld {
    let t_max = n_frames as f64 * dt;
    let mut gps = vec![];
    let mut frames = vec![];
    for a in 0..n_actors {
        let p0 = [
            rng.random_range(-300.0..300.0),
            rng.random_range(-300.0..300.0),
        ];
        let v = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        for k in 0..=(t_max / 20.0) as usize {
            let t = k as f64 * 20.0;
            gps.push(GpsObservation {
                actor: ActorId(a),
                t,
                pos: [p0[0] + v[0] * t, p0[1] + v[1] * t],
                noise_std: 5.0,
            });
        }
        for k in 0..n_frames {
            let t = k as f64 * dt + rng.random_range(0.0..dt / 2.0);
            frames.push(frame(
                a,
                (t * 10.0).round() / 10.0,
                rng.random_range(0..50),
                vec![0.0],
            ));
        }
    }
    let mut faces = vec![];
    for f in &frames {
        if rng.random_bool(0.4) {
            faces.push(FaceDetection {
                observer: f.actor,
                t: f.t,
                detected: Some(ActorId(rng.random_range(0..n_actors))),
                scores: None,
            });
        }
    }
    let mut matches = vec![];
    for i in 0..frames.len() {
        for j in 0..frames.len() {
            if i < j && rng.random_bool(0.2) {
                matches.push(FrameMatch {
                    actor_i: frames[i].actor,
                    t_i: frames[i].t,
                    actor_j: frames[j].actor,
                    t_j: frames[j].t,
                    matches: rng.random_range(0..60),
                });
            }
        }
    }
    let mut data = DataBundle {
        actor_names: (0..n_actors).map(|i| format!("a{i}")).collect(),
        gps,
        frames,
        faces,
        matches,
        origin: None,
    };
    data.sort();
    let hyper = GpHyperParams {
        length_scale_s: 200.0,
        signal_std_m: 500.0,
        ..GpHyperParams::default()
    };
    let grid = TimeGrid::new(0.0, t_max, 40).unwrap();
    let posteriors = (0..n_actors)
        .map(|a| build_gp(&data.gps_of(ActorId(a)), &hyper, grid).unwrap())
        .collect();
    let chains = random_chains(rng, 2, 5, n_actors, t_max);
    VideoWorld {
        data,
        posteriors,
        chains,
    }
}

pub fn random_constraints(rng: &mut impl Rng, t_max: f64) -> Constraints {
    let mut c = Constraints::default();
    if rng.random_bool(0.5) {
        let a = rng.random_range(0.0..t_max / 2.0);
        c.t_begin = Some(a);
        c.t_end = Some(a + rng.random_range(0.0..t_max));
    }
    for _ in 0..rng.random_range(0..3) {
        let d = Disc {
            center: [
                rng.random_range(-400.0..400.0),
                rng.random_range(-400.0..400.0),
            ],
            radius_m: rng.random_range(50.0..400.0),
        };
        if rng.random_bool(0.5) {
            c.permitted.push(d);
        } else {
            c.prohibited.push(d);
        }
    }
    if rng.random_bool(0.5) {
        c.max_jump_s = Some(rng.random_range(5.0..60.0));
    }
    c.min_run = rng.random_range(1..4);
    if rng.random_bool(0.6) {
        c.max_run = Some(rng.random_range(c.min_run..6));
    }
    c
}

fn interp_mean(p: &GpPosterior, t: f64) -> [f64; 2] {
    let pts = p.grid.points();
    let k = pts
        .iter()
        .rposition(|&g| g <= t)
        .unwrap_or(0)
        .min(pts.len() - 2);
    let u = ((t - pts[k]) / (pts[k + 1] - pts[k])).clamp(0.0, 1.0);
    let (a, b) = (p.mean[k], p.mean[k + 1]);
    [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
}

/// Count of constraint breaches, written independently of the library's
/// validator. The last run is exempt from the minimum.
pub fn oracle_violations(world: &VideoWorld, c: &Constraints, seq: &[usize]) -> usize {
    let fr = &world.data.frames;
    let mut bad = 0;
    for (k, &i) in seq.iter().enumerate() {
        let f = &fr[i];
        if seq[..k].contains(&i) {
            bad += 1;
        }
        if c.t_begin.is_some_and(|b| f.t < b) || c.t_end.is_some_and(|e| f.t > e) {
            bad += 1;
        }
        let p = interp_mean(&world.posteriors[f.actor.index()], f.t);
        let inside = |d: &Disc| {
            ((p[0] - d.center[0]).powi(2) + (p[1] - d.center[1]).powi(2)).sqrt() <= d.radius_m
        };
        if (!c.permitted.is_empty() && !c.permitted.iter().any(inside))
            || c.prohibited.iter().any(inside)
        {
            bad += 1;
        }
        if k > 0 {
            let g = f.t - fr[seq[k - 1]].t;
            if g < 0.0 || c.max_jump_s.is_some_and(|j| g > j) {
                bad += 1;
            }
        }
    }
    let actors: Vec<ActorId> = seq.iter().map(|&i| fr[i].actor).collect();
    let mut runs = vec![];
    for a in &actors {
        match runs.last_mut() {
            Some((b, n)) if b == a => *n += 1,
            _ => runs.push((*a, 1usize)),
        }
    }
    for (k, (_, n)) in runs.iter().enumerate() {
        if (*n < c.min_run && k + 1 < runs.len()) || c.max_run.is_some_and(|m| *n > m) {
            bad += 1;
        }
    }
    bad
}

/// Lowest mean cost over all forward paths of at most `max_len` frames in
/// `cands`, enumerated recursively.
pub fn brute_best_mean(
    ctx: &TrellisContext,
    prior: &[usize],
    cands: &[usize],
    max_len: usize,
) -> Option<f64> {
    fn rec(
        ctx: &TrellisContext,
        prior: &[usize],
        cands: &[usize],
        from: usize,
        path: &mut Vec<usize>,
        max_len: usize,
        best: &mut Option<f64>,
    ) {
        if !path.is_empty() && ctx.path_jumps_ok(prior.last().copied(), path) {
            let mean = ctx.path_cost(prior, path) / path.len() as f64;
            if best.is_none_or(|b| mean < b) {
                *best = Some(mean);
            }
        }
        if path.len() == max_len {
            return;
        }
        for k in from..cands.len() {
            path.push(cands[k]);
            rec(ctx, prior, cands, k + 1, path, max_len, best);
            path.pop();
        }
    }
    let mut best = None;
    rec(ctx, prior, cands, 0, &mut vec![], max_len, &mut best);
    best
}
