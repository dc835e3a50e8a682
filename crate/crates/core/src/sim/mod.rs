//! Synthetic multi-actor scenarios with known meetings, GPS denial and the
//! evaluation harness for count-error sweeps.

mod denial;
mod eval;
mod sweep;

pub use denial::{denial_scenario, run_denial, DenialOutcome, DenialScenario};
pub use eval::{cylinder_iou, evaluate, greedy_matches, EvalReport, SampleEval};
pub use sweep::{sweep_location_std, trial_seed, RunSpec, SweepCell, SweepCurve, SweepPoint};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataBundle, FaceDetection, FrameMatch, FrameRecord};
use crate::error::{Error, Result};
use crate::gp::GpsObservation;
use crate::ids::{ActorId, TypeIdx};
use crate::model::{ActivityInstance, ActivityType, FeaturePrior};
use crate::stats::LogNormal;

/// Smallest noise std written to observations, so a noiseless scenario
/// still yields valid GPS rows.
pub const MIN_REPORTED_NOISE_M: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_actors: usize,
    pub n_turns: usize,
    /// Each turn is a travel phase followed by a dwell of the sampled span.
    pub turn_duration_s: f64,
    pub n_places: usize,
    /// Meeting places are drawn from N(0, std^2 I).
    pub place_std_m: f64,
    pub p_meet: f64,
    pub gps_noise_std_m: f64,
    pub gps_rate_hz: f64,
    /// Side of the square (centered at the origin) holding own locations.
    pub area_extent_m: f64,
    pub radius_median_m: f64,
    pub span_median_s: f64,
    pub span_log_std: f64,
    pub frame_period_s: f64,
    pub meeting_features: Vec<FeaturePrior>,
    pub background_features: Vec<FeaturePrior>,
    pub face_rate_participant_per_min: f64,
    pub face_rate_nonparticipant_per_min: f64,
    /// Fraction of in-meeting face detections whose label is wrong.
    pub face_corruption: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_actors: 8,
            n_turns: 6,
            turn_duration_s: 180.0,
            n_places: 3,
            place_std_m: 700.0,
            p_meet: 0.5,
            gps_noise_std_m: 30.0,
            gps_rate_hz: 0.2,
            area_extent_m: 3000.0,
            radius_median_m: 30.0,
            span_median_s: 60.0,
            span_log_std: 0.05,
            frame_period_s: 10.0,
            meeting_features: vec![
                FeaturePrior {
                    mean: 1.0,
                    var: 0.25
                };
                4
            ],
            background_features: vec![
                FeaturePrior {
                    mean: -1.0,
                    var: 0.25
                };
                4
            ],
            face_rate_participant_per_min: 4.0,
            face_rate_nonparticipant_per_min: 0.2,
            face_corruption: 0.15,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("turn_duration_s", self.turn_duration_s),
            ("place_std_m", self.place_std_m),
            ("gps_rate_hz", self.gps_rate_hz),
            ("area_extent_m", self.area_extent_m),
            ("radius_median_m", self.radius_median_m),
            ("span_median_s", self.span_median_s),
            ("span_log_std", self.span_log_std),
            ("frame_period_s", self.frame_period_s),
            (
                "face_rate_participant_per_min",
                self.face_rate_participant_per_min,
            ),
            (
                "face_rate_nonparticipant_per_min",
                self.face_rate_nonparticipant_per_min,
            ),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("scenario: {name} must be > 0")));
            }
        }
        if self.n_actors < 2 || self.n_turns == 0 || self.n_places == 0 {
            return Err(Error::config(
                "scenario: need n_actors >= 2, n_turns >= 1, n_places >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.p_meet) || !(0.0..=1.0).contains(&self.face_corruption) {
            return Err(Error::config(
                "scenario: p_meet and face_corruption must lie in [0, 1]",
            ));
        }
        if !(self.gps_noise_std_m >= 0.0) || !self.gps_noise_std_m.is_finite() {
            return Err(Error::config("scenario: gps_noise_std_m must be >= 0"));
        }
        if self.turn_duration_s < 2.0 * self.span_median_s {
            return Err(Error::config(
                "scenario: turn_duration_s must be at least twice the span median",
            ));
        }
        if self.meeting_features.len() != self.background_features.len() {
            return Err(Error::config(
                "scenario: feature priors must have equal dimension",
            ));
        }
        if self
            .meeting_features
            .iter()
            .chain(&self.background_features)
            .any(|f| !(f.var > 0.0))
        {
            return Err(Error::config("scenario: feature variances must be > 0"));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.n_turns as f64 * self.turn_duration_s
    }

    pub fn span_prior(&self) -> LogNormal {
        LogNormal::new(self.span_median_s, self.span_log_std)
    }

    /// The single activity type used for inference on this scenario.
    pub fn meeting_type(&self) -> ActivityType {
        ActivityType {
            label: "meeting".into(),
            span_median_s: self.span_median_s,
            span_log_std: self.span_log_std,
            radius_median_m: self.radius_median_m,
            radius_log_std: 0.2,
            participants_median: 2.5,
            participants_log_std: 0.5,
            feature_prior: self.meeting_features.clone(),
            face_rate_participant_per_min: self.face_rate_participant_per_min,
            face_rate_nonparticipant_per_min: self.face_rate_nonparticipant_per_min,
            excursion_rate_per_s: 1.0,
        }
    }
}

/// Where an actor goes in one turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Place(usize),
    Own,
}

/// A (time, position) knot of a piecewise-linear true path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub config: ScenarioConfig,
    pub data: DataBundle,
    /// Per actor, time-ordered.
    pub paths: Vec<Vec<Waypoint>>,
    pub places: Vec<[f64; 2]>,
    /// `attendance[turn][actor]`.
    pub attendance: Vec<Vec<Destination>>,
    /// Start of the dwell phase and its length, per turn.
    pub dwell: Vec<(f64, f64)>,
    pub truth: Vec<ActivityInstance>,
    /// True identity of each entry of `data.faces`.
    pub face_truth: Vec<ActorId>,
}

/// Linear interpolation along a path, clamped at both ends.
pub fn path_position(path: &[Waypoint], t: f64) -> [f64; 2] {
    match path.iter().position(|w| w.t > t) {
        None => path.last().map_or([0.0, 0.0], |w| w.pos),
        Some(0) => path[0].pos,
        Some(k) => {
            let (a, b) = (path[k - 1], path[k]);
            let f = if b.t > a.t {
                (t - a.t) / (b.t - a.t)
            } else {
                1.0
            };
            [
                a.pos[0] + f * (b.pos[0] - a.pos[0]),
                a.pos[1] + f * (b.pos[1] - a.pos[1]),
            ]
        }
    }
}

impl SyntheticDataset {
    pub fn true_position(&self, actor: ActorId, t: f64) -> [f64; 2] {
        path_position(&self.paths[actor.index()], t)
    }

    /// Truth instances grouped as a configuration.
    pub fn truth_config(&self) -> crate::model::Configuration {
        crate::model::Configuration {
            instances: self.truth.clone(),
        }
    }

    /// The truth instance (if any) `actor` attends at time `t`.
    pub fn meeting_at(&self, actor: ActorId, t: f64) -> Option<usize> {
        self.truth.iter().position(|i| i.covers(actor, t))
    }

    /// Copy with GPS only (frames, faces and matches dropped).
    pub fn gps_only(&self) -> DataBundle {
        DataBundle {
            frames: Vec::new(),
            faces: Vec::new(),
            matches: Vec::new(),
            ..self.data.clone()
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}

/// Generate a scenario. Deterministic given `cfg.seed`.
pub fn generate(cfg: &ScenarioConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_actors;
    let half = 0.5 * cfg.area_extent_m;
    let places: Vec<[f64; 2]> = (0..cfg.n_places)
        .map(|_| {
            [
                cfg.place_std_m * gauss(&mut rng),
                cfg.place_std_m * gauss(&mut rng),
            ]
        })
        .collect();
    let own = |rng: &mut ChaCha8Rng| {
        [
            rng.random_range(-half..=half),
            rng.random_range(-half..=half),
        ]
    };

    let mut paths: Vec<Vec<Waypoint>> = (0..n)
        .map(|_| {
            vec![Waypoint {
                t: 0.0,
                pos: own(&mut rng),
            }]
        })
        .collect();
    let mut last: Vec<Option<usize>> = vec![None; n];
    let mut attendance = Vec::with_capacity(cfg.n_turns);
    let mut dwell = Vec::with_capacity(cfg.n_turns);
    let mut truth = Vec::new();
    let t_turn = cfg.turn_duration_s;
    for k in 0..cfg.n_turns {
        let span = cfg.span_prior().sample(&mut rng).clamp(1.0, 0.5 * t_turn);
        let t0 = k as f64 * t_turn;
        let arrive = t0 + t_turn - span;
        let mut row = Vec::with_capacity(n);
        for a in 0..n {
            let dest = if rng.random::<f64>() < cfg.p_meet {
                // No consecutive visit of the same place, so every meeting
                // begins with an arrival.
                let choices: Vec<usize> = (0..cfg.n_places)
                    .filter(|&p| cfg.n_places == 1 || Some(p) != last[a])
                    .collect();
                Destination::Place(*choices.choose(&mut rng).expect("non-empty"))
            } else {
                Destination::Own
            };
            let pos = match dest {
                Destination::Place(p) => places[p],
                Destination::Own => own(&mut rng),
            };
            last[a] = match dest {
                Destination::Place(p) => Some(p),
                Destination::Own => None,
            };
            paths[a].push(Waypoint { t: arrive, pos });
            paths[a].push(Waypoint {
                t: t0 + t_turn,
                pos,
            });
            row.push(dest);
        }
        for (p, &center) in places.iter().enumerate() {
            let who: Vec<ActorId> = (0..n)
                .filter(|&a| row[a] == Destination::Place(p))
                .map(|a| ActorId(a as u32))
                .collect();
            if who.len() >= 2 {
                truth.push(ActivityInstance::new(
                    TypeIdx(0),
                    center,
                    cfg.radius_median_m,
                    arrive,
                    span,
                    who,
                ));
            }
        }
        attendance.push(row);
        dwell.push((arrive, span));
    }

    let duration = cfg.duration_s();
    let reported_noise = cfg.gps_noise_std_m.max(MIN_REPORTED_NOISE_M);
    let n_fixes = (duration * cfg.gps_rate_hz).floor() as usize + 1;
    let mut gps = Vec::with_capacity(n * n_fixes);
    for (a, path) in paths.iter().enumerate() {
        for j in 0..n_fixes {
            let t = j as f64 / cfg.gps_rate_hz;
            let p = path_position(path, t);
            gps.push(GpsObservation {
                actor: ActorId(a as u32),
                t,
                pos: [
                    p[0] + cfg.gps_noise_std_m * gauss(&mut rng),
                    p[1] + cfg.gps_noise_std_m * gauss(&mut rng),
                ],
                noise_std: reported_noise,
            });
        }
    }

    let covering = |a: usize, t: f64| {
        truth
            .iter()
            .position(|i: &ActivityInstance| i.covers(ActorId(a as u32), t))
    };
    let n_frames = (duration / cfg.frame_period_s).floor() as usize + 1;
    let mut frames = Vec::with_capacity(n * n_frames);
    for a in 0..n {
        for j in 0..n_frames {
            let t = j as f64 * cfg.frame_period_s;
            let prior = if covering(a, t).is_some() {
                &cfg.meeting_features
            } else {
                &cfg.background_features
            };
            let features = prior
                .iter()
                .map(|f| f.mean + f.var.sqrt() * gauss(&mut rng))
                .collect();
            frames.push(FrameRecord {
                actor: ActorId(a as u32),
                t,
                kp_count: rng.random_range(100..500),
                features,
            });
        }
    }

    // Keypoint matches: consecutive frames of one actor, and simultaneous
    // frames of co-participants.
    let mut matches = Vec::new();
    for a in 0..n {
        for j in 1..n_frames {
            let (ti, tj) = (
                (j - 1) as f64 * cfg.frame_period_s,
                j as f64 * cfg.frame_period_s,
            );
            let still = covering(a, ti).is_some() && covering(a, ti) == covering(a, tj);
            let m = if still {
                rng.random_range(30..60)
            } else {
                rng.random_range(5..20)
            };
            matches.push(FrameMatch {
                actor_i: ActorId(a as u32),
                t_i: ti,
                actor_j: ActorId(a as u32),
                t_j: tj,
                matches: m,
            });
        }
    }
    for j in 0..n_frames {
        let t = j as f64 * cfg.frame_period_s;
        for a in 0..n {
            for b in a + 1..n {
                if let (Some(x), Some(y)) = (covering(a, t), covering(b, t)) {
                    if x == y {
                        matches.push(FrameMatch {
                            actor_i: ActorId(a as u32),
                            t_i: t,
                            actor_j: ActorId(b as u32),
                            t_j: t,
                            matches: rng.random_range(20..50),
                        });
                    }
                }
            }
        }
    }

    let (faces, face_truth) = generate_faces(cfg, &truth, &mut rng);
    let mut data = DataBundle {
        actor_names: (0..n).map(|a| format!("actor{a}")).collect(),
        gps,
        frames,
        faces,
        matches,
        origin: None,
    };
    data.sort();
    Ok(SyntheticDataset {
        config: cfg.clone(),
        data,
        paths,
        places,
        attendance,
        dwell,
        truth,
        face_truth,
    })
}

/// Face detections per observer: co-participants at the participant rate
/// inside meetings, everyone at the non-participant rate while the observer
/// is in no meeting. In-meeting labels are corrupted with `face_corruption`.
fn generate_faces(
    cfg: &ScenarioConfig,
    truth: &[ActivityInstance],
    rng: &mut ChaCha8Rng,
) -> (Vec<FaceDetection>, Vec<ActorId>) {
    let n = cfg.n_actors;
    let duration = cfg.duration_s();
    let mut out: Vec<(FaceDetection, ActorId)> = Vec::new();
    for obs in 0..n {
        let observer = ActorId(obs as u32);
        let mut events: Vec<(f64, ActorId, bool)> = Vec::new();
        for inst in truth.iter().filter(|i| i.has(observer)) {
            for &q in inst.participants.iter().filter(|&&q| q != observer) {
                let k = poisson(rng, cfg.face_rate_participant_per_min * inst.span_s / 60.0);
                for _ in 0..k {
                    events.push((inst.start_s + rng.random::<f64>() * inst.span_s, q, true));
                }
            }
        }
        // Chance sightings happen while the observer is not in a meeting;
        // inside one the camera is on the other participants.
        let busy = |t: f64| truth.iter().any(|i| i.has(observer) && i.covers_time(t));
        for q in (0..n).filter(|&q| q != obs) {
            let k = poisson(rng, cfg.face_rate_nonparticipant_per_min * duration / 60.0);
            for _ in 0..k {
                let t = rng.random::<f64>() * duration;
                if !busy(t) {
                    events.push((t, ActorId(q as u32), false));
                }
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, who, in_meeting) in events {
            let mut scores: Vec<f64> = (0..n).map(|_| 0.5 * gauss(rng)).collect();
            let corrupt = in_meeting && rng.random::<f64>() < cfg.face_corruption;
            if corrupt {
                let others: Vec<usize> = (0..n).filter(|&x| x != who.index() && x != obs).collect();
                let wrong = *others.choose(rng).unwrap_or(&who.index());
                scores[wrong] += 3.0;
                scores[who.index()] += 1.5;
            } else {
                scores[who.index()] += 3.0;
            }
            let detected = (0..n)
                .max_by(|&x, &y| scores[x].total_cmp(&scores[y]).then(y.cmp(&x)))
                .map(|x| ActorId(x as u32));
            out.push((
                FaceDetection {
                    observer,
                    t,
                    detected,
                    scores: Some(scores),
                },
                who,
            ));
        }
    }
    out.into_iter().unzip()
}

/// Remove GPS fixes of `actor` with `t0 <= t <= t1`, per window. Truth and
/// every other stream are untouched.
pub fn inject_denial(
    ds: &SyntheticDataset,
    windows: &[(ActorId, f64, f64)],
) -> Result<SyntheticDataset> {
    for &(a, t0, t1) in windows {
        if a.index() >= ds.config.n_actors || !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::contract(format!(
                "invalid denial window ({}, {t0}, {t1})",
                a.0
            )));
        }
    }
    let mut out = ds.clone();
    out.data.gps.retain(|o| {
        !windows
            .iter()
            .any(|&(a, t0, t1)| o.actor == a && o.t >= t0 && o.t <= t1)
    });
    Ok(out)
}
