//! Activity types, instances and the factored log-probability of a
//! configuration.

mod face;
pub(crate) mod factors;

pub use face::{correct_faces, face_posterior, FaceCorrection};
pub use factors::{
    config_logprob, coverage_logfactor, coverage_marginal, face_logfactor, fit_background,
    presence_logfactor, presence_weights, scene_logfactor, span_radius_logprior, FactorBreakdown,
    ModelContext,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ActorId, TypeIdx};
use crate::stats::LogNormal;

/// Per-dimension Normal prior on a scene feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePrior {
    pub mean: f64,
    pub var: f64,
}

/// Prior bundle of one kind of activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityType {
    pub label: String,
    pub span_median_s: f64,
    pub span_log_std: f64,
    pub radius_median_m: f64,
    pub radius_log_std: f64,
    pub participants_median: f64,
    pub participants_log_std: f64,
    #[serde(default)]
    pub feature_prior: Vec<FeaturePrior>,
    pub face_rate_participant_per_min: f64,
    pub face_rate_nonparticipant_per_min: f64,
    #[serde(default = "default_excursion_rate")]
    pub excursion_rate_per_s: f64,
}

fn default_excursion_rate() -> f64 {
    1.0
}

impl ActivityType {
    pub fn span_prior(&self) -> LogNormal {
        LogNormal::new(self.span_median_s, self.span_log_std)
    }

    pub fn radius_prior(&self) -> LogNormal {
        LogNormal::new(self.radius_median_m, self.radius_log_std)
    }

    pub fn participants_prior(&self) -> LogNormal {
        LogNormal::new(self.participants_median, self.participants_log_std)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [
            ("span", self.span_prior()),
            ("radius", self.radius_prior()),
            ("participants", self.participants_prior()),
        ] {
            if !d.is_valid() {
                return Err(Error::config(format!(
                    "type '{}': {name} prior needs median > 0 and log_std > 0",
                    self.label
                )));
            }
        }
        let (lp, ln) = (
            self.face_rate_participant_per_min,
            self.face_rate_nonparticipant_per_min,
        );
        if !(lp > ln && ln > 0.0) || !lp.is_finite() {
            return Err(Error::config(format!(
                "type '{}': face rates need participant > nonparticipant > 0",
                self.label
            )));
        }
        if self
            .feature_prior
            .iter()
            .any(|f| !(f.var > 0.0) || !f.mean.is_finite())
        {
            return Err(Error::config(format!(
                "type '{}': feature variances must be > 0",
                self.label
            )));
        }
        if !(self.excursion_rate_per_s >= 0.0) || !self.excursion_rate_per_s.is_finite() {
            return Err(Error::config(format!(
                "type '{}': excursion rate must be >= 0",
                self.label
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    /// Instances may not intersect spatio-temporally.
    Disjoint,
    MayOverlap,
    /// If they intersect, the first instance's span must contain the
    /// second's.
    Contains,
}

/// Relation for every ordered pair of types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub relations: Vec<Vec<Overlap>>,
}

impl OverlapMatrix {
    /// Everything may overlap.
    pub fn permissive(n_types: usize) -> Self {
        Self {
            relations: vec![vec![Overlap::MayOverlap; n_types]; n_types],
        }
    }

    /// Same-type instances disjoint, different types may overlap.
    pub fn disjoint_within_type(n_types: usize) -> Self {
        let mut m = Self::permissive(n_types);
        for i in 0..n_types {
            m.relations[i][i] = Overlap::Disjoint;
        }
        m
    }

    pub fn n_types(&self) -> usize {
        self.relations.len()
    }

    pub fn get(&self, a: TypeIdx, b: TypeIdx) -> Overlap {
        self.relations[a.index()][b.index()]
    }

    pub fn validate(&self, n_types: usize) -> Result<()> {
        if self.relations.len() != n_types || self.relations.iter().any(|r| r.len() != n_types) {
            return Err(Error::config(format!(
                "overlap matrix must be {n_types}x{n_types}"
            )));
        }
        for a in 0..n_types {
            for b in 0..n_types {
                if self.relations[a][b] == Overlap::Contains
                    && self.relations[b][a] == Overlap::Disjoint
                {
                    return Err(Error::config(format!(
                        "overlap: contains({a},{b}) conflicts with disjoint({b},{a})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether two instances may coexist.
    pub fn compatible(&self, x: &ActivityInstance, y: &ActivityInstance) -> bool {
        if !x.intersects(y) {
            return true;
        }
        let xy = self.get(x.type_id, y.type_id);
        let yx = self.get(y.type_id, x.type_id);
        if xy == Overlap::Disjoint || yx == Overlap::Disjoint {
            return false;
        }
        match (xy == Overlap::Contains, yx == Overlap::Contains) {
            (true, true) => x.contains_span(y) || y.contains_span(x),
            (true, false) => x.contains_span(y),
            (false, true) => y.contains_span(x),
            (false, false) => true,
        }
    }

    pub fn satisfied(&self, config: &Configuration) -> bool {
        let v = &config.instances;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                if !self.compatible(&v[i], &v[j]) {
                    return false;
                }
            }
        }
        true
    }
}

/// One hypothesised meeting: a spatio-temporal cylinder with a type and a
/// participant set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityInstance {
    pub type_id: TypeIdx,
    pub center: [f64; 2],
    pub radius_m: f64,
    pub start_s: f64,
    pub span_s: f64,
    /// Sorted, distinct.
    pub participants: Vec<ActorId>,
}

impl ActivityInstance {
    pub fn new(
        type_id: TypeIdx,
        center: [f64; 2],
        radius_m: f64,
        start_s: f64,
        span_s: f64,
        mut participants: Vec<ActorId>,
    ) -> Self {
        participants.sort();
        participants.dedup();
        Self {
            type_id,
            center,
            radius_m,
            start_s,
            span_s,
            participants,
        }
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.span_s
    }

    pub fn covers_time(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s()
    }

    pub fn has(&self, a: ActorId) -> bool {
        self.participants.binary_search(&a).is_ok()
    }

    pub fn covers(&self, actor: ActorId, t: f64) -> bool {
        self.covers_time(t) && self.has(actor)
    }

    pub fn in_disc(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy <= self.radius_m * self.radius_m
    }

    pub fn temporal_overlap(&self, o: &ActivityInstance) -> f64 {
        (self.end_s().min(o.end_s()) - self.start_s.max(o.start_s)).max(0.0)
    }

    /// Cylinders share a positive-length time interval and their discs
    /// overlap.
    pub fn intersects(&self, o: &ActivityInstance) -> bool {
        if self.temporal_overlap(o) <= 0.0 {
            return false;
        }
        let d = ((self.center[0] - o.center[0]).powi(2) + (self.center[1] - o.center[1]).powi(2))
            .sqrt();
        d < self.radius_m + o.radius_m
    }

    pub fn contains_span(&self, o: &ActivityInstance) -> bool {
        self.start_s <= o.start_s && self.end_s() >= o.end_s()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > 0.0) || !self.radius_m.is_finite() {
            return Err(Error::contract(format!(
                "instance radius must be > 0, got {}",
                self.radius_m
            )));
        }
        if !(self.span_s > 0.0) || !self.span_s.is_finite() {
            return Err(Error::contract(format!(
                "instance span must be > 0, got {}",
                self.span_s
            )));
        }
        if !self.start_s.is_finite() || !self.center[0].is_finite() || !self.center[1].is_finite() {
            return Err(Error::contract("instance has non-finite fields"));
        }
        if self.participants.len() < 2 {
            return Err(Error::contract("instance needs at least 2 participants"));
        }
        if self.participants.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract(
                "instance participants must be sorted and distinct",
            ));
        }
        Ok(())
    }
}

/// The set of all instances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub instances: Vec<ActivityInstance>,
}

impl Configuration {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Model-wide constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Log-penalty per GPS observation covered by no instance.
    pub c_u: f64,
    /// Prior for frames outside every activity; fitted from the frames when
    /// absent.
    pub background_feature_prior: Option<Vec<FeaturePrior>>,
    pub sigma_aux_m: f64,
    /// Prior weight of a non-participant identity in the face posterior;
    /// `0.01 / n_actors` when absent.
    pub face_epsilon: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            c_u: 0.5,
            background_feature_prior: None,
            sigma_aux_m: 5.0,
            face_epsilon: None,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_u >= 0.0) || !self.c_u.is_finite() {
            return Err(Error::config("c_u must be >= 0"));
        }
        if !(self.sigma_aux_m > 0.0) {
            return Err(Error::config("sigma_aux_m must be > 0"));
        }
        if let Some(bg) = &self.background_feature_prior {
            if bg.iter().any(|f| !(f.var > 0.0)) {
                return Err(Error::config("background feature variances must be > 0"));
            }
        }
        if let Some(e) = self.face_epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::config("face_epsilon must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn epsilon(&self, n_actors: usize) -> f64 {
        self.face_epsilon.unwrap_or(0.01 / n_actors.max(1) as f64)
    }
}
