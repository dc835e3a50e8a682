//! Collaborative localization: an actor's trajectory posterior after
//! conditioning on the activities it took part in, averaged over sampled
//! configurations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{condition_marginal, AuxMode, AuxObservationSet, GpPosterior, TimeGrid};
use crate::ids::ActorId;
use crate::model::Configuration;
use crate::par::Execution;
use crate::rjmcmc::ChainSamples;

/// Options for [`localize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeOptions {
    /// Use every `thin`-th stored sample of each chain.
    pub thin: usize,
    pub mode: AuxMode,
    pub sigma_aux_m: f64,
    pub execution: Execution,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            thin: 10,
            mode: AuxMode::Static,
            sigma_aux_m: 5.0,
            execution: Execution::default(),
        }
    }
}

/// Pointwise mean and variance of one mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mean: Vec<[f64; 2]>,
    /// Shared by both coordinates.
    pub var: Vec<f64>,
    /// At least one constraint was applied.
    pub conditioned: bool,
}

impl Component {
    fn from_posterior(p: &GpPosterior, conditioned: bool) -> Self {
        Self {
            mean: p.mean.clone(),
            var: p.variances(),
            conditioned,
        }
    }
}

/// Uniform mixture over thinned configuration samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationPosterior {
    pub actor: ActorId,
    pub grid: TimeGrid,
    /// Distinct components; `weights[k]` is the fraction of samples that
    /// produced `components[k]`.
    pub components: Vec<Component>,
    pub weights: Vec<f64>,
    pub n_samples: usize,
    pub mean: Vec<[f64; 2]>,
    pub std: Vec<[f64; 2]>,
    pub unconditioned_mean: Vec<[f64; 2]>,
    pub unconditioned_std: Vec<[f64; 2]>,
}

impl LocalizationPosterior {
    /// Whether any sample conditioned this actor.
    pub fn conditioned(&self) -> bool {
        self.components.iter().any(|c| c.conditioned)
    }

    /// Rows of the localization export, conditioned rows first.
    pub fn rows(&self) -> Vec<LocalizationRow> {
        let pts = self.grid.points();
        let mut out = Vec::with_capacity(2 * pts.len());
        for (conditioned, mean, std) in [
            (true, &self.mean, &self.std),
            (false, &self.unconditioned_mean, &self.unconditioned_std),
        ] {
            for (i, &t) in pts.iter().enumerate() {
                out.push(LocalizationRow {
                    actor: self.actor,
                    t,
                    mean_x: mean[i][0],
                    mean_y: mean[i][1],
                    std_x: std[i][0],
                    std_y: std[i][1],
                    conditioned,
                });
            }
        }
        out
    }
}

/// One line of the localization CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub actor: ActorId,
    pub t: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub std_x: f64,
    pub std_y: f64,
    pub conditioned: bool,
}

/// Aux sets constraining `actor` in one configuration: one per instance it
/// belongs to, restricted to actors that have a posterior.
pub fn aux_sets_for(
    config: &Configuration,
    actor: ActorId,
    tracked: &[ActorId],
    mode: AuxMode,
    sigma_aux: f64,
) -> Vec<AuxObservationSet> {
    let mut out = Vec::new();
    for (k, inst) in config.instances.iter().enumerate() {
        if !inst.has(actor) {
            continue;
        }
        let participants: Vec<ActorId> = inst
            .participants
            .iter()
            .copied()
            .filter(|a| tracked.contains(a))
            .collect();
        if participants.len() < 2 || !participants.contains(&actor) {
            continue;
        }
        out.push(AuxObservationSet {
            mode,
            participants,
            t_start: inst.start_s,
            t_end: inst.end_s(),
            sigma_aux,
            activity_ref: Some(k),
        });
    }
    out
}

type SetKey = Vec<(Vec<u32>, u64, u64)>;

fn key_of(sets: &[AuxObservationSet]) -> SetKey {
    sets.iter()
        .map(|s| {
            (
                s.participants.iter().map(|a| a.0).collect(),
                s.t_start.to_bits(),
                s.t_end.to_bits(),
            )
        })
        .collect()
}

/// Localize `actor` by mixing, over thinned samples of all chains, its
/// posterior jointly conditioned on every instance containing it.
pub fn localize(
    chains: &[ChainSamples],
    posteriors: &[GpPosterior],
    actor: ActorId,
    opts: &LocalizeOptions,
) -> Result<LocalizationPosterior> {
    if chains.is_empty() {
        return Err(Error::contract("localize needs at least one chain"));
    }
    if opts.thin == 0 {
        return Err(Error::contract("thin must be >= 1"));
    }
    let base = posteriors
        .iter()
        .find(|p| p.actors.len() == 1 && p.actors[0] == actor)
        .ok_or_else(|| Error::contract(format!("no posterior for actor {}", actor.0)))?;
    let tracked: Vec<ActorId> = posteriors
        .iter()
        .filter(|p| p.actors.len() == 1)
        .map(|p| p.actors[0])
        .collect();

    // Group samples by their constraint sets; identical sets give identical
    // components, so each distinct one is conditioned once.
    let mut keys: HashMap<SetKey, usize> = HashMap::new();
    let mut groups: Vec<Vec<AuxObservationSet>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut n_samples = 0;
    for chain in chains {
        for s in chain.samples.iter().step_by(opts.thin) {
            n_samples += 1;
            let sets = aux_sets_for(&s.config, actor, &tracked, opts.mode, opts.sigma_aux_m);
            let k = *keys.entry(key_of(&sets)).or_insert_with(|| {
                groups.push(sets);
                counts.push(0);
                groups.len() - 1
            });
            counts[k] += 1;
        }
    }
    if n_samples == 0 {
        return Err(Error::contract("chains hold no samples"));
    }

    let results = opts.execution.map(&groups, |sets| -> Result<Component> {
        if sets.is_empty() {
            return Ok(Component::from_posterior(base, false));
        }
        let c = condition_marginal(posteriors, sets, actor)?;
        Ok(Component::from_posterior(&c.posterior, c.n_constraints > 0))
    });
    let components = results.into_iter().collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / n_samples as f64)
        .collect();

    let unconditioned = Component::from_posterior(base, false);
    let (mean, std) = mixture_summary(&components, &weights);
    let (unconditioned_mean, unconditioned_std) =
        mixture_summary(std::slice::from_ref(&unconditioned), &[1.0]);
    Ok(LocalizationPosterior {
        actor,
        grid: base.grid,
        components,
        weights,
        n_samples,
        mean,
        std,
        unconditioned_mean,
        unconditioned_std,
    })
}

/// Pointwise mixture mean and std by the law of total variance. A single
/// component is returned as is.
pub fn mixture_summary(
    components: &[Component],
    weights: &[f64],
) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    if components.len() == 1 {
        let c = &components[0];
        let std = c.var.iter().map(|v| [v.max(0.0).sqrt(); 2]).collect();
        return (c.mean.clone(), std);
    }
    let n = components.first().map_or(0, |c| c.mean.len());
    let mut mean = vec![[0.0; 2]; n];
    let mut std = vec![[0.0; 2]; n];
    for i in 0..n {
        let mut m = [0.0; 2];
        for (c, &w) in components.iter().zip(weights) {
            m[0] += w * c.mean[i][0];
            m[1] += w * c.mean[i][1];
        }
        let mut v = [0.0; 2];
        for (c, &w) in components.iter().zip(weights) {
            for d in 0..2 {
                let dm = c.mean[i][d] - m[d];
                v[d] += w * (c.var[i].max(0.0) + dm * dm);
            }
        }
        mean[i] = m;
        std[i] = [v[0].sqrt(), v[1].sqrt()];
    }
    (mean, std)
}

/// Average pointwise std over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub before: [f64; 2],
    pub after: [f64; 2],
    pub n_points: usize,
}

impl UncertaintyReport {
    /// Relative reduction of the mean std, averaged over both coordinates.
    pub fn reduction(&self) -> f64 {
        let b = 0.5 * (self.before[0] + self.before[1]);
        let a = 0.5 * (self.after[0] + self.after[1]);
        if b > 0.0 {
            1.0 - a / b
        } else {
            0.0
        }
    }
}

/// Mean pointwise std over grid points in `[t0, t1]`, unconditioned
/// (`before`) and conditioned (`after`).
pub fn uncertainty_report(
    loc: &LocalizationPosterior,
    window: (f64, f64),
) -> Result<UncertaintyReport> {
    let (t0, t1) = window;
    if !(t1 >= t0) || !loc.grid.contains(t0) || !loc.grid.contains(t1) {
        return Err(Error::contract(format!(
            "window [{t0}, {t1}] must lie within the grid [{}, {}]",
            loc.grid.t_start, loc.grid.t_end
        )));
    }
    let idx = loc.grid.indices_within(t0, t1);
    if idx.is_empty() {
        return Err(Error::contract(format!(
            "window [{t0}, {t1}] contains no grid point"
        )));
    }
    let k = idx.len() as f64;
    let avg = |s: &[[f64; 2]]| {
        let mut a = [0.0; 2];
        for i in idx.clone() {
            a[0] += s[i][0];
            a[1] += s[i][1];
        }
        [a[0] / k, a[1] / k]
    };
    Ok(UncertaintyReport {
        before: avg(&loc.unconditioned_std),
        after: avg(&loc.std),
        n_points: idx.len(),
    })
}
