//! A single two-person meeting whose GPS drops out for both participants in
//! the middle of it.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{generate, inject_denial, RunSpec, ScenarioConfig, SyntheticDataset};
use crate::error::{Error, Result};
use crate::ids::ActorId;
use crate::par::Execution;
use crate::posteriors::{localize, uncertainty_report, LocalizeOptions, UncertaintyReport};
use crate::rjmcmc::Inference;

#[derive(Debug, Clone)]
pub struct DenialScenario {
    /// Dataset with the denied GPS rows removed.
    pub dataset: SyntheticDataset,
    pub windows: Vec<(ActorId, f64, f64)>,
    pub run: RunSpec,
}

/// Two actors walk to one shared place and stay for about 20 minutes; both
/// lose GPS for `window_s` seconds centred on the meeting.
pub fn denial_scenario(seed: u64, window_s: f64) -> Result<DenialScenario> {
    let cfg = ScenarioConfig {
        n_actors: 2,
        n_turns: 1,
        n_places: 1,
        p_meet: 1.0,
        turn_duration_s: 3000.0,
        span_median_s: 1200.0,
        seed,
        ..ScenarioConfig::default()
    };
    let ds = generate(&cfg)?;
    let meeting = ds
        .truth
        .first()
        .ok_or_else(|| Error::numerical("denial scenario produced no meeting"))?;
    if !(window_s > 0.0) || window_s >= meeting.span_s {
        return Err(Error::contract(format!(
            "denial window {window_s} s must be positive and shorter than the meeting ({} s)",
            meeting.span_s
        )));
    }
    let mid = meeting.start_s + 0.5 * meeting.span_s;
    let (t0, t1) = (mid - 0.5 * window_s, mid + 0.5 * window_s);
    let windows: Vec<_> = meeting.participants.iter().map(|&a| (a, t0, t1)).collect();
    let dataset = inject_denial(&ds, &windows)?;

    // Long smooth walks, and a meeting long enough that leaving the disc
    // must stay rare for a denied participant to be kept in it.
    let mut run = RunSpec::for_scenario(&cfg);
    run.types[0].excursion_rate_per_s = 0.1;
    run.hyper.length_scale_s = 300.0;
    run.sampler.grid_points = 200;
    run.sampler.aux_conditioning = true;
    Ok(DenialScenario {
        dataset,
        windows,
        run,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenialOutcome {
    pub reports: Vec<(ActorId, UncertaintyReport)>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl DenialOutcome {
    /// Reduction of the in-window std averaged over the denied actors.
    pub fn mean_reduction(&self) -> f64 {
        if self.reports.is_empty() {
            return 0.0;
        }
        self.reports.iter().map(|(_, r)| r.reduction()).sum::<f64>() / self.reports.len() as f64
    }
}

/// Infer from GPS alone and compare conditioned against unconditioned std
/// inside each denial window.
pub fn run_denial(sc: &DenialScenario, seed: u64, execution: Execution) -> Result<DenialOutcome> {
    let start = Instant::now();
    let data = sc.dataset.gps_only();
    let run = &sc.run;
    let inf = Inference::new(
        &data,
        &run.types,
        &run.overlap,
        &run.params,
        &run.hyper,
        run.sampler.clone(),
        execution,
    )?;
    let chain = inf.run(seed)?;
    let opts = LocalizeOptions {
        execution,
        ..LocalizeOptions::default()
    };
    let mut reports = Vec::with_capacity(sc.windows.len());
    for &(a, t0, t1) in &sc.windows {
        let loc = localize(std::slice::from_ref(&chain), &inf.posteriors, a, &opts)?;
        reports.push((a, uncertainty_report(&loc, (t0, t1))?));
    }
    Ok(DenialOutcome {
        reports,
        elapsed: start.elapsed(),
    })
}
