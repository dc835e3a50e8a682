use serde::{Deserialize, Serialize};

use super::{evaluate, generate, EvalReport, ScenarioConfig};
use crate::error::{Error, Result};
use crate::gp::GpHyperParams;
use crate::model::{ActivityType, ModelParams, OverlapMatrix};
use crate::par::Execution;
use crate::rjmcmc::{Inference, MoveWeights, SamplerConfig};
use crate::stats::LogNormal;

/// Inference settings applied to every sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSpec {
    pub types: Vec<ActivityType>,
    pub overlap: OverlapMatrix,
    pub params: ModelParams,
    pub hyper: GpHyperParams,
    pub sampler: SamplerConfig,
    pub n_chains: usize,
    /// Infer from GPS alone, ignoring the synthetic frame and face streams.
    pub gps_only: bool,
    pub iou_threshold: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self::for_scenario(&ScenarioConfig::default())
    }
}

impl RunSpec {
    /// Settings matched to a scenario's meeting parameters.
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        let ty = ActivityType {
            excursion_rate_per_s: 0.5,
            ..cfg.meeting_type()
        };
        // One type: type changes are no-ops. Births are the bottleneck with
        // many short meetings, so they get more weight and mostly come from
        // proximity candidates.
        let weights = MoveWeights {
            birth: 3.0,
            death: 3.0,
            type_change: 0.0,
            ..MoveWeights::uniform()
        };
        let sampler = SamplerConfig {
            weights,
            data_birth_weight: 0.9,
            n_iters: 10_000,
            burn_in: 2_500,
            save_every: 10,
            grid_points: 400,
            n_draws: 30,
            radius_proposal: LogNormal::new(ty.radius_median_m, 0.2),
            span_proposal: LogNormal::new(ty.span_median_s, ty.span_log_std),
            participants_prior: LogNormal::new(ty.participants_median, ty.participants_log_std),
            ..SamplerConfig::default()
        };
        Self {
            types: vec![ty],
            overlap: OverlapMatrix::disjoint_within_type(1),
            params: ModelParams {
                c_u: 1.5,
                ..ModelParams::default()
            },
            hyper: GpHyperParams {
                length_scale_s: 90.0,
                signal_std_m: cfg.place_std_m.max(0.5 * cfg.area_extent_m),
                ..GpHyperParams::default()
            },
            sampler,
            n_chains: 1,
            gps_only: true,
            iou_threshold: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::config("n_chains must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(Error::config("iou_threshold must lie in [0, 1]"));
        }
        self.sampler.validate()
    }
}

/// Seed of trial `trial` at std index `cell`; independent of execution
/// order.
pub fn trial_seed(base: u64, cell: usize, trial: usize) -> u64 {
    let mut z = base
        .wrapping_add((cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((trial as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one (std, trial) pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub place_std_m: f64,
    pub trial: usize,
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub place_std_m: f64,
    /// Mean relative count error over successful trials.
    pub mean: f64,
    /// Standard deviation across trials.
    pub std: f64,
    pub signed_mean: f64,
    pub f1_mean: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
    pub cells: Vec<SweepCell>,
}

fn run_cell(
    base: &ScenarioConfig,
    place_std_m: f64,
    seed: u64,
    run: &RunSpec,
) -> Result<EvalReport> {
    let cfg = ScenarioConfig {
        place_std_m,
        seed,
        ..base.clone()
    };
    let ds = generate(&cfg)?;
    let data = if run.gps_only {
        ds.gps_only()
    } else {
        ds.data.clone()
    };
    let inf = Inference::new(
        &data,
        &run.types,
        &run.overlap,
        &run.params,
        &run.hyper,
        run.sampler.clone(),
        Execution::Sequential,
    )?;
    let seeds: Vec<u64> = (0..run.n_chains)
        .map(|c| trial_seed(seed, usize::MAX, c))
        .collect();
    let chains = inf.run_many(&seeds)?;
    evaluate(&chains, &ds.truth, run.iou_threshold)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Count error against the spread of meeting places: `n_trials` full
/// generate-infer-evaluate runs per std value. A failing cell is recorded
/// and skipped in the summary.
pub fn sweep_location_std(
    base: &ScenarioConfig,
    stds: &[f64],
    n_trials: usize,
    run: &RunSpec,
    execution: Execution,
) -> Result<SweepCurve> {
    if n_trials < 2 {
        return Err(Error::contract("a sweep needs n_trials >= 2"));
    }
    if stds.is_empty() || stds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::contract("sweep std values must be finite and > 0"));
    }
    base.validate()?;
    run.validate()?;
    let jobs: Vec<(usize, usize)> = (0..stds.len())
        .flat_map(|c| (0..n_trials).map(move |t| (c, t)))
        .collect();
    let cells: Vec<SweepCell> = execution.map(&jobs, |&(c, t)| {
        let seed = trial_seed(base.seed, c, t);
        let out = run_cell(base, stds[c], seed, run);
        if let Err(e) = &out {
            log::warn!("sweep cell std={} trial={t} failed: {e}", stds[c]);
        }
        SweepCell {
            place_std_m: stds[c],
            trial: t,
            seed,
            error: out.as_ref().err().map(|e| e.to_string()),
            report: out.ok(),
        }
    });
    let points = stds
        .iter()
        .enumerate()
        .map(|(c, &s)| {
            let mine: Vec<&SweepCell> = cells[c * n_trials..(c + 1) * n_trials].iter().collect();
            let ok: Vec<&EvalReport> = mine.iter().filter_map(|x| x.report.as_ref()).collect();
            let (mean, std) = mean_std(&ok.iter().map(|r| r.count_error).collect::<Vec<_>>());
            let (signed_mean, _) = mean_std(&ok.iter().map(|r| r.signed_error).collect::<Vec<_>>());
            let (f1_mean, _) = mean_std(&ok.iter().map(|r| r.f1).collect::<Vec<_>>());
            SweepPoint {
                place_std_m: s,
                mean,
                std,
                signed_mean,
                f1_mean,
                n_ok: ok.len(),
                n_failed: mine.len() - ok.len(),
            }
        })
        .collect();
    Ok(SweepCurve { points, cells })
}
