use std::path::{Path, PathBuf};

use coactivity::data::DataBundle;
use coactivity::io::{
    load_bundle, read_chain, read_truth, save_bundle, write_chain, write_curve, write_eval,
    write_face_corrections, write_keyframes, write_localization, write_map, write_truth,
    write_video, BundlePaths, FileDigest, Manifest, RunConfig, TruthFile,
};
use coactivity::model::{correct_faces, Configuration};
use coactivity::par::Execution;
use coactivity::posteriors::localize as localize_actor;
use coactivity::rjmcmc::{ChainSamples, Inference};
use coactivity::sim::{evaluate, generate, sweep_location_std, EvalReport};
use coactivity::summarize::{map_summary, select_keyframes, summarize_video};
use coactivity::{ActorId, Error};
use serde::Serialize;

use crate::{usage, Common, Fail, Inputs, Mode};

type Res<T> = Result<T, Fail>;

fn load_config(common: &Common) -> Res<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn require_config(common: &Common, sub: &str) -> Res<RunConfig> {
    if common.config.is_none() {
        return Err(usage(format!(
            "`{sub}` requires --config\n\n{}",
            crate::usage_text(sub)
        )));
    }
    load_config(common)
}

fn data_paths(cfg: &RunConfig, inputs: &Inputs) -> Res<BundlePaths> {
    let dir = inputs
        .data
        .clone()
        .or_else(|| cfg.data_dir.clone())
        .ok_or_else(|| usage("no data directory: pass --data or set data_dir in the config"))?;
    Ok(BundlePaths::in_dir(&dir))
}

fn load_data(cfg: &RunConfig, inputs: &Inputs) -> Res<(DataBundle, BundlePaths)> {
    let paths = data_paths(cfg, inputs)?;
    let data = load_bundle(&paths, cfg.gps_frame)?;
    Ok((data, paths))
}

fn chain_files(dir: &Path) -> Res<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::data(dir, 0, e.to_string()))?;
    let mut found: Vec<(usize, PathBuf)> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let k = name
                .strip_prefix("chain_")?
                .strip_suffix(".jsonl")?
                .parse()
                .ok()?;
            Some((k, p))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::data(dir, 0, "no chain_<k>.jsonl files; run `infer` first").into());
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn load_chains(common: &Common, inputs: &Inputs) -> Res<(Vec<ChainSamples>, Vec<PathBuf>)> {
    let dir = inputs.run.clone().unwrap_or_else(|| common.out.clone());
    let files = chain_files(&dir)?;
    let chains = files
        .iter()
        .map(|p| read_chain(p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((chains, files))
}

fn inference<'a>(cfg: &'a RunConfig, data: &'a DataBundle) -> Res<Inference<'a>> {
    Ok(Inference::new(
        data,
        &cfg.types,
        &cfg.overlap,
        &cfg.params,
        &cfg.hyper,
        cfg.sampler.clone(),
        Execution::Parallel,
    )?)
}

fn digests(files: &[PathBuf]) -> Res<Vec<FileDigest>> {
    Ok(files
        .iter()
        .map(|p| {
            FileDigest::of(
                p,
                p.file_name()
                    .map_or(String::new(), |n| n.to_string_lossy().into_owned()),
            )
        })
        .collect::<Result<Vec<_>, _>>()?)
}

fn manifest(
    path: &Path,
    command: &str,
    cfg: &RunConfig,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Res<()> {
    let mut m = Manifest::new(command, cfg.hash()?, cfg.seed, cfg.chain_seeds());
    m.inputs = digests(inputs)?;
    m.outputs = digests(outputs)?;
    m.write(path)?;
    Ok(())
}

fn run_manifest(
    common: &Common,
    command: &str,
    cfg: &RunConfig,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Res<()> {
    let mut inputs = inputs.to_vec();
    inputs.extend(common.config.iter().cloned());
    manifest(
        &common.out.join(format!("manifest_{command}.json")),
        command,
        cfg,
        &inputs,
        outputs,
    )
}

fn bundle_files(p: &BundlePaths) -> Vec<PathBuf> {
    p.all().into_iter().map(Path::to_path_buf).collect()
}

pub fn simulate(common: &Common) -> Res<()> {
    let mut cfg = load_config(common)?;
    if let Some(s) = common.seed {
        cfg.scenario.seed = s;
    }
    let ds = generate(&cfg.scenario)?;
    let out = &common.out;
    let paths = save_bundle(&ds.data, out)?;
    let truth = out.join("truth.json");
    write_truth(&truth, &TruthFile::of(&ds))?;
    let mut run_cfg = cfg.clone();
    run_cfg.data_dir = Some(PathBuf::from("."));
    let cfg_path = out.join("config.json");
    coactivity::io::atomic_write(&cfg_path, format!("{}\n", run_cfg.to_json()?).as_bytes())?;
    log::info!(
        "simulated {} actors, {} meetings, {} GPS rows",
        ds.data.n_actors(),
        ds.truth.len(),
        ds.data.gps.len()
    );
    let mut outputs = bundle_files(&paths);
    outputs.extend([truth, cfg_path]);
    run_manifest(common, "simulate", &cfg, &[], &outputs)
}

pub fn infer(common: &Common, inputs: &Inputs) -> Res<()> {
    let cfg = require_config(common, "infer")?;
    let (data, paths) = load_data(&cfg, inputs)?;
    let inf = inference(&cfg, &data)?;
    let chains = inf.run_many(&cfg.chain_seeds())?;
    let mut outputs = Vec::new();
    for (k, c) in chains.iter().enumerate() {
        let p = common.out.join(format!("chain_{k}.jsonl"));
        write_chain(&p, c)?;
        outputs.push(p);
    }
    run_manifest(common, "infer", &cfg, &bundle_files(&paths), &outputs)
}

fn actor_by_name(data: &DataBundle, name: &str) -> Res<ActorId> {
    data.actor_names
        .iter()
        .position(|n| n == name)
        .map(|i| ActorId(i as u32))
        .ok_or_else(|| usage(format!("unknown actor '{name}'")))
}

pub fn localize(common: &Common, inputs: &Inputs, actor: Option<&str>) -> Res<()> {
    let cfg = require_config(common, "localize")?;
    let (data, paths) = load_data(&cfg, inputs)?;
    let (chains, chain_paths) = load_chains(common, inputs)?;
    let inf = inference(&cfg, &data)?;
    let actors = match actor {
        Some(n) => vec![actor_by_name(&data, n)?],
        None => inf.actors.clone(),
    };
    let mut rows = Vec::new();
    for a in actors {
        let loc = localize_actor(&chains, &inf.posteriors, a, &cfg.localize)?;
        log::info!(
            "{}: conditioned in {} of {} components",
            data.actor_names[a.index()],
            loc.components.iter().filter(|c| c.conditioned).count(),
            loc.components.len()
        );
        rows.extend(loc.rows());
    }
    let out = common.out.join("localization.csv");
    write_localization(&out, &data.actor_names, &rows)?;
    let mut ins = bundle_files(&paths);
    ins.extend(chain_paths);
    run_manifest(common, "localize", &cfg, &ins, &[out])
}

fn all_configs(chains: &[ChainSamples]) -> Vec<&Configuration> {
    chains.iter().flat_map(|c| c.configs()).collect()
}

pub fn faces(common: &Common, inputs: &Inputs) -> Res<()> {
    let cfg = require_config(common, "faces")?;
    let (data, paths) = load_data(&cfg, inputs)?;
    let (chains, chain_paths) = load_chains(common, inputs)?;
    let eps = cfg.params.epsilon(data.n_actors());
    let corrections = correct_faces(&data.faces, &all_configs(&chains), eps)?;
    let out = common.out.join("faces_corrected.csv");
    write_face_corrections(&out, &data.actor_names, &corrections)?;
    let mut ins = bundle_files(&paths);
    ins.extend(chain_paths);
    run_manifest(common, "faces", &cfg, &ins, &[out])
}

pub fn summarize(
    common: &Common,
    inputs: &Inputs,
    mode: Mode,
    k: Option<usize>,
    length: Option<usize>,
) -> Res<()> {
    let mut cfg = require_config(common, "summarize")?;
    if let Some(k) = k {
        cfg.keyframes.k = k;
    }
    if let Some(n) = length {
        cfg.video_frames = n;
    }
    cfg.validate()?;
    let (data, paths) = load_data(&cfg, inputs)?;
    let (chains, chain_paths) = load_chains(common, inputs)?;
    let mut outputs = Vec::new();
    match mode {
        Mode::Keyframes | Mode::Map => {
            let kf = select_keyframes(&data.frames, &chains, &cfg.keyframes)?;
            let p = common.out.join("keyframes.csv");
            write_keyframes(&p, &data.actor_names, &kf)?;
            outputs.push(p);
            if mode == Mode::Map {
                let m = map_summary(&kf, &chains, &cfg.map)?;
                let p = common.out.join("map.csv");
                write_map(&p, &data.actor_names, &m)?;
                outputs.push(p);
            }
        }
        Mode::Video => {
            let inf = inference(&cfg, &data)?;
            let v = summarize_video(
                &data,
                &chains,
                &inf.posteriors,
                &cfg.trellis,
                cfg.video_frames,
            )?;
            if v.empty {
                log::warn!("no frame satisfies the video constraints");
            }
            let p = common.out.join("video.csv");
            write_video(&p, &data, &v)?;
            outputs.push(p);
        }
    }
    let mut ins = bundle_files(&paths);
    ins.extend(chain_paths);
    run_manifest(common, "summarize", &cfg, &ins, &outputs)
}

pub fn sweep(common: &Common, stds: Option<Vec<f64>>, trials: Option<usize>) -> Res<()> {
    let mut cfg = load_config(common)?;
    if let Some(s) = stds {
        cfg.sweep_stds = s;
    }
    if let Some(t) = trials {
        cfg.sweep_trials = t;
    }
    if let Some(s) = common.seed {
        cfg.scenario.seed = s;
    }
    cfg.validate()?;
    let curve = sweep_location_std(
        &cfg.scenario,
        &cfg.sweep_stds,
        cfg.sweep_trials,
        &cfg.run_spec(),
        Execution::Parallel,
    )?;
    for p in &curve.points {
        log::info!(
            "std {} m: count error {:.3} +- {:.3} ({} failed)",
            p.place_std_m,
            p.mean,
            p.std,
            p.n_failed
        );
    }
    write_curve(&common.out, &curve)?;
    let mut m = common.out.clone().into_os_string();
    m.push(".manifest.json");
    let ins: Vec<PathBuf> = common.config.iter().cloned().collect();
    manifest(
        Path::new(&m),
        "sweep",
        &cfg,
        &ins,
        std::slice::from_ref(&common.out),
    )
}

#[derive(Serialize)]
struct FaceEval {
    n_scored: usize,
    errors_detected: usize,
    errors_corrected: usize,
}

#[derive(Serialize)]
struct EvalFile {
    report: EvalReport,
    faces: Option<FaceEval>,
}

pub fn eval(common: &Common, inputs: &Inputs, truth: Option<PathBuf>) -> Res<()> {
    let cfg = require_config(common, "eval")?;
    let (data, paths) = load_data(&cfg, inputs)?;
    let (chains, chain_paths) = load_chains(common, inputs)?;
    let truth_path = match truth {
        Some(t) => t,
        None => paths
            .actors
            .parent()
            .map(|d| d.join("truth.json"))
            .ok_or_else(|| usage("pass --truth"))?,
    };
    let t = read_truth(&truth_path)?;
    let report = evaluate(&chains, &t.instances, cfg.iou_threshold)?;
    let faces = if t.faces.is_empty() || data.faces.iter().all(|d| d.scores.is_none()) {
        None
    } else {
        let corrections = correct_faces(
            &data.faces,
            &all_configs(&chains),
            cfg.params.epsilon(data.n_actors()),
        )?;
        let truth_of = |obs: ActorId, time: f64| {
            t.faces
                .iter()
                .find(|f| f.observer == obs && f.t.to_bits() == time.to_bits())
                .map(|f| f.true_id)
        };
        let mut fe = FaceEval {
            n_scored: 0,
            errors_detected: 0,
            errors_corrected: 0,
        };
        for c in &corrections {
            let Some(id) = truth_of(c.observer, c.t) else {
                continue;
            };
            fe.n_scored += 1;
            fe.errors_detected += usize::from(c.detected != Some(id));
            fe.errors_corrected += usize::from(c.corrected != id);
        }
        Some(fe)
    };
    log::info!("count error {:.3}, F1 {:.3}", report.count_error, report.f1);
    let out = common.out.join("eval.json");
    write_eval(&out, &EvalFile { report, faces })?;
    let mut ins = bundle_files(&paths);
    ins.extend(chain_paths);
    ins.push(truth_path);
    run_manifest(common, "eval", &cfg, &ins, &[out])
}
