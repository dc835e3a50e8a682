use std::fs;
use std::path::Path;

use coactivity::data::DataBundle;
use coactivity::io::{
    geo_to_local, load_bundle, read_chain, read_truth, save_bundle, write_chain, write_truth,
    BundlePaths, GpsFrame, Manifest, RunConfig, TruthFile, EARTH_RADIUS_M,
};
use coactivity::par::Execution;
use coactivity::rjmcmc::Inference;
use coactivity::sim::{generate, RunSpec, ScenarioConfig};
use coactivity::Error;

fn small_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_actors: 4,
        n_turns: 3,
        seed,
        ..ScenarioConfig::default()
    }
}

fn sorted(mut b: DataBundle) -> DataBundle {
    b.sort();
    b
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn data_line(e: Error) -> (String, usize, String) {
    match e {
        Error::Data { file, line, msg } => (
            file.file_name().unwrap().to_string_lossy().into_owned(),
            line,
            msg,
        ),
        other => panic!("expected a data error, got {other}"),
    }
}

#[test]
fn bundle_round_trip_is_exact_and_byte_identical() {
    for seed in 0..3 {
        let ds = generate(&small_scenario(seed)).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let paths = save_bundle(&ds.data, a.path()).unwrap();
        let loaded = load_bundle(&paths, GpsFrame::Planar).unwrap();
        assert_eq!(loaded, sorted(ds.data.clone()));
        save_bundle(&loaded, b.path()).unwrap();
        assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    }
}

#[test]
fn in_dir_finds_optional_streams() {
    let ds = generate(&small_scenario(1)).unwrap();
    let d = tempfile::tempdir().unwrap();
    save_bundle(&ds.data, d.path()).unwrap();
    fs::remove_file(d.path().join("matches.csv")).unwrap();
    let p = BundlePaths::in_dir(d.path());
    assert!(p.frames.is_some() && p.faces.is_some() && p.matches.is_none());
    let b = load_bundle(&p, GpsFrame::Planar).unwrap();
    assert!(b.matches.is_empty());
    assert_eq!(b.frames.len(), ds.data.frames.len());
}

fn minimal_dir(dir: &Path) -> BundlePaths {
    write(
        &dir.join("actors.csv"),
        "# coactivity actors v1\nid,name\n0,ann\n1,bob\n",
    );
    write(
        &dir.join("gps.csv"),
        "# coactivity gps v1\nactor,t,x,y,noise_std\nann,0,0,0,5\nann,60,10,0,5\nbob,0,100,0,5\nbob,60,90,0,5\n",
    );
    BundlePaths {
        actors: dir.join("actors.csv"),
        gps: dir.join("gps.csv"),
        frames: None,
        faces: None,
        matches: None,
    }
}

#[test]
fn empty_optional_streams_load() {
    let d = tempfile::tempdir().unwrap();
    let mut p = minimal_dir(d.path());
    for (f, slot) in [("frames.csv", 0), ("faces.csv", 1), ("matches.csv", 2)] {
        let path = d.path().join(f);
        write(&path, "");
        match slot {
            0 => p.frames = Some(path),
            1 => p.faces = Some(path),
            _ => p.matches = Some(path),
        }
    }
    let b = load_bundle(&p, GpsFrame::Planar).unwrap();
    assert_eq!(b.actor_names, vec!["ann", "bob"]);
    assert_eq!(b.gps.len(), 4);
    assert!(b.frames.is_empty() && b.faces.is_empty() && b.matches.is_empty());
}

#[test]
fn unknown_actor_names_file_and_line() {
    let d = tempfile::tempdir().unwrap();
    let p = minimal_dir(d.path());
    write(
        &p.gps,
        "# coactivity gps v1\nactor,t,x,y,noise_std\nann,0,0,0,5\ncarl,60,10,0,5\n",
    );
    let (file, line, msg) = data_line(load_bundle(&p, GpsFrame::Planar).unwrap_err());
    assert_eq!((file.as_str(), line), ("gps.csv", 4));
    assert!(msg.contains("carl"), "{msg}");
}

#[test]
fn malformed_inputs_are_data_errors() {
    let cases: [(&str, &str, usize); 4] = [
        (
            "gps.csv",
            "# coactivity frames v1\nactor,t,x,y,noise_std\n",
            1,
        ),
        (
            "gps.csv",
            "# coactivity gps v1\nactor,t,x,y,noise_std\nann,0,abc,0,5\n",
            3,
        ),
        (
            "gps.csv",
            "# coactivity gps v1\nactor,t,x,y,noise_std\nann,0,0,0,-1\n",
            3,
        ),
        (
            "actors.csv",
            "# coactivity actors v1\nid,name\n0,ann\n0,bob\n",
            4,
        ),
    ];
    for (f, text, want) in cases {
        let d = tempfile::tempdir().unwrap();
        let p = minimal_dir(d.path());
        write(&d.path().join(f), text);
        let (file, line, _) = data_line(load_bundle(&p, GpsFrame::Planar).unwrap_err());
        assert_eq!((file.as_str(), line), (f, want), "{text}");
    }
}

#[test]
fn faces_with_unrecognized_detections_and_scores() {
    let d = tempfile::tempdir().unwrap();
    let mut p = minimal_dir(d.path());
    let f = d.path().join("faces.csv");
    write(
        &f,
        "# coactivity faces v1\nobserver,t,detected_id,score_0,score_1\nann,10,bob,0.1,0.9\nbob,20,,,\n",
    );
    p.faces = Some(f);
    let b = load_bundle(&p, GpsFrame::Planar).unwrap();
    assert_eq!(b.faces[0].detected.map(|a| a.0), Some(1));
    assert_eq!(b.faces[0].scores.as_deref(), Some(&[0.1, 0.9][..]));
    assert_eq!(b.faces[1].detected, None);
    assert_eq!(b.faces[1].scores, None);
}

#[test]
fn geographic_input_is_projected_about_the_centroid() {
    let d = tempfile::tempdir().unwrap();
    let p = minimal_dir(d.path());
    write(
        &p.gps,
        "# coactivity gps v1\nactor,t,lat,lon,noise_std\nann,0,45.0,7.0,5\nann,60,45.001,7.0,5\nbob,0,45.0,7.002,5\nbob,60,45.001,7.002,5\n",
    );
    let b = load_bundle(&p, GpsFrame::Geographic).unwrap();
    let o = b.origin.unwrap();
    assert!((o[0] - 45.0005).abs() < 1e-12 && (o[1] - 7.001).abs() < 1e-12);
    let dy = b.gps[1].pos[1] - b.gps[0].pos[1];
    assert!((dy - EARTH_RADIUS_M * 0.001f64.to_radians()).abs() < 1e-6);
    let dx = b.gps[2].pos[0] - b.gps[0].pos[0];
    let want = EARTH_RADIUS_M * 0.002f64.to_radians() * 45.0005f64.to_radians().cos();
    assert!((dx - want).abs() < 1e-6);
    assert_eq!(geo_to_local(o, o[0], o[1]), [0.0, 0.0]);
    // Geographic columns under the planar setting are rejected.
    assert!(load_bundle(&p, GpsFrame::Planar).is_err());
}

#[test]
fn chain_round_trip_is_exact_and_byte_identical() {
    let sc = small_scenario(2);
    let ds = generate(&sc).unwrap();
    let data = ds.gps_only();
    let mut run = RunSpec::for_scenario(&sc);
    run.sampler.n_iters = 600;
    run.sampler.burn_in = 100;
    run.sampler.grid_points = 100;
    let inf = Inference::new(
        &data,
        &run.types,
        &run.overlap,
        &run.params,
        &run.hyper,
        run.sampler.clone(),
        Execution::Sequential,
    )
    .unwrap();
    let chain = inf.run(5).unwrap();
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a.jsonl"), d.path().join("b.jsonl"));
    write_chain(&a, &chain).unwrap();
    let back = read_chain(&a).unwrap();
    assert_eq!(back, chain);
    write_chain(&b, &back).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn bad_chain_line_is_reported() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("c.jsonl");
    write(&p, "{\"format\":\"other\",\"version\":1}\n");
    assert_eq!(data_line(read_chain(&p).unwrap_err()).1, 1);
}

#[test]
fn truth_and_manifest_round_trip() {
    let ds = generate(&small_scenario(0)).unwrap();
    let t = TruthFile::of(&ds);
    assert_eq!(t.faces.len(), ds.data.faces.len());
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("truth.json");
    write_truth(&p, &t).unwrap();
    assert_eq!(read_truth(&p).unwrap(), t);

    let mut m = Manifest::new("infer", "abc".into(), 7, vec![1, 2]);
    m.inputs
        .push(coactivity::io::FileDigest::of(&p, "truth.json").unwrap());
    let mp = d.path().join("manifest.json");
    m.write(&mp).unwrap();
    assert_eq!(Manifest::read(&mp).unwrap(), m);
    assert_eq!(m.inputs[0].sha256.len(), 64);
}

#[test]
fn config_defaults_and_strictness() {
    let c = RunConfig::from_json("{}").unwrap();
    assert_eq!(c, RunConfig::default());
    let spec = RunSpec::for_scenario(&ScenarioConfig::default());
    assert_eq!(c.run_spec(), spec);

    let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash().unwrap(), c.hash().unwrap());

    let partial = RunConfig::from_json(r#"{"seed": 9, "n_chains": 3}"#).unwrap();
    assert_eq!((partial.seed, partial.n_chains), (9, 3));
    assert_ne!(partial.hash().unwrap(), c.hash().unwrap());

    for bad in [
        r#"{"sed": 1}"#,
        r#"{"version": 2}"#,
        r#"{"n_chains": 0}"#,
        r#"{"sweep_trials": 1}"#,
        r#"{"types": []}"#,
    ] {
        assert!(
            matches!(RunConfig::from_json(bad), Err(Error::Config(_))),
            "{bad}"
        );
    }
}

#[test]
fn config_load_resolves_data_dir() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("run.json");
    write(&p, r#"{"data_dir": "streams"}"#);
    let c = RunConfig::load(&p).unwrap();
    assert_eq!(c.data_dir.unwrap(), d.path().join("streams"));
}

#[test]
fn nested_config_keys_overlay_the_defaults() {
    let c = RunConfig::from_json(r#"{"sampler": {"n_iters": 4000}, "scenario": {"n_actors": 3}}"#)
        .unwrap();
    let d = RunConfig::default();
    assert_eq!(c.sampler.n_iters, 4000);
    assert_eq!(c.sampler.weights, d.sampler.weights);
    assert_eq!(c.sampler.burn_in, d.sampler.burn_in);
    assert_eq!(c.scenario.n_actors, 3);
    assert_eq!(c.scenario.place_std_m, d.scenario.place_std_m);
    let e = RunConfig::from_json(r#"{"sampler": {"n_iter": 2000}}"#).unwrap_err();
    assert!(e.to_string().contains("sampler.n_iter"), "{e}");
}
