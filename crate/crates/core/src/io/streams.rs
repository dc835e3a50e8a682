use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::GpsFrame;
use super::table::{num, parse_f64, parse_u32, read_table, write_table, Table};
use crate::data::{DataBundle, FaceDetection, FrameMatch, FrameRecord};
use crate::error::{Error, Result};
use crate::gp::GpsObservation;
use crate::ids::ActorId;

/// Mean Earth radius.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Equirectangular projection about `origin = [lat, lon]` (degrees) to
/// metres east/north.
pub fn geo_to_local(origin: [f64; 2], lat: f64, lon: f64) -> [f64; 2] {
    let x = EARTH_RADIUS_M * (lon - origin[1]).to_radians() * origin[0].to_radians().cos();
    let y = EARTH_RADIUS_M * (lat - origin[0]).to_radians();
    [x, y]
}

/// Stream files of one dataset. Only the registry and GPS are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePaths {
    pub actors: PathBuf,
    pub gps: PathBuf,
    pub frames: Option<PathBuf>,
    pub faces: Option<PathBuf>,
    pub matches: Option<PathBuf>,
}

impl BundlePaths {
    /// `actors.csv`, `gps.csv` and whichever of `frames.csv`, `faces.csv`,
    /// `matches.csv` exist in `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            actors: dir.join("actors.csv"),
            gps: dir.join("gps.csv"),
            frames: opt("frames.csv"),
            faces: opt("faces.csv"),
            matches: opt("matches.csv"),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![self.actors.as_path(), self.gps.as_path()];
        v.extend(
            [&self.frames, &self.faces, &self.matches]
                .into_iter()
                .flatten()
                .map(|p| p.as_path()),
        );
        v
    }
}

struct Registry {
    names: Vec<String>,
    ids: HashMap<String, ActorId>,
}

impl Registry {
    fn get(&self, path: &Path, line: usize, name: &str) -> Result<ActorId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::data(path, line, format!("unknown actor '{name}'")))
    }
}

fn expect_header(path: &Path, t: &Table, want: &[&str]) -> Result<()> {
    if t.header.len() < want.len() || t.header.iter().zip(want).any(|(h, w)| h != w) {
        return Err(Error::data(
            path,
            2,
            format!("header must start with '{}'", want.join(",")),
        ));
    }
    Ok(())
}

fn read_registry(path: &Path) -> Result<Registry> {
    let t = read_table(path, "actors")?;
    expect_header(path, &t, &["id", "name"])?;
    let mut names = Vec::new();
    let mut ids = HashMap::new();
    for (line, r) in &t.rows {
        let id = parse_u32(path, *line, "id", &r[0])?;
        if id as usize != names.len() {
            return Err(Error::data(
                path,
                *line,
                format!("ids must be 0, 1, 2, ...; found {id}"),
            ));
        }
        let name = r.get(1).cloned().unwrap_or_default();
        if name.is_empty() || ids.insert(name.clone(), ActorId(id)).is_some() {
            return Err(Error::data(
                path,
                *line,
                format!("actor name '{name}' is empty or repeated"),
            ));
        }
        names.push(name);
    }
    if names.is_empty() {
        return Err(Error::data(path, 0, "the actor registry is empty"));
    }
    Ok(Registry { names, ids })
}

fn row_len(path: &Path, line: usize, r: &[String], n: usize) -> Result<()> {
    if r.len() != n {
        return Err(Error::data(
            path,
            line,
            format!("expected {n} fields, found {}", r.len()),
        ));
    }
    Ok(())
}

fn read_gps(
    path: &Path,
    reg: &Registry,
    frame: GpsFrame,
) -> Result<(Vec<GpsObservation>, Option<[f64; 2]>)> {
    let t = read_table(path, "gps")?;
    let (a, b) = match frame {
        GpsFrame::Planar => ("x", "y"),
        GpsFrame::Geographic => ("lat", "lon"),
    };
    expect_header(path, &t, &["actor", "t", a, b, "noise_std"])?;
    let mut raw = Vec::with_capacity(t.rows.len());
    for (line, r) in &t.rows {
        row_len(path, *line, r, 5)?;
        let noise_std = parse_f64(path, *line, "noise_std", &r[4])?;
        if !(noise_std > 0.0) {
            return Err(Error::data(path, *line, "noise_std must be > 0"));
        }
        raw.push(GpsObservation {
            actor: reg.get(path, *line, &r[0])?,
            t: parse_f64(path, *line, "t", &r[1])?,
            pos: [
                parse_f64(path, *line, a, &r[2])?,
                parse_f64(path, *line, b, &r[3])?,
            ],
            noise_std,
        });
    }
    if frame == GpsFrame::Planar {
        return Ok((raw, None));
    }
    if raw.is_empty() {
        return Ok((raw, None));
    }
    let n = raw.len() as f64;
    let origin = [
        raw.iter().map(|o| o.pos[0]).sum::<f64>() / n,
        raw.iter().map(|o| o.pos[1]).sum::<f64>() / n,
    ];
    for o in &mut raw {
        o.pos = geo_to_local(origin, o.pos[0], o.pos[1]);
    }
    Ok((raw, Some(origin)))
}

fn read_frames(path: &Path, reg: &Registry) -> Result<Vec<FrameRecord>> {
    let t = read_table(path, "frames")?;
    if t.header.is_empty() {
        return Ok(Vec::new());
    }
    expect_header(path, &t, &["actor", "t", "kp_count"])?;
    let dim = t.header.len() - 3;
    for (k, h) in t.header[3..].iter().enumerate() {
        if *h != format!("f{k}") {
            return Err(Error::data(
                path,
                2,
                format!("feature column {k} must be named 'f{k}'"),
            ));
        }
    }
    t.rows
        .iter()
        .map(|(line, r)| {
            row_len(path, *line, r, 3 + dim)?;
            Ok(FrameRecord {
                actor: reg.get(path, *line, &r[0])?,
                t: parse_f64(path, *line, "t", &r[1])?,
                kp_count: parse_u32(path, *line, "kp_count", &r[2])?,
                features: r[3..]
                    .iter()
                    .enumerate()
                    .map(|(k, v)| parse_f64(path, *line, &format!("f{k}"), v))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

fn read_faces(path: &Path, reg: &Registry) -> Result<Vec<FaceDetection>> {
    let t = read_table(path, "faces")?;
    if t.header.is_empty() {
        return Ok(Vec::new());
    }
    expect_header(path, &t, &["observer", "t", "detected_id"])?;
    let n_scores = t.header.len() - 3;
    if n_scores != 0 && n_scores != reg.names.len() {
        return Err(Error::data(
            path,
            2,
            format!(
                "{n_scores} score columns for {} registered actors",
                reg.names.len()
            ),
        ));
    }
    t.rows
        .iter()
        .map(|(line, r)| {
            row_len(path, *line, r, 3 + n_scores)?;
            let detected = if r[2].is_empty() {
                None
            } else {
                Some(reg.get(path, *line, &r[2])?)
            };
            let scores = if n_scores == 0 || r[3..].iter().all(|v| v.is_empty()) {
                None
            } else {
                Some(
                    r[3..]
                        .iter()
                        .enumerate()
                        .map(|(k, v)| parse_f64(path, *line, &format!("score_{k}"), v))
                        .collect::<Result<_>>()?,
                )
            };
            Ok(FaceDetection {
                observer: reg.get(path, *line, &r[0])?,
                t: parse_f64(path, *line, "t", &r[1])?,
                detected,
                scores,
            })
        })
        .collect()
}

fn read_matches(path: &Path, reg: &Registry) -> Result<Vec<FrameMatch>> {
    let t = read_table(path, "matches")?;
    if t.header.is_empty() {
        return Ok(Vec::new());
    }
    expect_header(path, &t, &["actor_i", "t_i", "actor_j", "t_j", "matches"])?;
    t.rows
        .iter()
        .map(|(line, r)| {
            row_len(path, *line, r, 5)?;
            Ok(FrameMatch {
                actor_i: reg.get(path, *line, &r[0])?,
                t_i: parse_f64(path, *line, "t_i", &r[1])?,
                actor_j: reg.get(path, *line, &r[2])?,
                t_j: parse_f64(path, *line, "t_j", &r[3])?,
                matches: parse_u32(path, *line, "matches", &r[4])?,
            })
        })
        .collect()
}

/// Load and validate a dataset; streams come back sorted by (actor, t).
pub fn load_bundle(paths: &BundlePaths, frame: GpsFrame) -> Result<DataBundle> {
    let reg = read_registry(&paths.actors)?;
    let (gps, origin) = read_gps(&paths.gps, &reg, frame)?;
    let frames = match &paths.frames {
        Some(p) => read_frames(p, &reg)?,
        None => Vec::new(),
    };
    let faces = match &paths.faces {
        Some(p) => read_faces(p, &reg)?,
        None => Vec::new(),
    };
    let matches = match &paths.matches {
        Some(p) => read_matches(p, &reg)?,
        None => Vec::new(),
    };
    let mut b = DataBundle {
        actor_names: reg.names,
        gps,
        frames,
        faces,
        matches,
        origin,
    };
    b.sort();
    b.time_support()
        .map_err(|_| Error::data(&paths.gps, 0, "GPS time support is empty"))?;
    b.validate()
        .map_err(|e| Error::data(&paths.gps, 0, e.to_string()))?;
    Ok(b)
}

/// Write the five stream files into `dir` (planar coordinates).
pub fn save_bundle(b: &DataBundle, dir: &Path) -> Result<BundlePaths> {
    let name = |a: ActorId| b.actor_names[a.index()].clone();
    let s = |v: &str| v.to_string();
    let paths = BundlePaths {
        actors: dir.join("actors.csv"),
        gps: dir.join("gps.csv"),
        frames: Some(dir.join("frames.csv")),
        faces: Some(dir.join("faces.csv")),
        matches: Some(dir.join("matches.csv")),
    };
    let rows: Vec<_> = b
        .actor_names
        .iter()
        .enumerate()
        .map(|(i, n)| vec![i.to_string(), n.clone()])
        .collect();
    write_table(&paths.actors, "actors", &[s("id"), s("name")], &rows)?;

    let rows: Vec<_> = b
        .gps
        .iter()
        .map(|o| {
            vec![
                name(o.actor),
                num(o.t),
                num(o.pos[0]),
                num(o.pos[1]),
                num(o.noise_std),
            ]
        })
        .collect();
    let header = ["actor", "t", "x", "y", "noise_std"].map(s);
    write_table(&paths.gps, "gps", &header, &rows)?;

    let dim = b.feature_dim().unwrap_or(0);
    let mut header = vec![s("actor"), s("t"), s("kp_count")];
    header.extend((0..dim).map(|k| format!("f{k}")));
    let rows: Vec<_> = b
        .frames
        .iter()
        .map(|f| {
            let mut r = vec![name(f.actor), num(f.t), f.kp_count.to_string()];
            r.extend(f.features.iter().map(|&v| num(v)));
            r
        })
        .collect();
    write_table(paths.frames.as_ref().unwrap(), "frames", &header, &rows)?;

    let scored = b.faces.iter().any(|d| d.scores.is_some());
    let mut header = vec![s("observer"), s("t"), s("detected_id")];
    if scored {
        header.extend((0..b.n_actors()).map(|k| format!("score_{k}")));
    }
    let rows: Vec<_> = b
        .faces
        .iter()
        .map(|d| {
            let mut r = vec![
                name(d.observer),
                num(d.t),
                d.detected.map(name).unwrap_or_default(),
            ];
            if scored {
                match &d.scores {
                    Some(sc) => r.extend(sc.iter().map(|&v| num(v))),
                    None => r.extend((0..b.n_actors()).map(|_| String::new())),
                }
            }
            r
        })
        .collect();
    write_table(paths.faces.as_ref().unwrap(), "faces", &header, &rows)?;

    let rows: Vec<_> = b
        .matches
        .iter()
        .map(|m| {
            vec![
                name(m.actor_i),
                num(m.t_i),
                name(m.actor_j),
                num(m.t_j),
                m.matches.to_string(),
            ]
        })
        .collect();
    let header = ["actor_i", "t_i", "actor_j", "t_j", "matches"].map(s);
    write_table(paths.matches.as_ref().unwrap(), "matches", &header, &rows)?;
    Ok(paths)
}
