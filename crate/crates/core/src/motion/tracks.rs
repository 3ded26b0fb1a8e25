//! Mesh-track files: time-stamped global-frame vertex positions for named
//! skin regions plus a per-frame segment orientation (`R_B^G`).
//!
//! On disk a track set is a columnar CSV `<name>.tracks.csv` next to a JSON
//! manifest `<name>.tracks.json`. The manifest carries the format version,
//! sample rate and the region → triangle vertex-id table (winding order as
//! listed); the CSV carries `frame,t` columns, `<vid>_x,<vid>_y,<vid>_z`
//! per vertex, `qw,qx,qy,qz` per region (prefixed `<region>_` when more
//! than one region shares the file) and an optional trailing `conf` column.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{unit_quat_checked, MotionError};

/// Per-region track: the three triangles anchoring the region and the
/// per-frame data backing them.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTrack {
    /// Three triangles, each three vertex ids, counter-clockwise winding so
    /// the normal points outward from the body.
    pub triangles: [[u32; 3]; 3],
    /// Per-vertex position tracks, meters, global frame. Keyed by vertex id;
    /// each track has one sample per frame.
    pub positions: BTreeMap<u32, Vec<Vector3<f64>>>,
    /// Per-frame segment orientation, bone frame → global frame.
    pub orientation: Vec<UnitQuaternion<f64>>,
}

impl RegionTrack {
    /// The nine distinct vertex ids, in triangle-listing order.
    pub fn vertex_ids(&self) -> [u32; 9] {
        let mut ids = [0u32; 9];
        for (t, tri) in self.triangles.iter().enumerate() {
            for (v, &id) in tri.iter().enumerate() {
                ids[t * 3 + v] = id;
            }
        }
        ids
    }

    /// Vertices of triangle `tri` at `frame`.
    pub fn triangle_vertices(&self, tri: usize, frame: usize) -> [Vector3<f64>; 3] {
        let ids = self.triangles[tri];
        [
            self.positions[&ids[0]][frame],
            self.positions[&ids[1]][frame],
            self.positions[&ids[2]][frame],
        ]
    }
}

/// Named skin-region tracks sharing a common clock.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrackSet {
    pub sample_rate: f64,
    pub regions: BTreeMap<String, RegionTrack>,
    /// Per-frame confidence in [0,1]; absent means full confidence.
    pub confidence: Option<Vec<f64>>,
}

impl MotionTrackSet {
    pub fn frame_count(&self) -> usize {
        self.regions
            .values()
            .next()
            .map(|r| r.orientation.len())
            .unwrap_or(0)
    }

    pub fn region(&self, name: &str) -> Result<&RegionTrack, MotionError> {
        self.regions.get(name).ok_or_else(|| {
            MotionError::Invariant(format!(
                "unknown region `{name}` (available: {})",
                self.regions.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    /// Validates every type invariant, renormalizing near-unit quaternions in
    /// place. Errors name the offending region and frame.
    pub fn validate(&mut self) -> Result<(), MotionError> {
        if self.regions.is_empty() {
            return Err(MotionError::Invariant("track set has no regions".into()));
        }
        let frames = self.frame_count();
        if let Some(conf) = &self.confidence {
            if conf.len() != frames {
                return Err(MotionError::Invariant(format!(
                    "confidence length {} != frame count {frames}",
                    conf.len()
                )));
            }
            if let Some(c) = conf.iter().find(|c| !(0.0..=1.0).contains(*c)) {
                return Err(MotionError::Invariant(format!("confidence {c} outside [0,1]")));
            }
        }
        let regions: Vec<String> = self.regions.keys().cloned().collect();
        for name in regions {
            let region = self.regions.get_mut(&name).unwrap();
            let ids = region.vertex_ids();
            if BTreeSet::from(ids).len() != 9 {
                return Err(MotionError::Invariant(format!(
                    "region `{name}`: triangles must reference 9 distinct vertex ids, got {ids:?}"
                )));
            }
            if region.orientation.len() != frames {
                return Err(MotionError::Invariant(format!(
                    "region `{name}`: orientation length {} != frame count {frames}",
                    region.orientation.len()
                )));
            }
            for (&vid, track) in &region.positions {
                if track.len() != frames {
                    return Err(MotionError::Invariant(format!(
                        "region `{name}` vertex {vid}: {} samples != frame count {frames}",
                        track.len()
                    )));
                }
            }
            for &vid in &ids {
                if !region.positions.contains_key(&vid) {
                    return Err(MotionError::Invariant(format!(
                        "region `{name}`: no position track for vertex {vid}"
                    )));
                }
            }
            for frame in 0..frames {
                for tri in 0..3 {
                    let [v0, v1, v2] = region.triangle_vertices(tri, frame);
                    let area = 0.5 * (v1 - v0).cross(&(v2 - v0)).norm();
                    if area <= 1e-12 {
                        return Err(MotionError::Invariant(format!(
                            "region `{name}` triangle {tri} degenerate at frame {frame} (area {area:.3e} m²)"
                        )));
                    }
                }
                let q = region.orientation[frame].quaternion();
                // Re-check and renormalize; values straight from a file may
                // drift within the 1e-3 load tolerance.
                region.orientation[frame] =
                    unit_quat_checked(q.w, q.i, q.j, q.k, &format!("region `{name}` frame {frame}"))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    sample_rate: f64,
    regions: BTreeMap<String, ManifestRegion>,
}

#[derive(Serialize, Deserialize)]
struct ManifestRegion {
    triangles: [[u32; 3]; 3],
}

fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn quat_columns(region: &str, multi: bool) -> Vec<String> {
    let prefix = if multi { format!("{region}_") } else { String::new() };
    ["qw", "qx", "qy", "qz"].iter().map(|c| format!("{prefix}{c}")).collect()
}

/// All vertex ids across regions, ascending; the CSV column order.
fn sorted_vertex_ids(regions: &BTreeMap<String, RegionTrack>) -> Vec<u32> {
    let mut ids: BTreeSet<u32> = BTreeSet::new();
    for r in regions.values() {
        ids.extend(r.vertex_ids());
    }
    ids.into_iter().collect()
}

fn header_columns(set: &MotionTrackSet, with_conf: bool) -> Vec<String> {
    let mut cols = vec!["frame".to_string(), "t".to_string()];
    for vid in sorted_vertex_ids(&set.regions) {
        for axis in ["x", "y", "z"] {
            cols.push(format!("{vid}_{axis}"));
        }
    }
    let multi = set.regions.len() > 1;
    for region in set.regions.keys() {
        cols.extend(quat_columns(region, multi));
    }
    if with_conf {
        cols.push("conf".to_string());
    }
    cols
}

/// Writes `<name>.tracks.csv` plus its `<name>.tracks.json` manifest.
pub fn store_track_set(set: &MotionTrackSet, csv_path: impl AsRef<Path>) -> Result<(), MotionError> {
    let csv_path = csv_path.as_ref();
    let manifest = Manifest {
        version: 1,
        sample_rate: set.sample_rate,
        regions: set
            .regions
            .iter()
            .map(|(name, r)| (name.clone(), ManifestRegion { triangles: r.triangles }))
            .collect(),
    };
    std::fs::write(
        manifest_path(csv_path),
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail"),
    )?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    writeln!(out, "{}", header_columns(set, set.confidence.is_some()).join(","))?;
    let ids = sorted_vertex_ids(&set.regions);
    let frames = set.frame_count();
    let dt = 1.0 / set.sample_rate;
    for frame in 0..frames {
        let mut cells = vec![frame.to_string(), format!("{:.16e}", frame as f64 * dt)];
        for &vid in &ids {
            let p = set
                .regions
                .values()
                .find_map(|r| r.positions.get(&vid))
                .expect("vertex id came from the region table");
            let v = p[frame];
            cells.push(format!("{:.16e}", v.x));
            cells.push(format!("{:.16e}", v.y));
            cells.push(format!("{:.16e}", v.z));
        }
        for region in set.regions.values() {
            let q = region.orientation[frame].quaternion();
            for c in [q.w, q.i, q.j, q.k] {
                cells.push(format!("{c:.16e}"));
            }
        }
        if let Some(conf) = &set.confidence {
            cells.push(format!("{:.16e}", conf[frame]));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Reads a track set written by [`store_track_set`], validating every
/// invariant before returning.
pub fn load_track_set(csv_path: impl AsRef<Path>) -> Result<MotionTrackSet, MotionError> {
    let csv_path = csv_path.as_ref();
    let manifest_text = std::fs::read_to_string(manifest_path(csv_path)).map_err(|e| {
        MotionError::Format(format!(
            "missing manifest {}: {e}",
            manifest_path(csv_path).display()
        ))
    })?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_text).map_err(|e| MotionError::Format(e.to_string()))?;
    if manifest.version != 1 {
        return Err(MotionError::Format(format!(
            "unsupported track format version {}, expected 1",
            manifest.version
        )));
    }
    if !(manifest.sample_rate > 0.0) {
        return Err(MotionError::Invariant(format!(
            "sample_rate must be positive, got {}",
            manifest.sample_rate
        )));
    }

    let mut set = MotionTrackSet {
        sample_rate: manifest.sample_rate,
        regions: manifest
            .regions
            .iter()
            .map(|(name, r)| {
                (
                    name.clone(),
                    RegionTrack {
                        triangles: r.triangles,
                        positions: BTreeMap::new(),
                        orientation: Vec::new(),
                    },
                )
            })
            .collect(),
        confidence: None,
    };

    let reader = BufReader::new(std::fs::File::open(csv_path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| MotionError::Format("empty track CSV".into()))?;
    let header = header?;
    let expected_plain = header_columns(&set, false).join(",");
    let expected_conf = header_columns(&set, true).join(",");
    let has_conf = if header.trim() == expected_plain {
        false
    } else if header.trim() == expected_conf {
        true
    } else {
        return Err(MotionError::Format(format!(
            "track CSV header `{}` does not match manifest (expected `{expected_plain}`[,conf])",
            header.trim()
        )));
    };
    if has_conf {
        set.confidence = Some(Vec::new());
    }

    let ids = sorted_vertex_ids(&set.regions);
    let n_cols = 2 + ids.len() * 3 + set.regions.len() * 4 + usize::from(has_conf);
    let region_names: Vec<String> = set.regions.keys().cloned().collect();

    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_cols {
            return Err(MotionError::Format(format!(
                "truncated row at line {}: {} cells, expected {n_cols}",
                lineno + 1,
                cells.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, MotionError> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| MotionError::parse(lineno + 1, format!("non-numeric cell `{}`", s.trim())))
        };
        let mut cursor = 2; // skip frame index and timestamp
        for &vid in &ids {
            let v = Vector3::new(
                parse(cells[cursor])?,
                parse(cells[cursor + 1])?,
                parse(cells[cursor + 2])?,
            );
            cursor += 3;
            for region in set.regions.values_mut() {
                if region.vertex_ids().contains(&vid) {
                    region.positions.entry(vid).or_default().push(v);
                }
            }
        }
        for name in &region_names {
            let w = parse(cells[cursor])?;
            let x = parse(cells[cursor + 1])?;
            let y = parse(cells[cursor + 2])?;
            let z = parse(cells[cursor + 3])?;
            cursor += 4;
            let frame = set.regions[name].orientation.len();
            let q = unit_quat_checked(w, x, y, z, &format!("region `{name}` frame {frame}"))?;
            set.regions.get_mut(name).unwrap().orientation.push(q);
        }
        if has_conf {
            set.confidence.as_mut().unwrap().push(parse(cells[cursor])?);
        }
    }

    set.validate()?;
    Ok(set)
}
